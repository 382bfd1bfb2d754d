//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Integrand values may be vector valued; `N` components are integrated together
/// and the error estimate is the max over components.
fn gk15<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> ([f64; N], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    for k in 0..N {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for k in 0..N {
            let s = f1[k] + f2[k];
            kron[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut err = 0.0_f64;
    for k in 0..N {
        kron[k] *= h;
        gauss[k] *= h;
        err = err.max((kron[k] - gauss[k]).abs());
    }
    (kron, err)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// The interval is first cut into `panels` equal pieces (useful for oscillatory
/// integrands), then refined by bisection of the worst piece until the summed
/// error estimate is below `tol`. Fails if `max_evals` is exhausted.
pub fn integrate<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: F,
    a: f64,
    b: f64,
    panels: usize,
    tol: f64,
    max_evals: usize,
) -> Result<[f64; N]> {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut pieces: Vec<(f64, f64, [f64; N], f64)> = (0..panels)
        .map(|i| {
            let lo = a + i as f64 * width;
            let hi = if i + 1 == panels { b } else { lo + width };
            let (v, e) = gk15(&f, lo, hi);
            (lo, hi, v, e)
        })
        .collect();
    let mut evals = 15 * panels;
    loop {
        let total_err: f64 = pieces.iter().map(|p| p.3).sum();
        if total_err <= tol {
            break;
        }
        if evals >= max_evals {
            return Err(Error::QuadratureFailed {
                error: total_err,
                evaluations: evals,
            });
        }
        // bisect every piece whose error exceeds its fair share
        let share = tol / pieces.len() as f64;
        let mut next = Vec::with_capacity(pieces.len() * 2);
        for (lo, hi, v, e) in pieces {
            if e > share {
                let mid = 0.5 * (lo + hi);
                let (v1, e1) = gk15(&f, lo, mid);
                let (v2, e2) = gk15(&f, mid, hi);
                evals += 30;
                next.push((lo, mid, v1, e1));
                next.push((mid, hi, v2, e2));
            } else {
                next.push((lo, hi, v, e));
            }
        }
        pieces = next;
    }
    let mut out = [0.0; N];
    for p in &pieces {
        for k in 0..N {
            out[k] += p.2[k];
        }
    }
    Ok(out)
}
