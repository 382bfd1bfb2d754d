//! Fourth-order bath functions.
//!
//! Contracting the four-point bath function by Wick's theorem leaves two
//! time-ordered pairings that survive the TCL cumulant subtraction. With
//! `0 < u1 < u2 < u3 < t` counted backwards from `t` and the coupling split
//! into Bohr components `A(-u) = Σ_w A_w e^{-i w u}`:
//!
//! ```text
//! I_A^{x,y}(a,b,g;t) = ∫ c_x(u2) c_y(u3 - u1) e^{-i(a u1 + b u2 + g u3)}
//! I_B^{x,y}(a,b,g;t) = ∫ c_x(u3) c_y(u2 - u1) e^{-i(a u1 + b u2 + g u3)}
//! ```
//!
//! where `c_C = C` and `c_{C*} = conj C`. Only `x = C` is tabulated, since
//! `I^{C*,y}(a,b,g) = conj I^{C,ȳ}(-a,-b,-g)`. Integrating out one variable
//! against `Γ` leaves
//!
//! ```text
//! I_A = -∫_0^t Γ_{-b}(u) e^{-i(a+g)u} G(t-u) du + ∫_0^t Γ_{-b}(u) e^{-i(a+g)u} G_y(a;u) du
//! I_B = Γ_{-g}(t) D(t) - ∫_0^t Γ_{-g}(s) e^{-i(a+b)s} G_y(a;s) ds,   D(t) = ∫_0^t e^{-i(a+b)r} G_y(a;r) dr
//! ```
//!
//! with `G_C(w) = Γ_w`, `G_{C*}(w) = conj Γ_{-w}` and `G = G_y(-g)`. The first
//! `I_A` term is the convolution; everything else is a running integral. No
//! frequency denominators appear, so resonant triples need no special care.
//!
//! In the `F`, `C`, `R` parametrisation, `F` and `C` are `I_A^{C,C}` and
//! `I_A^{C,C*}`, and `R` is `I_B^{C,C}` evaluated by its closed form.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::bath::GammaTable;
use crate::error::{Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Frequencies closer to resonance than this use the derivative limit in `R`.
pub const EPS_RES: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    A,
    B,
}

/// Triple index over Bohr indices `a, b, g ∈ {0, 1, 2}`.
#[inline]
pub(crate) fn triple(a: usize, b: usize, g: usize) -> usize {
    9 * a + 3 * b + g
}

#[inline]
fn neg(w: usize) -> usize {
    2 - w
}

/// All pairing integrals at one grid time, indexed `[x][y][triple]` with
/// `0 = C`, `1 = C*`.
#[derive(Debug, Clone, PartialEq)]
pub struct BathFunctions {
    pub a: [[[C64; 27]; 2]; 2],
    pub b: [[[C64; 27]; 2]; 2],
}

fn cumtrapz(dt: f64, f: impl Fn(usize) -> C64, n: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(ZERO);
    let mut acc = ZERO;
    let mut prev = f(0);
    for k in 1..=n {
        let cur = f(k);
        acc += (prev + cur) * (0.5 * dt);
        out.push(acc);
        prev = cur;
    }
    out
}

/// Running integrals for the 27 Bohr triples of a symmetric frequency set
/// `[-w, 0, w]`.
#[derive(Debug, Clone)]
pub struct Tcl4Kernels {
    dt: f64,
    n: usize,
    /// `G_y(w; t_k)` indexed `[y][w]`.
    gy: [[Vec<C64>; 3]; 2],
    /// `Γ_{-b}(u) e^{-i(a+g)u}` per triple.
    hp: Vec<Vec<C64>>,
    /// Second `I_A` term per `[y][triple]`.
    sa: [Vec<Vec<C64>>; 2],
    /// `I_B^{C,y}` per `[y][triple]`.
    ib: [Vec<Vec<C64>>; 2],
}

impl Tcl4Kernels {
    pub fn new(gt: &GammaTable, bohr: &[f64; 3]) -> Result<Self> {
        if bohr[1] != 0.0 || (bohr[0] + bohr[2]).abs() > 1e-12 || bohr[2] <= 0.0 {
            return Err(Error::Domain("Bohr set must be [-w, 0, w] with w > 0".into()));
        }
        let (dt, n) = (gt.dt, gt.n);
        let mut gy: [[Vec<C64>; 3]; 2] = Default::default();
        for w in 0..3 {
            gy[0][w] = gt.series(bohr[w])?.to_vec();
            gy[1][w] = gt.series(bohr[neg(w)])?.iter().map(|z| z.conj()).collect();
        }
        let phase = |freq: f64, k: usize| C64::from_polar(1.0, -freq * k as f64 * dt);
        let hp: Vec<Vec<C64>> = (0..27)
            .into_par_iter()
            .map(|tr| {
                let (a, b, g) = (tr / 9, (tr / 3) % 3, tr % 3);
                let s = bohr[a] + bohr[g];
                (0..=n).map(|k| gy[0][neg(b)][k] * phase(s, k)).collect()
            })
            .collect();
        let build = |y: usize| -> (Vec<Vec<C64>>, Vec<Vec<C64>>) {
            (0..27)
                .into_par_iter()
                .map(|tr| {
                    let (a, b, g) = (tr / 9, (tr / 3) % 3, tr % 3);
                    let ga = &gy[y][a];
                    let sa = cumtrapz(dt, |k| hp[tr][k] * ga[k], n);
                    let sab = bohr[a] + bohr[b];
                    let d = cumtrapz(dt, |k| phase(sab, k) * ga[k], n);
                    let gg = &gy[0][neg(g)];
                    let q = cumtrapz(dt, |k| gg[k] * phase(sab, k) * ga[k], n);
                    let ib = (0..=n).map(|k| gg[k] * d[k] - q[k]).collect();
                    (sa, ib)
                })
                .unzip()
        };
        let (sa0, ib0) = build(0);
        let (sa1, ib1) = build(1);
        Ok(Tcl4Kernels {
            dt,
            n,
            gy,
            hp,
            sa: [sa0, sa1],
            ib: [ib0, ib1],
        })
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `dt Σ_{k=1}^{j-1} Γ_{-b}(t_k) e^{-i(a+g)t_k} G_y(-g; t_j - t_k)`; the
    /// endpoint samples vanish because `Γ(0) = 0`.
    fn convolution(&self, y: usize, tr: usize, j: usize) -> C64 {
        let g = tr % 3;
        let h = &self.hp[tr];
        let gg = &self.gy[y][neg(g)];
        let mut acc = ZERO;
        for k in 1..j {
            acc += h[k] * gg[j - k];
        }
        acc * self.dt
    }

    pub fn families_at(&self, j: usize) -> BathFunctions {
        let mut out = BathFunctions {
            a: [[[ZERO; 27]; 2]; 2],
            b: [[[ZERO; 27]; 2]; 2],
        };
        for y in 0..2 {
            for tr in 0..27 {
                out.a[0][y][tr] = self.sa[y][tr][j] - self.convolution(y, tr, j);
                out.b[0][y][tr] = self.ib[y][tr][j];
            }
        }
        for y in 0..2 {
            for a in 0..3 {
                for b in 0..3 {
                    for g in 0..3 {
                        let tr = triple(a, b, g);
                        let mirror = triple(neg(a), neg(b), neg(g));
                        out.a[1][y][tr] = out.a[0][1 - y][mirror].conj();
                        out.b[1][y][tr] = out.b[0][1 - y][mirror].conj();
                    }
                }
            }
        }
        out
    }
}

/// `F`, `C` and `R` bath functions at one grid time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fcr {
    pub f: C64,
    pub c: C64,
    pub r: C64,
}

/// Bath functions for the frequency triple `(w1, w2, w3)`, with `Σ = w1 + w2 + w3`:
///
/// ```text
/// F = -∫_0^t Γ_{w1}(u) Γ_{w2}(t-u) e^{-iΣu} du + ∫_0^t Γ_{w1}(u) Γ_{Σ+w2}(u) e^{-iΣu} du
/// C = -∫_0^t Γ_{w1}(u) Γ*_{w2}(t-u) e^{-iΣu} du + ∫_0^t Γ_{w1}(u) Γ*_{w2-Σ}(u) e^{-iΣu} du
/// R = -∫_0^t ΔΓ_{w1}(t,τ) ΔΓ_{w2}(t,τ) e^{-iΣτ} dτ + i Γ_{w2}(t) [Γ_{-w2-w3}(t) - Γ_{w1}(t)] / Σ
/// ```
///
/// Every frequency referenced must be in the table. For `|Σ| < EPS_RES` the
/// quotient in `R` becomes `-i Γ_{w2}(t) ∂_w Γ_w(t)` at `w = w1`.
pub fn bath_fcr(gt: &GammaTable, w1: f64, w2: f64, w3: f64, t: f64) -> Result<Fcr> {
    let j = gt.grid_index(t)?;
    let s = w1 + w2 + w3;
    let dt = gt.dt;
    let g1 = gt.series(w1)?;
    let g2 = gt.series(w2)?;
    let gf = gt.series(s + w2)?;
    let gc = gt.series(w2 - s)?;
    let ph = |k: usize| C64::from_polar(1.0, -s * k as f64 * dt);
    let resonant = s.abs() < EPS_RES;
    let quotient = if resonant {
        -gt.dgamma_at(w1, j)?
    } else {
        (gt.gamma_at(-w2 - w3, j)? - g1[j]) / s
    };
    if j == 0 {
        return Ok(Fcr { f: ZERO, c: ZERO, r: ZERO });
    }
    let trap = |f: &dyn Fn(usize) -> C64| {
        let mut acc = (f(0) + f(j)) * 0.5;
        for k in 1..j {
            acc += f(k);
        }
        acc * dt
    };
    let f = -trap(&|k| g1[k] * g2[j - k] * ph(k)) + trap(&|k| g1[k] * gf[k] * ph(k));
    let c = -trap(&|k| g1[k] * g2[j - k].conj() * ph(k)) + trap(&|k| g1[k] * gc[k].conj() * ph(k));
    let r = -trap(&|k| (g1[j] - g1[k]) * (g2[j] - g2[k]) * ph(k)) + C64::i() * g2[j] * quotient;
    Ok(Fcr { f, c, r })
}
