//! RK4 propagation of `dρ/dt = L(t) ρ` over a precomputed generator series.
//!
//! Steps are taken in the frame rotating with the diagonal `L0`, so the free
//! evolution is exact and RK4 only sees `L - L0`. The generator is only known
//! on the grid, so RK4 midpoints use four-point Lagrange interpolation; linear
//! interpolation would cap the scheme at second order.

use nalgebra::{Matrix2, Vector4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::bath::Cutoff;
use crate::error::{Error, Result};
use crate::generators::{GeneratorSeries, SuperMatrix};

/// Eigenvalues below this count as positivity violations.
pub const POSITIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub Matrix2<C64>);

impl DensityMatrix {
    pub fn new(m: Matrix2<C64>) -> Result<Self> {
        let d = DensityMatrix(m);
        if (d.trace() - 1.0).norm() > 1e-12 {
            return Err(Error::Domain(format!("trace {} != 1", d.trace())));
        }
        if (m - m.adjoint()).norm() > 1e-12 {
            return Err(Error::Domain("density matrix is not Hermitian".into()));
        }
        Ok(d)
    }

    pub fn trace(&self) -> C64 {
        self.0[(0, 0)] + self.0[(1, 1)]
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let (mean, radius) = hermitian_spectrum(&self.0);
        mean - radius
    }

    pub fn populations(&self) -> (f64, f64) {
        (self.0[(0, 0)].re, self.0[(1, 1)].re)
    }

    pub fn coherence(&self) -> C64 {
        self.0[(0, 1)]
    }

    fn to_vec(self) -> Vector4<C64> {
        Vector4::new(self.0[(0, 0)], self.0[(0, 1)], self.0[(1, 0)], self.0[(1, 1)])
    }

    fn from_vec(v: &Vector4<C64>) -> Self {
        DensityMatrix(Matrix2::new(v[0], v[1], v[2], v[3]))
    }
}

/// `(mean, half-gap)` of the Hermitian part of a 2×2 matrix.
fn hermitian_spectrum(m: &Matrix2<C64>) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
    (0.5 * (a + d), (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt())
}

/// `½ tr|ρ - σ|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let (mean, radius) = hermitian_spectrum(&(a.0 - b.0));
    0.5 * ((mean + radius).abs() + (mean - radius).abs())
}

pub fn initial_state(theta: f64) -> Result<DensityMatrix> {
    if !(0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&theta) {
        return Err(Error::InvalidParameter {
            name: "theta",
            reason: format!("must lie in [0, pi/2], got {theta}"),
        });
    }
    let (s, c) = theta.sin_cos();
    let r = |x: f64| C64::new(0.5 * x, 0.0);
    Ok(DensityMatrix(Matrix2::new(r(1.0 + s), r(-c), r(-c), r(1.0 - s))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub theta: f64,
    pub order: u8,
    pub dt: f64,
    pub n: usize,
    pub temperature: Option<f64>,
    pub cutoff: Option<Cutoff>,
    pub coupling: Option<f64>,
    pub solver: String,
    /// Time and value of the first eigenvalue below `-POSITIVITY_TOL`.
    pub first_negative: Option<(f64, f64)>,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub n: usize,
    pub states: Vec<DensityMatrix>,
    pub min_eigenvalue_track: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |j| j as f64 * self.dt)
    }

    /// CSV `t,rho11_re,rho22_re,rho12_re,rho12_im,min_eig`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,rho11_re,rho22_re,rho12_re,rho12_im,min_eig")?;
        for (j, (s, e)) in self.states.iter().zip(&self.min_eigenvalue_track).enumerate() {
            let c = s.coherence();
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                j as f64 * self.dt,
                s.0[(0, 0)].re,
                s.0[(1, 1)].re,
                c.re,
                c.im,
                e
            )?;
        }
        Ok(())
    }

    pub fn write_meta<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.meta).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Generator at `t_j + dt/2` from the four nearest grid values.
fn midpoint(total: &[SuperMatrix], j: usize) -> SuperMatrix {
    let n = total.len() - 1;
    let w = |c: [f64; 4], k: usize| -> SuperMatrix {
        (0..4).fold(SuperMatrix::zeros(), |acc, i| acc + total[k + i] * C64::new(c[i] / 16.0, 0.0))
    };
    if n < 3 {
        return (total[j] + total[j + 1]) * C64::new(0.5, 0.0);
    }
    if j == 0 {
        w([5.0, 15.0, -5.0, 1.0], 0)
    } else if j + 2 > n {
        w([1.0, -5.0, 15.0, 5.0], n - 3)
    } else {
        w([-1.0, 9.0, 9.0, -1.0], j - 1)
    }
}

pub fn propagate(series: &GeneratorSeries, rho0: &DensityMatrix) -> Result<Trajectory> {
    let rho0 = DensityMatrix::new(rho0.0)?;
    let h = series.dt;
    let hc = C64::new(h, 0.0);
    let mut states = Vec::with_capacity(series.n + 1);
    let mut track = Vec::with_capacity(series.n + 1);
    let mut first_negative = None;
    let mut record = |x: &Vector4<C64>, j: usize, states: &mut Vec<DensityMatrix>| {
        let s = DensityMatrix::from_vec(x);
        let e = s.min_eigenvalue();
        if first_negative.is_none() && e < -POSITIVITY_TOL {
            first_negative = Some((j as f64 * h, e));
        }
        states.push(s);
        track.push(e);
    };
    let free: Vec<C64> = (0..4).map(|k| series.l0[(k, k)]).collect();
    let rot = |t: f64, v: &Vector4<C64>, sign: f64| Vector4::from_fn(|k, _| v[k] * (free[k] * (sign * t)).exp());
    let l0 = series.l0;
    let rest: Vec<SuperMatrix> = series.total.iter().map(|m| m - l0).collect();
    let f = |t: f64, l: &SuperMatrix, y: &Vector4<C64>| rot(t, &(l * rot(t, y, 1.0)), -1.0);
    let mut y = rho0.to_vec();
    record(&y, 0, &mut states);
    for j in 0..series.n {
        let t = j as f64 * h;
        let lm = midpoint(&rest, j);
        let k1 = f(t, &rest[j], &y);
        let k2 = f(t + 0.5 * h, &lm, &(y + k1 * (hc * 0.5)));
        let k3 = f(t + 0.5 * h, &lm, &(y + k2 * (hc * 0.5)));
        let k4 = f(t + h, &rest[j + 1], &(y + k3 * hc));
        y += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * (hc / 6.0);
        let x = rot(t + h, &y, 1.0);
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(j + 1));
        }
        record(&x, j + 1, &mut states);
    }
    let min_eigenvalue = track.iter().copied().fold(f64::INFINITY, f64::min);
    let meta = TrajectoryMeta {
        theta: series.system.theta,
        order: series.order,
        dt: h,
        n: series.n,
        temperature: None,
        cutoff: None,
        coupling: None,
        solver: "rk4, cubic midpoint interpolation".into(),
        first_negative,
        min_eigenvalue,
    };
    Ok(Trajectory {
        dt: h,
        n: series.n,
        states,
        min_eigenvalue_track: track,
        meta,
    })
}

/// Max trace distance, on the coarse grid, between propagation with every
/// second generator sample and with the full series.
pub fn halve_step_check(series: &GeneratorSeries, rho0: &DensityMatrix) -> Result<f64> {
    let fine = propagate(series, rho0)?;
    let coarse = propagate(&series.subsample(2), rho0)?;
    Ok(coarse
        .states
        .iter()
        .enumerate()
        .map(|(j, s)| trace_distance(s, &fine.states[2 * j]))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{build_tables, SpectralDensity};
    use crate::generators::{generator_series, SystemModel};
    use std::f64::consts::FRAC_PI_2;

    fn series(theta: f64, order: u8, dt: f64, n: usize) -> GeneratorSeries {
        let sd = SpectralDensity::ohmic(Cutoff::Exponential, 0.1, 5.0, 1.0).unwrap();
        let gt = build_tables(&sd, dt, n, &[-1.0, 0.0, 1.0], Some(1 << 14)).unwrap();
        generator_series(&SystemModel::new(theta).unwrap(), &gt, order).unwrap()
    }

    #[test]
    fn initial_states() {
        let p = initial_state(FRAC_PI_2).unwrap();
        assert!((p.0 - Matrix2::new(1.0, 0.0, 0.0, 0.0).map(|x| C64::new(x, 0.0))).norm() < 1e-15);
        let z = initial_state(0.0).unwrap();
        assert_eq!(z.0[(0, 1)], C64::new(-0.5, 0.0));
        for th in [0.1, 0.7, 1.2] {
            let r = initial_state(th).unwrap();
            assert!((r.trace() - 1.0).norm() < 1e-15);
            assert!((r.0.determinant()).norm() < 1e-15);
            assert!(r.min_eigenvalue().abs() < 1e-15);
        }
        assert!(initial_state(-1.0).is_err());
    }

    #[test]
    fn trace_distance_basics() {
        let a = initial_state(0.0).unwrap();
        let b = initial_state(FRAC_PI_2).unwrap();
        assert_eq!(trace_distance(&a, &a), 0.0);
        // pure states: sqrt(1 - |<a|b>|^2) = sqrt(1/2)
        assert!((trace_distance(&a, &b) - 0.5_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn order_zero_is_a_phase_rotation() {
        let s = series(0.6, 0, 0.01, 500);
        let r0 = initial_state(0.6).unwrap();
        let tr = propagate(&s, &r0).unwrap();
        for (j, st) in tr.states.iter().enumerate() {
            let t = j as f64 * 0.01;
            let expect = r0.coherence() * C64::from_polar(1.0, -t);
            assert!((st.coherence() - expect).norm() < 1e-12);
            assert!((st.0[(0, 0)] - r0.0[(0, 0)]).norm() < 1e-13);
        }
        assert!(halve_step_check(&s, &r0).unwrap() < 1e-12);
    }

    #[test]
    fn constant_generator_matches_exponential() {
        let mut s = series(0.6, 2, 0.01, 300);
        let l = s.total[300];
        s.total.iter_mut().for_each(|m| *m = l);
        let r0 = initial_state(0.6).unwrap();
        let tr = propagate(&s, &r0).unwrap();
        let exact = DensityMatrix::from_vec(&((l * C64::new(3.0, 0.0)).exp() * r0.to_vec()));
        assert!(trace_distance(&exact, &tr.states[300]) < 1e-10);
    }

    #[test]
    fn trace_and_hermiticity_conserved() {
        let s = series(0.4, 4, 0.02, 400);
        let tr = propagate(&s, &initial_state(0.4).unwrap()).unwrap();
        for st in &tr.states {
            assert!((st.trace() - 1.0).norm() < 1e-10);
            assert!((st.0 - st.0.adjoint()).norm() < 1e-10);
        }
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 402);
    }

    #[test]
    fn halving_is_fourth_order() {
        let fine = series(0.3, 2, 0.0025, 2000);
        let r0 = initial_state(0.3).unwrap();
        let e1 = halve_step_check(&fine.subsample(2), &r0).unwrap();
        let e2 = halve_step_check(&fine, &r0).unwrap();
        let ratio = e1 / e2;
        assert!((8.0..24.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn nan_aborts_with_step() {
        let mut s = series(0.3, 2, 0.01, 20);
        s.total[7][(0, 0)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(propagate(&s, &initial_state(0.3).unwrap()), Err(Error::NonFinite(_))));
    }
}
