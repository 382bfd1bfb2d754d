//! Exact small-bath dynamics and the analytic limits used to validate the
//! perturbative generators.

mod bloch;
mod dephasing;

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::Mode;
use crate::error::{Error, Result};
use crate::generators::{Order, SuperMatrix, Superoperator, SystemModel};
use crate::propagation::{trace_distance, DensityMatrix, Trajectory, TrajectoryMeta};

pub use bloch::{bloch_basis, bloch_redfield_bloch_basis, relaxation_eigenvalues, stationary_gammas, BlochGenerator, RelaxationRoots};
pub use dephasing::pure_dephasing_coherence;

pub const DEFAULT_DIM_CAP: usize = 16384;

/// Gibbs weights below this fraction of the ground weight are dropped.
const GIBBS_FLOOR: f64 = 1e-12;

/// Finite set of harmonic modes, each truncated at `fock_cut` quanta
/// (occupations `0..=fock_cut`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteBathSpec {
    pub modes: Vec<Mode>,
    pub fock_cut: usize,
    pub temperature: f64,
    pub dim_cap: usize,
    /// When set, the exact trajectory is recomputed with one more level per
    /// mode and rejected if it moves by more than this trace distance.
    pub truncation_tol: Option<f64>,
}

impl DiscreteBathSpec {
    pub fn new(modes: Vec<Mode>, fock_cut: usize, temperature: f64) -> Result<Self> {
        let spec = DiscreteBathSpec {
            modes,
            fock_cut,
            temperature,
            dim_cap: DEFAULT_DIM_CAP,
            truncation_tol: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.iter().any(|m| !(m.omega > 0.0) || !m.g.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: "mode frequencies must be positive and couplings finite".into(),
            });
        }
        if self.fock_cut < 2 {
            return Err(Error::InvalidParameter {
                name: "fock_cut",
                reason: format!("must be >= 2, got {}", self.fock_cut),
            });
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "temperature",
                reason: format!("must be >= 0, got {}", self.temperature),
            });
        }
        match self.dimension() {
            Some(d) if d <= self.dim_cap => Ok(()),
            _ => Err(Error::InvalidParameter {
                name: "fock_cut",
                reason: format!("Hilbert dimension exceeds the cap {}", self.dim_cap),
            }),
        }
    }

    pub fn dimension(&self) -> Option<usize> {
        let mut d: usize = 2;
        for _ in &self.modes {
            d = d.checked_mul(self.fock_cut + 1)?;
        }
        Some(d)
    }

    /// Couplings scaled as `g -> sqrt(s) g`, i.e. `J -> s J`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.g *= s.sqrt();
        }
        out
    }

    fn bath_dim(&self) -> usize {
        self.dimension().unwrap() / 2
    }

    fn occupations(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        let l = self.fock_cut + 1;
        (0..self.modes.len()).map(move |k| (b / l.pow(k as u32)) % l)
    }
}

/// Exact evolution of `H = H_S + H_B + A' ⊗ Σ g (b + b†)` from the product
/// states `|i><j| ⊗ ρ_B`, via one eigendecomposition of the real symmetric `H`.
pub struct ExactDynamics {
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
    /// Eigen-coefficients of `|i, b>` for each kept bath state, columns
    /// ordered `(i, kept index)`.
    coeffs: DMatrix<f64>,
    weights: Vec<f64>,
    bath_dim: usize,
}

impl ExactDynamics {
    pub fn new(sys: &SystemModel, spec: &DiscreteBathSpec) -> Result<Self> {
        spec.validate()?;
        let nb = spec.bath_dim();
        let dim = 2 * nb;
        let l = spec.fock_cut + 1;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for b in 0..nb {
            let occ: Vec<usize> = spec.occupations(b).collect();
            let eb: f64 = occ.iter().zip(&spec.modes).map(|(&n, m)| n as f64 * m.omega).sum();
            for s in 0..2 {
                h[(s * nb + b, s * nb + b)] += sys.energies[s] + eb;
            }
            for (k, m) in spec.modes.iter().enumerate() {
                if occ[k] + 1 < l {
                    let up = b + l.pow(k as u32);
                    let x = m.g * ((occ[k] + 1) as f64).sqrt();
                    for s in 0..2 {
                        for s2 in 0..2 {
                            let a = sys.coupling[(s, s2)];
                            h[(s * nb + up, s2 * nb + b)] += a * x;
                            h[(s2 * nb + b, s * nb + up)] += a * x;
                        }
                    }
                }
            }
        }
        let raw: Vec<f64> = (0..nb)
            .map(|b| {
                if spec.temperature == 0.0 {
                    if b == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let e: f64 = spec.occupations(b).zip(&spec.modes).map(|(n, m)| n as f64 * m.omega).sum();
                    (-e / spec.temperature).exp()
                }
            })
            .collect();
        let z: f64 = raw.iter().sum();
        let kept: Vec<usize> = (0..nb).filter(|&b| raw[b] > GIBBS_FLOOR).collect();
        let weights: Vec<f64> = kept.iter().map(|&b| raw[b] / z).collect();
        let eig = SymmetricEigen::new(h);
        let k = kept.len();
        let mut coeffs = DMatrix::<f64>::zeros(dim, 2 * k);
        for i in 0..2 {
            for (c, &b) in kept.iter().enumerate() {
                let row = i * nb + b;
                for a in 0..dim {
                    coeffs[(a, i * k + c)] = eig.eigenvectors[(row, a)];
                }
            }
        }
        Ok(ExactDynamics {
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
            coeffs,
            weights,
            bath_dim: nb,
        })
    }

    /// Reduced propagator `P(t)` and its exact time derivative.
    pub fn propagator(&self, t: f64) -> (SuperMatrix, SuperMatrix) {
        let dim = self.energies.len();
        let cols = self.coeffs.ncols();
        let k = cols / 2;
        let (mut yr, mut yi) = (DMatrix::<f64>::zeros(dim, cols), DMatrix::<f64>::zeros(dim, cols));
        let (mut dr, mut di) = (DMatrix::<f64>::zeros(dim, cols), DMatrix::<f64>::zeros(dim, cols));
        for a in 0..dim {
            let (s, c) = (-self.energies[a] * t).sin_cos();
            let e = self.energies[a];
            for col in 0..cols {
                let v = self.coeffs[(a, col)];
                yr[(a, col)] = v * c;
                yi[(a, col)] = v * s;
                // d/dt e^{-iEt} = -iE e^{-iEt}
                dr[(a, col)] = e * v * s;
                di[(a, col)] = -e * v * c;
            }
        }
        let (pr, pi) = (&self.vectors * yr, &self.vectors * yi);
        let (qr, qi) = (&self.vectors * dr, &self.vectors * di);
        let nb = self.bath_dim;
        let mut p = Matrix4::<C64>::zeros();
        let mut pd = Matrix4::<C64>::zeros();
        for (c, &w) in self.weights.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    let (ci, cj) = (i * k + c, j * k + c);
                    for n in 0..2 {
                        for m in 0..2 {
                            let mut acc = C64::new(0.0, 0.0);
                            let mut dacc = C64::new(0.0, 0.0);
                            for b in 0..nb {
                                let (rn, rm) = (n * nb + b, m * nb + b);
                                let psi_i = C64::new(pr[(rn, ci)], pi[(rn, ci)]);
                                let psi_j = C64::new(pr[(rm, cj)], pi[(rm, cj)]).conj();
                                let dpsi_i = C64::new(qr[(rn, ci)], qi[(rn, ci)]);
                                let dpsi_j = C64::new(qr[(rm, cj)], qi[(rm, cj)]).conj();
                                acc += psi_i * psi_j;
                                dacc += dpsi_i * psi_j + psi_i * dpsi_j;
                            }
                            p[(2 * n + m, 2 * i + j)] += acc * w;
                            pd[(2 * n + m, 2 * i + j)] += dacc * w;
                        }
                    }
                }
            }
        }
        (p, pd)
    }
}

fn grid_propagators(sys: &SystemModel, spec: &DiscreteBathSpec, dt: f64, n: usize) -> Result<Vec<(SuperMatrix, SuperMatrix)>> {
    let dynamics = ExactDynamics::new(sys, spec)?;
    Ok((0..=n).into_par_iter().map(|j| dynamics.propagator(j as f64 * dt)).collect())
}

fn apply(p: &SuperMatrix, rho: &DensityMatrix) -> DensityMatrix {
    DensityMatrix(crate::generators::apply(p, &rho.0))
}

fn trajectory_from(props: &[(SuperMatrix, SuperMatrix)], sys: &SystemModel, spec: &DiscreteBathSpec, rho0: &DensityMatrix, dt: f64) -> Trajectory {
    let states: Vec<DensityMatrix> = props.iter().map(|(p, _)| apply(p, rho0)).collect();
    let track: Vec<f64> = states.iter().map(|s| s.min_eigenvalue()).collect();
    let n = states.len() - 1;
    let first_negative = track
        .iter()
        .position(|&e| e < -crate::propagation::POSITIVITY_TOL)
        .map(|j| (j as f64 * dt, track[j]));
    let meta = TrajectoryMeta {
        theta: sys.theta,
        order: 0,
        dt,
        n,
        temperature: Some(spec.temperature),
        cutoff: None,
        coupling: None,
        solver: format!("exact discrete bath, {} modes, fock cut {}", spec.modes.len(), spec.fock_cut),
        first_negative,
        min_eigenvalue: track.iter().copied().fold(f64::INFINITY, f64::min),
    };
    Trajectory {
        dt,
        n,
        states,
        min_eigenvalue_track: track,
        meta,
    }
}

/// Reduced system trajectory of the full system-plus-modes evolution from
/// `ρ0 ⊗ ρ_B`, with `ρ_B` the truncated, renormalised Gibbs state.
pub fn exact_discrete_bath(sys: &SystemModel, spec: &DiscreteBathSpec, rho0: &DensityMatrix, dt: f64, n: usize) -> Result<Trajectory> {
    let tr = trajectory_from(&grid_propagators(sys, spec, dt, n)?, sys, spec, rho0, dt);
    if let Some(tol) = spec.truncation_tol {
        let mut bigger = spec.clone();
        bigger.fock_cut += 1;
        bigger.truncation_tol = None;
        let other = trajectory_from(&grid_propagators(sys, &bigger, dt, n)?, sys, &bigger, rho0, dt);
        let deviation = max_trace_distance(&tr, &other);
        if deviation > tol {
            return Err(Error::TruncationNotConverged { deviation });
        }
    }
    Ok(tr)
}

pub fn max_trace_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| trace_distance(x, y))
        .fold(0.0, f64::max)
}

/// Largest condition number of `P(t)` accepted when inverting it.
pub const MAX_CONDITION: f64 = 1e8;

/// Time-local exact generator `L(t) = dP/dt P(t)^{-1}` on the grid.
pub fn extract_exact_tcl_generator(sys: &SystemModel, spec: &DiscreteBathSpec, dt: f64, n: usize) -> Result<Vec<Superoperator>> {
    grid_propagators(sys, spec, dt, n)?
        .into_iter()
        .enumerate()
        .map(|(j, (p, pd))| {
            let t = j as f64 * dt;
            let sv = p.singular_values();
            let condition = sv.max() / sv.min();
            if !(condition <= MAX_CONDITION) {
                return Err(Error::SingularGenerator { t, condition });
            }
            let inv = p.try_inverse().ok_or(Error::SingularGenerator { t, condition })?;
            Ok(Superoperator {
                matrix: pd * inv,
                time: t,
                order: Order::Total,
            })
        })
        .collect()
}

/// Entrywise least-squares split of `L(t; s) - L0 = a s + b s^2 (+ c s^3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbativeFit {
    pub l2: Vec<SuperMatrix>,
    pub l4: Vec<SuperMatrix>,
    /// Per time, the largest residual relative to the largest sample norm.
    pub relative_residual: Vec<f64>,
    /// Times whose relative residual exceeds `FIT_RESIDUAL_FLAG`.
    pub flagged: Vec<usize>,
}

pub const FIT_RESIDUAL_FLAG: f64 = 1e-3;

/// Fits `samples[k][j] ≈ a_j s_k + b_j s_k^2` for every time `j` and entry.
/// With four or more scales an `s^3` column is added to absorb the sixth-order
/// contamination; only `a` and `b` are reported.
pub fn fit_orders(scales: &[f64], samples: &[Vec<SuperMatrix>]) -> Result<PerturbativeFit> {
    if scales.len() < 3 || scales.len() != samples.len() {
        return Err(Error::InvalidParameter {
            name: "couplings",
            reason: "need at least three coupling scales, one sample set each".into(),
        });
    }
    let n = samples[0].len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(Error::GridMismatch("sample sets differ in length".into()));
    }
    let cols = if scales.len() >= 4 { 3 } else { 2 };
    let design = DMatrix::from_fn(scales.len(), cols, |k, p| scales[k].powi(p as i32 + 1));
    // rows of `pinv` are the weights producing each coefficient
    let pinv = design
        .clone()
        .pseudo_inverse(1e-14)
        .ok()
        .filter(|m| m.iter().all(|x| x.is_finite()) && design.rank(1e-12) == cols)
        .ok_or_else(|| Error::Domain("coupling scales are degenerate".into()))?;
    let mut fit = PerturbativeFit {
        l2: Vec::with_capacity(n),
        l4: Vec::with_capacity(n),
        relative_residual: Vec::with_capacity(n),
        flagged: Vec::new(),
    };
    for j in 0..n {
        let coef: Vec<SuperMatrix> = (0..cols)
            .map(|p| {
                samples
                    .iter()
                    .enumerate()
                    .fold(SuperMatrix::zeros(), |acc, (k, set)| acc + set[j] * C64::new(pinv[(p, k)], 0.0))
            })
            .collect();
        let scale = samples.iter().map(|set| set[j].norm()).fold(0.0, f64::max);
        let resid = scales
            .iter()
            .zip(samples)
            .map(|(s, set)| {
                let model = coef
                    .iter()
                    .enumerate()
                    .fold(SuperMatrix::zeros(), |acc, (p, c)| acc + c * C64::new(s.powi(p as i32 + 1), 0.0));
                (set[j] - model).norm()
            })
            .fold(0.0, f64::max);
        let rel = if scale > 0.0 { resid / scale } else { 0.0 };
        if rel > FIT_RESIDUAL_FLAG {
            fit.flagged.push(j);
        }
        fit.l2.push(coef[0]);
        fit.l4.push(coef[1]);
        fit.relative_residual.push(rel);
    }
    Ok(fit)
}

/// Second- and fourth-order generators estimated from exact generators at
/// couplings `g -> sqrt(s) g`.
pub fn fit_perturbative_orders(sys: &SystemModel, spec: &DiscreteBathSpec, dt: f64, n: usize, couplings: &[f64]) -> Result<PerturbativeFit> {
    let l0 = crate::generators::l0(sys).matrix;
    let samples = couplings
        .iter()
        .map(|&s| {
            extract_exact_tcl_generator(sys, &spec.scaled(s), dt, n).map(|v| v.into_iter().map(|l| l.matrix - l0).collect())
        })
        .collect::<Result<Vec<Vec<SuperMatrix>>>>()?;
    fit_orders(couplings, &samples)
}

/// `||a - b||_F / max_t ||b||_F` over paired series.
pub fn relative_frobenius_error(a: &[SuperMatrix], b: &[SuperMatrix]) -> f64 {
    let peak = b.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let worst = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        worst
    } else {
        worst / peak
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("exponent fit needs >= 2 positive pairs".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// JSON summary written by the oracle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub theta: f64,
    pub temperature: f64,
    pub modes: Vec<Mode>,
    pub fock_cut: usize,
    pub couplings: Vec<f64>,
    pub times: Vec<f64>,
    /// Per time, `||fit - l2||_F / max_t ||l2||_F`; likewise for l4.
    pub l2_relative_error: Vec<f64>,
    pub l4_relative_error: Vec<f64>,
    pub max_l2_relative_error: f64,
    pub max_l4_relative_error: f64,
    pub flagged_times: Vec<f64>,
    /// Norm ratio of the TCL generators at the last grid time, unit coupling.
    pub norm_ratio: f64,
    pub trajectory_couplings: Vec<f64>,
    /// Max trace distance from the exact trajectory, per trajectory coupling.
    pub tcl2_deviation: Vec<f64>,
    pub tcl4_deviation: Vec<f64>,
    /// Time-averaged trace distance from the exact trajectory.
    pub tcl2_time_avg: Vec<f64>,
    pub tcl4_time_avg: Vec<f64>,
    pub tcl2_exponent: Option<f64>,
    pub tcl4_exponent: Option<f64>,
    /// How the fourth-order bath functions are assembled.
    pub fourth_order_reading: String,
}

/// Order-by-order comparison of the TCL generators and trajectories with the
/// exact discrete-bath dynamics.
///
/// `couplings` are the scales used for the generator fit, `trajectory_couplings`
/// those for the trajectory error exponents (at least two for an exponent).
pub fn validate_orders(
    sys: &SystemModel,
    spec: &DiscreteBathSpec,
    dt: f64,
    n: usize,
    couplings: &[f64],
    trajectory_couplings: &[f64],
) -> Result<OracleReport> {
    use crate::bath::discrete_bath_functions;
    use crate::benchmark::{time_avg_trace_distance, Samples};
    use crate::generators::{generator_series, norm_ratio};
    use crate::propagation::{initial_state, propagate};

    let tables = |s: &DiscreteBathSpec| -> Result<_> {
        let gt = discrete_bath_functions(&s.modes, s.temperature, dt, n, &sys.bohr_frequencies())?.1;
        generator_series(sys, &gt, 4)
    };
    let series = tables(spec)?;
    let fit = fit_perturbative_orders(sys, spec, dt, n, couplings)?;
    let peak2 = series.l2.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let peak4 = series.l4.iter().map(|m| m.norm()).fold(0.0, f64::max);
    let pointwise = |a: &[SuperMatrix], b: &[SuperMatrix], peak: f64| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(x, y)| if peak > 0.0 { (x - y).norm() / peak } else { (x - y).norm() })
            .collect()
    };
    let l2_relative_error = pointwise(&fit.l2, &series.l2, peak2);
    let l4_relative_error = pointwise(&fit.l4, &series.l4, peak4);
    let times: Vec<f64> = series.times().collect();

    let rho0 = initial_state(sys.theta)?;
    let t_end = n as f64 * dt;
    let mut dev = [Vec::new(), Vec::new()];
    let mut avg = [Vec::new(), Vec::new()];
    for &s in trajectory_couplings {
        let scaled = spec.scaled(s);
        let exact = exact_discrete_bath(sys, &scaled, &rho0, dt, n)?;
        let series = tables(&scaled)?;
        for (k, order) in [2u8, 4].into_iter().enumerate() {
            let tr = propagate(&series.truncated(order), &rho0)?;
            dev[k].push(max_trace_distance(&exact, &tr));
            avg[k].push(time_avg_trace_distance(&Samples::from(&exact), &Samples::from(&tr), t_end)?);
        }
    }
    let exponent = |d: &[f64]| fit_exponent(trajectory_couplings, d).ok();
    let [tcl2_deviation, tcl4_deviation] = dev;
    let [tcl2_time_avg, tcl4_time_avg] = avg;
    Ok(OracleReport {
        theta: sys.theta,
        temperature: spec.temperature,
        modes: spec.modes.clone(),
        fock_cut: spec.fock_cut,
        couplings: couplings.to_vec(),
        max_l2_relative_error: l2_relative_error.iter().copied().fold(0.0, f64::max),
        max_l4_relative_error: l4_relative_error.iter().copied().fold(0.0, f64::max),
        l2_relative_error,
        l4_relative_error,
        flagged_times: fit.flagged.iter().map(|&j| times[j]).collect(),
        times,
        norm_ratio: norm_ratio(&series, t_end).unwrap_or(0.0),
        trajectory_couplings: trajectory_couplings.to_vec(),
        tcl2_exponent: exponent(&tcl2_deviation),
        tcl4_exponent: exponent(&tcl4_deviation),
        tcl2_deviation,
        tcl4_deviation,
        tcl2_time_avg,
        tcl4_time_avg,
        fourth_order_reading: "wick pairings: I_A^{C,C}, I_A^{C,C*}, I_B^{C,C}, I_B^{C,C*} and conjugate mirrors".into(),
    })
}
