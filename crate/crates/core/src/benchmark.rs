//! Distance metrics, relaxation fits, reference ingestion and parameter sweeps.

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::bath::{build_tables, SpectralDensity};
use crate::error::{Error, Result};
use crate::generators::{generator_series, norm_ratio, GeneratorSeries, SystemModel};
use crate::propagation::{initial_state, propagate, DensityMatrix, Trajectory};

pub use crate::propagation::trace_distance;

/// `(½ Σ_i |Δρ_ii|, ½ Σ_{i≠j} |Δρ_ij|)`.
pub fn split_trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> (f64, f64) {
    let d: Matrix2<C64> = a.0 - b.0;
    (
        0.5 * (d[(0, 0)].norm() + d[(1, 1)].norm()),
        0.5 * (d[(0, 1)].norm() + d[(1, 0)].norm()),
    )
}

/// States on an arbitrary increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl Samples {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Linear interpolation in time.
    pub fn at(&self, t: f64) -> Result<DensityMatrix> {
        let last = self.horizon();
        if t < self.times[0] - 1e-12 || t > last + 1e-9 * last.max(1.0) {
            return Err(Error::GridTooShort { covered: last, requested: t });
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return Ok(self.states[0]);
        }
        if k >= self.times.len() {
            return Ok(*self.states.last().unwrap());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Ok(DensityMatrix(self.states[k - 1].0 * C64::new(1.0 - w, 0.0) + self.states[k].0 * C64::new(w, 0.0)))
    }
}

impl From<&Trajectory> for Samples {
    fn from(tr: &Trajectory) -> Self {
        Samples {
            times: tr.times().collect(),
            states: tr.states.clone(),
        }
    }
}

/// `(1/t_end) ∫_0^{t_end} d(t) dt` by trapezoid on the first grid, with the
/// second series interpolated onto it.
pub fn time_avg_trace_distance(a: &Samples, b: &Samples, t_end: f64) -> Result<f64> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("must be positive, got {t_end}"),
        });
    }
    for s in [a, b] {
        if s.horizon() < t_end * (1.0 - 1e-12) {
            return Err(Error::GridTooShort { covered: s.horizon(), requested: t_end });
        }
    }
    let mut grid: Vec<f64> = a.times.iter().copied().take_while(|&t| t < t_end * (1.0 - 1e-12)).collect();
    grid.push(t_end);
    let d: Vec<f64> = grid
        .iter()
        .map(|&t| Ok(trace_distance(&a.at(t)?, &b.at(t)?)))
        .collect::<Result<_>>()?;
    let area: f64 = grid.windows(2).zip(d.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum();
    Ok(area / t_end)
}

/// Fit of `a e^{-rate t} + b` to one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationFit {
    pub a: f64,
    pub rate: f64,
    pub b: f64,
    /// RMS residual relative to the RMS of the data.
    pub relative_residual: f64,
    pub converged: bool,
}

const FIT_MAX_ITER: usize = 500;

pub fn fit_exponential(t: &[f64], y: &[f64]) -> Result<RelaxationFit> {
    if t.len() < 4 || t.len() != y.len() {
        return Err(Error::Domain("relaxation fit needs at least four samples".into()));
    }
    let m = t.len();
    let b0 = y[m - 1];
    let a0 = y[0] - b0;
    // log-slope over the part of the decay that is still well above the floor
    let (mut sx, mut sy, mut sxx, mut sxy, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..m {
        let r = (y[i] - b0).abs();
        if r > 0.05 * a0.abs() && i < m / 2 {
            let l = r.ln();
            sx += t[i];
            sy += l;
            sxx += t[i] * t[i];
            sxy += t[i] * l;
            k += 1.0;
        }
    }
    let slope = if k >= 2.0 { (k * sxy - sx * sy) / (k * sxx - sx * sx) } else { 0.0 };
    let mut p = Vector3::new(a0, (-slope).max(1.0 / t[m - 1]), b0);
    let norm = (y.iter().map(|v| v * v).sum::<f64>() / m as f64).sqrt().max(f64::MIN_POSITIVE);
    let cost = |p: &Vector3<f64>| -> f64 {
        t.iter().zip(y).map(|(&ti, &yi)| (p[0] * (-p[1] * ti).exp() + p[2] - yi).powi(2)).sum()
    };
    let mut c = cost(&p);
    let mut mu = 1e-3;
    let mut converged = false;
    for _ in 0..FIT_MAX_ITER {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&ti, &yi) in t.iter().zip(y) {
            let e = (-p[1] * ti).exp();
            let g = Vector3::new(e, -p[0] * ti * e, 1.0);
            let r = yi - (p[0] * e + p[2]);
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj;
            for d in 0..3 {
                damped[(d, d)] *= 1.0 + mu;
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                mu *= 10.0;
                continue;
            };
            let trial = p + step;
            let ct = cost(&trial);
            if ct <= c {
                let small = step.norm() <= 1e-13 * (p.norm() + 1e-13);
                p = trial;
                let drop = c - ct;
                c = ct;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if small || drop <= 1e-15 * c.max(f64::MIN_POSITIVE) {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        let rel = (c / m as f64).sqrt() / norm;
        if rel < 1e-12 || !improved {
            converged = true;
        }
        if converged {
            break;
        }
    }
    Ok(RelaxationFit {
        a: p[0],
        rate: p[1],
        b: p[2],
        relative_residual: (c / m as f64).sqrt() / norm,
        converged,
    })
}

/// Fits `ρ_ii(t)` of a trajectory.
pub fn fit_relaxation(traj: &Trajectory, population_index: usize) -> Result<RelaxationFit> {
    if population_index > 1 {
        return Err(Error::InvalidParameter {
            name: "population_index",
            reason: format!("must be 0 or 1, got {population_index}"),
        });
    }
    let t: Vec<f64> = traj.times().collect();
    let y: Vec<f64> = traj.states.iter().map(|s| s.0[(population_index, population_index)].re).collect();
    fit_exponential(&t, &y)
}

/// Reference dynamics produced elsewhere (e.g. TEMPO or HEOM).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrace {
    pub samples: Samples,
    pub source_label: String,
    pub format_version: u32,
    pub solver_params: serde_json::Value,
}

#[derive(Debug, Default, Deserialize)]
struct Sidecar {
    #[serde(default)]
    source_label: Option<String>,
    #[serde(default)]
    format_version: Option<u32>,
    #[serde(default)]
    solver_params: serde_json::Value,
}

pub const REFERENCE_COLUMNS: [&str; 5] = ["t", "rho11_re", "rho22_re", "rho12_re", "rho12_im"];

/// Parses the trajectory CSV schema; a JSON sidecar with the same stem, if
/// present, supplies `source_label`, `format_version` and `solver_params`.
pub fn ingest_reference(path: &Path) -> Result<ReferenceTrace> {
    let text = std::fs::read_to_string(path)?;
    let mut trace = parse_reference(&text)?;
    let sidecar = path.with_extension("json");
    if sidecar.exists() {
        let meta: Sidecar = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)
            .map_err(|e| Error::Parse { line: e.line(), message: format!("sidecar: {e}") })?;
        trace.source_label = meta.source_label.unwrap_or_default();
        trace.format_version = meta.format_version.unwrap_or(1);
        trace.solver_params = meta.solver_params;
    }
    if trace.source_label.is_empty() {
        trace.source_label = path.display().to_string();
    }
    Ok(trace)
}

pub fn parse_reference(text: &str) -> Result<ReferenceTrace> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut idx = [0usize; 5];
    for (k, name) in REFERENCE_COLUMNS.iter().enumerate() {
        idx[k] = cols.iter().position(|c| c == name).ok_or(Error::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })?;
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} fields, found {}", cols.len(), fields.len()),
            });
        }
        let mut v = [0.0f64; 5];
        for k in 0..5 {
            v[k] = fields[idx[k]].parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("`{}` is not a number in column `{}`", fields[idx[k]], REFERENCE_COLUMNS[k]),
            })?;
        }
        if let Some(&prev) = times.last() {
            if !(v[0] > prev) {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("non-monotone time at line {lineno}"),
                });
            }
        }
        if (v[1] + v[2] - 1.0).abs() > 1e-6 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("trace {} deviates from 1 by more than 1e-6", v[1] + v[2]),
            });
        }
        let c = C64::new(v[3], v[4]);
        times.push(v[0]);
        states.push(DensityMatrix(Matrix2::new(C64::new(v[1], 0.0), c, c.conj(), C64::new(v[2], 0.0))));
    }
    if times.is_empty() {
        return Err(Error::Parse { line: 2, message: "no data rows".into() });
    }
    Ok(ReferenceTrace {
        samples: Samples { times, states },
        source_label: String::new(),
        format_version: 1,
        solver_params: serde_json::Value::Null,
    })
}

/// One sweep cell's reference, keyed by grid position.
pub type ReferenceMap = BTreeMap<(usize, usize), ReferenceTrace>;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub thetas: Vec<f64>,
    pub temperatures: Vec<f64>,
    /// Template bath; its temperature is replaced per row.
    pub bath: SpectralDensity,
    pub dt: f64,
    pub t_end: f64,
    /// Times at which pointwise distances are reported.
    pub t_star: Vec<f64>,
    /// Time at which the norm ratio is reported (clamped to `t_end`).
    pub ratio_time: f64,
    pub fft_half: Option<usize>,
    pub fit_relaxation: bool,
    pub references: ReferenceMap,
}

impl SweepConfig {
    pub fn new(thetas: Vec<f64>, temperatures: Vec<f64>, bath: SpectralDensity, dt: f64, t_end: f64) -> Self {
        SweepConfig {
            thetas,
            temperatures,
            bath,
            dt,
            t_end,
            t_star: vec![10.0, 15.0],
            ratio_time: 15.0,
            fft_half: None,
            fit_relaxation: false,
            references: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub theta: f64,
    pub temperature: f64,
    pub metrics: BTreeMap<String, f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub thetas: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub t_star: Vec<f64>,
    pub t_end: f64,
    /// Row-major over `(temperature, theta)`.
    pub cells: Vec<CellResult>,
}

impl BenchmarkResult {
    pub fn cell(&self, theta_idx: usize, temp_idx: usize) -> &CellResult {
        &self.cells[temp_idx * self.thetas.len() + theta_idx]
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Flat CSV `theta,T,metric,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "theta,T,metric,value")?;
        for c in &self.cells {
            for (k, v) in &c.metrics {
                writeln!(w, "{:?},{:?},{},{:?}", c.theta, c.temperature, k, v)?;
            }
        }
        Ok(())
    }
}

fn stamp(t: f64) -> String {
    let s = format!("{t}");
    s.replace('.', "p")
}

fn run_cell(
    cfg: &SweepConfig,
    gt: &crate::bath::GammaTable,
    ti: usize,
    tj: usize,
) -> Result<BTreeMap<String, f64>> {
    let theta = cfg.thetas[ti];
    let sys = SystemModel::new(theta)?;
    let series: GeneratorSeries = generator_series(&sys, gt, 4)?;
    let rho0 = initial_state(theta)?;
    let tcl4 = propagate(&series, &rho0)?;
    let tcl2 = propagate(&series.truncated(2), &rho0)?;
    let (s2, s4) = (Samples::from(&tcl2), Samples::from(&tcl4));
    let mut m = BTreeMap::new();
    let t_end = cfg.t_end.min(s4.horizon());
    m.insert("delta_avg_tcl2_tcl4".into(), time_avg_trace_distance(&s2, &s4, t_end)?);
    let dmax = s2.states.iter().zip(&s4.states).map(|(a, b)| trace_distance(a, b)).fold(0.0, f64::max);
    m.insert("delta_max_tcl2_tcl4".into(), dmax);
    for &ts in cfg.t_star.iter().filter(|&&t| t <= s4.horizon() + 1e-9) {
        let (a, b) = (s2.at(ts)?, s4.at(ts)?);
        let (p, c) = split_trace_distance(&a, &b);
        m.insert(format!("d_tcl2_tcl4_t{}", stamp(ts)), trace_distance(&a, &b));
        m.insert(format!("d_pop_tcl2_tcl4_t{}", stamp(ts)), p);
        m.insert(format!("d_coh_tcl2_tcl4_t{}", stamp(ts)), c);
    }
    let rt = series.dt * (cfg.ratio_time.min(t_end) / series.dt).round();
    if let Ok(r) = norm_ratio(&series, rt) {
        m.insert("norm_ratio".into(), r);
    }
    for (name, tr) in [("tcl2", &tcl2), ("tcl4", &tcl4)] {
        m.insert(format!("min_eigenvalue_{name}"), tr.meta.min_eigenvalue);
        let (dt, dh) = tr.states.iter().fold((0.0f64, 0.0f64), |(a, b), s| {
            (a.max((s.trace() - 1.0).norm()), b.max((s.0 - s.0.adjoint()).norm()))
        });
        m.insert(format!("trace_defect_{name}"), dt);
        m.insert(format!("hermiticity_defect_{name}"), dh);
        if let Some((t, _)) = tr.meta.first_negative {
            m.insert(format!("first_violation_{name}"), t);
        }
    }
    if cfg.fit_relaxation {
        for (name, tr) in [("tcl2", &tcl2), ("tcl4", &tcl4)] {
            let fit = fit_relaxation(tr, 0)?;
            m.insert(format!("relaxation_rate_{name}"), fit.rate);
            m.insert(format!("relaxation_residual_{name}"), fit.relative_residual);
        }
    }
    if let Some(r) = cfg.references.get(&(ti, tj)) {
        let te = t_end.min(r.samples.horizon());
        let d2 = time_avg_trace_distance(&s2, &r.samples, te)?;
        let d4 = time_avg_trace_distance(&s4, &r.samples, te)?;
        m.insert("delta_avg_tcl2_ref".into(), d2);
        m.insert("delta_avg_tcl4_ref".into(), d4);
        m.insert("delta_avg_tcl4_minus_tcl2_ref".into(), d4 - d2);
        for &ts in cfg.t_star.iter().filter(|&&t| t <= te + 1e-9) {
            let rs = r.samples.at(ts)?;
            for (name, s) in [("tcl2", &s2), ("tcl4", &s4)] {
                let (p, c) = split_trace_distance(&s.at(ts)?, &rs);
                m.insert(format!("d_pop_{name}_ref_t{}", stamp(ts)), p);
                m.insert(format!("d_coh_{name}_ref_t{}", stamp(ts)), c);
            }
        }
    }
    Ok(m)
}

/// Runs every `(θ, T)` cell; bath tables are built once per temperature and
/// cell failures are recorded without stopping the sweep.
pub fn sweep(cfg: &SweepConfig) -> Result<BenchmarkResult> {
    if !(cfg.dt > 0.0) || !(cfg.t_end >= cfg.dt) {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "need dt > 0 and t_end >= dt".into(),
        });
    }
    let n = (cfg.t_end / cfg.dt).round() as usize;
    let freqs = [-1.0, 0.0, 1.0];
    let tables: Vec<Result<crate::bath::GammaTable>> = cfg
        .temperatures
        .iter()
        .map(|&temp| build_tables(&cfg.bath.with_temperature(temp), cfg.dt, n, &freqs, cfg.fft_half))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.temperatures.len())
        .flat_map(|tj| (0..cfg.thetas.len()).map(move |ti| (ti, tj)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(ti, tj)| {
            let outcome = match &tables[tj] {
                Ok(gt) => run_cell(cfg, gt, ti, tj),
                Err(e) => Err(e.clone()),
            };
            let (metrics, error) = match outcome {
                Ok(m) => (m, None),
                Err(e) => (BTreeMap::new(), Some(e.to_string())),
            };
            CellResult {
                theta: cfg.thetas[ti],
                temperature: cfg.temperatures[tj],
                metrics,
                error,
            }
        })
        .collect();
    Ok(BenchmarkResult {
        thetas: cfg.thetas.clone(),
        temperatures: cfg.temperatures.clone(),
        t_star: cfg.t_star.clone(),
        t_end: cfg.t_end,
        cells,
    })
}
