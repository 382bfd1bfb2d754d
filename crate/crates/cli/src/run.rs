//! Subcommand implementations. Each command computes everything first and then
//! writes its files in one pass, followed by the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tcl4::bath::{bcf_convergence, build_tables, BcfConvergence};
use tcl4::benchmark::{ingest_reference, split_trace_distance, sweep, time_avg_trace_distance, ReferenceMap, Samples, SweepConfig};
use tcl4::generators::{generator_series, hermiticity_defect, norm_ratio, trace_defect, SystemModel};
use tcl4::oracle::{validate_orders, DiscreteBathSpec, OracleReport};
use tcl4::propagation::{halve_step_check, initial_state, propagate, trace_distance, Trajectory};

use crate::config::{DefaultUsed, Format, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Sweep,
    Oracle,
    BcfCheck,
    Bench,
}

/// Written next to every output set.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: Command,
    pub version: String,
    /// SHA-256 of the canonical (re-serialised) config.
    pub config_hash: String,
    pub defaults: Vec<DefaultUsed>,
    pub files: Vec<String>,
    /// False when some validation failed or some cell errored.
    pub complete: bool,
    pub notes: Vec<String>,
}

pub struct Outcome {
    pub manifest: Manifest,
    pub dir: PathBuf,
}

impl Outcome {
    pub fn success(&self) -> bool {
        self.manifest.complete
    }
}

pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let digest = Sha256::digest(cfg.to_toml()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, data).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }
}

/// Runs `command` and writes its outputs under `out` (or the configured dir).
pub fn run(command: Command, cfg: &RunConfig, defaults: Vec<DefaultUsed>, out: Option<&Path>) -> Result<Outcome> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.clone());
    let mut w = Writer::new(&dir)?;
    let mut notes = Vec::new();
    let complete = match command {
        Command::Simulate => simulate(cfg, &mut w, &mut notes)?,
        Command::Sweep => run_sweep(cfg, &mut w, &mut notes)?,
        Command::Oracle => oracle(cfg, &mut w, &mut notes)?,
        Command::BcfCheck => bcf_check(cfg, &mut w, &mut notes)?,
        Command::Bench => bench(cfg, &mut w, &mut notes)?,
    };
    w.bytes("config.toml", cfg.to_toml()?.as_bytes())?;
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(cfg)?,
        defaults,
        files: w.files.clone(),
        complete,
        notes,
    };
    w.json("manifest.json", &manifest)?;
    Ok(Outcome { manifest, dir })
}

/// Largest trace and Hermiticity defects over a trajectory.
pub fn integrity(tr: &Trajectory) -> (f64, f64) {
    tr.states.iter().fold((0.0, 0.0), |(t, h), s| {
        (
            f64::max(t, (s.trace() - 1.0).norm()),
            f64::max(h, (s.0 - s.0.adjoint()).norm()),
        )
    })
}

pub const INTEGRITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub theta: f64,
    pub temperature: f64,
    pub order: u8,
    pub max_trace_defect: f64,
    pub max_hermiticity_defect: f64,
    pub max_generator_trace_defect: f64,
    pub max_generator_hermiticity_defect: f64,
    pub halve_step_distance: f64,
    pub norm_ratio_at_t_end: Option<f64>,
    pub first_negative: Option<(f64, f64)>,
    pub min_eigenvalue: f64,
    pub reference: Option<ReferenceComparison>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceComparison {
    pub source_label: String,
    pub time_avg_trace_distance: f64,
    pub max_trace_distance: f64,
    pub max_population_distance: f64,
    pub max_coherence_distance: f64,
}

pub fn simulate_trajectory(cfg: &RunConfig) -> Result<(Trajectory, SimulationSummary)> {
    let sys = SystemModel::new(cfg.model.theta)?;
    let temperature = cfg.bath.temperature;
    let sd = cfg.spectral_density(temperature)?;
    let n = cfg.steps();
    let gt = build_tables(&sd, cfg.grid.dt, n, &sys.bohr_frequencies(), cfg.solver.fft_n)?;
    let series = generator_series(&sys, &gt, cfg.solver.order)?;
    let rho0 = initial_state(cfg.model.theta)?;
    let mut tr = propagate(&series, &rho0)?;
    tr.meta.temperature = Some(temperature);
    if sd.modes.is_none() {
        tr.meta.cutoff = Some(cfg.bath.cutoff);
        tr.meta.coupling = Some(cfg.bath.coupling);
    }
    let (max_trace_defect, max_hermiticity_defect) = integrity(&tr);
    let reference = match cfg.reference.as_ref().and_then(|r| r.path.as_ref()) {
        Some(p) => Some(compare_reference(&tr, p, cfg.grid.t_end)?),
        None => None,
    };
    let summary = SimulationSummary {
        theta: cfg.model.theta,
        temperature,
        order: cfg.solver.order,
        max_trace_defect,
        max_hermiticity_defect,
        max_generator_trace_defect: series.total.iter().map(trace_defect).fold(0.0, f64::max),
        max_generator_hermiticity_defect: series.total.iter().map(hermiticity_defect).fold(0.0, f64::max),
        halve_step_distance: halve_step_check(&series, &rho0)?,
        norm_ratio_at_t_end: if cfg.solver.order == 4 { norm_ratio(&series, n as f64 * cfg.grid.dt).ok() } else { None },
        first_negative: tr.meta.first_negative,
        min_eigenvalue: tr.meta.min_eigenvalue,
        reference,
    };
    Ok((tr, summary))
}

fn compare_reference(tr: &Trajectory, path: &Path, t_end: f64) -> Result<ReferenceComparison> {
    let r = ingest_reference(path)?;
    let own = Samples::from(tr);
    let horizon = t_end.min(r.samples.horizon());
    let mut max = (0.0f64, 0.0f64, 0.0f64);
    for (t, s) in own.times.iter().zip(&own.states) {
        if *t > horizon {
            break;
        }
        let other = r.samples.at(*t)?;
        let (p, c) = split_trace_distance(s, &other);
        max = (max.0.max(trace_distance(s, &other)), max.1.max(p), max.2.max(c));
    }
    Ok(ReferenceComparison {
        source_label: r.source_label.clone(),
        time_avg_trace_distance: time_avg_trace_distance(&own, &r.samples, horizon)?,
        max_trace_distance: max.0,
        max_population_distance: max.1,
        max_coherence_distance: max.2,
    })
}

fn simulate(cfg: &RunConfig, w: &mut Writer, notes: &mut Vec<String>) -> Result<bool> {
    let (tr, summary) = simulate_trajectory(cfg)?;
    if cfg.wants(Format::Csv) {
        let mut buf = Vec::new();
        tr.write_csv(&mut buf)?;
        w.bytes("trajectory.csv", &buf)?;
    }
    if cfg.wants(Format::Json) {
        w.json("trajectory.json", &tr.meta)?;
    }
    w.json("summary.json", &summary)?;
    let ok = summary.max_trace_defect <= INTEGRITY_TOL && summary.max_hermiticity_defect <= INTEGRITY_TOL;
    if !ok {
        notes.push(format!(
            "integrity check failed: trace {:e}, hermiticity {:e}",
            summary.max_trace_defect, summary.max_hermiticity_defect
        ));
    }
    if let Some((t, v)) = summary.first_negative {
        notes.push(format!("first negative eigenvalue {v:e} at t = {t}"));
    }
    Ok(ok)
}

fn matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

pub fn sweep_config(cfg: &RunConfig) -> Result<SweepConfig> {
    let Some(s) = &cfg.sweep else {
        bail!("sweep: the config has no [sweep] section");
    };
    let mut sc = SweepConfig::new(
        s.theta_list.clone(),
        s.temperature_list.clone(),
        cfg.spectral_density(cfg.bath.temperature)?,
        cfg.grid.dt,
        cfg.grid.t_end,
    );
    sc.t_star = s.t_star.clone();
    sc.ratio_time = cfg.grid.t_end;
    sc.fft_half = cfg.solver.fft_n;
    sc.fit_relaxation = s.fit_relaxation;
    let mut refs = ReferenceMap::new();
    for cell in cfg.reference.iter().flat_map(|r| &r.cells) {
        let ti = s.theta_list.iter().position(|&t| matches(t, cell.theta));
        let tj = s.temperature_list.iter().position(|&t| matches(t, cell.temperature));
        let (Some(ti), Some(tj)) = (ti, tj) else {
            bail!(
                "reference.cells: ({}, {}) is not a grid point of the sweep",
                cell.theta,
                cell.temperature
            );
        };
        refs.insert((ti, tj), ingest_reference(&cell.path)?);
    }
    sc.references = refs;
    Ok(sc)
}

fn run_sweep(cfg: &RunConfig, w: &mut Writer, notes: &mut Vec<String>) -> Result<bool> {
    let result = sweep(&sweep_config(cfg)?)?;
    if cfg.wants(Format::Json) {
        w.bytes("benchmark.json", (result.to_json()? + "\n").as_bytes())?;
    }
    if cfg.wants(Format::Csv) {
        let mut buf = Vec::new();
        result.write_csv(&mut buf)?;
        w.bytes("benchmark.csv", &buf)?;
    }
    let mut ok = true;
    for c in &result.cells {
        if let Some(e) = &c.error {
            ok = false;
            notes.push(format!("cell theta={} T={}: {e}", c.theta, c.temperature));
        }
    }
    Ok(ok)
}

/// One order-validation report per oracle angle.
pub fn oracle_reports(cfg: &RunConfig) -> Result<Vec<OracleReport>> {
    let Some(o) = &cfg.oracle else {
        bail!("oracle: the config has no [oracle] section");
    };
    let Some(modes) = &cfg.bath.modes else {
        bail!("bath.modes: the oracle needs a discrete bath");
    };
    let spec = DiscreteBathSpec::new(modes.clone(), o.fock_cut, cfg.bath.temperature)?;
    o.theta_list
        .iter()
        .map(|&theta| {
            let sys = SystemModel::new(theta)?;
            Ok(validate_orders(&sys, &spec, cfg.grid.dt, cfg.steps(), &o.couplings, &o.trajectory_couplings)?)
        })
        .collect()
}

fn oracle(cfg: &RunConfig, w: &mut Writer, notes: &mut Vec<String>) -> Result<bool> {
    let reports = oracle_reports(cfg)?;
    let o = cfg.oracle.as_ref().expect("checked by oracle_reports");
    let mut ok = true;
    for r in &reports {
        if r.max_l2_relative_error > o.max_l2_error || r.max_l4_relative_error > o.max_l4_error {
            ok = false;
            notes.push(format!(
                "theta={}: l2 error {:e}, l4 error {:e} above tolerance",
                r.theta, r.max_l2_relative_error, r.max_l4_relative_error
            ));
        }
    }
    w.json("oracle_report.json", &reports)?;
    Ok(ok)
}

fn bcf_check(cfg: &RunConfig, w: &mut Writer, _notes: &mut Vec<String>) -> Result<bool> {
    let Some(b) = &cfg.bcf else {
        bail!("bcf-check: the config has no [bcf] section");
    };
    let mut rows: Vec<(f64, BcfConvergence)> = Vec::new();
    for &temp in &b.temperature_list {
        let sd = cfg.spectral_density(temp)?;
        for r in bcf_convergence(&sd, cfg.grid.dt, &b.t_n_list, b.t_ref, b.t_max)? {
            rows.push((temp, r));
        }
    }
    let mut csv = String::from("T,t_n,max_abs_diff\n");
    for (t, r) in &rows {
        csv += &format!("{t:?},{:?},{:?}\n", r.t_n, r.max_abs_diff);
    }
    w.bytes("bcf_convergence.csv", csv.as_bytes())?;
    let monotone = b.temperature_list.iter().all(|&t| {
        let v: Vec<f64> = rows.iter().filter(|(x, _)| *x == t).map(|(_, r)| r.max_abs_diff).collect();
        v.windows(2).all(|p| p[1] < p[0])
    });
    Ok(monotone)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub order: u8,
    pub median_seconds: f64,
    pub min_seconds: f64,
}

/// Median wall time of the generator-series build for each `n` and order.
/// Fast builds are batched so each timing sample is at least a few ms.
pub fn time_series_builds(cfg: &RunConfig, n_list: &[usize], repeats: usize) -> Result<Vec<BenchRow>> {
    let sys = SystemModel::new(cfg.model.theta)?;
    let sd = cfg.spectral_density(cfg.bath.temperature)?;
    let max_n = n_list.iter().copied().max().unwrap_or(0);
    let gt = build_tables(&sd, cfg.grid.dt, max_n, &sys.bohr_frequencies(), cfg.solver.fft_n)?;
    let mut rows = Vec::new();
    for order in [2u8, 4] {
        let mut samples: Vec<Vec<f64>> = vec![Vec::new(); n_list.len()];
        let tables = n_list.iter().map(|&n| gt.truncated(n)).collect::<tcl4::Result<Vec<_>>>()?;
        let batch: Vec<usize> = tables
            .iter()
            .map(|t| {
                let start = Instant::now();
                std::hint::black_box(generator_series(&sys, t, order)?);
                let once = start.elapsed().as_secs_f64();
                Ok(((5e-3 / once.max(1e-9)).ceil() as usize).clamp(1, 10_000))
            })
            .collect::<tcl4::Result<_>>()?;
        // interleave sizes so slow drifts in machine load hit both alike
        for _ in 0..repeats {
            for (k, t) in tables.iter().enumerate() {
                let start = Instant::now();
                for _ in 0..batch[k] {
                    std::hint::black_box(generator_series(&sys, t, order)?);
                }
                samples[k].push(start.elapsed().as_secs_f64() / batch[k] as f64);
            }
        }
        for (k, mut s) in samples.into_iter().enumerate() {
            s.sort_by(f64::total_cmp);
            rows.push(BenchRow {
                n: n_list[k],
                order,
                median_seconds: s[s.len() / 2],
                min_seconds: s[0],
            });
        }
    }
    Ok(rows)
}

fn bench(cfg: &RunConfig, w: &mut Writer, _notes: &mut Vec<String>) -> Result<bool> {
    let Some(b) = &cfg.bench else {
        bail!("bench: the config has no [bench] section");
    };
    let rows = time_series_builds(cfg, &b.n_list, b.repeats)?;
    w.json("bench.json", &rows)?;
    Ok(true)
}
