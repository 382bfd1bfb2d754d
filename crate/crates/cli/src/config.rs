//! Run configuration, read from TOML.
//!
//! Every section except `[bath]` may be omitted; the defaults that were filled
//! in are returned alongside the config so the run manifest can record them.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tcl4::bath::{Cutoff, Mode, SpectralDensity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    pub bath: Bath,
    pub grid: Grid,
    pub solver: Solver,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Oracle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bcf: Option<BcfCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<Bench>,
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bath {
    /// `"drude"` or `"exponential"`; ignored when `modes` is given.
    pub cutoff: Cutoff,
    pub omega_c: f64,
    /// `λ²`.
    pub coupling: f64,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<Mode>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub dt: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solver {
    pub order: u8,
    /// Half size of the correlation-function FFT; default from `dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fft_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub theta_list: Vec<f64>,
    pub temperature_list: Vec<f64>,
    /// Comparison times for the per-time distances.
    pub t_star: Vec<f64>,
    pub fit_relaxation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    /// Reference trajectory for `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Per-cell references for `sweep`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<ReferenceCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceCell {
    pub theta: f64,
    pub temperature: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oracle {
    pub fock_cut: usize,
    pub theta_list: Vec<f64>,
    /// Coupling scales for the generator fit.
    pub couplings: Vec<f64>,
    /// Coupling scales for the trajectory error exponents.
    pub trajectory_couplings: Vec<f64>,
    pub max_l2_error: f64,
    pub max_l4_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcfCheck {
    pub temperature_list: Vec<f64>,
    pub t_n_list: Vec<f64>,
    pub t_ref: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bench {
    pub n_list: Vec<usize>,
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A key that was absent from the file and received its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultUsed {
    pub key: String,
    pub value: String,
}

// Raw mirror of the file with every defaultable key optional.

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    bath: Option<RawBath>,
    grid: Option<RawGrid>,
    solver: Option<RawSolver>,
    sweep: Option<RawSweep>,
    reference: Option<Reference>,
    oracle: Option<RawOracle>,
    bcf: Option<RawBcf>,
    bench: Option<RawBench>,
    output: Option<RawOutput>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawModel {
    theta: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBath {
    cutoff: Option<Cutoff>,
    omega_c: Option<f64>,
    coupling: Option<f64>,
    temperature: Option<f64>,
    modes: Option<Vec<Mode>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dt: Option<f64>,
    t_end: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    order: Option<u8>,
    fft_n: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    theta_list: Option<Vec<f64>>,
    temperature_list: Option<Vec<f64>>,
    t_star: Option<Vec<f64>>,
    fit_relaxation: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    fock_cut: Option<usize>,
    theta_list: Option<Vec<f64>>,
    couplings: Option<Vec<f64>>,
    trajectory_couplings: Option<Vec<f64>>,
    max_l2_error: Option<f64>,
    max_l4_error: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBcf {
    temperature_list: Option<Vec<f64>>,
    t_n_list: Option<Vec<f64>>,
    t_ref: Option<f64>,
    t_max: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBench {
    n_list: Option<Vec<usize>>,
    repeats: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    formats: Option<Vec<Format>>,
}

struct Filler(Vec<DefaultUsed>);

impl Filler {
    fn take<T: std::fmt::Debug>(&mut self, key: &str, v: Option<T>, default: T) -> T {
        v.unwrap_or_else(|| {
            self.0.push(DefaultUsed {
                key: key.into(),
                value: format!("{default:?}"),
            });
            default
        })
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_defaults(text).map(|(c, _)| c)
}

/// Parses and validates, returning the defaults that were applied.
pub fn parse_config_with_defaults(text: &str) -> Result<(RunConfig, Vec<DefaultUsed>)> {
    let raw: RawConfig = toml::from_str(text).context("invalid config")?;
    let mut f = Filler(Vec::new());

    let model = raw.model.unwrap_or_default();
    let bath = raw.bath.unwrap_or_default();
    let cutoff = match (bath.cutoff, &bath.modes) {
        (Some(c), _) => c,
        // a discrete bath has no cutoff function
        (None, Some(_)) => f.take("bath.cutoff", None, Cutoff::Exponential),
        (None, None) => bail!("bath.cutoff: cutoff required (\"drude\" or \"exponential\")"),
    };
    let grid = raw.grid.unwrap_or_default();
    let solver = raw.solver.unwrap_or_default();
    let output = raw.output.unwrap_or_default();

    let cfg = RunConfig {
        model: Model {
            theta: f.take("model.theta", model.theta, 0.0),
        },
        bath: Bath {
            cutoff,
            omega_c: f.take("bath.omega_c", bath.omega_c, 10.0),
            coupling: f.take("bath.coupling", bath.coupling, 1.0),
            temperature: f.take("bath.temperature", bath.temperature, 1.0),
            modes: bath.modes,
        },
        grid: Grid {
            dt: f.take("grid.dt", grid.dt, 0.01),
            t_end: f.take("grid.t_end", grid.t_end, 15.0),
        },
        solver: Solver {
            order: f.take("solver.order", solver.order, 4),
            fft_n: solver.fft_n,
        },
        sweep: raw.sweep.map(|s| Sweep {
            theta_list: f.take("sweep.theta_list", s.theta_list, vec![0.0]),
            temperature_list: f.take("sweep.temperature_list", s.temperature_list, vec![1.0]),
            t_star: f.take("sweep.t_star", s.t_star, vec![10.0, 15.0]),
            fit_relaxation: f.take("sweep.fit_relaxation", s.fit_relaxation, false),
        }),
        reference: raw.reference,
        oracle: raw.oracle.map(|o| Oracle {
            fock_cut: f.take("oracle.fock_cut", o.fock_cut, 4),
            theta_list: f.take("oracle.theta_list", o.theta_list, vec![0.0]),
            couplings: f.take("oracle.couplings", o.couplings, vec![1.0, 0.75, 0.5, 0.25]),
            trajectory_couplings: f.take("oracle.trajectory_couplings", o.trajectory_couplings, vec![1.0, 0.5, 0.25]),
            max_l2_error: f.take("oracle.max_l2_error", o.max_l2_error, 0.01),
            max_l4_error: f.take("oracle.max_l4_error", o.max_l4_error, 0.05),
        }),
        bcf: raw.bcf.map(|b| BcfCheck {
            temperature_list: f.take("bcf.temperature_list", b.temperature_list, vec![1.0]),
            t_n_list: f.take("bcf.t_n_list", b.t_n_list, vec![5.0, 10.0, 50.0, 500.0, 5000.0]),
            t_ref: f.take("bcf.t_ref", b.t_ref, 50000.0),
            t_max: f.take("bcf.t_max", b.t_max, 15.0),
        }),
        bench: raw.bench.map(|b| Bench {
            n_list: f.take("bench.n_list", b.n_list, vec![750, 1500]),
            repeats: f.take("bench.repeats", b.repeats, 5),
        }),
        output: Output {
            dir: f.take("output.dir", output.dir, PathBuf::from("out")),
            formats: f.take("output.formats", output.formats, vec![Format::Csv, Format::Json]),
        },
    };
    cfg.validate()?;
    Ok((cfg, f.0))
}

fn check(ok: bool, key: &str, constraint: &str) -> Result<()> {
    if !ok {
        bail!("{key}: {constraint}");
    }
    Ok(())
}

fn theta_ok(t: f64) -> bool {
    (0.0..=FRAC_PI_2 + 1e-12).contains(&t)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.grid.dt > 0.0, "grid.dt", "dt must be positive")?;
        check(self.grid.t_end >= self.grid.dt, "grid.t_end", "t_end must be at least dt")?;
        check([0, 2, 4].contains(&self.solver.order), "solver.order", "order must be 0, 2 or 4")?;
        check(theta_ok(self.model.theta), "model.theta", "theta must lie in [0, pi/2]")?;
        check(self.bath.temperature >= 0.0, "bath.temperature", "temperature must be >= 0")?;
        check(self.bath.omega_c > 0.0, "bath.omega_c", "omega_c must be positive")?;
        check(self.bath.coupling >= 0.0, "bath.coupling", "coupling must be >= 0")?;
        if let Some(modes) = &self.bath.modes {
            check(modes.iter().all(|m| m.omega > 0.0), "bath.modes", "mode frequencies must be positive")?;
        }
        check(self.solver.fft_n != Some(0), "solver.fft_n", "fft_n must be at least 1")?;
        if let Some(s) = &self.sweep {
            check(s.theta_list.iter().all(|&t| theta_ok(t)), "sweep.theta_list", "theta must lie in [0, pi/2]")?;
            check(s.temperature_list.iter().all(|&t| t >= 0.0), "sweep.temperature_list", "temperature must be >= 0")?;
        }
        if let Some(o) = &self.oracle {
            check(self.bath.modes.is_some(), "bath.modes", "the oracle needs a discrete bath")?;
            check(o.fock_cut >= 2, "oracle.fock_cut", "fock_cut must be >= 2")?;
            check(o.theta_list.iter().all(|&t| theta_ok(t)), "oracle.theta_list", "theta must lie in [0, pi/2]")?;
            check(o.couplings.len() >= 3, "oracle.couplings", "need at least three coupling scales")?;
        }
        if let Some(b) = &self.bcf {
            check(b.t_n_list.iter().all(|&t| t > 0.0 && t <= b.t_ref), "bcf.t_n_list", "grid lengths must lie in (0, t_ref]")?;
        }
        if let Some(b) = &self.bench {
            check(b.repeats >= 1, "bench.repeats", "repeats must be >= 1")?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn steps(&self) -> usize {
        (self.grid.t_end / self.grid.dt).round() as usize
    }

    pub fn spectral_density(&self, temperature: f64) -> Result<SpectralDensity> {
        let sd = match &self.bath.modes {
            Some(m) => SpectralDensity::discrete(m.clone(), temperature)?,
            None => SpectralDensity::ohmic(self.bath.cutoff, self.bath.coupling, self.bath.omega_c, temperature)?,
        };
        Ok(sd)
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}
