//! Bath-side functions: spectral densities, thermal spectra, bath correlation
//! functions and timed spectral densities.
//!
//! Units: the system splitting is 1, so frequencies, temperatures and inverse
//! times are all in units of the splitting; `k_B = hbar = 1`.
//!
//! Conventions used throughout:
//!
//! * `C(t) = <B(t) B(0)>`, so `Re C` is the noise kernel and `Im C` the
//!   dissipation kernel.
//! * `C(t) = (1/pi) ∫ S(w) exp(-i w t) dw` over the full real line, where `S` is
//!   the thermal spectrum returned by [`SpectralDensity::thermal_noise_weight`].
//!   `S(w) = J(w) (n(w) + 1)` for `w > 0` and `S(-w) = J(w) n(w)`, so that
//!   `S(-w) / S(w) = exp(-w / T)`.
//! * `Gamma_w(t) = ∫_0^t C(s) exp(i w s) ds`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Frequencies closer than this are treated as the same table entry.
pub const FREQ_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    Drude,
    Exponential,
}

impl Cutoff {
    fn eval(self, omega: f64, omega_c: f64) -> f64 {
        match self {
            Cutoff::Drude => omega_c / (omega_c * omega_c + omega * omega),
            Cutoff::Exponential => (-omega / omega_c).exp(),
        }
    }
}

/// A single bath oscillator: frequency and form factor `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub omega: f64,
    pub g: f64,
}

/// Bath spectral density, either Ohmic with a cutoff or a finite set of modes.
///
/// The Ohmic form is `J(w) = 2 pi lambda^2 w f(w)`. A discrete bath has
/// `J(w) = pi Σ g_i^2 delta(w - w_i)`; when modes are present the continuum
/// fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub coupling: f64,
    pub cutoff: Cutoff,
    pub cutoff_freq: f64,
    pub temperature: f64,
    pub modes: Option<Vec<Mode>>,
}

impl SpectralDensity {
    pub fn ohmic(cutoff: Cutoff, coupling: f64, cutoff_freq: f64, temperature: f64) -> Result<Self> {
        let sd = SpectralDensity {
            coupling,
            cutoff,
            cutoff_freq,
            temperature,
            modes: None,
        };
        sd.validate()?;
        Ok(sd)
    }

    pub fn discrete(modes: Vec<Mode>, temperature: f64) -> Result<Self> {
        let sd = SpectralDensity {
            coupling: 1.0,
            cutoff: Cutoff::Drude,
            cutoff_freq: 1.0,
            temperature,
            modes: Some(modes),
        };
        sd.validate()?;
        Ok(sd)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidParameter {
                name: "temperature",
                reason: format!("must be finite and >= 0, got {}", self.temperature),
            });
        }
        match &self.modes {
            Some(modes) => {
                for m in modes {
                    if !(m.omega > 0.0) || !m.g.is_finite() {
                        return Err(Error::InvalidParameter {
                            name: "modes",
                            reason: format!("mode frequencies must be > 0, got {:?}", m),
                        });
                    }
                }
            }
            None => {
                if !(self.coupling >= 0.0) || !self.coupling.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "coupling",
                        reason: format!("must be >= 0, got {}", self.coupling),
                    });
                }
                if !(self.cutoff_freq > 0.0) || !self.cutoff_freq.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "omega_c",
                        reason: format!("must be > 0, got {}", self.cutoff_freq),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_discrete(&self) -> bool {
        self.modes.is_some()
    }

    /// Same bath with `J` multiplied by `s` (`lambda^2 -> s lambda^2`, `g -> sqrt(s) g`).
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        match &mut out.modes {
            Some(modes) => {
                for m in modes.iter_mut() {
                    m.g *= s.sqrt();
                }
            }
            None => out.coupling *= s,
        }
        out
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        SpectralDensity {
            temperature,
            ..self.clone()
        }
    }

    fn beta(&self) -> f64 {
        1.0 / self.temperature
    }

    fn ohmic_positive(&self, omega: f64) -> f64 {
        2.0 * PI * self.coupling * omega * self.cutoff.eval(omega, self.cutoff_freq)
    }

    /// `J(w)` on the full line. For `w < 0` this is the detailed-balance
    /// extension `exp(w/T) J(-w)`, which vanishes at `T = 0`.
    pub fn spectral_density(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(Error::Domain(format!("non-finite frequency {omega}")));
        }
        if self.is_discrete() {
            return Err(Error::Domain(
                "a discrete bath has no pointwise spectral density".into(),
            ));
        }
        Ok(if omega > 0.0 {
            self.ohmic_positive(omega)
        } else if omega == 0.0 {
            0.0
        } else if self.temperature == 0.0 {
            0.0
        } else {
            (omega * self.beta()).exp() * self.ohmic_positive(-omega)
        })
    }

    /// Full-line thermal spectrum `S(w)` whose Fourier transform is `C(t)`.
    ///
    /// Satisfies `S(-w) = exp(-w/T) S(w)`; `S(w) + S(-w) = J(w) coth(w / 2T)`.
    pub fn thermal_noise_weight(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() {
            return Err(Error::Domain(format!("non-finite frequency {omega}")));
        }
        if self.is_discrete() {
            return Err(Error::Domain(
                "a discrete bath has no pointwise thermal spectrum".into(),
            ));
        }
        let t = self.temperature;
        if omega == 0.0 {
            // lim w -> 0 of 2 pi lambda^2 w f(w) / (1 - exp(-w/T))
            return Ok(2.0 * PI * self.coupling * t * self.cutoff.eval(0.0, self.cutoff_freq));
        }
        let x = omega.abs();
        let j = self.ohmic_positive(x);
        if t == 0.0 {
            return Ok(if omega > 0.0 { j } else { 0.0 });
        }
        let bx = x * self.beta();
        Ok(if omega > 0.0 {
            j / -(-bx).exp_m1()
        } else {
            j / bx.exp_m1()
        })
    }

    /// `J(w) coth(w / 2T)` for `w >= 0`, the symmetric noise spectrum.
    pub fn noise_spectrum(&self, omega: f64) -> Result<f64> {
        let w = omega.abs();
        Ok(self.thermal_noise_weight(w)? + self.thermal_noise_weight(-w)?)
    }

    fn mode_occupation(&self, omega: f64) -> f64 {
        if self.temperature == 0.0 {
            0.0
        } else {
            1.0 / (omega * self.beta()).exp_m1()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Fft,
    Quadrature,
    ClosedFormDiscrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftParams {
    /// Half grid size `N`; the transform has `2N` points.
    pub n_half: usize,
    pub omega_max: f64,
    pub d_omega: f64,
}

/// `C(t_j)` sampled on `t_j = j dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BathCorrelationTable {
    pub dt: f64,
    pub values: Vec<C64>,
    pub fft_params: Option<FftParams>,
    pub provenance: Provenance,
}

impl BathCorrelationTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        (self.values.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn ensure_covers(&self, t: f64) -> Result<()> {
        if self.horizon() + 1e-9 * self.dt < t {
            return Err(Error::GridTooShort {
                covered: self.horizon(),
                requested: t,
            });
        }
        Ok(())
    }

    /// CSV with header `t,re_c,im_c`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,re_c,im_c")?;
        for (j, c) in self.values.iter().enumerate() {
            writeln!(w, "{:e},{:e},{:e}", j as f64 * self.dt, c.re, c.im)?;
        }
        Ok(())
    }
}

/// Smallest power of two `N` with `N dt >= 5000`.
pub fn default_fft_half_size(dt: f64) -> usize {
    let need = (5000.0 / dt).ceil() as usize;
    need.next_power_of_two()
}

/// `C(t_j)` for `j = 0..=N` from the discretised full-line Fourier sum over
/// `w_k = k pi / (N dt)`, `k = -N..=N`.
///
/// Any `N >= 1` is accepted; powers of two are fastest.
pub fn bcf_fft(sd: &SpectralDensity, n_half: usize, dt: f64) -> Result<BathCorrelationTable> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    if n_half == 0 {
        return Err(Error::InvalidParameter {
            name: "fft_n",
            reason: "must be at least 1".into(),
        });
    }
    if let Some(modes) = &sd.modes {
        let values = discrete_bcf(modes, sd, dt, n_half);
        return Ok(BathCorrelationTable {
            dt,
            values,
            fft_params: None,
            provenance: Provenance::ClosedFormDiscrete,
        });
    }
    let size = 2 * n_half;
    let d_omega = PI / (n_half as f64 * dt);
    let mut buf = vec![C64::new(0.0, 0.0); size];
    for k in 0..n_half {
        buf[k] = C64::new(sd.thermal_noise_weight(k as f64 * d_omega)?, 0.0);
    }
    for k in 1..n_half {
        buf[size - k] = C64::new(sd.thermal_noise_weight(-(k as f64) * d_omega)?, 0.0);
    }
    // k = +N and k = -N alias onto the same bin; each carries an end-point half weight
    let w_max = n_half as f64 * d_omega;
    buf[n_half] = C64::new(
        0.5 * (sd.thermal_noise_weight(w_max)? + sd.thermal_noise_weight(-w_max)?),
        0.0,
    );
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(size).process(&mut buf);
    let scale = d_omega / PI;
    let values = buf[..=n_half].iter().map(|c| c * scale).collect();
    Ok(BathCorrelationTable {
        dt,
        values,
        fft_params: Some(FftParams {
            n_half,
            omega_max: w_max,
            d_omega,
        }),
        provenance: Provenance::Fft,
    })
}

/// One row of a BCF convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcfConvergence {
    pub t_n: f64,
    /// `max |C_{t_N}(t) - C_ref(t)|` over `t ≤ min(t_max, t_N)`.
    pub max_abs_diff: f64,
}

/// Compares FFT correlation functions on grids of half-length `t_N` against
/// one with half-length `t_ref`, all at spacing `dt`.
pub fn bcf_convergence(sd: &SpectralDensity, dt: f64, t_ns: &[f64], t_ref: f64, t_max: f64) -> Result<Vec<BcfConvergence>> {
    let half = |t: f64| ((t / dt).round() as usize).max(1);
    if t_ns.iter().any(|&t| t > t_ref) {
        return Err(Error::InvalidParameter {
            name: "t_ref",
            reason: format!("reference length {t_ref} is shorter than a test grid"),
        });
    }
    let reference = bcf_fft(sd, half(t_ref), dt)?;
    t_ns.iter()
        .map(|&t_n| {
            let c = bcf_fft(sd, half(t_n), dt)?;
            let m = c.values.len().min(half(t_max) + 1);
            let max_abs_diff = c.values[..m]
                .iter()
                .zip(&reference.values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            Ok(BcfConvergence { t_n, max_abs_diff })
        })
        .collect()
}

fn discrete_bcf(modes: &[Mode], sd: &SpectralDensity, dt: f64, n: usize) -> Vec<C64> {
    (0..=n)
        .map(|j| discrete_bcf_at(modes, sd, j as f64 * dt))
        .collect()
}

fn discrete_bcf_at(modes: &[Mode], sd: &SpectralDensity, t: f64) -> C64 {
    modes
        .iter()
        .map(|m| {
            let n = sd.mode_occupation(m.omega);
            let g2 = m.g * m.g;
            g2 * ((n + 1.0) * C64::from_polar(1.0, -m.omega * t) + n * C64::from_polar(1.0, m.omega * t))
        })
        .sum()
}

/// `C(t)` by adaptive quadrature of the one-sided integral
/// `(1/pi) ∫_0^∞ J(w) [cos(wt) coth(w/2T) - i sin(wt)] dw`.
///
/// The upper limit is where `J coth` drops below `1e-14`; spectra that never
/// get there (Drude tails) are reported as a quadrature failure.
pub fn bcf_quadrature(sd: &SpectralDensity, t: f64) -> Result<C64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    if let Some(modes) = &sd.modes {
        return Ok(discrete_bcf_at(modes, sd, t));
    }
    const ENVELOPE: f64 = 1e-14;
    const MAX_UPPER: f64 = 1e7;
    let mut upper = sd.cutoff_freq.max(1.0);
    while sd.noise_spectrum(upper)? >= ENVELOPE {
        upper *= 1.5;
        if upper > MAX_UPPER {
            return Err(Error::QuadratureFailed {
                error: sd.noise_spectrum(upper)?,
                evaluations: 0,
            });
        }
    }
    let panels = ((upper * t / PI).ceil() as usize).max(8);
    let f = |w: f64| {
        let s = sd.noise_spectrum(w).unwrap_or(f64::NAN);
        let j = if w == 0.0 { 0.0 } else { sd.ohmic_positive(w) };
        [s * (w * t).cos() / PI, -j * (w * t).sin() / PI]
    };
    let v = quad::integrate(f, 0.0, upper, panels, 1e-10, 20_000_000)?;
    Ok(C64::new(v[0], v[1]))
}

/// Timed spectral densities `Gamma_w(t_j)` and `dGamma_w(t_j)/dw` for a set of
/// frequencies on the grid `t_j = j dt`, `j = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable {
    pub freqs: Vec<f64>,
    pub dt: f64,
    pub n: usize,
    pub gamma: Vec<Vec<C64>>,
    pub dgamma_domega: Vec<Vec<C64>>,
    /// `C(t_j)` the table was integrated from.
    pub bcf: Vec<C64>,
    pub provenance: Provenance,
}

impl GammaTable {
    pub fn index_of(&self, omega: f64) -> Result<usize> {
        self.freqs
            .iter()
            .position(|w| (w - omega).abs() <= FREQ_MATCH_TOL)
            .ok_or(Error::FrequencyNotInTable(omega))
    }

    pub fn grid_index(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let j = x.round();
        if !(t >= 0.0) || (x - j).abs() > 1e-6 || j as usize > self.n {
            return Err(Error::OffGrid(t));
        }
        Ok(j as usize)
    }

    /// The first `n + 1` grid points.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.n {
            return Err(Error::GridTooShort {
                covered: self.n as f64 * self.dt,
                requested: n as f64 * self.dt,
            });
        }
        let cut = |v: &Vec<Vec<C64>>| v.iter().map(|s| s[..=n].to_vec()).collect();
        Ok(GammaTable {
            freqs: self.freqs.clone(),
            dt: self.dt,
            n,
            gamma: cut(&self.gamma),
            dgamma_domega: cut(&self.dgamma_domega),
            bcf: self.bcf[..=n.min(self.bcf.len() - 1)].to_vec(),
            provenance: self.provenance,
        })
    }

    pub fn gamma_at(&self, omega: f64, j: usize) -> Result<C64> {
        Ok(self.gamma[self.index_of(omega)?][j])
    }

    pub fn dgamma_at(&self, omega: f64, j: usize) -> Result<C64> {
        Ok(self.dgamma_domega[self.index_of(omega)?][j])
    }

    pub fn series(&self, omega: f64) -> Result<&[C64]> {
        Ok(&self.gamma[self.index_of(omega)?])
    }

    /// `Gamma_w(t_n)`, used as the stationary value.
    pub fn asymptotic(&self, omega: f64) -> Result<C64> {
        self.gamma_at(omega, self.n)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |j| j as f64 * self.dt)
    }

    /// CSV with header `t,freq,re_gamma,im_gamma`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,freq,re_gamma,im_gamma")?;
        for j in 0..=self.n {
            for (k, f) in self.freqs.iter().enumerate() {
                let g = self.gamma[k][j];
                writeln!(w, "{:e},{:e},{:e},{:e}", j as f64 * self.dt, f, g.re, g.im)?;
            }
        }
        Ok(())
    }
}

fn check_freqs(freqs: &[f64]) -> Result<Vec<f64>> {
    if let Some(w) = freqs.iter().find(|w| !w.is_finite()) {
        return Err(Error::Domain(format!("non-finite frequency {w}")));
    }
    let mut out = freqs.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() <= FREQ_MATCH_TOL);
    Ok(out)
}

/// Cumulative trapezoid of `C(t) exp(i w t)` (and of `i t C(t) exp(i w t)` for
/// the frequency derivative) over the first `n` steps of the table.
pub fn gamma_table(bcf: &BathCorrelationTable, freqs: &[f64], n: usize) -> Result<GammaTable> {
    bcf.ensure_covers(n as f64 * bcf.dt)?;
    let freqs = check_freqs(freqs)?;
    let dt = bcf.dt;
    let c = &bcf.values[..=n];
    let mut gamma = Vec::with_capacity(freqs.len());
    let mut dgamma = Vec::with_capacity(freqs.len());
    for &w in &freqs {
        let mut g = Vec::with_capacity(n + 1);
        let mut dg = Vec::with_capacity(n + 1);
        let mut acc = C64::new(0.0, 0.0);
        let mut dacc = C64::new(0.0, 0.0);
        let f = |j: usize| {
            let t = j as f64 * dt;
            c[j] * C64::from_polar(1.0, w * t)
        };
        g.push(acc);
        dg.push(dacc);
        let mut prev = f(0);
        for j in 1..=n {
            let cur = f(j);
            let t0 = (j - 1) as f64 * dt;
            let t1 = j as f64 * dt;
            acc += 0.5 * dt * (prev + cur);
            dacc += C64::i() * 0.5 * dt * (t0 * prev + t1 * cur);
            g.push(acc);
            dg.push(dacc);
            prev = cur;
        }
        gamma.push(g);
        dgamma.push(dg);
    }
    Ok(GammaTable {
        freqs,
        dt,
        n,
        gamma,
        dgamma_domega: dgamma,
        bcf: c.to_vec(),
        provenance: bcf.provenance,
    })
}

/// `∫_0^t exp(i nu s) ds` and its `nu`-derivative `∫_0^t i s exp(i nu s) ds`.
fn phase_integral(nu: f64, t: f64) -> (C64, C64) {
    let x = nu * t;
    if x.abs() < 1e-4 {
        // series to O(x^4)
        let i = C64::i();
        let v = t * (1.0 + i * x / 2.0 - x * x / 6.0 - i * x * x * x / 24.0);
        let d = i * t * t * (0.5 + i * x / 3.0 - x * x / 8.0 - i * x * x * x / 30.0);
        (v, d)
    } else {
        let e = C64::from_polar(1.0, x);
        let v = (e - 1.0) / (C64::i() * nu);
        let d = t * e / nu - (e - 1.0) / (C64::i() * nu * nu);
        (v, d)
    }
}

/// Exact `C(t_j)` and `Gamma_w(t_j)` for a bath of discrete modes.
pub fn discrete_bath_functions(
    modes: &[Mode],
    temperature: f64,
    dt: f64,
    n: usize,
    freqs: &[f64],
) -> Result<(BathCorrelationTable, GammaTable)> {
    let sd = SpectralDensity::discrete(modes.to_vec(), temperature)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            reason: format!("must be positive, got {dt}"),
        });
    }
    let freqs = check_freqs(freqs)?;
    let values = discrete_bcf(modes, &sd, dt, n);
    let mut gamma = vec![Vec::with_capacity(n + 1); freqs.len()];
    let mut dgamma = vec![Vec::with_capacity(n + 1); freqs.len()];
    for (k, &w) in freqs.iter().enumerate() {
        for j in 0..=n {
            let t = j as f64 * dt;
            let mut g = C64::new(0.0, 0.0);
            let mut dg = C64::new(0.0, 0.0);
            for m in modes {
                let occ = sd.mode_occupation(m.omega);
                let g2 = m.g * m.g;
                let (e1, d1) = phase_integral(w - m.omega, t);
                let (e2, d2) = phase_integral(w + m.omega, t);
                g += g2 * ((occ + 1.0) * e1 + occ * e2);
                dg += g2 * ((occ + 1.0) * d1 + occ * d2);
            }
            gamma[k].push(g);
            dgamma[k].push(dg);
        }
    }
    let table = BathCorrelationTable {
        dt,
        values: values.clone(),
        fft_params: None,
        provenance: Provenance::ClosedFormDiscrete,
    };
    let gt = GammaTable {
        freqs,
        dt,
        n,
        gamma,
        dgamma_domega: dgamma,
        bcf: values,
        provenance: Provenance::ClosedFormDiscrete,
    };
    Ok((table, gt))
}

/// Bath tables for a simulation grid: FFT (or closed form for discrete baths)
/// followed by the timed spectral densities.
pub fn build_tables(
    sd: &SpectralDensity,
    dt: f64,
    n: usize,
    freqs: &[f64],
    fft_half: Option<usize>,
) -> Result<GammaTable> {
    match &sd.modes {
        Some(modes) => Ok(discrete_bath_functions(modes, sd.temperature, dt, n, freqs)?.1),
        None => {
            let n_half = fft_half.unwrap_or_else(|| default_fft_half_size(dt));
            let bcf = bcf_fft(sd, n_half, dt)?;
            gamma_table(&bcf, freqs, n)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bcf_convergence_decreases() {
        let sd = SpectralDensity::ohmic(Cutoff::Exponential, 1.0, 10.0, 1.0).unwrap();
        let rows = bcf_convergence(&sd, 0.02, &[5.0, 50.0, 500.0], 5000.0, 15.0).unwrap();
        assert!(rows.windows(2).all(|w| w[1].max_abs_diff < w[0].max_abs_diff));
        // the kink at w = 0 leaves a dw^2 error: tenfold t_N buys about a hundredfold
        let r = rows[1].max_abs_diff / rows[2].max_abs_diff;
        assert!((30.0..300.0).contains(&r), "{r}");
        assert!(bcf_convergence(&sd, 0.02, &[50.0], 10.0, 15.0).is_err());
    }

    fn drude() -> SpectralDensity {
        SpectralDensity::ohmic(Cutoff::Drude, 1.0, 10.0, 1.0).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let d = drude();
        assert!((d.spectral_density(1.0).unwrap() - 2.0 * PI * 10.0 / 101.0).abs() < 1e-12);
        let e = SpectralDensity::ohmic(Cutoff::Exponential, 1.0, 10.0, 1.0).unwrap();
        assert!((e.spectral_density(1.0).unwrap() - 2.0 * PI * (-0.1f64).exp()).abs() < 1e-12);
        assert_eq!(d.spectral_density(0.0).unwrap(), 0.0);
        assert!(d.spectral_density(f64::NAN).is_err());
    }

    #[test]
    fn zero_temperature_has_no_negative_branch() {
        let d = drude().with_temperature(0.0);
        assert_eq!(d.spectral_density(-2.0).unwrap(), 0.0);
        assert_eq!(d.thermal_noise_weight(-2.0).unwrap(), 0.0);
        assert_eq!(d.thermal_noise_weight(2.0).unwrap(), d.spectral_density(2.0).unwrap());
    }

    #[test]
    fn thermal_weight_matches_bose_form() {
        let d = drude();
        let j = 2.0 * PI * 10.0 / 101.0;
        // S(-1) = J(1) / (e - 1), S(1) = J(1) (1 + 1/(e - 1))
        let n = 1.0 / (1f64.exp() - 1.0);
        assert!((d.thermal_noise_weight(-1.0).unwrap() - j * n).abs() < 1e-13);
        assert!((d.thermal_noise_weight(1.0).unwrap() - j * (n + 1.0)).abs() < 1e-13);
    }

    #[test]
    fn symmetric_noise_limit_at_zero_frequency() {
        // J coth(w / 2T) -> 4 pi lambda^2 T f(0)
        let d = drude();
        let lim = 4.0 * PI * 1.0 * 1.0 / 10.0;
        assert!((d.noise_spectrum(0.0).unwrap() - lim).abs() < 1e-12);
        assert!((d.noise_spectrum(1e-7).unwrap() - lim).abs() < 1e-6);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(SpectralDensity::ohmic(Cutoff::Drude, -0.1, 10.0, 1.0).is_err());
        assert!(SpectralDensity::ohmic(Cutoff::Drude, 1.0, -1.0, 1.0).is_err());
        assert!(SpectralDensity::ohmic(Cutoff::Drude, 1.0, 10.0, -0.5).is_err());
        assert!(SpectralDensity::discrete(vec![Mode { omega: 0.0, g: 0.1 }], 0.0).is_err());
    }

    #[test]
    fn single_mode_bcf_and_quadrature_agree() {
        let modes = vec![Mode { omega: 1.0, g: 0.1 }];
        let sd = SpectralDensity::discrete(modes.clone(), 0.0).unwrap();
        let (bcf, _) = discrete_bath_functions(&modes, 0.0, 0.1, 20, &[0.0]).unwrap();
        assert!((bcf.values[0] - C64::new(0.01, 0.0)).norm() < 1e-15);
        for j in [0usize, 7, 20] {
            let t = j as f64 * 0.1;
            let q = bcf_quadrature(&sd, t).unwrap();
            let exact = 0.01 * C64::new(t.cos(), -t.sin());
            assert!((q - exact).norm() < 1e-15);
            assert!((bcf.values[j] - exact).norm() < 1e-15);
        }
    }

    #[test]
    fn empty_mode_list_is_zero() {
        let (bcf, gt) = discrete_bath_functions(&[], 0.5, 0.1, 10, &[-1.0, 0.0, 1.0]).unwrap();
        assert!(bcf.values.iter().all(|c| c.norm() == 0.0));
        assert!(gt.gamma.iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn single_mode_gamma_closed_form() {
        let modes = vec![Mode { omega: 1.0, g: 0.2 }];
        let (_, gt) = discrete_bath_functions(&modes, 0.0, 0.05, 200, &[-1.0, 0.0, 1.0, 1.5]).unwrap();
        for &w in &[-1.0, 0.0, 1.5] {
            for j in [1usize, 50, 200] {
                let t = j as f64 * 0.05;
                let nu: f64 = w - 1.0;
                let exact = 0.04 * (C64::from_polar(1.0, nu * t) - 1.0) / (C64::i() * nu);
                assert!((gt.gamma_at(w, j).unwrap() - exact).norm() < 1e-14);
            }
        }
        // resonant frequency: t-linear limit
        let g = gt.gamma_at(1.0, 200).unwrap();
        assert!((g - C64::new(0.04 * 10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn gamma_vanishes_at_origin_and_rejects_unknown_frequency() {
        let sd = SpectralDensity::ohmic(Cutoff::Exponential, 1.0, 10.0, 1.0).unwrap();
        let bcf = bcf_fft(&sd, 1 << 12, 0.01).unwrap();
        let gt = gamma_table(&bcf, &[1.0, -1.0, 0.0], 100).unwrap();
        assert_eq!(gt.freqs, vec![-1.0, 0.0, 1.0]);
        for k in 0..3 {
            assert_eq!(gt.gamma[k][0], C64::new(0.0, 0.0));
        }
        assert!(matches!(gt.gamma_at(2.0, 3), Err(Error::FrequencyNotInTable(_))));
        assert!(gamma_table(&bcf, &[f64::INFINITY], 10).is_err());
        assert!(matches!(gamma_table(&bcf, &[0.0], 1 << 13), Err(Error::GridTooShort { .. })));
        assert!(matches!(gt.grid_index(0.005), Err(Error::OffGrid(_))));
        assert_eq!(gt.grid_index(0.5).unwrap(), 50);
    }

    #[test]
    fn drude_tail_quadrature_fails_explicitly() {
        assert!(matches!(bcf_quadrature(&drude(), 0.5), Err(Error::QuadratureFailed { .. })));
    }

    #[test]
    fn default_fft_size() {
        assert_eq!(default_fft_half_size(0.01), 1 << 19);
    }
}
