use num_complex::Complex64 as C64;

use crate::bath::SpectralDensity;
use crate::error::Result;
use crate::quad;

/// `ρ12(t) / ρ12(0)` for coupling `σz / 2` in the independent-boson model:
/// `e^{-iΩt} exp(-γ(t))` with
///
/// `γ(t) = (1/π) ∫_0^∞ J(ω) coth(ω / 2T) (1 - cos ωt) / ω² dω`,
///
/// a sum `Σ g² coth(ω / 2T) (1 - cos ωt) / ω²` for discrete modes.
pub fn pure_dephasing_coherence(sd: &SpectralDensity, temperature: f64, t: f64) -> Result<C64> {
    let sd = sd.with_temperature(temperature);
    sd.validate()?;
    let omega = 1.0;
    let gamma = if t == 0.0 {
        0.0
    } else if let Some(modes) = &sd.modes {
        modes
            .iter()
            .map(|m| {
                let coth = if temperature == 0.0 { 1.0 } else { 1.0 / (m.omega / (2.0 * temperature)).tanh() };
                m.g * m.g * coth * 2.0 * (0.5 * m.omega * t).sin().powi(2) / (m.omega * m.omega)
            })
            .sum()
    } else {
        let wc = sd.cutoff_freq;
        let top = (100.0 * wc).max(200.0 / t);
        let kernel = |w: f64| 2.0 * (0.5 * w * t).sin().powi(2) / (w * w);
        let body = quad::integrate(
            |w| [sd.noise_spectrum(w).unwrap_or(0.0) * kernel(w)],
            0.0,
            top,
            ((top * t / std::f64::consts::PI) as usize).max(8),
            1e-12,
            2_000_000,
        )?[0];
        // beyond `top` the cosine averages out; ω = top / x maps the rest to (0, 1]
        let tail = quad::integrate(
            |x| {
                if x == 0.0 {
                    [0.0]
                } else {
                    [sd.noise_spectrum(top / x).unwrap_or(0.0) / top]
                }
            },
            0.0,
            1.0,
            8,
            1e-13,
            200_000,
        )?[0];
        (body + tail) / std::f64::consts::PI
    };
    Ok(C64::from_polar((-gamma).exp(), -omega * t))
}
