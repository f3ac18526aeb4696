//! Named noise models and device settings for the reference scenarios.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::coherence::sigma_from_t2star;
use crate::error::{Error, Result};
use crate::noise::{derive_larmor_frequencies, GyromagneticRatios, PowerLaw, SpectralPeak, SpectrumModel};

/// Single-shot sequence time of the feedback experiments, s.
pub const SHOT_PERIOD: f64 = 31.71e-6;

/// Purely quasi-static detuning with standard deviation `sigma`. The band
/// carries no dynamic terms; `f_high` only sets the per-shot sampling.
pub fn quasi_static(sigma: f64) -> SpectrumModel {
    SpectrumModel::band(1.0, 1e9).with_quasi_static(sigma)
}

/// Quasi-static detuning giving a Gaussian free decay with `t2star`.
pub fn quasi_static_t2star(t2star: f64) -> Result<SpectrumModel> {
    Ok(quasi_static(sigma_from_t2star(t2star)?))
}

/// `2(2π)^α·∫₀^∞ x^{−1−α}(1 − cos x) dx`: the structure function of a
/// one-sided `C/f^{1+α}` density is this constant times `C·τ^α`.
pub fn structure_constant(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::domain(format!("subdiffusive exponent must lie in (0, 2), got {alpha}")));
    }
    let beta = 1.0 + alpha;
    let integral = PI / (2.0 * gamma(beta) * (PI * (beta - 1.0) / 2.0).sin());
    Ok(2.0 * (2.0 * PI).powf(alpha) * integral)
}

/// Parameters of the subdiffusive Overhauser-like preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subdiffusive {
    /// Correlator exponent `α` (`σ_B² ∝ Δt^α`).
    pub alpha: f64,
    /// Free-running Gaussian dephasing time, s.
    pub t2star_free: f64,
    /// `σ_B²` at `reference_lag`, Hz².
    pub sigma_b2_ref: f64,
    pub reference_lag: f64,
    /// Upper band edge, Hz.
    pub f_high: f64,
}

impl Default for Subdiffusive {
    fn default() -> Self {
        Self {
            alpha: 0.84,
            t2star_free: 28.4e-9,
            sigma_b2_ref: 5e9,
            reference_lag: 10e-3,
            f_high: 0.5 / SHOT_PERIOD,
        }
    }
}

impl Subdiffusive {
    /// One-sided `C/f^{1+α}` with `C` fixed by `σ_B²` at the reference lag
    /// and `f_low` chosen so the total variance gives the free `T₂*`.
    pub fn model(&self) -> Result<SpectrumModel> {
        let k = structure_constant(self.alpha)?;
        let c = self.sigma_b2_ref / (k * self.reference_lag.powf(self.alpha));
        let sigma = sigma_from_t2star(self.t2star_free)?;
        // σ² = ∫_{f_low}^∞ C f^{−1−α} df = C f_low^{−α}/α.
        let f_low = (c / (self.alpha * sigma * sigma)).powf(1.0 / self.alpha);
        if f_low >= self.f_high {
            return Err(Error::config("f_high", "band is empty for this calibration"));
        }
        Ok(SpectrumModel::band(f_low, self.f_high).with_power_law(PowerLaw::new(c.sqrt(), 1.0 + self.alpha)))
    }
}

/// Charge-noise-like two-sided `A²/f` density over `[f_low, f_high]`.
pub fn one_over_f(a: f64, f_low: f64, f_high: f64) -> SpectrumModel {
    SpectrumModel::band(f_low, f_high).with_power_law(PowerLaw::from_two_sided(a, 1.0))
}

/// Driven-decay regime of a high-quality Rabi oscillation: feedback-limited
/// static detuning plus a flat two-sided density around the drive frequency
/// that sets `T₂^rabi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighQRabi {
    pub f_rabi: f64,
    pub t2_rabi: f64,
    pub static_sigma: f64,
}

impl Default for HighQRabi {
    fn default() -> Self {
        Self {
            f_rabi: 33.64e6,
            t2_rabi: 1.26e-6,
            static_sigma: 0.294e6,
        }
    }
}

impl HighQRabi {
    /// Two-sided density at the drive frequency, `1/(π²·T₂^rabi)`.
    pub fn s_two_sided(&self) -> f64 {
        1.0 / (PI * PI * self.t2_rabi)
    }

    pub fn model(&self) -> SpectrumModel {
        SpectrumModel::band(0.5 * self.f_rabi, 2.0 * self.f_rabi)
            .with_white(2.0 * self.s_two_sided())
            .with_quasi_static(self.static_sigma)
    }
}

/// Low-frequency spectrum with a `1/f^1.7` background and the three nuclear
/// Larmor peaks at total field `b_total`.
pub fn larmor_peaks(b_total: f64, f_low: f64, f_high: f64) -> Result<SpectrumModel> {
    let lines = derive_larmor_frequencies(b_total, &GyromagneticRatios::default())?;
    let mut m = SpectrumModel::band(f_low, f_high).with_power_law(PowerLaw::new(1e9, 1.7));
    for f in lines {
        // Height well above the background at each line.
        let bg = 1e18 * f.powf(-1.7);
        m = m.with_peak(SpectralPeak {
            center: f,
            height: 200.0 * bg,
            width: 20e3,
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::t2star_from_sigma;

    #[test]
    fn structure_constant_at_one() {
        // β = 2: ∫(1 − cos x)/x² = π/2, so 2·2π·π/2 = 2π².
        assert!((structure_constant(1.0).unwrap() - 2.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn subdiffusive_calibration() {
        let p = Subdiffusive::default();
        let m = p.model().unwrap();
        let t2 = t2star_from_sigma(m.variance().sqrt()).unwrap();
        assert!((t2 / 28.4e-9 - 1.0).abs() < 1e-3);
        let d = m.structure_function(p.reference_lag).unwrap();
        assert!((d / p.sigma_b2_ref - 1.0).abs() < 0.01, "{d}");
    }

    #[test]
    fn high_q_density() {
        let p = HighQRabi::default();
        assert!((p.s_two_sided() / 8.041e4 - 1.0).abs() < 1e-3);
        assert!((p.model().two_sided(p.f_rabi).unwrap() - p.s_two_sided()).abs() < 1e-6);
    }
}
