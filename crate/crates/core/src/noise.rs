//! Composite qubit-frequency noise: spectral models, time-domain synthesis,
//! and spectral estimation from sampled trajectories.
//!
//! Densities are stored one-sided: `psd_eval(f)` for `f > 0` integrates to the
//! variance, `σ² = ∫₀^∞ S(f) df`. The decoherence formulas in
//! [`crate::coherence`] are written for the symmetric two-sided density
//! `S_L(f) = S(f)/2`; [`SpectrumModel::two_sided`] gives that value and
//! [`PowerLaw::from_two_sided`] builds a term from a two-sided amplitude.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::{stream_rng, streams, SimRng};

/// A power-law term `A²/f^β` of the one-sided density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    /// Hz.
    pub amplitude: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn new(amplitude: f64, exponent: f64) -> Self {
        Self {
            amplitude,
            exponent,
        }
    }

    /// Term whose two-sided density is `a²/f^β`, i.e. one-sided `2a²/f^β`.
    pub fn from_two_sided(amplitude: f64, exponent: f64) -> Self {
        Self::new(amplitude * std::f64::consts::SQRT_2, exponent)
    }

    fn eval(&self, f: f64) -> f64 {
        self.amplitude * self.amplitude * f.powf(-self.exponent)
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let a2 = self.amplitude * self.amplitude;
        if (self.exponent - 1.0).abs() < 1e-12 {
            a2 * (hi / lo).ln()
        } else {
            let p = 1.0 - self.exponent;
            a2 * (hi.powf(p) - lo.powf(p)) / p
        }
    }
}

/// Gaussian spectral line, e.g. a nuclear Larmor precession peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralPeak {
    /// Hz.
    pub center: f64,
    /// Hz²/Hz.
    pub height: f64,
    /// Standard deviation of the line shape, Hz.
    pub width: f64,
}

impl SpectralPeak {
    fn eval(&self, f: f64) -> f64 {
        if self.width <= 0.0 {
            return 0.0;
        }
        let u = (f - self.center) / self.width;
        self.height * (-0.5 * u * u).exp()
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        if self.width <= 0.0 {
            return 0.0;
        }
        let s = self.width * std::f64::consts::SQRT_2;
        let erf = statrs::function::erf::erf;
        self.height * self.width * (PI / 2.0).sqrt() * (erf((hi - self.center) / s) - erf((lo - self.center) / s))
    }
}

/// Composite one-sided noise spectrum of the qubit frequency detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumModel {
    #[serde(default)]
    pub power_laws: Vec<PowerLaw>,
    /// Hz²/Hz.
    #[serde(default)]
    pub white_floor: f64,
    #[serde(default)]
    pub peaks: Vec<SpectralPeak>,
    /// Coefficient of an optional `c·f²` term (Hz²/Hz per Hz²).
    #[serde(default)]
    pub rising_coeff: f64,
    /// Standard deviation of a per-realization constant offset, Hz.
    #[serde(default)]
    pub quasi_static_sigma: f64,
    pub f_low: f64,
    pub f_high: f64,
}

impl SpectrumModel {
    /// Empty spectrum over `[f_low, f_high]`.
    pub fn band(f_low: f64, f_high: f64) -> Self {
        Self {
            power_laws: Vec::new(),
            white_floor: 0.0,
            peaks: Vec::new(),
            rising_coeff: 0.0,
            quasi_static_sigma: 0.0,
            f_low,
            f_high,
        }
    }

    pub fn with_power_law(mut self, term: PowerLaw) -> Self {
        self.power_laws.push(term);
        self
    }

    pub fn with_white(mut self, floor: f64) -> Self {
        self.white_floor = floor;
        self
    }

    pub fn with_peak(mut self, peak: SpectralPeak) -> Self {
        self.peaks.push(peak);
        self
    }

    pub fn with_quasi_static(mut self, sigma: f64) -> Self {
        self.quasi_static_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64, field: &str| -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                Err(Error::config(field, format!("must be finite and >= 0, got {v}")))
            } else {
                Ok(())
            }
        };
        if !(self.f_low > 0.0 && self.f_low.is_finite()) {
            return Err(Error::config("f_low", format!("must be > 0, got {}", self.f_low)));
        }
        if !(self.f_high > self.f_low) {
            return Err(Error::config(
                "f_high",
                format!("must exceed f_low ({}), got {}", self.f_low, self.f_high),
            ));
        }
        finite_nonneg(self.white_floor, "white_floor")?;
        finite_nonneg(self.rising_coeff, "rising_coeff")?;
        finite_nonneg(self.quasi_static_sigma, "quasi_static_sigma")?;
        for (i, p) in self.power_laws.iter().enumerate() {
            finite_nonneg(p.amplitude, &format!("power_laws[{i}].amplitude"))?;
            if !(0.0..=3.0).contains(&p.exponent) {
                return Err(Error::config(
                    format!("power_laws[{i}].exponent"),
                    format!("must lie in [0, 3], got {}", p.exponent),
                ));
            }
        }
        for (i, p) in self.peaks.iter().enumerate() {
            finite_nonneg(p.center, &format!("peaks[{i}].center"))?;
            finite_nonneg(p.height, &format!("peaks[{i}].height"))?;
            finite_nonneg(p.width, &format!("peaks[{i}].width"))?;
        }
        Ok(())
    }

    /// One-sided density at `f` (Hz²/Hz), ignoring the band limits.
    pub fn psd_eval(&self, f: f64) -> Result<f64> {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::domain(format!("psd_eval needs f > 0, got {f}")));
        }
        Ok(self.density(f))
    }

    fn smooth_density(&self, f: f64) -> f64 {
        self.power_laws.iter().map(|p| p.eval(f)).sum::<f64>()
            + self.white_floor
            + self.rising_coeff * f * f
    }

    fn density(&self, f: f64) -> f64 {
        self.smooth_density(f) + self.peaks.iter().map(|p| p.eval(f)).sum::<f64>()
    }

    /// One-sided density restricted to `[f_low, f_high]`.
    pub fn band_density(&self, f: f64) -> f64 {
        if f < self.f_low || f > self.f_high {
            0.0
        } else {
            self.density(f)
        }
    }

    /// Symmetric two-sided density `S_L(f) = S(f)/2`.
    pub fn two_sided(&self, f: f64) -> Result<f64> {
        Ok(0.5 * self.psd_eval(f)?)
    }

    /// `∫ S df` over `[lo, hi] ∩ [f_low, f_high]`, excluding the quasi-static offset.
    pub fn band_variance(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.f_low);
        let hi = hi.min(self.f_high);
        if hi <= lo {
            return 0.0;
        }
        self.power_laws.iter().map(|p| p.integral(lo, hi)).sum::<f64>()
            + self.white_floor * (hi - lo)
            + self.rising_coeff * (hi.powi(3) - lo.powi(3)) / 3.0
            + self.peaks.iter().map(|p| p.integral(lo, hi)).sum::<f64>()
    }

    /// Total variance of δf including the quasi-static offset, Hz².
    pub fn variance(&self) -> f64 {
        self.band_variance(self.f_low, self.f_high) + self.quasi_static_sigma.powi(2)
    }

    /// `∫ S(f)·kernel(f) df` over `[lo, hi] ∩ band` for a kernel oscillating with
    /// period `1/t` in `f`. Beyond `TAIL_ZEROS/t` the kernel is replaced by its
    /// cycle average `tail(f)`, which bounds the relative error near `1/(2π⁴·64³)`.
    pub(crate) fn oscillatory_integral<K, T>(&self, lo: f64, hi: f64, t: f64, kernel: K, tail: T) -> f64
    where
        K: Fn(f64) -> f64,
        T: Fn(f64) -> f64,
    {
        const TAIL_ZEROS: f64 = 64.0;
        const PANELS_PER_DECADE: f64 = 12.0;
        const REL_TOL: f64 = 1e-11;
        let lo = lo.max(self.f_low);
        let hi = hi.min(self.f_high);
        if hi <= lo || t <= 0.0 {
            return 0.0;
        }

        let smooth = |f: f64| self.smooth_density(f) * kernel(f);
        let smooth_tail = |f: f64| self.smooth_density(f) * tail(f);

        let mut breaks = vec![lo];
        let first_zero = 1.0 / t;
        let osc_end = (TAIL_ZEROS / t).min(hi);
        // Log panels below the first kernel zero.
        let low_end = first_zero.min(hi);
        if low_end > lo {
            let decades = (low_end / lo).log10();
            let n = (decades * PANELS_PER_DECADE).ceil().max(1.0) as usize;
            breaks.extend(quad::logspace(lo, low_end, n + 1).into_iter().skip(1));
        }
        // One panel per kernel lobe.
        let mut k = (lo * t).floor() + 1.0;
        while k / t < osc_end {
            if k / t > *breaks.last().unwrap() {
                breaks.push(k / t);
            }
            k += 1.0;
        }
        if osc_end > *breaks.last().unwrap() {
            breaks.push(osc_end);
        }
        let mut total = quad::integrate_panels(&smooth, &breaks, REL_TOL);

        let tail_start = osc_end.max(lo);
        if hi > tail_start {
            let decades = (hi / tail_start).log10();
            let n = (decades * PANELS_PER_DECADE).ceil().max(1.0) as usize;
            let tb = quad::logspace(tail_start, hi, n + 1);
            total += quad::integrate_panels(&smooth_tail, &tb, REL_TOL);
        }

        for p in self.peaks.iter().filter(|p| p.width > 0.0 && p.height > 0.0) {
            let a = (p.center - 10.0 * p.width).max(lo);
            let b = (p.center + 10.0 * p.width).min(hi);
            if b <= a {
                continue;
            }
            let lobes = (b - a) * t;
            if lobes > 20_000.0 || a >= TAIL_ZEROS / t {
                let g = |f: f64| p.eval(f) * tail(f);
                total += quad::integrate_panels(&g, &[a, p.center.clamp(a, b), b], REL_TOL);
            } else {
                let g = |f: f64| p.eval(f) * kernel(f);
                let mut pb = vec![a];
                let mut k = (a * t).floor() + 1.0;
                while k / t < b {
                    pb.push(k / t);
                    k += 1.0;
                }
                pb.push(b);
                if p.center > a && p.center < b {
                    pb.push(p.center);
                    pb.sort_by(|x, y| x.partial_cmp(y).unwrap());
                }
                total += quad::integrate_panels(&g, &pb, REL_TOL);
            }
        }
        total
    }

    /// Expected mean squared increment `⟨(δf(t+τ) − δf(t))²⟩ = 2∫S(f)(1 − cos 2πfτ) df`.
    pub fn structure_function(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0) {
            return Err(Error::domain("structure function needs tau > 0"));
        }
        Ok(self.oscillatory_integral(
            self.f_low,
            self.f_high,
            tau,
            |f| 4.0 * (PI * f * tau).sin().powi(2),
            |_| 2.0,
        ))
    }
}

/// A uniformly sampled realization of the detuning `δf(t)` (Hz). Sample `j`
/// holds over `[j·dt, (j+1)·dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub seed: u64,
    pub model_tag: String,
}

impl NoiseTrajectory {
    pub fn new(dt: f64, samples: Vec<f64>, seed: u64, model_tag: impl Into<String>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::domain(format!("trajectory dt must be > 0, got {dt}")));
        }
        if samples.len() < 2 {
            return Err(Error::domain("trajectory needs at least two samples"));
        }
        Ok(Self {
            dt,
            samples,
            seed,
            model_tag: model_tag.into(),
        })
    }

    /// Constant detuning, used for frozen-noise experiments.
    pub fn constant(value: f64, dt: f64, n: usize) -> Self {
        Self {
            dt,
            samples: vec![value; n.max(2)],
            seed: 0,
            model_tag: "constant".into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    /// Sample index covering time `t`, clamped to the trajectory.
    pub fn index_at(&self, t: f64) -> usize {
        let i = (t / self.dt).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.samples.len() - 1)
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.samples[self.index_at(t)]
    }

    /// Mean of the samples covering `[t0, t1)`.
    pub fn mean_over(&self, t0: f64, t1: f64) -> f64 {
        let a = self.index_at(t0);
        let b = self.index_at(t1.max(t0)).max(a);
        let s = &self.samples[a..=b];
        s.iter().sum::<f64>() / s.len() as f64
    }

    pub fn reversed(&self) -> Self {
        let mut r = self.clone();
        r.samples.reverse();
        r
    }
}

/// Frequency-domain synthesizer for one `(model, dt, n)` configuration.
///
/// Each retained Fourier bin `f_k = k/(n·dt)` receives independent Gaussian
/// cosine and sine amplitudes of variance `S(f_k)/(n·dt)`, so the expected
/// periodogram equals the model. Bins outside `[f_low, f_high]` are zero.
pub struct TrajectorySynthesizer {
    dt: f64,
    n: usize,
    bin_sigma: Vec<f64>,
    offset_sigma: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TrajectorySynthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrajectorySynthesizer")
            .field("dt", &self.dt)
            .field("n", &self.n)
            .field("offset_sigma", &self.offset_sigma)
            .finish()
    }
}

impl TrajectorySynthesizer {
    /// When `lump_subband` is set, the band below half the frequency
    /// resolution is folded into the constant offset, which is how per-shot
    /// windows shorter than `1/f_low` keep the full variance.
    pub fn new(model: &SpectrumModel, dt: f64, n: usize, lump_subband: bool) -> Result<Self> {
        model.validate()?;
        if !(dt > 0.0) {
            return Err(Error::config("dt", format!("must be > 0, got {dt}")));
        }
        if n < 2 {
            return Err(Error::config("n", "need at least two samples"));
        }
        let nyquist = 0.5 / dt;
        if nyquist < model.f_high * (1.0 - 1e-12) {
            return Err(Error::config(
                "dt",
                format!(
                    "Nyquist frequency 1/(2dt) = {nyquist:.6e} Hz is below the model f_high = {:.6e} Hz",
                    model.f_high
                ),
            ));
        }
        let df = 1.0 / (n as f64 * dt);
        if df > model.f_low && !lump_subband {
            log::warn!(
                "trajectory length {:.3e} s is shorter than 1/f_low = {:.3e} s; power below {:.3e} Hz is not represented",
                n as f64 * dt,
                1.0 / model.f_low,
                df
            );
        }
        let half = n / 2;
        let bin_sigma: Vec<f64> = (0..=half)
            .map(|k| {
                if k == 0 {
                    return 0.0;
                }
                let f = k as f64 * df;
                (model.band_density(f) * df).sqrt()
            })
            .collect();
        let mut offset_var = model.quasi_static_sigma.powi(2);
        if lump_subband {
            offset_var += model.band_variance(model.f_low, 0.5 * df);
        }
        let fft = FftPlanner::new().plan_fft_inverse(n);
        Ok(Self {
            dt,
            n,
            bin_sigma,
            offset_sigma: offset_var.sqrt(),
            fft,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Standard deviation of the per-realization constant offset.
    pub fn offset_sigma(&self) -> f64 {
        self.offset_sigma
    }

    pub fn draw(&self, rng: &mut SimRng) -> Vec<f64> {
        let n = self.n;
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        let half = n / 2;
        for k in 1..=half {
            let s = self.bin_sigma[k];
            let a: f64 = rng.sample::<f64, _>(StandardNormal) * s;
            let b: f64 = rng.sample::<f64, _>(StandardNormal) * s;
            if s == 0.0 {
                continue;
            }
            if 2 * k == n {
                spec[k] = Complex64::new(a, 0.0);
            } else {
                spec[k] = Complex64::new(0.5 * a, -0.5 * b);
                spec[n - k] = spec[k].conj();
            }
        }
        self.fft.process(&mut spec);
        let offset: f64 = rng.sample::<f64, _>(StandardNormal) * self.offset_sigma;
        spec.into_iter().map(|c| c.re + offset).collect()
    }
}

/// Synthesizes a stationary Gaussian trajectory of `n` samples at spacing `dt`.
/// Deterministic in `(model, dt, n, seed)`.
pub fn synthesize_trajectory(model: &SpectrumModel, dt: f64, n: usize, seed: u64) -> Result<NoiseTrajectory> {
    let synth = TrajectorySynthesizer::new(model, dt, n, false)?;
    let mut rng = stream_rng(seed, streams::TRAJECTORY);
    let samples = synth.draw(&mut rng);
    NoiseTrajectory::new(dt, samples, seed, "synthesized")
}

/// Sampled one-sided PSD estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub frequencies: Vec<f64>,
    pub density: Vec<f64>,
    /// Bin spacing, Hz.
    pub resolution: f64,
    pub segments: usize,
}

impl Psd {
    pub fn integrated_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.resolution
    }

    /// Bins that are the maximum of their `±window` neighbourhood and exceed
    /// the mean of the two window-edge values by `min_ratio`.
    pub fn local_peaks(&self, window: usize, min_ratio: f64) -> Vec<usize> {
        let d = &self.density;
        let mut out = Vec::new();
        if d.len() <= 2 * window {
            return out;
        }
        for k in window..d.len() - window {
            let v = d[k];
            let is_max = d[k - window..=k + window].iter().all(|&x| x <= v);
            let base = 0.5 * (d[k - window] + d[k + window]);
            if is_max && v > min_ratio * base {
                out.push(k);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("f_Hz,S_Hz2_per_Hz\n");
        for (f, v) in self.frequencies.iter().zip(&self.density) {
            s.push_str(&format!("{f:.9e},{v:.9e}\n"));
        }
        s
    }
}

/// Welch estimate: periodic Hann window, 50 % overlap, per-segment mean
/// removal, one-sided density normalization. The DC bin is dropped.
pub fn estimate_psd(traj: &NoiseTrajectory, segment_len: usize) -> Result<Psd> {
    if segment_len < 4 || !segment_len.is_power_of_two() {
        return Err(Error::domain(format!(
            "segment length must be a power of two >= 4, got {segment_len}"
        )));
    }
    if traj.len() < segment_len {
        return Err(Error::domain(format!(
            "trajectory of {} samples is shorter than the segment length {segment_len}",
            traj.len()
        )));
    }
    let n = segment_len;
    let window: Vec<f64> = (0..n)
        .map(|j| 0.5 * (1.0 - (2.0 * PI * j as f64 / n as f64).cos()))
        .collect();
    let w2: f64 = window.iter().map(|w| w * w).sum();
    let fs = 1.0 / traj.dt;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let step = n / 2;
    let half = n / 2;
    let mut acc = vec![0.0; half + 1];
    let mut segments = 0;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut start = 0;
    while start + n <= traj.len() {
        let seg = &traj.samples[start..start + n];
        let m = seg.iter().sum::<f64>() / n as f64;
        for j in 0..n {
            buf[j] = Complex64::new((seg[j] - m) * window[j], 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (fs * w2 * segments as f64);
    let resolution = fs / n as f64;
    let mut frequencies = Vec::with_capacity(half);
    let mut density = Vec::with_capacity(half);
    for (k, a) in acc.iter().enumerate().skip(1) {
        let one_sided = if k == half { 1.0 } else { 2.0 };
        frequencies.push(k as f64 * resolution);
        density.push(one_sided * a * scale);
    }
    Ok(Psd {
        frequencies,
        density,
        resolution,
        segments,
    })
}

/// Mean squared increment of the trajectory at lag `lag` (seconds), rounded
/// to whole samples.
pub fn correlator_variance(traj: &NoiseTrajectory, lag: f64) -> Result<f64> {
    let steps = (lag / traj.dt).round();
    if !(steps >= 1.0) {
        return Err(Error::domain(format!(
            "lag {lag:.3e} s is shorter than the sample spacing {:.3e} s",
            traj.dt
        )));
    }
    let steps = steps as usize;
    if steps >= traj.len() {
        return Err(Error::domain(format!(
            "lag {lag:.3e} s exceeds the trajectory duration {:.3e} s",
            traj.duration()
        )));
    }
    if lag > traj.duration() / 10.0 {
        log::warn!(
            "lag {lag:.3e} s exceeds a tenth of the trajectory; correlator statistics are poor"
        );
    }
    let s = &traj.samples;
    let sum: f64 = s[steps..].iter().zip(s).map(|(b, a)| (b - a).powi(2)).sum();
    Ok(sum / (s.len() - steps) as f64)
}

/// Gyromagnetic ratios γ/2π (Hz/T) of the host nuclei.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GyromagneticRatios {
    pub as75: f64,
    pub ga69: f64,
    pub ga71: f64,
}

impl Default for GyromagneticRatios {
    fn default() -> Self {
        Self {
            as75: 7.29e6,
            ga69: 10.22e6,
            ga71: 12.98e6,
        }
    }
}

/// Larmor precession frequencies `[⁷⁵As, ⁶⁹Ga, ⁷¹Ga]` at total field `b_total` (T).
pub fn derive_larmor_frequencies(b_total: f64, ratios: &GyromagneticRatios) -> Result<[f64; 3]> {
    if !(b_total >= 0.0) || !b_total.is_finite() {
        return Err(Error::domain(format!("field must be >= 0, got {b_total}")));
    }
    Ok([ratios.as75 * b_total, ratios.ga69 * b_total, ratios.ga71 * b_total])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_over_f() -> SpectrumModel {
        SpectrumModel::band(1e3, 1e7).with_power_law(PowerLaw::new(0.6e6, 1.0))
    }

    #[test]
    fn psd_of_power_law_and_floor() {
        let m = one_over_f();
        assert!((m.psd_eval(1e6).unwrap() - 3.6e5).abs() < 1e-6);
        let m = SpectrumModel::band(1.0, 1e8).with_power_law(PowerLaw::new(1.0e6, 1.0));
        assert!((m.psd_eval(1e7).unwrap() - 1e5).abs() < 1e-6);
        let w = SpectrumModel::band(1.0, 10.0).with_white(5.0);
        for f in [0.1, 3.0, 1e9] {
            assert_eq!(w.psd_eval(f).unwrap(), 5.0);
        }
    }

    #[test]
    fn psd_rejects_non_positive_frequency() {
        let m = one_over_f();
        assert!(matches!(m.psd_eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(m.psd_eval(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn two_sided_is_half() {
        let m = SpectrumModel::band(1.0, 1e9).with_power_law(PowerLaw::from_two_sided(0.6e6, 1.0));
        assert!((m.two_sided(2e6).unwrap() - 0.36e12 / 2e6).abs() < 1e-6);
    }

    #[test]
    fn validation_errors_name_fields() {
        let mut m = one_over_f();
        m.power_laws[0].exponent = 3.5;
        match m.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "power_laws[0].exponent"),
            other => panic!("unexpected {other:?}"),
        }
        let mut m = one_over_f();
        m.f_high = 10.0;
        assert!(matches!(m.validate(), Err(Error::Config { field, .. }) if field == "f_high"));
    }

    #[test]
    fn band_variance_matches_quadrature() {
        let m = one_over_f()
            .with_white(3e4)
            .with_peak(SpectralPeak {
                center: 5e6,
                height: 2e6,
                width: 1e5,
            })
            .with_power_law(PowerLaw::new(1e8, 2.0));
        let f = |x: f64| m.band_density(x);
        let br = quad::logspace(m.f_low, m.f_high, 200);
        let mut br = br;
        br.extend([4e6, 5e6, 6e6]);
        br.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let num = quad::integrate_panels(&f, &br, 1e-12);
        let exact = m.band_variance(0.0, f64::INFINITY);
        assert!((num - exact).abs() / exact < 1e-9, "{num} vs {exact}");
    }

    #[test]
    fn nyquist_violation_is_config_error() {
        let m = one_over_f();
        let r = TrajectorySynthesizer::new(&m, 1e-6, 1024, false);
        assert!(matches!(r, Err(Error::Config { field, .. }) if field == "dt"));
    }

    #[test]
    fn synthesis_is_deterministic() {
        let m = one_over_f();
        let a = synthesize_trajectory(&m, 2.5e-8, 4096, 11).unwrap();
        let b = synthesize_trajectory(&m, 2.5e-8, 4096, 11).unwrap();
        let c = synthesize_trajectory(&m, 2.5e-8, 4096, 12).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn tone_has_single_dominant_bin() {
        let dt = 1e-3;
        let n = 1 << 14;
        let f0 = 62.5; // exactly on a bin of the 256-point segment grid
        let a = 0.7;
        let s: Vec<f64> = (0..n).map(|j| a * (2.0 * PI * f0 * j as f64 * dt).cos()).collect();
        let tr = NoiseTrajectory::new(dt, s, 0, "tone").unwrap();
        let psd = estimate_psd(&tr, 256).unwrap();
        let kmax = psd
            .density
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap()
            .0;
        assert!((psd.frequencies[kmax] - f0).abs() < 1e-9);
        let p = psd.integrated_power();
        assert!((p - a * a / 2.0).abs() / (a * a / 2.0) < 0.02, "{p}");
    }

    #[test]
    fn psd_argument_checks() {
        let tr = NoiseTrajectory::constant(0.0, 1.0, 100);
        assert!(estimate_psd(&tr, 100).is_err());
        assert!(estimate_psd(&tr, 128).is_err());
        assert!(estimate_psd(&tr, 64).is_ok());
    }

    #[test]
    fn correlator_of_constant_is_zero() {
        let tr = NoiseTrajectory::constant(3.2e6, 1e-3, 1000);
        for lag in [1e-3, 5e-3, 0.05] {
            assert_eq!(correlator_variance(&tr, lag).unwrap(), 0.0);
        }
        assert!(correlator_variance(&tr, 2.0).is_err());
        assert!(correlator_variance(&tr, 1e-4).is_err());
    }

    #[test]
    fn quasi_static_only_has_zero_increments() {
        let m = SpectrumModel::band(1.0, 10.0).with_quasi_static(2e6);
        let tr = synthesize_trajectory(&m, 0.01, 512, 3).unwrap();
        assert!(tr.samples[0] != 0.0);
        assert_eq!(correlator_variance(&tr, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn larmor_frequencies() {
        let r = GyromagneticRatios::default();
        let f = derive_larmor_frequencies(1.08, &r).unwrap();
        let expect = [7.8732e6, 11.0376e6, 14.0184e6];
        for (a, b) in f.iter().zip(expect) {
            assert!((a - b).abs() < 1.0);
            assert!(*a < 20e6);
        }
        assert_eq!(derive_larmor_frequencies(0.0, &r).unwrap(), [0.0; 3]);
        let g = derive_larmor_frequencies(2.16, &r).unwrap();
        for (a, b) in g.iter().zip(f) {
            assert!((a - 2.0 * b).abs() < 1e-6);
        }
        assert!(derive_larmor_frequencies(-1.0, &r).is_err());
    }
}
