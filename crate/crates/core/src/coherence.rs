//! Closed-form decoherence envelopes, decay fitting, and the inversion from
//! Rabi decay rates back to noise spectral density.
//!
//! Spectra are stored one-sided (`σ² = ∫₀^∞ S df`). Quantities written in
//! terms of the two-sided density `S_L = S/2` say so explicitly: the
//! rotating-frame rate `Γ_ν = 2π²·S_L(f_R)` and the extracted value of
//! [`extract_s_at_frabi`] are two-sided.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::noise::SpectrumModel;

/// Options shared by the envelope functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeOptions {
    /// The static/high-frequency split sits at `split_factor / t`.
    pub split_factor: f64,
    /// Include the high-frequency factor in the free-evolution envelope.
    pub include_high: bool,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            split_factor: 1.0,
            include_high: false,
        }
    }
}

fn sinc2_kernel(t: f64) -> impl Fn(f64) -> f64 {
    move |f: f64| {
        let x = PI * f * t;
        if x.abs() < 1e-8 {
            1.0
        } else {
            (x.sin() / x).powi(2)
        }
    }
}

fn check_model(model: &SpectrumModel) -> Result<()> {
    if !(model.f_low > 0.0) && model.power_laws.iter().any(|p| p.exponent >= 1.0 && p.amplitude > 0.0) {
        return Err(Error::domain(
            "the phase-noise integral diverges at low frequency; set an explicit f_low > 0",
        ));
    }
    model.validate()
}

/// `2π²t²·∫_lo^hi S(f) sinc²(πft) df` (one-sided), the exponent of the
/// dephasing factor restricted to a band.
fn dephasing_exponent(model: &SpectrumModel, lo: f64, hi: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let integral = model.oscillatory_integral(lo, hi, t, sinc2_kernel(t), |f| 1.0 / (2.0 * (PI * f * t).powi(2)));
    2.0 * PI * PI * t * t * integral
}

/// `W(t) = exp(−(t²/2)(2π)²[σ_qs² + ∫ S(f) sinc²(πft) df])` over the full
/// model band.
pub fn decoherence_function(model: &SpectrumModel, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("decoherence function needs t >= 0, got {t}")));
    }
    check_model(model)?;
    let qs = 2.0 * PI * PI * t * t * model.quasi_static_sigma.powi(2);
    Ok((-(qs + dephasing_exponent(model, model.f_low, model.f_high, t))).exp())
}

/// Variance of the noise treated as static over an evolution of length `t`:
/// the quasi-static part plus the band below `split_factor/t`.
pub fn static_variance(model: &SpectrumModel, t: f64, split_factor: f64) -> f64 {
    let split = if t > 0.0 { split_factor / t } else { f64::INFINITY };
    model.quasi_static_sigma.powi(2) + model.band_variance(model.f_low, split)
}

/// Free-evolution envelope `W_static·W_high·exp(−Γ₁t/2)`, with `W_static`
/// Gaussian in the static variance and `W_high` the dephasing factor of the
/// band above `split_factor/t` (unity unless `include_high`).
pub fn free_decay_envelope(model: &SpectrumModel, gamma1: f64, t: f64, opts: EnvelopeOptions) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("envelope needs t >= 0, got {t}")));
    }
    check_model(model)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    let var = static_variance(model, t, opts.split_factor);
    let w_static = (-0.5 * (2.0 * PI * t).powi(2) * var).exp();
    let w_high = if opts.include_high {
        (-dephasing_exponent(model, opts.split_factor / t, model.f_high, t)).exp()
    } else {
        1.0
    };
    Ok(w_static * w_high * (-0.5 * gamma1 * t).exp())
}

/// `T₂* = 1/(π√2·σ)`.
pub fn t2star_from_sigma(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(1.0 / (PI * 2f64.sqrt() * sigma))
}

pub fn sigma_from_t2star(t2star: f64) -> Result<f64> {
    if !(t2star > 0.0) {
        return Err(Error::domain(format!("T2* must be > 0, got {t2star}")));
    }
    Ok(1.0 / (PI * 2f64.sqrt() * t2star))
}

/// Relaxation rates in the frame of the driven spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatingFrameRates {
    /// Tilt of the effective field from z, rad.
    pub eta: f64,
    pub f_r: f64,
    pub gamma1: f64,
    pub gamma_nu: f64,
    pub gamma1_tilde: f64,
    pub gamma_phi_tilde: f64,
    pub gamma2_tilde: f64,
}

/// Rotating-frame rates for drive `f_rabi`, detuning `delta_q` and the
/// two-sided longitudinal density `s_l_at_fr` at the Rabi frequency.
pub fn rotating_frame_rates(f_rabi: f64, delta_q: f64, gamma1: f64, s_l_at_fr: f64) -> Result<RotatingFrameRates> {
    if !(f_rabi > 0.0) {
        return Err(Error::domain(format!("f_rabi must be > 0, got {f_rabi}")));
    }
    if !(gamma1 >= 0.0) || !(s_l_at_fr >= 0.0) {
        return Err(Error::domain("rates and densities must be >= 0"));
    }
    // atan2 keeps η in (0, π) for either sign of the detuning.
    let eta = f_rabi.atan2(delta_q);
    let sin2 = eta.sin().powi(2);
    let cos2 = 1.0 - sin2;
    let gamma_nu = 2.0 * PI * PI * s_l_at_fr;
    let gamma1_tilde = sin2 * gamma_nu + 0.5 * (1.0 + cos2) * gamma1;
    let gamma_phi_tilde = 0.5 * gamma1 * sin2;
    Ok(RotatingFrameRates {
        eta,
        f_r: f_rabi.hypot(delta_q),
        gamma1,
        gamma_nu,
        gamma1_tilde,
        gamma_phi_tilde,
        gamma2_tilde: 0.5 * gamma1_tilde + gamma_phi_tilde,
    })
}

/// Power-law envelope of resonant Rabi oscillations averaged over a
/// Gaussian static detuning: `[1 + (2πσ²t/f_rabi)²]^(−1/4)`.
pub fn rabi_static_envelope(sigma: f64, f_rabi: f64, t: f64) -> Result<f64> {
    if !(f_rabi > 0.0) {
        return Err(Error::domain(format!("f_rabi must be > 0, got {f_rabi}")));
    }
    let x = 2.0 * PI * sigma * sigma * t / f_rabi;
    Ok((1.0 + x * x).powf(-0.25))
}

/// 1/e time `f_rabi/(πσ²)` of the Gaussian that matches the static envelope
/// at short times, where `[1 + x²]^(−1/4) ≈ exp(−x²/4)`.
pub fn rabi_static_gaussian_time(sigma: f64, f_rabi: f64) -> Result<f64> {
    if !(f_rabi > 0.0) || !(sigma > 0.0) {
        return Err(Error::domain("sigma and f_rabi must be > 0"));
    }
    Ok(f_rabi / (PI * sigma * sigma))
}

/// Zero-detuning Rabi envelope `W_static·exp(−(¾Γ₁ + ½Γ_ν)t)`.
pub fn rabi_zero_detuning_envelope(sigma: f64, f_rabi: f64, gamma1: f64, gamma_nu: f64, t: f64) -> Result<f64> {
    Ok(rabi_static_envelope(sigma, f_rabi, t)? * (-(0.75 * gamma1 + 0.5 * gamma_nu) * t).exp())
}

/// Static-noise factor of a detuned Rabi oscillation. Expanding
/// `f_R(Δ + δ) ≈ f_R + δ·cos η + δ²·sin²η/(2f_R)` and averaging over Gaussian
/// `δ` gives the magnitude
/// `(1 + b²)^(−1/4)·exp(−a²/(2(1 + b²)))` with `b = 2πσ²t·sin²η/f_R` and
/// `a = 2πσt·cos η`, which is the power law on resonance and the Gaussian
/// free-evolution form far off resonance.
fn rabi_static_general(var: f64, eta: f64, f_r: f64, t: f64) -> f64 {
    let b = 2.0 * PI * var * t * eta.sin().powi(2) / f_r;
    let a2 = (2.0 * PI * t * eta.cos()).powi(2) * var;
    let d = 1.0 + b * b;
    d.powf(-0.25) * (-0.5 * a2 / d).exp()
}

/// General Rabi envelope `W_static_rabi·W_high_rabi·exp(−Γ̃₂t)` at detuning
/// `delta_q`. `W_high_rabi` uses `S·cos²η` above `split_factor/t`; `Γ_ν`
/// uses the model at `f_R`.
pub fn rabi_envelope_general(
    model: &SpectrumModel,
    gamma1: f64,
    f_rabi: f64,
    delta_q: f64,
    t: f64,
    opts: EnvelopeOptions,
) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("envelope needs t >= 0, got {t}")));
    }
    check_model(model)?;
    let f_r = f_rabi.hypot(delta_q);
    let s_two = model.band_density(f_r) / 2.0;
    let rates = rotating_frame_rates(f_rabi, delta_q, gamma1, s_two)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    let var = static_variance(model, t, opts.split_factor);
    let w_static = rabi_static_general(var, rates.eta, f_r, t);
    let cos2 = rates.eta.cos().powi(2);
    let w_high = if cos2 > 0.0 {
        (-cos2 * dephasing_exponent(model, opts.split_factor / t, model.f_high, t)).exp()
    } else {
        1.0
    };
    Ok(w_static * w_high * (-rates.gamma2_tilde * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    /// `exp(−(t/τ)²)`
    Gaussian,
    /// `exp(−t/τ)`
    Exponential,
    /// `[1 + (t/τ)²]^(−1/4)`
    PowerLawQuarter,
    /// `A·p^m + B` over sequence length `m`; `timescale = −1/ln p`.
    RbExponential,
}

impl DecayKind {
    pub fn name(&self) -> &'static str {
        match self {
            DecayKind::Gaussian => "gaussian",
            DecayKind::Exponential => "exponential",
            DecayKind::PowerLawQuarter => "power_law_quarter",
            DecayKind::RbExponential => "rb_exponential",
        }
    }

    fn envelope(&self, t: f64, tau: f64) -> f64 {
        let x = t / tau;
        match self {
            DecayKind::Gaussian => (-x * x).exp(),
            DecayKind::Exponential | DecayKind::RbExponential => (-x).exp(),
            DecayKind::PowerLawQuarter => (1.0 + x * x).powf(-0.25),
        }
    }
}

/// Fitted damped oscillation `offset + amplitude·cos(2πft + φ)·env(t)`, or
/// for [`DecayKind::RbExponential`] the decay `A·p^m + B` with
/// `amplitude = A`, `offset = B`, `decay_base = p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub kind: DecayKind,
    pub frequency: f64,
    pub frequency_stderr: f64,
    pub timescale: f64,
    pub timescale_stderr: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub phase: f64,
    /// Covariance of the raw fit parameters: `[offset, c, s, f, ln τ]` for an
    /// oscillation, `[offset, c, ln τ]` for a trace with less than one cycle
    /// (fitted with `f = 0`), `[A, p, B]` for RB.
    pub covariance: DMatrix<f64>,
    pub rms_residual: f64,
    /// Set when the trace carries no resolvable signal.
    pub degenerate: bool,
    pub decay_base: Option<f64>,
    /// Standard deviation of the static detuning whose power-law factor was
    /// divided out of the envelope, if any.
    pub static_sigma: Option<f64>,
    pub restarts: usize,
}

impl DecayFit {
    pub fn rate(&self) -> f64 {
        1.0 / self.timescale
    }

    /// `Q = 2·f·τ`.
    pub fn quality_factor(&self) -> f64 {
        2.0 * self.frequency * self.timescale
    }

    pub fn csv_header() -> &'static str {
        "model,f_Hz,timescale_s,amplitude,offset,rms_residual"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            self.kind.name(),
            self.frequency,
            self.timescale,
            self.amplitude,
            self.offset,
            self.rms_residual
        )
    }
}

const MAX_RESTARTS: usize = 8;

/// Lomb-style periodogram peak of `y − mean(y)` below the Nyquist frequency
/// of the median sample spacing. Returns `(f_peak, amplitude)`.
fn periodogram_peak(t: &[f64], y: &[f64], exclude: Option<f64>) -> (f64, f64) {
    let n = t.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut gaps: Vec<f64> = t.windows(2).map(|w| (w[1] - w[0]).abs()).filter(|d| *d > 0.0).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let span = t.iter().cloned().fold(f64::MIN, f64::max) - t.iter().cloned().fold(f64::MAX, f64::min);
    if gaps.is_empty() || span <= 0.0 {
        return (0.0, 0.0);
    }
    let nyquist = 0.5 / gaps[gaps.len() / 2];
    let df = 0.25 / span;
    let steps = ((nyquist / df).ceil() as usize).clamp(1, 20_000);
    let mut best = (0.0, 0.0);
    for k in 0..=steps {
        let f = k as f64 * nyquist / steps as f64;
        if let Some(ex) = exclude {
            if (f - ex).abs() < 2.0 / span {
                continue;
            }
        }
        let (mut c, mut s) = (0.0, 0.0);
        for i in 0..n {
            let ph = 2.0 * PI * f * t[i];
            c += (y[i] - mean) * ph.cos();
            s += (y[i] - mean) * ph.sin();
        }
        let amp = 2.0 * c.hypot(s) / n as f64;
        if amp > best.1 {
            best = (f, amp);
        }
    }
    best
}

/// First time the running oscillation amplitude falls below `1/e` of its
/// initial value; falls back to half the span.
fn first_e_crossing(t: &[f64], y: &[f64], f: f64) -> f64 {
    let n = t.len();
    let t0 = t[0];
    let span = t[n - 1] - t0;
    let window = if f > 0.0 { (1.0 / f).min(span / 4.0) } else { span / 8.0 };
    let mean = y.iter().sum::<f64>() / n as f64;
    let local = |i: usize| {
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for j in 0..n {
            if (t[j] - t[i]).abs() <= 0.5 * window {
                lo = lo.min(y[j]);
                hi = hi.max(y[j]);
            }
        }
        if f > 0.0 {
            0.5 * (hi - lo)
        } else {
            (y[i] - mean).abs()
        }
    };
    let a0 = local(0);
    if a0 <= 0.0 {
        return 0.5 * span;
    }
    (1..n)
        .find(|&i| local(i) < a0 / std::f64::consts::E)
        .map_or(0.5 * span, |i| (t[i] - t0).max(span / n as f64))
}

/// Fits a damped oscillation (or an RB decay) to `points = (t, P)`. A trace
/// whose periodogram peak lies below one cycle per span is fitted as a plain
/// decay with `frequency = 0`.
pub fn fit_decay(points: &[(f64, f64)], kind: DecayKind) -> Result<DecayFit> {
    fit_decay_with_prefactor(points, kind, None)
}

/// As [`fit_decay`], with the envelope multiplied by the known resonant
/// static factor `[1 + (2πσ²t/f)²]^(−1/4)` evaluated at the fitted frequency,
/// so that the fitted timescale describes the remaining decay only.
pub fn fit_decay_with_prefactor(points: &[(f64, f64)], kind: DecayKind, static_sigma: Option<f64>) -> Result<DecayFit> {
    if points.len() < 10 {
        return Err(Error::domain(format!("fit needs at least 10 points, got {}", points.len())));
    }
    if points.iter().any(|(t, p)| !t.is_finite() || !p.is_finite()) {
        return Err(Error::domain("trace contains non-finite values"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (t, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    if kind == DecayKind::RbExponential {
        return fit_rb(&t, &y);
    }
    let n = t.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let spread = y.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let span = t[n - 1] - t[0];
    if spread < 1e-12 || span <= 0.0 {
        return Ok(DecayFit {
            kind,
            frequency: 0.0,
            frequency_stderr: 0.0,
            timescale: span.max(f64::MIN_POSITIVE),
            timescale_stderr: f64::INFINITY,
            amplitude: 0.0,
            offset: mean,
            phase: 0.0,
            covariance: DMatrix::zeros(5, 5),
            rms_residual: (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt(),
            degenerate: true,
            decay_base: None,
            static_sigma,
            restarts: 0,
        });
    }

    let (f_peak, amp_peak) = periodogram_peak(&t, &y, None);
    // Less than one cycle over the trace: fit a plain decay with f = 0.
    let oscillating = f_peak * span >= 1.0;
    let expand = |q: &[f64]| -> [f64; 5] {
        if oscillating {
            [q[0], q[1], q[2], q[3], q[4]]
        } else {
            [q[0], q[1], 0.0, 0.0, q[2]]
        }
    };
    let model = |q: &[f64], ti: f64| {
        let p = expand(q);
        let tau = p[4].exp();
        let ph = 2.0 * PI * p[3] * ti;
        let mut env = kind.envelope(ti, tau);
        if let (Some(sig), true) = (static_sigma, oscillating) {
            let x = 2.0 * PI * sig * sig * ti / p[3].abs().max(1e-300);
            env *= (1.0 + x * x).powf(-0.25);
        }
        p[0] + (p[1] * ph.cos() + p[2] * ph.sin()) * env
    };
    let residuals = |p: &[f64], r: &mut [f64]| {
        for i in 0..n {
            r[i] = model(p, t[i]) - y[i];
        }
    };

    let tau0 = first_e_crossing(&t, &y, f_peak).max(span / n as f64);
    let (f_alt, _) = periodogram_peak(&t, &y, Some(f_peak));
    let mut starts: Vec<(f64, f64)> = vec![(f_peak, tau0)];
    for (k, scale) in [3.0, 0.3, 10.0, 0.1, 1.0, 30.0, 0.03].iter().enumerate() {
        let f = if k == 4 { f_alt } else { f_peak };
        starts.push((f, tau0 * scale));
    }
    let tail = &y[n - (n / 5).max(1)..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;

    let mut best: Option<(crate::fit::LmResult, usize)> = None;
    let mut last_cost = f64::INFINITY;
    for (attempt, (f0, tau)) in starts.iter().enumerate().take(MAX_RESTARTS + 1) {
        let x0: Vec<f64> = if oscillating {
            // Phase seed from a linear projection at the trial frequency.
            let (mut c, mut s) = (0.0, 0.0);
            for i in 0..n {
                let ph = 2.0 * PI * f0 * t[i];
                c += (y[i] - mean) * ph.cos();
                s += (y[i] - mean) * ph.sin();
            }
            let norm = c.hypot(s).max(1e-300);
            let a = amp_peak.max(spread * 0.5);
            vec![mean, a * c / norm, a * s / norm, *f0, tau.ln()]
        } else {
            vec![tail_mean, y[0] - tail_mean, tau.ln()]
        };
        let Ok(res) = levenberg_marquardt(residuals, &x0, n, LmOptions::default()) else {
            continue;
        };
        last_cost = res.ssr;
        if !res.params.iter().all(|v| v.is_finite()) {
            continue;
        }
        let better = best.as_ref().is_none_or(|(b, _)| res.ssr < b.ssr);
        if better {
            best = Some((res, attempt));
        }
        // Accept early once a converged fit explains the trace well.
        if let Some((b, _)) = &best {
            let resid_var = b.ssr / n as f64;
            let total_var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            if b.converged && resid_var < 0.25 * total_var {
                break;
            }
        }
    }
    let Some((res, restarts)) = best else {
        return Err(Error::Fit {
            reason: format!("{} fit did not converge", kind.name()),
            restarts: MAX_RESTARTS,
            last_cost,
        });
    };
    let (i_f, i_tau) = if oscillating { (3, 4) } else { (usize::MAX, 2) };
    let p = expand(&res.params);
    let (mut c, mut s, mut f) = (p[1], p[2], p[3]);
    if f < 0.0 {
        f = -f;
        s = -s;
    }
    if f == 0.0 {
        c = c.hypot(s).copysign(c);
        s = 0.0;
    }
    let tau = p[4].exp();
    Ok(DecayFit {
        kind,
        frequency: f,
        frequency_stderr: if oscillating { res.stderr(i_f) } else { 0.0 },
        timescale: tau,
        timescale_stderr: tau * res.stderr(i_tau),
        amplitude: c.hypot(s),
        offset: p[0],
        phase: (-s).atan2(c),
        covariance: res.covariance.clone(),
        rms_residual: (res.ssr / n as f64).sqrt(),
        degenerate: false,
        decay_base: None,
        static_sigma,
        restarts,
    })
}

fn fit_rb(m: &[f64], y: &[f64]) -> Result<DecayFit> {
    let n = m.len();
    let b0 = y[n - 1];
    let a0 = y[0] - b0;
    let span = m[n - 1] - m[0];
    let mut best: Option<crate::fit::LmResult> = None;
    let mut last_cost = f64::INFINITY;
    for p0 in [0.99, 0.95, 0.999, 0.9, 0.8, 0.9999] {
        let x0 = [if a0.abs() > 1e-6 { a0 } else { 0.5 }, p0, b0];
        let r = levenberg_marquardt(
            |p, r| {
                for i in 0..n {
                    r[i] = p[0] * p[1].powf(m[i]) + p[2] - y[i];
                }
            },
            &x0,
            n,
            LmOptions::default(),
        );
        if let Ok(res) = r {
            last_cost = res.ssr;
            if res.params[1] > 0.0 && res.params[1] <= 1.0 + 1e-9 && best.as_ref().is_none_or(|b| res.ssr < b.ssr) {
                best = Some(res);
            }
        }
    }
    let res = best.ok_or(Error::Fit {
        reason: "rb_exponential fit did not converge".into(),
        restarts: MAX_RESTARTS,
        last_cost,
    })?;
    let p = res.params[1].min(1.0);
    let timescale = if p < 1.0 { -1.0 / p.ln() } else { f64::INFINITY };
    Ok(DecayFit {
        kind: DecayKind::RbExponential,
        frequency: 0.0,
        frequency_stderr: 0.0,
        timescale: if timescale.is_finite() { timescale } else { span.max(1.0) * 1e12 },
        timescale_stderr: res.stderr(1) / (p * p.ln().powi(2)).max(1e-300),
        amplitude: res.params[0],
        offset: res.params[2],
        phase: 0.0,
        covariance: res.covariance.clone(),
        rms_residual: (res.ssr / n as f64).sqrt(),
        degenerate: false,
        decay_base: Some(p),
        static_sigma: None,
        restarts: 0,
    })
}

/// One point of the inverted spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyPoint {
    pub f_rabi: f64,
    /// Two-sided density, Hz²/Hz.
    pub s: f64,
    pub rate: f64,
    /// Set when `Γ ≤ ¾Γ₁` and the value was floored.
    pub relaxation_limited: bool,
}

/// Fits a zero-detuning Rabi trace with an exponential envelope after the
/// power-law factor of the static variance `σ²` is divided out.
pub fn fit_rabi_decay(points: &[(f64, f64)], sigma: f64) -> Result<DecayFit> {
    fit_decay_with_prefactor(points, DecayKind::Exponential, Some(sigma))
}

/// Two-sided `S(f_rabi) = (Γ − ¾Γ₁)/π²` from the exponential rate of a
/// zero-detuning fit.
pub fn extract_s_at_frabi(fit: &DecayFit, gamma1: f64) -> Result<SpectroscopyPoint> {
    if fit.kind != DecayKind::Exponential {
        return Err(Error::domain("spectral extraction needs an exponential-kind fit"));
    }
    let rate = fit.rate();
    let excess = rate - 0.75 * gamma1;
    let relaxation_limited = excess <= 0.0;
    if relaxation_limited {
        log::warn!(
            "decay rate {rate:.4e} 1/s does not exceed 3/4 Γ₁ = {:.4e} 1/s; S floored at 0",
            0.75 * gamma1
        );
    }
    Ok(SpectroscopyPoint {
        f_rabi: fit.frequency,
        s: excess.max(0.0) / (PI * PI),
        rate,
        relaxation_limited,
    })
}

pub fn spectroscopy_csv(points: &[SpectroscopyPoint]) -> String {
    let mut s = String::from("f_rabi_Hz,S_Hz2_per_Hz\n");
    for p in points {
        s.push_str(&format!("{:.9e},{:.9e}\n", p.f_rabi, p.s));
    }
    s
}

fn log_ratio(fc: f64, t: f64) -> Result<f64> {
    if !(fc > 0.0) || !(t > 0.0) {
        return Err(Error::domain("f_c and t must be > 0"));
    }
    if fc * t >= 1.0 {
        return Err(Error::domain(format!(
            "f_c·t = {:.3e} must be < 1 for a 1/f static variance",
            fc * t
        )));
    }
    let l = (1.0 / (fc * t)).ln();
    if l < 0.1 {
        log::warn!("f_c·t = {:.4} is close to 1; the 1/f calibration is out of its validity range", fc * t);
    }
    Ok(l)
}

/// Amplitude `A` of a two-sided `A²/|f|` spectrum from a Gaussian `T₂*`
/// measured around time `t` with low cutoff `f_c`.
pub fn calibrate_a_from_t2star(t2star: f64, fc: f64, t: f64) -> Result<f64> {
    if !(t2star > 0.0) {
        return Err(Error::domain("T2* must be > 0"));
    }
    Ok(1.0 / (2.0 * PI * t2star * log_ratio(fc, t)?.sqrt()))
}

/// Static variance `2A²·ln(1/(f_c t))` of a two-sided `A²/|f|` spectrum.
pub fn sigma2_band(a: f64, fc: f64, t: f64) -> Result<f64> {
    Ok(2.0 * a * a * log_ratio(fc, t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::PowerLaw;

    #[test]
    fn t2star_values() {
        assert!((t2star_from_sigma(0.294e6).unwrap() * 1e9 - 765.6).abs() < 0.1);
        assert!((t2star_from_sigma(0.288e6).unwrap() * 1e9 - 781.5).abs() < 0.2);
        assert!(t2star_from_sigma(0.0).is_err());
        assert!(sigma_from_t2star(-1.0).is_err());
    }

    #[test]
    fn white_noise_gives_exponential() {
        let s0 = 2.0e5;
        let m = SpectrumModel::band(1e-6, 1e18).with_white(s0);
        for t in [1e-9, 1e-7, 1e-5] {
            let w = decoherence_function(&m, t).unwrap();
            let expect = (-PI * PI * s0 * t).exp();
            assert!(((w.ln() - expect.ln()) / expect.ln()).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn divergent_spectrum_needs_cutoff() {
        let mut m = SpectrumModel::band(1.0, 1e9).with_power_law(PowerLaw::new(1e12, 1.0));
        m.f_low = 0.0;
        assert!(matches!(decoherence_function(&m, 1e-6), Err(Error::Domain(_))));
    }

    #[test]
    fn rates_on_resonance() {
        let r = rotating_frame_rates(1e6, 0.0, 100.0, 1.0).unwrap();
        assert!((r.eta - PI / 2.0).abs() < 1e-15);
        assert!((r.gamma_nu - 2.0 * PI * PI).abs() < 1e-12);
        assert!((r.gamma2_tilde - (75.0 + r.gamma_nu / 2.0)).abs() < 1e-10);
    }

    #[test]
    fn static_envelope_closed_form() {
        let f = 10e6;
        let sigma = 0.3e6;
        let t = f / (2.0 * PI * sigma * sigma);
        assert!((rabi_static_envelope(sigma, f, t).unwrap() - 2f64.powf(-0.25)).abs() < 1e-14);
        assert_eq!(rabi_static_envelope(sigma, f, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn calibration_values() {
        let a = calibrate_a_from_t2star(103.7e-9, 500.0, 100e-9).unwrap();
        assert!((a - 0.4877e6).abs() < 1e3);
        let s2 = sigma2_band(0.5e6, 500.0, 2e-6).unwrap();
        assert!((s2 - 3.454e12).abs() < 0.01e12);
        assert!(calibrate_a_from_t2star(1e-7, 1e3, 1e-3).is_err());
    }

    #[test]
    fn gaussian_fit_recovers_t2star() {
        let t2 = 120e-9;
        let pts: Vec<(f64, f64)> = (0..150)
            .map(|i| {
                let t = i as f64 * 2e-9;
                (t, 0.6 + 0.3 * (2.0 * PI * 50e6 * t + 0.2).cos() * (-(t / t2).powi(2)).exp())
            })
            .collect();
        let f = fit_decay(&pts, DecayKind::Gaussian).unwrap();
        assert!((f.timescale / t2 - 1.0).abs() < 1e-6);
        assert!((f.frequency - 50e6).abs() < 1.0);
        assert!((f.amplitude - 0.3).abs() < 1e-6);
        assert!((f.phase - 0.2).abs() < 1e-6);
    }

    #[test]
    fn non_oscillating_gaussian() {
        let t2 = 700e-9;
        let pts: Vec<(f64, f64)> = (0..150)
            .map(|i| {
                let t = i as f64 * 20e-9;
                (t, 0.29 + 0.67 * (-(t / t2).powi(2)).exp())
            })
            .collect();
        let f = fit_decay(&pts, DecayKind::Gaussian).unwrap();
        assert_eq!(f.frequency, 0.0);
        assert!((f.timescale / t2 - 1.0).abs() < 1e-6);
        assert!((f.amplitude - 0.67).abs() < 1e-6);
    }

    #[test]
    fn constant_trace_is_degenerate() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 0.5)).collect();
        let f = fit_decay(&pts, DecayKind::Exponential).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.amplitude, 0.0);
    }

    #[test]
    fn too_few_points() {
        let pts: Vec<(f64, f64)> = (0..9).map(|i| (i as f64, i as f64)).collect();
        assert!(fit_decay(&pts, DecayKind::Exponential).is_err());
    }

    #[test]
    fn rb_fit() {
        let pts: Vec<(f64, f64)> = (0..30).map(|i| {
            let m = (i * 10) as f64;
            (m, 0.45 * 0.985f64.powf(m) + 0.5)
        }).collect();
        let f = fit_decay(&pts, DecayKind::RbExponential).unwrap();
        assert!((f.decay_base.unwrap() - 0.985).abs() < 1e-8);
        assert!((f.offset - 0.5).abs() < 1e-6);
    }

    #[test]
    fn extraction_from_rate() {
        let fit = DecayFit {
            kind: DecayKind::Exponential,
            frequency: 33.64e6,
            frequency_stderr: 0.0,
            timescale: 1.26e-6,
            timescale_stderr: 0.0,
            amplitude: 0.3,
            offset: 0.5,
            phase: 0.0,
            covariance: DMatrix::zeros(5, 5),
            rms_residual: 0.0,
            degenerate: false,
            decay_base: None,
            static_sigma: None,
            restarts: 0,
        };
        let p = extract_s_at_frabi(&fit, 0.0).unwrap();
        assert!((p.s / 8.041e4 - 1.0).abs() < 1e-3);
        let q = extract_s_at_frabi(&fit, 4.0 / 3.0 / 1.26e-6).unwrap();
        assert!(q.s.abs() < 1e-6);
    }
}
