//! Grid Bayesian estimation of the qubit detuning from single-shot Ramsey
//! outcomes, and the probe/update/wait/target feedback loop.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ramsey_state, readout_probability, sample_readout, DeviceParams, Outcome, RamseySettings, ShotMode, Trace};
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::noise::{correlator_variance, NoiseTrajectory, SpectrumModel, TrajectorySynthesizer};
use crate::rng::{stream_rng, streams, SimRng};
use crate::stats::mean_square;

/// How each probe step starts its posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    FreshUniform,
    /// Previous posterior, shifted by the applied correction.
    CarryOver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub n_shots: usize,
    /// First Ramsey interval, s.
    pub t_r_start: f64,
    /// Interval increment, s.
    pub t_r_step: f64,
    /// Probe offset `Δ_p`, Hz.
    pub delta_p: f64,
    pub bin_width: f64,
    pub grid_halfspan: f64,
    pub alpha: f64,
    pub visibility: f64,
    /// Optional Gaussian attenuation `exp(−(t/T₂*)²)` of the likelihood
    /// visibility.
    pub envelope_t2star: Option<f64>,
    pub prior: PriorMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            n_shots: 150,
            t_r_start: 2e-9,
            t_r_step: 2e-9,
            delta_p: 50e6,
            bin_width: 0.25e6,
            grid_halfspan: 25e6,
            alpha: 0.25,
            visibility: 0.67,
            envelope_t2star: None,
            prior: PriorMode::FreshUniform,
        }
    }
}

impl EstimatorConfig {
    /// Likelihood parameters taken from the device readout model.
    pub fn with_readout(mut self, params: &DeviceParams) -> Self {
        self.alpha = params.readout_alpha;
        self.visibility = params.readout_visibility;
        self
    }

    pub fn t_r_schedule(&self) -> Vec<f64> {
        (0..self.n_shots).map(|k| self.t_r_start + k as f64 * self.t_r_step).collect()
    }

    /// Half the number of bins on either side of zero.
    fn half_bins(&self) -> usize {
        (self.grid_halfspan / self.bin_width + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_shots == 0 {
            return Err(Error::config("n_shots", "must be >= 1"));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::config("bin_width", format!("must be > 0, got {}", self.bin_width)));
        }
        if !(self.grid_halfspan >= 0.0) {
            return Err(Error::config("grid_halfspan", "must be >= 0"));
        }
        if self.half_bins() > 1_000_000 {
            return Err(Error::config("bin_width", "grid would exceed 2·10⁶ bins"));
        }
        if !(self.t_r_start >= 0.0) || !(self.t_r_step > 0.0) {
            return Err(Error::config("t_r_step", "schedule needs t_r_start >= 0 and t_r_step > 0"));
        }
        let (a, b) = (self.alpha, self.visibility);
        if !(b > 0.0) || a + b > 1.0 + 1e-12 || a + b < 0.0 || b - a > 1.0 + 1e-12 {
            return Err(Error::config("visibility", format!("α = {a}, β = {b} give likelihoods outside [0, 1]")));
        }
        if let Some(t) = self.envelope_t2star {
            if !(t > 0.0) {
                return Err(Error::config("envelope_t2star", "must be > 0"));
            }
        }
        Ok(())
    }

    /// `P(outcome | δ)` for a Ramsey shot at interval `t_k`.
    pub fn likelihood(&self, outcome: Outcome, t_k: f64, delta: f64) -> f64 {
        let r = match outcome {
            Outcome::Up => 1.0,
            Outcome::Down => -1.0,
        };
        let att = self.envelope_t2star.map_or(1.0, |t2| (-(t_k / t2).powi(2)).exp());
        0.5 * (1.0 + r * (self.alpha + self.visibility * att * (2.0 * PI * (self.delta_p - delta) * t_k).cos()))
    }
}

/// Discretized posterior over the detuning `δ = f_qubit − f_est`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    pub centers: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PosteriorGrid {
    /// Uniform posterior on bins `k·bin_width`, `|k| ≤ halfspan/bin_width`.
    pub fn uniform(config: &EstimatorConfig) -> Result<Self> {
        config.validate()?;
        let h = config.half_bins() as i64;
        let centers: Vec<f64> = (-h..=h).map(|k| k as f64 * config.bin_width).collect();
        let n = centers.len();
        Ok(Self {
            centers,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn reset(&mut self) {
        let n = self.weights.len() as f64;
        self.weights.iter_mut().for_each(|w| *w = 1.0 / n);
    }

    /// Moves the mass by `bins` grid steps (positive toward larger δ); mass
    /// shifted off the grid is dropped.
    pub fn shift_bins(&mut self, bins: i64) {
        let n = self.weights.len() as i64;
        let mut out = vec![0.0; n as usize];
        for i in 0..n {
            let j = i + bins;
            if (0..n).contains(&j) {
                out[j as usize] = self.weights[i as usize];
            }
        }
        self.weights = out;
        if self.total() > 0.0 {
            let s = self.total();
            self.weights.iter_mut().for_each(|w| *w /= s);
        } else {
            self.reset();
        }
    }
}

/// Multiplies the posterior by the likelihood of one outcome and
/// renormalizes. If every weight vanishes the posterior is reset to uniform
/// and a numerical error is returned.
pub fn bayes_update(posterior: &mut PosteriorGrid, outcome: Outcome, t_k: f64, config: &EstimatorConfig) -> Result<()> {
    let mut total = 0.0;
    for (w, c) in posterior.weights.iter_mut().zip(&posterior.centers) {
        *w *= config.likelihood(outcome, t_k, *c).max(0.0);
        total += *w;
    }
    if !(total > 0.0) || !total.is_finite() {
        log::warn!("posterior vanished after update at t_k = {t_k:.3e} s; reset to uniform");
        posterior.reset();
        return Err(Error::Numerical("posterior vanished; reset to uniform".into()));
    }
    let inv = 1.0 / total;
    posterior.weights.iter_mut().for_each(|w| *w *= inv);
    // Keep far tails representable so later outcomes can still move them.
    let floor = f64::MIN_POSITIVE * 1e3;
    posterior.weights.iter_mut().filter(|w| **w > 0.0 && **w < floor).for_each(|w| *w = floor);
    Ok(())
}

/// Bin center of the posterior maximum; ties go to the smallest `|δ|`, then
/// to the lower bin.
pub fn estimate_detuning(posterior: &PosteriorGrid) -> f64 {
    let mut best = 0usize;
    for i in 1..posterior.len() {
        let (w, wb) = (posterior.weights[i], posterior.weights[best]);
        if w > wb || (w == wb && posterior.centers[i].abs() < posterior.centers[best].abs()) {
            best = i;
        }
    }
    posterior.centers[best]
}

#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub estimate: f64,
    pub shots: usize,
    /// Duration of the probe step, s.
    pub elapsed: f64,
    pub posterior: PosteriorGrid,
    /// Mean over the probe shots of `f_qubit − f_est`, Hz.
    pub true_mean: f64,
}

/// Runs one probe step of `n_shots` Ramsey shots spaced by `shot_period`
/// starting at `start` on the trajectory, with the microwave at
/// `f_est + Δ_p`. `prior` defaults to uniform.
#[allow(clippy::too_many_arguments)]
pub fn run_probe_step(
    traj: &NoiseTrajectory,
    start: f64,
    shot_period: f64,
    f_est: f64,
    params: &DeviceParams,
    config: &EstimatorConfig,
    settings: &RamseySettings,
    prior: Option<PosteriorGrid>,
    rng: &mut SimRng,
) -> Result<ProbeResult> {
    let mut post = match prior {
        Some(p) => p,
        None => PosteriorGrid::uniform(config)?,
    };
    let f_mw = f_est + config.delta_p;
    let mut truth = 0.0;
    for (k, t_r) in config.t_r_schedule().into_iter().enumerate() {
        let t = start + k as f64 * shot_period;
        let outcome = {
            let s = ramsey_state(t_r, f_mw, traj, t, params, settings)?;
            sample_readout(&s, params, rng)?
        };
        truth += params.f_qubit_0 + traj.value_at(t) - f_est;
        match bayes_update(&mut post, outcome, t_r, config) {
            Ok(()) | Err(Error::Numerical(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(ProbeResult {
        estimate: estimate_detuning(&post),
        shots: config.n_shots,
        elapsed: config.n_shots as f64 * shot_period,
        posterior: post,
        true_mean: truth / config.n_shots as f64,
    })
}

/// Step durations of one feedback cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackTiming {
    /// Single-shot sequence time `T_R`, s.
    pub shot_period: f64,
    /// Wait `T_w` between update and target, s.
    pub wait: f64,
    /// Target step `T_t`, s; `None` means equal to the probe step.
    pub target: Option<f64>,
}

impl Default for FeedbackTiming {
    fn default() -> Self {
        Self {
            shot_period: 31.71e-6,
            wait: 2e-3,
            target: None,
        }
    }
}

impl FeedbackTiming {
    pub fn probe(&self, config: &EstimatorConfig) -> f64 {
        config.n_shots as f64 * self.shot_period
    }

    pub fn target_duration(&self, config: &EstimatorConfig) -> f64 {
        self.target.unwrap_or_else(|| self.probe(config))
    }

    /// `Δt = T_p/2 + T_w + T_t/2`.
    pub fn latency(&self, config: &EstimatorConfig) -> f64 {
        0.5 * self.probe(config) + self.wait + 0.5 * self.target_duration(config)
    }

    pub fn cycle(&self, config: &EstimatorConfig) -> f64 {
        self.probe(config) + self.wait + self.target_duration(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shot_period > 0.0) {
            return Err(Error::config("shot_period", "must be > 0"));
        }
        if !(self.wait >= 0.0) {
            return Err(Error::config("wait", format!("must be >= 0, got {}", self.wait)));
        }
        if let Some(t) = self.target {
            if !(t >= 0.0) {
                return Err(Error::config("target", "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Phase of the feedback controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopPhase {
    Probe,
    Update,
    Wait,
    Target,
}

/// One completed feedback cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Target-step midpoint, s.
    pub time: f64,
    /// `δf` at the target midpoint, Hz.
    pub delta_f_true: f64,
    /// `f_est − f_qubit_0` after the update, Hz.
    pub delta_f_est: f64,
    /// `f_qubit − f_est` at the target midpoint, Hz.
    pub residual: f64,
    /// Probe estimate minus the probe-averaged true detuning, Hz.
    pub estimator_error: f64,
    /// Change of the true detuning between the probe average and the
    /// target midpoint, Hz.
    pub drift: f64,
}

/// Controller state carried across cycles.
#[derive(Debug, Clone)]
pub struct FeedbackState {
    pub f_est: f64,
    pub phase: LoopPhase,
    pub timing: FeedbackTiming,
    pub history: Vec<CycleRecord>,
    posterior: Option<PosteriorGrid>,
}

impl FeedbackState {
    pub fn new(f_est: f64, timing: FeedbackTiming) -> Self {
        Self {
            f_est,
            phase: LoopPhase::Probe,
            timing,
            history: Vec::new(),
            posterior: None,
        }
    }

    /// Latency of the current timing, recomputed on every call.
    pub fn latency(&self, config: &EstimatorConfig) -> f64 {
        self.timing.latency(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackOptions {
    pub timing: FeedbackTiming,
    pub n_cycles: usize,
    pub feedback_on: bool,
    /// Target microwave detuning `Δ` from the estimate, Hz.
    pub target_detuning: f64,
    /// Ramsey intervals cycled through in the target step, s.
    pub target_intervals: Vec<f64>,
    pub target_mode: ShotMode,
    /// Trajectory sample spacing; `None` uses `T_R`, coarsened to an integer
    /// multiple when the run would exceed `max_samples`.
    pub trajectory_dt: Option<f64>,
    pub max_samples: usize,
    pub ramsey: RamseySettings,
}

impl Default for FeedbackOptions {
    fn default() -> Self {
        Self {
            timing: FeedbackTiming::default(),
            n_cycles: 400,
            feedback_on: true,
            target_detuning: 0.0,
            target_intervals: (0..150).map(|k| k as f64 * 20e-9).collect(),
            target_mode: ShotMode::Projective,
            trajectory_dt: None,
            max_samples: 1 << 22,
            ramsey: RamseySettings::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeedbackRun {
    pub records: Vec<CycleRecord>,
    /// Mean square of the residual at the target midpoints, Hz².
    pub sigma2: f64,
    /// Grid quantization floor `bin²/12`, Hz².
    pub quantization_var: f64,
    /// Mean square of the probe estimator error, Hz².
    pub estimator_var: f64,
    /// Part of the estimator variance above the quantization floor, Hz².
    pub readout_var: f64,
    /// Mean square of the drift between probe and target, Hz².
    pub drift_var: f64,
    /// Mean square of `δf` over the target midpoints, Hz².
    pub free_var: f64,
    /// Averaged target-step Ramsey signal versus interval.
    pub target_trace: Trace,
    pub latency: f64,
    pub trajectory: NoiseTrajectory,
}

impl FeedbackRun {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("cycle,time_s,delta_f_true_Hz,delta_f_est_Hz,residual_Hz\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{:.9e},{:.9e},{:.9e},{:.9e}\n",
                r.cycle, r.time, r.delta_f_true, r.delta_f_est, r.residual
            ));
        }
        s
    }
}

/// Copy of `model` whose band ends at the Nyquist frequency of `dt`.
fn band_limited(model: &SpectrumModel, dt: f64) -> SpectrumModel {
    let nyq = 0.5 / dt;
    if model.f_high <= nyq {
        return model.clone();
    }
    let mut m = model.clone();
    let dropped = model.band_variance(nyq, model.f_high);
    log::debug!("trajectory at dt = {dt:.3e} s drops {dropped:.3e} Hz² above {nyq:.3e} Hz");
    m.f_high = nyq;
    if m.f_low >= m.f_high {
        m.f_low = m.f_high * 0.5;
    }
    m
}

/// Runs the closed (or open, when `feedback_on` is false) loop over one
/// continuous trajectory.
pub fn run_feedback_loop(
    model: &SpectrumModel,
    params: &DeviceParams,
    config: &EstimatorConfig,
    opts: &FeedbackOptions,
    seed: u64,
) -> Result<FeedbackRun> {
    params.validate()?;
    config.validate().map_err(|e| e.within("estimator"))?;
    opts.timing.validate().map_err(|e| e.within("timing"))?;
    if opts.n_cycles < 10 {
        return Err(Error::config("n_cycles", format!("must be >= 10, got {}", opts.n_cycles)));
    }
    if opts.target_intervals.is_empty() {
        return Err(Error::config("target_intervals", "must not be empty"));
    }
    let timing = opts.timing;
    let t_r = timing.shot_period;
    let cycle = timing.cycle(config);
    let total = opts.n_cycles as f64 * cycle + t_r;
    let dt = match opts.trajectory_dt {
        Some(dt) => dt,
        None => {
            let k = (total / t_r / opts.max_samples as f64).ceil().max(1.0);
            k * t_r
        }
    };
    let n = (total / dt).ceil() as usize + 2;
    let m = band_limited(model, dt);
    let synth = TrajectorySynthesizer::new(&m, dt, n, true)?;
    let mut traj_rng = stream_rng(seed, streams::TRAJECTORY);
    let traj = NoiseTrajectory::new(dt, synth.draw(&mut traj_rng), seed, "feedback")?;

    let mut state = FeedbackState::new(params.f_qubit_0, timing);
    let mut rng = stream_rng(seed, streams::SHOT);
    let n_target = (timing.target_duration(config) / t_r).round() as usize;
    let mut sums = vec![0.0; opts.target_intervals.len()];
    let mut sums2 = vec![0.0; opts.target_intervals.len()];
    let mut counts = vec![0usize; opts.target_intervals.len()];

    for c in 0..opts.n_cycles {
        let t0 = c as f64 * cycle;
        state.phase = LoopPhase::Probe;
        let prior = match config.prior {
            PriorMode::FreshUniform => None,
            PriorMode::CarryOver => state.posterior.take(),
        };
        let f_before = state.f_est;
        let probe = run_probe_step(&traj, t0, t_r, f_before, params, config, &opts.ramsey, prior, &mut rng)?;

        state.phase = LoopPhase::Update;
        if opts.feedback_on {
            state.f_est += probe.estimate;
        }
        if config.prior == PriorMode::CarryOver {
            let mut p = probe.posterior.clone();
            if opts.feedback_on {
                p.shift_bins(-(probe.estimate / config.bin_width).round() as i64);
            }
            state.posterior = Some(p);
        }

        state.phase = LoopPhase::Wait;
        state.phase = LoopPhase::Target;
        let target_start = t0 + probe.elapsed + timing.wait;
        let t_mid = target_start + 0.5 * timing.target_duration(config);
        let f_mw = state.f_est + opts.target_detuning;
        for k in 0..n_target {
            let i = k % opts.target_intervals.len();
            let t = target_start + k as f64 * t_r;
            let s = ramsey_state(opts.target_intervals[i], f_mw, &traj, t, params, &opts.ramsey)?;
            let v = match opts.target_mode {
                ShotMode::Expectation => readout_probability(&s, params)?,
                ShotMode::Projective => match sample_readout(&s, params, &mut rng)? {
                    Outcome::Up => 1.0,
                    Outcome::Down => 0.0,
                },
            };
            sums[i] += v;
            sums2[i] += v * v;
            counts[i] += 1;
        }

        let df_mid = traj.value_at(t_mid);
        let residual = params.f_qubit_0 + df_mid - state.f_est;
        let applied = state.f_est - f_before;
        let drift = (params.f_qubit_0 + df_mid - f_before) - probe.true_mean;
        state.history.push(CycleRecord {
            cycle: c,
            time: t_mid,
            delta_f_true: df_mid,
            delta_f_est: state.f_est - params.f_qubit_0,
            residual,
            estimator_error: if opts.feedback_on { applied - probe.true_mean } else { probe.estimate - probe.true_mean },
            drift,
        });
    }

    let residuals: Vec<f64> = state.history.iter().map(|r| r.residual).collect();
    let est: Vec<f64> = state.history.iter().map(|r| r.estimator_error).collect();
    let drift: Vec<f64> = state.history.iter().map(|r| r.drift).collect();
    let truth: Vec<f64> = state.history.iter().map(|r| r.delta_f_true).collect();
    let quantization_var = config.bin_width.powi(2) / 12.0;
    let estimator_var = mean_square(&est);
    let (p_up, stderr): (Vec<f64>, Vec<f64>) = (0..sums.len())
        .map(|i| {
            let nf = counts[i].max(1) as f64;
            let m = sums[i] / nf;
            let var = if counts[i] > 1 { ((sums2[i] - sums[i] * m) / (nf - 1.0)).max(0.0) } else { 0.0 };
            (m, (var / nf).sqrt())
        })
        .unzip();
    Ok(FeedbackRun {
        sigma2: mean_square(&residuals),
        quantization_var,
        estimator_var,
        readout_var: (estimator_var - quantization_var).max(0.0),
        drift_var: mean_square(&drift),
        free_var: mean_square(&truth),
        target_trace: Trace {
            times: opts.target_intervals.clone(),
            p_up,
            stderr,
            shots: counts.iter().copied().min().unwrap_or(0),
        },
        latency: timing.latency(config),
        records: state.history,
        trajectory: traj,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub wait: f64,
    pub delta_t: f64,
    pub sigma2: f64,
    /// Correlator variance of the same trajectory at `delta_t`.
    pub sigma_b2: f64,
    pub estimator_var: f64,
    pub drift_var: f64,
}

/// Fit of `σ² = D·Δt^α + floor²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyFit {
    pub d: f64,
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub floor2: f64,
}

#[derive(Debug, Clone)]
pub struct LatencySweep {
    pub points: Vec<SweepPoint>,
    pub fit: LatencyFit,
}

impl LatencySweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta_t_s,sigma2_Hz2,sigmaB2_Hz2\n");
        for p in &self.points {
            s.push_str(&format!("{:.9e},{:.9e},{:.9e}\n", p.delta_t, p.sigma2, p.sigma_b2));
        }
        s
    }
}

/// Fits `σ² = D·Δt^α + floor²` with relative residuals.
pub fn fit_latency_law(delta_t: &[f64], sigma2: &[f64]) -> Result<LatencyFit> {
    if delta_t.len() != sigma2.len() || delta_t.len() < 4 {
        return Err(Error::domain("latency fit needs at least 4 paired points"));
    }
    let n = delta_t.len();
    let min = sigma2.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-30);
    let (imax, _) = delta_t.iter().enumerate().fold((0, 0.0), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    let mut best: Option<crate::fit::LmResult> = None;
    for a0 in [0.84, 0.5, 1.2] {
        let d0 = ((sigma2[imax] - 0.5 * min).max(1e-30) / delta_t[imax].powf(a0)).ln();
        let x0 = [d0, a0, (0.5 * min).ln()];
        let r = levenberg_marquardt(
            |p, r| {
                for i in 0..n {
                    let model = p[0].exp() * delta_t[i].powf(p[1]) + p[2].exp();
                    r[i] = model / sigma2[i] - 1.0;
                }
            },
            &x0,
            n,
            LmOptions::default(),
        );
        if let Ok(res) = r {
            if best.as_ref().is_none_or(|b| res.ssr < b.ssr) {
                best = Some(res);
            }
        }
    }
    let res = best.ok_or(Error::Fit {
        reason: "latency law fit did not converge".into(),
        restarts: 3,
        last_cost: f64::INFINITY,
    })?;
    Ok(LatencyFit {
        d: res.params[0].exp(),
        alpha: res.params[1],
        alpha_stderr: res.stderr(1),
        floor2: res.params[2].exp(),
    })
}

/// Runs one feedback loop per wait time (concurrently, seeds `seed + i`) and
/// fits the latency law.
pub fn latency_sweep(
    model: &SpectrumModel,
    params: &DeviceParams,
    config: &EstimatorConfig,
    opts: &FeedbackOptions,
    waits: &[f64],
    seed: u64,
) -> Result<LatencySweep> {
    if let Some(w) = waits.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::config("waits", format!("wait times must be >= 0, got {w}")));
    }
    let points: Result<Vec<SweepPoint>> = waits
        .par_iter()
        .enumerate()
        .map(|(i, &w)| {
            let mut o = opts.clone();
            o.timing.wait = w;
            let run = run_feedback_loop(model, params, config, &o, seed.wrapping_add(i as u64))?;
            let sigma_b2 = correlator_variance(&run.trajectory, run.latency)?;
            Ok(SweepPoint {
                wait: w,
                delta_t: run.latency,
                sigma2: run.sigma2,
                sigma_b2,
                estimator_var: run.estimator_var,
                drift_var: run.drift_var,
            })
        })
        .collect();
    let points = points?;
    let dts: Vec<f64> = points.iter().map(|p| p.delta_t).collect();
    let s2: Vec<f64> = points.iter().map(|p| p.sigma2).collect();
    let fit = fit_latency_law(&dts, &s2)?;
    Ok(LatencySweep { points, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal() -> EstimatorConfig {
        EstimatorConfig {
            alpha: 0.0,
            visibility: 1.0,
            ..EstimatorConfig::default()
        }
    }

    #[test]
    fn grid_contains_zero() {
        let p = PosteriorGrid::uniform(&EstimatorConfig::default()).unwrap();
        assert_eq!(p.len(), 201);
        assert_eq!(p.centers[100], 0.0);
        assert!((p.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_update_closed_form() {
        let cfg = ideal();
        let mut p = PosteriorGrid::uniform(&cfg).unwrap();
        let t = 37e-9;
        bayes_update(&mut p, Outcome::Up, t, &cfg).unwrap();
        let raw: Vec<f64> = p.centers.iter().map(|d| 1.0 + (2.0 * PI * (cfg.delta_p - d) * t).cos()).collect();
        let s: f64 = raw.iter().sum();
        for (w, r) in p.weights.iter().zip(&raw) {
            assert!((w - r / s).abs() < 1e-12);
        }
    }

    #[test]
    fn complementary_outcomes_give_sin_squared() {
        let cfg = ideal();
        let mut p = PosteriorGrid::uniform(&cfg).unwrap();
        let t = 53e-9;
        bayes_update(&mut p, Outcome::Up, t, &cfg).unwrap();
        bayes_update(&mut p, Outcome::Down, t, &cfg).unwrap();
        let raw: Vec<f64> = p.centers.iter().map(|d| (2.0 * PI * (cfg.delta_p - d) * t).sin().powi(2)).collect();
        let s: f64 = raw.iter().sum();
        for (w, r) in p.weights.iter().zip(&raw) {
            assert!((w - r / s).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_estimate_is_zero() {
        let p = PosteriorGrid::uniform(&EstimatorConfig::default()).unwrap();
        assert_eq!(estimate_detuning(&p), 0.0);
    }

    #[test]
    fn vanishing_posterior_resets() {
        let cfg = EstimatorConfig {
            grid_halfspan: 0.0,
            ..ideal()
        };
        let mut p = PosteriorGrid::uniform(&cfg).unwrap();
        // Δ_p·t = 1/2 puts the single bin at zero likelihood for "up".
        let t = 0.5 / cfg.delta_p;
        let r = bayes_update(&mut p, Outcome::Up, t, &cfg);
        assert!(matches!(r, Err(Error::Numerical(_))));
        assert!((p.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_bin_width_rejected() {
        let cfg = EstimatorConfig {
            bin_width: 0.0,
            ..EstimatorConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "bin_width"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn latency_definition() {
        let cfg = EstimatorConfig::default();
        let t = FeedbackTiming::default();
        let tp = 150.0 * 31.71e-6;
        assert!((t.latency(&cfg) - (tp + 2e-3)).abs() < 1e-15);
    }

    #[test]
    fn latency_law_fit_exact() {
        let dt: Vec<f64> = (0..8).map(|i| 5e-3 * 2f64.powi(i)).collect();
        let s2: Vec<f64> = dt.iter().map(|t| 3e11 * t.powf(0.84) + 8e10).collect();
        let f = fit_latency_law(&dt, &s2).unwrap();
        assert!((f.alpha - 0.84).abs() < 1e-6);
        assert!((f.floor2 / 8e10 - 1.0).abs() < 1e-6);
    }
}
