//! Rotating-frame Bloch-vector dynamics of the driven qubit under an injected
//! detuning trajectory, with the microwave-induced frequency shift and a
//! stochastic single-shot readout.
//!
//! Sign conventions: the rotating frame turns at the frame (microwave)
//! frequency `f_MW`; the rotation vector in a segment is
//! `(f_rabi·cos φ, f_rabi·sin φ, Δ_q)` with `Δ_q = f_MW − f_qubit(t)`, and the
//! Bloch vector turns right-handedly about it at `2π·|vector|`. The qubit
//! starts in `z = +1`; the readout signal follows `(1 − z)/2`.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::noise::{NoiseTrajectory, SpectrumModel, TrajectorySynthesizer};
use crate::rng::{stream_rng, streams, SimRng};

/// Physical parameters of the qubit and its control/readout chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceParams {
    /// External field, T.
    pub b_ext: f64,
    /// Micromagnet stray-field z component, T.
    pub b_mm_z: f64,
    /// Nominal resonance, Hz.
    pub f_qubit_0: f64,
    /// Microwave-induced shift coefficient, Hz per amplitude^p.
    pub shift_coeff: f64,
    pub shift_exponent: f64,
    /// Exponential settling time of the shift after the microwave turns on
    /// (0 = instantaneous), s.
    pub shift_settling_time: f64,
    /// Rabi frequency per unit drive amplitude, Hz.
    pub rabi_per_amplitude: f64,
    /// Longitudinal relaxation rate, 1/s.
    pub gamma1: f64,
    pub readout_alpha: f64,
    pub readout_visibility: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            b_ext: 1.01,
            b_mm_z: 0.07,
            f_qubit_0: 5.495e9,
            shift_coeff: 0.0,
            shift_exponent: 2.0,
            shift_settling_time: 0.0,
            rabi_per_amplitude: 1.0e6,
            gamma1: 0.0,
            readout_alpha: 0.25,
            readout_visibility: 0.67,
        }
    }
}

impl DeviceParams {
    pub fn b_total(&self) -> f64 {
        self.b_ext + self.b_mm_z
    }

    /// Ideal readout (`α = 0`, `β = 1`).
    pub fn with_ideal_readout(mut self) -> Self {
        self.readout_alpha = 0.0;
        self.readout_visibility = 1.0;
        self
    }

    pub fn rabi_frequency(&self, amplitude: f64) -> f64 {
        self.rabi_per_amplitude * amplitude
    }

    /// Drive amplitude giving Rabi frequency `f_rabi`.
    pub fn amplitude_for(&self, f_rabi: f64) -> f64 {
        f_rabi / self.rabi_per_amplitude
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.readout_alpha;
        let b = self.readout_visibility;
        if !(b > 0.0) {
            return Err(Error::config("readout_visibility", format!("must be > 0, got {b}")));
        }
        if a + b > 1.0 + 1e-12 || a + b < 0.0 || b - a > 1.0 + 1e-12 {
            return Err(Error::config(
                "readout_alpha",
                format!("α = {a}, β = {b} give readout probabilities outside [0, 1]"),
            ));
        }
        if !(self.rabi_per_amplitude > 0.0) {
            return Err(Error::config("rabi_per_amplitude", "must be > 0"));
        }
        if !(self.gamma1 >= 0.0) {
            return Err(Error::config("gamma1", "must be >= 0"));
        }
        if !(self.shift_settling_time >= 0.0) {
            return Err(Error::config("shift_settling_time", "must be >= 0"));
        }
        if !(self.shift_coeff.is_finite() && self.shift_exponent.is_finite()) {
            return Err(Error::config("shift_coeff", "must be finite"));
        }
        Ok(())
    }
}

/// Microwave-induced qubit frequency shift `c·E^p` (Hz).
pub fn microwave_shift(params: &DeviceParams, amplitude: f64) -> f64 {
    if amplitude <= 0.0 {
        return 0.0;
    }
    params.shift_coeff * amplitude.powf(params.shift_exponent)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Resonant drive in the rotating frame.
    Drive,
    /// Far off-resonant burst: shifts the qubit frequency, no rotation.
    OffResonant,
    Idle,
    /// Instantaneous rotation by `angle` about the in-plane axis at `phase`.
    Instant { angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub kind: SegmentKind,
    /// Carrier frequency, Hz. Drive segments are taken at the frame frequency.
    pub frequency: f64,
    pub amplitude: f64,
    /// rad.
    pub phase: f64,
    /// s.
    pub duration: f64,
}

impl PulseSegment {
    pub fn drive(frequency: f64, amplitude: f64, phase: f64, duration: f64) -> Self {
        Self {
            kind: SegmentKind::Drive,
            frequency,
            amplitude,
            phase,
            duration,
        }
    }

    pub fn idle(duration: f64) -> Self {
        Self {
            kind: SegmentKind::Idle,
            frequency: 0.0,
            amplitude: 0.0,
            phase: 0.0,
            duration,
        }
    }

    pub fn off_resonant(frequency: f64, amplitude: f64, duration: f64) -> Self {
        Self {
            kind: SegmentKind::OffResonant,
            frequency,
            amplitude,
            phase: 0.0,
            duration,
        }
    }

    pub fn instant(angle: f64, phase: f64) -> Self {
        Self {
            kind: SegmentKind::Instant { angle },
            frequency: 0.0,
            amplitude: 0.0,
            phase,
            duration: 0.0,
        }
    }

    fn microwave_on(&self) -> bool {
        matches!(self.kind, SegmentKind::Drive | SegmentKind::OffResonant) && self.amplitude > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0) {
            return Err(Error::config("duration", "must be >= 0"));
        }
        if !(self.amplitude >= 0.0) {
            return Err(Error::config("amplitude", "must be >= 0"));
        }
        Ok(())
    }
}

/// Ordered microwave segments followed by a projective z readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSchedule {
    /// Frequency of the rotating frame (the drive carrier), Hz.
    pub frame_frequency: f64,
    pub segments: Vec<PulseSegment>,
}

impl ExperimentSchedule {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            s.validate().map_err(|e| e.within(&format!("segments[{i}]")))?;
        }
        let instant_only = self.segments.iter().any(|s| matches!(s.kind, SegmentKind::Instant { .. }));
        if !(self.duration() > 0.0) && !instant_only {
            return Err(Error::config("segments", "total duration must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochState {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// The initialized spin, `z = +1`.
    pub fn up() -> Self {
        Self::new(0.0, 0.0, 1.0)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn vec(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn from_vec(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    /// Right-handed rotation by `angle` about the unit vector `axis`.
    pub fn rotated(&self, axis: [f64; 3], angle: f64) -> Self {
        let k = Vector3::from(axis);
        let r = self.vec();
        let (s, c) = angle.sin_cos();
        Self::from_vec(r * c + k.cross(&r) * s + k * (k.dot(&r) * (1.0 - c)))
    }
}

/// Single-shot readout outcome. `Up` is the "up-spin" signal, produced with
/// probability `½(1 + α − β·z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Up,
    Down,
}

/// Up-spin probability of the readout for the given state.
pub fn readout_probability(state: &BlochState, params: &DeviceParams) -> Result<f64> {
    let p = 0.5 * (1.0 + params.readout_alpha - params.readout_visibility * state.z);
    if !(-1e-12..=1.0 + 1e-12).contains(&p) {
        return Err(Error::config(
            "readout_alpha",
            format!("readout probability {p} outside [0, 1]"),
        ));
    }
    Ok(p.clamp(0.0, 1.0))
}

pub fn sample_readout(state: &BlochState, params: &DeviceParams, rng: &mut SimRng) -> Result<Outcome> {
    let p = readout_probability(state, params)?;
    Ok(if rng.random::<f64>() < p {
        Outcome::Up
    } else {
        Outcome::Down
    })
}

/// Exact solution of the Bloch equations over `tau` with constant rotation
/// vector `omega` (Hz) and relaxation `gamma1`: transverse decay at `Γ₁/2`,
/// longitudinal relaxation toward `z = +1` at `Γ₁`.
fn step(state: BlochState, omega: [f64; 3], gamma1: f64, tau: f64) -> BlochState {
    if tau <= 0.0 {
        return state;
    }
    let w = Vector3::from(omega);
    let mag = w.norm();
    if gamma1 == 0.0 {
        if mag == 0.0 {
            return state;
        }
        let k = w / mag;
        return state.rotated([k.x, k.y, k.z], 2.0 * PI * mag * tau);
    }
    let (wx, wy, wz) = (2.0 * PI * w.x, 2.0 * PI * w.y, 2.0 * PI * w.z);
    let g2 = 0.5 * gamma1;
    #[rustfmt::skip]
    let m = Matrix4::new(
        -g2, -wz,  wy,  0.0,
         wz, -g2, -wx,  0.0,
        -wy,  wx, -gamma1, gamma1,
        0.0, 0.0,  0.0,  0.0,
    ) * tau;
    let e = m.exp();
    let r = nalgebra::Vector4::new(state.x, state.y, state.z, 1.0);
    let out = e * r;
    BlochState::new(out.x, out.y, out.z)
}

/// Running evolution through consecutive segments of one shot.
#[derive(Debug)]
pub struct Evolver<'a> {
    params: &'a DeviceParams,
    noise: &'a NoiseTrajectory,
    frame: f64,
    pub state: BlochState,
    /// Absolute time on the noise trajectory, s.
    pub time: f64,
    /// Time since the microwave was last switched on (None while off).
    mw_on_for: Option<f64>,
}

impl<'a> Evolver<'a> {
    pub fn new(params: &'a DeviceParams, noise: &'a NoiseTrajectory, frame: f64, start: f64) -> Self {
        Self {
            params,
            noise,
            frame,
            state: BlochState::up(),
            time: start,
            mw_on_for: None,
        }
    }

    pub fn with_state(mut self, state: BlochState) -> Self {
        self.state = state;
        self
    }

    fn shift_at(&self, amplitude: f64, on_for: f64) -> f64 {
        let full = microwave_shift(self.params, amplitude);
        let tau = self.params.shift_settling_time;
        if tau > 0.0 {
            full * (1.0 - (-on_for / tau).exp())
        } else {
            full
        }
    }

    /// Advances through one segment.
    pub fn apply(&mut self, seg: &PulseSegment) -> Result<()> {
        let end = self.time + seg.duration;
        if end > self.noise.duration() * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "segment ends at {end:.6e} s beyond the noise trajectory ({:.6e} s)",
                self.noise.duration()
            )));
        }
        if let SegmentKind::Instant { angle } = seg.kind {
            self.state = self.state.rotated([seg.phase.cos(), seg.phase.sin(), 0.0], angle);
            return Ok(());
        }
        let mw = seg.microwave_on();
        if !mw {
            self.mw_on_for = None;
        }
        let mut on_for = if mw { self.mw_on_for.unwrap_or(0.0) } else { 0.0 };
        let f_rabi = if seg.kind == SegmentKind::Drive {
            self.params.rabi_frequency(seg.amplitude)
        } else {
            0.0
        };
        let (sphi, cphi) = seg.phase.sin_cos();
        let settling = self.params.shift_settling_time;
        let dt = self.noise.dt;
        let mut t = self.time;
        while t < end {
            let idx = self.noise.index_at(t);
            // Next boundary of the piecewise-constant noise.
            let mut t_next = ((idx + 1) as f64 * dt).min(end);
            if t_next <= t {
                t_next = end;
            }
            if mw && settling > 0.0 {
                t_next = t_next.min(t + settling / 20.0);
            }
            let tau = t_next - t;
            let shift = if mw {
                self.shift_at(seg.amplitude, on_for + 0.5 * tau)
            } else {
                0.0
            };
            let detuning = self.frame - (self.params.f_qubit_0 + self.noise.samples[idx] + shift);
            let omega = [f_rabi * cphi, f_rabi * sphi, detuning];
            self.state = step(self.state, omega, self.params.gamma1, tau);
            on_for += tau;
            t = t_next;
        }
        self.time = end;
        self.mw_on_for = if mw { Some(on_for) } else { None };
        Ok(())
    }

    pub fn run(&mut self, segments: &[PulseSegment]) -> Result<()> {
        for s in segments {
            self.apply(s)?;
        }
        Ok(())
    }
}

/// Evolves `state` through one segment starting at absolute time `start` on
/// the trajectory, with the rotating frame at `frame` Hz.
pub fn evolve(
    state: BlochState,
    segment: &PulseSegment,
    traj: &NoiseTrajectory,
    start: f64,
    frame: f64,
    params: &DeviceParams,
) -> Result<BlochState> {
    let mut ev = Evolver::new(params, traj, frame, start).with_state(state);
    ev.apply(segment)?;
    Ok(ev.state)
}

/// Runs a schedule from the initialized state; returns the final state.
pub fn run_schedule(
    schedule: &ExperimentSchedule,
    traj: &NoiseTrajectory,
    start: f64,
    params: &DeviceParams,
) -> Result<BlochState> {
    let mut ev = Evolver::new(params, traj, schedule.frame_frequency, start);
    ev.run(&schedule.segments)?;
    Ok(ev.state)
}

/// How the two π/2 pulses of a Ramsey sequence are realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RamseyPulses {
    /// Rectangular bursts of duration `1/(4 f_rabi)` at this amplitude.
    Finite { amplitude: f64 },
    /// Instantaneous π/2 rotations.
    Ideal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamseySettings {
    pub pulses: RamseyPulses,
    /// Amplitude of the off-resonant compensation burst during `t_R` and the
    /// pre-burst; `None` disables compensation.
    pub compensation_amplitude: Option<f64>,
    /// Pre-burst length used with compensation, s.
    pub pre_burst: f64,
    /// Carrier of the off-resonant bursts, Hz.
    pub off_resonant_frequency: f64,
}

impl Default for RamseySettings {
    fn default() -> Self {
        Self {
            pulses: RamseyPulses::Ideal,
            compensation_amplitude: None,
            pre_burst: 200e-9,
            off_resonant_frequency: 5.4e9,
        }
    }
}

/// π/2, wait `t_R`, π/2 at carrier `f_mw`.
pub fn ramsey_schedule(t_r: f64, f_mw: f64, settings: &RamseySettings, params: &DeviceParams) -> Result<ExperimentSchedule> {
    if !(t_r >= 0.0) {
        return Err(Error::domain(format!("Ramsey interval must be >= 0, got {t_r}")));
    }
    let half_pi = match settings.pulses {
        RamseyPulses::Ideal => PulseSegment::instant(PI / 2.0, 0.0),
        RamseyPulses::Finite { amplitude } => {
            let f = params.rabi_frequency(amplitude);
            if !(f > 0.0) {
                return Err(Error::config("pulses.amplitude", "must give a positive Rabi frequency"));
            }
            PulseSegment::drive(f_mw, amplitude, 0.0, 1.0 / (4.0 * f))
        }
    };
    let mut segments = Vec::with_capacity(4);
    let wait = match settings.compensation_amplitude {
        Some(a) => {
            if settings.pre_burst > 0.0 {
                segments.push(PulseSegment::off_resonant(settings.off_resonant_frequency, a, settings.pre_burst));
            }
            PulseSegment::off_resonant(settings.off_resonant_frequency, a, t_r)
        }
        None => PulseSegment::idle(t_r),
    };
    segments.push(half_pi);
    segments.push(wait);
    segments.push(half_pi);
    Ok(ExperimentSchedule {
        frame_frequency: f_mw,
        segments,
    })
}

/// Final Bloch state of one Ramsey shot starting at `start` on `traj`.
pub fn ramsey_state(
    t_r: f64,
    f_mw: f64,
    traj: &NoiseTrajectory,
    start: f64,
    params: &DeviceParams,
    settings: &RamseySettings,
) -> Result<BlochState> {
    let sched = ramsey_schedule(t_r, f_mw, settings, params)?;
    run_schedule(&sched, traj, start, params)
}

pub fn simulate_ramsey_shot(
    t_r: f64,
    f_mw: f64,
    traj: &NoiseTrajectory,
    start: f64,
    params: &DeviceParams,
    settings: &RamseySettings,
    rng: &mut SimRng,
) -> Result<Outcome> {
    let s = ramsey_state(t_r, f_mw, traj, start, params, settings)?;
    sample_readout(&s, params, rng)
}

/// Whether a trace averages sampled single-shot outcomes or the exact
/// readout probability of each shot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotMode {
    Projective,
    Expectation,
}

/// Averaged up-spin probability versus a swept time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub p_up: Vec<f64>,
    pub stderr: Vec<f64>,
    pub shots: usize,
}

impl Trace {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.p_up.iter().copied()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_s,P_up,stderr\n");
        for i in 0..self.times.len() {
            s.push_str(&format!("{:.9e},{:.9e},{:.9e}\n", self.times[i], self.p_up[i], self.stderr[i]));
        }
        s
    }
}

fn accumulate(per_shot: Vec<Vec<f64>>, times: &[f64]) -> Trace {
    let n = per_shot.len();
    let m = times.len();
    let mut sum = vec![0.0; m];
    let mut sum2 = vec![0.0; m];
    for row in &per_shot {
        for j in 0..m {
            sum[j] += row[j];
            sum2[j] += row[j] * row[j];
        }
    }
    let nf = n as f64;
    let p_up: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let stderr = (0..m)
        .map(|j| {
            if n < 2 {
                return 0.0;
            }
            let var = ((sum2[j] - sum[j] * sum[j] / nf) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        })
        .collect();
    Trace {
        times: times.to_vec(),
        p_up,
        stderr,
        shots: n,
    }
}

/// Noise sampling for per-shot Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShotNoise {
    /// Sample spacing; `None` picks `min(1/(2 f_high), 1/(20 f_R))`.
    pub dt: Option<f64>,
    pub mode: ShotMode,
}

impl Default for ShotNoise {
    fn default() -> Self {
        Self {
            dt: None,
            mode: ShotMode::Expectation,
        }
    }
}

fn shot_dt(model: &SpectrumModel, f_scale: f64, noise: &ShotNoise) -> f64 {
    noise
        .dt
        .unwrap_or_else(|| (0.5 / model.f_high).min(1.0 / (20.0 * f_scale.max(1.0))))
}

fn shot_synthesizer(model: &SpectrumModel, window: f64, dt: f64) -> Result<TrajectorySynthesizer> {
    let n = ((2.0 * window / dt).ceil() as usize).max(16).next_power_of_two();
    TrajectorySynthesizer::new(model, dt, n, true)
}

/// Rabi burst of swept duration at carrier `f_mw` and fixed amplitude, with a
/// fresh noise realization per shot. A realization is shared by all
/// durations of the same shot, as a continuous burst observed at each time.
#[allow(clippy::too_many_arguments)]
pub fn simulate_rabi_trace(
    burst_durations: &[f64],
    f_mw: f64,
    amplitude: f64,
    model: &SpectrumModel,
    params: &DeviceParams,
    n_shots: usize,
    seed: u64,
    noise: &ShotNoise,
) -> Result<Trace> {
    params.validate()?;
    if n_shots == 0 {
        return Err(Error::config("n_shots", "must be >= 1"));
    }
    if burst_durations.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::domain("burst durations must be >= 0"));
    }
    let mut order: Vec<usize> = (0..burst_durations.len()).collect();
    order.sort_by(|a, b| burst_durations[*a].partial_cmp(&burst_durations[*b]).unwrap());
    let t_max = burst_durations.iter().cloned().fold(0.0, f64::max);
    let f_rabi = params.rabi_frequency(amplitude);
    let detuning = f_mw - params.f_qubit_0 - microwave_shift(params, amplitude);
    let f_scale = f_rabi.hypot(detuning);
    let dt = shot_dt(model, f_scale, noise);
    let synth = shot_synthesizer(model, t_max.max(dt), dt)?;

    let per_shot: Result<Vec<Vec<f64>>> = (0..n_shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = stream_rng(seed, streams::SHOT + shot as u64);
            let samples = synth.draw(&mut rng);
            let traj = NoiseTrajectory::new(dt, samples, seed, "shot")?;
            let mut ev = Evolver::new(params, &traj, f_mw, 0.0);
            let mut row = vec![0.0; burst_durations.len()];
            let mut readout_rng = stream_rng(seed, streams::READOUT + shot as u64);
            for &j in &order {
                let target = burst_durations[j];
                let seg = PulseSegment::drive(f_mw, amplitude, 0.0, target - ev.time);
                ev.apply(&seg)?;
                row[j] = match noise.mode {
                    ShotMode::Expectation => readout_probability(&ev.state, params)?,
                    ShotMode::Projective => match sample_readout(&ev.state, params, &mut readout_rng)? {
                        Outcome::Up => 1.0,
                        Outcome::Down => 0.0,
                    },
                };
            }
            Ok(row)
        })
        .collect();
    Ok(accumulate(per_shot?, burst_durations))
}

/// Ramsey trace versus `t_R` with a fresh noise realization per shot.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ramsey_trace(
    intervals: &[f64],
    f_mw: f64,
    model: &SpectrumModel,
    params: &DeviceParams,
    settings: &RamseySettings,
    n_shots: usize,
    seed: u64,
    noise: &ShotNoise,
) -> Result<Trace> {
    params.validate()?;
    if n_shots == 0 {
        return Err(Error::config("n_shots", "must be >= 1"));
    }
    let t_max = intervals.iter().cloned().fold(0.0, f64::max);
    let pulse_time = match settings.pulses {
        RamseyPulses::Ideal => 0.0,
        RamseyPulses::Finite { amplitude } => 0.5 / params.rabi_frequency(amplitude),
    };
    let pre = if settings.compensation_amplitude.is_some() { settings.pre_burst } else { 0.0 };
    let window = t_max + pulse_time + pre;
    let detuning = (f_mw - params.f_qubit_0).abs();
    let dt = shot_dt(model, detuning, noise);
    let synth = shot_synthesizer(model, window.max(dt), dt)?;
    let per_shot: Result<Vec<Vec<f64>>> = (0..n_shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = stream_rng(seed, streams::SHOT + shot as u64);
            let mut readout_rng = stream_rng(seed, streams::READOUT + shot as u64);
            let mut row = Vec::with_capacity(intervals.len());
            // A fresh realization for every (shot, t_R) point.
            for &t_r in intervals {
                let samples = synth.draw(&mut rng);
                let traj = NoiseTrajectory::new(dt, samples, seed, "shot")?;
                let s = ramsey_state(t_r, f_mw, &traj, 0.0, params, settings)?;
                row.push(match noise.mode {
                    ShotMode::Expectation => readout_probability(&s, params)?,
                    ShotMode::Projective => match sample_readout(&s, params, &mut readout_rng)? {
                        Outcome::Up => 1.0,
                        Outcome::Down => 0.0,
                    },
                });
            }
            Ok(row)
        })
        .collect();
    Ok(accumulate(per_shot?, intervals))
}

/// Rabi map over drive detuning and burst duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Chevron {
    /// `f_MW − f_qubit_0`, Hz.
    pub detunings: Vec<f64>,
    pub durations: Vec<f64>,
    /// `p_up[i][j]` at detuning `i`, duration `j`.
    pub p_up: Vec<Vec<f64>>,
}

impl Chevron {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("detuning_Hz,t_s,P_up\n");
        for (i, d) in self.detunings.iter().enumerate() {
            for (j, t) in self.durations.iter().enumerate() {
                s.push_str(&format!("{d:.9e},{t:.9e},{:.9e}\n", self.p_up[i][j]));
            }
        }
        s
    }

    /// Duration-averaged signal per detuning column.
    pub fn column_means(&self) -> Vec<f64> {
        self.p_up
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect()
    }
}

/// Chevron map at fixed drive amplitude. All columns reuse the same per-shot
/// noise streams.
#[allow(clippy::too_many_arguments)]
pub fn simulate_chevron(
    detunings: &[f64],
    durations: &[f64],
    amplitude: f64,
    model: &SpectrumModel,
    params: &DeviceParams,
    n_shots: usize,
    seed: u64,
    noise: &ShotNoise,
) -> Result<Chevron> {
    let p_up: Result<Vec<Vec<f64>>> = detunings
        .iter()
        .map(|d| {
            simulate_rabi_trace(durations, params.f_qubit_0 + d, amplitude, model, params, n_shots, seed, noise)
                .map(|t| t.p_up)
        })
        .collect();
    Ok(Chevron {
        detunings: detunings.to_vec(),
        durations: durations.to_vec(),
        p_up: p_up?,
    })
}

/// Symmetry axis of a chevron: fits the duration-averaged column signal
/// with a Lorentzian `B + A·w²/(w² + (Δ − Δ₀)²)` and returns `Δ₀`.
pub fn fit_chevron_axis(chevron: &Chevron, width_guess: f64) -> Result<f64> {
    let y = chevron.column_means();
    let x = &chevron.detunings;
    if x.len() < 5 {
        return Err(Error::domain("chevron axis fit needs at least 5 detuning columns"));
    }
    let (imax, _) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = width_guess.abs().max(1.0);
    let xs: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let res = levenberg_marquardt(
        |p, r| {
            for i in 0..xs.len() {
                let u = xs[i] - p[2];
                r[i] = p[0] + p[1] * p[3] * p[3] / (p[3] * p[3] + u * u) - y[i];
            }
        },
        &[ymin, y[imax] - ymin, xs[imax], 1.0],
        xs.len(),
        LmOptions::default(),
    )?;
    Ok(res.params[2] * scale)
}

/// Frequency shift at each amplitude, from the chevron axis. The detuning
/// grid spans `±span_factor·f_rabi` around the nominal resonance plus the
/// largest expected shift bound `max_shift`.
#[allow(clippy::too_many_arguments)]
pub fn shift_sweep(
    amplitudes: &[f64],
    durations: &[f64],
    n_detunings: usize,
    max_shift: f64,
    model: &SpectrumModel,
    params: &DeviceParams,
    n_shots: usize,
    seed: u64,
    noise: &ShotNoise,
) -> Result<Vec<(f64, f64)>> {
    amplitudes
        .iter()
        .map(|&a| {
            let f_rabi = params.rabi_frequency(a);
            let lo = -3.0 * f_rabi;
            let hi = 3.0 * f_rabi + max_shift;
            let grid: Vec<f64> = (0..n_detunings)
                .map(|i| lo + (hi - lo) * i as f64 / (n_detunings - 1) as f64)
                .collect();
            let ch = simulate_chevron(&grid, durations, a, model, params, n_shots, seed, noise)?;
            Ok((a, fit_chevron_axis(&ch, f_rabi)?))
        })
        .collect()
}

/// Fits `shift = c·E^p` in log-log space; returns `(c, p, p_stderr)`.
pub fn fit_shift_power_law(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().filter(|(a, s)| *a > 0.0 && *s > 0.0).cloned().unzip();
    let line = crate::stats::loglog_slope(&x, &y, 0.0, f64::INFINITY)?;
    Ok((10f64.powf(line.intercept), line.slope, line.slope_stderr))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> DeviceParams {
        DeviceParams {
            f_qubit_0: 0.0,
            ..DeviceParams::default()
        }
        .with_ideal_readout()
    }

    #[test]
    fn resonant_pi_pulse_flips() {
        let p = quiet();
        let tr = NoiseTrajectory::constant(0.0, 1e-9, 1000);
        let amp = 10.0;
        let f = p.rabi_frequency(amp);
        let s = evolve(BlochState::up(), &PulseSegment::drive(0.0, amp, 0.0, 0.5 / f), &tr, 0.0, 0.0, &p).unwrap();
        assert!((s.z + 1.0).abs() < 1e-6);
    }

    #[test]
    fn free_precession_phase() {
        let p = quiet();
        let df = 3.0e6;
        let tr = NoiseTrajectory::constant(df, 1e-9, 1000);
        let start = BlochState::new(1.0, 0.0, 0.0);
        let t = 123e-9;
        let s = evolve(start, &PulseSegment::idle(t), &tr, 0.0, 0.0, &p).unwrap();
        // Frame at f_qubit_0 = 0: Δ_q = −δf, so the vector turns by −2π·δf·t.
        let phase = s.y.atan2(s.x);
        let expect = -(2.0 * PI * df * t);
        let wrapped = (phase - expect).rem_euclid(2.0 * PI);
        assert!(wrapped.min(2.0 * PI - wrapped) < 1e-9);
        assert!((s.z).abs() < 1e-12);
    }

    #[test]
    fn relaxation_drives_to_up() {
        let mut p = quiet();
        p.gamma1 = 1e6;
        let tr = NoiseTrajectory::constant(0.0, 1e-6, 100);
        let s0 = BlochState::new(0.0, 0.6, -0.8);
        let t = 2e-6;
        let s = evolve(s0, &PulseSegment::idle(t), &tr, 0.0, 0.0, &p).unwrap();
        let zexp = 1.0 + (-0.8 - 1.0) * (-p.gamma1 * t).exp();
        let yexp = 0.6 * (-0.5 * p.gamma1 * t).exp();
        assert!((s.z - zexp).abs() < 1e-10);
        assert!((s.y - yexp).abs() < 1e-10);
    }

    #[test]
    fn readout_probabilities() {
        let ideal = quiet();
        assert_eq!(readout_probability(&BlochState::new(0.0, 0.0, -1.0), &ideal).unwrap(), 1.0);
        let d = DeviceParams::default();
        let p = readout_probability(&BlochState::new(1.0, 0.0, 0.0), &d).unwrap();
        assert!((p - 0.625).abs() < 1e-12);
    }

    #[test]
    fn invalid_readout_rejected() {
        let p = DeviceParams {
            readout_alpha: 0.5,
            readout_visibility: 0.8,
            ..DeviceParams::default()
        };
        assert!(matches!(p.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn shift_is_power_law() {
        let p = DeviceParams {
            shift_coeff: 1e6,
            ..DeviceParams::default()
        };
        assert_eq!(microwave_shift(&p, 0.0), 0.0);
        assert!((microwave_shift(&p, 2.0) - 4e6).abs() < 1e-6);
    }

    #[test]
    fn back_to_back_half_pi_pulses_flip() {
        let p = quiet();
        let tr = NoiseTrajectory::constant(0.0, 1e-9, 1000);
        for pulses in [RamseyPulses::Ideal, RamseyPulses::Finite { amplitude: 20.0 }] {
            let settings = RamseySettings {
                pulses,
                ..RamseySettings::default()
            };
            let s = ramsey_state(0.0, 0.0, &tr, 0.0, &p, &settings).unwrap();
            assert!((s.z + 1.0).abs() < 1e-9, "{pulses:?}");
        }
    }

    #[test]
    fn ramsey_oscillates_at_offset() {
        let p = quiet();
        let tr = NoiseTrajectory::constant(0.0, 1e-9, 1000);
        let settings = RamseySettings::default();
        let f_mw = 50e6;
        for k in 0..40 {
            let t = k as f64 * 1.3e-9;
            let s = ramsey_state(t, f_mw, &tr, 0.0, &p, &settings).unwrap();
            let pu = readout_probability(&s, &p).unwrap();
            let expect = 0.5 * (1.0 + (2.0 * PI * f_mw * t).cos());
            assert!((pu - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_too_short() {
        let p = quiet();
        let tr = NoiseTrajectory::constant(0.0, 1e-9, 10);
        let r = evolve(BlochState::up(), &PulseSegment::idle(1e-6), &tr, 0.0, 0.0, &p);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn negative_interval_rejected() {
        let p = quiet();
        assert!(ramsey_schedule(-1e-9, 0.0, &RamseySettings::default(), &p).is_err());
    }

    #[test]
    fn compensation_adds_pre_burst() {
        let p = quiet();
        let settings = RamseySettings {
            compensation_amplitude: Some(3.0),
            ..RamseySettings::default()
        };
        let s = ramsey_schedule(10e-9, 0.0, &settings, &p).unwrap();
        assert_eq!(s.segments.len(), 4);
        assert_eq!(s.segments[0].kind, SegmentKind::OffResonant);
        assert!((s.segments[0].duration - 200e-9).abs() < 1e-18);
        assert_eq!(s.segments[2].kind, SegmentKind::OffResonant);
    }
}
