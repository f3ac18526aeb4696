//! Declarative scenario configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinqubit::benchmarking::Gate;
use spinqubit::dynamics::DeviceParams;
use spinqubit::estimator::{EstimatorConfig, FeedbackTiming};
use spinqubit::noise::{PowerLaw, SpectrumModel, TrajectorySynthesizer};
use spinqubit::presets::{self, HighQRabi, Subdiffusive, SHOT_PERIOD};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    RamseyFree,
    FeedbackRamsey,
    LatencySweep,
    Chevron,
    ShiftVsAmplitude,
    Rabi,
    Rb,
    RabiSpectroscopy,
    ResidualPsd,
    SecCompare,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::RamseyFree,
        Scenario::FeedbackRamsey,
        Scenario::LatencySweep,
        Scenario::Chevron,
        Scenario::ShiftVsAmplitude,
        Scenario::Rabi,
        Scenario::Rb,
        Scenario::RabiSpectroscopy,
        Scenario::ResidualPsd,
        Scenario::SecCompare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::RamseyFree => "ramsey-free",
            Scenario::FeedbackRamsey => "feedback-ramsey",
            Scenario::LatencySweep => "latency-sweep",
            Scenario::Chevron => "chevron",
            Scenario::ShiftVsAmplitude => "shift-vs-amplitude",
            Scenario::Rabi => "rabi",
            Scenario::Rb => "rb",
            Scenario::RabiSpectroscopy => "rabi-spectroscopy",
            Scenario::ResidualPsd => "residual-psd",
            Scenario::SecCompare => "sec-compare",
        }
    }

    /// Shipped preset as TOML text.
    pub fn preset_toml(&self) -> &'static str {
        match self {
            Scenario::RamseyFree => include_str!("../presets/ramsey-free.toml"),
            Scenario::FeedbackRamsey => include_str!("../presets/feedback-ramsey.toml"),
            Scenario::LatencySweep => include_str!("../presets/latency-sweep.toml"),
            Scenario::Chevron => include_str!("../presets/chevron.toml"),
            Scenario::ShiftVsAmplitude => include_str!("../presets/shift-vs-amplitude.toml"),
            Scenario::Rabi => include_str!("../presets/rabi.toml"),
            Scenario::Rb => include_str!("../presets/rb.toml"),
            Scenario::RabiSpectroscopy => include_str!("../presets/rabi-spectroscopy.toml"),
            Scenario::ResidualPsd => include_str!("../presets/residual-psd.toml"),
            Scenario::SecCompare => include_str!("../presets/sec-compare.toml"),
        }
    }

    /// Noise used when the configuration has no `[noise]` table.
    pub fn default_noise(&self) -> NoiseSpec {
        match self {
            Scenario::RamseyFree => NoiseSpec::QuasiStaticT2star { t2star: 28.4e-9 },
            Scenario::FeedbackRamsey | Scenario::LatencySweep => NoiseSpec::Subdiffusive(SubdiffusiveSpec::default()),
            Scenario::Chevron | Scenario::ShiftVsAmplitude => NoiseSpec::QuasiStatic { sigma: 0.294e6 },
            Scenario::Rabi | Scenario::Rb => NoiseSpec::HighQRabi(HighQRabiSpec::default()),
            Scenario::RabiSpectroscopy | Scenario::SecCompare => NoiseSpec::OneOverF {
                a: 0.6e6,
                f_low: 0.5e3,
                f_high: 200e6,
            },
            Scenario::ResidualPsd => NoiseSpec::PowerLaw {
                amplitude: 1e9,
                exponent: 1.7,
                f_low: 1e3,
                f_high: 20e6,
            },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubdiffusiveSpec {
    pub alpha: f64,
    pub t2star_free: f64,
    pub sigma_b2_ref: f64,
    pub reference_lag: f64,
    pub f_high: f64,
}

impl Default for SubdiffusiveSpec {
    fn default() -> Self {
        let p = Subdiffusive::default();
        Self {
            alpha: p.alpha,
            t2star_free: p.t2star_free,
            sigma_b2_ref: p.sigma_b2_ref,
            reference_lag: p.reference_lag,
            f_high: p.f_high,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HighQRabiSpec {
    pub f_rabi: f64,
    pub t2_rabi: f64,
    pub static_sigma: f64,
}

impl Default for HighQRabiSpec {
    fn default() -> Self {
        let p = HighQRabi::default();
        Self {
            f_rabi: p.f_rabi,
            t2_rabi: p.t2_rabi,
            static_sigma: p.static_sigma,
        }
    }
}

impl HighQRabiSpec {
    pub fn preset(&self) -> HighQRabi {
        HighQRabi {
            f_rabi: self.f_rabi,
            t2_rabi: self.t2_rabi,
            static_sigma: self.static_sigma,
        }
    }
}

/// Noise spectrum, either a named preset or an explicit model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    QuasiStatic { sigma: f64 },
    QuasiStaticT2star { t2star: f64 },
    Subdiffusive(SubdiffusiveSpec),
    OneOverF { a: f64, f_low: f64, f_high: f64 },
    HighQRabi(HighQRabiSpec),
    LarmorPeaks { b_total: f64, f_low: f64, f_high: f64 },
    PowerLaw { amplitude: f64, exponent: f64, f_low: f64, f_high: f64 },
    Custom { model: SpectrumModel },
}

impl NoiseSpec {
    pub fn model(&self) -> spinqubit::Result<SpectrumModel> {
        let m = match self {
            NoiseSpec::QuasiStatic { sigma } => {
                if !(*sigma >= 0.0) {
                    return Err(config_err("sigma", "must be >= 0"));
                }
                presets::quasi_static(*sigma)
            }
            NoiseSpec::QuasiStaticT2star { t2star } => presets::quasi_static_t2star(*t2star)
                .map_err(|_| config_err("t2star", format!("must be > 0, got {t2star}")))?,
            NoiseSpec::Subdiffusive(s) => Subdiffusive {
                alpha: s.alpha,
                t2star_free: s.t2star_free,
                sigma_b2_ref: s.sigma_b2_ref,
                reference_lag: s.reference_lag,
                f_high: s.f_high,
            }
            .model()
            .map_err(|e| match e {
                spinqubit::Error::Domain(m) => config_err("alpha", m),
                other => other,
            })?,
            NoiseSpec::OneOverF { a, f_low, f_high } => presets::one_over_f(*a, *f_low, *f_high),
            NoiseSpec::HighQRabi(s) => s.preset().model(),
            NoiseSpec::LarmorPeaks { b_total, f_low, f_high } => presets::larmor_peaks(*b_total, *f_low, *f_high)
                .map_err(|e| match e {
                    spinqubit::Error::Domain(m) => config_err("b_total", m),
                    other => other,
                })?,
            NoiseSpec::PowerLaw {
                amplitude,
                exponent,
                f_low,
                f_high,
            } => SpectrumModel::band(*f_low, *f_high).with_power_law(PowerLaw::new(*amplitude, *exponent)),
            NoiseSpec::Custom { model } => model.clone(),
        };
        m.validate()?;
        Ok(m)
    }
}

fn config_err(field: &str, message: impl Into<String>) -> spinqubit::Error {
    spinqubit::Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RamseyFreeParams {
    /// Microwave offset from the nominal resonance, Hz.
    pub offset: f64,
    pub t_max: f64,
    pub n_points: usize,
    pub shots: usize,
    /// Per-shot trajectory spacing, s (default chosen from the band).
    pub shot_dt: Option<f64>,
    pub target_t2star: f64,
    /// Relative tolerance on `T₂*`.
    pub tolerance: f64,
}

impl Default for RamseyFreeParams {
    fn default() -> Self {
        Self {
            offset: 100e6,
            t_max: 100e-9,
            n_points: 200,
            shots: 10_000,
            shot_dt: None,
            target_t2star: 28.4e-9,
            tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeedbackRamseyParams {
    pub n_cycles: usize,
    pub timing: FeedbackTiming,
    /// Target-step Ramsey intervals: `n` steps of `step` seconds.
    pub target_step: f64,
    pub target_points: usize,
    pub max_samples: usize,
    /// Unfed reference trace.
    pub unfed_offset: f64,
    pub unfed_t_max: f64,
    pub unfed_points: usize,
    pub unfed_shots: usize,
    /// Residual σ must stay below `floor_factor · bin_width/√12`.
    pub floor_factor: f64,
    /// Minimum ratio of fed to unfed `T₂*`.
    pub min_gain: f64,
}

impl Default for FeedbackRamseyParams {
    fn default() -> Self {
        Self {
            n_cycles: 400,
            timing: FeedbackTiming::default(),
            target_step: 20e-9,
            target_points: 150,
            max_samples: 1 << 22,
            unfed_offset: 100e6,
            unfed_t_max: 100e-9,
            unfed_points: 200,
            unfed_shots: 4000,
            floor_factor: 2.0,
            min_gain: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencySweepParams {
    /// Wait times `T_w`, s.
    pub waits: Vec<f64>,
    pub n_cycles: usize,
    pub max_samples: usize,
    pub timing: FeedbackTiming,
    pub target_alpha: f64,
    pub alpha_tolerance: f64,
    /// Tolerance on `σ²/σ_B²` at the largest latency.
    pub ratio_tolerance: f64,
}

impl Default for LatencySweepParams {
    fn default() -> Self {
        Self {
            waits: (0..10).map(|i| 2e-3 * 1500f64.powf(i as f64 / 9.0)).collect(),
            n_cycles: 1000,
            max_samples: 1 << 21,
            timing: FeedbackTiming::default(),
            target_alpha: 0.84,
            alpha_tolerance: 0.15,
            ratio_tolerance: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChevronParams {
    pub amplitude: f64,
    pub n_detunings: usize,
    /// Grid spans `±span_factor·f_rabi` around the expected axis.
    pub span_factor: f64,
    pub t_max: f64,
    pub n_durations: usize,
    pub shots: usize,
    pub shot_dt: Option<f64>,
}

impl Default for ChevronParams {
    fn default() -> Self {
        Self {
            amplitude: 2.0,
            n_detunings: 41,
            span_factor: 3.0,
            t_max: 1.5e-6,
            n_durations: 60,
            shots: 50,
            shot_dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftParams {
    pub amplitudes: Vec<f64>,
    pub n_detunings: usize,
    pub t_max: f64,
    pub n_durations: usize,
    /// Upper bound on the shift, widens the detuning grid, Hz.
    pub max_shift: f64,
    pub shots: usize,
    pub shot_dt: Option<f64>,
    /// Tolerance on the recovered exponent.
    pub exponent_tolerance: f64,
}

impl Default for ShiftParams {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.75, 1.0, 1.5, 2.0, 2.5, 3.0],
            n_detunings: 41,
            t_max: 1.5e-6,
            n_durations: 60,
            max_shift: 5e6,
            shots: 20,
            shot_dt: None,
            exponent_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiParams {
    /// Drive Rabi frequency, Hz.
    pub f_rabi: f64,
    pub t_max: f64,
    pub n_points: usize,
    pub shots: usize,
    pub shot_dt: Option<f64>,
    pub target_q: f64,
    pub q_tolerance: f64,
    pub target_fidelity: f64,
    pub fidelity_tolerance: f64,
}

impl Default for RabiParams {
    fn default() -> Self {
        Self {
            f_rabi: 33.64e6,
            t_max: 4e-6,
            n_points: 1500,
            shots: 20_000,
            shot_dt: None,
            target_q: 84.8,
            q_tolerance: 8.0,
            target_fidelity: 0.988,
            fidelity_tolerance: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RbErrorSpec {
    Ideal,
    DepolarizingPerClifford { r: f64 },
    DepolarizingPerGenerator { r: f64 },
    OverRotation { epsilon: f64 },
    /// Bursts at the Rabi frequency `f_rabi` through the noisy dynamics.
    Dynamics { f_rabi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbParams {
    pub error: RbErrorSpec,
    pub lengths: Vec<usize>,
    pub n_sequences: usize,
    /// Binomial shots per sequence; 0 uses exact survival.
    pub shots: usize,
    pub interleaved: Vec<Gate>,
    /// Expected average Clifford fidelity and its tolerance.
    pub expected_average: Option<f64>,
    pub average_tolerance: f64,
    /// Expected interleaved gate fidelity and its tolerance.
    pub expected_gate: Option<f64>,
    pub gate_tolerance: f64,
}

impl Default for RbParams {
    fn default() -> Self {
        Self {
            error: RbErrorSpec::Dynamics { f_rabi: 33.64e6 },
            lengths: vec![1, 2, 4, 8, 16, 32, 64, 128],
            n_sequences: 1000,
            shots: 0,
            interleaved: vec![Gate::X180],
            expected_average: None,
            average_tolerance: 0.001,
            expected_gate: Some(0.988),
            gate_tolerance: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectroscopyParams {
    pub f_rabi: Vec<f64>,
    pub shots: usize,
    /// Trace length in expected decay times.
    pub decay_times: f64,
    /// Allowed deviation of the extracted density, dB.
    pub tolerance_db: f64,
    pub shot_dt: Option<f64>,
}

impl Default for SpectroscopyParams {
    fn default() -> Self {
        Self {
            f_rabi: vec![2e6, 4e6, 8e6, 16e6],
            shots: 2000,
            decay_times: 3.0,
            tolerance_db: 3.0,
            shot_dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecCompareParams {
    pub spectroscopy: SpectroscopyParams,
    /// `A` of the larger spin-electric coupling, Hz.
    pub a_large: f64,
    pub expected_ratio: f64,
    pub ratio_tolerance: f64,
}

impl Default for SecCompareParams {
    fn default() -> Self {
        Self {
            spectroscopy: SpectroscopyParams::default(),
            a_large: 1.0e6,
            expected_ratio: 1.67,
            ratio_tolerance: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualPsdParams {
    pub dt: f64,
    pub n_samples: usize,
    pub segment_len: usize,
    /// Frequency band of the slope fit, Hz.
    pub slope_band: [f64; 2],
    pub expected_slope: Option<f64>,
    pub slope_tolerance: f64,
    /// Larmor-peak check at this total field, T.
    pub larmor_b_total: Option<f64>,
    pub larmor_band: [f64; 2],
    pub peak_window: usize,
    pub peak_ratio: f64,
    /// Closed-loop residual spectrum on the subdiffusive preset (0 skips it).
    pub feedback_cycles: usize,
}

impl Default for ResidualPsdParams {
    fn default() -> Self {
        Self {
            dt: 25e-9,
            n_samples: 1 << 20,
            segment_len: 4096,
            slope_band: [1e5, 5e6],
            expected_slope: Some(-1.7),
            slope_tolerance: 0.15,
            larmor_b_total: Some(1.08),
            larmor_band: [1e3, 20e6],
            peak_window: 5,
            peak_ratio: 5.0,
            feedback_cycles: 400,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<Scenario>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub device: DeviceParams,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub noise: Option<NoiseSpec>,
    pub ramsey_free: Option<RamseyFreeParams>,
    pub feedback_ramsey: Option<FeedbackRamseyParams>,
    pub latency_sweep: Option<LatencySweepParams>,
    pub chevron: Option<ChevronParams>,
    pub shift_vs_amplitude: Option<ShiftParams>,
    pub rabi: Option<RabiParams>,
    pub rb: Option<RbParams>,
    pub rabi_spectroscopy: Option<SpectroscopyParams>,
    pub residual_psd: Option<ResidualPsdParams>,
    pub sec_compare: Option<SecCompareParams>,
}

impl ScenarioConfig {
    /// The shipped preset of a scenario.
    pub fn preset(scenario: Scenario) -> Self {
        let mut c = parse_config(scenario.preset_toml()).expect("shipped presets parse");
        c.scenario = Some(scenario);
        c
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        self.scenario
            .ok_or_else(|| CliError::config("scenario", "missing; name the scenario in the file or on the command line"))
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec, CliError> {
        Ok(self.noise.clone().unwrap_or_else(|| {
            self.scenario.map(|s| s.default_noise()).unwrap_or(NoiseSpec::QuasiStatic { sigma: 0.0 })
        }))
    }

    pub fn noise_model(&self) -> Result<SpectrumModel, CliError> {
        self.noise_spec()?.model().map_err(|e| CliError::from_core(e.within("noise")))
    }

    /// Sets the Monte-Carlo shot count of the active scenario.
    pub fn override_shots(&mut self, shots: usize) -> Result<(), CliError> {
        match self.scenario()? {
            Scenario::RamseyFree => self.ramsey_free.get_or_insert_with(Default::default).shots = shots,
            Scenario::FeedbackRamsey => self.feedback_ramsey.get_or_insert_with(Default::default).unfed_shots = shots,
            Scenario::Chevron => self.chevron.get_or_insert_with(Default::default).shots = shots,
            Scenario::ShiftVsAmplitude => self.shift_vs_amplitude.get_or_insert_with(Default::default).shots = shots,
            Scenario::Rabi => self.rabi.get_or_insert_with(Default::default).shots = shots,
            Scenario::Rb => self.rb.get_or_insert_with(Default::default).shots = shots,
            Scenario::RabiSpectroscopy => self.rabi_spectroscopy.get_or_insert_with(Default::default).shots = shots,
            Scenario::SecCompare => {
                self.sec_compare.get_or_insert_with(Default::default).spectroscopy.shots = shots;
            }
            Scenario::LatencySweep | Scenario::ResidualPsd => {
                log::warn!("--shots has no effect on {}", self.scenario()?);
            }
        }
        Ok(())
    }

    /// Schema and invariant checks; never runs a scenario.
    pub fn validate(&self) -> Result<(), CliError> {
        let scenario = self.scenario()?;
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds", "must list at least one seed"));
        }
        self.device.validate().map_err(|e| CliError::from_core(e.within("device")))?;
        self.estimator
            .validate()
            .map_err(|e| CliError::from_core(e.within("estimator")))?;
        let model = self.noise_model()?;

        let present: [(Scenario, bool); 10] = [
            (Scenario::RamseyFree, self.ramsey_free.is_some()),
            (Scenario::FeedbackRamsey, self.feedback_ramsey.is_some()),
            (Scenario::LatencySweep, self.latency_sweep.is_some()),
            (Scenario::Chevron, self.chevron.is_some()),
            (Scenario::ShiftVsAmplitude, self.shift_vs_amplitude.is_some()),
            (Scenario::Rabi, self.rabi.is_some()),
            (Scenario::Rb, self.rb.is_some()),
            (Scenario::RabiSpectroscopy, self.rabi_spectroscopy.is_some()),
            (Scenario::ResidualPsd, self.residual_psd.is_some()),
            (Scenario::SecCompare, self.sec_compare.is_some()),
        ];
        for (s, has) in present {
            if has && s != scenario {
                return Err(CliError::config(
                    section(s),
                    format!("table does not apply to scenario {scenario}"),
                ));
            }
        }

        let sec = section(scenario);
        match scenario {
            Scenario::RamseyFree => {
                let p = self.ramsey_free.clone().unwrap_or_default();
                positive(sec, "t_max", p.t_max)?;
                at_least(sec, "n_points", p.n_points, 10)?;
                at_least(sec, "shots", p.shots, 1)?;
                positive(sec, "target_t2star", p.target_t2star)?;
                positive(sec, "tolerance", p.tolerance)?;
                shot_dt(sec, p.shot_dt, &model)?;
            }
            Scenario::FeedbackRamsey => {
                let p = self.feedback_ramsey.clone().unwrap_or_default();
                at_least(sec, "n_cycles", p.n_cycles, 10)?;
                p.timing
                    .validate()
                    .map_err(|e| CliError::from_core(e.within(&format!("{sec}.timing"))))?;
                positive(sec, "target_step", p.target_step)?;
                at_least(sec, "target_points", p.target_points, 10)?;
                at_least(sec, "unfed_points", p.unfed_points, 10)?;
                at_least(sec, "unfed_shots", p.unfed_shots, 1)?;
                positive(sec, "unfed_t_max", p.unfed_t_max)?;
                at_least(sec, "max_samples", p.max_samples, 1024)?;
            }
            Scenario::LatencySweep => {
                let p = self.latency_sweep.clone().unwrap_or_default();
                if p.waits.len() < 6 {
                    return Err(CliError::config(format!("{sec}.waits"), "need at least 6 wait times"));
                }
                if let Some(w) = p.waits.iter().find(|w| !(**w >= 0.0)) {
                    return Err(CliError::config(format!("{sec}.waits"), format!("wait times must be >= 0, got {w}")));
                }
                at_least(sec, "n_cycles", p.n_cycles, 10)?;
                at_least(sec, "max_samples", p.max_samples, 1024)?;
                p.timing
                    .validate()
                    .map_err(|e| CliError::from_core(e.within(&format!("{sec}.timing"))))?;
            }
            Scenario::Chevron => {
                let p = self.chevron.clone().unwrap_or_default();
                positive(sec, "amplitude", p.amplitude)?;
                at_least(sec, "n_detunings", p.n_detunings, 5)?;
                at_least(sec, "n_durations", p.n_durations, 2)?;
                positive(sec, "t_max", p.t_max)?;
                positive(sec, "span_factor", p.span_factor)?;
                at_least(sec, "shots", p.shots, 1)?;
                shot_dt(sec, p.shot_dt, &model)?;
            }
            Scenario::ShiftVsAmplitude => {
                let p = self.shift_vs_amplitude.clone().unwrap_or_default();
                if p.amplitudes.len() < 3 || p.amplitudes.iter().any(|a| !(*a > 0.0)) {
                    return Err(CliError::config(
                        format!("{sec}.amplitudes"),
                        "need at least 3 amplitudes, all > 0",
                    ));
                }
                at_least(sec, "n_detunings", p.n_detunings, 5)?;
                at_least(sec, "n_durations", p.n_durations, 2)?;
                positive(sec, "t_max", p.t_max)?;
                at_least(sec, "shots", p.shots, 1)?;
                if !(self.device.shift_coeff > 0.0) {
                    return Err(CliError::config("device.shift_coeff", "must be > 0 for a shift sweep"));
                }
                shot_dt(sec, p.shot_dt, &model)?;
            }
            Scenario::Rabi => {
                let p = self.rabi.clone().unwrap_or_default();
                positive(sec, "f_rabi", p.f_rabi)?;
                positive(sec, "t_max", p.t_max)?;
                at_least(sec, "n_points", p.n_points, 10)?;
                at_least(sec, "shots", p.shots, 1)?;
                shot_dt(sec, p.shot_dt, &model)?;
            }
            Scenario::Rb => {
                let p = self.rb.clone().unwrap_or_default();
                let cfg = spinqubit::benchmarking::RbConfig {
                    lengths: p.lengths.clone(),
                    n_sequences: p.n_sequences,
                    shots: p.shots,
                };
                cfg.validate().map_err(|e| CliError::from_core(e.within(sec)))?;
                match p.error {
                    RbErrorSpec::DepolarizingPerClifford { r } | RbErrorSpec::DepolarizingPerGenerator { r } => {
                        if !(0.0..=1.0).contains(&r) {
                            return Err(CliError::config(format!("{sec}.error.r"), "must lie in [0, 1]"));
                        }
                    }
                    RbErrorSpec::Dynamics { f_rabi } => positive(&format!("{sec}.error"), "f_rabi", f_rabi)?,
                    _ => {}
                }
            }
            Scenario::RabiSpectroscopy => {
                let p = self.rabi_spectroscopy.clone().unwrap_or_default();
                spectroscopy(sec, &p, &model)?;
            }
            Scenario::SecCompare => {
                let p = self.sec_compare.clone().unwrap_or_default();
                spectroscopy(&format!("{sec}.spectroscopy"), &p.spectroscopy, &model)?;
                positive(sec, "a_large", p.a_large)?;
                if !matches!(self.noise_spec()?, NoiseSpec::OneOverF { .. }) {
                    return Err(CliError::config("noise.kind", "sec-compare needs a one_over_f spectrum"));
                }
            }
            Scenario::ResidualPsd => {
                let p = self.residual_psd.clone().unwrap_or_default();
                positive(sec, "dt", p.dt)?;
                if p.segment_len < 16 || !p.segment_len.is_power_of_two() {
                    return Err(CliError::config(format!("{sec}.segment_len"), "must be a power of two >= 16"));
                }
                if p.n_samples < 4 * p.segment_len {
                    return Err(CliError::config(format!("{sec}.n_samples"), "need at least 4 segments"));
                }
                nyquist(&format!("{sec}.dt"), p.dt, &model)?;
                if let Some(b) = p.larmor_b_total {
                    let lm = presets::larmor_peaks(b, p.larmor_band[0], p.larmor_band[1])
                        .map_err(|e| CliError::from_core(e.within(&format!("{sec}.larmor_band"))))?;
                    nyquist(&format!("{sec}.dt"), p.dt, &lm)?;
                }
            }
        }
        Ok(())
    }
}

/// TOML table name of a scenario.
pub fn section(s: Scenario) -> &'static str {
    match s {
        Scenario::RamseyFree => "ramsey_free",
        Scenario::FeedbackRamsey => "feedback_ramsey",
        Scenario::LatencySweep => "latency_sweep",
        Scenario::Chevron => "chevron",
        Scenario::ShiftVsAmplitude => "shift_vs_amplitude",
        Scenario::Rabi => "rabi",
        Scenario::Rb => "rb",
        Scenario::RabiSpectroscopy => "rabi_spectroscopy",
        Scenario::ResidualPsd => "residual_psd",
        Scenario::SecCompare => "sec_compare",
    }
}

fn positive(sec: &str, field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!("{sec}.{field}"), format!("must be > 0, got {v}")))
    }
}

fn at_least(sec: &str, field: &str, v: usize, min: usize) -> Result<(), CliError> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::config(format!("{sec}.{field}"), format!("must be >= {min}, got {v}")))
    }
}

/// Trajectory synthesis requires `1/(2dt) >= f_high`.
fn nyquist(field: &str, dt: f64, model: &SpectrumModel) -> Result<(), CliError> {
    match TrajectorySynthesizer::new(model, dt, 16, true) {
        Ok(_) => Ok(()),
        Err(spinqubit::Error::Config { message, .. }) => Err(CliError::config(
            field,
            format!("{message}; trajectory synthesis requires 1/(2 dt) >= f_high"),
        )),
        Err(e) => Err(CliError::from_core(e)),
    }
}

fn shot_dt(sec: &str, dt: Option<f64>, model: &SpectrumModel) -> Result<(), CliError> {
    match dt {
        Some(dt) => {
            positive(sec, "shot_dt", dt)?;
            nyquist(&format!("{sec}.shot_dt"), dt, model)
        }
        None => Ok(()),
    }
}

fn spectroscopy(sec: &str, p: &SpectroscopyParams, model: &SpectrumModel) -> Result<(), CliError> {
    if p.f_rabi.is_empty() || p.f_rabi.iter().any(|f| !(*f > 0.0)) {
        return Err(CliError::config(format!("{sec}.f_rabi"), "need at least one Rabi frequency, all > 0"));
    }
    at_least(sec, "shots", p.shots, 1)?;
    positive(sec, "decay_times", p.decay_times)?;
    positive(sec, "tolerance_db", p.tolerance_db)?;
    shot_dt(sec, p.shot_dt, model)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("parse error: {}", e.to_string().trim_end())))
}

/// Reads, parses and validates a configuration file.
pub fn validate_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let cfg = parse_config(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Shot period shared by the feedback scenarios.
pub const fn shot_period() -> f64 {
    SHOT_PERIOD
}
