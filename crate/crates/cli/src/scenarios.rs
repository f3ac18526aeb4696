//! Execution of each scenario.

use std::f64::consts::PI;

use spinqubit::benchmarking::{interleaved_rb, rb_summary_csv, simulate_rb, ErrorModel, RbConfig, RbResult};
use spinqubit::coherence::{extract_s_at_frabi, fit_decay, fit_rabi_decay, static_variance, DecayFit, DecayKind};
use spinqubit::dynamics::{
    fit_chevron_axis, fit_shift_power_law, microwave_shift, shift_sweep, simulate_chevron, simulate_rabi_trace,
    simulate_ramsey_trace, DeviceParams, RamseySettings, ShotMode, ShotNoise, Trace,
};
use spinqubit::estimator::{latency_sweep, run_feedback_loop, EstimatorConfig, FeedbackOptions};
use spinqubit::noise::{
    derive_larmor_frequencies, estimate_psd, synthesize_trajectory, GyromagneticRatios, NoiseTrajectory, SpectrumModel,
};
use spinqubit::presets::{larmor_peaks, one_over_f, Subdiffusive};
use spinqubit::stats::loglog_slope;

use crate::config::{NoiseSpec, RbErrorSpec, Scenario, ScenarioConfig, SpectroscopyParams};
use crate::output::{write_summary, Artifacts, Check, RunSummary, Summary};
use crate::CliError;

fn linspace(t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t_max * i as f64 / (n - 1).max(1) as f64).collect()
}

fn shot_noise(dt: Option<f64>) -> ShotNoise {
    ShotNoise {
        dt,
        mode: ShotMode::Expectation,
    }
}

fn estimator(cfg: &ScenarioConfig) -> EstimatorConfig {
    cfg.estimator.clone().with_readout(&cfg.device)
}

fn fit_csv(fits: &[(&str, &DecayFit)]) -> String {
    let mut s = format!("trace,{},timescale_stderr_s\n", DecayFit::csv_header());
    for (label, f) in fits {
        s.push_str(&format!("{label},{},{:.9e}\n", f.csv_row(), f.timescale_stderr));
    }
    s
}

/// Rabi decay fit with the static variance below `1/τ` divided out,
/// iterated on the fitted `τ`.
fn fit_rabi_iterated(trace: &Trace, model: &SpectrumModel, tau_guess: f64) -> Result<DecayFit, CliError> {
    let pts = trace.points();
    let mut fit = fit_rabi_decay(&pts, static_variance(model, tau_guess, 1.0).sqrt())?;
    for _ in 0..3 {
        fit = fit_rabi_decay(&pts, static_variance(model, fit.timescale, 1.0).sqrt())?;
    }
    Ok(fit)
}

/// Runs every seed of a validated configuration and writes `summary.json`.
/// Errors inside a run are recorded in the summary, which is still written.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Summary, CliError> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let root = cfg.output_dir.clone();
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let sub = (cfg.seeds.len() > 1).then(|| format!("seed_{seed}"));
        let mut art = Artifacts::new(&root, sub.as_deref())?;
        let mut run = RunSummary {
            seed,
            ..RunSummary::default()
        };
        log::info!("running {scenario} with seed {seed}");
        let res = dispatch(scenario, cfg, seed, &mut art, &mut run);
        run.files = std::mem::take(&mut art.files);
        if let Err(e) = res {
            log::error!("{scenario} seed {seed}: {e}");
            run.partial = true;
            run.error = Some(e.to_string());
        }
        run.pass = run.error.is_none() && run.checks.iter().all(|c| c.pass);
        runs.push(run);
    }
    let summary = Summary {
        scenario: scenario.name().into(),
        pass: runs.iter().all(|r| r.pass),
        runs,
        config: serde_json::to_value(cfg).expect("config serializes"),
    };
    write_summary(&root, &summary)?;
    Ok(summary)
}

fn dispatch(s: Scenario, cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    match s {
        Scenario::RamseyFree => ramsey_free(cfg, seed, art, run),
        Scenario::FeedbackRamsey => feedback_ramsey(cfg, seed, art, run),
        Scenario::LatencySweep => latency(cfg, seed, art, run),
        Scenario::Chevron => chevron(cfg, seed, art, run),
        Scenario::ShiftVsAmplitude => shift(cfg, seed, art, run),
        Scenario::Rabi => rabi(cfg, seed, art, run),
        Scenario::Rb => rb(cfg, seed, art, run),
        Scenario::RabiSpectroscopy => rabi_spectroscopy(cfg, seed, art, run),
        Scenario::ResidualPsd => residual_psd(cfg, seed, art, run),
        Scenario::SecCompare => sec_compare(cfg, seed, art, run),
    }
}

fn ramsey_free(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.ramsey_free.clone().unwrap_or_default();
    let dev = &cfg.device;
    let model = cfg.noise_model()?;
    let times = linspace(p.t_max, p.n_points);
    let trace = simulate_ramsey_trace(
        &times,
        dev.f_qubit_0 + p.offset,
        &model,
        dev,
        &RamseySettings::default(),
        p.shots,
        seed,
        &shot_noise(p.shot_dt),
    )?;
    art.text("ramsey_free.csv", &trace.to_csv())?;
    art.plot(
        "ramsey_free",
        r#"
d = load('ramsey_free.csv')
plt.errorbar([t * 1e9 for t in d['t_s']], d['P_up'], yerr=d['stderr'], fmt='.', ms=3)
plt.xlabel('t_R (ns)')
plt.ylabel('P(up)')
plt.title('Free-evolution Ramsey')
"#,
    )?;
    let fit = fit_decay(&trace.points(), DecayKind::Gaussian)?;
    art.text("ramsey_free_fit.csv", &fit_csv(&[("free", &fit)]))?;
    run.value("t2star_s", fit.timescale);
    run.value("t2star_stderr_s", fit.timescale_stderr);
    run.value("fringe_frequency_Hz", fit.frequency);
    run.value("model_sigma_Hz", model.variance().sqrt());
    run.check(Check::relative("t2star_s", fit.timescale, p.target_t2star, p.tolerance));
    Ok(())
}

fn feedback_ramsey(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.feedback_ramsey.clone().unwrap_or_default();
    let dev = &cfg.device;
    let est = estimator(cfg);
    let model = cfg.noise_model()?;

    let unfed = simulate_ramsey_trace(
        &linspace(p.unfed_t_max, p.unfed_points),
        dev.f_qubit_0 + p.unfed_offset,
        &model,
        dev,
        &RamseySettings::default(),
        p.unfed_shots,
        seed,
        &ShotNoise::default(),
    )?;
    art.text("unfed_trace.csv", &unfed.to_csv())?;

    let opts = FeedbackOptions {
        timing: p.timing,
        n_cycles: p.n_cycles,
        target_intervals: (0..p.target_points).map(|k| k as f64 * p.target_step).collect(),
        max_samples: p.max_samples,
        ..FeedbackOptions::default()
    };
    let fb = run_feedback_loop(&model, dev, &est, &opts, seed)?;
    art.text("feedback_history.csv", &fb.history_csv())?;
    art.text("fed_trace.csv", &fb.target_trace.to_csv())?;
    art.plot(
        "feedback_ramsey",
        r#"
u = load('unfed_trace.csv')
f = load('fed_trace.csv')
h = load('feedback_history.csv')
fig, ax = plt.subplots(1, 2, figsize=(10, 4))
ax[0].plot([t * 1e9 for t in u['t_s']], u['P_up'], '.', ms=3, label='feedback off')
ax[0].plot([t * 1e9 for t in f['t_s']], f['P_up'], '.', ms=3, label='feedback on')
ax[0].set_xlabel('t_R (ns)')
ax[0].set_ylabel('P(up)')
ax[0].legend()
ax[1].plot(h['time_s'], [v / 1e6 for v in h['delta_f_true_Hz']], lw=0.8, label='true offset')
ax[1].plot(h['time_s'], [v / 1e6 for v in h['delta_f_est_Hz']], lw=0.8, label='estimate')
ax[1].set_xlabel('time (s)')
ax[1].set_ylabel('frequency offset (MHz)')
ax[1].legend()
"#,
    )?;

    let unfed_fit = fit_decay(&unfed.points(), DecayKind::Gaussian)?;
    let fed_fit = fit_decay(&fb.target_trace.points(), DecayKind::Gaussian)?;
    art.text("feedback_fit.csv", &fit_csv(&[("unfed", &unfed_fit), ("fed", &fed_fit)]))?;
    let sigma = fb.sigma2.sqrt();
    let floor = est.bin_width / 12f64.sqrt();
    let gain = fed_fit.timescale / unfed_fit.timescale;
    run.value("residual_sigma_Hz", sigma);
    run.value("quantization_sigma_Hz", fb.quantization_var.sqrt());
    run.value("estimator_sigma_Hz", fb.estimator_var.sqrt());
    run.value("readout_excess_sigma_Hz", fb.readout_var.sqrt());
    run.value("drift_sigma_Hz", fb.drift_var.sqrt());
    run.value("free_sigma_Hz", fb.free_var.sqrt());
    run.value("latency_s", fb.latency);
    run.value("t2star_unfed_s", unfed_fit.timescale);
    run.value("t2star_fed_s", fed_fit.timescale);
    run.value("t2star_gain", gain);
    run.check(Check::at_most("residual_sigma_Hz", sigma, p.floor_factor * floor));
    run.check(Check::at_least("t2star_gain", gain, p.min_gain));
    Ok(())
}

fn latency(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.latency_sweep.clone().unwrap_or_default();
    let model = cfg.noise_model()?;
    let opts = FeedbackOptions {
        timing: p.timing,
        n_cycles: p.n_cycles,
        max_samples: p.max_samples,
        ..FeedbackOptions::default()
    };
    let sweep = latency_sweep(&model, &cfg.device, &estimator(cfg), &opts, &p.waits, seed)?;
    let rows: Vec<Vec<f64>> = sweep
        .points
        .iter()
        .map(|q| vec![q.wait, q.delta_t, q.sigma2, q.sigma_b2, q.estimator_var, q.drift_var])
        .collect();
    art.table(
        "latency_sweep.csv",
        &["wait_s", "delta_t_s", "sigma2_Hz2", "sigmaB2_Hz2", "estimator_var_Hz2", "drift_var_Hz2"],
        &rows,
    )?;
    art.plot(
        "latency_sweep",
        r#"
d = load('latency_sweep.csv')
plt.loglog(d['delta_t_s'], [v / 1e12 for v in d['sigma2_Hz2']], 'o', label='residual variance')
plt.loglog(d['delta_t_s'], [v / 1e12 for v in d['sigmaB2_Hz2']], 's', mfc='none', label='correlator variance')
plt.xlabel('latency (s)')
plt.ylabel('variance (MHz^2)')
plt.legend()
"#,
    )?;
    let last = sweep.points.last().expect("validated non-empty");
    let ratio = last.sigma2 / last.sigma_b2;
    run.value("alpha", sweep.fit.alpha);
    run.value("alpha_stderr", sweep.fit.alpha_stderr);
    run.value("d_Hz2_per_s_alpha", sweep.fit.d);
    run.value("floor_sigma_Hz", sweep.fit.floor2.sqrt());
    run.value("ratio_at_largest_latency", ratio);
    run.check(Check::absolute("alpha", sweep.fit.alpha, p.target_alpha, p.alpha_tolerance));
    run.check(Check::absolute("ratio_at_largest_latency", ratio, 1.0, p.ratio_tolerance));
    Ok(())
}

fn chevron(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.chevron.clone().unwrap_or_default();
    let dev = &cfg.device;
    let model = cfg.noise_model()?;
    let f_r = dev.rabi_frequency(p.amplitude);
    let expected = microwave_shift(dev, p.amplitude);
    let lo = expected.min(0.0) - p.span_factor * f_r;
    let hi = expected.max(0.0) + p.span_factor * f_r;
    let step = (hi - lo) / (p.n_detunings - 1) as f64;
    let grid: Vec<f64> = (0..p.n_detunings).map(|i| lo + i as f64 * step).collect();
    let durations = linspace(p.t_max, p.n_durations);
    let ch = simulate_chevron(&grid, &durations, p.amplitude, &model, dev, p.shots, seed, &shot_noise(p.shot_dt))?;
    art.text("chevron.csv", &ch.to_csv())?;
    art.plot(
        "chevron",
        r#"
d = load('chevron.csv')
xs = sorted(set(d['detuning_Hz']))
ts = sorted(set(d['t_s']))
z = [[0.0] * len(xs) for _ in ts]
for x, t, p in zip(d['detuning_Hz'], d['t_s'], d['P_up']):
    z[ts.index(t)][xs.index(x)] = p
plt.pcolormesh([x / 1e6 for x in xs], [t * 1e9 for t in ts], z, shading='nearest')
plt.colorbar(label='P(up)')
plt.xlabel('f_MW - f_qubit,0 (MHz)')
plt.ylabel('burst duration (ns)')
"#,
    )?;
    let axis = fit_chevron_axis(&ch, f_r)?;
    run.value("axis_Hz", axis);
    run.value("expected_shift_Hz", expected);
    run.value("grid_step_Hz", step);
    run.check(Check::absolute("axis_Hz", axis, expected, step));
    Ok(())
}

fn shift(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.shift_vs_amplitude.clone().unwrap_or_default();
    let dev = &cfg.device;
    let model = cfg.noise_model()?;
    let durations = linspace(p.t_max, p.n_durations);
    let pts = shift_sweep(
        &p.amplitudes,
        &durations,
        p.n_detunings,
        p.max_shift,
        &model,
        dev,
        p.shots,
        seed,
        &shot_noise(p.shot_dt),
    )?;
    let rows: Vec<Vec<f64>> = pts.iter().map(|(a, s)| vec![*a, *s, microwave_shift(dev, *a)]).collect();
    art.table("shift_vs_amplitude.csv", &["amplitude", "shift_Hz", "injected_Hz"], &rows)?;
    art.plot(
        "shift_vs_amplitude",
        r#"
d = load('shift_vs_amplitude.csv')
plt.loglog(d['amplitude'], [v / 1e6 for v in d['shift_Hz']], 'o', label='chevron axis')
plt.loglog(d['amplitude'], [v / 1e6 for v in d['injected_Hz']], '-', label='injected')
plt.xlabel('drive amplitude')
plt.ylabel('frequency shift (MHz)')
plt.legend()
"#,
    )?;
    let (c, exponent, stderr) = fit_shift_power_law(&pts)?;
    run.value("coefficient_Hz", c);
    run.value("exponent", exponent);
    run.value("exponent_stderr", stderr);
    run.check(Check::absolute("exponent", exponent, dev.shift_exponent, p.exponent_tolerance));
    Ok(())
}

fn rabi(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.rabi.clone().unwrap_or_default();
    let dev = &cfg.device;
    let model = cfg.noise_model()?;
    let amp = dev.amplitude_for(p.f_rabi);
    let f_mw = dev.f_qubit_0 + microwave_shift(dev, amp);
    let trace = simulate_rabi_trace(
        &linspace(p.t_max, p.n_points),
        f_mw,
        amp,
        &model,
        dev,
        p.shots,
        seed,
        &shot_noise(p.shot_dt),
    )?;
    art.text("rabi.csv", &trace.to_csv())?;
    art.plot(
        "rabi",
        r#"
d = load('rabi.csv')
plt.plot([t * 1e6 for t in d['t_s']], d['P_up'], lw=0.6)
plt.xlabel('burst duration (us)')
plt.ylabel('P(up)')
"#,
    )?;
    let fit = fit_rabi_iterated(&trace, &model, 0.5 * p.t_max)?;
    art.text("rabi_fit.csv", &fit_csv(&[("rabi", &fit)]))?;
    let q = fit.quality_factor();
    let fid = (-1.0 / q).exp();
    run.value("f_rabi_fit_Hz", fit.frequency);
    run.value("t2_rabi_s", fit.timescale);
    run.value("t2_rabi_stderr_s", fit.timescale_stderr);
    run.value("quality_factor", q);
    run.value("quality_factor_stderr", q * fit.timescale_stderr / fit.timescale);
    run.value("x_pi_fidelity_estimate", fid);
    run.check(Check::absolute("quality_factor", q, p.target_q, p.q_tolerance));
    run.check(Check::absolute("x_pi_fidelity_estimate", fid, p.target_fidelity, p.fidelity_tolerance));
    Ok(())
}

fn rb(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.rb.clone().unwrap_or_default();
    let error = match p.error {
        RbErrorSpec::Ideal => ErrorModel::Ideal,
        RbErrorSpec::DepolarizingPerClifford { r } => ErrorModel::DepolarizingPerClifford { r },
        RbErrorSpec::DepolarizingPerGenerator { r } => ErrorModel::DepolarizingPerGenerator { r },
        RbErrorSpec::OverRotation { epsilon } => ErrorModel::OverRotation { epsilon },
        RbErrorSpec::Dynamics { f_rabi } => ErrorModel::Dynamics {
            model: cfg.noise_model()?,
            params: cfg.device.clone(),
            amplitude: cfg.device.amplitude_for(f_rabi),
            noise: ShotNoise::default(),
        },
    };
    let rc = RbConfig {
        lengths: p.lengths.clone(),
        n_sequences: p.n_sequences,
        shots: p.shots,
    };
    let mut labelled: Vec<(String, RbResult)> = Vec::new();
    let mut gates = Vec::new();
    if p.interleaved.is_empty() {
        labelled.push(("reference".into(), simulate_rb(&rc, &error, None, seed)?));
    }
    for (i, &g) in p.interleaved.iter().enumerate() {
        let res = interleaved_rb(&rc, &error, g, seed)?;
        if i == 0 {
            labelled.push(("reference".into(), res.reference.clone()));
        }
        let name = serde_json::to_value(g).expect("gate serializes");
        let name = name.as_str().unwrap_or("gate").to_string();
        labelled.push((name.clone(), res.interleaved.clone()));
        gates.push((name, res));
    }
    for (label, r) in &labelled {
        art.text(&format!("rb_{label}.csv"), &r.to_csv())?;
    }
    let refs: Vec<(&str, &RbResult)> = labelled.iter().map(|(l, r)| (l.as_str(), r)).collect();
    art.text("rb_fit.csv", &rb_summary_csv(&refs))?;
    art.plot(
        "rb",
        r#"
fits = {}
with open(here('rb_fit.csv')) as f:
    for r in csv.DictReader(f):
        fits[r['label']] = r
for label, fit in fits.items():
    d = load('rb_' + label + '.csv')
    a, b = float(fit['A']), float(fit['B'])
    y = [(v - b) / a for v in d['mean_fidelity']]
    e = [s / abs(a) for s in d['stderr']]
    plt.errorbar(d['m'], y, yerr=e, fmt='o-', ms=4, label='%s (F = %.4f)' % (label, float(fit['fidelity'])))
plt.xscale('log')
plt.xlabel('number of Cliffords m')
plt.ylabel('normalized survival')
plt.legend()
"#,
    )?;
    let reference = &labelled[0].1;
    run.value("reference_p", reference.p);
    run.value("reference_fidelity", reference.fidelity);
    run.value("reference_fidelity_stderr", reference.fidelity_stderr);
    if let Some(target) = p.expected_average {
        run.check(Check::absolute("reference_fidelity", reference.fidelity, target, p.average_tolerance));
    }
    for (name, res) in &gates {
        run.value(&format!("{name}_fidelity"), res.gate_fidelity);
        run.value(&format!("{name}_fidelity_stderr"), res.gate_fidelity_stderr);
        if let Some(target) = p.expected_gate {
            run.check(Check::absolute(&format!("{name}_fidelity"), res.gate_fidelity, target, p.gate_tolerance));
        }
    }
    Ok(())
}

struct SpectroscopyRow {
    f_rabi: f64,
    extracted: f64,
    model: f64,
}

fn spectroscopy(
    model: &SpectrumModel,
    dev: &DeviceParams,
    p: &SpectroscopyParams,
    seed: u64,
    tag: &str,
    art: &mut Artifacts,
) -> Result<Vec<SpectroscopyRow>, CliError> {
    let mut rows = Vec::new();
    for (i, &f) in p.f_rabi.iter().enumerate() {
        let s_model = model.two_sided(f)?;
        let rate = PI * PI * s_model + 0.75 * dev.gamma1;
        if !(rate > 0.0) {
            return Err(CliError::config(
                "noise",
                format!("no decay expected at f_rabi = {f:.3e} Hz; the spectrum is empty there"),
            ));
        }
        let tau = 1.0 / rate;
        let t_max = p.decay_times * tau;
        let n = (t_max * f * 16.0).clamp(300.0, 1500.0) as usize;
        let amp = dev.amplitude_for(f);
        let trace = simulate_rabi_trace(
            &linspace(t_max, n),
            dev.f_qubit_0 + microwave_shift(dev, amp),
            amp,
            model,
            dev,
            p.shots,
            seed.wrapping_add(i as u64),
            &shot_noise(p.shot_dt),
        )?;
        art.text(&format!("rabi_{tag}_{i}.csv"), &trace.to_csv())?;
        let fit = fit_rabi_iterated(&trace, model, tau)?;
        let point = extract_s_at_frabi(&fit, dev.gamma1)?;
        rows.push(SpectroscopyRow {
            f_rabi: f,
            extracted: point.s,
            model: s_model,
        });
    }
    Ok(rows)
}

fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

fn rabi_spectroscopy(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.rabi_spectroscopy.clone().unwrap_or_default();
    let model = cfg.noise_model()?;
    let rows = spectroscopy(&model, &cfg.device, &p, seed, "spectroscopy", art)?;
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.f_rabi, r.extracted, r.model, db(r.extracted / r.model)])
        .collect();
    art.table(
        "spectroscopy.csv",
        &["f_rabi_Hz", "S_Hz2_per_Hz", "S_injected_Hz2_per_Hz", "deviation_dB"],
        &table,
    )?;
    art.plot(
        "rabi_spectroscopy",
        r#"
d = load('spectroscopy.csv')
plt.loglog(d['f_rabi_Hz'], d['S_Hz2_per_Hz'], 'o', label='extracted')
plt.loglog(d['f_rabi_Hz'], d['S_injected_Hz2_per_Hz'], '-', label='injected')
plt.xlabel('f_rabi (Hz)')
plt.ylabel('S (Hz^2/Hz)')
plt.legend()
"#,
    )?;
    for r in &rows {
        let name = format!("deviation_dB_at_{:.0}Hz", r.f_rabi);
        run.value(&format!("S_at_{:.0}Hz", r.f_rabi), r.extracted);
        run.check(Check::absolute(&name, db(r.extracted / r.model), 0.0, p.tolerance_db));
    }
    Ok(())
}

fn sec_compare(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.sec_compare.clone().unwrap_or_default();
    let (a_small, f_low, f_high) = match cfg.noise_spec()? {
        NoiseSpec::OneOverF { a, f_low, f_high } => (a, f_low, f_high),
        _ => return Err(CliError::config("noise.kind", "sec-compare needs a one_over_f spectrum")),
    };
    let small = cfg.noise_model()?;
    let large = one_over_f(p.a_large, f_low, f_high);
    let rs = spectroscopy(&small, &cfg.device, &p.spectroscopy, seed, "small", art)?;
    let rl = spectroscopy(&large, &cfg.device, &p.spectroscopy, seed ^ 0x5EC0_0000, "large", art)?;
    let table: Vec<Vec<f64>> = rs
        .iter()
        .zip(&rl)
        .map(|(s, l)| vec![s.f_rabi, s.extracted, l.extracted, (l.extracted / s.extracted).sqrt()])
        .collect();
    art.table(
        "sec_compare.csv",
        &["f_rabi_Hz", "S_small_Hz2_per_Hz", "S_large_Hz2_per_Hz", "amplitude_ratio"],
        &table,
    )?;
    art.plot(
        "sec_compare",
        r#"
d = load('sec_compare.csv')
plt.loglog(d['f_rabi_Hz'], d['S_small_Hz2_per_Hz'], 'o', label='smaller coupling')
plt.loglog(d['f_rabi_Hz'], d['S_large_Hz2_per_Hz'], 's', label='larger coupling')
plt.xlabel('f_rabi (Hz)')
plt.ylabel('S (Hz^2/Hz)')
plt.legend()
"#,
    )?;
    let log_mean = table.iter().map(|r| r[3].ln()).sum::<f64>() / table.len() as f64;
    let ratio = log_mean.exp();
    for (s, l) in rs.iter().zip(&rl) {
        run.check(Check::absolute(
            &format!("small_deviation_dB_at_{:.0}Hz", s.f_rabi),
            db(s.extracted / s.model),
            0.0,
            p.spectroscopy.tolerance_db,
        ));
        run.value(&format!("large_deviation_dB_at_{:.0}Hz", l.f_rabi), db(l.extracted / l.model));
    }
    run.value("injected_ratio", p.a_large / a_small);
    run.value("amplitude_ratio", ratio);
    run.check(Check::absolute("amplitude_ratio", ratio, p.expected_ratio, p.ratio_tolerance));
    Ok(())
}

fn residual_psd(cfg: &ScenarioConfig, seed: u64, art: &mut Artifacts, run: &mut RunSummary) -> Result<(), CliError> {
    let p = cfg.residual_psd.clone().unwrap_or_default();
    let model = cfg.noise_model()?;
    let traj = synthesize_trajectory(&model, p.dt, p.n_samples, seed)?;
    let psd = estimate_psd(&traj, p.segment_len)?;
    art.text("noise_psd.csv", &psd.to_csv())?;
    let slope = loglog_slope(&psd.frequencies, &psd.density, p.slope_band[0], p.slope_band[1])?;
    run.value("slope", slope.slope);
    run.value("slope_stderr", slope.slope_stderr);
    if let Some(target) = p.expected_slope {
        run.check(Check::absolute("slope", slope.slope, target, p.slope_tolerance));
    }

    if let Some(b) = p.larmor_b_total {
        let lines = derive_larmor_frequencies(b, &GyromagneticRatios::default())?;
        let lm = larmor_peaks(b, p.larmor_band[0], p.larmor_band[1])?;
        let traj = synthesize_trajectory(&lm, p.dt, p.n_samples, seed.wrapping_add(1))?;
        let psd = estimate_psd(&traj, p.segment_len)?;
        art.text("larmor_psd.csv", &psd.to_csv())?;
        let found = psd.local_peaks(p.peak_window, p.peak_ratio);
        let matched = lines
            .iter()
            .filter(|f| found.iter().any(|&k| (psd.frequencies[k] - **f).abs() <= 1.0001 * psd.resolution))
            .count();
        let rows: Vec<Vec<f64>> = found.iter().map(|&k| vec![psd.frequencies[k], psd.density[k]]).collect();
        art.table("larmor_peaks_found.csv", &["f_Hz", "S_Hz2_per_Hz"], &rows)?;
        for (name, f) in ["as75", "ga69", "ga71"].iter().zip(lines) {
            run.value(&format!("larmor_{name}_Hz"), f);
        }
        run.value("psd_resolution_Hz", psd.resolution);
        run.check(Check::absolute("larmor_peaks_found", found.len() as f64, 3.0, 0.0));
        run.check(Check::absolute("larmor_peaks_matched", matched as f64, 3.0, 0.0));
    }

    if p.feedback_cycles > 0 {
        let sub = Subdiffusive::default().model()?;
        let opts = FeedbackOptions {
            n_cycles: p.feedback_cycles,
            ..FeedbackOptions::default()
        };
        let fb = run_feedback_loop(&sub, &cfg.device, &estimator(cfg), &opts, seed)?;
        let cycle = opts.timing.cycle(&estimator(cfg));
        let free: Vec<f64> = fb.records.iter().map(|r| r.delta_f_true).collect();
        let resid: Vec<f64> = fb.records.iter().map(|r| r.residual).collect();
        let seg = prev_power_of_two(free.len() / 4).max(16);
        let off = estimate_psd(&NoiseTrajectory::new(cycle, free, seed, "feedback_off")?, seg)?;
        let on = estimate_psd(&NoiseTrajectory::new(cycle, resid, seed, "feedback_on")?, seg)?;
        let rows: Vec<Vec<f64>> = (0..off.frequencies.len())
            .map(|k| vec![off.frequencies[k], off.density[k], on.density[k]])
            .collect();
        art.table("feedback_psd.csv", &["f_Hz", "S_off_Hz2_per_Hz", "S_on_Hz2_per_Hz"], &rows)?;
        let low = 3.min(rows.len());
        let suppression = rows[..low].iter().map(|r| r[1] / r[2]).sum::<f64>() / low as f64;
        run.value("feedback_low_frequency_suppression", suppression);
    }
    art.plot(
        "residual_psd",
        r#"
panels = [n for n in ('noise_psd.csv', 'larmor_psd.csv', 'feedback_psd.csv') if os.path.exists(here(n))]
fig, axes = plt.subplots(1, len(panels), figsize=(5 * len(panels), 4), squeeze=False)
for ax, name in zip(axes[0], panels):
    d = load(name)
    if name == 'feedback_psd.csv':
        ax.loglog(d['f_Hz'], d['S_off_Hz2_per_Hz'], label='feedback off')
        ax.loglog(d['f_Hz'], d['S_on_Hz2_per_Hz'], label='feedback on')
        ax.legend()
    else:
        ax.loglog(d['f_Hz'], d['S_Hz2_per_Hz'], lw=0.8)
    ax.set_xlabel('f (Hz)')
    ax.set_ylabel('S (Hz^2/Hz)')
    ax.set_title(name[:-4])
"#,
    )?;
    Ok(())
}

fn prev_power_of_two(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}
