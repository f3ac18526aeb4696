//! Round trips against closed-form results computed in the test.

use std::f64::consts::PI;

use spinqubit::coherence::{fit_decay, DecayKind};
use spinqubit::dynamics::{fit_chevron_axis, fit_shift_power_law, shift_sweep, simulate_chevron, DeviceParams, ShotNoise};
use spinqubit::estimator::{run_feedback_loop, EstimatorConfig, FeedbackOptions};
use spinqubit::noise::{
    correlator_variance, derive_larmor_frequencies, estimate_psd, synthesize_trajectory, GyromagneticRatios,
    PowerLaw, SpectrumModel,
};
use spinqubit::presets::quasi_static;

#[test]
fn white_psd_level() {
    let s0 = 3.0e4;
    let dt = 1e-6;
    let model = SpectrumModel::band(1.0, 0.5 / dt).with_white(s0);
    let traj = synthesize_trajectory(&model, dt, 1 << 18, 3).unwrap();
    let psd = estimate_psd(&traj, 1024).unwrap();
    let inner: Vec<f64> = psd
        .frequencies
        .iter()
        .zip(&psd.density)
        .filter(|(f, _)| **f > 5e3 && **f < 4e5)
        .map(|(_, d)| *d)
        .collect();
    let mean = inner.iter().sum::<f64>() / inner.len() as f64;
    assert!((mean / s0 - 1.0).abs() < 0.03, "mean density {mean}");
    // Sample variance of the trajectory approaches ∫S df.
    let var = traj.samples.iter().map(|x| x * x).sum::<f64>() / traj.len() as f64;
    let expect = s0 * (0.5 / dt - 1.0);
    assert!((var / expect - 1.0).abs() < 0.03, "variance {var} vs {expect}");
}

#[test]
fn power_law_variance_closed_form() {
    // ∫ a² f^−β df over [lo, hi].
    let (a, beta, lo, hi) = (2e3, 1.5, 10.0, 1e5);
    let m = SpectrumModel::band(lo, hi).with_power_law(PowerLaw::new(a, beta));
    let expect = a * a * (lo.powf(1.0 - beta) - hi.powf(1.0 - beta)) / (beta - 1.0);
    assert!((m.variance() / expect - 1.0).abs() < 1e-8);
}

#[test]
fn random_walk_correlator() {
    // One-sided S = a²/f² has D(τ) = 2π²a²τ for lo ≪ 1/τ ≪ hi.
    let a = 1e3;
    let dt = 1e-4;
    let m = SpectrumModel::band(1e-3, 0.5 / dt).with_power_law(PowerLaw::new(a, 2.0));
    let tau = 1e-2;
    let d = m.structure_function(tau).unwrap();
    assert!((d / (2.0 * PI * PI * a * a * tau) - 1.0).abs() < 0.05, "{d}");
    let traj = synthesize_trajectory(&m, dt, 1 << 20, 9).unwrap();
    let sample = correlator_variance(&traj, tau).unwrap();
    assert!((sample / d - 1.0).abs() < 0.15, "{sample} vs {d}");
}

#[test]
fn larmor_lines_scale_with_field() {
    let r = GyromagneticRatios::default();
    let f = derive_larmor_frequencies(1.08, &r).unwrap();
    assert!((f[0] - 1.08 * 7.29e6).abs() < 1.0);
    assert!((f[1] - 1.08 * 10.22e6).abs() < 1.0);
    assert!((f[2] - 1.08 * 12.98e6).abs() < 1.0);
    assert!(derive_larmor_frequencies(-1.0, &r).is_err());
}

#[test]
fn exponential_fit_recovers_parameters() {
    let (f, tau) = (12e6, 0.8e-6);
    let pts: Vec<(f64, f64)> = (0..400)
        .map(|i| {
            let t = i as f64 * 5e-9;
            (t, 0.45 + 0.35 * (2.0 * PI * f * t).cos() * (-t / tau).exp())
        })
        .collect();
    let fit = fit_decay(&pts, DecayKind::Exponential).unwrap();
    assert!((fit.frequency / f - 1.0).abs() < 1e-6);
    assert!((fit.timescale / tau - 1.0).abs() < 1e-6);
    assert!((fit.quality_factor() - 2.0 * f * tau).abs() < 1e-3);
}

#[test]
fn rb_fit_recovers_decay() {
    let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0]
        .iter()
        .map(|m| (*m, 0.48 * 0.99f64.powf(*m) + 0.51))
        .collect();
    let fit = fit_decay(&pts, DecayKind::RbExponential).unwrap();
    assert!((fit.decay_base.unwrap() - 0.99).abs() < 1e-9);
    assert!((fit.amplitude - 0.48).abs() < 1e-7);
    assert!((fit.offset - 0.51).abs() < 1e-7);
}

#[test]
fn shift_exponent_round_trip() {
    let params = DeviceParams {
        shift_coeff: 1e5,
        shift_exponent: 2.0,
        ..DeviceParams::default()
    };
    let model = quasi_static(10e3);
    let amps = [1.0, 1.5, 2.0, 3.0];
    let durations: Vec<f64> = (0..60).map(|i| i as f64 * 25e-9).collect();
    let pts = shift_sweep(&amps, &durations, 41, 1.0e6, &model, &params, 20, 4, &ShotNoise::default()).unwrap();
    for (a, s) in &pts {
        let expect = 1e5 * a * a;
        assert!((s - expect).abs() < 0.05 * params.rabi_frequency(*a), "amp {a}: {s} vs {expect}");
    }
    let (_, p, _) = fit_shift_power_law(&pts).unwrap();
    assert!((p - 2.0).abs() < 0.05, "exponent {p}");
}

#[test]
fn chevron_axis_sits_at_injected_shift() {
    // c·E² = 2 MHz at E = 2.
    let params = DeviceParams {
        shift_coeff: 0.5e6,
        shift_exponent: 2.0,
        ..DeviceParams::default()
    };
    let amp = 2.0;
    let step = 0.25e6;
    let grid: Vec<f64> = (0..41).map(|i| -3e6 + i as f64 * step).collect();
    let durations: Vec<f64> = (0..60).map(|i| i as f64 * 25e-9).collect();
    let ch = simulate_chevron(&grid, &durations, amp, &quasi_static(10e3), &params, 20, 5, &ShotNoise::default()).unwrap();
    let axis = fit_chevron_axis(&ch, params.rabi_frequency(amp)).unwrap();
    assert!((axis - 2e6).abs() <= 0.5 * step, "axis {axis}");
}

#[test]
fn chevron_is_symmetric_without_shift() {
    let params = DeviceParams::default();
    let grid: Vec<f64> = (0..21).map(|i| -2e6 + i as f64 * 0.2e6).collect();
    let durations: Vec<f64> = (0..40).map(|i| i as f64 * 25e-9).collect();
    let shots = 400;
    let ch = simulate_chevron(&grid, &durations, 1.0, &quasi_static(0.3e6), &params, shots, 6, &ShotNoise::default()).unwrap();
    // Expectation-mode shots: the only randomness is the offset draw, whose
    // effect on P(up) is bounded by the readout visibility.
    let tol = 5.0 * params.readout_visibility / (shots as f64).sqrt();
    for i in 0..grid.len() {
        let j = grid.len() - 1 - i;
        for k in 0..durations.len() {
            assert!((ch.p_up[i][k] - ch.p_up[j][k]).abs() < tol, "({i}, {k})");
        }
    }
}

#[test]
fn feedback_locks_onto_static_offset() {
    let params = DeviceParams::default().with_ideal_readout();
    let cfg = EstimatorConfig::default().with_readout(&params);
    let model = quasi_static(3e6);
    let opts = FeedbackOptions {
        n_cycles: 40,
        ..FeedbackOptions::default()
    };
    let run = run_feedback_loop(&model, &params, &cfg, &opts, 8).unwrap();
    // Without the loop the offset stays; with it residuals are near one bin.
    let rms = (run.records.iter().map(|r| r.residual.powi(2)).sum::<f64>() / run.records.len() as f64).sqrt();
    assert!(rms <= cfg.bin_width, "rms {rms}");
    assert!(run.records.iter().all(|r| r.residual.abs() < 4.0 * cfg.bin_width));
    let offset = run.records[0].delta_f_true;
    assert!(offset.abs() > 4.0 * cfg.bin_width, "offset {offset}");
    let csv = run.history_csv();
    assert!(csv.starts_with("cycle,time_s,delta_f_true_Hz,delta_f_est_Hz,residual_Hz\n"));
    assert_eq!(csv.lines().count(), 41);
}
