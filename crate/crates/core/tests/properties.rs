//! Property tests for invariants that hold for any valid input.

use std::f64::consts::PI;

use proptest::prelude::*;
use spinqubit::benchmarking::{clifford_group, generate_rb_sequence, Gate};
use spinqubit::coherence::{decoherence_function, rabi_static_envelope, rotating_frame_rates};
use spinqubit::dynamics::{evolve, BlochState, DeviceParams, Outcome, PulseSegment};
use spinqubit::estimator::{bayes_update, EstimatorConfig, PosteriorGrid};
use spinqubit::noise::{synthesize_trajectory, NoiseTrajectory, PowerLaw, SpectrumModel};
use spinqubit::rng::{stream_rng, streams};

fn outcome(b: bool) -> Outcome {
    if b {
        Outcome::Up
    } else {
        Outcome::Down
    }
}

fn posterior_after(outcomes: &[(bool, usize)], cfg: &EstimatorConfig) -> PosteriorGrid {
    let mut post = PosteriorGrid::uniform(cfg).unwrap();
    for (o, k) in outcomes {
        bayes_update(&mut post, outcome(*o), cfg.t_r_start + *k as f64 * cfg.t_r_step, cfg).unwrap();
    }
    post
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_stays_normalized(outcomes in prop::collection::vec((any::<bool>(), 0usize..150), 1..150)) {
        let cfg = EstimatorConfig::default();
        let post = posterior_after(&outcomes, &cfg);
        prop_assert!((post.total() - 1.0).abs() < 1e-9);
        prop_assert!(post.weights.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn posterior_ignores_update_order(
        outcomes in prop::collection::vec((any::<bool>(), 0usize..150), 2..40),
        rot in 1usize..39,
    ) {
        let cfg = EstimatorConfig::default();
        let a = posterior_after(&outcomes, &cfg);
        let mut shuffled = outcomes.clone();
        let r = rot % shuffled.len();
        shuffled.rotate_left(r);
        shuffled.reverse();
        let b = posterior_after(&shuffled, &cfg);
        for (x, y) in a.weights.iter().zip(&b.weights) {
            prop_assert!((x - y).abs() <= 1e-9 * x.max(*y).max(1e-300));
        }
    }

    #[test]
    fn unitary_evolution_preserves_norm(
        theta in 0.0..PI,
        phi in 0.0..(2.0 * PI),
        amp in 0.1f64..5.0,
        detuning in -20e6f64..20e6,
        duration in 1e-9f64..2e-6,
        phase in 0.0..(2.0 * PI),
    ) {
        let params = DeviceParams::default();
        let start = BlochState::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        let traj = NoiseTrajectory::constant(detuning, 1e-9, 4096);
        let seg = PulseSegment::drive(params.f_qubit_0, amp, phase, duration);
        let end = evolve(start, &seg, &traj, 0.0, params.f_qubit_0, &params).unwrap();
        prop_assert!((end.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn split_segments_compose(
        amp in 0.1f64..5.0,
        detuning in -20e6f64..20e6,
        d1 in 1e-9f64..1e-6,
        d2 in 1e-9f64..1e-6,
        phase in 0.0..(2.0 * PI),
    ) {
        let params = DeviceParams::default();
        let traj = NoiseTrajectory::constant(detuning, 1e-9, 4096);
        let f = params.f_qubit_0;
        let whole = evolve(BlochState::up(), &PulseSegment::drive(f, amp, phase, d1 + d2), &traj, 0.0, f, &params).unwrap();
        let half = evolve(BlochState::up(), &PulseSegment::drive(f, amp, phase, d1), &traj, 0.0, f, &params).unwrap();
        let both = evolve(half, &PulseSegment::drive(f, amp, phase, d2), &traj, d1, f, &params).unwrap();
        prop_assert!((whole.x - both.x).abs() < 1e-10);
        prop_assert!((whole.y - both.y).abs() < 1e-10);
        prop_assert!((whole.z - both.z).abs() < 1e-10);
    }

    #[test]
    fn rotating_frame_rate_identities(
        f_rabi in 1e5f64..1e8,
        delta in -1e8f64..1e8,
        gamma1 in 0.0f64..1e5,
        s in 0.0f64..1e6,
    ) {
        let r = rotating_frame_rates(f_rabi, delta, gamma1, s).unwrap();
        let eta = (f_rabi / delta).atan();
        let eta = if eta < 0.0 { eta + PI } else { eta };
        let (s2, c2) = (eta.sin().powi(2), eta.cos().powi(2));
        let g_nu = 2.0 * PI * PI * s;
        let g1t = s2 * g_nu + 0.5 * (1.0 + c2) * gamma1;
        let tol = 1e-9 * (g_nu + gamma1 + 1.0);
        prop_assert!((r.eta - eta).abs() < 1e-12);
        prop_assert!((r.gamma1_tilde - g1t).abs() < tol);
        prop_assert!((r.gamma2_tilde - (0.5 * g1t + 0.5 * gamma1 * s2)).abs() < tol);
        prop_assert!((r.f_r - (f_rabi * f_rabi + delta * delta).sqrt()).abs() < 1e-6 * r.f_r);
    }

    #[test]
    fn resonant_rates_reduce(f_rabi in 1e5f64..1e8, gamma1 in 0.0f64..1e5, s in 0.0f64..1e6) {
        let r = rotating_frame_rates(f_rabi, 0.0, gamma1, s).unwrap();
        let expect = 0.75 * gamma1 + PI * PI * s;
        prop_assert!((r.gamma2_tilde - expect).abs() < 1e-9 * (expect + 1.0));
    }

    #[test]
    fn decoherence_is_monotone(
        amp in 1e2f64..1e5,
        beta in 0.0f64..2.5,
        white in 0.0f64..1e6,
        qs in 0.0f64..1e6,
    ) {
        let model = SpectrumModel::band(10.0, 1e8)
            .with_power_law(PowerLaw::new(amp, beta))
            .with_white(white)
            .with_quasi_static(qs);
        let mut last = 1.0;
        for k in 0..30 {
            let t = 1e-9 * 1.4f64.powi(k);
            let w = decoherence_function(&model, t).unwrap();
            prop_assert!(w <= last * (1.0 + 1e-9));
            prop_assert!((0.0..=1.0).contains(&w));
            last = w;
        }
    }

    #[test]
    fn static_rabi_envelope_is_monotone(sigma in 1e3f64..1e6, f_rabi in 1e6f64..1e8) {
        let mut last = 1.0;
        for k in 0..40 {
            let t = 1e-8 * 1.3f64.powi(k);
            let e = rabi_static_envelope(sigma, f_rabi, t).unwrap();
            prop_assert!(e <= last);
            last = e;
        }
    }

    #[test]
    fn synthesis_is_deterministic(seed in any::<u64>()) {
        let model = SpectrumModel::band(1e2, 1e5).with_power_law(PowerLaw::new(1e4, 1.5));
        let a = synthesize_trajectory(&model, 1e-6, 1024, seed).unwrap();
        let b = synthesize_trajectory(&model, 1e-6, 1024, seed).unwrap();
        prop_assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn rb_sequences_return_to_identity(m in 1usize..200, seed in any::<u64>(), inter in 0usize..8) {
        let g = clifford_group();
        let gate = Gate::ALL.get(inter).copied();
        let mut rng = stream_rng(seed, streams::SEQUENCE);
        let seq = generate_rb_sequence(m, &mut rng, gate).unwrap();
        prop_assert_eq!(g.compose(&seq.all()), 0);
        let n = if gate.is_some() { 2 * m } else { m };
        prop_assert_eq!(seq.cliffords.len(), n);
    }
}
