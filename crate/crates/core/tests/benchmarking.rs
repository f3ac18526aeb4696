use nalgebra::{Complex, Matrix2};
use spinqubit::benchmarking::{
    clifford_group, generate_rb_sequence, interleaved_rb, simulate_rb, ErrorModel, Gate, RbConfig,
};
use spinqubit::dynamics::{DeviceParams, ShotNoise};
use spinqubit::presets::HighQRabi;
use spinqubit::rng::{stream_rng, streams};
use spinqubit::Error;

fn equal_up_to_phase(a: &Matrix2<Complex<f64>>, b: &Matrix2<Complex<f64>>) -> bool {
    ((a.adjoint() * b).trace().norm() - 2.0).abs() < 1e-10
}

#[test]
fn composition_table_matches_unitaries() {
    let g = clifford_group();
    assert_eq!(g.len(), 24);
    for a in 0..24 {
        for b in 0..24 {
            let product = g.elements[b].unitary() * g.elements[a].unitary();
            let c = g.table[a][b];
            assert!(equal_up_to_phase(&product, &g.elements[c].unitary()), "{a} then {b}");
        }
    }
    // Distinct elements are distinct unitaries.
    for a in 0..24 {
        for b in a + 1..24 {
            assert!(!equal_up_to_phase(&g.elements[a].unitary(), &g.elements[b].unitary()));
        }
    }
}

#[test]
fn identity_draw_needs_identity_recovery() {
    // Find a seed whose single draw is the identity.
    let g = clifford_group();
    for s in 0..2000u64 {
        let mut rng = stream_rng(s, streams::SEQUENCE);
        let seq = generate_rb_sequence(1, &mut rng, None).unwrap();
        if seq.cliffords[0] == 0 {
            assert_eq!(seq.recovery, 0);
            assert_eq!(g.elements[0].decomposition, vec![Gate::I]);
            return;
        }
    }
    panic!("no identity draw found");
}

#[test]
fn draws_are_uniform() {
    let n = 10_000;
    let mut counts = [0usize; 24];
    let mut rng = stream_rng(5, streams::SEQUENCE);
    let seq = generate_rb_sequence(n, &mut rng, None).unwrap();
    for c in seq.cliffords {
        counts[c] += 1;
    }
    let p = 1.0 / 24.0;
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for c in counts {
        assert!((c as f64 - mean).abs() <= 3.0 * sd, "count {c}");
        chi2 += (c as f64 - mean).powi(2) / mean;
    }
    // 99.9th percentile of chi-square with 23 degrees of freedom.
    assert!(chi2 < 49.7, "chi2 = {chi2}");
}

#[test]
fn zero_length_is_rejected() {
    let mut rng = stream_rng(1, streams::SEQUENCE);
    assert!(matches!(generate_rb_sequence(0, &mut rng, None), Err(Error::Domain(_))));
}

#[test]
fn depolarizing_expectation_is_exact() {
    let r = 0.03;
    let cfg = RbConfig {
        shots: 0,
        n_sequences: 5,
        ..RbConfig::default()
    };
    let res = simulate_rb(&cfg, &ErrorModel::DepolarizingPerClifford { r }, None, 2).unwrap();
    for (m, f) in res.lengths.iter().zip(&res.mean_fidelity) {
        // m Cliffords plus recovery, each shrinking the Bloch vector.
        let expect = 0.5 + 0.5 * (1.0 - r).powi(*m as i32 + 1);
        assert!((f - expect).abs() < 1e-12);
    }
    assert!((res.p - (1.0 - r)).abs() < 1e-9);
    assert!((res.fidelity - (1.0 - r / 2.0)).abs() < 1e-9);
    assert!((res.a - 0.5 * (1.0 - r)).abs() < 1e-9);
    assert!((res.b - 0.5).abs() < 1e-9);
}

#[test]
fn shot_noise_shrinks_with_shots() {
    let r = 0.02;
    let lengths = vec![1, 3, 10, 30, 100];
    let spread = |shots: usize| {
        let devs: Vec<f64> = (0..6)
            .map(|s| {
                let cfg = RbConfig {
                    lengths: lengths.clone(),
                    n_sequences: 20,
                    shots,
                };
                simulate_rb(&cfg, &ErrorModel::DepolarizingPerClifford { r }, None, s)
                    .unwrap()
                    .p
                    - (1.0 - r)
            })
            .collect();
        (devs.iter().map(|d| d * d).sum::<f64>() / devs.len() as f64).sqrt()
    };
    let coarse = spread(20);
    let fine = spread(2000);
    // 100x the shots should cut the scatter by about 10x.
    assert!(fine < coarse / 3.0, "coarse {coarse}, fine {fine}");
}

#[test]
fn over_rotation_lowers_fidelity() {
    let cfg = RbConfig {
        shots: 0,
        n_sequences: 30,
        ..RbConfig::default()
    };
    let small = simulate_rb(&cfg, &ErrorModel::OverRotation { epsilon: 0.01 }, None, 3).unwrap();
    let large = simulate_rb(&cfg, &ErrorModel::OverRotation { epsilon: 0.05 }, None, 3).unwrap();
    assert!(small.fidelity < 1.0);
    assert!(large.fidelity < small.fidelity);
}

#[test]
fn interleaved_identity_matches_reference() {
    let cfg = RbConfig {
        shots: 0,
        n_sequences: 10,
        ..RbConfig::default()
    };
    let err = ErrorModel::DepolarizingPerGenerator { r: 0.01 };
    let res = interleaved_rb(&cfg, &err, Gate::I, 4).unwrap();
    let tol = 2.0 * res.reference.p_stderr.hypot(res.interleaved.p_stderr);
    assert!((res.interleaved.p - res.reference.p).abs() <= tol.max(1e-9));
}

#[test]
fn x_pi_fidelity_in_high_q_regime() {
    let preset = HighQRabi::default();
    let params = DeviceParams::default();
    let amplitude = params.amplitude_for(preset.f_rabi);
    let err = ErrorModel::Dynamics {
        model: preset.model(),
        params,
        amplitude,
        noise: ShotNoise::default(),
    };
    let cfg = RbConfig {
        lengths: vec![1, 2, 4, 8, 16, 32, 64, 128],
        n_sequences: 1000,
        shots: 0,
    };
    let res = interleaved_rb(&cfg, &err, Gate::X180, 0).unwrap();
    let q = 2.0 * preset.f_rabi * preset.t2_rabi;
    assert!((res.gate_fidelity - (-1.0 / q).exp()).abs() <= 0.005, "F = {}", res.gate_fidelity);
    // Bloch-channel oracle for a π burst: transverse decay 1/T₂, axial 2/T₂.
    let x = 0.5 / preset.f_rabi / preset.t2_rabi;
    let oracle = 0.5 + (2.0 * (-x).exp() + (-2.0 * x).exp()) / 6.0;
    assert!(
        (res.gate_fidelity - oracle).abs() <= 3.0 * res.gate_fidelity_stderr,
        "F = {} +/- {}, oracle {oracle}",
        res.gate_fidelity,
        res.gate_fidelity_stderr
    );
}

#[test]
fn csv_layout() {
    let cfg = RbConfig {
        shots: 0,
        n_sequences: 3,
        ..RbConfig::default()
    };
    let res = simulate_rb(&cfg, &ErrorModel::DepolarizingPerClifford { r: 0.01 }, None, 1).unwrap();
    let csv = res.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "m,mean_fidelity,stderr,n_sequences");
    assert_eq!(lines.count(), cfg.lengths.len());
}

#[test]
fn narrow_length_range_is_rejected() {
    let cfg = RbConfig {
        lengths: vec![5, 10, 20],
        ..RbConfig::default()
    };
    let err = simulate_rb(&cfg, &ErrorModel::Ideal, None, 1).unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "lengths"));
}
