//! Single-qubit randomized benchmarking over the 24-element Clifford group
//! generated by physical X/Y rotations.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{Complex, Matrix2, Matrix3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{fit_decay, DecayKind};
use crate::dynamics::{DeviceParams, Evolver, PulseSegment, ShotNoise};
use crate::error::{Error, Result};
use crate::noise::{NoiseTrajectory, SpectrumModel, TrajectorySynthesizer};
use crate::rng::{stream_rng, streams, SimRng};

/// Physical generator gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    I,
    X90,
    Xm90,
    X180,
    Y90,
    Ym90,
    Y180,
}

impl Gate {
    pub const ALL: [Gate; 7] = [Gate::I, Gate::X90, Gate::Xm90, Gate::X180, Gate::Y90, Gate::Ym90, Gate::Y180];

    /// `(axis, angle)`; the identity has angle 0 about x.
    pub fn rotation(&self) -> ([f64; 3], f64) {
        match self {
            Gate::I => ([1.0, 0.0, 0.0], 0.0),
            Gate::X90 => ([1.0, 0.0, 0.0], PI / 2.0),
            Gate::Xm90 => ([1.0, 0.0, 0.0], -PI / 2.0),
            Gate::X180 => ([1.0, 0.0, 0.0], PI),
            Gate::Y90 => ([0.0, 1.0, 0.0], PI / 2.0),
            Gate::Ym90 => ([0.0, 1.0, 0.0], -PI / 2.0),
            Gate::Y180 => ([0.0, 1.0, 0.0], PI),
        }
    }

    /// Drive phase and rotation angle magnitude of the burst realizing the gate.
    fn burst(&self) -> (f64, f64) {
        match self {
            Gate::I => (0.0, 0.0),
            Gate::X90 => (0.0, PI / 2.0),
            Gate::Xm90 => (PI, PI / 2.0),
            Gate::X180 => (0.0, PI),
            Gate::Y90 => (PI / 2.0, PI / 2.0),
            Gate::Ym90 => (1.5 * PI, PI / 2.0),
            Gate::Y180 => (PI / 2.0, PI),
        }
    }

    /// `exp(−iθ n·σ/2)`.
    pub fn unitary(&self) -> Matrix2<Complex<f64>> {
        let (n, theta) = self.rotation();
        su2(n, theta)
    }

    /// Bloch-vector rotation.
    pub fn so3(&self) -> Matrix3<f64> {
        let (n, theta) = self.rotation();
        so3(n, theta)
    }
}

fn su2(n: [f64; 3], theta: f64) -> Matrix2<Complex<f64>> {
    let (s, c) = (theta / 2.0).sin_cos();
    let i = Complex::new(0.0, 1.0);
    let one = Complex::new(1.0, 0.0);
    let sx = Matrix2::new(Complex::new(0.0, 0.0), one, one, Complex::new(0.0, 0.0));
    let sy = Matrix2::new(Complex::new(0.0, 0.0), -i, i, Complex::new(0.0, 0.0));
    let sz = Matrix2::new(one, Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), -one);
    Matrix2::identity() * Complex::new(c, 0.0) - (sx * Complex::new(n[0], 0.0) + sy * Complex::new(n[1], 0.0) + sz * Complex::new(n[2], 0.0)) * (i * s)
}

fn so3(n: [f64; 3], theta: f64) -> Matrix3<f64> {
    let k = Vector3::from(n);
    let kx = k.cross_matrix();
    Matrix3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
}

/// One of the 24 single-qubit Cliffords with a minimal generator word.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffordElement {
    pub index: usize,
    /// Gates in time order.
    pub decomposition: Vec<Gate>,
    pub so3: Matrix3<f64>,
}

impl CliffordElement {
    pub fn unitary(&self) -> Matrix2<Complex<f64>> {
        self.decomposition
            .iter()
            .fold(Matrix2::identity(), |acc, g| g.unitary() * acc)
    }
}

/// The group with its multiplication table.
#[derive(Debug, Clone)]
pub struct CliffordGroup {
    pub elements: Vec<CliffordElement>,
    /// `table[a][b]` is the index of "apply `a`, then `b`".
    pub table: Vec<Vec<usize>>,
    pub inverse: Vec<usize>,
}

fn same_rotation(a: &Matrix3<f64>, b: &Matrix3<f64>) -> bool {
    (a - b).abs().max() < 1e-9
}

impl CliffordGroup {
    /// Breadth-first enumeration by word length over the generators, so each
    /// element carries a shortest decomposition. Index 0 is the identity.
    pub fn build() -> Self {
        let mut elements: Vec<CliffordElement> = vec![CliffordElement {
            index: 0,
            decomposition: vec![],
            so3: Matrix3::identity(),
        }];
        let mut frontier = vec![0usize];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &e in &frontier {
                for g in Gate::ALL.iter().filter(|g| **g != Gate::I) {
                    let r = g.so3() * elements[e].so3;
                    if elements.iter().any(|x| same_rotation(&x.so3, &r)) {
                        continue;
                    }
                    let mut word = elements[e].decomposition.clone();
                    word.push(*g);
                    elements.push(CliffordElement {
                        index: elements.len(),
                        decomposition: word,
                        so3: r,
                    });
                    next.push(elements.len() - 1);
                }
            }
            frontier = next;
        }
        elements[0].decomposition = vec![Gate::I];
        let n = elements.len();
        let find = |m: &Matrix3<f64>| elements.iter().position(|x| same_rotation(&x.so3, m));
        let table: Vec<Vec<usize>> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| find(&(elements[b].so3 * elements[a].so3)).expect("group is closed"))
                    .collect()
            })
            .collect();
        let inverse = (0..n).map(|a| (0..n).find(|b| table[a][*b] == 0).unwrap()).collect();
        Self {
            elements,
            table,
            inverse,
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Index of the Clifford equal to a single gate.
    pub fn index_of_gate(&self, gate: Gate) -> usize {
        let m = gate.so3();
        self.elements.iter().position(|x| same_rotation(&x.so3, &m)).unwrap()
    }

    pub fn compose(&self, sequence: &[usize]) -> usize {
        sequence.iter().fold(0, |acc, &c| self.table[acc][c])
    }
}

/// The shared Clifford group.
pub fn clifford_group() -> &'static CliffordGroup {
    static GROUP: OnceLock<CliffordGroup> = OnceLock::new();
    GROUP.get_or_init(CliffordGroup::build)
}

/// A random sequence: `cliffords` in time order (interleaved gates
/// included) with the recovery element last.
#[derive(Debug, Clone, PartialEq)]
pub struct RbSequence {
    pub cliffords: Vec<usize>,
    pub recovery: usize,
    pub interleaved: Option<Gate>,
}

impl RbSequence {
    pub fn all(&self) -> Vec<usize> {
        let mut v = self.cliffords.clone();
        v.push(self.recovery);
        v
    }

    /// Whether slot `i` of [`RbSequence::all`] is an interleaved gate.
    pub fn is_interleaved(&self, i: usize) -> bool {
        self.interleaved.is_some() && i < self.cliffords.len() && i % 2 == 1
    }

    pub fn gates(&self) -> Vec<Gate> {
        let g = clifford_group();
        self.all()
            .iter()
            .flat_map(|c| g.elements[*c].decomposition.iter().copied())
            .collect()
    }
}

/// `m` uniform random Cliffords, each followed by `interleaved` if given,
/// then the recovery Clifford.
pub fn generate_rb_sequence(m: usize, rng: &mut SimRng, interleaved: Option<Gate>) -> Result<RbSequence> {
    if m == 0 {
        return Err(Error::domain("sequence length must be >= 1"));
    }
    let g = clifford_group();
    let inter = interleaved.map(|x| g.index_of_gate(x));
    let mut cliffords = Vec::with_capacity(2 * m);
    for _ in 0..m {
        cliffords.push(rng.random_range(0..g.len()));
        if let Some(i) = inter {
            cliffords.push(i);
        }
    }
    let recovery = g.inverse[g.compose(&cliffords)];
    Ok(RbSequence {
        cliffords,
        recovery,
        interleaved,
    })
}

/// How gates deviate from their ideal action.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorModel {
    Ideal,
    /// Bloch vector shrinks by `1 − r` after every Clifford. An interleaved
    /// identity is error-free.
    DepolarizingPerClifford { r: f64 },
    /// Bloch vector shrinks by `1 − r` after every non-identity generator.
    DepolarizingPerGenerator { r: f64 },
    /// Every rotation angle scaled by `1 + epsilon`.
    OverRotation { epsilon: f64 },
    /// Rectangular bursts at `amplitude` evolved through the dynamics with a
    /// fresh noise realization per sequence. The identity idles for the
    /// duration of a π burst.
    Dynamics {
        model: SpectrumModel,
        params: DeviceParams,
        amplitude: f64,
        noise: ShotNoise,
    },
}

impl ErrorModel {
    fn validate(&self) -> Result<()> {
        match self {
            ErrorModel::DepolarizingPerClifford { r } | ErrorModel::DepolarizingPerGenerator { r } => {
                if !(0.0..=1.0).contains(r) {
                    return Err(Error::config("r", format!("must lie in [0, 1], got {r}")));
                }
            }
            ErrorModel::Dynamics { model, params, amplitude, .. } => {
                model.validate()?;
                params.validate()?;
                if !(*amplitude > 0.0) {
                    return Err(Error::config("amplitude", "must be > 0"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Probability of returning to the initial state after the sequence.
fn survival(seq: &RbSequence, error: &ErrorModel, rng: &mut SimRng) -> Result<f64> {
    let g = clifford_group();
    let up = Vector3::new(0.0, 0.0, 1.0);
    let z = match error {
        ErrorModel::Ideal | ErrorModel::DepolarizingPerClifford { .. } => {
            let shrink = match error {
                ErrorModel::DepolarizingPerClifford { r } => 1.0 - r,
                _ => 1.0,
            };
            // An interleaved identity is a no-op and carries no error.
            let free = seq.interleaved == Some(Gate::I);
            let mut v = up;
            for (i, c) in seq.all().into_iter().enumerate() {
                let k = if free && seq.is_interleaved(i) { 1.0 } else { shrink };
                v = g.elements[c].so3 * v * k;
            }
            v.z
        }
        ErrorModel::DepolarizingPerGenerator { r } => {
            let mut v = up;
            for gate in seq.gates() {
                let k = if gate == Gate::I { 1.0 } else { 1.0 - r };
                v = gate.so3() * v * k;
            }
            v.z
        }
        ErrorModel::OverRotation { epsilon } => {
            let mut v = up;
            for gate in seq.gates() {
                let (n, th) = gate.rotation();
                v = so3(n, th * (1.0 + epsilon)) * v;
            }
            v.z
        }
        ErrorModel::Dynamics {
            model,
            params,
            amplitude,
            noise,
        } => {
            let f_rabi = params.rabi_frequency(*amplitude);
            let f_mw = params.f_qubit_0 + crate::dynamics::microwave_shift(params, *amplitude);
            let segments: Vec<PulseSegment> = seq
                .gates()
                .iter()
                .map(|gate| {
                    let (phase, angle) = gate.burst();
                    if angle == 0.0 {
                        PulseSegment::idle(0.5 / f_rabi)
                    } else {
                        PulseSegment::drive(f_mw, *amplitude, phase, angle / (2.0 * PI * f_rabi))
                    }
                })
                .collect();
            let total: f64 = segments.iter().map(|s| s.duration).sum();
            let dt = noise
                .dt
                .unwrap_or_else(|| (0.5 / model.f_high).min(1.0 / (20.0 * f_rabi)));
            let n = ((total / dt).ceil() as usize + 2).max(16).next_power_of_two();
            let synth = TrajectorySynthesizer::new(model, dt, n, true)?;
            let traj = NoiseTrajectory::new(dt, synth.draw(rng), 0, "rb")?;
            let mut ev = Evolver::new(params, &traj, f_mw, 0.0);
            ev.run(&segments)?;
            ev.state.z
        }
    };
    Ok(0.5 * (1.0 + z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbConfig {
    pub lengths: Vec<usize>,
    pub n_sequences: usize,
    /// Binomial shots per sequence; 0 uses the exact survival probability.
    pub shots: usize,
}

impl Default for RbConfig {
    fn default() -> Self {
        Self {
            lengths: vec![1, 2, 4, 8, 16, 32, 64, 128],
            n_sequences: 50,
            shots: 1000,
        }
    }
}

impl RbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sequences == 0 {
            return Err(Error::config("n_sequences", "must be >= 1"));
        }
        if self.lengths.contains(&0) {
            return Err(Error::config("lengths", "lengths must be >= 1"));
        }
        let lo = self.lengths.iter().copied().min().unwrap_or(0);
        let hi = self.lengths.iter().copied().max().unwrap_or(0);
        if lo == 0 || hi < 10 * lo {
            return Err(Error::config("lengths", "lengths must span at least one decade"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbResult {
    pub lengths: Vec<usize>,
    pub mean_fidelity: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_sequences: usize,
    /// Per-length survival of every sequence.
    pub raw: Vec<Vec<f64>>,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub p_stderr: f64,
    /// `1 − (1 − p)/2`.
    pub fidelity: f64,
    pub fidelity_stderr: f64,
}

impl RbResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,mean_fidelity,stderr,n_sequences\n");
        for i in 0..self.lengths.len() {
            s.push_str(&format!(
                "{},{:.9e},{:.9e},{}\n",
                self.lengths[i], self.mean_fidelity[i], self.stderr[i], self.n_sequences
            ));
        }
        s
    }

    /// `(mean − B)/A` per length.
    pub fn normalized(&self) -> Vec<f64> {
        self.mean_fidelity.iter().map(|f| (f - self.b) / self.a).collect()
    }
}

/// Runs standard (or, with `interleaved`, interleaved) RB and fits
/// `A·p^m + B`.
pub fn simulate_rb(config: &RbConfig, error: &ErrorModel, interleaved: Option<Gate>, seed: u64) -> Result<RbResult> {
    config.validate()?;
    error.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.lengths.len())
        .flat_map(|i| (0..config.n_sequences).map(move |j| (i, j)))
        .collect();
    let values: Result<Vec<f64>> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let stream = streams::SEQUENCE + ((i as u64) << 20) + j as u64;
            let mut rng = stream_rng(seed, stream);
            let seq = generate_rb_sequence(config.lengths[i], &mut rng, interleaved)?;
            let p = survival(&seq, error, &mut rng)?;
            if config.shots == 0 {
                Ok(p)
            } else {
                let k = (0..config.shots).filter(|_| rng.random::<f64>() < p).count();
                Ok(k as f64 / config.shots as f64)
            }
        })
        .collect();
    let values = values?;
    let raw: Vec<Vec<f64>> = values.chunks(config.n_sequences).map(|c| c.to_vec()).collect();
    let mean: Vec<f64> = raw.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let stderr: Vec<f64> = raw
        .iter()
        .zip(&mean)
        .map(|(r, m)| {
            if r.len() < 2 {
                return 0.0;
            }
            let v = r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r.len() - 1) as f64;
            (v / r.len() as f64).sqrt()
        })
        .collect();

    let (a, b, p, p_stderr) = if mean.iter().all(|v| (v - mean[0]).abs() < 1e-12) {
        // Flat decay: no error.
        (mean[0] - 0.5, 0.5, 1.0, 0.0)
    } else {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for (i, m) in config.lengths.iter().enumerate() {
            for v in &raw[i] {
                pts.push((*m as f64, *v));
            }
        }
        if pts.len() < 10 {
            pts = config.lengths.iter().map(|m| *m as f64).zip(mean.iter().copied()).collect();
        }
        let fit = fit_decay(&pts, DecayKind::RbExponential).map_err(|e| match e {
            Error::Fit { reason, restarts, last_cost } => Error::Fit {
                reason: format!("{reason}; mean survival per length: {mean:?}"),
                restarts,
                last_cost,
            },
            other => other,
        })?;
        let p = fit.decay_base.unwrap_or(1.0);
        (fit.amplitude, fit.offset, p, fit.covariance[(1, 1)].max(0.0).sqrt())
    };
    Ok(RbResult {
        lengths: config.lengths.clone(),
        mean_fidelity: mean,
        stderr,
        n_sequences: config.n_sequences,
        raw,
        a,
        b,
        p,
        p_stderr,
        fidelity: 1.0 - (1.0 - p) / 2.0,
        fidelity_stderr: p_stderr / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterleavedResult {
    pub reference: RbResult,
    pub interleaved: RbResult,
    pub gate: Gate,
    /// `1 − (1 − p_int/p_ref)/2`.
    pub gate_fidelity: f64,
    pub gate_fidelity_stderr: f64,
}

/// Reference and interleaved runs on independent sequence draws.
pub fn interleaved_rb(config: &RbConfig, error: &ErrorModel, gate: Gate, seed: u64) -> Result<InterleavedResult> {
    let reference = simulate_rb(config, error, None, seed)?;
    let interleaved = simulate_rb(config, error, Some(gate), seed.wrapping_add(0x9E37_79B9))?;
    let ratio = interleaved.p / reference.p;
    let rel = ((interleaved.p_stderr / interleaved.p).powi(2) + (reference.p_stderr / reference.p).powi(2)).sqrt();
    Ok(InterleavedResult {
        gate,
        gate_fidelity: 1.0 - (1.0 - ratio) / 2.0,
        gate_fidelity_stderr: 0.5 * ratio * rel,
        reference,
        interleaved,
    })
}

pub fn rb_summary_csv(results: &[(&str, &RbResult)]) -> String {
    let mut s = String::from("label,A,B,p,p_stderr,fidelity,fidelity_stderr\n");
    for (label, r) in results {
        s.push_str(&format!(
            "{label},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            r.a, r.b, r.p, r.p_stderr, r.fidelity, r.fidelity_stderr
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase_equal(a: &Matrix2<Complex<f64>>, b: &Matrix2<Complex<f64>>) -> bool {
        let tr = (a.adjoint() * b).trace();
        (tr.norm() - 2.0).abs() < 1e-10
    }

    #[test]
    fn group_has_24_elements() {
        let g = clifford_group();
        assert_eq!(g.len(), 24);
        assert_eq!(g.elements[0].decomposition, vec![Gate::I]);
        let longest = g.elements.iter().map(|e| e.decomposition.len()).max().unwrap();
        assert_eq!(longest, 3);
    }

    #[test]
    fn decompositions_match_rotations() {
        let g = clifford_group();
        for e in &g.elements {
            // The SU(2) product maps to the stored SO(3) element.
            let u = e.unitary();
            for (k, axis) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].iter().enumerate() {
                let s = su2(*axis, PI);
                let rotated = u * s * u.adjoint();
                let col = e.so3.column(k);
                let expect = su2([col[0], col[1], col[2]], PI);
                assert!(phase_equal(&rotated, &expect), "element {}", e.index);
            }
        }
    }

    #[test]
    fn inverse_table() {
        let g = clifford_group();
        for a in 0..24 {
            assert_eq!(g.table[a][g.inverse[a]], 0);
            assert_eq!(g.table[g.inverse[a]][a], 0);
        }
    }

    #[test]
    fn single_identity_has_identity_recovery() {
        let g = clifford_group();
        let seq = RbSequence {
            cliffords: vec![0],
            recovery: g.inverse[g.compose(&[0])],
            interleaved: None,
        };
        assert_eq!(seq.recovery, 0);
    }

    #[test]
    fn zero_error_gives_unit_fidelity() {
        let cfg = RbConfig {
            shots: 0,
            n_sequences: 5,
            ..RbConfig::default()
        };
        let r = simulate_rb(&cfg, &ErrorModel::Ideal, None, 3).unwrap();
        assert_eq!(r.p, 1.0);
        assert_eq!(r.fidelity, 1.0);
    }

    #[test]
    fn lengths_must_span_a_decade() {
        let cfg = RbConfig {
            lengths: vec![1, 2, 4],
            ..RbConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }
}
