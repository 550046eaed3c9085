//! Assignment-level readout: sampled counts through a confusion matrix,
//! two-round mapped readout of two qubits and traced single-qubit readout.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Operator, QuantumState};
use crate::labels::{BasisLabel, Mode, Transition};
use crate::linalg::{self, CMat};

/// Two-qubit outcome labels in index order.
pub const OUTCOMES: [&str; 4] = ["00", "01", "10", "11"];

/// Minimum kept shots per readout round.
pub const MIN_KEPT_SHOTS: u64 = 100;

/// Column-stochastic assignment matrix: `m[(i, j)] = P(assign i | prepared j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub m: DMatrix<f64>,
}

impl ConfusionMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidArgument("confusion matrix must be square".into()));
        }
        for j in 0..m.ncols() {
            let col = m.column(j);
            if col.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidArgument(format!("column {j} has entries outside [0, 1]")));
            }
            if (col.sum() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("column {j} sums to {}", col.sum())));
            }
        }
        Ok(ConfusionMatrix { m })
    }

    pub fn identity(k: usize) -> Self {
        ConfusionMatrix { m: DMatrix::identity(k, k) }
    }

    /// Total error `err` spread evenly over the other outcomes.
    pub fn symmetric(k: usize, err: f64) -> Result<Self> {
        let off = err / (k as f64 - 1.0);
        Self::new(DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 - err } else { off }))
    }

    /// Two-qubit confusion where outcomes with equal excitation number are
    /// confused with probability `within` and others with `cross`, each.
    pub fn excitation_structured(within: f64, cross: f64) -> Result<Self> {
        let n = |i: usize| (i & 1) + (i >> 1);
        let mut m = DMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                0.0
            } else if n(i) == n(j) {
                within
            } else {
                cross
            }
        });
        for j in 0..4 {
            let s: f64 = m.column(j).sum();
            m[(j, j)] = 1.0 - s;
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Mean probability of correct assignment.
    pub fn spam_fidelity(&self) -> f64 {
        self.m.diagonal().mean()
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.m.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min == 0.0 { f64::INFINITY } else { max / min }
    }

    /// Expected assigned distribution for true probabilities `p`.
    pub fn push(&self, p: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| (0..self.dim()).map(|j| self.m[(i, j)] * p[j]).sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| format!("{:.6}", self.m[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub assignment: ConfusionMatrix,
    pub shots: u64,
    /// Probability that a round-one shot landing on `00` or `11` is still
    /// discarded as ambiguous.
    pub middle_discard: f64,
}

impl ReadoutModel {
    pub fn ideal(shots: u64) -> Self {
        ReadoutModel { assignment: ConfusionMatrix::identity(4), shots, middle_discard: 0.0 }
    }

    pub fn symmetric(err: f64, shots: u64) -> Result<Self> {
        Ok(ReadoutModel { assignment: ConfusionMatrix::symmetric(4, err)?, shots, middle_discard: 0.0 })
    }

    /// 5% within-excitation-number and 2% cross-number confusion, 40k shots.
    pub fn default_device() -> Self {
        ReadoutModel {
            assignment: ConfusionMatrix::excitation_structured(0.05, 0.02).expect("valid"),
            shots: 40_000,
            middle_discard: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::InvalidArgument("shots must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.middle_discard) {
            return Err(Error::InvalidArgument("middle_discard must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Multinomial sample by sequential binomial draws.
pub fn sample_multinomial(p: &[f64], shots: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out = vec![0; p.len()];
    let mut left = shots;
    let mut mass = 1.0;
    for (k, &pk) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == p.len() {
            out[k] = left;
            break;
        }
        let q = if mass > 0.0 { (pk.max(0.0) / mass).clamp(0.0, 1.0) } else { 0.0 };
        let n = Binomial::new(left, q).expect("valid binomial").sample(rng);
        out[k] = n;
        left -= n;
        mass -= pk.max(0.0);
    }
    out
}

/// Born probabilities of the two-qubit outcomes (A first). An 8-dim state is
/// marginalised over C.
pub fn born_probabilities(state: &QuantumState, basis_change: Option<&Operator>) -> Result<Vec<f64>> {
    state.validate()?;
    let rho = two_qubit_rho(state)?;
    let rho = match basis_change {
        Some(u) => {
            if u.nrows() != 4 {
                return Err(Error::DimensionMismatch { expected: 4, found: u.nrows() });
            }
            u * rho * u.adjoint()
        }
        None => rho,
    };
    Ok((0..4).map(|i| rho[(i, i)].re.max(0.0)).collect())
}

/// Reduced A,B density matrix of a 4- or 8-dimensional state.
pub fn two_qubit_rho(state: &QuantumState) -> Result<CMat> {
    let rho = state.density_matrix();
    match rho.nrows() {
        4 => Ok(rho),
        8 => Ok(CMat::from_fn(4, 4, |r, c| rho[(2 * r, 2 * c)] + rho[(2 * r + 1, 2 * c + 1)])),
        n => Err(Error::DimensionMismatch { expected: 4, found: n }),
    }
}

/// Sampled assignment counts after an optional pre-rotation.
pub fn measure_counts(
    state: &QuantumState,
    basis_change: Option<&Operator>,
    model: &ReadoutModel,
    seed: u64,
) -> Result<Vec<u64>> {
    model.validate()?;
    let p = born_probabilities(state, basis_change)?;
    let assigned = model.assignment.push(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_multinomial(&assigned, model.shots, &mut rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoRoundEstimate {
    /// Renormalised estimate over 00, 01, 10, 11.
    pub probabilities: [f64; 4],
    /// Sum of the raw combined estimate before renormalisation.
    pub raw_sum: f64,
    pub kept: [u64; 2],
}

/// Round one resolves `00` and `11` and discards the middle region; round
/// two first swaps `00↔01` and `10↔11` with π pulses on B, so the former
/// `01` and `10` populations land on the resolvable outcomes.
pub fn two_round_readout(state: &QuantumState, model: &ReadoutModel, seed: u64) -> Result<TwoRoundEstimate> {
    model.validate()?;
    let mapping = CMat::from_fn(4, 4, |r, c| if r == (c ^ 1) { 1.0.into() } else { 0.0.into() });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = [0.0; 4];
    let mut kept = [0u64; 2];
    for (round, u) in [None, Some(&mapping)].into_iter().enumerate() {
        let p = born_probabilities(state, u)?;
        let assigned = model.assignment.push(&p);
        let counts = sample_multinomial(&assigned, model.shots, &mut rng);
        let mut keep = [counts[0], counts[3]];
        if model.middle_discard > 0.0 {
            for k in keep.iter_mut() {
                let lost = Binomial::new(*k, model.middle_discard).expect("valid").sample(&mut rng);
                *k -= lost;
            }
        }
        kept[round] = keep[0] + keep[1];
        let norm = model.shots as f64 * (1.0 - model.middle_discard);
        let (lo, hi) = if round == 0 { (0, 3) } else { (1, 2) };
        raw[lo] = keep[0] as f64 / norm;
        raw[hi] = keep[1] as f64 / norm;
    }
    // a basis state may legitimately land entirely in one round
    let total = kept[0] + kept[1];
    if total < MIN_KEPT_SHOTS {
        return Err(Error::InsufficientShots { kept: total, required: MIN_KEPT_SHOTS });
    }
    let raw_sum: f64 = raw.iter().sum();
    let probabilities = raw.map(|v| v / raw_sum);
    Ok(TwoRoundEstimate { probabilities, raw_sum, kept })
}

/// Permutation of the two mapping π pulses `ccX` on `target` with both
/// spectators in 0 and both in 1.
pub fn traced_mapping(target: Mode) -> Operator {
    let mut u = linalg::identity(8);
    for s in [[0u8, 0], [1, 1]] {
        let t = Transition::new(target, s);
        let l = t.lower().computational_index().expect("qubit");
        let h = t.upper().computational_index().expect("qubit");
        u[(l, l)] = 0.0.into();
        u[(h, h)] = 0.0.into();
        u[(l, h)] = 1.0.into();
        u[(h, l)] = 1.0.into();
    }
    u
}

/// Single-qubit marginal `[P0, P1]` of `target`, read out through the
/// excitation-number parity after the mapping pulses. `excitation_confusion`
/// (4×4 over excitation numbers 0..3) defaults to ideal assignment.
pub fn traced_single_qubit_readout(
    state: &QuantumState,
    target: Mode,
    excitation_confusion: Option<&ConfusionMatrix>,
    shots: u64,
    seed: u64,
) -> Result<[f64; 2]> {
    state.validate()?;
    if state.dim() != 8 {
        return Err(Error::DimensionMismatch { expected: 8, found: state.dim() });
    }
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let u = traced_mapping(target);
    let rho = &u * state.density_matrix() * u.adjoint();
    let mut by_n = vec![0.0; 4];
    for (k, lab) in BasisLabel::computational().enumerate() {
        by_n[lab.excitations() as usize] += rho[(k, k)].re.max(0.0);
    }
    let assigned = match excitation_confusion {
        Some(c) => {
            if c.dim() != 4 {
                return Err(Error::DimensionMismatch { expected: 4, found: c.dim() });
            }
            c.push(&by_n)
        }
        None => by_n,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = sample_multinomial(&assigned, shots, &mut rng);
    // target |1⟩ maps to even excitation numbers
    let even = (counts[0] + counts[2]) as f64 / shots as f64;
    Ok([1.0 - even, even])
}

/// Empirical confusion matrix from preparing each two-qubit basis state.
pub fn build_confusion(model: &ReadoutModel, seed: u64) -> Result<ConfusionMatrix> {
    model.validate()?;
    let k = model.assignment.dim();
    let mut m = DMatrix::zeros(k, k);
    for j in 0..k {
        let mut v = crate::linalg::CVec::zeros(k);
        v[j] = 1.0.into();
        let counts = measure_counts(&QuantumState::Pure(v), None, model, seed.wrapping_add(j as u64))?;
        let total: u64 = counts.iter().sum();
        for i in 0..k {
            m[(i, j)] = counts[i] as f64 / total as f64;
        }
        // absorb rounding so the column sums to one exactly
        let s: f64 = m.column(j).sum();
        m[(j, j)] += 1.0 - s;
    }
    ConfusionMatrix::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CVec};
    use approx::assert_relative_eq;

    fn bell_phi_plus() -> QuantumState {
        let s = 0.5f64.sqrt();
        QuantumState::Pure(CVec::from_vec(vec![c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]))
    }

    #[test]
    fn ideal_readout_of_ground_state() {
        let mut v = CVec::zeros(4);
        v[0] = 1.0.into();
        let counts = measure_counts(&QuantumState::Pure(v), None, &ReadoutModel::ideal(1000), 3).unwrap();
        assert_eq!(counts, vec![1000, 0, 0, 0]);
    }

    #[test]
    fn structured_model_lands_near_device_spam() {
        let m = ConfusionMatrix::excitation_structured(0.05, 0.02).unwrap();
        assert_relative_eq!(m.spam_fidelity(), 0.925, epsilon = 1e-12);
    }

    #[test]
    fn bell_push_through_matches_samples() {
        let model = ReadoutModel::symmetric(0.05, 40_000).unwrap();
        let counts = measure_counts(&bell_phi_plus(), None, &model, 9).unwrap();
        let expect = model.assignment.push(&[0.5, 0.0, 0.0, 0.5]);
        for (n, p) in counts.iter().zip(expect) {
            let sd = (40_000.0 * p * (1.0 - p)).sqrt();
            assert!((*n as f64 - 40_000.0 * p).abs() < 4.0 * sd + 1.0);
        }
    }

    #[test]
    fn two_round_single_excitation() {
        let mut v = CVec::zeros(4);
        v[1] = 1.0.into();
        let est = two_round_readout(&QuantumState::Pure(v), &ReadoutModel::ideal(1000), 1).unwrap();
        assert_eq!(est.probabilities, [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(est.kept, [0, 1000]);
        let mixed = QuantumState::Mixed(linalg::identity(4) * c(0.25, 0.0));
        let est = two_round_readout(&mixed, &ReadoutModel::ideal(40_000), 1).unwrap();
        for p in est.probabilities {
            assert!((p - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn two_round_too_few_shots() {
        let mixed = QuantumState::Mixed(linalg::identity(4) * c(0.25, 0.0));
        let err = two_round_readout(&mixed, &ReadoutModel::ideal(60), 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientShots { .. }));
    }

    #[test]
    fn traced_readout_partial_excitation() {
        // B with P1 = 0.3, A and C in arbitrary superpositions
        let a = CMat::from_column_slice(2, 1, &[c(0.6, 0.0), c(0.0, 0.8)]);
        let b = CMat::from_column_slice(2, 1, &[c(0.7f64.sqrt(), 0.0), c(0.3f64.sqrt(), 0.0)]);
        let cc = CMat::from_column_slice(2, 1, &[c(0.5f64.sqrt(), 0.0), c(-(0.5f64.sqrt()), 0.0)]);
        let v = linalg::kron(&linalg::kron(&a, &b), &cc);
        let psi = QuantumState::Pure(v.column(0).into_owned());
        let p = traced_single_qubit_readout(&psi, Mode::B, None, 40_000, 5).unwrap();
        let sd = (0.21f64 / 40_000.0).sqrt();
        assert!((p[1] - 0.3).abs() < 4.0 * sd);
        let mixed = QuantumState::Mixed(linalg::identity(8) * c(0.125, 0.0));
        let p = traced_single_qubit_readout(&mixed, Mode::A, None, 40_000, 6).unwrap();
        assert!((p[0] - 0.5).abs() < 0.01);
    }

    #[test]
    fn symmetric_confusion_columns() {
        let model = ReadoutModel::symmetric(0.05, 40_000).unwrap();
        let m = build_confusion(&model, 11).unwrap();
        for j in 0..4 {
            assert!((m.m.column(j).sum() - 1.0).abs() < 1e-12);
            for i in 0..4 {
                let p = if i == j { 0.95 } else { 0.05 / 3.0 };
                assert!((m.m[(i, j)] - p).abs() < 4.0 * (p * (1.0 - p) / 40_000.0).sqrt());
            }
        }
    }

    #[test]
    fn traced_readout_of_plus_zero_plus() {
        let s = 0.5f64.sqrt();
        let plus = CMat::from_column_slice(2, 1, &[c(s, 0.0), c(s, 0.0)]);
        let zero = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let v = linalg::kron(&linalg::kron(&plus, &zero), &plus);
        let psi = QuantumState::Pure(v.column(0).into_owned());
        let p = traced_single_qubit_readout(&psi, Mode::B, None, 1000, 2).unwrap();
        assert_eq!(p, [1.0, 0.0]);
    }

    #[test]
    fn ideal_confusion_is_identity() {
        let c = build_confusion(&ReadoutModel::ideal(500), 4).unwrap();
        assert_eq!(c.m, DMatrix::identity(4, 4));
    }
}
