//! Two-qubit state and process tomography with SPAM correction, plus
//! fidelity and entanglement metrics.
//!
//! χ matrices use the Pauli-product basis II, IX, IY, IZ, XI, ..., ZZ with
//! `ε(ρ) = Σ χ_mn P_m ρ P_n`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::QuantumState;
use crate::linalg::{self, c, CMat, CVec};
use crate::measurement::{self, ConfusionMatrix, ReadoutModel};

/// Local measurement bases, first letter for A.
pub const QST_BASES: [&str; 9] = ["XX", "XY", "XZ", "YX", "YY", "YZ", "ZX", "ZY", "ZZ"];

/// Largest confusion condition number accepted for inversion.
pub const MAX_CONFUSION_CONDITION: f64 = 1e6;

/// Tolerated negativity of χ or ρ eigenvalues before declaring the input
/// inconsistent.
pub const PSD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamCorrected {
    pub probabilities: Vec<f64>,
    /// Total probability mass moved by clipping to [0, 1].
    pub clipped: f64,
}

/// Inverts the confusion matrix on an assigned distribution, then clips to
/// [0, 1] and renormalises.
pub fn spam_correct_probs(probs: &[f64], confusion: &ConfusionMatrix) -> Result<SpamCorrected> {
    if probs.len() != confusion.dim() {
        return Err(Error::DimensionMismatch { expected: confusion.dim(), found: probs.len() });
    }
    let condition = confusion.condition_number();
    if !(condition < MAX_CONFUSION_CONDITION) {
        return Err(Error::SingularConfusion { condition });
    }
    let inv = confusion.m.clone().try_inverse().ok_or(Error::SingularConfusion { condition })?;
    let raw = inv * DVector::from_column_slice(probs);
    let mut clipped = 0.0;
    let mut out: Vec<f64> = raw
        .iter()
        .map(|&v| {
            let w = v.clamp(0.0, 1.0);
            clipped += (v - w).abs();
            w
        })
        .collect();
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.iter_mut().for_each(|v| *v /= s);
    }
    Ok(SpamCorrected { probabilities: out, clipped })
}

fn local_basis_change(letter: char) -> Result<CMat> {
    match letter {
        'X' => Ok(linalg::rotation(-FRAC_PI_2, FRAC_PI_2)),
        'Y' => Ok(linalg::rotation(FRAC_PI_2, 0.0)),
        'Z' => Ok(linalg::identity(2)),
        _ => Err(Error::InvalidArgument(format!("unknown basis letter {letter:?}"))),
    }
}

/// Pre-rotation mapping the eigenbasis of `basis` onto the computational basis.
pub fn basis_change(basis: &str) -> Result<CMat> {
    let letters: Vec<char> = basis.chars().collect();
    if letters.len() != 2 {
        return Err(Error::InvalidArgument(format!("basis {basis:?} must name two letters")));
    }
    Ok(linalg::kron(&local_basis_change(letters[0])?, &local_basis_change(letters[1])?))
}

fn projector(k: usize, n: usize) -> CMat {
    let mut p = CMat::zeros(n, n);
    p[(k, k)] = c(1.0, 0.0);
    p
}

/// Measured outcome probabilities per local Pauli basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QstData {
    /// Shots per basis, `None` for exact probabilities.
    pub shots: Option<u64>,
    pub probabilities: BTreeMap<String, [f64; 4]>,
}

impl QstData {
    pub fn exact(rho: &CMat) -> Result<Self> {
        let state = QuantumState::Mixed(rho.clone());
        let mut probabilities = BTreeMap::new();
        for b in QST_BASES {
            let p = measurement::born_probabilities(&state, Some(&basis_change(b)?))?;
            probabilities.insert(b.to_string(), [p[0], p[1], p[2], p[3]]);
        }
        Ok(QstData { shots: None, probabilities })
    }

    /// Sampled data through `model`, one seed stream per basis.
    pub fn sampled(state: &QuantumState, model: &ReadoutModel, seed: u64) -> Result<Self> {
        let mut probabilities = BTreeMap::new();
        for (k, b) in QST_BASES.iter().enumerate() {
            let counts = measurement::measure_counts(state, Some(&basis_change(b)?), model, seed.wrapping_add(k as u64))?;
            let n = model.shots as f64;
            probabilities.insert(b.to_string(), [0, 1, 2, 3].map(|i| counts[i] as f64 / n));
        }
        Ok(QstData { shots: Some(model.shots), probabilities })
    }

    pub fn spam_corrected(&self, confusion: &ConfusionMatrix) -> Result<(Self, f64)> {
        let mut out = self.clone();
        let mut clipped = 0.0;
        for p in out.probabilities.values_mut() {
            let corr = spam_correct_probs(p, confusion)?;
            clipped += corr.clipped;
            p.copy_from_slice(&corr.probabilities);
        }
        Ok((out, clipped))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    #[serde(with = "crate::serde_complex")]
    pub rho: CMat,
    pub iterations: usize,
    pub residual: f64,
    /// Probability mass clipped during SPAM correction.
    pub clipped: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QstOptions {
    pub max_iters: usize,
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for QstOptions {
    fn default() -> Self {
        QstOptions { max_iters: 2000, tolerance: 1e-10, restarts: 8, seed: 1 }
    }
}

/// ρ from the 16 real parameters of a lower-triangular `T`.
pub fn rho_from_params(x: &[f64]) -> CMat {
    let mut t = CMat::zeros(4, 4);
    let mut k = 4;
    for i in 0..4 {
        t[(i, i)] = c(x[i], 0.0);
        for j in 0..i {
            t[(i, j)] = c(x[k], x[k + 1]);
            k += 2;
        }
    }
    let m = t.adjoint() * t;
    let tr = m.trace().re;
    m / c(tr, 0.0)
}

fn effects() -> Result<Vec<CMat>> {
    let mut out = Vec::with_capacity(36);
    for b in QST_BASES {
        let u = basis_change(b)?;
        for k in 0..4 {
            out.push(u.adjoint() * projector(k, 4) * &u);
        }
    }
    Ok(out)
}

/// Damped least squares with a forward-difference Jacobian.
fn levenberg_marquardt(
    f: &dyn Fn(&[f64]) -> DVector<f64>,
    x0: Vec<f64>,
    max_iters: usize,
    tolerance: f64,
) -> (Vec<f64>, f64, usize) {
    let mut x = x0;
    let mut r = f(&x);
    let mut cost = r.norm();
    let mut lambda = 1e-3;
    let mut it = 0;
    while it < max_iters {
        it += 1;
        let n = x.len();
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let h = 1e-7 * (1.0 + x[k].abs());
            let mut xp = x.clone();
            xp[k] += h;
            let rp = f(&xp);
            jac.set_column(k, &((rp - &r) / h));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * (1.0 + jtj[(k, k)]);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rn = f(&xn);
            let cn = rn.norm();
            if cn < cost {
                let change = cost - cn;
                x = xn;
                r = rn;
                cost = cn;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if change < tolerance {
                    return (x, cost, it);
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (x, cost, it)
}

/// Least-squares state estimate over the Cholesky parametrisation, started
/// from I/4; seeded restarts are used only when the first run stalls above
/// ten times the shot-noise floor.
pub fn qst_mle(data: &QstData, confusion: Option<&ConfusionMatrix>, options: &QstOptions) -> Result<DensityEstimate> {
    for b in QST_BASES {
        if !data.probabilities.contains_key(b) {
            return Err(Error::InvalidArgument(format!("missing basis {b}")));
        }
    }
    let (data, clipped) = match confusion {
        Some(cm) => data.spam_corrected(cm)?,
        None => (data.clone(), 0.0),
    };
    let eff = effects()?;
    let target: Vec<f64> = QST_BASES.iter().flat_map(|b| data.probabilities[*b]).collect();
    let resid = |x: &[f64]| {
        let rho = rho_from_params(x);
        DVector::from_iterator(36, eff.iter().zip(&target).map(|(m, p)| (m * &rho).trace().re - p))
    };
    let floor = match data.shots {
        Some(n) => (9.0 / n as f64).sqrt(),
        None => 1e-5,
    };
    let mut x0 = vec![0.0; 16];
    x0[..4].fill(0.5);
    let (mut best, mut cost, mut iterations) = levenberg_marquardt(&resid, x0, options.max_iters, options.tolerance);
    if cost > 10.0 * floor {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        for _ in 0..options.restarts {
            let start: Vec<f64> = (0..16).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
            let (x, cst, its) = levenberg_marquardt(&resid, start, options.max_iters, options.tolerance);
            iterations += its;
            if cst < cost {
                best = x;
                cost = cst;
            }
        }
        if cost > 10.0 * floor {
            return Err(Error::OptimizerStall { residual: cost });
        }
    }
    Ok(DensityEstimate { rho: rho_from_params(&best), iterations, residual: cost, clipped })
}

fn check_psd(m: &CMat) -> Result<CMat> {
    let (vals, vecs) = linalg::eigh(m);
    let min = vals[0];
    if min < -PSD_TOLERANCE {
        return Err(Error::NonPsdInput { min_eigenvalue: min });
    }
    let floor = EIGEN_FLOOR * vals.last().copied().unwrap_or(0.0).max(0.0);
    let d: Vec<_> = vals.iter().map(|&v| c(if v > floor { v } else { 0.0 }, 0.0)).collect();
    Ok(&vecs * linalg::diag(&d) * vecs.adjoint())
}

/// Eigenvalues below this fraction of the largest are treated as round-off;
/// their square roots would otherwise dominate fidelities of rank-deficient inputs.
const EIGEN_FLOOR: f64 = 1e-14;

fn trace_sqrt(m: &CMat) -> f64 {
    let (vals, _) = linalg::eigh(m);
    let floor = EIGEN_FLOOR * vals.last().copied().unwrap_or(0.0).max(0.0);
    vals.iter().filter(|&&v| v > floor).map(|v| v.sqrt()).sum()
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn state_fidelity(rho: &CMat, sigma: &CMat) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch { expected: rho.nrows(), found: sigma.nrows() });
    }
    let rho = check_psd(rho)?;
    let sigma = check_psd(sigma)?;
    let s = linalg::sqrt_psd(&rho);
    Ok(trace_sqrt(&(&s * sigma * &s)).powi(2).clamp(0.0, 1.0))
}

/// Wootters concurrence of a two-qubit density matrix.
pub fn concurrence(rho: &CMat) -> Result<f64> {
    if rho.nrows() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: rho.nrows() });
    }
    let rho = check_psd(rho)?;
    let yy = linalg::kron(&linalg::pauli(2), &linalg::pauli(2));
    let tilde = &yy * rho.conjugate() * &yy;
    let s = linalg::sqrt_psd(&rho);
    let (mut vals, _) = linalg::eigh(&(&s * tilde * &s));
    vals.iter_mut().for_each(|v| *v = v.max(0.0).sqrt());
    vals.sort_by(|a, b| b.total_cmp(a));
    Ok((vals[0] - vals[1] - vals[2] - vals[3]).max(0.0))
}

pub fn bell_states() -> [CVec; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = |a: [f64; 4]| CVec::from_iterator(4, a.iter().map(|&x| c(x * s, 0.0)));
    [v([1.0, 0.0, 0.0, 1.0]), v([1.0, 0.0, 0.0, -1.0]), v([0.0, 1.0, 1.0, 0.0]), v([0.0, 1.0, -1.0, 0.0])]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiMatrix {
    #[serde(with = "crate::serde_complex")]
    pub chi: CMat,
    pub spam_corrected: bool,
    pub min_eigenvalue: f64,
}

impl ChiMatrix {
    pub fn new(chi: CMat, spam_corrected: bool) -> Self {
        let chi = linalg::hermitian_part(&chi);
        let tr = chi.trace().re;
        let chi = if tr.abs() > 0.0 { chi / c(tr, 0.0) } else { chi };
        let min_eigenvalue = linalg::eigh(&chi).0[0];
        ChiMatrix { chi, spam_corrected, min_eigenvalue }
    }

    pub fn from_unitary(u: &CMat) -> Self {
        Self::new(superop_to_chi(&linalg::unitary_superop(u)), false)
    }

    pub fn superop(&self) -> CMat {
        chi_to_superop(&self.chi)
    }

    pub fn is_flagged(&self) -> bool {
        self.min_eigenvalue < 0.0
    }
}

/// Superoperator `Σ χ_mn P̄_n ⊗ P_m` acting on column-stacked ρ.
pub fn chi_to_superop(chi: &CMat) -> CMat {
    let p = linalg::two_qubit_paulis();
    let mut s = CMat::zeros(16, 16);
    for m in 0..16 {
        for n in 0..16 {
            let w = chi[(m, n)];
            if w.norm() > 0.0 {
                s += linalg::sandwich_superop(&p[m], &p[n]) * w;
            }
        }
    }
    s
}

/// Inverse of [`chi_to_superop`] using the orthogonality of the sandwich basis.
pub fn superop_to_chi(s: &CMat) -> CMat {
    let p = linalg::two_qubit_paulis();
    CMat::from_fn(16, 16, |m, n| {
        let b = linalg::sandwich_superop(&p[m], &p[n]);
        (b.adjoint() * s).trace() / 16.0
    })
}

/// `(Tr √(√χ_a χ_b √χ_a))²` on trace-normalised χ matrices.
pub fn process_fidelity(a: &ChiMatrix, b: &ChiMatrix) -> Result<f64> {
    state_fidelity(&a.chi, &b.chi)
}

pub fn gate_fidelity_from_process(fp: f64, d: usize) -> f64 {
    let d = d as f64;
    (d * fp + 1.0) / (d + 1.0)
}

pub fn gate_fidelity(chi: &ChiMatrix, ideal: &ChiMatrix, d: usize) -> Result<f64> {
    Ok(gate_fidelity_from_process(process_fidelity(chi, ideal)?, d))
}

/// Single-qubit preparation and measurement pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrepPulse {
    I,
    Xpi,
    XPlus,
    XMinus,
    YPlus,
    YMinus,
}

impl PrepPulse {
    pub const ALL: [PrepPulse; 6] =
        [PrepPulse::I, PrepPulse::Xpi, PrepPulse::XPlus, PrepPulse::XMinus, PrepPulse::YPlus, PrepPulse::YMinus];

    pub fn unitary(self) -> CMat {
        match self {
            PrepPulse::I => linalg::identity(2),
            PrepPulse::Xpi => linalg::rotation(std::f64::consts::PI, 0.0),
            PrepPulse::XPlus => linalg::rotation(FRAC_PI_2, 0.0),
            PrepPulse::XMinus => linalg::rotation(-FRAC_PI_2, 0.0),
            PrepPulse::YPlus => linalg::rotation(FRAC_PI_2, FRAC_PI_2),
            PrepPulse::YMinus => linalg::rotation(-FRAC_PI_2, FRAC_PI_2),
        }
    }
}

/// The 36 two-qubit pulse pairs, A first.
pub fn pulse_grid() -> Vec<[PrepPulse; 2]> {
    PrepPulse::ALL.iter().flat_map(|&a| PrepPulse::ALL.iter().map(move |&b| [a, b])).collect()
}

fn pair_unitary(p: [PrepPulse; 2]) -> CMat {
    linalg::kron(&p[0].unitary(), &p[1].unitary())
}

/// P(00) for every (preparation, measurement) pair of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QptRuns {
    pub preparations: Vec<[PrepPulse; 2]>,
    pub measurements: Vec<[PrepPulse; 2]>,
    /// `p00[i][j]` for preparation `i` and measurement `j`.
    pub p00: Vec<Vec<f64>>,
}

/// Readout imperfections applied when simulating a QPT experiment.
#[derive(Debug, Clone, Default)]
pub struct QptNoise {
    pub confusion: Option<ConfusionMatrix>,
    /// Channel (16×16 superoperator) after each preparation pulse.
    pub preparation_error: Option<CMat>,
    /// Channel before each measurement pulse.
    pub measurement_error: Option<CMat>,
    /// Binomial shot noise on P(00).
    pub shots: Option<u64>,
}

impl QptRuns {
    pub fn simulate(channel: &CMat, noise: &QptNoise, seed: u64) -> Result<Self> {
        if channel.shape() != (16, 16) {
            return Err(Error::DimensionMismatch { expected: 16, found: channel.nrows() });
        }
        let grid = pulse_grid();
        let weights: [f64; 4] = match &noise.confusion {
            Some(cm) => [0, 1, 2, 3].map(|k| cm.m[(0, k)]),
            None => [1.0, 0.0, 0.0, 0.0],
        };
        let readout = linalg::diag(&weights.map(|w| c(w, 0.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p00 = Vec::with_capacity(grid.len());
        for &prep in &grid {
            let u = pair_unitary(prep);
            let mut v = linalg::vec_of(&(&u * projector(0, 4) * u.adjoint()));
            if let Some(e) = &noise.preparation_error {
                v = e * v;
            }
            v = channel * v;
            if let Some(e) = &noise.measurement_error {
                v = e * v;
            }
            let rho = linalg::unvec(&v, 4);
            let row = grid
                .iter()
                .map(|&meas| {
                    let m = pair_unitary(meas);
                    let p = (&readout * &m * &rho * m.adjoint()).trace().re.clamp(0.0, 1.0);
                    match noise.shots {
                        Some(n) => {
                            let k = rand_distr::Distribution::sample(
                                &rand_distr::Binomial::new(n, p).expect("valid probability"),
                                &mut rng,
                            );
                            k as f64 / n as f64
                        }
                        None => p,
                    }
                })
                .collect();
            p00.push(row);
        }
        Ok(QptRuns { preparations: grid.clone(), measurements: grid, p00 })
    }

    fn matrix(&self) -> Result<DMatrix<f64>> {
        let (np, nm) = (self.preparations.len(), self.measurements.len());
        if self.p00.len() != np || self.p00.iter().any(|r| r.len() != nm) {
            return Err(Error::InconsistentGrid);
        }
        Ok(DMatrix::from_fn(np, nm, |i, j| self.p00[i][j]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QptResult {
    pub raw: ChiMatrix,
    pub corrected: Option<ChiMatrix>,
}

impl QptResult {
    pub fn best(&self) -> &ChiMatrix {
        self.corrected.as_ref().unwrap_or(&self.raw)
    }
}

/// Linear inversion `P = Eᴴ S R` for the superoperator `S`, where the
/// columns of `R` are vectorised preparations and those of `E` are
/// vectorised measurement effects.
fn invert(p: &DMatrix<f64>, preps: &CMat, effects: &CMat) -> Result<CMat> {
    let pc = linalg::from_real(p);
    let eh = effects.adjoint().pseudo_inverse(1e-10).map_err(|e| Error::FitFailure(e.to_string()))?;
    let rp = preps.clone().pseudo_inverse(1e-10).map_err(|e| Error::FitFailure(e.to_string()))?;
    Ok(eh * pc * rp)
}

fn prep_matrix(grid: &[[PrepPulse; 2]]) -> CMat {
    let mut r = CMat::zeros(16, grid.len());
    for (i, &g) in grid.iter().enumerate() {
        let u = pair_unitary(g);
        r.set_column(i, &linalg::vec_of(&(&u * projector(0, 4) * u.adjoint())));
    }
    r
}

fn effect_matrix(grid: &[[PrepPulse; 2]]) -> CMat {
    let mut e = CMat::zeros(16, grid.len());
    for (j, &g) in grid.iter().enumerate() {
        let m = pair_unitary(g);
        // Tr(E ρ) = vec(E)ᴴ vec(ρ) for Hermitian E
        e.set_column(j, &linalg::vec_of(&(m.adjoint() * projector(0, 4) * &m)));
    }
    e
}

/// Process tomography by linear inversion. With a reference experiment of
/// the identity, its error map is split by matrix square root between
/// preparation and measurement and the gate data are re-inverted against
/// the modified SPAM operators.
pub fn qpt(gate: &QptRuns, reference: Option<&QptRuns>) -> Result<QptResult> {
    let p = gate.matrix()?;
    // rows of p index preparations; `invert` expects measurement rows
    let p = p.transpose();
    let r = prep_matrix(&gate.preparations);
    let e = effect_matrix(&gate.measurements);
    let raw_s = invert(&p, &r, &e)?;
    let raw = ChiMatrix::new(superop_to_chi(&raw_s), false);
    let corrected = match reference {
        None => None,
        Some(refr) => {
            if refr.preparations != gate.preparations || refr.measurements != gate.measurements {
                return Err(Error::InconsistentGrid);
            }
            let pr = refr.matrix()?.transpose();
            let err = invert(&pr, &r, &e)?;
            let half = linalg::sqrtm(&err).ok_or_else(|| Error::FitFailure("reference error map has no square root".into()))?;
            let r2 = &half * &r;
            let e2 = half.adjoint() * &e;
            let s = invert(&p, &r2, &e2)?;
            Some(ChiMatrix::new(superop_to_chi(&s), true))
        }
    };
    Ok(QptResult { raw, corrected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pure(v: &CVec) -> CMat {
        v * v.adjoint()
    }

    fn cz() -> CMat {
        linalg::diag(&[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)])
    }

    #[test]
    fn identity_confusion_leaves_probs() {
        let p = [0.1, 0.2, 0.3, 0.4];
        let out = spam_correct_probs(&p, &ConfusionMatrix::identity(4)).unwrap();
        for (a, b) in out.probabilities.iter().zip(p) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(out.clipped, 0.0);
    }

    #[test]
    fn confusion_inverse_recovers_truth() {
        let cm = ConfusionMatrix::excitation_structured(0.05, 0.02).unwrap();
        let truth = [0.4, 0.1, 0.2, 0.3];
        let out = spam_correct_probs(&cm.push(&truth), &cm).unwrap();
        for (a, b) in out.probabilities.iter().zip(truth) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_confusion_is_rejected() {
        let cm = ConfusionMatrix::new(DMatrix::from_element(4, 4, 0.25)).unwrap();
        assert!(matches!(spam_correct_probs(&[0.25; 4], &cm), Err(Error::SingularConfusion { .. })));
    }

    #[test]
    fn basis_changes_map_eigenstates_to_zero() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = CVec::from_vec(vec![c(s, 0.0), c(s, 0.0)]);
        let plus_i = CVec::from_vec(vec![c(s, 0.0), c(0.0, s)]);
        assert_relative_eq!((local_basis_change('X').unwrap() * plus)[0].norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!((local_basis_change('Y').unwrap() * plus_i)[0].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_bell_and_mixed_reconstruction() {
        let bell = pure(&bell_states()[0]);
        let est = qst_mle(&QstData::exact(&bell).unwrap(), None, &QstOptions::default()).unwrap();
        assert!(state_fidelity(&est.rho, &bell).unwrap() > 0.9999);
        let mixed = linalg::identity(4) * c(0.25, 0.0);
        let est = qst_mle(&QstData::exact(&mixed).unwrap(), None, &QstOptions::default()).unwrap();
        assert!(linalg::max_abs(&(est.rho - mixed)) < 1e-6);
    }

    #[test]
    fn concurrence_of_werner_states() {
        let bell = pure(&bell_states()[0]);
        assert_relative_eq!(concurrence(&bell).unwrap(), 1.0, epsilon = 1e-7);
        assert_relative_eq!(concurrence(&(linalg::identity(4) * c(0.25, 0.0))).unwrap(), 0.0, epsilon = 1e-12);
        for p in [0.2, 0.5, 0.8] {
            let w = &bell * c(p, 0.0) + linalg::identity(4) * c((1.0 - p) / 4.0, 0.0);
            let expect = ((3.0 * p - 1.0) / 2.0).max(0.0);
            assert_relative_eq!(concurrence(&w).unwrap(), expect, epsilon = 1e-7);
        }
    }

    #[test]
    fn chi_superop_round_trip() {
        let u = cz();
        let s = linalg::unitary_superop(&u);
        assert!(linalg::max_abs(&(chi_to_superop(&superop_to_chi(&s)) - &s)) < 1e-12);
        // CZ = (II + IZ + ZI - ZZ)/2
        let chi = ChiMatrix::from_unitary(&u).chi;
        for (m, n) in [(0, 0), (3, 3), (12, 12), (15, 15)] {
            assert_relative_eq!(chi[(m, n)].re, 0.25, epsilon = 1e-12);
        }
        assert_relative_eq!(chi[(0, 15)].re, -0.25, epsilon = 1e-12);
    }

    #[test]
    fn depolarizing_fidelities() {
        let id = ChiMatrix::from_unitary(&linalg::identity(4));
        let dep = ChiMatrix::new(linalg::identity(16), false);
        let fp = process_fidelity(&dep, &id).unwrap();
        assert_relative_eq!(fp, 1.0 / 16.0, epsilon = 1e-9);
        assert_relative_eq!(gate_fidelity_from_process(fp, 4), 0.25, epsilon = 1e-9);
        assert_relative_eq!(gate_fidelity_from_process(0.99, 4), 0.992, epsilon = 1e-12);
        assert_relative_eq!(gate_fidelity(&id, &id, 4).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn ideal_qpt_recovers_identity_and_cz() {
        let runs = QptRuns::simulate(&linalg::identity(16), &QptNoise::default(), 0).unwrap();
        let chi = qpt(&runs, None).unwrap().raw.chi;
        assert_relative_eq!(chi[(0, 0)].re, 1.0, epsilon = 1e-9);
        assert!(linalg::max_abs(&(&chi - projector(0, 16))) < 1e-9);
        let runs = QptRuns::simulate(&linalg::unitary_superop(&cz()), &QptNoise::default(), 0).unwrap();
        let chi = qpt(&runs, None).unwrap().raw;
        assert!(linalg::max_abs(&(&chi.chi - ChiMatrix::from_unitary(&cz()).chi)) < 1e-6);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = QptRuns::simulate(&linalg::identity(16), &QptNoise::default(), 0).unwrap();
        let mut b = a.clone();
        b.measurements.swap(0, 1);
        assert!(matches!(qpt(&a, Some(&b)), Err(Error::InconsistentGrid)));
    }

    #[test]
    fn negative_chi_is_rejected() {
        let mut m = linalg::identity(16) * c(1.0 / 16.0, 0.0);
        m[(0, 0)] = c(-0.01, 0.0);
        let bad = ChiMatrix { chi: m, spam_corrected: false, min_eigenvalue: -0.01 };
        let id = ChiMatrix::from_unitary(&linalg::identity(4));
        assert!(matches!(process_fidelity(&bad, &id), Err(Error::NonPsdInput { .. })));
    }

    fn depolarized(u: &CMat, p: f64) -> CMat {
        let mut dep = CMat::zeros(16, 16);
        for q in linalg::two_qubit_paulis() {
            dep += linalg::unitary_superop(&q) * c(1.0 / 16.0, 0.0);
        }
        linalg::unitary_superop(u) * c(1.0 - p, 0.0) + dep * c(p, 0.0)
    }

    #[test]
    fn spam_correction_never_hurts_on_fixed_ensemble() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..20 {
            let h = CMat::from_fn(4, 4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let u = linalg::propagator(&linalg::hermitian_part(&h), 0.2);
            let s = depolarized(&u, rng.random_range(0.0..0.05));
            let truth = ChiMatrix::new(superop_to_chi(&s), false);
            let err: f64 = rng.random_range(0.0..0.10);
            let conf = if k % 2 == 0 {
                ConfusionMatrix::symmetric(4, err).unwrap()
            } else {
                ConfusionMatrix::excitation_structured(0.2 * err, 0.4 * err / 3.0).unwrap()
            };
            let noise = QptNoise { confusion: Some(conf), ..Default::default() };
            let gate = QptRuns::simulate(&s, &noise, 1).unwrap();
            let reference = QptRuns::simulate(&linalg::identity(16), &noise, 2).unwrap();
            let res = qpt(&gate, Some(&reference)).unwrap();
            let raw = process_fidelity(&res.raw, &truth).unwrap();
            let corrected = process_fidelity(res.corrected.as_ref().unwrap(), &truth).unwrap();
            assert!(corrected >= raw - 1e-12, "channel {k}: {corrected} < {raw}");
        }
    }
}
