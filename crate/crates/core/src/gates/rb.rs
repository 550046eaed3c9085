//! Single-subspace randomized benchmarking with the 24-element Clifford group.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::calibration::{calibrate_db, DbOptions};
use super::{calibrate_stark, CalibrationRecord, GateSimulator, GateSpec, RB_DURATION_S};
use crate::error::{Error, Result};
use crate::labels::Transition;
use crate::linalg::{self, CMat, CVec};

/// The six generators as (θ, φ): +X/2, -X/2, +Y/2, -Y/2, X, Y.
pub const GENERATORS: [(f64, f64); 6] = [
    (FRAC_PI_2, 0.0),
    (FRAC_PI_2, PI),
    (FRAC_PI_2, FRAC_PI_2),
    (FRAC_PI_2, -FRAC_PI_2),
    (PI, 0.0),
    (PI, FRAC_PI_2),
];

/// A Clifford element and a shortest generator word for it.
#[derive(Debug, Clone)]
pub struct Clifford {
    pub unitary: CMat,
    /// Generator indices, applied first to last.
    pub word: Vec<usize>,
}

fn same_up_to_phase(a: &CMat, b: &CMat) -> bool {
    (linalg::trace(&(a.adjoint() * b)).norm() - 2.0).abs() < 1e-9
}

/// Breadth-first enumeration of the single-qubit Clifford group.
pub fn clifford_group() -> Vec<Clifford> {
    let gens: Vec<CMat> = GENERATORS.iter().map(|&(t, p)| linalg::rotation(t, p)).collect();
    let mut group = vec![Clifford { unitary: linalg::identity(2), word: vec![] }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for (g, gm) in gens.iter().enumerate() {
            let u = gm * &group[i].unitary;
            if !group.iter().any(|c| same_up_to_phase(&c.unitary, &u)) {
                let mut word = group[i].word.clone();
                word.push(g);
                group.push(Clifford { unitary: u, word });
                queue.push_back(group.len() - 1);
            }
        }
    }
    group
}

pub fn average_word_length(group: &[Clifford]) -> f64 {
    group.iter().map(|c| c.word.len() as f64).sum::<f64>() / group.len() as f64
}

fn find(group: &[Clifford], u: &CMat) -> usize {
    group.iter().position(|c| same_up_to_phase(&c.unitary, u)).expect("closed group")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbOptions {
    pub transition: Transition,
    pub lengths: Vec<usize>,
    pub n_random: usize,
    pub seed: u64,
    pub duration_s: f64,
    /// Depolarizing strength on the two-level block inserted after every generator.
    pub depolarizing: Option<f64>,
    /// Run deterministic benchmarking on the π/2 and π gates first.
    pub calibrate: bool,
}

impl Default for RbOptions {
    fn default() -> Self {
        RbOptions {
            transition: "0B0".parse().expect("valid"),
            lengths: vec![1, 10, 25, 50, 100, 200, 400],
            n_random: 30,
            seed: 7,
            duration_s: RB_DURATION_S,
            depolarizing: None,
            calibrate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbResult {
    pub lengths: Vec<usize>,
    pub mean_survival: Vec<f64>,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub clifford_fidelity: f64,
    /// Average fidelity per generator, from `p^(1/⟨n_gen⟩)`.
    pub gate_fidelity: f64,
    pub generators_per_clifford: f64,
}

/// Generator channels on the full space (superoperators, column stacking).
pub fn generator_channels(sim: &GateSimulator, opts: &RbOptions) -> Result<Vec<CMat>> {
    let db = DbOptions::default();
    let mut base: [Option<CalibrationRecord>; 2] = [None, None];
    if opts.calibrate {
        let mut noiseless = sim.clone();
        noiseless.noise = crate::dynamics::NoiseChannels::none();
        for (k, theta) in [FRAC_PI_2, PI].into_iter().enumerate() {
            let g = GateSpec::ccr(opts.transition, theta, 0.0).with_duration(opts.duration_s);
            base[k] = Some(calibrate_db(&noiseless, &g, None, &db)?.record);
        }
    }
    let space = sim.system.space;
    let lower = space.index_of(opts.transition.lower())?;
    let upper = space.index_of(opts.transition.upper())?;
    let dep = opts.depolarizing.map(|eps| block_depolarizing(space.dim(), lower, upper, eps));
    GENERATORS
        .iter()
        .map(|&(theta, phi)| {
            let g = GateSpec::ccr(opts.transition, theta, phi).with_duration(opts.duration_s);
            let seed = base[usize::from(theta > 2.0)].as_ref();
            let rec = calibrate_stark(sim, &g, seed)?;
            let s = sim.channel(&g, Some(&rec))?;
            Ok(match &dep {
                Some(d) => d * s,
                None => s,
            })
        })
        .collect()
}

/// `ρ → (1-3ε/4) ρ + (ε/4) Σ P ρ P` with Paulis acting on one two-level block.
pub fn block_depolarizing(dim: usize, lower: usize, upper: usize, eps: f64) -> CMat {
    let mut s = linalg::identity(dim * dim) * crate::Complex64::from(1.0 - 0.75 * eps);
    for k in 1..4 {
        let mut p = linalg::identity(dim);
        let q = linalg::pauli(k);
        super::embed_block(&mut p, lower, upper, &q);
        s += linalg::unitary_superop(&p) * crate::Complex64::from(0.25 * eps);
    }
    s
}

/// Runs randomized benchmarking on the two-level block of `opts.transition`,
/// measuring survival of the lower state.
pub fn run_rb(sim: &GateSimulator, opts: &RbOptions) -> Result<RbResult> {
    if opts.lengths.len() < 3 || opts.n_random == 0 {
        return Err(Error::InvalidArgument("RB needs at least three lengths and one randomization".into()));
    }
    let channels = generator_channels(sim, opts)?;
    let group = clifford_group();
    let space = sim.system.space;
    let dim = space.dim();
    let lower = space.index_of(opts.transition.lower())?;
    let mut rho0 = CMat::zeros(dim, dim);
    rho0[(lower, lower)] = 1.0.into();
    let v0 = linalg::vec_of(&rho0);
    let mut jobs = Vec::new();
    for (li, &m) in opts.lengths.iter().enumerate() {
        for r in 0..opts.n_random {
            jobs.push((li, m, opts.seed.wrapping_mul(1_000_003).wrapping_add((li * opts.n_random + r) as u64)));
        }
    }
    let survivals: Vec<(usize, f64)> = {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|&(li, m, seed)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut total = linalg::identity(2);
                let mut v: CVec = v0.clone();
                let apply = |c: &Clifford, v: &mut CVec| {
                    for &g in &c.word {
                        *v = &channels[g] * &*v;
                    }
                };
                for _ in 0..m {
                    let c = &group[rng.random_range(0..group.len())];
                    apply(c, &mut v);
                    total = &c.unitary * total;
                }
                let rec = &group[find(&group, &total.adjoint())];
                apply(rec, &mut v);
                let rho = linalg::unvec(&v, dim);
                (li, rho[(lower, lower)].re)
            })
            .collect()
    };
    let mut mean = vec![0.0; opts.lengths.len()];
    for (li, s) in survivals {
        mean[li] += s / opts.n_random as f64;
    }
    let (p, a, b) = fit_decay(&opts.lengths, &mean)?;
    let n_gen = average_word_length(&group);
    let p_gen = p.powf(1.0 / n_gen);
    Ok(RbResult {
        lengths: opts.lengths.clone(),
        mean_survival: mean,
        p,
        a,
        b,
        clifford_fidelity: 1.0 - (1.0 - p) / 2.0,
        gate_fidelity: 1.0 - (1.0 - p_gen) / 2.0,
        generators_per_clifford: n_gen,
    })
}

fn linear_ab(lengths: &[usize], y: &[f64], p: f64) -> (f64, f64, f64) {
    let x: Vec<f64> = lengths.iter().map(|&m| p.powi(m as i32)).collect();
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    let (a, b) = if det.abs() < 1e-14 * n * n {
        // p^m constant over lengths: only A + B is identifiable
        (sy / n - 0.5, 0.5)
    } else {
        ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    };
    let cost = x.iter().zip(y).map(|(xi, yi)| (a * xi + b - yi).powi(2)).sum();
    (a, b, cost)
}

/// Least-squares fit of `A p^m + B`, scanning `p` with `A`, `B` solved linearly.
pub fn fit_decay(lengths: &[usize], survival: &[f64]) -> Result<(f64, f64, f64)> {
    if lengths.len() != survival.len() || lengths.len() < 3 {
        return Err(Error::FitFailure("need at least three (length, survival) points".into()));
    }
    if survival.iter().any(|s| !s.is_finite()) {
        return Err(Error::FitFailure("non-finite survival".into()));
    }
    let spread = survival.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - survival.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 1e-12 {
        return Ok((1.0, 0.0, survival[0]));
    }
    let mut best = (1.0, f64::INFINITY);
    let grid = 2000;
    for k in 0..=grid {
        let p = 0.5 + 0.5 * k as f64 / grid as f64;
        let c = linear_ab(lengths, survival, p).2;
        if c < best.1 {
            best = (p, c);
        }
    }
    let step = 0.5 / grid as f64;
    let p = super::raman::golden_min(
        |p| linear_ab(lengths, survival, p).2,
        (best.0 - step).max(0.5),
        (best.0 + step).min(1.0),
        1e-13,
    );
    let (a, b, _) = linear_ab(lengths, survival, p);
    // a decay that rises with length beyond the spread of the data is not RB
    if a < -1e-3 && spread > 1e-2 {
        return Err(Error::FitFailure(format!("negative decay amplitude A = {a:.3e}")));
    }
    Ok((p, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn clifford_group_has_24_elements() {
        let g = clifford_group();
        assert_eq!(g.len(), 24);
        assert_relative_eq!(average_word_length(&g), 44.0 / 24.0, epsilon = 1e-12);
    }

    #[test]
    fn decay_fit_recovers_synthetic_parameters() {
        let lengths = [1usize, 5, 10, 20, 50, 100, 200];
        let y: Vec<f64> = lengths.iter().map(|&m| 0.48 * 0.991f64.powi(m as i32) + 0.51).collect();
        let (p, a, b) = fit_decay(&lengths, &y).unwrap();
        assert_relative_eq!(p, 0.991, epsilon = 1e-7);
        assert_relative_eq!(a, 0.48, epsilon = 1e-5);
        assert_relative_eq!(b, 0.51, epsilon = 1e-5);
    }

    #[test]
    fn flat_survival_fits_unit_p() {
        let lengths = [1usize, 10, 100];
        let (p, _, _) = fit_decay(&lengths, &[1.0, 1.0, 1.0]).unwrap();
        assert!(p > 0.9999);
    }

    #[test]
    fn block_depolarizing_is_trace_preserving() {
        let s = block_depolarizing(4, 0, 2, 0.1);
        let mut rho = CMat::zeros(4, 4);
        rho[(0, 0)] = 0.7.into();
        rho[(3, 3)] = 0.3.into();
        let out = linalg::unvec(&(s * linalg::vec_of(&rho)), 4);
        assert_relative_eq!(linalg::trace(&out).re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(out[(0, 0)].re, 0.7 * 0.95, epsilon = 1e-14);
        assert_relative_eq!(out[(2, 2)].re, 0.7 * 0.05, epsilon = 1e-14);
        assert_relative_eq!(out[(3, 3)].re, 0.3, epsilon = 1e-14);
    }
}
