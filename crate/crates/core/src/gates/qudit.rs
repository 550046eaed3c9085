//! Qudit shift gates on a d-state manifold of the computational cube and
//! the n×dX_d decoupling sequences built from them.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::{compile, CompileOptions, GateSpec, CCR_DURATION_S};
use crate::circuit::ModeParams;
use crate::dynamics::{self, EvolutionConfig, NoiseChannels, System};
use crate::error::{Error, Result};
use crate::hilbert::{Operator, SpaceSpec};
use crate::labels::{BasisLabel, Transition};
use crate::linalg::{self, CMat, CVec};
use crate::pulses::Schedule;
use crate::Complex64;

fn labels(s: &[&str]) -> Vec<BasisLabel> {
    s.iter().map(|x| x.parse().expect("valid label")).collect()
}

/// Manifold orderings used for d = 3, 4, 6, 8.
pub fn table_ordering(d: usize) -> Result<Vec<BasisLabel>> {
    Ok(match d {
        3 => labels(&["000", "100", "010"]),
        4 => labels(&["000", "100", "110", "010"]),
        6 => labels(&["100", "000", "001", "011", "010", "110"]),
        8 => labels(&["000", "001", "011", "010", "110", "100", "101", "111"]),
        _ => return Err(Error::InvalidOrdering(format!("no default ordering for d = {d}"))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionKind {
    /// Transpositions of consecutive states, last pair first.
    Chain,
    /// Transpositions of the first state with each other state in turn.
    Star,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuditDecomposition {
    pub ordering: Vec<BasisLabel>,
    pub kind: DecompositionKind,
    /// Driven transitions in application order.
    pub pulses: Vec<Transition>,
}

/// Writes `|s_k⟩ → |s_{k+1 mod d}⟩` as d−1 single-transition swaps.
pub fn decompose(ordering: &[BasisLabel]) -> Result<QuditDecomposition> {
    let d = ordering.len();
    if !(2..=8).contains(&d) {
        return Err(Error::InvalidOrdering(format!("manifold size {d} outside 2..=8")));
    }
    for (i, s) in ordering.iter().enumerate() {
        if !s.is_computational() {
            return Err(Error::InvalidOrdering(format!("{s} is not a computational state")));
        }
        if ordering[..i].contains(s) {
            return Err(Error::InvalidOrdering(format!("{s} appears twice")));
        }
    }
    let chain: Option<Vec<Transition>> =
        (0..d - 1).rev().map(|k| Transition::between(ordering[k], ordering[k + 1])).collect();
    if let Some(pulses) = chain {
        return Ok(QuditDecomposition { ordering: ordering.to_vec(), kind: DecompositionKind::Chain, pulses });
    }
    let star: Option<Vec<Transition>> = (1..d).map(|k| Transition::between(ordering[0], ordering[k])).collect();
    if let Some(pulses) = star {
        return Ok(QuditDecomposition { ordering: ordering.to_vec(), kind: DecompositionKind::Star, pulses });
    }
    let names: Vec<String> = ordering.iter().map(|s| s.to_string()).collect();
    Err(Error::InvalidOrdering(format!(
        "{} is neither a path nor a star of single-transition neighbours",
        names.join(",")
    )))
}

/// One CCX: a conditional π rotation followed by the frame update that
/// removes its `-i` phase, so the pair acts as an exact Pauli X.
pub fn ccx(t: Transition) -> [GateSpec; 2] {
    let mut phases = [0.0; 8];
    phases[t.lower().computational_index().expect("qubit")] = FRAC_PI_2;
    phases[t.upper().computational_index().expect("qubit")] = FRAC_PI_2;
    [GateSpec::ccr(t, PI, 0.0), GateSpec::virtual_diagonal(phases)]
}

/// X_d as a gate list in application order.
pub fn qudit_x(d: usize, ordering: Option<&[BasisLabel]>) -> Result<Vec<GateSpec>> {
    let ord = match ordering {
        Some(o) => o.to_vec(),
        None => table_ordering(d)?,
    };
    if ord.len() != d {
        return Err(Error::InvalidOrdering(format!("ordering has {} states, expected {d}", ord.len())));
    }
    Ok(decompose(&ord)?.pulses.into_iter().flat_map(ccx).collect())
}

/// Product of the ideal unitaries of a gate list (first gate applied first).
pub fn ideal_sequence(gates: &[GateSpec]) -> Result<Operator> {
    let mut u = linalg::identity(8);
    for g in gates {
        u = super::ideal_unitary(g)? * u;
    }
    Ok(u)
}

/// Schedule of `n·d` X_d gates over `total_time`, idles spaced
/// `τ/2, X_d, τ, X_d, …, X_d, τ/2`.
pub fn dd_schedule(
    params: &ModeParams,
    options: &CompileOptions,
    d: usize,
    n: usize,
    ordering: Option<&[BasisLabel]>,
    total_time: f64,
) -> Result<Schedule> {
    let gates = qudit_x(d, ordering)?;
    let mut xd = Schedule::empty(0.0);
    for g in &gates {
        xd.then(&compile(g, params, None, options)?);
    }
    let count = n * d;
    if count == 0 {
        return Ok(Schedule::empty(total_time));
    }
    let busy = xd.total_duration_s * count as f64;
    if total_time < busy {
        return Err(Error::InvalidArgument(format!(
            "total time {:.3e} s is shorter than the {count} shift gates ({busy:.3e} s)",
            total_time
        )));
    }
    let tau = (total_time - busy) / count as f64;
    let mut s = Schedule::empty(0.0);
    s.delay(tau / 2.0);
    for k in 0..count {
        s.then(&xd);
        s.delay(if k + 1 == count { tau / 2.0 } else { tau });
    }
    Ok(s)
}

/// Normalized fidelity `(F - 1/d) / (1 - 1/d)`.
pub fn normalized(f: f64, d: usize) -> f64 {
    let inv = 1.0 / d as f64;
    (f - inv) / (1.0 - inv)
}

/// Ensemble-averaged free-evolution fidelity of the uniform superposition
/// over `ordering` under Gaussian per-mode offsets of width `sigma`.
pub fn free_fidelity(ordering: &[BasisLabel], sigma: f64, t: f64) -> f64 {
    let d = ordering.len() as f64;
    let a = (2.0 * PI * t * sigma).powi(2) / 2.0;
    let mut sum = 0.0;
    for s in ordering {
        for r in ordering {
            let ham = (0..3).filter(|&k| s.0[k] != r.0[k]).count() as f64;
            sum += (-a * ham).exp();
        }
    }
    sum / (d * d)
}

/// σ for which the normalized free fidelity reaches 1/e at `t_e`.
pub fn sigma_for_decay(ordering: &[BasisLabel], t_e: f64) -> f64 {
    let d = ordering.len();
    let target = (-1.0f64).exp();
    let (mut lo, mut hi) = (0.0, 1e9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normalized(free_fidelity(ordering, mid, t_e), d) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdOptions {
    pub d: usize,
    pub ordering: Option<Vec<BasisLabel>>,
    /// Sequence repetition counts; 0 is free evolution.
    pub repetitions: Vec<usize>,
    pub times: Vec<f64>,
    /// Per-mode quasi-static width; `None` solves for a 1/e free decay at `free_decay_s`.
    pub sigma: Option<f64>,
    pub free_decay_s: f64,
    pub draws: usize,
    pub seed: u64,
    /// Markovian relaxation and dephasing added on top of the quasi-static offsets.
    pub markovian: NoiseChannels,
    pub pulse_duration_s: f64,
}

impl DdOptions {
    pub fn new(d: usize) -> Self {
        DdOptions {
            d,
            ordering: None,
            repetitions: vec![0, 1, 2],
            times: (1..=24).map(|k| k as f64 * 2.5e-6).collect(),
            sigma: None,
            free_decay_s: 5e-6,
            draws: 200,
            seed: 11,
            markovian: NoiseChannels::measured_device(),
            pulse_duration_s: CCR_DURATION_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdCurve {
    pub repetitions: usize,
    pub times: Vec<f64>,
    /// Normalized fidelity; NaN where the sequence does not fit.
    pub fidelity: Vec<f64>,
    /// First 1/e crossing, log-linear interpolation; `None` if not reached.
    pub decay_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdResult {
    pub d: usize,
    pub ordering: Vec<BasisLabel>,
    pub sigma: f64,
    pub curves: Vec<DdCurve>,
}

/// Splits each collapse operator into Bohr-frequency components and returns
/// the secular interaction-frame dissipator.
pub fn secular_dissipator(system: &System, noise: &NoiseChannels) -> Result<CMat> {
    let e = system.energies();
    let dim = system.space.dim();
    let mut comps = Vec::new();
    for l in noise.collapse_operators(&system.space)? {
        let mut groups: Vec<(f64, CMat)> = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                if l[(i, j)].norm() == 0.0 {
                    continue;
                }
                let w = e[j] - e[i];
                match groups.iter_mut().find(|(f, _)| (f - w).abs() < 1.0) {
                    Some((_, m)) => m[(i, j)] = l[(i, j)],
                    None => {
                        let mut m = CMat::zeros(dim, dim);
                        m[(i, j)] = l[(i, j)];
                        groups.push((w, m));
                    }
                }
            }
        }
        comps.extend(groups.into_iter().map(|(_, m)| m));
    }
    Ok(dynamics::dissipator_superop(&comps, dim))
}

fn decay_crossing(times: &[f64], f: &[f64]) -> Option<f64> {
    let target = (-1.0f64).exp();
    let mut prev: Option<(f64, f64)> = Some((0.0, 1.0));
    for (&t, &v) in times.iter().zip(f) {
        if !v.is_finite() {
            continue;
        }
        if v <= target {
            let (t0, v0) = prev?;
            if v <= 0.0 || v0 <= 0.0 {
                return Some(t);
            }
            let (l0, l1, lt) = (v0.ln(), v.ln(), target.ln());
            return Some(t0 + (t - t0) * (lt - l0) / (l1 - l0));
        }
        prev = Some((t, v));
    }
    None
}

enum Step {
    Idle(f64),
    Pulse(usize, Vec<Complex64>),
}

/// Ensemble simulation of free evolution and n×dX_d sequences on the
/// uniform superposition of the manifold.
///
/// Per draw, each distinct CCX pulse is propagated once with per-tone RWA
/// in the offset system; the result is independent of its start time in
/// the nominal frame. Markovian noise enters through the secular
/// dissipator, which commutes with the offsets and with frame updates.
pub fn run_dd(params: &ModeParams, opts: &DdOptions) -> Result<DdResult> {
    let ordering = match &opts.ordering {
        Some(o) => o.clone(),
        None => table_ordering(opts.d)?,
    };
    let d = ordering.len();
    let dec = decompose(&ordering)?;
    let sigma = opts.sigma.unwrap_or_else(|| sigma_for_decay(&ordering, opts.free_decay_s));
    let space = SpaceSpec::qubits();
    let system = System::new(params, space);
    let dim = space.dim();
    let lsec = if opts.markovian.is_dissipative() {
        Some(secular_dissipator(&system, &opts.markovian)?)
    } else {
        None
    };
    let mut exp_cache: HashMap<u64, CMat> = HashMap::new();
    let mut expd = |t: f64| -> Option<CMat> {
        let l = lsec.as_ref()?;
        Some(exp_cache.entry(t.to_bits()).or_insert_with(|| (l * Complex64::from(t)).exp()).clone())
    };
    let tp = opts.pulse_duration_s;
    let half_pulse = expd(tp / 2.0);
    // frame diagonals of each CCX (states of the driven pair gain π/2)
    let frames: Vec<Vec<Complex64>> = dec
        .pulses
        .iter()
        .map(|t| {
            let mut v = vec![Complex64::from(1.0); dim];
            for s in [t.lower(), t.upper()] {
                v[space.index_of(s).expect("in space")] = Complex64::new(0.0, 1.0);
            }
            v
        })
        .collect();
    // per (repetition, time) step lists and idle channels
    let mut plans: Vec<(usize, usize, Option<Vec<(Step, Option<CMat>)>>)> = Vec::new();
    let t_xd = tp * dec.pulses.len() as f64;
    for &n in &opts.repetitions {
        for (ti, &t) in opts.times.iter().enumerate() {
            let count = n * d;
            let plan = if count == 0 {
                Some(vec![(Step::Idle(t), expd(t))])
            } else if t < t_xd * count as f64 {
                None
            } else {
                let tau = (t - t_xd * count as f64) / count as f64;
                let mut steps = vec![(Step::Idle(tau / 2.0), expd(tau / 2.0))];
                for k in 0..count {
                    for (p, f) in frames.iter().enumerate() {
                        steps.push((Step::Pulse(p, f.clone()), None));
                    }
                    let idle = if k + 1 == count { tau / 2.0 } else { tau };
                    steps.push((Step::Idle(idle), expd(idle)));
                }
                Some(steps)
            };
            plans.push((n, ti, plan));
        }
    }
    let mut psi = CVec::zeros(dim);
    for s in &ordering {
        psi[space.index_of(*s)?] = Complex64::from(1.0 / (d as f64).sqrt());
    }
    let rho0 = &psi * psi.adjoint();
    let config = EvolutionConfig::per_tone_rwa();
    let options = CompileOptions::default();
    let pulse_schedules: Vec<Schedule> = dec
        .pulses
        .iter()
        .map(|t| compile(&GateSpec::ccr(*t, PI, 0.0).with_duration(tp), params, None, &options))
        .collect::<Result<_>>()?;
    let seeds: Vec<u64> = (0..opts.draws as u64).map(|k| opts.seed.wrapping_mul(0x9E37_79B9).wrapping_add(k)).collect();
    let mut noise = NoiseChannels::none();
    noise.quasi_static_sigma = [sigma; 3];
    let per_draw: Vec<Result<Vec<f64>>> = dynamics::run_ensemble(&seeds, |seed| {
        let offsets = dynamics::sample_quasi_static(&noise, seed);
        let shifted = system.with_offsets(offsets);
        let dshift: Vec<f64> = (0..dim)
            .map(|i| {
                let l = space.label_of(i);
                (0..3).map(|k| offsets[k] * l.0[k] as f64).sum()
            })
            .collect();
        let idle = |t: f64| -> Vec<Complex64> {
            dshift.iter().map(|w| Complex64::from_polar(1.0, -2.0 * PI * w * t)).collect()
        };
        let mut pulses = Vec::with_capacity(pulse_schedules.len());
        for s in &pulse_schedules {
            let u = dynamics::propagate_unitary(&shifted, s, &config)?;
            // back to the nominal frame: exp(-i 2π Hδ tp) U
            let ph = idle(tp);
            pulses.push(CMat::from_fn(dim, dim, |r, c| ph[r] * u[(r, c)]));
        }
        let mut out = Vec::with_capacity(plans.len());
        for (_, _, plan) in &plans {
            let Some(steps) = plan else {
                out.push(f64::NAN);
                continue;
            };
            let mut rho = rho0.clone();
            let apply_l = |rho: &CMat, e: &Option<CMat>| -> CMat {
                match e {
                    Some(m) => linalg::unvec(&(m * linalg::vec_of(rho)), dim),
                    None => rho.clone(),
                }
            };
            for (step, chan) in steps {
                match step {
                    Step::Idle(t) => {
                        let p = idle(*t);
                        rho = CMat::from_fn(dim, dim, |r, c| p[r] * rho[(r, c)] * p[c].conj());
                        rho = apply_l(&rho, chan);
                    }
                    Step::Pulse(k, frame) => {
                        rho = apply_l(&rho, &half_pulse);
                        let u = CMat::from_fn(dim, dim, |r, c| frame[r] * pulses[*k][(r, c)]);
                        rho = &u * rho * u.adjoint();
                        rho = apply_l(&rho, &half_pulse);
                    }
                }
            }
            out.push((psi.adjoint() * &rho * &psi)[(0, 0)].re);
        }
        Ok(out)
    });
    let mut mean = vec![0.0; plans.len()];
    for r in per_draw {
        for (m, v) in mean.iter_mut().zip(r?) {
            *m += v / opts.draws as f64;
        }
    }
    let mut curves = Vec::new();
    for &n in &opts.repetitions {
        let fidelity: Vec<f64> = plans
            .iter()
            .zip(&mean)
            .filter(|((pn, _, _), _)| *pn == n)
            .map(|(_, &f)| normalized(f, d))
            .collect();
        let decay_time = decay_crossing(&opts.times, &fidelity);
        curves.push(DdCurve { repetitions: n, times: opts.times.clone(), fidelity, decay_time });
    }
    Ok(DdResult { d, ordering, sigma, curves })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_orderings_decompose_as_printed() {
        let d3 = decompose(&table_ordering(3).unwrap()).unwrap();
        assert_eq!(d3.kind, DecompositionKind::Star);
        let names: Vec<String> = d3.pulses.iter().map(|t| t.to_string()).collect();
        assert_eq!(names, ["A00", "0B0"]);
        let d4 = decompose(&table_ordering(4).unwrap()).unwrap();
        let names: Vec<String> = d4.pulses.iter().map(|t| t.to_string()).collect();
        assert_eq!(names, ["A10", "1B0", "A00"]);
        let d6 = decompose(&table_ordering(6).unwrap()).unwrap();
        let names: Vec<String> = d6.pulses.iter().map(|t| t.to_string()).collect();
        assert_eq!(names, ["A10", "01C", "0B1", "00C", "A00"]);
        let d8 = decompose(&table_ordering(8).unwrap()).unwrap();
        let names: Vec<String> = d8.pulses.iter().map(|t| t.to_string()).collect();
        assert_eq!(names, ["1B1", "10C", "1B0", "A10", "01C", "0B1", "00C"]);
    }

    #[test]
    fn non_neighbour_ordering_is_rejected() {
        let bad = labels(&["000", "011", "100"]);
        assert!(matches!(decompose(&bad), Err(Error::InvalidOrdering(_))));
    }

    #[test]
    fn sigma_solves_the_decay_condition() {
        let ord = table_ordering(4).unwrap();
        let s = sigma_for_decay(&ord, 5e-6);
        let f = normalized(free_fidelity(&ord, s, 5e-6), 4);
        assert!((f - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn decay_crossing_interpolates() {
        let t = [1.0, 2.0, 3.0];
        let f: Vec<f64> = t.iter().map(|x: &f64| (-x / 2.2).exp()).collect();
        assert!((decay_crossing(&t, &f).unwrap() - 2.2).abs() < 1e-9);
    }
}
