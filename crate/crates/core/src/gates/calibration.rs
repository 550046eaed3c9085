//! Deterministic benchmarking: repeated same-gate and gate/inverse
//! sequences, a two-parameter error model per block, and Newton updates of
//! tone amplitude and detuning.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::{blocks, calibrate_stark, extract_block, ideal_unitary, Block, CalibrationRecord, GateKind, GateSimulator, GateSpec, Knob};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec};
use crate::pulses;
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbOptions {
    pub max_iters: usize,
    /// Largest sequence repetition count in each trace.
    pub repetitions: usize,
    pub tolerance: f64,
    /// Relative amplitude probe for the finite-difference Jacobian.
    pub amplitude_probe: f64,
    /// Detuning probe (Hz).
    pub detuning_probe_hz: f64,
}

impl Default for DbOptions {
    fn default() -> Self {
        DbOptions { max_iters: 12, repetitions: 10, tolerance: 1e-3, amplitude_probe: 0.01, detuning_probe_hz: 50e3 }
    }
}

/// One DB trace: a population after `m = 1, 2, …` sequence repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbTrace {
    pub block: usize,
    /// `"YY"` (same-gate) or `"XXbar"` (gate/inverse).
    pub sequence: String,
    /// `"lower"` or `"plus_x"`.
    pub initial: String,
    /// State whose population is recorded.
    pub projector: String,
    pub probability: Vec<f64>,
    pub ideal: Vec<f64>,
}

impl DbTrace {
    pub fn deviation(&self) -> f64 {
        self.probability.iter().zip(&self.ideal).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Outcome of a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbReport {
    pub record: CalibrationRecord,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// Fitted (rotation-angle error, Z-tilt) per block on the final iteration.
    pub fitted_errors: Vec<(f64, f64)>,
    pub traces: Vec<DbTrace>,
}

/// Logical 2×2 blocks of the X, Y and X̄ variants of a gate.
struct Variants {
    x: Vec<CMat>,
    y: Vec<CMat>,
    xbar: Vec<CMat>,
    axes: [Vec<f64>; 3],
}

fn variant(gate: &GateSpec, dphi: f64) -> GateSpec {
    let mut g = gate.clone();
    g.phi += dphi;
    g
}

fn simulate_variants(sim: &GateSimulator, gate: &GateSpec, rec: &CalibrationRecord) -> Result<(Variants, CalibrationRecord)> {
    let rec = calibrate_stark(sim, gate, Some(rec))?;
    let stark = pulses::diagonal_unitary_of(&rec.stark)?;
    let bl = blocks(gate);
    let mut out: [Vec<CMat>; 3] = Default::default();
    let mut axes: [Vec<f64>; 3] = Default::default();
    for (k, dphi) in [0.0, FRAC_PI_2, PI].into_iter().enumerate() {
        let g = variant(gate, dphi);
        let mut bare = rec.clone();
        bare.stark = Default::default();
        let u = sim.unitary(&g, Some(&bare))?;
        let logical = &stark * &u.unitary;
        out[k] = bl.iter().map(|b| extract_block(&logical, b.lower, b.upper)).collect();
        axes[k] = blocks(&g).iter().map(|b| b.phi).collect();
    }
    let [x, y, xbar] = out;
    Ok((Variants { x, y, xbar, axes }, rec))
}

/// Model gate `exp(-i [θ(1+ε)/2 (cos φ X + sin φ Y) + η/2 Z])`.
pub fn model_gate(theta: f64, phi: f64, eps: f64, eta: f64) -> CMat {
    let v = [theta * (1.0 + eps) / 2.0 * phi.cos(), theta * (1.0 + eps) / 2.0 * phi.sin(), eta / 2.0];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let (s, co) = n.sin_cos();
    let f = if n > 1e-300 { s / n } else { 1.0 };
    CMat::from_row_slice(
        2,
        2,
        &[
            c(co, -f * v[2]),
            c(-f * v[1], -f * v[0]),
            c(f * v[1], -f * v[0]),
            c(co, f * v[2]),
        ],
    )
}

/// Number of gates per half-sequence: `k` with `θ ≈ π / k`.
fn half_length(theta: f64) -> usize {
    (PI / theta.abs()).round().max(1.0) as usize
}

fn plus_x() -> CVec {
    CVec::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]) / Complex64::from(2f64.sqrt())
}

fn lower() -> CVec {
    CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])
}

fn plus_y() -> CVec {
    CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]) / Complex64::from(2f64.sqrt())
}

/// (sequence, initial state, projector) combinations of the eight traces per block.
const TRACE_KINDS: [(&str, &str, &str); 8] = [
    ("YY", "lower", "lower"),
    ("YY", "lower", "plus_x"),
    ("YY", "plus_x", "plus_x"),
    ("YY", "plus_x", "plus_y"),
    ("XXbar", "lower", "lower"),
    ("XXbar", "lower", "plus_x"),
    ("XXbar", "plus_x", "plus_x"),
    ("XXbar", "plus_x", "plus_y"),
];

/// DB traces of one block. Survival alone is even in the Z tilt, so each
/// initial state is also projected on an orthogonal equatorial state.
fn block_traces(theta: f64, x: &CMat, y: &CMat, xbar: &CMat, reps: usize) -> Vec<Vec<f64>> {
    let k = half_length(theta);
    let mut yy = linalg::identity(2);
    for _ in 0..2 * k {
        yy = y * yy;
    }
    let mut xx = linalg::identity(2);
    for _ in 0..k {
        xx = x * xx;
    }
    for _ in 0..k {
        xx = xbar * xx;
    }
    let state = |name: &str| match name {
        "lower" => lower(),
        "plus_x" => plus_x(),
        _ => plus_y(),
    };
    TRACE_KINDS
        .iter()
        .map(|&(seq, init, proj)| {
            let m = if seq == "YY" { &yy } else { &xx };
            let (mut psi, p) = (state(init), state(proj));
            (0..reps)
                .map(|_| {
                    psi = m * &psi;
                    p.dotc(&psi).norm_sqr()
                })
                .collect()
        })
        .collect()
}

/// Model variants with the same post-gate frame correction the simulator
/// applies: the X variant's diagonal phases against its ideal are removed
/// from all three.
fn model_traces(b: &Block, axes: [f64; 3], eps: f64, eta: f64, reps: usize) -> Vec<Vec<f64>> {
    let m = axes.map(|phi| model_gate(b.theta, phi, eps, eta));
    let r = &m[0] * linalg::rotation(b.theta, axes[0]).adjoint();
    let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        Complex64::from_polar(1.0, -r[(0, 0)].arg()),
        Complex64::from_polar(1.0, -r[(1, 1)].arg()),
    ]));
    block_traces(b.theta, &(&d * &m[0]), &(&d * &m[1]), &(&d * &m[2]), reps)
}

fn flatten(t: &[Vec<f64>]) -> Vec<f64> {
    t.iter().flatten().cloned().collect()
}

/// Least-squares (ε, η) for one block's measured traces.
fn fit_errors(b: &Block, axes: [f64; 3], measured: &[f64], reps: usize) -> (f64, f64) {
    let resid = |p: [f64; 2]| -> Vec<f64> {
        flatten(&model_traces(b, axes, p[0], p[1], reps)).iter().zip(measured).map(|(m, d)| m - d).collect()
    };
    let cost = |p: [f64; 2]| resid(p).iter().map(|r| r * r).sum::<f64>();
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for start in [[0.0, 0.0], [0.03, 0.0], [-0.03, 0.0], [0.0, 0.1], [0.0, -0.1]] {
        let p = levenberg_marquardt(&resid, start);
        let c = cost(p);
        if c < best.1 {
            best = (p, c);
        }
    }
    (best.0[0], best.0[1])
}

fn levenberg_marquardt(resid: &dyn Fn([f64; 2]) -> Vec<f64>, mut p: [f64; 2]) -> [f64; 2] {
    let mut r = resid(p);
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut mu = 1e-3;
    for _ in 0..200 {
        let h = 1e-7;
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|j| {
                let mut q = p;
                q[j] += h;
                resid(q).iter().zip(&r).map(|(a, b)| (a - b) / h).collect()
            })
            .collect();
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for a in 0..2 {
            for b2 in 0..2 {
                jtj[a][b2] = cols[a].iter().zip(&cols[b2]).map(|(x, y)| x * y).sum();
            }
            jtr[a] = cols[a].iter().zip(&r).map(|(x, y)| x * y).sum();
        }
        let mut improved = false;
        for _ in 0..20 {
            let m = [[jtj[0][0] * (1.0 + mu), jtj[0][1]], [jtj[1][0], jtj[1][1] * (1.0 + mu)]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.abs() < 1e-300 {
                mu *= 10.0;
                continue;
            }
            let dx = [-(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det, -(m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det];
            let q = [p[0] + dx[0], p[1] + dx[1]];
            let rq = resid(q);
            let cq: f64 = rq.iter().map(|x| x * x).sum();
            if cq < cost {
                p = q;
                r = rq;
                let done = cost - cq < 1e-16 * (1.0 + cost);
                cost = cq;
                mu = (mu / 10.0).max(1e-12);
                improved = true;
                if done {
                    return p;
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

/// DB traces, fitted (ε, η) per block and the record with its Stark correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub errors: Vec<(f64, f64)>,
    pub residual: f64,
    pub traces: Vec<DbTrace>,
    pub record: CalibrationRecord,
}

pub fn measure(sim: &GateSimulator, gate: &GateSpec, rec: &CalibrationRecord, reps: usize) -> Result<Measurement> {
    let (v, record) = simulate_variants(sim, gate, rec)?;
    let bl = blocks(gate);
    let mut errors = Vec::new();
    let mut traces = Vec::new();
    let mut residual: f64 = 0.0;
    for (i, b) in bl.iter().enumerate() {
        let measured = block_traces(b.theta, &v.x[i], &v.y[i], &v.xbar[i], reps);
        let axes = [v.axes[0][i], v.axes[1][i], v.axes[2][i]];
        let ideal = model_traces(b, axes, 0.0, 0.0, reps);
        for (j, (m, id)) in measured.iter().zip(&ideal).enumerate() {
            let (seq, init, proj) = TRACE_KINDS[j];
            let t = DbTrace {
                block: i,
                sequence: seq.into(),
                initial: init.into(),
                projector: proj.into(),
                probability: m.clone(),
                ideal: id.clone(),
            };
            residual = residual.max(t.deviation());
            traces.push(t);
        }
        errors.push(fit_errors(b, axes, &flatten(&measured), reps));
    }
    Ok(Measurement { errors, residual, traces, record })
}

fn knob_values(rec: &CalibrationRecord, knob: Knob) -> (f64, f64) {
    match knob {
        Knob::Tone(k) => (rec.amplitudes[k], rec.detunings[k]),
        Knob::Raman(i, j) => (rec.amplitudes[i], rec.detunings[j]),
    }
}

fn set_knob(rec: &mut CalibrationRecord, knob: Knob, amp: f64, det: f64) {
    match knob {
        Knob::Tone(k) => {
            rec.amplitudes[k] = amp;
            rec.detunings[k] = det;
        }
        Knob::Raman(i, j) => {
            let ratio = rec.amplitudes[j] / rec.amplitudes[i];
            rec.amplitudes[i] = amp;
            rec.amplitudes[j] = amp * ratio;
            rec.detunings[j] = det;
        }
    }
}

fn initial_record(sim: &GateSimulator, gate: &GateSpec, initial: Option<&CalibrationRecord>) -> Result<CalibrationRecord> {
    let mut rec = initial.cloned().unwrap_or_default();
    rec.signature = gate.signature();
    rec.stark = Default::default();
    let sched = sim.compile(gate, Some(&rec))?;
    rec.amplitudes = sched.tones.iter().map(|t| t.envelope.amplitude).collect();
    rec.detunings = sched.tones.iter().map(|t| t.detuning_hz).collect();
    if initial.is_none() && matches!(gate.kind, GateKind::RamanIswap | GateKind::RamanBswap) {
        // the perturbative amplitude misses the rate by tens of percent when
        // Δ is only a few Ω; rescale from a fitted rate before linearising
        let fit = super::raman::fit_raman_rate(sim, gate, &sched, 40)?;
        let s = fit.rate_ratio.recip().sqrt();
        rec.amplitudes.iter_mut().for_each(|a| *a *= s);
    }
    Ok(rec)
}

/// DB traces of the gate with the given tone parameters (Stark correction
/// extracted numerically first), without any parameter update.
pub fn db_traces(sim: &GateSimulator, gate: &GateSpec, rec: Option<&CalibrationRecord>, reps: usize) -> Result<Vec<DbTrace>> {
    let rec = initial_record(sim, gate, rec)?;
    Ok(measure(sim, gate, &rec, reps)?.traces)
}

/// Calibrates amplitudes, detunings and Stark frame corrections of `gate`
/// until every DB trace deviates from ideal by less than `tolerance`.
pub fn calibrate_db(
    sim: &GateSimulator,
    gate: &GateSpec,
    initial: Option<&CalibrationRecord>,
    options: &DbOptions,
) -> Result<DbReport> {
    gate.validate()?;
    let bl = blocks(gate);
    if bl.is_empty() {
        let record = initial_record(sim, gate, initial)?;
        return Ok(DbReport { record, iterations: 0, residual_history: vec![0.0], fitted_errors: vec![], traces: vec![] });
    }
    let mut rec = initial_record(sim, gate, initial)?;
    let reps = options.repetitions.max(1);
    let mut history = Vec::new();
    // knobs in probe units: amplitude relative to its start value, detuning in probe steps
    let scale: Vec<(f64, f64)> = bl
        .iter()
        .map(|b| (knob_values(&rec, b.knob).0 * options.amplitude_probe, options.detuning_probe_hz))
        .collect();
    let mut jac: Option<DMatrix<f64>> = None;
    let mut last: Option<(DVector<f64>, DVector<f64>)> = None;
    for iter in 0..=options.max_iters {
        let m = measure(sim, gate, &rec, reps)?;
        history.push(m.residual);
        log::debug!("DB iteration {iter}: residual {:.3e}, errors {:?}", m.residual, m.errors);
        if m.residual < options.tolerance {
            let mut record = m.record;
            record.residual_oscillation = m.residual;
            return Ok(DbReport {
                record,
                iterations: iter,
                residual_history: history,
                fitted_errors: m.errors,
                traces: m.traces,
            });
        }
        if iter == options.max_iters {
            return Err(Error::NoConvergence { residual: m.residual, iterations: iter });
        }
        let e = error_vector(&m.errors);
        let x = knob_vector(&rec, &bl, &scale);
        match (&mut jac, &last) {
            (None, _) => jac = Some(jacobian(sim, gate, &rec, &e, &scale, reps)?),
            (Some(j), Some((x0, e0))) => {
                // Broyden rank-one update from the previous step
                let dx = &x - x0;
                let de = &e - e0;
                let n2 = dx.norm_squared();
                if n2 > 0.0 {
                    *j += (de - &*j * &dx) * dx.transpose() / n2;
                }
            }
            _ => {}
        }
        let j = jac.as_ref().expect("set above");
        let step = j.clone().lu().solve(&(-&e)).ok_or(Error::NoConvergence { residual: m.residual, iterations: iter })?;
        last = Some((x.clone(), e));
        // keep every amplitude positive
        let mut shrink: f64 = 1.0;
        for (i, b) in bl.iter().enumerate() {
            let a = knob_values(&rec, b.knob).0;
            let da = step[2 * i] * scale[i].0;
            if a + da < 0.5 * a {
                shrink = shrink.min(0.5 * a / -da);
            }
        }
        apply_knobs(&mut rec, &bl, &scale, &(x + step * shrink));
    }
    unreachable!()
}

fn error_vector(errors: &[(f64, f64)]) -> DVector<f64> {
    DVector::from_iterator(errors.len() * 2, errors.iter().flat_map(|&(a, b)| [a, b]))
}

fn knob_vector(rec: &CalibrationRecord, bl: &[Block], scale: &[(f64, f64)]) -> DVector<f64> {
    DVector::from_iterator(
        bl.len() * 2,
        bl.iter().zip(scale).flat_map(|(b, s)| {
            let (a, d) = knob_values(rec, b.knob);
            [a / s.0, d / s.1]
        }),
    )
}

fn apply_knobs(rec: &mut CalibrationRecord, bl: &[Block], scale: &[(f64, f64)], x: &DVector<f64>) {
    for (i, (b, s)) in bl.iter().zip(scale).enumerate() {
        set_knob(rec, b.knob, x[2 * i] * s.0, x[2 * i + 1] * s.1);
    }
}

/// Full finite-difference Jacobian of the fitted errors with respect to
/// every knob, in probe units.
fn jacobian(
    sim: &GateSimulator,
    gate: &GateSpec,
    rec: &CalibrationRecord,
    base: &DVector<f64>,
    scale: &[(f64, f64)],
    reps: usize,
) -> Result<DMatrix<f64>> {
    let bl = blocks(gate);
    let x0 = knob_vector(rec, &bl, scale);
    let n = x0.len();
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut x = x0.clone();
        x[k] += 1.0;
        let mut probe = rec.clone();
        apply_knobs(&mut probe, &bl, scale, &x);
        let e = error_vector(&measure(sim, gate, &probe, reps)?.errors);
        j.set_column(k, &(e - base));
    }
    Ok(j)
}

/// Sanity check of the ideal model against the ideal gate blocks.
pub fn ideal_block_matches(gate: &GateSpec) -> Result<bool> {
    let u = ideal_unitary(gate)?;
    Ok(blocks(gate).iter().all(|b| {
        let m = model_gate(b.theta, b.phi, 0.0, 0.0);
        linalg::max_abs(&(extract_block(&u, b.lower, b.upper) - m)) < 1e-12
    }))
}
