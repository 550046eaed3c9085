//! Two-qubit Hamiltonian-term synthesis on modes A and B with C in `|0⟩`.
//!
//! Local and controlled single-qubit terms come from pairs of conditional
//! tones, diagonal terms from frame updates, and XX/YY/XY/YX combinations
//! from Raman tone pairs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_collisions, stark_phases, GateSimulator};
use crate::circuit;
use crate::error::{Error, Result};
use crate::hilbert::Operator;
use crate::labels::{BasisLabel, Transition};
use crate::linalg::{self, CMat};
use crate::pulses::{self, Envelope, FrameUpdate, Schedule, Shape, Tone};
use crate::Complex64;

pub const SYNTHESIS_DURATION_S: f64 = 120e-9;
/// Single-photon detunings of the two Raman pairs (Hz). Both pairs sit
/// above their transitions here: with the √iSWAP pair below, its 0B0 tone
/// would beat against the √bSWAP pair's 0B0 tone only 2 MHz away.
pub const ISWAP_PAIR_DETUNING_HZ: f64 = 32e6;
pub const BSWAP_PAIR_DETUNING_HZ: f64 = super::BSWAP_DETUNING_HZ;

/// A real combination of two-qubit Pauli products, A first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    /// Coefficients in the order II, IX, ..., ZZ.
    pub coefficients: [f64; 16],
    pub label: String,
}

impl PauliTerm {
    pub fn product(index: usize) -> Self {
        let mut coefficients = [0.0; 16];
        coefficients[index] = 1.0;
        PauliTerm { coefficients, label: linalg::two_qubit_pauli_labels()[index].clone() }
    }

    pub fn all_products() -> Vec<PauliTerm> {
        (0..16).map(Self::product).collect()
    }

    pub fn operator(&self) -> Operator {
        let ps = linalg::two_qubit_paulis();
        let mut h = CMat::zeros(4, 4);
        for (p, &c) in ps.iter().zip(&self.coefficients) {
            h += p * Complex64::from(c);
        }
        h
    }

    fn index_of(label: &str) -> Option<usize> {
        linalg::two_qubit_pauli_labels().iter().position(|l| l == label)
    }
}

impl FromStr for PauliTerm {
    type Err = Error;

    /// Accepts a product such as `ZX` or a signed sum such as `XX+YY`, `XY-YX`.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_uppercase();
        let mut coefficients = [0.0; 16];
        let mut sign = 1.0;
        let mut token = String::new();
        let flush = |token: &mut String, sign: f64, coefficients: &mut [f64; 16]| -> Result<()> {
            let k = PauliTerm::index_of(token).ok_or_else(|| Error::UnsupportedTerm(s.to_string()))?;
            coefficients[k] += sign;
            token.clear();
            Ok(())
        };
        for ch in norm.chars() {
            match ch {
                '+' | '-' => {
                    if !token.is_empty() {
                        flush(&mut token, sign, &mut coefficients)?;
                    }
                    sign = if ch == '-' { -1.0 } else { 1.0 };
                }
                c => token.push(c),
            }
        }
        if token.is_empty() {
            return Err(Error::UnsupportedTerm(s.to_string()));
        }
        flush(&mut token, sign, &mut coefficients)?;
        Ok(PauliTerm { coefficients, label: norm })
    }
}

impl fmt::Display for PauliTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Index of a product label, e.g. `"ZX"` → 13.
fn idx(label: &str) -> usize {
    PauliTerm::index_of(label).expect("valid label")
}

fn tr(s: &str) -> Transition {
    s.parse().expect("valid transition")
}

/// Tones for `s (±) X/Y` on one mode, conditioned on the other qubit of the pair.
/// `signs` are the strengths on the spectator-0 and spectator-1 transitions.
fn conditional_pair(
    freqs: &std::collections::BTreeMap<Transition, f64>,
    transitions: [Transition; 2],
    strengths: [f64; 2],
    y_axis: bool,
    duration: f64,
    couplings: [f64; 3],
) -> Result<Vec<Tone>> {
    let mut out = Vec::new();
    for (t, s) in transitions.into_iter().zip(strengths) {
        if s == 0.0 {
            continue;
        }
        // a constant-phase tone generates (S/2)(cos Φ X - sin Φ Y); the cosine mean is A/2
        let base = if y_axis { -PI / 2.0 } else { 0.0 };
        let phase = if s < 0.0 { base + PI } else { base };
        let amp = 4.0 * s.abs() / couplings[t.mode.index()];
        out.push(Tone::new(freqs[&t], phase, Envelope::cosine(amp, duration)?, 0.0).targeting(t));
    }
    Ok(out)
}

/// Raman pair producing coefficient `c` on `|lower⟩⟨upper|`.
fn raman_pair(
    freqs: &std::collections::BTreeMap<Transition, f64>,
    bswap: bool,
    c: Complex64,
    detuning: f64,
    shape: Shape,
    duration: f64,
    couplings: [f64; 3],
) -> Result<Vec<Tone>> {
    if c.norm() == 0.0 {
        return Ok(Vec::new());
    }
    let unit = Envelope { shape, amplitude: 1.0, duration, drag: 0.0 }.power_area() / duration;
    // |c| = A² λ1 λ2 <env²> / (4 |Δ|)
    let amp = (4.0 * c.norm() * detuning.abs() / (couplings[0] * couplings[1] * unit)).sqrt();
    let env = Envelope::new(shape, amp, duration, 0.0)?;
    let phase = c.arg() + if detuning > 0.0 { PI } else { 0.0 };
    Ok(if bswap {
        vec![
            Tone::new(freqs[&tr("0B0")] - detuning, phase, env, 0.0).targeting(tr("0B0")),
            Tone::new(freqs[&tr("A10")] + detuning, 0.0, env, 0.0).targeting(tr("A10")),
        ]
    } else {
        vec![
            Tone::new(freqs[&tr("A00")] + detuning, phase, env, 0.0).targeting(tr("A00")),
            Tone::new(freqs[&tr("0B0")] + detuning, 0.0, env, 0.0).targeting(tr("0B0")),
        ]
    })
}

/// Ideal 8×8 evolution `exp(-i 2π τ H)` with `H` acting on A, B and identity on C.
pub fn target_unitary(term: &PauliTerm, strength: f64, duration: f64) -> Operator {
    let h4 = term.operator() * Complex64::from(strength);
    let u4 = linalg::propagator(&h4, duration);
    linalg::kron(&u4, &linalg::identity(2))
}

/// Diagonal state phases of `exp(-i 2π τ s P)` for a diagonal `P`.
fn diagonal_phases(term: &PauliTerm, strength: f64, duration: f64) -> [f64; 8] {
    let h = term.operator();
    let mut theta = [0.0; 8];
    for (k, lab) in BasisLabel::computational().enumerate() {
        let j = 2 * lab.0[0] as usize + lab.0[1] as usize;
        theta[k] = -2.0 * PI * duration * strength * h[(j, j)].re;
    }
    theta
}

/// Tone list and frame updates realising `strength · term` for `duration`,
/// before numeric Stark correction.
pub fn raw_schedule(sim: &GateSimulator, term: &PauliTerm, strength: f64, duration: f64) -> Result<Schedule> {
    let k = &term.coefficients;
    let freqs = circuit::conditional_frequencies(&sim.params);
    let lam = sim.options.couplings;
    let s = |l: &str| k[idx(l)] * strength;
    let mut tones = Vec::new();
    // B driven, conditioned on A
    for (axis, y) in [("X", false), ("Y", true)] {
        let (i, z) = (s(&format!("I{axis}")), s(&format!("Z{axis}")));
        tones.extend(conditional_pair(&freqs, [tr("0B0"), tr("1B0")], [i + z, i - z], y, duration, lam)?);
        let (i, z) = (s(&format!("{axis}I")), s(&format!("{axis}Z")));
        tones.extend(conditional_pair(&freqs, [tr("A00"), tr("A10")], [i + z, i - z], y, duration, lam)?);
    }
    // c|01⟩⟨10| + h.c. = Re c (XX+YY)/2 + Im c (XY-YX)/2
    // c|00⟩⟨11| + h.c. = Re c (XX-YY)/2 - Im c (XY+YX)/2
    let (xx, yy, xy, yx) = (s("XX"), s("YY"), s("XY"), s("YX"));
    let c_iswap = Complex64::new(xx + yy, xy - yx);
    let c_bswap = Complex64::new(xx - yy, -(xy + yx));
    tones.extend(raman_pair(&freqs, false, c_iswap, ISWAP_PAIR_DETUNING_HZ, Shape::Cosine, duration, lam)?);
    tones.extend(raman_pair(&freqs, true, c_bswap, BSWAP_PAIR_DETUNING_HZ, Shape::Cosine, duration, lam)?);
    let mut diag = PauliTerm { coefficients: [0.0; 16], label: String::new() };
    for l in ["ZI", "IZ", "ZZ"] {
        diag.coefficients[idx(l)] = k[idx(l)];
    }
    let updates = pulses::frame_updates_for(&diagonal_phases(&diag, strength, duration), duration);
    check_collisions(&tones, &sim.params, sim.options.collision_threshold_hz)?;
    Schedule::new(tones, updates, duration)
}

/// Result of synthesising one term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub term: PauliTerm,
    pub strength_hz: f64,
    #[serde(skip)]
    pub schedule: Schedule,
    /// Pauli coefficients of the effective Hamiltonian (Hz), II..ZZ.
    pub effective: [f64; 16],
    /// Norm of the traceless part along the target over the traceless norm.
    pub target_fraction: f64,
}

/// Effective two-qubit Hamiltonian `i log(U) / (2π τ)` of the C = 0 block,
/// as Pauli coefficients in Hz.
pub fn effective_hamiltonian(u8: &Operator, duration: f64) -> [f64; 16] {
    let idx = [0usize, 2, 4, 6];
    let u4 = CMat::from_fn(4, 4, |r, c| u8[(idx[r], idx[c])]);
    let h = linalg::unitary_generator(&u4) / Complex64::from(2.0 * PI * duration);
    let mut out = [0.0; 16];
    for (o, c) in out.iter_mut().zip(linalg::pauli_coefficients(&h)) {
        *o = c.re;
    }
    out
}

/// `|⟨h, t⟩| / (|h| |t|)` over the traceless components.
pub fn target_fraction(effective: &[f64; 16], target: &[f64; 16]) -> f64 {
    let dot: f64 = (1..16).map(|k| effective[k] * target[k]).sum();
    let nh = (1..16).map(|k| effective[k].powi(2)).sum::<f64>().sqrt();
    let nt = (1..16).map(|k| target[k].powi(2)).sum::<f64>().sqrt();
    if nh == 0.0 || nt == 0.0 {
        return if nt == 0.0 && nh < 1e-9 { 1.0 } else { 0.0 };
    }
    dot.abs() / (nh * nt)
}

/// Raman pair tones in a schedule: (first, second) indices per pair present.
fn raman_pairs(schedule: &Schedule, params: &crate::circuit::ModeParams) -> Vec<(usize, usize, bool)> {
    let freqs = circuit::conditional_frequencies(params);
    let offset = |k: usize| {
        let t = &schedule.tones[k];
        t.target.map(|tr| (t.carrier_hz - freqs[&tr]).abs()).unwrap_or(0.0)
    };
    let is = |k: usize, name: &str| schedule.tones[k].target == Some(tr(name)) && offset(k) > 1e6;
    let n = schedule.tones.len();
    let mut out = Vec::new();
    for k in 0..n.saturating_sub(1) {
        if is(k, "A00") && is(k + 1, "0B0") {
            out.push((k, k + 1, false));
        }
        if is(k, "0B0") && is(k + 1, "A10") {
            out.push((k, k + 1, true));
        }
    }
    out
}

/// Stark frame corrections on the C = 0 states that bring the simulated
/// diagonal onto the ideal one.
fn stark_correction(sim: &GateSimulator, schedule: &Schedule, term: &PauliTerm, strength: f64, duration: f64) -> Result<Vec<FrameUpdate>> {
    let g = sim.schedule_unitary(schedule)?;
    let ideal = target_unitary(term, strength, duration);
    let mut theta = stark_phases(&g.unitary, &ideal);
    // C = 1 states are outside the target space; leave their frames alone
    for k in [1usize, 3, 5, 7] {
        theta[k] = theta[k - 1];
    }
    Ok(pulses::frame_updates_for(&theta, duration))
}

fn corrected(sim: &GateSimulator, schedule: &Schedule, term: &PauliTerm, strength: f64, duration: f64) -> Result<Schedule> {
    let mut out = schedule.clone();
    if !out.tones.is_empty() {
        out.add_frame_updates(stark_correction(sim, schedule, term, strength, duration)?);
    }
    Ok(out)
}

/// Closed-loop trim of every Raman pair (common amplitude, phase of the
/// first tone, detuning of the second) by damped Gauss-Newton on the
/// traceless effective Hamiltonian after Stark correction.
fn refine_raman_pairs(sim: &GateSimulator, schedule: &mut Schedule, term: &PauliTerm, strength: f64, duration: f64) -> Result<()> {
    let pairs = raman_pairs(schedule, &sim.params);
    if pairs.is_empty() {
        return Ok(());
    }
    let scale = strength.abs();
    let target: Vec<f64> = term.coefficients.iter().map(|c| c * strength).collect();
    let base: Vec<(f64, f64, f64)> = pairs
        .iter()
        .map(|&(i, j, _)| (schedule.tones[i].envelope.amplitude, schedule.tones[i].phase_rad, schedule.tones[j].detuning_hz))
        .collect();
    let n = 3 * pairs.len();
    let apply = |sched: &mut Schedule, x: &DVector<f64>| -> Result<()> {
        for (p, &(i, j, _)) in pairs.iter().enumerate() {
            let (amp, ph, det) = base[p];
            let a = amp * x[3 * p].exp();
            for k in [i, j] {
                let e = sched.tones[k].envelope;
                sched.tones[k].envelope = Envelope::new(e.shape, a, e.duration, e.drag)?;
            }
            sched.tones[i].phase_rad = ph + x[3 * p + 1];
            sched.tones[j].detuning_hz = det + x[3 * p + 2] * scale;
        }
        Ok(())
    };
    let errors = |sched: &Schedule| -> Result<DVector<f64>> {
        let c = corrected(sim, sched, term, strength, duration)?;
        let h = effective_hamiltonian(&sim.schedule_unitary(&c)?.unitary, duration);
        Ok(DVector::from_iterator(15, (1..16).map(|k| (h[k] - target[k]) / scale)))
    };
    let mut x = DVector::zeros(n);
    let mut trial = schedule.clone();
    let mut e = errors(&trial)?;
    let mut jac = DMatrix::zeros(15, n);
    let h = 0.01;
    for k in 0..n {
        let mut xp = x.clone();
        xp[k] += h;
        apply(&mut trial, &xp)?;
        jac.set_column(k, &((errors(&trial)? - &e) / h));
    }
    let mut mu = 1e-3;
    for _ in 0..12 {
        if e.amax() < 1e-3 {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &e;
        let mut a = jtj.clone();
        for k in 0..n {
            a[(k, k)] += mu * (1.0 + jtj[(k, k)]);
        }
        let Some(step) = a.lu().solve(&(-g)) else { break };
        let step = step.map(|v| v.clamp(-0.5, 0.5));
        let xn = &x + &step;
        apply(&mut trial, &xn)?;
        let en = errors(&trial)?;
        let de = &en - &e;
        jac += (de - &jac * &step) * step.transpose() / step.norm_squared();
        if en.norm() < e.norm() {
            x = xn;
            e = en;
            mu = (mu / 3.0).max(1e-6);
        } else {
            mu *= 10.0;
        }
    }
    apply(schedule, &x)
}

/// Compiles `strength · term`, simulates it, appends Stark frame
/// corrections on the C = 0 states and reports the effective Hamiltonian.
pub fn synthesize_pauli_term(sim: &GateSimulator, term: &PauliTerm, strength: f64, duration: f64) -> Result<Synthesis> {
    if !(strength.is_finite() && duration > 0.0) {
        return Err(Error::InvalidArgument("strength must be finite and duration > 0".into()));
    }
    let mut schedule = raw_schedule(sim, term, strength, duration)?;
    refine_raman_pairs(sim, &mut schedule, term, strength, duration)?;
    let schedule = corrected(sim, &schedule, term, strength, duration)?;
    let g = sim.schedule_unitary(&schedule)?;
    let effective = effective_hamiltonian(&g.unitary, duration);
    let target: Vec<f64> = term.coefficients.iter().map(|c| c * strength).collect();
    let target: [f64; 16] = target.try_into().expect("16 entries");
    Ok(Synthesis {
        term: term.clone(),
        strength_hz: strength,
        target_fraction: target_fraction(&effective, &target),
        effective,
        schedule,
    })
}

/// Rank of the traceless parts of a set of effective Hamiltonians.
pub fn coefficient_rank(effective: &[[f64; 16]], rel_tol: f64) -> usize {
    let m = nalgebra::DMatrix::from_fn(effective.len(), 15, |r, c| effective[r][c + 1]);
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::ModeParams;

    #[test]
    fn parses_products_and_sums() {
        let t: PauliTerm = "xx+yy".parse().unwrap();
        assert_eq!(t.coefficients[idx("XX")], 1.0);
        assert_eq!(t.coefficients[idx("YY")], 1.0);
        let t: PauliTerm = "XY-YX".parse().unwrap();
        assert_eq!(t.coefficients[idx("YX")], -1.0);
        assert!(matches!("XQ".parse::<PauliTerm>(), Err(Error::UnsupportedTerm(_))));
    }

    #[test]
    fn identity_and_diagonal_terms_need_no_tones() {
        let sim = GateSimulator::new(ModeParams::measured_device());
        let ii = raw_schedule(&sim, &PauliTerm::product(0), 1e6, 100e-9).unwrap();
        assert!(ii.tones.is_empty() && ii.frame_updates.is_empty());
        let zz = raw_schedule(&sim, &PauliTerm::product(idx("ZZ")), 1e6, 100e-9).unwrap();
        assert!(zz.tones.is_empty() && !zz.frame_updates.is_empty());
    }

    #[test]
    fn zz_frame_updates_generate_zz() {
        let sim = GateSimulator::new(ModeParams::measured_device());
        let s = synthesize_pauli_term(&sim, &PauliTerm::product(idx("ZZ")), 0.5e6, 100e-9).unwrap();
        assert!(s.target_fraction > 1.0 - 1e-9, "{}", s.target_fraction);
        assert!((s.effective[idx("ZZ")] - 0.5e6).abs() < 1.0);
    }

    #[test]
    fn pauli_combination_identities() {
        // |01⟩⟨10| + h.c. = (XX + YY)/2 and |00⟩⟨11| + h.c. = (XX - YY)/2
        let mut a = CMat::zeros(4, 4);
        a[(1, 2)] = 1.0.into();
        a[(2, 1)] = 1.0.into();
        let c = linalg::pauli_coefficients(&a);
        assert!((c[idx("XX")].re - 0.5).abs() < 1e-15 && (c[idx("YY")].re - 0.5).abs() < 1e-15);
        let mut b = CMat::zeros(4, 4);
        b[(0, 3)] = Complex64::new(0.0, 1.0);
        b[(3, 0)] = Complex64::new(0.0, -1.0);
        let c = linalg::pauli_coefficients(&b);
        assert!((c[idx("XY")].re + 0.5).abs() < 1e-15 && (c[idx("YX")].re + 0.5).abs() < 1e-15);
    }
}
