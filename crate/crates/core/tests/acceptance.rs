//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

use trimon_core::circuit::{self, CircuitSpec, ModeParams};
use trimon_core::dynamics::{self, DriveModel, Method, System};
use trimon_core::gates::{self, qudit, raman, rb, synthesis, DbOptions, RbOptions};
use trimon_core::linalg;
use trimon_core::measurement::{ConfusionMatrix, ReadoutModel};
use trimon_core::tomography::{self, ChiMatrix, QptNoise, QptRuns, QstData, QstOptions};
use trimon_core::hilbert;
use trimon_core::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Result<Outcome>) -> Outcome {
    let start = Instant::now();
    let out = f().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took < l);
    let budget = limit.map(|l| format!(" (limit {:.0?})", l)).unwrap_or_default();
    Outcome::new(out.pass && in_time, format!("{}; runtime {:.1?}{budget}", out.detail, took))
}

fn device() -> ModeParams {
    ModeParams::measured_device()
}

fn tr(s: &str) -> Transition {
    s.parse().expect("valid transition")
}

fn criterion_1() -> Result<Outcome> {
    let p = circuit::mode_params(&CircuitSpec::planar_reference());
    let expected = [4.691e9, 5.195e9, 5.957e9];
    let rel: Vec<f64> = p.omega.iter().zip(expected).map(|(w, e)| (w - e) / e).collect();
    let pass = rel.iter().all(|r| r.abs() < 1e-3);
    Ok(Outcome::new(
        pass,
        format!(
            "omega = {:.4} / {:.4} / {:.4} GHz, relative error {:+.2e} / {:+.2e} / {:+.2e} (tolerance 1e-3)",
            p.omega[0] / 1e9,
            p.omega[1] / 1e9,
            p.omega[2] / 1e9,
            rel[0],
            rel[1],
            rel[2]
        ),
    ))
}

fn criterion_2() -> Result<Outcome> {
    let p = device();
    let f = circuit::conditional_frequencies(&p);
    let space = SpaceSpec::qubits();
    let h = hilbert::static_hamiltonian(&p, &space);
    let mut worst: f64 = 0.0;
    for (t, &freq) in &f {
        let direct = hilbert::transition_frequency(&h, &space, t.lower(), t.upper())?;
        worst = worst.max((direct - freq).abs() / freq);
        for (k, other) in t.mode.spectators().into_iter().enumerate() {
            if t.spectators[k] == 0 {
                let mut flipped = *t;
                flipped.spectators[k] = 1;
                let split = freq - f[&flipped];
                let expect = 2.0 * p.cross(t.mode, other);
                worst = worst.max((split - expect).abs() / freq);
            }
        }
    }
    let ab = f[&tr("0B0")] - f[&tr("1B0")];
    let pass = f.len() == 12 && worst < 1e-14 && (ab - 211e6).abs() < 1e-3;
    Ok(Outcome::new(
        pass,
        format!("{} transitions, worst relative splitting error {worst:.1e}, AB splitting {:.6} MHz", f.len(), ab / 1e6),
    ))
}

fn criterion_3() -> Result<Outcome> {
    let sim = GateSimulator::new(device());
    let g = GateSpec::ccr(tr("0B0"), FRAC_PI_2, 0.0);
    let rec = gates::calibrate_stark(&sim, &g, None)?;
    let u = sim.unitary(&g, Some(&rec))?;
    let f = gates::gate_fidelity(&g, &u)?;
    let spect = gates::spectator_deviation(&g, &u.unitary);
    let amp = rec.amplitudes[0];
    let splittings = [211e6, 270e6];
    let pass = f >= 0.999 && spect < 1e-3 && amp <= 10e6 && splittings.iter().all(|&s| s >= 200e6);
    Ok(Outcome::new(
        pass,
        format!("ccX_pi/2 on 0B0: F = {f:.6}, spectator deviation {spect:.1e}, amplitude {:.3} MHz", amp / 1e6),
    ))
}

fn criterion_4() -> Result<Outcome> {
    let sim = GateSimulator::new(device());
    let cr = GateSpec::cr(Mode::B, Mode::C, 0, PI, 0.0)?;
    let cr_rec = gates::calibrate_stark(&sim, &cr, None)?;
    let f_cr = gates::gate_fidelity(&cr, &sim.unitary(&cr, Some(&cr_rec))?)?;
    let r = GateSpec::r(Mode::C, FRAC_PI_2, 0.0);
    let r_rec = gates::calibrate_db(&sim, &r, None, &DbOptions::default())?.record;
    let f_r = gates::gate_fidelity(&r, &sim.unitary(&r, Some(&r_rec))?)?;
    Ok(Outcome::new(
        f_cr >= 0.995 && f_r >= 0.995,
        format!("CR X_pi on B (0B0 + 1B0): F = {f_cr:.6}; unconditional R_pi/2 on C (four tones): F = {f_r:.6}"),
    ))
}

fn criterion_5() -> Result<Outcome> {
    let sim = GateSimulator::new(device());
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, g) in [
        ("sqrt-iSWAP", GateSpec::raman_iswap(FRAC_PI_2, 0.0, gates::ISWAP_DETUNING_HZ)),
        ("sqrt-ibSWAP", GateSpec::raman_bswap(FRAC_PI_2, 0.0, gates::BSWAP_DETUNING_HZ)),
    ] {
        let sched = sim.compile(&g, None)?;
        let fit = raman::fit_raman_rate(&sim, &g, &sched, 40)?;
        let rec = gates::calibrate_stark(&sim, &g, None)?;
        let f = gates::gate_fidelity_ab(&g, &sim.unitary(&g, Some(&rec))?)?;
        let ok = (fit.rate_ratio - 1.0).abs() <= 0.15 && fit.final_intermediate_population < 0.01 && f >= 0.99;
        pass &= ok;
        parts.push(format!(
            "{name} (|Delta| = {:.0} MHz): rate ratio {:.3}, intermediate population {:.1e} (hardware figure 1e-3), F = {f:.5}",
            g.raman_detuning.abs() / 1e6,
            fit.rate_ratio,
            fit.final_intermediate_population
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn criterion_6() -> Result<Outcome> {
    let model = ReadoutModel::symmetric(0.05, 40_000)?;
    let mut worst_f: f64 = 1.0;
    let mut worst_c: f64 = 1.0;
    for (k, bell) in tomography::bell_states().into_iter().enumerate() {
        let state = QuantumState::pure(bell.clone())?;
        let data = QstData::sampled(&state, &model, 100 + k as u64)?;
        let est = tomography::qst_mle(&data, Some(&model.assignment), &QstOptions::default())?;
        let ideal = &bell * bell.adjoint();
        worst_f = worst_f.min(tomography::state_fidelity(&est.rho, &ideal)?);
        worst_c = worst_c.min(tomography::concurrence(&est.rho)?);
    }

    let clean = GateSimulator::new(device());
    let noisy = clean.clone().with_noise(NoiseChannels::measured_device());
    let g = GateSpec::ccr(tr("0B0"), FRAC_PI_2, 0.0);
    let rec = gates::calibrate_stark(&clean, &g, None)?;
    let channel = gates::channel_ab(&noisy.channel(&g, Some(&rec))?, &noisy.system.space)?;
    let ideal = ChiMatrix::from_unitary(&gates::ideal_unitary_ab(&g)?);
    let injected = tomography::gate_fidelity(&ChiMatrix::new(tomography::superop_to_chi(&channel), false), &ideal, 4)?;
    let noise = QptNoise { confusion: Some(ConfusionMatrix::symmetric(4, 0.05)?), ..Default::default() };
    let gate_runs = QptRuns::simulate(&channel, &noise, 1)?;
    let reference = QptRuns::simulate(&linalg::identity(16), &noise, 2)?;
    let result = tomography::qpt(&gate_runs, Some(&reference))?;
    let recovered = tomography::gate_fidelity(result.best(), &ideal, 4)?;
    let pass = worst_f >= 0.995 && worst_c >= 0.99 && (recovered - injected).abs() <= 3e-3;
    Ok(Outcome::new(
        pass,
        format!(
            "Bell QST: min fidelity {worst_f:.4}, min concurrence {worst_c:.4}; QPT: injected F = {injected:.5}, recovered F = {recovered:.5}"
        ),
    ))
}

fn criterion_7() -> Result<Outcome> {
    let sim = GateSimulator::new(device());
    let g = GateSpec::ccr(tr("0B0"), FRAC_PI_2, 0.0);
    let opts = DbOptions::default();
    let clean = gates::calibrate_db(&sim, &g, None, &opts)?;
    let mut injected = clean.record.clone();
    injected.amplitudes[0] *= 1.02;
    injected.detunings[0] += 200e3;
    let fixed = gates::calibrate_db(&sim, &g, Some(&injected), &opts)?;
    let detected = fixed.residual_history[0];
    let residual = *fixed.residual_history.last().expect("history");
    let d_amp = (fixed.record.amplitudes[0] / clean.record.amplitudes[0] - 1.0).abs();
    let d_det = (fixed.record.detunings[0] - clean.record.detunings[0]).abs();
    let db_ok = detected > opts.tolerance && residual < 1e-3 && d_amp < 1e-3 && d_det < 10e3;

    let mut rb_ok = true;
    let mut rb_parts = Vec::new();
    for eps in [1e-3, 4e-3] {
        let r = rb::run_rb(&sim, &RbOptions { depolarizing: Some(eps), ..RbOptions::default() })?;
        let rel = ((1.0 - r.gate_fidelity) - eps / 2.0).abs() / (eps / 2.0);
        rb_ok &= rel <= 0.05;
        rb_parts.push(format!("eps {eps:.0e}: F = {:.6} ({:.1} % off)", r.gate_fidelity, 100.0 * rel));
    }
    let noisy = sim.clone().with_noise(NoiseChannels::measured_device());
    let t = rb::run_rb(&noisy, &RbOptions::default())?;
    let band_ok = (0.998..=0.9995).contains(&t.gate_fidelity);
    Ok(Outcome::new(
        db_ok && rb_ok && band_ok,
        format!(
            "DB: initial residual {detected:.3}, final {residual:.1e}, amplitude off clean by {d_amp:.1e}, detuning by {:.1} kHz; RB {}; RB with T1/T2: F = {:.5}",
            d_det / 1e3,
            rb_parts.join(", "),
            t.gate_fidelity
        ),
    ))
}

fn criterion_8() -> Result<Outcome> {
    let p = device();
    let mut pass = true;
    let mut parts = Vec::new();
    for d in [3usize, 4, 6, 8] {
        let x = qudit::ideal_sequence(&qudit::qudit_x(d, None)?)?;
        let mut xd = x.clone();
        for _ in 1..d {
            xd = &xd * &x;
        }
        let exact = linalg::max_abs(&(xd - linalg::identity(x.nrows()))) < 1e-12;
        let res = qudit::run_dd(&p, &qudit::DdOptions::new(d))?;
        let tau = |n: usize| res.curves.iter().find(|c| c.repetitions == n).and_then(|c| c.decay_time);
        let horizon = res.curves[0].times.last().copied().unwrap_or(0.0);
        let free = tau(0).unwrap_or(horizon);
        let seq: Vec<f64> = [1, 2].map(|n| tau(n).unwrap_or(f64::INFINITY)).to_vec();
        let outlives = seq.iter().all(|&t| t > free);
        let agree = match (tau(1), tau(2)) {
            (Some(a), Some(b)) => (a - b).abs() / a.min(b) <= 0.2,
            (None, None) => true,
            _ => false,
        };
        pass &= exact && outlives && agree;
        let show = |t: f64| if t.is_finite() { format!("{:.1} us", t * 1e6) } else { "beyond window".into() };
        parts.push(format!("d={d}: free {:.1} us, n=1 {}, n=2 {}", free * 1e6, show(seq[0]), show(seq[1])));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn criterion_9() -> Result<Outcome> {
    let sim = GateSimulator::new(device());
    let strength = 0.5e6;
    let mut min_fraction: f64 = 1.0;
    let mut worst = String::new();
    let mut traceless = Vec::new();
    for term in synthesis::PauliTerm::all_products() {
        let s = synthesis::synthesize_pauli_term(&sim, &term, strength, synthesis::SYNTHESIS_DURATION_S)?;
        if s.target_fraction < min_fraction {
            min_fraction = s.target_fraction;
            worst = format!("{term}");
        }
        if term.coefficients[0] == 0.0 {
            traceless.push(s.effective);
        }
    }
    let rank = synthesis::coefficient_rank(&traceless, 1e-3);
    Ok(Outcome::new(
        min_fraction >= 0.95 && traceless.len() == 15 && rank == 15,
        format!("min target fraction {min_fraction:.4} ({worst}), rank {rank} of {} traceless terms", traceless.len()),
    ))
}

fn criterion_10() -> Result<Outcome> {
    let p = device();
    let space3 = SpaceSpec::uniform(3)?;
    let sim3 = GateSimulator::with_space(p, space3);
    let mut worst_unitarity: f64 = 0.0;
    for g in [
        GateSpec::ccr(tr("0B0"), FRAC_PI_2, 0.0),
        GateSpec::cr(Mode::B, Mode::C, 0, PI, 0.0)?,
        GateSpec::r(Mode::C, FRAC_PI_2, 0.0),
        GateSpec::raman_iswap(FRAC_PI_2, 0.0, gates::ISWAP_DETUNING_HZ),
        GateSpec::raman_bswap(FRAC_PI_2, 0.0, gates::BSWAP_DETUNING_HZ),
    ] {
        let sched = sim3.compile(&g, None)?;
        let u = dynamics::propagate_unitary(&sim3.system, &sched, &sim3.config)?;
        worst_unitarity = worst_unitarity.max(linalg::unitarity_error(&u));
    }

    let ccr = sim3.compile(&GateSpec::ccr(tr("0B0"), FRAC_PI_2, 0.0), None)?;
    let mut idle = ccr.clone();
    idle.delay(100e-6 - ccr.total_duration_s);
    let uniform = linalg::CVec::from_element(space3.dim(), Complex64::new(1.0 / (space3.dim() as f64).sqrt(), 0.0));
    let rho = dynamics::propagate_lindblad(
        &sim3.system,
        &idle,
        &NoiseChannels::measured_device(),
        &EvolutionConfig::default(),
        &QuantumState::pure(uniform)?,
    )?;
    let drift = (rho.density_matrix().trace() - Complex64::new(1.0, 0.0)).norm();

    let space = SpaceSpec::qubits();
    let system = System::new(&device(), space);
    let mut orders_ok = true;
    let mut orders = Vec::new();
    for method in [Method::Magnus4, Method::Midpoint] {
        let run = |h: f64| {
            let cfg = EvolutionConfig {
                step_s: h,
                method,
                phase_per_substep: 1e9,
                drive_model: DriveModel::Full,
                ..Default::default()
            };
            dynamics::propagate_unitary(&system, &ccr, &cfg)
        };
        let steps = [20e-12, 10e-12, 5e-12];
        let reference = run(steps[2] / 8.0)?;
        let mut errs = Vec::new();
        for h in steps {
            let u = run(h)?;
            worst_unitarity = worst_unitarity.max(linalg::unitarity_error(&u));
            errs.push((u - &reference).norm());
        }
        let observed: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let nominal = method.order() as f64;
        orders_ok &= observed.iter().all(|o| (o - nominal).abs() < 0.3);
        orders.push(format!("{method:?} {:.2}/{:.2} (nominal {nominal})", observed[0], observed[1]));
    }
    Ok(Outcome::new(
        worst_unitarity < 1e-8 && drift < 1e-7 && orders_ok,
        format!("max unitarity error {worst_unitarity:.1e}, trace drift over 100 us {drift:.1e}, step-halving order {}", orders.join(", ")),
    ))
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Result<Outcome>);

fn main() {
    let secs = Duration::from_secs;
    let criteria: [Criterion; 10] = [
        (1, "parameter derivation", Some(secs(1)), criterion_1),
        (2, "spectrum consistency", Some(secs(1)), criterion_2),
        (3, "driven CCR gate", Some(secs(60)), criterion_3),
        (4, "simultaneous-tone construction", Some(secs(120)), criterion_4),
        (5, "Raman physics", Some(secs(120)), criterion_5),
        (6, "tomography pipeline", Some(secs(300)), criterion_6),
        (7, "calibration loops", Some(secs(300)), criterion_7),
        (8, "qudit dynamical decoupling", Some(secs(600)), criterion_8),
        (9, "Hamiltonian-synthesis coverage", Some(secs(180)), criterion_9),
        (10, "numerical hygiene", None, criterion_10),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let out = timed(limit, f);
        println!("criterion {n:>2} {}: {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
