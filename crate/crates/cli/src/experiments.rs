//! The named experiments. Each writes a `result.json` that contains no
//! timings, so identical configs and seeds give identical bytes, plus tidy
//! CSV tables for plotting.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use trimon_core::circuit::{self, build_maxwell, effective_charging_energies, normal_modes};
use trimon_core::dynamics::{lindblad_trajectory, propagate_trajectory};
use trimon_core::gates::qudit::{run_dd, DdOptions};
use trimon_core::gates::synthesis::{coefficient_rank, synthesize_pauli_term, PauliTerm};
use trimon_core::gates::{
    calibrate_db, calibrate_stark, channel_ab, gate_fidelity, gate_fidelity_ab, ideal_unitary, ideal_unitary_ab,
    run_rb, spectator_deviation, CalibrationStore, DbOptions, RbOptions,
};
use trimon_core::linalg::{self, CMat};
use trimon_core::tomography::{
    self, bell_states, concurrence, qpt, qst_mle, state_fidelity, superop_to_chi, ChiMatrix, QptNoise, QptRuns,
    QstData, QstOptions,
};
use trimon_core::*;

use crate::config::{CalibrationMethod, Config, Experiment};
use crate::error::CliError;

/// Collects the files an experiment writes so the manifest can list them.
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), files: Vec::new() }
    }

    fn record(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let path = self.record(name);
        let text = serde_json::to_string_pretty(value).expect("json value serialises");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, header: &[String], rows: &[R]) -> Result<(), CliError> {
        let path = self.record(name);
        let io = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }
}

fn headers(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn ghz(v: [f64; 3]) -> [f64; 3] {
    v.map(|x| x * 1e-9)
}

fn require_seed(experiment: Experiment, seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| {
        CliError::Config(format!("{} draws random numbers; give `seed` in the config or --seed", experiment.name()))
    })
}

pub fn run(experiment: Experiment, cfg: &Config, seed: Option<u64>, out: &mut Outputs) -> Result<(), CliError> {
    match experiment {
        Experiment::DeriveParams => derive_params(cfg, out),
        Experiment::Spectrum => spectrum(cfg, out),
        Experiment::Simulate => simulate(cfg, out),
        Experiment::Calibrate => calibrate(cfg, out),
        Experiment::Rb => rb(cfg, require_seed(experiment, seed)?, out),
        Experiment::Qst => qst(cfg, require_seed(experiment, seed)?, out),
        Experiment::Qpt => {
            let seed = if cfg.qpt.shots.is_some() { require_seed(experiment, seed)? } else { seed.unwrap_or(0) };
            qpt_experiment(cfg, seed, out)
        }
        Experiment::Dd => dd(cfg, require_seed(experiment, seed)?, out),
        Experiment::PauliSynth => pauli_synth(cfg, out),
    }
}

fn derive_params(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let spec = cfg.circuit_spec()?;
    let modes = normal_modes(&build_maxwell(&spec)?)?;
    let charging = effective_charging_energies(&spec);
    let p = circuit::mode_params(&spec);
    let mut warnings: Vec<Value> = modes.warnings.iter().map(|w| json!(w)).collect();
    warnings.extend(charging.warnings.iter().map(|w| json!(w)));
    out.json(
        "result.json",
        &json!({
            "experiment": "derive-params",
            "omega_ghz": ghz(p.omega),
            "anharmonicity_mhz": p.self_kerr.map(|j| 2.0 * j * 1e-6),
            "cross_kerr_mhz": p.cross_kerr.map(|j| 2.0 * j * 1e-6),
            "charging_ghz": ghz(p.charging),
            "josephson_ghz": p.josephson * 1e-9,
            "harmonic_modes_ghz": ghz(modes.dynamical()),
            "warnings": warnings,
        }),
    )?;
    out.json("params.json", &p.to_json())
}

#[derive(Serialize)]
struct SpectrumRow {
    transition: String,
    lower: String,
    upper: String,
    frequency_ghz: f64,
    nearest: String,
    separation_mhz: f64,
}

/// Transitions closer than this are reported as near-collisions.
const NEAR_COLLISION_HZ: f64 = 40e6;

fn spectrum(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let p = cfg.mode_params()?;
    let freqs = circuit::conditional_frequencies(&p);
    let list: Vec<(Transition, f64)> = freqs.into_iter().collect();
    let mut rows = Vec::new();
    let mut near = Vec::new();
    for (i, &(t, f)) in list.iter().enumerate() {
        let (j, sep) = list
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, &(_, g))| (j, (g - f).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("twelve transitions");
        rows.push(SpectrumRow {
            transition: t.to_string(),
            lower: t.lower().to_string(),
            upper: t.upper().to_string(),
            frequency_ghz: f * 1e-9,
            nearest: list[j].0.to_string(),
            separation_mhz: sep * 1e-6,
        });
        for &(u, g) in &list[i + 1..] {
            if (g - f).abs() < NEAR_COLLISION_HZ {
                near.push(json!({ "pair": [t.to_string(), u.to_string()], "separation_mhz": (g - f).abs() * 1e-6 }));
            }
        }
    }
    let splitting = |m: Mode, a: Mode| 2.0 * p.cross(m, a) * 1e-6;
    out.json(
        "result.json",
        &json!({
            "experiment": "spectrum",
            "omega_ghz": ghz(p.omega),
            "transitions_ghz": rows.iter().map(|r| (r.transition.clone(), json!(r.frequency_ghz))).collect::<serde_json::Map<_, _>>(),
            "splittings_mhz": { "AB": splitting(Mode::A, Mode::B), "BC": splitting(Mode::B, Mode::C), "CA": splitting(Mode::C, Mode::A) },
            "near_collisions": near,
        }),
    )?;
    out.csv(
        "spectrum.csv",
        &headers(&["transition", "lower", "upper", "frequency_ghz", "nearest", "separation_mhz"]),
        &rows,
    )
}

fn simulate(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let sim = cfg.simulator()?;
    let gate = match cfg.explicit_schedule()? {
        Some(_) => None,
        None => Some(cfg.gate()?),
    };
    let (schedule, cal) = match &gate {
        None => (cfg.explicit_schedule()?.expect("explicit tones"), None),
        Some(g) => {
            let cal = calibrate_stark(&sim, g, None)?;
            (sim.compile(g, Some(&cal))?, Some(cal))
        }
    };
    let space = sim.system.space;
    let initial: BasisLabel = cfg.simulate.initial.parse()?;
    let psi = space.basis_vector(initial)?;
    let n = cfg.simulate.samples.max(2);
    let t_end = schedule.total_duration_s;
    let times: Vec<f64> = (0..n).map(|k| t_end * k as f64 / (n - 1) as f64).collect();
    let populations: Vec<Vec<f64>> = if cfg.simulate.lindblad {
        let rho0 = QuantumState::pure(psi)?;
        lindblad_trajectory(&sim.system, &schedule, &sim.noise, &sim.config, &rho0, &times)?
            .iter()
            .map(|rho| (0..space.dim()).map(|i| rho[(i, i)].re).collect())
            .collect()
    } else {
        propagate_trajectory(&sim.system, &schedule, &sim.config, &times)?
            .iter()
            .map(|u| (u * &psi).iter().map(|z| z.norm_sqr()).collect())
            .collect()
    };
    let labels: Vec<String> = space.labels().map(|l| l.to_string()).collect();
    let mut header = vec!["time_ns".to_string()];
    header.extend(labels.iter().map(|l| format!("p_{l}")));
    let rows: Vec<Vec<f64>> =
        times.iter().zip(&populations).map(|(t, p)| std::iter::once(t * 1e9).chain(p.iter().copied()).collect()).collect();
    let last = populations.last().expect("two samples");
    let final_pops: serde_json::Map<String, Value> =
        labels.iter().zip(last).filter(|(_, &p)| p > 1e-9).map(|(l, &p)| (l.clone(), json!(p))).collect();
    let mut result = json!({
        "experiment": "simulate",
        "initial": initial.to_string(),
        "duration_ns": t_end * 1e9,
        "lindblad": cfg.simulate.lindblad,
        "final_populations": final_pops,
    });
    if let (Some(g), Some(cal)) = (&gate, &cal) {
        let u = sim.unitary(g, Some(cal))?;
        result["gate"] = json!(g.signature());
        result["gate_fidelity"] = json!(gate_fidelity(g, &u)?);
        result["leakage"] = json!(u.leakage);
        result["stark_phases"] = cal.stark.to_json();
    }
    out.json("result.json", &result)?;
    out.json("schedule.json", &schedule.to_json())?;
    out.csv("populations.csv", &header, &rows)
}

fn fidelities(g: &GateSpec, u: &dynamics::GateUnitary) -> Result<Value, CliError> {
    let ab = matches!(g.kind, GateKind::RamanIswap | GateKind::RamanBswap);
    Ok(json!({
        "fidelity": gate_fidelity(g, u)?,
        "fidelity_ab": if ab { json!(gate_fidelity_ab(g, u)?) } else { Value::Null },
        "spectator_deviation": spectator_deviation(g, &u.unitary),
        "leakage": u.leakage,
    }))
}

#[derive(Serialize)]
struct TraceRow {
    trace: usize,
    sequence: String,
    initial: String,
    projector: String,
    repetitions: usize,
    probability: f64,
    ideal: f64,
}

fn calibrate(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let sim = cfg.simulator()?;
    let gate = cfg.gate()?;
    let c = &cfg.calibrate;
    let start = if c.inject_amplitude != 0.0 || c.inject_detuning_khz != 0.0 {
        let mut r = calibrate_stark(&sim, &gate, None)?;
        r.amplitudes.iter_mut().for_each(|a| *a *= 1.0 + c.inject_amplitude);
        r.detunings.iter_mut().for_each(|d| *d += c.inject_detuning_khz * 1e3);
        Some(calibrate_stark(&sim, &gate, Some(&r))?)
    } else {
        None
    };
    let before = sim.unitary(&gate, start.as_ref())?;
    let mut result = json!({
        "experiment": "calibrate",
        "gate": gate.signature(),
        "method": c.method,
        "before": fidelities(&gate, &before)?,
    });
    let record = match c.method {
        CalibrationMethod::Stark => calibrate_stark(&sim, &gate, start.as_ref())?,
        CalibrationMethod::Db => {
            let opts = DbOptions { max_iters: c.max_iters, repetitions: c.repetitions, ..DbOptions::default() };
            let report = calibrate_db(&sim, &gate, start.as_ref(), &opts)?;
            result["iterations"] = json!(report.iterations);
            result["residual_history"] = json!(report.residual_history);
            let rows: Vec<TraceRow> = report
                .traces
                .iter()
                .enumerate()
                .flat_map(|(k, t)| {
                    t.probability.iter().zip(&t.ideal).enumerate().map(move |(m, (&p, &i))| TraceRow {
                        trace: k,
                        sequence: t.sequence.clone(),
                        initial: t.initial.clone(),
                        projector: t.projector.clone(),
                        repetitions: m + 1,
                        probability: p,
                        ideal: i,
                    })
                })
                .collect();
            out.csv(
                "db_traces.csv",
                &headers(&["trace", "sequence", "initial", "projector", "repetitions", "probability", "ideal"]),
                &rows,
            )?;
            report.record
        }
    };
    let after = sim.unitary(&gate, Some(&record))?;
    result["after"] = fidelities(&gate, &after)?;
    result["residual_oscillation"] = json!(record.residual_oscillation);
    result["amplitudes_mhz"] = json!(record.amplitudes.iter().map(|a| a * 1e-6).collect::<Vec<_>>());
    result["detunings_khz"] = json!(record.detunings.iter().map(|d| d * 1e-3).collect::<Vec<_>>());
    let mut store = CalibrationStore::default();
    store.insert(record);
    out.json("result.json", &result)?;
    out.json("calibration.json", &store.to_json())
}

fn rb(cfg: &Config, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let sim = cfg.simulator()?;
    let r = &cfg.rb;
    let opts = RbOptions {
        transition: r.transition.parse()?,
        lengths: r.lengths.clone(),
        n_random: r.n_random,
        seed,
        duration_s: r.duration_ns * 1e-9,
        depolarizing: r.depolarizing,
        calibrate: r.calibrate,
    };
    let res = run_rb(&sim, &opts)?;
    let rows: Vec<(usize, f64)> = res.lengths.iter().copied().zip(res.mean_survival.iter().copied()).collect();
    out.json(
        "result.json",
        &json!({
            "experiment": "rb",
            "transition": opts.transition.to_string(),
            "seed": seed,
            "p": res.p,
            "a": res.a,
            "b": res.b,
            "clifford_fidelity": res.clifford_fidelity,
            "gate_fidelity": res.gate_fidelity,
            "generators_per_clifford": res.generators_per_clifford,
        }),
    )?;
    out.csv("survival.csv", &headers(&["length", "mean_survival"]), &rows)
}

fn complex_rows(m: &CMat) -> Value {
    json!({
        "re": (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)].re).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "im": (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)].im).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

/// The prepared A, B state of a QST entry and its ideal counterpart.
fn qst_state(cfg: &Config, name: &str) -> Result<(QuantumState, CMat), CliError> {
    let lower = name.to_ascii_lowercase();
    if let Some(k) = lower.strip_prefix("bell") {
        let k: usize = k.parse().ok().filter(|&k| k < 4).ok_or_else(|| CliError::Config(format!("qst: unknown state `{name}`")))?;
        let v = bell_states()[k].clone();
        let rho = &v * v.adjoint();
        return Ok((QuantumState::pure(v)?, rho));
    }
    if lower == "gate" {
        let sim = cfg.simulator()?;
        let gate = cfg.gate()?;
        let cal = calibrate_stark(&sim, &gate, None)?;
        let u = sim.unitary(&gate, Some(&cal))?.unitary;
        let initial: BasisLabel = cfg.qst.initial.parse()?;
        let k = initial
            .computational_index()
            .ok_or_else(|| CliError::Config(format!("qst.initial `{}` is not a computational state", cfg.qst.initial)))?;
        let mut e = DVector::zeros(8);
        e[k] = Complex64::new(1.0, 0.0);
        let actual = &u * &e;
        let ideal = ideal_unitary(&gate)? * &e;
        let rho = &actual * actual.adjoint();
        let rho = &rho / Complex64::new(rho.trace().re, 0.0);
        let state = QuantumState::mixed(rho)?;
        let ideal_state = QuantumState::pure(ideal)?;
        return Ok((state, measurement::two_qubit_rho(&ideal_state)?));
    }
    let bits: Vec<usize> = lower.chars().filter_map(|c| c.to_digit(2).map(|d| d as usize)).collect();
    match bits.as_slice() {
        [a, b] if lower.len() == 2 => {
            let mut v = DVector::zeros(4);
            v[2 * a + b] = Complex64::new(1.0, 0.0);
            let rho = &v * v.adjoint();
            Ok((QuantumState::pure(v)?, rho))
        }
        _ => Err(CliError::Config(format!("qst: unknown state `{name}`"))),
    }
}

#[derive(Serialize)]
struct QstRow {
    state: String,
    fidelity: f64,
    concurrence: f64,
    iterations: usize,
    residual: f64,
}

fn qst(cfg: &Config, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let model = cfg.readout()?;
    let mut rows = Vec::new();
    let mut estimates = serde_json::Map::new();
    for (k, name) in cfg.qst.states.iter().enumerate() {
        let (state, ideal) = qst_state(cfg, name)?;
        let s = seed.wrapping_add(100 * k as u64);
        let data = QstData::sampled(&state, &model, s)?;
        let confusion = cfg.qst.spam_correct.then_some(&model.assignment);
        let est = qst_mle(&data, confusion, &QstOptions { seed: s, ..QstOptions::default() })?;
        rows.push(QstRow {
            state: name.clone(),
            fidelity: state_fidelity(&est.rho, &ideal)?,
            concurrence: concurrence(&est.rho)?,
            iterations: est.iterations,
            residual: est.residual,
        });
        estimates.insert(name.clone(), complex_rows(&est.rho));
    }
    out.json(
        "result.json",
        &json!({
            "experiment": "qst",
            "seed": seed,
            "shots": model.shots,
            "spam_corrected": cfg.qst.spam_correct,
            "states": rows.iter().map(|r| json!({ "state": r.state, "fidelity": r.fidelity, "concurrence": r.concurrence })).collect::<Vec<_>>(),
            "rho": estimates,
        }),
    )?;
    out.csv("qst.csv", &headers(&["state", "fidelity", "concurrence", "iterations", "residual"]), &rows)
}

fn qpt_experiment(cfg: &Config, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let sim = cfg.simulator()?;
    let gate = cfg.gate()?;
    let cal = calibrate_stark(&sim, &gate, None)?;
    let channel = channel_ab(&sim.channel(&gate, Some(&cal))?, &sim.system.space)?;
    let ideal = ChiMatrix::from_unitary(&ideal_unitary_ab(&gate)?);
    let injected = ChiMatrix::new(superop_to_chi(&channel), false);
    let noise = QptNoise {
        confusion: if cfg.qpt.confusion { Some(cfg.readout()?.assignment) } else { None },
        shots: cfg.qpt.shots,
        ..QptNoise::default()
    };
    let runs = QptRuns::simulate(&channel, &noise, seed)?;
    let reference = if cfg.qpt.spam_correct { Some(QptRuns::simulate(&linalg::identity(16), &noise, seed.wrapping_add(1))?) } else { None };
    let result = qpt(&runs, reference.as_ref())?;
    let chi = result.best();
    let f_injected = tomography::gate_fidelity(&injected, &ideal, 4)?;
    let f_recovered = tomography::gate_fidelity(chi, &ideal, 4)?;
    let raw = tomography::gate_fidelity(&result.raw, &ideal, 4).ok();
    out.json(
        "result.json",
        &json!({
            "experiment": "qpt",
            "gate": gate.signature(),
            "seed": seed,
            "injected_fidelity": f_injected,
            "recovered_fidelity": f_recovered,
            "raw_fidelity": raw,
            "difference": f_recovered - f_injected,
            "spam_corrected": chi.spam_corrected,
            "min_eigenvalue": chi.min_eigenvalue,
            "chi": complex_rows(&chi.chi),
        }),
    )?;
    let rows: Vec<(usize, usize, f64, f64)> =
        (0..16).flat_map(|r| (0..16).map(move |c| (r, c))).map(|(r, c)| (r, c, chi.chi[(r, c)].re, chi.chi[(r, c)].im)).collect();
    out.csv("chi.csv", &headers(&["row", "col", "re", "im"]), &rows)
}

fn dd(cfg: &Config, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let d = &cfg.dd;
    let ordering = match &d.ordering {
        Some(list) => Some(list.iter().map(|s| s.parse()).collect::<Result<Vec<BasisLabel>>>()?),
        None => None,
    };
    let opts = DdOptions {
        d: d.d,
        ordering,
        repetitions: d.repetitions.clone(),
        times: d.times_us.iter().map(|t| t * 1e-6).collect(),
        sigma: d.sigma_khz.map(|s| s * 1e3),
        free_decay_s: d.free_decay_us * 1e-6,
        draws: d.draws,
        seed,
        markovian: cfg.noise(),
        pulse_duration_s: d.pulse_duration_ns * 1e-9,
    };
    let res = run_dd(&cfg.mode_params()?, &opts)?;
    let rows: Vec<(usize, f64, f64)> = res
        .curves
        .iter()
        .flat_map(|c| c.times.iter().zip(&c.fidelity).map(move |(&t, &f)| (c.repetitions, t * 1e6, f)))
        .collect();
    out.json(
        "result.json",
        &json!({
            "experiment": "dd",
            "d": res.d,
            "seed": seed,
            "ordering": res.ordering.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
            "sigma_khz": res.sigma * 1e-3,
            "curves": res.curves.iter().map(|c| json!({
                "repetitions": c.repetitions,
                "decay_time_us": c.decay_time.map(|t| t * 1e6),
            })).collect::<Vec<_>>(),
        }),
    )?;
    out.csv("dd.csv", &headers(&["repetitions", "time_us", "fidelity"]), &rows)
}

fn pauli_synth(cfg: &Config, out: &mut Outputs) -> Result<(), CliError> {
    let s = &cfg.synth;
    let terms: Vec<PauliTerm> = if s.terms.iter().any(|t| t.eq_ignore_ascii_case("all")) {
        PauliTerm::all_products()
    } else {
        s.terms.iter().map(|t| t.parse()).collect::<Result<_>>()?
    };
    let sim = cfg.simulator()?;
    let strength = s.strength_mhz * 1e6;
    let duration = s.duration_ns * 1e-9;
    let results: Vec<_> =
        terms.par_iter().map(|t| synthesize_pauli_term(&sim, t, strength, duration)).collect::<Result<Vec<_>>>()?;
    let traceless: Vec<[f64; 16]> =
        results.iter().filter(|r| r.term.coefficients[0] == 0.0).map(|r| r.effective).collect();
    let mut header = headers(&["term", "target_fraction"]);
    header.extend(PauliTerm::all_products().iter().map(|p| format!("h_{}", p.label)));
    let rows: Vec<(String, f64, Vec<f64>)> = results
        .iter()
        .map(|r| (r.term.label.clone(), r.target_fraction, r.effective.iter().map(|h| h * 1e-6).collect()))
        .collect();
    out.json(
        "result.json",
        &json!({
            "experiment": "pauli-synth",
            "strength_mhz": s.strength_mhz,
            "duration_ns": s.duration_ns,
            "terms": results.iter().map(|r| json!({ "term": r.term.label, "target_fraction": r.target_fraction })).collect::<Vec<_>>(),
            "min_target_fraction": results.iter().map(|r| r.target_fraction).fold(f64::INFINITY, f64::min),
            "traceless_rank": coefficient_rank(&traceless, 1e-3),
        }),
    )?;
    out.csv("synthesis.csv", &header, &rows)?;
    let schedules: serde_json::Map<String, Value> =
        results.iter().map(|r| (r.term.label.clone(), r.schedule.to_json())).collect();
    out.json("schedules.json", &Value::Object(schedules))
}
