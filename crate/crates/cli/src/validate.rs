//! Static checks of a configuration. Nothing is simulated; every problem
//! becomes a finding and the report is always produced.

use std::fmt;
use std::path::Path;

use serde::Serialize;
use trimon_core::gates::synthesis::PauliTerm;
use trimon_core::gates::{check_collisions, raman_amplitude};
use trimon_core::*;

use crate::config::{Config, Experiment};
use crate::error::CliError;

/// Raman schedules want the single-photon detuning well above the tone amplitude.
pub const RAMAN_DETUNING_RATIO: f64 = 3.0;
/// Minimum separation between tones and untargeted transitions.
pub const COLLISION_THRESHOLD_HZ: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    /// Short machine-readable kind, e.g. `schema` or `frequency_collision`.
    pub kind: String,
    pub section: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev} [{}] {}: {}", self.kind, self.section, self.message)
    }
}

#[derive(Debug, Default, Serialize)]
pub struct Report {
    pub config: String,
    pub findings: Vec<Finding>,
}

impl Report {
    fn push(&mut self, severity: Severity, kind: &str, section: &str, message: impl Into<String>) {
        self.findings.push(Finding { severity, kind: kind.into(), section: section.into(), message: message.into() });
    }

    fn error(&mut self, kind: &str, section: &str, message: impl Into<String>) {
        self.push(Severity::Error, kind, section, message);
    }

    fn from_result<T>(&mut self, section: &str, r: std::result::Result<T, CliError>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(CliError::Core(Error::FrequencyCollision(m))) => {
                self.error("frequency_collision", section, m);
                None
            }
            Err(e) => {
                self.error("schema", section, e.to_string());
                None
            }
        }
    }
}

pub fn validate_path(path: &Path, seed_override: Option<u64>) -> Report {
    let mut report = Report { config: path.display().to_string(), findings: Vec::new() };
    match Config::load(path) {
        Ok((cfg, _)) => check(&cfg, seed_override, &mut report),
        Err(e) => report.error("schema", "file", e.to_string()),
    }
    report
}

pub fn check(cfg: &Config, seed_override: Option<u64>, report: &mut Report) {
    if cfg.capacitance.is_some() || cfg.junction.is_some() {
        report.from_result("circuit", cfg.circuit_spec());
    }
    let params = report.from_result("device", cfg.mode_params());
    report.from_result("device", cfg.space());
    if let Some(p) = &params {
        if p.omega.iter().chain(&p.self_kerr).chain(&p.cross_kerr).any(|v| !(v.is_finite() && *v > 0.0)) {
            report.error("physical", "device", "frequencies, anharmonicities and cross-Kerr couplings must be positive");
        }
    }
    check_noise(cfg, report);
    report.from_result("readout", cfg.readout());
    if let Err(e) = cfg.evolution().validate() {
        report.error("schema", "evolution", e.to_string());
    }

    if let Some(exp) = cfg.experiment {
        if exp.needs_gate() && cfg.gate.is_none() {
            report.error("reference", "gate", format!("{} needs a [gate] section", exp.name()));
        }
        if exp == Experiment::Qst && cfg.qst.states.iter().any(|s| s.eq_ignore_ascii_case("gate")) && cfg.gate.is_none() {
            report.error("reference", "qst", "state `gate` needs a [gate] section");
        }
        let stochastic = exp.is_stochastic() || (exp == Experiment::Qpt && cfg.qpt.shots.is_some());
        if stochastic && cfg.seed.or(seed_override).is_none() {
            report.error("reference", "seed", format!("{} draws random numbers and needs an explicit seed", exp.name()));
        }
        if exp == Experiment::Simulate && cfg.simulate.tones.is_empty() && cfg.gate.is_none() {
            report.error("reference", "simulate", "give explicit tones or a [gate] section");
        }
    }

    if let Some(p) = &params {
        if cfg.gate.is_some() {
            check_gate(cfg, p, report);
        }
        if let Some(s) = report.from_result("simulate.tones", cfg.explicit_schedule()) {
            if let Some(s) = s {
                if let Err(e) = check_collisions(&s.tones, p, COLLISION_THRESHOLD_HZ) {
                    report.from_result::<()>("simulate.tones", Err(e.into()));
                }
            }
        }
    }
    if let Err(e) = cfg.simulate.initial.parse::<BasisLabel>() {
        report.error("schema", "simulate.initial", e.to_string());
    }
    check_sections(cfg, report);
}

fn check_noise(cfg: &Config, report: &mut Report) {
    // Covers T2 <= 2 T1, the bound that keeps pure dephasing non-negative.
    if let Err(e) = cfg.noise().validate() {
        report.error("physical", "noise", e.to_string());
    }
}

fn check_gate(cfg: &Config, params: &ModeParams, report: &mut Report) {
    let Some(gate) = report.from_result("gate", cfg.gate()) else { return };
    let compiled = gates::compile(
        &gate,
        params,
        None,
        &gates::CompileOptions { couplings: cfg.device.couplings, collision_threshold_hz: COLLISION_THRESHOLD_HZ },
    );
    if let Err(e) = compiled {
        report.from_result::<()>("gate", Err(e.into()));
    }
    if matches!(gate.kind, GateKind::RamanIswap | GateKind::RamanBswap) {
        let lam = cfg.device.couplings;
        let omega = raman_amplitude(gate.theta, gate.raman_detuning, gate.shape, gate.duration, lam[0] * lam[1]);
        if gate.raman_detuning.abs() < RAMAN_DETUNING_RATIO * omega {
            report.push(
                Severity::Warning,
                "raman_detuning",
                "gate",
                format!(
                    "|detuning| = {:.1} MHz is below {RAMAN_DETUNING_RATIO} x the tone amplitude {:.1} MHz; \
                     the intermediate state will be populated",
                    gate.raman_detuning.abs() * 1e-6,
                    omega * 1e-6
                ),
            );
        }
    }
}

fn check_sections(cfg: &Config, report: &mut Report) {
    if let Err(e) = cfg.rb.transition.parse::<Transition>() {
        report.error("schema", "rb.transition", e.to_string());
    }
    if cfg.rb.lengths.is_empty() || cfg.rb.lengths.contains(&0) {
        report.error("schema", "rb.lengths", "lengths must be non-empty and positive");
    }
    if let Some(eps) = cfg.rb.depolarizing {
        if !(0.0..=1.0).contains(&eps) {
            report.error("schema", "rb.depolarizing", "depolarizing strength must lie in [0, 1]");
        }
    }
    if !(2..=8).contains(&cfg.dd.d) {
        report.error("schema", "dd.d", "qudit dimension must lie in 2..=8");
    }
    if let Some(order) = &cfg.dd.ordering {
        for s in order {
            if let Err(e) = s.parse::<BasisLabel>() {
                report.error("schema", "dd.ordering", e.to_string());
            }
        }
        if order.len() != cfg.dd.d {
            report.error("schema", "dd.ordering", format!("ordering lists {} states for d = {}", order.len(), cfg.dd.d));
        }
    }
    if let Some(s) = cfg.dd.sigma_khz {
        if !(s >= 0.0 && s.is_finite()) {
            report.error("schema", "dd.sigma_khz", "sigma must be finite and >= 0");
        }
    }
    for name in &cfg.qst.states {
        let lower = name.to_ascii_lowercase();
        let ok = lower == "gate"
            || matches!(lower.strip_prefix("bell"), Some("0" | "1" | "2" | "3"))
            || (lower.len() == 2 && lower.chars().all(|c| c == '0' || c == '1'));
        if !ok {
            report.error("schema", "qst.states", format!("unknown state `{name}`"));
        }
    }
    for t in &cfg.synth.terms {
        if !t.eq_ignore_ascii_case("all") {
            if let Err(e) = t.parse::<PauliTerm>() {
                report.error("schema", "synth.terms", e.to_string());
            }
        }
    }
    if !(cfg.synth.strength_mhz > 0.0 && cfg.synth.duration_ns > 0.0) {
        report.error("schema", "synth", "strength and duration must be > 0");
    }
}
