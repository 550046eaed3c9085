//! Experiment configuration: one TOML file with dotted keys, or the same
//! schema as JSON. Every section is optional; defaults reproduce the
//! measured device.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trimon_core::circuit::{self, CircuitSpec, ModeParams};
use trimon_core::dynamics::{DriveModel, Method};
use trimon_core::gates::{self, parse_condition};
use trimon_core::measurement::{ConfusionMatrix, ReadoutModel};
use trimon_core::*;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DeriveParams,
    Spectrum,
    Simulate,
    Calibrate,
    Rb,
    Qst,
    Qpt,
    Dd,
    PauliSynth,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::DeriveParams => "derive-params",
            Experiment::Spectrum => "spectrum",
            Experiment::Simulate => "simulate",
            Experiment::Calibrate => "calibrate",
            Experiment::Rb => "rb",
            Experiment::Qst => "qst",
            Experiment::Qpt => "qpt",
            Experiment::Dd => "dd",
            Experiment::PauliSynth => "pauli-synth",
        }
    }

    /// Experiments that draw random numbers and therefore need an explicit seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Experiment::Rb | Experiment::Qst | Experiment::Dd)
    }

    pub fn needs_gate(self) -> bool {
        matches!(self, Experiment::Calibrate | Experiment::Qpt)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    pub capacitance: Option<CapacitanceSection>,
    pub junction: Option<JunctionSection>,
    pub device: DeviceSection,
    pub noise: NoiseSection,
    pub readout: ReadoutSection,
    pub evolution: EvolutionSection,
    pub gate: Option<GateSection>,
    pub simulate: SimulateSection,
    pub calibrate: CalibrateSection,
    pub rb: RbSection,
    pub qst: QstSection,
    pub qpt: QptSection,
    pub dd: DdSection,
    pub synth: SynthSection,
}

/// Capacitances in fF keyed by node pair (`"01"`) or node (`"0"`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacitanceSection {
    pub pairwise: BTreeMap<String, f64>,
    pub ground: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JosephsonEnergy {
    Uniform(f64),
    PerPair(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSection {
    pub ej_ghz: JosephsonEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DevicePreset {
    /// Measured frequencies and couplings of the reference device.
    Measured,
    /// Coefficients derived from the configured circuit.
    Circuit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceSection {
    pub preset: DevicePreset,
    pub omega_ghz: Option<[f64; 3]>,
    /// `2J_μ` per mode (MHz).
    pub anharmonicity_mhz: Option<[f64; 3]>,
    /// `2J_μν` for AB, BC, CA (MHz).
    pub cross_kerr_mhz: Option<[f64; 3]>,
    pub levels: usize,
    pub couplings: [f64; 3],
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection {
            preset: DevicePreset::Measured,
            omega_ghz: None,
            anharmonicity_mhz: None,
            cross_kerr_mhz: None,
            levels: 2,
            couplings: [1.0; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePreset {
    None,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub preset: NoisePreset,
    pub t1_us: Option<[f64; 3]>,
    pub t2_us: Option<[f64; 3]>,
    pub quasi_static_khz: Option<[f64; 3]>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { preset: NoisePreset::None, t1_us: None, t2_us: None, quasi_static_khz: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutKind {
    Ideal,
    Symmetric,
    Structured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSection {
    pub model: ReadoutKind,
    /// Total assignment error of the symmetric model.
    pub error: f64,
    /// Within- and cross-excitation-number errors of the structured model.
    pub within: f64,
    pub cross: f64,
    pub shots: u64,
    pub middle_discard: f64,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        ReadoutSection {
            model: ReadoutKind::Structured,
            error: 0.05,
            within: 0.05,
            cross: 0.02,
            shots: 40_000,
            middle_discard: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub step_ns: f64,
    pub method: Method,
    pub frame: Frame,
    pub drive_model: DriveModel,
    pub tolerance: f64,
    pub verify_step: bool,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        let d = EvolutionConfig::default();
        EvolutionSection {
            step_ns: d.step_s * 1e9,
            method: d.method,
            frame: d.frame,
            drive_model: d.drive_model,
            tolerance: d.tolerance,
            verify_step: d.verify_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSection {
    pub kind: GateKind,
    pub target: String,
    /// Spectator occupations in the order of the target's spectators, e.g. `"0_0"` or `"x_1"`.
    pub condition: String,
    pub theta_pi_units: f64,
    pub phi_pi_units: f64,
    pub duration_ns: Option<f64>,
    pub raman_detuning_mhz: Option<f64>,
    pub shape: Shape,
    pub drag: f64,
}

impl Default for GateSection {
    fn default() -> Self {
        GateSection {
            kind: GateKind::Ccr,
            target: "B".into(),
            condition: "0_0".into(),
            theta_pi_units: 0.5,
            phi_pi_units: 0.0,
            duration_ns: None,
            raman_detuning_mhz: None,
            shape: Shape::Cosine,
            drag: 0.0,
        }
    }
}

/// A tone given directly, in the schedule serialization units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneSection {
    pub carrier_ghz: f64,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default)]
    pub start_ns: f64,
    pub duration_ns: f64,
    pub amplitude_mhz: f64,
    #[serde(default = "cosine")]
    pub shape: Shape,
    #[serde(default)]
    pub drag: f64,
}

fn cosine() -> Shape {
    Shape::Cosine
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub initial: String,
    /// Explicit tones; when empty the configured gate is compiled.
    pub tones: Vec<ToneSection>,
    pub samples: usize,
    /// Apply the configured noise with a Lindblad run.
    pub lindblad: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection { initial: "000".into(), tones: Vec::new(), samples: 61, lindblad: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    Stark,
    Db,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub method: CalibrationMethod,
    pub max_iters: usize,
    pub repetitions: usize,
    /// Relative amplitude and absolute detuning errors injected into the start point.
    pub inject_amplitude: f64,
    pub inject_detuning_khz: f64,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        let d = gates::DbOptions::default();
        CalibrateSection {
            method: CalibrationMethod::Db,
            max_iters: d.max_iters,
            repetitions: d.repetitions,
            inject_amplitude: 0.0,
            inject_detuning_khz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbSection {
    pub transition: String,
    pub lengths: Vec<usize>,
    pub n_random: usize,
    pub duration_ns: f64,
    pub depolarizing: Option<f64>,
    pub calibrate: bool,
}

impl Default for RbSection {
    fn default() -> Self {
        let d = gates::RbOptions::default();
        RbSection {
            transition: d.transition.to_string(),
            lengths: d.lengths,
            n_random: d.n_random,
            duration_ns: d.duration_s * 1e9,
            depolarizing: d.depolarizing,
            calibrate: d.calibrate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QstSection {
    /// `bell0`..`bell3`, a two-qubit label such as `"01"`, or `"gate"` to
    /// apply the configured gate to `initial` and keep A, B.
    pub states: Vec<String>,
    pub initial: String,
    pub spam_correct: bool,
}

impl Default for QstSection {
    fn default() -> Self {
        QstSection {
            states: vec!["bell0".into(), "bell1".into(), "bell2".into(), "bell3".into()],
            initial: "000".into(),
            spam_correct: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QptSection {
    /// Readout confusion on the simulated runs; off gives ideal readout.
    pub confusion: bool,
    /// Binomial shots per setting; absent gives exact probabilities.
    pub shots: Option<u64>,
    pub spam_correct: bool,
}

impl Default for QptSection {
    fn default() -> Self {
        QptSection { confusion: true, shots: None, spam_correct: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdSection {
    pub d: usize,
    pub ordering: Option<Vec<String>>,
    pub repetitions: Vec<usize>,
    pub times_us: Vec<f64>,
    /// Quasi-static width; absent solves for `free_decay_us`.
    pub sigma_khz: Option<f64>,
    pub free_decay_us: f64,
    pub draws: usize,
    pub pulse_duration_ns: f64,
}

impl Default for DdSection {
    fn default() -> Self {
        let d = gates::qudit::DdOptions::new(3);
        DdSection {
            d: 3,
            ordering: None,
            repetitions: d.repetitions,
            times_us: d.times.iter().map(|t| t * 1e6).collect(),
            sigma_khz: None,
            free_decay_us: d.free_decay_s * 1e6,
            draws: d.draws,
            pulse_duration_ns: d.pulse_duration_s * 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// Pauli products or signed sums (`"XX"`, `"XY-YX"`); `["all"]` for all 16 products.
    pub terms: Vec<String>,
    pub strength_mhz: f64,
    pub duration_ns: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            terms: vec!["all".into()],
            strength_mhz: 0.5,
            duration_ns: gates::synthesis::SYNTHESIS_DURATION_S * 1e9,
        }
    }
}

impl Config {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Config(format!("{}: not valid UTF-8", path.display())))?;
        let cfg = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        Ok((cfg, bytes))
    }

    pub fn circuit_spec(&self) -> Result<CircuitSpec, CliError> {
        let (Some(cap), Some(junction)) = (&self.capacitance, &self.junction) else {
            if self.capacitance.is_some() || self.junction.is_some() {
                return Err(CliError::Config("capacitance and junction must be given together".into()));
            }
            return Ok(CircuitSpec::planar_reference());
        };
        let ff = 1e-15;
        let mut pair = [[0.0; 4]; 4];
        for (key, &v) in &cap.pairwise {
            let (i, j) = node_pair(key, "capacitance.pairwise")?;
            pair[i][j] = v * ff;
        }
        let mut ground = [0.0; 4];
        for (key, &v) in &cap.ground {
            let i = node(key, "capacitance.ground")?;
            ground[i] = v * ff;
        }
        let spec = match &junction.ej_ghz {
            JosephsonEnergy::Uniform(ej) => CircuitSpec::with_uniform_junctions(pair, ground, ej * 1e9),
            JosephsonEnergy::PerPair(map) => {
                let mut ej = [[0.0; 4]; 4];
                for (key, &v) in map {
                    let (i, j) = node_pair(key, "junction.ej_ghz")?;
                    ej[i][j] = v * 1e9;
                }
                CircuitSpec::new(pair, ground, ej)
            }
        };
        spec.map_err(|e| CliError::Config(format!("circuit: {e}")))
    }

    pub fn mode_params(&self) -> Result<ModeParams, CliError> {
        let d = &self.device;
        let base = match d.preset {
            DevicePreset::Measured => ModeParams::measured_device(),
            DevicePreset::Circuit => circuit::mode_params(&self.circuit_spec()?),
        };
        let mut p = base;
        if let Some(w) = d.omega_ghz {
            p.omega = w.map(|v| v * 1e9);
        }
        if let Some(a) = d.anharmonicity_mhz {
            p.self_kerr = a.map(|v| v * 1e6 / 2.0);
        }
        if let Some(x) = d.cross_kerr_mhz {
            p.cross_kerr = x.map(|v| v * 1e6 / 2.0);
        }
        Ok(p)
    }

    pub fn space(&self) -> Result<SpaceSpec, CliError> {
        SpaceSpec::uniform(self.device.levels).map_err(|e| CliError::Config(format!("device.levels: {e}")))
    }

    pub fn noise(&self) -> NoiseChannels {
        let n = &self.noise;
        let mut out = match n.preset {
            NoisePreset::None => NoiseChannels::none(),
            NoisePreset::Measured => NoiseChannels::measured_device(),
        };
        if let Some(t1) = n.t1_us {
            out.t1 = t1.map(|v| Some(v * 1e-6));
        }
        if let Some(t2) = n.t2_us {
            out.t2 = t2.map(|v| Some(v * 1e-6));
        }
        if let Some(s) = n.quasi_static_khz {
            out.quasi_static_sigma = s.map(|v| v * 1e3);
        }
        out
    }

    pub fn evolution(&self) -> EvolutionConfig {
        let e = &self.evolution;
        EvolutionConfig {
            step_s: e.step_ns * 1e-9,
            method: e.method,
            frame: e.frame,
            drive_model: e.drive_model,
            tolerance: e.tolerance,
            verify_step: e.verify_step,
            couplings: self.device.couplings,
            ..EvolutionConfig::default()
        }
    }

    pub fn readout(&self) -> Result<ReadoutModel, CliError> {
        let r = &self.readout;
        let assignment = match r.model {
            ReadoutKind::Ideal => Ok(ConfusionMatrix::identity(4)),
            ReadoutKind::Symmetric => ConfusionMatrix::symmetric(4, r.error),
            ReadoutKind::Structured => ConfusionMatrix::excitation_structured(r.within, r.cross),
        }
        .map_err(|e| CliError::Config(format!("readout: {e}")))?;
        let model = ReadoutModel { assignment, shots: r.shots, middle_discard: r.middle_discard };
        model.validate().map_err(|e| CliError::Config(format!("readout: {e}")))?;
        Ok(model)
    }

    pub fn gate(&self) -> Result<GateSpec, CliError> {
        let g = self.gate.as_ref().ok_or_else(|| CliError::Config("missing [gate] section".into()))?;
        let ctx = |e: Error| CliError::Config(format!("gate: {e}"));
        let target: Mode = g.target.parse().map_err(ctx)?;
        let condition = parse_condition(&g.condition).map_err(ctx)?;
        let theta = g.theta_pi_units * std::f64::consts::PI;
        let phi = g.phi_pi_units * std::f64::consts::PI;
        let mut spec = match g.kind {
            GateKind::RamanIswap => {
                GateSpec::raman_iswap(theta, phi, g.raman_detuning_mhz.map_or(gates::ISWAP_DETUNING_HZ, |v| v * 1e6))
            }
            GateKind::RamanBswap => {
                GateSpec::raman_bswap(theta, phi, g.raman_detuning_mhz.map_or(gates::BSWAP_DETUNING_HZ, |v| v * 1e6))
            }
            GateKind::VirtualDiagonal => {
                return Err(CliError::Config("gate: virtual diagonal gates are not configurable here".into()))
            }
            kind => {
                let mut s = GateSpec::r(target, theta, phi);
                s.kind = kind;
                s.condition = condition;
                s
            }
        };
        if let Some(d) = g.duration_ns {
            spec.duration = d * 1e-9;
        }
        spec = spec.with_shape(g.shape, g.drag);
        spec.validate().map_err(ctx)?;
        Ok(spec)
    }

    pub fn simulator(&self) -> Result<GateSimulator, CliError> {
        Ok(GateSimulator::with_space(self.mode_params()?, self.space()?)
            .with_config(self.evolution())
            .with_noise(self.noise()))
    }

    /// Explicit tones of `[simulate]` as a schedule.
    pub fn explicit_schedule(&self) -> Result<Option<Schedule>, CliError> {
        if self.simulate.tones.is_empty() {
            return Ok(None);
        }
        let freqs = circuit::conditional_frequencies(&self.mode_params()?);
        let mut tones = Vec::new();
        let mut end: f64 = 0.0;
        for (k, t) in self.simulate.tones.iter().enumerate() {
            let env = Envelope::new(t.shape, t.amplitude_mhz * 1e6, t.duration_ns * 1e-9, t.drag)
                .map_err(|e| CliError::Config(format!("simulate.tones[{k}]: {e}")))?;
            let carrier = t.carrier_ghz * 1e9;
            // A free tone is taken to address its nearest transition.
            let nearest = freqs.iter().min_by(|a, b| (a.1 - carrier).abs().total_cmp(&(b.1 - carrier).abs()));
            let mut tone = Tone::new(carrier, t.phase_rad, env, t.start_ns * 1e-9);
            if let Some((&tr, _)) = nearest {
                tone = tone.targeting(tr);
            }
            end = end.max(tone.end_s());
            tones.push(tone);
        }
        Schedule::new(tones, Vec::new(), end).map(Some).map_err(|e| CliError::Config(format!("simulate.tones: {e}")))
    }
}

fn node(key: &str, section: &str) -> Result<usize, CliError> {
    match key.parse::<usize>() {
        Ok(i) if i < 4 => Ok(i),
        _ => Err(CliError::Config(format!("{section}: `{key}` is not a node index 0-3"))),
    }
}

fn node_pair(key: &str, section: &str) -> Result<(usize, usize), CliError> {
    let digits: Vec<usize> = key.chars().filter_map(|c| c.to_digit(10).map(|d| d as usize)).collect();
    match digits.as_slice() {
        [i, j] if i < j && *j < 4 && key.len() == 2 => Ok((*i, *j)),
        _ => Err(CliError::Config(format!("{section}: `{key}` is not an ordered node pair such as \"01\""))),
    }
}
