//! Gate compilation, calibration, benchmarking, Hamiltonian-term synthesis
//! and qudit decoupling sequences.

pub mod calibration;
pub mod qudit;
pub mod raman;
pub mod rb;
pub mod synthesis;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::circuit::{self, ModeParams};
use crate::dynamics::{self, EvolutionConfig, GateUnitary, NoiseChannels, System};
use crate::error::{Error, Result};
use crate::hilbert::{Operator, SpaceSpec};
use crate::labels::{BasisLabel, Mode, Transition};
use crate::linalg::{self, CMat};
use crate::pulses::{self, Envelope, FrameLedger, FrameUpdate, Schedule, Shape, Tone};
use crate::Complex64;

pub use calibration::{calibrate_db, DbOptions, DbTrace};
pub use qudit::{dd_schedule, qudit_x, table_ordering, QuditDecomposition};
pub use raman::{raman_effective_rate, raman_stark_shift};
pub use rb::{run_rb, RbOptions, RbResult};
pub use synthesis::{synthesize_pauli_term, PauliTerm};

/// Default durations.
pub const CCR_DURATION_S: f64 = 60e-9;
pub const RB_DURATION_S: f64 = 40e-9;
pub const RAMAN_DURATION_S: f64 = 120e-9;
/// Default signed single-photon detunings of the Raman gates. The √iSWAP
/// tones sit below their transitions so the second path through |110⟩
/// adds to the exchange rate instead of cancelling part of it.
pub const ISWAP_DETUNING_HZ: f64 = -32e6;
pub const BSWAP_DETUNING_HZ: f64 = 30e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    /// Rotation conditioned on both spectators (one tone).
    Ccr,
    /// Rotation conditioned on one spectator (two simultaneous tones).
    Cr,
    /// Unconditional rotation (four simultaneous tones).
    R,
    RamanIswap,
    RamanBswap,
    VirtualDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub kind: GateKind,
    pub target: Mode,
    /// Spectator occupations in the order of `target.spectators()`; `None` is free.
    pub condition: [Option<u8>; 2],
    pub theta: f64,
    pub phi: f64,
    pub duration: f64,
    /// Raman single-photon detuning (Hz).
    pub raman_detuning: f64,
    pub shape: Shape,
    pub drag: f64,
    /// State phases of a virtual diagonal gate, computational order.
    pub diagonal: [f64; 8],
}

impl GateSpec {
    fn base(kind: GateKind, target: Mode, condition: [Option<u8>; 2], theta: f64, phi: f64) -> Self {
        GateSpec {
            kind,
            target,
            condition,
            theta,
            phi,
            duration: CCR_DURATION_S,
            raman_detuning: 0.0,
            shape: Shape::Cosine,
            drag: 0.0,
            diagonal: [0.0; 8],
        }
    }

    pub fn ccr(transition: Transition, theta: f64, phi: f64) -> Self {
        let [s0, s1] = transition.spectators;
        Self::base(GateKind::Ccr, transition.mode, [Some(s0), Some(s1)], theta, phi)
    }

    /// Rotation of `target` conditioned on `control` being in `value`.
    pub fn cr(target: Mode, control: Mode, value: u8, theta: f64, phi: f64) -> Result<Self> {
        let sp = target.spectators();
        let pos = sp.iter().position(|&m| m == control).ok_or_else(|| {
            Error::InvalidArgument(format!("control {control} must differ from target {target}"))
        })?;
        let mut cond = [None, None];
        cond[pos] = Some(value);
        Ok(Self::base(GateKind::Cr, target, cond, theta, phi))
    }

    pub fn r(target: Mode, theta: f64, phi: f64) -> Self {
        Self::base(GateKind::R, target, [None, None], theta, phi)
    }

    /// Partial swap in the `|01⟩, |10⟩` space of modes A and B (C in `|0⟩`).
    pub fn raman_iswap(theta: f64, phi: f64, detuning: f64) -> Self {
        let mut g = Self::base(GateKind::RamanIswap, Mode::A, [Some(0), Some(0)], theta, phi);
        g.duration = RAMAN_DURATION_S;
        g.raman_detuning = detuning;
        g
    }

    /// Partial swap in the `|00⟩, |11⟩` space of modes A and B (C in `|0⟩`).
    pub fn raman_bswap(theta: f64, phi: f64, detuning: f64) -> Self {
        let mut g = Self::base(GateKind::RamanBswap, Mode::A, [Some(0), Some(0)], theta, phi);
        g.duration = RAMAN_DURATION_S;
        g.raman_detuning = detuning;
        g
    }

    pub fn virtual_diagonal(phases: [f64; 8]) -> Self {
        let mut g = Self::base(GateKind::VirtualDiagonal, Mode::A, [None, None], 0.0, 0.0);
        g.duration = 0.0;
        g.diagonal = phases;
        g
    }

    /// Controlled-Z between modes A and B, unconditional on C.
    pub fn cz() -> Self {
        let mut p = [0.0; 8];
        for (k, lab) in BasisLabel::computational().enumerate() {
            if lab.get(Mode::A) == 1 && lab.get(Mode::B) == 1 {
                p[k] = PI;
            }
        }
        Self::virtual_diagonal(p)
    }

    pub fn ccz() -> Self {
        let mut p = [0.0; 8];
        p[7] = PI;
        Self::virtual_diagonal(p)
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_shape(mut self, shape: Shape, drag: f64) -> Self {
        self.shape = shape;
        self.drag = drag;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fixed = self.condition.iter().filter(|c| c.is_some()).count();
        let ok = match self.kind {
            GateKind::Ccr | GateKind::RamanIswap | GateKind::RamanBswap => fixed == 2,
            GateKind::Cr => fixed == 1,
            GateKind::R => fixed == 0,
            GateKind::VirtualDiagonal => true,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("{:?} gate has {fixed} fixed spectators", self.kind)));
        }
        if self.condition.iter().flatten().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("spectator conditions must be 0 or 1".into()));
        }
        if matches!(self.kind, GateKind::RamanIswap | GateKind::RamanBswap) {
            if self.raman_detuning == 0.0 {
                return Err(Error::ZeroDetuning);
            }
            if self.target != Mode::A || self.condition != [Some(0), Some(0)] {
                return Err(Error::InvalidArgument("Raman gates act on modes A and B with C in |0>".into()));
            }
        }
        if self.kind != GateKind::VirtualDiagonal && !(self.duration > 0.0) {
            return Err(Error::InvalidArgument("gate duration must be > 0".into()));
        }
        if !self.theta.is_finite() || !self.phi.is_finite() {
            return Err(Error::InvalidArgument("angles must be finite".into()));
        }
        Ok(())
    }

    /// The conditional transitions driven by a rotation gate, one per tone.
    pub fn rotation_transitions(&self) -> Vec<Transition> {
        let choices = |c: Option<u8>| match c {
            Some(v) => vec![v],
            None => vec![0, 1],
        };
        let mut out = Vec::new();
        for s0 in choices(self.condition[0]) {
            for s1 in choices(self.condition[1]) {
                out.push(Transition::new(self.target, [s0, s1]));
            }
        }
        out
    }

    /// Stable identifier used to key calibration records.
    pub fn signature(&self) -> String {
        let cond: Vec<String> = self
            .condition
            .iter()
            .map(|c| c.map(|v| v.to_string()).unwrap_or_else(|| "x".into()))
            .collect();
        match self.kind {
            GateKind::VirtualDiagonal => {
                let p: Vec<String> = self.diagonal.iter().map(|v| format!("{v:.6}")).collect();
                format!("virtual:{}", p.join(","))
            }
            _ => format!(
                "{:?}:{}:{}:theta={:.6}:phi={:.6}:dur={:.3}ns:delta={:.3}MHz:{:?}:drag={}",
                self.kind,
                self.target,
                cond.join("_"),
                self.theta,
                self.phi,
                self.duration * 1e9,
                self.raman_detuning * 1e-6,
                self.shape,
                self.drag
            )
            .to_lowercase(),
        }
    }
}

impl fmt::Display for GateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.signature())
    }
}

/// Parses a spectator condition such as `0_1`, `x_0` or `x_x`.
pub fn parse_condition(s: &str) -> Result<[Option<u8>; 2]> {
    let parts: Vec<&str> = s.trim().split(['_', ',']).collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!("condition `{s}` must have two fields")));
    }
    let mut out = [None, None];
    for (k, p) in parts.iter().enumerate() {
        out[k] = match p.trim() {
            "0" => Some(0),
            "1" => Some(1),
            "x" | "X" | "*" | "" => None,
            other => return Err(Error::InvalidArgument(format!("bad condition field `{other}`"))),
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub signature: String,
    /// Peak amplitude per tone (Hz).
    pub amplitudes: Vec<f64>,
    /// Detuning per tone (Hz).
    pub detunings: Vec<f64>,
    /// Post-gate virtual frame corrections.
    pub stark: FrameLedger,
    /// Residual deterministic-benchmarking oscillation amplitude.
    pub residual_oscillation: f64,
}

impl CalibrationRecord {
    pub fn stark_updates(&self, time_s: f64) -> Vec<FrameUpdate> {
        Transition::all()
            .into_iter()
            .filter(|t| pulses::wrapped_residual(self.stark.phase(*t)).abs() > 1e-15)
            .map(|t| FrameUpdate { time_s, transition: t, phase_rad: self.stark.phase(t) })
            .collect()
    }
}

/// Calibration records keyed by gate signature.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationStore {
    pub records: BTreeMap<String, CalibrationRecord>,
}

impl CalibrationStore {
    pub fn insert(&mut self, record: CalibrationRecord) {
        self.records.insert(record.signature.clone(), record);
    }

    pub fn get(&self, gate: &GateSpec) -> Option<&CalibrationRecord> {
        self.records.get(&gate.signature())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serialisable")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(v.clone()).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub couplings: [f64; 3],
    /// Minimum separation of a tone from other tones and untargeted transitions.
    pub collision_threshold_hz: f64,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { couplings: [1.0; 3], collision_threshold_hz: 1e6 }
    }
}

/// Two-level block of the computational space addressed by a gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    /// Computational indices of the block states.
    pub lower: usize,
    pub upper: usize,
    pub theta: f64,
    /// Axis of the ideal rotation `R(θ, φ)` in the (lower, upper) basis.
    pub phi: f64,
    pub knob: Knob,
}

/// Which tone parameters move a block's rotation angle and axis tilt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Knob {
    /// Amplitude and detuning of one tone.
    Tone(usize),
    /// Common amplitude of two tones and the detuning of the second.
    Raman(usize, usize),
}

fn comp_index(l: BasisLabel) -> usize {
    l.computational_index().expect("computational label")
}

/// Blocks of a gate, in tone order.
pub fn blocks(gate: &GateSpec) -> Vec<Block> {
    match gate.kind {
        GateKind::Ccr | GateKind::Cr | GateKind::R => gate
            .rotation_transitions()
            .into_iter()
            .enumerate()
            .map(|(k, t)| Block {
                lower: comp_index(t.lower()),
                upper: comp_index(t.upper()),
                theta: gate.theta,
                phi: gate.phi,
                knob: Knob::Tone(k),
            })
            .collect(),
        GateKind::RamanIswap => vec![Block {
            lower: comp_index(BasisLabel::new(0, 1, 0)),
            upper: comp_index(BasisLabel::new(1, 0, 0)),
            theta: gate.theta,
            phi: PI - gate.phi,
            knob: Knob::Raman(0, 1),
        }],
        GateKind::RamanBswap => vec![Block {
            lower: comp_index(BasisLabel::new(0, 0, 0)),
            upper: comp_index(BasisLabel::new(1, 1, 0)),
            theta: gate.theta,
            phi: PI - gate.phi,
            knob: Knob::Raman(0, 1),
        }],
        GateKind::VirtualDiagonal => Vec::new(),
    }
}

/// Ideal 8×8 unitary of a gate on the computational space.
pub fn ideal_unitary(gate: &GateSpec) -> Result<Operator> {
    gate.validate()?;
    if gate.kind == GateKind::VirtualDiagonal {
        return Ok(linalg::diag(&gate.diagonal.map(|p| Complex64::from_polar(1.0, p))));
    }
    let mut u = linalg::identity(8);
    for b in blocks(gate) {
        embed_block(&mut u, b.lower, b.upper, &linalg::rotation(b.theta, b.phi));
    }
    Ok(u)
}

/// Overwrites the (lower, upper) block of `u` with the 2×2 matrix `m`.
pub fn embed_block(u: &mut CMat, lower: usize, upper: usize, m: &CMat) {
    let idx = [lower, upper];
    for r in 0..2 {
        for c in 0..2 {
            u[(idx[r], idx[c])] = m[(r, c)];
        }
    }
}

pub fn extract_block(u: &CMat, lower: usize, upper: usize) -> CMat {
    let idx = [lower, upper];
    CMat::from_fn(2, 2, |r, c| u[(idx[r], idx[c])])
}

/// Transition frequency of a conditional transition under `params`.
pub fn frequency_of(params: &ModeParams, t: Transition) -> f64 {
    circuit::conditional_frequencies(params)[&t]
}

fn tone_amplitude(gate: &GateSpec, coupling: f64) -> f64 {
    pulses::amplitude_for_angle(gate.theta.abs(), gate.shape, gate.duration, coupling)
}

/// Peak amplitude of each Raman tone for a block rotation by `theta`.
pub fn raman_amplitude(theta: f64, detuning: f64, shape: Shape, duration: f64, coupling_product: f64) -> f64 {
    let unit_power = Envelope { shape, amplitude: 1.0, duration, drag: 0.0 }.power_area();
    (theta.abs() * detuning.abs() / (PI * coupling_product * unit_power)).sqrt()
}

/// Builds the tone list and frame updates for a gate.
pub fn compile(
    gate: &GateSpec,
    params: &ModeParams,
    cal: Option<&CalibrationRecord>,
    options: &CompileOptions,
) -> Result<Schedule> {
    gate.validate()?;
    let freqs = circuit::conditional_frequencies(params);
    let lam = options.couplings;
    let mut tones: Vec<Tone> = Vec::new();
    let mk_env = |amp: f64| Envelope::new(gate.shape, amp, gate.duration, gate.drag);
    // rotation by a negative angle is a positive rotation about the opposite axis
    let axis = if gate.theta < 0.0 { gate.phi + PI } else { gate.phi };
    match gate.kind {
        GateKind::VirtualDiagonal => {
            let updates = pulses::frame_updates_for(&gate.diagonal, 0.0);
            return Schedule::new(Vec::new(), updates, 0.0);
        }
        GateKind::Ccr | GateKind::Cr | GateKind::R => {
            for t in gate.rotation_transitions() {
                let amp = tone_amplitude(gate, lam[gate.target.index()]);
                tones.push(Tone::new(freqs[&t], -axis, mk_env(amp)?, 0.0).targeting(t));
            }
        }
        GateKind::RamanIswap => {
            let d = gate.raman_detuning;
            let t1: Transition = "A00".parse()?;
            let t2: Transition = "0B0".parse()?;
            let amp = raman_amplitude(gate.theta, d, gate.shape, gate.duration, lam[0] * lam[1]);
            let phase = axis + if d < 0.0 { PI } else { 0.0 };
            tones.push(Tone::new(freqs[&t1] + d, phase, mk_env(amp)?, 0.0).targeting(t1));
            tones.push(Tone::new(freqs[&t2] + d, 0.0, mk_env(amp)?, 0.0).targeting(t2));
        }
        GateKind::RamanBswap => {
            let d = gate.raman_detuning;
            let t2: Transition = "0B0".parse()?;
            let t3: Transition = "A10".parse()?;
            let amp = raman_amplitude(gate.theta, d, gate.shape, gate.duration, lam[0] * lam[1]);
            let phase = axis + if d < 0.0 { PI } else { 0.0 };
            tones.push(Tone::new(freqs[&t2] - d, phase, mk_env(amp)?, 0.0).targeting(t2));
            tones.push(Tone::new(freqs[&t3] + d, 0.0, mk_env(amp)?, 0.0).targeting(t3));
        }
    }
    let mut updates = Vec::new();
    if let Some(cal) = cal {
        if !cal.amplitudes.is_empty() && cal.amplitudes.len() != tones.len() {
            return Err(Error::InvalidArgument(format!(
                "calibration has {} amplitudes for {} tones",
                cal.amplitudes.len(),
                tones.len()
            )));
        }
        for (k, tone) in tones.iter_mut().enumerate() {
            if let Some(&a) = cal.amplitudes.get(k) {
                tone.envelope = mk_env(a)?;
            }
            if let Some(&d) = cal.detunings.get(k) {
                tone.detuning_hz = d;
            }
        }
        updates = cal.stark_updates(gate.duration);
    }
    if matches!(gate.kind, GateKind::RamanIswap | GateKind::RamanBswap) {
        for tone in &tones {
            if gate.raman_detuning.abs() < 3.0 * tone.envelope.amplitude {
                log::warn!(
                    "Raman detuning {:.1} MHz is less than 3x the tone amplitude {:.1} MHz",
                    gate.raman_detuning * 1e-6,
                    tone.envelope.amplitude * 1e-6
                );
            }
        }
    }
    check_collisions(&tones, params, options.collision_threshold_hz)?;
    Schedule::new(tones, updates, gate.duration)
}

/// Rejects tones that sit within `threshold` of each other or of a
/// transition they do not target.
pub fn check_collisions(tones: &[Tone], params: &ModeParams, threshold: f64) -> Result<()> {
    let freqs = circuit::conditional_frequencies(params);
    for (i, a) in tones.iter().enumerate() {
        for b in tones.iter().skip(i + 1) {
            let overlap = a.start_s < b.end_s() && b.start_s < a.end_s();
            if overlap && (a.frequency() - b.frequency()).abs() < threshold {
                return Err(Error::FrequencyCollision(format!(
                    "tones at {:.6} GHz and {:.6} GHz are {:.3} MHz apart",
                    a.frequency() * 1e-9,
                    b.frequency() * 1e-9,
                    (a.frequency() - b.frequency()).abs() * 1e-6
                )));
            }
        }
        for (t, f) in &freqs {
            if Some(*t) == a.target {
                continue;
            }
            if (a.frequency() - f).abs() < threshold {
                return Err(Error::FrequencyCollision(format!(
                    "tone at {:.6} GHz ({}) is {:.3} MHz from untargeted transition {t}",
                    a.frequency() * 1e-9,
                    pulses::describe(a.target),
                    (a.frequency() - f).abs() * 1e-6
                )));
            }
        }
    }
    Ok(())
}

/// Everything needed to turn a gate into a simulated operation.
#[derive(Debug, Clone)]
pub struct GateSimulator {
    pub params: ModeParams,
    pub system: System,
    pub config: EvolutionConfig,
    pub noise: NoiseChannels,
    pub options: CompileOptions,
}

impl GateSimulator {
    pub fn new(params: ModeParams) -> Self {
        Self::with_space(params, SpaceSpec::qubits())
    }

    pub fn with_space(params: ModeParams, space: SpaceSpec) -> Self {
        GateSimulator {
            params,
            system: System::new(&params, space),
            config: EvolutionConfig::default(),
            noise: NoiseChannels::none(),
            options: CompileOptions::default(),
        }
    }

    pub fn with_config(mut self, config: EvolutionConfig) -> Self {
        self.options.couplings = config.couplings;
        self.config = config;
        self
    }

    pub fn with_noise(mut self, noise: NoiseChannels) -> Self {
        self.noise = noise;
        self
    }

    pub fn compile(&self, gate: &GateSpec, cal: Option<&CalibrationRecord>) -> Result<Schedule> {
        compile(gate, &self.params, cal, &self.options)
    }

    /// Noiseless gate on the computational space with its frame updates applied.
    pub fn unitary(&self, gate: &GateSpec, cal: Option<&CalibrationRecord>) -> Result<GateUnitary> {
        let schedule = self.compile(gate, cal)?;
        self.schedule_unitary(&schedule)
    }

    pub fn schedule_unitary(&self, schedule: &Schedule) -> Result<GateUnitary> {
        let u = dynamics::propagate_unitary(&self.system, schedule, &self.config)?;
        dynamics::gate_unitary(&u, &schedule.final_ledger(), &self.system.space)
    }

    /// Channel of the gate as a superoperator on the full truncated space,
    /// interaction frame, virtual frame diagonal applied.
    pub fn channel(&self, gate: &GateSpec, cal: Option<&CalibrationRecord>) -> Result<CMat> {
        let schedule = self.compile(gate, cal)?;
        self.schedule_channel(&schedule)
    }

    pub fn schedule_channel(&self, schedule: &Schedule) -> Result<CMat> {
        let s = dynamics::channel_superop(&self.system, schedule, &self.noise, &self.config)?;
        let d8 = pulses::diagonal_unitary_of(&schedule.final_ledger())?;
        let d = self.system.space.embed_computational(&d8);
        // states outside the computational space keep their phase
        let mut full = d;
        for i in 0..self.system.space.dim() {
            if full[(i, i)].norm() == 0.0 {
                full[(i, i)] = Complex64::from(1.0);
            }
        }
        Ok(linalg::unitary_superop(&full) * s)
    }
}

/// State phases `θ_s` (with `θ_000 = 0`) such that `diag(e^{iθ}) U ≈ V`.
pub fn stark_phases(actual: &Operator, ideal: &Operator) -> [f64; 8] {
    let m = actual * ideal.adjoint();
    let mut theta = [0.0; 8];
    for (s, th) in theta.iter_mut().enumerate() {
        *th = -m[(s, s)].arg();
    }
    let t0 = theta[0];
    theta.map(|t| t - t0)
}

/// Numerically extracts the post-gate frame correction for `gate` with the
/// tone parameters of `cal`, returning an updated record.
pub fn calibrate_stark(
    sim: &GateSimulator,
    gate: &GateSpec,
    cal: Option<&CalibrationRecord>,
) -> Result<CalibrationRecord> {
    let mut rec = cal.cloned().unwrap_or_default();
    rec.signature = gate.signature();
    rec.stark = FrameLedger::new();
    let bare = sim.compile(gate, Some(&rec))?;
    if rec.amplitudes.is_empty() {
        rec.amplitudes = bare.tones.iter().map(|t| t.envelope.amplitude).collect();
        rec.detunings = bare.tones.iter().map(|t| t.detuning_hz).collect();
    }
    let g = sim.schedule_unitary(&bare)?;
    let ideal = ideal_unitary(gate)?;
    rec.stark = FrameLedger::from_state_phases(&stark_phases(&g.unitary, &ideal));
    Ok(rec)
}

/// Population error on computational states outside the gate's blocks:
/// `max_s (1 - |U_ss|²)`.
pub fn spectator_deviation(gate: &GateSpec, u: &Operator) -> f64 {
    let inside: Vec<usize> = blocks(gate).iter().flat_map(|b| [b.lower, b.upper]).collect();
    (0..8)
        .filter(|s| !inside.contains(s))
        .map(|s| 1.0 - u[(s, s)].norm_sqr())
        .fold(0.0, f64::max)
}

/// Fidelity of a simulated gate against its ideal, on the full computational space.
pub fn gate_fidelity(gate: &GateSpec, u: &GateUnitary) -> Result<f64> {
    Ok(linalg::average_gate_fidelity(&u.unitary, &ideal_unitary(gate)?))
}

/// Two-qubit (A, B with C = 0) average gate fidelity.
pub fn gate_fidelity_ab(gate: &GateSpec, u: &GateUnitary) -> Result<f64> {
    Ok(linalg::average_gate_fidelity(&u.two_qubit_ab(), &ideal_unitary_ab(gate)?))
}

/// The two-qubit ideal on A, B with C = 0.
pub fn ideal_unitary_ab(gate: &GateSpec) -> Result<Operator> {
    let ideal = ideal_unitary(gate)?;
    let idx = [0usize, 2, 4, 6];
    Ok(CMat::from_fn(4, 4, |r, c| ideal[(idx[r], idx[c])]))
}

/// Restricts a full-space channel to inputs on A, B with C in `|0⟩` and
/// projects the output onto the same subspace; population that leaves it is
/// lost, so the result is trace non-increasing.
pub fn channel_ab(full: &CMat, space: &SpaceSpec) -> Result<CMat> {
    let d = space.dim();
    if full.nrows() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, found: full.nrows() });
    }
    let mut idx = [0usize; 4];
    for (k, slot) in idx.iter_mut().enumerate() {
        *slot = space.index_of(BasisLabel::new((k >> 1) as u8, (k & 1) as u8, 0))?;
    }
    Ok(CMat::from_fn(16, 16, |out, inp| {
        let (or, oc) = (out % 4, out / 4);
        let (ir, ic) = (inp % 4, inp / 4);
        full[(idx[oc] * d + idx[or], idx[ic] * d + idx[ir])]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn tr(s: &str) -> Transition {
        s.parse().unwrap()
    }

    #[test]
    fn ccr_compiles_to_one_tone() {
        let p = ModeParams::measured_device();
        let g = GateSpec::ccr(tr("0B0"), FRAC_PI_2, 0.0);
        let s = compile(&g, &p, None, &CompileOptions::default()).unwrap();
        assert_eq!(s.tones.len(), 1);
        assert!((s.tones[0].carrier_hz - frequency_of(&p, tr("0B0"))).abs() < 1e-3);
        assert!((s.total_duration_s - 60e-9).abs() < 1e-18);
    }

    #[test]
    fn tone_counts() {
        let p = ModeParams::measured_device();
        let o = CompileOptions::default();
        let cr = GateSpec::cr(Mode::B, Mode::A, 1, PI, 0.0).unwrap();
        assert_eq!(compile(&cr, &p, None, &o).unwrap().tones.len(), 2);
        assert_eq!(compile(&GateSpec::r(Mode::C, PI, 0.0), &p, None, &o).unwrap().tones.len(), 4);
    }

    #[test]
    fn virtual_cz_has_no_tones() {
        let s = compile(&GateSpec::cz(), &ModeParams::measured_device(), None, &CompileOptions::default()).unwrap();
        assert!(s.is_virtual());
        assert!(!s.frame_updates.is_empty());
        let d = pulses::diagonal_unitary_of(&s.final_ledger()).unwrap();
        assert!(linalg::max_abs(&(d - ideal_unitary(&GateSpec::cz()).unwrap())) < 1e-12);
    }

    #[test]
    fn raman_iswap_tones_share_detuning() {
        let p = ModeParams::measured_device();
        let g = GateSpec::raman_iswap(FRAC_PI_2, 0.0, 32e6);
        let s = compile(&g, &p, None, &CompileOptions::default()).unwrap();
        assert_eq!(s.tones.len(), 2);
        assert!((s.tones[0].carrier_hz - frequency_of(&p, tr("A00")) - 32e6).abs() < 1e-3);
        assert!((s.tones[1].carrier_hz - frequency_of(&p, tr("0B0")) - 32e6).abs() < 1e-3);
    }

    #[test]
    fn collisions_are_detected() {
        let p = ModeParams::measured_device();
        let env = Envelope::cosine(1e6, 60e-9).unwrap();
        let f = frequency_of(&p, tr("0B0"));
        let tones = vec![Tone::new(f, 0.0, env, 0.0), Tone::new(f + 0.5e6, 0.0, env, 0.0)];
        assert!(matches!(check_collisions(&tones, &p, 1e6), Err(Error::FrequencyCollision(_))));
    }

    #[test]
    fn conditions_parse() {
        assert_eq!(parse_condition("0_1").unwrap(), [Some(0), Some(1)]);
        assert_eq!(parse_condition("x_0").unwrap(), [None, Some(0)]);
        assert!(parse_condition("2_0").is_err());
    }

    #[test]
    fn arity_is_checked() {
        let mut g = GateSpec::r(Mode::A, PI, 0.0);
        g.kind = GateKind::Ccr;
        assert!(g.validate().is_err());
        assert!(matches!(GateSpec::raman_iswap(1.0, 0.0, 0.0).validate(), Err(Error::ZeroDetuning)));
    }

    #[test]
    fn calibration_store_roundtrip() {
        let mut store = CalibrationStore::default();
        let g = GateSpec::ccr(tr("A00"), PI, 0.0);
        store.insert(CalibrationRecord { signature: g.signature(), amplitudes: vec![1e6], ..Default::default() });
        let back = CalibrationStore::from_json(&store.to_json()).unwrap();
        assert_eq!(back.get(&g).unwrap().amplitudes, vec![1e6]);
    }
}
