//! Shaped drive tones, schedules and per-transition virtual phase frames.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, Operator, SpaceSpec};
use crate::labels::{BasisLabel, Mode, Transition};
use crate::linalg::{self, CMat};
use crate::Complex64;

/// Length of each cosine ramp of a flat-top envelope.
pub const FLAT_TOP_RAMP_S: f64 = 10e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Cosine,
    FlatTop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub shape: Shape,
    /// Peak amplitude in hertz.
    pub amplitude: f64,
    /// Seconds.
    pub duration: f64,
    /// Quadrature weight of the normalised time derivative; 0 disables DRAG.
    pub drag: f64,
}

impl Envelope {
    pub fn new(shape: Shape, amplitude: f64, duration: f64, drag: f64) -> Result<Self> {
        let e = Envelope { shape, amplitude, duration, drag };
        e.validate()?;
        Ok(e)
    }

    pub fn cosine(amplitude: f64, duration: f64) -> Result<Self> {
        Self::new(Shape::Cosine, amplitude, duration, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidEnvelope(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::InvalidEnvelope(format!("amplitude must be >= 0, got {}", self.amplitude)));
        }
        if !self.drag.is_finite() {
            return Err(Error::InvalidEnvelope("drag coefficient must be finite".into()));
        }
        Ok(())
    }

    fn ramp(&self) -> f64 {
        FLAT_TOP_RAMP_S.min(self.duration / 2.0)
    }

    /// Real profile and its time derivative divided by the shape rate.
    fn profile(&self, t: f64) -> (f64, f64) {
        if !(0.0..=self.duration).contains(&t) {
            return (0.0, 0.0);
        }
        let a = self.amplitude;
        match self.shape {
            Shape::Cosine => {
                let x = TAU * t / self.duration;
                (0.5 * a * (1.0 - x.cos()), 0.5 * a * x.sin())
            }
            Shape::FlatTop => {
                let r = self.ramp();
                if t < r {
                    let x = PI * t / r;
                    (0.5 * a * (1.0 - x.cos()), 0.5 * a * x.sin())
                } else if t > self.duration - r {
                    let x = PI * (self.duration - t) / r;
                    (0.5 * a * (1.0 - x.cos()), -0.5 * a * x.sin())
                } else {
                    (a, 0.0)
                }
            }
        }
    }

    /// Complex amplitude at time `t` measured from the envelope start.
    pub fn sample(&self, t: f64) -> Complex64 {
        let (re, d) = self.profile(t);
        Complex64::new(re, self.drag * d)
    }

    /// `∫ Re s(t) dt`.
    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Cosine => 0.5 * self.amplitude * self.duration,
            Shape::FlatTop => self.amplitude * (self.duration - self.ramp()),
        }
    }

    /// `∫ (Re s(t))² dt`.
    pub fn power_area(&self) -> f64 {
        let a2 = self.amplitude * self.amplitude;
        match self.shape {
            Shape::Cosine => 0.375 * a2 * self.duration,
            Shape::FlatTop => a2 * (self.duration - 2.0 * self.ramp()) + 0.75 * a2 * self.ramp(),
        }
    }

    /// Area per unit amplitude.
    pub fn unit_area(&self) -> f64 {
        match self.shape {
            Shape::Cosine => 0.5 * self.duration,
            Shape::FlatTop => self.duration - self.ramp(),
        }
    }
}

/// Peak amplitude that rotates a transition with matrix element `coupling`
/// by `theta` with the given envelope shape and duration.
pub fn amplitude_for_angle(theta: f64, shape: Shape, duration: f64, coupling: f64) -> f64 {
    let unit = Envelope { shape, amplitude: 1.0, duration, drag: 0.0 }.unit_area();
    theta / (TAU * coupling * unit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub carrier_hz: f64,
    pub phase_rad: f64,
    pub envelope: Envelope,
    pub start_s: f64,
    /// Calibration shift added to the carrier; its phase is referenced to `start_s`.
    pub detuning_hz: f64,
    /// Transition whose virtual frame this tone follows.
    pub target: Option<Transition>,
}

impl Tone {
    pub fn new(carrier_hz: f64, phase_rad: f64, envelope: Envelope, start_s: f64) -> Self {
        Tone { carrier_hz, phase_rad, envelope, start_s, detuning_hz: 0.0, target: None }
    }

    pub fn targeting(mut self, t: Transition) -> Self {
        self.target = Some(t);
        self
    }

    pub fn with_detuning(mut self, detuning_hz: f64) -> Self {
        self.detuning_hz = detuning_hz;
        self
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + self.envelope.duration
    }

    pub fn frequency(&self) -> f64 {
        self.carrier_hz + self.detuning_hz
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start_s && t <= self.end_s()
    }

    pub fn validate(&self) -> Result<()> {
        self.envelope.validate()?;
        if !(self.frequency() > 0.0 && self.frequency().is_finite()) {
            return Err(Error::InvalidSchedule(format!("tone frequency {} Hz must be positive", self.frequency())));
        }
        if !(self.start_s.is_finite() && self.start_s >= 0.0) {
            return Err(Error::InvalidSchedule("tone start must be >= 0".into()));
        }
        if !self.phase_rad.is_finite() {
            return Err(Error::InvalidSchedule("tone phase must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameUpdate {
    pub time_s: f64,
    pub transition: Transition,
    pub phase_rad: f64,
}

fn check_transition(t: Transition) -> Result<()> {
    if t.spectators.iter().any(|&s| s > 1) {
        return Err(Error::unknown_transition(&t));
    }
    Ok(())
}

fn wrap(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if p >= TAU { 0.0 } else { p }
}

/// Signed distance to the nearest multiple of 2π.
pub fn wrapped_residual(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if p > PI { p - TAU } else { p }
}

/// Virtual phase of every conditional transition: the phase of the upper
/// state minus that of the lower state, stored in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameLedger {
    phases: [f64; 12],
}

impl FrameLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phase(&self, t: Transition) -> f64 {
        self.phases[t.index()]
    }

    pub fn phases(&self) -> [f64; 12] {
        self.phases
    }

    /// Ledger of the diagonal unitary `diag(exp(i θ_s))` over computational states.
    pub fn from_state_phases(theta: &[f64; 8]) -> Self {
        let mut phases = [0.0; 12];
        for t in Transition::all() {
            let u = t.upper().computational_index().unwrap();
            let l = t.lower().computational_index().unwrap();
            phases[t.index()] = wrap(theta[u] - theta[l]);
        }
        FrameLedger { phases }
    }

    /// Ledger of a diagonal unitary given by its eight diagonal entries.
    pub fn from_diagonal(d: &[Complex64]) -> Result<Self> {
        if d.len() != 8 {
            return Err(Error::DimensionMismatch { expected: 8, found: d.len() });
        }
        let mut theta = [0.0; 8];
        for (k, z) in d.iter().enumerate() {
            theta[k] = z.arg();
        }
        Ok(Self::from_state_phases(&theta))
    }

    pub fn compose(&self, other: &FrameLedger) -> FrameLedger {
        let mut phases = self.phases;
        for (p, q) in phases.iter_mut().zip(other.phases) {
            *p = wrap(*p + q);
        }
        FrameLedger { phases }
    }

    /// State phases with `θ_000 = 0`, solved along a spanning tree of the
    /// cube and checked on every remaining edge.
    pub fn state_phases(&self) -> Result<[f64; 8]> {
        let mut theta = [0.0; 8];
        let mut known = [false; 8];
        known[0] = true;
        // a BFS over the cube; every state is reached within three rounds
        for _ in 0..3 {
            for t in Transition::all() {
                let l = t.lower().computational_index().unwrap();
                let u = t.upper().computational_index().unwrap();
                if known[l] && !known[u] {
                    theta[u] = theta[l] + self.phases[t.index()];
                    known[u] = true;
                } else if known[u] && !known[l] {
                    theta[l] = theta[u] - self.phases[t.index()];
                    known[l] = true;
                }
            }
        }
        let mut residual: f64 = 0.0;
        for t in Transition::all() {
            let l = t.lower().computational_index().unwrap();
            let u = t.upper().computational_index().unwrap();
            residual = residual.max(wrapped_residual(theta[u] - theta[l] - self.phases[t.index()]).abs());
        }
        if residual > 1e-9 {
            return Err(Error::InconsistentLedger { residual });
        }
        Ok(theta.map(wrap))
    }

    pub fn is_consistent(&self) -> bool {
        self.state_phases().is_ok()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = Transition::all()
            .into_iter()
            .map(|t| (t.to_string(), serde_json::json!(self.phases[t.index()])))
            .collect();
        serde_json::Value::Object(map)
    }
}

/// Adds `angle` to the virtual frame of `transition`.
pub fn apply_virtual_z(ledger: &FrameLedger, transition: Transition, angle: f64) -> Result<FrameLedger> {
    check_transition(transition)?;
    let mut out = *ledger;
    out.phases[transition.index()] = wrap(out.phases[transition.index()] + angle);
    Ok(out)
}

/// The 8×8 diagonal unitary whose phase differences across each transition
/// equal the ledger phases.
pub fn diagonal_unitary_of(ledger: &FrameLedger) -> Result<Operator> {
    let theta = ledger.state_phases()?;
    Ok(linalg::diag(&theta.map(|t| Complex64::from_polar(1.0, t))))
}

/// Ledger entries realising a diagonal unitary on the full computational
/// space, given state phases.
pub fn frame_updates_for(theta: &[f64; 8], time_s: f64) -> Vec<FrameUpdate> {
    let ledger = FrameLedger::from_state_phases(theta);
    Transition::all()
        .into_iter()
        .filter(|t| wrapped_residual(ledger.phase(*t)).abs() > 1e-15)
        .map(|t| FrameUpdate { time_s, transition: t, phase_rad: ledger.phase(t) })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schedule {
    pub tones: Vec<Tone>,
    pub frame_updates: Vec<FrameUpdate>,
    pub total_duration_s: f64,
}

/// A tone with its frame phase folded in, ready for sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTone {
    pub tone: Tone,
    pub frame_phase: f64,
}

impl ResolvedTone {
    /// Total phase `2π f t + 2π δ (t - t0) + φ + frame` at absolute time `t`.
    pub fn phase_at(&self, t: f64) -> f64 {
        let tone = &self.tone;
        TAU * ((tone.carrier_hz * t).fract() + tone.detuning_hz * (t - tone.start_s)) + tone.phase_rad + self.frame_phase
    }

    /// Phase without the carrier term; the carrier is handled by the caller.
    pub fn slow_phase_at(&self, t: f64) -> f64 {
        let tone = &self.tone;
        TAU * tone.detuning_hz * (t - tone.start_s) + tone.phase_rad + self.frame_phase
    }

    pub fn envelope_at(&self, t: f64) -> Complex64 {
        self.tone.envelope.sample(t - self.tone.start_s)
    }
}

impl Schedule {
    pub fn new(tones: Vec<Tone>, mut frame_updates: Vec<FrameUpdate>, total_duration_s: f64) -> Result<Self> {
        frame_updates.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        let s = Schedule { tones, frame_updates, total_duration_s };
        s.validate()?;
        Ok(s)
    }

    pub fn empty(total_duration_s: f64) -> Self {
        Schedule { tones: Vec::new(), frame_updates: Vec::new(), total_duration_s }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_duration_s.is_finite() && self.total_duration_s >= 0.0) {
            return Err(Error::InvalidSchedule("total duration must be >= 0".into()));
        }
        for t in &self.tones {
            t.validate()?;
            if let Some(tr) = t.target {
                check_transition(tr)?;
            }
            if t.end_s() > self.total_duration_s * (1.0 + 1e-12) + 1e-18 {
                return Err(Error::InvalidSchedule(format!(
                    "tone ending at {:.3e} s exceeds schedule duration {:.3e} s",
                    t.end_s(),
                    self.total_duration_s
                )));
            }
        }
        for w in self.frame_updates.windows(2) {
            if w[1].time_s < w[0].time_s {
                return Err(Error::InvalidSchedule("frame updates must be sorted by time".into()));
            }
        }
        for u in &self.frame_updates {
            check_transition(u.transition)?;
            if !u.phase_rad.is_finite() || !u.time_s.is_finite() {
                return Err(Error::InvalidSchedule("frame update values must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn is_virtual(&self) -> bool {
        self.tones.is_empty()
    }

    /// Ledger after all updates with `time_s <= t`.
    pub fn ledger_at(&self, t: f64) -> FrameLedger {
        let mut ledger = FrameLedger::new();
        for u in self.frame_updates.iter().filter(|u| u.time_s <= t) {
            ledger = apply_virtual_z(&ledger, u.transition, u.phase_rad).expect("validated");
        }
        ledger
    }

    pub fn final_ledger(&self) -> FrameLedger {
        self.ledger_at(f64::INFINITY)
    }

    pub fn resolve(&self) -> Vec<ResolvedTone> {
        self.tones
            .iter()
            .map(|tone| {
                let frame_phase = tone.target.map(|tr| self.ledger_at(tone.start_s).phase(tr)).unwrap_or(0.0);
                ResolvedTone { tone: tone.clone(), frame_phase }
            })
            .collect()
    }

    /// Appends `other` so that it starts at the current end of `self`.
    pub fn then(&mut self, other: &Schedule) {
        let offset = self.total_duration_s;
        for t in &other.tones {
            let mut t = t.clone();
            t.start_s += offset;
            self.tones.push(t);
        }
        for u in &other.frame_updates {
            self.frame_updates.push(FrameUpdate { time_s: u.time_s + offset, ..u.clone() });
        }
        self.total_duration_s += other.total_duration_s;
    }

    pub fn delay(&mut self, duration_s: f64) {
        self.total_duration_s += duration_s;
    }

    pub fn add_frame_updates(&mut self, updates: impl IntoIterator<Item = FrameUpdate>) {
        self.frame_updates.extend(updates);
        self.frame_updates.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    }

    /// Distinct intervals on which at least one tone is active, merged.
    pub fn active_intervals(&self) -> Vec<(f64, f64)> {
        let mut iv: Vec<(f64, f64)> = self.tones.iter().map(|t| (t.start_s, t.end_s())).collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in iv {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let tones: Vec<ToneRecord> = self.tones.iter().map(ToneRecord::from).collect();
        let updates: Vec<FrameUpdateRecord> = self
            .frame_updates
            .iter()
            .map(|u| FrameUpdateRecord { t_ns: u.time_s * 1e9, transition: u.transition, phase_rad: u.phase_rad })
            .collect();
        serde_json::json!({
            "total_duration_ns": self.total_duration_s * 1e9,
            "tones": tones,
            "frame_updates": updates,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: ScheduleRecord =
            serde_json::from_value(value.clone()).map_err(|e| Error::InvalidSchedule(e.to_string()))?;
        let tones = doc.tones.into_iter().map(Tone::try_from).collect::<Result<Vec<_>>>()?;
        let updates = doc
            .frame_updates
            .into_iter()
            .map(|u| FrameUpdate { time_s: u.t_ns * 1e-9, transition: u.transition, phase_rad: u.phase_rad })
            .collect();
        let total = doc.total_duration_ns.map(|t| t * 1e-9).unwrap_or_else(|| {
            tones.iter().map(|t: &Tone| t.end_s()).fold(0.0, f64::max)
        });
        Schedule::new(tones, updates, total)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ToneRecord {
    carrier_ghz: f64,
    phase_rad: f64,
    start_ns: f64,
    duration_ns: f64,
    amplitude_mhz: f64,
    shape: Shape,
    #[serde(default)]
    drag: f64,
    #[serde(default)]
    detuning_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<Transition>,
}

impl From<&Tone> for ToneRecord {
    fn from(t: &Tone) -> Self {
        ToneRecord {
            carrier_ghz: t.carrier_hz * 1e-9,
            phase_rad: t.phase_rad,
            start_ns: t.start_s * 1e9,
            duration_ns: t.envelope.duration * 1e9,
            amplitude_mhz: t.envelope.amplitude * 1e-6,
            shape: t.envelope.shape,
            drag: t.envelope.drag,
            detuning_mhz: t.detuning_hz * 1e-6,
            target: t.target,
        }
    }
}

impl TryFrom<ToneRecord> for Tone {
    type Error = Error;

    fn try_from(r: ToneRecord) -> Result<Tone> {
        let env = Envelope::new(r.shape, r.amplitude_mhz * 1e6, r.duration_ns * 1e-9, r.drag)?;
        let tone = Tone {
            carrier_hz: r.carrier_ghz * 1e9,
            phase_rad: r.phase_rad,
            envelope: env,
            start_s: r.start_ns * 1e-9,
            detuning_hz: r.detuning_mhz * 1e6,
            target: r.target,
        };
        tone.validate()?;
        Ok(tone)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameUpdateRecord {
    t_ns: f64,
    transition: Transition,
    phase_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScheduleRecord {
    #[serde(default)]
    total_duration_ns: Option<f64>,
    #[serde(default)]
    tones: Vec<ToneRecord>,
    #[serde(default)]
    frame_updates: Vec<FrameUpdateRecord>,
}

/// `Σ_μ λ_μ (a_μ + a_μ†)`.
pub fn charge_operator(space: &SpaceSpec, couplings: [f64; 3]) -> Operator {
    let dim = space.dim();
    let mut x = CMat::zeros(dim, dim);
    for m in Mode::ALL {
        let a = hilbert::lowering_op(space, m);
        x += (&a + a.adjoint()) * Complex64::from(couplings[m.index()]);
    }
    x
}

/// Scalar drive waveform `Re Σ_k s_k(t) exp(i Φ_k(t))`.
pub fn drive_signal(tones: &[ResolvedTone], t: f64) -> f64 {
    tones
        .iter()
        .filter(|rt| rt.tone.is_active(t))
        .map(|rt| (rt.envelope_at(t) * Complex64::from_polar(1.0, rt.phase_at(t))).re)
        .sum()
}

/// Lab-frame drive Hamiltonian at time `t`.
pub fn drive_hamiltonian(schedule: &Schedule, t: f64, couplings: [f64; 3], space: &SpaceSpec) -> Operator {
    let tones = schedule.resolve();
    charge_operator(space, couplings) * Complex64::from(drive_signal(&tones, t))
}

/// Label of a tone target for messages.
pub fn describe(t: Option<Transition>) -> String {
    t.map(|t| t.to_string()).unwrap_or_else(|| "untargeted".into())
}

/// States of the computational cube adjacent to `s` through a single transition.
pub fn cube_neighbours(s: BasisLabel) -> Vec<(Transition, BasisLabel)> {
    Mode::ALL
        .iter()
        .map(|&m| {
            let other = s.with(m, 1 - s.get(m));
            (Transition::between(s, other).expect("single flip"), other)
        })
        .collect()
}
