//! Unitary and Lindblad propagation of driven schedules.
//!
//! The default integrator is a fourth-order Magnus scheme on Gauss-Legendre
//! nodes, applied in the interaction frame of the static Hamiltonian. Each
//! outer step is subdivided so that the fastest oscillation present advances
//! by at most `phase_per_substep` radians per substep.

use std::collections::HashMap;
use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuit::ModeParams;
use crate::error::{Error, Result};
use crate::hilbert::{self, Operator, QuantumState, SpaceSpec};
use crate::labels::Mode;
use crate::linalg::{self, CMat, CVec};
use crate::pulses::{self, FrameLedger, ResolvedTone, Schedule};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Lab,
    #[default]
    Interaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Fourth-order Magnus expansion on two Gauss-Legendre nodes.
    #[default]
    Magnus4,
    /// Second-order exponential midpoint rule (Strang splitting of `H0` and drive).
    Midpoint,
}

impl Method {
    pub fn order(self) -> u32 {
        match self {
            Method::Magnus4 => 4,
            Method::Midpoint => 2,
        }
    }
}

/// How the drive enters the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriveModel {
    /// The full charge drive, no rotating-wave approximation.
    #[default]
    Full,
    /// Counter-rotating terms dropped on every transition.
    Rwa,
    /// Each tone drives only its target transition, co-rotating part only.
    PerToneRwa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub step_s: f64,
    pub method: Method,
    pub tolerance: f64,
    pub frame: Frame,
    pub drive_model: DriveModel,
    /// Drive weights `λ` of the modes in `Σ λ_μ (a_μ + a_μ†)`.
    pub couplings: [f64; 3],
    pub phase_per_substep: f64,
    /// Re-run at half the substep and fail if the propagator moves by more than `tolerance`.
    pub verify_step: bool,
    /// Interval between dissipator applications in Lindblad runs.
    pub dissipation_step_s: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            step_s: 0.1e-9,
            method: Method::Magnus4,
            tolerance: 1e-6,
            frame: Frame::Interaction,
            drive_model: DriveModel::Full,
            couplings: [1.0; 3],
            phase_per_substep: 0.25,
            verify_step: false,
            dissipation_step_s: 1e-9,
        }
    }
}

impl EvolutionConfig {
    pub fn rwa() -> Self {
        EvolutionConfig { drive_model: DriveModel::Rwa, ..Default::default() }
    }

    pub fn per_tone_rwa() -> Self {
        EvolutionConfig { drive_model: DriveModel::PerToneRwa, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_s.is_finite() && self.step_s > 0.0) {
            return Err(Error::InvalidArgument("step_s must be > 0".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-4) {
            return Err(Error::InvalidArgument("tolerance must lie in (0, 1e-4]".into()));
        }
        if !(self.phase_per_substep > 0.0 && self.phase_per_substep.is_finite()) {
            return Err(Error::InvalidArgument("phase_per_substep must be > 0".into()));
        }
        if !(self.dissipation_step_s > 0.0 && self.dissipation_step_s.is_finite()) {
            return Err(Error::InvalidArgument("dissipation_step_s must be > 0".into()));
        }
        if self.frame == Frame::Lab && self.drive_model != DriveModel::Full {
            return Err(Error::InvalidArgument("rotating-wave drive models require the interaction frame".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseChannels {
    pub t1: [Option<f64>; 3],
    pub t2: [Option<f64>; 3],
    /// Standard deviation of the per-shot frequency offset of each mode (Hz).
    pub quasi_static_sigma: [f64; 3],
}

impl Default for NoiseChannels {
    fn default() -> Self {
        NoiseChannels::none()
    }
}

impl NoiseChannels {
    pub fn none() -> Self {
        NoiseChannels { t1: [None; 3], t2: [None; 3], quasi_static_sigma: [0.0; 3] }
    }

    /// Relaxation and Hahn-echo coherence times of the measured device.
    pub fn measured_device() -> Self {
        NoiseChannels {
            t1: [Some(54e-6), Some(38e-6), Some(33e-6)],
            t2: [Some(45e-6), Some(34e-6), Some(30e-6)],
            quasi_static_sigma: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in Mode::ALL {
            let k = m.index();
            for v in [self.t1[k], self.t2[k]].into_iter().flatten() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidArgument(format!("coherence times of mode {m} must be > 0")));
                }
            }
            if let (Some(t1), Some(t2)) = (self.t1[k], self.t2[k]) {
                if t2 > 2.0 * t1 {
                    return Err(Error::NegativeDephasing { mode: m.letter(), t1, t2 });
                }
            }
            if !(self.quasi_static_sigma[k] >= 0.0 && self.quasi_static_sigma[k].is_finite()) {
                return Err(Error::InvalidArgument("quasi-static sigma must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Pure-dephasing rate `1/T2 - 1/(2 T1)` of a mode (1/s).
    pub fn dephasing_rate(&self, mode: Mode) -> f64 {
        let k = mode.index();
        let decay = self.t1[k].map(|t| 0.5 / t).unwrap_or(0.0);
        self.t2[k].map(|t2| 1.0 / t2 - decay).unwrap_or(0.0)
    }

    pub fn is_dissipative(&self) -> bool {
        self.t1.iter().chain(self.t2.iter()).any(Option::is_some)
    }

    /// Collapse operators `√(1/T1) a` and `√(2 γ_φ) n`.
    pub fn collapse_operators(&self, space: &SpaceSpec) -> Result<Vec<Operator>> {
        self.validate()?;
        let mut ops = Vec::new();
        for m in Mode::ALL {
            if let Some(t1) = self.t1[m.index()] {
                ops.push(hilbert::lowering_op(space, m) * Complex64::from((1.0 / t1).sqrt()));
            }
            let g = self.dephasing_rate(m);
            if g > 0.0 {
                ops.push(hilbert::number_op(space, m) * Complex64::from((2.0 * g).sqrt()));
            }
        }
        Ok(ops)
    }
}

/// Per-mode frequency offsets for one quasi-static trajectory.
pub fn sample_quasi_static(noise: &NoiseChannels, seed: u64) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    noise.quasi_static_sigma.map(|sigma| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng)
        } else {
            0.0
        }
    })
}

/// Runs `f` for every seed in parallel; results are returned in seed order.
pub fn run_ensemble<T: Send>(seeds: &[u64], f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    use rayon::prelude::*;
    seeds.par_iter().map(|&s| f(s)).collect()
}

/// Static part of the model: the truncated space and the diagonal `H0`.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub space: SpaceSpec,
    pub h0: Operator,
    energies: Vec<f64>,
}

impl System {
    pub fn new(params: &ModeParams, space: SpaceSpec) -> Self {
        let h0 = hilbert::static_hamiltonian(params, &space);
        let energies = hilbert::energies(params, &space);
        System { space, h0, energies }
    }

    pub fn from_hamiltonian(h0: Operator, space: SpaceSpec) -> Result<Self> {
        if h0.nrows() != space.dim() || h0.ncols() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), found: h0.nrows() });
        }
        let off = linalg::max_abs(&(&h0 - CMat::from_diagonal(&h0.diagonal())));
        if off > 0.0 {
            return Err(Error::InvalidArgument("static Hamiltonian must be diagonal".into()));
        }
        let energies = h0.diagonal().iter().map(|z| z.re).collect();
        Ok(System { space, h0, energies })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Same system with `Σ δ_μ n_μ` added.
    pub fn with_offsets(&self, offsets: [f64; 3]) -> Self {
        let mut h0 = self.h0.clone();
        for m in Mode::ALL {
            h0 += hilbert::number_op(&self.space, m) * Complex64::from(offsets[m.index()]);
        }
        System::from_hamiltonian(h0, self.space).expect("diagonal")
    }

    /// `exp(-i 2π H0 t)` as a diagonal.
    pub fn free_phases(&self, t: f64) -> Vec<Complex64> {
        self.energies.iter().map(|e| Complex64::from_polar(1.0, -TAU * frac_product(*e, t))).collect()
    }

    /// Converts a lab-frame propagator over `[0, t]` into the interaction frame.
    pub fn to_interaction(&self, u_lab: &Operator, t: f64) -> Operator {
        let p = self.free_phases(t);
        let mut out = u_lab.clone();
        for (r, z) in p.iter().enumerate() {
            let zc = z.conj();
            for c in 0..out.ncols() {
                out[(r, c)] *= zc;
            }
        }
        out
    }
}

/// `(a t) mod 1` evaluated so that large products keep their fractional precision.
fn frac_product(a: f64, t: f64) -> f64 {
    (a * t).fract()
}

struct Coupling {
    lower: usize,
    upper: usize,
    value: Complex64,
    freq: f64,
}

/// The time-dependent Hamiltonian of a schedule in a chosen frame and drive model.
struct Driven<'a> {
    system: &'a System,
    tones: Vec<ResolvedTone>,
    couplings: Vec<Coupling>,
    /// Per-tone (lower, upper) indices and matrix element for the per-tone model.
    targets: Vec<Option<(usize, usize, Complex64, f64)>>,
    model: DriveModel,
    frame: Frame,
}

impl<'a> Driven<'a> {
    fn new(system: &'a System, schedule: &Schedule, config: &EvolutionConfig) -> Result<Self> {
        let x = pulses::charge_operator(&system.space, config.couplings);
        let e = system.energies();
        let dim = system.space.dim();
        let mut couplings = Vec::new();
        for i in 0..dim {
            for j in (i + 1)..dim {
                if x[(i, j)].norm() > 0.0 {
                    let (lower, upper) = if e[i] <= e[j] { (i, j) } else { (j, i) };
                    couplings.push(Coupling { lower, upper, value: x[(lower, upper)], freq: e[upper] - e[lower] });
                }
            }
        }
        let tones = schedule.resolve();
        let mut targets = Vec::with_capacity(tones.len());
        for rt in &tones {
            let t = match (config.drive_model, rt.tone.target) {
                (DriveModel::PerToneRwa, None) => {
                    return Err(Error::InvalidSchedule("per-tone RWA requires every tone to name a target".into()))
                }
                (_, Some(tr)) => {
                    let l = system.space.index_of(tr.lower())?;
                    let u = system.space.index_of(tr.upper())?;
                    Some((l, u, x[(l, u)], e[u] - e[l]))
                }
                _ => None,
            };
            targets.push(t);
        }
        Ok(Driven { system, tones, couplings, targets, model: config.drive_model, frame: config.frame })
    }

    fn max_frequency(&self, a: f64, b: f64) -> f64 {
        let active: Vec<usize> = (0..self.tones.len())
            .filter(|&k| self.tones[k].tone.start_s < b && self.tones[k].tone.end_s() > a)
            .collect();
        if active.is_empty() {
            return 0.0;
        }
        let amp: f64 = active
            .iter()
            .map(|&k| self.tones[k].tone.envelope.amplitude * (1.0 + self.tones[k].tone.envelope.drag.abs()))
            .sum();
        let spread = match self.model {
            DriveModel::Full => {
                let fmax = active.iter().map(|&k| self.tones[k].tone.frequency()).fold(0.0, f64::max);
                let wmax = self.couplings.iter().map(|c| c.freq.abs()).fold(0.0, f64::max);
                fmax + wmax
            }
            DriveModel::Rwa => active
                .iter()
                .flat_map(|&k| self.couplings.iter().map(move |c| (self.tones[k].tone.frequency() - c.freq).abs()))
                .fold(0.0, f64::max),
            DriveModel::PerToneRwa => active
                .iter()
                .filter_map(|&k| self.targets[k].map(|(_, _, _, w)| (self.tones[k].tone.frequency() - w).abs()))
                .fold(0.0, f64::max),
        };
        spread + amp
    }

    fn hamiltonian(&self, t: f64) -> CMat {
        let dim = self.system.space.dim();
        let mut h = CMat::zeros(dim, dim);
        match self.model {
            DriveModel::Full => {
                let g = pulses::drive_signal(&self.tones, t);
                match self.frame {
                    Frame::Lab => {
                        for (i, e) in self.system.energies().iter().enumerate() {
                            h[(i, i)] = Complex64::from(*e);
                        }
                        for c in &self.couplings {
                            let v = c.value * g;
                            h[(c.lower, c.upper)] += v;
                            h[(c.upper, c.lower)] += v.conj();
                        }
                    }
                    Frame::Interaction => {
                        if g != 0.0 {
                            for c in &self.couplings {
                                let v = c.value * g * Complex64::from_polar(1.0, -TAU * frac_product(c.freq, t));
                                h[(c.lower, c.upper)] += v;
                                h[(c.upper, c.lower)] += v.conj();
                            }
                        }
                    }
                }
            }
            DriveModel::Rwa => {
                for rt in self.tones.iter().filter(|rt| rt.tone.is_active(t)) {
                    let s = rt.envelope_at(t) * 0.5;
                    let slow = rt.slow_phase_at(t);
                    let f = rt.tone.carrier_hz;
                    for c in &self.couplings {
                        let ph = TAU * ((f - c.freq) * t).fract() + slow;
                        let v = c.value * s * Complex64::from_polar(1.0, ph);
                        h[(c.lower, c.upper)] += v;
                        h[(c.upper, c.lower)] += v.conj();
                    }
                }
            }
            DriveModel::PerToneRwa => {
                for (rt, tgt) in self.tones.iter().zip(&self.targets) {
                    if !rt.tone.is_active(t) {
                        continue;
                    }
                    let (l, u, x, w) = tgt.expect("checked at construction");
                    let ph = TAU * ((rt.tone.carrier_hz - w) * t).fract() + rt.slow_phase_at(t);
                    let v = x * rt.envelope_at(t) * 0.5 * Complex64::from_polar(1.0, ph);
                    h[(l, u)] += v;
                    h[(u, l)] += v.conj();
                }
            }
        }
        h
    }

    /// One integrator step from `t` to `t + h`.
    fn step(&self, method: Method, t: f64, h: f64) -> CMat {
        let k = match method {
            Method::Midpoint => self.hamiltonian(t + 0.5 * h) * Complex64::from(h),
            Method::Magnus4 => {
                let d = 3f64.sqrt() / 6.0;
                let h1 = self.hamiltonian(t + h * (0.5 - d));
                let h2 = self.hamiltonian(t + h * (0.5 + d));
                let comm = linalg::commutator(&h2, &h1);
                (&h1 + &h2) * Complex64::from(0.5 * h) - comm * Complex64::new(0.0, 3f64.sqrt() / 12.0 * h * h * TAU)
            }
        };
        linalg::propagator(&k, 1.0)
    }

    /// Exact free evolution over `[a, b]` in the configured frame.
    fn free(&self, a: f64, b: f64) -> CMat {
        let dim = self.system.space.dim();
        match self.frame {
            Frame::Interaction => linalg::identity(dim),
            Frame::Lab => {
                let p = self.system.free_phases(b - a);
                linalg::diag(&p)
            }
        }
    }

    fn substeps(&self, a: f64, b: f64, config: &EvolutionConfig, refine: usize) -> usize {
        let outer = ((b - a) / config.step_s).ceil().max(1.0) as usize;
        let h = (b - a) / outer as f64;
        let per = (TAU * self.max_frequency(a, b) * h / config.phase_per_substep).ceil().max(1.0) as usize;
        outer * per * refine
    }

    /// Propagator over `[a, b]`, skipping intervals with no active tone.
    fn propagate(&self, a: f64, b: f64, config: &EvolutionConfig, refine: usize) -> CMat {
        let dim = self.system.space.dim();
        let mut u = linalg::identity(dim);
        let mut t = a;
        for (s, e) in self.segments(a, b) {
            if s > t {
                u = self.free(t, s) * u;
            }
            let n = self.substeps(s, e, config, refine);
            let h = (e - s) / n as f64;
            for k in 0..n {
                u = self.step(config.method, s + k as f64 * h, h) * u;
            }
            t = e;
        }
        if b > t {
            u = self.free(t, b) * u;
        }
        u
    }

    /// Active intervals clipped to `[a, b]`.
    fn segments(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut iv: Vec<(f64, f64)> = self
            .tones
            .iter()
            .map(|rt| (rt.tone.start_s.max(a), rt.tone.end_s().min(b)))
            .filter(|(s, e)| e > s)
            .collect();
        iv.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (s, e) in iv {
            match out.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => out.push((s, e)),
            }
        }
        out
    }
}

fn propagate_checked(driven: &Driven, a: f64, b: f64, config: &EvolutionConfig) -> Result<CMat> {
    let u = driven.propagate(a, b, config, 1);
    if !config.verify_step {
        return Ok(u);
    }
    let mut coarse = u;
    let mut refine = 1;
    let mut change = f64::INFINITY;
    for _ in 0..4 {
        refine *= 2;
        let fine = driven.propagate(a, b, config, refine);
        change = linalg::max_abs(&(&fine - &coarse));
        if change <= config.tolerance {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::StepTooCoarse { step_s: config.step_s / refine as f64, change })
}

/// Total propagator of `schedule` over `[0, total_duration]`.
///
/// In the interaction frame the result is `exp(i 2π H0 T) U_lab(T, 0)`.
pub fn propagate_unitary(system: &System, schedule: &Schedule, config: &EvolutionConfig) -> Result<Operator> {
    propagate_unitary_between(system, schedule, config, 0.0, schedule.total_duration_s)
}

/// Propagator over the sub-interval `[t0, t1]`.
pub fn propagate_unitary_between(
    system: &System,
    schedule: &Schedule,
    config: &EvolutionConfig,
    t0: f64,
    t1: f64,
) -> Result<Operator> {
    config.validate()?;
    schedule.validate()?;
    if t1 < t0 {
        return Err(Error::InvalidArgument("t1 must not precede t0".into()));
    }
    let driven = Driven::new(system, schedule, config)?;
    let u = propagate_checked(&driven, t0, t1, config)?;
    // an interaction-frame propagator between t0 and t1 is already relative to H0
    Ok(u)
}

/// Unitary propagators evaluated on a time grid (interaction or lab frame).
pub fn propagate_trajectory(
    system: &System,
    schedule: &Schedule,
    config: &EvolutionConfig,
    times: &[f64],
) -> Result<Vec<Operator>> {
    config.validate()?;
    let driven = Driven::new(system, schedule, config)?;
    let mut out = Vec::with_capacity(times.len());
    let mut u = linalg::identity(system.space.dim());
    let mut t = 0.0;
    for &tk in times {
        if tk < t {
            return Err(Error::InvalidArgument("trajectory times must be ascending".into()));
        }
        u = propagate_checked(&driven, t, tk, config)? * u;
        t = tk;
        out.push(u.clone());
    }
    Ok(out)
}

/// `D` as a `d² × d²` superoperator (column stacking).
pub fn dissipator_superop(ops: &[Operator], dim: usize) -> CMat {
    let id = linalg::identity(dim);
    let mut d = CMat::zeros(dim * dim, dim * dim);
    for l in ops {
        let ldl = l.adjoint() * l;
        d += linalg::kron(&l.map(|z| z.conj()), l);
        d -= linalg::kron(&id, &ldl) * Complex64::from(0.5);
        d -= linalg::kron(&ldl.transpose(), &id) * Complex64::from(0.5);
    }
    d
}

/// `-i 2π [H, ·]` as a superoperator.
pub fn hamiltonian_superop(h: &Operator) -> CMat {
    let id = linalg::identity(h.nrows());
    (linalg::kron(&id, h) - linalg::kron(&h.transpose(), &id)) * Complex64::new(0.0, -TAU)
}

enum Evolving {
    Rho(CMat),
    Super(CMat),
}

impl Evolving {
    fn unitary(&mut self, u: &CMat) {
        match self {
            Evolving::Rho(r) => *r = u * &*r * u.adjoint(),
            Evolving::Super(s) => *s = linalg::unitary_superop(u) * &*s,
        }
    }

    fn superop(&mut self, e: &CMat) {
        match self {
            Evolving::Rho(r) => {
                let n = r.nrows();
                *r = linalg::unvec(&(e * linalg::vec_of(r)), n);
            }
            Evolving::Super(s) => *s = e * &*s,
        }
    }
}

struct LindbladRun<'a> {
    driven: Driven<'a>,
    config: EvolutionConfig,
    dissipator: CMat,
    generator_lab: CMat,
    half_cache: HashMap<u64, CMat>,
    idle_cache: HashMap<u64, CMat>,
}

impl<'a> LindbladRun<'a> {
    fn new(system: &'a System, schedule: &Schedule, noise: &NoiseChannels, config: &EvolutionConfig) -> Result<Self> {
        config.validate()?;
        schedule.validate()?;
        let dim = system.space.dim();
        let ops = noise.collapse_operators(&system.space)?;
        let dissipator = dissipator_superop(&ops, dim);
        let generator_lab = hamiltonian_superop(&system.h0) + &dissipator;
        let driven = Driven::new(system, schedule, config)?;
        Ok(LindbladRun { driven, config: *config, dissipator, generator_lab, half_cache: HashMap::new(), idle_cache: HashMap::new() })
    }

    fn half_dissipation(&mut self, h: f64) -> CMat {
        let key = h.to_bits();
        let d = &self.dissipator;
        self.half_cache.entry(key).or_insert_with(|| (d * Complex64::from(0.5 * h)).exp()).clone()
    }

    fn idle(&mut self, dt: f64) -> CMat {
        let key = dt.to_bits();
        let g = &self.generator_lab;
        self.idle_cache.entry(key).or_insert_with(|| (g * Complex64::from(dt)).exp()).clone()
    }

    /// Lab-frame evolution of `state` over `[a, b]`.
    fn run(&mut self, state: &mut Evolving, a: f64, b: f64) {
        let system = self.driven.system;
        let mut t = a;
        let segments = self.driven.segments(a, b);
        for (s, e) in segments {
            if s > t {
                let idle = self.idle(s - t);
                state.superop(&idle);
            }
            let chunks = ((e - s) / self.config.dissipation_step_s).ceil().max(1.0) as usize;
            let hc = (e - s) / chunks as f64;
            let half = self.half_dissipation(hc);
            for k in 0..chunks {
                let c0 = s + k as f64 * hc;
                let c1 = c0 + hc;
                let u_frame = self.driven.propagate(c0, c1, &self.config, 1);
                let u_lab = match self.driven.frame {
                    Frame::Lab => u_frame,
                    Frame::Interaction => {
                        let p1 = system.free_phases(c1);
                        let p0 = system.free_phases(c0);
                        CMat::from_fn(u_frame.nrows(), u_frame.ncols(), |r, c| p1[r] * u_frame[(r, c)] * p0[c].conj())
                    }
                };
                state.superop(&half);
                state.unitary(&u_lab);
                state.superop(&half);
            }
            t = e;
        }
        if b > t {
            let idle = self.idle(b - t);
            state.superop(&idle);
        }
    }
}

fn frame_in(system: &System, frame: Frame, t: f64) -> CMat {
    match frame {
        Frame::Lab => linalg::identity(system.space.dim()),
        Frame::Interaction => linalg::diag(&system.free_phases(t)),
    }
}

/// Density-matrix evolution under the schedule and the Lindblad dissipator.
///
/// The dissipator acts in the lab frame with Strang half-steps every
/// `dissipation_step_s`; tone-free intervals use the exact exponential of the
/// Liouvillian. Input and output are expressed in `config.frame`.
pub fn propagate_lindblad(
    system: &System,
    schedule: &Schedule,
    noise: &NoiseChannels,
    config: &EvolutionConfig,
    rho0: &QuantumState,
) -> Result<QuantumState> {
    rho0.validate()?;
    if rho0.dim() != system.space.dim() {
        return Err(Error::DimensionMismatch { expected: system.space.dim(), found: rho0.dim() });
    }
    let mut run = LindbladRun::new(system, schedule, noise, config)?;
    let t_end = schedule.total_duration_s;
    let mut state = Evolving::Rho(rho0.density_matrix());
    run.run(&mut state, 0.0, t_end);
    let Evolving::Rho(rho) = state else { unreachable!() };
    let p = frame_in(system, config.frame, t_end);
    let rho = p.adjoint() * rho * &p;
    Ok(QuantumState::Mixed(linalg::hermitian_part(&rho)))
}

/// Density matrices sampled at ascending `times`.
pub fn lindblad_trajectory(
    system: &System,
    schedule: &Schedule,
    noise: &NoiseChannels,
    config: &EvolutionConfig,
    rho0: &QuantumState,
    times: &[f64],
) -> Result<Vec<CMat>> {
    let mut run = LindbladRun::new(system, schedule, noise, config)?;
    let mut state = Evolving::Rho(rho0.density_matrix());
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    for &tk in times {
        if tk < t {
            return Err(Error::InvalidArgument("trajectory times must be ascending".into()));
        }
        run.run(&mut state, t, tk);
        t = tk;
        let Evolving::Rho(rho) = &state else { unreachable!() };
        let p = frame_in(system, config.frame, tk);
        out.push(p.adjoint() * rho * &p);
    }
    Ok(out)
}

/// Full `d² × d²` channel of the schedule, expressed in `config.frame`.
pub fn channel_superop(
    system: &System,
    schedule: &Schedule,
    noise: &NoiseChannels,
    config: &EvolutionConfig,
) -> Result<CMat> {
    let mut run = LindbladRun::new(system, schedule, noise, config)?;
    let d2 = system.space.dim().pow(2);
    let mut state = Evolving::Super(linalg::identity(d2));
    let t_end = schedule.total_duration_s;
    run.run(&mut state, 0.0, t_end);
    let Evolving::Super(s) = state else { unreachable!() };
    let p = frame_in(system, config.frame, t_end);
    Ok(linalg::unitary_superop(&p.adjoint()) * s)
}

/// Applies a superoperator to a density matrix.
pub fn apply_superop(s: &CMat, rho: &CMat) -> CMat {
    linalg::unvec(&(s * linalg::vec_of(rho)), rho.nrows())
}

/// A propagator restricted to the computational states.
#[derive(Debug, Clone, PartialEq)]
pub struct GateUnitary {
    /// 8×8 block in computational order, frame corrections applied.
    pub unitary: Operator,
    /// `1 - σ_min²` of the projected block.
    pub leakage: f64,
}

impl GateUnitary {
    /// The 4×4 block on modes A and B with C in `|0⟩`.
    pub fn two_qubit_ab(&self) -> Operator {
        let idx = [0usize, 2, 4, 6];
        CMat::from_fn(4, 4, |r, c| self.unitary[(idx[r], idx[c])])
    }
}

/// Projects a propagator to the computational space and applies the
/// virtual-frame diagonal of `ledger`.
pub fn gate_unitary(propagator: &Operator, ledger: &FrameLedger, space: &SpaceSpec) -> Result<GateUnitary> {
    if propagator.nrows() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), found: propagator.nrows() });
    }
    let block = space.project_computational(propagator);
    let d = pulses::diagonal_unitary_of(ledger)?;
    let unitary = d * block;
    let sv = unitary.clone().singular_values();
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(GateUnitary { unitary, leakage: (1.0 - smin * smin).max(0.0) })
}

/// Population vector of a state vector.
pub fn populations(v: &CVec) -> Vec<f64> {
    v.iter().map(|z| z.norm_sqr()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{BasisLabel, Transition};
    use crate::pulses::{Envelope, Shape, Tone};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn system() -> System {
        System::new(&ModeParams::measured_device(), SpaceSpec::qubits())
    }

    fn tr(s: &str) -> Transition {
        s.parse().unwrap()
    }

    fn pi_pulse(sys: &System, t: &str, duration: f64) -> Schedule {
        let t = tr(t);
        let f = hilbert::transition_frequency(&sys.h0, &sys.space, t.lower(), t.upper()).unwrap();
        let amp = pulses::amplitude_for_angle(PI, Shape::Cosine, duration, 1.0);
        let env = Envelope::cosine(amp, duration).unwrap();
        Schedule::new(vec![Tone::new(f, 0.0, env, 0.0).targeting(t)], vec![], duration).unwrap()
    }

    #[test]
    fn empty_schedule_is_identity() {
        let sys = system();
        let u = propagate_unitary(&sys, &Schedule::empty(50e-9), &EvolutionConfig::default()).unwrap();
        assert!(linalg::max_abs(&(u - linalg::identity(8))) < 1e-15);
    }

    #[test]
    fn resonant_pi_pulse_flips_a() {
        let sys = system();
        let sched = pi_pulse(&sys, "A00", 60e-9);
        let u = propagate_unitary(&sys, &sched, &EvolutionConfig::default()).unwrap();
        assert!(linalg::unitarity_error(&u) < 1e-10);
        let i0 = sys.space.index_of(BasisLabel::new(0, 0, 0)).unwrap();
        let i1 = sys.space.index_of(BasisLabel::new(1, 0, 0)).unwrap();
        assert!(u[(i1, i0)].norm_sqr() > 0.999, "{}", u[(i1, i0)].norm_sqr());
    }

    #[test]
    fn rwa_models_agree_with_full_drive() {
        let sys = system();
        let sched = pi_pulse(&sys, "0B0", 60e-9);
        let full = propagate_unitary(&sys, &sched, &EvolutionConfig::default()).unwrap();
        let rwa = propagate_unitary(&sys, &sched, &EvolutionConfig::rwa()).unwrap();
        let tone = propagate_unitary(&sys, &sched, &EvolutionConfig::per_tone_rwa()).unwrap();
        let f = |u: &CMat, v: &CMat| linalg::average_gate_fidelity(u, v);
        assert!(f(&full, &rwa) > 0.99, "{}", f(&full, &rwa));
        assert!(f(&rwa, &tone) > 0.99, "{}", f(&rwa, &tone));
    }

    #[test]
    fn lab_and_interaction_frames_agree() {
        let sys = system();
        let sched = pi_pulse(&sys, "00C", 40e-9);
        let ui = propagate_unitary(&sys, &sched, &EvolutionConfig::default()).unwrap();
        let lab_cfg = EvolutionConfig { frame: Frame::Lab, ..Default::default() };
        let ul = propagate_unitary(&sys, &sched, &lab_cfg).unwrap();
        let ul = sys.to_interaction(&ul, sched.total_duration_s);
        let g1 = gate_unitary(&ui, &FrameLedger::new(), &sys.space).unwrap();
        let g2 = gate_unitary(&ul, &FrameLedger::new(), &sys.space).unwrap();
        assert!(1.0 - linalg::average_gate_fidelity(&g1.unitary, &g2.unitary) < 1e-6);
    }

    #[test]
    fn t1_decay_law() {
        let sys = system();
        let noise = NoiseChannels::measured_device();
        let rho0 = QuantumState::basis(&sys.space, BasisLabel::new(1, 0, 0)).unwrap();
        let t = 20e-6;
        let rho = propagate_lindblad(&sys, &Schedule::empty(t), &noise, &EvolutionConfig::default(), &rho0).unwrap();
        let i = sys.space.index_of(BasisLabel::new(1, 0, 0)).unwrap();
        assert_relative_eq!(rho.populations()[i], (-t / 54e-6).exp(), max_relative = 1e-9);
    }

    #[test]
    fn noiseless_lindblad_matches_unitary() {
        let sys = system();
        let sched = pi_pulse(&sys, "A00", 60e-9);
        let cfg = EvolutionConfig::default();
        let mut plus = CVec::zeros(8);
        plus[0] = Complex64::from(0.6);
        plus[4] = Complex64::new(0.0, 0.8);
        let rho0 = QuantumState::pure(plus.clone()).unwrap();
        let rho = propagate_lindblad(&sys, &sched, &NoiseChannels::none(), &cfg, &rho0).unwrap();
        let u = propagate_unitary(&sys, &sched, &cfg).unwrap();
        let expect = &u * &plus * (&u * &plus).adjoint();
        assert!(linalg::max_abs(&(rho.density_matrix() - expect)) < 1e-6);
    }

    #[test]
    fn negative_dephasing_is_rejected() {
        let mut n = NoiseChannels::none();
        n.t1[1] = Some(10e-6);
        n.t2[1] = Some(25e-6);
        assert!(matches!(n.validate(), Err(Error::NegativeDephasing { mode: 'B', .. })));
    }

    #[test]
    fn quasi_static_draws() {
        let mut n = NoiseChannels::none();
        assert_eq!(sample_quasi_static(&n, 7), [0.0; 3]);
        n.quasi_static_sigma = [50e3, 0.0, 1e5];
        assert_eq!(sample_quasi_static(&n, 11), sample_quasi_static(&n, 11));
        let draws: Vec<f64> = (0..2000).map(|s| sample_quasi_static(&n, s)[0]).collect();
        let mean = draws.iter().sum::<f64>() / 2000.0;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 1999.0).sqrt();
        assert!((sd / 50e3 - 1.0).abs() < 0.05, "{sd}");
    }

    #[test]
    fn identity_gate_has_no_leakage() {
        let s = SpaceSpec::uniform(3).unwrap();
        let g = gate_unitary(&linalg::identity(27), &FrameLedger::new(), &s).unwrap();
        assert!(g.leakage < 1e-14);
        assert!(linalg::max_abs(&(g.unitary - linalg::identity(8))) < 1e-15);
    }

    #[test]
    fn strong_drive_leaks_in_three_levels() {
        let sys = System::new(&ModeParams::measured_device(), SpaceSpec::uniform(3).unwrap());
        let t = tr("0B0");
        let f = hilbert::transition_frequency(&sys.h0, &sys.space, t.lower(), t.upper()).unwrap();
        let env = Envelope::new(Shape::Cosine, 150e6, 8e-9, 0.0).unwrap();
        let sched = Schedule::new(vec![Tone::new(f, 0.0, env, 0.0)], vec![], 8e-9).unwrap();
        let u = propagate_unitary(&sys, &sched, &EvolutionConfig::rwa()).unwrap();
        let g = gate_unitary(&u, &FrameLedger::new(), &sys.space).unwrap();
        assert!(g.leakage > 1e-3, "{}", g.leakage);
    }

    #[test]
    fn interior_split_composes() {
        let sys = system();
        let sched = pi_pulse(&sys, "1B0", 40e-9);
        let cfg = EvolutionConfig::default();
        let whole = propagate_unitary(&sys, &sched, &cfg).unwrap();
        let a = propagate_unitary_between(&sys, &sched, &cfg, 0.0, 17.3e-9).unwrap();
        let b = propagate_unitary_between(&sys, &sched, &cfg, 17.3e-9, 40e-9).unwrap();
        assert!(linalg::max_abs(&(b * a - whole)) < 1e-7);
    }
}
