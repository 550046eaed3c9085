//! Fixtures shared by the benchmarks: the measured device, a compiled
//! doubly conditioned rotation and sampled tomography data.

use trimon_core::gates::{self, calibrate_stark};
use trimon_core::measurement::ReadoutModel;
use trimon_core::tomography::{bell_states, QptNoise, QptRuns, QstData};
use trimon_core::*;

/// A Stark-corrected 60 ns π/2 rotation on 0B0 with its simulator.
pub fn ccr_fixture(levels: usize) -> (GateSimulator, GateSpec, Schedule) {
    let space = SpaceSpec::uniform(levels).expect("valid levels");
    let sim = GateSimulator::with_space(ModeParams::measured_device(), space)
        .with_noise(NoiseChannels::measured_device());
    let gate = GateSpec::ccr("0B0".parse().expect("valid transition"), std::f64::consts::FRAC_PI_2, 0.0);
    let cal = calibrate_stark(&sim, &gate, None).expect("calibrates");
    let schedule = sim.compile(&gate, Some(&cal)).expect("compiles");
    (sim, gate, schedule)
}

/// 40k-shot Bell-state data through a 5 % symmetric assignment error.
pub fn bell_data() -> (QstData, ReadoutModel) {
    let model = ReadoutModel::symmetric(0.05, 40_000).expect("valid readout");
    let state = QuantumState::pure(bell_states()[0].clone()).expect("normalised");
    (QstData::sampled(&state, &model, 1).expect("samples"), model)
}

/// Exact QPT data of the fixture's A, B channel with and without the gate.
pub fn qpt_runs() -> (QptRuns, QptRuns) {
    let (sim, gate, _) = ccr_fixture(2);
    let channel = gates::channel_ab(&sim.channel(&gate, None).expect("channel"), &sim.system.space).expect("ab block");
    let noise = QptNoise {
        confusion: Some(ReadoutModel::symmetric(0.05, 40_000).expect("valid").assignment),
        ..QptNoise::default()
    };
    let runs = QptRuns::simulate(&channel, &noise, 0).expect("runs");
    let reference = QptRuns::simulate(&linalg::identity(16), &noise, 1).expect("reference");
    (runs, reference)
}
