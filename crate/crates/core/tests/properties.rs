use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use trimon_core::circuit::{self, CircuitSpec, ModeParams};
use trimon_core::dynamics::{self, System};
use trimon_core::gates::{self, qudit};
use trimon_core::hilbert;
use trimon_core::linalg::{self, c, CMat, CVec};
use trimon_core::measurement::{self, ConfusionMatrix, ReadoutModel};
use trimon_core::pulses::{self, Envelope, FrameLedger, Schedule, Shape, Tone};
use trimon_core::tomography::{self, ChiMatrix, QptNoise, QptRuns, QstData, QstOptions};
use trimon_core::*;

fn mode_params() -> impl Strategy<Value = ModeParams> {
    (
        prop::array::uniform3(4.0e9..6.5e9f64),
        prop::array::uniform3(40e6..120e6f64),
        prop::array::uniform3(0.0..150e6f64),
    )
        .prop_map(|(w, k, x)| ModeParams::new(w, k, x))
}

fn circuit_spec() -> impl Strategy<Value = CircuitSpec> {
    (prop::array::uniform6(0.7..1.3f64), prop::array::uniform4(0.7..1.3f64), 6e9..11e9f64).prop_map(|(sp, sg, ej)| {
        let ff = 1e-15;
        let base = [(0, 1, 21.0), (0, 2, 4.0), (0, 3, 21.0), (1, 2, 21.0), (1, 3, 3.0), (2, 3, 21.0)];
        let mut pair = [[0.0; 4]; 4];
        for (s, (i, j, v)) in sp.iter().zip(base) {
            pair[i][j] = v * s * ff;
        }
        let ground = [46.0, 30.0, 53.0, 36.0];
        let ground = [0, 1, 2, 3].map(|k| ground[k] * sg[k] * ff);
        CircuitSpec::with_uniform_junctions(pair, ground, ej).expect("valid spec")
    })
}

/// Random unitary `exp(-i 2π H)` from a Hermitian with entries in [-1, 1].
fn unitary(n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec(-1.0..1.0f64, 2 * n * n).prop_map(move |v| {
        let h = CMat::from_fn(n, n, |r, col| c(v[2 * (r * n + col)], v[2 * (r * n + col) + 1]));
        linalg::propagator(&linalg::hermitian_part(&h), 1.0)
    })
}

fn pure_state(n: usize) -> impl Strategy<Value = CVec> {
    prop::collection::vec(-1.0..1.0f64, 2 * n)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(move |v| {
            let psi = CVec::from_fn(n, |k, _| c(v[2 * k], v[2 * k + 1]));
            psi.normalize()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_modes_diagonalise_both_matrices(spec in circuit_spec()) {
        let m = circuit::build_maxwell(&spec).unwrap();
        let modes = circuit::normal_modes(&m).unwrap();
        let v = modes.mode_vectors;
        let ctc = v.transpose() * m.capacitance * v;
        prop_assert!((ctc - nalgebra::Matrix4::identity()).amax() < 1e-10);
        let k = v.transpose() * m.inductive * v;
        let scale = k.amax();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    prop_assert!(k[(i, j)].abs() < 1e-10 * scale);
                }
            }
        }
        for r in 0..4 {
            prop_assert_eq!(m.inductive.row(r).sum(), 0.0);
        }
        prop_assert_eq!(modes.frequencies[0], 0.0);
    }

    #[test]
    fn energy_scaling_scales_every_coefficient(spec in circuit_spec(), k in 0.5..2.0f64) {
        let p = circuit::mode_params(&spec);
        let mut scaled = spec.clone();
        for row in scaled.pairwise_capacitance.iter_mut() {
            for v in row.iter_mut() {
                *v /= k;
            }
        }
        for v in scaled.ground_capacitance.iter_mut() {
            *v /= k;
        }
        for row in scaled.josephson_energy.iter_mut() {
            for v in row.iter_mut() {
                *v *= k;
            }
        }
        let q = circuit::mode_params(&scaled);
        for i in 0..3 {
            prop_assert!((q.omega[i] - k * p.omega[i]).abs() < 1e-9 * q.omega[i]);
            prop_assert!((q.self_kerr[i] - k * p.self_kerr[i]).abs() < 1e-9 * q.self_kerr[i]);
            prop_assert!((q.cross_kerr[i] - k * p.cross_kerr[i]).abs() <= 1e-9 * q.cross_kerr[i].abs().max(1.0));
        }
    }

    #[test]
    fn spectator_splittings_equal_twice_cross_kerr(p in mode_params()) {
        let f = circuit::conditional_frequencies(&p);
        // each frequency is a difference of energies up to the doubly excited scale
        let scale: f64 = p.omega.iter().sum();
        for (t, &w) in &f {
            for (k, other) in t.mode.spectators().into_iter().enumerate() {
                if t.spectators[k] == 0 {
                    let mut flipped = *t;
                    flipped.spectators[k] = 1;
                    let split = w - f[&flipped];
                    prop_assert!((split - 2.0 * p.cross(t.mode, other)).abs() <= 8.0 * f64::EPSILON * scale);
                }
            }
        }
    }

    #[test]
    fn static_hamiltonian_is_diagonal_with_anharmonicity(p in mode_params()) {
        let space = SpaceSpec::uniform(3).unwrap();
        let h = hilbert::static_hamiltonian(&p, &space);
        let mut off = h.clone();
        off.fill_diagonal(c(0.0, 0.0));
        prop_assert_eq!(off.norm(), 0.0);
        for m in Mode::ALL {
            let at = |n: u8| space.index_of(BasisLabel::new(0, 0, 0).with(m, n)).unwrap();
            let e = |n: u8| h[(at(n), at(n))].re;
            let anharm = (e(2) - e(1)) - (e(1) - e(0));
            prop_assert!((anharm + 2.0 * p.self_kerr[m.index()]).abs() <= 16.0 * f64::EPSILON * e(2));
        }
    }

    #[test]
    fn swapping_mode_labels_permutes_energies(p in mode_params()) {
        let swapped = ModeParams::new(
            [p.omega[1], p.omega[0], p.omega[2]],
            [p.self_kerr[1], p.self_kerr[0], p.self_kerr[2]],
            [p.cross_kerr[0], p.cross_kerr[2], p.cross_kerr[1]],
        );
        for s in BasisLabel::computational() {
            let t = BasisLabel::new(s.get(Mode::B), s.get(Mode::A), s.get(Mode::C));
            prop_assert!((p.energy(s.0) - swapped.energy(t.0)).abs() < 1e-3);
        }
    }

    #[test]
    fn envelopes_vanish_outside_and_at_edges(
        amp in 0.0..20e6f64,
        dur in 20e-9..200e-9f64,
        drag in -1.0..1.0f64,
        flat in any::<bool>(),
        t in -1e-6..1e-6f64,
    ) {
        let shape = if flat { Shape::FlatTop } else { Shape::Cosine };
        let e = Envelope::new(shape, amp, dur, drag).unwrap();
        prop_assert!(e.sample(0.0).norm() <= 1e-9 * amp.max(1.0));
        prop_assert!(e.sample(dur).norm() <= 1e-9 * amp.max(1.0));
        if !(0.0..=dur).contains(&t) {
            prop_assert_eq!(e.sample(t).norm(), 0.0);
        }
    }

    #[test]
    fn drive_hamiltonian_is_hermitian(
        freqs in prop::collection::vec(4e9..6e9f64, 1..4),
        phase in 0.0..2.0 * PI,
        t in 0.0..60e-9f64,
    ) {
        let tones: Vec<Tone> = freqs
            .iter()
            .map(|&f| Tone::new(f, phase, Envelope::cosine(5e6, 60e-9).unwrap(), 0.0))
            .collect();
        let sched = Schedule::new(tones, vec![], 60e-9).unwrap();
        let space = SpaceSpec::uniform(3).unwrap();
        let h = pulses::drive_hamiltonian(&sched, t, [1.0, 0.8, 0.6], &space);
        prop_assert!(linalg::is_hermitian(&h, 1e-9));
    }

    #[test]
    fn frame_updates_commute(phases in prop::collection::vec(prop::array::uniform8(-PI..PI), 2..5)) {
        let ledgers: Vec<FrameLedger> = phases.iter().map(FrameLedger::from_state_phases).collect();
        let forward = ledgers.iter().fold(FrameLedger::new(), |acc, l| acc.compose(l));
        let backward = ledgers.iter().rev().fold(FrameLedger::new(), |acc, l| acc.compose(l));
        let a = pulses::diagonal_unitary_of(&forward).unwrap();
        let b = pulses::diagonal_unitary_of(&backward).unwrap();
        prop_assert!(linalg::max_abs(&(a - b)) < 1e-9);
    }

    #[test]
    fn measurement_confusion_columns_are_stochastic(within in 0.0..0.15f64, cross in 0.0..0.05f64, seed in 0u64..1000) {
        let model = ReadoutModel {
            assignment: ConfusionMatrix::excitation_structured(within, cross).unwrap(),
            shots: 5000,
            middle_discard: 0.0,
        };
        let cm = measurement::build_confusion(&model, seed).unwrap();
        for col in 0..4 {
            let s: f64 = cm.m.column(col).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(cm.m.column(col).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn cholesky_parametrisation_is_a_density_matrix(x in prop::collection::vec(-3.0..3.0f64, 16)) {
        prop_assume!(x.iter().map(|v| v * v).sum::<f64>() > 1e-6);
        let rho = tomography::rho_from_params(&x);
        prop_assert!(linalg::is_hermitian(&rho, 1e-10));
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
        let (vals, _) = linalg::eigh(&rho);
        prop_assert!(vals[0] > -1e-10);
    }

    #[test]
    fn gate_fidelity_of_a_channel_with_itself_is_one(u in unitary(4), v in unitary(4)) {
        let a = ChiMatrix::from_unitary(&u);
        let b = ChiMatrix::from_unitary(&v);
        prop_assert!((tomography::gate_fidelity(&a, &a, 4).unwrap() - 1.0).abs() < 1e-12);
        let ab = tomography::process_fidelity(&a, &b).unwrap();
        let ba = tomography::process_fidelity(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn qst_estimate_is_a_density_matrix(psi in pure_state(4), seed in 0u64..1000) {
        let model = ReadoutModel::symmetric(0.03, 20_000).unwrap();
        let data = QstData::sampled(&QuantumState::pure(psi.clone()).unwrap(), &model, seed).unwrap();
        let est = tomography::qst_mle(&data, Some(&model.assignment), &QstOptions::default()).unwrap();
        prop_assert!(linalg::is_hermitian(&est.rho, 1e-10));
        prop_assert!((est.rho.trace().re - 1.0).abs() < 1e-10);
        let (vals, _) = linalg::eigh(&est.rho);
        prop_assert!(vals[0] > -1e-10);
        let f = tomography::state_fidelity(&est.rho, &(&psi * psi.adjoint())).unwrap();
        prop_assert!(f > 0.97);
    }

    #[test]
    fn qpt_recovers_unitary_channels(u in unitary(4)) {
        let runs = QptRuns::simulate(&linalg::unitary_superop(&u), &QptNoise::default(), 0).unwrap();
        let chi = tomography::qpt(&runs, None).unwrap();
        let f = tomography::gate_fidelity(chi.best(), &ChiMatrix::from_unitary(&u), 4).unwrap();
        prop_assert!(f > 1.0 - 1e-5);
    }

    #[test]
    fn two_round_readout_is_unbiased_on_diagonal_states(w in prop::array::uniform4(0.05..1.0f64), seed in 0u64..1000) {
        let total: f64 = w.iter().sum();
        let p = w.map(|v| v / total);
        let rho = CMat::from_diagonal(&DVector::from_iterator(4, p.iter().map(|&v| c(v, 0.0))));
        let state = QuantumState::mixed(rho).unwrap();
        let mut errors = Vec::new();
        for shots in [1_000u64, 10_000, 100_000] {
            let est = measurement::two_round_readout(&state, &ReadoutModel::ideal(shots), seed).unwrap();
            let err = est.probabilities.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 6.0 / (shots as f64).sqrt());
            errors.push(err);
        }
        prop_assert!(errors[2] < 6.0 / 1_000f64.sqrt());
    }

    #[test]
    fn qudit_shift_maps_each_state_to_the_next(d in prop::sample::select(vec![3usize, 4, 6, 8])) {
        let ord = qudit::table_ordering(d).unwrap();
        let x = qudit::ideal_sequence(&qudit::qudit_x(d, None).unwrap()).unwrap();
        for k in 0..d {
            let from = ord[k].computational_index().unwrap();
            let to = ord[(k + 1) % d].computational_index().unwrap();
            prop_assert!((x[(to, from)] - c(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn ccr_ideal_is_identity_outside_its_block(
        t in prop::sample::select(Transition::all()),
        theta in -PI..PI,
        phi in -PI..PI,
    ) {
        let g = GateSpec::ccr(t, theta, phi);
        let u = gates::ideal_unitary(&g).unwrap();
        let l = t.lower().computational_index().unwrap();
        let h = t.upper().computational_index().unwrap();
        for s in 0..8 {
            if s != l && s != h {
                prop_assert!((u[(s, s)] - c(1.0, 0.0)).norm() < 1e-14);
            }
        }
        prop_assert!(linalg::unitarity_error(&u) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn propagators_are_unitary_and_compose(
        amp in 1e6..10e6f64,
        detuning in -20e6..20e6f64,
        phase in 0.0..2.0 * PI,
        split in 0.1..0.9f64,
    ) {
        let p = ModeParams::measured_device();
        let space = SpaceSpec::uniform(3).unwrap();
        let system = System::new(&p, space);
        let w = gates::frequency_of(&p, "0B0".parse().unwrap()) + detuning;
        let tone = Tone::new(w, phase, Envelope::cosine(amp, 40e-9).unwrap(), 0.0);
        let sched = Schedule::new(vec![tone], vec![], 40e-9).unwrap();
        let cfg = EvolutionConfig::default();
        let full = dynamics::propagate_unitary(&system, &sched, &cfg).unwrap();
        prop_assert!(linalg::unitarity_error(&full) < 1e-8);
        let tm = split * 40e-9;
        let first = dynamics::propagate_unitary_between(&system, &sched, &cfg, 0.0, tm).unwrap();
        let second = dynamics::propagate_unitary_between(&system, &sched, &cfg, tm, 40e-9).unwrap();
        prop_assert!(linalg::max_abs(&(&second * &first - &full)) < 1e-7);
    }

    #[test]
    fn pure_dephasing_keeps_populations_and_decays_coherences(
        t2 in prop::array::uniform3(5e-6..50e-6f64),
        psi in pure_state(8),
    ) {
        let p = ModeParams::measured_device();
        let space = SpaceSpec::qubits();
        let system = System::new(&p, space);
        // no T1: all decoherence is pure dephasing
        let noise = NoiseChannels { t1: [None; 3], t2: t2.map(Some), quasi_static_sigma: [0.0; 3] };
        let sched = Schedule::empty(20e-6);
        let times: Vec<f64> = (1..=5).map(|k| k as f64 * 4e-6).collect();
        let rho0 = QuantumState::pure(psi.clone()).unwrap();
        let traj = dynamics::lindblad_trajectory(&system, &sched, &noise, &EvolutionConfig::default(), &rho0, &times).unwrap();
        let d0 = rho0.density_matrix();
        let mut prev = d0.clone();
        for rho in &traj {
            for i in 0..8 {
                prop_assert!((rho[(i, i)].re - d0[(i, i)].re).abs() < 1e-10);
                for j in 0..8 {
                    if i != j {
                        prop_assert!(rho[(i, j)].norm() <= prev[(i, j)].norm() + 1e-12);
                    }
                }
            }
            prev = rho.clone();
        }
    }
}

#[test]
fn measure_counts_follow_confusion_times_born() {
    let psi = CVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.48), c(0.0, 0.0), c(0.64, 0.0)]).normalize();
    let state = QuantumState::pure(psi).unwrap();
    let model = ReadoutModel::default_device();
    let expected = model.assignment.push(&measurement::born_probabilities(&state, None).unwrap());
    let n = model.shots as f64;
    // 3 degrees of freedom, p = 0.001 critical value
    let critical = 16.27;
    for seed in 0..5 {
        let counts = measurement::measure_counts(&state, None, &model, seed).unwrap();
        let chi2: f64 = counts.iter().zip(&expected).map(|(&o, &e)| (o as f64 - n * e).powi(2) / (n * e)).sum();
        assert!(chi2 < critical, "seed {seed}: chi2 = {chi2}");
    }
}

#[test]
fn spam_monotonicity_holds_on_a_fixed_ensemble() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for k in 0..20 {
        let h = CMat::from_fn(4, 4, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let u = linalg::propagator(&linalg::hermitian_part(&h), 0.3);
        let truth = ChiMatrix::new(tomography::superop_to_chi(&linalg::unitary_superop(&u)), false);
        let err = rng.random_range(0.0..0.10);
        let noise = QptNoise { confusion: Some(ConfusionMatrix::symmetric(4, err).unwrap()), ..Default::default() };
        let gate = QptRuns::simulate(&truth.superop(), &noise, 1).unwrap();
        let reference = QptRuns::simulate(&linalg::identity(16), &noise, 2).unwrap();
        let res = tomography::qpt(&gate, Some(&reference)).unwrap();
        let raw = tomography::process_fidelity(&res.raw, &truth).unwrap();
        let corrected = tomography::process_fidelity(res.corrected.as_ref().unwrap(), &truth).unwrap();
        assert!(corrected >= raw - 1e-12, "channel {k}: {corrected} < {raw}");
    }
}

#[test]
fn ideal_readout_matrix_is_identity() {
    let cm = measurement::build_confusion(&ReadoutModel::ideal(1000), 0).unwrap();
    assert_eq!(cm.m, DMatrix::identity(4, 4));
}
