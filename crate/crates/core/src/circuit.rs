//! Lumped four-node circuit to effective Kerr-Hamiltonian coefficients.
//!
//! Nodes are numbered 1..=4 in the public API and 0..=3 internally. The four
//! Josephson junctions sit on the ring pairs 12, 23, 34 and 41.

use std::collections::BTreeMap;

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, SpaceSpec};
use crate::labels::{Mode, Transition};

/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced flux quantum ħ / 2e (Wb).
pub const REDUCED_FLUX_QUANTUM: f64 = PLANCK / (2.0 * std::f64::consts::PI) / (2.0 * ELEMENTARY_CHARGE);
/// Converts a Josephson energy in hertz into the harmonic stiffness
/// `1/L_J = E_J / φ0²` (1/H) used for the linearised potential.
pub const STIFFNESS_PER_HZ: f64 = PLANCK / (REDUCED_FLUX_QUANTUM * REDUCED_FLUX_QUANTUM);

/// Junction pairs around the ring, zero-based.
pub const RING_PAIRS: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (0, 3)];

/// Relative threshold beyond which a near-symmetric capacitance pair is flagged.
pub const ASYMMETRY_THRESHOLD: f64 = 0.10;
/// Relative tolerance for calling two non-zero mode frequencies degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelWarning {
    DegenerateSpectrum { frequencies_hz: [f64; 2] },
    Asymmetry { pair: String, relative_difference: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    /// Farads; only entries with `i < j` are read.
    pub pairwise_capacitance: [[f64; 4]; 4],
    /// Farads, node to ground.
    pub ground_capacitance: [f64; 4],
    /// Hertz; only the four ring pairs may be non-zero.
    pub josephson_energy: [[f64; 4]; 4],
}

impl CircuitSpec {
    pub fn new(
        pairwise_capacitance: [[f64; 4]; 4],
        ground_capacitance: [f64; 4],
        josephson_energy: [[f64; 4]; 4],
    ) -> Result<Self> {
        let spec = CircuitSpec { pairwise_capacitance, ground_capacitance, josephson_energy };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec with the same Josephson energy on all four ring junctions.
    pub fn with_uniform_junctions(
        pairwise_capacitance: [[f64; 4]; 4],
        ground_capacitance: [f64; 4],
        ej_hz: f64,
    ) -> Result<Self> {
        let mut ej = [[0.0; 4]; 4];
        for (i, j) in RING_PAIRS {
            ej[i][j] = ej_hz;
        }
        Self::new(pairwise_capacitance, ground_capacitance, ej)
    }

    /// The device capacitances from electromagnetic simulation of the
    /// planar layout, with `E_J/h = 8.16 GHz` on every junction.
    pub fn planar_reference() -> Self {
        let ff = 1e-15;
        let mut pair = [[0.0; 4]; 4];
        pair[0][1] = 21.0 * ff;
        pair[0][2] = 4.0 * ff;
        pair[0][3] = 21.0 * ff;
        pair[1][2] = 21.0 * ff;
        pair[1][3] = 3.0 * ff;
        pair[2][3] = 21.0 * ff;
        let ground = [46.0 * ff, 30.0 * ff, 53.0 * ff, 36.0 * ff];
        Self::with_uniform_junctions(pair, ground, 8.16e9).expect("reference spec is valid")
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            let g = self.ground_capacitance[i];
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidCircuit(format!("ground capacitance of node {} must be > 0", i + 1)));
            }
            for j in (i + 1)..4 {
                let cij = self.pairwise_capacitance[i][j];
                if !(cij.is_finite() && cij >= 0.0) {
                    return Err(Error::InvalidCircuit(format!("capacitance C{}{} must be >= 0", i + 1, j + 1)));
                }
                let ej = self.josephson_energy[i][j];
                let on_ring = RING_PAIRS.contains(&(i, j));
                if !ej.is_finite() || ej < 0.0 {
                    return Err(Error::InvalidCircuit(format!("E_J{}{} must be finite and >= 0", i + 1, j + 1)));
                }
                if !on_ring && ej != 0.0 {
                    return Err(Error::InvalidCircuit(format!("junction {}{} is not on the ring", i + 1, j + 1)));
                }
                if on_ring && ej == 0.0 {
                    return Err(Error::InvalidCircuit(format!("ring junction {}{} has zero E_J", i + 1, j + 1)));
                }
            }
            for j in 0..=i {
                if self.josephson_energy[i][j] != 0.0 {
                    return Err(Error::InvalidCircuit("E_J must be given on the upper triangle (i < j)".into()));
                }
            }
        }
        Ok(())
    }

    /// Pairwise capacitance between zero-based nodes, symmetric in its arguments.
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.pairwise_capacitance[i.min(j)][i.max(j)]
        }
    }

    pub fn junction(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.josephson_energy[i.min(j)][i.max(j)]
        }
    }

    pub fn mean_ring_ej(&self) -> f64 {
        RING_PAIRS.iter().map(|&(i, j)| self.junction(i, j)).sum::<f64>() / 4.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellMatrices {
    /// Farads.
    pub capacitance: Matrix4<f64>,
    /// Hertz: graph Laplacian of the junction energies.
    pub inductive: Matrix4<f64>,
}

pub fn build_maxwell(spec: &CircuitSpec) -> Result<MaxwellMatrices> {
    spec.validate()?;
    let mut cap = Matrix4::zeros();
    let mut lap = Matrix4::zeros();
    for k in 0..4 {
        cap[(k, k)] = spec.ground_capacitance[k];
        for l in 0..4 {
            if l == k {
                continue;
            }
            cap[(k, k)] += spec.pair(k, l);
            cap[(k, l)] = -spec.pair(k, l);
            lap[(k, k)] += spec.junction(k, l);
            lap[(k, l)] = -spec.junction(k, l);
        }
    }
    if cap.cholesky().is_none() {
        return Err(Error::NonPositiveDefinite);
    }
    Ok(MaxwellMatrices { capacitance: cap, inductive: lap })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalModes {
    /// Hertz, ascending; the first entry is the gauge (zero) mode.
    pub frequencies: [f64; 4],
    /// Columns are node-flux patterns normalised so that `Mᵀ C M = 1`.
    pub mode_vectors: Matrix4<f64>,
    pub warnings: Vec<ModelWarning>,
}

impl NormalModes {
    /// The three dynamical mode frequencies in ascending order (A, B, C).
    pub fn dynamical(&self) -> [f64; 3] {
        [self.frequencies[1], self.frequencies[2], self.frequencies[3]]
    }
}

/// Simultaneous diagonalisation of the capacitance and inductive matrices.
///
/// Uses `M = C^{-1/2} A` with `A` the orthogonal eigenbasis of
/// `Ψ = C^{-1/2} (E_L / φ0²) C^{-1/2}`. The gauge mode is placed first.
pub fn normal_modes(m: &MaxwellMatrices) -> Result<NormalModes> {
    let c_eig = SymmetricEigen::new(m.capacitance);
    if c_eig.eigenvalues.iter().any(|&v| v <= 0.0) {
        return Err(Error::NonPositiveDefinite);
    }
    let inv_sqrt = c_eig.eigenvectors
        * Matrix4::from_diagonal(&c_eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * c_eig.eigenvectors.transpose();
    let stiffness = m.inductive * STIFFNESS_PER_HZ;
    let psi = inv_sqrt * stiffness * inv_sqrt;
    let psi = (psi + psi.transpose()) * 0.5;
    let eig = SymmetricEigen::new(psi);

    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut frequencies = [0.0; 4];
    let mut a = Matrix4::zeros();
    for (k, &i) in order.iter().enumerate() {
        frequencies[k] = eig.eigenvalues[i].max(0.0).sqrt() / two_pi;
        a.set_column(k, &eig.eigenvectors.column(i));
    }
    // the Laplacian has an exact null vector; clamp round-off
    let fmax = frequencies[3];
    if frequencies[0] < 1e-6 * fmax {
        frequencies[0] = 0.0;
    }
    let mut warnings = Vec::new();
    for k in 1..3 {
        let (f1, f2) = (frequencies[k], frequencies[k + 1]);
        if (f2 - f1).abs() <= DEGENERACY_TOLERANCE * f2 {
            warnings.push(ModelWarning::DegenerateSpectrum { frequencies_hz: [f1, f2] });
            log::warn!("degenerate normal modes at {f1:.6e} Hz and {f2:.6e} Hz");
        }
    }
    Ok(NormalModes { frequencies, mode_vectors: inv_sqrt * a, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingEnergies {
    /// Hertz, modes A, B, C.
    pub energies: [f64; 3],
    pub warnings: Vec<ModelWarning>,
}

fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b).abs() / (0.5 * (a + b))
}

/// Closed-form charging energies of the three modes in the near-symmetric
/// regime `C11 ≈ C33`, `C22 ≈ C44`.
///
/// `C_A = C13`, `C_B = C24` and the neighbour capacitance `C_C` is the mean
/// of C12, C23, C34 and C41.
pub fn effective_charging_energies(spec: &CircuitSpec) -> ChargingEnergies {
    let e2 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
    let g = spec.ground_capacitance;
    let c_a = spec.pair(0, 2);
    let c_b = spec.pair(1, 3);
    let c_c = RING_PAIRS.iter().map(|&(i, j)| spec.pair(i, j)).sum::<f64>() / 4.0;
    let (c11, c22) = (g[0], g[1]);

    let to_hz = |cap: f64| e2 / cap / PLANCK;
    let e_a = to_hz(2.0 * (c_c + c_a) + c11);
    let e_b = to_hz(2.0 * (c_c + c_b) + c22);
    let e_c = to_hz(4.0 * c_c + c11 + c22 + (16.0 * c_c * c_c + (c11 - c22).powi(2)).sqrt());

    let mut warnings = Vec::new();
    for (name, x, y) in [("C11/C33", g[0], g[2]), ("C22/C44", g[1], g[3])] {
        let rel = relative_difference(x, y);
        if rel > ASYMMETRY_THRESHOLD {
            log::warn!("{name} differ by {:.1}%: outside the near-symmetric regime", rel * 100.0);
            warnings.push(ModelWarning::Asymmetry { pair: name.to_string(), relative_difference: rel });
        }
    }
    ChargingEnergies { energies: [e_a, e_b, e_c], warnings }
}

/// Coefficients of `H = Σ (ω_μ n_μ - J_μ n_μ²) - 2 Σ_{μ>ν} J_μν n_μ n_ν`, in hertz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub omega: [f64; 3],
    pub self_kerr: [f64; 3],
    /// Ordered AB, BC, CA.
    pub cross_kerr: [f64; 3],
    pub charging: [f64; 3],
    pub josephson: f64,
}

impl ModeParams {
    pub fn new(omega: [f64; 3], self_kerr: [f64; 3], cross_kerr: [f64; 3]) -> Self {
        ModeParams { omega, self_kerr, cross_kerr, charging: [0.0; 3], josephson: 0.0 }
    }

    /// Measured device parameters: mode frequency, `2J_μ` and `2J_μν`.
    pub fn measured_device() -> Self {
        ModeParams::new(
            [4.709e9, 5.174e9, 5.940e9],
            [118e6 / 2.0, 129e6 / 2.0, 164e6 / 2.0],
            [211e6 / 2.0, 270e6 / 2.0, 243e6 / 2.0],
        )
    }

    /// Cross-Kerr coefficient between two distinct modes.
    pub fn cross(&self, a: Mode, b: Mode) -> f64 {
        match (a.min(b), a.max(b)) {
            (Mode::A, Mode::B) => self.cross_kerr[0],
            (Mode::B, Mode::C) => self.cross_kerr[1],
            (Mode::A, Mode::C) => self.cross_kerr[2],
            _ => 0.0,
        }
    }

    /// Energy of a Fock state read directly off the Hamiltonian.
    pub fn energy(&self, n: [u8; 3]) -> f64 {
        let n = n.map(f64::from);
        let mut e = 0.0;
        for k in 0..3 {
            e += self.omega[k] * n[k] - self.self_kerr[k] * n[k] * n[k];
        }
        e - 2.0 * (self.cross_kerr[0] * n[0] * n[1] + self.cross_kerr[1] * n[1] * n[2] + self.cross_kerr[2] * n[2] * n[0])
    }

    /// Same coefficients with every mode frequency shifted (quasi-static offsets).
    pub fn with_offsets(&self, offsets: [f64; 3]) -> Self {
        let mut p = *self;
        for k in 0..3 {
            p.omega[k] += offsets[k];
        }
        p
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "omega_ghz": self.omega.map(|w| w / 1e9),
            "self_kerr_mhz": self.self_kerr.map(|j| j / 1e6),
            "cross_kerr_mhz": self.cross_kerr.map(|j| j / 1e6),
            "ec_mhz": self.charging.map(|e| e / 1e6),
        })
    }
}

/// Evaluates the closed-form frequency and Kerr expressions as written.
///
/// `β_μ = J_μ + J_μν + J_μη` and `ω_A = √(8 E_J E_CA) - β_A`,
/// `ω_B = √(8 E_J E_CB) - β_B`, `ω_C = √(32 E_J E_CC) - β_C`.
pub fn mode_params(spec: &CircuitSpec) -> ModeParams {
    let ec = effective_charging_energies(spec).energies;
    let ej = spec.mean_ring_ej();
    let [e_a, e_b, e_c] = ec;
    let self_kerr = [e_a / 8.0, e_b / 8.0, e_c / 2.0];
    let j_ab = (e_a * e_b).sqrt() / 4.0;
    let j_bc = (e_c * e_b).sqrt() / 2.0;
    let j_ca = (e_a * e_c).sqrt() / 2.0;
    let beta = [
        self_kerr[0] + j_ab + j_ca,
        self_kerr[1] + j_ab + j_bc,
        self_kerr[2] + j_bc + j_ca,
    ];
    let omega = [
        (8.0 * ej * e_a).sqrt() - beta[0],
        (8.0 * ej * e_b).sqrt() - beta[1],
        (32.0 * ej * e_c).sqrt() - beta[2],
    ];
    ModeParams { omega, self_kerr, cross_kerr: [j_ab, j_bc, j_ca], charging: ec, josephson: ej }
}

/// The twelve state-dependent 0 -> 1 frequencies, evaluated as energy
/// differences of the diagonal Hamiltonian.
pub fn conditional_frequencies(p: &ModeParams) -> BTreeMap<Transition, f64> {
    let space = SpaceSpec::qubits();
    let h = hilbert::static_hamiltonian(p, &space);
    Transition::all()
        .into_iter()
        .map(|t| {
            let f = hilbert::transition_frequency(&h, &space, t.lower(), t.upper()).expect("computational labels");
            (t, f)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_diagonal_sums_touching_capacitances() {
        let m = build_maxwell(&CircuitSpec::planar_reference()).unwrap();
        assert_relative_eq!(m.capacitance[(0, 0)], (46.0 + 21.0 + 4.0 + 21.0) * 1e-15, max_relative = 1e-12);
        assert_relative_eq!(m.capacitance[(0, 1)], -21.0e-15, max_relative = 1e-12);
    }

    #[test]
    fn diagonal_case_gives_scaled_identity() {
        let spec = CircuitSpec::with_uniform_junctions([[0.0; 4]; 4], [5e-14; 4], 8e9).unwrap();
        let m = build_maxwell(&spec).unwrap();
        assert!((m.capacitance - Matrix4::identity() * 5e-14).abs().max() < 1e-28);
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let m = build_maxwell(&CircuitSpec::planar_reference()).unwrap();
        for r in 0..4 {
            assert_eq!(m.inductive.row(r).sum(), 0.0);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut pair = [[0.0; 4]; 4];
        pair[0][1] = -1e-15;
        assert!(CircuitSpec::with_uniform_junctions(pair, [1e-14; 4], 8e9).is_err());
        assert!(CircuitSpec::with_uniform_junctions([[0.0; 4]; 4], [1e-14, 0.0, 1e-14, 1e-14], 8e9).is_err());
        let mut ej = [[0.0; 4]; 4];
        for (i, j) in RING_PAIRS {
            ej[i][j] = 8e9;
        }
        ej[0][2] = 1e9;
        assert!(CircuitSpec::new([[0.0; 4]; 4], [1e-14; 4], ej).is_err());
    }

    #[test]
    fn non_positive_definite_capacitance_is_an_error() {
        let spec = CircuitSpec {
            pairwise_capacitance: [[0.0; 4]; 4],
            ground_capacitance: [1e-14, 1e-14, 1e-14, -5e-14],
            josephson_energy: CircuitSpec::planar_reference().josephson_energy,
        };
        // validation is bypassed deliberately; build_maxwell re-validates first
        assert!(build_maxwell(&spec).is_err());
    }

    #[test]
    fn symmetric_square_has_degenerate_dipoles() {
        let mut pair = [[0.0; 4]; 4];
        for (i, j) in RING_PAIRS {
            pair[i][j] = 20e-15;
        }
        pair[0][2] = 4e-15;
        pair[1][3] = 4e-15;
        let spec = CircuitSpec::with_uniform_junctions(pair, [40e-15; 4], 8e9).unwrap();
        let modes = normal_modes(&build_maxwell(&spec).unwrap()).unwrap();
        assert_eq!(modes.frequencies[0], 0.0);
        assert_relative_eq!(modes.frequencies[1], modes.frequencies[2], max_relative = 1e-9);
        assert!(matches!(modes.warnings[0], ModelWarning::DegenerateSpectrum { .. }));
    }

    #[test]
    fn charging_energy_zero_neighbour_limit() {
        let mut pair = [[0.0; 4]; 4];
        pair[0][2] = 0.0;
        let spec = CircuitSpec::with_uniform_junctions(pair, [50e-15, 50e-15, 50e-15, 50e-15], 8e9).unwrap();
        let ec = effective_charging_energies(&spec);
        let expected = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * 50e-15) / PLANCK;
        assert_relative_eq!(ec.energies[2], expected, max_relative = 1e-12);
        assert!(ec.warnings.is_empty());
    }

    #[test]
    fn symmetric_charging_energies_coincide() {
        let mut pair = [[0.0; 4]; 4];
        for (i, j) in RING_PAIRS {
            pair[i][j] = 21e-15;
        }
        pair[0][2] = 4e-15;
        pair[1][3] = 4e-15;
        let spec = CircuitSpec::with_uniform_junctions(pair, [40e-15; 4], 8e9).unwrap();
        let p = mode_params(&spec);
        assert_relative_eq!(p.charging[0], p.charging[1], max_relative = 1e-14);
        assert_relative_eq!(p.self_kerr[0], p.self_kerr[1], max_relative = 1e-14);
        assert_relative_eq!(p.cross_kerr[2], p.cross_kerr[1], max_relative = 1e-14);
    }

    #[test]
    fn reference_spec_flags_asymmetry() {
        let ec = effective_charging_energies(&CircuitSpec::planar_reference());
        assert_eq!(ec.warnings.len(), 2);
    }

    #[test]
    fn measured_splittings() {
        let p = ModeParams::measured_device();
        let f = conditional_frequencies(&p);
        let a: Transition = "0B0".parse().unwrap();
        let b: Transition = "1B0".parse().unwrap();
        assert_relative_eq!(f[&a] - f[&b], 211e6, max_relative = 1e-12);
    }

    #[test]
    fn decoupled_limit_collapses_conditional_frequencies() {
        let p = ModeParams::new([4.7e9, 5.2e9, 5.9e9], [50e6, 60e6, 80e6], [0.0; 3]);
        let f = conditional_frequencies(&p);
        for mode in Mode::ALL {
            let vals: Vec<f64> = f.iter().filter(|(t, _)| t.mode == mode).map(|(_, v)| *v).collect();
            assert!(vals.iter().all(|v| (v - vals[0]).abs() < 1e-3));
        }
    }
}
