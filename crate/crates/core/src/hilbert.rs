//! Truncated Fock space of the three modes and the static Kerr Hamiltonian.
//!
//! Basis states are ordered with mode A slowest:
//! `index = (n_A * L_B + n_B) * L_C + n_C`.

use serde::{Deserialize, Serialize};

use crate::circuit::ModeParams;
use crate::error::{Error, Result};
use crate::labels::{BasisLabel, Mode};
use crate::linalg::{self, CMat, CVec, ONE, ZERO};
use crate::Complex64;

/// A dense complex operator on the truncated space.
pub type Operator = CMat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceSpec {
    levels: [usize; 3],
}

impl Default for SpaceSpec {
    fn default() -> Self {
        SpaceSpec::qubits()
    }
}

impl SpaceSpec {
    pub fn new(levels: [usize; 3]) -> Result<Self> {
        if levels.iter().any(|&l| !(2..=4).contains(&l)) {
            return Err(Error::InvalidSpace(format!("levels per mode must be in 2..=4, got {levels:?}")));
        }
        Ok(SpaceSpec { levels })
    }

    pub fn uniform(levels: usize) -> Result<Self> {
        Self::new([levels; 3])
    }

    /// Two levels per mode: the three-qubit computational space.
    pub fn qubits() -> Self {
        SpaceSpec { levels: [2; 3] }
    }

    pub fn levels(&self) -> [usize; 3] {
        self.levels
    }

    pub fn levels_of(&self, mode: Mode) -> usize {
        self.levels[mode.index()]
    }

    pub fn dim(&self) -> usize {
        self.levels.iter().product()
    }

    pub fn contains(&self, label: BasisLabel) -> bool {
        Mode::ALL.iter().all(|&m| (label.get(m) as usize) < self.levels_of(m))
    }

    pub fn index_of(&self, label: BasisLabel) -> Result<usize> {
        if !self.contains(label) {
            return Err(Error::InvalidLabel(format!("{label} lies outside the truncated space {:?}", self.levels)));
        }
        let [la, lb, lc] = self.levels;
        let _ = la;
        let [na, nb, nc] = [label.get(Mode::A), label.get(Mode::B), label.get(Mode::C)].map(usize::from);
        Ok((na * lb + nb) * lc + nc)
    }

    pub fn label_of(&self, index: usize) -> BasisLabel {
        let [_, lb, lc] = self.levels;
        let nc = index % lc;
        let nb = (index / lc) % lb;
        let na = index / (lb * lc);
        BasisLabel::new(na as u8, nb as u8, nc as u8)
    }

    pub fn labels(&self) -> impl Iterator<Item = BasisLabel> + '_ {
        (0..self.dim()).map(|i| self.label_of(i))
    }

    /// Indices of the eight computational states, in computational order.
    pub fn computational_indices(&self) -> [usize; 8] {
        let mut out = [0; 8];
        for (k, label) in BasisLabel::computational().enumerate() {
            out[k] = self.index_of(label).expect("computational states always fit");
        }
        out
    }

    /// Restricts an operator to the computational subspace.
    pub fn project_computational(&self, op: &Operator) -> Operator {
        let idx = self.computational_indices();
        CMat::from_fn(8, 8, |r, c| op[(idx[r], idx[c])])
    }

    /// Embeds an 8×8 computational operator, with zeros elsewhere.
    pub fn embed_computational(&self, op: &Operator) -> Operator {
        let idx = self.computational_indices();
        let mut out = CMat::zeros(self.dim(), self.dim());
        for r in 0..8 {
            for c in 0..8 {
                out[(idx[r], idx[c])] = op[(r, c)];
            }
        }
        out
    }

    pub fn basis_vector(&self, label: BasisLabel) -> Result<CVec> {
        let mut v = CVec::zeros(self.dim());
        v[self.index_of(label)?] = ONE;
        Ok(v)
    }
}

fn single_mode(space: &SpaceSpec, mode: Mode, f: impl Fn(usize, usize) -> Complex64) -> Operator {
    let factors: Vec<CMat> = Mode::ALL
        .iter()
        .map(|&m| {
            let l = space.levels_of(m);
            if m == mode {
                CMat::from_fn(l, l, &f)
            } else {
                linalg::identity(l)
            }
        })
        .collect();
    linalg::kron(&linalg::kron(&factors[0], &factors[1]), &factors[2])
}

pub fn number_op(space: &SpaceSpec, mode: Mode) -> Operator {
    single_mode(space, mode, |r, c| if r == c { Complex64::new(r as f64, 0.0) } else { ZERO })
}

pub fn lowering_op(space: &SpaceSpec, mode: Mode) -> Operator {
    single_mode(space, mode, |r, c| if c == r + 1 { Complex64::new((c as f64).sqrt(), 0.0) } else { ZERO })
}

/// Diagonal energies (Hz) of every basis state, in basis order.
pub fn energies(p: &ModeParams, space: &SpaceSpec) -> Vec<f64> {
    space
        .labels()
        .map(|l| p.energy([l.get(Mode::A), l.get(Mode::B), l.get(Mode::C)]))
        .collect()
}

/// `H = Σ (ω_μ n_μ - J_μ n_μ²) - 2 Σ_{μ>ν} J_μν n_μ n_ν`, built from number operators.
pub fn static_hamiltonian(p: &ModeParams, space: &SpaceSpec) -> Operator {
    let n: Vec<Operator> = Mode::ALL.iter().map(|&m| number_op(space, m)).collect();
    let dim = space.dim();
    let mut h = CMat::zeros(dim, dim);
    for k in 0..3 {
        h += &n[k] * Complex64::from(p.omega[k]);
        h -= (&n[k] * &n[k]) * Complex64::from(p.self_kerr[k]);
    }
    let pairs = [(0, 1, 0), (1, 2, 1), (2, 0, 2)];
    for (a, b, j) in pairs {
        h -= (&n[a] * &n[b]) * Complex64::from(2.0 * p.cross_kerr[j]);
    }
    h
}

/// `E(to) - E(from)` read off the diagonal of `h`.
pub fn transition_frequency(h: &Operator, space: &SpaceSpec, from: BasisLabel, to: BasisLabel) -> Result<f64> {
    let i = space.index_of(from)?;
    let j = space.index_of(to)?;
    if h.nrows() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), found: h.nrows() });
    }
    Ok(h[(j, j)].re - h[(i, i)].re)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(CVec),
    Mixed(CMat),
}

impl QuantumState {
    pub fn pure(v: CVec) -> Result<Self> {
        let s = QuantumState::Pure(v);
        s.validate()?;
        Ok(s)
    }

    pub fn mixed(rho: CMat) -> Result<Self> {
        let s = QuantumState::Mixed(rho);
        s.validate()?;
        Ok(s)
    }

    pub fn basis(space: &SpaceSpec, label: BasisLabel) -> Result<Self> {
        Ok(QuantumState::Pure(space.basis_vector(label)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(v) => v.len(),
            QuantumState::Mixed(r) => r.nrows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            QuantumState::Pure(v) => {
                let norm = v.norm();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidState(format!("state norm {norm} differs from 1")));
                }
            }
            QuantumState::Mixed(r) => {
                if !r.is_square() {
                    return Err(Error::InvalidState("density matrix must be square".into()));
                }
                if !linalg::is_hermitian(r, 1e-9) {
                    return Err(Error::InvalidState("density matrix is not Hermitian".into()));
                }
                let tr = linalg::trace(r);
                if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
                    return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
                }
                let (vals, _) = linalg::eigh(r);
                if vals[0] < -1e-8 {
                    return Err(Error::InvalidState(format!("negative eigenvalue {}", vals[0])));
                }
            }
        }
        Ok(())
    }

    pub fn density_matrix(&self) -> CMat {
        match self {
            QuantumState::Pure(v) => v * v.adjoint(),
            QuantumState::Mixed(r) => r.clone(),
        }
    }

    /// Diagonal of the density matrix.
    pub fn populations(&self) -> Vec<f64> {
        match self {
            QuantumState::Pure(v) => v.iter().map(|a| a.norm_sqr()).collect(),
            QuantumState::Mixed(r) => (0..r.nrows()).map(|i| r[(i, i)].re).collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            QuantumState::Pure(v) => serde_json::json!({
                "kind": "pure",
                "amplitudes": v.iter().map(|a| [a.re, a.im]).collect::<Vec<_>>(),
            }),
            QuantumState::Mixed(r) => serde_json::json!({
                "kind": "mixed",
                "rho": crate::serde_complex::to_nested(r),
            }),
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let bad = |m: &str| Error::InvalidState(m.to_string());
        match value.get("kind").and_then(|k| k.as_str()) {
            Some("pure") => {
                let amps: Vec<[f64; 2]> = serde_json::from_value(value["amplitudes"].clone()).map_err(|e| bad(&e.to_string()))?;
                QuantumState::pure(CVec::from_iterator(amps.len(), amps.iter().map(|a| Complex64::new(a[0], a[1]))))
            }
            Some("mixed") => {
                let rows: Vec<Vec<[f64; 2]>> = serde_json::from_value(value["rho"].clone()).map_err(|e| bad(&e.to_string()))?;
                QuantumState::mixed(crate::serde_complex::from_nested(&rows)?)
            }
            _ => Err(bad("expected kind \"pure\" or \"mixed\"")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lbl(s: &str) -> BasisLabel {
        s.parse().unwrap()
    }

    #[test]
    fn number_op_of_b_marks_excited_b() {
        let s = SpaceSpec::qubits();
        let n = number_op(&s, Mode::B);
        for i in 0..8 {
            let expected = if s.label_of(i).get(Mode::B) == 1 { 1.0 } else { 0.0 };
            assert_eq!(n[(i, i)].re, expected);
        }
        assert_eq!(linalg::max_abs(&(&n - CMat::from_diagonal(&n.diagonal()))), 0.0);
    }

    #[test]
    fn lowering_acts_on_fock_states() {
        let s = SpaceSpec::qubits();
        for m in Mode::ALL {
            let a = lowering_op(&s, m);
            let one = s.basis_vector(BasisLabel::new(0, 0, 0).with(m, 1)).unwrap();
            let zero = s.basis_vector(BasisLabel::new(0, 0, 0)).unwrap();
            assert!((&a * &one - &zero).norm() < 1e-15);
            assert!((&a * &zero).norm() < 1e-15);
            let n = number_op(&s, m);
            assert!(linalg::max_abs(&(a.adjoint() * &a - n)) < 1e-15);
        }
    }

    #[test]
    fn canonical_commutator_below_edge() {
        let s = SpaceSpec::uniform(4).unwrap();
        let a = lowering_op(&s, Mode::C);
        let comm = linalg::commutator(&a, &a.adjoint());
        for i in 0..s.dim() {
            if s.label_of(i).get(Mode::C) < 3 {
                assert!((comm[(i, i)] - ONE).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn energy_of_110() {
        let p = ModeParams::measured_device();
        let s = SpaceSpec::qubits();
        let h = static_hamiltonian(&p, &s);
        let e = h[(s.index_of(lbl("110")).unwrap(), s.index_of(lbl("110")).unwrap())].re;
        let expected = p.omega[0] - p.self_kerr[0] + p.omega[1] - p.self_kerr[1] - 2.0 * p.cross_kerr[0];
        assert_relative_eq!(e, expected, max_relative = 1e-14);
        assert_eq!(h[(0, 0)].re, 0.0);
    }

    #[test]
    fn transition_conventions() {
        let p = ModeParams::measured_device();
        let s = SpaceSpec::qubits();
        let h = static_hamiltonian(&p, &s);
        let f = |a: &str, b: &str| transition_frequency(&h, &s, lbl(a), lbl(b)).unwrap();
        assert_relative_eq!(f("000", "010") - f("100", "110"), 211e6, max_relative = 1e-12);
        assert_eq!(f("101", "101"), 0.0);
        assert_relative_eq!(f("000", "010"), p.omega[1] - p.self_kerr[1], max_relative = 1e-15);
    }

    #[test]
    fn anharmonicity_readback() {
        let p = ModeParams::measured_device();
        let s = SpaceSpec::uniform(3).unwrap();
        let h = static_hamiltonian(&p, &s);
        let f01 = transition_frequency(&h, &s, lbl("000"), lbl("001")).unwrap();
        let f12 = transition_frequency(&h, &s, lbl("001"), lbl("002")).unwrap();
        assert_relative_eq!(f12 - f01, -2.0 * p.self_kerr[2], max_relative = 1e-9);
    }

    #[test]
    fn space_validation() {
        assert!(SpaceSpec::new([1, 2, 2]).is_err());
        assert!(SpaceSpec::new([5, 2, 2]).is_err());
        assert_eq!(SpaceSpec::uniform(4).unwrap().dim(), 64);
    }

    #[test]
    fn state_json_roundtrip() {
        let s = SpaceSpec::qubits();
        let v = s.basis_vector(lbl("101")).unwrap();
        let st = QuantumState::pure(v).unwrap();
        let back = QuantumState::from_json(&st.to_json()).unwrap();
        assert_eq!(st, back);
        let mixed = QuantumState::mixed(st.density_matrix()).unwrap();
        assert_eq!(QuantumState::from_json(&mixed.to_json()).unwrap(), mixed);
        assert!(QuantumState::pure(CVec::from_element(8, ONE)).is_err());
    }
}
