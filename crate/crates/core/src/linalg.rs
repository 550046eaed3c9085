//! Dense complex linear-algebra helpers shared by the simulator and the
//! tomography routines.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn from_real(m: &DMatrix<f64>) -> CMat {
    m.map(|x| c(x, 0.0))
}

pub fn diag(entries: &[Complex64]) -> CMat {
    CMat::from_diagonal(&CVec::from_column_slice(entries))
}

pub fn trace(m: &CMat) -> Complex64 {
    m.trace()
}

/// Largest absolute entry.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.adjoint())) <= tol
}

/// `max |U†U - 1|`.
pub fn unitarity_error(u: &CMat) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - identity(n)))
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let eig = h.symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Apply `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_map(m: &CMat, f: impl Fn(f64) -> Complex64) -> CMat {
    let (vals, vecs) = eigh(m);
    let d: Vec<Complex64> = vals.into_iter().map(f).collect();
    &vecs * diag(&d) * vecs.adjoint()
}

/// `exp(-i 2π t H)` for Hermitian `H` in hertz and `t` in seconds.
pub fn propagator(h: &CMat, t: f64) -> CMat {
    let w = 2.0 * std::f64::consts::PI * t;
    hermitian_map(h, |e| Complex64::from_polar(1.0, -w * e))
}

/// Principal square root of a positive semidefinite matrix; eigenvalues in
/// `[-clip, 0)` are treated as zero.
pub fn sqrt_psd(m: &CMat) -> CMat {
    hermitian_map(m, |e| c(e.max(0.0).sqrt(), 0.0))
}

/// Matrix logarithm of a unitary via its Hermitian generator:
/// returns `H` with `U = exp(-i H)`, eigenphases taken in `(-π, π]`.
pub fn unitary_generator(u: &CMat) -> CMat {
    // U is normal, so its complex Schur form is diagonal
    let schur = u.clone().schur();
    let (q, t) = schur.unpack();
    let n = u.nrows();
    let mut d = CMat::zeros(n, n);
    for k in 0..n {
        let z = t[(k, k)];
        d[(k, k)] = c(-z.arg(), 0.0);
    }
    &q * d * q.adjoint()
}

/// Principal square root of a general square matrix with no eigenvalues on
/// the closed negative real axis (Denman-Beavers iteration).
pub fn sqrtm(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = identity(n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse()?;
        let zi = z.clone().try_inverse()?;
        let y_next = (&y + zi) * c(0.5, 0.0);
        let z_next = (&z + yi) * c(0.5, 0.0);
        let delta = max_abs(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta < 1e-14 * (1.0 + max_abs(&y)) {
            break;
        }
    }
    Some(y)
}

/// Column-stacking vectorisation.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVec, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

/// Superoperator of `ρ -> A ρ B` for column-stacked `vec(ρ)`.
pub fn sandwich_superop(a: &CMat, b: &CMat) -> CMat {
    kron(&b.transpose(), a)
}

/// Superoperator of `ρ -> U ρ U†`.
pub fn unitary_superop(u: &CMat) -> CMat {
    kron(&u.conjugate(), u)
}

pub fn pauli(index: usize) -> CMat {
    match index {
        0 => identity(2),
        1 => CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        2 => CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        3 => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        _ => panic!("pauli index out of range: {index}"),
    }
}

/// Two-qubit Pauli products `P_a ⊗ P_b` ordered II, IX, IY, IZ, XI, ..., ZZ.
pub fn two_qubit_paulis() -> Vec<CMat> {
    (0..16).map(|k| kron(&pauli(k / 4), &pauli(k % 4))).collect()
}

pub const PAULI_LETTERS: [char; 4] = ['I', 'X', 'Y', 'Z'];

pub fn two_qubit_pauli_labels() -> Vec<String> {
    (0..16)
        .map(|k| format!("{}{}", PAULI_LETTERS[k / 4], PAULI_LETTERS[k % 4]))
        .collect()
}

/// Coefficients `c_k = Tr(P_k M) / 4` in the two-qubit Pauli basis.
pub fn pauli_coefficients(m: &CMat) -> Vec<Complex64> {
    two_qubit_paulis()
        .iter()
        .map(|p| (p * m).trace() / 4.0)
        .collect()
}

/// Rotation `exp(-i θ/2 (cos φ X + sin φ Y))`.
pub fn rotation(theta: f64, phi: f64) -> CMat {
    let (s, co) = (theta / 2.0).sin_cos();
    let e = Complex64::from_polar(1.0, phi);
    CMat::from_row_slice(
        2,
        2,
        &[c(co, 0.0), -I * s * e.conj(), -I * s * e, c(co, 0.0)],
    )
}

/// Average gate fidelity between unitaries on a `d`-dimensional space:
/// `(|Tr(V†U)|² + d) / (d (d + 1))`, robust to non-unitary `U`.
pub fn average_gate_fidelity(u: &CMat, target: &CMat) -> f64 {
    let d = target.nrows() as f64;
    let m = target.adjoint() * u;
    let tr = m.trace().norm_sqr();
    let norm = (u.adjoint() * u).trace().re;
    (tr + norm) / (d * (d + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn propagator_of_sigma_x_is_rotation() {
        let x = pauli(1);
        // exp(-i 2π t X) with 2π t = θ/2
        let theta: f64 = 0.7;
        let u = propagator(&x, theta / (4.0 * std::f64::consts::PI));
        assert!(max_abs(&(u - rotation(theta, 0.0))) < 1e-12);
    }

    #[test]
    fn sqrtm_recovers_square() {
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.1), c(0.3, 0.0), c(0.1, -0.2), c(1.5, 0.0)]);
        let s = sqrtm(&a).unwrap();
        assert!(max_abs(&(&s * &s - &a)) < 1e-12);
    }

    #[test]
    fn generator_inverts_propagator() {
        let h = CMat::from_row_slice(2, 2, &[c(0.3, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(-0.5, 0.0)]);
        let u = hermitian_map(&h, |e| Complex64::from_polar(1.0, -e));
        let g = unitary_generator(&u);
        assert!(max_abs(&(g - h)) < 1e-10);
    }

    #[test]
    fn fidelity_of_identity_is_one() {
        let u = rotation(0.3, 0.2);
        assert_relative_eq!(average_gate_fidelity(&u, &u), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn superop_matches_sandwich() {
        let a = rotation(0.4, 0.1);
        let rho = CMat::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.4, 0.0)]);
        let direct = &a * &rho * a.adjoint();
        let via = unvec(&(unitary_superop(&a) * vec_of(&rho)), 2);
        assert!(max_abs(&(direct - via)) < 1e-14);
    }
}
