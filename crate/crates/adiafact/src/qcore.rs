//! Dense complex linear algebra and spin-operator construction.
//!
//! Everything downstream works with [`CMatrix`]/[`CVector`] at Hilbert-space
//! dimensions ≤ 9, so exactness beats speed: the matrix exponential goes
//! through a full Hermitian eigendecomposition rather than scaling-squaring.

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;
use thiserror::Error;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for accepting a matrix as Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-9;
/// Tolerance for accepting a matrix as unitary.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Tolerance on state norms after propagation and on density-matrix traces.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum QcoreError {
    #[error("matrix is not Hermitian (defect {defect:.3e} exceeds {tol:.1e})")]
    NonHermitianInput { defect: f64, tol: f64 },
    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// Spin-1/2 operators (Sx, Sy, Sz), eigenvalues ±1/2, in the |0⟩,|1⟩ basis.
pub fn spin_half_ops() -> (CMatrix, CMatrix, CMatrix) {
    let sx = CMatrix::from_row_slice(2, 2, &[cr(0.0), cr(0.5), cr(0.5), cr(0.0)]);
    let sy = CMatrix::from_row_slice(2, 2, &[cr(0.0), c(0.0, -0.5), c(0.0, 0.5), cr(0.0)]);
    let sz = CMatrix::from_row_slice(2, 2, &[cr(0.5), cr(0.0), cr(0.0), cr(-0.5)]);
    (sx, sy, sz)
}

/// Spin-1 operators for the full 3-level electron / nuclear manifolds,
/// in the |+1⟩,|0⟩,|−1⟩ basis.
pub fn spin_one_z() -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_vec(vec![cr(1.0), cr(0.0), cr(-1.0)]))
}

/// Kronecker product; the left factor is the most significant tensor slot.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let d = u.nrows();
    (u.adjoint() * u - identity(d))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral-ish scale used to make tolerances relative: max |entry|.
pub fn matrix_scale(m: &CMatrix) -> f64 {
    max_abs(m).max(1.0)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted ascending.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn eigh(h: &CMatrix) -> Result<(DVector<f64>, CMatrix), QcoreError> {
    let defect = hermiticity_defect(h);
    if defect > HERMITICITY_TOL * matrix_scale(h) {
        return Err(QcoreError::NonHermitianInput {
            defect,
            tol: HERMITICITY_TOL,
        });
    }
    let eig = h.clone().symmetric_eigen();
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

/// Propagator exp(−i·H·t) for Hermitian H, via eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> Result<CMatrix, QcoreError> {
    let (vals, vecs) = eigh(h)?;
    let phases = CMatrix::from_diagonal(&vals.map(|e| c(0.0, -e * t).exp()));
    Ok(&vecs * phases * vecs.adjoint())
}

/// |⟨b|a⟩|² for pure states.
pub fn fidelity(a: &CVector, b: &CVector) -> Result<f64, QcoreError> {
    if a.len() != b.len() {
        return Err(QcoreError::DimensionMismatch { a: a.len(), b: b.len() });
    }
    Ok(b.dotc(a).norm_sqr().clamp(0.0, 1.0 + 1e-12))
}

/// ⟨b|ρ|b⟩ for a density matrix against a pure state.
pub fn fidelity_mixed(rho: &CMatrix, b: &CVector) -> Result<f64, QcoreError> {
    if rho.nrows() != b.len() {
        return Err(QcoreError::DimensionMismatch { a: rho.nrows(), b: b.len() });
    }
    Ok(b.dotc(&(rho * b)).re.clamp(0.0, 1.0 + 1e-12))
}

/// Density-matrix sanity: (hermiticity defect, |trace − 1|, most negative eigenvalue).
pub fn density_defects(rho: &CMatrix) -> Result<(f64, f64, f64), QcoreError> {
    let herm = hermiticity_defect(rho);
    let trace_dev = (rho.trace() - cr(1.0)).norm();
    let (vals, _) = eigh(&((rho + rho.adjoint()).scale(0.5)))?;
    Ok((herm, trace_dev, vals[0]))
}

/// Projector |ψ⟩⟨ψ|.
pub fn pure_density(psi: &CVector) -> CMatrix {
    psi * psi.adjoint()
}

/// Basis state |idx⟩ of the given dimension.
pub fn basis_state(dim: usize, idx: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[idx] = cr(1.0);
    v
}

/// Fix global phase: first amplitude with |a| > 1e-12 made real positive.
pub fn fix_phase(psi: &CVector) -> CVector {
    for a in psi.iter() {
        if a.norm() > 1e-12 {
            let phase = a / a.norm();
            return psi.map(|z| z / phase);
        }
    }
    psi.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * b - b * a
    }

    #[test]
    fn spin_half_eigenvalues_and_algebra() {
        let (sx, sy, sz) = spin_half_ops();
        assert_eq!(sz[(0, 0)], cr(0.5));
        assert_eq!(sz[(1, 1)], cr(-0.5));
        let (vals, _) = eigh(&sx).unwrap();
        assert_abs_diff_eq!(vals[0], -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 0.5, epsilon = 1e-12);
        // [Sx, Sy] = i Sz and cyclic
        assert!(max_abs(&(commutator(&sx, &sy) - sz.map(|z| z * c(0.0, 1.0)))) < 1e-12);
        assert!(max_abs(&(commutator(&sy, &sz) - sx.map(|z| z * c(0.0, 1.0)))) < 1e-12);
        assert!(max_abs(&(commutator(&sz, &sx) - sy.map(|z| z * c(0.0, 1.0)))) < 1e-12);
    }

    #[test]
    fn tensor_products() {
        let i2 = identity(2);
        assert_eq!(tensor(&i2, &i2), identity(4));
        let (sx, _, sz) = spin_half_ops();
        // 2 Sz⊗Iz diagonal on |00⟩,|01⟩,|10⟩,|11⟩
        let zz = tensor(&sz, &sz).scale(2.0);
        let diag: Vec<f64> = (0..4).map(|k| zz[(k, k)].re).collect();
        assert_eq!(diag, vec![0.5, -0.5, -0.5, 0.5]);
        // tensor(Sx, I2)|00⟩ = ½|10⟩
        let out = tensor(&sx, &i2) * basis_state(4, 0);
        assert_abs_diff_eq!(out[2].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.norm(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn tensor_associative() {
        let (sx, sy, sz) = spin_half_ops();
        let left = tensor(&tensor(&sx, &sy), &sz);
        let right = tensor(&sx, &tensor(&sy, &sz));
        assert_eq!(left, right);
    }

    #[test]
    fn expm_zero_is_identity() {
        let h = CMatrix::zeros(4, 4);
        let u = expm_hermitian(&h, 3.7).unwrap();
        assert!(max_abs(&(u - identity(4))) < 1e-14);
    }

    #[test]
    fn expm_group_property_and_unitarity() {
        let (_, _, sz) = spin_half_ops();
        let h = sz.scale(std::f64::consts::PI);
        let u1 = expm_hermitian(&h, 0.3).unwrap();
        let u2 = expm_hermitian(&h, 1.9).unwrap();
        let u12 = expm_hermitian(&h, 2.2).unwrap();
        assert!(max_abs(&(&u1 * &u2 - u12)) < 1e-12);
        assert!(unitarity_defect(&u1) < UNITARITY_TOL);
    }

    #[test]
    fn expm_eigenphases_of_zz() {
        // Oracle: direct 4×4 eigendecomposition of 2SzIz (diagonal ±1/2),
        // so exp(−i·2SzIz·t) has eigenphases exp(−i·λ·t), λ ∈ {±1/2}.
        let (_, _, sz) = spin_half_ops();
        let zz = tensor(&sz, &sz).scale(2.0);
        let t = 1.234;
        let u = expm_hermitian(&zz, t).unwrap();
        let expected = [0.5, -0.5, -0.5, 0.5].map(|lam| c(0.0, -lam * t).exp());
        for k in 0..4 {
            assert!((u[(k, k)] - expected[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(0.0), cr(0.0)]);
        assert!(matches!(
            expm_hermitian(&m, 1.0),
            Err(QcoreError::NonHermitianInput { .. })
        ));
    }

    #[test]
    fn fidelity_cases() {
        let psi = fix_phase(&CVector::from_vec(vec![c(0.3, 0.4), cr(0.5), cr(0.5), c(0.0, 0.5)]));
        assert_abs_diff_eq!(fidelity(&psi, &psi).unwrap(), 1.0, epsilon = 1e-12);
        let e00 = basis_state(4, 0);
        let e01 = basis_state(4, 1);
        assert_abs_diff_eq!(fidelity(&e00, &e01).unwrap(), 0.0, epsilon = 1e-15);
        let mixed = identity(4).scale(0.25);
        assert_abs_diff_eq!(fidelity_mixed(&mixed, &psi).unwrap(), 0.25, epsilon = 1e-12);
        assert!(fidelity(&e00, &basis_state(2, 0)).is_err());
    }

    #[test]
    fn hermitian_closed_under_real_combination() {
        let (sx, sy, sz) = spin_half_ops();
        let m = sx.scale(0.7) + sy.scale(-1.3) + sz.scale(2.2);
        assert!(hermiticity_defect(&m) < 1e-15);
    }
}
