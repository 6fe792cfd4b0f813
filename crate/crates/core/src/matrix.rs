//! Dense complex matrix primitives: Hermitian validation, commutators,
//! eigendecomposition with a deterministic phase convention, unitary
//! exponential propagators, and norms.
//!
//! Energies are in atomic units (hbar = 1) throughout.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Square complex matrix storage used everywhere in this crate.
pub type CMatrix = DMatrix<C64>;

/// Hermiticity tolerance used by the validated wrappers.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Unitarity tolerance used by the validated wrappers.
pub const UNITARITY_TOL: f64 = 1e-12;
/// Density matrices may have eigenvalues down to minus this value.
pub const DENSITY_POSITIVITY_TOL: f64 = 1e-10;
/// Eigenpair residuals must stay below this times max(1, ||H||_F).
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn zeros(dim: usize) -> CMatrix {
    CMatrix::zeros(dim, dim)
}

/// Frobenius norm.
pub fn fro_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ||M - M^H||_F, zero for exactly Hermitian input.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    fro_norm(&(m - m.adjoint()))
}

/// ||M M^H - I||_F, zero for exactly unitary input.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let dim = m.nrows();
    fro_norm(&(m * m.adjoint() - identity(dim)))
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// tr(A B) without forming the product matrix.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn check_same_dim(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch { left: a.nrows(), right: b.nrows() });
    }
    Ok(())
}

/// Commutator [A, B] = AB - BA.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    check_same_dim(a, b)?;
    Ok(a * b - b * a)
}

/// Hermitian matrix validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        Self::with_tol(mat, HERMITICITY_TOL)
    }

    pub fn with_tol(mat: CMatrix, tol: f64) -> Result<Self> {
        let defect = hermiticity_defect(&mat);
        let scale = fro_norm(&mat).max(1.0);
        if defect > tol * scale {
            return Err(Error::NotHermitian { defect, tol: tol * scale });
        }
        Ok(Self(mat))
    }

    /// Construct from real symmetric data laid out row-major.
    pub fn from_real_rows(dim: usize, rows: &[f64]) -> Result<Self> {
        assert_eq!(rows.len(), dim * dim);
        let mat = CMatrix::from_fn(dim, dim, |i, j| C64::new(rows[i * dim + j], 0.0));
        Self::new(mat)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        Self(CMatrix::from_fn(dim, dim, |i, j| {
            if i == j { C64::new(diag[i], 0.0) } else { C64::new(0.0, 0.0) }
        }))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Largest absolute eigenvalue; equals the spectral norm for Hermitian input.
    pub fn spectral_norm(&self) -> Result<f64> {
        let eig = eig_hermitian(self)?;
        Ok(eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }
}

impl std::ops::Deref for HermitianMatrix {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

/// Unitary matrix validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(CMatrix);

impl UnitaryMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        Self::with_tol(mat, UNITARITY_TOL)
    }

    pub fn with_tol(mat: CMatrix, tol: f64) -> Result<Self> {
        let defect = unitarity_defect(&mat);
        let scale = (mat.nrows() as f64).sqrt().max(1.0);
        if defect > tol * scale {
            return Err(Error::NotUnitary { defect, tol: tol * scale });
        }
        Ok(Self(mat))
    }

    pub fn identity(dim: usize) -> Self {
        Self(identity(dim))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// U^H M U.
    pub fn conjugate(&self, m: &CMatrix) -> CMatrix {
        self.0.adjoint() * m * &self.0
    }

    /// U M U^H (inverse of [`Self::conjugate`]).
    pub fn conjugate_back(&self, m: &CMatrix) -> CMatrix {
        &self.0 * m * self.0.adjoint()
    }
}

impl std::ops::Deref for UnitaryMatrix {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

/// Density matrix: Hermitian, unit trace, positive semidefinite within tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        validate_density(mat, DENSITY_POSITIVITY_TOL)
    }

    /// Pure state |psi><psi| from an unnormalized state vector.
    pub fn pure_state(amplitudes: &[C64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let dim = amplitudes.len();
        let mat = CMatrix::from_fn(dim, dim, |i, j| {
            amplitudes[i] * amplitudes[j].conj() / (norm * norm)
        });
        Self::new(mat)
    }

    pub fn from_diagonal(populations: &[f64]) -> Result<Self> {
        let dim = populations.len();
        let mat = CMatrix::from_fn(dim, dim, |i, j| {
            if i == j { C64::new(populations[i], 0.0) } else { C64::new(0.0, 0.0) }
        });
        Self::new(mat)
    }

    /// Wrap without validation. For states produced by operations that
    /// preserve density-matrix structure exactly (unitary conjugation);
    /// conservation metrics measure the actual drift.
    pub(crate) fn new_unchecked(mat: CMatrix) -> Self {
        Self(mat)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.0.diagonal().iter().map(|z| z.re).collect()
    }

    /// Eigenvalues of the state, ascending.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        let h = HermitianMatrix::with_tol(self.0.clone(), 1e-6)?;
        Ok(eig_hermitian(&h)?.values)
    }
}

impl std::ops::Deref for DensityMatrix {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

/// Validate a raw matrix as a density matrix, reporting the first violated
/// invariant. `tol` bounds both the trace deviation and the admissible
/// negative eigenvalue.
pub fn validate_density(mat: CMatrix, tol: f64) -> Result<DensityMatrix> {
    let defect = hermiticity_defect(&mat);
    let scale = fro_norm(&mat).max(1.0);
    if defect > HERMITICITY_TOL.max(tol) * scale {
        return Err(Error::NotHermitian { defect, tol: HERMITICITY_TOL.max(tol) * scale });
    }
    let tr = trace(&mat);
    if (tr.re - 1.0).abs() > tol.max(1e-9) || tr.im.abs() > tol.max(1e-9) {
        return Err(Error::BadTrace { trace: tr.re, tol: tol.max(1e-9) });
    }
    let herm = HermitianMatrix::with_tol(mat.clone(), tol.max(HERMITICITY_TOL))?;
    let eig = eig_hermitian(&herm)?;
    if let Some(&min) = eig.values.first() {
        if min < -tol {
            return Err(Error::NegativeEigenvalue { eigenvalue: min, tol });
        }
    }
    Ok(DensityMatrix(mat))
}

/// Result of a Hermitian eigendecomposition: ascending eigenvalues and the
/// matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: UnitaryMatrix,
}

/// Hermitian eigendecomposition with ascending eigenvalues and a
/// deterministic phase: the largest-magnitude component of each eigenvector
/// is made real and positive. Residuals are checked against
/// `EIGEN_RESIDUAL_TOL * max(1, ||H||_F)`.
///
/// Cyclic Jacobi rotations: at the dimensions this crate targets the method
/// is fast, its residuals sit at machine precision, and a diagonal input
/// comes back exactly as the standard basis.
pub fn eig_hermitian(h: &HermitianMatrix) -> Result<Eigensystem> {
    let dim = h.dim();
    let mut a = (h.matrix() + h.matrix().adjoint()).scale(0.5);
    let mut vectors = identity(dim);
    let scale = fro_norm(&a).max(1.0);

    let off_norm = |m: &CMatrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                if i != j {
                    acc += m[(i, j)].norm_sqr();
                }
            }
        }
        acc.sqrt()
    };

    let mut converged = false;
    for _sweep in 0..60 {
        if off_norm(&a) <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[(p, q)];
                if apq.norm() <= 1e-18 * scale {
                    continue;
                }
                // unitary rotation J in the (p, q) plane zeroing a_pq:
                // J[p,p] = c, J[q,p] = s e^{-i phi}, J[p,q] = -s e^{i phi},
                // J[q,q] = c with a_pq = |a_pq| e^{i phi}; A <- J^H A J.
                let phase = apq / apq.norm();
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * apq.norm());
                // smaller-magnitude root of t^2 - 2 tau t - 1 = 0
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let (cs, sn) = (C64::new(c, 0.0), C64::new(s, 0.0));
                // A <- A J (columns p, q)
                for r in 0..dim {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = arp * cs + arq * sn * phase.conj();
                    a[(r, q)] = -arp * sn * phase + arq * cs;
                }
                // A <- J^H A (rows p, q)
                for col in 0..dim {
                    let apc = a[(p, col)];
                    let aqc = a[(q, col)];
                    a[(p, col)] = apc * cs + aqc * sn * phase;
                    a[(q, col)] = -apc * sn * phase.conj() + aqc * cs;
                }
                // V <- V J
                for r in 0..dim {
                    let vrp = vectors[(r, p)];
                    let vrq = vectors[(r, q)];
                    vectors[(r, p)] = vrp * cs + vrq * sn * phase.conj();
                    vectors[(r, q)] = -vrp * sn * phase + vrq * cs;
                }
            }
        }
    }
    if !converged && off_norm(&a) > 1e-12 * scale {
        return Err(Error::EigenFailed { dim });
    }

    let raw_values: Vec<f64> = (0..dim).map(|i| a[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| raw_values[x].total_cmp(&raw_values[y]));

    let values: Vec<f64> = order.iter().map(|&i| raw_values[i]).collect();
    let mut sorted = CMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        let col = vectors.column(src);
        let phase = dominant_phase(col.iter());
        for r in 0..dim {
            sorted[(r, dst)] = col[r] * phase.conj();
        }
    }

    let mut worst = 0.0f64;
    for j in 0..dim {
        let v = sorted.column(j);
        let residual = (h.matrix() * v - v * C64::new(values[j], 0.0)).norm();
        worst = worst.max(residual);
    }
    if worst > EIGEN_RESIDUAL_TOL * scale {
        return Err(Error::EigenResidual { residual: worst, tol: EIGEN_RESIDUAL_TOL * scale });
    }

    Ok(Eigensystem { values, vectors: UnitaryMatrix::new(sorted)? })
}

/// Unit phase of the first largest-magnitude entry of a vector.
pub(crate) fn dominant_phase<'a>(entries: impl Iterator<Item = &'a C64>) -> C64 {
    let mut best = C64::new(1.0, 0.0);
    let mut best_mag = -1.0f64;
    for z in entries {
        let mag = z.norm();
        if mag > best_mag + 1e-14 {
            best_mag = mag;
            best = if mag > 0.0 { z / mag } else { C64::new(1.0, 0.0) };
        }
    }
    best
}

/// exp(-i H dt) computed by spectral decomposition; exactly unitary up to
/// eigensolver error.
pub fn expm_unitary(h: &HermitianMatrix, dt: f64) -> Result<UnitaryMatrix> {
    let eig = eig_hermitian(h)?;
    let dim = h.dim();
    let v = eig.vectors.matrix();
    let mut phased = v.clone();
    for (j, &lambda) in eig.values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lambda * dt);
        for r in 0..dim {
            phased[(r, j)] *= phase;
        }
    }
    UnitaryMatrix::new(phased * v.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Eq.-style three-level test pair used across the crate's tests.
    pub(crate) fn three_level() -> (HermitianMatrix, HermitianMatrix) {
        let h0 = HermitianMatrix::from_diagonal(&[0.3, 0.6, 0.9]);
        let h1 = HermitianMatrix::from_real_rows(
            3,
            &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        (h0, h1)
    }

    #[test]
    fn commutator_of_matrix_with_itself_is_zero() {
        let (_, h1) = three_level();
        let comm = commutator(h1.matrix(), h1.matrix()).unwrap();
        assert!(fro_norm(&comm) == 0.0);
    }

    #[test]
    fn diagonal_matrices_commute() {
        let a = HermitianMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let b = HermitianMatrix::from_diagonal(&[-1.0, 0.5, 7.0]);
        let comm = commutator(a.matrix(), b.matrix()).unwrap();
        assert!(fro_norm(&comm) == 0.0);
    }

    #[test]
    fn commutator_three_level_matches_hand_multiplication() {
        // independent oracle: explicit 3x3 multiplication of H0 H1 - H1 H0
        let (h0, h1) = three_level();
        let comm = commutator(h0.matrix(), h1.matrix()).unwrap();
        let (a, b) = (h0.matrix(), h1.matrix());
        let n = 3;
        let mut oracle = zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut ab = c(0.0, 0.0);
                let mut ba = c(0.0, 0.0);
                for k in 0..n {
                    ab += a[(i, k)] * b[(k, j)];
                    ba += b[(i, k)] * a[(k, j)];
                }
                oracle[(i, j)] = ab - ba;
            }
        }
        assert!(fro_norm(&(comm.clone() - oracle)) < 1e-15);
        assert!(fro_norm(&comm) > 0.1, "H0 and H1 do not commute");
    }

    #[test]
    fn commutator_dimension_mismatch_is_reported() {
        let a = identity(2);
        let b = identity(3);
        assert!(matches!(
            commutator(&a, &b),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn eig_three_level_h0_is_its_diagonal() {
        let (h0, _) = three_level();
        let eig = eig_hermitian(&h0).unwrap();
        assert!((eig.values[0] - 0.3).abs() < 1e-14);
        assert!((eig.values[1] - 0.6).abs() < 1e-14);
        assert!((eig.values[2] - 0.9).abs() < 1e-14);
        assert!(fro_norm(&(eig.vectors.matrix() - identity(3))) < 1e-12);
    }

    #[test]
    fn eig_identity_matrix() {
        let h = HermitianMatrix::new(identity(4)).unwrap();
        let eig = eig_hermitian(&h).unwrap();
        for v in eig.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn eig_perturbed_h0_matches_characteristic_polynomial_roots() {
        // oracle: roots of det(H - x I) for H = H0 + 0.1 H1 found by an
        // independent bracketed bisection on the cubic.
        let (h0, h1) = three_level();
        let h = HermitianMatrix::new(h0.matrix() + h1.matrix().scale(0.1)).unwrap();
        let eig = eig_hermitian(&h).unwrap();
        let roots = crate::test_oracles::cubic_eigenvalues_of(h.matrix());
        for (got, want) in eig.values.iter().zip(roots.iter()) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn eig_phase_convention_is_deterministic() {
        let (h0, h1) = three_level();
        let h = HermitianMatrix::new(h0.matrix() + h1.matrix().scale(0.2)).unwrap();
        let eig = eig_hermitian(&h).unwrap();
        for j in 0..3 {
            let col = eig.vectors.column(j);
            let k = (0..3)
                .max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm()))
                .unwrap();
            assert!(col[k].re > 0.0);
            assert!(col[k].im.abs() < 1e-12);
        }
    }

    #[test]
    fn expm_zero_generator_is_identity() {
        let h = HermitianMatrix::new(zeros(3)).unwrap();
        let u = expm_unitary(&h, 1.7).unwrap();
        assert!(fro_norm(&(u.matrix() - identity(3))) < 1e-14);
    }

    #[test]
    fn expm_diagonal_case() {
        let h = HermitianMatrix::from_diagonal(&[0.3, 0.6, 0.9]);
        let dt = 0.37;
        let u = expm_unitary(&h, dt).unwrap();
        for (j, lam) in [0.3, 0.6, 0.9].iter().enumerate() {
            let want = C64::from_polar(1.0, -lam * dt);
            assert!((u.matrix()[(j, j)] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn expm_is_unitary_for_perturbed_three_level() {
        let (h0, h1) = three_level();
        let h = HermitianMatrix::new(h0.matrix() + h1.matrix().scale(0.5)).unwrap();
        let u = expm_unitary(&h, 0.01).unwrap();
        assert!(unitarity_defect(u.matrix()) < 1e-12);
    }

    #[test]
    fn expm_semigroup_property() {
        let (h0, h1) = three_level();
        let h = HermitianMatrix::new(h0.matrix() + h1.matrix().scale(0.3)).unwrap();
        let u1 = expm_unitary(&h, 0.7).unwrap();
        let u2 = expm_unitary(&h, 0.4).unwrap();
        let u12 = expm_unitary(&h, 1.1).unwrap();
        assert!(fro_norm(&(u1.matrix() * u2.matrix() - u12.matrix())) < 1e-10);
    }

    #[test]
    fn validate_density_accepts_superposition_initial_state() {
        // 0.1667 / 0.3333 / 0.5 diagonal with the matching off-diagonals
        let s6 = (1.0f64 / 6.0).sqrt();
        let s3 = (1.0f64 / 3.0).sqrt();
        let s2 = (1.0f64 / 2.0).sqrt();
        let rho = DensityMatrix::pure_state(&[c(s6, 0.0), c(s3, 0.0), c(s2, 0.0)]).unwrap();
        assert!((rho.populations()[0] - 0.1667).abs() < 1e-4);
        assert!((rho.populations()[1] - 0.3333).abs() < 1e-4);
        assert!((rho.populations()[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn validate_density_rejects_bad_trace() {
        let m = CMatrix::from_fn(3, 3, |i, j| {
            if i == j { c([0.5, 0.6, 0.0][i], 0.0) } else { c(0.0, 0.0) }
        });
        match validate_density(m, 1e-10) {
            Err(Error::BadTrace { trace, .. }) => assert!((trace - 1.1).abs() < 1e-12),
            other => panic!("expected BadTrace, got {other:?}"),
        }
    }

    #[test]
    fn validate_density_accepts_maximally_mixed() {
        let m = identity(3).scale(1.0 / 3.0);
        assert!(validate_density(m, 1e-10).is_ok());
    }

    #[test]
    fn validate_density_rejects_negative_eigenvalue() {
        let m = CMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => c(1.1, 0.0),
            (1, 1) => c(-0.1, 0.0),
            _ => c(0.0, 0.0),
        });
        assert!(matches!(
            validate_density(m, 1e-10),
            Err(Error::NegativeEigenvalue { .. })
        ));
    }

    #[test]
    fn validate_density_rejects_non_hermitian() {
        let mut m = identity(2).scale(0.5);
        m[(0, 1)] = c(0.3, 0.0); // no matching conjugate entry
        assert!(matches!(validate_density(m, 1e-10), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn trace_of_commutator_vanishes() {
        let (h0, h1) = three_level();
        let comm = commutator(h0.matrix(), h1.matrix()).unwrap();
        assert!(trace(&comm).norm() < 1e-12);
    }
}
