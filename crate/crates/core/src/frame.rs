//! Eigen-frame of the perturbed internal Hamiltonian H(gamma) = H0 + gamma *
//! sum of masked control Hamiltonians, the designed operator P built on that
//! frame, and the runtime checkers for the convergence conditions
//! (strong regularity, full connectedness, distinct P diagonal).

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::matrix::{eig_hermitian, CMatrix, DensityMatrix, HermitianMatrix, UnitaryMatrix};

/// Minimum admissible overlap when continuing eigenbranches from a previous
/// frame; below this the branches cannot be identified reliably.
pub const BRANCH_OVERLAP_MIN: f64 = 0.7;
/// Softer floor used by [`PGamma`] when anchoring frames to its gamma = 0
/// reference: frames far from the reference rotate substantially, yet the
/// assignment stays unambiguous well below the step-to-step continuity floor.
pub const ALIGNMENT_OVERLAP_MIN: f64 = 0.5;
/// Eigenvalue gaps below this guard make the perturbation formulas singular.
pub const DEGENERACY_GUARD: f64 = 1e-8;
/// Default tolerance separating structural zeros from round-off when testing
/// Bohr-frequency distinctness.
pub const REGULARITY_TOL: f64 = 1e-8;
/// Default tolerance on coupling matrix elements for connectedness.
pub const CONNECTEDNESS_TOL: f64 = 1e-10;

/// Eigen-frame of H(gamma): ascending (or branch-continued) eigenvalues with
/// the matching eigenvector columns and all ordered-pair Bohr frequencies.
#[derive(Debug, Clone)]
pub struct SpectralFrame {
    pub gamma: f64,
    pub eigenvalues: Vec<f64>,
    pub basis: UnitaryMatrix,
    /// omega_{l,m} = lambda_l - lambda_m for every ordered pair l != m.
    pub bohr: Vec<((usize, usize), f64)>,
}

impl SpectralFrame {
    fn from_parts(gamma: f64, eigenvalues: Vec<f64>, basis: UnitaryMatrix) -> Self {
        let n = eigenvalues.len();
        let mut bohr = Vec::with_capacity(n * (n - 1));
        for l in 0..n {
            for m in 0..n {
                if l != m {
                    bohr.push(((l, m), eigenvalues[l] - eigenvalues[m]));
                }
            }
        }
        Self { gamma, eigenvalues, basis, bohr }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Branch eigenvector as a column view.
    pub fn branch(&self, j: usize) -> nalgebra::DVectorView<'_, C64> {
        self.basis.matrix().column(j)
    }

    /// Smallest gap between adjacent sorted eigenvalues.
    pub fn min_eigenvalue_gap(&self) -> f64 {
        let mut sorted = self.eigenvalues.clone();
        sorted.sort_by(f64::total_cmp);
        sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Reorder branches so that branch j has maximal overlap with the
    /// standard basis vector e_j. For a diagonal internal Hamiltonian this is
    /// the natural labelling that the design rule for P assumes.
    pub fn aligned_to_standard_basis(self) -> Self {
        let n = self.dim();
        let identity = UnitaryMatrix::identity(n);
        let perm = greedy_assignment(&identity, &self.basis);
        self.permuted(&perm)
    }

    fn permuted(self, perm: &[usize]) -> Self {
        let n = self.dim();
        let mut basis = CMatrix::zeros(n, n);
        let mut values = vec![0.0; n];
        for (dst, &src) in perm.iter().enumerate() {
            values[dst] = self.eigenvalues[src];
            for r in 0..n {
                basis[(r, dst)] = self.basis.matrix()[(r, src)];
            }
        }
        Self::from_parts(
            self.gamma,
            values,
            UnitaryMatrix::new(basis).expect("permutation preserves unitarity"),
        )
    }
}

/// H0 + gamma * sum of masked controls.
pub fn perturbed_hamiltonian(
    h0: &HermitianMatrix,
    hks: &[HermitianMatrix],
    mask: &[bool],
    gamma: f64,
) -> Result<HermitianMatrix> {
    let mut h = h0.matrix().clone();
    for (hk, &on) in hks.iter().zip(mask.iter()) {
        if hk.dim() != h0.dim() {
            return Err(Error::DimensionMismatch { left: h0.dim(), right: hk.dim() });
        }
        if on {
            h += hk.matrix().scale(gamma);
        }
    }
    HermitianMatrix::new(h)
}

/// Greedy maximum-overlap assignment: perm[j] = column of `new` matched to
/// column j of `reference`. Candidate pairs are visited in descending
/// overlap, ties broken by branch then column index, so the result is
/// deterministic.
fn greedy_assignment(reference: &UnitaryMatrix, new: &UnitaryMatrix) -> Vec<usize> {
    let n = reference.dim();
    let overlaps = reference.matrix().adjoint() * new.matrix();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for j in 0..n {
        for l in 0..n {
            pairs.push((overlaps[(j, l)].norm(), j, l));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut perm = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for (_, j, l) in pairs {
        if perm[j] == usize::MAX && !used[l] {
            perm[j] = l;
            used[l] = true;
        }
    }
    perm
}

/// Eigendecomposition of the perturbed Hamiltonian. With `prev` supplied the
/// eigenbranches are reordered to continue the previous frame's branches by
/// maximal overlap; an overlap below [`BRANCH_OVERLAP_MIN`] is a branch
/// crossing error.
pub fn build_frame(
    h0: &HermitianMatrix,
    hks: &[HermitianMatrix],
    mask: &[bool],
    gamma: f64,
    prev: Option<&SpectralFrame>,
) -> Result<SpectralFrame> {
    build_frame_with_floor(h0, hks, mask, gamma, prev, BRANCH_OVERLAP_MIN)
}

fn build_frame_with_floor(
    h0: &HermitianMatrix,
    hks: &[HermitianMatrix],
    mask: &[bool],
    gamma: f64,
    prev: Option<&SpectralFrame>,
    floor: f64,
) -> Result<SpectralFrame> {
    if !gamma.is_finite() {
        return Err(Error::BadConfig { reason: format!("gamma = {gamma} is not finite") });
    }
    let h = perturbed_hamiltonian(h0, hks, mask, gamma)?;
    let eig = eig_hermitian(&h)?;
    let frame = SpectralFrame::from_parts(gamma, eig.values, eig.vectors);
    match prev {
        None => Ok(frame),
        Some(reference) => {
            let perm = greedy_assignment(&reference.basis, &frame.basis);
            let overlaps = reference.basis.matrix().adjoint() * frame.basis.matrix();
            for (j, &l) in perm.iter().enumerate() {
                let overlap = overlaps[(j, l)].norm();
                if overlap < floor {
                    return Err(Error::BranchCrossing { gamma, overlap, branch: j });
                }
            }
            Ok(frame.permuted(&perm))
        }
    }
}

/// Outcome of the strong-regularity check (condition i).
#[derive(Debug, Clone)]
pub struct RegularityReport {
    pub strongly_regular: bool,
    /// Smallest |omega_{lm} - omega_{ij}| over distinct ordered pairs.
    pub min_gap: f64,
    /// The closest pair of Bohr frequencies.
    pub witness: ((usize, usize), (usize, usize)),
}

/// True iff all ordered-pair Bohr frequencies are pairwise distinct with gap
/// greater than `tol`.
pub fn check_strong_regularity(frame: &SpectralFrame, tol: f64) -> RegularityReport {
    let mut min_gap = f64::INFINITY;
    let mut witness = ((0, 0), (0, 0));
    for (a, &(pa, wa)) in frame.bohr.iter().enumerate() {
        for &(pb, wb) in frame.bohr.iter().skip(a + 1) {
            let gap = (wa - wb).abs();
            if gap < min_gap {
                min_gap = gap;
                witness = (pa, pb);
            }
        }
    }
    RegularityReport { strongly_regular: min_gap > tol, min_gap, witness }
}

/// Per-pair coupling report for the full-connectedness check (condition ii).
#[derive(Debug, Clone)]
pub struct ConnectednessReport {
    pub fully_connected: bool,
    /// (j, l, max_k |(H_k in frame basis)_{jl}|) for every j < l.
    pub couplings: Vec<(usize, usize, f64)>,
    /// Pairs whose coupling does not exceed the tolerance.
    pub failures: Vec<(usize, usize)>,
}

/// Transforms every control Hamiltonian into the frame basis and reports, for
/// each level pair, the strongest coupling across controls.
pub fn check_full_connectedness(
    frame: &SpectralFrame,
    hks: &[HermitianMatrix],
    tol: f64,
) -> ConnectednessReport {
    let n = frame.dim();
    let transformed: Vec<CMatrix> =
        hks.iter().map(|hk| frame.basis.conjugate(hk.matrix())).collect();
    let mut couplings = Vec::new();
    let mut failures = Vec::new();
    for j in 0..n {
        for l in (j + 1)..n {
            let strongest = transformed
                .iter()
                .map(|m| m[(j, l)].norm())
                .fold(0.0f64, f64::max);
            couplings.push((j, l, strongest));
            if strongest <= tol {
                failures.push((j, l));
            }
        }
    }
    ConnectednessReport { fully_connected: failures.is_empty(), couplings, failures }
}

/// P = sum_j P_j |phi_j><phi_j| over the frame's branches. Commutes with
/// H(gamma) by construction (condition iii).
pub fn build_p(frame: &SpectralFrame, p_values: &[f64]) -> Result<HermitianMatrix> {
    let n = frame.dim();
    if p_values.len() != n {
        return Err(Error::DimensionMismatch { left: n, right: p_values.len() });
    }
    for (index, &value) in p_values.iter().enumerate() {
        if value <= 0.0 {
            return Err(Error::NonPositiveP { value, index });
        }
    }
    let mut p = CMatrix::zeros(n, n);
    for (j, &pj) in p_values.iter().enumerate() {
        let col = frame.branch(j);
        for r in 0..n {
            for c in 0..n {
                p[(r, c)] += col[r] * col[c].conj() * pj;
            }
        }
    }
    HermitianMatrix::new(p)
}

/// True iff all computational-basis diagonal entries of P differ pairwise by
/// more than `tol`; also returns the minimum diagonal gap (condition iv).
pub fn check_p_diag_distinct(p: &HermitianMatrix, tol: f64) -> (bool, f64) {
    let n = p.dim();
    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (p.matrix()[(i, i)].re - p.matrix()[(j, j)].re).abs();
            min_gap = min_gap.min(gap);
        }
    }
    (min_gap > tol, min_gap)
}

/// Frobenius mass of the off-diagonal part of P in the working basis. The
/// design rule reasons about diagonal entries, which is exact only when the
/// internal Hamiltonian is diagonal; this diagnostic quantifies the gap.
pub fn p_offdiagonal_mass(p: &HermitianMatrix) -> f64 {
    let n = p.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += p.matrix()[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// rho in the frame's eigenbasis (diagnostic frame change).
pub fn to_eigenbasis(rho: &DensityMatrix, frame: &SpectralFrame) -> Result<DensityMatrix> {
    if rho.dim() != frame.dim() {
        return Err(Error::DimensionMismatch { left: rho.dim(), right: frame.dim() });
    }
    DensityMatrix::new(frame.basis.conjugate(rho.matrix()))
}

/// Combined condition report used by the CLI `check` command.
#[derive(Debug, Clone)]
pub struct ConnectivityReport {
    pub gamma: f64,
    pub regularity: RegularityReport,
    pub connectedness: ConnectednessReport,
    pub p_diag_distinct: bool,
    pub p_min_diag_gap: f64,
    pub p_offdiag_mass: f64,
}

/// Evaluates conditions i, ii and iv at a single gamma.
pub fn connectivity_report(
    h0: &HermitianMatrix,
    hks: &[HermitianMatrix],
    mask: &[bool],
    p_values: &[f64],
    gamma: f64,
    regularity_tol: f64,
    connectedness_tol: f64,
) -> Result<ConnectivityReport> {
    let frame = build_frame(h0, hks, mask, gamma, None)?.aligned_to_standard_basis();
    let regularity = check_strong_regularity(&frame, regularity_tol);
    let connectedness = check_full_connectedness(&frame, hks, connectedness_tol);
    let p = build_p(&frame, p_values)?;
    let (p_diag_distinct, p_min_diag_gap) = check_p_diag_distinct(&p, connectedness_tol);
    Ok(ConnectivityReport {
        gamma,
        regularity,
        connectedness,
        p_diag_distinct,
        p_min_diag_gap,
        p_offdiag_mass: p_offdiagonal_mass(&p),
    })
}

/// The map gamma -> P_gamma for a fixed system, with branch bookkeeping
/// anchored at gamma = 0. Branches of the zero-perturbation frame are aligned
/// to the standard basis so that P_j attaches to the level the design rule
/// refers to, and all other frames continue those branches by overlap.
#[derive(Debug, Clone)]
pub struct PGamma {
    h0: HermitianMatrix,
    hks: Vec<HermitianMatrix>,
    mask: Vec<bool>,
    p_values: Vec<f64>,
    reference: SpectralFrame,
}

impl PGamma {
    pub fn new(
        h0: HermitianMatrix,
        hks: Vec<HermitianMatrix>,
        mask: Vec<bool>,
        p_values: Vec<f64>,
    ) -> Result<Self> {
        if mask.len() != hks.len() {
            return Err(Error::BadConfig {
                reason: format!("mask length {} != control count {}", mask.len(), hks.len()),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::BadConfig { reason: "mask selects no control".into() });
        }
        for (index, &value) in p_values.iter().enumerate() {
            if value <= 0.0 {
                return Err(Error::NonPositiveP { value, index });
            }
        }
        let reference = build_frame(&h0, &hks, &mask, 0.0, None)?.aligned_to_standard_basis();
        Ok(Self { h0, hks, mask, p_values, reference })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn p_values(&self) -> &[f64] {
        &self.p_values
    }

    pub fn reference(&self) -> &SpectralFrame {
        &self.reference
    }

    /// Frame at the given gamma with branches matched to the gamma = 0
    /// reference.
    pub fn frame_at(&self, gamma: f64) -> Result<SpectralFrame> {
        build_frame_with_floor(
            &self.h0,
            &self.hks,
            &self.mask,
            gamma,
            Some(&self.reference),
            ALIGNMENT_OVERLAP_MIN,
        )
    }

    /// P_gamma on the branch-continued frame.
    pub fn p_at(&self, gamma: f64) -> Result<HermitianMatrix> {
        build_p(&self.frame_at(gamma)?, &self.p_values)
    }

    fn guard_gap(&self, gamma: f64) -> Result<SpectralFrame> {
        let frame = self.frame_at(gamma)?;
        let gap = frame.min_eigenvalue_gap();
        if gap < DEGENERACY_GUARD {
            return Err(Error::DegenerateGap { gap, gamma, guard: DEGENERACY_GUARD });
        }
        Ok(frame)
    }

    /// dP/dgamma by central finite difference with branch-matched frames.
    pub fn dp_dgamma_fd(&self, gamma: f64, step: f64) -> Result<HermitianMatrix> {
        self.guard_gap(gamma)?;
        let plus = self.p_at(gamma + step)?;
        let minus = self.p_at(gamma - step)?;
        HermitianMatrix::new((plus.matrix() - minus.matrix()).scale(0.5 / step))
    }

    /// dP/dgamma by the first-order eigenvector perturbation formula.
    pub fn dp_dgamma_perturbative(&self, gamma: f64) -> Result<HermitianMatrix> {
        let frame = self.guard_gap(gamma)?;
        let n = frame.dim();
        let mut h_prime = CMatrix::zeros(n, n);
        for (hk, &on) in self.hks.iter().zip(self.mask.iter()) {
            if on {
                h_prime += hk.matrix();
            }
        }
        let w = frame.basis.conjugate(&h_prime);
        // d|phi_j> = sum_{l != j} W_{lj} / (lambda_j - lambda_l) |phi_l>
        let mut dp = CMatrix::zeros(n, n);
        for j in 0..n {
            let col_j = frame.branch(j).clone_owned();
            let mut dcol = nalgebra::DVector::<C64>::zeros(n);
            for l in 0..n {
                if l == j {
                    continue;
                }
                let denom = frame.eigenvalues[j] - frame.eigenvalues[l];
                let coeff = w[(l, j)] / C64::new(denom, 0.0);
                dcol += frame.branch(l) * coeff;
            }
            let pj = self.p_values[j];
            for r in 0..n {
                for c in 0..n {
                    dp[(r, c)] +=
                        (dcol[r] * col_j[c].conj() + col_j[r] * dcol[c].conj()) * pj;
                }
            }
        }
        HermitianMatrix::new(dp)
    }
}

/// Spec-shaped helper: dP/dgamma at `gamma` by central finite difference
/// (step 1e-6) on branch-matched frames.
pub fn dp_dgamma(
    h0: &HermitianMatrix,
    hks: &[HermitianMatrix],
    mask: &[bool],
    gamma: f64,
    p_values: &[f64],
) -> Result<HermitianMatrix> {
    let map = PGamma::new(h0.clone(), hks.to_vec(), mask.to_vec(), p_values.to_vec())?;
    map.dp_dgamma_fd(gamma, 1e-6)
}
