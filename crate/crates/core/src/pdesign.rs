//! Constructive design of the P eigenvalues from a diagonal target and the
//! brute-force minimality check over the permutation set.

use crate::error::{Error, Result};
use crate::frame::PGamma;
use crate::matrix::{trace_of_product, DensityMatrix, HermitianMatrix};
use crate::perturbation::{solve_gamma_with, ThetaSpec};

/// Factorial enumeration is guarded at this dimension.
pub const ENUMERATION_MAX_DIM: usize = 8;

/// Designed P eigenvalues.
#[derive(Debug, Clone)]
pub struct PDesign {
    pub values: Vec<f64>,
    pub min_gap: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Constructed,
    UserSupplied,
}

/// Strictly anti-monotone P: a strictly smaller target population gets a
/// strictly larger P value; equal populations get distinct values with the
/// smaller index receiving the larger one. Values start at `base` and are
/// spaced by `min_gap`.
pub fn design_p(rhof_diag: &[f64], min_gap: f64, base: f64) -> Result<PDesign> {
    if min_gap <= 0.0 || base <= 0.0 {
        return Err(Error::BadConfig { reason: "min_gap and base must be positive".into() });
    }
    if rhof_diag.iter().any(|&p| p < -1e-12) {
        return Err(Error::BadConfig { reason: "target populations must be nonnegative".into() });
    }
    let total: f64 = rhof_diag.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::BadConfig {
            reason: format!("target populations sum to {total}, expected 1"),
        });
    }
    let n = rhof_diag.len();
    // descending population; among ties the larger index first, so that the
    // smaller index ends up with the larger P value
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        rhof_diag[b]
            .total_cmp(&rhof_diag[a])
            .then(b.cmp(&a))
    });
    let mut values = vec![0.0; n];
    for (rank, &index) in order.iter().enumerate() {
        values[index] = base + rank as f64 * min_gap;
    }
    Ok(PDesign { values, min_gap, provenance: Provenance::Constructed })
}

/// How V is evaluated on the permutation candidates.
#[derive(Debug, Clone)]
pub enum VerifyMode {
    /// V(candidate) = tr(P_0 candidate) with P built at gamma = 0; the
    /// candidates are equilibria where the perturbation has settled.
    GammaZero,
    /// Solve the implicit gamma for each candidate and evaluate
    /// tr(P_gamma candidate) there (sensitivity analysis).
    GammaSolved { theta: ThetaSpec, tol: f64, max_iter: usize, gamma_max: f64 },
}

/// Result of the brute-force minimality check.
#[derive(Debug, Clone)]
pub struct MinimalityReport {
    pub pass: bool,
    /// min over other candidates of V(other) - V(target); infinite when
    /// there is no other candidate.
    pub margin: f64,
    /// The candidate achieving the margin (diagonal entries).
    pub worst_permutation: Option<Vec<f64>>,
}

/// Enumerate all permutations of the target's diagonal, deduplicate, and
/// check that the target's Lyapunov value is strictly smallest.
pub fn verify_min_over_permutations(
    p_values: &[f64],
    h0: &HermitianMatrix,
    hks: &[HermitianMatrix],
    mask: &[bool],
    rhof_tilde: &DensityMatrix,
    mode: &VerifyMode,
) -> Result<MinimalityReport> {
    let n = rhof_tilde.dim();
    if n > ENUMERATION_MAX_DIM {
        return Err(Error::EnumerationTooLarge { dim: n, max: ENUMERATION_MAX_DIM });
    }
    let target_diag = rhof_tilde.populations();
    let map = PGamma::new(h0.clone(), hks.to_vec(), mask.to_vec(), p_values.to_vec())?;

    let value_of = |candidate: &DensityMatrix| -> Result<f64> {
        match mode {
            VerifyMode::GammaZero => {
                let p = map.p_at(0.0)?;
                Ok(trace_of_product(p.matrix(), candidate.matrix()).re)
            }
            VerifyMode::GammaSolved { theta, tol, max_iter, gamma_max } => {
                let solve = solve_gamma_with(
                    &map, candidate, rhof_tilde, theta, 0.0, *tol, *max_iter, *gamma_max,
                )?;
                let p = map.p_at(solve.value)?;
                Ok(trace_of_product(p.matrix(), candidate.matrix()).re)
            }
        }
    };

    let target_state = DensityMatrix::from_diagonal(&target_diag)?;
    let v_target = value_of(&target_state)?;

    let mut margin = f64::INFINITY;
    let mut worst = None;
    let mut pass = true;
    for perm in permutations(n) {
        let diag: Vec<f64> = perm.iter().map(|&i| target_diag[i]).collect();
        if diag
            .iter()
            .zip(target_diag.iter())
            .all(|(a, b)| (a - b).abs() <= 1e-12)
        {
            continue; // same diagonal as the target; not an "other" candidate
        }
        let candidate = DensityMatrix::from_diagonal(&diag)?;
        let v = value_of(&candidate)?;
        let gap = v - v_target;
        if gap < margin {
            margin = gap;
            worst = Some(diag);
        }
        if gap <= 0.0 {
            pass = false;
        }
    }
    Ok(MinimalityReport { pass, margin, worst_permutation: worst })
}

/// The candidate invariant set: every distinct permutation of the initial
/// state's spectrum placed on the diagonal.
#[derive(Debug, Clone)]
pub struct ESet {
    pub candidates: Vec<DensityMatrix>,
}

/// Enumerate the diagonal states with the initial state's spectrum, merging
/// duplicates within `dedup_tol`.
pub fn enumerate_e(rho0: &DensityMatrix, dedup_tol: f64) -> Result<ESet> {
    let n = rho0.dim();
    if n > ENUMERATION_MAX_DIM {
        return Err(Error::EnumerationTooLarge { dim: n, max: ENUMERATION_MAX_DIM });
    }
    let spectrum = rho0.spectrum()?;
    let mut seen: Vec<Vec<f64>> = Vec::new();
    for perm in permutations(n) {
        let diag: Vec<f64> = perm.iter().map(|&i| spectrum[i]).collect();
        let duplicate = seen.iter().any(|existing| {
            existing
                .iter()
                .zip(diag.iter())
                .all(|(a, b)| (a - b).abs() <= dedup_tol)
        });
        if !duplicate {
            seen.push(diag);
        }
    }
    let candidates = seen
        .into_iter()
        .map(|diag| {
            let clipped: Vec<f64> = diag.iter().map(|&x| x.max(0.0)).collect();
            let total: f64 = clipped.iter().sum();
            DensityMatrix::from_diagonal(
                &clipped.iter().map(|&x| x / total).collect::<Vec<_>>(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ESet { candidates })
}

/// All permutations of 0..n in lexicographic order (Heap's algorithm would
/// not be deterministic across calls in the same way; lexicographic is).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut result = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        result.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1])
        else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
    }
    result
}
