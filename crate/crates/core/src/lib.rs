//! Simulator and design toolkit for implicit Lyapunov control of closed
//! quantum systems governed by the Liouville equation.
//!
//! The controller steers a density matrix toward a unitarily equivalent
//! target in the degenerate cases (internal Hamiltonian not strongly regular
//! and/or control Hamiltonians not fully connected) by adding an implicitly
//! defined perturbation to the control field. The perturbation is the fixed
//! point of gamma = theta(tr(P_gamma rho) - tr(P_gamma rho_f)), where the
//! designed operator P_gamma shares the eigenvectors of the perturbed
//! internal Hamiltonian.

pub mod controller;
pub mod dynamics;
pub mod error;
pub mod frame;
pub mod matrix;
pub mod pdesign;
pub mod perturbation;
pub mod pipeline;
pub mod target;

pub use controller::{
    control_residual, control_v, gamma_dot_diagnostic, lyapunov_value, trace_drive,
    vdot_diagnostic, ControlRecord, ControllerConfig, FeedbackKind,
};
pub use dynamics::{
    conservation_report, simulate, step, ConservationReport, ConservationSample,
    SimulationProblem, TrajectoryRecord,
};
pub use error::{Error, Result};
pub use frame::{
    build_frame, build_p, check_full_connectedness, check_p_diag_distinct,
    check_strong_regularity, connectivity_report, dp_dgamma, p_offdiagonal_mass,
    perturbed_hamiltonian, to_eigenbasis, ConnectednessReport, ConnectivityReport, PGamma,
    RegularityReport, SpectralFrame,
};
pub use matrix::{
    commutator, eig_hermitian, expm_unitary, validate_density, CMatrix, DensityMatrix,
    Eigensystem, HermitianMatrix, UnitaryMatrix,
};
pub use pdesign::{
    design_p, enumerate_e, verify_min_over_permutations, ESet, MinimalityReport, PDesign,
    VerifyMode,
};
pub use perturbation::{
    lemma1_margin, solve_gamma, solve_gamma_with, theta_eval, GammaSolve, MarginReport,
    SolveMethod, ThetaKind, ThetaSpec,
};
pub use pipeline::{prepare, run, PipelineOutput, RunSetup};
pub use target::{
    diagonalize_target, diagonalize_target_resolved, map_back, offdiagonal_mass,
    transform_problem, transform_problem_with, transition_probability, InternalFrame,
    TargetFrame,
};

/// Test-only independent oracles.
#[cfg(test)]
pub(crate) mod test_oracles {
    use crate::matrix::CMatrix;

    /// Eigenvalues of a 3x3 Hermitian matrix as the roots of its
    /// characteristic polynomial, found by bracketed bisection. Fully
    /// independent of the production eigensolver.
    pub fn cubic_eigenvalues_of(h: &CMatrix) -> [f64; 3] {
        assert_eq!(h.nrows(), 3);
        // det(H - x I) = -x^3 + c2 x^2 + c1 x + c0
        let tr: f64 = (0..3).map(|i| h[(i, i)].re).sum();
        let mut sum_minors = 0.0;
        for i in 0..3 {
            for j in (i + 1)..3 {
                sum_minors += h[(i, i)].re * h[(j, j)].re - (h[(i, j)] * h[(j, i)]).re;
            }
        }
        let det = {
            let m = h;
            (m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]))
                .re
        };
        // p(x) = x^3 - tr x^2 + sum_minors x - det (monic convention)
        let p = |x: f64| ((x - tr) * x + sum_minors) * x - det;

        // Hermitian: three real roots inside the Gershgorin bound
        let bound = (0..3)
            .map(|i| (0..3).map(|j| h[(i, j)].norm()).sum::<f64>())
            .fold(0.0f64, f64::max)
            + 1.0;
        let mut roots = Vec::new();
        let samples = 20_000;
        let mut x_prev = -bound;
        let mut p_prev = p(x_prev);
        for k in 1..=samples {
            let x = -bound + 2.0 * bound * k as f64 / samples as f64;
            let px = p(x);
            if p_prev == 0.0 {
                roots.push(x_prev);
            } else if p_prev * px < 0.0 {
                let (mut lo, mut hi) = (x_prev, x);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if p(lo) * p(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x_prev = x;
            p_prev = px;
        }
        assert_eq!(roots.len(), 3, "expected three distinct real roots");
        [roots[0], roots[1], roots[2]]
    }
}
