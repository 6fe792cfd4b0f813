//! Error type shared by all library modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left}x{left} vs {right}x{right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not Hermitian: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("matrix is not unitary: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotUnitary { defect: f64, tol: f64 },

    #[error("density matrix trace is {trace:.12}, expected 1 within {tol:.3e}")]
    BadTrace { trace: f64, tol: f64 },

    #[error("density matrix has eigenvalue {eigenvalue:.3e} below -{tol:.3e}")]
    NegativeEigenvalue { eigenvalue: f64, tol: f64 },

    #[error("eigensolver failed to converge for a {dim}x{dim} matrix")]
    EigenFailed { dim: usize },

    #[error("eigenpair residual {residual:.3e} exceeds {tol:.3e}")]
    EigenResidual { residual: f64, tol: f64 },

    #[error(
        "branch crossing at gamma={gamma:.6}: best overlap {overlap:.4} for branch {branch} is below 0.7"
    )]
    BranchCrossing { gamma: f64, overlap: f64, branch: usize },

    #[error("ambiguous branch assignment at gamma={gamma:.6}: overlaps tie within {tol:.1e}")]
    BranchAmbiguous { gamma: f64, tol: f64 },

    #[error("eigenvalue gap {gap:.3e} at gamma={gamma:.6} below degeneracy guard {guard:.1e}")]
    DegenerateGap { gap: f64, gamma: f64, guard: f64 },

    #[error("P eigenvalue {value} at index {index} is not positive")]
    NonPositiveP { value: f64, index: usize },

    #[error(
        "bisection bracket failure on [{lo:.4}, {hi:.4}]: F({lo:.4})={f_lo:.3e}, F({hi:.4})={f_hi:.3e}"
    )]
    BisectionBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("gamma solver did not converge after {iterations} iterations; residual {residual:.3e}")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("trace expected real: imaginary part {imag:.3e} exceeds {tol:.3e}")]
    ImaginaryTrace { imag: f64, tol: f64 },

    #[error("diagnostic denominator {value:.3e} vanishes; value withheld")]
    VanishingDenominator { value: f64 },

    #[error("spectra of rho0 and rhof differ by {deviation:.3e} (must match within {tol:.3e})")]
    SpectrumMismatch { deviation: f64, tol: f64 },

    #[error("permutation enumeration limited to N <= {max}, got N = {dim}")]
    EnumerationTooLarge { dim: usize, max: usize },

    #[error("invalid controller config: {reason}")]
    BadConfig { reason: String },

    #[error("simulation aborted at step {step}: {source}")]
    SimulationAborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
