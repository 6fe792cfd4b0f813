//! Lyapunov value, feedback law, and the analytic derivative diagnostics.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::matrix::{trace_of_product, DensityMatrix, HermitianMatrix};
use crate::perturbation::ThetaSpec;

/// Imaginary parts of physically real traces must stay below this.
pub const REAL_TRACE_TOL: f64 = 1e-12;

/// Shape of the per-control feedback map f_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeedbackKind {
    /// f(x) = x (the reference experiment's choice).
    Identity,
    /// f(x) = cap * tanh(x / cap): odd, monotone, bounded by `cap`.
    OddSaturating { cap: f64 },
}

impl FeedbackKind {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            FeedbackKind::Identity => x,
            FeedbackKind::OddSaturating { cap } => cap * (x / cap).tanh(),
        }
    }
}

/// Controller parameters shared by the solver and the simulator.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    /// Which controls carry the shared perturbation (C_k in {0, 1}).
    pub mask: Vec<bool>,
    pub theta: ThetaSpec,
    /// Feedback gains K_k > 0.
    pub gains: Vec<f64>,
    pub feedback: Vec<FeedbackKind>,
    /// Designed eigenvalues P_1..P_N of the operator P, all > 0.
    pub p_values: Vec<f64>,
    pub gamma_tol: f64,
    pub gamma_max_iter: usize,
    /// Bisection-fallback search bound for the linear theta kind.
    pub gamma_max: f64,
}

impl ControllerConfig {
    pub fn validate(&self, control_count: usize, dim: usize) -> Result<()> {
        if self.mask.len() != control_count {
            return Err(Error::BadConfig {
                reason: format!(
                    "mask length {} != number of controls {}",
                    self.mask.len(),
                    control_count
                ),
            });
        }
        if !self.mask.iter().any(|&m| m) {
            return Err(Error::BadConfig { reason: "mask selects no control".into() });
        }
        if self.gains.len() != control_count {
            return Err(Error::BadConfig {
                reason: format!(
                    "gain count {} != number of controls {}",
                    self.gains.len(),
                    control_count
                ),
            });
        }
        if self.feedback.len() != control_count {
            return Err(Error::BadConfig {
                reason: format!(
                    "feedback count {} != number of controls {}",
                    self.feedback.len(),
                    control_count
                ),
            });
        }
        // zero gain (with zero slope) is the free-evolution degenerate mode
        if let Some(k) = self.gains.iter().find(|&&k| k < 0.0) {
            return Err(Error::BadConfig { reason: format!("gain {k} is negative") });
        }
        if self.p_values.len() != dim {
            return Err(Error::BadConfig {
                reason: format!("P has {} values for dimension {dim}", self.p_values.len()),
            });
        }
        if let Some((index, &value)) =
            self.p_values.iter().enumerate().find(|(_, &v)| v <= 0.0)
        {
            return Err(Error::NonPositiveP { value, index });
        }
        if self.gamma_tol <= 0.0 || self.gamma_max <= 0.0 || self.gamma_max_iter == 0 {
            return Err(Error::BadConfig { reason: "gamma solver parameters must be positive".into() });
        }
        Ok(())
    }
}

/// One step's control data as recorded along a trajectory.
#[derive(Debug, Clone)]
pub struct ControlRecord {
    pub t: f64,
    pub gamma: f64,
    pub v: Vec<f64>,
    /// u_k = C_k gamma + v_k, exactly.
    pub u: Vec<f64>,
    pub lyapunov: f64,
    pub vdot_analytic: Option<f64>,
    pub gamma_dot_analytic: Option<f64>,
    pub solver_iterations: usize,
    pub solver_residual: f64,
}

/// V = tr(P rho); the imaginary part must vanish to tolerance.
pub fn lyapunov_value(p: &HermitianMatrix, rho: &DensityMatrix) -> Result<f64> {
    if p.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { left: p.dim(), right: rho.dim() });
    }
    let tr = trace_of_product(p.matrix(), rho.matrix());
    if tr.im.abs() > REAL_TRACE_TOL {
        return Err(Error::ImaginaryTrace { imag: tr.im, tol: REAL_TRACE_TOL });
    }
    Ok(tr.re)
}

/// T_k = i tr([P, H_k] rho), computed from tr(P H_k rho) - tr(H_k P rho)
/// without forming the commutator matrix. The trace is purely imaginary for
/// Hermitian inputs; its real part is asserted small.
pub fn trace_drive(p: &HermitianMatrix, hk: &HermitianMatrix, rho: &DensityMatrix) -> Result<f64> {
    let ph = p.matrix() * hk.matrix();
    let w = trace_of_product(&ph, rho.matrix())
        - trace_of_product(&ph.adjoint(), rho.matrix());
    // w = tr([P, H_k] rho) is anti-Hermitian-like: purely imaginary.
    let t = (C64::i() * w).re;
    if (C64::i() * w).im.abs() > REAL_TRACE_TOL {
        return Err(Error::ImaginaryTrace { imag: (C64::i() * w).im, tol: REAL_TRACE_TOL });
    }
    Ok(t)
}

/// Feedback law v_k = K_k f_k(i tr([P, H_k] rho)).
pub fn control_v(
    p: &HermitianMatrix,
    hks: &[HermitianMatrix],
    rho: &DensityMatrix,
    config: &ControllerConfig,
) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(hks.len());
    for (k, hk) in hks.iter().enumerate() {
        let t = trace_drive(p, hk, rho)?;
        v.push(config.gains[k] * config.feedback[k].apply(t));
    }
    Ok(v)
}

/// Residual feedback magnitude at a state (diagnostic: for complex data the
/// target need not be an exact closed-loop equilibrium).
pub fn control_residual(
    p: &HermitianMatrix,
    hks: &[HermitianMatrix],
    rho: &DensityMatrix,
    config: &ControllerConfig,
) -> Result<f64> {
    let v = control_v(p, hks, rho, config)?;
    Ok(v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

fn real_trace_product(a: &HermitianMatrix, m: &crate::matrix::CMatrix) -> f64 {
    trace_of_product(a.matrix(), m).re
}

/// Analytic dV/dt along the closed loop:
/// -(1 + theta' tr(P' rho_f)) / (1 - theta' tr(P' (rho - rho_f))) *
/// sum_k T_k v_k. Errors if the denominator vanishes.
#[allow(clippy::too_many_arguments)]
pub fn vdot_diagnostic(
    p: &HermitianMatrix,
    dp_dgamma: &HermitianMatrix,
    theta_deriv: f64,
    rho: &DensityMatrix,
    rho_f: &DensityMatrix,
    hks: &[HermitianMatrix],
    v: &[f64],
) -> Result<f64> {
    let diff = rho.matrix() - rho_f.matrix();
    let denominator = 1.0 - theta_deriv * real_trace_product(dp_dgamma, &diff);
    if denominator.abs() < 1e-12 {
        return Err(Error::VanishingDenominator { value: denominator });
    }
    let numerator = 1.0 + theta_deriv * real_trace_product(dp_dgamma, rho_f.matrix());
    let mut drive = 0.0;
    for (hk, &vk) in hks.iter().zip(v.iter()) {
        drive += trace_drive(p, hk, rho)? * vk;
    }
    Ok(-(numerator / denominator) * drive)
}

/// Analytic dgamma/dt along the closed loop:
/// theta' sum_k v_k T_k / (theta' tr(P' (rho - rho_f)) - 1).
#[allow(clippy::too_many_arguments)]
pub fn gamma_dot_diagnostic(
    theta_deriv: f64,
    dp_dgamma: &HermitianMatrix,
    rho: &DensityMatrix,
    rho_f: &DensityMatrix,
    p: &HermitianMatrix,
    hks: &[HermitianMatrix],
    v: &[f64],
) -> Result<f64> {
    let diff = rho.matrix() - rho_f.matrix();
    let denominator = theta_deriv * real_trace_product(dp_dgamma, &diff) - 1.0;
    if denominator.abs() < 1e-12 {
        return Err(Error::VanishingDenominator { value: denominator });
    }
    let mut drive = 0.0;
    for (hk, &vk) in hks.iter().zip(v.iter()) {
        drive += trace_drive(p, hk, rho)? * vk;
    }
    Ok(theta_deriv * drive / denominator)
}
