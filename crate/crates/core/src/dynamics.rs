//! Closed-loop integration of the controlled Liouville equation with
//! piecewise-constant controls and exact unitary steps.

use crate::controller::{
    control_v, lyapunov_value, ControlRecord, ControllerConfig,
};
use crate::error::{Error, Result};
use crate::frame::PGamma;
use crate::matrix::{
    eig_hermitian, expm_unitary, hermiticity_defect, trace, trace_of_product, DensityMatrix,
    HermitianMatrix,
};
use crate::perturbation::{solve_gamma_with, theta_eval};
use crate::target::transition_probability;

/// Tolerance on the spectra of rho0 and rhof being equal (unitary
/// equivalence, the reachability class of closed-system control).
pub const SPECTRUM_MATCH_TOL: f64 = 1e-8;

/// A closed-loop simulation task.
#[derive(Debug, Clone)]
pub struct SimulationProblem {
    pub h0: HermitianMatrix,
    pub hks: Vec<HermitianMatrix>,
    pub rho0: DensityMatrix,
    pub rhof: DensityMatrix,
    pub controller: ControllerConfig,
    pub dt: f64,
    pub duration: f64,
    /// Keep every `record_stride`-th state (controls are kept every step).
    pub record_stride: usize,
    /// Stop once the transition probability exceeds this, if set.
    pub early_stop_probability: Option<f64>,
}

impl SimulationProblem {
    pub fn validate(&self) -> Result<()> {
        let dim = self.h0.dim();
        for hk in &self.hks {
            if hk.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: hk.dim() });
            }
        }
        if self.rho0.dim() != dim || self.rhof.dim() != dim {
            return Err(Error::DimensionMismatch { left: dim, right: self.rho0.dim() });
        }
        if !(self.dt > 0.0) {
            return Err(Error::BadConfig { reason: format!("dt = {} must be positive", self.dt) });
        }
        if self.duration < 0.0 {
            return Err(Error::BadConfig {
                reason: format!("duration = {} must be nonnegative", self.duration),
            });
        }
        if self.record_stride == 0 {
            return Err(Error::BadConfig { reason: "record_stride must be at least 1".into() });
        }
        self.controller.validate(self.hks.len(), dim)?;
        let mut s0 = self.rho0.spectrum()?;
        let mut sf = self.rhof.spectrum()?;
        s0.sort_by(f64::total_cmp);
        sf.sort_by(f64::total_cmp);
        let deviation = s0
            .iter()
            .zip(sf.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if deviation > SPECTRUM_MATCH_TOL {
            return Err(Error::SpectrumMismatch { deviation, tol: SPECTRUM_MATCH_TOL });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Free evolution (no feedback authority) runs do not promise descent.
    pub fn is_closed_loop(&self) -> bool {
        self.controller.gains.iter().any(|&k| k > 0.0) || self.controller.theta.slope > 0.0
    }
}

/// Per-step conservation metrics of the closed-system flow.
#[derive(Debug, Clone, Copy)]
pub struct ConservationSample {
    pub step: usize,
    pub trace_error: f64,
    pub hermiticity_defect: f64,
    /// max |lambda_i(rho) - lambda_i(rho_0)| over the sorted spectra.
    pub spectrum_drift: f64,
}

/// Recorded closed-loop trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Times of the recorded states (strided).
    pub times: Vec<f64>,
    /// Strided states, aligned with `times`.
    pub states: Vec<DensityMatrix>,
    /// Step index of each recorded state.
    pub state_steps: Vec<usize>,
    /// One control record per step, including the final state's controls.
    pub controls: Vec<ControlRecord>,
    pub conservation: Vec<ConservationSample>,
    pub closed_loop: bool,
    /// Step at which the early-stop threshold was crossed, if it was.
    pub stopped_early: Option<usize>,
}

/// Summary of a trajectory's conservation behaviour.
#[derive(Debug, Clone, Copy)]
pub struct ConservationReport {
    pub max_trace_error: f64,
    pub max_hermiticity_defect: f64,
    pub max_spectrum_drift: f64,
    /// Largest single-step increase of V (negative when V is monotone).
    pub max_v_increase: f64,
    pub closed_loop: bool,
}

/// One increment of the flow: rho' = U rho U^H with
/// U = exp(-i (H0 + sum_k u_k H_k) dt).
pub fn step(
    rho: &DensityMatrix,
    h0: &HermitianMatrix,
    hks: &[HermitianMatrix],
    u: &[f64],
    dt: f64,
) -> Result<DensityMatrix> {
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::BadConfig { reason: "non-finite control value".into() });
    }
    let mut h = h0.matrix().clone();
    for (hk, &uk) in hks.iter().zip(u.iter()) {
        h += hk.matrix().scale(uk);
    }
    let propagator = expm_unitary(&HermitianMatrix::new(h)?, dt)?;
    Ok(DensityMatrix::new_unchecked(propagator.conjugate_back(rho.matrix())))
}

fn sorted_spectrum(rho: &DensityMatrix) -> Result<Vec<f64>> {
    let sym = (rho.matrix() + rho.matrix().adjoint()).scale(0.5);
    let mut values = eig_hermitian(&HermitianMatrix::with_tol(sym, 1e-6)?)?.values;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Integrates the closed loop: per step, solve gamma (warm started), build
/// the frame and P, evaluate the feedback, record, propagate.
pub fn simulate(problem: &SimulationProblem) -> Result<TrajectoryRecord> {
    problem.validate()?;
    let map = PGamma::new(
        problem.h0.clone(),
        problem.hks.clone(),
        problem.controller.mask.clone(),
        problem.controller.p_values.clone(),
    )?;
    let nsteps = problem.steps();
    let spectrum0 = sorted_spectrum(&problem.rho0)?;
    let theta = problem.controller.theta;

    let mut rho = problem.rho0.clone();
    let mut warm = 0.0f64;
    let mut record = TrajectoryRecord {
        times: Vec::new(),
        states: Vec::new(),
        state_steps: Vec::new(),
        controls: Vec::with_capacity(nsteps + 1),
        conservation: Vec::with_capacity(nsteps + 1),
        closed_loop: problem.is_closed_loop(),
        stopped_early: None,
    };

    for n in 0..=nsteps {
        let t = n as f64 * problem.dt;
        let wrap = |source: Error| Error::SimulationAborted { step: n, source: Box::new(source) };

        let solve = solve_gamma_with(
            &map,
            &rho,
            &problem.rhof,
            &theta,
            warm,
            problem.controller.gamma_tol,
            problem.controller.gamma_max_iter,
            problem.controller.gamma_max,
        )
        .map_err(wrap)?;
        let gamma = solve.value;
        let p = map.p_at(gamma).map_err(wrap)?;
        let v = control_v(&p, &problem.hks, &rho, &problem.controller).map_err(wrap)?;
        let u: Vec<f64> = problem
            .controller
            .mask
            .iter()
            .zip(v.iter())
            .map(|(&on, &vk)| if on { gamma + vk } else { vk })
            .collect();
        let lyapunov = lyapunov_value(&p, &rho).map_err(wrap)?;

        // analytic derivative diagnostics; withheld where singular
        let diff = rho.matrix() - problem.rhof.matrix();
        let s = trace_of_product(p.matrix(), &diff).re;
        let (_, theta_deriv) = theta_eval(&theta, s);
        let (vdot, gdot) = match map.dp_dgamma_fd(gamma, 1e-6) {
            Ok(dp) => (
                crate::controller::vdot_diagnostic(
                    &p, &dp, theta_deriv, &rho, &problem.rhof, &problem.hks, &v,
                )
                .ok(),
                crate::controller::gamma_dot_diagnostic(
                    theta_deriv, &dp, &rho, &problem.rhof, &p, &problem.hks, &v,
                )
                .ok(),
            ),
            Err(_) => (None, None),
        };

        record.controls.push(ControlRecord {
            t,
            gamma,
            v,
            u: u.clone(),
            lyapunov,
            vdot_analytic: vdot,
            gamma_dot_analytic: gdot,
            solver_iterations: solve.iterations,
            solver_residual: solve.residual,
        });

        let tr = trace(rho.matrix());
        let spectrum = sorted_spectrum(&rho).map_err(wrap)?;
        let drift = spectrum
            .iter()
            .zip(spectrum0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        record.conservation.push(ConservationSample {
            step: n,
            trace_error: ((tr.re - 1.0).powi(2) + tr.im.powi(2)).sqrt(),
            hermiticity_defect: hermiticity_defect(rho.matrix()),
            spectrum_drift: drift,
        });

        if n % problem.record_stride == 0 || n == nsteps {
            record.times.push(t);
            record.states.push(rho.clone());
            record.state_steps.push(n);
        }

        if let Some(threshold) = problem.early_stop_probability {
            if transition_probability(&rho, &problem.rhof)? >= threshold {
                record.stopped_early = Some(n);
                break;
            }
        }

        if n < nsteps {
            rho = step(&rho, &problem.h0, &problem.hks, &u, problem.dt).map_err(wrap)?;
            warm = gamma;
        }
    }

    Ok(record)
}

/// Summarize a trajectory's conservation metrics.
pub fn conservation_report(traj: &TrajectoryRecord) -> ConservationReport {
    let max_trace_error =
        traj.conservation.iter().map(|c| c.trace_error).fold(0.0f64, f64::max);
    let max_hermiticity_defect =
        traj.conservation.iter().map(|c| c.hermiticity_defect).fold(0.0f64, f64::max);
    let max_spectrum_drift =
        traj.conservation.iter().map(|c| c.spectrum_drift).fold(0.0f64, f64::max);
    let max_v_increase = traj
        .controls
        .windows(2)
        .map(|w| w[1].lyapunov - w[0].lyapunov)
        .fold(f64::NEG_INFINITY, f64::max);
    ConservationReport {
        max_trace_error,
        max_hermiticity_defect,
        max_spectrum_drift,
        max_v_increase: if max_v_increase.is_finite() { max_v_increase } else { 0.0 },
        closed_loop: traj.closed_loop,
    }
}
