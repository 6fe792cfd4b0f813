//! End-to-end run pipeline: apply the target frame when the target is not
//! diagonal, simulate the closed loop in the working frame, and map the
//! trajectory back to the original frame.

use crate::dynamics::{conservation_report, simulate, ConservationReport, SimulationProblem, TrajectoryRecord};
use crate::error::Result;
use crate::matrix::DensityMatrix;
use crate::target::{
    diagonalize_target_resolved, map_back, offdiagonal_mass, transform_problem_with,
    transition_probability, InternalFrame, TargetFrame,
};

/// A target with off-diagonal mass below this is treated as diagonal and run
/// directly, with no frame change.
pub const DIAGONAL_TARGET_TOL: f64 = 1e-12;

/// The problem as it will actually be integrated.
#[derive(Debug, Clone)]
pub struct RunSetup {
    /// Problem in the working frame (equal to the input when the target is
    /// diagonal).
    pub working: SimulationProblem,
    /// The frame change applied, if any.
    pub frame: Option<TargetFrame>,
}

/// Build the working-frame problem. Non-diagonal targets are diagonalized by
/// a deterministic unitary (degenerate target eigenspaces resolved against
/// the internal Hamiltonian), and the control Hamiltonians and states are
/// conjugated into that frame. The internal Hamiltonian follows `internal`.
pub fn prepare(problem: &SimulationProblem, internal: InternalFrame) -> Result<RunSetup> {
    problem.validate()?;
    if offdiagonal_mass(&problem.rhof) <= DIAGONAL_TARGET_TOL {
        return Ok(RunSetup { working: problem.clone(), frame: None });
    }
    let frame = diagonalize_target_resolved(&problem.rhof, &problem.h0)?;
    let working = transform_problem_with(problem, &frame, internal)?;
    Ok(RunSetup { working, frame: Some(frame) })
}

/// A completed run with both frames' views of the trajectory.
#[derive(Debug)]
pub struct PipelineOutput {
    pub setup: RunSetup,
    /// Trajectory in the working frame (controls, V, conservation).
    pub trajectory: TrajectoryRecord,
    /// Recorded states mapped back to the original frame.
    pub original_states: Vec<DensityMatrix>,
    pub final_original: DensityMatrix,
    /// tr(rho rho_f) / tr(rho_f^2) of the final state against the original
    /// target.
    pub transition_probability: f64,
    pub conservation: ConservationReport,
}

/// Prepare, simulate, and map back.
pub fn run(problem: &SimulationProblem, internal: InternalFrame) -> Result<PipelineOutput> {
    let setup = prepare(problem, internal)?;
    let trajectory = simulate(&setup.working)?;
    let original_states: Vec<DensityMatrix> = match &setup.frame {
        None => trajectory.states.clone(),
        Some(frame) => trajectory.states.iter().map(|s| map_back(s, frame)).collect(),
    };
    let final_original = original_states.last().expect("at least one state").clone();
    let probability = transition_probability(&final_original, &problem.rhof)?;
    let conservation = conservation_report(&trajectory);
    Ok(PipelineOutput {
        setup,
        trajectory,
        original_states,
        final_original,
        transition_probability: probability,
        conservation,
    })
}
