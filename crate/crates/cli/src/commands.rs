//! The check / design-p / run / sweep subcommands.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde_json::json;

use liouville_control::{
    conservation_report, connectivity_report, design_p, lemma1_margin, pipeline,
    ConservationReport, PGamma, PipelineOutput,
};

use crate::config::{apply_path, parse_config, resolve, ResolvedConfig, RunConfig};

use crate::csvout;

pub fn load(config_path: &Path) -> Result<(RunConfig, serde_json::Value)> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("config: cannot read {}", config_path.display()))?;
    let raw: serde_json::Value = serde_json::from_str(&text).context("config schema violation")?;
    let config = parse_config(&text)?;
    Ok((config, raw))
}

/// `check`: condition verdicts at gamma = 0 and across a gamma scan.
/// Exit 0 when the conditions are satisfiable somewhere in the scan,
/// 2 when the system stays degenerate across the whole range.
pub fn cmd_check(resolved: &ResolvedConfig) -> Result<i32> {
    let problem = &resolved.problem;
    let tol = &resolved.tolerances;
    let mask = &problem.controller.mask;
    let p_values = &problem.controller.p_values;

    let report_at = |gamma: f64| {
        connectivity_report(
            &problem.h0,
            &problem.hks,
            mask,
            p_values,
            gamma,
            tol.regularity_tol,
            tol.connectedness_tol,
        )
    };

    let zero = report_at(0.0)?;
    println!("conditions at gamma = 0:");
    let one_based = |pair: (usize, usize)| (pair.0 + 1, pair.1 + 1);
    println!(
        "  strongly regular: {} (min Bohr gap {:.3e}, closest pair {:?} vs {:?})",
        zero.regularity.strongly_regular,
        zero.regularity.min_gap,
        one_based(zero.regularity.witness.0),
        one_based(zero.regularity.witness.1),
    );
    println!(
        "  fully connected:  {} (failing pairs {:?})",
        zero.connectedness.fully_connected,
        zero.connectedness.failures.iter().map(|&p| one_based(p)).collect::<Vec<_>>()
    );
    println!(
        "  P diag distinct:  {} (min gap {:.3e}, off-diagonal mass {:.3e})",
        zero.p_diag_distinct, zero.p_min_diag_gap, zero.p_offdiag_mass
    );

    let (lo, hi, points) = tol.check_gamma_scan;
    if points < 2 {
        bail!("config: tolerances.check_gamma_scan needs at least 2 points");
    }
    let grid: Vec<f64> =
        (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let mut first_ok: Option<f64> = None;
    for &gamma in &grid {
        let report = report_at(gamma)?;
        if report.regularity.strongly_regular && report.connectedness.fully_connected {
            first_ok = Some(gamma);
            break;
        }
    }

    println!("gamma scan over [{lo}, {hi}] ({points} points):");
    match first_ok {
        Some(gamma) => {
            let report = report_at(gamma)?;
            println!("  smallest gamma satisfying conditions i-ii: {gamma}");
            println!(
                "  at that gamma: P diag min gap {:.3e}, off-diagonal mass {:.3e}",
                report.p_min_diag_gap, report.p_offdiag_mass
            );
        }
        None => println!("  no gamma in the scan satisfies conditions i-ii"),
    }

    let map = PGamma::new(
        problem.h0.clone(),
        problem.hks.clone(),
        mask.clone(),
        p_values.clone(),
    )
    .map_err(|e| anyhow!("{e}"))?;
    let margin = lemma1_margin(&problem.controller.theta, &map, &grid)?;
    println!(
        "existence margin: sup|theta'| = {:.4}, bound 1/(2(1+C)) = {:.4} (C = {:.4}); {}",
        margin.sup_theta_derivative,
        margin.bound,
        margin.c_fd,
        if margin.satisfied { "satisfied" } else { "VIOLATED (warning)" }
    );

    Ok(if first_ok.is_some() { 0 } else { 2 })
}

/// `design-p`: derive P values from the diagonalized target.
pub fn cmd_design_p(resolved: &ResolvedConfig, config: &RunConfig) -> Result<i32> {
    let problem = &resolved.problem;
    let frame =
        liouville_control::diagonalize_target_resolved(&problem.rhof, &problem.h0)?;
    let populations = frame.rhof_tilde.populations();
    let design = design_p(
        &populations,
        config.controller.p_min_gap,
        config.controller.p_base,
    )?;
    let out = json!({
        "target_populations": populations,
        "P": design.values,
        "min_gap": design.min_gap,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

pub struct RunArtifacts {
    pub output: PipelineOutput,
    pub conservation: ConservationReport,
}

/// Run the pipeline and write trajectory.csv, controls.csv and summary.json.
pub fn cmd_run(resolved: &ResolvedConfig, out_dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
    let output = pipeline::run(&resolved.problem, resolved.internal_frame)
        .map_err(|e| anyhow!("{e}"))?;
    let conservation = conservation_report(&output.trajectory);

    let dim = resolved.problem.h0.dim();
    let controls = resolved.problem.hks.len();

    // trajectory rows: recorded states in the requested frame
    let mut trajectory_csv = csvout::trajectory_header(dim, controls);
    trajectory_csv.push('\n');
    for (slot, &step) in output.trajectory.state_steps.iter().enumerate() {
        let state = if resolved.tilde_output {
            output.trajectory.states[slot].clone()
        } else {
            output.original_states[slot].clone()
        };
        let control = &output.trajectory.controls[step.min(output.trajectory.controls.len() - 1)];
        let cons = &output.trajectory.conservation[step.min(output.trajectory.conservation.len() - 1)];
        trajectory_csv.push_str(&csvout::trajectory_row(
            output.trajectory.times[slot],
            &state,
            control,
            cons.trace_error,
            cons.hermiticity_defect,
        ));
        trajectory_csv.push('\n');
    }
    fs::write(out_dir.join("trajectory.csv"), trajectory_csv)?;

    let mut controls_csv = csvout::controls_header(controls);
    controls_csv.push('\n');
    for control in &output.trajectory.controls {
        controls_csv.push_str(&csvout::controls_row(control));
        controls_csv.push('\n');
    }
    fs::write(out_dir.join("controls.csv"), controls_csv)?;

    let pops = output.final_original.populations();
    let final_v = output.trajectory.controls.last().map(|c| c.lyapunov).unwrap_or(f64::NAN);
    let summary = json!({
        "final_populations": pops,
        "transition_probability": output.transition_probability,
        "final_V": final_v,
        "max_v_increase": conservation.max_v_increase,
        "max_trace_error": conservation.max_trace_error,
        "max_hermiticity_defect": conservation.max_hermiticity_defect,
        "max_spectrum_drift": conservation.max_spectrum_drift,
        "steps": output.trajectory.controls.len() - 1,
        "stopped_early": output.trajectory.stopped_early,
        "frame_applied": output.setup.frame.is_some(),
        "p_design_auto": resolved.p_design_auto,
        "p_values": resolved.problem.controller.p_values,
    });
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;

    Ok(RunArtifacts { output, conservation })
}

pub fn print_run_summary(artifacts: &RunArtifacts) {
    let pops = artifacts.output.final_original.populations();
    let popstr =
        pops.iter().map(|p| format!("{p:.6}")).collect::<Vec<_>>().join(", ");
    println!(
        "final populations [{popstr}]; transition probability {:.6}; max V increase {:.3e}; \
         max trace error {:.3e}; max hermiticity defect {:.3e}; max spectrum drift {:.3e}",
        artifacts.output.transition_probability,
        artifacts.conservation.max_v_increase,
        artifacts.conservation.max_trace_error,
        artifacts.conservation.max_hermiticity_defect,
        artifacts.conservation.max_spectrum_drift,
    );
}

/// `sweep`: cartesian product over the configured axes; one CSV row per
/// combination in deterministic order; per-cell failures isolated.
pub fn cmd_sweep(raw: &serde_json::Value, config: &RunConfig, out_dir: &Path) -> Result<i32> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow!("config: sweep block missing"))?;
    match sweep.metric.as_str() {
        "transition_probability" | "final_V" => {}
        other => bail!("config: sweep.metric: unknown metric {other:?}"),
    }
    let sizes: Vec<usize> = sweep.axes.iter().map(|a| a.values.len()).collect();
    let total: usize = sizes.iter().product::<usize>().max(1);
    if total > sweep.cap {
        bail!("config: sweep size {total} exceeds cap {}", sweep.cap);
    }

    // cartesian product in row-major order over the axes
    let combos: Vec<Vec<usize>> = (0..total)
        .map(|mut cell| {
            let mut combo = vec![0; sizes.len()];
            for (axis, &size) in sizes.iter().enumerate().rev() {
                combo[axis] = cell % size;
                cell /= size;
            }
            combo
        })
        .collect();

    let results: Vec<(Vec<String>, f64, String)> = combos
        .par_iter()
        .map(|combo| {
            let mut cell_raw = raw.clone();
            let mut labels = Vec::with_capacity(combo.len());
            for (axis, &choice) in sweep.axes.iter().zip(combo.iter()) {
                let value = &axis.values[choice];
                labels.push(value.to_string());
                if let Err(e) = apply_path(&mut cell_raw, &axis.path, value) {
                    return (labels, f64::NAN, format!("{e:#}"));
                }
            }
            let run_cell = || -> Result<f64> {
                let text = serde_json::to_string(&cell_raw)?;
                let cell_config = parse_config(&text)?;
                let resolved = resolve(&cell_config)?;
                let output = pipeline::run(&resolved.problem, resolved.internal_frame)
                    .map_err(|e| anyhow!("{e}"))?;
                Ok(match sweep.metric.as_str() {
                    "transition_probability" => output.transition_probability,
                    _ => output.trajectory.controls.last().map(|c| c.lyapunov).unwrap_or(f64::NAN),
                })
            };
            match run_cell() {
                Ok(metric) => (labels, metric, String::new()),
                Err(e) => (labels, f64::NAN, format!("{e:#}").replace([',', '\n'], ";")),
            }
        })
        .collect();

    fs::create_dir_all(out_dir)?;
    let mut csv = sweep
        .axes
        .iter()
        .map(|a| a.path.replace(['.', '[', ']'], "_"))
        .collect::<Vec<_>>()
        .join(",");
    if csv.is_empty() {
        csv = "cell".into();
    }
    csv.push_str(&format!(",{},error\n", sweep.metric));
    for (labels, metric, error) in &results {
        let label_part = if labels.is_empty() { "0".to_string() } else { labels.join(",") };
        csv.push_str(&format!("{label_part},{},{error}\n", csvout::fmt_f64(*metric)));
    }
    let path = out_dir.join("sweep.csv");
    let mut file = fs::File::create(&path)?;
    file.write_all(csv.as_bytes())?;
    println!("wrote {} rows to {}", results.len(), path.display());
    Ok(0)
}

