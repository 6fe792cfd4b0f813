//! CSV emission. Values carry 17 significant digits so they re-parse to
//! bit-identical doubles; LF line endings.

use std::fmt::Write as _;

use liouville_control::{ControlRecord, DensityMatrix};

/// 17 significant digits; "NaN" for withheld diagnostics.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Header: t, upper-triangle rho entries (re and im per i <= j), then
/// V, gamma, v_1..v_r, u_1..u_r, trace_err, herm_err.
pub fn trajectory_header(dim: usize, controls: usize) -> String {
    let mut header = String::from("t");
    for i in 1..=dim {
        for j in i..=dim {
            let _ = write!(header, ",rho_{i}{j}_re,rho_{i}{j}_im");
        }
    }
    header.push_str(",V,gamma");
    for k in 1..=controls {
        let _ = write!(header, ",v_{k}");
    }
    for k in 1..=controls {
        let _ = write!(header, ",u_{k}");
    }
    header.push_str(",trace_err,herm_err");
    header
}

pub fn trajectory_row(
    t: f64,
    state: &DensityMatrix,
    control: &ControlRecord,
    trace_err: f64,
    herm_err: f64,
) -> String {
    let dim = state.dim();
    let mut row = fmt_f64(t);
    for i in 0..dim {
        for j in i..dim {
            let z = state.matrix()[(i, j)];
            let _ = write!(row, ",{},{}", fmt_f64(z.re), fmt_f64(z.im));
        }
    }
    let _ = write!(row, ",{},{}", fmt_f64(control.lyapunov), fmt_f64(control.gamma));
    for v in &control.v {
        let _ = write!(row, ",{}", fmt_f64(*v));
    }
    for u in &control.u {
        let _ = write!(row, ",{}", fmt_f64(*u));
    }
    let _ = write!(row, ",{},{}", fmt_f64(trace_err), fmt_f64(herm_err));
    row
}

pub fn controls_header(controls: usize) -> String {
    let mut header = String::from("t,gamma");
    for k in 1..=controls {
        let _ = write!(header, ",v_{k}");
    }
    for k in 1..=controls {
        let _ = write!(header, ",u_{k}");
    }
    header.push_str(",V,Vdot_analytic,gamma_dot_analytic,solver_iterations,solver_residual");
    header
}

pub fn controls_row(control: &ControlRecord) -> String {
    let mut row = format!("{},{}", fmt_f64(control.t), fmt_f64(control.gamma));
    for v in &control.v {
        let _ = write!(row, ",{}", fmt_f64(*v));
    }
    for u in &control.u {
        let _ = write!(row, ",{}", fmt_f64(*u));
    }
    let _ = write!(
        row,
        ",{},{},{},{},{}",
        fmt_f64(control.lyapunov),
        fmt_f64(control.vdot_analytic.unwrap_or(f64::NAN)),
        fmt_f64(control.gamma_dot_analytic.unwrap_or(f64::NAN)),
        control.solver_iterations,
        fmt_f64(control.solver_residual),
    );
    row
}
