//! JSON run configuration: parsing, validation with field paths, and
//! conversion into a simulation problem.

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64 as C64;
use serde::Deserialize;

use liouville_control::{
    design_p, CMatrix, ControllerConfig, DensityMatrix, FeedbackKind, HermitianMatrix,
    InternalFrame, SimulationProblem, ThetaSpec,
};

/// A complex matrix as row-major [re, im] entry pairs.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemBlock,
    pub states: StatesBlock,
    pub controller: ControllerBlock,
    pub integration: IntegrationBlock,
    #[serde(default)]
    pub tolerances: ToleranceBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(rename = "H0")]
    pub h0: MatrixSpec,
    #[serde(rename = "Hks")]
    pub hks: Vec<MatrixSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesBlock {
    pub rho0: MatrixSpec,
    pub rhof: MatrixSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerBlock {
    /// C_k in {0, 1}: which controls carry the shared perturbation.
    pub mask: Vec<u8>,
    #[serde(rename = "M")]
    pub slope: f64,
    #[serde(default = "default_theta_kind")]
    pub theta_kind: String,
    #[serde(default)]
    pub gamma_star: Option<f64>,
    #[serde(default)]
    pub clamp_negative_theta: bool,
    #[serde(rename = "K")]
    pub gains: Vec<f64>,
    #[serde(default)]
    pub f_kind: Option<Vec<String>>,
    #[serde(default)]
    pub f_cap: Option<Vec<f64>>,
    /// Either explicit eigenvalues or "auto" to derive them from the target.
    #[serde(rename = "P")]
    pub p: PSpec,
    #[serde(default = "default_p_min_gap")]
    pub p_min_gap: f64,
    #[serde(default = "default_p_base")]
    pub p_base: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PSpec {
    Auto(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationBlock {
    pub dt: f64,
    pub duration: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default)]
    pub early_stop_probability: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceBlock {
    pub density: f64,
    pub gamma_tol: f64,
    pub gamma_max_iter: usize,
    pub gamma_max: f64,
    pub regularity_tol: f64,
    pub connectedness_tol: f64,
    /// gamma scan for `check`: [lo, hi, points].
    pub check_gamma_scan: (f64, f64, usize),
}

impl Default for ToleranceBlock {
    fn default() -> Self {
        Self {
            density: 1e-9,
            gamma_tol: 1e-10,
            gamma_max_iter: 200,
            gamma_max: 0.5,
            regularity_tol: 1e-8,
            connectedness_tol: 1e-10,
            check_gamma_scan: (0.0, 0.2, 21),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub csv_dir: String,
    /// "original" or "tilde".
    pub frame: String,
    /// "preserved" (default) or "transformed": how the internal Hamiltonian
    /// enters the target frame.
    pub internal_frame: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { csv_dir: "out".into(), frame: "original".into(), internal_frame: "preserved".into() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub axes: Vec<SweepAxis>,
    pub metric: String,
    #[serde(default = "default_sweep_cap")]
    pub cap: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dot path into the config, e.g. "controller.K[0]" or "integration.dt".
    pub path: String,
    pub values: Vec<serde_json::Value>,
}

fn default_theta_kind() -> String {
    "linear".into()
}
fn default_stride() -> usize {
    1
}
fn default_p_min_gap() -> f64 {
    0.5
}
fn default_p_base() -> f64 {
    0.01
}
fn default_sweep_cap() -> usize {
    1024
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = serde_json::from_str(text).context("config schema violation")?;
    Ok(config)
}

fn matrix_from_spec(spec: &MatrixSpec, path: &str) -> Result<CMatrix> {
    let n = spec.len();
    if n == 0 {
        bail!("{path}: empty matrix");
    }
    for (i, row) in spec.iter().enumerate() {
        if row.len() != n {
            bail!("{path}: row {i} has {} entries, expected {n}", row.len());
        }
    }
    let m = CMatrix::from_fn(n, n, |i, j| C64::new(spec[i][j][0], spec[i][j][1]));
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        bail!("{path}: non-finite entry");
    }
    Ok(m)
}

fn hermitian_from_spec(spec: &MatrixSpec, path: &str) -> Result<HermitianMatrix> {
    let m = matrix_from_spec(spec, path)?;
    HermitianMatrix::new(m).map_err(|e| anyhow!("{path}: {e}"))
}

fn density_from_spec(spec: &MatrixSpec, tol: f64, path: &str) -> Result<DensityMatrix> {
    let m = matrix_from_spec(spec, path)?;
    liouville_control::validate_density(m, tol).map_err(|e| anyhow!("{path}: {e}"))
}

/// The fully-resolved problem together with the output options.
pub struct ResolvedConfig {
    pub problem: SimulationProblem,
    pub p_design_auto: bool,
    pub internal_frame: InternalFrame,
    pub tilde_output: bool,
    pub csv_dir: String,
    pub tolerances: ToleranceBlock,
}

/// Validate the parsed config and assemble the simulation problem.
/// P = "auto" triggers the design rule on the diagonalized target.
pub fn resolve(config: &RunConfig) -> Result<ResolvedConfig> {
    let h0 = hermitian_from_spec(&config.system.h0, "system.H0")?;
    let dim = h0.dim();
    let hks = config
        .system
        .hks
        .iter()
        .enumerate()
        .map(|(k, spec)| hermitian_from_spec(spec, &format!("system.Hks[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    for (k, hk) in hks.iter().enumerate() {
        if hk.dim() != dim {
            bail!("system.Hks[{k}]: dimension {} != {}", hk.dim(), dim);
        }
    }
    let rho0 = density_from_spec(&config.states.rho0, config.tolerances.density, "states.rho0")?;
    let rhof = density_from_spec(&config.states.rhof, config.tolerances.density, "states.rhof")?;

    let c = &config.controller;
    let theta = match c.theta_kind.as_str() {
        "linear" => ThetaSpec::linear(c.slope),
        "saturating" => {
            let cap = c
                .gamma_star
                .ok_or_else(|| anyhow!("controller.gamma_star required for saturating theta"))?;
            ThetaSpec::saturating(c.slope, cap)
        }
        other => bail!("controller.theta_kind: unknown kind {other:?}"),
    }
    .with_clamp(c.clamp_negative_theta);

    let feedback = match &c.f_kind {
        None => vec![FeedbackKind::Identity; c.gains.len()],
        Some(kinds) => {
            if kinds.len() != c.gains.len() {
                bail!("controller.f_kind: {} kinds for {} gains", kinds.len(), c.gains.len());
            }
            kinds
                .iter()
                .enumerate()
                .map(|(k, kind)| match kind.as_str() {
                    "identity" => Ok(FeedbackKind::Identity),
                    "odd-saturating" => {
                        let cap = c
                            .f_cap
                            .as_ref()
                            .and_then(|caps| caps.get(k).copied())
                            .unwrap_or(1.0);
                        Ok(FeedbackKind::OddSaturating { cap })
                    }
                    other => Err(anyhow!("controller.f_kind[{k}]: unknown kind {other:?}")),
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let (p_values, p_auto) = match &c.p {
        PSpec::Values(values) => (values.clone(), false),
        PSpec::Auto(word) if word == "auto" => {
            let frame = liouville_control::diagonalize_target_resolved(&rhof, &h0)
                .map_err(|e| anyhow!("states.rhof: {e}"))?;
            let design = design_p(&frame.rhof_tilde.populations(), c.p_min_gap, c.p_base)
                .map_err(|e| anyhow!("controller.P: {e}"))?;
            (design.values, true)
        }
        PSpec::Auto(other) => bail!("controller.P: expected a value list or \"auto\", got {other:?}"),
    };

    let controller = ControllerConfig {
        mask: c.mask.iter().map(|&m| m != 0).collect(),
        theta,
        gains: c.gains.clone(),
        feedback,
        p_values,
        gamma_tol: config.tolerances.gamma_tol,
        gamma_max_iter: config.tolerances.gamma_max_iter,
        gamma_max: config.tolerances.gamma_max,
    };

    let problem = SimulationProblem {
        h0,
        hks,
        rho0,
        rhof,
        controller,
        dt: config.integration.dt,
        duration: config.integration.duration,
        record_stride: config.integration.record_stride,
        early_stop_probability: config.integration.early_stop_probability,
    };
    problem.validate().map_err(|e| anyhow!("config: {e}"))?;

    let internal_frame = match config.output.internal_frame.as_str() {
        "preserved" => InternalFrame::Preserved,
        "transformed" => InternalFrame::Transformed,
        other => bail!("output.internal_frame: expected preserved|transformed, got {other:?}"),
    };
    let tilde_output = match config.output.frame.as_str() {
        "original" => false,
        "tilde" => true,
        other => bail!("output.frame: expected original|tilde, got {other:?}"),
    };

    Ok(ResolvedConfig {
        problem,
        p_design_auto: p_auto,
        internal_frame,
        tilde_output,
        csv_dir: config.output.csv_dir.clone(),
        tolerances: config.tolerances.clone(),
    })
}

/// Apply a sweep-axis path like "controller.K[0]" to a JSON config value.
pub fn apply_path(
    root: &mut serde_json::Value,
    path: &str,
    value: &serde_json::Value,
) -> Result<()> {
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (pos, segment) in segments.iter().enumerate() {
        let last = pos + 1 == segments.len();
        let (key, index) = match segment.find('[') {
            None => (*segment, None),
            Some(b) => {
                let close =
                    segment.find(']').ok_or_else(|| anyhow!("bad path segment {segment:?}"))?;
                let idx: usize = segment[b + 1..close]
                    .parse()
                    .map_err(|_| anyhow!("bad index in path segment {segment:?}"))?;
                (&segment[..b], Some(idx))
            }
        };
        let entry = cursor
            .get_mut(key)
            .ok_or_else(|| anyhow!("path {path:?}: no field {key:?}"))?;
        cursor = match index {
            None => entry,
            Some(idx) => entry
                .get_mut(idx)
                .ok_or_else(|| anyhow!("path {path:?}: index {idx} out of bounds"))?,
        };
        if last {
            *cursor = value.clone();
        }
    }
    Ok(())
}
