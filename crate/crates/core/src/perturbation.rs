//! The implicit fixed-point equation for the shared perturbation gamma and
//! the existence-bound margin report.
//!
//! gamma solves gamma = theta(tr(P_gamma rho) - tr(P_gamma rho_f)), where
//! P_gamma itself depends on gamma through the perturbed eigenframe. A warm
//! started fixed-point iteration handles every step of a closed-loop run;
//! bisection on F(gamma) = gamma - theta(Delta(gamma)) is the fallback.

use crate::error::{Error, Result};
use crate::frame::PGamma;
use crate::matrix::{trace_of_product, DensityMatrix, HermitianMatrix};

/// Shape of the monotone map theta applied to the Lyapunov gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaKind {
    /// theta(s) = slope * s (the simulation law of the reference experiment).
    Linear,
    /// theta(s) = gamma_star * tanh(slope * s / gamma_star); bounded by
    /// gamma_star as the existence lemma requires.
    Saturating,
}

/// Specification of theta: theta(0) = 0 and theta' > 0 everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ThetaSpec {
    pub kind: ThetaKind,
    /// Slope at the origin; also sup |theta'|.
    pub slope: f64,
    /// Codomain cap for the saturating kind (ignored by the linear kind).
    pub gamma_star: f64,
    /// Clamp negative arguments to zero instead of extending theta oddly.
    pub clamp_negative: bool,
}

impl ThetaSpec {
    pub fn linear(slope: f64) -> Self {
        Self { kind: ThetaKind::Linear, slope, gamma_star: f64::INFINITY, clamp_negative: false }
    }

    pub fn saturating(slope: f64, gamma_star: f64) -> Self {
        Self { kind: ThetaKind::Saturating, slope, gamma_star, clamp_negative: false }
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp_negative = clamp;
        self
    }

    /// Largest derivative over the domain (attained at s = 0 for both kinds).
    pub fn sup_derivative(&self) -> f64 {
        self.slope
    }
}

/// theta(s) and theta'(s). Negative arguments are clamped to zero when the
/// spec says so; otherwise theta extends oddly and a warning is logged since
/// the design only reasons about s >= 0.
pub fn theta_eval(spec: &ThetaSpec, s: f64) -> (f64, f64) {
    if s < 0.0 && spec.clamp_negative {
        return (0.0, 0.0);
    }
    if s < 0.0 {
        log::warn!("theta evaluated at negative argument {s:.3e}; extending oddly");
    }
    match spec.kind {
        ThetaKind::Linear => (spec.slope * s, spec.slope),
        ThetaKind::Saturating => {
            let x = spec.slope * s / spec.gamma_star;
            let value = spec.gamma_star * x.tanh();
            let sech2 = 1.0 - x.tanh() * x.tanh();
            (value, spec.slope * sech2)
        }
    }
}

/// How the accepted gamma was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    FixedPoint,
    Bisection,
}

/// Solved perturbation value with its convergence evidence.
#[derive(Debug, Clone, Copy)]
pub struct GammaSolve {
    pub value: f64,
    /// |gamma - theta(Delta(gamma))| at the accepted value.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

const OSCILLATION_WINDOW: usize = 10;

/// Solve the implicit equation for gamma with the P map `pgamma`.
///
/// Fixed-point iteration from `warm_start`, damped by 0.5 if the update
/// oscillates for ten iterations; on non-convergence, bisection on
/// F(gamma) = gamma - theta(Delta(gamma)) over [0, gamma_max] (or
/// [-gamma_max, 0] when the unclamped linear law sits at a negative root).
pub fn solve_gamma_with(
    pgamma: &PGamma,
    rho: &DensityMatrix,
    rho_f: &DensityMatrix,
    theta: &ThetaSpec,
    warm_start: f64,
    tol: f64,
    max_iter: usize,
    gamma_max: f64,
) -> Result<GammaSolve> {
    let delta = |g: f64| -> Result<f64> {
        let p = pgamma.p_at(g)?;
        let d = trace_of_product(p.matrix(), &(rho.matrix() - rho_f.matrix()));
        Ok(d.re)
    };
    let f_residual = |g: f64| -> Result<f64> {
        let (th, _) = theta_eval(theta, delta(g)?);
        Ok(g - th)
    };

    let mut g = warm_start;
    let mut prev_update: Option<f64> = None;
    let mut oscillations = 0usize;
    let mut damping = 1.0;
    for it in 1..=max_iter {
        let (next, _) = theta_eval(theta, delta(g)?);
        let update = next - g;
        if let Some(prev) = prev_update {
            if prev * update < 0.0 {
                oscillations += 1;
                if oscillations >= OSCILLATION_WINDOW {
                    damping = 0.5;
                }
            }
        }
        prev_update = Some(update);
        let candidate = g + damping * update;
        if (candidate - g).abs() <= tol {
            let residual = f_residual(candidate)?.abs();
            if residual <= tol {
                return Ok(GammaSolve {
                    value: candidate,
                    residual,
                    iterations: it,
                    method: SolveMethod::FixedPoint,
                });
            }
        }
        g = candidate;
    }

    // Bisection fallback: F is increasing wherever the contraction premise
    // holds, so scan for the first sign change from the origin outward.
    let hi = if theta.kind == ThetaKind::Saturating {
        theta.gamma_star.min(gamma_max)
    } else {
        gamma_max
    };
    let f0 = f_residual(0.0)?;
    let (mut lo, mut hi, f_lo) = if f0 <= 0.0 {
        (0.0, hi, f0)
    } else if theta.clamp_negative {
        // theta(Delta(0)) < 0 is impossible under the clamp, so F(0) > 0
        // means gamma = 0 with the clamped law.
        return Ok(GammaSolve {
            value: 0.0,
            residual: 0.0,
            iterations: max_iter,
            method: SolveMethod::Bisection,
        });
    } else {
        (-hi, 0.0, f_residual(-hi)?)
    };
    let f_hi = f_residual(hi)?;
    if f_lo * f_hi > 0.0 {
        return Err(Error::BisectionBracket { lo, hi, f_lo, f_hi });
    }
    let mut f_lo = f_lo;
    for it in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f_residual(mid)?;
        if fm.abs() <= tol || (hi - lo) < tol * 1e-3 {
            return Ok(GammaSolve {
                value: mid,
                residual: fm.abs(),
                iterations: max_iter + it + 1,
                method: SolveMethod::Bisection,
            });
        }
        if f_lo * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = fm;
        }
    }
    let residual = f_residual(0.5 * (lo + hi))?.abs();
    Err(Error::SolverDiverged { iterations: max_iter + 200, residual })
}

/// Spec-shaped entry point that assembles the P map internally.
#[allow(clippy::too_many_arguments)]
pub fn solve_gamma(
    rho: &DensityMatrix,
    rho_f: &DensityMatrix,
    h0: &HermitianMatrix,
    hks: &[HermitianMatrix],
    mask: &[bool],
    p_values: &[f64],
    theta: &ThetaSpec,
    warm_start: f64,
    tol: f64,
    max_iter: usize,
    gamma_max: f64,
) -> Result<GammaSolve> {
    let map = PGamma::new(h0.clone(), hks.to_vec(), mask.to_vec(), p_values.to_vec())?;
    solve_gamma_with(&map, rho, rho_f, theta, warm_start, tol, max_iter, gamma_max)
}

/// Existence-bound report: C bounds ||dP/dgamma|| on the grid, the admissible
/// slope is 1/(2 C*) with C* = 1 + C, and the bound is compared against
/// sup |theta'|. A violated bound is a reported status, not an error.
#[derive(Debug, Clone)]
pub struct MarginReport {
    /// max ||dP/dgamma||_2 over the grid, finite differences.
    pub c_fd: f64,
    /// Same quantity from the perturbation formula.
    pub c_perturbative: f64,
    pub c_star: f64,
    /// 1 / (2 C*), the admissible sup |theta'|.
    pub bound: f64,
    pub sup_theta_derivative: f64,
    pub satisfied: bool,
}

/// Computes the existence margin over a gamma grid. Grid points where the
/// frame degenerates are skipped (the bound is a sup over the usable range).
pub fn lemma1_margin(
    theta: &ThetaSpec,
    pgamma: &PGamma,
    gamma_grid: &[f64],
) -> Result<MarginReport> {
    let mut c_fd = 0.0f64;
    let mut c_pert = 0.0f64;
    let mut usable = 0usize;
    for &g in gamma_grid {
        let fd = match pgamma.dp_dgamma_fd(g, 1e-6) {
            Ok(m) => m,
            Err(Error::DegenerateGap { .. }) => continue,
            Err(e) => return Err(e),
        };
        let pert = pgamma.dp_dgamma_perturbative(g)?;
        c_fd = c_fd.max(fd.spectral_norm()?);
        c_pert = c_pert.max(pert.spectral_norm()?);
        usable += 1;
    }
    if usable == 0 {
        return Err(Error::BadConfig { reason: "no usable grid point for the margin".into() });
    }
    let c_star = 1.0 + c_fd;
    let bound = 1.0 / (2.0 * c_star);
    let sup = theta.sup_derivative();
    Ok(MarginReport {
        c_fd,
        c_perturbative: c_pert,
        c_star,
        bound,
        sup_theta_derivative: sup,
        satisfied: sup < bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::HermitianMatrix;

    fn three_level() -> (HermitianMatrix, Vec<HermitianMatrix>) {
        let h0 = HermitianMatrix::from_diagonal(&[0.3, 0.6, 0.9]);
        let h1 = HermitianMatrix::from_real_rows(
            3,
            &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        (h0, vec![h1])
    }

    #[test]
    fn theta_linear_at_zero() {
        let spec = ThetaSpec::linear(0.1);
        let (v, d) = theta_eval(&spec, 0.0);
        assert_eq!(v, 0.0);
        assert_eq!(d, 0.1);
    }

    #[test]
    fn theta_linear_matches_simulation_law() {
        let spec = ThetaSpec::linear(0.1);
        let (v, d) = theta_eval(&spec, 0.5);
        assert!((v - 0.05).abs() < 1e-15);
        assert!((d - 0.1).abs() < 1e-15);
    }

    #[test]
    fn theta_saturating_approaches_cap_monotonically() {
        let spec = ThetaSpec::saturating(0.1, 0.2);
        let mut last = 0.0;
        for s in [1.0, 10.0, 100.0] {
            let (v, d) = theta_eval(&spec, s);
            // scalar oracle: gamma_star * tanh(slope * s / gamma_star)
            let want = 0.2 * (0.1 * s / 0.2).tanh();
            assert!((v - want).abs() < 1e-14);
            assert!(v >= last && v <= 0.2);
            assert!(d >= 0.0);
            last = v;
        }
        assert!(last > 0.199);
    }

    #[test]
    fn theta_clamp_mode_zeroes_negative_arguments() {
        let spec = ThetaSpec::linear(0.1).with_clamp(true);
        assert_eq!(theta_eval(&spec, -0.5), (0.0, 0.0));
        let free = ThetaSpec::linear(0.1);
        let (v, _) = theta_eval(&free, -0.5);
        assert!((v + 0.05).abs() < 1e-15);
    }

    fn sec5_states() -> (DensityMatrix, DensityMatrix) {
        // tilde-frame initial and target states of the three-level run
        use num_complex::Complex64 as C64;
        let s2 = (0.5f64).sqrt();
        let rho0 = DensityMatrix::pure_state(&[
            C64::new(s2, 0.0),
            C64::new(0.0, 0.0),
            C64::new(s2, 0.0),
        ])
        .unwrap();
        let rhof = DensityMatrix::from_diagonal(&[0.0, 0.0, 1.0]).unwrap();
        (rho0, rhof)
    }

    fn tilde_control() -> HermitianMatrix {
        // U2^H H1 U2 for the target frame with columns (e3, block, psi_f)
        let s3 = (1.0f64 / 3.0).sqrt();
        let s23 = (2.0f64 / 3.0).sqrt();
        let u2 = crate::matrix::CMatrix::from_row_slice(
            3,
            3,
            &[
                num_complex::Complex64::new(0.0, 0.0),
                num_complex::Complex64::new(-s23, 0.0),
                num_complex::Complex64::new(s3, 0.0),
                num_complex::Complex64::new(0.0, 0.0),
                num_complex::Complex64::new(s3, 0.0),
                num_complex::Complex64::new(s23, 0.0),
                num_complex::Complex64::new(1.0, 0.0),
                num_complex::Complex64::new(0.0, 0.0),
                num_complex::Complex64::new(0.0, 0.0),
            ],
        );
        let h1 = HermitianMatrix::from_real_rows(
            3,
            &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        HermitianMatrix::new(u2.adjoint() * h1.matrix() * u2).unwrap()
    }

    #[test]
    fn gamma_is_zero_at_the_target() {
        let (h0, _) = three_level();
        let ht1 = tilde_control();
        let (_, rhof) = sec5_states();
        let map = PGamma::new(h0, vec![ht1], vec![true], vec![1.5, 2.1, 0.01]).unwrap();
        let theta = ThetaSpec::linear(0.1);
        let solve =
            solve_gamma_with(&map, &rhof, &rhof, &theta, 0.0, 1e-10, 100, 0.5).unwrap();
        assert_eq!(solve.value, 0.0);
        assert_eq!(solve.residual, 0.0);
        assert_eq!(solve.iterations, 1);
    }

    #[test]
    fn equal_p_values_give_gamma_zero_in_two_iterations() {
        // P = c I is constant in gamma, so Delta = c (tr rho - tr rho_f) = 0
        let (h0, hks) = three_level();
        let (rho0, rhof) = sec5_states();
        let map = PGamma::new(h0, hks, vec![true], vec![0.7, 0.7, 0.7]).unwrap();
        let theta = ThetaSpec::linear(0.1);
        let solve = solve_gamma_with(&map, &rho0, &rhof, &theta, 0.0, 1e-10, 100, 0.5).unwrap();
        assert!(solve.value.abs() < 1e-12);
        assert!(solve.iterations <= 2);
    }

    #[test]
    fn constant_p_from_diagonal_controls_matches_closed_form() {
        // diagonal controls leave the frame constant, so
        // gamma = theta(tr(P (rho - rho_f))) in closed form
        let h0 = HermitianMatrix::from_diagonal(&[0.3, 0.6, 0.9]);
        let hk = HermitianMatrix::from_diagonal(&[0.5, 1.0, 2.0]);
        let rho = DensityMatrix::from_diagonal(&[0.5, 0.3, 0.2]).unwrap();
        let rhof = DensityMatrix::from_diagonal(&[0.2, 0.3, 0.5]).unwrap();
        let p_values = [1.5, 2.1, 0.01];
        let map =
            PGamma::new(h0, vec![hk], vec![true], p_values.to_vec()).unwrap();
        let theta = ThetaSpec::linear(0.1);
        let closed_form = 0.1
            * p_values
                .iter()
                .zip([0.5 - 0.2, 0.3 - 0.3, 0.2 - 0.5])
                .map(|(p, d)| p * d)
                .sum::<f64>();
        let solve = solve_gamma_with(&map, &rho, &rhof, &theta, 0.0, 1e-12, 100, 0.5).unwrap();
        assert!((solve.value - closed_form).abs() < 1e-12);
        assert!(solve.iterations <= 2);
    }

    #[test]
    fn sec5_solve_matches_independent_bisection_oracle() {
        let (h0, _) = three_level();
        let ht1 = tilde_control();
        let (rho0, rhof) = sec5_states();
        let map =
            PGamma::new(h0, vec![ht1], vec![true], vec![1.5, 2.1, 0.01]).unwrap();
        let theta = ThetaSpec::linear(0.1);
        let solve = solve_gamma_with(&map, &rho0, &rhof, &theta, 0.0, 1e-10, 200, 0.5).unwrap();
        assert!(solve.residual <= 1e-10);

        // oracle: plain bisection on F over [0, 0.5], no shared solver code
        let f = |g: f64| {
            let p = map.p_at(g).unwrap();
            let d = trace_of_product(p.matrix(), &(rho0.matrix() - rhof.matrix())).re;
            g - 0.1 * d
        };
        let (mut lo, mut hi) = (0.0, 0.5);
        assert!(f(lo) < 0.0 && f(hi) > 0.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!(
            (solve.value - oracle).abs() < 1e-10,
            "solver {} vs oracle {}",
            solve.value,
            oracle
        );
    }

    #[test]
    fn sec5_uniqueness_probe_single_sign_change() {
        let (h0, _) = three_level();
        let ht1 = tilde_control();
        let (rho0, rhof) = sec5_states();
        let map =
            PGamma::new(h0, vec![ht1], vec![true], vec![1.5, 2.1, 0.01]).unwrap();
        let f = |g: f64| {
            let p = map.p_at(g).unwrap();
            let d = trace_of_product(p.matrix(), &(rho0.matrix() - rhof.matrix())).re;
            g - 0.1 * d
        };
        let mut changes = 0;
        let mut last = f(0.0);
        for i in 1..=100 {
            let g = 0.5 * i as f64 / 100.0;
            let now = f(g);
            if last * now < 0.0 {
                changes += 1;
            }
            last = now;
        }
        assert_eq!(changes, 1);
    }

    #[test]
    fn negative_argument_solutions_follow_the_clamp_decision() {
        // swap initial and target roles so the theta argument is negative
        let (h0, _) = three_level();
        let ht1 = tilde_control();
        let (rho0, rhof) = sec5_states();
        let map = PGamma::new(h0, vec![ht1], vec![true], vec![1.5, 2.1, 0.01]).unwrap();
        let unclamped = ThetaSpec::linear(0.1);
        let solve =
            solve_gamma_with(&map, &rhof, &rho0, &unclamped, 0.0, 1e-10, 200, 0.5).unwrap();
        assert!(solve.value < 0.0, "unclamped linear law extends below zero");
        assert!(solve.residual <= 1e-10);

        let clamped = ThetaSpec::linear(0.1).with_clamp(true);
        let solve =
            solve_gamma_with(&map, &rhof, &rho0, &clamped, 0.0, 1e-10, 200, 0.5).unwrap();
        assert_eq!(solve.value, 0.0, "clamped law pins gamma at zero");
        assert_eq!(solve.residual, 0.0);
    }

    #[test]
    fn margin_constant_p_gives_half_bound() {
        let (h0, hks) = three_level();
        let map = PGamma::new(h0, hks, vec![true], vec![0.7, 0.7, 0.7]).unwrap();
        let theta = ThetaSpec::linear(0.1);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.02).collect();
        let report = lemma1_margin(&theta, &map, &grid).unwrap();
        assert!(report.c_fd < 1e-6);
        assert!((report.bound - 0.5).abs() < 1e-6);
        assert!(report.satisfied);
    }

    #[test]
    fn margin_large_slope_always_fails() {
        let (h0, hks) = three_level();
        let map = PGamma::new(h0, hks, vec![true], vec![1.5, 2.1, 0.01]).unwrap();
        let theta = ThetaSpec::linear(10.0);
        let grid = [0.0, 0.05, 0.1];
        let report = lemma1_margin(&theta, &map, &grid).unwrap();
        assert!(!report.satisfied); // bound is at most 1/2 < 10
        assert!(report.bound <= 0.5 + 1e-12);
    }

    #[test]
    fn margin_dual_method_agreement_on_sec5_grid() {
        let (h0, _) = three_level();
        let ht1 = tilde_control();
        let map =
            PGamma::new(h0, vec![ht1], vec![true], vec![1.5, 2.1, 0.01]).unwrap();
        let theta = ThetaSpec::linear(0.1);
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.01).collect();
        let report = lemma1_margin(&theta, &map, &grid).unwrap();
        let rel = (report.c_fd - report.c_perturbative).abs() / report.c_perturbative;
        assert!(rel < 1e-4, "dual-method C disagreement {rel}");
        assert!(report.satisfied, "reference slope 0.1 sits inside the bound");
    }
}
