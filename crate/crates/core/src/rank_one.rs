//! Penalized rank-one approximation of a data matrix.
//!
//! For a fixed smoothing parameter alpha the criterion
//!
//! ```text
//! ||X - u v'||_F^2 + alpha (u'u) (v' Omega v)
//! ```
//!
//! is minimized over scores u and a unit-norm loading v. Two routes are
//! provided: the alternating power iteration ([`fit_power`]) and a
//! direct computation from the top singular pair of the half-smoothed
//! matrix X S^(1/2)(alpha) ([`fit_svd_route`]). Both converge to the
//! same optimum; the SVD route is the default execution path and the
//! power iteration is kept as an independent check and for
//! user-supplied starting vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::PenaltyOperator;
use crate::linalg::{canonical_sign, top_singular_triple};

/// One fitted component: scores u, unit-norm loading v, the smoothing
/// parameter and convergence diagnostics.
///
/// `objective` is the criterion value at the optimum, i.e. with the
/// score vector at its optimal scale u = Xv / v'(I + alpha Omega)v; the
/// stored `scores` are u = Xv, which carry the component's variance
/// (`scores` and the optimal-scale u span the same rank-one term).
#[derive(Debug, Clone)]
pub struct ComponentFit {
    pub scores: DVector<f64>,
    pub loading: DVector<f64>,
    pub alpha: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// How the power iteration starts.
#[derive(Debug, Clone)]
pub enum Initialization {
    /// First right singular vector of X (the default).
    RightSingularVector,
    /// A caller-supplied start, normalized internally.
    Provided(DVector<f64>),
}

/// Tolerance and iteration controls for [`fit_power`].
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Threshold on the change ||v_new - v_old|| between successive
    /// normalized iterates.
    pub tol: f64,
    pub max_iter: usize,
    pub init: Initialization,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tol: 1e-9,
            max_iter: 500,
            init: Initialization::RightSingularVector,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// The penalized reconstruction error
/// ||X - u v'||_F^2 + alpha (u'u)(v' Omega v).
pub fn penalized_objective(
    x: &DMatrix<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
    alpha: f64,
    penalty: &PenaltyOperator,
) -> Result<f64> {
    if u.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: u.len(),
        });
    }
    if v.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            got: v.len(),
        });
    }
    penalty.check_len(v.len())?;
    penalty.check_alpha(alpha)?;
    let mut fit = 0.0;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let r = x[(i, j)] - u[i] * v[j];
            fit += r * r;
        }
    }
    Ok(fit + alpha * u.norm_squared() * penalty.quad_form(v)?)
}

/// Criterion value with the scores at their optimal scale for a given
/// loading: min over u of the penalized reconstruction error.
pub(crate) fn objective_at_optimal_scale(
    x: &DMatrix<f64>,
    v: &DVector<f64>,
    alpha: f64,
    penalty: &PenaltyOperator,
) -> Result<f64> {
    let d = v.norm_squared() + alpha * penalty.quad_form(v)?;
    let u_star = x * v / d;
    penalized_objective(x, &u_star, v, alpha, penalty)
}

fn check_fit_inputs(x: &DMatrix<f64>, penalty: &PenaltyOperator, alpha: f64) -> Result<()> {
    penalty.check_alpha(alpha)?;
    penalty.check_len(x.ncols())?;
    if x.nrows() == 0 {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    if x.iter().all(|&e| e == 0.0) {
        return Err(Error::ZeroMatrix);
    }
    Ok(())
}

/// Alternating minimization of the penalized criterion:
/// (a) u <- X v, (b) v <- (I + alpha Omega)^-1 X'u, (c) v <- v/||v||,
/// repeated until the loading stops moving.
///
/// If `max_iter` is reached, or the change between iterates stops
/// shrinking for 50 consecutive iterations (a degenerate leading pair),
/// the fit is returned with `converged = false`.
pub fn fit_power(
    x: &DMatrix<f64>,
    penalty: &PenaltyOperator,
    alpha: f64,
    cfg: &FitConfig,
) -> Result<ComponentFit> {
    check_fit_inputs(x, penalty, alpha)?;
    cfg.validate()?;

    let mut v = match &cfg.init {
        Initialization::RightSingularVector => top_singular_triple(x).2,
        Initialization::Provided(v0) => {
            penalty.check_len(v0.len())?;
            let norm = v0.norm();
            if norm == 0.0 {
                return Err(Error::DegenerateInitialization);
            }
            v0 / norm
        }
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut prev_delta = f64::INFINITY;
    let mut stalled = 0usize;
    while iterations < cfg.max_iter {
        iterations += 1;
        let u = x * &v;
        let w = x.tr_mul(&u);
        let mut v_new = penalty.smooth(alpha, &w)?;
        let norm = v_new.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateInitialization);
        }
        v_new /= norm;
        let delta = (&v_new - &v).norm();
        v = v_new;
        if delta < cfg.tol {
            converged = true;
            break;
        }
        if delta >= prev_delta {
            stalled += 1;
            if stalled >= 50 {
                break;
            }
        } else {
            stalled = 0;
        }
        prev_delta = delta;
    }

    canonical_sign(&mut v);
    let scores = x * &v;
    let objective = objective_at_optimal_scale(x, &v, alpha, penalty)?;
    Ok(ComponentFit {
        scores,
        loading: v,
        alpha,
        objective,
        iterations,
        converged,
    })
}

/// Direct fit from the top singular pair of the half-smoothed matrix
/// X Gamma (I + alpha Lambda)^-1/2: the right singular vector is mapped
/// back through the half-smoother and renormalized.
pub fn fit_svd_route(
    x: &DMatrix<f64>,
    penalty: &PenaltyOperator,
    alpha: f64,
) -> Result<ComponentFit> {
    check_fit_inputs(x, penalty, alpha)?;
    let b = x * penalty.eigenvectors();
    let b_scaled = penalty.half_scale_columns(&b, alpha);
    let (_, _, v_tilde) = top_singular_triple(&b_scaled);
    let mut v = penalty.half_map_back(&v_tilde, alpha);
    v /= v.norm();
    canonical_sign(&mut v);
    let scores = x * &v;
    let objective = objective_at_optimal_scale(x, &v, alpha, penalty)?;
    Ok(ComponentFit {
        scores,
        loading: v,
        alpha,
        objective,
        iterations: 0,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn rng(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        }
    }

    fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut next = rng(seed);
        DMatrix::from_fn(n, m, |_, _| next())
    }

    fn penalty_for(m: usize) -> PenaltyOperator {
        let grid = TimeGrid::equispaced(0.0, 1.0, m).unwrap();
        PenaltyOperator::new(&grid).unwrap()
    }

    fn align(to: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        if to.dot(v) < 0.0 {
            -v.clone()
        } else {
            v.clone()
        }
    }

    #[test]
    fn objective_matches_elementwise_oracle() {
        let penalty = penalty_for(5);
        let x = random_matrix(4, 5, 11);
        let mut next = rng(12);
        let u = DVector::from_fn(4, |_, _| next());
        let v = DVector::from_fn(5, |_, _| next());
        let alpha = 2.0;
        let got = penalized_objective(&x, &u, &v, alpha, &penalty).unwrap();
        // independent accumulation: row sums first, then the quadratic form
        // through the dense Omega
        let mut fit = 0.0;
        for i in 0..4 {
            let mut row = 0.0;
            for j in 0..5 {
                let r = x[(i, j)] - u[i] * v[j];
                row += r * r;
            }
            fit += row;
        }
        let usq: f64 = u.iter().map(|x| x * x).sum();
        let vov = (penalty.omega() * &v).dot(&v);
        let want = fit + alpha * usq * vov;
        assert!((got - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn objective_special_cases() {
        let penalty = penalty_for(4);
        let grid_times = penalty.grid().times().to_vec();
        let v = DVector::from_iterator(4, grid_times.iter().map(|t| 1.0 + 0.5 * t));
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = &u * v.transpose();
        for alpha in [0.0, 1.0, 100.0] {
            let obj = penalized_objective(&x, &u, &v, alpha, &penalty).unwrap();
            assert!(obj.abs() < 1e-10 * x.norm_squared(), "alpha {alpha}: {obj}");
        }
        let zero_u = DVector::zeros(3);
        let obj = penalized_objective(&x, &zero_u, &v, 3.0, &penalty).unwrap();
        assert_eq!(obj, x.norm_squared());
    }

    #[test]
    fn alpha_zero_reduces_to_first_singular_pair() {
        let penalty = penalty_for(7);
        let x = random_matrix(9, 7, 21);
        let (sigma, u1, v1) = top_singular_triple(&x);
        for fit in [
            fit_power(&x, &penalty, 0.0, &FitConfig::default()).unwrap(),
            fit_svd_route(&x, &penalty, 0.0).unwrap(),
        ] {
            let v = align(&v1, &fit.loading);
            assert!((v - &v1).norm() < 1e-8);
            let u = align(&(sigma * &u1), &fit.scores);
            assert!((u - sigma * &u1).norm() < 1e-8 * sigma);
        }
    }

    #[test]
    fn exact_linear_factor_recovered_for_any_alpha() {
        let grid = TimeGrid::equispaced(0.0, 2.0, 6).unwrap();
        let penalty = PenaltyOperator::new(&grid).unwrap();
        let v0 = DVector::from_iterator(6, grid.times().iter().map(|t| 0.3 * t + 0.1));
        let v0_unit = &v0 / v0.norm();
        let u0 = DVector::from_vec(vec![2.0, -1.0, 0.5, 3.0]);
        let x = &u0 * v0.transpose();
        for alpha in [0.0, 1.0, 100.0] {
            for fit in [
                fit_power(&x, &penalty, alpha, &FitConfig::default()).unwrap(),
                fit_svd_route(&x, &penalty, alpha).unwrap(),
            ] {
                let v = align(&v0_unit, &fit.loading);
                assert!((v - v0_unit.clone()).norm() < 1e-10, "alpha {alpha}");
                assert!(fit.objective.abs() < 1e-10 * x.norm_squared());
            }
        }
    }

    #[test]
    fn scale_invariance_of_the_fit() {
        let penalty = penalty_for(20);
        let x = random_matrix(30, 20, 33);
        let alpha = 5.0;
        let base = fit_svd_route(&x, &penalty, alpha).unwrap();
        for c in [0.1, 3.0, 100.0] {
            let scaled = fit_svd_route(&(&x * c), &penalty, alpha).unwrap();
            assert!((&scaled.loading - &base.loading).norm() < 1e-8, "c = {c}");
            assert!(
                (&scaled.scores - &base.scores * c).norm() < 1e-8 * base.scores.norm() * c,
                "c = {c}"
            );
        }
    }

    #[test]
    fn power_and_svd_routes_agree() {
        let penalty = penalty_for(20);
        let x = random_matrix(30, 20, 55);
        for alpha in [0.1, 10.0] {
            let p = fit_power(&x, &penalty, alpha, &FitConfig::default()).unwrap();
            let s = fit_svd_route(&x, &penalty, alpha).unwrap();
            assert!(p.converged);
            let aligned = align(&s.loading, &p.loading);
            assert!(
                (aligned - &s.loading).norm() < 1e-6,
                "alpha {alpha}: routes disagree"
            );
        }
    }

    #[test]
    fn fixed_point_residual_is_small_at_convergence() {
        let penalty = penalty_for(12);
        let x = random_matrix(15, 12, 77);
        let cfg = FitConfig::default();
        for alpha in [0.0, 0.5, 20.0] {
            let fit = fit_power(&x, &penalty, alpha, &cfg).unwrap();
            assert!(fit.converged);
            assert!(fit.iterations <= cfg.max_iter);
            let image = penalty.smooth(alpha, &x.tr_mul(&(&x * &fit.loading))).unwrap();
            let theta = fit.loading.dot(&image);
            let residual = (&image - &fit.loading * theta).norm();
            assert!(
                residual <= 10.0 * cfg.tol * theta,
                "alpha {alpha}: residual {residual}, theta {theta}"
            );
        }
    }

    #[test]
    fn rayleigh_quotient_is_locally_maximal() {
        let penalty = penalty_for(10);
        let x = random_matrix(14, 10, 99);
        let alpha = 2.0;
        let fit = fit_svd_route(&x, &penalty, alpha).unwrap();
        let rayleigh = |v: &DVector<f64>| {
            (&x * v).norm_squared() / (v.norm_squared() + alpha * penalty.quad_form(v).unwrap())
        };
        let base = rayleigh(&fit.loading);
        let mut next = rng(123);
        for _ in 0..200 {
            let mut d = DVector::from_fn(10, |_, _| next());
            d /= d.norm();
            let perturbed = &fit.loading + d * 1e-3;
            assert!(rayleigh(&perturbed) <= base * (1.0 + 1e-12));
        }
    }

    #[test]
    fn alternating_updates_never_increase_objective() {
        let penalty = penalty_for(9);
        let x = random_matrix(12, 9, 1234);
        let alpha = 1.5;
        // manual alternating minimization with explicit optimal scales
        let mut v = top_singular_triple(&x).2;
        let mut last = f64::INFINITY;
        for _ in 0..40 {
            let d = v.norm_squared() + alpha * penalty.quad_form(&v).unwrap();
            let u = &x * &v / d;
            let after_u = penalized_objective(&x, &u, &v, alpha, &penalty).unwrap();
            assert!(after_u <= last * (1.0 + 1e-12), "u-update raised objective");
            let mut v_new = penalty.smooth(alpha, &x.tr_mul(&u)).unwrap() / u.norm_squared();
            let after_v = penalized_objective(&x, &u, &v_new, alpha, &penalty).unwrap();
            assert!(after_v <= after_u * (1.0 + 1e-12), "v-update raised objective");
            v_new /= v_new.norm();
            v = v_new;
            last = after_v;
        }
    }

    #[test]
    fn closed_form_score_scale_is_optimal() {
        let penalty = penalty_for(8);
        let x = random_matrix(10, 8, 4321);
        let alpha = 3.0;
        let mut next = rng(5);
        let mut v = DVector::from_fn(8, |_, _| next());
        v /= v.norm();
        let d = v.norm_squared() + alpha * penalty.quad_form(&v).unwrap();
        let u_star = &x * &v / d;
        let best = penalized_objective(&x, &u_star, &v, alpha, &penalty).unwrap();
        for c in [0.99, 1.01] {
            let worse =
                penalized_objective(&x, &(&u_star * c), &v, alpha, &penalty).unwrap();
            assert!(best < worse, "scaling by {c} should hurt");
            let raw = penalized_objective(&x, &(&x * &v * c), &v, alpha, &penalty).unwrap();
            assert!(best <= raw);
        }
    }

    #[test]
    fn svd_route_beats_single_power_step() {
        let penalty = penalty_for(10);
        let x = random_matrix(12, 10, 777);
        let alpha = 4.0;
        let one_step = fit_power(
            &x,
            &penalty,
            alpha,
            &FitConfig {
                max_iter: 1,
                ..FitConfig::default()
            },
        )
        .unwrap();
        assert!(!one_step.converged);
        let direct = fit_svd_route(&x, &penalty, alpha).unwrap();
        assert!(direct.objective <= one_step.objective * (1.0 + 1e-12));
    }

    #[test]
    fn zero_matrix_rejected() {
        let penalty = penalty_for(5);
        let x = DMatrix::zeros(4, 5);
        assert!(matches!(
            fit_power(&x, &penalty, 1.0, &FitConfig::default()),
            Err(Error::ZeroMatrix)
        ));
        assert!(matches!(
            fit_svd_route(&x, &penalty, 1.0),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn provided_initialization_is_used() {
        let penalty = penalty_for(6);
        let x = random_matrix(8, 6, 31);
        let v0 = DVector::from_element(6, 1.0);
        let cfg = FitConfig {
            init: Initialization::Provided(v0),
            ..FitConfig::default()
        };
        let fit = fit_power(&x, &penalty, 0.7, &cfg).unwrap();
        assert!(fit.converged);
        let reference = fit_svd_route(&x, &penalty, 0.7).unwrap();
        let aligned = align(&reference.loading, &fit.loading);
        assert!((aligned - &reference.loading).norm() < 1e-6);
        // degenerate start
        let zero_cfg = FitConfig {
            init: Initialization::Provided(DVector::zeros(6)),
            ..FitConfig::default()
        };
        assert!(matches!(
            fit_power(&x, &penalty, 0.7, &zero_cfg),
            Err(Error::DegenerateInitialization)
        ));
    }

    #[test]
    fn sign_convention_applied() {
        let penalty = penalty_for(6);
        let x = random_matrix(8, 6, 63);
        for alpha in [0.0, 2.0] {
            let fit = fit_svd_route(&x, &penalty, alpha).unwrap();
            let max = fit
                .loading
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, |m, x| m.max(x.abs()));
            assert!(fit.loading.iter().any(|&x| x.abs() == max && x > 0.0));
            assert!((fit.loading.norm() - 1.0).abs() < 1e-12);
        }
    }
}
