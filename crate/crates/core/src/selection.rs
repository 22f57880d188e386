//! Smoothing-parameter selection.
//!
//! The v-update of the power algorithm smooths X'u, so delete-one-column
//! cross-validation has the same closed form as the classical
//! smoothing-spline shortcut:
//!
//! ```text
//! CV(alpha)  = (1/m) sum_j [ ((I - S) X'u)_j / (1 - S_jj) ]^2
//! GCV(alpha) = (1/m) ||(I - S) X'u||^2 / (1 - tr(S)/m)^2
//! ```
//!
//! with S = S(alpha) = (I + alpha Omega)^-1. Both are evaluated through
//! the penalty eigendecomposition: with w = Gamma' X'u, the numerator
//! shrinks component k by alpha lambda_k / (1 + alpha lambda_k), and the
//! trace is sum_k 1/(1 + alpha lambda_k). [`cv_oracle`] re-derives the
//! CV score by actually refitting the ridge problem with one column
//! deleted, and [`row_cv_score`] implements the delete-one-row baseline,
//! which has no shortcut and refits the components once per deleted row.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::PenaltyOperator;

/// Which score a selection trace was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Cv,
    Gcv,
    RowCv,
}

impl Criterion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::Cv => "cv",
            Criterion::Gcv => "gcv",
            Criterion::RowCv => "row_cv",
        }
    }
}

/// Candidate smoothing parameters, ascending and distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid {
    values: Vec<f64>,
}

impl AlphaGrid {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyAlphaGrid);
        }
        if let Some(bad) = values.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(Error::InvalidAlphaGrid(format!(
                "values must be finite and nonnegative, got {bad}"
            )));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidAlphaGrid("duplicate values".into()));
        }
        Ok(AlphaGrid { values })
    }

    /// {0} together with 1.5^i for i in [i_min, i_max].
    pub fn powers(i_min: i32, i_max: i32) -> Self {
        let mut values = vec![0.0];
        values.extend((i_min..=i_max).map(|i| 1.5f64.powi(i)));
        AlphaGrid::new(values).expect("power grid is valid")
    }

    pub fn single(alpha: f64) -> Result<Self> {
        AlphaGrid::new(vec![alpha])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for AlphaGrid {
    /// The default candidate grid: 0 and 1.5^i for i = -5..=25.
    fn default() -> Self {
        AlphaGrid::powers(-5, 25)
    }
}

/// Criterion values over a candidate grid with the minimizing entry.
/// Failed evaluations are stored as +inf with the `failed` flag set.
#[derive(Debug, Clone)]
pub struct SelectionTrace {
    pub alphas: Vec<f64>,
    pub scores: Vec<f64>,
    pub failed: Vec<bool>,
    pub chosen_index: usize,
    pub criterion: Criterion,
}

impl SelectionTrace {
    pub fn chosen_alpha(&self) -> f64 {
        self.alphas[self.chosen_index]
    }

    pub fn chosen_score(&self) -> f64 {
        self.scores[self.chosen_index]
    }

    /// Picks the argmin among finite scores; ties go to the smaller alpha.
    fn from_scores(
        alphas: Vec<f64>,
        scores: Vec<f64>,
        failed: Vec<bool>,
        criterion: Criterion,
    ) -> Result<Self> {
        let mut chosen: Option<usize> = None;
        for (i, s) in scores.iter().enumerate() {
            if failed[i] || !s.is_finite() {
                continue;
            }
            match chosen {
                None => chosen = Some(i),
                Some(c) if *s < scores[c] => chosen = Some(i),
                _ => {}
            }
        }
        let chosen_index = chosen.ok_or(Error::AllScoresFailed)?;
        Ok(SelectionTrace {
            alphas,
            scores,
            failed,
            chosen_index,
            criterion,
        })
    }
}

/// X'u and its eigenbasis coordinates, computed once per score vector.
struct Projected {
    z: DVector<f64>,
    w: DVector<f64>,
}

impl Projected {
    fn new(x: &DMatrix<f64>, u: &DVector<f64>, penalty: &PenaltyOperator) -> Result<Self> {
        if u.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: u.len(),
            });
        }
        penalty.check_len(x.ncols())?;
        if u.iter().all(|&e| e == 0.0) {
            return Err(Error::ZeroScores);
        }
        let z = x.tr_mul(u);
        let w = penalty.eigenvectors().tr_mul(&z);
        Ok(Projected { z, w })
    }

    /// CV score at one alpha; `alpha = 0` uses the analytic limit
    /// (1/m) sum_j [(Omega z)_j / Omega_jj]^2.
    fn cv(&self, penalty: &PenaltyOperator, alpha: f64) -> Result<f64> {
        penalty.check_alpha(alpha)?;
        let m = self.z.len();
        if alpha == 0.0 {
            let num = penalty.omega() * &self.z;
            let mut acc = 0.0;
            for j in 0..m {
                let r = num[j] / penalty.omega()[(j, j)];
                acc += r * r;
            }
            return Ok(acc / m as f64);
        }
        let lambda = penalty.eigenvalues();
        let shrunk = DVector::from_fn(m, |k, _| {
            alpha * lambda[k] / (1.0 + alpha * lambda[k]) * self.w[k]
        });
        let residual = penalty.eigenvectors() * shrunk;
        let diag = penalty.smoother_diag(alpha)?;
        let mut acc = 0.0;
        for j in 0..m {
            let leverage = 1.0 - diag[j];
            if leverage <= 1e-12 {
                return Err(Error::DegenerateLeverage { index: j });
            }
            let r = residual[j] / leverage;
            acc += r * r;
        }
        Ok(acc / m as f64)
    }

    /// GCV score at one alpha; `alpha = 0` uses the analytic limit
    /// (1/m) ||Omega z||^2 / ((1/m) sum_k lambda_k)^2.
    fn gcv(&self, penalty: &PenaltyOperator, alpha: f64) -> Result<f64> {
        penalty.check_alpha(alpha)?;
        let m = self.z.len() as f64;
        let lambda = penalty.eigenvalues();
        if alpha == 0.0 {
            let num: f64 = self
                .w
                .iter()
                .zip(lambda.iter())
                .map(|(wk, lk)| {
                    let r = lk * wk;
                    r * r
                })
                .sum();
            let mean_lambda = lambda.sum() / m;
            return Ok(num / m / (mean_lambda * mean_lambda));
        }
        let num: f64 = self
            .w
            .iter()
            .zip(lambda.iter())
            .map(|(wk, lk)| {
                let r = alpha * lk / (1.0 + alpha * lk) * wk;
                r * r
            })
            .sum();
        let trace: f64 = lambda.iter().map(|lk| 1.0 / (1.0 + alpha * lk)).sum();
        let denom = 1.0 - trace / m;
        Ok(num / m / (denom * denom))
    }

    fn score(&self, penalty: &PenaltyOperator, alpha: f64, criterion: Criterion) -> Result<f64> {
        match criterion {
            Criterion::Cv => self.cv(penalty, alpha),
            Criterion::Gcv => self.gcv(penalty, alpha),
            Criterion::RowCv => Err(Error::InvalidConfig(
                "row-deletion CV is scored by row_cv_score, not per score vector".into(),
            )),
        }
    }
}

/// Closed-form delete-one-column CV score for the current scores u.
pub fn cv_score(
    x: &DMatrix<f64>,
    u: &DVector<f64>,
    penalty: &PenaltyOperator,
    alpha: f64,
) -> Result<f64> {
    Projected::new(x, u, penalty)?.cv(penalty, alpha)
}

/// GCV score for the current scores u.
pub fn gcv_score(
    x: &DMatrix<f64>,
    u: &DVector<f64>,
    penalty: &PenaltyOperator,
    alpha: f64,
) -> Result<f64> {
    Projected::new(x, u, penalty)?.gcv(penalty, alpha)
}

/// Brute-force leave-one-column-out prediction error: for each column j
/// the ridge problem is refit with that column removed, the held-out
/// prediction error ||u vhat_j - x_j||^2 is formed, and the part that
/// does not depend on v (x_j'x_j - (x_j'u)^2/||u||^2) is subtracted.
/// The average over j equals cv_score / ||u||^2.
///
/// Undefined at alpha = 0, where the deleted coordinate no longer
/// appears in the objective.
pub fn cv_oracle(
    x: &DMatrix<f64>,
    u: &DVector<f64>,
    penalty: &PenaltyOperator,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::AlphaNotPositive { alpha });
    }
    let proj = Projected::new(x, u, penalty)?;
    let m = x.ncols();
    let nu = u.norm_squared();
    let mut acc = 0.0;
    for j in 0..m {
        // (D_j + alpha Omega) v = D_j z / ||u||^2, D_j = I minus the j-th
        // diagonal entry
        let mut system = penalty.omega() * alpha;
        for d in 0..m {
            if d != j {
                system[(d, d)] += 1.0;
            }
        }
        let mut rhs = &proj.z / nu;
        rhs[j] = 0.0;
        let vhat = system
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularReducedSystem { column: j })?;
        let mut pred_err = 0.0;
        for i in 0..x.nrows() {
            let r = u[i] * vhat[j] - x[(i, j)];
            pred_err += r * r;
        }
        let xj_sq = x.column(j).norm_squared();
        acc += pred_err - (xj_sq - proj.z[j] * proj.z[j] / nu);
    }
    Ok(acc / m as f64)
}

/// Evaluates the criterion at every grid point with the given u and
/// returns the trace. X'u and its eigenbasis coordinates are computed
/// once and reused across the grid. A failing grid point is recorded as
/// +inf rather than aborting the search.
pub fn select_alpha(
    x: &DMatrix<f64>,
    u: &DVector<f64>,
    penalty: &PenaltyOperator,
    grid: &AlphaGrid,
    criterion: Criterion,
) -> Result<SelectionTrace> {
    let proj = Projected::new(x, u, penalty)?;
    let mut scores = Vec::with_capacity(grid.len());
    let mut failed = Vec::with_capacity(grid.len());
    for &alpha in grid.values() {
        match proj.score(penalty, alpha, criterion) {
            Ok(s) => {
                scores.push(s);
                failed.push(false);
            }
            Err(Error::InvalidConfig(msg)) => return Err(Error::InvalidConfig(msg)),
            Err(_) => {
                scores.push(f64::INFINITY);
                failed.push(true);
            }
        }
    }
    SelectionTrace::from_scores(grid.values().to_vec(), scores, failed, criterion)
}

/// Delete-one-row cross-validation for a K-component fit at a single
/// shared alpha. For every row i the first K components are refit on
/// the matrix without that row (successive right singular vectors of
/// the half-smoothed matrix, mapped back and renormalized), and the
/// held-out row is scored by
/// ||x_i - sum_k (x_i'v_k) v_k||^2. There is no closed-form shortcut;
/// this is a full refit per deletion, with the per-row refits running
/// in parallel.
pub fn row_cv_score(
    x: &DMatrix<f64>,
    penalty: &PenaltyOperator,
    alpha: f64,
    k: usize,
) -> Result<f64> {
    let (n, m) = x.shape();
    penalty.check_len(m)?;
    penalty.check_alpha(alpha)?;
    if n < 2 {
        return Err(Error::TooFewRows { rows: n });
    }
    if k == 0 || k > (n - 1).min(m) {
        return Err(Error::TooManyComponents {
            requested: k,
            max: (n - 1).min(m),
        });
    }

    // all rows expressed in the penalty eigenbasis, plus the half-smoothed
    // version whose Gram matrix can be downdated per deleted row
    let b = x * penalty.eigenvectors();
    let b_scaled = penalty.half_scale_columns(&b, alpha);
    let gram = b_scaled.tr_mul(&b_scaled);
    let half: Vec<f64> = penalty
        .eigenvalues()
        .iter()
        .map(|l| 1.0 / (1.0 + alpha * l).sqrt())
        .collect();

    let scores: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bi = b_scaled.row(i).transpose();
            let mut downdated = gram.clone();
            for c in 0..m {
                for r in 0..m {
                    downdated[(r, c)] -= bi[r] * bi[c];
                }
            }
            let eigen = nalgebra::SymmetricEigen::try_new(downdated, f64::EPSILON, 10_000)
                .ok_or(Error::EigenFailure)?;
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &c| {
                eigen.eigenvalues[c]
                    .partial_cmp(&eigen.eigenvalues[a])
                    .expect("finite eigenvalues")
            });
            // held-out row in the eigenbasis; loadings are the back-mapped
            // top-K eigenvectors, renormalized
            let y = b.row(i).transpose();
            let mut residual = y.clone();
            for &idx in order.iter().take(k) {
                let mut p = eigen.eigenvectors.column(idx).into_owned();
                for (pc, hc) in p.iter_mut().zip(half.iter()) {
                    *pc *= hc;
                }
                p /= p.norm();
                let coeff = y.dot(&p);
                residual -= p * coeff;
            }
            Ok(residual.norm_squared())
        })
        .collect();

    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(total / n as f64)
}

/// Row-CV evaluated over a candidate grid, as used by the single-alpha
/// baseline. Failed grid points are recorded as +inf.
pub fn select_alpha_by_row_cv(
    x: &DMatrix<f64>,
    penalty: &PenaltyOperator,
    grid: &AlphaGrid,
    k: usize,
) -> Result<SelectionTrace> {
    let mut scores = Vec::with_capacity(grid.len());
    let mut failed = Vec::with_capacity(grid.len());
    for &alpha in grid.values() {
        match row_cv_score(x, penalty, alpha, k) {
            Ok(s) => {
                scores.push(s);
                failed.push(false);
            }
            Err(Error::TooFewRows { rows }) => return Err(Error::TooFewRows { rows }),
            Err(Error::TooManyComponents { requested, max }) => {
                return Err(Error::TooManyComponents { requested, max })
            }
            Err(_) => {
                scores.push(f64::INFINITY);
                failed.push(true);
            }
        }
    }
    SelectionTrace::from_scores(grid.values().to_vec(), scores, failed, Criterion::RowCv)
}
