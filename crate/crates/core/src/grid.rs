//! Observation grid, the banded factors Q and R, and the roughness
//! penalty Omega = Q R^-1 Q^T together with the smoothers derived from
//! its eigendecomposition.
//!
//! The quadratic form v' Omega v equals the integrated squared second
//! derivative of the natural cubic spline interpolating (t_j, v_j), so
//! Omega is positive semidefinite with null space spanned by the
//! constant and linear-in-t vectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, TridiagLdl};

/// Relative threshold below which penalty eigenvalues are clamped to zero.
const NULL_SPACE_CLAMP: f64 = 1e-10;

/// Sorted observation points t_1 < ... < t_m and their gaps h_j.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    gaps: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from strictly increasing observation points (m >= 3).
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::GridTooSmall { len: times.len() });
        }
        let mut gaps = Vec::with_capacity(times.len() - 1);
        for j in 0..times.len() - 1 {
            let h = times[j + 1] - times[j];
            if !(h > 0.0) {
                return Err(Error::NonIncreasingGrid { index: j });
            }
            gaps.push(h);
        }
        Ok(TimeGrid { times, gaps })
    }

    /// m equispaced points covering [t_min, t_max].
    pub fn equispaced(t_min: f64, t_max: f64, m: usize) -> Result<Self> {
        if m < 3 {
            return Err(Error::GridTooSmall { len: m });
        }
        if !(t_max > t_min) {
            return Err(Error::NonIncreasingGrid { index: 0 });
        }
        let step = (t_max - t_min) / (m - 1) as f64;
        let times = (0..m)
            .map(|j| {
                if j + 1 == m {
                    t_max
                } else {
                    t_min + step * j as f64
                }
            })
            .collect();
        TimeGrid::new(times)
    }

    /// Unit-spaced grid 1, 2, ..., m used when no grid is supplied.
    pub fn unit(m: usize) -> Result<Self> {
        TimeGrid::new((1..=m).map(|j| j as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn first(&self) -> f64 {
        self.times[0]
    }

    pub fn last(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Builds a [`TimeGrid`] from a slice of observation points.
pub fn build_grid(times: &[f64]) -> Result<TimeGrid> {
    TimeGrid::new(times.to_vec())
}

/// The banded matrices Q (m x (m-2), three nonzeros per column) and
/// R ((m-2) x (m-2), symmetric tridiagonal, strictly diagonally dominant)
/// from which the penalty is assembled.
#[derive(Debug, Clone)]
pub struct BandFactors {
    q: DMatrix<f64>,
    r_diag: Vec<f64>,
    r_off: Vec<f64>,
}

impl BandFactors {
    pub fn new(grid: &TimeGrid) -> Self {
        let m = grid.len();
        let h = grid.gaps();
        let mut q = DMatrix::zeros(m, m - 2);
        for c in 0..m - 2 {
            q[(c, c)] = 1.0 / h[c];
            q[(c + 1, c)] = -1.0 / h[c] - 1.0 / h[c + 1];
            q[(c + 2, c)] = 1.0 / h[c + 1];
        }
        let r_diag = (0..m - 2).map(|c| (h[c] + h[c + 1]) / 3.0).collect();
        let r_off = (0..m.saturating_sub(3)).map(|c| h[c + 1] / 6.0).collect();
        BandFactors { q, r_diag, r_off }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r_diag(&self) -> &[f64] {
        &self.r_diag
    }

    pub fn r_off(&self) -> &[f64] {
        &self.r_off
    }

    /// Dense copy of R, mainly for tests and debugging.
    pub fn r_dense(&self) -> DMatrix<f64> {
        let k = self.r_diag.len();
        let mut r = DMatrix::zeros(k, k);
        for i in 0..k {
            r[(i, i)] = self.r_diag[i];
        }
        for i in 0..k.saturating_sub(1) {
            r[(i, i + 1)] = self.r_off[i];
            r[(i + 1, i)] = self.r_off[i];
        }
        r
    }

    /// Solves R s = rhs by symmetric factorization without pivoting
    /// (R is strictly diagonally dominant).
    pub fn solve_r(&self, rhs: &[f64]) -> Vec<f64> {
        TridiagLdl::factor(&self.r_diag, &self.r_off).solve(rhs)
    }
}

/// Builds the band factors for a grid.
pub fn build_band_factors(grid: &TimeGrid) -> BandFactors {
    BandFactors::new(grid)
}

/// The roughness penalty Omega = Q R^-1 Q^T with its eigendecomposition
/// Omega = Gamma diag(Lambda) Gamma^T, eigenvalues sorted descending and
/// the two null-space eigenvalues clamped to exactly zero.
///
/// Immutable after construction; all operations are pure, so a single
/// `PenaltyOperator` can be shared across threads.
#[derive(Debug, Clone)]
pub struct PenaltyOperator {
    grid: TimeGrid,
    omega: DMatrix<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    // elementwise squares of eigvecs, used to form smoother diagonals
    eigvecs_sq: DMatrix<f64>,
}

impl PenaltyOperator {
    pub fn new(grid: &TimeGrid) -> Result<Self> {
        let m = grid.len();
        let factors = BandFactors::new(grid);
        let ldl = TridiagLdl::factor(&factors.r_diag, &factors.r_off);

        // Omega = Q (R^-1 Q^T): tridiagonal solve against each column of Q^T.
        let qt = factors.q.transpose();
        let mut y = DMatrix::zeros(m - 2, m);
        for j in 0..m {
            let col: Vec<f64> = (0..m - 2).map(|i| qt[(i, j)]).collect();
            let sol = ldl.solve(&col);
            for i in 0..m - 2 {
                y[(i, j)] = sol[i];
            }
        }
        let mut omega = &factors.q * y;
        // kill round-off asymmetry before the symmetric eigensolver
        let omega_t = omega.transpose();
        omega += omega_t;
        omega *= 0.5;

        let eigen = nalgebra::SymmetricEigen::try_new(omega.clone(), f64::EPSILON, 10_000)
            .ok_or(Error::EigenFailure)?;

        // sort descending, clamp the trailing (round-off) eigenvalues to 0
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[b]
                .partial_cmp(&eigen.eigenvalues[a])
                .expect("eigenvalues are finite")
        });
        let mut eigvals = DVector::zeros(m);
        let mut eigvecs = DMatrix::zeros(m, m);
        for (dst, &src) in order.iter().enumerate() {
            eigvals[dst] = eigen.eigenvalues[src];
            eigvecs.set_column(dst, &eigen.eigenvectors.column(src));
        }
        let max = eigvals[0].max(0.0);
        for v in eigvals.iter_mut() {
            if *v < NULL_SPACE_CLAMP * max {
                *v = 0.0;
            }
        }
        for k in 0..m {
            let mut col = eigvecs.column(k).into_owned();
            canonical_sign(&mut col);
            eigvecs.set_column(k, &col);
        }
        let eigvecs_sq = eigvecs.map(|x| x * x);

        Ok(PenaltyOperator {
            grid: grid.clone(),
            omega,
            eigvecs,
            eigvals,
            eigvecs_sq,
        })
    }

    /// Number of grid points m.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Gamma, columns ordered by descending eigenvalue.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    /// Lambda, sorted descending; the last two entries are exactly zero.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigvals
    }

    /// v' Omega v, evaluated through the eigendecomposition.
    pub fn quad_form(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_len(v.len())?;
        let w = self.eigvecs.tr_mul(v);
        Ok(w
            .iter()
            .zip(self.eigvals.iter())
            .map(|(wk, lk)| lk * wk * wk)
            .sum())
    }

    /// Applies the smoother S(alpha) = (I + alpha Omega)^-1 to `w`.
    pub fn smooth(&self, alpha: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.scaled_apply(alpha, w, |l| 1.0 / (1.0 + alpha * l))
    }

    /// Applies the half-smoother S^(1/2)(alpha); applying it twice
    /// equals one application of [`PenaltyOperator::smooth`].
    pub fn half_smooth(&self, alpha: f64, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.scaled_apply(alpha, w, |l| 1.0 / (1.0 + alpha * l).sqrt())
    }

    fn scaled_apply(
        &self,
        alpha: f64,
        w: &DVector<f64>,
        scale: impl Fn(f64) -> f64,
    ) -> Result<DVector<f64>> {
        self.check_alpha(alpha)?;
        self.check_len(w.len())?;
        let mut y = self.eigvecs.tr_mul(w);
        for (k, yk) in y.iter_mut().enumerate() {
            *yk *= scale(self.eigvals[k]);
        }
        Ok(&self.eigvecs * y)
    }

    /// Diagonal entries of S(alpha): S_jj = sum_k Gamma_jk^2 / (1 + alpha lambda_k).
    pub fn smoother_diag(&self, alpha: f64) -> Result<DVector<f64>> {
        self.check_alpha(alpha)?;
        let inv = self.inverse_factors(alpha);
        Ok(&self.eigvecs_sq * inv)
    }

    /// tr S(alpha) = sum_k 1 / (1 + alpha lambda_k).
    pub fn smoother_trace(&self, alpha: f64) -> Result<f64> {
        self.check_alpha(alpha)?;
        Ok(self
            .eigvals
            .iter()
            .map(|l| 1.0 / (1.0 + alpha * l))
            .sum())
    }

    /// The vector (1 + alpha lambda_k)^-1 over eigenvalue index k.
    pub(crate) fn inverse_factors(&self, alpha: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.eigvals.len(),
            self.eigvals.iter().map(|l| 1.0 / (1.0 + alpha * l)),
        )
    }

    /// Scales the k-th column of `x` (an n x m matrix expressed in the
    /// eigenbasis, i.e. X Gamma) by (1 + alpha lambda_k)^-1/2.
    pub(crate) fn half_scale_columns(&self, x_gamma: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        let mut out = x_gamma.clone();
        for k in 0..self.eigvals.len() {
            let s = 1.0 / (1.0 + alpha * self.eigvals[k]).sqrt();
            out.column_mut(k).scale_mut(s);
        }
        out
    }

    /// Maps a vector expressed in the half-smoothed eigenbasis back to
    /// original coordinates: v = Gamma (I + alpha Lambda)^-1/2 w.
    pub(crate) fn half_map_back(&self, w: &DVector<f64>, alpha: f64) -> DVector<f64> {
        let mut scaled = w.clone();
        for k in 0..self.eigvals.len() {
            scaled[k] /= (1.0 + alpha * self.eigvals[k]).sqrt();
        }
        &self.eigvecs * scaled
    }

    pub(crate) fn check_alpha(&self, alpha: f64) -> Result<()> {
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(Error::NegativeAlpha { alpha });
        }
        Ok(())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.grid.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.len(),
                got: len,
            });
        }
        Ok(())
    }

    pub(crate) fn same_grid(&self, grid: &TimeGrid) -> bool {
        self.grid.times() == grid.times()
    }
}

/// Builds the penalty operator for a grid.
pub fn build_penalty(grid: &TimeGrid) -> Result<PenaltyOperator> {
    PenaltyOperator::new(grid)
}

/// Applies S(alpha) to `w`; see [`PenaltyOperator::smooth`].
pub fn apply_smoother(
    penalty: &PenaltyOperator,
    alpha: f64,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    penalty.smooth(alpha, w)
}

/// Applies S^(1/2)(alpha) to `w`; see [`PenaltyOperator::half_smooth`].
pub fn apply_half_smoother(
    penalty: &PenaltyOperator,
    alpha: f64,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    penalty.half_smooth(alpha, w)
}

/// Diagonal of S(alpha).
pub fn smoother_diag(penalty: &PenaltyOperator, alpha: f64) -> Result<DVector<f64>> {
    penalty.smoother_diag(alpha)
}

/// Trace of S(alpha).
pub fn trace_smoother(penalty: &PenaltyOperator, alpha: f64) -> Result<f64> {
    penalty.smoother_trace(alpha)
}
