//! Sequential multi-component extraction.
//!
//! MPDC (multiple parameters, delete-column CV) extracts components one
//! at a time: the smoothing parameter for each component is selected by
//! column-deletion CV or GCV on the current residual matrix, the
//! component is fit at that alpha, and the fitted rank-one term is
//! removed before the next component. SPDR (single parameter,
//! delete-row CV) is the baseline: one alpha is chosen by row-deletion
//! CV, and all K components come from the successive singular vectors
//! of the half-smoothed matrix, which are orthogonal in the penalized
//! inner product.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{PenaltyOperator, TimeGrid};
use crate::linalg::{canonical_sign, top_right_singular_vectors, top_singular_triple};
use crate::rank_one::{fit_power, fit_svd_route, ComponentFit, FitConfig, Initialization};
use crate::selection::{select_alpha, select_alpha_by_row_cv, AlphaGrid, Criterion, SelectionTrace};

/// Residuals below this fraction of the original norm stop extraction.
const ZERO_RESIDUAL_REL: f64 = 1e-14;

/// Extraction strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mpdc,
    Spdr,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mpdc => "mpdc",
            Method::Spdr => "spdr",
        }
    }
}

/// A column-centered data matrix with its grid and the removed means.
#[derive(Debug, Clone)]
pub struct CenteredDataset {
    matrix: DMatrix<f64>,
    column_means: DVector<f64>,
    grid: TimeGrid,
}

/// Subtracts each column mean; requires at least two rows.
pub fn center_matrix(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (n, m) = x.shape();
    if n < 2 {
        return Err(Error::TooFewRows { rows: n });
    }
    let mut means = DVector::zeros(m);
    for j in 0..m {
        means[j] = x.column(j).sum() / n as f64;
    }
    let mut centered = x.clone();
    for j in 0..m {
        centered.column_mut(j).add_scalar_mut(-means[j]);
    }
    Ok((centered, means))
}

impl CenteredDataset {
    /// Centers the columns of `x`; the means are kept as the
    /// discretized mean curve.
    pub fn center_columns(x: &DMatrix<f64>, grid: &TimeGrid) -> Result<Self> {
        if x.ncols() != grid.len() {
            return Err(Error::GridLengthMismatch {
                grid: grid.len(),
                cols: x.ncols(),
            });
        }
        let (matrix, column_means) = center_matrix(x)?;
        Ok(CenteredDataset {
            matrix,
            column_means,
            grid: grid.clone(),
        })
    }

    /// Wraps data whose mean is known to be zero (no centering applied;
    /// the stored mean curve is zero).
    pub fn assume_centered(x: &DMatrix<f64>, grid: &TimeGrid) -> Result<Self> {
        if x.ncols() != grid.len() {
            return Err(Error::GridLengthMismatch {
                grid: grid.len(),
                cols: x.ncols(),
            });
        }
        Ok(CenteredDataset {
            matrix: x.clone(),
            column_means: DVector::zeros(x.ncols()),
            grid: grid.clone(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn column_means(&self) -> &DVector<f64> {
        &self.column_means
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
}

/// See [`CenteredDataset::center_columns`].
pub fn center_columns(x: &DMatrix<f64>, grid: &TimeGrid) -> Result<CenteredDataset> {
    CenteredDataset::center_columns(x, grid)
}

/// One extracted component together with its selection trace.
#[derive(Debug, Clone)]
pub struct FittedComponent {
    pub fit: ComponentFit,
    pub trace: SelectionTrace,
}

/// The result of a multi-component fit.
///
/// `components` may be shorter than the requested K when the residual
/// became numerically zero first. For MPDC the deflation is exact, so
/// `residual_fro_norm^2 + sum_k ||scores_k||^2 = centered_fro_norm^2`;
/// for SPDR the analogous identity holds in the half-smoothed domain.
#[derive(Debug, Clone)]
pub struct FPCAResult {
    pub method: Method,
    pub grid: TimeGrid,
    pub column_means: DVector<f64>,
    pub components: Vec<FittedComponent>,
    pub centered_fro_norm: f64,
    pub residual_fro_norm: f64,
}

impl FPCAResult {
    /// ||u_k||^2 / ||centered X||_F^2 per component.
    pub fn variance_fractions(&self) -> Vec<f64> {
        let total = self.centered_fro_norm * self.centered_fro_norm;
        self.components
            .iter()
            .map(|c| c.fit.scores.norm_squared() / total)
            .collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.fit.alpha).collect()
    }
}

/// See [`FPCAResult::variance_fractions`].
pub fn variance_explained(result: &FPCAResult) -> Vec<f64> {
    result.variance_fractions()
}

fn validate_k(k: usize, max: usize) -> Result<()> {
    if k == 0 || k > max {
        return Err(Error::TooManyComponents { requested: k, max });
    }
    Ok(())
}

/// MPDC: for each component, alpha is selected by the chosen criterion
/// with the scores initialized from the residual's leading singular
/// pair, the component is fit at that alpha, and the fitted term
/// u_k v_k' (with u_k = X_res v_k) is subtracted before the next
/// component.
///
/// Alpha is selected once per component with the initial scores; the
/// selection is not re-run as the scores update inside the power loop.
pub fn fit_mpdc(
    data: &CenteredDataset,
    penalty: &PenaltyOperator,
    k: usize,
    grid: &AlphaGrid,
    criterion: Criterion,
    cfg: &FitConfig,
) -> Result<FPCAResult> {
    if !penalty.same_grid(&data.grid) {
        return Err(Error::GridMismatch);
    }
    if criterion == Criterion::RowCv {
        return Err(Error::InvalidConfig(
            "MPDC selects alpha by column-deletion CV or GCV; use fit_spdr for row CV".into(),
        ));
    }
    let (n, m) = data.matrix.shape();
    validate_k(k, n.min(m))?;

    let centered_fro_norm = data.matrix.norm();
    if centered_fro_norm == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let mut residual = data.matrix.clone();
    let mut components = Vec::with_capacity(k);
    for _ in 0..k {
        if residual.norm() <= ZERO_RESIDUAL_REL * centered_fro_norm {
            break; // numerically zero residual: return what was found
        }
        let (sigma, u1, _) = top_singular_triple(&residual);
        let u_init = u1 * sigma;
        let trace = select_alpha(&residual, &u_init, penalty, grid, criterion)?;
        let alpha = trace.chosen_alpha();
        let fit = match &cfg.init {
            Initialization::Provided(_) => fit_power(&residual, penalty, alpha, cfg)?,
            Initialization::RightSingularVector => fit_svd_route(&residual, penalty, alpha)?,
        };
        residual -= &fit.scores * fit.loading.transpose();
        components.push(FittedComponent { fit, trace });
    }

    Ok(FPCAResult {
        method: Method::Mpdc,
        grid: data.grid.clone(),
        column_means: data.column_means.clone(),
        components,
        centered_fro_norm,
        residual_fro_norm: residual.norm(),
    })
}

/// SPDR: a single alpha minimizing the row-deletion CV score is chosen
/// for all components; the loadings are the first K right singular
/// vectors of X Gamma (I + alpha Lambda)^-1/2 mapped back through the
/// half-smoother and renormalized, and the scores are u_k = X v_k.
pub fn fit_spdr(
    data: &CenteredDataset,
    penalty: &PenaltyOperator,
    k: usize,
    grid: &AlphaGrid,
    cfg: &FitConfig,
) -> Result<FPCAResult> {
    if !penalty.same_grid(&data.grid) {
        return Err(Error::GridMismatch);
    }
    let (n, m) = data.matrix.shape();
    if n < 2 {
        return Err(Error::TooFewRows { rows: n });
    }
    validate_k(k, (n - 1).min(m))?;
    let centered_fro_norm = data.matrix.norm();
    if centered_fro_norm == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let _ = cfg; // extraction is a direct SVD; no iteration controls needed

    let trace = select_alpha_by_row_cv(&data.matrix, penalty, grid, k)?;
    let alpha = trace.chosen_alpha();

    let b = &data.matrix * penalty.eigenvectors();
    let b_scaled = penalty.half_scale_columns(&b, alpha);
    let v_tildes = top_right_singular_vectors(&b_scaled, k);
    let mut components = Vec::with_capacity(k);
    let mut reconstruction = DMatrix::zeros(n, m);
    for v_tilde in &v_tildes {
        let mut v = penalty.half_map_back(v_tilde, alpha);
        v /= v.norm();
        canonical_sign(&mut v);
        let scores = &data.matrix * &v;
        reconstruction += &scores * v.transpose();
        let objective = crate::rank_one::objective_at_optimal_scale(
            &data.matrix,
            &v,
            alpha,
            penalty,
        )?;
        components.push(FittedComponent {
            fit: ComponentFit {
                scores,
                loading: v,
                alpha,
                objective,
                iterations: 0,
                converged: true,
            },
            trace: trace.clone(),
        });
    }
    let residual_fro_norm = (&data.matrix - reconstruction).norm();

    Ok(FPCAResult {
        method: Method::Spdr,
        grid: data.grid.clone(),
        column_means: data.column_means.clone(),
        components,
        centered_fro_norm,
        residual_fro_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        }
    }

    fn setup(m: usize) -> (TimeGrid, PenaltyOperator) {
        let grid = TimeGrid::equispaced(0.0, 1.0, m).unwrap();
        let penalty = PenaltyOperator::new(&grid).unwrap();
        (grid, penalty)
    }

    fn random_dataset(n: usize, m: usize, seed: u64) -> (CenteredDataset, PenaltyOperator) {
        let (grid, penalty) = setup(m);
        let mut next = rng(seed);
        let x = DMatrix::from_fn(n, m, |_, _| next());
        let data = CenteredDataset::center_columns(&x, &grid).unwrap();
        (data, penalty)
    }

    #[test]
    fn centering_arithmetic() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 6.0]);
        let (centered, means) = center_matrix(&x).unwrap();
        assert_eq!(means.as_slice(), &[2.0, 4.0]);
        assert_eq!(centered[(0, 0)], -1.0);
        assert_eq!(centered[(0, 1)], -2.0);
        assert_eq!(centered[(1, 0)], 1.0);
        assert_eq!(centered[(1, 1)], 2.0);
    }

    #[test]
    fn centering_identical_rows_gives_zeros() {
        let (grid, _) = setup(4);
        let row = [1.0, -2.0, 0.5, 3.0];
        let x = DMatrix::from_fn(5, 4, |_, j| row[j]);
        let data = CenteredDataset::center_columns(&x, &grid).unwrap();
        assert!(data.matrix().norm() == 0.0);
        assert_eq!(data.column_means().as_slice(), &row);
    }

    #[test]
    fn centering_is_idempotent() {
        let (data, _) = random_dataset(6, 5, 17);
        let again = CenteredDataset::center_columns(data.matrix(), data.grid()).unwrap();
        assert!((again.matrix() - data.matrix()).norm() < 1e-12 * data.matrix().norm());
        assert!(again.column_means().norm() < 1e-12);
    }

    #[test]
    fn centering_requires_two_rows() {
        let x = DMatrix::from_fn(1, 4, |_, j| j as f64);
        assert!(matches!(center_matrix(&x), Err(Error::TooFewRows { rows: 1 })));
    }

    /// Two orthonormal loadings inside the penalty null space.
    fn null_space_loadings(grid: &TimeGrid) -> (DVector<f64>, DVector<f64>) {
        let m = grid.len();
        let ones = DVector::from_element(m, 1.0) / (m as f64).sqrt();
        let mut lin = DVector::from_iterator(m, grid.times().iter().cloned());
        let proj = ones.dot(&lin);
        lin -= &ones * proj;
        lin /= lin.norm();
        (ones, lin)
    }

    #[test]
    fn mpdc_recovers_noiseless_null_space_factors() {
        let (grid, penalty) = setup(8);
        let (w1, w2) = null_space_loadings(&grid);
        let mut next = rng(23);
        let u1 = DVector::from_fn(10, |_, _| 3.0 * next());
        let u2 = DVector::from_fn(10, |_, _| next());
        let x = &u1 * w1.transpose() + &u2 * w2.transpose();
        let data = CenteredDataset::assume_centered(&x, &grid).unwrap();
        let result = fit_mpdc(
            &data,
            &penalty,
            2,
            &AlphaGrid::default(),
            Criterion::Cv,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(result.components.len(), 2);
        // the true loadings project onto the estimated span with error < 1e-6
        let v1 = &result.components[0].fit.loading;
        let v2 = &result.components[1].fit.loading;
        for w in [&w1, &w2] {
            let residual = w - v1 * v1.dot(w) - v2 * v2.dot(w)
                + v1 * (v1.dot(v2) * v2.dot(w)); // v1, v2 near-orthonormal; correction is tiny
            assert!(residual.norm() < 1e-6, "projection error {}", residual.norm());
        }
    }

    #[test]
    fn mpdc_deflation_is_orthogonal_and_parseval_holds() {
        let (data, penalty) = random_dataset(12, 9, 31);
        let result = fit_mpdc(
            &data,
            &penalty,
            3,
            &AlphaGrid::default(),
            Criterion::Gcv,
            &FitConfig::default(),
        )
        .unwrap();
        let scale = data.matrix().norm();
        let mut residual = data.matrix().clone();
        let mut energy = 0.0;
        for comp in &result.components {
            residual -= &comp.fit.scores * comp.fit.loading.transpose();
            // after deflation the residual annihilates the loading
            assert!((&residual * &comp.fit.loading).norm() < 1e-8 * scale);
            energy += comp.fit.scores.norm_squared();
        }
        let total = result.centered_fro_norm * result.centered_fro_norm;
        let check = result.residual_fro_norm * result.residual_fro_norm + energy;
        assert!((check - total).abs() < 1e-8 * total);
        assert!((residual.norm() - result.residual_fro_norm).abs() < 1e-10 * scale);
    }

    #[test]
    fn mpdc_stops_on_zero_residual() {
        let (grid, penalty) = setup(6);
        let (w1, _) = null_space_loadings(&grid);
        let u = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let x = &u * w1.transpose();
        let data = CenteredDataset::assume_centered(&x, &grid).unwrap();
        let result = fit_mpdc(
            &data,
            &penalty,
            3,
            &AlphaGrid::default(),
            Criterion::Cv,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(result.components.len(), 1, "rank-one data yields one component");
        assert!(result.residual_fro_norm < 1e-12 * x.norm());
    }

    #[test]
    fn mpdc_scale_invariance_end_to_end() {
        let (data, penalty) = random_dataset(15, 10, 47);
        let grid = AlphaGrid::default();
        let base = fit_mpdc(&data, &penalty, 2, &grid, Criterion::Cv, &FitConfig::default())
            .unwrap();
        for c in [0.5, 10.0] {
            let scaled_data =
                CenteredDataset::assume_centered(&(data.matrix() * c), data.grid()).unwrap();
            let scaled =
                fit_mpdc(&scaled_data, &penalty, 2, &grid, Criterion::Cv, &FitConfig::default())
                    .unwrap();
            for (a, b) in base.components.iter().zip(scaled.components.iter()) {
                assert_eq!(
                    a.trace.chosen_index, b.trace.chosen_index,
                    "alpha selection must not depend on the measurement scale"
                );
                assert!((&a.fit.loading - &b.fit.loading).norm() < 1e-8);
                assert!(
                    (&b.fit.scores - &a.fit.scores * c).norm() < 1e-8 * a.fit.scores.norm() * c
                );
            }
        }
    }

    #[test]
    fn mpdc_is_deterministic() {
        let (data, penalty) = random_dataset(10, 8, 3);
        let grid = AlphaGrid::default();
        let a = fit_mpdc(&data, &penalty, 2, &grid, Criterion::Cv, &FitConfig::default()).unwrap();
        let b = fit_mpdc(&data, &penalty, 2, &grid, Criterion::Cv, &FitConfig::default()).unwrap();
        for (ca, cb) in a.components.iter().zip(b.components.iter()) {
            assert_eq!(ca.fit.loading.as_slice(), cb.fit.loading.as_slice());
            assert_eq!(ca.fit.scores.as_slice(), cb.fit.scores.as_slice());
            assert_eq!(ca.fit.alpha, cb.fit.alpha);
        }
    }

    #[test]
    fn spdr_at_alpha_zero_is_plain_svd() {
        let (data, penalty) = random_dataset(9, 7, 71);
        let grid = AlphaGrid::single(0.0).unwrap();
        let result = fit_spdr(&data, &penalty, 3, &grid, &FitConfig::default()).unwrap();
        let svd = nalgebra::SVD::new(data.matrix().clone(), false, true);
        let v_t = svd.v_t.unwrap();
        for (k, comp) in result.components.iter().enumerate() {
            let mut want = v_t.row(k).transpose();
            canonical_sign(&mut want);
            assert!(
                (&comp.fit.loading - &want).norm() < 1e-8,
                "component {k} differs from singular vector"
            );
        }
    }

    #[test]
    fn spdr_single_component_matches_mpdc_at_same_alpha() {
        let (data, penalty) = random_dataset(11, 8, 83);
        let spdr = fit_spdr(&data, &penalty, 1, &AlphaGrid::default(), &FitConfig::default())
            .unwrap();
        let alpha = spdr.components[0].fit.alpha;
        let forced = AlphaGrid::single(alpha).unwrap();
        let mpdc =
            fit_mpdc(&data, &penalty, 1, &forced, Criterion::Cv, &FitConfig::default()).unwrap();
        let a = &spdr.components[0].fit.loading;
        let b = &mpdc.components[0].fit.loading;
        assert!((a - b).norm() < 1e-8, "both minimize the same criterion at fixed alpha");
    }

    #[test]
    fn spdr_loadings_are_penalized_orthogonal() {
        let (data, penalty) = random_dataset(12, 9, 5);
        let result =
            fit_spdr(&data, &penalty, 3, &AlphaGrid::default(), &FitConfig::default()).unwrap();
        let alpha = result.components[0].fit.alpha;
        assert!(alpha > 0.0 || alpha == 0.0);
        let qf = |v: &DVector<f64>| {
            v.norm_squared() + alpha * penalty.quad_form(v).unwrap()
        };
        for j in 0..3 {
            for k in 0..3 {
                if j == k {
                    continue;
                }
                let vj = &result.components[j].fit.loading;
                let vk = &result.components[k].fit.loading;
                let cross = vj.dot(vk) + alpha * (penalty.omega() * vk).dot(vj);
                assert!(
                    cross.abs() < 1e-8 * (qf(vj) * qf(vk)).sqrt(),
                    "components {j},{k} not orthogonal in the penalized inner product"
                );
            }
        }
        // half-smoothed domain energy identity
        let b = data.matrix() * penalty.eigenvectors();
        let b_scaled = penalty.half_scale_columns(&b, alpha);
        let svd = nalgebra::SVD::new(b_scaled.clone(), false, false);
        let total = b_scaled.norm_squared();
        let captured: f64 = svd.singular_values.iter().take(3).map(|s| s * s).sum();
        let vts = top_right_singular_vectors(&b_scaled, 3);
        let mut recon = DMatrix::zeros(12, 9);
        for vt in &vts {
            let s = &b_scaled * vt;
            recon += &s * vt.transpose();
        }
        let resid = (&b_scaled - recon).norm_squared();
        assert!((total - captured - resid).abs() < 1e-8 * total);
    }

    #[test]
    fn variance_fractions_basics() {
        let (grid, penalty) = setup(6);
        let (w1, _) = null_space_loadings(&grid);
        let u = DVector::from_vec(vec![2.0, -1.0, 0.5, 1.5]);
        let x = &u * w1.transpose();
        let data = CenteredDataset::assume_centered(&x, &grid).unwrap();
        let result = fit_mpdc(
            &data,
            &penalty,
            1,
            &AlphaGrid::single(0.0).unwrap(),
            Criterion::Cv,
            &FitConfig::default(),
        )
        .unwrap();
        let fractions = variance_explained(&result);
        assert_eq!(fractions.len(), 1);
        assert!((fractions[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_validation() {
        let (data, penalty) = random_dataset(5, 8, 2);
        assert!(matches!(
            fit_mpdc(
                &data,
                &penalty,
                6,
                &AlphaGrid::default(),
                Criterion::Cv,
                &FitConfig::default()
            ),
            Err(Error::TooManyComponents { max: 5, .. })
        ));
        assert!(matches!(
            fit_spdr(&data, &penalty, 5, &AlphaGrid::default(), &FitConfig::default()),
            Err(Error::TooManyComponents { max: 4, .. })
        ));
    }
}
