//! Python bindings for the penalized rank-one FPCA library.
//!
//! Data matrices pass as 2-d numpy arrays (one row per curve), grids
//! and vectors as 1-d arrays.

use nalgebra::{DMatrix, DVector};
use numpy::{PyArray1, PyArray2, PyArrayMethods, PyReadonlyArray1, PyReadonlyArray2};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use pfpca_core::fpca::{fit_mpdc, fit_spdr, CenteredDataset, FPCAResult};
use pfpca_core::grid::{PenaltyOperator, TimeGrid};
use pfpca_core::rank_one::FitConfig;
use pfpca_core::selection::{self, AlphaGrid, Criterion};
use pfpca_core::simulation::{self, SimConfig};
use pfpca_core::spline::SplineFunction;
use pfpca_core::Error;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix_from_py(x: &PyReadonlyArray2<'_, f64>) -> DMatrix<f64> {
    let view = x.as_array();
    let (n, m) = (view.nrows(), view.ncols());
    DMatrix::from_fn(n, m, |i, j| view[[i, j]])
}

fn vector_from_py(v: &PyReadonlyArray1<'_, f64>) -> DVector<f64> {
    DVector::from_iterator(v.len().unwrap_or(0), v.as_array().iter().copied())
}

fn matrix_to_py<'py>(py: Python<'py>, x: &DMatrix<f64>) -> Bound<'py, PyArray2<f64>> {
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)]).collect())
        .collect();
    PyArray2::from_vec2(py, &rows).expect("rectangular matrix")
}

fn grid_from_times(times: &PyReadonlyArray1<'_, f64>) -> PyResult<TimeGrid> {
    TimeGrid::new(times.as_array().iter().copied().collect()).map_err(to_py_err)
}

fn alpha_grid_from(alphas: Option<Vec<f64>>) -> PyResult<AlphaGrid> {
    match alphas {
        Some(values) => AlphaGrid::new(values).map_err(to_py_err),
        None => Ok(AlphaGrid::default()),
    }
}

/// Time grid plus the roughness penalty Omega = Q R^-1 Q' and the
/// smoothers derived from its eigendecomposition.
#[pyclass(name = "PenaltyModel")]
struct PyPenaltyModel {
    penalty: PenaltyOperator,
}

#[pymethods]
impl PyPenaltyModel {
    #[new]
    fn new(times: PyReadonlyArray1<'_, f64>) -> PyResult<Self> {
        let grid = grid_from_times(&times)?;
        let penalty = PenaltyOperator::new(&grid).map_err(to_py_err)?;
        Ok(PyPenaltyModel { penalty })
    }

    #[getter]
    fn times<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        PyArray1::from_vec(py, self.penalty.grid().times().to_vec())
    }

    /// Eigenvalues of Omega, descending; the last two are exactly zero.
    #[getter]
    fn eigenvalues<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        PyArray1::from_vec(py, self.penalty.eigenvalues().as_slice().to_vec())
    }

    fn omega<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        matrix_to_py(py, self.penalty.omega())
    }

    fn eigenvectors<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        matrix_to_py(py, self.penalty.eigenvectors())
    }

    /// v' Omega v, the roughness of the natural-spline interpolant of v.
    fn roughness(&self, v: PyReadonlyArray1<'_, f64>) -> PyResult<f64> {
        self.penalty.quad_form(&vector_from_py(&v)).map_err(to_py_err)
    }

    /// (I + alpha Omega)^-1 w.
    fn smooth<'py>(
        &self,
        py: Python<'py>,
        alpha: f64,
        w: PyReadonlyArray1<'_, f64>,
    ) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let out = self
            .penalty
            .smooth(alpha, &vector_from_py(&w))
            .map_err(to_py_err)?;
        Ok(PyArray1::from_vec(py, out.as_slice().to_vec()))
    }

    /// (I + alpha Omega)^-1/2 w; applying twice equals `smooth`.
    fn half_smooth<'py>(
        &self,
        py: Python<'py>,
        alpha: f64,
        w: PyReadonlyArray1<'_, f64>,
    ) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let out = self
            .penalty
            .half_smooth(alpha, &vector_from_py(&w))
            .map_err(to_py_err)?;
        Ok(PyArray1::from_vec(py, out.as_slice().to_vec()))
    }

    fn smoother_trace(&self, alpha: f64) -> PyResult<f64> {
        self.penalty.smoother_trace(alpha).map_err(to_py_err)
    }

    fn smoother_diag<'py>(&self, py: Python<'py>, alpha: f64) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let d = self.penalty.smoother_diag(alpha).map_err(to_py_err)?;
        Ok(PyArray1::from_vec(py, d.as_slice().to_vec()))
    }

    fn __len__(&self) -> usize {
        self.penalty.len()
    }
}

/// Natural cubic spline through (t_j, v_j), linear outside the knots.
#[pyclass(name = "Spline")]
struct PySpline {
    spline: SplineFunction,
}

#[pymethods]
impl PySpline {
    #[new]
    fn new(times: PyReadonlyArray1<'_, f64>, values: PyReadonlyArray1<'_, f64>) -> PyResult<Self> {
        let grid = grid_from_times(&times)?;
        let values: Vec<f64> = values.as_array().iter().copied().collect();
        let spline = SplineFunction::interpolate(&grid, &values).map_err(to_py_err)?;
        Ok(PySpline { spline })
    }

    #[getter]
    fn second_derivs<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        PyArray1::from_vec(py, self.spline.second_derivs().to_vec())
    }

    fn evaluate(&self, t: f64) -> f64 {
        self.spline.evaluate(t)
    }

    fn evaluate_many<'py>(
        &self,
        py: Python<'py>,
        ts: PyReadonlyArray1<'_, f64>,
    ) -> Bound<'py, PyArray1<f64>> {
        let out: Vec<f64> = ts.as_array().iter().map(|t| self.spline.evaluate(*t)).collect();
        PyArray1::from_vec(py, out)
    }

    fn roughness(&self, model: &PyPenaltyModel) -> PyResult<f64> {
        self.spline.roughness(&model.penalty).map_err(to_py_err)
    }

    fn __call__(&self, t: f64) -> f64 {
        self.spline.evaluate(t)
    }
}

/// A fitted decomposition: loadings, scores, alphas and diagnostics.
#[pyclass(name = "FitResult")]
struct PyFitResult {
    result: FPCAResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn method(&self) -> &'static str {
        self.result.method.as_str()
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.result.components.len()
    }

    #[getter]
    fn alphas<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        PyArray1::from_vec(py, self.result.alphas())
    }

    /// Loadings as a (k, m) array, one unit-norm row per component.
    #[getter]
    fn loadings<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        let rows: Vec<Vec<f64>> = self
            .result
            .components
            .iter()
            .map(|c| c.fit.loading.as_slice().to_vec())
            .collect();
        PyArray2::from_vec2(py, &rows).expect("components share m")
    }

    /// Scores as an (n, k) array.
    #[getter]
    fn scores<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        let n = self.result.components.first().map_or(0, |c| c.fit.scores.len());
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                self.result
                    .components
                    .iter()
                    .map(|c| c.fit.scores[i])
                    .collect()
            })
            .collect();
        PyArray2::from_vec2(py, &rows).expect("components share n")
    }

    #[getter]
    fn variance_fractions<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        PyArray1::from_vec(py, self.result.variance_fractions())
    }

    #[getter]
    fn column_means<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        PyArray1::from_vec(py, self.result.column_means.as_slice().to_vec())
    }

    #[getter]
    fn times<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<f64>> {
        PyArray1::from_vec(py, self.result.grid.times().to_vec())
    }

    #[getter]
    fn residual_fro_norm(&self) -> f64 {
        self.result.residual_fro_norm
    }

    /// Selection trace of one component: (alphas, scores, chosen_index).
    fn trace<'py>(
        &self,
        py: Python<'py>,
        component: usize,
    ) -> PyResult<(Bound<'py, PyArray1<f64>>, Bound<'py, PyArray1<f64>>, usize)> {
        let comp = self
            .result
            .components
            .get(component)
            .ok_or_else(|| PyValueError::new_err(format!("no component {component}")))?;
        Ok((
            PyArray1::from_vec(py, comp.trace.alphas.clone()),
            PyArray1::from_vec(py, comp.trace.scores.clone()),
            comp.trace.chosen_index,
        ))
    }

    /// Natural-spline interpolant of one loading.
    fn loading_spline(&self, component: usize) -> PyResult<PySpline> {
        let comp = self
            .result
            .components
            .get(component)
            .ok_or_else(|| PyValueError::new_err(format!("no component {component}")))?;
        let spline = SplineFunction::interpolate(&self.result.grid, comp.fit.loading.as_slice())
            .map_err(to_py_err)?;
        Ok(PySpline { spline })
    }

    /// The result serialized as JSON (same format as the CLI writes).
    fn to_json(&self) -> String {
        pfpca_core::io::result_to_json(&self.result)
    }
}

fn dataset_from(
    x: &PyReadonlyArray2<'_, f64>,
    times: &PyReadonlyArray1<'_, f64>,
    center: bool,
) -> PyResult<(CenteredDataset, PenaltyOperator)> {
    let grid = grid_from_times(times)?;
    let matrix = matrix_from_py(x);
    let data = if center {
        CenteredDataset::center_columns(&matrix, &grid)
    } else {
        CenteredDataset::assume_centered(&matrix, &grid)
    }
    .map_err(to_py_err)?;
    let penalty = PenaltyOperator::new(&grid).map_err(to_py_err)?;
    Ok((data, penalty))
}

/// MPDC fit: per-component alpha by delete-column CV (or GCV).
#[pyfunction]
#[pyo3(signature = (x, times, k, criterion = "cv", alphas = None, center = true))]
fn mpdc(
    x: PyReadonlyArray2<'_, f64>,
    times: PyReadonlyArray1<'_, f64>,
    k: usize,
    criterion: &str,
    alphas: Option<Vec<f64>>,
    center: bool,
) -> PyResult<PyFitResult> {
    let (data, penalty) = dataset_from(&x, &times, center)?;
    let grid = alpha_grid_from(alphas)?;
    let criterion = match criterion {
        "cv" => Criterion::Cv,
        "gcv" => Criterion::Gcv,
        other => {
            return Err(PyValueError::new_err(format!(
                "criterion must be 'cv' or 'gcv', got '{other}'"
            )))
        }
    };
    let result = fit_mpdc(&data, &penalty, k, &grid, criterion, &FitConfig::default())
        .map_err(to_py_err)?;
    Ok(PyFitResult { result })
}

/// SPDR fit: one alpha by delete-row CV for all components.
#[pyfunction]
#[pyo3(signature = (x, times, k, alphas = None, center = true))]
fn spdr(
    x: PyReadonlyArray2<'_, f64>,
    times: PyReadonlyArray1<'_, f64>,
    k: usize,
    alphas: Option<Vec<f64>>,
    center: bool,
) -> PyResult<PyFitResult> {
    let (data, penalty) = dataset_from(&x, &times, center)?;
    let grid = alpha_grid_from(alphas)?;
    let result =
        fit_spdr(&data, &penalty, k, &grid, &FitConfig::default()).map_err(to_py_err)?;
    Ok(PyFitResult { result })
}

#[pyfunction]
fn cv_score(
    x: PyReadonlyArray2<'_, f64>,
    u: PyReadonlyArray1<'_, f64>,
    times: PyReadonlyArray1<'_, f64>,
    alpha: f64,
) -> PyResult<f64> {
    let grid = grid_from_times(&times)?;
    let penalty = PenaltyOperator::new(&grid).map_err(to_py_err)?;
    selection::cv_score(&matrix_from_py(&x), &vector_from_py(&u), &penalty, alpha)
        .map_err(to_py_err)
}

#[pyfunction]
fn gcv_score(
    x: PyReadonlyArray2<'_, f64>,
    u: PyReadonlyArray1<'_, f64>,
    times: PyReadonlyArray1<'_, f64>,
    alpha: f64,
) -> PyResult<f64> {
    let grid = grid_from_times(&times)?;
    let penalty = PenaltyOperator::new(&grid).map_err(to_py_err)?;
    selection::gcv_score(&matrix_from_py(&x), &vector_from_py(&u), &penalty, alpha)
        .map_err(to_py_err)
}

/// Leave-one-column-out refit oracle; equals cv_score / ||u||^2.
#[pyfunction]
fn cv_oracle(
    x: PyReadonlyArray2<'_, f64>,
    u: PyReadonlyArray1<'_, f64>,
    times: PyReadonlyArray1<'_, f64>,
    alpha: f64,
) -> PyResult<f64> {
    let grid = grid_from_times(&times)?;
    let penalty = PenaltyOperator::new(&grid).map_err(to_py_err)?;
    selection::cv_oracle(&matrix_from_py(&x), &vector_from_py(&u), &penalty, alpha)
        .map_err(to_py_err)
}

/// Delete-one-row CV for a K-component fit at one alpha (full refits).
#[pyfunction]
fn row_cv_score(
    x: PyReadonlyArray2<'_, f64>,
    times: PyReadonlyArray1<'_, f64>,
    alpha: f64,
    k: usize,
) -> PyResult<f64> {
    let grid = grid_from_times(&times)?;
    let penalty = PenaltyOperator::new(&grid).map_err(to_py_err)?;
    selection::row_cv_score(&matrix_from_py(&x), &penalty, alpha, k).map_err(to_py_err)
}

/// Elementwise sqrt(N + 1/4) for count data.
#[pyfunction]
fn sqrt_count_transform<'py>(
    py: Python<'py>,
    counts: PyReadonlyArray2<'py, f64>,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let out = pfpca_core::io::sqrt_count_transform(&matrix_from_py(&counts)).map_err(to_py_err)?;
    Ok(matrix_to_py(py, &out))
}

/// The unit-norm factors of the two-factor test model on a grid.
#[pyfunction]
fn true_components<'py>(
    py: Python<'py>,
    times: PyReadonlyArray1<'py, f64>,
) -> PyResult<(Bound<'py, PyArray1<f64>>, Bound<'py, PyArray1<f64>>)> {
    let grid = grid_from_times(&times)?;
    let (v1, v2) = simulation::true_components(&grid);
    Ok((
        PyArray1::from_vec(py, v1.as_slice().to_vec()),
        PyArray1::from_vec(py, v2.as_slice().to_vec()),
    ))
}

/// Two-sided exact sign test for zero median; zeros are dropped.
#[pyfunction]
fn sign_test(diffs: Vec<f64>) -> PyResult<f64> {
    simulation::sign_test(&diffs).map_err(to_py_err)
}

/// Runs the MPDC vs SPDR study; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (n = 101, m = 101, sigma1 = 20.0, sigma2 = 10.0, sigma = 4.0,
                    t_min = -1.0, t_max = 1.0, replicates = 100, seed = 5,
                    mean_curve = None))]
#[allow(clippy::too_many_arguments)]
fn run_study(
    n: usize,
    m: usize,
    sigma1: f64,
    sigma2: f64,
    sigma: f64,
    t_min: f64,
    t_max: f64,
    replicates: usize,
    seed: u64,
    mean_curve: Option<Vec<f64>>,
) -> PyResult<String> {
    let cfg = SimConfig {
        n,
        m,
        sigma1,
        sigma2,
        sigma,
        t_min,
        t_max,
        replicates,
        base_seed: seed,
        mean_curve,
    };
    let report = simulation::run_study(&cfg).map_err(to_py_err)?;
    Ok(pfpca_core::io::report_to_json(&cfg, &report))
}

#[pymodule]
fn pfpca(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPenaltyModel>()?;
    m.add_class::<PySpline>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(mpdc, m)?)?;
    m.add_function(wrap_pyfunction!(spdr, m)?)?;
    m.add_function(wrap_pyfunction!(cv_score, m)?)?;
    m.add_function(wrap_pyfunction!(gcv_score, m)?)?;
    m.add_function(wrap_pyfunction!(cv_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(row_cv_score, m)?)?;
    m.add_function(wrap_pyfunction!(sqrt_count_transform, m)?)?;
    m.add_function(wrap_pyfunction!(true_components, m)?)?;
    m.add_function(wrap_pyfunction!(sign_test, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
