//! Natural cubic spline interpolation of a fitted loading vector.
//!
//! The interior second derivatives solve the tridiagonal system
//! R s = Q' v; the boundary second derivatives are zero. Outside the
//! knot range the curve continues linearly with the boundary slope of
//! the boundary cubic.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::{BandFactors, PenaltyOperator, TimeGrid};

/// A natural cubic spline through (t_j, v_j), stored as knot values and
/// knot second derivatives.
#[derive(Debug, Clone)]
pub struct SplineFunction {
    grid: TimeGrid,
    values: Vec<f64>,
    second_derivs: Vec<f64>,
}

impl SplineFunction {
    /// Interpolates `values` over `grid` with a natural cubic spline.
    pub fn interpolate(grid: &TimeGrid, values: &[f64]) -> Result<Self> {
        let m = grid.len();
        if values.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: values.len(),
            });
        }
        let factors = BandFactors::new(grid);
        let qtv = factors.q().tr_mul(&DVector::from_column_slice(values));
        let interior = factors.solve_r(qtv.as_slice());
        let mut second_derivs = vec![0.0; m];
        second_derivs[1..m - 1].copy_from_slice(&interior);
        Ok(SplineFunction {
            grid: grid.clone(),
            values: values.to_vec(),
            second_derivs,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Second derivatives at the knots; the first and last are exactly 0.
    pub fn second_derivs(&self) -> &[f64] {
        &self.second_derivs
    }

    /// Evaluates the spline at any real t, extending linearly outside
    /// the knot range.
    pub fn evaluate(&self, t: f64) -> f64 {
        let times = self.grid.times();
        let m = times.len();
        if t <= times[0] {
            if t == times[0] {
                return self.values[0];
            }
            return self.values[0] + (t - times[0]) * self.boundary_slope_left();
        }
        if t >= times[m - 1] {
            if t == times[m - 1] {
                return self.values[m - 1];
            }
            return self.values[m - 1] + (t - times[m - 1]) * self.boundary_slope_right();
        }
        // first index with times[idx] > t; the interval is [idx-1, idx]
        let idx = times.partition_point(|&tj| tj <= t);
        let j = idx - 1;
        if t == times[j] {
            return self.values[j];
        }
        self.eval_in_interval(j, t)
    }

    /// The closed-form cubic on [t_j, t_{j+1}] in terms of knot values
    /// and second derivatives.
    fn eval_in_interval(&self, j: usize, t: f64) -> f64 {
        let times = self.grid.times();
        let h = self.grid.gaps()[j];
        let a = t - times[j];
        let b = times[j + 1] - t;
        let (vj, vj1) = (self.values[j], self.values[j + 1]);
        let (sj, sj1) = (self.second_derivs[j], self.second_derivs[j + 1]);
        let linear = (a * vj1 + b * vj) / h;
        let bend = (1.0 + a / h) * sj1 + (1.0 + b / h) * sj;
        linear - a * b * bend / 6.0
    }

    /// One-sided derivative of the first-interval cubic at t_1.
    fn boundary_slope_left(&self) -> f64 {
        let h = self.grid.gaps()[0];
        let ds = self.second_derivs[1] + 2.0 * self.second_derivs[0];
        (self.values[1] - self.values[0]) / h - h * ds / 6.0
    }

    /// One-sided derivative of the last-interval cubic at t_m.
    fn boundary_slope_right(&self) -> f64 {
        let m = self.grid.len();
        let h = self.grid.gaps()[m - 2];
        let ds = 2.0 * self.second_derivs[m - 1] + self.second_derivs[m - 2];
        (self.values[m - 1] - self.values[m - 2]) / h + h * ds / 6.0
    }

    /// v' Omega v, the integrated squared second derivative of the
    /// interpolant.
    pub fn roughness(&self, penalty: &PenaltyOperator) -> Result<f64> {
        if !penalty.same_grid(&self.grid) {
            return Err(Error::GridMismatch);
        }
        penalty.quad_form(&DVector::from_column_slice(&self.values))
    }
}

/// Interpolates `values` over `grid`; see [`SplineFunction::interpolate`].
pub fn interpolate(grid: &TimeGrid, values: &[f64]) -> Result<SplineFunction> {
    SplineFunction::interpolate(grid, values)
}

/// Evaluates a spline at `t`; see [`SplineFunction::evaluate`].
pub fn evaluate(spline: &SplineFunction, t: f64) -> f64 {
    spline.evaluate(t)
}

/// Roughness of a spline under a penalty built on the same grid.
pub fn roughness(spline: &SplineFunction, penalty: &PenaltyOperator) -> Result<f64> {
    spline.roughness(penalty)
}
