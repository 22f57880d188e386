//! Small shared linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

/// LDLt factorization of a symmetric tridiagonal matrix given by its
/// diagonal and off-diagonal. No pivoting; callers must pass a strictly
/// diagonally dominant (hence positive-definite) matrix.
pub(crate) struct TridiagLdl {
    pivots: Vec<f64>,
    lower: Vec<f64>,
}

impl TridiagLdl {
    pub fn factor(diag: &[f64], off: &[f64]) -> Self {
        let k = diag.len();
        debug_assert_eq!(off.len(), k.saturating_sub(1));
        let mut pivots = vec![0.0; k];
        let mut lower = vec![0.0; k.saturating_sub(1)];
        pivots[0] = diag[0];
        for i in 1..k {
            lower[i - 1] = off[i - 1] / pivots[i - 1];
            pivots[i] = diag[i] - lower[i - 1] * off[i - 1];
        }
        TridiagLdl { pivots, lower }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.pivots.len();
        debug_assert_eq!(rhs.len(), k);
        let mut x = rhs.to_vec();
        for i in 1..k {
            x[i] -= self.lower[i - 1] * x[i - 1];
        }
        for i in 0..k {
            x[i] /= self.pivots[i];
        }
        for i in (0..k.saturating_sub(1)).rev() {
            x[i] -= self.lower[i] * x[i + 1];
        }
        x
    }
}

/// Flips `v` so that its entry of largest absolute value is positive.
/// Ties resolve to the first such entry, making the sign deterministic.
pub(crate) fn canonical_sign(v: &mut DVector<f64>) {
    let mut idx = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.neg_mut();
    }
}

/// Top singular triple (sigma, u, v) of a dense matrix via full SVD.
pub(crate) fn top_singular_triple(x: &DMatrix<f64>) -> (f64, DVector<f64>, DVector<f64>) {
    let svd = nalgebra::SVD::new(x.clone(), true, true);
    let u = svd.u.expect("svd: u requested");
    let v_t = svd.v_t.expect("svd: v_t requested");
    let sigma = svd.singular_values[0];
    (sigma, u.column(0).into_owned(), v_t.row(0).transpose())
}

/// Columns of `v_t` transposed: the first `k` right singular vectors.
pub(crate) fn top_right_singular_vectors(x: &DMatrix<f64>, k: usize) -> Vec<DVector<f64>> {
    let svd = nalgebra::SVD::new(x.clone(), false, true);
    let v_t = svd.v_t.expect("svd: v_t requested");
    (0..k).map(|i| v_t.row(i).transpose()).collect()
}
