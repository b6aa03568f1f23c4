//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Solve `m x = b` for symmetric positive definite `m`.
pub(crate) fn solve_spd(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().cholesky().map(|c| c.solve(b))
}

pub(crate) fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
pub fn condition_number_sym(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn min_eigenvalue_sym(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric inverse with a conditioning guard.
pub(crate) fn inverse_sym_checked(m: &DMatrix<f64>, max_condition: f64) -> Result<DMatrix<f64>> {
    let condition = condition_number_sym(m);
    if !condition.is_finite() || condition > max_condition {
        return Err(Error::IllConditioned { condition });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { condition })
}

/// Orthonormalize the rows of `a` (modified Gram–Schmidt, two passes).
/// Fails if the rows are linearly dependent.
pub fn orthonormal_rows(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (q, p) = a.shape();
    let mut out = DMatrix::<f64>::zeros(q, p);
    for i in 0..q {
        let row = a.row(i).transpose();
        let scale = row.norm();
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Input(format!("constraint row {} is zero", i + 1)));
        }
        let mut v = row.clone();
        for _ in 0..2 {
            for k in 0..i {
                let basis = out.row(k).transpose();
                let proj = basis.dot(&v);
                v.axpy(-proj, &basis, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= 1e-10 * scale {
            return Err(Error::Input(format!(
                "constraint rows are linearly dependent (row {})",
                i + 1
            )));
        }
        out.set_row(i, &(v / norm).transpose());
    }
    Ok(out)
}

/// Rows spanning the orthogonal complement of the row space of `orth`
/// (which must have orthonormal rows): `B Bᵀ = I`, `orth Bᵀ = 0`.
pub fn complement_rows(orth: &DMatrix<f64>) -> DMatrix<f64> {
    let (q, p) = orth.shape();
    let mut basis: Vec<DVector<f64>> = (0..q).map(|i| orth.row(i).transpose()).collect();
    let mut out = Vec::with_capacity(p - q);
    for j in 0..p {
        if out.len() == p - q {
            break;
        }
        let mut v = DVector::<f64>::zeros(p);
        v[j] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            let v = v / norm;
            basis.push(v.clone());
            out.push(v);
        }
    }
    let mut m = DMatrix::<f64>::zeros(out.len(), p);
    for (i, v) in out.iter().enumerate() {
        m.set_row(i, &v.transpose());
    }
    m
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n-1)·prob`, the "type 7" rule). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn median(values: &[f64]) -> f64 {
    quantile_sorted(&sorted_copy(values), 0.5)
}
