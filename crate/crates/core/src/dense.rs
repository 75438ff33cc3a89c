//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! Everything here is meant for desk-scale verification: generalized
//! symmetric eigenvalue bounds, null spaces and principal angles.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Relative asymmetry `max|m - mᵀ| / max|m|` (0 for the zero matrix).
pub fn asymmetry(m: &Mat) -> f64 {
    let scale = max_abs(m);
    if scale == 0.0 {
        return 0.0;
    }
    max_abs(&(m - m.transpose())) / scale
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// Cholesky factor `L` of an SPD matrix, with a descriptive error otherwise.
pub fn cholesky_lower(m: &Mat, what: &str) -> Result<Mat> {
    if m.nrows() != m.ncols() {
        return Err(dim_err(format!(
            "{what}: matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    match symmetrize(m).cholesky() {
        Some(c) => Ok(c.l()),
        None => Err(Error::NotPositiveDefinite {
            what: what.into(),
            pivot: 0,
            value: sym_eigenvalues(m).first().copied().unwrap_or(0.0),
        }),
    }
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn lower_solve(l: &Mat, b: &Mat) -> Mat {
    l.solve_lower_triangular(b)
        .expect("triangular factor with nonzero diagonal")
}

/// Returns `L⁻¹ A L⁻ᵀ` where `B = L Lᵀ`, i.e. the symmetric form of the pencil `(A, B)`.
pub fn congruence_inverse(a: &Mat, l: &Mat) -> Mat {
    let y = lower_solve(l, a);
    let z = lower_solve(l, &y.transpose());
    symmetrize(&z)
}

/// Generalized eigenvalues of the symmetric pencil `(a, b)` with `b` SPD, ascending.
pub fn gen_eigenvalues(a: &Mat, b: &Mat) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(dim_err(format!(
            "pencil shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let l = cholesky_lower(b, "reference matrix")?;
    Ok(sym_eigenvalues(&congruence_inverse(a, &l)))
}

/// Smallest and largest generalized eigenvalue of `(a, b)`.
pub fn gen_eig_bounds(a: &Mat, b: &Mat) -> Result<(f64, f64)> {
    let vals = gen_eigenvalues(a, b)?;
    match (vals.first(), vals.last()) {
        (Some(lo), Some(hi)) => Ok((*lo, *hi)),
        _ => Err(dim_err("empty pencil")),
    }
}

/// Solves `m x = b` for SPD `m` (dense Cholesky).
pub fn spd_solve(m: &Mat, b: &Mat, what: &str) -> Result<Mat> {
    let l = cholesky_lower(m, what)?;
    let y = lower_solve(&l, b);
    Ok(l.transpose()
        .solve_upper_triangular(&y)
        .expect("triangular factor with nonzero diagonal"))
}

/// Decides `m ≽ 0` with the threshold `λ_min ≥ -rel · ‖m‖`.
pub fn is_psd(m: &Mat, rel: f64) -> bool {
    let vals = sym_eigenvalues(m);
    let norm = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    match vals.first() {
        Some(lo) => *lo >= -rel * norm,
        None => true,
    }
}

/// Orthonormal null-space basis with a rank guard band.
#[derive(Debug, Clone)]
pub struct NullSpace {
    /// Columns span the computed kernel.
    pub basis: Mat,
    /// Set when some singular value sits within a factor 10 of the threshold.
    pub indeterminate: bool,
}

/// Kernel of `m` (any shape): right singular vectors whose singular value is
/// below `rel_tol · σ_max`.
pub fn null_space(m: &Mat, rel_tol: f64) -> NullSpace {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return NullSpace {
            basis: Mat::zeros(0, 0),
            indeterminate: false,
        };
    }
    // pad wide matrices so that the SVD returns a full set of right vectors
    let work = if rows < cols {
        let mut padded = Mat::zeros(cols, cols);
        padded.view_mut((0, 0), (rows, cols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |a, s| a.max(*s));
    if sigma_max == 0.0 {
        return NullSpace {
            basis: Mat::identity(cols, cols),
            indeterminate: false,
        };
    }
    let threshold = rel_tol * sigma_max;
    let mut keep = Vec::new();
    let mut indeterminate = false;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < threshold {
            keep.push(i);
        }
        if *s > threshold / 10.0 && *s < threshold * 10.0 {
            indeterminate = true;
        }
    }
    let mut basis = Mat::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        for r in 0..cols {
            basis[(r, j)] = v_t[(i, r)];
        }
    }
    NullSpace {
        basis,
        indeterminate,
    }
}

/// Orthonormal basis of the column space of `m` (threshold `rel_tol · σ_max`).
pub fn range_basis(m: &Mat, rel_tol: f64) -> Mat {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Mat::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |a, s| a.max(*s));
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| sigma_max > 0.0 && **s >= rel_tol * sigma_max)
        .map(|(i, _)| i)
        .collect();
    let mut basis = Mat::zeros(rows, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &u.column(i));
    }
    basis
}

/// Sine of the largest principal angle between the spans of two orthonormal
/// bases. Returns 1 when the dimensions differ.
pub fn max_principal_angle_sine(q1: &Mat, q2: &Mat) -> f64 {
    if q1.ncols() != q2.ncols() {
        return 1.0;
    }
    if q1.ncols() == 0 {
        return 0.0;
    }
    // ‖(I - Q1 Q1ᵀ) Q2‖₂ is accurate for small angles, unlike acos of cosines
    let residual = q2 - q1 * (q1.transpose() * q2);
    let svd = residual.svd(false, false);
    svd.singular_values
        .iter()
        .fold(0.0_f64, |a, s| a.max(*s))
        .min(1.0)
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(n, m);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
