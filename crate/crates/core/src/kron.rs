//! Sums of Kronecker products of univariate matrices, and fast solves with
//! Kronecker products of SPD factors.
//!
//! Tensor indices are ordered with the first factor slowest: for factors of
//! sizes `(n0, n1, n2)` the global index of `(i0, i1, i2)` is
//! `(i0 * n1 + i1) * n2 + i2`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cholesky::BandedCholesky;
use crate::error::{dim_err, Result};
use crate::sparse::CsrMatrix;
use crate::splines::UnivariateMatrix;

/// `coef · F_0 ⊗ F_1 ⊗ …`.
/// Nonzeros of one matrix row as `(column, value)`.
type RowEntries = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct KronTerm {
    pub coef: f64,
    pub factors: Vec<UnivariateMatrix>,
}

impl KronTerm {
    pub fn new(coef: f64, factors: Vec<UnivariateMatrix>) -> Self {
        Self { coef, factors }
    }
}

/// A sum of Kronecker terms with conforming shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerMatrix {
    terms: Vec<KronTerm>,
    row_dims: Vec<usize>,
    col_dims: Vec<usize>,
}

fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl KroneckerMatrix {
    pub fn new(terms: Vec<KronTerm>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| dim_err("Kronecker sum without terms"))?;
        if first.factors.is_empty() {
            return Err(dim_err("Kronecker term without factors"));
        }
        let row_dims: Vec<usize> = first.factors.iter().map(|f| f.nrows()).collect();
        let col_dims: Vec<usize> = first.factors.iter().map(|f| f.ncols()).collect();
        for (k, t) in terms.iter().enumerate() {
            let r: Vec<usize> = t.factors.iter().map(|f| f.nrows()).collect();
            let c: Vec<usize> = t.factors.iter().map(|f| f.ncols()).collect();
            if r != row_dims || c != col_dims {
                return Err(dim_err(format!(
                    "term {k} has factor shapes {r:?}x{c:?}, expected {row_dims:?}x{col_dims:?}"
                )));
            }
        }
        Ok(Self {
            terms,
            row_dims,
            col_dims,
        })
    }

    pub fn terms(&self) -> &[KronTerm] {
        &self.terms
    }

    pub fn row_dims(&self) -> &[usize] {
        &self.row_dims
    }

    pub fn col_dims(&self) -> &[usize] {
        &self.col_dims
    }

    pub fn nrows(&self) -> usize {
        product(&self.row_dims)
    }

    pub fn ncols(&self) -> usize {
        product(&self.col_dims)
    }

    /// Matrix-free product through successive mode products.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols() {
            return Err(dim_err(format!(
                "vector of length {} for {} columns",
                x.len(),
                self.ncols()
            )));
        }
        let mut y = vec![0.0; self.nrows()];
        for t in &self.terms {
            let mut cur = x.to_vec();
            let mut dims = self.col_dims.clone();
            for (d, f) in t.factors.iter().enumerate() {
                cur = mode_product(&cur, &dims, d, f);
                dims[d] = f.nrows();
            }
            for (yi, ci) in y.iter_mut().zip(cur) {
                *yi += t.coef * ci;
            }
        }
        Ok(y)
    }

    /// Materializes the sum as one sparse matrix. Entries of a row are summed
    /// term by term in a fixed order.
    pub fn to_csr(&self) -> CsrMatrix {
        let nd = self.row_dims.len();
        // nonzeros of every factor row, per term
        let rows: Vec<Vec<Vec<RowEntries>>> = self
            .terms
            .iter()
            .map(|t| {
                t.factors
                    .iter()
                    .map(|f| (0..f.nrows()).map(|r| f.row_nonzeros(r)).collect())
                    .collect()
            })
            .collect();
        let nrows = self.nrows();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        let mut idx = vec![0usize; nd];
        let mut entries: Vec<(usize, f64)> = Vec::new();
        let mut partial: Vec<(usize, f64)> = Vec::new();
        let mut next: Vec<(usize, f64)> = Vec::new();
        for _ in 0..nrows {
            entries.clear();
            for (t, term_rows) in self.terms.iter().zip(&rows) {
                partial.clear();
                partial.push((0, t.coef));
                for d in 0..nd {
                    next.clear();
                    for &(c, v) in &partial {
                        for &(cd, vd) in &term_rows[d][idx[d]] {
                            next.push((c * self.col_dims[d] + cd, v * vd));
                        }
                    }
                    core::mem::swap(&mut partial, &mut next);
                }
                entries.extend_from_slice(&partial);
            }
            entries.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for &(c, v) in &entries {
                if c == last {
                    *data.last_mut().expect("previous entry") += v;
                } else {
                    indices.push(c);
                    data.push(v);
                    last = c;
                }
            }
            indptr.push(indices.len());
            // advance the row multi-index, last factor fastest
            for d in (0..nd).rev() {
                idx[d] += 1;
                if idx[d] < self.row_dims[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        CsrMatrix::from_raw(nrows, self.ncols(), indptr, indices, data)
            .expect("Kronecker assembly produces sorted rows")
    }

    /// Estimated nonzeros of the materialized matrix (upper bound: the sum
    /// over terms of the product of factor nonzeros).
    pub fn nnz_estimate(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.factors.iter().map(|f| f.nnz()).product::<usize>())
            .sum()
    }
}

/// Applies `f` along mode `d` of a tensor stored with the first mode slowest.
pub fn mode_product(x: &[f64], dims: &[usize], d: usize, f: &UnivariateMatrix) -> Vec<f64> {
    let pre = product(&dims[..d]);
    let post = product(&dims[d + 1..]);
    let (n_in, n_out) = (dims[d], f.nrows());
    debug_assert_eq!(f.ncols(), n_in);
    let mut y = vec![0.0; pre * n_out * post];
    for o in 0..pre {
        for r in 0..n_out {
            for (c, v) in f.row_nonzeros(r) {
                let src = &x[(o * n_in + c) * post..(o * n_in + c + 1) * post];
                let dst = &mut y[(o * n_out + r) * post..(o * n_out + r + 1) * post];
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += v * b;
                }
            }
        }
    }
    y
}

/// Solver for `M_0 ⊗ M_1 ⊗ …` with SPD univariate factors.
#[derive(Debug, Clone)]
pub struct KroneckerSolver {
    factors: Vec<BandedCholesky>,
    dims: Vec<usize>,
}

impl KroneckerSolver {
    pub fn new(mats: &[&UnivariateMatrix], what: &str) -> Result<Self> {
        if mats.is_empty() {
            return Err(dim_err("Kronecker solver needs at least one factor"));
        }
        let mut factors = Vec::with_capacity(mats.len());
        for (d, m) in mats.iter().enumerate() {
            if m.nrows() != m.ncols() {
                return Err(dim_err(format!("{what}: factor {d} is not square")));
            }
            factors.push(BandedCholesky::factor(
                m.nrows(),
                m.data(),
                &format!("{what} (factor {d})"),
            )?);
        }
        let dims = mats.iter().map(|m| m.nrows()).collect();
        Ok(Self { factors, dims })
    }

    pub fn dim(&self) -> usize {
        product(&self.dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn for_each_fiber(&self, x: &mut [f64], f: impl Fn(&BandedCholesky, &mut [f64], usize, usize)) {
        for (d, fac) in self.factors.iter().enumerate() {
            let pre = product(&self.dims[..d]);
            let post = product(&self.dims[d + 1..]);
            let n = self.dims[d];
            for o in 0..pre {
                for i in 0..post {
                    f(fac, x, o * n * post + i, post);
                }
            }
        }
    }

    /// `x ← M⁻¹ x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim(), "Kronecker solve: length mismatch");
        self.for_each_fiber(x, |fac, x, off, stride| {
            fac.forward_strided(x, off, stride);
            fac.backward_strided(x, off, stride);
        });
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `x ← L⁻¹ x` where `L = L_0 ⊗ L_1 ⊗ …` and `M = L Lᵀ`.
    pub fn half_solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim(), "Kronecker solve: length mismatch");
        self.for_each_fiber(x, |fac, x, off, stride| fac.forward_strided(x, off, stride));
    }

    /// `x ← L⁻ᵀ x`.
    pub fn half_solve_transposed_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim(), "Kronecker solve: length mismatch");
        self.for_each_fiber(x, |fac, x, off, stride| {
            fac.backward_strided(x, off, stride)
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::Mat;
    use crate::splines::{make_space, univariate_matrix};

    fn dense_kron(a: &Mat, b: &Mat) -> Mat {
        a.kronecker(b)
    }

    fn small_factors() -> (UnivariateMatrix, UnivariateMatrix, UnivariateMatrix) {
        let s = make_space(2, 1, 1, 0.0, 1.0).unwrap();
        let d = make_space(1, 1, -1, 0.0, 1.0).unwrap();
        (
            univariate_matrix(&s, &s, 0, 0).unwrap(),
            univariate_matrix(&d, &s, 0, 1).unwrap(),
            univariate_matrix(&s, &s, 1, 1).unwrap(),
        )
    }

    #[test]
    fn materialization_matches_dense_kronecker() {
        let (m, g, k) = small_factors();
        let kron = KroneckerMatrix::new(alloc::vec![
            KronTerm::new(2.0, alloc::vec![g.clone(), m.clone(), k.clone()]),
            KronTerm::new(-1.0, alloc::vec![g.clone(), k.clone(), m.clone()]),
        ])
        .unwrap();
        let dense = dense_kron(&dense_kron(&g.to_dense(), &m.to_dense()), &k.to_dense()) * 2.0
            - dense_kron(&dense_kron(&g.to_dense(), &k.to_dense()), &m.to_dense());
        let csr = kron.to_csr();
        assert_eq!((csr.nrows(), csr.ncols()), (dense.nrows(), dense.ncols()));
        assert!((csr.to_dense() - &dense).abs().max() < 1e-14);
        let x: Vec<f64> = (0..kron.ncols()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = kron.apply(&x).unwrap();
        let yd = &dense * Mat::from_column_slice(x.len(), 1, &x);
        for (a, b) in y.iter().zip(yd.iter()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (m, _, _) = small_factors();
        let wide = UnivariateMatrix::from_row_major(2, 4, alloc::vec![1.0; 8]).unwrap();
        let r = KroneckerMatrix::new(alloc::vec![
            KronTerm::new(1.0, alloc::vec![m.clone(), m.clone()]),
            KronTerm::new(1.0, alloc::vec![wide, m]),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn kronecker_solve_matches_dense() {
        let (m, _, k) = small_factors();
        let s = make_space(3, 2, 0, 0.0, 1.0).unwrap();
        let m3 = univariate_matrix(&s, &s, 0, 0).unwrap();
        let k_reg = k.plus(&m).unwrap();
        let solver = KroneckerSolver::new(&[&m, &k_reg, &m3], "test").unwrap();
        let dense = dense_kron(
            &dense_kron(&m.to_dense(), &k_reg.to_dense()),
            &m3.to_dense(),
        );
        let b: Vec<f64> = (0..solver.dim()).map(|i| 1.0 + (i as f64).cos()).collect();
        let x = solver.solve(&b);
        let r = &dense * Mat::from_column_slice(x.len(), 1, &x)
            - Mat::from_column_slice(b.len(), 1, &b);
        assert!(r.abs().max() < 1e-10 * b.iter().fold(0.0_f64, |a, v| a.max(v.abs())));

        // half solves compose to the full solve
        let mut h = b.clone();
        solver.half_solve_in_place(&mut h);
        solver.half_solve_transposed_in_place(&mut h);
        for (a, c) in h.iter().zip(&x) {
            assert!((a - c).abs() < 1e-10 * c.abs().max(1.0));
        }
    }

    #[test]
    fn singular_factor_is_reported() {
        let (_, _, k) = small_factors();
        assert!(KroneckerSolver::new(&[&k], "stiffness").is_err());
    }
}
