//! Univariate spline spaces on uniform dyadic meshes, Gauss quadrature and
//! the univariate Galerkin matrices from which all space-time operators are
//! assembled.
//!
//! A space `S(p, level, k)` on `(a, b)` has `2^level` equal elements, degree
//! `p` and `C^k` continuity at interior knots (`k = -1` is discontinuous).
//! The knot vector is open: boundary knots are repeated `p + 1` times and
//! interior knots `p - k` times.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{spd_solve, Mat};
use crate::error::{dim_err, domain_err, Result};
use crate::sparse::CsrMatrix;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "at least one quadrature point");
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        points[i] = -x;
        points[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        points[0] = 0.0;
        weights[0] = 2.0;
    }
    (points, weights)
}

/// Quadrature points and weights attached to one element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementQuadrature {
    pub element: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Per-element Gauss–Legendre rule over a spline mesh, optionally clipped to
/// a sub-interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub elements: Vec<ElementQuadrature>,
}

impl QuadratureRule {
    /// `npts` Gauss points on every element (or element ∩ `clip`).
    pub fn on_space(space: &SplineSpace, npts: usize, clip: Option<(f64, f64)>) -> Self {
        let (xi, wi) = gauss_legendre(npts);
        let mut elements = Vec::new();
        for e in 0..space.n_elements() {
            let (mut lo, mut hi) = space.element_bounds(e);
            if let Some((c, d)) = clip {
                lo = lo.max(c);
                hi = hi.min(d);
            }
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            elements.push(ElementQuadrature {
                element: e,
                points: xi.iter().map(|x| mid + half * x).collect(),
                weights: wi.iter().map(|w| half * w).collect(),
            });
        }
        Self { elements }
    }
}

/// Which end of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Left,
    Right,
}

/// Identifies a space in matrix metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceTag {
    pub degree: usize,
    pub level: u32,
    pub continuity: i32,
}

/// Univariate spline space `S(p, level, k)(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace {
    degree: usize,
    level: u32,
    continuity: i32,
    a: f64,
    b: f64,
    knots: Vec<f64>,
}

/// Builds the open uniform knot vector and validates the parameters.
pub fn make_space(
    degree: usize,
    level: u32,
    continuity: i32,
    a: f64,
    b: f64,
) -> Result<SplineSpace> {
    if continuity < -1 || continuity > degree as i32 - 1 {
        return Err(domain_err(format!(
            "continuity {continuity} outside [-1, {}] for degree {degree}",
            degree as i32 - 1
        )));
    }
    if !(a < b) {
        return Err(domain_err(format!("empty interval ({a}, {b})")));
    }
    if level > 24 {
        return Err(domain_err(format!("refinement level {level} is too large")));
    }
    let n_el = 1usize << level;
    let mult = (degree as i32 - continuity) as usize;
    let mut knots = Vec::with_capacity(2 * (degree + 1) + (n_el - 1) * mult);
    knots.extend(core::iter::repeat_n(a, degree + 1));
    for e in 1..n_el {
        let t = a + (b - a) * (e as f64) / (n_el as f64);
        knots.extend(core::iter::repeat_n(t, mult));
    }
    knots.extend(core::iter::repeat_n(b, degree + 1));
    Ok(SplineSpace {
        degree,
        level,
        continuity,
        a,
        b,
        knots,
    })
}

impl SplineSpace {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn continuity(&self) -> i32 {
        self.continuity
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn tag(&self) -> SpaceTag {
        SpaceTag {
            degree: self.degree,
            level: self.level,
            continuity: self.continuity,
        }
    }

    pub fn n_elements(&self) -> usize {
        1usize << self.level
    }

    pub fn mesh_size(&self) -> f64 {
        (self.b - self.a) / self.n_elements() as f64
    }

    fn multiplicity(&self) -> usize {
        (self.degree as i32 - self.continuity) as usize
    }

    /// `(p + 1) + (2^level - 1)(p - k)`.
    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        let s = self.span_of(e);
        (self.knots[s], self.knots[s + 1])
    }

    /// Knot span index of element `e`.
    fn span_of(&self, e: usize) -> usize {
        self.degree + e * self.multiplicity()
    }

    /// Element containing `x`; interior knots belong to the element on their
    /// right, the right endpoint to the last element.
    pub fn element_of(&self, x: f64) -> Result<usize> {
        if !(x >= self.a && x <= self.b) {
            return Err(domain_err(format!(
                "point {x} outside [{}, {}]",
                self.a, self.b
            )));
        }
        let n = self.n_elements();
        let mut e = libm::floor((x - self.a) / self.mesh_size()) as usize;
        if e >= n {
            e = n - 1;
        }
        // guard against rounding of (x - a)/h next to a knot
        while e + 1 < n && x >= self.element_bounds(e + 1).0 {
            e += 1;
        }
        while e > 0 && x < self.element_bounds(e).0 {
            e -= 1;
        }
        Ok(e)
    }

    /// Derivatives of orders `0..=nd` of the `p + 1` basis functions that are
    /// nonzero on element `e`, evaluated at `x` (taken as a point of the
    /// closed element). Returns the global index of the first function and
    /// `ders[d][j]`.
    pub fn local_derivatives(&self, e: usize, x: f64, nd: usize) -> (usize, Vec<Vec<f64>>) {
        let p = self.degree;
        let i = self.span_of(e);
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[i + 1 - j];
            right[j] = u[i + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let n = nd.min(p);
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1: usize = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2: usize = if r as isize - 1 <= pk as isize {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                core::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=n {
            for j in 0..=p {
                ders[k][j] *= factor;
            }
            factor *= (p - k) as f64;
        }
        (i - p, ders)
    }

    /// Values of the `d`-th derivative of every basis function at `x`.
    pub fn eval_basis(&self, x: f64, d: usize) -> Result<Vec<f64>> {
        if d > self.degree {
            return Err(domain_err(format!(
                "derivative order {d} exceeds degree {}",
                self.degree
            )));
        }
        let e = self.element_of(x)?;
        let (first, ders) = self.local_derivatives(e, x, d);
        let mut out = vec![0.0; self.dim()];
        for (j, v) in ders[d].iter().enumerate() {
            out[first + j] = *v;
        }
        Ok(out)
    }

    /// Row of `d`-th derivative values at an endpoint (interior-sided limit).
    pub fn endpoint_row(&self, end: Endpoint, d: usize) -> Result<Vec<f64>> {
        match end {
            Endpoint::Left => self.eval_basis(self.a, d),
            Endpoint::Right => self.eval_basis(self.b, d),
        }
    }

    /// Basis indices of the subspace vanishing at both endpoints.
    pub fn h10_restriction(&self) -> Result<Vec<usize>> {
        if self.continuity < 0 {
            return Err(domain_err(
                "discontinuous splines have no trace; H1_0 restriction undefined",
            ));
        }
        Ok((1..self.dim() - 1).collect())
    }

    /// Coefficients of the L² projection of `f` onto this space.
    pub fn l2_projection(&self, f: &dyn Fn(f64) -> f64) -> Result<Vec<f64>> {
        let mass = univariate_matrix(self, self, 0, 0)?;
        let rule = QuadratureRule::on_space(self, self.degree + 4, None);
        let mut load = vec![0.0; self.dim()];
        for eq in &rule.elements {
            for (x, w) in eq.points.iter().zip(&eq.weights) {
                let (first, ders) = self.local_derivatives(eq.element, *x, 0);
                let fx = f(*x);
                for (j, v) in ders[0].iter().enumerate() {
                    load[first + j] += w * fx * v;
                }
            }
        }
        let gram = mass.to_dense();
        let rhs = Mat::from_column_slice(self.dim(), 1, &load);
        Ok(spd_solve(&gram, &rhs, "univariate mass")?
            .column(0)
            .iter()
            .copied()
            .collect())
    }
}

/// Dense univariate Galerkin matrix `∫ D^{d_row} σ_a · D^{d_col} φ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateMatrix {
    pub row_space: Option<SpaceTag>,
    pub col_space: Option<SpaceTag>,
    pub d_row: usize,
    pub d_col: usize,
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl UnivariateMatrix {
    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(dim_err(format!(
                "{} entries for a {nrows}x{ncols} matrix",
                data.len()
            )));
        }
        Ok(Self {
            row_space: None,
            col_space: None,
            d_row: 0,
            d_col: 0,
            nrows,
            ncols,
            data,
        })
    }

    /// `1 x n` matrix holding a single row.
    pub fn row_vector(row: Vec<f64>) -> Self {
        let n = row.len();
        Self::from_row_major(1, n, row).expect("consistent length")
    }

    /// `n x n` matrix `rowᵀ row`.
    pub fn outer(row: &[f64]) -> Self {
        let n = row.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = row[i] * row[j];
            }
        }
        Self::from_row_major(n, n, data).expect("consistent length")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.ncols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Submatrix on index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            for &c in cols {
                data.push(self.get(r, c));
            }
        }
        Self {
            row_space: self.row_space,
            col_space: self.col_space,
            d_row: self.d_row,
            d_col: self.d_col,
            nrows: rows.len(),
            ncols: cols.len(),
            data,
        }
    }

    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let rows: Vec<usize> = (0..self.nrows).collect();
        self.select(&rows, cols)
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                data[c * self.nrows + r] = self.get(r, c);
            }
        }
        Self {
            row_space: self.col_space,
            col_space: self.row_space,
            d_row: self.d_col,
            d_col: self.d_row,
            nrows: self.ncols,
            ncols: self.nrows,
            data,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Entry-wise sum of same-shaped matrices.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(dim_err("univariate matrix shapes differ"));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    /// Half-bandwidth of the nonzero pattern, `max |r - c|`.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                if self.get(r, c) != 0.0 {
                    bw = bw.max(r.abs_diff(c));
                }
            }
        }
        bw
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    /// Nonzero `(col, value)` pairs of row `r`.
    pub fn row_nonzeros(&self, r: usize) -> Vec<(usize, f64)> {
        (0..self.ncols)
            .map(|c| (c, self.get(r, c)))
            .filter(|(_, v)| *v != 0.0)
            .collect()
    }

    pub fn to_dense(&self) -> Mat {
        Mat::from_row_slice(self.nrows, self.ncols, &self.data)
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_dense(&self.to_dense())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| (0..self.ncols).map(|c| self.get(r, c) * x[c]).sum())
            .collect()
    }
}

fn check_same_mesh(row: &SplineSpace, col: &SplineSpace) -> Result<()> {
    if row.interval() != col.interval() || row.level != col.level {
        return Err(domain_err(format!(
            "spaces on different meshes: ({}, {}) level {} vs ({}, {}) level {}",
            row.a, row.b, row.level, col.a, col.b, col.level
        )));
    }
    Ok(())
}

/// `∫_a^b D^{d_row} σ_a · D^{d_col} φ_i` with `p_max + 1` Gauss points per element.
pub fn univariate_matrix(
    row_space: &SplineSpace,
    col_space: &SplineSpace,
    d_row: usize,
    d_col: usize,
) -> Result<UnivariateMatrix> {
    assemble_univariate(row_space, col_space, d_row, d_col, None)
}

/// Same as [`univariate_matrix`] but integrated over `(c, d) ∩ (a, b)`.
pub fn univariate_matrix_clipped(
    row_space: &SplineSpace,
    col_space: &SplineSpace,
    d_row: usize,
    d_col: usize,
    sub: (f64, f64),
) -> Result<UnivariateMatrix> {
    assemble_univariate(row_space, col_space, d_row, d_col, Some(sub))
}

fn assemble_univariate(
    row_space: &SplineSpace,
    col_space: &SplineSpace,
    d_row: usize,
    d_col: usize,
    clip: Option<(f64, f64)>,
) -> Result<UnivariateMatrix> {
    check_same_mesh(row_space, col_space)?;
    let npts = row_space.degree.max(col_space.degree) + 1;
    let rule = QuadratureRule::on_space(row_space, npts, clip);
    let (nr, nc) = (row_space.dim(), col_space.dim());
    let mut data = vec![0.0; nr * nc];
    for eq in &rule.elements {
        for (x, w) in eq.points.iter().zip(&eq.weights) {
            let (fr, dr) = row_space.local_derivatives(eq.element, *x, d_row);
            let (fc, dc) = col_space.local_derivatives(eq.element, *x, d_col);
            for (a, va) in dr[d_row].iter().enumerate() {
                let row = &mut data[(fr + a) * nc..(fr + a + 1) * nc];
                // w * (va * vi) keeps G(d1, d2) and G(d2, d1)ᵀ bitwise equal
                for (i, vi) in dc[d_col].iter().enumerate() {
                    row[fc + i] += w * (va * vi);
                }
            }
        }
    }
    Ok(UnivariateMatrix {
        row_space: Some(row_space.tag()),
        col_space: Some(col_space.tag()),
        d_row,
        d_col,
        nrows: nr,
        ncols: nc,
        data,
    })
}
