//! Direct SPD solvers: an envelope (skyline) Cholesky factorization behind a
//! reverse Cuthill–McKee ordering for general sparse matrices, and a banded
//! Cholesky for the univariate factors of Kronecker-structured blocks.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::sparse::CsrMatrix;

/// Reverse Cuthill–McKee ordering of the symmetrized pattern of `a`.
///
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c, _) in a.iter() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    // components are started in order of increasing index
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &degree);
        let mut queue = VecDeque::new();
        queue.push_back(start);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    level[start] = 0;
    queue.push_back(start);
    let mut depth = 0;
    let mut members = Vec::new();
    while let Some(v) = queue.pop_front() {
        members.push(v);
        depth = depth.max(level[v]);
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let last: Vec<usize> = members.into_iter().filter(|&v| level[v] == depth).collect();
    (last, depth)
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut current = seed;
    let (mut last, mut depth) = bfs_levels(current, adj);
    loop {
        let candidate = *last
            .iter()
            .min_by_key(|&&v| (degree[v], v))
            .expect("component is non-empty");
        let (next_last, next_depth) = bfs_levels(candidate, adj);
        if next_depth <= depth {
            return current;
        }
        current = candidate;
        last = next_last;
        depth = next_depth;
    }
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ` of a sparse SPD matrix.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First stored column of each row of `L`.
    first: Vec<usize>,
    /// Offset of row `i` in `values`; row `i` stores columns `first[i]..=i`.
    start: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCholesky {
    /// Factors `a` (only the lower triangle of the permuted matrix is read).
    pub fn factor(a: &CsrMatrix, what: &str) -> Result<Self> {
        let perm = rcm_ordering(a);
        Self::factor_with_ordering(a, perm, what)
    }

    /// Factors with an explicit ordering `perm[new] = old`.
    pub fn factor_with_ordering(a: &CsrMatrix, perm: Vec<usize>, what: &str) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(dim_err(format!(
                "{what}: cannot factor {}x{} with ordering of length {}",
                a.nrows(),
                a.ncols(),
                perm.len()
            )));
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (r, c, _) in a.iter() {
            let (i, j) = (inv[r], inv[c]);
            let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
            first[hi] = first[hi].min(lo);
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut values = vec![0.0; total];
        for (r, c, v) in a.iter() {
            let (i, j) = (inv[r], inv[c]);
            if j <= i {
                values[start[i] + (j - first[i])] = v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_i = &values[start[i] + (k0 - fi)..start[i] + (j - fi)];
                let row_j = &values[start[j] + (k0 - fj)..start[j] + (j - fj)];
                let s: f64 = row_i.iter().zip(row_j).map(|(x, y)| x * y).sum();
                let diag_j = values[start[j + 1] - 1];
                let idx = start[i] + (j - fi);
                values[idx] = (values[idx] - s) / diag_j;
            }
            let row_i = &values[start[i]..start[i + 1] - 1];
            let s: f64 = row_i.iter().map(|x| x * x).sum();
            let a_ii = values[start[i + 1] - 1];
            let d = a_ii - s;
            if !(d > PIVOT_TOL * a_ii.abs()) {
                return Err(Error::NotPositiveDefinite {
                    what: String::from(what),
                    pivot: i,
                    value: d,
                });
            }
            values[start[i + 1] - 1] = libm::sqrt(d);
        }
        Ok(Self {
            n,
            perm,
            first,
            start,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries (envelope size).
    pub fn envelope_len(&self) -> usize {
        self.values.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        assert_eq!(b.len(), self.n, "right-hand side length");
        assert_eq!(x.len(), self.n, "solution length");
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        // forward: L y = P b
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1] - 1];
            let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, v)| l * v).sum();
            y[i] = (y[i] - s) / self.values[self.start[i + 1] - 1];
        }
        // backward: Lᵀ z = y, column-oriented over the rows of L
        for i in (0..self.n).rev() {
            y[i] /= self.values[self.start[i + 1] - 1];
            let fi = self.first[i];
            let yi = y[i];
            let row = &self.values[self.start[i]..self.start[i + 1] - 1];
            for (k, l) in row.iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }
}

/// Pivots below this fraction of the original diagonal entry are treated as
/// zero: a semi-definite matrix must not factor through rounding noise.
pub const PIVOT_TOL: f64 = 1e-14;

/// Banded Cholesky factor of a small SPD matrix stored densely.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    /// Row `i` holds `L[i, i-bandwidth..=i]` (left-padded with zeros).
    rows: Vec<f64>,
}

impl BandedCholesky {
    /// Factors a dense row-major SPD matrix of order `n`.
    pub fn factor(n: usize, dense: &[f64], what: &str) -> Result<Self> {
        if dense.len() != n * n {
            return Err(dim_err(format!("{what}: expected {n}x{n} entries")));
        }
        let mut bandwidth = 0;
        for i in 0..n {
            for j in 0..i {
                if dense[i * n + j] != 0.0 || dense[j * n + i] != 0.0 {
                    bandwidth = bandwidth.max(i - j);
                }
            }
        }
        let w = bandwidth + 1;
        let mut rows = vec![0.0; n * w];
        for i in 0..n {
            for j in i.saturating_sub(bandwidth)..=i {
                rows[i * w + (j + bandwidth - i)] = dense[i * n + j];
            }
        }
        for i in 0..n {
            let lo = i.saturating_sub(bandwidth);
            for j in lo..=i {
                let mut s = rows[i * w + (j + bandwidth - i)];
                for k in lo.max(j.saturating_sub(bandwidth))..j {
                    s -= rows[i * w + (k + bandwidth - i)] * rows[j * w + (k + bandwidth - j)];
                }
                if j == i {
                    if !(s > PIVOT_TOL * dense[i * n + i].abs()) {
                        return Err(Error::NotPositiveDefinite {
                            what: String::from(what),
                            pivot: i,
                            value: s,
                        });
                    }
                    rows[i * w + bandwidth] = libm::sqrt(s);
                } else {
                    rows[i * w + (j + bandwidth - i)] = s / rows[j * w + bandwidth];
                }
            }
        }
        Ok(Self { n, bandwidth, rows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.rows[i * (self.bandwidth + 1) + (j + self.bandwidth - i)]
    }

    /// In-place `x ← L⁻¹ x` on a strided fiber.
    pub fn forward_strided(&self, x: &mut [f64], offset: usize, stride: usize) {
        for i in 0..self.n {
            let mut s = x[offset + i * stride];
            for k in i.saturating_sub(self.bandwidth)..i {
                s -= self.l(i, k) * x[offset + k * stride];
            }
            x[offset + i * stride] = s / self.l(i, i);
        }
    }

    /// In-place `x ← L⁻ᵀ x` on a strided fiber.
    pub fn backward_strided(&self, x: &mut [f64], offset: usize, stride: usize) {
        for i in (0..self.n).rev() {
            let xi = x[offset + i * stride] / self.l(i, i);
            x[offset + i * stride] = xi;
            for k in i.saturating_sub(self.bandwidth)..i {
                x[offset + k * stride] -= self.l(i, k) * xi;
            }
        }
    }

    /// In-place `x ← L x` on a strided fiber.
    pub fn lower_mul_strided(&self, x: &mut [f64], offset: usize, stride: usize) {
        for i in (0..self.n).rev() {
            let mut s = 0.0;
            for k in i.saturating_sub(self.bandwidth)..=i {
                s += self.l(i, k) * x[offset + k * stride];
            }
            x[offset + i * stride] = s;
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        self.forward_strided(x, 0, 1);
        self.backward_strided(x, 0, 1);
    }
}
