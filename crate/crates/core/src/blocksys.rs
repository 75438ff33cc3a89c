//! Dense block-tridiagonal saddle-point operators.
//!
//! `𝒜` has diagonal blocks `(-1)^{i-1} A_i` and off-diagonal blocks `B_i`
//! (below) and `B_iᵀ` (above). `𝒟 = blkdiag(A_i)` and `ℬ` is the
//! off-diagonal part of `𝒜`. Only small instances are supported: this is a
//! laboratory for the abstract theory, not a solver.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dense::{
    asymmetry, block_diag, cholesky_lower, congruence_inverse, max_abs, max_principal_angle_sine,
    null_space, spd_solve, sym_eigenvalues, Mat, Vector,
};
use crate::error::{dim_err, domain_err, Error, Result};

/// Largest total dimension accepted by [`BlockTridiagonalSystem::new`].
pub const DENSE_CAP: usize = 64;

/// `𝒜` stored as its `n` diagonal blocks and `n - 1` sub-diagonal blocks.
/// The alternating sign is applied on assembly only.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonalSystem {
    diag: Vec<Mat>,
    off: Vec<Mat>,
    block_dims: Vec<usize>,
}

impl BlockTridiagonalSystem {
    /// Validates shapes, symmetry and semi-definiteness of the diagonal blocks.
    pub fn new(diag: Vec<Mat>, off: Vec<Mat>) -> Result<Self> {
        let n = diag.len();
        if n < 2 {
            return Err(dim_err(format!("need at least 2 blocks, got {n}")));
        }
        if off.len() != n - 1 {
            return Err(dim_err(format!(
                "{n} diagonal blocks need {} off-diagonal blocks, got {}",
                n - 1,
                off.len()
            )));
        }
        let mut block_dims = Vec::with_capacity(n);
        for (i, a) in diag.iter().enumerate() {
            if a.nrows() != a.ncols() || a.nrows() == 0 {
                return Err(dim_err(format!(
                    "A_{} is {}x{}",
                    i + 1,
                    a.nrows(),
                    a.ncols()
                )));
            }
            if asymmetry(a) > 1e-12 {
                return Err(Error::NotSymmetric(asymmetry(a)));
            }
            let lo = sym_eigenvalues(a)[0];
            if lo < -1e-10 * max_abs(a).max(f64::MIN_POSITIVE) {
                return Err(domain_err(format!(
                    "A_{} has eigenvalue {lo:e} below the semi-definite threshold",
                    i + 1
                )));
            }
            block_dims.push(a.nrows());
        }
        for (i, b) in off.iter().enumerate() {
            if b.nrows() != block_dims[i + 1] || b.ncols() != block_dims[i] {
                return Err(dim_err(format!(
                    "B_{} is {}x{}, expected {}x{}",
                    i + 1,
                    b.nrows(),
                    b.ncols(),
                    block_dims[i + 1],
                    block_dims[i]
                )));
            }
        }
        let total: usize = block_dims.iter().sum();
        if total > DENSE_CAP {
            return Err(Error::CapExceeded {
                dim: total,
                cap: DENSE_CAP,
            });
        }
        Ok(Self {
            diag,
            off,
            block_dims,
        })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[Mat] {
        &self.diag
    }

    pub fn off(&self) -> &[Mat] {
        &self.off
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn total_dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    /// Start index of every block plus the total dimension.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.n() + 1);
        let mut acc = 0;
        out.push(0);
        for d in &self.block_dims {
            acc += d;
            out.push(acc);
        }
        out
    }
}

/// A vector split into segments that conform to the block dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    pub segments: Vec<Vector>,
}

impl BlockVector {
    pub fn new(segments: Vec<Vector>) -> Self {
        Self { segments }
    }

    /// Splits a flat vector according to `dims`.
    pub fn split(flat: &Vector, dims: &[usize]) -> Result<Self> {
        let total: usize = dims.iter().sum();
        if flat.len() != total {
            return Err(dim_err(format!(
                "vector of length {} for blocks summing to {total}",
                flat.len()
            )));
        }
        let mut segments = Vec::with_capacity(dims.len());
        let mut start = 0;
        for d in dims {
            segments.push(flat.rows(start, *d).into_owned());
            start += d;
        }
        Ok(Self { segments })
    }

    pub fn flatten(&self) -> Vector {
        let total: usize = self.segments.iter().map(|s| s.len()).sum();
        let mut out = Vector::zeros(total);
        let mut start = 0;
        for s in &self.segments {
            out.rows_mut(start, s.len()).copy_from(s);
            start += s.len();
        }
        out
    }

    pub fn conforms_to(&self, dims: &[usize]) -> bool {
        self.segments.len() == dims.len()
            && self.segments.iter().zip(dims).all(|(s, d)| s.len() == *d)
    }
}

/// Symmetric positive definite block `P_i` of the inner product on `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductMatrix(Mat);

impl InnerProductMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(dim_err(format!(
                "inner product is {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if asymmetry(&m) > 1e-12 {
            return Err(Error::NotSymmetric(asymmetry(&m)));
        }
        match sym_eigenvalues(&m).first() {
            Some(lo) if *lo > 0.0 => Ok(Self(m)),
            Some(lo) => Err(domain_err(format!(
                "inner product block is singular or indefinite (eigenvalue {lo:e})"
            ))),
            None => Err(dim_err("empty inner product block")),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self(Mat::identity(n, n))
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }
}

/// The full symmetric matrix of `𝒜`.
pub fn assemble_full(sys: &BlockTridiagonalSystem) -> Mat {
    let (d, b) = split_d_b(sys);
    signed(sys, &d) + b
}

/// `(𝒟, ℬ)`: the unsigned block diagonal and the off-diagonal part.
pub fn split_d_b(sys: &BlockTridiagonalSystem) -> (Mat, Mat) {
    let blocks: Vec<&Mat> = sys.diag.iter().collect();
    let d = block_diag(&blocks);
    let off = sys.offsets();
    let total = sys.total_dim();
    let mut b = Mat::zeros(total, total);
    for (i, bi) in sys.off.iter().enumerate() {
        let (r, c) = (off[i + 1], off[i]);
        b.view_mut((r, c), bi.shape()).copy_from(bi);
        b.view_mut((c, r), (bi.ncols(), bi.nrows()))
            .copy_from(&bi.transpose());
    }
    (d, b)
}

/// `𝒟̃`: block diagonal with signs `(-1)^{i-1}`.
pub fn signed_d(sys: &BlockTridiagonalSystem) -> Mat {
    let (d, _) = split_d_b(sys);
    signed(sys, &d)
}

fn signed(sys: &BlockTridiagonalSystem, d: &Mat) -> Mat {
    let mut out = d.clone();
    let off = sys.offsets();
    for i in (1..sys.n()).step_by(2) {
        let k = sys.block_dims[i];
        let mut v = out.view_mut((off[i], off[i]), (k, k));
        v *= -1.0;
    }
    out
}

/// Flips the sign of every even-numbered segment (1-based).
pub fn tilde(x: &BlockVector) -> BlockVector {
    BlockVector {
        segments: x
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| if i % 2 == 1 { -s } else { s.clone() })
            .collect(),
    }
}

/// Outcome of comparing `ker 𝒜` with `ker 𝒟 ∩ ker ℬ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelVerdict {
    Equal,
    Different,
    /// A singular value fell inside the guard band around the rank threshold.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCheck {
    pub verdict: KernelVerdict,
    /// Sine of the largest principal angle (1 when the dimensions differ).
    pub max_angle_sine: f64,
    pub dim_ker_a: usize,
    pub dim_ker_db: usize,
}

/// Principal-angle tolerance for declaring the two kernels equal.
pub const KERNEL_ANGLE_TOL: f64 = 1e-8;

/// Compares `ker 𝒜` and `ker 𝒟 ∩ ker ℬ` with rank threshold `tol · σ_max`.
pub fn kernel_equality_check(sys: &BlockTridiagonalSystem, tol: f64) -> KernelCheck {
    let a = assemble_full(sys);
    let (d, b) = split_d_b(sys);
    let n = sys.total_dim();
    let mut stacked = Mat::zeros(2 * n, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(&d);
    stacked.view_mut((n, 0), (n, n)).copy_from(&b);
    let ka = null_space(&a, tol);
    let kdb = null_space(&stacked, tol);
    let sine = max_principal_angle_sine(&ka.basis, &kdb.basis);
    let verdict = if ka.indeterminate || kdb.indeterminate {
        KernelVerdict::Indeterminate
    } else if ka.basis.ncols() == kdb.basis.ncols() && sine <= KERNEL_ANGLE_TOL {
        KernelVerdict::Equal
    } else {
        KernelVerdict::Different
    };
    KernelCheck {
        verdict,
        max_angle_sine: sine,
        dim_ker_a: ka.basis.ncols(),
        dim_ker_db: kdb.basis.ncols(),
    }
}

fn check_pair(lo: f64, hi: f64, what: &str) -> Result<()> {
    if !(lo > 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
        return Err(domain_err(format!(
            "{what} constants must be positive: ({lo}, {hi})"
        )));
    }
    if lo > hi {
        return Err(domain_err(format!(
            "{what} lower constant {lo} exceeds upper {hi}"
        )));
    }
    Ok(())
}

/// `(γ_lo, γ_hi) = (c_lo² / (c_hi + 1), c_hi + 4 c_hi²)`.
pub fn gamma_from_c(c_lo: f64, c_hi: f64) -> Result<(f64, f64)> {
    check_pair(c_lo, c_hi, "well-posedness")?;
    Ok((c_lo * c_lo / (c_hi + 1.0), c_hi + 4.0 * c_hi * c_hi))
}

/// `(c_lo, c_hi) = (0.29 min(γ_lo², γ_lo / 2) / γ_hi, sqrt(γ_hi (γ_hi + 1)))`.
pub fn c_from_gamma(g_lo: f64, g_hi: f64) -> Result<(f64, f64)> {
    check_pair(g_lo, g_hi, "spectral")?;
    let c_lo = 0.29 * (g_lo * g_lo).min(g_lo / 2.0) / g_hi;
    Ok((c_lo, libm::sqrt(g_hi * (g_hi + 1.0))))
}

fn inner_product_factor(sys: &BlockTridiagonalSystem, p: &[InnerProductMatrix]) -> Result<Mat> {
    if p.len() != sys.n() {
        return Err(dim_err(format!(
            "{} inner product blocks for {} system blocks",
            p.len(),
            sys.n()
        )));
    }
    for (i, (pi, d)) in p.iter().zip(&sys.block_dims).enumerate() {
        if pi.0.nrows() != *d {
            return Err(dim_err(format!(
                "P_{} is {}x{}, block has dimension {d}",
                i + 1,
                pi.0.nrows(),
                pi.0.ncols()
            )));
        }
    }
    let blocks: Vec<&Mat> = p.iter().map(|m| &m.0).collect();
    cholesky_lower(&block_diag(&blocks), "inner product")
}

/// Best constants in `c_lo ‖x‖ ≤ ‖𝒜x‖_* ≤ c_hi ‖x‖`: the extreme absolute
/// eigenvalues of `L⁻¹ 𝒜 L⁻ᵀ` with `𝒫 = L Lᵀ`.
pub fn measure_c(sys: &BlockTridiagonalSystem, p: &[InnerProductMatrix]) -> Result<(f64, f64)> {
    let l = inner_product_factor(sys, p)?;
    let vals = sym_eigenvalues(&congruence_inverse(&assemble_full(sys), &l));
    let lo = vals.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let hi = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok((lo, hi))
}

/// `𝒟 + ℬ 𝒫⁻¹ ℬ`, the operator that `𝒫` must be spectrally equivalent to.
pub fn gamma_operator(sys: &BlockTridiagonalSystem, p: &[InnerProductMatrix]) -> Result<Mat> {
    let blocks: Vec<&Mat> = p.iter().map(|m| &m.0).collect();
    let pm = block_diag(&blocks);
    if pm.nrows() != sys.total_dim() {
        return Err(dim_err("inner product does not match the system"));
    }
    let (d, b) = split_d_b(sys);
    let pinv_b = spd_solve(&pm, &b, "inner product")?;
    Ok(d + &b * pinv_b)
}

/// Extreme generalized eigenvalues of `(𝒟 + ℬ 𝒫⁻¹ ℬ, 𝒫)`.
pub fn measure_gamma(sys: &BlockTridiagonalSystem, p: &[InnerProductMatrix]) -> Result<(f64, f64)> {
    let l = inner_product_factor(sys, p)?;
    let vals = sym_eigenvalues(&congruence_inverse(&gamma_operator(sys, p)?, &l));
    Ok((vals[0], vals[vals.len() - 1]))
}

/// `φ(x, y) = max(|y - x|, x²)`.
pub fn phi(x: f64, y: f64) -> f64 {
    (y - x).abs().max(x * x)
}

/// Minimum of `φ` on the quarter circle and the abscissa where it is attained.
pub fn phi_min_point() -> (f64, f64) {
    // on the arc |y - x| decreases and x² increases until they meet
    let f = |x: f64| libm::sqrt(1.0 - x * x) - x - x * x;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    (x * x, x)
}

/// Minimum of `φ` over `x, y ≥ 0`, `x² + y² = 1`.
pub fn phi_min() -> f64 {
    phi_min_point().0
}

/// Options for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceOptions {
    pub n: usize,
    pub max_block_dim: usize,
    /// Probability of zeroing each column of the Gram factor of `A_i`.
    pub drop_probability: f64,
    /// Probability of replacing `B_i` by a rank-one or zero matrix.
    pub degenerate_b_probability: f64,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            n: 3,
            max_block_dim: 4,
            drop_probability: 0.0,
            degenerate_b_probability: 0.0,
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random instance with `A_i = GᵀG` (columns of `G` optionally zeroed) and
/// Gaussian `B_i`.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    opts: &InstanceOptions,
) -> Result<BlockTridiagonalSystem> {
    if opts.max_block_dim == 0 {
        return Err(domain_err("block dimension bound must be positive"));
    }
    let dims: Vec<usize> = (0..opts.n)
        .map(|_| rng.random_range(1..=opts.max_block_dim))
        .collect();
    let diag = dims
        .iter()
        .map(|&d| {
            let mut g = gaussian(rng, d, d);
            for c in 0..d {
                if rng.random::<f64>() < opts.drop_probability {
                    g.column_mut(c).fill(0.0);
                }
            }
            g.transpose() * g
        })
        .collect();
    let off = (0..opts.n.saturating_sub(1))
        .map(|i| {
            let (r, c) = (dims[i + 1], dims[i]);
            if rng.random::<f64>() < opts.degenerate_b_probability {
                if rng.random::<bool>() {
                    Mat::zeros(r, c)
                } else {
                    gaussian(rng, r, 1) * gaussian(rng, 1, c)
                }
            } else {
                gaussian(rng, r, c)
            }
        })
        .collect();
    BlockTridiagonalSystem::new(diag, off)
}

/// Random SPD inner-product blocks `GᵀG + I/2` for the given dimensions.
pub fn random_inner_product<R: Rng + ?Sized>(
    rng: &mut R,
    dims: &[usize],
) -> Vec<InnerProductMatrix> {
    dims.iter()
        .map(|&d| {
            let g = gaussian(rng, d, d);
            InnerProductMatrix(g.transpose() * g + Mat::identity(d, d) * 0.5)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m1(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn two_by_two_sign_pattern() {
        let sys = BlockTridiagonalSystem::new(vec![m1(1.0), m1(1.0)], vec![m1(0.0)]).unwrap();
        assert_eq!(
            assemble_full(&sys),
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
        );
        let (d, b) = split_d_b(&sys);
        assert_eq!(d, Mat::identity(2, 2));
        assert_eq!(b, Mat::zeros(2, 2));
    }

    #[test]
    fn scalar_three_block_layout() {
        let (a, b) = ([2.0, 3.0, 5.0], [7.0, 11.0]);
        let sys = BlockTridiagonalSystem::new(
            a.iter().map(|v| m1(*v)).collect(),
            b.iter().map(|v| m1(*v)).collect(),
        )
        .unwrap();
        let expected =
            Mat::from_row_slice(3, 3, &[a[0], b[0], 0.0, b[0], -a[1], b[1], 0.0, b[1], a[2]]);
        assert_eq!(assemble_full(&sys), expected);
        let (d, bb) = split_d_b(&sys);
        assert_eq!(d, Mat::from_diagonal(&Vector::from_vec(a.to_vec())));
        assert_eq!(
            bb,
            Mat::from_row_slice(3, 3, &[0.0, b[0], 0.0, b[0], 0.0, b[1], 0.0, b[1], 0.0])
        );
    }

    #[test]
    fn structural_errors() {
        assert!(BlockTridiagonalSystem::new(vec![m1(1.0)], vec![]).is_err());
        assert!(BlockTridiagonalSystem::new(vec![m1(1.0), m1(1.0)], vec![]).is_err());
        let bad = Mat::zeros(2, 1);
        assert!(BlockTridiagonalSystem::new(vec![m1(1.0), m1(1.0)], vec![bad]).is_err());
        assert!(BlockTridiagonalSystem::new(vec![m1(-1.0), m1(1.0)], vec![m1(0.0)]).is_err());
        let asym = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            BlockTridiagonalSystem::new(vec![asym, m1(1.0)], vec![Mat::zeros(1, 2)]),
            Err(Error::NotSymmetric(_))
        ));
        let big = Mat::identity(33, 33);
        assert!(matches!(
            BlockTridiagonalSystem::new(vec![big.clone(), big], vec![Mat::zeros(33, 33)]),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn tilde_flips_even_segments() {
        let x = BlockVector::new(vec![
            Vector::from_vec(vec![1.0]),
            Vector::from_vec(vec![2.0]),
            Vector::from_vec(vec![3.0]),
        ]);
        let t = tilde(&x);
        assert_eq!(t.flatten().as_slice(), &[1.0, -2.0, 3.0]);
        assert_eq!(tilde(&t), x);
        let single = BlockVector::new(vec![Vector::from_vec(vec![4.0, 5.0])]);
        assert_eq!(tilde(&single), single);
    }

    #[test]
    fn singular_two_block_kernel() {
        let a1 = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let sys = BlockTridiagonalSystem::new(
            vec![a1, m1(0.0)],
            vec![Mat::from_row_slice(1, 2, &[1.0, 0.0])],
        )
        .unwrap();
        let check = kernel_equality_check(&sys, 1e-10);
        assert_eq!(check.verdict, KernelVerdict::Equal);
        assert_eq!(check.dim_ker_a, 1);
        let zero =
            BlockTridiagonalSystem::new(vec![Mat::zeros(2, 2), m1(0.0)], vec![Mat::zeros(1, 2)])
                .unwrap();
        let check = kernel_equality_check(&zero, 1e-10);
        assert_eq!((check.verdict, check.dim_ker_a), (KernelVerdict::Equal, 3));
    }

    #[test]
    fn constant_maps() {
        assert_eq!(gamma_from_c(1.0, 1.0).unwrap(), (0.5, 5.0));
        let (lo, hi) = gamma_from_c(0.5, 2.0).unwrap();
        assert!((lo - 0.25 / 3.0).abs() < 1e-15 && hi == 18.0);
        let (lo, hi) = c_from_gamma(1.0, 1.0).unwrap();
        assert!((lo - 0.145).abs() < 1e-15 && (hi - libm::sqrt(2.0)).abs() < 1e-15);
        let (lo, hi) = c_from_gamma(0.5, 5.0).unwrap();
        assert!((lo - 0.0145).abs() < 1e-15 && (hi - libm::sqrt(30.0)).abs() < 1e-14);
        assert!(gamma_from_c(0.0, 1.0).is_err());
        assert!(c_from_gamma(-1.0, 1.0).is_err());
        assert!(gamma_from_c(2.0, 1.0).is_err());
    }

    #[test]
    fn measured_constants_of_simple_operators() {
        let id = BlockTridiagonalSystem::new(vec![m1(1.0), m1(1.0)], vec![m1(0.0)]).unwrap();
        let p = vec![
            InnerProductMatrix::identity(1),
            InnerProductMatrix::identity(1),
        ];
        assert_eq!(measure_c(&id, &p).unwrap(), (1.0, 1.0));
        assert_eq!(measure_gamma(&id, &p).unwrap(), (1.0, 1.0));
        let two = BlockTridiagonalSystem::new(vec![m1(2.0), m1(2.0)], vec![m1(0.0)]).unwrap();
        assert_eq!(measure_c(&two, &p).unwrap(), (2.0, 2.0));
        let coupled = BlockTridiagonalSystem::new(vec![m1(0.0), m1(0.0)], vec![m1(1.0)]).unwrap();
        let (lo, hi) = measure_gamma(&coupled, &p).unwrap();
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_inner_product_is_rejected() {
        assert!(InnerProductMatrix::new(Mat::zeros(1, 1)).is_err());
    }

    #[test]
    fn phi_minimum() {
        assert_eq!(phi(1.0, 0.0), 1.0);
        assert_eq!(phi(0.0, 1.0), 1.0);
        let (m, x) = phi_min_point();
        assert!((m - x * x).abs() < 1e-15);
        // frozen from an independent Brent root-find of √(1 - x²) - x - x²
        assert!((x - 0.543_689_012_692_076_4).abs() < 1e-12);
        assert!((m - 0.295_597_742_522_084_8).abs() < 1e-12);
        assert!(m >= 0.29);
        // brute-force scan of the arc
        let scan = (0..=100_000)
            .map(|k| {
                let t = core::f64::consts::FRAC_PI_2 * k as f64 / 100_000.0;
                phi(libm::cos(t), libm::sin(t))
            })
            .fold(f64::INFINITY, f64::min);
        // grid step is 1.6e-5 and |dφ/dt| ≤ 2 at the kink
        assert!(scan >= m - 1e-12 && scan - m < 4e-5);
    }

    #[test]
    fn random_instances_respect_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=4 {
            let opts = InstanceOptions {
                n,
                drop_probability: 0.3,
                ..Default::default()
            };
            let sys = random_instance(&mut rng, &opts).unwrap();
            assert_eq!(sys.n(), n);
            let a = assemble_full(&sys);
            assert!(asymmetry(&a) == 0.0);
        }
    }
}
