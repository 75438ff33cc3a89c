//! Numeric witnesses for Schur-complement identities and for the block
//! conditions equivalent to `𝒫 ∼ 𝒟 + ℬ𝒫⁻¹ℬ`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::blocksys::{measure_gamma, BlockTridiagonalSystem, InnerProductMatrix};
use crate::dense::{
    asymmetry, block_diag, gen_eig_bounds, spd_solve, sym_eigenvalues, Mat, Vector,
};
use crate::error::{dim_err, domain_err, Error, Result};

/// Relative threshold for semi-definiteness decisions.
pub const PSD_TOL: f64 = 1e-10;

fn spectral_norm(m: &Mat) -> f64 {
    sym_eigenvalues(m)
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()))
}

fn require_spd(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(dim_err(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    if asymmetry(m) > 1e-12 {
        return Err(Error::NotSymmetric(asymmetry(m)));
    }
    let vals = sym_eigenvalues(m);
    let norm = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if vals.is_empty() || vals[0] <= 1e-12 * norm {
        return Err(domain_err(format!("{what} is singular or indefinite")));
    }
    Ok(())
}

/// `A` (SPD on V), `B: V → Q'` stored as `dim Q x dim V`, `C` (SPD on Q).
#[derive(Debug, Clone, PartialEq)]
pub struct SchurInstance {
    a: Mat,
    b: Mat,
    c: Mat,
}

impl SchurInstance {
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        require_spd(&a, "A")?;
        require_spd(&c, "C")?;
        if b.nrows() != c.nrows() || b.ncols() != a.nrows() {
            return Err(dim_err(format!(
                "B is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                a.nrows()
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }
}

/// `(qᵀ B A⁻¹ Bᵀ q, (qᵀ B v*)² / (v*ᵀ A v*))` with the maximizer `v* = A⁻¹ Bᵀ q`.
/// The quotient is taken as 0 when `v* = 0`.
pub fn schur_sup_identity(inst: &SchurInstance, q: &Vector) -> Result<(f64, f64)> {
    if q.len() != inst.c.nrows() {
        return Err(dim_err(format!(
            "q has length {}, expected {}",
            q.len(),
            inst.c.nrows()
        )));
    }
    let btq = inst.b.transpose() * q;
    let v = spd_solve(
        &inst.a,
        &Mat::from_column_slice(btq.len(), 1, btq.as_slice()),
        "A",
    )?;
    let v = v.column(0).into_owned();
    let lhs = btq.dot(&v);
    let energy = v.dot(&(&inst.a * &v));
    let rhs = if energy > 0.0 {
        let num = q.dot(&(&inst.b * &v));
        num * num / energy
    } else {
        0.0
    };
    Ok((lhs, rhs))
}

/// `(B A⁻¹ Bᵀ ≼ C, Bᵀ C⁻¹ B ≼ A)`, each decided by the smallest eigenvalue of
/// the difference against `-PSD_TOL` times the larger operator norm.
pub fn domination_equivalence(inst: &SchurInstance) -> Result<(bool, bool)> {
    let s_q = &inst.b * spd_solve(&inst.a, &inst.b.transpose(), "A")?;
    let s_v = inst.b.transpose() * spd_solve(&inst.c, &inst.b, "C")?;
    let decide = |big: &Mat, small: &Mat| {
        let norm = spectral_norm(big).max(spectral_norm(small));
        sym_eigenvalues(&(big - small))[0] >= -PSD_TOL * norm
    };
    Ok((decide(&inst.c, &s_q), decide(&inst.a, &s_v)))
}

/// Symmetric 2x2 block matrix `ℳ` and a block-diagonal reference `𝒟`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block2x2Instance {
    pub m11: Mat,
    pub m12: Mat,
    pub m22: Mat,
    pub d11: Mat,
    pub d22: Mat,
}

impl Block2x2Instance {
    /// Takes `M21 = M12ᵀ`.
    pub fn new(m11: Mat, m12: Mat, m22: Mat, d11: Mat, d22: Mat) -> Result<Self> {
        if m12.nrows() != m11.nrows() || m12.ncols() != m22.nrows() {
            return Err(dim_err("M12 does not conform to M11 and M22"));
        }
        if d11.shape() != m11.shape() || d22.shape() != m22.shape() {
            return Err(dim_err("reference blocks do not conform"));
        }
        require_spd(&d11, "D11")?;
        require_spd(&d22, "D22")?;
        let inst = Self {
            m11,
            m12,
            m22,
            d11,
            d22,
        };
        require_spd(&inst.m22, "M22")?;
        require_spd(&inst.assembled(), "assembled block matrix")?;
        Ok(inst)
    }

    pub fn assembled(&self) -> Mat {
        let (k, l) = (self.m11.nrows(), self.m22.nrows());
        let mut m = Mat::zeros(k + l, k + l);
        m.view_mut((0, 0), (k, k)).copy_from(&self.m11);
        m.view_mut((0, k), (k, l)).copy_from(&self.m12);
        m.view_mut((k, 0), (l, k)).copy_from(&self.m12.transpose());
        m.view_mut((k, k), (l, l)).copy_from(&self.m22);
        m
    }

    pub fn reference(&self) -> Mat {
        block_diag(&[&self.d11, &self.d22])
    }

    /// `M11 - M12 M22⁻¹ M21`.
    pub fn schur_complement(&self) -> Result<Mat> {
        Ok(&self.m11 - &self.m12 * spd_solve(&self.m22, &self.m12.transpose(), "M22")?)
    }
}

/// Constants of the three block conditions and of the direct comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Block2x2Report {
    /// Bounds of `(M11, D11)`.
    pub cond1: (f64, f64),
    /// Bounds of `(M22, D22)`.
    pub cond2: (f64, f64),
    /// Bounds of `(M11 - M12 M22⁻¹ M21, M11)`; the lower one is `1 - ρ²`.
    pub schur: (f64, f64),
    /// Largest canonical correlation between the two blocks.
    pub rho: f64,
    /// Smallest `c` with `M11 ≼ c (M11 - M12 M22⁻¹ M21)`, i.e. `1 / (1 - ρ²)`.
    pub cond3_constant: f64,
    /// Bounds of `(ℳ, 𝒟)`.
    pub direct: (f64, f64),
}

impl Block2x2Report {
    /// Flags for the three conditions with the given tolerance on positivity.
    pub fn conditions_hold(&self) -> [bool; 3] {
        [
            self.cond1.0 > 0.0,
            self.cond2.0 > 0.0,
            self.schur.0 > 0.0 && self.cond3_constant.is_finite(),
        ]
    }

    /// Checks that the direct bounds are consistent with the block constants:
    /// the diagonal blocks interlace, and `ℳ` lies within `1 ± ρ` of its own
    /// block diagonal.
    pub fn consistent(&self, rel: f64) -> bool {
        let (lo, hi) = self.direct;
        let a_min = self.cond1.0.min(self.cond2.0);
        let b_max = self.cond1.1.max(self.cond2.1);
        let slack = |v: f64| rel * v.abs().max(1.0);
        self.cond1.0 >= lo - slack(lo)
            && self.cond2.0 >= lo - slack(lo)
            && self.cond1.1 <= hi + slack(hi)
            && self.cond2.1 <= hi + slack(hi)
            && lo >= (1.0 - self.rho) * a_min - slack(lo)
            && hi <= (1.0 + self.rho) * b_max + slack(hi)
            && 1.0 - self.rho >= lo / b_max - slack(lo)
    }
}

/// Evaluates the three block conditions and the direct bounds of `(ℳ, 𝒟)`.
pub fn block2x2_equivalence_check(inst: &Block2x2Instance) -> Result<Block2x2Report> {
    let cond1 = gen_eig_bounds(&inst.m11, &inst.d11)?;
    let cond2 = gen_eig_bounds(&inst.m22, &inst.d22)?;
    let schur = gen_eig_bounds(&inst.schur_complement()?, &inst.m11)?;
    let rho = libm::sqrt((1.0 - schur.0).clamp(0.0, 1.0));
    let direct = gen_eig_bounds(&inst.assembled(), &inst.reference())?;
    Ok(Block2x2Report {
        cond1,
        cond2,
        schur,
        rho,
        cond3_constant: 1.0 / schur.0,
        direct,
    })
}

/// Generalized eigenvalue bounds of one block condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBound {
    /// 1-based block indices that the condition couples.
    pub blocks: Vec<usize>,
    pub lo: f64,
    pub hi: f64,
}

/// `𝒟 + ℬ𝒫⁻¹ℬ` couples block `i` only with `i ± 2`, so the relation
/// `𝒫 ∼ 𝒟 + ℬ𝒫⁻¹ℬ` splits into one condition on the odd-numbered and one
/// on the even-numbered blocks. For `n = 2` these read
/// `P₁ ∼ A₁ + B₁ᵀP₂⁻¹B₁` and `P₂ ∼ A₂ + B₁P₁⁻¹B₁ᵀ`.
///
/// Each condition is assembled from the blocks directly. The combined bounds
/// `(min lo, max hi)` coincide with [`measure_gamma`].
pub fn check_condition_n(
    sys: &BlockTridiagonalSystem,
    p: &[InnerProductMatrix],
    n: usize,
) -> Result<Vec<ConditionBound>> {
    if n != sys.n() {
        return Err(dim_err(format!(
            "n = {n} but the system has {} blocks",
            sys.n()
        )));
    }
    if p.len() != n {
        return Err(dim_err(format!(
            "{} inner product blocks for {n} system blocks",
            p.len()
        )));
    }
    for (i, (pi, d)) in p.iter().zip(sys.block_dims()).enumerate() {
        if pi.matrix().nrows() != *d {
            return Err(dim_err(format!(
                "P_{} does not match block dimension {d}",
                i + 1
            )));
        }
    }
    let a = sys.diag();
    let b = sys.off();
    // P_k⁻¹ applied to a matrix
    let pinv = |k: usize, m: &Mat| spd_solve(p[k].matrix(), m, "inner product block");

    let mut out = Vec::new();
    for parity in 0..2 {
        let idx: Vec<usize> = (parity..n).step_by(2).collect();
        if idx.is_empty() {
            continue;
        }
        let dims: Vec<usize> = idx.iter().map(|&i| sys.block_dims()[i]).collect();
        let mut offs = Vec::with_capacity(idx.len());
        let mut acc = 0;
        for d in &dims {
            offs.push(acc);
            acc += d;
        }
        let mut lhs = Mat::zeros(acc, acc);
        for (s, &i) in idx.iter().enumerate() {
            let mut diag = a[i].clone();
            if i > 0 {
                diag += &b[i - 1] * pinv(i - 1, &b[i - 1].transpose())?;
            }
            if i + 1 < n {
                diag += b[i].transpose() * pinv(i + 1, &b[i])?;
            }
            lhs.view_mut((offs[s], offs[s]), (dims[s], dims[s]))
                .copy_from(&diag);
            if s + 1 < idx.len() {
                // (i, i + 2) coupling through block i + 1
                let coupling = b[i].transpose() * pinv(i + 1, &b[i + 1].transpose())?;
                lhs.view_mut((offs[s], offs[s + 1]), coupling.shape())
                    .copy_from(&coupling);
                lhs.view_mut((offs[s + 1], offs[s]), (coupling.ncols(), coupling.nrows()))
                    .copy_from(&coupling.transpose());
            }
        }
        let refs: Vec<&Mat> = idx.iter().map(|&i| p[i].matrix()).collect();
        let (lo, hi) = gen_eig_bounds(&lhs, &block_diag(&refs))?;
        out.push(ConditionBound {
            blocks: idx.iter().map(|i| i + 1).collect(),
            lo,
            hi,
        });
    }
    Ok(out)
}

/// `(min lo, max hi)` over the conditions.
pub fn combine_bounds(bounds: &[ConditionBound]) -> (f64, f64) {
    bounds
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| {
            (lo.min(b.lo), hi.max(b.hi))
        })
}

/// Convenience: `measure_gamma` and the combined condition bounds side by side.
pub fn conditions_vs_gamma(
    sys: &BlockTridiagonalSystem,
    p: &[InnerProductMatrix],
) -> Result<((f64, f64), (f64, f64))> {
    let conds = check_condition_n(sys, p, sys.n())?;
    Ok((combine_bounds(&conds), measure_gamma(sys, p)?))
}

fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, shift: f64) -> Mat {
    let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.transpose() * g + Mat::identity(n, n) * shift
}

/// Random [`SchurInstance`] with dimensions in `1..=max_dim`. `B` is scaled
/// by a log-uniform factor in `[0.1, 10]` so both sides of the domination
/// test occur.
pub fn random_schur_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_dim: usize,
) -> Result<SchurInstance> {
    let (nv, nq) = (rng.random_range(1..=max_dim), rng.random_range(1..=max_dim));
    let scale = libm::pow(10.0, rng.random_range(-1.0..1.0));
    let b = Mat::from_fn(nq, nv, |_, _| rng.sample::<f64, _>(StandardNormal)) * scale;
    SchurInstance::new(random_spd(rng, nv, 0.5), b, random_spd(rng, nq, 0.5))
}

/// Random SPD 2x2 block matrix with random SPD diagonal references.
pub fn random_block2x2<R: Rng + ?Sized>(rng: &mut R, max_dim: usize) -> Result<Block2x2Instance> {
    let (n1, n2) = (rng.random_range(1..=max_dim), rng.random_range(1..=max_dim));
    let m = random_spd(rng, n1 + n2, 0.1);
    Block2x2Instance::new(
        m.view((0, 0), (n1, n1)).into_owned(),
        m.view((0, n1), (n1, n2)).into_owned(),
        m.view((n1, n1), (n2, n2)).into_owned(),
        random_spd(rng, n1, 0.5),
        random_spd(rng, n2, 0.5),
    )
}
