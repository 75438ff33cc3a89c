//! Discrete well-posedness constants of the optimality systems.
//!
//! All dense measurements work on the state space `Y_h`, which is small at
//! desk scale; the control space only enters through Kronecker mass solves.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::DiscreteSystem;
use crate::dense::{
    cholesky_lower, gen_eig_bounds, lower_solve, null_space, sym_eigenvalues, symmetrize, Mat,
};
use crate::error::{domain_err, Error, Result};
use crate::kron::KroneckerSolver;
use crate::krylov::random_start;
use crate::precond::{build_ptilde_y, BlockDiagPreconditioner, DualGrams};
use crate::sparse::dot;
use crate::splines::QuadratureRule;

/// Largest system dimension accepted by the dense measurements.
pub const DENSE_VERIFY_CAP: usize = 5000;
/// Largest `dim Y_h` accepted by the dense measurements.
pub const STATE_CAP: usize = 1000;
/// Relative singular-value threshold for computed kernels.
pub const KERNEL_TOL: f64 = 1e-10;

/// Number of eigenvalues below `KERNEL_TOL · max` and the smallest one above.
fn split_null(ev: &[f64]) -> (usize, f64) {
    let max = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let null = ev.iter().filter(|v| **v <= KERNEL_TOL * max).count();
    let min = ev
        .iter()
        .filter(|v| **v > KERNEL_TOL * max)
        .fold(f64::INFINITY, |a, v| a.min(*v));
    (null, min)
}

fn check_caps(sys: &DiscreteSystem) -> Result<()> {
    if sys.dim() > DENSE_VERIFY_CAP {
        return Err(Error::CapExceeded {
            dim: sys.dim(),
            cap: DENSE_VERIFY_CAP,
        });
    }
    if sys.sizes[0] > STATE_CAP {
        return Err(Error::CapExceeded {
            dim: sys.sizes[0],
            cap: STATE_CAP,
        });
    }
    Ok(())
}

/// Measured Brezzi constants next to the values of the continuous theory.
#[derive(Debug, Clone, PartialEq)]
pub struct BrezziReport {
    pub alpha: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub gamma0: f64,
    /// Smallest singular value of the weighted `B`; zero when `B` is not onto.
    pub k0: f64,
    /// Smallest nonzero singular value, i.e. the inf-sup constant on `range B`.
    pub k0_range: f64,
    /// `dim M_h - rank B`.
    pub b_rank_deficiency: usize,
    /// Dimension of the computed discrete kernel of `B`.
    pub kernel_dim: usize,
    /// `‖T‖` between the Y-norm and `L²(q_T)`.
    pub t_norm: f64,
    pub c_k: f64,
    pub bound_c_a: f64,
    pub bound_c_b: f64,
    pub bound_gamma0: f64,
    /// `1 / √(‖T‖² c_K² + 1)` with the measured `‖T‖` and `c_K`.
    pub bound_k0: f64,
}

/// `c_A`, `c_B`, `γ₀`, `k₀` of the pair `A = diag(M_q, α M_U)`,
/// `B(y, u) = (K_U y + M_U u, K_R y)` in the norms
/// `‖(y, u)‖² = ‖y‖²_{P_Y} + α‖u‖²` and `‖q‖² = α⁻¹‖q_U‖² + ‖q_R‖²_R`.
pub fn measure_brezzi(sys: &DiscreteSystem, alpha: f64) -> Result<BrezziReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(domain_err(format!("alpha must be positive, got {alpha}")));
    }
    check_caps(sys)?;
    let b = &sys.blocks;
    let grams = DualGrams::new(sys, STATE_CAP)?;
    let p = b.state_norm(alpha)?.to_dense();
    let m_obs = b.m_obs.to_dense();
    let l_p = cholesky_lower(&p, "state block P_Y")?;

    let c_a = gen_eig_bounds(&m_obs, &p)?.1.max(1.0);

    // B̂ = [[G_u, I], [G_r, 0]] with G_u = √α L_U⁻¹ K_U L_P⁻ᵀ, G_r = L_R⁻¹ K_R L_P⁻ᵀ.
    // G_uᵀG_u = α L_P⁻¹ (K_Uᵀ M_U⁻¹ K_U) L_P⁻ᵀ = V Σ² Vᵀ.
    let h = symmetrize(&crate::dense::congruence_inverse(&(&grams.u * alpha), &l_p));
    let eig = h.clone().symmetric_eigen();
    let smax = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(*v));
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > KERNEL_TOL * smax)
        .collect();
    let r = keep.len();
    let k_r = b.k_r()?.to_dense();
    let r_gram = b.r_gram()?.to_dense();
    let l_r = cholesky_lower(&r_gram, "R Gram matrix")?;
    let g_r = lower_solve(&l_r, &lower_solve(&l_p, &k_r.transpose()).transpose());
    let nr = g_r.nrows();
    let mut w = Mat::zeros(r + nr, r + nr);
    let mut sig_vt_grt = Mat::zeros(r, nr);
    for (a, &i) in keep.iter().enumerate() {
        let s2 = eig.eigenvalues[i];
        let sig = libm::sqrt(s2);
        w[(a, a)] = s2 + 1.0;
        let vi = eig.eigenvectors.column(i);
        let row = g_r.clone() * vi;
        for k in 0..nr {
            sig_vt_grt[(a, k)] = sig * row[k];
        }
    }
    let grgrt = &g_r * g_r.transpose();
    for a in 0..r {
        for k in 0..nr {
            w[(a, r + k)] = sig_vt_grt[(a, k)];
            w[(r + k, a)] = sig_vt_grt[(a, k)];
        }
    }
    for i in 0..nr {
        for j in 0..nr {
            w[(r + i, r + j)] = grgrt[(i, j)];
        }
    }
    let mut ev = sym_eigenvalues(&w);
    if sys.sizes[1] > r {
        ev.push(1.0);
    }
    let lam_max = ev.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
    let lam_min = ev.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let (deficiency, lam_range) = split_null(&ev);

    // kernel of B: u = -M_U⁻¹ K_U y with y ∈ ker K_R
    let z = null_space(&k_r, KERNEL_TOL).basis;
    let gamma0 = if z.ncols() == 0 {
        f64::INFINITY
    } else {
        let au = &grams.u * alpha;
        let num = z.transpose() * (&m_obs + &au) * &z;
        let den = z.transpose() * (&p + &au) * &z;
        gen_eig_bounds(&num, &den)?.0
    };

    let k1 = measure_discrete_k1_with(sys, &grams)?;
    let bound_k0 = 1.0 / libm::sqrt(k1.t_norm * k1.t_norm * k1.c_k * k1.c_k + 1.0);
    Ok(BrezziReport {
        alpha,
        c_a,
        c_b: libm::sqrt(lam_max),
        gamma0,
        k0: libm::sqrt(lam_min.max(0.0)),
        k0_range: libm::sqrt(lam_range),
        b_rank_deficiency: deficiency,
        kernel_dim: z.ncols(),
        t_norm: k1.t_norm,
        c_k: k1.c_k,
        bound_c_a: 1.0,
        bound_c_b: core::f64::consts::SQRT_2,
        bound_gamma0: 0.5,
        bound_k0,
    })
}

/// Discrete (K1): `‖y‖_Y ≤ c_K ‖K y‖_{M'}` on `Y_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct K1Report {
    pub c_k: f64,
    /// `sup ‖K y‖_{M'} / ‖y‖_Y`, at most 1 on conforming spaces.
    pub upper: f64,
    /// `‖T‖ = sup ‖y‖_{L²(q_T)} / ‖y‖_Y`.
    pub t_norm: f64,
}

/// The Y-norm `‖L y‖² + ‖∇y(0)‖² [+ ‖∂_t y(0)‖²]` as a dense matrix.
fn y_norm(sys: &DiscreteSystem) -> Result<Mat> {
    Ok(sys
        .blocks
        .state_normal
        .add_scaled(1.0, &sys.blocks.traces, 1.0)?
        .to_dense())
}

pub fn measure_discrete_k1(sys: &DiscreteSystem) -> Result<K1Report> {
    check_caps(sys)?;
    let grams = DualGrams::new(sys, STATE_CAP)?;
    measure_discrete_k1_with(sys, &grams)
}

fn measure_discrete_k1_with(sys: &DiscreteSystem, grams: &DualGrams) -> Result<K1Report> {
    let n = y_norm(sys)?;
    let g = &grams.u + grams.r();
    let (lo, hi) = gen_eig_bounds(&g, &n)?;
    if lo <= 0.0 {
        return Err(domain_err("K is not injective on the discrete state space"));
    }
    let t2 = gen_eig_bounds(&sys.blocks.m_obs.to_dense(), &n)?.1;
    Ok(K1Report {
        c_k: 1.0 / libm::sqrt(lo),
        upper: libm::sqrt(hi),
        t_norm: libm::sqrt(t2.max(0.0)),
    })
}

/// Discrete (K2) / (K2′) inf-sup constant of `K_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfSupReport {
    pub restricted: bool,
    /// `None` when the (restricted) state space is empty.
    pub c_r: Option<f64>,
    /// Inf-sup constant on `range K_R`, ignoring its cokernel.
    pub c_r_range: Option<f64>,
    /// `dim R_h - rank K_R` on the trial space.
    pub rank_deficiency: usize,
    /// Dimension of the space the supremum runs over.
    pub trial_dim: usize,
    /// The computed kernel of `K_U` has singular values near the threshold.
    pub indeterminate: bool,
}

/// `inf_r sup_y ⟨K_R y, r⟩ / (‖y‖_Y ‖r‖_R)`, optionally with `y ∈ ker K_U`.
pub fn measure_discrete_infsup(
    sys: &DiscreteSystem,
    restrict_to_ker_ku: bool,
) -> Result<InfSupReport> {
    check_caps(sys)?;
    let n = y_norm(sys)?;
    let k_r = sys.blocks.k_r()?.to_dense();
    let r_gram = sys.blocks.r_gram()?.to_dense();
    let (z, indeterminate) = if restrict_to_ker_ku {
        let grams = DualGrams::new(sys, STATE_CAP)?;
        let ns = null_space(&grams.u, KERNEL_TOL);
        (ns.basis, ns.indeterminate)
    } else {
        (Mat::identity(n.nrows(), n.nrows()), false)
    };
    if z.ncols() == 0 {
        return Ok(InfSupReport {
            restricted: restrict_to_ker_ku,
            c_r: None,
            c_r_range: None,
            rank_deficiency: r_gram.nrows(),
            trial_dim: 0,
            indeterminate,
        });
    }
    let nz = z.transpose() * &n * &z;
    let kz = &k_r * &z;
    let l = cholesky_lower(&nz, "restricted Y norm")?;
    let x = lower_solve(&l, &kz.transpose());
    let s = x.transpose() * x;
    let ev = crate::dense::gen_eigenvalues(&s, &r_gram)?;
    let (deficiency, range_min) = split_null(&ev);
    Ok(InfSupReport {
        restricted: restrict_to_ker_ku,
        c_r: Some(libm::sqrt(ev[0].max(0.0))),
        c_r_range: Some(libm::sqrt(range_min)),
        rank_deficiency: deficiency,
        trial_dim: z.ncols(),
        indeterminate,
    })
}

/// `‖P̃_Y - P_Y‖_max / ‖P_Y‖_max`.
pub fn lemma51_gap(sys: &DiscreteSystem, alpha: f64, cap: usize) -> Result<f64> {
    let pt = build_ptilde_y(sys, alpha, cap)?;
    let py = sys.blocks.state_norm(alpha)?.to_dense();
    Ok(crate::dense::max_abs(&(pt - &py)) / crate::dense::max_abs(&py))
}

/// Relative `L²(Q_T)` distance of `L y_h` from the control space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionResidual {
    /// `‖L y_h - Π_U L y_h‖`.
    pub residual: f64,
    /// `‖L y_h‖`.
    pub norm: f64,
}

impl InclusionResidual {
    pub fn relative(&self) -> f64 {
        if self.norm == 0.0 {
            0.0
        } else {
            self.residual / self.norm
        }
    }
}

/// Projects `L y` onto the control space through `M_U⁻¹ K_U y` and measures
/// the remainder by quadrature, without forming a difference of squares.
pub fn inclusion_residual(sys: &DiscreteSystem, y: &[f64]) -> Result<InclusionResidual> {
    let sp = &sys.spaces;
    if y.len() != sp.dim_y() {
        return Err(crate::error::dim_err(format!(
            "state vector of length {} for dim Y = {}",
            y.len(),
            sp.dim_y()
        )));
    }
    let f = &sys.factors;
    let mu = KroneckerSolver::new(
        &[&f.mass_u_time, &f.mass_u_space, &f.mass_u_space],
        "control mass",
    )?;
    let c = mu.solve(&sys.blocks.k_u.mul_vec(y));
    let ops = sys.spec.kind.operator_terms();
    let npts = sys.spec.degree + 2;
    let rt = QuadratureRule::on_space(&sp.time, npts, None);
    let rx = QuadratureRule::on_space(&sp.space, npts, None);
    let ni = sp.interior.len();
    let nfull = sp.space.dim();
    let nu = sp.u_space.dim();
    let (mut res2, mut norm2) = (0.0, 0.0);
    for et in &rt.elements {
        for (t, wt) in et.points.iter().zip(&et.weights) {
            let (ft, dt) = sp.time.local_derivatives(et.element, *t, 2);
            let (fut, ut) = sp.u_time.local_derivatives(et.element, *t, 0);
            for ex in &rx.elements {
                for (x, wx) in ex.points.iter().zip(&ex.weights) {
                    let (fx, dx) = sp.space.local_derivatives(ex.element, *x, 2);
                    let (fux, ux) = sp.u_space.local_derivatives(ex.element, *x, 0);
                    for ey in &rx.elements {
                        for (yy, wy) in ey.points.iter().zip(&ey.weights) {
                            let (fy, dy) = sp.space.local_derivatives(ey.element, *yy, 2);
                            let (fuy, uy) = sp.u_space.local_derivatives(ey.element, *yy, 0);
                            let mut ly = 0.0;
                            for a in 0..dt[0].len() {
                                let it = ft + a;
                                for bx in 0..dx[0].len() {
                                    let ix = fx + bx;
                                    if ix == 0 || ix + 1 == nfull {
                                        continue;
                                    }
                                    for by in 0..dy[0].len() {
                                        let iy = fy + by;
                                        if iy == 0 || iy + 1 == nfull {
                                            continue;
                                        }
                                        let coef = y[(it * ni + ix - 1) * ni + iy - 1];
                                        let mut v = 0.0;
                                        for (k, [d0, d1, d2]) in &ops {
                                            v += k * dt[*d0][a] * dx[*d1][bx] * dy[*d2][by];
                                        }
                                        ly += coef * v;
                                    }
                                }
                            }
                            let mut pu = 0.0;
                            for (a, tv) in ut[0].iter().enumerate() {
                                for (bx, xv) in ux[0].iter().enumerate() {
                                    for (by, yv) in uy[0].iter().enumerate() {
                                        let idx = ((fut + a) * nu + fux + bx) * nu + fuy + by;
                                        pu += c[idx] * tv * xv * yv;
                                    }
                                }
                            }
                            let w = wt * wx * wy;
                            res2 += w * (ly - pu) * (ly - pu);
                            norm2 += w * ly * ly;
                        }
                    }
                }
            }
        }
    }
    Ok(InclusionResidual {
        residual: libm::sqrt(res2),
        norm: libm::sqrt(norm2),
    })
}

/// Extreme eigenvalue estimate of `P⁻¹ A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEstimate {
    /// Estimates of `min |λ|` and `max |λ|`.
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    /// `κ` with both extremes moved outwards by their Ritz residual bounds.
    pub kappa_upper: f64,
    pub iterations: usize,
    /// Both Ritz residual bounds fell below the requested relative tolerance.
    pub converged: bool,
    /// Ritz values of `(P⁻¹A)²` discarded as belonging to the kernel of `A`.
    pub null_ritz: usize,
}

/// Ritz values of `(P⁻¹A)²` below this fraction of the largest are treated as zero.
pub const NULL_RITZ_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct LanczosConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            rel_tol: 1e-6,
            seed: 7,
        }
    }
}

/// Lanczos with full reorthogonalization on `(P⁻¹A)²`, which is self-adjoint
/// and positive in the `P` inner product; its extreme eigenvalues are the
/// squares of the extreme `|λ|` of `P⁻¹A`. A singular `A` gives the
/// effective condition number on `range(P⁻¹A)`.
pub fn condition_number_estimate(
    a: impl Fn(&[f64], &mut [f64]),
    p: impl Fn(&[f64], &mut [f64]),
    pinv: impl Fn(&[f64], &mut [f64]),
    dim: usize,
    deflate: &[Vec<f64>],
    cfg: &LanczosConfig,
) -> Result<ConditionEstimate> {
    if dim == 0 {
        return Err(domain_err("empty operator"));
    }
    if deflate.iter().any(|k| k.len() != dim) {
        return Err(crate::error::dim_err("deflation vector of wrong length"));
    }
    // P-orthonormal deflation basis, kept in the reorthogonalization set
    // but not in the tridiagonal matrix
    let mut qs: Vec<Vec<f64>> = Vec::new();
    let mut pqs: Vec<Vec<f64>> = Vec::new();
    for k in deflate {
        let mut pk = vec![0.0; dim];
        p(k, &mut pk);
        if let Some((q, pq)) = p_orthonormalize(pk, &qs, &pqs, &pinv, dim) {
            qs.push(q);
            pqs.push(pq);
        }
    }
    // start in range(P⁻¹A) so an exact kernel of A stays out of the Krylov space
    let r = random_start(dim, cfg.seed);
    let mut ar = vec![0.0; dim];
    a(&r, &mut ar);
    let Some((mut q, mut pq)) = p_orthonormalize(ar, &qs, &pqs, &pinv, dim) else {
        return Err(domain_err("start vector lies in the deflated space"));
    };
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    let (mut t1, mut t2) = (vec![0.0; dim], vec![0.0; dim]);
    let mut last = (0.0, 0.0, f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    let mut null_ritz = 0;
    for _ in 0..cfg.max_iter.min(dim) {
        // P w = A P⁻¹ A q
        a(&q, &mut t1);
        pinv(&t1, &mut t2);
        let mut pw = vec![0.0; dim];
        a(&t2, &mut pw);
        let alpha = dot(&q, &pw);
        alphas.push(alpha);
        qs.push(core::mem::take(&mut q));
        pqs.push(core::mem::take(&mut pq));
        // Orthogonalize the dual vector only and recover the primal one by a
        // fresh solve; updating both drifts apart when P is badly scaled.
        for _ in 0..2 {
            for (qi, pqi) in qs.iter().zip(&pqs) {
                let h = dot(&pw, qi);
                for j in 0..dim {
                    pw[j] -= h * pqi[j];
                }
            }
        }
        let mut w = vec![0.0; dim];
        pinv(&pw, &mut w);
        let beta = libm::sqrt(dot(&w, &pw).max(0.0));
        let m = alphas.len();
        let mut tri = Mat::zeros(m, m);
        for i in 0..m {
            tri[(i, i)] = alphas[i];
            if i + 1 < m {
                tri[(i, i + 1)] = betas[i];
                tri[(i + 1, i)] = betas[i];
            }
        }
        let eig = tri.symmetric_eigen();
        let mut imax = 0;
        for i in 0..m {
            if eig.eigenvalues[i] > eig.eigenvalues[imax] {
                imax = i;
            }
        }
        // Ritz values at roundoff level belong to the kernel of A
        let floor = NULL_RITZ_TOL * eig.eigenvalues[imax];
        let mut imin = imax;
        null_ritz = 0;
        for i in 0..m {
            if eig.eigenvalues[i] <= floor {
                null_ritz += 1;
            } else if eig.eigenvalues[i] < eig.eigenvalues[imin] {
                imin = i;
            }
        }
        let rmin = (beta * eig.eigenvectors[(m - 1, imin)]).abs();
        let rmax = (beta * eig.eigenvectors[(m - 1, imax)]).abs();
        last = (eig.eigenvalues[imin], eig.eigenvalues[imax], rmin, rmax);
        let scale = last.1.abs();
        if beta <= 1e-13 * scale
            || (rmin <= cfg.rel_tol * last.0.abs() && rmax <= cfg.rel_tol * scale)
        {
            converged = true;
            break;
        }
        betas.push(beta);
        q = w.iter().map(|v| v / beta).collect();
        pq = pw.iter().map(|v| v / beta).collect();
    }
    let (lo, hi, rlo, rhi) = last;
    if !(lo > 0.0) {
        return Err(domain_err("preconditioned operator appears singular"));
    }
    let lambda_min = libm::sqrt(lo);
    let lambda_max = libm::sqrt(hi);
    let lo_wide = (lo - rlo).max(lo * 1e-12);
    Ok(ConditionEstimate {
        lambda_min,
        lambda_max,
        kappa: lambda_max / lambda_min,
        kappa_upper: libm::sqrt((hi + rhi) / lo_wide),
        iterations: alphas.len(),
        converged,
        null_ritz,
    })
}

/// Orthonormalizes the primal vector `P⁻¹ pv` against `(qs, pqs)` in the `P`
/// inner product, working on the dual vector. `None` if nothing is left.
fn p_orthonormalize(
    mut pv: Vec<f64>,
    qs: &[Vec<f64>],
    pqs: &[Vec<f64>],
    pinv: &impl Fn(&[f64], &mut [f64]),
    dim: usize,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut v = vec![0.0; dim];
    pinv(&pv, &mut v);
    let before = libm::sqrt(dot(&v, &pv).max(0.0));
    for _ in 0..2 {
        for (qi, pqi) in qs.iter().zip(pqs) {
            let h = dot(&pv, qi);
            pv.iter_mut().zip(pqi).for_each(|(a, b)| *a -= h * b);
        }
    }
    pinv(&pv, &mut v);
    let nrm = libm::sqrt(dot(&v, &pv).max(0.0));
    if !(nrm > 1e-10 * before) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= nrm);
    pv.iter_mut().for_each(|x| *x /= nrm);
    Some((v, pv))
}

/// The kernel of the optimality system: `(0, 0, 0, q_R)` with `K_Rᵀ q_R = 0`.
/// It is nontrivial for the wave problem, whose unrestricted `R2` space is
/// larger than the range of the velocity trace.
pub fn system_kernel(sys: &DiscreteSystem) -> Result<Vec<Vec<f64>>> {
    let k_r = sys.blocks.k_r()?.to_dense();
    let ns = null_space(&k_r.transpose(), KERNEL_TOL);
    let off = sys.offsets[3];
    Ok((0..ns.basis.ncols())
        .map(|j| {
            let mut v = vec![0.0; sys.dim()];
            for i in 0..ns.basis.nrows() {
                v[off + i] = ns.basis[(i, j)];
            }
            v
        })
        .collect())
}

/// [`condition_number_estimate`] for an assembled system and its
/// preconditioner, with the system kernel deflated.
pub fn system_condition_estimate(
    sys: &DiscreteSystem,
    pre: &BlockDiagPreconditioner,
    cfg: &LanczosConfig,
) -> Result<ConditionEstimate> {
    let kernel = system_kernel(sys)?;
    let matrix = &sys.matrix;
    condition_number_estimate(
        |x, y| matrix.matvec(x, y),
        |x, y| {
            let v = pre.apply(x).expect("dimension checked");
            y.copy_from_slice(&v);
        },
        |x, y| pre.apply_inverse_into(x, y).expect("dimension checked"),
        matrix.nrows(),
        &kernel,
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_system, ProblemData, ProblemSpec};

    fn wave(p: usize, l: u32, alpha: f64) -> DiscreteSystem {
        assemble_system(&ProblemSpec::wave(p, l, alpha), &ProblemData::homogeneous()).unwrap()
    }

    #[test]
    fn brezzi_constants_respect_bounds() {
        let sys = wave(2, 2, 1e-3);
        for alpha in [1e-3, 1e-6] {
            let r = measure_brezzi(&sys, alpha).unwrap();
            assert!(r.c_a <= 1.0 + 1e-8, "{r:?}");
            assert!(r.c_b <= core::f64::consts::SQRT_2 + 1e-8, "{r:?}");
            assert!(r.gamma0 > 0.0 && r.k0_range > 0.0, "{r:?}");
            // ∂_t y(0) only reaches the H¹₀ part of the unrestricted R2 space
            assert_eq!(r.b_rank_deficiency, 36 - 16, "{r:?}");
        }
        assert!(measure_brezzi(&sys, 0.0).is_err());
    }

    #[test]
    fn k1_is_exact_under_inclusion() {
        for sys in [
            wave(2, 2, 1.0),
            assemble_system(&ProblemSpec::heat(2, 2, 1.0), &ProblemData::homogeneous()).unwrap(),
        ] {
            let r = measure_discrete_k1(&sys).unwrap();
            assert!((r.c_k - 1.0).abs() <= 1e-8, "{r:?}");
            assert!((r.upper - 1.0).abs() <= 1e-8, "{r:?}");
        }
    }

    #[test]
    fn k1_degrades_without_inclusion() {
        let mut spec = ProblemSpec::wave(2, 2, 1.0);
        spec.u_continuity = Some(1);
        let sys = assemble_system(&spec, &ProblemData::homogeneous()).unwrap();
        let r = measure_discrete_k1(&sys).unwrap();
        assert!(r.c_k > 1.0 + 1e-6, "{r:?}");
    }

    #[test]
    fn infsup_of_initial_conditions() {
        let sys = wave(2, 2, 1.0);
        let full = measure_discrete_infsup(&sys, false).unwrap();
        assert_eq!(full.rank_deficiency, 36 - 16);
        assert!(full.c_r.unwrap() < 1e-6);
        assert!(full.c_r_range.unwrap() > 0.0);
        let heat =
            assemble_system(&ProblemSpec::heat(2, 2, 1.0), &ProblemData::homogeneous()).unwrap();
        let h = measure_discrete_infsup(&heat, false).unwrap();
        assert_eq!(h.rank_deficiency, 0);
        assert!(h.c_r.unwrap() > 0.0);
        // K_U is injective on Y_h, so the restricted supremum runs over {0}
        let restricted = measure_discrete_infsup(&sys, true).unwrap();
        assert!(restricted.restricted);
        assert_eq!(restricted.trial_dim, 0);
        assert!(restricted.c_r.is_none());
    }

    #[test]
    fn inclusion_residual_vanishes() {
        for p in [2, 3] {
            let sys = wave(p, 2, 1.0);
            for seed in 0..3 {
                let y = random_start(sys.sizes[0], seed);
                let r = inclusion_residual(&sys, &y).unwrap();
                assert!(r.relative() <= 1e-10, "p={p}: {r:?}");
            }
        }
        let mut spec = ProblemSpec::wave(2, 2, 1.0);
        spec.u_continuity = Some(1);
        let sys = assemble_system(&spec, &ProblemData::homogeneous()).unwrap();
        let r = inclusion_residual(&sys, &random_start(sys.sizes[0], 1)).unwrap();
        assert!(r.relative() > 1e-3);
    }

    #[test]
    fn condition_of_identity_pair_is_one() {
        let d: Vec<f64> = (1..=30).map(|i| i as f64).collect();
        let d2 = d.clone();
        let d3 = d.clone();
        let est = condition_number_estimate(
            move |x, y| (0..x.len()).for_each(|i| y[i] = d[i] * x[i]),
            move |x, y| (0..x.len()).for_each(|i| y[i] = d2[i] * x[i]),
            move |x, y| (0..x.len()).for_each(|i| y[i] = x[i] / d3[i]),
            30,
            &[],
            &LanczosConfig::default(),
        )
        .unwrap();
        assert!((est.kappa - 1.0).abs() < 1e-12, "{est:?}");
    }

    #[test]
    fn condition_of_indefinite_diagonal() {
        let d: Vec<f64> = (0..40)
            .map(|i| {
                if i % 2 == 0 {
                    0.5 + i as f64
                } else {
                    -2.0 - i as f64
                }
            })
            .collect();
        let d2 = d.clone();
        let est = condition_number_estimate(
            move |x, y| (0..x.len()).for_each(|i| y[i] = d[i] * x[i]),
            |x, y| y.copy_from_slice(x),
            |x, y| y.copy_from_slice(x),
            40,
            &[],
            &LanczosConfig::default(),
        )
        .unwrap();
        let lo = d2.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        let hi = d2.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!((est.kappa - hi / lo).abs() < 1e-8 * hi / lo, "{est:?}");
    }

    #[test]
    fn lemma51_gap_small() {
        let sys = wave(2, 2, 1e-3);
        assert!(lemma51_gap(&sys, 1e-3, 200).unwrap() <= 1e-8);
    }

    #[test]
    fn condition_ignores_exact_kernel() {
        let d = [0.0, 0.0, 1.0, -2.0, 4.0, -0.5];
        let est = condition_number_estimate(
            move |x, y| (0..x.len()).for_each(|i| y[i] = d[i] * x[i]),
            |x, y| y.copy_from_slice(x),
            |x, y| y.copy_from_slice(x),
            6,
            &[],
            &LanczosConfig::default(),
        )
        .unwrap();
        assert!((est.kappa - 8.0).abs() < 1e-10, "{est:?}");
    }

    #[test]
    fn preconditioned_wave_condition_is_alpha_robust() {
        let sys = wave(2, 2, 1e-3);
        let pre = BlockDiagPreconditioner::build(&sys).unwrap();
        let mut kappas = Vec::new();
        for alpha in [1e-3, 1e-6, 1e-9] {
            let s = sys.with_alpha(alpha).unwrap();
            let p = pre.with_alpha(&s.blocks, alpha).unwrap();
            let est = system_condition_estimate(&s, &p, &LanczosConfig::default()).unwrap();
            kappas.push(est.kappa);
        }
        let hi = kappas.iter().fold(0.0_f64, |a, v| a.max(*v));
        let lo = kappas.iter().fold(f64::INFINITY, |a, v| a.min(*v));
        assert!(hi / lo <= 10.0, "{kappas:?}");
    }
}
