//! Block-diagonal preconditioner `diag(P_Y, α M_U, α⁻¹ M_U, S_R1[, M_R2])`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{DiscreteSystem, SystemBlocks};
use crate::cholesky::SparseCholesky;
use crate::dense::Mat;
use crate::error::{dim_err, domain_err, Error, Result};
use crate::kron::KroneckerSolver;
use crate::sparse::{offsets, CsrMatrix};

/// Default dimension cap for the dense reference `P̃_Y`.
pub const PTILDE_CAP: usize = 200;

#[derive(Debug, Clone)]
pub enum BlockSolver {
    Sparse(Arc<SparseCholesky>),
    /// Solves `scale · (M_0 ⊗ M_1 ⊗ …)`.
    Kronecker {
        solver: Arc<KroneckerSolver>,
        scale: f64,
    },
}

impl BlockSolver {
    fn solve_into(&self, r: &[f64], out: &mut [f64]) {
        match self {
            BlockSolver::Sparse(c) => c.solve_into(r, out),
            BlockSolver::Kronecker { solver, scale } => {
                out.copy_from_slice(r);
                solver.solve_in_place(out);
                let s = 1.0 / scale;
                out.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// One diagonal block: its sparse matrix (for export and forward products)
/// and the solver for its inverse.
#[derive(Debug, Clone)]
pub struct PrecondBlock {
    pub name: String,
    pub matrix: CsrMatrix,
    pub solver: BlockSolver,
}

#[derive(Debug, Clone)]
pub struct BlockDiagPreconditioner {
    pub alpha: f64,
    pub blocks: Vec<PrecondBlock>,
    offsets: Vec<usize>,
}

impl BlockDiagPreconditioner {
    pub fn build(sys: &DiscreteSystem) -> Result<Self> {
        let f = &sys.factors;
        let mass_u = Arc::new(KroneckerSolver::new(
            &[&f.mass_u_time, &f.mass_u_space, &f.mass_u_space],
            "control mass",
        )?);
        let s_r1 = Arc::new(SparseCholesky::factor(&sys.blocks.s_r1, "R1 stiffness")?);
        let m_r2 = if sys.blocks.m_r2.is_some() {
            Some(Arc::new(KroneckerSolver::new(
                &[&f.mass_space, &f.mass_space],
                "R2 mass",
            )?))
        } else {
            None
        };
        Self::assemble(&sys.blocks, sys.spec.alpha, mass_u, s_r1, m_r2)
    }

    /// Same preconditioner for another `α`. Only the state block is refactored.
    pub fn with_alpha(&self, blocks: &SystemBlocks, alpha: f64) -> Result<Self> {
        let BlockSolver::Kronecker { solver: mass_u, .. } = &self.blocks[1].solver else {
            return Err(domain_err("control block is not a Kronecker solver"));
        };
        let BlockSolver::Sparse(s_r1) = &self.blocks[3].solver else {
            return Err(domain_err("R1 block is not a sparse factorization"));
        };
        let m_r2 = match self.blocks.get(4).map(|b| &b.solver) {
            Some(BlockSolver::Kronecker { solver, .. }) => Some(solver.clone()),
            _ => None,
        };
        Self::assemble(blocks, alpha, mass_u.clone(), s_r1.clone(), m_r2)
    }

    fn assemble(
        b: &SystemBlocks,
        alpha: f64,
        mass_u: Arc<KroneckerSolver>,
        s_r1: Arc<SparseCholesky>,
        m_r2: Option<Arc<KroneckerSolver>>,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(domain_err(format!("alpha must be positive, got {alpha}")));
        }
        let p_y = b.state_norm(alpha)?;
        let p_y_chol = SparseCholesky::factor(&p_y, "state block P_Y")?;
        let mut blocks = vec![
            PrecondBlock {
                name: "P_Y".into(),
                matrix: p_y,
                solver: BlockSolver::Sparse(Arc::new(p_y_chol)),
            },
            PrecondBlock {
                name: "alpha_M_U".into(),
                matrix: b.m_u.scaled(alpha),
                solver: BlockSolver::Kronecker {
                    solver: mass_u.clone(),
                    scale: alpha,
                },
            },
            PrecondBlock {
                name: "inv_alpha_M_U".into(),
                matrix: b.m_u.scaled(1.0 / alpha),
                solver: BlockSolver::Kronecker {
                    solver: mass_u,
                    scale: 1.0 / alpha,
                },
            },
            PrecondBlock {
                name: "S_R1".into(),
                matrix: b.s_r1.clone(),
                solver: BlockSolver::Sparse(s_r1),
            },
        ];
        if let (Some(m), Some(solver)) = (&b.m_r2, m_r2) {
            blocks.push(PrecondBlock {
                name: "M_R2".into(),
                matrix: m.clone(),
                solver: BlockSolver::Kronecker { solver, scale: 1.0 },
            });
        }
        let sizes: Vec<usize> = blocks.iter().map(|b| b.matrix.nrows()).collect();
        Ok(Self {
            alpha,
            offsets: offsets(&sizes),
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(dim_err(format!(
                "vector of length {n} for a preconditioner of dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// `out = P⁻¹ r`, block by block.
    pub fn apply_inverse_into(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(r.len())?;
        self.check_len(out.len())?;
        for (i, b) in self.blocks.iter().enumerate() {
            let (s, e) = (self.offsets[i], self.offsets[i + 1]);
            b.solver.solve_into(&r[s..e], &mut out[s..e]);
        }
        Ok(())
    }

    pub fn apply_inverse(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; r.len()];
        self.apply_inverse_into(r, &mut out)?;
        Ok(out)
    }

    /// `P x` from the stored block matrices.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut y = vec![0.0; x.len()];
        for (i, b) in self.blocks.iter().enumerate() {
            let (s, e) = (self.offsets[i], self.offsets[i + 1]);
            b.matrix.matvec(&x[s..e], &mut y[s..e]);
        }
        Ok(y)
    }

    /// The full block-diagonal matrix.
    pub fn to_csr(&self) -> Result<CsrMatrix> {
        let sizes: Vec<usize> = self.blocks.iter().map(|b| b.matrix.nrows()).collect();
        let list: Vec<(usize, usize, &CsrMatrix)> = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (i, i, &b.matrix))
            .collect();
        CsrMatrix::from_blocks(&sizes, &sizes, &list)
    }
}

/// `Kᵀ G⁻¹ K` as a dense matrix, with `G⁻¹` applied column by column.
pub(crate) fn dual_gram(k: &CsrMatrix, solve: impl Fn(&[f64]) -> Vec<f64>) -> Mat {
    let kt = k.transpose();
    let ny = k.ncols();
    let mut out = Mat::zeros(ny, ny);
    let mut col = vec![0.0; ny];
    for j in 0..ny {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        let kc = k.mul_vec(&col);
        let g = solve(&kc);
        let v = kt.mul_vec(&g);
        for i in 0..ny {
            out[(i, j)] = v[i];
        }
    }
    crate::dense::symmetrize(&out)
}

/// Dense `K_Uᵀ M_U⁻¹ K_U`, `K_R1ᵀ S_R1⁻¹ K_R1` and `K_R2ᵀ M_R2⁻¹ K_R2`.
#[derive(Debug, Clone)]
pub struct DualGrams {
    pub u: Mat,
    pub r1: Mat,
    pub r2: Option<Mat>,
}

impl DualGrams {
    pub fn new(sys: &DiscreteSystem, cap: usize) -> Result<Self> {
        let ny = sys.sizes[0];
        if ny > cap {
            return Err(Error::CapExceeded { dim: ny, cap });
        }
        let f = &sys.factors;
        let mu = KroneckerSolver::new(
            &[&f.mass_u_time, &f.mass_u_space, &f.mass_u_space],
            "control mass",
        )?;
        let u = dual_gram(&sys.blocks.k_u, |r| mu.solve(r));
        let s = SparseCholesky::factor(&sys.blocks.s_r1, "R1 stiffness")?;
        let r1 = dual_gram(&sys.blocks.k_r1, |r| s.solve(r));
        let r2 = match &sys.blocks.k_r2 {
            Some(k) => {
                let m2 = KroneckerSolver::new(&[&f.mass_space, &f.mass_space], "R2 mass")?;
                Some(dual_gram(k, |r| m2.solve(r)))
            }
            None => None,
        };
        Ok(Self { u, r1, r2 })
    }

    /// `K_R1ᵀ S⁻¹ K_R1 + K_R2ᵀ M⁻¹ K_R2`.
    pub fn r(&self) -> Mat {
        match &self.r2 {
            Some(r2) => &self.r1 + r2,
            None => self.r1.clone(),
        }
    }
}

/// The dense reference `M_q + α K_Uᵀ M_U⁻¹ K_U + K_Rᵀ G_R⁻¹ K_R`.
/// `α = 0` is allowed and drops the state-equation term.
pub fn build_ptilde_y(sys: &DiscreteSystem, alpha: f64, cap: usize) -> Result<Mat> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(domain_err(format!(
            "alpha must be non-negative, got {alpha}"
        )));
    }
    let g = DualGrams::new(sys, cap)?;
    Ok(sys.blocks.m_obs.to_dense() + &g.u * alpha + g.r())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_system, ProblemData, ProblemSpec};
    use crate::dense::{max_abs, spd_solve, sym_eigenvalues};
    use crate::sparse::{dot, norm2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn wave(p: usize, l: u32, alpha: f64) -> DiscreteSystem {
        assemble_system(&ProblemSpec::wave(p, l, alpha), &ProblemData::homogeneous()).unwrap()
    }

    #[test]
    fn inverse_contract() {
        let sys = wave(2, 2, 1e-3);
        let pre = BlockDiagPreconditioner::build(&sys).unwrap();
        assert_eq!(pre.dim(), 3604);
        let r = random(pre.dim(), 1);
        let x = pre.apply_inverse(&r).unwrap();
        let back = pre.apply(&x).unwrap();
        let err: Vec<f64> = back.iter().zip(&r).map(|(a, b)| a - b).collect();
        assert!(norm2(&err) <= 1e-10 * norm2(&r));
        let r2 = random(pre.dim(), 2);
        let sum: Vec<f64> = r.iter().zip(&r2).map(|(a, b)| a + b).collect();
        let lhs = pre.apply_inverse(&sum).unwrap();
        let x2 = pre.apply_inverse(&r2).unwrap();
        for i in 0..lhs.len() {
            assert!((lhs[i] - x[i] - x2[i]).abs() <= 1e-10 * (1.0 + lhs[i].abs()));
        }
    }

    #[test]
    fn kronecker_block_matches_dense_solve() {
        let sys = wave(2, 2, 1.0);
        let pre = BlockDiagPreconditioner::build(&sys).unwrap();
        let r = random(sys.sizes[1], 3);
        let mut out = vec![0.0; r.len()];
        pre.blocks[1].solver.solve_into(&r, &mut out);
        let m = sys.blocks.m_u.to_dense();
        let x = spd_solve(&m, &Mat::from_column_slice(r.len(), 1, &r), "mass").unwrap();
        let scale = x.amax();
        for i in 0..r.len() {
            assert!((out[i] - x[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn alpha_scaling_of_blocks() {
        let sys = wave(2, 1, 1.0);
        let a = BlockDiagPreconditioner::build(&sys).unwrap();
        let b = a.with_alpha(&sys.blocks, 0.1).unwrap();
        let v = random(sys.sizes[1], 4);
        let q = |p: &BlockDiagPreconditioner, i: usize| dot(&v, &p.blocks[i].matrix.mul_vec(&v));
        assert!((q(&b, 1) - q(&a, 1) / 10.0).abs() <= 1e-12 * q(&a, 1));
        assert!((q(&b, 2) - q(&a, 2) * 10.0).abs() <= 1e-12 * q(&b, 2));
        assert_eq!(a.blocks[3].matrix, b.blocks[3].matrix);
        assert_eq!(a.blocks[4].matrix, b.blocks[4].matrix);
        assert!(a.with_alpha(&sys.blocks, 0.0).is_err());
    }

    #[test]
    fn state_block_stays_definite_for_small_alpha() {
        let sys = wave(2, 2, 1e-9);
        let p = sys.blocks.state_norm(1e-9).unwrap().to_dense();
        let ev = sym_eigenvalues(&p);
        assert!(ev[0] > 0.0, "{}", ev[0]);
        assert!(BlockDiagPreconditioner::build(&sys).is_ok());
    }

    #[test]
    fn ptilde_equals_state_norm() {
        for (p, alpha) in [(2, 1.0), (2, 1e-6), (3, 1e-3)] {
            let sys = wave(p, 2, alpha);
            let pt = build_ptilde_y(&sys, alpha, PTILDE_CAP).unwrap();
            let py = sys.blocks.state_norm(alpha).unwrap().to_dense();
            let gap = max_abs(&(&pt - &py)) / max_abs(&py);
            assert!(gap <= 1e-8, "p={p} alpha={alpha}: {gap}");
        }
    }

    #[test]
    fn ptilde_differs_for_impoverished_control_space() {
        let mut spec = ProblemSpec::wave(2, 2, 1.0);
        spec.u_continuity = Some(1);
        let sys = assemble_system(&spec, &ProblemData::homogeneous()).unwrap();
        let pt = build_ptilde_y(&sys, 1.0, PTILDE_CAP).unwrap();
        let py = sys.blocks.state_norm(1.0).unwrap().to_dense();
        assert!(max_abs(&(&pt - &py)) / max_abs(&py) > 1e-4);
    }

    #[test]
    fn ptilde_at_zero_alpha_and_cap() {
        let sys = wave(2, 2, 1.0);
        let pt = build_ptilde_y(&sys, 0.0, PTILDE_CAP).unwrap();
        let reference = sys
            .blocks
            .m_obs
            .add_scaled(1.0, &sys.blocks.traces, 1.0)
            .unwrap();
        assert!(max_abs(&(&pt - reference.to_dense())) <= 1e-10 * reference.max_abs());
        assert!(matches!(
            build_ptilde_y(&sys, 1.0, 50),
            Err(Error::CapExceeded { dim: 96, cap: 50 })
        ));
    }
}
