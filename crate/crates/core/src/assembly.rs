//! Discrete optimality systems for space-time optimal control of the heat and
//! wave equations on `(0, T) x (0, 1)²`.
//!
//! Unknowns are ordered `(y, u, p_U, p_R1[, p_R2])`. The state lives in
//! `S_p(0,T) ⊗ [S_p(Ω) ∩ H¹₀]`, control and adjoint in a low-continuity
//! space `S_{p,p-3}` in every direction, `R1 = S_p(Ω) ∩ H¹₀` and (wave only)
//! `R2 = S_p(Ω)`. Every block is a short sum of Kronecker products of
//! univariate matrices.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::cholesky::SparseCholesky;
use crate::error::{dim_err, domain_err, Error, Result};
use crate::kron::{KronTerm, KroneckerMatrix, KroneckerSolver};
use crate::sparse::{offsets, CsrMatrix};
use crate::splines::{
    make_space, univariate_matrix, univariate_matrix_clipped, Endpoint, QuadratureRule,
    SplineSpace, UnivariateMatrix,
};

/// Which state equation constrains the control problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    Heat,
    Wave,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Heat => "heat",
            ProblemKind::Wave => "wave",
        }
    }

    /// The differential operator as `(coefficient, [d_t, d_x, d_y])` terms.
    pub fn operator_terms(self) -> [(f64, [usize; 3]); 3] {
        let dt = match self {
            ProblemKind::Heat => 1,
            ProblemKind::Wave => 2,
        };
        [(1.0, [dt, 0, 0]), (-1.0, [0, 2, 0]), (-1.0, [0, 0, 2])]
    }

    /// The wave equation also prescribes the initial velocity.
    pub fn has_velocity_condition(self) -> bool {
        matches!(self, ProblemKind::Wave)
    }

    pub fn n_blocks(self) -> usize {
        if self.has_velocity_condition() {
            5
        } else {
            4
        }
    }

    pub fn block_names(self) -> &'static [&'static str] {
        match self {
            ProblemKind::Heat => &["y", "u", "p_U", "p_R1"],
            ProblemKind::Wave => &["y", "u", "p_U", "p_R1", "p_R2"],
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat" => Ok(ProblemKind::Heat),
            "wave" => Ok(ProblemKind::Wave),
            other => Err(domain_err(format!(
                "unknown problem '{other}' (heat | wave)"
            ))),
        }
    }
}

/// Parameters of one discrete control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub degree: usize,
    pub level: u32,
    pub alpha: f64,
    pub final_time: f64,
    /// Observation box `ω = (x0, x1) x (y0, y1)`.
    pub omega: [(f64, f64); 2],
    pub seed: u64,
    /// Continuity of the control space; `None` means `p - 3`.
    pub u_continuity: Option<i32>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, degree: usize, level: u32, alpha: f64) -> Self {
        Self {
            kind,
            degree,
            level,
            alpha,
            final_time: 1.0,
            omega: [(0.25, 0.75), (0.25, 0.75)],
            seed: 42,
            u_continuity: None,
        }
    }

    pub fn wave(degree: usize, level: u32, alpha: f64) -> Self {
        Self::new(ProblemKind::Wave, degree, level, alpha)
    }

    pub fn heat(degree: usize, level: u32, alpha: f64) -> Self {
        Self::new(ProblemKind::Heat, degree, level, alpha)
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            alpha,
            ..self.clone()
        }
    }

    pub fn u_continuity(&self) -> i32 {
        self.u_continuity.unwrap_or(self.degree as i32 - 3)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(domain_err(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.degree < 2 {
            return Err(domain_err(format!(
                "degree {} < 2: the Laplacian of the state must be square integrable",
                self.degree
            )));
        }
        if !(self.final_time > 0.0 && self.final_time.is_finite()) {
            return Err(domain_err(format!(
                "final time must be positive, got {}",
                self.final_time
            )));
        }
        for (lo, hi) in self.omega {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(domain_err(format!(
                    "observation interval ({lo}, {hi}) is not a non-empty subset of (0, 1)"
                )));
            }
        }
        let k = self.u_continuity();
        if k < -1 || k > self.degree as i32 - 1 {
            return Err(domain_err(format!(
                "control continuity {k} outside [-1, {}]",
                self.degree as i32 - 1
            )));
        }
        Ok(())
    }
}

/// The univariate spaces from which all discrete spaces are tensorized.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpaces {
    pub kind: ProblemKind,
    /// `S_p(0, T)`, maximal continuity.
    pub time: SplineSpace,
    /// `S_p(0, 1)`, maximal continuity, before the H¹₀ restriction.
    pub space: SplineSpace,
    /// Indices of `space` that survive the H¹₀ restriction.
    pub interior: Vec<usize>,
    pub u_time: SplineSpace,
    pub u_space: SplineSpace,
}

impl DiscreteSpaces {
    pub fn dim_y(&self) -> usize {
        self.time.dim() * self.interior.len() * self.interior.len()
    }

    pub fn dim_u(&self) -> usize {
        self.u_time.dim() * self.u_space.dim() * self.u_space.dim()
    }

    pub fn dim_r1(&self) -> usize {
        self.interior.len() * self.interior.len()
    }

    pub fn dim_r2(&self) -> usize {
        if self.kind.has_velocity_condition() {
            self.space.dim() * self.space.dim()
        } else {
            0
        }
    }

    /// Block sizes in the order `(y, u, p_U, p_R1[, p_R2])`.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.dim_y(), self.dim_u(), self.dim_u(), self.dim_r1()];
        if self.kind.has_velocity_condition() {
            s.push(self.dim_r2());
        }
        s
    }

    pub fn dof_count(&self) -> usize {
        self.block_sizes().iter().sum()
    }
}

pub fn build_spaces(spec: &ProblemSpec) -> Result<DiscreteSpaces> {
    spec.validate()?;
    let p = spec.degree;
    let top = p as i32 - 1;
    let time = make_space(p, spec.level, top, 0.0, spec.final_time)?;
    let space = make_space(p, spec.level, top, 0.0, 1.0)?;
    let interior = space.h10_restriction()?;
    let ku = spec.u_continuity();
    Ok(DiscreteSpaces {
        kind: spec.kind,
        u_time: make_space(p, spec.level, ku, 0.0, spec.final_time)?,
        u_space: make_space(p, spec.level, ku, 0.0, 1.0)?,
        time,
        space,
        interior,
    })
}

/// `dim Y + 2 dim U + dim R1 (+ dim R2)`.
pub fn dof_count(spec: &ProblemSpec) -> Result<usize> {
    Ok(build_spaces(spec)?.dof_count())
}

/// Univariate Galerkin matrices used by the Kronecker assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateFactors {
    /// `∫ σ_a τ_i^{(d)} dt` for `d = 0, 1, 2` (rows: control time basis).
    pub u_time_vs_time: Vec<UnivariateMatrix>,
    /// `∫ τ_a^{(d1)} τ_i^{(d2)} dt`, indexed `[d1][d2]`.
    pub time_gram: Vec<Vec<UnivariateMatrix>>,
    pub mass_u_time: UnivariateMatrix,
    /// Value and derivative rows of the time basis at `t = 0`.
    pub e0: Vec<f64>,
    pub e1: Vec<f64>,
    /// `∫ χ_b φ_j^{(d)} dx` with `φ` restricted to H¹₀ (columns).
    pub u_space_vs_space: Vec<UnivariateMatrix>,
    /// `∫ φ_b^{(d1)} φ_j^{(d2)} dx` on H¹₀ indices, indexed `[d1][d2]`.
    pub space_gram: Vec<Vec<UnivariateMatrix>>,
    pub mass_u_space: UnivariateMatrix,
    /// Mass of the unrestricted space, full and with H¹₀ columns.
    pub mass_space: UnivariateMatrix,
    pub mass_space_cols: UnivariateMatrix,
    /// Masses over the observation intervals on H¹₀ indices.
    pub obs_x: UnivariateMatrix,
    pub obs_y: UnivariateMatrix,
}

impl UnivariateFactors {
    pub fn new(spec: &ProblemSpec, sp: &DiscreteSpaces) -> Result<Self> {
        let int = &sp.interior;
        let all_u: Vec<usize> = (0..sp.u_space.dim()).collect();
        let mut u_time_vs_time = Vec::new();
        let mut u_space_vs_space = Vec::new();
        for d in 0..3 {
            u_time_vs_time.push(univariate_matrix(&sp.u_time, &sp.time, 0, d)?);
            u_space_vs_space
                .push(univariate_matrix(&sp.u_space, &sp.space, 0, d)?.select(&all_u, int));
        }
        let mut time_gram = Vec::new();
        let mut space_gram = Vec::new();
        for d1 in 0..3 {
            let mut trow = Vec::new();
            let mut srow = Vec::new();
            for d2 in 0..3 {
                trow.push(univariate_matrix(&sp.time, &sp.time, d1, d2)?);
                srow.push(univariate_matrix(&sp.space, &sp.space, d1, d2)?.select(int, int));
            }
            time_gram.push(trow);
            space_gram.push(srow);
        }
        let mass_space = univariate_matrix(&sp.space, &sp.space, 0, 0)?;
        let all_s: Vec<usize> = (0..sp.space.dim()).collect();
        let [ox, oy] = spec.omega;
        Ok(Self {
            u_time_vs_time,
            time_gram,
            mass_u_time: univariate_matrix(&sp.u_time, &sp.u_time, 0, 0)?,
            e0: sp.time.endpoint_row(Endpoint::Left, 0)?,
            e1: sp.time.endpoint_row(Endpoint::Left, 1)?,
            u_space_vs_space,
            space_gram,
            mass_u_space: univariate_matrix(&sp.u_space, &sp.u_space, 0, 0)?,
            mass_space_cols: mass_space.select(&all_s, int),
            mass_space,
            obs_x: univariate_matrix_clipped(&sp.space, &sp.space, 0, 0, ox)?.select(int, int),
            obs_y: univariate_matrix_clipped(&sp.space, &sp.space, 0, 0, oy)?.select(int, int),
        })
    }

    fn mass_int(&self) -> &UnivariateMatrix {
        &self.space_gram[0][0]
    }

    fn stiff_int(&self) -> &UnivariateMatrix {
        &self.space_gram[1][1]
    }
}

/// Builds the Kronecker representation of every block.
#[derive(Debug, Clone)]
pub struct Assembler {
    pub spec: ProblemSpec,
    pub spaces: DiscreteSpaces,
    pub factors: UnivariateFactors,
}

impl Assembler {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        let spaces = build_spaces(spec)?;
        let factors = UnivariateFactors::new(spec, &spaces)?;
        Ok(Self {
            spec: spec.clone(),
            spaces,
            factors,
        })
    }

    /// `K_U`: `∫ (L y) v` for the state operator `L = ∂_t^k - Δ`.
    pub fn state_operator(&self) -> Result<KroneckerMatrix> {
        let f = &self.factors;
        KroneckerMatrix::new(
            self.spec
                .kind
                .operator_terms()
                .iter()
                .map(|(c, [dt, dx, dy])| {
                    KronTerm::new(
                        *c,
                        vec![
                            f.u_time_vs_time[*dt].clone(),
                            f.u_space_vs_space[*dx].clone(),
                            f.u_space_vs_space[*dy].clone(),
                        ],
                    )
                })
                .collect(),
        )
    }

    /// `∫ (L y)(L z)` over the space-time cylinder, as nine Kronecker terms.
    pub fn state_normal(&self) -> Result<KroneckerMatrix> {
        let f = &self.factors;
        let ops = self.spec.kind.operator_terms();
        let mut terms = Vec::with_capacity(9);
        for (ci, di) in &ops {
            for (cj, dj) in &ops {
                terms.push(KronTerm::new(
                    ci * cj,
                    vec![
                        f.time_gram[di[0]][dj[0]].clone(),
                        f.space_gram[di[1]][dj[1]].clone(),
                        f.space_gram[di[2]][dj[2]].clone(),
                    ],
                ));
            }
        }
        KroneckerMatrix::new(terms)
    }

    /// `M_q`: the L² product over the observation cylinder.
    pub fn observation(&self) -> Result<KroneckerMatrix> {
        let f = &self.factors;
        KroneckerMatrix::new(vec![KronTerm::new(
            1.0,
            vec![f.time_gram[0][0].clone(), f.obs_x.clone(), f.obs_y.clone()],
        )])
    }

    /// `M_Q`: the L² product of the control space.
    pub fn control_mass(&self) -> Result<KroneckerMatrix> {
        let f = &self.factors;
        KroneckerMatrix::new(vec![KronTerm::new(
            1.0,
            vec![
                f.mass_u_time.clone(),
                f.mass_u_space.clone(),
                f.mass_u_space.clone(),
            ],
        )])
    }

    /// `K_R1`: `(∇y(0), ∇r)` against the H¹₀ space.
    pub fn initial_value(&self) -> Result<KroneckerMatrix> {
        let f = &self.factors;
        let e0 = UnivariateMatrix::row_vector(f.e0.clone());
        KroneckerMatrix::new(vec![
            KronTerm::new(
                1.0,
                vec![e0.clone(), f.stiff_int().clone(), f.mass_int().clone()],
            ),
            KronTerm::new(1.0, vec![e0, f.mass_int().clone(), f.stiff_int().clone()]),
        ])
    }

    /// `K_R2`: `(∂_t y(0), r)` against the unrestricted space; wave only.
    pub fn initial_velocity(&self) -> Result<KroneckerMatrix> {
        if !self.spec.kind.has_velocity_condition() {
            return Err(domain_err(
                "the heat problem has no initial-velocity condition",
            ));
        }
        let f = &self.factors;
        KroneckerMatrix::new(vec![KronTerm::new(
            1.0,
            vec![
                UnivariateMatrix::row_vector(f.e1.clone()),
                f.mass_space_cols.clone(),
                f.mass_space_cols.clone(),
            ],
        )])
    }

    /// Initial-condition terms of the state norm:
    /// `(∇y(0), ∇z(0)) [+ (∂_t y(0), ∂_t z(0))]`.
    pub fn trace_terms(&self) -> Result<KroneckerMatrix> {
        let f = &self.factors;
        let e00 = UnivariateMatrix::outer(&f.e0);
        let mut terms = vec![
            KronTerm::new(
                1.0,
                vec![e00.clone(), f.stiff_int().clone(), f.mass_int().clone()],
            ),
            KronTerm::new(1.0, vec![e00, f.mass_int().clone(), f.stiff_int().clone()]),
        ];
        if self.spec.kind.has_velocity_condition() {
            terms.push(KronTerm::new(
                1.0,
                vec![
                    UnivariateMatrix::outer(&f.e1),
                    f.mass_int().clone(),
                    f.mass_int().clone(),
                ],
            ));
        }
        KroneckerMatrix::new(terms)
    }

    /// 2-D stiffness on `R1`.
    pub fn stiffness_r1(&self) -> Result<KroneckerMatrix> {
        let f = &self.factors;
        KroneckerMatrix::new(vec![
            KronTerm::new(1.0, vec![f.stiff_int().clone(), f.mass_int().clone()]),
            KronTerm::new(1.0, vec![f.mass_int().clone(), f.stiff_int().clone()]),
        ])
    }

    /// 2-D mass on `R2`.
    pub fn mass_r2(&self) -> Result<KroneckerMatrix> {
        let f = &self.factors;
        KroneckerMatrix::new(vec![KronTerm::new(
            1.0,
            vec![f.mass_space.clone(), f.mass_space.clone()],
        )])
    }

    pub fn assemble_system(&self, data: &ProblemData<'_>) -> Result<DiscreteSystem> {
        let wave = self.spec.kind.has_velocity_condition();
        let blocks = SystemBlocks {
            m_obs: self.observation()?.to_csr(),
            m_u: self.control_mass()?.to_csr(),
            k_u: self.state_operator()?.to_csr(),
            k_r1: self.initial_value()?.to_csr(),
            k_r2: if wave {
                Some(self.initial_velocity()?.to_csr())
            } else {
                None
            },
            state_normal: self.state_normal()?.to_csr().symmetrized()?,
            traces: self.trace_terms()?.to_csr().symmetrized()?,
            s_r1: self.stiffness_r1()?.to_csr(),
            m_r2: if wave {
                Some(self.mass_r2()?.to_csr())
            } else {
                None
            },
        };
        let sizes = self.spaces.block_sizes();
        let matrix = blocks.system_matrix(&sizes, self.spec.alpha)?;
        let rhs = self.load_vector(data)?;
        Ok(DiscreteSystem {
            spec: self.spec.clone(),
            offsets: offsets(&sizes),
            sizes,
            matrix,
            rhs,
            blocks,
            factors: self.factors.clone(),
            spaces: self.spaces.clone(),
        })
    }

    /// Right-hand side `(∫_q d z, 0, ∫ g_U q, (∇y0, ∇r), (y1, r))`.
    pub fn load_vector(&self, data: &ProblemData<'_>) -> Result<Vec<f64>> {
        let sizes = self.spaces.block_sizes();
        let off = offsets(&sizes);
        let mut rhs = vec![0.0; off[sizes.len()]];
        if let Some(d) = data.d {
            let v = self.observation_load(d);
            rhs[off[0]..off[1]].copy_from_slice(&v);
        }
        if let Some(g) = data.g_u {
            let v = self.control_load(g);
            rhs[off[2]..off[3]].copy_from_slice(&v);
        }
        if let Some(g0) = data.y0_grad {
            let v = self.h10_load(g0);
            rhs[off[3]..off[4]].copy_from_slice(&v);
        }
        if let Some(y1) = data.y1 {
            if !self.spec.kind.has_velocity_condition() {
                return Err(domain_err("initial velocity given for the heat problem"));
            }
            let v = self.l2_space_load(y1);
            rhs[off[4]..off[5]].copy_from_slice(&v);
        }
        Ok(rhs)
    }

    fn npts(&self) -> usize {
        self.spec.degree + 3
    }

    /// `∫_{q_T} d φ` for every state basis function `φ`, or over the whole
    /// cylinder when `whole` is set.
    fn state_load(&self, f: &SpaceTimeFn, whole: bool) -> Vec<f64> {
        let sp = &self.spaces;
        let (clip_x, clip_y) = if whole {
            (None, None)
        } else {
            (Some(self.spec.omega[0]), Some(self.spec.omega[1]))
        };
        let rt = QuadratureRule::on_space(&sp.time, self.npts(), None);
        let rx = QuadratureRule::on_space(&sp.space, self.npts(), clip_x);
        let ry = QuadratureRule::on_space(&sp.space, self.npts(), clip_y);
        let ni = sp.interior.len();
        let nfull = sp.space.dim();
        let to_int = |j: usize| (j >= 1 && j + 1 < nfull).then(|| j - 1);
        let mut out = vec![0.0; sp.dim_y()];
        tensor_quadrature(
            &sp.time,
            &sp.space,
            &sp.space,
            &rt,
            &rx,
            &ry,
            |t, x, y, w, bt, bx, by| {
                let fv = w * f(t, x, y);
                for &(it, vt) in bt {
                    for &(ix, vx) in bx {
                        let Some(jx) = to_int(ix) else { continue };
                        for &(iy, vy) in by {
                            let Some(jy) = to_int(iy) else { continue };
                            out[(it * ni + jx) * ni + jy] += fv * vt * vx * vy;
                        }
                    }
                }
            },
        );
        out
    }

    fn observation_load(&self, d: &SpaceTimeFn) -> Vec<f64> {
        self.state_load(d, false)
    }

    fn control_load(&self, g: &SpaceTimeFn) -> Vec<f64> {
        let sp = &self.spaces;
        let rt = QuadratureRule::on_space(&sp.u_time, self.npts(), None);
        let rx = QuadratureRule::on_space(&sp.u_space, self.npts(), None);
        let n = sp.u_space.dim();
        let mut out = vec![0.0; sp.dim_u()];
        tensor_quadrature(
            &sp.u_time,
            &sp.u_space,
            &sp.u_space,
            &rt,
            &rx,
            &rx,
            |t, x, y, w, bt, bx, by| {
                let fv = w * g(t, x, y);
                for &(it, vt) in bt {
                    for &(ix, vx) in bx {
                        for &(iy, vy) in by {
                            out[(it * n + ix) * n + iy] += fv * vt * vx * vy;
                        }
                    }
                }
            },
        );
        out
    }

    /// `(∇y0, ∇r)` for the H¹₀ basis of `R1`.
    fn h10_load(&self, grad: &SpaceGradFn) -> Vec<f64> {
        let s = &self.spaces.space;
        let r = QuadratureRule::on_space(s, self.npts(), None);
        let ni = self.spaces.interior.len();
        let nfull = s.dim();
        let mut out = vec![0.0; ni * ni];
        plane_quadrature(s, &r, 1, |x, y, w, bx, by| {
            let (gx, gy) = grad(x, y);
            for &(ix, vx, dx) in bx {
                if ix == 0 || ix + 1 == nfull {
                    continue;
                }
                for &(iy, vy, dy) in by {
                    if iy == 0 || iy + 1 == nfull {
                        continue;
                    }
                    out[(ix - 1) * ni + iy - 1] += w * (gx * dx * vy + gy * vx * dy);
                }
            }
        });
        out
    }

    /// `(y1, r)` for the unrestricted basis of `R2`.
    fn l2_space_load(&self, f: &SpaceFn) -> Vec<f64> {
        let s = &self.spaces.space;
        let r = QuadratureRule::on_space(s, self.npts(), None);
        let n = s.dim();
        let mut out = vec![0.0; n * n];
        plane_quadrature(s, &r, 0, |x, y, w, bx, by| {
            let fv = w * f(x, y);
            for &(ix, vx, _) in bx {
                for &(iy, vy, _) in by {
                    out[ix * n + iy] += fv * vx * vy;
                }
            }
        });
        out
    }

    /// L² and H¹₀ projections of the data onto the discrete spaces.
    pub fn project_data(&self, data: &ProblemData<'_>) -> Result<ProjectedData> {
        let f = &self.factors;
        let mut out = ProjectedData::default();
        if let Some(d) = data.d {
            let solver = KroneckerSolver::new(
                &[&f.time_gram[0][0], f.mass_int(), f.mass_int()],
                "state mass",
            )?;
            out.d = Some(solver.solve(&self.state_load(d, true)));
        }
        if let Some(g0) = data.y0_grad {
            let chol = SparseCholesky::factor(&self.stiffness_r1()?.to_csr(), "R1 stiffness")?;
            out.y0 = Some(chol.solve(&self.h10_load(g0)));
        }
        if let Some(y1) = data.y1 {
            let solver = KroneckerSolver::new(&[&f.mass_space, &f.mass_space], "R2 mass")?;
            out.y1 = Some(solver.solve(&self.l2_space_load(y1)));
        }
        Ok(out)
    }
}

/// Basis values `(global index, value)` active at a point.
type Active = Vec<(usize, f64)>;

#[allow(clippy::too_many_arguments)]
fn tensor_quadrature(
    st: &SplineSpace,
    sx: &SplineSpace,
    sy: &SplineSpace,
    rt: &QuadratureRule,
    rx: &QuadratureRule,
    ry: &QuadratureRule,
    mut body: impl FnMut(f64, f64, f64, f64, &Active, &Active, &Active),
) {
    let eval = |s: &SplineSpace, e: usize, x: f64| -> Active {
        let (first, d) = s.local_derivatives(e, x, 0);
        d[0].iter()
            .enumerate()
            .map(|(j, v)| (first + j, *v))
            .collect()
    };
    for et in &rt.elements {
        for (t, wt) in et.points.iter().zip(&et.weights) {
            let bt = eval(st, et.element, *t);
            for ex in &rx.elements {
                for (x, wx) in ex.points.iter().zip(&ex.weights) {
                    let bx = eval(sx, ex.element, *x);
                    for ey in &ry.elements {
                        for (y, wy) in ey.points.iter().zip(&ey.weights) {
                            let by = eval(sy, ey.element, *y);
                            body(*t, *x, *y, wt * wx * wy, &bt, &bx, &by);
                        }
                    }
                }
            }
        }
    }
}

/// 2-D tensor quadrature reporting `(index, value, derivative)` per direction.
fn plane_quadrature(
    s: &SplineSpace,
    r: &QuadratureRule,
    nd: usize,
    mut body: impl FnMut(f64, f64, f64, &[(usize, f64, f64)], &[(usize, f64, f64)]),
) {
    let eval = |e: usize, x: f64| -> Vec<(usize, f64, f64)> {
        let (first, d) = s.local_derivatives(e, x, nd);
        (0..d[0].len())
            .map(|j| (first + j, d[0][j], if nd > 0 { d[1][j] } else { 0.0 }))
            .collect()
    };
    for ex in &r.elements {
        for (x, wx) in ex.points.iter().zip(&ex.weights) {
            let bx = eval(ex.element, *x);
            for ey in &r.elements {
                for (y, wy) in ey.points.iter().zip(&ey.weights) {
                    let by = eval(ey.element, *y);
                    body(*x, *y, wx * wy, &bx, &by);
                }
            }
        }
    }
}

/// `(t, x, y) ↦ value`.
pub type SpaceTimeFn = dyn Fn(f64, f64, f64) -> f64 + Sync;
/// `(x, y) ↦ value`.
pub type SpaceFn = dyn Fn(f64, f64) -> f64 + Sync;
/// `(x, y) ↦ (∂_x, ∂_y)`.
pub type SpaceGradFn = dyn Fn(f64, f64) -> (f64, f64) + Sync;

/// Problem data as samplable callbacks. `None` means zero. The initial
/// displacement enters only through its gradient.
#[derive(Clone, Copy, Default)]
pub struct ProblemData<'a> {
    pub d: Option<&'a SpaceTimeFn>,
    pub g_u: Option<&'a SpaceTimeFn>,
    pub y0_grad: Option<&'a SpaceGradFn>,
    pub y1: Option<&'a SpaceFn>,
}

impl ProblemData<'_> {
    pub fn homogeneous() -> Self {
        Self::default()
    }
}

impl fmt::Debug for ProblemData<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemData")
            .field("d", &self.d.is_some())
            .field("g_u", &self.g_u.is_some())
            .field("y0_grad", &self.y0_grad.is_some())
            .field("y1", &self.y1.is_some())
            .finish()
    }
}

/// Coefficient vectors of the projected data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectedData {
    /// L²(Q_T) projection of `d` onto `Y_h`.
    pub d: Option<Vec<f64>>,
    /// H¹₀ projection of `y0` onto `R1`.
    pub y0: Option<Vec<f64>>,
    /// L² projection of `y1` onto `R2`.
    pub y1: Option<Vec<f64>>,
}

/// The sparse blocks of the optimality system and of the state norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemBlocks {
    pub m_obs: CsrMatrix,
    pub m_u: CsrMatrix,
    pub k_u: CsrMatrix,
    pub k_r1: CsrMatrix,
    pub k_r2: Option<CsrMatrix>,
    /// `∫ (L y)(L z)`.
    pub state_normal: CsrMatrix,
    /// Initial-condition part of the state norm.
    pub traces: CsrMatrix,
    pub s_r1: CsrMatrix,
    pub m_r2: Option<CsrMatrix>,
}

impl SystemBlocks {
    /// The symmetric block matrix with the zero pattern of the optimality system.
    pub fn system_matrix(&self, sizes: &[usize], alpha: f64) -> Result<CsrMatrix> {
        let expected = if self.k_r2.is_some() { 5 } else { 4 };
        if sizes.len() != expected {
            return Err(dim_err(format!(
                "{} block sizes for {expected} blocks",
                sizes.len()
            )));
        }
        let am = self.m_u.scaled(alpha);
        let kut = self.k_u.transpose();
        let kr1t = self.k_r1.transpose();
        let mut blocks: Vec<(usize, usize, &CsrMatrix)> = vec![
            (0, 0, &self.m_obs),
            (0, 2, &kut),
            (0, 3, &kr1t),
            (1, 1, &am),
            (1, 2, &self.m_u),
            (2, 0, &self.k_u),
            (2, 1, &self.m_u),
            (3, 0, &self.k_r1),
        ];
        let kr2t = self.k_r2.as_ref().map(|k| k.transpose());
        if let (Some(k), Some(kt)) = (&self.k_r2, &kr2t) {
            blocks.push((0, 4, kt));
            blocks.push((4, 0, k));
        }
        CsrMatrix::from_blocks(sizes, sizes, &blocks)
    }

    /// `M_q + α N + traces`: the state block of the preconditioner.
    pub fn state_norm(&self, alpha: f64) -> Result<CsrMatrix> {
        self.m_obs
            .add_scaled(1.0, &self.state_normal, alpha)?
            .add_scaled(1.0, &self.traces, 1.0)
    }

    /// `[K_R1; K_R2]`.
    pub fn k_r(&self) -> Result<CsrMatrix> {
        let ny = self.k_r1.ncols();
        match &self.k_r2 {
            None => Ok(self.k_r1.clone()),
            Some(k2) => CsrMatrix::from_blocks(
                &[self.k_r1.nrows(), k2.nrows()],
                &[ny],
                &[(0, 0, &self.k_r1), (1, 0, k2)],
            ),
        }
    }

    /// `blkdiag(S_R1, M_R2)`.
    pub fn r_gram(&self) -> Result<CsrMatrix> {
        match &self.m_r2 {
            None => Ok(self.s_r1.clone()),
            Some(m2) => {
                let s = [self.s_r1.nrows(), m2.nrows()];
                CsrMatrix::from_blocks(&s, &s, &[(0, 0, &self.s_r1), (1, 1, m2)])
            }
        }
    }
}

/// The assembled optimality system.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub spec: ProblemSpec,
    pub sizes: Vec<usize>,
    pub offsets: Vec<usize>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub blocks: SystemBlocks,
    pub factors: UnivariateFactors,
    pub spaces: DiscreteSpaces,
}

impl DiscreteSystem {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Same blocks with a different regularization weight.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let spec = self.spec.with_alpha(alpha);
        spec.validate()?;
        Ok(Self {
            matrix: self.blocks.system_matrix(&self.sizes, alpha)?,
            spec,
            ..self.clone()
        })
    }

    pub fn block_names(&self) -> &'static [&'static str] {
        self.spec.kind.block_names()
    }
}

/// Spaces, blocks and system for `spec` with the given data.
pub fn assemble_system(spec: &ProblemSpec, data: &ProblemData<'_>) -> Result<DiscreteSystem> {
    Assembler::new(spec)?.assemble_system(data)
}

/// Rough peak memory of assembling and solving `spec`, in bytes: stored
/// nonzeros, the envelope of the state-norm factor and the Krylov vectors.
pub fn memory_estimate(spec: &ProblemSpec) -> Result<u64> {
    let asm = Assembler::new(spec)?;
    let mut nnz: u64 = 0;
    let mut add = |k: Result<KroneckerMatrix>| -> Result<()> {
        nnz += k?.nnz_estimate() as u64;
        Ok(())
    };
    add(asm.state_operator())?;
    add(asm.observation())?;
    add(asm.control_mass())?;
    add(asm.initial_value())?;
    add(asm.state_normal())?;
    add(asm.trace_terms())?;
    add(asm.stiffness_r1())?;
    if spec.kind.has_velocity_condition() {
        add(asm.initial_velocity())?;
        add(asm.mass_r2())?;
    }
    // the system stores K_U twice and M_Q three times
    let k_u = asm.state_operator()?.nnz_estimate() as u64;
    let m_u = asm.control_mass()?.nnz_estimate() as u64;
    nnz += k_u + 2 * m_u;
    let sp = &asm.spaces;
    let ni = sp.interior.len() as u64;
    let band = (spec.degree as u64 + 1) * ni * ni;
    let envelope = sp.dim_y() as u64 * band;
    let dofs = sp.dof_count() as u64;
    Ok(12 * nnz + 8 * envelope + 8 * 16 * dofs)
}

/// Boxed data closures for callers that need owned callbacks.
pub struct OwnedData {
    pub d: Option<Box<SpaceTimeFn>>,
    pub g_u: Option<Box<SpaceTimeFn>>,
    pub y0_grad: Option<Box<SpaceGradFn>>,
    pub y1: Option<Box<SpaceFn>>,
}

impl OwnedData {
    pub fn as_data(&self) -> ProblemData<'_> {
        ProblemData {
            d: self.d.as_deref(),
            g_u: self.g_u.as_deref(),
            y0_grad: self.y0_grad.as_deref(),
            y1: self.y1.as_deref(),
        }
    }
}
