use std::sync::LazyLock;

use proptest::prelude::*;
use saddle_core::assembly::{
    assemble_system, DiscreteSystem, ProblemData, ProblemKind, ProblemSpec,
};
use saddle_core::krylov::{minres, random_start, MinresConfig};
use saddle_core::precond::BlockDiagPreconditioner;
use saddle_core::sparse::{dot, norm2};
use saddle_core::verify::inclusion_residual;

struct Setup {
    sys: DiscreteSystem,
    pre: BlockDiagPreconditioner,
}

static WAVE: LazyLock<Setup> = LazyLock::new(|| {
    let sys = assemble_system(&ProblemSpec::wave(2, 2, 1e-3), &ProblemData::homogeneous()).unwrap();
    let pre = BlockDiagPreconditioner::build(&sys).unwrap();
    Setup { sys, pre }
});

fn solve_scaled(s: &Setup, c: f64) -> saddle_core::krylov::MinresReport {
    let cfg = MinresConfig::default();
    let x0 = random_start(s.sys.dim(), cfg.seed);
    let (_, rep) = minres(
        |x, y| s.sys.matrix.matvec(x, y),
        |r, z| {
            s.pre.apply_inverse_into(r, z).unwrap();
            z.iter_mut().for_each(|v| *v /= c);
        },
        &s.sys.rhs,
        &x0,
        &cfg,
    )
    .unwrap();
    rep
}

#[test]
fn scaled_preconditioner_gives_same_iteration_count() {
    let base = solve_scaled(&WAVE, 1.0);
    let scaled = solve_scaled(&WAVE, 10.0);
    assert!(base.converged && scaled.converged);
    assert_eq!(base.iterations, scaled.iterations);
    for rep in [&base, &scaled] {
        assert!(
            rep.final_true_relres <= 10.0 * MinresConfig::default().rel_tol,
            "{rep:?}"
        );
    }
}

#[test]
fn repeated_solves_are_reproducible() {
    let a = solve_scaled(&WAVE, 1.0);
    let b = solve_scaled(&WAVE, 1.0);
    assert_eq!(a.residual_history, b.residual_history);
}

#[test]
fn preconditioner_form_is_the_sum_of_block_forms() {
    let s = &*WAVE;
    let x = random_start(s.sys.dim(), 11);
    let px = s.pre.apply(&x).unwrap();
    let off = s.pre.offsets();
    let mut sum = 0.0;
    for (i, b) in s.pre.blocks.iter().enumerate() {
        let xi = &x[off[i]..off[i + 1]];
        sum += dot(xi, &b.matrix.mul_vec(xi));
    }
    let total = dot(&x, &px);
    assert!((total - sum).abs() <= 1e-12 * total.abs());
    // partition of unity: the unit control has L² norm |Q| = 1, the unit
    // velocity datum |Ω| = 1
    let alpha = s.pre.alpha;
    for (name, expect) in [
        ("alpha_M_U", alpha),
        ("inv_alpha_M_U", 1.0 / alpha),
        ("M_R2", 1.0),
    ] {
        let b = s.pre.blocks.iter().find(|b| b.name == name).unwrap();
        let ones = vec![1.0; b.matrix.nrows()];
        let v = dot(&ones, &b.matrix.mul_vec(&ones));
        assert!((v - expect).abs() <= 1e-12 * expect, "{name}: {v}");
    }
}

#[test]
fn blocks_stay_definite_across_alpha() {
    let s = &*WAVE;
    for alpha in [1.0, 1e-3, 1e-6, 1e-9] {
        let sys = s.sys.with_alpha(alpha).unwrap();
        let pre = s.pre.with_alpha(&sys.blocks, alpha).unwrap();
        for seed in 0..3 {
            let x = random_start(pre.dim(), seed);
            let off = pre.offsets();
            for (i, b) in pre.blocks.iter().enumerate() {
                let xi = &x[off[i]..off[i + 1]];
                assert!(
                    dot(xi, &b.matrix.mul_vec(xi)) > 0.0,
                    "{} at {alpha}",
                    b.name
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn apply_inverse_is_linear_symmetric_and_inverts(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let s = &*WAVE;
        let n = s.pre.dim();
        let r = random_start(n, seed);
        let t = random_start(n, seed ^ 0x5555);
        let comb: Vec<f64> = r.iter().zip(&t).map(|(x, y)| a * x + b * y).collect();
        let zr = s.pre.apply_inverse(&r).unwrap();
        let zt = s.pre.apply_inverse(&t).unwrap();
        let zc = s.pre.apply_inverse(&comb).unwrap();
        let lin: Vec<f64> = zr.iter().zip(&zt).map(|(x, y)| a * x + b * y).collect();
        let diff: Vec<f64> = zc.iter().zip(&lin).map(|(x, y)| x - y).collect();
        prop_assert!(norm2(&diff) <= 1e-10 * (norm2(&zr) * a.abs() + norm2(&zt) * b.abs()).max(1e-300));
        let (u, v) = (dot(&zr, &t), dot(&r, &zt));
        prop_assert!((u - v).abs() <= 1e-10 * norm2(&zr) * norm2(&t));
        let back = s.pre.apply(&zr).unwrap();
        let err: Vec<f64> = back.iter().zip(&r).map(|(x, y)| x - y).collect();
        prop_assert!(norm2(&err) <= 1e-8 * norm2(&r));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn assembled_systems_are_symmetric_and_satisfy_inclusion(
        heat in any::<bool>(), p in 2usize..=3, level in 1u32..=2, seed in any::<u64>()
    ) {
        let kind = if heat { ProblemKind::Heat } else { ProblemKind::Wave };
        let sys = assemble_system(&ProblemSpec::new(kind, p, level, 1e-3), &ProblemData::homogeneous()).unwrap();
        prop_assert!(sys.matrix.is_symmetric_exact());
        let y = random_start(sys.sizes[0], seed);
        let res = inclusion_residual(&sys, &y).unwrap();
        prop_assert!(res.relative() <= 1e-10, "{:?}", res);
    }
}
