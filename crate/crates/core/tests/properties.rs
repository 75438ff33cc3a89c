use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use saddle_core::blocksys::{
    assemble_full, c_from_gamma, gamma_from_c, kernel_equality_check, measure_c, measure_gamma,
    random_inner_product, random_instance, split_d_b, tilde, BlockVector, InstanceOptions,
    KernelVerdict,
};
use saddle_core::dense::{sym_eigenvalues, Mat};
use saddle_core::krylov::{minres, random_start, MinresConfig};
use saddle_core::spectral::{
    block2x2_equivalence_check, check_condition_n, combine_bounds, domination_equivalence,
    random_block2x2, random_schur_instance, schur_sup_identity,
};
use saddle_core::splines::{make_space, univariate_matrix, Endpoint, QuadratureRule};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn instance_options(n: usize, singular: bool) -> InstanceOptions {
    InstanceOptions {
        n,
        max_block_dim: 4,
        drop_probability: if singular { 0.35 } else { 0.0 },
        degenerate_b_probability: if singular { 0.4 } else { 0.0 },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spline_dimension_formula(p in 0usize..=4, level in 0u32..=5, k_off in 0i32..=5) {
        let k = -1 + k_off % (p as i32 + 1);
        let s = make_space(p, level, k, 0.0, 1.0).unwrap();
        let formula = (p + 1) + ((1usize << level) - 1) * (p - (k + 1) as usize + 1);
        prop_assert_eq!(s.dim(), formula);
        prop_assert_eq!(s.knots().len() - p - 1, formula);
        prop_assert_eq!(s.eval_basis(0.37, 0).unwrap().len(), formula);
    }

    #[test]
    fn mass_is_spd_and_stiffness_kernel_is_constants(p in 1usize..=4, level in 0u32..=4, k_off in 0i32..=4) {
        let k = k_off % p as i32;
        let s = make_space(p, level, k, 0.0, 2.0).unwrap();
        let m = univariate_matrix(&s, &s, 0, 0).unwrap().to_dense();
        let a = univariate_matrix(&s, &s, 1, 1).unwrap().to_dense();
        prop_assert!((&m - m.transpose()).amax() <= 1e-14 * m.amax());
        prop_assert!((&a - a.transpose()).amax() <= 1e-12 * a.amax());
        prop_assert!(sym_eigenvalues(&m)[0] > 0.0);
        let ev = sym_eigenvalues(&a);
        let tol = 1e-10 * ev[ev.len() - 1];
        prop_assert!(ev[0] >= -tol);
        prop_assert_eq!(ev.iter().filter(|v| v.abs() <= tol).count(), 1);
        let ones = DVector::from_element(s.dim(), 1.0);
        prop_assert!((&a * ones).amax() <= 1e-11 * a.amax());
    }

    #[test]
    fn quadrature_is_exact_for_degree_2p(p in 0usize..=4, level in 0u32..=4, m_off in 0usize..=9) {
        let m = m_off % (2 * p + 2);
        let (a, b) = (-0.5, 1.5);
        let s = make_space(p, level, -1, a, b).unwrap();
        let rule = QuadratureRule::on_space(&s, p + 1, None);
        let sum: f64 = rule
            .elements
            .iter()
            .flat_map(|e| e.points.iter().zip(&e.weights))
            .map(|(x, w)| w * x.powi(m as i32))
            .sum();
        let exact = (b.powi(m as i32 + 1) - a.powi(m as i32 + 1)) / (m + 1) as f64;
        prop_assert!((sum - exact).abs() <= 1e-13 * exact.abs().max(1.0), "{} vs {}", sum, exact);
    }

    #[test]
    fn integration_by_parts(p in 1usize..=4, level in 0u32..=4, k_off in 0i32..=4) {
        let k = k_off % p as i32;
        let s = make_space(p, level, k, 0.0, 1.5).unwrap();
        let g10 = univariate_matrix(&s, &s, 1, 0).unwrap().to_dense();
        let g01 = univariate_matrix(&s, &s, 0, 1).unwrap().to_dense();
        let l = DVector::from_vec(s.endpoint_row(Endpoint::Left, 0).unwrap());
        let r = DVector::from_vec(s.endpoint_row(Endpoint::Right, 0).unwrap());
        let boundary = &r * r.transpose() - &l * l.transpose();
        prop_assert!((g10 + g01 - boundary).amax() <= 1e-12);
    }

    #[test]
    fn tilde_is_an_isometric_involution(dims in proptest::collection::vec(1usize..5, 1..6), seed in any::<u64>()) {
        let total: usize = dims.iter().sum();
        let x = DVector::from_vec(random_start(total, seed));
        let bx = BlockVector::split(&x, &dims).unwrap();
        let t = tilde(&bx);
        prop_assert_eq!(tilde(&t).flatten(), x.clone());
        prop_assert!((t.flatten().norm() - x.norm()).abs() <= 1e-15 * x.norm());
    }

    #[test]
    fn energy_identity(seed in any::<u64>(), n in 2usize..=4) {
        let sys = random_instance(&mut rng(seed), &instance_options(n, true)).unwrap();
        let x = DVector::from_vec(random_start(sys.total_dim(), seed ^ 1));
        let xt = tilde(&BlockVector::split(&x, sys.block_dims()).unwrap()).flatten();
        let a = assemble_full(&sys);
        let (d, _) = split_d_b(&sys);
        let lhs = (&a * &x).dot(&xt);
        let rhs = (&d * &x).dot(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * a.norm() * x.norm_squared());
    }

    #[test]
    fn kernel_equality(seed in any::<u64>(), n in 2usize..=4) {
        let sys = random_instance(&mut rng(seed), &instance_options(n, true)).unwrap();
        let k = kernel_equality_check(&sys, 1e-10);
        prop_assert_ne!(k.verdict, KernelVerdict::Different, "{:?}", k);
        if k.verdict == KernelVerdict::Equal {
            prop_assert!(k.max_angle_sine <= 1e-8);
        }
    }

    #[test]
    fn theorem22_brackets_both_ways(seed in any::<u64>(), n in 2usize..=4) {
        let mut r = rng(seed);
        let sys = random_instance(&mut r, &instance_options(n, false)).unwrap();
        let p = random_inner_product(&mut r, sys.block_dims());
        let (c_lo, c_hi) = measure_c(&sys, &p).unwrap();
        prop_assume!(c_lo > 1e-8 * c_hi);
        let (g_lo, g_hi) = measure_gamma(&sys, &p).unwrap();
        let (bg_lo, bg_hi) = gamma_from_c(c_lo, c_hi).unwrap();
        prop_assert!(g_lo >= bg_lo * (1.0 - 1e-10) && g_hi <= bg_hi * (1.0 + 1e-10));
        let (bc_lo, bc_hi) = c_from_gamma(g_lo, g_hi).unwrap();
        prop_assert!(c_lo >= bc_lo * (1.0 - 1e-10) && c_hi <= bc_hi * (1.0 + 1e-10));
    }

    #[test]
    fn gamma_formulas_are_ordered(c_lo in 1e-3f64..10.0, extra in 0.0f64..10.0) {
        let (g_lo, g_hi) = gamma_from_c(c_lo, c_lo + extra).unwrap();
        prop_assert!(g_lo <= g_hi);
        let (d_lo, d_hi) = c_from_gamma(c_lo, c_lo + extra).unwrap();
        prop_assert!(d_lo <= d_hi);
    }

    #[test]
    fn conditions_reproduce_gamma(seed in any::<u64>(), n in 2usize..=4) {
        let mut r = rng(seed);
        let sys = random_instance(&mut r, &instance_options(n, false)).unwrap();
        let p = random_inner_product(&mut r, sys.block_dims());
        let (lo, hi) = combine_bounds(&check_condition_n(&sys, &p, n).unwrap());
        let (g_lo, g_hi) = measure_gamma(&sys, &p).unwrap();
        prop_assert!(rel(lo, g_lo) <= 1e-10 && rel(hi, g_hi) <= 1e-10, "{} {} {} {}", lo, g_lo, hi, g_hi);
    }

    #[test]
    fn appendix_lemmas(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_schur_instance(&mut r, 6).unwrap();
        let q = DVector::from_vec(random_start(inst.c().nrows(), seed));
        let (lhs, rhs) = schur_sup_identity(&inst, &q).unwrap();
        prop_assert!(rel(lhs, rhs) <= 1e-10);
        let (fwd, bwd) = domination_equivalence(&inst).unwrap();
        prop_assert_eq!(fwd, bwd);
        let rep = block2x2_equivalence_check(&random_block2x2(&mut r, 4).unwrap()).unwrap();
        prop_assert!(rep.consistent(1e-10), "{:?}", rep);
    }
}

fn dense_op(a: Mat) -> impl Fn(&[f64], &mut [f64]) {
    move |x, y| y.copy_from_slice((&a * DVector::from_column_slice(x)).as_slice())
}

fn random_symmetric(seed: u64, n: usize) -> Mat {
    let v = random_start(n * n, seed);
    let g = Mat::from_column_slice(n, n, &v);
    (&g + g.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn minres_residuals_are_monotone(seed in any::<u64>(), n in 5usize..40) {
        let a = random_symmetric(seed, n) + Mat::identity(n, n) * 0.1;
        let diag: Vec<f64> = random_start(n, seed ^ 7).iter().map(|v| 1.5 + v).collect();
        let pinv = move |r: &[f64], z: &mut [f64]| {
            for i in 0..r.len() {
                z[i] = r[i] / diag[i];
            }
        };
        let b = random_start(n, seed ^ 3);
        let cfg = MinresConfig { max_iter: 5 * n, ..MinresConfig::default() };
        let (_, rep) = minres(dense_op(a), pinv, &b, &vec![0.0; n], &cfg).unwrap();
        for w in rep.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", rep.residual_history);
        }
        if rep.converged {
            prop_assert!(rep.final_true_relres <= 10.0 * cfg.rel_tol);
        }
    }

    #[test]
    fn minres_terminates_after_distinct_eigenvalues(seed in any::<u64>(), k in 6usize..=30, m in 1usize..=5) {
        let vals: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { 1.0 + i as f64 } else { -0.5 - i as f64 }).collect();
        let g = Mat::from_column_slice(k, k, &random_start(k * k, seed));
        let q = g.qr().q();
        let d = Mat::from_diagonal(&DVector::from_fn(k, |i, _| vals[i % m]));
        let a = &q * d * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let b = random_start(k, seed ^ 5);
        let id = |r: &[f64], z: &mut [f64]| z.copy_from_slice(r);
        let (_, rep) = minres(dense_op(a), id, &b, &vec![0.0; k], &MinresConfig::default()).unwrap();
        prop_assert!(rep.converged);
        prop_assert!(rep.iterations <= m + 2, "{} iterations for {} eigenvalues", rep.iterations, m);
    }

    // Scaling by 4^k is exact in binary floating point, so the whole iterate
    // sequence must be reproduced bit for bit. The c = 10 contract is checked
    // on the wave system in the desk-scale tests.
    #[test]
    fn minres_is_invariant_under_exact_preconditioner_scaling(seed in any::<u64>(), n in 5usize..30, k in -2i32..=3) {
        let a = random_symmetric(seed, n) + Mat::identity(n, n) * 0.05;
        let diag: Vec<f64> = random_start(n, seed ^ 9).iter().map(|v| 1.2 + v).collect();
        let b = random_start(n, seed ^ 4);
        let x0 = random_start(n, seed ^ 8);
        let mut runs = Vec::new();
        for c in [1.0, 4f64.powi(k)] {
            let diag = diag.clone();
            let pinv = move |r: &[f64], z: &mut [f64]| {
                for i in 0..r.len() {
                    z[i] = r[i] / (c * diag[i]);
                }
            };
            let cfg = MinresConfig { max_iter: 10 * n, ..MinresConfig::default() };
            runs.push(minres(dense_op(a.clone()), pinv, &b, &x0, &cfg).unwrap());
        }
        prop_assert_eq!(runs[0].1.iterations, runs[1].1.iterations);
        prop_assert_eq!(&runs[0].0, &runs[1].0);
    }
}
