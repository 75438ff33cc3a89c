//! Preconditioned MINRES for symmetric indefinite systems.
//!
//! The recurrence follows the Lanczos-based formulation with an SPD
//! preconditioner `P`; the quantity it tracks is `‖b - A x‖_{P⁻¹}`. The stop
//! test runs on that estimate and is then confirmed against the Euclidean
//! residual; if the confirmation fails the iteration simply continues.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain_err, Error, Result};
use crate::sparse::{dot, norm2};

/// The generator behind [`random_start`].
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), uniform [-1, 1]";

#[derive(Debug, Clone, PartialEq)]
pub struct MinresConfig {
    /// Required reduction of the Euclidean residual.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Seed for the symmetry probe. Start vectors are passed in explicitly.
    pub seed: u64,
    /// Record the true residual every this many iterations (0 disables).
    pub check_true_residual_every: usize,
    /// Probe `⟨Av, w⟩ = ⟨v, Aw⟩` on this many random pairs before iterating.
    pub symmetry_probes: usize,
}

impl Default for MinresConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter: 2000,
            seed: 42,
            check_true_residual_every: 50,
            symmetry_probes: 3,
        }
    }
}

impl MinresConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(domain_err(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(domain_err("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinresReport {
    pub iterations: usize,
    pub converged: bool,
    /// `‖r_j‖_{P⁻¹}` estimates; entry 0 is the initial value.
    pub residual_history: Vec<f64>,
    /// `(iteration, ‖r_j‖₂)` at the periodic and final checks.
    pub true_residual_history: Vec<(usize, f64)>,
    pub initial_residual: f64,
    /// `‖b - A x‖₂ / ‖b - A x0‖₂` at exit.
    pub final_true_relres: f64,
    /// Lanczos breakdown ended the iteration.
    pub breakdown: bool,
    /// Wall time, filled in by callers that have a clock.
    pub runtime_ms: Option<f64>,
}

/// Reproducible start vector with entries uniform in `[-1, 1]`.
pub fn random_start(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn residual(a: &impl Fn(&[f64], &mut [f64]), b: &[f64], x: &[f64], buf: &mut [f64]) -> f64 {
    a(x, buf);
    buf.iter_mut().zip(b).for_each(|(r, bi)| *r = bi - *r);
    norm2(buf)
}

/// Checks symmetry of `a` on random pairs; errors with the worst relative gap.
pub fn probe_symmetry(
    a: &impl Fn(&[f64], &mut [f64]),
    dim: usize,
    pairs: usize,
    seed: u64,
) -> Result<()> {
    let mut av = vec![0.0; dim];
    let mut aw = vec![0.0; dim];
    let mut worst: f64 = 0.0;
    for k in 0..pairs as u64 {
        let v = random_start(
            dim,
            seed ^ (0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(2 * k + 1)),
        );
        let w = random_start(
            dim,
            seed ^ (0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(2 * k + 2)),
        );
        a(&v, &mut av);
        a(&w, &mut aw);
        let scale = norm2(&av) * norm2(&w) + norm2(&v) * norm2(&aw);
        if scale > 0.0 {
            worst = worst.max((dot(&av, &w) - dot(&v, &aw)).abs() / scale);
        }
    }
    if worst > 1e-10 {
        return Err(Error::NotSymmetric(worst));
    }
    Ok(())
}

/// Solves `A x = b` from `x0`. `a` computes `y = A x`, `pinv` computes
/// `y = P⁻¹ x`. Returns the final iterate and the report; running out of
/// iterations is reported, not an error.
pub fn minres(
    a: impl Fn(&[f64], &mut [f64]),
    pinv: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: &[f64],
    cfg: &MinresConfig,
) -> Result<(Vec<f64>, MinresReport)> {
    cfg.validate()?;
    let n = b.len();
    if x0.len() != n {
        return Err(crate::error::dim_err(format!(
            "start vector of length {} for a system of dimension {n}",
            x0.len()
        )));
    }
    if cfg.symmetry_probes > 0 {
        probe_symmetry(&a, n, cfg.symmetry_probes, cfg.seed)?;
    }
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; n];
    let mut v = vec![0.0; n];
    let r0_true = residual(&a, b, &x, &mut v);
    let mut z = vec![0.0; n];
    pinv(&v, &mut z);
    let g2 = dot(&v, &z);
    if g2 < 0.0 {
        return Err(Error::NotPositiveDefinite {
            what: "preconditioner".into(),
            pivot: 0,
            value: g2,
        });
    }
    let mut gamma = libm::sqrt(g2);
    let mut report = MinresReport {
        iterations: 0,
        converged: r0_true == 0.0,
        residual_history: vec![gamma],
        true_residual_history: vec![(0, r0_true)],
        initial_residual: r0_true,
        final_true_relres: if r0_true == 0.0 { 0.0 } else { 1.0 },
        breakdown: false,
        runtime_ms: None,
    };
    if r0_true == 0.0 || gamma == 0.0 {
        return Ok((x, report));
    }
    let gamma1 = gamma;
    let mut gamma_prev = 1.0;
    let mut v_old = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut z_new = vec![0.0; n];
    let mut w_old = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut w_new = vec![0.0; n];
    let mut az = vec![0.0; n];
    let (mut c_old, mut c, mut s_old, mut s) = (1.0, 1.0, 0.0, 0.0);
    let mut eta = gamma;
    let mut check_below = cfg.rel_tol * gamma1;
    let mut true_rel = 1.0;

    for j in 1..=cfg.max_iter {
        z.iter_mut().for_each(|zi| *zi /= gamma);
        a(&z, &mut az);
        let delta = dot(&az, &z);
        for i in 0..n {
            v_new[i] = az[i] - (delta / gamma) * v[i] - (gamma / gamma_prev) * v_old[i];
        }
        pinv(&v_new, &mut z_new);
        let g2 = dot(&v_new, &z_new);
        if g2 < -1e-14 * gamma1 * gamma1 {
            return Err(Error::NotPositiveDefinite {
                what: "preconditioner".into(),
                pivot: j,
                value: g2,
            });
        }
        let gamma_new = libm::sqrt(g2.max(0.0));
        let a0 = c * delta - c_old * s * gamma;
        let a1 = libm::hypot(a0, gamma_new);
        let a2 = s * delta + c_old * c * gamma;
        let a3 = s_old * gamma;
        if a1 == 0.0 {
            report.breakdown = true;
            break;
        }
        let (c_new, s_new) = (a0 / a1, gamma_new / a1);
        for i in 0..n {
            w_new[i] = (z[i] - a3 * w_old[i] - a2 * w[i]) / a1;
            x[i] += c_new * eta * w_new[i];
        }
        eta *= -s_new;
        report.iterations = j;
        report.residual_history.push(eta.abs());

        let breakdown = gamma_new <= 1e-14 * gamma1;
        let periodic = cfg.check_true_residual_every > 0 && j % cfg.check_true_residual_every == 0;
        if breakdown || periodic || eta.abs() <= check_below {
            let r = residual(&a, b, &x, &mut buf);
            true_rel = r / r0_true;
            report.true_residual_history.push((j, r));
            if true_rel <= cfg.rel_tol && (eta.abs() <= check_below || breakdown) {
                report.converged = true;
                report.breakdown = breakdown;
                break;
            }
            if eta.abs() <= check_below {
                // estimate satisfied but the Euclidean residual is not yet small
                check_below = eta.abs() * (cfg.rel_tol / true_rel).min(0.5);
            }
        }
        if breakdown {
            report.breakdown = true;
            break;
        }

        core::mem::swap(&mut v_old, &mut v);
        core::mem::swap(&mut v, &mut v_new);
        core::mem::swap(&mut z, &mut z_new);
        core::mem::swap(&mut w_old, &mut w);
        core::mem::swap(&mut w, &mut w_new);
        gamma_prev = gamma;
        gamma = gamma_new;
        c_old = c;
        c = c_new;
        s_old = s;
        s = s_new;
    }
    if report.true_residual_history.last().map(|t| t.0) != Some(report.iterations) {
        let r = residual(&a, b, &x, &mut buf);
        true_rel = r / r0_true;
        report.true_residual_history.push((report.iterations, r));
    }
    report.final_true_relres = true_rel;
    report.converged = true_rel <= cfg.rel_tol;
    Ok((x, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::Mat;

    fn diag_op(d: Vec<f64>) -> impl Fn(&[f64], &mut [f64]) {
        move |x, y| {
            for i in 0..x.len() {
                y[i] = d[i] * x[i];
            }
        }
    }

    fn identity(x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }

    #[test]
    fn identity_system_takes_one_iteration() {
        let b = random_start(20, 1);
        let (x, r) = minres(identity, identity, &b, &[0.0; 20], &MinresConfig::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn perfect_preconditioner_takes_one_iteration() {
        let k = 12;
        let d: Vec<f64> = (1..=k).map(|i| i as f64).collect();
        let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
        let b = random_start(k, 2);
        let (_, r) = minres(
            diag_op(d),
            diag_op(inv),
            &b,
            &vec![0.0; k],
            &MinresConfig::default(),
        )
        .unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
    }

    #[test]
    fn distinct_eigenvalues_bound_iterations() {
        // indefinite diagonal with 4 distinct eigenvalues, rotated
        let k = 24;
        let vals = [-3.0, -0.5, 1.0, 7.0];
        let mut d = Mat::zeros(k, k);
        for i in 0..k {
            d[(i, i)] = vals[i % 4];
        }
        let g = Mat::from_fn(k, k, |i, j| libm::sin((i * k + j) as f64 + 0.3));
        let q = g.qr().q();
        let a = &q * d * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let op = move |x: &[f64], y: &mut [f64]| {
            let r = &a * nalgebra::DVector::from_column_slice(x);
            y.copy_from_slice(r.as_slice());
        };
        let b = random_start(k, 3);
        let (_, r) = minres(op, identity, &b, &vec![0.0; k], &MinresConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 4 + 2, "{}", r.iterations);
    }

    #[test]
    fn zero_residual_start_returns_immediately() {
        let b = vec![0.0; 5];
        let (_, r) = minres(identity, identity, &b, &[0.0; 5], &MinresConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }

    #[test]
    fn nonsymmetric_operator_is_rejected() {
        let op = |x: &[f64], y: &mut [f64]| {
            y[0] = x[0] + 2.0 * x[1];
            y[1] = x[1];
        };
        let err = minres(
            op,
            identity,
            &[1.0, 1.0],
            &[0.0, 0.0],
            &MinresConfig::default(),
        );
        assert!(matches!(err, Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        let k = 50;
        let d: Vec<f64> = (0..k)
            .map(|i| {
                if i % 2 == 0 {
                    1.0 + i as f64
                } else {
                    -(i as f64)
                }
            })
            .collect();
        let cfg = MinresConfig {
            max_iter: 3,
            ..Default::default()
        };
        let (_, r) = minres(
            diag_op(d),
            identity,
            &random_start(k, 5),
            &vec![0.0; k],
            &cfg,
        )
        .unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        assert!(r.final_true_relres > cfg.rel_tol);
    }

    #[test]
    fn random_start_properties() {
        let a = random_start(5000, 7);
        assert_eq!(a, random_start(5000, 7));
        let b = random_start(5000, 8);
        let differ = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        assert!(differ as f64 >= 0.99 * 5000.0);
        let ms = a.iter().map(|v| v * v).sum::<f64>() / 5000.0;
        assert!((0.2..=0.47).contains(&ms), "{ms}");
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_config() {
        let cfg = MinresConfig {
            rel_tol: 1.5,
            ..Default::default()
        };
        assert!(minres(identity, identity, &[1.0], &[0.0], &cfg).is_err());
    }
}
