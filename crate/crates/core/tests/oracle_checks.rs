mod common;

use std::collections::BTreeSet;

use common::{instance, rel_close, rng};
use nalgebra::DMatrix;
use polyads::enumeration::{enumerate_active_with, EnumerationConfig};
use polyads::estimator::{evaluate_moments, polyad_loss};
use polyads::oracle::{
    brute_active_polyads, brute_edge_scores, brute_incidence, brute_omega, brute_pair_covariance,
    brute_terms, shared_edges,
};
use polyads::variance::{
    covariance, edge_scores, omega_hat, omega_prime_hat, record_gradients, VarianceConfig,
};
use polyads::{build_incidence, enumerate_active, permutations, Polyad};
use proptest::prelude::*;
use rand::Rng;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn matrices_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b)
        .iter()
        .all(|v| v.abs() <= tol * max_abs(a).max(max_abs(b)).max(1.0))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(100) })]

    #[test]
    fn enumeration_matches_exhaustive_scan(seed in any::<u64>(), d in 2usize..=3) {
        let mut r = rng(seed);
        let (g, cov) = instance(&mut r, d, 4, 3, 1);
        let recs = enumerate_active(&g, &cov).unwrap();
        let fast: BTreeSet<Polyad> = recs.iter().map(|r| r.polyad.clone()).collect();
        prop_assert_eq!(fast.len(), recs.len());
        prop_assert_eq!(&fast, &brute_active_polyads(&g).unwrap());
        for rec in &recs {
            prop_assert!(rec.m_plus >= 1);
            prop_assert!(rec.is_canonical());
            let perms: Vec<Polyad> = permutations(&rec.polyad).into_iter().skip(1).map(|(p, _)| p).collect();
            prop_assert!(perms.iter().all(|p| !fast.contains(p)));
        }
    }

    #[test]
    fn even_order_loop_count_is_at_most_edges_squared(seed in any::<u64>(), d in prop::sample::select(vec![2usize, 4])) {
        let mut r = rng(seed);
        let max_dim = if d == 2 { 12 } else { 4 };
        let (g, cov) = instance(&mut r, d, max_dim, 3, 1);
        let e = enumerate_active_with(&g, &cov, &EnumerationConfig::default()).unwrap();
        let n = g.num_edges() as u64;
        prop_assert!(e.loop_count <= n * n, "{} > {}²", e.loop_count, n);
    }

    #[test]
    fn orbit_moments_match_the_conditional_law(seed in any::<u64>(), d in 2usize..=3, p in 1usize..=3) {
        let mut r = rng(seed);
        let (g, cov) = instance(&mut r, d, 3, 6, p);
        let beta: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
        for rec in enumerate_active(&g, &cov).unwrap().iter().take(20) {
            let t = brute_terms(&g, &rec.polyad, &cov, &beta).unwrap();
            let mp = evaluate_moments(rec, &beta, u64::MAX).unwrap();
            let loss = polyad_loss(rec, &beta).unwrap();
            prop_assert!(rel_close(loss, t.loss, 1e-12), "loss {} vs {}", loss, t.loss);
            prop_assert!(rel_close(mp.mu, t.mean, 1e-12), "mean {} vs {}", mp.mu, t.mean);
            prop_assert!(rel_close(mp.sigma2, t.variance, 1e-10), "variance {} vs {}", mp.sigma2, t.variance);
        }
    }

    #[test]
    fn variance_pieces_match_pair_sums(seed in any::<u64>(), d in 2usize..=3, p in 1usize..=2) {
        let mut r = rng(seed);
        let (g, cov) = instance(&mut r, d, 3, 3, p);
        let recs = enumerate_active(&g, &cov).unwrap();
        prop_assume!(!recs.is_empty());
        let beta: Vec<f64> = (0..p).map(|_| r.random_range(-0.5..0.5)).collect();
        let grads = record_gradients(&recs, &beta, u64::MAX).unwrap();
        let polyads: Vec<Polyad> = recs.iter().map(|r| r.polyad.clone()).collect();
        let inc = build_incidence(&recs);

        let brute_inc = brute_incidence(&polyads).unwrap();
        prop_assert_eq!(inc.len(), brute_inc.len());
        for (key, partners) in inc.iter() {
            let mut ours: Vec<_> = partners.iter().map(|e| (e.partner.clone(), e.record)).collect();
            ours.sort();
            prop_assert_eq!(&ours, &brute_inc[key]);
        }

        let scores = edge_scores(&inc, &grads, p);
        let brute_scores = brute_edge_scores(&polyads, &grads).unwrap();
        for (key, s) in &scores {
            for (a, b) in s.iter().zip(&brute_scores[key]) {
                prop_assert!(rel_close(*a, *b, 1e-12));
            }
        }
        let om = omega_hat(&scores, p);
        prop_assert!(matrices_close(&om, &brute_omega(&polyads, &grads, p).unwrap(), 1e-10));
        let (omp, touches) = omega_prime_hat(&inc, &grads, p, u128::MAX).unwrap();
        prop_assert!(matrices_close(&omp, &brute_pair_covariance(&polyads, &grads, p).unwrap(), 1e-10));
        prop_assert_eq!(touches as u128, inc.pair_work());
        prop_assert!(matrices_close(&om, &om.transpose(), 1e-12));
        prop_assert!(matrices_close(&omp, &omp.transpose(), 1e-12));
        for _ in 0..5 {
            let x = nalgebra::DVector::from_fn(p, |_, _| r.random_range(-1.0..1.0));
            prop_assert!((x.transpose() * &om * &x)[(0, 0)] >= -1e-10);
        }
    }

    #[test]
    fn covariance_counters_and_symmetry(seed in any::<u64>(), d in 2usize..=3) {
        let mut r = rng(seed);
        let (g, cov) = instance(&mut r, d, 4, 4, 2);
        let recs = enumerate_active(&g, &cov).unwrap();
        let inc = build_incidence(&recs);
        let Ok(c) = covariance(&recs, &inc, &[0.2, -0.1], &VarianceConfig::default()) else {
            return Ok(());
        };
        prop_assert_eq!(c.omega_touches as usize, recs.len() << d);
        prop_assert_eq!(c.omega_prime_touches as u128, inc.pair_work());
        for m in [&c.sigma_hat, c.sigma_prime_hat.as_ref().unwrap(), &c.gamma_hat] {
            prop_assert!(matrices_close(m, &m.transpose(), 1e-12));
        }
        prop_assert!(c.sigma_hat.diagonal().iter().all(|v| *v >= 0.0));
    }
}

/// Without edge-sharing between distinct classes, `Ω̂ − Ω̂′` reduces to the
/// within-class terms `(2^{3D} − 2^{2D}) Σ g gᵀ`.
#[test]
fn isolated_polyads_differ_only_by_within_class_terms() {
    let mut checked = 0;
    for seed in 0..400u64 {
        let mut r = rng(seed);
        let d = if seed % 2 == 0 { 2 } else { 3 };
        let (g, cov) = instance(&mut r, d, 4, 3, 1);
        let recs = enumerate_active(&g, &cov).unwrap();
        let isolated = recs.iter().enumerate().all(|(a, x)| {
            recs[a + 1..]
                .iter()
                .all(|y| shared_edges(&x.polyad, &y.polyad) < 2)
        });
        if !isolated || recs.is_empty() {
            continue;
        }
        let grads = record_gradients(&recs, &[0.3], u64::MAX).unwrap();
        let inc = build_incidence(&recs);
        let om = omega_hat(&edge_scores(&inc, &grads, 1), 1)[(0, 0)];
        let omp = omega_prime_hat(&inc, &grads, 1, u128::MAX).unwrap().0[(0, 0)];
        let within: f64 = grads.iter().map(|v| v[0] * v[0]).sum();
        let factor = (1u64 << (3 * d)) as f64 - (1u64 << (2 * d)) as f64;
        assert!(rel_close(om - omp, factor * within, 1e-10), "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} isolated instances");
}
