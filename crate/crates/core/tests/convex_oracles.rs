mod common;

use common::*;
use convexmp::convex::{ConvexBody, Contact};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn infimum_matches_slack_on_random_bodies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let k = 1 + i % 4;
        let body = random_body(&mut rng, k);
        let z = interior_point(&mut rng, &body, 0.0);
        let want = slack(&body, &z);
        let inf = body.infimum_over_functionals(&z).unwrap();
        let d = body.distance_to_boundary(&z).unwrap();
        assert!((inf - want).abs() <= 1e-10, "instance {i}: inf {inf} vs {want}");
        assert!((d - want).abs() <= 1e-10, "instance {i}: d {d} vs {want}");
    }
}

#[test]
fn selected_point_is_a_nearest_boundary_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..1000 {
        let k = 1 + i % 4;
        let body = random_body(&mut rng, k);
        let z = interior_point(&mut rng, &body, 1e-3);
        let c = body.nearest_boundary_point(&z).unwrap();
        let d = slack(&body, &z);
        assert!(slack(&body, &c.v).abs() <= 1e-10, "v off the boundary");
        assert!((dist(&z, &c.v) - d).abs() <= 1e-10);
        assert!((c.ell.value(&z) - d).abs() <= 1e-10);
        let n2: f64 = c.ell.nu.iter().map(|x| x * x).sum();
        assert!((n2 - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn projection_is_optimal_against_ray_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..40 {
        let k = 2 + i % 3;
        let body = random_body(&mut rng, k);
        let z = interior_point(&mut rng, &body, 1e-3);
        let d = body.distance_to_boundary(&z).unwrap();
        let w = ray_boundary_points(&mut rng, &body, &z, 10_000);
        let best = w.iter().map(|w| dist(&z, w)).fold(f64::INFINITY, f64::min);
        assert!(d <= best + 1e-6, "d {d} exceeds sampled {best}");
        assert!(best - d <= 0.25, "sampling far from d ({best} vs {d})");
    }
}

#[test]
fn three_dim_polytope_against_a_million_rays() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..3 {
        let body = random_polytope(&mut rng, 3, 8, false);
        let z = interior_point(&mut rng, &body, 0.05);
        let d = body.distance_to_boundary(&z).unwrap();
        let best = ray_boundary_points(&mut rng, &body, &z, 1_000_000)
            .iter()
            .map(|w| dist(&z, w))
            .fold(f64::INFINITY, f64::min);
        assert!((best - d).abs() <= 1e-3, "brute {best} vs {d}");
        assert!(d <= best + 1e-12);
    }
}

#[test]
fn selected_functional_supports_the_body() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for i in 0..60 {
        let k = 1 + i % 4;
        let body = random_body(&mut rng, k);
        let z = interior_point(&mut rng, &body, 1e-3);
        let c = body.nearest_boundary_point(&z).unwrap();
        let mut hits = 0;
        while hits < 10_000 {
            let y: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.6..2.6)).collect();
            if slack(&body, &y) >= 0.0 {
                hits += 1;
                assert!(c.ell.value(&y) >= -1e-9, "ℓ negative on K");
            }
        }
    }
}

#[test]
fn unique_contact_has_radial_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut seen = 0;
    for i in 0..400 {
        let k = 2 + i % 3;
        let body = random_body(&mut rng, k);
        let z = interior_point(&mut rng, &body, 1e-3);
        let c = body.nearest_boundary_point(&z).unwrap();
        if c.contact == Contact::Unique {
            seen += 1;
            let r = dist(&z, &c.v);
            for (n, (a, b)) in c.ell.nu.iter().zip(z.iter().zip(&c.v)) {
                assert!((n - (a - b) / r).abs() <= 1e-9);
            }
        }
    }
    assert!(seen > 300);
}

#[test]
fn ball_centre_is_a_continuum() {
    let body = ConvexBody::<f64>::ball(vec![0.5, -0.5], 2.0).unwrap();
    let c = body.nearest_boundary_point(&[0.5, -0.5]).unwrap();
    assert_eq!(c.contact, Contact::Continuum);
    assert!((c.dist - 2.0).abs() < 1e-15);
}

#[test]
fn exterior_points_are_rejected_but_signed_selection_works() {
    let body = ConvexBody::<f64>::boxed(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
    assert!(body.distance_to_boundary(&[1.5, 0.5]).is_err());
    let c = body.signed_selection(&[1.5, 0.5]).unwrap();
    assert!((c.dist + 0.5).abs() < 1e-15);
    assert!((c.ell.value(&[1.5, 0.5]) + 0.5).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn selection_is_deterministic(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = random_body(&mut rng, k);
        let z = interior_point(&mut rng, &body, 0.0);
        let a = body.nearest_boundary_point(&z).unwrap();
        let b = body.clone().nearest_boundary_point(&z.clone()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn distance_is_one_lipschitz(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = random_body(&mut rng, k);
        let z = interior_point(&mut rng, &body, 0.0);
        let y = interior_point(&mut rng, &body, 0.0);
        let dz = body.distance_to_boundary(&z).unwrap();
        let dy = body.distance_to_boundary(&y).unwrap();
        prop_assert!((dz - dy).abs() <= dist(&z, &y) + 1e-12);
    }
}
