//! Instance generators and brute-force oracles shared by the integration
//! tests. Nothing here calls the projection or selection code under test.
#![allow(dead_code)]

use convexmp::convex::ConvexBody;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn unit(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn random_polytope(rng: &mut ChaCha8Rng, k: usize, facets: usize, boxed: bool) -> ConvexBody<f64> {
    let mut normals = Vec::new();
    let mut offsets = Vec::new();
    for _ in 0..facets {
        normals.push(unit(rng, k));
        offsets.push(-rng.gen_range(0.3..2.0));
    }
    if boxed {
        for i in 0..k {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; k];
                e[i] = s;
                normals.push(e);
                offsets.push(-2.5);
            }
        }
    }
    ConvexBody::hpolytope(normals, offsets).expect("origin is interior")
}

pub fn random_ball(rng: &mut ChaCha8Rng, k: usize) -> ConvexBody<f64> {
    let c: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.3..0.3)).collect();
    ConvexBody::ball(c, rng.gen_range(0.5..2.0)).unwrap()
}

/// A polytope, ball or intersection containing the origin in its interior.
pub fn random_body(rng: &mut ChaCha8Rng, k: usize) -> ConvexBody<f64> {
    match rng.gen_range(0..3) {
        0 => {
            let m = rng.gen_range(k + 1..k + 7);
            let boxed = rng.gen_bool(0.5);
            random_polytope(rng, k, m, boxed)
        }
        1 => random_ball(rng, k),
        _ => {
            let m = rng.gen_range(1..k + 4);
            let p = random_polytope(rng, k, m, false);
            let b = random_ball(rng, k);
            ConvexBody::intersection(vec![p, b]).unwrap()
        }
    }
}

/// Distance to the boundary for an interior point by the slack formula;
/// negative outside.
pub fn slack(body: &ConvexBody<f64>, z: &[f64]) -> f64 {
    match body {
        ConvexBody::HPolytope(p) => p
            .facets()
            .iter()
            .map(|f| f.normal.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() - f.offset)
            .fold(f64::INFINITY, f64::min),
        ConvexBody::Ball(b) => b.radius - z.iter().zip(&b.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt(),
        ConvexBody::Intersection { members, .. } => members.iter().map(|m| slack(m, z)).fold(f64::INFINITY, f64::min),
    }
}

/// Where the ray `z + s·dir` (s > 0) leaves the body, for `z` inside.
pub fn ray_exit(body: &ConvexBody<f64>, z: &[f64], dir: &[f64]) -> Option<f64> {
    match body {
        ConvexBody::HPolytope(p) => p
            .facets()
            .iter()
            .filter_map(|f| {
                let rate: f64 = f.normal.iter().zip(dir).map(|(a, b)| a * b).sum();
                let s0: f64 = f.normal.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() - f.offset;
                (rate < 0.0).then(|| s0 / -rate)
            })
            .reduce(f64::min),
        ConvexBody::Ball(b) => {
            let w: Vec<f64> = z.iter().zip(&b.center).map(|(a, c)| a - c).collect();
            let wd: f64 = w.iter().zip(dir).map(|(a, b)| a * b).sum();
            let ww: f64 = w.iter().map(|a| a * a).sum();
            Some(-wd + (wd * wd - ww + b.radius * b.radius).sqrt())
        }
        ConvexBody::Intersection { members, .. } => members.iter().filter_map(|m| ray_exit(m, z, dir)).reduce(f64::min),
    }
}

/// Boundary points hit by `count` random rays from interior `z`.
pub fn ray_boundary_points(rng: &mut ChaCha8Rng, body: &ConvexBody<f64>, z: &[f64], count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .filter_map(|_| {
            let d = unit(rng, z.len());
            ray_exit(body, z, &d).map(|s| z.iter().zip(&d).map(|(a, b)| a + s * b).collect())
        })
        .collect()
}

/// A random interior point with slack at least `margin`.
pub fn interior_point(rng: &mut ChaCha8Rng, body: &ConvexBody<f64>, margin: f64) -> Vec<f64> {
    let k = body.dim();
    loop {
        let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.5..2.5)).collect();
        if slack(body, &z) > margin {
            return z;
        }
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
