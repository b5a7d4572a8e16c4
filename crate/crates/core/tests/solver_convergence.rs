use std::f64::consts::PI;

use convexmp::scenario::{builtin, Overrides, Scenario};
use convexmp::solver::{rhs_eval, run_scenario, Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn heat_error(h: f64) -> f64 {
    let s = Scenario::new(builtin("heat-interval").unwrap(), &Overrides { h: Some(h), ..Default::default() }).unwrap();
    let traj = run_scenario(&s.problem::<f64>().unwrap()).unwrap();
    let last = traj.snapshots.last().unwrap();
    assert!((last.t - 0.1).abs() < 1e-12);
    let decay = (-PI * PI * last.t).exp();
    (0..traj.grid.len())
        .map(|node| {
            let x = traj.grid.coords(node)[0];
            (last.values[node] - (0.5 + 0.4 * decay * (PI * x).sin())).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn heat_matches_the_exact_solution_at_second_order() {
    let coarse = heat_error(1.0 / 100.0);
    let fine = heat_error(1.0 / 200.0);
    assert!(fine <= 1e-3, "L∞ error {fine}");
    let ratio = coarse / fine;
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio} ({coarse} / {fine})");
}

#[test]
fn snapshots_are_evenly_spaced_and_steps_are_stable() {
    let s = Scenario::new(builtin("heat-interval").unwrap(), &Overrides::default()).unwrap();
    let traj = run_scenario(&s.problem::<f64>().unwrap()).unwrap();
    assert_eq!(traj.snapshots.len(), 51);
    for (i, f) in traj.snapshots.iter().enumerate() {
        assert!((f.t - 0.002 * i as f64).abs() < 1e-12);
    }
    // forward Euler on u_t = u_xx needs dt ≤ h²/2
    assert!(traj.max_dt() <= 0.5 * 0.01 * 0.01);
}

// Central differences are exact on quadratics, so the discrete right-hand
// side must equal the pointwise operator evaluated by hand.
#[test]
fn rhs_is_exact_on_quadratic_fields() {
    let s = Scenario::new(builtin("anisotropic-2d").unwrap(), &Overrides { h: Some(0.05), ..Default::default() }).unwrap();
    let grid: Grid<f64> = s.grid().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        // u_c = q0 + q1 x + q2 y + q3 x² + q4 xy + q5 y²
        let q: Vec<[f64; 6]> = (0..2).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        let t = rng.gen_range(0.0..1.0);
        let u = |c: usize, x: f64, y: f64| {
            let q = &q[c];
            q[0] + q[1] * x + q[2] * y + q[3] * x * x + q[4] * x * y + q[5] * y * y
        };
        let mut values = Vec::new();
        for node in 0..grid.len() {
            let p = grid.coords(node);
            values.push(u(0, p[0], p[1]));
            values.push(u(1, p[0], p[1]));
        }
        let field = Field { k: 2, t, values };
        let rhs = rhs_eval(&grid, &s.spec, &field).unwrap();
        for node in 0..grid.len() {
            let got = &rhs[2 * node..2 * node + 2];
            if grid.is_boundary(node) {
                assert_eq!(got, &[0.0, 0.0]);
                continue;
            }
            let p = grid.coords(node);
            let (x, y) = (p[0], p[1]);
            let (z1, z2) = (u(0, x, y), u(1, x, y));
            let mut want = [0.0; 2];
            let d = [1.0 + 0.5 * z2 * (1.0 - z2), 1.0 + z1 * (1.0 - z1)];
            let m1 = [0.2 + 0.4 * z2 * (1.0 - z2), 0.2];
            let m2 = [-0.1, -0.1 + 0.4 * z1 * (1.0 - z1)];
            let phi = [z1 * (1.0 - z1), -z2 * (1.0 - z2)];
            for c in 0..2 {
                let q = &q[c];
                let lap = 1.0 * 2.0 * q[3] + 2.0 * 0.3 * q[4] + 0.5 * 2.0 * q[5];
                let ux = q[1] + 2.0 * q[3] * x + q[4] * y;
                let uy = q[2] + q[4] * x + 2.0 * q[5] * y;
                want[c] = d[c] * lap + m1[c] * ux + m2[c] * uy + phi[c];
            }
            for c in 0..2 {
                assert!((got[c] - want[c]).abs() <= 1e-9 * (1.0 + want[c].abs()), "node {node}: {} vs {}", got[c], want[c]);
            }
        }
    }
}

#[test]
fn steady_affine_state_stays_put() {
    let mut file = builtin("heat-interval").unwrap();
    file.initial = vec!["0.2 + 0.6*x1".into()];
    file.boundary = vec!["0.2 + 0.6*x1".into()];
    let s = Scenario::new(file, &Overrides::default()).unwrap();
    let traj = run_scenario(&s.problem::<f64>().unwrap()).unwrap();
    let first = &traj.snapshots[0].values;
    for snap in &traj.snapshots {
        for (a, b) in snap.values.iter().zip(first) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn single_precision_tracks_double() {
    let s = Scenario::new(builtin("heat-interval").unwrap(), &Overrides { h: Some(0.05), ..Default::default() }).unwrap();
    let a = run_scenario(&s.problem::<f64>().unwrap()).unwrap();
    let b = run_scenario(&s.problem::<f32>().unwrap()).unwrap();
    let la = &a.snapshots.last().unwrap().values;
    let lb = &b.snapshots.last().unwrap().values;
    for (x, y) in la.iter().zip(lb) {
        assert!((x - *y as f64).abs() < 1e-4);
    }
}
