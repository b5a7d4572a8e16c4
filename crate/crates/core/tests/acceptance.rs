//! Acceptance suite. Runs as a plain binary and prints one line per criterion.

mod common;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use convexmp::harness::{CoefficientFields, DistanceField};
use convexmp::linalg::Mat;
use convexmp::pipeline::{run_command, Command, Format, Outcome};
use convexmp::scenario::{builtin, load_scenario, Overrides, Scenario};
use convexmp::solver::{run_scenario, Grid};
use convexmp::viscosity::{supersolution_check, TouchOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const COMPATIBLE: [&str; 5] = ["heat-interval", "ball-sink", "simplex-face", "anisotropic-2d", "instant-detachment"];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn num(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for p in path {
        cur = &cur[*p];
    }
    cur.as_f64().unwrap_or_else(|| panic!("missing number at {path:?}"))
}

/// Pipeline outcomes keyed by (scenario, h override), computed once.
#[derive(Default)]
struct Runs {
    cache: HashMap<(String, Option<u64>, Command), Outcome>,
}

impl Runs {
    fn get(&mut self, name: &str, h: Option<f64>, command: Command) -> &Outcome {
        let key = (name.to_string(), h.map(f64::to_bits), command);
        self.cache.entry(key).or_insert_with(|| {
            let dir = tempfile::tempdir().expect("temp dir");
            let s = load_scenario(name, &Overrides { h, ..Default::default() }).expect("scenario");
            run_command(command, &s, dir.path(), Format::Json).unwrap_or_else(|e| panic!("{name}: {e}"))
        })
    }
}

fn nearest_point_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_eq: f64 = 0.0;
    let mut worst_opt: f64 = f64::NEG_INFINITY;
    for i in 0..1000 {
        let k = 1 + i % 4;
        let body = random_body(&mut rng, k);
        let z = interior_point(&mut rng, &body, 1e-6);
        let inf = body.infimum_over_functionals(&z).unwrap();
        let d = body.distance_to_boundary(&z).unwrap();
        worst_eq = worst_eq.max((inf - d).abs());
        let best = ray_boundary_points(&mut rng, &body, &z, 10_000)
            .iter()
            .map(|w| dist(&z, w))
            .fold(f64::INFINITY, f64::min);
        worst_opt = worst_opt.max(d - best);
    }
    verdict(
        worst_eq <= 1e-10 && worst_opt <= 1e-3,
        format!("max |inf ℓ - d| = {worst_eq:.2e}, max (d - sampled min) = {worst_opt:.2e}"),
    )
}

fn heat_error(h: f64) -> f64 {
    let s = Scenario::new(builtin("heat-interval").unwrap(), &Overrides { h: Some(h), ..Default::default() }).unwrap();
    let traj = run_scenario(&s.problem::<f64>().unwrap()).unwrap();
    let last = traj.snapshots.last().unwrap();
    let decay = (-PI * PI * last.t).exp();
    (0..traj.grid.len())
        .map(|n| (last.values[n] - (0.5 + 0.4 * decay * (PI * traj.grid.coords(n)[0]).sin())).abs())
        .fold(0.0, f64::max)
}

fn solver_benchmark() -> Verdict {
    let coarse = heat_error(0.01);
    let fine = heat_error(0.005);
    let ratio = coarse / fine;
    verdict(fine <= 1e-3 && (3.0..=5.0).contains(&ratio), format!("L∞ error {fine:.3e} at h=1/200, ratio {ratio:.3}"))
}

fn weak_mp(runs: &mut Runs) -> Verdict {
    let mut detail = Vec::new();
    let mut pass = true;
    for name in ["heat-interval", "ball-sink", "simplex-face", "anisotropic-2d"] {
        let r = runs.get(name, None, Command::VerifyMp).report("weak_mp").unwrap();
        let w = num(r, &["worst_signed_distance", "value"]);
        pass &= r["status"] == "pass" && w >= -1e-8;
        detail.push(format!("{name} {w:.2e}"));
    }
    let r = runs.get("incompatible-sink", None, Command::VerifyMp).report("weak_mp").unwrap();
    let w = num(r, &["worst_signed_distance", "value"]);
    pass &= r["status"] == "fail" && w <= -0.05;
    detail.push(format!("incompatible-sink {w:.3}"));
    verdict(pass, format!("worst signed distance: {}", detail.join(", ")))
}

fn strong_mp(runs: &mut Runs) -> Verdict {
    let face = runs.get("simplex-face", None, Command::VerifyMp).report("strong_mp").unwrap().clone();
    let face_ok = face["status"] == "pass"
        && face["touch"]["snapshot"] == 1
        && num(&face, &["touch", "value"]) <= 1e-8
        && num(&face, &["flat_worst", "value"]) <= 1e-8;
    let heat = runs.get("heat-interval", None, Command::VerifyMp).report("strong_mp").unwrap().clone();
    let heat_margin = num(&heat, &["margin", "value"]);
    let heat_ok = heat["touch"].is_null() && heat_margin >= 0.09;
    let det = runs.get("instant-detachment", None, Command::VerifyMp).report("strong_mp").unwrap().clone();
    let det_margin = num(&det, &["margin", "value"]);
    let det_ok = det["touch"].is_null() && det_margin > 0.0;
    verdict(
        face_ok && heat_ok && det_ok,
        format!(
            "simplex-face touches at snapshot {} (flat {:.1e}); heat margin {heat_margin:.4}; detachment margin {det_margin:.2e}",
            face["touch"]["snapshot"],
            num(&face, &["flat_worst", "value"])
        ),
    )
}

fn coefficients(runs: &mut Runs) -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for name in COMPATIBLE {
        let out = runs.get(name, Some(0.01), Command::All);
        let c = &out.report("ell_residuals").unwrap()["coefficients"];
        let floor = num(out.report("compat").unwrap(), &["min_d_floor"]);
        let mu = num(c, &["min_mu"]);
        let ok = num(c, &["min_gamma"]) >= 0.0
            && mu >= floor - 1e-8
            && mu >= num(c, &["min_d_floor_at_contacts"]) - 1e-8
            && num(c, &["min_alpha_floor"]) > 0.0
            && num(c, &["alpha_scaling_gap"]) >= -1e-10;
        pass &= ok;
        detail.push(format!("{name} μ̃≥{mu:.3}"));
    }
    verdict(pass, detail.join(", "))
}

fn ell_pde(runs: &mut Runs) -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for name in COMPATIBLE {
        let r = runs.get(name, Some(0.01), Command::All).report("ell_residuals").unwrap();
        let m = num(r, &["min_residual", "value"]);
        pass &= r["pass"] == true && m >= -num(r, &["tol"]);
        detail.push(format!("{name} {m:.2e}"));
    }
    let r = runs.get("incompatible-sink", Some(0.01), Command::All).report("ell_residuals").unwrap();
    let m = num(r, &["min_residual", "value"]);
    pass &= m <= -0.5;
    detail.push(format!("incompatible-sink {m:.3}"));
    verdict(pass, format!("min residual: {}", detail.join(", ")))
}

fn viscosity(runs: &mut Runs) -> Verdict {
    let mut pass = true;
    let mut fewest = usize::MAX;
    for name in COMPATIBLE {
        let r = runs.get(name, Some(0.01), Command::All).report("supersolution").unwrap();
        let attempted = r["min_attempted_per_node"].as_u64().unwrap() as usize;
        fewest = fewest.min(attempted);
        pass &= r["pass"] == true && r["nodes_checked"].as_u64().unwrap() > 0 && attempted >= 100;
    }
    // d̄ = −t on a 1D grid with the heat coefficients
    let grid = Grid::<f64>::with_spacing(&[0.0], &[1.0], 0.05).unwrap();
    let times: Vec<f64> = (0..6).map(|j| 0.01 * j as f64).collect();
    let values = times.iter().map(|&t| vec![-t; grid.len()]).collect();
    let field = DistanceField::from_values(grid.clone(), times, values);
    let coeffs = CoefficientFields::uniform(&grid, 6, Mat::identity(1), vec![0.0], 0.0);
    let r = supersolution_check(&field, &coeffs, 1e-6, &TouchOptions::default());
    let worst = r.worst.as_ref().map_or(f64::INFINITY, |w| w.value);
    pass &= !r.pass && worst <= -0.9;
    verdict(pass, format!("no violation on compatible scenarios, fewest attempts {fewest}; d̄=-t gives R={worst:.3}"))
}

fn compatibility(runs: &mut Runs) -> Verdict {
    let ball = runs.get("ball-sink", None, Command::CheckCompat).report("compat").unwrap().clone();
    let phi = num(&ball, &["worst_phi_deficit", "value"]);
    let boxed = runs.get("coupled-box", None, Command::CheckCompat).report("compat").unwrap().clone();
    let res = num(&boxed, &["worst_d_residual", "value"]);
    let nu: Vec<f64> = boxed["worst_d_residual"]["nu"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let axis = nu.iter().filter(|x| x.abs() == 1.0).count() == 1 && nu.iter().filter(|x| **x == 0.0).count() == nu.len() - 1;
    verdict(
        ball["pass"] == true && phi >= 1.0 - 1e-9 && boxed["pass"] == false && res >= 0.5 - 1e-9 && axis,
        format!("ball-sink min φ·ν {phi:.12}; coupled-box D residual {res:.12} at ν={nu:?}"),
    )
}

fn snapshot_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn determinism() -> Verdict {
    let mut pass = true;
    let mut files = 0;
    for name in ["ball-sink", "anisotropic-2d", "incompatible-sink"] {
        let mut outputs = Vec::new();
        for threads in [1, 4, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let dir = tempfile::tempdir().unwrap();
            let s = load_scenario(name, &Overrides { h: Some(1.0 / 25.0), ..Default::default() }).unwrap();
            pool.install(|| run_command(Command::All, &s, dir.path(), Format::Json)).unwrap();
            outputs.push(snapshot_dir(dir.path()));
        }
        files += outputs[0].len();
        pass &= outputs.windows(2).all(|w| w[0] == w[1]);
    }
    verdict(pass, format!("{files} files identical across 1/4/4 threads"))
}

fn main() {
    let mut runs = Runs::default();
    type Check<'a> = Box<dyn FnMut(&mut Runs) -> Verdict + 'a>;
    let criteria: Vec<(&str, Option<Duration>, Check)> = vec![
        ("nearest-point distance", Some(Duration::from_secs(30)), Box::new(|_| nearest_point_suite())),
        ("solver benchmark", Some(Duration::from_secs(60)), Box::new(|_| solver_benchmark())),
        ("weak maximum principle", Some(Duration::from_secs(120)), Box::new(weak_mp)),
        ("strong maximum principle", Some(Duration::from_secs(60)), Box::new(strong_mp)),
        ("coefficient contracts", None, Box::new(coefficients)),
        ("ℓ residual inequality", None, Box::new(ell_pde)),
        ("viscosity supersolution", None, Box::new(viscosity)),
        ("compatibility checker", None, Box::new(compatibility)),
        ("determinism", None, Box::new(|_| determinism())),
    ];
    let mut failed = 0;
    let mut err = std::io::stderr().lock();
    for (i, (name, limit, mut check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let v = check(&mut runs);
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        let limit = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
        let _ = writeln!(
            err,
            "criterion {} {:<26} {}  [{:.1}s{}]  {}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit,
            v.detail
        );
    }
    let _ = writeln!(err, "acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
