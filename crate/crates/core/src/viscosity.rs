//! The two inequality layers satisfied by `d̄`: the smooth inequality for
//! `ℓ̄ = ν·(u − v)` at each nice quadruple, and the viscosity-supersolution
//! property probed with quadratic test functions touching `d̄` from below.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex::{ConvexBody, ConvexError, SupportingFunctional};
use crate::harness::{CoefficientFields, DistanceField, NodeCoefficients};
use crate::linalg::Mat;
use crate::scalar::{dot, norm, to_f64_vec, Real};
use crate::solver::{jet, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct NiceQuadruple<T> {
    pub node: usize,
    pub x: Vec<T>,
    pub t: T,
    pub v: Vec<T>,
    pub ell: SupportingFunctional<T>,
}

/// The selected `(v, ℓ)` at `u(node)` in snapshot `snapshot`; `u ∉ K` is a
/// domain error.
pub fn nice_quadruple<T: Real>(
    traj: &Trajectory<T>,
    body: &ConvexBody<T>,
    snapshot: usize,
    node: usize,
) -> Result<NiceQuadruple<T>, ConvexError> {
    let snap = &traj.snapshots[snapshot];
    let c = body.nearest_boundary_point(snap.at(node))?;
    Ok(NiceQuadruple { node, x: traj.grid.coords(node), t: snap.t, v: c.v, ell: c.ell })
}

/// `10·(h² + Δt)·scale` with `Δt` the snapshot spacing and `scale` the largest
/// second-difference magnitude of `u` over interior nodes and snapshots.
pub fn default_tolerance<T: Real>(traj: &Trajectory<T>) -> f64 {
    let grid = &traj.grid;
    let (n, k) = (grid.n(), traj.k());
    let h2 = (0..n).map(|i| grid.h(i).as_f64().powi(2)).fold(0.0, f64::max);
    let scale = traj
        .snapshots
        .iter()
        .map(|s| {
            grid.interior_nodes()
                .iter()
                .map(|&node| {
                    let j = jet(grid, &s.values, k, node);
                    let mut m = 0.0f64;
                    for a in 0..n {
                        for b in 0..n {
                            m = m.max(norm(j.d2u(a, b, n, k)).as_f64());
                        }
                    }
                    m
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    10.0 * (h2 + traj.snapshot_interval) * scale + 1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualLocation {
    pub value: f64,
    pub snapshot: usize,
    pub t: f64,
    pub node: usize,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub nu: Vec<f64>,
    pub ell: f64,
}

/// Residuals per snapshot per node; `None` at boundary nodes and at the first
/// and last snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField<T> {
    pub values: Vec<Vec<Option<T>>>,
    pub worst: Option<ResidualLocation>,
    /// Checked nodes whose state lies outside `K`; the signed selection is used there.
    pub exterior_nodes: usize,
    pub checked: usize,
}

/// `ℓ̄_t − μ̃Σaᵢⱼℓ̄ᵢⱼ − Σλ̃ᵢℓ̄ᵢ + γℓ̄` with `(v, ν)` frozen at each node. Since
/// `ℓ̄` is affine in `u`, its differences are `ν` applied to those of `u`.
pub fn ell_residuals<T: Real>(traj: &Trajectory<T>, field: &DistanceField<T>, coeffs: &CoefficientFields<T>) -> ResidualField<T> {
    let grid = &traj.grid;
    let (n, k) = (grid.n(), traj.k());
    let choices = field.choices.as_ref().expect("distance field from a trajectory");
    let snaps = traj.snapshots.len();
    let mut values = vec![vec![None; grid.len()]; snaps];
    let mut worst: Option<(T, usize, usize)> = None;
    let (mut exterior, mut checked) = (0, 0);
    for j in 1..snaps.saturating_sub(1) {
        let (prev, cur, next) = (&traj.snapshots[j - 1], &traj.snapshots[j], &traj.snapshots[j + 1]);
        let span = next.t - prev.t;
        let row: Vec<(usize, T, bool)> = grid
            .interior_nodes()
            .par_iter()
            .map(|&node| {
                let ch = &choices[j][node];
                let c = coeffs.at(j, node).expect("interior coefficients");
                let nu = &ch.ell.nu;
                let ell = ch.ell.value(cur.at(node));
                let du: Vec<T> = (0..k).map(|c| (next.at(node)[c] - prev.at(node)[c]) / span).collect();
                let jt = jet(grid, &cur.values, k, node);
                let mut r = dot(nu, &du) + c.gamma * ell;
                for a in 0..n {
                    r -= c.lambda[a] * dot(nu, jt.du(a, k));
                    for b in 0..n {
                        r -= c.alpha[(a, b)] * dot(nu, jt.d2u(a, b, n, k));
                    }
                }
                (node, r, ch.dist < T::zero())
            })
            .collect();
        for (node, r, outside) in row {
            values[j][node] = Some(r);
            checked += 1;
            exterior += outside as usize;
            if worst.is_none_or(|(w, _, _)| r < w) {
                worst = Some((r, j, node));
            }
        }
    }
    let worst = worst.map(|(r, j, node)| {
        let ch = &choices[j][node];
        ResidualLocation {
            value: r.as_f64(),
            snapshot: j,
            t: traj.snapshots[j].t.as_f64(),
            node,
            x: to_f64_vec(&grid.coords(node)),
            v: to_f64_vec(&ch.v),
            nu: to_f64_vec(&ch.ell.nu),
            ell: ch.ell.value(traj.snapshots[j].at(node)).as_f64(),
        }
    });
    ResidualField { values, worst, exterior_nodes: exterior, checked }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllReport {
    pub check: String,
    pub pass: bool,
    pub tol: f64,
    pub nodes_checked: usize,
    pub exterior_nodes: usize,
    pub min_residual: Option<ResidualLocation>,
}

pub fn ell_report<T: Real>(residuals: &ResidualField<T>, tol: f64) -> EllReport {
    EllReport {
        check: "ell_residuals".into(),
        pass: residuals.worst.as_ref().is_none_or(|w| w.value >= -tol),
        tol,
        nodes_checked: residuals.checked,
        exterior_nodes: residuals.exterior_nodes,
        min_residual: residuals.worst.clone(),
    }
}

/// Residual of the unrelaxed discrete jet of `d̄`: central differences in space
/// and time plugged into `p_t − Σαᵢⱼ Hᵢⱼ − Σβᵢgᵢ + γd̄`.
pub fn jet_residual<T: Real>(field: &DistanceField<T>, coeffs: &NodeCoefficients<T>, snapshot: usize, node: usize) -> T {
    let j = DiscreteJet::at(field, snapshot, node);
    evaluate(coeffs, j.pt, &j.g, &j.hess, field.values[snapshot][node])
}

fn evaluate<T: Real>(c: &NodeCoefficients<T>, pt: T, g: &[T], hess: &Mat<T>, d: T) -> T {
    let n = g.len();
    let mut r = pt + c.gamma * d;
    for a in 0..n {
        r -= c.lambda[a] * g[a];
        for b in 0..n {
            r -= c.alpha[(a, b)] * hess[(a, b)];
        }
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Origin {
    /// Discrete jet with Hessian lowered by `relaxation·I`.
    Jet { relaxation: f64 },
    Random,
}

/// `ψ(x,t) = p₀ + p_tτ + ½p_ttτ² + τ g_t·ξ + g·ξ + ½ξᵀHξ` with `τ = t − t̂`,
/// `ξ = x − x̂`.
///
/// `p_tt = min(0, second time difference of d̄)` and `g_t` is the mixed
/// space-time difference of `d̄`. Neither enters the residual; `p_tt` lets ψ
/// touch where `d̄` is concave in time while pinning `p_t` to the central
/// difference there, and `g_t` keeps the diagonal stencil points from forcing
/// a large Hessian relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct TouchingQuadratic<T> {
    pub snapshot: usize,
    pub node: usize,
    pub p0: T,
    pub pt: T,
    pub ptt: T,
    pub gt: Vec<T>,
    pub g: Vec<T>,
    pub hess: Mat<T>,
    pub radius: usize,
    pub origin: Origin,
}

impl<T: Real> TouchingQuadratic<T> {
    pub fn value(&self, dx: &[T], dt: T) -> T {
        let mut q = T::zero();
        for a in 0..dx.len() {
            for b in 0..dx.len() {
                q += dx[a] * self.hess[(a, b)] * dx[b];
            }
        }
        self.p0 + self.pt * dt + T::lit(0.5) * self.ptt * dt * dt + dt * dot(&self.gt, dx) + dot(&self.g, dx) + T::lit(0.5) * q
    }

    /// Direct re-check of `ψ ≤ d̄ + slack` over the space-time stencil.
    pub fn touches(&self, field: &DistanceField<T>, slack: T) -> bool {
        let grid = &field.grid;
        let r = self.radius as isize;
        let x0 = grid.coords(self.node);
        let t0 = field.times[self.snapshot];
        let ry = if grid.n() == 2 { r } else { 0 };
        for tau in -1isize..=1 {
            let j = self.snapshot as isize + tau;
            if j < 0 || j as usize >= field.values.len() {
                continue;
            }
            let j = j as usize;
            for ox in -r..=r {
                for oy in -ry..=ry {
                    if let Some(nb) = grid.offset(self.node, [ox, oy]) {
                        let dx: Vec<T> = grid.coords(nb).iter().zip(&x0).map(|(a, b)| *a - *b).collect();
                        if self.value(&dx, field.times[j] - t0) > field.values[j][nb] + slack {
                            return false;
                        }
                    }
                }
            }
        }
        self.p0 == field.values[self.snapshot][self.node]
    }
}

struct DiscreteJet<T> {
    pt: T,
    ptt: T,
    gt: Vec<T>,
    g: Vec<T>,
    hess: Mat<T>,
    /// `p_t` interval compatible with `ptt` at the time neighbours, then the
    /// one-sided slope range along each axis.
    ranges: Vec<(T, T)>,
}

impl<T: Real> DiscreteJet<T> {
    fn at(field: &DistanceField<T>, snapshot: usize, node: usize) -> Self {
        let grid = &field.grid;
        let n = grid.n();
        let d = &field.values;
        let (tp, t0, tn) = (field.times[snapshot - 1], field.times[snapshot], field.times[snapshot + 1]);
        let bwd = (d[snapshot][node] - d[snapshot - 1][node]) / (t0 - tp);
        let fwd = (d[snapshot + 1][node] - d[snapshot][node]) / (tn - t0);
        let pt = (d[snapshot + 1][node] - d[snapshot - 1][node]) / (tn - tp);
        let half = T::lit(0.5);
        let ptt = (T::lit(2.0) * (fwd - bwd) / (tn - tp)).min(T::zero());
        let jt = jet(grid, &d[snapshot], 1, node);
        let mut hess = Mat::zeros(n, n);
        let mut ranges = vec![(bwd + half * ptt * (t0 - tp), fwd - half * ptt * (tn - t0))];
        let mut gt = vec![T::zero(); n];
        for a in 0..n {
            for b in 0..n {
                hess[(a, b)] = jt.d2u(a, b, n, 1)[0];
            }
            let mut e = [0isize; 2];
            e[a] = 1;
            let up = d[snapshot][grid.offset(node, e).expect("interior node")];
            e[a] = -1;
            let dn = d[snapshot][grid.offset(node, e).expect("interior node")];
            let h = grid.h(a);
            let (f, b) = ((up - d[snapshot][node]) / h, (d[snapshot][node] - dn) / h);
            ranges.push((f.min(b), f.max(b)));
            let (iu, id) = (grid.offset(node, e.map(|o| -o)).expect("interior node"), grid.offset(node, e).expect("interior node"));
            let slope = |j: usize| (d[j][iu] - d[j][id]) / (T::lit(2.0) * h);
            gt[a] = (slope(snapshot + 1) - slope(snapshot - 1)) / (tn - tp);
        }
        Self { pt, ptt, gt, g: jt.first, hess, ranges }
    }
}

/// Stencil points as `(dx, dt, d̄)` relative to the base point.
struct Stencil<T> {
    points: Vec<([T; 2], T, T)>,
    base: T,
    ptt: T,
    gt: Vec<T>,
}

impl<T: Real> Stencil<T> {
    fn new(field: &DistanceField<T>, jet: &DiscreteJet<T>, snapshot: usize, node: usize, radius: usize) -> Self {
        let grid = &field.grid;
        let r = radius as isize;
        let ry = if grid.n() == 2 { r } else { 0 };
        let x0 = grid.coords(node);
        let t0 = field.times[snapshot];
        let mut points = Vec::new();
        for tau in -1isize..=1 {
            let j = (snapshot as isize + tau) as usize;
            for ox in -r..=r {
                for oy in -ry..=ry {
                    if (tau, ox, oy) == (0, 0, 0) {
                        continue;
                    }
                    if let Some(nb) = grid.offset(node, [ox, oy]) {
                        let x = grid.coords(nb);
                        let mut dx = [T::zero(); 2];
                        for (a, slot) in dx.iter_mut().enumerate().take(x.len()) {
                            *slot = x[a] - x0[a];
                        }
                        points.push((dx, field.times[j] - t0, field.values[j][nb]));
                    }
                }
            }
        }
        Self { points, base: field.values[snapshot][node], ptt: jet.ptt, gt: jet.gt.clone() }
    }

    fn quad(hess: &Mat<T>, dx: &[T; 2]) -> T {
        let n = hess.rows();
        let mut q = T::zero();
        for a in 0..n {
            for b in 0..n {
                q += dx[a] * hess[(a, b)] * dx[b];
            }
        }
        T::lit(0.5) * q
    }

    fn time_part(&self, pt: T, dt: T, dx: &[T; 2]) -> T {
        let mixed: T = self.gt.iter().zip(dx).map(|(a, b)| *a * *b).sum();
        pt * dt + T::lit(0.5) * self.ptt * dt * dt + dt * mixed
    }

    fn touches(&self, pt: T, g: &[T], hess: &Mat<T>, slack: T) -> bool {
        self.points.iter().all(|(dx, dt, d)| {
            let lin: T = g.iter().zip(dx).map(|(a, b)| *a * *b).sum();
            self.base + self.time_part(pt, *dt, dx) + lin + Self::quad(hess, dx) <= *d + slack
        })
    }

    /// Smallest `δ ≥ 0` with `H − δI` touching, given `p_t` and `g`.
    fn relaxation(&self, pt: T, g: &[T], hess: &Mat<T>, slack: T) -> Option<T> {
        let mut delta = T::zero();
        for (dx, dt, d) in &self.points {
            let lin: T = g.iter().zip(dx).map(|(a, b)| *a * *b).sum();
            let excess = self.base + self.time_part(pt, *dt, dx) + lin + Self::quad(hess, dx) - *d;
            if excess <= T::zero() {
                continue;
            }
            let r2: T = dx.iter().map(|v| *v * *v).sum();
            if r2 == T::zero() {
                return None;
            }
            delta = delta.max(T::lit(2.0) * excess / r2);
        }
        Some(delta * (T::one() + T::lit(1e-9)) + slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchOptions {
    pub radius: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for TouchOptions {
    fn default() -> Self {
        Self { radius: 2, trials: 100, seed: 0 }
    }
}

/// Deterministic per-node stream independent of scheduling.
pub fn node_seed(seed: u64, snapshot: usize, node: usize) -> u64 {
    let mut z = seed ^ (snapshot as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (node as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Touching quadratics at an interior node of an interior snapshot, and the
/// number of candidates attempted.
pub fn touching_candidates<T: Real>(
    field: &DistanceField<T>,
    snapshot: usize,
    node: usize,
    opts: &TouchOptions,
) -> (Vec<TouchingQuadratic<T>>, usize) {
    let grid = &field.grid;
    let n = grid.n();
    let slack = T::lit(T::TIE_TOL);
    let jt = DiscreteJet::at(field, snapshot, node);
    let stencil = Stencil::new(field, &jt, snapshot, node, opts.radius);
    let make = |pt: T, g: Vec<T>, hess: Mat<T>, origin: Origin| TouchingQuadratic {
        snapshot,
        node,
        p0: stencil.base,
        pt,
        ptt: jt.ptt,
        gt: jt.gt.clone(),
        g,
        hess,
        radius: opts.radius,
        origin,
    };
    let relaxed = |delta: T| {
        let mut h = jt.hess.clone();
        for a in 0..n {
            h[(a, a)] -= delta;
        }
        h
    };
    let mut out = Vec::new();
    let mut attempted = 0;
    for delta in [T::zero(), grid.h_min(), T::one()] {
        attempted += 1;
        let h = relaxed(delta);
        if stencil.touches(jt.pt, &jt.g, &h, slack) {
            out.push(make(jt.pt, jt.g.clone(), h, Origin::Jet { relaxation: delta.as_f64() }));
            break;
        }
    }
    // The ladder overshoots when cubic terms dominate on the stencil; the
    // smallest sufficient relaxation gives a sharper candidate.
    let (t_lo, t_hi) = jt.ranges[0];
    let ladder = match out.first().map(|q| q.origin) {
        Some(Origin::Jet { relaxation }) => Some(relaxation),
        _ => None,
    };
    let near = T::lit(1e-9) * (T::one() + t_hi.abs());
    if ladder.is_none_or(|d| d > grid.h_min().as_f64()) && t_lo <= t_hi + near {
        attempted += 1;
        let pt = if t_lo <= t_hi { jt.pt.max(t_lo).min(t_hi) } else { T::lit(0.5) * (t_lo + t_hi) };
        if let Some(delta) = stencil.relaxation(pt, &jt.g, &jt.hess, slack) {
            let h = relaxed(delta);
            if stencil.touches(pt, &jt.g, &h, slack) {
                out.push(make(pt, jt.g.clone(), h, Origin::Jet { relaxation: delta.as_f64() }));
            }
        }
    }
    let base_h = out.last().map_or_else(|| jt.hess.clone(), |q| q.hess.clone());
    let rho = base_h.as_slice().iter().fold(T::one(), |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(node_seed(opts.seed, snapshot, node));
    let draw = |lo: T, hi: T, rng: &mut ChaCha8Rng| lo + (hi - lo) * T::lit(rng.gen::<f64>());
    for _ in 0..opts.trials {
        attempted += 1;
        let pt = draw(t_lo, t_hi, &mut rng);
        let g: Vec<T> = (0..n).map(|a| draw(jt.ranges[a + 1].0, jt.ranges[a + 1].1, &mut rng)).collect();
        let s = T::lit(rng.gen::<f64>()) * rho;
        let mut h = base_h.clone();
        for a in 0..n {
            h[(a, a)] -= s;
        }
        if n == 2 {
            let w = T::lit(rng.gen_range(-0.5..0.5)) * s;
            h[(0, 1)] += w;
            h[(1, 0)] += w;
        }
        if stencil.touches(pt, &g, &h, slack) {
            out.push(make(pt, g, h, Origin::Random));
        }
    }
    (out, attempted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub value: f64,
    pub snapshot: usize,
    pub t: f64,
    pub node: usize,
    pub x: Vec<f64>,
    pub d: f64,
    pub pt: f64,
    pub ptt: f64,
    pub gt: Vec<f64>,
    pub g: Vec<f64>,
    pub hess: Vec<f64>,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionReport {
    pub check: String,
    pub pass: bool,
    pub verdict: String,
    pub tol: f64,
    pub radius: usize,
    pub trials: usize,
    pub seed: u64,
    pub nodes_checked: usize,
    pub nodes_without_candidates: usize,
    pub candidates_attempted: usize,
    pub candidates_touching: usize,
    pub min_attempted_per_node: usize,
    /// Smallest `R(ψ)` over all touching candidates.
    pub worst: Option<Violation>,
}

/// `R(ψ) = p_t − Σαᵢⱼ Hᵢⱼ − Σβᵢgᵢ + γd̄ ≥ −tol` for every touching candidate at
/// every interior node of every interior snapshot.
pub fn supersolution_check<T: Real>(
    field: &DistanceField<T>,
    coeffs: &CoefficientFields<T>,
    tol: f64,
    opts: &TouchOptions,
) -> SupersolutionReport {
    let grid = &field.grid;
    let mut report = SupersolutionReport {
        check: "supersolution".into(),
        pass: true,
        verdict: String::new(),
        tol,
        radius: opts.radius,
        trials: opts.trials,
        seed: opts.seed,
        nodes_checked: 0,
        nodes_without_candidates: 0,
        candidates_attempted: 0,
        candidates_touching: 0,
        min_attempted_per_node: 0,
        worst: None,
    };
    let mut min_attempted = usize::MAX;
    let mut worst: Option<(T, TouchingQuadratic<T>)> = None;
    for j in 1..field.values.len().saturating_sub(1) {
        let rows: Vec<(usize, usize, Option<(T, TouchingQuadratic<T>)>)> = grid
            .interior_nodes()
            .par_iter()
            .map(|&node| {
                let c = coeffs.at(j, node).expect("interior coefficients");
                let d = field.values[j][node];
                let (cands, attempted) = touching_candidates(field, j, node, opts);
                let count = cands.len();
                let low = cands
                    .into_iter()
                    .map(|q| (evaluate(c, q.pt, &q.g, &q.hess, d), q))
                    .fold(None, |acc: Option<(T, TouchingQuadratic<T>)>, (r, q)| match acc {
                        Some((w, _)) if w <= r => acc,
                        _ => Some((r, q)),
                    });
                (attempted, count, low)
            })
            .collect();
        for (attempted, count, low) in rows {
            report.nodes_checked += 1;
            report.candidates_attempted += attempted;
            report.candidates_touching += count;
            min_attempted = min_attempted.min(attempted);
            if count == 0 {
                report.nodes_without_candidates += 1;
            }
            if let Some((r, q)) = low {
                if worst.as_ref().is_none_or(|(w, _)| r < *w) {
                    worst = Some((r, q));
                }
            }
        }
    }
    report.min_attempted_per_node = if report.nodes_checked == 0 { 0 } else { min_attempted };
    report.worst = worst.map(|(r, q)| Violation {
        value: r.as_f64(),
        snapshot: q.snapshot,
        t: field.times[q.snapshot].as_f64(),
        node: q.node,
        x: to_f64_vec(&grid.coords(q.node)),
        d: q.p0.as_f64(),
        pt: q.pt.as_f64(),
        ptt: q.ptt.as_f64(),
        gt: to_f64_vec(&q.gt),
        g: to_f64_vec(&q.g),
        hess: to_f64_vec(q.hess.as_slice()),
        origin: q.origin,
    });
    report.pass = report.worst.as_ref().is_none_or(|w| w.value >= -tol);
    report.verdict = if report.pass { "no violation found" } else { "violation found" }.into();
    report
}
