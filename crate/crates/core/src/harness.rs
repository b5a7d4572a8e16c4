//! Maximum-principle harness: the distance field `d̄(x,t) = d(u(x,t))`, the
//! weak and strong maximum-principle checks, and the coefficient fields
//! `γ`, `μ̃`, `λ̃ᵢ`, `αᵢⱼ = μ̃aᵢⱼ`, `βᵢ = λ̃ᵢ` of the scalar inequality
//! satisfied by `d̄`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convex::{ConvexBody, ConvexError, NiceChoice};
use crate::linalg::{left_eigenvalue, positive_definite_floor, LinalgError, Mat};
use crate::scalar::{norm, to_f64_vec, Real};
use crate::solver::{jet, Grid, Trajectory};
use crate::system::SystemError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("state dimension {traj} does not match K of dimension {body}")]
    Dimension { traj: usize, body: usize },
    #[error(transparent)]
    Convex(#[from] ConvexError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(
        "inward vector {nu:?} at v={v:?} is not a left eigenvector of {matrix} (residual {residual:e}) at node {node} (x={x:?}), t={t}"
    )]
    Incompatible { matrix: String, node: usize, x: Vec<f64>, t: f64, v: Vec<f64>, nu: Vec<f64>, residual: f64 },
}

/// `d̄` per snapshot per node, with the selected `(v, ℓ)` when the field
/// comes from a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField<T> {
    pub grid: Grid<T>,
    pub times: Vec<T>,
    /// Signed: negative where `u ∉ K`.
    pub values: Vec<Vec<T>>,
    pub choices: Option<Vec<Vec<NiceChoice<T>>>>,
}

impl<T: Real> DistanceField<T> {
    /// A manufactured field with no underlying trajectory.
    pub fn from_values(grid: Grid<T>, times: Vec<T>, values: Vec<Vec<T>>) -> Self {
        Self { grid, times, values, choices: None }
    }

    pub fn choice(&self, snapshot: usize, node: usize) -> Option<&NiceChoice<T>> {
        self.choices.as_ref().map(|c| &c[snapshot][node])
    }
}

/// `d̄ = distance_to_boundary(K, u)` with the deterministic nearest-point
/// selection at every node; outside `K` the signed extension is recorded
/// instead of failing.
pub fn distance_field<T: Real>(traj: &Trajectory<T>, body: &ConvexBody<T>) -> Result<DistanceField<T>, HarnessError> {
    if traj.k() != body.dim() {
        return Err(HarnessError::Dimension { traj: traj.k(), body: body.dim() });
    }
    let mut values = Vec::with_capacity(traj.snapshots.len());
    let mut choices = Vec::with_capacity(traj.snapshots.len());
    for snap in &traj.snapshots {
        let row: Vec<(T, NiceChoice<T>)> = (0..traj.grid.len())
            .into_par_iter()
            .map(|node| {
                let u = snap.at(node);
                let c = body.signed_selection(u)?;
                let d = match body.distance_to_boundary(u) {
                    Ok(d) => d,
                    Err(ConvexError::Domain { .. }) => body.signed_distance(u),
                    Err(e) => return Err(e),
                };
                Ok((d, c))
            })
            .collect::<Result<Vec<_>, ConvexError>>()?;
        let (v, c): (Vec<T>, Vec<NiceChoice<T>>) = row.into_iter().unzip();
        values.push(v);
        choices.push(c);
    }
    Ok(DistanceField { grid: traj.grid.clone(), times: traj.times(), values, choices: Some(choices) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
    /// The premise never fires, so the implication holds vacuously.
    Vacuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLocation {
    pub value: f64,
    pub snapshot: usize,
    pub t: f64,
    pub node: usize,
    pub x: Vec<f64>,
}

fn locate<T: Real>(f: &DistanceField<T>, snapshot: usize, node: usize, value: T) -> NodeLocation {
    NodeLocation {
        value: value.as_f64(),
        snapshot,
        t: f.times[snapshot].as_f64(),
        node,
        x: to_f64_vec(&f.grid.coords(node)),
    }
}

fn worst_over<T: Real>(
    f: &DistanceField<T>,
    nodes: impl Fn(usize) -> bool,
    snapshots: impl Iterator<Item = usize>,
    better: impl Fn(T, T) -> bool,
) -> Option<NodeLocation> {
    let mut best: Option<(usize, usize, T)> = None;
    for j in snapshots {
        for (node, &d) in f.values[j].iter().enumerate() {
            if nodes(node) && best.is_none_or(|(_, _, b)| better(d, b)) {
                best = Some((j, node, d));
            }
        }
    }
    best.map(|(j, node, d)| locate(f, j, node, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakMpReport {
    pub check: String,
    pub status: Status,
    pub pass: bool,
    pub tol: f64,
    /// Smallest signed distance on the parabolic boundary.
    pub premise_worst: Option<NodeLocation>,
    pub worst_signed_distance: Option<NodeLocation>,
}

/// Data on the parabolic boundary in `K` (within `tol`) ⇒ solution in `K`.
pub fn weak_mp_check<T: Real>(field: &DistanceField<T>, tol: f64) -> WeakMpReport {
    let grid = &field.grid;
    let lt = |a: T, b: T| a < b;
    let initial = worst_over(field, |_| true, 0..1, lt);
    let lateral = worst_over(field, |n| grid.is_boundary(n), 0..field.values.len(), lt);
    let premise_worst = match (initial, lateral) {
        (Some(a), Some(b)) => Some(if b.value < a.value { b } else { a }),
        (a, b) => a.or(b),
    };
    let worst = worst_over(field, |_| true, 0..field.values.len(), lt);
    let premise_ok = premise_worst.as_ref().is_none_or(|l| l.value >= -tol);
    let (status, pass) = if !premise_ok {
        (Status::NotApplicable, false)
    } else if worst.as_ref().is_none_or(|l| l.value >= -tol) {
        (Status::Pass, true)
    } else {
        (Status::Fail, false)
    };
    WeakMpReport { check: "weak_mp".into(), status, pass, tol, premise_worst, worst_signed_distance: worst }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongMpReport {
    pub check: String,
    pub status: Status,
    pub pass: bool,
    pub eps_touch: f64,
    pub eps_flat: f64,
    /// Earliest interior contact with `d̄ ≤ eps_touch` at `t > 0`.
    pub touch: Option<NodeLocation>,
    /// Largest interior `d̄` on `0 < t ≤ t₀` when a contact was found.
    pub flat_worst: Option<NodeLocation>,
    /// Smallest interior `d̄` over `t > 0` (the positive margin when no contact occurs).
    pub margin: Option<NodeLocation>,
}

/// `ε_touch = 1e−6·diam K`, `ε_flat = 1e−4·diam K`; unbounded `K` uses diameter 1.
pub fn default_strong_epsilons<T: Real>(body: &ConvexBody<T>) -> (f64, f64) {
    let diam = body.diameter().map_or(1.0, |d| d.as_f64());
    (1e-6 * diam, 1e-4 * diam)
}

/// Touching `∂K` at an interior node at some `t₀ > 0` ⇒ `d̄ ≤ ε_flat` at every
/// interior node of every snapshot with `0 < t ≤ t₀`.
pub fn strong_mp_check<T: Real>(field: &DistanceField<T>, eps_touch: f64, eps_flat: f64) -> StrongMpReport {
    let grid = &field.grid;
    let interior = |n: usize| !grid.is_boundary(n);
    let snaps = field.values.len();
    let margin = worst_over(field, interior, 1..snaps, |a, b| a < b);
    let mut touch = None;
    'outer: for j in 1..snaps {
        for &node in grid.interior_nodes() {
            if field.values[j][node].as_f64() <= eps_touch {
                touch = Some(locate(field, j, node, field.values[j][node]));
                break 'outer;
            }
        }
    }
    let mut report = StrongMpReport {
        check: "strong_mp".into(),
        status: Status::Vacuous,
        pass: true,
        eps_touch,
        eps_flat,
        touch: None,
        flat_worst: None,
        margin,
    };
    if let Some(tl) = touch {
        let flat = worst_over(field, interior, 1..tl.snapshot + 1, |a, b| a > b);
        let ok = flat.as_ref().is_none_or(|l| l.value <= eps_flat);
        report.status = if ok { Status::Pass } else { Status::Fail };
        report.pass = ok;
        report.touch = Some(tl);
        report.flat_worst = flat;
    }
    report
}

/// Coefficients of the scalar inequality at one interior node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCoefficients<T> {
    pub gamma: T,
    pub mu: T,
    pub lambda: Vec<T>,
    /// `μ̃·{aᵢⱼ}`
    pub alpha: Mat<T>,
    pub a_floor: T,
}

impl<T: Real> NodeCoefficients<T> {
    /// `βᵢ = λ̃ᵢ`
    pub fn beta(&self) -> &[T] {
        &self.lambda
    }
}

/// Per snapshot, per node; `None` at boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFields<T> {
    pub nodes: Vec<Vec<Option<NodeCoefficients<T>>>>,
}

impl<T: Real> CoefficientFields<T> {
    /// Constant coefficients on every interior node, for manufactured tests.
    pub fn uniform(grid: &Grid<T>, snapshots: usize, alpha: Mat<T>, beta: Vec<T>, gamma: T) -> Self {
        let row: Vec<Option<NodeCoefficients<T>>> = (0..grid.len())
            .map(|n| {
                (!grid.is_boundary(n)).then(|| NodeCoefficients {
                    gamma,
                    mu: T::one(),
                    lambda: beta.clone(),
                    alpha: alpha.clone(),
                    a_floor: positive_definite_floor(&alpha),
                })
            })
            .collect();
        Self { nodes: vec![row; snapshots] }
    }

    pub fn at(&self, snapshot: usize, node: usize) -> Option<&NodeCoefficients<T>> {
        self.nodes[snapshot][node].as_ref()
    }
}

/// `γ = c‖Σaᵢⱼu_{xᵢxⱼ}‖ + Σᵢmᵢ‖u_{xᵢ}‖ + p` per snapshot per node (zero on
/// boundary nodes).
pub fn gamma_field<T: Real>(traj: &Trajectory<T>) -> Result<Vec<Vec<T>>, HarnessError> {
    let lip = traj.spec.lipschitz();
    let (c, p) = (T::lit(lip.c), T::lit(lip.p));
    let m: Vec<T> = lip.m.iter().map(|&x| T::lit(x)).collect();
    let k = traj.k();
    traj.snapshots
        .iter()
        .map(|snap| {
            (0..traj.grid.len())
                .into_par_iter()
                .map(|node| {
                    if traj.grid.is_boundary(node) {
                        return Ok(T::zero());
                    }
                    let x = traj.grid.coords(node);
                    let j = jet(&traj.grid, &snap.values, k, node);
                    let w = j.contract_second(&traj.spec.a_at(&x, snap.t)?, k);
                    let mut g = c * norm(&w) + p;
                    for (i, &mi) in m.iter().enumerate() {
                        g += mi * norm(j.du(i, k));
                    }
                    Ok(g)
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub min_gamma: f64,
    pub min_mu: f64,
    pub max_abs_lambda: f64,
    pub min_alpha_floor: f64,
    /// Smallest `floor(α) − μ̃·floor(a)` over nodes; should be ≥ −1e−10.
    pub alpha_scaling_gap: f64,
    /// Smallest symmetric floor of `D(x,t,v)` at the selected contact points.
    pub min_d_floor_at_contacts: f64,
    pub nodes: usize,
}

/// `μ̃ = νᵀD(x,t,v)ν`, `λ̃ᵢ = νᵀMᵢ(x,t,v)ν` at the selected `(v, ν)`, with `ν`
/// required to be a left eigenvector to `eig_tol`.
pub fn effective_coefficients<T: Real>(
    traj: &Trajectory<T>,
    field: &DistanceField<T>,
    gamma: &[Vec<T>],
    eig_tol: f64,
) -> Result<(CoefficientFields<T>, CoefficientSummary), HarnessError> {
    let spec = &traj.spec;
    let n = spec.n();
    let tol = T::lit(eig_tol);
    let choices = field.choices.as_ref().expect("distance field from a trajectory");
    let mut nodes = Vec::with_capacity(traj.snapshots.len());
    let mut summary = CoefficientSummary {
        min_gamma: f64::INFINITY,
        min_mu: f64::INFINITY,
        max_abs_lambda: 0.0,
        min_alpha_floor: f64::INFINITY,
        alpha_scaling_gap: f64::INFINITY,
        min_d_floor_at_contacts: f64::INFINITY,
        nodes: 0,
    };
    for (j, snap) in traj.snapshots.iter().enumerate() {
        let t = snap.t;
        let row = (0..traj.grid.len())
            .into_par_iter()
            .map(|node| -> Result<Option<(NodeCoefficients<T>, T)>, HarnessError> {
                if traj.grid.is_boundary(node) {
                    return Ok(None);
                }
                let x = traj.grid.coords(node);
                let ch = &choices[j][node];
                let nu = &ch.ell.nu;
                let incompatible = |matrix: String, residual: T| HarnessError::Incompatible {
                    matrix,
                    node,
                    x: to_f64_vec(&x),
                    t: t.as_f64(),
                    v: to_f64_vec(&ch.v),
                    nu: to_f64_vec(nu),
                    residual: residual.as_f64(),
                };
                let d = spec.d_at(&x, t, &ch.v)?;
                let mu = left_eigenvalue(nu, &d, tol)?;
                let mu = mu.value().ok_or_else(|| incompatible("D".into(), mu.residual()))?;
                let mut lambda = Vec::with_capacity(n);
                for i in 0..n {
                    let e = left_eigenvalue(nu, &spec.m_at(i, &x, t, &ch.v)?, tol)?;
                    lambda.push(e.value().ok_or_else(|| incompatible(format!("M[{i}]"), e.residual()))?);
                }
                let a = spec.a_at(&x, t)?;
                let coeffs = NodeCoefficients { gamma: gamma[j][node], mu, lambda, alpha: a.scaled(mu), a_floor: positive_definite_floor(&a) };
                Ok(Some((coeffs, positive_definite_floor(&d))))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::with_capacity(row.len());
        for entry in row {
            match entry {
                Some((c, d_floor)) => {
                    let alpha_floor = positive_definite_floor(&c.alpha).as_f64();
                    summary.min_gamma = summary.min_gamma.min(c.gamma.as_f64());
                    summary.min_mu = summary.min_mu.min(c.mu.as_f64());
                    for l in &c.lambda {
                        summary.max_abs_lambda = summary.max_abs_lambda.max(l.abs().as_f64());
                    }
                    summary.min_alpha_floor = summary.min_alpha_floor.min(alpha_floor);
                    summary.alpha_scaling_gap = summary.alpha_scaling_gap.min(alpha_floor - (c.mu * c.a_floor).as_f64());
                    summary.min_d_floor_at_contacts = summary.min_d_floor_at_contacts.min(d_floor.as_f64());
                    summary.nodes += 1;
                    out.push(Some(c));
                }
                None => out.push(None),
            }
        }
        nodes.push(out);
    }
    Ok((CoefficientFields { nodes }, summary))
}
