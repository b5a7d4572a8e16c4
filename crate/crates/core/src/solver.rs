//! Explicit finite-difference integration of the system on a rectangular grid
//! with Dirichlet data.
//!
//! Spatial derivatives use second-order central differences; the mixed term
//! `u_{x₁x₂}` uses the 4-point cross stencil. Time stepping is forward Euler
//! (default) or classical RK4, with the step bounded by [`stable_dt`].

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Env, EvalError, Expr};
use crate::linalg::Mat;
use crate::scalar::{to_f64_vec, Real};
use crate::system::{SystemError, SystemSpec};

/// Fraction of the explicit diffusive limit used by [`stable_dt`].
pub const CFL_SAFETY: f64 = 0.4;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("evaluating {what} at node {node} (x={x:?}, t={t}): {source}")]
    Data { what: String, node: usize, x: Vec<f64>, t: f64, source: EvalError },
    #[error("non-finite value at node {node} (x={x:?}) at t={t}")]
    Unstable { node: usize, x: Vec<f64>, t: f64 },
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub points: usize,
}

/// Tensor grid over `[lo, hi]` per axis. Nodes are numbered
/// lexicographically with the first axis slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    axes: Vec<Axis<T>>,
    h: Vec<T>,
    interior: Vec<usize>,
}

impl<T: Real> Grid<T> {
    pub fn new(lo: &[T], hi: &[T], points: &[usize]) -> Result<Self, SolverError> {
        if lo.is_empty() || lo.len() > 2 || lo.len() != hi.len() || lo.len() != points.len() {
            return Err(SolverError::Grid("need matching lo/hi/points for 1 or 2 axes".into()));
        }
        let mut axes = Vec::new();
        let mut h = Vec::new();
        for ((&l, &u), &p) in lo.iter().zip(hi).zip(points) {
            if p < 3 {
                return Err(SolverError::Grid(format!("need at least 3 points per axis, got {p}")));
            }
            if !(u > l) {
                return Err(SolverError::Grid(format!("empty extent [{l}, {u}]")));
            }
            h.push((u - l) / T::lit((p - 1) as f64));
            axes.push(Axis { lo: l, hi: u, points: p });
        }
        let mut grid = Self { axes, h, interior: Vec::new() };
        grid.interior = (0..grid.len()).filter(|&i| !grid.is_boundary(i)).collect();
        Ok(grid)
    }

    /// Grid with spacing as close to `h` as divides each extent.
    pub fn with_spacing(lo: &[T], hi: &[T], h: T) -> Result<Self, SolverError> {
        let points: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(&l, &u)| ((u - l) / h).round().to_usize().unwrap_or(0) + 1)
            .collect();
        Self::new(lo, hi, &points)
    }

    pub fn n(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self, axis: usize) -> T {
        self.h[axis]
    }

    pub fn h_min(&self) -> T {
        self.h.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn index(&self, node: usize) -> [usize; 2] {
        match self.n() {
            1 => [node, 0],
            _ => [node / self.axes[1].points, node % self.axes[1].points],
        }
    }

    pub fn node(&self, idx: [usize; 2]) -> usize {
        match self.n() {
            1 => idx[0],
            _ => idx[0] * self.axes[1].points + idx[1],
        }
    }

    pub fn coords(&self, node: usize) -> Vec<T> {
        let idx = self.index(node);
        (0..self.n()).map(|a| self.axes[a].lo + T::lit(idx[a] as f64) * self.h[a]).collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let idx = self.index(node);
        (0..self.n()).any(|a| idx[a] == 0 || idx[a] == self.axes[a].points - 1)
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Node displaced by `offset` grid steps, if it exists.
    pub fn offset(&self, node: usize, offset: [isize; 2]) -> Option<usize> {
        let idx = self.index(node);
        let mut out = [0usize; 2];
        for a in 0..self.n() {
            let j = idx[a] as isize + offset[a];
            if j < 0 || j >= self.axes[a].points as isize {
                return None;
            }
            out[a] = j as usize;
        }
        Some(self.node(out))
    }
}

/// `ℝᵏ` values per node, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    pub k: usize,
    pub t: T,
    pub values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn at(&self, node: usize) -> &[T] {
        &self.values[node * self.k..(node + 1) * self.k]
    }
}

/// Central-difference derivatives of a `k`-vector field at an interior node.
/// `first[i*k + c] = ∂ᵢu_c`, `second[(i*n + j)*k + c] = ∂ᵢ∂ⱼu_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet<T> {
    pub first: Vec<T>,
    pub second: Vec<T>,
}

impl<T: Real> Jet<T> {
    pub fn du(&self, i: usize, k: usize) -> &[T] {
        &self.first[i * k..(i + 1) * k]
    }

    pub fn d2u(&self, i: usize, j: usize, n: usize, k: usize) -> &[T] {
        let s = (i * n + j) * k;
        &self.second[s..s + k]
    }

    /// `Σᵢⱼ aᵢⱼ ∂ᵢ∂ⱼu`
    pub fn contract_second(&self, a: &Mat<T>, k: usize) -> Vec<T> {
        let n = a.rows();
        let mut w = vec![T::zero(); k];
        for i in 0..n {
            for j in 0..n {
                let aij = a[(i, j)];
                for (wc, &s) in w.iter_mut().zip(self.d2u(i, j, n, k)) {
                    *wc += aij * s;
                }
            }
        }
        w
    }
}

/// Derivatives of the node-major field `values` (stride `k`) at interior `node`.
pub fn jet<T: Real>(grid: &Grid<T>, values: &[T], k: usize, node: usize) -> Jet<T> {
    let n = grid.n();
    let at = |nd: usize| &values[nd * k..(nd + 1) * k];
    let nb = |o: [isize; 2]| grid.offset(node, o).expect("interior node");
    let u0 = at(node);
    let two = T::lit(2.0);
    let mut first = vec![T::zero(); n * k];
    let mut second = vec![T::zero(); n * n * k];
    for i in 0..n {
        let mut e = [0isize; 2];
        e[i] = 1;
        let up = at(nb(e));
        e[i] = -1;
        let dn = at(nb(e));
        let h = grid.h(i);
        for c in 0..k {
            first[i * k + c] = (up[c] - dn[c]) / (two * h);
            second[(i * n + i) * k + c] = (up[c] - two * u0[c] + dn[c]) / (h * h);
        }
    }
    if n == 2 {
        let pp = at(nb([1, 1]));
        let pm = at(nb([1, -1]));
        let mp = at(nb([-1, 1]));
        let mm = at(nb([-1, -1]));
        let den = T::lit(4.0) * grid.h(0) * grid.h(1);
        for c in 0..k {
            let v = (pp[c] - pm[c] - mp[c] + mm[c]) / den;
            second[k + c] = v;
            second[2 * k + c] = v;
        }
    }
    Jet { first, second }
}

/// Time derivative `D Σaᵢⱼu_{xᵢxⱼ} + ΣMᵢu_{xᵢ} + φ` at every interior node;
/// boundary entries are zero.
pub fn rhs_eval<T: Real>(grid: &Grid<T>, spec: &SystemSpec, field: &Field<T>) -> Result<Vec<T>, SolverError> {
    let k = field.k;
    let n = grid.n();
    let t = field.t;
    let mut out = vec![T::zero(); field.values.len()];
    out.par_chunks_mut(k).enumerate().try_for_each(|(node, slot)| -> Result<(), SolverError> {
        if grid.is_boundary(node) {
            return Ok(());
        }
        let x = grid.coords(node);
        let u = field.at(node);
        let j = jet(grid, &field.values, k, node);
        let w = j.contract_second(&spec.a_at(&x, t)?, k);
        let mut r = spec.d_at(&x, t, u)?.mul_vec(&w);
        for i in 0..n {
            let mi = spec.m_at(i, &x, t, u)?;
            for (rc, v) in r.iter_mut().zip(mi.mul_vec(j.du(i, k))) {
                *rc += v;
            }
        }
        for (rc, p) in r.iter_mut().zip(spec.phi_at(&x, t, u)?) {
            *rc += p;
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Unstable { node, x: to_f64_vec(&x), t: t.as_f64() });
        }
        slot.copy_from_slice(&r);
        Ok(())
    })?;
    Ok(out)
}

/// Explicit step bound `safety·h²/(2·n·Â·D̂ + h·M̂)`, capped at `cap`.
///
/// `Â` is the largest `Σ|aᵢⱼ|`, `D̂` the largest row-sum norm of `D` and `M̂`
/// the largest `Σᵢ` row-sum norm of `Mᵢ`, all over the nodes of `field`.
pub fn stable_dt<T: Real>(grid: &Grid<T>, spec: &SystemSpec, field: &Field<T>, cap: T) -> Result<T, SolverError> {
    let t = field.t;
    let bounds = (0..grid.len())
        .into_par_iter()
        .map(|node| -> Result<(T, T, T), SolverError> {
            let x = grid.coords(node);
            let u = field.at(node);
            let a = spec.a_at(&x, t)?.abs_sum();
            let d = spec.d_at(&x, t, u)?.max_row_sum();
            let mut m = T::zero();
            for i in 0..grid.n() {
                m += spec.m_at(i, &x, t, u)?.max_row_sum();
            }
            Ok((a, d, m))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (a, d, m) = bounds
        .into_iter()
        .fold((T::zero(), T::zero(), T::zero()), |acc, b| (acc.0.max(b.0), acc.1.max(b.1), acc.2.max(b.2)));
    let h = grid.h_min();
    let den = T::lit(2.0 * grid.n() as f64) * a * d + h * m;
    if !(den > T::zero()) {
        return Ok(cap);
    }
    Ok((T::lit(CFL_SAFETY) * h * h / den).min(cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Euler,
    Rk4,
}

/// Dirichlet data: one expression in `(x, t)` per state component.
#[derive(Debug, Clone, PartialEq)]
pub struct Dirichlet {
    pub exprs: Vec<Expr>,
}

impl Dirichlet {
    fn apply<T: Real>(&self, grid: &Grid<T>, values: &mut [T], t: T) -> Result<(), SolverError> {
        let k = self.exprs.len();
        for node in 0..grid.len() {
            if !grid.is_boundary(node) {
                continue;
            }
            let x = grid.coords(node);
            for (c, e) in self.exprs.iter().enumerate() {
                values[node * k + c] = e.eval(&Env::new(&x, t, &[])).map_err(|source| SolverError::Data {
                    what: format!("boundary[{c}]"),
                    node,
                    x: to_f64_vec(&x),
                    t: t.as_f64(),
                    source,
                })?;
            }
        }
        Ok(())
    }
}

fn check_finite<T: Real>(grid: &Grid<T>, f: &Field<T>) -> Result<(), SolverError> {
    match f.values.iter().position(|v| !v.is_finite()) {
        Some(p) => {
            let node = p / f.k;
            Err(SolverError::Unstable { node, x: to_f64_vec(&grid.coords(node)), t: f.t.as_f64() })
        }
        None => Ok(()),
    }
}

fn axpy<T: Real>(base: &Field<T>, dt: T, dir: &[T], t: T) -> Field<T> {
    Field { k: base.k, t, values: base.values.iter().zip(dir).map(|(&u, &d)| u + dt * d).collect() }
}

/// One explicit step from `field.t` to `field.t + dt`.
pub fn step<T: Real>(
    grid: &Grid<T>,
    spec: &SystemSpec,
    field: &Field<T>,
    dt: T,
    boundary: &Dirichlet,
    scheme: Scheme,
) -> Result<Field<T>, SolverError> {
    let t = field.t;
    let t_new = t + dt;
    let mut next = match scheme {
        Scheme::Euler => axpy(field, dt, &rhs_eval(grid, spec, field)?, t_new),
        Scheme::Rk4 => {
            let half = dt * T::lit(0.5);
            let stage = |base: &Field<T>, h: T, dir: &[T], ts: T| -> Result<Field<T>, SolverError> {
                let mut f = axpy(base, h, dir, ts);
                boundary.apply(grid, &mut f.values, ts)?;
                Ok(f)
            };
            let k1 = rhs_eval(grid, spec, field)?;
            let k2 = rhs_eval(grid, spec, &stage(field, half, &k1, t + half)?)?;
            let k3 = rhs_eval(grid, spec, &stage(field, half, &k2, t + half)?)?;
            let k4 = rhs_eval(grid, spec, &stage(field, dt, &k3, t_new)?)?;
            let sixth = T::one() / T::lit(6.0);
            let two = T::lit(2.0);
            let dir: Vec<T> = (0..k1.len()).map(|i| sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i])).collect();
            axpy(field, dt, &dir, t_new)
        }
    };
    boundary.apply(grid, &mut next.values, t_new)?;
    check_finite(grid, &next)?;
    Ok(next)
}

/// Everything needed to integrate one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem<T> {
    pub spec: SystemSpec,
    pub grid: Grid<T>,
    /// One expression in `x` per component.
    pub initial: Vec<Expr>,
    pub boundary: Dirichlet,
    pub t_end: f64,
    pub snapshot_interval: f64,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub spec: SystemSpec,
    pub grid: Grid<T>,
    pub snapshots: Vec<Field<T>>,
    /// Internal step used in each snapshot interval.
    pub dt: Vec<T>,
    pub snapshot_interval: f64,
}

impl<T: Real> Trajectory<T> {
    pub fn times(&self) -> Vec<T> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn k(&self) -> usize {
        self.spec.k()
    }

    /// Largest internal step taken.
    pub fn max_dt(&self) -> T {
        self.dt.iter().copied().fold(T::zero(), T::max)
    }
}

pub fn initial_field<T: Real>(problem: &Problem<T>) -> Result<Field<T>, SolverError> {
    let grid = &problem.grid;
    let k = problem.spec.k();
    let mut values = vec![T::zero(); grid.len() * k];
    for node in 0..grid.len() {
        let x = grid.coords(node);
        for (c, e) in problem.initial.iter().enumerate() {
            values[node * k + c] = e.eval(&Env::<T> { x: &x, t: Some(T::zero()), z: &[] }).map_err(|source| SolverError::Data {
                what: format!("initial[{c}]"),
                node,
                x: to_f64_vec(&x),
                t: 0.0,
                source,
            })?;
        }
    }
    let f = Field { k, t: T::zero(), values };
    check_finite(grid, &f)?;
    Ok(f)
}

/// Integrates to `t_end`, recording a snapshot every `snapshot_interval`.
/// The step is recomputed from [`stable_dt`] at the start of each interval
/// and shrunk so the interval is covered by whole steps.
pub fn run_scenario<T: Real>(problem: &Problem<T>) -> Result<Trajectory<T>, SolverError> {
    let k = problem.spec.k();
    if problem.initial.len() != k || problem.boundary.exprs.len() != k {
        return Err(SolverError::Problem(format!("expected {k} initial and boundary expressions")));
    }
    if problem.spec.n() != problem.grid.n() {
        return Err(SolverError::Problem("grid dimension differs from system dimension".into()));
    }
    if !(problem.t_end >= 0.0) {
        return Err(SolverError::Problem("t_end must be nonnegative".into()));
    }
    let mut snapshots = vec![initial_field(problem)?];
    let mut dts = Vec::new();
    if problem.t_end == 0.0 {
        return Ok(Trajectory { spec: problem.spec.clone(), grid: problem.grid.clone(), snapshots, dt: dts, snapshot_interval: problem.snapshot_interval });
    }
    if !(problem.snapshot_interval > 0.0) {
        return Err(SolverError::Problem("snapshot interval must be positive".into()));
    }
    let count = (problem.t_end / problem.snapshot_interval).round().max(1.0) as usize;
    let interval = T::lit(problem.t_end / count as f64);
    for j in 0..count {
        let mut field = snapshots.last().expect("initial snapshot").clone();
        let t_start = field.t;
        let t_stop = T::lit(problem.t_end * (j + 1) as f64 / count as f64);
        let span = t_stop - t_start;
        let dt_max = stable_dt(&problem.grid, &problem.spec, &field, interval)?;
        let steps = (span / dt_max).ceil().max(T::one());
        let dt = span / steps;
        let steps = steps.to_usize().expect("finite step count");
        for s in 0..steps {
            field = step(&problem.grid, &problem.spec, &field, dt, &problem.boundary, problem.scheme)?;
            field.t = if s + 1 == steps { t_stop } else { t_start + T::lit((s + 1) as f64) * dt };
        }
        log::debug!("snapshot {}/{} at t={} ({} steps of {})", j + 1, count, t_stop, steps, dt);
        dts.push(dt);
        snapshots.push(field);
    }
    Ok(Trajectory { spec: problem.spec.clone(), grid: problem.grid.clone(), snapshots, dt: dts, snapshot_interval: problem.snapshot_interval })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub n: usize,
    pub k: usize,
    pub grid: Vec<Axis<f64>>,
    pub spacing: Vec<f64>,
    pub times: Vec<f64>,
    pub dt: Vec<f64>,
    pub spec_hash: String,
    pub snapshot_files: Vec<String>,
}

/// Writes `snap_NNNN.csv` (columns `x1[,x2],u1..uk`) per snapshot and
/// returns the manifest describing them.
pub fn write_snapshots<T: Real>(traj: &Trajectory<T>, dir: &Path) -> Result<RunManifest, SolverError> {
    std::fs::create_dir_all(dir)?;
    let n = traj.grid.n();
    let k = traj.k();
    let mut files = Vec::new();
    for (j, snap) in traj.snapshots.iter().enumerate() {
        let name = format!("snap_{j:04}.csv");
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?);
        let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).chain((1..=k).map(|c| format!("u{c}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for node in 0..traj.grid.len() {
            let row: Vec<String> = traj
                .grid
                .coords(node)
                .iter()
                .chain(snap.at(node))
                .map(|v| format!("{:.16e}", v.as_f64()))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        files.push(name);
    }
    Ok(RunManifest {
        n,
        k,
        grid: traj.grid.axes().iter().map(|a| Axis { lo: a.lo.as_f64(), hi: a.hi.as_f64(), points: a.points }).collect(),
        spacing: (0..n).map(|a| traj.grid.h(a).as_f64()).collect(),
        times: to_f64_vec(&traj.times()),
        dt: to_f64_vec(&traj.dt),
        spec_hash: traj.spec.fingerprint(),
        snapshot_files: files,
    })
}
