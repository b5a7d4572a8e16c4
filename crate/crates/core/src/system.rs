//! Coefficient data of the parabolic system
//!
//! ```text
//! u_t = D(x,t,u) Σᵢⱼ aᵢⱼ(x,t) u_{xᵢxⱼ} + Σᵢ Mᵢ(x,t,u) u_{xᵢ} + φ(x,t,u)
//! ```
//!
//! and the compatibility test between `K` and `(φ, D, Mᵢ)`: on `∂K`, every
//! inward vector ν must satisfy `φ·ν ≥ 0` and be a left eigenvector of `D`
//! and of every `Mᵢ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::convex::{ConvexBody, ConvexError};
use crate::expr::{parse_expression, Env, EvalError, Expr, ParseError, Scope};
use crate::linalg::{left_eigenvalue, positive_definite_floor, LinalgError, Mat};
use crate::scalar::{dot, from_f64_vec, norm, sub, to_f64_vec, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("{field}: {source}")]
    Parse { field: String, source: ParseError },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("evaluating {field} at x={x:?}, t={t}, z={z:?}: {source}")]
    Eval { field: String, x: Vec<f64>, t: f64, z: Vec<f64>, source: EvalError },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

/// User-declared Lipschitz-in-z constants of `D`, `Mᵢ` and `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lipschitz {
    pub c: f64,
    pub m: Vec<f64>,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    n: usize,
    k: usize,
    a: Vec<Expr>,
    d: Vec<Expr>,
    m: Vec<Vec<Expr>>,
    phi: Vec<Expr>,
    lipschitz: Lipschitz,
}

fn parse_grid(field: &str, rows: &[Vec<String>], size: usize, scope: &Scope) -> Result<Vec<Expr>, SystemError> {
    if rows.len() != size || rows.iter().any(|r| r.len() != size) {
        return Err(SystemError::Invalid { field: field.into(), reason: format!("expected a {size}x{size} matrix") });
    }
    let mut out = Vec::with_capacity(size * size);
    for (i, row) in rows.iter().enumerate() {
        for (j, src) in row.iter().enumerate() {
            out.push(parse_expression(src, scope).map_err(|source| SystemError::Parse { field: format!("{field}[{i}][{j}]"), source })?.folded());
        }
    }
    Ok(out)
}

impl SystemSpec {
    /// Builds the system from expression sources (matrices row-major).
    pub fn from_sources(
        n: usize,
        k: usize,
        a: &[Vec<String>],
        d: &[Vec<String>],
        m: &[Vec<Vec<String>>],
        phi: &[String],
        lipschitz: Lipschitz,
    ) -> Result<Self, SystemError> {
        if !(1..=2).contains(&n) {
            return Err(SystemError::Invalid { field: "n".into(), reason: format!("spatial dimension must be 1 or 2, got {n}") });
        }
        if k == 0 {
            return Err(SystemError::Invalid { field: "k".into(), reason: "state dimension must be at least 1".into() });
        }
        let xt = Scope::new(n, true, 0);
        let xtz = Scope::new(n, true, k);
        let a = parse_grid("a", a, n, &xt)?;
        for i in 0..n {
            for j in i + 1..n {
                if a[i * n + j] != a[j * n + i] {
                    return Err(SystemError::Invalid {
                        field: format!("a[{i}][{j}]"),
                        reason: format!("matrix must be symmetric: a[{i}][{j}] and a[{j}][{i}] differ"),
                    });
                }
            }
        }
        let d = parse_grid("D", d, k, &xtz)?;
        if m.len() != n {
            return Err(SystemError::Invalid { field: "M".into(), reason: format!("expected {n} matrices, got {}", m.len()) });
        }
        let m = m
            .iter()
            .enumerate()
            .map(|(i, mi)| parse_grid(&format!("M[{i}]"), mi, k, &xtz))
            .collect::<Result<Vec<_>, _>>()?;
        if phi.len() != k {
            return Err(SystemError::Invalid { field: "phi".into(), reason: format!("expected {k} expressions, got {}", phi.len()) });
        }
        let phi = phi
            .iter()
            .enumerate()
            .map(|(i, s)| parse_expression(s, &xtz).map_err(|source| SystemError::Parse { field: format!("phi[{i}]"), source }).map(|e| e.folded()))
            .collect::<Result<Vec<_>, _>>()?;
        if lipschitz.m.len() != n {
            return Err(SystemError::Invalid { field: "lipschitz.m".into(), reason: format!("expected {n} constants, got {}", lipschitz.m.len()) });
        }
        let all = std::iter::once(lipschitz.c).chain(lipschitz.m.iter().copied()).chain(std::iter::once(lipschitz.p));
        if all.into_iter().any(|x| !(x >= 0.0) || !x.is_finite()) {
            return Err(SystemError::Invalid { field: "lipschitz".into(), reason: "constants must be finite and nonnegative".into() });
        }
        Ok(Self { n, k, a, d, m, phi, lipschitz })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn lipschitz(&self) -> &Lipschitz {
        &self.lipschitz
    }

    /// Stable digest of the printed coefficients and constants.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("n={};k={};", self.n, self.k));
        for (tag, exprs) in [("a", &self.a), ("D", &self.d), ("phi", &self.phi)] {
            h.update(tag);
            for e in exprs {
                h.update(e.to_string());
                h.update(";");
            }
        }
        for mi in &self.m {
            h.update("M");
            for e in mi {
                h.update(e.to_string());
                h.update(";");
            }
        }
        h.update(format!("{:?}", self.lipschitz));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn eval_field<T: Real>(field: &str, e: &Expr, x: &[T], t: T, z: &[T]) -> Result<T, SystemError> {
        if let Expr::Num(c) = e {
            return Ok(T::lit(*c));
        }
        e.eval(&Env::new(x, t, z)).map_err(|source| SystemError::Eval {
            field: field.into(),
            x: to_f64_vec(x),
            t: t.as_f64(),
            z: to_f64_vec(z),
            source,
        })
    }

    fn eval_mat<T: Real>(field: &str, exprs: &[Expr], size: usize, x: &[T], t: T, z: &[T]) -> Result<Mat<T>, SystemError> {
        let data = exprs
            .iter()
            .map(|e| Self::eval_field(field, e, x, t, z))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Mat::from_row_major(size, size, data))
    }

    /// `{aᵢⱼ(x,t)}`
    pub fn a_at<T: Real>(&self, x: &[T], t: T) -> Result<Mat<T>, SystemError> {
        Self::eval_mat("a", &self.a, self.n, x, t, &[])
    }

    pub fn d_at<T: Real>(&self, x: &[T], t: T, z: &[T]) -> Result<Mat<T>, SystemError> {
        Self::eval_mat("D", &self.d, self.k, x, t, z)
    }

    pub fn m_at<T: Real>(&self, i: usize, x: &[T], t: T, z: &[T]) -> Result<Mat<T>, SystemError> {
        Self::eval_mat("M", &self.m[i], self.k, x, t, z)
    }

    pub fn phi_at<T: Real>(&self, x: &[T], t: T, z: &[T]) -> Result<Vec<T>, SystemError> {
        self.phi.iter().map(|e| Self::eval_field("phi", e, x, t, z)).collect()
    }

    /// Whether `M₁..Mₙ` are all identically zero as written.
    pub fn has_transport(&self) -> bool {
        self.m.iter().flatten().any(|e| e.constant() != Some(0.0))
    }
}

/// Where a worst-case value was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Located {
    pub value: f64,
    pub x: Vec<f64>,
    pub t: f64,
    pub v: Vec<f64>,
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub spacetime_points: usize,
    pub boundary_points: usize,
    pub inward_vectors: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityReport {
    pub check: String,
    pub pass: bool,
    pub tol: f64,
    /// Minimum of `φ(x,t,v)·ν` over samples.
    pub worst_phi_deficit: Option<Located>,
    pub worst_d_residual: Option<Located>,
    pub worst_m_residual: Vec<Option<Located>>,
    /// Minimum symmetric-part floor of `D(x,t,v)` over samples.
    pub min_d_floor: f64,
    pub min_a_floor: f64,
    /// Both floors strictly positive.
    pub parabolic: bool,
    pub samples: SampleCounts,
}

/// Sampling plan for the compatibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatSampling {
    pub points: Vec<(Vec<f64>, f64)>,
    pub sphere_count: usize,
    pub inward_per_point: usize,
    pub seed: u64,
}

#[derive(Default)]
struct Partial {
    phi: Option<Located>,
    d: Option<Located>,
    m: Vec<Option<Located>>,
    d_floor: f64,
    a_floor: f64,
    inward: usize,
    evals: usize,
}

fn keep_min(slot: &mut Option<Located>, cand: Located) {
    if slot.as_ref().is_none_or(|s| cand.value < s.value) {
        *slot = Some(cand);
    }
}

fn keep_max(slot: &mut Option<Located>, cand: Located) {
    if slot.as_ref().is_none_or(|s| cand.value > s.value) {
        *slot = Some(cand);
    }
}

/// Samples `(x,t)`, boundary points `v` and inward vectors `ν` and checks
/// `φ·ν ≥ −tol` and that ν is a left eigenvector of `D` and each `Mᵢ` to
/// residual `tol`. Also records the smallest positive-definiteness floors of
/// `D` and of `{aᵢⱼ}`.
pub fn check_compatibility<T: Real>(
    spec: &SystemSpec,
    body: &ConvexBody<T>,
    sampling: &CompatSampling,
    tol: f64,
) -> Result<CompatibilityReport, SystemError> {
    if body.dim() != spec.k() {
        return Err(SystemError::Invalid { field: "body".into(), reason: format!("K has dimension {}, system has k = {}", body.dim(), spec.k()) });
    }
    let boundary = body.boundary_samples(sampling.sphere_count, sampling.seed);
    let inward = boundary
        .iter()
        .map(|v| body.inward_vector_samples(v, sampling.inward_per_point))
        .collect::<Result<Vec<_>, _>>()?;
    let tol_t = T::lit(tol);
    let partials = sampling
        .points
        .par_iter()
        .map(|(xf, tf)| -> Result<Partial, SystemError> {
            let x: Vec<T> = from_f64_vec(xf);
            let t = T::lit(*tf);
            let mut part = Partial { m: vec![None; spec.n()], d_floor: f64::INFINITY, ..Default::default() };
            part.a_floor = positive_definite_floor(&spec.a_at(&x, t)?).as_f64();
            for (v, nus) in boundary.iter().zip(&inward) {
                let phi = spec.phi_at(&x, t, v)?;
                let d = spec.d_at(&x, t, v)?;
                let ms = (0..spec.n()).map(|i| spec.m_at(i, &x, t, v)).collect::<Result<Vec<_>, _>>()?;
                part.d_floor = part.d_floor.min(positive_definite_floor(&d).as_f64());
                for nu in nus {
                    part.inward += 1;
                    part.evals += 1;
                    let loc = |value: T| Located { value: value.as_f64(), x: xf.clone(), t: *tf, v: to_f64_vec(v), nu: to_f64_vec(nu) };
                    keep_min(&mut part.phi, loc(dot(&phi, nu)));
                    keep_max(&mut part.d, loc(left_eigenvalue(nu, &d, tol_t)?.residual()));
                    for (slot, mi) in part.m.iter_mut().zip(&ms) {
                        keep_max(slot, loc(left_eigenvalue(nu, mi, tol_t)?.residual()));
                    }
                }
            }
            Ok(part)
        })
        .collect::<Result<Vec<_>, _>>()?;

    // reduce in sample order so ties resolve identically under any scheduling
    let mut worst_phi = None;
    let mut worst_d = None;
    let mut worst_m = vec![None; spec.n()];
    let mut min_d_floor = f64::INFINITY;
    let mut min_a_floor = f64::INFINITY;
    let mut inward_total = 0;
    let mut evals = 0;
    for p in partials {
        if let Some(l) = p.phi {
            keep_min(&mut worst_phi, l);
        }
        if let Some(l) = p.d {
            keep_max(&mut worst_d, l);
        }
        for (slot, l) in worst_m.iter_mut().zip(p.m) {
            if let Some(l) = l {
                keep_max(slot, l);
            }
        }
        min_d_floor = min_d_floor.min(p.d_floor);
        min_a_floor = min_a_floor.min(p.a_floor);
        inward_total += p.inward;
        evals += p.evals;
    }
    let pass = worst_phi.as_ref().is_none_or(|l| l.value >= -tol)
        && worst_d.as_ref().is_none_or(|l| l.value <= tol)
        && worst_m.iter().flatten().all(|l| l.value <= tol);
    Ok(CompatibilityReport {
        check: "compatibility".into(),
        pass,
        tol,
        worst_phi_deficit: worst_phi,
        worst_d_residual: worst_d,
        worst_m_residual: worst_m,
        min_d_floor,
        min_a_floor,
        parabolic: min_d_floor > 0.0 && min_a_floor > 0.0,
        samples: SampleCounts {
            spacetime_points: sampling.points.len(),
            boundary_points: boundary.len(),
            inward_vectors: inward_total / sampling.points.len().max(1),
            evaluations: evals,
        },
    })
}

/// Empirical Lipschitz-in-z constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub c: f64,
    pub m: Vec<f64>,
    pub p: f64,
    /// Declared constants that the estimate exceeds.
    pub exceeded: Vec<String>,
}

/// Largest difference quotient of `D`, `Mᵢ` (operator norm) and `φ` over
/// `pairs` random pairs of states drawn from the convex hull of `states`, at
/// random `(x,t)` from `points`. Warns when a declared constant is exceeded.
pub fn estimate_lipschitz(
    spec: &SystemSpec,
    states: &[Vec<f64>],
    points: &[(Vec<f64>, f64)],
    pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate, SystemError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = LipschitzEstimate { c: 0.0, m: vec![0.0; spec.n()], p: 0.0, exceeded: Vec::new() };
    if states.is_empty() || points.is_empty() {
        return Ok(est);
    }
    let hull_point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let a = &states[rng.gen_range(0..states.len())];
        let b = &states[rng.gen_range(0..states.len())];
        let s: f64 = rng.gen_range(0.0..1.0);
        a.iter().zip(b).map(|(x, y)| (1.0 - s) * x + s * y).collect()
    };
    for _ in 0..pairs {
        let (x, t) = &points[rng.gen_range(0..points.len())];
        let z1 = hull_point(&mut rng);
        let z2 = hull_point(&mut rng);
        let dz = norm(&sub(&z1, &z2));
        if dz <= 1e-12 {
            continue;
        }
        let dd = spec.d_at(x, *t, &z1)?;
        let dd2 = spec.d_at(x, *t, &z2)?;
        let diff = Mat::from_row_major(spec.k(), spec.k(), sub(dd.as_slice(), dd2.as_slice()));
        est.c = est.c.max(diff.operator_norm() / dz);
        for i in 0..spec.n() {
            let m1 = spec.m_at(i, x, *t, &z1)?;
            let m2 = spec.m_at(i, x, *t, &z2)?;
            let diff = Mat::from_row_major(spec.k(), spec.k(), sub(m1.as_slice(), m2.as_slice()));
            est.m[i] = est.m[i].max(diff.operator_norm() / dz);
        }
        est.p = est.p.max(norm(&sub(&spec.phi_at(x, *t, &z1)?, &spec.phi_at(x, *t, &z2)?)) / dz);
    }
    let declared = spec.lipschitz();
    let slack = 1e-9;
    if est.c > declared.c + slack {
        est.exceeded.push(format!("c: declared {} < estimated {}", declared.c, est.c));
    }
    for i in 0..spec.n() {
        if est.m[i] > declared.m[i] + slack {
            est.exceeded.push(format!("m[{i}]: declared {} < estimated {}", declared.m[i], est.m[i]));
        }
    }
    if est.p > declared.p + slack {
        est.exceeded.push(format!("p: declared {} < estimated {}", declared.p, est.p));
    }
    for w in &est.exceeded {
        log::warn!("Lipschitz constant exceeded on trajectory hull: {w}");
    }
    Ok(est)
}
