//! Scenario files: system data, body, grid, initial and boundary data,
//! tolerances and seed, in JSON with coefficients as expression strings.
//! A small library of scenarios is compiled in.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::convex::{ConvexBody, ConvexError};
use crate::expr::{parse_expression, Expr, ParseError, Scope};
use crate::scalar::{from_f64_vec, Real};
use crate::solver::{Dirichlet, Grid, Problem, Scheme, SolverError};
use crate::system::{CompatSampling, Lipschitz, SystemError, SystemSpec};

const LIBRARY: &[(&str, &str)] = &[
    ("heat-interval", include_str!("../scenarios/heat-interval.json")),
    ("ball-sink", include_str!("../scenarios/ball-sink.json")),
    ("simplex-face", include_str!("../scenarios/simplex-face.json")),
    ("anisotropic-2d", include_str!("../scenarios/anisotropic-2d.json")),
    ("incompatible-sink", include_str!("../scenarios/incompatible-sink.json")),
    ("instant-detachment", include_str!("../scenarios/instant-detachment.json")),
    ("coupled-box", include_str!("../scenarios/coupled-box.json")),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario `{name}`; built-ins are: {}", available.join(", "))]
    UnknownBuiltin { name: String, available: Vec<String> },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{origin}: {source}")]
    Json { origin: String, source: serde_json::Error },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("{field}: {source}")]
    Parse { field: String, source: ParseError },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("body: {0}")]
    Convex(#[from] ConvexError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum BodySpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Hpoly { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Intersection { members: Vec<BodySpec> },
}

impl BodySpec {
    pub fn build<T: Real>(&self) -> Result<ConvexBody<T>, ConvexError> {
        match self {
            BodySpec::Box { lo, hi } => ConvexBody::boxed(&from_f64_vec(lo), &from_f64_vec(hi)),
            BodySpec::Hpoly { normals, offsets } => {
                ConvexBody::hpolytope(normals.iter().map(|r| from_f64_vec(r)).collect(), from_f64_vec(offsets))
            }
            BodySpec::Ball { center, radius } => ConvexBody::ball(from_f64_vec(center), T::lit(*radius)),
            BodySpec::Intersection { members } => {
                ConvexBody::intersection(members.iter().map(|m| m.build()).collect::<Result<_, _>>()?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Slack on the signed distance in the weak maximum principle.
    pub weak: f64,
    /// `φ·ν` slack and eigenvector residual in the compatibility check.
    pub compat: f64,
    /// Eigenvector residual when extracting `μ̃`, `λ̃ᵢ`.
    pub eig: f64,
    /// Residual tolerance for both inequality layers; derived from the run when absent.
    pub resid: Option<f64>,
    pub eps_touch: Option<f64>,
    pub eps_flat: Option<f64>,
    pub stencil_radius: usize,
    pub trials: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { weak: 1e-8, compat: 1e-8, eig: 1e-8, resid: None, eps_touch: None, eps_flat: None, stencil_radius: 2, trials: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub grid: GridSpec,
    pub body: BodySpec,
    pub a: Vec<Vec<String>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<String>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<Vec<String>>>,
    pub phi: Vec<String>,
    pub lipschitz: Lipschitz,
    pub initial: Vec<String>,
    pub boundary: Vec<String>,
    pub t_end: f64,
    pub snapshot_interval: f64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub h: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub spec: SystemSpec,
    pub initial: Vec<Expr>,
    pub boundary: Vec<Expr>,
}

pub fn builtin_names() -> Vec<&'static str> {
    LIBRARY.iter().map(|(n, _)| *n).collect()
}

pub fn builtin(name: &str) -> Option<ScenarioFile> {
    LIBRARY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| serde_json::from_str(src).expect("built-in scenarios are well-formed"))
}

/// A built-in name, or a path to a scenario file.
pub fn load_scenario(source: &str, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let file = match builtin(source) {
        Some(f) => f,
        None => {
            let path = Path::new(source);
            if !path.exists() {
                return Err(ScenarioError::UnknownBuiltin {
                    name: source.into(),
                    available: builtin_names().into_iter().map(String::from).collect(),
                });
            }
            let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
            serde_json::from_str(&text).map_err(|e| ScenarioError::Json { origin: path.display().to_string(), source: e })?
        }
    };
    Scenario::new(file, overrides)
}

fn parse_all(field: &str, srcs: &[String], scope: &Scope) -> Result<Vec<Expr>, ScenarioError> {
    srcs.iter()
        .enumerate()
        .map(|(i, s)| parse_expression(s, scope).map_err(|source| ScenarioError::Parse { field: format!("{field}[{i}]"), source }))
        .collect()
}

impl Scenario {
    pub fn new(mut file: ScenarioFile, overrides: &Overrides) -> Result<Self, ScenarioError> {
        if let Some(h) = overrides.h {
            file.grid.h = h;
        }
        if let Some(t) = overrides.t_end {
            file.t_end = t;
        }
        if let Some(s) = overrides.seed {
            file.seed = s;
        }
        if let Some(t) = overrides.tol {
            file.tolerances.resid = Some(t);
        }
        let (n, k) = (file.n, file.k);
        if file.initial.len() != k {
            return Err(invalid("initial data", format!("expected {k} expressions")));
        }
        if file.boundary.len() != k {
            return Err(invalid("boundary data", format!("expected {k} expressions")));
        }
        if file.grid.lo.len() != n || file.grid.hi.len() != n {
            return Err(invalid("grid", format!("expected {n} bounds per side")));
        }
        if file.grid.lo.iter().zip(&file.grid.hi).any(|(l, h)| !(l < h)) {
            return Err(invalid("grid", "every lower bound must be below its upper bound"));
        }
        if !(file.grid.h > 0.0 && file.grid.h.is_finite()) {
            return Err(invalid("grid.h", "spacing must be positive"));
        }
        if !(file.t_end > 0.0 && file.t_end.is_finite()) {
            return Err(invalid("t_end", "must be positive"));
        }
        if !(file.snapshot_interval > 0.0) {
            return Err(invalid("snapshot_interval", "must be positive"));
        }
        let ratio = file.t_end / file.snapshot_interval;
        if (ratio.round() * file.snapshot_interval - file.t_end).abs() > 1e-9 {
            return Err(invalid("snapshot_interval", format!("does not divide t_end = {}", file.t_end)));
        }
        let tol = &file.tolerances;
        for (name, v) in [("tolerances.weak", tol.weak), ("tolerances.compat", tol.compat), ("tolerances.eig", tol.eig)] {
            if !(v >= 0.0) {
                return Err(invalid(name, "must be nonnegative"));
            }
        }
        if tol.trials == 0 {
            return Err(invalid("tolerances.trials", "must be positive"));
        }
        let spec = SystemSpec::from_sources(n, k, &file.a, &file.d, &file.m, &file.phi, file.lipschitz.clone())?;
        let initial = parse_all("initial", &file.initial, &Scope::new(n, false, 0))?;
        let boundary = parse_all("boundary", &file.boundary, &Scope::new(n, true, 0))?;
        let body: ConvexBody<f64> = file.body.build()?;
        if body.dim() != k {
            return Err(invalid("body", format!("K has dimension {}, expected {k}", body.dim())));
        }
        Ok(Self { file, spec, initial, boundary })
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.file.tolerances
    }

    pub fn body<T: Real>(&self) -> Result<ConvexBody<T>, ScenarioError> {
        Ok(self.file.body.build()?)
    }

    pub fn grid<T: Real>(&self) -> Result<Grid<T>, ScenarioError> {
        let g = &self.file.grid;
        Ok(Grid::with_spacing(&from_f64_vec(&g.lo), &from_f64_vec(&g.hi), T::lit(g.h))?)
    }

    pub fn problem<T: Real>(&self) -> Result<Problem<T>, ScenarioError> {
        Ok(Problem {
            spec: self.spec.clone(),
            grid: self.grid()?,
            initial: self.initial.clone(),
            boundary: Dirichlet { exprs: self.boundary.clone() },
            t_end: self.file.t_end,
            snapshot_interval: self.file.snapshot_interval,
            scheme: self.file.scheme,
        })
    }

    /// Space-time points on a coarse lattice of the domain at `t = 0`,
    /// `t_end/2` and `t_end`, with dense sphere sampling for balls.
    pub fn compat_sampling(&self) -> CompatSampling {
        let g = &self.file.grid;
        let per_axis = if self.file.n == 1 { 11 } else { 6 };
        let axis = |i: usize| -> Vec<f64> {
            (0..per_axis).map(|j| g.lo[i] + (g.hi[i] - g.lo[i]) * j as f64 / (per_axis - 1) as f64).collect()
        };
        let xs: Vec<Vec<f64>> = match self.file.n {
            1 => axis(0).into_iter().map(|x| vec![x]).collect(),
            _ => {
                let (a, b) = (axis(0), axis(1));
                a.iter().flat_map(|&x| b.iter().map(move |&y| vec![x, y])).collect()
            }
        };
        let times = [0.0, 0.5 * self.file.t_end, self.file.t_end];
        let points = times.iter().flat_map(|&t| xs.iter().map(move |x| (x.clone(), t))).collect();
        CompatSampling { points, sphere_count: 1000, inward_per_point: 8, seed: self.file.seed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_loads() {
        for name in builtin_names() {
            let s = load_scenario(name, &Overrides::default()).unwrap();
            assert_eq!(s.name(), name);
            s.problem::<f64>().unwrap();
        }
    }

    #[test]
    fn library_expressions_round_trip() {
        for name in builtin_names() {
            let s = load_scenario(name, &Overrides::default()).unwrap();
            let n = s.file.n;
            for e in s.initial.iter() {
                assert_eq!(&parse_expression(&e.to_string(), &Scope::new(n, false, 0)).unwrap(), e);
            }
            for e in s.boundary.iter() {
                assert_eq!(&parse_expression(&e.to_string(), &Scope::new(n, true, 0)).unwrap(), e);
            }
        }
    }

    #[test]
    fn initial_count_is_validated() {
        let mut f = builtin("simplex-face").unwrap();
        f.initial.pop();
        let err = Scenario::new(f, &Overrides::default()).unwrap_err();
        assert_eq!(err.to_string(), "initial data: expected 2 expressions");
    }

    #[test]
    fn unknown_name_lists_library() {
        let err = load_scenario("no-such-scenario", &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("heat-interval") && err.contains("ball-sink"), "{err}");
    }

    #[test]
    fn bad_coefficient_names_field() {
        let mut f = builtin("heat-interval").unwrap();
        f.d[0][0] = "1 + ".into();
        let err = Scenario::new(f, &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("D[0][0]"), "{err}");
    }

    #[test]
    fn snapshot_interval_must_divide() {
        let mut f = builtin("heat-interval").unwrap();
        f.snapshot_interval = 0.03;
        assert!(Scenario::new(f, &Overrides::default()).is_err());
    }

    #[test]
    fn overrides_apply() {
        let s = load_scenario("heat-interval", &Overrides { h: Some(0.05), t_end: Some(0.02), seed: Some(9), tol: Some(0.1) }).unwrap();
        assert_eq!(s.grid::<f64>().unwrap().len(), 21);
        assert_eq!(s.file.t_end, 0.02);
        assert_eq!(s.seed(), 9);
        assert_eq!(s.tolerances().resid, Some(0.1));
    }

    #[test]
    fn heat_interval_matches_library_entry() {
        let s = load_scenario("heat-interval", &Overrides::default()).unwrap();
        assert_eq!((s.file.n, s.file.k), (1, 1));
        assert_eq!(s.file.body, BodySpec::Box { lo: vec![0.0], hi: vec![1.0] });
        let u = s.initial[0].eval(&crate::expr::Env::new(&[0.5f64], 0.0, &[])).unwrap();
        assert!((u - 0.9).abs() < 1e-15);
    }
}
