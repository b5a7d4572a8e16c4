//! Command orchestration: simulate, check compatibility, verify the maximum
//! principles and the inequality layers, and write the reports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::convex::ConvexBody;
use crate::harness::{
    default_strong_epsilons, distance_field, effective_coefficients, gamma_field, strong_mp_check, weak_mp_check,
    CoefficientSummary, DistanceField, HarnessError, Status,
};
use crate::report::{csv_summary, to_json, to_value};
use crate::scenario::{Scenario, ScenarioError};
use crate::solver::{run_scenario, write_snapshots, SolverError, Trajectory};
use crate::system::{check_compatibility, estimate_lipschitz, LipschitzEstimate, SystemError};
use crate::viscosity::{default_tolerance, ell_report, ell_residuals, supersolution_check, EllReport, TouchOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Simulate,
    CheckCompat,
    VerifyMp,
    VerifyViscosity,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    CsvSummary,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl PipelineError {
    /// Tool failures (I/O) as opposed to mathematical findings.
    pub fn is_io(&self) -> bool {
        matches!(self, PipelineError::Io { .. } | PipelineError::Solver(SolverError::Io(_)))
    }
}

/// The inequality report together with the coefficient contracts it rests on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllResidualsReport {
    #[serde(flatten)]
    pub report: EllReport,
    pub coefficients: CoefficientSummary,
    pub lipschitz_estimate: LipschitzEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// `(file stem, report)` in execution order.
    pub reports: Vec<(String, Value)>,
    pub files: Vec<PathBuf>,
    pub passed: bool,
}

impl Outcome {
    pub fn report(&self, stem: &str) -> Option<&Value> {
        self.reports.iter().find(|(s, _)| s == stem).map(|(_, v)| v)
    }
}

struct Run<'a> {
    scenario: &'a Scenario,
    out: &'a Path,
    body: ConvexBody<f64>,
    traj: Option<Trajectory<f64>>,
    field: Option<DistanceField<f64>>,
    outcome: Outcome,
}

impl<'a> Run<'a> {
    fn record<R: Serialize>(&mut self, stem: &str, report: &R) {
        let v = to_value(report);
        let pass = v.get("pass").and_then(Value::as_bool).unwrap_or(true);
        log::info!("{stem}: {}", if pass { "pass" } else { "FAIL" });
        self.outcome.passed &= pass;
        self.outcome.reports.push((stem.into(), v));
    }

    fn trajectory(&mut self, write: bool) -> Result<(), PipelineError> {
        if self.traj.is_none() {
            log::info!("simulating {}", self.scenario.name());
            self.traj = Some(run_scenario(&self.scenario.problem()?)?);
        }
        if write {
            let manifest = write_snapshots(self.traj.as_ref().expect("trajectory"), self.out)?;
            let path = self.out.join("manifest.json");
            write_file(&path, &to_json(&manifest))?;
            self.outcome.files.push(path);
        }
        Ok(())
    }

    fn field(&mut self) -> Result<(), PipelineError> {
        self.trajectory(false)?;
        if self.field.is_none() {
            self.field = Some(distance_field(self.traj.as_ref().expect("trajectory"), &self.body)?);
        }
        Ok(())
    }

    fn compat(&mut self) -> Result<(), PipelineError> {
        let tol = self.scenario.tolerances().compat;
        let report = check_compatibility(&self.scenario.spec, &self.body, &self.scenario.compat_sampling(), tol)?;
        self.record("compat", &report);
        Ok(())
    }

    fn mp(&mut self) -> Result<(), PipelineError> {
        self.field()?;
        let field = self.field.as_ref().expect("distance field");
        let tols = self.scenario.tolerances();
        let weak = weak_mp_check(field, tols.weak);
        let (dt, df) = default_strong_epsilons(&self.body);
        let mut strong = strong_mp_check(field, tols.eps_touch.unwrap_or(dt), tols.eps_flat.unwrap_or(df));
        if weak.status != Status::Pass {
            strong.status = Status::NotApplicable;
            strong.pass = false;
        }
        self.record("weak_mp", &weak);
        self.record("strong_mp", &strong);
        Ok(())
    }

    fn viscosity(&mut self) -> Result<(), PipelineError> {
        self.field()?;
        let traj = self.traj.as_ref().expect("trajectory");
        let field = self.field.as_ref().expect("distance field");
        let tols = self.scenario.tolerances().clone();
        let gamma = gamma_field(traj)?;
        let (coeffs, summary) = effective_coefficients(traj, field, &gamma, tols.eig)?;
        let states: Vec<Vec<f64>> = traj.snapshots.iter().flat_map(|s| s.values.chunks(traj.k()).map(<[f64]>::to_vec)).collect();
        let points = self.scenario.compat_sampling().points;
        let lipschitz = estimate_lipschitz(&traj.spec, &states, &points, 10_000, self.scenario.seed())?;
        for w in &lipschitz.exceeded {
            log::warn!("declared Lipschitz constant exceeded: {w}");
        }
        let tol = tols.resid.unwrap_or_else(|| default_tolerance(traj));
        let residuals = ell_residuals(traj, field, &coeffs);
        let ell = EllResidualsReport { report: ell_report(&residuals, tol), coefficients: summary, lipschitz_estimate: lipschitz };
        let opts = TouchOptions { radius: tols.stencil_radius, trials: tols.trials, seed: self.scenario.seed() };
        let sup = supersolution_check(field, &coeffs, tol, &opts);
        self.record("ell_residuals", &ell);
        self.record("supersolution", &sup);
        Ok(())
    }

    fn emit(&mut self, format: Format) -> Result<(), PipelineError> {
        match format {
            Format::Json => {
                for (stem, v) in &self.outcome.reports {
                    let path = self.out.join(format!("{stem}.json"));
                    write_file(&path, &to_json(v))?;
                    self.outcome.files.push(path);
                }
            }
            Format::CsvSummary if !self.outcome.reports.is_empty() => {
                let rows: Vec<Value> = self.outcome.reports.iter().map(|(_, v)| v.clone()).collect();
                let path = self.out.join("summary.csv");
                write_file(&path, &csv_summary(&rows))?;
                self.outcome.files.push(path);
            }
            Format::CsvSummary => {}
        }
        Ok(())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|source| PipelineError::Io { path: path.display().to_string(), source })
}

/// Runs `command` on `scenario`, writing outputs under `out`. Check failures
/// are reported through [`Outcome::passed`]; errors abort the run.
pub fn run_command(command: Command, scenario: &Scenario, out: &Path, format: Format) -> Result<Outcome, PipelineError> {
    std::fs::create_dir_all(out).map_err(|source| PipelineError::Io { path: out.display().to_string(), source })?;
    let mut run = Run {
        scenario,
        out,
        body: scenario.body()?,
        traj: None,
        field: None,
        outcome: Outcome { reports: Vec::new(), files: Vec::new(), passed: true },
    };
    let result = match command {
        Command::Simulate => run.trajectory(true),
        Command::CheckCompat => run.compat(),
        Command::VerifyMp => run.mp(),
        Command::VerifyViscosity => run.viscosity(),
        Command::All => run.compat().and_then(|_| run.trajectory(true)).and_then(|_| run.mp()).and_then(|_| run.viscosity()),
    };
    run.emit(format)?;
    result?;
    Ok(run.outcome)
}
