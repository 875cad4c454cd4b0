//! Experiment harness: TOML-configured runs producing deterministic CSV
//! traces, plus a comparator for two finished traces.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::problems::{
    self, gen_synthetic_logistic, gen_synthetic_ridge, gen_synthetic_softmax, load_libsvm,
    LogisticProblem, Problem, ProblemError, RidgeProblem, SoftmaxProblem,
};
use crate::sim::{SimExecutor, StragglerModel};
use crate::solver::{
    self, DirectionMode, FirstOrderConfig, HessianMode, SolveTrace, SolverConfig, SolverError,
    Termination,
};

/// Environment variable that redirects all trace output into a directory.
pub const OUTPUT_DIR_ENV: &str = "OSN_OUTPUT_DIR";

pub const CSV_HEADER: &str =
    "iter,f_value,grad_norm,step_alpha,vt_grad,vt_hess,vt_linesearch,vt_cumulative,workers_used";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl HarnessError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

fn config_err(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Configuration schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub solver: SolverSection,
    #[serde(default)]
    pub straggler: StragglerSection,
    #[serde(default)]
    pub seed: u64,
    /// Trace destination; relative paths resolve against the working
    /// directory, or against `OSN_OUTPUT_DIR` when set.
    pub output: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// `logistic`, `softmax`, or `ridge`.
    pub kind: String,
    #[serde(default)]
    pub lambda: f64,
    /// Coding block size for the distributed gradient.
    #[serde(default = "default_coding_block")]
    pub coding_block: usize,
    /// LIBSVM file to load; mutually exclusive with `synthetic`.
    pub dataset: Option<String>,
    pub synthetic: Option<SyntheticConfig>,
}

fn default_coding_block() -> usize {
    64
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_samples: usize,
    pub num_features: usize,
    #[serde(default)]
    pub num_classes: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// `newton`, `gd`, or `nag`.
    pub method: String,
    /// `strongly-convex` or `weakly-convex` (newton only).
    #[serde(default = "default_direction")]
    pub direction: String,
    /// `oversketched` or `exact` (newton only).
    #[serde(default = "default_hessian")]
    pub hessian: String,
    #[serde(default)]
    pub sketch_dim: usize,
    #[serde(default)]
    pub block_dim: usize,
    #[serde(default)]
    pub over_provision: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_true")]
    pub line_search: bool,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_shards")]
    pub num_shards: usize,
}

fn default_direction() -> String {
    "strongly-convex".into()
}
fn default_hessian() -> String {
    "oversketched".into()
}
fn default_max_iters() -> usize {
    50
}
fn default_grad_tol() -> f64 {
    1e-8
}
fn default_true() -> bool {
    true
}
fn default_beta() -> f64 {
    0.1
}
fn default_shards() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StragglerSection {
    #[serde(default = "default_prob")]
    pub prob: f64,
    #[serde(default = "default_slowdown")]
    pub slowdown: f64,
    #[serde(default)]
    pub invoke_overhead: f64,
}

fn default_prob() -> f64 {
    0.02
}
fn default_slowdown() -> f64 {
    180.0 / 135.0
}

impl Default for StragglerSection {
    fn default() -> Self {
        Self {
            prob: default_prob(),
            slowdown: default_slowdown(),
            invoke_overhead: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_validated(&text)
    }

    /// Parses TOML text and runs the same validation as `from_path`.
    pub fn from_str_validated(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| config_err("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match self.problem.kind.as_str() {
            "logistic" | "softmax" | "ridge" => {}
            other => {
                return Err(config_err(
                    "problem.kind",
                    format!("unknown kind {other:?} (expected logistic, softmax, or ridge)"),
                ))
            }
        }
        match (&self.problem.dataset, &self.problem.synthetic) {
            (None, None) => {
                return Err(config_err(
                    "problem",
                    "one of `dataset` or `synthetic` is required",
                ))
            }
            (Some(_), Some(_)) => {
                return Err(config_err(
                    "problem",
                    "`dataset` and `synthetic` are mutually exclusive",
                ))
            }
            _ => {}
        }
        if let Some(syn) = &self.problem.synthetic {
            if syn.num_samples == 0 || syn.num_features == 0 {
                return Err(config_err(
                    "problem.synthetic",
                    "num_samples and num_features must be positive",
                ));
            }
            if self.problem.kind == "softmax" && syn.num_classes < 2 {
                return Err(config_err(
                    "problem.synthetic.num_classes",
                    "softmax needs at least 2 classes",
                ));
            }
        }
        if self.problem.coding_block == 0 {
            return Err(config_err("problem.coding_block", "must be positive"));
        }
        if self.problem.lambda < 0.0 {
            return Err(config_err("problem.lambda", "must be nonnegative"));
        }
        match self.solver.method.as_str() {
            "newton" | "gd" | "nag" => {}
            other => {
                return Err(config_err(
                    "solver.method",
                    format!("unknown method {other:?} (expected newton, gd, or nag)"),
                ))
            }
        }
        if self.solver.method == "newton" {
            match self.solver.direction.as_str() {
                "strongly-convex" | "weakly-convex" => {}
                other => {
                    return Err(config_err(
                        "solver.direction",
                        format!("unknown direction {other:?}"),
                    ))
                }
            }
            match self.solver.hessian.as_str() {
                "oversketched" | "exact" => {}
                other => {
                    return Err(config_err(
                        "solver.hessian",
                        format!("unknown hessian mode {other:?}"),
                    ))
                }
            }
            if self.solver.hessian == "oversketched" {
                if self.solver.sketch_dim == 0 || self.solver.block_dim == 0 {
                    return Err(config_err(
                        "solver.sketch_dim",
                        "oversketched mode needs sketch_dim and block_dim",
                    ));
                }
                if self.solver.sketch_dim % self.solver.block_dim != 0 {
                    return Err(config_err(
                        "solver.sketch_dim",
                        "must be a multiple of solver.block_dim",
                    ));
                }
            }
        }
        if !(0.0 < self.solver.beta && self.solver.beta <= 0.5) {
            return Err(config_err("solver.beta", "must be in (0, 1/2]"));
        }
        if !(0.0..=1.0).contains(&self.straggler.prob) {
            return Err(config_err("straggler.prob", "must be in [0, 1]"));
        }
        if self.straggler.slowdown < 1.0 {
            return Err(config_err("straggler.slowdown", "must be at least 1"));
        }
        if self.output.is_empty() {
            return Err(config_err("output", "must be nonempty"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub termination: Termination,
    pub iterations: usize,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub total_vt: f64,
    pub csv_path: PathBuf,
}

impl RunSummary {
    /// Process exit code for this outcome: 0 converged, 2 iteration budget
    /// exhausted, 3 line search stalled.
    pub fn exit_code(&self) -> i32 {
        match self.termination {
            Termination::Converged => 0,
            Termination::MaxIters => 2,
            Termination::LineSearchStalled => 3,
        }
    }
}

fn build_problem(cfg: &ExperimentConfig) -> Result<Box<dyn Problem>, HarnessError> {
    let pc = &cfg.problem;
    let data = if let Some(path) = &pc.dataset {
        load_libsvm(Path::new(path), None)?
    } else {
        let syn = pc.synthetic.as_ref().unwrap();
        match pc.kind.as_str() {
            "logistic" => gen_synthetic_logistic(syn.num_samples, syn.num_features, syn.seed).0,
            "softmax" => {
                gen_synthetic_softmax(syn.num_samples, syn.num_features, syn.num_classes, syn.seed)
                    .0
            }
            "ridge" => gen_synthetic_ridge(syn.num_samples, syn.num_features, syn.seed).0,
            _ => unreachable!("validated"),
        }
    };
    let block = pc.coding_block;
    Ok(match pc.kind.as_str() {
        "logistic" => Box::new(LogisticProblem::new(data, pc.lambda, block)?),
        "softmax" => Box::new(SoftmaxProblem::new(data, block)?),
        "ridge" => Box::new(RidgeProblem::new(data, pc.lambda, block)?),
        _ => unreachable!("validated"),
    })
}

fn resolve_output(cfg_output: &str, out_override: Option<&Path>) -> PathBuf {
    if let Some(p) = out_override {
        return p.to_path_buf();
    }
    let path = PathBuf::from(cfg_output);
    if path.is_relative() {
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            return PathBuf::from(dir).join(path);
        }
    }
    path
}

fn fmt_row(
    iter: usize,
    f_value: f64,
    grad_norm: f64,
    step_alpha: f64,
    vt_grad: f64,
    vt_hess: f64,
    vt_ls: f64,
    vt_cum: f64,
    workers: u64,
) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{iter},{f_value:.17e},{grad_norm:.17e},{step_alpha:.17e},{vt_grad:.17e},{vt_hess:.17e},{vt_ls:.17e},{vt_cum:.17e},{workers}"
    );
    s
}

/// Write a finished trace as CSV. One row per iteration, flushed as written.
fn write_trace(trace: &SolveTrace, path: &Path) -> Result<f64, HarnessError> {
    let io_err = |source: std::io::Error| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    writeln!(file, "{CSV_HEADER}").map_err(io_err)?;
    let mut vt_cum = 0.0;
    for r in &trace.records {
        vt_cum += r.vt_gradient + r.vt_hessian + r.vt_linesearch;
        let row = fmt_row(
            r.iter,
            r.f_value,
            r.grad_norm,
            r.step_alpha,
            r.vt_gradient,
            r.vt_hessian,
            r.vt_linesearch,
            vt_cum,
            r.workers_used,
        );
        writeln!(file, "{row}").map_err(io_err)?;
        file.flush().map_err(io_err)?;
    }
    Ok(vt_cum)
}

/// Load a config, run the experiment, and write the trace CSV.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed_override: Option<u64>,
    out_override: Option<&Path>,
) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let seed_val = seed_override.unwrap_or(cfg.seed);
    let problem = build_problem(cfg)?;
    let model = StragglerModel::new(
        cfg.straggler.prob,
        cfg.straggler.slowdown,
        cfg.straggler.invoke_overhead,
        crate::seed::derive(seed_val, 0),
    );
    let mut exec = SimExecutor::new(model);
    let w0 = vec![0.0; problem.dim()];
    let sc = &cfg.solver;
    let trace = match sc.method.as_str() {
        "newton" => {
            let direction = if sc.direction == "weakly-convex" {
                DirectionMode::WeaklyConvex
            } else {
                DirectionMode::StronglyConvex
            };
            let hessian = if sc.hessian == "exact" {
                HessianMode::Exact
            } else {
                HessianMode::OverSketched
            };
            let mut scfg = SolverConfig::new(direction, hessian);
            scfg.sketch_dim = sc.sketch_dim;
            scfg.block_dim = sc.block_dim;
            scfg.over_provision = sc.over_provision;
            scfg.max_iters = sc.max_iters;
            scfg.grad_tol = sc.grad_tol;
            scfg.line_search = sc.line_search;
            scfg.beta = sc.beta;
            scfg.num_shards = sc.num_shards;
            scfg.seed = crate::seed::derive(seed_val, 1);
            solver::solve(problem.as_ref(), &w0, &scfg, &mut exec)?
        }
        method => {
            let fcfg = FirstOrderConfig {
                max_iters: sc.max_iters,
                grad_tol: sc.grad_tol,
                beta: sc.beta,
                num_shards: sc.num_shards,
                ..FirstOrderConfig::default()
            };
            if method == "gd" {
                solver::gd_solve(problem.as_ref(), &w0, &fcfg, &mut exec)?
            } else {
                solver::nag_solve(problem.as_ref(), &w0, &fcfg, &mut exec)?
            }
        }
    };
    let csv_path = resolve_output(&cfg.output, out_override);
    let total_vt = write_trace(&trace, &csv_path)?;
    let last = trace.records.last();
    Ok(RunSummary {
        termination: trace.termination,
        iterations: trace.records.len(),
        final_f: last.map_or(f64::NAN, |r| r.f_value),
        final_grad_norm: last.map_or(f64::NAN, |r| r.grad_norm),
        total_vt,
        csv_path,
    })
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TraceSummary {
    pub iterations: usize,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub total_vt: f64,
}

pub fn read_trace(path: &Path) -> Result<TraceSummary, HarnessError> {
    let io_err = |source: std::io::Error| HarnessError::Io {
        path: path.display().to_string(),
        source,
    };
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != CSV_HEADER {
        return Err(config_err(
            "csv",
            format!("{}: unexpected header {header:?}", path.display()),
        ));
    }
    let mut summary = TraceSummary {
        iterations: 0,
        final_f: f64::NAN,
        final_grad_norm: f64::NAN,
        total_vt: 0.0,
    };
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(config_err(
                "csv",
                format!("{}:{}: expected 9 fields, got {}", path.display(), i + 2, fields.len()),
            ));
        }
        let num = |k: usize| -> Result<f64, HarnessError> {
            fields[k].parse().map_err(|e| {
                config_err(
                    "csv",
                    format!("{}:{}: bad number {:?}: {e}", path.display(), i + 2, fields[k]),
                )
            })
        };
        summary.iterations += 1;
        summary.final_f = num(1)?;
        summary.final_grad_norm = num(2)?;
        summary.total_vt = num(7)?;
    }
    Ok(summary)
}

/// Render a comparison of two finished traces as a small ratio table
/// (`a / b`); ratios against zero are reported as `inf`.
pub fn compare_runs(a: &Path, b: &Path) -> Result<String, HarnessError> {
    let ta = read_trace(a)?;
    let tb = read_trace(b)?;
    let ratio = |x: f64, y: f64| -> String {
        if y == 0.0 {
            "inf".into()
        } else {
            format!("{:.4}", x / y)
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "metric,a,b,ratio");
    let _ = writeln!(
        out,
        "iterations,{},{},{}",
        ta.iterations,
        tb.iterations,
        ratio(ta.iterations as f64, tb.iterations as f64)
    );
    let _ = writeln!(
        out,
        "total_vt,{:.6},{:.6},{}",
        ta.total_vt,
        tb.total_vt,
        ratio(ta.total_vt, tb.total_vt)
    );
    let _ = writeln!(
        out,
        "final_f,{:.6e},{:.6e},{}",
        ta.final_f,
        tb.final_f,
        ratio(ta.final_f, tb.final_f)
    );
    let _ = writeln!(
        out,
        "final_grad_norm,{:.6e},{:.6e},{}",
        ta.final_grad_norm,
        tb.final_grad_norm,
        ratio(ta.final_grad_norm, tb.final_grad_norm)
    );
    Ok(out)
}

// keep the convenience re-export close to the things the CLI needs
pub use problems::write_libsvm;

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(dir: &Path) -> ExperimentConfig {
        let text = format!(
            r#"
seed = 7
output = "{}"

[problem]
kind = "logistic"
lambda = 1e-3

[problem.synthetic]
num_samples = 120
num_features = 6
seed = 3

[solver]
method = "newton"
direction = "strongly-convex"
hessian = "oversketched"
sketch_dim = 60
block_dim = 6
over_provision = 1
max_iters = 40
grad_tol = 1e-8
num_shards = 4
"#,
            dir.join("trace.csv").display()
        );
        toml::from_str(&text).unwrap()
    }

    #[test]
    fn run_writes_expected_header_and_converges() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path());
        let summary = run_experiment(&cfg, None, None).unwrap();
        assert_eq!(summary.exit_code(), 0);
        let text = std::fs::read_to_string(&summary.csv_path).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), summary.iterations + 1);
    }

    #[test]
    fn replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path());
        let s1 = run_experiment(&cfg, None, Some(&dir.path().join("a.csv"))).unwrap();
        let s2 = run_experiment(&cfg, None, Some(&dir.path().join("b.csv"))).unwrap();
        let a = std::fs::read(&s1.csv_path).unwrap();
        let b = std::fs::read(&s2.csv_path).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn seed_override_changes_trace() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path());
        let s1 = run_experiment(&cfg, Some(1), Some(&dir.path().join("a.csv"))).unwrap();
        let s2 = run_experiment(&cfg, Some(2), Some(&dir.path().join("b.csv"))).unwrap();
        let a = std::fs::read(&s1.csv_path).unwrap();
        let b = std::fs::read(&s2.csv_path).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn missing_dataset_and_synthetic_rejected() {
        let text = r#"
output = "x.csv"
[problem]
kind = "logistic"
[solver]
method = "gd"
"#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        match cfg.validate() {
            Err(HarnessError::Config { field, .. }) => assert_eq!(field, "problem"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn sketch_dim_multiple_check() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_config(dir.path());
        cfg.solver.sketch_dim = 35;
        match cfg.validate() {
            Err(HarnessError::Config { field, .. }) => assert_eq!(field, "solver.sketch_dim"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn compare_identical_traces_has_unit_ratios() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path());
        let s1 = run_experiment(&cfg, None, Some(&dir.path().join("a.csv"))).unwrap();
        let s2 = run_experiment(&cfg, None, Some(&dir.path().join("b.csv"))).unwrap();
        let table = compare_runs(&s1.csv_path, &s2.csv_path).unwrap();
        for line in table.lines().skip(1) {
            let ratio = line.rsplit(',').next().unwrap();
            assert_eq!(ratio, "1.0000", "line {line:?}");
        }
    }

    #[test]
    fn read_trace_rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "nope\n1,2\n").unwrap();
        assert!(matches!(
            read_trace(&path),
            Err(HarnessError::Config { .. })
        ));
    }
}
