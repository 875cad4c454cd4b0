//! Newton iterations driven by sketched or exact Hessians, with distributed
//! Armijo line search, plus gradient-descent and Nesterov baselines run
//! through the same simulator for timing comparisons.

use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::oversketch::{exact_gram, oversketched_hessian, OverSketchError};
use crate::problems::{Problem, ProblemError};
use crate::seed;
use crate::sim::{SimError, SimExecutor, SimTask};
use crate::sketch::OverSketchSpec;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    OverSketch(#[from] OverSketchError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("search direction is not a descent direction (p^T g = {slope})")]
    NotDescent { slope: f64 },
    #[error("iterates diverged (f = {f_value})")]
    Diverged { f_value: f64 },
    #[error("bad solver configuration: {0}")]
    BadConfig(String),
}

/// How the Newton direction is formed from the (approximate) Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMode {
    /// `p = -H^{-1} g` via conjugate gradients.
    StronglyConvex,
    /// `p = -H^dagger g` via the eigendecomposition pseudo-inverse.
    WeaklyConvex,
}

/// Where the per-iteration curvature comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// Sketched Gram with N-of-(N+e) straggler tolerance.
    OverSketched,
    /// Exact distributed Gram, waiting for every worker.
    Exact,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub direction: DirectionMode,
    pub hessian: HessianMode,
    /// Required sketch dimension `m` (a multiple of `block_dim`).
    pub sketch_dim: usize,
    pub block_dim: usize,
    /// Extra blocks `e` launched beyond the required `N`.
    pub over_provision: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub line_search: bool,
    pub beta: f64,
    /// Step-size candidates, descending, all in `(0, 1]`.
    pub candidates: Vec<f64>,
    pub num_shards: usize,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(direction: DirectionMode, hessian: HessianMode) -> Self {
        Self {
            direction,
            hessian,
            sketch_dim: 0,
            block_dim: 0,
            over_provision: 0,
            max_iters: 50,
            grad_tol: 1e-8,
            line_search: true,
            beta: 0.1,
            candidates: default_candidates(),
            num_shards: 10,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        if !(0.0 < self.beta && self.beta <= 0.5) {
            return Err(SolverError::BadConfig(format!(
                "beta must be in (0, 1/2], got {}",
                self.beta
            )));
        }
        if self.candidates.is_empty() {
            return Err(SolverError::BadConfig("empty candidate set".into()));
        }
        for pair in self.candidates.windows(2) {
            if pair[1] >= pair[0] {
                return Err(SolverError::BadConfig(
                    "candidates must be strictly descending".into(),
                ));
            }
        }
        if self.candidates.iter().any(|&a| a <= 0.0 || a > 1.0) {
            return Err(SolverError::BadConfig(
                "candidates must lie in (0, 1]".into(),
            ));
        }
        if self.num_shards == 0 || self.max_iters == 0 {
            return Err(SolverError::BadConfig(
                "num_shards and max_iters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `{1, 1/4, ..., 4^-5}`.
pub fn default_candidates() -> Vec<f64> {
    (0..=5).map(|k| 0.25f64.powi(k)).collect()
}

/// One solver iteration as logged to the trace.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iter: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    pub step_alpha: f64,
    pub direction_norm: f64,
    /// `p^T grad f`, the Armijo slope.
    pub dir_dot_grad: f64,
    /// `p^T H_hat grad f`, the slope of the gradient-norm line search.
    pub dir_h_grad: f64,
    pub vt_gradient: f64,
    pub vt_hessian: f64,
    pub vt_linesearch: f64,
    pub workers_used: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
    /// The iterate at the start of each recorded iteration.
    pub iterates: Vec<Vec<f64>>,
    pub final_w: Vec<f64>,
    pub termination: Termination,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Evaluate the data term of `f` at every candidate point distributedly:
/// each of `num_shards` tasks returns one partial per candidate, the master
/// adds the regularizer. Returns per-candidate values and the virtual time.
fn distributed_values(
    problem: &dyn Problem,
    points: &[Vec<f64>],
    num_shards: usize,
    exec: &mut SimExecutor,
) -> Result<(Vec<f64>, f64), SolverError> {
    let n = problem.num_samples();
    let shards = num_shards.min(n).max(1);
    let chunk = n.div_ceil(shards);
    let mut tasks: Vec<SimTask<'_, Vec<f64>>> = Vec::with_capacity(shards);
    for s in 0..shards {
        let lo = s * chunk;
        let hi = ((s + 1) * chunk).min(n);
        let cost = (hi - lo) as f64 * problem.per_sample_cost_flops() * points.len() as f64;
        tasks.push(SimTask::new(cost, move || {
            points
                .iter()
                .map(|w| problem.value_shard(lo..hi, w))
                .collect()
        }));
    }
    let batch = exec.submit(tasks);
    let (_, clock) = batch.await_first_k(batch.len())?;
    let mut totals = vec![0.0; points.len()];
    for partial in &batch.results {
        for (t, v) in totals.iter_mut().zip(partial) {
            *t += v;
        }
    }
    for (t, w) in totals.iter_mut().zip(points) {
        *t += problem.reg_value(w);
    }
    Ok((totals, clock))
}

/// Same sharding for full gradients at every candidate point.
fn distributed_gradients(
    problem: &dyn Problem,
    points: &[Vec<f64>],
    num_shards: usize,
    exec: &mut SimExecutor,
) -> Result<(Vec<Vec<f64>>, f64), SolverError> {
    let n = problem.num_samples();
    let shards = num_shards.min(n).max(1);
    let chunk = n.div_ceil(shards);
    let mut tasks: Vec<SimTask<'_, Vec<Vec<f64>>>> = Vec::with_capacity(shards);
    for s in 0..shards {
        let lo = s * chunk;
        let hi = ((s + 1) * chunk).min(n);
        let cost = (hi - lo) as f64 * problem.per_sample_cost_flops() * points.len() as f64;
        tasks.push(SimTask::new(cost, move || {
            points
                .iter()
                .map(|w| problem.gradient_shard(lo..hi, w))
                .collect()
        }));
    }
    let batch = exec.submit(tasks);
    let (_, clock) = batch.await_first_k(batch.len())?;
    let mut totals: Vec<Vec<f64>> = points.iter().map(|w| problem.reg_gradient(w)).collect();
    for partial in &batch.results {
        for (t, p) in totals.iter_mut().zip(partial) {
            linalg::axpy(1.0, p, t);
        }
    }
    Ok((totals, clock))
}

fn candidate_points(w: &[f64], p: &[f64], candidates: &[f64]) -> Vec<Vec<f64>> {
    candidates
        .iter()
        .map(|&a| {
            let mut wa = w.to_vec();
            linalg::axpy(a, p, &mut wa);
            wa
        })
        .collect()
}

/// Backtracking Armijo on function values:
/// accept the largest candidate with `f(w + a p) <= f(w) + a beta p^T g`.
/// Returns `(None, vt)` when every candidate fails.
pub fn armijo_select_f(
    problem: &dyn Problem,
    w: &[f64],
    p: &[f64],
    g: &[f64],
    f0: f64,
    beta: f64,
    candidates: &[f64],
    num_shards: usize,
    exec: &mut SimExecutor,
) -> Result<(Option<f64>, f64), SolverError> {
    let slope = linalg::dot(p, g);
    if slope >= 0.0 {
        return Err(SolverError::NotDescent { slope });
    }
    let points = candidate_points(w, p, candidates);
    let (values, vt) = distributed_values(problem, &points, num_shards, exec)?;
    for (&a, &fa) in candidates.iter().zip(&values) {
        if fa <= f0 + a * beta * slope {
            return Ok((Some(a), vt));
        }
    }
    Ok((None, vt))
}

/// Armijo on squared gradient norms with sketched curvature:
/// accept the largest candidate with
/// `||g(w + a p)||^2 <= ||g||^2 + 2 a beta p^T H_hat g`.
pub fn armijo_select_gradsq(
    problem: &dyn Problem,
    w: &[f64],
    p: &[f64],
    g: &[f64],
    h_hat: &DenseMatrix,
    beta: f64,
    candidates: &[f64],
    num_shards: usize,
    exec: &mut SimExecutor,
) -> Result<(Option<f64>, f64), SolverError> {
    let hg = h_hat.matvec(g)?;
    let slope = linalg::dot(p, &hg);
    if slope >= 0.0 {
        return Err(SolverError::NotDescent { slope });
    }
    let g0_sq = linalg::dot(g, g);
    let points = candidate_points(w, p, candidates);
    let (grads, vt) = distributed_gradients(problem, &points, num_shards, exec)?;
    for (&a, ga) in candidates.iter().zip(&grads) {
        if linalg::dot(ga, ga) <= g0_sq + 2.0 * a * beta * slope {
            return Ok((Some(a), vt));
        }
    }
    Ok((None, vt))
}

/// Assemble `H = scale * H_factor_gram + ridge * I` from a (possibly
/// sketched) Gram of the Hessian square root.
fn assemble_hessian(gram: &DenseMatrix, scale: f64, ridge: f64) -> DenseMatrix {
    let mut h = gram.clone();
    h.scale(scale);
    for i in 0..h.rows() {
        h.set(i, i, h.get(i, i) + ridge);
    }
    h.symmetrize();
    h
}

/// Run the Newton iteration to convergence or `max_iters`.
pub fn solve(
    problem: &dyn Problem,
    w0: &[f64],
    cfg: &SolverConfig,
    exec: &mut SimExecutor,
) -> Result<SolveTrace, SolverError> {
    cfg.validate()?;
    let d = problem.dim();
    if w0.len() != d {
        return Err(SolverError::BadConfig(format!(
            "initial iterate has dim {}, problem has {}",
            w0.len(),
            d
        )));
    }
    let mut w = w0.to_vec();
    let mut records = Vec::new();
    let mut iterates = Vec::new();
    let mut termination = Termination::MaxIters;
    for t in 0..cfg.max_iters {
        let tasks_before = exec.tasks_submitted();
        let f_value = problem.value(&w);
        if !f_value.is_finite() || f_value > 1e12 {
            return Err(SolverError::Diverged { f_value });
        }
        let (g, vt_gradient) = problem.gradient(&w, exec)?;
        let grad_norm = linalg::norm(&g);
        if grad_norm <= cfg.grad_tol {
            iterates.push(w.clone());
            records.push(IterationRecord {
                iter: t,
                f_value,
                grad_norm,
                step_alpha: 0.0,
                direction_norm: 0.0,
                dir_dot_grad: 0.0,
                dir_h_grad: 0.0,
                vt_gradient,
                vt_hessian: 0.0,
                vt_linesearch: 0.0,
                workers_used: exec.tasks_submitted() - tasks_before,
            });
            termination = Termination::Converged;
            break;
        }

        let hf = problem.hessian_factor(&w);
        let (gram, vt_hessian) = match cfg.hessian {
            HessianMode::OverSketched => {
                let spec = OverSketchSpec::new(
                    hf.factor.rows(),
                    cfg.sketch_dim,
                    cfg.block_dim,
                    cfg.over_provision,
                    seed::derive(cfg.seed, t as u64),
                )?;
                let (h, timing) = oversketched_hessian(&hf.factor, &spec, exec)?;
                (h, timing.total())
            }
            HessianMode::Exact => {
                let band = if cfg.block_dim > 0 {
                    cfg.block_dim
                } else {
                    hf.factor.rows().div_ceil(cfg.num_shards)
                };
                exact_gram(&hf.factor, band, exec)?
            }
        };
        let h = assemble_hessian(&gram, hf.scale, hf.ridge);

        let p: Vec<f64> = match cfg.direction {
            DirectionMode::StronglyConvex => {
                let sol = linalg::cg_solve(&h, &g, 1e-12, 20 * d.max(10))?;
                sol.iter().map(|v| -v).collect()
            }
            DirectionMode::WeaklyConvex => {
                let sol = linalg::pinv_apply(&h, &g, 1e-10)?;
                sol.iter().map(|v| -v).collect()
            }
        };

        let dir_dot_grad = linalg::dot(&p, &g);
        let dir_h_grad = linalg::dot(&p, &h.matvec(&g)?);
        let (alpha, vt_linesearch) = if cfg.line_search {
            match cfg.direction {
                DirectionMode::StronglyConvex => armijo_select_f(
                    problem,
                    &w,
                    &p,
                    &g,
                    f_value,
                    cfg.beta,
                    &cfg.candidates,
                    cfg.num_shards,
                    exec,
                )?,
                DirectionMode::WeaklyConvex => armijo_select_gradsq(
                    problem,
                    &w,
                    &p,
                    &g,
                    &h,
                    cfg.beta,
                    &cfg.candidates,
                    cfg.num_shards,
                    exec,
                )?,
            }
        } else {
            (Some(1.0), 0.0)
        };

        let workers_used = exec.tasks_submitted() - tasks_before;
        iterates.push(w.clone());
        let Some(alpha) = alpha else {
            records.push(IterationRecord {
                iter: t,
                f_value,
                grad_norm,
                step_alpha: f64::NAN,
                direction_norm: linalg::norm(&p),
                dir_dot_grad,
                dir_h_grad,
                vt_gradient,
                vt_hessian,
                vt_linesearch,
                workers_used,
            });
            termination = Termination::LineSearchStalled;
            break;
        };
        records.push(IterationRecord {
            iter: t,
            f_value,
            grad_norm,
            step_alpha: alpha,
            direction_norm: linalg::norm(&p),
            dir_dot_grad,
            dir_h_grad,
            vt_gradient,
            vt_hessian,
            vt_linesearch,
            workers_used,
        });
        linalg::axpy(alpha, &p, &mut w);
    }
    Ok(SolveTrace {
        records,
        iterates,
        final_w: w,
        termination,
    })
}

/// First-order baseline configuration (shared by GD and NAG).
#[derive(Debug, Clone)]
pub struct FirstOrderConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub beta: f64,
    /// Initial backtracking candidates; extended downward by factors of 4
    /// when none qualifies.
    pub candidates: Vec<f64>,
    pub num_shards: usize,
}

impl Default for FirstOrderConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-8,
            beta: 0.1,
            candidates: default_candidates(),
            num_shards: 10,
        }
    }
}

fn backtrack_step(
    problem: &dyn Problem,
    w: &[f64],
    p: &[f64],
    g: &[f64],
    f0: f64,
    cfg: &FirstOrderConfig,
    exec: &mut SimExecutor,
) -> Result<(Option<f64>, f64), SolverError> {
    let mut cands = cfg.candidates.clone();
    let mut vt_total = 0.0;
    for _ in 0..8 {
        let (alpha, vt) = armijo_select_f(
            problem,
            w,
            p,
            g,
            f0,
            cfg.beta,
            &cands,
            cfg.num_shards,
            exec,
        )?;
        vt_total += vt;
        if alpha.is_some() {
            return Ok((alpha, vt_total));
        }
        let floor = *cands.last().unwrap();
        if floor < 1e-14 {
            break;
        }
        cands = (1..=cands.len()).map(|k| floor * 0.25f64.powi(k as i32)).collect();
    }
    Ok((None, vt_total))
}

/// Gradient descent with backtracking line search, through the simulator.
pub fn gd_solve(
    problem: &dyn Problem,
    w0: &[f64],
    cfg: &FirstOrderConfig,
    exec: &mut SimExecutor,
) -> Result<SolveTrace, SolverError> {
    let mut w = w0.to_vec();
    let mut records = Vec::new();
    let mut iterates = Vec::new();
    let mut termination = Termination::MaxIters;
    for t in 0..cfg.max_iters {
        let tasks_before = exec.tasks_submitted();
        let f_value = problem.value(&w);
        if !f_value.is_finite() || f_value > 1e12 {
            return Err(SolverError::Diverged { f_value });
        }
        let (g, vt_gradient) = problem.gradient(&w, exec)?;
        let grad_norm = linalg::norm(&g);
        if grad_norm <= cfg.grad_tol {
            iterates.push(w.clone());
            records.push(IterationRecord {
                iter: t,
                f_value,
                grad_norm,
                step_alpha: 0.0,
                direction_norm: 0.0,
                dir_dot_grad: 0.0,
                dir_h_grad: f64::NAN,
                vt_gradient,
                vt_hessian: 0.0,
                vt_linesearch: 0.0,
                workers_used: exec.tasks_submitted() - tasks_before,
            });
            termination = Termination::Converged;
            break;
        }
        let p: Vec<f64> = g.iter().map(|v| -v).collect();
        let (alpha, vt_linesearch) = backtrack_step(problem, &w, &p, &g, f_value, cfg, exec)?;
        let workers_used = exec.tasks_submitted() - tasks_before;
        iterates.push(w.clone());
        let Some(alpha) = alpha else {
            termination = Termination::LineSearchStalled;
            records.push(IterationRecord {
                iter: t,
                f_value,
                grad_norm,
                step_alpha: f64::NAN,
                direction_norm: grad_norm,
                dir_dot_grad: linalg::dot(&p, &g),
                dir_h_grad: f64::NAN,
                vt_gradient,
                vt_hessian: 0.0,
                vt_linesearch,
                workers_used,
            });
            break;
        };
        records.push(IterationRecord {
            iter: t,
            f_value,
            grad_norm,
            step_alpha: alpha,
            direction_norm: grad_norm,
            dir_dot_grad: linalg::dot(&p, &g),
            dir_h_grad: f64::NAN,
            vt_gradient,
            vt_hessian: 0.0,
            vt_linesearch,
            workers_used,
        });
        linalg::axpy(alpha, &p, &mut w);
    }
    Ok(SolveTrace {
        records,
        iterates,
        final_w: w,
        termination,
    })
}

/// Nesterov accelerated gradient with backtracking, `t/(t+3)` momentum.
pub fn nag_solve(
    problem: &dyn Problem,
    w0: &[f64],
    cfg: &FirstOrderConfig,
    exec: &mut SimExecutor,
) -> Result<SolveTrace, SolverError> {
    let mut w = w0.to_vec();
    let mut y = w0.to_vec();
    let mut records = Vec::new();
    let mut iterates = Vec::new();
    let mut termination = Termination::MaxIters;
    for t in 0..cfg.max_iters {
        let tasks_before = exec.tasks_submitted();
        let f_value = problem.value(&w);
        if !f_value.is_finite() || f_value > 1e12 {
            return Err(SolverError::Diverged { f_value });
        }
        let (g, vt_gradient) = problem.gradient(&y, exec)?;
        let grad_norm_w = linalg::norm(&problem.gradient_serial(&w));
        if grad_norm_w <= cfg.grad_tol {
            iterates.push(w.clone());
            records.push(IterationRecord {
                iter: t,
                f_value,
                grad_norm: grad_norm_w,
                step_alpha: 0.0,
                direction_norm: 0.0,
                dir_dot_grad: 0.0,
                dir_h_grad: f64::NAN,
                vt_gradient,
                vt_hessian: 0.0,
                vt_linesearch: 0.0,
                workers_used: exec.tasks_submitted() - tasks_before,
            });
            termination = Termination::Converged;
            break;
        }
        let p: Vec<f64> = g.iter().map(|v| -v).collect();
        let f_y = problem.value(&y);
        let (alpha, vt_linesearch) = backtrack_step(problem, &y, &p, &g, f_y, cfg, exec)?;
        let workers_used = exec.tasks_submitted() - tasks_before;
        iterates.push(w.clone());
        let Some(alpha) = alpha else {
            termination = Termination::LineSearchStalled;
            records.push(IterationRecord {
                iter: t,
                f_value,
                grad_norm: grad_norm_w,
                step_alpha: f64::NAN,
                direction_norm: grad_norm_w,
                dir_dot_grad: linalg::dot(&p, &g),
                dir_h_grad: f64::NAN,
                vt_gradient,
                vt_hessian: 0.0,
                vt_linesearch,
                workers_used,
            });
            break;
        };
        let mut w_next = y.clone();
        linalg::axpy(alpha, &p, &mut w_next);
        let momentum = t as f64 / (t as f64 + 3.0);
        y = w_next
            .iter()
            .zip(&w)
            .map(|(&wn, &wp)| wn + momentum * (wn - wp))
            .collect();
        records.push(IterationRecord {
            iter: t,
            f_value,
            grad_norm: grad_norm_w,
            step_alpha: alpha,
            direction_norm: linalg::norm(&p),
            dir_dot_grad: linalg::dot(&p, &g),
            dir_h_grad: f64::NAN,
            vt_gradient,
            vt_hessian: 0.0,
            vt_linesearch,
            workers_used,
        });
        w = w_next;
    }
    Ok(SolveTrace {
        records,
        iterates,
        final_w: w,
        termination,
    })
}
