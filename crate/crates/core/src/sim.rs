//! Deterministic virtual-clock executor modeling a serverless worker pool.
//!
//! Task bodies are pure, so a whole batch is evaluated eagerly; only the
//! *durations* are random. Each task's duration depends on the model seed,
//! the batch index, and the task index alone, so adding tasks to a batch
//! never perturbs the durations of existing ones, and a fixed seed replays
//! the exact completion log.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::seed;

/// Virtual seconds per unit of a `b x b` block product at `b = 64`:
/// task cost in flops is divided by this rate to get a nominal duration.
pub const FLOPS_PER_VSEC: f64 = (64 * 64 * 64) as f64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("requested first {k} of {n} tasks")]
    NotEnoughTasks { k: usize, n: usize },
    #[error("predicate still false after all {n} tasks completed")]
    PredicateExhausted { n: usize },
}

/// Straggler model: constant per-task base time proportional to flop count,
/// with a Bernoulli slowdown tail. Defaults reproduce the published worker
/// statistics (2% of workers at 180/135 the median time).
#[derive(Debug, Clone)]
pub struct StragglerModel {
    pub straggler_prob: f64,
    pub slowdown: f64,
    pub invoke_overhead: f64,
    pub flops_per_vsec: f64,
    pub seed: u64,
}

impl StragglerModel {
    pub fn new(straggler_prob: f64, slowdown: f64, invoke_overhead: f64, seed_val: u64) -> Self {
        assert!((0.0..=1.0).contains(&straggler_prob));
        assert!(slowdown >= 1.0);
        Self {
            straggler_prob,
            slowdown,
            invoke_overhead,
            flops_per_vsec: FLOPS_PER_VSEC,
            seed: seed_val,
        }
    }

    /// Fig.-calibrated defaults: 2% stragglers at a 180/135 slowdown.
    pub fn default_calibration(seed_val: u64) -> Self {
        Self::new(0.02, 180.0 / 135.0, 0.0, seed_val)
    }

    /// No stragglers, deterministic flop-proportional durations.
    pub fn no_stragglers(seed_val: u64) -> Self {
        Self::new(0.0, 1.0, 0.0, seed_val)
    }
}

/// One finished task on the virtual clock.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub task_id: usize,
    pub start_time: f64,
    pub duration: f64,
    pub finish_time: f64,
    pub was_straggler: bool,
}

/// A submitted unit of work: a pure computation plus its advertised cost.
pub struct SimTask<'a, T> {
    pub cost_flops: f64,
    pub run: Box<dyn FnOnce() -> T + 'a>,
}

impl<'a, T> SimTask<'a, T> {
    pub fn new(cost_flops: f64, run: impl FnOnce() -> T + 'a) -> Self {
        Self {
            cost_flops,
            run: Box::new(run),
        }
    }
}

/// Results and outcomes of one submitted batch. All tasks start at virtual
/// time zero of the batch; callers accumulate batch clocks themselves.
pub struct Batch<T> {
    pub results: Vec<T>,
    pub outcomes: Vec<TaskOutcome>,
}

impl<T> Batch<T> {
    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    /// Task ids sorted by (finish_time, task_id).
    fn completion_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.outcomes.len()).collect();
        order.sort_by(|&a, &b| {
            self.outcomes[a]
                .finish_time
                .total_cmp(&self.outcomes[b].finish_time)
                .then(a.cmp(&b))
        });
        order
    }

    /// The `k` earliest finishers and the virtual clock at which the `k`-th
    /// completes. Ties broken by task index.
    pub fn await_first_k(&self, k: usize) -> Result<(Vec<&TaskOutcome>, f64), SimError> {
        let n = self.outcomes.len();
        if k > n {
            return Err(SimError::NotEnoughTasks { k, n });
        }
        let order = self.completion_order();
        let firsts: Vec<&TaskOutcome> = order[..k].iter().map(|&i| &self.outcomes[i]).collect();
        let clock = firsts.last().map_or(0.0, |o| o.finish_time);
        Ok((firsts, clock))
    }

    /// Scan completions in finish order until `pred` over the received mask
    /// first turns true; `pred` must be monotone. Returns the received mask
    /// at that instant and the clock.
    pub fn await_predicate(
        &self,
        pred: impl Fn(&[bool]) -> bool,
    ) -> Result<(Vec<bool>, f64), SimError> {
        let n = self.outcomes.len();
        let mut received = vec![false; n];
        if pred(&received) {
            return Ok((received, 0.0));
        }
        for &i in &self.completion_order() {
            received[i] = true;
            if pred(&received) {
                return Ok((received, self.outcomes[i].finish_time));
            }
        }
        Err(SimError::PredicateExhausted { n })
    }
}

/// The worker pool. Holds the straggler model and a batch counter so that
/// successive submissions draw fresh but reproducible randomness.
pub struct SimExecutor {
    model: StragglerModel,
    batch_counter: u64,
    tasks_submitted: u64,
}

impl SimExecutor {
    pub fn new(model: StragglerModel) -> Self {
        Self {
            model,
            batch_counter: 0,
            tasks_submitted: 0,
        }
    }

    pub fn model(&self) -> &StragglerModel {
        &self.model
    }

    /// Total tasks launched since construction.
    pub fn tasks_submitted(&self) -> u64 {
        self.tasks_submitted
    }

    /// Run a batch of pure tasks. Durations are sampled per task index so the
    /// outcome log is a pure function of (model, batch index, task list).
    pub fn submit<T>(&mut self, tasks: Vec<SimTask<'_, T>>) -> Batch<T> {
        let batch_seed = seed::derive(self.model.seed, self.batch_counter);
        self.batch_counter += 1;
        self.tasks_submitted += tasks.len() as u64;
        let mut results = Vec::with_capacity(tasks.len());
        let mut outcomes = Vec::with_capacity(tasks.len());
        for (i, task) in tasks.into_iter().enumerate() {
            let mut rng = seed::rng(seed::derive(batch_seed, i as u64));
            let straggler = rng.gen::<f64>() < self.model.straggler_prob;
            let base = task.cost_flops / self.model.flops_per_vsec;
            let duration = self.model.invoke_overhead
                + base * if straggler { self.model.slowdown } else { 1.0 };
            results.push((task.run)());
            outcomes.push(TaskOutcome {
                task_id: i,
                start_time: 0.0,
                duration,
                finish_time: duration,
                was_straggler: straggler,
            });
        }
        Batch { results, outcomes }
    }
}

/// In-memory stand-in for the cloud object store all workers share.
/// Reads and writes are charged fixed virtual-time costs; within one virtual
/// timeline a reader always sees the latest write (read-your-writes).
#[derive(Debug, Default)]
pub struct CloudStore {
    objects: HashMap<String, Vec<u8>>,
    pub get_latency: f64,
    pub put_latency: f64,
    accrued: f64,
}

impl CloudStore {
    pub fn new(get_latency: f64, put_latency: f64) -> Self {
        Self {
            get_latency,
            put_latency,
            ..Self::default()
        }
    }

    pub fn put(&mut self, key: impl Into<String>, value: Vec<u8>) {
        self.accrued += self.put_latency;
        self.objects.insert(key.into(), value);
    }

    pub fn get(&mut self, key: &str) -> Option<&[u8]> {
        self.accrued += self.get_latency;
        self.objects.get(key).map(Vec::as_slice)
    }

    /// Total virtual time spent on data-plane traffic so far.
    pub fn accrued_latency(&self) -> f64 {
        self.accrued
    }
}
