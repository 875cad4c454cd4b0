//! Straggler-resilient distributed matrix-vector multiplication via a 2D
//! product code with a peeling decoder.
//!
//! The row-blocks of `A` are laid out on an `s x s` grid (padded with zero
//! blocks up to a perfect square), and one parity block is added per grid
//! row, per grid column, plus a single corner parity equal to the sum of all
//! systematic blocks. That gives `T + 2s + 1` tasks for `T = s^2` systematic
//! blocks. The decoder repeatedly solves any parity constraint with exactly
//! one missing participant; [`decodable_check`] is a dry run of the same
//! schedule over the erasure pattern alone.

use thiserror::Error;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::sim::{SimError, SimExecutor, SimTask};

#[derive(Debug, Error)]
pub enum CodedError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("partial results inconsistent with erasure pattern at task {task}")]
    InconsistentPartials { task: usize },
}

/// Static shape of the code: grid dimension and derived task indexing.
/// Task order is systematic blocks (row-major), then row parities, column
/// parities, and the corner parity last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeLayout {
    pub grid_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Row(usize),
    Col(usize),
    Corner,
}

impl CodeLayout {
    pub fn num_systematic(&self) -> usize {
        self.grid_dim * self.grid_dim
    }

    pub fn num_tasks(&self) -> usize {
        self.num_systematic() + 2 * self.grid_dim + 1
    }

    pub fn row_parity_index(&self, r: usize) -> usize {
        self.num_systematic() + r
    }

    pub fn col_parity_index(&self, c: usize) -> usize {
        self.num_systematic() + self.grid_dim + c
    }

    pub fn corner_index(&self) -> usize {
        self.num_systematic() + 2 * self.grid_dim
    }

    /// The parity task index and systematic participants of a constraint.
    /// Participants are listed in ascending task index, which fixes the
    /// summation order during decoding.
    pub fn constraint_members(&self, c: Constraint) -> (usize, Vec<usize>) {
        let s = self.grid_dim;
        match c {
            Constraint::Row(r) => (self.row_parity_index(r), (0..s).map(|j| r * s + j).collect()),
            Constraint::Col(j) => (self.col_parity_index(j), (0..s).map(|r| r * s + j).collect()),
            Constraint::Corner => (self.corner_index(), (0..self.num_systematic()).collect()),
        }
    }

    pub fn constraints(&self) -> Vec<Constraint> {
        let s = self.grid_dim;
        (0..s)
            .map(Constraint::Row)
            .chain((0..s).map(Constraint::Col))
            .chain(std::iter::once(Constraint::Corner))
            .collect()
    }
}

/// Which tasks have delivered results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErasurePattern {
    pub received: Vec<bool>,
}

impl ErasurePattern {
    pub fn all_received(layout: CodeLayout) -> Self {
        Self {
            received: vec![true; layout.num_tasks()],
        }
    }
}

/// A row-blocked matrix encoded with the 2D product code.
#[derive(Debug, Clone)]
pub struct CodedMatrix {
    layout: CodeLayout,
    block_rows: usize,
    cols: usize,
    orig_rows: usize,
    /// All task blocks in task-index order; each `block_rows x cols`.
    blocks: Vec<DenseMatrix>,
}

impl CodedMatrix {
    pub fn layout(&self) -> CodeLayout {
        self.layout
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn orig_rows(&self) -> usize {
        self.orig_rows
    }

    pub fn task_block(&self, i: usize) -> &DenseMatrix {
        &self.blocks[i]
    }

    pub fn num_tasks(&self) -> usize {
        self.blocks.len()
    }
}

/// Encode `a` for distributed matvec with `b` rows per block. The number of
/// row-blocks is padded to the next perfect square with zero blocks; those
/// blocks are still dispatched as tasks so the task-count formula of the
/// code is preserved.
pub fn encode_2d(a: &DenseMatrix, b: usize) -> CodedMatrix {
    assert!(b >= 1);
    let raw_blocks = a.rows().div_ceil(b).max(1);
    let s = (raw_blocks as f64).sqrt().ceil() as usize;
    let layout = CodeLayout { grid_dim: s };
    let t = layout.num_systematic();

    let mut blocks: Vec<DenseMatrix> = Vec::with_capacity(layout.num_tasks());
    for k in 0..t {
        blocks.push(DenseMatrix::from_fn(b, a.cols(), |r, c| {
            let src = k * b + r;
            if src < a.rows() {
                a.get(src, c)
            } else {
                0.0
            }
        }));
    }
    // parities: exact block sums in ascending participant order
    for cons in layout.constraints() {
        let (_, members) = layout.constraint_members(cons);
        let mut parity = DenseMatrix::zeros(b, a.cols());
        for m in members {
            parity.add_scaled(&blocks[m], 1.0);
        }
        blocks.push(parity);
    }
    CodedMatrix {
        layout,
        block_rows: b,
        cols: a.cols(),
        orig_rows: a.rows(),
        blocks,
    }
}

/// Decode outcome: either every systematic block is known, or peeling got
/// stuck with the listed systematic blocks still missing.
#[derive(Debug)]
pub enum PeelOutcome<T> {
    Decoded(T),
    Undecodable { stuck: Vec<usize> },
}

/// One peeling schedule step: systematic block `resolve` is recovered from
/// `constraint`.
type PeelStep = (usize, Constraint);

/// Dry-run peel over the pattern alone. Returns the recovery schedule, or
/// the stuck set of unresolved systematic blocks.
fn peel_schedule(pattern: &ErasurePattern, layout: CodeLayout) -> PeelOutcome<Vec<PeelStep>> {
    let t = layout.num_systematic();
    let mut known: Vec<bool> = pattern.received[..t].to_vec();
    let mut steps = Vec::new();
    let constraints = layout.constraints();
    loop {
        if known.iter().all(|&k| k) {
            return PeelOutcome::Decoded(steps);
        }
        let mut progressed = false;
        for &cons in &constraints {
            let (parity, members) = layout.constraint_members(cons);
            if !pattern.received[parity] {
                continue;
            }
            let unknown: Vec<usize> = members.iter().copied().filter(|&m| !known[m]).collect();
            if let [lone] = unknown[..] {
                known[lone] = true;
                steps.push((lone, cons));
                progressed = true;
            }
        }
        if !progressed {
            let stuck = (0..t).filter(|&i| !known[i]).collect();
            return PeelOutcome::Undecodable { stuck };
        }
    }
}

/// True iff [`peel_decode`] would succeed on this pattern.
pub fn decodable_check(pattern: &ErasurePattern, layout: CodeLayout) -> bool {
    matches!(peel_schedule(pattern, layout), PeelOutcome::Decoded(_))
}

/// Peeling decoder over per-task partial results. `partials[i]` must be
/// `Some` exactly where `pattern.received[i]` holds. On success returns the
/// systematic block results in grid order.
pub fn peel_decode(
    partials: &[Option<Vec<f64>>],
    pattern: &ErasurePattern,
    layout: CodeLayout,
) -> Result<PeelOutcome<Vec<Vec<f64>>>, CodedError> {
    for (i, p) in partials.iter().enumerate() {
        if p.is_some() != pattern.received[i] {
            return Err(CodedError::InconsistentPartials { task: i });
        }
    }
    let schedule = match peel_schedule(pattern, layout) {
        PeelOutcome::Decoded(steps) => steps,
        PeelOutcome::Undecodable { stuck } => return Ok(PeelOutcome::Undecodable { stuck }),
    };
    let t = layout.num_systematic();
    let mut sys: Vec<Option<Vec<f64>>> = partials[..t].to_vec();
    for (resolve, cons) in schedule {
        let (parity, members) = layout.constraint_members(cons);
        let mut value = partials[parity].clone().expect("schedule uses received parity");
        for m in members {
            if m == resolve {
                continue;
            }
            let known = sys[m].as_ref().expect("schedule order resolves dependencies");
            for (v, k) in value.iter_mut().zip(known) {
                *v -= k;
            }
        }
        sys[resolve] = Some(value);
    }
    Ok(PeelOutcome::Decoded(
        sys.into_iter().map(|v| v.expect("all resolved")).collect(),
    ))
}

/// Collection statistics for one coded matvec.
#[derive(Debug, Clone)]
pub struct CollectionStats {
    /// Virtual clock at which the pattern first became decodable.
    pub clock: f64,
    /// Tasks received by that clock.
    pub tasks_received: usize,
    pub tasks_total: usize,
    /// Systematic blocks recovered by peeling (rather than received).
    pub peeled: usize,
}

/// Distributed `A x` over the coded blocks: one task per coded block, collect
/// completions until the pattern is decodable, then peel-decode.
pub fn coded_matvec(
    coded: &CodedMatrix,
    x: &[f64],
    exec: &mut SimExecutor,
) -> Result<(Vec<f64>, CollectionStats), CodedError> {
    if x.len() != coded.cols() {
        return Err(LinalgError::DimensionMismatch {
            context: "coded_matvec",
            left: coded.cols(),
            right: x.len(),
        }
        .into());
    }
    let layout = coded.layout();
    let cost = 2.0 * coded.block_rows() as f64 * coded.cols() as f64;
    let tasks: Vec<SimTask<'_, Vec<f64>>> = (0..coded.num_tasks())
        .map(|i| {
            let block = coded.task_block(i);
            SimTask::new(cost, move || block.matvec(x).expect("encoded shape"))
        })
        .collect();
    let batch = exec.submit(tasks);
    let (mask, clock) = batch.await_predicate(|received| {
        decodable_check(
            &ErasurePattern {
                received: received.to_vec(),
            },
            layout,
        )
    })?;
    let pattern = ErasurePattern { received: mask };
    let partials: Vec<Option<Vec<f64>>> = batch
        .results
        .iter()
        .zip(&pattern.received)
        .map(|(r, &recv)| recv.then(|| r.clone()))
        .collect();
    let sys = match peel_decode(&partials, &pattern, layout)? {
        PeelOutcome::Decoded(sys) => sys,
        PeelOutcome::Undecodable { .. } => {
            unreachable!("await_predicate stopped on a decodable pattern")
        }
    };
    let peeled = pattern.received[..layout.num_systematic()]
        .iter()
        .filter(|&&r| !r)
        .count();
    let mut y = Vec::with_capacity(coded.orig_rows());
    'outer: for block in &sys {
        for &v in block {
            if y.len() == coded.orig_rows() {
                break 'outer;
            }
            y.push(v);
        }
    }
    let stats = CollectionStats {
        clock,
        tasks_received: pattern.received.iter().filter(|&&r| r).count(),
        tasks_total: coded.num_tasks(),
        peeled,
    };
    Ok((y, stats))
}
