//! Count-Sketch blocks and the over-provisioned sketch built from them.
//!
//! A sketch is a concatenation of `N + e` independent Count-Sketch blocks of
//! width `b`; any `N` of them suffice for the Gram estimate, which is what
//! buys straggler resilience. Blocks store only the bucket/sign maps, so
//! applying one streams the input rows in `O(n d)`.

use rand::Rng;

use crate::linalg::{DenseMatrix, LinalgError};
use crate::seed;

/// One Count-Sketch block: the implied `n x b` matrix has exactly one `+-1`
/// entry per row, at column `bucket[j]` with sign `sign[j]`.
#[derive(Debug, Clone)]
pub struct CountSketchBlock {
    n: usize,
    b: usize,
    bucket: Vec<u32>,
    sign: Vec<f64>,
    seed: u64,
}

impl CountSketchBlock {
    /// Uniform bucket over `[0, b)` and uniform sign per row, independently,
    /// reproducible from `(n, b, seed)`.
    pub fn build(n: usize, b: usize, seed_val: u64) -> Self {
        assert!(n >= 1 && b >= 1);
        let mut rng = seed::rng(seed_val);
        let mut bucket = Vec::with_capacity(n);
        let mut sign = Vec::with_capacity(n);
        for _ in 0..n {
            bucket.push(rng.gen_range(0..b as u32));
            sign.push(if rng.gen::<bool>() { 1.0 } else { -1.0 });
        }
        Self {
            n,
            b,
            bucket,
            sign,
            seed: seed_val,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn sketch_dim(&self) -> usize {
        self.b
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bucket(&self, row: usize) -> usize {
        self.bucket[row] as usize
    }

    pub fn sign(&self, row: usize) -> f64 {
        self.sign[row]
    }

    /// `S^T A` computed by streaming rows of `A` in ascending index order:
    /// output row `bucket[j]` accumulates `sign[j] * A(j, :)`. Bit-identical
    /// to multiplying by the dense materialization.
    pub fn apply_left(&self, a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if a.rows() != self.n {
            return Err(LinalgError::DimensionMismatch {
                context: "count-sketch apply",
                left: self.n,
                right: a.rows(),
            });
        }
        let mut out = DenseMatrix::zeros(self.b, a.cols());
        for j in 0..self.n {
            let s = self.sign[j];
            let dst = out.row_mut(self.bucket[j] as usize);
            for (d, v) in dst.iter_mut().zip(a.row(j)) {
                *d += s * v;
            }
        }
        Ok(out)
    }

    /// Dense `n x b` materialization; test-oracle support.
    pub fn materialize(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.b);
        for j in 0..self.n {
            out.set(j, self.bucket[j] as usize, self.sign[j]);
        }
        out
    }
}

/// The over-provisioned sketch: `N + e` i.i.d. Count-Sketch blocks of width
/// `b`. The `1/sqrt(N)` scale of the concatenated sketch is applied once at
/// reduction (as `1/N`), not stored in the blocks.
#[derive(Debug, Clone)]
pub struct OverSketchSpec {
    n: usize,
    num_required: usize,
    over_provision: usize,
    block_dim: usize,
    blocks: Vec<CountSketchBlock>,
    master_seed: u64,
}

impl OverSketchSpec {
    /// Build a spec for input dimension `n` with required sketch dimension
    /// `m = N * b` and `e` extra blocks. `m` must be divisible by `b`.
    pub fn new(n: usize, m: usize, b: usize, e: usize, master_seed: u64) -> Result<Self, LinalgError> {
        if b == 0 || m == 0 || m % b != 0 {
            return Err(LinalgError::DimensionMismatch {
                context: "sketch dimension must be a positive multiple of block size",
                left: m,
                right: b,
            });
        }
        let num_required = m / b;
        let blocks = (0..num_required + e)
            .map(|i| CountSketchBlock::build(n, b, seed::derive(master_seed, i as u64)))
            .collect();
        Ok(Self {
            n,
            num_required,
            over_provision: e,
            block_dim: b,
            blocks,
            master_seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    /// `N`: the number of blocks the reduction actually uses.
    pub fn num_required(&self) -> usize {
        self.num_required
    }

    /// `e`: extra blocks provisioned against stragglers.
    pub fn over_provision(&self) -> usize {
        self.over_provision
    }

    pub fn num_blocks(&self) -> usize {
        self.num_required + self.over_provision
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn blocks(&self) -> &[CountSketchBlock] {
        &self.blocks
    }
}
