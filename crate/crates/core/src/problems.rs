//! Objective instantiations: logistic regression, softmax regression, and
//! ridge regression, each exposing value, gradient, and Hessian-square-root
//! oracles, plus dataset ingestion and synthetic generation.
//!
//! Conventions: the example matrix `X` is `d x n` (features by samples).
//! Logistic and ridge carry a `1/n` factor on the data term and an L2 ridge;
//! softmax is the unnormalized negative log-likelihood with no regularizer.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::coded::{coded_matvec, encode_2d, CodedError, CodedMatrix};
use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::seed;
use crate::sim::SimExecutor;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Coded(#[from] CodedError),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Labels for the three problem families.
#[derive(Debug, Clone)]
pub enum Labels {
    /// `+-1` per sample.
    Binary(Vec<f64>),
    /// One-hot `K x N` matrix, one column per sample.
    OneHot(DenseMatrix),
    /// Real targets.
    Real(Vec<f64>),
}

/// Feature matrix (`d x n`, features by samples) plus labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DenseMatrix,
    pub labels: Labels,
}

impl Dataset {
    pub fn num_features(&self) -> usize {
        self.x.rows()
    }

    pub fn num_samples(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        match &self.labels {
            Labels::OneHot(y) => y.rows(),
            _ => 1,
        }
    }

    /// Column `i` of `X` as an owned vector.
    pub fn sample(&self, i: usize) -> Vec<f64> {
        (0..self.x.rows()).map(|r| self.x.get(r, i)).collect()
    }
}

/// A Hessian in square-root form: `H = scale * F^T F + ridge * I`.
/// The ridge term is added at the master and is never sketched.
#[derive(Debug, Clone)]
pub struct HessianFactor {
    pub factor: DenseMatrix,
    pub scale: f64,
    pub ridge: f64,
}

impl HessianFactor {
    /// Assemble the exact Hessian.
    pub fn assemble_exact(&self) -> DenseMatrix {
        let mut h = self.factor.gram();
        h.scale(self.scale);
        for i in 0..h.rows() {
            h.set(i, i, h.get(i, i) + self.ridge);
        }
        h.symmetrize();
        h
    }
}

/// A differentiable objective with a Hessian-square-root oracle, a coded
/// distributed gradient path, and data-sharded partials for distributed
/// line search.
pub trait Problem {
    fn dim(&self) -> usize;
    fn num_samples(&self) -> usize;

    /// Data-term contribution of samples in `range` to `f(w)`.
    fn value_shard(&self, range: Range<usize>, w: &[f64]) -> f64;
    /// Regularizer value.
    fn reg_value(&self, w: &[f64]) -> f64;
    /// Data-term contribution of samples in `range` to the gradient.
    fn gradient_shard(&self, range: Range<usize>, w: &[f64]) -> Vec<f64>;
    /// Regularizer gradient.
    fn reg_gradient(&self, w: &[f64]) -> Vec<f64>;

    /// Full objective value, single-machine.
    fn value(&self, w: &[f64]) -> f64 {
        self.value_shard(0..self.num_samples(), w) + self.reg_value(w)
    }

    /// Full gradient, single-machine reference.
    fn gradient_serial(&self, w: &[f64]) -> Vec<f64> {
        let mut g = self.gradient_shard(0..self.num_samples(), w);
        let r = self.reg_gradient(w);
        linalg::axpy(1.0, &r, &mut g);
        g
    }

    /// Full gradient through the coded matvec pipeline. Returns the gradient
    /// and the virtual time spent.
    fn gradient(&self, w: &[f64], exec: &mut SimExecutor) -> Result<(Vec<f64>, f64), ProblemError>;

    /// Square-root form of the Hessian at `w`.
    fn hessian_factor(&self, w: &[f64]) -> HessianFactor;

    /// Flop cost of evaluating one sample's data term (used to price
    /// line-search shard tasks).
    fn per_sample_cost_flops(&self) -> f64 {
        2.0 * self.dim() as f64
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

/// `f(w) = (1/n) sum log(1 + exp(-y_i w^T x_i)) + (lambda/2) ||w||^2`,
/// with `X` and `X^T` pre-encoded for the coded gradient path.
pub struct LogisticProblem {
    pub data: Dataset,
    pub lambda: f64,
    coded_x: CodedMatrix,
    coded_xt: CodedMatrix,
}

impl LogisticProblem {
    pub fn new(data: Dataset, lambda: f64, coding_block: usize) -> Result<Self, ProblemError> {
        assert!(lambda >= 0.0);
        let labels = match &data.labels {
            Labels::Binary(y) => y,
            _ => panic!("logistic regression needs binary labels"),
        };
        assert!(labels.iter().all(|&y| y == 1.0 || y == -1.0));
        let coded_x = encode_2d(&data.x, coding_block);
        let xt = data.x.transpose();
        let coded_xt = encode_2d(&xt, coding_block);
        Ok(Self {
            data,
            lambda,
            coded_x,
            coded_xt,
        })
    }

    fn labels(&self) -> &[f64] {
        match &self.data.labels {
            Labels::Binary(y) => y,
            _ => unreachable!(),
        }
    }

    /// Margins `alpha = X^T w`, single-machine.
    fn margins(&self, w: &[f64]) -> Vec<f64> {
        let n = self.num_samples();
        (0..n)
            .map(|i| (0..w.len()).map(|r| self.data.x.get(r, i) * w[r]).sum())
            .collect()
    }
}

impl Problem for LogisticProblem {
    fn dim(&self) -> usize {
        self.data.num_features()
    }

    fn num_samples(&self) -> usize {
        self.data.num_samples()
    }

    fn value_shard(&self, range: Range<usize>, w: &[f64]) -> f64 {
        let y = self.labels();
        let n = self.num_samples() as f64;
        let mut acc = 0.0;
        for i in range {
            let alpha: f64 = (0..w.len()).map(|r| self.data.x.get(r, i) * w[r]).sum();
            acc += log1p_exp(-y[i] * alpha);
        }
        acc / n
    }

    fn reg_value(&self, w: &[f64]) -> f64 {
        0.5 * self.lambda * linalg::dot(w, w)
    }

    fn gradient_shard(&self, range: Range<usize>, w: &[f64]) -> Vec<f64> {
        let y = self.labels();
        let n = self.num_samples() as f64;
        let mut g = vec![0.0; w.len()];
        for i in range {
            let alpha: f64 = (0..w.len()).map(|r| self.data.x.get(r, i) * w[r]).sum();
            let beta = -y[i] * sigmoid(-y[i] * alpha);
            for r in 0..w.len() {
                g[r] += beta * self.data.x.get(r, i) / n;
            }
        }
        g
    }

    fn reg_gradient(&self, w: &[f64]) -> Vec<f64> {
        w.iter().map(|wi| self.lambda * wi).collect()
    }

    fn gradient(&self, w: &[f64], exec: &mut SimExecutor) -> Result<(Vec<f64>, f64), ProblemError> {
        let y = self.labels();
        let n = self.num_samples() as f64;
        let (alpha, s1) = coded_matvec(&self.coded_xt, w, exec)?;
        let beta: Vec<f64> = alpha
            .iter()
            .zip(y)
            .map(|(&a, &yi)| -yi * sigmoid(-yi * a))
            .collect();
        let (xb, s2) = coded_matvec(&self.coded_x, &beta, exec)?;
        let mut g: Vec<f64> = xb.iter().map(|v| v / n).collect();
        linalg::axpy(self.lambda, w, &mut g);
        Ok((g, s1.clock + s2.clock))
    }

    fn hessian_factor(&self, w: &[f64]) -> HessianFactor {
        let y = self.labels();
        let alpha = self.margins(w);
        let n = self.num_samples();
        let d = self.dim();
        let factor = DenseMatrix::from_fn(n, d, |i, j| {
            let m = y[i] * alpha[i];
            // gamma in (0, 1/4]
            let gamma = sigmoid(m) * sigmoid(-m);
            gamma.sqrt() * self.data.x.get(j, i)
        });
        HessianFactor {
            factor,
            scale: 1.0 / n as f64,
            ridge: self.lambda,
        }
    }
}

// ---------------------------------------------------------------------------
// Softmax regression
// ---------------------------------------------------------------------------

/// Unregularized multinomial negative log-likelihood over `K` classes; the
/// weight matrix `W` (`d x K`) is flattened class-major into a `dK` vector.
pub struct SoftmaxProblem {
    pub data: Dataset,
    coded_x: CodedMatrix,
    coded_xt: CodedMatrix,
}

impl SoftmaxProblem {
    pub fn new(data: Dataset, coding_block: usize) -> Result<Self, ProblemError> {
        let y = match &data.labels {
            Labels::OneHot(y) => y,
            _ => panic!("softmax regression needs one-hot labels"),
        };
        assert!(y.rows() >= 2);
        for c in 0..y.cols() {
            let sum: f64 = (0..y.rows()).map(|r| y.get(r, c)).sum();
            assert!((sum - 1.0).abs() < 1e-12, "one-hot columns must sum to 1");
        }
        let coded_x = encode_2d(&data.x, coding_block.min(data.x.rows()).max(1));
        let xt = data.x.transpose();
        let coded_xt = encode_2d(&xt, coding_block);
        Ok(Self {
            data,
            coded_x,
            coded_xt,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.data.num_classes()
    }

    fn onehot(&self) -> &DenseMatrix {
        match &self.data.labels {
            Labels::OneHot(y) => y,
            _ => unreachable!(),
        }
    }

    fn class_weights<'w>(&self, w: &'w [f64], k: usize) -> &'w [f64] {
        let d = self.data.num_features();
        &w[k * d..(k + 1) * d]
    }

    /// Per-sample logits for sample `i`: `alpha_k = w_k^T x_i`.
    fn logits(&self, w: &[f64], i: usize) -> Vec<f64> {
        let k = self.num_classes();
        (0..k)
            .map(|c| {
                let wc = self.class_weights(w, c);
                (0..wc.len()).map(|r| self.data.x.get(r, i) * wc[r]).sum()
            })
            .collect()
    }

    fn softmax_probs(logits: &[f64]) -> Vec<f64> {
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.iter().map(|e| e / sum).collect()
    }
}

impl Problem for SoftmaxProblem {
    fn dim(&self) -> usize {
        self.data.num_features() * self.num_classes()
    }

    fn num_samples(&self) -> usize {
        self.data.num_samples()
    }

    fn value_shard(&self, range: Range<usize>, w: &[f64]) -> f64 {
        let y = self.onehot();
        let mut acc = 0.0;
        for i in range {
            let logits = self.logits(w, i);
            let m = logits.iter().cloned().fold(f64::MIN, f64::max);
            let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            let fit: f64 = (0..logits.len()).map(|k| y.get(k, i) * logits[k]).sum();
            acc += lse - fit;
        }
        acc
    }

    fn reg_value(&self, _w: &[f64]) -> f64 {
        0.0
    }

    fn gradient_shard(&self, range: Range<usize>, w: &[f64]) -> Vec<f64> {
        let y = self.onehot();
        let d = self.data.num_features();
        let k = self.num_classes();
        let mut g = vec![0.0; d * k];
        for i in range {
            let probs = Self::softmax_probs(&self.logits(w, i));
            for c in 0..k {
                let beta = probs[c] - y.get(c, i);
                for r in 0..d {
                    g[c * d + r] += beta * self.data.x.get(r, i);
                }
            }
        }
        g
    }

    fn reg_gradient(&self, w: &[f64]) -> Vec<f64> {
        vec![0.0; w.len()]
    }

    fn gradient(&self, w: &[f64], exec: &mut SimExecutor) -> Result<(Vec<f64>, f64), ProblemError> {
        let y = self.onehot();
        let d = self.data.num_features();
        let k = self.num_classes();
        let n = self.num_samples();
        // logits per class via coded X^T, then beta = probs - Y per class
        let mut clock = 0.0;
        let mut alpha = DenseMatrix::zeros(n, k);
        for c in 0..k {
            let (col, stats) = coded_matvec(&self.coded_xt, self.class_weights(w, c), exec)?;
            clock += stats.clock;
            for i in 0..n {
                alpha.set(i, c, col[i]);
            }
        }
        let mut g = vec![0.0; d * k];
        for c in 0..k {
            let beta: Vec<f64> = (0..n)
                .map(|i| {
                    let probs = Self::softmax_probs(alpha.row(i));
                    probs[c] - y.get(c, i)
                })
                .collect();
            let (gc, stats) = coded_matvec(&self.coded_x, &beta, exec)?;
            clock += stats.clock;
            g[c * d..(c + 1) * d].copy_from_slice(&gc);
        }
        Ok((g, clock))
    }

    fn hessian_factor(&self, w: &[f64]) -> HessianFactor {
        let d = self.data.num_features();
        let k = self.num_classes();
        let n = self.num_samples();
        let mut factor = DenseMatrix::zeros(n * k, d * k);
        for i in 0..n {
            let probs = Self::softmax_probs(&self.logits(w, i));
            // per-sample K x K curvature: diag(s) - s s^T, PSD
            let lambda_n = DenseMatrix::from_fn(k, k, |a, b| {
                let diag = if a == b { probs[a] } else { 0.0 };
                diag - probs[a] * probs[b]
            });
            let (eigs, v) = linalg::sym_eig(&lambda_n).expect("symmetric by construction");
            // symmetric PSD square root, negative round-off clamped to zero
            let root = DenseMatrix::from_fn(k, k, |a, b| {
                (0..k)
                    .map(|e| eigs[e].max(0.0).sqrt() * v.get(a, e) * v.get(b, e))
                    .sum()
            });
            let x_i = self.data.sample(i);
            for row_class in 0..k {
                let dst = factor.row_mut(i * k + row_class);
                for col_class in 0..k {
                    let r = root.get(row_class, col_class);
                    if r == 0.0 {
                        continue;
                    }
                    for (t, &xv) in x_i.iter().enumerate() {
                        dst[col_class * d + t] += r * xv;
                    }
                }
            }
        }
        HessianFactor {
            factor,
            scale: 1.0,
            ridge: 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Ridge regression
// ---------------------------------------------------------------------------

/// `f(w) = (1/2n) ||X^T w - y||^2 + (lambda/2) ||w||^2`.
pub struct RidgeProblem {
    pub data: Dataset,
    pub lambda: f64,
    coded_x: CodedMatrix,
    coded_xt: CodedMatrix,
}

impl RidgeProblem {
    pub fn new(data: Dataset, lambda: f64, coding_block: usize) -> Result<Self, ProblemError> {
        assert!(lambda >= 0.0);
        match &data.labels {
            Labels::Real(_) => {}
            _ => panic!("ridge regression needs real labels"),
        }
        let coded_x = encode_2d(&data.x, coding_block);
        let xt = data.x.transpose();
        let coded_xt = encode_2d(&xt, coding_block);
        Ok(Self {
            data,
            lambda,
            coded_x,
            coded_xt,
        })
    }

    fn targets(&self) -> &[f64] {
        match &self.data.labels {
            Labels::Real(y) => y,
            _ => unreachable!(),
        }
    }

    /// Closed-form minimizer from the normal equations, for test oracles.
    pub fn normal_equations_solution(&self) -> Result<Vec<f64>, LinalgError> {
        let n = self.num_samples() as f64;
        let mut h = self.data.x.transpose().gram();
        h.scale(1.0 / n);
        for i in 0..h.rows() {
            h.set(i, i, h.get(i, i) + self.lambda);
        }
        h.symmetrize();
        let y = self.targets();
        let mut rhs = vec![0.0; self.dim()];
        for i in 0..self.num_samples() {
            for r in 0..self.dim() {
                rhs[r] += self.data.x.get(r, i) * y[i] / n;
            }
        }
        linalg::cg_solve(&h, &rhs, 1e-14, 10 * self.dim().max(10))
    }
}

impl Problem for RidgeProblem {
    fn dim(&self) -> usize {
        self.data.num_features()
    }

    fn num_samples(&self) -> usize {
        self.data.num_samples()
    }

    fn value_shard(&self, range: Range<usize>, w: &[f64]) -> f64 {
        let y = self.targets();
        let n = self.num_samples() as f64;
        let mut acc = 0.0;
        for i in range {
            let pred: f64 = (0..w.len()).map(|r| self.data.x.get(r, i) * w[r]).sum();
            acc += (pred - y[i]).powi(2);
        }
        acc / (2.0 * n)
    }

    fn reg_value(&self, w: &[f64]) -> f64 {
        0.5 * self.lambda * linalg::dot(w, w)
    }

    fn gradient_shard(&self, range: Range<usize>, w: &[f64]) -> Vec<f64> {
        let y = self.targets();
        let n = self.num_samples() as f64;
        let mut g = vec![0.0; w.len()];
        for i in range {
            let pred: f64 = (0..w.len()).map(|r| self.data.x.get(r, i) * w[r]).sum();
            let resid = pred - y[i];
            for r in 0..w.len() {
                g[r] += resid * self.data.x.get(r, i) / n;
            }
        }
        g
    }

    fn reg_gradient(&self, w: &[f64]) -> Vec<f64> {
        w.iter().map(|wi| self.lambda * wi).collect()
    }

    fn gradient(&self, w: &[f64], exec: &mut SimExecutor) -> Result<(Vec<f64>, f64), ProblemError> {
        let y = self.targets();
        let n = self.num_samples() as f64;
        let (beta, s1) = coded_matvec(&self.coded_xt, w, exec)?;
        let resid: Vec<f64> = beta.iter().zip(y).map(|(&b, &yi)| b - yi).collect();
        let (xr, s2) = coded_matvec(&self.coded_x, &resid, exec)?;
        let g: Vec<f64> = xr
            .iter()
            .zip(w)
            .map(|(&v, &wi)| v / n + self.lambda * wi)
            .collect();
        Ok((g, s1.clock + s2.clock))
    }

    fn hessian_factor(&self, w: &[f64]) -> HessianFactor {
        let _ = w; // quadratic: constant curvature
        HessianFactor {
            factor: self.data.x.transpose(),
            scale: 1.0 / self.num_samples() as f64,
            ridge: self.lambda,
        }
    }
}

// ---------------------------------------------------------------------------
// Ingestion and generation
// ---------------------------------------------------------------------------

/// Parse a LIBSVM text file: lines of `label idx:val idx:val ...` with
/// 1-based ascending indices. `{0,1}` labels are mapped to `{-1,+1}`;
/// `d` is the maximum index seen unless `num_features` overrides it.
pub fn load_libsvm(path: &Path, num_features: Option<usize>) -> Result<Dataset, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parse_err = |line: usize, message: String| ProblemError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label: f64 = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad label: {e}")))?;
        let mut feats = Vec::new();
        let mut last_index = 0usize;
        for tok in parts {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad index {idx_s:?}: {e}")))?;
            let val: f64 = val_s
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad value {val_s:?}: {e}")))?;
            if idx == 0 {
                return Err(parse_err(lineno, "indices are 1-based".into()));
            }
            if idx <= last_index {
                return Err(parse_err(
                    lineno,
                    format!("indices must be ascending ({idx} after {last_index})"),
                ));
            }
            last_index = idx;
            max_index = max_index.max(idx);
            feats.push((idx - 1, val));
        }
        labels.push(label);
        rows.push(feats);
    }
    let d = num_features.unwrap_or(max_index);
    let n = rows.len();
    let mut x = DenseMatrix::zeros(d, n);
    for (i, feats) in rows.iter().enumerate() {
        for &(j, v) in feats {
            if j < d {
                x.set(j, i, v);
            }
        }
    }
    let zero_one = labels.iter().all(|&y| y == 0.0 || y == 1.0);
    let mapped: Vec<f64> = labels
        .iter()
        .map(|&y| if zero_one { 2.0 * y - 1.0 } else { y })
        .collect();
    Ok(Dataset {
        x,
        labels: Labels::Binary(mapped),
    })
}

/// Serialize a binary-labeled dataset back to LIBSVM text (dense columns,
/// zeros omitted).
pub fn write_libsvm(data: &Dataset) -> String {
    let y = match &data.labels {
        Labels::Binary(y) => y,
        _ => panic!("write_libsvm supports binary labels"),
    };
    let mut out = String::new();
    for i in 0..data.num_samples() {
        let _ = write!(out, "{}", y[i]);
        for j in 0..data.num_features() {
            let v = data.x.get(j, i);
            if v != 0.0 {
                let _ = write!(out, " {}:{}", j + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

/// Synthetic logistic data: features uniform on `[-1, 1]^d`, labels drawn
/// from a planted logistic model with normal `(w, b)`:
/// `P[y = +1] = 1 / (1 + exp(x^T w + b))`.
pub fn gen_synthetic_logistic(n: usize, d: usize, seed_val: u64) -> (Dataset, Vec<f64>, f64) {
    assert!(n >= 1 && d >= 1);
    let mut rng = seed::rng(seed_val);
    let planted_w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let planted_b: f64 = StandardNormal.sample(&mut rng);
    let x = DenseMatrix::from_fn(d, n, |_, _| rng.gen_range(-1.0..=1.0));
    let labels: Vec<f64> = (0..n)
        .map(|i| {
            let z: f64 = (0..d).map(|r| x.get(r, i) * planted_w[r]).sum::<f64>() + planted_b;
            let p_pos = 1.0 / (1.0 + z.exp());
            if rng.gen::<f64>() < p_pos {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    (
        Dataset {
            x,
            labels: Labels::Binary(labels),
        },
        planted_w,
        planted_b,
    )
}

/// Synthetic ridge data: uniform cube features, targets from a planted
/// linear model plus unit-scale noise.
pub fn gen_synthetic_ridge(n: usize, d: usize, seed_val: u64) -> (Dataset, Vec<f64>) {
    assert!(n >= 1 && d >= 1);
    let mut rng = seed::rng(seed_val);
    let planted_w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = DenseMatrix::from_fn(d, n, |_, _| rng.gen_range(-1.0..=1.0));
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let noise: f64 = StandardNormal.sample(&mut rng);
            (0..d).map(|r| x.get(r, i) * planted_w[r]).sum::<f64>() + 0.1 * noise
        })
        .collect();
    (
        Dataset {
            x,
            labels: Labels::Real(y),
        },
        planted_w,
    )
}

/// Synthetic softmax data: uniform cube features, labels sampled from the
/// planted class probabilities.
pub fn gen_synthetic_softmax(n: usize, d: usize, k: usize, seed_val: u64) -> (Dataset, DenseMatrix) {
    assert!(n >= 1 && d >= 1 && k >= 2);
    let mut rng = seed::rng(seed_val);
    let planted = DenseMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
    let x = DenseMatrix::from_fn(d, n, |_, _| rng.gen_range(-1.0..=1.0));
    let mut y = DenseMatrix::zeros(k, n);
    for i in 0..n {
        let logits: Vec<f64> = (0..k)
            .map(|c| (0..d).map(|r| x.get(r, i) * planted.get(r, c)).sum())
            .collect();
        let probs = SoftmaxProblem::softmax_probs(&logits);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = k - 1;
        for (c, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                chosen = c;
                break;
            }
        }
        y.set(chosen, i, 1.0);
    }
    (
        Dataset {
            x,
            labels: Labels::OneHot(y),
        },
        planted,
    )
}

#[cfg(test)]
mod tests;
