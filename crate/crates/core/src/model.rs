//! Model parameters, the ANOVA kernel, and sparse prediction for every model kind.
//!
//! All factorized kinds share one parameter layout per output head: a bias,
//! per-factor weights `beta`, and a row-major `(d + 1) x k` factor matrix whose
//! row 0 is the context factor. Second-order interactions are evaluated with
//!
//! ```text
//! y = b + sum_f beta_f * 1/2 * [ (sum_{i in I} V[i,f] x_i)^2 - sum_{i in I} (V[i,f] x_i)^2 ]
//! ```
//!
//! where `I` is the sample's support, plus index 0 (with `x_0 = 1`) for the
//! hierarchical kinds. Cost is `O(k * |I|)` per head.

use std::fmt;
use std::str::FromStr;

use crate::data::{SparseVector, Task};
use crate::error::{Error, Result};

/// Which model a [`FactorizedModel`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    /// Generalized linear model: `b + <w, x>`.
    Linear,
    /// Factorization machine: second-order ANOVA kernel with `beta = 1`, no context row.
    Fm,
    /// Second-order ANOVA-kernel regression with fitted `beta`, no context row.
    Anova2,
    /// Strongly hierarchical FM: context row, `beta = 1`.
    Shfm,
    /// Strongly hierarchical ANOVA-kernel regression: context row, fitted `beta`.
    Sha2,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Linear,
        ModelKind::Fm,
        ModelKind::Anova2,
        ModelKind::Shfm,
        ModelKind::Sha2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Fm => "fm",
            ModelKind::Anova2 => "anova2",
            ModelKind::Shfm => "shfm",
            ModelKind::Sha2 => "sha2",
        }
    }

    /// Uses the context feature `x_0 = 1` and its factor row.
    pub fn is_hierarchical(self) -> bool {
        matches!(self, ModelKind::Shfm | ModelKind::Sha2)
    }

    /// Learns `beta` instead of fixing it to one.
    pub fn fits_beta(self) -> bool {
        matches!(self, ModelKind::Anova2 | ModelKind::Sha2)
    }

    pub fn is_factorized(self) -> bool {
        self != ModelKind::Linear
    }

    /// First parameter row the model uses (0 when the context row is live).
    pub fn first_row(self) -> usize {
        if self.is_hierarchical() {
            0
        } else {
            1
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::argument(format!("unknown model kind '{s}'")))
    }
}

/// Parameters of one output head.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub(crate) bias: f64,
    pub(crate) beta: Vec<f64>,
    pub(crate) weights: Vec<f64>,
}

/// A trained or initialized model: `classes` independent heads over shared features.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedModel {
    kind: ModelKind,
    task: Task,
    classes: usize,
    dim: usize,
    rank: usize,
    pub(crate) heads: Vec<Head>,
}

impl FactorizedModel {
    /// Zero-initialized model with `beta = 1`. `rank` is ignored for the linear kind.
    pub fn new(kind: ModelKind, task: Task, classes: usize, dim: usize, rank: usize) -> Result<Self> {
        match task {
            Task::Regression if classes != 1 => {
                return Err(Error::argument(format!(
                    "regression models have one head, got {classes}"
                )))
            }
            Task::Classification if classes < 2 => {
                return Err(Error::argument(format!(
                    "classification needs at least two classes, got {classes}"
                )))
            }
            _ => {}
        }
        let rank = if kind.is_factorized() {
            if rank == 0 {
                return Err(Error::argument("latent dimension k must be positive"));
            }
            rank
        } else {
            0
        };
        let width = rank.max(1);
        let head = Head {
            bias: 0.0,
            beta: vec![1.0; rank],
            weights: vec![0.0; (dim + 1) * width],
        };
        Ok(FactorizedModel {
            kind,
            task,
            classes,
            dim,
            rank,
            heads: vec![head; classes],
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Number of output heads.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Latent dimension `k` (0 for the linear kind).
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Entries per parameter row: `k`, or 1 for the linear kind.
    pub fn width(&self) -> usize {
        self.rank.max(1)
    }

    pub fn bias(&self, head: usize) -> f64 {
        self.heads[head].bias
    }

    pub fn beta(&self, head: usize) -> &[f64] {
        &self.heads[head].beta
    }

    /// Parameter row `i` of a head: factor row `v_i`, or `[w_i]` for the linear kind.
    pub fn row(&self, head: usize, i: usize) -> &[f64] {
        let w = self.width();
        &self.heads[head].weights[i * w..(i + 1) * w]
    }

    pub fn factor(&self, head: usize, i: usize, f: usize) -> f64 {
        self.heads[head].weights[i * self.width() + f]
    }

    /// All parameter rows of a head, row-major.
    pub fn weights(&self, head: usize) -> &[f64] {
        &self.heads[head].weights
    }

    pub fn set_bias(&mut self, head: usize, value: f64) -> Result<()> {
        finite(value)?;
        self.heads[head].bias = value;
        Ok(())
    }

    pub fn set_beta(&mut self, head: usize, f: usize, value: f64) -> Result<()> {
        finite(value)?;
        if !self.kind.fits_beta() {
            return Err(Error::argument(format!(
                "beta is fixed to one for kind {}",
                self.kind
            )));
        }
        self.heads[head].beta[f] = value;
        Ok(())
    }

    pub fn set_factor(&mut self, head: usize, i: usize, f: usize, value: f64) -> Result<()> {
        finite(value)?;
        if i < self.kind.first_row() && value != 0.0 {
            return Err(Error::argument(format!(
                "kind {} has no context row",
                self.kind
            )));
        }
        if i > self.dim || f >= self.width() {
            return Err(Error::Shape(format!("parameter ({i}, {f}) out of range")));
        }
        let w = self.width();
        self.heads[head].weights[i * w + f] = value;
        Ok(())
    }

    /// Replaces a whole parameter row.
    pub fn set_row(&mut self, head: usize, i: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.width() {
            return Err(Error::Shape(format!(
                "row of length {} for width {}",
                row.len(),
                self.width()
            )));
        }
        for (f, &v) in row.iter().enumerate() {
            self.set_factor(head, i, f, v)?;
        }
        Ok(())
    }

    /// Interaction weight between features `i` and `j`: `<v_i * beta, v_j>`.
    /// With `j = 0` on a hierarchical kind this is the main effect of `i`.
    pub fn interaction(&self, head: usize, i: usize, j: usize) -> f64 {
        let h = &self.heads[head];
        let (a, b) = (self.row(head, i), self.row(head, j));
        a.iter()
            .zip(b)
            .zip(&h.beta)
            .map(|((x, y), beta)| x * beta * y)
            .sum()
    }

    fn check_input(&self, x: &SparseVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::Shape(format!(
                "sample dimension {} but model dimension {}",
                x.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Per-head predictions `y_hat` for one sample.
    pub fn predict(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.predict_raw(x.indices(), x.values())
    }

    /// Like [`predict`](Self::predict) but over raw index/value slices, which
    /// may contain explicit zeros. Indices must lie in `[1, d]`.
    pub fn predict_raw(&self, indices: &[usize], values: &[f64]) -> Result<Vec<f64>> {
        if indices.len() != values.len() || indices.iter().any(|&i| i == 0 || i > self.dim) {
            return Err(Error::Shape("support outside [1, d]".into()));
        }
        let mut dots = vec![0.0; self.rank];
        let mut kernels = vec![0.0; self.rank];
        (0..self.classes)
            .map(|h| {
                let y = self.head_forward(h, indices, values, &mut dots, &mut kernels);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::numeric(format!("head {h} produced non-finite output {y}")))
                }
            })
            .collect()
    }

    /// `s_f = sum_{i in I} V[i,f] x_i` for every head and factor.
    pub fn cached_factor_dots(&self, x: &SparseVector) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut kernels = vec![0.0; self.rank];
        Ok((0..self.classes)
            .map(|h| {
                let mut dots = vec![0.0; self.rank];
                self.head_forward(h, x.indices(), x.values(), &mut dots, &mut kernels);
                dots
            })
            .collect())
    }

    /// Second-order kernel values `A^2(V'[:,f], x')` for every head and factor.
    pub fn kernel_values(&self, x: &SparseVector) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let mut dots = vec![0.0; self.rank];
        Ok((0..self.classes)
            .map(|h| {
                let mut kernels = vec![0.0; self.rank];
                self.head_forward(h, x.indices(), x.values(), &mut dots, &mut kernels);
                kernels
            })
            .collect())
    }

    /// One head's output. Fills `dots[f] = s_f` and `kernels[f] = A^2_f`
    /// (both length `k`; unused for the linear kind).
    pub(crate) fn head_forward(
        &self,
        head: usize,
        indices: &[usize],
        values: &[f64],
        dots: &mut [f64],
        kernels: &mut [f64],
    ) -> f64 {
        let h = &self.heads[head];
        if self.kind == ModelKind::Linear {
            return h.bias
                + indices
                    .iter()
                    .zip(values)
                    .map(|(&i, &x)| h.weights[i] * x)
                    .sum::<f64>();
        }
        let k = self.rank;
        // kernels doubles as the sum-of-squares accumulator until the end
        dots.fill(0.0);
        kernels.fill(0.0);
        if self.kind.is_hierarchical() {
            let row = &h.weights[..k];
            for f in 0..k {
                dots[f] = row[f];
                kernels[f] = row[f] * row[f];
            }
        }
        for (&i, &x) in indices.iter().zip(values) {
            let row = &h.weights[i * k..(i + 1) * k];
            for f in 0..k {
                let t = row[f] * x;
                dots[f] += t;
                kernels[f] += t * t;
            }
        }
        let mut y = h.bias;
        for f in 0..k {
            kernels[f] = 0.5 * (dots[f] * dots[f] - kernels[f]);
            y += h.beta[f] * kernels[f];
        }
        y
    }
}

fn finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(format!("non-finite parameter {v}")))
    }
}

/// ANOVA kernel of order `order` between `a` and `b` restricted to `support`:
/// the sum over strictly increasing `order`-tuples of `prod a_i b_i`.
///
/// Evaluated by dynamic programming over the multi-linear recursion
/// `A^m = a_i b_i A^{m-1}(without i) + A^m(without i)` in `O(order * |support|)`.
/// Returns 0 when `order > |support|`.
pub fn anova_kernel(order: usize, a: &[f64], b: &[f64], support: &[usize]) -> Result<f64> {
    if order == 0 {
        return Err(Error::argument("ANOVA kernel order must be at least 1"));
    }
    if let Some(&i) = support.iter().find(|&&i| i >= a.len() || i >= b.len()) {
        return Err(Error::Shape(format!("support index {i} outside the vectors")));
    }
    // table[m] holds A^m over the prefix of the support processed so far
    let mut table = vec![0.0; order + 1];
    table[0] = 1.0;
    for (seen, &i) in support.iter().enumerate() {
        let p = a[i] * b[i];
        for m in (1..=order.min(seen + 1)).rev() {
            table[m] += p * table[m - 1];
        }
    }
    Ok(table[order])
}
