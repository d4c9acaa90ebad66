//! Per-coordinate FTRL-Proximal with L1/L2 regularization.
//!
//! Every coordinate keeps a signed accumulator `z` and a sum of squared
//! gradients `n`. The learning rate is `eta(n) = alpha / (mu + n)^gamma` and the
//! coordinate's value is the closed-form minimizer
//!
//! ```text
//! v = 0                                          if |z| <= l1
//! v = (l1 * sgn(z) - z) / (1 / eta(n) + l2)      otherwise
//! ```

use crate::error::{Error, Result};
use crate::model::FactorizedModel;

/// Optimizer and initialization settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperParams {
    pub alpha: f64,
    pub mu: f64,
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Standard deviation of the first-touch factor draw.
    pub init_sigma: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            alpha: 0.1,
            mu: 0.1,
            gamma: 0.5,
            lambda1: 0.001,
            lambda2: 0.1,
            init_sigma: 0.01,
            seed: 42,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [("alpha", self.alpha), ("mu", self.mu), ("gamma", self.gamma)];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("l1", self.lambda1),
            ("l2", self.lambda2),
            ("init-sigma", self.init_sigma),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    /// Regularization applied to factor entries.
    pub fn factor_penalty(&self) -> Penalty {
        Penalty {
            l1: self.lambda1,
            l2: self.lambda2,
        }
    }
}

/// L1/L2 strengths for one family of coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalty {
    pub l1: f64,
    pub l2: f64,
}

impl Penalty {
    pub const NONE: Penalty = Penalty { l1: 0.0, l2: 0.0 };
}

/// `alpha / (mu + n)^gamma`.
pub fn learning_rate(n: f64, hp: &HyperParams) -> f64 {
    hp.alpha / (hp.mu + n).powf(hp.gamma)
}

fn inverse_rate(n: f64, hp: &HyperParams) -> f64 {
    (hp.mu + n).powf(hp.gamma) / hp.alpha
}

/// Closed-form coordinate value with the factor penalty from `hp`.
pub fn solve_coordinate(z: f64, n: f64, hp: &HyperParams) -> f64 {
    solve_with(z, n, hp, hp.factor_penalty())
}

/// Closed-form coordinate value under an explicit penalty.
pub fn solve_with(z: f64, n: f64, hp: &HyperParams, penalty: Penalty) -> f64 {
    if z.abs() <= penalty.l1 {
        return 0.0;
    }
    let sgn = if z >= 0.0 { 1.0 } else { -1.0 };
    (penalty.l1 * sgn - z) / (inverse_rate(n, hp) + penalty.l2)
}

/// `dL/dV[i,f] = dL/dy * beta_f * x_i * (s_f - V[i,f] x_i)`, where `s_f` is the
/// full cached dot product over the support.
pub fn grad_v(dl_dyhat: f64, beta_f: f64, x_i: f64, s_f: f64, v_if: f64) -> f64 {
    dl_dyhat * beta_f * x_i * (s_f - v_if * x_i)
}

/// `dL/dbeta_f = dL/dy * A^2_f`.
pub fn grad_beta(dl_dyhat: f64, kernel_value_f: f64) -> f64 {
    dl_dyhat * kernel_value_f
}

/// `dL/db = dL/dy`.
pub fn grad_b(dl_dyhat: f64) -> f64 {
    dl_dyhat
}

/// Folds gradient `g` observed at value `v_current` into `(z, n)`.
///
/// `sigma = [(mu + n + g^2)^gamma - (mu + n)^gamma] / alpha`, then
/// `z' = z + g - sigma * v_current` and `n' = n + g^2`.
pub fn accumulate(z: f64, n: f64, g: f64, v_current: f64, hp: &HyperParams) -> (f64, f64) {
    if g == 0.0 {
        return (z, n);
    }
    let n_new = n + g * g;
    let sigma = inverse_rate(n_new, hp) - inverse_rate(n, hp);
    (z + g - sigma * v_current, n_new)
}

/// Accumulates one gradient and returns the coordinate's new value.
pub fn step(z: &mut f64, n: &mut f64, g: f64, v_current: f64, hp: &HyperParams, penalty: Penalty) -> f64 {
    let (z2, n2) = accumulate(*z, *n, g, v_current, hp);
    *z = z2;
    *n = n2;
    solve_with(z2, n2, hp, penalty)
}

/// Accumulators of one output head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadState {
    pub(crate) z: Vec<f64>,
    pub(crate) n: Vec<f64>,
    pub(crate) initialized: Vec<bool>,
    pub(crate) bias_z: f64,
    pub(crate) bias_n: f64,
    pub(crate) beta_z: Vec<f64>,
    pub(crate) beta_n: Vec<f64>,
}

/// Optimizer state shaped like the model's parameter rows: `(d + 1) x width`
/// accumulators per head plus scalars for the bias and `beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct FtrlState {
    width: usize,
    rows: usize,
    pub(crate) heads: Vec<HeadState>,
}

impl FtrlState {
    pub fn for_model(model: &FactorizedModel) -> Self {
        let width = model.width();
        let rows = model.dim() + 1;
        let head = HeadState {
            z: vec![0.0; rows * width],
            n: vec![0.0; rows * width],
            initialized: vec![false; rows],
            bias_z: 0.0,
            bias_n: 0.0,
            beta_z: vec![0.0; model.rank()],
            beta_n: vec![0.0; model.rank()],
        };
        FtrlState {
            width,
            rows,
            heads: vec![head; model.classes()],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn heads(&self) -> usize {
        self.heads.len()
    }

    pub fn z(&self, head: usize, i: usize, f: usize) -> f64 {
        self.heads[head].z[i * self.width + f]
    }

    pub fn n(&self, head: usize, i: usize, f: usize) -> f64 {
        self.heads[head].n[i * self.width + f]
    }

    pub fn z_row(&self, head: usize, i: usize) -> &[f64] {
        &self.heads[head].z[i * self.width..(i + 1) * self.width]
    }

    pub fn n_row(&self, head: usize, i: usize) -> &[f64] {
        &self.heads[head].n[i * self.width..(i + 1) * self.width]
    }

    /// Whether row `i` has been touched (and its factors drawn) yet.
    pub fn row_initialized(&self, head: usize, i: usize) -> bool {
        self.heads[head].initialized[i]
    }

    /// `(z, n)` of the bias.
    pub fn bias_state(&self, head: usize) -> (f64, f64) {
        (self.heads[head].bias_z, self.heads[head].bias_n)
    }

    /// `(z, n)` of `beta_f`.
    pub fn beta_state(&self, head: usize, f: usize) -> (f64, f64) {
        (self.heads[head].beta_z[f], self.heads[head].beta_n[f])
    }

    /// Restores one accumulator pair, marking its row as touched.
    pub fn set_entry(&mut self, head: usize, i: usize, f: usize, z: f64, n: f64) -> Result<()> {
        if head >= self.heads.len() || i >= self.rows || f >= self.width {
            return Err(Error::Shape(format!("state entry ({head}, {i}, {f}) out of range")));
        }
        if n < 0.0 || !z.is_finite() || !n.is_finite() {
            return Err(Error::numeric(format!("invalid accumulator pair ({z}, {n})")));
        }
        let h = &mut self.heads[head];
        h.z[i * self.width + f] = z;
        h.n[i * self.width + f] = n;
        h.initialized[i] = true;
        Ok(())
    }

    /// Number of stored accumulator reals (z and n for every entry).
    pub fn len(&self) -> usize {
        self.heads
            .iter()
            .map(|h| h.z.len() + h.n.len() + 2 + h.beta_z.len() + h.beta_n.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
