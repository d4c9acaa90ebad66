//! Losses and their derivatives with respect to the model outputs.

use std::f64::consts::LN_2;

use crate::data::Task;
use crate::error::{Error, Result};

/// Training loss paired with a task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// `1/2 (y - y_hat)^2`.
    Mse,
    /// Softmax cross-entropy with a base-2 logarithm over `classes` logits.
    SoftmaxCe { classes: usize },
}

impl LossKind {
    pub fn for_task(task: Task, classes: usize) -> Self {
        match task {
            Task::Regression => LossKind::Mse,
            Task::Classification => LossKind::SoftmaxCe { classes },
        }
    }

    /// Loss at `label`, writing `dL/dy_hat` into `grad` (one entry per head).
    pub fn eval_into(self, label: f64, yhat: &[f64], grad: &mut [f64]) -> Result<f64> {
        match self {
            LossKind::Mse => {
                let (l, g) = mse(label, yhat[0])?;
                grad[0] = g;
                Ok(l)
            }
            LossKind::SoftmaxCe { .. } => softmax_ce_into(label as usize, yhat, grad),
        }
    }
}

/// Squared error `1/2 (y - y_hat)^2` and its derivative `y_hat - y`.
pub fn mse(y: f64, yhat: f64) -> Result<(f64, f64)> {
    if !y.is_finite() || !yhat.is_finite() {
        return Err(Error::numeric(format!("mse of non-finite input ({y}, {yhat})")));
    }
    let r = yhat - y;
    Ok((0.5 * r * r, r))
}

/// Cross-entropy `-log2 softmax(y_hat)_y` and its gradient `(softmax - onehot) / ln 2`.
pub fn softmax_ce(y: usize, logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; logits.len()];
    let loss = softmax_ce_into(y, logits, &mut grad)?;
    Ok((loss, grad))
}

fn softmax_ce_into(y: usize, logits: &[f64], grad: &mut [f64]) -> Result<f64> {
    if y >= logits.len() {
        return Err(Error::Label {
            line: 0,
            msg: format!("class {y} with only {} outputs", logits.len()),
        });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::numeric("softmax over non-finite logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (g, &l) in grad.iter_mut().zip(logits) {
        *g = (l - max).exp();
        total += *g;
    }
    for (c, g) in grad.iter_mut().enumerate() {
        let p = *g / total;
        *g = (p - if c == y { 1.0 } else { 0.0 }) / LN_2;
    }
    let log_p = (logits[y] - max) - total.ln();
    Ok(-log_p / LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(3.0, 1.0).unwrap(), (2.0, -2.0));
        assert_eq!(mse(1.5, 1.5).unwrap(), (0.0, 0.0));
        assert_eq!(mse(0.0, 1e3).unwrap(), (5e5, 1e3));
        assert!(mse(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn uniform_logits_give_log2_c() {
        for y in 0..4 {
            let (l, _) = softmax_ce(y, &[0.3; 4]).unwrap();
            assert!((l - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_class_closed_form() {
        let e = std::f64::consts::E;
        let (l, _) = softmax_ce(0, &[1.0, 0.0]).unwrap();
        let expected = -(e / (e + 1.0)).log2();
        assert!((l - expected).abs() < 1e-15);
        assert!((l - 0.45194).abs() < 1e-5);
    }

    #[test]
    fn saturated_softmax_loss_vanishes() {
        let (l, g) = softmax_ce(1, &[0.0, 800.0, -3.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| v.abs() < 1e-300));
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(softmax_ce(3, &[0.0; 3]), Err(Error::Label { .. })));
    }

    #[test]
    fn gradient_sums_to_zero() {
        let (_, g) = softmax_ce(2, &[0.1, -1.0, 2.0, 0.5]).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
    }
}
