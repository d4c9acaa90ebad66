//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shfm_kit::{FactorizedModel, LossKind, ModelKind, SparseVector, Task};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Explicit double sum over pairs, with the context feature as index 0.
pub fn brute_force(model: &FactorizedModel, head: usize, x: &SparseVector) -> f64 {
    let mut feats: Vec<(usize, f64)> = Vec::new();
    if model.kind().is_hierarchical() {
        feats.push((0, 1.0));
    }
    feats.extend(x.iter());
    let mut y = model.bias(head);
    if model.kind() == ModelKind::Linear {
        for (i, v) in x.iter() {
            y += model.factor(head, i, 0) * v;
        }
        return y;
    }
    let beta = model.beta(head);
    for a in 0..feats.len() {
        for b in a + 1..feats.len() {
            let (i, xi) = feats[a];
            let (j, xj) = feats[b];
            let w: f64 = (0..model.rank())
                .map(|f| beta[f] * model.factor(head, i, f) * model.factor(head, j, f))
                .sum();
            y += w * xi * xj;
        }
    }
    y
}

pub fn random_sparse(r: &mut ChaCha8Rng, d: usize, max_nnz: usize) -> SparseVector {
    let nnz = r.random_range(0..=max_nnz.min(d));
    let idx = rand::seq::index::sample(r, d, nnz);
    let pairs: Vec<(usize, f64)> = idx
        .into_iter()
        .map(|i| (i + 1, r.random_range(-2.0..2.0)))
        .collect();
    SparseVector::from_pairs(d, pairs).unwrap()
}

/// A model of `kind` with every parameter random.
pub fn random_model(
    r: &mut ChaCha8Rng,
    kind: ModelKind,
    task: Task,
    classes: usize,
    d: usize,
    k: usize,
) -> FactorizedModel {
    let mut m = FactorizedModel::new(kind, task, classes, d, k).unwrap();
    for h in 0..classes {
        m.set_bias(h, r.random_range(-1.0..1.0)).unwrap();
        if kind.fits_beta() {
            for f in 0..k {
                m.set_beta(h, f, r.random_range(-1.5..1.5)).unwrap();
            }
        }
        let width = m.width();
        for i in kind.first_row()..=d {
            if kind == ModelKind::Linear && i == 0 {
                continue;
            }
            for f in 0..width {
                m.set_factor(h, i, f, r.random_range(-1.0..1.0)).unwrap();
            }
        }
    }
    m
}

/// Total loss of one sample through the public prediction path.
pub fn sample_loss(model: &FactorizedModel, x: &SparseVector, label: f64) -> f64 {
    let yhat = model.predict(x).unwrap();
    let mut g = vec![0.0; yhat.len()];
    LossKind::for_task(model.task(), model.classes())
        .eval_into(label, &yhat, &mut g)
        .unwrap()
}

/// Minimizes `0.5 a v^2 + z v + l1 |v|` (`a > 0`) by bisection on the right
/// derivative, which is nondecreasing in `v`.
pub fn minimize_scalar(a: f64, z: f64, l1: f64) -> f64 {
    let right = |v: f64| a * v + z + if v >= 0.0 { l1 } else { -l1 };
    let left = |v: f64| a * v + z + if v > 0.0 { l1 } else { -l1 };
    // 0 is optimal when the subdifferential at 0 contains 0
    if left(0.0) <= 0.0 && right(0.0) >= 0.0 {
        return 0.0;
    }
    let span = (z.abs() + l1) / a + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if right(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn objective(a: f64, z: f64, l1: f64, v: f64) -> f64 {
    0.5 * a * v * v + z * v + l1 * v.abs()
}

/// Least-squares fit of `y = a + b x`; returns R^2.
pub fn linear_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    1.0 - ss_res / syy
}

#[derive(Clone, Copy, Debug)]
pub enum Coord {
    Bias(usize),
    Beta(usize, usize),
    Factor(usize, usize, usize),
}

/// Analytic derivative of the sample loss with respect to one coordinate.
pub fn analytic_grad(model: &FactorizedModel, x: &SparseVector, label: f64, c: Coord) -> f64 {
    let yhat = model.predict(x).unwrap();
    let mut dl = vec![0.0; yhat.len()];
    LossKind::for_task(model.task(), model.classes())
        .eval_into(label, &yhat, &mut dl)
        .unwrap();
    match c {
        Coord::Bias(h) => shfm_kit::ftrl::grad_b(dl[h]),
        Coord::Beta(h, f) => {
            let kern = model.kernel_values(x).unwrap();
            shfm_kit::ftrl::grad_beta(dl[h], kern[h][f])
        }
        Coord::Factor(h, i, f) => {
            if model.kind() == ModelKind::Linear {
                return dl[h] * x.get(i);
            }
            let xi = if i == 0 { 1.0 } else { x.get(i) };
            let dots = model.cached_factor_dots(x).unwrap();
            shfm_kit::ftrl::grad_v(dl[h], model.beta(h)[f], xi, dots[h][f], model.factor(h, i, f))
        }
    }
}

fn perturbed(model: &FactorizedModel, c: Coord, delta: f64) -> FactorizedModel {
    let mut m = model.clone();
    match c {
        Coord::Bias(h) => m.set_bias(h, model.bias(h) + delta).unwrap(),
        Coord::Beta(h, f) => m.set_beta(h, f, model.beta(h)[f] + delta).unwrap(),
        Coord::Factor(h, i, f) => m.set_factor(h, i, f, model.factor(h, i, f) + delta).unwrap(),
    }
    m
}

/// Central finite difference of the sample loss.
pub fn numeric_grad(model: &FactorizedModel, x: &SparseVector, label: f64, c: Coord, step: f64) -> f64 {
    let up = sample_loss(&perturbed(model, c, step), x, label);
    let down = sample_loss(&perturbed(model, c, -step), x, label);
    (up - down) / (2.0 * step)
}
