//! Seeded planted-hierarchy benchmark.
//!
//! A small active set `S` carries latent rows `u_i`; a context row `u_0`
//! turns them into main effects `<u_i, u_0>` and pairwise effects `<u_i, u_j>`
//! exist only inside `S x S`, so the planted model is itself strongly
//! hierarchical. Every sample mixes a few active features with noise features.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audit::DEFAULT_TOL;
use crate::data::{Dataset, SparseVector, Task};
use crate::error::{Error, Result};
use crate::model::{FactorizedModel, ModelKind};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub samples: usize,
    /// Samples moved to the test split, taken from the end.
    pub test_samples: usize,
    pub active: usize,
    pub rank: usize,
    pub active_per_sample: usize,
    pub noise_per_sample: usize,
    /// Feature values are uniform on `[lo, hi)`.
    pub value_range: (f64, f64),
    /// Standard deviation of the planted factor entries.
    pub factor_scale: f64,
    pub bias: f64,
    pub noise_sigma: f64,
    pub task: Task,
    /// Quantile bins for classification.
    pub classes: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: 2_000,
            samples: 10_000,
            test_samples: 2_000,
            active: 12,
            rank: 3,
            active_per_sample: 4,
            noise_per_sample: 6,
            value_range: (0.5, 1.5),
            factor_scale: 0.55,
            bias: 0.5,
            noise_sigma: 0.1,
            task: Task::Regression,
            classes: 1,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.active == 0 || self.active > self.dim {
            return bad("active set must be nonempty and fit in d");
        }
        if self.active_per_sample > self.active
            || self.noise_per_sample > self.dim - self.active
        {
            return bad("per-sample feature counts exceed the available features");
        }
        if self.test_samples > self.samples {
            return bad("test split larger than the dataset");
        }
        if self.rank == 0 {
            return bad("planted rank must be positive");
        }
        let (lo, hi) = self.value_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("invalid value range");
        }
        if !(self.noise_sigma >= 0.0 && self.factor_scale > 0.0) {
            return bad("scales must be nonnegative");
        }
        match self.task {
            Task::Regression if self.classes != 1 => bad("regression uses one class"),
            Task::Classification if self.classes < 2 => bad("classification needs two classes"),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub train: Dataset,
    pub test: Dataset,
    /// The generating model, of kind shfm with one head.
    pub planted: FactorizedModel,
    /// Sorted feature ids of `S`.
    pub active: Vec<usize>,
}

impl Synthetic {
    /// All pairs `i < j` inside `S` whose planted interaction is nonzero.
    pub fn planted_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, &i) in self.active.iter().enumerate() {
            for &j in &self.active[a + 1..] {
                if self.planted.interaction(0, i, j) != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.factor_scale).expect("positive scale");

    let mut active: Vec<usize> = sample(&mut rng, cfg.dim, cfg.active)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    active.sort_unstable();
    let inactive: Vec<usize> = (1..=cfg.dim).filter(|i| active.binary_search(i).is_err()).collect();

    let mut planted = FactorizedModel::new(ModelKind::Shfm, Task::Regression, 1, cfg.dim, cfg.rank)?;
    planted.set_bias(0, cfg.bias)?;
    for &i in std::iter::once(&0).chain(&active) {
        let row: Vec<f64> = (0..cfg.rank).map(|_| normal.sample(&mut rng)).collect();
        planted.set_row(0, i, &row)?;
    }

    let (lo, hi) = cfg.value_range;
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut xs = Vec::with_capacity(cfg.samples);
    let mut scores = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        for a in sample(&mut rng, active.len(), cfg.active_per_sample) {
            pairs.push((active[a], rng.random_range(lo..hi)));
        }
        for a in sample(&mut rng, inactive.len(), cfg.noise_per_sample) {
            pairs.push((inactive[a], rng.random_range(lo..hi)));
        }
        let x = SparseVector::from_pairs(cfg.dim, pairs)?;
        let eps = if cfg.noise_sigma > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        scores.push(planted.predict(&x)?[0] + eps);
        xs.push(x);
    }

    let labels = match cfg.task {
        Task::Regression => scores,
        Task::Classification => quantile_bins(&scores, cfg.classes),
    };
    let split = cfg.samples - cfg.test_samples;
    let test_x = xs.split_off(split);
    let mut train_y = labels;
    let test_y = train_y.split_off(split);
    Ok(Synthetic {
        train: Dataset::new(xs, train_y, cfg.dim, cfg.classes, cfg.task)?,
        test: Dataset::new(test_x, test_y, cfg.dim, cfg.classes, cfg.task)?,
        planted,
        active,
    })
}

/// Class `q` for scores between the `q/c` and `(q+1)/c` empirical quantiles.
fn quantile_bins(scores: &[f64], classes: usize) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..classes)
        .map(|q| sorted[q * sorted.len() / classes])
        .collect();
    scores
        .iter()
        .map(|s| cuts.iter().take_while(|c| s >= c).count() as f64)
        .collect()
}

/// Feature pairs `i < j` (both in `1..=d`) with a nonzero interaction in head 0,
/// judged with the audit's relative tolerance.
pub fn recovered_pairs(model: &FactorizedModel) -> Vec<(usize, usize)> {
    if !model.kind().is_factorized() {
        return Vec::new();
    }
    let beta = model.beta(0);
    let live: Vec<(usize, Vec<f64>, f64)> = (1..=model.dim())
        .filter_map(|i| {
            let w: Vec<f64> = model.row(0, i).iter().zip(beta).map(|(a, b)| a * b).collect();
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            (n > 0.0).then_some((i, w, n))
        })
        .collect();
    let mut out = Vec::new();
    for (a, (i, wi, ni)) in live.iter().enumerate() {
        for (j, _, _) in &live[a + 1..] {
            let vj = model.row(0, *j);
            let nj = vj.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dot: f64 = wi.iter().zip(vj).map(|(x, y)| x * y).sum();
            if dot.abs() > DEFAULT_TOL * ni * nj {
                out.push((*i, *j));
            }
        }
    }
    out
}

/// F1 between a recovered and a planted pair set. Both empty scores 1.
pub fn support_f1(recovered: &[(usize, usize)], planted: &[(usize, usize)]) -> f64 {
    if recovered.is_empty() && planted.is_empty() {
        return 1.0;
    }
    let hits = recovered.iter().filter(|p| planted.contains(p)).count();
    2.0 * hits as f64 / (recovered.len() + planted.len()) as f64
}
