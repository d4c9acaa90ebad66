//! Mini-batch FTRL-Proximal training for every model kind.
//!
//! One batch update:
//!
//! 1. every row in the support of a batch sample (plus the context row for the
//!    hierarchical kinds) that has never been touched gets its factors drawn
//!    from `N(0, init_sigma^2)`;
//! 2. each sample is scored once, keeping the per-factor dot products `s_f`;
//! 3. gradients of the mean batch loss are accumulated per touched coordinate;
//! 4. each touched coordinate folds its gradient into `(z, n)` and takes the
//!    closed-form value.
//!
//! With `batch_size = 1` this is exactly the per-sample algorithm.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{batch_iter, Dataset, Task};
use crate::error::{Error, Result};
use crate::ftrl::{grad_b, grad_beta, grad_v, step, FtrlState, HyperParams, Penalty};
use crate::loss::LossKind;
use crate::metrics::{evaluate, sparsity, EvalReport, Sparsity, TaskMetrics};
use crate::model::{FactorizedModel, ModelKind};

/// When to evaluate on the test set and emit a trace row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalCadence {
    /// Every `n` epochs, and after the last one.
    Epochs(usize),
    /// Every `n` batches, and after the last one.
    Batches(usize),
    /// Only after the last epoch.
    Final,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub rank: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub hp: HyperParams,
    pub shuffle: bool,
    pub eval: EvalCadence,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Shfm,
            rank: 10,
            epochs: 10,
            batch_size: 16,
            hp: HyperParams::default(),
            shuffle: true,
            eval: EvalCadence::Epochs(1),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.kind.is_factorized() && self.rank == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        match self.eval {
            EvalCadence::Epochs(0) | EvalCadence::Batches(0) => {
                return Err(Error::Config("evaluation interval must be positive".into()))
            }
            _ => {}
        }
        self.hp.validate()
    }
}

/// One evaluation point of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    /// Batches processed so far.
    pub step: usize,
    /// Mean training loss over the samples seen since the previous row.
    pub train_loss: f64,
    pub test: Option<EvalReport>,
    pub sparsity: Sparsity,
    /// Wall-clock time since the previous row, training and evaluation included.
    pub seconds: f64,
}

/// Writes a trace as CSV.
pub fn write_trace_csv<W: Write>(mut out: W, task: Task, trace: &[TraceRow]) -> Result<()> {
    let [m1, m2] = TaskMetrics::names(task);
    writeln!(
        out,
        "epoch,step,train_loss,test_loss,{m1},{m2},sparsity,row_sparsity,seconds"
    )?;
    for r in trace {
        let (loss, a, b) = match &r.test {
            Some(t) => {
                let [a, b] = t.metrics.values();
                (t.loss.to_string(), a.to_string(), b.to_string())
            }
            None => (String::new(), String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{loss},{a},{b},{},{},{:.6}",
            r.epoch, r.step, r.train_loss, r.sparsity.element, r.sparsity.row, r.seconds
        )?;
    }
    Ok(())
}

/// Owns the model and optimizer state of one training run.
pub struct Trainer {
    model: FactorizedModel,
    state: FtrlState,
    hp: HyperParams,
    loss: LossKind,
    init_rng: ChaCha8Rng,
    // gradient accumulators, same layout as the model rows
    grads: Vec<Vec<f64>>,
    bias_grads: Vec<f64>,
    beta_grads: Vec<Vec<f64>>,
    in_batch: Vec<bool>,
    touched: Vec<usize>,
}

/// Per-sample forward results for one batch.
struct Forward {
    dots: Vec<f64>,
    kernels: Vec<f64>,
    dl: Vec<f64>,
    loss: Vec<f64>,
}

impl Trainer {
    pub fn new(
        kind: ModelKind,
        task: Task,
        classes: usize,
        dim: usize,
        rank: usize,
        hp: HyperParams,
    ) -> Result<Self> {
        hp.validate()?;
        let model = FactorizedModel::new(kind, task, classes, dim, rank)
            .map_err(|e| Error::Config(e.to_string()))?;
        let state = FtrlState::for_model(&model);
        let width = model.width();
        Ok(Trainer {
            grads: vec![vec![0.0; (dim + 1) * width]; classes],
            bias_grads: vec![0.0; classes],
            beta_grads: vec![vec![0.0; model.rank()]; classes],
            in_batch: vec![false; dim + 1],
            touched: Vec::new(),
            loss: LossKind::for_task(task, classes),
            init_rng: ChaCha8Rng::seed_from_u64(hp.seed),
            hp,
            model,
            state,
        })
    }

    /// A trainer sized for `data`.
    pub fn for_dataset(config: &TrainConfig, data: &Dataset) -> Result<Self> {
        config.validate()?;
        Trainer::new(
            config.kind,
            data.task(),
            data.classes(),
            data.dim(),
            config.rank,
            config.hp,
        )
    }

    pub fn model(&self) -> &FactorizedModel {
        &self.model
    }

    pub fn state(&self) -> &FtrlState {
        &self.state
    }

    pub fn into_parts(self) -> (FactorizedModel, FtrlState) {
        (self.model, self.state)
    }

    fn context(&self) -> bool {
        self.model.kind().is_hierarchical()
    }

    fn init_row(&mut self, i: usize) {
        let kind = self.model.kind();
        let width = self.model.width();
        for h in 0..self.model.classes() {
            let head = &mut self.state.heads[h];
            if head.initialized[i] {
                continue;
            }
            head.initialized[i] = true;
            if kind.is_factorized() {
                let row = &mut self.model.heads[h].weights[i * width..(i + 1) * width];
                for v in row {
                    let draw: f64 = self.init_rng.sample(StandardNormal);
                    *v = self.hp.init_sigma * draw;
                }
            }
        }
    }

    fn forward(&self, data: &Dataset, batch: &[usize]) -> Forward {
        let c = self.model.classes();
        let k = self.model.rank();
        // the linear kind keeps a one-slot placeholder so chunk sizes stay positive
        let chunk = (c * k).max(1);
        let b = batch.len();
        let mut fw = Forward {
            dots: vec![0.0; b * chunk],
            kernels: vec![0.0; b * chunk],
            dl: vec![0.0; b * c],
            loss: vec![0.0; b],
        };
        let model = &self.model;
        let loss_kind = self.loss;
        let work = |(((&s, dots), kernels), (dl, loss)): (
            ((&usize, &mut [f64]), &mut [f64]),
            (&mut [f64], &mut f64),
        )| {
            let x = data.sample(s);
            let mut yhat = vec![0.0; c];
            for (h, y) in yhat.iter_mut().enumerate() {
                *y = model.head_forward(
                    h,
                    x.indices(),
                    x.values(),
                    &mut dots[h * k..(h + 1) * k],
                    &mut kernels[h * k..(h + 1) * k],
                );
            }
            *loss = loss_kind
                .eval_into(data.label(s), &yhat, dl)
                .unwrap_or(f64::NAN);
        };
        if b >= 64 && rayon::current_num_threads() > 1 {
            batch
                .par_iter()
                .zip(fw.dots.par_chunks_mut(chunk))
                .zip(fw.kernels.par_chunks_mut(chunk))
                .zip(fw.dl.par_chunks_mut(c).zip(fw.loss.par_iter_mut()))
                .for_each(work);
        } else {
            batch
                .iter()
                .zip(fw.dots.chunks_mut(chunk))
                .zip(fw.kernels.chunks_mut(chunk))
                .zip(fw.dl.chunks_mut(c).zip(fw.loss.iter_mut()))
                .for_each(work);
        }
        fw
    }

    /// Applies one mini-batch update. Returns the summed pre-update loss.
    pub fn train_batch(&mut self, data: &Dataset, batch: &[usize]) -> Result<f64> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let context = self.context();
        self.touched.clear();
        if context {
            self.touched.push(0);
            self.in_batch[0] = true;
            self.init_row(0);
        }
        for &s in batch {
            for &i in data.sample(s).indices() {
                if !self.in_batch[i] {
                    self.in_batch[i] = true;
                    self.touched.push(i);
                    self.init_row(i);
                }
            }
        }

        let fw = self.forward(data, batch);
        let total: f64 = fw.loss.iter().sum();
        if !total.is_finite() {
            for &i in &self.touched {
                self.in_batch[i] = false;
            }
            return Err(Error::numeric("non-finite training loss"));
        }

        self.accumulate_gradients(data, batch, &fw);
        self.apply_updates();
        Ok(total)
    }

    fn accumulate_gradients(&mut self, data: &Dataset, batch: &[usize], fw: &Forward) {
        let c = self.model.classes();
        let k = self.model.rank();
        let width = self.model.width();
        let kind = self.model.kind();
        let scale = 1.0 / batch.len() as f64;
        for (b, &s) in batch.iter().enumerate() {
            let x = data.sample(s);
            for h in 0..c {
                let dl = fw.dl[b * c + h] * scale;
                if dl == 0.0 {
                    continue;
                }
                self.bias_grads[h] += grad_b(dl);
                let grads = &mut self.grads[h];
                let head = &self.model.heads[h];
                if kind == ModelKind::Linear {
                    for (i, xv) in x.iter() {
                        grads[i] += dl * xv;
                    }
                    continue;
                }
                let off = b * c * k + h * k;
                let dots = &fw.dots[off..off + k];
                if kind.fits_beta() {
                    for (g, &kv) in self.beta_grads[h].iter_mut().zip(&fw.kernels[off..off + k]) {
                        *g += grad_beta(dl, kv);
                    }
                }
                let ctx = kind.is_hierarchical().then_some((0usize, 1.0f64));
                for (i, xv) in ctx.into_iter().chain(x.iter()) {
                    let row = &head.weights[i * width..(i + 1) * width];
                    let g = &mut grads[i * width..(i + 1) * width];
                    for f in 0..k {
                        g[f] += grad_v(dl, head.beta[f], xv, dots[f], row[f]);
                    }
                }
            }
        }
    }

    fn apply_updates(&mut self) {
        let hp = self.hp;
        let factor_penalty = hp.factor_penalty();
        let width = self.model.width();
        let fits_beta = self.model.kind().fits_beta();
        for h in 0..self.model.classes() {
            let head = &mut self.model.heads[h];
            let st = &mut self.state.heads[h];
            let grads = &mut self.grads[h];
            for &i in &self.touched {
                for e in i * width..(i + 1) * width {
                    let g = std::mem::take(&mut grads[e]);
                    head.weights[e] = step(
                        &mut st.z[e],
                        &mut st.n[e],
                        g,
                        head.weights[e],
                        &hp,
                        factor_penalty,
                    );
                }
            }
            let g = std::mem::take(&mut self.bias_grads[h]);
            head.bias = step(&mut st.bias_z, &mut st.bias_n, g, head.bias, &hp, Penalty::NONE);
            if fits_beta {
                for f in 0..head.beta.len() {
                    let g = std::mem::take(&mut self.beta_grads[h][f]);
                    // beta is learned as an offset from one, so shrinkage pulls it toward an FM
                    let offset = step(
                        &mut st.beta_z[f],
                        &mut st.beta_n[f],
                        g,
                        head.beta[f] - 1.0,
                        &hp,
                        factor_penalty,
                    );
                    head.beta[f] = 1.0 + offset;
                }
            }
        }
        for &i in &self.touched {
            self.in_batch[i] = false;
        }
    }
}

/// Result of [`train_full`].
pub struct TrainOutcome {
    pub model: FactorizedModel,
    pub state: FtrlState,
    pub trace: Vec<TraceRow>,
}

/// Trains on `train`, evaluating on `test` at the configured cadence.
pub fn train(
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(FactorizedModel, Vec<TraceRow>)> {
    let out = train_full(train, test, config)?;
    Ok((out.model, out.trace))
}

/// Like [`train`], also returning the optimizer state.
pub fn train_full(train: &Dataset, test: Option<&Dataset>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(t) = test {
        if t.dim() != train.dim() || t.task() != train.task() || t.classes() != train.classes() {
            return Err(Error::Config(format!(
                "train/test mismatch: d {} vs {}, {} vs {}, classes {} vs {}",
                train.dim(),
                t.dim(),
                train.task(),
                t.task(),
                train.classes(),
                t.classes()
            )));
        }
    }
    let mut trainer = Trainer::for_dataset(config, train)?;
    let test = test.filter(|t| !t.is_empty());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.hp.seed ^ 0x5DEE_CE66_D1CE_4E5B);
    let mut trace = Vec::new();
    let mut step_count = 0usize;
    let mut loss_sum = 0.0;
    let mut loss_n = 0usize;
    let mut clock = Instant::now();

    let mut emit = |trainer: &Trainer,
                    epoch: usize,
                    step_count: usize,
                    loss_sum: &mut f64,
                    loss_n: &mut usize,
                    clock: &mut Instant|
     -> Result<()> {
        let report = test.map(|t| evaluate(trainer.model(), t)).transpose()?;
        trace.push(TraceRow {
            epoch,
            step: step_count,
            train_loss: if *loss_n == 0 {
                0.0
            } else {
                *loss_sum / *loss_n as f64
            },
            test: report,
            sparsity: sparsity(trainer.model()),
            seconds: clock.elapsed().as_secs_f64(),
        });
        *loss_sum = 0.0;
        *loss_n = 0;
        *clock = Instant::now();
        Ok(())
    };

    for epoch in 1..=config.epochs {
        let seed = config.shuffle.then(|| shuffle_rng.random::<u64>());
        let plan = batch_iter(train, config.batch_size, seed)?;
        let mut emitted = false;
        for batch in plan.iter() {
            let l = trainer.train_batch(train, batch).map_err(|e| match e {
                Error::Numeric(m) => Error::numeric(format!("batch {step_count}: {m}")),
                other => other,
            })?;
            step_count += 1;
            loss_sum += l;
            loss_n += batch.len();
            emitted = false;
            if let EvalCadence::Batches(n) = config.eval {
                if step_count.is_multiple_of(n) {
                    emit(&trainer, epoch, step_count, &mut loss_sum, &mut loss_n, &mut clock)?;
                    emitted = true;
                }
            }
        }
        let last = epoch == config.epochs;
        let due = match config.eval {
            EvalCadence::Epochs(n) => epoch % n == 0 || last,
            EvalCadence::Batches(_) => last && !emitted,
            EvalCadence::Final => last,
        };
        if due {
            emit(&trainer, epoch, step_count, &mut loss_sum, &mut loss_n, &mut clock)?;
        }
    }
    let (model, state) = trainer.into_parts();
    Ok(TrainOutcome {
        model,
        state,
        trace,
    })
}
