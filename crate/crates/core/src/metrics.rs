//! Evaluation metrics, parameter sparsity, and the combined evaluation report.

use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::audit::{hierarchy_audit, AuditOptions, HierarchyReport};
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::model::FactorizedModel;

/// Micro- and macro-averaged F1.
///
/// Micro F1 is the harmonic mean of precision and recall over pooled
/// TP/FP/FN counts. Macro F1 is the harmonic mean of the unweighted class
/// means of per-class precision and recall; a class whose precision (or
/// recall) denominator is zero contributes 0 to that mean.
pub fn f1_scores(predictions: &[usize], labels: &[usize], classes: usize) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(Error::argument("F1 of an empty prediction set"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut tp = vec![0u64; classes];
    let mut fp = vec![0u64; classes];
    let mut fn_ = vec![0u64; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= classes || y >= classes {
            return Err(Error::argument(format!("class id outside [0, {classes})")));
        }
        if p == y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let harmonic = |p: f64, r: f64| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };

    let (stp, sfp, sfn) = (
        tp.iter().sum::<u64>(),
        fp.iter().sum::<u64>(),
        fn_.iter().sum::<u64>(),
    );
    let micro = harmonic(ratio(stp, stp + sfp), ratio(stp, stp + sfn));

    let c = classes as f64;
    let p_macro = (0..classes).map(|i| ratio(tp[i], tp[i] + fp[i])).sum::<f64>() / c;
    let r_macro = (0..classes).map(|i| ratio(tp[i], tp[i] + fn_[i])).sum::<f64>() / c;
    Ok((micro, harmonic(p_macro, r_macro)))
}

/// Root mean squared error and mean absolute error.
pub fn regression_errors(predictions: &[f64], labels: &[f64]) -> Result<(f64, f64)> {
    if predictions.is_empty() {
        return Err(Error::argument("errors of an empty prediction set"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let n = predictions.len() as f64;
    let (sq, abs) = predictions
        .iter()
        .zip(labels)
        .fold((0.0, 0.0), |(sq, abs), (p, y)| {
            let r = p - y;
            (sq + r * r, abs + r.abs())
        });
    Ok(((sq / n).sqrt(), abs / n))
}

/// Exact-zero fractions over the model's live parameter rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sparsity {
    /// Zero entries over all entries.
    pub element: f64,
    /// All-zero rows over all rows.
    pub row: f64,
}

/// Sparsity of the factor matrices (rows `0..=d` for hierarchical kinds,
/// `1..=d` otherwise) across all heads. The linear kind reports its weights.
pub fn sparsity(model: &FactorizedModel) -> Sparsity {
    let first = model.kind().first_row();
    let (mut zero, mut total, mut zero_rows, mut rows) = (0usize, 0usize, 0usize, 0usize);
    for h in 0..model.classes() {
        for i in first..=model.dim() {
            let row = model.row(h, i);
            let z = row.iter().filter(|&&v| v == 0.0).count();
            zero += z;
            total += row.len();
            rows += 1;
            if z == row.len() {
                zero_rows += 1;
            }
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Sparsity {
        element: frac(zero, total),
        row: frac(zero_rows, rows),
    }
}

/// Task-specific quality figures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TaskMetrics {
    Classification { micro_f1: f64, macro_f1: f64 },
    Regression { rmse: f64, mae: f64 },
}

impl TaskMetrics {
    /// Metric used for model selection, oriented so larger is better.
    pub fn selection_score(&self) -> f64 {
        match *self {
            TaskMetrics::Classification { macro_f1, .. } => macro_f1,
            TaskMetrics::Regression { rmse, .. } => -rmse,
        }
    }

    pub fn names(task: Task) -> [&'static str; 2] {
        match task {
            Task::Classification => ["micro_f1", "macro_f1"],
            Task::Regression => ["rmse", "mae"],
        }
    }

    pub fn values(&self) -> [f64; 2] {
        match *self {
            TaskMetrics::Classification { micro_f1, macro_f1 } => [micro_f1, macro_f1],
            TaskMetrics::Regression { rmse, mae } => [rmse, mae],
        }
    }
}

/// Everything [`evaluate`] measures on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    /// Mean per-sample loss.
    pub loss: f64,
    pub metrics: TaskMetrics,
    pub sparsity: Sparsity,
    pub hierarchy: Option<HierarchyReport>,
}

impl EvalReport {
    /// Single-line `key=value` record.
    pub fn to_kv_line(&self) -> String {
        let mut s = format!("samples={} loss={}", self.samples, self.loss);
        let task = match self.metrics {
            TaskMetrics::Classification { .. } => Task::Classification,
            TaskMetrics::Regression { .. } => Task::Regression,
        };
        for (n, v) in TaskMetrics::names(task).iter().zip(self.metrics.values()) {
            write!(s, " {n}={v}").unwrap();
        }
        write!(
            s,
            " sparsity={} row_sparsity={}",
            self.sparsity.element, self.sparsity.row
        )
        .unwrap();
        if let Some(h) = &self.hierarchy {
            write!(s, " {h}").unwrap();
        }
        s
    }
}

impl fmt::Display for EvalReport {
    /// Two-column table.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut rows: Vec<(String, String)> = vec![
            ("samples".into(), self.samples.to_string()),
            ("loss".into(), format!("{:.6}", self.loss)),
        ];
        let names = match self.metrics {
            TaskMetrics::Classification { .. } => TaskMetrics::names(Task::Classification),
            TaskMetrics::Regression { .. } => TaskMetrics::names(Task::Regression),
        };
        for (n, v) in names.iter().zip(self.metrics.values()) {
            rows.push((n.to_string(), format!("{v:.6}")));
        }
        rows.push(("sparsity".into(), format!("{:.6}", self.sparsity.element)));
        rows.push(("row_sparsity".into(), format!("{:.6}", self.sparsity.row)));
        if let Some(h) = &self.hierarchy {
            rows.push(("zero_rows".into(), h.zero_rows.to_string()));
            rows.push((
                "orthogonal_nonzero_rows".into(),
                h.orthogonal_nonzero_rows.to_string(),
            ));
            rows.push(("context_is_zero".into(), h.context_is_zero.to_string()));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        for (k, v) in rows {
            writeln!(f, "{k:<width$}  {v}")?;
        }
        Ok(())
    }
}

/// Per-sample predictions for a whole dataset, computed in parallel.
pub fn predict_all(model: &FactorizedModel, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    if data.dim() != model.dim() {
        return Err(Error::Shape(format!(
            "data dimension {} but model dimension {}",
            data.dim(),
            model.dim()
        )));
    }
    data.samples()
        .par_iter()
        .enumerate()
        .map(|(s, x)| {
            model.predict(x).map_err(|e| match e {
                Error::Numeric(m) => Error::numeric(format!("sample {s}: {m}")),
                other => other,
            })
        })
        .collect()
}

/// Index of the largest score; ties go to the lowest class.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (c, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = c;
        }
    }
    best
}

/// Loss, task metrics, sparsity and (for hierarchical kinds) the cheap audit.
pub fn evaluate(model: &FactorizedModel, data: &Dataset) -> Result<EvalReport> {
    if data.task() != model.task() {
        return Err(Error::Shape(format!(
            "{} data for a {} model",
            data.task(),
            model.task()
        )));
    }
    if data.task() == Task::Classification && data.classes() > model.classes() {
        return Err(Error::Shape(format!(
            "data has {} classes but model has {}",
            data.classes(),
            model.classes()
        )));
    }
    let outputs = predict_all(model, data)?;
    let loss_kind = LossKind::for_task(model.task(), model.classes());
    let mut grad = vec![0.0; model.classes()];
    let mut total = 0.0;
    for (y, &label) in outputs.iter().zip(data.labels()) {
        total += loss_kind.eval_into(label, y, &mut grad)?;
    }
    let loss = if data.is_empty() {
        0.0
    } else {
        total / data.len() as f64
    };
    let metrics = match model.task() {
        Task::Classification => {
            let pred: Vec<usize> = outputs.iter().map(|y| argmax(y)).collect();
            let labels: Vec<usize> = (0..data.len()).map(|i| data.class_of(i)).collect();
            let (micro_f1, macro_f1) = f1_scores(&pred, &labels, model.classes())?;
            TaskMetrics::Classification { micro_f1, macro_f1 }
        }
        Task::Regression => {
            let pred: Vec<f64> = outputs.iter().map(|y| y[0]).collect();
            let (rmse, mae) = regression_errors(&pred, data.labels())?;
            TaskMetrics::Regression { rmse, mae }
        }
    };
    let hierarchy = if model.kind().is_hierarchical() {
        Some(hierarchy_audit(model, &AuditOptions::default())?)
    } else {
        None
    };
    Ok(EvalReport {
        samples: data.len(),
        loss,
        metrics,
        sparsity: sparsity(model),
        hierarchy,
    })
}
