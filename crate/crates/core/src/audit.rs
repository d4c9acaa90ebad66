//! Strong-hierarchy audit for models with a context row.
//!
//! With the context factor `v_0` nonzero and no nonzero row orthogonal to it,
//! every nonzero interaction `<v_i * beta, v_j>` implies nonzero main effects
//! `<v_i * beta, v_0>` and `<v_j * beta, v_0>`. The audit counts how often those
//! two assumptions fail on a concrete model, and can scan all pairs to count
//! literal hierarchy violations.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::FactorizedModel;

/// Default relative tolerance for treating an inner product as zero.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Default cap on `d` for the exhaustive pair scan.
pub const DEFAULT_MAX_EXHAUSTIVE_DIM: usize = 5_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditOptions {
    /// Cosine threshold below which two rows count as orthogonal.
    pub tol: f64,
    pub exhaustive: bool,
    pub max_exhaustive_dim: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            tol: DEFAULT_TOL,
            exhaustive: false,
            max_exhaustive_dim: DEFAULT_MAX_EXHAUSTIVE_DIM,
        }
    }
}

/// Counts summed over heads. Rows are the feature rows `1..=d`.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyReport {
    pub rows: usize,
    pub zero_rows: usize,
    /// Nonzero rows orthogonal to the context factor.
    pub orthogonal_nonzero_rows: usize,
    /// Some head has an all-zero context factor.
    pub context_is_zero: bool,
    /// Feature pairs with a nonzero interaction (exhaustive scan only).
    pub interaction_pairs: Option<u64>,
    /// Nonzero interactions lacking a nonzero main effect on either side (exhaustive scan only).
    pub violating_pairs: Option<u64>,
}

impl HierarchyReport {
    /// True when both assumptions of the hierarchy guarantee hold.
    pub fn assumptions_hold(&self) -> bool {
        !self.context_is_zero && self.orthogonal_nonzero_rows == 0
    }

    /// Violating pairs over nonzero-interaction pairs, when scanned.
    pub fn violation_fraction(&self) -> Option<f64> {
        match (self.violating_pairs, self.interaction_pairs) {
            (Some(_), Some(0)) => Some(0.0),
            (Some(v), Some(t)) => Some(v as f64 / t as f64),
            _ => None,
        }
    }
}

impl fmt::Display for HierarchyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rows={} zero_rows={} orthogonal_nonzero_rows={} context_is_zero={}",
            self.rows, self.zero_rows, self.orthogonal_nonzero_rows, self.context_is_zero
        )?;
        if let (Some(p), Some(v)) = (self.interaction_pairs, self.violating_pairs) {
            write!(f, " interaction_pairs={p} violating_pairs={v}")?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn near_zero(inner: f64, na: f64, nb: f64, tol: f64) -> bool {
    inner.abs() <= tol * na * nb
}

/// Audits the hierarchy assumptions of a model with a context row.
pub fn hierarchy_audit(model: &FactorizedModel, opts: &AuditOptions) -> Result<HierarchyReport> {
    if !model.kind().is_hierarchical() {
        return Err(Error::argument("hierarchical model required"));
    }
    if opts.exhaustive && model.dim() > opts.max_exhaustive_dim {
        return Err(Error::argument(format!(
            "exhaustive audit limited to d <= {}, model has d = {}",
            opts.max_exhaustive_dim,
            model.dim()
        )));
    }
    let d = model.dim();
    let mut report = HierarchyReport {
        rows: d * model.classes(),
        zero_rows: 0,
        orthogonal_nonzero_rows: 0,
        context_is_zero: false,
        interaction_pairs: opts.exhaustive.then_some(0),
        violating_pairs: opts.exhaustive.then_some(0),
    };
    for h in 0..model.classes() {
        let beta = model.beta(h);
        let v0 = model.row(h, 0);
        let n0 = norm(v0);
        if n0 == 0.0 {
            report.context_is_zero = true;
        }
        // (row id, beta-weighted row, its norm, main effect present)
        let mut live: Vec<(usize, Vec<f64>, f64, bool)> = Vec::new();
        for i in 1..=d {
            let v = model.row(h, i);
            let nv = norm(v);
            if nv == 0.0 {
                report.zero_rows += 1;
                continue;
            }
            if near_zero(dot(v, v0), nv, n0, opts.tol) {
                report.orthogonal_nonzero_rows += 1;
            }
            if opts.exhaustive {
                let weighted: Vec<f64> = v.iter().zip(beta).map(|(a, b)| a * b).collect();
                let nw = norm(&weighted);
                let main = nw > 0.0 && !near_zero(dot(&weighted, v0), nw, n0, opts.tol);
                live.push((i, weighted, nw, main));
            }
        }
        if opts.exhaustive {
            let (pairs, bad) = (0..live.len())
                .into_par_iter()
                .map(|a| {
                    let (_, ref wi, nwi, main_i) = live[a];
                    let mut pairs = 0u64;
                    let mut bad = 0u64;
                    for (j, _, _, main_j) in &live[a + 1..] {
                        let vj = model.row(h, *j);
                        if nwi == 0.0 || near_zero(dot(wi, vj), nwi, norm(vj), opts.tol) {
                            continue;
                        }
                        pairs += 1;
                        if !(main_i && *main_j) {
                            bad += 1;
                        }
                    }
                    (pairs, bad)
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            *report.interaction_pairs.as_mut().unwrap() += pairs;
            *report.violating_pairs.as_mut().unwrap() += bad;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::model::ModelKind;

    fn model_with_rows(kind: ModelKind, rows: &[&[f64]]) -> FactorizedModel {
        let k = rows[0].len();
        let mut m = FactorizedModel::new(kind, Task::Regression, 1, rows.len() - 1, k).unwrap();
        for (i, r) in rows.iter().enumerate() {
            m.set_row(0, i, r).unwrap();
        }
        m
    }

    fn exhaustive() -> AuditOptions {
        AuditOptions {
            exhaustive: true,
            ..AuditOptions::default()
        }
    }

    #[test]
    fn zero_row_interacts_with_nothing() {
        let m = model_with_rows(ModelKind::Shfm, &[&[1.0], &[1.0], &[0.0]]);
        let r = hierarchy_audit(&m, &exhaustive()).unwrap();
        assert_eq!(r.zero_rows, 1);
        assert_eq!(r.violating_pairs, Some(0));
        assert!(r.assumptions_hold());
    }

    #[test]
    fn orthogonal_pair_violates() {
        let m = model_with_rows(ModelKind::Shfm, &[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]]);
        let r = hierarchy_audit(&m, &exhaustive()).unwrap();
        assert_eq!(r.orthogonal_nonzero_rows, 2);
        assert_eq!(r.interaction_pairs, Some(1));
        assert_eq!(r.violating_pairs, Some(1));
        assert!(!r.assumptions_hold());
    }

    #[test]
    fn zero_context_flagged() {
        let m = model_with_rows(ModelKind::Sha2, &[&[0.0, 0.0], &[1.0, 2.0], &[3.0, 1.0]]);
        let r = hierarchy_audit(&m, &exhaustive()).unwrap();
        assert!(r.context_is_zero);
        assert_eq!(r.violating_pairs, Some(1));
    }

    #[test]
    fn non_exhaustive_skips_pairs() {
        let m = model_with_rows(ModelKind::Shfm, &[&[1.0], &[1.0], &[2.0]]);
        let r = hierarchy_audit(&m, &AuditOptions::default()).unwrap();
        assert_eq!(r.violating_pairs, None);
        assert_eq!(r.violation_fraction(), None);
    }

    #[test]
    fn flat_kinds_rejected() {
        let m = FactorizedModel::new(ModelKind::Fm, Task::Regression, 1, 3, 2).unwrap();
        let err = hierarchy_audit(&m, &AuditOptions::default()).unwrap_err();
        assert!(err.to_string().contains("hierarchical model required"));
    }

    #[test]
    fn exhaustive_cap() {
        let m = FactorizedModel::new(ModelKind::Shfm, Task::Regression, 1, 20, 2).unwrap();
        let opts = AuditOptions {
            exhaustive: true,
            max_exhaustive_dim: 10,
            ..AuditOptions::default()
        };
        assert!(matches!(hierarchy_audit(&m, &opts), Err(Error::Argument(_))));
    }
}
