//! Hyperparameter grids: a flat `key=v1,v2,...` file format, Cartesian
//! enumeration and ranked search.

use std::cmp::Ordering;
use std::fmt;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::{FactorizedModel, ModelKind};
use crate::trainer::{train, TraceRow, TrainConfig};

/// Keys a grid may vary, in canonical order.
pub const KEYS: [&str; 11] = [
    "model",
    "k",
    "epochs",
    "batch_size",
    "alpha",
    "mu",
    "gamma",
    "l1",
    "l2",
    "init_sigma",
    "seed",
];

/// One hyperparameter value, kept in its source spelling for reporting.
#[derive(Clone, Debug, PartialEq)]
pub enum GridValue {
    Num(f64, String),
    Kind(ModelKind),
}

impl GridValue {
    fn cmp_lex(&self, other: &GridValue) -> Ordering {
        match (self, other) {
            (GridValue::Num(a, _), GridValue::Num(b, _)) => a.total_cmp(b),
            (GridValue::Kind(a), GridValue::Kind(b)) => a.as_str().cmp(b.as_str()),
            _ => Ordering::Equal,
        }
    }
}

impl fmt::Display for GridValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridValue::Num(_, s) => f.write_str(s),
            GridValue::Kind(k) => write!(f, "{k}"),
        }
    }
}

/// Ordered map from key to candidate values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grid {
    entries: Vec<(&'static str, Vec<GridValue>)>,
}

fn canonical(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|k| *k == key)
}

fn parse_value(key: &str, raw: &str) -> Result<GridValue> {
    if key == "model" {
        return raw
            .parse::<ModelKind>()
            .map(GridValue::Kind)
            .map_err(|_| Error::Config(format!("unknown model kind '{raw}'")));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::Config(format!("{key}: '{raw}' is not a number")))?;
    let integral = matches!(key, "k" | "epochs" | "batch_size" | "seed");
    if !v.is_finite() || (integral && (v < 0.0 || v.fract() != 0.0)) {
        return Err(Error::Config(format!("{key}: invalid value '{raw}'")));
    }
    Ok(GridValue::Num(v, raw.to_string()))
}

impl Grid {
    /// `l1` over `{1e-5, 1e-4, 1e-3, 1e-2}` crossed with `k` over `{5, 10, 20, 50}`.
    pub fn default_grid() -> Self {
        Grid::parse("k=5,10,20,50\nl1=1e-5,1e-4,1e-3,1e-2\n").expect("default grid parses")
    }

    /// Parses `key=v1,v2` lines. `#` starts a comment. Keys are kept in canonical order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut grid = Grid::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, list) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=values", n + 1)))?;
            let key = key.trim();
            let key = canonical(key)
                .ok_or_else(|| Error::Config(format!("line {}: unknown key '{key}'", n + 1)))?;
            let values = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_value(key, s))
                .collect::<Result<Vec<_>>>()?;
            grid.set(key, values)?;
        }
        Ok(grid)
    }

    /// Sets the candidate list of `key`, replacing any earlier one.
    pub fn set(&mut self, key: &str, values: Vec<GridValue>) -> Result<()> {
        let key = canonical(key).ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
        self.entries.retain(|(k, _)| *k != key);
        self.entries.push((key, values));
        self.entries
            .sort_by_key(|(k, _)| KEYS.iter().position(|c| c == k).unwrap());
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|(k, _)| *k)
    }

    /// Number of points in the product. Zero when there are no keys or some list is empty.
    pub fn len(&self) -> usize {
        if self.entries.is_empty() {
            return 0;
        }
        self.entries.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every point of the product, the last key varying fastest.
    pub fn points(&self) -> Vec<GridPoint> {
        let total = self.len();
        (0..total)
            .map(|mut idx| {
                let mut values = vec![None; self.entries.len()];
                for (slot, (key, list)) in self.entries.iter().enumerate().rev() {
                    values[slot] = Some((*key, list[idx % list.len()].clone()));
                    idx /= list.len();
                }
                GridPoint {
                    values: values.into_iter().map(Option::unwrap).collect(),
                }
            })
            .collect()
    }
}

/// One assignment of grid keys.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub values: Vec<(&'static str, GridValue)>,
}

impl GridPoint {
    /// `base` with this point's values applied.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        for (key, value) in &self.values {
            match value {
                GridValue::Kind(kind) => c.kind = *kind,
                GridValue::Num(v, _) => {
                    let v = *v;
                    match *key {
                        "k" => c.rank = v as usize,
                        "epochs" => c.epochs = v as usize,
                        "batch_size" => c.batch_size = v as usize,
                        "alpha" => c.hp.alpha = v,
                        "mu" => c.hp.mu = v,
                        "gamma" => c.hp.gamma = v,
                        "l1" => c.hp.lambda1 = v,
                        "l2" => c.hp.lambda2 = v,
                        "init_sigma" => c.hp.init_sigma = v,
                        "seed" => c.hp.seed = v as u64,
                        _ => unreachable!("grid keys are canonical"),
                    }
                }
            }
        }
        c
    }

    fn cmp_lex(&self, other: &GridPoint) -> Ordering {
        self.values
            .iter()
            .zip(&other.values)
            .map(|((_, a), (_, b))| a.cmp_lex(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }

    /// Short label such as `k=10_l1=1e-4`, usable in file names.
    pub fn label(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("_")
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

pub struct GridResult {
    pub point: GridPoint,
    pub config: TrainConfig,
    pub model: FactorizedModel,
    pub trace: Vec<TraceRow>,
    pub report: EvalReport,
}

/// Trains every grid point and ranks by validation score: macro-F1 for
/// classification, RMSE for regression. Ties prefer the sparser model, then
/// the lexicographically smaller point.
pub fn grid_search(
    train_set: &Dataset,
    validation: &Dataset,
    grid: &Grid,
    base: &TrainConfig,
) -> Result<Vec<GridResult>> {
    if grid.is_empty() {
        return Err(Error::argument("grid is empty"));
    }
    if validation.is_empty() {
        return Err(Error::argument("validation set is empty"));
    }
    let mut results = Vec::with_capacity(grid.len());
    for point in grid.points() {
        let config = point.apply(base);
        let (model, trace) = train(train_set, Some(validation), &config)?;
        let report = trace
            .last()
            .and_then(|r| r.test.clone())
            .expect("final trace row carries a validation report");
        results.push(GridResult {
            point,
            config,
            model,
            trace,
            report,
        });
    }
    results.sort_by(|a, b| {
        let sa = a.report.metrics.selection_score();
        let sb = b.report.metrics.selection_score();
        sb.total_cmp(&sa)
            .then(b.report.sparsity.element.total_cmp(&a.report.sparsity.element))
            .then(a.point.cmp_lex(&b.point))
    });
    Ok(results)
}
