//! Sparse samples, labeled datasets and the libsvm/svmlight text format.
//!
//! Feature ids are 1-based on disk and in memory. Id 0 is reserved for the
//! constant context feature of the hierarchical models and never appears in
//! a [`SparseVector`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Kind of supervised problem a dataset or model addresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "classification" => Ok(Task::Classification),
            other => Err(Error::argument(format!("unknown task '{other}'"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sample: ascending feature ids in `[1, dim]` with their nonzero values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from parallel index/value lists.
    ///
    /// Indices must be strictly ascending and inside `[1, dim]`. Entries whose
    /// value is exactly zero are dropped.
    pub fn new(dim: usize, indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        let mut prev = 0usize;
        for (&i, &v) in indices.iter().zip(&values) {
            if i == 0 || i > dim {
                return Err(Error::Shape(format!("feature id {i} outside [1, {dim}]")));
            }
            if i <= prev {
                return Err(Error::Shape(format!(
                    "feature ids not strictly ascending ({prev} then {i})"
                )));
            }
            if !v.is_finite() {
                return Err(Error::numeric(format!("feature {i} has non-finite value {v}")));
            }
            prev = i;
        }
        let mut out = SparseVector {
            dim,
            indices,
            values,
        };
        out.drop_zeros();
        Ok(out)
    }

    /// Builds a vector from unordered `(id, value)` pairs. Duplicate ids are rejected.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut pairs: Vec<(usize, f64)> = pairs.into_iter().collect();
        pairs.sort_by_key(|p| p.0);
        let (indices, values) = pairs.into_iter().unzip();
        Self::new(dim, indices, values)
    }

    pub fn empty(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let (indices, values) = self
            .indices
            .iter()
            .zip(&self.values)
            .filter(|(_, &v)| v != 0.0)
            .map(|(&i, &v)| (i, v))
            .unzip();
        self.indices = indices;
        self.values = values;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at feature `i`, zero when absent.
    pub fn get(&self, i: usize) -> f64 {
        self.indices
            .binary_search(&i)
            .map(|p| self.values[p])
            .unwrap_or(0.0)
    }

    /// Widens the declared dimension. Shrinking below the largest id is an error.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if let Some(&last) = self.indices.last() {
            if last > dim {
                return Err(Error::Shape(format!(
                    "cannot set dimension {dim}: feature id {last} present"
                )));
            }
        }
        self.dim = dim;
        Ok(self)
    }
}

/// A labeled collection of sparse samples sharing one dimension.
///
/// Labels are stored as reals; for classification they are integer class ids
/// in `[0, classes)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<SparseVector>,
    labels: Vec<f64>,
    dim: usize,
    classes: usize,
    task: Task,
}

impl Dataset {
    pub fn new(
        samples: Vec<SparseVector>,
        labels: Vec<f64>,
        dim: usize,
        classes: usize,
        task: Task,
    ) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if let Some(s) = samples.iter().position(|s| s.dim() != dim) {
            return Err(Error::Shape(format!(
                "sample {s} has dimension {} but dataset has {dim}",
                samples[s].dim()
            )));
        }
        match task {
            Task::Regression => {
                if classes != 1 {
                    return Err(Error::Shape(format!(
                        "regression datasets have one output, got {classes}"
                    )));
                }
                if let Some(p) = labels.iter().position(|y| !y.is_finite()) {
                    return Err(Error::Label {
                        line: p + 1,
                        msg: "non-finite regression target".into(),
                    });
                }
            }
            Task::Classification => {
                for (p, &y) in labels.iter().enumerate() {
                    if !(y >= 0.0 && y.fract() == 0.0 && (y as usize) < classes) {
                        return Err(Error::Label {
                            line: p + 1,
                            msg: format!("class label {y} not in [0, {classes})"),
                        });
                    }
                }
            }
        }
        Ok(Dataset {
            samples,
            labels,
            dim,
            classes,
            task,
        })
    }

    pub fn empty(dim: usize, classes: usize, task: Task) -> Self {
        Dataset {
            samples: Vec::new(),
            labels: Vec::new(),
            dim,
            classes,
            task,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Output count: 1 for regression, class count otherwise.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn samples(&self) -> &[SparseVector] {
        &self.samples
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &SparseVector {
        &self.samples[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn class_of(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Mean number of stored features per sample.
    pub fn mean_nnz(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(SparseVector::nnz).sum::<usize>() as f64 / self.len() as f64
    }

    /// Widens every sample to dimension `dim`.
    pub fn with_dim(self, dim: usize) -> Result<Self> {
        if dim == self.dim {
            return Ok(self);
        }
        let samples = self
            .samples
            .into_iter()
            .map(|s| s.with_dim(dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            samples,
            dim,
            ..self
        })
    }

    /// Raises the class count (classification only).
    pub fn with_classes(self, classes: usize) -> Result<Self> {
        if self.task == Task::Regression || classes == self.classes {
            return Ok(self);
        }
        Dataset::new(self.samples, self.labels, self.dim, classes, self.task)
    }

    /// Subset in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            samples: rows.iter().map(|&r| self.samples[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            dim: self.dim,
            classes: self.classes,
            task: self.task,
        }
    }
}

/// Options controlling [`parse_libsvm_with`].
#[derive(Clone, Copy, Debug)]
pub struct ParseOptions {
    pub task: Task,
    /// Explicit dimension; must be at least the largest feature id seen.
    pub dim: Option<usize>,
    /// Explicit class count for classification.
    pub classes: Option<usize>,
}

impl ParseOptions {
    pub fn new(task: Task) -> Self {
        ParseOptions {
            task,
            dim: None,
            classes: None,
        }
    }
}

/// Parses libsvm/svmlight text, inferring the dimension and class count.
pub fn parse_libsvm(text: &str, task: Task) -> Result<Dataset> {
    parse_libsvm_with(text, &ParseOptions::new(task))
}

pub fn parse_libsvm_with(text: &str, opts: &ParseOptions) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    let mut max_class = None::<usize>;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a token");
        let label = parse_label(label_tok, opts.task, line_no)?;
        if opts.task == Task::Classification {
            let c = label as usize;
            max_class = Some(max_class.map_or(c, |m| m.max(c)));
        }

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected <index>:<value>, got '{tok}'"),
            })?;
            if idx == "qid" {
                continue;
            }
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature index '{idx}'"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature value '{val}'"),
            })?;
            if idx == 0 {
                return Err(Error::Format {
                    line: line_no,
                    msg: "feature index 0 is reserved".into(),
                });
            }
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite feature value '{val}'"),
                });
            }
            if let Some(&prev) = indices.last() {
                if idx <= prev {
                    return Err(Error::Format {
                        line: line_no,
                        msg: format!("feature indices not ascending ({prev} then {idx})"),
                    });
                }
            }
            indices.push(idx);
            values.push(val);
        }
        if let Some(&last) = indices.last() {
            max_index = max_index.max(last);
        }
        // dimension is patched below once the maximum index is known
        samples.push((indices, values));
        labels.push(label);
    }

    let dim = match opts.dim {
        Some(d) if d < max_index => {
            return Err(Error::Shape(format!(
                "dimension override {d} is below the largest feature id {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    let classes = match opts.task {
        Task::Regression => 1,
        Task::Classification => {
            let seen = max_class.map_or(0, |m| m + 1);
            match opts.classes {
                Some(c) if c < seen => {
                    return Err(Error::Label {
                        line: 0,
                        msg: format!("class count {c} but label {} present", seen - 1),
                    })
                }
                Some(c) => c,
                None => seen,
            }
        }
    };
    let samples = samples
        .into_iter()
        .map(|(i, v)| SparseVector::new(dim, i, v))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, labels, dim, classes, opts.task)
}

fn parse_label(tok: &str, task: Task, line: usize) -> Result<f64> {
    match task {
        Task::Regression => {
            let y: f64 = tok.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad label '{tok}'"),
            })?;
            if !y.is_finite() {
                return Err(Error::Label {
                    line,
                    msg: format!("non-finite label '{tok}'"),
                });
            }
            Ok(y)
        }
        Task::Classification => {
            if let Ok(c) = tok.parse::<usize>() {
                return Ok(c as f64);
            }
            match tok.parse::<f64>() {
                Ok(y) if y >= 0.0 && y.fract() == 0.0 && y < 1e15 => Ok(y),
                _ => Err(Error::Label {
                    line,
                    msg: format!("class label '{tok}' is not a nonnegative integer"),
                }),
            }
        }
    }
}

/// Reads a libsvm file from disk.
pub fn read_libsvm(path: impl AsRef<Path>, opts: &ParseOptions) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_libsvm_with(&text, opts)
}

/// Loads a train/test pair so both share the larger of their dimensions and class counts.
pub fn read_libsvm_pair(
    train: impl AsRef<Path>,
    test: impl AsRef<Path>,
    opts: &ParseOptions,
) -> Result<(Dataset, Dataset)> {
    let a = read_libsvm(train, opts)?;
    let b = read_libsvm(test, opts)?;
    let dim = a.dim().max(b.dim());
    let classes = a.classes().max(b.classes());
    Ok((
        a.with_dim(dim)?.with_classes(classes)?,
        b.with_dim(dim)?.with_classes(classes)?,
    ))
}

/// Serializes a dataset back to libsvm text.
pub fn to_libsvm(data: &Dataset) -> String {
    let mut out = String::new();
    for (x, &y) in data.samples.iter().zip(&data.labels) {
        match data.task {
            Task::Regression => write!(out, "{y}").unwrap(),
            Task::Classification => write!(out, "{}", y as usize).unwrap(),
        }
        for (i, v) in x.iter() {
            write!(out, " {i}:{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Sample order for one epoch, split into consecutive batches.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    order: Vec<usize>,
    batch_size: usize,
}

impl BatchPlan {
    pub fn iter(&self) -> std::slice::Chunks<'_, usize> {
        self.order.chunks(self.batch_size)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Number of batches.
    pub fn len(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Splits the dataset into batches, optionally after a seeded shuffle.
pub fn batch_iter(data: &Dataset, batch_size: usize, shuffle_seed: Option<u64>) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::argument("batch size must be positive"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    Ok(BatchPlan { order, batch_size })
}
