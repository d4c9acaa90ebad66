//! One-hot encoding of field-structured records into sparse samples.

use std::collections::HashMap;
use std::io::Read;

use crate::data::{Dataset, SparseVector, Task};
use crate::error::{Error, Result};

/// A raw record: a target plus `(field, value)` strings in column order.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldRecord {
    pub label: f64,
    pub values: Vec<(String, String)>,
}

impl FieldRecord {
    pub fn new<K: Into<String>, V: Into<String>>(
        label: f64,
        values: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        FieldRecord {
            label,
            values: values
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }
}

/// Declaration of one field when building a schema by hand.
#[derive(Clone, Debug)]
pub enum FieldSpec {
    Categorical { name: String, vocabulary: Vec<String> },
    Numeric { name: String },
}

#[derive(Clone, Debug)]
enum FieldKind {
    Categorical(HashMap<String, usize>),
    Numeric,
}

#[derive(Clone, Debug)]
struct Field {
    kind: FieldKind,
    // first feature id of this field's block (1-based)
    offset: usize,
    width: usize,
}

/// Field layout: each categorical field owns a contiguous block of one-hot
/// ids, each numeric field owns a single id. Blocks follow field order.
#[derive(Clone, Debug)]
pub struct FieldSchema {
    names: Vec<String>,
    fields: HashMap<String, Field>,
    dim: usize,
}

impl FieldSchema {
    pub fn new(specs: Vec<FieldSpec>) -> Result<Self> {
        let mut names = Vec::new();
        let mut fields = HashMap::new();
        let mut next = 1usize;
        for spec in specs {
            let (name, kind, width) = match spec {
                FieldSpec::Categorical { name, vocabulary } => {
                    let mut map = HashMap::new();
                    for v in vocabulary {
                        let id = map.len();
                        if map.insert(v.clone(), id).is_some() {
                            return Err(Error::Schema(format!(
                                "field '{name}' lists value '{v}' twice"
                            )));
                        }
                    }
                    let w = map.len();
                    (name, FieldKind::Categorical(map), w)
                }
                FieldSpec::Numeric { name } => (name, FieldKind::Numeric, 1),
            };
            if fields.contains_key(&name) {
                return Err(Error::Schema(format!("field '{name}' declared twice")));
            }
            fields.insert(
                name.clone(),
                Field {
                    kind,
                    offset: next,
                    width,
                },
            );
            names.push(name);
            next += width;
        }
        Ok(FieldSchema {
            names,
            fields,
            dim: next - 1,
        })
    }

    /// Learns a schema from training records. Fields and categorical values
    /// are ordered by first appearance; fields listed in `numeric` pass
    /// through as a single real-valued feature.
    pub fn fit(records: &[FieldRecord], numeric: &[&str]) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut vocab: HashMap<String, Vec<String>> = HashMap::new();
        for r in records {
            for (name, value) in &r.values {
                if !vocab.contains_key(name) {
                    order.push(name.clone());
                    vocab.insert(name.clone(), Vec::new());
                }
                if value.is_empty() || numeric.contains(&name.as_str()) {
                    continue;
                }
                let vs = vocab.get_mut(name).unwrap();
                if !vs.contains(value) {
                    vs.push(value.clone());
                }
            }
        }
        let specs = order
            .into_iter()
            .map(|name| {
                if numeric.contains(&name.as_str()) {
                    FieldSpec::Numeric { name }
                } else {
                    let vocabulary = vocab.remove(&name).unwrap_or_default();
                    FieldSpec::Categorical { name, vocabulary }
                }
            })
            .collect();
        Self::new(specs)
    }

    /// Total encoded dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn field_names(&self) -> &[String] {
        &self.names
    }

    /// Width of a field's block, if the field exists.
    pub fn field_width(&self, name: &str) -> Option<usize> {
        self.fields.get(name).map(|f| f.width)
    }

    /// Encodes one record. Unseen categorical values and empty cells encode to nothing.
    pub fn encode(&self, record: &FieldRecord) -> Result<SparseVector> {
        let mut pairs = Vec::with_capacity(record.values.len());
        for (name, value) in &record.values {
            let field = self
                .fields
                .get(name)
                .ok_or_else(|| Error::Schema(format!("field '{name}' is not in the schema")))?;
            if value.is_empty() {
                continue;
            }
            match &field.kind {
                FieldKind::Categorical(map) => {
                    if let Some(&id) = map.get(value) {
                        pairs.push((field.offset + id, 1.0));
                    }
                }
                FieldKind::Numeric => {
                    let v: f64 = value.trim().parse().map_err(|_| {
                        Error::Schema(format!("field '{name}': '{value}' is not numeric"))
                    })?;
                    pairs.push((field.offset, v));
                }
            }
        }
        SparseVector::from_pairs(self.dim, pairs)
            .map_err(|e| Error::Schema(format!("record encodes badly: {e}")))
    }
}

/// Encodes records into a dataset with the schema's dimension.
pub fn encode_fields(records: &[FieldRecord], schema: &FieldSchema, task: Task) -> Result<Dataset> {
    let samples = records
        .iter()
        .map(|r| schema.encode(r))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<f64> = records.iter().map(|r| r.label).collect();
    let classes = match task {
        Task::Regression => 1,
        Task::Classification => labels
            .iter()
            .fold(0usize, |m, &y| m.max(if y >= 0.0 { y as usize + 1 } else { 0 })),
    };
    Dataset::new(samples, labels, schema.dim(), classes, task)
}

/// Reads header-bearing CSV; `label_column` supplies the target.
pub fn read_field_csv<R: Read>(reader: R, label_column: &str) -> Result<Vec<FieldRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_pos = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema(format!("label column '{label_column}' not in header")))?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(label_pos).unwrap_or("");
        let label: f64 = raw.trim().parse().map_err(|_| Error::Label {
            line: row + 2,
            msg: format!("bad label '{raw}'"),
        })?;
        let values = headers
            .iter()
            .zip(rec.iter())
            .enumerate()
            .filter(|(p, _)| *p != label_pos)
            .map(|(_, (h, v))| (h.to_string(), v.to_string()))
            .collect();
        out.push(FieldRecord { label, values });
    }
    Ok(out)
}
