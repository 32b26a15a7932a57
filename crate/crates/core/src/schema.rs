//! Categorical datasets: schema declaration, CSV ingestion and splitting.
//!
//! A schema is declared in TOML:
//!
//! ```toml
//! protected = "gender"
//! target = "income"
//! privileged_value = "Male"
//! positive_label = ">26k"
//!
//! [[attributes]]
//! name = "gender"
//! values = ["Female", "Male"]
//! sensitive = true
//!
//! [[attributes]]
//! name = "income"
//! values = ["<=26k", ">26k"]
//! ```
//!
//! Category indices follow the declared `values` order. When `values` is
//! omitted the domain is inferred from the file and sorted lexicographically,
//! so the mapping never depends on row order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("invalid schema config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("attribute `{name}` has {k} value(s); at least 2 are required")]
    TooFewValues { name: String, k: usize },
    #[error("target attribute `{name}` must have exactly 2 values, found {k}")]
    TargetNotBinary { name: String, k: usize },
    #[error("invalid schema: {0}")]
    Invalid(String),
    #[error("dataset has no rows")]
    Empty,
    #[error("row {row}: index {index} out of range for attribute `{name}` (k={k})")]
    IndexOutOfRange {
        row: usize,
        name: String,
        index: u32,
        k: usize,
    },
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("dataset of {n} rows is too small for train fraction {fraction}")]
    TooSmall { n: usize, fraction: f64 },
}

/// A named categorical attribute and its ordered value set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalDomain {
    pub name: String,
    pub values: Vec<String>,
}

impl CategoricalDomain {
    pub fn new(
        name: impl Into<String>,
        values: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, SchemaError> {
        let domain = CategoricalDomain {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        };
        domain.validate()?;
        Ok(domain)
    }

    /// Domain size.
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if self.k() < 2 {
            return Err(SchemaError::TooFewValues {
                name: self.name.clone(),
                k: self.k(),
            });
        }
        let mut seen = HashSet::new();
        for v in &self.values {
            if !seen.insert(v.as_str()) {
                return Err(SchemaError::Invalid(format!(
                    "attribute `{}` lists value `{v}` more than once",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Role of an attribute in the privacy/fairness setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Sanitized under LDP before training.
    Sensitive,
    /// Released as-is.
    NonSensitive,
    /// The binary label.
    Target,
}

/// Validated schema. The protected attribute is always sensitive and the
/// target is never sensitive.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSchema {
    attributes: Vec<CategoricalDomain>,
    roles: Vec<Role>,
    protected: usize,
    target: usize,
    privileged_value: usize,
    positive_label: usize,
}

impl DatasetSchema {
    pub fn new(
        attributes: Vec<CategoricalDomain>,
        sensitive: &[&str],
        protected: &str,
        target: &str,
        privileged_value: &str,
        positive_label: &str,
    ) -> Result<Self, SchemaError> {
        let mut names = HashSet::new();
        for a in &attributes {
            a.validate()?;
            if !names.insert(a.name.as_str()) {
                return Err(SchemaError::Invalid(format!(
                    "attribute `{}` declared twice",
                    a.name
                )));
            }
        }
        let find = |name: &str| {
            attributes
                .iter()
                .position(|a| a.name == name)
                .ok_or_else(|| SchemaError::Invalid(format!("unknown attribute `{name}`")))
        };
        let target_idx = find(target)?;
        let protected_idx = find(protected)?;
        let mut roles = vec![Role::NonSensitive; attributes.len()];
        for s in sensitive {
            roles[find(s)?] = Role::Sensitive;
        }
        if roles[target_idx] == Role::Sensitive {
            return Err(SchemaError::Invalid(format!(
                "target `{target}` cannot be sensitive"
            )));
        }
        roles[target_idx] = Role::Target;
        if roles[protected_idx] != Role::Sensitive {
            return Err(SchemaError::Invalid(format!(
                "protected attribute `{protected}` must be sensitive"
            )));
        }
        let target_k = attributes[target_idx].k();
        if target_k != 2 {
            return Err(SchemaError::TargetNotBinary {
                name: target.to_string(),
                k: target_k,
            });
        }
        let privileged = attributes[protected_idx]
            .index_of(privileged_value)
            .ok_or_else(|| {
                SchemaError::Invalid(format!(
                    "privileged value `{privileged_value}` not in domain of `{protected}`"
                ))
            })?;
        let positive = attributes[target_idx]
            .index_of(positive_label)
            .ok_or_else(|| {
                SchemaError::Invalid(format!(
                    "positive label `{positive_label}` not in domain of `{target}`"
                ))
            })?;
        Ok(DatasetSchema {
            attributes,
            roles,
            protected: protected_idx,
            target: target_idx,
            privileged_value: privileged,
            positive_label: positive,
        })
    }

    pub fn attributes(&self) -> &[CategoricalDomain] {
        &self.attributes
    }

    pub fn attribute(&self, idx: usize) -> &CategoricalDomain {
        &self.attributes[idx]
    }

    pub fn role(&self, idx: usize) -> Role {
        self.roles[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Indices of the sensitive attributes, in schema order.
    pub fn sensitive(&self) -> Vec<usize> {
        self.indices_with(Role::Sensitive)
    }

    pub fn non_sensitive(&self) -> Vec<usize> {
        self.indices_with(Role::NonSensitive)
    }

    /// Every attribute except the target: the columns fed to the classifier.
    pub fn features(&self) -> Vec<usize> {
        (0..self.attributes.len())
            .filter(|&i| i != self.target)
            .collect()
    }

    pub fn protected(&self) -> usize {
        self.protected
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn privileged_value(&self) -> usize {
        self.privileged_value
    }

    pub fn positive_label(&self) -> usize {
        self.positive_label
    }

    /// Copy of this schema in which exactly `sensitive` (attribute indices)
    /// are sensitive; every other non-target attribute becomes non-sensitive.
    pub fn with_sensitive(&self, sensitive: &[usize]) -> Result<DatasetSchema, SchemaError> {
        let names: Vec<&str> = sensitive
            .iter()
            .map(|&i| {
                self.attributes
                    .get(i)
                    .map(|a| a.name.as_str())
                    .ok_or_else(|| SchemaError::Invalid(format!("no attribute at index {i}")))
            })
            .collect::<Result<_, _>>()?;
        DatasetSchema::new(
            self.attributes.clone(),
            &names,
            &self.attributes[self.protected].name,
            &self.attributes[self.target].name,
            &self.attribute(self.protected).values[self.privileged_value],
            &self.attribute(self.target).values[self.positive_label],
        )
    }

    fn indices_with(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One attribute entry of a [`SchemaConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeConfig {
    pub name: String,
    /// Declared domain. Inferred from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<String>>,
    #[serde(default)]
    pub sensitive: bool,
}

/// On-disk schema description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub protected: String,
    pub target: String,
    pub privileged_value: String,
    pub positive_label: String,
    pub attributes: Vec<AttributeConfig>,
}

impl SchemaConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| SchemaError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema config is always serializable")
    }

    /// Builds a schema from fully declared domains. Fails if any attribute
    /// omits its `values`.
    pub fn to_schema(&self) -> Result<DatasetSchema, SchemaError> {
        let domains = self
            .attributes
            .iter()
            .map(|a| match &a.values {
                Some(v) => CategoricalDomain::new(a.name.clone(), v.clone()),
                None => Err(SchemaError::Invalid(format!(
                    "attribute `{}` has no declared values",
                    a.name
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.build(domains)
    }

    fn build(&self, domains: Vec<CategoricalDomain>) -> Result<DatasetSchema, SchemaError> {
        let sensitive: Vec<&str> = self
            .attributes
            .iter()
            .filter(|a| a.sensitive)
            .map(|a| a.name.as_str())
            .collect();
        DatasetSchema::new(
            domains,
            &sensitive,
            &self.protected,
            &self.target,
            &self.privileged_value,
            &self.positive_label,
        )
    }
}

/// An immutable table of category indices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<DatasetSchema>,
    cells: Vec<u32>,
    n: usize,
}

impl Dataset {
    pub fn new(schema: Arc<DatasetSchema>, rows: Vec<Vec<u32>>) -> Result<Self, SchemaError> {
        let d = schema.attributes().len();
        let mut cells = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(SchemaError::Invalid(format!(
                    "row {i} has {} cells, schema has {d} attributes",
                    row.len()
                )));
            }
            cells.extend_from_slice(row);
        }
        Self::from_cells(schema, cells)
    }

    fn from_cells(schema: Arc<DatasetSchema>, cells: Vec<u32>) -> Result<Self, SchemaError> {
        let d = schema.attributes().len();
        let n = cells.len() / d;
        if n == 0 {
            return Err(SchemaError::Empty);
        }
        for (pos, &index) in cells.iter().enumerate() {
            let attr = schema.attribute(pos % d);
            if index as usize >= attr.k() {
                return Err(SchemaError::IndexOutOfRange {
                    row: pos / d,
                    name: attr.name.clone(),
                    index,
                    k: attr.k(),
                });
            }
        }
        Ok(Dataset { schema, cells, n })
    }

    pub fn schema(&self) -> &DatasetSchema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<DatasetSchema> {
        Arc::clone(&self.schema)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let d = self.schema.attributes().len();
        &self.cells[i * d..(i + 1) * d]
    }

    pub fn value(&self, row: usize, attr: usize) -> u32 {
        self.row(row)[attr]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.cells.chunks(self.schema.attributes().len())
    }

    /// The same rows under a schema with identical attributes but possibly
    /// different roles.
    pub fn with_schema(&self, schema: Arc<DatasetSchema>) -> Result<Dataset, SchemaError> {
        if schema.attributes() != self.schema.attributes()
            || schema.target() != self.schema.target()
        {
            return Err(SchemaError::Invalid(
                "replacement schema has different attributes".into(),
            ));
        }
        Ok(Dataset {
            schema,
            cells: self.cells.clone(),
            n: self.n,
        })
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset, SchemaError> {
        let mut cells = Vec::with_capacity(indices.len() * self.schema.attributes().len());
        for &i in indices {
            cells.extend_from_slice(self.row(i));
        }
        Self::from_cells(self.shared_schema(), cells)
    }

    /// Binary labels, `true` for the positive label.
    pub fn labels(&self) -> Vec<bool> {
        let (t, pos) = (self.schema.target(), self.schema.positive_label() as u32);
        self.rows().map(|r| r[t] == pos).collect()
    }
}

/// Entry `i` is `true` iff row `i`'s protected attribute equals the
/// privileged value.
pub fn group_indicator(d: &Dataset) -> Vec<bool> {
    let (p, privileged) = (d.schema().protected(), d.schema().privileged_value() as u32);
    d.rows().map(|r| r[p] == privileged).collect()
}

/// Outcome of [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadReport {
    pub kept: usize,
    /// Rows with an empty or out-of-domain cell.
    pub dropped: usize,
}

/// Loads a comma-delimited UTF-8 CSV with a header row.
///
/// Every schema attribute must appear in the header; extra columns are
/// ignored. Cells are trimmed. Rows with an empty cell or a value outside a
/// declared domain are dropped and counted.
pub fn load_csv(
    path: impl AsRef<Path>,
    config: &SchemaConfig,
) -> Result<(Dataset, LoadReport), SchemaError> {
    let path = path.as_ref();
    let csv_err = |source| SchemaError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => SchemaError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => SchemaError::Invalid(format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(csv_err)?.clone();
    let mut positions: HashMap<&str, usize> = HashMap::new();
    for (i, h) in header.iter().enumerate() {
        if positions.insert(h, i).is_some() {
            return Err(SchemaError::HeaderMismatch(format!(
                "column `{h}` appears twice"
            )));
        }
    }
    let columns = config
        .attributes
        .iter()
        .map(|a| {
            positions.get(a.name.as_str()).copied().ok_or_else(|| {
                SchemaError::HeaderMismatch(format!("attribute `{}` not in header", a.name))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let records = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(csv_err)?;

    let domains = config
        .attributes
        .iter()
        .zip(&columns)
        .map(|(a, &col)| {
            let values = match &a.values {
                Some(v) => v.clone(),
                None => records
                    .iter()
                    .filter_map(|r| r.get(col))
                    .filter(|c| !c.is_empty())
                    .map(str::to_string)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            };
            CategoricalDomain::new(a.name.clone(), values)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let schema = Arc::new(config.build(domains)?);

    let lookup: Vec<HashMap<&str, u32>> = schema
        .attributes()
        .iter()
        .map(|a| {
            a.values
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), i as u32))
                .collect()
        })
        .collect();

    let d = columns.len();
    let mut cells = Vec::with_capacity(records.len() * d);
    let mut dropped = 0;
    'rows: for record in &records {
        let start = cells.len();
        for (attr, &col) in columns.iter().enumerate() {
            match record.get(col).and_then(|c| lookup[attr].get(c)) {
                Some(&idx) => cells.push(idx),
                None => {
                    cells.truncate(start);
                    dropped += 1;
                    continue 'rows;
                }
            }
        }
    }
    let dataset = Dataset::from_cells(schema, cells)?;
    let report = LoadReport {
        kept: dataset.n(),
        dropped,
    };
    Ok((dataset, report))
}

/// Writes the dataset as CSV with category labels, in schema column order.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<(), SchemaError> {
    let path = path.as_ref();
    let csv_err = |source| SchemaError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let attrs = d.schema().attributes();
    w.write_record(attrs.iter().map(|a| a.name.as_str()))
        .map_err(csv_err)?;
    for row in d.rows() {
        w.write_record(
            row.iter()
                .zip(attrs)
                .map(|(&i, a)| a.values[i as usize].as_str()),
        )
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| SchemaError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Random disjoint partition into `⌊fraction·n⌋` training rows and the
/// remainder. Both halves keep the original relative row order.
pub fn train_test_split(
    d: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), SchemaError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SchemaError::BadFraction(train_fraction));
    }
    let n = d.n();
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(SchemaError::TooSmall {
            n,
            fraction: train_fraction,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng_for(&[seed]));
    let (train, test) = order.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((d.select(train)?, d.select(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn config() -> SchemaConfig {
        toml::from_str(
            r#"
            protected = "g"
            target = "y"
            privileged_value = "m"
            positive_label = "1"
            [[attributes]]
            name = "g"
            values = ["f", "m"]
            sensitive = true
            [[attributes]]
            name = "r"
            values = ["a", "b"]
            [[attributes]]
            name = "y"
            values = ["0", "1"]
            "#,
        )
        .unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn drops_rows_with_empty_cells() {
        let f = write_tmp("g,r,y\nm,a,1\nf,b,0\nm,,1\nf,a,1\nm,b,0\n");
        let (d, report) = load_csv(f.path(), &config()).unwrap();
        assert_eq!(d.n(), 4);
        assert_eq!(report.dropped, 1);
    }

    #[test]
    fn drops_out_of_domain_rows() {
        let f = write_tmp("g,r,y\nm,a,1\nf,c,0\n");
        let (d, report) = load_csv(f.path(), &config()).unwrap();
        assert_eq!((d.n(), report.dropped), (1, 1));
    }

    #[test]
    fn header_columns_may_be_reordered() {
        let f = write_tmp("y,g,r\n1,m,b\n");
        let (d, _) = load_csv(f.path(), &config()).unwrap();
        assert_eq!(d.row(0), &[1, 1, 1]);
    }

    #[test]
    fn missing_header_column_is_an_error() {
        let f = write_tmp("g,y\nm,1\n");
        assert!(matches!(
            load_csv(f.path(), &config()),
            Err(SchemaError::HeaderMismatch(_))
        ));
    }

    #[test]
    fn missing_file_is_an_error() {
        let err = load_csv("/nonexistent/data.csv", &config()).unwrap_err();
        assert!(matches!(err, SchemaError::Io { .. }), "{err:?}");
    }

    #[test]
    fn inferred_domain_is_sorted_and_needs_two_values() {
        let mut cfg = config();
        cfg.attributes[1].values = None;
        let f = write_tmp("g,r,y\nm,zz,1\nf,aa,0\n");
        let (d, _) = load_csv(f.path(), &cfg).unwrap();
        assert_eq!(d.schema().attribute(1).values, vec!["aa", "zz"]);

        let f = write_tmp("g,r,y\nm,zz,1\nf,zz,0\n");
        assert!(matches!(
            load_csv(f.path(), &cfg),
            Err(SchemaError::TooFewValues { .. })
        ));
    }

    #[test]
    fn non_binary_target_is_rejected() {
        let mut cfg = config();
        cfg.attributes[2].values = Some(vec!["0".into(), "1".into(), "2".into()]);
        assert!(matches!(
            cfg.to_schema(),
            Err(SchemaError::TargetNotBinary { k: 3, .. })
        ));
    }

    #[test]
    fn protected_must_be_sensitive() {
        let mut cfg = config();
        cfg.attributes[0].sensitive = false;
        assert!(matches!(cfg.to_schema(), Err(SchemaError::Invalid(_))));
    }

    #[test]
    fn duplicate_values_are_rejected() {
        assert!(CategoricalDomain::new("x", ["a", "a"]).is_err());
    }

    #[test]
    fn group_indicator_marks_privileged_rows() {
        let schema = Arc::new(config().to_schema().unwrap());
        let d = Dataset::new(schema, vec![vec![1, 0, 0], vec![0, 0, 1], vec![1, 1, 1]]).unwrap();
        assert_eq!(group_indicator(&d), vec![true, false, true]);
        assert_eq!(d.labels(), vec![false, true, true]);
    }

    #[test]
    fn all_privileged_gives_all_ones() {
        let schema = Arc::new(config().to_schema().unwrap());
        let d = Dataset::new(schema, vec![vec![1, 0, 0]; 5]).unwrap();
        assert!(group_indicator(&d).into_iter().all(|g| g));
    }

    #[test]
    fn split_sizes_and_partition() {
        let schema = Arc::new(config().to_schema().unwrap());
        let rows: Vec<Vec<u32>> = (0..10).map(|i| vec![i % 2, (i / 2) % 2, 0]).collect();
        let d = Dataset::new(schema, rows).unwrap();
        let (train, test) = train_test_split(&d, 0.8, 11).unwrap();
        assert_eq!((train.n(), test.n()), (8, 2));
        let (train2, test2) = train_test_split(&d, 0.8, 11).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_rejects_bad_fraction_and_tiny_data() {
        let schema = Arc::new(config().to_schema().unwrap());
        let d = Dataset::new(schema, vec![vec![0, 0, 0]]).unwrap();
        assert!(matches!(
            train_test_split(&d, 1.0, 0),
            Err(SchemaError::BadFraction(_))
        ));
        assert!(matches!(
            train_test_split(&d, 0.5, 0),
            Err(SchemaError::TooSmall { .. })
        ));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let schema = Arc::new(config().to_schema().unwrap());
        assert!(matches!(
            Dataset::new(schema, vec![vec![2, 0, 0]]),
            Err(SchemaError::IndexOutOfRange { .. })
        ));
    }
}
