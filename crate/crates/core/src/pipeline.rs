//! Sanitization of training data and homogeneous binary encoding.
//!
//! Every feature attribute becomes a block of `k_j` binary columns, whatever
//! mechanism produced it: non-sensitive attributes (and all test data) are
//! one-hot encoded; each sanitized cell is replaced by the indicator vector of
//! its report's support set. Train and test matrices therefore share one
//! column layout.
//!
//! The group vector and labels always come from the unperturbed rows: fairness
//! is assessed against true protected-group membership.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::budget::PrivacyAllocation;
use crate::mechanisms::{self, Mechanism, MechanismError, MechanismKind, Report};
use crate::schema::{group_indicator, Dataset, Role};
use crate::seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("allocation does not match the dataset's sensitive attributes: {0}")]
    AllocationMismatch(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed matrix file: {0}")]
    Parse(String),
}

/// Sparse 0/1 matrix in compressed-row form. Column indices within a row are
/// strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    n_cols: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
}

impl BinaryMatrix {
    pub fn new(n_cols: usize) -> Self {
        BinaryMatrix {
            n_cols,
            offsets: vec![0],
            indices: Vec::new(),
        }
    }

    /// Builds from per-row active-column lists. Each list must be strictly
    /// increasing and within `n_cols`.
    pub fn from_rows(n_cols: usize, rows: impl IntoIterator<Item = Vec<u32>>) -> Self {
        let mut m = BinaryMatrix::new(n_cols);
        for r in rows {
            m.push_row(&r);
        }
        m
    }

    /// Builds from a dense 0/1 matrix.
    pub fn from_dense(n_cols: usize, dense: &[Vec<u8>]) -> Self {
        BinaryMatrix::from_rows(
            n_cols,
            dense.iter().map(|row| {
                assert_eq!(row.len(), n_cols, "dense row width mismatch");
                row.iter()
                    .enumerate()
                    .filter(|(_, &x)| x != 0)
                    .map(|(j, _)| j as u32)
                    .collect()
            }),
        )
    }

    pub fn push_row(&mut self, active: &[u32]) {
        debug_assert!(active.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(active.iter().all(|&j| (j as usize) < self.n_cols));
        self.indices.extend_from_slice(active);
        self.offsets.push(self.indices.len());
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of ones.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&(j as u32)).is_ok()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.n_rows())
            .map(|i| {
                let mut row = vec![0u8; self.n_cols];
                for &j in self.row(i) {
                    row[j as usize] = 1;
                }
                row
            })
            .collect()
    }

    /// Writes `row col 1` lines, zero-based, preceded by a
    /// `# rows cols` header.
    pub fn write_triplets(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        let io_err = |source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        writeln!(w, "# {} {}", self.n_rows(), self.n_cols).map_err(io_err)?;
        for i in 0..self.n_rows() {
            for &j in self.row(i) {
                writeln!(w, "{i} {j} 1").map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn read_triplets(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let io_err = |source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        };
        let reader = BufReader::new(std::fs::File::open(path).map_err(io_err)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| PipelineError::Parse("empty file".into()))?
            .map_err(io_err)?;
        let dims: Vec<usize> = header
            .trim_start_matches('#')
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| PipelineError::Parse(format!("header `{header}`: {e}")))?;
        let [n_rows, n_cols] = dims[..] else {
            return Err(PipelineError::Parse(format!("header `{header}`")));
        };
        let mut rows = vec![Vec::new(); n_rows];
        for line in lines {
            let line = line.map_err(io_err)?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed = match parts[..] {
                [i, j, "1"] => i.parse::<usize>().ok().zip(j.parse::<u32>().ok()),
                _ => None,
            };
            let (i, j) = parsed
                .filter(|&(i, j)| i < n_rows && (j as usize) < n_cols)
                .ok_or_else(|| PipelineError::Parse(format!("line `{line}`")))?;
            rows[i].push(j);
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        Ok(BinaryMatrix::from_rows(n_cols, rows))
    }
}

/// One feature column: an (attribute, category) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub attribute: String,
    pub category: String,
}

/// Feature matrix plus labels and true group membership.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub features: BinaryMatrix,
    pub labels: Vec<bool>,
    pub column_map: Vec<Column>,
    pub group: Vec<bool>,
}

impl EncodedMatrix {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Writes the features as triplets to `path` and the column map to
    /// `path` with a `.columns` suffix appended.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        self.features.write_triplets(path)?;
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".columns");
        write_column_map(&self.column_map, Path::new(&sidecar))
    }
}

/// Writes `index<TAB>attribute<TAB>category` lines.
pub fn write_column_map(columns: &[Column], path: &Path) -> Result<(), PipelineError> {
    let mut out = String::new();
    for (i, c) in columns.iter().enumerate() {
        let _ = writeln!(out, "{i}\t{}\t{}", c.attribute, c.category);
    }
    std::fs::write(path, out).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_column_map(path: &Path) -> Result<Vec<Column>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    text.lines()
        .enumerate()
        .map(|(n, line)| match line.split('\t').collect::<Vec<_>>()[..] {
            [i, a, c] if i.parse() == Ok(n) => Ok(Column {
                attribute: a.to_string(),
                category: c.to_string(),
            }),
            _ => Err(PipelineError::Parse(format!("column map line `{line}`"))),
        })
        .collect()
}

/// Column layout shared by train and test matrices: one block per
/// non-target attribute, in schema order.
struct Layout {
    attrs: Vec<usize>,
    offsets: Vec<u32>,
    columns: Vec<Column>,
}

impl Layout {
    fn of(d: &Dataset) -> Layout {
        let schema = d.schema();
        let attrs = schema.features();
        let mut offsets = Vec::with_capacity(attrs.len());
        let mut columns = Vec::new();
        for &a in &attrs {
            offsets.push(columns.len() as u32);
            let dom = schema.attribute(a);
            columns.extend(dom.values.iter().map(|v| Column {
                attribute: dom.name.clone(),
                category: v.clone(),
            }));
        }
        Layout {
            attrs,
            offsets,
            columns,
        }
    }

    fn finish(self, d: &Dataset, rows: Vec<Vec<u32>>) -> EncodedMatrix {
        EncodedMatrix {
            features: BinaryMatrix::from_rows(self.columns.len(), rows),
            labels: d.labels(),
            column_map: self.columns,
            group: group_indicator(d),
        }
    }
}

/// Length-`k` binary indicator of a report's support set. `theta` must be
/// given for histogram reports.
pub fn encode_report(
    report: &Report,
    k: usize,
    theta: Option<f64>,
) -> Result<Vec<bool>, PipelineError> {
    let mut out = vec![false; k];
    for i in mechanisms::support(report, k, theta)? {
        out[i] = true;
    }
    Ok(out)
}

/// One-hot encodes every non-target attribute with no randomness.
pub fn encode_plain(d: &Dataset) -> EncodedMatrix {
    let layout = Layout::of(d);
    let rows = d
        .rows()
        .map(|row| {
            layout
                .attrs
                .iter()
                .zip(&layout.offsets)
                .map(|(&a, &off)| off + row[a])
                .collect()
        })
        .collect();
    layout.finish(d, rows)
}

/// Perturbs each sensitive cell with `kind` at its attribute's budget and
/// encodes the result; non-sensitive attributes are one-hot encoded.
///
/// The generator for cell `(row, attr)` is derived from `(seed, attr, row)`,
/// so the output does not depend on thread scheduling.
pub fn sanitize_training(
    d: &Dataset,
    alloc: &PrivacyAllocation,
    kind: MechanismKind,
    seed: u64,
) -> Result<EncodedMatrix, PipelineError> {
    let schema = d.schema();
    let sensitive = schema.sensitive();
    if alloc.per_attribute.len() != sensitive.len() {
        return Err(PipelineError::AllocationMismatch(format!(
            "{} budgets for {} sensitive attributes",
            alloc.per_attribute.len(),
            sensitive.len()
        )));
    }
    let layout = Layout::of(d);
    let mechanisms: Vec<Option<Mechanism>> = layout
        .attrs
        .iter()
        .map(|&a| {
            if schema.role(a) != Role::Sensitive {
                return Ok(None);
            }
            let dom = schema.attribute(a);
            let eps = alloc.epsilon_for(&dom.name).ok_or_else(|| {
                PipelineError::AllocationMismatch(format!("no budget for `{}`", dom.name))
            })?;
            Ok(Some(Mechanism::new(kind, dom.k(), eps)?))
        })
        .collect::<Result<_, PipelineError>>()?;

    let rows = (0..d.n())
        .into_par_iter()
        .map(|i| {
            let row = d.row(i);
            let mut active = Vec::with_capacity(layout.attrs.len());
            for ((&a, &off), mech) in layout.attrs.iter().zip(&layout.offsets).zip(&mechanisms) {
                match mech {
                    None => active.push(off + row[a]),
                    Some(m) => {
                        let mut rng = seed::rng_for(&[seed, a as u64, i as u64]);
                        let report = m.perturb(row[a] as usize, &mut rng)?;
                        active.extend(m.support(&report)?.into_iter().map(|j| off + j as u32));
                    }
                }
            }
            Ok(active)
        })
        .collect::<Result<Vec<_>, MechanismError>>()?;
    Ok(layout.finish(d, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::{allocate_kbased, allocate_uniform};
    use crate::mechanisms::HashFunctionSpec;
    use crate::schema::{CategoricalDomain, DatasetSchema};
    use std::sync::Arc;

    fn dataset() -> Dataset {
        let schema = DatasetSchema::new(
            vec![
                CategoricalDomain::new("g", ["f", "m"]).unwrap(),
                CategoricalDomain::new("c", ["a", "b", "c", "d", "e"]).unwrap(),
                CategoricalDomain::new("x", ["p", "q", "r"]).unwrap(),
                CategoricalDomain::new("y", ["0", "1"]).unwrap(),
            ],
            &["g", "c"],
            "g",
            "y",
            "m",
            "1",
        )
        .unwrap();
        let rows = (0..40u32)
            .map(|i| vec![i % 2, i % 5, i % 3, (i / 3) % 2])
            .collect();
        Dataset::new(Arc::new(schema), rows).unwrap()
    }

    #[test]
    fn encode_report_variants() {
        assert_eq!(
            encode_report(&Report::Value(2), 4, None).unwrap(),
            vec![false, false, true, false]
        );
        assert_eq!(
            encode_report(&Report::Subset(vec![0, 3]), 4, None).unwrap(),
            vec![true, false, false, true]
        );
        let bits = vec![true, false, true];
        assert_eq!(
            encode_report(&Report::Bits(bits.clone()), 3, None).unwrap(),
            bits
        );
        let h = Report::Histogram(vec![0.9, 0.2, 1.4]);
        assert_eq!(
            encode_report(&h, 3, Some(0.8)).unwrap(),
            vec![true, false, true]
        );
        assert!(encode_report(&h, 3, None).is_err());
    }

    #[test]
    fn encode_hash_report_matches_seeded_hash() {
        let hash = HashFunctionSpec { seed: 12345, g: 2 };
        let z = hash.evaluate(1);
        let want: Vec<bool> = (0..3).map(|u| hash.evaluate(u) == z).collect();
        assert!(want[1]);
        assert_eq!(
            encode_report(&Report::Hash { hash, z }, 3, None).unwrap(),
            want
        );
    }

    #[test]
    fn plain_encoding_is_one_hot_and_idempotent() {
        let d = dataset();
        let m = encode_plain(&d);
        assert_eq!(m.features.n_cols(), 2 + 5 + 3);
        for i in 0..d.n() {
            assert_eq!(m.features.row(i).len(), 3);
        }
        assert_eq!(m, encode_plain(&d));
        assert_eq!(m.column_map[2].attribute, "c");
        assert_eq!(m.column_map[2].category, "a");
    }

    #[test]
    fn sanitized_width_and_alignment_for_every_kind() {
        let d = dataset();
        let plain = encode_plain(&d);
        let doms: Vec<_> = d
            .schema()
            .sensitive()
            .iter()
            .map(|&a| d.schema().attribute(a).clone())
            .collect();
        let alloc = allocate_kbased(2.0, &doms).unwrap();
        for kind in MechanismKind::ALL {
            let m = sanitize_training(&d, &alloc, kind, 5).unwrap();
            assert_eq!(m.column_map, plain.column_map);
            assert_eq!(m.labels, plain.labels);
            assert_eq!(m.group, plain.group);
            // non-sensitive block "x" (cols 7..10) stays one-hot
            for i in 0..d.n() {
                let in_x = m.features.row(i).iter().filter(|&&j| j >= 7).count();
                assert_eq!(in_x, 1, "{kind}");
            }
        }
    }

    #[test]
    fn grr_and_ss_block_cardinalities() {
        let d = dataset();
        let doms: Vec<_> = d
            .schema()
            .sensitive()
            .iter()
            .map(|&a| d.schema().attribute(a).clone())
            .collect();
        let alloc = allocate_uniform(0.5, &doms).unwrap();
        let grr = sanitize_training(&d, &alloc, MechanismKind::Grr, 1).unwrap();
        let ss = sanitize_training(&d, &alloc, MechanismKind::Ss, 1).unwrap();
        let omega_c = mechanisms::ss_subset_size(5, 0.25);
        for i in 0..d.n() {
            let block = |m: &EncodedMatrix, lo: u32, hi: u32| {
                m.features
                    .row(i)
                    .iter()
                    .filter(|&&j| j >= lo && j < hi)
                    .count()
            };
            assert_eq!(block(&grr, 0, 2), 1);
            assert_eq!(block(&grr, 2, 7), 1);
            assert_eq!(block(&ss, 2, 7), omega_c);
        }
    }

    #[test]
    fn allocation_mismatch_is_rejected() {
        let d = dataset();
        let alloc = allocate_uniform(1.0, &[d.schema().attribute(0).clone()]).unwrap();
        assert!(matches!(
            sanitize_training(&d, &alloc, MechanismKind::Grr, 0),
            Err(PipelineError::AllocationMismatch(_))
        ));
        let wrong = allocate_uniform(
            1.0,
            &[
                d.schema().attribute(0).clone(),
                d.schema().attribute(2).clone(),
            ],
        )
        .unwrap();
        assert!(matches!(
            sanitize_training(&d, &wrong, MechanismKind::Grr, 0),
            Err(PipelineError::AllocationMismatch(_))
        ));
    }

    #[test]
    fn sanitization_is_deterministic_per_seed() {
        let d = dataset();
        let doms: Vec<_> = d
            .schema()
            .sensitive()
            .iter()
            .map(|&a| d.schema().attribute(a).clone())
            .collect();
        let alloc = allocate_uniform(1.0, &doms).unwrap();
        for kind in MechanismKind::ALL {
            let a = sanitize_training(&d, &alloc, kind, 9).unwrap();
            let b = sanitize_training(&d, &alloc, kind, 9).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dense_round_trip() {
        let dense = vec![vec![1, 0, 1], vec![0, 0, 0], vec![0, 1, 0]];
        let m = BinaryMatrix::from_dense(3, &dense);
        assert_eq!(m.nnz(), 3);
        assert!(m.get(0, 2) && !m.get(1, 1));
        assert_eq!(m.to_dense(), dense);
    }
}
