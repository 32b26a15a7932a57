//! Experiment orchestration.
//!
//! For each run the data is split, a baseline model is trained on the plain
//! training set, and then one model per (mechanism, allocation, ε) cell is
//! trained on sanitized training data. Every model shares the configured
//! hyperparameters and is evaluated on the same unperturbed test matrix.
//!
//! All randomness is derived from `(seed, run, cell, ...)` through
//! [`crate::seed::mix`], so results do not depend on thread count or on which
//! other cells are in the grid.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::budget::AllocationScheme;
use crate::fairness::{self, FairnessReport};
use crate::mechanisms::MechanismKind;
use crate::model::{self, ClassifierParams, Hyperparameters, UtilityReport, CLASSIFIER_NAME};
use crate::pipeline::{encode_plain, sanitize_training, EncodedMatrix};
use crate::schema::{self, Dataset, DatasetSchema, SchemaConfig};
use crate::{seed, Result};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    ParseConfig { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("need at least {needed} sensitive attributes, schema has {available}")]
    NotEnoughSensitive { needed: usize, available: usize },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no rows to aggregate")]
    NoRows,
}

/// Privacy budgets swept when a config gives none.
pub const DEFAULT_EPSILONS: [f64; 9] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 10.0, 20.0, 50.0];

/// Label used for the baseline in the mechanism, allocation and ε columns.
pub const NON_DP: &str = "NonDP";

/// Token written for undefined metric values.
pub const NA: &str = "NA";

/// Bounds on the number of sensitive attributes drawn per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicDs {
    #[serde(default = "DynamicDs::default_min")]
    pub min: usize,
    #[serde(default = "DynamicDs::default_max")]
    pub max: usize,
}

impl DynamicDs {
    fn default_min() -> usize {
        2
    }
    fn default_max() -> usize {
        6
    }
}

impl Default for DynamicDs {
    fn default() -> Self {
        DynamicDs { min: 2, max: 6 }
    }
}

fn default_mechanisms() -> Vec<MechanismKind> {
    MechanismKind::ALL.to_vec()
}
fn default_allocations() -> Vec<AllocationScheme> {
    AllocationScheme::ALL.to_vec()
}
fn default_epsilons() -> Vec<f64> {
    DEFAULT_EPSILONS.to_vec()
}
fn default_runs() -> usize {
    20
}
fn default_train_fraction() -> f64 {
    0.8
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Experiment description, read from TOML. Relative paths are resolved
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub schema: PathBuf,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<MechanismKind>,
    #[serde(default = "default_allocations")]
    pub allocations: Vec<AllocationScheme>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub dynamic_ds: Option<DynamicDs>,
    #[serde(default)]
    pub classifier: Hyperparameters,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl ExperimentConfig {
    /// A config with default grid and settings for the given files.
    pub fn new(dataset: impl Into<PathBuf>, schema: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            schema: schema.into(),
            mechanisms: default_mechanisms(),
            allocations: default_allocations(),
            epsilons: default_epsilons(),
            runs: default_runs(),
            seed: 0,
            train_fraction: default_train_fraction(),
            dynamic_ds: None,
            classifier: Hyperparameters::default(),
            output: default_output(),
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::ReadConfig {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| HarnessError::ParseConfig {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset, &mut cfg.schema, &mut cfg.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Checks the config on its own and against a schema.
    pub fn validate(&self, schema: &DatasetSchema) -> Result<()> {
        let invalid = |m: String| Err(HarnessError::Invalid(m).into());
        if self.mechanisms.is_empty() {
            return invalid("no mechanisms".into());
        }
        if self.allocations.is_empty() {
            return invalid("no allocation schemes".into());
        }
        if self.epsilons.is_empty() {
            return invalid("no epsilon values".into());
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return invalid(format!("epsilon {e} must be finite and > 0"));
        }
        if self.runs == 0 {
            return invalid("runs must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return invalid(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            ));
        }
        self.classifier.validate()?;
        if let Some(dyn_ds) = self.dynamic_ds {
            if dyn_ds.min < 1 || dyn_ds.min > dyn_ds.max {
                return invalid(format!(
                    "dynamic_ds bounds [{}, {}] are invalid",
                    dyn_ds.min, dyn_ds.max
                ));
            }
            let available = schema.sensitive().len();
            if available < dyn_ds.max {
                return Err(HarnessError::NotEnoughSensitive {
                    needed: dyn_ds.max,
                    available,
                }
                .into());
            }
        }
        Ok(())
    }

    /// `runs × (1 + |mechanisms|·|allocations|·|epsilons|)`.
    pub fn expected_rows(&self) -> usize {
        self.runs * (1 + self.mechanisms.len() * self.allocations.len() * self.epsilons.len())
    }

    /// Loads the schema and dataset named by this config.
    pub fn load_dataset(&self) -> Result<(Dataset, schema::LoadReport)> {
        let schema_cfg = SchemaConfig::from_path(&self.schema)?;
        Ok(schema::load_csv(&self.dataset, &schema_cfg)?)
    }
}

/// One evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run: usize,
    /// `None` for the baseline.
    pub mechanism: Option<MechanismKind>,
    pub allocation: Option<AllocationScheme>,
    pub epsilon: Option<f64>,
    /// Number of sensitive attributes sanitized.
    pub ds: usize,
    pub fairness: FairnessReport,
    pub utility: UtilityReport,
}

impl MetricsRow {
    pub fn is_baseline(&self) -> bool {
        self.mechanism.is_none()
    }

    /// Group key: mechanism, allocation, ε labels.
    pub fn key(&self) -> GroupKey {
        (
            self.mechanism.map_or(NON_DP.into(), |m| m.to_string()),
            self.allocation.map_or(NON_DP.into(), |a| a.to_string()),
            self.epsilon.map_or(NON_DP.into(), |e| e.to_string()),
        )
    }

    /// Every metric, in [`metric_names`] order.
    pub fn metric_values(&self) -> [Option<f64>; 8] {
        let [di, spd, eod, oad] = self.fairness.values();
        let [acc, f1, auc, recall] = self.utility.values();
        [di, spd, eod, oad, acc, f1, auc, recall]
    }
}

/// Fairness then utility metric names.
pub fn metric_names() -> [&'static str; 8] {
    let [a, b, c, d] = fairness::METRIC_NAMES;
    let [e, f, g, h] = model::METRIC_NAMES;
    [a, b, c, d, e, f, g, h]
}

const SPLIT_TAG: u64 = 0x5711;
const CELL_TAG: u64 = 0xCE11;
const SUBSET_TAG: u64 = 0x5B5E;

/// Draws `d_s` uniformly from `[min, min(max, available)]` and returns that
/// many sensitive attribute indices, always including the protected one, in
/// schema order.
pub fn draw_attribute_subset<R: Rng + ?Sized>(
    schema: &DatasetSchema,
    rng: &mut R,
    min: usize,
    max: usize,
) -> Result<Vec<usize>> {
    let available = schema.sensitive();
    if available.len() < min || min == 0 || min > max {
        return Err(HarnessError::NotEnoughSensitive {
            needed: min.max(1),
            available: available.len(),
        }
        .into());
    }
    let upper = max.min(available.len());
    let ds = rng.random_range(min..=upper);
    let protected = schema.protected();
    let others: Vec<usize> = available.into_iter().filter(|&a| a != protected).collect();
    let mut subset: Vec<usize> = index::sample(rng, others.len(), ds - 1)
        .into_iter()
        .map(|i| others[i])
        .collect();
    subset.push(protected);
    subset.sort_unstable();
    Ok(subset)
}

fn evaluate(
    params: &ClassifierParams,
    test: &EncodedMatrix,
) -> Result<(FairnessReport, UtilityReport)> {
    let proba = params.predict_proba(&test.features)?;
    let pred = params.predict(&test.features)?;
    let utility = model::utility_metrics(&pred, &proba, &test.labels)?;
    let fairness = FairnessReport::compute(&pred, &test.labels, &test.group)?;
    Ok((fairness, utility))
}

struct Cell {
    mechanism: MechanismKind,
    allocation: AllocationScheme,
    epsilon: f64,
}

impl Cell {
    fn key(&self, cfg: &ExperimentConfig, run: usize) -> [u64; 5] {
        [
            cfg.seed,
            run as u64,
            self.mechanism.id(),
            self.allocation.id(),
            self.epsilon.to_bits(),
        ]
    }
}

fn run_cell(
    cfg: &ExperimentConfig,
    run: usize,
    cell: &Cell,
    train: &Dataset,
    test: &EncodedMatrix,
) -> Result<MetricsRow> {
    let key = cell.key(cfg, run);
    let train = match cfg.dynamic_ds {
        None => train.clone(),
        Some(bounds) => {
            let mut rng = seed::rng_for(&[SUBSET_TAG, key[0], key[1], key[2], key[3], key[4]]);
            let subset = draw_attribute_subset(train.schema(), &mut rng, bounds.min, bounds.max)?;
            train.with_schema(train.schema().with_sensitive(&subset)?.into())?
        }
    };
    let schema = train.schema();
    let domains: Vec<_> = schema
        .sensitive()
        .into_iter()
        .map(|a| schema.attribute(a).clone())
        .collect();
    let alloc = cell.allocation.allocate(cell.epsilon, &domains)?;
    let sanitize_seed = seed::mix(&[CELL_TAG, key[0], key[1], key[2], key[3], key[4]]);
    let encoded = sanitize_training(&train, &alloc, cell.mechanism, sanitize_seed)?;
    let params = model::train(&encoded.features, &encoded.labels, &cfg.classifier)?;
    let (fairness, utility) = evaluate(&params, test)?;
    Ok(MetricsRow {
        run,
        mechanism: Some(cell.mechanism),
        allocation: Some(cell.allocation),
        epsilon: Some(cell.epsilon),
        ds: domains.len(),
        fairness,
        utility,
    })
}

/// Train/test split of one run. Depends only on `(cfg.seed, run)`.
pub fn split_for_run(
    cfg: &ExperimentConfig,
    data: &Dataset,
    run: usize,
) -> Result<(Dataset, Dataset)> {
    let split_seed = seed::mix(&[SPLIT_TAG, cfg.seed, run as u64]);
    Ok(schema::train_test_split(
        data,
        cfg.train_fraction,
        split_seed,
    )?)
}

/// Loads the configured dataset and runs the full sweep.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    let (data, _) = cfg.load_dataset()?;
    run_on_dataset(cfg, &data)
}

/// Runs the sweep on an already loaded dataset. Rows are ordered by run,
/// baseline first, then mechanism, allocation and ε in config order.
pub fn run_on_dataset(cfg: &ExperimentConfig, data: &Dataset) -> Result<Vec<MetricsRow>> {
    cfg.validate(data.schema())?;
    let cells: Vec<Cell> = cfg
        .mechanisms
        .iter()
        .flat_map(|&mechanism| {
            cfg.allocations.iter().flat_map(move |&allocation| {
                cfg.epsilons.iter().map(move |&epsilon| Cell {
                    mechanism,
                    allocation,
                    epsilon,
                })
            })
        })
        .collect();

    let per_run = (0..cfg.runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<MetricsRow>> {
            let (train, test) = split_for_run(cfg, data, run)?;
            let test = encode_plain(&test);
            let plain = encode_plain(&train);
            let params = model::train(&plain.features, &plain.labels, &cfg.classifier)?;
            let (fairness, utility) = evaluate(&params, &test)?;
            let baseline = MetricsRow {
                run,
                mechanism: None,
                allocation: None,
                epsilon: None,
                ds: train.schema().sensitive().len(),
                fairness,
                utility,
            };
            let mut rows = vec![baseline];
            rows.extend(
                cells
                    .par_iter()
                    .map(|cell| run_cell(cfg, run, cell, &train, &test))
                    .collect::<Result<Vec<_>>>()?,
            );
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_run.into_iter().flatten().collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(NA.to_string(), |x| x.to_string())
}

/// Per-row CSV. Undefined values are written as `NA`.
pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("run,mechanism,allocation,epsilon,d_s");
    for m in metric_names() {
        out.push(',');
        out.push_str(m);
    }
    out.push_str(",classifier\n");
    for r in rows {
        let (mech, alloc, eps) = r.key();
        let _ = write!(out, "{},{mech},{alloc},{eps},{}", r.run, r.ds);
        for v in r.metric_values() {
            out.push(',');
            out.push_str(&fmt_opt(v));
        }
        let _ = writeln!(out, ",{CLASSIFIER_NAME}");
    }
    out
}

/// Mean and spread of one metric over runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub mechanism: String,
    pub allocation: String,
    pub epsilon: String,
    pub metric: &'static str,
    /// `None` when every value was undefined.
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub sd: Option<f64>,
    pub count: usize,
    /// Undefined values skipped.
    pub excluded: usize,
}

type GroupKey = (String, String, String);

/// Mean and population standard deviation per (mechanism, allocation, ε,
/// metric), groups in order of first appearance.
pub fn aggregate(rows: &[MetricsRow]) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(HarnessError::NoRows.into());
    }
    let mut groups: IndexMap<GroupKey, Vec<[Option<f64>; 8]>> = IndexMap::new();
    for r in rows {
        groups.entry(r.key()).or_default().push(r.metric_values());
    }
    let mut out = Vec::new();
    for ((mechanism, allocation, epsilon), values) in groups {
        for (m, metric) in metric_names().into_iter().enumerate() {
            let present: Vec<f64> = values.iter().filter_map(|v| v[m]).collect();
            let count = present.len();
            let (mean, sd) = if count == 0 {
                (None, None)
            } else {
                let mean = present.iter().sum::<f64>() / count as f64;
                let var = present.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64;
                (Some(mean), Some(var.sqrt()))
            };
            out.push(SummaryRow {
                mechanism: mechanism.clone(),
                allocation: allocation.clone(),
                epsilon: epsilon.clone(),
                metric,
                mean,
                sd,
                count,
                excluded: values.len() - count,
            });
        }
    }
    Ok(out)
}

pub fn summary_to_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from("mechanism,allocation,epsilon,metric,mean,sd,count,excluded\n");
    for s in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.mechanism,
            s.allocation,
            s.epsilon,
            s.metric,
            fmt_opt(s.mean),
            fmt_opt(s.sd),
            s.count,
            s.excluded
        );
    }
    out
}

/// One table per metric: a row per ε, a column per (mechanism, allocation)
/// series, plus a constant baseline column.
pub fn plot_tables(summary: &[SummaryRow]) -> Vec<(&'static str, String)> {
    metric_names()
        .into_iter()
        .map(|metric| {
            let of_metric: Vec<&SummaryRow> =
                summary.iter().filter(|s| s.metric == metric).collect();
            let baseline = of_metric
                .iter()
                .find(|s| s.mechanism == NON_DP)
                .and_then(|s| s.mean);
            let mut series: IndexMap<String, IndexMap<&str, Option<f64>>> = IndexMap::new();
            let mut epsilons: Vec<&str> = Vec::new();
            for s in of_metric.iter().filter(|s| s.mechanism != NON_DP) {
                if !epsilons.contains(&s.epsilon.as_str()) {
                    epsilons.push(&s.epsilon);
                }
                series
                    .entry(format!("{}/{}", s.mechanism, s.allocation))
                    .or_default()
                    .insert(&s.epsilon, s.mean);
            }
            let mut out = String::from("epsilon");
            for name in series.keys() {
                out.push(',');
                out.push_str(name);
            }
            let _ = writeln!(out, ",{NON_DP}");
            for eps in epsilons {
                out.push_str(eps);
                for values in series.values() {
                    out.push(',');
                    out.push_str(&fmt_opt(values.get(eps).copied().flatten()));
                }
                let _ = writeln!(out, ",{}", fmt_opt(baseline));
            }
            (metric, out)
        })
        .collect()
}

/// Writes `metrics.csv`, `summary.csv` and, when `plot_data` is set, one
/// `plot_<metric>.csv` per metric into `dir`.
pub fn write_outputs(rows: &[MetricsRow], dir: &Path, plot_data: bool) -> Result<Vec<PathBuf>> {
    let write = |name: String, contents: String| -> Result<PathBuf> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|source| HarnessError::Write {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let summary = aggregate(rows)?;
    let mut written = vec![
        write("metrics.csv".into(), rows_to_csv(rows))?,
        write("summary.csv".into(), summary_to_csv(&summary))?,
    ];
    if plot_data {
        for (metric, table) in plot_tables(&summary) {
            written.push(write(format!("plot_{metric}.csv"), table)?);
        }
    }
    Ok(written)
}
