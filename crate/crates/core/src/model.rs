//! L2-regularized logistic regression trained by full-batch gradient descent,
//! and the utility metrics reported for it.
//!
//! Training starts from all-zero weights and is fully deterministic: two
//! calls with the same inputs produce bitwise-equal parameters.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{BinaryMatrix, Column};

/// Label written to result files for the classifier in use.
pub const CLASSIFIER_NAME: &str = "logistic-regression";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("training loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("feature width {got} does not match model width {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("input lengths differ: {0:?}")]
    LengthMismatch(Vec<usize>),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model file: {0}")]
    Parse(String),
}

type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub epochs: usize,
    pub decision_threshold: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            learning_rate: 0.1,
            l2_penalty: 1e-4,
            epochs: 300,
            decision_threshold: 0.5,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |what: &str, v: f64| Err(ModelError::InvalidHyperparameter(format!("{what} = {v}")));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", self.learning_rate);
        }
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return bad("l2_penalty", self.l2_penalty);
        }
        if self.epochs == 0 {
            return bad("epochs", 0.0);
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return bad("decision_threshold", self.decision_threshold);
        }
        Ok(())
    }
}

/// Trained weights, one per feature column, plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyper: Hyperparameters,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    s.max(0.0) + (-s.abs()).exp().ln_1p()
}

fn scores(weights: &[f64], bias: f64, features: &BinaryMatrix) -> Vec<f64> {
    (0..features.n_rows())
        .map(|i| {
            bias + features
                .row(i)
                .iter()
                .map(|&j| weights[j as usize])
                .sum::<f64>()
        })
        .collect()
}

fn check_shapes(weights: &[f64], features: &BinaryMatrix, labels: &[bool]) -> Result<()> {
    if weights.len() != features.n_cols() {
        return Err(ModelError::WidthMismatch {
            expected: weights.len(),
            got: features.n_cols(),
        });
    }
    if labels.len() != features.n_rows() {
        return Err(ModelError::LengthMismatch(vec![
            features.n_rows(),
            labels.len(),
        ]));
    }
    Ok(())
}

fn loss_from_scores(s: &[f64], labels: &[bool], weights: &[f64], l2: f64) -> f64 {
    let data: f64 = s
        .iter()
        .zip(labels)
        .map(|(&s, &y)| softplus(s) - if y { s } else { 0.0 })
        .sum();
    let norm: f64 = weights.iter().map(|w| w * w).sum();
    data / s.len() as f64 + 0.5 * l2 * norm
}

/// Mean logistic loss plus `(l2/2)·‖w‖²`. The bias is not penalized.
pub fn loss(
    weights: &[f64],
    bias: f64,
    features: &BinaryMatrix,
    labels: &[bool],
    l2: f64,
) -> Result<f64> {
    check_shapes(weights, features, labels)?;
    Ok(loss_from_scores(
        &scores(weights, bias, features),
        labels,
        weights,
        l2,
    ))
}

fn gradient_from_scores(
    s: &[f64],
    weights: &[f64],
    features: &BinaryMatrix,
    labels: &[bool],
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = s.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (i, (&s, &y)) in s.iter().zip(labels).enumerate() {
        let r = sigmoid(s) - f64::from(u8::from(y));
        gb += r;
        for &j in features.row(i) {
            gw[j as usize] += r;
        }
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

/// Analytic gradient of [`loss`] with respect to `(weights, bias)`.
pub fn gradient(
    weights: &[f64],
    bias: f64,
    features: &BinaryMatrix,
    labels: &[bool],
    l2: f64,
) -> Result<(Vec<f64>, f64)> {
    check_shapes(weights, features, labels)?;
    let s = scores(weights, bias, features);
    Ok(gradient_from_scores(&s, weights, features, labels, l2))
}

/// Trains from zero initialization. Returns the parameters and the loss
/// before each update (`epochs + 1` entries, the last after the final
/// update).
pub fn train_with_history(
    features: &BinaryMatrix,
    labels: &[bool],
    hyper: &Hyperparameters,
) -> Result<(ClassifierParams, Vec<f64>)> {
    hyper.validate()?;
    let n = features.n_rows();
    if n < 2 {
        return Err(ModelError::TooFewRows(n));
    }
    let mut weights = vec![0.0; features.n_cols()];
    check_shapes(&weights, features, labels)?;
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(ModelError::SingleClass);
    }
    let mut bias = 0.0;
    let mut history = Vec::with_capacity(hyper.epochs + 1);
    for epoch in 0..=hyper.epochs {
        let s = scores(&weights, bias, features);
        let l = loss_from_scores(&s, labels, &weights, hyper.l2_penalty);
        if !l.is_finite() {
            return Err(ModelError::NonFiniteLoss(epoch));
        }
        history.push(l);
        if epoch == hyper.epochs {
            break;
        }
        let (gw, gb) = gradient_from_scores(&s, &weights, features, labels, hyper.l2_penalty);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= hyper.learning_rate * g;
        }
        bias -= hyper.learning_rate * gb;
    }
    Ok((
        ClassifierParams {
            weights,
            bias,
            hyper: *hyper,
        },
        history,
    ))
}

pub fn train(
    features: &BinaryMatrix,
    labels: &[bool],
    hyper: &Hyperparameters,
) -> Result<ClassifierParams> {
    train_with_history(features, labels, hyper).map(|(p, _)| p)
}

impl ClassifierParams {
    fn check_width(&self, features: &BinaryMatrix) -> Result<()> {
        if features.n_cols() != self.weights.len() {
            return Err(ModelError::WidthMismatch {
                expected: self.weights.len(),
                got: features.n_cols(),
            });
        }
        Ok(())
    }

    /// Linear scores `w·x + b`.
    pub fn decision_function(&self, features: &BinaryMatrix) -> Result<Vec<f64>> {
        self.check_width(features)?;
        Ok(scores(&self.weights, self.bias, features))
    }

    pub fn predict_proba(&self, features: &BinaryMatrix) -> Result<Vec<f64>> {
        Ok(self
            .decision_function(features)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }

    /// `true` where the probability exceeds the decision threshold, computed
    /// on the logit scale.
    pub fn predict(&self, features: &BinaryMatrix) -> Result<Vec<bool>> {
        let t = self.hyper.decision_threshold;
        let cut = (t / (1.0 - t)).ln();
        Ok(self
            .decision_function(features)?
            .into_iter()
            .map(|s| s > cut)
            .collect())
    }

    /// Plain-text dump: hyperparameters, bias, then one
    /// `w<TAB>attribute<TAB>category<TAB>weight` line per column.
    pub fn write(&self, columns: &[Column], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if columns.len() != self.weights.len() {
            return Err(ModelError::WidthMismatch {
                expected: self.weights.len(),
                got: columns.len(),
            });
        }
        let h = &self.hyper;
        let mut out = format!("# {CLASSIFIER_NAME}\n");
        let _ = writeln!(out, "learning_rate\t{}", h.learning_rate);
        let _ = writeln!(out, "l2_penalty\t{}", h.l2_penalty);
        let _ = writeln!(out, "epochs\t{}", h.epochs);
        let _ = writeln!(out, "decision_threshold\t{}", h.decision_threshold);
        let _ = writeln!(out, "bias\t{}", self.bias);
        for (c, w) in columns.iter().zip(&self.weights) {
            let _ = writeln!(out, "w\t{}\t{}\t{}", c.attribute, c.category, w);
        }
        std::fs::write(path, out).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<(ClassifierParams, Vec<Column>)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| ModelError::Parse(format!("`{s}`: {e}")))
        };
        let mut hyper = Hyperparameters::default();
        let mut bias = None;
        let mut weights = Vec::new();
        let mut columns = Vec::new();
        for line in text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.is_empty())
        {
            match line.split('\t').collect::<Vec<_>>()[..] {
                ["learning_rate", v] => hyper.learning_rate = parse_f(v)?,
                ["l2_penalty", v] => hyper.l2_penalty = parse_f(v)?,
                ["epochs", v] => {
                    hyper.epochs = v
                        .parse()
                        .map_err(|e| ModelError::Parse(format!("epochs `{v}`: {e}")))?
                }
                ["decision_threshold", v] => hyper.decision_threshold = parse_f(v)?,
                ["bias", v] => bias = Some(parse_f(v)?),
                ["w", a, c, v] => {
                    columns.push(Column {
                        attribute: a.to_string(),
                        category: c.to_string(),
                    });
                    weights.push(parse_f(v)?);
                }
                _ => return Err(ModelError::Parse(format!("line `{line}`"))),
            }
        }
        let bias = bias.ok_or_else(|| ModelError::Parse("missing bias".into()))?;
        Ok((
            ClassifierParams {
                weights,
                bias,
                hyper,
            },
            columns,
        ))
    }
}

/// Utility metric names as written in result files.
pub const METRIC_NAMES: [&str; 4] = ["acc", "f1", "auc", "recall"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityReport {
    pub acc: f64,
    /// 0 when there are no positive labels and no positive predictions.
    pub f1: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    /// 0 when there are no positive labels.
    pub recall: f64,
}

impl UtilityReport {
    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 4] {
        [Some(self.acc), Some(self.f1), self.auc, Some(self.recall)]
    }
}

pub fn utility_metrics(pred: &[bool], proba: &[f64], label: &[bool]) -> Result<UtilityReport> {
    if pred.len() != label.len() || proba.len() != label.len() {
        return Err(ModelError::LengthMismatch(vec![
            pred.len(),
            proba.len(),
            label.len(),
        ]));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in pred.iter().zip(label) {
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(UtilityReport {
        acc: ratio(tp + tn, label.len()),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        auc: roc_auc(proba, label),
        recall: ratio(tp, tp + fn_),
    })
}

/// Area under the ROC curve via the Mann-Whitney rank sum, ties sharing
/// their average rank.
pub fn roc_auc(scores: &[f64], label: &[bool]) -> Option<f64> {
    let n_pos = label.iter().filter(|&&y| y).count();
    let n_neg = label.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks are 1-based: start+1 ..= end
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_tie = order[start..end].iter().filter(|&&i| label[i]).count();
        rank_sum_pos += avg_rank * pos_in_tie as f64;
        start = end;
    }
    let n_pos_f = n_pos as f64;
    Some((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}
