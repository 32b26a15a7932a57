//! Group-fairness metrics over binary predictions.
//!
//! `group[i]` is `true` for the privileged group (`A_p = 1`). Each metric
//! follows its defining equation literally, so the sign conventions differ:
//! DI is unprivileged over privileged, while SPD, EOD and OAD are privileged
//! minus unprivileged. Undefined values are `None`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FairnessError {
    #[error("input lengths differ: {0:?}")]
    LengthMismatch(Vec<usize>),
    #[error("the {0} group has no members")]
    EmptyGroup(&'static str),
}

/// Metric names as written in result files.
pub const METRIC_NAMES: [&str; 4] = ["DI", "SPD", "EOD", "OAD"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairnessReport {
    /// `None` when the privileged positive rate is 0 and the unprivileged one
    /// is not.
    pub di: Option<f64>,
    pub spd: f64,
    /// `None` when a group has no positive labels.
    pub eod: Option<f64>,
    pub oad: f64,
}

impl FairnessReport {
    pub fn compute(pred: &[bool], label: &[bool], group: &[bool]) -> Result<Self, FairnessError> {
        Ok(FairnessReport {
            di: disparate_impact(pred, group)?,
            spd: statistical_parity_difference(pred, group)?,
            eod: equal_opportunity_difference(pred, label, group)?,
            oad: overall_accuracy_difference(pred, label, group)?,
        })
    }

    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 4] {
        [self.di, Some(self.spd), self.eod, Some(self.oad)]
    }
}

fn check_lengths(lens: &[usize]) -> Result<(), FairnessError> {
    if lens.windows(2).all(|w| w[0] == w[1]) {
        Ok(())
    } else {
        Err(FairnessError::LengthMismatch(lens.to_vec()))
    }
}

/// Fraction of rows selected by `keep` with `hit` true, per group:
/// `(unprivileged, privileged)` as `(hits, total)` counts.
fn group_counts(
    group: &[bool],
    keep: impl Fn(usize) -> bool,
    hit: impl Fn(usize) -> bool,
) -> [(usize, usize); 2] {
    let mut counts = [(0, 0); 2];
    for (i, &g) in group.iter().enumerate() {
        if keep(i) {
            let c = &mut counts[usize::from(g)];
            c.1 += 1;
            c.0 += usize::from(hit(i));
        }
    }
    counts
}

fn rates(counts: [(usize, usize); 2]) -> Result<(f64, f64), FairnessError> {
    let [(h0, n0), (h1, n1)] = counts;
    if n0 == 0 {
        return Err(FairnessError::EmptyGroup("unprivileged"));
    }
    if n1 == 0 {
        return Err(FairnessError::EmptyGroup("privileged"));
    }
    Ok((h0 as f64 / n0 as f64, h1 as f64 / n1 as f64))
}

/// `Pr[Ŷ=1 | A_p=0] / Pr[Ŷ=1 | A_p=1]`; 0/0 is 1.
pub fn disparate_impact(pred: &[bool], group: &[bool]) -> Result<Option<f64>, FairnessError> {
    check_lengths(&[pred.len(), group.len()])?;
    let (r0, r1) = rates(group_counts(group, |_| true, |i| pred[i]))?;
    Ok(match (r0 > 0.0, r1 > 0.0) {
        (_, true) => Some(r0 / r1),
        (false, false) => Some(1.0),
        (true, false) => None,
    })
}

/// `Pr[Ŷ=1 | A_p=1] − Pr[Ŷ=1 | A_p=0]`.
pub fn statistical_parity_difference(pred: &[bool], group: &[bool]) -> Result<f64, FairnessError> {
    check_lengths(&[pred.len(), group.len()])?;
    let (r0, r1) = rates(group_counts(group, |_| true, |i| pred[i]))?;
    Ok(r1 - r0)
}

/// `TPR(privileged) − TPR(unprivileged)`. `None` if either group has no
/// positive labels.
pub fn equal_opportunity_difference(
    pred: &[bool],
    label: &[bool],
    group: &[bool],
) -> Result<Option<f64>, FairnessError> {
    check_lengths(&[pred.len(), label.len(), group.len()])?;
    // an empty group is an error even though EOD only looks at positives
    rates(group_counts(group, |_| true, |_| false))?;
    let [(tp0, p0), (tp1, p1)] = group_counts(group, |i| label[i], |i| pred[i]);
    if p0 == 0 || p1 == 0 {
        return Ok(None);
    }
    Ok(Some(tp1 as f64 / p1 as f64 - tp0 as f64 / p0 as f64))
}

/// `Acc(privileged) − Acc(unprivileged)`.
pub fn overall_accuracy_difference(
    pred: &[bool],
    label: &[bool],
    group: &[bool],
) -> Result<f64, FairnessError> {
    check_lengths(&[pred.len(), label.len(), group.len()])?;
    let (a0, a1) = rates(group_counts(group, |_| true, |i| pred[i] == label[i]))?;
    Ok(a1 - a0)
}
