//! Client-side ε-LDP frequency oracles and their server-side support sets.
//!
//! Each mechanism turns one categorical value `v ∈ [0, k)` into a [`Report`].
//! The server never sees `v`; it maps a report to the *support set* of domain
//! values consistent with it, which the pipeline turns into a length-`k`
//! binary block.
//!
//! | kind   | report                 | support                         |
//! |--------|------------------------|---------------------------------|
//! | GRR    | a value                | that value                      |
//! | BLH    | hash seed, bit         | `{u : H(u) = z}`, `g = 2`       |
//! | OLH    | hash seed, bucket      | `{u : H(u) = z}`, `g ≈ e^ε + 1` |
//! | RAPPOR | bit vector             | set bits                        |
//! | OUE    | bit vector             | set bits                        |
//! | SS     | subset of size ω       | the subset                      |
//! | THE    | noisy histogram        | `{u : z_u > θ}`                 |
//!
//! Probabilities are written as `1 / (1 + c·e^{-ε})` rather than
//! `e^ε / (e^ε + c)` so that very large ε saturates to 1 instead of NaN.

use std::fmt;
use std::str::FromStr;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("epsilon must be > 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("domain size must be at least 2, got {0}")]
    DomainTooSmall(usize),
    #[error("value {v} outside domain [0, {k})")]
    ValueOutOfRange { v: usize, k: usize },
    #[error("THE threshold must lie in (0.5, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("{kind} has no enumerable output space")]
    UnsupportedKind { kind: MechanismKind },
    #[error("output space of {kind} with k={k} is too large to enumerate")]
    NotEnumerable { kind: MechanismKind, k: usize },
    #[error("unknown mechanism `{0}`")]
    UnknownKind(String),
    #[error("malformed report: {0}")]
    MalformedReport(String),
}

type Result<T> = std::result::Result<T, MechanismError>;

/// The seven supported frequency oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MechanismKind {
    Grr,
    Blh,
    Olh,
    Rappor,
    Oue,
    Ss,
    The,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 7] = [
        MechanismKind::Grr,
        MechanismKind::Blh,
        MechanismKind::Olh,
        MechanismKind::Rappor,
        MechanismKind::Oue,
        MechanismKind::Ss,
        MechanismKind::The,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Grr => "GRR",
            MechanismKind::Blh => "BLH",
            MechanismKind::Olh => "OLH",
            MechanismKind::Rappor => "RAPPOR",
            MechanismKind::Oue => "OUE",
            MechanismKind::Ss => "SS",
            MechanismKind::The => "THE",
        }
    }

    /// Stable numeric id used for seed derivation.
    pub fn id(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = MechanismError;

    fn from_str(s: &str) -> Result<Self> {
        MechanismKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| MechanismError::UnknownKind(s.to_string()))
    }
}

impl TryFrom<String> for MechanismKind {
    type Error = MechanismError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MechanismKind> for String {
    fn from(k: MechanismKind) -> String {
        k.name().to_string()
    }
}

/// One member of the seeded hash family used by BLH and OLH.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashFunctionSpec {
    pub seed: u64,
    /// Output range size.
    pub g: u64,
}

impl HashFunctionSpec {
    /// `H_seed(v) ∈ [0, g)`.
    pub fn evaluate(&self, v: usize) -> u64 {
        let h = seed::mix(&[self.seed, v as u64]);
        // multiply-shift range reduction
        ((h as u128 * self.g as u128) >> 64) as u64
    }
}

/// Output of one client-side perturbation.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    /// GRR.
    Value(usize),
    /// BLH and OLH.
    Hash { hash: HashFunctionSpec, z: u64 },
    /// RAPPOR and OUE.
    Bits(Vec<bool>),
    /// SS; sorted ascending, no duplicates.
    Subset(Vec<usize>),
    /// THE.
    Histogram(Vec<f64>),
}

/// Minimum hash range cap for OLH; the effective cap is `max(k, 2^16)`.
pub const OLH_RANGE_CAP: u64 = 1 << 16;

/// Nearest integer, ties rounded up.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// OLH hash range `g = ⌊e^ε + 1⌉`, capped at `max(k, 2^16)`.
pub fn olh_range(k: usize, eps: f64) -> u64 {
    let cap = (k as u64).max(OLH_RANGE_CAP);
    let g = round_half_up(eps.exp() + 1.0);
    if g.is_finite() && g < cap as f64 {
        g as u64
    } else {
        cap
    }
}

/// SS subset size `ω = ⌊k / (e^ε + 1)⌉`, clamped to `[1, k-1]`.
pub fn ss_subset_size(k: usize, eps: f64) -> usize {
    let omega = round_half_up(k as f64 / (eps.exp() + 1.0));
    (omega as usize).clamp(1, k - 1)
}

/// `1 / (1 + c·e^{-ε})`, i.e. `e^ε / (e^ε + c)`.
fn keep_probability(eps: f64, c: f64) -> f64 {
    1.0 / (1.0 + c * (-eps).exp())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 {
        Ok(())
    } else {
        Err(MechanismError::InvalidEpsilon(eps))
    }
}

fn check_domain(k: usize) -> Result<()> {
    if k >= 2 {
        Ok(())
    } else {
        Err(MechanismError::DomainTooSmall(k))
    }
}

/// Laplace(0, scale) by inverse CDF from one uniform draw in (0, 1).
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    let c = u - 0.5;
    -scale * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// Uniform draw from `[0, n)` excluding `skip`.
fn uniform_except<R: Rng + ?Sized>(n: u64, skip: u64, rng: &mut R) -> u64 {
    let r = rng.random_range(0..n - 1);
    if r >= skip {
        r + 1
    } else {
        r
    }
}

/// Precomputed per-(kind, k, ε) parameters. Build once per attribute and
/// reuse for every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    kind: MechanismKind,
    k: usize,
    eps: f64,
    params: Params,
}

#[derive(Debug, Clone, PartialEq)]
enum Params {
    Grr { p: f64 },
    Hash { g: u64, p: f64 },
    Unary { p: f64, q: f64 },
    Subset { omega: usize, p: f64 },
    Histogram { scale: f64, theta: f64 },
}

impl Mechanism {
    pub fn new(kind: MechanismKind, k: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        check_domain(k)?;
        let params = match kind {
            MechanismKind::Grr => Params::Grr {
                p: keep_probability(eps, (k - 1) as f64),
            },
            MechanismKind::Blh => Params::Hash {
                g: 2,
                p: keep_probability(eps, 1.0),
            },
            MechanismKind::Olh => {
                let g = olh_range(k, eps);
                Params::Hash {
                    g,
                    p: keep_probability(eps, (g - 1) as f64),
                }
            }
            MechanismKind::Rappor => {
                let p = keep_probability(eps / 2.0, 1.0);
                Params::Unary { p, q: 1.0 - p }
            }
            MechanismKind::Oue => Params::Unary {
                p: 0.5,
                q: 1.0 / (eps.exp() + 1.0),
            },
            MechanismKind::Ss => {
                let omega = ss_subset_size(k, eps);
                let p = omega as f64 / (omega as f64 + (k - omega) as f64 * (-eps).exp());
                Params::Subset { omega, p }
            }
            MechanismKind::The => Params::Histogram {
                scale: 2.0 / eps,
                theta: optimize_theta(eps)?,
            },
        };
        Ok(Mechanism {
            kind,
            k,
            eps,
            params,
        })
    }

    pub fn kind(&self) -> MechanismKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    /// THE threshold; `None` for other kinds.
    pub fn theta(&self) -> Option<f64> {
        match self.params {
            Params::Histogram { theta, .. } => Some(theta),
            _ => None,
        }
    }

    /// SS subset size; `None` for other kinds.
    pub fn omega(&self) -> Option<usize> {
        match self.params {
            Params::Subset { omega, .. } => Some(omega),
            _ => None,
        }
    }

    /// Hash range for BLH/OLH.
    pub fn hash_range(&self) -> Option<u64> {
        match self.params {
            Params::Hash { g, .. } => Some(g),
            _ => None,
        }
    }

    pub fn perturb<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> Result<Report> {
        let k = self.k;
        if v >= k {
            return Err(MechanismError::ValueOutOfRange { v, k });
        }
        let report = match self.params {
            Params::Grr { p } => {
                if rng.random_bool(p) {
                    Report::Value(v)
                } else {
                    Report::Value(uniform_except(k as u64, v as u64, rng) as usize)
                }
            }
            Params::Hash { g, p } => {
                let hash = HashFunctionSpec {
                    seed: rng.random(),
                    g,
                };
                let b = hash.evaluate(v);
                let z = if rng.random_bool(p) {
                    b
                } else {
                    uniform_except(g, b, rng)
                };
                Report::Hash { hash, z }
            }
            Params::Unary { p, q } => Report::Bits(
                (0..k)
                    .map(|i| rng.random_bool(if i == v { p } else { q }))
                    .collect(),
            ),
            Params::Subset { omega, p } => {
                let include = rng.random_bool(p);
                let draws = if include { omega - 1 } else { omega };
                let mut subset: Vec<usize> = rand::seq::index::sample(rng, k - 1, draws)
                    .into_iter()
                    .map(|i| if i >= v { i + 1 } else { i })
                    .collect();
                if include {
                    subset.push(v);
                }
                subset.sort_unstable();
                Report::Subset(subset)
            }
            Params::Histogram { scale, .. } => Report::Histogram(
                (0..k)
                    .map(|i| f64::from(u8::from(i == v)) + sample_laplace(scale, rng))
                    .collect(),
            ),
        };
        Ok(report)
    }

    /// Support set of a report produced by this mechanism.
    pub fn support(&self, report: &Report) -> Result<Vec<usize>> {
        support(report, self.k, self.theta())
    }
}

pub fn grr_perturb<R: Rng + ?Sized>(v: usize, k: usize, eps: f64, rng: &mut R) -> Result<Report> {
    Mechanism::new(MechanismKind::Grr, k, eps)?.perturb(v, rng)
}

pub fn blh_perturb<R: Rng + ?Sized>(v: usize, k: usize, eps: f64, rng: &mut R) -> Result<Report> {
    Mechanism::new(MechanismKind::Blh, k, eps)?.perturb(v, rng)
}

pub fn olh_perturb<R: Rng + ?Sized>(v: usize, k: usize, eps: f64, rng: &mut R) -> Result<Report> {
    Mechanism::new(MechanismKind::Olh, k, eps)?.perturb(v, rng)
}

pub fn rappor_perturb<R: Rng + ?Sized>(
    v: usize,
    k: usize,
    eps: f64,
    rng: &mut R,
) -> Result<Report> {
    Mechanism::new(MechanismKind::Rappor, k, eps)?.perturb(v, rng)
}

pub fn oue_perturb<R: Rng + ?Sized>(v: usize, k: usize, eps: f64, rng: &mut R) -> Result<Report> {
    Mechanism::new(MechanismKind::Oue, k, eps)?.perturb(v, rng)
}

pub fn ss_perturb<R: Rng + ?Sized>(v: usize, k: usize, eps: f64, rng: &mut R) -> Result<Report> {
    Mechanism::new(MechanismKind::Ss, k, eps)?.perturb(v, rng)
}

/// One-hot of `v` plus Laplace(2/ε) noise per coordinate. Does not compute
/// the threshold, so ε = ∞ is accepted.
pub fn the_perturb<R: Rng + ?Sized>(v: usize, k: usize, eps: f64, rng: &mut R) -> Result<Report> {
    check_eps(eps)?;
    check_domain(k)?;
    if v >= k {
        return Err(MechanismError::ValueOutOfRange { v, k });
    }
    let scale = 2.0 / eps;
    Ok(Report::Histogram(
        (0..k)
            .map(|i| f64::from(u8::from(i == v)) + sample_laplace(scale, rng))
            .collect(),
    ))
}

/// `{u ∈ [0, k) : H(u) = z}`.
pub fn lh_support(hash: &HashFunctionSpec, z: u64, k: usize) -> Vec<usize> {
    (0..k).filter(|&u| hash.evaluate(u) == z).collect()
}

/// Coordinates strictly above `theta`.
pub fn the_support(histogram: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.5 && theta < 1.0) {
        return Err(MechanismError::InvalidThreshold(theta));
    }
    Ok(histogram
        .iter()
        .enumerate()
        .filter(|(_, &z)| z > theta)
        .map(|(i, _)| i)
        .collect())
}

/// Support set of any report over a domain of size `k`. `theta` is required
/// for histograms and ignored otherwise.
pub fn support(report: &Report, k: usize, theta: Option<f64>) -> Result<Vec<usize>> {
    match report {
        Report::Value(z) if *z < k => Ok(vec![*z]),
        Report::Value(z) => Err(MechanismError::MalformedReport(format!(
            "value {z} outside domain of size {k}"
        ))),
        Report::Hash { hash, z } if *z < hash.g => Ok(lh_support(hash, *z, k)),
        Report::Hash { hash, z } => Err(MechanismError::MalformedReport(format!(
            "hash output {z} outside range {}",
            hash.g
        ))),
        Report::Bits(bits) if bits.len() == k => Ok(bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()),
        Report::Subset(items) if items.iter().all(|&i| i < k) => Ok(items.clone()),
        Report::Histogram(h) if h.len() == k => match theta {
            Some(t) => the_support(h, t),
            None => Err(MechanismError::MalformedReport(
                "histogram report needs a threshold".into(),
            )),
        },
        other => Err(MechanismError::MalformedReport(format!(
            "{other:?} inconsistent with domain size {k}"
        ))),
    }
}

/// Variance objective of thresholded histogram encoding at threshold `theta`.
///
/// Algebraically equal to
/// `(2e^{εθ/2} − 1) / (1 + e^{ε(θ−1/2)} − 2e^{εθ/2})²`, rescaled by `e^{-εθ}`
/// so every exponent is non-positive on `(0.5, 1)`.
pub fn the_objective(theta: f64, eps: f64) -> f64 {
    let a = (-eps * theta / 2.0).exp();
    let b = (eps * (theta - 1.0) / 2.0).exp();
    let denom = a + b - 2.0;
    (2.0 * a - a * a) / (denom * denom)
}

const THETA_LO: f64 = 0.5;
const THETA_HI: f64 = 1.0;

/// Minimizer of [`the_objective`] over the open interval `(0.5, 1)`.
///
/// A coarse scan brackets the minimum, then golden-section search narrows
/// the bracket to ~1e-12.
pub fn optimize_theta(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    const COARSE: usize = 256;
    let step = (THETA_HI - THETA_LO) / COARSE as f64;
    let grid = |i: usize| THETA_LO + step * i as f64;
    let best = (1..COARSE)
        .min_by(|&i, &j| the_objective(grid(i), eps).total_cmp(&the_objective(grid(j), eps)))
        .expect("non-empty grid");
    let (mut lo, mut hi) = (grid(best - 1), grid(best + 1));

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (the_objective(x1, eps), the_objective(x2, eps));
    while hi - lo > 1e-12 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = the_objective(x1, eps);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = the_objective(x2, eps);
        }
    }
    let theta = (lo + hi) / 2.0;
    Ok(theta.clamp(THETA_LO + 1e-12, THETA_HI - 1e-12))
}

/// Exact output distribution of a mechanism with an enumerable output space.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub mechanism: MechanismKind,
    pub epsilon: f64,
    pub k: usize,
    /// Output labels, one per column: the bitmask of each output's support
    /// set over the domain.
    pub outputs: Vec<u64>,
    /// `entries[v][j] = Pr[M(v) = outputs[j]]`.
    pub entries: Vec<Vec<f64>>,
}

impl ChannelMatrix {
    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.iter().map(|r| r.iter().sum()).collect()
    }

    /// `max_{z, v1, v2} Pr[z | v1] / Pr[z | v2]`. Infinite if some output is
    /// reachable from one input and impossible from another.
    pub fn max_ratio(&self) -> f64 {
        let mut worst: f64 = 1.0;
        for j in 0..self.outputs.len() {
            let column = self.entries.iter().map(|r| r[j]);
            let hi = column.clone().fold(f64::NEG_INFINITY, f64::max);
            let lo = column.fold(f64::INFINITY, f64::min);
            if hi > 0.0 {
                worst = worst.max(if lo > 0.0 { hi / lo } else { f64::INFINITY });
            }
        }
        worst
    }

    /// Whether the channel is ε-LDP up to a relative slack.
    pub fn satisfies_ldp(&self, eps: f64, rel_tol: f64) -> bool {
        self.max_ratio() <= eps.exp() * (1.0 + rel_tol)
    }
}

/// Largest domain for which bit-vector output spaces are enumerated.
pub const MAX_ENUMERABLE_K: usize = 12;

/// Builds the exact channel matrix for GRR, RAPPOR, OUE or SS.
pub fn channel_matrix(kind: MechanismKind, k: usize, eps: f64) -> Result<ChannelMatrix> {
    if matches!(
        kind,
        MechanismKind::Blh | MechanismKind::Olh | MechanismKind::The
    ) {
        return Err(MechanismError::UnsupportedKind { kind });
    }
    let mech = Mechanism::new(kind, k, eps)?;
    let (outputs, entries) = match mech.params {
        Params::Grr { p } => {
            if k > 64 {
                return Err(MechanismError::NotEnumerable { kind, k });
            }
            let q = (1.0 - p) / (k - 1) as f64;
            let outputs = (0..k).map(|z| 1u64 << z).collect();
            let entries = (0..k)
                .map(|v| (0..k).map(|z| if z == v { p } else { q }).collect())
                .collect();
            (outputs, entries)
        }
        Params::Unary { p, q } => {
            if k > MAX_ENUMERABLE_K {
                return Err(MechanismError::NotEnumerable { kind, k });
            }
            let outputs: Vec<u64> = (0..1u64 << k).collect();
            let entries = (0..k)
                .map(|v| {
                    outputs
                        .iter()
                        .map(|&mask| {
                            (0..k)
                                .map(|i| {
                                    let on = if i == v { p } else { q };
                                    if mask >> i & 1 == 1 {
                                        on
                                    } else {
                                        1.0 - on
                                    }
                                })
                                .product()
                        })
                        .collect()
                })
                .collect();
            (outputs, entries)
        }
        Params::Subset { omega, p } => {
            if k > 2 * MAX_ENUMERABLE_K {
                return Err(MechanismError::NotEnumerable { kind, k });
            }
            let outputs: Vec<u64> = (0..1u64 << k)
                .filter(|m| m.count_ones() as usize == omega)
                .collect();
            let with_v = binomial(k - 1, omega - 1);
            let without_v = binomial(k - 1, omega);
            let entries = (0..k)
                .map(|v| {
                    outputs
                        .iter()
                        .map(|&mask| {
                            if mask >> v & 1 == 1 {
                                p / with_v
                            } else {
                                (1.0 - p) / without_v
                            }
                        })
                        .collect()
                })
                .collect();
            (outputs, entries)
        }
        Params::Hash { .. } | Params::Histogram { .. } => unreachable!("rejected above"),
    };
    Ok(ChannelMatrix {
        mechanism: kind,
        epsilon: eps,
        k,
        outputs,
        entries,
    })
}

fn binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in MechanismKind::ALL {
            assert_eq!(kind.name().parse::<MechanismKind>().unwrap(), kind);
        }
        assert_eq!(
            "rappor".parse::<MechanismKind>().unwrap(),
            MechanismKind::Rappor
        );
        assert!("HE".parse::<MechanismKind>().is_err());
    }

    #[test]
    fn grr_probability_at_ln3_binary() {
        let m = Mechanism::new(MechanismKind::Grr, 2, 3f64.ln()).unwrap();
        let Params::Grr { p } = m.params else {
            unreachable!()
        };
        assert!((p - 0.75).abs() < 1e-12);
    }

    #[test]
    fn grr_tends_to_uniform_as_eps_vanishes() {
        let m = Mechanism::new(MechanismKind::Grr, 5, 1e-12).unwrap();
        let Params::Grr { p } = m.params else {
            unreachable!()
        };
        assert!((p - 0.2).abs() < 1e-9);
    }

    #[test]
    fn zero_and_negative_epsilon_rejected() {
        for kind in MechanismKind::ALL {
            assert_eq!(
                Mechanism::new(kind, 3, 0.0),
                Err(MechanismError::InvalidEpsilon(0.0))
            );
            assert!(Mechanism::new(kind, 3, -1.0).is_err());
            assert!(Mechanism::new(kind, 3, f64::NAN).is_err());
        }
    }

    #[test]
    fn tiny_domain_rejected() {
        assert_eq!(
            grr_perturb(0, 1, 1.0, &mut rng(0)),
            Err(MechanismError::DomainTooSmall(1))
        );
    }

    #[test]
    fn value_out_of_range_rejected() {
        assert!(matches!(
            ss_perturb(4, 4, 1.0, &mut rng(0)),
            Err(MechanismError::ValueOutOfRange { v: 4, k: 4 })
        ));
    }

    #[test]
    fn olh_range_at_ln3_and_cap() {
        assert_eq!(olh_range(10, 3f64.ln()), 4);
        assert_eq!(olh_range(10, 50.0), OLH_RANGE_CAP);
        assert_eq!(olh_range(100_000, 50.0), 100_000);
        let m = Mechanism::new(MechanismKind::Olh, 10, 3f64.ln()).unwrap();
        let Params::Hash { g, p } = m.params else {
            unreachable!()
        };
        assert_eq!(g, 4);
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn blh_forced_keep_reports_hash_bit() {
        // a generator that always yields zero makes random_bool(p) succeed
        // for any p > 0 and draws the seed 0
        struct Zero;
        impl rand::RngCore for Zero {
            fn next_u32(&mut self) -> u32 {
                0
            }
            fn next_u64(&mut self) -> u64 {
                0
            }
            fn fill_bytes(&mut self, dst: &mut [u8]) {
                dst.fill(0)
            }
        }
        let h = HashFunctionSpec { seed: 0, g: 2 };
        let v = (0..64).find(|&v| h.evaluate(v) == 1).unwrap();
        let r = blh_perturb(v, 64, 1.0, &mut Zero).unwrap();
        assert_eq!(r, Report::Hash { hash: h, z: 1 });
    }

    #[test]
    fn rappor_parameters_at_2ln3() {
        let m = Mechanism::new(MechanismKind::Rappor, 4, 2.0 * 3f64.ln()).unwrap();
        let Params::Unary { p, q } = m.params else {
            unreachable!()
        };
        assert!((p - 0.75).abs() < 1e-12 && (q - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rappor_infinite_eps_is_identity() {
        let r = rappor_perturb(2, 5, f64::INFINITY, &mut rng(3)).unwrap();
        assert_eq!(r, Report::Bits(vec![false, false, true, false, false]));
    }

    #[test]
    fn oue_parameters() {
        let m = Mechanism::new(MechanismKind::Oue, 4, 3f64.ln()).unwrap();
        let Params::Unary { p, q } = m.params else {
            unreachable!()
        };
        assert_eq!(p, 0.5);
        assert!((q - 0.25).abs() < 1e-12);
    }

    #[test]
    fn ss_parameters() {
        assert_eq!(ss_subset_size(2, 3f64.ln()), 1);
        assert_eq!(ss_subset_size(10, 3f64.ln()), 3);
        assert_eq!(ss_subset_size(10, 50.0), 1);
        assert_eq!(ss_subset_size(10, 1e-9), 5);
        assert_eq!(ss_subset_size(3, 1e-20), 2);
        let m = Mechanism::new(MechanismKind::Ss, 10, 3f64.ln()).unwrap();
        let Params::Subset { omega, p } = m.params else {
            unreachable!()
        };
        assert_eq!(omega, 3);
        assert!((p - 9.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn round_half_up_ties() {
        assert_eq!(round_half_up(2.5), 3.0);
        assert_eq!(round_half_up(2.4999), 2.0);
        assert_eq!(round_half_up(0.5), 1.0);
    }

    #[test]
    fn the_infinite_eps_is_exact_one_hot() {
        let r = the_perturb(1, 3, f64::INFINITY, &mut rng(9)).unwrap();
        assert_eq!(r, Report::Histogram(vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn the_support_cases() {
        assert_eq!(the_support(&[0.0, 1.0, 0.0], 0.7).unwrap(), vec![1]);
        assert!(the_support(&[0.1, 0.2, 0.6], 0.7).unwrap().is_empty());
        assert_eq!(
            the_support(&[1.0], 0.5),
            Err(MechanismError::InvalidThreshold(0.5))
        );
        assert!(the_support(&[1.0], 1.0).is_err());
    }

    #[test]
    fn lh_support_singleton_domain() {
        let h = HashFunctionSpec { seed: 77, g: 2 };
        assert_eq!(lh_support(&h, h.evaluate(0), 1), vec![0]);
    }

    #[test]
    fn support_rejects_inconsistent_reports() {
        assert!(support(&Report::Value(3), 3, None).is_err());
        assert!(support(&Report::Bits(vec![true]), 3, None).is_err());
        assert!(support(&Report::Subset(vec![5]), 3, None).is_err());
        assert!(support(&Report::Histogram(vec![1.0, 0.0, 0.0]), 3, None).is_err());
        let h = HashFunctionSpec { seed: 1, g: 2 };
        assert!(support(&Report::Hash { hash: h, z: 2 }, 3, None).is_err());
    }

    #[test]
    fn theta_stays_inside_open_interval() {
        for eps in [1e-3, 0.25, 1.0, 8.0, 50.0, 500.0] {
            let t = optimize_theta(eps).unwrap();
            assert!(t > 0.5 && t < 1.0, "eps={eps} theta={t}");
        }
        assert!(optimize_theta(0.0).is_err());
    }

    #[test]
    fn channel_grr_k3_ln2() {
        let m = channel_matrix(MechanismKind::Grr, 3, 2f64.ln()).unwrap();
        assert_eq!(m.entries[0].len(), 3);
        for (v, row) in m.entries.iter().enumerate() {
            for (z, &x) in row.iter().enumerate() {
                let want = if z == v { 0.5 } else { 0.25 };
                assert!((x - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_oue_k2_is_normalized() {
        let m = channel_matrix(MechanismKind::Oue, 2, 3f64.ln()).unwrap();
        assert_eq!(m.outputs.len(), 4);
        for s in m.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_rejects_hash_and_histogram_kinds() {
        for kind in [MechanismKind::Blh, MechanismKind::Olh, MechanismKind::The] {
            assert_eq!(
                channel_matrix(kind, 3, 1.0),
                Err(MechanismError::UnsupportedKind { kind })
            );
        }
        assert!(matches!(
            channel_matrix(MechanismKind::Rappor, 13, 1.0),
            Err(MechanismError::NotEnumerable { .. })
        ));
    }

    #[test]
    fn max_ratio_flags_impossible_outputs() {
        let m = ChannelMatrix {
            mechanism: MechanismKind::Grr,
            epsilon: 1.0,
            k: 2,
            outputs: vec![0, 1],
            entries: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
        };
        assert!(m.max_ratio().is_infinite());
    }
}
