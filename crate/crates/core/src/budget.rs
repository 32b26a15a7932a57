//! Splitting a global privacy budget across sensitive attributes.
//!
//! Each attribute is perturbed independently, so under sequential
//! composition the release is `Σ ε_j`-LDP. Both schemes make that sum equal
//! the requested ε.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::CategoricalDomain;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BudgetError {
    #[error("epsilon must be finite and > 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("no attributes to allocate budget to")]
    NoAttributes,
    #[error("attribute `{name}` has domain size {k}; at least 2 is required")]
    DomainTooSmall { name: String, k: usize },
    #[error("unknown allocation scheme `{0}` (expected \"uniform\" or \"k-based\")")]
    UnknownScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AllocationScheme {
    /// `ε_j = ε / d_s`.
    Uniform,
    /// `ε_j = ε · k_j / Σ k_i`.
    KBased,
}

impl AllocationScheme {
    pub const ALL: [AllocationScheme; 2] = [AllocationScheme::Uniform, AllocationScheme::KBased];

    pub fn name(self) -> &'static str {
        match self {
            AllocationScheme::Uniform => "uniform",
            AllocationScheme::KBased => "k-based",
        }
    }

    pub fn id(self) -> u64 {
        self as u64 + 1
    }

    pub fn allocate(
        self,
        eps: f64,
        attrs: &[CategoricalDomain],
    ) -> Result<PrivacyAllocation, BudgetError> {
        match self {
            AllocationScheme::Uniform => allocate_uniform(eps, attrs),
            AllocationScheme::KBased => allocate_kbased(eps, attrs),
        }
    }
}

impl fmt::Display for AllocationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AllocationScheme {
    type Err = BudgetError;

    fn from_str(s: &str) -> Result<Self, BudgetError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(AllocationScheme::Uniform),
            "k-based" | "kbased" | "k_based" => Ok(AllocationScheme::KBased),
            _ => Err(BudgetError::UnknownScheme(s.to_string())),
        }
    }
}

impl TryFrom<String> for AllocationScheme {
    type Error = BudgetError;

    fn try_from(s: String) -> Result<Self, BudgetError> {
        s.parse()
    }
}

impl From<AllocationScheme> for String {
    fn from(s: AllocationScheme) -> String {
        s.name().to_string()
    }
}

/// Per-attribute budgets summing to `total_epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyAllocation {
    pub scheme: AllocationScheme,
    pub total_epsilon: f64,
    pub per_attribute: Vec<(String, f64)>,
}

impl PrivacyAllocation {
    pub fn epsilon_for(&self, name: &str) -> Option<f64> {
        self.per_attribute
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, e)| e)
    }

    /// Total budget actually spent under sequential composition.
    pub fn composed_epsilon(&self) -> f64 {
        self.per_attribute.iter().map(|&(_, e)| e).sum()
    }
}

fn validate(eps: f64, attrs: &[CategoricalDomain]) -> Result<(), BudgetError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(BudgetError::InvalidEpsilon(eps));
    }
    if attrs.is_empty() {
        return Err(BudgetError::NoAttributes);
    }
    if let Some(a) = attrs.iter().find(|a| a.k() < 2) {
        return Err(BudgetError::DomainTooSmall {
            name: a.name.clone(),
            k: a.k(),
        });
    }
    Ok(())
}

pub fn allocate_uniform(
    eps: f64,
    attrs: &[CategoricalDomain],
) -> Result<PrivacyAllocation, BudgetError> {
    validate(eps, attrs)?;
    let share = eps / attrs.len() as f64;
    Ok(PrivacyAllocation {
        scheme: AllocationScheme::Uniform,
        total_epsilon: eps,
        per_attribute: attrs.iter().map(|a| (a.name.clone(), share)).collect(),
    })
}

pub fn allocate_kbased(
    eps: f64,
    attrs: &[CategoricalDomain],
) -> Result<PrivacyAllocation, BudgetError> {
    validate(eps, attrs)?;
    let total_k: usize = attrs.iter().map(CategoricalDomain::k).sum();
    Ok(PrivacyAllocation {
        scheme: AllocationScheme::KBased,
        total_epsilon: eps,
        per_attribute: attrs
            .iter()
            .map(|a| (a.name.clone(), eps * a.k() as f64 / total_k as f64))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domains(ks: &[usize]) -> Vec<CategoricalDomain> {
        ks.iter()
            .enumerate()
            .map(|(i, &k)| {
                CategoricalDomain::new(format!("a{i}"), (0..k).map(|v| v.to_string())).unwrap()
            })
            .collect()
    }

    #[test]
    fn uniform_quarters() {
        let a = allocate_uniform(1.0, &domains(&[2, 5, 41, 74])).unwrap();
        assert!(a.per_attribute.iter().all(|&(_, e)| e == 0.25));
        let a = allocate_uniform(8.0, &domains(&[2, 3, 4, 5])).unwrap();
        assert!(a.per_attribute.iter().all(|&(_, e)| e == 2.0));
        assert_eq!(a.composed_epsilon(), 8.0);
    }

    #[test]
    fn single_attribute_gets_everything() {
        for scheme in AllocationScheme::ALL {
            let a = scheme.allocate(3.5, &domains(&[7])).unwrap();
            assert_eq!(a.per_attribute, vec![("a0".to_string(), 3.5)]);
        }
    }

    #[test]
    fn kbased_lsac_sizes() {
        let a = allocate_kbased(4.0, &domains(&[2, 2, 5, 2])).unwrap();
        let want = [8.0 / 11.0, 8.0 / 11.0, 20.0 / 11.0, 8.0 / 11.0];
        for ((_, got), want) in a.per_attribute.iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(a.epsilon_for("a2"), Some(4.0 * 5.0 / 11.0));
    }

    #[test]
    fn errors() {
        assert_eq!(allocate_uniform(1.0, &[]), Err(BudgetError::NoAttributes));
        assert_eq!(
            allocate_kbased(0.0, &domains(&[2])),
            Err(BudgetError::InvalidEpsilon(0.0))
        );
        assert!(allocate_kbased(f64::INFINITY, &domains(&[2])).is_err());
    }

    #[test]
    fn scheme_names() {
        assert_eq!(
            "k-based".parse::<AllocationScheme>().unwrap(),
            AllocationScheme::KBased
        );
        assert_eq!(
            "Uniform".parse::<AllocationScheme>().unwrap(),
            AllocationScheme::Uniform
        );
        assert!("optimal".parse::<AllocationScheme>().is_err());
        assert_eq!(AllocationScheme::KBased.to_string(), "k-based");
    }
}
