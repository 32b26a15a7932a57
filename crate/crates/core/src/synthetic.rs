//! Synthetic census-like dataset with an induced group bias.
//!
//! The label depends directly on the protected attribute (`gender`) and on
//! several other attributes, one of which (`occupation`) is a mild proxy for
//! gender. Used as a licensing-free fixture for tests and demos.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::schema::{AttributeConfig, Dataset, SchemaConfig, SchemaError};
use crate::seed;

/// Sensitive attributes of the default configuration.
pub const DEFAULT_SENSITIVE: [&str; 4] = ["gender", "race", "age", "region"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub seed: u64,
    /// Log-odds added to the label for the privileged group.
    pub label_bias: f64,
    /// Names of attributes marked sensitive. Must include `gender`.
    pub sensitive: Vec<String>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 10_000,
            seed: 2023,
            label_bias: 1.2,
            sensitive: DEFAULT_SENSITIVE.iter().map(|s| s.to_string()).collect(),
        }
    }
}

struct Attr {
    name: &'static str,
    values: &'static [&'static str],
}

const ATTRS: [Attr; 9] = [
    Attr {
        name: "gender",
        values: &["Female", "Male"],
    },
    Attr {
        name: "race",
        values: &["A", "B", "C", "D"],
    },
    Attr {
        name: "age",
        values: &["18-24", "25-34", "35-44", "45-54", "55-64", "65+"],
    },
    Attr {
        name: "region",
        values: &["north", "south", "east", "west", "central"],
    },
    Attr {
        name: "education",
        values: &["primary", "secondary", "vocational", "bachelor", "graduate"],
    },
    Attr {
        name: "occupation",
        values: &[
            "service",
            "clerical",
            "craft",
            "sales",
            "technical",
            "managerial",
        ],
    },
    Attr {
        name: "hours",
        values: &["part-time", "full-time", "overtime"],
    },
    Attr {
        name: "marital",
        values: &["single", "married", "other"],
    },
    Attr {
        name: "income",
        values: &["low", "high"],
    },
];

/// Schema of the generated data.
pub fn schema_config(cfg: &SyntheticConfig) -> SchemaConfig {
    SchemaConfig {
        protected: "gender".into(),
        target: "income".into(),
        privileged_value: "Male".into(),
        positive_label: "high".into(),
        attributes: ATTRS
            .iter()
            .map(|a| AttributeConfig {
                name: a.name.into(),
                values: Some(a.values.iter().map(|v| v.to_string()).collect()),
                sensitive: cfg.sensitive.iter().any(|s| s == a.name),
            })
            .collect(),
    }
}

fn draw(weights: &[f64], rng: &mut impl Rng) -> u32 {
    WeightedIndex::new(weights)
        .expect("static weights")
        .sample(rng) as u32
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn generate(cfg: &SyntheticConfig) -> Result<(SchemaConfig, Dataset), SchemaError> {
    let config = schema_config(cfg);
    let schema = Arc::new(config.to_schema()?);
    let mut rng = seed::rng_for(&[cfg.seed, 0x5EED]);

    let education_effect = [-1.2, -0.4, 0.0, 0.8, 1.4];
    let occupation_effect = [-0.9, -0.3, 0.0, 0.2, 0.7, 1.1];
    let age_effect = [-1.5, -0.3, 0.4, 0.6, 0.3, -0.4];
    let hours_effect = [-1.0, 0.0, 0.5];
    let marital_effect = [-0.3, 0.5, -0.1];
    let race_effect = [0.2, -0.2, 0.0, -0.1];

    let rows = (0..cfg.n)
        .map(|_| {
            let male = rng.random_bool(0.6);
            let gender = u32::from(male);
            let race = draw(&[0.6, 0.2, 0.12, 0.08], &mut rng);
            let age = draw(&[0.14, 0.22, 0.22, 0.18, 0.14, 0.10], &mut rng);
            let region = draw(&[0.2, 0.25, 0.2, 0.2, 0.15], &mut rng);
            let education = draw(&[0.1, 0.35, 0.2, 0.25, 0.1], &mut rng);
            let occupation = if male {
                draw(&[0.12, 0.12, 0.22, 0.16, 0.2, 0.18], &mut rng)
            } else {
                draw(&[0.22, 0.24, 0.08, 0.18, 0.16, 0.12], &mut rng)
            };
            let hours = if male {
                draw(&[0.12, 0.6, 0.28], &mut rng)
            } else {
                draw(&[0.25, 0.6, 0.15], &mut rng)
            };
            let marital = draw(&[0.35, 0.5, 0.15], &mut rng);
            let logit = -1.6
                + cfg.label_bias * f64::from(gender)
                + race_effect[race as usize]
                + age_effect[age as usize]
                + education_effect[education as usize]
                + occupation_effect[occupation as usize]
                + hours_effect[hours as usize]
                + marital_effect[marital as usize];
            let income = u32::from(rng.random_bool(logistic(logit)));
            vec![
                gender, race, age, region, education, occupation, hours, marital, income,
            ]
        })
        .collect();
    Ok((config, Dataset::new(schema, rows)?))
}
