use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use ldpfair::harness::{self, ExperimentConfig};
use ldpfair::mechanisms::optimize_theta;
use ldpfair::schema::{self, Role};
use ldpfair::synthetic::{self, SyntheticConfig};

/// LDP pre-processing, fairness and utility experiments on categorical data.
#[derive(Debug, Parser)]
#[command(name = "ldpfair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment sweep and write the result CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write one ε-by-series table per metric.
        #[arg(long)]
        plot_data: bool,
    },
    /// Load the config, schema and dataset and report what would run.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the optimized THE threshold for a privacy budget.
    Theta {
        #[arg(long, allow_hyphen_values = true)]
        epsilon: f64,
    },
    /// Write the synthetic dataset and its schema.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
        #[arg(long, default_value_t = 2023)]
        seed: u64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            jobs,
            plot_data,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let (data, report) = cfg.load_dataset()?;
            eprintln!(
                "loaded {} rows ({} dropped), {} models to train",
                report.kept,
                report.dropped,
                cfg.expected_rows()
            );
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = jobs {
                if n == 0 {
                    bail!("--jobs must be at least 1");
                }
                pool = pool.num_threads(n);
            }
            let pool = pool.build().context("cannot start worker pool")?;
            let rows = pool.install(|| harness::run_on_dataset(&cfg, &data))?;
            let dir = out.unwrap_or(cfg.output.clone());
            for path in harness::write_outputs(&rows, &dir, plot_data)? {
                println!("{}", path.display());
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let (data, report) = cfg.load_dataset()?;
            let schema = data.schema();
            cfg.validate(schema)?;
            println!(
                "dataset: {} rows kept, {} dropped",
                report.kept, report.dropped
            );
            for (i, attr) in schema.attributes().iter().enumerate() {
                let role = match schema.role(i) {
                    Role::Sensitive if i == schema.protected() => "sensitive, protected",
                    Role::Sensitive => "sensitive",
                    Role::NonSensitive => "non-sensitive",
                    Role::Target => "target",
                };
                println!("  {} (k={}, {role})", attr.name, attr.k());
            }
            let protected = schema.attribute(schema.protected());
            let target = schema.attribute(schema.target());
            println!(
                "privileged: {}={}, positive label: {}={}",
                protected.name,
                protected.values[schema.privileged_value()],
                target.name,
                target.values[schema.positive_label()]
            );
            println!(
                "{} runs x (1 + {} mechanisms x {} allocations x {} epsilons) = {} rows",
                cfg.runs,
                cfg.mechanisms.len(),
                cfg.allocations.len(),
                cfg.epsilons.len(),
                cfg.expected_rows()
            );
        }
        Command::Theta { epsilon } => {
            let theta = optimize_theta(epsilon)?;
            println!("{theta}");
        }
        Command::Synth { out, rows, seed } => {
            let cfg = SyntheticConfig {
                n: rows,
                seed,
                ..Default::default()
            };
            let (schema_cfg, data) = synthetic::generate(&cfg)?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            let csv = out.join("synthetic.csv");
            let toml = out.join("synthetic_schema.toml");
            schema::write_csv(&data, &csv)?;
            std::fs::write(&toml, schema_cfg.to_toml())
                .with_context(|| format!("cannot write {}", toml.display()))?;
            println!("{}\n{}", csv.display(), toml.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
