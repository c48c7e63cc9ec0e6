//! `radgen`: prepare data, train, generate and evaluate report models.
//!
//! Exit status: 0 on success, 2 for usage and configuration errors, 3 for
//! missing, malformed or corrupt data, 4 for numeric failures such as a
//! non-finite training loss. Anything else exits with 1.

mod commands;
mod config;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use radgen_core::demographics::DemographicFields;
use radgen_core::ErrorClass;

use commands::{GenerateArgs, SplitName};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "radgen",
    version,
    about = "Report generation from image features and patient demographics"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration. Keys: seed, [data], [synth], [model],
    /// [train], [generate], [evaluate]; see the README.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set model.d_model=64`.
    /// Applied after the file, in order; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for every seeded step of this command (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus in the dataset format.
    SynthData {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Examples generated per demographic stratum.
        #[arg(long)]
        examples_per_stratum: Option<usize>,
    },
    /// Clean raw records and write the vocabulary, encoder and splits.
    PrepareData {
        /// Dataset directory (with records.jsonl) or a records file.
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of disjoint subsets.
        #[arg(long)]
        subsets: Option<usize>,
        /// Data points per subset.
        #[arg(long)]
        subset_size: Option<usize>,
    },
    /// Train a model on one subset of a prepared dataset.
    Train {
        /// Prepared dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Subset index.
        #[arg(long, default_value_t = 0)]
        subset: usize,
        /// Demographic fields fed to the model: any of gender, age,
        /// ethnicity (comma separated). Empty or `none` trains the
        /// features-only baseline.
        #[arg(long, default_value = "")]
        demographics: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Maximum training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Adam learning rate.
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Examples per optimization step.
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Generate reports, one per line, for a split of a prepared dataset.
    Generate {
        /// Directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Prepared dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Subset index; defaults to the one the model was trained on.
        #[arg(long)]
        subset: Option<usize>,
        /// Split whose data points are described.
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        /// Output file for generated reports.
        #[arg(long)]
        out: PathBuf,
        /// Also write the reference reports, line-aligned with the output.
        #[arg(long)]
        references: Option<PathBuf>,
        /// Also write the data point ids, line-aligned with the output.
        #[arg(long)]
        ids: Option<PathBuf>,
        /// Sampling temperature; 0 is greedy.
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Score line-aligned hypotheses against references.
    Evaluate {
        /// Generated reports, one per line.
        #[arg(long)]
        hypotheses: PathBuf,
        /// Reference reports, line-aligned with the hypotheses.
        #[arg(long)]
        references: PathBuf,
        /// Token embedding table, `token v1 v2 ...` per line.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired t-tests between two models' per-subset evaluation reports.
    Compare {
        /// Evaluation reports of model A, one per subset.
        #[arg(long, num_args = 1.., required = true)]
        a: Vec<PathBuf>,
        /// Evaluation reports of model B, in the same subset order.
        #[arg(long, num_args = 1.., required = true)]
        b: Vec<PathBuf>,
        /// Significance level.
        #[arg(long)]
        alpha: Option<f64>,
        /// Write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn flag<T: std::fmt::Display>(overrides: &mut Vec<String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        overrides.push(format!("{key}={v}"));
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut overrides = cli.common.overrides.clone();
    flag(&mut overrides, "seed", cli.common.seed);
    match &cli.command {
        Command::SynthData {
            examples_per_stratum, ..
        } => flag(&mut overrides, "synth.examples_per_stratum", *examples_per_stratum),
        Command::PrepareData {
            subsets, subset_size, ..
        } => {
            flag(&mut overrides, "data.subsets", *subsets);
            flag(&mut overrides, "data.subset_size", *subset_size);
        }
        Command::Train {
            epochs,
            learning_rate,
            batch_size,
            ..
        } => {
            flag(&mut overrides, "train.epochs", *epochs);
            flag(&mut overrides, "train.learning_rate", *learning_rate);
            flag(&mut overrides, "train.batch_size", *batch_size);
        }
        Command::Generate { temperature, .. } => flag(&mut overrides, "generate.temperature", *temperature),
        Command::Evaluate { embeddings, .. } => flag(
            &mut overrides,
            "evaluate.embeddings",
            embeddings.as_ref().map(|p| format!("{:?}", p.display().to_string())),
        ),
        Command::Compare { alpha, .. } => flag(&mut overrides, "evaluate.alpha", *alpha),
    }
    let cfg = RunConfig::load(cli.common.config.as_deref(), &overrides)?;
    cfg.validate()?;

    match cli.command {
        Command::SynthData { out, .. } => commands::synth_data(&cfg, &out).context("synth-data")?,
        Command::PrepareData { input, out, .. } => {
            commands::prepare_data(&cfg, &input, &out).context("prepare-data")?
        }
        Command::Train {
            data,
            subset,
            demographics,
            out,
            ..
        } => {
            let fields = DemographicFields::parse(&demographics)?;
            commands::train(&cfg, &data, subset, fields, &out).context("train")?
        }
        Command::Generate {
            model,
            data,
            subset,
            split,
            out,
            references,
            ids,
            ..
        } => commands::generate(
            &cfg,
            &GenerateArgs {
                model: &model,
                data: &data,
                subset,
                split,
                out: &out,
                references: references.as_deref(),
                ids: ids.as_deref(),
            },
        )
        .context("generate")?,
        Command::Evaluate {
            hypotheses,
            references,
            out,
            ..
        } => commands::evaluate_files(&cfg, &hypotheses, &references, out.as_deref()).context("evaluate")?,
        Command::Compare { a, b, out, .. } => commands::compare(&cfg, &a, &b, out.as_deref()).context("compare")?,
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<radgen_core::Error>())
        .map_or(1, |e| match e.class() {
            ErrorClass::Usage => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
