//! Batch command-line surface for the quality-estimation pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use refless::corpus::{corpus_stats, load_corpus, load_system_table, QUALITY_NAMES};
use refless::error::Error;
use refless::eval::{read_report, render_table, CorrelationReport};
use refless::heads::{load_model, save_model, train, QeModel};
use refless::runner::{plot_gold_vs_predicted, run_experiment, write_predictions, ExperimentConfig};

#[derive(Parser)]
#[command(name = "refless", version, about = "Reference-free summary quality estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment protocol from a declarative config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the config's root seed.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Directory holding LM score caches referenced by adapter ids.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Generate the synthetic datasets of a config without running the
    /// experiment.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Validate a corpus file and print its shape.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Per-quality mean and standard deviation over per-system gold
    /// means.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train one model on a fully annotated corpus.
    Train {
        /// Experiment config providing the `[qe]` section.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grid index to train with (the grid is not tuned here).
        #[arg(long, default_value_t = 0)]
        grid_index: usize,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Predict q1..q5 for every record of a corpus with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge run reports into one table, bold-marking the best method
    /// per (dataset, quality, coefficient).
    Report {
        /// Run output directories (each holding report.jsonl).
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        /// Also write the merged line-record report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot gold vs predicted per-system means for selected qualities.
    Plot {
        /// Predicted system table (pred_systems.jsonl from a run).
        #[arg(long)]
        pred: PathBuf,
        /// Gold system table.
        #[arg(long)]
        gold: PathBuf,
        /// 1-based quality indices, e.g. 2,3.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 4, 5])]
        qualities: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) | Some(Error::Validation(_)) | Some(Error::Parse { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed_override,
            cache_dir,
            force,
        } => {
            let mut config = ExperimentConfig::from_path(&config)?;
            if let Some(dir) = &cache_dir {
                // Relative cache:<path> adapter ids resolve against the
                // cache directory.
                for adapter in [
                    &mut config.baselines.causal_adapter,
                    &mut config.baselines.masked_adapter,
                ]
                .into_iter()
                .flatten()
                {
                    if let Some(rest) = adapter.strip_prefix("cache:") {
                        if !rest.starts_with('/') {
                            *adapter = format!("cache:{}", dir.join(rest).display());
                        }
                    }
                }
            }
            let outcome = run_experiment(&config, &out, seed_override, force)?;
            println!(
                "completed: {} fold reports, merged report at {}",
                outcome.fold_report_paths.len(),
                outcome.report_path.display()
            );
            print!("{}", render_table(&outcome.merged_report));
            Ok(())
        }
        Command::Synth { config, out, force } => {
            let config = ExperimentConfig::from_path(&config)?;
            refless::runner::experiment::synthesize_only(&config, &out, force)?;
            println!("synthetic datasets written under {}", out.display());
            Ok(())
        }
        Command::Validate { corpus } => {
            let manifest = load_corpus(&corpus)?;
            println!(
                "ok: dataset '{}', {} records, {} topics, {} systems",
                manifest.dataset_id,
                manifest.records.len(),
                manifest.n_topics,
                manifest.n_systems
            );
            Ok(())
        }
        Command::Stats { corpus } => {
            let manifest = load_corpus(&corpus)?;
            let stats = corpus_stats(&manifest)?;
            println!(
                "dataset '{}' ({} systems): per-quality mean (std) over per-system means",
                stats.dataset_id, stats.n_systems
            );
            for (i, name) in QUALITY_NAMES.iter().enumerate() {
                println!(
                    "  q{} {:<22} {:.2} ({:.2})",
                    i + 1,
                    name,
                    stats.mean[i],
                    stats.std[i]
                );
            }
            Ok(())
        }
        Command::Train {
            config,
            corpus,
            out,
            grid_index,
            seed_override,
            force,
        } => {
            let config = ExperimentConfig::from_path(&config)?;
            let qe = config
                .qe
                .clone()
                .ok_or_else(|| Error::Config("config has no [qe] section".into()))?;
            let point = *qe.grid.get(grid_index).ok_or_else(|| {
                Error::Config(format!(
                    "grid index {grid_index} out of range ({} points)",
                    qe.grid.len()
                ))
            })?;
            if out.exists() && out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false)
                && !force
            {
                return Err(Error::Config(format!(
                    "output directory {} is not empty; pass --force",
                    out.display()
                ))
                .into());
            }
            let manifest = load_corpus(&corpus)?;
            let seed = seed_override.unwrap_or(config.seed);
            let mut model = refless::runner::experiment::standalone_model(&qe, &manifest, seed)?;
            let cfg = qe.training_config(point, seed);
            let log = train(&mut model, &manifest, &cfg)?;
            save_model(&mut model, &cfg, seed, &out)?;
            println!(
                "trained {} for {} epochs; final loss {:.6}; model saved to {}",
                model.flavor(),
                cfg.epochs,
                log.epoch_losses.last().unwrap(),
                out.display()
            );
            Ok(())
        }
        Command::Predict { model, corpus, out } => {
            let (model, _manifest): (QeModel, _) = load_model(&model)?;
            let manifest = load_corpus(&corpus)?;
            let mut predictions = std::collections::BTreeMap::new();
            for r in &manifest.records {
                predictions.insert(r.record_id.clone(), model.predict(&r.record_id, &r.text)?);
            }
            write_predictions(&manifest, &predictions, &out)?;
            println!(
                "wrote {} predictions to {}",
                predictions.len(),
                out.display()
            );
            Ok(())
        }
        Command::Report { runs, out } => {
            if runs.is_empty() {
                return Err(Error::Config("no run directories given".into()).into());
            }
            let mut reports = Vec::new();
            for dir in &runs {
                let path = dir.join("report.jsonl");
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "{} has no report.jsonl (incomplete run?)",
                        dir.display()
                    ))
                    .into());
                }
                reports.push(read_report(&path)?);
            }
            let merged = CorrelationReport::merge(&reports);
            if merged.entries.is_empty() {
                return Err(Error::Config("no completed runs with entries".into()).into());
            }
            if let Some(path) = out {
                refless::eval::write_report(&merged, &path)?;
            }
            print!("{}", render_table(&merged));
            Ok(())
        }
        Command::Plot {
            pred,
            gold,
            qualities,
            out,
        } => {
            let pred = load_system_table(&pred)?;
            let gold = load_system_table(&gold)?;
            std::fs::create_dir_all(&out)?;
            for q in &qualities {
                if !(1..=5).contains(q) {
                    return Err(Error::Config(format!("quality {q} outside 1..=5")).into());
                }
                let path = out.join(format!("q{q}.svg"));
                plot_gold_vs_predicted(&pred, &gold, q - 1, &path)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
