//! Command-line surface: dataset analysis, synthetic generation, training,
//! evaluation, and cross-dataset validation.
//!
//! Every subcommand writes its artifacts under `--out-dir` with fixed names
//! (report.json, confusion.csv, cdf.csv, runlog.json, ...) and exits 0 on
//! success. Failures print a machine-readable JSON object on stderr and
//! exit nonzero.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use affectkit_core::affect::LabelSpace;
use affectkit_core::analysis::{
    distribution_report, histogram_to_csv, scatter_points, scatter_to_csv,
};
use affectkit_core::data::synthetic::{gen_synthetic, SyntheticSpec};
use affectkit_core::data::{load_manifest, save_manifest, Split};
use affectkit_core::error::Error;
use affectkit_core::metrics::{cdf_to_csv, confusion_to_csv, EvalReport};
use affectkit_core::model::ModelCheckpoint;
use affectkit_core::train::{cross_validate, evaluate, train_with_data, TrainConfig};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "affectkit",
    about = "Multi-task affect inference toolkit: analysis, synthetic data, training, evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Compute dataset-distribution statistics for a manifest.
    Analyze {
        /// Manifest CSV path.
        manifest: PathBuf,
        /// Label space the manifest is declared in (affectnet8 | affectnet7 | emotic26).
        #[arg(long)]
        space: String,
        /// Split label recorded in the report.
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Stdout format for the report.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Number of equal-width bins for the value histograms.
        #[arg(long, default_value_t = 20)]
        bins: usize,
        /// Cap on samples exported to scatter.csv.
        #[arg(long, default_value_t = 2000)]
        scatter_count: usize,
    },
    /// Generate a synthetic dataset from a spec file (or the built-in preset).
    GenSynthetic {
        /// Synthetic spec JSON; omit with --preset to use a built-in.
        spec: Option<PathBuf>,
        /// Built-in preset name (currently: separable8).
        #[arg(long)]
        preset: Option<String>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train a model from a TrainConfig JSON file.
    Train {
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on a manifest in the checkpoint's label space.
    Evaluate {
        checkpoint: PathBuf,
        manifest: PathBuf,
        /// Label space of the manifest; defaults to the checkpoint's space.
        #[arg(long)]
        space: Option<String>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 3)]
        topk: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Evaluate a checkpoint on another dataset's manifest: targets are
    /// rescaled to [-1, 1] and only valence/arousal are compared.
    CrossValidate {
        checkpoint: PathBuf,
        manifest: PathBuf,
        /// Label space of the target manifest.
        #[arg(long)]
        space: String,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            let payload = serde_json::json!({
                "error": error.to_string(),
                "kind": error.kind(),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn ensure_out_dir(out_dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

fn emit_report(report: &EvalReport, out_dir: &Path, format: Format) -> Result<(), Error> {
    write_json(&out_dir.join("report.json"), report)?;
    if let Some(classification) = &report.classification {
        let space = LabelSpace::preset(&report.label_space)?;
        write_text(
            &out_dir.join("confusion.csv"),
            &confusion_to_csv(&classification.confusion, &space.categories),
        )?;
    }
    if let Some(cdf) = &report.cdf {
        write_text(&out_dir.join("cdf.csv"), &cdf_to_csv(cdf))?;
    }
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(report)?),
        Format::Csv => {
            println!("metric,value");
            if let Some(c) = &report.classification {
                println!("macro_precision,{}", c.precision);
                println!("macro_recall,{}", c.recall);
                println!("macro_f1,{}", c.f1);
                println!("micro_accuracy,{}", c.micro_accuracy);
            }
            if let Some((k, acc)) = &report.topk_accuracy {
                println!("top{k}_accuracy,{acc}");
            }
            if let Some(r) = &report.regression {
                for (dim, err) in &r.per_dim {
                    println!("rmse_{dim},{}", err.rmse);
                    println!("mae_{dim},{}", err.mae);
                    println!("mse_{dim},{}", err.mse);
                }
                println!("rmse_pooled,{}", r.pooled.rmse);
                for (dim, ccc) in &r.ccc_per_dim {
                    println!("ccc_{dim},{ccc}");
                }
            }
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Analyze {
            manifest,
            space,
            split,
            out_dir,
            format,
            bins,
            scatter_count,
        } => {
            let space = LabelSpace::preset(&space)?;
            let split = Split::parse(&split)?;
            let manifest = load_manifest(&manifest, &space, split)?;
            let samples = manifest.samples();
            ensure_out_dir(&out_dir)?;

            let report = distribution_report(&samples, &space, split.name(), bins)?;
            write_json(&out_dir.join("report.json"), &report)?;
            for (dim, histogram) in &report.value_histograms {
                write_text(
                    &out_dir.join(format!("histogram_{dim}.csv")),
                    &histogram_to_csv(histogram),
                )?;
            }
            if space.dim_index(affectkit_core::affect::Dim::Valence).is_some()
                && space.dim_index(affectkit_core::affect::Dim::Arousal).is_some()
            {
                let points = scatter_points(&samples, &space, scatter_count)?;
                write_text(&out_dir.join("scatter.csv"), &scatter_to_csv(&points))?;
            }
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Csv => {
                    println!("category,count,freq_per_occurrence,freq_per_image");
                    for (i, name) in report.categories.iter().enumerate() {
                        println!(
                            "{name},{},{},{}",
                            report.category_histogram.counts[i],
                            report.category_histogram.freq_per_occurrence[i],
                            report.category_histogram.freq_per_image[i]
                        );
                    }
                }
            }
            Ok(())
        }
        Command::GenSynthetic {
            spec,
            preset,
            seed,
            out_dir,
        } => {
            let mut spec: SyntheticSpec = match (spec, preset) {
                (Some(path), None) => read_json(&path)?,
                (None, Some(name)) if name == "separable8" => {
                    SyntheticSpec::default_separable8(seed.unwrap_or(0))
                }
                (None, Some(name)) => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown preset '{name}'; available: separable8"
                    )))
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "pass a spec file or --preset, not both".into(),
                    ))
                }
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            ensure_out_dir(&out_dir)?;
            write_json(&out_dir.join("spec.json"), &spec)?;
            for manifest in gen_synthetic(&spec)? {
                let path = out_dir.join(format!("{}.csv", manifest.split));
                save_manifest(&manifest, &path)?;
                println!(
                    "wrote {} ({} samples, space {})",
                    path.display(),
                    manifest.len(),
                    manifest.space.name
                );
            }
            Ok(())
        }
        Command::Train {
            config,
            seed,
            out_dir,
        } => {
            let mut config: TrainConfig = read_json(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let space = LabelSpace::preset(&config.space)?;
            let train_manifest =
                load_manifest(Path::new(&config.train_manifest), &space, Split::Train)?;
            let val_manifest = config
                .val_manifest
                .as_ref()
                .map(|p| load_manifest(Path::new(p), &space, Split::Validation))
                .transpose()?;
            let donor = config
                .warm_start
                .as_ref()
                .map(|p| ModelCheckpoint::load(Path::new(p)))
                .transpose()?;

            ensure_out_dir(&out_dir)?;
            let outcome =
                train_with_data(config, &train_manifest, val_manifest.as_ref(), donor.as_ref())?;
            for checkpoint in &outcome.per_epoch {
                checkpoint.save(&out_dir.join(format!(
                    "checkpoint_epoch_{}.json",
                    checkpoint.metadata.epoch
                )))?;
            }
            let best_path = out_dir.join("checkpoint.json");
            outcome.best.save(&best_path)?;
            let mut run_log = outcome.run_log;
            run_log.final_checkpoint = best_path.display().to_string();
            write_json(&out_dir.join("runlog.json"), &run_log)?;
            println!(
                "trained {} epoch(s); best epoch {}; checkpoint at {}",
                run_log.epochs.len(),
                run_log.best_epoch,
                best_path.display()
            );
            Ok(())
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            space,
            split,
            topk,
            out_dir,
            format,
        } => {
            let checkpoint = ModelCheckpoint::load(&checkpoint)?;
            let space_name = space.unwrap_or_else(|| checkpoint.metadata.label_space.clone());
            let space = LabelSpace::preset(&space_name)?;
            let manifest = load_manifest(&manifest, &space, Split::parse(&split)?)?;
            ensure_out_dir(&out_dir)?;
            let report = evaluate(&checkpoint, &manifest, topk)?;
            emit_report(&report, &out_dir, format)
        }
        Command::CrossValidate {
            checkpoint,
            manifest,
            space,
            split,
            out_dir,
            format,
        } => {
            let checkpoint = ModelCheckpoint::load(&checkpoint)?;
            let space = LabelSpace::preset(&space)?;
            let manifest = load_manifest(&manifest, &space, Split::parse(&split)?)?;
            ensure_out_dir(&out_dir)?;
            let report = cross_validate(&checkpoint, &manifest)?;
            emit_report(&report, &out_dir, format)
        }
    }
}
