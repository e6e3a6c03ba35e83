//! `cfdriver`: run the counterfactual augmentation pipeline stage by stage.
//!
//! Exit codes: 0 success, 1 user error, 2 internal error, 3 warning
//! (augmentation fell short of its target).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cfdriver_core::augment::AugmentedDataset;
use cfdriver_core::config::Config;
use cfdriver_core::error::{IoError, LearnerError, TreeError};
use cfdriver_core::eval::{write_reports_csv, EvalReport};
use cfdriver_core::io::{read_dataset, read_json, read_text, schema_path, write_atomic, write_dataset, write_json};
use cfdriver_core::learner::LearnerModel;
use cfdriver_core::pipeline::{self, AblationReport, Artifact, RunManifest};
use cfdriver_core::trees::TreeModel;

#[derive(Parser)]
#[command(name = "cfdriver", version, about = "Counterfactual data augmentation for imitation-learned driving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Plain-text key/value config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides pipeline.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides pipeline.workers.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the expert and record demonstrations.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the tree classifier to a demonstration dataset.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        min_leaf: Option<usize>,
    },
    /// Enrich a dataset with expert-relabeled counterfactual records.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides cf.target_fraction.
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Train the sensor-input learner.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Drive the held-out routes and score a policy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        policy: PolicyKind,
        /// Learner checkpoint, required for `--policy learner`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the three-arm ablation plus the expert row.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds; defaults to the run seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Summarize ablation reports across seeds.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Expert,
    Learner,
}

enum Failure {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Internal(e.into())
    }
}

fn user(e: impl Into<anyhow::Error>) -> Failure {
    Failure::User(e.into())
}

/// Missing or malformed inputs are the caller's fault.
fn io_failure(e: IoError) -> Failure {
    user(e)
}

enum Outcome {
    Done,
    Warning,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

fn with_extension(out: &Path, ext: &str) -> PathBuf {
    out.with_extension(ext)
}

fn load_config(common: &Common) -> Result<(Config, u64), Failure> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p).map_err(user)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.pipeline.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.pipeline.workers = w.max(1);
    }
    let seed = cfg.pipeline.seed;
    Ok((cfg, seed))
}

fn load_dataset(path: &Path) -> Result<AugmentedDataset, Failure> {
    read_dataset(path).map_err(io_failure)
}

fn dataset_artifacts(path: &Path) -> Result<Vec<Artifact>, IoError> {
    Ok(vec![Artifact::of(path)?, Artifact::of(&schema_path(path))?])
}

fn finish(manifest: &RunManifest, out: &Path) -> Result<(), Failure> {
    write_json(&manifest_path(out), manifest)?;
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome, Failure> {
    match cli.command {
        Command::Collect { common, out } => {
            let (cfg, seed) = load_config(&common)?;
            let mut m = RunManifest::new("collect", seed, &cfg);
            let t = Instant::now();
            let ds = AugmentedDataset { records: pipeline::collect(&cfg, seed) };
            m.timings.insert("collect".into(), t.elapsed().as_secs_f64());
            write_dataset(&out, &ds)?;
            let (n_original, n_cf) = ds.counts();
            m.n_original = Some(n_original);
            m.n_cf = Some(n_cf);
            m.outputs = dataset_artifacts(&out)?;
            finish(&m, &out)?;
            log::info!("collected {n_original} records into {}", out.display());
            Ok(Outcome::Done)
        }
        Command::Distill { common, dataset, out, rounds, max_depth, learning_rate, min_leaf } => {
            let (mut cfg, seed) = load_config(&common)?;
            if let Some(v) = rounds {
                cfg.trees.rounds = v;
            }
            if let Some(v) = max_depth {
                cfg.trees.max_depth = v;
            }
            if let Some(v) = learning_rate {
                cfg.trees.learning_rate = v;
            }
            if let Some(v) = min_leaf {
                cfg.trees.min_leaf = v;
            }
            cfg.validate().map_err(user)?;
            let ds = load_dataset(&dataset)?;
            let mut m = RunManifest::new("distill", seed, &cfg);
            m.inputs = dataset_artifacts(&dataset)?;
            let t = Instant::now();
            let d = pipeline::distill(&ds.records, &cfg, seed).map_err(|e| match e {
                TreeError::EmptyDataset => user(anyhow!("distill: {e}")),
                other => Failure::Internal(anyhow!("distill: {other}")),
            })?;
            m.timings.insert("distill".into(), t.elapsed().as_secs_f64());
            write_atomic(&out, d.model.to_json().as_bytes())?;
            m.tree_agreement = Some(d.agreement);
            m.n_original = Some(d.n_train + d.n_held_out);
            m.outputs = vec![Artifact::of(&out)?];
            finish(&m, &out)?;
            log::info!("held-out agreement {:.4}", d.agreement);
            Ok(Outcome::Done)
        }
        Command::Augment { common, dataset, model, out, fraction } => {
            let (mut cfg, seed) = load_config(&common)?;
            if let Some(f) = fraction {
                cfg.cf.target_fraction = f;
            }
            cfg.validate().map_err(user)?;
            let ds = load_dataset(&dataset)?;
            let tree = TreeModel::from_json(&read_text(&model).map_err(io_failure)?)
                .map_err(|e| user(anyhow!("{}: {e}", model.display())))?;
            let mut m = RunManifest::new("augment", seed, &cfg);
            m.inputs = dataset_artifacts(&dataset)?;
            m.inputs.push(Artifact::of(&model)?);
            let t = Instant::now();
            let result = pipeline::augment(&ds.records, &tree, &cfg, seed).context("augment")?;
            m.timings.insert("augment".into(), t.elapsed().as_secs_f64());
            write_dataset(&out, &result.dataset)?;
            let (n_original, n_cf) = result.dataset.counts();
            m.n_original = Some(n_original);
            m.n_cf = Some(n_cf);
            m.cf_fraction = Some(result.dataset.cf_fraction());
            m.augment = Some(result.stats.clone());
            let shortfall = result.shortfall();
            if let Some(w) = &shortfall {
                m.warnings.push(w.to_string());
            }
            m.outputs = dataset_artifacts(&out)?;
            finish(&m, &out)?;
            log::info!("{n_cf} counterfactual records, fraction {:.4}", result.dataset.cf_fraction());
            match shortfall {
                Some(w) => {
                    eprintln!("warning: {w}");
                    Ok(Outcome::Warning)
                }
                None => Ok(Outcome::Done),
            }
        }
        Command::Train { common, dataset, out, epochs } => {
            let (mut cfg, seed) = load_config(&common)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let ds = load_dataset(&dataset)?;
            let mut m = RunManifest::new("train", seed, &cfg);
            m.inputs = dataset_artifacts(&dataset)?;
            let t = Instant::now();
            let model = pipeline::train_learner(&ds.records, &cfg, seed).map_err(|e| match e {
                LearnerError::EmptyDataset | LearnerError::ShapeMismatch(_) => user(anyhow!("train: {e}")),
                other => Failure::Internal(anyhow!("train: {other}")),
            })?;
            m.timings.insert("train".into(), t.elapsed().as_secs_f64());
            write_atomic(&out, model.to_json().as_bytes())?;
            let curve = with_extension(&out, "loss.csv");
            let mut buf = Vec::new();
            model.write_loss_csv(&mut buf)?;
            write_atomic(&curve, &buf)?;
            let (n_original, n_cf) = ds.counts();
            m.n_original = Some(n_original);
            m.n_cf = Some(n_cf);
            m.outputs = vec![Artifact::of(&out)?, Artifact::of(&curve)?];
            finish(&m, &out)?;
            Ok(Outcome::Done)
        }
        Command::Evaluate { common, policy, model, out } => {
            let (cfg, seed) = load_config(&common)?;
            let mut m = RunManifest::new("evaluate", seed, &cfg);
            let t = Instant::now();
            let report = match policy {
                PolicyKind::Expert => pipeline::evaluate_expert(&cfg, seed).context("evaluate")?,
                PolicyKind::Learner => {
                    let path = model.ok_or_else(|| user(anyhow!("--model is required for the learner policy")))?;
                    let learner = LearnerModel::from_json(&read_text(&path).map_err(io_failure)?)
                        .map_err(|e| user(anyhow!("{}: {e}", path.display())))?;
                    if learner.sensor != cfg.sensor {
                        return Err(user(anyhow!("{}: sensor settings differ from the config", path.display())));
                    }
                    m.inputs.push(Artifact::of(&path)?);
                    pipeline::evaluate_learner("learner", &learner, &cfg, seed).context("evaluate")?
                }
            };
            m.timings.insert("evaluate".into(), t.elapsed().as_secs_f64());
            write_report(&out, &[&report])?;
            m.driving_score = Some(report.driving_score);
            m.outputs = vec![Artifact::of(&out)?, Artifact::of(&with_extension(&out, "csv"))?];
            finish(&m, &out)?;
            println!("driving score {:.2}", report.driving_score);
            Ok(Outcome::Done)
        }
        Command::Ablate { common, seeds, out_dir } => {
            let (cfg, seed) = load_config(&common)?;
            let seeds = if seeds.is_empty() { vec![seed] } else { seeds };
            let mut m = RunManifest::new("ablate", seed, &cfg);
            let mut reports = Vec::new();
            for s in &seeds {
                let t = Instant::now();
                let r = pipeline::run_ablation(&cfg, *s).with_context(|| format!("ablate seed {s}"))?;
                m.timings.insert(format!("seed_{s}"), t.elapsed().as_secs_f64());
                let path = out_dir.join(format!("ablation_seed{s}.json"));
                write_report(&path, &r.arms.iter().collect::<Vec<_>>())?;
                write_json(&path, &r)?;
                m.outputs.push(Artifact::of(&path)?);
                m.outputs.push(Artifact::of(&with_extension(&path, "csv"))?);
                reports.push(r);
            }
            let csv_path = out_dir.join("ablation.csv");
            write_atomic(&csv_path, summary_csv(&reports)?.as_bytes())?;
            m.outputs.push(Artifact::of(&csv_path)?);
            finish(&m, &out_dir.join("ablation"))?;
            print!("{}", summary_csv(&reports)?);
            Ok(Outcome::Done)
        }
        Command::Report { reports, out } => {
            let mut loaded: Vec<AblationReport> = Vec::new();
            for p in &reports {
                loaded.push(read_json(p).map_err(io_failure)?);
            }
            let text = summary_csv(&loaded)?;
            if let Some(out) = out {
                write_atomic(&out, text.as_bytes())?;
            }
            print!("{text}");
            Ok(Outcome::Done)
        }
    }
}

/// Report JSON plus a sibling CSV with one row per policy.
fn write_report(path: &Path, reports: &[&EvalReport]) -> Result<(), Failure> {
    if let [single] = reports {
        write_json(path, single)?;
    }
    let mut buf = Vec::new();
    write_reports_csv(reports, &mut buf)?;
    write_atomic(&with_extension(path, "csv"), &buf)?;
    Ok(())
}

/// Per-seed driving scores of every arm, the mean row, and the CF gap.
fn summary_csv(reports: &[AblationReport]) -> Result<String, Failure> {
    let arms = [pipeline::ARM_SMALL, pipeline::ARM_MATCHED, pipeline::ARM_CF, pipeline::ARM_EXPERT];
    let mut out = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["seed".to_string()];
    header.extend(arms.iter().map(|a| a.to_string()));
    header.push("cf_gap".into());
    out.write_record(&header)?;
    let mut sums = [0.0; 5];
    for r in reports {
        let mut row = vec![r.seed.to_string()];
        for (i, a) in arms.iter().enumerate() {
            let ds = r.arm(a).map_or(f64::NAN, |x| x.driving_score);
            sums[i] += ds;
            row.push(format!("{ds:.4}"));
        }
        sums[4] += r.cf_gap();
        row.push(format!("{:.4}", r.cf_gap()));
        out.write_record(&row)?;
    }
    if !reports.is_empty() {
        let n = reports.len() as f64;
        let mut row = vec!["mean".to_string()];
        row.extend(sums.iter().map(|s| format!("{:.4}", s / n)));
        out.write_record(&row)?;
    }
    let bytes = out.into_inner().map_err(|e| anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Warning) => ExitCode::from(3),
        Err(Failure::User(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}
