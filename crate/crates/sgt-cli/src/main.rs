//! `sgt`: train and evaluate incremental gradient trees over CSV streams.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sgt_cli::schema::{Schema, TargetKind};
use sgt_cli::{eval, ingest, milcv};
use sgtree::{Committee, MilTrainer, ModelDoc, ModelTask, Regressor, SgTree, SgtConfig};

#[derive(Parser)]
#[command(name = "sgt", version, about = "Incremental gradient trees over CSV streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prequential multiclass classification over a class-labeled stream.
    Classify(StreamArgs),
    /// Prequential regression over a numerically labeled stream.
    Regress(StreamArgs),
    /// Stratified cross-validation over bag-labeled data.
    Mil(MilArgs),
    /// Parse, validate, and reprint a saved model document.
    DumpTree(DumpArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// JSON schema sidecar describing the columns.
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct LearnerArgs {
    /// Equal-width bins per numeric feature.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(2..))]
    bins: u32,
    /// Instances used to estimate unknown numeric feature ranges.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    warmup: u64,
    /// Instances routed to a leaf between split attempts.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    grace: u64,
    /// L2 penalty on leaf value deltas.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Cost per leaf added by a split.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Significance level the split test must clear.
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    /// Use a two-sided split test instead of the one-sided default.
    #[arg(long)]
    two_sided: bool,
}

impl LearnerArgs {
    fn config(&self) -> Result<SgtConfig> {
        let config = SgtConfig {
            lambda: self.lambda,
            gamma: self.gamma,
            delta: self.delta,
            grace: self.grace,
            bins: self.bins,
            warmup: self.warmup,
            two_sided: self.two_sided,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct StreamArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    learner: LearnerArgs,
    /// Instances per evaluation window.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    window: u64,
    /// Seed for the in-memory shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shuffle the stream in memory before the run.
    #[arg(long)]
    shuffle: bool,
    /// Write the per-window records CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the final model JSON here.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct MilArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    learner: LearnerArgs,
    /// Training passes over the bag set.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    folds: u64,
    /// Seed for fold assignment and epoch shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-fold accuracy CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit one model on all bags and write its JSON here.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    /// Model JSON to load and reprint.
    #[arg(long)]
    model_out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Classify(args) => run_classify(args),
        Command::Regress(args) => run_regress(args),
        Command::Mil(args) => run_mil(args),
        Command::DumpTree(args) => run_dump_tree(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run_classify(args: StreamArgs) -> Result<()> {
    let schema = Schema::load(&args.data.schema)?;
    let Some(classes) = schema.class_count() else {
        bail!(
            "subcommand `classify` needs a class target, but schema target `{}` is {}",
            schema.target().name(),
            schema.target().kind()
        );
    };
    let stream = ingest::load_classification(&args.data.data, &schema)?;
    let mut committee = Committee::new(schema.decls(), classes, args.learner.config()?)?;
    let report = eval::prequential_classify(
        &mut committee,
        stream,
        args.window,
        args.shuffle.then_some(args.seed),
    )?;
    if let Some(path) = &args.out {
        eval::write_records(path, &report.records)?;
        println!("records written to {}", path.display());
    }
    if let Some(path) = &args.model_out {
        let (features, trees) = committee.dump()?;
        write_model(path, &ModelDoc::new(ModelTask::Classify { classes }, &features, trees))?;
        println!("model written to {}", path.display());
    }
    println!("instances: {}", report.instances);
    println!("cumulative error: {:.4}%", report.cumulative_metric);
    println!("nodes: {}", report.nodes);
    println!("seconds: {:.3}", report.seconds);
    Ok(())
}

fn run_regress(args: StreamArgs) -> Result<()> {
    let schema = Schema::load(&args.data.schema)?;
    if schema.target().kind() != TargetKind::Numeric {
        bail!(
            "subcommand `regress` needs a numeric target, but schema target `{}` is {}",
            schema.target().name(),
            schema.target().kind()
        );
    }
    let stream = ingest::load_regression(&args.data.data, &schema)?;
    let mut regressor = Regressor::new(schema.decls(), args.learner.config()?)?;
    let report = eval::prequential_regress(
        &mut regressor,
        stream,
        args.window,
        args.shuffle.then_some(args.seed),
    )?;
    if let Some(path) = &args.out {
        eval::write_records(path, &report.records)?;
        println!("records written to {}", path.display());
    }
    if let Some(path) = &args.model_out {
        let (features, trees) = regressor.dump()?;
        write_model(path, &ModelDoc::new(ModelTask::Regress, &features, trees))?;
        println!("model written to {}", path.display());
    }
    println!("instances: {}", report.instances);
    println!("cumulative mae: {:.4}", report.cumulative_metric);
    println!("nodes: {}", report.nodes);
    println!("seconds: {:.3}", report.seconds);
    Ok(())
}

fn run_mil(args: MilArgs) -> Result<()> {
    let schema = Schema::load(&args.data.schema)?;
    if schema.target().kind() != TargetKind::BagLabel {
        bail!(
            "subcommand `mil` needs a bag_label target, but schema target `{}` is {}",
            schema.target().name(),
            schema.target().kind()
        );
    }
    let config = args.learner.config()?;
    let bags = ingest::load_bags(&args.data.data, &schema)?;
    let positives = bags.iter().filter(|b| b.label()).count();
    println!("bags: {} ({} positive / {} negative)", bags.len(), positives, bags.len() - positives);
    let report = milcv::cross_validate_mil(
        &schema.decls(),
        &config,
        &bags,
        args.folds as usize,
        args.seed,
        args.epochs,
    )?;
    for (fold, accuracy) in report.fold_accuracies.iter().enumerate() {
        println!("fold {fold}: accuracy {accuracy:.4}");
    }
    for fold in &report.single_class_folds {
        eprintln!("warning: fold {fold} holds bags of a single class");
    }
    println!("mean accuracy: {:.4}", report.mean_accuracy);
    if let Some(path) = &args.out {
        let mut writer = csv::Writer::from_path(path)
            .with_context(|| format!("creating {}", path.display()))?;
        writer.write_record(["fold", "accuracy"])?;
        for (fold, accuracy) in report.fold_accuracies.iter().enumerate() {
            writer.write_record([fold.to_string(), accuracy.to_string()])?;
        }
        writer.flush()?;
        println!("fold accuracies written to {}", path.display());
    }
    if let Some(path) = &args.model_out {
        let tree =
            MilTrainer::new(schema.decls(), config, bags, args.epochs, args.seed)?.fit()?;
        write_model(path, &ModelDoc::new(ModelTask::Mil, tree.features(), vec![tree.dump()]))?;
        println!("model written to {}", path.display());
    }
    Ok(())
}

fn run_dump_tree(args: DumpArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.model_out)
        .with_context(|| format!("reading {}", args.model_out.display()))?;
    let doc: ModelDoc = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.model_out.display()))?;
    doc.check_version()?;
    let features = Arc::new(doc.feature_set()?);
    for (i, dump) in doc.trees.iter().enumerate() {
        SgTree::from_dump(Arc::clone(&features), SgtConfig::default(), dump)
            .with_context(|| format!("validating tree {i}"))?;
    }
    let printed = canonical_model_json(&doc)?;
    let reparsed: ModelDoc = serde_json::from_str(&printed)?;
    if reparsed != doc {
        bail!("model document does not survive a parse/print round trip");
    }
    print!("{printed}");
    Ok(())
}

fn canonical_model_json(doc: &ModelDoc) -> Result<String> {
    Ok(serde_json::to_string_pretty(doc)? + "\n")
}

fn write_model(path: &Path, doc: &ModelDoc) -> Result<()> {
    std::fs::write(path, canonical_model_json(doc)?)
        .with_context(|| format!("writing {}", path.display()))
}
