//! `fer` — train and evaluate facial expression models supervised by a
//! frozen text-embedding bank.
//!
//! Exit codes: 0 on success, 1 on runtime or domain errors, 2 on usage
//! and configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use fer_core::bank::{build_bank, load_bank, save_bank};
use fer_core::category::CategorySet;
use fer_core::checkpoint::TrainMode;
use fer_core::eval::{cross_evaluate, evaluate, evaluate_baseline, format_confusion_csv, format_report};
use fer_core::manifest::load_manifest;
use fer_core::plot::emit_embedding_plot;
use fer_core::prompts::{PromptTemplate, BUILTIN_TEMPLATES};
use fer_core::provider::{CommandProvider, EmbeddingProvider, FileProvider, StubProvider};
use fer_core::runconfig::{load_run_config, RunConfig};
use fer_core::synthetic::generate_synthetic;
use fer_core::train::{
    model_from_checkpoint, resume_train, train, train_baseline, ModelSpec, TrainRun,
};

#[derive(Parser)]
#[command(name = "fer", version, about = "Facial expression recognition with text-embedding supervision")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic dataset with a manifest.
    Synth(SynthArgs),
    /// Build a text-embedding bank from a provider and save it as teb-v1.
    EmbedText(EmbedTextArgs),
    /// Train against a frozen embedding bank.
    Train(TrainArgs),
    /// Train the classifier-head baseline on discrete labels.
    TrainBaseline(TrainBaselineArgs),
    /// Evaluate a checkpoint on a manifest.
    Eval(EvalArgs),
    /// Evaluate a checkpoint on a different dataset, matching categories by name.
    CrossEval(CrossEvalArgs),
    /// Train one short run per built-in prompt template and tabulate accuracy.
    AblateTemplates(AblateArgs),
    /// Write a 2-D embedding scatter plot plus its coordinate CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for images, manifest.csv, and categories.txt.
    #[arg(long)]
    out: PathBuf,
    /// Categories file (one name per line); defaults to the built-in
    /// eight-category set.
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long = "per-class")]
    per_class: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ProviderArgs {
    /// Embedding provider: stub, file, or vlm.
    #[arg(long, default_value = "stub")]
    provider: String,
    /// Stub provider embedding dimension.
    #[arg(long, default_value_t = 512)]
    dim: usize,
    /// Stub provider seed.
    #[arg(long = "provider-seed", default_value_t = 0)]
    provider_seed: u64,
    /// Source bank for the file provider.
    #[arg(long = "bank-in")]
    bank_in: Option<PathBuf>,
    /// Command to run for the vlm provider (prompts on stdin, one
    /// space-separated embedding per line on stdout).
    #[arg(long = "vlm-cmd")]
    vlm_cmd: Option<PathBuf>,
    /// Extra argument for the vlm command; repeatable.
    #[arg(long = "vlm-arg")]
    vlm_args: Vec<String>,
}

#[derive(Args)]
struct EmbedTextArgs {
    /// Prompt template: a builtin id (t1..t9) or a literal string with [CLS].
    #[arg(long, default_value = "t9")]
    template: String,
    #[arg(long)]
    categories: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest CSV.
    #[arg(long)]
    data: PathBuf,
    /// teb-v1 bank file.
    #[arg(long)]
    bank: PathBuf,
    /// Run configuration (key=value).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resume from this checkpoint directory.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Override the config file seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainBaselineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory (params.bin + meta.txt).
    #[arg(long)]
    ckpt: PathBuf,
    /// Bank file; required for text-supervised checkpoints.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Directory receiving confusion.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CrossEvalArgs {
    /// Manifest of the target dataset (categories must be a name subset
    /// of the bank's).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    provider: ProviderArgs,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    /// Output path prefix; writes <out>.png and <out>.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Errors that are the caller's fault (flags, config files) exit 2;
/// everything else exits 1.
enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::EmbedText(args) => cmd_embed_text(args),
        Command::Train(args) => cmd_train(args),
        Command::TrainBaseline(args) => cmd_train_baseline(args),
        Command::Eval(args) => cmd_eval(args),
        Command::CrossEval(args) => cmd_cross_eval(args),
        Command::AblateTemplates(args) => cmd_ablate_templates(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_categories(path: &Path) -> Result<CategorySet, CliError> {
    CategorySet::load(path)
        .with_context(|| format!("reading categories from {}", path.display()))
        .map_err(CliError::Runtime)
}

fn make_provider(args: &ProviderArgs) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    match args.provider.as_str() {
        "stub" => Ok(Box::new(StubProvider::new(args.dim, args.provider_seed))),
        "file" => {
            let path = args
                .bank_in
                .as_ref()
                .ok_or_else(|| usage(anyhow!("--provider file requires --bank-in")))?;
            let bank = load_bank(path)?;
            Ok(Box::new(FileProvider::from_bank(&bank)))
        }
        "vlm" => {
            let cmd = args
                .vlm_cmd
                .as_ref()
                .ok_or_else(|| usage(anyhow!("--provider vlm requires --vlm-cmd")))?;
            Ok(Box::new(CommandProvider::new(cmd, args.vlm_args.clone())))
        }
        other => Err(usage(anyhow!(
            "unknown provider {other:?} (expected stub, file, or vlm)"
        ))),
    }
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let categories = match &args.categories {
        Some(path) => load_categories(path)?,
        None => CategorySet::default_eight(),
    };
    let manifest = generate_synthetic(&categories, args.per_class, args.size, args.seed, &args.out)?;
    println!(
        "wrote {} images over {} categories to {}",
        manifest.rows.len(),
        categories.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_embed_text(args: EmbedTextArgs) -> CliResult {
    let template = PromptTemplate::resolve(&args.template).map_err(usage)?;
    let categories = load_categories(&args.categories)?;
    let provider = make_provider(&args.provider)?;
    let bank = build_bank(provider.as_ref(), &template, &categories)?;
    save_bank(&bank, &args.out)?;
    println!(
        "C={} d_t={} provider={}",
        bank.n_categories(),
        bank.dim(),
        bank.provider_id()
    );
    Ok(())
}

fn run_config_with_seed(path: &Path, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = load_run_config(path).map_err(usage)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn report_run(run: &TrainRun, out: &Path) {
    let last = run.history.last();
    println!(
        "trained {} epochs ({} iterations); final checkpoint at {}",
        run.state.epoch,
        run.state.iteration,
        run.final_dir.display()
    );
    if let Some(last) = last {
        println!(
            "final losses: l_s {:.6}, total {:.6}; history at {}",
            last.losses.l_s,
            last.losses.total,
            out.join(fer_core::train::HISTORY_FILE).display()
        );
    }
}

fn cmd_train(args: TrainArgs) -> CliResult {
    let cfg = run_config_with_seed(&args.config, args.seed)?;
    let manifest = load_manifest(&args.data)?;
    let bank = load_bank(&args.bank)?;
    let spec = ModelSpec {
        encoder_id: cfg.encoder.clone(),
        fn_activation: cfg.fn_activation,
    };
    let run = match &args.resume {
        Some(ckpt) => resume_train(ckpt, &manifest, &bank, &cfg.train, &cfg.loss, &args.out)?,
        None => train(&manifest, &bank, &spec, &cfg.train, &cfg.loss, &args.out)?,
    };
    report_run(&run, &args.out);
    Ok(())
}

fn cmd_train_baseline(args: TrainBaselineArgs) -> CliResult {
    let cfg = run_config_with_seed(&args.config, args.seed)?;
    let manifest = load_manifest(&args.data)?;
    let spec = ModelSpec {
        encoder_id: cfg.encoder.clone(),
        fn_activation: cfg.fn_activation,
    };
    let run = train_baseline(&manifest, &spec, &cfg.train, &args.out)?;
    report_run(&run, &args.out);
    Ok(())
}

fn write_report(
    report: &fer_core::eval::EvalReport,
    categories: &CategorySet,
    out_dir: &Path,
) -> CliResult {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join("confusion.csv");
    std::fs::write(&csv_path, format_confusion_csv(report, categories))
        .with_context(|| format!("writing {}", csv_path.display()))?;
    print!("{}", format_report(report, categories));
    println!("confusion matrix: {}", csv_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let manifest = load_manifest(&args.data)?;
    let (model, meta) = model_from_checkpoint(&args.ckpt)?;
    let report = match meta.mode {
        TrainMode::Text => {
            let bank_path = args
                .bank
                .as_ref()
                .ok_or_else(|| usage(anyhow!("text-supervised checkpoints need --bank")))?;
            let bank = load_bank(bank_path)?;
            evaluate(&model, &bank, &manifest)?
        }
        TrainMode::Baseline => evaluate_baseline(&model, &manifest)?,
    };
    write_report(&report, &manifest.categories, &args.out)
}

fn cmd_cross_eval(args: CrossEvalArgs) -> CliResult {
    let manifest = load_manifest(&args.data)?;
    let bank = load_bank(&args.bank)?;
    let (model, _) = model_from_checkpoint(&args.ckpt)?;
    let report = cross_evaluate(&model, &bank, &manifest)?;
    write_report(&report, &manifest.categories, &args.out)
}

fn cache_dir() -> PathBuf {
    std::env::var_os("FER_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".fer-cache"))
}

fn cmd_ablate_templates(args: AblateArgs) -> CliResult {
    let cfg = run_config_with_seed(&args.config, args.seed)?;
    let manifest = load_manifest(&args.data)?;
    let provider = make_provider(&args.provider)?;
    let cache = cache_dir().join("ablate-templates");
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (ix, template_text) in BUILTIN_TEMPLATES.iter().enumerate() {
        let id = format!("t{}", ix + 1);
        let outcome = ablate_one(
            &id,
            template_text,
            provider.as_ref(),
            &manifest,
            &cfg,
            &cache.join(&id),
        );
        match outcome {
            Ok(accuracy) => {
                println!("{id}: overall accuracy {accuracy:.4}");
                rows.push(format!("{id},{template_text},{accuracy:.6}"));
            }
            Err(e) => {
                eprintln!("{id}: error: {e:#}");
                rows.push(format!("{id},{template_text},error"));
                failures += 1;
            }
        }
    }
    let csv_path = args.out.join("template_ablation.csv");
    let mut body = String::from("template_id,template,overall_accuracy\n");
    for row in rows {
        body.push_str(&row);
        body.push('\n');
    }
    std::fs::write(&csv_path, body)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    println!("ablation table: {}", csv_path.display());
    if failures > 0 {
        return Err(CliError::Runtime(anyhow!(
            "{failures} of {} templates failed",
            BUILTIN_TEMPLATES.len()
        )));
    }
    Ok(())
}

fn ablate_one(
    id: &str,
    template_text: &str,
    provider: &dyn EmbeddingProvider,
    manifest: &fer_core::manifest::DatasetManifest,
    cfg: &RunConfig,
    work_dir: &Path,
) -> anyhow::Result<f64> {
    let template = PromptTemplate::new(template_text)?;
    let bank = build_bank(provider, &template, &manifest.categories)?;
    std::fs::create_dir_all(work_dir)?;
    save_bank(&bank, &work_dir.join(format!("bank_{id}.teb")))?;
    let spec = ModelSpec {
        encoder_id: cfg.encoder.clone(),
        fn_activation: cfg.fn_activation,
    };
    let run = train(manifest, &bank, &spec, &cfg.train, &cfg.loss, work_dir)?;
    let (model, _) = model_from_checkpoint(&run.final_dir)?;
    let report = evaluate(&model, &bank, manifest)?;
    Ok(report.overall_accuracy)
}

fn cmd_plot(args: PlotArgs) -> CliResult {
    let manifest = load_manifest(&args.data)?;
    let (model, _) = model_from_checkpoint(&args.ckpt)?;
    let (png, csv) = emit_embedding_plot(&model, &manifest, args.seed, &args.out)?;
    println!("wrote {} and {}", png.display(), csv.display());
    Ok(())
}
