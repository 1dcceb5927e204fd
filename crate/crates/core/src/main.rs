//! `repodoc` command-line entry point.

use std::io::{BufRead, IsTerminal, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use repodoc::config::AppConfig;
use repodoc::dataset::{build_dataset, emit_recipe, write_csv, write_skip_log, DatasetConfig};
use repodoc::eval::{
    bleu, document_from_markdown, evaluate_repo, render_batch_markdown, BatchRow, Smoothing,
};
use repodoc::generate::{lookup_model, model_registry, GenKind, PricingClass};
use repodoc::ingest::RepoSource;
use repodoc::pipeline::{
    answer_question, build_and_save_index, dry_run_prompts, run_generate, IndexBundle,
};

#[derive(Parser)]
#[command(
    name = "repodoc",
    version,
    about = "Retrieval-augmented README generation, datasets, and evaluation for code repositories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sectioned README.md for a repository
    Generate(GenerateArgs),
    /// Build the retrieval index and persist it to the output directory
    Index(CommonArgs),
    /// Answer questions against an indexed repository
    Query(QueryArgs),
    /// Build a fine-tuning dataset (CSV) from repositories with READMEs
    Dataset(DatasetArgs),
    /// Score generated documentation against reference READMEs
    Eval(EvalArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repository locator: local path, file:// path, or git URL
    #[arg(long)]
    repo: Option<String>,
    /// Project name
    #[arg(long)]
    name: Option<String>,
    /// Text-generation model name [default: none, selection is mandatory]
    #[arg(long)]
    model: Option<String>,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Retrieved chunks per question [default: 4]
    #[arg(long)]
    k: Option<usize>,
    /// Sampling temperature [default: 0.2]
    #[arg(long)]
    temperature: Option<f64>,
    /// Custom question set, a JSON array of {heading, question?, order?}
    #[arg(long)]
    questions: Option<PathBuf>,
    /// Log filter (error, warn, info, debug, trace)
    #[arg(long)]
    log_level: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Render prompts and print token counts, then stop before generation
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// One question; without it, questions are read line by line from stdin
    #[arg(long)]
    question: Option<String>,
    /// Build the index first instead of requiring a persisted one
    #[arg(long)]
    build: bool,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// JSON manifest: an array of {locator, name, revision?}
    #[arg(long)]
    sources: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Generated README to score (single-pair mode)
    #[arg(long)]
    generated: Option<PathBuf>,
    /// Reference README to score against (single-pair mode)
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Batch manifest: {label_a?, label_b?, repos: [{name, reference, candidate_a, candidate_b?}]}
    #[arg(long)]
    batch: Option<PathBuf>,
}

enum AppError {
    User(String),
    Pipeline(String),
}

impl From<repodoc::pipeline::PipelineError> for AppError {
    fn from(e: repodoc::pipeline::PipelineError) -> Self {
        AppError::Pipeline(e.to_string())
    }
}

fn user(e: impl std::fmt::Display) -> AppError {
    AppError::User(e.to_string())
}

fn resolve_config(common: &CommonArgs) -> Result<AppConfig, AppError> {
    let mut cfg = match &common.config {
        Some(path) => AppConfig::load(path).map_err(user)?,
        None => AppConfig::default(),
    };
    if let Some(repo) = &common.repo {
        cfg.repo = Some(repo.clone());
    }
    if let Some(name) = &common.name {
        cfg.project_name = Some(name.clone());
    }
    if let Some(model) = &common.model {
        cfg.model = Some(model.clone());
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(k) = common.k {
        cfg.k = k;
    }
    if let Some(t) = common.temperature {
        cfg.generation.temperature = t;
    }
    if let Some(q) = &common.questions {
        cfg.questions_path = Some(q.clone());
    }
    if let Some(level) = &common.log_level {
        cfg.log_level = Some(level.clone());
    }
    cfg.sync_model();
    Ok(cfg)
}

fn init_logging(cfg: &AppConfig) {
    let mut builder = env_logger::Builder::from_default_env();
    if let Some(level) = &cfg.log_level {
        builder.parse_filters(level);
    }
    let _ = builder.format_timestamp(None).try_init();
}

fn prompt_line(label: &str) -> Result<String, AppError> {
    eprint!("{label}: ");
    std::io::stderr().flush().ok();
    let mut line = String::new();
    std::io::stdin()
        .read_line(&mut line)
        .map_err(|e| AppError::User(format!("failed to read input: {e}")))?;
    Ok(line.trim().to_string())
}

fn prompt_model() -> Result<String, AppError> {
    eprintln!("Select a model:");
    for (i, profile) in model_registry().iter().enumerate() {
        let tag = match profile.pricing {
            PricingClass::Paid => "paid",
            PricingClass::Free => "free",
        };
        eprintln!("  {}. {} ({tag})", i + 1, profile.name);
    }
    let answer = prompt_line("Model (number or name)")?;
    if let Ok(n) = answer.parse::<usize>() {
        if (1..=model_registry().len()).contains(&n) {
            return Ok(model_registry()[n - 1].name.to_string());
        }
    }
    if answer.is_empty() {
        return Err(AppError::User("model selection is mandatory".into()));
    }
    Ok(answer)
}

/// Fill name/repo/model interactively on a TTY; otherwise insist on flags.
fn fill_interactive(cfg: &mut AppConfig) -> Result<(), AppError> {
    let missing_any = cfg.project_name.is_none() || cfg.repo.is_none() || cfg.model.is_none();
    if !missing_any {
        return Ok(());
    }
    if !std::io::stdin().is_terminal() {
        return Err(AppError::User(
            "missing --name, --repo, or --model; pass them as flags or in --config \
             (interactive prompts need a terminal)"
                .into(),
        ));
    }
    if cfg.project_name.is_none() {
        let name = prompt_line("Project name")?;
        if name.is_empty() {
            return Err(AppError::User("project name is required".into()));
        }
        cfg.project_name = Some(name);
    }
    if cfg.repo.is_none() {
        let repo = prompt_line("Repository (path or git URL)")?;
        if repo.is_empty() {
            return Err(AppError::User("repository locator is required".into()));
        }
        cfg.repo = Some(repo);
    }
    if cfg.model.is_none() {
        cfg.model = Some(prompt_model()?);
        cfg.sync_model();
    }
    Ok(())
}

fn preflight_api_key(cfg: &AppConfig) -> Result<(), AppError> {
    if cfg.generation.kind != GenKind::OpenaiCompatible {
        return Ok(());
    }
    if let Some(profile) = lookup_model(&cfg.generation.model_name) {
        if profile.pricing == PricingClass::Paid && cfg.generation.api_key().is_none() {
            return Err(AppError::User(format!(
                "model {} incurs costs and needs an API key; set the {} environment variable",
                cfg.generation.model_name, cfg.generation.api_key_env
            )));
        }
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), AppError> {
    let mut cfg = resolve_config(&args.common)?;
    init_logging(&cfg);
    fill_interactive(&mut cfg)?;
    cfg.validate().map_err(user)?;
    if cfg.model.as_deref().unwrap_or("").is_empty() {
        return Err(AppError::User(
            "model selection is mandatory (--model)".into(),
        ));
    }
    preflight_api_key(&cfg)?;

    if args.dry_run {
        let prompts = dry_run_prompts(&cfg)?;
        for p in &prompts {
            println!("--- {} ({} tokens) ---", p.heading, p.tokens);
            println!("{}", p.rendered);
        }
        println!(
            "dry run: {} prompts rendered, nothing generated",
            prompts.len()
        );
        return Ok(());
    }

    let outcome = run_generate(&cfg)?;
    println!(
        "wrote {} ({} sections, {} failed)",
        outcome.paths.readme.display(),
        outcome.document.sections.len(),
        outcome.failed_sections
    );
    if outcome.failed_sections > 0 {
        return Err(AppError::Pipeline(format!(
            "{} section(s) failed to generate",
            outcome.failed_sections
        )));
    }
    Ok(())
}

fn cmd_index(common: CommonArgs) -> Result<(), AppError> {
    let cfg = resolve_config(&common)?;
    init_logging(&cfg);
    if cfg.repo.is_none() || cfg.project_name.is_none() {
        return Err(AppError::User("--repo and --name are required".into()));
    }
    cfg.validate().map_err(user)?;
    let (bundle, outdir) = build_and_save_index(&cfg)?;
    println!(
        "indexed {} chunks into {}",
        bundle.chunks.len(),
        outdir.display()
    );
    Ok(())
}

fn cmd_query(args: QueryArgs) -> Result<(), AppError> {
    let cfg = resolve_config(&args.common)?;
    init_logging(&cfg);
    cfg.validate().map_err(user)?;
    if cfg.generation.model_name.is_empty() {
        return Err(AppError::User(
            "model selection is mandatory (--model)".into(),
        ));
    }
    preflight_api_key(&cfg)?;

    let bundle = if args.build {
        if cfg.repo.is_none() || cfg.project_name.is_none() {
            return Err(AppError::User("--build needs --repo and --name".into()));
        }
        let (bundle, _) = build_and_save_index(&cfg)?;
        bundle
    } else {
        match IndexBundle::load(&cfg.out_dir) {
            Ok(bundle) => bundle,
            Err(e) => {
                return Err(AppError::User(format!(
                    "no readable index in {} ({e}); run `repodoc index` first or pass --build",
                    cfg.out_dir.display()
                )))
            }
        }
    };

    let answer_one = |question: &str| -> Result<(), AppError> {
        let answer = answer_question(&bundle, &cfg, question)?;
        println!("{}", answer.text.trim_end());
        println!();
        println!("sources:");
        for path in &answer.cited_paths {
            println!("  {path}");
        }
        Ok(())
    };

    if let Some(question) = &args.question {
        return answer_one(question);
    }

    let interactive = std::io::stdin().is_terminal();
    let stdin = std::io::stdin();
    loop {
        if interactive {
            eprint!("> ");
            std::io::stderr().flush().ok();
        }
        let mut line = String::new();
        let read = stdin
            .lock()
            .read_line(&mut line)
            .map_err(|e| AppError::User(format!("failed to read question: {e}")))?;
        if read == 0 {
            break; // EOF
        }
        let question = line.trim();
        if question.is_empty() {
            continue;
        }
        answer_one(question)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct SourceManifestEntry {
    locator: String,
    name: String,
    #[serde(default)]
    revision: Option<String>,
}

fn cmd_dataset(args: DatasetArgs) -> Result<(), AppError> {
    let cfg = resolve_config(&args.common)?;
    init_logging(&cfg);
    cfg.validate().map_err(user)?;
    let text = std::fs::read_to_string(&args.sources)
        .map_err(|e| AppError::User(format!("cannot read {}: {e}", args.sources.display())))?;
    let entries: Vec<SourceManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| AppError::User(format!("invalid sources manifest: {e}")))?;
    if entries.is_empty() {
        return Err(AppError::User(
            "sources manifest lists no repositories".into(),
        ));
    }
    let sources: Vec<RepoSource> = entries
        .into_iter()
        .map(|e| RepoSource {
            locator: e.locator,
            name: e.name,
            revision: e.revision,
        })
        .collect();

    let dataset_cfg = DatasetConfig {
        chunking: cfg.chunking.clone(),
        embedding: cfg.embedding.clone(),
        hnsw: cfg.hnsw.clone(),
        k: cfg.k,
        ..DatasetConfig::default()
    };
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| AppError::Pipeline(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let build = build_dataset(&sources, &dataset_cfg, &cfg.cache_dir())
        .map_err(|e| AppError::Pipeline(e.to_string()))?;

    let csv_path = cfg.out_dir.join("dataset.csv");
    write_csv(&build.records, &csv_path).map_err(|e| AppError::Pipeline(e.to_string()))?;
    write_skip_log(&build.skipped, &cfg.out_dir.join("skips.jsonl"))
        .map_err(|e| AppError::Pipeline(e.to_string()))?;
    emit_recipe(&cfg.out_dir.join("finetune_recipe.json"))
        .map_err(|e| AppError::Pipeline(e.to_string()))?;
    println!(
        "wrote {} records to {} ({} repositories skipped)",
        build.records.len(),
        csv_path.display(),
        build.skipped.len()
    );
    Ok(())
}

#[derive(Deserialize)]
struct BatchManifest {
    #[serde(default = "default_label_a")]
    label_a: String,
    #[serde(default = "default_label_b")]
    label_b: String,
    repos: Vec<BatchRepoEntry>,
}

fn default_label_a() -> String {
    "Set A".into()
}

fn default_label_b() -> String {
    "Set B".into()
}

#[derive(Deserialize)]
struct BatchRepoEntry {
    name: String,
    reference: PathBuf,
    candidate_a: PathBuf,
    #[serde(default)]
    candidate_b: Option<PathBuf>,
}

fn read_text(path: &PathBuf) -> Result<String, AppError> {
    std::fs::read_to_string(path)
        .map_err(|e| AppError::User(format!("cannot read {}: {e}", path.display())))
}

fn cmd_eval(args: EvalArgs) -> Result<(), AppError> {
    let cfg = resolve_config(&args.common)?;
    init_logging(&cfg);
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| AppError::Pipeline(format!("cannot create {}: {e}", cfg.out_dir.display())))?;

    if let Some(batch) = &args.batch {
        let manifest: BatchManifest = serde_json::from_str(&read_text(batch)?)
            .map_err(|e| AppError::User(format!("invalid batch manifest: {e}")))?;
        let mut rows = Vec::new();
        for repo in &manifest.repos {
            let reference = read_text(&repo.reference)?;
            let score = |candidate_path: &PathBuf| -> Result<_, AppError> {
                let text = read_text(candidate_path)?;
                let doc = document_from_markdown(&text);
                let eval = evaluate_repo(&doc, &reference, &cfg.embedding)
                    .map_err(|e| AppError::Pipeline(e.to_string()))?;
                Ok((eval.overall_bleu.score, eval.overall_bert))
            };
            let (bleu_a, bert_a) = score(&repo.candidate_a)?;
            let (bleu_b, bert_b) = match &repo.candidate_b {
                Some(path) => {
                    let (b, r) = score(path)?;
                    (Some(b), Some(r))
                }
                None => (None, None),
            };
            rows.push(BatchRow {
                repo: repo.name.clone(),
                bleu_a,
                bert_a,
                bleu_b,
                bert_b,
            });
        }
        let markdown = render_batch_markdown(&manifest.label_a, &manifest.label_b, &rows);
        let md_path = cfg.out_dir.join("eval_report.md");
        std::fs::write(&md_path, &markdown)
            .map_err(|e| AppError::Pipeline(format!("cannot write report: {e}")))?;
        std::fs::write(
            cfg.out_dir.join("eval_report.json"),
            serde_json::to_string_pretty(&rows).expect("rows serialize"),
        )
        .map_err(|e| AppError::Pipeline(format!("cannot write report: {e}")))?;
        print!("{markdown}");
        println!("wrote {}", md_path.display());
        return Ok(());
    }

    let (Some(generated), Some(reference)) = (&args.generated, &args.reference) else {
        return Err(AppError::User(
            "eval needs either --batch, or both --generated and --reference".into(),
        ));
    };
    let generated_text = read_text(generated)?;
    let reference_text = read_text(reference)?;
    let doc = document_from_markdown(&generated_text);
    let eval = evaluate_repo(&doc, &reference_text, &cfg.embedding)
        .map_err(|e| AppError::Pipeline(e.to_string()))?;
    // quick sanity row, then the full JSON report
    let overall = bleu(
        &generated_text,
        &[reference_text.as_str()],
        4,
        Smoothing::AddOneOnZero,
    )
    .map_err(|e| AppError::Pipeline(e.to_string()))?;
    println!(
        "overall: BLEU {:.2}  P {:.3}  R {:.3}  F1 {:.3}  ({} aligned sections)",
        overall.score * 100.0,
        eval.overall_bert.precision,
        eval.overall_bert.recall,
        eval.overall_bert.f1,
        eval.aligned_pairs()
    );
    for section in &eval.sections {
        println!(
            "  {}: BLEU {:.2}  F1 {:.3}",
            section.heading,
            section.bleu.score * 100.0,
            section.bert.f1
        );
    }
    let json_path = cfg.out_dir.join("eval_report.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&eval).expect("report serializes"),
    )
    .map_err(|e| AppError::Pipeline(format!("cannot write report: {e}")))?;
    println!("wrote {}", json_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Index(common) => cmd_index(common),
        Command::Query(args) => cmd_query(args),
        Command::Dataset(args) => cmd_dataset(args),
        Command::Eval(args) => cmd_eval(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1, // usage problems are user errors
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(AppError::User(message)) => {
            eprintln!("error: {message}");
            std::process::exit(1);
        }
        Err(AppError::Pipeline(message)) => {
            eprintln!("error: {message}");
            std::process::exit(2);
        }
    }
}
