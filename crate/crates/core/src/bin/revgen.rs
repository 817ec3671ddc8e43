use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use revgen_core::dataset::{self, GenerationSample, SplitSizes};
use revgen_core::eval::{self, EvalPair, EvalTarget, MetricsRow, Provenance, Split, Variant};
use revgen_core::generation::{
    self, GenConfig, GeneratedReview, GenerationClient, PromptJob, ResponseCache,
};
use revgen_core::humaneval::server::{self, AppState};
use revgen_core::humaneval::{self, Session, SessionStore};
use revgen_core::ingest::{self, IngestReport, ParsedLines, SkipCounts};
use revgen_core::io;
use revgen_core::metrics::{EmbeddingProvider, HashingProvider, HttpEmbeddingProvider};
use revgen_core::prompt::{self, PromptExample, PromptMode, PromptOptions};

#[derive(Parser)]
#[command(
    name = "revgen",
    version,
    about = "Personalized review generation: data, prompts, generation, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw review + metadata dumps into corpus.jsonl
    Ingest(IngestArgs),
    /// Build train / simple_eval / hard_eval splits from a corpus
    Build(BuildArgs),
    /// Render prompts for a split
    Prompt(PromptArgs),
    /// Generate reviews through a chat-completions endpoint
    Generate(GenerateArgs),
    /// Score generations against references
    Eval(EvalArgs),
    /// Average repeated runs and render report.md / report.csv
    Report(ReportArgs),
    /// Sample human-evaluation pairs
    Pairs(PairsArgs),
    /// Render a side-by-side case study
    Cases(CasesArgs),
    /// Human evaluation service
    Humaneval {
        #[command(subcommand)]
        command: HumanevalCommand,
    },
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    reviews: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    dataset_tag: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Highest target rating that counts as a negative review
    #[arg(long, default_value_t = dataset::DEFAULT_NEG_MAX_RATING, value_parser = clap::value_parser!(u8).range(1..=3))]
    neg_max_rating: u8,
    #[arg(long, default_value_t = dataset::DEFAULT_TRAIN_SIZE)]
    train_size: usize,
    #[arg(long, default_value_t = dataset::DEFAULT_SIMPLE_SIZE)]
    simple_size: usize,
    #[arg(long, default_value_t = dataset::DEFAULT_HARD_SIZE)]
    hard_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Train,
    Infer,
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long)]
    split: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, conflicts_with = "no_ratings")]
    with_ratings: bool,
    #[arg(long)]
    no_ratings: bool,
    #[arg(long, default_value_t = 2048)]
    budget: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    endpoint: String,
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    parallel: u64,
    #[arg(long)]
    out: PathBuf,
    /// System name written into each line (defaults to the model name)
    #[arg(long)]
    system: Option<String>,
    #[arg(long, default_value = ".revgen-cache")]
    cache_dir: PathBuf,
    #[arg(long)]
    no_cache: bool,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 256)]
    max_new_tokens: u32,
    #[arg(long, default_value_t = 5)]
    max_retries: u32,
    #[arg(long, default_value_t = 120)]
    timeout_secs: u64,
    /// Repeat index; each run gets its own cache namespace
    #[arg(long)]
    run_index: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    WithRating,
    WithoutRating,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Simple,
    Hard,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gens: PathBuf,
    /// Split file (GenerationSample JSON lines) holding the references
    #[arg(long)]
    refs: PathBuf,
    #[arg(long, requires = "embed_model")]
    embed_endpoint: Option<String>,
    #[arg(long, requires = "embed_endpoint")]
    embed_model: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "with-rating")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "simple")]
    split: SplitArg,
    /// Overrides the system name taken from the generations
    #[arg(long)]
    system: Option<String>,
    /// Optional per-sample score file
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// MetricsRow JSON files (repeated runs are averaged)
    #[arg(long, num_args = 1.., required = true)]
    rows: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Split manifest(s) to hash into the provenance footer
    #[arg(long)]
    manifest: Vec<PathBuf>,
    /// Extra provenance entries as key=value
    #[arg(long)]
    note: Vec<String>,
}

#[derive(Args)]
struct PairsArgs {
    #[arg(long)]
    split: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    gens: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CasesArgs {
    /// Comma-separated sample ids
    #[arg(long, value_delimiter = ',')]
    ids: Vec<String>,
    #[arg(long)]
    split: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    gens: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum HumanevalCommand {
    /// Serve the annotation API
    Serve(ServeArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Comma-separated annotator ids
    #[arg(long)]
    annotators: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory holding session files and judgment logs
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value = "default")]
    session_id: String,
    /// Static annotation UI bundle
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest(a) => ingest_cmd(a),
        Command::Build(a) => build_cmd(a),
        Command::Prompt(a) => prompt_cmd(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::Pairs(a) => pairs_cmd(a),
        Command::Cases(a) => cases_cmd(a),
        Command::Humaneval {
            command: HumanevalCommand::Serve(a),
        } => serve_cmd(a),
    }
}

fn ingest_cmd(a: IngestArgs) -> Result<ExitCode> {
    let mut report = IngestReport::default();
    let meta = io::open_text(&a.meta)?;
    let mut meta_lines = ParsedLines::new(meta, ingest::parse_metadata_line, &mut report.metadata);
    let titles = ingest::build_title_map(meta_lines.by_ref());
    if let Some(e) = meta_lines.take_io_error() {
        return Err(e).with_context(|| format!("reading {}", a.meta.display()));
    }

    let mut review_counts = SkipCounts::default();
    let reviews = io::open_text(&a.reviews)?;
    let mut review_lines = ParsedLines::new(reviews, ingest::parse_review_line, &mut review_counts);
    let mut joined = ingest::join_titles(review_lines.by_ref(), &titles);

    let file = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut out = BufWriter::new(file);
    for record in joined.by_ref() {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
        report.emitted += 1;
    }
    out.flush()?;
    report.missing_title = joined.dropped();
    if let Some(e) = review_lines.take_io_error() {
        return Err(e).with_context(|| format!("reading {}", a.reviews.display()));
    }
    report.reviews = review_counts;
    eprintln!("{}", serde_json::to_string(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn build_cmd(a: BuildArgs) -> Result<ExitCode> {
    let records: Vec<ingest::CorpusRecord> = io::read_jsonl(&a.corpus)?;
    let sizes = SplitSizes {
        train: a.train_size,
        simple_eval: a.simple_size,
        hard_eval: a.hard_size,
    };
    let mut set = dataset::build_splits(records, &a.dataset_tag, a.seed, sizes, a.neg_max_rating);
    set.manifest.input_sha256 = Some(io::sha256_file(&a.corpus)?);
    set.check_invariants().map_err(anyhow::Error::msg)?;
    set.write_to(&a.out_dir)?;
    for s in &set.manifest.shortfalls {
        eprintln!(
            "warning: {} has {} of {} requested samples",
            s.split, s.available, s.requested
        );
    }
    eprintln!("{}", serde_json::to_string(&set.manifest.counts)?);
    Ok(ExitCode::SUCCESS)
}

fn prompt_cmd(a: PromptArgs) -> Result<ExitCode> {
    let samples: Vec<GenerationSample> = io::read_jsonl(&a.split)?;
    let opts = PromptOptions {
        include_ratings: !a.no_ratings,
        mode: match a.mode {
            ModeArg::Train => PromptMode::Training,
            ModeArg::Infer => PromptMode::Inference,
        },
        history_token_budget: a.budget,
    };
    let examples = samples
        .iter()
        .map(|s| prompt::build_prompt(s, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    let n = match opts.mode {
        PromptMode::Training => prompt::export_sft_jsonl(&examples, &a.out)?,
        PromptMode::Inference => prompt::write_prompts_jsonl(&examples, &a.out)?,
    };
    eprintln!("wrote {n} prompts to {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn generate_cmd(a: GenerateArgs) -> Result<ExitCode> {
    let examples: Vec<PromptExample> = io::read_jsonl(&a.prompts)?;
    let mut cfg = GenConfig::new(&a.endpoint, &a.model).with_env_api_key();
    cfg.temperature = a.temperature;
    cfg.max_new_tokens = a.max_new_tokens;
    cfg.max_retries = a.max_retries;
    cfg.timeout = Duration::from_secs(a.timeout_secs);
    if let Some(run) = a.run_index {
        cfg.cache_namespace = format!("run-{run}");
    }
    let cache = if a.no_cache {
        None
    } else {
        Some(ResponseCache::open(&a.cache_dir)?)
    };
    let system = a.system.clone().unwrap_or_else(|| a.model.clone());
    let client = GenerationClient::new(cfg, system, cache)?;
    let jobs: Vec<PromptJob> = examples
        .into_iter()
        .map(|e| PromptJob {
            sample_id: e.id,
            prompt: e.prompt,
        })
        .collect();

    let rt = tokio::runtime::Runtime::new()?;
    let outcome = rt.block_on(client.batch_generate(&jobs, a.parallel as usize));
    generation::write_generations(&a.out, &outcome.reviews)?;
    let cached = outcome.reviews.iter().filter(|r| r.cached).count();
    eprintln!(
        "{}",
        serde_json::json!({
            "generated": outcome.reviews.len(),
            "cached": cached,
            "failed": outcome.failures.len(),
            "failures": outcome.failures,
        })
    );
    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn embedding_provider(
    endpoint: Option<&str>,
    model: Option<&str>,
) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match (endpoint, model) {
        (Some(e), Some(m)) => {
            let key = std::env::var(generation::API_KEY_ENV)
                .ok()
                .filter(|k| !k.is_empty());
            Box::new(HttpEmbeddingProvider::new(e, m, key)?)
        }
        _ => Box::new(HashingProvider::default()),
    })
}

fn eval_cmd(a: EvalArgs) -> Result<ExitCode> {
    let gens = generation::read_generations(&a.gens)?;
    let samples: Vec<GenerationSample> = io::read_jsonl(&a.refs)?;
    let refs = eval::reference_map(&samples)?;
    let provider = embedding_provider(a.embed_endpoint.as_deref(), a.embed_model.as_deref())?;
    let system = match a
        .system
        .clone()
        .or_else(|| gens.first().map(|g| g.system_name.clone()))
    {
        Some(s) => s,
        None => bail!("{} has no generations", a.gens.display()),
    };
    let target = EvalTarget {
        system_name: &system,
        variant: match a.variant {
            VariantArg::WithRating => Variant::WithRating,
            VariantArg::WithoutRating => Variant::WithoutRating,
        },
        split: match a.split {
            SplitArg::Simple => Split::Simple,
            SplitArg::Hard => Split::Hard,
        },
    };
    let (mut row, scores) = eval::run_eval(&gens, &refs, provider.as_ref(), target)?;
    row.provenance
        .insert("references_sha256".into(), io::sha256_file(&a.refs)?);
    let mut json = serde_json::to_string_pretty(&row)?;
    json.push('\n');
    io::write_text(&a.out, &json)?;
    if let Some(path) = &a.scores {
        io::write_jsonl(path, &scores)?;
    }
    if row.bert_flagged > 0 {
        eprintln!(
            "warning: {} samples had a zero embedding vector",
            row.bert_flagged
        );
    }
    println!(
        "{} {}: ROUGE-1 {:.2}  ROUGE-L {:.2}  BertScore {:.2}  (n={})",
        row.system_name, row.split, row.rouge1, row.rouge_l, row.bert_mean, row.n_samples
    );
    Ok(ExitCode::SUCCESS)
}

fn report_cmd(a: ReportArgs) -> Result<ExitCode> {
    let mut rows = Vec::new();
    for path in &a.rows {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let row: MetricsRow =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        rows.push(row);
    }
    let averaged = eval::average_groups(&rows)?;
    let mut provenance = Provenance::default();
    for m in &a.manifest {
        provenance.entries.insert(
            format!("manifest {} sha256", m.display()),
            io::sha256_file(m)?,
        );
        if let Ok(text) = fs::read_to_string(m) {
            if let Ok(manifest) = serde_json::from_str::<dataset::Manifest>(&text) {
                provenance.entries.insert(
                    format!("manifest {} seed", m.display()),
                    manifest.seed.to_string(),
                );
            }
        }
    }
    for note in &a.note {
        let (k, v) = note
            .split_once('=')
            .with_context(|| format!("--note {note:?} is not key=value"))?;
        provenance.entries.insert(k.to_string(), v.to_string());
    }
    let report = eval::render_report(&averaged, &provenance);
    fs::create_dir_all(&a.out_dir)?;
    io::write_text(&a.out_dir.join("report.md"), &report.markdown)?;
    io::write_text(&a.out_dir.join("report.csv"), &report.csv)?;
    print!("{}", report.markdown);
    Ok(ExitCode::SUCCESS)
}

/// system → sample_id → text, from one or more gens files.
fn load_generation_sets(paths: &[PathBuf]) -> Result<BTreeMap<String, HashMap<String, String>>> {
    let mut out: BTreeMap<String, HashMap<String, String>> = BTreeMap::new();
    for path in paths {
        let gens: Vec<GeneratedReview> = generation::read_generations(path)?;
        for g in gens {
            let system = out.entry(g.system_name.clone()).or_default();
            if system.insert(g.sample_id.clone(), g.text).is_some() {
                bail!(
                    "{}: duplicate generation for {} / {}",
                    path.display(),
                    g.system_name,
                    g.sample_id
                );
            }
        }
    }
    Ok(out)
}

fn pairs_cmd(a: PairsArgs) -> Result<ExitCode> {
    let samples: Vec<GenerationSample> = io::read_jsonl(&a.split)?;
    let gens = load_generation_sets(&a.gens)?;
    let pairs = eval::build_humaneval_pairs(&samples, &gens, a.n, a.seed)?;
    let n = io::write_jsonl(&a.out, &pairs)?;
    eprintln!("wrote {n} pairs ({} ids x {} systems)", a.n, gens.len());
    Ok(ExitCode::SUCCESS)
}

fn cases_cmd(a: CasesArgs) -> Result<ExitCode> {
    let samples: Vec<GenerationSample> = io::read_jsonl(&a.split)?;
    let refs = eval::reference_map(&samples)?;
    let gens = load_generation_sets(&a.gens)?;
    let md = eval::render_cases(&a.ids, &gens, &refs)?;
    io::write_text(&a.out, &md)?;
    Ok(ExitCode::SUCCESS)
}

fn serve_cmd(a: ServeArgs) -> Result<ExitCode> {
    let pairs: Vec<EvalPair> = io::read_jsonl(&a.pairs)?;
    let session = Session {
        session_id: a.session_id.clone(),
        pairs,
        annotator_ids: humaneval::parse_annotator_csv(&a.annotators),
    };
    let store = Arc::new(SessionStore::open(&a.log)?);
    let handle = store.open_or_create(session)?;
    let snap = handle.snapshot();
    eprintln!(
        "session {}: {} pairs x {} annotators, {} judgments logged",
        snap.session().session_id,
        snap.session().pairs.len(),
        snap.session().annotator_ids.len(),
        snap.log_entries()
    );
    let app = server::router(
        AppState {
            store,
            default_session: Some(a.session_id.clone()),
        },
        a.ui_dir.clone(),
    );
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        server::serve(listener, app).await
    })?;
    Ok(ExitCode::SUCCESS)
}
