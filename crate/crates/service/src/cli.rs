//! The `dq` command line.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dq_core::corpus::{self, Collection};
use dq_core::embeddings;
use dq_core::fusion::{self, NDCG_CUTOFF};
use dq_core::models::{encode_corpus, Clients, Registry};
use dq_core::retrieval::read_trec_run;
use dq_core::selection::{ensure_embeddings, run_method};
use dq_core::{Method, SelectionInput, SelectionParams};

use crate::config::{ServiceConfig, DEFAULT_REGISTRY};
use crate::server::{serve, Service};

type CliResult = Result<(), Box<dyn std::error::Error>>;

#[derive(Debug, Parser)]
#[command(
    name = "dq",
    version,
    about = "Rank dense retrievers for a collection without relevance judgments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the job service and its HTTP API.
    Serve(ServeArgs),
    /// Encode a collection's corpus with one model and cache the vectors.
    Encode(EncodeArgs),
    /// Run one selection method locally and print the ranked models.
    Select(SelectArgs),
    /// Score TREC runs against qrels and compare with a predicted ranking.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    /// Overrides the configured data directory.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Serve the planted synthetic pool generated from this seed.
    #[arg(long)]
    pub planted: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RegistryArgs {
    /// Model registry file; the built-in stub registry when omitted.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Use this encoder endpoint for every model.
    #[arg(long)]
    pub encoder_endpoint: Option<String>,
}

impl RegistryArgs {
    fn load(&self) -> Result<Registry, Box<dyn std::error::Error>> {
        let config = ServiceConfig {
            registry_path: self.registry.clone(),
            encoder_endpoint: self.encoder_endpoint.clone(),
            ..ServiceConfig::default()
        };
        Ok(config.registry()?)
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Directory holding corpus.jsonl.
    #[arg(long)]
    pub collection: PathBuf,
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub registry: RegistryArgs,
    /// Output file; `<collection>/<model>.dqv` when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = dq_core::models::DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Directory holding corpus.jsonl and optionally queries.jsonl.
    #[arg(long)]
    pub collection: PathBuf,
    #[arg(long)]
    pub method: Method,
    /// Query file to use instead of the collection's queries.jsonl.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub n_docs: Option<usize>,
    #[arg(long)]
    pub cap: Option<usize>,
    /// Further parameters as a JSON object, e.g. '{"rrf_c": 30}'.
    #[arg(long)]
    pub params: Option<String>,
    #[command(flatten)]
    pub registry: RegistryArgs,
    /// Embedding cache directory; the collection directory when omitted.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Print the full result as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// TREC run files, one per model; the model id is the run tag.
    #[arg(long = "run", required = true, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Predicted model order, best first, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub predicted: Option<Vec<String>>,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    init_tracing();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("DQ_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Serve(a) => serve_cmd(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Select(a) => select_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    }
}

fn serve_cmd(args: ServeArgs) -> CliResult {
    let mut config = match &args.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    if let Some(dir) = args.data_dir {
        config.data_dir = dir;
    }
    let service = match args.planted {
        Some(seed) => Service::planted(config, seed)?,
        None => Service::from_config(config)?,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let router = service.router();
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(service.config.bind).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        std::io::stdout().flush()?;
        serve(listener, router, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    service.shutdown();
    Ok(())
}

fn encode_cmd(args: EncodeArgs) -> CliResult {
    let registry = args.registry.load()?;
    let record = registry.get(&args.model)?;
    let docs = corpus::read_file(&args.collection.join(corpus::CORPUS_FILE), corpus::parse_corpus)?;
    let clients = Clients::new();
    let encoder = clients.encoder_for(record)?;
    let matrix = encode_corpus(encoder.as_ref(), record, &docs, args.batch_size, |done, total| {
        eprintln!("encoded {done}/{total}");
    })?;
    let out = args
        .out
        .unwrap_or_else(|| embeddings::path_for(&args.collection, &record.model_id));
    embeddings::save(&matrix, &out)?;
    println!(
        "{} {} vectors of dim {} -> {}",
        record.model_id,
        matrix.len(),
        matrix.dim(),
        out.display()
    );
    Ok(())
}

fn select_params(args: &SelectArgs) -> Result<SelectionParams, Box<dyn std::error::Error>> {
    let mut params = match &args.params {
        Some(json) => serde_json::from_str::<SelectionParams>(json)?,
        None => SelectionParams::default(),
    };
    params.k = args.k;
    params.seed = args.seed;
    if let Some(n) = args.n_docs {
        params.n_docs = n;
    }
    if let Some(c) = args.cap {
        params.cap = c;
    }
    params.validate()?;
    Ok(params)
}

fn load_collection(dir: &Path, queries: Option<&Path>) -> Result<Collection, Box<dyn std::error::Error>> {
    let mut collection = Collection::load_dir(dir)?;
    if let Some(q) = queries {
        collection.queries = Some(corpus::read_file(q, corpus::parse_queries)?);
    }
    Ok(collection)
}

fn select_cmd(args: SelectArgs) -> CliResult {
    let params = select_params(&args)?;
    let registry = args.registry.load()?;
    let collection = load_collection(&args.collection, args.queries.as_deref())?;
    let clients = Clients::new();
    let cache = args.cache_dir.clone().unwrap_or_else(|| args.collection.clone());
    std::fs::create_dir_all(&cache)?;

    let embeddings = if args.method.requires_embeddings() {
        ensure_embeddings(
            &cache,
            &collection.corpus,
            &registry,
            &clients,
            params.batch_size,
            |done, total| {
                eprintln!("[Dataset Encoding] {done}/{total} models");
            },
        )?
    } else {
        BTreeMap::new()
    };
    let input = SelectionInput {
        corpus: &collection.corpus,
        queries: collection.queries.as_deref(),
        registry: &registry,
        embeddings: &embeddings,
        clients: &clients,
    };
    let result = run_method(&input, args.method, &params, |done, total| {
        eprintln!("[Model Selection] {done}/{total} models");
    })?;
    let mut stdout = std::io::stdout().lock();
    if args.json {
        serde_json::to_writer_pretty(&mut stdout, &result)?;
        writeln!(stdout)?;
    } else {
        stdout.write_all(result.to_table().as_bytes())?;
    }
    Ok(())
}

/// Per-model mean nDCG@10, τ between predicted and true orders, and Δ-best of the top prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ndcg: BTreeMap<String, f64>,
    pub kendall_tau: Option<f64>,
    pub delta_best: Option<f64>,
}

impl EvalReport {
    pub fn render(&self) -> String {
        let width = self.ndcg.keys().map(String::len).max().unwrap_or(0).max("model".len());
        let mut out = format!("{:<width$}  ndcg@10\n", "model");
        for id in fusion::order_by_value(&self.ndcg) {
            out.push_str(&format!("{id:<width$}  {:.6}\n", self.ndcg[&id]));
        }
        if let Some(t) = self.kendall_tau {
            out.push_str(&format!("kendall_tau  {t:.6}\n"));
        }
        if let Some(d) = self.delta_best {
            out.push_str(&format!("delta_best  {d:.6}\n"));
        }
        out
    }
}

pub fn evaluate(
    runs: &[PathBuf],
    qrels: &Path,
    predicted: Option<&[String]>,
) -> Result<EvalReport, Box<dyn std::error::Error>> {
    let qrels = corpus::read_file(qrels, corpus::parse_qrels)?;
    let mut ndcg = BTreeMap::new();
    for path in runs {
        let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let run = read_trec_run(std::io::BufReader::new(file))?;
        if ndcg
            .insert(run.model_id.clone(), fusion::mean_ndcg(&run, &qrels, NDCG_CUTOFF))
            .is_some()
        {
            return Err(format!("two runs are tagged {:?}", run.model_id).into());
        }
    }
    let (kendall_tau, delta_best) = match predicted {
        Some(order) => {
            let truth = fusion::order_by_value(&ndcg);
            let tau = fusion::kendall_tau(order, &truth)?;
            let best = order.first().ok_or("empty predicted order")?;
            (Some(tau), Some(fusion::delta_best(&ndcg, best)?))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        ndcg,
        kendall_tau,
        delta_best,
    })
}

fn eval_cmd(args: EvalArgs) -> CliResult {
    let report = evaluate(&args.runs, &args.qrels, args.predicted.as_deref())?;
    print!("{}", report.render());
    Ok(())
}

/// The built-in registry, as `dq` uses it when no `--registry` is given.
pub fn default_registry() -> Registry {
    Registry::from_toml_str(DEFAULT_REGISTRY).expect("built-in registry")
}
