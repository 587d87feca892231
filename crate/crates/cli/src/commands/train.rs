//! `ellagnn train`: the full pipeline. Loads the canonical dataset and
//! candidate set, wires the enhancement gate (real or mock clients), trains,
//! and writes `checkpoint.bin` plus `metrics.jsonl`. Budget exhaustion is a
//! normal outcome, not an error.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use serde::Serialize;

use ellagnn_core::enhance::{
    BudgetLedger, ChatClient, Clock, CompletionParams, Embedder, EnhancementCache,
    EnhancementPolicy, Enhancer, HttpChatClient, HttpEmbedder, MockChatClient, MockEmbedder,
    PromptCatalog,
};
use ellagnn_core::features::FeatureView;
use ellagnn_core::gnn::{predict, save_checkpoint, train, OptimizerChoice, TrainConfig};
use ellagnn_core::graph::Split;
use ellagnn_core::metrics::accuracy;
use ellagnn_core::sampler::SamplerConfig;
use ellagnn_core::selection::CandidateSet;

use super::load_dataset;
use crate::config::{pick, pick_opt, FileConfig};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// candidate_set.json; omitted means an empty candidate set
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// prompt_catalog.json; defaults to the bundled catalog
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Enhancement cache (JSONL, appended to across runs)
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Per-node enhancement probability
    #[arg(long)]
    pub p: Option<f64>,
    /// Hard cap on LLM calls for this run
    #[arg(long)]
    pub budget: Option<u64>,
    /// Use the deterministic mock chat client (no network, no credentials)
    #[arg(long)]
    pub mock_llm: bool,
    /// Use the deterministic mock embedder for enhancement encoding
    #[arg(long)]
    pub mock_embed: bool,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// adam | sgd
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub fanout: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub max_inflight: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Gate batch seed (query) nodes in addition to ranked neighbors
    #[arg(long)]
    pub enhance_query_nodes: Option<bool>,
    /// Output directory for checkpoint.bin and metrics.jsonl
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    dataset: &'a PathBuf,
    sampler: &'a SamplerConfig,
    training: &'a TrainConfig,
    p: f64,
    budget: Option<u64>,
    max_inflight: usize,
    enhance_query_nodes: bool,
    mock_llm: bool,
    mock_embed: bool,
}

pub fn run(args: TrainArgs) -> CliResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let (samp, enh, tr) = (file.sampler(), file.enhancement(), file.training());

    let dataset = pick_opt(args.dataset.clone(), file.dataset_dir())
        .ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
    let out_dir = pick_opt(args.out.clone(), file.output_dir.clone())
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;

    let optimizer = match pick(args.optimizer.clone(), tr.optimizer.clone(), "adam".into()).as_str()
    {
        "adam" => OptimizerChoice::Adam,
        "sgd" => OptimizerChoice::Sgd,
        other => return Err(CliError::Usage(format!("unknown optimizer `{other}`"))),
    };
    let train_cfg = TrainConfig {
        num_layers: pick(args.layers, tr.num_layers, 2),
        hidden_dim: pick(args.hidden_dim, tr.hidden_dim, 256),
        learning_rate: pick(args.lr, tr.learning_rate, 0.01),
        weight_decay: pick(args.weight_decay, tr.weight_decay, 5e-4),
        epochs: pick(args.epochs, tr.epochs, 300),
        batch_size: pick(args.batch_size, tr.batch_size, 512),
        seed: pick(args.seed, tr.seed, 0),
        optimizer,
        dropout_rate: pick(args.dropout, tr.dropout_rate, 0.5),
    };
    let sampler_cfg = SamplerConfig {
        fanout: pick(args.fanout, samp.fanout, 25),
        top_k: pick(args.top_k, samp.top_k, 5),
        num_hops: train_cfg.num_layers,
    };
    let p = pick(args.p, enh.p, 0.0);
    let budget = pick_opt(args.budget, enh.max_calls);
    let max_inflight = pick(args.max_inflight, enh.max_inflight, 4);
    let enhance_query_nodes = pick(args.enhance_query_nodes, enh.enhance_query_nodes, true);

    if args.print_config {
        let resolved = ResolvedConfig {
            dataset: &dataset,
            sampler: &sampler_cfg,
            training: &train_cfg,
            p,
            budget,
            max_inflight,
            enhance_query_nodes,
            mock_llm: args.mock_llm,
            mock_embed: args.mock_embed,
        };
        println!("{}", serde_json::to_string_pretty(&resolved).expect("serializable"));
        return Ok(());
    }

    let (graph, features) = load_dataset(&dataset)?;

    let candidates = match pick_opt(args.candidates.clone(), None) {
        Some(path) => CandidateSet::read_json(&path)?,
        None => CandidateSet::empty(),
    };
    for &v in &candidates.node_ids {
        if v >= graph.num_nodes() {
            return Err(CliError::Validation(format!(
                "candidate set references node {v}, but the graph has {} nodes",
                graph.num_nodes()
            )));
        }
    }

    let catalog = match pick_opt(args.catalog.clone(), enh.catalog.clone()) {
        Some(path) => PromptCatalog::load(&path)?,
        None => PromptCatalog::builtin(),
    };

    let timeout = Duration::from_secs(pick(args.timeout_secs, enh.timeout_secs, 60));
    let model = pick(args.model.clone(), enh.model.clone(), "vicuna-7b".into());
    let embed_model = pick(args.embed_model.clone(), enh.embed_model.clone(), "sbert".into());

    let llm: Arc<dyn ChatClient> = if args.mock_llm {
        Arc::new(MockChatClient)
    } else {
        Arc::new(HttpChatClient::from_env(&model, timeout)?)
    };
    let embedder: Arc<dyn Embedder> = if args.mock_embed {
        Arc::new(MockEmbedder::new(features.dim()))
    } else {
        Arc::new(HttpEmbedder::from_env(&embed_model, features.dim(), timeout)?)
    };

    let cache = match pick_opt(args.cache.clone(), enh.cache.clone()) {
        Some(path) => Arc::new(EnhancementCache::open(&path)?),
        None => Arc::new(EnhancementCache::in_memory()),
    };
    let ledger = Arc::new(match budget {
        Some(max) => BudgetLedger::with_cap(max),
        None => BudgetLedger::unlimited(),
    });
    let params = CompletionParams {
        temperature: pick(args.temperature, enh.temperature, 0.7),
        max_tokens: pick(args.max_tokens, enh.max_tokens, 2048),
    };
    let clock = if args.mock_llm { Clock::Fixed(0) } else { Clock::System };
    let enhancer = Enhancer::new(
        EnhancementPolicy::new(p, &candidates, enhance_query_nodes)?,
        catalog,
        llm,
        embedder,
        Arc::clone(&cache),
        Arc::clone(&ledger),
        params,
        max_inflight,
        clock,
    )?;

    let output = train(&graph, &features, &train_cfg, &sampler_cfg, Some(&enhancer))?;

    std::fs::create_dir_all(&out_dir).map_err(ellagnn_core::Error::from)?;
    save_checkpoint(&out_dir.join("checkpoint.bin"), &output.params, &train_cfg)?;
    let mut metrics_file = std::io::BufWriter::new(
        std::fs::File::create(out_dir.join("metrics.jsonl")).map_err(ellagnn_core::Error::from)?,
    );
    for line in &output.metrics {
        let json = serde_json::to_string(line)
            .map_err(|e| CliError::Runtime(format!("encoding metrics: {e}")))?;
        metrics_file
            .write_all(json.as_bytes())
            .and_then(|_| metrics_file.write_all(b"\n"))
            .map_err(ellagnn_core::Error::from)?;
    }
    metrics_file.flush().map_err(ellagnn_core::Error::from)?;

    let test_nodes = graph.nodes_in_split(Split::Test);
    if !test_nodes.is_empty() {
        let preds = predict(
            &output.params,
            &graph,
            &features,
            &sampler_cfg,
            train_cfg.seed,
            &test_nodes,
        )?;
        let mut full = vec![0usize; graph.num_nodes()];
        for (&v, &p) in test_nodes.iter().zip(&preds) {
            full[v] = p;
        }
        let acc = accuracy(&full, graph.labels(), &test_nodes)?;
        println!("test_acc: {acc:.4}");
    }
    println!(
        "best_epoch: {} val_acc: {:.4} llm_calls_total: {}",
        output.best_epoch,
        output.best_val_acc,
        ledger.used_calls()
    );
    if ledger.is_exhausted() {
        log::warn!("llm call budget exhausted during training; later epochs ran unenhanced");
    }
    Ok(())
}
