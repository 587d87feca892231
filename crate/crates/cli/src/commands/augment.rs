//! `ellagnn augment-cache`: offline cache pre-population. Renders every
//! candidate through each requested template, skips cache hits, and spends
//! the call budget on the misses; rerunning after completion makes no new
//! calls. `--pairwise` drives the comparative (arity-2) template, pairing
//! each candidate with its most cosine-similar graph neighbor.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clap::Args;
use sha2::{Digest, Sha256};

use ellagnn_core::enhance::{
    embed_text, render_prompt, BudgetLedger, ChatClient, Clock, CompletionParams, Embedder,
    EnhancementCache, EnhancementRecord, HttpChatClient, HttpEmbedder, Lookup, MockChatClient,
    MockEmbedder, PromptCatalog, PromptTemplate,
};
use ellagnn_core::features::{dot, FeatureMatrix, FeatureView};
use ellagnn_core::graph::TextAttributedGraph;
use ellagnn_core::selection::CandidateSet;
use ellagnn_core::NodeId;

use super::load_dataset;
use crate::config::{pick, pick_opt, FileConfig};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, default_value = "cache.jsonl")]
    pub cache: PathBuf,
    /// Hard cap on LLM calls for this run
    #[arg(long)]
    pub budget: Option<u64>,
    /// Restrict to a single template id
    #[arg(long)]
    pub template: Option<String>,
    /// Use arity-2 templates, pairing each candidate with its most
    /// cosine-similar neighbor
    #[arg(long)]
    pub pairwise: bool,
    #[arg(long)]
    pub mock_llm: bool,
    #[arg(long)]
    pub mock_embed: bool,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
    #[arg(long)]
    pub max_inflight: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

struct Job {
    node: NodeId,
    template_idx: usize,
    texts: Vec<String>,
}

pub fn run(args: AugmentArgs) -> CliResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let enh = file.enhancement();

    let dataset = pick_opt(args.dataset.clone(), file.dataset_dir())
        .ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
    let (graph, features) = load_dataset(&dataset)?;
    let candidates = CandidateSet::read_json(&args.candidates)?;

    let catalog = match pick_opt(args.catalog.clone(), enh.catalog.clone()) {
        Some(path) => PromptCatalog::load(&path)?,
        None => PromptCatalog::builtin(),
    };
    let wanted_arity = if args.pairwise { 2 } else { 1 };
    let templates: Vec<&PromptTemplate> = catalog
        .templates
        .iter()
        .filter(|t| t.arity == wanted_arity)
        .filter(|t| args.template.as_deref().is_none_or(|id| t.id == id))
        .collect();
    if templates.is_empty() {
        return Err(CliError::Usage(format!(
            "no arity-{wanted_arity} template matches{}",
            args.template
                .as_deref()
                .map(|id| format!(" id `{id}`"))
                .unwrap_or_default()
        )));
    }

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
    let cache = EnhancementCache::open(&args.cache)?;
    let ledger = BudgetLedger::with_cap(pick(args.budget, enh.max_calls, u64::MAX));
    let params = CompletionParams {
        temperature: pick(None, enh.temperature, 0.7),
        max_tokens: pick(None, enh.max_tokens, 2048),
    };
    let clock = if args.mock_llm { Clock::Fixed(0) } else { Clock::System };

    let mut jobs = Vec::new();
    for &node in &candidates.node_ids {
        if node >= graph.num_nodes() {
            return Err(CliError::Validation(format!(
                "candidate set references node {node}, but the graph has {} nodes",
                graph.num_nodes()
            )));
        }
        for (idx, template) in templates.iter().enumerate() {
            let texts = if args.pairwise {
                let Some(partner) = nearest_neighbor(&graph, &features, node) else {
                    log::warn!("node {node} is isolated; skipping pairwise enhancement");
                    continue;
                };
                vec![graph.text(node).to_string(), graph.text(partner).to_string()]
            } else {
                vec![graph.text(node).to_string()]
            };
            jobs.push(Job {
                node,
                template_idx: idx,
                texts,
            });
        }
    }

    let (new_records, hits, skipped, failures) = run_jobs(
        &jobs,
        &templates,
        &cache,
        &ledger,
        llm.as_ref(),
        embedder.as_ref(),
        &params,
        clock,
        pick(args.max_inflight, enh.max_inflight, 4),
    );

    println!(
        "{new_records} new record(s), {hits} cache hit(s), {skipped} over budget, {failures} failure(s) -> {}",
        args.cache.display()
    );
    if failures > 0 {
        return Err(CliError::Runtime(format!(
            "{failures} enhancement call(s) failed; rerun to retry the misses"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_jobs(
    jobs: &[Job],
    templates: &[&PromptTemplate],
    cache: &EnhancementCache,
    ledger: &BudgetLedger,
    llm: &dyn ChatClient,
    embedder: &dyn Embedder,
    params: &CompletionParams,
    clock: Clock,
    max_inflight: usize,
) -> (u64, u64, u64, u64) {
    let cursor = AtomicU64::new(0);
    let new_records = AtomicU64::new(0);
    let hits = AtomicU64::new(0);
    let skipped = AtomicU64::new(0);
    let failures = AtomicU64::new(0);
    let errors: Mutex<Vec<String>> = Mutex::new(Vec::new());

    let workers = max_inflight.max(1).min(jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst) as usize;
                if i >= jobs.len() {
                    break;
                }
                let job = &jobs[i];
                let template = templates[job.template_idx];
                let texts: Vec<&str> = job.texts.iter().map(String::as_str).collect();
                let messages = match render_prompt(template, &texts) {
                    Ok(m) => m,
                    Err(e) => {
                        errors.lock().unwrap().push(e.to_string());
                        failures.fetch_add(1, Ordering::SeqCst);
                        continue;
                    }
                };
                let hash = hex_digest(&messages[1].content);
                let key = (job.node, template.id.clone(), hash.clone());
                let guard = match cache.begin(&key) {
                    Lookup::Hit(_) => {
                        hits.fetch_add(1, Ordering::SeqCst);
                        continue;
                    }
                    Lookup::Miss(guard) => guard,
                };
                let Some(reservation) = ledger.try_reserve() else {
                    skipped.fetch_add(1, Ordering::SeqCst);
                    drop(guard);
                    continue;
                };
                let reply = match llm.complete(&messages, params) {
                    Ok(reply) => reply,
                    Err(e) => {
                        log::warn!("node {}: {e}", job.node);
                        failures.fetch_add(1, Ordering::SeqCst);
                        continue; // reservation released on drop
                    }
                };
                reservation.commit();
                let embedding = match embed_text(embedder, &reply) {
                    Ok(v) => v,
                    Err(e) => {
                        log::warn!("node {}: {e}", job.node);
                        failures.fetch_add(1, Ordering::SeqCst);
                        continue;
                    }
                };
                let record = EnhancementRecord {
                    node_id: job.node,
                    prompt_id: template.id.clone(),
                    input_hash: hash,
                    output_text: reply,
                    embedding,
                    created_at: match clock {
                        Clock::Fixed(t) => t,
                        Clock::System => std::time::SystemTime::now()
                            .duration_since(std::time::UNIX_EPOCH)
                            .map(|d| d.as_secs())
                            .unwrap_or(0),
                    },
                };
                match cache.insert(record) {
                    Ok(()) => {
                        new_records.fetch_add(1, Ordering::SeqCst);
                    }
                    Err(e) => {
                        log::warn!("node {}: cache write failed: {e}", job.node);
                        failures.fetch_add(1, Ordering::SeqCst);
                    }
                }
                drop(guard);
            });
        }
    });

    for e in errors.into_inner().unwrap() {
        log::warn!("{e}");
    }
    (
        new_records.into_inner(),
        hits.into_inner(),
        skipped.into_inner(),
        failures.into_inner(),
    )
}

/// The candidate's most cosine-similar graph neighbor (ties by lowest id).
fn nearest_neighbor(
    graph: &TextAttributedGraph,
    features: &FeatureMatrix,
    node: NodeId,
) -> Option<NodeId> {
    graph
        .neighbors(node)
        .iter()
        .copied()
        .map(|u| (dot(features.row(node), features.row(u)), u))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, u)| u)
}

fn hex_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
