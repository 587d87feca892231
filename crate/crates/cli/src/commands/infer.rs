//! `ellagnn infer`: LLM-free inference. Loads a checkpoint, predicts the
//! test split from the original features, writes `predictions.jsonl`, and
//! verifies that the call counter stayed at zero.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use ellagnn_core::enhance::BudgetLedger;
use ellagnn_core::features::FeatureView;
use ellagnn_core::gnn::{load_checkpoint, predict};
use ellagnn_core::graph::Split;
use ellagnn_core::metrics::accuracy;
use ellagnn_core::sampler::SamplerConfig;

use super::load_dataset;
use crate::config::{pick, pick_opt, FileConfig};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output predictions.jsonl
    #[arg(long, default_value = "predictions.jsonl")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fanout: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct Prediction {
    id: usize,
    pred: usize,
}

pub fn run(args: InferArgs) -> CliResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let samp = file.sampler();

    let dataset = pick_opt(args.dataset.clone(), file.dataset_dir())
        .ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
    let (graph, features) = load_dataset(&dataset)?;
    let (params, train_cfg) = load_checkpoint(&args.checkpoint)?;

    let input_dim = params.dims()[0];
    if input_dim != features.dim() {
        return Err(CliError::Validation(format!(
            "checkpoint expects feature dim {input_dim}, dataset has {}",
            features.dim()
        )));
    }

    let sampler_cfg = SamplerConfig {
        fanout: pick(args.fanout, samp.fanout, 25),
        top_k: pick(args.top_k, samp.top_k, 5),
        num_hops: params.num_layers(),
    };
    let seed = pick(args.seed, None, train_cfg.seed);

    // The inference path has no LLM client at all; the ledger snapshot makes
    // the zero-call contract observable.
    let ledger = BudgetLedger::unlimited();
    let before = ledger.used_calls();

    let test_nodes = graph.nodes_in_split(Split::Test);
    if test_nodes.is_empty() {
        return Err(CliError::Validation("dataset has no test nodes".into()));
    }
    let preds = predict(&params, &graph, &features, &sampler_cfg, seed, &test_nodes)?;

    let delta = ledger.used_calls() - before;
    assert_eq!(delta, 0, "LLM-free inference made {delta} call(s)");

    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&args.out).map_err(ellagnn_core::Error::from)?,
    );
    for (&id, &pred) in test_nodes.iter().zip(&preds) {
        let line = serde_json::to_string(&Prediction { id, pred })
            .map_err(|e| CliError::Runtime(format!("encoding prediction: {e}")))?;
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(ellagnn_core::Error::from)?;
    }
    out.flush().map_err(ellagnn_core::Error::from)?;

    let mut full = vec![0usize; graph.num_nodes()];
    for (&v, &p) in test_nodes.iter().zip(&preds) {
        full[v] = p;
    }
    let acc = accuracy(&full, graph.labels(), &test_nodes)?;
    println!("test_acc: {acc:.4} ({} nodes)", test_nodes.len());
    println!("llm_calls: {delta}");
    Ok(())
}
