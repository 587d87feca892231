//! `ellagnn eval`: intra-class cosine similarity of the raw features next to
//! the cached-enhancement ("augmented") view, written side by side.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use ellagnn_core::enhance::EnhancementCache;
use ellagnn_core::features::{FeatureMatrix, FeatureView};
use ellagnn_core::metrics::{intra_class_cosine, ClassSimilarityReport, SimilarityVariant};

use super::load_dataset;
use crate::config::{pick_opt, FileConfig};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Enhancement cache supplying the augmented feature rows
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long, default_value = "eval_report.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct SideBySide {
    raw: ClassSimilarityReport,
    augmented: ClassSimilarityReport,
    augmented_nodes: usize,
}

pub fn run(args: EvalArgs) -> CliResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let dataset = pick_opt(args.dataset.clone(), file.dataset_dir())
        .ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
    let (graph, features) = load_dataset(&dataset)?;
    let cache = EnhancementCache::open(&args.cache)?;

    let raw = intra_class_cosine(&features, graph.labels(), SimilarityVariant::Raw)?;

    let latest = cache.latest_per_node();
    let mut rows: Vec<Vec<f64>> = (0..graph.num_nodes())
        .map(|v| features.row(v).to_vec())
        .collect();
    let mut augmented_nodes = 0usize;
    for (&node, record) in &latest {
        if node >= rows.len() {
            return Err(CliError::Validation(format!(
                "cache references node {node}, but the graph has {} nodes",
                rows.len()
            )));
        }
        if record.embedding.len() != features.dim() {
            return Err(CliError::Validation(format!(
                "cache embedding for node {node} has dim {}, dataset has {}",
                record.embedding.len(),
                features.dim()
            )));
        }
        rows[node] = record.embedding.clone();
        augmented_nodes += 1;
    }
    let augmented_matrix = FeatureMatrix::from_rows(rows)?;
    let augmented =
        intra_class_cosine(&augmented_matrix, graph.labels(), SimilarityVariant::Augmented)?;

    let report = SideBySide {
        raw,
        augmented,
        augmented_nodes,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(format!("encoding report: {e}")))?;
    std::fs::write(&args.out, json + "\n").map_err(ellagnn_core::Error::from)?;

    println!("class  raw      augmented");
    for (class, raw_value) in &report.raw.per_class {
        let aug = report.augmented.per_class.get(class).copied().unwrap_or(f64::NAN);
        println!("{class:<6} {raw_value:<8.4} {aug:<8.4}");
    }
    println!(
        "{augmented_nodes} node(s) with cached enhancements -> {}",
        args.out.display()
    );
    Ok(())
}
