//! `ellagnn ingest`: validate raw `nodes.jsonl` + `edges.txt`, embed every
//! node text (real service or deterministic mock), and write the canonical
//! dataset directory. Re-ingesting a canonical directory is byte-stable.

use std::path::PathBuf;
use std::time::Duration;

use clap::Args;

use ellagnn_core::enhance::{embed_batch_normalized, Embedder, HttpEmbedder, MockEmbedder};
use ellagnn_core::features::{FeatureMatrix, FeatureView};
use ellagnn_core::graph::TextAttributedGraph;

use super::{EDGES_FILE, FEATURES_FILE, NODES_FILE};
use crate::config::{pick, FileConfig};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct IngestArgs {
    /// Raw nodes.jsonl ({"id", "text", "label", "split"} per line)
    #[arg(long)]
    pub nodes: PathBuf,
    /// Raw edges.txt ("src dst" per line, '#' comments ignored)
    #[arg(long)]
    pub edges: PathBuf,
    /// Output directory for the canonical dataset
    #[arg(long)]
    pub out: PathBuf,
    /// Use the deterministic hashed bag-of-tokens embedder
    #[arg(long)]
    pub mock_embed: bool,
    /// Copy a precomputed features.bin instead of embedding texts
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub embed_model: Option<String>,
    /// Embedding width (mock embedder, or expected service width)
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Texts per embedding request
    #[arg(long, default_value_t = 64)]
    pub embed_batch: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: IngestArgs) -> CliResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let enh = file.enhancement();

    let graph = TextAttributedGraph::load(&args.nodes, &args.edges)?;
    if graph.num_edges() == 0 {
        log::warn!("edge file produced no edges; the graph is all isolated nodes");
    }

    std::fs::create_dir_all(&args.out).map_err(ellagnn_core::Error::from)?;
    graph.write_canonical(&args.out.join(NODES_FILE), &args.out.join(EDGES_FILE))?;

    if let Some(src) = &args.features {
        let matrix = FeatureMatrix::read(src)?;
        if matrix.num_rows() != graph.num_nodes() {
            return Err(CliError::Validation(format!(
                "{}: {} feature rows for {} nodes",
                src.display(),
                matrix.num_rows(),
                graph.num_nodes()
            )));
        }
        // Copy verbatim: the file already validated, and byte-stability
        // matters for idempotent re-ingestion.
        std::fs::copy(src, args.out.join(FEATURES_FILE)).map_err(ellagnn_core::Error::from)?;
    } else {
        let dim = pick(args.embed_dim, enh.embed_dim, 64);
        let model = pick(args.embed_model.clone(), enh.embed_model.clone(), "sbert".into());
        let embedder: Box<dyn Embedder> = if args.mock_embed {
            Box::new(MockEmbedder::new(dim))
        } else {
            Box::new(HttpEmbedder::from_env(&model, dim, Duration::from_secs(120))?)
        };
        let mut rows = Vec::with_capacity(graph.num_nodes());
        let texts: Vec<&str> = (0..graph.num_nodes()).map(|v| graph.text(v)).collect();
        for chunk in texts.chunks(args.embed_batch.max(1)) {
            rows.extend(embed_batch_normalized(embedder.as_ref(), chunk)?);
        }
        let matrix = FeatureMatrix::from_rows(rows)?;
        matrix.write(&args.out.join(FEATURES_FILE))?;
    }

    let features = FeatureMatrix::read(&args.out.join(FEATURES_FILE))?;
    println!(
        "{} nodes, {} edges, {} classes, feature dim {}",
        graph.num_nodes(),
        graph.num_edges(),
        graph.num_classes(),
        features.dim()
    );
    Ok(())
}
