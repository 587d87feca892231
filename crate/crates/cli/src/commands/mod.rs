pub mod augment;
pub mod eval;
pub mod infer;
pub mod ingest;
pub mod select;
pub mod train;

use std::path::Path;

use ellagnn_core::features::FeatureMatrix;
use ellagnn_core::graph::TextAttributedGraph;

use crate::CliError;

pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.bin";

/// Loads a canonical dataset directory (nodes, edges, features).
pub fn load_dataset(dir: &Path) -> Result<(TextAttributedGraph, FeatureMatrix), CliError> {
    let graph = load_graph_only(dir)?;
    let features = FeatureMatrix::read(&dir.join(FEATURES_FILE))?;
    if features.num_rows() != graph.num_nodes() {
        return Err(CliError::Validation(format!(
            "{}: {} feature rows for {} nodes",
            dir.join(FEATURES_FILE).display(),
            features.num_rows(),
            graph.num_nodes()
        )));
    }
    Ok((graph, features))
}

pub fn load_graph_only(dir: &Path) -> Result<TextAttributedGraph, CliError> {
    Ok(TextAttributedGraph::load(
        &dir.join(NODES_FILE),
        &dir.join(EDGES_FILE),
    )?)
}
