//! Neighborhood construction for message passing: a uniform fixed-fanout
//! sample of each center's neighbors, re-ranked by cosine similarity against
//! the center's query embedding, keeping the top `K`.
//!
//! Block construction expands hop by hop: the centers at hop `h` are the
//! union of the previous hop's centers and their ranked neighbors, so layer
//! `l` of an `L`-layer model can aggregate from hop `L - l` batches. Sampling
//! draws from streams keyed by `(run_seed, epoch, center, hop)`, making
//! batches independent of iteration order and thread schedule.

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{dot, FeatureView};
use crate::graph::{NodeId, TextAttributedGraph};
use crate::rng::{keyed_rng, Lane};

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    /// Stage-1 uniform sample size per hop.
    pub fanout: usize,
    /// Neighbors kept after cosine re-ranking (K).
    pub top_k: usize,
    /// Hops to expand; equals the number of GNN layers.
    pub num_hops: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            fanout: 25,
            top_k: 5,
            num_hops: 2,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 || self.top_k > self.fanout {
            return Err(Error::Argument(format!(
                "top_k must satisfy 1 <= top_k <= fanout, got top_k={} fanout={}",
                self.top_k, self.fanout
            )));
        }
        if self.num_hops == 0 {
            return Err(Error::Argument("num_hops must be at least 1".into()));
        }
        Ok(())
    }
}

/// A center's ranked neighborhood at one hop. Similarities are
/// non-increasing and ties are broken by ascending node id.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborhoodBatch {
    pub center: NodeId,
    pub ranked_neighbors: Vec<NodeId>,
    pub similarity: Vec<f64>,
}

/// All batches for one hop, with centers sorted ascending and `batches`
/// aligned to `centers`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockLayer {
    pub centers: Vec<NodeId>,
    pub batches: Vec<NeighborhoodBatch>,
}

/// Hop-layered batches plus the final input frontier. `layers[0]` holds the
/// seed centers; `input_nodes` is every node whose features the first GNN
/// layer reads.
#[derive(Clone, Debug, PartialEq)]
pub struct Blocks {
    pub layers: Vec<BlockLayer>,
    pub input_nodes: Vec<NodeId>,
}

impl Blocks {
    pub fn seeds(&self) -> &[NodeId] {
        &self.layers[0].centers
    }
}

/// Returns all neighbors when the degree fits in `fanout`, otherwise a
/// uniform sample without replacement, sorted ascending.
pub fn uniform_sample(
    graph: &TextAttributedGraph,
    node: NodeId,
    fanout: usize,
    rng: &mut impl Rng,
) -> Vec<NodeId> {
    let nbrs = graph.neighbors(node);
    if nbrs.len() <= fanout {
        return nbrs.to_vec();
    }
    let mut picked: Vec<NodeId> = rand::seq::index::sample(rng, nbrs.len(), fanout)
        .into_iter()
        .map(|i| nbrs[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Ranks `candidates` by cosine similarity to `query` (descending, ties by
/// ascending id) and keeps the first `min(k, |candidates|)`. Rows are
/// unit-norm, so similarity is a dot product.
pub fn rerank_topk(
    center: NodeId,
    query: &[f64],
    candidates: &[NodeId],
    features: &dyn FeatureView,
    k: usize,
) -> NeighborhoodBatch {
    let mut scored: Vec<(f64, NodeId)> = candidates
        .iter()
        .map(|&u| (dot(query, features.row(u)), u))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k.min(candidates.len()));
    NeighborhoodBatch {
        center,
        ranked_neighbors: scored.iter().map(|&(_, u)| u).collect(),
        similarity: scored.iter().map(|&(s, _)| s).collect(),
    }
}

/// One center's sampled-and-ranked neighborhood at one hop.
pub fn sample_and_rank(
    graph: &TextAttributedGraph,
    center: NodeId,
    query: &[f64],
    features: &dyn FeatureView,
    cfg: &SamplerConfig,
    rng: &mut impl Rng,
) -> NeighborhoodBatch {
    let sampled = uniform_sample(graph, center, cfg.fanout, rng);
    rerank_topk(center, query, &sampled, features, cfg.top_k)
}

/// Expands `num_hops` layers of batches from the seed set, using each
/// center's own feature row as the re-ranking query. This is the inference
/// path; training interleaves enhancement and supplies overridden queries.
pub fn build_blocks(
    graph: &TextAttributedGraph,
    seed_nodes: &[NodeId],
    cfg: &SamplerConfig,
    features: &dyn FeatureView,
    run_seed: u64,
    lane: Lane,
    epoch: u32,
) -> Result<Blocks> {
    cfg.validate()?;
    let mut frontier: Vec<NodeId> = seed_nodes.to_vec();
    frontier.sort_unstable();
    frontier.dedup();

    let mut layers = Vec::with_capacity(cfg.num_hops);
    for hop in 0..cfg.num_hops {
        let mut batches = Vec::with_capacity(frontier.len());
        let mut next = frontier.clone();
        for &center in &frontier {
            let mut rng = keyed_rng(run_seed, lane, epoch, center as u64, hop as u64);
            let batch = sample_and_rank(graph, center, features.row(center), features, cfg, &mut rng);
            next.extend_from_slice(&batch.ranked_neighbors);
            batches.push(batch);
        }
        layers.push(BlockLayer {
            centers: frontier.clone(),
            batches,
        });
        next.sort_unstable();
        next.dedup();
        frontier = next;
    }

    Ok(Blocks {
        layers,
        input_nodes: frontier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMatrix;
    use crate::graph::{NodeRecord, Split};

    fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> TextAttributedGraph {
        let records = (0..n)
            .map(|id| NodeRecord {
                id,
                text: String::new(),
                label: 0,
                split: Split::Train,
            })
            .collect();
        TextAttributedGraph::from_parts(records, edges).unwrap()
    }

    fn basis_features(n: usize) -> FeatureMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row
            })
            .collect();
        FeatureMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn undersized_neighborhood_returns_all() {
        let g = graph_from_edges(4, &[(0, 1), (0, 2), (0, 3)]);
        let mut rng = keyed_rng(1, Lane::Sample, 0, 0, 0);
        assert_eq!(uniform_sample(&g, 0, 5, &mut rng), vec![1, 2, 3]);
    }

    #[test]
    fn oversized_neighborhood_sample_is_deterministic() {
        let edges: Vec<(usize, usize)> = (1..101).map(|i| (0, i)).collect();
        let g = graph_from_edges(101, &edges);
        let a = uniform_sample(&g, 0, 10, &mut keyed_rng(9, Lane::Sample, 2, 0, 1));
        let b = uniform_sample(&g, 0, 10, &mut keyed_rng(9, Lane::Sample, 2, 0, 1));
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 10, "sampled without replacement");
    }

    #[test]
    fn rerank_identical_candidate_ranks_first() {
        let features = basis_features(3);
        let query = features.row(1).to_vec();
        let batch = rerank_topk(0, &query, &[2, 1], &features, 2);
        assert_eq!(batch.ranked_neighbors[0], 1);
        assert!((batch.similarity[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rerank_orthogonal_ties_break_by_id() {
        let features = basis_features(4);
        let query = features.row(0).to_vec();
        let batch = rerank_topk(0, &query, &[3, 2, 1], &features, 3);
        assert_eq!(batch.ranked_neighbors, vec![1, 2, 3]);
        assert!(batch.similarity.iter().all(|&s| s.abs() < 1e-12));
    }

    #[test]
    fn rerank_empty_candidates_gives_empty_batch() {
        let features = basis_features(2);
        let batch = rerank_topk(0, features.row(0), &[], &features, 5);
        assert!(batch.ranked_neighbors.is_empty());
        assert!(batch.similarity.is_empty());
    }

    #[test]
    fn single_hop_single_seed_yields_one_batch() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2)]);
        let features = basis_features(3);
        let cfg = SamplerConfig {
            fanout: 5,
            top_k: 5,
            num_hops: 1,
        };
        let blocks = build_blocks(&g, &[1], &cfg, &features, 7, Lane::Sample, 0).unwrap();
        assert_eq!(blocks.layers.len(), 1);
        assert_eq!(blocks.layers[0].batches.len(), 1);
        assert_eq!(blocks.layers[0].batches[0].ranked_neighbors, vec![0, 2]);
    }

    #[test]
    fn path_graph_frontier_expands_fully() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2)]);
        let features = basis_features(3);
        let cfg = SamplerConfig {
            fanout: 5,
            top_k: 5,
            num_hops: 2,
        };
        let blocks = build_blocks(&g, &[0], &cfg, &features, 7, Lane::Sample, 0).unwrap();
        assert_eq!(blocks.layers[0].centers, vec![0]);
        assert_eq!(blocks.layers[1].centers, vec![0, 1]);
        assert_eq!(blocks.input_nodes, vec![0, 1, 2]);
    }

    #[test]
    fn isolated_seed_has_empty_batches() {
        let g = graph_from_edges(2, &[]);
        let features = basis_features(2);
        let cfg = SamplerConfig {
            fanout: 3,
            top_k: 2,
            num_hops: 2,
        };
        let blocks = build_blocks(&g, &[0], &cfg, &features, 7, Lane::Sample, 0).unwrap();
        assert_eq!(blocks.input_nodes, vec![0]);
        for layer in &blocks.layers {
            assert!(layer.batches[0].ranked_neighbors.is_empty());
        }
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig { fanout: 4, top_k: 5, num_hops: 2 }.validate().is_err());
        assert!(SamplerConfig { fanout: 4, top_k: 0, num_hops: 2 }.validate().is_err());
        assert!(SamplerConfig { fanout: 4, top_k: 4, num_hops: 0 }.validate().is_err());
        assert!(SamplerConfig::default().validate().is_ok());
    }
}
