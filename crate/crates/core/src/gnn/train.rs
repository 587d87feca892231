//! The training loop: per epoch, per mini-batch of labeled seeds, build
//! blocks (interleaving the enhancement gate with hop expansion), run
//! forward/backward, and step the optimizer. Evaluation and inference always
//! take the LLM-free path over the original features.
//!
//! Enhanced embeddings override base feature rows only inside the batch that
//! drew them; the base matrix is never mutated. Query nodes are gated before
//! sampling (so re-ranking can use `x+`), ranked neighbors after their hop's
//! re-ranking.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::enhance::{EnhanceOutcome, Enhancer};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureView, OverlaidFeatures};
use crate::graph::{NodeId, Split, TextAttributedGraph};
use crate::metrics::{accuracy, gradient_flow};
use crate::rng::{keyed_rng, Lane};
use crate::sampler::{build_blocks, sample_and_rank, BlockLayer, Blocks, SamplerConfig};

use super::model::{forward, loss_and_gradients, DropoutCtx};
use super::{ModelParameters, Optimizer, TrainConfig};

/// One line of the per-epoch metrics stream (`metrics.jsonl`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
    pub gf: f64,
    pub llm_calls_epoch: u64,
    pub llm_calls_total: u64,
    pub enhanced_nodes: usize,
}

pub struct TrainOutput {
    /// Parameters of the best-validation-accuracy epoch.
    pub params: ModelParameters,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub metrics: Vec<EpochMetrics>,
}

/// Trains a model on the graph's train split. `enhancer: None` is the plain
/// baseline; a closed gate (`p = 0` or an empty candidate set) reproduces it
/// exactly.
pub fn train(
    graph: &TextAttributedGraph,
    features: &FeatureMatrix,
    cfg: &TrainConfig,
    sampler_cfg: &SamplerConfig,
    enhancer: Option<&Enhancer>,
) -> Result<TrainOutput> {
    cfg.validate()?;
    sampler_cfg.validate()?;
    if sampler_cfg.num_hops != cfg.num_layers {
        return Err(Error::Argument(format!(
            "sampler num_hops ({}) must equal num_layers ({})",
            sampler_cfg.num_hops, cfg.num_layers
        )));
    }
    if features.num_rows() != graph.num_nodes() {
        return Err(Error::Validation(format!(
            "feature rows ({}) != num_nodes ({})",
            features.num_rows(),
            graph.num_nodes()
        )));
    }
    let train_nodes = graph.nodes_in_split(Split::Train);
    if train_nodes.is_empty() {
        return Err(Error::Validation("graph has no train nodes".into()));
    }
    let val_nodes = graph.nodes_in_split(Split::Val);
    if val_nodes.is_empty() {
        log::warn!("graph has no val nodes; returning the final epoch's parameters");
    }

    let dims = cfg.dims(features.dim(), graph.num_classes());
    let mut params = ModelParameters::glorot_init(&dims, cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &params);

    let mut best_params = params.clone();
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut shuffled = train_nodes.clone();

    for epoch in 0..cfg.epochs {
        let epoch_u32 = epoch as u32;
        let calls_before = enhancer.map_or(0, |e| e.ledger.used_calls());
        let mut enhanced_this_epoch: HashSet<NodeId> = HashSet::new();

        let mut rng = keyed_rng(cfg.seed, Lane::Shuffle, epoch_u32, 0, 0);
        shuffled.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut gf_sum = 0.0;
        let mut batches = 0usize;
        for chunk in shuffled.chunks(cfg.batch_size) {
            let (blocks, overrides) = build_training_blocks(
                graph,
                chunk,
                sampler_cfg,
                features,
                enhancer,
                cfg.seed,
                epoch_u32,
                &mut enhanced_this_epoch,
            )?;
            let view = OverlaidFeatures::new(features, &overrides);
            let dropout = DropoutCtx {
                run_seed: cfg.seed,
                epoch: epoch_u32,
                rate: cfg.dropout_rate,
            };
            let pass = forward(&params, &blocks, &view, Some(&dropout));
            let labels: Vec<usize> = pass.seed_nodes.iter().map(|&v| graph.label(v)).collect();
            let (loss, grads) = loss_and_gradients(&params, &pass, &labels, cfg.weight_decay);
            loss_sum += loss;
            gf_sum += gradient_flow(&grads).gf;
            batches += 1;
            optimizer.step(&mut params, &grads);
        }

        let val_acc = if val_nodes.is_empty() {
            0.0
        } else {
            let preds = predict(&params, graph, features, sampler_cfg, cfg.seed, &val_nodes)?;
            masked_accuracy(&preds, graph, &val_nodes)?
        };

        let calls_total = enhancer.map_or(0, |e| e.ledger.used_calls());
        metrics.push(EpochMetrics {
            epoch,
            loss: loss_sum / batches as f64,
            val_acc,
            gf: gf_sum / batches as f64,
            llm_calls_epoch: calls_total - calls_before,
            llm_calls_total: calls_total,
            enhanced_nodes: enhanced_this_epoch.len(),
        });

        if val_acc > best_val_acc || val_nodes.is_empty() {
            best_val_acc = val_acc;
            best_epoch = epoch;
            best_params = params.clone();
        }
    }

    Ok(TrainOutput {
        params: best_params,
        best_epoch,
        best_val_acc: best_val_acc.max(0.0),
        metrics,
    })
}

/// Hop expansion with the enhancement gate interleaved. Returns the blocks
/// and the batch-scoped feature overrides (`x+` rows) drawn along the way.
///
/// Query nodes are gated before their neighborhoods are sampled, so the
/// re-ranking query is `x+` whenever the center was enhanced; ranked
/// neighbors are gated right after their hop's selection, before they serve
/// as next-hop centers.
#[allow(clippy::too_many_arguments)]
fn build_training_blocks(
    graph: &TextAttributedGraph,
    seeds: &[NodeId],
    cfg: &SamplerConfig,
    features: &FeatureMatrix,
    enhancer: Option<&Enhancer>,
    run_seed: u64,
    epoch: u32,
    enhanced_this_epoch: &mut HashSet<NodeId>,
) -> Result<(Blocks, HashMap<NodeId, Arc<Vec<f64>>>)> {
    let mut overrides: HashMap<NodeId, Arc<Vec<f64>>> = HashMap::new();
    let mut decided: HashSet<NodeId> = HashSet::new();

    let mut frontier: Vec<NodeId> = seeds.to_vec();
    frontier.sort_unstable();
    frontier.dedup();

    if let Some(enh) = enhancer {
        if enh.policy.enhance_query_nodes {
            run_gate(
                enh,
                graph,
                features,
                &frontier,
                run_seed,
                epoch,
                &mut overrides,
                &mut decided,
                enhanced_this_epoch,
            )?;
        }
    }

    let mut layers = Vec::with_capacity(cfg.num_hops);
    for hop in 0..cfg.num_hops {
        let mut batches = Vec::with_capacity(frontier.len());
        let mut newly_ranked: Vec<NodeId> = Vec::new();
        {
            let view = OverlaidFeatures::new(features, &overrides);
            for &center in &frontier {
                let mut rng = keyed_rng(run_seed, Lane::Sample, epoch, center as u64, hop as u64);
                let batch =
                    sample_and_rank(graph, center, view.row(center), &view, cfg, &mut rng);
                newly_ranked.extend_from_slice(&batch.ranked_neighbors);
                batches.push(batch);
            }
        }
        newly_ranked.sort_unstable();
        newly_ranked.dedup();

        if let Some(enh) = enhancer {
            run_gate(
                enh,
                graph,
                features,
                &newly_ranked,
                run_seed,
                epoch,
                &mut overrides,
                &mut decided,
                enhanced_this_epoch,
            )?;
        }

        let mut next = frontier.clone();
        next.extend_from_slice(&newly_ranked);
        next.sort_unstable();
        next.dedup();
        layers.push(BlockLayer {
            centers: frontier.clone(),
            batches,
        });
        frontier = next;
    }

    Ok((
        Blocks {
            layers,
            input_nodes: frontier,
        },
        overrides,
    ))
}

/// Feeds the not-yet-decided nodes through the enhancement gate and records
/// the resulting feature overrides.
#[allow(clippy::too_many_arguments)]
fn run_gate(
    enhancer: &Enhancer,
    graph: &TextAttributedGraph,
    features: &FeatureMatrix,
    nodes: &[NodeId],
    run_seed: u64,
    epoch: u32,
    overrides: &mut HashMap<NodeId, Arc<Vec<f64>>>,
    decided: &mut HashSet<NodeId>,
    enhanced_this_epoch: &mut HashSet<NodeId>,
) -> Result<()> {
    let pending: Vec<(NodeId, &str)> = nodes
        .iter()
        .filter(|v| !decided.contains(v))
        .map(|&v| (v, graph.text(v)))
        .collect();
    if pending.is_empty() {
        return Ok(());
    }
    let outcomes = enhancer.enhance_batch(&pending, run_seed, epoch);
    for ((node, _), outcome) in pending.iter().zip(outcomes) {
        decided.insert(*node);
        if let EnhanceOutcome::Enhanced { embedding, .. } = outcome {
            if embedding.len() != features.dim() {
                return Err(Error::Validation(format!(
                    "enhanced embedding dim {} does not match feature dim {}",
                    embedding.len(),
                    features.dim()
                )));
            }
            enhanced_this_epoch.insert(*node);
            overrides.insert(*node, embedding);
        }
    }
    Ok(())
}

/// LLM-free inference: blocks are built from the original features only and
/// the forward pass runs without dropout. Predictions are aligned with
/// `targets`; ids may repeat.
pub fn predict(
    params: &ModelParameters,
    graph: &TextAttributedGraph,
    features: &FeatureMatrix,
    sampler_cfg: &SamplerConfig,
    seed: u64,
    targets: &[NodeId],
) -> Result<Vec<usize>> {
    predict_with(params, graph, features, sampler_cfg, seed, targets, None)
}

/// Inference with the enhancement gate applied, for measuring how far the
/// LLM-free path drifts from an LLM-incorporated one. Not used in
/// production inference.
pub fn predict_enhanced(
    params: &ModelParameters,
    graph: &TextAttributedGraph,
    features: &FeatureMatrix,
    sampler_cfg: &SamplerConfig,
    seed: u64,
    targets: &[NodeId],
    enhancer: &Enhancer,
) -> Result<Vec<usize>> {
    predict_with(params, graph, features, sampler_cfg, seed, targets, Some(enhancer))
}

fn predict_with(
    params: &ModelParameters,
    graph: &TextAttributedGraph,
    features: &FeatureMatrix,
    sampler_cfg: &SamplerConfig,
    seed: u64,
    targets: &[NodeId],
    enhancer: Option<&Enhancer>,
) -> Result<Vec<usize>> {
    sampler_cfg.validate()?;
    let mut by_node: HashMap<NodeId, usize> = HashMap::new();
    for chunk in targets.chunks(1024.max(1)) {
        let (blocks, overrides) = match enhancer {
            None => {
                let blocks = build_blocks(
                    graph,
                    chunk,
                    sampler_cfg,
                    features,
                    seed,
                    Lane::EvalSample,
                    0,
                )?;
                (blocks, HashMap::new())
            }
            Some(enh) => {
                let mut scratch = HashSet::new();
                build_training_blocks(
                    graph,
                    chunk,
                    sampler_cfg,
                    features,
                    Some(enh),
                    seed,
                    0,
                    &mut scratch,
                )?
            }
        };
        let view = OverlaidFeatures::new(features, &overrides);
        let pass = forward(params, &blocks, &view, None);
        for (row, &node) in pass.seed_nodes.iter().enumerate() {
            let logits = pass.logits.row(row);
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for (c, &x) in logits.iter().enumerate() {
                if x > best_val {
                    best_val = x;
                    best = c;
                }
            }
            by_node.insert(node, best);
        }
    }
    Ok(targets.iter().map(|v| by_node[v]).collect())
}

fn masked_accuracy(
    preds: &[usize],
    graph: &TextAttributedGraph,
    nodes: &[NodeId],
) -> Result<f64> {
    let mut full = vec![0usize; graph.num_nodes()];
    for (&node, &p) in nodes.iter().zip(preds) {
        full[node] = p;
    }
    accuracy(&full, graph.labels(), nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeRecord;

    fn tiny_labeled_graph() -> (TextAttributedGraph, FeatureMatrix) {
        // Two 3-cliques with one bridge; labels follow the cliques.
        let edges = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)];
        let records = (0..6)
            .map(|id| NodeRecord {
                id,
                text: format!("node {id}"),
                label: usize::from(id >= 3),
                split: match id % 3 {
                    0 => Split::Train,
                    1 => Split::Val,
                    _ => Split::Test,
                },
            })
            .collect();
        let graph = TextAttributedGraph::from_parts(records, &edges).unwrap();
        let rows = (0..6)
            .map(|i| {
                let mut row = vec![0.05; 4];
                row[usize::from(i >= 3)] = 1.0;
                row
            })
            .collect();
        let features = FeatureMatrix::from_unnormalized_rows(rows).unwrap();
        (graph, features)
    }

    #[test]
    fn train_learns_separable_cliques() {
        let (graph, features) = tiny_labeled_graph();
        let cfg = TrainConfig {
            num_layers: 2,
            hidden_dim: 8,
            epochs: 40,
            batch_size: 4,
            dropout_rate: 0.1,
            seed: 3,
            ..TrainConfig::default()
        };
        let sampler_cfg = SamplerConfig {
            fanout: 5,
            top_k: 3,
            num_hops: 2,
        };
        let out = train(&graph, &features, &cfg, &sampler_cfg, None).unwrap();
        assert_eq!(out.metrics.len(), 40);
        let test_nodes = graph.nodes_in_split(Split::Test);
        let preds = predict(&out.params, &graph, &features, &sampler_cfg, 3, &test_nodes).unwrap();
        let acc = masked_accuracy(&preds, &graph, &test_nodes).unwrap();
        assert!(acc >= 0.5, "learned accuracy {acc}");
    }

    #[test]
    fn predict_is_deterministic() {
        let (graph, features) = tiny_labeled_graph();
        let cfg = TrainConfig {
            num_layers: 2,
            hidden_dim: 8,
            epochs: 5,
            batch_size: 4,
            seed: 1,
            ..TrainConfig::default()
        };
        let sampler_cfg = SamplerConfig {
            fanout: 5,
            top_k: 3,
            num_hops: 2,
        };
        let out = train(&graph, &features, &cfg, &sampler_cfg, None).unwrap();
        let all: Vec<NodeId> = (0..graph.num_nodes()).collect();
        let a = predict(&out.params, &graph, &features, &sampler_cfg, 9, &all).unwrap();
        let b = predict(&out.params, &graph, &features, &sampler_cfg, 9, &all).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_hops_and_layers_error() {
        let (graph, features) = tiny_labeled_graph();
        let cfg = TrainConfig {
            num_layers: 2,
            ..TrainConfig::default()
        };
        let sampler_cfg = SamplerConfig {
            fanout: 5,
            top_k: 3,
            num_hops: 3,
        };
        assert!(train(&graph, &features, &cfg, &sampler_cfg, None).is_err());
    }
}
