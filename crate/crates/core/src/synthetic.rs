//! Synthetic homophilic benchmark graphs with class-separable texts, used by
//! tests, benches, and offline pipeline runs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{NodeRecord, Split, TextAttributedGraph};
use crate::rng::{keyed_rng, Lane};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    /// Edge probability within a class.
    pub intra_p: f64,
    /// Edge probability across classes.
    pub inter_p: f64,
    /// Words drawn per node text.
    pub words_per_text: usize,
    /// Distinct words in each class's vocabulary.
    pub vocab_per_class: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

/// A 200-node, 2-class planted partition with strongly class-indicative
/// texts; a mean-aggregation model should fit it well inside 100 epochs.
pub fn two_class_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        num_nodes: 200,
        num_classes: 2,
        intra_p: 0.06,
        inter_p: 0.004,
        words_per_text: 12,
        vocab_per_class: 20,
        train_frac: 0.5,
        val_frac: 0.2,
        seed,
    }
}

/// Generates the graph: labels round-robin over classes, planted-partition
/// edges, texts drawn from the label's vocabulary, stratified splits.
pub fn generate(cfg: &SyntheticConfig) -> Result<TextAttributedGraph> {
    let n = cfg.num_nodes;
    let labels: Vec<usize> = (0..n).map(|i| i % cfg.num_classes).collect();

    let mut records = Vec::with_capacity(n);
    for id in 0..n {
        let mut rng = keyed_rng(cfg.seed, Lane::Synthetic, 0, id as u64, 0);
        let words: Vec<String> = (0..cfg.words_per_text)
            .map(|_| {
                let w = rng.random_range(0..cfg.vocab_per_class);
                format!("class{}word{w}", labels[id])
            })
            .collect();
        records.push(NodeRecord {
            id,
            text: words.join(" "),
            label: labels[id],
            split: Split::Test, // assigned below
        });
    }

    // Stratified split: within each class, earlier ids train, then val.
    for c in 0..cfg.num_classes {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        let train_end = ((members.len() as f64) * cfg.train_frac).ceil() as usize;
        let val_end = train_end + ((members.len() as f64) * cfg.val_frac).ceil() as usize;
        for (rank, &id) in members.iter().enumerate() {
            records[id].split = if rank < train_end {
                Split::Train
            } else if rank < val_end {
                Split::Val
            } else {
                Split::Test
            };
        }
    }

    let mut edges = Vec::new();
    let mut rng = keyed_rng(cfg.seed, Lane::Synthetic, 1, 0, 0);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                cfg.intra_p
            } else {
                cfg.inter_p
            };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    TextAttributedGraph::from_parts(records, &edges)
}
