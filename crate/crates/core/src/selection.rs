//! Active node selection: scores every node with one of four heuristics
//! (PageRank centrality, cluster density, text-attribute length, degree) and
//! takes a budget-limited candidate set for LLM enhancement. Heuristics can
//! also be blended by linear interpolation.
//!
//! All operations are deterministic given `(graph, seed, config)`; ties are
//! broken by ascending node id everywhere.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::LazyLock;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureView};
use crate::graph::{NodeId, TextAttributedGraph};

/// The heuristic that produced a score vector or candidate set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Pagerank,
    ClusterDensity,
    TextLength,
    Degree,
    Combined,
}

/// One real score per node, tagged with the heuristic that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionScores {
    pub method: SelectionMethod,
    pub scores: Vec<f64>,
}

/// The budget-limited node subset eligible for enhancement, in selection
/// priority order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub method: SelectionMethod,
    pub budget_k: usize,
    pub node_ids: Vec<NodeId>,
}

impl CandidateSet {
    /// An empty set; enhancement with it is a no-op.
    pub fn empty() -> Self {
        Self {
            method: SelectionMethod::TextLength,
            budget_k: 0,
            node_ids: Vec::new(),
        }
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Format(format!("encoding candidate set: {e}")))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn id_set(&self) -> HashSet<NodeId> {
        self.node_ids.iter().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortDirection {
    Ascending,
    Descending,
}

/// Blend weight for [`combine_scores`]: `alpha` on PageRank, `1 - alpha` on
/// cluster density.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CombinedSelectionConfig {
    pub alpha: f64,
}

impl CombinedSelectionConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
            return Err(Error::Argument(format!("alpha must be in [0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }
}

pub struct PageRankOutcome {
    pub scores: SelectionScores,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration on the column-stochastic transition matrix of the
/// undirected graph with uniform teleport. Isolated (dangling) nodes
/// redistribute their mass uniformly. Stops when the L1 change drops below
/// `tol` or after `max_iter` sweeps; non-convergence is reported through the
/// flag, not as an error.
pub fn pagerank_scores(
    graph: &TextAttributedGraph,
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PageRankOutcome> {
    let n = graph.num_nodes();
    if n == 0 {
        return Err(Error::Argument("pagerank requires a non-empty graph".into()));
    }
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::Argument(format!(
            "damping must be in (0, 1), got {damping}"
        )));
    }

    let inv_n = 1.0 / n as f64;
    let mut rank = vec![inv_n; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let dangling: f64 = (0..n)
            .filter(|&v| graph.degree(v) == 0)
            .map(|v| rank[v])
            .sum();
        let base = (1.0 - damping) * inv_n + damping * dangling * inv_n;
        for x in next.iter_mut() {
            *x = base;
        }
        for v in 0..n {
            let deg = graph.degree(v);
            if deg == 0 {
                continue;
            }
            let share = damping * rank[v] / deg as f64;
            for &u in graph.neighbors(v) {
                next[u] += share;
            }
        }
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < tol {
            converged = true;
            break;
        }
    }

    Ok(PageRankOutcome {
        scores: SelectionScores {
            method: SelectionMethod::Pagerank,
            scores: rank,
        },
        converged,
        iterations,
    })
}

/// Takes the first `k` nodes after a stable sort by `(score, node_id)` in the
/// requested direction. The default direction used by the pipeline is
/// ascending; descending is available because centrality can plausibly be
/// read either way.
pub fn select_by_pagerank(
    scores: &SelectionScores,
    k: usize,
    direction: SortDirection,
) -> Result<CandidateSet> {
    expect_method(scores, SelectionMethod::Pagerank)?;
    Ok(select_sorted(scores, k, direction))
}

fn expect_method(scores: &SelectionScores, want: SelectionMethod) -> Result<()> {
    if scores.method != want {
        return Err(Error::Argument(format!(
            "expected {want:?} scores, got {:?}",
            scores.method
        )));
    }
    Ok(())
}

/// Shared selection core: sort by `(score, node_id)` and keep the first
/// `min(k, n)` nodes.
pub fn select_sorted(scores: &SelectionScores, k: usize, direction: SortDirection) -> CandidateSet {
    let mut order: Vec<NodeId> = (0..scores.scores.len()).collect();
    order.sort_by(|&a, &b| {
        let cmp = scores.scores[a].total_cmp(&scores.scores[b]);
        let cmp = match direction {
            SortDirection::Ascending => cmp,
            SortDirection::Descending => cmp.reverse(),
        };
        cmp.then(a.cmp(&b))
    });
    order.truncate(k.min(scores.scores.len()));
    CandidateSet {
        method: scores.method,
        budget_k: k,
        node_ids: order,
    }
}

/// Ascending-order selection, the default for every heuristic.
pub fn select_ascending(scores: &SelectionScores, k: usize) -> CandidateSet {
    select_sorted(scores, k, SortDirection::Ascending)
}

/// Ascending selection over density scores (low density first).
pub fn select_by_density(scores: &SelectionScores, k: usize) -> Result<CandidateSet> {
    expect_method(scores, SelectionMethod::ClusterDensity)?;
    Ok(select_ascending(scores, k))
}

pub struct ClusterDensityOutcome {
    pub scores: SelectionScores,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// K-means over the feature rows, then per-node density `1 / (1 + d)` where
/// `d` is the distance to the assigned centroid normalized by the maximum
/// distance over all nodes.
///
/// The procedure is fully deterministic given `seed`:
/// - rng is `ChaCha8Rng::seed_from_u64(seed)`;
/// - the first centroid index is `random_range(0..n)`;
/// - each further centroid draws `u = random::<f64>() * total_sq_dist` and
///   walks the cumulative squared distances to the first index exceeding `u`
///   (d² weighting); a zero total falls back to `random_range(0..n)`;
/// - Lloyd assignment breaks distance ties by lowest centroid index and stops
///   at an assignment fixpoint or after `max_iter` rounds;
/// - an empty cluster is re-seeded to the point farthest from its assigned
///   centroid (ties by lowest point index).
pub fn cluster_density_scores(
    features: &FeatureMatrix,
    num_clusters: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterDensityOutcome> {
    let n = features.num_rows();
    if n == 0 {
        return Err(Error::Argument("k-means requires a non-empty matrix".into()));
    }
    if num_clusters == 0 {
        return Err(Error::Argument("num_clusters must be at least 1".into()));
    }
    let k = num_clusters.min(n);
    let dim = features.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(features.row(rng.random_range(0..n)).to_vec());
    let mut d2 = vec![0.0f64; n];
    while centroids.len() < k {
        let latest = centroids.last().unwrap();
        for i in 0..n {
            let d = sq_dist(features.row(i), latest);
            if centroids.len() == 1 || d < d2[i] {
                d2[i] = d;
            }
        }
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(features.row(idx).to_vec());
    }

    let mut assignments = vec![0usize; n];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let new_assign: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest_centroid(features.row(i), &centroids))
            .collect();
        let mut assign = new_assign;

        // Re-seed empty clusters to the globally farthest point.
        let mut counts = vec![0usize; k];
        for &c in &assign {
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far_idx = 0;
            let mut far_d = -1.0;
            for i in 0..n {
                if counts[assign[i]] <= 1 {
                    continue; // moving the last member would just empty another cluster
                }
                let d = sq_dist(features.row(i), &centroids[assign[i]]);
                if d > far_d {
                    far_d = d;
                    far_idx = i;
                }
            }
            counts[assign[far_idx]] -= 1;
            assign[far_idx] = c;
            counts[c] = 1;
            centroids[c] = features.row(far_idx).to_vec();
        }

        let fixpoint = assign == assignments;
        assignments = assign;

        // Update step: centroid = mean of members.
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let mut mean = vec![0.0f64; dim];
            for i in 0..n {
                if assignments[i] == c {
                    for (m, x) in mean.iter_mut().zip(features.row(i)) {
                        *m += x;
                    }
                }
            }
            for m in &mut mean {
                *m /= counts[c] as f64;
            }
            centroids[c] = mean;
        }

        if fixpoint {
            break;
        }
    }

    let dist: Vec<f64> = (0..n)
        .map(|i| sq_dist(features.row(i), &centroids[assignments[i]]).sqrt())
        .collect();
    let dmax = dist.iter().cloned().fold(0.0f64, f64::max);
    let scores = dist
        .iter()
        .map(|&d| {
            let nd = if dmax > 0.0 { d / dmax } else { 0.0 };
            1.0 / (1.0 + nd)
        })
        .collect();

    Ok(ClusterDensityOutcome {
        scores: SelectionScores {
            method: SelectionMethod::ClusterDensity,
            scores,
        },
        assignments,
        centroids,
        iterations,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Sum of squared distances to assigned centroids; non-increasing across
/// Lloyd rounds.
pub fn kmeans_objective(features: &FeatureMatrix, centroids: &[Vec<f64>], assign: &[usize]) -> f64 {
    (0..features.num_rows())
        .map(|i| sq_dist(features.row(i), &centroids[assign[i]]))
        .sum()
}

/// Content word count per node: whitespace tokens, lowercased, leading and
/// trailing ASCII punctuation stripped, stopwords and empty leftovers
/// dropped. Lower counts select first.
pub fn text_length_scores(
    graph: &TextAttributedGraph,
    stopwords: &HashSet<String>,
) -> SelectionScores {
    let scores = (0..graph.num_nodes())
        .map(|v| content_word_count(graph.text(v), stopwords) as f64)
        .collect();
    SelectionScores {
        method: SelectionMethod::TextLength,
        scores,
    }
}

pub fn content_word_count(text: &str, stopwords: &HashSet<String>) -> usize {
    text.split_whitespace()
        .map(|tok| {
            tok.to_lowercase()
                .trim_matches(|c: char| c.is_ascii_punctuation())
                .to_string()
        })
        .filter(|tok| !tok.is_empty() && !stopwords.contains(tok))
        .count()
}

static DEFAULT_STOPWORDS: LazyLock<HashSet<String>> = LazyLock::new(|| {
    include_str!("../data/stopwords.txt")
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
});

/// The bundled list of 127 common English stopwords.
pub fn default_stopwords() -> &'static HashSet<String> {
    &DEFAULT_STOPWORDS
}

/// Loads a stopword file: one lowercase token per line.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    let file =
        File::open(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let mut words = HashSet::new();
    for line in BufReader::new(file).lines() {
        let word = line?.trim().to_lowercase();
        if !word.is_empty() {
            words.insert(word);
        }
    }
    Ok(words)
}

/// Sorts nodes ascending by `(degree, node_id)` and keeps the lowest
/// `ceil(percentile / 100 * n)` of them.
pub fn select_by_degree(graph: &TextAttributedGraph, percentile: f64) -> Result<CandidateSet> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::Argument(format!(
            "percentile must be in (0, 100], got {percentile}"
        )));
    }
    let n = graph.num_nodes();
    let take = ((percentile / 100.0) * n as f64).ceil() as usize;
    let scores = SelectionScores {
        method: SelectionMethod::Degree,
        scores: (0..n).map(|v| graph.degree(v) as f64).collect(),
    };
    Ok(select_ascending(&scores, take))
}

/// Degree of every node as a score vector (ascending selection order).
pub fn degree_scores(graph: &TextAttributedGraph) -> SelectionScores {
    SelectionScores {
        method: SelectionMethod::Degree,
        scores: (0..graph.num_nodes()).map(|v| graph.degree(v) as f64).collect(),
    }
}

/// Linear interpolation of min-max-normalized PageRank and density scores:
/// `alpha * pagerank + (1 - alpha) * density`. A constant input vector
/// normalizes to all zeros. Selection over the result is ascending, like its
/// constituents.
pub fn combine_scores(
    pagerank: &SelectionScores,
    density: &SelectionScores,
    cfg: CombinedSelectionConfig,
) -> Result<SelectionScores> {
    expect_method(pagerank, SelectionMethod::Pagerank)?;
    expect_method(density, SelectionMethod::ClusterDensity)?;
    if pagerank.scores.len() != density.scores.len() {
        return Err(Error::Argument(format!(
            "score vectors differ in length: {} vs {}",
            pagerank.scores.len(),
            density.scores.len()
        )));
    }
    let pr = min_max_normalize(&pagerank.scores);
    let de = min_max_normalize(&density.scores);
    let scores = pr
        .iter()
        .zip(&de)
        .map(|(p, d)| cfg.alpha * p + (1.0 - cfg.alpha) * d)
        .collect();
    Ok(SelectionScores {
        method: SelectionMethod::Combined,
        scores,
    })
}

fn min_max_normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}
