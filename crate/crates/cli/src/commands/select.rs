//! `ellagnn select`: run one of the selection heuristics over a canonical
//! dataset and write `candidate_set.json`.

use std::path::PathBuf;

use clap::Args;

use ellagnn_core::selection::{
    cluster_density_scores, combine_scores, load_stopwords, pagerank_scores, select_ascending,
    select_by_degree, select_by_pagerank, text_length_scores, CombinedSelectionConfig,
    SortDirection,
};

use super::{load_dataset, load_graph_only};
use crate::config::{pick, pick_opt, FileConfig};
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct SelectArgs {
    /// Canonical dataset directory
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// pagerank | density | textlen | degree | combined
    #[arg(long)]
    pub method: Option<String>,
    /// Candidate count (pagerank, density, textlen, combined)
    #[arg(long)]
    pub budget: Option<usize>,
    /// Degree percentile in (0, 100]
    #[arg(long)]
    pub percentile: Option<f64>,
    /// PageRank weight for --method combined
    #[arg(long)]
    pub alpha: Option<f64>,
    /// ascending | descending (pagerank sort order)
    #[arg(long)]
    pub direction: Option<String>,
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub kmeans_seed: Option<u64>,
    #[arg(long)]
    pub kmeans_max_iter: Option<usize>,
    /// Stopword file (one token per line); defaults to the bundled list
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Output path for candidate_set.json
    #[arg(long, default_value = "candidate_set.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(args: SelectArgs) -> CliResult {
    let file = FileConfig::load(args.config.as_deref())?;
    let sel = file.selection();

    let dataset = pick_opt(args.dataset.clone(), file.dataset_dir())
        .ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
    let method = pick_opt(args.method.clone(), sel.method.clone())
        .ok_or_else(|| CliError::Usage("--method is required".into()))?;

    let damping = pick(args.damping, sel.damping, 0.85);
    let tol = pick(args.tol, sel.tolerance, 1e-9);
    let max_iter = pick(args.max_iter, sel.max_iter, 200);
    let kmeans_seed = pick(args.kmeans_seed, sel.kmeans_seed, 0);
    let kmeans_max_iter = pick(args.kmeans_max_iter, sel.kmeans_max_iter, 100);
    let budget = pick_opt(args.budget, sel.budget);
    let percentile = pick_opt(args.percentile, sel.percentile);
    let direction = match pick(args.direction.clone(), sel.direction.clone(), "ascending".into())
        .as_str()
    {
        "ascending" | "asc" => SortDirection::Ascending,
        "descending" | "desc" => SortDirection::Descending,
        other => {
            return Err(CliError::Usage(format!(
                "unknown direction `{other}` (expected ascending or descending)"
            )))
        }
    };

    let need_budget = || {
        budget.ok_or_else(|| CliError::Usage(format!("--method {method} requires --budget")))
    };

    let set = match method.as_str() {
        "pagerank" => {
            let graph = load_graph_only(&dataset)?;
            let out = pagerank_scores(&graph, damping, tol, max_iter)?;
            if !out.converged {
                log::warn!(
                    "pagerank did not converge within {max_iter} iterations; using the last iterate"
                );
            }
            select_by_pagerank(&out.scores, need_budget()?, direction)?
        }
        "density" => {
            let (graph, features) = load_dataset(&dataset)?;
            let out =
                cluster_density_scores(&features, graph.num_classes(), kmeans_seed, kmeans_max_iter)?;
            select_ascending(&out.scores, need_budget()?)
        }
        "textlen" => {
            let graph = load_graph_only(&dataset)?;
            let stopwords = match pick_opt(args.stopwords.clone(), sel.stopwords.clone()) {
                Some(path) => load_stopwords(&path)?,
                None => ellagnn_core::selection::default_stopwords().clone(),
            };
            let scores = text_length_scores(&graph, &stopwords);
            select_ascending(&scores, need_budget()?)
        }
        "degree" => {
            let graph = load_graph_only(&dataset)?;
            let percentile = percentile
                .ok_or_else(|| CliError::Usage("--method degree requires --percentile".into()))?;
            select_by_degree(&graph, percentile)?
        }
        "combined" => {
            let (graph, features) = load_dataset(&dataset)?;
            let alpha = pick(args.alpha, sel.alpha, 0.5);
            let pr = pagerank_scores(&graph, damping, tol, max_iter)?;
            if !pr.converged {
                log::warn!("pagerank did not converge within {max_iter} iterations");
            }
            let de =
                cluster_density_scores(&features, graph.num_classes(), kmeans_seed, kmeans_max_iter)?;
            let combined =
                combine_scores(&pr.scores, &de.scores, CombinedSelectionConfig::new(alpha)?)?;
            select_ascending(&combined, need_budget()?)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown method `{other}` (expected pagerank, density, textlen, degree, or combined)"
            )))
        }
    };

    set.write_json(&args.out)?;
    println!(
        "selected {} node(s) by {method} -> {}",
        set.node_ids.len(),
        args.out.display()
    );
    Ok(())
}
