//! Diagnostics: gradient flow, intra-class cosine similarity, and accuracy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureView};
use crate::gnn::GradientSet;
use crate::graph::NodeId;

/// Per-layer gradient norms and their mean (GF). The norm of a layer is the
/// L2 norm of its vectorized weight gradient with the bias gradient
/// concatenated in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub per_layer_norms: Vec<f64>,
    pub gf: f64,
}

/// Mean per-layer gradient norm, a trainability diagnostic for deep stacks.
/// Written for 8-layer models originally, generalized to `1/L * sum ||g_l||`
/// so depths can be compared.
pub fn gradient_flow(grads: &GradientSet) -> GradientReport {
    let per_layer_norms: Vec<f64> = grads
        .layers
        .iter()
        .map(|l| {
            l.weight
                .iter()
                .chain(l.bias.iter())
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let gf = per_layer_norms.iter().sum::<f64>() / per_layer_norms.len() as f64;
    GradientReport { per_layer_norms, gf }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityVariant {
    Raw,
    Augmented,
}

/// Mean intra-class cosine similarity per class. Classes with fewer than two
/// members are omitted and listed separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSimilarityReport {
    pub variant: SimilarityVariant,
    pub per_class: BTreeMap<usize, f64>,
    pub omitted: Vec<usize>,
}

/// Mean pairwise cosine similarity within each class, computed with the
/// Gram-sum identity `(||sum x||^2 - m) / (m (m - 1))` over unit rows, which
/// equals the mean over all unordered pairs.
pub fn intra_class_cosine(
    features: &FeatureMatrix,
    labels: &[usize],
    variant: SimilarityVariant,
) -> Result<ClassSimilarityReport> {
    if labels.len() != features.num_rows() {
        return Err(Error::Argument(format!(
            "label count {} != feature rows {}",
            labels.len(),
            features.num_rows()
        )));
    }
    let dim = features.dim();
    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        let entry = sums.entry(label).or_insert_with(|| (vec![0.0; dim], 0));
        for (acc, x) in entry.0.iter_mut().zip(features.row(i)) {
            *acc += x;
        }
        entry.1 += 1;
    }

    let mut per_class = BTreeMap::new();
    let mut omitted = Vec::new();
    for (label, (sum, m)) in sums {
        if m < 2 {
            log::warn!("class {label} has {m} member(s); omitted from similarity report");
            omitted.push(label);
            continue;
        }
        let norm_sq: f64 = sum.iter().map(|x| x * x).sum();
        let m = m as f64;
        per_class.insert(label, (norm_sq - m) / (m * (m - 1.0)));
    }

    Ok(ClassSimilarityReport {
        variant,
        per_class,
        omitted,
    })
}

/// Fraction of masked nodes whose prediction matches the truth.
pub fn accuracy(pred: &[usize], truth: &[usize], mask: &[NodeId]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Argument(format!(
            "prediction count {} != label count {}",
            pred.len(),
            truth.len()
        )));
    }
    if mask.is_empty() {
        return Err(Error::Argument("accuracy over an empty mask is undefined".into()));
    }
    let correct = mask.iter().filter(|&&v| pred[v] == truth[v]).count();
    Ok(correct as f64 / mask.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{GradientSet, LayerGrads};
    use ndarray::{Array1, Array2};

    fn grads_with_norms(specs: &[(usize, f64)]) -> GradientSet {
        // A layer of `n` weight entries, all equal, tuned to hit the target norm.
        GradientSet {
            layers: specs
                .iter()
                .map(|&(n, norm)| LayerGrads {
                    weight: Array2::from_elem((n, 1), norm / (n as f64).sqrt()),
                    bias: Array1::zeros(0),
                })
                .collect(),
        }
    }

    #[test]
    fn zero_gradients_give_zero_gf() {
        let report = gradient_flow(&grads_with_norms(&[(4, 0.0), (2, 0.0)]));
        assert_eq!(report.gf, 0.0);
    }

    #[test]
    fn gf_is_mean_of_layer_norms() {
        let report = gradient_flow(&grads_with_norms(&[(9, 3.0), (16, 4.0)]));
        assert!((report.per_layer_norms[0] - 3.0).abs() < 1e-12);
        assert!((report.per_layer_norms[1] - 4.0).abs() < 1e-12);
        assert!((report.gf - 3.5).abs() < 1e-12);
    }

    #[test]
    fn bias_gradients_fold_into_layer_norm() {
        let grads = GradientSet {
            layers: vec![LayerGrads {
                weight: Array2::from_elem((1, 1), 3.0),
                bias: Array1::from_vec(vec![4.0]),
            }],
        };
        let report = gradient_flow(&grads);
        assert!((report.per_layer_norms[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn identical_vectors_have_unit_similarity() {
        let features = FeatureMatrix::from_rows(vec![
            vec![0.6, 0.8],
            vec![0.6, 0.8],
            vec![0.6, 0.8],
        ])
        .unwrap();
        let report =
            intra_class_cosine(&features, &[0, 0, 0], SimilarityVariant::Raw).unwrap();
        assert!((report.per_class[&0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_pair_has_zero_similarity() {
        let features =
            FeatureMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let report =
            intra_class_cosine(&features, &[0, 0], SimilarityVariant::Raw).unwrap();
        assert!(report.per_class[&0].abs() < 1e-9);
    }

    #[test]
    fn singleton_class_is_omitted() {
        let features = FeatureMatrix::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        let report =
            intra_class_cosine(&features, &[0, 1, 0], SimilarityVariant::Augmented).unwrap();
        assert!(report.per_class.contains_key(&0));
        assert!(!report.per_class.contains_key(&1));
        assert_eq!(report.omitted, vec![1]);
    }

    #[test]
    fn accuracy_counts_exactly() {
        let pred = vec![0, 1, 2, 1];
        let truth = vec![0, 1, 1, 1];
        assert_eq!(accuracy(&pred, &truth, &[0, 1, 2, 3]).unwrap(), 0.75);
        assert_eq!(accuracy(&pred, &truth, &[0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&pred, &truth, &[2]).unwrap(), 0.0);
        assert!(accuracy(&pred, &truth, &[]).is_err());
    }
}
