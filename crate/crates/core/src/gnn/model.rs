//! Forward and backward passes.
//!
//! Layer `l` computes `h_v = relu(W_l · mean({h_u : u in N_K(v)} ∪ {h_v}) +
//! b_l)`; the final layer omits the ReLU and feeds a softmax cross-entropy
//! downstream. The mean always includes the center's own vector, so isolated
//! nodes degenerate to an MLP on their own features. Dropout (inverted
//! scaling) is applied to hidden activations during training, with masks
//! drawn from streams keyed by the center's node id so batch composition and
//! ordering cannot change any node's computation.
//!
//! Gradients are accumulated by hand in reverse: through the softmax, the
//! dropout mask, the ReLU, the affine map, and the mean-aggregation scatter.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;

use crate::features::FeatureView;
use crate::graph::NodeId;
use crate::rng::{keyed_rng, Lane};
use crate::sampler::Blocks;

use super::{GradientSet, LayerGrads, ModelParameters};

/// Dropout context for a training-mode forward pass.
#[derive(Clone, Copy, Debug)]
pub struct DropoutCtx {
    pub run_seed: u64,
    pub epoch: u32,
    pub rate: f64,
}

/// Everything cached by `forward` that `loss_and_gradients` needs.
pub struct ForwardPass {
    /// Seed-node logits, rows aligned with `seed_nodes`.
    pub logits: Array2<f64>,
    pub seed_nodes: Vec<NodeId>,
    /// Per layer: mean-aggregated inputs (rows = that layer's centers).
    aggregated: Vec<Array2<f64>>,
    /// Per layer: pre-activations.
    pre_activation: Vec<Array2<f64>>,
    /// Per hidden layer: dropout mask (1.0 kept / 0.0 dropped), if training.
    masks: Vec<Option<Array2<f64>>>,
    /// Per layer: for each output row, the input rows it averaged
    /// (self first, then ranked neighbors).
    agg_plan: Vec<Vec<Vec<usize>>>,
    dropout_rate: f64,
}

/// Runs the message-passing forward pass over pre-built blocks.
///
/// `blocks.layers.len()` must equal the parameter depth; layer `l` consumes
/// the batches at hop `L - l`.
pub fn forward(
    params: &ModelParameters,
    blocks: &Blocks,
    features: &dyn FeatureView,
    dropout: Option<&DropoutCtx>,
) -> ForwardPass {
    let num_layers = params.num_layers();
    assert_eq!(
        blocks.layers.len(),
        num_layers,
        "blocks were built for {} hops but the model has {} layers",
        blocks.layers.len(),
        num_layers
    );

    let dim = features.dim();
    assert_eq!(
        params.layers[0].weight.nrows(),
        dim,
        "feature dim {} does not match layer 0 input dim {}",
        dim,
        params.layers[0].weight.nrows()
    );

    // Input level: gather feature rows for the final frontier.
    let mut level_nodes: &[NodeId] = &blocks.input_nodes;
    let mut index: HashMap<NodeId, usize> =
        level_nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut h = Array2::zeros((level_nodes.len(), dim));
    for (i, &v) in level_nodes.iter().enumerate() {
        h.row_mut(i).assign(&ndarray::ArrayView1::from(features.row(v)));
    }

    let mut aggregated = Vec::with_capacity(num_layers);
    let mut pre_activation = Vec::with_capacity(num_layers);
    let mut masks = Vec::with_capacity(num_layers);
    let mut agg_plan = Vec::with_capacity(num_layers);

    for l in 0..num_layers {
        let layer_blocks = &blocks.layers[num_layers - 1 - l];
        let in_dim = params.layers[l].weight.nrows();
        let out_rows = layer_blocks.centers.len();

        let mut agg = Array2::zeros((out_rows, in_dim));
        let mut plan = Vec::with_capacity(out_rows);
        for (row, batch) in layer_blocks.batches.iter().enumerate() {
            let mut members = Vec::with_capacity(batch.ranked_neighbors.len() + 1);
            members.push(*index.get(&batch.center).expect("center missing from level"));
            for u in &batch.ranked_neighbors {
                members.push(*index.get(u).expect("neighbor missing from level"));
            }
            let scale = 1.0 / members.len() as f64;
            for &m in &members {
                let src = h.row(m);
                let mut dst = agg.row_mut(row);
                dst.scaled_add(scale, &src);
            }
            plan.push(members);
        }

        let mut z = agg.dot(&params.layers[l].weight);
        z += &params.layers[l].bias;

        let is_output = l + 1 == num_layers;
        let (next_h, mask) = if is_output {
            (z.clone(), None)
        } else {
            let mut act = z.mapv(|x| x.max(0.0));
            let mask = match dropout {
                Some(ctx) if ctx.rate > 0.0 => {
                    let keep = 1.0 - ctx.rate;
                    let mut mask = Array2::zeros(act.raw_dim());
                    for (row, &center) in layer_blocks.centers.iter().enumerate() {
                        let mut rng = keyed_rng(
                            ctx.run_seed,
                            Lane::Dropout,
                            ctx.epoch,
                            center as u64,
                            l as u64,
                        );
                        for x in mask.row_mut(row) {
                            *x = if rng.random::<f64>() < keep { 1.0 } else { 0.0 };
                        }
                    }
                    act = act * &mask / keep;
                    Some(mask)
                }
                _ => None,
            };
            (act, mask)
        };

        aggregated.push(agg);
        pre_activation.push(z);
        masks.push(mask);
        agg_plan.push(plan);

        level_nodes = &layer_blocks.centers;
        index = level_nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        h = next_h;
    }

    ForwardPass {
        logits: h,
        seed_nodes: blocks.layers[0].centers.clone(),
        aggregated,
        pre_activation,
        masks,
        agg_plan,
        dropout_rate: dropout.map_or(0.0, |c| c.rate),
    }
}

/// Numerically stable per-row softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    out
}

/// Mean softmax cross-entropy over the seed rows plus
/// `weight_decay / 2 * sum ||W_l||^2`, and exact gradients for every layer.
///
/// `labels[i]` is the class of `pass.seed_nodes[i]`.
pub fn loss_and_gradients(
    params: &ModelParameters,
    pass: &ForwardPass,
    labels: &[usize],
    weight_decay: f64,
) -> (f64, GradientSet) {
    let num_layers = params.num_layers();
    let batch = pass.seed_nodes.len();
    assert_eq!(labels.len(), batch, "one label per seed node");
    assert!(batch > 0, "empty seed batch");

    // Cross-entropy via logsumexp; gradient of the mean loss wrt logits.
    let mut data_loss = 0.0;
    let mut grad_z = softmax_rows(&pass.logits);
    for (i, &y) in labels.iter().enumerate() {
        let row = pass.logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        data_loss += lse - row[y];
        grad_z[(i, y)] -= 1.0;
    }
    data_loss /= batch as f64;
    grad_z /= batch as f64;

    let decay_loss: f64 = params
        .layers
        .iter()
        .map(|l| l.weight.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        * weight_decay
        * 0.5;

    let mut grads: Vec<Option<LayerGrads>> = (0..num_layers).map(|_| None).collect();
    let keep = 1.0 - pass.dropout_rate;

    for l in (0..num_layers).rev() {
        let agg = &pass.aggregated[l];
        let grad_w = agg.t().dot(&grad_z) + &(params.layers[l].weight.mapv(|x| x * weight_decay));
        let grad_b = grad_z.sum_axis(ndarray::Axis(0));
        let grad_agg = grad_z.dot(&params.layers[l].weight.t());
        grads[l] = Some(LayerGrads {
            weight: grad_w,
            bias: grad_b,
        });

        if l == 0 {
            break;
        }

        // Scatter the aggregation gradient back to the previous level's rows.
        let prev_rows = pass.aggregated[l - 1].nrows();
        let prev_dim = grad_agg.ncols();
        let mut grad_h = Array2::zeros((prev_rows, prev_dim));
        for (row, members) in pass.agg_plan[l].iter().enumerate() {
            let scale = 1.0 / members.len() as f64;
            let src = grad_agg.row(row);
            for &m in members {
                grad_h.row_mut(m).scaled_add(scale, &src);
            }
        }

        // Through dropout and ReLU of layer l-1.
        if let Some(mask) = &pass.masks[l - 1] {
            grad_h = grad_h * mask / keep;
        }
        let relu_gate = pass.pre_activation[l - 1].mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
        grad_z = grad_h * relu_gate;
    }

    let grads = GradientSet {
        layers: grads.into_iter().map(Option::unwrap).collect(),
    };
    (data_loss + decay_loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMatrix;
    use crate::gnn::LayerParams;
    use ndarray::Array1;
    use crate::graph::{NodeRecord, Split, TextAttributedGraph};
    use crate::sampler::{build_blocks, SamplerConfig};

    fn tiny_graph(n: usize, edges: &[(usize, usize)]) -> TextAttributedGraph {
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

    fn identity_params(dim: usize) -> ModelParameters {
        ModelParameters {
            layers: vec![LayerParams {
                weight: Array2::eye(dim),
                bias: Array1::zeros(dim),
            }],
        }
    }

    #[test]
    fn isolated_node_is_mlp_on_self() {
        let g = tiny_graph(2, &[]);
        let features =
            FeatureMatrix::from_rows(vec![vec![0.6, 0.8], vec![1.0, 0.0]]).unwrap();
        let cfg = SamplerConfig { fanout: 5, top_k: 5, num_hops: 1 };
        let blocks = build_blocks(&g, &[0], &cfg, &features, 1, Lane::Sample, 0).unwrap();
        let pass = forward(&identity_params(2), &blocks, &features, None);
        assert!((pass.logits[(0, 0)] - 0.6).abs() < 1e-12);
        assert!((pass.logits[(0, 1)] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn single_neighbor_averages_two_rows() {
        let g = tiny_graph(2, &[(0, 1)]);
        let features =
            FeatureMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let cfg = SamplerConfig { fanout: 5, top_k: 5, num_hops: 1 };
        let blocks = build_blocks(&g, &[0], &cfg, &features, 1, Lane::Sample, 0).unwrap();
        let pass = forward(&identity_params(2), &blocks, &features, None);
        // Output layer omits the ReLU, so this is the raw average.
        assert!((pass.logits[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((pass.logits[(0, 1)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_give_ln_c_loss() {
        let g = tiny_graph(3, &[(0, 1), (1, 2)]);
        let features = FeatureMatrix::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let cfg = SamplerConfig { fanout: 5, top_k: 5, num_hops: 1 };
        let blocks = build_blocks(&g, &[0, 2], &cfg, &features, 1, Lane::Sample, 0).unwrap();
        // Zero weights force uniform logits regardless of inputs.
        let params = ModelParameters {
            layers: vec![LayerParams {
                weight: Array2::zeros((3, 4)),
                bias: Array1::zeros(4),
            }],
        };
        let pass = forward(&params, &blocks, &features, None);
        let (loss, _) = loss_and_gradients(&params, &pass, &[1, 3], 0.0);
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Array2::from_shape_vec((2, 3), vec![1.0, -2.0, 0.5, 10.0, 10.0, 10.0]).unwrap();
        let sm = softmax_rows(&logits);
        for row in sm.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn saturated_correct_logits_shrink_gradients() {
        let g = tiny_graph(1, &[]);
        let features = FeatureMatrix::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let cfg = SamplerConfig { fanout: 5, top_k: 5, num_hops: 1 };
        let blocks = build_blocks(&g, &[0], &cfg, &features, 1, Lane::Sample, 0).unwrap();
        let mut last = f64::INFINITY;
        for scale in [1.0, 4.0, 16.0, 64.0] {
            // Weight row 0 pushes logit 0 up by `scale`; the label is 0.
            let mut weight = Array2::zeros((2, 2));
            weight[(0, 0)] = scale;
            let params = ModelParameters {
                layers: vec![LayerParams { weight, bias: Array1::zeros(2) }],
            };
            let pass = forward(&params, &blocks, &features, None);
            let (_, grads) = loss_and_gradients(&params, &pass, &[0], 0.0);
            let norm: f64 = grads.layers[0]
                .weight
                .iter()
                .chain(grads.layers[0].bias.iter())
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            assert!(norm < last, "gradient norm should shrink as logits saturate");
            last = norm;
        }
        assert!(last < 1e-10);
    }
}
