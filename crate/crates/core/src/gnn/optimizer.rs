//! Adam and plain SGD. Weight decay is folded into the gradients upstream,
//! so the update rules here are decay-free.

use ndarray::{Array1, Array2};

use super::{GradientSet, ModelParameters, OptimizerChoice};

pub use super::OptimizerChoice as OptimizerKind;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Moments {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

pub struct Optimizer {
    kind: OptimizerChoice,
    learning_rate: f64,
    first: Vec<Moments>,
    second: Vec<Moments>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerChoice, learning_rate: f64, params: &ModelParameters) -> Self {
        let zeros = || {
            params
                .layers
                .iter()
                .map(|l| Moments {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect::<Vec<_>>()
        };
        let (first, second) = match kind {
            OptimizerChoice::Adam => (zeros(), zeros()),
            OptimizerChoice::Sgd => (Vec::new(), Vec::new()),
        };
        Self {
            kind,
            learning_rate,
            first,
            second,
            step_count: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParameters, grads: &GradientSet) {
        match self.kind {
            OptimizerChoice::Sgd => {
                for (layer, grad) in params.layers.iter_mut().zip(&grads.layers) {
                    layer.weight.scaled_add(-self.learning_rate, &grad.weight);
                    layer.bias.scaled_add(-self.learning_rate, &grad.bias);
                }
            }
            OptimizerChoice::Adam => {
                self.step_count += 1;
                let t = self.step_count as i32;
                let bias1 = 1.0 - ADAM_BETA1.powi(t);
                let bias2 = 1.0 - ADAM_BETA2.powi(t);
                for (((layer, grad), m), v) in params
                    .layers
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    adam_update(
                        &mut layer.weight,
                        &grad.weight,
                        &mut m.weight,
                        &mut v.weight,
                        self.learning_rate,
                        bias1,
                        bias2,
                    );
                    adam_update_1d(
                        &mut layer.bias,
                        &grad.bias,
                        &mut m.bias,
                        &mut v.bias,
                        self.learning_rate,
                        bias1,
                        bias2,
                    );
                }
            }
        }
    }
}

fn adam_update(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    lr: f64,
    bias1: f64,
    bias2: f64,
) {
    ndarray::Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        });
}

fn adam_update_1d(
    param: &mut Array1<f64>,
    grad: &Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    lr: f64,
    bias1: f64,
    bias2: f64,
) {
    ndarray::Zip::from(param)
        .and(grad)
        .and(m)
        .and(v)
        .for_each(|p, &g, m, v| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{LayerGrads, LayerParams};

    fn scalar_params(w: f64) -> ModelParameters {
        ModelParameters {
            layers: vec![LayerParams {
                weight: Array2::from_elem((1, 1), w),
                bias: Array1::zeros(1),
            }],
        }
    }

    fn scalar_grads(g: f64) -> GradientSet {
        GradientSet {
            layers: vec![LayerGrads {
                weight: Array2::from_elem((1, 1), g),
                bias: Array1::zeros(1),
            }],
        }
    }

    #[test]
    fn sgd_zero_gradient_leaves_params_unchanged() {
        let mut params = scalar_params(0.375);
        let mut opt = Optimizer::new(OptimizerChoice::Sgd, 0.1, &params);
        opt.step(&mut params, &scalar_grads(0.0));
        assert_eq!(params.layers[0].weight[(0, 0)], 0.375);
    }

    #[test]
    fn sgd_unit_gradient_moves_by_lr() {
        let mut params = scalar_params(1.0);
        let mut opt = Optimizer::new(OptimizerChoice::Sgd, 0.1, &params);
        opt.step(&mut params, &scalar_grads(1.0));
        assert!((params.layers[0].weight[(0, 0)] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_matches_scalar_recompute_on_quadratic() {
        // Minimize f(w) = w^2 / 2 from w = 1; gradient is w.
        let lr = 0.05;
        let mut params = scalar_params(1.0);
        let mut opt = Optimizer::new(OptimizerChoice::Adam, lr, &params);

        let mut expect = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = expect;
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g;
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m / (1.0 - ADAM_BETA1.powi(t));
            let v_hat = v / (1.0 - ADAM_BETA2.powi(t));
            expect -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);

            let g_actual = params.layers[0].weight[(0, 0)];
            opt.step(&mut params, &scalar_grads(g_actual));
            assert!(
                (params.layers[0].weight[(0, 0)] - expect).abs() < 1e-10,
                "step {t}: {} vs {}",
                params.layers[0].weight[(0, 0)],
                expect
            );
        }
    }
}
