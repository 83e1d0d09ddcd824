use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// θ ← θ − ξ·∇
    Plain,
    /// Adaptive moment estimation with bias-corrected moments.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators and step counter for one network. The moments are
/// stored flat in the network's parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(net: &Mlp, kind: OptimizerKind, learning_rate: f64) -> Self {
        let n = match kind {
            OptimizerKind::Plain => 0,
            OptimizerKind::Adam { .. } => net.n_params(),
        };
        OptimizerState {
            kind,
            learning_rate,
            step: 0,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        }
    }

    /// One descent step along `grads`.
    pub fn apply(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        let n = net.n_params();
        let gn: usize = grads
            .layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        if gn != n {
            return Err(LabError::Dimension {
                expected: n,
                got: gn,
            });
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Plain => {
                for (p, g) in net.flat_mut().zip(grads.flat()) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.first_moment.len() != n {
                    return Err(LabError::Dimension {
                        expected: n,
                        got: self.first_moment.len(),
                    });
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let moments = self.first_moment.iter_mut().zip(self.second_moment.iter_mut());
                for ((p, g), (m, v)) in net.flat_mut().zip(grads.flat()).zip(moments) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    fn scalar_net(theta: f64) -> Mlp {
        let mut l = Layer::zeros(1, 1);
        l.weights[0] = theta;
        Mlp::from_layers(vec![l]).unwrap()
    }

    fn scalar_grad(g: f64) -> Gradients {
        let mut l = Layer::zeros(1, 1);
        l.weights[0] = g;
        Gradients { layers: vec![l] }
    }

    #[test]
    fn plain_step_definition() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::new(&net, OptimizerKind::Plain, 0.001);
        opt.apply(&mut net, &scalar_grad(2.0)).unwrap();
        assert!((net.layers()[0].weights[0] - 0.998).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [OptimizerKind::Plain, OptimizerKind::default()] {
            let mut net = scalar_net(0.7);
            let mut opt = OptimizerState::new(&net, kind, 0.01);
            opt.apply(&mut net, &scalar_grad(0.0)).unwrap();
            assert_eq!(net.layers()[0].weights[0], 0.7);
        }
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        // bias correction makes m̂ = g and v̂ = g², so the step is ξ·g/(|g| + ε)
        for g in [3.0, -0.02, 1e-3] {
            let mut net = scalar_net(0.0);
            let mut opt = OptimizerState::new(&net, OptimizerKind::default(), 1e-3);
            opt.apply(&mut net, &scalar_grad(g)).unwrap();
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            let got = net.layers()[0].weights[0];
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
            assert!((got.abs() - 1e-3).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut net = scalar_net(0.0);
        let mut opt = OptimizerState::new(&net, OptimizerKind::Plain, 0.1);
        let g = Gradients::zeros_like(&Mlp::zeros(&[2, 1]).unwrap());
        assert!(opt.apply(&mut net, &g).is_err());
    }
}
