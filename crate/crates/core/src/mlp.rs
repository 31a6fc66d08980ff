//! Minimal dense network used for the desk-scale encoder, projection
//! head, and linear classifiers, with manual backprop and momentum SGD.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairs::sample_gaussian;
use crate::Real;

/// A dense layer: `y = W x + b`, weights stored row-major out x in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Vec<Vec<Real>>,
    pub bias: Vec<Real>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // He initialization
        let scale = (2.0 / in_dim as Real).sqrt();
        let weight = (0..out_dim)
            .map(|_| (0..in_dim).map(|_| sample_gaussian(rng) * scale).collect())
            .collect();
        Linear {
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.weight.len()
    }

    pub fn forward(&self, x: &[Real]) -> Vec<Real> {
        self.weight
            .iter()
            .zip(self.bias.iter())
            .map(|(row, &b)| row.iter().zip(x.iter()).map(|(&w, &xi)| w * xi).sum::<Real>() + b)
            .collect()
    }
}

/// Multi-layer perceptron with ReLU on every hidden layer and a linear
/// output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Forward-pass cache: the input to each layer plus the pre-activation
/// outputs, per batch row.
pub struct MlpCache {
    /// inputs[l][i] is the input of layer l for batch row i.
    inputs: Vec<Vec<Vec<Real>>>,
    /// pre_act[l][i] is layer l's affine output before the nonlinearity.
    pre_act: Vec<Vec<Vec<Real>>>,
    pub output: Vec<Vec<Real>>,
}

/// Per-layer parameter gradients, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<(Vec<Vec<Real>>, Vec<Real>)>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![vec![0.0; l.in_dim()]; l.out_dim()], vec![0.0; l.out_dim()]))
                .collect(),
        }
    }
}

impl Mlp {
    /// Builds an MLP with the given layer widths, e.g. `[32, 256, 64]`.
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument("mlp needs at least input and output dims".into()));
        }
        let layers = dims
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim()).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim()).unwrap_or(0)
    }

    pub fn forward(&self, x: &[Real]) -> Vec<Real> {
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            cur = layer.forward(&cur);
            if l != last {
                for v in cur.iter_mut() {
                    *v = v.max(0.0);
                }
            }
        }
        cur
    }

    pub fn forward_batch(&self, xs: &[Vec<Real>]) -> Vec<Vec<Real>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    pub fn forward_cached(&self, xs: &[Vec<Real>]) -> MlpCache {
        let last = self.layers.len() - 1;
        let mut inputs = vec![Vec::with_capacity(xs.len()); self.layers.len()];
        let mut pre_act = vec![Vec::with_capacity(xs.len()); self.layers.len()];
        let mut output = Vec::with_capacity(xs.len());
        for x in xs {
            let mut cur = x.clone();
            for (l, layer) in self.layers.iter().enumerate() {
                inputs[l].push(cur.clone());
                let z = layer.forward(&cur);
                pre_act[l].push(z.clone());
                cur = z;
                if l != last {
                    for v in cur.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
            }
            output.push(cur);
        }
        MlpCache { inputs, pre_act, output }
    }

    /// Backpropagates `grad_out` (dL/doutput per batch row) through the
    /// cached forward pass, returning parameter gradients and dL/dinput.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[Vec<Real>]) -> (MlpGrads, Vec<Vec<Real>>) {
        let mut grads = MlpGrads::zeros_like(self);
        let last = self.layers.len() - 1;
        let batch = grad_out.len();
        let mut grad_in = vec![Vec::new(); batch];

        for i in 0..batch {
            let mut delta = grad_out[i].clone();
            for l in (0..self.layers.len()).rev() {
                if l != last {
                    // ReLU mask from the pre-activation
                    for (dv, &z) in delta.iter_mut().zip(cache.pre_act[l][i].iter()) {
                        if z <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                }
                let input = &cache.inputs[l][i];
                let layer = &self.layers[l];
                let (ref mut gw, ref mut gb) = grads.layers[l];
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (k, &xi) in input.iter().enumerate() {
                        gw[o][k] += d * xi;
                    }
                }
                let mut next = vec![0.0; layer.in_dim()];
                for (o, &d) in delta.iter().enumerate() {
                    for (k, &w) in layer.weight[o].iter().enumerate() {
                        next[k] += d * w;
                    }
                }
                delta = next;
            }
            grad_in[i] = delta;
        }
        (grads, grad_in)
    }

    /// Flattens all parameters (weights then bias, layer by layer).
    pub fn flat_params(&self) -> Vec<Real> {
        let mut out = Vec::new();
        for l in &self.layers {
            for row in &l.weight {
                out.extend_from_slice(row);
            }
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[Real]) -> Result<()> {
        let mut it = flat.iter();
        for l in self.layers.iter_mut() {
            for row in l.weight.iter_mut() {
                for v in row.iter_mut() {
                    *v = *it.next().ok_or(Error::DimMismatch { expected: 0, got: 0 })?;
                }
            }
            for v in l.bias.iter_mut() {
                *v = *it.next().ok_or(Error::DimMismatch { expected: 0, got: 0 })?;
            }
        }
        if it.next().is_some() {
            return Err(Error::InvalidArgument("parameter blob too long".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * (l.in_dim() + 1))
            .sum()
    }

    /// Layer widths, input dim first.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.in_dim()];
        dims.extend(self.layers.iter().map(|l| l.out_dim()));
        dims
    }
}

/// Momentum SGD with weight decay applied to weights only:
/// `v <- m v + g + wd * theta; theta <- theta - lr * v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: Real,
    pub momentum: Real,
    pub weight_decay: Real,
    velocity: Vec<(Vec<Vec<Real>>, Vec<Real>)>,
}

impl SgdMomentum {
    pub fn new(net: &Mlp, lr: Real, momentum: Real, weight_decay: Real) -> Self {
        SgdMomentum {
            lr,
            momentum,
            weight_decay,
            velocity: MlpGrads::zeros_like(net).layers,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        for ((layer, (vw, vb)), (gw, gb)) in net
            .layers
            .iter_mut()
            .zip(self.velocity.iter_mut())
            .zip(grads.layers.iter())
        {
            for (o, row) in layer.weight.iter_mut().enumerate() {
                for (k, w) in row.iter_mut().enumerate() {
                    vw[o][k] = self.momentum * vw[o][k] + gw[o][k] + self.weight_decay * *w;
                    *w -= self.lr * vw[o][k];
                }
            }
            for (o, b) in layer.bias.iter_mut().enumerate() {
                vb[o] = self.momentum * vb[o] + gb[o];
                *b -= self.lr * vb[o];
            }
        }
    }
}
