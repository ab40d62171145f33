//! Dense layers and the Adam optimizer shared by the VAE and the MINE critic.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Affine map `y = x W + b`, `W` stored `in_dim x out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            weight: Array2::zeros((in_dim, out_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((in_dim, out_dim), || rng.random_range(-a..a));
        Dense {
            weight,
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulate parameter gradients for upstream gradient `g` at input `x`.
    pub fn accumulate(&self, x: ArrayView2<f64>, g: ArrayView2<f64>, grad: &mut DenseGrad) {
        ndarray::linalg::general_mat_mul(1.0, &x.t(), &g, 1.0, &mut grad.weight);
        grad.bias += &g.sum_axis(Axis(0));
    }

    /// Gradient with respect to the input.
    pub fn backprop_input(&self, g: ArrayView2<f64>) -> Array2<f64> {
        g.dot(&self.weight.t())
    }

    pub fn is_finite(&self) -> bool {
        self.weight
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.is_finite())
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseGrad {
    pub fn for_layer(layer: &Dense) -> Self {
        DenseGrad {
            weight: Array2::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }

    pub fn zero(&mut self) {
        self.weight.fill(0.0);
        self.bias.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers for one layer.
#[derive(Debug, Clone)]
struct Moments {
    m: DenseGrad,
    v: DenseGrad,
}

/// Adam over a fixed list of layers.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: i32,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, layers: &[&Dense]) -> Self {
        let moments = layers
            .iter()
            .map(|l| Moments {
                m: DenseGrad::for_layer(l),
                v: DenseGrad::for_layer(l),
            })
            .collect();
        Adam {
            cfg,
            step: 0,
            moments,
        }
    }

    /// Descend along `grads`. Layers and grads must be in construction order.
    pub fn update(&mut self, layers: &mut [&mut Dense], grads: &[&DenseGrad]) {
        assert_eq!(layers.len(), self.moments.len());
        assert_eq!(grads.len(), self.moments.len());
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let inv_c1 = 1.0 / (1.0 - beta1.powi(self.step));
        let inv_c2 = 1.0 / (1.0 - beta2.powi(self.step));
        let rule = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= learning_rate * (*m * inv_c1) / ((*v * inv_c2).sqrt() + eps);
            }
        };
        for ((layer, grad), mom) in layers.iter_mut().zip(grads).zip(&mut self.moments) {
            rule(
                contiguous_mut(layer.weight.as_slice_mut()),
                contiguous(grad.weight.as_slice()),
                contiguous_mut(mom.m.weight.as_slice_mut()),
                contiguous_mut(mom.v.weight.as_slice_mut()),
            );
            rule(
                contiguous_mut(layer.bias.as_slice_mut()),
                contiguous(grad.bias.as_slice()),
                contiguous_mut(mom.m.bias.as_slice_mut()),
                contiguous_mut(mom.v.bias.as_slice_mut()),
            );
        }
    }
}

// Layers and moments are always allocated in standard layout.
fn contiguous(s: Option<&[f64]>) -> &[f64] {
    s.expect("parameter arrays are contiguous")
}

fn contiguous_mut(s: Option<&mut [f64]>) -> &mut [f64] {
    s.expect("parameter arrays are contiguous")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
