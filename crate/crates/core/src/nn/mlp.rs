use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Parameters;

/// Dense layer computing `x * weight + bias` on row-major batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `in_dim x out_dim`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Multi-layer perceptron with ReLU between layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Layer inputs recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Uniform fan-in initialization: weights in `+-sqrt(6 / fan_in)`, biases in
    /// `+-1 / sqrt(fan_in)`.
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output dimensions");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let wb = (6.0 / fan_in as f64).sqrt();
                let bb = 1.0 / (fan_in as f64).sqrt();
                Linear {
                    weight: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-wb..wb)),
                    bias: Array1::from_shape_simple_fn(fan_out, || rng.gen_range(-bb..bb)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Linear {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.ncols()).unwrap_or(0)
    }

    /// Layer widths including input and output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.in_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.ncols()));
        d
    }

    pub fn forward(&self, x: Array2<f64>) -> (Array2<f64>, MlpTape) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(a);
            a = z;
        }
        (a, MlpTape { inputs })
    }

    pub fn infer(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, tape: &MlpTape, dy: Array2<f64>, grads: &mut Mlp) -> Array2<f64> {
        let mut dz = dy;
        for k in (0..self.layers.len()).rev() {
            let input = &tape.inputs[k];
            let g = &mut grads.layers[k];
            general_mat_mul(1.0, &input.t(), &dz, 1.0, &mut g.weight);
            g.bias += &dz.sum_axis(Axis(0));
            let mut dx = dz.dot(&self.layers[k].weight.t());
            if k > 0 {
                // input = relu(previous pre-activation)
                Zip::from(&mut dx).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            dz = dx;
        }
        dz
    }
}

impl Parameters for Mlp {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            f(l.weight.as_slice().expect("standard layout"));
            f(l.bias.as_slice().expect("standard layout"));
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            f(l.weight.as_slice_mut().expect("standard layout"));
            f(l.bias.as_slice_mut().expect("standard layout"));
        }
    }
}
