use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, NodeId, Tape};
use crate::rng::Stream;

/// One dense layer: `x W^T + b` with `W` stored `out x in` and `b` as a
/// `1 x out` row broadcast over the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Layer {
    fn glorot(rows: usize, cols: usize, rng: &mut Stream) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Layer {
            weight: Matrix::from_raw(rows, cols, data),
            bias: Matrix::zeros(1, rows),
        }
    }
}

/// Shared feature encoder: two ReLU hidden layers, a tanh output layer of
/// width `feature_dim`, and a constant 1 appended so heads learn an offset.
/// Feature vectors therefore have length `feature_dim + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    input_dim: usize,
    feature_dim: usize,
    layers: Vec<Layer>,
}

impl Encoder {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        feature_dim: usize,
        rng: &mut Stream,
    ) -> Result<Self> {
        if input_dim == 0 || feature_dim == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig(
                "encoder dimensions must be positive".into(),
            ));
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input_dim;
        for &h in hidden {
            layers.push(Layer::glorot(h, fan_in, rng));
            fan_in = h;
        }
        layers.push(Layer::glorot(feature_dim, fan_in, rng));
        Ok(Encoder {
            input_dim,
            feature_dim,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Width of the emitted feature vectors, including the constant 1.
    pub fn output_dim(&self) -> usize {
        self.feature_dim + 1
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Flat view of all parameters, layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Encode a batch of inputs (rows) into a design matrix of features.
    pub fn encode_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.cols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.weight.transpose())?;
            for r in 0..z.rows() {
                for c in 0..z.cols() {
                    let v = z.get(r, c) + layer.bias.get(0, c);
                    z.set(r, c, if i == last { v.tanh() } else { v.max(0.0) });
                }
            }
            h = z;
        }
        let mut out = Matrix::zeros(h.rows(), h.cols() + 1);
        for r in 0..h.rows() {
            for c in 0..h.cols() {
                out.set(r, c, h.get(r, c));
            }
            out.set(r, h.cols(), 1.0);
        }
        Ok(out)
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::new(1, x.len(), x.to_vec())?;
        Ok(self.encode_batch(&m)?.row(0).to_vec())
    }

    /// Register every parameter on a fresh tape, in `parameters()` order.
    pub fn record_params(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.parameters()
            .into_iter()
            .map(|p| tape.param(p.clone()))
            .collect()
    }

    /// Record the forward pass on the tape given previously registered
    /// parameter nodes; returns the design-matrix node (`n x (d+1)`).
    pub fn record_forward(&self, tape: &mut Tape, params: &[NodeId], x: &Matrix) -> Result<NodeId> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.cols(),
            });
        }
        if params.len() != 2 * self.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.layers.len(),
                got: params.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut h = tape.constant(x.clone());
        for i in 0..self.layers.len() {
            let wt = tape.transpose(params[2 * i]);
            let z = tape.matmul(h, wt)?;
            let zb = tape.add_row(z, params[2 * i + 1])?;
            h = if i == last {
                tape.tanh(zb)
            } else {
                tape.relu(zb)
            };
        }
        Ok(tape.append_ones_col(h))
    }

    /// Overwrite parameter values from a flat list in `parameters()` order.
    pub fn set_parameters(&mut self, values: &[Matrix]) -> Result<()> {
        let mut slots = self.parameters_mut();
        if slots.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: slots.len(),
                got: values.len(),
            });
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::DimensionMismatch {
                    expected: slot.rows() * slot.cols(),
                    got: v.rows() * v.cols(),
                });
            }
            **slot = v.clone();
        }
        Ok(())
    }
}
