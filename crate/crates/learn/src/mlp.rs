//! Small fully connected networks with tanh hidden layers, forward-mode
//! tangents and reverse-mode gradients over the flattened parameters.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    #[default]
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Tanh => z.tanh(),
            Self::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - y * y,
            Self::Identity => 1.0,
        }
    }
}

/// Dense layer; `weights` is row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Post-activation values of every layer, input first.
#[derive(Clone, Debug)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace holds the input")
    }
}

impl Mlp {
    /// `sizes = [input, hidden.., output]`. Weights are Gaussian with
    /// variance `1/fan_in`; the last layer is further scaled by
    /// `output_scale`. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_activation: Activation, output_scale: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(LearnError::Shape(format!("bad layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let scale = (1.0 / w[0] as f64).sqrt() * if k + 1 == n { output_scale } else { 1.0 };
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect(),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Ok(Self { layers, hidden_activation: Activation::Tanh, output_activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Layer widths including input and output.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(LearnError::Shape(format!("{} parameters for a net with {}", p.len(), self.num_params())));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            let act = self.activation(k);
            h = l.affine(&h).into_iter().map(|z| act.apply(z)).collect();
        }
        h
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for (k, l) in self.layers.iter().enumerate() {
            let act = self.activation(k);
            let h = l.affine(values.last().expect("non-empty")).into_iter().map(|z| act.apply(z)).collect();
            values.push(h);
        }
        Trace { values }
    }

    /// Accumulates `scale · (∂out/∂θ)ᵀ grad_out` into `grad`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], scale: f64, grad: &mut [f64]) {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.num_params();
        }
        let mut delta: Vec<f64> = grad_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let act = self.activation(k);
            let y = &trace.values[k + 1];
            for (d, yo) in delta.iter_mut().zip(y) {
                *d *= act.derivative_from_output(*yo);
            }
            let x = &trace.values[k];
            let base = offsets[k];
            for o in 0..l.outputs {
                let d = delta[o] * scale;
                if d != 0.0 {
                    let row = &mut grad[base + o * l.inputs..base + (o + 1) * l.inputs];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
                grad[base + l.weights.len() + o] += d;
            }
            if k > 0 {
                let mut back = vec![0.0; l.inputs];
                for (o, d) in delta.iter().enumerate() {
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    for (b, w) in back.iter_mut().zip(row) {
                        *b += w * d;
                    }
                }
                delta = back;
            }
        }
    }

    /// Directional derivative of the output along parameter direction `v`.
    pub fn jvp(&self, trace: &Trace, v: &[f64]) -> Vec<f64> {
        let mut off = 0;
        let mut tangent = vec![0.0; self.input_dim()];
        for (k, l) in self.layers.iter().enumerate() {
            let x = &trace.values[k];
            let vw = &v[off..off + l.weights.len()];
            let vb = &v[off + l.weights.len()..off + l.num_params()];
            off += l.num_params();
            let act = self.activation(k);
            tangent = (0..l.outputs)
                .map(|o| {
                    let w = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    let dw = &vw[o * l.inputs..(o + 1) * l.inputs];
                    let dz: f64 = vb[o]
                        + dw.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                        + w.iter().zip(&tangent).map(|(a, b)| a * b).sum::<f64>();
                    dz * act.derivative_from_output(trace.values[k + 1][o])
                })
                .collect();
        }
        tangent
    }
}
