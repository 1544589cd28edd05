//! Feed-forward network with a flat parameter vector.
//!
//! Layout: the shared trunk (`tanh` hidden layers), then the joint output
//! head, then any group-specific output heads. Each layer stores its weights
//! row-major (`n_out × n_in`) followed by its biases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::PortableRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_in * self.n_out
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.n_in * self.n_out;
        start..start + self.n_out
    }

    fn end(&self) -> usize {
        self.offset + (self.n_in + 1) * self.n_out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub trunk: Vec<LayerShape>,
    pub head: LayerShape,
    pub group_heads: Vec<LayerShape>,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input followed by each trunk layer's post-activation output.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn features(&self) -> &[f64] {
        self.activations.last().map_or(&[], Vec::as_slice)
    }
}

impl Network {
    /// Number of parameters for the given layer sizes.
    pub fn param_count(input: usize, hidden: &[usize], output: usize, n_group_heads: usize) -> usize {
        let mut n = 0;
        let mut prev = input;
        for &h in hidden {
            n += (prev + 1) * h;
            prev = h;
        }
        n + (1 + n_group_heads) * (prev + 1) * output
    }

    /// Zero-parameter network with the given shape.
    pub fn zeros(input: usize, hidden: &[usize], output: usize, n_group_heads: usize) -> Self {
        let mut offset = 0;
        let mut prev = input;
        let mut trunk = Vec::with_capacity(hidden.len());
        for &h in hidden {
            let l = LayerShape { n_in: prev, n_out: h, offset };
            offset = l.end();
            trunk.push(l);
            prev = h;
        }
        let head = LayerShape { n_in: prev, n_out: output, offset };
        offset = head.end();
        let mut group_heads = Vec::with_capacity(n_group_heads);
        for _ in 0..n_group_heads {
            let l = LayerShape { n_in: prev, n_out: output, offset };
            offset = l.end();
            group_heads.push(l);
        }
        Self {
            trunk,
            head,
            group_heads,
            params: vec![0.0; offset],
        }
    }

    /// Glorot-uniform weights and zero biases. Group heads start as copies of
    /// the joint head.
    pub fn init(
        input: usize,
        hidden: &[usize],
        output: usize,
        n_group_heads: usize,
        rng: &mut PortableRng,
    ) -> Self {
        let mut net = Self::zeros(input, hidden, output, n_group_heads);
        let layers: Vec<LayerShape> = net.trunk.iter().copied().chain([net.head]).collect();
        for l in layers {
            let limit = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            for w in &mut net.params[l.weights()] {
                *w = rng.uniform_in(-limit, limit);
            }
        }
        let head_params = net.params[net.head.offset..net.head.end()].to_vec();
        for g in net.group_heads.clone() {
            net.params[g.offset..g.end()].copy_from_slice(&head_params);
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.first().map_or(self.head.n_in, |l| l.n_in)
    }

    pub fn output_dim(&self) -> usize {
        self.head.n_out
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Sets the joint head's weights to zero, leaving its biases.
    pub fn zero_output_weights(&mut self) {
        let r = self.head.weights();
        self.params[r].fill(0.0);
    }

    fn affine(&self, l: &LayerShape, x: &[f64], out: &mut Vec<f64>) {
        let w = &self.params[l.weights()];
        let b = &self.params[l.biases()];
        out.clear();
        out.extend((0..l.n_out).map(|o| {
            let row = &w[o * l.n_in..(o + 1) * l.n_in];
            b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
        }));
    }

    /// Runs the trunk, returning the cache holding its final features.
    pub fn trunk_forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        let mut activations = Vec::with_capacity(self.trunk.len() + 1);
        activations.push(x.to_vec());
        for l in &self.trunk {
            let mut h = Vec::with_capacity(l.n_out);
            self.affine(l, activations.last().expect("input present"), &mut h);
            h.iter_mut().for_each(|v| *v = v.tanh());
            activations.push(h);
        }
        Ok(ForwardCache { activations })
    }

    /// Output of the joint head (`None`) or a group head on cached features.
    pub fn head_forward(&self, cache: &ForwardCache, head: Option<usize>) -> Vec<f64> {
        let l = head.map_or(self.head, |g| self.group_heads[g]);
        let mut out = Vec::with_capacity(l.n_out);
        self.affine(&l, cache.features(), &mut out);
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let cache = self.trunk_forward(x)?;
        Ok(self.head_forward(&cache, None))
    }

    /// Accumulates into `grad` the parameter gradient of a scalar whose
    /// derivatives with respect to the selected heads' outputs are given.
    /// `head_grads` pairs a head (`None` = joint) with `d scalar / d output`.
    pub fn backward(&self, cache: &ForwardCache, head_grads: &[(Option<usize>, &[f64])], grad: &mut [f64]) {
        let features = cache.features();
        let mut d_features = vec![0.0; features.len()];
        for (head, d_out) in head_grads {
            let l = head.map_or(self.head, |g| self.group_heads[g]);
            let w_range = l.weights();
            let b_range = l.biases();
            for o in 0..l.n_out {
                let d = d_out[o];
                if d == 0.0 {
                    continue;
                }
                grad[b_range.start + o] += d;
                let row = w_range.start + o * l.n_in;
                for i in 0..l.n_in {
                    grad[row + i] += d * features[i];
                    d_features[i] += d * self.params[row + i];
                }
            }
        }

        let mut d_next = d_features;
        for (li, l) in self.trunk.iter().enumerate().rev() {
            let out = &cache.activations[li + 1];
            let input = &cache.activations[li];
            let w_range = l.weights();
            let b_range = l.biases();
            let mut d_in = vec![0.0; l.n_in];
            for o in 0..l.n_out {
                let d_pre = d_next[o] * (1.0 - out[o] * out[o]);
                if d_pre == 0.0 {
                    continue;
                }
                grad[b_range.start + o] += d_pre;
                let row = w_range.start + o * l.n_in;
                for i in 0..l.n_in {
                    grad[row + i] += d_pre * input[i];
                    d_in[i] += d_pre * self.params[row + i];
                }
            }
            d_next = d_in;
        }
    }
}
