//! Fully connected network with tanh hidden layers and a linear head.

use super::{RngStream, Tensor};
use crate::error::{Error, Result};

/// One affine layer; `weight` is `[out, in]`, `bias` is `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_out, fan_in]).expect("positive layer sizes"),
            bias: Tensor::zeros(&[fan_out]).expect("positive layer sizes"),
        }
    }

    fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }

    fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    layers: Vec<Dense>,
}

/// Gradients with the same layout as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

/// Activations recorded by [`Mlp::forward_cached`]; consumed by [`Mlp::backward`].
#[derive(Debug)]
pub struct ForwardCache {
    /// Input to each layer; entry 0 is the network input.
    inputs: Vec<Tensor>,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::invalid(format!("layer sizes {layer_sizes:?} need at least two positive entries")));
    }
    Ok(())
}

/// `out[b, o] = sum_i x[b, i] * w[o, i] + bias[o]`
fn affine(x: &Tensor, layer: &Dense) -> Tensor {
    let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
    let rows = x.rows();
    let w = layer.weight.data();
    let bias = layer.bias.data();
    let mut out = vec![0.0; rows * fan_out];
    for (xr, yr) in x.data().chunks_exact(fan_in).zip(out.chunks_exact_mut(fan_out)) {
        for (o, y) in yr.iter_mut().enumerate() {
            let wr = &w[o * fan_in..(o + 1) * fan_in];
            *y = xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>() + bias[o];
        }
    }
    Tensor::from_vec(&[rows, fan_out], out).expect("consistent sizes")
}

impl Mlp {
    /// Network with every weight and bias zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), layers })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_sizes: &[usize], rng: &mut RngStream) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.fan_in() + layer.fan_out()) as f64).sqrt();
            for w in layer.weight.data_mut() {
                *w = (2.0 * rng.uniform() - 1.0) * limit;
            }
        }
        Ok(net)
    }

    /// Rebuild from explicit layers; shapes must chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::invalid("network needs a layer"))?;
        let mut sizes = vec![first.weight.shape().get(1).copied().unwrap_or(0)];
        for layer in &layers {
            let ws = layer.weight.shape();
            if ws.len() != 2 || ws[1] != *sizes.last().unwrap() || layer.bias.shape() != [ws[0]] {
                return Err(Error::invalid("layer shapes do not chain"));
            }
            sizes.push(ws[0]);
        }
        Ok(Self { layer_sizes: sizes, layers })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Parameter tensors in canonical order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.params().iter().map(|t| t.shape().to_vec()).collect()
    }

    /// All parameters flattened in canonical order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::invalid(format!("expected {} parameters, got {}", self.param_count(), values.len())));
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.last_dim() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input width {} does not match network input {}",
                x.last_dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Evaluates the network on every row of `x`; returns `[rows, d_out]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = affine(x, &self.layers[0]);
        for layer in &self.layers[1..] {
            h = affine(&h.map(f64::tanh), layer);
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        let rows = x.rows();
        let x = x.clone().reshape(&[rows, self.input_dim()])?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = affine(&h, layer);
            inputs.push(h);
            h = if l + 1 == self.layers.len() { z } else { z.map(f64::tanh) };
        }
        Ok((h, ForwardCache { inputs }))
    }

    /// Reverse-mode pass for `<upstream, forward(x)>`; returns parameter and input gradients.
    pub fn backward(&self, cache: ForwardCache, upstream: &Tensor) -> Result<(MlpGrads, Tensor)> {
        let rows = cache.inputs[0].rows();
        if upstream.len() != rows * self.output_dim() || upstream.last_dim() != self.output_dim() {
            return Err(Error::invalid(format!(
                "upstream shape {:?} does not match output [{rows}, {}]",
                upstream.shape(),
                self.output_dim()
            )));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.data().to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
            let input = cache.inputs[l].data();
            let mut gw = vec![0.0; fan_in * fan_out];
            let mut gb = vec![0.0; fan_out];
            let mut prev = vec![0.0; rows * fan_in];
            let w = layer.weight.data();
            for b in 0..rows {
                let d_row = &delta[b * fan_out..(b + 1) * fan_out];
                let x_row = &input[b * fan_in..(b + 1) * fan_in];
                let p_row = &mut prev[b * fan_in..(b + 1) * fan_in];
                for (o, &d) in d_row.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    let gw_row = &mut gw[o * fan_in..(o + 1) * fan_in];
                    let w_row = &w[o * fan_in..(o + 1) * fan_in];
                    for i in 0..fan_in {
                        gw_row[i] += d * x_row[i];
                        p_row[i] += d * w_row[i];
                    }
                }
            }
            if l > 0 {
                // input to layer l is tanh output of layer l-1
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
            }
            grads.push(Dense {
                weight: Tensor::from_vec(&[fan_out, fan_in], gw)?,
                bias: Tensor::from_vec(&[fan_out], gb)?,
            });
            delta = prev;
        }
        grads.reverse();
        let input_grad = Tensor::from_vec(&[rows, self.input_dim()], delta)?;
        Ok((MlpGrads { layers: grads }, input_grad))
    }
}

/// Gradients of `<upstream, net(x)>` with respect to parameters and `x`.
pub fn mlp_backward(net: &Mlp, x: &Tensor, upstream: &Tensor) -> Result<(MlpGrads, Tensor)> {
    let (_, cache) = net.forward_cached(x)?;
    net.backward(cache, upstream)
}

impl MlpGrads {
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// `self += other`, layer by layer.
    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += y;
            }
            for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += y;
            }
        }
    }
}
