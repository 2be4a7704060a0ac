//! Dense feed-forward network with ReLU hidden layers and a linear output layer.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`. Single-sample
//! `forward`/`backward` are plain loops; the batched variants route through
//! `matrixmultiply::dgemm` and are what the agents use during training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights and biases of one dense layer (also reused for gradients and
/// optimizer moments, which share the shape).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.biases.iter())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    layers: Vec<Dense>,
}

/// Gradients of a scalar objective with respect to every parameter of an
/// [`MlpParams`]; layer `l` has the same shapes as the network's layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub layers: Vec<Dense>,
}

/// Post-activation outputs of every layer for a batch, kept for backprop.
#[derive(Debug, Clone)]
pub struct BatchActivations {
    batch: usize,
    // acts[0] is the input batch; acts[l + 1] is the output of layer l.
    acts: Vec<Vec<f64>>,
}

impl BatchActivations {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Network outputs, row-major `(batch, output_dim)`.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "an MLP needs at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl MlpParams {
    /// All weights and biases zero.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let bound = (6.0 / layer_sizes[l] as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Builds a network from explicit layers, checking every shape.
    pub fn from_layers(layer_sizes: &[usize], layers: Vec<Dense>) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        if layers.len() != layer_sizes.len() - 1 {
            return Err(Error::dim(
                "layer count",
                layer_sizes.len() - 1,
                layers.len(),
            ));
        }
        for (l, layer) in layers.iter().enumerate() {
            let (i, o) = (layer_sizes[l], layer_sizes[l + 1]);
            if layer.weights.len() != i * o {
                return Err(Error::dim("weight matrix", i * o, layer.weights.len()));
            }
            if layer.biases.len() != o {
                return Err(Error::dim("bias vector", o, layer.biases.len()));
            }
            if layer.values().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "layer {l} contains a non-finite parameter"
                )));
            }
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
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
        *self.layer_sizes.last().expect("validated")
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.values().all(|v| v.is_finite()))
    }

    /// Hard copy of every parameter from `other` (shapes must agree).
    pub fn copy_from(&mut self, other: &MlpParams) {
        assert_eq!(self.layer_sizes, other.layer_sizes, "shape mismatch");
        self.layers.clone_from(&other.layers);
    }

    fn is_hidden(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), input.len()));
        }
        Ok(())
    }

    /// Post-activation outputs of every layer, `acts[0]` being the input.
    fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let x = &acts[l];
            let in_dim = x.len();
            let mut out = layer.biases.clone();
            for (o, y) in out.iter_mut().enumerate() {
                let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
                *y += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
            if self.is_hidden(l) {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.activations(input).pop().expect("non-empty"))
    }

    /// Exact gradient of `upstream_grad · forward(input)` with respect to
    /// every parameter.
    pub fn backward(&self, input: &[f64], upstream_grad: &[f64]) -> Result<GradBundle> {
        self.check_input(input)?;
        if upstream_grad.len() != self.output_dim() {
            return Err(Error::dim(
                "upstream gradient",
                self.output_dim(),
                upstream_grad.len(),
            ));
        }
        let acts = self.activations(input);
        let mut grads = self.zero_grads();
        let mut delta = upstream_grad.to_vec();
        for l in (0..self.layers.len()).rev() {
            let x = &acts[l];
            let in_dim = x.len();
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                g.biases[o] = d;
                let row = &mut g.weights[o * in_dim..(o + 1) * in_dim];
                row.iter_mut().zip(x).for_each(|(gw, xi)| *gw = d * xi);
            }
            if l == 0 {
                break;
            }
            let w = &self.layers[l].weights;
            let mut prev = vec![0.0; in_dim];
            for (o, &d) in delta.iter().enumerate() {
                let row = &w[o * in_dim..(o + 1) * in_dim];
                prev.iter_mut().zip(row).for_each(|(p, wv)| *p += wv * d);
            }
            // ReLU'(z) = 1{z > 0}, and z > 0 exactly when the activation is > 0.
            prev.iter_mut()
                .zip(x)
                .filter(|(_, a)| **a <= 0.0)
                .for_each(|(p, _)| *p = 0.0);
            delta = prev;
        }
        Ok(grads)
    }

    /// Forward pass over a row-major `(batch, input_dim)` block.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<BatchActivations> {
        if inputs.len() != batch * self.input_dim() {
            return Err(Error::dim(
                "batched network input",
                batch * self.input_dim(),
                inputs.len(),
            ));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(inputs.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let (in_dim, out_dim) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let mut out = vec![0.0; batch * out_dim];
            for row in out.chunks_exact_mut(out_dim) {
                row.copy_from_slice(&layer.biases);
            }
            // out(B x out) += X(B x in) * W^T(in x out)
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    in_dim,
                    out_dim,
                    1.0,
                    acts[l].as_ptr(),
                    in_dim as isize,
                    1,
                    layer.weights.as_ptr(),
                    1,
                    in_dim as isize,
                    1.0,
                    out.as_mut_ptr(),
                    out_dim as isize,
                    1,
                );
            }
            if self.is_hidden(l) {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        Ok(BatchActivations { batch, acts })
    }

    /// Gradient of `sum_b upstream[b] · output[b]`, i.e. the batch gradients
    /// summed (callers fold any 1/B into `upstream`).
    pub fn backward_batch(&self, acts: &BatchActivations, upstream: &[f64]) -> Result<GradBundle> {
        let batch = acts.batch;
        if acts.acts.len() != self.layers.len() + 1
            || acts.acts[0].len() != batch * self.input_dim()
        {
            return Err(Error::InvalidArgument(
                "activations were not produced by this network shape".into(),
            ));
        }
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::dim(
                "batched upstream gradient",
                batch * self.output_dim(),
                upstream.len(),
            ));
        }
        let mut grads = self.zero_grads();
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let (in_dim, out_dim) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let x = &acts.acts[l];
            let g = &mut grads.layers[l];
            for row in delta.chunks_exact(out_dim) {
                g.biases.iter_mut().zip(row).for_each(|(b, d)| *b += d);
            }
            // gW(out x in) = delta^T(out x B) * X(B x in)
            unsafe {
                matrixmultiply::dgemm(
                    out_dim,
                    batch,
                    in_dim,
                    1.0,
                    delta.as_ptr(),
                    1,
                    out_dim as isize,
                    x.as_ptr(),
                    in_dim as isize,
                    1,
                    0.0,
                    g.weights.as_mut_ptr(),
                    in_dim as isize,
                    1,
                );
            }
            if l == 0 {
                break;
            }
            // dX(B x in) = delta(B x out) * W(out x in)
            let mut prev = vec![0.0; batch * in_dim];
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    out_dim,
                    in_dim,
                    1.0,
                    delta.as_ptr(),
                    out_dim as isize,
                    1,
                    self.layers[l].weights.as_ptr(),
                    in_dim as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    in_dim as isize,
                    1,
                );
            }
            prev.iter_mut()
                .zip(x)
                .filter(|(_, a)| **a <= 0.0)
                .for_each(|(p, _)| *p = 0.0);
            delta = prev;
        }
        Ok(grads)
    }

    pub fn zero_grads(&self) -> GradBundle {
        GradBundle {
            layers: self
                .layer_sizes
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        }
    }
}

impl GradBundle {
    /// Elementwise `self += other`.
    pub fn accumulate(&mut self, other: &GradBundle) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights
                .iter_mut()
                .zip(&b.weights)
                .for_each(|(x, y)| *x += y);
            a.biases
                .iter_mut()
                .zip(&b.biases)
                .for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= factor);
            l.biases.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Flattened view (weights then biases, layer by layer).
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.values().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.values().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.values())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_output_equals_bias() {
        let mut net = MlpParams::zeros(&[3, 4, 2]).unwrap();
        net.layers_mut()[1].biases = vec![0.5, -1.5];
        assert_eq!(net.forward(&[7.0, -2.0, 3.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn identity_linear_layer() {
        let layers = vec![Dense {
            weights: vec![1.0, 0.0, 0.0, 1.0],
            biases: vec![0.0, 0.0],
        }];
        let net = MlpParams::from_layers(&[2, 2], layers).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = MlpParams::zeros(&[3, 2]).unwrap();
        match net.forward(&[1.0]) {
            Err(Error::DimMismatch { expected, got, .. }) => {
                assert_eq!((expected, got), (3, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpParams::he_uniform(&[4, 8, 3], &mut rng).unwrap();
        let g = net.backward(&[0.1, 0.2, -0.3, 0.4], &[0.0; 3]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = MlpParams::he_uniform(&[3, 2], &mut rng).unwrap();
        let x = [1.0, -2.0, 0.5];
        let g = [0.3, -0.7];
        let grads = net.backward(&x, &g).unwrap();
        let expected: Vec<f64> = g
            .iter()
            .flat_map(|gi| x.iter().map(move |xj| gi * xj))
            .collect();
        assert_eq!(grads.layers[0].weights, expected);
        assert_eq!(grads.layers[0].biases, g.to_vec());
    }

    #[test]
    fn batched_passes_agree_with_single_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = MlpParams::he_uniform(&[5, 16, 16, 4], &mut rng).unwrap();
        let batch = 7;
        let inputs: Vec<f64> = (0..batch * 5)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let upstream: Vec<f64> = (0..batch * 4)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let acts = net.forward_batch(&inputs, batch).unwrap();
        let mut summed = net.zero_grads();
        for b in 0..batch {
            let x = &inputs[b * 5..(b + 1) * 5];
            let y = net.forward(x).unwrap();
            for (u, v) in y.iter().zip(&acts.output()[b * 4..(b + 1) * 4]) {
                assert!((u - v).abs() < 1e-12);
            }
            summed.accumulate(&net.backward(x, &upstream[b * 4..(b + 1) * 4]).unwrap());
        }
        let batched = net.backward_batch(&acts, &upstream).unwrap();
        for (a, b) in summed.flat().iter().zip(batched.flat()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn from_layers_checks_shapes() {
        let bad = vec![Dense {
            weights: vec![0.0; 5],
            biases: vec![0.0; 2],
        }];
        assert!(MlpParams::from_layers(&[3, 2], bad).is_err());
        assert!(MlpParams::zeros(&[3]).is_err());
        assert!(MlpParams::zeros(&[3, 0, 2]).is_err());
    }

    #[test]
    fn he_uniform_respects_bound_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = MlpParams::he_uniform(&[6, 10, 2], &mut rng).unwrap();
        let bound = 1.0f64;
        assert!(net.layers()[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(net
            .layers()
            .iter()
            .all(|l| l.biases.iter().all(|b| *b == 0.0)));
    }
}
