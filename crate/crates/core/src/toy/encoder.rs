//! Small tanh MLP whose output is normalized onto the sphere, with exact
//! manual backpropagation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{UnitVector, ZERO_NORM};

/// Fully connected layer; `weights` is row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn same_shape(&self, other: &DenseLayer) -> bool {
        self.inputs == other.inputs && self.outputs == other.outputs
    }

    /// `out[b] = W · x[b] + bias` for a row-major batch.
    fn affine(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(batch * self.outputs);
        for row in x.chunks_exact(self.inputs) {
            for (w, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
                out.push(b + w.iter().zip(row).map(|(a, c)| a * c).sum::<f64>());
            }
        }
        out
    }
}

/// Hidden layers use tanh; the last layer is linear and its output is
/// projected onto the unit sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyEncoder {
    layers: Vec<DenseLayer>,
}

impl ToyEncoder {
    /// Gaussian initialization with variance `1 / fan_in`, zero biases.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::ConfigInvalid(format!(
                "encoder needs at least an input and an output width, got {layer_dims:?}"
            )));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let std = (1.0 / w[0] as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                let mut layer = DenseLayer::zeros(w[0], w[1]);
                layer.weights.iter_mut().for_each(|x| *x = normal.sample(rng));
                layer
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch);
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::ShapeMismatch);
            }
        }
        if layers.windows(2).any(|w| w[0].outputs != w[1].inputs) {
            return Err(Error::ShapeMismatch);
        }
        if layers.last().map_or(0, |l| l.outputs) < 2 {
            return Err(Error::DimTooSmall(layers.last().map_or(0, |l| l.outputs)));
        }
        Ok(ToyEncoder { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn same_shape(&self, other: &ToyEncoder) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.same_shape(b))
    }

    /// Applies `param -= lr * grad` elementwise.
    pub fn apply_step(&mut self, grad: &EncoderGradient, lr: f64) -> Result<()> {
        if !grad.matches(self) {
            return Err(Error::ShapeMismatch);
        }
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            l.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= lr * d);
            l.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= lr * d);
        }
        Ok(())
    }
}

/// Parameter gradients, shaped like the encoder's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGradient {
    pub layers: Vec<DenseLayer>,
}

impl EncoderGradient {
    pub fn zeros_like(encoder: &ToyEncoder) -> Self {
        EncoderGradient {
            layers: encoder
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    fn matches(&self, encoder: &ToyEncoder) -> bool {
        self.layers.len() == encoder.layers.len()
            && self.layers.iter().zip(&encoder.layers).all(|(a, b)| a.same_shape(b))
    }

    /// Every entry, weights before biases, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    /// `self = decay * self + other`.
    pub fn decay_add(&mut self, decay: f64, other: &EncoderGradient) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x = decay * *x + y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x = decay * *x + y);
        }
    }
}

/// Activations saved by [`encode_forward`] for [`encode_backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    dims: Vec<usize>,
    batch: usize,
    /// `activations[l]` is the row-major input to layer `l`; the last entry is
    /// the unnormalized output.
    activations: Vec<Vec<f64>>,
    norms: Vec<f64>,
    embeddings: Vec<UnitVector>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Runs the encoder on a batch, returning unit-norm embeddings.
pub fn encode_forward(
    encoder: &ToyEncoder,
    inputs: &[Vec<f64>],
) -> Result<(Vec<UnitVector>, ForwardCache)> {
    let d_in = encoder.input_dim();
    let batch = inputs.len();
    let mut x = Vec::with_capacity(batch * d_in);
    for row in inputs {
        if row.len() != d_in {
            return Err(Error::DimMismatch {
                expected: d_in,
                found: row.len(),
            });
        }
        x.extend_from_slice(row);
    }

    let last = encoder.layers.len() - 1;
    let mut activations = vec![x];
    for (i, layer) in encoder.layers.iter().enumerate() {
        let mut out = layer.affine(&activations[i], batch);
        if i < last {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        activations.push(out);
    }

    let d_out = encoder.output_dim();
    let output = &activations[activations.len() - 1];
    let mut norms = Vec::with_capacity(batch);
    let mut embeddings = Vec::with_capacity(batch);
    for row in output.chunks_exact(d_out) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > ZERO_NORM) {
            return Err(Error::ZeroVector { norm: n });
        }
        norms.push(n);
        embeddings.push(UnitVector::from_unit_unchecked(
            row.iter().map(|v| v / n).collect(),
        ));
    }
    let cache = ForwardCache {
        dims: encoder.layer_dims(),
        batch,
        activations,
        norms,
        embeddings: embeddings.clone(),
    };
    Ok((embeddings, cache))
}

/// Backpropagates `grad_embeddings[b] = dL/dz_b` to parameter gradients,
/// including the normalization Jacobian `(I − z zᵀ) / ‖y‖`.
pub fn encode_backward(
    encoder: &ToyEncoder,
    cache: &ForwardCache,
    grad_embeddings: &[Vec<f64>],
) -> Result<EncoderGradient> {
    if cache.dims != encoder.layer_dims() || grad_embeddings.len() != cache.batch {
        return Err(Error::CacheMismatch);
    }
    let d_out = encoder.output_dim();
    let mut delta = Vec::with_capacity(cache.batch * d_out);
    for ((g, z), n) in grad_embeddings.iter().zip(&cache.embeddings).zip(&cache.norms) {
        if g.len() != d_out {
            return Err(Error::CacheMismatch);
        }
        let radial: f64 = g.iter().zip(z.as_slice()).map(|(a, b)| a * b).sum();
        delta.extend(g.iter().zip(z.as_slice()).map(|(gi, zi)| (gi - radial * zi) / n));
    }

    let mut grads = EncoderGradient::zeros_like(encoder);
    for l in (0..encoder.layers.len()).rev() {
        let layer = &encoder.layers[l];
        let input = &cache.activations[l];
        let g = &mut grads.layers[l];
        for (d_row, x_row) in delta.chunks_exact(layer.outputs).zip(input.chunks_exact(layer.inputs)) {
            for (o, d) in d_row.iter().enumerate() {
                g.bias[o] += d;
                let w = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                w.iter_mut().zip(x_row).for_each(|(gw, x)| *gw += d * x);
            }
        }
        if l == 0 {
            break;
        }
        // Through W, then through the tanh that produced this layer's input.
        let mut prev = vec![0.0; cache.batch * layer.inputs];
        for ((p_row, d_row), a_row) in prev
            .chunks_exact_mut(layer.inputs)
            .zip(delta.chunks_exact(layer.outputs))
            .zip(input.chunks_exact(layer.inputs))
        {
            for (d, w) in d_row.iter().zip(layer.weights.chunks_exact(layer.inputs)) {
                p_row.iter_mut().zip(w).for_each(|(p, wi)| *p += d * wi);
            }
            p_row.iter_mut().zip(a_row).for_each(|(p, a)| *p *= 1.0 - a * a);
        }
        delta = prev;
    }
    Ok(grads)
}

/// `key ← m·key + (1 − m)·query`, elementwise.
pub fn momentum_update(query: &ToyEncoder, key: &mut ToyEncoder, m: f64) -> Result<()> {
    if !query.same_shape(key) {
        return Err(Error::ShapeMismatch);
    }
    for (q, k) in query.layers.iter().zip(key.layers.iter_mut()) {
        k.weights.iter_mut().zip(&q.weights).for_each(|(kw, qw)| *kw = m * *kw + (1.0 - m) * qw);
        k.bias.iter_mut().zip(&q.bias).for_each(|(kb, qb)| *kb = m * *kb + (1.0 - m) * qb);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoder(dims: &[usize], seed: u64) -> ToyEncoder {
        ToyEncoder::new(dims, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn constant_output_from_bias_only() {
        let mut enc = encoder(&[3, 4, 2], 0);
        for l in enc.layers_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        enc.layers_mut()[1].bias = vec![3.0, 4.0];
        let (z, _) = encode_forward(&enc, &[vec![1.0, 2.0, 3.0], vec![-5.0, 0.0, 9.0]]).unwrap();
        for e in z {
            assert_eq!(e.as_slice(), &[0.6, 0.8]);
        }
    }

    #[test]
    fn outputs_are_unit_norm() {
        let enc = encoder(&[5, 8, 3], 1);
        let inputs: Vec<Vec<f64>> = (0..20).map(|i| (0..5).map(|j| (i * j) as f64 * 0.1 - 1.0).collect()).collect();
        let (z, cache) = encode_forward(&enc, &inputs).unwrap();
        assert_eq!(cache.batch(), 20);
        for e in z {
            let n: f64 = e.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_linear_layer_passes_unit_input_through() {
        let mut layer = DenseLayer::zeros(3, 3);
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let enc = ToyEncoder::from_layers(vec![layer]).unwrap();
        let x = vec![0.0, 0.6, 0.8];
        let (z, _) = encode_forward(&enc, std::slice::from_ref(&x)).unwrap();
        assert_eq!(z[0].as_slice(), x.as_slice());
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let enc = encoder(&[3, 2], 0);
        assert!(matches!(
            encode_forward(&enc, &[vec![1.0, 2.0]]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_parameter_gradient() {
        let enc = encoder(&[3, 4, 2], 2);
        let (_, cache) = encode_forward(&enc, &[vec![0.1, 0.2, 0.3]]).unwrap();
        let g = encode_backward(&enc, &cache, &[vec![0.0, 0.0]]).unwrap();
        assert!(g.flatten().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn radial_upstream_gradient_is_annihilated() {
        let enc = encoder(&[3, 4, 2], 3);
        let (z, cache) = encode_forward(&enc, &[vec![0.1, -0.2, 0.3]]).unwrap();
        let radial: Vec<f64> = z[0].as_slice().iter().map(|x| 2.5 * x).collect();
        let g = encode_backward(&enc, &cache, &[radial]).unwrap();
        assert!(g.flatten().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let enc = encoder(&[3, 4, 2], 4);
        let other = encoder(&[3, 5, 2], 4);
        let (_, cache) = encode_forward(&other, &[vec![0.1, 0.2, 0.3]]).unwrap();
        assert!(matches!(
            encode_backward(&enc, &cache, &[vec![1.0, 0.0]]),
            Err(Error::CacheMismatch)
        ));
        let (_, cache) = encode_forward(&enc, &[vec![0.1, 0.2, 0.3]]).unwrap();
        assert!(matches!(
            encode_backward(&enc, &cache, &[vec![1.0, 0.0], vec![0.0, 1.0]]),
            Err(Error::CacheMismatch)
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let enc = encoder(&[4, 6, 5, 3], 5);
        let inputs = vec![vec![0.3, -0.7, 1.1, 0.2], vec![-1.0, 0.4, 0.0, 0.9]];
        let upstream = vec![vec![0.5, -1.2, 0.3], vec![-0.4, 0.8, 1.5]];
        let objective = |e: &ToyEncoder| -> f64 {
            let (z, _) = encode_forward(e, &inputs).unwrap();
            z.iter()
                .zip(&upstream)
                .map(|(z, g)| z.as_slice().iter().zip(g).map(|(a, b)| a * b).sum::<f64>())
                .sum()
        };
        let (_, cache) = encode_forward(&enc, &inputs).unwrap();
        let analytic = encode_backward(&enc, &cache, &upstream).unwrap().flatten();

        let h = 1e-5;
        let mut numeric = Vec::new();
        for l in 0..enc.layers().len() {
            let n_w = enc.layers()[l].weights.len();
            let n_b = enc.layers()[l].bias.len();
            for i in 0..n_w + n_b {
                let bump = |delta: f64| {
                    let mut e = enc.clone();
                    let layer = &mut e.layers_mut()[l];
                    if i < n_w {
                        layer.weights[i] += delta;
                    } else {
                        layer.bias[i - n_w] += delta;
                    }
                    objective(&e)
                };
                numeric.push((bump(h) - bump(-h)) / (2.0 * h));
            }
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(diff / scale < 1e-6, "relative error {}", diff / scale);
    }

    #[test]
    fn momentum_update_examples() {
        let query = encoder(&[2, 2], 6);
        let mut key = encoder(&[2, 2], 7);
        let original = key.clone();
        momentum_update(&query, &mut key, 1.0).unwrap();
        assert_eq!(key, original);
        momentum_update(&query, &mut key, 0.0).unwrap();
        assert_eq!(key, query);

        let mut q = DenseLayer::zeros(1, 2);
        q.weights = vec![0.0, 0.0];
        let mut k = DenseLayer::zeros(1, 2);
        k.weights = vec![1.0, 1.0];
        let q = ToyEncoder::from_layers(vec![q]).unwrap();
        let mut k = ToyEncoder::from_layers(vec![k]).unwrap();
        momentum_update(&q, &mut k, 0.999).unwrap();
        assert_eq!(k.layers()[0].weights, vec![0.999, 0.999]);

        let wrong = encoder(&[3, 2], 0);
        assert!(matches!(
            momentum_update(&wrong, &mut key, 0.5),
            Err(Error::ShapeMismatch)
        ));
    }
}
