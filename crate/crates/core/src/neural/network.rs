use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            inputs,
            outputs,
            activation,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn weight_row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.outputs);
        for b in 0..x.rows() {
            let xb = x.row(b);
            let yb = out.row_mut(b);
            for (o, y) in yb.iter_mut().enumerate() {
                *y = self.activation.apply(self.bias[o] + dot(self.weight_row(o), xb));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// A stack of dense layers.
///
/// Every parameter update bumps an internal generation counter; a forward
/// cache taken before the update is rejected by [`backward`](Self::backward).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for DenseNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input of each layer, then the network output as the last entry.
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients laid out exactly like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradients {
    pub layers: Vec<LayerGradients>,
}

impl NetworkGradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &NetworkGradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(1.0, &b.weights, &mut a.weights);
            axpy(1.0, &b.bias, &mut a.bias);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|x| *x *= k);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

impl DenseNetwork {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::InvalidArgument(format!(
                    "layer {k}: parameter shapes do not match {}x{}",
                    l.outputs, l.inputs
                )));
            }
            if k > 0 && layers[k - 1].outputs != l.inputs {
                return Err(Error::LayerMismatch {
                    layer: k,
                    expected: l.inputs,
                    got: layers[k - 1].outputs,
                });
            }
            if !l.weights.iter().chain(&l.bias).all(|x| x.is_finite()) {
                return Err(Error::InvalidArgument(format!("layer {k}: non-finite parameter")));
            }
        }
        Ok(Self { layers, generation: 0 })
    }

    /// `input -> hidden... -> output`, with `hidden_act` on every hidden layer.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        hidden_act: Activation,
        output: usize,
        output_act: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input;
        for &h in hidden {
            layers.push(DenseLayer::glorot(width, h, hidden_act, rng));
            width = h;
        }
        layers.push(DenseLayer::glorot(width, output, output_act, rng));
        Self { layers, generation: 0 }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// Flat parameter accessor in layer order: weights then bias.
    pub fn parameter_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        self.generation += 1;
        for l in &mut self.layers {
            if index < l.weights.len() {
                return l.weights.get_mut(index);
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return l.bias.get_mut(index);
            }
            index -= l.bias.len();
        }
        None
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardCache> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for (k, layer) in self.layers.iter().enumerate() {
            let input = &activations[k];
            if input.cols() != layer.inputs {
                return Err(Error::LayerMismatch {
                    layer: k,
                    expected: layer.inputs,
                    got: input.cols(),
                });
            }
            let out = layer.forward(input);
            activations.push(out);
        }
        Ok(ForwardCache {
            generation: self.generation,
            activations,
        })
    }

    /// On/off state of every ReLU unit for each row of `x`.
    pub fn relu_pattern(&self, x: &Matrix) -> Result<Vec<bool>> {
        Ok(self.relu_pattern_of(&self.forward(x)?))
    }

    /// ReLU on/off states recorded in a forward cache of this network.
    pub fn relu_pattern_of(&self, cache: &ForwardCache) -> Vec<bool> {
        let mut pattern = Vec::new();
        for (layer, out) in self.layers.iter().zip(&cache.activations[1..]) {
            if layer.activation == Activation::Relu {
                pattern.extend(out.data().iter().map(|&v| v > 0.0));
            }
        }
        pattern
    }

    /// Forward pass without keeping intermediate activations.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut current: Option<Matrix> = None;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = current.as_ref().unwrap_or(x);
            if input.cols() != layer.inputs {
                return Err(Error::LayerMismatch {
                    layer: k,
                    expected: layer.inputs,
                    got: input.cols(),
                });
            }
            current = Some(layer.forward(input));
        }
        Ok(current.expect("network has layers"))
    }

    /// Reverse-mode pass. Returns parameter gradients and the gradient with
    /// respect to the network input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<(NetworkGradients, Matrix)> {
        if cache.generation != self.generation || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::StaleCache);
        }
        for (k, l) in self.layers.iter().enumerate() {
            if cache.activations[k].cols() != l.inputs || cache.activations[k + 1].cols() != l.outputs {
                return Err(Error::StaleCache);
            }
        }
        if grad_output.shape() != cache.output().shape() {
            return Err(Error::DimensionMismatch {
                expected: cache.output().data().len(),
                got: grad_output.data().len(),
            });
        }

        let mut grads = NetworkGradients::zeros_like(self);
        let mut upstream = grad_output.clone();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.activations[k];
            let y = &cache.activations[k + 1];
            let batch = x.rows();
            // gradient at the pre-activation, in place
            for (g, &out) in upstream.data_mut().iter_mut().zip(y.data()) {
                *g *= layer.activation.derivative_from_output(out);
            }
            let lg = &mut grads.layers[k];
            let mut dx = Matrix::zeros(batch, layer.inputs);
            for b in 0..batch {
                let dz = upstream.row(b);
                let xb = x.row(b);
                let dxb = dx.row_mut(b);
                for (o, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    lg.bias[o] += d;
                    axpy(d, xb, &mut lg.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                    axpy(d, layer.weight_row(o), dxb);
                }
            }
            upstream = dx;
        }
        Ok((grads, upstream))
    }

    /// Applies `f(param, grad)` to every parameter in layout order.
    pub(crate) fn update_with(&mut self, grads: &NetworkGradients, mut f: impl FnMut(usize, &mut f64, f64)) {
        self.generation += 1;
        let mut idx = 0;
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (p, &d) in l.weights.iter_mut().zip(&g.weights).chain(l.bias.iter_mut().zip(&g.bias)) {
                f(idx, p, d);
                idx += 1;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(w: f64, b: f64, act: Activation) -> DenseNetwork {
        DenseNetwork::from_layers(vec![DenseLayer {
            inputs: 1,
            outputs: 1,
            activation: act,
            weights: vec![w],
            bias: vec![b],
        }])
        .unwrap()
    }

    #[test]
    fn linear_forward() {
        let net = single(2.0, 1.0, Activation::Linear);
        let out = net.predict(&Matrix::from_rows(&[[3.0]]).unwrap()).unwrap();
        assert_eq!(out.data(), &[7.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let net = single(1.0, 0.0, Activation::Sigmoid);
        let out = net.predict(&Matrix::from_rows(&[[0.0]]).unwrap()).unwrap();
        assert_eq!(out.data(), &[0.5]);
    }

    #[test]
    fn relu_clips_negative() {
        let net = DenseNetwork::from_layers(vec![DenseLayer {
            inputs: 2,
            outputs: 2,
            activation: Activation::Relu,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
        }])
        .unwrap();
        let out = net.predict(&Matrix::from_rows(&[[-1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0]);
    }

    #[test]
    fn linear_backward_is_outer_product() {
        let net = single(2.0, 0.0, Activation::Linear);
        let cache = net.forward(&Matrix::from_rows(&[[3.0]]).unwrap()).unwrap();
        let (g, dx) = net.backward(&cache, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert_eq!(g.layers[0].weights, vec![3.0]);
        assert_eq!(g.layers[0].bias, vec![1.0]);
        assert_eq!(dx.data(), &[2.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseNetwork::mlp(2, &[8, 4], Activation::Relu, 1, Activation::Sigmoid, &mut rng);
        let x = Matrix::from_rows(&[[0.3, 0.1], [0.9, 0.5]]).unwrap();
        let cache = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&cache, &Matrix::zeros(2, 1)).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors_name_the_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseNetwork::mlp(3, &[4], Activation::Relu, 1, Activation::Linear, &mut rng);
        match net.forward(&Matrix::zeros(1, 2)) {
            Err(Error::LayerMismatch { layer: 0, expected: 3, got: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let bad = vec![
            DenseLayer::glorot(2, 3, Activation::Relu, &mut rng),
            DenseLayer::glorot(4, 1, Activation::Linear, &mut rng),
        ];
        assert!(matches!(
            DenseNetwork::from_layers(bad),
            Err(Error::LayerMismatch { layer: 1, .. })
        ));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = DenseNetwork::mlp(1, &[4], Activation::Relu, 1, Activation::Linear, &mut rng);
        let cache = net.forward(&Matrix::zeros(2, 1)).unwrap();
        *net.parameter_mut(0).unwrap() += 1.0;
        assert!(matches!(
            net.backward(&cache, &Matrix::zeros(2, 1)),
            Err(Error::StaleCache)
        ));
        let other = DenseNetwork::mlp(1, &[5], Activation::Relu, 1, Activation::Linear, &mut rng);
        let foreign = other.forward(&Matrix::zeros(2, 1)).unwrap();
        let fresh = DenseNetwork::mlp(1, &[4], Activation::Relu, 1, Activation::Linear, &mut rng);
        assert!(matches!(
            fresh.backward(&foreign, &Matrix::zeros(2, 1)),
            Err(Error::StaleCache)
        ));
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = DenseLayer::glorot(32, 64, Activation::Relu, &mut rng);
        let limit = (6.0f64 / 96.0).sqrt();
        assert!(l.weights.iter().all(|w| w.abs() < limit));
        assert!(l.bias.iter().all(|&b| b == 0.0));
    }
}
