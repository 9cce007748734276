//! Minimal dense-network kernel: fully connected layers with ReLU or
//! identity activations, batched forward/backward passes, and SGD with
//! classical momentum. Shared by the prediction models and the policy.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{OpadError, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

/// `y = act(x W^T + b)` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn uniform(fan_in: usize, fan_out: usize, activation: Activation, r: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let weight = Array2::from_shape_fn((fan_out, fan_in), |_| r.random_range(-bound..=bound));
        let bias = Array1::from_shape_fn(fan_out, |_| r.random_range(-bound..=bound));
        Dense {
            weight,
            bias,
            activation,
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Dense {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    fn pre_activation(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    fn activate(&self, mut z: Array2<f64>) -> Array2<f64> {
        if self.activation == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
}

/// Per-layer inputs and outputs recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

/// Gradient (or momentum) buffers with the same shapes as a [`DenseNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            w.mapv_inplace(|v| v * k);
            b.mapv_inplace(|v| v * k);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

impl DenseNet {
    /// Builds `sizes.len() - 1` layers; hidden layers use `hidden`, the last
    /// uses `output`. With `zero_output` the last layer starts at zero.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        zero_output: bool,
        r: &mut Rng,
    ) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least one layer");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                if i + 1 == n && zero_output {
                    Dense::zeros(sizes[i], sizes[i + 1], act)
                } else {
                    Dense::uniform(sizes[i], sizes[i + 1], act, r)
                }
            })
            .collect();
        DenseNet { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::fan_out).unwrap_or(0)
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(OpadError::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for l in &self.layers {
            h = l.activate(l.pre_activation(h.view()));
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for l in &self.layers {
            let y = l.activate(l.pre_activation(h.view()));
            inputs.push(h);
            outputs.push(y.clone());
            h = y;
        }
        Ok((h, ForwardCache { inputs, outputs }))
    }

    /// Back-propagates `grad_out` (dL/d output) and returns parameter
    /// gradients together with dL/d input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: Array2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out;
        for (i, l) in self.layers.iter().enumerate().rev() {
            if l.activation == Activation::Relu {
                ndarray::Zip::from(&mut g)
                    .and(&cache.outputs[i])
                    .for_each(|gv, &y| {
                        if y <= 0.0 {
                            *gv = 0.0;
                        }
                    });
            }
            let dw = g.t().dot(&cache.inputs[i]);
            let db = g.sum_axis(Axis(0));
            let dx = g.dot(&l.weight);
            grads.push((dw, db));
            g = dx;
        }
        grads.reverse();
        (Gradients { layers: grads }, g)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(OpadError::Dimension {
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> Vec<LayerShape> {
        self.layers
            .iter()
            .map(|l| LayerShape {
                fan_in: l.fan_in(),
                fan_out: l.fan_out(),
                activation: l.activation,
            })
            .collect()
    }

    pub fn from_manifest(shapes: &[LayerShape], params: &[f64]) -> Result<Self> {
        if shapes.is_empty() {
            return Err(OpadError::config("empty layer manifest"));
        }
        let mut net = DenseNet {
            layers: shapes
                .iter()
                .map(|s| Dense::zeros(s.fan_in, s.fan_out, s.activation))
                .collect(),
        };
        for w in shapes.windows(2) {
            if w[0].fan_out != w[1].fan_in {
                return Err(OpadError::config("layer manifest shapes do not chain"));
            }
        }
        net.set_flat_params(params)?;
        Ok(net)
    }

    pub fn checkpoint(&self) -> NetCheckpoint {
        NetCheckpoint {
            shapes: self.manifest(),
            params: self.flat_params(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

/// Flat parameter vector plus shape manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub shapes: Vec<LayerShape>,
    pub params: Vec<f64>,
}

impl NetCheckpoint {
    pub fn restore(&self) -> Result<DenseNet> {
        DenseNet::from_manifest(&self.shapes, &self.params)
    }
}

/// SGD with classical momentum: `v = mu v + g; p -= lr v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Gradients,
}

impl SgdMomentum {
    pub fn new(net: &DenseNet, lr: f64, momentum: f64) -> Self {
        SgdMomentum {
            lr,
            momentum,
            velocity: Gradients::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) {
        let (lr, mu) = (self.lr, self.momentum);
        for ((layer, (vw, vb)), (gw, gb)) in net
            .layers
            .iter_mut()
            .zip(&mut self.velocity.layers)
            .zip(&grads.layers)
        {
            ndarray::Zip::from(&mut *vw).and(gw).for_each(|v, &g| *v = mu * *v + g);
            ndarray::Zip::from(&mut *vb).and(gb).for_each(|v, &g| *v = mu * *v + g);
            layer.weight.scaled_add(-lr, vw);
            layer.bias.scaled_add(-lr, vb);
        }
    }

    pub fn velocity(&self) -> &Gradients {
        &self.velocity
    }

    pub fn set_velocity(&mut self, flat: &[f64]) -> Result<()> {
        let n: usize = self.velocity.layers.iter().map(|(w, b)| w.len() + b.len()).sum();
        if flat.len() != n {
            return Err(OpadError::Dimension {
                expected: n,
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for (w, b) in &mut self.velocity.layers {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Mean cross-entropy over rows and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows().max(1) as f64;
    let mut probs = softmax_rows(logits);
    let mut loss = 0.0;
    for (mut row, &t) in probs.rows_mut().into_iter().zip(targets) {
        loss -= row[t].max(1e-300).ln();
        row[t] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }
    (loss / n, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    fn mse(net: &DenseNet, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let out = net.forward(x.view()).unwrap();
        (&out - y).mapv(|v| v * v).sum() * 0.5
    }

    /// Central finite differences on every parameter of a small network.
    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::from_seed(11);
        let net = DenseNet::new(&[5, 7, 6, 3], Activation::Relu, Activation::Identity, false, &mut r);
        let x = Array2::from_shape_fn((4, 5), |_| r.random_range(-1.0..1.0));
        let y = Array2::from_shape_fn((4, 3), |_| r.random_range(-1.0..1.0));
        let (out, cache) = net.forward_cached(x.view()).unwrap();
        let (grads, _) = net.backward(&cache, &out - &y);
        let analytic = grads.flatten();
        let base = net.flat_params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let mut np = net.clone();
            np.set_flat_params(&p).unwrap();
            let lp = mse(&np, &x, &y);
            p[i] -= 2.0 * h;
            np.set_flat_params(&p).unwrap();
            let lm = mse(&np, &x, &y);
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!((fd - analytic[i]).abs() / denom < 1e-4, "param {i}: fd {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax_rows(&Array2::zeros((2, 4)));
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn cross_entropy_gradient_is_probs_minus_onehot() {
        let logits = array![[1.0, 2.0, 0.5]];
        let (loss, g) = softmax_cross_entropy(&logits, &[1]);
        let p = softmax_rows(&logits);
        assert!((loss + p[[0, 1]].ln()).abs() < 1e-12);
        assert!((g[[0, 1]] - (p[[0, 1]] - 1.0)).abs() < 1e-12);
        assert!((g[[0, 0]] - p[[0, 0]]).abs() < 1e-12);
    }

    #[test]
    fn momentum_step() {
        let mut net = DenseNet {
            layers: vec![Dense {
                weight: array![[1.0]],
                bias: array![0.0],
                activation: Activation::Identity,
            }],
        };
        let mut opt = SgdMomentum::new(&net, 0.1, 0.5);
        let g = Gradients {
            layers: vec![(array![[1.0]], array![0.0])],
        };
        opt.step(&mut net, &g);
        assert!((net.layers[0].weight[[0, 0]] - 0.9).abs() < 1e-15);
        opt.step(&mut net, &g);
        // v = 0.5 * 1 + 1 = 1.5
        assert!((net.layers[0].weight[[0, 0]] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut r = rng::from_seed(2);
        let net = DenseNet::new(&[3, 4, 2], Activation::Relu, Activation::Identity, false, &mut r);
        let json = serde_json::to_string(&net.checkpoint()).unwrap();
        let back: NetCheckpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back.restore().unwrap(), net);
    }

    #[test]
    fn dimension_mismatch() {
        let mut r = rng::from_seed(2);
        let net = DenseNet::new(&[3, 2], Activation::Relu, Activation::Identity, false, &mut r);
        assert!(matches!(
            net.forward(Array2::zeros((1, 4)).view()),
            Err(OpadError::Dimension { expected: 3, got: 4 })
        ));
    }
}
