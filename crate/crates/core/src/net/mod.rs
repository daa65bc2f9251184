//! Feedforward softmax classifier with analytic derivatives.
//!
//! The network splits into a feature extractor `g(θ_f; x)` (a stack of dense
//! layers with elementwise activations) and a bias-free linear classification
//! layer `θ_c ∈ R^{p×m}` whose columns are the per-class weight vectors. The
//! z-space helpers ([`softmax_probs`], [`loss_z`], [`grad_z_loss`],
//! [`hessian_z_loss`]) operate on features directly and are what the
//! surrogate machinery works with.

mod io;

pub use io::{model_from_bytes, model_to_bytes, read_model, write_model, MODEL_MAGIC, MODEL_VERSION};

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    /// Piecewise linear; breaks Hessian smoothness in x, fine for training.
    Relu,
    /// Linear passthrough, mostly for tests.
    Identity,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Relu => a.max(0.0),
            Activation::Identity => a,
        }
    }

    /// Derivative expressed through the pre-activation `a` and output `h`.
    #[inline]
    fn derivative(self, a: f64, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// A single `(x, y)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl LabeledExample {
    pub fn new(x: Vec<f64>, y: usize) -> Self {
        Self { x, y }
    }
}

/// Dense layer `h = act(W h_prev + b)`, with `W` stored as out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

/// Shape and activation of a freshly initialized network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub n_classes: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Tanh
}

impl Architecture {
    /// The d-64-64-p tanh default.
    pub fn default_for(input_dim: usize, feature_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![64, 64],
            feature_dim,
            n_classes,
            activation: Activation::Tanh,
        }
    }

    /// `[d, hidden.., p, m]`
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.feature_dim);
        dims.push(self.n_classes);
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
    theta_c: DMatrix<f64>,
}

/// Gradient with the same layout as [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrad {
    pub layers: Vec<(DMatrix<f64>, DVector<f64>)>,
    pub theta_c: DMatrix<f64>,
}

/// Pre-activations and outputs of every feature layer for one input.
struct Trace {
    inputs: Vec<DVector<f64>>,
    pre: Vec<DVector<f64>>,
    post: Vec<DVector<f64>>,
}

impl Trace {
    fn features(&self) -> &DVector<f64> {
        self.post.last().expect("network has at least one layer")
    }
}

impl Network {
    pub fn new(layers: Vec<Dense>, theta_c: DMatrix<f64>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("no feature layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.nrows() == 0 || layer.weights.ncols() == 0 {
                return Err(Error::InvalidNetwork(format!("layer {i} has a zero dimension")));
            }
            if layer.bias.len() != layer.weights.nrows() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i}: bias length {} != output dim {}",
                    layer.bias.len(),
                    layer.weights.nrows()
                )));
            }
            if i > 0 && layers[i - 1].weights.nrows() != layer.weights.ncols() {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i}: input dim {} != previous output dim {}",
                    layer.weights.ncols(),
                    layers[i - 1].weights.nrows()
                )));
            }
        }
        let p = layers.last().unwrap().weights.nrows();
        if theta_c.nrows() != p || theta_c.ncols() < 1 {
            return Err(Error::InvalidNetwork(format!(
                "classification layer is {}x{}, expected {p} rows",
                theta_c.nrows(),
                theta_c.ncols()
            )));
        }
        let net = Self { layers, theta_c };
        if !net.is_finite() {
            return Err(Error::InvalidNetwork("non-finite weights".into()));
        }
        Ok(net)
    }

    /// Glorot-uniform weights, zero biases, seeded.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        let dims = arch.layer_dims();
        if dims.contains(&0) {
            return Err(Error::InvalidNetwork("zero layer dimension".into()));
        }
        let mut rng = rng::seeded(seed);
        let mut glorot = |rows: usize, cols: usize, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..=limit))
        };
        let n_feature_layers = dims.len() - 2;
        let mut layers = Vec::with_capacity(n_feature_layers);
        for l in 0..n_feature_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let w = glorot(fan_out, fan_in, fan_in, fan_out);
            layers.push(Dense {
                weights: w,
                bias: DVector::zeros(fan_out),
                activation: arch.activation,
            });
        }
        let p = arch.feature_dim;
        let m = arch.n_classes;
        let theta_c = glorot(p, m, p, m);
        Self::new(layers, theta_c)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn theta_c(&self) -> &DMatrix<f64> {
        &self.theta_c
    }

    pub fn theta_c_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.theta_c
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.theta_c.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.theta_c.ncols()
    }

    /// `[d, hidden.., p, m]`
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims.push(self.n_classes());
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>() + self.theta_c.len()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
            && self.theta_c.iter().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), x.len()));
        }
        Ok(())
    }

    fn check_example(&self, ex: &LabeledExample) -> Result<()> {
        self.check_input(&ex.x)?;
        if ex.y >= self.n_classes() {
            return Err(Error::LabelOutOfRange {
                label: ex.y,
                classes: self.n_classes(),
            });
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut post = Vec::with_capacity(n);
        let mut h = DVector::from_column_slice(x);
        for layer in &self.layers {
            let a = &layer.weights * &h + &layer.bias;
            let out = a.map(|v| layer.activation.apply(v));
            inputs.push(h);
            pre.push(a);
            h = out.clone();
            post.push(out);
        }
        Trace { inputs, pre, post }
    }

    /// Backpropagate `dz = ∂/∂z` through the feature layers. Returns the
    /// input gradient and, if requested, the per-layer parameter gradients.
    fn backprop(
        &self,
        trace: &Trace,
        dz: DVector<f64>,
        want_params: bool,
    ) -> (DVector<f64>, Vec<LayerGrad>) {
        let mut grads = Vec::with_capacity(if want_params { self.layers.len() } else { 0 });
        let mut upstream = dz;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let da = DVector::from_fn(upstream.len(), |i, _| {
                upstream[i] * layer.activation.derivative(trace.pre[l][i], trace.post[l][i])
            });
            if want_params {
                grads.push((&da * trace.inputs[l].transpose(), da.clone()));
            }
            upstream = layer.weights.tr_mul(&da);
        }
        grads.reverse();
        (upstream, grads)
    }

    /// `z = g(θ_f; x)`
    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).features().clone())
    }

    pub fn logits(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.theta_c.tr_mul(&self.features(x)?))
    }

    pub fn probs(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(softmax_probs(&self.theta_c, &self.features(x)?))
    }

    /// Argmax class, ties to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(self.logits(x)?.as_slice()))
    }

    /// Softmax loss `-log p_y(θ, x)`.
    pub fn loss(&self, ex: &LabeledExample) -> Result<f64> {
        self.check_example(ex)?;
        Ok(loss_z(&self.theta_c, self.trace(&ex.x).features(), ex.y))
    }

    /// Loss and full parameter gradient.
    pub fn grad_params_loss(&self, ex: &LabeledExample) -> Result<(f64, NetGrad)> {
        self.check_example(ex)?;
        let trace = self.trace(&ex.x);
        let z = trace.features();
        let logits = self.theta_c.tr_mul(z);
        let loss = loss_from_logits(&logits, ex.y);
        let dlogits = softmax_residual(&logits, ex.y);
        let theta_c = z * dlogits.transpose();
        let dz = &self.theta_c * &dlogits;
        let (_, layers) = self.backprop(&trace, dz, true);
        Ok((loss, NetGrad { layers, theta_c }))
    }

    /// `∇_x ℓ(θ; (x, y))`
    pub fn grad_input_loss(&self, ex: &LabeledExample) -> Result<DVector<f64>> {
        self.check_example(ex)?;
        let trace = self.trace(&ex.x);
        let dz = grad_z_loss(&self.theta_c, trace.features(), ex.y);
        Ok(self.backprop(&trace, dz, false).0)
    }

    /// Vector-Jacobian product `J_g(x)ᵀ u` of the feature map.
    pub fn features_vjp(&self, x: &[f64], u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        if u.len() != self.feature_dim() {
            return Err(Error::dim("feature cotangent", self.feature_dim(), u.len()));
        }
        let trace = self.trace(x);
        Ok(self.backprop(&trace, u.clone(), false).0)
    }

    /// Features and `J_g(x)ᵀ u(z)` from a single forward pass, where the
    /// cotangent may depend on the features.
    pub(crate) fn features_and_vjp<F>(&self, x: &[f64], cotangent: F) -> Result<(DVector<f64>, DVector<f64>)>
    where
        F: FnOnce(&DVector<f64>) -> DVector<f64>,
    {
        self.check_input(x)?;
        let trace = self.trace(x);
        let z = trace.features().clone();
        let u = cotangent(&z);
        let gx = self.backprop(&trace, u, false).0;
        Ok((z, gx))
    }

    /// Parameters flattened in model-file order: for each feature layer its
    /// weights row-major then its bias, then `θ_c` row-major.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            push_row_major(&mut out, &l.weights);
            out.extend(l.bias.iter());
        }
        push_row_major(&mut out, &self.theta_c);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim("flat parameter vector", self.num_params(), flat.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            off = read_row_major(flat, off, &mut l.weights);
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        read_row_major(flat, off, &mut self.theta_c);
        Ok(())
    }
}

impl NetGrad {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (DMatrix::zeros(l.weights.nrows(), l.weights.ncols()), DVector::zeros(l.bias.len())))
                .collect(),
            theta_c: DMatrix::zeros(net.theta_c.nrows(), net.theta_c.ncols()),
        }
    }

    pub fn add_scaled(&mut self, other: &NetGrad, scale: f64) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow * scale;
            b.axpy(scale, ob, 1.0);
        }
        self.theta_c += &other.theta_c * scale;
    }

    /// Same ordering as [`Network::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            push_row_major(&mut out, w);
            out.extend(b.iter());
        }
        push_row_major(&mut out, &self.theta_c);
        out
    }
}

fn push_row_major(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
}

fn read_row_major(flat: &[f64], mut off: usize, m: &mut DMatrix<f64>) -> usize {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            m[(r, c)] = flat[off];
            off += 1;
        }
    }
    off
}

/// `(∂W, ∂b)` for one dense layer.
type LayerGrad = (DMatrix<f64>, DVector<f64>);

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `p_j = exp(θ_{c,j}ᵀ z) / Σ_l exp(θ_{c,l}ᵀ z)`, evaluated with the
/// maximum logit subtracted.
///
/// Panics if `z.len() != theta_c.nrows()`.
pub fn softmax_probs(theta_c: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    assert_eq!(z.len(), theta_c.nrows(), "feature dim mismatch");
    softmax(&theta_c.tr_mul(z))
}

pub(crate) fn softmax(logits: &DVector<f64>) -> DVector<f64> {
    let max = logits.max();
    let e = logits.map(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

/// `-log p_y` as `(m - l_y) + ln(1 + Σ_{j≠k} exp(l_j - m))`, with `k` the
/// argmax and `m` its logit; accurate to relative precision when `p_y → 1`.
pub(crate) fn loss_from_logits(logits: &DVector<f64>, y: usize) -> f64 {
    let k = argmax(logits.as_slice());
    let m = logits[k];
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, &l)| (l - m).exp())
        .sum();
    (m - logits[y]) + rest.ln_1p()
}

/// `p - e_y`, with the `y` entry formed as `-Σ_{j≠y} p_j` so it keeps full
/// relative precision when `p_y → 1`.
pub(crate) fn softmax_residual(logits: &DVector<f64>, y: usize) -> DVector<f64> {
    let mut r = softmax(logits);
    r[y] = 0.0;
    r[y] = -r.sum();
    r
}

/// Softmax loss as a function of the features, `ℓ(θ; (z, y))`.
pub fn loss_z(theta_c: &DMatrix<f64>, z: &DVector<f64>, y: usize) -> f64 {
    assert_eq!(z.len(), theta_c.nrows(), "feature dim mismatch");
    loss_from_logits(&theta_c.tr_mul(z), y)
}

/// `∇_z ℓ = -θ_{c,y} + Σ_j p_j θ_{c,j}`
pub fn grad_z_loss(theta_c: &DMatrix<f64>, z: &DVector<f64>, y: usize) -> DVector<f64> {
    assert_eq!(z.len(), theta_c.nrows(), "feature dim mismatch");
    theta_c * softmax_residual(&theta_c.tr_mul(z), y)
}

/// `∇_zz ℓ = Θ diag(p) Θᵀ - (Θp)(Θp)ᵀ`. Does not depend on the label.
///
/// Evaluated as `Σ_j p_j d_j d_jᵀ - d̄ d̄ᵀ` with `d_j = θ_{c,j} - θ_{c,k}`
/// for the argmax class `k`, which avoids cancellation when `p_k → 1`.
pub fn hessian_z_loss(theta_c: &DMatrix<f64>, z: &DVector<f64>) -> DMatrix<f64> {
    assert_eq!(z.len(), theta_c.nrows(), "feature dim mismatch");
    let logits = theta_c.tr_mul(z);
    let p = softmax(&logits);
    let k = argmax(logits.as_slice());
    let mut d = theta_c.clone();
    for mut col in d.column_iter_mut() {
        col -= theta_c.column(k);
    }
    let mean = &d * &p;
    let mut scaled = d.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= p[j];
    }
    let mut h = &scaled * d.transpose();
    h.ger(-1.0, &mean, &mean, 1.0);
    // symmetrize away rounding
    let ht = h.transpose();
    (h + ht) * 0.5
}

/// `R = ‖θ_{c,y} - Σ_j p_j θ_{c,j}‖²`, the squared feature-gradient norm of
/// the softmax loss.
pub fn data_dependent_regularizer(theta_c: &DMatrix<f64>, z: &DVector<f64>, y: usize) -> f64 {
    grad_z_loss(theta_c, z, y).norm_squared()
}
