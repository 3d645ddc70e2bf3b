//! Minimal dense/convolutional network core with reverse-mode gradients,
//! factorized-Gaussian noisy linear layers and a dueling distributional head.
//!
//! The default architecture has five depth positions: three plain
//! convolutions, then a hidden and an output noisy-dense layer per dueling
//! stream. All math is f64; checkpoints round to f32 elsewhere.

mod optimizer;

pub use optimizer::{apply_gradients, AdamConfig, FreezeMask, OptimizerState};

use crate::hash::Fnv1a64;
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: input shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        layer: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("freeze mask names unknown layer {name:?} (network depth is {depth})")]
    UnknownMaskLayer { name: String, depth: usize },
    #[error("gradient set or cache does not match this network ({detail})")]
    Mismatch { detail: String },
}

/// Activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// The three supported layer kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Dense {
        out_units: usize,
    },
    NoisyDense {
        out_units: usize,
        sigma0: f64,
    },
}

#[derive(Debug, Clone)]
pub enum LayerParams {
    /// Conv2d weight [out, kh, kw, in] or Dense weight [in, out], plus bias [out].
    Affine { w: Tensor, b: Tensor },
    /// NoisyDense mean/scale pairs; weights [in, out], biases [out].
    Noisy {
        mu_w: Tensor,
        sigma_w: Tensor,
        mu_b: Tensor,
        sigma_b: Tensor,
    },
}

impl LayerParams {
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            LayerParams::Affine { w, b } => vec![("w", w), ("b", b)],
            LayerParams::Noisy {
                mu_w,
                sigma_w,
                mu_b,
                sigma_b,
            } => vec![
                ("mu_w", mu_w),
                ("sigma_w", sigma_w),
                ("mu_b", mu_b),
                ("sigma_b", sigma_b),
            ],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            LayerParams::Affine { w, b } => vec![("w", w), ("b", b)],
            LayerParams::Noisy {
                mu_w,
                sigma_w,
                mu_b,
                sigma_b,
            } => vec![
                ("mu_w", mu_w),
                ("sigma_w", sigma_w),
                ("mu_b", mu_b),
                ("sigma_b", sigma_b),
            ],
        }
    }
}

/// One layer: an affine map (conv or dense, possibly noisy) plus activation.
#[derive(Debug, Clone)]
pub struct Layer {
    /// Full name, e.g. "layer1/conv" or "layer4/value".
    pub name: String,
    /// Depth position 1..=l. Both dueling streams share positions 4 and 5.
    pub depth: usize,
    pub kind: LayerKind,
    pub activation: Activation,
    pub params: LayerParams,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

/// Transformed factorized-noise factors for one noisy layer.
#[derive(Debug, Clone)]
pub struct NoiseFactors {
    pub f_in: Vec<f64>,
    pub f_out: Vec<f64>,
}

/// One sample of factorized Gaussian noise, one entry per noisy layer in
/// network order. Empty when the network has no noisy layers.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    pub factors: Vec<NoiseFactors>,
}

impl NoiseDraw {
    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

/// The noise transform f(x) = sign(x) * sqrt(|x|).
pub fn noise_transform(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

/// Effective weight/bias for one noisy layer under a specific draw.
#[derive(Debug, Clone)]
pub struct NoisyEffective {
    pub w: Tensor,
    pub b: Tensor,
    pub f_in: Vec<f64>,
    pub f_out: Vec<f64>,
}

/// Materialized per-layer effective parameters for one noise draw. `None`
/// entries use the layer's raw parameters (plain layers, or zero noise).
#[derive(Debug, Clone)]
pub struct EffectiveParams {
    eff: Vec<Option<NoisyEffective>>,
}

impl EffectiveParams {
    fn layer(&self, idx: usize) -> Option<&NoisyEffective> {
        self.eff.get(idx).and_then(|e| e.as_ref())
    }
}

/// Per-parameter gradients for one layer, mirroring `LayerParams` shapes.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub tensors: Vec<Tensor>,
}

/// Gradients for every parameter tensor of a network, in network layer order.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub layers: Vec<LayerGrads>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        let layers = net
            .layers()
            .map(|l| LayerGrads {
                tensors: l
                    .params
                    .tensors()
                    .into_iter()
                    .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
                    .collect(),
            })
            .collect();
        Self { layers }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for t in &mut l.tensors {
                for v in t.data_mut() {
                    *v *= factor;
                }
            }
        }
    }
}

/// Activations cached by a forward pass, sufficient for one backward pass.
#[derive(Debug)]
pub struct ForwardCache {
    /// Per layer in network order: (input, pre-activation output).
    steps: Vec<(Tensor, Tensor)>,
}

fn fan_in(kind: &LayerKind, in_shape: &[usize]) -> usize {
    match kind {
        LayerKind::Conv2d { kernel, .. } => kernel * kernel * in_shape[2],
        LayerKind::Dense { .. } | LayerKind::NoisyDense { .. } => in_shape.iter().product(),
    }
}

impl Layer {
    /// Builds a layer with seeded initialization: uniform(-1/sqrt(fan_in),
    /// +1/sqrt(fan_in)) for weights and biases (mu for noisy layers), and
    /// sigma = sigma0/sqrt(fan_in) for noisy scales.
    pub fn new<R: Rng>(
        name: impl Into<String>,
        depth: usize,
        kind: LayerKind,
        activation: Activation,
        in_shape: Vec<usize>,
        rng: &mut R,
    ) -> Self {
        let fan = fan_in(&kind, &in_shape);
        let bound = 1.0 / (fan as f64).sqrt();
        let (params, out_shape) = match &kind {
            LayerKind::Conv2d {
                out_channels,
                kernel,
                stride,
            } => {
                assert!(in_shape.len() == 3, "conv input must be [h, w, c]");
                let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
                assert!(h >= *kernel && w >= *kernel, "kernel larger than input");
                let ho = (h - kernel) / stride + 1;
                let wo = (w - kernel) / stride + 1;
                let weight =
                    Tensor::uniform(vec![*out_channels, *kernel, *kernel, c], bound, rng);
                let bias = Tensor::uniform(vec![*out_channels], bound, rng);
                (
                    LayerParams::Affine { w: weight, b: bias },
                    vec![ho, wo, *out_channels],
                )
            }
            LayerKind::Dense { out_units } => {
                let weight = Tensor::uniform(vec![fan, *out_units], bound, rng);
                let bias = Tensor::uniform(vec![*out_units], bound, rng);
                (LayerParams::Affine { w: weight, b: bias }, vec![*out_units])
            }
            LayerKind::NoisyDense { out_units, sigma0 } => {
                let mu_w = Tensor::uniform(vec![fan, *out_units], bound, rng);
                let mu_b = Tensor::uniform(vec![*out_units], bound, rng);
                let sigma = sigma0 / (fan as f64).sqrt();
                let sigma_w = Tensor::full(vec![fan, *out_units], sigma);
                let sigma_b = Tensor::full(vec![*out_units], sigma);
                (
                    LayerParams::Noisy {
                        mu_w,
                        sigma_w,
                        mu_b,
                        sigma_b,
                    },
                    vec![*out_units],
                )
            }
        };
        Self {
            name: name.into(),
            depth,
            kind,
            activation,
            params,
            in_shape,
            out_shape,
        }
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn is_noisy(&self) -> bool {
        matches!(self.kind, LayerKind::NoisyDense { .. })
    }

    fn weight_bias<'a>(&'a self, eff: Option<&'a NoisyEffective>) -> (&'a Tensor, &'a Tensor) {
        match (&self.params, eff) {
            (LayerParams::Affine { w, b }, _) => (w, b),
            (LayerParams::Noisy { .. }, Some(e)) => (&e.w, &e.b),
            (LayerParams::Noisy { mu_w, mu_b, .. }, None) => (mu_w, mu_b),
        }
    }

    /// Forward pass. Returns (post-activation, pre-activation).
    pub fn forward(
        &self,
        eff: Option<&NoisyEffective>,
        x: &Tensor,
    ) -> Result<(Tensor, Tensor), NnError> {
        if x.shape() != self.in_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                layer: self.name.clone(),
                expected: self.in_shape.clone(),
                found: x.shape().to_vec(),
            });
        }
        let (w, b) = self.weight_bias(eff);
        let pre = match &self.kind {
            LayerKind::Conv2d { kernel, stride, .. } => {
                conv2d_forward(x, w, b, *kernel, *stride, &self.in_shape, &self.out_shape)
            }
            _ => dense_forward(x, w, b),
        };
        let post = match self.activation {
            Activation::Identity => pre.clone(),
            Activation::Relu => {
                let mut p = pre.clone();
                for v in p.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                p
            }
        };
        Ok((post, pre))
    }

    /// Materializes this layer's effective weights for one set of noise
    /// factors. `None` for plain layers or a zero-noise pass.
    pub fn effective(&self, factors: Option<&NoiseFactors>) -> Option<NoisyEffective> {
        let f = factors?;
        let LayerParams::Noisy {
            mu_w,
            sigma_w,
            mu_b,
            sigma_b,
        } = &self.params
        else {
            return None;
        };
        let n_in = f.f_in.len();
        let n_out = f.f_out.len();
        let mut w = mu_w.data().to_vec();
        let sw = sigma_w.data();
        for v in 0..n_in {
            let fv = f.f_in[v];
            let row = &mut w[v * n_out..(v + 1) * n_out];
            let srow = &sw[v * n_out..(v + 1) * n_out];
            for u in 0..n_out {
                row[u] += srow[u] * fv * f.f_out[u];
            }
        }
        let mut b = mu_b.data().to_vec();
        for ((bu, &s), &fo) in b.iter_mut().zip(sigma_b.data()).zip(&f.f_out) {
            *bu += s * fo;
        }
        Some(NoisyEffective {
            w: Tensor::new(vec![n_in, n_out], w),
            b: Tensor::new(vec![n_out], b),
            f_in: f.f_in.clone(),
            f_out: f.f_out.clone(),
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the layer input.
    pub fn backward_into(
        &self,
        eff: Option<&NoisyEffective>,
        x: &Tensor,
        pre: &Tensor,
        d_post: &Tensor,
        grads: &mut LayerGrads,
    ) -> Tensor {
        let mut d_pre = d_post.clone();
        if self.activation == Activation::Relu {
            for (g, z) in d_pre.data_mut().iter_mut().zip(pre.iter()) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let (w, _) = self.weight_bias(eff);
        match &self.kind {
            LayerKind::Conv2d { kernel, stride, .. } => {
                let mut dw = Tensor::zeros(w.shape().to_vec());
                let mut db = Tensor::zeros(vec![w.shape()[0]]);
                let dx = conv2d_backward(
                    x,
                    w,
                    &d_pre,
                    *kernel,
                    *stride,
                    &self.in_shape,
                    &self.out_shape,
                    &mut dw,
                    &mut db,
                );
                accumulate(&mut grads.tensors[0], &dw);
                accumulate(&mut grads.tensors[1], &db);
                dx
            }
            LayerKind::Dense { .. } => {
                let (dw, db, dx) = dense_backward(x, w, &d_pre);
                accumulate(&mut grads.tensors[0], &dw);
                accumulate(&mut grads.tensors[1], &db);
                dx
            }
            LayerKind::NoisyDense { .. } => {
                let (dw, db, dx) = dense_backward(x, w, &d_pre);
                // d/d mu mirrors the effective-weight gradient; d/d sigma is
                // the same gradient scaled by the noise factors (zero factors
                // when no noise was drawn).
                if let Some(e) = eff {
                    let n_in = x.len();
                    let n_out = db.len();
                    {
                        let dsig = grads.tensors[1].data_mut();
                        let dwd = dw.data();
                        for v in 0..n_in {
                            let fv = e.f_in[v];
                            let row = &dwd[v * n_out..(v + 1) * n_out];
                            let drow = &mut dsig[v * n_out..(v + 1) * n_out];
                            for (du, (&ru, &fo)) in drow.iter_mut().zip(row.iter().zip(&e.f_out))
                            {
                                *du += ru * fv * fo;
                            }
                        }
                    }
                    {
                        let dsb = grads.tensors[3].data_mut();
                        for ((du, &dbu), &fo) in dsb.iter_mut().zip(db.data()).zip(&e.f_out) {
                            *du += dbu * fo;
                        }
                    }
                }
                accumulate(&mut grads.tensors[0], &dw);
                accumulate(&mut grads.tensors[2], &db);
                dx
            }
        }
    }
}

fn accumulate(into: &mut Tensor, from: &Tensor) {
    for (a, b) in into.data_mut().iter_mut().zip(from.iter()) {
        *a += b;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let n_in = x.len();
    let n_out = b.len();
    let mut out = b.data().to_vec();
    let wd = w.data();
    for v in 0..n_in {
        let xv = x.data()[v];
        if xv == 0.0 {
            continue;
        }
        let row = &wd[v * n_out..(v + 1) * n_out];
        for (o, r) in out.iter_mut().zip(row.iter()) {
            *o += xv * r;
        }
    }
    Tensor::new(vec![n_out], out)
}

fn dense_backward(x: &Tensor, w: &Tensor, d_pre: &Tensor) -> (Tensor, Tensor, Tensor) {
    let n_in = x.len();
    let n_out = d_pre.len();
    let mut dw = vec![0.0; n_in * n_out];
    let mut dx = vec![0.0; n_in];
    let wd = w.data();
    let dz = d_pre.data();
    for v in 0..n_in {
        let xv = x.data()[v];
        let wrow = &wd[v * n_out..(v + 1) * n_out];
        let drow = &mut dw[v * n_out..(v + 1) * n_out];
        for u in 0..n_out {
            drow[u] = xv * dz[u];
        }
        dx[v] = dot(wrow, dz);
    }
    (
        Tensor::new(vec![n_in, n_out], dw),
        Tensor::new(vec![n_out], dz.to_vec()),
        Tensor::new(vec![n_in], dx),
    )
}

#[allow(clippy::too_many_arguments)]
fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    kernel: usize,
    stride: usize,
    in_shape: &[usize],
    out_shape: &[usize],
) -> Tensor {
    let (_h, wdt, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let (ho, wo, co) = (out_shape[0], out_shape[1], out_shape[2]);
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let row_len = kernel * c;
    let mut out = vec![0.0; ho * wo * co];
    for oy in 0..ho {
        for ox in 0..wo {
            let out_row = &mut out[(oy * wo + ox) * co..(oy * wo + ox + 1) * co];
            out_row.copy_from_slice(bd);
            for i in 0..kernel {
                let x_start = ((oy * stride + i) * wdt + ox * stride) * c;
                let x_row = &xd[x_start..x_start + row_len];
                for (o, acc) in out_row.iter_mut().enumerate() {
                    let w_start = (o * kernel + i) * row_len;
                    *acc += dot(x_row, &wd[w_start..w_start + row_len]);
                }
            }
        }
    }
    Tensor::new(out_shape.to_vec(), out)
}

#[allow(clippy::too_many_arguments)]
fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    d_pre: &Tensor,
    kernel: usize,
    stride: usize,
    in_shape: &[usize],
    out_shape: &[usize],
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Tensor {
    let (_h, wdt, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let (ho, wo, co) = (out_shape[0], out_shape[1], out_shape[2]);
    let xd = x.data();
    let wd = w.data();
    let dzd = d_pre.data();
    let row_len = kernel * c;
    let mut dx = vec![0.0; xd.len()];
    let dwd = dw.data_mut();
    let dbd = db.data_mut();
    for oy in 0..ho {
        for ox in 0..wo {
            let dz_row = &dzd[(oy * wo + ox) * co..(oy * wo + ox + 1) * co];
            for (o, &g) in dz_row.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                dbd[o] += g;
                for i in 0..kernel {
                    let x_start = ((oy * stride + i) * wdt + ox * stride) * c;
                    let w_start = (o * kernel + i) * row_len;
                    let x_row = &xd[x_start..x_start + row_len];
                    let w_row = &wd[w_start..w_start + row_len];
                    let dw_row = &mut dwd[w_start..w_start + row_len];
                    let dx_row = &mut dx[x_start..x_start + row_len];
                    for k in 0..row_len {
                        dw_row[k] += g * x_row[k];
                        dx_row[k] += g * w_row[k];
                    }
                }
            }
        }
    }
    Tensor::new(in_shape.to_vec(), dx)
}

/// Dueling combination: logits[a][i] = v[i] + adv[a][i] - mean_a'(adv[a'][i]).
pub fn dueling_aggregate(v: &Tensor, adv: &Tensor) -> Tensor {
    let n_atoms = v.len();
    let n_actions = adv.len() / n_atoms;
    let mut mean = vec![0.0; n_atoms];
    for a in 0..n_actions {
        let row = &adv.data()[a * n_atoms..(a + 1) * n_atoms];
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n_actions as f64;
    }
    let mut out = vec![0.0; n_actions * n_atoms];
    for a in 0..n_actions {
        for i in 0..n_atoms {
            out[a * n_atoms + i] = v.data()[i] + adv.data()[a * n_atoms + i] - mean[i];
        }
    }
    Tensor::new(vec![n_actions, n_atoms], out)
}

fn dueling_aggregate_backward(d_logits: &Tensor) -> (Tensor, Tensor) {
    let n_actions = d_logits.shape()[0];
    let n_atoms = d_logits.shape()[1];
    let g = d_logits.data();
    let mut col_sum = vec![0.0; n_atoms];
    for a in 0..n_actions {
        for i in 0..n_atoms {
            col_sum[i] += g[a * n_atoms + i];
        }
    }
    let dv = Tensor::new(vec![n_atoms], col_sum.clone());
    let mut da = vec![0.0; n_actions * n_atoms];
    for a in 0..n_actions {
        for i in 0..n_atoms {
            da[a * n_atoms + i] = g[a * n_atoms + i] - col_sum[i] / n_actions as f64;
        }
    }
    (dv, Tensor::new(vec![n_actions * n_atoms], da))
}

/// A dueling distributional Q-network: a shared convolutional trunk plus a
/// value stream and an advantage stream, combined into per-action atom logits.
#[derive(Debug, Clone)]
pub struct Network {
    trunk: Vec<Layer>,
    value: Vec<Layer>,
    advantage: Vec<Layer>,
    input_shape: Vec<usize>,
    n_actions: usize,
    n_atoms: usize,
    depth: usize,
}

/// Input frame stack shape for the default architecture: 10x10 frames, 4-deep history.
pub const INPUT_SHAPE: [usize; 3] = [10, 10, 4];

impl Network {
    /// The default desk-scale architecture: conv(8,3x3,s1) -> conv(16,3x3,s2)
    /// -> conv(16,3x3,s1) -> noisy 128 hidden per stream -> noisy output per
    /// stream. Five depth positions in total.
    pub fn new_default(n_actions: usize, n_atoms: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build_default(n_actions, n_atoms, &mut rng)
    }

    fn build_default<R: Rng>(n_actions: usize, n_atoms: usize, rng: &mut R) -> Self {
        let input_shape = INPUT_SHAPE.to_vec();
        let c1 = Layer::new(
            "layer1/conv",
            1,
            LayerKind::Conv2d {
                out_channels: 8,
                kernel: 3,
                stride: 1,
            },
            Activation::Relu,
            input_shape.clone(),
            rng,
        );
        let c2 = Layer::new(
            "layer2/conv",
            2,
            LayerKind::Conv2d {
                out_channels: 16,
                kernel: 3,
                stride: 2,
            },
            Activation::Relu,
            c1.out_shape().to_vec(),
            rng,
        );
        let c3 = Layer::new(
            "layer3/conv",
            3,
            LayerKind::Conv2d {
                out_channels: 16,
                kernel: 3,
                stride: 1,
            },
            Activation::Relu,
            c2.out_shape().to_vec(),
            rng,
        );
        let feat = vec![c3.out_shape().iter().product::<usize>()];
        let sigma0 = 0.5;
        let v_hidden = Layer::new(
            "layer4/value",
            4,
            LayerKind::NoisyDense {
                out_units: 128,
                sigma0,
            },
            Activation::Relu,
            feat.clone(),
            rng,
        );
        let v_out = Layer::new(
            "layer5/value",
            5,
            LayerKind::NoisyDense {
                out_units: n_atoms,
                sigma0,
            },
            Activation::Identity,
            vec![128],
            rng,
        );
        let a_hidden = Layer::new(
            "layer4/advantage",
            4,
            LayerKind::NoisyDense {
                out_units: 128,
                sigma0,
            },
            Activation::Relu,
            feat,
            rng,
        );
        let a_out = Layer::new(
            "layer5/advantage",
            5,
            LayerKind::NoisyDense {
                out_units: n_actions * n_atoms,
                sigma0,
            },
            Activation::Identity,
            vec![128],
            rng,
        );
        Self {
            trunk: vec![c1, c2, c3],
            value: vec![v_hidden, v_out],
            advantage: vec![a_hidden, a_out],
            input_shape,
            n_actions,
            n_atoms,
            depth: 5,
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// Number of depth positions (l).
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Layers in canonical order: trunk, value stream, advantage stream.
    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.trunk
            .iter()
            .chain(self.value.iter())
            .chain(self.advantage.iter())
    }

    pub(crate) fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk
            .iter_mut()
            .chain(self.value.iter_mut())
            .chain(self.advantage.iter_mut())
    }

    pub fn layer_count(&self) -> usize {
        self.trunk.len() + self.value.len() + self.advantage.len()
    }

    /// Named parameter tensors, "layer{d}/{stream}/{param}", in canonical
    /// layer order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for layer in self.layers() {
            for (pname, t) in layer.params.tensors() {
                out.push((format!("{}/{}", layer.name, pname), t));
            }
        }
        out
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.named_params()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Overwrites one named parameter tensor. The replacement must match the
    /// existing shape.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<(), NnError> {
        for layer in self.layers_mut() {
            for (pname, t) in layer.params.tensors_mut() {
                let full = format!("{}/{}", layer.name, pname);
                if full == name {
                    if t.shape() != value.shape() {
                        return Err(NnError::Mismatch {
                            detail: format!(
                                "param {} has shape {:?}, got {:?}",
                                name,
                                t.shape(),
                                value.shape()
                            ),
                        });
                    }
                    *t = value;
                    return Ok(());
                }
            }
        }
        Err(NnError::Mismatch {
            detail: format!("unknown parameter {}", name),
        })
    }

    /// Copies every parameter from `src` (same architecture) into self.
    pub fn copy_params_from(&mut self, src: &Network) {
        debug_assert_eq!(self.architecture_hash(), src.architecture_hash());
        let srcs: Vec<Tensor> = src
            .layers()
            .flat_map(|l| l.params.tensors().into_iter().map(|(_, t)| t.clone()))
            .collect();
        let mut idx = 0;
        for layer in self.layers_mut() {
            for (_, t) in layer.params.tensors_mut() {
                *t = srcs[idx].clone();
                idx += 1;
            }
        }
    }

    /// Rounds every parameter through f32, the checkpoint precision.
    pub fn round_params_to_f32(&mut self) {
        for layer in self.layers_mut() {
            for (_, t) in layer.params.tensors_mut() {
                t.round_to_f32();
            }
        }
    }

    /// Digest of layer kinds and parameter shapes; networks with equal hashes
    /// accept each other's parameters.
    pub fn architecture_hash(&self) -> u64 {
        let mut h = Fnv1a64::new();
        h.update(format!("in{:?}|a{}|z{}", self.input_shape, self.n_actions, self.n_atoms).as_bytes());
        for layer in self.layers() {
            h.update(layer.name.as_bytes());
            h.update(format!("{:?}", layer.kind).as_bytes());
            for (pname, t) in layer.params.tensors() {
                h.update(pname.as_bytes());
                h.update(format!("{:?}", t.shape()).as_bytes());
            }
        }
        h.finish()
    }

    /// Draws one factorized noise sample for every noisy layer.
    pub fn sample_noise<R: Rng>(&self, rng: &mut R) -> NoiseDraw {
        let mut factors = Vec::new();
        for layer in self.layers() {
            if !layer.is_noisy() {
                continue;
            }
            let n_in: usize = layer.in_shape().iter().product();
            let n_out = layer.out_shape()[0];
            let f_in = (0..n_in)
                .map(|_| noise_transform(rng.sample(StandardNormal)))
                .collect();
            let f_out = (0..n_out)
                .map(|_| noise_transform(rng.sample(StandardNormal)))
                .collect();
            factors.push(NoiseFactors { f_in, f_out });
        }
        NoiseDraw { factors }
    }

    /// Materializes effective weights for a draw. `None` gives deterministic
    /// (zero-noise) parameters.
    pub fn materialize(&self, draw: Option<&NoiseDraw>) -> EffectiveParams {
        let mut eff = Vec::with_capacity(self.layer_count());
        let mut noisy_idx = 0;
        for layer in self.layers() {
            let factors = if layer.is_noisy() {
                let f = draw.map(|d| &d.factors[noisy_idx]);
                if f.is_some() {
                    noisy_idx += 1;
                }
                f
            } else {
                None
            };
            eff.push(layer.effective(factors));
        }
        EffectiveParams { eff }
    }

    /// Full forward pass to per-action atom logits [n_actions, n_atoms].
    pub fn forward(
        &self,
        eff: &EffectiveParams,
        input: &Tensor,
    ) -> Result<(Tensor, ForwardCache), NnError> {
        let mut steps = Vec::with_capacity(self.layer_count());
        let mut cur = input.clone();
        let mut idx = 0;
        for layer in &self.trunk {
            let (post, pre) = layer.forward(eff.layer(idx), &cur)?;
            steps.push((cur, pre));
            cur = post;
            idx += 1;
        }
        let feat = cur.reshape(vec![self
            .trunk
            .last()
            .map(|l| l.out_shape().iter().product())
            .unwrap_or_else(|| input.len())]);

        let mut v = feat.clone();
        for layer in &self.value {
            let (post, pre) = layer.forward(eff.layer(idx), &v)?;
            steps.push((v, pre));
            v = post;
            idx += 1;
        }
        let mut a = feat;
        for layer in &self.advantage {
            let (post, pre) = layer.forward(eff.layer(idx), &a)?;
            steps.push((a, pre));
            a = post;
            idx += 1;
        }
        let logits = dueling_aggregate(&v, &a);
        Ok((logits, ForwardCache { steps }))
    }

    /// Convenience single-shot forward: materializes `noise` and runs.
    pub fn forward_pass(
        &self,
        input: &Tensor,
        noise: Option<&NoiseDraw>,
    ) -> Result<(Tensor, ForwardCache), NnError> {
        let eff = self.materialize(noise);
        self.forward(&eff, input)
    }

    /// Reverse pass from d(loss)/d(logits); accumulates into `grads`.
    pub fn backward_into(
        &self,
        eff: &EffectiveParams,
        cache: &ForwardCache,
        d_logits: &Tensor,
        grads: &mut GradientSet,
    ) -> Result<(), NnError> {
        if cache.steps.len() != self.layer_count() || grads.layers.len() != self.layer_count() {
            return Err(NnError::Mismatch {
                detail: format!(
                    "cache has {} steps, gradient set {} layers, network {}",
                    cache.steps.len(),
                    grads.layers.len(),
                    self.layer_count()
                ),
            });
        }
        if d_logits.shape() != [self.n_actions, self.n_atoms] {
            return Err(NnError::Mismatch {
                detail: format!(
                    "output gradient shape {:?}, expected [{}, {}]",
                    d_logits.shape(),
                    self.n_actions,
                    self.n_atoms
                ),
            });
        }
        let (dv, da) = dueling_aggregate_backward(d_logits);

        let t = self.trunk.len();
        let nv = self.value.len();
        let na = self.advantage.len();

        let mut d = dv;
        for (off, layer) in self.value.iter().enumerate().rev() {
            let idx = t + off;
            let (x, pre) = &cache.steps[idx];
            d = layer.backward_into(eff.layer(idx), x, pre, &d, &mut grads.layers[idx]);
        }
        let d_feat_v = d;

        let mut d = da;
        for (off, layer) in self.advantage.iter().enumerate().rev() {
            let idx = t + nv + off;
            let (x, pre) = &cache.steps[idx];
            d = layer.backward_into(eff.layer(idx), x, pre, &d, &mut grads.layers[idx]);
        }
        let mut d_feat = d;
        for (g, v) in d_feat.data_mut().iter_mut().zip(d_feat_v.iter()) {
            *g += v;
        }
        debug_assert_eq!(t + nv + na, self.layer_count());

        let mut d = match self.trunk.last() {
            Some(l) => d_feat.reshape(l.out_shape().to_vec()),
            None => d_feat,
        };
        for (idx, layer) in self.trunk.iter().enumerate().rev() {
            let (x, pre) = &cache.steps[idx];
            d = layer.backward_into(eff.layer(idx), x, pre, &d, &mut grads.layers[idx]);
        }
        Ok(())
    }

    /// Single-shot backward returning a fresh gradient set.
    pub fn backward(
        &self,
        eff: &EffectiveParams,
        cache: &ForwardCache,
        d_logits: &Tensor,
    ) -> Result<GradientSet, NnError> {
        let mut grads = GradientSet::zeros_like(self);
        self.backward_into(eff, cache, d_logits, &mut grads)?;
        Ok(grads)
    }

    /// Depth-position names "layer1".."layer{l}" accepted by freeze masks.
    pub fn depth_names(&self) -> Vec<String> {
        (1..=self.depth).map(|d| format!("layer{}", d)).collect()
    }
}
