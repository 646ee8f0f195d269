//! Character-level convolutional classifier.
//!
//! Six valid (unpadded, stride 1) convolutions with ReLU, non-overlapping max
//! pooling after layers 1, 2 and 6, then three fully connected layers with
//! inverted dropout after each hidden one and a sigmoid output read as
//! P(author signals male).
//!
//! Activations are row-major `positions x channels`, so the receptive field of
//! output position `p` is the contiguous slice `x[p*C .. (p+k)*C]` and im2col
//! is a strided view with overlapping rows. Conv weights are `(k*C_in) x F`
//! with row index `offset * C_in + channel`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::real::{gemm, Real, View};
use super::vocab::{QuantizedText, DEFAULT_WINDOW, VOCAB_SIZE};
use crate::error::{Error, Result};

pub const CONV_LAYERS: usize = 6;
pub const POOL_AFTER: [bool; CONV_LAYERS] = [true, true, false, false, false, true];
pub const MODEL_VERSION: u32 = 1;
/// Index of the output layer's weights in `params()`. They start at zero so
/// the initial logit is exactly 0 for every input.
pub const OUTPUT_WEIGHT: usize = 16;

/// Lower clamp on the sigmoid output before the loss; the upper is `1 - P_EPS`.
pub const P_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub window: usize,
    pub kernel_widths: [usize; CONV_LAYERS],
    pub pool_width: usize,
    pub filters: usize,
    pub hidden: usize,
    /// Dropout keep probability for both dropout layers.
    pub keep_prob: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Quantize back-to-front instead of in reading order.
    pub reverse_text: bool,
    /// Minibatch gradients with a larger global L2 norm are rescaled to it;
    /// 0 disables clipping.
    #[serde(default)]
    pub clip_norm: f64,
}

impl Default for HyperParams {
    /// Desk-scale widths; everything else at the architecture defaults.
    fn default() -> Self {
        HyperParams {
            window: DEFAULT_WINDOW,
            kernel_widths: [7, 7, 3, 3, 3, 3],
            pool_width: 3,
            filters: 64,
            hidden: 128,
            keep_prob: 0.5,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
            epochs: 5,
            seed: 1,
            reverse_text: false,
            clip_norm: 1.0,
        }
    }
}

impl HyperParams {
    /// Full-size widths (256 filters, 1024 hidden, batch 512).
    pub fn full_size() -> Self {
        HyperParams {
            filters: 256,
            hidden: 1024,
            batch_size: 512,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window", self.window),
            ("pool_width", self.pool_width),
            ("filters", self.filters),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("hyperparameter {name} must be positive")));
            }
        }
        if self.kernel_widths.contains(&0) {
            return Err(Error::Config("kernel widths must be positive".into()));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::Config(format!("keep_prob {} outside (0, 1]", self.keep_prob)));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("learning rate must be > 0 and momentum in [0, 1)".into()));
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::Config(format!("clip_norm {} must be finite and >= 0", self.clip_norm)));
        }
        ShapePlan::new(self).map(|_| ())
    }
}

/// Sequence lengths through the convolution stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapePlan {
    pub input_len: [usize; CONV_LAYERS],
    pub conv_len: [usize; CONV_LAYERS],
    pub output_len: [usize; CONV_LAYERS],
    /// Width of the flattened features entering the first dense layer.
    pub flat: usize,
}

impl ShapePlan {
    pub fn new(hp: &HyperParams) -> Result<Self> {
        let mut input_len = [0; CONV_LAYERS];
        let mut conv_len = [0; CONV_LAYERS];
        let mut output_len = [0; CONV_LAYERS];
        let mut len = hp.window;
        for l in 0..CONV_LAYERS {
            let k = hp.kernel_widths[l];
            if len < k {
                return Err(Error::Config(format!(
                    "conv layer {} sees length {len} < kernel {k}; window {} is too short",
                    l + 1,
                    hp.window
                )));
            }
            input_len[l] = len;
            conv_len[l] = len - k + 1;
            len = if POOL_AFTER[l] { conv_len[l] / hp.pool_width } else { conv_len[l] };
            if len == 0 {
                return Err(Error::Config(format!(
                    "pooling after conv layer {} leaves no positions",
                    l + 1
                )));
            }
            output_len[l] = len;
        }
        Ok(ShapePlan {
            input_len,
            conv_len,
            output_len,
            flat: len * hp.filters,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![F::ZERO; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = F::ZERO);
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| G::from_f64(v.to_f64())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel<F> {
    pub version: u32,
    pub hp: HyperParams,
    plan: ShapePlan,
    /// conv1.w, conv1.b, ..., conv6.w, conv6.b, fc1.w, fc1.b, fc2.w, fc2.b, fc3.w, fc3.b
    params: Vec<Tensor<F>>,
}

pub const PARAM_NAMES: [&str; 18] = [
    "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "conv3.weight", "conv3.bias",
    "conv4.weight", "conv4.bias", "conv5.weight", "conv5.bias", "conv6.weight", "conv6.bias",
    "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "fc3.weight", "fc3.bias",
];

const FC: usize = 2 * CONV_LAYERS;

/// Expected parameter shapes for `hp`, in storage order.
pub fn param_shapes(hp: &HyperParams) -> Result<Vec<Vec<usize>>> {
    let plan = ShapePlan::new(hp)?;
    let f = hp.filters;
    let mut shapes = Vec::with_capacity(PARAM_NAMES.len());
    for l in 0..CONV_LAYERS {
        let c_in = if l == 0 { VOCAB_SIZE } else { f };
        shapes.push(vec![hp.kernel_widths[l] * c_in, f]);
        shapes.push(vec![f]);
    }
    let h = hp.hidden;
    shapes.extend([vec![plan.flat, h], vec![h], vec![h, h], vec![h], vec![h, 1], vec![1]]);
    Ok(shapes)
}

/// Intermediate values of one forward pass, kept for backprop.
struct Trace<F> {
    /// Post-ReLU conv outputs, `conv_len x F`.
    act: Vec<Vec<F>>,
    /// Pooled outputs and argmax positions for pooled layers.
    pooled: Vec<Option<(Vec<F>, Vec<u32>)>>,
    h1: Vec<F>,
    d1: Vec<F>,
    m1: Option<Vec<F>>,
    h2: Vec<F>,
    d2: Vec<F>,
    m2: Option<Vec<F>>,
    logit: f64,
}

impl<F> Trace<F> {
    fn layer_output(&self, l: usize) -> &[F] {
        match &self.pooled[l] {
            Some((p, _)) => p,
            None => &self.act[l],
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu_in_place<F: Real>(v: &mut [F]) {
    for x in v {
        if *x < F::ZERO {
            *x = F::ZERO;
        }
    }
}

fn dropout_mask<F: Real, R: Rng>(n: usize, keep: f64, rng: &mut R) -> Vec<F> {
    let scale = F::from_f64(1.0 / keep);
    (0..n)
        .map(|_| if rng.random::<f64>() < keep { scale } else { F::ZERO })
        .collect()
}

impl<F: Real> CnnModel<F> {
    /// Zero biases, weights uniform in `±sqrt(6 / fan_in)` drawn from `hp.seed`.
    /// The first layer's fan-in is its kernel width: one channel per column is hot.
    pub fn new(hp: HyperParams) -> Result<Self> {
        hp.validate()?;
        let plan = ShapePlan::new(&hp)?;
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let shapes = param_shapes(&hp)?;
        let params = shapes
            .into_iter()
            .enumerate()
            .map(|(i, shape)| {
                let mut t = Tensor::zeros(shape);
                if i % 2 == 0 {
                    let fan_in = if i == 0 { hp.kernel_widths[0] } else { t.shape[0] };
                    let bound = if i == OUTPUT_WEIGHT { 0.0 } else { (6.0 / fan_in as f64).sqrt() };
                    for v in &mut t.data {
                        let u: f64 = rng.random_range(-1.0..1.0);
                        *v = F::from_f64(u * bound);
                    }
                }
                t
            })
            .collect();
        Ok(CnnModel {
            version: MODEL_VERSION,
            hp,
            plan,
            params,
        })
    }

    /// Assembles a model from stored tensors, checking every shape.
    pub fn from_params(hp: HyperParams, params: Vec<Tensor<F>>) -> Result<Self> {
        hp.validate()?;
        let plan = ShapePlan::new(&hp)?;
        let shapes = param_shapes(&hp)?;
        if shapes.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((want, got), name) in shapes.iter().zip(&params).zip(PARAM_NAMES) {
            if want != &got.shape || got.data.len() != want.iter().product::<usize>() {
                return Err(Error::Config(format!(
                    "{name}: shape {:?} does not match architecture {want:?}",
                    got.shape
                )));
            }
        }
        Ok(CnnModel {
            version: MODEL_VERSION,
            hp,
            plan,
            params,
        })
    }

    pub fn plan(&self) -> &ShapePlan {
        &self.plan
    }

    pub fn params(&self) -> &[Tensor<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.params
    }

    pub fn zero_grads(&self) -> Vec<Tensor<F>> {
        self.params.iter().map(|t| Tensor::zeros(t.shape.clone())).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<G: Real>(&self) -> CnnModel<G> {
        CnnModel {
            version: self.version,
            hp: self.hp.clone(),
            plan: self.plan,
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    fn check_input(&self, input: &QuantizedText) -> Result<()> {
        if input.window() != self.hp.window {
            return Err(Error::Config(format!(
                "input window {} does not match model window {}",
                input.window(),
                self.hp.window
            )));
        }
        Ok(())
    }

    /// P(male) for one quantized text. Dropout runs only when `dropout` is given.
    pub fn forward<R: Rng>(&self, input: &QuantizedText, dropout: Option<&mut R>) -> Result<f64> {
        self.check_input(input)?;
        Ok(sigmoid(self.trace(input, dropout).logit))
    }

    /// Eval-mode probability.
    pub fn predict(&self, input: &QuantizedText) -> Result<f64> {
        self.forward::<ChaCha8Rng>(input, None)
    }

    fn trace<R: Rng>(&self, input: &QuantizedText, mut dropout: Option<&mut R>) -> Trace<F> {
        let f = self.hp.filters;
        let pw = self.hp.pool_width;
        let mut act: Vec<Vec<F>> = Vec::with_capacity(CONV_LAYERS);
        let mut pooled: Vec<Option<(Vec<F>, Vec<u32>)>> = Vec::with_capacity(CONV_LAYERS);

        for l in 0..CONV_LAYERS {
            let k = self.hp.kernel_widths[l];
            let len = self.plan.conv_len[l];
            let w = &self.params[2 * l].data;
            let b = &self.params[2 * l + 1].data;
            let mut z: Vec<F> = (0..len).flat_map(|_| b.iter().copied()).collect();
            if l == 0 {
                // one-hot input: each hot (offset, char) adds one weight row
                for p in 0..len {
                    let out = &mut z[p * f..(p + 1) * f];
                    for o in 0..k {
                        if let Some(c) = input.row_at(p + o) {
                            let row = &w[(o * VOCAB_SIZE + c) * f..(o * VOCAB_SIZE + c + 1) * f];
                            for (zo, &wv) in out.iter_mut().zip(row) {
                                *zo += wv;
                            }
                        }
                    }
                }
            } else {
                let x = match &pooled[l - 1] {
                    Some((p, _)) => p.as_slice(),
                    None => act[l - 1].as_slice(),
                };
                let patches = View::new(x, 0, len, k * f, f, 1);
                gemm(patches, View::dense(w, k * f, f), F::ONE, &mut z, 0, f, 1);
            }
            relu_in_place(&mut z);

            let pool = POOL_AFTER[l].then(|| {
                let out_len = self.plan.output_len[l];
                let mut out = vec![F::ZERO; out_len * f];
                let mut arg = vec![0u32; out_len * f];
                for q in 0..out_len {
                    for ch in 0..f {
                        let mut best = q * pw;
                        for p in q * pw + 1..(q + 1) * pw {
                            if z[p * f + ch] > z[best * f + ch] {
                                best = p;
                            }
                        }
                        out[q * f + ch] = z[best * f + ch];
                        arg[q * f + ch] = best as u32;
                    }
                }
                (out, arg)
            });
            act.push(z);
            pooled.push(pool);
        }

        let x = match &pooled[CONV_LAYERS - 1] {
            Some((p, _)) => p.as_slice(),
            None => act[CONV_LAYERS - 1].as_slice(),
        };
        let h = self.hp.hidden;
        let keep = self.hp.keep_prob;

        let dense = |input: &[F], wi: usize, width: usize| -> Vec<F> {
            let mut out = self.params[wi + 1].data.clone();
            gemm(
                View::dense(input, 1, input.len()),
                View::dense(&self.params[wi].data, input.len(), width),
                F::ONE,
                &mut out,
                0,
                width,
                1,
            );
            out
        };

        let mut h1 = dense(x, FC, h);
        relu_in_place(&mut h1);
        let m1 = dropout.as_deref_mut().map(|rng| dropout_mask::<F, R>(h, keep, rng));
        let d1: Vec<F> = match &m1 {
            Some(m) => h1.iter().zip(m).map(|(&a, &b)| a * b).collect(),
            None => h1.clone(),
        };
        let mut h2 = dense(&d1, FC + 2, h);
        relu_in_place(&mut h2);
        let m2 = dropout.as_deref_mut().map(|rng| dropout_mask::<F, R>(h, keep, rng));
        let d2: Vec<F> = match &m2 {
            Some(m) => h2.iter().zip(m).map(|(&a, &b)| a * b).collect(),
            None => h2.clone(),
        };
        let logit = dense(&d2, FC + 4, 1)[0].to_f64();

        Trace {
            act,
            pooled,
            h1,
            d1,
            m1,
            h2,
            d2,
            m2,
            logit,
        }
    }

    /// Forward + backward for one example. Adds `scale * dLoss/dθ` into `grads`
    /// and returns the (clamped) binary cross-entropy loss of the example.
    pub fn accumulate_gradient<R: Rng>(
        &self,
        input: &QuantizedText,
        label: u8,
        scale: f64,
        dropout: Option<&mut R>,
        grads: &mut [Tensor<F>],
    ) -> Result<f64> {
        self.check_input(input)?;
        let tr = self.trace(input, dropout);
        let y = f64::from(label);
        let p_raw = sigmoid(tr.logit);
        let p = p_raw.clamp(P_EPS, 1.0 - P_EPS);
        let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        let dlogit = if p == p_raw { (p - y) * scale } else { 0.0 };
        self.backward(input, &tr, F::from_f64(dlogit), grads);
        Ok(loss)
    }

    fn backward(&self, input: &QuantizedText, tr: &Trace<F>, dlogit: F, grads: &mut [Tensor<F>]) {
        let f = self.hp.filters;
        let h = self.hp.hidden;

        // fc3
        for (g, &d) in grads[FC + 4].data.iter_mut().zip(&tr.d2) {
            *g += d * dlogit;
        }
        grads[FC + 5].data[0] += dlogit;
        let dd2: Vec<F> = self.params[FC + 4].data.iter().map(|&w| w * dlogit).collect();

        let dense_back = |grads: &mut [Tensor<F>], wi: usize, x: &[F], dz: &[F], want_dx: bool| -> Vec<F> {
            let n_in = x.len();
            let width = dz.len();
            gemm(
                View::dense(x, n_in, 1),
                View::dense(dz, 1, width),
                F::ONE,
                &mut grads[wi].data,
                0,
                width,
                1,
            );
            for (g, &d) in grads[wi + 1].data.iter_mut().zip(dz) {
                *g += d;
            }
            let mut dx = vec![F::ZERO; n_in];
            if want_dx {
                gemm(
                    View::dense(dz, 1, width),
                    View::dense(&self.params[wi].data, n_in, width).t(),
                    F::ZERO,
                    &mut dx,
                    0,
                    n_in,
                    1,
                );
            }
            dx
        };

        let through = |d: Vec<F>, mask: &Option<Vec<F>>, act: &[F]| -> Vec<F> {
            d.into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let v = match mask {
                        Some(m) => v * m[i],
                        None => v,
                    };
                    if act[i] > F::ZERO {
                        v
                    } else {
                        F::ZERO
                    }
                })
                .collect()
        };

        let dz2 = through(dd2, &tr.m2, &tr.h2);
        let dd1 = dense_back(grads, FC + 2, &tr.d1, &dz2, true);
        let dz1 = through(dd1, &tr.m1, &tr.h1);
        debug_assert_eq!(dz1.len(), h);
        let flat_in = tr.layer_output(CONV_LAYERS - 1);
        let mut d_out = dense_back(grads, FC, flat_in, &dz1, true);

        for l in (0..CONV_LAYERS).rev() {
            let k = self.hp.kernel_widths[l];
            let len = self.plan.conv_len[l];
            let act = &tr.act[l];
            let mut dz = match &tr.pooled[l] {
                Some((_, arg)) => {
                    let mut d = vec![F::ZERO; len * f];
                    for (i, &g) in d_out.iter().enumerate() {
                        let ch = i % f;
                        d[arg[i] as usize * f + ch] += g;
                    }
                    d
                }
                None => d_out,
            };
            for (d, &a) in dz.iter_mut().zip(act) {
                if !(a > F::ZERO) {
                    *d = F::ZERO;
                }
            }
            {
                let db = &mut grads[2 * l + 1].data;
                for p in 0..len {
                    for (g, &d) in db.iter_mut().zip(&dz[p * f..(p + 1) * f]) {
                        *g += d;
                    }
                }
            }
            if l == 0 {
                let dw = &mut grads[0].data;
                for p in 0..len {
                    let dzp = &dz[p * f..(p + 1) * f];
                    for o in 0..k {
                        if let Some(c) = input.row_at(p + o) {
                            let row = &mut dw[(o * VOCAB_SIZE + c) * f..(o * VOCAB_SIZE + c + 1) * f];
                            for (g, &d) in row.iter_mut().zip(dzp) {
                                *g += d;
                            }
                        }
                    }
                }
                break;
            }
            let x = tr.layer_output(l - 1);
            let in_len = self.plan.input_len[l];
            // dW += patches^T dZ
            gemm(
                View::new(x, 0, len, k * f, f, 1).t(),
                View::dense(&dz, len, f),
                F::ONE,
                &mut grads[2 * l].data,
                0,
                f,
                1,
            );
            // dX[p + o] += dZ[p] W_o^T
            let w = &self.params[2 * l].data;
            let mut dx = vec![F::ZERO; in_len * f];
            for o in 0..k {
                gemm(
                    View::dense(&dz, len, f),
                    View::new(w, o * f * f, f, f, f, 1).t(),
                    F::ONE,
                    &mut dx,
                    o * f,
                    f,
                    1,
                );
            }
            d_out = dx;
        }
    }
}

/// Mean binary cross-entropy over `batch` and its gradient for every parameter tensor.
pub fn cnn_loss_and_gradient<F: Real, R: Rng>(
    model: &CnnModel<F>,
    batch: &[(&QuantizedText, u8)],
    mut dropout: Option<&mut R>,
) -> Result<(f64, Vec<Tensor<F>>)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut grads = model.zero_grads();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (x, y) in batch {
        if *y > 1 {
            return Err(Error::Config(format!("label {y} is not 0 or 1")));
        }
        loss += model.accumulate_gradient(x, *y, scale, dropout.as_deref_mut(), &mut grads)?;
    }
    Ok((loss * scale, grads))
}

/// Mean loss only (no gradient). Used by finite-difference checks.
pub fn cnn_loss<F: Real, R: Rng>(
    model: &CnnModel<F>,
    batch: &[(&QuantizedText, u8)],
    mut dropout: Option<&mut R>,
) -> Result<f64> {
    let mut loss = 0.0;
    for (x, y) in batch {
        let p = model.forward(x, dropout.as_deref_mut())?.clamp(P_EPS, 1.0 - P_EPS);
        let y = f64::from(*y);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(loss / batch.len() as f64)
}
