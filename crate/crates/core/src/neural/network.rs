use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        out: usize,
    },
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool1d {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Flatten,
    Dropout {
        rate: f64,
    },
}

/// Activation shape of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Seq { channels: usize, len: usize },
    Flat(usize),
}

impl Shape {
    pub fn size(self) -> usize {
        match self {
            Shape::Seq { channels, len } => channels * len,
            Shape::Flat(n) => n,
        }
    }
}

/// Output length of a sliding window, or `None` when the window does not
/// fit.
pub fn window_output_len(
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = len + 2 * padding;
    if kernel == 0 || stride == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Layer stack over a single-channel input sequence. Every dense and
/// convolution layer except the last is followed by a ReLU; the last layer
/// must be dense and emits logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Feed-forward network with `hidden` ReLU layers of `neurons` units.
    pub fn ann(input_width: usize, hidden: usize, neurons: usize, outputs: usize) -> Self {
        let mut layers = vec![LayerSpec::Dense { out: neurons }; hidden];
        layers.push(LayerSpec::Dense { out: outputs });
        Self {
            input_width,
            layers,
        }
    }

    /// Three convolution and pooling stages, then two dropout-regularised
    /// dense layers.
    pub fn cnn(input_width: usize, outputs: usize, dropout1: f64, dropout2: f64) -> Self {
        use LayerSpec::*;
        let conv = |in_ch, out_ch, kernel| Conv1d {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            padding: 1,
        };
        let pool = |kernel, stride| MaxPool1d {
            kernel,
            stride,
            padding: 0,
        };
        Self {
            input_width,
            layers: vec![
                conv(1, 32, 10),
                pool(5, 5),
                conv(32, 128, 5),
                pool(3, 3),
                conv(128, 256, 3),
                pool(2, 3),
                Flatten,
                Dense { out: 256 },
                Dropout { rate: dropout1 },
                Dense { out: 128 },
                Dropout { rate: dropout2 },
                Dense { out: outputs },
            ],
        }
    }

    /// Input shape of every layer followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>, NeuralError> {
        let bad = |i: usize, m: String| Err(NeuralError::Spec(format!("layer {i}: {m}")));
        if self.input_width == 0 {
            return Err(NeuralError::Spec("input width must be positive".into()));
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { .. }) => {}
            _ => return Err(NeuralError::Spec("the last layer must be dense".into())),
        }
        let mut shape = Shape::Seq {
            channels: 1,
            len: self.input_width,
        };
        let mut out = vec![shape];
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match (*layer, shape) {
                (LayerSpec::Dense { out }, Shape::Flat(_) | Shape::Seq { channels: 1, .. })
                    if out > 0 =>
                {
                    Shape::Flat(out)
                }
                (LayerSpec::Dense { .. }, _) => {
                    return bad(i, "dense needs a flat input and positive width".into())
                }
                (
                    LayerSpec::Conv1d {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        padding,
                    },
                    Shape::Seq { channels, len },
                ) => {
                    if channels != in_ch || out_ch == 0 {
                        return bad(i, format!("expects {in_ch} channels, got {channels}"));
                    }
                    match window_output_len(len, kernel, stride, padding) {
                        Some(l) => Shape::Seq {
                            channels: out_ch,
                            len: l,
                        },
                        None => {
                            return bad(i, format!("kernel {kernel} does not fit length {len}"))
                        }
                    }
                }
                (
                    LayerSpec::MaxPool1d {
                        kernel,
                        stride,
                        padding,
                    },
                    Shape::Seq { channels, len },
                ) => {
                    if 2 * padding > kernel {
                        return bad(i, "pool padding exceeds half the kernel".into());
                    }
                    match window_output_len(len, kernel, stride, padding) {
                        Some(l) => Shape::Seq { channels, len: l },
                        None => {
                            return bad(i, format!("kernel {kernel} does not fit length {len}"))
                        }
                    }
                }
                (LayerSpec::Conv1d { .. } | LayerSpec::MaxPool1d { .. }, Shape::Flat(_)) => {
                    return bad(i, "sequence layer after flatten".into())
                }
                (LayerSpec::Flatten, s) => Shape::Flat(s.size()),
                (LayerSpec::Dropout { rate }, s) => {
                    if !(0.0..1.0).contains(&rate) {
                        return bad(i, format!("dropout rate {rate} outside [0, 1)"));
                    }
                    s
                }
            };
            out.push(shape);
        }
        Ok(out)
    }

    pub fn output_width(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { out }) => *out,
            _ => 0,
        }
    }
}

/// Trainable parameters of one layer. Weights are stored `fan_in x out`
/// so a batch (rows are samples) maps through `X W`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Affine { w: DMatrix<f64>, b: DVector<f64> },
    None,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Dense {
        input: DMatrix<f64>,
        pre: DMatrix<f64>,
    },
    Conv {
        cols: DMatrix<f64>,
        pre: DMatrix<f64>,
    },
    Pool {
        argmax: Vec<usize>,
        input_cols: usize,
    },
    Dropout {
        mask: Option<DMatrix<f64>>,
    },
    Flatten,
}

/// Forward intermediates needed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: Vec<LayerParams>,
    shapes: Vec<Shape>,
}

impl Network {
    /// He-uniform weights and zero biases.
    pub fn init(spec: NetworkSpec, rng: &mut impl Rng) -> Result<Self, NeuralError> {
        let shapes = spec.shapes()?;
        let params = param_shapes(&spec, &shapes)
            .into_iter()
            .map(|dims| match dims {
                Some((fan_in, out)) => {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    LayerParams::Affine {
                        w: DMatrix::from_fn(fan_in, out, |_, _| rng.gen_range(-limit..limit)),
                        b: DVector::zeros(out),
                    }
                }
                None => LayerParams::None,
            })
            .collect();
        Ok(Self {
            spec,
            params,
            shapes,
        })
    }

    /// Network with the given parameters, checked against the spec.
    pub fn from_params(spec: NetworkSpec, params: Vec<LayerParams>) -> Result<Self, NeuralError> {
        let shapes = spec.shapes()?;
        let expected = param_shapes(&spec, &shapes);
        if params.len() != expected.len() {
            return Err(NeuralError::Shape(
                "parameter list does not match the layers".into(),
            ));
        }
        for (i, (p, e)) in params.iter().zip(&expected).enumerate() {
            let ok = match (p, e) {
                (LayerParams::Affine { w, b }, Some((fan_in, out))) => {
                    w.shape() == (*fan_in, *out) && b.len() == *out
                }
                (LayerParams::None, None) => true,
                _ => false,
            };
            if !ok {
                return Err(NeuralError::Shape(format!(
                    "layer {i} parameters have the wrong shape"
                )));
            }
        }
        Ok(Self {
            spec,
            params,
            shapes,
        })
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width
    }

    pub fn output_width(&self) -> usize {
        self.spec.output_width()
    }

    pub fn num_params(&self) -> usize {
        self.params
            .iter()
            .map(|p| match p {
                LayerParams::Affine { w, b } => w.len() + b.len(),
                LayerParams::None => 0,
            })
            .sum()
    }

    /// All parameters as one vector, layer by layer, weights (column-major)
    /// before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for p in &self.params {
            if let LayerParams::Affine { w, b } = p {
                out.extend_from_slice(w.as_slice());
                out.extend_from_slice(b.as_slice());
            }
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut k = 0;
        for p in &mut self.params {
            if let LayerParams::Affine { w, b } = p {
                let n = w.len();
                w.as_mut_slice().copy_from_slice(&flat[k..k + n]);
                k += n;
                let n = b.len();
                b.as_mut_slice().copy_from_slice(&flat[k..k + n]);
                k += n;
            }
        }
    }

    fn is_hidden(&self, i: usize) -> bool {
        i + 1 < self.spec.layers.len()
    }

    /// Logits for a batch (one row per sample). Dropout is applied only
    /// when `dropout_rng` is given.
    pub fn forward(
        &self,
        x: &DMatrix<f64>,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<DMatrix<f64>, NeuralError> {
        Ok(self.forward_cached(x, dropout_rng)?.0)
    }

    pub fn forward_cached(
        &self,
        x: &DMatrix<f64>,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(DMatrix<f64>, ForwardCache), NeuralError> {
        if x.ncols() != self.spec.input_width {
            return Err(NeuralError::Shape(format!(
                "expected {} features, got {}",
                self.spec.input_width,
                x.ncols()
            )));
        }
        let n = x.nrows();
        let mut a = x.clone();
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let hidden = self.is_hidden(i);
            match (*layer, &self.params[i]) {
                (LayerSpec::Dense { .. }, LayerParams::Affine { w, b }) => {
                    let mut pre = &a * w;
                    add_bias(&mut pre, b);
                    let next = if hidden { relu(&pre) } else { pre.clone() };
                    caches.push(LayerCache::Dense { input: a, pre });
                    a = next;
                }
                (
                    LayerSpec::Conv1d {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        padding,
                    },
                    LayerParams::Affine { w, b },
                ) => {
                    let Shape::Seq { len, .. } = self.shapes[i] else {
                        unreachable!()
                    };
                    let Shape::Seq { len: lout, .. } = self.shapes[i + 1] else {
                        unreachable!()
                    };
                    let cols = im2col(&a, in_ch, len, kernel, stride, padding, lout);
                    let mut yc = &cols * w;
                    add_bias(&mut yc, b);
                    let pre = unfold_rows(&yc, n, out_ch, lout);
                    let next = if hidden { relu(&pre) } else { pre.clone() };
                    caches.push(LayerCache::Conv { cols, pre });
                    a = next;
                }
                (
                    LayerSpec::MaxPool1d {
                        kernel,
                        stride,
                        padding,
                    },
                    _,
                ) => {
                    let Shape::Seq { channels, len } = self.shapes[i] else {
                        unreachable!()
                    };
                    let Shape::Seq { len: lout, .. } = self.shapes[i + 1] else {
                        unreachable!()
                    };
                    let mut out = DMatrix::zeros(n, channels * lout);
                    let mut argmax = vec![0; n * channels * lout];
                    for c in 0..channels {
                        for t in 0..lout {
                            let start = (t * stride) as isize - padding as isize;
                            let lo = start.max(0) as usize;
                            let hi = ((start + kernel as isize) as usize).min(len);
                            for s in 0..n {
                                let mut best = lo;
                                for u in lo + 1..hi {
                                    if a[(s, c * len + u)] > a[(s, c * len + best)] {
                                        best = u;
                                    }
                                }
                                out[(s, c * lout + t)] = a[(s, c * len + best)];
                                argmax[(c * lout + t) * n + s] = c * len + best;
                            }
                        }
                    }
                    caches.push(LayerCache::Pool {
                        argmax,
                        input_cols: a.ncols(),
                    });
                    a = out;
                }
                (LayerSpec::Flatten, _) => caches.push(LayerCache::Flatten),
                (LayerSpec::Dropout { rate }, _) => {
                    let mask = match dropout_rng.as_deref_mut() {
                        Some(rng) if rate > 0.0 => {
                            let keep = 1.0 - rate;
                            let m = DMatrix::from_fn(a.nrows(), a.ncols(), |_, _| {
                                if rng.gen::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            });
                            a.component_mul_assign(&m);
                            Some(m)
                        }
                        _ => None,
                    };
                    caches.push(LayerCache::Dropout { mask });
                }
                _ => unreachable!("parameters follow the spec"),
            }
        }
        Ok((a, ForwardCache { layers: caches }))
    }

    /// Parameter gradients (same layout as [`Network::flat_params`]) for
    /// the upstream gradient `dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &DMatrix<f64>) -> Vec<f64> {
        let mut grads: Vec<Option<(DMatrix<f64>, DVector<f64>)>> = vec![None; self.params.len()];
        let mut g = dlogits.clone();
        let n = g.nrows();
        for i in (0..self.spec.layers.len()).rev() {
            let hidden = self.is_hidden(i);
            match (&cache.layers[i], &self.params[i], self.spec.layers[i]) {
                (LayerCache::Dense { input, pre }, LayerParams::Affine { w, .. }, _) => {
                    if hidden {
                        relu_backward(&mut g, pre);
                    }
                    let dw = input.tr_mul(&g);
                    let db = column_sums(&g);
                    if i > 0 {
                        g = &g * w.transpose();
                    }
                    grads[i] = Some((dw, db));
                }
                (
                    LayerCache::Conv { cols, pre },
                    LayerParams::Affine { w, .. },
                    LayerSpec::Conv1d {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        padding,
                    },
                ) => {
                    if hidden {
                        relu_backward(&mut g, pre);
                    }
                    let Shape::Seq { len, .. } = self.shapes[i] else {
                        unreachable!()
                    };
                    let Shape::Seq { len: lout, .. } = self.shapes[i + 1] else {
                        unreachable!()
                    };
                    let dyc = fold_rows(&g, n, out_ch, lout);
                    let dw = cols.tr_mul(&dyc);
                    let db = column_sums(&dyc);
                    if i > 0 {
                        let dcols = &dyc * w.transpose();
                        g = col2im(&dcols, n, in_ch, len, kernel, stride, padding, lout);
                    }
                    grads[i] = Some((dw, db));
                }
                (LayerCache::Pool { argmax, input_cols }, _, _) => {
                    let mut dx = DMatrix::zeros(n, *input_cols);
                    for j in 0..g.ncols() {
                        for s in 0..n {
                            dx[(s, argmax[j * n + s])] += g[(s, j)];
                        }
                    }
                    g = dx;
                }
                (LayerCache::Dropout { mask }, _, _) => {
                    if let Some(m) = mask {
                        g.component_mul_assign(m);
                    }
                }
                (LayerCache::Flatten, _, _) => {}
                _ => unreachable!("cache follows the spec"),
            }
        }
        let mut out = Vec::with_capacity(self.num_params());
        for (dw, db) in grads.into_iter().flatten() {
            out.extend_from_slice(dw.as_slice());
            out.extend_from_slice(db.as_slice());
        }
        out
    }
}

/// `(fan_in, out)` of each parameterised layer.
fn param_shapes(spec: &NetworkSpec, shapes: &[Shape]) -> Vec<Option<(usize, usize)>> {
    spec.layers
        .iter()
        .enumerate()
        .map(|(i, layer)| match *layer {
            LayerSpec::Dense { out } => Some((shapes[i].size(), out)),
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((in_ch * kernel, out_ch)),
            _ => None,
        })
        .collect()
}

fn add_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(b[j]);
    }
}

fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v.max(0.0))
}

fn relu_backward(g: &mut DMatrix<f64>, pre: &DMatrix<f64>) {
    g.zip_apply(pre, |gv, p| {
        if p <= 0.0 {
            *gv = 0.0;
        }
    });
}

/// Rows `s * lout + t`, columns `c * kernel + j`.
fn im2col(
    x: &DMatrix<f64>,
    in_ch: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    lout: usize,
) -> DMatrix<f64> {
    let n = x.nrows();
    let mut cols = DMatrix::zeros(n * lout, in_ch * kernel);
    for c in 0..in_ch {
        for j in 0..kernel {
            for t in 0..lout {
                let u = (t * stride + j) as isize - padding as isize;
                if u < 0 || u as usize >= len {
                    continue;
                }
                let src = c * len + u as usize;
                for s in 0..n {
                    cols[(s * lout + t, c * kernel + j)] = x[(s, src)];
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    dcols: &DMatrix<f64>,
    n: usize,
    in_ch: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    lout: usize,
) -> DMatrix<f64> {
    let mut dx = DMatrix::zeros(n, in_ch * len);
    for c in 0..in_ch {
        for j in 0..kernel {
            for t in 0..lout {
                let u = (t * stride + j) as isize - padding as isize;
                if u < 0 || u as usize >= len {
                    continue;
                }
                let dst = c * len + u as usize;
                for s in 0..n {
                    dx[(s, dst)] += dcols[(s * lout + t, c * kernel + j)];
                }
            }
        }
    }
    dx
}

/// `(n * lout) x ch` to `n x (ch * lout)`.
fn unfold_rows(yc: &DMatrix<f64>, n: usize, ch: usize, lout: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, ch * lout, |s, k| yc[(s * lout + k % lout, k / lout)])
}

fn fold_rows(y: &DMatrix<f64>, n: usize, ch: usize, lout: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n * lout, ch, |r, o| y[(r / lout, o * lout + r % lout)])
}
