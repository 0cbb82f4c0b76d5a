//! Forward semantics of the two architectures and the ramp loss.
//!
//! Basic setting: `L` circular convolutions with `c` channels and `k x k`
//! kernels, each followed by the activation, then an inner product with a
//! fixed unit-norm readout `w`. General setting: convolutions with per-layer
//! channel counts, activation and optional pooling, then fully connected
//! layers, activation after every fully connected layer except the last.
//! There are no biases anywhere.

use alloc::vec;
use alloc::vec::Vec;

use crate::convspec::circular_conv;
use crate::error::{bail, Result};
use crate::norms::ParamSet;
use crate::tensor::{dot, euclidean_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Setting {
    Basic,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative at `z`; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Pooling {
    #[default]
    None,
    /// Non-overlapping 2x2 windows, window sum divided by 2.
    Average2x2,
    Max2x2,
}

/// Fixed readout of the basic setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Readout {
    /// All-ones vector, normalized.
    #[default]
    Ones,
    /// `(-1)^j`, normalized.
    AlternatingSigns,
    /// Fixed standard Gaussian draw from `seed`, normalized.
    Gaussian { seed: u64 },
}

impl Readout {
    pub fn vector(self, len: usize) -> Vec<f64> {
        let s = 1.0 / libm::sqrt(len as f64);
        match self {
            Readout::Ones => vec![s; len],
            Readout::AlternatingSigns => (0..len)
                .map(|j| if j % 2 == 0 { s } else { -s })
                .collect(),
            Readout::Gaussian { seed } => {
                let mut v = crate::rng::SeededRng::new(seed).gaussian_vec(len);
                let n = euclidean_norm(&v);
                v.iter_mut().for_each(|x| *x /= n);
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvLayerConfig {
    pub out_channels: usize,
    pub kernel_size: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub pooling: Pooling,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkConfig {
    pub setting: Setting,
    /// Side length `d` of the input.
    pub input_size: usize,
    pub input_channels: usize,
    pub conv: Vec<ConvLayerConfig>,
    /// Output width of each fully connected layer; the last one is `m`.
    pub fc_widths: Vec<usize>,
    pub activation: Activation,
    #[cfg_attr(feature = "serde", serde(default))]
    pub readout: Readout,
    /// Bound on the Euclidean norm of inputs.
    pub chi: f64,
    /// Slack on the initial layer norms.
    pub nu: f64,
    /// Margin parameter of the ramp loss.
    pub lambda: f64,
    /// Range bound of the loss.
    pub loss_range: f64,
}

impl NetworkConfig {
    /// Basic setting: `depth` layers of `k x k` kernels on `c` channels.
    pub fn basic(d: usize, c: usize, k: usize, depth: usize, activation: Activation) -> Self {
        Self {
            setting: Setting::Basic,
            input_size: d,
            input_channels: c,
            conv: vec![
                ConvLayerConfig {
                    out_channels: c,
                    kernel_size: k,
                    pooling: Pooling::None,
                };
                depth
            ],
            fc_widths: vec![],
            activation,
            readout: Readout::Ones,
            chi: 1.0,
            nu: 0.0,
            lambda: 1.0,
            loss_range: 1.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_readout(mut self, readout: Readout) -> Self {
        self.readout = readout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_channels == 0 {
            bail!(Argument, "input must have positive size and channel count");
        }
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            bail!(Argument, "lambda must be a finite value >= 1, got {}", self.lambda);
        }
        if !(self.chi > 0.0 && self.nu >= 0.0 && self.loss_range > 0.0) {
            bail!(Argument, "chi and M must be positive and nu nonnegative");
        }
        let mut d = self.input_size;
        let mut c = self.input_channels;
        for (i, layer) in self.conv.iter().enumerate() {
            if layer.out_channels == 0 || layer.kernel_size == 0 {
                bail!(Argument, "conv layer {i} has an empty kernel or no channels");
            }
            if layer.kernel_size > d {
                bail!(Argument, "conv layer {i}: kernel {} exceeds input size {d}", layer.kernel_size);
            }
            c = layer.out_channels;
            if layer.pooling != Pooling::None {
                if d % 2 != 0 {
                    bail!(Argument, "conv layer {i}: pooling needs an even size, got {d}");
                }
                d /= 2;
            }
        }
        let _ = c;
        if self.fc_widths.contains(&0) {
            bail!(Argument, "fully connected layers need positive width");
        }
        if self.setting == Setting::Basic {
            if self.conv.is_empty() {
                bail!(Argument, "basic setting needs at least one conv layer");
            }
            let k = self.conv[0].kernel_size;
            let uniform = self.conv.iter().all(|l| {
                l.out_channels == self.input_channels && l.kernel_size == k && l.pooling == Pooling::None
            });
            if !uniform || !self.fc_widths.is_empty() {
                bail!(
                    Argument,
                    "basic setting needs equal channels and kernel sizes, no pooling and no fc layers"
                );
            }
            if self.chi != 1.0 || self.loss_range != 1.0 || self.nu != 0.0 {
                bail!(Argument, "basic setting fixes chi = 1, M = 1, nu = 0");
            }
        }
        Ok(())
    }

    /// Side length entering each convolution.
    pub fn conv_input_sizes(&self) -> Vec<usize> {
        let mut d = self.input_size;
        self.conv
            .iter()
            .map(|l| {
                let here = d;
                if l.pooling != Pooling::None {
                    d /= 2;
                }
                here
            })
            .collect()
    }

    /// `(size, channels)` of the map leaving the convolutional stack.
    pub fn conv_output_shape(&self) -> (usize, usize) {
        let mut d = self.input_size;
        let mut c = self.input_channels;
        for l in &self.conv {
            c = l.out_channels;
            if l.pooling != Pooling::None {
                d /= 2;
            }
        }
        (d, c)
    }

    pub fn flattened_dim(&self) -> usize {
        let (d, c) = self.conv_output_shape();
        d * d * c
    }

    pub fn input_dim(&self) -> usize {
        self.input_size * self.input_size * self.input_channels
    }

    /// Output dimension `m`.
    pub fn output_dim(&self) -> usize {
        match self.setting {
            Setting::Basic => 1,
            Setting::General => self.fc_widths.last().copied().unwrap_or_else(|| self.flattened_dim()),
        }
    }

    /// Kernel dims of each conv layer.
    pub fn conv_dims(&self) -> Vec<[usize; 4]> {
        let mut cin = self.input_channels;
        self.conv
            .iter()
            .map(|l| {
                let dims = [l.kernel_size, l.kernel_size, cin, l.out_channels];
                cin = l.out_channels;
                dims
            })
            .collect()
    }

    /// `(rows, cols)` of each fully connected layer.
    pub fn fc_shapes(&self) -> Vec<(usize, usize)> {
        let mut cols = self.flattened_dim();
        self.fc_widths
            .iter()
            .map(|&rows| {
                let s = (rows, cols);
                cols = rows;
                s
            })
            .collect()
    }

    /// `L = L_c + L_f`.
    pub fn depth(&self) -> usize {
        self.conv.len() + self.fc_widths.len()
    }

    /// Number of trainable parameters `W`.
    pub fn trainable_params(&self) -> usize {
        self.conv_dims().iter().map(|d| d.iter().product::<usize>()).sum::<usize>()
            + self.fc_shapes().iter().map(|(r, c)| r * c).sum::<usize>()
    }

    /// Check that a parameter set has exactly this architecture.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        params.validate()?;
        if params.conv.len() != self.conv.len() || params.fc.len() != self.fc_widths.len() {
            bail!(
                Dimension,
                "parameters have {} conv / {} fc layers, config has {} / {}",
                params.conv.len(),
                params.fc.len(),
                self.conv.len(),
                self.fc_widths.len()
            );
        }
        for (i, (k, dims)) in params.conv.iter().zip(self.conv_dims()).enumerate() {
            if k.dims() != dims {
                bail!(Dimension, "conv layer {i} has dims {:?}, expected {dims:?}", k.dims());
            }
        }
        if params.conv_input_sizes != self.conv_input_sizes() {
            bail!(Dimension, "conv input sizes disagree with the architecture");
        }
        for (i, (v, shape)) in params.fc.iter().zip(self.fc_shapes()).enumerate() {
            if v.shape() != shape {
                bail!(Dimension, "fc layer {i} has shape {:?}, expected {shape:?}", v.shape());
            }
        }
        match (self.setting, &params.readout) {
            (Setting::Basic, Some(w)) if w.len() == self.flattened_dim() => {}
            (Setting::Basic, _) => bail!(Dimension, "basic setting needs a readout of length {}", self.flattened_dim()),
            (Setting::General, None) => {}
            (Setting::General, Some(_)) => bail!(Dimension, "general setting has no fixed readout"),
        }
        Ok(())
    }
}

/// Class label or sign target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Label {
    /// `+1` or `-1` for a scalar output.
    Binary(i8),
    /// Class index for a vector output.
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// `d x d x c`, row-major with the channel fastest.
    pub x: Vec<f64>,
    pub y: Label,
}

/// A square multi-channel map stored row-major with the channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub size: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

/// 2x2 pooling; returns the pooled map and, for max pooling, the flat index
/// of each window's winner.
pub fn pool_with_argmax(map: &FeatureMap, mode: Pooling) -> Result<(FeatureMap, Vec<usize>)> {
    let (d, c) = (map.size, map.channels);
    if map.data.len() != d * d * c {
        bail!(Dimension, "feature map length does not match {d}x{d}x{c}");
    }
    if mode == Pooling::None {
        return Ok((map.clone(), Vec::new()));
    }
    if d % 2 != 0 {
        bail!(Argument, "2x2 pooling needs an even size, got {d}");
    }
    let h = d / 2;
    let mut out = vec![0.0; h * h * c];
    let mut arg = Vec::new();
    if mode == Pooling::Max2x2 {
        arg.resize(h * h * c, 0);
    }
    for p in 0..h {
        for q in 0..h {
            for ch in 0..c {
                let idx = [
                    ((2 * p) * d + 2 * q) * c + ch,
                    ((2 * p) * d + 2 * q + 1) * c + ch,
                    ((2 * p + 1) * d + 2 * q) * c + ch,
                    ((2 * p + 1) * d + 2 * q + 1) * c + ch,
                ];
                let o = (p * h + q) * c + ch;
                match mode {
                    Pooling::Average2x2 => {
                        out[o] = idx.iter().map(|&i| map.data[i]).sum::<f64>() / 2.0;
                    }
                    Pooling::Max2x2 => {
                        let mut best = idx[0];
                        for &i in &idx[1..] {
                            if map.data[i] > map.data[best] {
                                best = i;
                            }
                        }
                        out[o] = map.data[best];
                        arg[o] = best;
                    }
                    Pooling::None => unreachable!(),
                }
            }
        }
    }
    Ok((
        FeatureMap {
            size: h,
            channels: c,
            data: out,
        },
        arg,
    ))
}

pub fn pool(map: &FeatureMap, mode: Pooling) -> Result<FeatureMap> {
    Ok(pool_with_argmax(map, mode)?.0)
}

/// Intermediate values of one conv layer.
#[derive(Debug, Clone)]
pub struct ConvTrace {
    pub input: Vec<f64>,
    pub input_size: usize,
    pub pre_activation: Vec<f64>,
    pub pool_argmax: Vec<usize>,
    /// Smallest gap between a max-pool winner and the runner-up.
    pub pool_gap: f64,
}

#[derive(Debug, Clone)]
pub struct FcTrace {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
}

/// Everything the backward pass and the norm audits need.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub conv: Vec<ConvTrace>,
    /// Flattened output of the convolutional stack.
    pub features: Vec<f64>,
    pub fc: Vec<FcTrace>,
    pub output: Vec<f64>,
}

impl ForwardTrace {
    /// Distance from the nearest non-differentiable point of the network
    /// (ReLU zero crossings and max-pool ties).
    pub fn kink_distance(&self, activation: Activation) -> f64 {
        let mut m = f64::INFINITY;
        if activation == Activation::Relu {
            for t in &self.conv {
                m = t.pre_activation.iter().fold(m, |m, z| m.min(z.abs()));
            }
            let n = self.fc.len();
            for t in self.fc.iter().take(n.saturating_sub(1)) {
                m = t.pre_activation.iter().fold(m, |m, z| m.min(z.abs()));
            }
        }
        self.conv.iter().fold(m, |m, t| m.min(t.pool_gap))
    }
}

fn ensure_finite(v: &[f64], layer: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        bail!(Numeric, "non-finite value in {layer}");
    }
    Ok(())
}

fn max_pool_gap(map: &FeatureMap) -> f64 {
    let (d, c) = (map.size, map.channels);
    let mut gap = f64::INFINITY;
    for p in 0..d / 2 {
        for q in 0..d / 2 {
            for ch in 0..c {
                let mut w = [
                    map.data[((2 * p) * d + 2 * q) * c + ch],
                    map.data[((2 * p) * d + 2 * q + 1) * c + ch],
                    map.data[((2 * p + 1) * d + 2 * q) * c + ch],
                    map.data[((2 * p + 1) * d + 2 * q + 1) * c + ch],
                ];
                w.sort_by(|a, b| b.total_cmp(a));
                gap = gap.min(w[0] - w[1]);
            }
        }
    }
    gap
}

/// Forward pass recording all intermediates.
pub fn forward_trace(params: &ParamSet, config: &NetworkConfig, x: &[f64]) -> Result<ForwardTrace> {
    config.check_params(params)?;
    if x.len() != config.input_dim() {
        bail!(
            Dimension,
            "input of length {} does not match {}",
            x.len(),
            config.input_dim()
        );
    }
    let xn = euclidean_norm(x);
    if xn > config.chi + 1e-12 {
        bail!(Argument, "input norm {xn} exceeds chi = {}", config.chi);
    }
    let act = config.activation;
    let mut h = x.to_vec();
    let mut conv = Vec::with_capacity(params.conv.len());
    for (i, ((k, &d), layer)) in params
        .conv
        .iter()
        .zip(&params.conv_input_sizes)
        .zip(&config.conv)
        .enumerate()
    {
        let pre = circular_conv(k, d, &h)?;
        ensure_finite(&pre, &alloc::format!("conv layer {i}"))?;
        let post = FeatureMap {
            size: d,
            channels: k.out_channels(),
            data: pre.iter().map(|&z| act.apply(z)).collect(),
        };
        let pool_gap = if layer.pooling == Pooling::Max2x2 {
            max_pool_gap(&post)
        } else {
            f64::INFINITY
        };
        let (pooled, pool_argmax) = pool_with_argmax(&post, layer.pooling)?;
        conv.push(ConvTrace {
            input: core::mem::replace(&mut h, pooled.data),
            input_size: d,
            pre_activation: pre,
            pool_argmax,
            pool_gap,
        });
    }
    let features = h.clone();
    let mut fc = Vec::with_capacity(params.fc.len());
    let n_fc = params.fc.len();
    for (j, v) in params.fc.iter().enumerate() {
        let pre = v.matvec(&h)?;
        ensure_finite(&pre, &alloc::format!("fc layer {j}"))?;
        let next = if j + 1 < n_fc {
            pre.iter().map(|&z| act.apply(z)).collect()
        } else {
            pre.clone()
        };
        fc.push(FcTrace {
            input: core::mem::replace(&mut h, next),
            pre_activation: pre,
        });
    }
    let output = match (&params.readout, config.setting) {
        (Some(w), Setting::Basic) => vec![dot(w, &h)],
        _ => h,
    };
    ensure_finite(&output, "output")?;
    Ok(ForwardTrace {
        conv,
        features,
        fc,
        output,
    })
}

/// Network output: a scalar in the basic setting, a vector in `R^m` otherwise.
pub fn forward(params: &ParamSet, config: &NetworkConfig, x: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_trace(params, config, x)?.output)
}

/// Margin of a prediction: `y * yhat` for signs, `yhat_y - max_{j != y} yhat_j`
/// for classes. The second value is the runner-up index for classes.
pub fn margin(yhat: &[f64], y: Label) -> Result<(f64, Option<usize>)> {
    match y {
        Label::Binary(s) => {
            if s != 1 && s != -1 {
                bail!(Argument, "binary label must be +1 or -1, got {s}");
            }
            if yhat.len() != 1 {
                bail!(Argument, "binary label needs a scalar output, got {} values", yhat.len());
            }
            Ok((f64::from(s) * yhat[0], None))
        }
        Label::Class(c) => {
            if yhat.len() < 2 || c >= yhat.len() {
                bail!(Argument, "class {c} is invalid for an output of {} values", yhat.len());
            }
            let (j, best) = yhat
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != c)
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            Ok((yhat[c] - best, Some(j)))
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 1.0 && lambda.is_finite()) {
        bail!(Argument, "ramp loss needs lambda >= 1, got {lambda}");
    }
    Ok(())
}

/// The 1/lambda-margin ramp: 1 at nonpositive margins, linear down to 0 at `1/lambda`.
pub fn ramp_loss(yhat: &[f64], y: Label, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let (t, _) = margin(yhat, y)?;
    Ok(ramp(t, lambda))
}

#[inline]
pub fn ramp(t: f64, lambda: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t < 1.0 / lambda {
        1.0 - lambda * t
    } else {
        0.0
    }
}

/// Subgradient of [`ramp_loss`] with respect to `yhat`; zero at the kinks.
pub fn ramp_loss_grad(yhat: &[f64], y: Label, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let (t, runner_up) = margin(yhat, y)?;
    let mut g = vec![0.0; yhat.len()];
    if t > 0.0 && t < 1.0 / lambda {
        match y {
            Label::Binary(s) => g[0] = -lambda * f64::from(s),
            Label::Class(c) => {
                g[c] = -lambda;
                if let Some(j) = runner_up {
                    g[j] = lambda;
                }
            }
        }
    }
    Ok(g)
}

/// Subgradient of the hinge surrogate `max(0, 1 - lambda * margin)`; unlike
/// the ramp it keeps pushing examples with negative margin.
pub fn hinge_loss_grad(yhat: &[f64], y: Label, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let (t, runner_up) = margin(yhat, y)?;
    let mut g = vec![0.0; yhat.len()];
    if t < 1.0 / lambda {
        match y {
            Label::Binary(s) => g[0] = -lambda * f64::from(s),
            Label::Class(c) => {
                g[c] = -lambda;
                if let Some(j) = runner_up {
                    g[j] = lambda;
                }
            }
        }
    }
    Ok(g)
}

pub fn hinge_loss(yhat: &[f64], y: Label, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let (t, _) = margin(yhat, y)?;
    Ok((1.0 - lambda * t).max(0.0))
}

/// Lipschitz constant of the ramp loss in the Euclidean norm on outputs:
/// `lambda` for a scalar output, `2 lambda` for a class margin.
pub fn effective_lambda(lambda: f64, output_dim: usize) -> f64 {
    if output_dim == 1 {
        lambda
    } else {
        2.0 * lambda
    }
}

/// Predicted label for 0-1 error.
pub fn predict(yhat: &[f64], y: Label) -> bool {
    match margin(yhat, y) {
        Ok((t, _)) => t > 0.0,
        Err(_) => false,
    }
}
