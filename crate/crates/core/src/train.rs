//! Reverse-mode gradients, minibatch SGD and the width-sweep harness.

use alloc::vec;
use alloc::vec::Vec;

use crate::convspec::{circular_conv_adjoint, circular_conv_kernel_grad, kernel_operator_norm};
use crate::error::{bail, Error, Result};
use crate::linalg::orthonormal_columns;
use crate::network::{
    forward, forward_trace, hinge_loss_grad, predict, ramp_loss, ramp_loss_grad, Activation, Example,
    ForwardTrace, Label, NetworkConfig, Pooling, Readout, Setting,
};
use crate::norms::{sigma_dist, InitPair, ParamSet};
use crate::rng::SeededRng;
use crate::tensor::{euclidean_norm, RealMatrix, RealTensor4};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Schedule {
    Constant,
    /// Learning rate multiplied by this factor after every epoch.
    ExponentialDecay(f64),
}

/// Loss whose gradient drives SGD. Errors and bounds always use the ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Objective {
    #[default]
    Ramp,
    Hinge,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lambda: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub objective: Objective,
    /// Widths swept by [`run_experiment`].
    #[cfg_attr(feature = "serde", serde(default))]
    pub widths: Vec<usize>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            bail!(Argument, "learning rate must be finite and nonnegative");
        }
        if self.batch_size == 0 {
            bail!(Argument, "batch size must be at least 1");
        }
        if let Schedule::ExponentialDecay(r) = self.schedule {
            if !(r > 0.0 && r <= 1.0) {
                bail!(Argument, "decay rate must lie in (0, 1], got {r}");
            }
        }
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            bail!(Argument, "lambda must be >= 1, got {}", self.lambda);
        }
        Ok(())
    }

    pub fn rate_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::ExponentialDecay(r) => self.learning_rate * libm::pow(r, epoch as f64),
        }
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentRecord {
    pub width: usize,
    /// Trainable parameter count `W`.
    pub params: usize,
    pub seed: u64,
    pub train_error: f64,
    pub test_error: f64,
    /// `test_error - train_error`.
    pub gap: f64,
    /// Sigma distance from initialization at the end of training.
    pub beta: f64,
    pub beta_trace: Vec<f64>,
    /// Mean ramp loss over the training set, before training and after each epoch.
    pub loss_trace: Vec<f64>,
    pub train_ramp: f64,
    pub test_ramp: f64,
}

impl ExperimentRecord {
    pub fn w_times_beta(&self) -> f64 {
        self.params as f64 * self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// 0-1 error.
    pub error: f64,
    pub ramp: f64,
}

/// 0-1 error and mean ramp loss over a dataset.
pub fn evaluate(
    params: &ParamSet,
    config: &NetworkConfig,
    data: &[Example],
    lambda: f64,
) -> Result<Evaluation> {
    if data.is_empty() {
        return Ok(Evaluation { error: 0.0, ramp: 0.0 });
    }
    let mut wrong = 0usize;
    let mut ramp = 0.0;
    for ex in data {
        let yhat = forward(params, config, &ex.x)?;
        if !predict(&yhat, ex.y) {
            wrong += 1;
        }
        ramp += ramp_loss(&yhat, ex.y, lambda)?;
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        error: wrong as f64 / n,
        ramp: ramp / n,
    })
}

fn unpool(g: &[f64], trace_size: usize, channels: usize, mode: Pooling, argmax: &[usize]) -> Vec<f64> {
    let d = trace_size;
    let c = channels;
    match mode {
        Pooling::None => g.to_vec(),
        Pooling::Average2x2 => {
            let h = d / 2;
            let mut out = vec![0.0; d * d * c];
            for p in 0..d {
                for q in 0..d {
                    for ch in 0..c {
                        out[(p * d + q) * c + ch] = g[((p / 2) * h + q / 2) * c + ch] / 2.0;
                    }
                }
            }
            out
        }
        Pooling::Max2x2 => {
            let mut out = vec![0.0; d * d * c];
            for (o, &src) in argmax.iter().enumerate() {
                out[src] += g[o];
            }
            out
        }
    }
}

/// Backpropagate an output cotangent through a recorded forward pass,
/// accumulating `scale` times the parameter gradient into `acc`.
fn backward(
    params: &ParamSet,
    config: &NetworkConfig,
    trace: &ForwardTrace,
    g_out: &[f64],
    scale: f64,
    acc: &mut ParamSet,
) -> Result<()> {
    let act = config.activation;
    let mut g: Vec<f64> = match (&params.readout, config.setting) {
        (Some(w), Setting::Basic) => w.iter().map(|wi| wi * g_out[0]).collect(),
        _ => g_out.to_vec(),
    };
    let n_fc = params.fc.len();
    for j in (0..n_fc).rev() {
        let t = &trace.fc[j];
        if j + 1 < n_fc {
            for (gi, &z) in g.iter_mut().zip(&t.pre_activation) {
                *gi *= act.derivative(z);
            }
        }
        let v = &params.fc[j];
        let gv = &mut acc.fc[j];
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            for (col, &xi) in t.input.iter().enumerate() {
                gv.add_at(r, col, scale * gr * xi);
            }
        }
        g = v.matvec_transposed(&g)?;
    }
    for i in (0..params.conv.len()).rev() {
        let t = &trace.conv[i];
        let k = &params.conv[i];
        let d = t.input_size;
        let mut gp = unpool(&g, d, k.out_channels(), config.conv[i].pooling, &t.pool_argmax);
        for (gi, &z) in gp.iter_mut().zip(&t.pre_activation) {
            *gi *= act.derivative(z);
        }
        let gk = circular_conv_kernel_grad(k.dims(), d, &t.input, &gp)?;
        for (a, b) in acc.conv[i].data_mut().iter_mut().zip(gk.data()) {
            *a += scale * b;
        }
        if i > 0 {
            g = circular_conv_adjoint(k, d, &gp)?;
        }
    }
    Ok(())
}

/// Gradient of the mean ramp loss over `batch` with respect to every
/// trainable parameter. The readout is not trainable and is left out.
pub fn grad(params: &ParamSet, config: &NetworkConfig, batch: &[Example], lambda: f64) -> Result<ParamSet> {
    grad_with(params, config, batch, lambda, Objective::Ramp)
}

/// [`grad`] for a chosen training objective.
pub fn grad_with(
    params: &ParamSet,
    config: &NetworkConfig,
    batch: &[Example],
    lambda: f64,
    objective: Objective,
) -> Result<ParamSet> {
    let mut acc = params.zeros_like();
    if batch.is_empty() {
        return Ok(acc);
    }
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let trace = forward_trace(params, config, &ex.x)?;
        let g_out = match objective {
            Objective::Ramp => ramp_loss_grad(&trace.output, ex.y, lambda)?,
            Objective::Hinge => hinge_loss_grad(&trace.output, ex.y, lambda)?,
        };
        if g_out.iter().all(|&v| v == 0.0) {
            continue;
        }
        backward(params, config, &trace, &g_out, scale, &mut acc)?;
    }
    if acc.trainable().any(|v| !v.is_finite()) {
        bail!(Numeric, "non-finite gradient");
    }
    Ok(acc)
}

/// Random initialization: Gaussian kernels rescaled to operator norm 1 and
/// fully connected layers with orthonormal rows or columns.
pub fn init_params(config: &NetworkConfig, rng: &mut SeededRng) -> Result<ParamSet> {
    config.validate()?;
    let sizes = config.conv_input_sizes();
    let mut conv = Vec::with_capacity(config.conv.len());
    for (dims, &d) in config.conv_dims().into_iter().zip(&sizes) {
        let k = RealTensor4::gaussian(dims, rng);
        let n = kernel_operator_norm(&k, d)?;
        if n == 0.0 {
            bail!(Numeric, "degenerate random kernel");
        }
        conv.push(k.scaled(1.0 / n));
    }
    let mut fc = Vec::with_capacity(config.fc_widths.len());
    for (rows, cols) in config.fc_shapes() {
        let m = if rows >= cols {
            orthonormal_columns(&RealMatrix::gaussian(rows, cols, rng))?
        } else {
            orthonormal_columns(&RealMatrix::gaussian(cols, rows, rng))?.transpose()
        };
        fc.push(m);
    }
    let readout = match config.setting {
        Setting::Basic => Some(config.readout.vector(config.flattened_dim())),
        Setting::General => None,
    };
    ParamSet::new(conv, sizes, fc, readout)
}

fn training_error(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(reason) => Error::Training { epoch, reason },
        other => other,
    }
}

/// Minibatch SGD from `initial`. Returns the final parameters and a record
/// whose width is the channel count of the last conv layer.
pub fn train(
    initial: &ParamSet,
    config: &NetworkConfig,
    train_config: &TrainConfig,
    train_data: &[Example],
    test_data: &[Example],
) -> Result<(ParamSet, ExperimentRecord)> {
    train_config.validate()?;
    config.check_params(initial)?;
    if train_data.is_empty() {
        bail!(Argument, "training set is empty");
    }
    match config.setting {
        Setting::Basic => InitPair::new(initial, initial)?.check_unit_init()?,
        Setting::General => InitPair::new(initial, initial)?.check_bounded_init(config.nu)?,
    }
    let lambda = train_config.lambda;
    let mut params = initial.clone();
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut rng = SeededRng::new(train_config.seed).split(1);
    let mut beta_trace = Vec::with_capacity(train_config.epochs);
    let mut loss_trace = Vec::with_capacity(train_config.epochs + 1);
    loss_trace.push(evaluate(&params, config, train_data, lambda)?.ramp);
    let mut batch = Vec::with_capacity(train_config.batch_size);
    for epoch in 0..train_config.epochs {
        rng.shuffle(&mut order);
        let lr = train_config.rate_at(epoch);
        for chunk in order.chunks(train_config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_data[i].clone()));
            let g = grad_with(&params, config, &batch, lambda, train_config.objective).map_err(|e| training_error(epoch, e))?;
            params.axpy(-lr, &g)?;
        }
        let ev = evaluate(&params, config, train_data, lambda).map_err(|e| training_error(epoch, e))?;
        if !ev.ramp.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: "training loss is not finite".into(),
            });
        }
        loss_trace.push(ev.ramp);
        beta_trace.push(sigma_dist(&InitPair::new(&params, initial)?)?);
    }
    let tr = evaluate(&params, config, train_data, lambda)?;
    let te = evaluate(&params, config, test_data, lambda)?;
    let record = ExperimentRecord {
        width: config.conv.last().map_or(config.input_channels, |l| l.out_channels),
        params: config.trainable_params(),
        seed: train_config.seed,
        train_error: tr.error,
        test_error: te.error,
        gap: te.error - tr.error,
        beta: beta_trace.last().copied().unwrap_or(0.0),
        beta_trace,
        loss_trace,
        train_ramp: tr.ramp,
        test_ramp: te.ramp,
    };
    Ok((params, record))
}

/// Shape of the synthetic two-class task.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaskSpec {
    pub channels: usize,
    /// Standard deviation of per-coordinate noise relative to a unit template.
    pub noise: f64,
    /// Fraction of labels flipped after sampling.
    pub label_flip: f64,
    /// Share of each template's energy in a constant offset whose sign
    /// differs between the classes.
    pub offset: f64,
    pub chi: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            channels: 1,
            noise: 0.25,
            label_flip: 0.0,
            offset: 0.5,
            chi: 1.0,
        }
    }
}

/// Smooth `d x d x c` template from a few low-frequency cosines, scaled to norm `chi`.
fn smooth_template(d: usize, c: usize, chi: f64, rng: &mut SeededRng) -> Vec<f64> {
    let mut t = vec![0.0; d * d * c];
    let tau = 2.0 * core::f64::consts::PI / d as f64;
    for _ in 0..4 {
        let fu = rng.below(3) as f64;
        let fv = rng.below(3) as f64;
        let phase = rng.uniform_in(0.0, 2.0 * core::f64::consts::PI);
        let amp: Vec<f64> = (0..c).map(|_| rng.gaussian()).collect();
        for p in 0..d {
            for q in 0..d {
                let s = libm::cos(tau * (fu * p as f64 + fv * q as f64) + phase);
                for (ch, a) in amp.iter().enumerate() {
                    t[(p * d + q) * c + ch] += a * s;
                }
            }
        }
    }
    let n = euclidean_norm(&t);
    t.iter_mut().for_each(|v| *v *= chi / n);
    t
}

/// Two smooth random class templates, offset in opposite directions, plus
/// Gaussian noise; labels alternate
/// `+1, -1` so the classes are balanced, and every input has norm `chi`.
pub fn synth_dataset(seed: u64, n: usize, d: usize, task: &TaskSpec) -> Result<Vec<Example>> {
    if n < 2 {
        bail!(Argument, "synthetic dataset needs at least 2 examples");
    }
    if d == 0 || task.channels == 0 || !(task.chi > 0.0) || !(0.0..=1.0).contains(&task.label_flip) {
        bail!(Argument, "invalid synthetic task");
    }
    let root = SeededRng::new(seed);
    let mut trng = root.split(0);
    if !(0.0..=1.0).contains(&task.offset) {
        bail!(Argument, "offset share must lie in [0, 1]");
    }
    let dim = d * d * task.channels;
    let dc = task.chi * libm::sqrt(task.offset / dim as f64);
    let wave = libm::sqrt(1.0 - task.offset);
    let templates: Vec<Vec<f64>> = [1.0, -1.0]
        .iter()
        .map(|sign| {
            let mut t = smooth_template(d, task.channels, task.chi, &mut trng);
            t.iter_mut().for_each(|v| *v = wave * *v + sign * dc);
            let n = euclidean_norm(&t);
            t.iter_mut().for_each(|v| *v *= task.chi / n);
            t
        })
        .collect();
    let mut rng = root.split(1);
    let sd = task.noise * task.chi / libm::sqrt(dim as f64);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let cls = i % 2;
        let mut x = templates[cls].clone();
        if task.noise > 0.0 {
            for v in &mut x {
                *v += sd * rng.gaussian();
            }
            let nx = euclidean_norm(&x);
            x.iter_mut().for_each(|v| *v *= task.chi / nx);
        }
        let mut y: i8 = if cls == 0 { 1 } else { -1 };
        if task.label_flip > 0.0 && rng.uniform() < task.label_flip {
            y = -y;
        }
        out.push(Example { x, y: Label::Binary(y) });
    }
    Ok(out)
}

/// Zero-pad the channel axis of every input up to `channels`.
pub fn embed_channels(data: &[Example], size: usize, channels: usize) -> Result<Vec<Example>> {
    data.iter()
        .map(|ex| {
            let px = size * size;
            if ex.x.len() % px != 0 {
                bail!(Dimension, "input of length {} is not a {size}x{size} map", ex.x.len());
            }
            let c0 = ex.x.len() / px;
            if c0 > channels {
                bail!(Dimension, "cannot embed {c0} channels into {channels}");
            }
            let mut x = vec![0.0; px * channels];
            for p in 0..px {
                x[p * channels..p * channels + c0].copy_from_slice(&ex.x[p * c0..(p + 1) * c0]);
            }
            Ok(Example { x, y: ex.y })
        })
        .collect()
}

/// Architecture shared by every run of a width sweep (basic setting).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepSpec {
    pub input_size: usize,
    pub depth: usize,
    pub kernel_size: usize,
    pub activation: Activation,
    pub readout: Readout,
    pub seeds: Vec<u64>,
}

/// Train one basic-setting network per `(width, seed)`. Inputs are embedded
/// into `width` channels; records come back sorted by width, then seed.
pub fn run_experiment(
    sweep: &SweepSpec,
    train_config: &TrainConfig,
    train_data: &[Example],
    test_data: &[Example],
) -> Result<Vec<ExperimentRecord>> {
    if train_config.widths.is_empty() || sweep.seeds.is_empty() {
        bail!(Argument, "sweep needs at least one width and one seed");
    }
    let mut records = Vec::new();
    for &c in &train_config.widths {
        for &seed in &sweep.seeds {
            records.push(run_single(sweep, train_config, c, seed, train_data, test_data)?);
        }
    }
    Ok(records)
}

/// One cell of a width sweep.
pub fn run_single(
    sweep: &SweepSpec,
    train_config: &TrainConfig,
    width: usize,
    seed: u64,
    train_data: &[Example],
    test_data: &[Example],
) -> Result<ExperimentRecord> {
    let config = NetworkConfig::basic(sweep.input_size, width, sweep.kernel_size, sweep.depth, sweep.activation)
        .with_readout(sweep.readout)
        .with_lambda(train_config.lambda);
    let tr = embed_channels(train_data, sweep.input_size, width)?;
    let te = embed_channels(test_data, sweep.input_size, width)?;
    let mut rng = SeededRng::new(seed).split(0);
    let init = init_params(&config, &mut rng)?;
    let tc = TrainConfig {
        seed,
        ..train_config.clone()
    };
    Ok(train(&init, &config, &tc, &tr, &te)?.1)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        bail!(Argument, "spearman needs two equal-length samples of size >= 2");
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / libm::sqrt(saa * sbb))
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}

/// Per-width medians of beta, in ascending width order.
pub fn median_beta_by_width(records: &[ExperimentRecord]) -> Vec<(usize, f64)> {
    let mut widths: Vec<usize> = records.iter().map(|r| r.width).collect();
    widths.sort_unstable();
    widths.dedup();
    widths
        .into_iter()
        .map(|w| {
            let b: Vec<f64> = records.iter().filter(|r| r.width == w).map(|r| r.beta).collect();
            (w, median(&b).unwrap_or(0.0))
        })
        .collect()
}
