//! Numerical audits of the Lipschitz lemmas, the covering construction and
//! the sample-size rate of the uniform deviation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::convspec::{kernel_operator_norm, materialize_operator, operator_norm_fft, ConvLayerSpec};
use crate::linalg::singular_values;
use crate::error::{bail, Result};
use crate::network::{
    effective_lambda, forward, forward_trace, margin, ramp_loss, Activation, ConvLayerConfig, Example, Label,
    NetworkConfig, Pooling, Readout, Setting,
};
use crate::norms::ParamSet;
use crate::rng::SeededRng;
use crate::tensor::{euclidean_norm, spectral_norm, RealMatrix, RealTensor4};

/// Ratios above `1 + RATIO_TOL` count as violations.
pub const RATIO_TOL: f64 = 1e-9;
/// Trials whose bound is below this are skipped as 0/0.
pub const DENOM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LipschitzTrialReport {
    pub suite: String,
    pub trials: usize,
    /// Largest observed loss difference divided by the claimed bound.
    pub max_ratio: f64,
    /// Stream index of the trial attaining `max_ratio`.
    pub worst_trial: u64,
    pub violations: usize,
    /// Trials with a vanishing bound.
    pub skipped: usize,
    /// Ratio of the hand-built near-tight instance.
    pub constructed_ratio: f64,
    /// Failures of the auxiliary audits (norm chain, hybrid path).
    pub audit_failures: usize,
}

impl LipschitzTrialReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.into(),
            trials: 0,
            max_ratio: 0.0,
            worst_trial: 0,
            violations: 0,
            skipped: 0,
            constructed_ratio: 0.0,
            audit_failures: 0,
        }
    }

    fn record(&mut self, lhs: f64, rhs: f64, trial: u64) {
        self.trials += 1;
        if rhs < DENOM_FLOOR {
            if lhs > DENOM_FLOOR {
                self.violations += 1;
            }
            self.skipped += 1;
            return;
        }
        let r = lhs / rhs;
        if r > self.max_ratio {
            self.max_ratio = r;
            self.worst_trial = trial;
        }
        if r > 1.0 + RATIO_TOL {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.audit_failures == 0
    }
}

fn loss(params: &ParamSet, config: &NetworkConfig, x: &[f64], y: Label) -> Result<f64> {
    ramp_loss(&forward(params, config, x)?, y, config.lambda)
}

/// Layer budgets summing to `beta * t`, with `t = 1` half of the time so the
/// constraint surface is exercised.
fn budgets(beta: f64, layers: usize, rng: &mut SeededRng) -> Vec<f64> {
    let t = if rng.uniform() < 0.5 { 1.0 } else { rng.uniform() };
    rng.simplex(layers).into_iter().map(|s| beta * t * s).collect()
}

fn conv_direction(dims: [usize; 4], d: usize, norm: f64, rng: &mut SeededRng) -> Result<RealTensor4> {
    let k = RealTensor4::gaussian(dims, rng);
    let n = kernel_operator_norm(&k, d)?;
    if n == 0.0 {
        bail!(Internal, "degenerate random kernel");
    }
    Ok(k.scaled(norm / n))
}

fn fc_direction(rows: usize, cols: usize, norm: f64, rng: &mut SeededRng) -> Result<RealMatrix> {
    let m = RealMatrix::gaussian(rows, cols, rng);
    let n = spectral_norm(&m)?;
    if n == 0.0 {
        bail!(Internal, "degenerate random matrix");
    }
    Ok(m.scaled(norm / n))
}

fn random_input(dim: usize, chi: f64, rng: &mut SeededRng) -> Vec<f64> {
    let mut x = rng.gaussian_vec(dim);
    let n = euclidean_norm(&x);
    let r = chi * rng.uniform_in(0.05, 1.0) / n;
    x.iter_mut().for_each(|v| *v *= r);
    x
}

fn random_label(config: &NetworkConfig, rng: &mut SeededRng) -> Label {
    let m = config.output_dim();
    if m == 1 {
        Label::Binary(if rng.uniform() < 0.5 { 1 } else { -1 })
    } else {
        Label::Class(rng.below(m))
    }
}

/// Per-layer distances from `init`: operator norms for conv layers,
/// spectral norms for fc layers, in layer order.
fn layer_distances(a: &ParamSet, b: &ParamSet) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(a.conv.len() + a.fc.len());
    for ((ka, kb), &d) in a.conv.iter().zip(&b.conv).zip(&a.conv_input_sizes) {
        out.push(kernel_operator_norm(&ka.try_sub(kb)?, d)?);
    }
    for (va, vb) in a.fc.iter().zip(&b.fc) {
        out.push(spectral_norm(&va.try_sub(vb)?)?);
    }
    Ok(out)
}

fn check_ball(p: &ParamSet, init: &ParamSet, beta: f64) -> Result<f64> {
    let dist: f64 = layer_distances(p, init)?.iter().sum();
    if dist > beta * (1.0 + 1e-9) + 1e-12 {
        bail!(Internal, "sampler left the distance ball: {dist} > {beta}");
    }
    Ok(dist)
}

/// Random point of the ball around `init`, plus its layer budgets.
fn sample_in_ball(init: &ParamSet, beta: f64, rng: &mut SeededRng) -> Result<(ParamSet, Vec<f64>)> {
    let layers = init.conv.len() + init.fc.len();
    let b = budgets(beta, layers, rng);
    let mut p = init.clone();
    for (i, (k, &d)) in p.conv.iter_mut().zip(&init.conv_input_sizes).enumerate() {
        *k = k.try_add(&conv_direction(k.dims(), d, b[i], rng)?)?;
    }
    let lc = init.conv.len();
    for (i, v) in p.fc.iter_mut().enumerate() {
        *v = v.try_add(&fc_direction(v.rows(), v.cols(), b[lc + i], rng)?)?;
    }
    check_ball(&p, init, beta)?;
    Ok((p, b))
}

/// Replace layer `j` of `p` by another point at distance at most
/// `slack` from the initial layer; returns the new set and the layer change.
fn resample_layer(
    p: &ParamSet,
    init: &ParamSet,
    j: usize,
    slack: f64,
    rng: &mut SeededRng,
) -> Result<(ParamSet, f64)> {
    let mut q = p.clone();
    let r = slack * rng.uniform();
    let lc = p.conv.len();
    let change = if j < lc {
        let d = init.conv_input_sizes[j];
        q.conv[j] = init.conv[j].try_add(&conv_direction(init.conv[j].dims(), d, r, rng)?)?;
        kernel_operator_norm(&q.conv[j].try_sub(&p.conv[j])?, d)?
    } else {
        let f = j - lc;
        let v = &init.fc[f];
        q.fc[f] = v.try_add(&fc_direction(v.rows(), v.cols(), r, rng)?)?;
        spectral_norm(&q.fc[f].try_sub(&p.fc[f])?)?
    };
    Ok((q, change))
}

fn basic_init(config: &NetworkConfig, rng: &mut SeededRng) -> Result<ParamSet> {
    crate::train::init_params(config, rng)
}

fn require_basic(config: &NetworkConfig, beta: f64) -> Result<()> {
    config.validate()?;
    if config.setting != Setting::Basic {
        bail!(Argument, "this audit needs the basic setting");
    }
    if !(beta > 0.0 && beta.is_finite()) {
        bail!(Argument, "beta must be positive, got {beta}");
    }
    Ok(())
}

/// Identity network with every layer the delta kernel, ReLU and an all-ones
/// readout, at loss parameter 1.
fn identity_basic(config: &NetworkConfig) -> Result<(NetworkConfig, ParamSet)> {
    let c = config.input_channels;
    let k = config.conv[0].kernel_size;
    let cfg = NetworkConfig::basic(config.input_size, c, k, config.conv.len(), Activation::Relu);
    let p = ParamSet::new(
        vec![RealTensor4::delta_identity(k, c); config.conv.len()],
        cfg.conv_input_sizes(),
        vec![],
        Some(Readout::Ones.vector(cfg.flattened_dim())),
    )?;
    Ok((cfg, p))
}

/// Near-tight instance for the single-layer bound: identity kernels, input
/// equal to the readout, one layer shrunk to `(1 - s) I` with `s = min(beta, 1)`.
/// The ratio is `exp(-beta)`.
pub fn constructed_single_layer(config: &NetworkConfig, beta: f64) -> Result<f64> {
    require_basic(config, beta)?;
    let (cfg, k0) = identity_basic(config)?;
    let s = beta.min(1.0);
    let x = k0.readout.clone().unwrap_or_default();
    let j = cfg.conv.len() - 1;
    let mut kt = k0.clone();
    kt.conv[j] = k0.conv[j].scaled(1.0 - s);
    check_ball(&kt, &k0, beta)?;
    let y = Label::Binary(1);
    let lhs = (loss(&k0, &cfg, &x, y)? - loss(&kt, &cfg, &x, y)?).abs();
    let rhs = cfg.lambda * libm::exp(beta) * kernel_operator_norm(&k0.conv[j].try_sub(&kt.conv[j])?, cfg.input_size)?;
    Ok(lhs / rhs)
}

/// Near-tight instance for the all-layer bound: every layer shrunk to
/// `(1 - s / L) I`.
pub fn constructed_all_layers(config: &NetworkConfig, beta: f64) -> Result<f64> {
    require_basic(config, beta)?;
    let (cfg, k0) = identity_basic(config)?;
    let l = cfg.conv.len() as f64;
    let s = beta.min(1.0);
    let x = k0.readout.clone().unwrap_or_default();
    let mut kt = k0.clone();
    for k in &mut kt.conv {
        *k = k.scaled(1.0 - s / l);
    }
    let dist = check_ball(&kt, &k0, beta)?;
    let y = Label::Binary(1);
    let lhs = (loss(&k0, &cfg, &x, y)? - loss(&kt, &cfg, &x, y)?).abs();
    Ok(lhs / (cfg.lambda * libm::exp(beta) * dist))
}

/// Audit of `|l(f_K(x), y) - l(f_K~(x), y)| <= lambda e^beta |op(K_j) - op(K~_j)|`
/// for pairs in the ball that differ in one layer.
pub fn verify_single_layer(config: &NetworkConfig, beta: f64, trials: usize, seed: u64) -> Result<LipschitzTrialReport> {
    require_basic(config, beta)?;
    let root = SeededRng::new(seed);
    let mut report = LipschitzTrialReport::new("single-layer");
    let factor = config.lambda * libm::exp(beta);
    for t in 0..trials as u64 {
        let mut rng = root.split(t);
        let init = basic_init(config, &mut rng)?;
        let (k, b) = sample_in_ball(&init, beta, &mut rng)?;
        let j = rng.below(k.conv.len());
        let used: f64 = b.iter().sum();
        let (kt, change) = resample_layer(&k, &init, j, b[j] + (beta - used).max(0.0), &mut rng)?;
        check_ball(&kt, &init, beta)?;
        let x = random_input(config.input_dim(), config.chi, &mut rng);
        let y = random_label(config, &mut rng);
        let lhs = (loss(&k, config, &x, y)? - loss(&kt, config, &x, y)?).abs();
        report.record(lhs, factor * change, t);
    }
    report.constructed_ratio = constructed_single_layer(config, beta)?;
    Ok(report)
}

/// Audit of `|l(f_K(x), y) - l(f_K~(x), y)| <= lambda e^beta |K - K~|_sigma`
/// for independent pairs in the ball. Also replays the one-layer-at-a-time
/// path and checks that its step sum dominates the total change.
pub fn verify_all_layers(config: &NetworkConfig, beta: f64, trials: usize, seed: u64) -> Result<LipschitzTrialReport> {
    require_basic(config, beta)?;
    let root = SeededRng::new(seed);
    let mut report = LipschitzTrialReport::new("all-layers");
    let factor = config.lambda * libm::exp(beta);
    for t in 0..trials as u64 {
        let mut rng = root.split(t);
        let init = basic_init(config, &mut rng)?;
        let (k, _) = sample_in_ball(&init, beta, &mut rng)?;
        let (kt, _) = sample_in_ball(&init, beta, &mut rng)?;
        let x = random_input(config.input_dim(), config.chi, &mut rng);
        let y = random_label(config, &mut rng);
        let l0 = loss(&k, config, &x, y)?;
        let l1 = loss(&kt, config, &x, y)?;
        let dist: f64 = layer_distances(&k, &kt)?.iter().sum();
        report.record((l0 - l1).abs(), factor * dist, t);
        let mut hybrid = k.clone();
        let mut prev = l0;
        let mut path = 0.0;
        for j in 0..k.conv.len() {
            hybrid.conv[j] = kt.conv[j].clone();
            let cur = loss(&hybrid, config, &x, y)?;
            path += (cur - prev).abs();
            prev = cur;
        }
        if path + 1e-12 < (l0 - l1).abs() {
            report.audit_failures += 1;
        }
    }
    report.constructed_ratio = constructed_all_layers(config, beta)?;
    Ok(report)
}

fn require_general(config: &NetworkConfig, beta: f64) -> Result<()> {
    config.validate()?;
    if config.setting != Setting::General {
        bail!(Argument, "this audit needs the general setting");
    }
    if config.fc_widths.is_empty() || config.conv.is_empty() {
        bail!(Argument, "general audit needs at least one conv and one fc layer");
    }
    if !(beta > 0.0 && beta.is_finite()) {
        bail!(Argument, "beta must be positive, got {beta}");
    }
    Ok(())
}

/// Initial parameters with every layer norm in `[(1 + nu) / 2, 1 + nu]`.
fn general_init(config: &NetworkConfig, rng: &mut SeededRng) -> Result<ParamSet> {
    let top = 1.0 + config.nu;
    let sizes = config.conv_input_sizes();
    let mut conv = Vec::new();
    for (dims, &d) in config.conv_dims().into_iter().zip(&sizes) {
        let r = top * rng.uniform_in(0.5, 1.0);
        conv.push(conv_direction(dims, d, r, rng)?);
    }
    let mut fc = Vec::new();
    for (rows, cols) in config.fc_shapes() {
        let r = top * rng.uniform_in(0.5, 1.0);
        fc.push(fc_direction(rows, cols, r, rng)?);
    }
    ParamSet::new(conv, sizes, fc, None)
}

/// Layerwise check of `|u| <= chi prod |op(K_i)| prod |V_i|` on the inputs
/// of every layer.
fn norm_chain_holds(p: &ParamSet, config: &NetworkConfig, x: &[f64]) -> Result<bool> {
    let trace = forward_trace(p, config, x)?;
    let mut cap = config.chi;
    let slack = 1.0 + 1e-9;
    for (t, (k, &d)) in trace.conv.iter().zip(p.conv.iter().zip(&p.conv_input_sizes)) {
        if euclidean_norm(&t.input) > cap * slack + 1e-12 {
            return Ok(false);
        }
        cap *= kernel_operator_norm(k, d)?;
    }
    for (t, v) in trace.fc.iter().zip(&p.fc) {
        if euclidean_norm(&t.input) > cap * slack + 1e-12 {
            return Ok(false);
        }
        cap *= spectral_norm(v)?;
    }
    Ok(euclidean_norm(&trace.output) <= cap * slack + 1e-12)
}

/// Results of the three general-setting audits.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeneralReports {
    pub conv_layer: LipschitzTrialReport,
    pub fc_layer: LipschitzTrialReport,
    pub full: LipschitzTrialReport,
}

/// Near-tight instances for the general audits: two channels, identity-like
/// layers `a I` with `a = 1 + nu + beta / L`, initialization `(1 + nu) I`, an
/// input split over two channels of one pixel and a final row that cancels
/// them. Shrinking one channel of one layer moves the output at rate
/// `chi a^(L-1) / 2`, so each ratio is `1 / (2a)`.
pub fn constructed_general(config: &NetworkConfig, beta: f64) -> Result<[f64; 3]> {
    require_general(config, beta)?;
    let d = config.input_size;
    let c = 2;
    let lc = config.conv.len();
    let lf = config.fc_widths.len();
    let depth = (lc + lf) as f64;
    let nu = config.nu;
    let a = 1.0 + nu + beta / depth;
    let dim = d * d * c;
    let cfg = NetworkConfig {
        setting: Setting::General,
        input_size: d,
        input_channels: c,
        conv: vec![
            ConvLayerConfig {
                out_channels: c,
                kernel_size: 1,
                pooling: Pooling::None,
            };
            lc
        ],
        fc_widths: {
            let mut w = vec![dim; lf - 1];
            w.push(1);
            w
        },
        activation: Activation::Relu,
        readout: Readout::Ones,
        chi: config.chi,
        nu,
        lambda: config.lambda,
        loss_range: config.loss_range,
    };
    let r = core::f64::consts::FRAC_1_SQRT_2;
    let last = |scale: f64| RealMatrix::from_fn(1, dim, |_, j| match j {
        0 => scale * r,
        1 => -scale * r,
        _ => 0.0,
    });
    let build = |scale: f64| -> Result<ParamSet> {
        let mut fc = vec![RealMatrix::identity(dim).scaled(scale); lf - 1];
        fc.push(last(scale));
        ParamSet::new(
            vec![RealTensor4::delta_identity(1, c).scaled(scale); lc],
            cfg.conv_input_sizes(),
            fc,
            None,
        )
    };
    let init = build(1.0 + nu)?;
    let theta = build(a)?;
    let mut x = vec![0.0; dim];
    x[0] = config.chi * r;
    x[1] = config.chi * r;
    let lam = effective_lambda(cfg.lambda, 1);
    let s = 0.5 * (beta / depth).min(1.0 / (lam * config.chi * libm::pow(a, depth - 1.0)));
    let y = Label::Binary(-1);
    let factor = config.chi * lam * libm::pow(a, depth);
    let base = loss(&theta, &cfg, &x, y)?;

    let mut conv_t = theta.clone();
    let v = conv_t.conv[0].get(0, 0, 0, 0);
    conv_t.conv[0].set(0, 0, 0, 0, v - s);
    check_ball(&conv_t, &init, beta)?;
    let conv_ratio = (base - loss(&conv_t, &cfg, &x, y)?).abs() / (factor * s);

    let mut fc_t = theta.clone();
    fc_t.fc[0].add_at(0, 0, -s);
    check_ball(&fc_t, &init, beta)?;
    let fc_ratio = (base - loss(&fc_t, &cfg, &x, y)?).abs() / (factor * s);

    let full_dist: f64 = layer_distances(&theta, &conv_t)?.iter().sum();
    let full_ratio = (base - loss(&conv_t, &cfg, &x, y)?).abs() / (factor * full_dist);
    Ok([conv_ratio, fc_ratio, full_ratio])
}

/// Audits of the general-setting bounds: one conv layer changed, one fc layer
/// changed, and everything changed against the N distance. The loss constant
/// is the effective one for the output dimension.
pub fn verify_general(config: &NetworkConfig, beta: f64, trials: usize, seed: u64) -> Result<GeneralReports> {
    require_general(config, beta)?;
    let depth = config.depth();
    let lam = effective_lambda(config.lambda, config.output_dim());
    let factor = config.chi * lam * libm::exp(depth as f64 * libm::log1p(config.nu + beta / depth as f64));
    let root = SeededRng::new(seed);
    let mut conv_r = LipschitzTrialReport::new("general-conv-layer");
    let mut fc_r = LipschitzTrialReport::new("general-fc-layer");
    let mut full_r = LipschitzTrialReport::new("general-all-layers");
    let lc = config.conv.len();
    for t in 0..trials as u64 {
        let mut rng = root.split(t);
        let init = general_init(config, &mut rng)?;
        let (theta, b) = sample_in_ball(&init, beta, &mut rng)?;
        let slack = (beta - b.iter().sum::<f64>()).max(0.0);
        let x = random_input(config.input_dim(), config.chi, &mut rng);
        let y = random_label(config, &mut rng);
        let base = loss(&theta, config, &x, y)?;
        if !norm_chain_holds(&theta, config, &x)? {
            full_r.audit_failures += 1;
        }

        let j = rng.below(lc);
        let (tc, change) = resample_layer(&theta, &init, j, b[j] + slack, &mut rng)?;
        check_ball(&tc, &init, beta)?;
        conv_r.record((base - loss(&tc, config, &x, y)?).abs(), factor * change, t);

        let j = lc + rng.below(config.fc_widths.len());
        let (tf, change) = resample_layer(&theta, &init, j, b[j] + slack, &mut rng)?;
        check_ball(&tf, &init, beta)?;
        fc_r.record((base - loss(&tf, config, &x, y)?).abs(), factor * change, t);

        let (other, _) = sample_in_ball(&init, beta, &mut rng)?;
        let dist: f64 = layer_distances(&theta, &other)?.iter().sum();
        full_r.record((base - loss(&other, config, &x, y)?).abs(), factor * dist, t);
    }
    let [a, b, c] = constructed_general(config, beta)?;
    conv_r.constructed_ratio = a;
    fc_r.constructed_ratio = b;
    full_r.constructed_ratio = c;
    Ok(GeneralReports {
        conv_layer: conv_r,
        fc_layer: fc_r,
        full: full_r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NormKind {
    L2,
    Linf,
}

impl NormKind {
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            NormKind::L2 => libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
            NormKind::Linf => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }

    pub fn norm(self, a: &[f64]) -> f64 {
        match self {
            NormKind::L2 => euclidean_norm(a),
            NormKind::Linf => a.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Largest distance from a point of the space to the nearest node of a
    /// grid with spacing `h`.
    fn grid_gap(self, h: f64, dim: usize) -> f64 {
        match self {
            NormKind::L2 => h * libm::sqrt(dim as f64) / 2.0,
            NormKind::Linf => h / 2.0,
        }
    }
}

/// Centers of a cover of the `radius`-ball by `eps`-balls, both in `norm`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    pub dim: usize,
    pub radius: f64,
    pub eps: f64,
    pub norm: NormKind,
    pub centers: Vec<Vec<f64>>,
    /// Separation used by the greedy packing; every pair of centers is
    /// farther apart than this.
    pub packing_threshold: f64,
}

type Cell = [i64; 3];

fn cell_of(p: &[f64], size: f64) -> Cell {
    let mut c = [0i64; 3];
    for (ci, x) in c.iter_mut().zip(p) {
        *ci = libm::floor(x / size) as i64;
    }
    c
}

struct CenterIndex {
    size: f64,
    cells: BTreeMap<Cell, Vec<usize>>,
}

impl CenterIndex {
    fn nearest_within(&self, p: &[f64], centers: &[Vec<f64>], norm: NormKind, r: f64) -> bool {
        let reach = libm::floor(r / self.size) as i64 + 1;
        let home = cell_of(p, self.size);
        let dim = p.len();
        let span = 2 * reach + 1;
        let total = span.pow(dim as u32);
        for code in 0..total {
            let mut key = home;
            let mut c = code;
            for k in key.iter_mut().take(dim) {
                *k += c % span - reach;
                c /= span;
            }
            if let Some(list) = self.cells.get(&key) {
                if list.iter().any(|&i| norm.dist(&centers[i], p) <= r) {
                    return true;
                }
            }
        }
        false
    }
}

/// Greedy maximal packing over a grid of spacing `eps / 8`, with candidates
/// projected into the ball and visited in order of increasing norm. Packing
/// at `eps - g`, where `g` bounds the distance from any point of the ball to
/// its nearest candidate, makes the centers an `eps`-cover of the whole ball.
pub fn build_cover(radius: f64, eps: f64, dim: usize, norm: NormKind) -> Result<Cover> {
    if !(1..=3).contains(&dim) {
        bail!(Argument, "cover construction supports dimensions 1 to 3, got {dim}");
    }
    if !(radius > 0.0 && eps > 0.0 && radius.is_finite() && eps.is_finite()) {
        bail!(Argument, "radius and eps must be positive");
    }
    if radius <= eps {
        return Ok(Cover {
            dim,
            radius,
            eps,
            norm,
            centers: vec![vec![0.0; dim]],
            packing_threshold: eps,
        });
    }
    let h = eps / 8.0;
    let threshold = eps - norm.grid_gap(h, dim);
    let steps = libm::ceil(radius / h) as i64;
    let side = (2 * steps + 1) as usize;
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(side.pow(dim as u32));
    for code in 0..side.pow(dim as u32) {
        let mut c = code;
        let mut p = Vec::with_capacity(dim);
        for _ in 0..dim {
            p.push(((c % side) as i64 - steps) as f64 * h);
            c /= side;
        }
        let n = norm.norm(&p);
        if n > radius {
            match norm {
                NormKind::L2 => p.iter_mut().for_each(|x| *x *= radius / n),
                NormKind::Linf => p.iter_mut().for_each(|x| *x = x.clamp(-radius, radius)),
            }
        }
        candidates.push(p);
    }
    candidates.sort_by(|a, b| {
        norm.norm(a)
            .total_cmp(&norm.norm(b))
            .then_with(|| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal))
    });
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut index = CenterIndex {
        size: threshold,
        cells: BTreeMap::new(),
    };
    for p in candidates {
        if !index.nearest_within(&p, &centers, norm, threshold) {
            index.cells.entry(cell_of(&p, threshold)).or_default().push(centers.len());
            centers.push(p);
        }
    }
    Ok(Cover {
        dim,
        radius,
        eps,
        norm,
        centers,
        packing_threshold: threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoverReport {
    pub dim: usize,
    pub radius: f64,
    pub eps: f64,
    pub norm: NormKind,
    pub cover_size: usize,
    /// `(3 radius / eps)^d`.
    pub bound: f64,
    /// Volumetric lower bound `(radius / eps)^d`.
    pub lower_bound: f64,
    pub sampled: usize,
    pub uncovered: usize,
    pub packing_threshold: f64,
    /// Smallest distance between two centers (infinite for one center).
    pub min_separation: f64,
}

impl CoverReport {
    pub fn passed(&self) -> bool {
        self.uncovered == 0
            && (self.cover_size as f64) <= self.bound
            && (self.cover_size as f64) >= self.lower_bound * (1.0 - 1e-12)
            && self.min_separation > self.packing_threshold
    }
}

fn sample_ball(dim: usize, radius: f64, norm: NormKind, rng: &mut SeededRng) -> Vec<f64> {
    match norm {
        NormKind::Linf => (0..dim).map(|_| rng.uniform_in(-radius, radius)).collect(),
        NormKind::L2 => {
            let mut g = rng.gaussian_vec(dim);
            let n = euclidean_norm(&g);
            let r = radius * libm::pow(rng.uniform(), 1.0 / dim as f64) / n;
            g.iter_mut().for_each(|x| *x *= r);
            g
        }
    }
}

/// Build a cover and check it against uniform samples from the ball. A
/// pass is probabilistic evidence; an uncovered sample certifies a defect.
pub fn verify_cover(radius: f64, eps: f64, dim: usize, norm: NormKind, samples: usize, seed: u64) -> Result<CoverReport> {
    let cover = build_cover(radius, eps, dim, norm)?;
    let index = {
        let mut cells: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
        for (i, c) in cover.centers.iter().enumerate() {
            cells.entry(cell_of(c, cover.packing_threshold)).or_default().push(i);
        }
        CenterIndex {
            size: cover.packing_threshold,
            cells,
        }
    };
    let mut rng = SeededRng::new(seed);
    let mut uncovered = 0;
    for _ in 0..samples {
        let p = sample_ball(dim, radius, norm, &mut rng);
        if !index.nearest_within(&p, &cover.centers, norm, eps) {
            uncovered += 1;
        }
    }
    let mut min_sep = f64::INFINITY;
    for (i, a) in cover.centers.iter().enumerate() {
        for b in &cover.centers[i + 1..] {
            min_sep = min_sep.min(norm.dist(a, b));
        }
    }
    Ok(CoverReport {
        dim,
        radius,
        eps,
        norm,
        cover_size: cover.centers.len(),
        bound: crate::bounds::covering_bound(radius, dim, eps),
        lower_bound: libm::pow(radius / eps, dim as f64),
        sampled: samples,
        uncovered,
        packing_threshold: cover.packing_threshold,
        min_separation: min_sep,
    })
}

/// One-parameter classes on `z ~ U[0, 1]` with exactly known means.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GapClass {
    /// `g_t(z) = clamp(z - t, 0, 1)` for `t` in `[-1, 1]`: a `(1, 1)`-Lipschitz
    /// parameterized class with range `[0, 1]`.
    Ramp,
    /// Every member is this constant.
    Constant(f64),
}

impl GapClass {
    fn value(self, t: f64, z: f64) -> f64 {
        match self {
            GapClass::Ramp => (z - t).clamp(0.0, 1.0),
            GapClass::Constant(c) => c,
        }
    }

    fn mean(self, t: f64) -> f64 {
        match self {
            GapClass::Ramp if t >= 0.0 => (1.0 - t) * (1.0 - t) / 2.0,
            GapClass::Ramp => (1.0 - t * t) / 2.0 - t,
            GapClass::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GapRateReport {
    pub sample_sizes: Vec<usize>,
    /// Mean over repetitions of the sup over the parameter grid of
    /// `E_P[g] - E_S[g]`.
    pub mean_sup_gap: Vec<f64>,
    /// Least-squares slope of `log gap` against `log n`; absent when a gap is
    /// not positive.
    pub slope: Option<f64>,
}

/// Monte-Carlo estimate of how the worst-case deviation over a class shrinks with `n`.
pub fn mc_gap_rate(class: GapClass, sample_sizes: &[usize], grid: usize, repetitions: usize, seed: u64) -> Result<GapRateReport> {
    if sample_sizes.len() < 2 || sample_sizes.contains(&0) || grid < 2 || repetitions == 0 {
        bail!(Argument, "need >= 2 positive sample sizes, a grid of >= 2 points and >= 1 repetition");
    }
    if let GapClass::Constant(c) = class {
        if !c.is_finite() {
            bail!(Argument, "constant class needs a finite value");
        }
    }
    let thetas: Vec<f64> = (0..grid).map(|i| -1.0 + 2.0 * i as f64 / (grid - 1) as f64).collect();
    let means: Vec<f64> = thetas.iter().map(|&t| class.mean(t)).collect();
    let root = SeededRng::new(seed);
    let mut gaps = Vec::with_capacity(sample_sizes.len());
    for (si, &n) in sample_sizes.iter().enumerate() {
        let mut acc = 0.0;
        for r in 0..repetitions {
            let mut rng = root.split((si * repetitions + r) as u64);
            let zs: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let mut sup = f64::NEG_INFINITY;
            for (&t, &m) in thetas.iter().zip(&means) {
                let emp = zs.iter().map(|&z| class.value(t, z)).sum::<f64>() / n as f64;
                sup = sup.max(m - emp);
            }
            acc += sup;
        }
        gaps.push(acc / repetitions as f64);
    }
    let slope = if gaps.iter().all(|&g| g > 0.0) {
        let xs: Vec<f64> = sample_sizes.iter().map(|&n| libm::log(n as f64)).collect();
        let ys: Vec<f64> = gaps.iter().map(|&g| libm::log(g)).collect();
        let k = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(GapRateReport {
        sample_sizes: sample_sizes.to_vec(),
        mean_sup_gap: gaps,
        slope,
    })
}

/// Log-spaced sample sizes from `lo` to `hi` inclusive.
pub fn log_spaced(lo: usize, hi: usize, points: usize) -> Vec<usize> {
    if points < 2 {
        return vec![lo];
    }
    let (a, b) = (libm::log(lo as f64), libm::log(hi as f64));
    (0..points)
        .map(|i| libm::round(libm::exp(a + (b - a) * i as f64 / (points - 1) as f64)) as usize)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OpnormReport {
    pub trials: usize,
    /// Largest `|fft - dense| / dense` over the trials.
    pub max_rel_dev: f64,
    /// `[d, k, c_in, c_out]` of the worst layer.
    pub worst: [usize; 4],
}

impl OpnormReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_dev <= tol
    }
}

/// Compare the per-frequency operator norm against Jacobi singular values of
/// the materialized operator on random layers with `d` in `2..=8`, up to
/// three channels and `k <= d`.
pub fn verify_opnorm(trials: usize, seed: u64) -> Result<OpnormReport> {
    let root = SeededRng::new(seed);
    let mut rep = OpnormReport {
        trials: 0,
        max_rel_dev: 0.0,
        worst: [0; 4],
    };
    for t in 0..trials {
        let mut rng = root.split(t as u64);
        let d = 2 + rng.below(7);
        let k = 1 + rng.below(d);
        let cin = 1 + rng.below(3);
        let cout = 1 + rng.below(3);
        let kernel = RealTensor4::gaussian([k, k, cin, cout], &mut rng);
        let layer = ConvLayerSpec::new(kernel, d)?;
        let fast = operator_norm_fft(&layer)?;
        let dense = singular_values(&materialize_operator(&layer)?)?[0];
        let dev = (fast - dense).abs() / dense.max(DENOM_FLOOR);
        if dev > rep.max_rel_dev || t == 0 {
            rep.max_rel_dev = dev;
            rep.worst = [d, k, cin, cout];
        }
        rep.trials += 1;
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradientReport {
    pub trials: usize,
    pub coordinates: usize,
    /// Largest per-coordinate relative error.
    pub max_rel_err: f64,
    /// Coordinates above the tolerance.
    pub failures: usize,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

const FD_STEP: f64 = 1e-5;
const FD_FLOOR: f64 = 1e-4;
const FD_TOL: f64 = 1e-5;

fn gradient_config(rng: &mut SeededRng, trial: usize) -> NetworkConfig {
    let act = if trial % 2 == 0 { Activation::Relu } else { Activation::Tanh };
    if trial % 4 < 2 {
        let d = 3 + rng.below(3);
        let c = 1 + rng.below(3);
        let k = 1 + rng.below(d.min(3));
        NetworkConfig::basic(d, c, k, 1 + rng.below(3), act).with_readout(Readout::AlternatingSigns)
    } else {
        let pooling = [Pooling::None, Pooling::Average2x2, Pooling::Max2x2][rng.below(3)];
        NetworkConfig {
            setting: Setting::General,
            input_size: 4,
            input_channels: 1 + rng.below(2),
            conv: vec![
                ConvLayerConfig { out_channels: 2, kernel_size: 2, pooling },
                ConvLayerConfig { out_channels: 1 + rng.below(3), kernel_size: 2, pooling: Pooling::None },
            ],
            fc_widths: vec![3, 2 + rng.below(2)],
            activation: act,
            readout: Readout::Ones,
            chi: 1.5,
            nu: 0.2,
            lambda: 1.0,
            loss_range: 1.0,
        }
    }
}

/// Three inputs labelled by the network's own prediction, with margins inside
/// the linear part of the ramp and no activation or pooling tie nearby.
fn gradient_batch(params: &ParamSet, config: &NetworkConfig, rng: &mut SeededRng) -> Result<Option<(Vec<Example>, f64)>> {
    let mut batch = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for _ in 0..3 {
        let x = random_input(config.input_dim(), config.chi, rng);
        let t = forward_trace(params, config, &x)?;
        if t.kink_distance(config.activation) < 1e-3 {
            return Ok(None);
        }
        let y = if config.output_dim() == 1 {
            Label::Binary(if t.output[0] >= 0.0 { 1 } else { -1 })
        } else {
            let best = (0..t.output.len()).max_by(|&a, &b| t.output[a].total_cmp(&t.output[b])).unwrap_or(0);
            Label::Class(best)
        };
        let (m, _) = margin(&t.output, y)?;
        lo = lo.min(m);
        hi = hi.max(m);
        batch.push(Example { x, y });
    }
    let lambda = (0.5 / hi).max(1.0);
    if lo < 1e-4 || hi * lambda > 1.0 - 1e-3 {
        return Ok(None);
    }
    Ok(Some((batch, lambda)))
}

fn mean_ramp(params: &ParamSet, config: &NetworkConfig, batch: &[Example], lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for ex in batch {
        total += ramp_loss(&forward(params, config, &ex.x)?, ex.y, lambda)?;
    }
    Ok(total / batch.len() as f64)
}

/// Central finite differences against [`crate::train::grad`] on random small
/// networks of both settings, away from ramp and activation kinks.
pub fn verify_gradients(trials: usize, seed: u64) -> Result<GradientReport> {
    let root = SeededRng::new(seed);
    let mut rep = GradientReport {
        trials: 0,
        coordinates: 0,
        max_rel_err: 0.0,
        failures: 0,
    };
    let mut attempt = 0u64;
    while rep.trials < trials {
        attempt += 1;
        if attempt > 100 * trials as u64 + 100 {
            bail!(Internal, "could not build kink-free gradient trials");
        }
        let mut rng = root.split(attempt);
        let mut config = gradient_config(&mut rng, rep.trials);
        let mut p = crate::train::init_params(&config, &mut rng)?;
        for v in p.trainable_mut() {
            *v += 0.3 * rng.gaussian();
        }
        let Some((batch, lambda)) = gradient_batch(&p, &config, &mut rng)? else {
            continue;
        };
        config.lambda = lambda;
        let g = crate::train::grad(&p, &config, &batch, lambda)?;
        for (idx, &a) in g.trainable().enumerate() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            if let Some(v) = plus.trainable_mut().nth(idx) {
                *v += FD_STEP;
            }
            if let Some(v) = minus.trainable_mut().nth(idx) {
                *v -= FD_STEP;
            }
            let fd = (mean_ramp(&plus, &config, &batch, lambda)? - mean_ramp(&minus, &config, &batch, lambda)?) / (2.0 * FD_STEP);
            let rel = (fd - a).abs() / a.abs().max(fd.abs()).max(FD_FLOOR);
            rep.max_rel_err = rep.max_rel_err.max(rel);
            if rel > FD_TOL {
                rep.failures += 1;
            }
            rep.coordinates += 1;
        }
        rep.trials += 1;
    }
    Ok(rep)
}
