//! Closed-form evaluators for the generalization bounds and the quantities
//! they are compared against. Every value is stated modulo the theorems'
//! unspecified absolute constant, supplied here as `constant` (default 1).
//! Logarithms are natural; large powers and products go through log space.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::convspec::{kernel_operator_norm, operator_21_norm_structured};
use crate::error::{bail, Result};
use crate::tensor::{hadamard_sylvester, norm_21, spectral_norm, RealMatrix, RealTensor4};

/// Scalars entering the bound displays.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BoundInput {
    /// Distance from initialization (sigma distance or N distance).
    pub beta: f64,
    /// Trainable parameter count `W`.
    pub params: f64,
    pub n: f64,
    pub delta: f64,
    /// Lipschitz constant of the loss in its first argument.
    pub lambda: f64,
    pub eta: f64,
    pub constant: f64,
    /// Range bound `M` of the loss.
    pub loss_range: f64,
    /// Input norm bound.
    pub chi: f64,
    pub nu: f64,
    pub depth: usize,
    /// Empirical mean loss on the training sample.
    pub train_loss: f64,
}

impl Default for BoundInput {
    fn default() -> Self {
        Self {
            beta: 0.0,
            params: 1.0,
            n: 1.0,
            delta: 0.05,
            lambda: 1.0,
            eta: 0.0,
            constant: 1.0,
            loss_range: 1.0,
            chi: 1.0,
            nu: 0.0,
            depth: 1,
            train_loss: 0.0,
        }
    }
}

impl BoundInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bail!(Argument, "delta must lie in (0, 1), got {}", self.delta);
        }
        if !(self.lambda >= 1.0) {
            bail!(Argument, "lambda must be >= 1, got {}", self.lambda);
        }
        if !(self.n >= 1.0 && self.params >= 1.0) {
            bail!(Argument, "n and W must be at least 1");
        }
        if !(self.beta >= 0.0 && self.eta >= 0.0 && self.nu >= 0.0) {
            bail!(Argument, "beta, eta and nu must be nonnegative");
        }
        if !(self.constant >= 1.0) {
            bail!(Argument, "the absolute constant must be >= 1, got {}", self.constant);
        }
        if !(self.chi > 0.0 && self.loss_range > 0.0) {
            bail!(Argument, "chi and M must be positive");
        }
        if !(self.train_loss >= 0.0 && self.train_loss <= self.loss_range) {
            bail!(Argument, "training loss {} is outside [0, M]", self.train_loss);
        }
        if self.depth == 0 {
            bail!(Argument, "depth must be at least 1");
        }
        let all = [
            self.beta,
            self.params,
            self.n,
            self.lambda,
            self.eta,
            self.constant,
            self.loss_range,
            self.chi,
            self.nu,
            self.train_loss,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            bail!(Argument, "bound inputs must be finite");
        }
        Ok(())
    }
}

/// A named applicability condition and whether the inputs satisfy it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BranchFlag {
    pub condition: String,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub flags: Vec<BranchFlag>,
    pub terms: Vec<(String, f64)>,
}

impl BoundReport {
    fn new(name: &str, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            flags: Vec::new(),
            terms: Vec::new(),
        }
    }

    fn flag(mut self, condition: &str, holds: bool) -> Self {
        self.flags.push(BranchFlag {
            condition: condition.into(),
            holds,
        });
        self
    }

    fn term(mut self, name: &str, value: f64) -> Self {
        self.terms.push((name.into(), value));
        self
    }

    /// True when every branch condition holds.
    pub fn applicable(&self) -> bool {
        self.flags.iter().all(|f| f.holds)
    }

    pub fn term_value(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Lipschitz constant of the basic-setting loss class in its parameters.
pub fn lipschitz_const_basic(beta: f64, lambda: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    libm::exp(libm::log(beta) + libm::log(lambda) + beta)
}

/// `chi * lambda * beta * (1 + nu + beta / L)^L`.
pub fn lipschitz_const_general(chi: f64, lambda: f64, beta: f64, nu: f64, depth: usize) -> Result<f64> {
    if depth == 0 {
        bail!(Argument, "depth must be at least 1");
    }
    if chi == 0.0 || lambda == 0.0 || beta == 0.0 {
        return Ok(0.0);
    }
    let l = depth as f64;
    Ok(libm::exp(
        libm::log(chi) + libm::log(lambda) + libm::log(beta) + l * libm::log1p(nu + beta / l),
    ))
}

/// Natural log of `(3B / eps)^d`.
pub fn log_covering_bound(radius: f64, dim: usize, eps: f64) -> f64 {
    dim as f64 * libm::log(3.0 * radius / eps)
}

/// Covering-number bound `(3B / eps)^d` for a `(B, d)`-Lipschitz class.
pub fn covering_bound(radius: f64, dim: usize, eps: f64) -> f64 {
    libm::exp(log_covering_bound(radius, dim, eps))
}

fn log_plus(x: f64) -> f64 {
    // log arguments below 1 only arise for degenerate classes (beta -> 0);
    // clamping keeps every report nonnegative.
    libm::log(x.max(1.0))
}

/// The three displays of the basic-setting theorem.
pub fn theorem1_bounds(input: &BoundInput) -> Result<[BoundReport; 3]> {
    input.validate()?;
    let BoundInput {
        beta,
        params: w,
        n,
        delta,
        lambda,
        eta,
        constant: c,
        train_loss: t,
        ..
    } = *input;
    let conf = libm::log(1.0 / delta);
    let fast = c * (w * (beta + libm::log(lambda * n)) + conf) / n;
    let sqrt = c * libm::sqrt((w * (beta + libm::log(lambda)) + conf) / n);
    let linear = c * (beta * lambda * libm::sqrt(w / n) + libm::sqrt(conf / n));
    Ok([
        BoundReport::new("theorem1/relative", (1.0 + eta) * t + fast)
            .term("train", (1.0 + eta) * t)
            .term("excess", fast),
        BoundReport::new("theorem1/sqrt", t + sqrt)
            .flag("beta >= 5", beta >= 5.0)
            .term("train", t)
            .term("excess", sqrt),
        BoundReport::new("theorem1/linear", t + linear)
            .flag("beta < 5", beta < 5.0)
            .term("train", t)
            .term("excess", linear),
    ])
}

/// The three displays of the general-setting theorem; `beta` is the N distance.
pub fn theorem2_bounds(input: &BoundInput) -> Result<[BoundReport; 3]> {
    input.validate()?;
    let BoundInput {
        beta,
        params: w,
        n,
        delta,
        lambda,
        eta,
        constant: c,
        loss_range: m,
        chi,
        nu,
        depth,
        train_loss: t,
    } = *input;
    let l = depth as f64;
    let conf = libm::log(1.0 / delta);
    let lip = lipschitz_const_general(chi, lambda, beta, nu, depth)?;
    let fast = c * m * (w * (beta + nu * l + log_plus(chi * lambda * beta * n)) + conf) / n;
    let sqrt = c * m * libm::sqrt((w * (beta + nu * l + log_plus(chi * lambda * beta)) + conf) / n);
    let linear = c * (lip * libm::sqrt(w / n) + m * libm::sqrt(conf / n));
    Ok([
        BoundReport::new("theorem2/relative", (1.0 + eta) * t + fast)
            .term("train", (1.0 + eta) * t)
            .term("excess", fast),
        BoundReport::new("theorem2/sqrt", t + sqrt)
            .flag("lipschitz constant >= 5", lip >= 5.0)
            .term("train", t)
            .term("excess", sqrt)
            .term("lipschitz", lip),
        BoundReport::new("theorem2/linear", t + linear)
            .flag("lipschitz constant < 5", lip < 5.0)
            .term("train", t)
            .term("excess", linear)
            .term("lipschitz", lip),
    ])
}

/// The three displays for a `(B, d)`-Lipschitz parameterized class with
/// range `[0, M]`; `input.params` plays the role of `d` and `input.beta` of `B`.
pub fn lipschitz_class_bounds(input: &BoundInput) -> Result<[BoundReport; 3]> {
    input.validate()?;
    let BoundInput {
        beta: b,
        params: dim,
        n,
        delta,
        eta,
        constant: c,
        loss_range: m,
        train_loss: t,
        ..
    } = *input;
    let conf = libm::log(1.0 / delta);
    let fast = c * m * (dim * log_plus(b * n) + conf) / n;
    let sqrt = c * m * libm::sqrt((dim * log_plus(b) + conf) / n);
    let linear = c * (b * libm::sqrt(dim / n) + m * libm::sqrt(conf / n));
    Ok([
        BoundReport::new("class/relative", (1.0 + eta) * t + fast)
            .term("train", (1.0 + eta) * t)
            .term("excess", fast),
        BoundReport::new("class/sqrt", t + sqrt)
            .flag("B >= 5", b >= 5.0)
            .term("train", t)
            .term("excess", sqrt),
        BoundReport::new("class/linear", t + linear)
            .term("train", t)
            .term("excess", linear),
    ])
}

/// Radius grid index: least `j` with `5 * 2^j >= dist`.
pub fn radius_index(dist: f64) -> usize {
    let mut j = 0;
    let mut r = 5.0;
    while r < dist {
        j += 1;
        r *= 2.0;
    }
    j
}

/// Confidence share of grid point `j`: `delta * 6 / (pi^2 (j + 1)^2)`,
/// summing to exactly `delta` over `j >= 0`.
pub fn radius_confidence(delta: f64, j: usize) -> f64 {
    let jj = (j + 1) as f64;
    delta * 6.0 / (core::f64::consts::PI * core::f64::consts::PI * jj * jj)
}

/// Bound that holds simultaneously for every distance from initialization,
/// obtained by a union bound over the radii `5 * 2^j`. `input.beta` is ignored.
pub fn nonuniform_bound(dist: f64, input: &BoundInput) -> Result<[BoundReport; 2]> {
    if !(dist >= 0.0 && dist.is_finite()) {
        bail!(Argument, "distance must be finite and nonnegative, got {dist}");
    }
    input.validate()?;
    let j = radius_index(dist);
    let beta_j = 5.0 * libm::pow(2.0, j as f64);
    let delta_j = radius_confidence(input.delta, j);
    nonuniform_at(beta_j, delta_j, j, input)
}

/// Both displays evaluated at an explicit radius and confidence.
pub fn nonuniform_at(beta: f64, delta: f64, j: usize, input: &BoundInput) -> Result<[BoundReport; 2]> {
    let BoundInput {
        params: w,
        n,
        lambda,
        eta,
        constant: c,
        train_loss: t,
        ..
    } = *input;
    let conf = libm::log(1.0 / delta);
    let fast = c * (w * (beta + libm::log(lambda * n)) + conf) / n;
    let sqrt = c * libm::sqrt((w * (beta + libm::log(lambda)) + conf) / n);
    Ok([
        BoundReport::new("nonuniform/relative", (1.0 + eta) * t + fast)
            .term("radius", beta)
            .term("grid index", j as f64)
            .term("delta share", delta)
            .term("excess", fast),
        BoundReport::new("nonuniform/sqrt", t + sqrt)
            .term("radius", beta)
            .term("grid index", j as f64)
            .term("delta share", delta)
            .term("excess", sqrt),
    ])
}

/// Per-layer inputs of the spectrally normalized comparison bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLayer {
    pub op_norm: f64,
    /// `|op(K)^T - op(K_0)^T|_{2,1}`.
    pub diff_21: f64,
}

/// Main term of the spectrally normalized bound, before dividing by `sqrt(n)`.
pub fn bft_main_term(layers: &[SpectralLayer], lambda: f64, d: usize, c: usize, depth: usize) -> Result<f64> {
    if layers.is_empty() {
        bail!(Argument, "no layers given");
    }
    let mut log_prod = 0.0;
    let mut sum = 0.0;
    for (i, l) in layers.iter().enumerate() {
        if !(l.op_norm > 0.0) {
            bail!(Argument, "layer {i} has operator norm {}, must be positive", l.op_norm);
        }
        if !(l.diff_21 >= 0.0) {
            bail!(Argument, "layer {i} has a negative (2,1) distance");
        }
        log_prod += libm::log(l.op_norm);
        sum += libm::cbrt(l.diff_21 * l.diff_21) / libm::cbrt(l.op_norm * l.op_norm);
    }
    if sum == 0.0 {
        return Ok(0.0);
    }
    let (d, c, depth) = (d as f64, c as f64, depth as f64);
    let log_arg = libm::log(d * d * d * d * c * c * depth);
    Ok(libm::exp(libm::log(lambda) + log_prod + 1.5 * libm::log(sum)) * log_arg)
}

/// Full spectrally normalized bound: `(main + sqrt(log(1/delta))) / sqrt(n)`.
pub fn bft_bound(
    layers: &[SpectralLayer],
    lambda: f64,
    n: f64,
    delta: f64,
    d: usize,
    c: usize,
    depth: usize,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) || !(n >= 1.0) {
        bail!(Argument, "need delta in (0, 1) and n >= 1");
    }
    let main = bft_main_term(layers, lambda, d, c, depth)?;
    Ok((main + libm::sqrt(libm::log(1.0 / delta))) / libm::sqrt(n))
}

/// `lambda * sqrt(L) * prod |op(K_i)|_F / sqrt(n)`.
pub fn golowich_bound(frobenius: &[f64], lambda: f64, depth: usize, n: f64) -> Result<f64> {
    if frobenius.iter().any(|f| !(*f >= 0.0)) {
        bail!(Argument, "Frobenius norms must be nonnegative");
    }
    if frobenius.iter().any(|&f| f == 0.0) {
        return Ok(0.0);
    }
    let log_prod: f64 = frobenius.iter().map(|f| libm::log(*f)).sum();
    Ok(libm::exp(
        libm::log(lambda) + 0.5 * libm::log(depth as f64) + log_prod - 0.5 * libm::log(n),
    ))
}

/// Concrete comparison cases.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "name", rename_all = "kebab-case"))]
pub enum Scenario {
    /// Identity-initialized conv layers moved by adding `eps` to every entry.
    ConvEps {
        eps: f64,
        channels: usize,
        input_size: usize,
        kernel_size: usize,
        depth: usize,
    },
    /// Fully connected layers `I + H / sqrt(D)` against the identity.
    Hadamard { dim: usize, depth: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioTable {
    pub scenario: Scenario,
    /// Computed norms and derived counts.
    pub quantities: Vec<(String, f64)>,
    /// Competing bound values and main terms.
    pub bounds: Vec<(String, f64)>,
}

impl ScenarioTable {
    pub fn quantity(&self, name: &str) -> Option<f64> {
        self.quantities.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn bound(&self, name: &str) -> Option<f64> {
        self.bounds.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

fn entry(name: &str, v: f64) -> (String, f64) {
    (name.into(), v)
}

/// Build the scenario's parameters explicitly, measure them, and evaluate
/// the competing bounds side by side. `lambda`, `n`, `delta` as in [`BoundInput`].
pub fn scenario_eval(scenario: Scenario, lambda: f64, n: f64, delta: f64) -> Result<ScenarioTable> {
    if !(lambda >= 1.0 && n >= 1.0 && delta > 0.0 && delta < 1.0) {
        bail!(Argument, "need lambda >= 1, n >= 1 and delta in (0, 1)");
    }
    let conf = libm::sqrt(libm::log(1.0 / delta));
    let sqrt_n = libm::sqrt(n);
    match scenario {
        Scenario::ConvEps {
            eps,
            channels: c,
            input_size: d,
            kernel_size: k,
            depth,
        } => {
            if c == 0 || k == 0 || depth == 0 || k > d || !(eps >= 0.0 && eps.is_finite()) {
                bail!(Argument, "conv-eps needs 1 <= k <= d, c >= 1, L >= 1 and eps >= 0");
            }
            let k0 = RealTensor4::delta_identity(k, c);
            let kk = RealTensor4::from_fn([k, k, c, c], |a, b, i, o| k0.get(a, b, i, o) + eps);
            let op = kernel_operator_norm(&kk, d)?;
            let layer_dist = kernel_operator_norm(&kk.try_sub(&k0)?, d)?;
            let sigma = layer_dist * depth as f64;
            let diff21 = operator_21_norm_structured(&kk, &k0, d)?;
            let frob = d as f64 * kk.frobenius();
            let w = (depth * k * k * c * c) as f64;
            let ours_main = libm::sqrt(w * (sigma + libm::log(lambda)));
            let input = BoundInput {
                beta: sigma,
                params: w,
                n,
                delta,
                lambda,
                depth,
                ..BoundInput::default()
            };
            let ours = nonuniform_bound(sigma, &input)?;
            let layers = vec![SpectralLayer { op_norm: op, diff_21: diff21 }; depth];
            let bft_main = bft_main_term(&layers, lambda, d, c, depth)?;
            Ok(ScenarioTable {
                scenario,
                quantities: vec![
                    entry("op_norm", op),
                    entry("sigma_dist", sigma),
                    entry("op21_diff", diff21),
                    entry("op_frobenius", frob),
                    entry("W", w),
                ],
                bounds: vec![
                    entry("this_main", ours_main),
                    entry("this_bound", (ours_main + conf) / sqrt_n),
                    entry("this_nonuniform", ours[1].value),
                    entry("bft_main", bft_main),
                    entry("bft_bound", (bft_main + conf) / sqrt_n),
                    entry("golowich_bound", golowich_bound(&vec![frob; depth], lambda, depth, n)?),
                ],
            })
        }
        Scenario::Hadamard { dim, depth } => {
            if depth == 0 {
                bail!(Argument, "depth must be at least 1");
            }
            let h = hadamard_sylvester(dim)?;
            let v0 = RealMatrix::identity(dim);
            let v = v0.try_add(&h.scaled(1.0 / libm::sqrt(dim as f64)))?;
            let diff = v.try_sub(&v0)?;
            let op = spectral_norm(&v)?;
            let dist = spectral_norm(&diff)?;
            let diff21 = norm_21(&diff.transpose())?;
            let beta = dist * depth as f64;
            let w = (dim * dim * depth) as f64;
            let input = BoundInput {
                beta,
                params: w,
                n,
                delta,
                lambda,
                depth,
                ..BoundInput::default()
            };
            let ours = theorem2_bounds(&input)?;
            let ours_main = libm::sqrt(w * (beta + libm::log(lambda * beta)));
            let layers = vec![SpectralLayer { op_norm: op, diff_21: diff21 }; depth];
            // a fully connected layer is a 1x1 "image" with D channels
            let bft_main = bft_main_term(&layers, lambda, 1, dim, depth)?;
            Ok(ScenarioTable {
                scenario,
                quantities: vec![
                    entry("op_norm", op),
                    entry("layer_dist", dist),
                    entry("op21_diff", diff21),
                    entry("n_dist", beta),
                    entry("W", w),
                ],
                bounds: vec![
                    entry("this_main", ours_main),
                    entry("this_bound", (ours_main + conf) / sqrt_n),
                    entry("this_theorem_sqrt", ours[1].value),
                    entry("bft_main", bft_main),
                    entry("bft_bound", (bft_main + conf) / sqrt_n),
                    entry(
                        "golowich_bound",
                        golowich_bound(&vec![v.frobenius(); depth], lambda, depth, n)?,
                    ),
                ],
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn lipschitz_basic_values() {
        assert_eq!(lipschitz_const_basic(0.0, 1.0), 0.0);
        assert!(close(lipschitz_const_basic(1.0, 1.0), core::f64::consts::E, 1e-15));
        assert!(close(lipschitz_const_basic(5.0, 2.0), 10.0 * libm::exp(5.0), 1e-14));
    }

    #[test]
    fn lipschitz_general_values() {
        assert_eq!(lipschitz_const_general(1.0, 1.0, 0.0, 0.0, 3).unwrap(), 0.0);
        for l in 1..8 {
            let v = lipschitz_const_general(1.0, 1.0, l as f64, 0.0, l).unwrap();
            assert!(close(v, l as f64 * libm::pow(2.0, l as f64), 1e-13));
        }
        assert!(lipschitz_const_general(1.0, 1.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn covering_values() {
        assert!(close(covering_bound(1.0, 2, 3.0), 1.0, 1e-15));
        assert!(close(covering_bound(3.0, 2, 1.0), 81.0, 1e-14));
    }

    #[test]
    fn theorem1_sqrt_example() {
        let input = BoundInput {
            beta: 5.0,
            params: 20.0,
            n: 100.0,
            delta: libm::exp(-1.0),
            ..BoundInput::default()
        };
        let r = theorem1_bounds(&input).unwrap();
        assert!(close(r[1].value, libm::sqrt(1.01), 1e-12));
        assert!(r[1].applicable() && !r[2].applicable());
    }

    #[test]
    fn theorem2_sqrt_example() {
        let input = BoundInput {
            beta: 5.0,
            params: 20.0,
            n: 100.0,
            delta: libm::exp(-1.0),
            depth: 4,
            ..BoundInput::default()
        };
        let r = theorem2_bounds(&input).unwrap();
        let want = libm::sqrt((20.0 * (5.0 + libm::log(5.0)) + 1.0) / 100.0);
        assert!(close(r[1].value, want, 1e-12));
    }

    #[test]
    fn delta_out_of_range() {
        for delta in [0.0, 1.0, -0.1, 2.0] {
            let input = BoundInput { delta, ..BoundInput::default() };
            assert!(matches!(theorem1_bounds(&input), Err(crate::Error::Argument(_))));
            assert!(matches!(theorem2_bounds(&input), Err(crate::Error::Argument(_))));
        }
    }

    #[test]
    fn radius_grid() {
        assert_eq!(radius_index(0.0), 0);
        assert_eq!(radius_index(4.0), 0);
        assert_eq!(radius_index(5.0), 0);
        assert_eq!(radius_index(12.0), 2);
        let total: f64 = (0..200_000).map(|j| radius_confidence(0.1, j)).sum();
        assert!(total < 0.1 && total > 0.1 - 1e-5);
    }

    #[test]
    fn bft_zero_diffs() {
        let layers = [SpectralLayer { op_norm: 2.0, diff_21: 0.0 }; 3];
        let v = bft_bound(&layers, 1.0, 100.0, libm::exp(-4.0), 4, 2, 3).unwrap();
        assert!(close(v, 2.0 / 10.0, 1e-15));
        let zero = [SpectralLayer { op_norm: 0.0, diff_21: 1.0 }];
        assert!(bft_bound(&zero, 1.0, 100.0, 0.1, 4, 2, 1).is_err());
    }

    #[test]
    fn golowich_unit_norms() {
        let v = golowich_bound(&[1.0; 4], 2.0, 4, 16.0).unwrap();
        assert!(close(v, 2.0 * 2.0 / 4.0, 1e-15));
    }
}
