//! Distances between parameterizations: the sum of per-layer operator norms
//! of kernel differences, its extension with fully connected layers, and the
//! entrywise L1 distance that dominates both.

use alloc::vec::Vec;

use crate::convspec::kernel_operator_norm;
use crate::error::{bail, Result};
use crate::tensor::{spectral_norm, RealMatrix, RealTensor4};

/// Full parameterization of a network: convolution kernels, fully connected
/// matrices and, in the basic setting, the fixed unit-norm readout vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamSet {
    pub conv: Vec<RealTensor4>,
    /// Side length of the feature map entering each convolution.
    pub conv_input_sizes: Vec<usize>,
    pub fc: Vec<RealMatrix>,
    pub readout: Option<Vec<f64>>,
}

impl ParamSet {
    pub fn new(
        conv: Vec<RealTensor4>,
        conv_input_sizes: Vec<usize>,
        fc: Vec<RealMatrix>,
        readout: Option<Vec<f64>>,
    ) -> Result<Self> {
        let p = Self {
            conv,
            conv_input_sizes,
            fc,
            readout,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv.len() != self.conv_input_sizes.len() {
            bail!(
                Dimension,
                "{} kernels but {} input sizes",
                self.conv.len(),
                self.conv_input_sizes.len()
            );
        }
        for (i, pair) in self.conv.windows(2).enumerate() {
            if pair[0].out_channels() != pair[1].in_channels() {
                bail!(
                    Dimension,
                    "conv layer {i} emits {} channels, layer {} expects {}",
                    pair[0].out_channels(),
                    i + 1,
                    pair[1].in_channels()
                );
            }
        }
        for (i, (k, &d)) in self.conv.iter().zip(&self.conv_input_sizes).enumerate() {
            let (k1, k2) = k.kernel_size();
            if k1 > d || k2 > d {
                bail!(Dimension, "conv layer {i}: kernel {k1}x{k2} exceeds input size {d}");
            }
        }
        for (i, pair) in self.fc.windows(2).enumerate() {
            if pair[0].rows() != pair[1].cols() {
                bail!(
                    Dimension,
                    "fc layer {i} emits {} values, layer {} expects {}",
                    pair[0].rows(),
                    i + 1,
                    pair[1].cols()
                );
            }
        }
        if let Some(w) = &self.readout {
            let n = crate::tensor::euclidean_norm(w);
            if (n - 1.0).abs() > 1e-12 {
                bail!(Argument, "readout vector has norm {n}, expected 1");
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.conv_input_sizes == other.conv_input_sizes
            && self.conv.len() == other.conv.len()
            && self.fc.len() == other.fc.len()
            && self.conv.iter().zip(&other.conv).all(|(a, b)| a.dims() == b.dims())
            && self.fc.iter().zip(&other.fc).all(|(a, b)| a.shape() == b.shape())
            && self.readout.as_ref().map(Vec::len) == other.readout.as_ref().map(Vec::len)
    }

    /// Number of trainable scalars (the readout is fixed).
    pub fn trainable_len(&self) -> usize {
        self.conv.iter().map(RealTensor4::len).sum::<usize>()
            + self.fc.iter().map(|m| m.rows() * m.cols()).sum::<usize>()
    }

    /// Same shape, all trainable entries zero, no readout.
    pub fn zeros_like(&self) -> Self {
        Self {
            conv: self.conv.iter().map(|k| RealTensor4::zeros(k.dims())).collect(),
            conv_input_sizes: self.conv_input_sizes.clone(),
            fc: self.fc.iter().map(|m| RealMatrix::zeros(m.rows(), m.cols())).collect(),
            readout: None,
        }
    }

    /// Iterate over trainable entries in a fixed order.
    pub fn trainable(&self) -> impl Iterator<Item = &f64> {
        self.conv
            .iter()
            .flat_map(|k| k.data().iter())
            .chain(self.fc.iter().flat_map(|m| m.data().iter()))
    }

    pub fn trainable_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.conv
            .iter_mut()
            .flat_map(|k| k.data_mut().iter_mut())
            .chain(self.fc.iter_mut().flat_map(|m| m.data_mut().iter_mut()))
    }

    /// `self += alpha * other` over trainable entries.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        if self.trainable_len() != other.trainable_len() {
            bail!(Dimension, "axpy between parameter sets of different size");
        }
        for (a, b) in self.trainable_mut().zip(other.trainable()) {
            *a += alpha * b;
        }
        Ok(())
    }
}

/// A parameterization and the initialization it is measured against.
#[derive(Debug, Clone, Copy)]
pub struct InitPair<'a> {
    pub current: &'a ParamSet,
    pub initial: &'a ParamSet,
}

impl<'a> InitPair<'a> {
    pub fn new(current: &'a ParamSet, initial: &'a ParamSet) -> Result<Self> {
        if !current.same_shape(initial) {
            bail!(Argument, "current and initial parameters have different shapes");
        }
        Ok(Self { current, initial })
    }

    /// Basic setting: every initial kernel has operator norm 1.
    pub fn check_unit_init(&self) -> Result<()> {
        for (i, (k, &d)) in self
            .initial
            .conv
            .iter()
            .zip(&self.initial.conv_input_sizes)
            .enumerate()
        {
            let n = kernel_operator_norm(k, d)?;
            if (n - 1.0).abs() > 1e-9 {
                bail!(Argument, "initial conv layer {i} has operator norm {n}, expected 1");
            }
        }
        Ok(())
    }

    /// General setting: every initial layer has norm at most `1 + nu`.
    pub fn check_bounded_init(&self, nu: f64) -> Result<()> {
        let cap = 1.0 + nu + 1e-9;
        for (i, (k, &d)) in self
            .initial
            .conv
            .iter()
            .zip(&self.initial.conv_input_sizes)
            .enumerate()
        {
            let n = kernel_operator_norm(k, d)?;
            if n > cap {
                bail!(Argument, "initial conv layer {i} has operator norm {n} > 1 + nu");
            }
        }
        for (i, v) in self.initial.fc.iter().enumerate() {
            let n = spectral_norm(v)?;
            if n > cap {
                bail!(Argument, "initial fc layer {i} has spectral norm {n} > 1 + nu");
            }
        }
        Ok(())
    }
}

/// Source of per-layer operator norms; lets callers plug in a cache.
pub trait LayerNorms {
    fn conv_norm(&self, kernel: &RealTensor4, input_size: usize) -> Result<f64>;

    fn matrix_norm(&self, m: &RealMatrix) -> Result<f64> {
        spectral_norm(m)
    }
}

/// Computes every norm from scratch.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectNorms;

impl LayerNorms for DirectNorms {
    fn conv_norm(&self, kernel: &RealTensor4, input_size: usize) -> Result<f64> {
        kernel_operator_norm(kernel, input_size)
    }
}

fn conv_terms<N: LayerNorms + ?Sized>(pair: &InitPair<'_>, norms: &N) -> Result<Vec<f64>> {
    pair.current
        .conv
        .iter()
        .zip(&pair.initial.conv)
        .zip(&pair.current.conv_input_sizes)
        .map(|((k, k0), &d)| norms.conv_norm(&k.try_sub(k0)?, d))
        .collect()
}

fn check_shapes(pair: &InitPair<'_>) -> Result<()> {
    if !pair.current.same_shape(pair.initial) {
        bail!(Argument, "current and initial parameters have different shapes");
    }
    Ok(())
}

/// Per-layer `|op(K_i) - op(K0_i)|_2`.
pub fn sigma_terms(pair: &InitPair<'_>) -> Result<Vec<f64>> {
    check_shapes(pair)?;
    conv_terms(pair, &DirectNorms)
}

/// `sum_i |op(K_i) - op(K0_i)|_2` over convolutional layers.
pub fn sigma_dist(pair: &InitPair<'_>) -> Result<f64> {
    sigma_dist_with(pair, &DirectNorms)
}

pub fn sigma_dist_with<N: LayerNorms + ?Sized>(pair: &InitPair<'_>, norms: &N) -> Result<f64> {
    check_shapes(pair)?;
    // summed in layer order
    Ok(conv_terms(pair, norms)?.iter().sum())
}

/// Conv part as in [`sigma_dist`] plus `sum_i |V_i - V0_i|_2`.
pub fn n_dist(pair: &InitPair<'_>) -> Result<f64> {
    n_dist_with(pair, &DirectNorms)
}

pub fn n_dist_with<N: LayerNorms + ?Sized>(pair: &InitPair<'_>, norms: &N) -> Result<f64> {
    let conv = sigma_dist_with(pair, norms)?;
    let mut fc = 0.0;
    for (v, v0) in pair.current.fc.iter().zip(&pair.initial.fc) {
        fc += norms.matrix_norm(&v.try_sub(v0)?)?;
    }
    Ok(conv + fc)
}

/// Entrywise L1 distance over all convolution kernels.
pub fn vec_l1_dist(pair: &InitPair<'_>) -> Result<f64> {
    check_shapes(pair)?;
    let mut total = 0.0;
    for (k, k0) in pair.current.conv.iter().zip(&pair.initial.conv) {
        total += k.try_sub(k0)?.l1();
    }
    Ok(total)
}
