//! Exact operator norm of a circular, stride-1 convolution.
//!
//! A `k x k x c_in x c_out` kernel acting on `d x d x c_in` feature maps with
//! wraparound indexing is block-diagonalized by the 2-D DFT: zero-pad each
//! channel slice to `d x d`, transform it, and collect the `(u, v)` entries of
//! all slices into a `c_in x c_out` block `P(u, v)`. The operator norm of the
//! layer is the largest spectral norm over the `d^2` blocks.
//!
//! [`materialize_operator`] builds the dense `(d^2 c_out) x (d^2 c_in)` matrix
//! of the same map; it is the oracle for the block formula and the carrier of
//! the (2,1)-norm of operator differences.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::tensor::{norm_21, spectral_norm_complex, ComplexMatrix, DftPlan, RealMatrix, RealTensor4};

/// Largest side of a materialized operator matrix.
pub const MAX_OPERATOR_DIM: usize = 4096;

/// A kernel together with the side length of the square feature maps it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerSpec {
    kernel: RealTensor4,
    input_size: usize,
}

impl ConvLayerSpec {
    pub fn new(kernel: RealTensor4, input_size: usize) -> Result<Self> {
        let [k1, k2, cin, cout] = kernel.dims();
        if cin == 0 || cout == 0 {
            bail!(Argument, "kernel needs at least one input and output channel");
        }
        if k1 == 0 || k2 == 0 {
            bail!(Argument, "kernel has an empty spatial extent");
        }
        if k1 > input_size || k2 > input_size {
            bail!(
                Argument,
                "kernel {k1}x{k2} larger than the {input_size}x{input_size} input"
            );
        }
        Ok(Self { kernel, input_size })
    }

    pub fn kernel(&self) -> &RealTensor4 {
        &self.kernel
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn in_dim(&self) -> usize {
        self.input_size * self.input_size * self.kernel.in_channels()
    }

    pub fn out_dim(&self) -> usize {
        self.input_size * self.input_size * self.kernel.out_channels()
    }
}

/// Apply the layer's linear map to a `d x d x c_in` map stored row-major with
/// the channel fastest: `out[p, q, o] = sum K[a, b, i, o] x[(p+a)%d, (q+b)%d, i]`.
pub fn circular_conv(kernel: &RealTensor4, d: usize, x: &[f64]) -> Result<Vec<f64>> {
    let [k1, k2, cin, cout] = kernel.dims();
    if x.len() != d * d * cin {
        bail!(
            Dimension,
            "input of length {} does not match {d}x{d}x{cin}",
            x.len()
        );
    }
    let mut out = alloc::vec![0.0; d * d * cout];
    let w = kernel.data();
    for p in 0..d {
        for q in 0..d {
            let dst = &mut out[(p * d + q) * cout..(p * d + q + 1) * cout];
            for a in 0..k1 {
                let pa = (p + a) % d;
                for b in 0..k2 {
                    let qb = (q + b) % d;
                    let src = &x[(pa * d + qb) * cin..(pa * d + qb + 1) * cin];
                    for (i, &xi) in src.iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        let base = ((a * k2 + b) * cin + i) * cout;
                        for (o, slot) in dst.iter_mut().enumerate() {
                            *slot += w[base + o] * xi;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`circular_conv`]: maps a `d x d x c_out` gradient back to the input.
pub fn circular_conv_adjoint(kernel: &RealTensor4, d: usize, g: &[f64]) -> Result<Vec<f64>> {
    let [k1, k2, cin, cout] = kernel.dims();
    if g.len() != d * d * cout {
        bail!(
            Dimension,
            "gradient of length {} does not match {d}x{d}x{cout}",
            g.len()
        );
    }
    let mut out = alloc::vec![0.0; d * d * cin];
    let w = kernel.data();
    for p in 0..d {
        for q in 0..d {
            let src = &g[(p * d + q) * cout..(p * d + q + 1) * cout];
            for a in 0..k1 {
                let pa = (p + a) % d;
                for b in 0..k2 {
                    let qb = (q + b) % d;
                    let dst = &mut out[(pa * d + qb) * cin..(pa * d + qb + 1) * cin];
                    for (i, slot) in dst.iter_mut().enumerate() {
                        let base = ((a * k2 + b) * cin + i) * cout;
                        let mut acc = 0.0;
                        for (o, &go) in src.iter().enumerate() {
                            acc += w[base + o] * go;
                        }
                        *slot += acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of `<g, conv(x)>` with respect to the kernel.
pub fn circular_conv_kernel_grad(
    dims: [usize; 4],
    d: usize,
    x: &[f64],
    g: &[f64],
) -> Result<RealTensor4> {
    let [k1, k2, cin, cout] = dims;
    if x.len() != d * d * cin || g.len() != d * d * cout {
        bail!(Dimension, "kernel gradient operands do not match {d}x{d} maps");
    }
    let mut grad = RealTensor4::zeros(dims);
    let gw = grad.data_mut();
    for p in 0..d {
        for q in 0..d {
            let gs = &g[(p * d + q) * cout..(p * d + q + 1) * cout];
            for a in 0..k1 {
                let pa = (p + a) % d;
                for b in 0..k2 {
                    let qb = (q + b) % d;
                    let xs = &x[(pa * d + qb) * cin..(pa * d + qb + 1) * cin];
                    for (i, &xi) in xs.iter().enumerate() {
                        if xi == 0.0 {
                            continue;
                        }
                        let base = ((a * k2 + b) * cin + i) * cout;
                        for (o, &go) in gs.iter().enumerate() {
                            gw[base + o] += xi * go;
                        }
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// The `c_in x c_out` blocks `P(u, v)`, indexed `u * d + v`.
pub fn frequency_blocks(layer: &ConvLayerSpec) -> Result<Vec<ComplexMatrix>> {
    let d = layer.input_size;
    let k = &layer.kernel;
    let (cin, cout) = (k.in_channels(), k.out_channels());
    let plan = DftPlan::new(d)?;
    let mut blocks: Vec<ComplexMatrix> = (0..d * d).map(|_| ComplexMatrix::zeros(cin, cout)).collect();
    for i in 0..cin {
        for o in 0..cout {
            let spectrum = plan.transform(&k.padded_slice(i, o, d))?;
            for (idx, block) in blocks.iter_mut().enumerate() {
                block.set(i, o, spectrum.get(idx / d, idx % d));
            }
        }
    }
    Ok(blocks)
}

/// Spectral norm of every frequency block, indexed `u * d + v`.
pub fn frequency_block_norms(layer: &ConvLayerSpec) -> Result<Vec<f64>> {
    frequency_blocks(layer)?
        .iter()
        .map(spectral_norm_complex)
        .collect()
}

/// `|op(K)|_2` as the maximum block norm over all frequency pairs.
pub fn operator_norm_fft(layer: &ConvLayerSpec) -> Result<f64> {
    Ok(frequency_block_norms(layer)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Convenience form of [`operator_norm_fft`] on a raw kernel.
pub fn kernel_operator_norm(kernel: &RealTensor4, input_size: usize) -> Result<f64> {
    operator_norm_fft(&ConvLayerSpec::new(kernel.clone(), input_size)?)
}

/// Dense matrix `A` with `vec(conv(x)) = A vec(x)`.
pub fn materialize_operator(layer: &ConvLayerSpec) -> Result<RealMatrix> {
    let d = layer.input_size;
    let k = &layer.kernel;
    let [k1, k2, cin, cout] = k.dims();
    let (rows, cols) = (layer.out_dim(), layer.in_dim());
    if rows > MAX_OPERATOR_DIM || cols > MAX_OPERATOR_DIM {
        bail!(
            Capacity,
            "operator of size {rows}x{cols} exceeds the {MAX_OPERATOR_DIM} guard"
        );
    }
    let mut a = RealMatrix::zeros(rows, cols);
    for p in 0..d {
        for q in 0..d {
            for a_ in 0..k1 {
                for b in 0..k2 {
                    let src = ((p + a_) % d) * d + (q + b) % d;
                    for i in 0..cin {
                        for o in 0..cout {
                            a.add_at((p * d + q) * cout + o, src * cin + i, k.get(a_, b, i, o));
                        }
                    }
                }
            }
        }
    }
    Ok(a)
}

/// `|op(A)^T - op(B)^T|_{2,1}` on materialized operators.
pub fn operator_21_norm(layer_a: &ConvLayerSpec, layer_b: &ConvLayerSpec) -> Result<f64> {
    if layer_a.kernel.dims() != layer_b.kernel.dims() || layer_a.input_size != layer_b.input_size {
        bail!(
            Argument,
            "layer shapes differ: {:?}@{} vs {:?}@{}",
            layer_a.kernel.dims(),
            layer_a.input_size,
            layer_b.kernel.dims(),
            layer_b.input_size
        );
    }
    let diff = materialize_operator(layer_a)?.try_sub(&materialize_operator(layer_b)?)?;
    norm_21(&diff.transpose())
}

/// `|op(A)^T - op(B)^T|_{2,1}` from the kernels alone. Each row of `op(J)`
/// holds the entries of one output-channel slice of `J`, so the norm is
/// `d^2 * sum_o |J[.., o]|_F`.
pub fn operator_21_norm_structured(a: &RealTensor4, b: &RealTensor4, input_size: usize) -> Result<f64> {
    if a.dims() != b.dims() {
        bail!(Argument, "kernel shapes differ: {:?} vs {:?}", a.dims(), b.dims());
    }
    let (k1, k2) = a.kernel_size();
    if k1 > input_size || k2 > input_size {
        bail!(Argument, "kernel {k1}x{k2} exceeds input size {input_size}");
    }
    let cout = a.out_channels();
    let mut sq = alloc::vec![0.0; cout];
    for (idx, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        let t = x - y;
        sq[idx % cout] += t * t;
    }
    let d2 = (input_size * input_size) as f64;
    Ok(d2 * sq.iter().map(|s| libm::sqrt(*s)).sum::<f64>())
}
