//! Batched entry points for single layers.

use rayon::prelude::*;

use super::kernels::Shape;
use super::layer::{Block, LayerSpec, Padding};
use super::{Scalar, Tensor};
use crate::error::{invariant, Result};

fn sample_shape<T: Scalar>(t: &Tensor<T>) -> Result<Shape> {
    match *t.shape() {
        [_, h, w, c] => Ok(Shape::new(h, w, c)),
        [_, f] => Ok(Shape::flat(f)),
        ref s => Err(invariant!("expected [N, H, W, C] or [N, F], got {s:?}")),
    }
}

fn batch_shape(n: usize, s: Shape) -> Vec<usize> {
    if s.h == 1 && s.w == 1 {
        vec![n, s.c]
    } else {
        vec![n, s.h, s.w, s.c]
    }
}

fn compile<T: Scalar>(spec: &LayerSpec, input: &Tensor<T>, params: &[T]) -> Result<Block> {
    let block = Block::compile(spec, sample_shape(input)?)?;
    if params.len() != block.param_len() {
        return Err(invariant!(
            "{} takes {} parameters, got {}",
            spec.kind(),
            block.param_len(),
            params.len()
        ));
    }
    Ok(block)
}

/// Output shape of one sample.
pub fn layer_output_shape(spec: &LayerSpec, input: Shape) -> Result<Shape> {
    Ok(Block::compile(spec, input)?.output_shape())
}

/// Number of scalar parameters `spec` holds for the given input.
pub fn layer_param_count(spec: &LayerSpec, input: Shape) -> Result<usize> {
    Ok(Block::compile(spec, input)?.param_len())
}

pub fn layer_forward<T: Scalar>(spec: &LayerSpec, input: &Tensor<T>, params: &[T]) -> Result<Tensor<T>> {
    let block = compile(spec, input, params)?;
    let n = input.batch();
    let outs: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| block.forward(input.sample(i), params))
        .collect::<Result<_>>()?;
    Tensor::new(batch_shape(n, block.output_shape()), outs.concat())
}

/// Input gradient and parameter gradient (summed over the batch).
pub fn layer_backward<T: Scalar>(
    spec: &LayerSpec,
    input: &Tensor<T>,
    upstream: &Tensor<T>,
    params: &[T],
) -> Result<(Tensor<T>, Vec<T>)> {
    let block = compile(spec, input, params)?;
    let n = input.batch();
    if upstream.batch() != n || upstream.len() != n * block.output_shape().len() {
        return Err(invariant!(
            "upstream gradient {:?} does not match layer output {:?}",
            upstream.shape(),
            block.output_shape()
        ));
    }
    let mut dparams = vec![T::zero(); params.len()];
    let mut dx = Vec::with_capacity(input.len());
    for i in 0..n {
        let (_, tape) = block.forward_tape(input.sample(i), params)?;
        dx.extend(block.backward(input.sample(i), &tape, upstream.sample(i), params, &mut dparams)?);
    }
    Ok((Tensor::new(input.shape().to_vec(), dx)?, dparams))
}

fn conv_params<T: Scalar>(weights: &Tensor<T>, bias: &Tensor<T>, cout: usize) -> Result<Vec<T>> {
    if bias.shape() != [cout] {
        return Err(invariant!("bias shape {:?}, expected [{cout}]", bias.shape()));
    }
    Ok([weights.data(), bias.data()].concat())
}

/// Cross-correlation with weights `[k, k, Cin, Cout]` and bias `[Cout]`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let &[k, k2, in_channels, out_channels] = weights.shape() else {
        return Err(invariant!("conv weights must be [k, k, Cin, Cout], got {:?}", weights.shape()));
    };
    if k != k2 {
        return Err(invariant!("conv kernel must be square, got {k}×{k2}"));
    }
    let spec = LayerSpec::Conv2D {
        kernel: k,
        stride,
        padding,
        in_channels,
        out_channels,
    };
    layer_forward(&spec, input, &conv_params(weights, bias, out_channels)?)
}

/// Per-channel cross-correlation with weights `[k, k, C]` and bias `[C]`.
pub fn depthwise_conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let &[k, k2, channels] = weights.shape() else {
        return Err(invariant!("depthwise weights must be [k, k, C], got {:?}", weights.shape()));
    };
    if k != k2 {
        return Err(invariant!("depthwise kernel must be square, got {k}×{k2}"));
    }
    let spec = LayerSpec::DepthwiseConv2D {
        kernel: k,
        stride,
        padding,
        channels,
    };
    layer_forward(&spec, input, &conv_params(weights, bias, channels)?)
}

/// Expand, depthwise, project; `params` in that order, each weights then bias.
pub fn inverted_residual_forward<T: Scalar>(
    input: &Tensor<T>,
    params: &[T],
    expansion: usize,
    stride: usize,
    out_channels: usize,
) -> Result<Tensor<T>> {
    let spec = LayerSpec::InvertedResidual {
        in_channels: sample_shape(input)?.c,
        out_channels,
        expansion,
        stride,
    };
    layer_forward(&spec, input, params)
}
