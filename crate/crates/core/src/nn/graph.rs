use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kernels::Shape;
use super::layer::{Block, LayerSpec};
use super::loss::sample_cross_entropy;
use super::{Scalar, Tensor};
use crate::error::{invariant, Result};

/// Samples per gradient-accumulation chunk. Chunks are reduced in order, so
/// training is bitwise reproducible for any thread count.
const GRAD_CHUNK: usize = 4;

/// One named parameter tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSlot {
    pub layer: usize,
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// A sequential network with flat parameter and gradient storage.
#[derive(Debug, Clone)]
pub struct ModelGraph<T: Scalar = f32> {
    name: String,
    input_shape: Shape,
    layers: Vec<LayerSpec>,
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    params: Vec<T>,
    grads: Vec<T>,
}

impl<T: Scalar> PartialEq for ModelGraph<T> {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.input_shape == other.input_shape
            && self.layers == other.layers
            && self.params == other.params
    }
}

impl<T: Scalar> ModelGraph<T> {
    /// Compiles the layer sequence against `input_shape`; parameters start
    /// at zero.
    pub fn new(name: impl Into<String>, input_shape: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invariant!("a model needs at least one layer"));
        }
        let mut blocks = Vec::with_capacity(layers.len());
        let mut offsets = vec![0];
        let mut shape = input_shape;
        for (i, spec) in layers.iter().enumerate() {
            let block = Block::compile(spec, shape)
                .map_err(|e| invariant!("layer {i} ({}): {e}", spec.kind()))?;
            shape = block.output_shape();
            offsets.push(offsets[i] + block.param_len());
            blocks.push(block);
        }
        let total = *offsets.last().expect("offsets non-empty");
        Ok(ModelGraph {
            name: name.into(),
            input_shape,
            layers,
            blocks,
            offsets,
            params: vec![T::zero(); total],
            grads: vec![T::zero(); total],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_glorot(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, block) in self.blocks.iter().enumerate() {
            let mut offset = self.offsets[i];
            for (_, op) in block.param_ops() {
                let shapes = op.param_shapes();
                let wlen: usize = shapes[0].1.iter().product();
                let blen: usize = shapes[1].1.iter().product();
                let (fan_in, fan_out) = op.fans().expect("parametrized op");
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for p in &mut self.params[offset..offset + wlen] {
                    *p = T::of(rng.random_range(-limit..limit));
                }
                for p in &mut self.params[offset + wlen..offset + wlen + blen] {
                    *p = T::zero();
                }
                offset += wlen + blen;
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        self.blocks.last().expect("non-empty").output_shape()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Input shape of layer `i`; `i == layers().len()` gives the output.
    pub fn shape_at(&self, i: usize) -> Shape {
        if i == self.blocks.len() {
            self.output_shape()
        } else {
            self.blocks[i].input_shape()
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn grads(&self) -> &[T] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [T] {
        &mut self.grads
    }

    pub fn zero_grads(&mut self) {
        self.grads.fill(T::zero());
    }

    pub fn layer_params(&self, i: usize) -> &[T] {
        &self.params[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Range of layer `i` inside the flat parameter vector.
    pub fn layer_param_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn param_slots(&self) -> Vec<ParamSlot> {
        let mut slots = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            let mut offset = self.offsets[i];
            for (sub, op) in block.param_ops() {
                for (pname, shape) in op.param_shapes() {
                    let len = shape.iter().product();
                    slots.push(ParamSlot {
                        layer: i,
                        name: format!("layer{i}.{sub}.{pname}"),
                        shape,
                        offset,
                        len,
                    });
                    offset += len;
                }
            }
        }
        slots
    }

    /// Multiply-accumulates for one forward pass of one sample.
    pub fn macs_per_sample(&self) -> u64 {
        self.blocks
            .iter()
            .map(|b| b.macs().expect("compiled block"))
            .sum()
    }

    /// Converts to another precision, keeping parameter values.
    pub fn cast<U: Scalar>(&self) -> ModelGraph<U> {
        let convert = |v: &[T]| -> Vec<U> {
            v.iter()
                .map(|&x| U::of(x.to_f64().unwrap_or(f64::NAN)))
                .collect()
        };
        ModelGraph {
            name: self.name.clone(),
            input_shape: self.input_shape,
            layers: self.layers.clone(),
            blocks: self.blocks.clone(),
            offsets: self.offsets.clone(),
            params: convert(&self.params),
            grads: convert(&self.grads),
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let s = self.input_shape;
        if batch.shape().len() != 4 || batch.shape()[1..] != [s.h, s.w, s.c] {
            return Err(invariant!(
                "model {} expects [N, {}, {}, {}], got {:?}",
                self.name,
                s.h,
                s.w,
                s.c,
                batch.shape()
            ));
        }
        Ok(batch.batch())
    }

    pub fn forward_sample(&self, x: &[T]) -> Result<Vec<T>> {
        self.forward_from(0, x)
    }

    /// Runs layers `start..` on an activation shaped like layer `start`'s
    /// input.
    pub fn forward_from(&self, start: usize, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.shape_at(start).len() {
            return Err(invariant!(
                "activation length {} does not match layer {start} input {:?}",
                x.len(),
                self.shape_at(start)
            ));
        }
        let mut cur = x.to_vec();
        for i in start..self.blocks.len() {
            cur = self.blocks[i].forward(&cur, self.layer_params(i))?;
        }
        Ok(cur)
    }

    /// The input of every layer followed by the final output.
    pub fn activations(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        let mut acts = vec![x.to_vec()];
        for i in 0..self.blocks.len() {
            let y = self.blocks[i].forward(&acts[i], self.layer_params(i))?;
            acts.push(y);
        }
        Ok(acts)
    }

    /// Batched forward pass; `[N, C]` when the output is a feature vector.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_batch(batch)?;
        let outputs: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| self.forward_sample(batch.sample(i)))
            .collect::<Result<_>>()?;
        let out = self.output_shape();
        let shape = if out.h == 1 && out.w == 1 {
            vec![n, out.c]
        } else {
            vec![n, out.h, out.w, out.c]
        };
        Tensor::new(shape, outputs.concat())
    }

    /// Softmax probability of `class` for each sample.
    pub fn predict_proba(&self, batch: &Tensor<T>, class: usize) -> Result<Vec<T>> {
        let logits = self.forward(batch)?;
        let c = logits.len() / logits.batch();
        if class >= c {
            return Err(invariant!("class {class} out of range for {c} outputs"));
        }
        Ok((0..logits.batch())
            .map(|i| super::kernels::softmax(logits.sample(i))[class])
            .collect())
    }

    fn sample_gradient(&self, x: &[T], label: usize, scale: T, grads: &mut [T]) -> Result<(T, Vec<T>)> {
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut tapes = Vec::with_capacity(self.blocks.len());
        let mut cur = x.to_vec();
        for (i, block) in self.blocks.iter().enumerate() {
            let (y, tape) = block.forward_tape(&cur, self.layer_params(i))?;
            inputs.push(std::mem::replace(&mut cur, y));
            tapes.push(tape);
        }
        let (loss, mut g) = sample_cross_entropy(&cur, label)?;
        let logits = cur;
        for v in &mut g {
            *v *= scale;
        }
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let range = self.layer_param_range(i);
            g = block.backward(
                &inputs[i],
                &tapes[i],
                &g,
                &self.params[range.clone()],
                &mut grads[range],
            )?;
        }
        Ok((loss, logits))
    }

    /// Mean softmax cross-entropy over the batch. Overwrites the stored
    /// gradients with the gradient of that mean.
    pub fn loss_and_grad(&mut self, batch: &Tensor<T>, labels: &[usize]) -> Result<T> {
        Ok(self.loss_grad_logits(batch, labels)?.0)
    }

    /// [`loss_and_grad`](Self::loss_and_grad) that also returns the `[N, C]`
    /// logits of the forward pass.
    pub fn loss_grad_logits(&mut self, batch: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
        let n = self.check_batch(batch)?;
        if labels.len() != n {
            return Err(invariant!("{} labels for a batch of {n}", labels.len()));
        }
        let scale = T::one() / T::of(n as f64);
        let starts: Vec<usize> = (0..n).step_by(GRAD_CHUNK).collect();
        let this = &*self;
        let partials: Vec<(T, Vec<T>, Vec<T>)> = starts
            .par_iter()
            .map(|&start| {
                let mut grads = vec![T::zero(); this.params.len()];
                let mut loss = T::zero();
                let mut logits = Vec::new();
                for i in start..(start + GRAD_CHUNK).min(n) {
                    let (l, z) = this.sample_gradient(batch.sample(i), labels[i], scale, &mut grads)?;
                    loss += l;
                    logits.extend(z);
                }
                Ok((loss, grads, logits))
            })
            .collect::<Result<_>>()?;
        self.grads.fill(T::zero());
        let mut total = T::zero();
        let mut all_logits = Vec::with_capacity(n * self.output_shape().len());
        for (loss, grads, logits) in partials {
            total += loss;
            all_logits.extend(logits);
            for (g, p) in self.grads.iter_mut().zip(grads) {
                *g += p;
            }
        }
        let logits = Tensor::new(vec![n, self.output_shape().len()], all_logits)?;
        Ok((total * scale, logits))
    }
}
