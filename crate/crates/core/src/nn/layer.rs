//! Layer specifications and their compiled single-sample execution.
//!
//! Composite blocks (inverted residual, residual bottleneck) compile to a
//! main path of primitive ops plus an optional shortcut and post-activation,
//! so every block shares one forward/backward routine.

use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeometry, Shape};
use super::Scalar;
use crate::error::{invariant, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv2D {
        kernel: usize,
        stride: usize,
        padding: Padding,
        in_channels: usize,
        out_channels: usize,
    },
    DepthwiseConv2D {
        kernel: usize,
        stride: usize,
        padding: Padding,
        channels: usize,
    },
    PointwiseConv2D {
        stride: usize,
        in_channels: usize,
        out_channels: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
    ReLU6,
    ReLU,
    MaxPool2D {
        size: usize,
        stride: usize,
    },
    GlobalAvgPool,
    /// Expand 1×1 + ReLU6, depthwise 3×3 + ReLU6, linear 1×1 projection;
    /// identity skip when `stride == 1` and channel counts match.
    InvertedResidual {
        in_channels: usize,
        out_channels: usize,
        expansion: usize,
        stride: usize,
    },
    /// Reduce 1×1 + ReLU, 3×3 + ReLU, expand 1×1, shortcut add, ReLU. The
    /// shortcut is a strided 1×1 projection when the shape changes.
    ResidualBottleneck {
        in_channels: usize,
        mid_channels: usize,
        out_channels: usize,
        stride: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2D { .. } => "Conv2D",
            LayerSpec::DepthwiseConv2D { .. } => "DepthwiseConv2D",
            LayerSpec::PointwiseConv2D { .. } => "PointwiseConv2D",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::ReLU6 => "ReLU6",
            LayerSpec::ReLU => "ReLU",
            LayerSpec::MaxPool2D { .. } => "MaxPool2D",
            LayerSpec::GlobalAvgPool => "GlobalAvgPool",
            LayerSpec::InvertedResidual { .. } => "InvertedResidual",
            LayerSpec::ResidualBottleneck { .. } => "ResidualBottleneck",
            LayerSpec::Softmax => "Softmax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Op {
    Conv {
        k: usize,
        stride: usize,
        same: bool,
        cin: usize,
        cout: usize,
    },
    Depthwise {
        k: usize,
        stride: usize,
        same: bool,
        c: usize,
    },
    Dense {
        inp: usize,
        out: usize,
    },
    Relu,
    Relu6,
    MaxPool {
        size: usize,
        stride: usize,
    },
    Gap,
    Softmax,
}

impl Op {
    fn geometry(&self, input: Shape) -> Result<ConvGeometry> {
        let (k, stride, same, cout) = match *self {
            Op::Conv {
                k,
                stride,
                same,
                cout,
                ..
            } => (k, stride, same, cout),
            Op::Depthwise { k, stride, same, c } => (k, stride, same, c),
            Op::MaxPool { size, stride } => (size, stride, false, input.c),
            _ => unreachable!("only windowed ops have a geometry"),
        };
        if stride == 0 || k == 0 {
            return Err(invariant!("kernel and stride must be positive"));
        }
        let (oh, pad_top) = kernels::window_geometry(input.h, k, stride, same)
            .ok_or_else(|| invariant!("window {k} larger than input height {}", input.h))?;
        let (ow, pad_left) = kernels::window_geometry(input.w, k, stride, same)
            .ok_or_else(|| invariant!("window {k} larger than input width {}", input.w))?;
        Ok(ConvGeometry {
            input,
            output: Shape::new(oh, ow, cout),
            k,
            stride,
            pad_top,
            pad_left,
        })
    }

    pub(crate) fn out_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            Op::Conv { cin, .. } => {
                if input.c != cin {
                    return Err(invariant!("conv expects {cin} channels, got {}", input.c));
                }
                Ok(self.geometry(input)?.output)
            }
            Op::Depthwise { c, .. } => {
                if input.c != c {
                    return Err(invariant!("depthwise conv expects {c} channels, got {}", input.c));
                }
                Ok(self.geometry(input)?.output)
            }
            Op::MaxPool { .. } => Ok(self.geometry(input)?.output),
            Op::Dense { inp, out } => {
                if input.len() != inp {
                    return Err(invariant!("dense expects {inp} features, got {}", input.len()));
                }
                Ok(Shape::flat(out))
            }
            Op::Gap => Ok(Shape::flat(input.c)),
            Op::Relu | Op::Relu6 | Op::Softmax => Ok(input),
        }
    }

    /// Parameter tensor shapes, weights first then bias.
    pub(crate) fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            Op::Conv { k, cin, cout, .. } => {
                vec![("weight", vec![k, k, cin, cout]), ("bias", vec![cout])]
            }
            Op::Depthwise { k, c, .. } => vec![("weight", vec![k, k, c]), ("bias", vec![c])],
            Op::Dense { inp, out } => vec![("weight", vec![inp, out]), ("bias", vec![out])],
            _ => Vec::new(),
        }
    }

    pub(crate) fn param_len(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    /// `(fan_in, fan_out)` of the weight tensor.
    pub(crate) fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            Op::Conv { k, cin, cout, .. } => Some((k * k * cin, k * k * cout)),
            Op::Depthwise { k, .. } => Some((k * k, k * k)),
            Op::Dense { inp, out } => Some((inp, out)),
            _ => None,
        }
    }

    /// Multiply-accumulates for one sample.
    pub(crate) fn macs(&self, input: Shape) -> Result<u64> {
        let out = self.out_shape(input)?;
        Ok(match *self {
            Op::Conv { k, cin, cout, .. } => (out.h * out.w * k * k * cin * cout) as u64,
            Op::Depthwise { k, c, .. } => (out.h * out.w * k * k * c) as u64,
            Op::Dense { inp, out } => (inp * out) as u64,
            _ => 0,
        })
    }

    pub(crate) fn forward<T: Scalar>(&self, input: Shape, x: &[T], params: &[T]) -> Result<Vec<T>> {
        Ok(match *self {
            Op::Conv { .. } => {
                let g = self.geometry(input)?;
                let (w, b) = params.split_at(params.len() - g.output.c);
                kernels::conv_forward(&g, x, w, b)
            }
            Op::Depthwise { .. } => {
                let g = self.geometry(input)?;
                let (w, b) = params.split_at(params.len() - g.output.c);
                kernels::depthwise_forward(&g, x, w, b)
            }
            Op::Dense { out, .. } => {
                let (w, b) = params.split_at(params.len() - out);
                kernels::dense_forward(x, w, b)
            }
            Op::Relu => kernels::relu_forward(x),
            Op::Relu6 => kernels::relu6_forward(x),
            Op::MaxPool { .. } => kernels::maxpool_forward(&self.geometry(input)?, x),
            Op::Gap => kernels::gap_forward(input, x),
            Op::Softmax => kernels::softmax(x),
        })
    }

    pub(crate) fn backward<T: Scalar>(
        &self,
        input: Shape,
        x: &[T],
        dy: &[T],
        params: &[T],
        dparams: &mut [T],
    ) -> Result<Vec<T>> {
        Ok(match *self {
            Op::Conv { .. } => {
                let g = self.geometry(input)?;
                let split = params.len() - g.output.c;
                let (dw, db) = dparams.split_at_mut(split);
                kernels::conv_backward(&g, x, &params[..split], dy, dw, db)
            }
            Op::Depthwise { .. } => {
                let g = self.geometry(input)?;
                let split = params.len() - g.output.c;
                let (dw, db) = dparams.split_at_mut(split);
                kernels::depthwise_backward(&g, x, &params[..split], dy, dw, db)
            }
            Op::Dense { out, .. } => {
                let split = params.len() - out;
                let (dw, db) = dparams.split_at_mut(split);
                kernels::dense_backward(x, &params[..split], dy, dw, db)
            }
            Op::Relu => kernels::relu_backward(x, dy),
            Op::Relu6 => kernels::relu6_backward(x, dy),
            Op::MaxPool { .. } => kernels::maxpool_backward(&self.geometry(input)?, x, dy),
            Op::Gap => kernels::gap_backward(input, dy),
            Op::Softmax => kernels::softmax_backward(x, dy),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Shortcut {
    None,
    Identity,
    Project(Op),
}

/// A layer compiled against a concrete input shape.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Block {
    main: Vec<Op>,
    shortcut: Shortcut,
    post: Option<Op>,
    /// Input shape of each main op, then the block output shape.
    shapes: Vec<Shape>,
    param_len: usize,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub(crate) struct Tape<T> {
    /// Inputs to main ops `1..`; op 0 reads the block input.
    inner: Vec<Vec<T>>,
    /// Pre-activation sum, when there is a post-activation.
    sum: Option<Vec<T>>,
}

impl Block {
    pub(crate) fn compile(spec: &LayerSpec, input: Shape) -> Result<Block> {
        let (main, shortcut, post) = match *spec {
            LayerSpec::Conv2D {
                kernel,
                stride,
                padding,
                in_channels,
                out_channels,
            } => (
                vec![Op::Conv {
                    k: kernel,
                    stride,
                    same: padding == Padding::Same,
                    cin: in_channels,
                    cout: out_channels,
                }],
                Shortcut::None,
                None,
            ),
            LayerSpec::DepthwiseConv2D {
                kernel,
                stride,
                padding,
                channels,
            } => (
                vec![Op::Depthwise {
                    k: kernel,
                    stride,
                    same: padding == Padding::Same,
                    c: channels,
                }],
                Shortcut::None,
                None,
            ),
            LayerSpec::PointwiseConv2D {
                stride,
                in_channels,
                out_channels,
            } => (
                vec![pointwise(in_channels, out_channels, stride)],
                Shortcut::None,
                None,
            ),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => (
                vec![Op::Dense {
                    inp: in_features,
                    out: out_features,
                }],
                Shortcut::None,
                None,
            ),
            LayerSpec::ReLU6 => (vec![Op::Relu6], Shortcut::None, None),
            LayerSpec::ReLU => (vec![Op::Relu], Shortcut::None, None),
            LayerSpec::MaxPool2D { size, stride } => {
                (vec![Op::MaxPool { size, stride }], Shortcut::None, None)
            }
            LayerSpec::GlobalAvgPool => (vec![Op::Gap], Shortcut::None, None),
            LayerSpec::Softmax => (vec![Op::Softmax], Shortcut::None, None),
            LayerSpec::InvertedResidual {
                in_channels,
                out_channels,
                expansion,
                stride,
            } => {
                if expansion == 0 {
                    return Err(invariant!("expansion factor must be at least 1"));
                }
                let hidden = in_channels * expansion;
                let main = vec![
                    pointwise(in_channels, hidden, 1),
                    Op::Relu6,
                    Op::Depthwise {
                        k: 3,
                        stride,
                        same: true,
                        c: hidden,
                    },
                    Op::Relu6,
                    pointwise(hidden, out_channels, 1),
                ];
                let shortcut = if stride == 1 && in_channels == out_channels {
                    Shortcut::Identity
                } else {
                    Shortcut::None
                };
                (main, shortcut, None)
            }
            LayerSpec::ResidualBottleneck {
                in_channels,
                mid_channels,
                out_channels,
                stride,
            } => {
                let main = vec![
                    pointwise(in_channels, mid_channels, 1),
                    Op::Relu,
                    Op::Conv {
                        k: 3,
                        stride,
                        same: true,
                        cin: mid_channels,
                        cout: mid_channels,
                    },
                    Op::Relu,
                    pointwise(mid_channels, out_channels, 1),
                ];
                let shortcut = if stride == 1 && in_channels == out_channels {
                    Shortcut::Identity
                } else {
                    Shortcut::Project(pointwise(in_channels, out_channels, stride))
                };
                (main, shortcut, Some(Op::Relu))
            }
        };
        let mut shapes = vec![input];
        let mut shape = input;
        for op in &main {
            shape = op.out_shape(shape)?;
            shapes.push(shape);
        }
        match &shortcut {
            Shortcut::None => {}
            Shortcut::Identity => {
                if input != shape {
                    return Err(invariant!("identity shortcut shape mismatch"));
                }
            }
            Shortcut::Project(op) => {
                if op.out_shape(input)? != shape {
                    return Err(invariant!("projection shortcut shape mismatch"));
                }
            }
        }
        let param_len = main.iter().map(Op::param_len).sum::<usize>()
            + match &shortcut {
                Shortcut::Project(op) => op.param_len(),
                _ => 0,
            };
        Ok(Block {
            main,
            shortcut,
            post,
            shapes,
            param_len,
        })
    }

    pub(crate) fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub(crate) fn output_shape(&self) -> Shape {
        *self.shapes.last().expect("at least one shape")
    }

    pub(crate) fn param_len(&self) -> usize {
        self.param_len
    }

    /// Every parametrized op in parameter order, with a sub-name.
    pub(crate) fn param_ops(&self) -> Vec<(String, Op)> {
        let mut ops: Vec<(String, Op)> = self
            .main
            .iter()
            .enumerate()
            .filter(|(_, op)| op.param_len() > 0)
            .map(|(i, op)| (format!("main{i}"), *op))
            .collect();
        if let Shortcut::Project(op) = &self.shortcut {
            ops.push(("shortcut".to_owned(), *op));
        }
        ops
    }

    pub(crate) fn macs(&self) -> Result<u64> {
        let mut total = 0;
        for (op, &shape) in self.main.iter().zip(&self.shapes) {
            total += op.macs(shape)?;
        }
        if let Shortcut::Project(op) = &self.shortcut {
            total += op.macs(self.shapes[0])?;
        }
        Ok(total)
    }

    fn run<T: Scalar>(&self, x: &[T], params: &[T], keep: bool) -> Result<(Vec<T>, Tape<T>)> {
        let mut tape = Tape {
            inner: Vec::new(),
            sum: None,
        };
        let mut offset = 0;
        let mut cur: Option<Vec<T>> = None;
        for (i, op) in self.main.iter().enumerate() {
            let n = op.param_len();
            let input = cur.as_deref().unwrap_or(x);
            let y = op.forward(self.shapes[i], input, &params[offset..offset + n])?;
            offset += n;
            if let Some(prev) = cur.take() {
                if keep {
                    tape.inner.push(prev);
                }
            }
            cur = Some(y);
        }
        let mut y = cur.expect("non-empty main path");
        match &self.shortcut {
            Shortcut::None => {}
            Shortcut::Identity => {
                for (a, &b) in y.iter_mut().zip(x) {
                    *a += b;
                }
            }
            Shortcut::Project(op) => {
                let n = op.param_len();
                let s = op.forward(self.shapes[0], x, &params[offset..offset + n])?;
                for (a, b) in y.iter_mut().zip(s) {
                    *a += b;
                }
            }
        }
        if let Some(post) = &self.post {
            let out = post.forward(self.output_shape(), &y, &[])?;
            if keep {
                tape.sum = Some(y);
            }
            y = out;
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("layer output is not finite".to_owned()));
        }
        Ok((y, tape))
    }

    pub(crate) fn forward<T: Scalar>(&self, x: &[T], params: &[T]) -> Result<Vec<T>> {
        Ok(self.run(x, params, false)?.0)
    }

    pub(crate) fn forward_tape<T: Scalar>(&self, x: &[T], params: &[T]) -> Result<(Vec<T>, Tape<T>)> {
        self.run(x, params, true)
    }

    /// Input gradient; parameter gradients are accumulated into `dparams`.
    pub(crate) fn backward<T: Scalar>(
        &self,
        x: &[T],
        tape: &Tape<T>,
        dy: &[T],
        params: &[T],
        dparams: &mut [T],
    ) -> Result<Vec<T>> {
        let d_sum = match (&self.post, &tape.sum) {
            (Some(post), Some(sum)) => {
                post.backward(self.output_shape(), sum, dy, &[], &mut [])?
            }
            (Some(_), None) => return Err(invariant!("tape is missing the block sum")),
            (None, _) => dy.to_vec(),
        };
        let mut offsets = Vec::with_capacity(self.main.len());
        let mut offset = 0;
        for op in &self.main {
            offsets.push(offset);
            offset += op.param_len();
        }
        let mut g = d_sum.clone();
        for (i, op) in self.main.iter().enumerate().rev() {
            let input: &[T] = if i == 0 { x } else { &tape.inner[i - 1] };
            let n = op.param_len();
            let o = offsets[i];
            g = op.backward(
                self.shapes[i],
                input,
                &g,
                &params[o..o + n],
                &mut dparams[o..o + n],
            )?;
        }
        match &self.shortcut {
            Shortcut::None => {}
            Shortcut::Identity => {
                for (a, &b) in g.iter_mut().zip(&d_sum) {
                    *a += b;
                }
            }
            Shortcut::Project(op) => {
                let n = op.param_len();
                let gs = op.backward(
                    self.shapes[0],
                    x,
                    &d_sum,
                    &params[offset..offset + n],
                    &mut dparams[offset..offset + n],
                )?;
                for (a, b) in g.iter_mut().zip(gs) {
                    *a += b;
                }
            }
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("layer gradient is not finite".to_owned()));
        }
        Ok(g)
    }
}

fn pointwise(cin: usize, cout: usize, stride: usize) -> Op {
    Op::Conv {
        k: 1,
        stride,
        same: true,
        cin,
        cout,
    }
}
