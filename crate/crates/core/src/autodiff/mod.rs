//! Reverse-mode automatic differentiation over a Wengert tape.
//!
//! Every primitive appends one node holding its output value and whatever it
//! needs for its backward rule. Nodes only ever reference earlier nodes, so
//! the tape is topologically ordered by construction and [`Tape::backward`]
//! is a single reverse sweep.

mod gradcheck;
pub(crate) mod kernels;

use rand::Rng;

pub use gradcheck::{gradcheck, gradcheck_with, GradcheckOptions};
pub use kernels::Padding2d;

use crate::error::{Error, Result};
use crate::rng::Pcg32;
use crate::tensor::Tensor;
use kernels::{ConvGeometry, PoolGeometry};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// User-supplied backward rule for [`Tape::custom`].
///
/// Receives the input values, the output value and the upstream gradient and
/// returns one gradient per input, each shaped like that input.
pub trait BackwardRule {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

impl<F> BackwardRule for F
where
    F: Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor>,
{
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        self(inputs, output, grad)
    }
}

enum Op {
    Leaf,
    Conv {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    TemporalSpatial(Box<TemporalSpatial>),
    AvgPool {
        input: Var,
        geom: PoolGeometry,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Elu {
        input: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    LogSoftmax {
        input: Var,
    },
    Mask {
        input: Var,
        mask: Vec<f64>,
    },
    Reshape {
        input: Var,
    },
    Sum {
        input: Var,
    },
    Mul {
        lhs: Var,
        rhs: Var,
    },
    Scale {
        input: Var,
        factor: f64,
    },
    Nll {
        input: Var,
        labels: Vec<usize>,
        weights: Option<Vec<f64>>,
    },
    Custom {
        inputs: Vec<Var>,
        rule: Box<dyn BackwardRule>,
    },
}

struct TemporalSpatial {
    input: Var,
    temporal: Var,
    bias: Option<Var>,
    spatial: Var,
    depth: usize,
    spatial_geom: ConvGeometry,
    temporal_geom: ConvGeometry,
    projected: Vec<f64>,
    repeated: Vec<f64>,
    row_sums: Vec<f64>,
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// A tape is single-owner; build a fresh one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every leaf that requires them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn finite(op: &'static str, data: Vec<f64>) -> Result<Vec<f64>> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(data)
    } else {
        Err(Error::NonFinite { op, context: None })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Option<Var>]) -> bool {
        vars.iter().flatten().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a leaf whose gradient will be reported by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: (usize, usize),
        padding: Padding2d,
    ) -> Result<Var> {
        const OP: &str = "conv2d";
        let x = self.value(input).dims4(OP)?;
        let k = self.value(kernel).dims4(OP)?;
        self.grouped_conv(OP, input, kernel, bias, x, k, 1, stride, padding)
    }

    /// Per-channel convolution: input channel `c` feeds output channels
    /// `c*D .. (c+1)*D` where `D = kernel_count / C`.
    pub fn depthwise_conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride: (usize, usize),
        padding: Padding2d,
    ) -> Result<Var> {
        const OP: &str = "depthwise_conv2d";
        let x = self.value(input).dims4(OP)?;
        let k = self.value(kernel).dims4(OP)?;
        if k[1] != 1 {
            return Err(Error::shape(OP, format!("kernel must be [C*D, 1, kh, kw], got {k:?}")));
        }
        if k[0] % x[1] != 0 {
            return Err(Error::shape(
                OP,
                format!("{} kernels is not a multiple of {} input channels", k[0], x[1]),
            ));
        }
        self.grouped_conv(OP, input, kernel, None, x, k, x[1], stride, padding)
    }

    /// Depthwise convolution followed by a bias-free 1×1 pointwise convolution.
    pub fn separable_conv2d(
        &mut self,
        input: Var,
        depthwise_kernel: Var,
        pointwise_kernel: Var,
        padding: Padding2d,
    ) -> Result<Var> {
        let pk = self.value(pointwise_kernel).dims4("separable_conv2d")?;
        if pk[2] != 1 || pk[3] != 1 {
            return Err(Error::shape(
                "separable_conv2d",
                format!("pointwise kernel must be [F, C*D, 1, 1], got {pk:?}"),
            ));
        }
        let depthwise = self.depthwise_conv2d(input, depthwise_kernel, (1, 1), padding)?;
        self.conv2d(depthwise, pointwise_kernel, None, (1, 1), Padding2d::VALID)
    }

    #[allow(clippy::too_many_arguments)]
    fn grouped_conv(
        &mut self,
        op: &'static str,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        x: [usize; 4],
        k: [usize; 4],
        groups: usize,
        stride: (usize, usize),
        padding: Padding2d,
    ) -> Result<Var> {
        let geom = ConvGeometry::new(op, x, k, groups, stride, padding)?;
        if let Some(b) = bias {
            let bs = self.value(b).shape();
            if bs != [geom.f] {
                return Err(Error::shape(op, format!("bias {bs:?} does not match {} filters", geom.f)));
            }
        }
        let out = kernels::conv_forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(geom.output_shape(), finite(op, out)?)?;
        let rg = self.any_grad(&[Some(input), Some(kernel), bias]);
        Ok(self.push(
            value,
            Op::Conv {
                input,
                kernel,
                bias,
                geom,
            },
            rg,
        ))
    }

    /// A single-channel temporal convolution (`[F, 1, 1, K]` kernels, optional
    /// bias) followed by a depthwise spatial convolution (`[F*D, 1, kh, 1]`,
    /// valid, no bias), with the spatial projection evaluated first.
    ///
    /// Both stages are linear, so this equals
    /// `depthwise_conv2d(conv2d(x, temporal, bias, padding), spatial)` up to
    /// rounding while filtering `F*D` projected rows instead of every input row.
    pub fn temporal_spatial_conv(
        &mut self,
        input: Var,
        temporal: Var,
        bias: Option<Var>,
        spatial: Var,
        padding: Padding2d,
    ) -> Result<Var> {
        const OP: &str = "temporal_spatial_conv";
        let x = self.value(input).dims4(OP)?;
        let t = self.value(temporal).dims4(OP)?;
        let d = self.value(spatial).dims4(OP)?;
        if x[1] != 1 || t[1] != 1 || t[2] != 1 || d[1] != 1 || d[3] != 1 {
            return Err(Error::shape(
                OP,
                format!("need input [N,1,H,W], temporal [F,1,1,K], spatial [F*D,1,kh,1]; got {x:?}, {t:?}, {d:?}"),
            ));
        }
        if padding.top != 0 || padding.bottom != 0 {
            return Err(Error::shape(OP, "temporal padding must not pad rows"));
        }
        if d[0] % t[0] != 0 {
            return Err(Error::shape(
                OP,
                format!("{} spatial kernels is not a multiple of {} temporal filters", d[0], t[0]),
            ));
        }
        let (f, depth, fd, kh) = (t[0], d[0] / t[0], d[0], d[2]);
        if let Some(b) = bias {
            let bs = self.value(b).shape();
            if bs != [f] {
                return Err(Error::shape(OP, format!("bias {bs:?} does not match {f} filters")));
            }
        }
        let spatial_geom = ConvGeometry::new(OP, x, d, 1, (1, 1), Padding2d::VALID)?;
        let projected = kernels::conv_forward(&spatial_geom, self.value(input).data(), self.value(spatial).data(), None);
        let tv = self.value(temporal).data();
        let k = t[3];
        let repeated: Vec<f64> = (0..fd).flat_map(|j| tv[(j / depth) * k..][..k].iter().copied()).collect();
        let row_sums: Vec<f64> = self.value(spatial).data().chunks(kh).map(|r| r.iter().sum()).collect();
        let bias_eff: Option<Vec<f64>> = bias.map(|b| {
            let bv = self.value(b).data();
            (0..fd).map(|j| bv[j / depth] * row_sums[j]).collect()
        });
        let temporal_geom = ConvGeometry::new(OP, spatial_geom.output_shape(), [fd, 1, 1, k], fd, (1, 1), padding)?;
        let out = kernels::conv_forward(&temporal_geom, &projected, &repeated, bias_eff.as_deref());
        let value = Tensor::new(temporal_geom.output_shape(), finite(OP, out)?)?;
        let rg = self.any_grad(&[Some(input), Some(temporal), bias, Some(spatial)]);
        debug_assert_eq!(f * depth, fd);
        Ok(self.push(
            value,
            Op::TemporalSpatial(Box::new(TemporalSpatial {
                input,
                temporal,
                bias,
                spatial,
                depth,
                spatial_geom,
                temporal_geom,
                projected,
                repeated,
                row_sums,
            })),
            rg,
        ))
    }

    pub fn avg_pool2d(&mut self, input: Var, window: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        const OP: &str = "avg_pool2d";
        let x = self.value(input).dims4(OP)?;
        let geom = PoolGeometry::new(OP, x, window, stride)?;
        let out = kernels::avg_pool_forward(&geom, self.value(input).data());
        let value = Tensor::new([x[0], x[1], geom.ho, geom.wo], out)?;
        let rg = self.requires_grad(input);
        Ok(self.push(value, Op::AvgPool { input, geom }, rg))
    }

    /// Window maximum; ties resolve to the first element in row-major order.
    pub fn max_pool2d(&mut self, input: Var, window: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        const OP: &str = "max_pool2d";
        let x = self.value(input).dims4(OP)?;
        let geom = PoolGeometry::new(OP, x, window, stride)?;
        let (out, argmax) = kernels::max_pool_forward(&geom, self.value(input).data());
        let value = Tensor::new([x[0], x[1], geom.ho, geom.wo], out)?;
        let rg = self.requires_grad(input);
        Ok(self.push(value, Op::MaxPool { input, argmax }, rg))
    }

    /// ELU with unit scale: `x` for `x > 0`, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let out = x.data().iter().map(|&v| if v > 0.0 { v } else { v.exp_m1() }).collect();
        let value = x.with_data(finite("elu", out)?);
        let rg = self.requires_grad(input);
        Ok(self.push(value, Op::Elu { input }, rg))
    }

    /// `input · weightᵀ + bias` for `input: [N, K]`, `weight: [M, K]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        const OP: &str = "linear";
        let [n, k] = self.value(input).dims2(OP)?;
        let [m, k2] = self.value(weight).dims2(OP)?;
        if k != k2 {
            return Err(Error::shape(OP, format!("input has {k} features, weight expects {k2}")));
        }
        let mut out = vec![0.0; n * m];
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.shape() != [m] {
                return Err(Error::shape(OP, format!("bias {:?} does not match {m} outputs", bv.shape())));
            }
            for row in out.chunks_mut(m) {
                row.copy_from_slice(bv.data());
            }
        }
        kernels::gemm(
            n,
            k,
            m,
            kernels::View {
                data: self.value(input).data(),
                offset: 0,
                rs: k,
                cs: 1,
            },
            kernels::View {
                data: self.value(weight).data(),
                offset: 0,
                rs: 1,
                cs: k,
            },
            1.0,
            kernels::ViewMut {
                data: &mut out,
                offset: 0,
                rs: m,
                cs: 1,
            },
        );
        let value = Tensor::new([n, m], finite(OP, out)?)?;
        let rg = self.any_grad(&[Some(input), Some(weight), bias]);
        Ok(self.push(value, Op::Linear { input, weight, bias }, rg))
    }

    /// Row-wise log-softmax of a `[N, K]` tensor, stabilised by max subtraction.
    pub fn log_softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let [_, k] = x.dims2("log_softmax")?;
        let mut out = Vec::with_capacity(x.len());
        for row in x.data().chunks(k) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|v| v - lse));
        }
        let value = x.with_data(finite("log_softmax", out)?);
        let rg = self.requires_grad(input);
        Ok(self.push(value, Op::LogSoftmax { input }, rg))
    }

    /// Inverted dropout. Identity (no node recorded) in eval mode or at rate 0.
    pub fn dropout(&mut self, input: Var, rate: f64, rng: &mut Pcg32, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid("dropout", format!("rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - rate);
        let x = self.value(input);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = x.with_data(out);
        let rg = self.requires_grad(input);
        Ok(self.push(value, Op::Mask { input, mask }, rg))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).reshape(shape)?;
        let rg = self.requires_grad(input);
        Ok(self.push(value, Op::Reshape { input }, rg))
    }

    /// Collapses `[N, ...]` to `[N, rest]`.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let shape = self.value(input).shape();
        let n = shape[0];
        let rest = shape[1..].iter().product();
        self.reshape(input, &[n, rest])
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let value = Tensor::scalar(self.value(input).sum());
        let rg = self.requires_grad(input);
        self.push(value, Op::Sum { input }, rg)
    }

    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
        let out = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let value = a.with_data(finite("mul", out)?);
        let rg = self.any_grad(&[Some(lhs), Some(rhs)]);
        Ok(self.push(value, Op::Mul { lhs, rhs }, rg))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let x = self.value(input);
        let out = x.data().iter().map(|v| v * factor).collect();
        let value = x.with_data(finite("scale", out)?);
        let rg = self.requires_grad(input);
        Ok(self.push(value, Op::Scale { input, factor }, rg))
    }

    /// Batch-mean negative log-likelihood of `labels` under `log_probs: [N, K]`,
    /// each term multiplied by `weights[label]` when weights are given.
    pub fn nll(&mut self, log_probs: Var, labels: &[usize], weights: Option<&[f64]>) -> Result<Var> {
        const OP: &str = "nll";
        let lp = self.value(log_probs);
        let [n, k] = lp.dims2(OP)?;
        if labels.len() != n {
            return Err(Error::shape(OP, format!("{} labels for {n} rows", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::invalid(OP, format!("label {bad} out of range for {k} classes")));
        }
        if let Some(w) = weights {
            if w.len() != k {
                return Err(Error::shape(OP, format!("{} weights for {k} classes", w.len())));
            }
        }
        let mut total = 0.0;
        for (row, &label) in lp.data().chunks(k).zip(labels) {
            let term = -row[label];
            total += match weights {
                Some(w) => w[label] * term,
                None => term,
            };
        }
        let loss = total / n as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite { op: OP, context: None });
        }
        let rg = self.requires_grad(log_probs);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Nll {
                input: log_probs,
                labels: labels.to_vec(),
                weights: weights.map(<[f64]>::to_vec),
            },
            rg,
        ))
    }

    /// Records an arbitrary differentiable function given its output and backward rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, rule: impl BackwardRule + 'static) -> Var {
        let rg = inputs.iter().any(|v| self.requires_grad(*v));
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                rule: Box::new(rule),
            },
            rg,
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut leaf_grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                leaf_grads[idx] = Some(g);
                continue;
            }
            for (var, contribution) in self.node_backward(node, &g)? {
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(Gradients { grads: leaf_grads })
    }

    fn node_backward(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                input,
                kernel,
                bias,
                geom,
            } => {
                let (gx, gk, gb) = kernels::conv_backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*kernel).data(),
                    g.data(),
                    wants(*input),
                    wants(*kernel),
                    bias.is_some_and(wants),
                );
                if let Some(gx) = gx {
                    out.push((*input, self.value(*input).with_data(gx)));
                }
                if let Some(gk) = gk {
                    out.push((*kernel, self.value(*kernel).with_data(gk)));
                }
                if let (Some(b), Some(gb)) = (bias, gb) {
                    out.push((*b, self.value(*b).with_data(gb)));
                }
            }
            Op::TemporalSpatial(ts) => {
                let TemporalSpatial {
                    input,
                    temporal,
                    bias,
                    spatial,
                    depth,
                    ref spatial_geom,
                    ref temporal_geom,
                    ref projected,
                    ref repeated,
                    ref row_sums,
                } = **ts;
                let (gp, grep, gbe) = kernels::conv_backward(
                    temporal_geom,
                    projected,
                    repeated,
                    g.data(),
                    wants(input) || wants(spatial),
                    wants(temporal),
                    true,
                );
                let gbe = gbe.expect("requested");
                if wants(temporal) {
                    let t = self.value(temporal);
                    let k = t.shape()[3];
                    let mut gt = vec![0.0; t.len()];
                    for (j, row) in grep.expect("requested").chunks(k).enumerate() {
                        for (acc, v) in gt[(j / depth) * k..][..k].iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    out.push((temporal, t.with_data(gt)));
                }
                if let Some(b) = bias.filter(|b| wants(*b)) {
                    let mut gb = vec![0.0; self.value(b).len()];
                    for (j, (v, rs)) in gbe.iter().zip(row_sums).enumerate() {
                        gb[j / depth] += v * rs;
                    }
                    out.push((b, self.value(b).with_data(gb)));
                }
                if let Some(gp) = gp {
                    let (gx, gd, _) = kernels::conv_backward(
                        spatial_geom,
                        self.value(input).data(),
                        self.value(spatial).data(),
                        &gp,
                        wants(input),
                        wants(spatial),
                        false,
                    );
                    if let Some(gx) = gx {
                        out.push((input, self.value(input).with_data(gx)));
                    }
                    if let Some(mut gd) = gd {
                        if let Some(b) = bias {
                            let bv = self.value(b).data();
                            let kh = gd.len() / gbe.len();
                            for (j, row) in gd.chunks_mut(kh).enumerate() {
                                let shift = gbe[j] * bv[j / depth];
                                row.iter_mut().for_each(|v| *v += shift);
                            }
                        }
                        out.push((spatial, self.value(spatial).with_data(gd)));
                    }
                }
            }
            Op::AvgPool { input, geom } => {
                let gx = kernels::avg_pool_backward(geom, g.data());
                out.push((*input, self.value(*input).with_data(gx)));
            }
            Op::MaxPool { input, argmax } => {
                let mut gx = vec![0.0; self.value(*input).len()];
                for (&src, gv) in argmax.iter().zip(g.data()) {
                    gx[src] += gv;
                }
                out.push((*input, self.value(*input).with_data(gx)));
            }
            Op::Elu { input } => {
                let x = self.value(*input);
                let gx = x
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .zip(g.data())
                    .map(|((&xv, &yv), &gv)| if xv > 0.0 { gv } else { gv * (yv + 1.0) })
                    .collect();
                out.push((*input, x.with_data(gx)));
            }
            Op::Linear { input, weight, bias } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let [n, k] = x.dims2("linear")?;
                let m = w.shape()[0];
                if wants(*input) {
                    let mut gx = vec![0.0; n * k];
                    kernels::gemm(
                        n,
                        m,
                        k,
                        kernels::View { data: g.data(), offset: 0, rs: m, cs: 1 },
                        kernels::View { data: w.data(), offset: 0, rs: k, cs: 1 },
                        0.0,
                        kernels::ViewMut { data: &mut gx, offset: 0, rs: k, cs: 1 },
                    );
                    out.push((*input, x.with_data(gx)));
                }
                if wants(*weight) {
                    let mut gw = vec![0.0; m * k];
                    kernels::gemm(
                        m,
                        n,
                        k,
                        kernels::View { data: g.data(), offset: 0, rs: 1, cs: m },
                        kernels::View { data: x.data(), offset: 0, rs: k, cs: 1 },
                        0.0,
                        kernels::ViewMut { data: &mut gw, offset: 0, rs: k, cs: 1 },
                    );
                    out.push((*weight, w.with_data(gw)));
                }
                if let Some(b) = bias.filter(|b| wants(*b)) {
                    let mut gb = vec![0.0; m];
                    for row in g.data().chunks(m) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    out.push((b, self.value(b).with_data(gb)));
                }
            }
            Op::LogSoftmax { input } => {
                let k = *node.value.shape().last().expect("2-d");
                let mut gx = Vec::with_capacity(g.len());
                for (yrow, grow) in node.value.data().chunks(k).zip(g.data().chunks(k)) {
                    let gsum: f64 = grow.iter().sum();
                    gx.extend(yrow.iter().zip(grow).map(|(y, gv)| gv - y.exp() * gsum));
                }
                out.push((*input, node.value.with_data(gx)));
            }
            Op::Mask { input, mask } => {
                let gx = g.data().iter().zip(mask).map(|(a, b)| a * b).collect();
                out.push((*input, g.with_data(gx)));
            }
            Op::Reshape { input } => {
                out.push((*input, g.reshape(self.value(*input).shape())?));
            }
            Op::Sum { input } => {
                out.push((*input, Tensor::full(self.value(*input).shape(), g.item())));
            }
            Op::Mul { lhs, rhs } => {
                let (a, b) = (self.value(*lhs), self.value(*rhs));
                if wants(*lhs) {
                    let ga = g.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
                    out.push((*lhs, a.with_data(ga)));
                }
                if wants(*rhs) {
                    let gb = g.data().iter().zip(a.data()).map(|(x, y)| x * y).collect();
                    out.push((*rhs, b.with_data(gb)));
                }
            }
            Op::Scale { input, factor } => {
                let gx = g.data().iter().map(|v| v * factor).collect();
                out.push((*input, g.with_data(gx)));
            }
            Op::Nll {
                input,
                labels,
                weights,
            } => {
                let lp = self.value(*input);
                let k = lp.shape()[1];
                let n = labels.len() as f64;
                let mut gx = vec![0.0; lp.len()];
                for (row, &label) in labels.iter().enumerate() {
                    let w = weights.as_ref().map_or(1.0, |w| w[label]);
                    gx[row * k + label] = -w * g.item() / n;
                }
                out.push((*input, lp.with_data(gx)));
            }
            Op::Custom { inputs, rule } => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let grads = rule.backward(&values, &node.value, g);
                if grads.len() != inputs.len() {
                    return Err(Error::shape(
                        "custom",
                        format!("backward returned {} gradients for {} inputs", grads.len(), inputs.len()),
                    ));
                }
                for (var, grad) in inputs.iter().zip(grads) {
                    if grad.shape() != self.value(*var).shape() {
                        return Err(Error::shape("custom", "gradient shape differs from input shape"));
                    }
                    if wants(*var) {
                        out.push((*var, grad));
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(n: usize, seed: f64) -> Tensor {
        Tensor::from_fn([n], |i| ((i as f64 + 1.0) * seed).sin())
    }

    #[test]
    fn fused_temporal_spatial_matches_composition() {
        let x = probe(2 * 5 * 9, 0.7).reshape([2, 1, 5, 9]).unwrap();
        let t = probe(3 * 4, 1.3).reshape([3, 1, 1, 4]).unwrap();
        let b = probe(3, 2.1);
        let d = probe(6 * 5, 0.4).reshape([6, 1, 5, 1]).unwrap();
        let w = probe(2 * 6 * 9, 0.9).reshape([2, 6, 1, 9]).unwrap();
        let pad = Padding2d::same(1, 4);

        let run = |fused: bool| {
            let mut tape = Tape::new();
            let vars = [x.clone(), t.clone(), b.clone(), d.clone()].map(|v| tape.param(v));
            let y = if fused {
                tape.temporal_spatial_conv(vars[0], vars[1], Some(vars[2]), vars[3], pad)
                    .unwrap()
            } else {
                let h = tape.conv2d(vars[0], vars[1], Some(vars[2]), (1, 1), pad).unwrap();
                tape.depthwise_conv2d(h, vars[3], (1, 1), Padding2d::VALID).unwrap()
            };
            let wv = tape.constant(w.clone());
            let prod = tape.mul(y, wv).unwrap();
            let loss = tape.sum(prod);
            let grads = tape.backward(loss).unwrap();
            let mut out = vec![tape.value(y).clone()];
            out.extend(vars.map(|v| grads.get(v).unwrap().clone()));
            out
        };
        for (a, b) in run(true).iter().zip(&run(false)) {
            assert_eq!(a.shape(), b.shape());
            assert!(a.max_abs_diff(b) < 1e-12, "{}", a.max_abs_diff(b));
        }
    }
}
