//! Gradient tape for reverse-mode differentiation.
//!
//! Every primitive appends a node holding its forward value. `backward`
//! walks the nodes in exact reverse order, so a node's gradient is complete
//! before it is propagated to its inputs.

use super::{kernels, KernelError, Parameter, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(usize),
    PointwiseConv { input: Var, weight: Var, bias: Var },
    Relu(Var),
    GlobalAvgPool(Var),
    Dense { x: Var, weight: Var, bias: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Abs(Var),
    /// `max(0, margin - x)` elementwise.
    Hinge { x: Var, margin: f64 },
    Concat(Var, Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default, Clone, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var, KernelError> {
        if !value.is_finite() {
            return Err(KernelError::NumericFault(format!("non-finite output from {name}")));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, KernelError> {
        self.push(value, Op::Constant, "constant")
    }

    /// Records a trainable leaf. `slot` indexes the parameter slice later
    /// passed to [`Gradients::accumulate`].
    pub fn param(&mut self, slot: usize, p: &Parameter) -> Result<Var, KernelError> {
        self.push(p.value.clone(), Op::Param(slot), "param")
    }

    pub fn pointwise_conv(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, KernelError> {
        let out = kernels::pointwise_conv(self.value(input), self.value(weight), self.value(bias))?;
        self.push(out, Op::PointwiseConv { input, weight, bias }, "pointwise_conv")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, KernelError> {
        let out = kernels::relu(self.value(x));
        self.push(out, Op::Relu(x), "relu")
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var, KernelError> {
        let out = kernels::global_avg_pool(self.value(x))?;
        self.push(out, Op::GlobalAvgPool(x), "global_avg_pool")
    }

    pub fn dense(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, KernelError> {
        let out = kernels::dense(self.value(x), self.value(weight), self.value(bias))?;
        self.push(out, Op::Dense { x, weight, bias }, "dense")
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), KernelError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(KernelError::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
            .expect("shape preserved")
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        self.same_shape(a, b, "add")?;
        let out = self.zip(a, b, |x, y| x + y);
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip(a, b, |x, y| x - y);
        self.push(out, Op::Sub(a, b), "sub")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, KernelError> {
        let out = self.map(x, |v| v * factor);
        self.push(out, Op::Scale(x, factor), "scale")
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var, KernelError> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), "sum")
    }

    /// Sum of a list of same-shaped values; an empty list yields scalar 0.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var, KernelError> {
        match xs.split_first() {
            None => self.constant(Tensor::scalar(0.0)),
            Some((&first, rest)) => rest.iter().try_fold(first, |acc, &x| self.add(acc, x)),
        }
    }

    /// Elementwise `|x|`; subgradient 0 at 0.
    pub fn abs(&mut self, x: Var) -> Result<Var, KernelError> {
        let out = self.map(x, f64::abs);
        self.push(out, Op::Abs(x), "abs")
    }

    /// Elementwise `max(0, margin - x)`.
    pub fn hinge(&mut self, x: Var, margin: f64) -> Result<Var, KernelError> {
        let out = self.map(x, |v| (margin - v).max(0.0));
        self.push(out, Op::Hinge { x, margin }, "hinge")
    }

    /// Concatenation of two vectors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 1 || tb.shape().len() != 1 {
            return Err(KernelError::ShapeMismatch(format!(
                "concat: expected vectors, got {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        self.push(Tensor::vector(data), Op::Concat(a, b), "concat")
    }

    /// Smallest distance of any recorded kink argument (ReLU input, hinge
    /// argument, abs input) from its non-differentiable point. Gradient
    /// checks use this to reject inputs that sit on a kink.
    pub fn kink_clearance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for node in &self.nodes {
            let (src, offset) = match node.op {
                Op::Relu(x) | Op::Abs(x) => (x, 0.0),
                Op::Hinge { x, margin } => (x, margin),
                _ => continue,
            };
            for &v in self.value(src).data() {
                best = best.min((v - offset).abs());
            }
        }
        best
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, KernelError> {
        if self.value(loss).len() != 1 {
            return Err(KernelError::ShapeMismatch(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match node.op {
                Op::Constant | Op::Param(_) => {}
                Op::PointwiseConv { input, weight, bias } => {
                    let x = self.value(input);
                    let w = self.value(weight);
                    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                    let k = w.shape()[0];
                    let plane = h * wd;
                    let mut gx = vec![0.0; c * plane];
                    let mut gw = vec![0.0; k * c];
                    let mut gb = vec![0.0; k];
                    for ki in 0..k {
                        let gplane = &g.data()[ki * plane..(ki + 1) * plane];
                        gb[ki] = gplane.iter().sum();
                        for ci in 0..c {
                            let xplane = &x.data()[ci * plane..(ci + 1) * plane];
                            gw[ki * c + ci] = gplane.iter().zip(xplane).map(|(a, b)| a * b).sum();
                            let wv = w.data()[ki * c + ci];
                            for (gxv, &gv) in gx[ci * plane..(ci + 1) * plane].iter_mut().zip(gplane) {
                                *gxv += wv * gv;
                            }
                        }
                    }
                    accumulate(&mut grads, input, Tensor::new(x.shape().to_vec(), gx)?);
                    accumulate(&mut grads, weight, Tensor::new(w.shape().to_vec(), gw)?);
                    accumulate(&mut grads, bias, Tensor::vector(gb));
                }
                Op::Relu(x) => {
                    let xv = self.value(x);
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::GlobalAvgPool(x) => {
                    let xv = self.value(x);
                    let plane = xv.shape()[1] * xv.shape()[2];
                    let inv = 1.0 / plane as f64;
                    let data = g
                        .data()
                        .iter()
                        .flat_map(|&gv| std::iter::repeat_n(gv * inv, plane))
                        .collect();
                    accumulate(&mut grads, x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::Dense { x, weight, bias } => {
                    let xv = self.value(x);
                    let w = self.value(weight);
                    let n = xv.len();
                    let mut gx = vec![0.0; n];
                    let mut gw = vec![0.0; w.len()];
                    for (mi, &gv) in g.data().iter().enumerate() {
                        let row = &w.data()[mi * n..(mi + 1) * n];
                        for j in 0..n {
                            gx[j] += row[j] * gv;
                            gw[mi * n + j] = gv * xv.data()[j];
                        }
                    }
                    accumulate(&mut grads, x, Tensor::vector(gx));
                    accumulate(&mut grads, weight, Tensor::new(w.shape().to_vec(), gw)?);
                    accumulate(&mut grads, bias, g.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g.clone());
                }
                Op::Sub(a, b) => {
                    let neg = Tensor::new(g.shape().to_vec(), g.data().iter().map(|v| -v).collect())?;
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, neg);
                }
                Op::Scale(x, factor) => {
                    let data = g.data().iter().map(|v| v * factor).collect();
                    accumulate(&mut grads, x, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Sum(x) => {
                    let xv = self.value(x);
                    accumulate(&mut grads, x, Tensor::filled(xv.shape(), g.item()));
                }
                Op::Abs(x) => {
                    let xv = self.value(x);
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| {
                            if v > 0.0 {
                                gv
                            } else if v < 0.0 {
                                -gv
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    accumulate(&mut grads, x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::Hinge { x, margin } => {
                    let xv = self.value(x);
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| if margin - v > 0.0 { -gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::Concat(a, b) => {
                    let na = self.value(a).len();
                    accumulate(&mut grads, a, Tensor::vector(g.data()[..na].to_vec()));
                    accumulate(&mut grads, b, Tensor::vector(g.data()[na..].to_vec()));
                }
            }
            grads[idx] = Some(g);
        }

        let mut params = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(slot) = node.op {
                let g = grads[i]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                params.push((slot, g));
            }
        }
        Ok(Gradients { nodes: grads, params })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<(usize, Tensor)>,
}

impl Gradients {
    /// Gradient of the loss with respect to a recorded value, if it lies on
    /// a path to the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    /// `(slot, grad)` for every parameter leaf, zero when the leaf did not
    /// reach the loss.
    pub fn param_grads(&self) -> &[(usize, Tensor)] {
        &self.params
    }

    /// Adds each parameter leaf's gradient into `params[slot].grad`.
    pub fn accumulate(&self, params: &mut [Parameter]) -> Result<(), KernelError> {
        for (slot, g) in &self.params {
            let p = params.get_mut(*slot).ok_or_else(|| {
                KernelError::ShapeMismatch(format!("gradient for unknown parameter slot {slot}"))
            })?;
            if p.grad.shape() != g.shape() {
                return Err(KernelError::ShapeMismatch(format!(
                    "gradient shape {:?} for parameter {} of shape {:?}",
                    g.shape(),
                    p.name,
                    p.grad.shape()
                )));
            }
            p.grad.add_assign(g);
        }
        Ok(())
    }
}
