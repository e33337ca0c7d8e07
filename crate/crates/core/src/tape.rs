//! Reverse-mode differentiation by operation recording.
//!
//! Every [`Graph`] operation applied to a [`Tape`] appends one node holding
//! its output value and the handles of its inputs. [`Tape::backward`] walks
//! the nodes in exact reverse order, accumulating adjoints additively, and
//! returns the gradient of every registered parameter.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::{self, ConvSpec, Padding};
use crate::error::{Error, Result};
use crate::filter::{self, Axis};
use crate::graph::{self, Graph};
use crate::real::Real;
use crate::tensor::{Dims, Tensor};

/// Identity of a trainable tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub u32);

/// Handle of a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Constant,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Var, padding: Padding },
    LeakyRelu { x: Var, slope: T },
    Relu { x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Affine { x: Var, scale: T },
    Abs { x: Var },
    Mean { x: Var },
    Filter { x: Var, axis: Axis, taps: Vec<T> },
    Decimate { x: Var },
    ZeroInsert { x: Var },
}

impl<T> Op<T> {
    fn inputs(&self) -> [Option<Var>; 3] {
        match *self {
            Op::Constant | Op::Param(_) => [None; 3],
            Op::Conv { x, w, b, .. } => [Some(x), Some(w), Some(b)],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => [Some(a), Some(b), None],
            Op::LeakyRelu { x, .. }
            | Op::Relu { x }
            | Op::Affine { x, .. }
            | Op::Abs { x }
            | Op::Mean { x }
            | Op::Filter { x, .. }
            | Op::Decimate { x }
            | Op::ZeroInsert { x } => [Some(x), None, None],
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    // false when no parameter is upstream
    live: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients keyed by parameter identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    map: BTreeMap<ParamId, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.map.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.map.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let live = matches!(op, Op::Param(_))
            || op.inputs().iter().flatten().any(|v| self.nodes[v.0].live);
        self.nodes.push(Node { value, op, live });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the scalar `loss` with respect to every parameter
    /// registered on this tape. Parameters that do not reach the loss get
    /// zero gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ld = self.val(loss).dims();
        if ld != Dims::SCALAR {
            return Err(Error::contract(
                "backward",
                alloc::format!(
                    "loss must be a scalar, got {}x{}x{}x{}",
                    ld.batch,
                    ld.channels,
                    ld.height,
                    ld.width
                ),
            ));
        }
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::scalar(T::one()));
        let mut map = BTreeMap::new();
        for node in &self.nodes[..=loss.0] {
            if let Op::Param(id) = node.op {
                map.entry(id).or_insert_with(|| Tensor::zeros(node.value.dims()));
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.live {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    if let Some(acc) = map.get_mut(id) {
                        acc.add_assign(&g);
                    }
                }
                Op::Conv { x, w, b, padding } => {
                    let wv = self.val(*w);
                    let spec = ConvSpec::from_weights(wv.dims(), *padding);
                    let need_input = self.nodes[x.0].live;
                    let grads = conv::conv2d_backward(self.val(*x), wv, &spec, &g, need_input);
                    if let Some(gx) = grads.input {
                        accumulate(&mut adj, &self.nodes, *x, gx);
                    }
                    accumulate(&mut adj, &self.nodes, *w, grads.weights);
                    accumulate(&mut adj, &self.nodes, *b, grads.bias);
                }
                Op::LeakyRelu { x, slope } => {
                    let s = *slope;
                    let gx = self
                        .val(*x)
                        .zip_map(&g, "leaky_relu", |v, gv| if v >= T::zero() { gv } else { s * gv })?;
                    accumulate(&mut adj, &self.nodes, *x, gx);
                }
                Op::Relu { x } => {
                    let gx = self
                        .val(*x)
                        .zip_map(&g, "relu", |v, gv| if v >= T::zero() { gv } else { T::zero() })?;
                    accumulate(&mut adj, &self.nodes, *x, gx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, &self.nodes, *a, g.clone());
                    accumulate(&mut adj, &self.nodes, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, &self.nodes, *a, g.clone());
                    accumulate(&mut adj, &self.nodes, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.val(*b), "mul", |gv, bv| gv * bv)?;
                    let gb = g.zip_map(self.val(*a), "mul", |gv, av| gv * av)?;
                    accumulate(&mut adj, &self.nodes, *a, ga);
                    accumulate(&mut adj, &self.nodes, *b, gb);
                }
                Op::Div(a, b) => {
                    let bv = self.val(*b);
                    let ga = g.zip_map(bv, "div", |gv, d| gv / d)?;
                    // d(a/b)/db = -(a/b)/b
                    let q = &node.value;
                    let gb = ga.zip_map(q, "div", |gq, qv| -gq * qv)?;
                    accumulate(&mut adj, &self.nodes, *a, ga);
                    accumulate(&mut adj, &self.nodes, *b, gb);
                }
                Op::Affine { x, scale } => {
                    let s = *scale;
                    accumulate(&mut adj, &self.nodes, *x, g.map(|v| s * v));
                }
                Op::Abs { x } => {
                    let gx = self.val(*x).zip_map(&g, "abs", |v, gv| {
                        if v > T::zero() {
                            gv
                        } else if v < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    })?;
                    accumulate(&mut adj, &self.nodes, *x, gx);
                }
                Op::Mean { x } => {
                    let xd = self.val(*x).dims();
                    let share = g.value() / T::from_f64(xd.len() as f64);
                    accumulate(&mut adj, &self.nodes, *x, Tensor::full(xd, share));
                }
                Op::Filter { x, axis, taps } => {
                    accumulate(&mut adj, &self.nodes, *x, filter::filter_axis_adjoint(&g, *axis, taps));
                }
                Op::Decimate { x } => {
                    let xd = self.val(*x).dims();
                    accumulate(&mut adj, &self.nodes, *x, filter::decimate_adjoint(&g, xd));
                }
                Op::ZeroInsert { x } => {
                    // gather back the inserted samples
                    accumulate(&mut adj, &self.nodes, *x, filter::decimate(&g));
                }
            }
        }
        Ok(Gradients { map })
    }
}

fn accumulate<T: Real>(adj: &mut [Option<Tensor<T>>], nodes: &[Node<T>], v: Var, g: Tensor<T>) {
    if !nodes[v.0].live {
        return;
    }
    match &mut adj[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl<T: Real> Graph<T> for Tape<T> {
    type Node = Var;

    fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant)
    }

    fn param(&mut self, id: ParamId, value: &Tensor<T>) -> Var {
        self.push(value.clone(), Op::Param(id))
    }

    fn value<'a>(&'a self, node: &'a Var) -> &'a Tensor<T> {
        self.val(*node)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: &Var, padding: Padding) -> Result<Var> {
        let wv = self.val(*w);
        let out = conv::conv2d(self.val(*x), wv, self.val(*b), &ConvSpec::from_weights(wv.dims(), padding))?;
        Ok(self.push(
            out,
            Op::Conv {
                x: *x,
                w: *w,
                b: *b,
                padding,
            },
        ))
    }

    fn leaky_relu(&mut self, x: &Var, slope: T) -> Var {
        let out = graph::leaky_relu(self.val(*x), slope);
        self.push(out, Op::LeakyRelu { x: *x, slope })
    }

    fn relu(&mut self, x: &Var) -> Var {
        let out = graph::relu(self.val(*x));
        self.push(out, Op::Relu { x: *x })
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).zip_map(self.val(*b), "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(*a, *b)))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).zip_map(self.val(*b), "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(*a, *b)))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).zip_map(self.val(*b), "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(*a, *b)))
    }

    fn div(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).zip_map(self.val(*b), "div", |x, y| x / y)?;
        Ok(self.push(out, Op::Div(*a, *b)))
    }

    fn affine(&mut self, x: &Var, scale: T, shift: T) -> Var {
        let out = self.val(*x).map(|v| scale * v + shift);
        self.push(out, Op::Affine { x: *x, scale })
    }

    fn abs(&mut self, x: &Var) -> Var {
        let out = self.val(*x).map(|v| v.abs());
        self.push(out, Op::Abs { x: *x })
    }

    fn mean(&mut self, x: &Var) -> Var {
        let out = graph::mean(self.val(*x));
        self.push(out, Op::Mean { x: *x })
    }

    fn filter_axis(&mut self, x: &Var, axis: Axis, taps: &[T]) -> Var {
        let out = filter::filter_axis(self.val(*x), axis, taps);
        self.push(
            out,
            Op::Filter {
                x: *x,
                axis,
                taps: taps.to_vec(),
            },
        )
    }

    fn decimate(&mut self, x: &Var) -> Var {
        let out = filter::decimate(self.val(*x));
        self.push(out, Op::Decimate { x: *x })
    }

    fn zero_insert(&mut self, x: &Var, height: usize, width: usize) -> Result<Var> {
        let out = filter::zero_insert(self.val(*x), height, width)?;
        Ok(self.push(out, Op::ZeroInsert { x: *x }))
    }
}
