//! The operation set shared by eager evaluation and the recording tape.
//!
//! Model, pyramid and loss code is written once against [`Graph`]; running
//! it on [`Eager`] just computes values, running it on a
//! [`Tape`](crate::Tape) additionally records what is needed for
//! [`Tape::backward`](crate::Tape::backward).

use crate::conv::{self, ConvSpec, Padding};
use crate::error::Result;
use crate::filter::{self, Axis};
use crate::real::Real;
use crate::tape::ParamId;
use crate::tensor::Tensor;

pub trait Graph<T: Real> {
    type Node: Clone;

    /// A value that receives no gradient.
    fn constant(&mut self, value: Tensor<T>) -> Self::Node;
    /// A trainable value identified by `id`.
    fn param(&mut self, id: ParamId, value: &Tensor<T>) -> Self::Node;
    fn value<'a>(&'a self, node: &'a Self::Node) -> &'a Tensor<T>;

    fn conv2d(
        &mut self,
        x: &Self::Node,
        weights: &Self::Node,
        bias: &Self::Node,
        padding: Padding,
    ) -> Result<Self::Node>;
    fn leaky_relu(&mut self, x: &Self::Node, slope: T) -> Self::Node;
    /// `max(0, x)`.
    fn relu(&mut self, x: &Self::Node) -> Self::Node;
    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn sub(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn mul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn div(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    /// `scale·x + shift`.
    fn affine(&mut self, x: &Self::Node, scale: T, shift: T) -> Self::Node;
    fn abs(&mut self, x: &Self::Node) -> Self::Node;
    /// Mean over every element, as a 1×1×1×1 tensor.
    fn mean(&mut self, x: &Self::Node) -> Self::Node;
    fn filter_axis(&mut self, x: &Self::Node, axis: Axis, taps: &[T]) -> Self::Node;
    fn decimate(&mut self, x: &Self::Node) -> Self::Node;
    fn zero_insert(&mut self, x: &Self::Node, height: usize, width: usize) -> Result<Self::Node>;
}

pub(crate) fn leaky_relu<T: Real>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { v } else { slope * v })
}

pub(crate) fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { v } else { T::zero() })
}

pub(crate) fn mean<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::scalar(T::from_f64(x.mean_f64()))
}

/// Plain value evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

impl<T: Real> Graph<T> for Eager {
    type Node = Tensor<T>;

    fn constant(&mut self, value: Tensor<T>) -> Tensor<T> {
        value
    }

    fn param(&mut self, _id: ParamId, value: &Tensor<T>) -> Tensor<T> {
        value.clone()
    }

    fn value<'a>(&'a self, node: &'a Tensor<T>) -> &'a Tensor<T> {
        node
    }

    fn conv2d(&mut self, x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, padding: Padding) -> Result<Tensor<T>> {
        conv::conv2d(x, w, b, &ConvSpec::from_weights(w.dims(), padding))
    }

    fn leaky_relu(&mut self, x: &Tensor<T>, slope: T) -> Tensor<T> {
        leaky_relu(x, slope)
    }

    fn relu(&mut self, x: &Tensor<T>) -> Tensor<T> {
        relu(x)
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        a.zip_map(b, "add", |x, y| x + y)
    }

    fn sub(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        a.zip_map(b, "sub", |x, y| x - y)
    }

    fn mul(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        a.zip_map(b, "mul", |x, y| x * y)
    }

    fn div(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        a.zip_map(b, "div", |x, y| x / y)
    }

    fn affine(&mut self, x: &Tensor<T>, scale: T, shift: T) -> Tensor<T> {
        x.map(|v| scale * v + shift)
    }

    fn abs(&mut self, x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| v.abs())
    }

    fn mean(&mut self, x: &Tensor<T>) -> Tensor<T> {
        mean(x)
    }

    fn filter_axis(&mut self, x: &Tensor<T>, axis: Axis, taps: &[T]) -> Tensor<T> {
        filter::filter_axis(x, axis, taps)
    }

    fn decimate(&mut self, x: &Tensor<T>) -> Tensor<T> {
        filter::decimate(x)
    }

    fn zero_insert(&mut self, x: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
        filter::zero_insert(x, height, width)
    }
}
