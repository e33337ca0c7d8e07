use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;

/// Extents of a 4-D tensor in (batch, channels, height, width) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Dims {
            batch,
            channels,
            height,
            width,
        }
    }

    pub const SCALAR: Dims = Dims::new(1, 1, 1, 1);

    pub const fn len(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub const fn with_spatial(self, height: usize, width: usize) -> Self {
        Dims {
            height,
            width,
            ..self
        }
    }

    pub const fn with_channels(self, channels: usize) -> Self {
        Dims { channels, ..self }
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    /// Reports the first axis on which `self` and `other` differ.
    pub fn expect_eq(&self, other: &Dims, op: &'static str) -> Result<()> {
        let names = ["batch", "channel", "height", "width"];
        let (a, b) = (self.as_array(), other.as_array());
        for i in 0..4 {
            if a[i] != b[i] {
                return Err(Error::Shape {
                    op,
                    axis: names[i],
                    expected: a[i],
                    found: b[i],
                });
            }
        }
        Ok(())
    }
}

/// Dense row-major (NCHW) 4-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        let names = ["batch", "channel", "height", "width"];
        for (name, &d) in names.iter().zip(dims.as_array().iter()) {
            if d == 0 {
                return Err(Error::contract(
                    "tensor",
                    alloc::format!("{name} extent must be at least 1"),
                ));
            }
        }
        if data.len() != dims.len() {
            return Err(Error::Shape {
                op: "tensor",
                axis: "data",
                expected: dims.len(),
                found: data.len(),
            });
        }
        Ok(Tensor { dims, data })
    }

    pub fn full(dims: Dims, value: T) -> Self {
        assert!(!dims.is_empty(), "tensor extents must be at least 1");
        Tensor {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::full(dims, T::zero())
    }

    pub fn scalar(value: T) -> Self {
        Self::full(Dims::SCALAR, value)
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.batch {
            for c in 0..dims.channels {
                for y in 0..dims.height {
                    for x in 0..dims.width {
                        data.push(f(n, c, y, x));
                    }
                }
            }
        }
        Tensor { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let d = &self.dims;
        ((n * d.channels + c) * d.height + y) * d.width + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    /// One channel plane of one batch item.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.dims.plane();
        let start = (n * self.dims.channels + c) * p;
        &self.data[start..start + p]
    }

    /// All channels of one batch item.
    pub fn item(&self, n: usize) -> &[T] {
        let s = self.dims.channels * self.dims.plane();
        &self.data[n * s..(n + 1) * s]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let s = self.dims.channels * self.dims.plane();
        &mut self.data[n * s..(n + 1) * s]
    }

    /// Scalar value of a single-element tensor.
    pub fn value(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.dims.expect_eq(&other.dims, op)?;
        Ok(Tensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dims, other.dims);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn mean_f64(&self) -> f64 {
        self.sum_f64() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts to another precision.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Copies a spatial window `[y, y+h) × [x, x+w)` of batch item `n`.
    pub fn crop(&self, n: usize, y: usize, x: usize, h: usize, w: usize) -> Result<Self> {
        let d = self.dims;
        if n >= d.batch || y + h > d.height || x + w > d.width || h == 0 || w == 0 {
            return Err(Error::contract(
                "crop",
                alloc::format!(
                    "window {h}x{w} at ({y},{x}) of item {n} exceeds {}x{} x{}",
                    d.height,
                    d.width,
                    d.batch
                ),
            ));
        }
        let out = Dims::new(1, d.channels, h, w);
        let mut data = Vec::with_capacity(out.len());
        for c in 0..d.channels {
            for row in y..y + h {
                let s = self.index(n, c, row, x);
                data.extend_from_slice(&self.data[s..s + w]);
            }
        }
        Ok(Tensor { dims: out, data })
    }

    /// Stacks tensors with identical (channel, height, width) along batch.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::contract("stack", "nothing to stack"))?;
        let mut dims = first.dims;
        let mut data = Vec::new();
        let mut batch = 0;
        for t in items {
            let probe = Dims {
                batch: t.dims.batch,
                ..dims
            };
            probe.expect_eq(&t.dims, "stack")?;
            batch += t.dims.batch;
            data.extend_from_slice(&t.data);
        }
        dims.batch = batch;
        Ok(Tensor { dims, data })
    }
}
