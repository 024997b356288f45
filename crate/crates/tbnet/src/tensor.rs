//! Dense row-major N-dimensional tensors.
//!
//! `Tensor<E>` is the universal value for images, feature maps, weights, and
//! gradients. Element order is row-major (last axis fastest). Training runs
//! in `f32`; gradient checking instantiates the same ops at `f64`.

use std::fmt;

use crate::error::{Error, Result};

/// Floating-point element type for tensors. Implemented for `f32` and `f64`.
pub trait Scalar:
    Copy
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn is_finite(self) -> bool;
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            fn abs(self) -> Self {
                self.abs()
            }
            fn powi(self, n: i32) -> Self {
                self.powi(n)
            }
            fn is_finite(self) -> bool {
                self.is_finite()
            }
            fn max(self, other: Self) -> Self {
                if self > other {
                    self
                } else {
                    other
                }
            }
            fn min(self, other: Self) -> Self {
                if self < other {
                    self
                } else {
                    other
                }
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Dense row-major tensor. Invariant: `product(shape) == data.len()` and
/// every dimension is at least 1.
#[derive(Clone, PartialEq)]
pub struct Tensor<E: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<E>,
}

impl<E: Scalar> Tensor<E> {
    /// Builds a tensor from a shape and flat row-major data.
    pub fn new(shape: Vec<usize>, data: Vec<E>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be >= 1, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} implies {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, E::ZERO)
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        assert!(shape.iter().all(|&d| d >= 1), "zero-sized dimension");
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// 1-D tensor from a value slice.
    pub fn from_slice(values: &[E]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    /// Flat index of a multi-index. Panics when out of bounds.
    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut flat = 0;
        for (axis, &i) in index.iter().enumerate() {
            debug_assert!(i < self.shape[axis]);
            flat = flat * self.shape[axis] + i;
        }
        flat
    }

    pub fn at(&self, index: &[usize]) -> E {
        self.data[self.flat_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: E) {
        let flat = self.flat_index(index);
        self.data[flat] = value;
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("reshape", &shape, &self.shape));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, E> {
        self.data.iter()
    }

    /// Converts element precision; used to move between training (`f32`)
    /// and gradient-check (`f64`) modes.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<E: Scalar> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?} {:?}", self.shape, self.data)
        } else {
            write!(
                f,
                "Tensor{:?} [{:?}, {:?}, ... {} elements]",
                self.shape, self.data[0], self.data[1], self.data.len()
            )
        }
    }
}

/// Gradients of one layer: the gradient flowing to the layer input plus a
/// named gradient per parameter, shapes mirroring the forward pass exactly.
#[derive(Debug, Clone)]
pub struct LayerGrad<E: Scalar = f32> {
    pub input_grad: Tensor<E>,
    pub param_grads: Vec<(String, Tensor<E>)>,
}

impl<E: Scalar> LayerGrad<E> {
    pub fn new(input_grad: Tensor<E>) -> Self {
        LayerGrad {
            input_grad,
            param_grads: Vec::new(),
        }
    }

    pub fn with_param(mut self, name: &str, grad: Tensor<E>) -> Self {
        self.param_grads.push((name.to_string(), grad));
        self
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<E>> {
        self.param_grads
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }
}
