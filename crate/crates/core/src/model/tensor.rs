use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{OvError, Result};

/// Scalar types the network can run in. `f32` for inference, `f64` for
/// finite-difference checks.
pub trait Real: Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + Send + Sync + 'static {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }
    fn f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Rank-4 `batch × channels × height × width` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 4], v: T) -> Self {
        Tensor {
            shape,
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(OvError::shape(
                "tensor",
                format!("{} elements for shape {shape:?}", data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    /// The `height × width` plane of item `b`, channel `c`.
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let n = self.plane_len();
        let at = (b * self.shape[1] + c) * n;
        &self.data[at..at + n]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let n = self.plane_len();
        let at = (b * self.shape[1] + c) * n;
        &mut self.data[at..at + n]
    }

    /// Slice of the `channels × height × width` block for item `b`.
    pub fn item(&self, b: usize) -> &[T] {
        let n = self.shape[1] * self.plane_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn at(&self, b: usize, c: usize, h: usize, w: usize) -> T {
        self.data[((b * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w]
    }

    pub fn reshape(self, shape: [usize; 4]) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        let [b, c1, h, w] = self.shape;
        let [b2, c2, h2, w2] = other.shape;
        if b != b2 || h != h2 || w != w2 {
            return Err(OvError::shape(
                "channel concat",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let mut data = Vec::with_capacity(self.len() + other.len());
        for i in 0..b {
            data.extend_from_slice(self.item(i));
            data.extend_from_slice(other.item(i));
        }
        Tensor::from_vec([b, c1 + c2, h, w], data)
    }

    /// Concatenates along the batch axis.
    pub fn concat_batch(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape[1..] != other.shape[1..] {
            return Err(OvError::shape(
                "batch concat",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        let mut shape = self.shape;
        shape[0] += other.shape[0];
        Tensor::from_vec(shape, data)
    }

    /// Copy of item `b` as a batch of one.
    pub fn select_batch(&self, b: usize) -> Tensor<T> {
        let [_, c, h, w] = self.shape;
        Tensor {
            shape: [1, c, h, w],
            data: self.item(b).to_vec(),
        }
    }

    /// Copy of columns `start..end` along the width axis.
    pub fn slice_width(&self, start: usize, end: usize) -> Tensor<T> {
        let [b, c, h, w] = self.shape;
        let end = end.min(w);
        let start = start.min(end);
        let mut data = Vec::with_capacity(b * c * h * (end - start));
        for row in self.data.chunks_exact(w.max(1)) {
            data.extend_from_slice(&row[start..end]);
        }
        Tensor {
            shape: [b, c, h, end - start],
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_and_slice() {
        let a = Tensor::<f32>::from_vec([1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::<f32>::from_vec([1, 1, 1, 3], vec![4.0, 5.0, 6.0]).unwrap();
        let c = a.concat_channels(&b).unwrap();
        assert_eq!(c.shape(), [1, 2, 1, 3]);
        assert_eq!(c.at(0, 1, 0, 2), 6.0);
        let s = c.slice_width(1, 3);
        assert_eq!(s.data(), &[2.0, 3.0, 5.0, 6.0]);
        let d = a.concat_batch(&b).unwrap();
        assert_eq!(d.select_batch(1), b);
    }

    #[test]
    fn bad_length_rejected() {
        assert!(Tensor::<f32>::from_vec([1, 2, 2, 2], vec![0.0; 7]).is_err());
    }
}
