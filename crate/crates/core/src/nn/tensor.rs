use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

use crate::error::{Error, Result};

/// Scalar type the layers are generic over: `f32` for training and
/// inference, `f64` for gradient checks.
pub trait Real:
    Float + FromPrimitive + NumAssign + Default + Debug + Send + Sync + Sum + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Activation tensor with logical shape `C × T × F`.
///
/// Storage is frame-major (`[t][c][f]`) so that one frame is a contiguous
/// `C × F` block; frame-online inference and the batch path share the same
/// per-frame kernels on those blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    channels: usize,
    frames: usize,
    bins: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, frames: usize, bins: usize) -> Self {
        Self {
            channels,
            frames,
            bins,
            data: vec![T::zero(); channels * frames * bins],
        }
    }

    /// Builds from frame-major data.
    pub fn from_frames(channels: usize, frames: usize, bins: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * frames * bins {
            return Err(Error::domain(format!(
                "tensor data length {} does not match {channels}x{frames}x{bins}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            frames,
            bins,
            data,
        })
    }

    /// Builds from a closure over `(c, t, f)`.
    pub fn from_fn(
        channels: usize,
        frames: usize,
        bins: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut out = Self::zeros(channels, frames, bins);
        for t in 0..frames {
            for c in 0..channels {
                for k in 0..bins {
                    out.data[(t * channels + c) * bins + k] = f(c, t, k);
                }
            }
        }
        out
    }

    /// `(C, T, F)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.frames, self.bins)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.bins
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

    pub fn frame(&self, t: usize) -> &[T] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [T] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn at(&self, c: usize, t: usize, f: usize) -> T {
        self.data[(t * self.channels + c) * self.bins + f]
    }

    pub fn at_mut(&mut self, c: usize, t: usize, f: usize) -> &mut T {
        &mut self.data[(t * self.channels + c) * self.bins + f]
    }

    /// Channels `[start, start + count)` as a new tensor.
    pub fn channel_slice(&self, start: usize, count: usize) -> Self {
        assert!(start + count <= self.channels, "channel slice out of range");
        let mut out = Self::zeros(count, self.frames, self.bins);
        for t in 0..self.frames {
            let src = &self.frame(t)[start * self.bins..(start + count) * self.bins];
            out.frame_mut(t).copy_from_slice(src);
        }
        out
    }

    /// Stacks tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::domain("concat of zero tensors"))?;
        let (frames, bins) = (first.frames, first.bins);
        if parts.iter().any(|p| p.frames != frames || p.bins != bins) {
            return Err(Error::domain("concat: frame/bin counts differ"));
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(channels * frames * bins);
        for t in 0..frames {
            for p in parts {
                data.extend_from_slice(p.frame(t));
            }
        }
        Ok(Self {
            channels,
            frames,
            bins,
            data,
        })
    }

    /// Frames `[start, end)` as a new tensor.
    pub fn frame_range(&self, start: usize, end: usize) -> Self {
        let n = self.frame_len();
        Self {
            channels: self.channels,
            frames: end - start,
            bins: self.bins,
            data: self.data[start * n..end * n].to_vec(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            frames: self.frames,
            bins: self.bins,
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|&x| x.as_f64() * x.as_f64()).sum()
    }

    pub(crate) fn check_shape(&self, channels: usize, bins: usize, what: &str) -> Result<()> {
        if self.channels != channels || self.bins != bins {
            return Err(Error::domain(format!(
                "{what}: expected {channels} channels x {bins} bins, got {}x{}",
                self.channels, self.bins
            )));
        }
        Ok(())
    }
}

/// Named parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        Param {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }
}

/// Anything that owns parameters. Parameter order is fixed and determines
/// checkpoint layout and optimizer state alignment.
pub trait Module<T: Real> {
    fn params(&self) -> Vec<(String, &Param<T>)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    fn zero_params(&mut self) {
        for (_, p) in self.params_mut() {
            p.data.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// A same-shaped container with every parameter zeroed; used as a
    /// gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut g = self.clone();
        g.zero_params();
        g
    }

    /// Adds `other`'s parameters into `self`, element by element.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src = other.params();
        for ((_, dst), (_, s)) in self.params_mut().into_iter().zip(src) {
            for (a, &b) in dst.data.iter_mut().zip(&s.data) {
                *a += b;
            }
        }
    }

    fn scale_params(&mut self, k: T) {
        for (_, p) in self.params_mut() {
            p.data.iter_mut().for_each(|x| *x *= k);
        }
    }

    fn params_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|(_, p)| p.data.iter().all(|x| x.is_finite()))
    }
}

pub(crate) fn prefixed<'a, T>(
    prefix: &str,
    items: Vec<(String, &'a Param<T>)>,
) -> Vec<(String, &'a Param<T>)> {
    items
        .into_iter()
        .map(|(n, p)| (format!("{prefix}.{n}"), p))
        .collect()
}

pub(crate) fn prefixed_mut<'a, T>(
    prefix: &str,
    items: Vec<(String, &'a mut Param<T>)>,
) -> Vec<(String, &'a mut Param<T>)> {
    items
        .into_iter()
        .map(|(n, p)| (format!("{prefix}.{n}"), p))
        .collect()
}
