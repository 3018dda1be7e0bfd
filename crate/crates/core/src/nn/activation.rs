use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[inline]
pub fn elu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of ELU expressed through input and output.
#[inline]
pub fn elu_grad<T: Real>(x: T, y: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        y + T::one()
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn elu_frame<T: Real>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = elu(*v));
}

pub fn elu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    elu_frame(y.data_mut());
    y
}

pub fn elu_backward<T: Real>(x: &Tensor<T>, y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for ((d, &xi), &yi) in dx.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
        *d *= elu_grad(xi, yi);
    }
    dx
}

pub fn tanh_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.tanh());
    y
}

pub fn tanh_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &yi) in dx.data_mut().iter_mut().zip(y.data()) {
        *d *= T::one() - yi * yi;
    }
    dx
}

pub fn sigmoid_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
    y
}

pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (d, &yi) in dx.data_mut().iter_mut().zip(y.data()) {
        *d *= yi * (T::one() - yi);
    }
    dx
}

/// Softmax over consecutive groups of `width` values.
pub fn softmax_groups<T: Real>(x: &[T], width: usize) -> Result<Vec<T>> {
    if width == 0 {
        return Err(Error::domain("softmax over an empty axis"));
    }
    if !x.len().is_multiple_of(width) {
        return Err(Error::domain("softmax input is not a whole number of groups"));
    }
    let mut out = vec![T::zero(); x.len()];
    for (src, dst) in x.chunks(width).zip(out.chunks_mut(width)) {
        let m = src.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut z = T::zero();
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - m).exp();
            z += *d;
        }
        dst.iter_mut().for_each(|d| *d /= z);
    }
    Ok(out)
}

/// Backward of [`softmax_groups`] given its output.
pub fn softmax_groups_backward<T: Real>(y: &[T], dy: &[T], width: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    for ((ys, gs), ds) in y.chunks(width).zip(dy.chunks(width)).zip(dx.chunks_mut(width)) {
        let dot = ys.iter().zip(gs).fold(T::zero(), |a, (&p, &q)| a + p * q);
        for ((d, &p), &q) in ds.iter_mut().zip(ys).zip(gs) {
            *d = p * (q - dot);
        }
    }
    dx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout: kept values are scaled by `1 / (1 - p)` in training;
/// evaluation is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        Self { p }
    }

    /// Returns the output and the scale mask (empty in eval mode).
    pub fn forward<T: Real>(&self, x: &Tensor<T>, mode: Mode, seed: u64) -> (Tensor<T>, Vec<T>) {
        if mode == Mode::Eval || self.p == 0.0 {
            return (x.clone(), Vec::new());
        }
        let mut rng = Pcg64::seed_from_u64(seed);
        let keep = T::of(1.0 / (1.0 - self.p));
        let mask: Vec<T> = (0..x.data().len())
            .map(|_| {
                if rng.random::<f64>() < self.p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let mut y = x.clone();
        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        (y, mask)
    }

    pub fn backward<T: Real>(&self, mask: &[T], dy: &Tensor<T>) -> Tensor<T> {
        if mask.is_empty() {
            return dy.clone();
        }
        let mut dx = dy.clone();
        for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0_f64), 0.0);
        assert_eq!(elu(2.5_f64), 2.5);
        let v = elu(-30.0_f64);
        assert!(v > -1.0 && v < -0.99999);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0_f64), 0.5);
        assert!(sigmoid(-800.0_f64) >= 0.0);
        assert_eq!(sigmoid(800.0_f64), 1.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = [1.0_f64, -2.0, 300.0, 299.0, 0.0, 0.0];
        let y = softmax_groups(&x, 2).unwrap();
        for g in y.chunks(2) {
            assert!((g[0] + g[1] - 1.0).abs() < 1e-15);
        }
        assert!(softmax_groups::<f64>(&x, 0).is_err());
    }

    #[test]
    fn dropout_modes() {
        let x = Tensor::from_fn(2, 5, 7, |c, t, f| (c + t + f) as f32);
        let d = Dropout::new(0.2);
        let (y, mask) = d.forward(&x, Mode::Eval, 3);
        assert_eq!(y, x);
        assert!(mask.is_empty());
        let (y, mask) = d.forward(&x, Mode::Train, 3);
        let keep = 1.0 / 0.8;
        for ((&a, &b), &m) in y.data().iter().zip(x.data()).zip(&mask) {
            assert!(m == 0.0 || (m - keep).abs() < 1e-6);
            assert_eq!(a, b * m);
        }
        assert!(mask.iter().any(|&m| m == 0.0));
    }
}
