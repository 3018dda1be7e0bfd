use super::init::Init;
use super::tensor::{Module, Param, Real, Tensor};
use crate::error::Result;

/// Linear map over the channel axis, applied independently at every
/// `(t, f)` position.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelLinear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out, in]`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> ChannelLinear<T> {
    pub fn new(in_dim: usize, out_dim: usize, init: &mut Init) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: init.fan_in(&[out_dim, in_dim], in_dim),
            bias: init.fan_in(&[out_dim], in_dim),
        }
    }

    pub fn forward_frame(&self, x: &[T], bins: usize, out: &mut [T]) {
        for o in 0..self.out_dim {
            let row = &mut out[o * bins..(o + 1) * bins];
            row.iter_mut().for_each(|v| *v = self.bias.data[o]);
            for i in 0..self.in_dim {
                let w = self.weight.data[o * self.in_dim + i];
                for (r, &v) in row.iter_mut().zip(&x[i * bins..(i + 1) * bins]) {
                    *r += w * v;
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.check_shape(self.in_dim, x.bins(), "channel linear input")?;
        let mut y = Tensor::zeros(self.out_dim, x.frames(), x.bins());
        for t in 0..x.frames() {
            self.forward_frame(x.frame(t), x.bins(), y.frame_mut(t));
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>, grads: &mut Self) -> Tensor<T> {
        let bins = x.bins();
        let mut dx = Tensor::zeros(self.in_dim, x.frames(), bins);
        for t in 0..x.frames() {
            let (xt, gt) = (x.frame(t), dy.frame(t));
            let dxt = dx.frame_mut(t);
            for o in 0..self.out_dim {
                let g = &gt[o * bins..(o + 1) * bins];
                grads.bias.data[o] += g.iter().copied().sum::<T>();
                for i in 0..self.in_dim {
                    let xi = &xt[i * bins..(i + 1) * bins];
                    grads.weight.data[o * self.in_dim + i] +=
                        g.iter().zip(xi).fold(T::zero(), |s, (&a, &b)| s + a * b);
                    let w = self.weight.data[o * self.in_dim + i];
                    for (d, &a) in dxt[i * bins..(i + 1) * bins].iter_mut().zip(g) {
                        *d += w * a;
                    }
                }
            }
        }
        dx
    }

    pub fn macs_per_frame(&self, bins: usize) -> u64 {
        (self.in_dim * self.out_dim * bins) as u64
    }
}

impl<T: Real> Module<T> for ChannelLinear<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}

/// Linear map over the last axis of a single-channel `1 × T × F_in` plane,
/// producing `1 × T × F_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqLinear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> FreqLinear<T> {
    pub fn new(in_dim: usize, out_dim: usize, init: &mut Init) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: init.fan_in(&[out_dim, in_dim], in_dim),
            bias: init.fan_in(&[out_dim], in_dim),
        }
    }

    pub fn forward_frame(&self, x: &[T], out: &mut [T]) {
        for (o, y) in out.iter_mut().enumerate() {
            let w = &self.weight.data[o * self.in_dim..(o + 1) * self.in_dim];
            *y = self.bias.data[o] + w.iter().zip(x).fold(T::zero(), |s, (&a, &b)| s + a * b);
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.check_shape(1, self.in_dim, "frequency linear input")?;
        let mut y = Tensor::zeros(1, x.frames(), self.out_dim);
        for t in 0..x.frames() {
            self.forward_frame(x.frame(t), y.frame_mut(t));
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>, grads: &mut Self) -> Tensor<T> {
        let mut dx = Tensor::zeros(1, x.frames(), self.in_dim);
        for t in 0..x.frames() {
            let (xt, gt) = (x.frame(t), dy.frame(t));
            let dxt = dx.frame_mut(t);
            for (o, &g) in gt.iter().enumerate() {
                grads.bias.data[o] += g;
                let row = o * self.in_dim..(o + 1) * self.in_dim;
                for ((gw, &w), (d, &xi)) in grads.weight.data[row.clone()]
                    .iter_mut()
                    .zip(&self.weight.data[row])
                    .zip(dxt.iter_mut().zip(xt))
                {
                    *gw += g * xi;
                    *d += g * w;
                }
            }
        }
        dx
    }

    pub fn macs_per_frame(&self) -> u64 {
        (self.in_dim * self.out_dim) as u64
    }
}

impl<T: Real> Module<T> for FreqLinear<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}
