use serde::{Deserialize, Serialize};

use super::tensor::{Module, Param, Real, Tensor};
use crate::error::Result;

/// Which elements share one mean/variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormGroup {
    /// One group per frame spanning all `C × F` values; affine is `[C, F]`.
    ChannelFreq,
    /// One group per `(t, f)` spanning the `C` channels; affine is `[C]`.
    Channel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<T> {
    pub channels: usize,
    pub bins: usize,
    pub group: NormGroup,
    pub eps: T,
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

/// Normalized values and per-group inverse standard deviations.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(channels: usize, bins: usize, group: NormGroup) -> Self {
        let shape: &[usize] = match group {
            NormGroup::ChannelFreq => &[channels, bins],
            NormGroup::Channel => &[channels],
        };
        Self {
            channels,
            bins,
            group,
            eps: T::of(1e-5),
            gamma: Param::filled(shape, T::one()),
            beta: Param::zeros(shape),
        }
    }

    fn groups(&self) -> usize {
        match self.group {
            NormGroup::ChannelFreq => 1,
            NormGroup::Channel => self.bins,
        }
    }

    #[inline]
    fn affine_idx(&self, c: usize, f: usize) -> usize {
        match self.group {
            NormGroup::ChannelFreq => c * self.bins + f,
            NormGroup::Channel => c,
        }
    }

    #[inline]
    fn group_of(&self, f: usize) -> usize {
        match self.group {
            NormGroup::ChannelFreq => 0,
            NormGroup::Channel => f,
        }
    }

    /// Normalizes one `C × F` frame. `xhat` and `inv_std` receive the
    /// intermediate values when provided.
    pub fn forward_frame(
        &self,
        x: &[T],
        out: &mut [T],
        mut xhat: Option<&mut [T]>,
        inv_std: Option<&mut [T]>,
    ) {
        let (c_n, f_n) = (self.channels, self.bins);
        let g_n = self.groups();
        let count = T::of((c_n * f_n / g_n) as f64);
        let mut mean = vec![T::zero(); g_n];
        for c in 0..c_n {
            for f in 0..f_n {
                mean[self.group_of(f)] += x[c * f_n + f];
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![T::zero(); g_n];
        for c in 0..c_n {
            for f in 0..f_n {
                let d = x[c * f_n + f] - mean[self.group_of(f)];
                var[self.group_of(f)] += d * d;
            }
        }
        let inv: Vec<T> = var
            .iter()
            .map(|&v| T::one() / (v / count + self.eps).sqrt())
            .collect();
        for c in 0..c_n {
            for f in 0..f_n {
                let i = c * f_n + f;
                let g = self.group_of(f);
                let h = (x[i] - mean[g]) * inv[g];
                if let Some(xh) = xhat.as_deref_mut() {
                    xh[i] = h;
                }
                let a = self.affine_idx(c, f);
                out[i] = h * self.gamma.data[a] + self.beta.data[a];
            }
        }
        if let Some(s) = inv_std {
            s.copy_from_slice(&inv);
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, NormCache<T>)> {
        x.check_shape(self.channels, self.bins, "layer norm input")?;
        let (c, t_n, f) = x.shape();
        let g_n = self.groups();
        let mut y = Tensor::zeros(c, t_n, f);
        let mut xhat = Tensor::zeros(c, t_n, f);
        let mut inv_std = vec![T::zero(); t_n * g_n];
        for t in 0..t_n {
            self.forward_frame(
                x.frame(t),
                y.frame_mut(t),
                Some(xhat.frame_mut(t)),
                Some(&mut inv_std[t * g_n..(t + 1) * g_n]),
            );
        }
        Ok((y, NormCache { xhat, inv_std }))
    }

    pub fn backward(&self, cache: &NormCache<T>, dy: &Tensor<T>, grads: &mut Self) -> Tensor<T> {
        let (c_n, t_n, f_n) = dy.shape();
        let g_n = self.groups();
        let count = T::of((c_n * f_n / g_n) as f64);
        let mut dx = Tensor::zeros(c_n, t_n, f_n);
        let mut sum_d = vec![T::zero(); g_n];
        let mut sum_dx = vec![T::zero(); g_n];
        let mut dxhat = vec![T::zero(); c_n * f_n];
        for t in 0..t_n {
            let (g, xh) = (dy.frame(t), cache.xhat.frame(t));
            sum_d.iter_mut().for_each(|v| *v = T::zero());
            sum_dx.iter_mut().for_each(|v| *v = T::zero());
            for c in 0..c_n {
                for f in 0..f_n {
                    let i = c * f_n + f;
                    let a = self.affine_idx(c, f);
                    grads.gamma.data[a] += g[i] * xh[i];
                    grads.beta.data[a] += g[i];
                    let d = g[i] * self.gamma.data[a];
                    dxhat[i] = d;
                    sum_d[self.group_of(f)] += d;
                    sum_dx[self.group_of(f)] += d * xh[i];
                }
            }
            let inv = &cache.inv_std[t * g_n..(t + 1) * g_n];
            let out = dx.frame_mut(t);
            for c in 0..c_n {
                for f in 0..f_n {
                    let i = c * f_n + f;
                    let gi = self.group_of(f);
                    out[i] = inv[gi] / count
                        * (count * dxhat[i] - sum_d[gi] - xh[i] * sum_dx[gi]);
                }
            }
        }
        dx
    }

    pub fn macs_per_frame(&self) -> u64 {
        (self.channels * self.bins) as u64
    }
}

impl<T: Real> Module<T> for LayerNorm<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f64> {
        Tensor::from_fn(4, 3, 6, |c, t, f| ((c * 17 + t * 5 + f * 3) % 11) as f64 * 0.7 - 2.0)
    }

    #[test]
    fn normalized_statistics() {
        for group in [NormGroup::ChannelFreq, NormGroup::Channel] {
            let mut ln = LayerNorm::<f64>::new(4, 6, group);
            ln.eps = 1e-12;
            let x = sample();
            let (y, _) = ln.forward(&x).unwrap();
            for t in 0..3 {
                let groups: Vec<Vec<f64>> = match group {
                    NormGroup::ChannelFreq => vec![y.frame(t).to_vec()],
                    NormGroup::Channel => {
                        (0..6).map(|f| (0..4).map(|c| y.at(c, t, f)).collect()).collect()
                    }
                };
                for g in groups {
                    let n = g.len() as f64;
                    let mean = g.iter().sum::<f64>() / n;
                    let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    assert!(mean.abs() < 1e-6);
                    assert!((var - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn affine_shapes() {
        assert_eq!(LayerNorm::<f32>::new(20, 161, NormGroup::ChannelFreq).num_params(), 6440);
        assert_eq!(LayerNorm::<f32>::new(20, 161, NormGroup::Channel).num_params(), 40);
    }
}
