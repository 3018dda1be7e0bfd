use super::init::Init;
use super::tensor::{Module, Param, Real, Tensor};
use crate::error::Result;

/// Kernel extent along time (all taps at or before the current frame).
pub const KT: usize = 3;
/// Kernel extent along frequency, centered.
pub const KF: usize = 3;

/// `out[f] += w * x[f + df]` over the valid range (zero padding).
#[inline]
pub(crate) fn axpy_shift<T: Real>(out: &mut [T], x: &[T], w: T, df: isize) {
    let n = out.len() as isize;
    let lo = (-df).max(0) as usize;
    let hi = (n - df.max(0)) as usize;
    let xs = &x[(lo as isize + df) as usize..(hi as isize + df) as usize];
    for (o, &v) in out[lo..hi].iter_mut().zip(xs) {
        *o += w * v;
    }
}

/// `Σ_f a[f] * x[f + df]` over the valid range.
#[inline]
pub(crate) fn dot_shift<T: Real>(a: &[T], x: &[T], df: isize) -> T {
    let n = a.len() as isize;
    let lo = (-df).max(0) as usize;
    let hi = (n - df.max(0)) as usize;
    let xs = &x[(lo as isize + df) as usize..(hi as isize + df) as usize];
    a[lo..hi].iter().zip(xs).fold(T::zero(), |s, (&p, &q)| s + p * q)
}

/// Causal 3×3 convolution over `(T, F)`: the time axis is left-padded by two
/// frames, the frequency axis symmetrically by one bin.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dCausal<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out, in, KT, KF]`; time tap `KT - 1` is the current frame.
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Conv2dCausal<T> {
    pub fn new(in_channels: usize, out_channels: usize, init: &mut Init) -> Self {
        let fan_in = in_channels * KT * KF;
        Self {
            in_channels,
            out_channels,
            weight: init.fan_in(&[out_channels, in_channels, KT, KF], fan_in),
            bias: init.fan_in(&[out_channels], fan_in),
        }
    }

    #[inline]
    fn w(&self, o: usize, i: usize, dt: usize, kf: usize) -> T {
        self.weight.data[((o * self.in_channels + i) * KT + dt) * KF + kf]
    }

    /// One output frame from the input history `[t-2, t-1, t]`; `None`
    /// stands for the zero padding before the first frame.
    pub fn forward_frame(&self, hist: [Option<&[T]>; KT], bins: usize, out: &mut [T]) {
        for o in 0..self.out_channels {
            let row = &mut out[o * bins..(o + 1) * bins];
            row.iter_mut().for_each(|v| *v = self.bias.data[o]);
            for i in 0..self.in_channels {
                for (dt, frame) in hist.iter().enumerate() {
                    let Some(frame) = frame else { continue };
                    let x = &frame[i * bins..(i + 1) * bins];
                    for kf in 0..KF {
                        axpy_shift(row, x, self.w(o, i, dt, kf), kf as isize - 1);
                    }
                }
            }
        }
    }

    fn history(x: &Tensor<T>, t: usize) -> [Option<&[T]>; KT] {
        std::array::from_fn(|dt| {
            let back = KT - 1 - dt;
            (t >= back).then(|| x.frame(t - back))
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.check_shape(self.in_channels, x.bins(), "conv2d input")?;
        let bins = x.bins();
        let mut y = Tensor::zeros(self.out_channels, x.frames(), bins);
        for t in 0..x.frames() {
            self.forward_frame(Self::history(x, t), bins, y.frame_mut(t));
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>, grads: &mut Self) -> Tensor<T> {
        let bins = x.bins();
        let mut dx = Tensor::zeros(self.in_channels, x.frames(), bins);
        for t in 0..x.frames() {
            let dyt = dy.frame(t);
            for o in 0..self.out_channels {
                let g = &dyt[o * bins..(o + 1) * bins];
                grads.bias.data[o] += g.iter().copied().sum::<T>();
                for dt in 0..KT {
                    let back = KT - 1 - dt;
                    if t < back {
                        continue;
                    }
                    let src = t - back;
                    for i in 0..self.in_channels {
                        let xin = &x.frame(src)[i * bins..(i + 1) * bins];
                        for kf in 0..KF {
                            let df = kf as isize - 1;
                            let widx = ((o * self.in_channels + i) * KT + dt) * KF + kf;
                            grads.weight.data[widx] += dot_shift(g, xin, df);
                            // x[f + df] contributed to y[f]  =>  dx[f'] += w * g[f' - df]
                            let w = self.weight.data[widx];
                            let dxi = &mut dx.frame_mut(src)[i * bins..(i + 1) * bins];
                            axpy_shift(dxi, g, w, -df);
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn macs_per_frame(&self, bins: usize) -> u64 {
        (self.out_channels * self.in_channels * KT * KF * bins) as u64
    }

    pub fn new_state(&self, bins: usize) -> ConvState<T> {
        ConvState {
            history: vec![Vec::new(); KT - 1],
            bins,
        }
    }

    /// Streaming step: consumes frame `t`, returns output frame `t`.
    pub fn step(&self, state: &mut ConvState<T>, frame: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.out_channels * state.bins];
        let hist: [Option<&[T]>; KT] = std::array::from_fn(|dt| {
            if dt == KT - 1 {
                Some(frame)
            } else {
                let h = &state.history[dt];
                (!h.is_empty()).then_some(h.as_slice())
            }
        });
        self.forward_frame(hist, state.bins, &mut out);
        state.history.remove(0);
        state.history.push(frame.to_vec());
        out
    }
}

/// Input frames kept by a streaming convolution.
#[derive(Clone, Debug)]
pub struct ConvState<T> {
    history: Vec<Vec<T>>,
    bins: usize,
}

impl<T: Real> Module<T> for Conv2dCausal<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}
