//! Diagonal structured state-space layer.
//!
//! Each channel is a single-input single-output linear time-invariant
//! system with `N` complex diagonal modes, discretized with zero-order hold
//! and run along the frame axis. The same system is shared by all
//! frequency bins:
//!
//! ```text
//! s[t] = λ̄ ⊙ s[t-1] + B̄ · x[t]
//! y[t] = Re(Σᵢ Cᵢ sᵢ[t]) + D · x[t]
//! λ̄ = exp(Δ A),  B̄ = (exp(Δ A) - 1) / A · B,  Δ = exp(log_dt)
//! ```

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;

use super::init::Init;
use super::tensor::{Module, Param, Real, Tensor};
use crate::error::Result;

static POLE_CLAMPS: AtomicUsize = AtomicUsize::new(0);

/// Magnitude an unstable discrete pole is pulled back to.
const MAX_POLE: f64 = 1.0 - 1e-4;

/// How many discrete poles have been clamped to the unit disk so far.
pub fn pole_clamp_count() -> usize {
    POLE_CLAMPS.load(Ordering::Relaxed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct S4d<T> {
    pub channels: usize,
    pub state: usize,
    /// `[C]`
    pub log_dt: Param<T>,
    /// `[C, N]`
    pub a_re: Param<T>,
    pub a_im: Param<T>,
    pub b_re: Param<T>,
    pub b_im: Param<T>,
    pub c_re: Param<T>,
    pub c_im: Param<T>,
    /// `[C]`
    pub d: Param<T>,
}

/// Discretized system, one entry per `(channel, mode)`.
#[derive(Clone, Debug)]
pub struct Discrete<T> {
    pub lambda_re: Vec<T>,
    pub lambda_im: Vec<T>,
    pub bbar_re: Vec<T>,
    pub bbar_im: Vec<T>,
    clamped: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct S4dCache<T> {
    disc: Discrete<T>,
    /// Per frame: `C × N × F` state, real then imaginary halves.
    states: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct S4dState<T> {
    disc: Discrete<T>,
    s_re: Vec<T>,
    s_im: Vec<T>,
    bins: usize,
}

impl<T: Real> S4d<T> {
    /// S4D-Lin initialization: `A_n = -1/2 + iπn`, `B = 1`, `D = 1`,
    /// log-timescales uniform in `[ln 1e-3, ln 1e-1]`.
    pub fn new(channels: usize, state: usize, init: &mut Init) -> Self {
        let cn = [channels, state];
        let a_im = Param::from_vec(
            &cn,
            (0..channels * state)
                .map(|k| T::of(std::f64::consts::PI * (k % state) as f64))
                .collect(),
        );
        let c_scale = (0.5 / state as f64).sqrt();
        Self {
            channels,
            state,
            log_dt: init.range(&[channels], 1e-3_f64.ln(), 1e-1_f64.ln()),
            a_re: Param::filled(&cn, T::of(-0.5)),
            a_im,
            b_re: Param::filled(&cn, T::one()),
            b_im: Param::zeros(&cn),
            c_re: init.uniform(&cn, c_scale),
            c_im: init.uniform(&cn, c_scale),
            d: Param::filled(&[channels], T::one()),
        }
    }

    pub fn discretize(&self) -> Discrete<T> {
        let k = self.channels * self.state;
        let mut disc = Discrete {
            lambda_re: vec![T::zero(); k],
            lambda_im: vec![T::zero(); k],
            bbar_re: vec![T::zero(); k],
            bbar_im: vec![T::zero(); k],
            clamped: vec![false; k],
        };
        for c in 0..self.channels {
            let dt = self.log_dt.data[c].as_f64().exp();
            for n in 0..self.state {
                let i = c * self.state + n;
                let a = Complex64::new(self.a_re.data[i].as_f64(), self.a_im.data[i].as_f64());
                let b = Complex64::new(self.b_re.data[i].as_f64(), self.b_im.data[i].as_f64());
                let mut lam = (a * dt).exp();
                let kappa = zoh_gain(a, dt, lam);
                let bbar = kappa * b;
                if lam.norm() >= 1.0 {
                    POLE_CLAMPS.fetch_add(1, Ordering::Relaxed);
                    lam *= MAX_POLE / lam.norm();
                    disc.clamped[i] = true;
                }
                disc.lambda_re[i] = T::of(lam.re);
                disc.lambda_im[i] = T::of(lam.im);
                disc.bbar_re[i] = T::of(bbar.re);
                disc.bbar_im[i] = T::of(bbar.im);
            }
        }
        disc
    }

    /// Advances `C × N × F` complex state by one frame and writes `C × F`
    /// outputs.
    fn forward_frame(
        &self,
        disc: &Discrete<T>,
        x: &[T],
        bins: usize,
        s_re: &mut [T],
        s_im: &mut [T],
        out: &mut [T],
    ) {
        for c in 0..self.channels {
            let xc = &x[c * bins..(c + 1) * bins];
            let yc = &mut out[c * bins..(c + 1) * bins];
            yc.iter_mut().for_each(|v| *v = T::zero());
            for n in 0..self.state {
                let i = c * self.state + n;
                let (lr, li) = (disc.lambda_re[i], disc.lambda_im[i]);
                let (br, bi) = (disc.bbar_re[i], disc.bbar_im[i]);
                let (cr, ci) = (self.c_re.data[i], self.c_im.data[i]);
                let sr = &mut s_re[i * bins..(i + 1) * bins];
                let si = &mut s_im[i * bins..(i + 1) * bins];
                for f in 0..bins {
                    let (pr, pi) = (sr[f], si[f]);
                    let nr = lr * pr - li * pi + br * xc[f];
                    let ni = lr * pi + li * pr + bi * xc[f];
                    sr[f] = nr;
                    si[f] = ni;
                    yc[f] += cr * nr - ci * ni;
                }
            }
            let dc = self.d.data[c];
            for (y, &v) in yc.iter_mut().zip(xc) {
                *y += dc * v;
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, S4dCache<T>)> {
        x.check_shape(self.channels, x.bins(), "s4d input")?;
        let (_, t_n, bins) = x.shape();
        let disc = self.discretize();
        let m = self.channels * self.state * bins;
        let mut s_re = vec![T::zero(); m];
        let mut s_im = vec![T::zero(); m];
        let mut states = Vec::with_capacity(2 * m * t_n);
        let mut y = Tensor::zeros(self.channels, t_n, bins);
        for t in 0..t_n {
            self.forward_frame(&disc, x.frame(t), bins, &mut s_re, &mut s_im, y.frame_mut(t));
            states.extend_from_slice(&s_re);
            states.extend_from_slice(&s_im);
        }
        Ok((y, S4dCache { disc, states }))
    }

    pub fn backward(
        &self,
        x: &Tensor<T>,
        cache: &S4dCache<T>,
        dy: &Tensor<T>,
        grads: &mut Self,
    ) -> Tensor<T> {
        let (c_n, t_n, bins) = x.shape();
        let nn = self.state;
        let m = c_n * nn * bins;
        let disc = &cache.disc;
        let mut dx = Tensor::zeros(c_n, t_n, bins);
        // Adjoint of the state: ∂L/∂Re(s) + i ∂L/∂Im(s).
        let mut g_re = vec![T::zero(); m];
        let mut g_im = vec![T::zero(); m];
        let mut d_lam_re = vec![0.0; c_n * nn];
        let mut d_lam_im = vec![0.0; c_n * nn];
        let mut d_b_re = vec![0.0; c_n * nn];
        let mut d_b_im = vec![0.0; c_n * nn];
        for t in (0..t_n).rev() {
            let st = &cache.states[2 * m * t..2 * m * (t + 1)];
            let (s_re, s_im) = st.split_at(m);
            let prev = (t > 0).then(|| {
                let p = &cache.states[2 * m * (t - 1)..2 * m * t];
                p.split_at(m)
            });
            let (xt, gt) = (x.frame(t), dy.frame(t));
            let dxt = dx.frame_mut(t);
            for c in 0..c_n {
                let gy = &gt[c * bins..(c + 1) * bins];
                let xc = &xt[c * bins..(c + 1) * bins];
                let dd: T = gy.iter().zip(xc).fold(T::zero(), |a, (&p, &q)| a + p * q);
                grads.d.data[c] += dd;
                let dc = self.d.data[c];
                for f in 0..bins {
                    dxt[c * bins + f] += dc * gy[f];
                }
                for n in 0..nn {
                    let i = c * nn + n;
                    let (lr, li) = (disc.lambda_re[i], disc.lambda_im[i]);
                    let (br, bi) = (disc.bbar_re[i], disc.bbar_im[i]);
                    let (cr, ci) = (self.c_re.data[i], self.c_im.data[i]);
                    let r = i * bins..(i + 1) * bins;
                    let (gr, gi) = (&mut g_re[r.clone()], &mut g_im[r.clone()]);
                    let (sr, si) = (&s_re[r.clone()], &s_im[r.clone()]);
                    let (mut acc_cr, mut acc_ci) = (T::zero(), T::zero());
                    let (mut acc_lr, mut acc_li) = (T::zero(), T::zero());
                    let (mut acc_br, mut acc_bi) = (T::zero(), T::zero());
                    for f in 0..bins {
                        let g = gy[f];
                        // G_t = conj(C) g + conj(λ̄) G_{t+1}
                        let (nr, ni) = (gr[f], gi[f]);
                        let ar = cr * g + lr * nr + li * ni;
                        let ai = -ci * g + lr * ni - li * nr;
                        gr[f] = ar;
                        gi[f] = ai;
                        acc_cr += sr[f] * g;
                        acc_ci -= si[f] * g;
                        if let Some((pr, pi)) = prev {
                            let (pr, pi) = (pr[r.start + f], pi[r.start + f]);
                            // conj(s_{t-1}) G_t
                            acc_lr += pr * ar + pi * ai;
                            acc_li += pr * ai - pi * ar;
                        }
                        acc_br += xc[f] * ar;
                        acc_bi += xc[f] * ai;
                        dxt[c * bins + f] += br * ar + bi * ai;
                    }
                    grads.c_re.data[i] += acc_cr;
                    grads.c_im.data[i] += acc_ci;
                    d_lam_re[i] += acc_lr.as_f64();
                    d_lam_im[i] += acc_li.as_f64();
                    d_b_re[i] += acc_br.as_f64();
                    d_b_im[i] += acc_bi.as_f64();
                }
            }
        }
        // Chain through the zero-order hold to the continuous parameters.
        for c in 0..c_n {
            let dt = self.log_dt.data[c].as_f64().exp();
            let mut d_dt = 0.0;
            for n in 0..nn {
                let i = c * nn + n;
                let a = Complex64::new(self.a_re.data[i].as_f64(), self.a_im.data[i].as_f64());
                let b = Complex64::new(self.b_re.data[i].as_f64(), self.b_im.data[i].as_f64());
                let lam = (a * dt).exp();
                let kappa = zoh_gain(a, dt, lam);
                let g_lam = if disc.clamped[i] {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(d_lam_re[i], d_lam_im[i])
                };
                let g_bbar = Complex64::new(d_b_re[i], d_b_im[i]);
                let dkappa_da = zoh_gain_da(a, dt, lam);
                let g_a = (lam * dt).conj() * g_lam + (b * dkappa_da).conj() * g_bbar;
                let g_b = kappa.conj() * g_bbar;
                d_dt += ((a * lam).conj() * g_lam + (b * lam).conj() * g_bbar).re;
                grads.a_re.data[i] += T::of(g_a.re);
                grads.a_im.data[i] += T::of(g_a.im);
                grads.b_re.data[i] += T::of(g_b.re);
                grads.b_im.data[i] += T::of(g_b.im);
            }
            grads.log_dt.data[c] += T::of(d_dt * dt);
        }
        dx
    }

    pub fn macs_per_frame(&self, bins: usize) -> u64 {
        // complex state update (4) + input term (2) + output projection (2)
        (8 * self.channels * self.state * bins + self.channels * bins) as u64
    }

    pub fn new_state(&self, bins: usize) -> S4dState<T> {
        let m = self.channels * self.state * bins;
        S4dState {
            disc: self.discretize(),
            s_re: vec![T::zero(); m],
            s_im: vec![T::zero(); m],
            bins,
        }
    }

    pub fn step(&self, state: &mut S4dState<T>, frame: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.channels * state.bins];
        let S4dState {
            disc,
            s_re,
            s_im,
            bins,
        } = state;
        self.forward_frame(disc, frame, *bins, s_re, s_im, &mut out);
        out
    }

    /// Impulse response of channel `c` for `len` frames (without the skip term).
    pub fn kernel(&self, c: usize, len: usize) -> Vec<f64> {
        let disc = self.discretize();
        (0..len)
            .map(|k| {
                (0..self.state)
                    .map(|n| {
                        let i = c * self.state + n;
                        let lam = Complex64::new(disc.lambda_re[i].as_f64(), disc.lambda_im[i].as_f64());
                        let b = Complex64::new(disc.bbar_re[i].as_f64(), disc.bbar_im[i].as_f64());
                        let cc = Complex64::new(self.c_re.data[i].as_f64(), self.c_im.data[i].as_f64());
                        (cc * lam.powu(k as u32) * b).re
                    })
                    .sum()
            })
            .collect()
    }
}

/// `(exp(Δ A) - 1) / A`, with the `A → 0` limit `Δ`.
fn zoh_gain(a: Complex64, dt: f64, lam: Complex64) -> Complex64 {
    if a.norm() < 1e-12 {
        Complex64::new(dt, 0.0)
    } else {
        (lam - 1.0) / a
    }
}

/// `∂/∂A` of [`zoh_gain`].
fn zoh_gain_da(a: Complex64, dt: f64, lam: Complex64) -> Complex64 {
    if a.norm() < 1e-6 {
        Complex64::new(dt * dt / 2.0, 0.0)
    } else {
        (lam * dt * a - (lam - 1.0)) / (a * a)
    }
}

impl<T: Real> Module<T> for S4d<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![
            ("log_dt".into(), &self.log_dt),
            ("a_re".into(), &self.a_re),
            ("a_im".into(), &self.a_im),
            ("b_re".into(), &self.b_re),
            ("b_im".into(), &self.b_im),
            ("c_re".into(), &self.c_re),
            ("c_im".into(), &self.c_im),
            ("d".into(), &self.d),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("log_dt".into(), &mut self.log_dt),
            ("a_re".into(), &mut self.a_re),
            ("a_im".into(), &mut self.a_im),
            ("b_re".into(), &mut self.b_re),
            ("b_im".into(), &mut self.b_im),
            ("c_re".into(), &mut self.c_re),
            ("c_im".into(), &mut self.c_im),
            ("d".into(), &mut self.d),
        ]
    }
}
