use super::activation::sigmoid;
use super::init::Init;
use super::tensor::{Module, Param, Real, Tensor};
use crate::error::Result;

/// Sub-band time LSTM: one LSTM over the frame axis, run independently at
/// every frequency bin with a single shared parameter set. Inputs at each
/// `(t, f)` are the `C` channel values; outputs are the `H` hidden units.
///
/// Gate order is `i, f, g, o`, with separate input and recurrent biases.
#[derive(Clone, Debug, PartialEq)]
pub struct TchLstm<T> {
    pub input: usize,
    pub hidden: usize,
    /// `[4H, In]`
    pub w_ih: Param<T>,
    /// `[4H, H]`
    pub w_hh: Param<T>,
    pub b_ih: Param<T>,
    pub b_hh: Param<T>,
}

#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    /// Activated gates, `4H × T × F`.
    gates: Tensor<T>,
    cell: Tensor<T>,
    tanh_cell: Tensor<T>,
}

/// Recurrent carry for frame-online use.
#[derive(Clone, Debug)]
pub struct LstmState<T> {
    h: Option<Vec<T>>,
    c: Option<Vec<T>>,
    bins: usize,
}

impl<T: Real> TchLstm<T> {
    pub fn new(input: usize, hidden: usize, init: &mut Init) -> Self {
        let g = 4 * hidden;
        Self {
            input,
            hidden,
            w_ih: init.fan_in(&[g, input], hidden),
            w_hh: init.fan_in(&[g, hidden], hidden),
            b_ih: init.fan_in(&[g], hidden),
            b_hh: init.fan_in(&[g], hidden),
        }
    }

    /// Advances every frequency by one frame.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_frame(
        &self,
        x: &[T],
        h_prev: Option<&[T]>,
        c_prev: Option<&[T]>,
        bins: usize,
        gates: &mut [T],
        cell: &mut [T],
        tanh_cell: &mut [T],
        h_out: &mut [T],
    ) {
        let hn = self.hidden;
        for g in 0..4 * hn {
            let row = &mut gates[g * bins..(g + 1) * bins];
            let b = self.b_ih.data[g] + self.b_hh.data[g];
            row.iter_mut().for_each(|v| *v = b);
            for i in 0..self.input {
                let w = self.w_ih.data[g * self.input + i];
                for (r, &v) in row.iter_mut().zip(&x[i * bins..(i + 1) * bins]) {
                    *r += w * v;
                }
            }
            if let Some(h) = h_prev {
                for j in 0..hn {
                    let w = self.w_hh.data[g * hn + j];
                    for (r, &v) in row.iter_mut().zip(&h[j * bins..(j + 1) * bins]) {
                        *r += w * v;
                    }
                }
            }
        }
        let (ifg, o) = gates.split_at_mut(3 * hn * bins);
        let (i_f, g_gate) = ifg.split_at_mut(2 * hn * bins);
        i_f.iter_mut().for_each(|v| *v = sigmoid(*v));
        g_gate.iter_mut().for_each(|v| *v = v.tanh());
        o.iter_mut().for_each(|v| *v = sigmoid(*v));
        let n = hn * bins;
        for k in 0..n {
            let (ig, fg, gg, og) = (i_f[k], i_f[n + k], g_gate[k], o[k]);
            let cp = c_prev.map_or(T::zero(), |c| c[k]);
            let c = fg * cp + ig * gg;
            let tc = c.tanh();
            cell[k] = c;
            tanh_cell[k] = tc;
            h_out[k] = og * tc;
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LstmCache<T>)> {
        x.check_shape(self.input, x.bins(), "lstm input")?;
        let (_, t_n, bins) = x.shape();
        let hn = self.hidden;
        let mut h = Tensor::zeros(hn, t_n, bins);
        let mut gates = Tensor::zeros(4 * hn, t_n, bins);
        let mut cell = Tensor::zeros(hn, t_n, bins);
        let mut tanh_cell = Tensor::zeros(hn, t_n, bins);
        let n = hn * bins;
        for t in 0..t_n {
            // Split the previous frame out of the output buffers.
            let (h_done, h_rest) = h.data_mut().split_at_mut(t * n);
            let (c_done, c_rest) = cell.data_mut().split_at_mut(t * n);
            let h_prev = (t > 0).then(|| &h_done[(t - 1) * n..]);
            let c_prev = (t > 0).then(|| &c_done[(t - 1) * n..]);
            self.forward_frame(
                x.frame(t),
                h_prev,
                c_prev,
                bins,
                gates.frame_mut(t),
                &mut c_rest[..n],
                tanh_cell.frame_mut(t),
                &mut h_rest[..n],
            );
        }
        Ok((
            h,
            LstmCache {
                gates,
                cell,
                tanh_cell,
            },
        ))
    }

    pub fn backward(
        &self,
        x: &Tensor<T>,
        out: &Tensor<T>,
        cache: &LstmCache<T>,
        dy: &Tensor<T>,
        grads: &mut Self,
    ) -> Tensor<T> {
        let (_, t_n, bins) = x.shape();
        let hn = self.hidden;
        let n = hn * bins;
        let mut dx = Tensor::zeros(self.input, t_n, bins);
        let mut dh_next = vec![T::zero(); n];
        let mut dc_next = vec![T::zero(); n];
        let mut da = vec![T::zero(); 4 * n];
        let one = T::one();
        for t in (0..t_n).rev() {
            let gates = cache.gates.frame(t);
            let tc = cache.tanh_cell.frame(t);
            let c_prev = (t > 0).then(|| cache.cell.frame(t - 1));
            let g_t = dy.frame(t);
            for k in 0..n {
                let (ig, fg, gg, og) = (gates[k], gates[n + k], gates[2 * n + k], gates[3 * n + k]);
                let dh = g_t[k] + dh_next[k];
                let d_o = dh * tc[k];
                let dc = dh * og * (one - tc[k] * tc[k]) + dc_next[k];
                let cp = c_prev.map_or(T::zero(), |c| c[k]);
                da[k] = dc * gg * ig * (one - ig);
                da[n + k] = dc * cp * fg * (one - fg);
                da[2 * n + k] = dc * ig * (one - gg * gg);
                da[3 * n + k] = d_o * og * (one - og);
                dc_next[k] = dc * fg;
            }
            let xt = x.frame(t);
            let h_prev = (t > 0).then(|| out.frame(t - 1));
            dh_next.iter_mut().for_each(|v| *v = T::zero());
            let dxt = dx.frame_mut(t);
            for g in 0..4 * hn {
                let row = &da[g * bins..(g + 1) * bins];
                let s: T = row.iter().copied().sum();
                grads.b_ih.data[g] += s;
                grads.b_hh.data[g] += s;
                for i in 0..self.input {
                    let xi = &xt[i * bins..(i + 1) * bins];
                    grads.w_ih.data[g * self.input + i] +=
                        row.iter().zip(xi).fold(T::zero(), |a, (&p, &q)| a + p * q);
                    let w = self.w_ih.data[g * self.input + i];
                    for (d, &r) in dxt[i * bins..(i + 1) * bins].iter_mut().zip(row) {
                        *d += w * r;
                    }
                }
                if let Some(h) = h_prev {
                    for j in 0..hn {
                        let hj = &h[j * bins..(j + 1) * bins];
                        grads.w_hh.data[g * hn + j] +=
                            row.iter().zip(hj).fold(T::zero(), |a, (&p, &q)| a + p * q);
                        let w = self.w_hh.data[g * hn + j];
                        for (d, &r) in dh_next[j * bins..(j + 1) * bins].iter_mut().zip(row) {
                            *d += w * r;
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn macs_per_frame(&self, bins: usize) -> u64 {
        (4 * self.hidden * (self.input + self.hidden) * bins) as u64
    }

    pub fn new_state(&self, bins: usize) -> LstmState<T> {
        LstmState {
            h: None,
            c: None,
            bins,
        }
    }

    pub fn step(&self, state: &mut LstmState<T>, frame: &[T]) -> Vec<T> {
        let (hn, bins) = (self.hidden, state.bins);
        let mut gates = vec![T::zero(); 4 * hn * bins];
        let mut cell = vec![T::zero(); hn * bins];
        let mut tanh_cell = vec![T::zero(); hn * bins];
        let mut h = vec![T::zero(); hn * bins];
        self.forward_frame(
            frame,
            state.h.as_deref(),
            state.c.as_deref(),
            bins,
            &mut gates,
            &mut cell,
            &mut tanh_cell,
            &mut h,
        );
        state.h = Some(h.clone());
        state.c = Some(cell);
        h
    }
}

impl<T: Real> Module<T> for TchLstm<T> {
    fn params(&self) -> Vec<(String, &Param<T>)> {
        vec![
            ("w_ih".into(), &self.w_ih),
            ("w_hh".into(), &self.w_hh),
            ("b_ih".into(), &self.b_ih),
            ("b_hh".into(), &self.b_hh),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![
            ("w_ih".into(), &mut self.w_ih),
            ("w_hh".into(), &mut self.w_hh),
            ("b_ih".into(), &mut self.b_ih),
            ("b_hh".into(), &mut self.b_hh),
        ]
    }
}
