//! Central finite-difference checks for every layer's backward pass, in f64.
//!
//! Each check builds a random layer and input, projects the output onto a
//! random tensor `w` (so `L = Σ w ⊙ y` and `∂L/∂y = w`), and compares the
//! analytic input and parameter gradients against `(L(θ+ε) - L(θ-ε)) / 2ε`
//! on a random subset of coordinates.

use echolab::aec::{AecModel, DirectionInfo, FusionMode, IscrnConfig};
use echolab::labels::LABEL_WIDTH;
use echolab::nn::{
    bce_with_logits, elu_backward, elu_forward, ri_mag_loss, sigmoid_backward, sigmoid_forward,
    softmax_groups, softmax_groups_backward, tanh_backward, tanh_forward, ChannelLinear,
    Conv2dCausal, FreqLinear, Init, LayerNorm, Mode, Module, NormGroup, S4d, TchLstm, Tensor,
};
use echolab::ssdoa::{doa_loss, SsDoa, SsDoaConfig};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const SHAPES: usize = 5;
const PICKS: usize = 24;

/// Worst relative error of one layer over all its shapes.
#[derive(Clone, Debug)]
pub struct LayerCheck {
    pub name: &'static str,
    pub shapes: usize,
    pub max_rel_err: f64,
}

impl LayerCheck {
    pub fn passed(&self) -> bool {
        self.shapes >= SHAPES && self.max_rel_err < TOLERANCE
    }
}

/// Relative error with a floor at 1e-3 of the largest analytic gradient
/// magnitude of the whole check, so coordinates with vanishing gradient
/// (where the finite difference is pure roundoff) compare absolutely.
fn rel_err(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let floor = 1e-3 * scale + 1e-12;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn picks(rng: &mut Pcg64, len: usize) -> Vec<usize> {
    if len <= PICKS {
        (0..len).collect()
    } else {
        (0..PICKS).map(|_| rng.random_range(0..len)).collect()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

fn fd(mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(EPS) - f(-EPS)) / (2.0 * EPS)
}

/// Checks `analytic` against finite differences of `loss` over `x`.
fn check_vec(
    rng: &mut Pcg64,
    x: &[f64],
    analytic: &[f64],
    scale: f64,
    loss: impl Fn(&[f64]) -> f64,
) -> f64 {
    let mut worst = 0.0_f64;
    let mut xp = x.to_vec();
    for i in picks(rng, x.len()) {
        let n = fd(|e| {
            xp[i] = x[i] + e;
            let l = loss(&xp);
            xp[i] = x[i];
            l
        });
        worst = worst.max(rel_err(analytic[i], n, scale));
    }
    worst
}

/// Checks every parameter tensor of `model` and, when given, the input.
fn check_module<M: Module<f64> + Clone>(
    rng: &mut Pcg64,
    model: &M,
    grads: &M,
    x: &Tensor<f64>,
    dx: Option<&Tensor<f64>>,
    loss: impl Fn(&M, &Tensor<f64>) -> f64,
) -> f64 {
    let analytic: Vec<Vec<f64>> = grads.params().iter().map(|(_, p)| p.data.clone()).collect();
    let scale = analytic
        .iter()
        .flatten()
        .chain(dx.map_or(&[][..], |d| d.data()))
        .fold(0.0_f64, |a, &b| a.max(b.abs()));
    let mut worst = 0.0_f64;
    if let Some(dx) = dx {
        let (c, t, f) = x.shape();
        worst = worst.max(check_vec(rng, x.data(), dx.data(), scale, |v| {
            loss(model, &Tensor::from_frames(c, t, f, v.to_vec()).unwrap())
        }));
    }
    for (k, g) in analytic.iter().enumerate() {
        let base = model.params()[k].1.data.clone();
        worst = worst.max(check_vec(rng, &base, g, scale, |v| {
            let mut m = model.clone();
            m.params_mut()[k].1.data.copy_from_slice(v);
            loss(&m, x)
        }));
    }
    worst
}

fn randn(rng: &mut Pcg64, c: usize, t: usize, f: usize, scale: f64) -> Tensor<f64> {
    Tensor::from_fn(c, t, f, |_, _, _| scale * rng.random_range(-1.0..1.0))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Nudges entries away from zero, where ELU and the compressed loss have
/// a kink.
fn away_from_zero(x: &mut [f64], margin: f64) {
    for v in x {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin } else { margin };
        }
    }
}

fn dims(rng: &mut Pcg64) -> (usize, usize, usize) {
    (rng.random_range(1..4), rng.random_range(2..6), rng.random_range(3..8))
}

fn run(name: &'static str, seed: u64, mut one: impl FnMut(&mut Pcg64, u64) -> f64) -> LayerCheck {
    let mut rng = Pcg64::seed_from_u64(seed);
    let max_rel_err = (0..SHAPES as u64)
        .map(|s| one(&mut rng, seed * 100 + s))
        .fold(0.0, f64::max);
    LayerCheck { name, shapes: SHAPES, max_rel_err }
}

pub fn conv2d_causal(seed: u64) -> LayerCheck {
    run("conv2d_causal", seed, |rng, s| {
        let (cin, t, f) = dims(rng);
        let cout = rng.random_range(1..4);
        let layer = Conv2dCausal::<f64>::new(cin, cout, &mut Init::new(s));
        let x = randn(rng, cin, t, f, 1.0);
        let w = randn(rng, cout, t, f, 1.0);
        let mut g = layer.zeros_like();
        let dx = layer.backward(&x, &w, &mut g);
        check_module(rng, &layer, &g, &x, Some(&dx), |m, x| dot(&m.forward(x).unwrap(), &w))
    })
}

pub fn tch_lstm(seed: u64) -> LayerCheck {
    run("tch_lstm", seed, |rng, s| {
        let (cin, t, f) = dims(rng);
        let hidden = rng.random_range(1..5);
        let layer = TchLstm::<f64>::new(cin, hidden, &mut Init::new(s));
        let x = randn(rng, cin, t, f, 1.0);
        let w = randn(rng, hidden, t, f, 1.0);
        let (y, cache) = layer.forward(&x).unwrap();
        let mut g = layer.zeros_like();
        let dx = layer.backward(&x, &y, &cache, &w, &mut g);
        check_module(rng, &layer, &g, &x, Some(&dx), |m, x| dot(&m.forward(x).unwrap().0, &w))
    })
}

pub fn layer_norm(seed: u64) -> LayerCheck {
    run("layer_norm", seed, |rng, s| {
        let (c, t, f) = dims(rng);
        let group = if s % 2 == 0 { NormGroup::ChannelFreq } else { NormGroup::Channel };
        let mut layer = LayerNorm::<f64>::new(c + 1, f, group);
        for (_, p) in layer.params_mut() {
            p.data.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
        }
        let x = randn(rng, c + 1, t, f, 2.0);
        let w = randn(rng, c + 1, t, f, 1.0);
        let (_, cache) = layer.forward(&x).unwrap();
        let mut g = layer.zeros_like();
        let dx = layer.backward(&cache, &w, &mut g);
        check_module(rng, &layer, &g, &x, Some(&dx), |m, x| dot(&m.forward(x).unwrap().0, &w))
    })
}

pub fn channel_linear(seed: u64) -> LayerCheck {
    run("channel_linear", seed, |rng, s| {
        let (cin, t, f) = dims(rng);
        let cout = rng.random_range(1..5);
        let layer = ChannelLinear::<f64>::new(cin, cout, &mut Init::new(s));
        let x = randn(rng, cin, t, f, 1.0);
        let w = randn(rng, cout, t, f, 1.0);
        let mut g = layer.zeros_like();
        let dx = layer.backward(&x, &w, &mut g);
        check_module(rng, &layer, &g, &x, Some(&dx), |m, x| dot(&m.forward(x).unwrap(), &w))
    })
}

pub fn freq_linear(seed: u64) -> LayerCheck {
    run("freq_linear", seed, |rng, s| {
        let (_, t, fin) = dims(rng);
        let c = 1;
        let fout = rng.random_range(1..9);
        let layer = FreqLinear::<f64>::new(fin, fout, &mut Init::new(s));
        let x = randn(rng, c, t, fin, 1.0);
        let w = randn(rng, c, t, fout, 1.0);
        let mut g = layer.zeros_like();
        let dx = layer.backward(&x, &w, &mut g);
        check_module(rng, &layer, &g, &x, Some(&dx), |m, x| dot(&m.forward(x).unwrap(), &w))
    })
}

pub fn s4d(seed: u64) -> LayerCheck {
    run("s4d", seed, |rng, s| {
        let (c, t, f) = dims(rng);
        let state = rng.random_range(1..6);
        let mut layer = S4d::<f64>::new(c, state, &mut Init::new(s));
        // Faster timescales and a random input matrix so every parameter
        // moves the output noticeably.
        for v in layer.log_dt.data.iter_mut() {
            *v = rng.random_range(0.1_f64.ln()..1.0_f64.ln());
        }
        for v in layer.b_re.data.iter_mut().chain(layer.b_im.data.iter_mut()) {
            *v = rng.random_range(-1.0..1.0);
        }
        let x = randn(rng, c, t + 4, f, 1.0);
        let w = randn(rng, c, t + 4, f, 1.0);
        let (_, cache) = layer.forward(&x).unwrap();
        let mut g = layer.zeros_like();
        let dx = layer.backward(&x, &cache, &w, &mut g);
        check_module(rng, &layer, &g, &x, Some(&dx), |m, x| dot(&m.forward(x).unwrap().0, &w))
    })
}

/// Pointwise activations have no parameters; only the input is checked.
fn pointwise(
    rng: &mut Pcg64,
    fwd: fn(&Tensor<f64>) -> Tensor<f64>,
    bwd: impl Fn(&Tensor<f64>, &Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
) -> f64 {
    let (c, t, f) = dims(rng);
    let mut x = randn(rng, c, t, f, 3.0);
    away_from_zero(x.data_mut(), 1e-2);
    let w = randn(rng, c, t, f, 1.0);
    let y = fwd(&x);
    let dx = bwd(&x, &y, &w);
    check_vec(rng, x.data(), dx.data(), max_abs(dx.data()), |v| {
        dot(&fwd(&Tensor::from_frames(c, t, f, v.to_vec()).unwrap()), &w)
    })
}

pub fn elu(seed: u64) -> LayerCheck {
    run("elu", seed, |rng, _| pointwise(rng, elu_forward, elu_backward))
}

pub fn sigmoid(seed: u64) -> LayerCheck {
    run("sigmoid", seed, |rng, _| pointwise(rng, sigmoid_forward, |_, y, w| sigmoid_backward(y, w)))
}

pub fn tanh(seed: u64) -> LayerCheck {
    run("tanh", seed, |rng, _| pointwise(rng, tanh_forward, |_, y, w| tanh_backward(y, w)))
}

pub fn softmax(seed: u64) -> LayerCheck {
    run("softmax", seed, |rng, _| {
        let width = rng.random_range(2..8);
        let groups = rng.random_range(1..5);
        let x: Vec<f64> = (0..width * groups).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = softmax_groups(&x, width).unwrap();
        let dx = softmax_groups_backward(&y, &w, width);
        check_vec(rng, &x, &dx, max_abs(&dx), |v| {
            softmax_groups(v, width).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
        })
    })
}

pub fn bce_loss(seed: u64) -> LayerCheck {
    run("bce_with_logits", seed, |rng, _| {
        let n = rng.random_range(4..60);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-6.0..6.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let (_, g) = bce_with_logits(&z, &y).unwrap();
        check_vec(rng, &z, &g, max_abs(&g), |v| bce_with_logits(v, &y).unwrap().0)
    })
}

pub fn ri_mag(seed: u64) -> LayerCheck {
    run("ri_mag_loss", seed, |rng, _| {
        let n = rng.random_range(4..60);
        let p = [0.5, 0.3, 0.7, 1.0][rng.random_range(0..4)];
        let mut est: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        away_from_zero(&mut est, 0.05);
        let tgt: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, gr, gi) = ri_mag_loss(&est[..n], &est[n..], &tgt[..n], &tgt[n..], p).unwrap();
        let g: Vec<f64> = gr.into_iter().chain(gi).collect();
        check_vec(rng, &est, &g, max_abs(&g), |v| ri_mag_loss(&v[..n], &v[n..], &tgt[..n], &tgt[n..], p).unwrap().0)
    })
}

/// A reduced SS-DOA, checked end to end through the DOA loss.
pub fn ssdoa_end_to_end(seed: u64) -> LayerCheck {
    run("ssdoa_end_to_end", seed, |rng, s| {
        let cfg = SsDoaConfig {
            num_mics: 2,
            channels: rng.random_range(2..4),
            bins: rng.random_range(3..6),
            num_blocks: 2,
            dropout: 0.0,
            seed: s,
            ..Default::default()
        };
        let model = SsDoa::<f64>::new(cfg).unwrap();
        let t = rng.random_range(2..5);
        let x = randn(rng, cfg.in_channels(), t, cfg.bins, 1.0);
        let ls: Vec<f64> = (0..t * LABEL_WIDTH).map(|_| f64::from(rng.random_bool(0.05) as u8)).collect();
        let tk: Vec<f64> = (0..t * LABEL_WIDTH).map(|_| f64::from(rng.random_bool(0.05) as u8)).collect();
        let loss = |m: &SsDoa<f64>, x: &Tensor<f64>| {
            let (out, _) = m.forward(x, Mode::Train, 0).unwrap();
            doa_loss(&out, &ls, &tk).unwrap().0
        };
        let (out, cache) = model.forward(&x, Mode::Train, 0).unwrap();
        let (_, d0, d1) = doa_loss(&out, &ls, &tk).unwrap();
        let mut g = model.zeros_like();
        let dx = model.backward(&cache, &d0, &d1, &mut g);
        check_module(rng, &model, &g, &x, Some(&dx), loss)
    })
}

/// A reduced ISCRN with ETA fusion, checked end to end through the AEC loss.
pub fn aec_end_to_end(seed: u64) -> LayerCheck {
    run("aec_eta_end_to_end", seed, |rng, s| {
        let bins = rng.random_range(3..6);
        let doa_cfg = SsDoaConfig { num_mics: 2, channels: 2, bins, num_blocks: 2, seed: s, ..Default::default() };
        let t = rng.random_range(2..5);
        let x = randn(rng, doa_cfg.in_channels(), t, bins, 1.0);
        let side = SsDoa::<f64>::new(doa_cfg).unwrap().infer(&x).unwrap();
        let cfg = IscrnConfig {
            channels: rng.random_range(2..4),
            bins,
            pre_units: 1,
            post_units: 1,
            s4d_state: 2,
            seed: s,
            ..Default::default()
        };
        let model = AecModel::<f64>::new(2, FusionMode::Eta, cfg).unwrap();
        let target = randn(rng, 2, t, bins, 1.0);
        let info = DirectionInfo::ssdoa(&side);
        let loss = |m: &AecModel<f64>, x: &Tensor<f64>| {
            let est = m.infer(x, &info).unwrap();
            echolab::aec::aec_loss(&est, &target).unwrap().0
        };
        let (est, cache) = model.forward(&x, &info).unwrap();
        let (_, d_est) = echolab::aec::aec_loss(&est, &target).unwrap();
        let mut g = model.zeros_like();
        model.backward(&cache, &d_est, &mut g);
        check_module(rng, &model, &g, &x, None, loss)
    })
}

/// Every check, in a fixed order.
pub fn all(seed: u64) -> Vec<LayerCheck> {
    let checks: [fn(u64) -> LayerCheck; 14] = [
        conv2d_causal,
        tch_lstm,
        layer_norm,
        channel_linear,
        freq_linear,
        elu,
        sigmoid,
        tanh,
        softmax,
        s4d,
        bce_loss,
        ri_mag,
        ssdoa_end_to_end,
        aec_end_to_end,
    ];
    checks.iter().map(|c| c(seed)).collect()
}
