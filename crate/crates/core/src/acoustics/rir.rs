use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{distance, RoomSpec, Vec3};

pub const SPEED_OF_SOUND: f64 = 343.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsorptionModel {
    Eyring,
    Sabine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RirConfig {
    pub sample_rate: f64,
    /// Reflection-order cap; `None` keeps every image that arrives within
    /// the RIR length.
    pub max_order: Option<u32>,
    pub absorption: AbsorptionModel,
    /// Rescale the absorption so the simulated decay hits the room T60.
    pub calibrate: bool,
    /// RIR length as a multiple of T60. The tail past one T60 lies below
    /// -60 dB and is dropped by default.
    pub length_t60: f64,
    /// Replaces the T60-derived wall reflection coefficient, e.g. `Some(0.0)`
    /// for a free-field response.
    pub reflection_override: Option<f64>,
}

impl Default for RirConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000.0,
            max_order: None,
            absorption: AbsorptionModel::Eyring,
            calibrate: true,
            length_t60: 1.0,
            reflection_override: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate: f64,
    pub source: Vec3,
    pub receiver: Vec3,
    pub t60_s: f64,
}

impl Rir {
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|x| x * x).sum()
    }

    pub fn first_nonzero(&self) -> Option<usize> {
        self.taps.iter().position(|&x| x != 0.0)
    }
}

/// Delay in whole samples for a path of `dist` meters (round half up).
pub fn delay_samples(dist: f64, fs: f64) -> usize {
    (dist / SPEED_OF_SOUND * fs + 0.5).floor() as usize
}

/// Uniform wall pressure reflection coefficient that yields `room.t60_s`.
pub fn reflection_coefficient(room: &RoomSpec, model: AbsorptionModel) -> Result<f64> {
    if !(room.t60_s > 0.0) {
        return Err(Error::domain(format!("t60 must be positive, got {}", room.t60_s)));
    }
    let (v, s) = (room.volume(), room.surface());
    let k = 24.0 * std::f64::consts::LN_10 * v / (SPEED_OF_SOUND * s * room.t60_s);
    match model {
        // T60 = k T60 / -ln(1 - alpha), with 1 - alpha = beta^2.
        AbsorptionModel::Eyring => Ok((-k / 2.0).exp()),
        AbsorptionModel::Sabine => {
            if k > 1.0 {
                return Err(Error::domain(format!(
                    "Sabine absorption {k:.3} exceeds 1 for T60 {} s",
                    room.t60_s
                )));
            }
            Ok((1.0 - k).sqrt())
        }
    }
}

fn dims_min(room: &RoomSpec) -> f64 {
    room.length_m.min(room.width_m).min(room.height_m)
}

fn check_inside(room: &RoomSpec, p: &Vec3, what: &str) -> Result<()> {
    if !room.contains(p) {
        return Err(Error::domain(format!(
            "{what} {p:?} is not strictly inside the {}x{}x{} m room",
            room.length_m, room.width_m, room.height_m
        )));
    }
    Ok(())
}

/// Image positions along one axis: (coordinate offset to the receiver,
/// wall hits). `q = 1` mirrors the source about the lower wall.
fn axis_images(src: f64, rcv: f64, len: f64, n: i64, max_order: u32) -> Vec<(f64, u32)> {
    let mut out = Vec::with_capacity((4 * n + 2) as usize);
    for m in -n..=n {
        for q in 0..2i64 {
            let hits = ((m - q).unsigned_abs() + m.unsigned_abs()) as u32;
            if hits > max_order {
                continue;
            }
            let x = (1 - 2 * q) as f64 * src + 2.0 * m as f64 * len;
            out.push((x - rcv, hits));
        }
    }
    out
}

/// Wall reflection coefficient used for `room` under `cfg`.
///
/// The specular image model with uniform walls decays noticeably slower
/// than the diffuse-field formulas assume (about 1.3-1.5x in T60), so with
/// `calibrate` set the formula value only seeds a short fixed-point search
/// that matches the Schroeder T20 of a reference path to the room T60.
pub fn room_reflection(room: &RoomSpec, cfg: &RirConfig) -> Result<f64> {
    if let Some(b) = cfg.reflection_override {
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::domain(format!("reflection coefficient {b} outside [0, 1]")));
        }
        return Ok(b);
    }
    let beta = reflection_coefficient(room, cfg.absorption)?;
    if !cfg.calibrate {
        return Ok(beta);
    }
    let d = room.dims();
    let src = [0.35 * d[0], 0.4 * d[1], 0.45 * d[2]];
    let rcv = [0.6 * d[0], 0.55 * d[1], 0.5 * d[2]];
    // ln(beta) scales as 1 / T60, so iterate on the effective T60.
    let mut tau = room.t60_s;
    let mut best = (f64::INFINITY, beta);
    for _ in 0..6 {
        let b = reflection_coefficient(&RoomSpec { t60_s: tau, ..*room }, AbsorptionModel::Eyring)?;
        let probe = RoomSpec {
            t60_s: room.t60_s.max(tau),
            ..*room
        };
        let rir = image_rir(&probe, &src, &rcv, cfg, b)?;
        let Some(t) = schroeder_t60(&rir.taps, cfg.sample_rate, -5.0, -25.0) else {
            break;
        };
        let err = (t / room.t60_s).ln().abs();
        if err < best.0 {
            best = (err, b);
        }
        if err < 0.01 {
            break;
        }
        tau *= room.t60_s / t;
    }
    Ok(best.1)
}

/// Shoebox room impulse response by the image-source method with integer
/// sample delays and frequency-independent uniform wall reflection.
pub fn simulate_rir(room: &RoomSpec, source: &Vec3, receiver: &Vec3, cfg: &RirConfig) -> Result<Rir> {
    let beta = room_reflection(room, cfg)?;
    image_rir(room, source, receiver, cfg, beta)
}

/// Image-method RIR with an explicit wall reflection coefficient.
pub fn image_rir(room: &RoomSpec, source: &Vec3, receiver: &Vec3, cfg: &RirConfig, beta: f64) -> Result<Rir> {
    check_inside(room, source, "source")?;
    check_inside(room, receiver, "receiver")?;
    if distance(source, receiver) == 0.0 {
        return Err(Error::domain("source and receiver coincide"));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("reflection coefficient {beta} outside [0, 1]")));
    }
    if !(room.t60_s > 0.0) {
        return Err(Error::domain(format!("t60 must be positive, got {}", room.t60_s)));
    }
    let fs = cfg.sample_rate;
    let direct = delay_samples(distance(source, receiver), fs);
    let len = ((cfg.length_t60 * room.t60_s * fs).ceil() as usize).max(direct + 1);
    let max_dist = len as f64 * SPEED_OF_SOUND / fs;

    let max_order = cfg
        .max_order
        .unwrap_or_else(|| (3.0 * max_dist / dims_min(room)) as u32 + 16);
    let dims = room.dims();
    let axes: Vec<Vec<(f64, u32)>> = (0..3)
        .map(|a| {
            let n = (max_dist / (2.0 * dims[a])).ceil() as i64 + 1;
            axis_images(source[a], receiver[a], dims[a], n, max_order)
        })
        .collect();

    let mut pow = vec![1.0; max_order as usize + 1];
    for k in 1..pow.len() {
        pow[k] = pow[k - 1] * beta;
    }

    let mut taps = vec![0.0; len];
    let max_d2 = max_dist * max_dist;
    for &(dx, hx) in &axes[0] {
        let dx2 = dx * dx;
        if dx2 > max_d2 {
            continue;
        }
        for &(dy, hy) in &axes[1] {
            let dxy2 = dx2 + dy * dy;
            if dxy2 > max_d2 || hx + hy > max_order {
                continue;
            }
            for &(dz, hz) in &axes[2] {
                let hits = hx + hy + hz;
                if hits > max_order {
                    continue;
                }
                let d = (dxy2 + dz * dz).sqrt();
                let n = delay_samples(d, fs);
                if n >= len {
                    continue;
                }
                let g = pow[hits as usize];
                if g != 0.0 {
                    taps[n] += g / (4.0 * std::f64::consts::PI * d);
                }
            }
        }
    }
    Ok(Rir {
        taps,
        sample_rate: fs,
        source: *source,
        receiver: *receiver,
        t60_s: room.t60_s,
    })
}

/// The direct path alone, `len` taps long.
pub fn direct_path_rir(source: &Vec3, receiver: &Vec3, fs: f64, len: usize) -> Result<Rir> {
    let d = distance(source, receiver);
    if d == 0.0 {
        return Err(Error::domain("source and receiver coincide"));
    }
    let n = delay_samples(d, fs);
    let mut taps = vec![0.0; len.max(n + 1)];
    taps[n] = 1.0 / (4.0 * std::f64::consts::PI * d);
    Ok(Rir {
        taps,
        sample_rate: fs,
        source: *source,
        receiver: *receiver,
        t60_s: 0.0,
    })
}

/// Schroeder backward-integrated energy decay curve in dB (0 dB at n = 0).
pub fn energy_decay_curve(taps: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; taps.len()];
    let mut acc = 0.0;
    for (i, &h) in taps.iter().enumerate().rev() {
        acc += h * h;
        edc[i] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter()
        .map(|&e| 10.0 * (e / total).max(1e-300).log10())
        .collect()
}

/// T60 from a least-squares line through the EDC between `hi_db` and `lo_db`
/// (e.g. -5 and -25), extrapolated to -60 dB.
pub fn schroeder_t60(taps: &[f64], fs: f64, hi_db: f64, lo_db: f64) -> Option<f64> {
    let edc = energy_decay_curve(taps);
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .filter(|(_, &e)| e <= hi_db && e >= lo_db)
        .map(|(i, &e)| (i as f64 / fs, e))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -60.0 / slope)
}
