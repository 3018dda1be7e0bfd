//! Frame-level DOA presence labels on the 36-direction grid.
//!
//! Each direction carries a two-class one-hot: `[1, 0]` when a source is
//! present, `[0, 1]` when absent. Flattened per frame that is a 72-vector
//! with direction `d` at positions `2d` (present) and `2d + 1` (absent).

use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::error::{Error, Result};
use crate::scenario::{direction_to_grid_index, Scenario, NUM_DIRECTIONS};

pub const LABELS_FORMAT: &str = "echolab-labels/1";
const MAGIC: &[u8; 4] = b"ELBL";

/// Width of one flattened label frame.
pub const LABEL_WIDTH: usize = 2 * NUM_DIRECTIONS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Loudspeakers,
    Talker,
}

impl Branch {
    pub fn max_sources(self) -> usize {
        match self {
            Branch::Loudspeakers => 2,
            Branch::Talker => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActivityConfig {
    /// Frame RMS threshold relative to the source's loudest frame.
    pub relative_db: f64,
    pub floor_rms: f64,
}

impl Default for ActivityConfig {
    fn default() -> Self {
        Self {
            relative_db: -40.0,
            floor_rms: 1e-6,
        }
    }
}

/// Per-frame RMS under the causal tail-padded framing.
pub fn frame_rms(wave: &[f64], stft: &StftConfig) -> Result<Vec<f64>> {
    let (win, hop) = (stft.win_len(), stft.hop_len());
    if wave.len() < win {
        return Err(Error::domain(format!(
            "wave of {} samples is shorter than one {win}-sample frame",
            wave.len()
        )));
    }
    let frames = stft.num_frames(wave.len());
    Ok((0..frames)
        .map(|t| {
            let start = t * hop;
            let end = (start + win).min(wave.len());
            let e: f64 = wave[start..end].iter().map(|v| v * v).sum();
            (e / win as f64).sqrt()
        })
        .collect())
}

pub fn frame_activity(wave: &[f64], stft: &StftConfig, act: &ActivityConfig) -> Result<Vec<bool>> {
    let rms = frame_rms(wave, stft)?;
    let peak = rms.iter().copied().fold(0.0, f64::max);
    let thr = (peak * 10f64.powf(act.relative_db / 20.0)).max(act.floor_rms);
    Ok(rms.into_iter().map(|r| r > thr).collect())
}

/// Dry source signals fed to the renderer, after gain and pattern gating.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceWaves {
    pub loudspeakers: Vec<Vec<f64>>,
    pub talker: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoaLabelTrack {
    pub stft: StftConfig,
    pub loudspeakers: Vec<[bool; NUM_DIRECTIONS]>,
    pub talker: Vec<[bool; NUM_DIRECTIONS]>,
}

impl DoaLabelTrack {
    pub fn frames(&self) -> usize {
        self.talker.len()
    }

    pub fn rows(&self, branch: Branch) -> &[[bool; NUM_DIRECTIONS]] {
        match branch {
            Branch::Loudspeakers => &self.loudspeakers,
            Branch::Talker => &self.talker,
        }
    }

    /// `T × 72` one-hot targets, row-major.
    pub fn one_hot<T: From<u8>>(&self, branch: Branch) -> Vec<T> {
        let mut out = Vec::with_capacity(self.frames() * LABEL_WIDTH);
        for row in self.rows(branch) {
            for &p in row {
                out.push(T::from(p as u8));
                out.push(T::from(!p as u8));
            }
        }
        out
    }

    pub fn direction_sets(&self, branch: Branch) -> Vec<Vec<usize>> {
        self.rows(branch)
            .iter()
            .map(|row| (0..NUM_DIRECTIONS).filter(|&d| row[d]).collect())
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let frames = self.frames();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(frames as u32).to_le_bytes());
        out.extend_from_slice(&(NUM_DIRECTIONS as u16).to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&(self.stft.win_ms as f32).to_le_bytes());
        out.extend_from_slice(&(self.stft.hop_ms as f32).to_le_bytes());
        out.extend_from_slice(&self.stft.sample_rate.to_le_bytes());
        let bits = self.loudspeakers.iter().chain(&self.talker).flatten();
        let mut byte = 0u8;
        let mut k = 0;
        for &b in bits {
            byte |= (b as u8) << (k % 8);
            k += 1;
            if k % 8 == 0 {
                out.push(byte);
                byte = 0;
            }
        }
        if k % 8 != 0 {
            out.push(byte);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("label sidecar: {m}"));
        if bytes.len() < 24 || &bytes[..4] != MAGIC {
            return Err(bad("missing header"));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u16_at = |i: usize| u16::from_le_bytes(bytes[i..i + 2].try_into().unwrap());
        let f32_at = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let frames = u32_at(4) as usize;
        if u16_at(8) as usize != NUM_DIRECTIONS || u16_at(10) != 2 {
            return Err(bad("unexpected shape"));
        }
        let stft = StftConfig {
            win_ms: f32_at(12) as f64,
            hop_ms: f32_at(16) as f64,
            sample_rate: u32_at(20),
        };
        let nbits = frames * NUM_DIRECTIONS * 2;
        let body = &bytes[24..];
        if body.len() != nbits.div_ceil(8) {
            return Err(bad("truncated body"));
        }
        let bit = |k: usize| body[k / 8] >> (k % 8) & 1 == 1;
        let row = |r: usize| -> [bool; NUM_DIRECTIONS] {
            std::array::from_fn(|d| bit(r * NUM_DIRECTIONS + d))
        };
        Ok(Self {
            stft,
            loudspeakers: (0..frames).map(row).collect(),
            talker: (frames..2 * frames).map(row).collect(),
        })
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let count = |b: Branch| self.rows(b).iter().filter(|r| r.iter().any(|&x| x)).count();
        let dirs = |b: Branch| {
            let mut seen = [false; NUM_DIRECTIONS];
            for row in self.rows(b) {
                for d in 0..NUM_DIRECTIONS {
                    seen[d] |= row[d];
                }
            }
            (0..NUM_DIRECTIONS).filter(|&d| seen[d]).collect::<Vec<_>>()
        };
        serde_json::json!({
            "format": LABELS_FORMAT,
            "frames": self.frames(),
            "directions": NUM_DIRECTIONS,
            "stft": self.stft,
            "loudspeaker_active_frames": count(Branch::Loudspeakers),
            "talker_active_frames": count(Branch::Talker),
            "loudspeaker_directions": dirs(Branch::Loudspeakers),
            "talker_directions": dirs(Branch::Talker),
        })
    }
}

/// Builds label tracks from the dry per-source waves. A frame belongs to
/// the talker segment in effect at the frame's center.
pub fn make_labels(
    scn: &Scenario,
    sources: &SourceWaves,
    stft: &StftConfig,
    act: &ActivityConfig,
) -> Result<DoaLabelTrack> {
    if sources.loudspeakers.len() != scn.loudspeakers.len() {
        return Err(Error::domain(format!(
            "{} loudspeaker waves for {} loudspeakers",
            sources.loudspeakers.len(),
            scn.loudspeakers.len()
        )));
    }
    let n = sources.talker.len();
    if sources.loudspeakers.iter().any(|w| w.len() != n) {
        return Err(Error::domain("source waves differ in length"));
    }
    let frames = stft.num_frames(n);
    let talker_active = frame_activity(&sources.talker, stft, act)?;
    let mut loudspeakers = vec![[false; NUM_DIRECTIONS]; frames];
    for (ls, wave) in scn.loudspeakers.iter().zip(&sources.loudspeakers) {
        let d = direction_to_grid_index(ls.direction_deg)?;
        for (row, on) in loudspeakers.iter_mut().zip(frame_activity(wave, stft, act)?) {
            row[d] |= on;
        }
    }
    let mut talker = vec![[false; NUM_DIRECTIONS]; frames];
    for (t, row) in talker.iter_mut().enumerate() {
        if talker_active[t] {
            let center = t * stft.hop_len() + stft.win_len() / 2;
            let place = scn.talker_at(center as f64 / stft.sample_rate as f64);
            row[direction_to_grid_index(place.direction_deg)?] = true;
        }
    }
    Ok(DoaLabelTrack {
        stft: *stft,
        loudspeakers,
        talker,
    })
}

/// `p(present)` per direction from `T × 72` logits (2-way softmax).
pub fn presence_probs(logits: &[f32]) -> Vec<f64> {
    logits
        .chunks_exact(2)
        .map(|c| 1.0 / (1.0 + (c[1] as f64 - c[0] as f64).exp()))
        .collect()
}

/// Per-frame direction sets: directions with `p(present) > threshold`,
/// keeping at most `max_sources` of them by probability (ties to the lower
/// index).
pub fn decode_predictions(logits: &[f32], max_sources: usize, threshold: f64) -> Vec<Vec<usize>> {
    presence_probs(logits)
        .chunks(NUM_DIRECTIONS)
        .map(|p| decode_frame(p, max_sources, threshold))
        .collect()
}

pub fn decode_frame(p: &[f64], max_sources: usize, threshold: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).filter(|&d| p[d] > threshold).collect();
    // Stable sort keeps lower indices first among equal probabilities.
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    idx.truncate(max_sources);
    idx.sort_unstable();
    idx
}

/// Clean logits for a label track: `+-gain` on the correct class.
pub fn encode_logits(track: &DoaLabelTrack, branch: Branch, gain: f32) -> Vec<f32> {
    track
        .one_hot::<u8>(branch)
        .into_iter()
        .map(|v| if v == 1 { gain } else { -gain })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_scenario, ScenarioPolicy, SourceKind, SourcePlacement, TalkPattern};
    use crate::surrogate::white_noise;

    fn stft() -> StftConfig {
        StftConfig::default()
    }

    fn scenario(pattern: TalkPattern) -> Scenario {
        let mut s = sample_scenario(ScenarioPolicy::Matched, 11);
        s.talk_pattern = pattern;
        let c = s.array.center;
        s.loudspeakers = vec![
            SourcePlacement::around(SourceKind::Loudspeaker, &c, 30.0, 1.2),
            SourcePlacement::around(SourceKind::Loudspeaker, &c, 120.0, 1.3),
        ];
        s
    }

    #[test]
    fn double_talk_rows() {
        let scn = scenario(TalkPattern::DoubleTalk);
        let x = white_noise(8000, 1);
        let src = SourceWaves {
            loudspeakers: vec![x.clone(), x],
            talker: white_noise(8000, 2),
        };
        let tr = make_labels(&scn, &src, &stft(), &ActivityConfig::default()).unwrap();
        let talker_dir = direction_to_grid_index(scn.talker[0].placement.direction_deg).unwrap();
        for t in 0..tr.frames() {
            assert_eq!(tr.direction_sets(Branch::Loudspeakers)[t], vec![3, 12]);
            assert_eq!(tr.direction_sets(Branch::Talker)[t], vec![talker_dir]);
        }
        let hot: Vec<u8> = tr.one_hot(Branch::Talker);
        for pair in hot.chunks(2) {
            assert_eq!(pair[0] + pair[1], 1);
        }
    }

    #[test]
    fn silent_gap_and_far_end_single_talk() {
        let scn = scenario(TalkPattern::FarEndSingleTalk);
        let mut x = white_noise(8000, 1);
        // 100 ms of silence from 0.2 s.
        x[3200..4800].iter_mut().for_each(|v| *v = 0.0);
        let src = SourceWaves {
            loudspeakers: vec![x.clone(), x],
            talker: vec![0.0; 8000],
        };
        let tr = make_labels(&scn, &src, &stft(), &ActivityConfig::default()).unwrap();
        assert!(tr.talker.iter().all(|r| r.iter().all(|&v| !v)));
        // Frames fully inside the gap start at 3200 and end by 4800.
        for t in 20..=28 {
            assert!(tr.loudspeakers[t].iter().all(|&v| !v), "frame {t}");
        }
        assert!(tr.loudspeakers[19][3]);
    }

    #[test]
    fn labels_are_gain_invariant() {
        let scn = scenario(TalkPattern::DoubleTalk);
        let cfg = crate::surrogate::SurrogateConfig::default();
        let mk = |a: f64| SourceWaves {
            loudspeakers: vec![crate::surrogate::speech_surrogate(9000, 4, &cfg); 2]
                .into_iter()
                .map(|w| w.into_iter().map(|v| v * a).collect())
                .collect(),
            talker: crate::surrogate::speech_surrogate(9000, 5, &cfg)
                .into_iter()
                .map(|v| v * a)
                .collect(),
        };
        let base = make_labels(&scn, &mk(1.0), &stft(), &ActivityConfig::default()).unwrap();
        for a in [0.5, 2.0] {
            assert_eq!(make_labels(&scn, &mk(a), &stft(), &ActivityConfig::default()).unwrap(), base);
        }
    }

    #[test]
    fn moving_talker_switches_at_three_seconds() {
        let scn = sample_scenario(ScenarioPolicy::TalkerMoves, 5);
        let n = 16000 * 6;
        let src = SourceWaves {
            loudspeakers: vec![vec![0.0; n]; 2],
            talker: white_noise(n, 3),
        };
        let tr = make_labels(&scn, &src, &stft(), &ActivityConfig::default()).unwrap();
        let a = direction_to_grid_index(scn.talker[0].placement.direction_deg).unwrap();
        let b = direction_to_grid_index(scn.talker[1].placement.direction_deg).unwrap();
        let sets = tr.direction_sets(Branch::Talker);
        assert_eq!(sets[298], vec![a]);
        assert_eq!(sets[299], vec![b]);
    }

    #[test]
    fn short_wave_rejected() {
        let scn = scenario(TalkPattern::DoubleTalk);
        let src = SourceWaves {
            loudspeakers: vec![vec![0.1; 100]; 2],
            talker: vec![0.1; 100],
        };
        assert!(make_labels(&scn, &src, &stft(), &ActivityConfig::default()).is_err());
    }

    #[test]
    fn decode_rules() {
        let mut logits = vec![-5.0f32; LABEL_WIDTH];
        for d in 0..NUM_DIRECTIONS {
            logits[2 * d + 1] = 5.0;
        }
        logits[10] = 5.0;
        logits[11] = -5.0;
        assert_eq!(decode_predictions(&logits, 1, 0.5), vec![vec![5]]);

        let mut p = vec![0.1; NUM_DIRECTIONS];
        p[4] = 0.7;
        p[9] = 0.9;
        p[20] = 0.8;
        assert_eq!(decode_frame(&p, 2, 0.5), vec![9, 20]);
        p[4] = 0.9;
        assert_eq!(decode_frame(&p, 2, 0.5), vec![4, 9]);
        assert!(decode_frame(&[0.2; NUM_DIRECTIONS], 2, 0.5).is_empty());
    }

    #[test]
    fn decode_inverts_encode_and_sidecar_round_trips() {
        let scn = scenario(TalkPattern::DoubleTalk);
        let mut x = white_noise(6000, 1);
        x[1000..3000].iter_mut().for_each(|v| *v = 0.0);
        let src = SourceWaves {
            loudspeakers: vec![x.clone(), x],
            talker: white_noise(6000, 9),
        };
        let tr = make_labels(&scn, &src, &stft(), &ActivityConfig::default()).unwrap();
        for b in [Branch::Loudspeakers, Branch::Talker] {
            let dec = decode_predictions(&encode_logits(&tr, b, 8.0), b.max_sources(), 0.5);
            assert_eq!(dec, tr.direction_sets(b));
        }
        let back = DoaLabelTrack::from_bytes(&tr.to_bytes()).unwrap();
        assert_eq!(back, tr);
        assert!(DoaLabelTrack::from_bytes(&tr.to_bytes()[..30]).is_err());
        assert_eq!(tr.summary_json()["format"], LABELS_FORMAT);
    }
}
