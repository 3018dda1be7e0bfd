//! Acoustic scene sampling: shoebox room, circular array at the room center,
//! loudspeakers and a near-end talker placed on an angular grid around it.
//!
//! Angles follow the usual math convention: 0° points along +x and angles
//! grow counter-clockwise in the horizontal plane. Microphone 0 (the
//! reference) sits at 0° on the array circle.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCENARIO_SCHEMA: &str = "echolab-scenario/1";

/// Number of hypothesized source directions.
pub const NUM_DIRECTIONS: usize = 36;
pub const GRID_STEP_DEG: f64 = 10.0;

/// The moving talker changes position at this time.
pub const TRAJECTORY_SWITCH_S: f64 = 3.0;

pub type Vec3 = [f64; 3];

pub(crate) fn distance(a: &Vec3, b: &Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub t60_s: f64,
}

impl RoomSpec {
    pub fn dims(&self) -> Vec3 {
        [self.length_m, self.width_m, self.height_m]
    }

    pub fn center(&self) -> Vec3 {
        [self.length_m / 2.0, self.width_m / 2.0, self.height_m / 2.0]
    }

    /// True when `p` lies strictly inside the room.
    pub fn contains(&self, p: &Vec3) -> bool {
        p.iter().zip(self.dims()).all(|(&x, d)| x > 0.0 && x < d)
    }

    /// Distance from `p` to the closest of the six boundary planes.
    pub fn wall_clearance(&self, p: &Vec3) -> f64 {
        p.iter()
            .zip(self.dims())
            .map(|(&x, d)| x.min(d - x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.length_m * self.width_m * self.height_m
    }

    pub fn surface(&self) -> f64 {
        let (l, w, h) = (self.length_m, self.width_m, self.height_m);
        2.0 * (l * w + l * h + w * h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub num_mics: usize,
    pub diameter_m: f64,
    pub center: Vec3,
    pub mic_positions: Vec<Vec3>,
}

impl ArraySpec {
    /// Uniform circular array in the horizontal plane; mic 0 at 0°.
    pub fn circular(num_mics: usize, diameter_m: f64, center: Vec3) -> Self {
        let radius = diameter_m / 2.0;
        let mic_positions = (0..num_mics)
            .map(|q| {
                let phi = 2.0 * std::f64::consts::PI * q as f64 / num_mics as f64;
                [
                    center[0] + radius * phi.cos(),
                    center[1] + radius * phi.sin(),
                    center[2],
                ]
            })
            .collect();
        Self {
            num_mics,
            diameter_m,
            center,
            mic_positions,
        }
    }

    /// Offsets of every microphone relative to the array center.
    pub fn offsets(&self) -> Vec<Vec3> {
        self.mic_positions
            .iter()
            .map(|p| [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]])
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Loudspeaker,
    Talker,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourcePlacement {
    pub kind: SourceKind,
    pub direction_deg: f64,
    pub distance_m: f64,
    pub position: Vec3,
}

impl SourcePlacement {
    /// Places a source in the array plane at the given direction and range.
    pub fn around(kind: SourceKind, center: &Vec3, direction_deg: f64, distance_m: f64) -> Self {
        let phi = direction_deg.to_radians();
        Self {
            kind,
            direction_deg,
            distance_m,
            position: [
                center[0] + distance_m * phi.cos(),
                center[1] + distance_m * phi.sin(),
                center[2],
            ],
        }
    }
}

/// One static piece of the talker path, valid from `start_s` until the next
/// segment starts (or the end of the utterance).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub start_s: f64,
    pub placement: SourcePlacement,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TalkPattern {
    #[serde(rename = "DT")]
    DoubleTalk,
    #[serde(rename = "ST_NE")]
    NearEndSingleTalk,
    #[serde(rename = "ST_FE")]
    FarEndSingleTalk,
}

impl TalkPattern {
    pub const ALL: [TalkPattern; 3] = [
        TalkPattern::DoubleTalk,
        TalkPattern::NearEndSingleTalk,
        TalkPattern::FarEndSingleTalk,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TalkPattern::DoubleTalk => "DT",
            TalkPattern::NearEndSingleTalk => "ST_NE",
            TalkPattern::FarEndSingleTalk => "ST_FE",
        }
    }

    pub fn has_near_end(self) -> bool {
        self != TalkPattern::FarEndSingleTalk
    }

    pub fn has_echo(self) -> bool {
        self != TalkPattern::NearEndSingleTalk
    }
}

impl fmt::Display for TalkPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TalkPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DT" => Ok(TalkPattern::DoubleTalk),
            "ST_NE" => Ok(TalkPattern::NearEndSingleTalk),
            "ST_FE" => Ok(TalkPattern::FarEndSingleTalk),
            other => Err(Error::Config(format!("unknown talk pattern `{other}`"))),
        }
    }
}

/// Which test-set regime a scenario is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioPolicy {
    /// 10° grid, all directions distinct.
    Matched,
    /// Matched geometry, but the talker jumps to a new position after 3 s.
    TalkerMoves,
    /// 1° grid, all directions distinct.
    Grid1Deg,
    /// Talker shares its direction with one of the loudspeakers.
    CoDirectional,
}

impl ScenarioPolicy {
    pub const ALL: [ScenarioPolicy; 4] = [
        ScenarioPolicy::Matched,
        ScenarioPolicy::TalkerMoves,
        ScenarioPolicy::Grid1Deg,
        ScenarioPolicy::CoDirectional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioPolicy::Matched => "matched",
            ScenarioPolicy::TalkerMoves => "talker_moves",
            ScenarioPolicy::Grid1Deg => "grid_1deg",
            ScenarioPolicy::CoDirectional => "co_directional",
        }
    }

    fn grid_step_deg(self) -> f64 {
        match self {
            ScenarioPolicy::Grid1Deg => 1.0,
            _ => GRID_STEP_DEG,
        }
    }
}

impl fmt::Display for ScenarioPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioPolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario policy `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: String,
    pub policy: ScenarioPolicy,
    pub room: RoomSpec,
    pub array: ArraySpec,
    pub loudspeakers: Vec<SourcePlacement>,
    pub talker: Vec<TrajectorySegment>,
    pub ser_db: i32,
    pub talk_pattern: TalkPattern,
    pub duration_s: f64,
    pub rng_seed: u64,
}

impl Scenario {
    /// Talker placement in effect at time `t_s`.
    pub fn talker_at(&self, t_s: f64) -> &SourcePlacement {
        let mut current = &self.talker[0].placement;
        for seg in &self.talker {
            if seg.start_s <= t_s {
                current = &seg.placement;
            }
        }
        current
    }

    pub fn talker_moves(&self) -> bool {
        self.talker.len() > 1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scn: Scenario = serde_json::from_str(text)?;
        if scn.schema != SCENARIO_SCHEMA {
            return Err(Error::Format(format!(
                "expected schema {SCENARIO_SCHEMA}, found {}",
                scn.schema
            )));
        }
        Ok(scn)
    }
}

/// Bounds and counts used when drawing scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub length_m: (f64, f64),
    pub width_m: (f64, f64),
    pub height_m: (f64, f64),
    pub t60_s: (f64, f64),
    pub num_mics: usize,
    pub diameter_m: f64,
    pub num_loudspeakers: usize,
    pub min_distance_m: f64,
    /// Keep-out distance subtracted from the array-to-wall clearance to give
    /// the maximum source distance.
    pub wall_margin_m: f64,
    pub ser_db: (i32, i32),
    pub duration_s: f64,
    /// `None` draws DT / ST_NE / ST_FE uniformly.
    pub pattern: Option<TalkPattern>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            length_m: (4.0, 8.0),
            width_m: (3.0, 7.0),
            height_m: (3.0, 5.0),
            t60_s: (0.1, 0.8),
            num_mics: 6,
            diameter_m: 0.07,
            num_loudspeakers: 2,
            min_distance_m: 1.0,
            wall_margin_m: 0.3,
            ser_db: (-10, 10),
            duration_s: 6.0,
            pattern: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [self.length_m, self.width_m, self.height_m, self.t60_s];
        if ranges.iter().any(|&(lo, hi)| !(lo > 0.0 && lo <= hi)) {
            return Err(Error::Config("sampler ranges must be positive and ordered".into()));
        }
        if self.num_mics < 2 {
            return Err(Error::Config("need at least two microphones".into()));
        }
        if self.num_loudspeakers + 1 > NUM_DIRECTIONS {
            return Err(Error::Config("too many sources for the direction grid".into()));
        }
        let shortest = self.length_m.0.min(self.width_m.0).min(self.height_m.0);
        if shortest / 2.0 - self.wall_margin_m < self.min_distance_m {
            return Err(Error::Config(
                "smallest room cannot fit sources at the minimum distance".into(),
            ));
        }
        if self.ser_db.0 > self.ser_db.1 || self.duration_s <= 0.0 {
            return Err(Error::Config("invalid SER range or duration".into()));
        }
        Ok(())
    }
}

/// Nearest grid index on the circular 10° grid; ties go to the lower index.
pub fn direction_to_grid_index(direction_deg: f64) -> Result<usize> {
    if !(0.0..360.0).contains(&direction_deg) {
        return Err(Error::domain(format!(
            "direction {direction_deg}° outside [0, 360)"
        )));
    }
    let k = (direction_deg / GRID_STEP_DEG - 0.5).ceil() as usize;
    // 355° is equidistant from index 35 and index 0 (360°); lower index wins.
    if k >= NUM_DIRECTIONS || direction_deg - 350.0 == 5.0 {
        return Ok(0);
    }
    Ok(k)
}

fn uniform(rng: &mut Pcg64, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws `count` distinct directions on a grid with `step_deg` spacing, not
/// colliding with `taken`.
fn distinct_directions(rng: &mut Pcg64, step_deg: f64, count: usize, taken: &[f64]) -> Vec<f64> {
    let slots = (360.0 / step_deg).round() as usize;
    let mut out: Vec<f64> = Vec::with_capacity(count);
    while out.len() < count {
        let d = rng.random_range(0..slots) as f64 * step_deg;
        if !out.contains(&d) && !taken.contains(&d) {
            out.push(d);
        }
    }
    out
}

fn max_distance(room: &RoomSpec, cfg: &SamplerConfig) -> f64 {
    room.wall_clearance(&room.center()) - cfg.wall_margin_m
}

/// Seeded scenario generator.
#[derive(Clone, Debug)]
pub struct Sampler {
    config: SamplerConfig,
}

impl Sampler {
    pub fn new(config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn sample(&self, policy: ScenarioPolicy, seed: u64) -> Result<Scenario> {
        let cfg = &self.config;
        let mut rng = Pcg64::seed_from_u64(seed);
        let room = RoomSpec {
            length_m: uniform(&mut rng, cfg.length_m),
            width_m: uniform(&mut rng, cfg.width_m),
            height_m: uniform(&mut rng, cfg.height_m),
            t60_s: uniform(&mut rng, cfg.t60_s),
        };
        let center = room.center();
        let array = ArraySpec::circular(cfg.num_mics, cfg.diameter_m, center);
        let r2 = max_distance(&room, cfg);
        let r1 = cfg.min_distance_m;
        let p = cfg.num_loudspeakers;

        let (speaker_dirs, talker_dir) = match policy {
            ScenarioPolicy::CoDirectional => {
                let dirs = distinct_directions(&mut rng, policy.grid_step_deg(), p, &[]);
                let shared = if dirs.is_empty() {
                    distinct_directions(&mut rng, policy.grid_step_deg(), 1, &[])[0]
                } else {
                    dirs[rng.random_range(0..dirs.len())]
                };
                (dirs, shared)
            }
            _ => {
                let mut dirs = distinct_directions(&mut rng, policy.grid_step_deg(), p + 1, &[]);
                let talker = dirs.pop().expect("p + 1 >= 1 directions");
                (dirs, talker)
            }
        };

        let loudspeakers: Vec<SourcePlacement> = speaker_dirs
            .iter()
            .map(|&d| {
                let dist = uniform(&mut rng, (r1, r2));
                SourcePlacement::around(SourceKind::Loudspeaker, &center, d, dist)
            })
            .collect();

        let talker_dist = if policy == ScenarioPolicy::CoDirectional {
            // Keep the talker clear of the loudspeaker sharing its direction.
            let blocker = loudspeakers
                .iter()
                .find(|s| s.direction_deg == talker_dir)
                .map(|s| s.distance_m);
            let mut dist = uniform(&mut rng, (r1, r2));
            if let Some(b) = blocker {
                let min_gap = 0.1_f64.min((r2 - r1) / 4.0);
                let mut attempts = 0;
                while (dist - b).abs() < min_gap && attempts < 64 {
                    dist = uniform(&mut rng, (r1, r2));
                    attempts += 1;
                }
                if (dist - b).abs() < min_gap {
                    dist = if b - r1 > r2 - b { r1 } else { r2 };
                }
            }
            dist
        } else {
            uniform(&mut rng, (r1, r2))
        };
        let first = SourcePlacement::around(SourceKind::Talker, &center, talker_dir, talker_dist);
        let mut talker = vec![TrajectorySegment {
            start_s: 0.0,
            placement: first,
        }];

        if policy == ScenarioPolicy::TalkerMoves {
            if cfg.duration_s <= TRAJECTORY_SWITCH_S {
                return Err(Error::TrajectoryTooShort {
                    total_s: cfg.duration_s,
                    boundary_s: TRAJECTORY_SWITCH_S,
                });
            }
            let mut taken = speaker_dirs.clone();
            taken.push(talker_dir);
            let second_dir = distinct_directions(&mut rng, GRID_STEP_DEG, 1, &taken)[0];
            let dist = uniform(&mut rng, (r1, r2));
            talker.push(TrajectorySegment {
                start_s: TRAJECTORY_SWITCH_S,
                placement: SourcePlacement::around(SourceKind::Talker, &center, second_dir, dist),
            });
        }

        let ser_db = rng.random_range(cfg.ser_db.0..=cfg.ser_db.1);
        let talk_pattern = match cfg.pattern {
            Some(p) => p,
            None => TalkPattern::ALL[rng.random_range(0..3)],
        };

        Ok(Scenario {
            schema: SCENARIO_SCHEMA.to_string(),
            policy,
            room,
            array,
            loudspeakers,
            talker,
            ser_db,
            talk_pattern,
            duration_s: cfg.duration_s,
            rng_seed: seed,
        })
    }
}

/// Draws a scenario under the default room and array bounds.
pub fn sample_scenario(policy: ScenarioPolicy, seed: u64) -> Scenario {
    Sampler::new(SamplerConfig::default())
        .and_then(|s| s.sample(policy, seed))
        .expect("default sampler bounds are always satisfiable")
}

/// Two-segment talker path for the moving-talker test set: one position for
/// the first 3 s, a different one afterwards. `occupied` lists directions
/// (degrees) the second position must avoid.
pub fn talker_trajectory(
    room: &RoomSpec,
    array: &ArraySpec,
    occupied: &[f64],
    total_s: f64,
    seed: u64,
) -> Result<Vec<TrajectorySegment>> {
    if total_s <= TRAJECTORY_SWITCH_S {
        return Err(Error::TrajectoryTooShort {
            total_s,
            boundary_s: TRAJECTORY_SWITCH_S,
        });
    }
    let cfg = SamplerConfig::default();
    let mut rng = Pcg64::seed_from_u64(seed);
    let r2 = room.wall_clearance(&array.center) - cfg.wall_margin_m;
    let r1 = cfg.min_distance_m.min(r2);
    let dirs = distinct_directions(&mut rng, GRID_STEP_DEG, 2, occupied);
    Ok(dirs
        .iter()
        .zip([0.0, TRAJECTORY_SWITCH_S])
        .map(|(&d, start_s)| TrajectorySegment {
            start_s,
            placement: SourcePlacement::around(
                SourceKind::Talker,
                &array.center,
                d,
                uniform(&mut rng, (r1, r2)),
            ),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_dirs(s: &Scenario) -> Vec<f64> {
        let mut d: Vec<f64> = s.loudspeakers.iter().map(|l| l.direction_deg).collect();
        d.extend(s.talker.iter().map(|t| t.placement.direction_deg));
        d
    }

    #[test]
    fn matched_directions_on_grid_and_distinct() {
        let s = sample_scenario(ScenarioPolicy::Matched, 7);
        let dirs = all_dirs(&s);
        assert_eq!(dirs.len(), 3);
        for (i, a) in dirs.iter().enumerate() {
            assert_eq!(a % 10.0, 0.0);
            for b in &dirs[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn one_degree_grid() {
        let s = sample_scenario(ScenarioPolicy::Grid1Deg, 1);
        let dirs = all_dirs(&s);
        for (i, a) in dirs.iter().enumerate() {
            assert_eq!(a.fract(), 0.0);
            for b in &dirs[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn co_directional_talker_shares_a_loudspeaker_direction() {
        let s = sample_scenario(ScenarioPolicy::CoDirectional, 3);
        let t = s.talker[0].placement;
        let twin = s
            .loudspeakers
            .iter()
            .find(|l| l.direction_deg == t.direction_deg)
            .expect("shared direction");
        assert!(distance(&twin.position, &t.position) > 1e-3);
    }

    #[test]
    fn trajectory_has_two_segments() {
        let s = sample_scenario(ScenarioPolicy::TalkerMoves, 11);
        assert_eq!(s.talker.len(), 2);
        assert_eq!(s.talker[0].start_s, 0.0);
        assert_eq!(s.talker[1].start_s, 3.0);
        assert_ne!(s.talker[0].placement.position, s.talker[1].placement.position);
        assert_eq!(s.talker_at(2.99).direction_deg, s.talker[0].placement.direction_deg);
        assert_eq!(s.talker_at(3.0).direction_deg, s.talker[1].placement.direction_deg);
    }

    #[test]
    fn standalone_trajectory() {
        let s = sample_scenario(ScenarioPolicy::Matched, 2);
        let a = talker_trajectory(&s.room, &s.array, &[0.0, 10.0], 6.0, 5).unwrap();
        let b = talker_trajectory(&s.room, &s.array, &[0.0, 10.0], 6.0, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!((a[0].start_s, a[1].start_s), (0.0, 3.0));
        assert_ne!(a[0].placement.position, a[1].placement.position);
        assert!(matches!(
            talker_trajectory(&s.room, &s.array, &[], 2.0, 5),
            Err(Error::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn short_duration_rejected_for_moving_talker() {
        let cfg = SamplerConfig {
            duration_s: 2.0,
            ..Default::default()
        };
        let sampler = Sampler::new(cfg).unwrap();
        assert!(matches!(
            sampler.sample(ScenarioPolicy::TalkerMoves, 0),
            Err(Error::TrajectoryTooShort { .. })
        ));
        assert!(sampler.sample(ScenarioPolicy::Matched, 0).is_ok());
    }

    #[test]
    fn grid_index_examples() {
        assert_eq!(direction_to_grid_index(0.0).unwrap(), 0);
        assert_eq!(direction_to_grid_index(350.0).unwrap(), 35);
        assert_eq!(direction_to_grid_index(174.0).unwrap(), 17);
        assert_eq!(direction_to_grid_index(5.0).unwrap(), 0);
        assert_eq!(direction_to_grid_index(15.0).unwrap(), 1);
        assert_eq!(direction_to_grid_index(359.0).unwrap(), 0);
        assert!(direction_to_grid_index(360.0).is_err());
        assert!(direction_to_grid_index(-1.0).is_err());
    }

    fn circ_dist(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(360.0);
        d.min(360.0 - d)
    }

    #[test]
    fn grid_index_matches_exhaustive_argmin() {
        for tenth in 0..3600 {
            let d = tenth as f64 / 10.0;
            let mut best = 0;
            for k in 1..NUM_DIRECTIONS {
                if circ_dist(d, 10.0 * k as f64) < circ_dist(d, 10.0 * best as f64) {
                    best = k;
                }
            }
            assert_eq!(direction_to_grid_index(d).unwrap(), best, "direction {d}");
        }
    }

    #[test]
    fn manifest_round_trip() {
        let s = sample_scenario(ScenarioPolicy::TalkerMoves, 9);
        let text = s.to_json().unwrap();
        assert!(text.contains(SCENARIO_SCHEMA));
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
        let bad = text.replace(SCENARIO_SCHEMA, "echolab-scenario/0");
        assert!(Scenario::from_json(&bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn geometry_invariants(seed in any::<u64>(), pi in 0usize..4) {
                let policy = ScenarioPolicy::ALL[pi];
                let s = sample_scenario(policy, seed);
                prop_assert_eq!(&s, &sample_scenario(policy, seed));

                let r = &s.room;
                prop_assert!((4.0..=8.0).contains(&r.length_m));
                prop_assert!((3.0..=7.0).contains(&r.width_m));
                prop_assert!((3.0..=5.0).contains(&r.height_m));
                prop_assert!((0.1..=0.8).contains(&r.t60_s));
                prop_assert!((-10..=10).contains(&s.ser_db));

                let half = s.array.diameter_m / 2.0;
                for m in &s.array.mic_positions {
                    prop_assert!((distance(m, &s.array.center) - half).abs() < 1e-9);
                }

                let placements = s.loudspeakers.iter().chain(s.talker.iter().map(|t| &t.placement));
                for p in placements {
                    prop_assert!(r.contains(&p.position));
                    prop_assert!(distance(&p.position, &s.array.center) >= 1.0 - 1e-12);
                    prop_assert_eq!(p.position[2], s.array.center[2]);
                }

                if policy == ScenarioPolicy::Matched {
                    let mut idx: Vec<usize> = all_dirs(&s)
                        .iter()
                        .map(|&d| direction_to_grid_index(d).unwrap())
                        .collect();
                    idx.sort();
                    idx.dedup();
                    prop_assert_eq!(idx.len(), 3);
                }
            }
        }
    }
}
