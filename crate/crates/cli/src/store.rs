//! Dataset directories: one sub-directory per scenario holding the
//! manifest, the rendered waves, the label sidecar and the source signals
//! needed to rebuild network inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use echolab::acoustics::{MultichannelWave, SampleFormat, WaveRole};
use echolab::dataset::{build_example, surrogate_sources, Example};
use echolab::dsp::SAMPLE_RATE;
use echolab::scenario::{Sampler, Scenario};
use echolab::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const DATASET_FORMAT: &str = "echolab-dataset/1";
pub const MANIFEST: &str = "manifest.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const LABELS_FILE: &str = "labels.bin";
pub const LABELS_SUMMARY: &str = "labels.json";
pub const FAR_SOURCE: &str = "src_far.wav";
pub const NEAR_SOURCE: &str = "src_near.wav";

/// Rendered roles written per scenario.
const ROLES: [WaveRole; 5] = [
    WaveRole::Mixture,
    WaveRole::FarEnd,
    WaveRole::Echo,
    WaveRole::NearEnd,
    WaveRole::NearEndDirect,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// Scenario seed of example `i`; splits never share seeds.
    pub fn seed(self, data_seed: u64, i: usize) -> u64 {
        let k = Split::ALL.iter().position(|&s| s == self).expect("listed") as u64;
        data_seed.wrapping_mul(10_000_000).wrapping_add(k * 1_000_000 + i as u64)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown split `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub id: String,
    pub seed: u64,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub source: String,
    pub splits: BTreeMap<Split, Vec<ScenarioEntry>>,
    pub config: ExperimentConfig,
}

impl DatasetManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format != DATASET_FORMAT {
            return Err(Error::Format(format!("expected {DATASET_FORMAT}, found {}", m.format)));
        }
        Ok(m)
    }

    pub fn entries(&self, split: Split) -> &[ScenarioEntry] {
        self.splits.get(&split).map_or(&[], |v| v.as_slice())
    }

    pub fn find(&self, id: &str) -> Option<&ScenarioEntry> {
        self.splits.values().flatten().find(|e| e.id == id)
    }

    pub fn test_set_name(&self) -> &'static str {
        self.config.data.policy.as_str()
    }
}

/// Far-end and near-end speech for each scenario.
pub enum Speech {
    Surrogate,
    Files { dir: PathBuf, waves: Vec<Vec<f64>> },
}

impl Speech {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        if cfg.data.use_surrogate {
            return Ok(Speech::Surrogate);
        }
        let dir = cfg.data.speech_dir.as_ref().ok_or_else(|| {
            Error::Config("no speech directory given; pass --speech-dir or --surrogate".into())
        })?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::Config(format!("cannot list {}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        if files.len() < 2 {
            return Err(Error::Config(format!("{} holds fewer than two WAV files", dir.display())));
        }
        let waves = files
            .iter()
            .map(|p| {
                let w = MultichannelWave::read_wav(p, WaveRole::NearEnd)?;
                if w.sample_rate != SAMPLE_RATE {
                    return Err(Error::Config(format!("{} is not {SAMPLE_RATE} Hz", p.display())));
                }
                Ok(w.channels.into_iter().next().unwrap_or_default())
            })
            .collect::<Result<_>>()?;
        Ok(Speech::Files { dir: dir.clone(), waves })
    }

    pub fn describe(&self) -> String {
        match self {
            Speech::Surrogate => "surrogate".into(),
            Speech::Files { dir, waves } => format!("{} ({} files)", dir.display(), waves.len()),
        }
    }

    /// Sources for a scenario. User speech is picked by seed and looped
    /// or cut to the scenario length.
    pub fn sources(&self, scn: &Scenario, cfg: &ExperimentConfig) -> (Vec<f64>, Vec<f64>) {
        match self {
            Speech::Surrogate => surrogate_sources(scn, &cfg.data.build.surrogate),
            Speech::Files { waves, .. } => {
                let n = (scn.duration_s * SAMPLE_RATE as f64).round() as usize;
                let k = waves.len() as u64;
                let a = (scn.rng_seed % k) as usize;
                let b = ((scn.rng_seed / k + 1 + a as u64) % k) as usize;
                let b = if b == a { (a + 1) % waves.len() } else { b };
                (fit_length(&waves[a], n), fit_length(&waves[b], n))
            }
        }
    }
}

fn fit_length(x: &[f64], n: usize) -> Vec<f64> {
    if x.is_empty() {
        return vec![0.0; n];
    }
    x.iter().copied().cycle().take(n).collect()
}

/// Renders and writes one scenario into `dir`.
pub fn write_scenario(dir: &Path, id: &str, scn: &Scenario, speech: &Speech, cfg: &ExperimentConfig) -> Result<Example> {
    std::fs::create_dir_all(dir)?;
    let (far, near) = speech.sources(scn, cfg);
    let ex = build_example(id, scn, &far, &near, &cfg.data.build)?;
    std::fs::write(dir.join(SCENARIO_FILE), scn.to_json()?)?;
    for role in ROLES {
        ex.mixture
            .wave(role)
            .write_wav(&dir.join(format!("{}.wav", role.stem())), cfg.data.format)?;
    }
    MultichannelWave::mono(WaveRole::FarEnd, far).write_wav(&dir.join(FAR_SOURCE), SampleFormat::Float32)?;
    MultichannelWave::mono(WaveRole::NearEnd, near).write_wav(&dir.join(NEAR_SOURCE), SampleFormat::Float32)?;
    std::fs::write(dir.join(LABELS_FILE), ex.labels.to_bytes())?;
    std::fs::write(dir.join(LABELS_SUMMARY), serde_json::to_vec_pretty(&ex.labels.summary_json())?)?;
    Ok(ex)
}

/// Draws, renders and writes every split of the configured dataset.
pub fn synth(cfg: &ExperimentConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let speech = Speech::from_config(cfg)?;
    let sampler = Sampler::new(cfg.data.build.sampler.clone())?;
    let counts = cfg.data.counts;
    let mut splits = BTreeMap::new();
    for (split, n) in [(Split::Train, counts.train), (Split::Val, counts.val), (Split::Test, counts.test)] {
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            let seed = split.seed(cfg.data.seed, i);
            let scn = sampler.sample(cfg.data.policy, seed)?;
            let id = format!("{}-{split}-{i:06}", cfg.data.policy);
            let rel = format!("{split}/{id}");
            write_scenario(&out.join(&rel), &id, &scn, &speech, cfg)?;
            entries.push(ScenarioEntry { id, seed, path: rel });
        }
        splits.insert(split, entries);
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        source: speech.describe(),
        splits,
        config: cfg.clone(),
    };
    std::fs::write(out.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Rebuilds the network view of a stored scenario from its manifest and
/// source signals.
pub fn load_scenario(dir: &Path, id: &str, cfg: &ExperimentConfig) -> Result<Example> {
    let scn = Scenario::from_json(&std::fs::read_to_string(dir.join(SCENARIO_FILE))?)?;
    let mono = |name: &str| -> Result<Vec<f64>> {
        let w = MultichannelWave::read_wav(&dir.join(name), WaveRole::FarEnd)?;
        Ok(w.channels.into_iter().next().unwrap_or_default())
    };
    build_example(id, &scn, &mono(FAR_SOURCE)?, &mono(NEAR_SOURCE)?, &cfg.data.build)
}

pub fn load_split(dir: &Path, manifest: &DatasetManifest, split: Split) -> Result<Vec<Example>> {
    manifest
        .entries(split)
        .iter()
        .map(|e| load_scenario(&dir.join(&e.path), &e.id, &manifest.config))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub id: String,
    pub files: Vec<(String, bool)>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.files.iter().all(|(_, same)| *same)
    }
}

/// Re-renders one stored scenario from the manifest's config and seed and
/// compares every file byte for byte.
pub fn verify(dir: &Path, id: Option<&str>) -> Result<VerifyReport> {
    let manifest = DatasetManifest::read(dir)?;
    let entry = match id {
        Some(id) => manifest
            .find(id)
            .ok_or_else(|| Error::Config(format!("no scenario `{id}` in {}", dir.display())))?,
        None => manifest
            .splits
            .values()
            .flatten()
            .next()
            .ok_or_else(|| Error::Config("dataset is empty".into()))?,
    };
    let cfg = &manifest.config;
    let scn = Sampler::new(cfg.data.build.sampler.clone())?.sample(cfg.data.policy, entry.seed)?;
    let speech = Speech::from_config(cfg)?;
    let tmp = tempfile::tempdir()?;
    write_scenario(tmp.path(), &entry.id, &scn, &speech, cfg)?;
    let stored = dir.join(&entry.path);
    let mut names: Vec<String> = std::fs::read_dir(tmp.path())?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    let files = names
        .into_iter()
        .map(|name| {
            let fresh = std::fs::read(tmp.path().join(&name))?;
            let same = std::fs::read(stored.join(&name)).is_ok_and(|old| old == fresh);
            Ok((name, same))
        })
        .collect::<Result<_>>()?;
    Ok(VerifyReport { id: entry.id.clone(), files })
}
