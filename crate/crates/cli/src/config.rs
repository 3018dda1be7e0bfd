use std::path::{Path, PathBuf};

use echolab::acoustics::SampleFormat;
use echolab::aec::{FusionMode, IscrnConfig};
use echolab::dataset::DatasetConfig;
use echolab::eval::SDR_FILTER_LEN;
use echolab::scenario::ScenarioPolicy;
use echolab::ssdoa::SsDoaConfig;
use echolab::train::TrainConfig;
use echolab::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self { train: 64, val: 8, test: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub policy: ScenarioPolicy,
    pub seed: u64,
    pub counts: SplitCounts,
    /// Directory of 16 kHz WAV files used as far-end and near-end speech.
    pub speech_dir: Option<PathBuf>,
    /// Use the built-in speech surrogate instead of `speech_dir`.
    pub use_surrogate: bool,
    pub format: SampleFormat,
    #[serde(flatten)]
    pub build: DatasetConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            policy: ScenarioPolicy::Matched,
            seed: 0,
            counts: SplitCounts::default(),
            speech_dir: None,
            use_surrogate: false,
            format: SampleFormat::Float32,
            build: DatasetConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub ssdoa: TrainConfig,
    pub aec: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub sdr_filter_len: usize,
    pub doa_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { sdr_filter_len: SDR_FILTER_LEN, doa_threshold: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { data_dir: "data".into(), out_dir: "runs".into() }
    }
}

/// One document describing a whole experiment. Every artifact embeds the
/// resolved copy it was produced with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mode: FusionMode,
    pub data: DataConfig,
    pub ssdoa: SsDoaConfig,
    pub iscrn: IscrnConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
    pub paths: Paths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::Eta,
            data: DataConfig::default(),
            ssdoa: SsDoaConfig::default(),
            iscrn: IscrnConfig::default(),
            train: TrainSection::default(),
            eval: EvalConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML document, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is plain data")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("embedded config: {e}")))
    }

    pub fn num_mics(&self) -> usize {
        self.data.build.sampler.num_mics
    }

    pub fn validate(&self) -> Result<()> {
        self.data.build.stft.validate()?;
        self.data.build.sampler.validate()?;
        self.ssdoa.validate()?;
        self.iscrn.validate()?;
        let bins = self.data.build.stft.bins();
        if self.ssdoa.bins != bins || self.iscrn.bins != bins {
            return Err(Error::Config(format!(
                "STFT gives {bins} bins but SS-DOA expects {} and ISCRN {}",
                self.ssdoa.bins, self.iscrn.bins
            )));
        }
        if self.ssdoa.num_mics != self.num_mics() {
            return Err(Error::Config(format!(
                "array has {} mics but SS-DOA expects {}",
                self.num_mics(),
                self.ssdoa.num_mics
            )));
        }
        if self.eval.sdr_filter_len == 0 {
            return Err(Error::Config("SDR filter length must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_document_fills_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            "mode = \"B\"\n[data]\npolicy = \"talker_moves\"\nuse_surrogate = true\n[data.sampler]\nduration_s = 1.0\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, FusionMode::B);
        assert_eq!(cfg.data.policy, ScenarioPolicy::TalkerMoves);
        assert_eq!(cfg.data.build.sampler.duration_s, 1.0);
        assert_eq!(cfg.data.build.sampler.num_mics, 6);
        assert_eq!(cfg.iscrn, IscrnConfig::default());
    }

    #[test]
    fn bin_mismatch_is_a_config_error() {
        let mut cfg = ExperimentConfig::default();
        cfg.iscrn.bins = 100;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
