use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::SAMPLE_RATE;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveRole {
    Mixture,
    Echo,
    NearEnd,
    NearEndDirect,
    NearEndReverb,
    FarEnd,
    FarEndNl,
    Enhanced,
}

impl WaveRole {
    /// File stem used when writing a rendered scenario to disk.
    pub fn stem(self) -> &'static str {
        match self {
            WaveRole::Mixture => "y",
            WaveRole::Echo => "e",
            WaveRole::NearEnd => "s",
            WaveRole::NearEndDirect => "s_d",
            WaveRole::NearEndReverb => "s_r",
            WaveRole::FarEnd => "x",
            WaveRole::FarEndNl => "x_nl",
            WaveRole::Enhanced => "s_hat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

/// `Q × N` time-domain signal at 16 kHz.
#[derive(Clone, Debug, PartialEq)]
pub struct MultichannelWave {
    pub role: WaveRole,
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl MultichannelWave {
    pub fn new(role: WaveRole, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::domain("wave with zero channels"));
        }
        let n = channels[0].len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::domain("wave channels differ in length"));
        }
        Ok(Self {
            role,
            sample_rate: SAMPLE_RATE,
            channels,
        })
    }

    pub fn mono(role: WaveRole, samples: Vec<f64>) -> Self {
        Self {
            role,
            sample_rate: SAMPLE_RATE,
            channels: vec![samples],
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_refs(&self) -> Vec<&[f64]> {
        self.channels.iter().map(|c| c.as_slice()).collect()
    }

    pub fn write_wav(&self, path: &Path, format: SampleFormat) -> Result<()> {
        let spec = hound::WavSpec {
            channels: self.num_channels() as u16,
            sample_rate: self.sample_rate,
            bits_per_sample: match format {
                SampleFormat::Pcm16 => 16,
                SampleFormat::Float32 => 32,
            },
            sample_format: match format {
                SampleFormat::Pcm16 => hound::SampleFormat::Int,
                SampleFormat::Float32 => hound::SampleFormat::Float,
            },
        };
        let mut w = hound::WavWriter::create(path, spec)?;
        for n in 0..self.len() {
            for ch in &self.channels {
                match format {
                    SampleFormat::Pcm16 => {
                        let v = (ch[n] * 32768.0).round().clamp(-32768.0, 32767.0);
                        w.write_sample(v as i16)?;
                    }
                    SampleFormat::Float32 => w.write_sample(ch[n] as f32)?,
                }
            }
        }
        w.finalize()?;
        Ok(())
    }

    pub fn read_wav(path: &Path, role: WaveRole) -> Result<Self> {
        let mut r = hound::WavReader::open(path)?;
        let spec = r.spec();
        if spec.sample_rate != SAMPLE_RATE {
            return Err(Error::Format(format!(
                "{}: expected {SAMPLE_RATE} Hz, found {} Hz",
                path.display(),
                spec.sample_rate
            )));
        }
        let q = spec.channels as usize;
        let flat: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Float => r
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>()?,
            hound::SampleFormat::Int => {
                let scale = (1_i64 << (spec.bits_per_sample - 1)) as f64;
                r.samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        let n = flat.len() / q;
        let channels = (0..q)
            .map(|c| (0..n).map(|i| flat[i * q + c]).collect())
            .collect();
        Self::new(role, channels)
    }
}
