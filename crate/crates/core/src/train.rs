//! Epoch loop shared by both training stages, the two objectives, and
//! resumable trainer state.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::aec::{aec_loss, AecModel, DirectionInfo, FusionMode, MvdrConfig};
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::nn::{Adam, Mode, Module, PlateauSchedule, Tensor};
use crate::ssdoa::{doa_loss, SsDoa, SsDoaOutput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Examples per optimizer step; gradients are averaged.
    pub batch_size: usize,
    pub seed: u64,
    pub early_stop: bool,
    pub patience: usize,
    pub stop_patience: usize,
    pub lr_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            batch_size: 1,
            seed: 0,
            early_stop: true,
            patience: 2,
            stop_patience: 10,
            lr_factor: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0) || !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return Err(Error::Config("batch size, learning rate and lr factor must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Learning rate for the next epoch.
    pub lr: f64,
    pub reduced: bool,
}

/// A differentiable loss over a fixed set of examples.
pub trait Objective {
    type Model: Module<f32> + Clone;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loss of example `i` with its parameter gradient added to `grads`.
    fn step(&self, model: &Self::Model, i: usize, seed: u64, grads: &mut Self::Model) -> Result<f64>;

    /// Evaluation-mode loss of example `i`.
    fn eval(&self, model: &Self::Model, i: usize) -> Result<f64>;

    fn mean_eval(&self, model: &Self::Model) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Config("empty example set".into()));
        }
        let mut s = 0.0;
        for i in 0..self.len() {
            s += self.eval(model, i)?;
        }
        Ok(s / self.len() as f64)
    }
}

fn finite(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numeric(format!("{what} loss is {loss}")))
    }
}

/// Optimizer, schedule and history; serializable for resumption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainConfig,
    pub epoch: usize,
    pub adam: Adam,
    pub schedule: PlateauSchedule,
    pub history: Vec<EpochRecord>,
    pub stopped: bool,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut schedule = PlateauSchedule::new(config.lr);
        schedule.factor = config.lr_factor;
        schedule.patience = config.patience;
        schedule.stop_patience = config.stop_patience;
        Ok(Self {
            adam: Adam::new(config.lr),
            config,
            epoch: 0,
            schedule,
            history: Vec::new(),
            stopped: false,
        })
    }

    pub fn done(&self) -> bool {
        self.stopped || self.epoch >= self.config.epochs
    }

    /// One pass over `train` in a seeded order, then validation on `val`
    /// (or `train` when absent) and a schedule update.
    pub fn run_epoch<O: Objective>(&mut self, model: &mut O::Model, train: &O, val: Option<&O>) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::Config("no training examples".into()));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        let epoch_seed = self.config.seed ^ (self.epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        order.shuffle(&mut Pcg64::seed_from_u64(epoch_seed));
        let mut total = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let mut grads = model.zeros_like();
            for &i in chunk {
                let seed = epoch_seed.wrapping_add(i as u64);
                total += finite(train.step(model, i, seed, &mut grads)?, "training")?;
            }
            if chunk.len() > 1 {
                grads.scale_params(1.0 / chunk.len() as f32);
            }
            self.adam.step(model, &grads)?;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = finite(val.unwrap_or(train).mean_eval(model)?, "validation")?;
        let step = self.schedule.observe(val_loss);
        self.adam.lr = step.lr;
        self.epoch += 1;
        self.stopped = self.config.early_stop && step.stop;
        let rec = EpochRecord {
            epoch: self.epoch,
            train_loss,
            val_loss,
            lr: step.lr,
            reduced: step.reduced,
        };
        self.history.push(rec.clone());
        Ok(rec)
    }

    /// Runs epochs until the budget is spent or early stopping fires.
    pub fn fit<O, F>(&mut self, model: &mut O::Model, train: &O, val: Option<&O>, mut on_epoch: F) -> Result<()>
    where
        O: Objective,
        F: FnMut(&EpochRecord) -> Result<()>,
    {
        while !self.done() {
            let rec = self.run_epoch(model, train, val)?;
            on_epoch(&rec)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Appends one JSON object as a line.
pub fn append_jsonl<S: Serialize>(path: &Path, record: &S) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    f.write_all(&line)?;
    Ok(())
}

/// BCE over both DOA branches.
pub struct DoaObjective<'a> {
    examples: &'a [Example],
    targets: Vec<(Vec<f32>, Vec<f32>)>,
}

impl<'a> DoaObjective<'a> {
    pub fn new(examples: &'a [Example]) -> Self {
        let targets = examples
            .iter()
            .map(|e| (e.loudspeaker_targets(), e.talker_targets()))
            .collect();
        Self { examples, targets }
    }
}

impl Objective for DoaObjective<'_> {
    type Model = SsDoa<f32>;

    fn len(&self) -> usize {
        self.examples.len()
    }

    fn step(&self, model: &SsDoa<f32>, i: usize, seed: u64, grads: &mut SsDoa<f32>) -> Result<f64> {
        let (out, cache) = model.forward(&self.examples[i].input, Mode::Train, seed)?;
        let (loss, d_ls, d_tk) = doa_loss(&out, &self.targets[i].0, &self.targets[i].1)?;
        model.backward(&cache, &d_ls, &d_tk, grads);
        Ok(loss)
    }

    fn eval(&self, model: &SsDoa<f32>, i: usize) -> Result<f64> {
        let out = model.infer(&self.examples[i].input)?;
        Ok(doa_loss(&out, &self.targets[i].0, &self.targets[i].1)?.0)
    }
}

/// Precomputed side information for one example.
#[derive(Clone, Debug, Default)]
pub struct SideInfo {
    pub ssdoa: Option<SsDoaOutput<f32>>,
    pub beam: Option<Tensor<f32>>,
}

impl SideInfo {
    pub fn view(&self) -> DirectionInfo<'_, f32> {
        DirectionInfo {
            ssdoa: self.ssdoa.as_ref(),
            beam: self.beam.as_ref(),
        }
    }
}

/// Runs the frozen upstream stage for every example the mode needs.
pub fn side_info(
    mode: FusionMode,
    examples: &[Example],
    ssdoa: Option<&SsDoa<f32>>,
    mvdr: &MvdrConfig,
) -> Result<Vec<SideInfo>> {
    if mode.needs_ssdoa() && ssdoa.is_none() {
        return Err(Error::Config(format!("fusion mode {mode} needs a trained SS-DOA model")));
    }
    examples
        .iter()
        .map(|e| {
            Ok(SideInfo {
                ssdoa: match (mode.needs_ssdoa(), ssdoa) {
                    (true, Some(m)) => Some(m.infer(&e.input)?),
                    _ => None,
                },
                beam: (mode == FusionMode::B).then(|| e.beam(mvdr)).transpose()?,
            })
        })
        .collect()
}

/// Compressed RI + magnitude loss against the direct-path target.
pub struct AecObjective<'a> {
    examples: &'a [Example],
    side: Vec<SideInfo>,
}

impl<'a> AecObjective<'a> {
    pub fn new(examples: &'a [Example], side: Vec<SideInfo>) -> Result<Self> {
        if side.len() != examples.len() {
            return Err(Error::domain("one side-information entry per example is required"));
        }
        Ok(Self { examples, side })
    }
}

impl Objective for AecObjective<'_> {
    type Model = AecModel<f32>;

    fn len(&self) -> usize {
        self.examples.len()
    }

    fn step(&self, model: &AecModel<f32>, i: usize, _seed: u64, grads: &mut AecModel<f32>) -> Result<f64> {
        let (est, cache) = model.forward(&self.examples[i].input, &self.side[i].view())?;
        let (loss, d) = aec_loss(&est, &self.examples[i].target)?;
        model.backward(&cache, &d, grads);
        Ok(loss)
    }

    fn eval(&self, model: &AecModel<f32>, i: usize) -> Result<f64> {
        let est = model.infer(&self.examples[i].input, &self.side[i].view())?;
        Ok(aec_loss(&est, &self.examples[i].target)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aec::IscrnConfig;
    use crate::dataset::{synth_examples, DatasetConfig};
    use crate::scenario::{SamplerConfig, ScenarioPolicy};
    use crate::ssdoa::SsDoaConfig;

    fn examples(n: usize) -> Vec<Example> {
        let cfg = DatasetConfig {
            sampler: SamplerConfig {
                duration_s: 0.12,
                t60_s: (0.2, 0.25),
                ..Default::default()
            },
            ..Default::default()
        };
        synth_examples(ScenarioPolicy::Matched, n, 11, &cfg).unwrap()
    }

    fn tiny_doa() -> SsDoa<f32> {
        SsDoa::new(SsDoaConfig {
            channels: 4,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn plateau_halves_lr() {
        let mut t = Trainer::new(TrainConfig::default()).unwrap();
        for v in [1.0, 1.0, 1.0] {
            let s = t.schedule.observe(v);
            t.adam.lr = s.lr;
        }
        assert_eq!(t.adam.lr, 5e-4);
    }

    #[test]
    fn resume_reproduces_next_epoch() {
        let ex = examples(2);
        let obj = DoaObjective::new(&ex);
        let cfg = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let mut model = tiny_doa();
        let mut tr = Trainer::new(cfg).unwrap();
        tr.run_epoch(&mut model, &obj, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("m.ckpt");
        let state = dir.path().join("state.json");
        crate::nn::checkpoint::save(&ckpt, &model, serde_json::json!({})).unwrap();
        tr.save(&state).unwrap();
        let next = tr.run_epoch(&mut model, &obj, None).unwrap();

        let mut resumed = tiny_doa();
        crate::nn::checkpoint::load(&ckpt, &mut resumed).unwrap();
        let mut tr2 = Trainer::load(&state).unwrap();
        let again = tr2.run_epoch(&mut resumed, &obj, None).unwrap();
        assert_eq!(next, again);
        assert_eq!(model, resumed);
    }

    #[test]
    fn aec_stage_needs_upstream_model() {
        let ex = examples(1);
        assert!(side_info(FusionMode::Et, &ex, None, &MvdrConfig::default()).is_err());
        let side = side_info(FusionMode::B, &ex, None, &MvdrConfig::default()).unwrap();
        assert!(side[0].beam.is_some());
        let cfg = IscrnConfig {
            channels: 4,
            pre_units: 1,
            post_units: 1,
            s4d_state: 4,
            ..Default::default()
        };
        let mut model = AecModel::<f32>::new(6, FusionMode::B, cfg).unwrap();
        let obj = AecObjective::new(&ex, side).unwrap();
        let before = obj.mean_eval(&model).unwrap();
        let mut tr = Trainer::new(TrainConfig {
            epochs: 3,
            lr: 3e-3,
            ..Default::default()
        })
        .unwrap();
        tr.fit(&mut model, &obj, None, |_| Ok(())).unwrap();
        assert_eq!(tr.history.len(), 3);
        assert!(tr.history[2].val_loss < before);
    }

    #[test]
    fn jsonl_appends() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        for e in 0..2 {
            append_jsonl(
                &p,
                &EpochRecord {
                    epoch: e,
                    train_loss: 1.0,
                    val_loss: 1.0,
                    lr: 1e-3,
                    reduced: false,
                },
            )
            .unwrap();
        }
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 2);
    }
}
