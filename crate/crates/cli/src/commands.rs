use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use echolab::acoustics::{MultichannelWave, SampleFormat, WaveRole};
use echolab::aec::{aec_loss, AecModel, DirectionInfo, FusionMode};
use echolab::dataset::Example;
use echolab::dsp::{istft, ri_unpack};
use echolab::eval::{aggregate, doa_prf, render_table, reports_csv, summary_csv, MetricReport, Prf};
use echolab::labels::Branch;
use echolab::nn::{checkpoint, Complexity, Module, Tensor};
use echolab::scenario::ScenarioPolicy;
use echolab::ssdoa::{decode_output, SsDoa, StreamFrame, StreamRecord};
use echolab::train::{append_jsonl, side_info, AecObjective, DoaObjective, Objective, TrainConfig, Trainer};
use echolab::{Error, Result};
use serde_json::json;

use crate::config::{ExperimentConfig, SplitCounts};
use crate::store::{self, DatasetManifest, Split};

#[derive(Debug, Parser)]
#[command(name = "echolab", version, about = "DOA-informed multichannel echo cancellation")]
pub struct Cli {
    /// Experiment config (TOML, or JSON by extension). Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a dataset of scenarios to disk.
    Synth(SynthArgs),
    /// Train SS-DOA or an AEC model.
    Train(TrainArgs),
    /// Frame-online inference on one scenario.
    Infer(InferArgs),
    /// Evaluate checkpoints on test sets.
    Eval(EvalArgs),
    /// Re-render a stored scenario and compare bytes.
    Verify(VerifyArgs),
    /// Print model complexity, parameter tables or the resolved config.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of scenarios in `--split`; the other splits are left empty.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value = "train")]
    pub split: Split,
    #[arg(long)]
    pub policy: Option<ScenarioPolicy>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the built-in speech surrogate (modulated pink noise, not speech).
    #[arg(long)]
    pub surrogate: bool,
    #[arg(long)]
    pub speech_dir: Option<PathBuf>,
    /// Scenario length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Ssdoa,
    Aec,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub stage: Stage,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub mode: Option<FusionMode>,
    /// SS-DOA checkpoint for modes E, ET and ETA (default `<out>/ssdoa.ckpt`).
    #[arg(long)]
    pub ssdoa: Option<PathBuf>,
    /// Continue from the last saved epoch.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub ssdoa: Option<PathBuf>,
    /// A scenario directory written by `synth`.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-frame DOA records as JSON lines.
    #[arg(long)]
    pub doa_jsonl: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Macs,
    Params,
    Config,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub ssdoa: Option<PathBuf>,
    /// Dataset directories; the test split of each is evaluated.
    #[arg(long, num_args = 1.., required = true)]
    pub test_sets: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub report: Option<ReportKind>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(value_enum, default_value = "macs")]
    pub kind: ReportKind,
}

/// Exit status for a failed command: 3 for numeric failures, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => synth(cfg, a, out),
        Command::Train(a) => train(cfg, a, out),
        Command::Infer(a) => infer(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Verify(a) => verify(a, out),
        Command::Report(a) => report(&cfg, a.kind, out),
    }
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref())?;
    Ok(())
}

fn synth(mut cfg: ExperimentConfig, a: SynthArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(n) = a.count {
        let c = &mut cfg.data.counts;
        *c = SplitCounts { train: 0, val: 0, test: 0 };
        match a.split {
            Split::Train => c.train = n,
            Split::Val => c.val = n,
            Split::Test => c.test = n,
        }
    }
    if let Some(p) = a.policy {
        cfg.data.policy = p;
    }
    if let Some(s) = a.seed {
        cfg.data.seed = s;
    }
    if a.surrogate {
        cfg.data.use_surrogate = true;
    }
    if let Some(d) = a.speech_dir {
        cfg.data.speech_dir = Some(d);
    }
    if let Some(d) = a.duration {
        cfg.data.build.sampler.duration_s = d;
    }
    let dir = a.out.unwrap_or_else(|| cfg.paths.data_dir.clone());
    std::fs::create_dir_all(&dir)?;
    let m = store::synth(&cfg, &dir)?;
    for (split, entries) in &m.splits {
        say(out, format!("{split}: {} scenarios", entries.len()))?;
    }
    say(out, format!("wrote {}", dir.join(store::MANIFEST).display()))
}

fn read_checkpoint(path: &Path) -> Result<(serde_json::Value, Vec<u8>)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let (header, _) = checkpoint::decode(&bytes)?;
    Ok((header.meta, bytes))
}

fn meta_config(meta: &serde_json::Value, kind: &str, path: &Path) -> Result<ExperimentConfig> {
    if meta["kind"] != kind {
        return Err(Error::Config(format!(
            "{} is a {} checkpoint, expected {kind}",
            path.display(),
            meta["kind"]
        )));
    }
    ExperimentConfig::from_json(&meta["config"])
}

pub fn load_ssdoa(path: &Path) -> Result<(SsDoa<f32>, ExperimentConfig)> {
    let (meta, bytes) = read_checkpoint(path)?;
    let cfg = meta_config(&meta, "ssdoa", path)?;
    let mut model = SsDoa::<f32>::new(cfg.ssdoa)?;
    checkpoint::load_into(&mut model, &bytes)?;
    Ok((model, cfg))
}

pub fn load_aec(path: &Path) -> Result<(AecModel<f32>, ExperimentConfig)> {
    let (meta, bytes) = read_checkpoint(path)?;
    let cfg = meta_config(&meta, "aec", path)?;
    let mode: FusionMode = meta["mode"]
        .as_str()
        .ok_or_else(|| Error::Config("checkpoint meta has no mode".into()))?
        .parse()?;
    if mode != cfg.mode {
        return Err(Error::Config(format!("checkpoint mode {mode} disagrees with its config ({})", cfg.mode)));
    }
    let mut model = AecModel::<f32>::new(cfg.num_mics(), mode, cfg.iscrn)?;
    checkpoint::load_into(&mut model, &bytes)?;
    Ok((model, cfg))
}

fn ssdoa_for(mode: FusionMode, path: Option<&Path>) -> Result<Option<SsDoa<f32>>> {
    if !mode.needs_ssdoa() {
        return Ok(None);
    }
    let path = path.ok_or_else(|| Error::Config(format!("fusion mode {mode} needs an SS-DOA checkpoint")))?;
    if !path.exists() {
        return Err(Error::Config(format!("SS-DOA checkpoint {} not found", path.display())));
    }
    Ok(Some(load_ssdoa(path)?.0))
}

fn stage_stem(stage: Stage, mode: FusionMode) -> String {
    match stage {
        Stage::Ssdoa => "ssdoa".into(),
        Stage::Aec => format!("aec-{}", mode.as_str().to_lowercase()),
    }
}

/// Runs epochs until the trainer stops, saving weights, trainer state and
/// one log line after every epoch so that an interrupted run resumes from
/// its last complete epoch.
#[allow(clippy::too_many_arguments)]
fn fit<O, M>(
    model: &mut M,
    train: &O,
    val: Option<&O>,
    tcfg: TrainConfig,
    resume: bool,
    dir: &Path,
    stem: &str,
    meta: serde_json::Value,
    out: &mut dyn Write,
) -> Result<PathBuf>
where
    O: Objective<Model = M>,
    M: Module<f32>,
{
    let ckpt = dir.join(format!("{stem}.ckpt"));
    let state = dir.join(format!("{stem}.state.json"));
    let log = dir.join(format!("{stem}.jsonl"));
    let mut trainer = if resume && state.exists() {
        checkpoint::load(&ckpt, model)?;
        let mut t = Trainer::load(&state)?;
        // The epoch budget may be raised on resume; everything else is kept.
        t.config.epochs = tcfg.epochs;
        say(out, format!("resuming {stem} after epoch {}", t.epoch))?;
        t
    } else {
        Trainer::new(tcfg)?
    };
    while !trainer.done() {
        let rec = trainer.run_epoch(model, train, val)?;
        let mut m = meta.clone();
        m["epoch"] = json!(rec.epoch);
        checkpoint::save(&ckpt, model, m)?;
        trainer.save(&state)?;
        append_jsonl(&log, &rec)?;
        say(
            out,
            format!(
                "epoch {:>4}  train {:.6}  val {:.6}  lr {:.2e}{}",
                rec.epoch,
                rec.train_loss,
                rec.val_loss,
                rec.lr,
                if rec.reduced { "  (halved)" } else { "" }
            ),
        )?;
    }
    Ok(ckpt)
}

fn train(mut cfg: ExperimentConfig, a: TrainArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(d) = a.data {
        cfg.paths.data_dir = d;
    }
    if let Some(d) = a.out {
        cfg.paths.out_dir = d;
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    let tcfg = match a.stage {
        Stage::Ssdoa => &mut cfg.train.ssdoa,
        Stage::Aec => &mut cfg.train.aec,
    };
    if let Some(e) = a.epochs {
        tcfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        tcfg.lr = lr;
    }
    let data_dir = cfg.paths.data_dir.clone();
    let manifest = DatasetManifest::read(&data_dir)?;
    // Data shape comes from the dataset; models and schedule from the run config.
    cfg.data = manifest.config.data.clone();
    cfg.validate()?;
    let train_ex = store::load_split(&data_dir, &manifest, Split::Train)?;
    let val_ex = store::load_split(&data_dir, &manifest, Split::Val)?;
    if train_ex.is_empty() {
        return Err(Error::Config(format!("{} has no training scenarios", data_dir.display())));
    }
    let dir = cfg.paths.out_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let stem = stage_stem(a.stage, cfg.mode);
    let meta = |kind: &str| json!({ "kind": kind, "mode": cfg.mode.as_str(), "config": cfg.to_json() });
    let ckpt = match a.stage {
        Stage::Ssdoa => {
            let mut model = SsDoa::<f32>::new(cfg.ssdoa)?;
            let tr = DoaObjective::new(&train_ex);
            let va = DoaObjective::new(&val_ex);
            let va = (!va.is_empty()).then_some(&va);
            fit(&mut model, &tr, va, cfg.train.ssdoa.clone(), a.resume, &dir, &stem, meta("ssdoa"), out)?
        }
        Stage::Aec => {
            let default_ssdoa = dir.join("ssdoa.ckpt");
            let ssdoa = ssdoa_for(cfg.mode, Some(a.ssdoa.as_deref().unwrap_or(&default_ssdoa)))?;
            let mvdr = &cfg.data.build.mvdr;
            let side_tr = side_info(cfg.mode, &train_ex, ssdoa.as_ref(), mvdr)?;
            let side_va = side_info(cfg.mode, &val_ex, ssdoa.as_ref(), mvdr)?;
            let tr = AecObjective::new(&train_ex, side_tr)?;
            let va = AecObjective::new(&val_ex, side_va)?;
            let va = (!va.is_empty()).then_some(&va);
            let mut model = AecModel::<f32>::new(cfg.num_mics(), cfg.mode, cfg.iscrn)?;
            fit(&mut model, &tr, va, cfg.train.aec.clone(), a.resume, &dir, &stem, meta("aec"), out)?
        }
    };
    say(out, format!("wrote {}", ckpt.display()))
}

/// Network outputs and waveforms for one scenario.
struct Enhanced {
    estimate: Tensor<f32>,
    wave: Vec<f64>,
    doa: Option<Vec<StreamRecord>>,
}

fn to_wave(est: &Tensor<f32>, ex: &Example, cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let stft = cfg.data.build.stft;
    let spec = ri_unpack(est, stft)?;
    Ok(istft(&spec, &stft, Some(ex.mixture.num_samples()))?.remove(0))
}

fn check_finite(est: &Tensor<f32>, id: &str) -> Result<()> {
    if est.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite estimate for {id}")))
    }
}

/// Frame-online pass: SS-DOA and the AEC consume one frame at a time.
fn enhance_stream(model: &AecModel<f32>, ssdoa: Option<&SsDoa<f32>>, ex: &Example, cfg: &ExperimentConfig) -> Result<Enhanced> {
    let beam = (model.mode == FusionMode::B).then(|| ex.beam(&cfg.data.build.mvdr)).transpose()?;
    let mut doa_stream = ssdoa.map(|m| m.stream());
    let mut aec = model.stream();
    let (t_n, f) = (ex.frames(), model.bins());
    let mut data = Vec::with_capacity(2 * t_n * f);
    let mut records = Vec::new();
    for t in 0..t_n {
        let frame = ex.input.frame(t);
        let side: Option<StreamFrame<f32>> = doa_stream.as_mut().map(|s| s.push(t, frame)).transpose()?;
        if let Some(s) = &side {
            records.push(StreamRecord::from_logits(t, &s.loudspeaker_logits, &s.talker_logits, cfg.eval.doa_threshold));
        }
        data.extend(aec.push(t, frame, side.as_ref(), beam.as_ref().map(|b| b.frame(t)))?);
    }
    let estimate = Tensor::from_frames(2, t_n, f, data)?;
    check_finite(&estimate, &ex.id)?;
    let wave = to_wave(&estimate, ex, cfg)?;
    Ok(Enhanced { estimate, wave, doa: ssdoa.map(|_| records) })
}

fn enhance_batch(model: &AecModel<f32>, ssdoa: Option<&SsDoa<f32>>, ex: &Example, cfg: &ExperimentConfig) -> Result<Enhanced> {
    let doa = ssdoa.map(|m| m.infer(&ex.input)).transpose()?;
    let beam = (model.mode == FusionMode::B).then(|| ex.beam(&cfg.data.build.mvdr)).transpose()?;
    let info = DirectionInfo { ssdoa: doa.as_ref(), beam: beam.as_ref() };
    let estimate = model.infer(&ex.input, &info)?;
    check_finite(&estimate, &ex.id)?;
    let wave = to_wave(&estimate, ex, cfg)?;
    Ok(Enhanced {
        estimate,
        wave,
        doa: doa.map(|o| decode_output(&o, cfg.eval.doa_threshold)),
    })
}

fn doa_score(records: &[StreamRecord], ex: &Example) -> Result<Prf> {
    let ls: Vec<Vec<usize>> = records.iter().map(|r| r.loudspeakers.clone()).collect();
    let tk: Vec<Vec<usize>> = records.iter().map(|r| r.talker.clone()).collect();
    let a = doa_prf(&ls, &ex.labels.direction_sets(Branch::Loudspeakers))?;
    let b = doa_prf(&tk, &ex.labels.direction_sets(Branch::Talker))?;
    Ok(a.merge(&b))
}

fn report_for(ex: &Example, test_set: &str, mode: FusionMode, e: &Enhanced, cfg: &ExperimentConfig) -> Result<MetricReport> {
    let mut r = MetricReport::compute_with(
        &ex.id,
        test_set,
        mode.as_str(),
        ex.scenario.talk_pattern,
        &ex.mixture.y[0],
        &ex.mixture.near_direct[0],
        &e.wave,
        cfg.eval.sdr_filter_len,
    )?;
    r.doa = e.doa.as_deref().map(|d| doa_score(d, ex)).transpose()?;
    Ok(r)
}

fn check_compatible(model_cfg: &ExperimentConfig, data: &DatasetManifest, what: &Path) -> Result<()> {
    let (a, b) = (&model_cfg.data.build, &data.config.data.build);
    if a.stft != b.stft || a.sampler.num_mics != b.sampler.num_mics {
        return Err(Error::Config(format!(
            "{} was rendered with a different STFT or array than the checkpoint expects",
            what.display()
        )));
    }
    Ok(())
}

fn infer(a: InferArgs, out: &mut dyn Write) -> Result<()> {
    let (model, cfg) = load_aec(&a.checkpoint)?;
    let ssdoa = ssdoa_for(model.mode, a.ssdoa.as_deref())?;
    let id = a
        .scenario
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let ex = store::load_scenario(&a.scenario, &id, &cfg)?;
    if ex.input.channels() != model.base_channels() || ex.input.bins() != model.bins() {
        return Err(Error::Config("scenario and checkpoint disagree on array size or bins".into()));
    }
    let start = Instant::now();
    let e = enhance_stream(&model, ssdoa.as_ref(), &ex, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(&a.out)?;
    let wav = a.out.join(format!("{}.wav", WaveRole::Enhanced.stem()));
    MultichannelWave::mono(WaveRole::Enhanced, e.wave.clone()).write_wav(&wav, SampleFormat::Float32)?;
    if let (Some(path), Some(records)) = (&a.doa_jsonl, &e.doa) {
        for r in records {
            append_jsonl(path, r)?;
        }
    }
    let (loss, _) = aec_loss(&e.estimate, &ex.target)?;
    let r = report_for(&ex, ex.scenario.policy.as_str(), model.mode, &e, &cfg)?;
    let record = json!({
        "scenario_id": ex.id,
        "mode": model.mode.as_str(),
        "loss": loss,
        "erle_db": r.erle_db,
        "sdr_db": r.sdr_db,
        "sdr_filter_len": r.sdr_filter_len,
        "doa": r.doa.map(|p| json!({ "precision": p.precision(), "recall": p.recall(), "f1": p.f1() })),
        "frames": ex.frames(),
        "rtf": elapsed / ex.scenario.duration_s,
    });
    std::fs::write(a.out.join("record.json"), serde_json::to_vec_pretty(&record)?)?;
    say(out, serde_json::to_string(&record)?)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let shared_ssdoa = a.ssdoa.as_deref();
    let mut reports = Vec::new();
    let mut models = Vec::new();
    for path in &a.checkpoints {
        let (model, cfg) = load_aec(path)?;
        let ssdoa = ssdoa_for(model.mode, shared_ssdoa)?;
        models.push((model, cfg, ssdoa));
    }
    for dir in &a.test_sets {
        let manifest = DatasetManifest::read(dir)?;
        let examples = store::load_split(dir, &manifest, Split::Test)?;
        if examples.is_empty() {
            return Err(Error::Config(format!("{} has no test scenarios", dir.display())));
        }
        for (model, cfg, ssdoa) in &models {
            check_compatible(cfg, &manifest, dir)?;
            for ex in &examples {
                let e = enhance_batch(model, ssdoa.as_ref(), ex, cfg)?;
                reports.push(report_for(ex, manifest.test_set_name(), model.mode, &e, cfg)?);
            }
        }
    }
    std::fs::create_dir_all(&a.out)?;
    let groups = aggregate(&reports);
    std::fs::write(a.out.join("metrics.csv"), reports_csv(&reports))?;
    std::fs::write(a.out.join("summary.csv"), summary_csv(&groups))?;
    let table = render_table(&groups);
    std::fs::write(a.out.join("table.txt"), &table)?;
    say(out, &table)?;
    if let Some(kind) = a.report {
        let cfg = &models[0].1;
        report(cfg, kind, out)?;
    }
    Ok(())
}

fn verify(a: VerifyArgs, out: &mut dyn Write) -> Result<()> {
    let r = store::verify(&a.data, a.id.as_deref())?;
    for (name, same) in &r.files {
        say(out, format!("{:<16} {}", name, if *same { "identical" } else { "DIFFERS" }))?;
    }
    if r.ok() {
        say(out, format!("{}: reproducible", r.id))
    } else {
        Err(Error::Numeric(format!("{} does not re-render byte-identically", r.id)))
    }
}

/// Published model sizes the complexity table is compared against.
const PUBLISHED_SSDOA_PARAMS: f64 = 92.8e3;
const PUBLISHED_SSDOA_MACS: f64 = 826.8e6;
const PUBLISHED_ISCRN_PARAMS: f64 = 950.8e3;
const PUBLISHED_ISCRN_MACS: f64 = 3.64e9;

fn report(cfg: &ExperimentConfig, kind: ReportKind, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let stft = cfg.data.build.stft;
    let fps = stft.sample_rate as f64 / stft.hop_len() as f64;
    let ssdoa = SsDoa::<f32>::new(cfg.ssdoa)?;
    match kind {
        ReportKind::Config => say(out, cfg.to_toml()?),
        ReportKind::Params => {
            say(out, "SS-DOA")?;
            say(out, ssdoa.param_report())?;
            let aec = AecModel::<f32>::new(cfg.num_mics(), cfg.mode, cfg.iscrn)?;
            say(out, format!("ISCRN ({})", cfg.mode))?;
            say(out, aec.param_report())
        }
        ReportKind::Macs => {
            say(out, format!("{:<14} {:>10} {:>10} {:>12} {:>10}", "model", "params", "published", "MAC/s", "published"))?;
            let row = |name: &str, p: usize, pp: f64, m: f64, pm: f64| {
                format!("{name:<14} {:>9.1}k {:>9.1}k {:>10.3} G {:>8.3} G", p as f64 / 1e3, pp / 1e3, m / 1e9, pm / 1e9)
            };
            say(out, row("SS-DOA", ssdoa.num_params(), PUBLISHED_SSDOA_PARAMS, ssdoa.macs(1.0, fps), PUBLISHED_SSDOA_MACS))?;
            for mode in FusionMode::ALL {
                let aec = AecModel::<f32>::new(cfg.num_mics(), mode, cfg.iscrn)?;
                let name = format!("ISCRN {mode}");
                say(out, row(&name, aec.num_params(), PUBLISHED_ISCRN_PARAMS, aec.macs(1.0, fps), PUBLISHED_ISCRN_MACS))?;
            }
            Ok(())
        }
    }
}
