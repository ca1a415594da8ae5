//! Sub-command bodies. Each loads and checks its inputs, computes every
//! result, and only then writes files, so a failing run leaves nothing
//! behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use fogclear_core::dataio::{
    build_samples, generate_corpus, parse_frame_log, partition_samples, read_shard, split_replay_ids,
    write_frame_log, write_shard_to, DatasetSample, SplitSpec,
};
use fogclear_core::gamestate::{UnitTypeTable, CHANNELS};
use fogclear_core::learning::{
    encode_checkpoint, evaluate_classifier, load_classifier, load_encoder_decoder, reconstruction_mse, retrieve,
    train_classifier, train_encoder_decoder, ClassifierConfig, EncoderDecoder, EncoderDecoderConfig,
    EncoderDecoderMse, EpochRecord, InputVariant, TrainConfig,
};
use fogclear_core::nn::grad_check;
use fogclear_core::policy::{
    run_policy_benchmark, CombatPolicy, ModelPolicy, ModelPolicyConfig, OraclePolicy, RatioPolicy,
    RatioPolicyConfig,
};
use fogclear_core::{Error, Result};

use crate::args::{
    BenchArgs, EvalClfArgs, GenArgs, GradcheckArgs, OptimArgs, RenderArgs, RenderMode, SplitArgs, TrainClfArgs,
    TrainEdArgs, VariantArg,
};
use crate::heatmap::render_heatmap;
use crate::manifest::Outputs;

/// Files a command produces, written only after all work succeeded.
#[derive(Default)]
pub struct Pending {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Pending {
    fn add(&mut self, path: PathBuf, bytes: impl Into<Vec<u8>>) {
        self.files.push((path, bytes.into()));
    }

    pub fn flush(self, outputs: &mut Outputs) -> Result<()> {
        for (path, bytes) in self.files {
            outputs.write(&path, &bytes)?;
        }
        Ok(())
    }
}

/// What a command hands back to the dispatcher.
pub struct Finished {
    pub files: Pending,
    /// Exit code when the command ran to completion (gradcheck uses 1 for a
    /// failed check).
    pub code: i32,
}

impl Finished {
    fn ok(files: Pending) -> Self {
        Finished { files, code: 0 }
    }
}

fn metrics_csv(rows: &[(&str, String)]) -> String {
    let mut s = String::from("metric,value\n");
    for (k, v) in rows {
        writeln!(s, "{k},{v}").expect("writing to a String");
    }
    s
}

fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        writeln!(s, "{},{:.9},{:.9}", r.epoch, r.train_loss, r.val_loss).expect("writing to a String");
    }
    s
}

fn train_config(optim: &OptimArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: optim.epochs,
        batch_size: optim.batch_size,
        lr: optim.lr,
        seed,
        precision: optim.precision.into(),
        ..TrainConfig::default()
    }
}

fn variant_name(v: VariantArg) -> String {
    InputVariant::from(v).to_string()
}

/// `--ed-checkpoint` is mandatory for the retrieved variant; checked before
/// any file is read.
fn require_ed(variant: VariantArg, ed: &Option<PathBuf>) -> Result<()> {
    if matches!(variant, VariantArg::Retrieved) && ed.is_none() {
        return Err(Error::InvalidArgument(
            "--variant retrieved requires --ed-checkpoint".into(),
        ));
    }
    Ok(())
}

fn load_ed(path: &Option<PathBuf>) -> Result<Option<EncoderDecoder<f32>>> {
    path.as_deref().map(load_encoder_decoder).transpose()
}

/// Loads the shard and splits it by replay.
pub fn load_split(split: &SplitArgs, seed: u64) -> Result<(Vec<DatasetSample>, Vec<DatasetSample>)> {
    let spec = SplitSpec {
        train_fraction: split.train_fraction,
        seed: split.split_seed.unwrap_or(seed),
    };
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "--train-fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let samples = read_shard(&split.data)?;
    let (train_ids, val_ids) = split_replay_ids(samples.iter().map(|s| s.replay_id.as_str()), &spec)?;
    Ok(partition_samples(samples, &train_ids, &val_ids, |s| s.replay_id.as_str()))
}

pub fn gen(args: &GenArgs, seed: u64, out_dir: &Path) -> Result<Finished> {
    let table = UnitTypeTable::builtin();
    let frames = match &args.from_log {
        Some(path) => {
            let frames = parse_frame_log(BufReader::new(File::open(path)?))?;
            for f in &frames {
                f.validate()?;
            }
            frames
        }
        None => {
            let config = args.synth.to_config(seed);
            config.validate()?;
            generate_corpus(&config, &table)?
        }
    };
    if frames.is_empty() {
        return Err(Error::Data("no frames to write".into()));
    }
    let samples = build_samples(&frames, &table)?;
    let mut shard = Vec::new();
    write_shard_to(&samples, &mut shard)?;
    let mut files = Pending::default();
    let path = args.out.clone().unwrap_or_else(|| out_dir.join("dataset.fogd"));
    files.add(path.clone(), shard);
    if let Some(log) = &args.frame_log {
        let mut text = Vec::new();
        write_frame_log(&frames, &mut text)?;
        files.add(log.clone(), text);
    }
    let replays: BTreeSet<&str> = samples.iter().map(|s| s.replay_id.as_str()).collect();
    println!(
        "wrote {} samples from {} replays to {}",
        samples.len(),
        replays.len(),
        path.display()
    );
    Ok(Finished::ok(files))
}

pub fn train_ed(args: &TrainEdArgs, seed: u64, out_dir: &Path) -> Result<Finished> {
    let config = EncoderDecoderConfig::from_base(CHANNELS, args.base_filters, args.down_stages);
    config.validate()?;
    let cfg = train_config(&args.optim, seed);
    cfg.validate()?;
    let (train, val) = load_split(&args.split, seed)?;
    log::info!("training encoder-decoder on {} samples, validating on {}", train.len(), val.len());
    let outcome = train_encoder_decoder(&train, &val, &config, &cfg)?;
    let val_mse = reconstruction_mse(Some(&outcome.best), &val)?;
    let baseline = reconstruction_mse(None, &val)?;

    let mut files = Pending::default();
    let ckpt = args.out.clone().unwrap_or_else(|| out_dir.join("encoder_decoder.fogc"));
    files.add(ckpt.clone(), encode_checkpoint(&outcome.best.named_params())?);
    files.add(out_dir.join("encoder_decoder_history.csv"), history_csv(&outcome.history));
    files.add(
        out_dir.join("encoder_decoder_metrics.csv"),
        metrics_csv(&[
            ("val_mse", format!("{val_mse:.9}")),
            ("baseline_mse", format!("{baseline:.9}")),
            ("ratio", format!("{:.6}", val_mse / baseline)),
            ("best_epoch", outcome.best_epoch.to_string()),
            ("parameters", outcome.best.parameter_count().to_string()),
        ]),
    );
    println!(
        "best epoch {}: val mse {val_mse:.6}, baseline {baseline:.6} (ratio {:.4}); checkpoint {}",
        outcome.best_epoch,
        val_mse / baseline,
        ckpt.display()
    );
    Ok(Finished::ok(files))
}

pub fn train_clf(args: &TrainClfArgs, seed: u64, out_dir: &Path) -> Result<Finished> {
    require_ed(args.variant, &args.ed_checkpoint)?;
    let cfg = train_config(&args.optim, seed);
    cfg.validate()?;
    let ed = load_ed(&args.ed_checkpoint)?;
    let (train, val) = load_split(&args.split, seed)?;
    let variant = InputVariant::from(args.variant);
    let clf_config = ClassifierConfig::default();
    let outcome = train_classifier(&train, &val, variant, ed.as_ref(), &clf_config, &cfg)?;
    let report = evaluate_classifier(&outcome.best, &val, variant, ed.as_ref())?;

    let name = variant_name(args.variant);
    let mut files = Pending::default();
    let ckpt = args.out.clone().unwrap_or_else(|| out_dir.join(format!("classifier_{name}.fogc")));
    files.add(ckpt.clone(), encode_checkpoint(&outcome.best.named_params())?);
    files.add(out_dir.join(format!("classifier_{name}_history.csv")), history_csv(&outcome.history));
    files.add(out_dir.join(format!("classifier_{name}_metrics.csv")), report.to_csv());
    println!(
        "{name}: best epoch {}, val accuracy {:.4}, f1 {:.4}; checkpoint {}",
        outcome.best_epoch,
        report.accuracy,
        report.f1_positive,
        ckpt.display()
    );
    Ok(Finished::ok(files))
}

/// The `k`-th earliest sample of every replay that has one.
pub fn nth_frame_per_replay(samples: Vec<DatasetSample>, k: usize) -> Vec<DatasetSample> {
    let mut times: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for s in &samples {
        times.entry(&s.replay_id).or_default().push(s.t_seconds);
    }
    let pick: BTreeMap<String, u32> = times
        .into_iter()
        .filter_map(|(id, mut ts)| {
            ts.sort_unstable();
            ts.get(k).map(|&t| (id.to_string(), t))
        })
        .collect();
    samples
        .into_iter()
        .filter(|s| pick.get(&s.replay_id) == Some(&s.t_seconds))
        .collect()
}

pub fn eval_clf(args: &EvalClfArgs, seed: u64, out_dir: &Path) -> Result<Finished> {
    require_ed(args.variant, &args.ed_checkpoint)?;
    let clf = load_classifier(&args.clf_checkpoint)?;
    let ed = load_ed(&args.ed_checkpoint)?;
    let samples = if args.all {
        read_shard(&args.split.data)?
    } else {
        load_split(&args.split, seed)?.1
    };
    let samples = match args.frame_index {
        Some(k) => nth_frame_per_replay(samples, k),
        None => samples,
    };
    let variant = InputVariant::from(args.variant);
    let report = evaluate_classifier(&clf, &samples, variant, ed.as_ref())?;
    let csv = report.to_csv();
    print!("{csv}");
    let mut files = Pending::default();
    files.add(out_dir.join(format!("eval_{}.csv", variant_name(args.variant))), csv);
    Ok(Finished::ok(files))
}

pub fn render(args: &RenderArgs, out_dir: &Path) -> Result<Finished> {
    if args.channel >= CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "--channel {} outside 0..{CHANNELS}",
            args.channel
        )));
    }
    let ed = load_ed(&args.ed_checkpoint)?;
    let samples = read_shard(&args.data)?;
    let sample = samples.get(args.index).ok_or_else(|| {
        Error::InvalidArgument(format!("--index {} but the shard has {} samples", args.index, samples.len()))
    })?;
    let mut panels = vec![("noisy", sample.x.clone()), ("clean", sample.y.clone())];
    if let Some(ed) = &ed {
        panels.push(("predicted", retrieve(ed, &[&sample.x])?.remove(0)));
    }
    let mode = match args.mode {
        RenderMode::Raw32 => "raw32",
        RenderMode::Sum8 => "sum8",
    };
    let mut files = Pending::default();
    for (panel, map) in &panels {
        let h = render_heatmap(map, args.channel, args.mode)?;
        let stem = format!("frame{}_c{}_{mode}_{panel}", args.index, args.channel);
        files.add(out_dir.join(format!("{stem}.pgm")), h.to_pgm());
        files.add(out_dir.join(format!("{stem}.csv")), h.to_csv());
    }
    println!(
        "rendered {} panels of sample {} ({} t={}s)",
        panels.len(),
        args.index,
        sample.replay_id,
        sample.t_seconds
    );
    Ok(Finished::ok(files))
}

pub fn gradcheck(args: &GradcheckArgs, seed: u64, out_dir: &Path) -> Result<Finished> {
    if !(args.eps > 0.0 && args.tolerance > 0.0) {
        return Err(Error::InvalidArgument("--eps and --tolerance must be positive".into()));
    }
    let config = EncoderDecoderConfig::from_base(CHANNELS, args.base_filters, args.down_stages);
    config.validate()?;
    let mut net = EncoderDecoderMse::random(config, args.extent, seed)?;
    let params = net.model.parameter_count();
    let err = grad_check(&mut net, args.eps)?;
    let pass = err < args.tolerance;
    println!("max relative error {err:e} over {params} parameters ({})", if pass { "pass" } else { "fail" });
    let mut files = Pending::default();
    files.add(
        out_dir.join("gradcheck.csv"),
        metrics_csv(&[
            ("max_relative_error", format!("{err:e}")),
            ("parameters", params.to_string()),
            ("tolerance", format!("{:e}", args.tolerance)),
            ("pass", pass.to_string()),
        ]),
    );
    Ok(Finished {
        files,
        code: if pass { 0 } else { 1 },
    })
}

pub fn bench_policies(args: &BenchArgs, seed: u64, out_dir: &Path) -> Result<Finished> {
    let game = args.synth.to_config(args.game_seed.unwrap_or(seed));
    game.validate()?;
    let ratio_cfg = RatioPolicyConfig {
        correction: args.correction,
        threshold: args.ratio_threshold,
        ..RatioPolicyConfig::default()
    };
    ratio_cfg.validate()?;
    let model_cfg = ModelPolicyConfig {
        probability_threshold: args.probability_threshold,
        require_upgrade: !args.ignore_upgrade,
    };
    model_cfg.validate()?;
    let ed = load_encoder_decoder(&args.ed_checkpoint)?;
    let clf = load_classifier(&args.clf_checkpoint)?;
    let table = UnitTypeTable::builtin();
    let ratio = RatioPolicy {
        table: &table,
        config: ratio_cfg,
    };
    let model = ModelPolicy {
        ed: &ed,
        clf: &clf,
        config: model_cfg,
    };
    let oracle = OraclePolicy { table: &table };
    let policies: [&dyn CombatPolicy; 3] = [&ratio, &model, &oracle];
    let report = run_policy_benchmark(&policies, &game, &table, args.trials, seed)?;

    let mut trials = String::from("trial,policy,attack_frame,won\n");
    for r in &report.results {
        for (i, o) in r.outcomes.iter().enumerate() {
            let frame = o.attack_frame.map_or(String::new(), |f| f.to_string());
            writeln!(trials, "{i},{},{frame},{}", r.policy, o.won).expect("writing to a String");
        }
    }
    let csv = report.to_csv();
    print!("{csv}");
    let mut files = Pending::default();
    files.add(out_dir.join("policy_benchmark.csv"), csv);
    files.add(out_dir.join("policy_trials.csv"), trials);
    Ok(Finished::ok(files))
}
