//! Mini-batch Adam training with best-epoch selection.

use std::borrow::Cow;
use std::collections::HashSet;
use std::path::PathBuf;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{save_classifier, save_encoder_decoder};
use super::{Classifier, ClassifierConfig, EncoderDecoder, EncoderDecoderConfig};
use crate::dataio::DatasetSample;
use crate::error::{Error, Result};
use crate::gamestate::FeatureMap;
use crate::nn::{derive_seed, mse_loss, softmax_ce_loss, Adam, AdamConfig};
use crate::tensor::{Real, Tensor};

/// Arithmetic used during training; weights are always returned as `f32`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Fixed for the whole run.
    pub lr: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Best-so-far weights are written here after every improving epoch.
    pub checkpoint_dir: Option<PathBuf>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 32,
            lr: 0.001,
            seed: 0,
            precision: Precision::F32,
            checkpoint_dir: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's training batches, taken before each update.
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Weights after the epoch with the lowest validation loss.
    pub best: M,
    pub best_epoch: usize,
    /// Weights after the final epoch.
    pub last: M,
    pub history: Vec<EpochRecord>,
}

/// Which map a classifier sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputVariant {
    /// The fog-limited observation.
    Noisy,
    /// The full state.
    Clean,
    /// The encoder-decoder's reconstruction of the noisy observation.
    Retrieved,
}

impl std::str::FromStr for InputVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy" => Ok(InputVariant::Noisy),
            "clean" => Ok(InputVariant::Clean),
            "retrieved" => Ok(InputVariant::Retrieved),
            other => Err(Error::invalid(format!(
                "unknown input variant {other:?} (expected noisy, clean or retrieved)"
            ))),
        }
    }
}

impl std::fmt::Display for InputVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InputVariant::Noisy => "noisy",
            InputVariant::Clean => "clean",
            InputVariant::Retrieved => "retrieved",
        })
    }
}

const INFER_BATCH: usize = 32;

/// Encoder-decoder outputs for a list of maps, batched.
pub fn retrieve(ed: &EncoderDecoder<f32>, maps: &[&FeatureMap]) -> Result<Vec<FeatureMap>> {
    let mut out = Vec::with_capacity(maps.len());
    for chunk in maps.chunks(INFER_BATCH) {
        out.extend(FeatureMap::unbatch(&ed.forward(&FeatureMap::batch(chunk))?)?);
    }
    Ok(out)
}

/// Classifier inputs for `variant`; only `Retrieved` allocates.
pub fn variant_inputs<'a>(
    samples: &'a [DatasetSample],
    variant: InputVariant,
    ed: Option<&EncoderDecoder<f32>>,
) -> Result<Vec<Cow<'a, FeatureMap>>> {
    Ok(match variant {
        InputVariant::Noisy => samples.iter().map(|s| Cow::Borrowed(&s.x)).collect(),
        InputVariant::Clean => samples.iter().map(|s| Cow::Borrowed(&s.y)).collect(),
        InputVariant::Retrieved => {
            let ed = ed.ok_or_else(|| {
                Error::invalid("the retrieved variant needs encoder-decoder weights")
            })?;
            let xs: Vec<&FeatureMap> = samples.iter().map(|s| &s.x).collect();
            retrieve(ed, &xs)?.into_iter().map(Cow::Owned).collect()
        }
    })
}

fn check_disjoint(train: &[DatasetSample], val: &[DatasetSample]) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(format!(
            "training needs non-empty train and validation sets (got {} and {})",
            train.len(),
            val.len()
        )));
    }
    let ids: HashSet<&str> = train.iter().map(|s| s.replay_id.as_str()).collect();
    if let Some(s) = val.iter().find(|s| ids.contains(s.replay_id.as_str())) {
        return Err(Error::Data(format!(
            "replay {} appears in both train and validation sets",
            s.replay_id
        )));
    }
    Ok(())
}

fn stack<T: Real>(maps: &[&FeatureMap], idx: &[usize]) -> Tensor<T> {
    let picked: Vec<&FeatureMap> = idx.iter().map(|&i| maps[i]).collect();
    FeatureMap::batch(&picked).cast()
}

/// Shared loop: `step` returns the batch loss and gradients, `eval` the
/// summed loss over a batch.
#[allow(clippy::too_many_arguments)]
fn fit<T, M, S, E, P>(
    mut model: M,
    n_train: usize,
    n_val: usize,
    cfg: &TrainConfig,
    step: S,
    eval: E,
    params_mut: P,
    save: &dyn Fn(&M) -> Result<()>,
) -> Result<TrainOutcome<M>>
where
    T: Real,
    M: Clone,
    S: Fn(&M, &[usize]) -> Result<(f64, Vec<Tensor<T>>)>,
    E: Fn(&M, &[usize]) -> Result<f64>,
    P: Fn(&mut M) -> Vec<(String, &mut Tensor<T>)>,
{
    let mut adam = Adam::<T>::new(cfg.lr, cfg.adam);
    let mut order: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (0..n_val).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, M)> = None;
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1 << 32 | epoch as u64)));
        let mut total = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = step(&model, idx)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            total += loss * idx.len() as f64;
            adam.step(params_mut(&mut model), &grads)?;
        }
        let mut val_sum = 0.0;
        for idx in val_idx.chunks(INFER_BATCH) {
            val_sum += eval(&model, idx)?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / n_train as f64,
            val_loss: val_sum / n_val as f64,
        };
        if !record.val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        info!(
            "epoch {epoch}: train {:.6} val {:.6}",
            record.train_loss, record.val_loss
        );
        if best.as_ref().map_or(true, |(_, v, _)| record.val_loss < *v) {
            save(&model)?;
            best = Some((epoch, record.val_loss, model.clone()));
        }
        history.push(record);
    }
    let (best_epoch, _, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model,
        history,
    })
}

fn ed_generic<T: Real>(
    train: &[DatasetSample],
    val: &[DatasetSample],
    config: &EncoderDecoderConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<EncoderDecoder<T>>> {
    let model = EncoderDecoder::<T>::new(config.clone(), derive_seed(cfg.seed, 0))?;
    let tx: Vec<&FeatureMap> = train.iter().map(|s| &s.x).collect();
    let ty: Vec<&FeatureMap> = train.iter().map(|s| &s.y).collect();
    let vx: Vec<&FeatureMap> = val.iter().map(|s| &s.x).collect();
    let vy: Vec<&FeatureMap> = val.iter().map(|s| &s.y).collect();
    let save = |m: &EncoderDecoder<T>| match &cfg.checkpoint_dir {
        Some(dir) => save_encoder_decoder(&dir.join("encoder_decoder.fogc"), &m.cast()),
        None => Ok(()),
    };
    fit(
        model,
        train.len(),
        val.len(),
        cfg,
        |m: &EncoderDecoder<T>, idx| {
            let (out, cache) = m.forward_cached(&stack(&tx, idx))?;
            let (loss, g) = mse_loss(&out, &stack(&ty, idx))?;
            Ok((loss, m.backward(&cache, &g)?.into_vec()))
        },
        |m, idx| {
            let out = m.forward(&stack(&vx, idx))?;
            Ok(mse_loss(&out, &stack(&vy, idx))?.0 * idx.len() as f64)
        },
        |m| m.named_params_mut(),
        &save,
    )
}

fn cast_outcome<M, N>(o: TrainOutcome<M>, f: impl Fn(&M) -> N) -> TrainOutcome<N> {
    TrainOutcome {
        best: f(&o.best),
        best_epoch: o.best_epoch,
        last: f(&o.last),
        history: o.history,
    }
}

/// Minimizes `mse(ed(x), y)`; the returned `best` has the lowest
/// validation MSE, ties going to the earliest epoch.
pub fn train_encoder_decoder(
    train: &[DatasetSample],
    val: &[DatasetSample],
    config: &EncoderDecoderConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<EncoderDecoder<f32>>> {
    cfg.validate()?;
    config.validate()?;
    check_disjoint(train, val)?;
    match cfg.precision {
        Precision::F32 => ed_generic::<f32>(train, val, config, cfg),
        Precision::F64 => Ok(cast_outcome(
            ed_generic::<f64>(train, val, config, cfg)?,
            EncoderDecoder::cast,
        )),
    }
}

/// Class index for a winner: 0 = side A.
fn labels(samples: &[DatasetSample]) -> Vec<usize> {
    samples.iter().map(|s| s.winner.index()).collect()
}

fn clf_generic<T: Real>(
    train_in: &[&FeatureMap],
    train_labels: &[usize],
    val_in: &[&FeatureMap],
    val_labels: &[usize],
    config: &ClassifierConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<Classifier<T>>> {
    let model = Classifier::<T>::new(config, derive_seed(cfg.seed, 1))?;
    let pick = |l: &[usize], idx: &[usize]| idx.iter().map(|&i| l[i]).collect::<Vec<_>>();
    let save = |m: &Classifier<T>| match &cfg.checkpoint_dir {
        Some(dir) => save_classifier(&dir.join("classifier.fogc"), &m.cast()),
        None => Ok(()),
    };
    fit(
        model,
        train_in.len(),
        val_in.len(),
        cfg,
        |m: &Classifier<T>, idx| {
            let (logits, cache) = m.forward_cached(&stack(train_in, idx))?;
            let (loss, g) = softmax_ce_loss(&logits, &pick(train_labels, idx))?;
            Ok((loss, m.backward(&cache, &g)?))
        },
        |m, idx| {
            let logits = m.logits(&stack(val_in, idx))?;
            Ok(softmax_ce_loss(&logits, &pick(val_labels, idx))?.0 * idx.len() as f64)
        },
        |m| m.named_params_mut(),
        &save,
    )
}

/// Minimizes softmax cross-entropy against the winner on the chosen input
/// variant. `Retrieved` runs the frozen encoder-decoder over `x` first.
pub fn train_classifier(
    train: &[DatasetSample],
    val: &[DatasetSample],
    variant: InputVariant,
    ed: Option<&EncoderDecoder<f32>>,
    config: &ClassifierConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<Classifier<f32>>> {
    cfg.validate()?;
    check_disjoint(train, val)?;
    let tr = variant_inputs(train, variant, ed)?;
    let va = variant_inputs(val, variant, ed)?;
    let tr: Vec<&FeatureMap> = tr.iter().map(|c| c.as_ref()).collect();
    let va: Vec<&FeatureMap> = va.iter().map(|c| c.as_ref()).collect();
    let (tl, vl) = (labels(train), labels(val));
    match cfg.precision {
        Precision::F32 => clf_generic::<f32>(&tr, &tl, &va, &vl, config, cfg),
        Precision::F64 => Ok(cast_outcome(
            clf_generic::<f64>(&tr, &tl, &va, &vl, config, cfg)?,
            Classifier::cast,
        )),
    }
}

/// Mean `mse(ed(x), y)` over samples; with `None`, the do-nothing baseline
/// `mse(x, y)`.
pub fn reconstruction_mse(ed: Option<&EncoderDecoder<f32>>, samples: &[DatasetSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    let mut sum = 0.0;
    for chunk in samples.chunks(INFER_BATCH) {
        let xs: Vec<&FeatureMap> = chunk.iter().map(|s| &s.x).collect();
        let ys: Vec<&FeatureMap> = chunk.iter().map(|s| &s.y).collect();
        let x = FeatureMap::batch(&xs);
        let pred = match ed {
            Some(m) => m.forward(&x)?,
            None => x,
        };
        sum += mse_loss(&pred, &FeatureMap::batch(&ys))?.0 * chunk.len() as f64;
    }
    Ok(sum / samples.len() as f64)
}
