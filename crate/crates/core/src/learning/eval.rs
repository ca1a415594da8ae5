use serde::{Deserialize, Serialize};

use super::train::{variant_inputs, InputVariant};
use super::{Classifier, EncoderDecoder};
use crate::dataio::DatasetSample;
use crate::error::{Error, Result};
use crate::gamestate::FeatureMap;
use crate::nn::{softmax, softmax_ce_loss};

/// Counts with "side A wins" as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// `predicted` and `actual` are `true` for "A wins".
    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// `2PR / (P + R)`, zero when `P + R = 0`.
fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// F1 of the "A wins" class.
    pub f1_positive: f64,
    /// Unweighted mean of both classes' F1.
    pub f1_macro: f64,
    pub confusion: Confusion,
    /// Mean cross-entropy.
    pub loss: f64,
}

impl EvalReport {
    pub fn from_confusion(c: Confusion, loss: f64) -> Result<Self> {
        if c.total() == 0 {
            return Err(Error::Data("cannot evaluate an empty set".into()));
        }
        let f1_pos = f1(c.tp, c.fp, c.fn_);
        let f1_neg = f1(c.tn, c.fn_, c.fp);
        Ok(EvalReport {
            accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
            f1_positive: f1_pos,
            f1_macro: (f1_pos + f1_neg) / 2.0,
            confusion: c,
            loss,
        })
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\naccuracy,{}\nf1_positive,{}\nf1_macro,{}\nloss,{}\n",
            self.accuracy, self.f1_positive, self.f1_macro, self.loss
        )
    }
}

/// Scores a classifier on labeled samples. Ties in probability count as a
/// prediction for side A.
pub fn evaluate_classifier(
    clf: &Classifier<f32>,
    samples: &[DatasetSample],
    variant: InputVariant,
    ed: Option<&EncoderDecoder<f32>>,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate an empty set".into()));
    }
    let inputs = variant_inputs(samples, variant, ed)?;
    let mut confusion = Confusion::default();
    let mut loss = 0.0;
    for (chunk, labeled) in inputs.chunks(32).zip(samples.chunks(32)) {
        let maps: Vec<&FeatureMap> = chunk.iter().map(|c| c.as_ref()).collect();
        let logits = clf.logits(&FeatureMap::batch(&maps))?;
        let labels: Vec<usize> = labeled.iter().map(|s| s.winner.index()).collect();
        loss += softmax_ce_loss(&logits, &labels)?.0 * labels.len() as f64;
        for (p, &label) in softmax(&logits)?.iter().zip(&labels) {
            confusion.record(p[0] >= p[1], label == 0);
        }
    }
    EvalReport::from_confusion(confusion, loss / samples.len() as f64)
}
