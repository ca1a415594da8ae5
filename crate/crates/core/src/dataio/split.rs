use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamestate::Frame;

/// Replay-level partition parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            seed: 0,
        }
    }
}

/// Shuffles distinct replay ids and assigns whole replays to each side.
///
/// The train side gets `round(train_fraction * R)` replays, clamped to
/// `1..=R-1` so neither side is empty.
pub fn split_by_replay(frames: &[Frame], spec: &SplitSpec) -> Result<(Vec<String>, Vec<String>)> {
    split_replay_ids(frames.iter().map(|f| f.replay_id.as_str()), spec)
}

/// [`split_by_replay`] over any list of replay ids; duplicates collapse.
pub fn split_replay_ids<'a>(
    ids: impl IntoIterator<Item = &'a str>,
    spec: &SplitSpec,
) -> Result<(Vec<String>, Vec<String>)> {
    let ids: BTreeSet<&str> = ids.into_iter().collect();
    let mut ids: Vec<String> = ids.into_iter().map(str::to_string).collect();
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let r = ids.len();
    if r < 2 {
        return Err(Error::Data(format!("need at least 2 distinct replays to split, got {r}")));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((spec.train_fraction * r as f64).round() as usize).clamp(1, r - 1);
    let val = ids.split_off(n_train);
    Ok((ids, val))
}

/// Splits items by whether their replay id is in `train` or `val`, keeping
/// input order.
/// Items in neither set are dropped.
pub fn partition_samples<T, F>(items: Vec<T>, train: &[String], val: &[String], replay_of: F) -> (Vec<T>, Vec<T>)
where
    F: Fn(&T) -> &str,
{
    let train: HashSet<&str> = train.iter().map(String::as_str).collect();
    let val: HashSet<&str> = val.iter().map(String::as_str).collect();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for item in items {
        let id = replay_of(&item);
        if train.contains(id) {
            a.push(item);
        } else if val.contains(id) {
            b.push(item);
        }
    }
    (a, b)
}
