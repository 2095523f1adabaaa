//! Event-stratified k-fold splitting.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::SurvivalRecord;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    /// 1-based fold index.
    #[serde(skip)]
    pub fold: usize,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Splits patients into `k` folds with events spread as evenly as possible.
///
/// Events and censored patients are shuffled separately and dealt round-robin;
/// the censored deal continues where the event deal stopped, so validation sizes
/// differ by at most one and per-fold event counts by at most one.
pub fn make_folds(ids: &[String], records: &[SurvivalRecord], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if ids.len() != records.len() {
        return Err(Error::shape("make_folds", format!("{} ids for {} records", ids.len(), records.len())));
    }
    if k < 2 {
        return Err(Error::Stratification(format!("need at least 2 folds, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::Stratification(format!("{} patients cannot fill {k} folds", ids.len())));
    }
    if ids.iter().collect::<HashSet<_>>().len() != ids.len() {
        return Err(Error::Validation("patient ids must be unique".into()));
    }
    let (mut events, mut censored): (Vec<usize>, Vec<usize>) = (0..ids.len()).partition(|&i| records[i].event);
    if events.len() < k {
        return Err(Error::Stratification(format!("{} events cannot be spread over {k} folds", events.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    events.shuffle(&mut rng);
    censored.shuffle(&mut rng);

    let mut assignment = vec![0usize; ids.len()];
    for (slot, i) in events.iter().chain(&censored).enumerate() {
        assignment[*i] = slot % k;
    }
    Ok((0..k)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..ids.len()).partition(|&i| assignment[i] == f);
            FoldSplit {
                fold: f + 1,
                train: train.into_iter().map(|i| ids[i].clone()).collect(),
                val: val.into_iter().map(|i| ids[i].clone()).collect(),
            }
        })
        .collect())
}

/// `{"1": {"train": [...], "val": [...]}, ...}`
pub fn write_folds_json(path: impl AsRef<Path>, folds: &[FoldSplit]) -> Result<()> {
    let path = path.as_ref();
    let map: BTreeMap<usize, &FoldSplit> = folds.iter().map(|f| (f.fold, f)).collect();
    let text = serde_json::to_string_pretty(&map)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_folds_json(path: impl AsRef<Path>) -> Result<Vec<FoldSplit>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<usize, FoldSplit> = serde_json::from_str(&text)?;
    Ok(map
        .into_iter()
        .map(|(fold, mut f)| {
            f.fold = fold;
            f
        })
        .collect())
}
