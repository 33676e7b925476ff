//! Iterative stratification into a train/validation pair.
//!
//! Greedy, rarest label first: the emotion with the fewest unassigned positive
//! records is handled next (ties by emotion name), and each of its unassigned
//! positives goes to the subset whose remaining demand for that emotion is
//! largest. Demand ties fall to the subset with more remaining capacity, then
//! to a seeded coin flip. Records without any positive label fill the leftover
//! capacity at the end. Demands are real-valued and never pre-rounded.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub train_fraction: f64,
    pub seed: u64,
}

/// On-disk form of a split, keyed by record id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub language: String,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

impl SplitFile {
    pub fn new(ds: &LabeledDataset, split: &SplitResult) -> Self {
        let ids = |idx: &[usize]| idx.iter().map(|&i| ds.records()[i].id.clone()).collect();
        SplitFile {
            language: ds.language().to_owned(),
            seed: split.seed,
            train_ids: ids(&split.train_indices),
            val_ids: ids(&split.val_indices),
        }
    }

    /// Resolve ids back to record indices of `ds`.
    pub fn resolve(&self, ds: &LabeledDataset) -> Result<SplitResult> {
        let index: std::collections::HashMap<&str, usize> = ds
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let lookup = |ids: &[String]| {
            ids.iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Unknown {
                            what: "record id",
                            name: id.clone(),
                        })
                })
                .collect::<Result<Vec<_>>>()
        };
        let train_indices = lookup(&self.train_ids)?;
        let val_indices = lookup(&self.val_ids)?;
        let n = train_indices.len() + val_indices.len();
        Ok(SplitResult {
            train_indices,
            val_indices,
            train_fraction: if n == 0 {
                0.0
            } else {
                self.train_ids.len() as f64 / n as f64
            },
            seed: self.seed,
        })
    }
}

const TRAIN: usize = 0;
const VAL: usize = 1;

pub fn iterative_stratified_split(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<SplitResult> {
    let n = ds.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 records to split, got {n}"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }

    let k = ds.schema().k();
    let records = ds.records();
    let fractions = [train_fraction, 1.0 - train_fraction];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut capacity = fractions.map(|f| f * n as f64);
    let mut remaining = vec![0usize; k];
    for r in records {
        for (j, &l) in r.labels.iter().enumerate() {
            remaining[j] += usize::from(l);
        }
    }
    let mut demand: [Vec<f64>; 2] =
        fractions.map(|f| remaining.iter().map(|&c| f * c as f64).collect());

    // Emotion indices sorted by name; the first minimum in this order wins.
    let mut by_name: Vec<usize> = (0..k).collect();
    by_name.sort_by(|&a, &b| ds.schema().emotions()[a].cmp(&ds.schema().emotions()[b]));

    let mut subset: Vec<Option<usize>> = vec![None; n];
    let flip = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { TRAIN } else { VAL };

    loop {
        let next = by_name
            .iter()
            .copied()
            .filter(|&j| remaining[j] > 0)
            .min_by_key(|&j| remaining[j]);
        let Some(label) = next else { break };

        for i in 0..n {
            if subset[i].is_some() || records[i].labels[label] == 0 {
                continue;
            }
            let (dt, dv) = (demand[TRAIN][label], demand[VAL][label]);
            let s = if dt > dv {
                TRAIN
            } else if dv > dt {
                VAL
            } else if capacity[TRAIN] > capacity[VAL] {
                TRAIN
            } else if capacity[VAL] > capacity[TRAIN] {
                VAL
            } else {
                flip(&mut rng)
            };
            subset[i] = Some(s);
            capacity[s] -= 1.0;
            for (j, &l) in records[i].labels.iter().enumerate() {
                if l == 1 {
                    demand[s][j] -= 1.0;
                    remaining[j] -= 1;
                }
            }
        }
    }

    for slot in subset.iter_mut().filter(|s| s.is_none()) {
        let s = if capacity[TRAIN] > capacity[VAL] {
            TRAIN
        } else if capacity[VAL] > capacity[TRAIN] {
            VAL
        } else {
            flip(&mut rng)
        };
        *slot = Some(s);
        capacity[s] -= 1.0;
    }

    let (mut train_indices, mut val_indices) = (Vec::new(), Vec::new());
    for (i, s) in subset.into_iter().enumerate() {
        match s {
            Some(TRAIN) => train_indices.push(i),
            _ => val_indices.push(i),
        }
    }
    Ok(SplitResult {
        train_indices,
        val_indices,
        train_fraction,
        seed,
    })
}

/// Seed used for one language: `seed` plus the 64-bit FNV-1a hash of its code.
pub fn language_seed(seed: u64, language: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in language.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed.wrapping_add(h)
}

/// Split every language independently; results follow input order.
pub fn split_by_language(
    datasets: &[LabeledDataset],
    train_fraction: f64,
    seed: u64,
) -> Result<Vec<(String, SplitResult)>> {
    let mut seen = HashSet::new();
    for ds in datasets {
        if !seen.insert(ds.language()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate language code `{}`",
                ds.language()
            )));
        }
    }
    par::map_slice(datasets, |ds| {
        iterative_stratified_split(ds, train_fraction, language_seed(seed, ds.language()))
            .map(|s| (ds.language().to_owned(), s))
    })
    .into_iter()
    .collect()
}
