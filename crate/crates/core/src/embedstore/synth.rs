//! Deterministic synthetic embeddings for desk-scale runs.
//!
//! Each emotion gets a random unit direction; the k directions are mutually
//! orthogonal. A record's vector is the sum of the directions of its positive
//! emotions plus isotropic Gaussian noise. PER_EMOTION rows add the queried
//! emotion's direction on top.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingMeta, EmbeddingSet, Variant};
use crate::dataset::{EmotionSchema, LabeledDataset, Record};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub d: usize,
    pub seed: u64,
    pub variant: Variant,
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            d: 16,
            seed: 42,
            variant: Variant::Shared,
            noise: 0.05,
        }
    }
}

/// `k` orthonormal directions in `R^d` (Gram–Schmidt on Gaussian draws).
pub fn synth_basis(d: usize, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d < k {
        return Err(Error::InvalidArgument(format!(
            "dimension {d} is smaller than the emotion count {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Near-degenerate draws are discarded and redrawn.
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Ok(basis)
}

const EMOTIONS: [&str; 6] = ["anger", "disgust", "fear", "joy", "sadness", "surprise"];

/// Random multilabel dataset: each cell is 1 with probability `density`.
/// Emotion names come from the six basic emotions when `k <= 6`, else `e<j>`.
pub fn synth_dataset(
    language: &str,
    n: usize,
    k: usize,
    density: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!(
            "density must lie in [0, 1], got {density}"
        )));
    }
    let names: Vec<String> = if k <= EMOTIONS.len() {
        EMOTIONS[..k].iter().map(|s| s.to_string()).collect()
    } else {
        (0..k).map(|j| format!("e{j}")).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let records = (0..n)
        .map(|i| Record {
            id: format!("{language}-{i:05}"),
            text: format!("synthetic record {i}"),
            labels: (0..k).map(|_| u8::from(rng.random_bool(density))).collect(),
        })
        .collect();
    LabeledDataset::new(language, EmotionSchema::new(names)?, records)
}

pub fn synth_embeddings(ds: &LabeledDataset, params: &SynthParams) -> Result<EmbeddingSet> {
    let k = ds.schema().k();
    let d = params.d;
    if !(params.noise.is_finite() && params.noise >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise must be a non-negative real, got {}",
            params.noise
        )));
    }
    let basis = synth_basis(d, k, params.seed)?;
    let noise =
        Normal::new(0.0, params.noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(1);

    let per = match params.variant {
        Variant::Shared => 1,
        Variant::PerEmotion => k,
    };
    let mut data = Vec::with_capacity(ds.len() * per * d);
    let mut base = vec![0.0f64; d];
    for record in ds.records() {
        base.iter_mut().for_each(|x| *x = 0.0);
        for (j, _) in record.labels.iter().enumerate().filter(|(_, &l)| l == 1) {
            base.iter_mut().zip(&basis[j]).for_each(|(x, b)| *x += b);
        }
        for emo in basis.iter().take(per) {
            for (c, &b) in base.iter().enumerate() {
                let mut v = b;
                if params.variant == Variant::PerEmotion {
                    v += emo[c];
                }
                if params.noise > 0.0 {
                    v += noise.sample(&mut rng);
                }
                data.push(v as f32);
            }
        }
    }

    let vectors = Array2::from_shape_vec((ds.len() * per, d), data)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let meta = EmbeddingMeta {
        encoder: "synthetic".into(),
        template_id: None,
        emotions: ds.schema().emotions().to_vec(),
        created: Some(format!("synth seed={} noise={}", params.seed, params.noise)),
        extra: Default::default(),
    };
    EmbeddingSet::new(
        params.variant,
        ds.records().iter().map(|r| r.id.clone()).collect(),
        vectors,
        meta,
    )
}
