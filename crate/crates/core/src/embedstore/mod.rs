//! Embedding sets aligned to dataset records.
//!
//! A set is either `Shared` (one row per record) or `PerEmotion` (one row per
//! record and emotion, record-major). See [`format`] for the on-disk layout,
//! [`prompt`] for encoder instruction templates and [`synth`] for a
//! deterministic stand-in encoder.

pub mod format;
pub mod prompt;
pub mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

pub use format::{read_embeddings, write_embeddings};
pub use prompt::{render_prompt, PromptTemplate};
pub use synth::{synth_dataset, synth_embeddings, SynthParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    Shared,
    PerEmotion,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Shared => "SHARED",
            Variant::PerEmotion => "PER_EMOTION",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "SHARED" => Ok(Variant::Shared),
            "PER_EMOTION" => Ok(Variant::PerEmotion),
            _ => Err(Error::InvalidArgument(format!(
                "unknown embedding variant `{s}`"
            ))),
        }
    }
}

/// Provenance carried alongside the vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EmbeddingMeta {
    pub encoder: String,
    #[serde(default)]
    pub template_id: Option<String>,
    /// Emotion order used for `PerEmotion` rows (and recorded for `Shared`).
    pub emotions: Vec<String>,
    #[serde(default)]
    pub created: Option<String>,
    /// Pass-through keys such as encoder API settings or normalization flags.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    variant: Variant,
    ids: Vec<String>,
    vectors: Array2<f32>,
    meta: EmbeddingMeta,
}

impl EmbeddingSet {
    pub fn new(
        variant: Variant,
        ids: Vec<String>,
        vectors: Array2<f32>,
        meta: EmbeddingMeta,
    ) -> Result<Self> {
        let n = ids.len();
        let k = meta.emotions.len();
        let expected = match variant {
            Variant::Shared => n,
            Variant::PerEmotion => {
                if k == 0 {
                    return Err(Error::Format(
                        "PER_EMOTION set needs an emotion order".into(),
                    ));
                }
                n * k
            }
        };
        if vectors.nrows() != expected {
            return Err(Error::Format(format!(
                "{variant} set with n={n}, k={k} needs {expected} rows, found {}",
                vectors.nrows()
            )));
        }
        if let Some(bad) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok(EmbeddingSet {
            variant,
            ids,
            vectors,
            meta,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn d(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn k(&self) -> usize {
        self.meta.emotions.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn meta(&self) -> &EmbeddingMeta {
        &self.meta
    }

    pub fn vectors(&self) -> &Array2<f32> {
        &self.vectors
    }

    /// Feature row for `record`; for `PerEmotion` sets the row prompted with
    /// `emotion`, for `Shared` sets `emotion` is ignored.
    pub fn row(&self, record: usize, emotion: usize) -> ArrayView1<'_, f32> {
        match self.variant {
            Variant::Shared => self.vectors.row(record),
            Variant::PerEmotion => self.vectors.row(record * self.k() + emotion),
        }
    }

    pub fn id_index(&self) -> Result<HashMap<&str, usize>> {
        let mut map = HashMap::with_capacity(self.ids.len());
        for (i, id) in self.ids.iter().enumerate() {
            if map.insert(id.as_str(), i).is_some() {
                return Err(Error::Format(format!("duplicate embedding id `{id}`")));
            }
        }
        Ok(map)
    }

    /// Row indices of the dataset's records inside this set.
    pub fn align(&self, ds: &LabeledDataset) -> Result<Vec<usize>> {
        let index = self.id_index()?;
        ds.records()
            .iter()
            .map(|r| {
                index
                    .get(r.id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Shape(format!("record `{}` has no embedding", r.id)))
            })
            .collect()
    }

    /// Set restricted to `records` (record indices, in order).
    pub fn select(&self, records: &[usize]) -> Result<Self> {
        let d = self.d();
        let per = match self.variant {
            Variant::Shared => 1,
            Variant::PerEmotion => self.k(),
        };
        let mut data = Vec::with_capacity(records.len() * per * d);
        let mut ids = Vec::with_capacity(records.len());
        for &r in records {
            if r >= self.n() {
                return Err(Error::InvalidArgument(format!(
                    "record index {r} out of range"
                )));
            }
            ids.push(self.ids[r].clone());
            for e in 0..per {
                data.extend(self.row(r, e).iter().copied());
            }
        }
        let vectors = Array2::from_shape_vec((records.len() * per, d), data)
            .map_err(|e| Error::Shape(e.to_string()))?;
        EmbeddingSet::new(self.variant, ids, vectors, self.meta.clone())
    }

    /// Set restricted to the dataset's records, in dataset order.
    pub fn aligned_to(&self, ds: &LabeledDataset) -> Result<Self> {
        self.select(&self.align(ds)?)
    }

    /// Stack sets with identical variant, dimension and emotion order,
    /// prefixing each id with `<tag>/`.
    pub fn concat_tagged(parts: &[(&str, &EmbeddingSet)]) -> Result<Self> {
        let (_, first) = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let d = first.d();
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (tag, set) in parts {
            if set.variant != first.variant
                || set.d() != d
                || set.meta.emotions != first.meta.emotions
            {
                return Err(Error::Shape(format!(
                    "embedding set `{tag}` is incompatible with `{}`",
                    parts[0].0
                )));
            }
            ids.extend(set.ids.iter().map(|id| format!("{tag}/{id}")));
            data.extend(set.vectors.iter().copied());
        }
        let rows = data.len() / d.max(1);
        let vectors =
            Array2::from_shape_vec((rows, d), data).map_err(|e| Error::Shape(e.to_string()))?;
        EmbeddingSet::new(first.variant, ids, vectors, first.meta.clone())
    }

    /// Fails if any row's L2 norm deviates from 1 by more than `tol`.
    pub fn check_unit_norm(&self, tol: f64) -> Result<()> {
        for (i, row) in self.vectors.rows().into_iter().enumerate() {
            let norm = row
                .iter()
                .map(|&v| f64::from(v).powi(2))
                .sum::<f64>()
                .sqrt();
            if (norm - 1.0).abs() > tol {
                return Err(Error::Format(format!(
                    "row {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(())
    }
}
