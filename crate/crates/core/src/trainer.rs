//! Linear sigmoid heads over frozen embeddings.
//!
//! Each emotion `i` gets its own `(W_i, b_i)` and probability `σ(W_i·x + b_i)`.
//! Three training strategies:
//!
//! * `MO`: one pass over shared embeddings updates every emotion per batch.
//! * `BR`: each emotion is trained alone on shared embeddings with its own
//!   shuffle stream.
//! * `PER_EMOTION_EMB`: like `BR`, but emotion `i` sees the rows that were
//!   embedded with the emotion-`i` prompt.
//!
//! Optimization is plain mini-batch gradient descent from zero weights, with a
//! linear warmup followed by linear decay to zero.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::embedstore::{EmbeddingSet, Variant};
use crate::error::{Error, Result};
use crate::losses::{sigmoid, ClassWeights, EmotionWeight, LossKind};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "MO")]
    MultiOutput,
    #[serde(rename = "BR")]
    BinaryRelevance,
    #[serde(rename = "PER_EMOTION_EMB")]
    PerEmotionEmbedding,
}

impl Strategy {
    pub fn required_variant(self) -> Variant {
        match self {
            Strategy::PerEmotionEmbedding => Variant::PerEmotion,
            _ => Variant::Shared,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "MO" => Ok(Strategy::MultiOutput),
            "BR" => Ok(Strategy::BinaryRelevance),
            "PER_EMOTION_EMB" => Ok(Strategy::PerEmotionEmbedding),
            _ => Err(Error::InvalidArgument(format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub strategy: Strategy,
    pub loss: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            strategy: Strategy::MultiOutput,
            loss: LossKind::WeightedBce,
            learning_rate: 0.05,
            epochs: 100,
            batch_size: 32,
            warmup_fraction: 0.1,
            seed: 42,
            threshold: 0.5,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.warmup_fraction) {
            return Err(Error::InvalidArgument(format!(
                "warmup_fraction must lie in [0, 0.5], got {}",
                self.warmup_fraction
            )));
        }
        check_threshold(self.threshold)?;
        self.loss.validate()
    }
}

pub(crate) fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {t}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedHead {
    pub strategy: Strategy,
    pub emotions: Vec<String>,
    pub dim: usize,
    /// One weight vector per emotion.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    /// Mean training loss per epoch, summed over emotions.
    pub loss_log: Vec<f64>,
    pub config: HeadConfig,
}

/// Learning-rate multiplier for step `step` of `total`.
///
/// Steps `0..warmup` ramp linearly up to 1 (`(step + 1) / warmup`), the rest
/// decay linearly towards 0 (`(total - step) / (total - warmup)`).
pub fn lr_factor(step: usize, total: usize, warmup: usize) -> f64 {
    if step < warmup {
        (step + 1) as f64 / warmup as f64
    } else if total > warmup {
        (total - step) as f64 / (total - warmup) as f64
    } else {
        0.0
    }
}

pub fn schedule_lengths(n: usize, cfg: &HeadConfig) -> (usize, usize) {
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let warmup = (cfg.warmup_fraction * total as f64).ceil() as usize;
    (total, warmup)
}

/// One independently shuffled training job over a set of emotions.
struct Task<'a> {
    /// Feature matrix per emotion in the task.
    features: Vec<&'a Array2<f64>>,
    emotions: Vec<usize>,
    stream: u64,
}

struct TaskResult {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    loss_log: Vec<f64>,
}

fn run_task(
    task: &Task<'_>,
    labels: &Array2<u8>,
    class_weights: &ClassWeights,
    cfg: &HeadConfig,
) -> TaskResult {
    let n = labels.nrows();
    let d = task.features[0].ncols();
    let m = task.emotions.len();
    let mut weights = vec![vec![0.0f64; d]; m];
    let mut biases = vec![0.0f64; m];
    let mut loss_log = Vec::with_capacity(cfg.epochs);

    let (total, warmup) = schedule_lengths(n, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(task.stream);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad_w = vec![0.0f64; d];
    let ew: Vec<EmotionWeight> = task
        .emotions
        .iter()
        .map(|&e| class_weights.get(e))
        .collect();

    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let lr = cfg.learning_rate * lr_factor(step, total, warmup);
            let scale = 1.0 / batch.len() as f64;
            for (t, &emotion) in task.emotions.iter().enumerate() {
                let x = task.features[t];
                grad_w.iter_mut().for_each(|g| *g = 0.0);
                let mut grad_b = 0.0;
                for &i in batch {
                    let row = x.row(i);
                    let z = dot(&weights[t], row) + biases[t];
                    let lg = cfg.loss.eval(sigmoid(z), labels[[i, emotion]], ew[t]);
                    epoch_loss += lg.loss;
                    grad_w
                        .iter_mut()
                        .zip(row.iter())
                        .for_each(|(g, &v)| *g += lg.grad * v);
                    grad_b += lg.grad;
                }
                weights[t]
                    .iter_mut()
                    .zip(&grad_w)
                    .for_each(|(w, g)| *w -= lr * scale * g);
                biases[t] -= lr * scale * grad_b;
            }
            step += 1;
        }
        loss_log.push(epoch_loss / n as f64);
    }
    TaskResult {
        weights,
        biases,
        loss_log,
    }
}

fn dot(w: &[f64], x: ArrayView1<'_, f64>) -> f64 {
    w.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

fn check_embeddings(strategy: Strategy, embs: &EmbeddingSet, emotions: &[String]) -> Result<()> {
    let want = strategy.required_variant();
    if embs.variant() != want {
        return Err(Error::Shape(format!(
            "strategy {strategy:?} needs {want} embeddings, got {}",
            embs.variant()
        )));
    }
    if want == Variant::PerEmotion && embs.meta().emotions != emotions {
        return Err(Error::Shape(format!(
            "embedding emotion order {:?} differs from schema {:?}",
            embs.meta().emotions,
            emotions
        )));
    }
    Ok(())
}

/// Rows of `embs` for the given records and emotion, widened to f64.
pub(crate) fn gather(embs: &EmbeddingSet, rows: &[usize], emotion: usize) -> Array2<f64> {
    let d = embs.d();
    let mut out = Array2::zeros((rows.len(), d));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i)
            .iter_mut()
            .zip(embs.row(r, emotion).iter())
            .for_each(|(o, &v)| *o = f64::from(v));
    }
    out
}

pub fn train_head(
    embs: &EmbeddingSet,
    ds: &LabeledDataset,
    cfg: &HeadConfig,
    class_weights: &ClassWeights,
) -> Result<TrainedHead> {
    cfg.validate()?;
    let k = ds.schema().k();
    let emotions = ds.schema().emotions().to_vec();
    check_embeddings(cfg.strategy, embs, &emotions)?;
    if class_weights.len() != k {
        return Err(Error::Shape(format!(
            "{} class weights for {k} emotions",
            class_weights.len()
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot train on an empty dataset".into(),
        ));
    }
    let rows = embs.align(ds)?;
    let labels = ds.label_matrix();

    let shared;
    let per_emotion: Vec<Array2<f64>>;
    let tasks: Vec<Task<'_>> = match cfg.strategy {
        Strategy::MultiOutput => {
            shared = gather(embs, &rows, 0);
            vec![Task {
                features: vec![&shared; k],
                emotions: (0..k).collect(),
                stream: 0,
            }]
        }
        Strategy::BinaryRelevance => {
            shared = gather(embs, &rows, 0);
            (0..k)
                .map(|e| Task {
                    features: vec![&shared],
                    emotions: vec![e],
                    stream: e as u64 + 1,
                })
                .collect()
        }
        Strategy::PerEmotionEmbedding => {
            per_emotion = par::map_range(k, |e| gather(embs, &rows, e));
            per_emotion
                .iter()
                .enumerate()
                .map(|(e, x)| Task {
                    features: vec![x],
                    emotions: vec![e],
                    stream: e as u64 + 1,
                })
                .collect()
        }
    };

    let results = par::map_slice(&tasks, |t| run_task(t, &labels, class_weights, cfg));

    let mut weights = Vec::with_capacity(k);
    let mut biases = Vec::with_capacity(k);
    let mut loss_log = vec![0.0; cfg.epochs];
    for r in results {
        weights.extend(r.weights);
        biases.extend(r.biases);
        loss_log
            .iter_mut()
            .zip(&r.loss_log)
            .for_each(|(a, b)| *a += b);
    }
    Ok(TrainedHead {
        strategy: cfg.strategy,
        emotions,
        dim: embs.d(),
        weights,
        biases,
        loss_log,
        config: *cfg,
    })
}

/// `n × k` probabilities for every record in `embs`.
pub fn predict_proba(head: &TrainedHead, embs: &EmbeddingSet) -> Result<Array2<f64>> {
    check_embeddings(head.strategy, embs, &head.emotions)?;
    if embs.d() != head.dim {
        return Err(Error::Shape(format!(
            "head expects dimension {}, embeddings have {}",
            head.dim,
            embs.d()
        )));
    }
    let k = head.emotions.len();
    let rows = par::map_range(embs.n(), |i| {
        (0..k)
            .map(|e| {
                let x = embs.row(i, e);
                let z: f64 = head.weights[e]
                    .iter()
                    .zip(x.iter())
                    .map(|(w, &v)| w * f64::from(v))
                    .sum::<f64>()
                    + head.biases[e];
                sigmoid(z)
            })
            .collect::<Vec<_>>()
    });
    Array2::from_shape_vec((embs.n(), k), rows.into_iter().flatten().collect())
        .map_err(|e| Error::Shape(e.to_string()))
}

/// 1 where the probability is at least `threshold`.
pub fn threshold_probs(probs: &Array2<f64>, threshold: f64) -> Array2<u8> {
    probs.mapv(|p| u8::from(p >= threshold))
}

pub fn predict(head: &TrainedHead, embs: &EmbeddingSet, threshold: f64) -> Result<Array2<u8>> {
    check_threshold(threshold)?;
    Ok(threshold_probs(&predict_proba(head, embs)?, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{EmotionSchema, Record};
    use crate::embedstore::EmbeddingMeta;

    fn tiny() -> (LabeledDataset, EmbeddingSet) {
        let schema = EmotionSchema::new(["joy", "fear"]).unwrap();
        let records = vec![
            Record {
                id: "a".into(),
                text: String::new(),
                labels: vec![1, 0],
            },
            Record {
                id: "b".into(),
                text: String::new(),
                labels: vec![0, 1],
            },
            Record {
                id: "c".into(),
                text: String::new(),
                labels: vec![1, 1],
            },
        ];
        let ds = LabeledDataset::new("xx", schema, records).unwrap();
        let embs = EmbeddingSet::new(
            Variant::Shared,
            vec!["a".into(), "b".into(), "c".into()],
            Array2::from_shape_vec((3, 3), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.5])
                .unwrap(),
            EmbeddingMeta {
                emotions: vec!["joy".into(), "fear".into()],
                ..Default::default()
            },
        )
        .unwrap();
        (ds, embs)
    }

    #[test]
    fn zero_epochs_is_zero_head() {
        let (ds, embs) = tiny();
        let cfg = HeadConfig {
            epochs: 0,
            ..Default::default()
        };
        let head = train_head(&embs, &ds, &cfg, &ClassWeights::uniform(2)).unwrap();
        assert!(head.weights.iter().flatten().all(|&w| w == 0.0));
        let p = predict_proba(&head, &embs).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
        let y = predict(&head, &embs, 0.5).unwrap();
        assert!(y.iter().all(|&v| v == 1));
    }

    #[test]
    fn hand_computed_probability() {
        let (_, embs) = tiny();
        let head = TrainedHead {
            strategy: Strategy::MultiOutput,
            emotions: vec!["joy".into(), "fear".into()],
            dim: 3,
            weights: vec![vec![0.5, -1.0, 2.0], vec![0.0, 0.0, 0.0]],
            biases: vec![0.25, 40.0],
            loss_log: vec![],
            config: HeadConfig::default(),
        };
        let p = predict_proba(&head, &embs).unwrap();
        // record c: 0.5·1 - 1·1 + 2·0.5 + 0.25 = 0.75
        assert!((p[[2, 0]] - 1.0 / (1.0 + (-0.75f64).exp())).abs() < 1e-15);
        assert!(p[[0, 1]] > 1.0 - 1e-15);
        let y = threshold_probs(
            &Array2::from_shape_vec((1, 2), vec![0.4, 0.6]).unwrap(),
            0.5,
        );
        assert_eq!(y.into_raw_vec_and_offset().0, vec![0, 1]);
    }

    #[test]
    fn schedule_shape() {
        assert_eq!(lr_factor(0, 10, 2), 0.5);
        assert_eq!(lr_factor(1, 10, 2), 1.0);
        assert_eq!(lr_factor(2, 10, 2), 1.0);
        assert_eq!(lr_factor(9, 10, 2), 1.0 / 8.0);
        assert_eq!(lr_factor(0, 10, 0), 1.0);
        let cfg = HeadConfig {
            epochs: 100,
            batch_size: 32,
            ..Default::default()
        };
        assert_eq!(schedule_lengths(200, &cfg), (700, 70));
    }

    #[test]
    fn mismatches_rejected() {
        let (ds, embs) = tiny();
        let cfg = HeadConfig {
            strategy: Strategy::PerEmotionEmbedding,
            ..Default::default()
        };
        assert!(train_head(&embs, &ds, &cfg, &ClassWeights::uniform(2)).is_err());
        assert!(train_head(
            &embs,
            &ds,
            &HeadConfig::default(),
            &ClassWeights::uniform(3)
        )
        .is_err());
        let missing = ds.subset(&[0]).unwrap();
        let other = embs.select(&[1]).unwrap();
        assert!(train_head(
            &other,
            &missing,
            &HeadConfig::default(),
            &ClassWeights::uniform(2)
        )
        .is_err());
        let bad = HeadConfig {
            warmup_fraction: 0.6,
            ..Default::default()
        };
        assert!(train_head(&embs, &ds, &bad, &ClassWeights::uniform(2)).is_err());
    }
}
