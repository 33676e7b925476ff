//! Gradient-boosted regression trees, one-vs-rest per emotion.
//!
//! Each emotion's chain starts at the weighted prior log-odds. Every round
//! fits a regression tree to the residuals `y - p` (optionally weighted by the
//! class weights) using exact greedy splits on weighted variance reduction,
//! then sets each leaf to the weighted Newton step
//! `Σ w(y - p) / Σ w p(1 - p)`, clamped to `±LEAF_CLAMP`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::embedstore::EmbeddingSet;
use crate::error::{Error, Result};
use crate::losses::{sigmoid, ClassWeights};
use crate::par;
use crate::trainer::{check_threshold, gather, threshold_probs};

pub const LEAF_CLAMP: f64 = 4.0;
/// The prior probability is kept inside `[PRIOR_EPS, 1 - PRIOR_EPS]`.
pub const PRIOR_EPS: f64 = 1e-6;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
    pub use_class_weights: bool,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            min_samples_leaf: 2,
            seed: 42,
            use_class_weights: true,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument(
                "min_samples_leaf must be >= 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    /// Output for one feature vector; `x[feature] <= threshold` goes left.
    pub fn eval<F: Fn(usize) -> f64>(&self, x: F) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x(*feature) <= *threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        match self {
            Node::Leaf { value } => vec![*value],
            Node::Split { left, right, .. } => {
                let mut v = left.leaves();
                v.extend(right.leaves());
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionBooster {
    pub base_score: f64,
    pub trees: Vec<Node>,
    /// Weighted mean logistic loss before the first tree and after each one.
    pub loss_log: Vec<f64>,
}

impl EmotionBooster {
    pub fn raw_score<F: Fn(usize) -> f64 + Copy>(&self, learning_rate: f64, x: F) -> f64 {
        self.base_score + learning_rate * self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub emotions: Vec<String>,
    pub dim: usize,
    pub variant: crate::embedstore::Variant,
    pub learning_rate: f64,
    pub boosters: Vec<EmotionBooster>,
    pub config: GbdtConfig,
}

struct Fit<'a> {
    x: &'a Array2<f64>,
    w: &'a [f64],
    residual: Vec<f64>,
    hess: Vec<f64>,
    max_depth: usize,
    min_leaf: usize,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Fit<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let (num, den) = idx.iter().fold((0.0, 0.0), |(n, d), &i| {
            (
                n + self.w[i] * self.residual[i],
                d + self.w[i] * self.hess[i],
            )
        });
        let value = if den > 1e-12 {
            num / den
        } else if num == 0.0 {
            0.0
        } else {
            num.signum() * LEAF_CLAMP
        };
        Node::Leaf {
            value: value.clamp(-LEAF_CLAMP, LEAF_CLAMP),
        }
    }

    fn best_for_feature(&self, idx: &[usize], f: usize) -> Option<Candidate> {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
        let (tw, tr) = order.iter().fold((0.0, 0.0), |(w, r), &i| {
            (w + self.w[i], r + self.w[i] * self.residual[i])
        });
        let parent = tr * tr / tw;
        let (mut lw, mut lr) = (0.0, 0.0);
        let mut best: Option<Candidate> = None;
        for pos in 0..order.len() - 1 {
            let i = order[pos];
            lw += self.w[i];
            lr += self.w[i] * self.residual[i];
            let left_n = pos + 1;
            let right_n = order.len() - left_n;
            let (a, b) = (self.x[[i, f]], self.x[[order[pos + 1], f]]);
            if a == b || left_n < self.min_leaf || right_n < self.min_leaf {
                continue;
            }
            let (rw, rr) = (tw - lw, tr - lr);
            if lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let gain = lr * lr / lw + rr * rr / rw - parent;
            if best.as_ref().is_none_or(|c| gain > c.gain) {
                best = Some(Candidate {
                    gain,
                    feature: f,
                    threshold: a + (b - a) / 2.0,
                });
            }
        }
        best
    }

    fn build(&self, idx: &[usize], depth: usize) -> Node {
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return self.leaf(idx);
        }
        let per_feature = par::map_range(self.x.ncols(), |f| self.best_for_feature(idx, f));
        let mut best: Option<Candidate> = None;
        for c in per_feature.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
        match best {
            Some(c) if c.gain > MIN_GAIN => {
                let (left, right): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| self.x[[i, c.feature]] <= c.threshold);
                Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: Box::new(self.build(&left, depth + 1)),
                    right: Box::new(self.build(&right, depth + 1)),
                }
            }
            _ => self.leaf(idx),
        }
    }
}

fn weighted_logloss(score: &[f64], y: &[u8], w: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((&s, &yi), &wi) in score.iter().zip(y).zip(w) {
        // -log σ(s) = softplus(-s), -log(1 - σ(s)) = softplus(s)
        let margin = if yi == 1 { -s } else { s };
        let l = if margin > 0.0 {
            margin + (-margin).exp().ln_1p()
        } else {
            margin.exp().ln_1p()
        };
        num += wi * l;
        den += wi;
    }
    num / den
}

fn train_chain(x: &Array2<f64>, y: &[u8], w: &[f64], cfg: &GbdtConfig) -> EmotionBooster {
    let n = y.len();
    let (pos, tot) = y.iter().zip(w).fold((0.0, 0.0), |(p, t), (&yi, &wi)| {
        (p + wi * f64::from(yi), t + wi)
    });
    let prior = (pos / tot).clamp(PRIOR_EPS, 1.0 - PRIOR_EPS);
    let base_score = (prior / (1.0 - prior)).ln();

    let mut score = vec![base_score; n];
    let mut loss_log = vec![weighted_logloss(&score, y, w)];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let all: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.n_trees {
        let p: Vec<f64> = score.iter().map(|&s| sigmoid(s)).collect();
        let fit = Fit {
            x,
            w,
            residual: y
                .iter()
                .zip(&p)
                .map(|(&yi, &pi)| f64::from(yi) - pi)
                .collect(),
            hess: p.iter().map(|&pi| pi * (1.0 - pi)).collect(),
            max_depth: cfg.max_depth,
            min_leaf: cfg.min_samples_leaf,
        };
        let tree = fit.build(&all, 0);
        for (i, s) in score.iter_mut().enumerate() {
            *s += cfg.learning_rate * tree.eval(|f| x[[i, f]]);
        }
        loss_log.push(weighted_logloss(&score, y, w));
        trees.push(tree);
    }
    EmotionBooster {
        base_score,
        trees,
        loss_log,
    }
}

pub fn train_gbdt(
    embs: &EmbeddingSet,
    ds: &LabeledDataset,
    cfg: &GbdtConfig,
    class_weights: &ClassWeights,
) -> Result<TreeEnsembleModel> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot train on an empty dataset".into(),
        ));
    }
    if embs.d() == 0 {
        return Err(Error::InvalidArgument("embedding dimension is 0".into()));
    }
    let k = ds.schema().k();
    if class_weights.len() != k {
        return Err(Error::Shape(format!(
            "{} class weights for {k} emotions",
            class_weights.len()
        )));
    }
    if embs.variant() == crate::embedstore::Variant::PerEmotion
        && embs.meta().emotions != ds.schema().emotions()
    {
        return Err(Error::Shape(
            "embedding emotion order differs from schema".into(),
        ));
    }
    let rows = embs.align(ds)?;
    let labels = ds.label_matrix();
    let shared =
        (embs.variant() == crate::embedstore::Variant::Shared).then(|| gather(embs, &rows, 0));

    let boosters = par::map_range(k, |e| {
        let own;
        let x = match &shared {
            Some(x) => x,
            None => {
                own = gather(embs, &rows, e);
                &own
            }
        };
        let y: Vec<u8> = labels.column(e).to_vec();
        let ew = class_weights.get(e);
        let w: Vec<f64> = y
            .iter()
            .map(|&yi| {
                if cfg.use_class_weights {
                    ew.for_label(yi)
                } else {
                    1.0
                }
            })
            .collect();
        train_chain(x, &y, &w, cfg)
    });

    Ok(TreeEnsembleModel {
        emotions: ds.schema().emotions().to_vec(),
        dim: embs.d(),
        variant: embs.variant(),
        learning_rate: cfg.learning_rate,
        boosters,
        config: *cfg,
    })
}

pub fn predict_gbdt_proba(model: &TreeEnsembleModel, embs: &EmbeddingSet) -> Result<Array2<f64>> {
    if embs.d() != model.dim {
        return Err(Error::Shape(format!(
            "model expects dimension {}, embeddings have {}",
            model.dim,
            embs.d()
        )));
    }
    if embs.variant() != model.variant {
        return Err(Error::Shape(format!(
            "model was trained on {} embeddings, got {}",
            model.variant,
            embs.variant()
        )));
    }
    let k = model.emotions.len();
    let rows = par::map_range(embs.n(), |i| {
        (0..k)
            .map(|e| {
                let x = embs.row(i, e);
                sigmoid(model.boosters[e].raw_score(model.learning_rate, |f| f64::from(x[f])))
            })
            .collect::<Vec<_>>()
    });
    Array2::from_shape_vec((embs.n(), k), rows.into_iter().flatten().collect())
        .map_err(|e| Error::Shape(e.to_string()))
}

pub fn predict_gbdt(
    model: &TreeEnsembleModel,
    embs: &EmbeddingSet,
    threshold: f64,
) -> Result<(Array2<f64>, Array2<u8>)> {
    check_threshold(threshold)?;
    let probs = predict_gbdt_proba(model, embs)?;
    let labels = threshold_probs(&probs, threshold);
    Ok((probs, labels))
}
