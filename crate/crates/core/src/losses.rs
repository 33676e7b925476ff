//! Class weights and imbalance-aware binary losses.
//!
//! Every loss is evaluated per (record, emotion) cell from the sigmoid
//! probability `p = σ(z)` and returns the gradient with respect to the logit
//! `z`, which is what the linear head's update consumes.

use serde::{Deserialize, Serialize};

use crate::dataset::LabelCount;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Weights of one emotion's two classes (present / absent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionWeight {
    pub pos: f64,
    pub neg: f64,
}

impl EmotionWeight {
    pub const UNIT: EmotionWeight = EmotionWeight { pos: 1.0, neg: 1.0 };

    pub fn for_label(&self, y: u8) -> f64 {
        if y == 1 {
            self.pos
        } else {
            self.neg
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    weights: Vec<EmotionWeight>,
}

impl ClassWeights {
    pub fn uniform(k: usize) -> Self {
        ClassWeights {
            weights: vec![EmotionWeight::UNIT; k],
        }
    }

    pub fn get(&self, emotion: usize) -> EmotionWeight {
        self.weights[emotion]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmotionWeight> {
        self.weights.iter()
    }
}

/// `w = N / (|class| · 2)` for each emotion's present and absent class.
/// A class with no samples gets weight `N`.
pub fn class_weights(counts: &[LabelCount], n: usize) -> Result<ClassWeights> {
    if n == 0 {
        return Err(Error::InvalidArgument("class weights need N > 0".into()));
    }
    let total = n as f64;
    let one = |count: usize| {
        if count == 0 {
            total
        } else {
            total / (count as f64 * 2.0)
        }
    };
    let weights = counts
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if c.total() != n {
                return Err(Error::InvalidArgument(format!(
                    "emotion {j}: {} + {} != N = {n}",
                    c.positives, c.negatives
                )));
            }
            Ok(EmotionWeight {
                pos: one(c.positives),
                neg: one(c.negatives),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassWeights { weights })
}

/// Loss value and its derivative with respect to the logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams { gamma: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricParams {
    pub gamma_pos: f64,
    pub gamma_neg: f64,
    pub margin: f64,
}

impl Default for AsymmetricParams {
    fn default() -> Self {
        AsymmetricParams {
            gamma_pos: 0.0,
            gamma_neg: 4.0,
            margin: 0.05,
        }
    }
}

pub fn weighted_bce(p: f64, y: u8, w: EmotionWeight) -> LossGrad {
    let p = clamp_prob(p);
    let wy = w.for_label(y);
    let yf = f64::from(y);
    LossGrad {
        loss: -wy * (yf * p.ln() + (1.0 - yf) * (1.0 - p).ln()),
        grad: wy * (p - yf),
    }
}

/// `-α (1 - p_t)^γ log p_t` with `α = w_y`.
pub fn focal_loss(p: f64, y: u8, params: FocalParams, w: EmotionWeight) -> LossGrad {
    let alpha = w.for_label(y);
    let (loss, grad) = modulated_ce(clamp_prob(p), y, params.gamma);
    LossGrad {
        loss: alpha * loss,
        grad: alpha * grad,
    }
}

/// Unweighted `-(1 - p_t)^γ log p_t` and its logit derivative.
///
/// With `dp_t/dz = ±p_t(1 - p_t)`:
/// `dL/dz = ±[γ (1 - p_t)^γ p_t log p_t - (1 - p_t)^(γ+1)]`.
fn modulated_ce(p: f64, y: u8, gamma: f64) -> (f64, f64) {
    let (pt, sign) = if y == 1 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let q = 1.0 - pt;
    let log_pt = pt.ln();
    let mod_ = q.powf(gamma);
    let loss = -mod_ * log_pt;
    let grad = sign * (gamma * mod_ * pt * log_pt - mod_ * q);
    (loss, grad)
}

/// Positive term `-(1 - p)^γ⁺ log p`; negative term `-p_m^γ⁻ log(1 - p_m)`
/// with `p_m = max(p - m, 0)`. The hinge contributes zero gradient below `m`.
pub fn asymmetric_loss(p: f64, y: u8, params: AsymmetricParams) -> LossGrad {
    let p = clamp_prob(p);
    if y == 1 {
        let (loss, grad) = modulated_ce(p, 1, params.gamma_pos);
        return LossGrad { loss, grad };
    }
    let pm = p - params.margin;
    if pm <= 0.0 {
        return LossGrad {
            loss: 0.0,
            grad: 0.0,
        };
    }
    let g = params.gamma_neg;
    let log_q = (1.0 - pm).ln();
    let loss = -pm.powf(g) * log_q;
    // dL/dp_m = p_m^γ / (1 - p_m) - γ p_m^(γ-1) log(1 - p_m); dp_m/dz = p(1 - p).
    let dl_dpm = pm.powf(g) / (1.0 - pm)
        - if g == 0.0 {
            0.0
        } else {
            g * pm.powf(g - 1.0) * log_q
        };
    LossGrad {
        loss,
        grad: dl_dpm * p * (1.0 - p),
    }
}

/// Loss selection for training.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LossKind {
    #[default]
    WeightedBce,
    Focal(FocalParams),
    Asymmetric(AsymmetricParams),
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be >= 0, got {v}"
                )))
            }
        };
        match self {
            LossKind::WeightedBce => Ok(()),
            LossKind::Focal(f) => check("gamma", f.gamma),
            LossKind::Asymmetric(a) => {
                check("gamma_pos", a.gamma_pos)?;
                check("gamma_neg", a.gamma_neg)?;
                if !(0.0..1.0).contains(&a.margin) {
                    return Err(Error::InvalidArgument(format!(
                        "margin must lie in [0, 1), got {}",
                        a.margin
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, p: f64, y: u8, w: EmotionWeight) -> LossGrad {
        match *self {
            LossKind::WeightedBce => weighted_bce(p, y, w),
            LossKind::Focal(params) => focal_loss(p, y, params, w),
            LossKind::Asymmetric(params) => asymmetric_loss(p, y, params),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::WeightedBce => "WEIGHTED_BCE",
            LossKind::Focal(_) => "FOCAL",
            LossKind::Asymmetric(_) => "ASYMMETRIC",
        }
    }
}
