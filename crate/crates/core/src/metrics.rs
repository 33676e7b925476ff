//! Per-emotion F1, macro-F1 and cross-language aggregation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::ScoreTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionScore {
    pub emotion: String,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub language: String,
    pub n: usize,
    pub per_emotion: Vec<EmotionScore>,
    pub macro_f1: f64,
}

impl EvalReport {
    pub fn with_labels<S: AsRef<str>>(mut self, language: &str, emotions: &[S]) -> Self {
        self.language = language.to_owned();
        for (s, name) in self.per_emotion.iter_mut().zip(emotions) {
            s.emotion = name.as_ref().to_owned();
        }
        self
    }

    /// `| <language> | <macro-F1 %> |` with two decimals.
    pub fn markdown_row(&self) -> String {
        format!("| {} | {:.2} |", self.language, self.macro_f1 * 100.0)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-emotion counts and F1 = 2TP / (2TP + FP + FN); 0/0 counts as 0.
pub fn f1_scores(pred: &Array2<u8>, gold: &Array2<u8>) -> Result<EvalReport> {
    if pred.dim() != gold.dim() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs gold {:?}",
            pred.dim(),
            gold.dim()
        )));
    }
    let (n, k) = gold.dim();
    let per_emotion: Vec<EmotionScore> = (0..k)
        .map(|j| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (&p, &g) in pred.column(j).iter().zip(gold.column(j)) {
                match (p != 0, g != 0) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            EmotionScore {
                emotion: format!("{j}"),
                tp,
                fp,
                fn_,
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                f1: ratio(2 * tp, 2 * tp + fp + fn_),
            }
        })
        .collect();
    let macro_f1 = if k == 0 {
        0.0
    } else {
        per_emotion.iter().map(|s| s.f1).sum::<f64>() / k as f64
    };
    Ok(EvalReport {
        language: String::new(),
        n,
        per_emotion,
        macro_f1,
    })
}

/// Unweighted mean of a model's present language scores.
pub fn language_average(table: &ScoreTable, model: &str) -> Result<f64> {
    let present: Vec<f64> = table
        .model_scores(model)?
        .iter()
        .flatten()
        .copied()
        .collect();
    if present.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "model `{model}` has no scores"
        )));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinCount {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

/// Languages where `a` beats / trails / equals `b`, over languages where both
/// scores are present.
pub fn win_count(table: &ScoreTable, a: &str, b: &str) -> Result<WinCount> {
    let (sa, sb) = (table.model_scores(a)?, table.model_scores(b)?);
    let mut out = WinCount {
        wins: 0,
        losses: 0,
        ties: 0,
    };
    for (x, y) in sa.iter().zip(sb) {
        if let (Some(x), Some(y)) = (x, y) {
            match x.partial_cmp(y) {
                Some(std::cmp::Ordering::Greater) => out.wins += 1,
                Some(std::cmp::Ordering::Less) => out.losses += 1,
                _ => out.ties += 1,
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_and_inverted() {
        let gold = array![[1u8, 0], [0, 1], [1, 1]];
        assert_eq!(f1_scores(&gold, &gold).unwrap().macro_f1, 1.0);
        let inv = gold.mapv(|v| 1 - v);
        let r = f1_scores(&inv, &gold).unwrap();
        assert!(r.per_emotion.iter().all(|s| s.f1 == 0.0));
    }

    #[test]
    fn hand_counted() {
        // TP=2 (rows 0,1), FP=1 (row 2), FN=1 (row 3)
        let gold = array![[1u8], [1], [0], [1]];
        let pred = array![[1u8], [1], [1], [0]];
        let r = f1_scores(&pred, &gold).unwrap();
        let s = &r.per_emotion[0];
        assert_eq!((s.tp, s.fp, s.fn_), (2, 1, 1));
        assert!((s.f1 - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_division_is_zero() {
        let z = array![[0u8], [0]];
        let r = f1_scores(&z, &z).unwrap();
        assert_eq!(r.per_emotion[0].f1, 0.0);
        assert_eq!(r.macro_f1, 0.0);
    }

    #[test]
    fn shape_mismatch() {
        assert!(f1_scores(&array![[1u8, 0]], &array![[1u8]]).is_err());
    }

    #[test]
    fn averages_and_wins() {
        let t = ScoreTable::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![vec![Some(50.0), Some(10.0)], vec![Some(40.0), None]],
        )
        .unwrap();
        assert_eq!(language_average(&t, "a").unwrap(), 30.0);
        assert_eq!(language_average(&t, "b").unwrap(), 40.0);
        assert!(language_average(&t, "c").is_err());
        assert_eq!(
            win_count(&t, "a", "b").unwrap(),
            WinCount {
                wins: 1,
                losses: 0,
                ties: 0
            }
        );
        assert_eq!(
            win_count(&t, "a", "a").unwrap(),
            WinCount {
                wins: 0,
                losses: 0,
                ties: 2
            }
        );
    }
}
