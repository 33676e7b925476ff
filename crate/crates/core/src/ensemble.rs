//! Weighted voting over member prediction matrices.
//!
//! Every member casts `+1` for a predicted label and `-1` for its absence; the
//! ensemble predicts 1 exactly when the weighted sum is strictly positive, so
//! a tied vote resolves to 0.

use ndarray::Array2;

use crate::dataset::ScoreTable;
use crate::error::{Error, Result};
use crate::metrics::language_average;

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub name: String,
    pub predictions: Array2<u8>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    members: Vec<Member>,
    weight_source: String,
}

impl EnsembleSpec {
    /// Validates shapes and weights. If every weight is zero, all members are
    /// reweighted to 1.0.
    pub fn new(mut members: Vec<Member>, weight_source: impl Into<String>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidArgument("ensemble needs at least one member".into()))?;
        let shape = first.predictions.dim();
        for m in &members {
            if m.predictions.dim() != shape {
                return Err(Error::Shape(format!(
                    "member `{}` has shape {:?}, expected {shape:?}",
                    m.name,
                    m.predictions.dim()
                )));
            }
            if !(m.weight.is_finite() && m.weight >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "member `{}` has invalid weight {}",
                    m.name, m.weight
                )));
            }
        }
        if members.iter().all(|m| m.weight == 0.0) {
            members.iter_mut().for_each(|m| m.weight = 1.0);
        }
        Ok(EnsembleSpec {
            members,
            weight_source: weight_source.into(),
        })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn weight_source(&self) -> &str {
        &self.weight_source
    }
}

/// Vote margin `s = Σ w_i · v_i` for one cell's member votes.
pub fn vote_margin(votes: impl IntoIterator<Item = (u8, f64)>) -> f64 {
    votes
        .into_iter()
        .map(|(y, w)| if y == 1 { w } else { -w })
        .sum()
}

pub fn weighted_vote(spec: &EnsembleSpec) -> Array2<u8> {
    let shape = spec.members[0].predictions.dim();
    Array2::from_shape_fn(shape, |(i, j)| {
        let s = vote_margin(
            spec.members
                .iter()
                .map(|m| (m.predictions[[i, j]], m.weight)),
        );
        u8::from(s > 0.0)
    })
}

/// Member weights from development scores: the language's score when a
/// language is given, else the cross-language average. A missing language
/// score counts as 0; all-zero weights fall back to uniform 1.0.
pub fn dev_weights<S: AsRef<str>>(
    table: &ScoreTable,
    models: &[S],
    language: Option<&str>,
) -> Result<Vec<f64>> {
    let mut weights = models
        .iter()
        .map(|m| match language {
            Some(lang) => Ok(table.score(m.as_ref(), lang)?.unwrap_or(0.0)),
            None => language_average(table, m.as_ref()),
        })
        .collect::<Result<Vec<_>>>()?;
    if weights.iter().all(|&w| w == 0.0) {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn member(name: &str, p: Array2<u8>, w: f64) -> Member {
        Member {
            name: name.into(),
            predictions: p,
            weight: w,
        }
    }

    #[test]
    fn unanimous_and_tie() {
        let spec = EnsembleSpec::new(
            vec![
                member("a", array![[1u8, 1]], 1.0),
                member("b", array![[1u8, 0]], 1.0),
            ],
            "test",
        )
        .unwrap();
        assert_eq!(weighted_vote(&spec), array![[1u8, 0]]);
    }

    #[test]
    fn appendix_weighted_example() {
        let s = vote_margin([(1, 55.40), (0, 54.19), (0, 55.39), (1, 53.52)]);
        assert!((s - (-0.66)).abs() < 1e-9);
        let spec = EnsembleSpec::new(
            vec![
                member("v2-all", array![[1u8]], 55.40),
                member("v1-lang", array![[0u8]], 54.19),
                member("v2-lang", array![[0u8]], 55.39),
                member("v1-all", array![[1u8]], 53.52),
            ],
            "dev",
        )
        .unwrap();
        assert_eq!(weighted_vote(&spec), array![[0u8]]);
    }

    #[test]
    fn single_member_identity_and_zero_fallback() {
        let p = array![[1u8, 0, 1], [0, 0, 1]];
        let spec = EnsembleSpec::new(vec![member("a", p.clone(), 0.0)], "x").unwrap();
        assert_eq!(spec.members()[0].weight, 1.0);
        assert_eq!(weighted_vote(&spec), p);
    }

    #[test]
    fn invalid_specs() {
        assert!(EnsembleSpec::new(vec![], "x").is_err());
        assert!(EnsembleSpec::new(
            vec![
                member("a", array![[1u8]], 1.0),
                member("b", array![[1u8, 0]], 1.0)
            ],
            "x"
        )
        .is_err());
        assert!(EnsembleSpec::new(vec![member("a", array![[1u8]], -1.0)], "x").is_err());
    }

    #[test]
    fn weights_from_table() {
        let t = ScoreTable::new(
            vec!["a".into(), "b".into(), "z".into()],
            vec!["x".into(), "y".into()],
            vec![
                vec![Some(50.0), Some(10.0)],
                vec![Some(40.0), None],
                vec![Some(0.0), Some(0.0)],
            ],
        )
        .unwrap();
        assert_eq!(
            dev_weights(&t, &["a", "b"], Some("x")).unwrap(),
            vec![50.0, 40.0]
        );
        assert_eq!(
            dev_weights(&t, &["a", "b"], Some("y")).unwrap(),
            vec![10.0, 0.0]
        );
        assert_eq!(
            dev_weights(&t, &["a", "b"], None).unwrap(),
            vec![30.0, 40.0]
        );
        assert_eq!(dev_weights(&t, &["z"], None).unwrap(), vec![1.0]);
        assert!(dev_weights(&t, &["nope"], None).is_err());
    }
}
