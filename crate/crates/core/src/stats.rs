//! Wilcoxon signed-rank and Mann-Whitney U tests with exact small-sample
//! p-values, plus table-driven model comparisons.
//!
//! Exact distributions are built by dynamic programming over doubled ranks so
//! that average ranks on ties stay integral.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::ScoreTable;
use crate::error::{Error, Result};
use crate::metrics::language_average;

pub const WILCOXON_EXACT_MAX_N: usize = 25;
pub const MANN_WHITNEY_EXACT_MAX_CELLS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Alternative {
    TwoSided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: Method,
    pub alternative: Alternative,
    pub degenerate: bool,
}

impl TestResult {
    fn degenerate() -> Self {
        TestResult {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            method: Method::Exact,
            alternative: Alternative::TwoSided,
            degenerate: true,
        }
    }
}

/// Average ranks (1-based), doubled so they are integers, plus tie group sizes.
pub fn doubled_ranks(values: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end, doubled average = start + 1 + end
        let r = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

fn tie_term(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

fn two_sided(le: f64, ge: f64) -> f64 {
    (2.0 * le.min(ge)).min(1.0)
}

fn normal_p(stat: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((stat - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let std = Normal::standard();
    (2.0 * std.sf(z)).min(1.0)
}

/// Two-sided signed-rank test on `a - b`. The statistic is the sum of ranks of
/// positive differences; zero differences are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "paired lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument(
            "wilcoxon needs at least one pair".into(),
        ));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite difference".into()));
    }
    let n = d.len();
    if n == 0 {
        return Ok(TestResult::degenerate());
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let (ranks, ties) = doubled_ranks(&abs);
    let w2: u64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let statistic = w2 as f64 / 2.0;

    let (p_value, method) = if n <= WILCOXON_EXACT_MAX_N {
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] > 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let all = (1u64 << n) as f64;
        let le: u64 = counts[..=w2 as usize].iter().sum();
        let ge: u64 = counts[w2 as usize..].iter().sum();
        (two_sided(le as f64 / all, ge as f64 / all), Method::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
        (normal_p(statistic, mean, var), Method::NormalApprox)
    };
    Ok(TestResult {
        statistic,
        p_value,
        n_effective: n,
        method,
        alternative: Alternative::TwoSided,
        degenerate: false,
    })
}

/// Two-sided rank-sum test. The statistic is `U = #{x > y} + ½·#{x = y}`
/// counted for `xs`.
pub fn mann_whitney_u(xs: &[f64], ys: &[f64]) -> Result<TestResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidArgument(
            "mann-whitney needs two non-empty samples".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite sample value".into()));
    }
    let (n1, n2) = (xs.len(), ys.len());
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let (ranks, ties) = doubled_ranks(&pooled);
    let r1: u64 = ranks[..n1].iter().sum();
    let offset = (n1 * (n1 + 1)) as u64;
    let u2 = r1 - offset;
    let statistic = u2 as f64 / 2.0;

    let (p_value, method) = if n1 * n2 <= MANN_WHITNEY_EXACT_MAX_CELLS {
        // counts[j][s]: ways to choose j items with doubled rank sum s
        let total: u64 = ranks.iter().sum();
        let width = total as usize + 1;
        let mut counts = vec![vec![0u128; width]; n1 + 1];
        counts[0][0] = 1;
        let mut reach = 0usize;
        for (seen, &r) in ranks.iter().enumerate() {
            let r = r as usize;
            for j in (1..=n1.min(seen + 1)).rev() {
                let (lo, hi) = counts.split_at_mut(j);
                let (src, dst) = (&lo[j - 1], &mut hi[0]);
                for s in 0..=reach {
                    if src[s] > 0 {
                        dst[s + r] += src[s];
                    }
                }
            }
            reach += r;
        }
        let row = &counts[n1];
        let all: u128 = row.iter().sum();
        let le: u128 = row[..=r1 as usize].iter().sum();
        let ge: u128 = row[r1 as usize..].iter().sum();
        (
            two_sided(le as f64 / all as f64, ge as f64 / all as f64),
            Method::Exact,
        )
    } else {
        let (a, b) = (n1 as f64, n2 as f64);
        let nn = a + b;
        let mean = a * b / 2.0;
        let var = a * b / 12.0 * ((nn + 1.0) - tie_term(&ties) / (nn * (nn - 1.0)));
        (normal_p(statistic, mean, var), Method::NormalApprox)
    };
    Ok(TestResult {
        statistic,
        p_value,
        n_effective: n1 + n2,
        method,
        alternative: Alternative::TwoSided,
        degenerate: false,
    })
}

/// Sum of the first sample's ranks in the pooled ranking.
pub fn rank_sum(xs: &[f64], ys: &[f64]) -> f64 {
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let (ranks, _) = doubled_ranks(&pooled);
    ranks[..xs.len()].iter().sum::<u64>() as f64 / 2.0
}

/// Model selector for group comparisons: explicit names and/or name prefixes.
/// `rest: true` selects every model not in the other group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupSpec {
    pub names: Vec<String>,
    pub prefixes: Vec<String>,
    pub rest: bool,
}

impl GroupSpec {
    fn matches(&self, model: &str) -> bool {
        self.names.iter().any(|n| n == model) || self.prefixes.iter().any(|p| model.starts_with(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Comparison {
    /// Models whose `-`-separated names differ only in one token, `factor_a`
    /// versus `factor_b`, are paired by their shared stem and compared on
    /// their cross-language averages. `aliases` rewrites tokens first.
    FactorPairs {
        name: String,
        factor_a: String,
        factor_b: String,
        #[serde(default)]
        aliases: BTreeMap<String, String>,
    },
    /// Two models compared language by language.
    LanguagePairs { name: String, a: String, b: String },
    /// Explicit model pairs compared on cross-language averages.
    ExplicitPairs {
        name: String,
        pairs: Vec<(String, String)>,
    },
    /// Two model groups compared on cross-language averages.
    Groups {
        name: String,
        a: GroupSpec,
        b: GroupSpec,
    },
}

impl Comparison {
    pub fn name(&self) -> &str {
        match self {
            Comparison::FactorPairs { name, .. }
            | Comparison::LanguagePairs { name, .. }
            | Comparison::ExplicitPairs { name, .. }
            | Comparison::Groups { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonFile {
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub name: String,
    pub test: String,
    pub result: TestResult,
    /// Paired items as (label, a-side, b-side) or the two group member lists.
    pub pairs: Vec<(String, String, String)>,
    pub group_a: Vec<String>,
    pub group_b: Vec<String>,
    /// Rank sum of group a in the pooled ranking (group comparisons only).
    pub rank_sum: Option<f64>,
}

impl ComparisonReport {
    pub fn narrative(&self) -> String {
        let r = &self.result;
        let sym = if self.test == "wilcoxon" { "W" } else { "U" };
        let method = match r.method {
            Method::Exact => "exact",
            Method::NormalApprox => "normal approximation",
        };
        let p = if r.p_value < 1e-3 {
            format!("{:.3e}", r.p_value)
        } else {
            format!("{:.4}", r.p_value)
        };
        let mut s = format!(
            "{}: {} {sym} = {}, p = {p} (n = {}, {method})",
            self.name, self.test, r.statistic, r.n_effective
        );
        if r.degenerate {
            s.push_str(", degenerate");
        }
        s
    }
}

fn stem(model: &str, factor: &str, aliases: &BTreeMap<String, String>) -> Option<String> {
    let toks: Vec<&str> = model
        .split('-')
        .map(|t| aliases.get(t).map_or(t, String::as_str))
        .collect();
    let i = toks.iter().position(|t| *t == factor)?;
    let mut out = toks;
    out[i] = "*";
    Some(out.join("-"))
}

fn paired_report(
    name: &str,
    table: &ScoreTable,
    pairs: Vec<(String, String, String)>,
) -> Result<ComparisonReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "comparison `{name}` found no pairs"
        )));
    }
    let mut a = Vec::with_capacity(pairs.len());
    let mut b = Vec::with_capacity(pairs.len());
    for (_, x, y) in &pairs {
        a.push(language_average(table, x)?);
        b.push(language_average(table, y)?);
    }
    Ok(ComparisonReport {
        name: name.to_owned(),
        test: "wilcoxon".into(),
        result: wilcoxon_signed_rank(&a, &b)?,
        pairs,
        group_a: Vec::new(),
        group_b: Vec::new(),
        rank_sum: None,
    })
}

pub fn compare_models(table: &ScoreTable, cmp: &Comparison) -> Result<ComparisonReport> {
    match cmp {
        Comparison::FactorPairs {
            name,
            factor_a,
            factor_b,
            aliases,
        } => {
            let mut side_a = BTreeMap::new();
            let mut side_b = BTreeMap::new();
            for m in table.models() {
                if let Some(s) = stem(m, factor_a, aliases) {
                    side_a.entry(s).or_insert_with(|| m.clone());
                }
                if let Some(s) = stem(m, factor_b, aliases) {
                    side_b.entry(s).or_insert_with(|| m.clone());
                }
            }
            let pairs = side_a
                .into_iter()
                .filter_map(|(s, x)| side_b.get(&s).map(|y| (s, x, y.clone())))
                .collect();
            paired_report(name, table, pairs)
        }
        Comparison::ExplicitPairs { name, pairs } => {
            let pairs = pairs
                .iter()
                .map(|(x, y)| (format!("{x} vs {y}"), x.clone(), y.clone()))
                .collect();
            paired_report(name, table, pairs)
        }
        Comparison::LanguagePairs { name, a, b } => {
            let (sa, sb) = (table.model_scores(a)?, table.model_scores(b)?);
            let mut pairs = Vec::new();
            let (mut xa, mut xb) = (Vec::new(), Vec::new());
            for ((lang, x), y) in table.languages().iter().zip(sa).zip(sb) {
                if let (Some(x), Some(y)) = (x, y) {
                    pairs.push((lang.clone(), x.to_string(), y.to_string()));
                    xa.push(*x);
                    xb.push(*y);
                }
            }
            if pairs.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "comparison `{name}` found no languages scored by both models"
                )));
            }
            Ok(ComparisonReport {
                name: name.clone(),
                test: "wilcoxon".into(),
                result: wilcoxon_signed_rank(&xa, &xb)?,
                pairs,
                group_a: Vec::new(),
                group_b: Vec::new(),
                rank_sum: None,
            })
        }
        Comparison::Groups { name, a, b } => {
            if a.rest && b.rest {
                return Err(Error::InvalidArgument(format!(
                    "comparison `{name}`: only one group may be `rest`"
                )));
            }
            let in_a = |m: &str| if a.rest { !b.matches(m) } else { a.matches(m) };
            let in_b = |m: &str| if b.rest { !a.matches(m) } else { b.matches(m) };
            let group_a: Vec<String> = table.models().iter().filter(|m| in_a(m)).cloned().collect();
            let group_b: Vec<String> = table
                .models()
                .iter()
                .filter(|m| in_b(m) && !group_a.contains(m))
                .cloned()
                .collect();
            if group_a.is_empty() || group_b.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "comparison `{name}` has an empty group"
                )));
            }
            let avg = |g: &[String]| -> Result<Vec<f64>> {
                g.iter().map(|m| language_average(table, m)).collect()
            };
            let (xs, ys) = (avg(&group_a)?, avg(&group_b)?);
            Ok(ComparisonReport {
                name: name.clone(),
                test: "mann-whitney".into(),
                result: mann_whitney_u(&xs, &ys)?,
                pairs: Vec::new(),
                rank_sum: Some(rank_sum(&xs, &ys)),
                group_a,
                group_b,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_comparison_example() {
        let r = wilcoxon_signed_rank(&[39.95, 40.13, 42.38, 25.61], &[47.10, 42.39, 21.74, 27.85])
            .unwrap();
        assert_eq!(r.statistic, 4.0);
        assert_eq!(r.p_value, 0.875);
        assert_eq!(r.method, Method::Exact);
    }

    #[test]
    fn identical_is_degenerate() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]).is_err());
        assert!(wilcoxon_signed_rank(&[], &[]).is_err());
    }

    #[test]
    fn all_positive_five() {
        let r = wilcoxon_signed_rank(&[2.0, 3.0, 4.0, 5.0, 6.0], &[1.0; 5]).unwrap();
        assert_eq!(r.statistic, 15.0);
        assert_eq!(r.p_value, 0.0625);
    }

    #[test]
    fn normal_branch_kicks_in() {
        let a: Vec<f64> = (0..30).map(|i| i as f64 + 0.5).collect();
        let b: Vec<f64> = (0..30).map(|i| (29 - i) as f64).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.method, Method::NormalApprox);
        assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn mann_whitney_small() {
        let r = mann_whitney_u(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 9.0);
        assert!((r.p_value - 0.1).abs() < 1e-15);
        let s = mann_whitney_u(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.statistic, 4.5);
        assert_eq!(s.p_value, 1.0);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn mann_whitney_normal_branch() {
        let xs: Vec<f64> = (0..25).map(|i| i as f64).collect();
        let ys: Vec<f64> = (0..20).map(|i| i as f64 + 10.0).collect();
        let r = mann_whitney_u(&xs, &ys).unwrap();
        assert_eq!(r.method, Method::NormalApprox);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn ranks_with_ties() {
        let (r, t) = doubled_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![7, 2, 7, 4]);
        assert_eq!(t, vec![1, 1, 2]);
    }

    #[test]
    fn stems() {
        let al: BTreeMap<String, String> = [("MULTIOUT".to_string(), "MO".to_string())]
            .into_iter()
            .collect();
        assert_eq!(
            stem("X-MULTIOUT-ALL-FL", "ALL", &al).as_deref(),
            Some("X-MO-*-FL")
        );
        assert_eq!(stem("X-MO-LANG", "ALL", &al), None);
    }

    #[test]
    fn self_pairing_is_degenerate() {
        let t = ScoreTable::new(
            vec!["m".into()],
            vec!["x".into(), "y".into()],
            vec![vec![Some(1.0), Some(2.0)]],
        )
        .unwrap();
        let cmp = Comparison::LanguagePairs {
            name: "self".into(),
            a: "m".into(),
            b: "m".into(),
        };
        assert!(compare_models(&t, &cmp).unwrap().result.degenerate);
        let none = Comparison::FactorPairs {
            name: "none".into(),
            factor_a: "ALL".into(),
            factor_b: "LANG".into(),
            aliases: BTreeMap::new(),
        };
        assert!(compare_models(&t, &none).is_err());
    }
}
