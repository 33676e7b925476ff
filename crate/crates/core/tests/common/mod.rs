#![allow(dead_code)]

use std::path::PathBuf;

use emoclass::{EmotionSchema, LabeledDataset, Record};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn dataset(lang: &str, rows: &[Vec<u8>]) -> LabeledDataset {
    let k = rows.first().map_or(1, Vec::len);
    let names: Vec<String> = (0..k).map(|j| format!("e{j}")).collect();
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, l)| Record {
            id: format!("r{i:03}"),
            text: format!("text {i}"),
            labels: l.clone(),
        })
        .collect();
    LabeledDataset::new(lang, EmotionSchema::new(names).unwrap(), records).unwrap()
}

/// Midrank of every value, computed by counting.
fn midranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|x| {
            let below = v.iter().filter(|y| *y < x).count() as f64;
            let equal = v.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn two_sided(le: usize, ge: usize, total: usize) -> f64 {
    (2.0 * le.min(ge) as f64 / total as f64).min(1.0)
}

/// Signed-rank statistic and two-sided p by walking all 2^n sign patterns.
pub fn wilcoxon_brute(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    let ranks = midranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let w: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| r)
        .sum();
    let (mut le, mut ge) = (0, 0);
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if s <= w + 1e-9 {
            le += 1;
        }
        if s >= w - 1e-9 {
            ge += 1;
        }
    }
    (w, two_sided(le, ge, 1 << n))
}

/// U statistic and two-sided p by walking every placement of the first
/// sample among the pooled positions.
pub fn mann_whitney_brute(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = midranks(&pooled);
    let (n1, n) = (xs.len(), pooled.len());
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let u = ranks[..n1].iter().sum::<f64>() - offset;
    let (mut le, mut ge, mut total) = (0, 0, 0);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        total += 1;
        let s = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum::<f64>()
            - offset;
        if s <= u + 1e-9 {
            le += 1;
        }
        if s >= u - 1e-9 {
            ge += 1;
        }
    }
    (u, two_sided(le, ge, total))
}

/// Largest per-emotion deviation of the train-side positive fraction from
/// `fraction`, over emotions with at least one positive.
pub fn worst_deviation(rows: &[Vec<u8>], train: &[bool], fraction: f64) -> f64 {
    let k = rows[0].len();
    (0..k)
        .filter_map(|j| {
            let pos = rows.iter().filter(|r| r[j] == 1).count();
            if pos == 0 {
                return None;
            }
            let in_train = rows
                .iter()
                .zip(train)
                .filter(|(r, t)| r[j] == 1 && **t)
                .count();
            Some((in_train as f64 / pos as f64 - fraction).abs())
        })
        .fold(0.0, f64::max)
}

/// Best achievable `worst_deviation` over all train sets of `size` records.
pub fn best_split_deviation(rows: &[Vec<u8>], size: usize, fraction: f64) -> f64 {
    let n = rows.len();
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == size)
        .map(|m| {
            let train: Vec<bool> = (0..n).map(|i| m >> i & 1 == 1).collect();
            worst_deviation(rows, &train, fraction)
        })
        .fold(f64::INFINITY, f64::min)
}

pub const TWELVE: [[u8; 3]; 12] = [
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [1, 0, 1],
    [0, 0, 1],
    [1, 1, 1],
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 1],
    [0, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
];

pub fn twelve_rows() -> Vec<Vec<u8>> {
    TWELVE.iter().map(|r| r.to_vec()).collect()
}

/// Loss derivative check: central difference in the logit.
pub fn finite_difference<F: Fn(f64) -> f64>(f: F, z: f64, h: f64) -> f64 {
    (f(z + h) - f(z - h)) / (2.0 * h)
}
