//! Two-sided Mann-Whitney U test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Pooled sizes up to this use exact enumeration.
pub const EXACT_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    Exact,
    Normal,
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u_a: f64,
    pub u_b: f64,
    pub p: f64,
    pub method: PValueMethod,
}

/// 1-based ranks with ties sharing their mean rank, in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        out.push(j - i + 1);
        i = j + 1;
    }
    out
}

/// Visits every `k`-subset of `0..n` as a sorted index slice.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact two-sided p: share of label assignments over the pooled midranks
/// whose U is at least as far from its mean as the observed one.
fn exact_p(ranks: &[f64], n_a: usize, u_obs: f64) -> f64 {
    let n_b = ranks.len() - n_a;
    let mean = (n_a * n_b) as f64 / 2.0;
    let offset = (n_a * (n_a + 1)) as f64 / 2.0;
    let observed = (u_obs - mean).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for_each_combination(ranks.len(), n_a, |idx| {
        let u = idx.iter().map(|&i| ranks[i]).sum::<f64>() - offset;
        total += 1;
        if (u - mean).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    });
    extreme as f64 / total as f64
}

fn normal_p(pooled: &[f64], n_a: usize, u_obs: f64) -> f64 {
    let n = pooled.len() as f64;
    let n_b = pooled.len() - n_a;
    let mean = (n_a * n_b) as f64 / 2.0;
    let ties: f64 = tie_sizes(pooled)
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let var = (n_a * n_b) as f64 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u_obs - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let phi = Normal::new(0.0, 1.0).expect("standard normal").cdf(z);
    (2.0 * (1.0 - phi)).clamp(0.0, 1.0)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidConfig(
            "Mann-Whitney U needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "Mann-Whitney U needs finite samples".into(),
        ));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (n_a, n_b) = (a.len(), b.len());
    let r_a: f64 = ranks[..n_a].iter().sum();
    let u_a = r_a - (n_a * (n_a + 1)) as f64 / 2.0;
    let u_b = (n_a * n_b) as f64 - u_a;
    let (p, method) = if pooled.iter().all(|&v| v == pooled[0]) {
        (1.0, PValueMethod::Degenerate)
    } else if pooled.len() <= EXACT_LIMIT {
        (exact_p(&ranks, n_a, u_a), PValueMethod::Exact)
    } else {
        (normal_p(&pooled, n_a, u_a), PValueMethod::Normal)
    };
    Ok(MannWhitney {
        u_a,
        u_b,
        p,
        method,
    })
}

/// Significance marks at the 0.05, 0.01 and 0.001 levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}
