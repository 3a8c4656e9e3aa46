//! Mann–Whitney U test with midranks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

/// Largest n·m for which the p-value comes from exact enumeration.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    /// U of sample a: pairs (x in a, y in b) with x > y, ties counting one half.
    pub u_statistic: f64,
    pub u_b: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Two-sided.
    pub p_value: f64,
    pub method: UMethod,
    /// Every value tied: no variance, p fixed at 1.
    pub degenerate: bool,
}

fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tie groups in the pooled sample.
fn tie_groups(ranks: &[f64]) -> Vec<usize> {
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .chunk_by(|a, b| a == b)
        .map(<[f64]>::len)
        .collect()
}

/// Rank sums of every way to choose `n` of `ranks`.
fn enumerate_rank_sums(ranks: &[f64], n: usize, start: usize, acc: f64, out: &mut Vec<f64>) {
    if n == 0 {
        out.push(acc);
        return;
    }
    for i in start..=ranks.len() - n {
        enumerate_rank_sums(ranks, n - 1, i + 1, acc + ranks[i], out);
    }
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTestResult, EvalError> {
    if a.is_empty() {
        return Err(EvalError::EmptySample('a'));
    }
    if b.is_empty() {
        return Err(EvalError::EmptySample('b'));
    }
    if !a.iter().chain(b).all(|v| v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let (n, m) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let offset = (n * (n + 1)) as f64 / 2.0;
    let r_a: f64 = ranks[..n].iter().sum();
    let u_a = r_a - offset;
    let nm = (n * m) as f64;
    let mean = nm / 2.0;
    let ties = tie_groups(&ranks);
    let degenerate = ties.len() == 1;
    let mut result = UTestResult {
        u_statistic: u_a,
        u_b: nm - u_a,
        n_a: n,
        n_b: m,
        p_value: 1.0,
        method: if n * m <= EXACT_LIMIT { UMethod::Exact } else { UMethod::Normal },
        degenerate,
    };
    if degenerate {
        return Ok(result);
    }
    let observed = (u_a - mean).abs();
    result.p_value = match result.method {
        UMethod::Exact => {
            let mut sums = Vec::new();
            enumerate_rank_sums(&ranks, n, 0, 0.0, &mut sums);
            let extreme = sums
                .iter()
                .filter(|&&s| ((s - offset) - mean).abs() >= observed - 1e-9)
                .count();
            extreme as f64 / sums.len() as f64
        }
        UMethod::Normal => {
            let total = (n + m) as f64;
            let tie_term: f64 = ties
                .iter()
                .map(|&t| {
                    let t = t as f64;
                    t * t * t - t
                })
                .sum::<f64>()
                / (total * (total - 1.0));
            let sigma = (nm / 12.0 * ((total + 1.0) - tie_term)).sqrt();
            let z = ((observed - 0.5) / sigma).max(0.0);
            let normal = Normal::standard();
            (2.0 * (1.0 - normal.cdf(z))).min(1.0)
        }
    };
    Ok(result)
}
