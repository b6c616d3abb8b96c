use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Non-zero differences below which the null distribution is enumerated.
pub const EXACT_BELOW: usize = 20;
pub const MIN_PAIRS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences `a - b`.
    pub statistic: f64,
    /// Pairs left after dropping zero differences.
    pub n_eff: usize,
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Mid-ranks of `|d|`, doubled so that they are integers.
fn doubled_ranks(abs: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut ties = Vec::new();
    let mut s = 0;
    while s < idx.len() {
        let mut e = s + 1;
        while e < idx.len() && abs[idx[e]] == abs[idx[s]] {
            e += 1;
        }
        // 1-based ranks s+1..=e average to (s+1+e)/2.
        for &k in &idx[s..e] {
            ranks[k] = (s + 1 + e) as u64;
        }
        ties.push(e - s);
        s = e;
    }
    (ranks, ties)
}

/// Paired signed-rank test of the alternative that `a` tends to be smaller
/// than `b`. Zero differences are dropped and tied magnitudes share their
/// mid-rank. The null distribution is enumerated exactly for fewer than 20
/// pairs and approximated by a continuity-corrected normal otherwise.
pub fn wilcoxon_one_sided(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::dims(format!("{} vs {} paired samples", a.len(), b.len())));
    }
    if a.len() < MIN_PAIRS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_PAIRS} pairs, got {}", a.len())));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|x| *x != 0.0).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("paired sample".into()));
    }
    if d.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let (ranks, ties) = doubled_ranks(&abs);
    let w2: u64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let statistic = w2 as f64 / 2.0;

    if n < EXACT_BELOW {
        // counts[s]: sign patterns whose positive doubled ranks sum to s
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0.0f64; total as usize + 1];
        counts[0] = 1.0;
        for &r in &ranks {
            for s in (r as usize..=total as usize).rev() {
                counts[s] += counts[s - r as usize];
            }
        }
        let below: f64 = counts[..=w2 as usize].iter().sum();
        let p_value = below / 2f64.powi(n as i32);
        return Ok(WilcoxonResult { statistic, n_eff: n, p_value, method: WilcoxonMethod::Exact });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = (statistic - mean + 0.5) / var.sqrt();
    let p_value = Normal::standard().cdf(z);
    Ok(WilcoxonResult { statistic, n_eff: n, p_value, method: WilcoxonMethod::Normal })
}
