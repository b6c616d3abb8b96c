//! Evaluation metrics: Hamming distance, blocking pairs, stability and IR
//! violation, reward ratio, ranking recovery and the paired signed-rank test.
//!
//! Apart from the reward ratio and the general IR violation, every normalised
//! metric expects a balanced market (`n == m`) and rejects anything else.

mod recovery;
mod wilcoxon;

pub use recovery::{optimal_ranking_set, permutations, recovery_rate, OptimalSet, RECOVERY_MAX_AGENTS};
pub use wilcoxon::{wilcoxon_one_sided, WilcoxonMethod, WilcoxonResult};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::matching::{blocking_pairs, MatchingMatrix, PreferenceProfile};
use crate::mechanisms::{matching_reward, RewardSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "HD")]
    Hd,
    #[serde(rename = "BP")]
    Bp,
    #[serde(rename = "SV")]
    Sv,
    #[serde(rename = "IRV")]
    Irv,
    #[serde(rename = "RW")]
    Rw,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Hd => "HD",
            Metric::Bp => "BP",
            Metric::Sv => "SV",
            Metric::Irv => "IRV",
            Metric::Rw => "RW",
        }
    }

    /// Whether larger values are better.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Rw)
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn require_balanced(n: usize, m: usize) -> Result<()> {
    if n != m {
        return Err(Error::dims(format!("metric defined for n == m, got n = {n}, m = {m}")));
    }
    Ok(())
}

fn same_shape(a: &MatchingMatrix, b: &MatchingMatrix) -> Result<()> {
    if (a.n(), a.m()) != (b.n(), b.m()) {
        return Err(Error::dims(format!("{}x{} vs {}x{} matchings", a.n(), a.m(), b.n(), b.m())));
    }
    Ok(())
}

/// Number of differing cells of the two matching matrices.
pub fn hamming_raw(a: &MatchingMatrix, b: &MatchingMatrix) -> Result<usize> {
    same_shape(a, b)?;
    let workers = (0..a.n()).filter(|&i| a.worker_partner(i) != b.worker_partner(i)).count();
    // Each worker whose outcome differs flips two cells of its row; a firm
    // that is single in exactly one of the matchings flips its unmatch cell.
    let firms = (0..a.m()).filter(|&j| a.firm_partner(j).is_none() != b.firm_partner(j).is_none()).count();
    Ok(2 * workers + firms)
}

/// Hamming distance divided by its maximum `3n`.
pub fn hamming_distance(a: &MatchingMatrix, b: &MatchingMatrix) -> Result<f64> {
    require_balanced(a.n(), a.m())?;
    Ok(hamming_raw(a, b)? as f64 / (3 * a.n()) as f64)
}

/// Blocking pairs divided by `n²`.
pub fn num_blocking_pairs(mm: &MatchingMatrix, profile: &PreferenceProfile) -> Result<f64> {
    require_balanced(profile.n(), profile.m())?;
    let n = profile.n() as f64;
    Ok(blocking_pairs(mm, profile)?.len() as f64 / (n * n))
}

/// Signed standing of each partner relative to the unmatch option.
///
/// `p[i][j]` is worker `i`'s value for firm `j`, normalised by `m`; `q[i][j]`
/// is firm `j`'s value for worker `i`, normalised by `n`. Both lie in `[-1, 1]`
/// and are positive exactly for acceptable partners.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceVectors {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// Integer numerators: `p = p_count / m`, `q = q_count / n`.
    pub p_count: Vec<Vec<i64>>,
    pub q_count: Vec<Vec<i64>>,
}

fn value_count(order: &crate::LinearOrder, option: usize, others: usize) -> i64 {
    let bot = order.unmatched();
    let mut c = i64::from(order.prefers(option, bot));
    for o in 0..others {
        c += i64::from(order.prefers(option, o)) - i64::from(order.prefers(bot, o));
    }
    c
}

pub fn preference_vectors(profile: &PreferenceProfile) -> PreferenceVectors {
    let (n, m) = (profile.n(), profile.m());
    let p_count: Vec<Vec<i64>> =
        (0..n).map(|i| (0..m).map(|j| value_count(&profile.workers[i], j, m)).collect()).collect();
    let q_count: Vec<Vec<i64>> =
        (0..n).map(|i| (0..m).map(|j| value_count(&profile.firms[j], i, n)).collect()).collect();
    let p = p_count.iter().map(|r| r.iter().map(|&c| c as f64 / m as f64).collect()).collect();
    let q = q_count.iter().map(|r| r.iter().map(|&c| c as f64 / n as f64).collect()).collect();
    PreferenceVectors { p, q, p_count, q_count }
}

/// Dense `(n+1)×(m+1)` copy of a matching.
pub fn dense_f64(mm: &MatchingMatrix) -> Vec<Vec<f64>> {
    mm.dense().iter().map(|r| r.iter().map(|&x| f64::from(x)).collect()).collect()
}

fn check_dense(mat: &[Vec<f64>], n: usize, m: usize) -> Result<()> {
    if mat.len() != n + 1 || mat.iter().any(|r| r.len() != m + 1) {
        return Err(Error::dims(format!("expected a {}x{} matrix", n + 1, m + 1)));
    }
    Ok(())
}

/// Sum of pairwise stability violations divided by `n`. Accepts soft
/// matrices. The unmatch row and column take part with value 0, so a hard
/// matching scores 0 exactly when it has no blocking pair.
pub fn stv_raw(mat: &[Vec<f64>], pv: &PreferenceVectors) -> Result<f64> {
    let n = pv.p.len();
    let m = pv.p.first().map_or(0, |r| r.len());
    check_dense(mat, n, m)?;
    let pval = |i: usize, j: usize| if j < m { pv.p[i][j] } else { 0.0 };
    let qval = |i: usize, j: usize| if i < n { pv.q[i][j] } else { 0.0 };
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let firm_side: f64 = (0..=n).map(|k| mat[k][j] * (pv.q[i][j] - qval(k, j)).max(0.0)).sum();
            let worker_side: f64 = (0..=m).map(|k| mat[i][k] * (pv.p[i][j] - pval(i, k)).max(0.0)).sum();
            total += firm_side * worker_side;
        }
    }
    Ok(total / n as f64)
}

/// Stability violation normalised once more by `n`.
pub fn stability_violation(mat: &[Vec<f64>], profile: &PreferenceProfile) -> Result<f64> {
    require_balanced(profile.n(), profile.m())?;
    Ok(stv_raw(mat, &preference_vectors(profile))? / profile.n() as f64)
}

/// Differentiable [`stv_raw`] of an `(n+1)×(m+1)` tensor.
pub fn stv_raw_tensor(mat: &Tensor, pv: &PreferenceVectors) -> Result<Tensor> {
    let n = pv.p.len();
    let m = pv.p.first().map_or(0, |r| r.len());
    if mat.shape() != [n + 1, m + 1] {
        return Err(Error::dims(format!("stv of shape {:?}, expected [{}, {}]", mat.shape(), n + 1, m + 1)));
    }
    let cols = m + 1;
    let mut firm_idx = Vec::with_capacity(n * m * (n + 1));
    let mut firm_gap = Vec::with_capacity(n * m * (n + 1));
    let mut worker_idx = Vec::with_capacity(n * m * (m + 1));
    let mut worker_gap = Vec::with_capacity(n * m * (m + 1));
    for i in 0..n {
        for j in 0..m {
            for k in 0..=n {
                let qk = if k < n { pv.q[k][j] } else { 0.0 };
                firm_idx.push(k * cols + j);
                firm_gap.push((pv.q[i][j] - qk).max(0.0));
            }
            for k in 0..=m {
                let pk = if k < m { pv.p[i][k] } else { 0.0 };
                worker_idx.push(i * cols + k);
                worker_gap.push((pv.p[i][j] - pk).max(0.0));
            }
        }
    }
    let firm_side = mat
        .gather(firm_idx, &[n * m, n + 1])?
        .mul(&Tensor::new(&[n * m, n + 1], firm_gap)?)?
        .matvec(&Tensor::vector(vec![1.0; n + 1]))?;
    let worker_side = mat
        .gather(worker_idx, &[n * m, m + 1])?
        .mul(&Tensor::new(&[n * m, m + 1], worker_gap)?)?
        .matvec(&Tensor::vector(vec![1.0; m + 1]))?;
    Ok(firm_side.mul(&worker_side)?.sum().scale(1.0 / n as f64))
}

/// IR violation in the balanced form: both sides weighted by `1/(2n)`.
pub fn ir_violation(mat: &[Vec<f64>], profile: &PreferenceProfile) -> Result<f64> {
    require_balanced(profile.n(), profile.m())?;
    ir_violation_general(mat, profile)
}

/// IR violation for any `n, m`: the firm term is divided by `2n`, the worker
/// term by `2m`.
pub fn ir_violation_general(mat: &[Vec<f64>], profile: &PreferenceProfile) -> Result<f64> {
    let (n, m) = (profile.n(), profile.m());
    check_dense(mat, n, m)?;
    let pv = preference_vectors(profile);
    let (mut firm, mut worker) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..m {
            firm += mat[i][j] * (-pv.q[i][j]).max(0.0);
            worker += mat[i][j] * (-pv.p[i][j]).max(0.0);
        }
    }
    Ok(firm / (2 * n) as f64 + worker / (2 * m) as f64)
}

/// IR violation of a hard matching as an exact fraction `(num, den)`.
pub fn ir_violation_exact(mm: &MatchingMatrix, profile: &PreferenceProfile) -> Result<(i64, i64)> {
    let (n, m) = (profile.n() as i64, profile.m() as i64);
    let pv = preference_vectors(profile);
    let (mut qneg, mut pneg) = (0i64, 0i64);
    for (i, j) in mm.pairs() {
        qneg += (-pv.q_count[i][j]).max(0);
        pneg += (-pv.p_count[i][j]).max(0);
    }
    // qneg/n/(2n) + pneg/m/(2m)
    Ok((qneg * m * m + pneg * n * n, 2 * n * n * m * m))
}

/// Reward of `mm` relative to the reward of the optimal example matching.
pub fn reward_ratio(
    mm: &MatchingMatrix,
    profile: &PreferenceProfile,
    spec: &RewardSpec,
    optimal: &MatchingMatrix,
) -> Result<f64> {
    let best = matching_reward(optimal, profile, spec)?;
    if best == 0.0 {
        return Err(Error::Degenerate("optimal reward is zero".into()));
    }
    Ok(matching_reward(mm, profile, spec)? / best)
}

/// Mean, sample standard deviation and count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { mean: f64::NAN, std: f64::NAN, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, std, n }
}
