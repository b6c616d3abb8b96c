//! Reward-maximising matchings via a square assignment problem.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::{MatchingMatrix, PreferenceProfile};

/// Sentinel for pairings the reduction forbids.
pub const FORBIDDEN: f64 = -1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Eh,
    Mh,
}

/// Worker weights of the reward. Equal weights, or weight 2 for a chosen
/// third of the workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub weights: Vec<f64>,
    pub selected: Vec<usize>,
}

impl RewardSpec {
    pub fn equal(n: usize) -> Self {
        RewardSpec { kind: RewardKind::Eh, weights: vec![1.0; n], selected: Vec::new() }
    }

    /// Doubles the worker term for `selected`, which must hold `floor(n/3)`
    /// distinct workers.
    pub fn weighted(n: usize, mut selected: Vec<usize>) -> Result<Self> {
        selected.sort_unstable();
        selected.dedup();
        if selected.len() != n / 3 {
            return Err(Error::InvalidArgument(format!(
                "{} distinct selected workers, expected {}",
                selected.len(),
                n / 3
            )));
        }
        let mut weights = vec![1.0; n];
        for &i in &selected {
            if i >= n {
                return Err(Error::OutOfRange { index: i, size: n });
            }
            weights[i] = 2.0;
        }
        Ok(RewardSpec { kind: RewardKind::Mh, weights, selected })
    }

    /// Draws `floor(n/3)` workers uniformly without replacement.
    pub fn weighted_random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let selected = sample(rng, n, n / 3).into_vec();
        Self::weighted(n, selected).expect("sampled indices are distinct and in range")
    }
}

/// Reward of placing worker option `i` with firm option `j`, where `i == n`
/// and `j == m` stand for the unmatch option. The unmatch side contributes 0.
pub fn reward(i: usize, j: usize, profile: &PreferenceProfile, spec: &RewardSpec) -> Result<f64> {
    let (n, m) = (profile.n(), profile.m());
    if i > n || j > m {
        return Err(Error::OutOfRange { index: i.max(j), size: n.max(m) + 1 });
    }
    if i == n && j == m {
        return Err(Error::InvalidArgument("reward of the unmatch–unmatch cell".into()));
    }
    if spec.weights.len() != n {
        return Err(Error::dims(format!("{} weights for {n} workers", spec.weights.len())));
    }
    let worker_term = if i < n {
        spec.weights[i] * (m + 2 - profile.workers[i].ord(j)?) as f64
    } else {
        0.0
    };
    let firm_term = if j < m { (n + 2 - profile.firms[j].ord(i)?) as f64 } else { 0.0 };
    Ok(worker_term + firm_term)
}

/// Total reward `Σ r(i, j) M_ij` over the full matrix.
pub fn matching_reward(mm: &MatchingMatrix, profile: &PreferenceProfile, spec: &RewardSpec) -> Result<f64> {
    let (n, m) = (profile.n(), profile.m());
    let mut total = 0.0;
    for i in 0..n {
        total += reward(i, mm.worker_partner(i).unwrap_or(m), profile, spec)?;
    }
    for j in mm.unmatched_firms() {
        total += reward(n, j, profile, spec)?;
    }
    Ok(total)
}

/// Maximum-weight perfect assignment of a square matrix (row -> column),
/// by the potentials form of the Hungarian method. Ties go to the first
/// optimum found in index order.
pub fn hungarian_max_assignment(rewards: &[Vec<f64>]) -> Result<Vec<usize>> {
    let k = rewards.len();
    if rewards.iter().any(|r| r.len() != k) {
        return Err(Error::dims("assignment matrix must be square"));
    }
    if rewards.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("assignment reward".into()));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = -rewards[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; k];
    for j in 1..=k {
        assignment[p[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Square reduction: rows are the workers then one unmatch slot per firm;
/// columns are the firms then one unmatch slot per worker.
pub fn assignment_matrix(profile: &PreferenceProfile, spec: &RewardSpec) -> Result<Vec<Vec<f64>>> {
    let (n, m) = (profile.n(), profile.m());
    let mut a = vec![vec![0.0; n + m]; n + m];
    for i in 0..n {
        for j in 0..m {
            a[i][j] = reward(i, j, profile, spec)?;
        }
        for s in 0..n {
            a[i][m + s] = if s == i { reward(i, m, profile, spec)? } else { FORBIDDEN };
        }
    }
    for t in 0..m {
        for j in 0..m {
            a[n + t][j] = if t == j { reward(n, j, profile, spec)? } else { FORBIDDEN };
        }
    }
    Ok(a)
}

/// Matching that maximises total reward.
pub fn hungarian_matching(profile: &PreferenceProfile, spec: &RewardSpec) -> Result<MatchingMatrix> {
    let (n, m) = (profile.n(), profile.m());
    let assignment = hungarian_max_assignment(&assignment_matrix(profile, spec)?)?;
    let partners = (0..n).map(|i| (assignment[i] < m).then_some(assignment[i])).collect();
    MatchingMatrix::from_worker_partners(m, partners)
}
