use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::matching::{run_sd, MatchingMatrix, PreferenceProfile, Ranking};

use super::hamming_raw;

/// Largest market (workers plus firms) whose rankings we enumerate.
pub const RECOVERY_MAX_AGENTS: usize = 8;

/// All permutations of `0..len` in lexicographic order.
pub fn permutations(len: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..len).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..len).rev().find(|&i| cur[i - 1] < cur[i]) else { return out };
        let j = (i..len).rev().find(|&j| cur[j] > cur[i - 1]).expect("a larger suffix element");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// The rankings whose serial dictatorship lands closest to an example.
#[derive(Debug, Clone)]
pub struct OptimalSet {
    pub rankings: HashSet<Ranking>,
    /// Raw Hamming distance shared by every member.
    pub distance: usize,
    /// Number of rankings searched.
    pub searched: usize,
}

impl OptimalSet {
    pub fn contains(&self, r: &Ranking) -> bool {
        self.rankings.contains(r)
    }

    pub fn len(&self) -> usize {
        self.rankings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rankings.is_empty()
    }

    /// Chance that a uniformly drawn ranking is a member.
    pub fn uniform_hit_probability(&self) -> f64 {
        self.len() as f64 / self.searched as f64
    }
}

/// Searches every ranking of the market for the minimum Hamming distance to
/// `example`, comparing integer distances.
pub fn optimal_ranking_set(profile: &PreferenceProfile, example: &MatchingMatrix) -> Result<OptimalSet> {
    let agents = profile.n() + profile.m();
    if agents > RECOVERY_MAX_AGENTS {
        return Err(Error::TooLarge(format!("{agents} agents, ranking search supports at most {RECOVERY_MAX_AGENTS}")));
    }
    let mut best = usize::MAX;
    let mut rankings = HashSet::new();
    let perms = permutations(agents);
    let searched = perms.len();
    for order in perms {
        let r = Ranking::new(order)?;
        let d = hamming_raw(&run_sd(profile, &r)?, example)?;
        if d < best {
            best = d;
            rankings.clear();
        }
        if d == best {
            rankings.insert(r);
        }
    }
    Ok(OptimalSet { rankings, distance: best, searched })
}

/// Fraction of predictions that fall in their record's optimal set.
pub fn recovery_rate(predictions: &[Ranking], sets: &[OptimalSet]) -> Result<f64> {
    if predictions.len() != sets.len() {
        return Err(Error::dims(format!("{} predictions for {} records", predictions.len(), sets.len())));
    }
    if sets.is_empty() {
        return Err(Error::InvalidArgument("no records".into()));
    }
    let hits = predictions.iter().zip(sets).filter(|(r, s)| s.contains(r)).count();
    Ok(hits as f64 / sets.len() as f64)
}
