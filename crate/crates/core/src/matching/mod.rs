//! Two-sided one-to-one matching: instances, preferences, matchings and
//! rankings, plus serial dictatorship and the exhaustive property oracles.
//!
//! Indexing is 0-based throughout. Workers are `0..n`, firms `0..m`. In a
//! worker's order the options are the firms `0..m` followed by the unmatch
//! option at index `m`; firm orders likewise end with the unmatch option at
//! index `n`. Rankings use global agent indices: workers `0..n`, then firms
//! `n..n+m`.

mod props;
mod sd;

pub use props::{
    all_linear_orders, blocking_pairs, check_strategy_proofness, enumerate_matchings,
    is_individually_rational, is_pareto_efficient, is_stable, pareto_dominates, payoff,
    Deviation, PARETO_MAX_SIDE, SP_MAX_SIDE,
};
pub use sd::{run_sd, AgentState, SdProcess};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A market: `n` workers and `m` firms, each with a public `d`-dimensional context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub contexts_w: Vec<Vec<f64>>,
    pub contexts_f: Vec<Vec<f64>>,
}

impl Instance {
    pub fn new(contexts_w: Vec<Vec<f64>>, contexts_f: Vec<Vec<f64>>) -> Result<Self> {
        let n = contexts_w.len();
        let m = contexts_f.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("instance needs n >= 1 and m >= 1".into()));
        }
        let d = contexts_w[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("context dimension must be >= 1".into()));
        }
        for row in contexts_w.iter().chain(contexts_f.iter()) {
            if row.len() != d {
                return Err(Error::dims(format!("context row of length {} (d = {d})", row.len())));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("context entry".into()));
            }
        }
        Ok(Instance { n, m, d, contexts_w, contexts_f })
    }

    /// Instance without meaningful contexts (one zero coordinate per agent).
    /// Handy for mechanisms that only look at reports.
    pub fn blank(n: usize, m: usize) -> Self {
        Instance { n, m, d: 1, contexts_w: vec![vec![0.0]; n], contexts_f: vec![vec![0.0]; m] }
    }
}

/// A worker or a firm, by side-local index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Agent {
    Worker(usize),
    Firm(usize),
}

impl Agent {
    pub fn global(self, n: usize) -> usize {
        match self {
            Agent::Worker(i) => i,
            Agent::Firm(j) => n + j,
        }
    }

    pub fn from_global(index: usize, n: usize) -> Self {
        if index < n {
            Agent::Worker(index)
        } else {
            Agent::Firm(index - n)
        }
    }
}

impl std::fmt::Display for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Agent::Worker(i) => write!(f, "w{}", i + 1),
            Agent::Firm(j) => write!(f, "f{}", j + 1),
        }
    }
}

/// A strict total order over `k + 1` options, the last of which is the
/// unmatch option.
///
/// Stored as `positions[option]` (0 = most preferred); serialised as the
/// option list from most to least preferred.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LinearOrder {
    positions: Vec<usize>,
}

impl LinearOrder {
    /// Builds an order from the option list, most preferred first.
    pub fn from_options(options: Vec<usize>) -> Result<Self> {
        let len = options.len();
        if len == 0 {
            return Err(Error::InvalidArgument("empty preference order".into()));
        }
        let mut positions = vec![usize::MAX; len];
        for (pos, &opt) in options.iter().enumerate() {
            if opt >= len {
                return Err(Error::OutOfRange { index: opt, size: len });
            }
            if positions[opt] != usize::MAX {
                return Err(Error::InvalidArgument(format!("option {opt} listed twice")));
            }
            positions[opt] = pos;
        }
        Ok(LinearOrder { positions })
    }

    /// Builds an order from 1-based ranks: `ranks[option]` is the position of
    /// `option` with 1 = most preferred.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let len = ranks.len();
        let mut options = vec![usize::MAX; len];
        for (opt, &r) in ranks.iter().enumerate() {
            if r == 0 || r > len {
                return Err(Error::OutOfRange { index: r, size: len });
            }
            if options[r - 1] != usize::MAX {
                return Err(Error::InvalidArgument(format!("rank {r} used twice")));
            }
            options[r - 1] = opt;
        }
        Self::from_options(options)
    }

    /// Identity order: option 0 first, the unmatch option last.
    pub fn identity(len: usize) -> Self {
        LinearOrder { positions: (0..len).collect() }
    }

    /// Number of options including the unmatch option.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Index of the unmatch option.
    pub fn unmatched(&self) -> usize {
        self.positions.len() - 1
    }

    /// 1-based rank of `option`: the number of options weakly preferred to it.
    pub fn ord(&self, option: usize) -> Result<usize> {
        self.positions
            .get(option)
            .map(|p| p + 1)
            .ok_or(Error::OutOfRange { index: option, size: self.positions.len() })
    }

    /// 0-based position of `option`. Panics when out of range.
    #[inline]
    pub fn position(&self, option: usize) -> usize {
        self.positions[option]
    }

    /// Strict preference `a ≻ b`.
    #[inline]
    pub fn prefers(&self, a: usize, b: usize) -> bool {
        self.positions[a] < self.positions[b]
    }

    /// Options from most to least preferred.
    pub fn options(&self) -> Vec<usize> {
        let mut out = vec![0; self.positions.len()];
        for (opt, &pos) in self.positions.iter().enumerate() {
            out[pos] = opt;
        }
        out
    }

    /// Is `option` weakly preferred to staying unmatched?
    #[inline]
    pub fn acceptable(&self, option: usize) -> bool {
        self.positions[option] <= self.positions[self.unmatched()]
    }
}

impl TryFrom<Vec<usize>> for LinearOrder {
    type Error = Error;
    fn try_from(options: Vec<usize>) -> Result<Self> {
        LinearOrder::from_options(options)
    }
}

impl From<LinearOrder> for Vec<usize> {
    fn from(order: LinearOrder) -> Vec<usize> {
        order.options()
    }
}

/// Reported (or true) preferences of every agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub workers: Vec<LinearOrder>,
    pub firms: Vec<LinearOrder>,
}

impl PreferenceProfile {
    pub fn new(workers: Vec<LinearOrder>, firms: Vec<LinearOrder>) -> Result<Self> {
        let (n, m) = (workers.len(), firms.len());
        if let Some(o) = workers.iter().find(|o| o.len() != m + 1) {
            return Err(Error::dims(format!("worker order over {} options, expected {}", o.len(), m + 1)));
        }
        if let Some(o) = firms.iter().find(|o| o.len() != n + 1) {
            return Err(Error::dims(format!("firm order over {} options, expected {}", o.len(), n + 1)));
        }
        Ok(PreferenceProfile { workers, firms })
    }

    pub fn n(&self) -> usize {
        self.workers.len()
    }

    pub fn m(&self) -> usize {
        self.firms.len()
    }

    pub fn order(&self, agent: Agent) -> &LinearOrder {
        match agent {
            Agent::Worker(i) => &self.workers[i],
            Agent::Firm(j) => &self.firms[j],
        }
    }

    /// The profile with `agent`'s order replaced by `order`.
    pub fn with_order(&self, agent: Agent, order: LinearOrder) -> Result<Self> {
        let mut out = self.clone();
        let expected = match agent {
            Agent::Worker(_) => self.m() + 1,
            Agent::Firm(_) => self.n() + 1,
        };
        if order.len() != expected {
            return Err(Error::dims(format!("replacement order over {} options, expected {expected}", order.len())));
        }
        match agent {
            Agent::Worker(i) => out.workers[i] = order,
            Agent::Firm(j) => out.firms[j] = order,
        }
        Ok(out)
    }
}

/// Serialised form of a matching: the matched pairs plus the agents left single.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SparseMatching {
    n: usize,
    m: usize,
    pairs: Vec<(usize, usize)>,
    unmatched_workers: Vec<usize>,
    unmatched_firms: Vec<usize>,
}

impl TryFrom<SparseMatching> for MatchingMatrix {
    type Error = Error;
    fn try_from(s: SparseMatching) -> Result<Self> {
        let mm = MatchingMatrix::from_pairs(s.n, s.m, &s.pairs)?;
        if mm.unmatched_workers() != s.unmatched_workers || mm.unmatched_firms() != s.unmatched_firms {
            return Err(Error::Parse("unmatched lists disagree with the pairs".into()));
        }
        Ok(mm)
    }
}

impl From<MatchingMatrix> for SparseMatching {
    fn from(mm: MatchingMatrix) -> Self {
        SparseMatching {
            n: mm.n,
            m: mm.m,
            pairs: mm.pairs(),
            unmatched_workers: mm.unmatched_workers(),
            unmatched_firms: mm.unmatched_firms(),
        }
    }
}

/// A one-to-one matching, viewed as the `(n+1)×(m+1)` binary matrix whose
/// last row and column stand for the unmatch option.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SparseMatching", into = "SparseMatching")]
pub struct MatchingMatrix {
    n: usize,
    m: usize,
    worker_partner: Vec<Option<usize>>,
    firm_partner: Vec<Option<usize>>,
}

impl MatchingMatrix {
    /// Everyone unmatched.
    pub fn unmatched(n: usize, m: usize) -> Self {
        MatchingMatrix { n, m, worker_partner: vec![None; n], firm_partner: vec![None; m] }
    }

    /// Builds a matching from each worker's firm (or `None`).
    pub fn from_worker_partners(m: usize, worker_partner: Vec<Option<usize>>) -> Result<Self> {
        let n = worker_partner.len();
        let mut firm_partner = vec![None; m];
        for (i, p) in worker_partner.iter().enumerate() {
            if let Some(j) = *p {
                if j >= m {
                    return Err(Error::OutOfRange { index: j, size: m });
                }
                if firm_partner[j].is_some() {
                    return Err(Error::InvalidArgument(format!("firm {j} matched twice")));
                }
                firm_partner[j] = Some(i);
            }
        }
        Ok(MatchingMatrix { n, m, worker_partner, firm_partner })
    }

    /// Builds a matching from a list of `(worker, firm)` pairs.
    pub fn from_pairs(n: usize, m: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut wp = vec![None; n];
        for &(i, j) in pairs {
            if i >= n {
                return Err(Error::OutOfRange { index: i, size: n });
            }
            if wp[i].is_some() {
                return Err(Error::InvalidArgument(format!("worker {i} matched twice")));
            }
            wp[i] = Some(j);
        }
        Self::from_worker_partners(m, wp)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn worker_partner(&self, i: usize) -> Option<usize> {
        self.worker_partner[i]
    }

    pub fn firm_partner(&self, j: usize) -> Option<usize> {
        self.firm_partner[j]
    }

    /// The option index an agent ends up with in its own preference order
    /// (the partner, or the unmatch index).
    #[inline]
    pub fn outcome(&self, agent: Agent) -> usize {
        match agent {
            Agent::Worker(i) => self.worker_partner[i].unwrap_or(self.m),
            Agent::Firm(j) => self.firm_partner[j].unwrap_or(self.n),
        }
    }

    /// Matched `(worker, firm)` pairs in worker order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.worker_partner
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|j| (i, j)))
            .collect()
    }

    pub fn unmatched_workers(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.worker_partner[i].is_none()).collect()
    }

    pub fn unmatched_firms(&self) -> Vec<usize> {
        (0..self.m).filter(|&j| self.firm_partner[j].is_none()).collect()
    }

    /// Matrix entry `(i, j)` with `i ∈ 0..=n`, `j ∈ 0..=m`.
    pub fn get(&self, i: usize, j: usize) -> u8 {
        match (i < self.n, j < self.m) {
            (true, true) => (self.worker_partner[i] == Some(j)) as u8,
            (true, false) => self.worker_partner[i].is_none() as u8,
            (false, true) => self.firm_partner[j].is_none() as u8,
            (false, false) => 0,
        }
    }

    /// Dense `(n+1)×(m+1)` matrix.
    pub fn dense(&self) -> Vec<Vec<u8>> {
        (0..=self.n).map(|i| (0..=self.m).map(|j| self.get(i, j)).collect()).collect()
    }

    /// Dense row-major f64 values, as fed to the tensor code.
    pub fn to_f64(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.n + 1) * (self.m + 1));
        for i in 0..=self.n {
            for j in 0..=self.m {
                out.push(self.get(i, j) as f64);
            }
        }
        out
    }
}

/// A broken matching-matrix condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape { rows: usize, cols: usize },
    NonBinary { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    ColSum { col: usize, sum: f64 },
    Corner,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Shape { rows, cols } => write!(f, "shape {rows}x{cols}"),
            Violation::NonBinary { row, col, value } => write!(f, "entry ({row},{col}) = {value} is not binary"),
            Violation::RowSum { row, sum } => write!(f, "row {row} sums to {sum}"),
            Violation::ColSum { col, sum } => write!(f, "column {col} sums to {sum}"),
            Violation::Corner => write!(f, "unmatch corner entry is nonzero"),
        }
    }
}

/// Checks that `entries` is a valid `(n+1)×(m+1)` matching matrix and, if
/// so, returns it as a [`MatchingMatrix`]. All violations are reported.
pub fn validate_matching(
    entries: &[Vec<f64>],
    n: usize,
    m: usize,
) -> std::result::Result<MatchingMatrix, Vec<Violation>> {
    if entries.len() != n + 1 || entries.iter().any(|r| r.len() != m + 1) {
        let cols = entries.first().map_or(0, |r| r.len());
        return Err(vec![Violation::Shape { rows: entries.len(), cols }]);
    }
    let mut violations = Vec::new();
    for (i, row) in entries.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                violations.push(Violation::NonBinary { row: i, col: j, value: v });
            }
        }
    }
    for (i, row) in entries.iter().take(n).enumerate() {
        let sum: f64 = row.iter().sum();
        if sum != 1.0 {
            violations.push(Violation::RowSum { row: i, sum });
        }
    }
    for j in 0..m {
        let sum: f64 = entries.iter().map(|r| r[j]).sum();
        if sum != 1.0 {
            violations.push(Violation::ColSum { col: j, sum });
        }
    }
    if entries[n][m] != 0.0 {
        violations.push(Violation::Corner);
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    let partners = (0..n).map(|i| (0..m).find(|&j| entries[i][j] == 1.0)).collect();
    MatchingMatrix::from_worker_partners(m, partners).map_err(|_| vec![Violation::Corner])
}

/// Same as [`validate_matching`] for a row-major flat buffer.
pub fn validate_matching_flat(
    values: &[f64],
    n: usize,
    m: usize,
) -> std::result::Result<MatchingMatrix, Vec<Violation>> {
    if values.len() != (n + 1) * (m + 1) {
        return Err(vec![Violation::Shape { rows: values.len() / (m + 1).max(1), cols: m + 1 }]);
    }
    let rows: Vec<Vec<f64>> = values.chunks(m + 1).map(|r| r.to_vec()).collect();
    validate_matching(&rows, n, m)
}

/// An agent ranking: `order[k]` is the global index of the agent at rank `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Ranking {
    order: Vec<usize>,
}

impl Ranking {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let len = order.len();
        let mut seen = vec![false; len];
        for &a in &order {
            if a >= len {
                return Err(Error::OutOfRange { index: a, size: len });
            }
            if std::mem::replace(&mut seen[a], true) {
                return Err(Error::InvalidArgument(format!("agent {a} ranked twice")));
            }
        }
        Ok(Ranking { order })
    }

    pub fn identity(len: usize) -> Self {
        Ranking { order: (0..len).collect() }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Agent holding rank `k` (0-based).
    pub fn agent_at(&self, k: usize) -> usize {
        self.order[k]
    }
}

/// Uniformly random order over `len` options.
pub fn random_order<R: rand::Rng + ?Sized>(rng: &mut R, len: usize) -> LinearOrder {
    let mut positions: Vec<usize> = (0..len).collect();
    positions.shuffle(rng);
    LinearOrder { positions }
}

/// Profile with every order drawn uniformly.
pub fn random_profile<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> PreferenceProfile {
    PreferenceProfile {
        workers: (0..n).map(|_| random_order(rng, m + 1)).collect(),
        firms: (0..m).map(|_| random_order(rng, n + 1)).collect(),
    }
}

/// Uniformly random ranking of `len` agents.
pub fn random_ranking<R: rand::Rng + ?Sized>(rng: &mut R, len: usize) -> Ranking {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    Ranking { order }
}

impl TryFrom<Vec<usize>> for Ranking {
    type Error = Error;
    fn try_from(order: Vec<usize>) -> Result<Self> {
        Ranking::new(order)
    }
}

impl From<Ranking> for Vec<usize> {
    fn from(r: Ranking) -> Vec<usize> {
        r.order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ord_top_bottom_and_middle() {
        // f1 ≻ ⊥ ≻ f2 with m = 2: options 0 (f1), 2 (⊥), 1 (f2)
        let o = LinearOrder::from_options(vec![0, 2, 1]).unwrap();
        assert_eq!(o.ord(0).unwrap(), 1);
        assert_eq!(o.ord(1).unwrap(), 3);
        assert_eq!(o.ord(2).unwrap(), 2);
        assert!(matches!(o.ord(3), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn order_round_trips_through_ranks_and_options() {
        let o = LinearOrder::from_options(vec![2, 0, 3, 1]).unwrap();
        let ranks: Vec<usize> = (0..4).map(|x| o.ord(x).unwrap()).collect();
        assert_eq!(LinearOrder::from_ranks(&ranks).unwrap(), o);
        assert_eq!(o.options(), vec![2, 0, 3, 1]);
        assert!(LinearOrder::from_options(vec![0, 0, 1]).is_err());
        assert!(LinearOrder::from_ranks(&[1, 1, 2]).is_err());
    }

    #[test]
    fn validate_reports_every_violation() {
        let ok = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let mm = validate_matching(&ok, 2, 2).unwrap();
        assert_eq!(mm.worker_partner(0), Some(0));
        assert_eq!(mm.firm_partner(1), None);

        let bad_row = vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]];
        let v = validate_matching(&bad_row, 2, 2).unwrap_err();
        assert!(v.contains(&Violation::RowSum { row: 0, sum: 2.0 }));

        let corner = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let v = validate_matching(&corner, 2, 2).unwrap_err();
        assert_eq!(v, vec![Violation::Corner]);

        let v = validate_matching(&[vec![1.0]], 2, 2).unwrap_err();
        assert!(matches!(v[0], Violation::Shape { .. }));
    }

    #[test]
    fn dense_matrix_has_unit_sums() {
        let mm = MatchingMatrix::from_pairs(3, 2, &[(0, 1), (2, 0)]).unwrap();
        let d = mm.dense();
        assert_eq!(d[0], vec![0, 1, 0]);
        assert_eq!(d[1], vec![0, 0, 1]);
        assert_eq!(d[3], vec![0, 0, 0]);
        let rows: Vec<Vec<f64>> = d.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
        assert_eq!(validate_matching(&rows, 3, 2).unwrap(), mm);
    }

    #[test]
    fn ranking_rejects_non_permutations() {
        assert!(Ranking::new(vec![0, 2, 1]).is_ok());
        assert!(Ranking::new(vec![0, 0, 1]).is_err());
        assert!(Ranking::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn serde_uses_option_lists() {
        let o = LinearOrder::from_options(vec![1, 2, 0]).unwrap();
        let s = serde_json::to_string(&o).unwrap();
        assert_eq!(s, "[1,2,0]");
        let back: LinearOrder = serde_json::from_str(&s).unwrap();
        assert_eq!(back, o);
        assert!(serde_json::from_str::<LinearOrder>("[1,1,0]").is_err());
    }
}
