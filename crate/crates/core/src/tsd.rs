//! Serial dictatorship written as tensor operations.
//!
//! Each agent's preference is a permutation matrix with options as rows and
//! rank positions as columns. A ranking is an `(n+m)×(n+m)` matrix whose
//! column `k` marks the agent holding rank `k`. Every round contracts the
//! preference stacks with that column, finds the chosen counterpart as the
//! leftmost occupied column of the contracted matrix, writes it into the
//! matching and masks out whoever has been taken. On hard inputs the result
//! is exactly the discrete serial dictatorship; on a soft ranking the same
//! arithmetic yields a differentiable relaxation.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::matching::{AgentState, PreferenceProfile, Ranking, SdProcess};

/// Per-agent preference matrices for both sides.
#[derive(Debug, Clone)]
pub struct PreferenceTensor {
    /// `n × (m+1) × (m+1)`; entry `[i, option, position]`.
    pub workers: Tensor,
    /// `m × (n+1) × (n+1)`.
    pub firms: Tensor,
}

impl PreferenceTensor {
    pub fn n(&self) -> usize {
        self.workers.shape()[0]
    }

    pub fn m(&self) -> usize {
        self.firms.shape()[0]
    }
}

fn stack_of(orders: &[crate::matching::LinearOrder], opts: usize) -> Result<Tensor> {
    let mut data = vec![0.0; orders.len() * opts * opts];
    for (a, order) in orders.iter().enumerate() {
        for o in 0..opts {
            data[(a * opts + o) * opts + order.position(o)] = 1.0;
        }
    }
    Tensor::new(&[orders.len(), opts, opts], data)
}

/// One-hot encoding of every order: a 1 at `(option, position of option)`.
pub fn build_preference_tensor(profile: &PreferenceProfile) -> Result<PreferenceTensor> {
    Ok(PreferenceTensor {
        workers: stack_of(&profile.workers, profile.m() + 1)?,
        firms: stack_of(&profile.firms, profile.n() + 1)?,
    })
}

/// Hard ranking matrix: entry `(agent, rank)` is 1 when `agent` holds `rank`.
pub fn build_ranking_matrix(ranking: &Ranking) -> Tensor {
    let k = ranking.len();
    let mut data = vec![0.0; k * k];
    for (rank, &agent) in ranking.order().iter().enumerate() {
        data[agent * k + rank] = 1.0;
    }
    Tensor::new(&[k, k], data).expect("square buffer")
}

/// Per-round row masks. Round `k` of the worker-side masks carries `-R[n+j, k]`
/// across row `j` of a worker preference matrix (the firm acting in round `k`
/// is no longer available); the firm-side masks do the same with worker rows.
#[derive(Debug, Clone)]
pub struct RankingMasks {
    pub workers: Vec<Tensor>,
    pub firms: Vec<Tensor>,
}

fn row_mask(selector: &Tensor) -> Result<Tensor> {
    let rows = selector.concat(&Tensor::vector(vec![0.0]))?;
    let len = rows.len();
    rows.neg().repeat(len)?.transpose()
}

pub fn create_ranking_masks(r: &Tensor, n: usize, m: usize) -> Result<RankingMasks> {
    if r.shape() != [n + m, n + m] {
        return Err(Error::dims(format!("ranking matrix {:?} for n={n}, m={m}", r.shape())));
    }
    let mut workers = Vec::with_capacity(n + m);
    let mut firms = Vec::with_capacity(n + m);
    for k in 0..n + m {
        workers.push(row_mask(&r.column(k, n..n + m)?)?);
        firms.push(row_mask(&r.column(k, 0..n)?)?);
    }
    Ok(RankingMasks { workers, firms })
}

/// `P · triangle_window(cumsum(colsum(P)))`: for a matrix with at most one 1
/// per row and column, the leftmost nonzero column (or zeros).
pub fn find_counterpart(p: &Tensor) -> Result<Tensor> {
    let window = p.colsum()?.cumsum()?.triangle_window();
    p.matvec(&window)
}

/// Step-by-step execution, exposed for the loop-invariant probe.
pub struct TsdState {
    n: usize,
    m: usize,
    round: usize,
    workers: Tensor,
    firms: Tensor,
    ranking: Tensor,
    masks: RankingMasks,
    matching: Tensor,
    keep_firm_rows: Tensor,
    keep_worker_rows: Tensor,
}

impl TsdState {
    /// Stacks are cloned handles; tensors are immutable, so callers' copies
    /// are never modified.
    pub fn new(prefs: &PreferenceTensor, ranking: &Tensor) -> Result<Self> {
        let (n, m) = (prefs.n(), prefs.m());
        if prefs.workers.shape() != [n, m + 1, m + 1] || prefs.firms.shape() != [m, n + 1, n + 1] {
            return Err(Error::dims("preference stacks disagree on n and m"));
        }
        let masks = create_ranking_masks(ranking, n, m)?;
        let indicator = |k: usize| {
            let mut v = vec![1.0; k + 1];
            v[k] = 0.0;
            Tensor::vector(v)
        };
        Ok(TsdState {
            n,
            m,
            round: 0,
            workers: prefs.workers.clone(),
            firms: prefs.firms.clone(),
            ranking: ranking.clone(),
            masks,
            matching: Tensor::zeros(&[n + 1, m + 1])?,
            keep_firm_rows: indicator(m),
            keep_worker_rows: indicator(n),
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_done(&self) -> bool {
        self.round == self.n + self.m
    }

    pub fn workers(&self) -> &Tensor {
        &self.workers
    }

    pub fn firms(&self) -> &Tensor {
        &self.firms
    }

    pub fn matching(&self) -> &Tensor {
        &self.matching
    }

    pub fn step(&mut self) -> Result<()> {
        if self.is_done() {
            return Err(Error::InvalidArgument("all rounds already executed".into()));
        }
        let (n, m, k) = (self.n, self.m, self.round);
        let zero = Tensor::vector(vec![0.0]);

        let sel_w = self.ranking.column(k, 0..n)?;
        let sel_f = self.ranking.column(k, n..n + m)?;
        let pick_w = find_counterpart(&self.workers.stack_contract(&sel_w)?)?;
        let pick_f = find_counterpart(&self.firms.stack_contract(&sel_f)?)?;

        let by_workers = sel_w.concat(&zero)?.outer(&pick_w)?;
        let by_firms = sel_f.concat(&zero)?.outer(&pick_f)?.transpose()?;
        self.matching = self.matching.add(&by_workers)?.add(&by_firms)?;

        let taken_firms = pick_w.mul(&self.keep_firm_rows)?.neg().repeat(m + 1)?.transpose()?;
        let taken_workers = pick_f.mul(&self.keep_worker_rows)?.neg().repeat(n + 1)?.transpose()?;

        let w_mask = self.masks.workers[k].add(&taken_firms)?;
        let f_mask = self.masks.firms[k].add(&taken_workers)?;
        let keep_w = pick_f.rsub_scalar(1.0).head(n)?;
        let keep_f = pick_w.rsub_scalar(1.0).head(m)?;
        self.workers = self.workers.add_broadcast(&w_mask)?.relu().stack_scale(&keep_w)?;
        self.firms = self.firms.add_broadcast(&f_mask)?.relu().stack_scale(&keep_f)?;
        self.round += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<Tensor> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.matching)
    }
}

/// The `(n+1)×(m+1)` matching produced under ranking matrix `ranking`.
pub fn tsd(prefs: &PreferenceTensor, ranking: &Tensor) -> Result<Tensor> {
    TsdState::new(prefs, ranking)?.finish()
}

/// Which loop invariant failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Invariant {
    /// Some worker matrix has a non-binary entry or a row/column with two ones.
    WorkerShape,
    FirmShape,
    /// An agent's matrix is zero exactly when it has been picked by someone.
    ZeroIffPassive,
    /// Rows of settled agents are zero; every other row is untouched.
    SettledRows,
    /// The accumulated matrix equals the partial discrete result.
    PartialMatching,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantViolation {
    /// Rounds completed when the check failed.
    pub round: usize,
    pub invariant: Invariant,
    pub detail: String,
}

fn at_most_one_per_line(block: &[f64], size: usize) -> bool {
    if block.iter().any(|&x| x != 0.0 && x != 1.0) {
        return false;
    }
    (0..size).all(|i| block[i * size..(i + 1) * size].iter().sum::<f64>() <= 1.0)
        && (0..size).all(|j| (0..size).map(|i| block[i * size + j]).sum::<f64>() <= 1.0)
}

fn check_round(
    state: &TsdState,
    sd: &SdProcess<'_>,
    initial: &PreferenceTensor,
) -> std::result::Result<(), InvariantViolation> {
    let fail = |invariant, detail: String| Err(InvariantViolation { round: state.round, invariant, detail });
    let sides = [
        (state.workers(), &initial.workers, sd.worker_states(), sd.firm_states(), Invariant::WorkerShape, "worker"),
        (state.firms(), &initial.firms, sd.firm_states(), sd.worker_states(), Invariant::FirmShape, "firm"),
    ];
    for (stack, start, own, other, shape_inv, label) in sides {
        let size = stack.shape()[1];
        for (a, (block, orig)) in stack.data().chunks(size * size).zip(start.data().chunks(size * size)).enumerate() {
            if !at_most_one_per_line(block, size) {
                return fail(shape_inv, format!("{label} {a}"));
            }
            let passive = matches!(own[a], AgentState::Passive(_));
            let zero = block.iter().all(|&x| x == 0.0);
            if zero != passive {
                return fail(Invariant::ZeroIffPassive, format!("{label} {a}: zero={zero}, passive={passive}"));
            }
            if passive {
                continue;
            }
            for row in 0..size {
                let settled = row < size - 1 && other[row].is_settled();
                let got = &block[row * size..(row + 1) * size];
                let ok = if settled { got.iter().all(|&x| x == 0.0) } else { got == &orig[row * size..(row + 1) * size] };
                if !ok {
                    return fail(Invariant::SettledRows, format!("{label} {a}, option row {row}"));
                }
            }
        }
    }
    let expected: Vec<f64> = sd.partial_matrix().concat();
    if state.matching().data() != expected.as_slice() {
        return fail(Invariant::PartialMatching, format!("{:?} vs {expected:?}", state.matching().data()));
    }
    Ok(())
}

/// Runs the tensor and discrete processes side by side for rounds `0..=rounds`
/// and checks every loop invariant after each round.
pub fn tsd_loop_invariant_probe(
    profile: &PreferenceProfile,
    ranking: &Ranking,
    rounds: usize,
) -> Result<std::result::Result<(), InvariantViolation>> {
    let prefs = build_preference_tensor(profile)?;
    let mut state = TsdState::new(&prefs, &build_ranking_matrix(ranking))?;
    let mut sd = SdProcess::new(profile, ranking)?;
    let rounds = rounds.min(ranking.len());
    loop {
        if let Err(v) = check_round(&state, &sd, &prefs) {
            return Ok(Err(v));
        }
        if state.round() == rounds {
            return Ok(Ok(()));
        }
        state.step()?;
        sd.step();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{random_profile, random_ranking, run_sd, LinearOrder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn order(opts: &[usize]) -> LinearOrder {
        LinearOrder::from_options(opts.to_vec()).unwrap()
    }

    #[test]
    fn preference_matrices_follow_positions() {
        let p = PreferenceProfile::new(vec![order(&[0, 1, 2]), order(&[2, 0, 1])], vec![order(&[0, 1, 2]); 2]).unwrap();
        let t = build_preference_tensor(&p).unwrap();
        let block = |i: usize| t.workers.data()[i * 9..(i + 1) * 9].to_vec();
        assert_eq!(block(0), vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        // f1 -> position 2, f2 -> position 3, ⊥ -> position 1
        assert_eq!(block(1), vec![0., 1., 0., 0., 0., 1., 1., 0., 0.]);
    }

    #[test]
    fn ranking_matrix_examples() {
        assert_eq!(build_ranking_matrix(&Ranking::identity(3)).data(), &[1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let r = build_ranking_matrix(&Ranking::new(vec![1, 0]).unwrap());
        assert_eq!(r.data(), &[0., 1., 1., 0.]);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..20 {
            let rk = random_ranking(&mut rng, 6);
            let rows = build_ranking_matrix(&rk).to_rows();
            let back: Vec<usize> = (0..6).map(|k| (0..6).find(|&i| rows[i][k] == 1.0).unwrap()).collect();
            assert_eq!(back, rk.order());
        }
    }

    #[test]
    fn mask_examples() {
        // n = m = 1, rank 0 held by the firm
        let r = build_ranking_matrix(&Ranking::new(vec![1, 0]).unwrap());
        let masks = create_ranking_masks(&r, 1, 1).unwrap();
        assert_eq!(masks.workers[0].data(), &[-1., -1., 0., 0.]);
        assert_eq!(masks.workers[1].data(), &[0., 0., 0., 0.]);
        assert_eq!(masks.firms[1].data(), &[-1., -1., 0., 0.]);
        let soft = Tensor::matrix(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let masks = create_ranking_masks(&soft, 1, 1).unwrap();
        assert_eq!(masks.workers[0].data(), &[-0.5, -0.5, 0., 0.]);
    }

    #[test]
    fn counterpart_examples() {
        let z = Tensor::zeros(&[2, 2]).unwrap();
        assert_eq!(find_counterpart(&z).unwrap().data(), &[0., 0.]);
        let p = Tensor::matrix(&[vec![0., 1.], vec![1., 0.]]).unwrap();
        assert_eq!(find_counterpart(&p).unwrap().data(), &[0., 1.]);
        let p = Tensor::matrix(&[vec![0., 0., 1.], vec![0., 0., 0.]]).unwrap();
        assert_eq!(find_counterpart(&p).unwrap().data(), &[1., 0.]);
    }

    #[test]
    fn hand_traced_two_by_two() {
        let profile = PreferenceProfile::new(
            vec![order(&[0, 1, 2]), order(&[0, 2, 1])],
            vec![order(&[1, 0, 2]), order(&[0, 2, 1])],
        )
        .unwrap();
        let prefs = build_preference_tensor(&profile).unwrap();
        let r = build_ranking_matrix(&Ranking::new(vec![0, 3, 1, 2]).unwrap());
        let out = tsd(&prefs, &r).unwrap();
        assert_eq!(out.data(), &[1., 0., 0., 0., 0., 1., 0., 1., 0.]);
    }

    #[test]
    fn single_pair_under_both_rankings() {
        let profile = PreferenceProfile::new(vec![order(&[0, 1])], vec![order(&[0, 1])]).unwrap();
        let prefs = build_preference_tensor(&profile).unwrap();
        for r in [vec![0, 1], vec![1, 0]] {
            let out = tsd(&prefs, &build_ranking_matrix(&Ranking::new(r).unwrap())).unwrap();
            assert_eq!(out.data(), &[1., 0., 0., 0.]);
        }
    }

    #[test]
    fn equals_discrete_sd_on_random_markets() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for _ in 0..300 {
            let (n, m) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let profile = random_profile(&mut rng, n, m);
            let ranking = random_ranking(&mut rng, n + m);
            let out = tsd(&build_preference_tensor(&profile).unwrap(), &build_ranking_matrix(&ranking)).unwrap();
            let expected = run_sd(&profile, &ranking).unwrap().to_f64();
            assert_eq!(out.data(), expected.as_slice());
        }
    }

    #[test]
    fn loop_invariants_hold_every_round() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (n, m) = (rng.random_range(1..=4), rng.random_range(1..=4));
            let profile = random_profile(&mut rng, n, m);
            let ranking = random_ranking(&mut rng, n + m);
            let report = tsd_loop_invariant_probe(&profile, &ranking, n + m).unwrap();
            assert_eq!(report, Ok(()));
        }
    }

    #[test]
    fn probe_catches_a_wrong_partial_matching() {
        let profile = PreferenceProfile::new(vec![order(&[0, 1])], vec![order(&[0, 1])]).unwrap();
        let ranking = Ranking::identity(2);
        let prefs = build_preference_tensor(&profile).unwrap();
        let mut state = TsdState::new(&prefs, &build_ranking_matrix(&ranking)).unwrap();
        let sd = SdProcess::new(&profile, &ranking).unwrap();
        state.step().unwrap();
        let v = check_round(&state, &sd, &prefs).unwrap_err();
        assert_eq!(v.round, 1);
    }

    #[test]
    fn rejects_bad_shapes() {
        let profile = PreferenceProfile::new(vec![order(&[0, 1])], vec![order(&[0, 1])]).unwrap();
        let prefs = build_preference_tensor(&profile).unwrap();
        assert!(tsd(&prefs, &Tensor::zeros(&[3, 3]).unwrap()).is_err());
    }
}
