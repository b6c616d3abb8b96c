//! Exhaustive property oracles: stability, individual rationality, Pareto
//! efficiency and strategy-proofness. All of these enumerate, so they refuse
//! instances above a fixed size.

use super::{Agent, Instance, LinearOrder, MatchingMatrix, PreferenceProfile};
use crate::error::{Error, Result};

/// Largest side size accepted by [`is_pareto_efficient`].
pub const PARETO_MAX_SIDE: usize = 5;
/// Largest opposite-side size accepted by [`check_strategy_proofness`].
pub const SP_MAX_SIDE: usize = 4;

fn check_dims(mm: &MatchingMatrix, profile: &PreferenceProfile) -> Result<()> {
    if mm.n() != profile.n() || mm.m() != profile.m() {
        return Err(Error::dims(format!(
            "matching is {}x{}, profile is {}x{}",
            mm.n(),
            mm.m(),
            profile.n(),
            profile.m()
        )));
    }
    Ok(())
}

/// All `(worker, firm)` pairs that strictly prefer each other to their
/// current outcome.
pub fn blocking_pairs(mm: &MatchingMatrix, profile: &PreferenceProfile) -> Result<Vec<(usize, usize)>> {
    check_dims(mm, profile)?;
    let mut out = Vec::new();
    for (i, wo) in profile.workers.iter().enumerate() {
        let w_now = mm.outcome(Agent::Worker(i));
        for (j, fo) in profile.firms.iter().enumerate() {
            if wo.prefers(j, w_now) && fo.prefers(i, mm.outcome(Agent::Firm(j))) {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

/// No agent ends up with something worse than staying unmatched.
pub fn is_individually_rational(mm: &MatchingMatrix, profile: &PreferenceProfile) -> Result<bool> {
    check_dims(mm, profile)?;
    let workers_ok = (0..profile.n()).all(|i| profile.workers[i].acceptable(mm.outcome(Agent::Worker(i))));
    let firms_ok = (0..profile.m()).all(|j| profile.firms[j].acceptable(mm.outcome(Agent::Firm(j))));
    Ok(workers_ok && firms_ok)
}

/// Individually rational with no blocking pair.
pub fn is_stable(mm: &MatchingMatrix, profile: &PreferenceProfile) -> Result<bool> {
    Ok(is_individually_rational(mm, profile)? && blocking_pairs(mm, profile)?.is_empty())
}

/// Every one-to-one matching between `n` workers and `m` firms.
pub fn enumerate_matchings(n: usize, m: usize) -> Vec<MatchingMatrix> {
    fn rec(i: usize, m: usize, used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, out: &mut Vec<MatchingMatrix>) {
        if i == cur.len() {
            out.push(MatchingMatrix::from_worker_partners(m, cur.clone()).expect("injective by construction"));
            return;
        }
        cur[i] = None;
        rec(i + 1, m, used, cur, out);
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur[i] = Some(j);
                rec(i + 1, m, used, cur, out);
                used[j] = false;
            }
        }
        cur[i] = None;
    }
    let mut out = Vec::new();
    rec(0, m, &mut vec![false; m], &mut vec![None; n], &mut out);
    out
}

/// Does `other` Pareto dominate `mm` under `profile`?
pub fn pareto_dominates(other: &MatchingMatrix, mm: &MatchingMatrix, profile: &PreferenceProfile) -> bool {
    let mut strict = false;
    let agents = (0..profile.n()).map(Agent::Worker).chain((0..profile.m()).map(Agent::Firm));
    for a in agents {
        let order = profile.order(a);
        let (new, old) = (order.position(other.outcome(a)), order.position(mm.outcome(a)));
        if new > old {
            return false;
        }
        strict |= new < old;
    }
    strict
}

/// No matching Pareto dominates `mm`. Enumerates every matching, so both
/// sides must have at most [`PARETO_MAX_SIDE`] agents.
pub fn is_pareto_efficient(mm: &MatchingMatrix, profile: &PreferenceProfile) -> Result<bool> {
    check_dims(mm, profile)?;
    if profile.n() > PARETO_MAX_SIDE || profile.m() > PARETO_MAX_SIDE {
        return Err(Error::TooLarge(format!(
            "Pareto check needs n, m <= {PARETO_MAX_SIDE}, got {}x{}",
            profile.n(),
            profile.m()
        )));
    }
    Ok(!enumerate_matchings(profile.n(), profile.m())
        .iter()
        .any(|other| pareto_dominates(other, mm, profile)))
}

/// `#{b : outcome ≽ b}` over the agent's full option set.
pub fn payoff(order: &LinearOrder, outcome: usize) -> usize {
    order.len() - order.position(outcome)
}

/// Every strict order over `len` options, in lexicographic order of the
/// option lists.
pub fn all_linear_orders(len: usize) -> Vec<LinearOrder> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<LinearOrder>) {
        if prefix.len() == used.len() {
            out.push(LinearOrder::from_options(prefix.clone()).expect("permutation"));
            return;
        }
        for o in 0..used.len() {
            if !used[o] {
                used[o] = true;
                prefix.push(o);
                rec(prefix, used, out);
                prefix.pop();
                used[o] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(len), &mut vec![false; len], &mut out);
    out
}

/// A misreport that strictly improves the reporting agent's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub agent: Agent,
    pub misreport: LinearOrder,
    pub truthful_payoff: usize,
    pub deviating_payoff: usize,
}

/// Searches every unilateral misreport of every agent for a profitable
/// deviation. Outcomes are scored with the agent's true preference.
pub fn check_strategy_proofness<F>(
    mechanism: F,
    instance: &Instance,
    profile: &PreferenceProfile,
) -> Result<Vec<Deviation>>
where
    F: Fn(&Instance, &PreferenceProfile) -> Result<MatchingMatrix>,
{
    let (n, m) = (profile.n(), profile.m());
    if n > SP_MAX_SIDE || m > SP_MAX_SIDE {
        return Err(Error::TooLarge(format!(
            "misreport enumeration needs n, m <= {SP_MAX_SIDE}, got {n}x{m}"
        )));
    }
    let truthful = mechanism(instance, profile)?;
    let worker_orders = all_linear_orders(m + 1);
    let firm_orders = all_linear_orders(n + 1);
    let mut found = Vec::new();
    let agents = (0..n).map(Agent::Worker).chain((0..m).map(Agent::Firm));
    for agent in agents {
        let truth = profile.order(agent);
        let honest = payoff(truth, truthful.outcome(agent));
        let candidates = match agent {
            Agent::Worker(_) => &worker_orders,
            Agent::Firm(_) => &firm_orders,
        };
        for lie in candidates.iter().filter(|o| *o != truth) {
            let outcome = mechanism(instance, &profile.with_order(agent, lie.clone())?)?;
            let got = payoff(truth, outcome.outcome(agent));
            if got > honest {
                found.push(Deviation {
                    agent,
                    misreport: lie.clone(),
                    truthful_payoff: honest,
                    deviating_payoff: got,
                });
            }
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{run_sd, Ranking};

    fn order(opts: &[usize]) -> LinearOrder {
        LinearOrder::from_options(opts.to_vec()).unwrap()
    }

    fn mutual_1x1() -> PreferenceProfile {
        PreferenceProfile::new(vec![order(&[0, 1])], vec![order(&[0, 1])]).unwrap()
    }

    #[test]
    fn unmatched_pair_blocks() {
        let p = mutual_1x1();
        let mm = MatchingMatrix::unmatched(1, 1);
        assert_eq!(blocking_pairs(&mm, &p).unwrap(), vec![(0, 0)]);
        assert!(is_individually_rational(&mm, &p).unwrap());
        assert!(!is_stable(&mm, &p).unwrap());
        assert!(!is_pareto_efficient(&mm, &p).unwrap());
    }

    #[test]
    fn unacceptable_partner_breaks_ir() {
        let p = PreferenceProfile::new(vec![order(&[1, 0])], vec![order(&[0, 1])]).unwrap();
        let mm = MatchingMatrix::from_pairs(1, 1, &[(0, 0)]).unwrap();
        assert!(!is_individually_rational(&mm, &p).unwrap());
    }

    #[test]
    fn matching_counts() {
        // sum_k C(n,k) C(m,k) k!
        assert_eq!(enumerate_matchings(1, 1).len(), 2);
        assert_eq!(enumerate_matchings(2, 2).len(), 7);
        assert_eq!(enumerate_matchings(3, 3).len(), 34);
        assert_eq!(enumerate_matchings(2, 3).len(), 13);
        assert_eq!(all_linear_orders(4).len(), 24);
    }

    #[test]
    fn payoff_counts_weakly_worse_options() {
        let o = order(&[2, 0, 1]);
        assert_eq!(payoff(&o, 2), 3);
        assert_eq!(payoff(&o, 1), 1);
    }

    #[test]
    fn size_guards() {
        let big = PreferenceProfile::new(
            (0..6).map(|_| LinearOrder::identity(7)).collect(),
            (0..6).map(|_| LinearOrder::identity(7)).collect(),
        )
        .unwrap();
        let mm = MatchingMatrix::unmatched(6, 6);
        assert!(matches!(is_pareto_efficient(&mm, &big), Err(Error::TooLarge(_))));
        let sd = |_: &Instance, p: &PreferenceProfile| run_sd(p, &Ranking::identity(12));
        assert!(matches!(
            check_strategy_proofness(sd, &Instance::blank(6, 6), &big),
            Err(Error::TooLarge(_))
        ));
    }
}
