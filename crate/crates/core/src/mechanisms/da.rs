//! Worker-proposing deferred acceptance.

use crate::error::Result;
use crate::matching::{MatchingMatrix, PreferenceProfile};

/// Worker-optimal stable matching. Workers propose down their lists until
/// they reach the unmatch option; firms hold their best acceptable proposal.
pub fn deferred_acceptance(profile: &PreferenceProfile) -> Result<MatchingMatrix> {
    let (n, m) = (profile.n(), profile.m());
    let lists: Vec<Vec<usize>> = profile.workers.iter().map(|o| o.options()).collect();
    let mut next = vec![0usize; n];
    let mut held: Vec<Option<usize>> = vec![None; m];
    let mut free: Vec<usize> = (0..n).rev().collect();
    while let Some(i) = free.pop() {
        let Some(&j) = lists[i].get(next[i]) else { continue };
        next[i] += 1;
        if j == m {
            continue;
        }
        let firm = &profile.firms[j];
        if !firm.acceptable(i) {
            free.push(i);
            continue;
        }
        match held[j] {
            None => held[j] = Some(i),
            Some(k) if firm.prefers(i, k) => {
                held[j] = Some(i);
                free.push(k);
            }
            Some(_) => free.push(i),
        }
    }
    let mut partners = vec![None; n];
    for (j, h) in held.iter().enumerate() {
        if let Some(i) = *h {
            partners[i] = Some(j);
        }
    }
    MatchingMatrix::from_worker_partners(m, partners)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{
        check_strategy_proofness, enumerate_matchings, is_individually_rational, is_stable, random_profile,
        LinearOrder, Agent,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn order(opts: &[usize]) -> LinearOrder {
        LinearOrder::from_options(opts.to_vec()).unwrap()
    }

    #[test]
    fn stable_and_worker_optimal() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for t in 0..200 {
            let (n, m) = (1 + t % 4, 1 + (t / 4) % 4);
            let p = random_profile(&mut rng, n, m);
            let mm = deferred_acceptance(&p).unwrap();
            assert!(is_stable(&mm, &p).unwrap());
            assert!(is_individually_rational(&mm, &p).unwrap());
            // No stable matching gives any worker a better outcome.
            for other in enumerate_matchings(n, m) {
                if is_stable(&other, &p).unwrap() {
                    for i in 0..n {
                        let w = &p.workers[i];
                        assert!(
                            w.position(mm.outcome(Agent::Worker(i))) <= w.position(other.outcome(Agent::Worker(i)))
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn all_unmatch_first_leaves_everyone_single() {
        let p = PreferenceProfile::new(vec![order(&[2, 0, 1]); 2], vec![order(&[0, 1, 2]); 2]).unwrap();
        assert_eq!(deferred_acceptance(&p).unwrap(), MatchingMatrix::unmatched(2, 2));
    }

    #[test]
    fn firms_can_manipulate() {
        // Classic 3x3 market in which firm 0 gains by truncating its list.
        let p = PreferenceProfile::new(
            vec![order(&[1, 0, 2, 3]), order(&[0, 1, 2, 3]), order(&[0, 1, 2, 3])],
            vec![order(&[0, 2, 1, 3]), order(&[2, 0, 1, 3]), order(&[0, 1, 2, 3])],
        )
        .unwrap();
        let inst = crate::matching::Instance::blank(3, 3);
        let devs = check_strategy_proofness(|_, q| deferred_acceptance(q), &inst, &p).unwrap();
        assert!(devs.iter().all(|d| matches!(d.agent, Agent::Firm(_))));
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut found = !devs.is_empty();
        for _ in 0..200 {
            if found {
                break;
            }
            let q = random_profile(&mut rng, 3, 3);
            found = !check_strategy_proofness(|_, r| deferred_acceptance(r), &inst, &q).unwrap().is_empty();
        }
        assert!(found);
    }
}
