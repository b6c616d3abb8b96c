use super::{Agent, MatchingMatrix, PreferenceProfile, Ranking};
use crate::error::{Error, Result};

/// Where an agent stands part-way through serial dictatorship.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentState {
    /// Not yet matched and has not had its turn.
    Free,
    /// Had its turn and chose the unmatch option.
    Unmatched,
    /// Had its turn and picked this partner.
    Active(usize),
    /// Picked by an earlier agent.
    Passive(usize),
}

impl AgentState {
    pub fn is_settled(self) -> bool {
        !matches!(self, AgentState::Free)
    }

    pub fn partner(self) -> Option<usize> {
        match self {
            AgentState::Active(p) | AgentState::Passive(p) => Some(p),
            _ => None,
        }
    }
}

/// Serial dictatorship, one round at a time.
///
/// Round `k` lets the agent at rank `k` pick its most preferred option among
/// the still-free agents of the other side and the unmatch option, unless it
/// was already picked by someone earlier.
#[derive(Debug, Clone)]
pub struct SdProcess<'a> {
    profile: &'a PreferenceProfile,
    ranking: &'a Ranking,
    round: usize,
    workers: Vec<AgentState>,
    firms: Vec<AgentState>,
}

impl<'a> SdProcess<'a> {
    pub fn new(profile: &'a PreferenceProfile, ranking: &'a Ranking) -> Result<Self> {
        let (n, m) = (profile.n(), profile.m());
        if ranking.len() != n + m {
            return Err(Error::dims(format!("ranking over {} agents, profile has {}", ranking.len(), n + m)));
        }
        Ok(SdProcess {
            profile,
            ranking,
            round: 0,
            workers: vec![AgentState::Free; n],
            firms: vec![AgentState::Free; m],
        })
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_done(&self) -> bool {
        self.round == self.ranking.len()
    }

    pub fn worker_states(&self) -> &[AgentState] {
        &self.workers
    }

    pub fn firm_states(&self) -> &[AgentState] {
        &self.firms
    }

    /// Runs one round. Returns the agent that held the round.
    pub fn step(&mut self) -> Option<Agent> {
        if self.is_done() {
            return None;
        }
        let n = self.profile.n();
        let agent = Agent::from_global(self.ranking.agent_at(self.round), n);
        self.round += 1;
        match agent {
            Agent::Worker(i) => {
                if self.workers[i].is_settled() {
                    return Some(agent);
                }
                let order = &self.profile.workers[i];
                let choice = order
                    .options()
                    .into_iter()
                    .find(|&o| o == order.unmatched() || self.firms[o] == AgentState::Free)
                    .expect("unmatch option is always available");
                if choice == order.unmatched() {
                    self.workers[i] = AgentState::Unmatched;
                } else {
                    self.workers[i] = AgentState::Active(choice);
                    self.firms[choice] = AgentState::Passive(i);
                }
            }
            Agent::Firm(j) => {
                if self.firms[j].is_settled() {
                    return Some(agent);
                }
                let order = &self.profile.firms[j];
                let choice = order
                    .options()
                    .into_iter()
                    .find(|&o| o == order.unmatched() || self.workers[o] == AgentState::Free)
                    .expect("unmatch option is always available");
                if choice == order.unmatched() {
                    self.firms[j] = AgentState::Unmatched;
                } else {
                    self.firms[j] = AgentState::Active(choice);
                    self.workers[choice] = AgentState::Passive(j);
                }
            }
        }
        Some(agent)
    }

    /// The partial outcome as an `(n+1)×(m+1)` 0/1 matrix: a one for every
    /// choice made so far (including choices of the unmatch option), nothing
    /// for agents still free.
    pub fn partial_matrix(&self) -> Vec<Vec<f64>> {
        let (n, m) = (self.profile.n(), self.profile.m());
        let mut out = vec![vec![0.0; m + 1]; n + 1];
        for (i, s) in self.workers.iter().enumerate() {
            match *s {
                AgentState::Active(j) | AgentState::Passive(j) => out[i][j] = 1.0,
                AgentState::Unmatched => out[i][m] = 1.0,
                AgentState::Free => {}
            }
        }
        for (j, s) in self.firms.iter().enumerate() {
            if *s == AgentState::Unmatched {
                out[n][j] = 1.0;
            }
        }
        out
    }

    /// Runs the remaining rounds and returns the matching.
    pub fn finish(mut self) -> MatchingMatrix {
        while self.step().is_some() {}
        let partners = self.workers.iter().map(|s| s.partner()).collect();
        MatchingMatrix::from_worker_partners(self.profile.m(), partners)
            .expect("serial dictatorship yields a one-to-one matching")
    }
}

/// Serial dictatorship under `ranking`.
pub fn run_sd(profile: &PreferenceProfile, ranking: &Ranking) -> Result<MatchingMatrix> {
    Ok(SdProcess::new(profile, ranking)?.finish())
}
