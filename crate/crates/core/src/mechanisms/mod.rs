//! Example mechanisms: random serial dictatorship, deferred acceptance and the
//! reward-maximising assignment under equal or weighted rewards.

mod da;
mod hungarian;

pub use da::deferred_acceptance;
pub use hungarian::{
    assignment_matrix, hungarian_matching, hungarian_max_assignment, matching_reward, reward, RewardKind,
    RewardSpec, FORBIDDEN,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matching::{random_ranking, run_sd, MatchingMatrix, PreferenceProfile, Ranking};

/// Serial dictatorship under a uniformly drawn ranking.
pub fn rsd<R: Rng + ?Sized>(profile: &PreferenceProfile, rng: &mut R) -> Result<(Ranking, MatchingMatrix)> {
    let ranking = random_ranking(rng, profile.n() + profile.m());
    let mm = run_sd(profile, &ranking)?;
    Ok((ranking, mm))
}

/// Mechanisms that produce training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Rsd,
    Da,
    Eh,
    Mh,
}

impl std::str::FromStr for Mechanism {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rsd" => Ok(Mechanism::Rsd),
            "da" => Ok(Mechanism::Da),
            "eh" => Ok(Mechanism::Eh),
            "mh" => Ok(Mechanism::Mh),
            other => Err(crate::Error::InvalidArgument(format!("unknown mechanism {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Rsd => "rsd",
            Mechanism::Da => "da",
            Mechanism::Eh => "eh",
            Mechanism::Mh => "mh",
        })
    }
}
