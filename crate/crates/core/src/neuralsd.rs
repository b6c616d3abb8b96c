//! The learned mechanism: a context-driven ranking fed through serial
//! dictatorship. Training runs the soft ranking through the tensor form of
//! serial dictatorship; deployment sorts the scores and runs the discrete
//! algorithm, which gives the same matching for a hard ranking.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::matching::{run_sd, Instance, MatchingMatrix, PreferenceProfile, Ranking};
use crate::metrics::{preference_vectors, stv_raw_tensor};
use crate::ranking::{hard_ranking, ranking_block, ParamTensors, RankingParams};
use crate::tsd::{build_preference_tensor, tsd};

/// Result of a training-mode pass.
pub struct ModelOutput {
    /// `(n+1)×(m+1)`, not necessarily a matching.
    pub soft_matching: Tensor,
    /// Agents × ranks.
    pub soft_ranking: Tensor,
}

fn check_sizes(profile: &PreferenceProfile, instance: &Instance) -> Result<()> {
    if (profile.n(), profile.m()) != (instance.n, instance.m) {
        return Err(Error::dims(format!(
            "profile is {}x{}, contexts are {}x{}",
            profile.n(),
            profile.m(),
            instance.n,
            instance.m
        )));
    }
    Ok(())
}

pub fn forward_train(profile: &PreferenceProfile, instance: &Instance, params: &ParamTensors) -> Result<ModelOutput> {
    check_sizes(profile, instance)?;
    let soft_ranking = ranking_block(instance, params)?.transpose()?;
    let soft_matching = tsd(&build_preference_tensor(profile)?, &soft_ranking)?;
    Ok(ModelOutput { soft_matching, soft_ranking })
}

/// The deployed mechanism. The ranking depends on contexts only, never on
/// reports.
pub fn forward_infer(profile: &PreferenceProfile, instance: &Instance, params: &RankingParams) -> Result<MatchingMatrix> {
    Ok(infer_with_ranking(profile, instance, params)?.1)
}

pub fn infer_with_ranking(
    profile: &PreferenceProfile,
    instance: &Instance,
    params: &RankingParams,
) -> Result<(Ranking, MatchingMatrix)> {
    check_sizes(profile, instance)?;
    let ranking = hard_ranking(instance, params)?;
    let mm = run_sd(profile, &ranking)?;
    Ok((ranking, mm))
}

/// Mean over worker rows of the cross entropy between the softmax of the
/// predicted row and the target row. The unmatch row is left out.
pub fn loss(soft: &Tensor, target: &MatchingMatrix) -> Result<Tensor> {
    let (n, m) = (target.n(), target.m());
    if soft.shape() != [n + 1, m + 1] {
        return Err(Error::dims(format!("prediction of shape {:?} for a {n}x{m} matching", soft.shape())));
    }
    let rows: Vec<f64> = target.to_f64()[..n * (m + 1)].to_vec();
    let t = Tensor::new(&[n, m + 1], rows)?;
    Ok(soft.top_rows(n)?.log_softmax_rows()?.mul(&t)?.sum().scale(-1.0 / n as f64))
}

/// [`loss`] plus `lambda / dataset_len` times the stability violation of the
/// soft prediction.
pub fn loss_with_stability_reg(
    soft: &Tensor,
    target: &MatchingMatrix,
    profile: &PreferenceProfile,
    lambda: f64,
    dataset_len: usize,
) -> Result<Tensor> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let base = loss(soft, target)?;
    if lambda == 0.0 {
        return Ok(base);
    }
    if dataset_len == 0 {
        return Err(Error::InvalidArgument("dataset length must be positive".into()));
    }
    let stv = stv_raw_tensor(soft, &preference_vectors(profile))?;
    base.add(&stv.scale(lambda / dataset_len as f64))
}
