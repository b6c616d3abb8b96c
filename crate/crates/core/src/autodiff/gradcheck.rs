use super::{backward, Tensor};
use crate::error::{Error, Result};

/// Largest coordinate-wise gap between the analytic gradient of `f` at `x`
/// and a central difference with step `eps`, relative to `max(1, |analytic|)`.
pub fn grad_check<F>(f: F, shape: &[usize], x: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let leaf = Tensor::param(shape, x.to_vec())?;
    let out = f(&leaf)?;
    let analytic = backward(&out)?.get_or_zeros(&leaf);
    let eval = |v: Vec<f64>| -> Result<f64> {
        let y = f(&Tensor::new(shape, v)?)?.item()?;
        if !y.is_finite() {
            return Err(Error::NonFinite("objective during finite differences".into()));
        }
        Ok(y)
    };
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += eps;
        minus[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Outcome of [`grad_check_one_sided`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    /// Same measure as [`grad_check`].
    pub max_rel_err: f64,
    /// Some coordinate's forward and backward differences disagree by more
    /// than `kink_tol`, so a non-differentiable point lies within `eps`.
    pub near_kink: bool,
}

/// [`grad_check`] that also flags kinks within `eps` of `x`.
pub fn grad_check_one_sided<F>(f: F, shape: &[usize], x: &[f64], eps: f64, kink_tol: f64) -> Result<GradReport>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let leaf = Tensor::param(shape, x.to_vec())?;
    let out = f(&leaf)?;
    let center = out.item()?;
    let analytic = backward(&out)?.get_or_zeros(&leaf);
    let eval = |v: Vec<f64>| -> Result<f64> {
        let y = f(&Tensor::new(shape, v)?)?.item()?;
        if !y.is_finite() {
            return Err(Error::NonFinite("objective during finite differences".into()));
        }
        Ok(y)
    };
    let mut report = GradReport { max_rel_err: 0.0, near_kink: false };
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += eps;
        minus[i] -= eps;
        let (fp, fm) = (eval(plus)?, eval(minus)?);
        let numeric = (fp - fm) / (2.0 * eps);
        let scale = analytic[i].abs().max(1.0);
        let (fwd, bwd) = ((fp - center) / eps, (center - fm) / eps);
        if (fwd - bwd).abs() > kink_tol * numeric.abs().max(1.0) {
            report.near_kink = true;
        }
        report.max_rel_err = report.max_rel_err.max((analytic[i] - numeric).abs() / scale);
    }
    Ok(report)
}
