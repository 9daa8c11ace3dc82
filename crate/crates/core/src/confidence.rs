//! Concentration thresholds, the `λ(t) = c·log t` schedule and the eigenvalue
//! condition that gates the stopping rule.

use serde::{Deserialize, Serialize};

use crate::error::{LogTsError, Result};
use crate::estimation::{fisher_empirical, RunState};
use crate::model::LINK_DERIVATIVE_BOUND;
use crate::scalar::Scalar;

/// How the eigenvalue gate of the stopping rule is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BCheckMode {
    /// `λ_min(A_t) > κ₀ λ(t)`, using the oracle curvature bound κ₀.
    ExactKappa0,
    /// `λ_min(H_t(θ̂_t)) > λ(t)`: the practical heuristic, stops earlier.
    EmpiricalHessian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig<T> {
    pub delta: T,
    /// Radius S of the parameter ball.
    pub radius: T,
    pub dim: usize,
    /// Bound on the link derivative, fixed to 1/4 for the logistic link.
    pub link_bound: T,
    /// Coefficient `c` of `λ(t) = c·log t`.
    pub lambda_coef: T,
    pub b_check_mode: BCheckMode,
}

impl<T: Scalar> ThresholdConfig<T> {
    /// Defaults: `c = d`, empirical Hessian gate.
    pub fn new(delta: T, radius: T, dim: usize) -> Result<Self> {
        let cfg = Self {
            delta,
            radius,
            dim,
            link_bound: T::lit(LINK_DERIVATIVE_BOUND),
            lambda_coef: T::from_count(dim as u64),
            b_check_mode: BCheckMode::EmpiricalHessian,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(LogTsError::config(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.lambda_coef > T::zero()) {
            return Err(LogTsError::config("lambda coefficient must be positive"));
        }
        if !(self.radius >= T::zero()) || self.dim == 0 {
            return Err(LogTsError::config("radius must be nonnegative and dim positive"));
        }
        Ok(())
    }
}

/// `λ(t) = c·log t`, floored at `c·log 2` for `t < 2`.
pub fn lambda_t<T: Scalar>(cfg: &ThresholdConfig<T>, t: u64) -> T {
    cfg.lambda_coef * T::from_count(t.max(2)).ln()
}

/// `γ_t(δ) = √λ/2 + (4/√λ)·log((2^d/δ)(L t/(λ d))^{d/2})`, with the log
/// argument floored at 1. The log is expanded so large `t` cannot overflow.
pub fn gamma_t<T: Scalar>(cfg: &ThresholdConfig<T>, t: u64) -> T {
    let lam = lambda_t(cfg, t);
    let d = T::from_count(cfg.dim as u64);
    let sqrt_lam = lam.sqrt();
    let log_arg =
        d * T::lit(2.0).ln() - cfg.delta.ln() + d * T::lit(0.5) * (cfg.link_bound * T::from_count(t) / (lam * d)).ln();
    sqrt_lam * T::lit(0.5) + T::lit(4.0) / sqrt_lam * log_arg.max(T::zero())
}

/// `β(δ,t) = 2((1+2S)γ_t(δ))²`.
pub fn beta_threshold<T: Scalar>(cfg: &ThresholdConfig<T>, t: u64) -> T {
    beta_from_gamma(cfg.radius, gamma_t(cfg, t))
}

pub fn beta_from_gamma<T: Scalar>(radius: T, gamma: T) -> T {
    let v = (T::one() + T::lit(2.0) * radius) * gamma;
    T::lit(2.0) * v * v
}

/// Eigenvalue gate evaluated at the current round only.
pub fn in_b<T: Scalar>(cfg: &ThresholdConfig<T>, state: &RunState<T>, kappa0: T, theta_hat: &[T]) -> Result<bool> {
    let lam = lambda_t(cfg, state.t());
    Ok(match cfg.b_check_mode {
        BCheckMode::ExactKappa0 => state.design().min_eigenvalue() > kappa0 * lam,
        BCheckMode::EmpiricalHessian => {
            if state.t() == 0 {
                false
            } else {
                fisher_empirical(state, theta_hat)?.min_eigenvalue() > lam
            }
        }
    })
}
