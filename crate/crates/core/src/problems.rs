//! Pure-exploration questions: answers, alternative sets and the closed-form
//! inner infimum ψ(θ, w).
//!
//! Every alternative set is a finite union of halfspaces `{λ : λᵀy ≥ b}` (or
//! `≤ b`). On one halfspace the infimum of `½‖θ−λ‖²_H` is
//! `(b − θᵀy)² / (2‖y‖²_{H⁻¹})` when θ violates the side and 0 otherwise, so ψ is
//! a minimum of such terms:
//!
//! | problem | terms | gap | direction y |
//! |---------|-------|-----|-------------|
//! | best arm | x ≠ x★ | θᵀ(x★ − x) | x★ − x |
//! | threshold ρ | every x | θᵀx − μ⁻¹(ρ) | x |
//! | top-m | x ≠ x₍ₘ₎ | θᵀ(x − x₍ₘ₎) | x − x₍ₘ₎ |

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{LogTsError, Result};
use crate::estimation::RunState;
use crate::linalg::{Cholesky, SymMatrix};
use crate::model::{fisher_from_weights, logit, ArmSet};
use crate::scalar::Scalar;

/// Ties closer than this make an answer ill-defined.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Relative ridge `ε = REL_RIDGE · trace(H)/d` added to `H_w` when its
/// factorization is singular at that scale.
pub const REL_RIDGE: f64 = 1e-10;

/// The question being asked about θ*.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemSpec<T> {
    /// Best-arm identification.
    Bai,
    /// Arms whose mean reward exceeds `rho`.
    Tbp { rho: T },
    /// The `m` arms with the largest means.
    Topm { m: usize },
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn validate(&self, num_arms: usize) -> Result<()> {
        match self {
            ProblemSpec::Bai => Ok(()),
            ProblemSpec::Tbp { rho } => {
                if *rho > T::zero() && *rho < T::one() {
                    Ok(())
                } else {
                    Err(LogTsError::config(format!("rho must lie in (0,1), got {rho}")))
                }
            }
            ProblemSpec::Topm { m } => {
                if *m >= 1 && *m < num_arms {
                    Ok(())
                } else {
                    Err(LogTsError::config(format!(
                        "m must lie in [1, K-1] = [1, {}], got {m}",
                        num_arms.saturating_sub(1)
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Bai => "bai",
            ProblemSpec::Tbp { .. } => "tbp",
            ProblemSpec::Topm { .. } => "topm",
        }
    }
}

/// Correct answer for a parameter. Index sets are sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arms", rename_all = "lowercase")]
pub enum Answer {
    Bai(usize),
    Tbp(Vec<usize>),
    Topm(Vec<usize>),
}

/// Direction used for top-m terms. `Difference` follows from the pairwise
/// constraint `(x − x₍ₘ₎)ᵀλ ≥ 0`; `StatedNorm` uses `‖x‖_{H⁻¹}` instead and is
/// kept only for comparing against that alternative formula.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopmDirection {
    #[default]
    Difference,
    StatedNorm,
}

fn order_desc<T: Scalar>(logits: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// `i★(θ)`, refusing parameters whose answer is decided by a tie.
pub fn answer<T: Scalar>(spec: &ProblemSpec<T>, arms: &ArmSet<T>, theta: &[T]) -> Result<Answer> {
    arms.check_dim(theta.len())?;
    spec.validate(arms.len())?;
    let logits = arms.logits(theta);
    let tie = T::lit(TIE_TOLERANCE);
    match spec {
        ProblemSpec::Bai => {
            let order = order_desc(&logits);
            if logits[order[0]] - logits[order[1]] <= tie {
                return Err(LogTsError::degenerate(format!(
                    "best arm not unique: arms {} and {} tie",
                    order[0], order[1]
                )));
            }
            Ok(Answer::Bai(order[0]))
        }
        ProblemSpec::Tbp { rho } => {
            let c = logit(*rho);
            if let Some(i) = logits.iter().position(|z| (*z - c).abs() <= tie) {
                return Err(LogTsError::degenerate(format!(
                    "arm {i} sits on the threshold rho={rho}"
                )));
            }
            Ok(Answer::Tbp((0..logits.len()).filter(|&i| logits[i] > c).collect()))
        }
        ProblemSpec::Topm { m } => {
            let order = order_desc(&logits);
            if logits[order[m - 1]] - logits[order[*m]] <= tie {
                return Err(LogTsError::degenerate(format!(
                    "top-{m} set not unique: arms {} and {} tie",
                    order[m - 1],
                    order[*m]
                )));
            }
            let mut top = order[..*m].to_vec();
            top.sort_unstable();
            Ok(Answer::Topm(top))
        }
    }
}

/// Value of ψ and the arm whose term attains the minimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerInf<T> {
    pub value: T,
    pub active_arm: usize,
    /// Position of the active term in [`Alternatives`].
    pub active_term: usize,
}

/// Halfspace terms of the alternative set at a fixed θ. They do not depend on
/// the allocation, so optimizers build them once and evaluate many H's.
#[derive(Clone, Debug)]
pub struct Alternatives<T> {
    dim: usize,
    arms: Vec<usize>,
    gaps: Vec<T>,
    // one direction per term, row-major
    dirs: Vec<T>,
}

impl<T: Scalar> Alternatives<T> {
    pub fn new(spec: &ProblemSpec<T>, arms: &ArmSet<T>, theta: &[T]) -> Result<Self> {
        Self::with_direction(spec, arms, theta, TopmDirection::Difference)
    }

    /// Ties are broken by lowest index here (never an error) so that ψ is
    /// defined, and equal to 0, at boundary parameters.
    pub fn with_direction(
        spec: &ProblemSpec<T>,
        arm_set: &ArmSet<T>,
        theta: &[T],
        topm: TopmDirection,
    ) -> Result<Self> {
        arm_set.check_dim(theta.len())?;
        spec.validate(arm_set.len())?;
        let d = arm_set.dim();
        let logits = arm_set.logits(theta);
        let k = arm_set.len();
        let mut alt = Self {
            dim: d,
            arms: Vec::with_capacity(k),
            gaps: Vec::with_capacity(k),
            dirs: Vec::with_capacity(k * d),
        };
        match spec {
            ProblemSpec::Bai => {
                let best = argmax(&logits);
                let xb = arm_set.arm(best);
                for i in (0..k).filter(|&i| i != best) {
                    alt.arms.push(i);
                    alt.gaps.push(logits[best] - logits[i]);
                    alt.dirs.extend(xb.iter().zip(arm_set.arm(i)).map(|(a, b)| *a - *b));
                }
            }
            ProblemSpec::Tbp { rho } => {
                let c = logit(*rho);
                for i in 0..k {
                    alt.arms.push(i);
                    alt.gaps.push(logits[i] - c);
                    alt.dirs.extend_from_slice(arm_set.arm(i));
                }
            }
            ProblemSpec::Topm { m } => {
                let pivot = order_desc(&logits)[m - 1];
                let xp = arm_set.arm(pivot);
                for i in (0..k).filter(|&i| i != pivot) {
                    alt.arms.push(i);
                    alt.gaps.push(logits[i] - logits[pivot]);
                    match topm {
                        TopmDirection::Difference => {
                            alt.dirs.extend(arm_set.arm(i).iter().zip(xp).map(|(a, b)| *a - *b))
                        }
                        TopmDirection::StatedNorm => alt.dirs.extend_from_slice(arm_set.arm(i)),
                    }
                }
            }
        }
        Ok(alt)
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn arm(&self, term: usize) -> usize {
        self.arms[term]
    }

    pub fn gap(&self, term: usize) -> T {
        self.gaps[term]
    }

    pub fn direction(&self, term: usize) -> &[T] {
        &self.dirs[term * self.dim..(term + 1) * self.dim]
    }

    /// `gap² / (2‖y‖²_{H⁻¹})` for one term.
    pub fn term_value(&self, term: usize, chol: &Cholesky<T>) -> T {
        let g = self.gaps[term];
        if g == T::zero() {
            return T::zero();
        }
        let q = chol.inv_quad(self.direction(term));
        g * g / (T::lit(2.0) * q)
    }

    /// Minimum over terms. Terms within `tie_tol` (relative) of the minimum
    /// resolve to the lowest arm index.
    pub fn evaluate_factored(&self, chol: &Cholesky<T>, tie_tol: T) -> InnerInf<T> {
        self.select_min((0..self.len()).map(|j| self.term_value(j, chol)), tie_tol)
    }

    /// Minimum of precomputed term values, with the same tie rule as
    /// [`Self::evaluate_factored`].
    pub fn select_min(&self, values: impl IntoIterator<Item = T>, tie_tol: T) -> InnerInf<T> {
        let mut values = values.into_iter();
        let mut best = InnerInf {
            value: values.next().expect("at least one term"),
            active_arm: self.arms[0],
            active_term: 0,
        };
        for (term, v) in values.enumerate().map(|(i, v)| (i + 1, v)) {
            let margin = tie_tol * best.value.abs();
            let better =
                v < best.value - margin || ((v - best.value).abs() <= margin && self.arms[term] < best.active_arm);
            if better {
                best = InnerInf {
                    value: v,
                    active_arm: self.arms[term],
                    active_term: term,
                };
            }
        }
        best
    }

    /// ψ for a given Fisher matrix (regularized before factorization).
    pub fn evaluate(&self, fisher: &SymMatrix<T>) -> Result<InnerInf<T>> {
        let chol = factor_fisher(fisher)?;
        Ok(self.evaluate_factored(&chol, T::zero()))
    }
}

/// Cholesky of `H`, or of `H + ε I` with `ε = REL_RIDGE·trace(H)/d` when a
/// pivot of `H` falls below ε. An unconditional ridge would shift ψ by
/// ε·cond(H) relative, well above rounding on moderately conditioned H.
pub fn factor_fisher<T: Scalar>(fisher: &SymMatrix<T>) -> Result<Cholesky<T>> {
    let eps = T::lit(REL_RIDGE) * fisher.trace() / T::from_count(fisher.dim() as u64);
    if let Ok(chol) = fisher.cholesky() {
        if chol.min_pivot_sq() > eps {
            return Ok(chol);
        }
    }
    fisher
        .regularized_cholesky(T::lit(REL_RIDGE))
        .map_err(|_| LogTsError::degenerate("allocation gives a singular Fisher matrix"))
}

/// ψ(θ, w) with `H_w(θ)` built from `weights`.
pub fn inner_inf<T: Scalar>(
    spec: &ProblemSpec<T>,
    arms: &ArmSet<T>,
    theta: &[T],
    weights: &[T],
) -> Result<InnerInf<T>> {
    inner_inf_with(spec, arms, theta, weights, TopmDirection::Difference)
}

pub fn inner_inf_with<T: Scalar>(
    spec: &ProblemSpec<T>,
    arms: &ArmSet<T>,
    theta: &[T],
    weights: &[T],
    topm: TopmDirection,
) -> Result<InnerInf<T>> {
    let alt = Alternatives::with_direction(spec, arms, theta, topm)?;
    let h = fisher_from_weights(arms, weights, theta)?;
    alt.evaluate(&h)
}

/// GLR statistic `Z(t) = t·ψ(θ, N(t)/t)`; zero before any pull.
pub fn glr_statistic<T: Scalar>(spec: &ProblemSpec<T>, state: &RunState<T>, theta_proj: &[T]) -> Result<T> {
    if state.t() == 0 {
        return Ok(T::zero());
    }
    let w = state.empirical_allocation()?;
    let psi = inner_inf(spec, state.arms(), theta_proj, &w)?;
    Ok(T::from_count(state.t()) * psi.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fisher_from_weights, mu_dot};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis3() -> ArmSet<f64> {
        ArmSet::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap()
    }

    #[test]
    fn answers_for_each_family() {
        let arms = basis3();
        assert_eq!(
            answer(&ProblemSpec::Bai, &arms, &[3.0, 1.0, 2.0]).unwrap(),
            Answer::Bai(0)
        );
        assert_eq!(
            answer(&ProblemSpec::Tbp { rho: 0.5 }, &arms, &[0.3, -0.2, 0.1]).unwrap(),
            Answer::Tbp(vec![0, 2])
        );
        assert_eq!(
            answer(&ProblemSpec::Topm { m: 2 }, &arms, &[0.9, 0.5, 0.7]).unwrap(),
            Answer::Topm(vec![0, 2])
        );
    }

    #[test]
    fn ties_are_degenerate() {
        let arms = basis3();
        assert!(matches!(
            answer(&ProblemSpec::Bai, &arms, &[1.0, 1.0, 0.0]),
            Err(LogTsError::Degenerate(_))
        ));
        assert!(answer(&ProblemSpec::Tbp { rho: 0.5 }, &arms, &[0.0, 1.0, -1.0]).is_err());
        assert!(answer(&ProblemSpec::Topm { m: 1 }, &arms, &[0.5, 0.5, 0.1]).is_err());
        assert!(answer(&ProblemSpec::Topm { m: 3 }, &arms, &[0.5, 0.4, 0.1]).is_err());
    }

    #[test]
    fn two_orthonormal_arms_closed_form() {
        let arms = ArmSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let theta = [1.0, 0.0];
        let r = inner_inf(&ProblemSpec::Bai, &arms, &theta, &[0.5, 0.5]).unwrap();
        // H = diag(½μ̇(1), ½μ̇(0)); y = e1 − e2
        let h1 = 0.5 * mu_dot(1.0);
        let h2 = 0.5 * 0.25;
        let expected = 1.0 / (2.0 * (1.0 / h1 + 1.0 / h2));
        assert_relative_eq!(r.value, expected, max_relative = 1e-9);
        assert_eq!(r.active_arm, 1);
    }

    #[test]
    fn zero_gap_gives_zero() {
        let arms = basis3();
        let w = [1.0 / 3.0; 3];
        let v = inner_inf(&ProblemSpec::Bai, &arms, &[0.5, 0.5, 0.1], &w).unwrap();
        assert_eq!(v.value, 0.0);
        let v = inner_inf(&ProblemSpec::Tbp { rho: 0.5 }, &arms, &[0.0, 0.4, -0.3], &w).unwrap();
        assert_eq!(v.value, 0.0);
        let v = inner_inf(&ProblemSpec::Topm { m: 1 }, &arms, &[0.2, 0.2, 0.1], &w).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn psi_doubles_when_fisher_doubles() {
        let arms = ArmSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.6]]).unwrap();
        let theta = [0.8, 0.3];
        let h = fisher_from_weights(&arms, &[0.2, 0.3, 0.5], &theta).unwrap();
        for spec in [
            ProblemSpec::Bai,
            ProblemSpec::Tbp { rho: 0.55 },
            ProblemSpec::Topm { m: 2 },
        ] {
            let alt = Alternatives::new(&spec, &arms, &theta).unwrap();
            let a = alt.evaluate(&h).unwrap().value;
            let b = alt.evaluate(&h.scaled(2.0)).unwrap().value;
            assert_relative_eq!(b, 2.0 * a, max_relative = 1e-12);
        }
    }

    #[test]
    fn glr_is_t_times_psi() {
        let arms = ArmSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.6]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let theta = [0.9, 0.2];
        let spec = ProblemSpec::Bai;
        let empty = RunState::new(arms.clone());
        assert_eq!(glr_statistic(&spec, &empty, &theta).unwrap(), 0.0);
        for _ in 0..10 {
            let mut s = RunState::new(arms.clone());
            for _ in 0..rng.random_range(5..200) {
                s.record(rng.random_range(0..3), rng.random::<bool>());
            }
            let z = glr_statistic(&spec, &s, &theta).unwrap();
            let psi = inner_inf(&spec, &arms, &theta, &s.empirical_allocation().unwrap()).unwrap();
            assert_relative_eq!(z / s.t() as f64, psi.value, max_relative = 1e-12);
        }
    }

    #[test]
    fn answer_invariant_under_positive_scaling() {
        let arms = ArmSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.6], vec![-0.5, 0.5]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let theta = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let c = rng.random_range(0.1..5.0);
            let scaled = [c * theta[0], c * theta[1]];
            for spec in [ProblemSpec::Bai, ProblemSpec::Topm { m: 2 }] {
                if let Ok(a) = answer(&spec, &arms, &theta) {
                    assert_eq!(answer(&spec, &arms, &scaled).unwrap(), a);
                }
            }
        }
    }

    #[test]
    fn stated_norm_direction_differs() {
        let arms = ArmSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.6]]).unwrap();
        let theta = [0.8, 0.3];
        let w = [0.3, 0.3, 0.4];
        let spec = ProblemSpec::Topm { m: 1 };
        let a = inner_inf_with(&spec, &arms, &theta, &w, TopmDirection::Difference).unwrap();
        let b = inner_inf_with(&spec, &arms, &theta, &w, TopmDirection::StatedNorm).unwrap();
        assert!(f64::abs(a.value - b.value) > 1e-6);
    }

    #[test]
    fn invalid_specs() {
        let arms = basis3();
        assert!(answer(&ProblemSpec::Tbp { rho: 1.2 }, &arms, &[0.0; 3]).is_err());
        assert!(answer(&ProblemSpec::Topm { m: 0 }, &arms, &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s: ProblemSpec<f64> = serde_json::from_str(r#"{"kind":"tbp","rho":0.4}"#).unwrap();
        assert_eq!(s, ProblemSpec::Tbp { rho: 0.4 });
        assert_eq!(
            serde_json::to_string(&ProblemSpec::<f64>::Topm { m: 2 }).unwrap(),
            r#"{"kind":"topm","m":2}"#
        );
        assert_eq!(
            serde_json::to_string(&ProblemSpec::<f64>::Bai).unwrap(),
            r#"{"kind":"bai"}"#
        );
    }
}
