//! Frank-Wolfe maximization of ψ(θ, ·) over the simplex.

use std::ops::Deref;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{LogTsError, Result};
use crate::model::{fisher_from_weights, gram_weighted, mu_dot, ArmSet};
use crate::problems::{answer, factor_fisher, Alternatives, InnerInf, ProblemSpec, TopmDirection};
use crate::scalar::{dot, Scalar};

/// A point of the simplex: nonnegative weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation<T>(Vec<T>);

impl<T: Scalar> Allocation<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(LogTsError::config("allocation must have at least one weight"));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(LogTsError::config("allocation weights must be finite and nonnegative"));
        }
        let sum: T = weights.iter().copied().sum();
        let tol = T::structural_tol() * T::from_count(weights.len() as u64);
        if (sum - T::one()).abs() > tol {
            return Err(LogTsError::config(format!("allocation sums to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![T::one() / T::from_count(k as u64); k])
    }

    pub fn vertex(k: usize, i: usize) -> Self {
        let mut w = vec![T::zero(); k];
        w[i] = T::one();
        Self(w)
    }

    /// `(1 − ε)·w + ε·uniform`.
    pub fn mixed_with_uniform(&self, eps: T) -> Self {
        let u = eps / T::from_count(self.0.len() as u64);
        Self(self.0.iter().map(|w| (T::one() - eps) * *w + u).collect())
    }

    /// Indices with positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > T::zero()).collect()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for Allocation<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwConfig<T> {
    pub max_iters: usize,
    /// Stop once the linearization gap falls below `rel_tol · value`.
    pub rel_tol: T,
    /// Weight of the uniform allocation mixed into every iterate.
    pub floor: T,
    /// Relative tolerance under which two terms count as tied.
    pub tie_tol: T,
    /// Terms within this relative distance of the minimum enter the vertex
    /// choice together (0 = active term only).
    pub kink_tol: T,
    /// Rounds between recomputations of w(t) inside a run (1 = every round).
    pub lazy_stride: u64,
    pub topm_direction: TopmDirection,
}

impl<T: Scalar> Default for FwConfig<T> {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            rel_tol: T::lit(1e-6),
            floor: T::lit(1e-9),
            tie_tol: T::lit(1e-9),
            kink_tol: T::lit(0.01),
            lazy_stride: 1,
            topm_direction: TopmDirection::Difference,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignResult<T> {
    pub allocation: Allocation<T>,
    /// ψ at `allocation`: a lower bound on ψ★(θ).
    pub value: T,
    pub iterations: usize,
    /// Last Frank-Wolfe linearization gap.
    pub gap_estimate: T,
    pub active_arm: usize,
    pub cancelled: bool,
}

/// Supergradient of the term `f(w) = gap²/(2‖y‖²_{H_w⁻¹})` with respect to w:
/// component `a` is `gap²/(2‖y‖⁴_{H_w⁻¹}) · μ̇(x_aᵀθ) · (x_aᵀ H_w⁻¹ y)²`.
pub fn term_gradient<T: Scalar>(
    arms: &ArmSet<T>,
    theta: &[T],
    weights: &[T],
    alt: &Alternatives<T>,
    term: usize,
) -> Result<Vec<T>> {
    let h = fisher_from_weights(arms, weights, theta)?;
    let chol = factor_fisher(&h)?;
    let curv: Vec<T> = arms.iter().map(|x| mu_dot(dot(x, theta))).collect();
    Ok(gradient_with(arms, &curv, alt, term, &chol))
}

fn gradient_with<T: Scalar>(
    arms: &ArmSet<T>,
    curv: &[T],
    alt: &Alternatives<T>,
    term: usize,
    chol: &crate::linalg::Cholesky<T>,
) -> Vec<T> {
    let y = alt.direction(term);
    let v = chol.solve(y);
    let s = dot(y, &v);
    let g = alt.gap(term);
    let coef = g * g / (T::lit(2.0) * s * s);
    arms.iter()
        .zip(curv)
        .map(|(x, c)| {
            let xv = dot(x, &v);
            coef * *c * xv * xv
        })
        .collect()
}

/// Frank-Wolfe vertex and its linearization gap. Every term within
/// `kink_tol` of the minimum contributes a first-order model
/// `f_j(w) + ∇f_j·(e_v − w)`; the vertex maximizes the smallest model, which
/// reduces to the active term's supergradient when it stands alone. Near a
/// kink a lone supergradient keeps pointing at vertices that lower the other
/// term, so the iterates would stall below the maximum.
#[allow(clippy::too_many_arguments)]
fn best_vertex<T: Scalar>(
    arms: &ArmSet<T>,
    curv: &[T],
    alt: &Alternatives<T>,
    chol: &crate::linalg::Cholesky<T>,
    values: &[T],
    w: &[T],
    cur: InnerInf<T>,
    kink_tol: T,
) -> (usize, T) {
    let cutoff = cur.value + kink_tol * cur.value.abs();
    let mut near = vec![cur.active_term];
    near.extend((0..alt.len()).filter(|&j| j != cur.active_term && values[j] <= cutoff));
    // per term: value minus the linear part at w, and the gradient
    let models: Vec<(T, Vec<T>)> = near
        .iter()
        .map(|&j| {
            let g = gradient_with(arms, curv, alt, j, chol);
            let lin: T = g.iter().zip(w).map(|(a, b)| *a * *b).sum();
            (values[j] - lin, g)
        })
        .collect();
    let (base0, g0) = &models[0];
    let active_gap = g0.iter().fold(T::neg_infinity(), |m, v| if *v > m { *v } else { m }) + *base0 - cur.value;
    let mut vertex = 0;
    let mut best = T::neg_infinity();
    for a in 0..arms.len() {
        let m = models
            .iter()
            .map(|(base, g)| *base + g[a])
            .fold(T::infinity(), |acc, v| if v < acc { v } else { acc });
        if m > best {
            best = m;
            vertex = a;
        }
    }
    (vertex, active_gap)
}

/// Approximate `argmax_w ψ(θ, w)` by Frank-Wolfe with step `2/(k+2)`,
/// starting from the uniform allocation and returning the best iterate.
pub fn optimal_allocation<T: Scalar>(
    spec: &ProblemSpec<T>,
    arms: &ArmSet<T>,
    theta: &[T],
    cfg: &FwConfig<T>,
) -> Result<DesignResult<T>> {
    optimal_allocation_cancellable(spec, arms, theta, cfg, None)
}

/// As [`optimal_allocation`]; a raised `cancel` flag returns the best iterate
/// so far (the uniform start is always evaluated).
pub fn optimal_allocation_cancellable<T: Scalar>(
    spec: &ProblemSpec<T>,
    arms: &ArmSet<T>,
    theta: &[T],
    cfg: &FwConfig<T>,
    cancel: Option<&AtomicBool>,
) -> Result<DesignResult<T>> {
    answer(spec, arms, theta)?;
    let alt = Alternatives::with_direction(spec, arms, theta, cfg.topm_direction)?;
    let k = arms.len();
    let curv: Vec<T> = arms.iter().map(|x| mu_dot(dot(x, theta))).collect();

    let mut w = Allocation::<T>::uniform(k).into_inner();
    let mut best: Option<DesignResult<T>> = None;
    let mut gap_estimate = T::infinity();
    let mut iterations = 0;
    let mut cancelled = false;

    for it in 1..=cfg.max_iters.max(1) {
        if it > 1 && cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            cancelled = true;
            break;
        }
        iterations = it;
        let mixed = Allocation(w.clone()).mixed_with_uniform(cfg.floor);
        let h = gram_weighted(arms, mixed.iter().zip(&curv).map(|(m, c)| *m * *c));
        let chol = factor_fisher(&h)?;
        let values: Vec<T> = (0..alt.len()).map(|j| alt.term_value(j, &chol)).collect();
        let cur = alt.select_min(values.iter().copied(), cfg.tie_tol);
        if best.as_ref().is_none_or(|b| cur.value > b.value) {
            best = Some(DesignResult {
                allocation: mixed.clone(),
                value: cur.value,
                iterations: it,
                gap_estimate,
                active_arm: cur.active_arm,
                cancelled: false,
            });
        }
        if cur.value <= T::zero() {
            // zero gap: ψ vanishes for every allocation
            gap_estimate = T::zero();
            break;
        }
        let (vertex, gap) = best_vertex(arms, &curv, &alt, &chol, &values, &mixed, cur, cfg.kink_tol);
        gap_estimate = gap;
        if gap_estimate < cfg.rel_tol * cur.value {
            break;
        }
        let step = T::lit(2.0) / T::from_count(it as u64 + 2);
        for (a, wa) in w.iter_mut().enumerate() {
            *wa = (T::one() - step) * *wa + if a == vertex { step } else { T::zero() };
        }
    }
    let mut out = best.expect("at least one Frank-Wolfe iterate is evaluated");
    out.iterations = iterations;
    out.gap_estimate = gap_estimate;
    out.cancelled = cancelled;
    Ok(out)
}

/// `T★(θ) = 1/ψ★(θ)`, infinite when ψ★ vanishes.
pub fn characteristic_time<T: Scalar>(
    spec: &ProblemSpec<T>,
    arms: &ArmSet<T>,
    theta: &[T],
    cfg: &FwConfig<T>,
) -> Result<T> {
    let r = optimal_allocation(spec, arms, theta, cfg)?;
    Ok(reciprocal_or_infinity(r.value))
}

pub fn reciprocal_or_infinity<T: Scalar>(value: T) -> T {
    if value > T::zero() {
        T::one() / value
    } else {
        T::infinity()
    }
}

/// `log(1/(2.4δ))·T★(θ)`, the sample-complexity lower bound without the
/// quadratic-approximation correction.
pub fn lower_bound_samples<T: Scalar>(delta: T, characteristic_time: T) -> T {
    (T::one() / (T::lit(2.4) * delta)).ln() * characteristic_time
}
