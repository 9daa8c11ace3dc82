//! Maximum-likelihood estimation from the pull history and projection of the
//! MLE onto the ball of radius S.
//!
//! The log-likelihood only depends on per-arm pull and success counts, so all
//! quantities below are accumulated over arms rather than over rounds. The
//! full pull history is still kept in [`RunState`] for auditing.

use serde::{Deserialize, Serialize};

use crate::error::{LogTsError, Result};
use crate::linalg::{Cholesky, SymMatrix};
use crate::model::{link_terms, log_partition, mu, mu_dot, ArmSet, Parameter};
use crate::scalar::{dot, norm, Scalar};

/// One round of the history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pull {
    pub arm: u32,
    pub reward: bool,
}

/// Mutable per-run state: history, counts, design matrix and reward moment.
#[derive(Clone, Debug)]
pub struct RunState<T> {
    arms: ArmSet<T>,
    pulls: Vec<Pull>,
    counts: Vec<u64>,
    successes: Vec<u64>,
    design: SymMatrix<T>,
    reward_moment: Vec<T>,
}

impl<T: Scalar> RunState<T> {
    pub fn new(arms: ArmSet<T>) -> Self {
        let (k, d) = (arms.len(), arms.dim());
        Self {
            arms,
            pulls: Vec::new(),
            counts: vec![0; k],
            successes: vec![0; k],
            design: SymMatrix::zeros(d),
            reward_moment: vec![T::zero(); d],
        }
    }

    /// Replays a recorded history.
    pub fn from_history(arms: ArmSet<T>, pulls: &[Pull]) -> Self {
        let mut s = Self::new(arms);
        for p in pulls {
            s.record(p.arm as usize, p.reward);
        }
        s
    }

    pub fn record(&mut self, arm: usize, reward: bool) {
        let x = self.arms.arm(arm);
        self.design.add_outer(x, T::one());
        if reward {
            for (m, v) in self.reward_moment.iter_mut().zip(x) {
                *m += *v;
            }
            self.successes[arm] += 1;
        }
        self.counts[arm] += 1;
        self.pulls.push(Pull {
            arm: arm as u32,
            reward,
        });
    }

    #[inline]
    pub fn t(&self) -> u64 {
        self.pulls.len() as u64
    }

    pub fn arms(&self) -> &ArmSet<T> {
        &self.arms
    }

    pub fn pulls(&self) -> &[Pull] {
        &self.pulls
    }

    /// `N_x(t)` for every arm.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn successes(&self) -> &[u64] {
        &self.successes
    }

    /// `A_t = Σ_s x_s x_sᵀ`.
    pub fn design(&self) -> &SymMatrix<T> {
        &self.design
    }

    /// `Σ_s r_s x_s`.
    pub fn reward_moment(&self) -> &[T] {
        &self.reward_moment
    }

    /// Empirical proportions `N_x(t)/t`.
    pub fn empirical_allocation(&self) -> Result<Vec<T>> {
        let t = self.nonempty()?;
        let tt = T::from_count(t);
        Ok(self.counts.iter().map(|n| T::from_count(*n) / tt).collect())
    }

    fn nonempty(&self) -> Result<u64> {
        match self.t() {
            0 => Err(LogTsError::EmptyHistory),
            t => Ok(t),
        }
    }

    fn pulled(&self) -> impl Iterator<Item = (&[T], T, T)> + '_ {
        self.arms
            .iter()
            .zip(self.counts.iter().zip(&self.successes))
            .filter(|(_, (n, _))| **n > 0)
            .map(|(x, (n, s))| (x, T::from_count(*n), T::from_count(*s)))
    }
}

/// `Σ_s [r_s log μ(x_sᵀθ) + (1−r_s) log(1−μ(x_sᵀθ))]`.
pub fn log_likelihood<T: Scalar>(state: &RunState<T>, theta: &[T]) -> Result<T> {
    state.nonempty()?;
    state.arms.check_dim(theta.len())?;
    Ok(log_lik_unchecked(state, theta))
}

fn log_lik_unchecked<T: Scalar>(state: &RunState<T>, theta: &[T]) -> T {
    let mut ll = T::zero();
    for (x, n, s) in state.pulled() {
        let z = dot(x, theta);
        ll += s * z - n * log_partition(z);
    }
    ll
}

/// `g_t(θ) = Σ_s μ(x_sᵀθ) x_s`.
pub fn g_function<T: Scalar>(state: &RunState<T>, theta: &[T]) -> Result<Vec<T>> {
    state.nonempty()?;
    state.arms.check_dim(theta.len())?;
    let mut g = vec![T::zero(); state.arms.dim()];
    for (x, n, _) in state.pulled() {
        let c = n * mu(dot(x, theta));
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi += c * *xi;
        }
    }
    Ok(g)
}

/// Gradient of the log-likelihood, `Σ r_s x_s − g_t(θ)`.
pub fn log_likelihood_gradient<T: Scalar>(state: &RunState<T>, theta: &[T]) -> Result<Vec<T>> {
    let g = g_function(state, theta)?;
    Ok(state.reward_moment.iter().zip(&g).map(|(r, gi)| *r - *gi).collect())
}

/// `H_t(θ) = Σ_s μ̇(x_sᵀθ) x_s x_sᵀ`, accumulated from the pull counts.
pub fn fisher_empirical<T: Scalar>(state: &RunState<T>, theta: &[T]) -> Result<SymMatrix<T>> {
    state.nonempty()?;
    state.arms.check_dim(theta.len())?;
    let mut h = SymMatrix::zeros(state.arms.dim());
    for (x, n, _) in state.pulled() {
        h.add_outer(x, n * mu_dot(dot(x, theta)));
    }
    h.symmetrize();
    Ok(h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<T> {
    pub max_iters: usize,
    /// First-order tolerance on `‖Σ r_s x_s − g_t(θ)‖`.
    pub grad_tol: T,
    pub armijo: T,
    /// Raw MLE iterates are kept inside this radius.
    pub norm_cap: T,
    pub proj_iters: usize,
}

impl<T: Scalar> SolverConfig<T> {
    /// Defaults for a parameter ball of radius `s`: cap at `10·s`.
    pub fn for_radius(s: T) -> Self {
        Self {
            max_iters: 100,
            grad_tol: T::lit(1e-8),
            armijo: T::lit(1e-4),
            norm_cap: T::lit(10.0) * s,
            proj_iters: 200,
        }
    }
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self::for_radius(T::one())
    }
}

/// Outcome of the damped Newton solve.
#[derive(Clone, Debug, PartialEq)]
pub struct MleFit<T> {
    pub mle: Parameter<T>,
    pub converged: bool,
    pub newton_iters: usize,
    pub grad_norm: T,
    /// A ridge-damped step was needed because the Hessian was singular.
    pub ridge_fallback: bool,
    /// The iterate hit `norm_cap` (typically under separable histories).
    pub capped: bool,
}

/// Unconstrained MLE and its projection onto the S-ball.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatePair<T> {
    pub mle: Parameter<T>,
    pub projected: Parameter<T>,
    pub converged: bool,
    pub newton_iters: usize,
}

// Arithmetic noise floor of the gradient: below it no step can make progress.
fn gradient_floor<T: Scalar>(state: &RunState<T>) -> T {
    let mass: T = state.pulled().map(|(x, n, _)| n * norm(x)).sum();
    T::lit(64.0) * T::epsilon() * mass
}

fn factor_with_fallback<T: Scalar>(h: &SymMatrix<T>) -> Result<(Cholesky<T>, bool)> {
    match h.cholesky() {
        Ok(c) => Ok((c, false)),
        Err(_) => {
            let eps = T::lit(1e-10) * h.trace().max(T::min_positive_value());
            let mut r = h.clone();
            r.add_diagonal(eps);
            r.cholesky().map(|c| (c, true))
        }
    }
}

fn cap_norm<T: Scalar>(theta: &mut [T], cap: T) -> bool {
    let n = norm(theta);
    if n > cap {
        let s = cap / n;
        theta.iter_mut().for_each(|v| *v *= s);
        true
    } else {
        false
    }
}

struct LocalFit<T> {
    ll: T,
    grad: Vec<T>,
    hessian: SymMatrix<T>,
}

// Log-likelihood, gradient and negated Hessian in one pass over the arms.
fn local_fit<T: Scalar>(state: &RunState<T>, theta: &[T]) -> LocalFit<T> {
    let mut hessian = SymMatrix::zeros(theta.len());
    let mut grad = state.reward_moment.clone();
    let mut ll = dot(&state.reward_moment, theta);
    for (x, n, _) in state.pulled() {
        let z = dot(x, theta);
        let e = (-z.abs()).exp();
        let inv = T::one() / (T::one() + e);
        let m = if z >= T::zero() { inv } else { e * inv };
        ll -= n * (z.max(T::zero()) + e.ln_1p());
        let c = n * m;
        for (gi, xi) in grad.iter_mut().zip(x) {
            *gi -= c * *xi;
        }
        hessian.add_outer(x, n * e * inv * inv);
    }
    LocalFit { ll, grad, hessian }
}

/// Damped Newton ascent on the log-likelihood from `init`.
///
/// Non-convergence is reported through `converged = false` with the last
/// (best) iterate, never as an error.
pub fn fit_mle<T: Scalar>(state: &RunState<T>, init: &[T], cfg: &SolverConfig<T>) -> Result<MleFit<T>> {
    state.nonempty()?;
    state.arms.check_dim(init.len())?;
    let tol = cfg.grad_tol.max(gradient_floor(state));
    let mut theta = init.to_vec();
    let mut capped = cap_norm(&mut theta, cfg.norm_cap);
    let mut ridge_fallback = false;
    let mut iters = 0;
    let mut local = local_fit(state, &theta);

    loop {
        let gnorm = norm(&local.grad);
        let done = |theta: Vec<T>, iters, ridge_fallback, capped| MleFit {
            mle: Parameter::new(theta),
            converged: gnorm <= tol,
            newton_iters: iters,
            grad_norm: gnorm,
            ridge_fallback,
            capped,
        };
        if gnorm <= tol || iters >= cfg.max_iters || capped {
            return Ok(done(theta, iters, ridge_fallback, capped));
        }
        iters += 1;
        let (chol, ridge) = factor_with_fallback(&local.hessian)?;
        ridge_fallback |= ridge;
        let step = chol.solve(&local.grad);
        let slope = dot(&local.grad, &step);

        let mut full: Vec<T> = theta.iter().zip(&step).map(|(a, p)| *a + *p).collect();
        let full_hit = cap_norm(&mut full, cfg.norm_cap);
        let full_fit = local_fit(state, &full);
        // below the rounding floor of the log-likelihood Armijo cannot
        // discriminate, and the full Newton step is taken
        let floor = T::lit(64.0) * T::epsilon() * (local.ll.abs() + T::one());
        if slope <= floor || full_fit.ll >= local.ll + cfg.armijo * slope {
            theta = full;
            local = full_fit;
            capped = full_hit;
            continue;
        }
        let mut s = T::lit(0.5);
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand: Vec<T> = theta.iter().zip(&step).map(|(a, p)| *a + s * *p).collect();
            let hit = cap_norm(&mut cand, cfg.norm_cap);
            if log_lik_unchecked(state, &cand) >= local.ll + cfg.armijo * s * slope {
                accepted = Some((cand, hit));
                break;
            }
            s *= T::lit(0.5);
        }
        match accepted {
            Some((cand, hit)) => {
                local = local_fit(state, &cand);
                theta = cand;
                capped = hit;
            }
            // no ascent possible from here: the iterate is as good as arithmetic allows
            None => return Ok(done(theta, iters, ridge_fallback, capped)),
        }
    }
}

/// Result of the projection step.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection<T> {
    pub theta: Parameter<T>,
    /// Objective at `theta`.
    pub objective: T,
    /// Objective at the radial initialization `S·mle/‖mle‖`.
    pub radial_objective: T,
    pub iterations: usize,
}

struct ProjectionObjective<'a, T> {
    state: &'a RunState<T>,
    target: Vec<T>,
}

impl<T: Scalar> ProjectionObjective<'_, T> {
    /// `F(θ) = ‖g_t(θ) − g_t(θ̂)‖²_{H_t(θ)⁻¹}` and its gradient
    /// `2r − Σ_x N_x μ̈(xᵀθ)(xᵀv)² x` with `v = H_t(θ)⁻¹ r`.
    fn eval(&self, theta: &[T], with_grad: bool) -> Result<(T, Vec<T>, Cholesky<T>)> {
        let d = theta.len();
        let mut r: Vec<T> = self.target.iter().map(|v| -*v).collect();
        let mut h = SymMatrix::zeros(d);
        let mut curvature = Vec::new();
        for (x, n, _) in self.state.pulled() {
            let (m, md, mdd) = link_terms(dot(x, theta));
            let c = n * m;
            for (ri, xi) in r.iter_mut().zip(x) {
                *ri += c * *xi;
            }
            h.add_outer(x, n * md);
            if with_grad {
                curvature.push(n * mdd);
            }
        }
        let (chol, _) = factor_with_fallback(&h)?;
        let v = chol.solve(&r);
        let f = dot(&r, &v);
        if !with_grad {
            return Ok((f, Vec::new(), chol));
        }
        let mut grad: Vec<T> = r.iter().map(|ri| T::lit(2.0) * *ri).collect();
        for ((x, _, _), c) in self.state.pulled().zip(&curvature) {
            let xv = dot(x, &v);
            let c = *c * xv * xv;
            for (gi, xi) in grad.iter_mut().zip(x) {
                *gi -= c * *xi;
            }
        }
        Ok((f, grad, chol))
    }
}

fn to_sphere<T: Scalar>(theta: &mut [T], radius: T) {
    let n = norm(theta);
    if n > T::zero() {
        let s = radius / n;
        theta.iter_mut().for_each(|v| *v *= s);
    }
}

/// Projection objective `‖g_t(θ) − g_t(θ̂)‖²_{H_t(θ)⁻¹}` at `theta`.
pub fn projection_objective<T: Scalar>(state: &RunState<T>, mle: &[T], theta: &[T]) -> Result<T> {
    let obj = ProjectionObjective {
        state,
        target: g_function(state, mle)?,
    };
    obj.eval(theta, false).map(|(f, _, _)| f)
}

/// Maps the MLE into the ball `‖θ‖ ≤ radius`.
///
/// Inside the ball the MLE is returned unchanged. Otherwise Gauss-Newton steps
/// restricted to the sphere of radius `radius`, started at the radial point and
/// run for at most `cfg.proj_iters` steps with backtracking. Every accepted
/// step strictly decreases the objective, so the result is never worse than
/// the radial point. Only a local minimizer is claimed.
pub fn project_estimate<T: Scalar>(
    state: &RunState<T>,
    mle: &Parameter<T>,
    radius: T,
    cfg: &SolverConfig<T>,
) -> Result<Projection<T>> {
    project_estimate_from(state, mle, radius, cfg, None)
}

/// As [`project_estimate`], additionally trying `warm` (rescaled onto the
/// sphere) as a starting point and keeping the better of the two starts.
pub fn project_estimate_from<T: Scalar>(
    state: &RunState<T>,
    mle: &Parameter<T>,
    radius: T,
    cfg: &SolverConfig<T>,
    warm: Option<&[T]>,
) -> Result<Projection<T>> {
    state.nonempty()?;
    state.arms.check_dim(mle.len())?;
    if mle.norm() <= radius {
        return Ok(Projection {
            theta: mle.clone(),
            objective: T::zero(),
            radial_objective: T::zero(),
            iterations: 0,
        });
    }
    let obj = ProjectionObjective {
        state,
        target: g_function(state, mle)?,
    };
    let mut theta = mle.to_vec();
    to_sphere(&mut theta, radius);
    let (radial, _, _) = obj.eval(&theta, false)?;
    if let Some(w) = warm.filter(|w| w.len() == theta.len() && norm(w) > T::zero()) {
        let mut cand = w.to_vec();
        to_sphere(&mut cand, radius);
        if obj.eval(&cand, false)?.0 < radial {
            theta = cand;
        }
    }
    let (mut f, mut grad, mut chol) = obj.eval(&theta, true)?;
    let mut iters = 0;
    let rel = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
    let half = T::lit(0.5);
    while iters < cfg.proj_iters && f > T::zero() {
        // Gauss-Newton step in the tangent space: minimize ∇Fᵀu + uᵀHu
        // subject to θᵀu = 0, using ∇²F ≈ 2H near the solution
        let a = chol.solve(&grad);
        let b = chol.solve(&theta);
        let nu = -dot(&theta, &a) / dot(&theta, &b);
        let u: Vec<T> = a.iter().zip(&b).map(|(ai, bi)| -(*ai + nu * *bi) * half).collect();
        // predicted decrease of the quadratic model at its minimizer
        let predicted = -dot(&grad, &u) * half;
        if !(norm(&u) > T::zero()) || !(predicted > rel * f) {
            break;
        }
        let mut eta = T::one();
        let mut accepted = false;
        for _ in 0..50 {
            let mut cand: Vec<T> = theta.iter().zip(&u).map(|(t, ui)| *t + eta * *ui).collect();
            to_sphere(&mut cand, radius);
            let (fc, gc, cc) = obj.eval(&cand, true)?;
            if fc < f {
                let moved = cand
                    .iter()
                    .zip(&theta)
                    .fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()));
                let improvement = f - fc;
                theta = cand;
                f = fc;
                grad = gc;
                chol = cc;
                accepted = improvement > rel * f.abs() && moved > rel * radius;
                break;
            }
            eta *= half;
        }
        iters += 1;
        if !accepted {
            break;
        }
    }
    Ok(Projection {
        theta: Parameter::new(theta),
        objective: f,
        radial_objective: radial,
        iterations: iters,
    })
}

/// Fits the MLE from `init` and projects it onto the ball of radius `radius`.
pub fn estimate<T: Scalar>(
    state: &RunState<T>,
    init: &[T],
    radius: T,
    cfg: &SolverConfig<T>,
) -> Result<EstimatePair<T>> {
    estimate_from(state, init, None, radius, cfg)
}

/// As [`estimate`], warm-starting the projection at `proj_init`.
pub fn estimate_from<T: Scalar>(
    state: &RunState<T>,
    init: &[T],
    proj_init: Option<&[T]>,
    radius: T,
    cfg: &SolverConfig<T>,
) -> Result<EstimatePair<T>> {
    let fit = fit_mle(state, init, cfg)?;
    let proj = project_estimate_from(state, &fit.mle, radius, cfg, proj_init)?;
    Ok(EstimatePair {
        mle: fit.mle,
        projected: proj.theta,
        converged: fit.converged,
        newton_iters: fit.newton_iters,
    })
}
