//! Oracle suites that check the closed forms and optimizers against
//! independent brute-force computations.
//!
//! Each suite returns a [`SuiteReport`]. A [`Perturbation`] scales the closed
//! form before comparison so that the suites can be shown to fail loudly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{optimal_allocation, FwConfig};
use crate::error::Result;
use crate::instances::{generate, GeneratorConfig};
use crate::model::{fisher_from_weights, kl_bernoulli_logit, kl_quadratic, logit, mu, mu_dot, ArmSet};
use crate::problems::{answer, inner_inf, Answer, ProblemSpec};
use crate::sampler::{run_log_ts, RunConfig};

/// Multiplies closed-form values by `1 + rel` before they are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub rel: f64,
}

impl Perturbation {
    fn apply(self, v: f64) -> f64 {
        v * (1.0 + self.rel)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    /// Worst observed error in the suite's own metric.
    pub max_error: f64,
    pub tolerance: f64,
    /// Failing cases only.
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: true,
            cases: 0,
            max_error: 0.0,
            tolerance,
            failures: Vec::new(),
        }
    }

    fn record(&mut self, error: f64, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if error.is_nan() || error > self.max_error {
            self.max_error = error;
        }
        if !(error <= self.tolerance) {
            self.passed = false;
            self.failures.push(describe());
        }
    }
}

pub const SUITES: [&str; 4] = ["inner_inf", "fw_grid", "kl_quadratic", "exploration_bound"];

/// Runs the named suite, or `None` for an unknown name.
pub fn run_suite(name: &str, perturb: Perturbation) -> Option<Result<SuiteReport>> {
    Some(match name {
        "inner_inf" => inner_inf_suite(20, 0x5eed, perturb),
        "fw_grid" => fw_grid_suite(perturb),
        "kl_quadratic" => Ok(kl_suite(perturb).0),
        "exploration_bound" => exploration_bound_suite(),
        _ => return None,
    })
}

pub fn run_all(perturb: Perturbation) -> Result<Vec<SuiteReport>> {
    SUITES
        .iter()
        .map(|s| run_suite(s, perturb).expect("listed suite"))
        .collect()
}

// ---------------------------------------------------------------------------
// inner infimum versus constrained minimization

/// Solves `A z = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in (c + 1)..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| a[r][k] * z[k]).sum();
        z[r] = (b[r] - s) / a[r][r];
    }
    Some(z)
}

fn dotf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of `{v : yᵀv = 0}` by Gram-Schmidt on the standard basis.
fn null_basis(y: &[f64]) -> Vec<Vec<f64>> {
    let d = y.len();
    let yn = dotf(y, y).sqrt();
    let mut basis: Vec<Vec<f64>> = vec![y.iter().map(|v| v / yn).collect()];
    for i in 0..d {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        for b in &basis {
            let c = dotf(&v, b);
            v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= c * bi);
        }
        let n = dotf(&v, &v).sqrt();
        if n > 1e-8 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
    }
    basis.remove(0);
    basis.truncate(d - 1);
    basis
}

/// `min ½‖θ−λ‖²_H` over the halfspace `{λ : yᵀλ ≥ b}`.
///
/// Zero when θ lies inside. Otherwise the minimizer sits on the boundary
/// hyperplane, parametrized as `λ₀ + N z` with `N` a null-space basis of `yᵀ`,
/// and `z` solves the reduced normal equations `NᵀHN z = NᵀH(θ − λ₀)`.
pub fn halfspace_min(h: &[Vec<f64>], theta: &[f64], y: &[f64], b: f64) -> Option<f64> {
    if dotf(y, theta) >= b {
        return Some(0.0);
    }
    let d = theta.len();
    let yy = dotf(y, y);
    let lambda0: Vec<f64> = y.iter().map(|v| b * v / yy).collect();
    let hmul = |v: &[f64]| -> Vec<f64> { h.iter().map(|row| dotf(row, v)).collect() };
    let diff: Vec<f64> = theta.iter().zip(&lambda0).map(|(t, l)| t - l).collect();
    let lambda = if d == 1 {
        lambda0
    } else {
        let n = null_basis(y);
        let hn: Vec<Vec<f64>> = n.iter().map(|c| hmul(c)).collect();
        let a: Vec<Vec<f64>> = n
            .iter()
            .map(|ci| hn.iter().map(|hcj| dotf(ci, hcj)).collect())
            .collect();
        let hd = hmul(&diff);
        let rhs: Vec<f64> = n.iter().map(|c| dotf(c, &hd)).collect();
        let z = gauss_solve(a, rhs)?;
        let mut l = lambda0;
        for (c, zi) in n.iter().zip(&z) {
            l.iter_mut().zip(c).for_each(|(li, ci)| *li += zi * ci);
        }
        l
    };
    let r: Vec<f64> = theta.iter().zip(&lambda).map(|(t, l)| t - l).collect();
    Some(0.5 * dotf(&r, &hmul(&r)))
}

/// Halfspaces `(y, b)` with `{λ : yᵀλ ≥ b}` whose union is the alternative
/// set, derived from the answer definition alone.
pub fn alternative_halfspaces(
    spec: &ProblemSpec<f64>,
    arms: &ArmSet<f64>,
    theta: &[f64],
) -> Result<Vec<(Vec<f64>, f64)>> {
    let ans = answer(spec, arms, theta)?;
    let k = arms.len();
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    Ok(match (spec, ans) {
        // some other arm beats the best one
        (ProblemSpec::Bai, Answer::Bai(best)) => (0..k)
            .filter(|&i| i != best)
            .map(|i| (sub(arms.arm(i), arms.arm(best)), 0.0))
            .collect(),
        // some arm switches side of the threshold
        (ProblemSpec::Tbp { rho }, Answer::Tbp(above)) => {
            let c = logit(*rho);
            (0..k)
                .map(|i| {
                    if above.contains(&i) {
                        (neg(arms.arm(i)), -c)
                    } else {
                        (arms.arm(i).to_vec(), c)
                    }
                })
                .collect()
        }
        // some arm switches side of the m-th arm
        (ProblemSpec::Topm { m }, Answer::Topm(top)) => {
            let logits = arms.logits(theta);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&i, &j| logits[j].total_cmp(&logits[i]).then(i.cmp(&j)));
            let pivot = order[m - 1];
            (0..k)
                .filter(|&i| i != pivot)
                .map(|i| {
                    let y = sub(arms.arm(i), arms.arm(pivot));
                    if top.contains(&i) {
                        (neg(&y), 0.0)
                    } else {
                        (y, 0.0)
                    }
                })
                .collect()
        }
        _ => unreachable!("answer kind follows the problem kind"),
    })
}

/// Brute-force ψ: minimum of [`halfspace_min`] over the alternative halfspaces.
pub fn brute_force_inner_inf(spec: &ProblemSpec<f64>, arms: &ArmSet<f64>, theta: &[f64], w: &[f64]) -> Result<f64> {
    let h = fisher_from_weights(arms, w, theta)?;
    let d = arms.dim();
    let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| h.get(i, j)).collect()).collect();
    let mut best = f64::INFINITY;
    for (y, b) in alternative_halfspaces(spec, arms, theta)? {
        if let Some(v) = halfspace_min(&rows, theta, &y, b) {
            best = best.min(v);
        }
    }
    Ok(best)
}

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = dotf(&v, &v).sqrt();
        if n > 1e-6 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// A random instance (arms in the unit ball, θ with norm in [0.5, 2]) whose
/// answer under `spec_for` is unique, with a random interior allocation.
pub fn random_case(
    d: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
    spec_for: impl Fn(&[f64], &mut ChaCha8Rng) -> ProblemSpec<f64>,
) -> (ArmSet<f64>, Vec<f64>, ProblemSpec<f64>, Vec<f64>) {
    loop {
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let r = rng.random_range(0.3..1.0);
                random_unit(d, rng).into_iter().map(|v| v * r).collect()
            })
            .collect();
        let Ok(arms) = ArmSet::new(rows) else { continue };
        let norm = rng.random_range(0.5..2.0);
        let theta: Vec<f64> = random_unit(d, rng).into_iter().map(|v| v * norm).collect();
        let spec = spec_for(&arms.logits(&theta), rng);
        if answer(&spec, &arms, &theta).is_err() {
            continue;
        }
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let w = raw.iter().map(|v| v / s).collect();
        return (arms, theta, spec, w);
    }
}

pub fn tbp_spec(logits: &[f64], rng: &mut ChaCha8Rng) -> ProblemSpec<f64> {
    let lo = logits.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ProblemSpec::Tbp {
        rho: mu(rng.random_range(lo..=hi)),
    }
}

/// Closed-form ψ against the brute-force halfspace minimization: `n` random
/// cases for each problem kind with d = 2 and K ∈ {3, 4}, relative error ≤ 1e-8.
pub fn inner_inf_suite(n: usize, seed: u64, perturb: Perturbation) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("inner_inf", 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for kind in ["bai", "tbp", "topm"] {
        for case in 0..n {
            let k = 3 + case % 2;
            let (arms, theta, spec, w) = random_case(2, k, &mut rng, |logits, r| match kind {
                "bai" => ProblemSpec::Bai,
                "tbp" => tbp_spec(logits, r),
                _ => ProblemSpec::Topm { m: 1 + case % (k - 1) },
            });
            let closed = perturb.apply(inner_inf(&spec, &arms, &theta, &w)?.value);
            let brute = brute_force_inner_inf(&spec, &arms, &theta, &w)?;
            let err = (closed - brute).abs() / brute.abs().max(1e-300);
            report.record(err, || {
                format!("{kind} case {case} (K={k}): closed {closed:.15e} vs brute force {brute:.15e}")
            });
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Frank-Wolfe versus a barycentric grid

/// Maximum of ψ over the grid `{n/res : n ∈ ℕ^K, Σn = res}` (d = 2 only).
pub fn grid_max(spec: &ProblemSpec<f64>, arms: &ArmSet<f64>, theta: &[f64], res: usize) -> Result<f64> {
    assert_eq!(arms.dim(), 2, "grid oracle is implemented for d = 2");
    let k = arms.len();
    // per-arm curvature-weighted outer products (h11, h12, h22)
    let outer: Vec<[f64; 3]> = arms
        .iter()
        .map(|x| {
            let c = mu_dot(dotf(x, theta));
            [c * x[0] * x[0], c * x[0] * x[1], c * x[1] * x[1]]
        })
        .collect();
    let terms: Vec<(Vec<f64>, f64)> = alternative_halfspaces(spec, arms, theta)?
        .into_iter()
        .map(|(y, b)| {
            let gap = b - dotf(&y, theta);
            (y, if gap > 0.0 { gap } else { 0.0 })
        })
        .collect();
    let mut best = 0.0_f64;
    let mut counts = vec![0usize; k];
    let inv = 1.0 / res as f64;
    // enumerate compositions of `res` into k parts
    fn rec(pos: usize, left: usize, counts: &mut [usize], visit: &mut dyn FnMut(&[usize])) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            visit(counts);
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, visit);
        }
    }
    let mut visit = |n: &[usize]| {
        let mut h = [0.0; 3];
        for (o, &c) in outer.iter().zip(n) {
            if c > 0 {
                let w = c as f64 * inv;
                h[0] += w * o[0];
                h[1] += w * o[1];
                h[2] += w * o[2];
            }
        }
        let det = h[0] * h[2] - h[1] * h[1];
        if !(det > 1e-14 * (h[0] + h[2]).powi(2)) {
            return;
        }
        let mut v = f64::INFINITY;
        for (y, gap) in &terms {
            let q = (h[2] * y[0] * y[0] - 2.0 * h[1] * y[0] * y[1] + h[0] * y[1] * y[1]) / det;
            v = v.min(gap * gap / (2.0 * q));
        }
        best = best.max(v);
    };
    rec(0, res, &mut counts, &mut visit);
    Ok(best)
}

/// Frank-Wolfe ψ★ within 2% of the 200-resolution grid maximum on d = 2,
/// K ∈ {3, 4, 5} instances of every problem kind.
pub fn fw_grid_suite(perturb: Perturbation) -> Result<SuiteReport> {
    let mut report = SuiteReport::new("fw_grid", 0.02);
    let fw = FwConfig::default();
    for (label, arms, theta, spec) in fw_grid_cases()? {
        let fw_value = perturb.apply(optimal_allocation(&spec, &arms, &theta, &fw)?.value);
        let grid = grid_max(&spec, &arms, &theta, 200)?;
        let err = (fw_value - grid).abs() / grid.abs().max(1e-300);
        report.record(err, || {
            format!("{label}: Frank-Wolfe {fw_value:.6e} vs grid {grid:.6e}")
        });
    }
    Ok(report)
}

/// Label, arms, θ and problem of one grid comparison.
pub type GridCase = (String, ArmSet<f64>, Vec<f64>, ProblemSpec<f64>);

/// The d = 2 instances of the grid comparison: random arms for every kind and
/// K ∈ {3, 4, 5}, plus two hard BAI instances.
pub fn fw_grid_cases() -> Result<Vec<GridCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf00d);
    let mut cases: Vec<GridCase> = Vec::new();
    for k in [3, 4, 5] {
        for kind in ["bai", "tbp", "topm"] {
            let (arms, theta, spec, _) = random_case(2, k, &mut rng, |logits, r| match kind {
                "bai" => ProblemSpec::Bai,
                "tbp" => tbp_spec(logits, r),
                _ => ProblemSpec::Topm { m: 2 },
            });
            cases.push((format!("{kind} K={k}"), arms, theta, spec));
        }
    }
    for alpha in [0.1, 0.3] {
        let inst = generate(&GeneratorConfig::hard_bai(2, alpha))?;
        cases.push((
            format!("hard bai alpha={alpha}"),
            inst.arms().clone(),
            inst.theta_star().to_vec(),
            inst.spec().clone(),
        ));
    }
    Ok(cases)
}

// ---------------------------------------------------------------------------
// KL versus its quadratic approximation

pub const KL_GAPS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Least-squares slope of `log max|KL − quadratic|` against `log ε`; passes
/// when it lies in `3 ± 0.3`. Also returns the per-ε maxima.
pub fn kl_suite(perturb: Perturbation) -> (SuiteReport, Vec<f64>) {
    let mut report = SuiteReport::new("kl_quadratic", 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let samples: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..200)
        .map(|_| {
            let d = rng.random_range(1..=4);
            let x: Vec<f64> = random_unit(d, &mut rng)
                .into_iter()
                .map(|v| v * rng.random_range(0.2..1.0))
                .collect();
            let theta: Vec<f64> = random_unit(d, &mut rng)
                .into_iter()
                .map(|v| v * rng.random_range(0.0..3.0))
                .collect();
            let u = random_unit(d, &mut rng);
            (x, theta, u)
        })
        .collect();
    let maxima: Vec<f64> = KL_GAPS
        .iter()
        .map(|&eps| {
            samples
                .iter()
                .map(|(x, theta, u)| {
                    let lambda: Vec<f64> = theta.iter().zip(u).map(|(t, v)| t + eps * v).collect();
                    let q = perturb.apply(kl_quadratic(x, theta, &lambda));
                    (kl_bernoulli_logit(x, theta, &lambda) - q).abs()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let xs: Vec<f64> = KL_GAPS.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = maxima.iter().map(|m| m.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    report.record((slope - 3.0).abs(), || {
        format!("log-log slope {slope:.4}, maxima {maxima:?}")
    });
    (report, maxima)
}

// ---------------------------------------------------------------------------
// forced-exploration eigenvalue bound along runs

/// Log-TS runs on hard instances with d ∈ {2,…,6}; every round past the
/// guarantee start must satisfy the forced-exploration eigenvalue bound.
pub fn exploration_bound_suite() -> Result<SuiteReport> {
    let mut report = SuiteReport::new("exploration_bound", 0.0);
    for d in 2..=6 {
        let inst = generate(&GeneratorConfig::hard_bai(d, 0.3))?;
        let mut cfg = RunConfig::for_instance(&inst, 0.1)?;
        cfg.budget = 3000;
        cfg.fw.max_iters = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let r = run_log_ts(&inst, &cfg, &mut rng)?;
        let v = r.diagnostics.exploration_violations;
        report.record(v as f64, || {
            format!(
                "d={d}: {v} violations in {} checked rounds",
                r.diagnostics.exploration_checked
            )
        });
        if r.diagnostics.exploration_checked == 0 {
            report.passed = false;
            report.failures.push(format!("d={d}: no round was checked"));
        }
    }
    Ok(report)
}
