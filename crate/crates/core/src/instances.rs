//! Benchmark instance families: the hard BAI and TBP constructions and arms
//! drawn uniformly on the unit sphere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{optimal_allocation, FwConfig};
use crate::envsim::Instance;
use crate::error::{LogTsError, Result};
use crate::model::{mu, ArmSet, Parameter};
use crate::problems::ProblemSpec;
use crate::scalar::{dot, Scalar};

/// Redraws allowed before sphere generation gives up.
pub const MAX_REDRAWS: usize = 1000;

/// Default `T★⁻¹` band for sphere BAI instances.
pub const DEFAULT_SPHERE_BAI_BAND: (f64, f64) = (1.5e-3, 1.0);
/// Default `T★⁻¹` band for sphere TBP instances.
pub const DEFAULT_SPHERE_TBP_BAND: (f64, f64) = (3e-3, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family<T> {
    /// `{e₁,…,e_d, x′}` with `x′ = cos α e₁ + sin α e₂`.
    HardBai { d: usize, alpha: T },
    /// `{e₁,…,e_d, x′, x″}` with `x′ = p(cos α e₁ + sin α e₂)`,
    /// `x″ = (1−p)(cos α e₁ − sin α e₂)` and ρ the midpoint of their means.
    HardTbp { d: usize, alpha: T, p: T },
    SphereBai {
        k: usize,
        d: usize,
        seed: u64,
        band: (T, T),
    },
    SphereTbp {
        k: usize,
        d: usize,
        seed: u64,
        rho: T,
        band: (T, T),
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig<T> {
    pub family: Family<T>,
    /// `‖θ*‖`.
    pub norm_theta: T,
    /// Radius S of the parameter ball; `None` means `S = norm_theta`.
    pub radius: Option<T>,
    /// Frank-Wolfe settings used to measure `T★⁻¹` during rejection.
    pub fw: FwConfig<T>,
}

impl<T: Scalar> GeneratorConfig<T> {
    pub fn new(family: Family<T>) -> Self {
        Self {
            family,
            norm_theta: T::one(),
            radius: None,
            fw: FwConfig::default(),
        }
    }

    pub fn hard_bai(d: usize, alpha: T) -> Self {
        Self::new(Family::HardBai { d, alpha })
    }

    pub fn hard_tbp(d: usize, alpha: T, p: T) -> Self {
        Self::new(Family::HardTbp { d, alpha, p })
    }

    pub fn sphere_bai(k: usize, seed: u64) -> Self {
        let (lo, hi) = DEFAULT_SPHERE_BAI_BAND;
        Self::new(Family::SphereBai {
            k,
            d: 2,
            seed,
            band: (T::lit(lo), T::lit(hi)),
        })
    }

    pub fn sphere_tbp(k: usize, seed: u64) -> Self {
        let (lo, hi) = DEFAULT_SPHERE_TBP_BAND;
        Self::new(Family::SphereTbp {
            k,
            d: 2,
            seed,
            rho: T::lit(0.5),
            band: (T::lit(lo), T::lit(hi)),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.norm_theta > T::zero()) || !self.norm_theta.is_finite() {
            return Err(LogTsError::config("norm_theta must be positive"));
        }
        if let Some(s) = self.radius {
            if s < self.norm_theta {
                return Err(LogTsError::config("S must be at least norm_theta"));
            }
        }
        let quarter_pi = T::lit(std::f64::consts::FRAC_PI_4);
        let check_alpha = |alpha: T| {
            if alpha > T::zero() && alpha < quarter_pi {
                Ok(())
            } else {
                Err(LogTsError::config(format!("alpha must lie in (0, π/4), got {alpha}")))
            }
        };
        let check_band = |(lo, hi): (T, T)| {
            if lo > T::zero() && lo < hi {
                Ok(())
            } else {
                Err(LogTsError::config(format!(
                    "complexity band must satisfy 0 < lo < hi, got ({lo}, {hi})"
                )))
            }
        };
        match &self.family {
            Family::HardBai { d, alpha } => {
                check_dim(*d)?;
                check_alpha(*alpha)
            }
            Family::HardTbp { d, alpha, p } => {
                check_dim(*d)?;
                check_alpha(*alpha)?;
                if *p > T::zero() && *p < T::one() {
                    Ok(())
                } else {
                    Err(LogTsError::config(format!("p must lie in (0,1), got {p}")))
                }
            }
            Family::SphereBai { k, d, band, .. } => {
                check_sphere(*k, *d)?;
                check_band(*band)
            }
            Family::SphereTbp { k, d, rho, band, .. } => {
                check_sphere(*k, *d)?;
                ProblemSpec::Tbp { rho: *rho }.validate(*k)?;
                check_band(*band)
            }
        }
    }

    fn radius_or_norm(&self) -> T {
        self.radius.unwrap_or(self.norm_theta)
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d >= 2 {
        Ok(())
    } else {
        Err(LogTsError::config(format!("hard instances need d ≥ 2, got {d}")))
    }
}

fn check_sphere(k: usize, d: usize) -> Result<()> {
    if d >= 1 && k >= d.max(2) {
        Ok(())
    } else {
        Err(LogTsError::config(format!(
            "sphere instances need K ≥ max(d, 2), got K={k}, d={d}"
        )))
    }
}

fn basis<T: Scalar>(d: usize) -> Vec<Vec<T>> {
    (0..d)
        .map(|i| {
            let mut e = vec![T::zero(); d];
            e[i] = T::one();
            e
        })
        .collect()
}

fn planar<T: Scalar>(d: usize, scale: T, angle: T) -> Vec<T> {
    let mut x = vec![T::zero(); d];
    x[0] = scale * angle.cos();
    x[1] = scale * angle.sin();
    x
}

fn axis_theta<T: Scalar>(d: usize, norm: T) -> Parameter<T> {
    let mut theta = vec![T::zero(); d];
    theta[0] = norm;
    Parameter::new(theta)
}

/// Builds the instance described by `cfg`.
pub fn generate<T: Scalar>(cfg: &GeneratorConfig<T>) -> Result<Instance<T>> {
    cfg.validate()?;
    let radius = cfg.radius_or_norm();
    match &cfg.family {
        Family::HardBai { d, alpha } => {
            let mut rows = basis(*d);
            rows.push(planar(*d, T::one(), *alpha));
            Instance::new(
                format!("hard_bai_d{d}_a{alpha}"),
                ArmSet::new(rows)?,
                axis_theta(*d, cfg.norm_theta),
                radius,
                ProblemSpec::Bai,
            )
        }
        Family::HardTbp { d, alpha, p } => {
            let x1 = planar(*d, *p, *alpha);
            let x2 = planar(*d, T::one() - *p, -*alpha);
            let theta = axis_theta(*d, cfg.norm_theta);
            let rho = (mu(dot(&x1, &theta)) + mu(dot(&x2, &theta))) * T::lit(0.5);
            let mut rows = basis(*d);
            rows.push(x1);
            rows.push(x2);
            Instance::new(
                format!("hard_tbp_d{d}_a{alpha}_p{p}"),
                ArmSet::new(rows)?,
                theta,
                radius,
                ProblemSpec::Tbp { rho },
            )
        }
        Family::SphereBai { k, d, seed, band } => sphere(
            cfg,
            *k,
            *d,
            *seed,
            *band,
            ProblemSpec::Bai,
            format!("sphere_bai_k{k}_s{seed}"),
        ),
        Family::SphereTbp { k, d, seed, rho, band } => sphere(
            cfg,
            *k,
            *d,
            *seed,
            *band,
            ProblemSpec::Tbp { rho: *rho },
            format!("sphere_tbp_k{k}_s{seed}"),
        ),
    }
}

fn unit_vector<T: Scalar>(d: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.iter().map(|a| T::lit(a / n)).collect();
        }
    }
}

fn sphere<T: Scalar>(
    cfg: &GeneratorConfig<T>,
    k: usize,
    d: usize,
    seed: u64,
    (lo, hi): (T, T),
    spec: ProblemSpec<T>,
    label: String,
) -> Result<Instance<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = cfg.radius_or_norm();
    let (mut seen_lo, mut seen_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..MAX_REDRAWS {
        let rows: Vec<Vec<T>> = (0..k).map(|_| unit_vector(d, &mut rng)).collect();
        let theta: Vec<T> = unit_vector::<T>(d, &mut rng)
            .into_iter()
            .map(|v| v * cfg.norm_theta)
            .collect();
        let Ok(arms) = ArmSet::new(rows) else { continue };
        let Ok(inst) = Instance::new(label.clone(), arms, Parameter::new(theta), radius, spec.clone()) else {
            continue;
        };
        let value = optimal_allocation(inst.spec(), inst.arms(), inst.theta_star(), &cfg.fw)?.value;
        let v = value.to_f64_lossy();
        seen_lo = seen_lo.min(v);
        seen_hi = seen_hi.max(v);
        if value >= lo && value <= hi {
            return Ok(inst);
        }
    }
    Err(LogTsError::RejectionExhausted {
        draws: MAX_REDRAWS,
        band_lo: lo.to_f64_lossy(),
        band_hi: hi.to_f64_lossy(),
        seen_lo,
        seen_hi,
    })
}
