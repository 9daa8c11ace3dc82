//! Logistic-model primitives: the link, its derivatives, Fisher matrices and
//! the Bernoulli KL divergence in natural parameters.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::design::Allocation;
use crate::error::{LogTsError, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{dot, norm, Scalar};

/// Supremum of `mu_dot` for the logistic link.
pub const LINK_DERIVATIVE_BOUND: f64 = 0.25;

/// Logistic link `1 / (1 + e^{-z})`, evaluated through `e^{-|z|}` so it never overflows.
#[inline]
pub fn mu<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `μ(z)(1 − μ(z))`, computed as `e^{-|z|} / (1 + e^{-|z|})²` to keep relative
/// precision in the tails.
#[inline]
pub fn mu_dot<T: Scalar>(z: T) -> T {
    let e = (-z.abs()).exp();
    let den = T::one() + e;
    e / (den * den)
}

/// Second derivative `μ̇(z)(1 − 2μ(z))`.
#[inline]
pub fn mu_ddot<T: Scalar>(z: T) -> T {
    mu_dot(z) * (T::one() - T::lit(2.0) * mu(z))
}

/// `(μ(z), μ̇(z), μ̈(z))` from a single exponential.
#[inline]
pub fn link_terms<T: Scalar>(z: T) -> (T, T, T) {
    let e = (-z.abs()).exp();
    let inv = T::one() / (T::one() + e);
    let m = if z >= T::zero() { inv } else { e * inv };
    let d = e * inv * inv;
    (m, d, d * (T::one() - T::lit(2.0) * m))
}

/// Inverse link `log(p / (1 − p))`.
#[inline]
pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// Log-partition of the Bernoulli family in natural form, `log(1 + e^z)`.
#[inline]
pub fn log_partition<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Parameter vector θ. Norm constraints are checked where they apply
/// (true parameters and projected estimates), not on construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Parameter<T>(Vec<T>);

impl<T: Scalar> Parameter<T> {
    pub fn new(theta: Vec<T>) -> Self {
        Self(theta)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self(self.0.iter().map(|v| *v * s).collect())
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for Parameter<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// A finite arm set in the unit ball that spans `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmSet<T> {
    dim: usize,
    // K×d row-major
    data: Vec<T>,
}

impl<T: Scalar> ArmSet<T> {
    pub fn new(arms: Vec<Vec<T>>) -> Result<Self> {
        if arms.len() < 2 {
            return Err(LogTsError::InvalidArms(format!(
                "need at least two arms, got {}",
                arms.len()
            )));
        }
        let dim = arms[0].len();
        if dim == 0 {
            return Err(LogTsError::InvalidArms("arms must have dimension ≥ 1".into()));
        }
        let tol = T::structural_tol();
        let mut data = Vec::with_capacity(arms.len() * dim);
        for (i, a) in arms.iter().enumerate() {
            if a.len() != dim {
                return Err(LogTsError::DimensionMismatch {
                    expected: dim,
                    got: a.len(),
                });
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(LogTsError::InvalidArms(format!("arm {i} is not finite")));
            }
            if norm(a) > T::one() + tol {
                return Err(LogTsError::InvalidArms(format!("arm {i} has norm {} > 1", norm(a))));
            }
            data.extend_from_slice(a);
        }
        let set = Self { dim, data };
        let gram = set.gram();
        let scale = gram.trace().max(T::min_positive_value());
        if gram.min_eigenvalue() <= T::lit(1e-10).max(T::epsilon() * T::lit(64.0)) * scale {
            return Err(LogTsError::InvalidArms("arms do not span R^d".into()));
        }
        Ok(set)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn arm(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.iter().map(|a| a.to_vec()).collect()
    }

    /// Logits `xᵀθ` for every arm.
    pub fn logits(&self, theta: &[T]) -> Vec<T> {
        self.iter().map(|a| dot(a, theta)).collect()
    }

    /// `Σ_x x xᵀ`.
    pub fn gram(&self) -> SymMatrix<T> {
        let mut g = SymMatrix::zeros(self.dim);
        for a in self.iter() {
            g.add_outer(a, T::one());
        }
        g
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(LogTsError::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }
}

/// `Σ_x weight_x μ̇(xᵀθ) x xᵀ` for arbitrary nonnegative weights.
pub fn fisher_from_weights<T: Scalar>(arms: &ArmSet<T>, weights: &[T], theta: &[T]) -> Result<SymMatrix<T>> {
    arms.check_dim(theta.len())?;
    if weights.len() != arms.len() {
        return Err(LogTsError::DimensionMismatch {
            expected: arms.len(),
            got: weights.len(),
        });
    }
    let mut h = SymMatrix::zeros(arms.dim());
    for (a, w) in arms.iter().zip(weights) {
        if *w == T::zero() {
            continue;
        }
        h.add_outer(a, *w * mu_dot(dot(a, theta)));
    }
    h.symmetrize();
    Ok(h)
}

/// `Σ_x scale_x x xᵀ`; `scales` must have one entry per arm.
pub(crate) fn gram_weighted<T: Scalar>(arms: &ArmSet<T>, scales: impl IntoIterator<Item = T>) -> SymMatrix<T> {
    let mut h = SymMatrix::zeros(arms.dim());
    for (a, s) in arms.iter().zip(scales) {
        if s != T::zero() {
            h.add_outer(a, s);
        }
    }
    h
}

/// Fisher matrix of an allocation, `H_w(θ)`.
pub fn fisher_weighted<T: Scalar>(arms: &ArmSet<T>, w: &Allocation<T>, theta: &Parameter<T>) -> Result<SymMatrix<T>> {
    fisher_from_weights(arms, w, theta)
}

/// KL divergence between the reward laws of arm `x` under θ and under λ:
/// `xᵀ(θ−λ)·μ(xᵀθ) − A(xᵀθ) + A(xᵀλ)` with `A` the log-partition.
pub fn kl_bernoulli_logit<T: Scalar>(x: &[T], theta: &[T], lambda: &[T]) -> T {
    let a = dot(x, theta);
    let b = dot(x, lambda);
    let kl = (a - b) * mu(a) - log_partition(a) + log_partition(b);
    kl.max(T::zero())
}

/// Second-order approximation `½ μ̇(xᵀθ) (xᵀ(θ−λ))²`.
pub fn kl_quadratic<T: Scalar>(x: &[T], theta: &[T], lambda: &[T]) -> T {
    let a = dot(x, theta);
    let gap = a - dot(x, lambda);
    T::lit(0.5) * mu_dot(a) * gap * gap
}
