//! Noise-shaping filter construction, feasibility and stability constants.
//!
//! The filter of order `r` with parameter `σ` has taps at
//! `n_j = σ (j-1)² + 1` with Lagrange-type weights
//! `d_j = Π_{i≠j} n_i / (n_i - n_j)`. Weights are computed exactly and
//! converted to `f64` once.

use std::f64::consts::PI;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact binomial coefficient `C(n, k)`, zero for `k > n`.
pub fn binomial_exact(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

pub fn binomial(n: u64, k: u64) -> f64 {
    binomial_exact(n, k).to_f64().unwrap_or(f64::INFINITY)
}

fn ratio_to_f64(q: &BigRational) -> f64 {
    q.to_f64().expect("finite rational")
}

#[derive(Clone, Debug)]
pub struct FilterSpec {
    order: usize,
    sigma: u64,
    supports: Vec<usize>,
    coeffs_exact: Vec<BigRational>,
    coeffs: Vec<f64>,
}

impl FilterSpec {
    pub fn new(order: usize, sigma: u64) -> Result<Self> {
        if order == 0 {
            return Err(Error::BadParameter("filter order must be ≥ 1".into()));
        }
        if sigma == 0 {
            return Err(Error::BadParameter("sigma must be ≥ 1".into()));
        }
        let supports: Vec<usize> = (0..order as u64)
            .map(|j| (sigma * j * j + 1) as usize)
            .collect();
        let coeffs_exact: Vec<BigRational> = supports
            .iter()
            .enumerate()
            .map(|(j, &nj)| {
                supports
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != j)
                    .fold(BigRational::one(), |acc, (_, &ni)| {
                        acc * BigRational::new(
                            BigInt::from(ni as i64),
                            BigInt::from(ni as i64 - nj as i64),
                        )
                    })
            })
            .collect();
        let coeffs = coeffs_exact.iter().map(ratio_to_f64).collect();
        Ok(Self {
            order,
            sigma,
            supports,
            coeffs_exact,
            coeffs,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sigma(&self) -> u64 {
        self.sigma
    }

    /// Tap positions `n_1 < … < n_r`.
    pub fn supports(&self) -> &[usize] {
        &self.supports
    }

    /// Tap weights `d_j = h(n_j)`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_exact(&self) -> &[BigRational] {
        &self.coeffs_exact
    }

    /// Nonzero taps as `(position, weight)` pairs.
    pub fn taps(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.supports.iter().copied().zip(self.coeffs.iter().copied())
    }

    /// `h(l)` for any `l ≥ 1`.
    pub fn h(&self, l: usize) -> f64 {
        self.supports
            .iter()
            .position(|&s| s == l)
            .map_or(0.0, |j| self.coeffs[j])
    }

    /// Memory depth `L = n_r`.
    pub fn length(&self) -> usize {
        *self.supports.last().expect("order ≥ 1")
    }

    /// Bandwidth `K = n_r - r + 1` of the factor `G`.
    pub fn bandwidth(&self) -> usize {
        self.length() + 1 - self.order
    }

    /// `M_r = C(r + K - 2, r - 1)`.
    pub fn m_r(&self) -> f64 {
        let r = self.order as u64;
        binomial(r + self.bandwidth() as u64 - 2, r - 1)
    }

    pub fn h_l1(&self) -> f64 {
        ratio_to_f64(&self.coeffs_exact.iter().map(|c| c.abs()).sum::<BigRational>())
    }

    /// `cosh(π σ^{-1/2})`, the analytic bound on `‖h‖₁`.
    pub fn cosh_bound(&self) -> f64 {
        (PI / (self.sigma as f64).sqrt()).cosh()
    }

    /// Exact coefficient of the chain `P_{W_i} ⋯ P_{W_{j+1}}` in block
    /// `(i, j)` of `G = D^{-r}(I - H)` at offset `m = i - j ≥ 1`:
    /// `C(r+m-1, r-1) - Σ_{l ≤ m} C(r+m-l-1, r-1) h_l`.
    pub fn g_coefficient_exact(&self, m: usize) -> BigRational {
        g_coefficient_with(self.order, &self.supports, &self.coeffs_exact, m)
    }

    pub fn g_coefficient(&self, m: usize) -> f64 {
        ratio_to_f64(&self.g_coefficient_exact(m))
    }

    pub fn feasibility(&self, target_alpha: f64) -> FeasibilityReport {
        let h_l1 = self.h_l1();
        FeasibilityReport {
            h_l1,
            cosh_bound: self.cosh_bound(),
            target_alpha,
            passed: h_l1 < target_alpha,
        }
    }

    pub fn to_json(&self) -> FilterJson {
        FilterJson {
            r: self.order,
            sigma: self.sigma,
            supports: self.supports.clone(),
            coeffs: self.coeffs.clone(),
        }
    }
}

pub(crate) fn g_coefficient_with(
    order: usize,
    supports: &[usize],
    coeffs: &[BigRational],
    m: usize,
) -> BigRational {
    let r = order as u64;
    let m64 = m as u64;
    let head = BigRational::from_integer(binomial_exact(r + m64 - 1, r - 1));
    let tail: BigRational = supports
        .iter()
        .zip(coeffs)
        .filter(|(&l, _)| l <= m)
        .map(|(&l, c)| BigRational::from_integer(binomial_exact(r + m64 - l as u64 - 1, r - 1)) * c)
        .sum();
    head - tail
}

/// Exact defect `C(r+n-1, r-1) - Σ_{l=1}^{n} C(r+n-1-l, r-1) h_l` for
/// arbitrary tap data. Zero for every `n ≥ n_r - r + 1` when the weights
/// are the interpolation weights.
pub fn interpolation_defect(
    order: usize,
    supports: &[usize],
    coeffs: &[BigRational],
    n: usize,
) -> BigRational {
    g_coefficient_with(order, supports, coeffs, n)
}

/// Serialized filter: `{ "r", "sigma", "supports", "coeffs" }`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FilterJson {
    pub r: usize,
    pub sigma: u64,
    pub supports: Vec<usize>,
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FeasibilityReport {
    pub h_l1: f64,
    pub cosh_bound: f64,
    pub target_alpha: f64,
    /// `‖h‖₁ < target_alpha`, which bounds `sup_n Σ_j ‖H_{n,j}‖`.
    pub passed: bool,
}

/// Smallest integer `σ ≥ 1` with `cosh(π σ^{-1/2}) ≤ alpha`.
pub fn min_sigma_for_alpha(alpha: f64) -> Result<u64> {
    if alpha <= 1.0 || !alpha.is_finite() {
        return Err(Error::BadParameter(format!("alpha must exceed 1, got {alpha}")));
    }
    // Slack for the σ boundary cases where the inequality is an equality.
    let slack = alpha * 4.0 * f64::EPSILON;
    let ok = |s: u64| (PI / (s as f64).sqrt()).cosh() <= alpha + slack;
    let estimate = (PI / alpha.acosh()).powi(2);
    let mut sigma = (estimate.ceil() as u64).max(1);
    while !ok(sigma) {
        sigma += 1;
    }
    while sigma > 1 && ok(sigma - 1) {
        sigma -= 1;
    }
    Ok(sigma)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityParams {
    pub d_star: usize,
    pub delta: f64,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub c_bound: f64,
}

/// `(α₁, α₂)` for given `d*` and `δ`; `α₁ = ∞` when `d* = 1`.
pub fn alpha_limits(d_star: usize, delta: f64) -> Result<(f64, f64)> {
    if d_star == 0 {
        return Err(Error::BadParameter("d* must be ≥ 1".into()));
    }
    let inv = 1.0 / d_star as f64;
    if !(delta > 0.0 && delta < inv) {
        return Err(Error::BadParameter(format!(
            "delta = {delta} must lie in (0, 1/d*) = (0, {inv})"
        )));
    }
    let alpha1 = if d_star == 1 {
        f64::INFINITY
    } else {
        ((1.0 - 2.0 * delta * inv + delta * delta) / (1.0 - inv * inv)).sqrt()
    };
    let gap = inv - delta;
    let alpha2 = 0.5 * (gap + (gap * gap + 4.0).sqrt());
    Ok((alpha1, alpha2))
}

/// Default `α`: `min(α₁, α₂) - 10⁻³`, rounded to three decimals.
pub fn default_alpha(d_star: usize, delta: f64) -> Result<f64> {
    let (a1, a2) = alpha_limits(d_star, delta)?;
    Ok(((a1.min(a2) - 1e-3) * 1000.0).round() / 1000.0)
}

pub fn stability_params(d_star: usize, delta: f64, alpha: f64) -> Result<StabilityParams> {
    let (alpha1, alpha2) = alpha_limits(d_star, delta)?;
    if !(alpha > 1.0 && alpha <= alpha1.min(alpha2)) {
        return Err(Error::Infeasible(format!(
            "alpha = {alpha} outside (1, min(α₁, α₂)] = (1, {}]",
            alpha1.min(alpha2)
        )));
    }
    let c_bound = (1.0 / d_star as f64 - delta) * alpha / (alpha * alpha - 1.0);
    if c_bound < 1.0 {
        return Err(Error::Infeasible(format!("state bound C = {c_bound} < 1")));
    }
    Ok(StabilityParams {
        d_star,
        delta,
        alpha,
        alpha1,
        alpha2,
        c_bound,
    })
}
