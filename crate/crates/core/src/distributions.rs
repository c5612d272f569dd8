//! Parametric laws for the random ingredients of the capital model.
//!
//! Every family carries exact samplers together with analytic log-moments
//! `log E X^α`, cumulant generating functions `log E e^{αX}` and their
//! derivatives. Divergent moments are reported as `f64::INFINITY` rather than
//! as errors so that root finders can probe the edge of the finite domain.
//!
//! New families must supply all of `log_moment`, `cgf`, the two derivatives,
//! `moment_index`, and a quadrature self-test in this module's tests.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution as _, Exp, Gamma, LogNormal, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::quadrature::{self, Tolerance};

const PROB_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("parameter `{name}` must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("discrete law needs matching non-empty value/probability lists")]
    ShapeMismatch,
    #[error("discrete probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("log-moments need support in (0, ∞)")]
    SupportNotPositive,
}

/// A parametric law. Serialized as `{"family": "...", ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Distribution {
    /// Degenerate law at `value`.
    Constant {
        value: f64,
    },
    /// `X = e^N` with `N ~ Normal(mean_log, var_log)`.
    #[serde(alias = "shifted_log_normal", alias = "lognormal")]
    LogNormal {
        mean_log: f64,
        var_log: f64,
    },
    Exponential {
        mean: f64,
    },
    /// Gamma with density `rate^shape x^{shape-1} e^{-rate x} / Γ(shape)`.
    Gamma {
        shape: f64,
        rate: f64,
    },
    #[serde(alias = "discrete_weighted")]
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
    Normal {
        mean: f64,
        var: f64,
    },
}

fn positive(name: &'static str, value: f64) -> Result<(), DistributionError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(DistributionError::InvalidParameter {
            name,
            requirement: "finite and > 0",
            value,
        })
    }
}

fn finite(name: &'static str, value: f64) -> Result<(), DistributionError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(DistributionError::InvalidParameter {
            name,
            requirement: "finite",
            value,
        })
    }
}

impl Distribution {
    pub fn constant(value: f64) -> Result<Self, DistributionError> {
        let d = Self::Constant { value };
        d.validate().map(|_| d)
    }

    pub fn log_normal(mean_log: f64, var_log: f64) -> Result<Self, DistributionError> {
        let d = Self::LogNormal { mean_log, var_log };
        d.validate().map(|_| d)
    }

    pub fn exponential(mean: f64) -> Result<Self, DistributionError> {
        let d = Self::Exponential { mean };
        d.validate().map(|_| d)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self, DistributionError> {
        let d = Self::Gamma { shape, rate };
        d.validate().map(|_| d)
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, DistributionError> {
        let d = Self::Discrete { values, probs };
        d.validate().map(|_| d)
    }

    pub fn normal(mean: f64, var: f64) -> Result<Self, DistributionError> {
        let d = Self::Normal { mean, var };
        d.validate().map(|_| d)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        match self {
            Self::Constant { value } => finite("value", *value),
            Self::LogNormal { mean_log, var_log } => {
                finite("mean_log", *mean_log)?;
                positive("var_log", *var_log)
            }
            Self::Exponential { mean } => positive("mean", *mean),
            Self::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)
            }
            Self::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(DistributionError::ShapeMismatch);
                }
                for &v in values {
                    finite("values", v)?;
                }
                for &p in probs {
                    if !(p.is_finite() && p >= 0.0) {
                        return Err(DistributionError::InvalidParameter {
                            name: "probs",
                            requirement: "finite and >= 0",
                            value: p,
                        });
                    }
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
                    return Err(DistributionError::ProbabilitySum(total));
                }
                Ok(())
            }
            Self::Normal { mean, var } => {
                finite("mean", *mean)?;
                positive("var", *var)
            }
        }
    }

    fn support_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (values, probs): (&[f64], &[f64]) = match self {
            Self::Discrete { values, probs } => (values, probs),
            _ => (&[], &[]),
        };
        values
            .iter()
            .copied()
            .zip(probs.iter().copied())
            .filter(|&(_, p)| p > 0.0)
    }

    /// Closed hull `[min, max]` of the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Constant { value } => (*value, *value),
            Self::LogNormal { .. } | Self::Exponential { .. } | Self::Gamma { .. } => {
                (0.0, f64::INFINITY)
            }
            Self::Discrete { .. } => self
                .support_points()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
                    (lo.min(v), hi.max(v))
                }),
            Self::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// `P(X > 0) = 1`.
    pub fn is_positive(&self) -> bool {
        match self {
            Self::Constant { value } => *value > 0.0,
            Self::LogNormal { .. } | Self::Exponential { .. } | Self::Gamma { .. } => true,
            Self::Discrete { .. } => self.support_points().all(|(v, _)| v > 0.0),
            Self::Normal { .. } => false,
        }
    }

    /// `P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            Self::Constant { value } => {
                if *value > x {
                    1.0
                } else {
                    0.0
                }
            }
            Self::LogNormal { mean_log, var_log } => {
                if x <= 0.0 {
                    1.0
                } else {
                    math::normal_sf((math::ln(x) - mean_log) / math::sqrt(*var_log))
                }
            }
            Self::Exponential { mean } => {
                if x <= 0.0 {
                    1.0
                } else {
                    math::exp(-x / mean)
                }
            }
            Self::Gamma { shape, rate } => math::gamma_q(*shape, rate * x),
            Self::Discrete { .. } => self
                .support_points()
                .filter(|&(v, _)| v > x)
                .map(|(_, p)| p)
                .sum(),
            Self::Normal { mean, var } => math::normal_sf((x - mean) / math::sqrt(*var)),
        }
    }

    /// Density for the absolutely continuous families.
    pub fn density(&self, x: f64) -> Option<f64> {
        match self {
            Self::LogNormal { mean_log, var_log } => Some(if x <= 0.0 {
                0.0
            } else {
                let s = math::sqrt(*var_log);
                math::normal_pdf((math::ln(x) - mean_log) / s) / (x * s)
            }),
            Self::Exponential { mean } => Some(if x < 0.0 {
                0.0
            } else {
                math::exp(-x / mean) / mean
            }),
            Self::Gamma { shape, rate } => Some(if x <= 0.0 {
                0.0
            } else {
                math::exp(
                    shape * math::ln(*rate) + (shape - 1.0) * math::ln(x)
                        - rate * x
                        - math::ln_gamma(*shape),
                )
            }),
            Self::Normal { mean, var } => {
                let s = math::sqrt(*var);
                Some(math::normal_pdf((x - mean) / s) / s)
            }
            Self::Constant { .. } | Self::Discrete { .. } => None,
        }
    }

    pub fn is_continuous(&self) -> bool {
        self.density(0.0).is_some()
    }

    /// True for a point mass (including a discrete law with a single atom).
    pub fn is_degenerate(&self) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Discrete { .. } => self.support_points().count() <= 1,
            _ => false,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::LogNormal { mean_log, var_log } => math::exp(mean_log + 0.5 * var_log),
            Self::Exponential { mean } => *mean,
            Self::Gamma { shape, rate } => shape / rate,
            Self::Discrete { .. } => self.support_points().map(|(v, p)| v * p).sum(),
            Self::Normal { mean, .. } => *mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::LogNormal { mean_log, var_log } => {
                math::exp_m1(*var_log) * math::exp(2.0 * mean_log + var_log)
            }
            Self::Exponential { mean } => mean * mean,
            Self::Gamma { shape, rate } => shape / (rate * rate),
            Self::Discrete { .. } => {
                let m = self.mean();
                self.support_points()
                    .map(|(v, p)| p * (v - m) * (v - m))
                    .sum()
            }
            Self::Normal { var, .. } => *var,
        }
    }

    /// One draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::LogNormal { mean_log, var_log } => {
                LogNormal::new(*mean_log, math::sqrt(*var_log))
                    .map(|d| d.sample(rng))
                    .unwrap_or(f64::NAN)
            }
            Self::Exponential { mean } => Exp::new(1.0 / mean)
                .map(|d| d.sample(rng))
                .unwrap_or(f64::NAN),
            Self::Gamma { shape, rate } => Gamma::new(*shape, 1.0 / rate)
                .map(|d| d.sample(rng))
                .unwrap_or(f64::NAN),
            Self::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                // rounding left u above the running total; return the last atom with mass
                self.support_points()
                    .last()
                    .map(|(v, _)| v)
                    .unwrap_or(f64::NAN)
            }
            Self::Normal { mean, var } => Normal::new(*mean, math::sqrt(*var))
                .map(|d| d.sample(rng))
                .unwrap_or(f64::NAN),
        }
    }

    /// A draw of `X_1 + … + X_count` for i.i.d. copies of this law.
    ///
    /// Uses the closed convolution families where one exists (gamma, normal,
    /// point mass) so that large claim counts cost a single draw.
    pub fn sample_sum<R: Rng + ?Sized>(&self, count: u64, rng: &mut R) -> f64 {
        if count == 0 {
            return 0.0;
        }
        let k = count as f64;
        match self {
            Self::Constant { value } => k * value,
            Self::Exponential { mean } => Gamma::new(k, *mean)
                .map(|d| d.sample(rng))
                .unwrap_or(f64::NAN),
            Self::Gamma { shape, rate } => Gamma::new(k * shape, 1.0 / rate)
                .map(|d| d.sample(rng))
                .unwrap_or(f64::NAN),
            Self::Normal { mean, var } => {
                let z: f64 = StandardNormal.sample(rng);
                k * mean + math::sqrt(k * var) * z
            }
            Self::LogNormal { .. } | Self::Discrete { .. } => {
                (0..count).map(|_| self.sample(rng)).sum()
            }
        }
    }

    /// Open interval of exponents `α` for which `E X^α` is finite.
    pub fn log_moment_domain(&self) -> Result<(f64, f64), DistributionError> {
        if !self.is_positive() {
            return Err(DistributionError::SupportNotPositive);
        }
        Ok(match self {
            Self::Exponential { .. } => (-1.0, f64::INFINITY),
            Self::Gamma { shape, .. } => (-shape, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        })
    }

    /// Interval of `α` for which `E e^{αX}` is finite, with closedness flags at
    /// the finite endpoints: `(lo, hi, hi_included)`.
    pub fn cgf_domain(&self) -> (f64, f64, bool) {
        match self {
            Self::LogNormal { .. } => (f64::NEG_INFINITY, 0.0, true),
            Self::Exponential { mean } => (f64::NEG_INFINITY, 1.0 / mean, false),
            Self::Gamma { rate, .. } => (f64::NEG_INFINITY, *rate, false),
            _ => (f64::NEG_INFINITY, f64::INFINITY, false),
        }
    }

    /// `log E X^α`, `+∞` where the moment diverges.
    pub fn log_moment(&self, alpha: f64) -> Result<f64, DistributionError> {
        let (lo, _) = self.log_moment_domain()?;
        if alpha == 0.0 {
            return Ok(0.0);
        }
        if alpha <= lo {
            return Ok(f64::INFINITY);
        }
        Ok(match self {
            Self::Constant { value } => alpha * math::ln(*value),
            Self::LogNormal { mean_log, var_log } => {
                mean_log * alpha + 0.5 * var_log * alpha * alpha
            }
            Self::Exponential { mean } => alpha * math::ln(*mean) + math::ln_gamma(1.0 + alpha),
            Self::Gamma { shape, rate } => {
                math::ln_gamma(shape + alpha) - math::ln_gamma(*shape) - alpha * math::ln(*rate)
            }
            Self::Discrete { .. } => self
                .support_points()
                .map(|(v, p)| math::ln(p) + alpha * math::ln(v))
                .fold(f64::NEG_INFINITY, math::log_add_exp),
            Self::Normal { .. } => unreachable!("rejected by log_moment_domain"),
        })
    }

    /// `d/dα log E X^α = E(X^α log X) / E X^α`.
    pub fn log_moment_derivative(&self, alpha: f64) -> Result<f64, DistributionError> {
        let (lo, _) = self.log_moment_domain()?;
        if alpha <= lo {
            return Ok(f64::NAN);
        }
        Ok(match self {
            Self::Constant { value } => math::ln(*value),
            Self::LogNormal { mean_log, var_log } => mean_log + var_log * alpha,
            Self::Exponential { mean } => math::ln(*mean) + math::digamma(1.0 + alpha),
            Self::Gamma { shape, rate } => math::digamma(shape + alpha) - math::ln(*rate),
            Self::Discrete { .. } => {
                let norm = self.log_moment(alpha)?;
                self.support_points()
                    .map(|(v, p)| {
                        let lv = math::ln(v);
                        math::exp(math::ln(p) + alpha * lv - norm) * lv
                    })
                    .sum()
            }
            Self::Normal { .. } => unreachable!("rejected by log_moment_domain"),
        })
    }

    /// `Λ(α) = log E e^{αX}`, `+∞` beyond the convergence abscissa.
    pub fn cgf(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            return 0.0;
        }
        match self {
            Self::Constant { value } => alpha * value,
            Self::LogNormal { mean_log, var_log } => {
                if alpha > 0.0 {
                    f64::INFINITY
                } else {
                    math::ln(lognormal_laplace(*mean_log, *var_log, alpha, 0))
                }
            }
            Self::Exponential { mean } => {
                if alpha * mean >= 1.0 {
                    f64::INFINITY
                } else {
                    -math::ln_1p(-alpha * mean)
                }
            }
            Self::Gamma { shape, rate } => {
                if alpha >= *rate {
                    f64::INFINITY
                } else {
                    -shape * math::ln_1p(-alpha / rate)
                }
            }
            Self::Discrete { .. } => self
                .support_points()
                .map(|(v, p)| math::ln(p) + alpha * v)
                .fold(f64::NEG_INFINITY, math::log_add_exp),
            Self::Normal { mean, var } => mean * alpha + 0.5 * var * alpha * alpha,
        }
    }

    /// `Λ'(α) = E(X e^{αX}) / E e^{αX}`; NaN outside the finite domain.
    pub fn cgf_derivative(&self, alpha: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::LogNormal { mean_log, var_log } => {
                if alpha > 0.0 {
                    f64::NAN
                } else if alpha == 0.0 {
                    self.mean()
                } else {
                    lognormal_laplace(*mean_log, *var_log, alpha, 1)
                        / lognormal_laplace(*mean_log, *var_log, alpha, 0)
                }
            }
            Self::Exponential { mean } => {
                if alpha * mean >= 1.0 {
                    f64::NAN
                } else {
                    mean / (1.0 - alpha * mean)
                }
            }
            Self::Gamma { shape, rate } => {
                if alpha >= *rate {
                    f64::NAN
                } else {
                    shape / (rate - alpha)
                }
            }
            Self::Discrete { .. } => {
                let norm = self.cgf(alpha);
                self.support_points()
                    .map(|(v, p)| math::exp(math::ln(p) + alpha * v - norm) * v)
                    .sum()
            }
            Self::Normal { mean, var } => mean + var * alpha,
        }
    }

    /// `sup{α ≥ 0 : E |X|^α < ∞}`. All shipped families are light-tailed, so
    /// this is `+∞`; a regularly varying family would return its tail index.
    pub fn moment_index(&self) -> f64 {
        f64::INFINITY
    }
}

/// `E[X^power e^{αX}]` for `X = e^N`, `α < 0`, by quadrature over the normal variable.
fn lognormal_laplace(mean_log: f64, var_log: f64, alpha: f64, power: i32) -> f64 {
    let s = math::sqrt(var_log);
    let integrand = |z: f64| {
        let x = math::exp(mean_log + s * z);
        let mut v = math::normal_pdf(z) * math::exp(alpha * x);
        if power == 1 {
            v *= x;
        }
        v
    };
    quadrature::integrate(
        integrand,
        -40.0,
        40.0,
        Tolerance {
            abs: 0.0,
            rel: 1e-13,
            max_subdivisions: 4_000,
        },
    )
    .value
}

/// A Poisson draw with the given mean; zero for a non-positive mean.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(p) => {
            let k: f64 = p.sample(rng);
            k as u64
        }
        Err(_) => u64::MAX,
    }
}

/// A draw of `K ~ Poisson(mean)` conditioned on `K ≥ 1`; `mean` must be positive.
pub fn sample_poisson_positive<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean > 4.0 {
        // P(K = 0) < 2%: plain rejection
        loop {
            let k = sample_poisson(mean, rng);
            if k > 0 {
                return k;
            }
        }
    }
    let target = rng.random::<f64>() * -math::exp_m1(-mean);
    let mut p = mean * math::exp(-mean);
    let mut cum = p;
    let mut k = 1u64;
    while cum < target && p > 0.0 {
        k += 1;
        p *= mean / k as f64;
        cum += p;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_to_infinity;
    use crate::rng::RngStream;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn positive_poisson_law() {
        for &mean in &[1e-6, 0.3, 2.0, 9.0] {
            let mut rng = RngStream::new(21, 0);
            let n = 200_000;
            let mut ones = 0u32;
            let mut total = 0.0;
            for _ in 0..n {
                let k = sample_poisson_positive(mean, &mut rng);
                assert!(k >= 1);
                ones += u32::from(k == 1);
                total += k as f64;
            }
            let norm = -math::exp_m1(-mean);
            let p1 = mean * math::exp(-mean) / norm;
            let m = mean / norm;
            let se1 = math::sqrt(p1 * (1.0 - p1) / n as f64).max(1e-9);
            assert!(
                (ones as f64 / n as f64 - p1).abs() < 4.0 * se1,
                "mean {mean}"
            );
            assert!(
                (total / n as f64 - m).abs() < 4.0 * math::sqrt(mean.max(1e-6) / n as f64) + 1e-9
            );
        }
    }

    fn families() -> Vec<Distribution> {
        vec![
            Distribution::constant(2.5).unwrap(),
            Distribution::log_normal(0.1, 0.1).unwrap(),
            Distribution::exponential(1.0).unwrap(),
            Distribution::exponential(2.5).unwrap(),
            Distribution::gamma(2.0, 0.5).unwrap(),
            Distribution::gamma(0.7, 3.0).unwrap(),
            Distribution::discrete(vec![0.5, 1.5, 4.0], vec![0.2, 0.5, 0.3]).unwrap(),
        ]
    }

    // E X^α by integrating x^α against the density; independent of the closed forms.
    fn quadrature_moment(d: &Distribution, alpha: f64) -> f64 {
        match d {
            Distribution::Constant { value } => math::powf(*value, alpha),
            Distribution::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .map(|(v, p)| p * math::powf(*v, alpha))
                .sum(),
            Distribution::LogNormal { mean_log, var_log } => {
                // integrate in log space where the integrand is a smooth bump
                let s = math::sqrt(*var_log);
                quadrature::integrate(
                    |z| math::normal_pdf(z) * math::exp(alpha * (mean_log + s * z)),
                    -40.0,
                    40.0,
                    Tolerance {
                        abs: 0.0,
                        rel: 1e-13,
                        max_subdivisions: 4000,
                    },
                )
                .value
            }
            _ => {
                let f = |x: f64| math::powf(x, alpha) * d.density(x).unwrap();
                let split = d.mean();
                let tol = Tolerance {
                    abs: 0.0,
                    rel: 1e-13,
                    max_subdivisions: 4000,
                };
                quadrature::integrate(f, 0.0, split, tol).value
                    + integrate_to_infinity(f, split, tol).value
            }
        }
    }

    #[test]
    fn log_moment_agrees_with_quadrature() {
        for d in families() {
            for &alpha in &[-0.4, 0.5, 1.0, 2.0, 3.3] {
                let exact = math::exp(d.log_moment(alpha).unwrap());
                let quad = quadrature_moment(&d, alpha);
                assert_relative_eq!(exact, quad, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn cgf_agrees_with_quadrature() {
        let cases = [
            (Distribution::exponential(1.0).unwrap(), -1.3),
            (Distribution::exponential(1.0).unwrap(), 0.4),
            (Distribution::gamma(2.0, 0.5).unwrap(), 0.2),
            (Distribution::log_normal(0.0, 0.3).unwrap(), -0.8),
        ];
        for (d, alpha) in cases {
            let f = |x: f64| math::exp(alpha * x) * d.density(x).unwrap();
            let tol = Tolerance {
                abs: 0.0,
                rel: 1e-13,
                max_subdivisions: 4000,
            };
            let quad = quadrature::integrate(f, 0.0, 5.0, tol).value
                + integrate_to_infinity(f, 5.0, tol).value;
            assert_relative_eq!(math::exp(d.cgf(alpha)), quad, max_relative = 1e-8);
        }
    }

    #[test]
    fn normal_cgf_quadrature_oracle() {
        // cgf of log X for X lognormal is the normal cgf m α + σ² α² / 2
        let (m, v) = (0.1, 0.1);
        let x = Distribution::log_normal(m, v).unwrap();
        let n = Distribution::normal(m, v).unwrap();
        for &alpha in &[-2.0, -0.5, 0.7, 2.0] {
            let quad = quadrature::integrate(
                |z| math::exp(alpha * z) * n.density(z).unwrap(),
                -30.0,
                30.0,
                Tolerance::default(),
            )
            .value;
            assert_relative_eq!(n.cgf(alpha), math::ln(quad), epsilon = 1e-10);
            assert_relative_eq!(
                x.log_moment(alpha).unwrap(),
                m * alpha + v * alpha * alpha / 2.0
            );
        }
    }

    #[test]
    fn spot_values() {
        let c = Distribution::constant(3.0).unwrap();
        assert_eq!(c.sample(&mut RngStream::new(1, 0)), 3.0);
        assert_relative_eq!(c.log_moment(1.7).unwrap(), 1.7 * math::ln(3.0));
        assert_eq!(c.cgf(2.0), 6.0);
        let e = Distribution::exponential(1.0).unwrap();
        assert_relative_eq!(e.log_moment(2.0).unwrap(), math::ln(2.0), epsilon = 1e-14);
        assert_eq!(e.cgf(0.0), 0.0);
        assert_eq!(e.cgf(1.0), f64::INFINITY);
        assert_eq!(e.log_moment(-1.0).unwrap(), f64::INFINITY);
        assert_eq!(
            Distribution::gamma(2.0, 1.0)
                .unwrap()
                .log_moment(-2.5)
                .unwrap(),
            f64::INFINITY
        );
        assert_eq!(e.moment_index(), f64::INFINITY);
        assert_eq!(c.moment_index(), f64::INFINITY);
    }

    #[test]
    fn exponential_draws_are_positive_and_reproducible() {
        let e = Distribution::exponential(1.0).unwrap();
        let a = e.sample(&mut RngStream::new(99, 5));
        let b = e.sample(&mut RngStream::new(99, 5));
        assert!(a > 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(Distribution::exponential(0.0).is_err());
        assert!(Distribution::log_normal(0.0, -1.0).is_err());
        assert!(Distribution::gamma(1.0, f64::NAN).is_err());
        assert_eq!(
            Distribution::discrete(vec![1.0, 2.0], vec![0.5, 0.4]),
            Err(DistributionError::ProbabilitySum(0.9))
        );
        assert_eq!(
            Distribution::discrete(vec![1.0], vec![0.5, 0.5]),
            Err(DistributionError::ShapeMismatch)
        );
        assert!(Distribution::discrete(vec![1.0, 2.0], vec![0.5, 0.5 + 1e-13]).is_ok());
    }

    #[test]
    fn log_moment_needs_positive_support() {
        let d = Distribution::discrete(vec![-1.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(
            d.log_moment(1.0),
            Err(DistributionError::SupportNotPositive)
        );
        assert!(Distribution::normal(0.0, 1.0)
            .unwrap()
            .log_moment(1.0)
            .is_err());
        assert!(Distribution::constant(0.0)
            .unwrap()
            .log_moment(1.0)
            .is_err());
        // zero-probability atoms do not count
        let d = Distribution::discrete(vec![-1.0, 2.0], vec![0.0, 1.0]).unwrap();
        assert_relative_eq!(d.log_moment(1.0).unwrap(), math::ln(2.0));
    }

    #[test]
    fn discrete_sample_mean() {
        let d = Distribution::discrete(vec![0.5, 1.5], vec![0.5, 0.5]).unwrap();
        let mut rng = RngStream::new(2024, 0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean = {mean}");
    }

    #[test]
    fn sampling_means_within_four_standard_errors() {
        let n = 1_000_000;
        for (i, d) in families()
            .into_iter()
            .chain([Distribution::normal(-0.3, 2.0).unwrap()])
            .enumerate()
        {
            let mut rng = RngStream::new(77, i as u64);
            let mean = (0..n).map(|_| d.sample(&mut rng)).sum::<f64>() / n as f64;
            let se = math::sqrt(d.variance() / n as f64);
            assert!((mean - d.mean()).abs() <= 4.0 * se + 1e-15, "{d:?}: {mean}");
        }
    }

    #[test]
    fn sample_sum_matches_convolution_moments() {
        let n = 200_000;
        for (i, d) in families().into_iter().enumerate() {
            let mut rng = RngStream::new(5, i as u64);
            let k = 3;
            let draws: Vec<f64> = (0..n).map(|_| d.sample_sum(k, &mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let se = math::sqrt(k as f64 * d.variance() / n as f64);
            assert!((mean - 3.0 * d.mean()).abs() <= 4.0 * se + 1e-12, "{d:?}");
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for d in families() {
            for &alpha in &[-0.3, 0.8, 2.0] {
                let fd = (d.log_moment(alpha + h).unwrap() - d.log_moment(alpha - h).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(d.log_moment_derivative(alpha).unwrap(), fd, epsilon = 1e-7);
            }
            for &alpha in &[-0.9, -0.2, 0.1] {
                if d.cgf(alpha + h).is_finite() {
                    let fd = (d.cgf(alpha + h) - d.cgf(alpha - h)) / (2.0 * h);
                    assert_relative_eq!(d.cgf_derivative(alpha), fd, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn survival_matches_empirical() {
        let n = 200_000;
        for (i, d) in families().into_iter().enumerate() {
            let mut rng = RngStream::new(6, i as u64);
            let x = d.mean();
            let hits = (0..n).filter(|_| d.sample(&mut rng) > x).count() as f64 / n as f64;
            let p = d.survival(x);
            assert!((hits - p).abs() < 5.0 * math::sqrt(p * (1.0 - p) / n as f64) + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn cgf_vanishes_at_origin_and_is_convex(
            idx in 0usize..7,
            a1 in -0.9f64..0.45,
            a2 in -0.9f64..0.45,
            t in 0.01f64..0.99,
        ) {
            let d = &families()[idx];
            prop_assert_eq!(d.cgf(0.0), 0.0);
            prop_assert_eq!(d.log_moment(0.0).unwrap(), 0.0);
            let (f1, f2) = (d.cgf(a1), d.cgf(a2));
            if f1.is_finite() && f2.is_finite() {
                let mid = d.cgf(t * a1 + (1.0 - t) * a2);
                prop_assert!(mid <= t * f1 + (1.0 - t) * f2 + 1e-10);
            }
            let (g1, g2) = (d.log_moment(a1 * 4.0).unwrap(), d.log_moment(a2 * 4.0).unwrap());
            if g1.is_finite() && g2.is_finite() {
                let mid = d.log_moment(4.0 * (t * a1 + (1.0 - t) * a2)).unwrap();
                prop_assert!(mid <= t * g1 + (1.0 - t) * g2 + 1e-10);
            }
        }
    }
}
