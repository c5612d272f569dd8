//! Reporting delays for a run-off book: how the claim exposure of past years
//! turns into the mixing sequence `ξ_n` of future years.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{Distribution, DistributionError};
use crate::math;
use crate::quadrature::{self, Tolerance};

/// Weights are cached up to this delay (in years) or until they underflow.
pub const MAX_CACHED_WEIGHTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunoffError {
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("exposure levels must be positive with the most recent year equal to 1")]
    BadExposure,
    #[error("structure variable must be positive with mean 1, got mean {0}")]
    BadStructure(f64),
    #[error("tabulated delay CDF must start at (0, 0), be non-decreasing and reach 1")]
    BadDelayTable,
    #[error("delay tail needs decay > 0 and prefactor c > 0")]
    BadTail,
}

/// `f(x) = c · x^γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegVaryingFactor {
    pub c: f64,
    pub gamma: f64,
}

impl RegVaryingFactor {
    pub const ONE: Self = Self { c: 1.0, gamma: 0.0 };

    pub fn eval(&self, x: f64) -> f64 {
        if self.gamma == 0.0 {
            self.c
        } else {
            self.c * math::powf(x, self.gamma)
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self {
            c: self.c * k,
            gamma: self.gamma,
        }
    }
}

/// Law of a single reporting delay (in years).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DelayLaw {
    Gamma {
        shape: f64,
        rate: f64,
    },
    /// Piecewise-linear CDF through `(x, G(x))` knots.
    Tabulated {
        x: Vec<f64>,
        cdf: Vec<f64>,
    },
}

impl DelayLaw {
    pub fn validate(&self) -> Result<(), RunoffError> {
        match self {
            Self::Gamma { shape, rate } => {
                Distribution::gamma(*shape, *rate)?;
            }
            Self::Tabulated { x, cdf } => {
                let ok = x.len() == cdf.len()
                    && x.len() >= 2
                    && x[0] == 0.0
                    && cdf[0] == 0.0
                    && x.windows(2).all(|w| w[1] > w[0])
                    && cdf.windows(2).all(|w| w[1] >= w[0])
                    && (cdf[cdf.len() - 1] - 1.0).abs() <= 1e-12
                    && x.iter().chain(cdf.iter()).all(|v| v.is_finite());
                if !ok {
                    return Err(RunoffError::BadDelayTable);
                }
            }
        }
        Ok(())
    }

    /// `1 − G(x)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self {
            Self::Gamma { shape, rate } => math::gamma_q(*shape, rate * t),
            Self::Tabulated { x, cdf } => {
                let last = x.len() - 1;
                if t >= x[last] {
                    return 0.0;
                }
                let j = x.partition_point(|&v| v <= t);
                let (x0, x1) = (x[j - 1], x[j]);
                let w = (t - x0) / (x1 - x0);
                // interpolate the survival directly to keep small tails exact
                (1.0 - cdf[j - 1]) * (1.0 - w) + (1.0 - cdf[j]) * w
            }
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        1.0 - self.survival(t)
    }

    /// Exponential tail `1 − G(x) ~ h(x) e^{−φx}` where one is known in closed form.
    ///
    /// For Gamma(a, φ), `Q(a, φx) ~ (φx)^{a−1} e^{−φx} / Γ(a)`, so
    /// `h(x) = φ^{a−1} x^{a−1} / Γ(a)`.
    pub fn natural_tail(&self) -> Option<DelayTail> {
        match self {
            Self::Gamma { shape, rate } => Some(DelayTail {
                decay: *rate,
                prefactor: RegVaryingFactor {
                    c: math::powf(*rate, shape - 1.0) / math::gamma(*shape),
                    gamma: shape - 1.0,
                },
            }),
            Self::Tabulated { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayTail {
    /// `φ`.
    pub decay: f64,
    /// `h`.
    pub prefactor: RegVaryingFactor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub law: DelayLaw,
    /// Overrides the tail derived from `law`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<DelayTail>,
}

impl DelayModel {
    pub fn new(law: DelayLaw) -> Result<Self, RunoffError> {
        let m = Self { law, tail: None };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), RunoffError> {
        self.law.validate()?;
        if let Some(t) = &self.tail {
            if !(t.decay > 0.0 && t.prefactor.c > 0.0 && t.prefactor.gamma.is_finite()) {
                return Err(RunoffError::BadTail);
            }
        }
        Ok(())
    }

    pub fn tail(&self) -> Option<DelayTail> {
        self.tail.or_else(|| self.law.natural_tail())
    }
}

/// `b_k = ∫_0^1 (G(k+1−s) − G(k−s)) ds` for `k = 1..=k_max` (index 0 holds `b_1`).
///
/// Written with survival functions so deep-tail weights keep full relative precision.
pub fn delay_weights(delay: &DelayModel, k_max: usize) -> Vec<f64> {
    (1..=k_max).map(|k| delay_weight(&delay.law, k)).collect()
}

fn delay_weight(law: &DelayLaw, k: usize) -> f64 {
    let tol = Tolerance {
        abs: 1e-300,
        rel: 1e-12,
        max_subdivisions: 200,
    };
    let k = k as f64;
    quadrature::integrate(
        |s| law.survival(k - s) - law.survival(k + 1.0 - s),
        0.0,
        1.0,
        tol,
    )
    .value
    .max(0.0)
}

/// User-facing form of [`RunoffExposure`]; weights are rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExposureParams {
    /// `π_{−d}, …, π_{−1}, π_0`, oldest year first; the last entry must be 1.
    pub levels: Vec<f64>,
    /// Law of the structure variables `q_m` of past years.
    pub structure: Distribution,
    pub delay: DelayModel,
}

/// Past exposure levels, structure law and delay model of a run-off book,
/// with the delay weights cached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExposureParams", into = "ExposureParams")]
pub struct RunoffExposure {
    params: ExposureParams,
    weights: Vec<f64>,
}

impl TryFrom<ExposureParams> for RunoffExposure {
    type Error = RunoffError;

    fn try_from(params: ExposureParams) -> Result<Self, RunoffError> {
        Self::new(params.levels, params.structure, params.delay)
    }
}

impl From<RunoffExposure> for ExposureParams {
    fn from(e: RunoffExposure) -> Self {
        e.params
    }
}

impl RunoffExposure {
    pub fn new(
        levels: Vec<f64>,
        structure: Distribution,
        delay: DelayModel,
    ) -> Result<Self, RunoffError> {
        if levels.is_empty()
            || levels.last() != Some(&1.0)
            || levels.iter().any(|p| !(p.is_finite() && *p > 0.0))
        {
            return Err(RunoffError::BadExposure);
        }
        structure.validate()?;
        let mean = structure.mean();
        if !structure.is_positive() || (mean - 1.0).abs() > 1e-9 {
            return Err(RunoffError::BadStructure(mean));
        }
        delay.validate()?;
        let mut weights = Vec::new();
        for k in 1..=MAX_CACHED_WEIGHTS {
            let b = delay_weight(&delay.law, k);
            if b == 0.0 && delay.law.survival(k as f64) == 0.0 {
                break;
            }
            weights.push(b);
        }
        Ok(Self {
            params: ExposureParams {
                levels,
                structure,
                delay,
            },
            weights,
        })
    }

    pub fn params(&self) -> &ExposureParams {
        &self.params
    }

    /// `d`, the number of past years before year 0.
    pub fn past_years(&self) -> usize {
        self.params.levels.len() - 1
    }

    pub fn delay(&self) -> &DelayModel {
        &self.params.delay
    }

    /// Cached `b_k`; zero beyond the cache.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.weights.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn cached_weights(&self) -> &[f64] {
        &self.weights
    }

    /// One realisation of `(q_{−d}, …, q_0)`.
    pub fn sample_structure<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.params.levels.len())
            .map(|_| self.params.structure.sample(rng))
            .collect()
    }

    /// `ξ_n = Σ_m π_m b_{n−m} q_m` for the drawn past structure values.
    pub fn xi(&self, n: usize, structure: &[f64]) -> f64 {
        let d = self.past_years();
        self.params
            .levels
            .iter()
            .zip(structure)
            .enumerate()
            .map(|(j, (pi, q))| pi * q * self.weight(n + d - j))
            .sum()
    }

    /// `E ξ_n = Σ_m π_m b_{n−m}`.
    pub fn expected_xi(&self, n: usize) -> f64 {
        let ones: Vec<f64> = alloc::vec![1.0; self.params.levels.len()];
        self.xi(n, &ones)
    }

    /// `(e^φ − 1)(1 − e^{−φ}) Σ_m π_m e^{mφ} / φ`.
    pub fn report_rate_constant(&self) -> Option<f64> {
        let phi = self.delay().tail()?.decay;
        let d = self.past_years() as f64;
        let weighted: f64 = self
            .params
            .levels
            .iter()
            .enumerate()
            .map(|(j, pi)| pi * math::exp((j as f64 - d) * phi))
            .sum();
        Some(math::exp_m1(phi) * -math::exp_m1(-phi) * weighted / phi)
    }

    /// Tail approximation of `P(K_n = 1)`: `λ · const · h(n) e^{−nφ}`.
    pub fn asymptotic_report_rate(&self, lambda: f64, n: usize) -> Option<f64> {
        let tail = self.delay().tail()?;
        let n = n as f64;
        Some(
            lambda
                * self.report_rate_constant()?
                * tail.prefactor.eval(n)
                * math::exp(-n * tail.decay),
        )
    }

    /// `Λ_ξ(1) = −φ` when the delay has an exponential tail.
    pub fn log_mixing_rate(&self) -> Option<f64> {
        self.delay().tail().map(|t| -t.decay)
    }

    /// The regularly varying `f` with `P(K_n = 1) ~ λ f(n) e^{nΛ_ξ(1)}`.
    pub fn count_prefactor(&self) -> Option<RegVaryingFactor> {
        let tail = self.delay().tail()?;
        Some(tail.prefactor.scaled(self.report_rate_constant()?))
    }

    /// `P(K_n = 1) = E[λξ_n e^{−λξ_n}]` over the structure law.
    ///
    /// Exact for point-mass and discrete structure laws (by enumeration) and for a
    /// single past year with a continuous law (by quadrature); `None` otherwise.
    pub fn single_report_probability(&self, lambda: f64, n: usize) -> Option<f64> {
        let d = self.past_years();
        let g = |x: f64| x * math::exp(-x);
        match &self.params.structure {
            Distribution::Constant { value } => {
                Some(g(lambda * self.xi(n, &alloc::vec![*value; d + 1])))
            }
            Distribution::Discrete { values, probs } => {
                let atoms: Vec<(f64, f64)> = values
                    .iter()
                    .copied()
                    .zip(probs.iter().copied())
                    .filter(|a| a.1 > 0.0)
                    .collect();
                let combos = (atoms.len() as f64).powi(d as i32 + 1);
                if combos > 1e6 {
                    return None;
                }
                let mut idx = alloc::vec![0usize; d + 1];
                let mut q = alloc::vec![0.0; d + 1];
                let mut total = 0.0;
                loop {
                    let mut w = 1.0;
                    for (slot, &i) in idx.iter().enumerate() {
                        q[slot] = atoms[i].0;
                        w *= atoms[i].1;
                    }
                    total += w * g(lambda * self.xi(n, &q));
                    // odometer increment
                    let mut pos = 0;
                    loop {
                        if pos == idx.len() {
                            return Some(total);
                        }
                        idx[pos] += 1;
                        if idx[pos] < atoms.len() {
                            break;
                        }
                        idx[pos] = 0;
                        pos += 1;
                    }
                }
            }
            law if d == 0 => {
                let scale = lambda * self.weight(n);
                law.density(1.0)?;
                let r = quadrature::integrate_to_infinity(
                    |x| law.density(x).unwrap_or(0.0) * g(scale * x),
                    0.0,
                    Tolerance {
                        abs: 1e-300,
                        rel: 1e-11,
                        max_subdivisions: 2_000,
                    },
                );
                Some(r.value)
            }
            _ => None,
        }
    }
}
