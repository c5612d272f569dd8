//! The yearly capital process and its discounted form.
//!
//! With `U_0 = u`, dividing `U_n` by `(1+r_1)⋯(1+r_n)` gives `u − Y_n`, so ruin at
//! year `n` is the same event as `Y_n > u`. Both views are carried in [`PathState`].

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{sample_poisson, Distribution, DistributionError};
use crate::lundberg::CgfExpr;
use crate::math;
use crate::runoff::{RegVaryingFactor, RunoffError, RunoffExposure};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name}: {source}")]
    Law {
        name: &'static str,
        source: DistributionError,
    },
    #[error("{0} must be a law on (0, ∞)")]
    NotPositive(&'static str),
    #[error("{name} must be finite and > 0, got {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("structure variable q must have mean 1, got {0}")]
    StructureMean(f64),
    #[error("joint economy law needs matching non-empty lists of positive factors")]
    JointShape,
    #[error(transparent)]
    Runoff(#[from] RunoffError),
}

fn positive_law(name: &'static str, d: &Distribution) -> Result<(), ModelError> {
    d.validate()
        .map_err(|source| ModelError::Law { name, source })?;
    if d.is_positive() {
        Ok(())
    } else {
        Err(ModelError::NotPositive(name))
    }
}

fn positive_param(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::Parameter { name, value })
    }
}

/// Premium and claim timing within a year.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionRule {
    /// `U_n = (1+r_n)(U_{n−1} + P_n − X_n)`.
    #[default]
    ClaimsStartOfYear,
    /// `U_n = (1+r_n)(U_{n−1} + P_n) − X_n`.
    ClaimsEndOfYear,
}

/// Yearly inflation and return factors `(1+i, 1+r)`, i.i.d. over years.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Economy {
    /// `1+i` and `1+r` independent with the given laws.
    Independent {
        inflation: Distribution,
        returns: Distribution,
    },
    /// Finitely many joint scenarios `(1+i, 1+r)` with probabilities.
    JointDiscrete {
        inflation: Vec<f64>,
        returns: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl Economy {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Self::Independent { inflation, returns } => {
                positive_law("inflation factor 1+i", inflation)?;
                positive_law("return factor 1+r", returns)
            }
            Self::JointDiscrete {
                inflation,
                returns,
                probs,
            } => {
                if inflation.len() != returns.len()
                    || inflation.len() != probs.len()
                    || inflation.is_empty()
                    || inflation
                        .iter()
                        .chain(returns)
                        .any(|v| !(v.is_finite() && *v > 0.0))
                {
                    return Err(ModelError::JointShape);
                }
                Distribution::discrete(inflation.clone(), probs.clone())
                    .map_err(|source| ModelError::Law {
                        name: "joint economy",
                        source,
                    })
                    .map(|_| ())
            }
        }
    }

    /// One draw of `(1+i, 1+r)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            Self::Independent { inflation, returns } => {
                let i = inflation.sample(rng);
                (i, returns.sample(rng))
            }
            Self::JointDiscrete {
                inflation,
                returns,
                probs,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let last = probs.len() - 1;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc || k == last {
                        return (inflation[k], returns[k]);
                    }
                }
                unreachable!()
            }
        }
    }

    /// Marginal law of `1+i`.
    pub fn inflation_law(&self) -> Distribution {
        match self {
            Self::Independent { inflation, .. } => inflation.clone(),
            Self::JointDiscrete {
                inflation, probs, ..
            } => Distribution::Discrete {
                values: inflation.clone(),
                probs: probs.clone(),
            },
        }
    }

    /// `Λ_A(α) = log E A^α` with `A = (1+i)/(1+r)`.
    pub fn discount_cgf(&self) -> CgfExpr {
        match self {
            Self::Independent { inflation, returns } => CgfExpr::new()
                .log_moment(inflation.clone(), 1.0)
                .and_then(|e| e.log_moment(returns.clone(), -1.0))
                .expect("validated economy"),
            Self::JointDiscrete {
                inflation,
                returns,
                probs,
            } => {
                let ratios = inflation.iter().zip(returns).map(|(i, r)| i / r).collect();
                CgfExpr::new()
                    .log_moment(
                        Distribution::Discrete {
                            values: ratios,
                            probs: probs.clone(),
                        },
                        1.0,
                    )
                    .expect("validated economy")
            }
        }
    }

    /// Whether `log A` has an absolutely continuous component.
    pub fn discount_has_density(&self) -> bool {
        match self {
            Self::Independent { inflation, returns } => {
                inflation.is_continuous() || returns.is_continuous()
            }
            Self::JointDiscrete { .. } => false,
        }
    }

    /// `(m_i, v_i, m_r, v_r)` when `log(1+i)` and `log(1+r)` are independent
    /// Gaussians (point masses count as zero variance).
    pub fn gaussian_logs(&self) -> Option<(f64, f64, f64, f64)> {
        fn parts(d: &Distribution) -> Option<(f64, f64)> {
            match d {
                Distribution::Constant { value } => Some((math::ln(*value), 0.0)),
                Distribution::LogNormal { mean_log, var_log } => Some((*mean_log, *var_log)),
                _ => None,
            }
        }
        match self {
            Self::Independent { inflation, returns } => {
                let (mi, vi) = parts(inflation)?;
                let (mr, vr) = parts(returns)?;
                Some((mi, vi, mr, vr))
            }
            Self::JointDiscrete { .. } => None,
        }
    }
}

/// Increasing volumes: `ξ_n = (1+g_1)⋯(1+g_n) q_n` and loaded premiums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthModel {
    /// Basic claim intensity `λ`.
    pub lambda: f64,
    /// Safety loading `s`.
    pub loading: f64,
    /// Law of `1+g`.
    pub growth: Distribution,
    /// Law of `q`, mean one.
    pub structure: Distribution,
    pub economy: Economy,
    /// Inflation-free claim size `Z`.
    pub claim: Distribution,
    #[serde(default)]
    pub rule: TransitionRule,
}

impl GrowthModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        positive_param("lambda", self.lambda)?;
        positive_param("loading", self.loading)?;
        positive_law("growth factor 1+g", &self.growth)?;
        positive_law("structure q", &self.structure)?;
        let mean = self.structure.mean();
        if (mean - 1.0).abs() > 1e-9 {
            return Err(ModelError::StructureMean(mean));
        }
        positive_law("claim size Z", &self.claim)?;
        self.economy.validate()
    }

    /// `Λ_1 = Λ_A + Λ_g`.
    pub fn rate_cgf(&self) -> CgfExpr {
        self.economy
            .discount_cgf()
            .log_moment(self.growth.clone(), 1.0)
            .expect("validated growth law")
    }

    /// `P_n / I_n = (1+s) λ m_Z G_n` for the growth product `G_n`.
    pub fn deflated_premium(&self, growth_product: f64) -> f64 {
        (1.0 + self.loading) * self.lambda * self.claim.mean() * growth_product
    }
}

/// Mixing sequence of a run-off book.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mixing {
    /// `ξ_n = e^{−nφ}`.
    DeterministicExp { decay: f64 },
    /// `ξ_n` built from past exposure and reporting delays.
    ReportingDelay { exposure: RunoffExposure },
}

/// Decreasing volumes: no premiums, claim intensity `λξ_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunoffModel {
    pub lambda: f64,
    pub economy: Economy,
    pub claim: Distribution,
    pub mixing: Mixing,
    #[serde(default)]
    pub rule: TransitionRule,
}

impl RunoffModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        positive_param("lambda", self.lambda)?;
        positive_law("claim size Z", &self.claim)?;
        self.economy.validate()?;
        match &self.mixing {
            Mixing::DeterministicExp { decay } => positive_param("decay", *decay),
            Mixing::ReportingDelay { .. } => Ok(()),
        }
    }

    /// `Λ_ξ(1) = lim n^{−1} log E ξ_n`, when known.
    pub fn log_mixing_rate(&self) -> Option<f64> {
        match &self.mixing {
            Mixing::DeterministicExp { decay } => Some(-decay),
            Mixing::ReportingDelay { exposure } => exposure.log_mixing_rate(),
        }
    }

    /// `f` in `P(K_n = 1) ~ λ f(n) e^{nΛ_ξ(1)}`.
    pub fn count_prefactor(&self) -> Option<RegVaryingFactor> {
        match &self.mixing {
            Mixing::DeterministicExp { .. } => Some(RegVaryingFactor::ONE),
            Mixing::ReportingDelay { exposure } => exposure.count_prefactor(),
        }
    }

    /// `Λ_2 = Λ_A + Λ_ξ(1)`.
    pub fn rate_cgf(&self) -> Option<CgfExpr> {
        Some(
            self.economy
                .discount_cgf()
                .constant(self.log_mixing_rate()?),
        )
    }

    /// `ξ_n` given the per-path structure draws (ignored for deterministic mixing).
    pub fn xi(&self, n: usize, structure: &[f64]) -> f64 {
        match &self.mixing {
            Mixing::DeterministicExp { decay } => math::exp(-(n as f64) * decay),
            Mixing::ReportingDelay { exposure } => exposure.xi(n, structure),
        }
    }

    /// `E ξ_n`.
    pub fn expected_xi(&self, n: usize) -> f64 {
        match &self.mixing {
            Mixing::DeterministicExp { decay } => math::exp(-(n as f64) * decay),
            Mixing::ReportingDelay { exposure } => exposure.expected_xi(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum ModelSpec {
    Growth(GrowthModel),
    Runoff(RunoffModel),
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Self::Growth(g) => g.validate(),
            Self::Runoff(r) => r.validate(),
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Self::Growth(g) => g.lambda,
            Self::Runoff(r) => r.lambda,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        let mut m = self.clone();
        match &mut m {
            Self::Growth(g) => g.lambda = lambda,
            Self::Runoff(r) => r.lambda = lambda,
        }
        m
    }

    pub fn economy(&self) -> &Economy {
        match self {
            Self::Growth(g) => &g.economy,
            Self::Runoff(r) => &r.economy,
        }
    }

    pub fn claim(&self) -> &Distribution {
        match self {
            Self::Growth(g) => &g.claim,
            Self::Runoff(r) => &r.claim,
        }
    }

    pub fn rule(&self) -> TransitionRule {
        match self {
            Self::Growth(g) => g.rule,
            Self::Runoff(r) => r.rule,
        }
    }

    /// A fresh path at capital `u`. Draws the past structure variables of a
    /// reporting-delay book, which stay fixed along the path.
    pub fn start_path<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> PathState {
        let structure = match self {
            Self::Runoff(RunoffModel {
                mixing: Mixing::ReportingDelay { exposure },
                ..
            }) => exposure.sample_structure(rng),
            _ => Vec::new(),
        };
        PathState {
            year: 0,
            initial_capital: u,
            capital: u,
            inflation_product: 1.0,
            discount_product: 1.0,
            growth_product: 1.0,
            discounted_claims: 0.0,
            discounted_max: 0.0,
            ruin_year: None,
            passage_year: None,
            structure,
        }
    }

    /// Advances one year. Draw order: `(1+i, 1+r)`, then `(1+g, q)` in the growth
    /// regime, then the claim count, then the claim total.
    pub fn simulate_year<R: Rng + ?Sized>(&self, s: &mut PathState, rng: &mut R) -> YearOutcome {
        let n = s.year + 1;
        let (inflation, returns) = self.economy().sample(rng);
        let (growth, q, xi, deflated_premium) = match self {
            Self::Growth(g) => {
                let growth = g.growth.sample(rng);
                let q = g.structure.sample(rng);
                let gp = s.growth_product * growth;
                (growth, q, gp * q, g.deflated_premium(gp))
            }
            Self::Runoff(r) => (1.0, 1.0, r.xi(n as usize, &s.structure), 0.0),
        };
        let claims = sample_claim_count(xi, self.lambda(), rng);
        let v = self.claim().sample_sum(claims, rng);

        let inflation_product = s.inflation_product * inflation;
        let x = inflation_product * v;
        let premium = inflation_product * deflated_premium;
        let a_before = s.discount_product;
        let a_after = a_before * inflation / returns;
        let (capital, increment) = match self.rule() {
            TransitionRule::ClaimsStartOfYear => (
                returns * (s.capital + premium - x),
                a_before * inflation * (v - deflated_premium),
            ),
            TransitionRule::ClaimsEndOfYear => (
                returns * (s.capital + premium) - x,
                a_after * v - a_before * inflation * deflated_premium,
            ),
        };

        s.year = n;
        s.capital = capital;
        s.inflation_product = inflation_product;
        s.discount_product = a_after;
        s.growth_product *= growth;
        s.discounted_claims += increment;
        s.discounted_max = s.discounted_max.max(s.discounted_claims);
        if s.ruin_year.is_none() && capital < 0.0 {
            s.ruin_year = Some(n);
        }
        if s.passage_year.is_none() && s.discounted_claims > s.initial_capital {
            s.passage_year = Some(n);
        }
        YearOutcome {
            year: n,
            claims,
            inflation_free_total: v,
            total: x,
            premium,
            inflation,
            returns,
            growth,
            structure: q,
            xi,
        }
    }

    /// Running maximum of `Y_n` over `1..=horizon` and the first `n` with `Y_n > u`.
    pub fn discounted_supremum_path<R: Rng + ?Sized>(
        &self,
        u: f64,
        horizon: u32,
        rng: &mut R,
    ) -> (f64, Option<u32>) {
        let mut s = self.start_path(u, rng);
        for _ in 0..horizon {
            self.simulate_year(&mut s, rng);
        }
        (s.discounted_max, s.passage_year)
    }
}

/// State of one capital path at the end of year `year`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathState {
    pub year: u32,
    pub initial_capital: f64,
    /// `U_n`.
    pub capital: f64,
    /// `(1+i_1)⋯(1+i_n)`.
    pub inflation_product: f64,
    /// `A_1⋯A_n`.
    pub discount_product: f64,
    /// `(1+g_1)⋯(1+g_n)`; stays 1 in run-off.
    pub growth_product: f64,
    /// `Y_n`.
    pub discounted_claims: f64,
    /// `max_{k≤n} Y_k` (0 before the first year).
    pub discounted_max: f64,
    /// First `n` with `U_n < 0`.
    pub ruin_year: Option<u32>,
    /// First `n` with `Y_n > u`.
    pub passage_year: Option<u32>,
    /// Past structure draws `q_{−d..0}` of a reporting-delay book.
    pub structure: Vec<f64>,
}

impl PathState {
    pub fn ruined(&self) -> bool {
        self.ruin_year.is_some()
    }

    /// `u − Y_n`, the capital in time-0 money.
    pub fn headroom(&self) -> f64 {
        self.initial_capital - self.discounted_claims
    }
}

/// What happened in one simulated year.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YearOutcome {
    pub year: u32,
    /// `K_n`.
    pub claims: u64,
    /// `V_n`.
    pub inflation_free_total: f64,
    /// `X_n`.
    pub total: f64,
    /// `P_n`.
    pub premium: f64,
    /// `1+i_n`.
    pub inflation: f64,
    /// `1+r_n`.
    pub returns: f64,
    /// `1+g_n` (1 in run-off).
    pub growth: f64,
    /// `q_n` (1 in run-off).
    pub structure: f64,
    pub xi: f64,
}

/// `K ~ Poisson(λξ)`.
pub fn sample_claim_count<R: Rng + ?Sized>(xi: f64, lambda: f64, rng: &mut R) -> u64 {
    sample_poisson(lambda * xi, rng)
}

/// The worked run-off example: `log(1+r) ~ N(0.1, 0.1)`, `log(1+i) = 0.05`,
/// `ξ_n = e^{−0.1 n}` and unit-mean exponential claims.
pub fn reference_runoff(lambda: f64) -> RunoffModel {
    RunoffModel {
        lambda,
        economy: Economy::Independent {
            inflation: Distribution::Constant {
                value: math::exp(0.05),
            },
            returns: Distribution::LogNormal {
                mean_log: 0.1,
                var_log: 0.1,
            },
        },
        claim: Distribution::Exponential { mean: 1.0 },
        mixing: Mixing::DeterministicExp { decay: 0.1 },
        rule: TransitionRule::ClaimsStartOfYear,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::runoff::{DelayLaw, DelayModel};
    use alloc::vec;
    use approx::assert_relative_eq;

    fn growth_example() -> GrowthModel {
        GrowthModel {
            lambda: 5.0,
            loading: 0.2,
            growth: Distribution::log_normal(0.0, 0.04).unwrap(),
            structure: Distribution::gamma(4.0, 4.0).unwrap(),
            economy: Economy::Independent {
                inflation: Distribution::constant(math::exp(0.02)).unwrap(),
                returns: Distribution::log_normal(0.32, 0.36).unwrap(),
            },
            claim: Distribution::exponential(1.0).unwrap(),
            rule: TransitionRule::ClaimsStartOfYear,
        }
    }

    fn delay_runoff() -> RunoffModel {
        let exposure = RunoffExposure::new(
            vec![0.6, 0.9, 1.0],
            Distribution::gamma(2.0, 2.0).unwrap(),
            DelayModel::new(DelayLaw::Gamma {
                shape: 2.0,
                rate: 0.3,
            })
            .unwrap(),
        )
        .unwrap();
        RunoffModel {
            lambda: 3.0,
            mixing: Mixing::ReportingDelay { exposure },
            ..reference_runoff(3.0)
        }
    }

    #[test]
    fn identity_year() {
        let m = ModelSpec::Runoff(RunoffModel {
            lambda: 1e-300,
            economy: Economy::Independent {
                inflation: Distribution::constant(1.0).unwrap(),
                returns: Distribution::constant(1.0).unwrap(),
            },
            ..reference_runoff(1.0)
        });
        let mut rng = RngStream::new(1, 0);
        let mut s = m.start_path(7.0, &mut rng);
        let out = m.simulate_year(&mut s, &mut rng);
        assert_eq!(out.claims, 0);
        assert_eq!(s.capital, 7.0);
        assert!(!s.ruined());
    }

    #[test]
    fn forced_ruin() {
        let u = 3.0;
        let m = ModelSpec::Runoff(RunoffModel {
            lambda: 1e6,
            economy: Economy::Independent {
                inflation: Distribution::constant(1.0).unwrap(),
                returns: Distribution::constant(1.0).unwrap(),
            },
            claim: Distribution::constant(u + 1.0).unwrap(),
            mixing: Mixing::DeterministicExp { decay: 1e-9 },
            rule: TransitionRule::ClaimsStartOfYear,
        });
        let mut rng = RngStream::new(2, 0);
        let mut s = m.start_path(u, &mut rng);
        m.simulate_year(&mut s, &mut rng);
        assert_eq!(s.ruin_year, Some(1));
        assert_eq!(s.passage_year, Some(1));
    }

    #[test]
    fn one_year_matches_hand_recomputation() {
        let m = ModelSpec::Runoff(reference_runoff(50.0));
        let u = 10.0;
        let mut rng = RngStream::new(3, 7);
        let mut s = m.start_path(u, &mut rng);
        let out = m.simulate_year(&mut s, &mut rng);

        // replay the same stream by hand in the documented order
        use rand_distr::{Distribution as _, Gamma, LogNormal, Poisson};
        let mut rng = RngStream::new(3, 7);
        let r = LogNormal::new(0.1, math::sqrt(0.1))
            .unwrap()
            .sample(&mut rng);
        let k: f64 = Poisson::new(50.0 * math::exp(-0.1))
            .unwrap()
            .sample(&mut rng);
        let v = if k > 0.0 {
            Gamma::new(k, 1.0).unwrap().sample(&mut rng)
        } else {
            0.0
        };
        let x = math::exp(0.05) * v;
        assert_eq!(out.claims, k as u64);
        assert_eq!(out.returns, r);
        assert_relative_eq!(s.capital, r * (u - x), max_relative = 1e-15);
    }

    fn check_pathwise_agreement(m: &ModelSpec, u: f64, horizon: u32, seed: u64) -> usize {
        let mut ruins = 0;
        for j in 0..10_000u64 {
            let mut rng = RngStream::new(seed, j);
            let mut s = m.start_path(u, &mut rng);
            for _ in 0..horizon {
                m.simulate_year(&mut s, &mut rng);
                if s.ruined() {
                    break;
                }
            }
            assert_eq!(s.ruin_year, s.passage_year, "path {j}");
            if s.ruined() {
                ruins += 1;
                // U_n = (1+r_1)⋯(1+r_n)(u − Y_n): same sign
                assert!(s.headroom() < 0.0);
            }
        }
        ruins
    }

    #[test]
    fn pathwise_ruin_definitions_agree() {
        let runoff = ModelSpec::Runoff(reference_runoff(2.0));
        assert!(check_pathwise_agreement(&runoff, 3.0, 150, 11) > 100);
        let late = ModelSpec::Runoff(RunoffModel {
            rule: TransitionRule::ClaimsEndOfYear,
            ..reference_runoff(2.0)
        });
        assert!(check_pathwise_agreement(&late, 3.0, 150, 12) > 100);
        let delays = ModelSpec::Runoff(delay_runoff());
        assert!(check_pathwise_agreement(&delays, 2.0, 150, 13) > 100);
        let growth = ModelSpec::Growth(growth_example());
        assert!(check_pathwise_agreement(&growth, 3.0, 150, 14) > 100);
        let growth_late = ModelSpec::Growth(GrowthModel {
            rule: TransitionRule::ClaimsEndOfYear,
            ..growth_example()
        });
        assert!(check_pathwise_agreement(&growth_late, 3.0, 150, 15) > 100);
    }

    #[test]
    fn no_claims_no_supremum() {
        let m = ModelSpec::Runoff(RunoffModel {
            lambda: 1e-300,
            ..reference_runoff(1.0)
        });
        let mut rng = RngStream::new(4, 0);
        assert_eq!(m.discounted_supremum_path(5.0, 200, &mut rng), (0.0, None));
    }

    #[test]
    fn growth_without_excess_claims_never_passes() {
        // q ≡ 1 < 1+s, constant Z and a degenerate economy: with λ so large the
        // count concentrates, claims never exceed the loaded premium
        let m = ModelSpec::Growth(GrowthModel {
            lambda: 1e6,
            loading: 0.2,
            growth: Distribution::constant(1.01).unwrap(),
            structure: Distribution::constant(1.0).unwrap(),
            economy: Economy::Independent {
                inflation: Distribution::constant(1.0).unwrap(),
                returns: Distribution::constant(1.05).unwrap(),
            },
            claim: Distribution::constant(1.0).unwrap(),
            rule: TransitionRule::ClaimsStartOfYear,
        });
        let mut rng = RngStream::new(5, 0);
        let mut s = m.start_path(1.0, &mut rng);
        let mut last = 0.0;
        for _ in 0..100 {
            m.simulate_year(&mut s, &mut rng);
            assert!(s.discounted_claims < last);
            last = s.discounted_claims;
        }
        assert_eq!(s.passage_year, None);
    }

    #[test]
    fn poisson_total_variation() {
        let mut rng = RngStream::new(6, 0);
        let n = 1_000_000;
        let mean = 2.0;
        let mut counts = vec![0u32; 40];
        for _ in 0..n {
            let k = sample_claim_count(1.0, mean, &mut rng) as usize;
            counts[k.min(39)] += 1;
        }
        let mut tv = 0.0;
        let mut p = math::exp(-mean);
        for (k, &c) in counts.iter().enumerate() {
            if k > 0 {
                p *= mean / k as f64;
            }
            tv += (c as f64 / n as f64 - p).abs();
        }
        assert!(0.5 * tv < 0.003, "tv = {tv}");
        let total: f64 = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| k as f64 * c as f64)
            .sum();
        assert!((total / n as f64 - mean).abs() < 0.006);
        let mut rng = RngStream::new(6, 1);
        assert!((0..1000).all(|_| sample_claim_count(1.0, 1e-300, &mut rng) == 0));
    }

    // Kolmogorov–Smirnov distance against the Gamma(h, 1) CDF of an h-fold
    // exponential sum.
    fn ks_against_erlang(sample: &mut [f64], h: f64) -> f64 {
        sample.sort_by(f64::total_cmp);
        let n = sample.len() as f64;
        sample
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let f = math::gamma_p(h, x);
                (f - j as f64 / n).abs().max(((j + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn conditional_totals_are_convolutions() {
        let m = ModelSpec::Runoff(RunoffModel {
            economy: Economy::Independent {
                inflation: Distribution::constant(1.0).unwrap(),
                returns: Distribution::constant(1.0).unwrap(),
            },
            ..reference_runoff(2.0)
        });
        let mut by_count: [Vec<f64>; 4] = Default::default();
        let mut rng = RngStream::new(8, 0);
        while by_count[1..].iter().any(|v| v.len() < 5_000) {
            let mut s = m.start_path(1e9, &mut rng);
            let out = m.simulate_year(&mut s, &mut rng);
            if (1..=3).contains(&out.claims) {
                by_count[out.claims as usize].push(out.inflation_free_total);
            }
        }
        for h in 1..=3 {
            let v = &mut by_count[h];
            v.truncate(5_000);
            let d = ks_against_erlang(v, h as f64);
            // p > 0.01 ⇔ √n D < 1.628
            assert!(math::sqrt(5_000.0) * d < 1.628, "h={h} D={d}");
        }
    }

    #[test]
    fn single_claim_probability_late_year() {
        // P(K_n = 1)/(λ e^{−nφ}) = e^{−λξ_n}; at n = 50 and λ = 0.1 this is 1 − 7e-4
        let m = reference_runoff(0.1);
        let xi = m.xi(50, &[]);
        let mut rng = RngStream::new(9, 0);
        let draws = 10_000_000u64;
        let mut ones = 0u64;
        for _ in 0..draws {
            if sample_claim_count(xi, m.lambda, &mut rng) == 1 {
                ones += 1;
            }
        }
        let p = ones as f64 / draws as f64;
        let target = m.lambda * xi;
        let se = math::sqrt(target / draws as f64);
        assert!(
            (p - target).abs() < 3.0 * se + target * 1e-3,
            "{p} vs {target}"
        );
    }

    #[test]
    fn joint_economy() {
        let e = Economy::JointDiscrete {
            inflation: vec![1.02, 1.05],
            returns: vec![1.08, 1.01],
            probs: vec![0.6, 0.4],
        };
        e.validate().unwrap();
        let lam = e.discount_cgf();
        let a1 = 1.02 / 1.08;
        let a2 = 1.05 / 1.01;
        let exact = math::ln(0.6 * a1 * a1 + 0.4 * a2 * a2);
        assert_relative_eq!(lam.eval(2.0), exact, max_relative = 1e-13);
        assert!(!e.discount_has_density());
        let mut rng = RngStream::new(10, 0);
        let n = 200_000;
        let high = (0..n).filter(|_| e.sample(&mut rng).0 == 1.05).count();
        assert!((high as f64 / n as f64 - 0.4).abs() < 0.005);
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let mut g = growth_example();
        g.structure = Distribution::gamma(2.0, 1.0).unwrap();
        assert!(matches!(g.validate(), Err(ModelError::StructureMean(_))));
        let mut g = growth_example();
        g.growth = Distribution::normal(1.0, 0.1).unwrap();
        assert!(matches!(g.validate(), Err(ModelError::NotPositive(_))));
        let mut r = reference_runoff(1.0);
        r.mixing = Mixing::DeterministicExp { decay: 0.0 };
        assert!(r.validate().is_err());
        r.mixing = Mixing::DeterministicExp { decay: 0.1 };
        r.lambda = -1.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn serde_round_trip() {
        for m in [
            ModelSpec::Runoff(reference_runoff(0.1)),
            ModelSpec::Runoff(delay_runoff()),
            ModelSpec::Growth(growth_example()),
        ] {
            let text = serde_json::to_string(&m).unwrap();
            let back: ModelSpec = serde_json::from_str(&text).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn reference_rate_expression() {
        let r = reference_runoff(0.1);
        let e = r.rate_cgf().unwrap();
        for &a in &[0.5, 2.0, 3.0] {
            assert_relative_eq!(e.eval(a), -0.05 * a + 0.05 * a * a - 0.1, epsilon = 1e-14);
        }
    }
}
