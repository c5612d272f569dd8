//! Asymptotic ruin estimators and the shared report type.
//!
//! * increasing volumes: `P(T < ∞) ~ C u^{−ρ_1}` where `C` is the tail constant of
//!   the fixed point `R = Q + M max(0, R)`, estimated by Monte Carlo;
//! * run-off: a closed form in `ρ_2`, `μ_2` and the moments of `(1+i)` and `Z`;
//! * compound sums `V_N + W` with light-tailed increments and geometric-like `N`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::Distribution;
use crate::lundberg::{solve_rate, CgfExpr, LundbergSolution, RateError, RateKind};
use crate::math;
use crate::model::{GrowthModel, Mixing, ModelError, RunoffModel, TransitionRule};
use crate::quadrature::{self, Tolerance};
use crate::rng::RngStream;
use crate::runoff::RegVaryingFactor;

const RATE_SEARCH_CAP: f64 = 1e4;
/// Iterates beyond this size count towards divergence.
pub const DIVERGENCE_LEVEL: f64 = 1e12;
const DIVERGENCE_PATIENCE: usize = 1_000;

/// One named precondition of an asymptotic result and whether it held.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl HypothesisCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

fn failed_names(checks: &[HypothesisCheck]) -> String {
    let names: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    names.join(", ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("hypothesis violated: {}", failed_names(.0))]
    HypothesisViolation(Vec<HypothesisCheck>),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("fixed-point iteration diverged (|R| > 1e12 from step {0})")]
    DivergenceDetected(usize),
    #[error("E(M^κ log M) = {0} is not positive")]
    NonPositiveM(f64),
    #[error("burn-in must be at least 1000 steps, got {0}")]
    BurnInTooShort(usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mc,
    Hybrid,
    AsymptoticGrowth,
    AsymptoticRunoff,
    CompoundTail,
    Decomposition,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Mc => "mc",
            Self::Hybrid => "hybrid",
            Self::AsymptoticGrowth => "asymptotic_growth",
            Self::AsymptoticRunoff => "asymptotic_runoff",
            Self::CompoundTail => "compound_tail",
            Self::Decomposition => "decomposition",
        }
    }
}

/// Conditional-on-ruin statistics of the ruin year.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuinTimeSummary {
    pub ruins: u64,
    pub mean_year: f64,
    /// Mean of `T / log u`.
    pub mean_scaled: f64,
    pub std_error_scaled: f64,
}

/// Horizon actually used by a simulation estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonInfo {
    /// Longest simulated path, in years.
    pub max_years: u32,
    pub mean_years: f64,
    /// `true` when every path was followed to its natural end (no truncation).
    pub exact: bool,
}

/// Point estimate with uncertainty, provenance and hypothesis record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub u: f64,
    pub lambda: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    pub replications: u64,
    pub seed: Option<u64>,
    pub horizon: Option<HorizonInfo>,
    /// Upper bound on the downward bias from truncating paths; `None` when no
    /// bound is available.
    pub truncation_bias: Option<f64>,
    /// Per-path values clamped to 1.
    pub clamped: u64,
    pub ruin_time: Option<RuinTimeSummary>,
    pub hypotheses: Vec<HypothesisCheck>,
    pub rate: Option<LundbergSolution>,
    pub notes: Vec<String>,
}

impl EstimateReport {
    /// A deterministic value: zero standard error.
    pub fn exact(method: Method, u: f64, lambda: f64, estimate: f64) -> Self {
        Self {
            method,
            u,
            lambda,
            estimate,
            std_error: 0.0,
            ci95: (estimate, estimate),
            replications: 0,
            seed: None,
            horizon: None,
            truncation_bias: None,
            clamped: 0,
            ruin_time: None,
            hypotheses: Vec::new(),
            rate: None,
            notes: Vec::new(),
        }
    }

    /// Estimate with a normal-approximation 95% interval clipped to `[lo, hi]`.
    pub fn with_error(mut self, std_error: f64, lo: f64, hi: f64) -> Self {
        self.std_error = std_error;
        let half = 1.959_963_984_540_054 * std_error;
        self.ci95 = (
            (self.estimate - half).max(lo),
            (self.estimate + half).min(hi),
        );
        self
    }
}

/// A scalar built from independent laws: `η = Σ scale_k · T_k(X_k)` with
/// `T_k` the identity or the logarithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variate {
    pub parts: Vec<VariatePart>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariatePart {
    pub dist: Distribution,
    /// Use `log X` instead of `X`.
    #[serde(default)]
    pub log: bool,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Variate {
    pub fn linear(dist: Distribution) -> Self {
        Self {
            parts: alloc::vec![VariatePart {
                dist,
                log: false,
                scale: 1.0
            }],
        }
    }

    pub fn log_of(dist: Distribution) -> Self {
        Self {
            parts: alloc::vec![VariatePart {
                dist,
                log: true,
                scale: 1.0
            }],
        }
    }

    pub fn plus_log(mut self, dist: Distribution, scale: f64) -> Self {
        self.parts.push(VariatePart {
            dist,
            log: true,
            scale,
        });
        self
    }

    /// `log E e^{αη}` as a [`CgfExpr`].
    pub fn cgf(&self) -> Result<CgfExpr, ModelError> {
        let mut e = CgfExpr::new();
        for p in &self.parts {
            let law_err = |source| ModelError::Law {
                name: "variate part",
                source,
            };
            e = if p.log {
                e.log_moment(p.dist.clone(), p.scale).map_err(law_err)?
            } else {
                e.cgf(p.dist.clone(), p.scale).map_err(law_err)?
            };
        }
        Ok(e)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.parts
            .iter()
            .map(|p| {
                let x = p.dist.sample(rng);
                p.scale * if p.log { math::ln(x) } else { x }
            })
            .sum()
    }

    /// Some part has a density, so the law is non-arithmetic.
    pub fn has_density(&self) -> bool {
        self.parts
            .iter()
            .any(|p| p.dist.is_continuous() && p.scale != 0.0)
    }
}

/// Generator of the i.i.d. pairs `(Q, M)`, `M ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairLaw {
    /// `Q = (1+i)(1+g)λ m_Z (q − (1+s))`, `M = A(1+g)`.
    Growth { model: GrowthModel },
    /// `Q` and `M` independent.
    Independent { q: Distribution, m: Distribution },
    /// `Q = 1(ζ=0) e^W`, `M = 1(ζ=1) e^η` with `P(ζ = 1) = e^{−υ}`: the fixed point
    /// is `exp(V_N + W)` for geometric `N`.
    GeometricCompound {
        eta: Variate,
        w: Variate,
        upsilon: f64,
    },
}

impl PairLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            Self::Growth { model } => {
                let (i, r) = model.economy.sample(rng);
                let g = model.growth.sample(rng);
                let q = model.structure.sample(rng);
                let scale = model.lambda * model.claim.mean();
                (i * g * scale * (q - (1.0 + model.loading)), i / r * g)
            }
            Self::Independent { q, m } => {
                let qv = q.sample(rng);
                (qv, m.sample(rng))
            }
            Self::GeometricCompound { eta, w, upsilon } => {
                let continue_sum = rng.random::<f64>() < math::exp(-upsilon);
                if continue_sum {
                    (0.0, math::exp(eta.sample(rng)))
                } else {
                    (math::exp(w.sample(rng)), 0.0)
                }
            }
        }
    }

    /// `α ↦ log E M^α`.
    pub fn multiplier_cgf(&self) -> Result<CgfExpr, EstimatorError> {
        Ok(match self {
            Self::Growth { model } => model.rate_cgf(),
            Self::Independent { m, .. } => {
                CgfExpr::new()
                    .log_moment(m.clone(), 1.0)
                    .map_err(|source| ModelError::Law {
                        name: "multiplier M",
                        source,
                    })?
            }
            Self::GeometricCompound { eta, upsilon, .. } => eta.cgf()?.constant(-upsilon),
        })
    }
}

/// The random equation `R = Q + M max(0, R)` with tail index `κ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldieProblem {
    pub law: PairLaw,
    pub kappa: f64,
    /// `E(M^κ log M)` when it could be computed from the laws.
    pub m: Option<f64>,
}

impl GoldieProblem {
    /// Solves `E M^κ = 1` for `κ` and computes `m = E(M^κ log M)`.
    pub fn new(law: PairLaw) -> Result<Self, EstimatorError> {
        let expr = law.multiplier_cgf()?;
        let sol = solve_rate(&expr, RATE_SEARCH_CAP)?;
        let kappa = sol.rate;
        let m = expr.derivative(kappa) * math::exp(expr.eval(kappa));
        Ok(Self {
            law,
            kappa,
            m: Some(m),
        })
    }

    /// A problem with a given `κ` and no analytic `m`; for degenerate laws.
    pub fn with_kappa(law: PairLaw, kappa: f64) -> Self {
        Self {
            law,
            kappa,
            m: None,
        }
    }
}

/// Fixed-point chain settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in: usize,
    pub samples: usize,
    pub thinning: usize,
    pub seed: u64,
    pub stream: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            burn_in: 10_000,
            samples: 1_000_000,
            thinning: 10,
            seed: 0,
            stream: 0,
        }
    }
}

/// Iterates `R ← Q + M max(0, R)` from `R = 0`, discards `burn_in` steps and keeps
/// every `thinning`-th iterate.
pub fn simulate_fixed_point<R: Rng + ?Sized>(
    p: &GoldieProblem,
    burn_in: usize,
    n_samples: usize,
    thinning: usize,
    rng: &mut R,
) -> Result<Vec<f64>, EstimatorError> {
    if burn_in < 1_000 {
        return Err(EstimatorError::BurnInTooShort(burn_in));
    }
    let thinning = thinning.max(1);
    let mut r = 0.0f64;
    let mut run = 0usize;
    let mut step = |r: &mut f64, k: usize| -> Result<(), EstimatorError> {
        let (q, m) = p.law.sample(rng);
        *r = q + m * r.max(0.0);
        if !(r.abs() <= DIVERGENCE_LEVEL) {
            run += 1;
            if run >= DIVERGENCE_PATIENCE || !r.is_finite() {
                return Err(EstimatorError::DivergenceDetected(k + 1 - run));
            }
        } else {
            run = 0;
        }
        Ok(())
    };
    for k in 0..burn_in {
        step(&mut r, k)?;
    }
    let mut out = Vec::with_capacity(n_samples);
    let mut k = burn_in;
    while out.len() < n_samples {
        for _ in 0..thinning {
            step(&mut r, k)?;
            k += 1;
        }
        out.push(r);
    }
    Ok(out)
}

/// Tail constant `C` with its Monte Carlo error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldieEstimate {
    pub c: f64,
    pub std_error: f64,
    pub kappa: f64,
    pub m: f64,
    pub samples: usize,
}

/// `C = E[((Q + M R⁺)⁺)^κ − ((M R)⁺)^κ] / (κ m)` by pairing every stored `R` with a
/// fresh `(Q, M)`; the error comes from `batches` batch means.
pub fn estimate_goldie_constant<R: Rng + ?Sized>(
    p: &GoldieProblem,
    samples: &[f64],
    batches: usize,
    rng: &mut R,
) -> Result<GoldieEstimate, EstimatorError> {
    let batches = batches.max(2);
    if samples.len() < batches {
        return Err(EstimatorError::TooFewSamples {
            needed: batches,
            got: samples.len(),
        });
    }
    let kappa = p.kappa;
    let pow = |x: f64| if x > 0.0 { math::powf(x, kappa) } else { 0.0 };
    let mut m_sum = 0.0;
    let mut diffs = Vec::with_capacity(samples.len());
    for &r in samples {
        let (q, m) = p.law.sample(rng);
        diffs.push(pow(q + m * r.max(0.0)) - pow(m * r));
        if p.m.is_none() && m > 0.0 {
            m_sum += math::powf(m, kappa) * math::ln(m);
        }
    }
    let m = p.m.unwrap_or(m_sum / samples.len() as f64);
    if !(m > 0.0) {
        return Err(EstimatorError::NonPositiveM(m));
    }
    let (mean, se) = batch_means(&diffs, batches);
    let scale = kappa * m;
    Ok(GoldieEstimate {
        c: mean / scale,
        std_error: se / scale,
        kappa,
        m,
        samples: samples.len(),
    })
}

/// Mean and batch-means standard error (trailing remainder dropped from the SE only).
pub fn batch_means(x: &[f64], batches: usize) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    if size == 0 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = x
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let b = means.len() as f64;
    let grand = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|v| (v - grand) * (v - grand)).sum::<f64>() / (b - 1.0);
    (mean, math::sqrt(var / b))
}

/// Least-squares slope of `log P̂(R > x)` against `log x` over the largest
/// `fraction` of the samples.
pub fn tail_slope(samples: &[f64], fraction: f64) -> Option<f64> {
    let mut top: Vec<f64> = samples.iter().copied().filter(|v| *v > 0.0).collect();
    top.sort_by(|a, b| b.total_cmp(a));
    let n = samples.len() as f64;
    let k = ((n * fraction) as usize).min(top.len());
    if k < 10 {
        return None;
    }
    let pts: Vec<(f64, f64)> = top[..k]
        .iter()
        .enumerate()
        .map(|(j, &x)| (math::ln(x), math::ln((j as f64 + 0.5) / n)))
        .collect();
    Some(ols_slope(&pts))
}

/// Hill estimate of the tail index from the `k` largest samples.
pub fn hill_index(samples: &[f64], k: usize) -> Option<f64> {
    let mut top: Vec<f64> = samples.iter().copied().filter(|v| *v > 0.0).collect();
    if top.len() <= k || k == 0 {
        return None;
    }
    top.sort_by(|a, b| b.total_cmp(a));
    let threshold = math::ln(top[k]);
    let mean = top[..k]
        .iter()
        .map(|x| math::ln(*x) - threshold)
        .sum::<f64>()
        / k as f64;
    Some(1.0 / mean)
}

pub fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn domain_hi(d: &Distribution) -> f64 {
    d.log_moment_domain()
        .map(|(_, hi)| hi)
        .unwrap_or(f64::NEG_INFINITY)
}

/// Increasing-volume asymptotics `P(T < ∞) ~ C u^{−ρ_1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthAsymptotics {
    pub rate: LundbergSolution,
    pub beta: f64,
    pub constant: GoldieEstimate,
    /// `P(q > 1+s) > 0`; when false the constant is exactly zero.
    pub positive: bool,
    pub hypotheses: Vec<HypothesisCheck>,
    pub chain: ChainConfig,
}

impl GrowthAsymptotics {
    /// Checks the hypotheses and solves `Λ_1(ρ) = 0`.
    pub fn check(
        model: &GrowthModel,
    ) -> Result<(LundbergSolution, f64, Vec<HypothesisCheck>), EstimatorError> {
        model.validate()?;
        let mut checks = Vec::new();
        let drift = model.growth.log_moment_derivative(0.0).unwrap_or(f64::NAN);
        checks.push(HypothesisCheck::new(
            "E log(1+g) >= 0",
            drift >= 0.0,
            format!("E log(1+g) = {drift:.6e}"),
        ));
        checks.push(HypothesisCheck::new(
            "P(g = 0) < 1",
            !(model.growth.is_degenerate() && model.growth.mean() == 1.0),
            String::from("growth law is not a point mass at 1"),
        ));
        let expr = model.rate_cgf();
        let beta = expr
            .domain_bound()
            .min(domain_hi(&model.economy.inflation_law()))
            .min(domain_hi(&model.claim))
            .min(domain_hi(&model.structure));
        checks.push(HypothesisCheck::new(
            "beta_1 > 0",
            beta > 0.0,
            format!("beta_1 = {beta}"),
        ));
        let sol = solve_rate(&expr, RATE_SEARCH_CAP);
        let rate_ok = matches!(&sol, Ok(s) if s.kind == RateKind::Interior && s.rate < beta);
        checks.push(HypothesisCheck::new(
            "rho_1 in (0, beta_1)",
            rate_ok,
            match &sol {
                Ok(s) => format!("rho_1 = {:.12}, beta_1 = {beta}", s.rate),
                Err(e) => format!("{e}"),
            },
        ));
        let z_hi = domain_hi(&model.claim);
        checks.push(HypothesisCheck::new(
            "E Z^alpha finite for some alpha > 1",
            z_hi > 1.0,
            format!("moments of Z finite below {z_hi}"),
        ));
        let density = model.economy.discount_has_density() || model.growth.is_continuous();
        checks.push(HypothesisCheck::new(
            "log D has an absolutely continuous component",
            density,
            String::from("some factor of D = A(1+g) has a density"),
        ));
        if checks.iter().any(|c| !c.passed) {
            return Err(EstimatorError::HypothesisViolation(checks));
        }
        Ok((sol?, beta, checks))
    }

    /// Runs one or more fixed-point chains (stream `cfg.stream + j` for chain `j`)
    /// and estimates `C`.
    pub fn fit(
        model: &GrowthModel,
        cfg: ChainConfig,
        chains: usize,
    ) -> Result<Self, EstimatorError> {
        let (rate, beta, mut hypotheses) = Self::check(model)?;
        let problem = GoldieProblem::new(PairLaw::Growth {
            model: model.clone(),
        })?;
        let chains = chains.max(1);
        let mut pooled = Vec::with_capacity(cfg.samples);
        for j in 0..chains {
            let mut rng = RngStream::new(cfg.seed, cfg.stream + j as u64);
            let share = cfg.samples / chains + usize::from(j < cfg.samples % chains);
            pooled.extend(simulate_fixed_point(
                &problem,
                cfg.burn_in,
                share,
                cfg.thinning,
                &mut rng,
            )?);
        }
        let mut rng = RngStream::new(cfg.seed, cfg.stream + chains as u64);
        let constant = estimate_goldie_constant(&problem, &pooled, 100, &mut rng)?;
        let positive = model.structure.survival(1.0 + model.loading) > 0.0;
        hypotheses.push(HypothesisCheck::new(
            "P(q > 1+s) > 0 (C > 0)",
            positive,
            format!(
                "P(q > {}) = {:.6e}",
                1.0 + model.loading,
                model.structure.survival(1.0 + model.loading)
            ),
        ));
        Ok(Self {
            rate,
            beta,
            constant,
            positive,
            hypotheses,
            chain: cfg,
        })
    }

    pub fn ruin_probability(&self, u: f64, lambda: f64) -> EstimateReport {
        let scale = math::powf(u, -self.rate.rate);
        let mut r =
            EstimateReport::exact(Method::AsymptoticGrowth, u, lambda, self.constant.c * scale)
                .with_error(self.constant.std_error * scale, 0.0, f64::INFINITY);
        r.replications = self.constant.samples as u64;
        r.seed = Some(self.chain.seed);
        r.hypotheses = self.hypotheses.clone();
        r.rate = Some(self.rate);
        r.notes.push(format!(
            "C = {:.6e} ± {:.2e}, kappa = {:.12}, m = {:.6e}",
            self.constant.c, self.constant.std_error, self.constant.kappa, self.constant.m
        ));
        r
    }
}

/// Run-off closed form
/// `P(T < ∞) ~ E(1+i)^ρ E Z^ρ e^{Λ_ξ(1)} μ/ρ · λ f(μ log u) u^{−ρ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunoffAsymptotics {
    pub rate: LundbergSolution,
    pub beta: f64,
    /// `E(1+i)^ρ E Z^ρ e^{Λ_ξ(1)} μ / ρ`.
    pub prefactor: f64,
    pub count_factor: RegVaryingFactor,
    pub log_mixing_rate: f64,
    pub hypotheses: Vec<HypothesisCheck>,
}

impl RunoffAsymptotics {
    pub fn new(model: &RunoffModel) -> Result<Self, EstimatorError> {
        model.validate()?;
        let mut checks = Vec::new();
        let lx = model.log_mixing_rate();
        checks.push(HypothesisCheck::new(
            "Lambda_xi(1) finite and negative",
            matches!(lx, Some(v) if v.is_finite() && v < 0.0),
            match lx {
                Some(v) => format!("Lambda_xi(1) = {v}"),
                None => String::from("delay law has no exponential tail"),
            },
        ));
        let lx = lx.unwrap_or(f64::NAN);
        let expr = model.economy.discount_cgf().constant(lx);
        let inflation = model.economy.inflation_law();
        let beta = expr
            .domain_bound()
            .min(domain_hi(&inflation))
            .min(domain_hi(&model.claim));
        checks.push(HypothesisCheck::new(
            "beta_2 > 1",
            beta > 1.0,
            format!("beta_2 = {beta}"),
        ));
        let sol = if lx.is_finite() {
            solve_rate(&expr, RATE_SEARCH_CAP).map_err(EstimatorError::from)
        } else {
            Err(EstimatorError::HypothesisViolation(Vec::new()))
        };
        let rate_ok =
            matches!(&sol, Ok(s) if s.kind == RateKind::Interior && s.rate > 1.0 && s.rate < beta);
        checks.push(HypothesisCheck::new(
            "rho_2 in (1, beta_2)",
            rate_ok,
            match &sol {
                Ok(s) => format!("rho_2 = {:.12}, mu_2 = {:.12}", s.rate, s.mu),
                Err(e) => format!("{e}"),
            },
        ));
        checks.push(HypothesisCheck::new(
            "log A non-lattice",
            model.economy.discount_has_density(),
            String::from("inflation or returns have a density"),
        ));
        checks.push(HypothesisCheck::new(
            "claims paid at start of year",
            model.rule == TransitionRule::ClaimsStartOfYear,
            String::from("the end-of-year rule is simulated only"),
        ));
        let f = model.count_prefactor();
        checks.push(HypothesisCheck::new(
            "P(K_n = 1) ~ lambda f(n) e^{n Lambda_xi(1)}",
            f.is_some(),
            match &model.mixing {
                Mixing::DeterministicExp { .. } => String::from("f = 1"),
                Mixing::ReportingDelay { .. } => String::from("f from the delay tail"),
            },
        ));
        if checks.iter().any(|c| !c.passed) {
            return Err(EstimatorError::HypothesisViolation(checks));
        }
        let rate = sol?;
        let rho = rate.rate;
        let moments = inflation.log_moment(rho).unwrap_or(f64::INFINITY)
            + model.claim.log_moment(rho).unwrap_or(f64::INFINITY)
            + lx;
        let prefactor = math::exp(moments) * rate.mu / rho;
        Ok(Self {
            rate,
            beta,
            prefactor,
            count_factor: f.unwrap_or(RegVaryingFactor::ONE),
            log_mixing_rate: lx,
            hypotheses: checks,
        })
    }

    /// The closed form at `(λ, u)`; `f` is evaluated at `max(μ log u, 1)`.
    pub fn evaluate(&self, lambda: f64, u: f64) -> f64 {
        let x = (self.rate.mu * math::ln(u)).max(1.0);
        self.prefactor * lambda * self.count_factor.eval(x) * math::powf(u, -self.rate.rate)
    }

    /// Same closed form with `f ≡ 1`.
    pub fn evaluate_flat(&self, lambda: f64, u: f64) -> f64 {
        self.prefactor * lambda * math::powf(u, -self.rate.rate)
    }

    pub fn ruin_probability(&self, model: &RunoffModel, u: f64) -> EstimateReport {
        let mut r = EstimateReport::exact(
            Method::AsymptoticRunoff,
            u,
            model.lambda,
            self.evaluate(model.lambda, u),
        );
        r.hypotheses = self.hypotheses.clone();
        r.rate = Some(self.rate);
        let t = self.typical_ruin_time(u);
        let load = model.lambda * model.expected_xi(t.max(1.0) as usize);
        r.notes.push(format!(
            "lambda*E(xi) at the typical ruin year {t:.1} is {load:.3e}; the estimate needs this small"
        ));
        r
    }

    /// `μ_2 log u`.
    pub fn typical_ruin_time(&self, u: f64) -> f64 {
        self.rate.mu * math::ln(u)
    }

    pub fn ruin_time_window(&self, u: f64, eps: f64) -> (f64, f64) {
        let l = math::ln(u);
        ((self.rate.mu - eps) * l, (self.rate.mu + eps) * l)
    }
}

/// `P(V_N + W > u)` for a random walk `V` with increments `η`, independent `W`
/// and `P(N = n) ~ f(n) e^{−nυ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompoundTailProblem {
    pub eta: Variate,
    pub w: Variate,
    pub upsilon: f64,
    pub f: RegVaryingFactor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompoundTailEstimate {
    pub rho: f64,
    pub mu: f64,
    /// `e^{−ρu}`.
    pub log_rate_estimate: f64,
    /// `E(e^{ρW}) μ/ρ · f(μu) e^{−ρu}`.
    pub refined: f64,
    /// `E(e^{ρW}) μ/ρ · f(μu)`.
    pub prefactor: f64,
}

pub fn compound_tail(
    p: &CompoundTailProblem,
    u: f64,
) -> Result<CompoundTailEstimate, EstimatorError> {
    let eta = p.eta.cgf()?;
    let w = p.w.cgf()?;
    let mut checks = Vec::new();
    checks.push(HypothesisCheck::new(
        "eta non-arithmetic",
        p.eta.has_density(),
        String::from("some part of eta has a density"),
    ));
    checks.push(HypothesisCheck::new(
        "upsilon > 0",
        p.upsilon > 0.0 && p.upsilon.is_finite(),
        format!("upsilon = {}", p.upsilon),
    ));
    let sol = solve_rate(&eta.clone().constant(-p.upsilon), RATE_SEARCH_CAP);
    let interior = matches!(&sol, Ok(s) if s.kind == RateKind::Interior);
    checks.push(HypothesisCheck::new(
        "Lambda_eta(rho) = upsilon solvable",
        interior,
        match &sol {
            Ok(s) => format!("rho = {:.12}", s.rate),
            Err(e) => format!("{e}"),
        },
    ));
    let beyond = match &sol {
        Ok(s) => eta.domain_bound() > s.rate && w.domain_bound() > s.rate,
        Err(_) => false,
    };
    checks.push(HypothesisCheck::new(
        "Lambda_eta and E e^{alpha W} finite beyond rho",
        beyond,
        format!(
            "domains end at {} and {}",
            eta.domain_bound(),
            w.domain_bound()
        ),
    ));
    if checks.iter().any(|c| !c.passed) {
        return Err(EstimatorError::HypothesisViolation(checks));
    }
    let s = sol?;
    let (rho, mu) = (s.rate, s.mu);
    let prefactor = math::exp(w.eval(rho)) * mu / rho * p.f.eval(mu * u);
    let decay = math::exp(-rho * u);
    Ok(CompoundTailEstimate {
        rho,
        mu,
        log_rate_estimate: decay,
        refined: prefactor * decay,
        prefactor,
    })
}

/// Terms `P(A_1⋯A_{n−1}(1+i_n) Z > u) P(K_n = 1)` of the single-claim representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub u: f64,
    /// Index 0 holds year 1.
    pub terms: Vec<f64>,
    pub sum: f64,
    /// Upper bound on the omitted terms `n > n_max`.
    pub truncation_bound: f64,
    /// Year of the largest term.
    pub argmax: usize,
    /// `true` when the first factor came from Gaussian quadrature.
    pub exact_factors: bool,
}

/// Sums the single-claim series up to `n_max`. The first factor is a Gaussian
/// integral when `log A` and `log(1+i)` are Gaussian; otherwise it is a
/// conditional Monte Carlo average over `mc_draws` discount paths.
pub fn single_claim_decomposition(
    model: &RunoffModel,
    u: f64,
    n_max: usize,
    mc_draws: usize,
    seed: u64,
) -> Result<Decomposition, EstimatorError> {
    model.validate()?;
    let count_prob = single_claim_probabilities(model, n_max, mc_draws, seed);
    let claim = &model.claim;
    let (factors, exact) = match model.economy.gaussian_logs() {
        Some((mi, vi, mr, vr)) => {
            let f: Vec<f64> = (1..=n_max)
                .map(|n| {
                    let k = (n - 1) as f64;
                    let mean = k * (mi - mr) + mi;
                    let var = k * (vi + vr) + vi;
                    lognormal_scaled_survival(claim, mean, var, u)
                })
                .collect();
            (f, true)
        }
        None => {
            let mut acc = alloc::vec![0.0; n_max];
            for j in 0..mc_draws {
                let mut rng = RngStream::new(seed, j as u64);
                let mut a = 1.0;
                for slot in acc.iter_mut() {
                    let (i, r) = model.economy.sample(&mut rng);
                    *slot += claim.survival(u / (a * i));
                    a *= i / r;
                }
            }
            (
                acc.into_iter().map(|s| s / mc_draws as f64).collect(),
                false,
            )
        }
    };
    let terms: Vec<f64> = factors
        .iter()
        .zip(&count_prob)
        .map(|(a, b)| a * b)
        .collect();
    let sum = terms.iter().sum();
    let argmax = terms
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i + 1)
        .unwrap_or(0);
    Ok(Decomposition {
        u,
        terms,
        sum,
        truncation_bound: decomposition_tail_bound(model, u, n_max),
        argmax,
        exact_factors: exact,
    })
}

/// `P(K_n = 1)` for `n = 1..=n_max`.
fn single_claim_probabilities(
    model: &RunoffModel,
    n_max: usize,
    mc_draws: usize,
    seed: u64,
) -> Vec<f64> {
    let lam = model.lambda;
    match &model.mixing {
        Mixing::DeterministicExp { .. } => (1..=n_max)
            .map(|n| {
                let m = lam * model.xi(n, &[]);
                m * math::exp(-m)
            })
            .collect(),
        Mixing::ReportingDelay { exposure } => {
            if exposure.single_report_probability(lam, 1).is_some() {
                return (1..=n_max)
                    .map(|n| exposure.single_report_probability(lam, n).unwrap_or(0.0))
                    .collect();
            }
            let mut acc = alloc::vec![0.0; n_max];
            let mut rng = RngStream::new(seed, u64::MAX);
            for _ in 0..mc_draws {
                let q = exposure.sample_structure(&mut rng);
                for (slot, n) in acc.iter_mut().zip(1..) {
                    let m = lam * exposure.xi(n, &q);
                    *slot += m * math::exp(-m);
                }
            }
            acc.into_iter().map(|s| s / mc_draws as f64).collect()
        }
    }
}

/// `P(e^G Z > u)` for `G ~ N(mean, var)` independent of `Z`.
fn lognormal_scaled_survival(claim: &Distribution, mean: f64, var: f64, u: f64) -> f64 {
    if var == 0.0 {
        return claim.survival(u * math::exp(-mean));
    }
    let s = math::sqrt(var);
    let lu = math::ln(u);
    quadrature::integrate(
        |t| math::normal_pdf(t) * claim.survival(math::exp(lu - mean - s * t)),
        -40.0,
        40.0,
        Tolerance {
            abs: 1e-300,
            rel: 1e-10,
            max_subdivisions: 2_000,
        },
    )
    .value
}

/// Markov bound with exponent 1 on the terms beyond `n_max`:
/// `Σ_{n>N} λ E ξ_n (E A)^{n−1} E(1+i) m_Z / u`, capped by `Σ_{n>N} λ E ξ_n`.
fn decomposition_tail_bound(model: &RunoffModel, u: f64, n_max: usize) -> f64 {
    let ea = math::exp(model.economy.discount_cgf().eval(1.0));
    let lead = model.economy.inflation_law().mean() * model.claim.mean() / u;
    let lam = model.lambda;
    match &model.mixing {
        Mixing::DeterministicExp { decay } => {
            let ratio = ea * math::exp(-decay);
            let first = (n_max + 1) as f64;
            let mass = lam * math::exp(-first * decay) / -math::exp_m1(-decay);
            if ratio < 1.0 {
                let markov = lam * lead * math::powf(ea, first - 1.0) * math::exp(-first * decay)
                    / (1.0 - ratio);
                markov.min(mass)
            } else {
                mass
            }
        }
        Mixing::ReportingDelay { exposure } => {
            let end = exposure.cached_weights().len() + exposure.past_years() + 1;
            let mut markov = 0.0;
            let mut mass = 0.0;
            for n in (n_max + 1)..=end.max(n_max + 1) {
                let x = lam * exposure.expected_xi(n);
                mass += x;
                markov += x * lead * math::powf(ea, (n - 1) as f64);
            }
            markov.min(mass)
        }
    }
}
