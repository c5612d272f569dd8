//! Crude Monte Carlo ruin frequencies and the simulate-then-extrapolate hybrid.
//!
//! Replication `j` always uses random stream `j`, and replications are grouped
//! into fixed chunks of [`CHUNK`] paths whose tallies are reduced in chunk order.
//! Results therefore do not depend on how chunks are spread over threads.
//!
//! Paths are shared across a grid of initial capitals: one path of `Y_n` yields the
//! first passage time over every threshold.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution as _, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::sample_poisson_positive;
use crate::estimators::{
    EstimateReport, EstimatorError, HorizonInfo, Method, RuinTimeSummary, RunoffAsymptotics,
};
use crate::lundberg::solve_rate;
use crate::math;
use crate::model::{GrowthModel, Mixing, ModelError, ModelSpec, RunoffModel, TransitionRule};
use crate::rng::RngStream;

/// Paths per chunk.
pub const CHUNK: u64 = 4096;
/// Safety cap on adaptive horizons, in years.
pub const MAX_YEARS: u32 = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("replications must be at least 1")]
    NoReplications,
    #[error("initial capitals must be finite and non-negative")]
    BadCapital,
    #[error("horizon policy {0} does not fit this model")]
    PolicyMismatch(&'static str),
    #[error("floor must lie in (0, 1), got {0}")]
    BadFloor(f64),
    #[error("the hybrid estimator needs a run-off model")]
    NotRunoff,
}

/// When a surviving path stops being simulated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum HorizonPolicy {
    /// Exactly `years` years.
    Fixed { years: u32 },
    /// Run-off: stop once the expected number of claims still to come,
    /// `λ Σ_{m>n} ξ_m`, drops below `intensity_floor`.
    AdaptiveRunoff { intensity_floor: f64 },
    /// Growth: stop once `D_1⋯D_n < discount_floor · min(1, 1/u)`.
    AdaptiveGrowth { discount_floor: f64 },
}

impl Default for HorizonPolicy {
    fn default() -> Self {
        Self::AdaptiveRunoff {
            intensity_floor: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Event-driven sampling when the model allows it, otherwise year by year.
    #[default]
    Auto,
    /// Always year by year through [`ModelSpec::simulate_year`].
    Yearly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub replications: u64,
    pub seed: u64,
    #[serde(default = "one_worker")]
    pub workers: usize,
    #[serde(default)]
    pub horizon: HorizonPolicy,
    #[serde(default)]
    pub kernel: Kernel,
}

fn one_worker() -> usize {
    1
}

impl McConfig {
    pub fn new(replications: u64, seed: u64) -> Self {
        Self {
            replications,
            seed,
            workers: 1,
            horizon: HorizonPolicy::default(),
            kernel: Kernel::Auto,
        }
    }

    pub fn with_horizon(mut self, horizon: HorizonPolicy) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn chunk_count(&self) -> usize {
        self.replications.div_ceil(CHUNK) as usize
    }
}

/// Per-threshold sums over a block of paths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CapitalTally {
    pub ruins: u64,
    pub sum_year: f64,
    pub sum_scaled: f64,
    pub sum_scaled_sq: f64,
    /// Sum over truncated paths of the residual ruin-probability bound.
    pub bias: f64,
    /// Hybrid per-path values `ê` and their squares.
    pub sum_value: f64,
    pub sum_value_sq: f64,
    pub clamped: u64,
}

/// Sums over one chunk of paths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub paths: u64,
    pub years: u64,
    pub max_years: u32,
    pub truncated: u64,
    pub capitals: Vec<CapitalTally>,
}

impl Tally {
    fn new(k: usize) -> Self {
        Self {
            capitals: alloc::vec![CapitalTally::default(); k],
            ..Self::default()
        }
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: &Tally) {
        self.paths += other.paths;
        self.years += other.years;
        self.max_years = self.max_years.max(other.max_years);
        self.truncated += other.truncated;
        for (a, b) in self.capitals.iter_mut().zip(&other.capitals) {
            a.ruins += b.ruins;
            a.sum_year += b.sum_year;
            a.sum_scaled += b.sum_scaled;
            a.sum_scaled_sq += b.sum_scaled_sq;
            a.bias += b.bias;
            a.sum_value += b.sum_value;
            a.sum_value_sq += b.sum_value_sq;
            a.clamped += b.clamped;
        }
    }
}

/// Outcome of one path against the whole capital grid.
struct PathResult {
    years: u32,
    truncated: bool,
    /// First passage year per capital (0 = none).
    passage: Vec<u32>,
    /// Residual-ruin bound per capital for truncated paths.
    bias: Vec<f64>,
    /// Hybrid restart state: `(Y_{n0}, A_{≤n0}, λ')`.
    restart: Option<(f64, f64, f64)>,
}

#[derive(Clone, Debug)]
enum Prepared {
    /// Exact run-off sampler for `ξ_n = e^{−nφ}` and Gaussian `log(1+i)`, `log(1+r)`.
    Event {
        decay: f64,
        mi: f64,
        si: f64,
        mr: f64,
        sr: f64,
    },
    Yearly {
        runoff_tail: Option<RunoffTail>,
        growth_tail: Option<GrowthTail>,
    },
}

/// Precomputed pieces of the run-off truncation rule and bound.
#[derive(Clone, Debug)]
struct RunoffTail {
    /// `E A`.
    ea: f64,
    /// `λ E(1+i) m_Z`.
    lead: f64,
    /// Mass suffix `Σ_{m>k} b_m` and discounted suffix `Σ_{m≥1} b_{k+m} (EA)^{m−1}`
    /// by `k` (reporting-delay books only).
    mass_suffix: Vec<f64>,
    discounted_suffix: Vec<f64>,
}

/// `K_α = (λ m_Z)^α E q^α E(1+i)^α E(1+g)^α / (1 − e^{Λ_1(α)})` and `α`.
#[derive(Clone, Copy, Debug)]
struct GrowthTail {
    alpha: f64,
    k: f64,
}

#[derive(Clone, Debug)]
enum Mode {
    Ruin,
    Hybrid {
        n0: u32,
        asymptotics: RunoffAsymptotics,
    },
}

/// A batch of replications over a sorted grid of initial capitals.
#[derive(Clone, Debug)]
pub struct RuinJob {
    model: ModelSpec,
    grid: Vec<f64>,
    cfg: McConfig,
    mode: Mode,
    prepared: Prepared,
}

impl RuinJob {
    /// Crude Monte Carlo over the capitals `us` (sorted and de-duplicated).
    pub fn new(model: &ModelSpec, us: &[f64], cfg: McConfig) -> Result<Self, McError> {
        model.validate()?;
        let grid = sorted_grid(us)?;
        if cfg.replications == 0 {
            return Err(McError::NoReplications);
        }
        let prepared = prepare(model, &cfg, true)?;
        Ok(Self {
            model: model.clone(),
            grid,
            cfg,
            mode: Mode::Ruin,
            prepared,
        })
    }

    /// Simulate `n0` years, then extrapolate survivors with the run-off closed form.
    pub fn hybrid(
        model: &RunoffModel,
        us: &[f64],
        lambda0: f64,
        cfg: McConfig,
    ) -> Result<Self, McError> {
        let asymptotics = RunoffAsymptotics::new(model)?;
        let n0 = choose_n0(model, lambda0);
        let spec = ModelSpec::Runoff(model.clone());
        let grid = sorted_grid(us)?;
        if cfg.replications == 0 {
            return Err(McError::NoReplications);
        }
        let cfg = McConfig {
            horizon: HorizonPolicy::Fixed { years: n0 },
            ..cfg
        };
        let prepared = prepare(&spec, &cfg, false)?;
        Ok(Self {
            model: spec,
            grid,
            cfg,
            mode: Mode::Hybrid { n0, asymptotics },
            prepared,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }

    pub fn n0(&self) -> Option<u32> {
        match &self.mode {
            Mode::Hybrid { n0, .. } => Some(*n0),
            Mode::Ruin => None,
        }
    }

    pub fn uses_event_kernel(&self) -> bool {
        matches!(self.prepared, Prepared::Event { .. })
    }

    pub fn chunk_count(&self) -> usize {
        self.cfg.chunk_count()
    }

    /// Simulates chunk `idx` (replications `idx·CHUNK ..`).
    pub fn run_chunk(&self, idx: usize) -> Tally {
        let start = idx as u64 * CHUNK;
        let end = (start + CHUNK).min(self.cfg.replications);
        let mut t = Tally::new(self.grid.len());
        for j in start..end {
            let mut rng = RngStream::new(self.cfg.seed, j);
            let path = match &self.prepared {
                Prepared::Event {
                    decay,
                    mi,
                    si,
                    mr,
                    sr,
                } => self.event_path(*decay, (*mi, *si, *mr, *sr), &mut rng),
                Prepared::Yearly {
                    runoff_tail,
                    growth_tail,
                } => self.yearly_path(runoff_tail.as_ref(), growth_tail.as_ref(), &mut rng),
            };
            self.record(&mut t, &path);
        }
        t
    }

    fn record(&self, t: &mut Tally, p: &PathResult) {
        t.paths += 1;
        t.years += u64::from(p.years);
        t.max_years = t.max_years.max(p.years);
        t.truncated += u64::from(p.truncated);
        for (k, (c, &u)) in t.capitals.iter_mut().zip(&self.grid).enumerate() {
            let year = p.passage[k];
            if year > 0 {
                c.ruins += 1;
                c.sum_year += f64::from(year);
                let s = f64::from(year) / math::ln(u);
                c.sum_scaled += s;
                c.sum_scaled_sq += s * s;
            }
            c.bias += p.bias[k];
            if let Mode::Hybrid { asymptotics, .. } = &self.mode {
                let value = if year > 0 {
                    1.0
                } else {
                    let (y, a, lam) = p.restart.unwrap_or((0.0, 1.0, self.model.lambda()));
                    let residual = (u - y) / a;
                    let raw = if self.n0().unwrap_or(0) == 0 {
                        asymptotics.evaluate(lam, residual)
                    } else {
                        asymptotics.evaluate_flat(lam, residual)
                    };
                    if raw > 1.0 || !raw.is_finite() {
                        c.clamped += 1;
                        1.0
                    } else {
                        raw
                    }
                };
                c.sum_value += value;
                c.sum_value_sq += value * value;
            }
        }
    }

    /// Reduces chunk tallies (in the given order) into one report per capital.
    pub fn finish(&self, tallies: &[Tally]) -> Vec<EstimateReport> {
        let mut total = Tally::new(self.grid.len());
        for t in tallies {
            total.merge(t);
        }
        let n = total.paths as f64;
        let horizon = HorizonInfo {
            max_years: total.max_years,
            mean_years: total.years as f64 / n,
            exact: total.truncated == 0 && !matches!(self.cfg.horizon, HorizonPolicy::Fixed { .. }),
        };
        self.grid
            .iter()
            .zip(&total.capitals)
            .map(|(&u, c)| {
                let ruin_time = (c.ruins > 0).then(|| {
                    let r = c.ruins as f64;
                    let mean = c.sum_scaled / r;
                    let var = if c.ruins > 1 {
                        (c.sum_scaled_sq - r * mean * mean) / (r - 1.0)
                    } else {
                        0.0
                    };
                    RuinTimeSummary {
                        ruins: c.ruins,
                        mean_year: c.sum_year / r,
                        mean_scaled: mean,
                        std_error_scaled: math::sqrt(var.max(0.0) / r),
                    }
                });
                let mut rep = match &self.mode {
                    Mode::Ruin => {
                        let p = c.ruins as f64 / n;
                        let mut rep = EstimateReport::exact(Method::Mc, u, self.model.lambda(), p);
                        rep.std_error = math::sqrt(p * (1.0 - p) / n);
                        rep.ci95 = wilson(c.ruins, total.paths);
                        rep.truncation_bias = match self.cfg.horizon {
                            HorizonPolicy::Fixed { .. } => None,
                            _ => Some(c.bias / n),
                        };
                        rep.horizon = Some(horizon);
                        rep
                    }
                    Mode::Hybrid { n0, asymptotics } => {
                        let mean = c.sum_value / n;
                        let var = if total.paths > 1 {
                            ((c.sum_value_sq - n * mean * mean) / (n - 1.0)).max(0.0)
                        } else {
                            0.0
                        };
                        let mut rep =
                            EstimateReport::exact(Method::Hybrid, u, self.model.lambda(), mean)
                                .with_error(math::sqrt(var / n), 0.0, 1.0);
                        rep.clamped = c.clamped;
                        rep.horizon = Some(HorizonInfo {
                            max_years: *n0,
                            mean_years: total.years as f64 / n,
                            exact: false,
                        });
                        rep.hypotheses = asymptotics.hypotheses.clone();
                        rep.rate = Some(asymptotics.rate);
                        rep.notes.push(format!(
                            "n0 = {n0}; {} paths ruined within n0 years ({:.6e})",
                            c.ruins,
                            c.ruins as f64 / n
                        ));
                        rep
                    }
                };
                rep.replications = total.paths;
                rep.seed = Some(self.cfg.seed);
                rep.ruin_time = ruin_time;
                if self.uses_event_kernel() {
                    rep.notes
                        .push("event-driven sampler: no horizon truncation".into());
                }
                rep
            })
            .collect()
    }

    /// Runs every chunk sequentially.
    pub fn run(&self) -> Vec<EstimateReport> {
        let tallies: Vec<Tally> = (0..self.chunk_count()).map(|i| self.run_chunk(i)).collect();
        self.finish(&tallies)
    }

    fn horizon_cap(&self) -> u32 {
        match self.cfg.horizon {
            HorizonPolicy::Fixed { years } => years,
            _ => MAX_YEARS,
        }
    }

    fn event_path(
        &self,
        decay: f64,
        (mi, si, mr, sr): (f64, f64, f64, f64),
        rng: &mut RngStream,
    ) -> PathResult {
        let lambda = self.model.lambda();
        let rule = self.model.rule();
        let claim = self.model.claim();
        let cap = self.horizon_cap();
        let k = self.grid.len();
        let mut passage = alloc::vec![0u32; k];
        let mut next_u = 0usize;
        let mut n: u32 = 0;
        let mut y = 0.0f64;
        let mut log_a = 0.0f64;
        let tail_factor = 1.0 / -math::exp_m1(-decay);
        let normal = |rng: &mut RngStream, mean: f64, sd: f64, years: f64| -> f64 {
            if sd == 0.0 {
                years * mean
            } else {
                let z: f64 = StandardNormal.sample(rng);
                years * mean + math::sqrt(years) * sd * z
            }
        };
        let gap_mean = mi - mr;
        let gap_sd = math::sqrt(si * si + sr * sr);
        let mut end_year = cap;
        while next_u < k {
            // expected number of claims in years n+1, n+2, ...
            let remaining = lambda * math::exp(-f64::from(n + 1) * decay) * tail_factor;
            let e: f64 = Exp1.sample(rng);
            let next = if e >= remaining {
                None
            } else {
                let j = math::ceil(-math::ln_1p(-e / remaining) / decay).max(1.0);
                Some(f64::from(n) + j)
            };
            match next {
                Some(t) if t <= f64::from(cap) => {
                    let t = t as u32;
                    let gap = f64::from(t - n - 1);
                    if gap > 0.0 {
                        log_a += normal(rng, gap_mean, gap_sd, gap);
                    }
                    let li = normal(rng, mi, si, 1.0);
                    let lr = normal(rng, mr, sr, 1.0);
                    let count =
                        sample_poisson_positive(lambda * math::exp(-f64::from(t) * decay), rng);
                    let v = claim.sample_sum(count, rng);
                    let increment = match rule {
                        TransitionRule::ClaimsStartOfYear => math::exp(log_a + li) * v,
                        TransitionRule::ClaimsEndOfYear => math::exp(log_a + li - lr) * v,
                    };
                    log_a += li - lr;
                    y += increment;
                    n = t;
                    while next_u < k && y > self.grid[next_u] {
                        passage[next_u] = t;
                        next_u += 1;
                    }
                }
                other => {
                    // no further claim inside the horizon
                    if other.is_some() || matches!(self.cfg.horizon, HorizonPolicy::Fixed { .. }) {
                        let gap = f64::from(cap - n);
                        if gap > 0.0 && matches!(self.mode, Mode::Hybrid { .. }) {
                            log_a += normal(rng, gap_mean, gap_sd, gap);
                        }
                        n = cap;
                    } else {
                        end_year = n;
                    }
                    break;
                }
            }
        }
        let years = if next_u < k {
            n.max(end_year.min(n))
        } else {
            n
        };
        let restart = match &self.mode {
            Mode::Hybrid { n0, .. } => Some((
                y,
                math::exp(log_a),
                lambda * math::exp(-f64::from(*n0) * decay),
            )),
            Mode::Ruin => None,
        };
        PathResult {
            years,
            truncated: false,
            passage,
            bias: alloc::vec![0.0; k],
            restart,
        }
    }

    fn yearly_path(
        &self,
        runoff_tail: Option<&RunoffTail>,
        growth_tail: Option<&GrowthTail>,
        rng: &mut RngStream,
    ) -> PathResult {
        let k = self.grid.len();
        let cap = self.horizon_cap();
        let mut passage = alloc::vec![0u32; k];
        let mut bias = alloc::vec![0.0; k];
        let mut next_u = 0usize;
        let mut s = self.model.start_path(0.0, rng);
        let mut truncated = false;
        while next_u < k {
            if s.year >= cap {
                if !matches!(self.cfg.horizon, HorizonPolicy::Fixed { .. }) {
                    truncated = true;
                    bias[next_u..].iter_mut().for_each(|b| *b = 1.0);
                }
                break;
            }
            self.model.simulate_year(&mut s, rng);
            while next_u < k && s.discounted_claims > self.grid[next_u] {
                passage[next_u] = s.year;
                next_u += 1;
            }
            if next_u == k {
                break;
            }
            match (self.cfg.horizon, &self.model) {
                (HorizonPolicy::AdaptiveRunoff { intensity_floor }, ModelSpec::Runoff(m)) => {
                    let tail = runoff_tail.expect("prepared for run-off");
                    let (mass, discounted) =
                        runoff_remaining(m, tail, s.year as usize, &s.structure);
                    if mass < intensity_floor {
                        truncated = true;
                        let expected = s.discount_product * tail.lead * discounted;
                        for (b, &u) in bias[next_u..].iter_mut().zip(&self.grid[next_u..]) {
                            let head = u - s.discounted_claims;
                            *b = if head > 0.0 {
                                (expected / head).min(1.0)
                            } else {
                                1.0
                            };
                        }
                        break;
                    }
                }
                (HorizonPolicy::AdaptiveGrowth { discount_floor }, ModelSpec::Growth(_)) => {
                    let tail = growth_tail.expect("prepared for growth");
                    let d = s.discount_product * s.growth_product;
                    let u_max = self.grid[k - 1];
                    if d < discount_floor * (1.0 / u_max).min(1.0) {
                        truncated = true;
                        let scale = math::powf(d, tail.alpha) * tail.k;
                        for (b, &u) in bias[next_u..].iter_mut().zip(&self.grid[next_u..]) {
                            let head = u - s.discounted_claims;
                            *b = if head > 0.0 {
                                (scale / math::powf(head, tail.alpha)).min(1.0)
                            } else {
                                1.0
                            };
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        let restart = match (&self.mode, &self.model) {
            (Mode::Hybrid { n0, .. }, ModelSpec::Runoff(m)) => Some((
                s.discounted_claims,
                s.discount_product,
                m.lambda
                    * if *n0 == 0 {
                        1.0
                    } else {
                        m.xi(*n0 as usize, &s.structure)
                    },
            )),
            _ => None,
        };
        PathResult {
            years: s.year,
            truncated,
            passage,
            bias,
            restart,
        }
    }
}

/// `(λ Σ_{m>n} ξ_m, Σ_{m>n} ξ_m (EA)^{m−1−n})` for the path's structure draws.
fn runoff_remaining(m: &RunoffModel, tail: &RunoffTail, n: usize, structure: &[f64]) -> (f64, f64) {
    match &m.mixing {
        Mixing::DeterministicExp { decay } => {
            let first = math::exp(-((n + 1) as f64) * decay);
            let mass = m.lambda * first / -math::exp_m1(-decay);
            let ratio = tail.ea * math::exp(-decay);
            let discounted = if ratio < 1.0 {
                first / (1.0 - ratio)
            } else {
                f64::INFINITY
            };
            (mass, discounted)
        }
        Mixing::ReportingDelay { exposure } => {
            let d = exposure.past_years();
            let levels = &exposure.params().levels;
            let get = |v: &Vec<f64>, k: usize| v.get(k).copied().unwrap_or(0.0);
            let mut mass = 0.0;
            let mut discounted = 0.0;
            for (j, (pi, q)) in levels.iter().zip(structure).enumerate() {
                let k = n + d - j;
                mass += pi * q * get(&tail.mass_suffix, k);
                discounted += pi * q * get(&tail.discounted_suffix, k);
            }
            (m.lambda * mass, discounted)
        }
    }
}

fn sorted_grid(us: &[f64]) -> Result<Vec<f64>, McError> {
    if us.is_empty() || us.iter().any(|u| !(u.is_finite() && *u >= 0.0)) {
        return Err(McError::BadCapital);
    }
    let mut g = us.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

fn prepare(model: &ModelSpec, cfg: &McConfig, truncating: bool) -> Result<Prepared, McError> {
    match (cfg.horizon, model) {
        (HorizonPolicy::AdaptiveRunoff { intensity_floor: f }, ModelSpec::Runoff(_))
        | (HorizonPolicy::AdaptiveGrowth { discount_floor: f }, ModelSpec::Growth(_)) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(McError::BadFloor(f));
            }
        }
        (HorizonPolicy::Fixed { .. }, _) => {}
        (HorizonPolicy::AdaptiveRunoff { .. }, _) => {
            return Err(McError::PolicyMismatch("adaptive_runoff"))
        }
        (HorizonPolicy::AdaptiveGrowth { .. }, _) => {
            return Err(McError::PolicyMismatch("adaptive_growth"))
        }
    }
    if let (Kernel::Auto, ModelSpec::Runoff(m)) = (cfg.kernel, model) {
        if let (Mixing::DeterministicExp { decay }, Some((mi, vi, mr, vr))) =
            (&m.mixing, m.economy.gaussian_logs())
        {
            return Ok(Prepared::Event {
                decay: *decay,
                mi,
                si: math::sqrt(vi),
                mr,
                sr: math::sqrt(vr),
            });
        }
    }
    let runoff_tail = match model {
        ModelSpec::Runoff(m) if truncating => Some(runoff_tail(m)),
        _ => None,
    };
    let growth_tail = match model {
        ModelSpec::Growth(g)
            if truncating && matches!(cfg.horizon, HorizonPolicy::AdaptiveGrowth { .. }) =>
        {
            Some(growth_tail(g)?)
        }
        _ => None,
    };
    Ok(Prepared::Yearly {
        runoff_tail,
        growth_tail,
    })
}

fn runoff_tail(m: &RunoffModel) -> RunoffTail {
    let ea = math::exp(m.economy.discount_cgf().eval(1.0));
    let lead = m.lambda * m.economy.inflation_law().mean() * m.claim.mean();
    let (mass_suffix, discounted_suffix) = match &m.mixing {
        Mixing::DeterministicExp { .. } => (Vec::new(), Vec::new()),
        Mixing::ReportingDelay { exposure } => {
            let b = exposure.cached_weights();
            let len = b.len() + 1;
            let mut mass = alloc::vec![0.0; len];
            let mut disc = alloc::vec![0.0; len];
            // index k: Σ_{m>k} b_m and Σ_{m≥1} b_{k+m} EA^{m−1}; b_m = b[m−1]
            for k in (0..len - 1).rev() {
                mass[k] = mass[k + 1] + b[k];
                disc[k] = b[k] + ea * disc[k + 1];
            }
            (mass, disc)
        }
    };
    RunoffTail {
        ea,
        lead,
        mass_suffix,
        discounted_suffix,
    }
}

fn growth_tail(g: &GrowthModel) -> Result<GrowthTail, McError> {
    let expr = g.rate_cgf();
    let rho = solve_rate(&expr, 1e4).map_err(EstimatorError::from)?.rate;
    let alpha = (0.5 * rho).min(1.0);
    let lm = |d: &crate::distributions::Distribution| d.log_moment(alpha).unwrap_or(f64::INFINITY);
    let log_k = alpha * math::ln(g.lambda * g.claim.mean())
        + lm(&g.structure)
        + lm(&g.economy.inflation_law())
        + lm(&g.growth);
    Ok(GrowthTail {
        alpha,
        k: math::exp(log_k) / -math::exp_m1(expr.eval(alpha)),
    })
}

/// Wilson score interval at 95%.
fn wilson(successes: u64, n: u64) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * math::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom;
    (
        (centre - half).max(0.0).min(p),
        (centre + half).min(1.0).max(p),
    )
}

/// Smallest `n_0 ≥ 0` with `λ E ξ_{n_0} ≤ λ_0` (`ξ_0 := 1`).
pub fn choose_n0(model: &RunoffModel, lambda0: f64) -> u32 {
    let lambda = model.lambda;
    if lambda <= lambda0 {
        return 0;
    }
    match &model.mixing {
        Mixing::DeterministicExp { decay } => {
            let mut n = math::ceil(math::ln(lambda / lambda0) / decay).max(0.0) as u32;
            while lambda * math::exp(-f64::from(n) * decay) > lambda0 {
                n += 1;
            }
            while n > 0 && lambda * math::exp(-f64::from(n - 1) * decay) <= lambda0 {
                n -= 1;
            }
            n
        }
        Mixing::ReportingDelay { exposure } => {
            let mut n = 1u32;
            while n < MAX_YEARS && lambda * exposure.expected_xi(n as usize) > lambda0 {
                n += 1;
            }
            n
        }
    }
}

/// Crude Monte Carlo ruin frequency at one capital.
pub fn mc_ruin(model: &ModelSpec, u: f64, cfg: McConfig) -> Result<EstimateReport, McError> {
    Ok(RuinJob::new(model, &[u], cfg)?.run().remove(0))
}

/// Crude Monte Carlo over a grid of capitals on shared paths.
pub fn mc_ruin_grid(
    model: &ModelSpec,
    us: &[f64],
    cfg: McConfig,
) -> Result<Vec<EstimateReport>, McError> {
    Ok(RuinJob::new(model, us, cfg)?.run())
}

/// The hybrid estimator at one capital.
pub fn hybrid_ruin(
    model: &RunoffModel,
    u: f64,
    lambda0: f64,
    cfg: McConfig,
) -> Result<EstimateReport, McError> {
    Ok(RuinJob::hybrid(model, &[u], lambda0, cfg)?.run().remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Distribution;
    use crate::model::{reference_runoff, Economy};
    use crate::runoff::{DelayLaw, DelayModel, RunoffExposure};
    use alloc::vec;

    fn cfg(reps: u64, seed: u64) -> McConfig {
        McConfig::new(reps, seed)
    }

    #[test]
    fn n0_examples() {
        assert_eq!(choose_n0(&reference_runoff(100.0), 0.1), 70);
        assert_eq!(choose_n0(&reference_runoff(0.05), 0.1), 0);
        let mut m = reference_runoff(100.0);
        m.mixing = Mixing::DeterministicExp { decay: 10.0 };
        assert_eq!(choose_n0(&m, 0.1), 1);
    }

    #[test]
    fn huge_capital_never_ruined() {
        let m = ModelSpec::Runoff(reference_runoff(0.1));
        let r = mc_ruin(&m, 1e9, cfg(10_000, 1)).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(r.ci95.0 <= r.estimate && r.estimate <= r.ci95.1);
    }

    #[test]
    fn event_kernel_matches_yearly_kernel() {
        // same law, different sampling: compare within combined error
        let m = ModelSpec::Runoff(reference_runoff(2.0));
        let us = [5.0, 20.0];
        let event = RuinJob::new(&m, &us, cfg(60_000, 2)).unwrap();
        assert!(event.uses_event_kernel());
        let yearly = RuinJob::new(
            &m,
            &us,
            McConfig {
                kernel: Kernel::Yearly,
                ..cfg(60_000, 3)
            },
        )
        .unwrap();
        assert!(!yearly.uses_event_kernel());
        for (a, b) in event.run().iter().zip(yearly.run()) {
            let se = math::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
            assert!(
                (a.estimate - b.estimate).abs() < 4.0 * se,
                "{} vs {}",
                a.estimate,
                b.estimate
            );
            assert!(b.truncation_bias.unwrap() < 1e-3 * b.estimate);
            let (ta, tb) = (a.ruin_time.unwrap(), b.ruin_time.unwrap());
            assert!(
                (ta.mean_year - tb.mean_year).abs()
                    < 4.0 * (ta.std_error_scaled + tb.std_error_scaled) * math::ln(a.u) + 0.5
            );
        }
    }

    #[test]
    fn event_kernel_end_of_year_rule() {
        let base = reference_runoff(2.0);
        let m = ModelSpec::Runoff(RunoffModel {
            rule: TransitionRule::ClaimsEndOfYear,
            ..base
        });
        let a = RuinJob::new(&m, &[10.0], cfg(50_000, 4))
            .unwrap()
            .run()
            .remove(0);
        let b = RuinJob::new(
            &m,
            &[10.0],
            McConfig {
                kernel: Kernel::Yearly,
                ..cfg(50_000, 5)
            },
        )
        .unwrap()
        .run()
        .remove(0);
        let se = math::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
        assert!((a.estimate - b.estimate).abs() < 4.0 * se);
    }

    #[test]
    fn monotone_in_capital() {
        let m = ModelSpec::Runoff(reference_runoff(1.0));
        let us = [1.0, 2.0, 5.0, 10.0, 50.0];
        let r = mc_ruin_grid(&m, &us, cfg(20_000, 6)).unwrap();
        for w in r.windows(2) {
            assert!(w[1].estimate <= w[0].estimate);
        }
    }

    #[test]
    fn chunking_is_invisible() {
        let m = ModelSpec::Runoff(reference_runoff(1.0));
        let job = RuinJob::new(&m, &[3.0, 8.0], cfg(3 * CHUNK + 17, 7)).unwrap();
        let forward: Vec<Tally> = (0..job.chunk_count()).map(|i| job.run_chunk(i)).collect();
        // chunks computed out of order, reduced in order
        let mut backward: Vec<(usize, Tally)> = (0..job.chunk_count())
            .rev()
            .map(|i| (i, job.run_chunk(i)))
            .collect();
        backward.sort_by_key(|p| p.0);
        let backward: Vec<Tally> = backward.into_iter().map(|p| p.1).collect();
        assert_eq!(job.finish(&forward), job.finish(&backward));
        assert_eq!(job.finish(&forward)[0].replications, 3 * CHUNK + 17);
    }

    #[test]
    fn hybrid_ruin_component_matches_mc_within_n0() {
        let model = reference_runoff(100.0);
        let spec = ModelSpec::Runoff(model.clone());
        let c = cfg(5_000, 8);
        let hybrid = RuinJob::hybrid(&model, &[5_000.0], 0.1, c).unwrap();
        let n0 = hybrid.n0().unwrap();
        let mc = RuinJob::new(&spec, &[5_000.0], c).unwrap();
        // per path: ruined within n0 in the hybrid ⇔ full path ruined at T ≤ n0
        let mut hybrid_ruins = 0u64;
        let mut early_ruins = 0u64;
        for j in 0..c.replications {
            let mut rng = RngStream::new(c.seed, j);
            let Prepared::Event {
                decay,
                mi,
                si,
                mr,
                sr,
            } = hybrid.prepared.clone()
            else {
                panic!()
            };
            let h = hybrid.event_path(decay, (mi, si, mr, sr), &mut rng);
            let mut rng = RngStream::new(c.seed, j);
            let f = mc.event_path(decay, (mi, si, mr, sr), &mut rng);
            let hr = h.passage[0] > 0;
            let fr = f.passage[0] > 0 && f.passage[0] <= n0;
            assert_eq!(hr, fr, "path {j}");
            hybrid_ruins += u64::from(hr);
            early_ruins += u64::from(fr);
        }
        assert_eq!(hybrid_ruins, early_ruins);
    }

    #[test]
    fn hybrid_without_simulation_phase_is_closed_form() {
        let model = reference_runoff(0.05);
        let a = RunoffAsymptotics::new(&model).unwrap();
        let r = hybrid_ruin(&model, 30.0, 0.1, cfg(1_000, 9)).unwrap();
        let exact = a.evaluate(0.05, 30.0);
        assert!((r.estimate / exact - 1.0).abs() < 1e-12);
        assert!(r.std_error < 1e-12 * exact);
        // tiny capital: the closed form exceeds one and is clamped
        let r = hybrid_ruin(&model, 0.1, 0.1, cfg(1_000, 9)).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert_eq!(r.clamped, 1_000);
    }

    #[test]
    fn exposure_model_truncation_bound() {
        let exposure = RunoffExposure::new(
            vec![0.7, 1.0],
            Distribution::gamma(3.0, 3.0).unwrap(),
            DelayModel::new(DelayLaw::Gamma {
                shape: 2.0,
                rate: 0.4,
            })
            .unwrap(),
        )
        .unwrap();
        let m = RunoffModel {
            mixing: Mixing::ReportingDelay { exposure },
            ..reference_runoff(3.0)
        };
        let spec = ModelSpec::Runoff(m);
        let r = mc_ruin_grid(&spec, &[2.0, 10.0], cfg(20_000, 10)).unwrap();
        for rep in &r {
            assert!(rep.estimate > 0.0);
            let bias = rep.truncation_bias.unwrap();
            assert!(
                bias <= 0.01 * rep.estimate,
                "bias {bias} vs {}",
                rep.estimate
            );
        }
        // a generous fixed horizon agrees with the adaptive one
        let fixed = mc_ruin(
            &spec,
            2.0,
            cfg(20_000, 10).with_horizon(HorizonPolicy::Fixed { years: 400 }),
        )
        .unwrap();
        assert!(fixed.truncation_bias.is_none());
        assert!((fixed.estimate - r[0].estimate).abs() <= 2.0 / 20_000.0);
    }

    #[test]
    fn growth_policy_checks() {
        let g = crate::model::GrowthModel {
            lambda: 10.0,
            loading: 0.2,
            growth: Distribution::log_normal(0.0, 0.04).unwrap(),
            structure: Distribution::gamma(4.0, 4.0).unwrap(),
            economy: Economy::Independent {
                inflation: Distribution::constant(math::exp(0.02)).unwrap(),
                returns: Distribution::log_normal(0.32, 0.36).unwrap(),
            },
            claim: Distribution::exponential(1.0).unwrap(),
            rule: TransitionRule::ClaimsStartOfYear,
        };
        let spec = ModelSpec::Growth(g);
        assert!(matches!(
            RuinJob::new(&spec, &[10.0], cfg(10, 0)),
            Err(McError::PolicyMismatch(_))
        ));
        let c = cfg(4_000, 11).with_horizon(HorizonPolicy::AdaptiveGrowth {
            discount_floor: 1e-6,
        });
        let r = mc_ruin_grid(&spec, &[20.0, 100.0], c).unwrap();
        for rep in &r {
            assert!(rep.truncation_bias.unwrap() < 0.05 * rep.estimate.max(1e-3));
            assert!(!rep.horizon.unwrap().exact);
        }
        assert!(r[0].estimate >= r[1].estimate);
    }

    #[test]
    fn bad_inputs() {
        let m = ModelSpec::Runoff(reference_runoff(1.0));
        assert!(matches!(
            RuinJob::new(&m, &[], cfg(10, 0)),
            Err(McError::BadCapital)
        ));
        assert!(matches!(
            RuinJob::new(&m, &[1.0], cfg(0, 0)),
            Err(McError::NoReplications)
        ));
        let c = cfg(10, 0).with_horizon(HorizonPolicy::AdaptiveRunoff {
            intensity_floor: 2.0,
        });
        assert!(matches!(
            RuinJob::new(&m, &[1.0], c),
            Err(McError::BadFloor(_))
        ));
    }
}
