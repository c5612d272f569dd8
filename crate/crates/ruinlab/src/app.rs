//! Experiment orchestration behind the `run`, `reproduce` and `tail` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ruinlab_core::estimators::{
    compound_tail, ols_slope, single_claim_decomposition, ChainConfig, CompoundTailProblem,
    EstimateReport, EstimatorError, GrowthAsymptotics, Method, RunoffAsymptotics,
};
use ruinlab_core::math;
use ruinlab_core::model::{GrowthModel, ModelSpec, RunoffModel};
use ruinlab_core::montecarlo::{McError, RuinJob};
use ruinlab_core::rng::RngStream;
use serde::Serialize;

use crate::config::{EstimatorSpec, ExperimentConfig, TraceSpec};
use crate::driver::run_job;
use crate::output::{report_text, write_rows, Row};
use crate::presets;
use crate::AppError;

pub fn estimator_error(e: EstimatorError) -> AppError {
    match e {
        EstimatorError::Model(_)
        | EstimatorError::BurnInTooShort(_)
        | EstimatorError::TooFewSamples { .. } => AppError::Schema(e.to_string()),
        _ => AppError::Hypothesis(e.to_string()),
    }
}

pub fn mc_error(e: McError) -> AppError {
    match e {
        McError::Estimator(e) => estimator_error(e),
        McError::NotRunoff => AppError::Hypothesis(e.to_string()),
        _ => AppError::Schema(e.to_string()),
    }
}

enum Plan {
    Mc,
    Hybrid {
        model: RunoffModel,
        lambda0: f64,
    },
    Runoff {
        model: RunoffModel,
        asymptotics: RunoffAsymptotics,
    },
    Growth {
        model: GrowthModel,
        chain: ChainConfig,
        chains: usize,
    },
    Compound(CompoundTailProblem),
    Decomposition {
        model: RunoffModel,
        n_max: usize,
        mc_draws: usize,
        seed: u64,
    },
}

fn runoff_only<'a>(model: &'a ModelSpec, what: &str) -> Result<&'a RunoffModel, AppError> {
    match model {
        ModelSpec::Runoff(m) => Ok(m),
        ModelSpec::Growth(_) => Err(AppError::Hypothesis(format!(
            "{what} needs a run-off model"
        ))),
    }
}

/// Checks hypotheses and builds whatever can be built without simulating.
fn plan(model: &ModelSpec, e: &EstimatorSpec) -> Result<Plan, AppError> {
    Ok(match e {
        EstimatorSpec::Mc => Plan::Mc,
        EstimatorSpec::Hybrid { lambda0 } => {
            let m = runoff_only(model, "the hybrid estimator")?;
            RunoffAsymptotics::new(m).map_err(estimator_error)?;
            Plan::Hybrid {
                model: m.clone(),
                lambda0: *lambda0,
            }
        }
        EstimatorSpec::AsymptoticRunoff => {
            let m = runoff_only(model, "asymptotic_runoff")?;
            Plan::Runoff {
                asymptotics: RunoffAsymptotics::new(m).map_err(estimator_error)?,
                model: m.clone(),
            }
        }
        EstimatorSpec::AsymptoticGrowth { chain, chains } => {
            let ModelSpec::Growth(g) = model else {
                return Err(AppError::Hypothesis(
                    "asymptotic_growth needs a growth model".into(),
                ));
            };
            GrowthAsymptotics::check(g).map_err(estimator_error)?;
            Plan::Growth {
                model: g.clone(),
                chain: *chain,
                chains: *chains,
            }
        }
        EstimatorSpec::CompoundTail { problem } => Plan::Compound(problem.clone()),
        EstimatorSpec::Decomposition {
            n_max,
            mc_draws,
            seed,
        } => Plan::Decomposition {
            model: runoff_only(model, "decomposition")?.clone(),
            n_max: *n_max,
            mc_draws: *mc_draws,
            seed: *seed,
        },
    })
}

fn execute(
    plan: &Plan,
    model: &ModelSpec,
    cfg: &ExperimentConfig,
) -> Result<Vec<EstimateReport>, AppError> {
    let lambda = model.lambda();
    let workers = cfg.mc.workers;
    Ok(match plan {
        Plan::Mc => run_job(
            &RuinJob::new(model, &cfg.u, cfg.mc).map_err(mc_error)?,
            workers,
        ),
        Plan::Hybrid { model, lambda0 } => run_job(
            &RuinJob::hybrid(model, &cfg.u, *lambda0, cfg.mc).map_err(mc_error)?,
            workers,
        ),
        Plan::Runoff { model, asymptotics } => cfg
            .u
            .iter()
            .map(|&u| asymptotics.ruin_probability(model, u))
            .collect(),
        Plan::Growth {
            model,
            chain,
            chains,
        } => {
            let fit = GrowthAsymptotics::fit(model, *chain, *chains).map_err(estimator_error)?;
            cfg.u
                .iter()
                .map(|&u| fit.ruin_probability(u, lambda))
                .collect()
        }
        Plan::Compound(problem) => cfg
            .u
            .iter()
            .map(|&u| {
                let c = compound_tail(problem, u).map_err(estimator_error)?;
                let mut r = EstimateReport::exact(Method::CompoundTail, u, lambda, c.refined);
                r.notes.push(format!(
                    "rho = {:.12}, mu = {:.12}, e^(-rho u) = {:.6e}",
                    c.rho, c.mu, c.log_rate_estimate
                ));
                Ok(r)
            })
            .collect::<Result<_, AppError>>()?,
        Plan::Decomposition {
            model,
            n_max,
            mc_draws,
            seed,
        } => {
            cfg.u
                .iter()
                .map(|&u| {
                    let d = single_claim_decomposition(model, u, *n_max, *mc_draws, *seed)
                        .map_err(estimator_error)?;
                    let mut r = EstimateReport::exact(Method::Decomposition, u, lambda, d.sum);
                    r.notes.push(format!(
                    "{} terms, largest at year {}, omitted terms at most {:.3e}, {} first factors",
                    d.terms.len(),
                    d.argmax,
                    d.truncation_bound,
                    if d.exact_factors { "quadrature" } else { "simulated" }
                ));
                    Ok(r)
                })
                .collect::<Result<_, AppError>>()?
        }
    })
}

pub struct RunOutput {
    pub rows: Vec<Row>,
    pub reports: Vec<EstimateReport>,
    pub text: String,
}

impl RunOutput {
    pub fn csv(&self) -> String {
        let mut buf = Vec::new();
        write_rows(&mut buf, &self.rows).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    /// Reports for one method, in row order.
    pub fn method(&self, m: Method) -> Vec<&EstimateReport> {
        self.reports.iter().filter(|r| r.method == m).collect()
    }
}

/// Runs every estimator on every `(λ, u)`. All hypotheses are checked before any
/// simulation starts. Output files named in the config are written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, AppError> {
    cfg.validate()?;
    let mut plans = Vec::new();
    for lambda in cfg.lambdas() {
        let model = cfg.model.with_lambda(lambda);
        let ps = cfg
            .estimators
            .iter()
            .map(|e| plan(&model, e))
            .collect::<Result<Vec<_>, _>>()?;
        plans.push((model, ps));
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (model, ps) in &plans {
        for p in ps {
            let t0 = Instant::now();
            let rs = execute(p, model, cfg)?;
            let ms = cfg.outputs.timing.then(|| t0.elapsed().as_secs_f64() * 1e3);
            rows.extend(rs.iter().map(|r| Row::from_report(r, ms)));
            reports.extend(rs);
        }
    }
    let text = report_text(&cfg.name, cfg.mc.seed, cfg.mc.replications, &reports);
    let out = RunOutput {
        rows,
        reports,
        text,
    };
    if let Some(p) = &cfg.outputs.csv {
        let f = create(p)?;
        write_rows(f, &out.rows)?;
    }
    if let Some(p) = &cfg.outputs.report {
        fs::write(p, &out.text).map_err(|e| AppError::Io(format!("{}: {e}", p.display())))?;
    }
    if let Some(t) = &cfg.outputs.trace {
        write_trace(cfg, t)?;
    }
    Ok(out)
}

fn create(p: &Path) -> Result<fs::File, AppError> {
    fs::File::create(p).map_err(|e| AppError::Io(format!("{}: {e}", p.display())))
}

#[derive(Serialize)]
struct TraceRow {
    path: u64,
    year: u32,
    claims: u64,
    total: f64,
    capital: f64,
    discounted_claims: f64,
    discount_product: f64,
}

/// Year-by-year records of the first `t.paths` replications at the smallest `u`.
fn write_trace(cfg: &ExperimentConfig, t: &TraceSpec) -> Result<(), AppError> {
    let u = cfg.u.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w = csv::Writer::from_writer(create(&t.path)?);
    for j in 0..t.paths {
        let mut rng = RngStream::new(cfg.mc.seed, j);
        let mut s = cfg.model.start_path(u, &mut rng);
        for _ in 0..t.years {
            let y = cfg.model.simulate_year(&mut s, &mut rng);
            w.serialize(TraceRow {
                path: j,
                year: y.year,
                claims: y.claims,
                total: y.total,
                capital: s.capital,
                discounted_claims: s.discounted_claims,
                discount_product: s.discount_product,
            })
            .map_err(|e| AppError::Io(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| AppError::Io(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub u: f64,
    pub mc: f64,
    pub asymptotic: f64,
    pub ratio: f64,
}

pub struct TailOutput {
    pub rows: Vec<TailRow>,
    /// Least-squares slope of `log Ê` against `log u`; absent for a single `u`.
    pub slope: Option<f64>,
}

impl TailOutput {
    pub fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

/// Monte Carlo and closed-form ruin probabilities over the config's `u` grid
/// (first `λ` only).
pub fn tail(cfg: &ExperimentConfig) -> Result<TailOutput, AppError> {
    cfg.validate()?;
    let lambda = cfg.lambdas()[0];
    let spec = cfg.model.with_lambda(lambda);
    let model = runoff_only(&spec, "tail data")?;
    let asymptotics = RunoffAsymptotics::new(model).map_err(estimator_error)?;
    let job = RuinJob::new(&spec, &cfg.u, cfg.mc).map_err(mc_error)?;
    let reports = run_job(&job, cfg.mc.workers);
    let rows: Vec<TailRow> = reports
        .iter()
        .map(|r| {
            let a = asymptotics.evaluate(lambda, r.u);
            TailRow {
                u: r.u,
                mc: r.estimate,
                asymptotic: a,
                ratio: r.estimate / a,
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mc > 0.0)
        .map(|r| (math::ln(r.u), math::ln(r.mc)))
        .collect();
    let slope = (rows.len() >= 2 && pts.len() >= 2).then(|| ols_slope(&pts));
    if let Some(p) = &cfg.outputs.csv {
        fs::write(
            p,
            TailOutput {
                rows: rows.clone(),
                slope,
            }
            .csv(),
        )
        .map_err(|e| AppError::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(TailOutput { rows, slope })
}

/// Runs a bundled table preset and formats the comparison table.
pub fn reproduce(
    table: &str,
    paper_scale: bool,
    workers: usize,
) -> Result<(RunOutput, String), AppError> {
    let mut cfg = presets::load(table)?;
    if paper_scale {
        cfg.mc.replications = presets::PAPER_SCALE_REPLICATIONS;
    }
    cfg.mc.workers = workers.max(1);
    let out = run_experiment(&cfg)?;
    let table = format_table(&cfg, &out);
    Ok((out, table))
}

fn format_table(cfg: &ExperimentConfig, out: &RunOutput) -> String {
    let closed = out.method(Method::AsymptoticRunoff);
    let mc = out.method(Method::Mc);
    let hybrid = out.method(Method::Hybrid);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} (lambda = {}, {} replications, seed {})",
        cfg.name,
        cfg.lambdas()[0],
        cfg.mc.replications,
        cfg.mc.seed
    );
    let _ = write!(
        s,
        "{:>10} {:>12} {:>12} {:>10} {:>8}",
        "u", "E1", "E2", "se(E2)", "E2/E1"
    );
    if !hybrid.is_empty() {
        let _ = write!(s, " {:>12} {:>10} {:>8}", "E3", "se(E3)", "E3/E2");
    }
    let _ = writeln!(s);
    for (k, (a, m)) in closed.iter().zip(&mc).enumerate() {
        let _ = write!(
            s,
            "{:>10} {:>12.3e} {:>12.3e} {:>10.2e} {:>8.3}",
            a.u,
            a.estimate,
            m.estimate,
            m.std_error,
            m.estimate / a.estimate
        );
        if let Some(h) = hybrid.get(k) {
            let _ = write!(
                s,
                " {:>12.3e} {:>10.2e} {:>8.3}",
                h.estimate,
                h.std_error,
                h.estimate / m.estimate
            );
        }
        let _ = writeln!(s);
    }
    s
}
