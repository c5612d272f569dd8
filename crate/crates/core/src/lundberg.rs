//! Cumulant-function algebra and the rate equations.
//!
//! A [`CgfExpr`] is a sum of independent log-moment and cumulant terms plus
//! constants, e.g. `Λ_A(α) + Λ_g(α)` for the growth regime or
//! `Λ_A(α) + Λ_ξ(1)` for a run-off book. [`solve_rate`] finds
//! `sup{α ≥ 0 : Λ(α) ≤ 0}` and [`legendre`] evaluates the convex conjugate.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{Distribution, DistributionError};

/// Absolute tolerance on `|Λ(ρ)|` for interior roots.
pub const RATE_VALUE_TOLERANCE: f64 = 1e-10;
const FIRST_PROBE: f64 = 1e-6;
const BISECTION_STEPS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum Term {
    /// `log E X^{scale·α}`; the law must live on `(0, ∞)`.
    LogMoment {
        dist: Distribution,
        scale: f64,
    },
    /// `log E e^{scale·α·X}`.
    Cgf {
        dist: Distribution,
        scale: f64,
    },
    Constant {
        value: f64,
    },
}

impl Term {
    fn eval(&self, alpha: f64) -> f64 {
        match self {
            // support is checked when the term enters an expression
            Self::LogMoment { dist, scale } => dist.log_moment(scale * alpha).unwrap_or(f64::NAN),
            Self::Cgf { dist, scale } => dist.cgf(scale * alpha),
            Self::Constant { value } => *value,
        }
    }

    fn derivative(&self, alpha: f64) -> f64 {
        match self {
            Self::LogMoment { dist, scale } => {
                scale
                    * dist
                        .log_moment_derivative(scale * alpha)
                        .unwrap_or(f64::NAN)
            }
            Self::Cgf { dist, scale } => scale * dist.cgf_derivative(scale * alpha),
            Self::Constant { .. } => 0.0,
        }
    }

    /// Interval of α on which the term is finite, as `(lo, hi)`.
    fn domain(&self) -> (f64, f64) {
        let (lo, hi) = match self {
            Self::LogMoment { dist, .. } => {
                dist.log_moment_domain().unwrap_or((f64::NAN, f64::NAN))
            }
            Self::Cgf { dist, .. } => {
                let (lo, hi, _) = dist.cgf_domain();
                (lo, hi)
            }
            Self::Constant { .. } => return (f64::NEG_INFINITY, f64::INFINITY),
        };
        let scale = match self {
            Self::LogMoment { scale, .. } | Self::Cgf { scale, .. } => *scale,
            Self::Constant { .. } => 1.0,
        };
        if scale > 0.0 {
            (lo / scale, hi / scale)
        } else if scale < 0.0 {
            (hi / scale, lo / scale)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }
}

/// A composite cumulant function `Λ(α) = Σ terms`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CgfExpr {
    terms: Vec<Term>,
}

impl CgfExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn log_moment(mut self, dist: Distribution, scale: f64) -> Result<Self, DistributionError> {
        dist.validate()?;
        if !dist.is_positive() {
            return Err(DistributionError::SupportNotPositive);
        }
        self.terms.push(Term::LogMoment { dist, scale });
        Ok(self)
    }

    pub fn cgf(mut self, dist: Distribution, scale: f64) -> Result<Self, DistributionError> {
        dist.validate()?;
        self.terms.push(Term::Cgf { dist, scale });
        Ok(self)
    }

    pub fn constant(mut self, value: f64) -> Self {
        self.terms.push(Term::Constant { value });
        self
    }

    /// Appends every term of `other`.
    pub fn plus(mut self, other: &CgfExpr) -> Self {
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// `Λ(α)`; `+∞` as soon as one term diverges.
    pub fn eval(&self, alpha: f64) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            let v = t.eval(alpha);
            if v == f64::INFINITY {
                return f64::INFINITY;
            }
            total += v;
        }
        total
    }

    /// `Λ'(α)` from the per-family analytic derivatives.
    pub fn derivative(&self, alpha: f64) -> f64 {
        self.terms.iter().map(|t| t.derivative(alpha)).sum()
    }

    /// Interval `(lo, hi)` outside of which some term is infinite. Endpoints
    /// themselves may or may not be finite; probe with [`CgfExpr::eval`].
    pub fn domain(&self) -> (f64, f64) {
        self.terms
            .iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |(lo, hi), t| {
                let (tl, th) = t.domain();
                (lo.max(tl), hi.min(th))
            })
    }

    /// Upper end of the finite domain (the `β`-type bound).
    pub fn domain_bound(&self) -> f64 {
        self.domain().1
    }

    pub fn constant_sum(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Constant { value } => *value,
                _ => 0.0,
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    /// `Λ(ρ) = 0` with `Λ` finite beyond `ρ`.
    Interior,
    /// `Λ < 0` up to the edge of the finite domain; `ρ` is that edge.
    DomainBoundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LundbergSolution {
    pub rate: f64,
    pub kind: RateKind,
    /// `Λ'(ρ)`.
    pub derivative: f64,
    /// `1 / Λ'(ρ)`.
    pub mu: f64,
    /// Upper end of the finite domain of the expression.
    pub domain_bound: f64,
    pub value_at_rate: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RateError {
    #[error("Λ(0) = {0} > 0: the expression is not a defective cumulant function")]
    PositiveAtOrigin(f64),
    #[error("Λ is positive immediately right of 0 (no positive rate)")]
    NoPositiveRate,
    #[error("Λ stays ≤ 0 up to α = {searched_to}; the rate is unbounded or beyond the hint")]
    UnboundedRate { searched_to: f64 },
    #[error("Λ is not finite on any interval (0, ε)")]
    EmptyDomain,
}

/// Solves `ρ = sup{α ≥ 0 : Λ(α) ≤ 0}` by geometric bracketing from
/// `α = 1e-6` and bisection. `alpha_max_hint` caps the bracket expansion.
pub fn solve_rate(expr: &CgfExpr, alpha_max_hint: f64) -> Result<LundbergSolution, RateError> {
    let at_zero = expr.eval(0.0);
    if at_zero > RATE_VALUE_TOLERANCE * 1e-2 {
        return Err(RateError::PositiveAtOrigin(at_zero));
    }
    let near_zero = expr.eval(FIRST_PROBE);
    if !near_zero.is_finite() {
        return Err(RateError::EmptyDomain);
    }
    if at_zero.abs() <= RATE_VALUE_TOLERANCE * 1e-2 && expr.derivative(0.0) > 0.0 {
        return Err(RateError::NoPositiveRate);
    }
    if near_zero > 0.0 {
        return Err(RateError::NoPositiveRate);
    }

    let ok = |a: f64| {
        let v = expr.eval(a);
        v.is_finite() && v <= 0.0
    };

    let mut lo = FIRST_PROBE;
    let mut hi = 2.0 * FIRST_PROBE;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if ok(hi) {
            lo = hi;
            if hi >= alpha_max_hint {
                return Err(RateError::UnboundedRate { searched_to: hi });
            }
            hi = (2.0 * hi).min(alpha_max_hint);
        } else {
            break;
        }
    }
    let bracket = (lo, hi);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let value = expr.eval(lo);
    let kind = if expr.eval(hi).is_infinite() && value < -RATE_VALUE_TOLERANCE {
        RateKind::DomainBoundary
    } else {
        RateKind::Interior
    };
    let derivative = expr.derivative(lo);
    Ok(LundbergSolution {
        rate: lo,
        kind,
        derivative,
        mu: 1.0 / derivative,
        domain_bound: expr.domain_bound(),
        value_at_rate: value,
        bracket,
        iterations,
    })
}

/// Convex conjugate `Λ*(x) = sup_α (αx − Λ(α))`, possibly `+∞`.
///
/// The objective is concave, so its maximiser is where `Λ'(α) = x`; that point is
/// bracketed by doubling steps (stopping at the edge of the finite domain) and
/// located by bisection on the derivative.
pub fn legendre(expr: &CgfExpr, x: f64) -> f64 {
    const FAR: f64 = 1e12;
    let objective = |a: f64| a * x - expr.eval(a);
    let slope0 = expr.derivative(0.0);
    if slope0 == x {
        return objective(0.0);
    }
    // direction of ascent
    let dir = if slope0 < x { 1.0 } else { -1.0 };
    let climbing = |a: f64| {
        let v = expr.eval(a);
        v.is_finite() && dir * (x - expr.derivative(a)) > 0.0
    };
    let mut inner = 0.0;
    let mut step = 1.0;
    let mut outer;
    loop {
        outer = dir * step;
        if !climbing(outer) {
            break;
        }
        inner = outer;
        if step >= FAR {
            // the slope never reaches x inside an unbounded domain
            let gap = (x - expr.derivative(outer)).abs();
            return if gap <= 1e-12 * x.abs().max(1.0) {
                objective(outer)
            } else {
                f64::INFINITY
            };
        }
        step *= 2.0;
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (inner + outer);
        if mid == inner || mid == outer {
            break;
        }
        if climbing(mid) {
            inner = mid;
        } else {
            outer = mid;
        }
    }
    let best = objective(inner);
    let edge = objective(outer);
    if edge.is_finite() && edge > best {
        edge
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// `Λ_A(α) + Λ_ξ(1)` for inflation e^{m_i}, lognormal returns, and ξ_n = e^{-nφ}.
    fn runoff_example() -> CgfExpr {
        CgfExpr::new()
            .log_moment(Distribution::constant(math::exp(0.05)).unwrap(), 1.0)
            .unwrap()
            .log_moment(Distribution::log_normal(0.1, 0.1).unwrap(), -1.0)
            .unwrap()
            .constant(-0.1)
    }

    #[test]
    fn runoff_rate_and_mu() {
        let e = runoff_example();
        for &a in &[-1.0, 0.5, 2.0, 3.0] {
            let closed = (0.05 - 0.1) * a + 0.1 * a * a / 2.0 - 0.1;
            assert_relative_eq!(e.eval(a), closed, epsilon = 1e-14);
        }
        let s = solve_rate(&e, 100.0).unwrap();
        assert!((s.rate - 2.0).abs() < 1e-9, "{}", s.rate);
        assert!((s.mu - 20.0 / 3.0).abs() < 1e-9, "{}", s.mu);
        assert_eq!(s.kind, RateKind::Interior);
        // finite-difference cross-check of Λ'(ρ)
        let h = 1e-6;
        let fd = (e.eval(2.0 + h) - e.eval(2.0 - h)) / (2.0 * h);
        assert_relative_eq!(s.derivative, fd, epsilon = 1e-8);
        assert!(e.eval(s.rate - 1e-6) < 0.0 && e.eval(s.rate + 1e-6) > 0.0);
        assert!(s.value_at_rate.abs() <= RATE_VALUE_TOLERANCE);
    }

    #[test]
    fn linear_expression() {
        let c = 0.3;
        let upsilon = 0.45;
        let e = CgfExpr::new()
            .cgf(Distribution::constant(c).unwrap(), 1.0)
            .unwrap()
            .constant(-upsilon);
        let s = solve_rate(&e, 1e3).unwrap();
        assert_relative_eq!(s.rate, upsilon / c, epsilon = 1e-10);
    }

    #[test]
    fn value_at_origin_is_constant_sum() {
        let e = runoff_example().constant(0.025);
        assert_relative_eq!(e.eval(0.0), e.constant_sum());
        assert_relative_eq!(e.constant_sum(), -0.075);
    }

    #[test]
    fn degenerate_factors_vanish() {
        let e = CgfExpr::new()
            .log_moment(Distribution::constant(1.0).unwrap(), 1.0)
            .unwrap()
            .log_moment(Distribution::constant(1.0).unwrap(), -1.0)
            .unwrap();
        for &a in &[-3.0, 0.0, 0.7, 12.0] {
            assert_eq!(e.eval(a), 0.0);
        }
        assert!(matches!(
            solve_rate(&e, 50.0),
            Err(RateError::UnboundedRate { .. })
        ));
    }

    #[test]
    fn drift_violation() {
        // E log A > 0: Λ increases from 0
        let e = CgfExpr::new()
            .log_moment(Distribution::log_normal(0.05, 0.01).unwrap(), 1.0)
            .unwrap();
        assert_eq!(solve_rate(&e, 10.0), Err(RateError::NoPositiveRate));
        let e = e.constant(0.2);
        assert!(matches!(
            solve_rate(&e, 10.0),
            Err(RateError::PositiveAtOrigin(_))
        ));
    }

    #[test]
    fn boundary_supremum() {
        // cgf of Exp(mean 1) is finite up to 1 where it blows up; with a large
        // negative constant, Λ < 0 all the way to the edge of the domain
        let e = CgfExpr::new()
            .cgf(Distribution::exponential(1.0).unwrap(), 1.0)
            .unwrap()
            .constant(-50.0);
        let s = solve_rate(&e, 10.0).unwrap();
        assert!(s.rate > 1.0 - 1e-12 && s.rate < 1.0 + 1e-12);
        assert!(s.rate.is_finite());
        assert!((1.0 - s.rate) < 1e-10);
        // Λ(ρ) is still negative near the boundary: 50 is far below −log(1−ρ) ~ 30
        assert!(s.value_at_rate < 0.0);
        assert_eq!(s.domain_bound, 1.0);
        // log(1-α)=-50 needs 1-α ≈ e^{-50}, below f64 resolution near 1
        assert_eq!(s.kind, RateKind::DomainBoundary);
    }

    #[test]
    fn domain_respects_negative_scale() {
        let e = CgfExpr::new()
            .log_moment(Distribution::gamma(2.0, 1.0).unwrap(), -1.0)
            .unwrap();
        assert_eq!(e.domain(), (f64::NEG_INFINITY, 2.0));
        assert!(e.eval(2.0).is_infinite());
        assert!(e.eval(1.9).is_finite());
    }

    #[test]
    fn solve_is_fast() {
        let e = runoff_example();
        let t = std::time::Instant::now();
        for _ in 0..100 {
            solve_rate(&e, 100.0).unwrap();
        }
        assert!(t.elapsed().as_secs_f64() / 100.0 < 1e-3);
    }

    #[test]
    fn quadratic_conjugate() {
        let v = 0.7;
        let e = CgfExpr::new()
            .cgf(Distribution::normal(0.0, v).unwrap(), 1.0)
            .unwrap();
        for &x in &[-2.0, -0.1, 0.0, 0.4, 3.0] {
            let closed = x * x / (2.0 * v);
            // brute-force grid oracle
            let grid = (-20_000..=20_000)
                .map(|k| k as f64 * 1e-3)
                .map(|a| a * x - e.eval(a))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_relative_eq!(legendre(&e, x), closed, epsilon = 1e-10);
            assert!((grid - closed).abs() < 1e-5);
        }
    }

    #[test]
    fn linear_conjugate() {
        let c = 1.5;
        let e = CgfExpr::new()
            .cgf(Distribution::constant(c).unwrap(), 1.0)
            .unwrap();
        assert_eq!(legendre(&e, c), 0.0);
        assert_eq!(legendre(&e, c + 0.1), f64::INFINITY);
        assert_eq!(legendre(&e, c - 0.1), f64::INFINITY);
    }

    #[test]
    fn conjugate_at_bounded_support_edge() {
        // Bernoulli-type law on {0, 1}: Λ*(1) = −log p(1)
        let d = Distribution::discrete(alloc::vec![0.0, 1.0], alloc::vec![0.7, 0.3]).unwrap();
        let e = CgfExpr::new().cgf(d, 1.0).unwrap();
        assert_relative_eq!(legendre(&e, 1.0), -math::ln(0.3), epsilon = 1e-9);
        assert_eq!(legendre(&e, 1.2), f64::INFINITY);
    }

    #[test]
    fn envelope_identity() {
        let e = CgfExpr::new()
            .cgf(Distribution::exponential(2.0).unwrap(), 1.0)
            .unwrap()
            .constant(-0.3);
        for &a0 in &[-1.0, 0.1, 0.4] {
            let x = e.derivative(a0);
            assert_relative_eq!(legendre(&e, x), a0 * x - e.eval(a0), epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn fenchel_inequality(a in -3.0f64..0.45, x in -4.0f64..6.0) {
            let e = CgfExpr::new()
                .cgf(Distribution::exponential(2.0).unwrap(), 1.0).unwrap()
                .log_moment(Distribution::log_normal(0.1, 0.2).unwrap(), -1.0).unwrap()
                .constant(-0.1);
            let lam = e.eval(a);
            prop_assume!(lam.is_finite());
            prop_assert!(a * x <= lam + legendre(&e, x) + 1e-8);
        }

        #[test]
        fn more_negative_constant_raises_rate(c in 0.01f64..1.0, upsilon in 0.05f64..0.5) {
            let base = runoff_example().constant(0.1 - upsilon);
            let r0 = solve_rate(&base, 1e3).unwrap().rate;
            let r1 = solve_rate(&base.clone().constant(-c), 1e3).unwrap().rate;
            prop_assert!(r1 > r0);
        }

        #[test]
        fn interior_roots_bracket_sign_change(m in -0.2f64..-0.01, v in 0.02f64..0.5, upsilon in 0.0f64..0.3) {
            let e = CgfExpr::new()
                .log_moment(Distribution::log_normal(m, v).unwrap(), 1.0).unwrap()
                .constant(-upsilon);
            let s = solve_rate(&e, 1e4).unwrap();
            prop_assert!(s.value_at_rate.abs() <= RATE_VALUE_TOLERANCE);
            prop_assert!(e.eval(s.rate - 1e-6) < 0.0);
            prop_assert!(e.eval(s.rate + 1e-6) > 0.0);
            prop_assert!(s.derivative > 0.0);
        }
    }
}
