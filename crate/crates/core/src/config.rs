//! Model primitives, policy parameters and their validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Technology a firm operates under during a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tech {
    Old,
    New,
}

/// State of the economy over one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shock {
    Up,
    Down,
}

/// Per-firm permit allocation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationRule {
    /// `beta * (t + 1)^alpha` permits in period `t`.
    Parametric { alpha: f64, beta: f64 },
    /// Explicit permit count per period.
    Schedule(Vec<f64>),
}

impl AllocationRule {
    pub fn permits(&self, t: usize) -> f64 {
        match self {
            AllocationRule::Parametric { alpha, beta } => crate::emissions::allocation(*alpha, *beta, t),
            AllocationRule::Schedule(s) => s.get(t).copied().unwrap_or(0.0),
        }
    }
}

/// The regulator's choice variables for one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    /// Number of regulated periods `T`.
    pub horizon: usize,
    /// Charge per uncovered emission unit.
    pub penalty: f64,
    /// Cash paid per unused permit to new-technology firms; zero disables the instrument.
    pub price_support: f64,
    /// One rule per firm.
    pub allocation: Vec<AllocationRule>,
}

impl PolicyParams {
    pub fn with_price_support(&self, price_support: f64) -> Self {
        PolicyParams {
            price_support,
            ..self.clone()
        }
    }

    pub fn permits(&self, firm: usize, t: usize) -> f64 {
        self.allocation[firm].permits(t)
    }
}

/// Per-firm emission profile, profits, adoption cost and risk attitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmParams {
    pub q0: f64,
    pub u_old: f64,
    pub d_old: f64,
    pub u_new: f64,
    pub d_new: f64,
    pub cost_new: f64,
    pub s_up: f64,
    pub s_down: f64,
    #[serde(default)]
    pub risk_aversion: f64,
}

/// Exogenous economy: per-period up-probabilities and rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyParams {
    /// Probability of an up shock in each period; length `T`.
    pub q: Vec<f64>,
    /// Riskless rate.
    pub r: f64,
    /// Product appreciation rate.
    pub rho: f64,
}

impl EconomyParams {
    pub fn constant(q: f64, horizon: usize, r: f64, rho: f64) -> Self {
        EconomyParams {
            q: vec![q; horizon],
            r,
            rho,
        }
    }
}

/// Per-firm technology status.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TechnologyVector(pub Vec<Tech>);

impl TechnologyVector {
    pub fn all(tech: Tech, m: usize) -> Self {
        TechnologyVector(vec![tech; m])
    }

    /// Status at period `t` given adoption periods (`None` = never).
    pub fn from_adoption(adoption: &[Option<usize>], t: usize) -> Self {
        TechnologyVector(
            adoption
                .iter()
                .map(|a| match a {
                    Some(tau) if *tau <= t => Tech::New,
                    _ => Tech::Old,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn adopters(&self) -> usize {
        self.0.iter().filter(|t| **t == Tech::New).count()
    }

    /// True when no firm that is new here is old in `later`.
    pub fn precedes(&self, later: &TechnologyVector) -> bool {
        self.0
            .iter()
            .zip(&later.0)
            .all(|(a, b)| !(*a == Tech::New && *b == Tech::Old))
    }
}

/// One realized sequence of economy shocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EconomyPath(pub Vec<Shock>);

impl EconomyPath {
    pub fn new(shocks: Vec<Shock>, horizon: usize) -> Result<Self> {
        if shocks.len() != horizon {
            return Err(Error::InvalidInput(format!(
                "economy path has {} periods, expected {horizon}",
                shocks.len()
            )));
        }
        Ok(EconomyPath(shocks))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// How expected emission trajectories are anchored when firms rate scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpectationMode {
    /// Expected one-period factors multiplied from `q0`; technology path is path-independent.
    #[default]
    Expected,
    /// Expectations re-anchored at the realized emission level each period.
    Conditional,
}

/// How executed buy orders are allocated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchingMode {
    #[default]
    Proportional,
    Stochastic,
}

/// Run-time switches that select between readings of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub expectation_mode: ExpectationMode,
    pub matching: MatchingMode,
    /// Carry each per-period scenario payoff to `T` at the riskless rate.
    pub compound_payoffs: bool,
    /// Largest number of path matrices a single adoption step may enumerate.
    pub enumeration_budget: u64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            expectation_mode: ExpectationMode::Expected,
            matching: MatchingMode::Proportional,
            compound_payoffs: false,
            enumeration_budget: 10_000_000,
        }
    }
}

/// Everything needed to run the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub policy: PolicyParams,
    pub economy: EconomyParams,
    pub firms: Vec<FirmParams>,
    #[serde(default)]
    pub options: ModelOptions,
}

impl ModelParams {
    pub fn horizon(&self) -> usize {
        self.policy.horizon
    }

    pub fn firm_count(&self) -> usize {
        self.firms.len()
    }

    pub fn with_price_support(&self, price_support: f64) -> Self {
        ModelParams {
            policy: self.policy.with_price_support(price_support),
            ..self.clone()
        }
    }

    /// Validates and returns `self`, or an error listing every violation.
    pub fn validated(self) -> Result<Self> {
        let report = validate(&self.policy, &self.firms, &self.economy);
        if report.is_ok() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(report))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// Outcome of [`validate`]: empty when every invariant holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, ok: bool, field: impl Into<String>, message: &str) {
        if !ok {
            self.push(field, message);
        }
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Checks every parameter invariant; never fails, violations are returned as data.
pub fn validate(policy: &PolicyParams, firms: &[FirmParams], economy: &EconomyParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    let horizon = policy.horizon;

    report.check(horizon >= 1, "policy.horizon", "horizon must be at least 1");
    report.check(
        policy.penalty.is_finite() && policy.penalty > 0.0,
        "policy.penalty",
        "penalty must be positive",
    );
    report.check(
        policy.price_support.is_finite() && policy.price_support >= 0.0,
        "policy.price_support",
        "price_support must be non-negative",
    );
    if policy.price_support >= policy.penalty {
        report.push("policy.price_support", "price_support must be strictly below penalty");
    }
    if firms.is_empty() {
        report.push("firms", "at least one firm is required");
    }
    if policy.allocation.len() != firms.len() {
        report.push(
            "policy.allocation",
            format!(
                "allocation has {} rules but there are {} firms",
                policy.allocation.len(),
                firms.len()
            ),
        );
    }
    for (i, rule) in policy.allocation.iter().enumerate() {
        match rule {
            AllocationRule::Parametric { alpha, beta } => {
                report.check(
                    beta.is_finite() && *beta > 0.0,
                    format!("policy.allocation[{i}].beta"),
                    "beta must be positive",
                );
                report.check(
                    alpha.is_finite() && *alpha <= 0.0,
                    format!("policy.allocation[{i}].alpha"),
                    "alpha must be non-positive",
                );
            }
            AllocationRule::Schedule(s) => {
                if s.len() < horizon {
                    report.push(
                        format!("policy.allocation[{i}]"),
                        format!("schedule has {} periods, expected {horizon}", s.len()),
                    );
                }
                report.check(
                    s.iter().all(|v| v.is_finite() && *v >= 0.0),
                    format!("policy.allocation[{i}]"),
                    "schedule entries must be non-negative",
                );
            }
        }
    }

    for (i, f) in firms.iter().enumerate() {
        let p = |name: &str| format!("firms[{i}].{name}");
        if !finite(&[
            f.q0,
            f.u_old,
            f.d_old,
            f.u_new,
            f.d_new,
            f.cost_new,
            f.s_up,
            f.s_down,
            f.risk_aversion,
        ]) {
            report.push(format!("firms[{i}]"), "all firm parameters must be finite");
            continue;
        }
        report.check(f.q0 > 0.0, p("q0"), "q0 must be positive");
        report.check(f.u_old > f.d_old, p("u_old"), "u_old > d_old required");
        report.check(f.d_old >= 1.0, p("d_old"), "d_old >= 1 required");
        report.check(f.u_new > f.d_new, p("u_new"), "u_new > d_new required");
        report.check(f.d_new >= 1.0, p("d_new"), "d_new >= 1 required");
        report.check(f.u_new <= f.u_old, p("u_new"), "u_new <= u_old required");
        report.check(f.d_new <= f.d_old, p("d_new"), "d_new <= d_old required");
        report.check(f.cost_new >= 0.0, p("cost_new"), "cost_new must be non-negative");
        report.check(f.s_up > 0.0, p("s_up"), "s_up must be positive");
        report.check(f.s_down > 0.0, p("s_down"), "s_down must be positive");
        report.check(
            f.risk_aversion >= 0.0,
            p("risk_aversion"),
            "risk_aversion must be non-negative",
        );
    }

    if economy.q.len() != horizon {
        report.push(
            "economy.q",
            format!("q has {} entries, expected {horizon}", economy.q.len()),
        );
    }
    for (t, q) in economy.q.iter().enumerate() {
        report.check(
            (0.0..=1.0).contains(q),
            format!("economy.q[{t}]"),
            "probability must lie in [0, 1]",
        );
    }
    report.check(
        economy.r.is_finite() && economy.r >= 0.0,
        "economy.r",
        "r must be non-negative",
    );
    report.check(
        economy.rho.is_finite() && economy.rho > economy.r,
        "economy.rho",
        "rho must exceed r",
    );
    report
}

fn lerp(from: f64, to: f64, w: f64) -> f64 {
    from + (to - from) * w
}

/// Spreads `count` firms linearly between two endpoint profiles.
///
/// Firm 0 receives `high` (the high-emission end), firm `count - 1` receives `low`.
pub fn interpolate_firms(high: &FirmParams, low: &FirmParams, count: usize) -> Result<Vec<FirmParams>> {
    if count == 0 {
        return Err(Error::InvalidInput("firm count must be at least 1".into()));
    }
    Ok((0..count)
        .map(|i| {
            let w = if count == 1 {
                0.0
            } else {
                i as f64 / (count - 1) as f64
            };
            FirmParams {
                q0: lerp(high.q0, low.q0, w),
                u_old: lerp(high.u_old, low.u_old, w),
                d_old: lerp(high.d_old, low.d_old, w),
                u_new: lerp(high.u_new, low.u_new, w),
                d_new: lerp(high.d_new, low.d_new, w),
                cost_new: lerp(high.cost_new, low.cost_new, w),
                s_up: lerp(high.s_up, low.s_up, w),
                s_down: lerp(high.s_down, low.s_down, w),
                risk_aversion: lerp(high.risk_aversion, low.risk_aversion, w),
            }
        })
        .collect())
}

/// Parametric allocation rules spread linearly between two `(alpha, beta)` endpoints.
pub fn interpolate_allocation(high: (f64, f64), low: (f64, f64), count: usize) -> Result<Vec<AllocationRule>> {
    if count == 0 {
        return Err(Error::InvalidInput("firm count must be at least 1".into()));
    }
    Ok((0..count)
        .map(|i| {
            let w = if count == 1 {
                0.0
            } else {
                i as f64 / (count - 1) as f64
            };
            AllocationRule::Parametric {
                alpha: lerp(high.0, low.0, w),
                beta: lerp(high.1, low.1, w),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn firm() -> FirmParams {
        FirmParams {
            q0: 100.0,
            u_old: 1.14,
            d_old: 1.06,
            u_new: 1.09,
            d_new: 1.03,
            cost_new: 90.0,
            s_up: 6.0,
            s_down: 4.0,
            risk_aversion: 0.0,
        }
    }

    fn policy(pg: f64) -> PolicyParams {
        PolicyParams {
            horizon: 8,
            penalty: 10.0,
            price_support: pg,
            allocation: vec![AllocationRule::Parametric { alpha: -1.0, beta: 20.0 }; 5],
        }
    }

    #[test]
    fn reference_configuration_passes() {
        let econ = EconomyParams::constant(0.5, 8, 0.03, 0.05);
        let report = validate(&policy(5.0), &[firm(); 5], &econ);
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn price_support_at_penalty_is_rejected() {
        let econ = EconomyParams::constant(0.5, 8, 0.03, 0.05);
        let report = validate(&policy(10.0), &[firm(); 5], &econ);
        assert!(report
            .violations
            .iter()
            .any(|v| v.message == "price_support must be strictly below penalty"));
    }

    #[test]
    fn inverted_growth_factors_are_rejected() {
        let econ = EconomyParams::constant(0.5, 8, 0.03, 0.05);
        let mut f = firm();
        f.u_old = 1.05;
        f.d_old = 1.06;
        let report = validate(&policy(5.0), &[f], &econ);
        let v = report
            .violations
            .iter()
            .find(|v| v.message == "u_old > d_old required")
            .expect("ordering violation");
        assert_eq!(v.field, "firms[0].u_old");
    }

    #[test]
    fn collects_every_violation() {
        let econ = EconomyParams {
            q: vec![1.5; 3],
            r: 0.1,
            rho: 0.05,
        };
        let mut p = policy(0.0);
        p.penalty = -1.0;
        p.allocation = vec![AllocationRule::Parametric { alpha: 0.5, beta: 0.0 }];
        let report = validate(&p, &[firm()], &econ);
        let fields: Vec<_> = report.violations.iter().map(|v| v.field.as_str()).collect();
        for expected in [
            "policy.penalty",
            "policy.allocation[0].beta",
            "policy.allocation[0].alpha",
            "economy.q",
            "economy.q[0]",
            "economy.rho",
        ] {
            assert!(fields.contains(&expected), "missing {expected} in {fields:?}");
        }
        assert_eq!(report, validate(&p, &[firm()], &econ));
    }

    #[test]
    fn negative_schedules_are_rejected() {
        let econ = EconomyParams::constant(0.5, 2, 0.0, 0.05);
        let mut p = policy(0.0);
        p.horizon = 2;
        p.allocation = vec![AllocationRule::Schedule(vec![1.0, -1.0])];
        assert!(!validate(&p, &[firm()], &econ).is_ok());
    }

    #[test]
    fn interpolation_hits_both_endpoints() {
        let mut high = firm();
        let mut low = firm();
        high.u_old = 1.15;
        low.u_old = 1.13;
        high.cost_new = 100.0;
        low.cost_new = 80.0;
        let firms = interpolate_firms(&high, &low, 5).unwrap();
        let u: Vec<f64> = firms.iter().map(|f| f.u_old).collect();
        for (got, want) in u.iter().zip([1.15, 1.145, 1.14, 1.135, 1.13]) {
            assert!((got - want).abs() < 1e-12);
        }
        let c: Vec<f64> = firms.iter().map(|f| f.cost_new).collect();
        assert_eq!(c, vec![100.0, 95.0, 90.0, 85.0, 80.0]);
    }

    #[test]
    fn single_firm_interpolation_takes_high_endpoint() {
        let mut high = firm();
        high.u_old = 1.15;
        let firms = interpolate_firms(&high, &firm(), 1).unwrap();
        assert_eq!(firms, vec![high]);
        assert!(interpolate_firms(&high, &firm(), 0).is_err());
    }

    #[test]
    fn adoption_vector_is_monotone() {
        let adoption = [Some(1), None, Some(0)];
        let h0 = TechnologyVector::from_adoption(&adoption, 0);
        let h1 = TechnologyVector::from_adoption(&adoption, 1);
        assert_eq!(h0.0, vec![Tech::Old, Tech::Old, Tech::New]);
        assert_eq!(h1.adopters(), 2);
        assert!(h0.precedes(&h1));
        assert!(!h1.precedes(&h0));
    }

    #[test]
    fn path_length_must_match_horizon() {
        assert!(EconomyPath::new(vec![Shock::Up; 3], 4).is_err());
        assert_eq!(EconomyPath::new(vec![Shock::Up; 4], 4).unwrap().len(), 4);
    }
}
