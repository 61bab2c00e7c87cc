//! Scenario enumeration over path matrices, expected-utility ratings and the
//! period-by-period adoption loop.
//!
//! A path matrix assigns each undecided firm one column out of `T - t0`: column `j`
//! for `j < T - t0 - 1` means adoption at `t0 + j`, the last column means the firm
//! never adopts within the phase. Payoffs depend on a matrix only through the
//! adoption periods it implies, so markets are memoized on `(period, adoption
//! periods already in force)`.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExpectationMode, ModelParams, Tech, TechnologyVector};
use crate::emissions::{expected_positions_from, period_profit, EmissionAnchor, ProfitMode};
use crate::error::{Error, Result};
use crate::market::clear_market_expected;

/// `(#matrices with firm i adopting now, #matrices with firm i waiting)`.
pub fn count_scenarios(undecided: usize, horizon: usize) -> Result<(u128, u128)> {
    if undecided == 0 || horizon == 0 {
        return Err(Error::InvalidInput(
            "scenario counts need at least one undecided firm and one period".into(),
        ));
    }
    let overflow = || Error::InvalidInput(format!("scenario count {horizon}^{undecided} overflows"));
    let h = horizon as u128;
    let exp = u32::try_from(undecided).map_err(|_| overflow())?;
    let total = h.checked_pow(exp).ok_or_else(overflow)?;
    let adopt_now = h.checked_pow(exp - 1).ok_or_else(overflow)?;
    Ok((adopt_now, total - adopt_now))
}

/// Total number of path matrices, refusing counts above `budget`.
fn checked_total(undecided: usize, horizon: usize, budget: u64) -> Result<usize> {
    let (n, o) = count_scenarios(undecided, horizon)?;
    let total = n + o;
    if total > budget as u128 {
        return Err(Error::BudgetExceeded {
            required: total,
            budget,
        });
    }
    Ok(total as usize)
}

/// One path matrix: the chosen column for each undecided firm.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathMatrix {
    pub t0: usize,
    pub horizon: usize,
    /// Undecided firm ids, one row each.
    pub firms: Vec<usize>,
    /// Marked column per row, in `0..T - t0`.
    pub columns: Vec<usize>,
}

impl PathMatrix {
    pub fn width(&self) -> usize {
        self.horizon - self.t0
    }

    /// Adoption period for a marked column; the last column is "never".
    pub fn adoption_for_column(&self, column: usize) -> Option<usize> {
        if column + 1 < self.width() {
            Some(self.t0 + column)
        } else {
            None
        }
    }

    /// Writes the adoption periods this matrix implies into `adoption`.
    pub fn apply(&self, adoption: &mut [Option<usize>]) {
        for (firm, column) in self.firms.iter().zip(&self.columns) {
            adoption[*firm] = self.adoption_for_column(*column);
        }
    }

    /// Technology vector in force at period `t` under this matrix.
    pub fn technology(&self, decided: &[Option<usize>], t: usize) -> TechnologyVector {
        let mut adoption = decided.to_vec();
        self.apply(&mut adoption);
        TechnologyVector::from_adoption(&adoption, t)
    }

    /// Dense 0/1 rendering, one row per undecided firm.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        self.columns
            .iter()
            .map(|c| (0..self.width()).map(|j| u8::from(j == *c)).collect())
            .collect()
    }
}

/// Mixed-radix counter over all path matrices for a set of undecided firms.
#[derive(Debug, Clone)]
pub struct PathMatrices {
    t0: usize,
    horizon: usize,
    firms: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl PathMatrices {
    pub fn new(firms: Vec<usize>, t0: usize, horizon: usize) -> Self {
        let next = if t0 < horizon {
            Some(vec![0; firms.len()])
        } else {
            None
        };
        PathMatrices {
            t0,
            horizon,
            firms,
            next,
        }
    }
}

impl Iterator for PathMatrices {
    type Item = PathMatrix;

    fn next(&mut self) -> Option<PathMatrix> {
        let columns = self.next.take()?;
        let width = self.horizon - self.t0;
        let mut succ = columns.clone();
        let mut carried = true;
        for c in succ.iter_mut().rev() {
            *c += 1;
            if *c < width {
                carried = false;
                break;
            }
            *c = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(PathMatrix {
            t0: self.t0,
            horizon: self.horizon,
            firms: self.firms.clone(),
            columns,
        })
    }
}

/// Constant absolute risk aversion utility; linear when `gamma == 0`.
pub fn utility(wealth: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        wealth
    } else {
        -(-gamma * wealth).exp_m1() / gamma
    }
}

/// Equiprobable expected utility of a payoff vector.
pub fn rate_payoffs(payoffs: &[f64], gamma: f64) -> f64 {
    let sum: f64 = payoffs.iter().map(|w| utility(*w, gamma)).sum();
    sum / payoffs.len() as f64
}

/// Expected market at one period for one set of adoption periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSnapshot {
    pub price: Option<f64>,
    pub payoffs: Vec<f64>,
}

type MarketKey = (usize, Vec<Option<usize>>);

/// Adoption periods that matter at `t`: anything later is still "old" then.
fn key_at(adoption: &[Option<usize>], t: usize) -> MarketKey {
    (
        t,
        adoption
            .iter()
            .map(|a| a.filter(|tau| *tau <= t))
            .collect(),
    )
}

/// Decision state at the start of period `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdoptionState {
    pub t0: usize,
    /// `Some(tau)` for firms that already adopted (`tau < t0`), `None` for undecided firms.
    pub adoption: Vec<Option<usize>>,
    /// Emission levels expectations are projected from.
    pub anchor: EmissionAnchor,
}

impl AdoptionState {
    pub fn initial(params: &ModelParams) -> Self {
        AdoptionState {
            t0: 0,
            adoption: vec![None; params.firm_count()],
            anchor: EmissionAnchor::initial(&params.firms),
        }
    }

    pub fn undecided(&self) -> Vec<usize> {
        (0..self.adoption.len())
            .filter(|i| self.adoption[*i].is_none())
            .collect()
    }
}

/// Evaluates expected per-period markets for scenario adoption vectors, with an optional memo.
pub struct ScenarioEvaluator<'a> {
    params: &'a ModelParams,
    anchor: EmissionAnchor,
    cache: Option<HashMap<MarketKey, Arc<MarketSnapshot>>>,
}

impl<'a> ScenarioEvaluator<'a> {
    pub fn new(params: &'a ModelParams, anchor: EmissionAnchor, memoize: bool) -> Self {
        ScenarioEvaluator {
            params,
            anchor,
            cache: memoize.then(HashMap::new),
        }
    }

    pub fn anchor(&self) -> &EmissionAnchor {
        &self.anchor
    }

    /// Replaces the anchor; cached markets are dropped when it actually changes.
    pub fn reanchor(&mut self, anchor: EmissionAnchor) {
        if anchor != self.anchor {
            self.anchor = anchor;
            if let Some(cache) = self.cache.as_mut() {
                cache.clear();
            }
        }
    }

    pub fn cached_markets(&self) -> usize {
        self.cache.as_ref().map_or(0, HashMap::len)
    }

    fn solve(&self, key: &MarketKey) -> Result<MarketSnapshot> {
        let (t, adoption) = key;
        let p = self.params;
        let table = expected_positions_from(&p.firms, &p.policy, adoption, &self.anchor, *t, &p.economy.q);
        let profits: Vec<f64> = p
            .firms
            .iter()
            .map(|f| period_profit(f, &p.economy, *t, ProfitMode::Expected))
            .collect();
        let outcome = clear_market_expected(
            &table.positions,
            &table.technology,
            &profits,
            p.policy.penalty,
            p.policy.price_support,
        )
        .map_err(|e| e.in_period(*t))?;
        Ok(MarketSnapshot {
            price: outcome.price,
            payoffs: outcome.payoffs,
        })
    }

    /// Expected market at period `t` when the given adoption periods hold.
    pub fn market(&mut self, adoption: &[Option<usize>], t: usize) -> Result<Arc<MarketSnapshot>> {
        let key = key_at(adoption, t);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(Arc::clone(hit));
        }
        let snap = Arc::new(self.solve(&key)?);
        if let Some(cache) = self.cache.as_mut() {
            cache.insert(key, Arc::clone(&snap));
        }
        Ok(snap)
    }

    /// Solves every uncached market in `keys` in parallel and stores the results.
    fn prefetch(&mut self, keys: HashSet<MarketKey>) -> Result<()> {
        let Some(cache) = self.cache.as_ref() else {
            return Ok(());
        };
        let mut missing: Vec<MarketKey> = keys.into_iter().filter(|k| !cache.contains_key(k)).collect();
        missing.sort();
        let this = &*self;
        let solved: Vec<(MarketKey, MarketSnapshot)> = missing
            .into_par_iter()
            .map(|k| this.solve(&k).map(|s| (k, s)))
            .collect::<Result<_>>()?;
        let cache = self.cache.as_mut().expect("memo enabled");
        for (k, s) in solved {
            cache.entry(k).or_insert_with(|| Arc::new(s));
        }
        Ok(())
    }

    /// Payoff vector (all firms) over `[t0, T)` for one scenario, before adoption costs.
    fn stream(&mut self, adoption: &[Option<usize>], t0: usize) -> Result<Vec<f64>> {
        let p = self.params;
        let horizon = p.horizon();
        let mut total = vec![0.0; p.firm_count()];
        for t in t0..horizon {
            let snap = self.market(adoption, t)?;
            let carry = if p.options.compound_payoffs {
                (1.0 + p.economy.r).powi((horizon - t - 1) as i32)
            } else {
                1.0
            };
            for (acc, phi) in total.iter_mut().zip(&snap.payoffs) {
                *acc += carry * phi;
            }
        }
        Ok(total)
    }

    fn cost_term(&self, firm: usize, adoption: Option<usize>) -> f64 {
        match adoption {
            Some(tau) => {
                let p = self.params;
                (1.0 + p.economy.r).powi((p.horizon() - tau) as i32) * p.firms[firm].cost_new
            }
            None => 0.0,
        }
    }

    /// Scenario payoff of `firm` when adoption periods are `adoption`, from `t0` to the end.
    ///
    /// Adoption costs of earlier periods are sunk and not charged again.
    pub fn scenario_payoff(&mut self, firm: usize, adoption: &[Option<usize>], t0: usize) -> Result<f64> {
        let stream = self.stream(adoption, t0)?;
        let cost = match adoption[firm] {
            Some(tau) if tau >= t0 => self.cost_term(firm, Some(tau)),
            _ => 0.0,
        };
        Ok(stream[firm] - cost)
    }
}

/// Ratings of the two choices for one undecided firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub firm: usize,
    pub adopt: f64,
    pub wait: f64,
    pub adopt_scenarios: u128,
    pub wait_scenarios: u128,
}

impl Rating {
    pub fn adopts(&self) -> bool {
        self.adopt >= self.wait
    }
}

/// Scenario payoffs of every undecided firm, split into adopt-now and wait classes.
#[derive(Debug, Clone, Default)]
struct ScenarioPayoffs {
    adopt: Vec<f64>,
    wait: Vec<f64>,
}

fn scenario_payoffs(
    eval: &mut ScenarioEvaluator<'_>,
    state: &AdoptionState,
) -> Result<HashMap<usize, ScenarioPayoffs>> {
    let p = eval.params;
    let horizon = p.horizon();
    let t0 = state.t0;
    let undecided = state.undecided();
    let mut out: HashMap<usize, ScenarioPayoffs> =
        undecided.iter().map(|i| (*i, ScenarioPayoffs::default())).collect();
    if undecided.is_empty() {
        return Ok(out);
    }
    let total = checked_total(undecided.len(), horizon - t0, p.options.enumeration_budget)?;

    if horizon - t0 == 1 {
        // single remaining period: adopting now against never adopting, rivals unchanged
        for &i in &undecided {
            let mut adopt = state.adoption.clone();
            adopt[i] = Some(t0);
            let payoff_adopt = eval.scenario_payoff(i, &adopt, t0)?;
            let payoff_wait = eval.scenario_payoff(i, &state.adoption, t0)?;
            let entry = out.get_mut(&i).expect("undecided firm");
            entry.adopt.push(payoff_adopt);
            entry.wait.push(payoff_wait);
        }
        return Ok(out);
    }

    let matrices = || PathMatrices::new(undecided.clone(), t0, horizon);
    if eval.cache.is_some() {
        let mut keys = HashSet::new();
        let mut adoption = state.adoption.clone();
        for m in matrices() {
            m.apply(&mut adoption);
            for t in t0..horizon {
                keys.insert(key_at(&adoption, t));
            }
        }
        eval.prefetch(keys)?;
    }

    let mut seen = 0usize;
    let mut adoption = state.adoption.clone();
    for m in matrices() {
        seen += 1;
        m.apply(&mut adoption);
        let stream = eval.stream(&adoption, t0)?;
        for (&firm, &column) in m.firms.iter().zip(&m.columns) {
            let payoff = stream[firm] - eval.cost_term(firm, adoption[firm]);
            let entry = out.get_mut(&firm).expect("undecided firm");
            if column == 0 {
                entry.adopt.push(payoff);
            } else {
                entry.wait.push(payoff);
            }
        }
    }
    debug_assert_eq!(seen, total);
    Ok(out)
}

/// Ratings `(adopt, wait)` for every undecided firm at the state's period.
pub fn rate_all(eval: &mut ScenarioEvaluator<'_>, state: &AdoptionState) -> Result<Vec<Rating>> {
    let payoffs = scenario_payoffs(eval, state)?;
    let mut ratings: Vec<Rating> = payoffs
        .into_iter()
        .map(|(firm, s)| {
            let gamma = eval.params.firms[firm].risk_aversion;
            Rating {
                firm,
                adopt: rate_payoffs(&s.adopt, gamma),
                wait: rate_payoffs(&s.wait, gamma),
                adopt_scenarios: s.adopt.len() as u128,
                wait_scenarios: s.wait.len() as u128,
            }
        })
        .collect();
    ratings.sort_by_key(|r| r.firm);
    Ok(ratings)
}

/// Rating of one choice (`adopt_now` or wait) for one undecided firm.
pub fn rating(eval: &mut ScenarioEvaluator<'_>, state: &AdoptionState, firm: usize, adopt_now: bool) -> Result<f64> {
    if state.adoption.get(firm).copied().flatten().is_some() {
        return Err(Error::InvalidInput(format!("firm {firm} has already adopted")));
    }
    let r = rate_all(eval, state)?
        .into_iter()
        .find(|r| r.firm == firm)
        .expect("undecided firm is rated");
    Ok(if adopt_now { r.adopt } else { r.wait })
}

/// Firms that adopt at the state's period; decisions are simultaneous, ties adopt.
pub fn adoption_step(eval: &mut ScenarioEvaluator<'_>, state: &AdoptionState) -> Result<(Vec<usize>, Vec<Rating>)> {
    let ratings = rate_all(eval, state)?;
    let adopters = ratings.iter().filter(|r| r.adopts()).map(|r| r.firm).collect();
    Ok((adopters, ratings))
}

/// Evolution of the technology vector over a phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdoptionTrajectory {
    /// Technology in force during each period `0..T`.
    pub technology: Vec<TechnologyVector>,
    /// Adoption period per firm, `None` if it never adopts.
    pub adoption: Vec<Option<usize>>,
    /// Expected equilibrium price settling each period; `None` when no expected demand.
    pub expected_prices: Vec<Option<f64>>,
    /// Ratings computed at each decision period.
    pub ratings: Vec<Vec<Rating>>,
}

impl AdoptionTrajectory {
    pub fn adopters_by_period(&self) -> Vec<usize> {
        self.technology.iter().map(TechnologyVector::adopters).collect()
    }

    pub fn first_adoption(&self) -> Option<usize> {
        self.adoption.iter().flatten().min().copied()
    }

    /// Trajectory in which firms adopt at the given periods (no decisions recorded).
    pub fn fixed(adoption: Vec<Option<usize>>, horizon: usize) -> Self {
        AdoptionTrajectory {
            technology: (0..horizon)
                .map(|t| TechnologyVector::from_adoption(&adoption, t))
                .collect(),
            adoption,
            expected_prices: vec![None; horizon],
            ratings: Vec::new(),
        }
    }

    pub fn tech_at(&self, firm: usize, t: usize) -> Tech {
        self.technology[t].0[firm]
    }
}

/// Supplies emission levels at the start of each period for the conditional-expectation mode.
pub trait LevelSource {
    fn levels_at(&mut self, t: usize, adoption: &[Option<usize>]) -> Vec<f64>;
}

/// Runs the adoption loop with expectations projected from the initial emission levels.
pub fn run_adoption(params: &ModelParams) -> Result<AdoptionTrajectory> {
    run_adoption_with(params, None, true)
}

/// Adoption loop. In conditional mode `levels` re-anchors expectations at every decision period.
pub fn run_adoption_with(
    params: &ModelParams,
    mut levels: Option<&mut dyn LevelSource>,
    memoize: bool,
) -> Result<AdoptionTrajectory> {
    let horizon = params.horizon();
    let mut state = AdoptionState::initial(params);
    let mut eval = ScenarioEvaluator::new(params, state.anchor.clone(), memoize);
    let mut ratings = Vec::new();
    let conditional = params.options.expectation_mode == ExpectationMode::Conditional;

    for t0 in 0..horizon {
        state.t0 = t0;
        if conditional {
            if let Some(src) = levels.as_deref_mut() {
                let anchor = EmissionAnchor {
                    period: t0,
                    levels: src.levels_at(t0, &state.adoption),
                };
                state.anchor = anchor.clone();
                eval.reanchor(anchor);
            }
        }
        if state.undecided().is_empty() {
            break;
        }
        let (adopters, step_ratings) = adoption_step(&mut eval, &state)?;
        for firm in adopters {
            state.adoption[firm] = Some(t0);
        }
        ratings.push(step_ratings);
    }

    // expected prices along the realized technology path, anchored at t = 0
    eval.reanchor(EmissionAnchor::initial(&params.firms));
    let mut expected_prices = Vec::with_capacity(horizon);
    for t in 0..horizon {
        expected_prices.push(eval.market(&state.adoption, t)?.price);
    }

    Ok(AdoptionTrajectory {
        technology: (0..horizon)
            .map(|t| TechnologyVector::from_adoption(&state.adoption, t))
            .collect(),
        adoption: state.adoption,
        expected_prices,
        ratings,
    })
}
