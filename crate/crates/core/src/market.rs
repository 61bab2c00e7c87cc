//! Permit pricing, the sellers' submission game, order matching and one-period payoffs.
//!
//! Quantities handed to the game are normalized by aggregate demand, so a seller's
//! submission `x` and the rivals' total `k` live on `[0, 1]` and the price is
//! `P * reaction(k + x, 1)`. A new-technology seller additionally earns the price
//! support on every permit it keeps back.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Tech, TechnologyVector};
use crate::error::{Error, Result};

/// Stop when successive profiles differ by less than this (normalized units).
pub const CONVERGENCE_TOL: f64 = 1e-10;
pub const MAX_ROUNDS: usize = 10_000;
/// Tolerance on first-order conditions and best-response consistency after convergence.
pub const KKT_TOL: f64 = 1e-8;

/// Bump-tail reaction function: `exp(x^2 / (x^2 - a^2))` on `[0, a)`, zero beyond.
pub fn reaction(x: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("reaction scale must be positive, got {a}")));
    }
    Ok(eta(x / a))
}

/// `reaction(x, 1)` without the argument check.
fn eta(x: f64) -> f64 {
    if x < 1.0 {
        let x2 = x * x;
        (x2 / (x2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// Exchange price when `submitted` permits face `demand`.
pub fn price(submitted: f64, demand: f64, penalty: f64) -> Result<f64> {
    if !(demand > 0.0) {
        return Err(Error::NoMarket);
    }
    Ok(penalty * eta(submitted / demand))
}

/// Quartic whose sign matches the old-technology marginal revenue below saturation.
fn quartic(rivals: f64, x: f64) -> f64 {
    let s = rivals + x;
    let s2 = s * s;
    s2 * s2 - 4.0 * s2 + 2.0 * rivals * s + 1.0
}

/// Marginal revenue of the normalized exchange income `x * eta(k + x)`.
fn marginal_revenue(rivals: f64, x: f64) -> f64 {
    let s = rivals + x;
    if s >= 1.0 {
        return 0.0;
    }
    let denom = s * s - 1.0;
    eta(s) * (1.0 - 2.0 * x * s / (denom * denom))
}

/// Normalized marginal profit of a seller at `x`: marginal revenue less the price-support rate it forgoes.
pub fn marginal_profit(rivals: f64, x: f64, support_ratio: f64, tech: Tech) -> f64 {
    let forgone = match tech {
        Tech::New => support_ratio,
        Tech::Old => 0.0,
    };
    marginal_revenue(rivals, x) - forgone
}

/// Normalized profit of a seller submitting `x` out of `cap`.
pub fn seller_profit(rivals: f64, x: f64, cap: f64, support_ratio: f64, tech: Tech) -> f64 {
    let exchange = x * eta(rivals + x);
    match tech {
        Tech::New => exchange + support_ratio * (cap - x),
        Tech::Old => exchange,
    }
}

/// Largest `x` in `[lo, hi]` with `positive(x)` true, assuming a single sign change.
fn bisect(mut lo: f64, mut hi: f64, positive: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if positive(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Profit-maximizing submission given the rivals' total, all normalized by demand.
///
/// `support_ratio` is `P_g / P` and only matters for new-technology sellers.
pub fn best_response(rivals: f64, cap: f64, support_ratio: f64, tech: Tech) -> f64 {
    if rivals >= 1.0 || cap <= 0.0 {
        return 0.0;
    }
    let hi = cap.min(1.0 - rivals);
    let ratio = if tech == Tech::New { support_ratio } else { 0.0 };
    if ratio > 0.0 {
        // marginal profit is strictly decreasing wherever it is positive
        if marginal_revenue(rivals, 0.0) <= ratio {
            return 0.0;
        }
        if marginal_profit(rivals, hi, ratio, tech) >= 0.0 {
            return hi;
        }
        bisect(0.0, hi, |x| marginal_profit(rivals, x, ratio, tech) > 0.0)
    } else {
        // quartic is positive at 0 and changes sign once on [0, 1 - rivals]
        if quartic(rivals, hi) >= 0.0 {
            return hi;
        }
        bisect(0.0, hi, |x| quartic(rivals, x) > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seller {
    pub firm: usize,
    /// Unused permits available, `-x > 0`.
    pub capacity: f64,
    pub tech: Tech,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Buyer {
    pub firm: usize,
    /// Uncovered emissions, `x >= 0`.
    pub need: f64,
}

/// Firms split by the sign of their net position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSides {
    pub firms: usize,
    pub sellers: Vec<Seller>,
    pub buyers: Vec<Buyer>,
    pub supply: f64,
    pub demand: f64,
}

impl MarketSides {
    /// Partitions firms: negative positions sell, non-negative positions buy.
    pub fn from_positions(positions: &[f64], technology: &TechnologyVector) -> Self {
        let mut sellers = Vec::new();
        let mut buyers = Vec::new();
        for (firm, &x) in positions.iter().enumerate() {
            if x < 0.0 {
                sellers.push(Seller {
                    firm,
                    capacity: -x,
                    tech: technology.0[firm],
                });
            } else {
                buyers.push(Buyer { firm, need: x });
            }
        }
        let supply = sellers.iter().map(|s| s.capacity).sum();
        let demand = buyers.iter().map(|b| b.need).sum();
        MarketSides {
            firms: positions.len(),
            sellers,
            buyers,
            supply,
            demand,
        }
    }
}

/// Equilibrium of the sellers' game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Permits each seller submits, in the order of `MarketSides::sellers`.
    pub submissions: Vec<f64>,
    pub total: f64,
    pub price: f64,
    pub rounds: usize,
}

fn normalized_caps(sides: &MarketSides) -> Vec<f64> {
    sides.sellers.iter().map(|s| s.capacity / sides.demand).collect()
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Best-response iteration from the zero profile, in normalized units.
///
/// Rounds are synchronous; when the step stops shrinking the update is relaxed
/// toward the previous profile, which leaves fixed points unchanged.
pub fn iterate_best_responses(caps: &[f64], techs: &[Tech], support_ratio: f64) -> Result<(Vec<f64>, usize)> {
    let n = caps.len();
    let mut profile = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut relax = 1.0;
    let mut best_step = f64::INFINITY;
    let mut stalled = 0;
    let mut step = f64::INFINITY;
    for round in 1..=MAX_ROUNDS {
        let total: f64 = profile.iter().sum();
        for i in 0..n {
            let br = best_response(total - profile[i], caps[i], support_ratio, techs[i]);
            next[i] = profile[i] + relax * (br - profile[i]);
        }
        step = sup_distance(&profile, &next);
        std::mem::swap(&mut profile, &mut next);
        if step < CONVERGENCE_TOL {
            // one undamped sweep so bound-constrained players land exactly on their bounds
            let total: f64 = profile.iter().sum();
            let snapped = (0..n)
                .map(|i| best_response(total - profile[i], caps[i], support_ratio, techs[i]))
                .collect();
            return Ok((snapped, round));
        }
        if step < 0.9 * best_step {
            best_step = step;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 8 && relax > 1.0 / 64.0 {
                relax *= 0.5;
                stalled = 0;
                best_step = step;
            }
        }
    }
    Err(Error::NoConvergence {
        rounds: MAX_ROUNDS,
        last_step: step,
        profile,
    })
}

/// Per-seller first-order residuals; `None` for an interior residual within tolerance is not reported here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Normalized marginal profit at each seller's submission.
    pub marginal: Vec<f64>,
    /// Largest violation of the complementarity conditions.
    pub worst_violation: f64,
    /// Largest gap between a submission and its best response to the others.
    pub worst_response_gap: f64,
}

/// Checks complementarity: interior submissions have zero marginal profit, submissions at the
/// cap have non-negative marginal profit, zero submissions have non-positive marginal profit.
pub fn kkt_report(profile: &[f64], caps: &[f64], techs: &[Tech], support_ratio: f64) -> KktReport {
    let total: f64 = profile.iter().sum();
    let mut marginal = Vec::with_capacity(profile.len());
    let mut worst_violation: f64 = 0.0;
    let mut worst_response_gap: f64 = 0.0;
    for i in 0..profile.len() {
        let rivals = total - profile[i];
        let x = profile[i];
        let mp = marginal_profit(rivals, x, support_ratio, techs[i]);
        marginal.push(mp);
        let cap = caps[i].min((1.0 - rivals).max(0.0));
        let violation = if rivals >= 1.0 {
            // saturated market: any submission earns nothing, only zero is consistent
            x
        } else if x <= 1e-12 {
            mp.max(0.0)
        } else if x >= cap - 1e-12 {
            (-mp).max(0.0)
        } else {
            mp.abs()
        };
        worst_violation = worst_violation.max(violation);
        let br = best_response(rivals, caps[i], support_ratio, techs[i]);
        worst_response_gap = worst_response_gap.max((br - x).abs());
    }
    KktReport {
        marginal,
        worst_violation,
        worst_response_gap,
    }
}

/// Solves the sellers' submission game and verifies the result.
pub fn solve_game(sides: &MarketSides, penalty: f64, price_support: f64) -> Result<Equilibrium> {
    if !(sides.demand > 0.0) {
        return Err(Error::NoMarket);
    }
    if sides.sellers.is_empty() {
        return Ok(Equilibrium {
            submissions: Vec::new(),
            total: 0.0,
            price: penalty,
            rounds: 0,
        });
    }
    let caps = normalized_caps(sides);
    let techs: Vec<Tech> = sides.sellers.iter().map(|s| s.tech).collect();
    let ratio = price_support / penalty;
    let (profile, rounds) = iterate_best_responses(&caps, &techs, ratio)?;
    let report = kkt_report(&profile, &caps, &techs, ratio);
    if report.worst_response_gap > KKT_TOL || report.worst_violation > KKT_TOL {
        return Err(Error::Verification(format!(
            "response gap {:e}, complementarity violation {:e}",
            report.worst_response_gap, report.worst_violation
        )));
    }
    let submissions: Vec<f64> = profile
        .iter()
        .zip(&sides.sellers)
        .map(|(x, s)| (x * sides.demand).min(s.capacity))
        .collect();
    let normalized_total: f64 = profile.iter().sum();
    Ok(Equilibrium {
        total: submissions.iter().sum(),
        price: penalty * eta(normalized_total),
        submissions,
        rounds,
    })
}

/// Executed purchases when `submitted` permits are shared in proportion to need.
pub fn match_orders(buyers: &[Buyer], submitted: f64, demand: f64) -> Vec<f64> {
    if !(demand > 0.0) {
        return vec![0.0; buyers.len()];
    }
    let filled = submitted.min(demand);
    buyers.iter().map(|b| b.need / demand * filled).collect()
}

/// Number of lots the stochastic matcher splits the supply into.
pub const STOCHASTIC_LOTS: usize = 1000;

/// Random one-by-one matching: each lot goes to a buyer drawn with probability
/// proportional to its need, redrawn among buyers with room left once one is full.
pub fn match_orders_stochastic<R: Rng + ?Sized>(buyers: &[Buyer], submitted: f64, demand: f64, rng: &mut R) -> Vec<f64> {
    let mut executed = vec![0.0; buyers.len()];
    if !(demand > 0.0) || !(submitted > 0.0) {
        return executed;
    }
    let filled = submitted.min(demand);
    let lot = filled / STOCHASTIC_LOTS as f64;
    for _ in 0..STOCHASTIC_LOTS {
        let room: Vec<f64> = buyers
            .iter()
            .zip(&executed)
            .map(|(b, e)| if b.need - e >= lot * (1.0 - 1e-9) { b.need } else { 0.0 })
            .collect();
        let weight: f64 = room.iter().sum();
        if weight <= 0.0 {
            break;
        }
        let mut draw = rng.gen::<f64>() * weight;
        let mut pick = room.len() - 1;
        for (k, w) in room.iter().enumerate() {
            if *w > 0.0 {
                if draw < *w {
                    pick = k;
                    break;
                }
                draw -= w;
                pick = k;
            }
        }
        executed[pick] = (executed[pick] + lot).min(buyers[pick].need);
    }
    executed
}

/// Result of one period's exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub sides: MarketSides,
    /// Submissions per seller, aligned with `sides.sellers`.
    pub submissions: Vec<f64>,
    /// `None` when there is no demand and therefore no market.
    pub price: Option<f64>,
    /// Executed purchases per buyer, aligned with `sides.buyers`.
    pub executed: Vec<f64>,
    /// Uncovered emissions per buyer.
    pub uncovered: Vec<f64>,
    /// Permits returned for the price support per seller (zero for old technology).
    pub cashed: Vec<f64>,
    /// Payoff per firm, indexed by firm id.
    pub payoffs: Vec<f64>,
}

impl MarketOutcome {
    pub fn total_uncovered(&self) -> f64 {
        self.uncovered.iter().sum()
    }

    pub fn total_cashed(&self) -> f64 {
        self.cashed.iter().sum()
    }

    pub fn total_submitted(&self) -> f64 {
        self.submissions.iter().sum()
    }
}

/// Per-firm payoffs for one period.
///
/// Old-technology sellers earn `price * e + profit`; new-technology sellers add
/// `P_g * (capacity - e)`; buyers pay the penalty on uncovered units and the price on
/// executed ones.
pub fn period_payoffs(
    sides: &MarketSides,
    submissions: &[f64],
    price: Option<f64>,
    executed: &[f64],
    profits: &[f64],
    penalty: f64,
    price_support: f64,
) -> Vec<f64> {
    let mut payoffs = profits.to_vec();
    let p = price.unwrap_or(0.0);
    for (k, s) in sides.sellers.iter().enumerate() {
        let e = submissions.get(k).copied().unwrap_or(0.0);
        let mut gain = p * e;
        if s.tech == Tech::New {
            gain += price_support * (s.capacity - e);
        }
        payoffs[s.firm] += gain;
    }
    for (k, b) in sides.buyers.iter().enumerate() {
        let x = executed.get(k).copied().unwrap_or(0.0);
        payoffs[b.firm] -= penalty * (b.need - x) + p * x;
    }
    payoffs
}

/// How a single period's orders are matched.
pub enum Matching<'a, R: Rng + ?Sized> {
    Proportional,
    Stochastic(&'a mut R),
}

/// Clears one period: solves the game (when there is demand), matches orders and settles payoffs.
pub fn clear_market<R: Rng + ?Sized>(
    positions: &[f64],
    technology: &TechnologyVector,
    profits: &[f64],
    penalty: f64,
    price_support: f64,
    matching: Matching<'_, R>,
) -> Result<MarketOutcome> {
    let sides = MarketSides::from_positions(positions, technology);
    let (submissions, price) = if sides.demand > 0.0 {
        let eq = solve_game(&sides, penalty, price_support)?;
        (eq.submissions, Some(eq.price))
    } else {
        (vec![0.0; sides.sellers.len()], None)
    };
    let total: f64 = submissions.iter().sum();
    let executed = match matching {
        Matching::Proportional => match_orders(&sides.buyers, total, sides.demand),
        Matching::Stochastic(rng) => match_orders_stochastic(&sides.buyers, total, sides.demand, rng),
    };
    let uncovered = sides
        .buyers
        .iter()
        .zip(&executed)
        .map(|(b, x)| b.need - x)
        .collect();
    let cashed = sides
        .sellers
        .iter()
        .zip(&submissions)
        .map(|(s, e)| match s.tech {
            Tech::New if price_support > 0.0 => s.capacity - e,
            _ => 0.0,
        })
        .collect();
    let payoffs = period_payoffs(&sides, &submissions, price, &executed, profits, penalty, price_support);
    Ok(MarketOutcome {
        sides,
        submissions,
        price,
        executed,
        uncovered,
        cashed,
        payoffs,
    })
}

/// [`clear_market`] with proportional matching.
pub fn clear_market_expected(
    positions: &[f64],
    technology: &TechnologyVector,
    profits: &[f64],
    penalty: f64,
    price_support: f64,
) -> Result<MarketOutcome> {
    clear_market::<rand_chacha::ChaCha8Rng>(
        positions,
        technology,
        profits,
        penalty,
        price_support,
        Matching::Proportional,
    )
}
