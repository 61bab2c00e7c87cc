//! Realized phases on economy paths and the seeded Monte Carlo ensemble.
//!
//! Path `k` of a run with master seed `s` draws from `ChaCha8Rng::seed_from_u64(s)`
//! switched to stream `k`, so every path's randomness is fixed by `(s, k)` alone and
//! results do not depend on execution order or worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adoption::{run_adoption, run_adoption_with, AdoptionTrajectory, LevelSource};
use crate::config::{EconomyPath, ExpectationMode, MatchingMode, ModelParams, Shock};
use crate::emissions::{growth_factor, period_profit, realized_increment, ProfitMode};
use crate::error::{Error, Result};
use crate::market::{clear_market, MarketOutcome, Matching};

/// Generator for path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws one economy path with per-period up-probabilities `q`.
pub fn draw_path<R: Rng + ?Sized>(q: &[f64], rng: &mut R) -> EconomyPath {
    EconomyPath(
        q.iter()
            .map(|p| if rng.gen::<f64>() < *p { Shock::Up } else { Shock::Down })
            .collect(),
    )
}

/// Probability of `path` under independent per-period shocks.
pub fn path_probability(path: &EconomyPath, q: &[f64]) -> Result<f64> {
    if path.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "path has {} periods but q has {}",
            path.len(),
            q.len()
        )));
    }
    Ok(path
        .0
        .iter()
        .zip(q)
        .map(|(s, p)| match s {
            Shock::Up => *p,
            Shock::Down => 1.0 - *p,
        })
        .product())
}

/// One realized phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub path: EconomyPath,
    pub outcomes: Vec<MarketOutcome>,
    /// Accumulated payoff per firm, adoption costs excluded.
    pub payoffs: Vec<f64>,
    /// Penalty receipts.
    pub x_in: f64,
    /// Price-support payments.
    pub x_out: f64,
}

impl PhaseSample {
    pub fn net(&self) -> f64 {
        self.x_in - self.x_out
    }

    pub fn uncovered_units(&self) -> f64 {
        self.outcomes.iter().map(MarketOutcome::total_uncovered).sum()
    }

    pub fn cashed_units(&self) -> f64 {
        self.outcomes.iter().map(MarketOutcome::total_cashed).sum()
    }

    pub fn realized_prices(&self) -> Vec<Option<f64>> {
        self.outcomes.iter().map(|o| o.price).collect()
    }
}

/// Realized cumulative emissions at the start of every period, `T + 1` entries per firm.
pub fn realized_levels(params: &ModelParams, trajectory: &AdoptionTrajectory, path: &EconomyPath) -> Vec<Vec<f64>> {
    let mut levels: Vec<f64> = params.firms.iter().map(|f| f.q0).collect();
    let mut out = vec![levels.clone()];
    for t in 0..params.horizon() {
        for (i, firm) in params.firms.iter().enumerate() {
            levels[i] *= growth_factor(firm, trajectory.tech_at(i, t), path.0[t]);
        }
        out.push(levels.clone());
    }
    out
}

/// Runs one phase on a realized path with the technology path held fixed.
pub fn simulate_phase(
    params: &ModelParams,
    trajectory: &AdoptionTrajectory,
    path: &EconomyPath,
    seed: u64,
) -> Result<PhaseSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_phase_with_rng(params, trajectory, path, &mut rng)
}

fn simulate_phase_with_rng<R: Rng + ?Sized>(
    params: &ModelParams,
    trajectory: &AdoptionTrajectory,
    path: &EconomyPath,
    rng: &mut R,
) -> Result<PhaseSample> {
    let horizon = params.horizon();
    if path.len() != horizon || trajectory.technology.len() != horizon {
        return Err(Error::InvalidInput(format!(
            "path ({}) and trajectory ({}) must both span {horizon} periods",
            path.len(),
            trajectory.technology.len()
        )));
    }
    let m = params.firm_count();
    let policy = &params.policy;
    let mut levels: Vec<f64> = params.firms.iter().map(|f| f.q0).collect();
    let mut outcomes = Vec::with_capacity(horizon);
    let mut payoffs = vec![0.0; m];
    let (mut x_in, mut x_out) = (0.0, 0.0);

    for t in 0..horizon {
        let shock = path.0[t];
        let technology = &trajectory.technology[t];
        let mut positions = Vec::with_capacity(m);
        let mut profits = Vec::with_capacity(m);
        for (i, firm) in params.firms.iter().enumerate() {
            let tech = technology.0[i];
            positions.push(realized_increment(firm, tech, shock, levels[i]) - policy.permits(i, t));
            profits.push(period_profit(firm, &params.economy, t, ProfitMode::Realized(shock)));
            levels[i] *= growth_factor(firm, tech, shock);
        }
        let matching = match params.options.matching {
            MatchingMode::Proportional => Matching::Proportional,
            MatchingMode::Stochastic => Matching::Stochastic(&mut *rng),
        };
        let outcome = clear_market(
            &positions,
            technology,
            &profits,
            policy.penalty,
            policy.price_support,
            matching,
        )
        .map_err(|e| e.in_period(t))?;
        x_in += policy.penalty * outcome.total_uncovered();
        x_out += policy.price_support * outcome.total_cashed();
        for (acc, p) in payoffs.iter_mut().zip(&outcome.payoffs) {
            *acc += p;
        }
        outcomes.push(outcome);
    }

    Ok(PhaseSample {
        path: path.clone(),
        outcomes,
        payoffs,
        x_in,
        x_out,
    })
}

/// Ledger of one Monte Carlo path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub path_index: u64,
    pub x_in: f64,
    pub x_out: f64,
    pub net: f64,
    pub uncovered_units: f64,
    pub cashed_units: f64,
}

impl SampleSummary {
    fn of(index: u64, sample: &PhaseSample) -> Self {
        SampleSummary {
            path_index: index,
            x_in: sample.x_in,
            x_out: sample.x_out,
            net: sample.net(),
            uncovered_units: sample.uncovered_units(),
            cashed_units: sample.cashed_units(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub seed: u64,
    pub count: usize,
    pub samples: Vec<SampleSummary>,
    /// Technology path shared by every sample (expected mode only).
    pub trajectory: Option<AdoptionTrajectory>,
}

impl EnsembleResult {
    pub fn nets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.net).collect()
    }

    /// Nets with the price-support outlay recomputed at another rate on the same cashed quantities.
    pub fn nets_at_support(&self, price_support: f64) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.x_in - price_support * s.cashed_units)
            .collect()
    }
}

/// Realized levels for one path, fed to the adoption loop in conditional mode.
struct PathLevels<'a> {
    params: &'a ModelParams,
    path: &'a EconomyPath,
}

impl LevelSource for PathLevels<'_> {
    fn levels_at(&mut self, t: usize, adoption: &[Option<usize>]) -> Vec<f64> {
        let partial = AdoptionTrajectory::fixed(adoption.to_vec(), self.params.horizon());
        realized_levels(self.params, &partial, self.path)[t].clone()
    }
}

/// Adoption trajectory for one realized path in conditional mode.
pub fn conditional_trajectory(params: &ModelParams, path: &EconomyPath) -> Result<AdoptionTrajectory> {
    let mut source = PathLevels { params, path };
    run_adoption_with(params, Some(&mut source), true)
}

/// Simulates `n` independent phases.
///
/// In expected mode the adoption trajectory is computed once and shared; in
/// conditional mode each path re-runs the adoption loop on its own realized levels.
pub fn monte_carlo(params: &ModelParams, n: usize, seed: u64) -> Result<EnsembleResult> {
    let trajectory = match params.options.expectation_mode {
        ExpectationMode::Expected => Some(run_adoption(params)?),
        ExpectationMode::Conditional => None,
    };
    monte_carlo_on(params, trajectory, n, seed)
}

/// Simulates `n` phases on a given shared trajectory (or per-path trajectories when `None`).
pub fn monte_carlo_on(
    params: &ModelParams,
    trajectory: Option<AdoptionTrajectory>,
    n: usize,
    seed: u64,
) -> Result<EnsembleResult> {
    if n == 0 {
        return Err(Error::InvalidInput("at least one path is required".into()));
    }
    let samples = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(seed, k);
            let path = draw_path(&params.economy.q, &mut rng);
            let sample = match &trajectory {
                Some(tr) => simulate_phase_with_rng(params, tr, &path, &mut rng)?,
                None => {
                    let tr = conditional_trajectory(params, &path)?;
                    simulate_phase_with_rng(params, &tr, &path, &mut rng)?
                }
            };
            Ok(SampleSummary::of(k, &sample))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleResult {
        seed,
        count: n,
        samples,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AllocationRule, EconomyParams, FirmParams, ModelOptions, PolicyParams, Tech};

    fn firm() -> FirmParams {
        FirmParams {
            q0: 100.0,
            u_old: 1.14,
            d_old: 1.06,
            u_new: 1.09,
            d_new: 1.03,
            cost_new: 40.0,
            s_up: 6.0,
            s_down: 4.0,
            risk_aversion: 0.0,
        }
    }

    fn params(pg: f64, beta: f64) -> ModelParams {
        let mut firms = vec![firm(); 3];
        firms[0].u_old = 1.16;
        firms[2].d_new = 1.01;
        ModelParams {
            policy: PolicyParams {
                horizon: 4,
                penalty: 10.0,
                price_support: pg,
                allocation: vec![
                    AllocationRule::Parametric { alpha: -0.5, beta },
                    AllocationRule::Parametric { alpha: -0.2, beta },
                    AllocationRule::Parametric { alpha: -1.0, beta: beta * 1.5 },
                ],
            },
            economy: EconomyParams::constant(0.5, 4, 0.02, 0.05),
            firms,
            options: ModelOptions::default(),
        }
    }

    fn mixed_trajectory() -> AdoptionTrajectory {
        AdoptionTrajectory::fixed(vec![Some(1), None, Some(0)], 4)
    }

    #[test]
    fn path_probabilities() {
        let q = [0.5; 8];
        let p = path_probability(&EconomyPath(vec![Shock::Down; 8]), &q).unwrap();
        assert_eq!(p, 0.00390625);
        assert_eq!(path_probability(&EconomyPath(vec![Shock::Up; 3]), &[1.0; 3]).unwrap(), 1.0);
        assert_eq!(
            path_probability(&EconomyPath(vec![Shock::Up, Shock::Down, Shock::Up]), &[1.0; 3]).unwrap(),
            0.0
        );
        let p = path_probability(&EconomyPath(vec![Shock::Up, Shock::Down]), &[0.3, 0.6]).unwrap();
        assert!((p - 0.12).abs() < 1e-15);
        assert!(path_probability(&EconomyPath(vec![Shock::Up]), &[0.3, 0.6]).is_err());
    }

    #[test]
    fn no_support_means_no_outlay() {
        let p = params(0.0, 10.0);
        let path = EconomyPath(vec![Shock::Up, Shock::Down, Shock::Down, Shock::Up]);
        let s = simulate_phase(&p, &mixed_trajectory(), &path, 1).unwrap();
        assert_eq!(s.x_out, 0.0);
        assert!(s.x_in >= 0.0);
    }

    #[test]
    fn generous_allocation_means_no_penalties() {
        let p = params(4.0, 1e5);
        let path = EconomyPath(vec![Shock::Up; 4]);
        let s = simulate_phase(&p, &mixed_trajectory(), &path, 1).unwrap();
        assert_eq!(s.x_in, 0.0);
        assert!(s.x_out > 0.0);
        assert!(s.outcomes.iter().all(|o| o.price.is_none()));
    }

    #[test]
    fn phases_are_deterministic() {
        let mut p = params(4.0, 10.0);
        p.options.matching = MatchingMode::Stochastic;
        let path = EconomyPath(vec![Shock::Up, Shock::Down, Shock::Up, Shock::Up]);
        let a = simulate_phase(&p, &mixed_trajectory(), &path, 77).unwrap();
        let b = simulate_phase(&p, &mixed_trajectory(), &path, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ledger_matches_outcomes() {
        let p = params(4.0, 10.0);
        for shocks in [[Shock::Up; 4], [Shock::Down; 4]] {
            let s = simulate_phase(&p, &mixed_trajectory(), &EconomyPath(shocks.to_vec()), 0).unwrap();
            let mut uncovered = 0.0;
            let mut cashed = 0.0;
            for o in &s.outcomes {
                for (b, (x, u)) in o.sides.buyers.iter().zip(o.executed.iter().zip(&o.uncovered)) {
                    assert!((x + u - b.need).abs() <= 1e-12 * b.need.max(1.0));
                    uncovered += u;
                }
                for (seller, (e, c)) in o.sides.sellers.iter().zip(o.submissions.iter().zip(&o.cashed)) {
                    if seller.tech == Tech::Old {
                        assert_eq!(*c, 0.0);
                    } else {
                        assert!((c - (seller.capacity - e)).abs() < 1e-12);
                    }
                    cashed += c;
                }
            }
            assert!((s.x_in - 10.0 * uncovered).abs() <= 1e-9 * s.x_in.max(1.0));
            assert!((s.x_out - 4.0 * cashed).abs() <= 1e-9 * s.x_out.max(1.0));
        }
    }

    #[test]
    fn realized_levels_follow_technology() {
        let p = params(0.0, 10.0);
        let path = EconomyPath(vec![Shock::Up; 4]);
        let levels = realized_levels(&p, &mixed_trajectory(), &path);
        assert_eq!(levels.len(), 5);
        assert!((levels[2][0] - 100.0 * 1.16 * 1.09).abs() < 1e-9);
        assert!((levels[1][2] - 100.0 * 1.09).abs() < 1e-9);
    }

    #[test]
    fn ensemble_is_seeded() {
        let p = params(3.0, 10.0);
        let a = monte_carlo(&p, 64, 5).unwrap();
        let b = monte_carlo(&p, 64, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count, 64);
        let c = monte_carlo(&p, 64, 6).unwrap();
        assert_ne!(a.nets(), c.nets());
        assert!(monte_carlo(&p, 0, 5).is_err());
    }

    #[test]
    fn certain_economy_has_no_dispersion() {
        let mut p = params(3.0, 10.0);
        p.economy.q = vec![1.0; 4];
        let e = monte_carlo(&p, 50, 11).unwrap();
        let nets = e.nets();
        assert!(nets.iter().all(|v| *v == nets[0]));
    }

    #[test]
    fn parallel_matches_sequential() {
        let p = params(3.0, 10.0);
        let e = monte_carlo(&p, 40, 3).unwrap();
        let tr = e.trajectory.clone().unwrap();
        for s in &e.samples {
            let mut rng = path_rng(3, s.path_index);
            let path = draw_path(&p.economy.q, &mut rng);
            let direct = simulate_phase_with_rng(&p, &tr, &path, &mut rng).unwrap();
            assert_eq!(direct.net(), s.net);
        }
    }

    #[test]
    fn conditional_mode_runs_per_path() {
        let mut p = params(3.0, 10.0);
        p.options.expectation_mode = ExpectationMode::Conditional;
        let e = monte_carlo(&p, 8, 2).unwrap();
        assert!(e.trajectory.is_none());
        assert_eq!(e.samples.len(), 8);
        assert_eq!(e, monte_carlo(&p, 8, 2).unwrap());
    }

    #[test]
    fn outlay_grows_with_support_on_frozen_outcomes() {
        let p = params(4.5, 10.0);
        let e = monte_carlo(&p, 100, 9).unwrap();
        let lo = e.nets_at_support(1.5);
        let hi = e.nets_at_support(4.5);
        for (a, b) in lo.iter().zip(&hi) {
            assert!(b <= a);
        }
        for (s, n) in e.samples.iter().zip(&hi) {
            assert!((s.net - n).abs() <= 1e-9 * n.abs().max(1.0));
        }
    }
}
