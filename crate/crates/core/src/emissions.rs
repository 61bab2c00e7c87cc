//! Allocation schedules, binomial emission dynamics and expected positions.

use serde::{Deserialize, Serialize};

use crate::config::{EconomyParams, FirmParams, PolicyParams, Shock, Tech, TechnologyVector};

/// Permits issued in period `t` by the parametric schedule `beta * (t + 1)^alpha`.
pub fn allocation(alpha: f64, beta: f64, t: usize) -> f64 {
    beta * ((t + 1) as f64).powf(alpha)
}

pub fn growth_factor(firm: &FirmParams, tech: Tech, shock: Shock) -> f64 {
    match (tech, shock) {
        (Tech::Old, Shock::Up) => firm.u_old,
        (Tech::Old, Shock::Down) => firm.d_old,
        (Tech::New, Shock::Up) => firm.u_new,
        (Tech::New, Shock::Down) => firm.d_new,
    }
}

/// One-period expected growth factor `q*u + (1-q)*d`.
pub fn expected_factor(firm: &FirmParams, tech: Tech, q: f64) -> f64 {
    q * growth_factor(firm, tech, Shock::Up) + (1.0 - q) * growth_factor(firm, tech, Shock::Down)
}

fn tech_at(adoption: Option<usize>, t: usize) -> Tech {
    match adoption {
        Some(tau) if tau <= t => Tech::New,
        _ => Tech::Old,
    }
}

/// Known emission levels from which expected trajectories are projected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionAnchor {
    pub period: usize,
    pub levels: Vec<f64>,
}

impl EmissionAnchor {
    /// Anchor at `t = 0` on every firm's initial emissions.
    pub fn initial(firms: &[FirmParams]) -> Self {
        EmissionAnchor {
            period: 0,
            levels: firms.iter().map(|f| f.q0).collect(),
        }
    }
}

/// Expected cumulative emissions at `t`, projected from `level` known at `from`.
pub fn projected_level(
    firm: &FirmParams,
    adoption: Option<usize>,
    from: usize,
    level: f64,
    t: usize,
    q: &[f64],
) -> f64 {
    (from..t).fold(level, |acc, s| acc * expected_factor(firm, tech_at(adoption, s), q[s]))
}

/// Expected cumulative emissions at `t` starting from `q0`, switching to new factors at the adoption period.
pub fn expected_emission_level(firm: &FirmParams, adoption: Option<usize>, t: usize, q: &[f64]) -> f64 {
    projected_level(firm, adoption, 0, firm.q0, t, q)
}

/// Expected emissions produced over period `t`, for which permits are owed at `t + 1`.
pub fn expected_increment(firm: &FirmParams, adoption: Option<usize>, t: usize, q: &[f64]) -> f64 {
    let level = expected_emission_level(firm, adoption, t, q);
    level * (expected_factor(firm, tech_at(adoption, t), q[t]) - 1.0)
}

pub fn realized_increment(firm: &FirmParams, tech: Tech, shock: Shock, level: f64) -> f64 {
    level * (growth_factor(firm, tech, shock) - 1.0)
}

/// Expected net permit positions for period `t + 1`: negative values are excess permits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionTable {
    /// Settlement period `t + 1`.
    pub period: usize,
    pub technology: TechnologyVector,
    pub positions: Vec<f64>,
}

/// Expected positions `E[increment] - allocation` at period `t`, projected from `anchor`.
pub fn expected_positions_from(
    firms: &[FirmParams],
    policy: &PolicyParams,
    adoption: &[Option<usize>],
    anchor: &EmissionAnchor,
    t: usize,
    q: &[f64],
) -> PositionTable {
    debug_assert!(t >= anchor.period);
    let positions = firms
        .iter()
        .enumerate()
        .map(|(i, firm)| {
            let level = projected_level(firm, adoption[i], anchor.period, anchor.levels[i], t, q);
            let increment = level * (expected_factor(firm, tech_at(adoption[i], t), q[t]) - 1.0);
            increment - policy.permits(i, t)
        })
        .collect();
    PositionTable {
        period: t + 1,
        technology: TechnologyVector::from_adoption(adoption, t),
        positions,
    }
}

/// Expected positions projected from every firm's `q0`.
pub fn expected_positions(
    firms: &[FirmParams],
    policy: &PolicyParams,
    adoption: &[Option<usize>],
    t: usize,
    q: &[f64],
) -> PositionTable {
    expected_positions_from(firms, policy, adoption, &EmissionAnchor::initial(firms), t, q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfitMode {
    Realized(Shock),
    Expected,
}

/// Production profit over period `t`, appreciated by `(1 + rho)^(t + 1)`.
pub fn period_profit(firm: &FirmParams, economy: &EconomyParams, t: usize, mode: ProfitMode) -> f64 {
    let base = match mode {
        ProfitMode::Realized(Shock::Up) => firm.s_up,
        ProfitMode::Realized(Shock::Down) => firm.s_down,
        ProfitMode::Expected => {
            let q = economy.q[t];
            q * firm.s_up + (1.0 - q) * firm.s_down
        }
    };
    (1.0 + economy.rho).powi(t as i32 + 1) * base
}
