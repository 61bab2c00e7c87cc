//! Reference five-firm, eight-period scenario.
//!
//! Firm 0 emits the most and pays the most to switch; firm 4 the least. Shared values:
//! penalty 10, initial level 100, up-probability 0.5. Parameters only known as ranges
//! are interpolated linearly across firms, so firm 2 sits at every midpoint.

use crate::config::{
    interpolate_allocation, interpolate_firms, EconomyParams, FirmParams, ModelOptions, ModelParams, PolicyParams,
};

pub const FIRMS: usize = 5;
pub const HORIZON: usize = 8;
pub const PENALTY: f64 = 10.0;
pub const PRICE_SUPPORT: f64 = 5.0;
pub const UP_PROBABILITY: f64 = 0.5;
pub const INTEREST_RATE: f64 = 0.26;
pub const PROFIT_GROWTH: f64 = 0.28;

/// `(alpha, beta)` for the first and last firm.
pub const ALLOCATION_HIGH: (f64, f64) = (-1.5, 25.0);
pub const ALLOCATION_LOW: (f64, f64) = (-0.4, 20.0);

/// Price-support levels of the sensitivity sweep.
pub const SUPPORT_SWEEP: [f64; 4] = [1.5, 2.5, 3.5, 4.5];

pub fn high_emitter() -> FirmParams {
    FirmParams {
        q0: 100.0,
        u_old: 1.15,
        d_old: 1.07,
        u_new: 1.10,
        d_new: 1.04,
        cost_new: 100.0,
        s_up: 6.0,
        s_down: 4.0,
        risk_aversion: 0.0,
    }
}

pub fn low_emitter() -> FirmParams {
    FirmParams {
        u_old: 1.13,
        d_old: 1.05,
        u_new: 1.08,
        d_new: 1.02,
        cost_new: 80.0,
        ..high_emitter()
    }
}

/// The reference scenario at a given price-support level.
pub fn reference(price_support: f64) -> ModelParams {
    ModelParams {
        policy: PolicyParams {
            horizon: HORIZON,
            penalty: PENALTY,
            price_support,
            allocation: interpolate_allocation(ALLOCATION_HIGH, ALLOCATION_LOW, FIRMS).expect("non-empty"),
        },
        economy: EconomyParams::constant(UP_PROBABILITY, HORIZON, INTEREST_RATE, PROFIT_GROWTH),
        firms: interpolate_firms(&high_emitter(), &low_emitter(), FIRMS).expect("non-empty"),
        options: ModelOptions::default(),
    }
}
