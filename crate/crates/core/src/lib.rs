//! Pricing, bundling and profit sharing for providers that buy sensing data
//! from sensor owners and resell processed services to users.
//!
//! Two evaluation engines share the [`market`] formulas: [`analytic`]
//! works with expected supply and demand, [`montecarlo`] samples concrete
//! populations. [`optimize`] finds profit-maximizing prices and
//! [`coalition`] divides bundle profit between providers.

pub mod analytic;
pub mod coalition;
pub mod config;
pub mod error;
pub mod grid;
pub mod market;
pub mod montecarlo;
pub mod optimize;
pub mod regions;

#[cfg(test)]
#[path = "../tests/support/oracles.rs"]
mod test_oracles;

pub use analytic::{
    bundle_demand, bundle_profit, expected_supply, profit_surface, single_demand, single_profit,
    weighted_uniform_sum_tail, MarketOutcome, ProfitSurface,
};
pub use config::{load_config, parse_config, ConfigError};
pub use coalition::{
    characteristic_function, cooperation_gains, nash_bargaining, shapley, solve_coalitions,
    sweep_quality_factor, Allocation, CoalitionSolution, CoalitionValue, CooperationGains,
    SharingMethod, SweepRow,
};
pub use error::{MarketError, Result, ValidationError, Violation};
pub use grid::Axis;
pub use montecarlo::{
    estimate_profit, realized_profit_bundle, realized_profit_single, sample_market,
    simulate_profits, MarketRealization, Offer, ProfitEstimate, SupplyReading,
};
pub use regions::{classify_user, Fees, UserRegion};
pub use optimize::{
    grid_ascent, grid_oracle, maximize_prices_bundle, maximize_prices_single, maximize_unimodal_1d,
    GridMaximum, Maximum1d, OptimizationResult,
};
pub use market::{
    quality, sensor_utility, user_utility_bundle, user_utility_single, validate_config,
    BundlePriceSchedule, MarketConfig, PriceSchedule, ReservationDistribution, Seller,
    SensorPopulation, UserPopulation,
};
