//! Fixtures shared by the criterion benches.

use sensmarket_core::MarketConfig;

/// Two-provider market with provider 2's quality factor set to `q2`.
pub fn two_provider_market(q2: f64) -> MarketConfig {
    MarketConfig::default().with_quality_factor(1, q2)
}

/// `n` identical providers, for scaling the coalition enumeration.
pub fn symmetric_market(n: usize) -> MarketConfig {
    MarketConfig::symmetric(n)
}
