//! Market description and the pointwise utility and quality formulas every
//! evaluation engine shares.
//!
//! A market has `K` providers. Provider `k` buys data from its own pool of
//! `I_k` sensors, each with a random reservation wage, and sells a service to
//! a common pool of `J` users whose reservation price for service `k` is the
//! service quality times an independent draw `theta_{j,k}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result, ValidationError, Violation};

/// Default base of the logarithm in the quality function.
pub const DEFAULT_LOG_BASE: f64 = 2.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_REPLICATIONS: usize = 10_000;
pub const DEFAULT_SEED: u64 = 42;

/// Distribution of a reservation wage (sensors) or reservation price (users).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReservationDistribution {
    Uniform { lower: f64, upper: f64 },
}

impl ReservationDistribution {
    pub const fn uniform(lower: f64, upper: f64) -> Self {
        Self::Uniform { lower, upper }
    }

    /// Uniform on `[0, 1]`.
    pub const fn standard() -> Self {
        Self::uniform(0.0, 1.0)
    }

    pub fn lower(&self) -> f64 {
        match *self {
            Self::Uniform { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            Self::Uniform { upper, .. } => upper,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => 0.5 * (lower + upper),
        }
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
        }
    }

    fn check(&self, field: &str, out: &mut Vec<Violation>) {
        match *self {
            Self::Uniform { lower, upper } => {
                if !lower.is_finite() || !upper.is_finite() {
                    out.push(Violation::new(field, "bounds must be finite"));
                } else if lower >= upper {
                    out.push(Violation::new(
                        field,
                        format!("lower ({lower}) must be below upper ({upper})"),
                    ));
                }
            }
        }
    }
}

impl Default for ReservationDistribution {
    fn default() -> Self {
        Self::standard()
    }
}

/// The pool of sensors one provider can buy data from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPopulation {
    pub count: usize,
    pub wage_dist: ReservationDistribution,
    pub quality_factor: f64,
}

impl Default for SensorPopulation {
    fn default() -> Self {
        Self {
            count: 50,
            wage_dist: ReservationDistribution::standard(),
            quality_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPopulation {
    pub count: usize,
    /// One entry per provider: the distribution of `theta_{j,k}`.
    pub reservation_dist: Vec<ReservationDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub providers: Vec<SensorPopulation>,
    pub users: UserPopulation,
    pub log_base: f64,
    pub optimizer_tolerance: f64,
    pub mc_replications: usize,
    pub mc_seed: u64,
    /// Providers that sell as a bundle; `None` means all of them.
    pub coalition: Option<Vec<usize>>,
}

impl Default for MarketConfig {
    /// Two symmetric providers, 50 sensors each, 200 users, every wage and
    /// reservation draw uniform on `[0, 1]`, quality factor 1.
    fn default() -> Self {
        Self::symmetric(2)
    }
}

impl MarketConfig {
    /// `providers` identical providers with the default populations.
    pub fn symmetric(providers: usize) -> Self {
        Self {
            providers: vec![SensorPopulation::default(); providers],
            users: UserPopulation {
                count: 200,
                reservation_dist: vec![ReservationDistribution::standard(); providers],
            },
            log_base: DEFAULT_LOG_BASE,
            optimizer_tolerance: DEFAULT_TOLERANCE,
            mc_replications: DEFAULT_REPLICATIONS,
            mc_seed: DEFAULT_SEED,
            coalition: None,
        }
    }

    pub fn with_quality_factor(mut self, provider: usize, q: f64) -> Self {
        self.providers[provider].quality_factor = q;
        self
    }

    pub fn with_sensor_count(mut self, provider: usize, count: usize) -> Self {
        self.providers[provider].count = count;
        self
    }

    pub fn with_user_count(mut self, count: usize) -> Self {
        self.users.count = count;
        self
    }

    pub fn provider_count(&self) -> usize {
        self.providers.len()
    }

    pub fn provider(&self, k: usize) -> Result<&SensorPopulation> {
        self.providers.get(k).ok_or(MarketError::IndexOutOfRange {
            index: k,
            len: self.providers.len(),
        })
    }

    /// The configured coalition, or every provider when none is set.
    pub fn coalition_or_all(&self) -> Vec<usize> {
        self.coalition
            .clone()
            .unwrap_or_else(|| (0..self.providers.len()).collect())
    }

    /// Quality of provider `k` when `supply` sensors participate.
    /// `supply` may be fractional (an expectation).
    pub fn provider_quality(&self, k: usize, supply: f64) -> Result<f64> {
        let p = self.provider(k)?;
        quality_with_base(p.quality_factor, supply, p.count, self.log_base)
    }

    /// Highest quality provider `k` can reach: every sensor participating.
    pub fn max_quality(&self, k: usize) -> Result<f64> {
        let p = self.provider(k)?;
        quality_with_base(p.quality_factor, p.count as f64, p.count, self.log_base)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.providers.is_empty() {
            out.push(Violation::new("providers", "at least one provider is required"));
        }
        for (k, p) in self.providers.iter().enumerate() {
            if p.count < 1 {
                out.push(Violation::new(
                    format!("providers[{k}].sensors.count"),
                    "must be at least 1",
                ));
            }
            p.wage_dist
                .check(&format!("providers[{k}].sensors.wage_dist"), &mut out);
            if !(p.quality_factor.is_finite() && p.quality_factor >= 0.0) {
                out.push(Violation::new(
                    format!("providers[{k}].quality_factor"),
                    "must be finite and non-negative",
                ));
            }
        }
        if self.users.count < 1 {
            out.push(Violation::new("users.count", "must be at least 1"));
        }
        if self.users.reservation_dist.len() != self.providers.len() {
            out.push(Violation::new(
                "users.reservation_dist",
                format!(
                    "length {} does not match provider count {}",
                    self.users.reservation_dist.len(),
                    self.providers.len()
                ),
            ));
        }
        for (k, d) in self.users.reservation_dist.iter().enumerate() {
            d.check(&format!("users.reservation_dist[{k}]"), &mut out);
        }
        if !(self.log_base.is_finite() && self.log_base > 0.0 && self.log_base != 1.0) {
            out.push(Violation::new("log_base", "must be positive, finite and not 1"));
        }
        if !(self.optimizer_tolerance.is_finite() && self.optimizer_tolerance > 0.0) {
            out.push(Violation::new("optimizer_tolerance", "must be positive and finite"));
        }
        if self.mc_replications < 1 {
            out.push(Violation::new("mc_replications", "must be at least 1"));
        }
        if let Some(coalition) = &self.coalition {
            if coalition.is_empty() {
                out.push(Violation::new("coalition", "must not be empty"));
            }
            for (i, &k) in coalition.iter().enumerate() {
                if k >= self.providers.len() {
                    out.push(Violation::new(
                        format!("coalition[{i}]"),
                        format!("provider {k} does not exist"),
                    ));
                } else if coalition[..i].contains(&k) {
                    out.push(Violation::new(
                        format!("coalition[{i}]"),
                        format!("provider {k} listed twice"),
                    ));
                }
            }
        }
        out
    }
}

/// Returns the config unchanged when valid, otherwise every violation.
pub fn validate_config(cfg: MarketConfig) -> Result<MarketConfig, ValidationError> {
    let v = cfg.violations();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(ValidationError(v))
    }
}

/// Who sets prices: one provider alone, or a coalition selling a bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Seller {
    Single(usize),
    Coalition(Vec<usize>),
}

impl Seller {
    pub fn members(&self) -> Vec<usize> {
        match self {
            Self::Single(k) => vec![*k],
            Self::Coalition(m) => m.clone(),
        }
    }
}

/// A single provider's prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub buying_price: f64,
    pub subscription_fee: f64,
}

impl PriceSchedule {
    pub fn new(buying_price: f64, subscription_fee: f64) -> Self {
        Self {
            buying_price,
            subscription_fee,
        }
    }
}

/// Prices of a coalition selling a bundle: one buying price per member (in
/// coalition order) and a single bundle fee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundlePriceSchedule {
    pub buying_prices: Vec<f64>,
    pub bundle_fee: f64,
}

impl BundlePriceSchedule {
    pub fn new(buying_prices: Vec<f64>, bundle_fee: f64) -> Self {
        Self {
            buying_prices,
            bundle_fee,
        }
    }
}

/// Utility of a sensor offered `buying_price` with reservation wage `wage`.
/// The sensor sells only when this is strictly positive.
pub fn sensor_utility(buying_price: f64, wage: f64) -> f64 {
    buying_price - wage
}

pub fn sensor_participates(buying_price: f64, wage: f64) -> bool {
    sensor_utility(buying_price, wage) > 0.0
}

/// `q * log2(1 + s / I)`.
pub fn quality(q: f64, supply: f64, sensors: usize) -> Result<f64> {
    quality_with_base(q, supply, sensors, DEFAULT_LOG_BASE)
}

pub fn quality_with_base(q: f64, supply: f64, sensors: usize, base: f64) -> Result<f64> {
    if !(supply.is_finite() && supply >= 0.0) {
        return Err(MarketError::InvalidArgument(format!(
            "sensor supply must be finite and non-negative, got {supply}"
        )));
    }
    if sensors < 1 {
        return Err(MarketError::InvalidArgument(
            "sensor pool must contain at least one sensor".into(),
        ));
    }
    if supply == 0.0 {
        return Ok(0.0);
    }
    Ok(q * (supply / sensors as f64).ln_1p() / base.ln())
}

/// Utility of a user with draw `theta` for a service of quality `quality`.
pub fn user_utility_single(quality: f64, theta: f64, fee: f64) -> f64 {
    quality * theta - fee
}

/// Utility of a user for a bundle: total reservation price minus the fee.
pub fn user_utility_bundle(qualities: &[f64], thetas: &[f64], bundle_fee: f64) -> Result<f64> {
    if qualities.len() != thetas.len() {
        return Err(MarketError::LengthMismatch {
            what: "reservation draws",
            expected: qualities.len(),
            found: thetas.len(),
        });
    }
    if qualities.is_empty() {
        return Err(MarketError::InvalidArgument("bundle must contain at least one service".into()));
    }
    let total: f64 = qualities.iter().zip(thetas).map(|(q, t)| q * t).sum();
    Ok(total - bundle_fee)
}
