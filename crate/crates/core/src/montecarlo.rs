//! Population-sampling evaluation of profit.
//!
//! Each replication draws every sensor's reservation wage and every user's
//! reservation draws, then counts participants with strict inequalities.
//! Replication `r` is seeded from `(master seed, r)` alone, so estimates are
//! bit-identical whatever the thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{check_coalition, expected_supply};
use crate::error::{MarketError, Result};
use crate::market::{BundlePriceSchedule, MarketConfig, PriceSchedule};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Which sensor count the quality function sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupplyReading {
    /// Quality from the expected count `I * F(p_buy)`; sensors are still
    /// sampled for the cost. Unbiased for the analytic engine.
    #[default]
    Average,
    /// Quality from the realized count of this replication.
    Realized,
}

/// One sampled market.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketRealization {
    pub seed: u64,
    /// `wages[k][i]`: reservation wage of sensor `i` of provider `k`.
    pub wages: Vec<Vec<f64>>,
    /// `reservations[j][k]`: draw `theta_{j,k}` of user `j` for service `k`.
    pub reservations: Vec<Vec<f64>>,
}

impl MarketRealization {
    /// Sensors of provider `k` that accept `buying_price`.
    pub fn supply(&self, k: usize, buying_price: f64) -> usize {
        self.wages[k].iter().filter(|&&w| buying_price - w > 0.0).count()
    }
}

/// Seed of replication `replication` under `master`: two rounds of the
/// SplitMix64 finalizer over the pair.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(master) ^ replication)
}

pub fn sample_market(cfg: &MarketConfig, seed: u64) -> MarketRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wages = cfg
        .providers
        .iter()
        .map(|p| (0..p.count).map(|_| p.wage_dist.sample(&mut rng)).collect())
        .collect();
    let reservations = (0..cfg.users.count)
        .map(|_| {
            cfg.users
                .reservation_dist
                .iter()
                .map(|d| d.sample(&mut rng))
                .collect()
        })
        .collect();
    MarketRealization {
        seed,
        wages,
        reservations,
    }
}

fn check_realization(cfg: &MarketConfig, real: &MarketRealization) -> Result<()> {
    if real.wages.len() != cfg.providers.len() {
        return Err(MarketError::LengthMismatch {
            what: "sampled sensor pools",
            expected: cfg.providers.len(),
            found: real.wages.len(),
        });
    }
    if real.reservations.len() != cfg.users.count {
        return Err(MarketError::LengthMismatch {
            what: "sampled users",
            expected: cfg.users.count,
            found: real.reservations.len(),
        });
    }
    Ok(())
}

fn member_quality(
    cfg: &MarketConfig,
    k: usize,
    buying_price: f64,
    realized: usize,
    reading: SupplyReading,
) -> Result<f64> {
    let p = cfg.provider(k)?;
    let s = match reading {
        SupplyReading::Average => expected_supply(&p.wage_dist, buying_price, p.count),
        SupplyReading::Realized => realized as f64,
    };
    cfg.provider_quality(k, s)
}

/// Profit of provider `k` selling alone in one sampled market.
pub fn realized_profit_single(
    cfg: &MarketConfig,
    real: &MarketRealization,
    k: usize,
    prices: PriceSchedule,
    reading: SupplyReading,
) -> Result<f64> {
    cfg.provider(k)?;
    check_realization(cfg, real)?;
    let s = real.supply(k, prices.buying_price);
    let q = member_quality(cfg, k, prices.buying_price, s, reading)?;
    let fee = prices.subscription_fee;
    let subscribers = real
        .reservations
        .iter()
        .filter(|theta| q * theta[k] - fee > 0.0)
        .count();
    Ok(fee * subscribers as f64 - prices.buying_price * s as f64)
}

/// Profit of `coalition` selling a bundle in one sampled market.
pub fn realized_profit_bundle(
    cfg: &MarketConfig,
    real: &MarketRealization,
    coalition: &[usize],
    prices: &BundlePriceSchedule,
    reading: SupplyReading,
) -> Result<f64> {
    check_coalition(cfg, coalition)?;
    check_realization(cfg, real)?;
    if prices.buying_prices.len() != coalition.len() {
        return Err(MarketError::LengthMismatch {
            what: "buying prices",
            expected: coalition.len(),
            found: prices.buying_prices.len(),
        });
    }
    let mut cost = 0.0;
    let mut qualities = Vec::with_capacity(coalition.len());
    for (&k, &p) in coalition.iter().zip(&prices.buying_prices) {
        let s = real.supply(k, p);
        qualities.push(member_quality(cfg, k, p, s, reading)?);
        cost += p * s as f64;
    }
    let fee = prices.bundle_fee;
    let subscribers = real
        .reservations
        .iter()
        .filter(|theta| {
            let value: f64 = coalition.iter().zip(&qualities).map(|(&k, q)| q * theta[k]).sum();
            value - fee > 0.0
        })
        .count();
    Ok(fee * subscribers as f64 - cost)
}

/// Prices being simulated, and who charges them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Offer {
    Single { provider: usize, prices: PriceSchedule },
    Bundle { coalition: Vec<usize>, prices: BundlePriceSchedule },
}

impl Offer {
    fn profit(&self, cfg: &MarketConfig, real: &MarketRealization, reading: SupplyReading) -> Result<f64> {
        match self {
            Self::Single { provider, prices } => realized_profit_single(cfg, real, *provider, *prices, reading),
            Self::Bundle { coalition, prices } => realized_profit_bundle(cfg, real, coalition, prices, reading),
        }
    }
}

/// Profit of each of `replications` independent sampled markets, in
/// replication order.
pub fn simulate_profits(
    cfg: &MarketConfig,
    offer: &Offer,
    replications: usize,
    seed: u64,
    reading: SupplyReading,
) -> Result<Vec<f64>> {
    (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let real = sample_market(cfg, replication_seed(seed, r));
            offer.profit(cfg, &real, reading)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replications: usize,
    pub confidence: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ProfitEstimate {
    /// Sample mean, unbiased-variance standard error and a 95% normal
    /// interval. Sums run in slice order.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(MarketError::InvalidArgument(format!(
                "need at least 2 replications, got {n}"
            )));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        let std_error = (ss / (n - 1) as f64 / n as f64).sqrt();
        Ok(Self {
            mean,
            std_error,
            replications: n,
            confidence: 0.95,
            ci_low: mean - Z_95 * std_error,
            ci_high: mean + Z_95 * std_error,
        })
    }
}

pub fn estimate_profit(
    cfg: &MarketConfig,
    offer: &Offer,
    replications: usize,
    seed: u64,
    reading: SupplyReading,
) -> Result<ProfitEstimate> {
    if replications < 2 {
        return Err(MarketError::InvalidArgument(format!(
            "need at least 2 replications, got {replications}"
        )));
    }
    ProfitEstimate::from_samples(&simulate_profits(cfg, offer, replications, seed, reading)?)
}
