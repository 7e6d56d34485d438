//! Cooperative profit sharing between providers that sell a bundle.
//!
//! The worth of a set of providers is the optimal profit it earns: a single
//! provider's standalone optimum, or the jointly optimized bundle of a larger
//! set. Grand-coalition profit is split by the Shapley value or by the Nash
//! bargaining solution with standalone profits as the disagreement point.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::market::{BundlePriceSchedule, MarketConfig};
use crate::optimize::{maximize_prices_bundle, maximize_prices_single};

/// Largest game solved by exact subset enumeration.
pub const MAX_PLAYERS: usize = 10;

/// `v(S)` for every subset `S` of a set of providers.
///
/// Subsets are bitmasks over positions in `players`; bit `i` stands for
/// provider `players[i]`. `v(empty) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionValue {
    players: Vec<usize>,
    values: Vec<f64>,
}

impl CoalitionValue {
    /// `values[mask]` for every mask in `0..2^K`; `values[0]` is ignored.
    pub fn new(players: Vec<usize>, mut values: Vec<f64>) -> Result<Self> {
        check_player_count(players.len())?;
        let expected = 1usize << players.len();
        if values.len() != expected {
            return Err(MarketError::LengthMismatch {
                what: "coalition values",
                expected,
                found: values.len(),
            });
        }
        values[0] = 0.0;
        Ok(Self { players, values })
    }

    /// Builds the function from explicit subsets of provider ids. Every
    /// non-empty subset of `players` must be present.
    pub fn from_subsets(players: Vec<usize>, subsets: &BTreeMap<Vec<usize>, f64>) -> Result<Self> {
        check_player_count(players.len())?;
        let mut values = vec![0.0; 1 << players.len()];
        for (mask, slot) in values.iter_mut().enumerate().skip(1) {
            let mut members: Vec<usize> = members_of(&players, mask);
            members.sort_unstable();
            let found = subsets.iter().find(|(k, _)| {
                let mut k = (*k).clone();
                k.sort_unstable();
                k == members
            });
            match found {
                Some((_, &v)) => *slot = v,
                None => return Err(MarketError::IncompleteGame(members)),
            }
        }
        Ok(Self { players, values })
    }

    /// Builds the function by evaluating `worth` on each mask.
    pub fn from_fn(players: Vec<usize>, worth: impl Fn(usize) -> f64) -> Result<Self> {
        check_player_count(players.len())?;
        let values = (0..1usize << players.len())
            .map(|m| if m == 0 { 0.0 } else { worth(m) })
            .collect();
        Ok(Self { players, values })
    }

    pub fn players(&self) -> &[usize] {
        &self.players
    }

    pub fn player_count(&self) -> usize {
        self.players.len()
    }

    pub fn value(&self, mask: usize) -> f64 {
        self.values[mask]
    }

    pub fn grand(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `v({players[position]})`.
    pub fn standalone(&self, position: usize) -> f64 {
        self.values[1 << position]
    }

    /// Provider ids in `mask`.
    pub fn members(&self, mask: usize) -> Vec<usize> {
        members_of(&self.players, mask)
    }

    /// `v(S + T) >= v(S) + v(T)` for all disjoint non-empty `S`, `T`, up to
    /// `slack`.
    pub fn is_superadditive(&self, slack: f64) -> bool {
        let full = self.values.len() - 1;
        (1..=full).all(|s| {
            let rest = full & !s;
            // Enumerate non-empty submasks of the complement.
            let mut t = rest;
            while t > 0 {
                if self.values[s | t] + slack < self.values[s] + self.values[t] {
                    return false;
                }
                t = (t - 1) & rest;
            }
            true
        })
    }
}

fn check_player_count(k: usize) -> Result<()> {
    if k == 0 || k > MAX_PLAYERS {
        return Err(MarketError::InvalidArgument(format!(
            "games need between 1 and {MAX_PLAYERS} players, got {k}"
        )));
    }
    Ok(())
}

fn members_of(players: &[usize], mask: usize) -> Vec<usize> {
    players
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, &p)| p)
        .collect()
}

/// Optimal value and prices of every coalition.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSolution {
    pub values: CoalitionValue,
    /// `prices[mask]`: optimal bundle prices of that coalition (one buying
    /// price for singletons); `prices[0]` is empty.
    pub prices: Vec<BundlePriceSchedule>,
}

/// Solves every non-empty subset of `providers` to optimality.
pub fn solve_coalitions(cfg: &MarketConfig, providers: &[usize], tol: f64) -> Result<CoalitionSolution> {
    check_player_count(providers.len())?;
    crate::analytic::check_coalition(cfg, providers)?;
    let solved: Vec<(f64, BundlePriceSchedule)> = (1..1usize << providers.len())
        .into_par_iter()
        .map(|mask| {
            let members = members_of(providers, mask);
            if let [k] = members[..] {
                let r = maximize_prices_single(cfg, k, tol)?;
                if !r.converged {
                    return Err(MarketError::NotConverged(format!("provider {k} alone")));
                }
                let p = BundlePriceSchedule::new(vec![r.prices.buying_price], r.prices.subscription_fee);
                Ok((r.profit, p))
            } else {
                let r = maximize_prices_bundle(cfg, &members, tol)?;
                if !r.converged {
                    return Err(MarketError::NotConverged(format!("bundle {members:?}")));
                }
                Ok((r.profit, r.prices))
            }
        })
        .collect::<Result<_>>()?;

    let mut values = vec![0.0];
    let mut prices = vec![BundlePriceSchedule::new(Vec::new(), 0.0)];
    for (v, p) in solved {
        values.push(v);
        prices.push(p);
    }
    Ok(CoalitionSolution {
        values: CoalitionValue::new(providers.to_vec(), values)?,
        prices,
    })
}

/// `v(S)` for every non-empty subset of `providers`.
pub fn characteristic_function(cfg: &MarketConfig, providers: &[usize], tol: f64) -> Result<CoalitionValue> {
    Ok(solve_coalitions(cfg, providers, tol)?.values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharingMethod {
    Shapley,
    NashBargaining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooperationGains {
    /// Share minus standalone profit, per player.
    pub gains: Vec<f64>,
    pub individually_rational: bool,
    /// Highest integration cost each player would still accept; equal to its
    /// gain.
    pub max_integration_cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub method: SharingMethod,
    pub players: Vec<usize>,
    pub shares: Vec<f64>,
    pub gains: Option<CooperationGains>,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.shares.iter().sum()
    }
}

/// Exact Shapley value by enumeration over all coalitions:
/// `phi_i = sum_{S not containing i} |S|! (K - |S| - 1)! / K! (v(S + i) - v(S))`.
pub fn shapley(v: &CoalitionValue) -> Allocation {
    let k = v.player_count();
    let fact: Vec<f64> = (0..=k)
        .scan(1.0, |acc, n| {
            if n > 0 {
                *acc *= n as f64;
            }
            Some(*acc)
        })
        .collect();
    let shares = (0..k)
        .map(|i| {
            let bit = 1usize << i;
            (0..1usize << k)
                .filter(|s| s & bit == 0)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    let weight = fact[size] * fact[k - size - 1] / fact[k];
                    weight * (v.value(s | bit) - v.value(s))
                })
                .sum()
        })
        .collect();
    Allocation {
        method: SharingMethod::Shapley,
        players: v.players().to_vec(),
        shares,
        gains: None,
    }
}

/// Nash bargaining with equal bargaining power: every player gets its
/// disagreement payoff plus an equal part of the surplus.
pub fn nash_bargaining(grand: f64, disagreement: &[f64]) -> Result<Allocation> {
    if disagreement.is_empty() {
        return Err(MarketError::InvalidArgument("bargaining needs at least one player".into()));
    }
    let total: f64 = disagreement.iter().sum();
    if grand < total {
        return Err(MarketError::Infeasible {
            grand,
            disagreement: total,
        });
    }
    let each = (grand - total) / disagreement.len() as f64;
    Ok(Allocation {
        method: SharingMethod::NashBargaining,
        players: (0..disagreement.len()).collect(),
        shares: disagreement.iter().map(|d| d + each).collect(),
        gains: None,
    })
}

/// Fills in each player's gain over its standalone profit. Gains within
/// `1e-9` (relative to the grand value) below zero count as zero when
/// judging individual rationality.
pub fn cooperation_gains(alloc: &Allocation, v: &CoalitionValue) -> Result<Allocation> {
    if alloc.shares.len() != v.player_count() {
        return Err(MarketError::LengthMismatch {
            what: "allocation shares",
            expected: v.player_count(),
            found: alloc.shares.len(),
        });
    }
    let gains: Vec<f64> = alloc
        .shares
        .iter()
        .enumerate()
        .map(|(i, s)| s - v.standalone(i))
        .collect();
    let slack = 1e-9 * v.grand().abs().max(1.0);
    let individually_rational = gains.iter().all(|&g| g >= -slack);
    let mut out = alloc.clone();
    out.gains = Some(CooperationGains {
        max_integration_cost: gains.clone(),
        gains,
        individually_rational,
    });
    Ok(out)
}

/// One row of a quality-factor sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub quality_factor: f64,
    /// `v({k})` per provider.
    pub standalone: Vec<f64>,
    /// `v(all providers)`.
    pub grand: f64,
    pub shares: Vec<f64>,
    pub gains: Vec<f64>,
    pub individually_rational: bool,
    pub grand_prices: BundlePriceSchedule,
}

/// Re-solves the market for each quality factor of `provider`, sharing the
/// grand-coalition profit of all providers by the Shapley value.
pub fn sweep_quality_factor(
    cfg: &MarketConfig,
    provider: usize,
    q_values: &[f64],
    tol: f64,
) -> Result<Vec<SweepRow>> {
    cfg.provider(provider)?;
    let everyone: Vec<usize> = (0..cfg.provider_count()).collect();
    q_values
        .iter()
        .map(|&q| {
            if !(q.is_finite() && q >= 0.0) {
                return Err(MarketError::InvalidArgument(format!(
                    "quality factor must be finite and non-negative, got {q}"
                )));
            }
            let cfg = cfg.clone().with_quality_factor(provider, q);
            let solution = solve_coalitions(&cfg, &everyone, tol)?;
            let v = &solution.values;
            let alloc = cooperation_gains(&shapley(v), v)?;
            let gains = alloc.gains.expect("filled by cooperation_gains");
            Ok(SweepRow {
                quality_factor: q,
                standalone: (0..v.player_count()).map(|i| v.standalone(i)).collect(),
                grand: v.grand(),
                shares: alloc.shares,
                gains: gains.gains,
                individually_rational: gains.individually_rational,
                grand_prices: solution.prices[solution.prices.len() - 1].clone(),
            })
        })
        .collect()
}
