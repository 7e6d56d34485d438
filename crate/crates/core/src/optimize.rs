//! Derivative-free price optimization.
//!
//! One-dimensional slices of the profit are unimodal, so every coordinate is
//! searched by golden-section interval shrinking. The fee is always solved as
//! an inner problem for fixed buying prices; with several buying prices the
//! outer problem is a cyclic coordinate search. [`grid_oracle`] is the
//! exhaustive reference the optimizer is checked against.

use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{bundle_profit, check_coalition, single_profit, MarketOutcome, ProfitSurface};
use crate::error::{MarketError, Result};
use crate::grid::Axis;
use crate::market::{BundlePriceSchedule, MarketConfig, PriceSchedule};

const INV_PHI: f64 = 0.618_033_988_749_894_8;
const MAX_GOLDEN_STEPS: usize = 400;
const MAX_SWEEPS: usize = 500;

/// Maximum of a one-dimensional search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum1d {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
    /// Final bracket width is within the requested tolerance.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult<P> {
    pub prices: P,
    pub outcome: MarketOutcome,
    pub profit: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Coordinate sweeps of the outer search (1 for a single provider).
    pub sweeps: usize,
}

/// Golden-section maximization of `f` on `[lo, hi]`.
///
/// Ties between the two interior probes keep the left part of the bracket,
/// and the endpoints are compared against the final midpoint, so flat
/// objectives resolve to the smallest maximizer.
pub fn maximize_unimodal_1d<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Maximum1d>
where
    F: FnMut(f64) -> f64,
{
    try_maximize_1d(|x| Ok(f(x)), lo, hi, tol)
}

/// [`maximize_unimodal_1d`] for objectives that can fail.
pub fn try_maximize_1d<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Maximum1d>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(MarketError::InvalidBracket { lo, hi });
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(MarketError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut evaluations = 0;
    let mut eval = |x: f64| -> Result<f64> {
        evaluations += 1;
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(MarketError::NonFiniteObjective { at: vec![x] })
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    let mut steps = 0;
    while b - a > tol && steps < MAX_GOLDEN_STEPS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
        steps += 1;
    }
    let converged = b - a <= tol;

    let mid = 0.5 * (a + b);
    let mut best = (mid, eval(mid)?);
    let f_lo = eval(lo)?;
    if f_lo >= best.1 {
        best = (lo, f_lo);
    }
    let f_hi = eval(hi)?;
    if f_hi > best.1 {
        best = (hi, f_hi);
    }
    Ok(Maximum1d {
        x: best.0,
        value: best.1,
        evaluations,
        converged,
    })
}

/// Like [`try_maximize_1d`], but an empty interval (`hi <= lo`) evaluates
/// the single point `lo`.
fn search<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Maximum1d>
where
    F: FnMut(f64) -> Result<f64>,
{
    if hi <= lo {
        let value = f(lo)?;
        if !value.is_finite() {
            return Err(MarketError::NonFiniteObjective { at: vec![lo] });
        }
        return Ok(Maximum1d {
            x: lo,
            value,
            evaluations: 1,
            converged: true,
        });
    }
    try_maximize_1d(f, lo, hi, tol)
}

fn buying_price_bound(cfg: &MarketConfig, k: usize) -> Result<f64> {
    Ok(cfg.provider(k)?.wage_dist.upper().max(0.0))
}

/// Largest reservation price any user can have for provider `k`'s service.
fn reservation_bound(cfg: &MarketConfig, k: usize) -> Result<f64> {
    let theta = cfg.users.reservation_dist.get(k).ok_or(MarketError::IndexOutOfRange {
        index: k,
        len: cfg.users.reservation_dist.len(),
    })?;
    Ok((cfg.max_quality(k)? * theta.upper()).max(0.0))
}

/// Profit-maximizing (buying price, fee) of provider `k` selling alone.
pub fn maximize_prices_single(cfg: &MarketConfig, k: usize, tol: f64) -> Result<OptimizationResult<PriceSchedule>> {
    let buy_hi = buying_price_bound(cfg, k)?;
    let fee_hi = reservation_bound(cfg, k)?;
    let evaluations = Cell::new(0usize);
    let profit = |p: f64, f: f64| -> Result<f64> {
        evaluations.set(evaluations.get() + 1);
        Ok(single_profit(cfg, k, PriceSchedule::new(p, f))?.profit)
    };
    let mut converged = true;
    let best_fee = |p: f64| search(|f| profit(p, f), 0.0, fee_hi, tol);

    let outer = search(
        |p| {
            let inner = best_fee(p)?;
            Ok(inner.value)
        },
        0.0,
        buy_hi,
        tol,
    )?;
    converged &= outer.converged;
    let inner = best_fee(outer.x)?;
    converged &= inner.converged;

    let prices = PriceSchedule::new(outer.x, inner.x);
    let outcome = single_profit(cfg, k, prices)?;
    Ok(OptimizationResult {
        prices,
        profit: outcome.profit,
        outcome,
        evaluations: evaluations.get(),
        converged,
        sweeps: 1,
    })
}

/// Profit-maximizing buying prices and bundle fee of `coalition`.
///
/// Cyclic coordinate search over the buying prices, each evaluated at its
/// optimal bundle fee. Stops once a full sweep moves no price by more than
/// `tol` and improves profit by at most `tol`.
pub fn maximize_prices_bundle(
    cfg: &MarketConfig,
    coalition: &[usize],
    tol: f64,
) -> Result<OptimizationResult<BundlePriceSchedule>> {
    check_coalition(cfg, coalition)?;
    if let [k] = coalition {
        let single = maximize_prices_single(cfg, *k, tol)?;
        let prices = BundlePriceSchedule::new(
            vec![single.prices.buying_price],
            single.prices.subscription_fee,
        );
        return Ok(OptimizationResult {
            prices,
            outcome: single.outcome,
            profit: single.profit,
            evaluations: single.evaluations,
            converged: single.converged,
            sweeps: single.sweeps,
        });
    }

    let buy_hi: Vec<f64> = coalition
        .iter()
        .map(|&k| buying_price_bound(cfg, k))
        .collect::<Result<_>>()?;
    let fee_hi: f64 = coalition
        .iter()
        .map(|&k| reservation_bound(cfg, k))
        .sum::<Result<f64>>()?;

    let evaluations = Cell::new(0usize);
    let profit = |buys: &[f64], fee: f64| -> Result<f64> {
        evaluations.set(evaluations.get() + 1);
        Ok(bundle_profit(cfg, coalition, &BundlePriceSchedule::new(buys.to_vec(), fee))?.profit)
    };
    let best_fee = |buys: &[f64]| search(|f| profit(buys, f), 0.0, fee_hi, tol);

    let mut buys: Vec<f64> = buy_hi.iter().map(|h| 0.5 * h).collect();
    let mut best = best_fee(&buys)?.value;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let before = best;
        let mut largest_move: f64 = 0.0;
        let mut slices_converged = true;
        for i in 0..buys.len() {
            let mut trial = buys.clone();
            let slice = search(
                |p| {
                    trial[i] = p;
                    Ok(best_fee(&trial)?.value)
                },
                0.0,
                buy_hi[i],
                tol,
            )?;
            slices_converged &= slice.converged;
            if slice.value >= best {
                largest_move = largest_move.max((slice.x - buys[i]).abs());
                buys[i] = slice.x;
                best = slice.value;
            }
        }
        if slices_converged && largest_move <= tol && best - before <= tol {
            converged = true;
            break;
        }
    }

    let fee = best_fee(&buys)?;
    converged &= fee.converged;
    let prices = BundlePriceSchedule::new(buys, fee.x);
    let outcome = bundle_profit(cfg, coalition, &prices)?;
    Ok(OptimizationResult {
        prices,
        profit: outcome.profit,
        outcome,
        evaluations: evaluations.get(),
        converged,
        sweeps,
    })
}

/// Best point of an exhaustive grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMaximum {
    pub point: Vec<f64>,
    pub index: Vec<usize>,
    pub value: f64,
}

/// Evaluates `objective` at every point of the Cartesian product of `axes`.
/// Ties go to the lexicographically smallest index; non-finite values never
/// win. The reduction is order-independent, so the parallel result is
/// deterministic.
pub fn grid_oracle<F>(objective: F, axes: &[Axis]) -> GridMaximum
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let total: usize = axes.iter().map(|a| a.points).product();
    let decode = |mut flat: usize| -> Vec<usize> {
        let mut idx = vec![0; axes.len()];
        for (d, axis) in axes.iter().enumerate().rev() {
            idx[d] = flat % axis.points;
            flat /= axis.points;
        }
        idx
    };
    let point_of = |idx: &[usize]| -> Vec<f64> {
        idx.iter().zip(axes).map(|(&i, a)| a.value(i)).collect()
    };
    let better = |a: (f64, usize), b: (f64, usize)| -> (f64, usize) {
        if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) {
            a
        } else {
            b
        }
    };
    let (value, flat) = (0..total)
        .into_par_iter()
        .map(|flat| {
            let v = objective(&point_of(&decode(flat)));
            (if v.is_nan() { f64::NEG_INFINITY } else { v }, flat)
        })
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), better);
    let index = decode(if flat == usize::MAX { 0 } else { flat });
    GridMaximum {
        point: point_of(&index),
        index,
        value,
    }
}

/// Steepest ascent over the 8-neighbourhood of a profit surface, from
/// `start` until no neighbour is strictly better.
///
/// A cell whose neighbours are all no better may sit on a plateau (profit is
/// exactly zero wherever nothing is bought). The whole connected plateau of
/// equal values is then searched for an exit to a strictly better cell; when
/// none exists the plateau's first cell in row-major order is returned.
pub fn grid_ascent(surface: &ProfitSurface, start: (usize, usize)) -> (usize, usize) {
    let (rows, cols) = surface.shape();
    let neighbours = move |(i, j): (usize, usize)| {
        (-1i64..=1)
            .flat_map(move |di| (-1i64..=1).map(move |dj| (i as i64 + di, j as i64 + dj)))
            .filter(move |&(a, b)| a >= 0 && b >= 0 && a < rows as i64 && b < cols as i64)
            .map(|(a, b)| (a as usize, b as usize))
            .filter(move |&c| c != (i, j))
    };
    let best_neighbour = |at: (usize, usize)| {
        let here = surface.get(at.0, at.1);
        neighbours(at)
            .map(|c| (c, surface.get(c.0, c.1)))
            .filter(|&(_, v)| v > here)
            .fold(None, |acc: Option<((usize, usize), f64)>, (c, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((c, v)),
            })
    };

    let mut at = start;
    loop {
        if let Some((next, _)) = best_neighbour(at) {
            at = next;
            continue;
        }
        let level = surface.get(at.0, at.1);
        let mut seen = vec![false; rows * cols];
        let mut plateau = vec![at];
        seen[at.0 * cols + at.1] = true;
        let mut cursor = 0;
        let mut exit = None;
        while cursor < plateau.len() {
            let cell = plateau[cursor];
            cursor += 1;
            if let Some(found) = best_neighbour(cell) {
                exit = Some(found.0);
                break;
            }
            for c in neighbours(cell) {
                if !seen[c.0 * cols + c.1] && surface.get(c.0, c.1) == level {
                    seen[c.0 * cols + c.1] = true;
                    plateau.push(c);
                }
            }
        }
        match exit {
            Some(next) => at = next,
            None => return plateau.into_iter().min().unwrap_or(at),
        }
    }
}
