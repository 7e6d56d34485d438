//! Expected-value evaluation of supply, demand and profit.
//!
//! Indicator counts are replaced by their expectations: `I * F_phi(p_buy)`
//! participating sensors and `J * P(user utility > 0)` subscribers. Quality is
//! evaluated at the expected supply, which makes profit a smooth function of
//! prices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::grid::Axis;
use crate::market::{
    BundlePriceSchedule, MarketConfig, PriceSchedule, ReservationDistribution, Seller,
};

/// Expected result of one provider, or one coalition, at fixed prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub providers: Vec<usize>,
    pub expected_supply: Vec<f64>,
    pub quality: Vec<f64>,
    pub expected_demand: f64,
    pub revenue: f64,
    pub cost: f64,
    pub profit: f64,
}

/// Expected number of sensors whose reservation wage is below `buying_price`.
pub fn expected_supply(dist: &ReservationDistribution, buying_price: f64, sensors: usize) -> f64 {
    let n = sensors as f64;
    (n * dist.cdf(buying_price)).clamp(0.0, n)
}

/// Expected subscribers of a single service: `J * P(quality * theta > fee)`.
pub fn single_demand(quality: f64, fee: f64, dist: &ReservationDistribution, users: usize) -> f64 {
    let j = users as f64;
    if quality <= 0.0 {
        return if fee < 0.0 { j } else { 0.0 };
    }
    j * (1.0 - dist.cdf(fee / quality))
}

/// `P(sum_k w_k U_k > threshold)` for independent `U_k ~ U(0, 1)`.
///
/// Uses the inclusion-exclusion form of the CDF of a weighted uniform sum,
/// `F(x) = sum_S (-1)^|S| (x - w_S)_+^K / (K! prod w)`, evaluated on the
/// lower half of the support and mirrored through the symmetry
/// `P(S > b) = P(S < sum w - b)` so only small arguments are ever expanded.
pub fn weighted_uniform_sum_tail(weights: &[f64], threshold: f64) -> Result<f64> {
    if weights.is_empty() {
        return Err(MarketError::InvalidArgument("at least one weight is required".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(MarketError::InvalidArgument(format!(
            "weights must be positive and finite, got {w}"
        )));
    }
    if weights.len() > 30 {
        return Err(MarketError::InvalidArgument(format!(
            "at most 30 weights are supported, got {}",
            weights.len()
        )));
    }
    if threshold.is_nan() {
        return Err(MarketError::InvalidArgument("threshold is NaN".into()));
    }
    let total: f64 = weights.iter().sum();
    if threshold <= 0.0 {
        return Ok(1.0);
    }
    if threshold >= total {
        return Ok(0.0);
    }
    let tail = if threshold <= 0.5 * total {
        1.0 - uniform_sum_cdf(weights, threshold)
    } else {
        uniform_sum_cdf(weights, total - threshold)
    };
    Ok(tail.clamp(0.0, 1.0))
}

fn uniform_sum_cdf(weights: &[f64], x: f64) -> f64 {
    let k = weights.len();
    let mut acc = 0.0;
    for mask in 0u64..(1 << k) {
        let mut shift = 0.0;
        for (i, w) in weights.iter().enumerate() {
            if mask & (1 << i) != 0 {
                shift += w;
            }
        }
        let arg = x - shift;
        if arg <= 0.0 {
            continue;
        }
        let term = arg.powi(k as i32);
        if mask.count_ones() % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    let scale: f64 = weights.iter().product::<f64>() * factorial;
    acc / scale
}

/// Expected bundle subscribers when every `theta_k ~ U(0, 1)`.
pub fn bundle_demand(qualities: &[f64], bundle_fee: f64, users: usize) -> Result<f64> {
    let dists = vec![ReservationDistribution::standard(); qualities.len()];
    bundle_demand_with(qualities, &dists, bundle_fee, users)
}

/// Expected bundle subscribers, `J * P(sum_k Q_k theta_k > fee)`, for
/// uniform `theta_k` on arbitrary intervals. Zero-quality services drop out.
pub fn bundle_demand_with(
    qualities: &[f64],
    dists: &[ReservationDistribution],
    bundle_fee: f64,
    users: usize,
) -> Result<f64> {
    if qualities.len() != dists.len() {
        return Err(MarketError::LengthMismatch {
            what: "reservation distributions",
            expected: qualities.len(),
            found: dists.len(),
        });
    }
    if let Some(q) = qualities.iter().find(|q| !(q.is_finite() && **q >= 0.0)) {
        return Err(MarketError::InvalidArgument(format!(
            "qualities must be finite and non-negative, got {q}"
        )));
    }
    // theta = lower + (upper - lower) U, so the bundle value is a fixed
    // offset plus a weighted sum of standard uniforms.
    let mut offset = 0.0;
    let mut weights = Vec::with_capacity(qualities.len());
    for (&q, d) in qualities.iter().zip(dists) {
        if q > 0.0 {
            offset += q * d.lower();
            weights.push(q * (d.upper() - d.lower()));
        }
    }
    let j = users as f64;
    if weights.is_empty() {
        return Ok(if offset > bundle_fee { j } else { 0.0 });
    }
    Ok(j * weighted_uniform_sum_tail(&weights, bundle_fee - offset)?)
}

fn check_price(name: &str, p: f64) -> Result<()> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(MarketError::InvalidArgument(format!(
            "{name} must be finite and non-negative, got {p}"
        )))
    }
}

/// Expected outcome of provider `k` selling on its own.
pub fn single_profit(cfg: &MarketConfig, k: usize, prices: PriceSchedule) -> Result<MarketOutcome> {
    let provider = cfg.provider(k)?;
    check_price("buying price", prices.buying_price)?;
    check_price("subscription fee", prices.subscription_fee)?;
    let theta = cfg
        .users
        .reservation_dist
        .get(k)
        .ok_or(MarketError::IndexOutOfRange {
            index: k,
            len: cfg.users.reservation_dist.len(),
        })?;

    let supply = expected_supply(&provider.wage_dist, prices.buying_price, provider.count);
    let quality = cfg.provider_quality(k, supply)?;
    let demand = single_demand(quality, prices.subscription_fee, theta, cfg.users.count);
    let revenue = prices.subscription_fee * demand;
    let cost = prices.buying_price * supply;
    Ok(MarketOutcome {
        providers: vec![k],
        expected_supply: vec![supply],
        quality: vec![quality],
        expected_demand: demand,
        revenue,
        cost,
        profit: revenue - cost,
    })
}

/// Checks that `coalition` is non-empty, in range and duplicate-free.
pub fn check_coalition(cfg: &MarketConfig, coalition: &[usize]) -> Result<()> {
    if coalition.is_empty() {
        return Err(MarketError::EmptyCoalition);
    }
    for (i, &k) in coalition.iter().enumerate() {
        cfg.provider(k)?;
        if coalition[..i].contains(&k) {
            return Err(MarketError::DuplicateMember(k));
        }
    }
    Ok(())
}

/// Expected outcome of `coalition` selling its services as one bundle.
/// `prices.buying_prices[i]` belongs to `coalition[i]`.
pub fn bundle_profit(
    cfg: &MarketConfig,
    coalition: &[usize],
    prices: &BundlePriceSchedule,
) -> Result<MarketOutcome> {
    check_coalition(cfg, coalition)?;
    if prices.buying_prices.len() != coalition.len() {
        return Err(MarketError::LengthMismatch {
            what: "buying prices",
            expected: coalition.len(),
            found: prices.buying_prices.len(),
        });
    }
    for &p in &prices.buying_prices {
        check_price("buying price", p)?;
    }
    check_price("bundle fee", prices.bundle_fee)?;

    let mut supply = Vec::with_capacity(coalition.len());
    let mut quality = Vec::with_capacity(coalition.len());
    let mut dists = Vec::with_capacity(coalition.len());
    let mut cost = 0.0;
    for (&k, &p) in coalition.iter().zip(&prices.buying_prices) {
        let provider = &cfg.providers[k];
        let s = expected_supply(&provider.wage_dist, p, provider.count);
        quality.push(cfg.provider_quality(k, s)?);
        supply.push(s);
        dists.push(*cfg.users.reservation_dist.get(k).ok_or(MarketError::IndexOutOfRange {
            index: k,
            len: cfg.users.reservation_dist.len(),
        })?);
        cost += p * s;
    }
    let demand = bundle_demand_with(&quality, &dists, prices.bundle_fee, cfg.users.count)?;
    let revenue = prices.bundle_fee * demand;
    Ok(MarketOutcome {
        providers: coalition.to_vec(),
        expected_supply: supply,
        quality,
        expected_demand: demand,
        revenue,
        cost,
        profit: revenue - cost,
    })
}

/// Profit of `seller` at one buying price (shared by every coalition member)
/// and one fee.
pub fn seller_profit(cfg: &MarketConfig, seller: &Seller, buying_price: f64, fee: f64) -> Result<MarketOutcome> {
    match seller {
        Seller::Single(k) => single_profit(cfg, *k, PriceSchedule::new(buying_price, fee)),
        Seller::Coalition(members) => bundle_profit(
            cfg,
            members,
            &BundlePriceSchedule::new(vec![buying_price; members.len()], fee),
        ),
    }
}

/// Dense profit evaluation over a (buying price, fee) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitSurface {
    pub buy_axis: Axis,
    pub fee_axis: Axis,
    /// Row-major: `values[i * fee_axis.points + j]` is the profit at
    /// `(buy_axis.value(i), fee_axis.value(j))`.
    pub values: Vec<f64>,
}

impl ProfitSurface {
    pub fn get(&self, buy_index: usize, fee_index: usize) -> f64 {
        self.values[buy_index * self.fee_axis.points + fee_index]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.buy_axis.points, self.fee_axis.points)
    }

    /// Largest cell; ties go to the smallest buying price, then fee.
    pub fn argmax(&self) -> ((usize, usize), f64) {
        let mut best = ((0, 0), self.values[0]);
        for (idx, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = ((idx / self.fee_axis.points, idx % self.fee_axis.points), v);
            }
        }
        best
    }

    /// `(buying price, fee, profit)` rows in row-major order.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values.iter().enumerate().map(move |(idx, &v)| {
            let (i, j) = (idx / self.fee_axis.points, idx % self.fee_axis.points);
            (self.buy_axis.value(i), self.fee_axis.value(j), v)
        })
    }
}

pub fn profit_surface(cfg: &MarketConfig, seller: &Seller, buy_axis: Axis, fee_axis: Axis) -> Result<ProfitSurface> {
    for (name, axis) in [("buying-price", buy_axis), ("fee", fee_axis)] {
        if axis.points < 2 {
            return Err(MarketError::InvalidGrid(format!("{name} axis needs at least 2 points")));
        }
        if axis.lo < 0.0 {
            return Err(MarketError::InvalidGrid(format!("{name} axis starts below zero")));
        }
        // Re-check bounds for axes built by hand.
        Axis::new(axis.lo, axis.hi, axis.points)?;
    }
    if let Seller::Coalition(members) = seller {
        check_coalition(cfg, members)?;
    }
    let rows: Vec<Vec<f64>> = (0..buy_axis.points)
        .into_par_iter()
        .map(|i| {
            let p = buy_axis.value(i);
            fee_axis
                .values()
                .map(|f| seller_profit(cfg, seller, p, f).map(|o| o.profit))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(ProfitSurface {
        buy_axis,
        fee_axis,
        values: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::quality;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::test_oracles as oracles;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    const STD: ReservationDistribution = ReservationDistribution::standard();

    #[test]
    fn expected_supply_examples() {
        assert!(close(expected_supply(&STD, 0.486, 50), 24.3, 1e-12));
        assert_eq!(expected_supply(&STD, 0.0, 50), 0.0);
        assert_eq!(expected_supply(&STD, 1.2, 50), 50.0);
    }

    #[test]
    fn single_demand_matches_sampling() {
        let (q, fee) = (0.5712, 0.2856);
        assert!(close(single_demand(q, fee, &STD, 200), 100.0, 1e-9));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| q * rng.random::<f64>() > fee).count();
        let sampled = 200.0 * hits as f64 / n as f64;
        // 200 * sqrt(0.25 / 1e6) = 0.1 per standard error
        assert!(close(sampled, 100.0, 0.5), "{sampled}");
    }

    #[test]
    fn single_demand_edges() {
        assert_eq!(single_demand(0.3, 0.0, &STD, 200), 200.0);
        assert_eq!(single_demand(0.5, 0.6, &STD, 200), 0.0);
        assert_eq!(single_demand(0.0, 0.1, &STD, 200), 0.0);
        assert_eq!(single_demand(0.0, 0.0, &STD, 200), 0.0);
    }

    #[test]
    fn tail_examples() {
        let t = weighted_uniform_sum_tail(&[1.0, 1.0], 0.8165).unwrap();
        assert!(close(t, 0.6667, 1e-4));
        let oracle = oracles::uniform_sum_tail_by_convolution(&[1.0, 1.0], 0.8165, 100_000);
        assert!(close(t, oracle, 1e-6), "{t} vs {oracle}");

        assert_eq!(weighted_uniform_sum_tail(&[0.3, 2.0], 0.0).unwrap(), 1.0);
        assert_eq!(weighted_uniform_sum_tail(&[0.3, 2.0], 2.3).unwrap(), 0.0);
        assert_eq!(weighted_uniform_sum_tail(&[0.3, 2.0], 5.0).unwrap(), 0.0);
        for b in [0.1, 0.25, 0.5, 0.9] {
            assert!(close(weighted_uniform_sum_tail(&[1.0], b).unwrap(), 1.0 - b, 1e-15));
        }
    }

    #[test]
    fn tail_rejects_bad_weights() {
        assert!(weighted_uniform_sum_tail(&[1.0, 0.0], 0.5).is_err());
        assert!(weighted_uniform_sum_tail(&[1.0, -1.0], 0.5).is_err());
        assert!(weighted_uniform_sum_tail(&[], 0.5).is_err());
    }

    #[test]
    fn bundle_demand_examples() {
        let d = bundle_demand(&[0.6018, 0.6018], 0.4913, 200).unwrap();
        assert!(close(d, 200.0 * (1.0 - (0.4913f64 / 0.6018).powi(2) / 2.0), 1e-9));
        assert!(close(d, 133.35, 0.01));
        assert_eq!(bundle_demand(&[0.4, 0.7], 0.0, 200).unwrap(), 200.0);
        for f in [0.05, 0.2, 0.4] {
            let b = bundle_demand(&[0.45], f, 200).unwrap();
            assert!(close(b, single_demand(0.45, f, &STD, 200), 1e-9));
        }
        assert_eq!(bundle_demand(&[0.0, 0.0], 0.1, 200).unwrap(), 0.0);
        assert!(close(
            bundle_demand(&[0.0, 0.5], 0.2, 200).unwrap(),
            single_demand(0.5, 0.2, &STD, 200),
            1e-9
        ));
    }

    #[test]
    fn bundle_demand_shifted_distributions() {
        // theta ~ U(0.2, 0.6): 0.5 * theta > 0.2 <=> theta > 0.4, probability 1/2.
        let d = bundle_demand_with(&[0.5], &[ReservationDistribution::uniform(0.2, 0.6)], 0.2, 100).unwrap();
        assert!(close(d, 50.0, 1e-12));
    }

    #[test]
    fn single_profit_examples() {
        let cfg = MarketConfig::default();
        let o = single_profit(&cfg, 0, PriceSchedule::new(0.486, 0.286)).unwrap();
        // Independent closed form: 0.286 * 200 * (1 - 0.286 / log2(1.486)) - 0.486 * 24.3.
        assert!(close(o.profit, 16.761877774423716, 1e-9), "{}", o.profit);
        assert!(close(2.0 * o.profit, 33.524, 0.2));
        assert!(close(o.profit, o.revenue - o.cost, 1e-12));

        let zero = single_profit(&cfg, 0, PriceSchedule::new(0.0, 0.0)).unwrap();
        assert_eq!(zero.profit, 0.0);

        let q = quality(1.0, 24.3, 50).unwrap();
        let priced_out = single_profit(&cfg, 0, PriceSchedule::new(0.486, q)).unwrap();
        assert_eq!(priced_out.expected_demand, 0.0);
        assert!(close(priced_out.profit, -11.8098, 1e-9));
    }

    #[test]
    fn single_profit_errors() {
        let cfg = MarketConfig::default();
        assert!(matches!(
            single_profit(&cfg, 2, PriceSchedule::new(0.1, 0.1)),
            Err(MarketError::IndexOutOfRange { index: 2, len: 2 })
        ));
        assert!(single_profit(&cfg, 0, PriceSchedule::new(-0.1, 0.1)).is_err());
    }

    #[test]
    fn bundle_profit_examples() {
        let cfg = MarketConfig::default();
        let o = bundle_profit(&cfg, &[0, 1], &BundlePriceSchedule::new(vec![0.517, 0.517], 0.491)).unwrap();
        // Quadrature reference (scipy) for the same prices: 38.723756939...
        assert!(close(o.profit, 38.723756939427574, 1e-6), "{}", o.profit);

        let z = bundle_profit(&cfg, &[0, 1], &BundlePriceSchedule::new(vec![0.0, 0.0], 0.5)).unwrap();
        assert_eq!(z.profit, 0.0);
    }

    #[test]
    fn bundle_profit_errors() {
        let cfg = MarketConfig::default();
        let p = BundlePriceSchedule::new(vec![0.5], 0.3);
        assert_eq!(bundle_profit(&cfg, &[], &p), Err(MarketError::EmptyCoalition));
        assert!(matches!(
            bundle_profit(&cfg, &[0, 1], &p),
            Err(MarketError::LengthMismatch { .. })
        ));
        assert_eq!(
            bundle_profit(&cfg, &[1, 1], &BundlePriceSchedule::new(vec![0.5, 0.5], 0.3)),
            Err(MarketError::DuplicateMember(1))
        );
    }

    #[test]
    fn surface_argmax_near_optimum() {
        let cfg = MarketConfig::default();
        let axis = Axis::new(0.0, 1.0, 101).unwrap();
        let s = profit_surface(&cfg, &Seller::Single(0), axis, axis).unwrap();
        assert_eq!(s.shape(), (101, 101));
        let ((i, j), _) = s.argmax();
        assert!((i as i64 - 49).abs() <= 1 && (j as i64 - 29).abs() <= 1, "({i}, {j})");
        assert_eq!(s.get(0, 0), 0.0);
        assert!(s.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn surface_with_worthless_data_is_pure_cost() {
        let cfg = MarketConfig::default().with_quality_factor(0, 0.0);
        let axis = Axis::new(0.0, 1.0, 11).unwrap();
        let s = profit_surface(&cfg, &Seller::Single(0), axis, axis).unwrap();
        for (p, _, v) in s.rows() {
            assert!(close(v, -p * 50.0 * p, 1e-12));
        }
    }

    #[test]
    fn surface_rejects_bad_grids() {
        let cfg = MarketConfig::default();
        let ok = Axis::new(0.0, 1.0, 11).unwrap();
        assert!(profit_surface(&cfg, &Seller::Single(0), Axis::point(0.3), ok).is_err());
        let neg = Axis { lo: -1.0, hi: 1.0, points: 5 };
        assert!(profit_surface(&cfg, &Seller::Single(0), ok, neg).is_err());
    }

    proptest! {
        #[test]
        fn tail_matches_convolution(
            weights in proptest::collection::vec(0.1..2.0f64, 2..=4),
            frac in 0.0..1.0f64,
        ) {
            let total: f64 = weights.iter().sum();
            let b = frac * total;
            let exact = weighted_uniform_sum_tail(&weights, b).unwrap();
            let oracle = oracles::uniform_sum_tail_by_convolution(&weights, b, 100_000);
            prop_assert!((exact - oracle).abs() <= 1e-6, "{} vs {}", exact, oracle);
        }

        #[test]
        fn tail_monotone_in_threshold(
            weights in proptest::collection::vec(0.05..3.0f64, 1..=6),
            a in 0.0..1.0f64,
            b in 0.0..1.0f64,
        ) {
            let total: f64 = weights.iter().sum();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let t_lo = weighted_uniform_sum_tail(&weights, lo * total).unwrap();
            let t_hi = weighted_uniform_sum_tail(&weights, hi * total).unwrap();
            prop_assert!((0.0..=1.0).contains(&t_lo));
            prop_assert!(t_hi <= t_lo + 1e-12);
        }

        #[test]
        fn singleton_bundle_equals_single(
            p in 0.0..1.0f64,
            f in 0.0..1.0f64,
            q in 0.0..2.0f64,
            k in 0usize..2,
        ) {
            let cfg = MarketConfig::default().with_quality_factor(k, q);
            let a = single_profit(&cfg, k, PriceSchedule::new(p, f)).unwrap();
            let b = bundle_profit(&cfg, &[k], &BundlePriceSchedule::new(vec![p], f)).unwrap();
            prop_assert!((a.profit - b.profit).abs() <= 1e-9);
            prop_assert_eq!(b.profit, b.revenue - b.cost);
        }

        #[test]
        fn outcome_ranges(p in 0.0..1.5f64, f in 0.0..2.0f64) {
            let cfg = MarketConfig::default();
            let o = bundle_profit(&cfg, &[0, 1], &BundlePriceSchedule::new(vec![p, p * 0.5], f)).unwrap();
            prop_assert!(o.expected_supply.iter().all(|s| (0.0..=50.0).contains(s)));
            prop_assert!((0.0..=200.0).contains(&o.expected_demand));
        }
    }
}
