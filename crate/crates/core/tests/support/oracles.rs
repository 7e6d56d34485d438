//! Brute-force references shared by unit, integration and acceptance tests.
//! Nothing here calls into the library's closed forms.
#![allow(dead_code)]

/// `P(sum_k w_k U_k > b)` for independent `U_k ~ U(0, 1)`, computed by
/// convolving one box kernel at a time on an `n`-point grid over
/// `[0, sum w]`. Each step uses `f_k(x) = (F(x) - F(x - w_k)) / w_k` with
/// linear interpolation and a trapezoid running integral.
pub fn uniform_sum_tail_by_convolution(weights: &[f64], b: f64, n: usize) -> f64 {
    assert!(!weights.is_empty() && weights.iter().all(|&w| w > 0.0));
    let total: f64 = weights.iter().sum();
    if b <= 0.0 {
        return 1.0;
    }
    if b >= total {
        return 0.0;
    }
    let h = total / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let interp = |cdf: &[f64], x: f64| -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let t = x / h;
        let i = t.floor() as usize;
        if i + 1 >= n {
            return cdf[n - 1];
        }
        let frac = t - i as f64;
        cdf[i] * (1.0 - frac) + cdf[i + 1] * frac
    };
    let mut cdf: Vec<f64> = xs.iter().map(|&x| (x / weights[0]).clamp(0.0, 1.0)).collect();
    for &w in &weights[1..] {
        let density: Vec<f64> = xs
            .iter()
            .map(|&x| (interp(&cdf, x) - interp(&cdf, x - w)) / w)
            .collect();
        let mut next = vec![0.0; n];
        for i in 1..n {
            next[i] = next[i - 1] + 0.5 * h * (density[i - 1] + density[i]);
        }
        cdf = next;
    }
    1.0 - interp(&cdf, b)
}

/// Exhaustive maximum of `f` over `xs`, ties to the first (smallest) point.
pub fn brute_argmax_1d(xs: impl Iterator<Item = f64>, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for x in xs {
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Shapley value by averaging marginal contributions over every join order.
/// `v` is indexed by player bitmask.
pub fn shapley_by_permutations(players: usize, v: &dyn Fn(usize) -> f64) -> Vec<f64> {
    fn permute(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let p = rest.remove(i);
            prefix.push(p);
            permute(prefix, rest, out);
            prefix.pop();
            rest.insert(i, p);
        }
    }
    let mut orders = Vec::new();
    permute(&mut Vec::new(), &mut (0..players).collect(), &mut orders);
    let mut shares = vec![0.0; players];
    for order in &orders {
        let mut mask = 0usize;
        for &p in order {
            let before = v(mask);
            mask |= 1 << p;
            shares[p] += v(mask) - before;
        }
    }
    shares.iter().map(|s| s / orders.len() as f64).collect()
}
