//! Which offers a user takes up, given its reservation draws.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};

/// Fees being offered: one per service, or a single bundle fee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fees {
    Separate(Vec<f64>),
    Bundle(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UserRegion {
    /// `subscribed[k]`: the user buys service `k`.
    Separate { subscribed: Vec<bool> },
    Bundle { buys: bool },
}

impl UserRegion {
    /// `none`, `service-<k>-only`, `both` (two services) or `all`, with
    /// other partial sets written as `services-1+3`; `bundle` or `none` for
    /// bundles. Service numbers are 1-based.
    pub fn label(&self) -> String {
        match self {
            Self::Bundle { buys: true } => "bundle".into(),
            Self::Bundle { buys: false } => "none".into(),
            Self::Separate { subscribed } => {
                let taken: Vec<usize> = subscribed
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s)
                    .map(|(k, _)| k + 1)
                    .collect();
                match (taken.len(), subscribed.len()) {
                    (0, _) => "none".into(),
                    (1, _) => format!("service-{}-only", taken[0]),
                    (2, 2) => "both".into(),
                    (n, m) if n == m => "all".into(),
                    _ => format!(
                        "services-{}",
                        taken.iter().map(ToString::to_string).collect::<Vec<_>>().join("+")
                    ),
                }
            }
        }
    }
}

impl fmt::Display for UserRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Separate selling: service `k` is bought iff `Q_k theta_k > fee_k`.
/// Bundle selling: the bundle is bought iff `sum_k Q_k theta_k > fee`.
pub fn classify_user(thetas: &[f64], qualities: &[f64], fees: &Fees) -> Result<UserRegion> {
    if thetas.len() != qualities.len() {
        return Err(MarketError::LengthMismatch {
            what: "reservation draws",
            expected: qualities.len(),
            found: thetas.len(),
        });
    }
    match fees {
        Fees::Separate(fees) => {
            if fees.len() != qualities.len() {
                return Err(MarketError::LengthMismatch {
                    what: "fees",
                    expected: qualities.len(),
                    found: fees.len(),
                });
            }
            let subscribed = thetas
                .iter()
                .zip(qualities)
                .zip(fees)
                .map(|((t, q), f)| q * t - f > 0.0)
                .collect();
            Ok(UserRegion::Separate { subscribed })
        }
        Fees::Bundle(fee) => {
            let value: f64 = thetas.iter().zip(qualities).map(|(t, q)| q * t).sum();
            Ok(UserRegion::Bundle { buys: value - fee > 0.0 })
        }
    }
}
