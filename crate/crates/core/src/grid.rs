use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};

/// Evenly spaced points on `[lo, hi]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(MarketError::InvalidGrid(format!("non-finite bounds [{lo}, {hi}]")));
        }
        match points {
            0 => Err(MarketError::InvalidGrid("axis needs at least one point".into())),
            1 if lo != hi => Err(MarketError::InvalidGrid(format!(
                "single-point axis needs lo == hi, got [{lo}, {hi}]"
            ))),
            1 => Ok(Self { lo, hi, points }),
            _ if lo >= hi => Err(MarketError::InvalidGrid(format!("need lo < hi, got [{lo}, {hi}]"))),
            _ => Ok(Self { lo, hi, points }),
        }
    }

    /// Axis from `lo` to `hi` with spacing as close to `step` as possible
    /// while hitting both endpoints.
    pub fn with_step(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(MarketError::InvalidGrid(format!("step must be positive, got {step}")));
        }
        if lo == hi {
            return Self::new(lo, hi, 1);
        }
        let intervals = ((hi - lo) / step).round().max(1.0) as usize;
        Self::new(lo, hi, intervals + 1)
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x, points: 1 }
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn step(&self) -> f64 {
        if self.points < 2 {
            0.0
        } else {
            (self.hi - self.lo) / (self.points - 1) as f64
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        debug_assert!(i < self.points);
        if self.points == 1 {
            self.lo
        } else if i + 1 == self.points {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|i| self.value(i))
    }
}
