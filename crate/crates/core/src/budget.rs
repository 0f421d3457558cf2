//! Cumulative emissions budget and per-second allowances.
//!
//! A budget of `total` grams over `horizon` seconds accrues at
//! `base_rate = total / horizon`. The greedy allowance hands out everything
//! accrued so far and not yet spent, so spending can never run ahead of the
//! accrual line (no front-loading) and never exceeds the total.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sum::CompensatedSum;

/// Slack allowed on the hard cap when recording, in grams.
pub const CAP_TOLERANCE_G: f64 = 1e-12;

/// Tolerance of the surplus / no-front-loading identities over a full
/// week, in grams.
pub const LEDGER_TOLERANCE_G: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("budget total must be positive, got {0} g")]
    InvalidTotal(f64),
    #[error("budget horizon must be positive")]
    InvalidHorizon,
    #[error("emission must be a non-negative amount, got {0} g")]
    InvalidEmission(f64),
    #[error("recording {grams} g would overdraw the budget (spent {spent} g of {total} g)")]
    Overdraft { grams: f64, spent: f64, total: f64 },
    #[error("t = {now}s is past the budget horizon of {horizon}s")]
    PastHorizon { now: u64, horizon: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionsBudget {
    total: f64,
    horizon: u64,
    base_rate: f64,
    spent: CompensatedSum,
}

/// Snapshot of a budget at some elapsed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    pub remaining: f64,
    pub elapsed: u64,
    pub surplus: f64,
    pub exhausted: bool,
}

impl EmissionsBudget {
    pub fn new(total: f64, horizon: u64) -> Result<Self, BudgetError> {
        if !(total > 0.0) || !total.is_finite() {
            return Err(BudgetError::InvalidTotal(total));
        }
        if horizon == 0 {
            return Err(BudgetError::InvalidHorizon);
        }
        Ok(Self { total, horizon, base_rate: total / horizon as f64, spent: CompensatedSum::new() })
    }

    /// 10,080 g over one week.
    pub fn weekly_default() -> Self {
        Self::new(10_080.0, 604_800).expect("valid constants")
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Grams per second accrued.
    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    pub fn spent(&self) -> f64 {
        self.spent.value()
    }

    pub fn remaining(&self) -> f64 {
        self.spent.headroom(self.total)
    }

    pub fn record_emission(&mut self, grams: f64) -> Result<(), BudgetError> {
        if !(grams >= 0.0) || !grams.is_finite() {
            return Err(BudgetError::InvalidEmission(grams));
        }
        if grams - self.remaining() > CAP_TOLERANCE_G {
            return Err(BudgetError::Overdraft { grams, spent: self.spent(), total: self.total });
        }
        self.spent.add(grams);
        Ok(())
    }

    /// Grams that may be emitted during second `[now, now + 1)`: this
    /// second's accrual plus all unspent surplus.
    pub fn greedy_allowance(&self, now: u64) -> Result<f64, BudgetError> {
        if now >= self.horizon {
            return Err(BudgetError::PastHorizon { now, horizon: self.horizon });
        }
        let accrued = (self.base_rate * (now + 1) as f64).min(self.total);
        Ok(self.spent.headroom(accrued).max(0.0))
    }

    pub fn state(&self, now: u64) -> BudgetState {
        let remaining = self.remaining();
        BudgetState {
            remaining,
            elapsed: now,
            surplus: self.spent.headroom(self.base_rate * now as f64),
            exhausted: remaining <= CAP_TOLERANCE_G,
        }
    }
}

/// Per-second allowance of a fixed emissions rate.
pub fn fixed_allowance(rate_limit: f64) -> f64 {
    rate_limit.max(0.0)
}
