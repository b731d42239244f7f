//! Closed-form privacy and cost accounting.
//!
//! Logarithms are natural, matching the `e^ε` form of (ε, δ)-differential
//! privacy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::Lambda;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !(0.0..=1.0).contains(&delta) {
            return Err(Error::domain(format!("invalid privacy spec ({epsilon}, {delta})")));
        }
        Ok(PrivacySpec { epsilon, delta })
    }
}

/// Stash bound `C` together with the derived leaf capacity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CapacityModel {
    pub stash_bound: u64,
    /// Most blocks that may be mapped to one leaf: `Z(k+1) + C`.
    pub capacity: u64,
    /// Smallest number of same-leaf mappings that cannot occur: `capacity + 1`.
    pub m_k: u64,
}

impl CapacityModel {
    pub fn new(stash_bound: u64, z: usize, k: u32) -> Self {
        let capacity = z as u64 * (k as u64 + 1) + stash_bound;
        CapacityModel { stash_bound, capacity, m_k: capacity + 1 }
    }
}

fn check_p(n: u64, p: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::domain("N must be at least 2"));
    }
    crate::params::check_p(n, p)
}

/// `ε = 2 ln((N-1)(1-p)/p)`. Exactly zero at the uniform point `p = 1 - 1/N`.
pub fn epsilon_of(n: u64, p: f64) -> Result<f64> {
    check_p(n, p)?;
    let ratio = (n - 1) as f64 * (1.0 - p) / p;
    // (N-1)(1-p)/p rounds to 1 ± ulp at the uniform point
    if (ratio - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(0.0);
    }
    Ok((2.0 * ratio.ln()).max(0.0))
}

/// `δ = (1-p)^(C + Z(k+1) + 1)`.
pub fn delta_of(p: f64, stash_bound: u64, z: usize, k: u32) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("p must be in (0, 1), got {p}")));
    }
    let m_k = CapacityModel::new(stash_bound, z, k).m_k;
    Ok((1.0 - p).powf(m_k as f64))
}

/// Blocks moved per real access: `2·Z(k+1)·(1 + 1/λ)`.
pub fn bandwidth_of(z: usize, k: u32, lambda: Lambda) -> f64 {
    2.0 * (z as f64) * (k as f64 + 1.0) * (1.0 + lambda.fake_fraction())
}

/// Guarantee for neighbouring inputs that differ in `m` accesses.
pub fn compose(m: u64, spec: PrivacySpec) -> Result<PrivacySpec> {
    if m == 0 {
        return Err(Error::domain("composition count must be at least 1"));
    }
    Ok(PrivacySpec { epsilon: m as f64 * spec.epsilon, delta: (m as f64 * spec.delta).min(1.0) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecursionPlan {
    pub rounds: u32,
    pub spec: PrivacySpec,
    pub bandwidth: f64,
    pub outsourcing_ratio: f64,
}

/// `t` rounds of stash recursion: privacy and bandwidth add up, the
/// outsourcing ratio multiplies.
pub fn recursion_plan(rounds: u32, spec: PrivacySpec, bandwidth: f64, ratio: f64) -> Result<RecursionPlan> {
    if rounds == 0 {
        return Err(Error::domain("recursion needs at least one round"));
    }
    if !(ratio > 1.0) {
        return Err(Error::domain(format!("outsourcing ratio must exceed 1, got {ratio}")));
    }
    let t = rounds as f64;
    Ok(RecursionPlan {
        rounds,
        spec: PrivacySpec { epsilon: t * spec.epsilon, delta: (t * spec.delta).min(1.0) },
        bandwidth: t * bandwidth,
        outsourcing_ratio: ratio.powi(rounds as i32),
    })
}

/// Invert [`epsilon_of`]: `p = (N-1) / (e^(ε/2) + N - 1)`.
pub fn solve_p_for_epsilon(n: u64, target_epsilon: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain("N must be at least 2"));
    }
    if !(target_epsilon >= 0.0) {
        return Err(Error::domain(format!("epsilon must be non-negative, got {target_epsilon}")));
    }
    let m = (n - 1) as f64;
    if target_epsilon == 0.0 {
        return Ok(1.0 - 1.0 / n as f64);
    }
    Ok(m / ((target_epsilon / 2.0).exp() + m))
}

/// Largest `k` whose bandwidth fits in `budget` blocks per real access:
/// `floor(budget / (2Z(1 + 1/λ))) - 1`.
pub fn solve_k_for_bandwidth(budget: f64, z: usize, lambda: Lambda, levels: u32) -> Result<u32> {
    if z == 0 {
        return Err(Error::domain("Z must be at least 1"));
    }
    let per_level = 2.0 * z as f64 * (1.0 + lambda.fake_fraction());
    let k = (budget / per_level).floor() - 1.0;
    if !(k >= 1.0) {
        return Err(Error::domain(format!("bandwidth {budget} cannot afford k = 1 (needs {})", 2.0 * per_level)));
    }
    Ok((k as u32).min(levels))
}

/// Admits (ε, δ) queries until their linear composition would pass the budget.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetTracker {
    epsilon_budget: f64,
    delta_budget: f64,
    spent: PrivacySpec,
    admitted: u64,
}

impl BudgetTracker {
    pub fn new(epsilon_budget: f64) -> Result<Self> {
        Self::with_delta(epsilon_budget, 1.0)
    }

    pub fn with_delta(epsilon_budget: f64, delta_budget: f64) -> Result<Self> {
        if !(epsilon_budget >= 0.0) || !(0.0..=1.0).contains(&delta_budget) {
            return Err(Error::domain("budgets must be non-negative"));
        }
        Ok(BudgetTracker {
            epsilon_budget,
            delta_budget,
            spent: PrivacySpec { epsilon: 0.0, delta: 0.0 },
            admitted: 0,
        })
    }

    pub fn spent(&self) -> PrivacySpec {
        self.spent
    }

    pub fn admitted(&self) -> u64 {
        self.admitted
    }

    pub fn remaining_epsilon(&self) -> f64 {
        (self.epsilon_budget - self.spent.epsilon).max(0.0)
    }

    /// Charge one query or reject it, leaving the tracker unchanged.
    pub fn admit(&mut self, query: PrivacySpec) -> Result<()> {
        let epsilon = self.spent.epsilon + query.epsilon;
        let delta = self.spent.delta + query.delta;
        // relative slack absorbs rounding, e.g. 5 × 0.2 against 1.0
        let slack = 1e-12 * self.epsilon_budget.max(1.0);
        if self.epsilon_budget <= 0.0 || epsilon > self.epsilon_budget + slack || delta > self.delta_budget {
            return Err(Error::BudgetExhausted {
                remaining_epsilon: self.remaining_epsilon(),
                remaining_delta: (self.delta_budget - self.spent.delta).max(0.0),
            });
        }
        self.spent = PrivacySpec { epsilon, delta };
        self.admitted += 1;
        Ok(())
    }
}
