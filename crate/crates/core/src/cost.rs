//! Total cost of running audits versus paying every claim.

use std::fmt;

use serde_json::{json, Value};

use crate::equilibrium::{audit_budget_for_gap, misreport_cap, signaling_equilibrium};
use crate::error::{GameError, Result};
use crate::lp::bp_strategy;
use crate::scalar::{approx_le, Scalar};
use crate::game::GameConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    /// Audits cost no more than the status quo.
    Holds,
    Violated,
    /// The fine is below the level that guarantees dominance.
    NotGuaranteed,
}

impl fmt::Display for Dominance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dominance::Holds => "true",
            Dominance::Violated => "false",
            Dominance::NotGuaranteed => "not_guaranteed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport<T> {
    pub cost_no_audit: T,
    pub cost_audit: T,
    pub budget_component: T,
    pub excess_component: T,
    pub regime_note: String,
    /// Fine above which audits are guaranteed cheaper (more than two types).
    pub fine_threshold: Option<T>,
    pub dominance: Dominance,
}

fn num<T: Scalar>(x: &T) -> Value {
    if T::EXACT {
        Value::String(x.render())
    } else {
        json!(x.to_f64())
    }
}

impl<T: Scalar> CostReport<T> {
    pub fn to_json(&self) -> Value {
        json!({
            "mode": T::MODE,
            "cost_no_audit": num(&self.cost_no_audit),
            "cost_audit": num(&self.cost_audit),
            "budget_component": num(&self.budget_component),
            "excess_component": num(&self.excess_component),
            "fine_threshold": self.fine_threshold.as_ref().map(num),
            "dominates": self.dominance.to_string(),
            "regime_note": self.regime_note,
        })
    }
}

/// Status-quo cost: every user claims the largest allocation.
pub fn cost_no_audit<T: Scalar>(cfg: &GameConfig<T>) -> T {
    T::from_usize(cfg.num_users()) * (cfg.max_alloc() - cfg.expected_alloc())
}

/// Two-type costs with the budget pinned at the two-type threshold.
///
/// Takes raw parameters so that sweeps may evaluate grid points with `k < c`.
pub fn two_type_costs<T: Scalar>(q_low: &T, c: &T, k: &T, gap: &T, num_users: usize, coalition_size: usize) -> CostReport<T> {
    let q_high = T::one() - q_low.clone();
    let n = T::from_usize(num_users);
    let l = T::from_usize(coalition_size);
    let p = misreport_cap(q_low, &q_high, c, k, gap);
    let budget_component = l * audit_budget_for_gap(c, k, gap) * (T::one() - p.clone());
    let excess_component = n.clone() * q_low.clone() * p.clone() * gap.clone();
    let cost_no_audit = n * q_low.clone() * gap.clone();
    let cost_audit = budget_component.clone() + excess_component.clone();
    let regime_note = if p == T::one() {
        "q below c/(k+Δf): audit reduces to no-audit".to_string()
    } else {
        "budget pinned at the two-type threshold".to_string()
    };
    let dominance = if approx_le(&cost_audit, &cost_no_audit) {
        Dominance::Holds
    } else {
        Dominance::Violated
    };
    CostReport {
        cost_no_audit,
        cost_audit,
        budget_component,
        excess_component,
        regime_note,
        fine_threshold: None,
        dominance,
    }
}

pub fn cost_audit_two_type<T: Scalar>(cfg: &GameConfig<T>) -> Result<CostReport<T>> {
    let (lo, hi) = cfg.low_high()?;
    let gap = cfg.alloc()[hi].clone() - cfg.alloc()[lo].clone();
    Ok(two_type_costs(
        &cfg.prior()[lo],
        cfg.audit_cost(),
        cfg.fine(),
        &gap,
        cfg.num_users(),
        cfg.coalition_size(),
    ))
}

/// Costs with more than two types: the budget is pinned at the sufficient
/// threshold and the excess is that of the LP equilibrium.
pub fn cost_audit_multitype<T: Scalar>(cfg: &GameConfig<T>) -> Result<CostReport<T>> {
    if cfg.num_types() <= 2 {
        return Err(GameError::Input(format!(
            "expected more than 2 types, got {}",
            cfg.num_types()
        )));
    }
    let n = T::from_usize(cfg.num_users());
    let (_, sol) = bp_strategy(cfg)?;
    let expected_signal = sol.objective_value;
    let gap = cfg.delta_f_max();
    let per_user_budget = audit_budget_for_gap(cfg.audit_cost(), cfg.fine(), &gap);
    let per_user_excess = expected_signal.clone() - cfg.expected_alloc();
    let budget_component = n.clone() * per_user_budget;
    let excess_component = n * per_user_excess;
    let cost_audit = budget_component.clone() + excess_component.clone();
    let cost_no_audit = cost_no_audit(cfg);
    let headroom = cfg.max_alloc() - expected_signal;
    let fine_threshold = if headroom.is_zero() {
        None
    } else {
        Some(gap * (cfg.audit_cost().clone() / headroom - T::one()))
    };
    let (dominance, regime_note) = match &fine_threshold {
        None => (
            Dominance::NotGuaranteed,
            "every type already claims the largest allocation; fine threshold undefined".to_string(),
        ),
        Some(t) if cfg.fine() >= t => {
            let d = if approx_le(&cost_audit, &cost_no_audit) {
                Dominance::Holds
            } else {
                Dominance::Violated
            };
            (d, format!("fine at or above the threshold {}", t.render()))
        }
        Some(t) => (
            Dominance::NotGuaranteed,
            format!("fine below the threshold {}; dominance not guaranteed", t.render()),
        ),
    };
    Ok(CostReport {
        cost_no_audit,
        cost_audit,
        budget_component,
        excess_component,
        regime_note,
        fine_threshold,
        dominance,
    })
}

/// Both costs at the pinned budgets, dispatched on the number of types.
pub fn compare<T: Scalar>(cfg: &GameConfig<T>) -> Result<CostReport<T>> {
    if cfg.num_types() == 2 {
        cost_audit_two_type(cfg)
    } else {
        cost_audit_multitype(cfg)
    }
}

/// Exploratory cost at the config's own budget rather than the pinned one.
///
/// No dominance claim is made.
pub fn cost_at_budget<T: Scalar>(cfg: &GameConfig<T>) -> Result<CostReport<T>> {
    let Some(budget) = cfg.budget() else {
        return Err(GameError::Input("a budget is required for an exploratory cost".into()));
    };
    let eq = signaling_equilibrium(cfg)?;
    let budget_component = budget.clone();
    let excess_component = eq.total_excess.clone();
    Ok(CostReport {
        cost_no_audit: cost_no_audit(cfg),
        cost_audit: budget_component.clone() + excess_component.clone(),
        budget_component,
        excess_component,
        regime_note: format!("exploratory budget {} ({})", budget.render(), eq.provenance),
        fine_threshold: None,
        dominance: Dominance::NotGuaranteed,
    })
}
