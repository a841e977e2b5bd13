//! Caps on misreporting probabilities and on excess payments.

use crate::equilibrium::{audit_budget_for_gap, misreport_cap};
use crate::error::{GameError, Result};
use crate::game::{GameConfig, Strategy};
use crate::scalar::Scalar;

/// Cap on `π(signal|truth)` in any equilibrium, from the no-audit row of `signal`.
///
/// Returns 1 when the cap's denominator is not positive; `misreport_cap_is_vacuous`
/// tells those pairs apart.
pub fn misreport_prob_bound<T: Scalar>(cfg: &GameConfig<T>, signal: &str, truth: &str) -> Result<T> {
    let s = cfg.index_of(signal)?;
    let m = cfg.index_of(truth)?;
    if s == m {
        return Err(GameError::Input(format!("signal and truth are both `{signal}`")));
    }
    Ok(pair_cap(cfg, s, m))
}

fn pair_cap<T: Scalar>(cfg: &GameConfig<T>, s: usize, m: usize) -> T {
    let q = cfg.prior();
    let gap = cfg.alloc()[s].clone() - cfg.alloc()[m].clone();
    misreport_cap(&q[m], &q[s], cfg.audit_cost(), cfg.fine(), &gap)
}

fn pair_is_vacuous<T: Scalar>(cfg: &GameConfig<T>, s: usize, m: usize) -> bool {
    let gap = cfg.alloc()[s].clone() - cfg.alloc()[m].clone();
    let denom = cfg.prior()[m].clone() * (cfg.fine().clone() - cfg.audit_cost().clone() + gap);
    denom <= T::zero()
}

/// Cap on expected excess payments per user: `c·Δf_max/(k + Δf_max)`.
pub fn excess_payments_bound<T: Scalar>(cfg: &GameConfig<T>) -> T {
    audit_budget_for_gap(cfg.audit_cost(), cfg.fine(), &cfg.delta_f_max())
}

/// Smallest fine that keeps the excess bound at or below `max_excess`.
pub fn fine_for_tolerance<T: Scalar>(cfg: &GameConfig<T>, max_excess: &T) -> Result<T> {
    if *max_excess <= T::zero() {
        return Err(GameError::Input(format!(
            "tolerated excess {} must be positive",
            max_excess.render()
        )));
    }
    let c = cfg.audit_cost().clone();
    let gap = cfg.delta_f_max();
    if *max_excess >= c || gap.is_zero() {
        return Ok(c);
    }
    let k = gap * (c.clone() / max_excess.clone() - T::one());
    Ok(if k < c { c } else { k })
}

/// Caps for every ordered pair of distinct types.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T> {
    pub labels: Vec<String>,
    /// `caps[s][m]` bounds `π(s|m)`; `None` on the diagonal.
    pub caps: Vec<Vec<Option<T>>>,
    /// Pairs whose cap is trivially 1 because the denominator is not positive.
    pub vacuous: Vec<(usize, usize)>,
    pub excess_cap: T,
    /// Pairs where the supplied equilibrium sits exactly on its cap.
    pub binding_pairs: Vec<(usize, usize)>,
}

impl<T: Scalar> BoundReport<T> {
    /// CSV with header `signal,truth,cap`, caps to 15 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("signal,truth,cap\n");
        for (s, row) in self.caps.iter().enumerate() {
            for (m, cap) in row.iter().enumerate() {
                if let Some(cap) = cap {
                    out.push_str(&format!("{},{},{}\n", self.labels[s], self.labels[m], cap.to_sig(15)));
                }
            }
        }
        out
    }

    /// True when `pi` respects every cap.
    pub fn admits(&self, pi: &Strategy<T>) -> bool {
        self.caps.iter().enumerate().all(|(s, row)| {
            row.iter().enumerate().all(|(m, cap)| match cap {
                Some(cap) => crate::scalar::approx_le(pi.prob(s, m), cap),
                None => true,
            })
        })
    }
}

pub fn bound_report<T: Scalar>(cfg: &GameConfig<T>, equilibrium: Option<&Strategy<T>>) -> BoundReport<T> {
    let n = cfg.num_types();
    let mut caps = vec![vec![None; n]; n];
    let mut vacuous = Vec::new();
    let mut binding_pairs = Vec::new();
    for s in 0..n {
        for m in 0..n {
            if s == m {
                continue;
            }
            let cap = pair_cap(cfg, s, m);
            if pair_is_vacuous(cfg, s, m) {
                vacuous.push((s, m));
            }
            if let Some(pi) = equilibrium {
                if crate::scalar::approx_eq(pi.prob(s, m), &cap) && !cap.is_zero() {
                    binding_pairs.push((s, m));
                }
            }
            caps[s][m] = Some(cap);
        }
    }
    BoundReport {
        labels: cfg.types().to_vec(),
        caps,
        vacuous,
        excess_cap: excess_payments_bound(cfg),
        binding_pairs,
    }
}
