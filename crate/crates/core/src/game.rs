//! Game instances, strategies, payoffs, utilities and the administrator's best response.

use std::collections::HashSet;

use crate::error::{GameError, Result};
use crate::scalar::{approx_eq, approx_le, max_of, min_of, pos, Rational, Scalar};

/// One audit-game instance.
///
/// Types are kept in the order given; `prior` and `alloc` are aligned with `types`.
#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig<T> {
    types: Vec<String>,
    prior: Vec<T>,
    alloc: Vec<T>,
    audit_cost: T,
    fine: T,
    budget: Option<T>,
    num_users: usize,
    coalition_size: usize,
}

fn prior_sums_to_one<T: Scalar>(prior: &[T]) -> bool {
    let sum = prior.iter().cloned().fold(T::zero(), |a, b| a + b);
    if T::EXACT {
        sum == T::one()
    } else {
        (sum.to_f64() - 1.0).abs() <= 1e-12
    }
}

impl<T: Scalar> GameConfig<T> {
    /// Single-user, unbudgeted instance.
    pub fn new(
        types: Vec<String>,
        prior: Vec<T>,
        alloc: Vec<T>,
        audit_cost: T,
        fine: T,
    ) -> Result<Self> {
        let cfg = GameConfig {
            types,
            prior,
            alloc,
            audit_cost,
            fine,
            budget: None,
            num_users: 1,
            coalition_size: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Two types labelled `L` and `H` with prior `(q_low, 1 - q_low)`.
    pub fn two_type(q_low: T, f_low: T, f_high: T, audit_cost: T, fine: T) -> Result<Self> {
        let q_high = T::one() - q_low.clone();
        Self::new(
            vec!["L".into(), "H".into()],
            vec![q_low, q_high],
            vec![f_low, f_high],
            audit_cost,
            fine,
        )
    }

    pub fn with_budget(mut self, budget: Option<T>) -> Result<Self> {
        self.budget = budget;
        self.validate()?;
        Ok(self)
    }

    pub fn with_population(mut self, num_users: usize, coalition_size: usize) -> Result<Self> {
        self.num_users = num_users;
        self.coalition_size = coalition_size;
        self.validate()?;
        Ok(self)
    }

    pub fn with_prior(mut self, prior: Vec<T>) -> Result<Self> {
        self.prior = prior;
        self.validate()?;
        Ok(self)
    }

    pub fn with_costs(mut self, audit_cost: T, fine: T) -> Result<Self> {
        self.audit_cost = audit_cost;
        self.fine = fine;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let n = self.types.len();
        if n < 2 {
            return Err(GameError::Input(format!("need at least 2 types, got {n}")));
        }
        let mut seen = HashSet::new();
        for t in &self.types {
            if t.is_empty() {
                return Err(GameError::Input("empty type label".into()));
            }
            if !seen.insert(t.as_str()) {
                return Err(GameError::Input(format!("duplicate type label `{t}`")));
            }
        }
        if self.prior.len() != n || self.alloc.len() != n {
            return Err(GameError::Input(format!(
                "prior has {} entries and alloc {} entries, expected {n}",
                self.prior.len(),
                self.alloc.len()
            )));
        }
        for (t, q) in self.types.iter().zip(&self.prior) {
            if !q.is_finite() || *q < T::zero() || *q > T::one() {
                return Err(GameError::Input(format!(
                    "prior of `{t}` is {}, outside [0, 1]",
                    q.render()
                )));
            }
        }
        if !prior_sums_to_one(&self.prior) {
            return Err(GameError::Input("prior does not sum to 1".into()));
        }
        for (t, f) in self.types.iter().zip(&self.alloc) {
            if !f.is_finite() || *f < T::zero() {
                return Err(GameError::Input(format!(
                    "alloc of `{t}` is {}, must be finite and non-negative",
                    f.render()
                )));
            }
        }
        if !self.audit_cost.is_finite() || self.audit_cost < T::zero() {
            return Err(GameError::Input(format!(
                "audit_cost {} must be non-negative",
                self.audit_cost.render()
            )));
        }
        if !self.fine.is_finite() || self.fine < self.audit_cost {
            return Err(GameError::Input(format!(
                "fine {} must be at least audit_cost {}",
                self.fine.render(),
                self.audit_cost.render()
            )));
        }
        if let Some(b) = &self.budget {
            if !b.is_finite() || *b < T::zero() {
                return Err(GameError::Input(format!(
                    "budget {} must be non-negative",
                    b.render()
                )));
            }
        }
        if self.num_users == 0 {
            return Err(GameError::Input("num_users must be positive".into()));
        }
        if self.coalition_size == 0 || self.coalition_size > self.num_users {
            return Err(GameError::Input(format!(
                "coalition_size {} must lie in 1..={}",
                self.coalition_size, self.num_users
            )));
        }
        Ok(())
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }
    pub fn prior(&self) -> &[T] {
        &self.prior
    }
    pub fn alloc(&self) -> &[T] {
        &self.alloc
    }
    pub fn audit_cost(&self) -> &T {
        &self.audit_cost
    }
    pub fn fine(&self) -> &T {
        &self.fine
    }
    pub fn budget(&self) -> Option<&T> {
        self.budget.as_ref()
    }
    pub fn num_users(&self) -> usize {
        self.num_users
    }
    pub fn coalition_size(&self) -> usize {
        self.coalition_size
    }
    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.types
            .iter()
            .position(|t| t == label)
            .ok_or_else(|| GameError::UnknownType(label.to_string()))
    }

    pub fn max_alloc(&self) -> T {
        self.alloc.iter().cloned().reduce(max_of).expect("non-empty")
    }

    pub fn min_alloc(&self) -> T {
        self.alloc.iter().cloned().reduce(min_of).expect("non-empty")
    }

    /// Largest allocation gap between any two types.
    pub fn delta_f_max(&self) -> T {
        self.max_alloc() - self.min_alloc()
    }

    /// Expected entitlement `Σ q_m f(m)`.
    pub fn expected_alloc(&self) -> T {
        self.prior
            .iter()
            .zip(&self.alloc)
            .fold(T::zero(), |acc, (q, f)| acc + q.clone() * f.clone())
    }

    /// Indices `(low, high)` of a two-type instance ordered by allocation.
    pub fn low_high(&self) -> Result<(usize, usize)> {
        if self.num_types() != 2 {
            return Err(GameError::Input(format!(
                "expected exactly 2 types, got {}",
                self.num_types()
            )));
        }
        Ok(if self.alloc[1] >= self.alloc[0] { (0, 1) } else { (1, 0) })
    }

    /// Converts every number with `f`.
    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> GameConfig<U> {
        GameConfig {
            types: self.types.clone(),
            prior: self.prior.iter().map(&f).collect(),
            alloc: self.alloc.iter().map(&f).collect(),
            audit_cost: f(&self.audit_cost),
            fine: f(&self.fine),
            budget: self.budget.as_ref().map(&f),
            num_users: self.num_users,
            coalition_size: self.coalition_size,
        }
    }

    pub fn to_float(&self) -> GameConfig<f64> {
        self.map(|x| x.to_f64())
    }
}

impl GameConfig<Rational> {
    pub fn to_scalar<T: Scalar>(&self) -> GameConfig<T> {
        self.map(T::from_rational)
    }
}

/// Row-stochastic signaling policy: `rows[m][s]` is the probability of
/// signalling `s` when the true type is `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy<T> {
    rows: Vec<Vec<T>>,
}

fn row_is_stochastic<T: Scalar>(row: &[T]) -> bool {
    let in_range = row.iter().all(|p| {
        p.is_finite() && approx_le(&T::zero(), p) && approx_le(p, &T::one())
    });
    let sum = row.iter().cloned().fold(T::zero(), |a, b| a + b);
    in_range && approx_eq(&sum, &T::one())
}

impl<T: Scalar> Strategy<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(GameError::Input("empty strategy".into()));
        }
        for (m, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(GameError::Input(format!(
                    "strategy row {m} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if !row_is_stochastic(row) {
                return Err(GameError::Input(format!(
                    "strategy row {m} is not a probability distribution"
                )));
            }
        }
        Ok(Strategy { rows })
    }

    pub fn truthful(n: usize) -> Self {
        let rows = (0..n)
            .map(|m| (0..n).map(|s| if s == m { T::one() } else { T::zero() }).collect())
            .collect();
        Strategy { rows }
    }

    /// Two-type strategy where the low type claims high with probability `p`
    /// and the high type is truthful.
    pub fn two_type(low: usize, high: usize, p: T) -> Result<Self> {
        let mut rows = Self::truthful(2).rows;
        rows[low][high] = p.clone();
        rows[low][low] = T::one() - p;
        Self::new(rows)
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Probability of signalling `signal` given true type `truth`.
    pub fn prob(&self, signal: usize, truth: usize) -> &T {
        &self.rows[truth][signal]
    }

    pub fn row(&self, truth: usize) -> &[T] {
        &self.rows[truth]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// Copy of this strategy with the row of `truth` replaced.
    pub fn with_row(&self, truth: usize, row: Vec<T>) -> Result<Self> {
        if row.len() != self.dim() || !row_is_stochastic(&row) {
            return Err(GameError::Input(format!(
                "replacement row for type {truth} is not a distribution"
            )));
        }
        let mut rows = self.rows.clone();
        rows[truth] = row;
        Ok(Strategy { rows })
    }

    pub fn is_truthful(&self) -> bool {
        self.rows.iter().enumerate().all(|(m, row)| {
            row.iter()
                .enumerate()
                .all(|(s, p)| (s == m) || p.is_zero())
        })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Strategy<U> {
        Strategy {
            rows: self.rows.iter().map(|r| r.iter().map(&f).collect()).collect(),
        }
    }
}

/// Per-signal audit probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditPolicy<T> {
    probs: Vec<T>,
}

impl<T: Scalar> AuditPolicy<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        for (s, p) in probs.iter().enumerate() {
            if !p.is_finite() || *p < T::zero() || *p > T::one() {
                return Err(GameError::Input(format!(
                    "audit probability for signal {s} is {}, outside [0, 1]",
                    p.render()
                )));
            }
        }
        Ok(AuditPolicy { probs })
    }

    pub fn zero(n: usize) -> Self {
        AuditPolicy { probs: vec![T::zero(); n] }
    }

    pub fn prob(&self, signal: usize) -> &T {
        &self.probs[signal]
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.probs.iter().all(|p| p.is_zero())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> AuditPolicy<U> {
        AuditPolicy { probs: self.probs.iter().map(f).collect() }
    }
}

/// One strategy and one audit policy per user.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile<T> {
    strategies: Vec<Strategy<T>>,
    audits: Vec<AuditPolicy<T>>,
}

impl<T: Scalar> StrategyProfile<T> {
    pub fn new(strategies: Vec<Strategy<T>>, audits: Vec<AuditPolicy<T>>) -> Result<Self> {
        if strategies.is_empty() || strategies.len() != audits.len() {
            return Err(GameError::Input(format!(
                "{} strategies but {} audit policies",
                strategies.len(),
                audits.len()
            )));
        }
        let n = strategies[0].dim();
        if strategies.iter().any(|s| s.dim() != n) || audits.iter().any(|a| a.dim() != n) {
            return Err(GameError::Input("profile dimensions disagree".into()));
        }
        Ok(StrategyProfile { strategies, audits })
    }

    /// Every user plays `pi` and faces `sigma`.
    pub fn symmetric(pi: Strategy<T>, sigma: AuditPolicy<T>, num_users: usize) -> Result<Self> {
        Self::new(vec![pi; num_users.max(1)], vec![sigma; num_users.max(1)])
    }

    pub fn strategies(&self) -> &[Strategy<T>] {
        &self.strategies
    }
    pub fn audits(&self) -> &[AuditPolicy<T>] {
        &self.audits
    }
    pub fn num_users(&self) -> usize {
        self.strategies.len()
    }
    pub fn strategy(&self, user: usize) -> &Strategy<T> {
        &self.strategies[user]
    }
    pub fn audit(&self, user: usize) -> &AuditPolicy<T> {
        &self.audits[user]
    }

    pub fn is_symmetric(&self) -> bool {
        self.strategies.windows(2).all(|w| w[0] == w[1]) && self.audits.windows(2).all(|w| w[0] == w[1])
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> StrategyProfile<U> {
        StrategyProfile {
            strategies: self.strategies.iter().map(|s| s.map(&f)).collect(),
            audits: self.audits.iter().map(|a| a.map(&f)).collect(),
        }
    }
}

fn check_strategy<T: Scalar>(pi: &Strategy<T>, cfg: &GameConfig<T>) -> Result<()> {
    if pi.dim() != cfg.num_types() {
        return Err(GameError::Input(format!(
            "strategy is {}x{} but the game has {} types",
            pi.dim(),
            pi.dim(),
            cfg.num_types()
        )));
    }
    Ok(())
}

fn check_policy<T: Scalar>(sigma: &AuditPolicy<T>, cfg: &GameConfig<T>) -> Result<()> {
    if sigma.dim() != cfg.num_types() {
        return Err(GameError::Input(format!(
            "audit policy has {} entries but the game has {} types",
            sigma.dim(),
            cfg.num_types()
        )));
    }
    Ok(())
}

/// Administrator payoff for one realized (signal, truth, audit) triple.
pub fn admin_payoff_at<T: Scalar>(audited: bool, signal: usize, truth: usize, cfg: &GameConfig<T>) -> T {
    let fs = cfg.alloc[signal].clone();
    let fm = cfg.alloc[truth].clone();
    let c = cfg.audit_cost.clone();
    match (audited, signal == truth) {
        (false, _) => -fs,
        (true, true) => -c - fm,
        (true, false) => cfg.fine.clone() - c - min_of(fm, fs),
    }
}

/// User payoff for one realized (signal, truth, audit) triple.
pub fn user_payoff_at<T: Scalar>(audited: bool, signal: usize, truth: usize, cfg: &GameConfig<T>) -> T {
    let fs = cfg.alloc[signal].clone();
    let fm = cfg.alloc[truth].clone();
    match (audited, signal == truth) {
        (false, _) => fs,
        (true, true) => fm,
        (true, false) => min_of(fm, fs) - cfg.fine.clone(),
    }
}

pub fn admin_payoff<T: Scalar>(audited: bool, signal: &str, truth: &str, cfg: &GameConfig<T>) -> Result<T> {
    Ok(admin_payoff_at(audited, cfg.index_of(signal)?, cfg.index_of(truth)?, cfg))
}

pub fn user_payoff<T: Scalar>(audited: bool, signal: &str, truth: &str, cfg: &GameConfig<T>) -> Result<T> {
    Ok(user_payoff_at(audited, cfg.index_of(signal)?, cfg.index_of(truth)?, cfg))
}

/// Loss a misreporting user suffers when audited, relative to not being audited:
/// the over-claim is clawed back and the fine is charged.
fn audit_penalty<T: Scalar>(signal: usize, truth: usize, cfg: &GameConfig<T>) -> T {
    if signal == truth {
        T::zero()
    } else {
        pos(cfg.alloc[signal].clone() - cfg.alloc[truth].clone()) + cfg.fine.clone()
    }
}

/// Expected administrator utility.
pub fn admin_utility<T: Scalar>(pi: &Strategy<T>, sigma: &AuditPolicy<T>, cfg: &GameConfig<T>) -> Result<T> {
    check_strategy(pi, cfg)?;
    check_policy(sigma, cfg)?;
    let n = cfg.num_types();
    let mut total = T::zero();
    for m in 0..n {
        for s in 0..n {
            let w = cfg.prior[m].clone() * pi.prob(s, m).clone();
            if w.is_zero() {
                continue;
            }
            let audit_term = sigma.prob(s).clone() * (audit_penalty(s, m, cfg) - cfg.audit_cost.clone());
            total = total + w * (audit_term - cfg.alloc[s].clone());
        }
    }
    Ok(total)
}

/// Expected utility of a user of type `truth` (by index).
pub fn user_utility_at<T: Scalar>(pi: &Strategy<T>, sigma: &AuditPolicy<T>, truth: usize, cfg: &GameConfig<T>) -> T {
    let mut total = T::zero();
    for s in 0..cfg.num_types() {
        let p = pi.prob(s, truth);
        if p.is_zero() {
            continue;
        }
        let loss = sigma.prob(s).clone() * audit_penalty(s, truth, cfg);
        total = total + p.clone() * (cfg.alloc[s].clone() - loss);
    }
    total
}

pub fn user_utility_type<T: Scalar>(
    pi: &Strategy<T>,
    sigma: &AuditPolicy<T>,
    truth: &str,
    cfg: &GameConfig<T>,
) -> Result<T> {
    check_strategy(pi, cfg)?;
    check_policy(sigma, cfg)?;
    Ok(user_utility_at(pi, sigma, cfg.index_of(truth)?, cfg))
}

/// Prior-weighted user utility.
pub fn user_utility_avg<T: Scalar>(pi: &Strategy<T>, sigma: &AuditPolicy<T>, cfg: &GameConfig<T>) -> Result<T> {
    check_strategy(pi, cfg)?;
    check_policy(sigma, cfg)?;
    Ok((0..cfg.num_types()).fold(T::zero(), |acc, m| {
        acc + cfg.prior[m].clone() * user_utility_at(pi, sigma, m, cfg)
    }))
}

/// Expected payout above entitlement, `E[max(payoff - f(m), 0)]`.
pub fn excess_payments<T: Scalar>(pi: &Strategy<T>, sigma: &AuditPolicy<T>, cfg: &GameConfig<T>) -> Result<T> {
    check_strategy(pi, cfg)?;
    check_policy(sigma, cfg)?;
    let n = cfg.num_types();
    let mut total = T::zero();
    for m in 0..n {
        for s in 0..n {
            if s == m {
                continue;
            }
            let w = cfg.prior[m].clone() * pi.prob(s, m).clone();
            if w.is_zero() {
                continue;
            }
            let fm = cfg.alloc[m].clone();
            let a = sigma.prob(s).clone();
            let unaudited = pos(user_payoff_at(false, s, m, cfg) - fm.clone());
            let audited = pos(user_payoff_at(true, s, m, cfg) - fm);
            total = total + w * ((T::one() - a.clone()) * unaudited + a * audited);
        }
    }
    Ok(total)
}

/// Both sides of the no-audit condition for `signal`, in joint-probability units:
/// the expected recovery from misreporters and the expected audit cost.
pub fn no_audit_sides<T: Scalar>(pi: &Strategy<T>, cfg: &GameConfig<T>, signal: usize) -> (T, T) {
    let mut recovery = T::zero();
    let mut mass = T::zero();
    for m in 0..cfg.num_types() {
        let w = cfg.prior[m].clone() * pi.prob(signal, m).clone();
        if w.is_zero() {
            continue;
        }
        if m != signal {
            recovery = recovery + w.clone() * audit_penalty(signal, m, cfg);
        }
        mass = mass + w;
    }
    (recovery, cfg.audit_cost.clone() * mass)
}

/// Net gain from always auditing `signal`, in joint-probability units.
pub fn audit_gain<T: Scalar>(pi: &Strategy<T>, cfg: &GameConfig<T>, signal: usize) -> T {
    let (recovery, cost) = no_audit_sides(pi, cfg, signal);
    recovery - cost
}

/// The administrator's best response to a single user's strategy.
///
/// Ties and never-sent signals are not audited. With `budget_cap` every
/// profitable signal is audited with probability `min(1, cap / c)`.
pub fn best_response<T: Scalar>(pi: &Strategy<T>, cfg: &GameConfig<T>, budget_cap: Option<&T>) -> Result<AuditPolicy<T>> {
    check_strategy(pi, cfg)?;
    if let Some(b) = budget_cap {
        if *b < T::zero() {
            return Err(GameError::Input(format!("budget cap {} is negative", b.render())));
        }
    }
    let c = cfg.audit_cost();
    let probs = (0..cfg.num_types())
        .map(|s| {
            let (recovery, cost) = no_audit_sides(pi, cfg, s);
            if approx_le(&recovery, &cost) {
                T::zero()
            } else {
                match budget_cap {
                    Some(b) if !c.is_zero() => min_of(T::one(), b.clone() / c.clone()),
                    _ => T::one(),
                }
            }
        })
        .collect();
    Ok(AuditPolicy { probs })
}

/// Joint best response to several users sharing one budget.
///
/// Without a budget, or with a single user, this is the per-user rule. With a
/// budget and several users the administrator fills audit probability in order of
/// decreasing gain, splitting equally among tied users.
pub fn best_response_profile<T: Scalar>(strategies: &[Strategy<T>], cfg: &GameConfig<T>) -> Result<Vec<AuditPolicy<T>>> {
    for pi in strategies {
        check_strategy(pi, cfg)?;
    }
    let budget = match cfg.budget() {
        Some(b) if strategies.len() > 1 => b.clone(),
        cap => {
            return strategies.iter().map(|pi| best_response(pi, cfg, cap)).collect();
        }
    };
    let n = cfg.num_types();
    let mut probs = vec![vec![T::zero(); n]; strategies.len()];
    let mut items: Vec<(usize, usize, T)> = Vec::new();
    for (i, pi) in strategies.iter().enumerate() {
        for s in 0..n {
            let (recovery, cost) = no_audit_sides(pi, cfg, s);
            if !approx_le(&recovery, &cost) {
                items.push((i, s, recovery - cost));
            }
        }
    }
    items.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal));
    let c = cfg.audit_cost().clone();
    let mut remaining: Option<T> = if c.is_zero() { None } else { Some(budget / c) };
    let mut start = 0;
    while start < items.len() {
        let mut end = start + 1;
        while end < items.len() && approx_eq(&items[end].2, &items[start].2) {
            end += 1;
        }
        let group = T::from_usize(end - start);
        let share = match &remaining {
            None => T::one(),
            Some(r) => min_of(T::one(), r.clone() / group.clone()),
        };
        for (i, s, _) in &items[start..end] {
            probs[*i][*s] = share.clone();
        }
        if let Some(r) = remaining.as_mut() {
            *r = pos(r.clone() - share * group);
            if r.is_zero() {
                break;
            }
        }
        start = end;
    }
    Ok(probs.into_iter().map(|probs| AuditPolicy { probs }).collect())
}
