//! The sender-optimal signaling LP and an exact dense simplex solver.

use std::fmt::Write as _;

use crate::equilibrium::{budget_thresholds, EquilibriumResult, Provenance};
use crate::error::{GameError, Result};
use crate::game::{best_response, AuditPolicy, GameConfig, Strategy, StrategyProfile};
use crate::scalar::{pos, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub relation: Relation,
    pub rhs: T,
    pub label: String,
}

/// `maximize objective·x` subject to `constraints` and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub constraints: Vec<Constraint<T>>,
    /// Column `j` holds `π(signal | truth)` for `variable_index[j] = (signal, truth)`.
    pub variable_index: Vec<(usize, usize)>,
    /// Type labels for the debug format.
    pub labels: Vec<String>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn column(&self, signal: usize, truth: usize) -> Option<usize> {
        self.variable_index.iter().position(|&p| p == (signal, truth))
    }

    /// Plain-text dump: variables, objective row, then one line per constraint.
    pub fn to_debug_text(&self) -> String {
        let row = |v: &[T]| v.iter().map(|x| x.render()).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        let _ = writeln!(out, "vars {}", self.num_vars());
        for (j, (s, m)) in self.variable_index.iter().enumerate() {
            let _ = writeln!(out, "x{j} = pi({}|{})", self.labels[*s], self.labels[*m]);
        }
        let _ = writeln!(out, "max {}", row(&self.objective));
        for c in &self.constraints {
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
            };
            let _ = writeln!(out, "{}: {} {rel} {}", c.label, row(&c.coeffs), c.rhs.render());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LPSolution<T> {
    pub values: Vec<T>,
    pub objective_value: T,
    pub status: LpStatus,
    /// An optimal point other than `values` exists.
    pub multiplicity: bool,
}

/// Types with positive prior, in config order.
pub fn support<T: Scalar>(cfg: &GameConfig<T>) -> Vec<usize> {
    (0..cfg.num_types()).filter(|&m| !cfg.prior()[m].is_zero()).collect()
}

/// Builds the LP over the types with positive prior.
///
/// One `<=` row per signal keeps auditing unprofitable; one `=` row per type
/// makes its signaling row a distribution.
pub fn build_bp_lp<T: Scalar>(cfg: &GameConfig<T>) -> Result<LinearProgram<T>> {
    if cfg.num_types() < 2 {
        return Err(GameError::Input("at least two types are needed to misreport".into()));
    }
    let kept = support(cfg);
    let dropped = cfg.num_types() - kept.len();
    if dropped > 0 {
        log::warn!("dropping {dropped} zero-probability type(s) before building the LP");
    }
    let f = cfg.alloc();
    let q = cfg.prior();
    let c = cfg.audit_cost();
    let k = cfg.fine();
    let mut variable_index = Vec::with_capacity(kept.len() * kept.len());
    for &m in &kept {
        for &s in &kept {
            variable_index.push((s, m));
        }
    }
    let objective = variable_index
        .iter()
        .map(|&(s, m)| q[m].clone() * f[s].clone())
        .collect();
    let mut constraints = Vec::new();
    for &s in &kept {
        let coeffs = variable_index
            .iter()
            .map(|&(sig, m)| {
                if sig != s {
                    T::zero()
                } else if m == s {
                    -(c.clone() * q[m].clone())
                } else {
                    q[m].clone() * (k.clone() + pos(f[s].clone() - f[m].clone()) - c.clone())
                }
            })
            .collect();
        constraints.push(Constraint {
            coeffs,
            relation: Relation::Le,
            rhs: T::zero(),
            label: format!("no-audit {}", cfg.types()[s]),
        });
    }
    for &m in &kept {
        let coeffs = variable_index
            .iter()
            .map(|&(_, truth)| if truth == m { T::one() } else { T::zero() })
            .collect();
        constraints.push(Constraint {
            coeffs,
            relation: Relation::Eq,
            rhs: T::one(),
            label: format!("row {}", cfg.types()[m]),
        });
    }
    Ok(LinearProgram {
        objective,
        constraints,
        variable_index,
        labels: cfg.types().to_vec(),
    })
}

fn reduced_eps<T: Scalar>() -> T {
    if T::EXACT {
        T::zero()
    } else {
        T::from_rational(&crate::scalar::Rational::new(1.into(), 1_000_000_000.into()))
    }
}

fn abs<T: Scalar>(x: &T) -> T {
    if *x < T::zero() {
        -x.clone()
    } else {
        x.clone()
    }
}

struct Tableau<T> {
    a: Vec<Vec<T>>,
    b: Vec<T>,
    basis: Vec<usize>,
}

impl<T: Scalar> Tableau<T> {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col].clone();
        for x in self.a[row].iter_mut() {
            *x = x.clone() / p.clone();
        }
        self.b[row] = self.b[row].clone() / p;
        let pivot_row = self.a[row].clone();
        let pivot_b = self.b[row].clone();
        for i in 0..self.a.len() {
            if i == row {
                continue;
            }
            let factor = self.a[i][col].clone();
            if factor.is_zero() {
                continue;
            }
            for (x, y) in self.a[i].iter_mut().zip(&pivot_row) {
                if !y.is_zero() {
                    *x = x.clone() - factor.clone() * y.clone();
                }
            }
            self.a[i][col] = T::zero();
            self.b[i] = self.b[i].clone() - factor * pivot_b.clone();
        }
        self.basis[row] = col;
    }

    fn reduced_costs(&self, cost: &[T]) -> Vec<T> {
        let mut r = cost.to_vec();
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = &cost[bi];
            if cb.is_zero() {
                continue;
            }
            for (rj, aij) in r.iter_mut().zip(&self.a[i]) {
                if !aij.is_zero() {
                    *rj = rj.clone() - cb.clone() * aij.clone();
                }
            }
        }
        r
    }

    /// Bland's rule: smallest index improving column, then the leaving row with
    /// the smallest basic index among minimum ratios.
    fn ratio_row(&self, col: usize) -> Option<usize> {
        let eps = T::pivot_eps();
        let mut best: Option<(usize, T)> = None;
        for i in 0..self.a.len() {
            let aij = &self.a[i][col];
            if *aij <= eps {
                continue;
            }
            let ratio = self.b[i].clone() / aij.clone();
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        best.map(|(i, _)| i)
    }

    fn optimize(&mut self, cost: &[T], allowed: &[bool]) -> LpStatus {
        let eps = reduced_eps::<T>();
        loop {
            let r = self.reduced_costs(cost);
            let entering = (0..cost.len())
                .find(|&j| allowed[j] && !self.basis.contains(&j) && r[j] > eps);
            let Some(col) = entering else {
                return LpStatus::Optimal;
            };
            match self.ratio_row(col) {
                Some(row) => self.pivot(row, col),
                None => return LpStatus::Unbounded,
            }
        }
    }
}

/// Two-phase primal simplex.
pub fn solve_lp<T: Scalar>(lp: &LinearProgram<T>) -> LPSolution<T> {
    let n = lp.num_vars();
    let m = lp.constraints.len();
    let eps = T::pivot_eps();
    // Normalise to non-negative right-hand sides.
    let mut rows: Vec<(Vec<T>, i8, T)> = lp
        .constraints
        .iter()
        .map(|c| {
            let sense = match c.relation {
                Relation::Le => 1,
                Relation::Eq => 0,
            };
            if c.rhs < T::zero() {
                (c.coeffs.iter().map(|x| -x.clone()).collect(), -sense, -c.rhs.clone())
            } else {
                (c.coeffs.clone(), sense, c.rhs.clone())
            }
        })
        .collect();
    let slack_count = rows.iter().filter(|r| r.1 != 0).count();
    let art_count = rows.iter().filter(|r| r.1 != 1).count();
    let total = n + slack_count + art_count;
    let art_start = n + slack_count;
    let mut a = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let (mut next_slack, mut next_art) = (n, art_start);
    for (coeffs, sense, rhs) in rows.drain(..) {
        let mut row = coeffs;
        row.resize(total, T::zero());
        match sense {
            1 => {
                row[next_slack] = T::one();
                basis.push(next_slack);
                next_slack += 1;
            }
            -1 => {
                row[next_slack] = -T::one();
                next_slack += 1;
                row[next_art] = T::one();
                basis.push(next_art);
                next_art += 1;
            }
            _ => {
                row[next_art] = T::one();
                basis.push(next_art);
                next_art += 1;
            }
        }
        a.push(row);
        b.push(rhs);
    }
    let mut tab = Tableau { a, b, basis };
    let infeasible = LPSolution {
        values: vec![T::zero(); n],
        objective_value: T::zero(),
        status: LpStatus::Infeasible,
        multiplicity: false,
    };

    if art_count > 0 {
        let cost: Vec<T> = (0..total)
            .map(|j| if j >= art_start { -T::one() } else { T::zero() })
            .collect();
        let allowed = vec![true; total];
        tab.optimize(&cost, &allowed);
        let phase1 = tab
            .basis
            .iter()
            .zip(&tab.b)
            .filter(|(bi, _)| **bi >= art_start)
            .fold(T::zero(), |acc, (_, v)| acc + v.clone());
        if phase1 > reduced_eps::<T>() + eps.clone() {
            return infeasible;
        }
        // Drive remaining (zero-valued) artificials out of the basis.
        let mut i = 0;
        while i < tab.a.len() {
            if tab.basis[i] >= art_start {
                match (0..art_start).find(|&j| abs(&tab.a[i][j]) > eps) {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.a.remove(i);
                        tab.b.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut cost = lp.objective.clone();
    cost.resize(total, T::zero());
    let allowed: Vec<bool> = (0..total).map(|j| j < art_start).collect();
    let status = tab.optimize(&cost, &allowed);
    let mut values = vec![T::zero(); n];
    for (i, &bi) in tab.basis.iter().enumerate() {
        if bi < n {
            values[bi] = tab.b[i].clone();
        }
    }
    let objective_value = values
        .iter()
        .zip(&lp.objective)
        .fold(T::zero(), |acc, (x, c)| acc + x.clone() * c.clone());
    if status == LpStatus::Unbounded {
        return LPSolution { values, objective_value, status, multiplicity: false };
    }
    // A zero reduced cost column that can move a positive step (or forever)
    // leads to a different optimal point.
    let r = tab.reduced_costs(&cost);
    let zero = reduced_eps::<T>();
    let multiplicity = (0..art_start).any(|j| {
        if tab.basis.contains(&j) || abs(&r[j]) > zero {
            return false;
        }
        match tab.ratio_row(j) {
            None => true,
            Some(row) => tab.b[row] > eps,
        }
    });
    LPSolution { values, objective_value, status, multiplicity }
}

impl<T: Scalar> LPSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// LP optimum embedded back into a full strategy. Dropped types play truthfully.
pub fn bp_strategy<T: Scalar>(cfg: &GameConfig<T>) -> Result<(Strategy<T>, LPSolution<T>)> {
    let lp = build_bp_lp(cfg)?;
    let sol = solve_lp(&lp);
    if !sol.is_optimal() {
        return Err(GameError::Internal(format!(
            "signaling LP reported {:?}; it is always feasible and bounded",
            sol.status
        )));
    }
    let n = cfg.num_types();
    let mut rows = Strategy::<T>::truthful(n).rows().to_vec();
    for m in support(cfg) {
        for x in rows[m].iter_mut() {
            *x = T::zero();
        }
    }
    for (j, &(s, m)) in lp.variable_index.iter().enumerate() {
        rows[m][s] = sol.values[j].clone();
    }
    let pi = Strategy::new(rows)
        .map_err(|e| GameError::Internal(format!("LP optimum is not a strategy: {e}")))?;
    for m in support(cfg) {
        for s in 0..n {
            if cfg.alloc()[s] < cfg.alloc()[m] && !pi.prob(s, m).is_zero() {
                let p = pi.prob(s, m).to_f64();
                if T::EXACT || p > 1e-9 {
                    return Err(GameError::Internal(format!(
                        "LP optimum under-reports {} as {} with probability {p}",
                        cfg.types()[m],
                        cfg.types()[s]
                    )));
                }
            }
        }
    }
    Ok((pi, sol))
}

/// Sender-optimal equilibrium: users play the LP optimum and are never audited.
pub fn bp_equilibrium<T: Scalar>(cfg: &GameConfig<T>) -> Result<EquilibriumResult<T>> {
    if let Some(b) = cfg.budget() {
        let analysis = budget_thresholds(cfg);
        if *b < analysis.threshold_general {
            return Err(GameError::Regime(format!(
                "budget {} is below the sufficient budget threshold {}; \
                 use the budget-aware equilibrium instead",
                b.render(),
                analysis.threshold_general.render()
            )));
        }
    }
    let (pi, sol) = bp_strategy(cfg)?;
    let br = best_response(&pi, cfg, None)?;
    if !br.is_zero() {
        return Err(GameError::Internal(
            "administrator wants to audit the LP optimum".into(),
        ));
    }
    let profile = StrategyProfile::symmetric(pi, AuditPolicy::zero(cfg.num_types()), cfg.num_users())?;
    let mut result = EquilibriumResult::from_profile(profile, cfg, Provenance::Lp)?;
    result.objective_value = Some(sol.objective_value.clone());
    result.multiplicity = sol.multiplicity;
    if sol.multiplicity {
        result.notes.push("alternate optimal strategies exist; returning the first optimal vertex".into());
    }
    Ok(result)
}
