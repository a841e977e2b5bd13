//! Brute-force checks: grid search over strategies, unilateral and coalitional
//! deviation search, and a certificate search for budget regimes without equilibria.

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::equilibrium::{budget_thresholds, misreport_cap};
use crate::error::{GameError, Result};
use crate::game::{
    best_response_profile, user_utility_at, user_utility_avg, GameConfig, Strategy, StrategyProfile,
};
use crate::scalar::{pos, Rational, Scalar};

/// Quantisation of each probability to multiples of `1/resolution`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub resolution: usize,
    pub max_enumeration: u64,
}

impl GridSpec {
    pub const DEFAULT_MAX_ENUMERATION: u64 = 20_000_000;

    pub fn new(resolution: usize) -> Result<Self> {
        Self::with_cap(resolution, Self::DEFAULT_MAX_ENUMERATION)
    }

    pub fn with_cap(resolution: usize, max_enumeration: u64) -> Result<Self> {
        if resolution < 10 {
            return Err(GameError::Input(format!("grid resolution {resolution} is below 10")));
        }
        if max_enumeration == 0 {
            return Err(GameError::Input("enumeration cap must be positive".into()));
        }
        Ok(GridSpec { resolution, max_enumeration })
    }

    /// Utility can move by at most this much within one grid cell.
    pub fn slack<T: Scalar>(&self, cfg: &GameConfig<T>) -> f64 {
        (cfg.delta_f_max().to_f64() + cfg.fine().to_f64()) / self.resolution as f64
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Number of rows over `support` signals at `resolution`.
fn row_count(support: usize, resolution: usize) -> u64 {
    if support == 0 {
        return 0;
    }
    binomial((resolution + support - 1) as u64, (support - 1) as u64)
}

/// All distributions over the allowed signals with masses in multiples of `1/resolution`.
pub fn quantized_rows(allowed: &[bool], resolution: usize) -> Vec<Vec<f64>> {
    let idx: Vec<usize> = (0..allowed.len()).filter(|&i| allowed[i]).collect();
    let mut out = Vec::new();
    let mut counts = vec![0usize; idx.len()];
    fn rec(pos: usize, left: usize, counts: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            out.push(counts.clone());
            return;
        }
        for c in (0..=left).rev() {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, out);
        }
    }
    let mut raw = Vec::new();
    if !idx.is_empty() {
        rec(0, resolution, &mut counts, &mut raw);
    }
    for c in raw {
        let mut row = vec![0.0; allowed.len()];
        for (j, &i) in idx.iter().enumerate() {
            row[i] = c[j] as f64 / resolution as f64;
        }
        out.push(row);
    }
    out
}

/// How much of the strategy space `grid_best_strategy` covered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Full,
    /// Only rows that never claim a smaller allocation (under-reporting is dominated).
    NoUnderReport,
    /// Resolution reduced to fit the enumeration cap.
    Coarse { resolution: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub strategy: Strategy<f64>,
    /// Average user utility against the administrator's best response.
    pub objective: f64,
    pub evaluated: u64,
    pub mode: SearchMode,
}

struct RowTerms {
    row: Vec<f64>,
    recovery: Vec<f64>,
    cost: Vec<f64>,
    value: Vec<f64>,
}

fn row_terms(cfg: &GameConfig<f64>, m: usize, row: Vec<f64>) -> RowTerms {
    let n = cfg.num_types();
    let q = cfg.prior()[m];
    let f = cfg.alloc();
    let (c, k) = (*cfg.audit_cost(), *cfg.fine());
    let mut t = RowTerms { recovery: vec![0.0; n], cost: vec![0.0; n], value: vec![0.0; n], row };
    for s in 0..n {
        let w = q * t.row[s];
        t.cost[s] = c * w;
        t.value[s] = w * f[s];
        if s != m {
            t.recovery[s] = w * (pos(f[s] - f[m]) + k);
        }
    }
    t
}

fn search_rows(cfg: &GameConfig<f64>, resolution: usize, no_under_report: bool) -> Vec<Vec<RowTerms>> {
    let n = cfg.num_types();
    (0..n)
        .map(|m| {
            let allowed: Vec<bool> = (0..n)
                .map(|s| !no_under_report || cfg.alloc()[s] >= cfg.alloc()[m])
                .collect();
            quantized_rows(&allowed, resolution)
                .into_iter()
                .map(|r| row_terms(cfg, m, r))
                .collect()
        })
        .collect()
}

fn product_size(cfg: &GameConfig<f64>, resolution: usize, no_under_report: bool) -> u64 {
    let n = cfg.num_types();
    (0..n).fold(1u64, |acc, m| {
        let support = (0..n)
            .filter(|&s| !no_under_report || cfg.alloc()[s] >= cfg.alloc()[m])
            .count();
        acc.saturating_mul(row_count(support, resolution))
    })
}

/// Exhaustive search for the strategy maximising average user utility when the
/// administrator best-responds (unbudgeted).
pub fn grid_best_strategy<T: Scalar>(cfg: &GameConfig<T>, grid: &GridSpec) -> Result<GridSearchResult> {
    let cfg = cfg.to_float();
    let mut resolution = grid.resolution;
    let mut mode = SearchMode::Full;
    if product_size(&cfg, resolution, false) > grid.max_enumeration {
        mode = SearchMode::NoUnderReport;
        while product_size(&cfg, resolution, true) > grid.max_enumeration && resolution > 1 {
            resolution -= 1;
            mode = SearchMode::Coarse { resolution };
        }
        log::warn!("grid search restricted: {mode:?}");
    }
    let rows = search_rows(&cfg, resolution, mode != SearchMode::Full);
    let n = cfg.num_types();
    let evaluated = rows.iter().fold(1u64, |a, r| a.saturating_mul(r.len() as u64));

    fn leaf(acc: &[f64; 4 * 8], n: usize) -> f64 {
        let mut obj = 0.0;
        for s in 0..n {
            let (rec, cost, value) = (acc[s], acc[8 + s], acc[16 + s]);
            let audited = rec > cost + 1e-9 * 1f64.max(rec.abs()).max(cost.abs());
            obj += value;
            if audited {
                obj -= acc[24 + s];
            }
        }
        obj
    }
    // Accumulator layout: recovery | cost | value | loss, 8 slots each.
    if n > 8 {
        return Err(GameError::Input("grid search supports at most 8 types".into()));
    }
    fn rec(rows: &[Vec<RowTerms>], m: usize, acc: &mut [f64; 32], choice: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        let n = rows.len();
        if m == n {
            let obj = leaf(acc, n);
            if obj > best.0 + 1e-12 {
                *best = (obj, choice.clone());
            }
            return;
        }
        for (i, t) in rows[m].iter().enumerate() {
            let saved = *acc;
            for s in 0..n {
                acc[s] += t.recovery[s];
                acc[8 + s] += t.cost[s];
                acc[16 + s] += t.value[s];
                // Loss when audited equals the recovery from this sender.
                acc[24 + s] += t.recovery[s];
            }
            choice.push(i);
            rec(rows, m + 1, acc, choice, best);
            choice.pop();
            *acc = saved;
        }
    }
    let best = (0..rows[0].len())
        .into_par_iter()
        .map(|i| {
            let mut acc = [0.0; 32];
            let t = &rows[0][i];
            for s in 0..n {
                acc[s] = t.recovery[s];
                acc[8 + s] = t.cost[s];
                acc[16 + s] = t.value[s];
                acc[24 + s] = t.recovery[s];
            }
            let mut best = (f64::NEG_INFINITY, Vec::new());
            let mut choice = vec![i];
            rec(&rows, 1, &mut acc, &mut choice, &mut best);
            best
        })
        .reduce(
            || (f64::NEG_INFINITY, Vec::new()),
            |a, b| if b.0 > a.0 + 1e-12 || (a.1.is_empty() && !b.1.is_empty()) { b } else { a },
        );
    let strategy = Strategy::new(
        best.1.iter().enumerate().map(|(m, &i)| rows[m][i].row.clone()).collect(),
    )?;
    Ok(GridSearchResult { strategy, objective: best.0, evaluated, mode })
}

/// Best unilateral deviation found for one user type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDeviation {
    pub user: usize,
    pub type_label: String,
    pub baseline: f64,
    pub best: f64,
    pub gain: f64,
    pub best_row: Vec<f64>,
}

impl TypeDeviation {
    pub fn to_json(&self) -> Value {
        json!({
            "user": self.user,
            "type": self.type_label,
            "baseline": self.baseline,
            "best": self.best,
            "gain": self.gain,
            "best_row": self.best_row,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub per_type: Vec<TypeDeviation>,
    pub max_improvement: f64,
    pub grid_slack: f64,
}

fn distinct_users(profile: &StrategyProfile<f64>) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for i in 0..profile.num_users() {
        let dup = out.iter().any(|&j| {
            profile.strategy(i) == profile.strategy(j) && profile.audit(i) == profile.audit(j)
        });
        if !dup {
            out.push(i);
        }
    }
    out
}

/// For every user and type, scans quantised replacement rows and reports the
/// largest utility gain once the administrator re-optimises.
pub fn deviation_search(profile: &StrategyProfile<f64>, cfg: &GameConfig<f64>, grid: &GridSpec) -> Result<DeviationReport> {
    let n = cfg.num_types();
    if profile.strategy(0).dim() != n {
        return Err(GameError::Input("profile does not match the game".into()));
    }
    let rows = quantized_rows(&vec![true; n], grid.resolution);
    let mut per_type = Vec::new();
    for user in distinct_users(profile) {
        for m in 0..n {
            let baseline = user_utility_at(profile.strategy(user), profile.audit(user), m, cfg);
            let (best, best_row) = rows
                .par_iter()
                .map(|row| {
                    let mut strategies = profile.strategies().to_vec();
                    strategies[user] = strategies[user].with_row(m, row.clone())?;
                    let audits = best_response_profile(&strategies, cfg)?;
                    Ok((user_utility_at(&strategies[user], &audits[user], m, cfg), row.clone()))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold((f64::NEG_INFINITY, Vec::new()), |a, b| if b.0 > a.0 { b } else { a });
            per_type.push(TypeDeviation {
                user,
                type_label: cfg.types()[m].clone(),
                baseline,
                best,
                gain: best - baseline,
                best_row,
            });
        }
    }
    let max_improvement = per_type.iter().map(|d| d.gain).fold(f64::NEG_INFINITY, f64::max);
    Ok(DeviationReport { per_type, max_improvement, grid_slack: grid.slack(cfg) })
}

/// Largest Pareto-improving joint deviation found for coalitions of a given size.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionReport {
    pub coalition_size: usize,
    pub coalitions_checked: usize,
    /// Largest member gain among joint deviations that leave no member worse off.
    pub max_pareto_gain: f64,
    pub grid_slack: f64,
    /// Only the first coalition was checked because there were too many.
    pub truncated: bool,
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Joint deviations by coalitions of up to three users: every member replaces the
/// row of one type at a time, and the deviation counts when no member's average
/// utility falls while some member gains.
pub fn coalition_deviation_search(
    profile: &StrategyProfile<f64>,
    cfg: &GameConfig<f64>,
    grid: &GridSpec,
    size: usize,
) -> Result<CoalitionReport> {
    if size == 0 || size > 3 {
        return Err(GameError::Input(format!(
            "coalition search supports sizes 1 to 3, got {size}"
        )));
    }
    let users = profile.num_users();
    if size > users {
        return Err(GameError::Input(format!("coalition of {size} exceeds {users} users")));
    }
    let n = cfg.num_types();
    let rows = quantized_rows(&vec![true; n], grid.resolution);
    let joint = (rows.len() as u64).saturating_pow(size as u32);
    if joint.saturating_mul(n as u64) > grid.max_enumeration {
        return Err(GameError::Input(format!(
            "{joint} joint rows per type exceed the enumeration cap; lower the resolution"
        )));
    }
    let mut coalitions = combinations(users, size);
    let truncated = coalitions.len() > 64 || profile.is_symmetric();
    if truncated {
        coalitions.truncate(1);
    }
    let baseline: Vec<f64> = (0..users)
        .map(|i| user_utility_avg(profile.strategy(i), profile.audit(i), cfg))
        .collect::<Result<_>>()?;
    let mut max_pareto_gain = f64::NEG_INFINITY;
    for members in &coalitions {
        for m in 0..n {
            let best = (0..joint)
                .into_par_iter()
                .map(|code| {
                    let mut strategies = profile.strategies().to_vec();
                    let mut c = code;
                    for &u in members {
                        let r = (c % rows.len() as u64) as usize;
                        c /= rows.len() as u64;
                        strategies[u] = strategies[u].with_row(m, rows[r].clone())?;
                    }
                    let audits = best_response_profile(&strategies, cfg)?;
                    let mut worst = f64::INFINITY;
                    let mut top = f64::NEG_INFINITY;
                    for &u in members {
                        let g = user_utility_avg(&strategies[u], &audits[u], cfg)? - baseline[u];
                        worst = worst.min(g);
                        top = top.max(g);
                    }
                    Ok(if worst >= -1e-9 { top } else { f64::NEG_INFINITY })
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            max_pareto_gain = max_pareto_gain.max(best);
        }
    }
    Ok(CoalitionReport {
        coalition_size: size,
        coalitions_checked: coalitions.len(),
        max_pareto_gain,
        grid_slack: grid.slack(cfg),
        truncated,
    })
}

/// Which argument certified a profitable deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeCase {
    /// A user at or below the tolerated misreport rate raises it.
    Raise,
    /// The lower of two violators moves between them and escapes audits.
    Undercut,
    /// Tied violators share the budget; one undercuts the other.
    TieUndercut,
}

impl ProbeCase {
    pub fn name(&self) -> &'static str {
        match self {
            ProbeCase::Raise => "raise",
            ProbeCase::Undercut => "undercut",
            ProbeCase::TieUndercut => "tie_undercut",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrace {
    pub p: [Rational; 2],
    /// Audit-priority coefficient of each user at the profile.
    pub rho: [Rational; 2],
    pub case: ProbeCase,
    pub deviator: usize,
    pub new_p: Rational,
    pub gain: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub resolution: usize,
    pub tolerated_rate: Rational,
    pub threshold_two_type: Rational,
    pub budget: Rational,
    pub profiles_checked: usize,
    pub certified: usize,
    pub raise: usize,
    pub undercut: usize,
    pub tie_undercut: usize,
    /// Profiles with no certificate (empty when the probe succeeds).
    pub failures: Vec<[Rational; 2]>,
    pub traces: Vec<ProbeTrace>,
}

impl ProbeReport {
    pub fn fraction(&self) -> f64 {
        self.certified as f64 / self.profiles_checked.max(1) as f64
    }

    pub fn to_json(&self, include_traces: bool) -> Value {
        let traces: Vec<Value> = if include_traces {
            self.traces
                .iter()
                .map(|t| {
                    json!({
                        "p": [t.p[0].render(), t.p[1].render()],
                        "rho": [t.rho[0].render(), t.rho[1].render()],
                        "case": t.case.name(),
                        "deviator": t.deviator,
                        "new_p": t.new_p.render(),
                        "gain": t.gain.render(),
                    })
                })
                .collect()
        } else {
            Vec::new()
        };
        json!({
            "resolution": self.resolution,
            "budget": self.budget.render(),
            "threshold_two_type": self.threshold_two_type.render(),
            "tolerated_rate": self.tolerated_rate.render(),
            "profiles_checked": self.profiles_checked,
            "certified": self.certified,
            "fraction": self.fraction(),
            "cases": {
                "raise": self.raise,
                "undercut": self.undercut,
                "tie_undercut": self.tie_undercut,
            },
            "failures": self.failures.iter().map(|p| [p[0].render(), p[1].render()]).collect::<Vec<_>>(),
            "traces": traces,
        })
    }
}

/// For every grid profile of two users' misreport rates, builds the deviation
/// the case analysis prescribes and checks it is strictly profitable once the
/// administrator reallocates its budget.
pub fn nonexistence_probe(cfg: &GameConfig<Rational>, grid: &GridSpec) -> Result<ProbeReport> {
    let (lo, hi) = cfg.low_high()?;
    if cfg.num_users() != 2 {
        return Err(GameError::Input(format!(
            "the probe needs exactly 2 users, got {}",
            cfg.num_users()
        )));
    }
    let analysis = budget_thresholds(cfg);
    let threshold = analysis.threshold_two_type.clone().expect("two types");
    let budget = match cfg.budget() {
        Some(b) if b.is_positive_value() && *b < threshold => b.clone(),
        other => {
            return Err(GameError::Input(format!(
                "the probe needs 0 < budget < two-type threshold {}, got {}",
                threshold.render(),
                other.map(|b| b.render()).unwrap_or_else(|| "no budget".into())
            )))
        }
    };
    let q = cfg.prior();
    let f = cfg.alloc();
    let gap = f[hi].clone() - f[lo].clone();
    let c = cfg.audit_cost().clone();
    let k = cfg.fine().clone();
    let p_bar = misreport_cap(&q[lo], &q[hi], &c, &k, &gap);
    let r = grid.resolution as i64;
    let ratio = |i: i64| Rational::new(i.into(), r.into());
    let two = Rational::from_i64(2);

    let utility = |ps: &[Rational; 2], who: usize| -> Result<Rational> {
        let strategies = [
            Strategy::two_type(lo, hi, ps[0].clone())?,
            Strategy::two_type(lo, hi, ps[1].clone())?,
        ];
        let audits = best_response_profile(&strategies, cfg)?;
        user_utility_avg(&strategies[who], &audits[who], cfg)
    };
    let rho = |p: &Rational| {
        q[lo].clone() * p.clone() * (k.clone() + gap.clone())
            - (q[hi].clone() + q[lo].clone() * p.clone()) * c.clone()
    };

    let profiles: Vec<[Rational; 2]> = (0..=r)
        .flat_map(|i| (0..=r).map(move |j| (i, j)))
        .map(|(i, j)| [ratio(i), ratio(j)])
        .collect();
    let outcomes: Vec<Result<Option<ProbeTrace>>> = profiles
        .par_iter()
        .map(|ps| {
            let violator = |p: &Rational| *p > p_bar;
            let (case, deviator, new_p) = if !violator(&ps[0]) || !violator(&ps[1]) {
                // The non-violating user with the lower rate moves.
                let i = if !violator(&ps[0]) && (violator(&ps[1]) || ps[0] <= ps[1]) { 0 } else { 1 };
                let other = &ps[1 - i];
                let target = if ps[i] < p_bar {
                    p_bar.clone()
                } else if violator(other) {
                    (ps[i].clone() + other.clone()) / two.clone()
                } else {
                    Rational::from_i64(1)
                };
                (ProbeCase::Raise, i, target)
            } else if ps[0] != ps[1] {
                let i = if ps[0] < ps[1] { 0 } else { 1 };
                (ProbeCase::Undercut, i, (ps[0].clone() + ps[1].clone()) / two.clone())
            } else {
                let p = ps[0].clone();
                let share = budget.clone() / (two.clone() * c.clone());
                let lower = p.clone() * (gap.clone() - share * (k.clone() + gap.clone())) / gap.clone();
                let lower = if lower.is_negative_value() { Rational::from_i64(0) } else { lower };
                (ProbeCase::TieUndercut, 0, (lower + p) / two.clone())
            };
            let before = utility(ps, deviator)?;
            let mut moved = ps.clone();
            moved[deviator] = new_p.clone();
            let gain = utility(&moved, deviator)? - before;
            Ok(if gain.is_positive_value() {
                Some(ProbeTrace {
                    p: ps.clone(),
                    rho: [rho(&ps[0]), rho(&ps[1])],
                    case,
                    deviator,
                    new_p,
                    gain,
                })
            } else {
                None
            })
        })
        .collect();
    let mut report = ProbeReport {
        resolution: grid.resolution,
        tolerated_rate: p_bar,
        threshold_two_type: threshold,
        budget,
        profiles_checked: profiles.len(),
        certified: 0,
        raise: 0,
        undercut: 0,
        tie_undercut: 0,
        failures: Vec::new(),
        traces: Vec::new(),
    };
    for (ps, outcome) in profiles.into_iter().zip(outcomes) {
        match outcome? {
            Some(trace) => {
                report.certified += 1;
                match trace.case {
                    ProbeCase::Raise => report.raise += 1,
                    ProbeCase::Undercut => report.undercut += 1,
                    ProbeCase::TieUndercut => report.tie_undercut += 1,
                }
                report.traces.push(trace);
            }
            None => report.failures.push(ps),
        }
    }
    Ok(report)
}

trait SignExt {
    fn is_positive_value(&self) -> bool;
    fn is_negative_value(&self) -> bool;
}

impl SignExt for Rational {
    fn is_positive_value(&self) -> bool {
        *self > Rational::from_i64(0)
    }
    fn is_negative_value(&self) -> bool {
        *self < Rational::from_i64(0)
    }
}
