//! Equilibria in closed form, budget regimes, and equilibrium verification.

use std::fmt;

use serde_json::{json, Map, Value};

use crate::error::{GameError, NonexistenceError, Result};
use crate::game::{
    admin_utility, best_response_profile, excess_payments, user_utility_at, user_utility_avg,
    AuditPolicy, GameConfig, Strategy, StrategyProfile,
};
use crate::lp::bp_equilibrium;
use crate::oracle::{deviation_search, GridSpec, TypeDeviation};
use crate::scalar::{approx_eq, min_of, Scalar};

/// How an equilibrium was constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Lp,
    ClosedFormTwoType,
    BudgetedTwoType,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Lp => "lp",
            Provenance::ClosedFormTwoType => "closed_form_two_type",
            Provenance::BudgetedTwoType => "budgeted_two_type",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Unconstrained,
    Sufficient,
    TwoTypeSufficient,
    TwoTypeAnyBudgetSingleUser,
    NonexistencePossible,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Unconstrained => "UNCONSTRAINED",
            Regime::Sufficient => "SUFFICIENT",
            Regime::TwoTypeSufficient => "TWO_TYPE_SUFFICIENT",
            Regime::TwoTypeAnyBudgetSingleUser => "TWO_TYPE_ANY_BUDGET_SINGLE_USER",
            Regime::NonexistencePossible => "NONEXISTENCE_POSSIBLE",
        })
    }
}

/// Budget thresholds and the regime they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetAnalysis<T> {
    /// Budget that suffices for any number of types, one user at a time.
    pub threshold_general: T,
    /// Budget that suffices with two types; `None` otherwise.
    pub threshold_two_type: Option<T>,
    /// `coalition_size × threshold_general`.
    pub threshold_coalition: T,
    pub regime: Regime,
}

/// An equilibrium profile together with its headline numbers.
///
/// Utilities and excess are those of user 0; `total_excess` sums over users.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult<T> {
    pub profile: StrategyProfile<T>,
    pub user_utilities: Vec<T>,
    pub average_user_utility: T,
    pub admin_utility: T,
    pub excess: T,
    pub total_excess: T,
    pub provenance: Provenance,
    /// Raw LP objective, when the LP produced the result.
    pub objective_value: Option<T>,
    pub multiplicity: bool,
    pub unique: bool,
    pub regime: Option<Regime>,
    pub notes: Vec<String>,
}

fn num<T: Scalar>(x: &T) -> Value {
    if T::EXACT {
        Value::String(x.render())
    } else {
        json!(x.to_f64())
    }
}

impl<T: Scalar> EquilibriumResult<T> {
    pub fn from_profile(profile: StrategyProfile<T>, cfg: &GameConfig<T>, provenance: Provenance) -> Result<Self> {
        let pi = profile.strategy(0);
        let sigma = profile.audit(0);
        let user_utilities = (0..cfg.num_types())
            .map(|m| user_utility_at(pi, sigma, m, cfg))
            .collect();
        let mut total_excess = T::zero();
        for (p, s) in profile.strategies().iter().zip(profile.audits()) {
            total_excess = total_excess + excess_payments(p, s, cfg)?;
        }
        Ok(EquilibriumResult {
            user_utilities,
            average_user_utility: user_utility_avg(pi, sigma, cfg)?,
            admin_utility: admin_utility(pi, sigma, cfg)?,
            excess: excess_payments(pi, sigma, cfg)?,
            total_excess,
            provenance,
            objective_value: None,
            multiplicity: false,
            unique: false,
            regime: None,
            notes: Vec::new(),
            profile,
        })
    }

    pub fn strategy(&self) -> &Strategy<T> {
        self.profile.strategy(0)
    }

    pub fn audit(&self) -> &AuditPolicy<T> {
        self.profile.audit(0)
    }

    pub fn to_json(&self, cfg: &GameConfig<T>) -> Value {
        let labels = cfg.types();
        let strategy_doc = |pi: &Strategy<T>| {
            let mut rows = Map::new();
            for (m, label) in labels.iter().enumerate() {
                let mut row = Map::new();
                for (s, sig) in labels.iter().enumerate() {
                    row.insert(sig.clone(), num(pi.prob(s, m)));
                }
                rows.insert(label.clone(), Value::Object(row));
            }
            Value::Object(rows)
        };
        let audit_doc = |sigma: &AuditPolicy<T>| {
            let mut row = Map::new();
            for (s, sig) in labels.iter().enumerate() {
                row.insert(sig.clone(), num(sigma.prob(s)));
            }
            Value::Object(row)
        };
        let profile = if self.profile.is_symmetric() {
            json!({
                "symmetric": true,
                "num_users": self.profile.num_users(),
                "strategy": strategy_doc(self.strategy()),
                "audit": audit_doc(self.audit()),
            })
        } else {
            json!({
                "symmetric": false,
                "num_users": self.profile.num_users(),
                "strategies": self.profile.strategies().iter().map(strategy_doc).collect::<Vec<_>>(),
                "audits": self.profile.audits().iter().map(audit_doc).collect::<Vec<_>>(),
            })
        };
        let mut utilities = Map::new();
        for (label, u) in labels.iter().zip(&self.user_utilities) {
            utilities.insert(label.clone(), num(u));
        }
        json!({
            "mode": T::MODE,
            "provenance": self.provenance.to_string(),
            "regime": self.regime.map(|r| r.to_string()),
            "profile": profile,
            "user_utilities": utilities,
            "average_user_utility": num(&self.average_user_utility),
            "admin_utility": num(&self.admin_utility),
            "excess": num(&self.excess),
            "total_excess": num(&self.total_excess),
            "objective_value": self.objective_value.as_ref().map(num),
            "flags": {
                "multiplicity": self.multiplicity,
                "unique": self.unique,
            },
            "notes": self.notes,
        })
    }
}

/// Largest misreport probability `π(signal|truth)` that keeps auditing unprofitable
/// when only `truth` sends `signal` besides the truthful senders.
///
/// `gap = f(signal) - f(truth)`. Degenerate denominators give 1.
pub fn misreport_cap<T: Scalar>(q_truth: &T, q_signal: &T, c: &T, k: &T, gap: &T) -> T {
    if q_truth.is_zero() {
        return T::one();
    }
    let denom = q_truth.clone() * (k.clone() - c.clone() + gap.clone());
    if denom <= T::zero() {
        return T::one();
    }
    min_of(T::one(), q_signal.clone() * c.clone() / denom)
}

fn two_type_cap<T: Scalar>(cfg: &GameConfig<T>) -> Result<(usize, usize, T)> {
    let (lo, hi) = cfg.low_high()?;
    let q = cfg.prior();
    let gap = cfg.alloc()[hi].clone() - cfg.alloc()[lo].clone();
    let p = misreport_cap(&q[lo], &q[hi], cfg.audit_cost(), cfg.fine(), &gap);
    Ok((lo, hi, p))
}

/// `c·gap/(k + gap)`, zero when the denominator vanishes.
pub(crate) fn audit_budget_for_gap<T: Scalar>(c: &T, k: &T, gap: &T) -> T {
    let denom = k.clone() + gap.clone();
    if denom.is_zero() {
        T::zero()
    } else {
        c.clone() * gap.clone() / denom
    }
}

pub fn budget_thresholds<T: Scalar>(cfg: &GameConfig<T>) -> BudgetAnalysis<T> {
    let c = cfg.audit_cost();
    let k = cfg.fine();
    let threshold_general = audit_budget_for_gap(c, k, &cfg.delta_f_max());
    let threshold_two_type = two_type_cap(cfg).ok().map(|(lo, hi, p)| {
        let gap = cfg.alloc()[hi].clone() - cfg.alloc()[lo].clone();
        audit_budget_for_gap(c, k, &gap) * (T::one() - p)
    });
    let threshold_coalition = T::from_usize(cfg.coalition_size()) * threshold_general.clone();
    let regime = match cfg.budget() {
        None => Regime::Unconstrained,
        Some(b) if *b >= threshold_coalition => Regime::Sufficient,
        Some(_) if cfg.num_types() == 2 && cfg.num_users() == 1 => Regime::TwoTypeAnyBudgetSingleUser,
        Some(b) if threshold_two_type.as_ref().is_some_and(|t| b >= t) => Regime::TwoTypeSufficient,
        Some(_) => Regime::NonexistencePossible,
    };
    BudgetAnalysis {
        threshold_general,
        threshold_two_type,
        threshold_coalition,
        regime,
    }
}

fn nonexistence<T: Scalar>(cfg: &GameConfig<T>, analysis: &BudgetAnalysis<T>) -> GameError {
    GameError::Nonexistence(NonexistenceError {
        budget: cfg.budget().map(|b| b.to_f64()).unwrap_or(f64::INFINITY),
        threshold_general: analysis.threshold_general.to_f64(),
        threshold_two_type: analysis.threshold_two_type.as_ref().map(|t| t.to_f64()),
        threshold_coalition: analysis.threshold_coalition.to_f64(),
        num_users: cfg.num_users(),
    })
}

/// The unique unaudited two-type equilibrium: the low type claims high as often
/// as the administrator tolerates.
pub fn two_type_closed_form<T: Scalar>(cfg: &GameConfig<T>) -> Result<EquilibriumResult<T>> {
    let (lo, hi, p) = two_type_cap(cfg)?;
    let pi = Strategy::two_type(lo, hi, p)?;
    let profile = StrategyProfile::symmetric(pi, AuditPolicy::zero(2), cfg.num_users())?;
    let mut result = EquilibriumResult::from_profile(profile, cfg, Provenance::ClosedFormTwoType)?;
    result.unique = true;
    Ok(result)
}

/// Single-user two-type equilibrium for any finite budget.
///
/// At or below the two-type threshold the low type always claims high and the
/// administrator spends its whole budget auditing; above it the unaudited closed
/// form applies.
pub fn budgeted_two_type_equilibrium<T: Scalar>(cfg: &GameConfig<T>) -> Result<EquilibriumResult<T>> {
    let (lo, hi) = cfg.low_high()?;
    let Some(budget) = cfg.budget() else {
        return Err(GameError::Input("a finite budget is required".into()));
    };
    let analysis = budget_thresholds(cfg);
    if cfg.num_users() > 1 && analysis.regime == Regime::NonexistencePossible {
        return Err(nonexistence(cfg, &analysis));
    }
    let threshold = analysis.threshold_two_type.clone().expect("two types");
    let c = cfg.audit_cost();
    let mut result = if budget <= &threshold && !c.is_zero() {
        let pi = Strategy::two_type(lo, hi, T::one())?;
        let mut probs = vec![T::zero(); 2];
        probs[hi] = min_of(T::one(), budget.clone() / c.clone());
        let sigma = AuditPolicy::new(probs)?;
        let profile = StrategyProfile::symmetric(pi, sigma, cfg.num_users())?;
        let mut r = EquilibriumResult::from_profile(profile, cfg, Provenance::BudgetedTwoType)?;
        r.notes.push(format!(
            "budget {} is at or below the two-type threshold {}; the administrator exhausts it",
            budget.render(),
            threshold.render()
        ));
        r
    } else {
        let mut r = two_type_closed_form(cfg)?;
        r.notes.push(format!(
            "budget {} exceeds the two-type threshold {}; no audits occur",
            budget.render(),
            threshold.render()
        ));
        r
    };
    result.regime = Some(analysis.regime);
    Ok(result)
}

/// Sender-optimal signaling equilibrium for the config's budget regime.
pub fn signaling_equilibrium<T: Scalar>(cfg: &GameConfig<T>) -> Result<EquilibriumResult<T>> {
    let analysis = budget_thresholds(cfg);
    let mut result = match analysis.regime {
        Regime::Unconstrained | Regime::Sufficient => bp_equilibrium(cfg)?,
        Regime::TwoTypeAnyBudgetSingleUser => budgeted_two_type_equilibrium(cfg)?,
        Regime::TwoTypeSufficient => two_type_closed_form(cfg)?,
        Regime::NonexistencePossible => return Err(nonexistence(cfg, &analysis)),
    };
    result.regime = Some(analysis.regime);
    if result.audit().is_zero() {
        result
            .notes
            .push("excess is the tight upper bound over all signaling equilibria".into());
    }
    Ok(result)
}

/// Outcome of checking a profile against best responses and unilateral deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub best_response_matches: bool,
    pub deviations: Vec<TypeDeviation>,
    pub max_improvement: f64,
    pub grid_slack: f64,
    pub resolution: usize,
    pub passed: bool,
}

impl VerificationReport {
    pub fn to_json(&self) -> Value {
        json!({
            "passed": self.passed,
            "best_response_matches": self.best_response_matches,
            "resolution": self.resolution,
            "grid_slack": self.grid_slack,
            "max_improvement": self.max_improvement,
            "deviations": self.deviations.iter().map(|d| d.to_json()).collect::<Vec<_>>(),
        })
    }
}

/// Checks that the administrator best-responds and no user type gains more than
/// the grid slack from a discretised unilateral deviation.
pub fn verify_equilibrium<T: Scalar>(result: &EquilibriumResult<T>, cfg: &GameConfig<T>, resolution: usize) -> Result<VerificationReport> {
    let grid = GridSpec::new(resolution)?;
    let responses = best_response_profile(result.profile.strategies(), cfg)?;
    let best_response_matches = responses.iter().zip(result.profile.audits()).all(|(br, sigma)| {
        br.probs().iter().zip(sigma.probs()).all(|(a, b)| approx_eq(a, b))
    });
    let fcfg = cfg.to_float();
    let fprofile = result.profile.map(|x| x.to_f64());
    let report = deviation_search(&fprofile, &fcfg, &grid)?;
    let passed = best_response_matches && report.max_improvement <= report.grid_slack;
    Ok(VerificationReport {
        best_response_matches,
        max_improvement: report.max_improvement,
        grid_slack: report.grid_slack,
        deviations: report.per_type,
        resolution,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    type Q = Rational;

    fn q(n: i64, d: i64) -> Q {
        Q::ratio(n, d)
    }

    fn cfg_a() -> GameConfig<Q> {
        GameConfig::two_type(q(1, 2), q(50, 1), q(105, 1), q(25, 1), q(100, 1)).unwrap()
    }

    fn two(ql: Q, c: i64, k: i64) -> GameConfig<Q> {
        GameConfig::two_type(ql, q(50, 1), q(105, 1), q(c, 1), q(k, 1)).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let r = two_type_closed_form(&cfg_a()).unwrap();
        assert_eq!(r.strategy().prob(1, 0), &q(5, 26));
        assert!(r.unique);
        let r = two_type_closed_form(&two(q(1, 4), 25, 100)).unwrap();
        assert_eq!(r.strategy().prob(1, 0), &q(15, 26));
        let r = two_type_closed_form(&two(q(1, 10), 25, 100)).unwrap();
        assert_eq!(r.strategy().prob(1, 0), &q(1, 1));
        let cfg3 = GameConfig::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![q(1, 3); 3],
            vec![q(0, 1), q(1, 1), q(2, 1)],
            q(1, 1),
            q(2, 1),
        )
        .unwrap();
        assert!(matches!(two_type_closed_form(&cfg3), Err(GameError::Input(_))));
    }

    #[test]
    fn closed_form_utility_formula() {
        for (ql, c, k) in [(q(1, 2), 25, 100), (q(1, 4), 75, 300), (q(1, 10), 125, 125)] {
            let cfg = two(ql.clone(), c, k);
            let r = two_type_closed_form(&cfg).unwrap();
            let p = r.strategy().prob(1, 0).clone();
            let expected = ql.clone() * q(50, 1) + (q(1, 1) - ql.clone()) * q(105, 1) + ql * p * q(55, 1);
            assert_eq!(r.average_user_utility, expected);
        }
    }

    #[test]
    fn closed_form_respects_type_order() {
        let cfg = GameConfig::new(
            vec!["H".into(), "L".into()],
            vec![q(1, 2), q(1, 2)],
            vec![q(105, 1), q(50, 1)],
            q(25, 1),
            q(100, 1),
        )
        .unwrap();
        let r = two_type_closed_form(&cfg).unwrap();
        assert_eq!(r.strategy().prob(0, 1), &q(5, 26));
        assert_eq!(r.strategy().prob(0, 0), &q(1, 1));
    }

    #[test]
    fn thresholds() {
        let a = budget_thresholds(&two(q(1, 2), 75, 300));
        assert_eq!(a.threshold_general, q(75 * 55, 355));
        let a = budget_thresholds(&cfg_a());
        assert_eq!(a.threshold_two_type, Some(q(25 * 55, 155) * q(21, 26)));
        assert!((a.threshold_two_type.unwrap().to_f64() - 7.1650).abs() < 1e-4);
        let cfg = two(q(1, 2), 75, 300).with_population(150, 150).unwrap();
        let a = budget_thresholds(&cfg);
        assert_eq!(a.threshold_coalition, q(150, 1) * q(75 * 55, 355));
        assert!((a.threshold_coalition.to_f64() - 1742.96).abs() < 0.01);
        assert_eq!(a.regime, Regime::Unconstrained);
    }

    #[test]
    fn regime_precedence() {
        let regime = |b: i64, n: usize, l: usize| {
            let cfg = cfg_a().with_population(n, l).unwrap().with_budget(Some(q(b, 1))).unwrap();
            budget_thresholds(&cfg).regime
        };
        assert_eq!(regime(9, 1, 1), Regime::Sufficient);
        assert_eq!(regime(3, 1, 1), Regime::TwoTypeAnyBudgetSingleUser);
        assert_eq!(regime(8, 2, 1), Regime::TwoTypeSufficient);
        assert_eq!(regime(3, 2, 1), Regime::NonexistencePossible);
        assert_eq!(regime(20, 2, 2), Regime::Sufficient);
        assert_eq!(regime(10, 2, 2), Regime::TwoTypeSufficient);
    }

    #[test]
    fn budgeted_branches() {
        let r = budgeted_two_type_equilibrium(&cfg_a().with_budget(Some(q(2, 1))).unwrap()).unwrap();
        assert_eq!(r.provenance, Provenance::BudgetedTwoType);
        assert_eq!(r.strategy().prob(1, 0), &q(1, 1));
        assert_eq!(r.audit().prob(1), &q(2, 25));
        assert_eq!(r.average_user_utility, q(988, 10));
        let r = budgeted_two_type_equilibrium(&cfg_a().with_budget(Some(q(10, 1))).unwrap()).unwrap();
        assert_eq!(r.provenance, Provenance::ClosedFormTwoType);
        assert!(r.audit().is_zero());
        assert_eq!(r.strategy().prob(1, 0), &q(5, 26));
        let r = budgeted_two_type_equilibrium(&cfg_a().with_budget(Some(q(0, 1))).unwrap()).unwrap();
        assert_eq!(r.strategy().prob(1, 0), &q(1, 1));
        assert!(r.audit().is_zero());
        assert!(budgeted_two_type_equilibrium(&cfg_a()).is_err());
    }

    #[test]
    fn dispatch() {
        let lp = signaling_equilibrium(&cfg_a()).unwrap();
        let cf = two_type_closed_form(&cfg_a()).unwrap();
        assert_eq!(lp.profile, cf.profile);
        assert_eq!(lp.excess, cf.excess);
        assert_eq!(lp.provenance, Provenance::Lp);
        let cfg = cfg_a().with_population(2, 1).unwrap().with_budget(Some(q(3, 1))).unwrap();
        match signaling_equilibrium(&cfg) {
            Err(GameError::Nonexistence(e)) => {
                assert_eq!(e.num_users, 2);
                assert!((e.threshold_two_type.unwrap() - 7.165).abs() < 1e-3);
            }
            other => panic!("expected non-existence, got {other:?}"),
        }
        let cfg = cfg_a().with_population(2, 2).unwrap().with_budget(Some(q(20, 1))).unwrap();
        let r = signaling_equilibrium(&cfg).unwrap();
        assert_eq!(r.regime, Some(Regime::Sufficient));
        assert!(r.profile.audits().iter().all(|a| a.is_zero()));
        assert_eq!(r.profile.num_users(), 2);
        assert_eq!(r.total_excess, q(2, 1) * r.excess.clone());
    }

    #[test]
    fn json_document_is_exact_in_rational_mode() {
        let r = signaling_equilibrium(&cfg_a()).unwrap();
        let doc = r.to_json(&cfg_a());
        assert_eq!(doc["profile"]["strategy"]["L"]["H"], "5/26");
        assert_eq!(doc["provenance"], "lp");
        assert_eq!(doc["regime"], "UNCONSTRAINED");
        assert_eq!(doc["profile"]["audit"]["H"], "0");
    }

    #[test]
    fn verification_of_known_profiles() {
        let cfg = cfg_a();
        let eq = signaling_equilibrium(&cfg).unwrap();
        let rep = verify_equilibrium(&eq, &cfg, 200).unwrap();
        assert!(rep.passed, "{rep:?}");
        let truthful = StrategyProfile::symmetric(Strategy::truthful(2), AuditPolicy::zero(2), 1).unwrap();
        let fake = EquilibriumResult::from_profile(truthful, &cfg, Provenance::Lp).unwrap();
        let rep = verify_equilibrium(&fake, &cfg, 200).unwrap();
        assert!(rep.best_response_matches);
        assert!(!rep.passed);
        assert!((rep.max_improvement - 0.19 * 55.0).abs() < 1e-9);
    }
}
