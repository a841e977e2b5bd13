//! Parameter sweeps over the transit-benefit case study, emitted as CSV.

use rayon::prelude::*;

use crate::cost::{compare, two_type_costs, CostReport};
use crate::equilibrium::misreport_cap;
use crate::error::{GameError, Result};
use crate::game::GameConfig;
use crate::lp::{bp_strategy, support};
use crate::scalar::{Rational, Scalar};

pub const COST_HEADER: &str = "q_min,c,k,l,cost_no_audit,cost_audit,budget,excess,dominates,reference_line";
pub const SURFACE_HEADER: &str = "q_min,c,k,max_misreport_prob";

/// Monthly misreporting fraud used as a reference line in the cost plots.
pub const FTBP_REFERENCE_LINE: i64 = 83_333;

/// Grids crossed by a sweep; `base` supplies everything else.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec<T> {
    pub base: GameConfig<T>,
    pub q_min_grid: Vec<T>,
    pub c_grid: Vec<T>,
    pub k_grid: Vec<T>,
    pub coalition_grid: Vec<usize>,
    pub reference_line: T,
}

impl<T: Scalar> SweepSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.q_min_grid.is_empty() || self.c_grid.is_empty() || self.k_grid.is_empty() || self.coalition_grid.is_empty() {
            return Err(GameError::Input("sweep grids must be non-empty".into()));
        }
        if self.q_min_grid.iter().any(|q| *q < T::zero() || *q > T::one()) {
            return Err(GameError::Input("q_min values must lie in [0, 1]".into()));
        }
        if self.c_grid.iter().chain(&self.k_grid).any(|x| *x < T::zero() || !x.is_finite()) {
            return Err(GameError::Input("audit costs and fines must be non-negative".into()));
        }
        if self.coalition_grid.contains(&0) {
            return Err(GameError::Input("coalition sizes must be positive".into()));
        }
        Ok(())
    }

    /// Grid pairs with a fine below the audit cost. Two-type formulas stay
    /// defined there; configs with more types reject them row by row.
    pub fn pairs_with_fine_below_cost(&self) -> Vec<(T, T)> {
        let mut out = Vec::new();
        for c in &self.c_grid {
            for k in &self.k_grid {
                if k < c {
                    out.push((c.clone(), k.clone()));
                }
            }
        }
        out
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> SweepSpec<U> {
        SweepSpec {
            base: self.base.map(f),
            q_min_grid: self.q_min_grid.iter().map(f).collect(),
            c_grid: self.c_grid.iter().map(f).collect(),
            k_grid: self.k_grid.iter().map(f).collect(),
            coalition_grid: self.coalition_grid.clone(),
            reference_line: f(&self.reference_line),
        }
    }
}

fn ints(xs: &[i64]) -> Vec<Rational> {
    xs.iter().map(|&x| Rational::from_i64(x)).collect()
}

/// The transit-benefit calibration: 4000 users entitled to 50 or 105 a month.
pub fn ftbp_preset() -> SweepSpec<Rational> {
    let base = GameConfig::two_type(
        Rational::ratio(1, 2),
        Rational::from_i64(50),
        Rational::from_i64(105),
        Rational::from_i64(25),
        Rational::from_i64(100),
    )
    .and_then(|c| c.with_population(4000, 1))
    .expect("preset is valid");
    SweepSpec {
        base,
        q_min_grid: (1..=99).map(|i| Rational::ratio(i, 100)).collect(),
        c_grid: ints(&[25, 75, 125]),
        k_grid: ints(&[100, 300, 500]),
        coalition_grid: vec![1, 150],
        reference_line: Rational::from_i64(FTBP_REFERENCE_LINE),
    }
}

/// Misreporting-surface grid: three low-type shares, six audit costs, ten fines.
pub fn misreport_surface_preset() -> SweepSpec<Rational> {
    SweepSpec {
        q_min_grid: vec![Rational::ratio(1, 4), Rational::ratio(1, 2), Rational::ratio(3, 4)],
        c_grid: ints(&[25, 50, 75, 100, 125, 150]),
        k_grid: (1..=10).map(|i| Rational::from_i64(100 * i)).collect(),
        coalition_grid: vec![1],
        ..ftbp_preset()
    }
}

fn lowest_type<T: Scalar>(cfg: &GameConfig<T>) -> usize {
    let f = cfg.alloc();
    (0..f.len()).fold(0, |best, i| if f[i] < f[best] { i } else { best })
}

/// Base prior with the lowest-allocation type set to `q_min` and the others
/// rescaled proportionally.
fn prior_with_q_min<T: Scalar>(cfg: &GameConfig<T>, q_min: &T) -> Result<Vec<T>> {
    let lo = lowest_type(cfg);
    let rest = cfg
        .prior()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != lo)
        .fold(T::zero(), |a, (_, q)| a + q.clone());
    if rest.is_zero() {
        return Err(GameError::Input("base prior puts no mass on the other types".into()));
    }
    let scale = (T::one() - q_min.clone()) / rest;
    Ok(cfg
        .prior()
        .iter()
        .enumerate()
        .map(|(i, q)| if i == lo { q_min.clone() } else { q.clone() * scale.clone() })
        .collect())
}

/// One row of the cost sweep; `report` holds the annotation when the row failed.
#[derive(Debug, Clone, PartialEq)]
pub struct CostRow<T> {
    pub q_min: T,
    pub c: T,
    pub k: T,
    pub l: usize,
    pub report: std::result::Result<CostReport<T>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceRow<T> {
    pub q_min: T,
    pub c: T,
    pub k: T,
    pub value: std::result::Result<T, String>,
}

fn cost_row<T: Scalar>(spec: &SweepSpec<T>, q_min: &T, c: &T, k: &T, l: usize) -> std::result::Result<CostReport<T>, String> {
    let base = &spec.base;
    if l > base.num_users() {
        return Err(format!("coalition {l} exceeds {} users", base.num_users()));
    }
    if base.num_types() == 2 {
        let (lo, hi) = base.low_high().map_err(|e| e.to_string())?;
        let gap = base.alloc()[hi].clone() - base.alloc()[lo].clone();
        return Ok(two_type_costs(q_min, c, k, &gap, base.num_users(), l));
    }
    let prior = prior_with_q_min(base, q_min).map_err(|e| e.to_string())?;
    let cfg = base
        .clone()
        .with_prior(prior)
        .and_then(|g| g.with_costs(c.clone(), k.clone()))
        .and_then(|g| g.with_population(base.num_users(), l))
        .map_err(|e| e.to_string())?;
    compare(&cfg).map_err(|e| e.to_string())
}

fn in_pool<R: Send>(workers: Option<usize>, job: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| GameError::Internal(format!("worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Cost rows ordered by `(q_min, c, k, l)` as given in the grids.
pub fn sweep_costs<T: Scalar>(spec: &SweepSpec<T>, workers: Option<usize>) -> Result<Vec<CostRow<T>>> {
    spec.validate()?;
    let mut keys = Vec::new();
    for q in &spec.q_min_grid {
        for c in &spec.c_grid {
            for k in &spec.k_grid {
                for &l in &spec.coalition_grid {
                    keys.push((q, c, k, l));
                }
            }
        }
    }
    in_pool(workers, || {
        keys.par_iter()
            .map(|&(q, c, k, l)| CostRow {
                q_min: q.clone(),
                c: c.clone(),
                k: k.clone(),
                l,
                report: cost_row(spec, q, c, k, l),
            })
            .collect()
    })
}

fn surface_value<T: Scalar>(spec: &SweepSpec<T>, q_min: &T, c: &T, k: &T) -> std::result::Result<T, String> {
    let base = &spec.base;
    if base.num_types() == 2 {
        let (lo, hi) = base.low_high().map_err(|e| e.to_string())?;
        let gap = base.alloc()[hi].clone() - base.alloc()[lo].clone();
        return Ok(misreport_cap(q_min, &(T::one() - q_min.clone()), c, k, &gap));
    }
    let prior = prior_with_q_min(base, q_min).map_err(|e| e.to_string())?;
    let cfg = base
        .clone()
        .with_prior(prior)
        .and_then(|g| g.with_costs(c.clone(), k.clone()))
        .map_err(|e| e.to_string())?;
    let (pi, _) = bp_strategy(&cfg).map_err(|e| e.to_string())?;
    let kept = support(&cfg);
    let mut best = T::zero();
    for &m in &kept {
        for &s in &kept {
            if s != m && *pi.prob(s, m) > best {
                best = pi.prob(s, m).clone();
            }
        }
    }
    Ok(best)
}

/// Largest equilibrium misreport probability per `(q_min, c, k)`.
pub fn sweep_misreport_surface<T: Scalar>(spec: &SweepSpec<T>, workers: Option<usize>) -> Result<Vec<SurfaceRow<T>>> {
    spec.validate()?;
    let mut keys = Vec::new();
    for q in &spec.q_min_grid {
        for c in &spec.c_grid {
            for k in &spec.k_grid {
                keys.push((q, c, k));
            }
        }
    }
    in_pool(workers, || {
        keys.par_iter()
            .map(|&(q, c, k)| SurfaceRow {
                q_min: q.clone(),
                c: c.clone(),
                k: k.clone(),
                value: surface_value(spec, q, c, k),
            })
            .collect()
    })
}

fn sig<T: Scalar>(x: &T) -> String {
    x.to_sig(15)
}

/// Cost rows as CSV. Failed rows keep their key, leave the numbers empty and
/// put the annotation in the `dominates` column.
pub fn cost_rows_to_csv<T: Scalar>(rows: &[CostRow<T>], reference_line: &T) -> String {
    let mut out = String::with_capacity(rows.len() * 96);
    out.push_str(COST_HEADER);
    out.push('\n');
    for r in rows {
        let key = format!("{},{},{},{}", sig(&r.q_min), sig(&r.c), sig(&r.k), r.l);
        match &r.report {
            Ok(rep) => out.push_str(&format!(
                "{key},{},{},{},{},{},{}\n",
                sig(&rep.cost_no_audit),
                sig(&rep.cost_audit),
                sig(&rep.budget_component),
                sig(&rep.excess_component),
                rep.dominance,
                sig(reference_line)
            )),
            Err(note) => out.push_str(&format!(
                "{key},,,,,\"error: {}\",{}\n",
                note.replace('"', "'"),
                sig(reference_line)
            )),
        }
    }
    out
}

pub fn surface_rows_to_csv<T: Scalar>(rows: &[SurfaceRow<T>]) -> String {
    let mut out = String::with_capacity(rows.len() * 48);
    out.push_str(SURFACE_HEADER);
    out.push('\n');
    for r in rows {
        let value = match &r.value {
            Ok(v) => sig(v),
            Err(note) => format!("\"error: {}\"", note.replace('"', "'")),
        };
        out.push_str(&format!("{},{},{},{value}\n", sig(&r.q_min), sig(&r.c), sig(&r.k)));
    }
    out
}

/// Low-type share at which the status-quo cost first reaches `reference`, by
/// linear interpolation between consecutive rows of one `(c, k, l)` slice.
pub fn reference_crossing<T: Scalar>(rows: &[CostRow<T>], c: &T, k: &T, l: usize, reference: &T) -> Option<f64> {
    let slice: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.c == *c && r.k == *k && r.l == l)
        .filter_map(|r| r.report.as_ref().ok().map(|rep| (r.q_min.to_f64(), rep.cost_no_audit.to_f64())))
        .collect();
    let target = reference.to_f64();
    slice.windows(2).find_map(|w| {
        let ((q0, y0), (q1, y1)) = (w[0], w[1]);
        if (y0 - target) * (y1 - target) <= 0.0 && y1 != y0 {
            Some(q0 + (target - y0) * (q1 - q0) / (y1 - y0))
        } else {
            None
        }
    })
}
