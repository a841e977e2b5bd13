//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::process::Command;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use auditgame::bounds::{bound_report, excess_payments_bound};
use auditgame::casestudy::{ftbp_preset, reference_crossing, sweep_costs};
use auditgame::cost::Dominance;
use auditgame::equilibrium::budgeted_two_type_equilibrium;
use auditgame::game::{admin_payoff_at, best_response, excess_payments};
use auditgame::lp::bp_equilibrium;
use auditgame::oracle::{deviation_search, nonexistence_probe, GridSpec};
use auditgame::scalar::parse_rational;
use auditgame::{
    budget_thresholds, signaling_equilibrium, two_type_closed_form, verify_equilibrium, AuditPolicy, EquilibriumResult,
    GameConfig, Provenance, Rational, Scalar, Strategy, StrategyProfile,
};
use auditgame_ledger::{
    sign_receipt, Coin, CoinMetadata, Ed25519, KeyPair, Ledger, LedgerError, RawReceipt, Rejection, SignatureScheme,
    ToyScheme,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SURFACE: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/misreport_surface.csv"));
const BIN: &str = env!("CARGO_BIN_EXE_auditgame");

type Outcome = Result<String, String>;

fn q(n: i64, d: i64) -> Rational {
    Rational::ratio(n, d)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let t = start.elapsed();
    check(t < limit, || format!("took {t:.2?}, limit {limit:?}"))
}

fn fixture() -> Vec<(String, String, String, String)> {
    SURFACE
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].into(), f[1].into(), f[2].into(), f[3].into())
        })
        .collect()
}

fn run_surface(mode: &str) -> Result<Vec<(String, String, String, String)>, String> {
    let out = Command::new(BIN).args(["surface", "--mode", mode]).output().map_err(|e| e.to_string())?;
    check(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let text = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    check(lines.next() == Some("q_min,c,k,max_misreport_prob"), || "unexpected surface header".into())?;
    Ok(lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].into(), f[1].into(), f[2].into(), f[3].into())
        })
        .collect())
}

fn surface_reproduction() -> Outcome {
    let expected = fixture();
    check(expected.len() == 180, || format!("fixture has {} points", expected.len()))?;
    let start = Instant::now();
    let exact = run_surface("rational")?;
    within(Duration::from_secs(1), start)?;
    check(exact == expected, || {
        let bad = exact.iter().zip(&expected).find(|(a, b)| a != b);
        format!("rational output differs: {bad:?}")
    })?;
    let float = run_surface("float")?;
    for (got, want) in float.iter().zip(&expected) {
        let (a, b): (f64, f64) = (got.3.parse().unwrap(), want.3.parse().unwrap());
        check((got.0.as_str(), got.1.as_str(), got.2.as_str()) == (want.0.as_str(), want.1.as_str(), want.2.as_str()), || {
            format!("float row key {got:?} vs {want:?}")
        })?;
        check((a - b).abs() <= 1e-12, || format!("float value {got:?} vs {want:?}"))?;
    }
    Ok(format!("180/180 points, rational exact and float within 1e-12, {:.0?}", start.elapsed()))
}

fn grid_500() -> Vec<GameConfig<Rational>> {
    let mut out = Vec::new();
    for ql in [q(1, 10), q(1, 4), q(1, 3), q(1, 2), q(3, 4)] {
        for c in [5, 10, 25, 50, 75] {
            for extra in [0, 25, 100, 300] {
                for gap in [1, 10, 55, 100, 200] {
                    out.push(
                        GameConfig::two_type(ql.clone(), q(50, 1), q(50 + gap, 1), q(c, 1), q(c + extra, 1)).unwrap(),
                    );
                }
            }
        }
    }
    out
}

fn lp_vs_closed_form() -> Outcome {
    let start = Instant::now();
    let grid = grid_500();
    for cfg in &grid {
        let lp = bp_equilibrium(cfg).map_err(|e| e.to_string())?;
        let cf = two_type_closed_form(cfg).map_err(|e| e.to_string())?;
        check(lp.strategy() == cf.strategy() && lp.audit() == cf.audit(), || {
            format!("LP and closed form differ at q={:?} c={} k={}", cfg.prior(), cfg.audit_cost(), cfg.fine())
        })?;
    }
    within(Duration::from_secs(5), start)?;
    Ok(format!("{} points agree exactly, {:.0?}", grid.len(), start.elapsed()))
}

fn bound_invariants() -> Outcome {
    let mut checked = 0;
    let mut outside_model = 0;
    let mut cfgs = grid_500();
    for (qs, cs, ks, _) in fixture() {
        let (ql, c, k) = (parse_rational(&qs).unwrap(), parse_rational(&cs).unwrap(), parse_rational(&ks).unwrap());
        // Points with k < c lie outside the game's parameter range.
        match GameConfig::two_type(ql, q(50, 1), q(105, 1), c, k) {
            Ok(cfg) => cfgs.push(cfg),
            Err(_) => outside_model += 1,
        }
    }
    for cfg in &cfgs {
        let eq = signaling_equilibrium(cfg).map_err(|e| e.to_string())?;
        let report = bound_report(cfg, Some(eq.strategy()));
        check(report.admits(eq.strategy()), || format!("misreport cap violated at {:?}", cfg.prior()))?;
        check(eq.excess <= excess_payments_bound(cfg), || format!("excess cap violated at {:?}", cfg.prior()))?;
        checked += 1;
    }
    let cfg_a = GameConfig::two_type(q(1, 2), q(50, 1), q(105, 1), q(25, 1), q(100, 1)).unwrap();
    let eq = signaling_equilibrium(&cfg_a).map_err(|e| e.to_string())?;
    let (excess, bound) = (eq.excess.to_f64(), excess_payments_bound(&cfg_a).to_f64());
    check((excess - 5.288461538).abs() < 1e-9 && (bound - 8.870967742).abs() < 1e-9 && excess <= bound, || {
        format!("reference game excess {excess} bound {bound}")
    })?;
    Ok(format!(
        "{checked} equilibria within caps ({outside_model} surface points have k < c); reference excess {excess:.4} <= {bound:.4}"
    ))
}

fn cost_dominance() -> Outcome {
    let start = Instant::now();
    let spec = ftbp_preset();
    let rows = sweep_costs(&spec, None).map_err(|e| e.to_string())?;
    let gap = q(55, 1);
    let mut equal_rows = 0;
    for r in &rows {
        let rep = r.report.as_ref().map_err(|e| e.clone())?;
        check(rep.cost_audit <= rep.cost_no_audit && rep.dominance == Dominance::Holds, || {
            format!("audit costs more at q={} c={} k={} l={}", r.q_min, r.c, r.k, r.l)
        })?;
        if r.q_min <= r.c.clone() / (r.k.clone() + gap.clone()) {
            check(rep.cost_audit == rep.cost_no_audit, || format!("expected equal costs at q={}", r.q_min))?;
            equal_rows += 1;
        }
    }
    let mut crossings = Vec::new();
    for c in &spec.c_grid {
        for k in &spec.k_grid {
            for &l in &spec.coalition_grid {
                let x = reference_crossing(&rows, c, k, l, &spec.reference_line)
                    .ok_or_else(|| format!("no crossing for c={c} k={k} l={l}"))?;
                crossings.push(x);
            }
        }
    }
    check(crossings.iter().all(|x| (x - 0.379).abs() <= 0.03), || format!("crossings {crossings:?}"))?;
    within(Duration::from_secs(10), start)?;
    Ok(format!(
        "{} rows dominate, {equal_rows} at equality, 83,333 crossed at q_min={:.4}, {:.0?}",
        rows.len(),
        crossings[0],
        start.elapsed()
    ))
}

fn three_type() -> GameConfig<Rational> {
    GameConfig::new(
        vec!["x".into(), "y".into(), "z".into()],
        vec![q(1, 3); 3],
        vec![q(0, 1), q(2, 1), q(4, 1)],
        q(1, 1),
        q(2, 1),
    )
    .unwrap()
}

fn three_type_fixture() -> Outcome {
    let cfg = three_type();
    let lp = bp_equilibrium(&cfg).map_err(|e| e.to_string())?;
    check(lp.excess == q(22, 45), || format!("LP excess {}", lp.excess))?;

    // The constructed profile, with the administrator not auditing as in its construction.
    let pi = Strategy::new(vec![
        vec![q(2, 3), q(1, 3), q(0, 1)],
        vec![q(0, 1), q(2, 3), q(1, 3)],
        vec![q(0, 1), q(0, 1), q(1, 1)],
    ])
    .unwrap();
    let excess = excess_payments(&pi, &AuditPolicy::zero(3), &cfg).map_err(|e| e.to_string())?;
    check(excess == q(4, 9), || format!("profile excess {excess}"))?;
    let profile = StrategyProfile::symmetric(pi.clone(), AuditPolicy::zero(3), 1).unwrap();
    let grid = GridSpec::new(200).unwrap();
    let fcfg = cfg.to_float();
    let dev = deviation_search(&profile.map(|x| x.to_f64()), &fcfg, &grid).map_err(|e| e.to_string())?;
    check(dev.max_improvement <= dev.grid_slack, || {
        format!("deviation gain {} exceeds slack {}", dev.max_improvement, dev.grid_slack)
    })?;
    check(excess < lp.excess, || "profile excess is not below the LP optimum".into())?;
    let audits_y = best_response(&pi, &cfg, None).map_err(|e| e.to_string())?;

    // A profile where signal y is exactly indifferent passes full verification.
    let tuned = Strategy::new(vec![
        vec![q(7, 9), q(2, 9), q(0, 1)],
        vec![q(0, 1), q(2, 3), q(1, 3)],
        vec![q(0, 1), q(0, 1), q(1, 1)],
    ])
    .unwrap();
    let sigma = best_response(&tuned, &cfg, None).map_err(|e| e.to_string())?;
    let tuned_result = EquilibriumResult::from_profile(
        StrategyProfile::symmetric(tuned, sigma, 1).unwrap(),
        &cfg,
        Provenance::Lp,
    )
    .map_err(|e| e.to_string())?;
    let report = verify_equilibrium(&tuned_result, &cfg, 200).map_err(|e| e.to_string())?;
    check(report.passed && tuned_result.excess < lp.excess, || "tuned profile fails verification".into())?;
    Ok(format!(
        "LP excess 22/45; constructed profile excess 4/9, max deviation gain {:.3} <= slack {:.3}; \
         note: its exact best response audits signal y (sigma={:?}); tuned profile with excess {} passes full verification",
        dev.max_improvement,
        dev.grid_slack,
        audits_y.probs().iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        tuned_result.excess
    ))
}

fn nonexistence() -> Outcome {
    let start = Instant::now();
    let base = GameConfig::two_type(q(1, 2), q(50, 1), q(105, 1), q(25, 1), q(100, 1))
        .unwrap()
        .with_population(2, 1)
        .unwrap();
    let threshold = budget_thresholds(&base).threshold_two_type.unwrap();
    let mut details = Vec::new();
    for b in [1, 3, 5] {
        let cfg = base.clone().with_budget(Some(q(b, 1))).unwrap();
        check(q(b, 1) < threshold, || format!("budget {b} not below threshold"))?;
        let report = nonexistence_probe(&cfg, &GridSpec::new(100).unwrap()).map_err(|e| e.to_string())?;
        check(report.failures.is_empty(), || {
            format!("B={b}: {} of {} profiles uncertified", report.failures.len(), report.profiles_checked)
        })?;
        details.push(format!("B={b}: {}/{}", report.certified, report.profiles_checked));
    }
    within(Duration::from_secs(30), start)?;
    Ok(format!("{} certified below threshold {:.5}, {:.1?}", details.join(", "), threshold.to_f64(), start.elapsed()))
}

fn budgeted_two_type() -> Outcome {
    let base = GameConfig::two_type(q(1, 2), q(50, 1), q(105, 1), q(25, 1), q(100, 1)).unwrap();
    let threshold = budget_thresholds(&base).threshold_two_type.unwrap();
    let mut provenances = Vec::new();
    for b in ["0", "2", "7.165", "10"] {
        let cfg = base.clone().with_budget(Some(parse_rational(b).unwrap())).unwrap();
        let eq = budgeted_two_type_equilibrium(&cfg).map_err(|e| e.to_string())?;
        let report = verify_equilibrium(&eq, &cfg, 100).map_err(|e| e.to_string())?;
        check(report.passed, || format!("B={b} fails verification: gain {}", report.max_improvement))?;
        provenances.push(format!("B={b}:{}", eq.provenance));
    }
    let eps = parse_rational("1e-9").unwrap();
    let at = |b: Rational| {
        budgeted_two_type_equilibrium(&base.clone().with_budget(Some(b)).unwrap()).map(|e| e.provenance)
    };
    let below = at(threshold.clone() - eps.clone()).map_err(|e| e.to_string())?;
    let above = at(threshold.clone() + eps).map_err(|e| e.to_string())?;
    check(below == Provenance::BudgetedTwoType && above == Provenance::ClosedFormTwoType, || {
        format!("switch not at threshold: below {below}, above {above}")
    })?;
    Ok(format!("{}; switch at {:.8} +/- 1e-9", provenances.join(", "), threshold.to_f64()))
}

fn random_instance(rng: &mut ChaCha8Rng) -> (GameConfig<Rational>, Strategy<Rational>) {
    let n = rng.gen_range(2..=4);
    let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
    let total: i64 = weights.iter().sum();
    let c = rng.gen_range(0..=6);
    let cfg = GameConfig::new(
        (0..n).map(|i| format!("t{i}")).collect(),
        weights.iter().map(|w| q(*w, total)).collect(),
        (0..n).map(|_| q(rng.gen_range(0..=20), 1)).collect(),
        q(c, 1),
        q(c + rng.gen_range(0..=8), 1),
    )
    .unwrap();
    let rows = (0..n)
        .map(|m| {
            let mut w: Vec<i64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(0..=4) }).collect();
            w[m] += 1;
            let s: i64 = w.iter().sum();
            w.iter().map(|x| q(*x, s)).collect()
        })
        .collect();
    (cfg, Strategy::new(rows).unwrap())
}

fn sign_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut signals, mut ties) = (0, 0);
    for _ in 0..10_000 {
        let (cfg, pi) = random_instance(&mut rng);
        let sigma = best_response(&pi, &cfg, None).map_err(|e| e.to_string())?;
        for s in 0..cfg.num_types() {
            let gain = (0..cfg.num_types()).fold(q(0, 1), |acc, m| {
                let w = cfg.prior()[m].clone() * pi.prob(s, m).clone();
                acc + w * (admin_payoff_at(true, s, m, &cfg) - admin_payoff_at(false, s, m, &cfg))
            });
            let expected = if gain > q(0, 1) { q(1, 1) } else { q(0, 1) };
            if gain == q(0, 1) {
                ties += 1;
            }
            check(sigma.prob(s) == &expected, || format!("signal {s}: gain {gain} but sigma {}", sigma.prob(s)))?;
            signals += 1;
        }
    }
    Ok(format!("10000 instances, {signals} signals agree, {ties} exact ties all unaudited"))
}

fn spend(ledger: &Ledger, user: &KeyPair, goods: &str, coins: Vec<Coin>) -> Result<u64, LedgerError> {
    let raw = RawReceipt::new(goods, 105, user.public.clone(), coins);
    let z = ledger.begin_spend(&raw)?;
    let receipt = sign_receipt(ledger.scheme(), &user.secret, raw, z)?;
    ledger.finalize_spend(&receipt).map(|a| a.index)
}

fn rejected(r: Result<u64, LedgerError>) -> Option<Rejection> {
    match r {
        Err(LedgerError::Rejected(r)) => Some(r),
        _ => None,
    }
}

fn ledger_run(scheme: Arc<dyn SignatureScheme>, rogue: Arc<dyn SignatureScheme>) -> Result<(), String> {
    let e = |x: LedgerError| x.to_string();
    let dir = tempfile::tempdir().map_err(|x| x.to_string())?;
    let ledger = Ledger::create(dir.path(), scheme).map_err(e)?;
    let users: Vec<KeyPair> = (0..20).map(|_| ledger.scheme().keygen().unwrap()).collect();
    let mut coins = Vec::new();
    for i in 0..1000u64 {
        let user = &users[(i % 20) as usize];
        let coin = ledger.mint(&user.public, CoinMetadata::new(i, "benefit")).map_err(e)?;
        spend(&ledger, user, "fare", vec![coin.clone()]).map_err(e)?;
        coins.push(coin);
    }
    for (i, coin) in coins.iter().enumerate() {
        let r = rejected(spend(&ledger, &users[i % 20], "again", vec![coin.clone()]));
        check(r == Some(Rejection::DoubleSpend { coin_id: i as u64 }), || format!("coin {i} re-spend: {r:?}"))?;
    }
    // Tampered metadata and a coin from a rogue issuer.
    let alice = &users[0];
    let fresh = ledger.mint(&alice.public, CoinMetadata::new(5000, "")).map_err(e)?;
    let mut tampered = fresh.clone();
    tampered.metadata.note = "x".into();
    let r = rejected(spend(&ledger, alice, "t", vec![tampered]));
    check(r == Some(Rejection::Counterfeit { coin_id: 5000 }), || format!("tampered coin: {r:?}"))?;
    let rogue_ledger = Ledger::in_memory(rogue).map_err(e)?;
    let fake = rogue_ledger.mint(&alice.public, CoinMetadata::new(6000, "")).map_err(e)?;
    let r = rejected(spend(&ledger, alice, "t", vec![fake]));
    check(r == Some(Rejection::Counterfeit { coin_id: 6000 }), || format!("rogue coin: {r:?}"))?;
    // A receipt for Alice's coin signed with Bob's key.
    let raw = RawReceipt::new("t", 1, alice.public.clone(), vec![fresh.clone()]);
    let z = ledger.begin_spend(&raw).map_err(e)?;
    let forged = sign_receipt(ledger.scheme(), &users[1].secret, raw, z).map_err(e)?;
    let r = rejected(ledger.finalize_spend(&forged).map(|a| a.index));
    check(r == Some(Rejection::BadSignature), || format!("wrong-key receipt: {r:?}"))?;
    // 100 racing spends of one coin.
    let ledger = Arc::new(ledger);
    let racer = Arc::new(alice.clone());
    let handles: Vec<_> = (0..100)
        .map(|i| {
            let (l, u, c) = (ledger.clone(), racer.clone(), fresh.clone());
            thread::spawn(move || spend(&l, &u, &format!("race {i}"), vec![c]))
        })
        .collect();
    let mut approvals = 0;
    for h in handles {
        match h.join().map_err(|_| "racer panicked".to_string())? {
            Ok(_) => approvals += 1,
            Err(LedgerError::Rejected(Rejection::DoubleSpend { .. })) => {}
            Err(other) => return Err(format!("racer failed unexpectedly: {other}")),
        }
    }
    check(approvals == 1, || format!("{approvals} racing spends approved"))?;
    drop(ledger);
    let reopened = Ledger::open(dir.path(), 0).map_err(e)?;
    let report = reopened.audit_log().map_err(e)?;
    check(report.all_valid && report.receipts == 1001, || {
        format!("replay: {} receipts, all valid {}", report.receipts, report.all_valid)
    })
}

fn ledger_suite() -> Outcome {
    let start = Instant::now();
    ledger_run(Arc::new(ToyScheme::new(9)), Arc::new(ToyScheme::new(10)))?;
    let toy = start.elapsed();
    within(Duration::from_secs(10), start)?;
    let start = Instant::now();
    ledger_run(Arc::new(Ed25519), Arc::new(Ed25519))?;
    let real = start.elapsed();
    within(Duration::from_secs(60), start)?;
    Ok(format!("1000 round trips, 1000 double spends refused, tamper/counterfeit/wrong-key refused, 1 of 100 racers approved, replay verified; test double {toy:.1?}, ed25519 {real:.1?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("surface reproduction", surface_reproduction),
        ("LP vs closed form", lp_vs_closed_form),
        ("bound invariants", bound_invariants),
        ("cost dominance", cost_dominance),
        ("three-type fixture", three_type_fixture),
        ("non-existence probe", nonexistence),
        ("budgeted two-type", budgeted_two_type),
        ("audit sign oracle", sign_oracle),
        ("ledger adversarial suite", ledger_suite),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {} [{name}]: PASS ({detail}) [{t:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL ({why}) [{t:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
