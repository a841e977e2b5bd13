//! Sampling and brute-force oracles for the payoff formulas and the audit rule.

use auditgame::game::{admin_payoff_at, admin_utility, best_response, user_payoff_at, user_utility_at};
use auditgame::{AuditPolicy, GameConfig, Rational, Scalar, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng, max_types: usize, denom: i64) -> (GameConfig<Rational>, Strategy<Rational>) {
    let n = rng.gen_range(2..=max_types);
    let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=denom)).collect();
    let total: i64 = weights.iter().sum();
    let alloc: Vec<Rational> = (0..n).map(|_| Rational::from_i64(rng.gen_range(0..=20))).collect();
    let c = rng.gen_range(0..=6);
    let k = c + rng.gen_range(0..=8);
    let cfg = GameConfig::new(
        (0..n).map(|i| format!("t{i}")).collect(),
        weights.iter().map(|w| Rational::ratio(*w, total)).collect(),
        alloc,
        Rational::from_i64(c),
        Rational::from_i64(k),
    )
    .unwrap();
    let rows = (0..n)
        .map(|_| {
            let w: Vec<i64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0 } else { rng.gen_range(0..=denom) }).collect();
            let s: i64 = w.iter().sum();
            if s == 0 {
                let mut row = vec![Rational::from_i64(0); n];
                row[rng.gen_range(0..n)] = Rational::from_i64(1);
                row
            } else {
                w.iter().map(|x| Rational::ratio(*x, s)).collect()
            }
        })
        .collect();
    (cfg, Strategy::new(rows).unwrap())
}

/// Gain from auditing `signal`, summed straight from the realized payoffs.
fn brute_force_gain(pi: &Strategy<Rational>, cfg: &GameConfig<Rational>, signal: usize) -> Rational {
    (0..cfg.num_types()).fold(Rational::from_i64(0), |acc, m| {
        let w = cfg.prior()[m].clone() * pi.prob(signal, m).clone();
        acc + w * (admin_payoff_at(true, signal, m, cfg) - admin_payoff_at(false, signal, m, cfg))
    })
}

#[test]
fn audit_rule_matches_brute_force_sign() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ties = 0;
    for _ in 0..10_000 {
        let (cfg, pi) = random_instance(&mut rng, 4, 4);
        let sigma = best_response(&pi, &cfg, None).unwrap();
        for s in 0..cfg.num_types() {
            let gain = brute_force_gain(&pi, &cfg, s);
            let zero = Rational::from_i64(0);
            if gain == zero {
                ties += 1;
            }
            let expected = if gain > zero { 1 } else { 0 };
            assert_eq!(sigma.prob(s), &Rational::from_i64(expected), "signal {s} gain {}", gain.render());
        }
    }
    assert!(ties > 1000, "only {ties} ties exercised");
}

struct Sampler<'a> {
    cfg: &'a GameConfig<f64>,
    pi: &'a Strategy<f64>,
    sigma: &'a AuditPolicy<f64>,
}

impl Sampler<'_> {
    fn pick(rng: &mut ChaCha8Rng, probs: impl Iterator<Item = f64>) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in probs.enumerate() {
            if p > 0.0 {
                last = i;
            }
            acc += p;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// One play of the game: (admin payoff, user payoff, truth).
    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, f64, usize) {
        let n = self.cfg.num_types();
        let m = Self::pick(rng, self.cfg.prior().iter().copied());
        let s = Self::pick(rng, (0..n).map(|s| *self.pi.prob(s, m)));
        let audited = rng.gen::<f64>() < *self.sigma.prob(s);
        (admin_payoff_at(audited, s, m, self.cfg), user_payoff_at(audited, s, m, self.cfg), m)
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn sampled_admin_payoff_matches_expected_utility() {
    let cfg = GameConfig::two_type(0.5, 50.0, 105.0, 25.0, 100.0).unwrap();
    let pi = Strategy::two_type(0, 1, 0.3).unwrap();
    let sigma = AuditPolicy::new(vec![0.2, 0.6]).unwrap();
    let sampler = Sampler { cfg: &cfg, pi: &pi, sigma: &sigma };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws: Vec<f64> = (0..1_000_000).map(|_| sampler.draw(&mut rng).0).collect();
    let (mean, se) = mean_and_se(&draws);
    let exact = admin_utility(&pi, &sigma, &cfg).unwrap();
    assert!((mean - exact).abs() <= 3.0 * se, "mean {mean} exact {exact} se {se}");
}

#[test]
fn sampled_payoffs_match_closed_forms_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..10_000 {
        let (cfg, pi) = random_instance(&mut rng, 4, 6);
        let n = cfg.num_types();
        let sigma = AuditPolicy::new((0..n).map(|_| Rational::ratio(rng.gen_range(0..=4), 4)).collect()).unwrap();
        let (cfg, pi, sigma) = (cfg.to_float(), pi.map(|x| x.to_f64()), sigma.map(|x| x.to_f64()));
        let sampler = Sampler { cfg: &cfg, pi: &pi, sigma: &sigma };
        let draws: Vec<(f64, f64, usize)> = (0..400).map(|_| sampler.draw(&mut rng)).collect();
        let admin: Vec<f64> = draws.iter().map(|d| d.0).collect();
        // User utility averaged over types equals the prior-weighted closed form.
        let user: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let exact_admin = admin_utility(&pi, &sigma, &cfg).unwrap();
        let exact_user: f64 = (0..n).map(|m| cfg.prior()[m] * user_utility_at(&pi, &sigma, m, &cfg)).sum();
        for (xs, exact) in [(admin, exact_admin), (user, exact_user)] {
            let (mean, se) = mean_and_se(&xs);
            let tol = 5.0 * se + 1e-9;
            assert!((mean - exact).abs() <= tol, "mean {mean} exact {exact} se {se}");
        }
    }
}
