//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use binfilt::filtration::FiltMap;
use binfilt::riskneutral::{extract_kernel, marginals_consistent, truncation_measure_preserving, RnCoefficients};
use binfilt::*;
use binfilt_verify::{admissible, drop_steps, outside_band, physical, random_variable, schedules_up_to};
use num_traits::{One, Zero};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Q = Exact;

fn q(n: i64, d: i64) -> Q {
    Q::from_ratio(n, d)
}

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn to_f64(p: &MarketParams<Q>) -> MarketParams<f64> {
    p.to_f64()
}

fn oracle_up(p: &MarketParams<Q>) -> Q {
    (p.sigma.clone() + p.r.clone() - p.mu.clone()) / (q(2, 1) * p.sigma.clone())
}

fn criterion_1(rng: &mut StdRng) -> Outcome {
    let t = Tolerances::default();
    let horizon = 10;
    let schedule = FiltrationSchedule::classical(horizon).unwrap();
    let mut kernel_mismatch = 0;
    let mut exact_worst = q(0, 1);
    let mut float_worst = 0.0f64;
    for _ in 0..100 {
        let p = admissible(rng);
        let up = oracle_up(&p);
        let sol = solve_classical(&p, horizon).unwrap();
        for k in 1..=horizon {
            let qk = sol.kernel.q(k);
            for a in 0..atom_count(k - 1) {
                if *qk.at(2 * a + 1) != up || *qk.at(2 * a) != q(1, 1) - up.clone() {
                    kernel_mismatch += 1;
                }
            }
        }
        let report = martingale_condition_check(&sol.measures, &schedule, &p, &t).unwrap();
        exact_worst = exact_worst.max(report.max_violation());
        let pf = to_f64(&p);
        let solf = solve_classical(&pf, horizon).unwrap();
        let reportf = martingale_condition_check(&solf.measures, &schedule, &pf, &t).unwrap();
        float_worst = float_worst.max(reportf.max_violation());
    }
    Outcome::new(
        kernel_mismatch == 0 && exact_worst.is_zero() && float_worst <= 1e-12,
        format!(
            "100 parameter sets, T=10: kernel mismatches {kernel_mismatch}, max violation {exact_worst} (exact) / {float_worst:.2e} (f64)"
        ),
    )
}

fn criterion_2(rng: &mut StdRng) -> Outcome {
    let t = Tolerances::default();
    let horizon = 6;
    let (mut forced_bad, mut qbin_bad, mut policy_bad, mut condition_bad) = (0, 0, 0, 0);
    let mut residual_matches = true;
    let mut failing_levels = std::collections::BTreeSet::new();
    let mut runs = 0;
    for k in 1..horizon {
        let schedule = FiltrationSchedule::drop_k(horizon, k).unwrap();
        for _ in 0..10 {
            runs += 1;
            let p = admissible(rng);
            let up = oracle_up(&p);
            let sol = solve_drop_k(&p, horizon, k, &FreeValuePolicy::Half).unwrap();
            let qk = sol.kernel.q(k);
            for a in 0..atom_count(k - 1) {
                if !qk.at(2 * a + 1).is_zero() || !qk.at(2 * a).is_one() {
                    forced_bad += 1;
                }
            }
            let qn = sol.kernel.q(k + 1);
            for a in 0..atom_count(k - 1) {
                // a01 and a00 sit at indices 4a + 1 and 4a.
                if *qn.at(4 * a + 1) != up || *qn.at(4 * a) != q(1, 1) - up.clone() {
                    qbin_bad += 1;
                }
            }
            for policy in [FreeValuePolicy::Zero, FreeValuePolicy::One] {
                if solve_drop_k(&p, horizon, k, &policy).unwrap().measures != sol.measures {
                    policy_bad += 1;
                }
            }
            let report = martingale_condition_check(&sol.measures, &schedule, &p, &t).unwrap();
            if !report.holds() {
                condition_bad += 1;
                failing_levels.extend(report.failing_levels());
                // Residual at a ∈ B_{k-1} is Q_{k-1}(a)(1 - c0): c1 * 0 + c0 * Q_{k-1}(a) on the right.
                let c0 = RnCoefficients::new(&p).c0;
                let level = &report.levels[k - 1];
                let heaviest = sol.measures[k - 1].weights().iter().cloned().fold(q(0, 1), |a, b| a.max(b));
                residual_matches &= level.max_violation == heaviest * (q(1, 1) - c0);
            }
        }
    }
    let clauses_ok = forced_bad == 0 && qbin_bad == 0 && policy_bad == 0;
    let mut detail = format!(
        "{runs} runs, T=6, k=1..5: forced entries {}, one-step values {}, free-value invariance {}; martingale condition fails in {condition_bad}/{runs} runs",
        ok(forced_bad == 0),
        ok(qbin_bad == 0),
        ok(policy_bad == 0),
    );
    if condition_bad > 0 {
        detail.push_str(&format!(
            " (levels {:?}, always the level before the dropped step; residual equals Q_(k-1)(a)(1 - c0): {})",
            failing_levels, residual_matches
        ));
    }
    Outcome::new(clauses_ok && condition_bad == 0, detail)
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISMATCH"
    }
}

/// Every event `A ⊆ B_m` in Gray-code order, comparing both sides of the
/// defining identity. Right-hand contributions come from a scan of the source
/// atoms, independent of the map's preimage index.
fn defining_identity_holds(
    f: &FiltMap,
    v: &RandomVariable<Q>,
    m_t: &FiniteMeasure<Q>,
    m_s: &FiniteMeasure<Q>,
    t: &Tolerances,
) -> (bool, usize) {
    let e = cond_exp(v, f, m_t, m_s, t).unwrap();
    let targets = atom_count(f.target_level());
    let lhs_atom: Vec<Q> = (0..targets).map(|a| e.at(a).clone() * m_t.weight_at(a).clone()).collect();
    let mut rhs_atom = vec![q(0, 1); targets];
    for b in 0..atom_count(f.source_level()) {
        let a = f.apply_index(b);
        rhs_atom[a] = rhs_atom[a].clone() + v.at(b).clone() * m_s.weight_at(b).clone();
    }
    let mut inside = vec![false; targets];
    let (mut lhs, mut rhs) = (q(0, 1), q(0, 1));
    let events = 1usize << targets;
    for i in 1..events {
        let a = i.trailing_zeros() as usize;
        inside[a] = !inside[a];
        if inside[a] {
            lhs += lhs_atom[a].clone();
            rhs += rhs_atom[a].clone();
        } else {
            lhs -= lhs_atom[a].clone();
            rhs -= rhs_atom[a].clone();
        }
        if lhs != rhs {
            return (false, i);
        }
    }
    (true, events)
}

fn criterion_3(rng: &mut StdRng) -> Outcome {
    let t = Tolerances::default();
    let mut events = 0usize;
    let mut arrows = 0usize;
    let mut failures = Vec::new();
    // Maps up to B_5 → B_4 so that events on every B_n, n ≤ 4, are covered.
    for horizon in 1..=5 {
        for schedule in schedules_up_to(horizon) {
            let drops: Vec<usize> = drop_steps(&schedule);
            let p_measures = physical(rng, horizon, &drops);
            let params = admissible(rng);
            let q_measures = solve_schedule(&params, &schedule, &FreeValuePolicy::Half).unwrap().measures;
            for (label, measures) in [("P", &p_measures), ("Q", &q_measures)] {
                for m in 0..horizon {
                    for n in m + 1..=horizon {
                        let f = schedule.compose(m, n).unwrap();
                        let v = random_variable(rng, n);
                        let (good, count) = defining_identity_holds(&f, &v, &measures[m], &measures[n], &t);
                        arrows += 1;
                        events += count;
                        if !good {
                            failures.push(format!("{label} T={horizon} {:?} f_({m},{n})", schedule.step_kinds()));
                        }
                    }
                }
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!("{arrows} arrows (one-step and composite, full and drop, under P and Q), {events} events checked exactly; failures: {failures:?}"),
    )
}

fn criterion_4(rng: &mut StdRng) -> Outcome {
    let t = Tolerances::default();
    let horizon = 6;
    let mut part_a = 0;
    for _ in 0..50 {
        let p = outside_band(rng);
        let schedule = if rng.gen_bool(0.5) {
            FiltrationSchedule::classical(horizon).unwrap()
        } else {
            FiltrationSchedule::drop_k(horizon, rng.gen_range(1..horizon)).unwrap()
        };
        // Non-trivial: every p_i in {0, 1} except one index strictly inside.
        let inner = rng.gen_range(0..horizon);
        let probs: Vec<f64> = (0..horizon)
            .map(|i| {
                if i == inner {
                    rng.gen_range(0.05..0.95)
                } else if rng.gen_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let pm = product_measures(&ProbSequence::new(probs).unwrap(), horizon).unwrap();
        if let Some(cert) = construct_arbitrage(&p, &schedule, &pm, &t).unwrap() {
            if cert.min_gain >= 0.0 && cert.is_arbitrage() {
                part_a += 1;
            }
        }
    }
    let mut part_b = 0;
    let mut cases_b = 0;
    for _ in 0..50 {
        let p = to_f64(&admissible(rng));
        let horizon = rng.gen_range(1..=4);
        for schedule in schedules_up_to(horizon) {
            cases_b += 1;
            let probs: Vec<f64> = (0..horizon).map(|_| rng.gen_range(0.05..0.95)).collect();
            let pm = product_measures(&ProbSequence::new(probs).unwrap(), horizon).unwrap();
            if detect_arbitrage_small(&p, &schedule, &pm, &t).unwrap().is_none() {
                part_b += 1;
            }
        }
    }
    Outcome::new(
        part_a == 50 && part_b == cases_b,
        format!("(a) {part_a}/50 arbitrage certificates with G >= 0 and a positive-probability gain, T=6; (b) {part_b}/{cases_b} searches inside the band found none, T<=4"),
    )
}

fn criterion_5(rng: &mut StdRng) -> Outcome {
    let t = Tolerances::default();
    // Hand instance: T=1, s0=1, mu=0, sigma=1/2, r=0, call K=1.
    let hand = {
        let p = MarketParams::new(q(0, 1), q(1, 2), q(0, 1), q(1, 1)).unwrap();
        let schedule = FiltrationSchedule::classical(1).unwrap();
        let sol = solve_classical(&p, 1).unwrap();
        let stock = stock_process(&p, &schedule).unwrap();
        let claim = Claim::on_stock(ClaimKind::Call { strike: q(1, 1) }, &stock).unwrap();
        let r = replicate(&claim, &sol, &schedule, &t).unwrap();
        *r.values.get(0).at(0) == q(1, 4) && *r.strategy.phi(1).at(0) == q(1, 2) && *r.strategy.psi(1).at(0) == q(-1, 4)
    };
    let mut runs = 0;
    let mut bad = Vec::new();
    let mut float_worst = 0.0f64;
    for horizon in 1..=8 {
        for schedule in schedules_up_to(horizon) {
            let p = admissible(rng);
            let sol = solve_schedule(&p, &schedule, &FreeValuePolicy::Half).unwrap();
            let pf = to_f64(&p);
            let solf = solve_schedule(&pf, &schedule, &FreeValuePolicy::Half).unwrap();
            let stock = stock_process(&p, &schedule).unwrap();
            let stockf = stock_process(&pf, &schedule).unwrap();
            let strike = p.s0.clone() * q(rng.gen_range(80..=120), 100);
            let kinds = [
                ClaimKind::Call { strike: strike.clone() },
                ClaimKind::Put { strike: strike.clone() },
                ClaimKind::Digital { strike: strike.clone() },
            ];
            for kind in kinds {
                runs += 1;
                let claim = Claim::on_stock(kind.clone(), &stock).unwrap();
                let result = replicate(&claim, &sol, &schedule, &t).unwrap();
                let report = verify_replication(&result, &claim, &sol, &schedule, &t).unwrap();
                if !(report.terminal_error.is_zero() && report.price_error.is_zero() && report.self_financing.holds) {
                    bad.push(format!("exact T={horizon} {:?} {kind:?}", schedule.step_kinds()));
                }
                let kindf = match &kind {
                    ClaimKind::Call { strike } => ClaimKind::Call { strike: strike.to_f64() },
                    ClaimKind::Put { strike } => ClaimKind::Put { strike: strike.to_f64() },
                    ClaimKind::Digital { strike } => ClaimKind::Digital { strike: strike.to_f64() },
                    ClaimKind::Custom => unreachable!(),
                };
                let claimf = Claim::on_stock(kindf, &stockf).unwrap();
                let resultf = replicate(&claimf, &solf, &schedule, &t).unwrap();
                let reportf = verify_replication(&resultf, &claimf, &solf, &schedule, &t).unwrap();
                float_worst = float_worst.max(reportf.price_error).max(reportf.terminal_error);
                if !reportf.holds() {
                    bad.push(format!("f64 T={horizon} {:?}", schedule.step_kinds()));
                }
            }
        }
    }
    Outcome::new(
        hand && bad.is_empty() && float_worst <= 1e-9,
        format!(
            "hand instance V_0=1/4, phi_1=1/2, psi_1=-1/4: {}; {runs} call/put/digital replications, T<=8, classical and drop-k: exact errors zero {}, f64 max error {float_worst:.2e}",
            ok(hand),
            ok(bad.is_empty())
        ),
    )
}

fn random_kernel(rng: &mut StdRng, horizon: usize) -> Vec<FiniteMeasure<Q>> {
    let ups: Vec<Vec<Q>> = (1..=horizon).map(|k| (0..atom_count(k - 1)).map(|_| q(rng.gen_range(0..=10), 10)).collect()).collect();
    binfilt::riskneutral::TransitionKernel::from_up(horizon, |k, parent| ups[k - 1][parent].clone()).unwrap().measures()
}

fn criterion_6(rng: &mut StdRng) -> Outcome {
    let t = Tolerances::default();
    let (mut agree, mut consistent) = (0, 0);
    for i in 0..200 {
        let horizon = rng.gen_range(1..=6);
        let mut measures = random_kernel(rng, horizon);
        match i % 4 {
            0 => {}
            1 => {
                // Move mass across parents at one level.
                let n = rng.gen_range(1..=horizon);
                let mut w = measures[n].weights().to_vec();
                let half = atom_count(n) / 2;
                let (a, b) = (rng.gen_range(0..half), half + rng.gen_range(0..half));
                let moved = w[a].clone() / q(2, 1) + q(1, 64);
                let moved = moved.min(w[a].clone());
                w[a] = w[a].clone() - moved.clone();
                w[b] = w[b].clone() + moved;
                measures[n] = FiniteMeasure::new(n, w, &t).unwrap();
            }
            2 => {
                // Swap siblings at the last level: still a valid sequence.
                let mut w = measures[horizon].weights().to_vec();
                let a = rng.gen_range(0..atom_count(horizon - 1));
                w.swap(2 * a, 2 * a + 1);
                measures[horizon] = FiniteMeasure::new(horizon, w, &t).unwrap();
            }
            _ => {
                // Independent random measures per level.
                for (n, m) in measures.iter_mut().enumerate().skip(1) {
                    let raw: Vec<i64> = (0..atom_count(n)).map(|_| rng.gen_range(0..=5)).collect();
                    let total: i64 = raw.iter().sum::<i64>().max(1);
                    let mut w: Vec<Q> = raw.iter().map(|&x| q(x, total)).collect();
                    if raw.iter().all(|&x| x == 0) {
                        w[0] = q(1, 1);
                    }
                    *m = FiniteMeasure::new(n, w, &t).unwrap();
                }
            }
        }
        let one = marginals_consistent(&measures, &t);
        let two = truncation_measure_preserving(&measures, &t).unwrap();
        let three = extract_kernel(&measures, &t).is_some();
        if one == two && two == three {
            agree += 1;
        }
        if one {
            consistent += 1;
        }
    }
    Outcome::new(
        agree == 200 && consistent > 0 && consistent < 200,
        format!(
            "200 measure sequences, T<=6 ({consistent} consistent, {} not): three characterisations agree on {agree}",
            200 - consistent
        ),
    )
}

fn criterion_7(rng: &mut StdRng) -> Outcome {
    let t = Tolerances::default();
    let horizon = 6;
    let mut missing = Vec::new();
    let mut runs = 0;
    for k in 1..horizon {
        for _ in 0..5 {
            runs += 1;
            let p = admissible(rng);
            let sol = solve_drop_k(&p, horizon, k, &FreeValuePolicy::Half).unwrap();
            let pm = physical(rng, horizon, &[]);
            let report = sol.equivalence_report(&pm, &t).unwrap();
            for level in &report[k..] {
                if level.p_only.is_empty() {
                    missing.push((k, level.level));
                }
            }
        }
    }
    Outcome::new(
        missing.is_empty(),
        format!("{runs} drop-k solutions, T=6, p_k > 0: every level >= k has an atom with P > 0 and Q = 0; gaps: {missing:?}"),
    )
}

fn criterion_8(rng: &mut StdRng) -> Outcome {
    let t = Tolerances::default();
    let mut pairs = 0;
    let mut bad = Vec::new();
    for horizon in 2..=8 {
        let mut schedules = schedules_up_to(horizon);
        if horizon >= 4 {
            schedules.push(FiltrationSchedule::elderly(horizon, 1, 2).unwrap());
        }
        for schedule in schedules {
            let params = admissible(rng);
            let drops: Vec<usize> = drop_steps(&schedule);
            let families = [
                ("P", physical(rng, horizon, &[])),
                ("P, p=0 at drops", physical(rng, horizon, &drops)),
                ("Q", solve_schedule(&params, &schedule, &FreeValuePolicy::Half).unwrap().measures),
            ];
            for (label, measures) in &families {
                for n in 1..=horizon {
                    let v = random_variable(rng, n);
                    let mut stepwise = v.clone();
                    for m in (0..n).rev() {
                        stepwise = cond_exp(&stepwise, schedule.map(m), &measures[m], &measures[m + 1], &t).unwrap();
                        let direct = cond_exp(&v, &schedule.compose(m, n).unwrap(), &measures[m], &measures[n], &t).unwrap();
                        pairs += 1;
                        let differs = (0..atom_count(m)).any(|a| !measures[m].is_null_atom(a, &t) && direct.at(a) != stepwise.at(a));
                        if differs {
                            bad.push(format!("{label} T={horizon} f_({m},{n})"));
                        }
                    }
                }
            }
        }
    }
    Outcome::new(bad.is_empty(), format!("{pairs} composite arrows, T<=8, exact, under P and solved Q: mismatches {bad:?}"))
}

fn main() -> ExitCode {
    let mut rng = StdRng::seed_from_u64(0x5eed_b1f1);
    type Check = fn(&mut StdRng) -> Outcome;
    let criteria: [(u8, &str, Check, Option<Duration>); 8] = [
        (1, "classical risk-neutral closed form", criterion_1, Some(Duration::from_secs(5))),
        (2, "drop-k risk-neutral solution", criterion_2, Some(Duration::from_secs(5))),
        (3, "conditional expectation defining identity", criterion_3, None),
        (4, "arbitrage dichotomy", criterion_4, None),
        (5, "replication", criterion_5, None),
        (6, "three characterisations of consistent measures", criterion_6, None),
        (7, "non-equivalence after a drop", criterion_7, None),
        (8, "functoriality of conditional expectation", criterion_8, None),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (id, name, check, limit) in criteria {
        let began = Instant::now();
        let outcome = check(&mut rng);
        let elapsed = began.elapsed();
        let in_time = limit.is_none_or(|l| elapsed < l);
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit.map(|l| format!(" (limit {:.0}s)", l.as_secs_f64())).unwrap_or_default();
        println!(
            "{} criterion {id}: {name}: {} [{:.2}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    let total = start.elapsed();
    println!("acceptance: {} of 8 criteria passed in {:.2}s", 8 - failed, total.as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
