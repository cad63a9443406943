//! Seeded random instances for large-sample checks of `binfilt`.
//!
//! Exact parameters sit on a whole-percent grid, which keeps the rational
//! numbers small enough for exhaustive sweeps at `T = 10`.

use binfilt::*;
use rand::Rng;

fn q(n: i64, d: i64) -> Exact {
    Exact::from_ratio(n, d)
}

/// Admissible parameters with `|μ - r| < σ`.
pub fn admissible(rng: &mut impl Rng) -> MarketParams<Exact> {
    let sigma = q(rng.gen_range(2..=50), 100);
    let mu = q(rng.gen_range(-30..=40), 100);
    let t = q(rng.gen_range(-95..=95), 100);
    let r = mu.clone() + sigma.clone() * t;
    MarketParams::new(mu, sigma, r, q(rng.gen_range(50..=200), 100)).expect("grid keeps parameters valid")
}

/// Parameters with `|μ - r| >= σ`.
pub fn outside_band(rng: &mut impl Rng) -> MarketParams<f64> {
    loop {
        let sigma = rng.gen_range(0.02..0.5);
        let mu = rng.gen_range(-0.3..0.6);
        let t: f64 = rng.gen_range(1.0..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        if let Ok(p) = MarketParams::new(mu, sigma, mu + sigma * t, rng.gen_range(0.5..2.0)) {
            return p;
        }
    }
}

/// The classical schedule and every drop-k schedule of one horizon.
pub fn schedules_up_to(horizon: usize) -> Vec<FiltrationSchedule> {
    let mut out = vec![FiltrationSchedule::classical(horizon).unwrap()];
    out.extend((1..horizon).map(|k| FiltrationSchedule::drop_k(horizon, k).unwrap()));
    out
}

/// Indices `n` of the steps `f_n` that forget a digit.
pub fn drop_steps(schedule: &FiltrationSchedule) -> Vec<usize> {
    schedule.step_kinds().iter().enumerate().filter(|(_, k)| **k == MapKind::Drop).map(|(n, _)| n).collect()
}

/// Product measures with `p_i` in tenths strictly inside (0, 1), except
/// `p_i = 0` for the listed `i`.
pub fn physical(rng: &mut impl Rng, horizon: usize, zero_at: &[usize]) -> Vec<FiniteMeasure<Exact>> {
    let p: Vec<Exact> = (1..=horizon).map(|i| if zero_at.contains(&i) { q(0, 1) } else { q(rng.gen_range(1..=9), 10) }).collect();
    product_measures(&ProbSequence::new(p).unwrap(), horizon).unwrap()
}

/// Small fractions with denominators up to 7.
pub fn random_variable(rng: &mut impl Rng, level: usize) -> RandomVariable<Exact> {
    RandomVariable::new(level, (0..atom_count(level)).map(|_| q(rng.gen_range(-50..=50), rng.gen_range(1..=7))).collect()).unwrap()
}
