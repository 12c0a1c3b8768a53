//! Guessing with a giving-up policy.
//!
//! The guesser asks "is `X^n` the rank-`k` sequence given `Y^n`?" for
//! `k = 1, 2, ...`, and before each question may abort, paying the error cost
//! `c_e`. The optimal policy mirrors the optimal code: never give up on ranks
//! up to `κ`, give up on rank `κ + 1` with probability `1 - γ / P(rank κ+1)`,
//! and always give up beyond.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use serde::Serialize;

use crate::coding::{build_code, draw_outcome, tabulate, BlockAnalysis, CodePlan, CodeRunner, Criterion};
use crate::error::{Error, Result};
use crate::lift::{Budget, RankClass};
use crate::mass::Mass;
use crate::source::JointSource;

/// Rank intervals shorter than this are summed term by term.
const DIRECT_LOG_SUM: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct GivingUpStrategy<P: Mass> {
    /// Guess order and thresholds; rank `k` is guessed at step `k`.
    pub plan: CodePlan<P>,
    pub error_cost: f64,
}

impl<P: Mass> GivingUpStrategy<P> {
    /// `π(k | y^n)` for the side-information type at `type_index`.
    pub fn give_up(&self, type_index: usize, k: &BigUint) -> P {
        let th = &self.plan.thresholds[type_index];
        if k <= &th.keep {
            P::zero()
        } else if *k == &th.keep + BigUint::one() {
            P::one().sub(&th.boundary_keep).clamp_unit()
        } else {
            P::one()
        }
    }

    pub fn error_cost_bits(&self) -> f64 {
        self.error_cost.log2()
    }
}

fn check_cost(c_e: f64) -> Result<()> {
    if !(c_e.is_finite() && c_e > 0.0) {
        return Err(Error::validation("cost", format!("error cost must be positive, got {c_e}")));
    }
    if c_e.fract() == 0.0 {
        return Err(Error::validation("cost", format!("error cost must not be an integer, got {c_e}")));
    }
    Ok(())
}

pub fn build_strategy<P: Mass>(
    src: &JointSource<P>,
    n: u32,
    eps: &P,
    criterion: Criterion,
    c_e: f64,
    budget: Budget,
) -> Result<GivingUpStrategy<P>> {
    check_cost(c_e)?;
    Ok(GivingUpStrategy {
        plan: build_code(src, n, eps, criterion, budget)?,
        error_cost: c_e,
    })
}

/// `Σ_{r ∈ [a, a + c)} log2 r`.
pub fn log2_sum(a: &BigUint, c: &BigUint) -> f64 {
    let mut total = 0.0;
    let mut a = a.clone();
    let mut c = c.clone();
    // the Euler-Maclaurin tail below needs a large starting point
    while c > BigUint::from(0u32) && a < BigUint::from(DIRECT_LOG_SUM) {
        total += a.to_f64().expect("small rank").log2();
        a += 1u32;
        c -= 1u32;
    }
    if c.bits() == 0 {
        return total;
    }
    if c < BigUint::from(DIRECT_LOG_SUM) {
        let a0 = a.to_f64().unwrap_or(f64::INFINITY);
        let c0 = c.to_u64().expect("short run");
        return total + (0..c0).map(|i| (a0 + i as f64).log2()).sum::<f64>();
    }
    let af = a.to_f64().unwrap_or(f64::INFINITY);
    let cf = c.to_f64().unwrap_or(f64::INFINITY);
    let b = af + cf;
    let ln_ratio = (cf / af).ln_1p();
    let integral = cf * b.ln() + af * ln_ratio - cf;
    let correction = -0.5 * ln_ratio + (1.0 / b - 1.0 / af) / 12.0 - (2.0 / b.powi(3) - 2.0 / af.powi(3)) / 720.0;
    total + (integral + correction) / std::f64::consts::LN_2
}

/// Exact `E[log2 G]` and abort probability of a strategy.
pub fn evaluate_strategy<P: Mass>(strategy: &GivingUpStrategy<P>) -> (f64, P) {
    let plan = &strategy.plan;
    let mut log_guess = 0.0;
    let mut success = P::zero();
    for ((yt, table), th) in plan.y_types.iter().zip(&plan.tables).zip(&plan.thresholds) {
        let w = yt.mass();
        let wf = w.to_f64();
        let boundary = &th.keep + BigUint::one();
        let rs = &table.spectrum;
        let runs: Vec<(&RankClass<P>, BigUint)> = rs
            .classes
            .iter()
            .take_while(|c| c.start <= th.keep)
            .map(|c| {
                let end = if c.end() <= boundary { c.end() } else { boundary.clone() };
                (c, &end - &c.start)
            })
            .collect();
        for (c, kept) in &runs {
            log_guess += wf * rs.likelihood_of(c).to_f64() * log2_sum(&c.start, kept);
        }
        success = success.add(&w.mul(&rs.mass_of_runs(runs.into_iter())));
        if let Some(k) = rs.class_of_rank(&boundary) {
            let m = w.mul(&rs.likelihood_of(&rs.classes[k])).mul(&th.boundary_keep);
            log_guess += m.to_f64() * crate::mass::log2_biguint(&boundary);
            success = success.add(&m);
        }
    }
    let error = P::one().sub(&success).clamp_unit();
    (log_guess + error.to_f64() * strategy.error_cost_bits(), error)
}

/// Error probability of the strategy conditional on every side-information type.
pub fn conditional_abort_probabilities<P: Mass>(strategy: &GivingUpStrategy<P>) -> Vec<P> {
    let plan = &strategy.plan;
    plan.tables
        .iter()
        .zip(&plan.thresholds)
        .map(|(table, th)| {
            let boundary = &th.keep + BigUint::one();
            let rs = &table.spectrum;
            let mut success = rs.mass_of_runs(rs.classes.iter().take_while(|c| c.start <= th.keep).map(|c| {
                let end = if c.end() <= boundary { c.end() } else { boundary.clone() };
                (c, &end - &c.start)
            }));
            if let Some(k) = rs.class_of_rank(&boundary) {
                success = success.add(&rs.likelihood_of(&rs.classes[k]).mul(&th.boundary_keep));
            }
            P::one().sub(&success).clamp_unit()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bracket {
    pub achieved: f64,
    pub lstar: f64,
    /// `1 + |log2 c_e|`.
    pub bound: f64,
    pub holds: bool,
}

/// `lstar - |log2 c_e| <= E[log2 G] <= lstar + 1 + |log2 c_e|`.
pub fn bracket_check<P: Mass>(
    src: &JointSource<P>,
    n: u32,
    eps: &P,
    criterion: Criterion,
    c_e: f64,
    budget: Budget,
) -> Result<Bracket> {
    let strategy = build_strategy(src, n, eps, criterion, c_e, budget)?;
    let (achieved, _) = evaluate_strategy(&strategy);
    let lstar = BlockAnalysis::new(src, n, budget)?.lstar(eps, criterion)?.to_f64();
    let cost = c_e.log2().abs();
    let slack = 1e-9 * (1.0 + lstar.abs());
    Ok(Bracket {
        achieved,
        lstar,
        bound: 1.0 + cost,
        holds: lstar - cost - slack <= achieved && achieved <= lstar + 1.0 + cost + slack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuessSimulation {
    pub trials: u64,
    pub seed: u64,
    pub mean_log_guess: f64,
    pub log_guess_stderr: f64,
    pub error_rate: f64,
    pub error_stderr: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct GuessTally {
    log_sum: f64,
    log_sq_sum: f64,
    failures: u64,
}

/// Monte Carlo run of the guessing loop: before step `k` an abort is drawn
/// with probability `π(k | y^n)`, then rank `k` is tested. Steps where `π` is
/// 0 or 1 need no draw, so each trial uses one uniform for the boundary step.
pub fn simulate_guessing<P: Mass>(
    strategy: &GivingUpStrategy<P>,
    src: &JointSource<P>,
    trials: u64,
    seed: u64,
) -> Result<GuessSimulation> {
    if trials == 0 {
        return Err(Error::validation("trials", "must be positive"));
    }
    let runner = CodeRunner::new(&strategy.plan, src)?;
    let sampler = crate::sim::JointSampler::new(src);
    let n = strategy.plan.n as usize;
    let table = tabulate(&runner, sampler.pairs(), n)?;
    let cost = strategy.error_cost_bits();
    let tallies: Vec<Result<GuessTally>> = crate::sim::run_chunks(trials, seed, |rng, count| {
        let mut tally = GuessTally::default();
        let mut xs = vec![0; n];
        let mut ys = vec![0; n];
        for _ in 0..count {
            let o = draw_outcome(rng, &sampler, &table, &runner, &mut xs, &mut ys)?;
            let v = if rng.gen::<f64>() < o.keep {
                o.log_rank
            } else {
                tally.failures += 1;
                cost
            };
            tally.log_sum += v;
            tally.log_sq_sum += v * v;
        }
        Ok(tally)
    });
    let mut total = GuessTally::default();
    for t in tallies {
        let t = t?;
        total.log_sum += t.log_sum;
        total.log_sq_sum += t.log_sq_sum;
        total.failures += t.failures;
    }
    let (mean_log_guess, log_guess_stderr) = crate::sim::mean_and_stderr(total.log_sum, total.log_sq_sum, trials);
    let f = total.failures as f64;
    let (error_rate, error_stderr) = crate::sim::mean_and_stderr(f, f, trials);
    Ok(GuessSimulation {
        trials,
        seed,
        mean_log_guess,
        log_guess_stderr,
        error_rate,
        error_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::mass::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn integer_costs_are_rejected() {
        let src = fixtures::appendix_i();
        for c in [2.0, 1.0, 0.0, -1.5, f64::NAN] {
            assert!(build_strategy(&src, 1, &q(1, 6), Criterion::Avg, c, Budget::default()).is_err());
        }
    }

    #[test]
    fn three_point_strategy() {
        let src = fixtures::appendix_i();
        let s = build_strategy(&src, 1, &q(1, 6), Criterion::Avg, 2.5, Budget::default()).unwrap();
        let pi: Vec<Rational> = (1u32..=3).map(|k| s.give_up(0, &k.into())).collect();
        assert_eq!(pi, [q(0, 1), q(0, 1), q(1, 1)]);
        let (v, e) = evaluate_strategy(&s);
        let hand = 1.0 / 3.0 + 2.5f64.log2() / 6.0;
        assert!((v - hand).abs() < 1e-12);
        assert_eq!(e, q(1, 6));

        let s0 = build_strategy(&src, 1, &q(0, 1), Criterion::Avg, 2.5, Budget::default()).unwrap();
        let (v0, e0) = evaluate_strategy(&s0);
        assert!((v0 - (1.0 / 3.0 + 3f64.log2() / 6.0)).abs() < 1e-12);
        assert_eq!(e0, q(0, 1));
    }

    #[test]
    fn point_mass_guesses_once() {
        let src = fixtures::point_mass();
        let b = bracket_check(&src, 3, &q(0, 1), Criterion::Max, 1.5, Budget::default()).unwrap();
        assert_eq!((b.achieved, b.lstar), (0.0, 0.0));
        assert!(b.holds);
    }

    #[test]
    fn max_strategy_errs_eps_per_type() {
        let src = fixtures::source_b();
        let s = build_strategy(&src, 2, &q(1, 4), Criterion::Max, 10.5, Budget::default()).unwrap();
        for e in conditional_abort_probabilities(&s) {
            assert_eq!(e, q(1, 4));
        }
        let avg = build_strategy(&src, 2, &q(1, 4), Criterion::Avg, 10.5, Budget::default()).unwrap();
        assert_eq!(evaluate_strategy(&avg).1, q(1, 4));
    }

    #[test]
    fn log_sum_tail_matches_direct_sum() {
        for (a, c) in [(1u64, 5_000_000u64), (3_000_000, 2_000_000), (1 << 21, 1 << 21)] {
            let direct: f64 = (a..a + c).map(|r| (r as f64).log2()).sum();
            let fast = log2_sum(&a.into(), &c.into());
            assert!((fast - direct).abs() < 1e-9 * direct, "{a} {c}: {fast} vs {direct}");
        }
        assert_eq!(log2_sum(&5u32.into(), &0u32.into()), 0.0);
    }

    #[test]
    fn giving_up_at_the_first_step_always_fails() {
        let src = fixtures::independent_binary();
        let mut s = build_strategy(&src, 1, &q(1, 2), Criterion::Max, 2.5, Budget::default()).unwrap();
        for th in &mut s.plan.thresholds {
            th.keep = BigUint::from(0u32);
            th.boundary_keep = q(0, 1);
        }
        assert_eq!(s.give_up(0, &BigUint::one()), q(1, 1));
        let sim = simulate_guessing(&s, &src, 1000, 4).unwrap();
        assert_eq!(sim.error_rate, 1.0);
        assert!((sim.mean_log_guess - 2.5f64.log2()).abs() < 1e-12);
        assert!((evaluate_strategy(&s).0 - 2.5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn fixed_seed_reruns_are_identical() {
        let src = fixtures::appendix_i();
        let s = build_strategy(&src, 1, &q(1, 6), Criterion::Avg, 2.5, Budget::default()).unwrap();
        assert_eq!(simulate_guessing(&s, &src, 10, 1).unwrap(), simulate_guessing(&s, &src, 10, 1).unwrap());
    }

    #[test]
    fn simulation_tracks_exact_value_at_n_three() {
        let src = fixtures::binary_pair();
        let s = build_strategy(&src, 3, &q(1, 10), Criterion::Avg, 1.5, Budget::default()).unwrap();
        let (v, e) = evaluate_strategy(&s);
        let sim = simulate_guessing(&s, &src, 200_000, 9).unwrap();
        assert!((sim.mean_log_guess - v).abs() < 4.0 * sim.log_guess_stderr);
        assert!((sim.error_rate - Mass::to_f64(&e)).abs() < 4.0 * sim.error_stderr);
    }
}
