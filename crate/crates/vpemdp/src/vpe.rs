//! The variance-penalized expectation (VPE) solver: saturation-point
//! computation, weight-unfolded enumeration of deterministic weight-based
//! schedulers, threshold decisions and lambda sweeps.
//!
//! The objective is `E - lambda * V` of the accumulated weight (or
//! `-E - lambda * V` when minimizing the expectation). An optimal scheduler
//! may track the accumulated weight only up to a saturation point `K`: once
//! that much weight has been accumulated it must switch to the memoryless
//! scheduler that minimizes the variance among expectation-minimal
//! schedulers. `K` is computable but often astronomically large on stochastic
//! models, so the enumeration bound can be overridden; results below `K` are
//! reported as certified lower bounds, never silently as exact optima.

use std::collections::BTreeMap;
use std::sync::Mutex;

use num::bigint::BigInt;
use num::{Integer, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::expectation::{solve_expectation, Direction, SolveError};
use crate::model::{find_end_components, Mdp};
use crate::numeric::{rational_int, Rational};
use crate::scheduler::{
    moments_from_distribution, terminal_distribution, ActionDist, MemorylessScheduler,
    MomentPair, SchedulerError, WeightBasedScheduler,
};
use crate::variance::min_variance_among_optimal;

#[derive(Debug, Error)]
pub enum VpeError {
    #[error("lambda must be positive")]
    NonPositiveLambda,
    #[error("model has an end component; VPE analysis requires an EC-free model")]
    EndComponentPresent,
    #[error("model has a negative weight; VPE analysis requires weights in N")]
    NegativeWeight,
    #[error("enumeration over {decision_pairs} decision pairs needs {assignments} assignments, above the budget of {budget}; pass --bound to cap the scheduler class")]
    BoundTooLarge {
        decision_pairs: usize,
        assignments: String,
        budget: u64,
    },
    #[error("scheduler tail differs from the variance-minimal memoryless scheduler")]
    TailMismatch,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

/// The constants behind the saturation point, all exact.
#[derive(Debug, Clone)]
pub struct SaturationConstants {
    /// State count `n`.
    pub n: usize,
    /// Largest weight `W`.
    pub max_weight: u64,
    /// Smallest positive transition probability.
    pub eps: Rational,
    /// Smallest expectation gap of a non-optimal action in the minimizing
    /// direction; absent when every action is expectation-minimal.
    pub delta: Option<Rational>,
    /// Upper bound on the maximal expected accumulated weight from any state.
    pub u1: Rational,
    /// Upper bound on the maximal expected squared accumulated weight.
    pub u2: Rational,
    /// `1 / eps^n`: runs of this many `n`-step blocks halve the survival mass.
    pub b_half: Rational,
    /// `b_half * n * W`: weight accumulated beyond this has probability <= 1/2.
    pub big_b_half: Rational,
    /// The saturation point, an exact natural number (possibly huge).
    pub k: BigInt,
    /// True when `delta` is absent and the bound degenerates to `B_1/2`.
    pub degenerate: bool,
}

/// The reachable fragment of the product of the model with weight levels
/// `0..bound + W - 1`. Pairs `(goal, w)` and `(s, w >= bound)` are traps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnfoldedMdp {
    pub bound: u64,
    /// Reachable pairs `(state, accumulated weight)`, traps included.
    pub pairs: std::collections::BTreeSet<(usize, u64)>,
}

impl UnfoldedMdp {
    pub fn is_trap(&self, m: &Mdp, pair: (usize, u64)) -> bool {
        pair.0 == m.goal() || pair.1 >= self.bound
    }

    /// Reachable non-trap pairs with more than one enabled action, sorted by
    /// (weight, state order) — the enumeration order of [`maximize_vpe`].
    pub fn decision_pairs(&self, m: &Mdp) -> Vec<(usize, u64)> {
        let mut pairs: Vec<(usize, u64)> = self
            .pairs
            .iter()
            .copied()
            .filter(|&(s, w)| !self.is_trap(m, (s, w)) && m.actions(s).len() > 1)
            .collect();
        pairs.sort_by_key(|&(s, w)| (w, s));
        pairs
    }
}

/// A VPE value with the scheduler and moments behind it.
#[derive(Debug, Clone)]
pub struct VpeReport {
    pub lambda: Rational,
    /// Orientation of the expectation in the objective.
    pub direction: Direction,
    pub bound_used: u64,
    /// True iff the scheduler class provably contains an optimal scheduler
    /// (`bound_used >= K`, or the degenerate all-minimal case); otherwise the
    /// value is a certified lower bound on the optimum.
    pub exact: bool,
    pub value: Rational,
    pub scheduler: WeightBasedScheduler,
    pub moments: MomentPair,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdOutcome {
    Holds,
    Fails,
    /// Undecided: the bound was below the saturation point; carries the best
    /// value found (a certified lower bound below the queried threshold).
    LowerBoundOnly(Rational),
}

/// Options for [`maximize_vpe`], [`threshold`] and [`frontier`].
#[derive(Debug, Clone)]
pub struct VpeOptions {
    /// Enumeration bound on the tracked weight; defaults to the saturation
    /// point `K` (refused when above the assignment budget).
    pub bound: Option<u64>,
    pub direction: Direction,
    /// Worker-thread cap; the result is identical for any value.
    pub jobs: usize,
    /// Refuse enumerations needing more than this many assignments.
    pub max_assignments: u64,
}

impl Default for VpeOptions {
    fn default() -> Self {
        VpeOptions {
            bound: None,
            direction: Direction::Maximize,
            jobs: 1,
            max_assignments: 1 << 20,
        }
    }
}

fn check_model(m: &Mdp, lambda: &Rational) -> Result<(), VpeError> {
    if !lambda.is_positive() {
        return Err(VpeError::NonPositiveLambda);
    }
    if m.has_negative_weight() {
        return Err(VpeError::NegativeWeight);
    }
    if !find_end_components(m).is_empty() {
        return Err(VpeError::EndComponentPresent);
    }
    Ok(())
}

fn ceil_to_int(r: &Rational) -> BigInt {
    if r.is_integer() {
        r.numer().clone()
    } else {
        r.numer().div_floor(r.denom()) + 1
    }
}

/// Computes the saturation constants for the model and penalty `lambda`.
pub fn saturation_point(m: &Mdp, lambda: &Rational) -> Result<SaturationConstants, VpeError> {
    check_model(m, lambda)?;
    let n = m.num_states();
    let max_weight = m.max_weight() as u64;
    let eps = m.min_transition_prob();

    let eps_n = num::pow::pow(eps.clone(), n);
    let b_half = eps_n.recip();
    let nw = rational_int(n as i64) * rational_int(max_weight as i64);
    let big_b_half = &b_half * &nw;
    let u2 = rational_int(2) * &nw * &nw * (&b_half * &b_half);

    let max_sol = solve_expectation(m, Direction::Maximize)?;
    let u1 = max_sol
        .values
        .iter()
        .max()
        .expect("model has states")
        .clone();

    let min_sol = solve_expectation(m, Direction::Minimize)?;
    let mut delta: Option<Rational> = None;
    for s in 0..n {
        if s == m.goal() {
            continue;
        }
        for a in 0..m.actions(s).len() {
            if min_sol.optimal_actions[s].contains(&a) {
                continue;
            }
            let act = &m.actions(s)[a];
            let q = rational_int(act.weight)
                + act
                    .successors
                    .iter()
                    .map(|(t, p)| p * &min_sol.values[*t])
                    .sum::<Rational>();
            let gap = q - &min_sol.values[s];
            debug_assert!(gap.is_positive());
            delta = Some(match delta {
                None => gap,
                Some(d) => d.min(gap),
            });
        }
    }

    let (k, degenerate) = match &delta {
        None => (ceil_to_int(&big_b_half).max(BigInt::zero()), true),
        Some(d) => {
            let x = (&u1 / lambda + &u2 + rational_int(2) * &u1 + &u1 * &u1 / rational_int(2)) / d
                + Rational::one();
            (ceil_to_int(&big_b_half).max(ceil_to_int(&x)), false)
        }
    };

    Ok(SaturationConstants {
        n,
        max_weight,
        eps,
        delta,
        u1,
        u2,
        b_half,
        big_b_half,
        k,
        degenerate,
    })
}

/// Materializes the pairs of the weight-unfolded model reachable from
/// `(init, 0)`.
pub fn unfold(m: &Mdp, bound: u64) -> Result<UnfoldedMdp, VpeError> {
    assert!(bound >= 1, "unfold bound must be at least 1");
    if m.has_negative_weight() {
        return Err(VpeError::NegativeWeight);
    }
    if !find_end_components(m).is_empty() {
        return Err(VpeError::EndComponentPresent);
    }
    let mut pairs = std::collections::BTreeSet::new();
    let mut stack = vec![(m.init(), 0u64)];
    pairs.insert((m.init(), 0));
    while let Some((s, w)) = stack.pop() {
        if s == m.goal() || w >= bound {
            continue;
        }
        for act in m.actions(s) {
            let next = w + act.weight as u64;
            for (t, _) in &act.successors {
                if pairs.insert((*t, next)) {
                    stack.push((*t, next));
                }
            }
        }
    }
    Ok(UnfoldedMdp { bound, pairs })
}

/// Everything fixed across the evaluation of many candidate schedulers.
struct VpeContext {
    lambda: Rational,
    tail: MemorylessScheduler,
    tail_e: BTreeMap<usize, Rational>,
    tail_q: BTreeMap<usize, Rational>,
    constants: SaturationConstants,
}

impl VpeContext {
    fn build(m: &Mdp, lambda: &Rational) -> Result<VpeContext, VpeError> {
        let constants = saturation_point(m, lambda)?;
        let varmin = min_variance_among_optimal(m, Direction::Minimize)?;
        let tail = varmin.scheduler.to_scheduler();
        let tail_e = varmin
            .expectation
            .iter()
            .enumerate()
            .map(|(s, e)| (s, e.clone()))
            .collect();
        let tail_q = varmin
            .second_moment
            .iter()
            .enumerate()
            .map(|(s, q)| (s, q.clone()))
            .collect();
        Ok(VpeContext {
            lambda: lambda.clone(),
            tail,
            tail_e,
            tail_q,
            constants,
        })
    }

    fn objective(&self, direction: Direction, moments: &MomentPair) -> Rational {
        let e = match direction {
            Direction::Maximize => moments.expectation.clone(),
            Direction::Minimize => -moments.expectation.clone(),
        };
        e - &self.lambda * &moments.variance
    }

    fn moments_of(
        &self,
        m: &Mdp,
        sched: &WeightBasedScheduler,
    ) -> Result<MomentPair, SchedulerError> {
        let dist = terminal_distribution(m, sched)?;
        moments_from_distribution(&dist, &self.tail_e, &self.tail_q)
    }

    fn is_exact(&self, bound: u64) -> bool {
        BigInt::from(bound) >= self.constants.k
    }
}

/// Exact VPE of one deterministic weight-based scheduler whose tail is the
/// variance-minimal memoryless scheduler.
pub fn vpe_of_scheduler(
    m: &Mdp,
    lambda: &Rational,
    sched: &WeightBasedScheduler,
) -> Result<VpeReport, VpeError> {
    let ctx = VpeContext::build(m, lambda)?;
    if sched.tail != ctx.tail {
        return Err(VpeError::TailMismatch);
    }
    let moments = ctx.moments_of(m, sched)?;
    let value = ctx.objective(Direction::Maximize, &moments);
    Ok(VpeReport {
        lambda: lambda.clone(),
        direction: Direction::Maximize,
        bound_used: sched.bound,
        exact: ctx.is_exact(sched.bound),
        value,
        scheduler: sched.clone(),
        moments,
    })
}

/// Maximizes the VPE over deterministic weight-based schedulers that switch
/// to the variance-minimal tail at the bound, by exhaustive enumeration over
/// the reachable decision pairs of the unfolded model.
///
/// With `bound >= K` the result is the exact optimum; below, a certified
/// lower bound. The maximum is tie-broken toward the lexicographically least
/// assignment in (weight, state order), so the result is deterministic and
/// identical for any worker count.
pub fn maximize_vpe(m: &Mdp, lambda: &Rational, opts: &VpeOptions) -> Result<VpeReport, VpeError> {
    let ctx = VpeContext::build(m, lambda)?;

    if ctx.constants.degenerate {
        // Every action is expectation-minimal, so every scheduler attains the
        // same expectation and the variance-minimal tail is itself optimal.
        let scheduler = WeightBasedScheduler::from_memoryless(ctx.tail.clone(), 1);
        let moments = ctx.moments_of(m, &scheduler)?;
        let value = ctx.objective(opts.direction, &moments);
        return Ok(VpeReport {
            lambda: lambda.clone(),
            direction: opts.direction,
            bound_used: 0,
            exact: true,
            value,
            scheduler,
            moments,
        });
    }

    let bound = match opts.bound {
        Some(b) => b.max(1),
        None => ctx
            .constants
            .k
            .to_u64()
            .ok_or_else(|| VpeError::BoundTooLarge {
                decision_pairs: usize::MAX,
                assignments: ctx.constants.k.to_string(),
                budget: opts.max_assignments,
            })?,
    };

    let unfolded = unfold(m, bound)?;
    let pairs = unfolded.decision_pairs(m);
    let radices: Vec<u64> = pairs.iter().map(|&(s, _)| m.actions(s).len() as u64).collect();
    let mut total: u128 = 1;
    for &r in &radices {
        total = total.saturating_mul(r as u128);
        if total > opts.max_assignments as u128 {
            let exact = radices.iter().map(|r| BigInt::from(*r)).product::<BigInt>();
            let digits = exact.to_string();
            let assignments = if digits.len() <= 20 {
                digits
            } else {
                format!("about 10^{}", digits.len() - 1)
            };
            return Err(VpeError::BoundTooLarge {
                decision_pairs: pairs.len(),
                assignments,
                budget: opts.max_assignments,
            });
        }
    }
    let total = total as u64;

    // Mixed-radix decoding with the first decision pair as the most
    // significant digit: ascending index order is then lexicographic over
    // assignments in (weight, state order) with actions in file order.
    let decode = |index: u64| -> BTreeMap<(usize, u64), ActionDist> {
        let mut table: BTreeMap<(usize, u64), ActionDist> = BTreeMap::new();
        let mut rest = index;
        for (i, &(s, w)) in pairs.iter().enumerate().rev() {
            let a = (rest % radices[i]) as usize;
            rest /= radices[i];
            table.insert((s, w), vec![(a, Rational::one())]);
        }
        table
    };
    let evaluate = |index: u64| -> Result<(Rational, MomentPair), SchedulerError> {
        let sched = WeightBasedScheduler {
            bound,
            table: decode(index),
            tail: ctx.tail.clone(),
        };
        let dist = terminal_distribution(m, &sched)?;
        let moments = moments_from_distribution(&dist, &ctx.tail_e, &ctx.tail_q)?;
        let value = ctx.objective(opts.direction, &moments);
        Ok((value, moments))
    };

    // Keeping the first candidate on ties (and preferring the smaller index
    // on merge) selects the lexicographically least optimal assignment,
    // independent of how the index range is split over workers.
    let workers = opts.jobs.max(1).min(total.max(1) as usize);
    let best: Mutex<Option<(u64, Rational, MomentPair)>> = Mutex::new(None);
    let errors: Mutex<Option<SchedulerError>> = Mutex::new(None);
    let chunk = total.div_ceil(workers as u64).max(1);
    std::thread::scope(|scope| {
        for w in 0..workers {
            let lo = chunk * w as u64;
            let hi = (lo + chunk).min(total);
            let best = &best;
            let errors = &errors;
            let evaluate = &evaluate;
            scope.spawn(move || {
                let mut local: Option<(u64, Rational, MomentPair)> = None;
                for index in lo..hi {
                    match evaluate(index) {
                        Ok((value, moments)) => {
                            let better = match &local {
                                None => true,
                                Some((_, v, _)) => value > *v,
                            };
                            if better {
                                local = Some((index, value, moments));
                            }
                        }
                        Err(e) => {
                            errors.lock().unwrap().get_or_insert(e);
                            return;
                        }
                    }
                }
                if let Some((index, value, moments)) = local {
                    let mut guard = best.lock().unwrap();
                    let replace = match guard.as_ref() {
                        None => true,
                        Some((i, v, _)) => value > *v || (value == *v && index < *i),
                    };
                    if replace {
                        *guard = Some((index, value, moments));
                    }
                }
            });
        }
    });
    if let Some(e) = errors.into_inner().unwrap() {
        return Err(e.into());
    }
    let (index, value, moments) = best
        .into_inner()
        .unwrap()
        .expect("at least one assignment exists");

    let scheduler = WeightBasedScheduler {
        bound,
        table: decode(index),
        tail: ctx.tail.clone(),
    };
    debug_assert_eq!(
        value,
        ctx.objective(opts.direction, &moments),
        "reported value must match the moments"
    );
    Ok(VpeReport {
        lambda: lambda.clone(),
        direction: opts.direction,
        bound_used: bound,
        exact: ctx.is_exact(bound),
        value,
        scheduler,
        moments,
    })
}

/// Decides `VPE_max >= theta` where possible: `Holds` is always sound (the
/// witness is a concrete scheduler); `Fails` is only reported when the bound
/// reached the saturation point.
pub fn threshold(
    m: &Mdp,
    lambda: &Rational,
    theta: &Rational,
    opts: &VpeOptions,
) -> Result<(ThresholdOutcome, VpeReport), VpeError> {
    let report = maximize_vpe(m, lambda, opts)?;
    let outcome = if report.value >= *theta {
        ThresholdOutcome::Holds
    } else if report.exact {
        ThresholdOutcome::Fails
    } else {
        ThresholdOutcome::LowerBoundOnly(report.value.clone())
    };
    Ok((outcome, report))
}

/// One frontier row per requested lambda, in input order.
pub fn frontier(
    m: &Mdp,
    lambdas: &[Rational],
    opts: &VpeOptions,
) -> Result<Vec<VpeReport>, VpeError> {
    lambdas
        .iter()
        .map(|lambda| maximize_vpe(m, lambda, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ratio;
    use crate::test_util::{fixture, geo_family};

    fn geo() -> Mdp {
        Mdp::parse(&fixture("geo.mdp")).unwrap()
    }

    fn intro() -> Mdp {
        Mdp::parse(&fixture("intro.mdp")).unwrap()
    }

    fn micro() -> Mdp {
        Mdp::parse(&fixture("micro.mdp")).unwrap()
    }

    #[test]
    fn saturation_constants_for_geo() {
        let m = geo();
        let c = saturation_point(&m, &rational_int(1)).unwrap();
        assert_eq!(c.n, 4);
        assert_eq!(c.max_weight, 1);
        assert_eq!(c.eps, ratio(1, 2));
        assert_eq!(c.delta, Some(rational_int(1)));
        assert_eq!(c.u1, rational_int(3));
        assert_eq!(c.b_half, rational_int(16));
        assert_eq!(c.big_b_half, rational_int(64));
        assert_eq!(c.u2, rational_int(8192));
        assert_eq!(c.k, BigInt::from(8207));
        assert!(!c.degenerate);
    }

    #[test]
    fn saturation_constants_for_micro() {
        let m = micro();
        let c = saturation_point(&m, &rational_int(1)).unwrap();
        assert_eq!(c.n, 2);
        assert_eq!(c.max_weight, 1);
        assert_eq!(c.eps, rational_int(1));
        assert_eq!(c.big_b_half, rational_int(2));
        assert_eq!(c.u1, rational_int(1));
        assert_eq!(c.u2, rational_int(8));
        assert_eq!(c.delta, Some(rational_int(1)));
        assert_eq!(c.k, BigInt::from(13));
    }

    #[test]
    fn degenerate_saturation_without_decisions() {
        let doc = "states u goal\ninit u\ngoal goal\ntrans u a 1 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        let c = saturation_point(&m, &rational_int(1)).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.delta, None);
        assert_eq!(c.k, ceil_to_int(&c.big_b_half));
        let report = maximize_vpe(&m, &rational_int(1), &VpeOptions::default()).unwrap();
        assert!(report.exact);
        assert_eq!(report.bound_used, 0);
        assert_eq!(report.value, rational_int(1));
    }

    #[test]
    fn lambda_must_be_positive() {
        assert!(matches!(
            saturation_point(&geo(), &rational_int(0)),
            Err(VpeError::NonPositiveLambda)
        ));
    }

    #[test]
    fn unfold_micro_bound_3() {
        let m = micro();
        let u = m.state_index("u").unwrap();
        let unf = unfold(&m, 3).unwrap();
        assert_eq!(
            unf.pairs,
            std::collections::BTreeSet::from([(u, 0), (m.goal(), 0), (m.goal(), 1)])
        );
        assert_eq!(unf.decision_pairs(&m), vec![(u, 0)]);
    }

    #[test]
    fn unfold_geo_bound_4() {
        let m = geo();
        let unf = unfold(&m, 4).unwrap();
        let s = m.state_index("s").unwrap();
        let c = m.state_index("c").unwrap();
        let decisions = unf.decision_pairs(&m);
        assert_eq!(decisions, vec![(c, 0), (c, 1), (c, 2), (c, 3)]);
        assert!(unf.pairs.contains(&(s, 4)));
        assert!(unf.pairs.contains(&(c, 4)));
        assert!(unf.pairs.contains(&(m.init(), 0)));
        assert!(!unf.pairs.contains(&(m.init(), 1)));
    }

    #[test]
    fn unfold_intro_bound_1_has_one_decision_pair() {
        let m = intro();
        let unf = unfold(&m, 1).unwrap();
        assert_eq!(unf.decision_pairs(&m), vec![(m.init(), 0)]);
    }

    #[test]
    fn geo_family_vpe_values() {
        let m = geo();
        let lambda = rational_int(1);
        // (k-1)/2^(k-1) + 1/4^k for the family member k.
        for k in 0..=4u32 {
            let sched = geo_family(&m, k as u64, (k as u64).max(1) + 2);
            let report = vpe_of_scheduler(&m, &lambda, &sched).unwrap();
            let want = ratio(2 * (k as i64 - 1), 2i64.pow(k)) + ratio(1, 4i64.pow(k));
            assert_eq!(report.value, want, "family member {k}");
            assert!(!report.exact);
        }
    }

    #[test]
    fn micro_sure_weight_has_no_variance_penalty() {
        let m = micro();
        let u = m.state_index("u").unwrap();
        let alpha = m.action_index(u, "alpha").unwrap();
        let ctx_tail = min_variance_among_optimal(&m, Direction::Minimize)
            .unwrap()
            .scheduler
            .to_scheduler();
        let sched = WeightBasedScheduler {
            bound: 1,
            table: std::collections::BTreeMap::from([((u, 0), vec![(alpha, Rational::one())])]),
            tail: ctx_tail,
        };
        let report = vpe_of_scheduler(&m, &rational_int(5), &sched).unwrap();
        assert_eq!(report.value, rational_int(1));
        assert_eq!(report.moments, MomentPair::new(rational_int(1), rational_int(0)));
    }

    #[test]
    fn geo_threshold_holds_at_bound_eight() {
        let m = geo();
        let opts = VpeOptions {
            bound: Some(8),
            ..VpeOptions::default()
        };
        let (outcome, _) = threshold(&m, &rational_int(1), &ratio(9, 16), &opts).unwrap();
        assert_eq!(outcome, ThresholdOutcome::Holds);
    }

    #[test]
    fn tail_mismatch_is_rejected() {
        let m = geo();
        let c = m.state_index("c").unwrap();
        let alpha = m.action_index(c, "alpha").unwrap();
        let tail = (0..m.num_states())
            .map(|s| {
                (s != m.goal()).then(|| {
                    vec![(
                        if s == c { alpha } else { 0 },
                        Rational::one(),
                    )]
                })
            })
            .collect();
        let sched = WeightBasedScheduler::from_memoryless(
            MemorylessScheduler::new(&m, tail),
            2,
        );
        assert!(matches!(
            vpe_of_scheduler(&m, &rational_int(1), &sched),
            Err(VpeError::TailMismatch)
        ));
    }

    #[test]
    fn intro_maximum_at_bound_one() {
        let m = intro();
        let opts = VpeOptions {
            bound: Some(1),
            ..VpeOptions::default()
        };
        let report = maximize_vpe(&m, &rational_int(1), &opts).unwrap();
        assert_eq!(report.value, ratio(20, 9));
        assert!(!report.exact);
        let gamma = m.action_index(m.init(), "gamma").unwrap();
        assert_eq!(
            report.scheduler.choice_at(m.init(), 0),
            Some(&vec![(gamma, Rational::one())])
        );
        assert_eq!(report.moments, MomentPair::new(ratio(10, 3), ratio(10, 9)));

        let report = maximize_vpe(&m, &rational_int(4), &opts).unwrap();
        assert_eq!(report.value, rational_int(0));
        let alpha = m.action_index(m.init(), "alpha").unwrap();
        assert_eq!(
            report.scheduler.choice_at(m.init(), 0),
            Some(&vec![(alpha, Rational::one())])
        );
    }

    #[test]
    fn micro_is_exact_at_its_saturation_point() {
        let m = micro();
        let report = maximize_vpe(&m, &rational_int(1), &VpeOptions::default()).unwrap();
        assert!(report.exact);
        assert_eq!(report.bound_used, 13);
        assert_eq!(report.value, rational_int(1));
        let more = maximize_vpe(
            &m,
            &rational_int(1),
            &VpeOptions {
                bound: Some(18),
                ..VpeOptions::default()
            },
        )
        .unwrap();
        assert_eq!(more.value, report.value);
        assert!(more.exact);
    }

    #[test]
    fn geo_value_is_monotone_in_the_bound() {
        let m = geo();
        let mut last = None;
        for bound in 1..=8 {
            let report = maximize_vpe(
                &m,
                &rational_int(1),
                &VpeOptions {
                    bound: Some(bound),
                    ..VpeOptions::default()
                },
            )
            .unwrap();
            if let Some(prev) = last {
                assert!(report.value >= prev, "bound {bound}");
            }
            last = Some(report.value);
        }
        // The family optimum 9/16 is reached from bound 2 on.
        assert_eq!(last.unwrap(), ratio(9, 16));
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let m = geo();
        let base = maximize_vpe(
            &m,
            &rational_int(1),
            &VpeOptions {
                bound: Some(6),
                jobs: 1,
                ..VpeOptions::default()
            },
        )
        .unwrap();
        for jobs in [2, 3, 8] {
            let par = maximize_vpe(
                &m,
                &rational_int(1),
                &VpeOptions {
                    bound: Some(6),
                    jobs,
                    ..VpeOptions::default()
                },
            )
            .unwrap();
            assert_eq!(par.value, base.value);
            assert_eq!(par.scheduler, base.scheduler);
        }
    }

    #[test]
    fn threshold_outcomes() {
        let m = intro();
        let opts = VpeOptions {
            bound: Some(1),
            ..VpeOptions::default()
        };
        let (outcome, _) = threshold(&m, &rational_int(1), &ratio(20, 9), &opts).unwrap();
        assert_eq!(outcome, ThresholdOutcome::Holds);
        let (outcome, _) = threshold(&m, &rational_int(1), &ratio(9, 4), &opts).unwrap();
        assert_eq!(outcome, ThresholdOutcome::LowerBoundOnly(ratio(20, 9)));

        // micro is exact at its default bound, so Fails is decidable.
        let m = micro();
        let (outcome, _) = threshold(
            &m,
            &rational_int(1),
            &ratio(3, 2),
            &VpeOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome, ThresholdOutcome::Fails);
    }

    #[test]
    fn frontier_of_intro() {
        let m = intro();
        let opts = VpeOptions {
            bound: Some(1),
            ..VpeOptions::default()
        };
        let rows = frontier(
            &m,
            &[ratio(1, 100), rational_int(1), rational_int(4)],
            &opts,
        )
        .unwrap();
        let points: Vec<(Rational, Rational)> = rows
            .iter()
            .map(|r| (r.moments.expectation.clone(), r.moments.variance.clone()))
            .collect();
        assert_eq!(
            points,
            vec![
                (rational_int(4), rational_int(4)),
                (ratio(10, 3), ratio(10, 9)),
                (rational_int(0), rational_int(0)),
            ]
        );
        assert!(frontier(&m, &[], &opts).unwrap().is_empty());

        // A single-penalty sweep matches the plain maximization.
        let geo = geo();
        let opts = VpeOptions {
            bound: Some(8),
            ..VpeOptions::default()
        };
        let rows = frontier(&geo, &[rational_int(1)], &opts).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].value, maximize_vpe(&geo, &rational_int(1), &opts).unwrap().value);
    }

    #[test]
    fn bound_budget_is_enforced() {
        let m = geo();
        let err = maximize_vpe(
            &m,
            &rational_int(1),
            &VpeOptions {
                bound: Some(64),
                max_assignments: 1 << 10,
                ..VpeOptions::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, VpeError::BoundTooLarge { .. }));
        // The default bound for geo is K = 8207, far above any budget.
        assert!(matches!(
            maximize_vpe(&m, &rational_int(1), &VpeOptions::default()),
            Err(VpeError::BoundTooLarge { .. })
        ));
    }
}
