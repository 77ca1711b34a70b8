//! The stochastic shortest path solver: exact optimal expected accumulated
//! weight in both directions, the per-state sets of optimal actions, and the
//! pruned sub-MDP in which every scheduler is optimal.
//!
//! The fixed point is computed by policy iteration with exact evaluation:
//! start from a proper memoryless deterministic policy, evaluate by a linear
//! solve, switch to strictly improving actions, and stop when no action
//! improves. Ties are broken by file order throughout, so results are
//! deterministic.

use num::Zero;
use thiserror::Error;

use crate::model::{classify_ec, find_end_components, EcKind, Mdp};
use crate::numeric::{rational_int, Rational};
use crate::scheduler::{is_proper, policy_expectation, MemorylessPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("model has a 0-end-component; eliminate it before solving")]
    ZeroEcPresent,
    #[error("optimal expected accumulated weight is unbounded (an end component has {0} mean payoff in the direction of optimization)")]
    InfiniteExpectation(&'static str),
}

/// Direction of expectation optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `candidate` is strictly better than `incumbent`.
    fn improves(self, candidate: &Rational, incumbent: &Rational) -> bool {
        match self {
            Direction::Maximize => candidate > incumbent,
            Direction::Minimize => candidate < incumbent,
        }
    }
}

/// The unique solution of the optimality equation, the per-state optimal
/// action sets, and a deterministic witness policy.
#[derive(Debug, Clone)]
pub struct ExpectationSolution {
    pub direction: Direction,
    /// Optimal expected accumulated weight per state; zero at goal.
    pub values: Vec<Rational>,
    /// Per state, the (file-ordered, non-empty) actions attaining the value.
    pub optimal_actions: Vec<Vec<usize>>,
    /// Lexicographically least optimal action per non-goal state.
    pub witness: MemorylessPolicy,
}

/// Solves the optimality equation for the expected accumulated weight.
///
/// Under `Maximize`, every end component must have negative maximal mean
/// payoff; under `Minimize`, positive minimal mean payoff. 0-end-components
/// are rejected in both directions.
pub fn solve_expectation(m: &Mdp, direction: Direction) -> Result<ExpectationSolution, SolveError> {
    check_end_components(m, direction)?;

    let n = m.num_states();
    let goal = m.goal();
    let mut policy = initial_proper_policy(m);

    let values = loop {
        let sched = policy.to_scheduler();
        debug_assert!(is_proper(m, &sched), "policy iteration left proper policies");
        let values = policy_expectation(m, &sched)
            .expect("proper policy evaluation cannot fail");

        let mut changed = false;
        let mut next = policy.clone();
        for s in 0..n {
            if s == goal {
                continue;
            }
            let current = q_value(m, s, policy.action(s).unwrap(), &values);
            let mut best = current.clone();
            let mut best_action = None;
            for a in 0..m.actions(s).len() {
                let q = q_value(m, s, a, &values);
                if direction.improves(&q, &best) {
                    best = q;
                    best_action = Some(a);
                }
            }
            if let Some(a) = best_action {
                next = switch(m, next, s, a);
                changed = true;
            }
        }
        if !changed {
            break values;
        }
        policy = next;
    };

    // Optimal action sets: exact Bellman equality per action.
    let mut optimal_actions = vec![Vec::new(); n];
    let mut witness_choice = vec![None; n];
    for s in 0..n {
        if s == goal {
            continue;
        }
        for a in 0..m.actions(s).len() {
            let q = q_value(m, s, a, &values);
            debug_assert!(
                !direction.improves(&q, &values[s]),
                "no action may beat the fixed point"
            );
            if q == values[s] {
                optimal_actions[s].push(a);
            }
        }
        assert!(!optimal_actions[s].is_empty(), "fixed point must be attained");
        witness_choice[s] = Some(optimal_actions[s][0]);
    }

    Ok(ExpectationSolution {
        direction,
        values,
        optimal_actions,
        witness: MemorylessPolicy::new(m, witness_choice),
    })
}

/// The sub-MDP retaining exactly the optimal actions. The result has no end
/// components, and every memoryless deterministic scheduler of it attains the
/// optimal value from every state.
pub fn prune_to_optimal(m: &Mdp, sol: &ExpectationSolution) -> Mdp {
    let pruned = m.restricted(&sol.optimal_actions);
    assert!(
        find_end_components(&pruned).is_empty(),
        "pruned model retains an end component; this is a solver bug"
    );
    pruned
}

fn q_value(m: &Mdp, s: usize, a: usize, values: &[Rational]) -> Rational {
    let act = &m.actions(s)[a];
    rational_int(act.weight)
        + act
            .successors
            .iter()
            .map(|(t, p)| p * &values[*t])
            .sum::<Rational>()
}

fn check_end_components(m: &Mdp, direction: Direction) -> Result<(), SolveError> {
    let ecs = find_end_components(m);
    if ecs.is_empty() {
        return Ok(());
    }
    // Mean payoff in the optimization direction: for Minimize this is the
    // maximal mean payoff under negated weights, which must be negative.
    let negated;
    let classify_in = match direction {
        Direction::Maximize => m,
        Direction::Minimize => {
            negated = m.with_negated_weights();
            &negated
        }
    };
    for ec in &ecs {
        match classify_ec(classify_in, ec).kind {
            EcKind::NegativeMeanPayoff => {}
            EcKind::ZeroEc => return Err(SolveError::ZeroEcPresent),
            EcKind::NonNegativeMeanPayoff => {
                return Err(SolveError::InfiniteExpectation(match direction {
                    Direction::Maximize => "non-negative maximal",
                    Direction::Minimize => "non-positive minimal",
                }))
            }
        }
    }
    Ok(())
}

/// For each state, the first action on a shortest action-path to goal; the
/// induced chain reaches goal from every state, so the policy is proper.
fn initial_proper_policy(m: &Mdp) -> MemorylessPolicy {
    let n = m.num_states();
    let goal = m.goal();
    let mut dist = vec![usize::MAX; n];
    let mut pick = vec![None; n];
    dist[goal] = 0;
    loop {
        let mut changed = false;
        for s in 0..n {
            if s == goal {
                continue;
            }
            for (a, act) in m.actions(s).iter().enumerate() {
                let best_succ = act
                    .successors
                    .iter()
                    .map(|(t, _)| dist[*t])
                    .min()
                    .unwrap_or(usize::MAX);
                if best_succ != usize::MAX && best_succ.saturating_add(1) < dist[s] {
                    dist[s] = best_succ + 1;
                    pick[s] = Some(a);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    debug_assert!(
        (0..n).all(|s| s == goal || pick[s].is_some()),
        "goal is reachable from every state"
    );
    MemorylessPolicy::new(m, pick)
}

/// Applies a single-action switch, keeping the rest of the policy.
fn switch(m: &Mdp, policy: MemorylessPolicy, s: usize, a: usize) -> MemorylessPolicy {
    let choice = (0..m.num_states())
        .map(|t| if t == s { Some(a) } else { policy.action(t) })
        .collect();
    MemorylessPolicy::new(m, choice)
}

/// Residual of the optimality equation at a state, zero iff consistent.
pub fn bellman_residual(m: &Mdp, sol: &ExpectationSolution, s: usize) -> Rational {
    if s == m.goal() {
        return sol.values[s].clone();
    }
    let best = m
        .actions(s)
        .iter()
        .enumerate()
        .map(|(a, _)| q_value(m, s, a, &sol.values))
        .reduce(|x, y| match sol.direction {
            Direction::Maximize => x.max(y),
            Direction::Minimize => x.min(y),
        })
        .expect("non-goal state has actions");
    best - &sol.values[s]
}

/// Convenience check used by tests and assertions.
pub fn residuals_are_zero(m: &Mdp, sol: &ExpectationSolution) -> bool {
    (0..m.num_states()).all(|s| bellman_residual(m, sol, s).is_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ratio;
    use crate::test_util::fixture;

    fn intro() -> Mdp {
        Mdp::parse(&fixture("intro.mdp")).unwrap()
    }

    fn geo() -> Mdp {
        Mdp::parse(&fixture("geo.mdp")).unwrap()
    }

    #[test]
    fn intro_maximize_matches_geometric_formulas() {
        let m = intro();
        let sol = solve_expectation(&m, Direction::Maximize).unwrap();
        let v = |name: &str| sol.values[m.state_index(name).unwrap()].clone();
        assert_eq!(v("s_init"), rational_int(4));
        assert_eq!(v("b"), ratio(3, 2));
        assert_eq!(v("c"), ratio(10, 3));
        assert_eq!(v("d"), rational_int(4));
        assert_eq!(v("goal"), rational_int(0));
        let delta = m.action_index(m.init(), "delta").unwrap();
        assert_eq!(sol.witness.action(m.init()), Some(delta));
        assert!(residuals_are_zero(&m, &sol));
    }

    #[test]
    fn intro_minimize_goes_through_the_free_exit() {
        let m = intro();
        let sol = solve_expectation(&m, Direction::Minimize).unwrap();
        assert_eq!(sol.values[m.init()], rational_int(0));
        let alpha = m.action_index(m.init(), "alpha").unwrap();
        assert_eq!(sol.witness.action(m.init()), Some(alpha));
        assert_eq!(sol.optimal_actions[m.init()], vec![alpha]);
    }

    #[test]
    fn geo_minimize_values() {
        let m = geo();
        let sol = solve_expectation(&m, Direction::Minimize).unwrap();
        let v = |name: &str| sol.values[m.state_index(name).unwrap()].clone();
        assert_eq!(v("s_init"), rational_int(1));
        assert_eq!(v("s"), rational_int(2));
        assert_eq!(v("c"), rational_int(0));
    }

    #[test]
    fn pruning_keeps_exactly_the_optimal_actions() {
        let m = intro();
        let sol = solve_expectation(&m, Direction::Maximize).unwrap();
        let pruned = prune_to_optimal(&m, &sol);
        assert_eq!(pruned.actions(m.init()).len(), 1);
        assert_eq!(pruned.actions(m.init())[0].label, "delta");

        let m = geo();
        let sol = solve_expectation(&m, Direction::Minimize).unwrap();
        let pruned = prune_to_optimal(&m, &sol);
        let c = m.state_index("c").unwrap();
        assert_eq!(pruned.actions(c).len(), 1);
        assert_eq!(pruned.actions(c)[0].label, "beta");
    }

    #[test]
    fn equal_actions_are_both_kept() {
        let doc = "states u goal\ninit u\ngoal goal\n\
                   trans u a 1 goal 1\ntrans u b 1 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        let sol = solve_expectation(&m, Direction::Maximize).unwrap();
        assert_eq!(sol.optimal_actions[m.init()].len(), 2);
        assert_eq!(prune_to_optimal(&m, &sol).actions(m.init()).len(), 2);
    }

    #[test]
    fn zero_ec_is_rejected() {
        let doc = "states x goal\ninit x\ngoal goal\n\
                   trans x loop 0 x 1\ntrans x exit 0 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        for direction in [Direction::Maximize, Direction::Minimize] {
            assert!(matches!(
                solve_expectation(&m, direction),
                Err(SolveError::ZeroEcPresent)
            ));
        }
    }

    #[test]
    fn positive_loop_is_infinite_under_maximize_but_fine_under_minimize() {
        let doc = "states x goal\ninit x\ngoal goal\n\
                   trans x loop 1 x 1\ntrans x exit 0 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        assert!(matches!(
            solve_expectation(&m, Direction::Maximize),
            Err(SolveError::InfiniteExpectation(_))
        ));
        let sol = solve_expectation(&m, Direction::Minimize).unwrap();
        assert_eq!(sol.values[m.init()], rational_int(0));
    }

    #[test]
    fn negative_loop_is_fine_under_maximize_but_infinite_under_minimize() {
        let doc = "states x goal\ninit x\ngoal goal\n\
                   trans x loop -1 x 1\ntrans x exit 0 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        let sol = solve_expectation(&m, Direction::Maximize).unwrap();
        assert_eq!(sol.values[m.init()], rational_int(0));
        assert!(matches!(
            solve_expectation(&m, Direction::Minimize),
            Err(SolveError::InfiniteExpectation(_))
        ));
    }
}
