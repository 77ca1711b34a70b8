//! Variance-minimal schedulers among expectation-optimal ones.
//!
//! Pipeline: solve the expectation, prune to the optimal actions (after which
//! every scheduler attains the optimal expectation from every state), then
//! minimize the variance on the pruned model. Under a fixed expectation
//! vector `mu`, the minimal variances are the unique solution of a second
//! optimality equation whose weights are `(wgt(s,a) + mu_t - mu_s)^2`; the
//! successor-dependent weight is handled directly in the evaluation systems
//! instead of through intermediary states.

use num::{One, Zero};

use crate::expectation::{prune_to_optimal, solve_expectation, Direction, SolveError};
use crate::model::Mdp;
use crate::numeric::{rational_int, solve_linear_system, LinearSystem, Rational};
use crate::scheduler::{policy_moments, MemorylessPolicy};

/// Expectations, minimal variances and second moments per state, plus the
/// memoryless deterministic scheduler attaining them.
#[derive(Debug, Clone)]
pub struct VarianceMinSolution {
    /// Direction of the expectation being held optimal.
    pub direction: Direction,
    pub expectation: Vec<Rational>,
    pub variance: Vec<Rational>,
    /// `q_s = variance_s + expectation_s^2`, the second moment.
    pub second_moment: Vec<Rational>,
    pub scheduler: MemorylessPolicy,
}

/// Computes a memoryless deterministic scheduler minimizing the variance of
/// the accumulated weight among all expectation-optimal schedulers.
pub fn min_variance_among_optimal(
    m: &Mdp,
    direction: Direction,
) -> Result<VarianceMinSolution, SolveError> {
    let sol = solve_expectation(m, direction)?;
    let pruned = prune_to_optimal(m, &sol);
    let mu = &sol.values;
    let n = m.num_states();
    let goal = m.goal();

    // Squared deviation collected on one transition of the pruned model.
    let step_cost = |s: usize, a: usize| -> Vec<(usize, Rational, Rational)> {
        pruned.actions(s)[a]
            .successors
            .iter()
            .map(|(t, p)| {
                let d = rational_int(pruned.actions(s)[a].weight) + &mu[*t] - &mu[s];
                (*t, p.clone(), &d * &d)
            })
            .collect()
    };

    // Policy iteration over the pruned model; it is EC-free, so every policy
    // is proper and every evaluation system is nonsingular.
    let non_goal: Vec<usize> = (0..n).filter(|&s| s != goal).collect();
    let idx: std::collections::BTreeMap<usize, usize> =
        non_goal.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut policy: Vec<usize> = vec![0; n];

    let variance = loop {
        let mut sys = LinearSystem::zero(non_goal.len());
        for (i, &s) in non_goal.iter().enumerate() {
            *sys.coefficient_mut(i, i) += Rational::one();
            for (t, p, cost) in step_cost(s, policy[s]) {
                *sys.rhs_mut(i) += &p * cost;
                if t != goal {
                    *sys.coefficient_mut(i, idx[&t]) -= p;
                }
            }
        }
        let small = solve_linear_system(&sys).expect("pruned model evaluation is nonsingular");
        let mut v = vec![Rational::zero(); n];
        for (i, &s) in non_goal.iter().enumerate() {
            v[s] = small[i].clone();
        }

        let mut changed = false;
        for &s in &non_goal {
            let q = |a: usize| -> Rational {
                step_cost(s, a)
                    .into_iter()
                    .map(|(t, p, cost)| p * (cost + &v[t]))
                    .sum()
            };
            let current = q(policy[s]);
            let mut best = current.clone();
            let mut best_action = None;
            for a in 0..pruned.actions(s).len() {
                let qa = q(a);
                if qa < best {
                    best = qa;
                    best_action = Some(a);
                }
            }
            if let Some(a) = best_action {
                policy[s] = a;
                changed = true;
            }
        }
        if !changed {
            break v;
        }
    };

    // Canonical scheduler: the first retained action attaining the fixed
    // point at each state, mapped back to original action indices.
    let mut choice = vec![None; n];
    for &s in &non_goal {
        let q = |a: usize| -> Rational {
            step_cost(s, a)
                .into_iter()
                .map(|(t, p, cost)| p * (cost + &variance[t]))
                .sum()
        };
        let a = (0..pruned.actions(s).len())
            .find(|&a| q(a) == variance[s])
            .expect("fixed point is attained by a retained action");
        choice[s] = Some(sol.optimal_actions[s][a]);
    }
    let scheduler = MemorylessPolicy::new(m, choice);

    let second_moment: Vec<Rational> = (0..n)
        .map(|s| &variance[s] + &mu[s] * &mu[s])
        .collect();

    // Self-check: an independent moment solve under the returned scheduler
    // must reproduce both the expectation and the second moment.
    debug_assert!({
        let (e, q) = policy_moments(m, &scheduler.to_scheduler()).unwrap();
        e == *mu && q == second_moment
    });

    Ok(VarianceMinSolution {
        direction,
        expectation: sol.values,
        variance,
        second_moment,
        scheduler,
    })
}
