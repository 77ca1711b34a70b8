//! Shared test oracles: exhaustive enumeration and brute-force checks, kept
//! independent of the library's policy-iteration and unfolding paths.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num::One;
use rand::rngs::StdRng;
use rand::Rng;

use vpemdp::model::Mdp;
use vpemdp::numeric::{rational_int, solve_linear_system, LinearSystem, Rational};
use vpemdp::scheduler::{MemorylessScheduler, WeightBasedScheduler};

pub fn fixture(name: &str) -> String {
    let path = format!("{}/fixtures/{}", env!("CARGO_MANIFEST_DIR"), name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("cannot read {path}: {e}"))
}

pub fn load(name: &str) -> Mdp {
    Mdp::parse(&fixture(name)).unwrap()
}

/// Random valid MDP without end components: states are ordered with goal
/// last and every action has at least one successor strictly later in the
/// order, so the latest state of any closed sub-MDP would contradict
/// closedness. Rejection-samples until every state is reachable from init.
pub fn random_ecfree_mdp(
    rng: &mut StdRng,
    max_states: usize,
    max_actions: usize,
    max_weight: i64,
) -> Mdp {
    loop {
        let n = rng.gen_range(2..=max_states);
        let goal = n - 1;
        let mut doc = String::new();
        doc.push_str("states");
        for s in 0..goal {
            doc.push_str(&format!(" s{s}"));
        }
        doc.push_str(" goal\ninit s0\ngoal goal\n");
        let name = |t: usize| {
            if t == goal {
                "goal".to_string()
            } else {
                format!("s{t}")
            }
        };
        for s in 0..goal {
            let n_actions = rng.gen_range(1..=max_actions);
            for a in 0..n_actions {
                let weight = rng.gen_range(0..=max_weight);
                let forward = rng.gen_range(s + 1..=goal);
                let mut succs = vec![forward];
                for _ in 0..rng.gen_range(0..=2usize) {
                    let t = rng.gen_range(0..n);
                    if !succs.contains(&t) {
                        succs.push(t);
                    }
                }
                let weights: Vec<u32> = succs.iter().map(|_| rng.gen_range(1..=4)).collect();
                let total: u32 = weights.iter().sum();
                doc.push_str(&format!("trans s{s} a{a} {weight}"));
                for (t, w) in succs.iter().zip(&weights) {
                    doc.push_str(&format!(" {} {}/{}", name(*t), w, total));
                }
                doc.push('\n');
            }
        }
        if let Ok(m) = Mdp::parse(&doc) {
            return m;
        }
    }
}

/// Every memoryless deterministic policy, as a choice vector with `None` at
/// goal. Enumeration order: odometer over file-ordered actions.
pub fn all_policies(m: &Mdp) -> Vec<Vec<Option<usize>>> {
    let non_goal: Vec<usize> = (0..m.num_states()).filter(|&s| s != m.goal()).collect();
    let mut out = Vec::new();
    let mut digits = vec![0usize; non_goal.len()];
    loop {
        let mut choice = vec![None; m.num_states()];
        for (i, &s) in non_goal.iter().enumerate() {
            choice[s] = Some(digits[i]);
        }
        out.push(choice);
        let mut i = 0;
        loop {
            if i == non_goal.len() {
                return out;
            }
            digits[i] += 1;
            if digits[i] < m.actions(non_goal[i]).len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// True when goal is reached almost surely: every state can reach goal in
/// the chain graph of the policy.
pub fn policy_proper(m: &Mdp, choice: &[Option<usize>]) -> bool {
    let n = m.num_states();
    let mut reach = vec![false; n];
    reach[m.goal()] = true;
    loop {
        let mut changed = false;
        for s in 0..n {
            if reach[s] {
                continue;
            }
            if let Some(a) = choice[s] {
                if m.actions(s)[a].successors.iter().any(|(t, _)| reach[*t]) {
                    reach[s] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return reach.iter().all(|&b| b);
        }
    }
}

/// Exact expectation of the accumulated weight per state under a
/// deterministic policy, by a direct linear solve built here.
pub fn policy_expectation_oracle(m: &Mdp, choice: &[Option<usize>]) -> Vec<Rational> {
    let (e, _) = policy_moments_oracle(m, choice);
    e
}

/// Exact expectation and second moment per state under a deterministic
/// policy.
pub fn policy_moments_oracle(m: &Mdp, choice: &[Option<usize>]) -> (Vec<Rational>, Vec<Rational>) {
    let n = m.num_states();
    let goal = m.goal();
    let non_goal: Vec<usize> = (0..n).filter(|&s| s != goal).collect();
    let idx: BTreeMap<usize, usize> = non_goal.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    let mut sys = LinearSystem::zero(non_goal.len());
    for (i, &s) in non_goal.iter().enumerate() {
        let act = &m.actions(s)[choice[s].unwrap()];
        *sys.coefficient_mut(i, i) += Rational::one();
        *sys.rhs_mut(i) = rational_int(act.weight);
        for (t, p) in &act.successors {
            if *t != goal {
                *sys.coefficient_mut(i, idx[t]) -= p;
            }
        }
    }
    let e_small = solve_linear_system(&sys).expect("proper policy");
    let mut e = vec![rational_int(0); n];
    for (i, &s) in non_goal.iter().enumerate() {
        e[s] = e_small[i].clone();
    }

    let mut sys2 = sys;
    for (i, &s) in non_goal.iter().enumerate() {
        let act = &m.actions(s)[choice[s].unwrap()];
        let w = rational_int(act.weight);
        let mut rhs = rational_int(0);
        for (t, p) in &act.successors {
            rhs += p * (&w * &w + rational_int(2) * &w * &e[*t]);
        }
        *sys2.rhs_mut(i) = rhs;
    }
    let q_small = solve_linear_system(&sys2).expect("proper policy");
    let mut q = vec![rational_int(0); n];
    for (i, &s) in non_goal.iter().enumerate() {
        q[s] = q_small[i].clone();
    }
    (e, q)
}

/// Componentwise optimal expectation over all proper deterministic policies,
/// by exhaustive enumeration.
pub fn expectation_by_enumeration(m: &Mdp, maximize: bool) -> Vec<Rational> {
    let mut best: Option<Vec<Rational>> = None;
    for choice in all_policies(m) {
        if !policy_proper(m, &choice) {
            continue;
        }
        let e = policy_expectation_oracle(m, &choice);
        best = Some(match best {
            None => e,
            Some(b) => b
                .into_iter()
                .zip(e)
                .map(|(x, y)| if maximize { x.max(y) } else { x.min(y) })
                .collect(),
        });
    }
    best.expect("at least one proper policy exists")
}

/// Deterministic memoryless scheduler as a weight-based scheduler: the policy
/// fills the whole table below `bound`, the tail is a separately chosen
/// memoryless scheduler (irrelevant below the bound).
pub fn policy_as_weight_based(
    _m: &Mdp,
    choice: &[Option<usize>],
    tail: MemorylessScheduler,
    bound: u64,
) -> WeightBasedScheduler {
    let mut table = BTreeMap::new();
    for (s, c) in choice.iter().enumerate() {
        if let Some(a) = c {
            for w in 0..bound {
                table.insert((s, w), vec![(*a, Rational::one())]);
            }
        }
    }
    WeightBasedScheduler { bound, table, tail }
}

/// Point-mass memoryless scheduler from a choice vector.
pub fn memoryless(m: &Mdp, choice: &[Option<usize>]) -> MemorylessScheduler {
    MemorylessScheduler::new(
        m,
        choice
            .iter()
            .map(|c| c.map(|a| vec![(a, Rational::one())]))
            .collect(),
    )
}

/// Pure scheduler on the intro model choosing `label` at init.
pub fn intro_pure(m: &Mdp, label: &str) -> Vec<Option<usize>> {
    let a = m.action_index(m.init(), label).unwrap();
    (0..m.num_states())
        .map(|s| {
            if s == m.goal() {
                None
            } else if s == m.init() {
                Some(a)
            } else {
                Some(0)
            }
        })
        .collect()
}

/// The geo family member `k` as a weight-based scheduler with a beta tail.
pub fn geo_family(m: &Mdp, k: u64, bound: u64) -> WeightBasedScheduler {
    assert!(bound >= 1);
    let c = m.state_index("c").unwrap();
    let alpha = m.action_index(c, "alpha").unwrap();
    let beta = m.action_index(c, "beta").unwrap();
    let mut table = BTreeMap::new();
    for w in 0..k.min(bound) {
        table.insert((c, w), vec![(alpha, Rational::one())]);
    }
    let tail = (0..m.num_states())
        .map(|s| {
            (s != m.goal()).then(|| vec![(if s == c { beta } else { 0 }, Rational::one())])
        })
        .collect();
    WeightBasedScheduler {
        bound,
        table,
        tail: MemorylessScheduler::new(m, tail),
    }
}

/// For deterministic-transition models: is there a path from init to goal of
/// accumulated weight exactly `target`? With deterministic transitions this
/// is equivalent to the existence of a scheduler reaching goal with that
/// exact weight almost surely.
pub fn sure_weight_reachable(m: &Mdp, target: u64) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    let mut stack = vec![(m.init(), 0u64)];
    seen.insert((m.init(), 0u64));
    while let Some((s, w)) = stack.pop() {
        if s == m.goal() && w == target {
            return true;
        }
        if s == m.goal() || w > target {
            continue;
        }
        for act in m.actions(s) {
            assert_eq!(act.successors.len(), 1, "model must be deterministic");
            assert!(act.weight >= 0);
            let next = w + act.weight as u64;
            let t = act.successors[0].0;
            if next <= target && seen.insert((t, next)) {
                stack.push((t, next));
            }
        }
    }
    false
}
