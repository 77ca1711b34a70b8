//! Scheduler representations, exact terminal-distribution and expected-
//! frequency computation, convex combinations, and seeded Monte Carlo
//! simulation.
//!
//! Schedulers are weight-based by construction: a choice may depend on the
//! current state and the weight accumulated so far, and falls back to a
//! memoryless tail once the accumulated weight reaches the scheduler's bound.
//! General history-dependent schedulers are not representable; for the
//! objectives handled here weight-based schedulers are sufficient.
//!
//! # Scheduler file format
//!
//! UTF-8, line based; `#` starts a comment, blank lines are ignored:
//!
//! ```text
//! bound 8
//! at c 0 choose alpha
//! at c 5 choose beta 1/2 alpha 1/2
//! tail c choose beta
//! ```
//!
//! `at <state> <weight> choose <action> [<prob> <action> <prob> ...]` fixes
//! the choice at one state-weight pair below the bound; unlisted pairs
//! default to the tail choice. `tail` lines are required for every non-goal
//! state with more than one enabled action; single-action states default to
//! their only action.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};

use num::bigint::{BigInt, RandBigInt};
use num::{One, Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{find_end_components, Mdp};
use crate::numeric::{
    format_rational, parse_rational, rational_int, solve_linear_system, LinearSystem, Rational,
};

/// Identifier of the simulation generator, echoed in reports.
pub const RNG_ID: &str = "chacha8";

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("model has an end component; this analysis requires an EC-free model")]
    EndComponentPresent,
    #[error("model has a negative weight; this analysis requires weights in N")]
    NegativeWeight,
    #[error("scheduler does not reach goal almost surely")]
    ImproperScheduler,
    #[error("no tail value supplied for boundary state `{0}`")]
    MissingTailValue(String),
    #[error("frequency table has action mass at unvisited pair ({0}, {1})")]
    ZeroVisitDivision(String, u64),
    #[error("run exceeded the step limit of {0}; the model is close to an end component")]
    StepLimitExceeded(u64),
    #[error("schedulers cannot be mixed: {0}")]
    InvalidMixture(String),
    #[error("scheduler file error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn parse_err(line: usize, message: impl Into<String>) -> SchedulerError {
    SchedulerError::Parse {
        line,
        message: message.into(),
    }
}

/// Probability distribution over enabled action indices; exact, sums to 1.
pub type ActionDist = Vec<(usize, Rational)>;

fn point_mass(action: usize) -> ActionDist {
    vec![(action, Rational::one())]
}

fn dist_is_valid(m: &Mdp, state: usize, dist: &ActionDist) -> bool {
    let mut total = Rational::zero();
    let mut seen = std::collections::BTreeSet::new();
    for (a, p) in dist {
        if *a >= m.actions(state).len() || !p.is_positive() || !seen.insert(*a) {
            return false;
        }
        total += p;
    }
    total.is_one()
}

/// A deterministic memoryless scheduler: one action index per non-goal state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemorylessPolicy {
    choice: Vec<Option<usize>>,
}

impl MemorylessPolicy {
    pub fn new(m: &Mdp, choice: Vec<Option<usize>>) -> MemorylessPolicy {
        assert_eq!(choice.len(), m.num_states());
        for (s, c) in choice.iter().enumerate() {
            match c {
                Some(a) => assert!(s != m.goal() && *a < m.actions(s).len()),
                None => assert_eq!(s, m.goal(), "only goal may lack a choice"),
            }
        }
        MemorylessPolicy { choice }
    }

    pub fn action(&self, state: usize) -> Option<usize> {
        self.choice[state]
    }

    pub fn to_scheduler(&self) -> MemorylessScheduler {
        MemorylessScheduler {
            choice: self
                .choice
                .iter()
                .map(|c| c.map(point_mass))
                .collect(),
        }
    }
}

/// A (possibly randomized) memoryless scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorylessScheduler {
    choice: Vec<Option<ActionDist>>,
}

impl MemorylessScheduler {
    pub fn new(m: &Mdp, choice: Vec<Option<ActionDist>>) -> MemorylessScheduler {
        assert_eq!(choice.len(), m.num_states());
        for (s, c) in choice.iter().enumerate() {
            match c {
                Some(dist) => assert!(dist_is_valid(m, s, dist), "bad distribution at state {s}"),
                None => assert_eq!(s, m.goal()),
            }
        }
        MemorylessScheduler { choice }
    }

    pub fn dist(&self, state: usize) -> Option<&ActionDist> {
        self.choice[state].as_ref()
    }
}

/// A weight-based scheduler: explicit choices on state-weight pairs below
/// `bound`, and a memoryless tail applied once accumulated weight >= `bound`
/// (and at unlisted pairs below it).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBasedScheduler {
    pub bound: u64,
    pub table: BTreeMap<(usize, u64), ActionDist>,
    pub tail: MemorylessScheduler,
}

impl WeightBasedScheduler {
    /// Wraps a memoryless scheduler: no table entries, so the tail is applied
    /// at every accumulated weight.
    pub fn from_memoryless(tail: MemorylessScheduler, bound: u64) -> WeightBasedScheduler {
        WeightBasedScheduler {
            bound,
            table: BTreeMap::new(),
            tail,
        }
    }

    pub fn choice_at(&self, state: usize, weight: u64) -> Option<&ActionDist> {
        if weight < self.bound {
            if let Some(dist) = self.table.get(&(state, weight)) {
                return Some(dist);
            }
        }
        self.tail.dist(state)
    }

    /// True when every table and tail entry is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.table.values().all(|d| d.len() == 1)
            && self
                .tail
                .choice
                .iter()
                .flatten()
                .all(|d| d.len() == 1)
    }

    /// Parses the scheduler file format against a model.
    pub fn parse(m: &Mdp, text: &str) -> Result<WeightBasedScheduler, SchedulerError> {
        let mut bound: Option<u64> = None;
        let mut table: BTreeMap<(usize, u64), ActionDist> = BTreeMap::new();
        let mut tail: Vec<Option<ActionDist>> = vec![None; m.num_states()];

        let parse_choice = |line_no: usize,
                            state: usize,
                            tokens: &[String]|
         -> Result<ActionDist, SchedulerError> {
            let lookup = |label: &str| {
                m.action_index(state, label).ok_or_else(|| {
                    parse_err(
                        line_no,
                        format!(
                            "action `{label}` is not enabled at state `{}`",
                            m.state_name(state)
                        ),
                    )
                })
            };
            let dist = if tokens.len() == 1 {
                point_mass(lookup(&tokens[0])?)
            } else {
                if !tokens.len().is_multiple_of(2) {
                    return Err(parse_err(line_no, "expected `<action> <prob>` pairs"));
                }
                let mut dist = Vec::new();
                for pair in tokens.chunks(2) {
                    let a = lookup(&pair[0])?;
                    let p = parse_rational(&pair[1])
                        .map_err(|e| parse_err(line_no, e.to_string()))?;
                    dist.push((a, p));
                }
                dist
            };
            if !dist_is_valid(m, state, &dist) {
                return Err(parse_err(
                    line_no,
                    "choice probabilities must be positive, distinct per action and sum to 1",
                ));
            }
            Ok(dist)
        };

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("");
            let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if tokens.is_empty() {
                continue;
            }
            match tokens[0].as_str() {
                "bound" => {
                    if bound.is_some() {
                        return Err(parse_err(line_no, "duplicate `bound` line"));
                    }
                    if tokens.len() != 2 {
                        return Err(parse_err(line_no, "`bound` expects one natural number"));
                    }
                    let b: u64 = tokens[1]
                        .parse()
                        .map_err(|_| parse_err(line_no, "bad bound"))?;
                    if b == 0 {
                        return Err(parse_err(line_no, "bound must be at least 1"));
                    }
                    bound = Some(b);
                }
                "at" => {
                    let b = bound
                        .ok_or_else(|| parse_err(line_no, "`at` before the `bound` line"))?;
                    if tokens.len() < 5 || tokens[3] != "choose" {
                        return Err(parse_err(
                            line_no,
                            "expected `at <state> <weight> choose <action> ...`",
                        ));
                    }
                    let state = m.state_index(&tokens[1]).ok_or_else(|| {
                        parse_err(line_no, format!("unknown state `{}`", tokens[1]))
                    })?;
                    if state == m.goal() {
                        return Err(parse_err(line_no, "goal has no choices"));
                    }
                    let weight: u64 = tokens[2]
                        .parse()
                        .map_err(|_| parse_err(line_no, "bad weight"))?;
                    if weight >= b {
                        return Err(parse_err(
                            line_no,
                            format!("weight {weight} is not below the bound {b}"),
                        ));
                    }
                    let dist = parse_choice(line_no, state, &tokens[4..])?;
                    if table.insert((state, weight), dist).is_some() {
                        return Err(parse_err(
                            line_no,
                            format!("duplicate entry for ({}, {weight})", tokens[1]),
                        ));
                    }
                }
                "tail" => {
                    if tokens.len() < 4 || tokens[2] != "choose" {
                        return Err(parse_err(
                            line_no,
                            "expected `tail <state> choose <action> ...`",
                        ));
                    }
                    let state = m.state_index(&tokens[1]).ok_or_else(|| {
                        parse_err(line_no, format!("unknown state `{}`", tokens[1]))
                    })?;
                    if state == m.goal() {
                        return Err(parse_err(line_no, "goal has no choices"));
                    }
                    if tail[state].is_some() {
                        return Err(parse_err(
                            line_no,
                            format!("duplicate tail for `{}`", tokens[1]),
                        ));
                    }
                    tail[state] = Some(parse_choice(line_no, state, &tokens[3..])?);
                }
                other => return Err(parse_err(line_no, format!("unknown directive `{other}`"))),
            }
        }

        let bound = bound.ok_or_else(|| parse_err(0, "missing `bound` line"))?;
        for s in 0..m.num_states() {
            if s == m.goal() || tail[s].is_some() {
                continue;
            }
            match m.actions(s).len() {
                1 => tail[s] = Some(point_mass(0)),
                _ => {
                    return Err(parse_err(
                        0,
                        format!(
                            "state `{}` has several actions and needs a `tail` line",
                            m.state_name(s)
                        ),
                    ))
                }
            }
        }
        Ok(WeightBasedScheduler {
            bound,
            table,
            tail: MemorylessScheduler { choice: tail },
        })
    }

    /// Canonical textual form: the bound, sorted table entries, and explicit
    /// tail lines for every non-goal state.
    pub fn serialize(&self, m: &Mdp) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "bound {}", self.bound);
        let fmt_dist = |state: usize, dist: &ActionDist| -> String {
            if dist.len() == 1 {
                m.actions(state)[dist[0].0].label.clone()
            } else {
                dist.iter()
                    .map(|(a, p)| {
                        format!("{} {}", m.actions(state)[*a].label, format_rational(p))
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            }
        };
        for ((state, weight), dist) in &self.table {
            let _ = writeln!(
                out,
                "at {} {} choose {}",
                m.state_name(*state),
                weight,
                fmt_dist(*state, dist)
            );
        }
        for s in 0..m.num_states() {
            if let Some(dist) = self.tail.dist(s) {
                let _ = writeln!(out, "tail {} choose {}", m.state_name(s), fmt_dist(s, dist));
            }
        }
        out
    }
}

/// Exact probabilities of the absorbing events of a bounded run: reaching
/// goal with weight `w < bound`, or crossing the bound into state `s` with
/// weight `w` in `[bound, bound + W - 1]`. Masses are non-negative and sum
/// to exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDistribution {
    pub bound: u64,
    pub goal_mass: BTreeMap<u64, Rational>,
    pub boundary_mass: BTreeMap<(usize, u64), Rational>,
}

impl TerminalDistribution {
    pub fn total_mass(&self) -> Rational {
        self.goal_mass.values().sum::<Rational>() + self.boundary_mass.values().sum::<Rational>()
    }
}

/// Expected visit counts of state-weight pairs below the bound, plus the
/// expected number of times each action is chosen at such a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    pub bound: u64,
    pub visits: BTreeMap<(usize, u64), Rational>,
    pub action_visits: BTreeMap<(usize, u64, usize), Rational>,
}

/// An (expectation, variance) pair of the accumulated weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub expectation: Rational,
    pub variance: Rational,
}

impl MomentPair {
    pub fn new(expectation: Rational, variance: Rational) -> MomentPair {
        debug_assert!(!variance.is_negative(), "variance must be non-negative");
        MomentPair {
            expectation,
            variance,
        }
    }

    pub fn second_moment(&self) -> Rational {
        &self.variance + &self.expectation * &self.expectation
    }
}

fn require_unrollable(m: &Mdp) -> Result<(), SchedulerError> {
    if m.has_negative_weight() {
        return Err(SchedulerError::NegativeWeight);
    }
    if !find_end_components(m).is_empty() {
        return Err(SchedulerError::EndComponentPresent);
    }
    Ok(())
}

/// Per-level flow analysis shared by [`terminal_distribution`] and
/// [`frequencies`]: within one weight level, zero-weight transitions form a
/// substochastic system that is solved exactly; positive-weight transitions
/// feed higher levels; pairs at or above the bound absorb.
struct LevelFlows {
    goal_mass: BTreeMap<u64, Rational>,
    boundary_mass: BTreeMap<(usize, u64), Rational>,
    visits: BTreeMap<(usize, u64), Rational>,
    action_visits: BTreeMap<(usize, u64, usize), Rational>,
}

fn level_flows(m: &Mdp, sched: &WeightBasedScheduler) -> Result<LevelFlows, SchedulerError> {
    require_unrollable(m)?;
    assert!(sched.bound >= 1, "scheduler bound must be at least 1");
    let n = m.num_states();
    let goal = m.goal();
    let bound = sched.bound;

    let mut out = LevelFlows {
        goal_mass: BTreeMap::new(),
        boundary_mass: BTreeMap::new(),
        visits: BTreeMap::new(),
        action_visits: BTreeMap::new(),
    };
    let mut injections: BTreeMap<u64, Vec<Rational>> = BTreeMap::new();
    injections.insert(0, {
        let mut v = vec![Rational::zero(); n];
        v[m.init()] = Rational::one();
        v
    });

    while let Some((&level, _)) = injections.iter().next() {
        let inject = injections.remove(&level).unwrap();
        debug_assert!(level < bound);

        // Mass landing directly on goal at this level is absorbed.
        if inject[goal].is_positive() {
            *out.goal_mass.entry(level).or_insert_with(Rational::zero) += &inject[goal];
            *out.visits
                .entry((goal, level))
                .or_insert_with(Rational::zero) += &inject[goal];
        }

        // Expected visits phi of non-goal states at this level:
        // phi = inject + Z^T phi with Z the zero-weight one-step kernel.
        let non_goal: Vec<usize> = (0..n).filter(|&s| s != goal).collect();
        let idx: BTreeMap<usize, usize> =
            non_goal.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut sys = LinearSystem::zero(non_goal.len());
        for (i, &s) in non_goal.iter().enumerate() {
            *sys.coefficient_mut(i, i) += Rational::one();
            *sys.rhs_mut(i) = inject[s].clone();
            let dist = sched
                .choice_at(s, level)
                .expect("non-goal state has a choice");
            for (a, pa) in dist {
                let act = &m.actions(s)[*a];
                if act.weight != 0 {
                    continue;
                }
                for (t, pt) in &act.successors {
                    if *t != goal {
                        // Column s contributes to row t: phi_t collects flow.
                        *sys.coefficient_mut(idx[t], i) -= pa * pt;
                    }
                }
            }
        }
        let phi = solve_linear_system(&sys)
            .expect("zero-weight level system is nonsingular on EC-free models");

        for (i, &s) in non_goal.iter().enumerate() {
            if phi[i].is_zero() {
                continue;
            }
            debug_assert!(phi[i].is_positive(), "visit counts are non-negative");
            out.visits.insert((s, level), phi[i].clone());
            let dist = sched.choice_at(s, level).unwrap();
            for (a, pa) in dist {
                out.action_visits
                    .insert((s, level, *a), &phi[i] * pa);
                let act = &m.actions(s)[*a];
                for (t, pt) in &act.successors {
                    let mass = &phi[i] * pa * pt;
                    if act.weight == 0 {
                        if *t == goal {
                            *out.goal_mass.entry(level).or_insert_with(Rational::zero) += &mass;
                            *out.visits
                                .entry((goal, level))
                                .or_insert_with(Rational::zero) += &mass;
                        }
                        // Zero-weight flow to non-goal states is part of the
                        // level solve and must not be counted again.
                        continue;
                    }
                    let next = level + act.weight as u64;
                    if next >= bound {
                        *out.boundary_mass
                            .entry((*t, next))
                            .or_insert_with(Rational::zero) += &mass;
                    } else {
                        injections
                            .entry(next)
                            .or_insert_with(|| vec![Rational::zero(); n])[*t] += &mass;
                    }
                }
            }
        }
    }

    debug_assert!(
        (out.goal_mass.values().sum::<Rational>()
            + out.boundary_mass.values().sum::<Rational>())
        .is_one(),
        "terminal mass must sum to exactly 1"
    );
    Ok(out)
}

/// Exact distribution of the absorbing events of the weight-bounded run.
pub fn terminal_distribution(
    m: &Mdp,
    sched: &WeightBasedScheduler,
) -> Result<TerminalDistribution, SchedulerError> {
    let flows = level_flows(m, sched)?;
    Ok(TerminalDistribution {
        bound: sched.bound,
        goal_mass: flows.goal_mass,
        boundary_mass: flows.boundary_mass,
    })
}

/// Exact expected frequencies of all state-weight pairs below the bound.
pub fn frequencies(
    m: &Mdp,
    sched: &WeightBasedScheduler,
) -> Result<FrequencyTable, SchedulerError> {
    let flows = level_flows(m, sched)?;
    Ok(FrequencyTable {
        bound: sched.bound,
        visits: flows.visits,
        action_visits: flows.action_visits,
    })
}

/// Expectation and variance of the accumulated weight from a terminal
/// distribution, given per-state expectation (`tail_e`) and second moment
/// (`tail_q`) of the continuation applied at boundary pairs.
pub fn moments_from_distribution(
    dist: &TerminalDistribution,
    tail_e: &BTreeMap<usize, Rational>,
    tail_q: &BTreeMap<usize, Rational>,
) -> Result<MomentPair, SchedulerError> {
    let lookup = |map: &BTreeMap<usize, Rational>, s: usize| -> Result<Rational, SchedulerError> {
        map.get(&s)
            .cloned()
            .ok_or_else(|| SchedulerError::MissingTailValue(format!("state #{s}")))
    };

    let mut mu = Rational::zero();
    for (w, p) in &dist.goal_mass {
        mu += p * rational_int(*w as i64);
    }
    for ((s, w), p) in &dist.boundary_mass {
        mu += p * (rational_int(*w as i64) + lookup(tail_e, *s)?);
    }

    let mut var = Rational::zero();
    for (w, p) in &dist.goal_mass {
        let d = rational_int(*w as i64) - &mu;
        var += p * (&d * &d);
    }
    for ((s, w), p) in &dist.boundary_mass {
        let e = lookup(tail_e, *s)?;
        let q = lookup(tail_q, *s)?;
        let d = rational_int(*w as i64) - &mu;
        var += p * (&d * &d + rational_int(2) * &d * e + q);
    }
    Ok(MomentPair::new(mu, var))
}

/// Rebuilds a weight-based scheduler from expected frequencies: each action
/// is assigned its frequency ratio at every visited pair.
pub fn to_weight_based(
    m: &Mdp,
    freq: &FrequencyTable,
    tail: MemorylessScheduler,
) -> Result<WeightBasedScheduler, SchedulerError> {
    let mut table: BTreeMap<(usize, u64), ActionDist> = BTreeMap::new();
    let mut grouped: BTreeMap<(usize, u64), Vec<(usize, &Rational)>> = BTreeMap::new();
    for ((s, w, a), mass) in &freq.action_visits {
        if mass.is_positive() {
            grouped.entry((*s, *w)).or_default().push((*a, mass));
        }
    }
    for ((s, w), actions) in grouped {
        let visits = freq
            .visits
            .get(&(s, w))
            .filter(|v| v.is_positive())
            .ok_or_else(|| SchedulerError::ZeroVisitDivision(m.state_name(s).to_string(), w))?;
        let dist: ActionDist = actions
            .into_iter()
            .map(|(a, mass)| (a, mass / visits))
            .collect();
        debug_assert!(dist_is_valid(m, s, &dist));
        table.insert((s, w), dist);
    }
    Ok(WeightBasedScheduler {
        bound: freq.bound,
        table,
        tail,
    })
}

/// The scheduler whose expected frequencies are the convex combination
/// `p * freq(s1) + (1-p) * freq(s2)`. Both inputs must share bound and tail.
pub fn convex_combination(
    m: &Mdp,
    s1: &WeightBasedScheduler,
    s2: &WeightBasedScheduler,
    p: &Rational,
) -> Result<WeightBasedScheduler, SchedulerError> {
    if !(p.is_positive() && p < &Rational::one()) {
        return Err(SchedulerError::InvalidMixture(format!(
            "mixing weight {} is outside (0, 1)",
            format_rational(p)
        )));
    }
    if s1.bound != s2.bound {
        return Err(SchedulerError::InvalidMixture(format!(
            "bounds differ: {} vs {}",
            s1.bound, s2.bound
        )));
    }
    if s1.tail != s2.tail {
        return Err(SchedulerError::InvalidMixture("tails differ".into()));
    }
    let f1 = frequencies(m, s1)?;
    let f2 = frequencies(m, s2)?;
    let q = Rational::one() - p;
    let mut mixed = FrequencyTable {
        bound: f1.bound,
        visits: BTreeMap::new(),
        action_visits: BTreeMap::new(),
    };
    for (key, v) in &f1.visits {
        *mixed.visits.entry(*key).or_insert_with(Rational::zero) += p * v;
    }
    for (key, v) in &f2.visits {
        *mixed.visits.entry(*key).or_insert_with(Rational::zero) += &q * v;
    }
    for (key, v) in &f1.action_visits {
        *mixed
            .action_visits
            .entry(*key)
            .or_insert_with(Rational::zero) += p * v;
    }
    for (key, v) in &f2.action_visits {
        *mixed
            .action_visits
            .entry(*key)
            .or_insert_with(Rational::zero) += &q * v;
    }
    to_weight_based(m, &mixed, s1.tail.clone())
}

/// Moments of the convex combination `p * first + (1-p) * second`.
pub fn mixture_moments(m1: &MomentPair, m2: &MomentPair, p: &Rational) -> MomentPair {
    assert!(
        !p.is_negative() && p <= &Rational::one(),
        "mixing weight must lie in [0, 1]"
    );
    let q = Rational::one() - p;
    let expectation = p * &m1.expectation + &q * &m2.expectation;
    let gap = &m1.expectation - &m2.expectation;
    let variance = p * &m1.variance + &q * &m2.variance + p * &q * (&gap * &gap);
    MomentPair::new(expectation, variance)
}

/// True when goal is reached almost surely from every state under the
/// scheduler, i.e. every state has a chain path to goal.
pub fn is_proper(m: &Mdp, sched: &MemorylessScheduler) -> bool {
    let n = m.num_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        if let Some(dist) = sched.dist(s) {
            for (a, _) in dist {
                for (t, _) in &m.actions(s)[*a].successors {
                    preds[*t].push(s);
                }
            }
        }
    }
    let mut seen = vec![false; n];
    seen[m.goal()] = true;
    let mut queue = VecDeque::from([m.goal()]);
    while let Some(s) = queue.pop_front() {
        for &p in &preds[s] {
            if !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    seen.iter().all(|&b| b)
}

/// Exact expected accumulated weight from every state under a memoryless
/// scheduler, by one linear solve on the induced chain.
pub fn policy_expectation(
    m: &Mdp,
    sched: &MemorylessScheduler,
) -> Result<Vec<Rational>, SchedulerError> {
    if !is_proper(m, sched) {
        return Err(SchedulerError::ImproperScheduler);
    }
    let (e, _) = policy_moment_systems(m, sched, false);
    Ok(e)
}

/// Exact expectation and second moment of the accumulated weight from every
/// state under a memoryless scheduler.
pub fn policy_moments(
    m: &Mdp,
    sched: &MemorylessScheduler,
) -> Result<(Vec<Rational>, Vec<Rational>), SchedulerError> {
    if !is_proper(m, sched) {
        return Err(SchedulerError::ImproperScheduler);
    }
    let (e, q) = policy_moment_systems(m, sched, true);
    Ok((e, q.unwrap()))
}

/// Moments of the accumulated weight from init under a memoryless scheduler.
pub fn memoryless_moments(
    m: &Mdp,
    sched: &MemorylessScheduler,
) -> Result<MomentPair, SchedulerError> {
    let (e, q) = policy_moments(m, sched)?;
    let init = m.init();
    let variance = &q[init] - &e[init] * &e[init];
    Ok(MomentPair::new(e[init].clone(), variance))
}

fn policy_moment_systems(
    m: &Mdp,
    sched: &MemorylessScheduler,
    with_second: bool,
) -> (Vec<Rational>, Option<Vec<Rational>>) {
    let n = m.num_states();
    let goal = m.goal();
    let non_goal: Vec<usize> = (0..n).filter(|&s| s != goal).collect();
    let idx: BTreeMap<usize, usize> = non_goal.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    // (I - P) e = w_bar over non-goal states.
    let mut sys = LinearSystem::zero(non_goal.len());
    for (i, &s) in non_goal.iter().enumerate() {
        *sys.coefficient_mut(i, i) += Rational::one();
        for (a, pa) in sched.dist(s).unwrap() {
            let act = &m.actions(s)[*a];
            *sys.rhs_mut(i) += pa * rational_int(act.weight);
            for (t, pt) in &act.successors {
                if *t != goal {
                    *sys.coefficient_mut(i, idx[t]) -= pa * pt;
                }
            }
        }
    }
    let e_small = solve_linear_system(&sys).expect("proper scheduler has nonsingular system");
    let mut e = vec![Rational::zero(); n];
    for (i, &s) in non_goal.iter().enumerate() {
        e[s] = e_small[i].clone();
    }
    if !with_second {
        return (e, None);
    }

    // Same matrix, new right-hand side:
    // q_s = sum_a D(a) sum_t P(s,a,t) (w_a^2 + 2 w_a e_t + q_t).
    let mut sys2 = sys;
    for (i, &s) in non_goal.iter().enumerate() {
        let mut rhs = Rational::zero();
        for (a, pa) in sched.dist(s).unwrap() {
            let act = &m.actions(s)[*a];
            let w = rational_int(act.weight);
            for (t, pt) in &act.successors {
                rhs += pa * pt * (&w * &w + rational_int(2) * &w * &e[*t]);
            }
        }
        *sys2.rhs_mut(i) = rhs;
    }
    let q_small = solve_linear_system(&sys2).expect("second-moment system is nonsingular");
    let mut q = vec![Rational::zero(); n];
    for (i, &s) in non_goal.iter().enumerate() {
        q[s] = q_small[i].clone();
    }
    (e, Some(q))
}

/// Configuration for [`simulate`].
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub samples: u64,
    pub seed: u64,
    /// Upper bound on worker threads; the result is identical for any value.
    pub jobs: usize,
    /// A single run exceeding this many steps aborts the simulation: the
    /// model is then operating close to an end component.
    pub step_limit: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            samples: 10_000,
            seed: 0,
            jobs: 1,
            step_limit: 1_000_000,
        }
    }
}

/// Empirical summary of simulated accumulated weights. Exact sample mean and
/// (population) variance; the histogram maps weight to occurrence count.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub rng_id: &'static str,
    pub samples: u64,
    pub seed: u64,
    pub mean: Rational,
    pub variance: Rational,
    pub min: i64,
    pub max: i64,
    pub histogram: BTreeMap<i64, u64>,
}

const CHUNK: u64 = 4096;

/// Seeded Monte Carlo estimate of the accumulated-weight distribution.
///
/// Deterministic for a fixed seed and independent of the worker count: the
/// sample space is split into fixed-size chunks, chunk `i` draws from the
/// generator stream `i`, and chunk summaries merge commutatively.
pub fn simulate(
    m: &Mdp,
    sched: &WeightBasedScheduler,
    config: &SimulationConfig,
) -> Result<SimulationSummary, SchedulerError> {
    assert!(config.samples >= 1, "need at least one sample");
    if m.has_negative_weight() {
        return Err(SchedulerError::NegativeWeight);
    }

    let chunks = config.samples.div_ceil(CHUNK);
    let workers = config.jobs.max(1).min(chunks as usize);
    let next = AtomicU64::new(0);

    let run_chunk = |chunk: u64| -> Result<ChunkStats, SchedulerError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(chunk);
        let lo = chunk * CHUNK;
        let hi = (lo + CHUNK).min(config.samples);
        let mut stats = ChunkStats::default();
        for _ in lo..hi {
            let w = walk(m, sched, &mut rng, config.step_limit)?;
            stats.record(w);
        }
        Ok(stats)
    };

    let merged: Result<ChunkStats, SchedulerError> = if workers <= 1 {
        let mut acc = ChunkStats::default();
        (0..chunks).try_for_each(|c| run_chunk(c).map(|s| acc.merge(s)))?;
        Ok(acc)
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(|| {
                        let mut acc = ChunkStats::default();
                        loop {
                            let c = next.fetch_add(1, Ordering::Relaxed);
                            if c >= chunks {
                                return Ok(acc);
                            }
                            acc.merge(run_chunk(c)?);
                        }
                    })
                })
                .collect();
            let mut acc = ChunkStats::default();
            for h in handles {
                acc.merge(h.join().expect("simulation worker panicked")?);
            }
            Ok(acc)
        })
    };
    let stats = merged?;

    let n = rational_int(config.samples as i64);
    let mean = Rational::new(BigInt::from(stats.sum), BigInt::from(1)) / &n;
    let second = Rational::new(BigInt::from(stats.sum_sq), BigInt::from(1)) / &n;
    let variance = second - &mean * &mean;
    Ok(SimulationSummary {
        rng_id: RNG_ID,
        samples: config.samples,
        seed: config.seed,
        mean,
        variance,
        min: stats.min,
        max: stats.max,
        histogram: stats.histogram,
    })
}

#[derive(Debug)]
struct ChunkStats {
    sum: i128,
    sum_sq: i128,
    min: i64,
    max: i64,
    histogram: BTreeMap<i64, u64>,
}

impl Default for ChunkStats {
    fn default() -> Self {
        ChunkStats {
            sum: 0,
            sum_sq: 0,
            min: i64::MAX,
            max: i64::MIN,
            histogram: BTreeMap::new(),
        }
    }
}

impl ChunkStats {
    fn record(&mut self, w: i64) {
        self.sum += i128::from(w);
        self.sum_sq += i128::from(w) * i128::from(w);
        self.min = self.min.min(w);
        self.max = self.max.max(w);
        *self.histogram.entry(w).or_insert(0) += 1;
    }

    fn merge(&mut self, other: ChunkStats) {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        for (w, c) in other.histogram {
            *self.histogram.entry(w).or_insert(0) += c;
        }
    }
}

/// One run from init to goal; returns the accumulated weight.
fn walk(
    m: &Mdp,
    sched: &WeightBasedScheduler,
    rng: &mut ChaCha8Rng,
    step_limit: u64,
) -> Result<i64, SchedulerError> {
    let mut state = m.init();
    let mut weight: u64 = 0;
    let mut steps = 0u64;
    while state != m.goal() {
        if steps >= step_limit {
            return Err(SchedulerError::StepLimitExceeded(step_limit));
        }
        steps += 1;
        let dist = sched.choice_at(state, weight).unwrap();
        let a = sample_index(rng, dist.iter().map(|(a, p)| (*a, p)));
        let act = &m.actions(state)[a];
        weight += act.weight as u64;
        state = sample_index(rng, act.successors.iter().map(|(t, p)| (*t, p)));
    }
    Ok(weight as i64)
}

/// Draws from an exact rational distribution by sampling a uniform integer
/// below the common denominator. No floating point is involved.
fn sample_index<'a>(
    rng: &mut ChaCha8Rng,
    items: impl Iterator<Item = (usize, &'a Rational)> + Clone,
) -> usize {
    let mut pick = items.clone();
    let first = pick.next().expect("distribution is non-empty");
    if pick.next().is_none() {
        return first.0;
    }
    let denom = items
        .clone()
        .fold(BigInt::one(), |acc, (_, p)| num::integer::lcm(acc, p.denom().clone()));
    let draw = rng.gen_bigint_range(&BigInt::zero(), &denom);
    let mut acc = BigInt::zero();
    let mut last = first.0;
    for (i, p) in items {
        acc += p.numer() * (&denom / p.denom());
        last = i;
        if draw < acc {
            return i;
        }
    }
    last
}
