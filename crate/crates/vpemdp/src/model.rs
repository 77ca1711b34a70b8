//! The MDP data model, its textual format, structural validation and
//! end-component analysis.
//!
//! # File format
//!
//! UTF-8, line based; `#` starts a comment, blank lines are ignored:
//!
//! ```text
//! states s_init a b c d goal
//! init s_init
//! goal goal
//! trans s_init alpha 0 a 1
//! trans b tau 1 goal 2/3 b 1/3
//! ```
//!
//! `trans <src> <action> <weight> (<dst> <prob>)+` declares one state-action
//! pair; duplicate `(src, action)` pairs are errors. Probabilities are
//! rational tokens (`p` or `p/q`), must be positive and must sum to exactly 1
//! per line. The `goal` state is the unique state without actions, every
//! state is reachable from `init`, and `goal` is reachable from every state.
//!
//! State and action identifiers are case-sensitive tokens; their order in the
//! file fixes the tie-breaking order used by all solvers.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::numeric::{
    format_rational, parse_rational, rational_int, solve_linear_system, LinearSystem, Rational,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid model{}: {message}", fmt_line(.line))]
    Validation { line: Option<usize>, message: String },
}

fn fmt_line(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!(" (line {l})"),
        None => String::new(),
    }
}

impl ModelError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        ModelError::Parse {
            line,
            message: message.into(),
        }
    }

    fn invalid(line: Option<usize>, message: impl Into<String>) -> Self {
        ModelError::Validation {
            line,
            message: message.into(),
        }
    }
}

/// One enabled action: a label, an integer weight and an exact probability
/// distribution over successor states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub label: String,
    pub weight: i64,
    pub successors: Vec<(usize, Rational)>,
}

/// A finite MDP with a distinguished initial state and a unique trap state
/// `goal`. Immutable after construction; all analyses are read-only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mdp {
    states: Vec<String>,
    init: usize,
    goal: usize,
    actions: Vec<Vec<Action>>,
}

impl Mdp {
    /// Parses and validates a model document. Parsing and validation are one
    /// step: the returned model always satisfies every structural invariant.
    pub fn parse(text: &str) -> Result<Mdp, ModelError> {
        let mut states: Option<(usize, Vec<String>)> = None;
        let mut init: Option<(usize, String)> = None;
        let mut goal: Option<(usize, String)> = None;
        let mut trans: Vec<(usize, Vec<String>)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.split_once('#') {
                Some((before, _)) => before,
                None => raw,
            };
            let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if tokens.is_empty() {
                continue;
            }
            match tokens[0].as_str() {
                "states" => {
                    if states.is_some() {
                        return Err(ModelError::parse(line_no, "duplicate `states` line"));
                    }
                    if tokens.len() < 2 {
                        return Err(ModelError::parse(line_no, "`states` needs at least one id"));
                    }
                    states = Some((line_no, tokens[1..].to_vec()));
                }
                "init" | "goal" => {
                    let slot = if tokens[0] == "init" { &mut init } else { &mut goal };
                    if slot.is_some() {
                        return Err(ModelError::parse(
                            line_no,
                            format!("duplicate `{}` line", tokens[0]),
                        ));
                    }
                    if tokens.len() != 2 {
                        return Err(ModelError::parse(
                            line_no,
                            format!("`{}` expects exactly one state id", tokens[0]),
                        ));
                    }
                    *slot = Some((line_no, tokens[1].clone()));
                }
                "trans" => trans.push((line_no, tokens)),
                other => {
                    return Err(ModelError::parse(
                        line_no,
                        format!("unknown directive `{other}`"),
                    ))
                }
            }
        }

        let (states_line, state_names) =
            states.ok_or_else(|| ModelError::parse(0, "missing `states` line"))?;
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, name) in state_names.iter().enumerate() {
            if index.insert(name.as_str(), i).is_some() {
                return Err(ModelError::parse(
                    states_line,
                    format!("duplicate state id `{name}`"),
                ));
            }
        }
        let lookup = |line: usize, name: &str| -> Result<usize, ModelError> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| ModelError::parse(line, format!("undeclared state `{name}`")))
        };

        let (init_line, init_name) =
            init.ok_or_else(|| ModelError::parse(0, "missing `init` line"))?;
        let (goal_line, goal_name) =
            goal.ok_or_else(|| ModelError::parse(0, "missing `goal` line"))?;
        let init = lookup(init_line, &init_name)?;
        let goal = lookup(goal_line, &goal_name)?;

        let mut actions: Vec<Vec<Action>> = vec![Vec::new(); state_names.len()];
        let mut action_lines: Vec<Vec<usize>> = vec![Vec::new(); state_names.len()];
        for (line_no, tokens) in trans {
            if tokens.len() < 6 || tokens.len() % 2 != 0 {
                return Err(ModelError::parse(
                    line_no,
                    "`trans` expects `trans <src> <action> <weight> (<dst> <prob>)+`",
                ));
            }
            let src = lookup(line_no, &tokens[1])?;
            let label = tokens[2].clone();
            let weight: i64 = tokens[3].parse().map_err(|_| {
                ModelError::parse(line_no, format!("bad integer weight `{}`", tokens[3]))
            })?;
            if actions[src].iter().any(|a| a.label == label) {
                return Err(ModelError::parse(
                    line_no,
                    format!("duplicate action `{}` at state `{}`", label, tokens[1]),
                ));
            }
            let mut successors = Vec::new();
            let mut seen = BTreeSet::new();
            let mut total = Rational::zero();
            for pair in tokens[4..].chunks(2) {
                let dst = lookup(line_no, &pair[0])?;
                if !seen.insert(dst) {
                    return Err(ModelError::parse(
                        line_no,
                        format!("duplicate successor `{}`", pair[0]),
                    ));
                }
                let prob = parse_rational(&pair[1])
                    .map_err(|e| ModelError::parse(line_no, e.to_string()))?;
                if !prob.is_positive() {
                    return Err(ModelError::invalid(
                        Some(line_no),
                        format!("probability `{}` is not positive", pair[1]),
                    ));
                }
                total += &prob;
                successors.push((dst, prob));
            }
            if !total.is_one() {
                return Err(ModelError::invalid(
                    Some(line_no),
                    format!(
                        "probabilities of action `{label}` at `{}` sum to {}, not 1",
                        tokens[1],
                        format_rational(&total)
                    ),
                ));
            }
            actions[src].push(Action {
                label,
                weight,
                successors,
            });
            action_lines[src].push(line_no);
        }

        let mdp = Mdp {
            states: state_names,
            init,
            goal,
            actions,
        };
        mdp.validate(&action_lines)?;
        Ok(mdp)
    }

    fn validate(&self, action_lines: &[Vec<usize>]) -> Result<(), ModelError> {
        if self.init == self.goal {
            return Err(ModelError::invalid(
                None,
                "`init` and `goal` must be distinct states",
            ));
        }
        if let Some(line) = action_lines[self.goal].first() {
            return Err(ModelError::invalid(
                Some(*line),
                format!("goal state `{}` must not have actions", self.states[self.goal]),
            ));
        }
        for s in 0..self.states.len() {
            if s != self.goal && self.actions[s].is_empty() {
                return Err(ModelError::invalid(
                    None,
                    format!(
                        "state `{}` is a second trap state: only `{}` may lack actions",
                        self.states[s], self.states[self.goal]
                    ),
                ));
            }
        }

        // Reachability: every state from init, goal from every state.
        let forward = self.reachable_from(self.init);
        if let Some(s) = (0..self.states.len()).find(|s| !forward[*s]) {
            return Err(ModelError::invalid(
                None,
                format!("state `{}` is unreachable from init", self.states[s]),
            ));
        }
        let backward = self.co_reachable(self.goal);
        if let Some(s) = (0..self.states.len()).find(|s| !backward[*s]) {
            return Err(ModelError::invalid(
                None,
                format!("goal is unreachable from state `{}`", self.states[s]),
            ));
        }
        Ok(())
    }

    /// Builds a model directly from parts, running the same validation as the
    /// parser (without line diagnostics).
    pub fn from_parts(
        states: Vec<String>,
        init: usize,
        goal: usize,
        actions: Vec<Vec<Action>>,
    ) -> Result<Mdp, ModelError> {
        let doc = Mdp {
            states,
            init,
            goal,
            actions,
        }
        .serialize();
        Mdp::parse(&doc)
    }

    /// Internal constructor for derived models (pruned sub-MDPs) that keep all
    /// states but may leave some unreachable from init. Still checks the trap
    /// and goal-reachability invariants.
    pub(crate) fn restricted(&self, keep: &[Vec<usize>]) -> Mdp {
        let actions = self
            .actions
            .iter()
            .enumerate()
            .map(|(s, acts)| {
                keep[s]
                    .iter()
                    .map(|&a| acts[a].clone())
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        let m = Mdp {
            states: self.states.clone(),
            init: self.init,
            goal: self.goal,
            actions,
        };
        debug_assert!(
            (0..m.states.len()).all(|s| s == m.goal || !m.actions[s].is_empty()),
            "restriction removed all actions of a state"
        );
        debug_assert!(m.co_reachable(m.goal).iter().all(|&b| b));
        m
    }

    /// Canonical textual form; `parse(serialize(m))` equals `m` structurally.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("states");
        for name in &self.states {
            let _ = write!(out, " {name}");
        }
        out.push('\n');
        let _ = writeln!(out, "init {}", self.states[self.init]);
        let _ = writeln!(out, "goal {}", self.states[self.goal]);
        for (s, acts) in self.actions.iter().enumerate() {
            for act in acts {
                let _ = write!(out, "trans {} {} {}", self.states[s], act.label, act.weight);
                for (t, p) in &act.successors {
                    let _ = write!(out, " {} {}", self.states[*t], format_rational(p));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, s: usize) -> &str {
        &self.states[s]
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|n| n == name)
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    pub fn actions(&self, s: usize) -> &[Action] {
        &self.actions[s]
    }

    pub fn action_index(&self, s: usize, label: &str) -> Option<usize> {
        self.actions[s].iter().position(|a| a.label == label)
    }

    pub fn num_actions(&self) -> usize {
        self.actions.iter().map(Vec::len).sum()
    }

    /// Largest weight occurring in the model (the `W` of the saturation
    /// bounds). Weights are non-negative in every context where this is used.
    pub fn max_weight(&self) -> i64 {
        self.actions
            .iter()
            .flatten()
            .map(|a| a.weight)
            .max()
            .unwrap_or(0)
    }

    pub fn has_negative_weight(&self) -> bool {
        self.actions.iter().flatten().any(|a| a.weight < 0)
    }

    /// Smallest positive transition probability in the model.
    pub fn min_transition_prob(&self) -> Rational {
        self.actions
            .iter()
            .flatten()
            .flat_map(|a| a.successors.iter().map(|(_, p)| p.clone()))
            .min()
            .expect("model has at least one transition")
    }

    /// Copy of the model with all weights multiplied by -1.
    pub fn with_negated_weights(&self) -> Mdp {
        let mut m = self.clone();
        for acts in &mut m.actions {
            for a in acts {
                a.weight = -a.weight;
            }
        }
        m
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.states.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(s) = queue.pop_front() {
            for act in &self.actions[s] {
                for (t, _) in &act.successors {
                    if !seen[*t] {
                        seen[*t] = true;
                        queue.push_back(*t);
                    }
                }
            }
        }
        seen
    }

    fn co_reachable(&self, target: usize) -> Vec<bool> {
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); self.states.len()];
        for (s, acts) in self.actions.iter().enumerate() {
            for act in acts {
                for (t, _) in &act.successors {
                    preds[*t].push(s);
                }
            }
        }
        let mut seen = vec![false; self.states.len()];
        let mut queue = VecDeque::from([target]);
        seen[target] = true;
        while let Some(s) = queue.pop_front() {
            for &p in &preds[s] {
                if !seen[p] {
                    seen[p] = true;
                    queue.push_back(p);
                }
            }
        }
        seen
    }
}

/// A (maximal) end component: a closed, strongly connected sub-MDP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndComponent {
    pub states: BTreeSet<usize>,
    /// Retained action indices per member state, ascending and non-empty.
    pub actions: BTreeMap<usize, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcKind {
    /// Every cycle inside the component has accumulated weight 0.
    ZeroEc,
    NegativeMeanPayoff,
    NonNegativeMeanPayoff,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcClass {
    pub kind: EcKind,
    pub max_mean_payoff: Rational,
}

/// Computes the maximal end components of the model (never containing goal,
/// which has no actions). Returns the empty list iff the model is EC-free.
pub fn find_end_components(m: &Mdp) -> Vec<EndComponent> {
    let n = m.num_states();
    let mut alive: Vec<Vec<usize>> = (0..n).map(|s| (0..m.actions(s).len()).collect()).collect();
    let mut member: Vec<bool> = (0..n).map(|s| !m.actions(s).is_empty()).collect();

    loop {
        // Graph of the candidate sub-MDP under the surviving actions.
        let adj: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                if !member[s] {
                    return Vec::new();
                }
                alive[s]
                    .iter()
                    .flat_map(|&a| m.actions(s)[a].successors.iter().map(|(t, _)| *t))
                    .filter(|t| member[*t])
                    .collect()
            })
            .collect();
        let comp = scc_ids(&adj, &member);

        let mut changed = false;
        for s in 0..n {
            if !member[s] {
                continue;
            }
            let before = alive[s].len();
            alive[s].retain(|&a| {
                m.actions(s)[a]
                    .successors
                    .iter()
                    .all(|(t, _)| member[*t] && comp[*t] == comp[s])
            });
            if alive[s].len() != before {
                changed = true;
            }
            if alive[s].is_empty() {
                member[s] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // Group members by component; keep components that are genuinely closed
    // and strongly connected (singletons need a retained self-loop).
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            if !member[s] {
                return Vec::new();
            }
            alive[s]
                .iter()
                .flat_map(|&a| m.actions(s)[a].successors.iter().map(|(t, _)| *t))
                .collect()
        })
        .collect();
    let comp = scc_ids(&adj, &member);
    let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for s in 0..n {
        if member[s] {
            groups.entry(comp[s]).or_default().insert(s);
        }
    }
    let mut out = Vec::new();
    for states in groups.into_values() {
        if states.len() == 1 {
            let s = *states.iter().next().unwrap();
            let loops = alive[s]
                .iter()
                .copied()
                .filter(|&a| m.actions(s)[a].successors.iter().all(|(t, _)| *t == s))
                .collect::<Vec<_>>();
            if loops.is_empty() {
                continue;
            }
            out.push(EndComponent {
                states,
                actions: BTreeMap::from([(s, loops)]),
            });
        } else {
            let actions = states
                .iter()
                .map(|&s| (s, alive[s].clone()))
                .collect::<BTreeMap<_, _>>();
            out.push(EndComponent { states, actions });
        }
    }
    out
}

/// Strongly connected component ids over the member states (Kosaraju).
fn scc_ids(adj: &[Vec<usize>], member: &[bool]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if !member[start] || seen[start] {
            continue;
        }
        // Iterative post-order DFS.
        let mut stack = vec![(start, 0usize)];
        seen[start] = true;
        while let Some(&mut (s, ref mut i)) = stack.last_mut() {
            if *i < adj[s].len() {
                let t = adj[s][*i];
                *i += 1;
                if member[t] && !seen[t] {
                    seen[t] = true;
                    stack.push((t, 0));
                }
            } else {
                order.push(s);
                stack.pop();
            }
        }
    }

    let mut radj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, ts) in adj.iter().enumerate() {
        for &t in ts {
            if member[s] && member[t] {
                radj[t].push(s);
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for &start in order.iter().rev() {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = next;
        while let Some(s) = stack.pop() {
            for &t in &radj[s] {
                if comp[t] == usize::MAX {
                    comp[t] = next;
                    stack.push(t);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Classifies an end component returned by [`find_end_components`].
///
/// Zero-ness is decided by a potential assignment over a spanning traversal;
/// otherwise the maximal mean payoff is computed exactly by Howard-style
/// policy iteration with exact gain/bias solves and classified by its sign.
pub fn classify_ec(m: &Mdp, ec: &EndComponent) -> EcClass {
    if is_zero_ec(m, ec) {
        return EcClass {
            kind: EcKind::ZeroEc,
            max_mean_payoff: Rational::zero(),
        };
    }
    let mp = max_mean_payoff(m, ec);
    let kind = if mp.is_negative() {
        EcKind::NegativeMeanPayoff
    } else {
        EcKind::NonNegativeMeanPayoff
    };
    EcClass {
        kind,
        max_mean_payoff: mp,
    }
}

/// All cycles have weight zero iff a potential exists with
/// `phi(s) + wgt(s, a) = phi(t)` for every internal transition.
fn is_zero_ec(m: &Mdp, ec: &EndComponent) -> bool {
    let root = *ec.states.iter().next().unwrap();
    let mut phi: BTreeMap<usize, i128> = BTreeMap::from([(root, 0)]);
    let mut queue = VecDeque::from([root]);
    while let Some(s) = queue.pop_front() {
        for &a in &ec.actions[&s] {
            let act = &m.actions(s)[a];
            for (t, _) in &act.successors {
                let expected = phi[&s] + i128::from(act.weight);
                match phi.get(t) {
                    Some(&have) if have != expected => return false,
                    Some(_) => {}
                    None => {
                        phi.insert(*t, expected);
                        queue.push_back(*t);
                    }
                }
            }
        }
    }
    true
}

/// Weight and successor distribution of one action, over local indices.
type LocalAction = (i64, Vec<(usize, Rational)>);

/// Exact maximal mean payoff of the sub-MDP spanned by the component.
fn max_mean_payoff(m: &Mdp, ec: &EndComponent) -> Rational {
    let states: Vec<usize> = ec.states.iter().copied().collect();
    let local: HashMap<usize, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let n = states.len();
    // Local action table: (weight, successor distribution over local indices).
    let acts: Vec<Vec<LocalAction>> = states
        .iter()
        .map(|&s| {
            ec.actions[&s]
                .iter()
                .map(|&a| {
                    let act = &m.actions(s)[a];
                    let succ = act
                        .successors
                        .iter()
                        .map(|(t, p)| (local[t], p.clone()))
                        .collect();
                    (act.weight, succ)
                })
                .collect()
        })
        .collect();

    let mut policy: Vec<usize> = vec![0; n];
    for round in 0.. {
        assert!(round < 10_000, "mean-payoff policy iteration did not converge");
        let (gain, bias) = evaluate_gain_bias(n, &acts, &policy);
        let mut changed = false;
        for s in 0..n {
            let proj = |a: usize| -> Rational {
                acts[s][a]
                    .1
                    .iter()
                    .map(|(t, p)| p * &gain[*t])
                    .sum::<Rational>()
            };
            let cur_gain = proj(policy[s]);
            let best_gain = (0..acts[s].len()).map(&proj).max().unwrap();
            if best_gain > cur_gain {
                policy[s] = (0..acts[s].len()).find(|&a| proj(a) == best_gain).unwrap();
                changed = true;
                continue;
            }
            // Second stage among gain-optimal actions.
            let value = |a: usize| -> Rational {
                let (w, ref succ) = acts[s][a];
                rational_int(w) - &gain[s]
                    + succ.iter().map(|(t, p)| p * &bias[*t]).sum::<Rational>()
            };
            let candidates: Vec<usize> =
                (0..acts[s].len()).filter(|&a| proj(a) == best_gain).collect();
            let cur = value(policy[s]);
            let best = candidates.iter().map(|&a| value(a)).max().unwrap();
            if best > cur {
                policy[s] = candidates.into_iter().find(|&a| value(a) == best).unwrap();
                changed = true;
            }
        }
        if !changed {
            let top = gain.iter().max().unwrap().clone();
            debug_assert!(
                gain.iter().all(|g| *g == top),
                "gain must be constant inside a strongly connected component"
            );
            return top;
        }
    }
    unreachable!()
}

/// Multichain gain/bias evaluation of a fixed policy: stationary analysis on
/// each bottom SCC, then linear solves for transient gains and all biases.
fn evaluate_gain_bias(
    n: usize,
    acts: &[Vec<LocalAction>],
    policy: &[usize],
) -> (Vec<Rational>, Vec<Rational>) {
    let row = |s: usize| -> &[(usize, Rational)] { &acts[s][policy[s]].1 };
    let reward = |s: usize| -> Rational { rational_int(acts[s][policy[s]].0) };

    let adj: Vec<Vec<usize>> = (0..n)
        .map(|s| row(s).iter().map(|(t, _)| *t).collect())
        .collect();
    let member = vec![true; n];
    let comp = scc_ids(&adj, &member);
    let ncomp = comp.iter().max().unwrap() + 1;
    let mut leaves = vec![false; ncomp];
    for (s, ts) in adj.iter().enumerate() {
        for &t in ts {
            if comp[t] != comp[s] {
                leaves[comp[s]] = true;
            }
        }
    }

    let mut gain = vec![Rational::zero(); n];
    let mut is_recurrent = vec![false; n];
    let mut reference = Vec::new();
    for c in 0..ncomp {
        if leaves[c] {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|s| comp[*s] == c).collect();
        let idx: HashMap<usize, usize> =
            members.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let k = members.len();
        // Stationary distribution: balance equations with one row replaced by
        // the normalization sum(pi) = 1.
        let mut sys = LinearSystem::zero(k);
        for j in 0..k {
            *sys.coefficient_mut(0, j) = Rational::one();
        }
        *sys.rhs_mut(0) = Rational::one();
        for i in 1..k {
            *sys.coefficient_mut(i, i) = Rational::one();
        }
        for (j, &t) in members.iter().enumerate() {
            for (u, p) in row(t) {
                let i = idx[u];
                if i != 0 {
                    *sys.coefficient_mut(i, j) -= p;
                }
            }
        }
        let pi = solve_linear_system(&sys).expect("stationary system is nonsingular");
        let g: Rational = members
            .iter()
            .enumerate()
            .map(|(i, &s)| &pi[i] * reward(s))
            .sum();
        for &s in &members {
            gain[s] = g.clone();
            is_recurrent[s] = true;
        }
        reference.push(members[0]);
    }

    // Transient gains: g = P g with recurrent gains as boundary values.
    let transient: Vec<usize> = (0..n).filter(|s| !is_recurrent[*s]).collect();
    if !transient.is_empty() {
        let idx: HashMap<usize, usize> =
            transient.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let k = transient.len();
        let mut sys = LinearSystem::zero(k);
        for (i, &s) in transient.iter().enumerate() {
            *sys.coefficient_mut(i, i) = Rational::one();
            for (t, p) in row(s) {
                if let Some(&j) = idx.get(t) {
                    *sys.coefficient_mut(i, j) -= p;
                } else {
                    *sys.rhs_mut(i) += p * &gain[*t];
                }
            }
        }
        let sol = solve_linear_system(&sys).expect("transient gain system is nonsingular");
        for (i, &s) in transient.iter().enumerate() {
            gain[s] = sol[i].clone();
        }
    }

    // Bias: h = r - g + P h, pinning one reference state per bottom SCC.
    let mut sys = LinearSystem::zero(n);
    for s in 0..n {
        if reference.contains(&s) {
            *sys.coefficient_mut(s, s) = Rational::one();
            continue;
        }
        *sys.coefficient_mut(s, s) = Rational::one();
        for (t, p) in row(s) {
            *sys.coefficient_mut(s, *t) -= p;
        }
        *sys.rhs_mut(s) = reward(s) - &gain[s];
    }
    let bias = solve_linear_system(&sys).expect("bias system is nonsingular");
    (gain, bias)
}
