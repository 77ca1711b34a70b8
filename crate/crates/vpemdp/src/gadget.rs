//! Generator for exact-weight reachability reduction instances.
//!
//! Given a model in which every scheduler is proper and a target value `T`,
//! the construction adds a fresh initial state that moves with probability
//! 1/2 into the original model and with probability 1/2 into a detour that
//! pays exactly `T`. With the penalty `lambda = 18 * f(n, W, eps)` the
//! maximal VPE of the instance reaches `theta = T` iff the original model
//! admits a scheduler accumulating exactly `T` with probability 1: any other
//! behavior leaves variance on the table that the large penalty cannot
//! forgive. Deciding the instance is delegated to the VPE solver; this module
//! only builds it.

use num::{One, Signed};
use thiserror::Error;

use crate::model::{find_end_components, Action, Mdp};
use crate::numeric::{rational_int, ratio, Rational};

#[derive(Debug, Error, PartialEq)]
pub enum GadgetError {
    #[error("eps must lie in (0, 1]")]
    EpsOutOfRange,
    #[error("input model has an end component; every scheduler must be proper")]
    EndComponentPresent,
    #[error("input model has a negative weight")]
    NegativeWeight,
}

/// A constructed reduction instance: the extended model plus the penalty and
/// threshold that make the VPE query equivalent to the exact-weight query.
#[derive(Debug, Clone)]
pub struct GadgetInstance {
    pub mdp: Mdp,
    pub lambda: Rational,
    pub theta: Rational,
    pub target: u64,
    pub f_value: Rational,
}

/// The expectation bound `f(n, W, eps) = n W (n/eps + (1-eps)/eps^2)`.
pub fn f_bound(n: usize, max_weight: u64, eps: &Rational) -> Result<Rational, GadgetError> {
    assert!(n >= 1);
    if !eps.is_positive() || eps > &Rational::one() {
        return Err(GadgetError::EpsOutOfRange);
    }
    let n = rational_int(n as i64);
    let w = rational_int(max_weight as i64);
    let eps_sq = eps * eps;
    Ok(&n * w * (&n / eps + (Rational::one() - eps) / eps_sq))
}

/// Builds the reduction instance for `target`. The constants `n`, `W` and
/// `eps` are measured on the extended model, which is the one the bound
/// applies to.
pub fn build_gadget(m: &Mdp, target: u64) -> Result<GadgetInstance, GadgetError> {
    if m.has_negative_weight() {
        return Err(GadgetError::NegativeWeight);
    }
    if !find_end_components(m).is_empty() {
        return Err(GadgetError::EndComponentPresent);
    }

    let fresh = |base: &str| -> String {
        let mut name = base.to_string();
        while m.state_index(&name).is_some() {
            name.push('_');
        }
        name
    };
    let entry = fresh("iota");
    let detour = fresh("iota_p");

    let mut states = vec![entry, detour];
    states.extend((0..m.num_states()).map(|s| m.state_name(s).to_string()));
    let shift = 2usize;

    let mut actions: Vec<Vec<Action>> = Vec::with_capacity(states.len());
    actions.push(vec![Action {
        label: "branch".into(),
        weight: 0,
        successors: vec![(m.init() + shift, ratio(1, 2)), (1, ratio(1, 2))],
    }]);
    actions.push(vec![Action {
        label: "payout".into(),
        weight: target as i64,
        successors: vec![(m.goal() + shift, Rational::one())],
    }]);
    for s in 0..m.num_states() {
        actions.push(
            m.actions(s)
                .iter()
                .map(|a| Action {
                    label: a.label.clone(),
                    weight: a.weight,
                    successors: a
                        .successors
                        .iter()
                        .map(|(t, p)| (t + shift, p.clone()))
                        .collect(),
                })
                .collect(),
        );
    }

    let mdp = Mdp::from_parts(states, 0, m.goal() + shift, actions)
        .expect("gadget construction preserves validity");

    let f_value = f_bound(
        mdp.num_states(),
        mdp.max_weight() as u64,
        &mdp.min_transition_prob(),
    )?;
    let lambda = rational_int(18) * &f_value;
    Ok(GadgetInstance {
        mdp,
        lambda,
        theta: rational_int(target as i64),
        target,
        f_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expectation::Direction;
    use crate::numeric::rational_int;
    use crate::vpe::{threshold, ThresholdOutcome, VpeOptions};

    #[test]
    fn f_bound_examples() {
        assert_eq!(f_bound(2, 1, &ratio(1, 2)).unwrap(), rational_int(12));
        assert_eq!(f_bound(1, 0, &Rational::one()).unwrap(), rational_int(0));
        assert_eq!(f_bound(3, 2, &ratio(1, 3)).unwrap(), rational_int(90));
        assert_eq!(f_bound(2, 1, &rational_int(2)), Err(GadgetError::EpsOutOfRange));
    }

    #[test]
    fn gadget_round_trips_and_measures_the_extended_model() {
        let doc = "states p q goal\ninit p\ngoal goal\n\
                   trans p a 1 q 1\ntrans q b 1 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        let g = build_gadget(&m, 2).unwrap();
        assert_eq!(g.mdp.num_states(), 5);
        assert_eq!(g.mdp.state_name(g.mdp.init()), "iota");
        // n = 5, W = 2, eps = 1/2: f = 10 * (10 + 2) = 120, lambda = 2160.
        assert_eq!(g.f_value, rational_int(120));
        assert_eq!(g.lambda, rational_int(2160));
        assert_eq!(g.theta, rational_int(2));
        let reparsed = Mdp::parse(&g.mdp.serialize()).unwrap();
        assert_eq!(g.mdp, reparsed);
    }

    #[test]
    fn fresh_names_avoid_collisions() {
        let doc = "states iota goal\ninit iota\ngoal goal\ntrans iota a 1 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        let g = build_gadget(&m, 1).unwrap();
        assert_eq!(g.mdp.state_name(0), "iota_");
        assert!(g.mdp.state_index("iota").is_some());
    }

    #[test]
    fn zero_target_gives_a_zero_weight_detour() {
        let doc = "states p goal\ninit p\ngoal goal\ntrans p a 1 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        let g = build_gadget(&m, 0).unwrap();
        let detour = g.mdp.state_index("iota_p").unwrap();
        assert_eq!(g.mdp.actions(detour)[0].weight, 0);
    }

    #[test]
    fn sure_target_holds_and_impossible_target_does_not() {
        // A chain paying exactly 2: the gadget threshold holds.
        let doc = "states p q goal\ninit p\ngoal goal\n\
                   trans p a 1 q 1\ntrans q b 1 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        let g = build_gadget(&m, 2).unwrap();
        let opts = VpeOptions {
            bound: Some(1),
            direction: Direction::Maximize,
            ..VpeOptions::default()
        };
        let (outcome, report) = threshold(&g.mdp, &g.lambda, &g.theta, &opts).unwrap();
        assert_eq!(outcome, ThresholdOutcome::Holds);
        assert_eq!(report.value, rational_int(2));

        // Only weights 1 and 3 are achievable: 2 is out of reach.
        let doc = "states p goal\ninit p\ngoal goal\n\
                   trans p a 1 goal 1\ntrans p b 3 goal 1\n";
        let m = Mdp::parse(doc).unwrap();
        let g = build_gadget(&m, 2).unwrap();
        let opts = VpeOptions {
            bound: Some(4),
            direction: Direction::Maximize,
            ..VpeOptions::default()
        };
        let (outcome, _) = threshold(&g.mdp, &g.lambda, &g.theta, &opts).unwrap();
        assert_ne!(outcome, ThresholdOutcome::Holds);
    }
}
