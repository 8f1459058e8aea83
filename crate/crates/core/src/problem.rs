//! Problem instances: payoff tables, validation, JSON I/O and state relabeling.

use crate::scalar::{one, serde_scalar::Wrapped, Scalar};
use indexmap::IndexMap;
use num::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProblemError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("principal payoff at the target action must be positive in both states")]
    NonPositivePrincipalPayoff,
    #[error("discount factor must lie strictly between 0 and 1")]
    DiscountOutOfRange,
    #[error("prior must lie strictly between 0 and 1")]
    PriorOutOfRange,
    #[error("duplicate action {0:?}")]
    DuplicateAction(String),
    #[error("target action {0:?} is not among the actions")]
    TargetActionMissing(String),
    #[error("no agent payoff given for action {0:?}")]
    MissingAgentPayoff(String),
    #[error("agent payoff given for unknown action {0:?}")]
    UnknownAction(String),
    #[error("at least two actions are required")]
    TooFewActions,
}

impl ProblemError {
    /// Parse failures (as opposed to semantically invalid instances).
    pub fn is_parse(&self) -> bool {
        matches!(self, ProblemError::Parse(_))
    }
}

/// Value at belief `p` of the affine function with endpoint values `f`.
pub fn lin(f: &[Scalar; 2], p: &Scalar) -> Scalar {
    &f[0] + (&f[1] - &f[0]) * p
}

/// A persuasion instance. Beliefs are probabilities of the state `ω₁`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub actions: Vec<String>,
    pub target: usize,
    /// `u(a, ω₀), u(a, ω₁)` per action, in `actions` order.
    pub agent_payoff: Vec<[Scalar; 2]>,
    /// `v(a*, ω₀), v(a*, ω₁)`; the principal gets zero from any other action.
    pub principal_payoff: [Scalar; 2],
    pub discount: Scalar,
    pub prior: Scalar,
    pub relabeled: bool,
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    actions: Vec<String>,
    target_action: String,
    agent_payoff: IndexMap<String, [Wrapped; 2]>,
    principal_payoff: [Wrapped; 2],
    discount: Wrapped,
    prior: Wrapped,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    relabeled: bool,
}

impl Problem {
    /// Builds and validates an instance from `(name, [u0, u1])` rows.
    pub fn new(
        actions: Vec<(&str, [Scalar; 2])>,
        target: &str,
        principal_payoff: [Scalar; 2],
        discount: Scalar,
        prior: Scalar,
    ) -> Result<Problem, ProblemError> {
        let target_idx = actions
            .iter()
            .position(|(n, _)| *n == target)
            .ok_or_else(|| ProblemError::TargetActionMissing(target.to_string()))?;
        let p = Problem {
            actions: actions.iter().map(|(n, _)| n.to_string()).collect(),
            target: target_idx,
            agent_payoff: actions.into_iter().map(|(_, u)| u).collect(),
            principal_payoff,
            discount,
            prior,
            relabeled: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Problem, ProblemError> {
        let file: ProblemFile =
            serde_json::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))?;
        let mut seen = HashSet::new();
        for a in &file.actions {
            if !seen.insert(a.as_str()) {
                return Err(ProblemError::DuplicateAction(a.clone()));
            }
        }
        for k in file.agent_payoff.keys() {
            if !seen.contains(k.as_str()) {
                return Err(ProblemError::UnknownAction(k.clone()));
            }
        }
        let mut agent_payoff = Vec::with_capacity(file.actions.len());
        for a in &file.actions {
            let [u0, u1] = file
                .agent_payoff
                .get(a)
                .ok_or_else(|| ProblemError::MissingAgentPayoff(a.clone()))?
                .clone();
            agent_payoff.push([u0.0, u1.0]);
        }
        let target = file
            .actions
            .iter()
            .position(|a| *a == file.target_action)
            .ok_or_else(|| ProblemError::TargetActionMissing(file.target_action.clone()))?;
        let [v0, v1] = file.principal_payoff;
        let p = Problem {
            actions: file.actions,
            target,
            agent_payoff,
            principal_payoff: [v0.0, v1.0],
            discount: file.discount.0,
            prior: file.prior.0,
            relabeled: file.relabeled,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        let file = ProblemFile {
            actions: self.actions.clone(),
            target_action: self.actions[self.target].clone(),
            agent_payoff: self
                .actions
                .iter()
                .zip(&self.agent_payoff)
                .map(|(a, [u0, u1])| (a.clone(), [Wrapped(u0.clone()), Wrapped(u1.clone())]))
                .collect(),
            principal_payoff: [
                Wrapped(self.principal_payoff[0].clone()),
                Wrapped(self.principal_payoff[1].clone()),
            ],
            discount: Wrapped(self.discount.clone()),
            prior: Wrapped(self.prior.clone()),
            relabeled: self.relabeled,
        };
        serde_json::to_string_pretty(&file).expect("problem serializes")
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.actions.len() < 2 {
            return Err(ProblemError::TooFewActions);
        }
        let mut seen = HashSet::new();
        for a in &self.actions {
            if !seen.insert(a) {
                return Err(ProblemError::DuplicateAction(a.clone()));
            }
        }
        if self.agent_payoff.len() != self.actions.len() {
            return Err(ProblemError::MissingAgentPayoff(
                self.actions.get(self.agent_payoff.len()).cloned().unwrap_or_default(),
            ));
        }
        if self.target >= self.actions.len() {
            return Err(ProblemError::TargetActionMissing(format!("#{}", self.target)));
        }
        if self.principal_payoff.iter().any(|v| !v.is_positive()) {
            return Err(ProblemError::NonPositivePrincipalPayoff);
        }
        if !self.discount.is_positive() || self.discount >= one() {
            return Err(ProblemError::DiscountOutOfRange);
        }
        if !self.prior.is_positive() || self.prior >= one() {
            return Err(ProblemError::PriorOutOfRange);
        }
        Ok(())
    }

    pub fn target_name(&self) -> &str {
        &self.actions[self.target]
    }

    pub fn u(&self, a: usize, p: &Scalar) -> Scalar {
        lin(&self.agent_payoff[a], p)
    }

    pub fn u_star(&self, p: &Scalar) -> Scalar {
        self.u(self.target, p)
    }

    /// Principal's flow payoff from action `a` at belief `p`.
    pub fn v(&self, a: usize, p: &Scalar) -> Scalar {
        if a == self.target {
            lin(&self.principal_payoff, p)
        } else {
            Scalar::zero()
        }
    }

    pub fn v_star(&self, p: &Scalar) -> Scalar {
        lin(&self.principal_payoff, p)
    }

    /// `max_a u(a, ω)` for state index 0 or 1.
    pub fn best_in_state(&self, state: usize) -> Scalar {
        self.agent_payoff.iter().map(|u| u[state].clone()).max().expect("nonempty")
    }

    /// Opportunity cost `m(ω) − u(a*, ω)` of the target action in each state.
    pub fn costs(&self) -> [Scalar; 2] {
        [0, 1].map(|s| self.best_in_state(s) - &self.agent_payoff[self.target][s])
    }

    /// The target action is statically optimal in both states, hence at every belief.
    pub fn is_trivial(&self) -> bool {
        self.costs().iter().all(|c| c.is_zero())
    }

    /// Whether the ω₁ cost ratio is below the ω₀ one, i.e. the states must be swapped.
    pub fn needs_relabel(&self) -> bool {
        let c = self.costs();
        // c1/v1 < c0/v0  <=>  c1*v0 < c0*v1 since v > 0.
        &c[1] * &self.principal_payoff[0] < &c[0] * &self.principal_payoff[1]
    }

    /// Canonical orientation with `(m(1)−u*(1))/v*(1) ≥ (m(0)−u*(0))/v*(0)`; ties keep labels.
    pub fn normalize(&self) -> Problem {
        if !self.needs_relabel() {
            return self.clone();
        }
        let mut out = self.clone();
        for u in &mut out.agent_payoff {
            u.swap(0, 1);
        }
        out.principal_payoff.swap(0, 1);
        out.prior = one() - &self.prior;
        out.relabeled = !self.relabeled;
        out
    }

    /// Belief in the labels of the file this instance came from.
    pub fn original_belief(&self, p: &Scalar) -> Scalar {
        if self.relabeled { one() - p } else { p.clone() }
    }

    pub fn with_prior(&self, prior: Scalar) -> Problem {
        Problem { prior, ..self.clone() }
    }

    pub fn with_discount(&self, discount: Scalar) -> Problem {
        Problem { discount, ..self.clone() }
    }
}

/// Two worked instances used by tests, benches and the CLI.
pub mod examples {
    use super::*;
    use crate::scalar::{int, rat};

    /// Actions a0, a1, a* with u = (1,0), (0,2), (1/2,1/2); v* = (1,1); δ = 1/2; p₀ = 1/3.
    pub fn example1() -> Problem {
        Problem::new(
            vec![
                ("a0", [int(1), int(0)]),
                ("a1", [int(0), int(2)]),
                ("a*", [rat(1, 2), rat(1, 2)]),
            ],
            "a*",
            [int(1), int(1)],
            rat(1, 2),
            rat(1, 3),
        )
        .expect("example 1 is valid")
    }

    /// Two actions: the target a0 with u = (1,0) and a1 with u = (0,1); v* = (1,1); δ = 1/2.
    pub fn example2(prior: Scalar) -> Problem {
        Problem::new(
            vec![("a0", [int(1), int(0)]), ("a1", [int(0), int(1)])],
            "a0",
            [int(1), int(1)],
            rat(1, 2),
            prior,
        )
        .expect("example 2 is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::examples::*;
    use super::*;
    use crate::scalar::{int, rat};

    const EX1: &str = r#"{
        "actions": ["a0", "a1", "a*"],
        "target_action": "a*",
        "agent_payoff": {"a0": [1, 0], "a1": [0, 2], "a*": ["1/2", "1/2"]},
        "principal_payoff": [1, 1],
        "discount": "1/2",
        "prior": "1/3"
    }"#;

    #[test]
    fn parses_example1() {
        let p = Problem::from_json(EX1).unwrap();
        assert_eq!(p, example1());
        assert!(!p.is_trivial());
        assert!(!p.needs_relabel());
        assert_eq!(p.normalize(), p);
    }

    #[test]
    fn json_roundtrip_exact() {
        let p = example1().with_prior(rat(22, 24));
        let back = Problem::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.prior, rat(11, 12));
    }

    #[test]
    fn validation_errors() {
        let e = |edit: &str, with: &str| Problem::from_json(&EX1.replace(edit, with)).unwrap_err();
        assert_eq!(e(r#""discount": "1/2""#, r#""discount": 1"#), ProblemError::DiscountOutOfRange);
        assert_eq!(e(r#""prior": "1/3""#, r#""prior": 0"#), ProblemError::PriorOutOfRange);
        assert_eq!(
            e(r#""principal_payoff": [1, 1]"#, r#""principal_payoff": [0, 1]"#),
            ProblemError::NonPositivePrincipalPayoff
        );
        assert_eq!(
            e(r#"["a0", "a1", "a*"]"#, r#"["a0", "a0", "a*"]"#),
            ProblemError::DuplicateAction("a0".into())
        );
        assert_eq!(
            e(r#""target_action": "a*""#, r#""target_action": "b""#),
            ProblemError::TargetActionMissing("b".into())
        );
        assert!(e(r#""prior": "1/3""#, r#""prior": "3/0""#).is_parse());
        assert!(e(r#""prior": "1/3""#, r#""prior": 0.5"#).is_parse());
    }

    #[test]
    fn dominant_target_is_trivial() {
        let p = Problem::new(
            vec![("a", [int(0), int(0)]), ("t", [int(1), int(1)])],
            "t",
            [int(1), int(1)],
            rat(1, 2),
            rat(1, 2),
        )
        .unwrap();
        assert!(p.is_trivial());
    }

    #[test]
    fn relabel_roundtrip() {
        let ex1 = example1();
        let mut swapped = ex1.clone();
        for u in &mut swapped.agent_payoff {
            u.swap(0, 1);
        }
        swapped.prior = rat(2, 3);
        assert!(swapped.needs_relabel());
        let n = swapped.normalize();
        assert!(n.relabeled);
        assert_eq!(n.prior, rat(1, 3));
        assert_eq!(n.agent_payoff, ex1.agent_payoff);
        assert_eq!(n.normalize(), n);
        assert_eq!(n.original_belief(&rat(1, 3)), rat(2, 3));
    }

    #[test]
    fn tie_keeps_labels() {
        let p = Problem::new(
            vec![("l", [int(1), int(0)]), ("r", [int(0), int(1)]), ("t", [rat(1, 2), rat(1, 2)])],
            "t",
            [int(1), int(1)],
            rat(1, 2),
            rat(1, 2),
        )
        .unwrap();
        assert!(!p.needs_relabel());
        assert!(!p.normalize().relabeled);
    }
}
