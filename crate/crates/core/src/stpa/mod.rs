//! STPA artifact as data: losses, hazards, system-level constraints, control
//! actions, unsafe control actions and loss scenarios, with completeness rules
//! and hazard-to-loss traceability.

mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{load_model, serialize_model};

/// The model shipped with the crate (take-off and landing in hover).
pub const BUNDLED_MODEL: &str = include_str!("../../models/vtol_hover.stpa");

/// Parses [`BUNDLED_MODEL`]. The text is compiled in, so failure is a build defect.
pub fn bundled_model() -> TraceabilityGraph {
    load_model(BUNDLED_MODEL).expect("bundled STPA model must parse")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{from} references unknown id `{missing}`")]
    DanglingReference { from: String, missing: String },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown control action `{0}`")]
    UnknownAction(String),
    #[error("unknown hazard `{0}`")]
    UnknownHazard(String),
    #[error("unknown constraint `{0}`")]
    UnknownConstraint(String),
}

/// Guideword category of an unsafe control action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UcaCategory {
    NotProviding,
    Providing,
    TooEarlyLateOutOfOrder,
    StoppedTooSoonAppliedTooLong,
}

impl UcaCategory {
    pub const ALL: [UcaCategory; 4] = [
        UcaCategory::NotProviding,
        UcaCategory::Providing,
        UcaCategory::TooEarlyLateOutOfOrder,
        UcaCategory::StoppedTooSoonAppliedTooLong,
    ];

    /// Token used in the model document.
    pub fn token(self) -> &'static str {
        match self {
            UcaCategory::NotProviding => "not-providing",
            UcaCategory::Providing => "providing",
            UcaCategory::TooEarlyLateOutOfOrder => "too-early-late-out-of-order",
            UcaCategory::StoppedTooSoonAppliedTooLong => "stopped-too-soon-applied-too-long",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.token() == s)
    }
}

impl fmt::Display for UcaCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub id: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hazard {
    pub id: String,
    pub description: String,
    pub losses: BTreeSet<String>,
}

/// System-level constraint. `hazards` holds exactly one id in a complete
/// model; the list form exists so rule (c) can report violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConstraint {
    pub id: String,
    pub text: String,
    pub hazards: Vec<String>,
    /// Named numeric quantities (e.g. `distance_m`, `duration_s`).
    pub parameters: BTreeMap<String, f64>,
}

impl SystemConstraint {
    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    pub name: String,
    pub source: String,
    pub target: String,
    pub feedbacks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsafeControlAction {
    pub id: String,
    pub action: String,
    pub category: UcaCategory,
    pub context: String,
    pub hazards: BTreeSet<String>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossScenario {
    pub id: String,
    pub class: u8,
    pub ucas: BTreeSet<String>,
    pub description: String,
}

/// Explicit exemption of a control action from rule (e).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waiver {
    pub action: String,
    pub reason: String,
}

/// The whole STPA artifact. Entities are keyed by id (actions by name).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceabilityGraph {
    pub losses: BTreeMap<String, Loss>,
    pub hazards: BTreeMap<String, Hazard>,
    pub constraints: BTreeMap<String, SystemConstraint>,
    pub actions: BTreeMap<String, ControlAction>,
    pub ucas: BTreeMap<String, UnsafeControlAction>,
    pub scenarios: BTreeMap<String, LossScenario>,
    pub waivers: BTreeMap<String, Waiver>,
}

/// Outcome of one completeness rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule: char,
    pub description: String,
    /// Ids of offending entities; empty when the rule passes.
    pub failures: Vec<String>,
}

impl RuleOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub rules: Vec<RuleOutcome>,
}

impl CompletenessReport {
    pub fn all_passed(&self) -> bool {
        self.rules.iter().all(RuleOutcome::passed)
    }

    pub fn rule(&self, rule: char) -> Option<&RuleOutcome> {
        self.rules.iter().find(|r| r.rule == rule)
    }
}

impl fmt::Display for CompletenessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            if r.passed() {
                writeln!(f, "rule ({}) PASS  {}", r.rule, r.description)?;
            } else {
                writeln!(
                    f,
                    "rule ({}) FAIL  {}: {}",
                    r.rule,
                    r.description,
                    r.failures.join(", ")
                )?;
            }
        }
        Ok(())
    }
}

/// UCAs of one control action split by guideword category.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UcaMatrix {
    pub cells: BTreeMap<UcaCategory, BTreeSet<String>>,
}

impl UcaMatrix {
    pub fn cell(&self, category: UcaCategory) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        self.cells.get(&category).unwrap_or(&EMPTY)
    }

    /// Union of both timing columns, for actions whose table merges them.
    pub fn merged_timing(&self) -> BTreeSet<String> {
        self.cell(UcaCategory::TooEarlyLateOutOfOrder)
            .union(self.cell(UcaCategory::StoppedTooSoonAppliedTooLong))
            .cloned()
            .collect()
    }
}

impl TraceabilityGraph {
    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
            && self.hazards.is_empty()
            && self.constraints.is_empty()
            && self.actions.is_empty()
            && self.ucas.is_empty()
            && self.scenarios.is_empty()
            && self.waivers.is_empty()
    }

    /// Walks every link and reports the first id that does not resolve.
    pub fn check_references(&self) -> Result<(), ModelError> {
        let dangling = |from: &str, missing: &str| ModelError::DanglingReference {
            from: from.to_owned(),
            missing: missing.to_owned(),
        };
        for h in self.hazards.values() {
            if let Some(l) = h.losses.iter().find(|l| !self.losses.contains_key(*l)) {
                return Err(dangling(&h.id, l));
            }
        }
        for c in self.constraints.values() {
            if let Some(h) = c.hazards.iter().find(|h| !self.hazards.contains_key(*h)) {
                return Err(dangling(&c.id, h));
            }
        }
        for u in self.ucas.values() {
            if !self.actions.contains_key(&u.action) {
                return Err(dangling(&u.id, &u.action));
            }
            if let Some(h) = u.hazards.iter().find(|h| !self.hazards.contains_key(*h)) {
                return Err(dangling(&u.id, h));
            }
        }
        for s in self.scenarios.values() {
            if let Some(u) = s.ucas.iter().find(|u| !self.ucas.contains_key(*u)) {
                return Err(dangling(&s.id, u));
            }
        }
        for w in self.waivers.values() {
            if !self.actions.contains_key(&w.action) {
                return Err(dangling("waiver", &w.action));
            }
        }
        Ok(())
    }

    /// Applies completeness rules (a) through (e). Never fails; the report
    /// carries the offending ids.
    pub fn check_completeness(&self) -> CompletenessReport {
        let a = self
            .hazards
            .values()
            .filter(|h| h.losses.is_empty())
            .map(|h| h.id.clone())
            .collect();
        let b = self
            .ucas
            .values()
            .filter(|u| u.hazards.is_empty())
            .map(|u| u.id.clone())
            .collect();
        let c = self
            .constraints
            .values()
            .filter(|c| c.hazards.len() != 1)
            .map(|c| c.id.clone())
            .collect();
        let d = self
            .scenarios
            .values()
            .filter(|s| s.ucas.is_empty())
            .map(|s| s.id.clone())
            .collect();
        let e = self
            .actions
            .keys()
            .filter(|name| {
                !self.waivers.contains_key(*name) && !self.ucas.values().any(|u| &u.action == *name)
            })
            .cloned()
            .collect();
        CompletenessReport {
            rules: vec![
                RuleOutcome {
                    rule: 'a',
                    description: "every hazard links at least one loss".into(),
                    failures: a,
                },
                RuleOutcome {
                    rule: 'b',
                    description: "every UCA links at least one hazard".into(),
                    failures: b,
                },
                RuleOutcome {
                    rule: 'c',
                    description: "every constraint links exactly one hazard".into(),
                    failures: c,
                },
                RuleOutcome {
                    rule: 'd',
                    description: "every loss scenario links at least one UCA".into(),
                    failures: d,
                },
                RuleOutcome {
                    rule: 'e',
                    description: "every control action has a UCA or a waiver".into(),
                    failures: e,
                },
            ],
        }
    }

    pub fn uca_candidate_matrix(&self, action: &str) -> Result<UcaMatrix, ModelError> {
        if !self.actions.contains_key(action) {
            return Err(ModelError::UnknownAction(action.to_owned()));
        }
        let mut cells: BTreeMap<UcaCategory, BTreeSet<String>> = UcaCategory::ALL
            .into_iter()
            .map(|c| (c, BTreeSet::new()))
            .collect();
        for u in self.ucas.values().filter(|u| u.action == action) {
            cells.entry(u.category).or_default().insert(u.id.clone());
        }
        Ok(UcaMatrix { cells })
    }

    /// Union of the loss links of the given hazards.
    pub fn trace_to_losses<'a, I>(&self, hazards: I) -> Result<BTreeSet<String>, ModelError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut out = BTreeSet::new();
        for id in hazards {
            let h = self
                .hazards
                .get(id)
                .ok_or_else(|| ModelError::UnknownHazard(id.to_owned()))?;
            out.extend(h.losses.iter().cloned());
        }
        Ok(out)
    }

    /// Hazard guarded by a constraint (first link when malformed).
    pub fn constraint_hazard(&self, constraint: &str) -> Result<&str, ModelError> {
        self.constraints
            .get(constraint)
            .and_then(|c| c.hazards.first())
            .map(String::as_str)
            .ok_or_else(|| ModelError::UnknownConstraint(constraint.to_owned()))
    }

    /// Hazards reachable from a UCA.
    pub fn uca_hazards(&self, uca: &str) -> Option<&BTreeSet<String>> {
        self.ucas.get(uca).map(|u| &u.hazards)
    }

    /// Reverse index: loss id to the hazards that link it.
    pub fn hazards_by_loss(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut idx: BTreeMap<&str, BTreeSet<&str>> =
            self.losses.keys().map(|k| (k.as_str(), BTreeSet::new())).collect();
        for h in self.hazards.values() {
            for l in &h.losses {
                idx.entry(l.as_str()).or_default().insert(h.id.as_str());
            }
        }
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bundled_counts_and_links() {
        let g = bundled_model();
        assert_eq!(g.losses.len(), 4);
        assert_eq!(g.hazards.len(), 6);
        assert_eq!(g.constraints.len(), 6);
        assert_eq!(g.ucas.len(), 8);
        assert_eq!(g.hazards["H-5"].losses, set(&["L-3", "L-4"]));
        assert_eq!(g.hazards["H-1"].losses, set(&["L-1", "L-2", "L-4"]));
        assert!(g.scenarios.values().all(|s| s.class == 1 || s.class == 2));
    }

    #[test]
    fn bundled_model_is_complete() {
        let report = bundled_model().check_completeness();
        assert!(report.all_passed(), "{report}");
    }

    #[test]
    fn landing_pad_matrix() {
        let m = bundled_model().uca_candidate_matrix("Landing pad position").unwrap();
        assert_eq!(m.cell(UcaCategory::NotProviding), &set(&["UCA-1"]));
        assert_eq!(m.cell(UcaCategory::Providing), &set(&["UCA-2"]));
        assert_eq!(m.cell(UcaCategory::TooEarlyLateOutOfOrder), &set(&["UCA-3"]));
        assert_eq!(m.cell(UcaCategory::StoppedTooSoonAppliedTooLong), &set(&["UCA-4"]));
    }

    #[test]
    fn motor_commands_matrix_merges_timing() {
        let m = bundled_model().uca_candidate_matrix("Motor commands").unwrap();
        assert_eq!(m.cell(UcaCategory::NotProviding), &set(&["UCA-5"]));
        assert_eq!(m.cell(UcaCategory::Providing), &set(&["UCA-6", "UCA-7"]));
        assert_eq!(m.merged_timing(), set(&["UCA-8"]));
    }

    #[test]
    fn matrix_of_action_without_ucas_is_empty() {
        let m = bundled_model().uca_candidate_matrix("Flight mode").unwrap();
        assert!(UcaCategory::ALL.iter().all(|c| m.cell(*c).is_empty()));
        assert_eq!(m.cells.len(), 4);
    }

    #[test]
    fn matrix_rejects_unknown_action() {
        let err = bundled_model().uca_candidate_matrix("Warp drive").unwrap_err();
        assert_eq!(err, ModelError::UnknownAction("Warp drive".into()));
    }

    #[test]
    fn trace_examples() {
        let g = bundled_model();
        assert_eq!(
            g.trace_to_losses(["H-4"]).unwrap(),
            set(&["L-1", "L-2", "L-3", "L-4"])
        );
        assert_eq!(g.trace_to_losses(["H-5"]).unwrap(), set(&["L-3", "L-4"]));
        assert!(g.trace_to_losses([]).unwrap().is_empty());
        assert_eq!(
            g.trace_to_losses(["H-9"]).unwrap_err(),
            ModelError::UnknownHazard("H-9".into())
        );
    }

    #[test]
    fn empty_hazard_fails_rule_a() {
        let doc = "loss L-1:\n  description: x\n\nhazard H-1:\n  description: y\n  losses:\n";
        let g = load_model(doc).unwrap();
        let report = g.check_completeness();
        assert_eq!(report.rule('a').unwrap().failures, vec!["H-1".to_string()]);
    }

    #[test]
    fn action_without_uca_or_waiver_fails_rule_e() {
        let doc = "action Landing pad position:\n  source: AprilTag System\n  target: Guidance Controller\n";
        let report = load_model(doc).unwrap().check_completeness();
        assert_eq!(
            report.rule('e').unwrap().failures,
            vec!["Landing pad position".to_string()]
        );
        assert!(report.rule('a').unwrap().passed());
    }

    #[test]
    fn constraint_parameters_default() {
        let g = bundled_model();
        assert_eq!(g.constraints["SC-1"].parameter("distance_m"), Some(2.0));
        assert_eq!(g.constraints["SC-5"].parameter("duration_s"), Some(10.0));
        assert_eq!(g.constraints["SC-2"].parameter("separation_m"), Some(10.0));
        for i in 1..=6 {
            assert_eq!(
                g.constraint_hazard(&format!("SC-{i}")).unwrap(),
                format!("H-{i}")
            );
        }
    }
}
