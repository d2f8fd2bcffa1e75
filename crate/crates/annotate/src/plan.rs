//! Balanced assignment of preference-ranking groups to annotators.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PlanError {
    #[error("{annotators} annotators × {per_annotator} groups each = {slots} slots, but {groups} groups × {per_group} rankings = {needed}")]
    Imbalanced {
        annotators: usize,
        per_annotator: usize,
        slots: usize,
        groups: usize,
        per_group: usize,
        needed: usize,
    },
    #[error("each group needs {per_group} distinct annotators but only {annotators} exist")]
    TooFewAnnotators { annotators: usize, per_group: usize },
    #[error("duplicate id {0:?}")]
    Duplicate(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    /// prompt group → annotators ranking it.
    pub by_group: BTreeMap<String, Vec<String>>,
    /// annotator → prompt groups, in presentation order.
    pub by_annotator: BTreeMap<String, Vec<String>>,
}

impl AssignmentPlan {
    pub fn is_assigned(&self, annotator: &str, group: &str) -> bool {
        self.by_annotator
            .get(annotator)
            .is_some_and(|gs| gs.iter().any(|g| g == group))
    }
}

fn unique(ids: &[String]) -> Result<(), PlanError> {
    let mut seen = std::collections::BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(PlanError::Duplicate(id.clone()));
        }
    }
    Ok(())
}

/// Every group goes to exactly `per_group` distinct annotators and every
/// annotator gets exactly `per_annotator` distinct groups.
///
/// After a seeded shuffle of both lists, the `(group, copy)` slots are dealt
/// round-robin over annotators; `per_group` consecutive slots always land on
/// distinct annotators because `per_group ≤ annotators`.
pub fn plan_assignments(
    annotators: &[String],
    groups: &[String],
    per_group: usize,
    per_annotator: usize,
    seed: u64,
) -> Result<AssignmentPlan, PlanError> {
    unique(annotators)?;
    unique(groups)?;
    let slots = annotators.len() * per_annotator;
    let needed = groups.len() * per_group;
    if slots != needed {
        return Err(PlanError::Imbalanced {
            annotators: annotators.len(),
            per_annotator,
            slots,
            groups: groups.len(),
            per_group,
            needed,
        });
    }
    if per_group > annotators.len() {
        return Err(PlanError::TooFewAnnotators {
            annotators: annotators.len(),
            per_group,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut people = annotators.to_vec();
    let mut prompts = groups.to_vec();
    people.shuffle(&mut rng);
    prompts.shuffle(&mut rng);

    let mut plan = AssignmentPlan {
        by_group: groups.iter().map(|g| (g.clone(), Vec::new())).collect(),
        by_annotator: annotators.iter().map(|a| (a.clone(), Vec::new())).collect(),
    };
    let mut slot = 0usize;
    for g in &prompts {
        for _ in 0..per_group {
            let a = &people[slot % people.len()];
            plan.by_group.get_mut(g).unwrap().push(a.clone());
            plan.by_annotator.get_mut(a).unwrap().push(g.clone());
            slot += 1;
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn study_dimensions_are_feasible() {
        let plan = plan_assignments(&ids("p", 30), &ids("g", 60), 3, 6, 1).unwrap();
        assert!(plan.by_group.values().all(|a| a.len() == 3));
        assert!(plan.by_annotator.values().all(|g| g.len() == 6));
    }

    #[test]
    fn infeasible_counts() {
        assert!(matches!(
            plan_assignments(&ids("p", 2), &ids("g", 1), 3, 1, 0),
            Err(PlanError::Imbalanced { .. })
        ));
        // balanced counts but still pigeonholed
        assert!(matches!(
            plan_assignments(&ids("p", 2), &ids("g", 2), 3, 3, 0),
            Err(PlanError::TooFewAnnotators { .. })
        ));
        let one = plan_assignments(&ids("p", 1), &ids("g", 1), 1, 1, 0).unwrap();
        assert_eq!(one.by_group["g0"], vec!["p0".to_string()]);
    }
}
