//! Retraining with feature groups removed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{feature_index, fit_rows, outcome_dataset, OutcomeError};
use crate::corpus::{Stage, SuccessLabel};
use crate::detector::AnnotatedDialog;
use crate::tactic::{Role, Tactic, TacticRegistry, LEARNED_TACTICS};

/// Which tactics count as abstract (learned or protocol-derived) and which
/// as lexical (word-list driven).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroups {
    #[serde(rename = "abstract")]
    pub abstract_tactics: BTreeSet<Tactic>,
    pub lexical: BTreeSet<Tactic>,
}

impl Default for FeatureGroups {
    fn default() -> Self {
        let abstract_tactics: BTreeSet<Tactic> = LEARNED_TACTICS
            .iter()
            .copied()
            .chain([Tactic::SideOffer, Tactic::DidNotProposeFirst])
            .collect();
        let lexical = Tactic::ALL
            .iter()
            .copied()
            .filter(|t| !abstract_tactics.contains(t))
            .collect();
        Self {
            abstract_tactics,
            lexical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Abstract,
    Lexical,
    Stage1,
    Stage2,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Abstract, Group::Lexical, Group::Stage1, Group::Stage2];
}

impl FeatureGroups {
    /// Feature columns belonging to `group`.
    pub fn columns(&self, group: Group, registry: &TacticRegistry) -> BTreeSet<usize> {
        let mut cols = BTreeSet::new();
        for (t, tactic) in registry.iter().enumerate() {
            for role in [Role::Seller, Role::Buyer] {
                for stage in [Stage::One, Stage::Two] {
                    let hit = match group {
                        Group::Abstract => self.abstract_tactics.contains(&tactic),
                        Group::Lexical => self.lexical.contains(&tactic),
                        Group::Stage1 => stage == Stage::One,
                        Group::Stage2 => stage == Stage::Two,
                    };
                    if hit {
                        cols.insert(feature_index(t, role, stage));
                    }
                }
            }
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub removed: Vec<Group>,
    pub accuracy: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full_accuracy: f64,
    pub rows: Vec<AblationRow>,
}

fn mask(rows: &[Vec<f64>], cols: &BTreeSet<usize>) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(i, v)| if cols.contains(&i) { 0.0 } else { *v })
                .collect()
        })
        .collect()
}

/// Test accuracy of the full model and of models retrained with each
/// group set in `removals` zeroed out.
pub fn ablate_outcome(
    train: &[AnnotatedDialog],
    dev: &[AnnotatedDialog],
    test: &[AnnotatedDialog],
    labels: &BTreeMap<String, SuccessLabel>,
    registry: &TacticRegistry,
    groups: &FeatureGroups,
    removals: &[Vec<Group>],
    l2_grid: &[f64],
) -> Result<AblationReport, OutcomeError> {
    let (tx, ty) = outcome_dataset(train, labels, registry);
    let (dx, dy) = outcome_dataset(dev, labels, registry);
    let (sx, sy) = outcome_dataset(test, labels, registry);
    if sx.is_empty() {
        return Err(OutcomeError::NoData("test"));
    }
    let run = |cols: &BTreeSet<usize>| -> Result<f64, OutcomeError> {
        let m = fit_rows(&mask(&tx, cols), &ty, &mask(&dx, cols), &dy, registry, l2_grid)?;
        Ok(m.accuracy_on(&mask(&sx, cols), &sy)?)
    };
    let full_accuracy = run(&BTreeSet::new())?;
    let mut rows = Vec::new();
    for removed in removals {
        let cols: BTreeSet<usize> = removed
            .iter()
            .flat_map(|g| groups.columns(*g, registry))
            .collect();
        let accuracy = run(&cols)?;
        rows.push(AblationRow {
            removed: removed.clone(),
            accuracy,
            delta: accuracy - full_accuracy,
        });
    }
    Ok(AblationReport {
        full_accuracy,
        rows,
    })
}

/// One row per group, each removed alone.
pub fn single_group_removals() -> Vec<Vec<Group>> {
    Group::ALL.iter().map(|g| vec![*g]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_groups_partition_all_tactics() {
        let g = FeatureGroups::default();
        assert!(g.abstract_tactics.is_disjoint(&g.lexical));
        assert_eq!(g.abstract_tactics.len() + g.lexical.len(), Tactic::ALL.len());
        assert!(g.abstract_tactics.contains(&Tactic::SideOffer));
    }

    #[test]
    fn stage_groups_split_columns_in_half() {
        let reg = TacticRegistry::default();
        let g = FeatureGroups::default();
        let s1 = g.columns(Group::Stage1, &reg);
        let s2 = g.columns(Group::Stage2, &reg);
        assert_eq!(s1.len(), reg.len() * 2);
        assert!(s1.is_disjoint(&s2));
        let a = g.columns(Group::Abstract, &reg);
        let l = g.columns(Group::Lexical, &reg);
        assert_eq!(a.len() + l.len(), reg.len() * 4);
    }
}
