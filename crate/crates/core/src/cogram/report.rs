use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{LossDifference, MergeConfig};
use crate::error::{Error, Result};
use crate::net::{Granularity, StructureAddress};

/// Threshold case of a decision; serialized as 1, 2 or 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Case {
    /// `|ΔL| < τ_min`: too small to trust, refine.
    Uncertain,
    /// `|ΔL| > τ_max`: too coarse, refine.
    TooCoarse,
    /// `τ_min ≤ |ΔL| ≤ τ_max`: merge at this level.
    Direct,
}

impl From<Case> for u8 {
    fn from(c: Case) -> u8 {
        match c {
            Case::Uncertain => 1,
            Case::TooCoarse => 2,
            Case::Direct => 3,
        }
    }
}

impl TryFrom<u8> for Case {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Case::Uncertain),
            2 => Ok(Case::TooCoarse),
            3 => Ok(Case::Direct),
            other => Err(format!("case must be 1, 2 or 3, got {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// The fused block was installed (and, below layer level, lowered the loss).
    Merged,
    /// The structure was decided at a finer level; for neurons the refined
    /// state lowered the loss and was kept.
    Refined,
    /// The attempt did not lower the loss and the baseline was restored.
    RolledBack,
}

/// One merge decision. Records are emitted when a structure is finished, so
/// a refined structure's record follows the records of its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub level: Granularity,
    pub layer: usize,
    pub neuron: Option<usize>,
    pub weight: Option<usize>,
    #[serde(rename = "L_A")]
    pub loss_a: f64,
    #[serde(rename = "L_B")]
    pub loss_b: f64,
    #[serde(rename = "delta_L")]
    pub delta: f64,
    pub case: Case,
    pub alpha: Option<f64>,
    pub action: Action,
    /// Loss of M before the structure was touched.
    #[serde(rename = "L_pre")]
    pub loss_pre: Option<f64>,
    /// Loss of M with the attempted state in place (before any rollback).
    #[serde(rename = "L_post")]
    pub loss_post: Option<f64>,
}

impl DecisionRecord {
    pub(crate) fn new(
        addr: StructureAddress,
        diff: LossDifference,
        case: Case,
        alpha: f64,
        action: Action,
        loss_pre: f64,
        loss_post: f64,
    ) -> Self {
        Self {
            level: addr.granularity(),
            layer: addr.layer,
            neuron: addr.neuron,
            weight: addr.weight,
            loss_a: diff.loss_a,
            loss_b: diff.loss_b,
            delta: diff.delta,
            case,
            alpha: Some(alpha),
            action,
            loss_pre: Some(loss_pre),
            loss_post: Some(loss_post),
        }
    }

    pub fn address(&self) -> StructureAddress {
        StructureAddress {
            layer: self.layer,
            neuron: self.neuron,
            weight: self.weight,
        }
    }

    /// Loss of M once this decision is final: the pre-attempt loss after a
    /// rollback, the post-attempt loss otherwise.
    pub fn settled_loss(&self) -> Option<f64> {
        match self.action {
            Action::RolledBack => self.loss_pre,
            _ => self.loss_post,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub records: Vec<DecisionRecord>,
    pub loss_before: f64,
    pub loss_after: f64,
}

impl IterationReport {
    pub fn count(&self, level: Granularity, action: Action) -> usize {
        self.records
            .iter()
            .filter(|r| r.level == level && r.action == action)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub config: MergeConfig,
    pub iterations: Vec<IterationReport>,
    pub wall_time_s: f64,
}

impl MergeReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.iterations.first().map(|i| i.loss_before)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.iterations.last().map(|i| i.loss_after)
    }

    pub fn iteration_losses(&self) -> Vec<f64> {
        self.iterations.iter().map(|i| i.loss_after).collect()
    }

    pub fn records(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.iterations.iter().flat_map(|i| i.records.iter())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::format(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
