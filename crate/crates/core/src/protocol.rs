//! The reasoning protocol: an ordered log of what happened during a guided
//! deliberation.

use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::argmap::{Claim, ClaimId};
use crate::evaluation::Plausibility;

/// Workflow stages, in execution order for the pros/cons guide. The
/// suspension guide runs Paraphrase, Solve and Consistency instead of the
/// reconstruction stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Brainstorm,
    Issue,
    ProsCons,
    Relevance,
    Mapping,
    Evaluation,
    Paraphrase,
    Solve,
    Consistency,
    Draft,
    Delivered,
    Failed,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Brainstorm => "Brainstorm",
            Stage::Issue => "Issue",
            Stage::ProsCons => "ProsCons",
            Stage::Relevance => "Relevance",
            Stage::Mapping => "Mapping",
            Stage::Evaluation => "Evaluation",
            Stage::Paraphrase => "Paraphrase",
            Stage::Solve => "Solve",
            Stage::Consistency => "Consistency",
            Stage::Draft => "Draft",
            Stage::Delivered => "Delivered",
            Stage::Failed => "Failed",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A claim as quoted in the protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRef {
    pub id: ClaimId,
    pub label: String,
    pub statement: String,
}

impl ClaimRef {
    pub fn display_text(&self) -> String {
        format!("[{}]: {}", self.label, self.statement)
    }
}

impl From<&Claim> for ClaimRef {
    fn from(c: &Claim) -> Self {
        ClaimRef {
            id: c.id.clone(),
            label: c.label.clone(),
            statement: c.statement.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ProtocolEvent {
    Brainstorm {
        trace: String,
    },
    LeafAssessment {
        claim: ClaimRef,
        verdict: Plausibility,
    },
    ConditionalAssessment {
        claim: ClaimRef,
        verdict: Plausibility,
        pros: Vec<ClaimRef>,
        cons: Vec<ClaimRef>,
    },
    Pruned {
        claim: ClaimRef,
    },
    CentralVerdict {
        claim: ClaimRef,
        verdict: Plausibility,
    },
    AnswerDraft {
        text: String,
    },
    Paraphrase {
        index: usize,
        text: String,
    },
    Solution {
        index: usize,
        text: String,
        answer: String,
    },
    ConsistencyCheck {
        equivalent_pairs: usize,
        total_pairs: usize,
        /// 1-based formulation indices of pairs judged not equivalent.
        inconsistent: Vec<(usize, usize)>,
        consistent: bool,
    },
    StageFailed {
        stage: Stage,
        last_completed: Option<Stage>,
        cause: String,
    },
}

impl ProtocolEvent {
    /// Claims quoted by this event.
    pub fn claims(&self) -> Vec<&ClaimRef> {
        match self {
            ProtocolEvent::LeafAssessment { claim, .. }
            | ProtocolEvent::Pruned { claim }
            | ProtocolEvent::CentralVerdict { claim, .. } => vec![claim],
            ProtocolEvent::ConditionalAssessment { claim, pros, cons, .. } => {
                std::iter::once(claim).chain(pros).chain(cons).collect()
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEntry {
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub event: ProtocolEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReasoningProtocol {
    pub entries: Vec<ProtocolEntry>,
}

impl ReasoningProtocol {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: ProtocolEvent) {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        self.entries.push(ProtocolEntry { timestamp_ms, event });
    }

    pub fn events(&self) -> impl Iterator<Item = &ProtocolEvent> {
        self.entries.iter().map(|e| &e.event)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Central verdicts in protocol order.
    pub fn central_verdicts(&self) -> Vec<(&ClaimRef, Plausibility)> {
        self.events()
            .filter_map(|e| match e {
                ProtocolEvent::CentralVerdict { claim, verdict } => Some((claim, *verdict)),
                _ => None,
            })
            .collect()
    }
}
