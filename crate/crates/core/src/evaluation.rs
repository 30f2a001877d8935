//! Bottom-up plausibility evaluation of an argument map.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::argmap::{validate_map, ArgumentMap, Claim, ClaimId, Valence};
use crate::gateway::{GatewayError, Message, Model};
use crate::prompts::PromptTemplates;

/// Four-point qualitative plausibility scale, ordered from worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Plausibility {
    VeryImplausible,
    RatherImplausible,
    RatherPlausible,
    VeryPlausible,
}

impl Plausibility {
    pub const ALL: [Plausibility; 4] = [
        Plausibility::VeryImplausible,
        Plausibility::RatherImplausible,
        Plausibility::RatherPlausible,
        Plausibility::VeryPlausible,
    ];

    pub fn is_plausible(self) -> bool {
        self >= Plausibility::RatherPlausible
    }

    pub fn label(self) -> &'static str {
        match self {
            Plausibility::VeryImplausible => "very implausible",
            Plausibility::RatherImplausible => "rather implausible",
            Plausibility::RatherPlausible => "rather plausible",
            Plausibility::VeryPlausible => "very plausible",
        }
    }

    /// Finds the verdict phrase occurring first in free text.
    pub fn parse(text: &str) -> Option<Plausibility> {
        let norm = text.to_lowercase().replace(['_', '-'], " ");
        let norm = norm.split_whitespace().collect::<Vec<_>>().join(" ");
        Self::ALL
            .iter()
            .filter_map(|p| norm.find(p.label()).map(|pos| (pos, *p)))
            .min_by_key(|(pos, _)| *pos)
            .map(|(_, p)| p)
    }
}

impl fmt::Display for Plausibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlausibilityAssessment {
    pub claim: ClaimId,
    pub verdict: Plausibility,
    pub considered_pros: Vec<ClaimId>,
    pub considered_cons: Vec<ClaimId>,
    /// False for claims without incoming edges.
    pub conditional: bool,
}

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("invalid argument map: {}", .0.join("; "))]
    InvalidMap(Vec<String>),
    #[error("assessing {claim}: {error}")]
    Assessor { claim: ClaimId, error: GatewayError },
}

/// Evaluates every claim exactly once, sources before targets.
///
/// Roots are visited in claim order; below each claim the supporting sources
/// come first, then the attacking ones, each group in claim order. Every
/// claim is assessed after all its sources (a post-order walk), and the
/// assessor only ever sees sources that were judged plausible.
pub fn evaluate_map<F>(map: &ArgumentMap, mut assessor: F) -> Result<Vec<PlausibilityAssessment>, EvaluationError>
where
    F: FnMut(&Claim, &[&Claim], &[&Claim]) -> Result<Plausibility, GatewayError>,
{
    evaluate_map_observed(map, &mut assessor, &mut |_| {})
}

/// Verdict for a claim given its plausible pros and cons.
pub type Assessor<'a> = dyn FnMut(&Claim, &[&Claim], &[&Claim]) -> Result<Plausibility, GatewayError> + 'a;

/// Like [`evaluate_map`], calling `observer` after each assessment.
pub fn evaluate_map_observed(
    map: &ArgumentMap,
    assessor: &mut Assessor<'_>,
    observer: &mut dyn FnMut(&PlausibilityAssessment),
) -> Result<Vec<PlausibilityAssessment>, EvaluationError> {
    let violations = validate_map(map);
    if !violations.is_empty() {
        return Err(EvaluationError::InvalidMap(violations));
    }
    let index: HashMap<&ClaimId, usize> = map.claims.iter().enumerate().map(|(i, c)| (&c.id, i)).collect();
    let mut sources: Vec<Vec<(Valence, usize)>> = vec![Vec::new(); map.claims.len()];
    for e in map.evaluation_edges() {
        sources[index[&e.target]].push((e.valence, index[&e.source]));
    }
    for s in &mut sources {
        s.sort_by_key(|&(v, i)| (v != Valence::Support, i));
        s.dedup();
    }

    // Iterative post-order walk from each root, then any stragglers.
    let mut order = Vec::with_capacity(map.claims.len());
    let mut visited = vec![false; map.claims.len()];
    let starts = (0..map.claims.len())
        .filter(|&i| map.claims[i].is_root())
        .chain(0..map.claims.len());
    for start in starts {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut stack = vec![(start, 0usize)];
        while let Some((node, next)) = stack.last_mut() {
            if let Some(&(_, child)) = sources[*node].get(*next) {
                *next += 1;
                if !visited[child] {
                    visited[child] = true;
                    stack.push((child, 0));
                }
            } else {
                order.push(*node);
                stack.pop();
            }
        }
    }

    let mut verdicts: Vec<Option<Plausibility>> = vec![None; map.claims.len()];
    let mut out = Vec::with_capacity(order.len());
    for i in order {
        let claim = &map.claims[i];
        let plausible = |valence: Valence| -> Vec<&Claim> {
            sources[i]
                .iter()
                .filter(|&&(v, s)| v == valence && verdicts[s].is_some_and(Plausibility::is_plausible))
                .map(|&(_, s)| &map.claims[s])
                .collect()
        };
        let pros = plausible(Valence::Support);
        let cons = plausible(Valence::Attack);
        let verdict = assessor(claim, &pros, &cons).map_err(|error| EvaluationError::Assessor {
            claim: claim.id.clone(),
            error,
        })?;
        verdicts[i] = Some(verdict);
        let assessment = PlausibilityAssessment {
            claim: claim.id.clone(),
            verdict,
            considered_pros: pros.iter().map(|c| c.id.clone()).collect(),
            considered_cons: cons.iter().map(|c| c.id.clone()).collect(),
            conditional: !sources[i].is_empty(),
        };
        observer(&assessment);
        out.push(assessment);
    }
    Ok(out)
}

fn bullet_list(claims: &[&Claim]) -> String {
    if claims.is_empty() {
        return "None.".to_string();
    }
    claims
        .iter()
        .map(|c| format!("- {}", c.display_text()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Asks `model` for a verdict on `claim` given its plausible pros and cons.
///
/// An unreadable reply gets one constrained re-ask; if that fails too the
/// claim counts as rather implausible.
pub fn assess_with_model(
    model: &Model,
    templates: &PromptTemplates,
    problem: &str,
    claim: &Claim,
    pros: &[&Claim],
    cons: &[&Claim],
) -> Result<Plausibility, GatewayError> {
    let text = claim.display_text();
    let prompt = if pros.is_empty() && cons.is_empty() {
        templates
            .assess_unconditional
            .render(&[("problem", problem), ("claim", &text)])
    } else {
        templates.assess_conditional.render(&[
            ("problem", problem),
            ("claim", &text),
            ("pros", &bullet_list(pros)),
            ("cons", &bullet_list(cons)),
        ])
    }
    .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;

    let mut messages = vec![Message::user(prompt)];
    let first = model.complete(messages.clone())?;
    if let Some(p) = Plausibility::parse(&first.content) {
        return Ok(p);
    }
    let reask = templates
        .assess_reask
        .render(&[])
        .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
    messages.push(Message::assistant(first.content));
    messages.push(Message::user(reask));
    let second = model.complete(messages)?;
    Ok(Plausibility::parse(&second.content).unwrap_or_else(|| {
        log::warn!("no verdict for {} after re-ask; defaulting", claim.id);
        Plausibility::RatherImplausible
    }))
}

/// Claims whose assessment was implausible, in evaluation order.
pub fn pruned(assessments: &[PlausibilityAssessment]) -> HashSet<&ClaimId> {
    assessments
        .iter()
        .filter(|a| !a.verdict.is_plausible())
        .map(|a| &a.claim)
        .collect()
}
