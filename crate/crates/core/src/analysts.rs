//! Reconstruction of a relevance network from a raw brainstorming trace.
//!
//! Stages, each backed by the expert model: describe the central issue,
//! extract reasons, organize them into multi-root pros and cons lists (with
//! a bounded check-and-revise loop), and score every reason against every
//! other claim.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::argmap::{ArgmapError, Claim, ClaimId, Edge, RelevanceNetwork, Valence};
use crate::gateway::{GatewayError, Message, Model};
use crate::prompts::{PromptTemplates, TemplateError};

/// Completion attempts for the issue description before giving up.
pub const ISSUE_ATTEMPTS: usize = 3;
/// Revision rounds allowed when pros and cons lists are incomplete.
pub const MAX_REVISION_ROUNDS: usize = 2;

#[derive(Debug, Error)]
pub enum AnalystError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("scoring {source_claim} -> {target}: {error}")]
    PairScoring {
        source_claim: ClaimId,
        target: ClaimId,
        error: GatewayError,
    },
    #[error("model returned a blank completion {0} times")]
    EmptyCompletion(usize),
    #[error("could not read an itemized list from the model output: {0:?}")]
    MalformedItemization(String),
    #[error("model proposed no central claims")]
    NoRootsProposed,
    #[error("reasons left unassigned after revision: {}", .0.join(", "))]
    UnassignedReasons(Vec<String>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Network(#[from] ArgmapError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub problem_statement: String,
    pub trace_text: String,
}

impl ReasoningTrace {
    pub fn new(problem_statement: impl Into<String>, trace_text: impl Into<String>) -> Result<Self, AnalystError> {
        let t = ReasoningTrace {
            problem_statement: problem_statement.into(),
            trace_text: trace_text.into(),
        };
        if t.problem_statement.trim().is_empty() || t.trace_text.trim().is_empty() {
            return Err(AnalystError::InvalidInput("problem statement and trace must be non-empty".into()));
        }
        Ok(t)
    }
}

/// One central claim with its pros and cons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootEntry {
    pub root: Claim,
    pub pros: Vec<Claim>,
    pub cons: Vec<Claim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsConsList {
    pub roots: Vec<RootEntry>,
}

impl ProsConsList {
    /// All claims: each root followed by its pros and cons.
    pub fn claims(&self) -> Vec<Claim> {
        self.roots
            .iter()
            .flat_map(|r| std::iter::once(&r.root).chain(&r.pros).chain(&r.cons))
            .cloned()
            .collect()
    }

    fn assigned(&self) -> impl Iterator<Item = &Claim> {
        self.roots.iter().flat_map(|r| r.pros.iter().chain(&r.cons))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScore {
    pub valence: Valence,
    pub weight: f64,
}

/// Deduplication key: case-folded statement with collapsed whitespace.
pub fn dedup_key(statement: &str) -> String {
    statement.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// The expert-side analysts with their prompt templates.
pub struct Analysts<'a> {
    pub model: &'a Model,
    pub templates: &'a PromptTemplates,
}

static REASON_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])?\s*\[([^\]\n]+)\]\s*:\s*(\S.*?)\s*$").expect("regex"));
static ROOT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(?:#+\s*)?ROOT\b\s*:?\s*\[([^\]\n]+)\]\s*:\s*(\S.*?)\s*$").expect("regex"));
static ITEM_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(?:[-*]\s*)?(PRO|CON)\b\s*:?\s*(\S.*?)\s*$").expect("regex"));
static REASON_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^R(\d+)\b").expect("regex"));

fn is_none_reply(text: &str) -> bool {
    let t = text.trim().trim_end_matches('.').to_lowercase();
    t.is_empty() || t == "none"
}

/// Parses `- [Label]: statement` lines; `None` when nothing parses.
fn parse_reason_lines(text: &str) -> Option<Vec<(String, String)>> {
    let items: Vec<_> = text
        .lines()
        .filter_map(|l| REASON_LINE.captures(l))
        .map(|c| (c[1].trim().to_string(), c[2].trim().to_string()))
        .collect();
    (!items.is_empty()).then_some(items)
}

fn number_reasons(reasons: &[Claim]) -> String {
    reasons
        .iter()
        .enumerate()
        .map(|(i, r)| format!("R{}: {}", i + 1, r.display_text()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_list(list: &ProsConsList, reasons: &[Claim]) -> String {
    let number: HashMap<&ClaimId, usize> = reasons.iter().enumerate().map(|(i, r)| (&r.id, i + 1)).collect();
    let item = |c: &Claim| match number.get(&c.id) {
        Some(n) => format!("R{n}"),
        None => c.display_text(),
    };
    let mut out = Vec::new();
    for r in &list.roots {
        out.push(format!("ROOT {}", r.root.display_text()));
        out.extend(r.pros.iter().map(|c| format!("PRO {}", item(c))));
        out.extend(r.cons.iter().map(|c| format!("CON {}", item(c))));
    }
    out.join("\n")
}

/// Parses ROOT / PRO / CON lines, resolving items against `reasons` by
/// `R<n>` reference or by statement text. Unresolvable items are dropped.
fn parse_list(text: &str, reasons: &[Claim]) -> ProsConsList {
    let by_key: HashMap<String, &Claim> = reasons.iter().map(|r| (dedup_key(&r.statement), r)).collect();
    let resolve = |item: &str| -> Option<Claim> {
        if let Some(c) = REASON_REF.captures(item) {
            let n: usize = c[1].parse().ok()?;
            return reasons.get(n.checked_sub(1)?).cloned();
        }
        let statement = REASON_LINE
            .captures(item)
            .map(|c| c[2].to_string())
            .unwrap_or_else(|| item.to_string());
        by_key.get(&dedup_key(&statement)).map(|c| (*c).clone())
    };

    let mut roots: Vec<RootEntry> = Vec::new();
    for line in text.lines() {
        if let Some(c) = ROOT_LINE.captures(line) {
            let id = format!("root-{}", roots.len() + 1);
            roots.push(RootEntry {
                root: Claim::root(id, c[1].trim(), c[2].trim()),
                pros: Vec::new(),
                cons: Vec::new(),
            });
        } else if let Some(c) = ITEM_LINE.captures(line) {
            let Some(entry) = roots.last_mut() else { continue };
            let Some(claim) = resolve(c[2].trim()) else {
                log::warn!("dropping unresolvable list item {:?}", &c[2]);
                continue;
            };
            if c[1].eq_ignore_ascii_case("pro") {
                entry.pros.push(claim);
            } else {
                entry.cons.push(claim);
            }
        }
    }
    ProsConsList { roots }
}

#[derive(Debug, Default, PartialEq)]
struct Coverage {
    missing: Vec<Claim>,
    duplicated: Vec<Claim>,
    foreign: Vec<Claim>,
}

impl Coverage {
    fn of(list: &ProsConsList, reasons: &[Claim]) -> Self {
        let mut count: HashMap<&ClaimId, usize> = HashMap::new();
        let mut cov = Coverage::default();
        for c in list.assigned() {
            if reasons.iter().any(|r| r.id == c.id) {
                *count.entry(&c.id).or_default() += 1;
            } else if !cov.foreign.contains(c) {
                cov.foreign.push(c.clone());
            }
        }
        for r in reasons {
            match count.get(&r.id).copied().unwrap_or(0) {
                0 => cov.missing.push(r.clone()),
                1 => {}
                _ => cov.duplicated.push(r.clone()),
            }
        }
        cov
    }

    fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.duplicated.is_empty() && self.foreign.is_empty()
    }

    fn describe(&self, reasons: &[Claim]) -> String {
        let number = |c: &Claim| {
            reasons
                .iter()
                .position(|r| r.id == c.id)
                .map(|i| format!("R{}", i + 1))
                .unwrap_or_else(|| c.display_text())
        };
        let mut out = Vec::new();
        for c in &self.missing {
            out.push(format!("- {} is not assigned to any central claim.", number(c)));
        }
        for c in &self.duplicated {
            out.push(format!("- {} is assigned more than once.", number(c)));
        }
        for c in &self.foreign {
            out.push(format!("- {} is not one of the numbered reasons.", number(c)));
        }
        out.join("\n")
    }
}

/// Drops items that are not input reasons and every repeated occurrence
/// after the first.
fn drop_redundancies(list: &mut ProsConsList, reasons: &[Claim]) {
    let mut seen: Vec<ClaimId> = Vec::new();
    for entry in &mut list.roots {
        for items in [&mut entry.pros, &mut entry.cons] {
            items.retain(|c| {
                let keep = reasons.iter().any(|r| r.id == c.id) && !seen.contains(&c.id);
                if keep {
                    seen.push(c.id.clone());
                }
                keep
            });
        }
    }
}

impl<'a> Analysts<'a> {
    pub fn new(model: &'a Model, templates: &'a PromptTemplates) -> Self {
        Analysts { model, templates }
    }

    /// One-to-two-sentence description of the central issue.
    pub fn build_issue(&self, trace: &ReasoningTrace) -> Result<String, AnalystError> {
        let prompt = self.templates.issue.render(&[
            ("problem", &trace.problem_statement),
            ("trace", &trace.trace_text),
        ])?;
        for _ in 0..ISSUE_ATTEMPTS {
            let resp = self.model.ask(&prompt)?;
            let issue = resp.content.trim();
            if !issue.is_empty() {
                return Ok(issue.to_string());
            }
        }
        Err(AnalystError::EmptyCompletion(ISSUE_ATTEMPTS))
    }

    /// Extracts single-claim reasons from the trace, deduplicated in trace
    /// order. An empty list is a valid result.
    pub fn extract_reasons(&self, trace: &ReasoningTrace, issue: &str) -> Result<Vec<Claim>, AnalystError> {
        if issue.trim().is_empty() {
            return Err(AnalystError::InvalidInput("issue must be non-empty".into()));
        }
        let prompt = self
            .templates
            .extract_reasons
            .render(&[("issue", issue), ("trace", &trace.trace_text)])?;
        let mut messages = vec![Message::user(prompt)];
        let first = self.model.complete(messages.clone())?;
        let items = if is_none_reply(&first.content) {
            Vec::new()
        } else if let Some(items) = parse_reason_lines(&first.content) {
            items
        } else {
            messages.push(Message::assistant(first.content));
            messages.push(Message::user(self.templates.extract_repair.render(&[])?));
            let second = self.model.complete(messages)?;
            if is_none_reply(&second.content) {
                Vec::new()
            } else {
                parse_reason_lines(&second.content)
                    .ok_or(AnalystError::MalformedItemization(second.content))?
            }
        };

        let mut seen = Vec::new();
        let mut reasons = Vec::new();
        for (label, statement) in items {
            let key = dedup_key(&statement);
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let id = format!("reason-{:02}", reasons.len() + 1);
            reasons.push(Claim::reason(id, label.replace(['\n', '\r'], " "), statement));
        }
        Ok(reasons)
    }

    /// Organizes reasons below newly proposed central claims and makes sure
    /// every reason is assigned exactly once.
    pub fn organize_pros_cons(&self, reasons: &[Claim], issue: &str) -> Result<ProsConsList, AnalystError> {
        if reasons.is_empty() {
            return Err(AnalystError::InvalidInput("no reasons to organize".into()));
        }
        let prompt = self
            .templates
            .organize
            .render(&[("issue", issue), ("reasons", &number_reasons(reasons))])?;
        let resp = self.model.ask(&prompt)?;
        let list = parse_list(&resp.content, reasons);
        if list.roots.is_empty() {
            return Err(AnalystError::NoRootsProposed);
        }
        self.check_and_revise(list, reasons, issue)
    }

    /// Returns `list` unchanged if it covers every reason exactly once;
    /// otherwise asks for up to [`MAX_REVISION_ROUNDS`] revisions.
    pub fn check_and_revise(
        &self,
        list: ProsConsList,
        reasons: &[Claim],
        issue: &str,
    ) -> Result<ProsConsList, AnalystError> {
        let mut current = list;
        for _ in 0..MAX_REVISION_ROUNDS {
            let cov = Coverage::of(&current, reasons);
            if cov.is_clean() {
                return Ok(current);
            }
            let prompt = self.templates.revise.render(&[
                ("issue", issue),
                ("reasons", &number_reasons(reasons)),
                ("list", &render_list(&current, reasons)),
                ("problems", &cov.describe(reasons)),
            ])?;
            let resp = self.model.ask(&prompt)?;
            let revised = parse_list(&resp.content, reasons);
            if !revised.roots.is_empty() {
                current = revised;
            }
        }
        let cov = Coverage::of(&current, reasons);
        if !cov.missing.is_empty() {
            return Err(AnalystError::UnassignedReasons(
                cov.missing.iter().map(Claim::display_text).collect(),
            ));
        }
        drop_redundancies(&mut current, reasons);
        Ok(current)
    }

    /// Support and attack probes for `a` bearing on `b`; the stronger one
    /// wins, ties go to Attack.
    pub fn score_relevance(&self, issue: &str, a: &Claim, b: &Claim) -> Result<RelevanceScore, AnalystError> {
        if a.is_root() || a.id == b.id {
            return Err(AnalystError::InvalidInput(format!(
                "cannot score {} against {}",
                a.id, b.id
            )));
        }
        let (claim_a, claim_b) = (a.display_text(), b.display_text());
        let values = [("issue", issue), ("claim_a", claim_a.as_str()), ("claim_b", claim_b.as_str())];
        let support = self.model.yes_probability(&self.templates.support_probe.render(&values)?)?;
        let attack = self.model.yes_probability(&self.templates.attack_probe.render(&values)?)?;
        Ok(if support > attack {
            RelevanceScore {
                valence: Valence::Support,
                weight: support,
            }
        } else {
            RelevanceScore {
                valence: Valence::Attack,
                weight: attack,
            }
        })
    }

    /// Scores every (reason, other claim) pair, running up to `parallelism`
    /// probes at once, and adds mutual maximal attacks between roots.
    pub fn build_network(
        &self,
        list: &ProsConsList,
        issue: &str,
        parallelism: usize,
    ) -> Result<RelevanceNetwork, AnalystError> {
        let claims = list.claims();
        let pairs: Vec<(&Claim, &Claim)> = claims
            .iter()
            .filter(|a| !a.is_root())
            .flat_map(|a| claims.iter().filter(move |b| b.id != a.id).map(move |b| (a, b)))
            .collect();

        let results: Mutex<Vec<Option<Result<RelevanceScore, AnalystError>>>> =
            Mutex::new((0..pairs.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = parallelism.clamp(1, pairs.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(a, b)) = pairs.get(i) else { break };
                    let r = self.score_relevance(issue, a, b);
                    let failed = r.is_err();
                    results.lock().expect("results lock")[i] = Some(r);
                    if failed {
                        // Stop handing out new pairs.
                        next.store(pairs.len(), Ordering::Relaxed);
                    }
                });
            }
        });

        let mut edges = Vec::with_capacity(pairs.len());
        for (i, r) in results.into_inner().expect("results lock").into_iter().enumerate() {
            let (a, b) = pairs[i];
            match r {
                Some(Ok(score)) => edges.push(Edge {
                    source: a.id.clone(),
                    target: b.id.clone(),
                    valence: score.valence,
                    weight: score.weight,
                }),
                Some(Err(AnalystError::Gateway(error))) => {
                    return Err(AnalystError::PairScoring {
                        source_claim: a.id.clone(),
                        target: b.id.clone(),
                        error,
                    })
                }
                Some(Err(e)) => return Err(e),
                None => {}
            }
        }
        if edges.len() < pairs.len() {
            unreachable!("unscored pair without a recorded failure");
        }
        for a in claims.iter().filter(|c| c.is_root()) {
            for b in claims.iter().filter(|c| c.is_root() && c.id != a.id) {
                edges.push(Edge {
                    source: a.id.clone(),
                    target: b.id.clone(),
                    valence: Valence::Attack,
                    weight: 1.0,
                });
            }
        }
        Ok(RelevanceNetwork::new(claims, edges)?)
    }
}
