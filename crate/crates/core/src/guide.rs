//! Guide-side orchestration of a deliberation.
//!
//! The guide never answers the problem itself. It instructs the client model
//! to brainstorm, has expert analysts reconstruct the argumentation as a
//! fuzzy argument map, walks the client through assessing that map claim by
//! claim, and finally lets the client draft the answer.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::analysts::{Analysts, ReasoningTrace};
use crate::argmap::{ArgumentMap, Claim};
use crate::branching::{build_fuzzy_map, BranchingConfig};
use crate::evaluation::{assess_with_model, evaluate_map_observed, PlausibilityAssessment};
use crate::export::{render_event, render_protocol};
use crate::gateway::{ChatResponse, GatewayError, Message, Model};
use crate::prompts::PromptTemplates;
use crate::protocol::{ClaimRef, ProtocolEvent, ReasoningProtocol, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuideKind {
    #[default]
    ProsCons,
    Suspension,
}

impl GuideKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GuideKind::ProsCons => "pros_cons",
            GuideKind::Suspension => "suspension",
        }
    }
}

impl std::str::FromStr for GuideKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pros_cons" => Ok(GuideKind::ProsCons),
            "suspension" => Ok(GuideKind::Suspension),
            other => Err(format!("unknown guide {other:?}; expected pros_cons or suspension")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SessionState {
    Received,
    Brainstormed,
    Mapped,
    Evaluated,
    Drafted,
    Delivered,
    Failed,
}

impl SessionState {
    /// Allowed successor states for a guide. The suspension guide has no
    /// map, so it goes straight from Brainstormed to Evaluated.
    pub fn can_transition(self, to: SessionState, guide: GuideKind) -> bool {
        use SessionState::*;
        match (self, to) {
            (Delivered | Failed, _) => false,
            (_, Failed) => true,
            (Received, Brainstormed) | (Evaluated, Drafted) | (Drafted, Delivered) => true,
            (Brainstormed, Mapped) | (Mapped, Evaluated) => guide == GuideKind::ProsCons,
            (Brainstormed, Evaluated) => guide == GuideKind::Suspension,
            _ => false,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Delivered | SessionState::Failed)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub last_completed: Option<Stage>,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Followup {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuideSession {
    pub id: String,
    pub guide: GuideKind,
    pub problem_statement: String,
    pub state: SessionState,
    /// Every state the session passed through, starting with Received.
    pub history: Vec<SessionState>,
    pub protocol: ReasoningProtocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<ArgumentMap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assessments: Vec<PlausibilityAssessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    /// Backend id of the completion the answer was taken from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub followups: Vec<Followup>,
}

#[derive(Debug, Error)]
pub enum GuideError {
    #[error("problem statement must not be empty")]
    EmptyProblem,
    #[error("the suspension guide needs at least 2 paraphrases, got {0}")]
    TooFewParaphrases(usize),
    #[error("session is {0}; follow-up questions need a delivered or failed session with a protocol")]
    NotReady(SessionState),
    #[error("protocol needs {size} characters but the context budget is {budget}")]
    ProtocolTooLarge { size: usize, budget: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl GuideSession {
    pub fn new(id: impl Into<String>, guide: GuideKind, problem: impl Into<String>) -> Result<Self, GuideError> {
        let problem_statement = problem.into();
        if problem_statement.trim().is_empty() {
            return Err(GuideError::EmptyProblem);
        }
        Ok(GuideSession {
            id: id.into(),
            guide,
            problem_statement,
            state: SessionState::Received,
            history: vec![SessionState::Received],
            protocol: ReasoningProtocol::new(),
            issue: None,
            map: None,
            assessments: Vec::new(),
            answer: None,
            answer_provenance: None,
            failure: None,
            followups: Vec::new(),
        })
    }

    fn transition(&mut self, to: SessionState) {
        assert!(
            self.state.can_transition(to, self.guide),
            "illegal transition {} -> {}",
            self.state,
            to
        );
        self.state = to;
        self.history.push(to);
    }

    fn fail(&mut self, stage: Stage, last_completed: Option<Stage>, cause: String) -> Failure {
        let failure = Failure {
            stage,
            last_completed,
            cause,
        };
        self.protocol.push(ProtocolEvent::StageFailed {
            stage,
            last_completed,
            cause: failure.cause.clone(),
        });
        self.failure = Some(failure.clone());
        self.transition(SessionState::Failed);
        failure
    }

    /// Replays `history` through the transition rules; `None` if any step is
    /// illegal.
    pub fn replay_history(guide: GuideKind, history: &[SessionState]) -> Option<SessionState> {
        let (first, rest) = history.split_first()?;
        if *first != SessionState::Received {
            return None;
        }
        rest.iter()
            .try_fold(*first, |s, &next| s.can_transition(next, guide).then_some(next))
    }

    /// Rendered protocol text.
    pub fn protocol_text(&self) -> String {
        render_protocol(&self.protocol)
    }
}

/// Settings for a guide run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuideConfig {
    pub branching: BranchingConfig,
    /// Maximum concurrent requests per session.
    pub parallelism: usize,
    pub n_paraphrases: usize,
    /// Character budget for the protocol in follow-up prompts.
    pub context_budget: usize,
}

impl Default for GuideConfig {
    fn default() -> Self {
        GuideConfig {
            branching: BranchingConfig::default(),
            parallelism: 4,
            n_paraphrases: 3,
            context_budget: 24_000,
        }
    }
}

/// Receives one notification per completed stage.
pub type StageObserver<'a> = &'a mut dyn FnMut(Stage, serde_json::Value);

/// A guide bound to its client and expert models.
pub struct Guide {
    pub client: Model,
    pub expert: Model,
    pub templates: PromptTemplates,
    pub config: GuideConfig,
}

struct StageError {
    stage: Stage,
    cause: String,
}

fn stage_err<E: fmt::Display>(stage: Stage) -> impl FnOnce(E) -> StageError {
    move |e| StageError {
        stage,
        cause: e.to_string(),
    }
}

static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d+)[.):]\s*(\S.*?)\s*$").expect("regex"));
static ANSWER_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^\s*(?:\*\*)?(?:final )?answer(?:\*\*)?\s*:\s*(.*?)\s*$").expect("regex"));

/// Numbered list items `1. ...` in order of appearance.
pub fn parse_numbered(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| NUMBERED.captures(l))
        .map(|c| c[2].trim_matches('"').to_string())
        .collect()
}

/// The final `Answer:` line of a chain-of-thought solution, or its last
/// non-empty line.
pub fn extract_answer(solution: &str) -> String {
    ANSWER_LINE
        .captures_iter(solution)
        .last()
        .map(|c| c[1].to_string())
        .filter(|a| !a.is_empty())
        .or_else(|| solution.lines().rev().find(|l| !l.trim().is_empty()).map(|l| l.trim().to_string()))
        .unwrap_or_default()
}

impl Guide {
    pub fn new(client: Model, expert: Model, templates: PromptTemplates, config: GuideConfig) -> Self {
        Guide {
            client,
            expert,
            templates,
            config,
        }
    }

    /// Runs the session's guide to completion. Stage failures end in the
    /// Failed state and are recorded in the protocol; only precondition
    /// violations are returned as errors.
    pub fn run(&self, session: &mut GuideSession, observer: StageObserver<'_>) -> Result<(), GuideError> {
        if session.state != SessionState::Received {
            return Err(GuideError::NotReady(session.state));
        }
        let mut last_completed = None;
        let result = match session.guide {
            GuideKind::ProsCons => self.pros_cons(session, &mut last_completed, observer),
            GuideKind::Suspension => {
                if self.config.n_paraphrases < 2 {
                    return Err(GuideError::TooFewParaphrases(self.config.n_paraphrases));
                }
                self.suspension(session, &mut last_completed, observer)
            }
        };
        match result {
            Ok(()) => {
                session.transition(SessionState::Delivered);
                observer(Stage::Delivered, json!({ "answer": session.answer }));
            }
            Err(e) => {
                let f = session.fail(e.stage, last_completed, e.cause);
                observer(Stage::Failed, serde_json::to_value(&f).expect("failure serializes"));
            }
        }
        Ok(())
    }

    fn pros_cons(
        &self,
        s: &mut GuideSession,
        last: &mut Option<Stage>,
        observer: StageObserver<'_>,
    ) -> Result<(), StageError> {
        let problem = s.problem_statement.clone();
        let analysts = Analysts::new(&self.expert, &self.templates);

        let prompt = self
            .templates
            .brainstorm
            .render(&[("problem", &problem)])
            .map_err(stage_err(Stage::Brainstorm))?;
        let trace_text = self.client.ask(&prompt).map_err(stage_err(Stage::Brainstorm))?.content;
        let trace = ReasoningTrace::new(&problem, &trace_text).map_err(stage_err(Stage::Brainstorm))?;
        s.protocol.push(ProtocolEvent::Brainstorm {
            trace: trace_text.clone(),
        });
        s.transition(SessionState::Brainstormed);
        *last = Some(Stage::Brainstorm);
        observer(Stage::Brainstorm, json!({ "trace": trace_text }));

        let issue = analysts.build_issue(&trace).map_err(stage_err(Stage::Issue))?;
        s.issue = Some(issue.clone());
        *last = Some(Stage::Issue);
        observer(Stage::Issue, json!({ "issue": issue }));

        let reasons = analysts
            .extract_reasons(&trace, &issue)
            .map_err(stage_err(Stage::ProsCons))?;
        let list = analysts
            .organize_pros_cons(&reasons, &issue)
            .map_err(stage_err(Stage::ProsCons))?;
        *last = Some(Stage::ProsCons);
        observer(
            Stage::ProsCons,
            json!({
                "reasons": reasons.len(),
                "roots": list.roots.iter().map(|r| r.root.display_text()).collect::<Vec<_>>(),
            }),
        );

        let network = analysts
            .build_network(&list, &issue, self.config.parallelism)
            .map_err(stage_err(Stage::Relevance))?;
        *last = Some(Stage::Relevance);
        observer(
            Stage::Relevance,
            json!({ "claims": network.claims.len(), "edges": network.edges.len() }),
        );

        let map = build_fuzzy_map(&network, &self.config.branching, &issue).map_err(stage_err(Stage::Mapping))?;
        let tree = map.tree_edges().count();
        observer(
            Stage::Mapping,
            json!({ "claims": map.claims.len(), "tree_edges": tree, "fuzzy_edges": map.edges.len() - tree }),
        );
        s.map = Some(map.clone());
        s.transition(SessionState::Mapped);
        *last = Some(Stage::Mapping);

        let refs: HashMap<_, ClaimRef> = map.claims.iter().map(|c| (c.id.clone(), ClaimRef::from(c))).collect();
        let mut assessor = |claim: &Claim, pros: &[&Claim], cons: &[&Claim]| {
            assess_with_model(&self.client, &self.templates, &problem, claim, pros, cons)
        };
        let protocol = &mut s.protocol;
        let mut record = |a: &PlausibilityAssessment| {
            let claim = refs[&a.claim].clone();
            protocol.push(if a.conditional {
                ProtocolEvent::ConditionalAssessment {
                    claim: claim.clone(),
                    verdict: a.verdict,
                    pros: a.considered_pros.iter().map(|id| refs[id].clone()).collect(),
                    cons: a.considered_cons.iter().map(|id| refs[id].clone()).collect(),
                }
            } else {
                ProtocolEvent::LeafAssessment {
                    claim: claim.clone(),
                    verdict: a.verdict,
                }
            });
            if !a.verdict.is_plausible() {
                protocol.push(ProtocolEvent::Pruned { claim: claim.clone() });
            }
            if map.claim(&a.claim).is_some_and(Claim::is_root) {
                protocol.push(ProtocolEvent::CentralVerdict {
                    claim,
                    verdict: a.verdict,
                });
            }
        };
        let assessments =
            evaluate_map_observed(&map, &mut assessor, &mut record).map_err(stage_err(Stage::Evaluation))?;
        let verdicts: Vec<_> = s
            .protocol
            .central_verdicts()
            .into_iter()
            .map(|(c, v)| json!({ "claim": c.display_text(), "verdict": v.label() }))
            .collect();
        s.assessments = assessments;
        s.transition(SessionState::Evaluated);
        *last = Some(Stage::Evaluation);
        observer(Stage::Evaluation, json!({ "central_verdicts": verdicts }));

        let prompt = self
            .templates
            .draft_answer
            .render(&[("problem", &problem), ("protocol", &render_protocol(&s.protocol))])
            .map_err(stage_err(Stage::Draft))?;
        let draft = self.client.ask(&prompt).map_err(stage_err(Stage::Draft))?;
        self.set_answer(s, draft);
        *last = Some(Stage::Draft);
        observer(Stage::Draft, json!({ "answer": s.answer }));
        Ok(())
    }

    fn set_answer(&self, s: &mut GuideSession, resp: ChatResponse) {
        let text = resp.content.trim().to_string();
        s.protocol.push(ProtocolEvent::AnswerDraft { text: text.clone() });
        s.answer = Some(text);
        s.answer_provenance = Some(resp.provenance);
        s.transition(SessionState::Drafted);
    }

    fn suspension(
        &self,
        s: &mut GuideSession,
        last: &mut Option<Stage>,
        observer: StageObserver<'_>,
    ) -> Result<(), StageError> {
        let n = self.config.n_paraphrases;
        let problem = s.problem_statement.clone();

        let prompt = self
            .templates
            .paraphrase
            .render(&[("problem", &problem), ("n", &n.to_string())])
            .map_err(stage_err(Stage::Paraphrase))?;
        let reply = self.expert.ask(&prompt).map_err(stage_err(Stage::Paraphrase))?;
        let mut paraphrases = parse_numbered(&reply.content);
        if paraphrases.len() < n {
            return Err(StageError {
                stage: Stage::Paraphrase,
                cause: format!("expected {n} paraphrases, got {}", paraphrases.len()),
            });
        }
        paraphrases.truncate(n);
        for (i, p) in paraphrases.iter().enumerate() {
            s.protocol.push(ProtocolEvent::Paraphrase {
                index: i + 1,
                text: p.clone(),
            });
        }
        *last = Some(Stage::Paraphrase);
        observer(Stage::Paraphrase, json!({ "paraphrases": paraphrases }));

        let solutions = self.solve_all(&paraphrases).map_err(stage_err(Stage::Solve))?;
        let answers: Vec<String> = solutions.iter().map(|r| extract_answer(&r.content)).collect();
        for (i, (sol, answer)) in solutions.iter().zip(&answers).enumerate() {
            s.protocol.push(ProtocolEvent::Solution {
                index: i + 1,
                text: sol.content.trim().to_string(),
                answer: answer.clone(),
            });
        }
        s.transition(SessionState::Brainstormed);
        *last = Some(Stage::Solve);
        observer(Stage::Solve, json!({ "answers": answers }));

        let mut equivalent = 0;
        let mut inconsistent = Vec::new();
        let mut total = 0;
        for i in 0..n {
            for j in i + 1..n {
                total += 1;
                let q = self
                    .templates
                    .equivalence
                    .render(&[
                        ("problem_a", &paraphrases[i]),
                        ("answer_a", &answers[i]),
                        ("problem_b", &paraphrases[j]),
                        ("answer_b", &answers[j]),
                    ])
                    .map_err(stage_err(Stage::Consistency))?;
                let p = self.expert.yes_probability(&q).map_err(stage_err(Stage::Consistency))?;
                if p >= 0.5 {
                    equivalent += 1;
                } else {
                    inconsistent.push((i + 1, j + 1));
                }
            }
        }
        let consistent = 2 * equivalent > total;
        s.protocol.push(ProtocolEvent::ConsistencyCheck {
            equivalent_pairs: equivalent,
            total_pairs: total,
            inconsistent: inconsistent.clone(),
            consistent,
        });
        s.transition(SessionState::Evaluated);
        *last = Some(Stage::Consistency);
        observer(
            Stage::Consistency,
            json!({ "equivalent_pairs": equivalent, "total_pairs": total, "consistent": consistent }),
        );

        let answer = if consistent {
            ChatResponse {
                content: answers[0].clone(),
                token_logprobs: None,
                provenance: solutions[0].provenance.clone(),
            }
        } else {
            let prompt = self
                .templates
                .suspension_answer
                .render(&[("problem", &problem), ("protocol", &render_protocol(&s.protocol))])
                .map_err(stage_err(Stage::Draft))?;
            self.client.ask(&prompt).map_err(stage_err(Stage::Draft))?
        };
        self.set_answer(s, answer);
        *last = Some(Stage::Draft);
        observer(Stage::Draft, json!({ "answer": s.answer }));
        Ok(())
    }

    /// Client solutions for every formulation, computed concurrently and
    /// returned in input order.
    fn solve_all(&self, problems: &[String]) -> Result<Vec<ChatResponse>, GatewayError> {
        let results: Mutex<Vec<Option<Result<ChatResponse, GatewayError>>>> =
            Mutex::new((0..problems.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..self.config.parallelism.clamp(1, problems.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(p) = problems.get(i) else { break };
                    let r = self
                        .templates
                        .solve
                        .render(&[("problem", p)])
                        .map_err(|e| GatewayError::InvalidRequest(e.to_string()))
                        .and_then(|prompt| self.client.ask(&prompt));
                    results.lock().expect("results lock")[i] = Some(r);
                });
            }
        });
        results
            .into_inner()
            .expect("results lock")
            .into_iter()
            .map(|r| r.expect("every formulation solved"))
            .collect()
    }

    /// Answers a question about a finished session with the client model,
    /// using the rendered protocol as the only context about the
    /// deliberation.
    pub fn answer_followup(&self, session: &mut GuideSession, question: &str) -> Result<ChatResponse, GuideError> {
        if !session.state.is_terminal() || session.protocol.is_empty() {
            return Err(GuideError::NotReady(session.state));
        }
        let protocol = followup_context(&session.protocol, question, self.config.context_budget)?;
        let system = self
            .templates
            .followup
            .render(&[("protocol", &protocol)])
            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
        let resp = self
            .client
            .complete(vec![Message::system(system), Message::user(question)])?;
        session.followups.push(Followup {
            question: question.to_string(),
            answer: resp.content.clone(),
        });
        Ok(resp)
    }
}

/// Protocol text for a follow-up prompt. If the full text exceeds `budget`
/// characters, only central verdicts and events quoting claims whose label
/// or statement the question mentions are kept.
pub fn followup_context(protocol: &ReasoningProtocol, question: &str, budget: usize) -> Result<String, GuideError> {
    let full = render_protocol(protocol);
    if full.chars().count() <= budget {
        return Ok(full);
    }
    let q = question.to_lowercase();
    let named = |c: &ClaimRef| {
        (!c.label.trim().is_empty() && q.contains(&c.label.to_lowercase()))
            || q.contains(&c.statement.to_lowercase().trim_end_matches('.').to_string())
    };
    let kept = protocol
        .events()
        .filter(|e| matches!(e, ProtocolEvent::CentralVerdict { .. }) || e.claims().into_iter().any(named))
        .map(render_event)
        .collect::<Vec<_>>()
        .join("\n\n");
    let size = kept.chars().count();
    if size > budget {
        return Err(GuideError::ProtocolTooLarge { size, budget });
    }
    Ok(kept)
}

/// Runs the pros/cons guide on `problem`.
pub fn run_pros_cons_guide(
    problem: &str,
    client: Model,
    expert: Model,
    config: GuideConfig,
) -> Result<GuideSession, GuideError> {
    let mut session = GuideSession::new("local", GuideKind::ProsCons, problem)?;
    Guide::new(client, expert, PromptTemplates::builtin(), config).run(&mut session, &mut |_, _| {})?;
    Ok(session)
}

/// Runs the suspension guide on `problem` with `n_paraphrases` formulations.
pub fn run_suspension_guide(
    problem: &str,
    client: Model,
    expert: Model,
    n_paraphrases: usize,
) -> Result<GuideSession, GuideError> {
    if n_paraphrases < 2 {
        return Err(GuideError::TooFewParaphrases(n_paraphrases));
    }
    let mut session = GuideSession::new("local", GuideKind::Suspension, problem)?;
    let config = GuideConfig {
        n_paraphrases,
        ..GuideConfig::default()
    };
    Guide::new(client, expert, PromptTemplates::builtin(), config).run(&mut session, &mut |_, _| {})?;
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::Plausibility;
    use crate::gateway::{ScriptEntry, ScriptMode, ScriptedGateway};
    use std::sync::Arc;

    fn model(id: &str, mode: ScriptMode, entries: Vec<ScriptEntry>) -> Model {
        Model::new(Arc::new(ScriptedGateway::new(id, mode, entries)), 0.6, 512)
    }

    fn probe(a: &str, kind: &str) -> String {
        format!("Statement A: {a}\nStatement B: [Tea]: You should drink tea.\n\nDoes statement A provide a reason {kind}")
    }

    /// A tiny problem with one root, one pro and one con.
    fn small_models() -> (Model, Model) {
        let client = model(
            "client",
            ScriptMode::Match,
            vec![
                ScriptEntry::contains("brainstorm the pros and cons", "Tea is calming. But it has caffeine."),
                ScriptEntry::contains("Claim to assess: '[Calm]", "very plausible"),
                ScriptEntry::contains("Claim to assess: '[Caffeine]", "rather implausible"),
                ScriptEntry::contains("Claim to assess: '[Tea]", "rather plausible"),
                ScriptEntry::contains("Draft an answer", "Yes, drink tea."),
            ],
        );
        let expert = model(
            "expert",
            ScriptMode::Match,
            vec![
                ScriptEntry::contains("Describe the central issue", "Should I drink tea?"),
                ScriptEntry::contains("Extract every reason", "- [Calm]: Tea is calming.\n- [Caffeine]: Tea has caffeine."),
                ScriptEntry::contains("Identify the alternative answers", "ROOT [Tea]: You should drink tea.\nPRO R1\nCON R2"),
                ScriptEntry::contains(probe("[Calm]: Tea is calming.", "in support of"), "Yes").with_yes_probability(0.9),
                ScriptEntry::contains(probe("[Caffeine]: Tea has caffeine.", "against"), "Yes").with_yes_probability(0.8),
                ScriptEntry::contains("Statement A", "No").with_yes_probability(0.1).repeating(),
            ],
        );
        (client, expert)
    }

    #[test]
    fn small_run_delivers() {
        let (client, expert) = small_models();
        let s = run_pros_cons_guide("Should I drink tea?", client, expert, GuideConfig::default()).unwrap();
        assert_eq!(s.state, SessionState::Delivered, "{:?}", s.failure);
        assert_eq!(s.answer.as_deref(), Some("Yes, drink tea."));
        assert_eq!(s.answer_provenance.as_deref(), Some("client"));
        assert_eq!(
            s.history,
            [
                SessionState::Received,
                SessionState::Brainstormed,
                SessionState::Mapped,
                SessionState::Evaluated,
                SessionState::Drafted,
                SessionState::Delivered
            ]
        );
        assert_eq!(GuideSession::replay_history(s.guide, &s.history), Some(s.state));
        let verdicts = s.protocol.central_verdicts();
        assert_eq!(verdicts.len(), 1);
        assert_eq!(verdicts[0].1, Plausibility::RatherPlausible);
        let text = s.protocol_text();
        assert!(text.contains("For lack of plausibility"));
        assert!(text.contains("supported by the following plausible reasons:\n[Calm]: Tea is calming.\nand disconfirmed by the following plausible reasons:\nNone."));
        assert_eq!(s.assessments.len(), 3);
    }

    #[test]
    fn empty_problem() {
        let (client, expert) = small_models();
        assert!(matches!(
            run_pros_cons_guide("  ", client, expert, GuideConfig::default()),
            Err(GuideError::EmptyProblem)
        ));
    }

    #[test]
    fn scoring_failure_records_last_stage() {
        let (client, _) = small_models();
        let expert = model(
            "expert",
            ScriptMode::Match,
            vec![
                ScriptEntry::contains("Describe the central issue", "Should I drink tea?"),
                ScriptEntry::contains("Extract every reason", "- [Calm]: Tea is calming."),
                ScriptEntry::contains("Identify the alternative answers", "ROOT [Tea]: You should drink tea.\nPRO R1"),
            ],
        );
        let mut stages = Vec::new();
        let mut s = GuideSession::new("x", GuideKind::ProsCons, "Should I drink tea?").unwrap();
        Guide::new(client, expert, PromptTemplates::builtin(), GuideConfig::default())
            .run(&mut s, &mut |st, _| stages.push(st))
            .unwrap();
        assert_eq!(s.state, SessionState::Failed);
        let f = s.failure.as_ref().unwrap();
        assert_eq!(f.stage, Stage::Relevance);
        assert_eq!(f.last_completed, Some(Stage::ProsCons));
        assert!(matches!(
            s.protocol.events().last(),
            Some(ProtocolEvent::StageFailed { last_completed: Some(Stage::ProsCons), .. })
        ));
        assert_eq!(stages, [Stage::Brainstorm, Stage::Issue, Stage::ProsCons, Stage::Failed]);
        assert_eq!(GuideSession::replay_history(s.guide, &s.history), Some(SessionState::Failed));
    }

    #[test]
    fn transitions() {
        use SessionState::*;
        assert!(Received.can_transition(Failed, GuideKind::ProsCons));
        assert!(!Received.can_transition(Mapped, GuideKind::ProsCons));
        assert!(!Brainstormed.can_transition(Evaluated, GuideKind::ProsCons));
        assert!(Brainstormed.can_transition(Evaluated, GuideKind::Suspension));
        assert!(!Delivered.can_transition(Failed, GuideKind::ProsCons));
        assert_eq!(GuideSession::replay_history(GuideKind::ProsCons, &[Received, Mapped]), None);
    }

    fn suspension_models(answers: [&str; 3], equivalent: f64) -> (Model, Model) {
        let client = model(
            "client",
            ScriptMode::Match,
            vec![
                ScriptEntry::contains("P one", format!("Thinking.\nAnswer: {}", answers[0])),
                ScriptEntry::contains("P two", format!("Thinking.\nAnswer: {}", answers[1])),
                ScriptEntry::contains("P three", format!("Thinking.\nAnswer: {}", answers[2])),
                ScriptEntry::contains("suspend judgment", "I fail to understand the problem."),
            ],
        );
        let expert = model(
            "expert",
            ScriptMode::Match,
            vec![
                ScriptEntry::contains("Paraphrase this problem in 3", "1. P one\n2. P two\n3. P three"),
                ScriptEntry::contains("equivalent in substance", "Yes")
                    .with_yes_probability(equivalent)
                    .repeating(),
            ],
        );
        (client, expert)
    }

    #[test]
    fn suspension_consistent() {
        let (client, expert) = suspension_models(["42", "42", "42"], 0.9);
        let s = run_suspension_guide("What is six times seven?", client, expert, 3).unwrap();
        assert_eq!(s.state, SessionState::Delivered);
        assert_eq!(s.answer.as_deref(), Some("42"));
        assert_eq!(s.answer_provenance.as_deref(), Some("client"));
        assert!(s.map.is_none());
        assert_eq!(GuideSession::replay_history(s.guide, &s.history), Some(SessionState::Delivered));
    }

    #[test]
    fn suspension_inconsistent() {
        let (client, expert) = suspension_models(["1", "2", "3"], 0.1);
        let s = run_suspension_guide("Q?", client, expert, 3).unwrap();
        assert_eq!(s.answer.as_deref(), Some("I fail to understand the problem."));
        let text = s.protocol_text();
        assert!(text.contains("The second formulation of the problem reads:\nP two"));
        assert!(text.contains("0 of 3 pairs"));
    }

    #[test]
    fn suspension_needs_two() {
        let (client, expert) = suspension_models(["1", "1", "1"], 0.9);
        assert!(matches!(
            run_suspension_guide("Q?", client, expert, 1),
            Err(GuideError::TooFewParaphrases(1))
        ));
    }

    #[test]
    fn followup_guards_and_answers() {
        let (client, expert) = small_models();
        let mut s = GuideSession::new("x", GuideKind::ProsCons, "Should I drink tea?").unwrap();
        let guide = Guide::new(client, expert, PromptTemplates::builtin(), GuideConfig::default());
        assert!(matches!(
            guide.answer_followup(&mut s, "Why?"),
            Err(GuideError::NotReady(SessionState::Received))
        ));
        guide.run(&mut s, &mut |_, _| {}).unwrap();
        let followup_client = model(
            "client",
            ScriptMode::Exact,
            vec![ScriptEntry::contains("[Tea]: You should drink tea.", "Because tea is calming.")],
        );
        let g2 = Guide::new(followup_client, guide.expert.clone(), PromptTemplates::builtin(), GuideConfig::default());
        assert_eq!(g2.answer_followup(&mut s, "Why?").unwrap().content, "Because tea is calming.");
        assert_eq!(s.followups.len(), 1);
    }

    #[test]
    fn followup_truncation() {
        let (client, expert) = small_models();
        let s = run_pros_cons_guide("Should I drink tea?", client, expert, GuideConfig::default()).unwrap();
        let full = s.protocol_text();
        let ctx = followup_context(&s.protocol, "What about caffeine?", full.len() - 1).unwrap();
        assert!(ctx.contains("So, all in all"));
        assert!(ctx.contains("[Caffeine]"));
        assert!(!ctx.contains("brainstorming"));
        assert!(matches!(
            followup_context(&s.protocol, "What about caffeine?", 10),
            Err(GuideError::ProtocolTooLarge { budget: 10, .. })
        ));
    }

    #[test]
    fn answer_extraction() {
        assert_eq!(extract_answer("a\nb\nAnswer: 42\n"), "42");
        assert_eq!(extract_answer("a\n**Final answer**: yes"), "yes");
        assert_eq!(extract_answer("no marker\nlast line\n\n"), "last line");
        assert_eq!(parse_numbered("intro\n1. a\n2) b\n"), ["a", "b"]);
    }

    #[test]
    fn guide_kind_names() {
        assert_eq!("suspension".parse::<GuideKind>().unwrap(), GuideKind::Suspension);
        assert_eq!(serde_json::to_string(&GuideKind::ProsCons).unwrap(), "\"pros_cons\"");
        assert!("x".parse::<GuideKind>().is_err());
    }
}
