//! A medical question answered inconsistently across two equivalent
//! formulations, which should make the suspension guide withhold judgment.

use guided_reasoning::gateway::{Model, ScriptEntry, ScriptMode};
use guided_reasoning::prompts::PromptTemplates;

use crate::scripted_model;

pub const PROBLEM: &str =
    "My friend Mo, who has been diagnosed Klinefelter, is drinking a glass of vine once a week. Should he stop?";

pub const PARAPHRASES: [&str; 2] = [
    "Mo has been diagnosed with Klinefelter syndrome and drinks one glass of wine per week. Should he give it up?",
    "My friend Mo, who has an extra X chromosome, is drinking a glass of vine once a week. Should he stop?",
];

pub const SOLUTIONS: [&str; 2] = [
    "Klinefelter syndrome is often treated with testosterone, and alcohol may interact with the condition.\nAnswer: Yes, he should stop drinking.",
    "An extra X chromosome by itself says nothing about alcohol tolerance, and one glass a week is moderate.\nAnswer: It's ok for him to have a glass of vine per week.",
];

pub const SUSPENSION: &str = "I'm sorry, I fail to understand the problem.";

pub const FOLLOWUP_QUESTION: &str = "I see. What was the second formulation of the problem you answered differently?";

pub fn followup_answer() -> String {
    format!("It read \"{}\"", PARAPHRASES[1])
}

/// Client script: solutions for both formulations, the suspension answer,
/// and the reply to [`FOLLOWUP_QUESTION`].
pub fn client_script(t: &PromptTemplates) -> Vec<ScriptEntry> {
    let mut out: Vec<ScriptEntry> = PARAPHRASES
        .iter()
        .zip(SOLUTIONS)
        .map(|(p, s)| ScriptEntry::contains(t.solve.render(&[("problem", p)]).unwrap(), s))
        .collect();
    out.push(ScriptEntry::contains("you should suspend judgment", SUSPENSION));
    out.push(ScriptEntry::contains(FOLLOWUP_QUESTION, followup_answer()));
    out
}

/// Expert script: two paraphrases, judged not equivalent.
pub fn expert_script(t: &PromptTemplates) -> Vec<ScriptEntry> {
    vec![
        ScriptEntry::contains(
            t.paraphrase.render(&[("problem", PROBLEM), ("n", "2")]).unwrap(),
            format!("1. {}\n2. {}", PARAPHRASES[0], PARAPHRASES[1]),
        ),
        ScriptEntry::contains("equivalent in substance", "No")
            .with_yes_probability(0.05)
            .repeating(),
    ]
}

pub fn models() -> (Model, Model) {
    let t = PromptTemplates::builtin();
    (
        scripted_model("client", ScriptMode::Match, client_script(&t), 0.6),
        scripted_model("expert", ScriptMode::Match, expert_script(&t), 0.0),
    )
}

pub const CONSISTENT_PROBLEM: &str = "What is the capital of Australia?";
pub const CONSISTENT_PARAPHRASES: [&str; 3] = [
    "Which city is the capital of Australia?",
    "Name the Australian capital city.",
    "What city serves as Australia's seat of government?",
];

/// Three formulations, all answered "Canberra" and judged equivalent.
pub fn consistent_models() -> (Model, Model) {
    let t = PromptTemplates::builtin();
    let client = CONSISTENT_PARAPHRASES
        .iter()
        .map(|p| {
            ScriptEntry::contains(
                t.solve.render(&[("problem", p)]).unwrap(),
                "The capital is not Sydney but Canberra.\nAnswer: Canberra",
            )
        })
        .collect();
    let expert = vec![
        ScriptEntry::contains(
            t.paraphrase
                .render(&[("problem", CONSISTENT_PROBLEM), ("n", "3")])
                .unwrap(),
            CONSISTENT_PARAPHRASES
                .iter()
                .enumerate()
                .map(|(i, p)| format!("{}. {p}", i + 1))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
        ScriptEntry::contains("equivalent in substance", "Yes")
            .with_yes_probability(0.95)
            .repeating(),
    ];
    (
        scripted_model("client", ScriptMode::Match, client, 0.6),
        scripted_model("expert", ScriptMode::Match, expert, 0.0),
    )
}
