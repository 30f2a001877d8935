//! The car-buying worked example: a brainstorm about whether Bob should buy
//! a Mercedes, reconstructed into 19 reasons below 3 central claims.
//!
//! The scripts answer every prompt the guide sends in that run. Client
//! prompts are matched verbatim and in order; expert prompts are matched
//! verbatim, except for relevance probes between unrelated claims, which
//! fall back to low scores.

use guided_reasoning::argmap::Valence;
use guided_reasoning::evaluation::Plausibility::{self, *};
use guided_reasoning::gateway::{Model, ScriptEntry, ScriptMode};
use guided_reasoning::prompts::PromptTemplates;

use crate::scripted_model;

pub const PROBLEM: &str = include_str!("../fixtures/mercedes_problem.txt");
pub const TRACE: &str = include_str!("../fixtures/mercedes_trace.txt");
pub const ANSWER: &str = include_str!("../fixtures/mercedes_answer.txt");
/// Expected rendered protocol of the scripted run.
pub const GOLDEN_PROTOCOL: &str = include_str!("../fixtures/mercedes_protocol.txt");
pub const ISSUE: &str = "Should Bob buy a Mercedes?";

/// Probabilities the expert assigns to the intended relation of a reason.
pub const P_INTENDED: f64 = 0.9;
pub const P_OTHER_VALENCE: f64 = 0.1;
/// Fallback probabilities for every other pair.
pub const P_FALLBACK_SUPPORT: f64 = 0.2;
pub const P_FALLBACK_ATTACK: f64 = 0.1;

pub struct Item {
    pub key: &'static str,
    pub label: &'static str,
    pub statement: &'static str,
    pub verdict: Plausibility,
}

pub struct ReasonItem {
    pub item: Item,
    /// Key of the claim this reason bears on.
    pub target: &'static str,
    pub valence: Valence,
}

const fn item(key: &'static str, label: &'static str, statement: &'static str, verdict: Plausibility) -> Item {
    Item {
        key,
        label,
        statement,
        verdict,
    }
}

const fn reason(
    key: &'static str,
    label: &'static str,
    statement: &'static str,
    verdict: Plausibility,
    target: &'static str,
    valence: Valence,
) -> ReasonItem {
    ReasonItem {
        item: item(key, label, statement, verdict),
        target,
        valence,
    }
}

use Valence::{Attack, Support};

pub const ROOTS: [Item; 3] = [
    item("buy", "Buy a Mercedes", "Bob should buy a Mercedes.", RatherImplausible),
    item(
        "alt",
        "Consider Alternative Brands",
        "Bob should consider exploring other car brands that offer reliable and affordable options, such as Toyota, Honda, and Subaru.",
        RatherPlausible,
    ),
    item("lease", "Lease a Car", "Bob should lease a car.", RatherPlausible),
];

/// Reasons in extraction order.
pub const REASONS: [ReasonItem; 19] = [
    reason("relneed", "Reliability", "Bob needs a car that is reliable.", VeryPlausible, "relm", Support),
    reason(
        "relm",
        "Reliability",
        "Mercedes is known for producing reliable cars, which could make it a good choice for Bob's needs.",
        RatherPlausible,
        "buy",
        Support,
    ),
    reason("luxury", "Luxury", "Mercedes cars are luxurious.", RatherPlausible, "buy", Support),
    reason(
        "comfort",
        "Comfort and Enjoyment",
        "Mercedes cars come with various features that could make Bob's driving experience more comfortable and enjoyable.",
        RatherPlausible,
        "buy",
        Support,
    ),
    reason("resale", "Resale Value", "Mercedes cars hold their value well over time.", RatherPlausible, "buy", Support),
    reason("luxneed", "Luxury", "Bob needs a car that is luxurious.", RatherImplausible, "buy", Support),
    reason(
        "afford",
        "Affordability",
        "Buying a used Mercedes could be more affordable for Bob.",
        RatherPlausible,
        "buy",
        Support,
    ),
    reason("expensive", "Expensiveness", "Mercedes cars are expensive.", RatherPlausible, "buy", Attack),
    reason("futuresale", "Future Sale", "Bob plans to sell the car in the future.", RatherPlausible, "toyota", Support),
    reason(
        "toyota",
        "Alternative Brands",
        "Bob could consider Toyota as an alternative car brand.",
        RatherPlausible,
        "difficulty",
        Support,
    ),
    reason(
        "honda",
        "Alternative Brands",
        "Bob could consider Honda as an alternative car brand.",
        RatherPlausible,
        "difficulty",
        Support,
    ),
    reason(
        "subaru",
        "Alternative Brands",
        "Bob could consider Subaru as an alternative car brand.",
        RatherPlausible,
        "difficulty",
        Support,
    ),
    reason(
        "difficulty",
        "Difficulty in finding a cheap option",
        "Bob may find it challenging to find a cheap option that meets his needs.",
        RatherPlausible,
        "buy",
        Attack,
    ),
    reason("maintenance", "Maintenance Cost", "Mercedes cars require regular maintenance.", RatherPlausible, "buy", Attack),
    reason(
        "ownership",
        "Cost of Ownership",
        "Regular maintenance could add to the overall cost of ownership.",
        RatherPlausible,
        "buy",
        Attack,
    ),
    reason("insurance", "Insurance Cost", "Mercedes cars are expensive to insure.", RatherPlausible, "buy", Attack),
    reason("protect", "Protecting Investment", "Bob wants to protect his investment.", VeryPlausible, "buy", Attack),
    reason(
        "lease1",
        "Reason 1",
        "Leasing a car could help Bob save money on the upfront cost of a car.",
        RatherPlausible,
        "lease",
        Support,
    ),
    reason(
        "lease2",
        "Reason 2",
        "Leasing a car could help Bob potentially lower his monthly payments.",
        RatherPlausible,
        "lease",
        Support,
    ),
];

/// Expected assessment sequence: claim key, considered pros, considered
/// cons, and whether the assessment is conditional.
pub const EVALUATION: [(&str, &[&str], &[&str], bool); 22] = [
    ("relneed", &[], &[], false),
    ("relm", &["relneed"], &[], true),
    ("luxury", &[], &[], false),
    ("comfort", &[], &[], false),
    ("resale", &[], &[], false),
    ("luxneed", &[], &[], false),
    ("afford", &[], &[], false),
    ("expensive", &[], &[], false),
    ("futuresale", &[], &[], false),
    ("toyota", &["futuresale"], &[], true),
    ("honda", &[], &[], false),
    ("subaru", &[], &[], false),
    ("difficulty", &["toyota", "honda", "subaru"], &[], true),
    ("maintenance", &[], &[], false),
    ("ownership", &[], &[], false),
    ("insurance", &[], &[], false),
    ("protect", &[], &[], false),
    (
        "buy",
        &["relm", "luxury", "comfort", "resale", "afford"],
        &["expensive", "difficulty", "maintenance", "ownership", "insurance", "protect"],
        true,
    ),
    ("alt", &[], &[], false),
    ("lease1", &[], &[], false),
    ("lease2", &[], &[], false),
    ("lease", &["lease1", "lease2"], &[], true),
];

fn find(key: &str) -> &'static Item {
    ROOTS
        .iter()
        .chain(REASONS.iter().map(|r| &r.item))
        .find(|i| i.key == key)
        .unwrap_or_else(|| panic!("unknown fixture key {key}"))
}

/// `[label]: statement` of a fixture claim.
pub fn display(key: &str) -> String {
    let i = find(key);
    format!("[{}]: {}", i.label, i.statement)
}

pub fn verdict(key: &str) -> Plausibility {
    find(key).verdict
}

pub fn problem() -> &'static str {
    PROBLEM.trim()
}

pub fn answer() -> &'static str {
    ANSWER.trim()
}

fn numbered_reasons() -> String {
    REASONS
        .iter()
        .enumerate()
        .map(|(i, r)| format!("R{}: {}", i + 1, display(r.item.key)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn bullets(keys: &[&str]) -> String {
    if keys.is_empty() {
        "None.".into()
    } else {
        keys.iter().map(|k| format!("- {}", display(k))).collect::<Vec<_>>().join("\n")
    }
}

/// Client script, consumed strictly in order.
pub fn client_script(t: &PromptTemplates) -> Vec<ScriptEntry> {
    let mut out = vec![ScriptEntry::contains(
        t.brainstorm.render(&[("problem", problem())]).unwrap(),
        TRACE.trim_end(),
    )];
    for (key, pros, cons, _) in EVALUATION {
        let claim = display(key);
        let prompt = if pros.is_empty() && cons.is_empty() {
            t.assess_unconditional
                .render(&[("problem", problem()), ("claim", &claim)])
                .unwrap()
        } else {
            t.assess_conditional
                .render(&[
                    ("problem", problem()),
                    ("claim", &claim),
                    ("pros", &bullets(pros)),
                    ("cons", &bullets(cons)),
                ])
                .unwrap()
        };
        out.push(ScriptEntry::contains(prompt, verdict(key).label()));
    }
    out.push(ScriptEntry::contains("Draft an answer to the original problem", answer()));
    out
}

fn probe(t: &PromptTemplates, a: &str, b: &str, valence: Valence) -> String {
    let tpl = match valence {
        Valence::Support => &t.support_probe,
        Valence::Attack => &t.attack_probe,
    };
    tpl.render(&[("issue", ISSUE), ("claim_a", &display(a)), ("claim_b", &display(b))])
        .unwrap()
}

/// Expert script, matched against the first unused fitting entry.
pub fn expert_script(t: &PromptTemplates) -> Vec<ScriptEntry> {
    let trace = TRACE.trim_end();
    let mut out = vec![
        ScriptEntry::contains(
            t.issue.render(&[("problem", problem()), ("trace", trace)]).unwrap(),
            ISSUE,
        ),
        ScriptEntry::contains(
            t.extract_reasons.render(&[("issue", ISSUE), ("trace", trace)]).unwrap(),
            REASONS
                .iter()
                .map(|r| format!("- {}", display(r.item.key)))
                .collect::<Vec<_>>()
                .join("\n"),
        ),
    ];
    let mut list = vec![format!("ROOT {}", display("buy"))];
    list.extend((1..=7).map(|i| format!("PRO R{i}")));
    list.extend((8..=17).map(|i| format!("CON R{i}")));
    list.push(format!("ROOT {}", display("alt")));
    list.push(format!("ROOT {}", display("lease")));
    list.push("PRO R18".into());
    list.push("PRO R19".into());
    out.push(ScriptEntry::contains(
        t.organize
            .render(&[("issue", ISSUE), ("reasons", &numbered_reasons())])
            .unwrap(),
        list.join("\n"),
    ));
    for r in &REASONS {
        for v in [Valence::Support, Valence::Attack] {
            let p = if v == r.valence { P_INTENDED } else { P_OTHER_VALENCE };
            out.push(
                ScriptEntry::contains(probe(t, r.item.key, r.target, v), if p > 0.5 { "Yes" } else { "No" })
                    .with_yes_probability(p),
            );
        }
    }
    out.push(
        ScriptEntry::contains("reason in support of statement B?", "No")
            .with_yes_probability(P_FALLBACK_SUPPORT)
            .repeating(),
    );
    out.push(
        ScriptEntry::contains("reason against statement B?", "No")
            .with_yes_probability(P_FALLBACK_ATTACK)
            .repeating(),
    );
    out
}

/// Client and expert models for the scripted run, with backend ids
/// "client" and "expert".
pub fn models() -> (Model, Model) {
    let t = PromptTemplates::builtin();
    (
        scripted_model("client", ScriptMode::Exact, client_script(&t), 0.6),
        scripted_model("expert", ScriptMode::Match, expert_script(&t), 0.0),
    )
}
