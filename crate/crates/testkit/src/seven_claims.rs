//! The abstract seven-claim map: central claim A with reasons B, C, D;
//! E backs C; F and G bear on D.

use guided_reasoning::argmap::{ArgumentMap, Claim, Edge, MapEdge, Valence};
use guided_reasoning::evaluation::Plausibility::{self, *};

pub fn map() -> ArgumentMap {
    let claims = ["A", "B", "C", "D", "E", "F", "G"]
        .into_iter()
        .map(|id| {
            let statement = format!("Claim {id}.");
            if id == "A" {
                Claim::root(id, id, statement)
            } else {
                Claim::reason(id, id, statement)
            }
        })
        .collect();
    let e = |s: &str, t: &str, v| MapEdge::from_edge(&Edge::new(s, t, v, 0.8), true);
    ArgumentMap {
        issue: "Is A true?".into(),
        claims,
        edges: vec![
            e("B", "A", Valence::Support),
            e("C", "A", Valence::Attack),
            e("D", "A", Valence::Support),
            e("E", "C", Valence::Support),
            e("F", "D", Valence::Attack),
            e("G", "D", Valence::Support),
        ],
    }
}

/// Scripted verdicts: E, F, G plausible and B implausible as leaves; C
/// plausible and D, A implausible on balance.
pub const VERDICTS: [(&str, Plausibility); 7] = [
    ("A", RatherImplausible),
    ("B", RatherImplausible),
    ("C", RatherPlausible),
    ("D", RatherImplausible),
    ("E", RatherPlausible),
    ("F", RatherPlausible),
    ("G", RatherPlausible),
];

pub fn verdict(id: &str) -> Plausibility {
    VERDICTS
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, p)| *p)
        .unwrap_or_else(|| panic!("no verdict for {id}"))
}
