//! Renderers for argument maps (DOT, SVG, JSON) and reasoning protocols.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::argmap::{ArgumentMap, ClaimId, MapEdge, Valence};
use crate::protocol::{ClaimRef, ProtocolEvent, ReasoningProtocol};

/// Width at which node labels are wrapped.
pub const WRAP_WIDTH: usize = 40;

const SUPPORT_COLOR: &str = "#2e7d32";
const ATTACK_COLOR: &str = "#c62828";

fn edge_color(v: Valence) -> &'static str {
    match v {
        Valence::Support => SUPPORT_COLOR,
        Valence::Attack => ATTACK_COLOR,
    }
}

/// Greedy word wrap; words longer than `width` get a line of their own.
pub fn wrap(text: &str, width: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut line = String::new();
    for word in text.split_whitespace() {
        if !line.is_empty() && line.chars().count() + 1 + word.chars().count() > width {
            lines.push(std::mem::take(&mut line));
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(word);
    }
    if !line.is_empty() || lines.is_empty() {
        lines.push(line);
    }
    lines
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn sorted_edges(map: &ArgumentMap) -> Vec<&MapEdge> {
    let mut edges: Vec<&MapEdge> = map.edges.iter().collect();
    edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    edges
}

/// Graphviz digraph of the map, nodes and edges sorted by id.
pub fn render_dot(map: &ArgumentMap) -> String {
    let mut out = String::from("digraph argmap {\n");
    out.push_str("  rankdir=BT;\n");
    out.push_str("  node [shape=box, style=\"rounded,filled\", fillcolor=\"#f7f7f7\", fontname=\"Helvetica\"];\n");
    out.push_str("  edge [fontname=\"Helvetica\", fontsize=10];\n");
    let mut claims: Vec<_> = map.claims.iter().collect();
    claims.sort_by(|a, b| a.id.cmp(&b.id));
    for c in claims {
        let label = wrap(&c.display_text(), WRAP_WIDTH)
            .iter()
            .map(|l| dot_escape(l))
            .collect::<Vec<_>>()
            .join("\\n");
        let extra = if c.is_root() {
            ", fillcolor=\"#dce8f5\", penwidth=2"
        } else {
            ""
        };
        let _ = writeln!(out, "  \"{}\" [label=\"{}\"{}];", dot_escape(c.id.as_str()), label, extra);
    }
    for e in sorted_edges(map) {
        let style = if e.tree { "" } else { ", style=dashed" };
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [color=\"{}\", label=\"{:.2}\"{}];",
            dot_escape(e.source.as_str()),
            dot_escape(e.target.as_str()),
            edge_color(e.valence),
            e.weight,
            style
        );
    }
    out.push_str("}\n");
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c if (c as u32) < 0x20 && !matches!(c, '\t' | '\n' | '\r') => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Layer of each claim: roots are 0, every other claim sits one below its
/// tree target.
pub fn tree_layers(map: &ArgumentMap) -> Vec<Vec<ClaimId>> {
    let parent: HashMap<&ClaimId, &ClaimId> = map.tree_edges().map(|e| (&e.source, &e.target)).collect();
    let index: HashMap<&ClaimId, usize> = map.claims.iter().enumerate().map(|(i, c)| (&c.id, i)).collect();
    let depth = |id: &ClaimId| {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = parent.get(cur) {
            d += 1;
            cur = p;
            if d > map.claims.len() {
                break;
            }
        }
        d
    };
    let mut layers: Vec<Vec<ClaimId>> = Vec::new();
    for c in &map.claims {
        let d = depth(&c.id);
        if layers.len() <= d {
            layers.resize(d + 1, Vec::new());
        }
        layers[d].push(c.id.clone());
    }
    // Within a layer, keep children of the same parent together and follow
    // the parent order of the layer above.
    for d in 1..layers.len() {
        let pos: HashMap<ClaimId, usize> = layers[d - 1].iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        layers[d].sort_by_key(|id| {
            let p = parent.get(id).and_then(|p| pos.get(*p)).copied().unwrap_or(usize::MAX);
            (p, index[id])
        });
    }
    layers.retain(|l| !l.is_empty());
    layers
}

const NODE_W: f64 = 260.0;
const H_GAP: f64 = 30.0;
const V_GAP: f64 = 70.0;
const LINE_H: f64 = 16.0;
const PAD: f64 = 10.0;
const MARGIN: f64 = 20.0;

/// Self-contained SVG drawing of the map, layered by tree depth with the
/// roots on top.
pub fn render_svg(map: &ArgumentMap) -> String {
    let layers = tree_layers(map);
    let lines: HashMap<&ClaimId, Vec<String>> = map
        .claims
        .iter()
        .map(|c| (&c.id, wrap(&c.display_text(), WRAP_WIDTH)))
        .collect();
    let widest = layers.iter().map(Vec::len).max().unwrap_or(1).max(1) as f64;
    let width = 2.0 * MARGIN + widest * NODE_W + (widest - 1.0) * H_GAP;

    // (x, y, w, h) per claim.
    let mut boxes: HashMap<ClaimId, (f64, f64, f64, f64)> = HashMap::new();
    let mut y = MARGIN;
    for layer in &layers {
        let h = layer
            .iter()
            .map(|id| lines[id].len() as f64 * LINE_H + 2.0 * PAD)
            .fold(0.0, f64::max);
        let n = layer.len() as f64;
        let row = n * NODE_W + (n - 1.0) * H_GAP;
        let mut x = (width - row) / 2.0;
        for id in layer {
            boxes.insert(id.clone(), (x, y, NODE_W, h));
            x += NODE_W + H_GAP;
        }
        y += h + V_GAP;
    }
    let height = (y - V_GAP + MARGIN).max(2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="Helvetica, Arial, sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "  <title>{}</title>", xml_escape(&map.issue));
    out.push_str("  <defs>\n");
    for (name, color) in [("support", SUPPORT_COLOR), ("attack", ATTACK_COLOR)] {
        let _ = writeln!(
            out,
            r#"    <marker id="arrow-{name}" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="8" markerHeight="8" orient="auto-start-reverse"><path d="M 0 0 L 10 5 L 0 10 z" fill="{color}"/></marker>"#
        );
    }
    out.push_str("  </defs>\n");

    for e in sorted_edges(map) {
        let (Some(s), Some(t)) = (boxes.get(&e.source), boxes.get(&e.target)) else {
            continue;
        };
        let (x1, y1) = (s.0 + s.2 / 2.0, s.1);
        let (x2, y2) = (t.0 + t.2 / 2.0, t.1 + t.3);
        let (name, color) = match e.valence {
            Valence::Support => ("support", SUPPORT_COLOR),
            Valence::Attack => ("attack", ATTACK_COLOR),
        };
        let dash = if e.tree { "" } else { r#" stroke-dasharray="6 4""# };
        let _ = writeln!(
            out,
            r#"  <g class="edge {name}{}" data-source="{}" data-target="{}">"#,
            if e.tree { "" } else { " fuzzy" },
            xml_escape(e.source.as_str()),
            xml_escape(e.target.as_str())
        );
        let _ = writeln!(
            out,
            r#"    <line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{color}" stroke-width="1.5"{dash} marker-end="url(#arrow-{name})"/>"#
        );
        let _ = writeln!(
            out,
            r#"    <text x="{:.1}" y="{:.1}" fill="{color}" font-size="10" text-anchor="middle">{:.2}</text>"#,
            (x1 + x2) / 2.0 + 4.0,
            (y1 + y2) / 2.0,
            e.weight
        );
        out.push_str("  </g>\n");
    }

    for (depth, layer) in layers.iter().enumerate() {
        for id in layer {
            let c = map.claim(id).expect("layer ids come from the map");
            let (x, y, w, h) = boxes[id];
            let (class, fill, stroke_w) = if c.is_root() {
                ("claim root", "#dce8f5", 2.0)
            } else {
                ("claim", "#f7f7f7", 1.0)
            };
            let _ = writeln!(
                out,
                r#"  <g class="{class}" id="claim-{}" data-layer="{depth}">"#,
                xml_escape(id.as_str())
            );
            let _ = writeln!(
                out,
                r##"    <rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" rx="6" fill="{fill}" stroke="#555555" stroke-width="{stroke_w}"/>"##
            );
            let _ = write!(out, r#"    <text x="{:.1}" y="{:.1}">"#, x + PAD, y + PAD + 12.0);
            for (i, line) in lines[id].iter().enumerate() {
                let dy = if i == 0 { 0.0 } else { LINE_H };
                let _ = write!(out, r#"<tspan x="{:.1}" dy="{dy:.0}">{}</tspan>"#, x + PAD, xml_escape(line));
            }
            out.push_str("</text>\n  </g>\n");
        }
    }
    out.push_str("</svg>\n");
    out
}

fn quote(c: &ClaimRef) -> String {
    format!("'{}'", c.display_text())
}

fn reason_lines(claims: &[ClaimRef]) -> String {
    if claims.is_empty() {
        "None.".to_string()
    } else {
        claims.iter().map(ClaimRef::display_text).collect::<Vec<_>>().join("\n")
    }
}

fn ordinal(n: usize) -> String {
    const WORDS: [&str; 10] = [
        "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
    ];
    match n.checked_sub(1).and_then(|i| WORDS.get(i)) {
        Some(w) => w.to_string(),
        None => format!("{n}th"),
    }
}

/// Plain-text rendering of a single protocol event.
pub fn render_event(event: &ProtocolEvent) -> String {
    match event {
        ProtocolEvent::Brainstorm { trace } => format!(
            "Let's start by brainstorming relevant considerations and think through the problem I've been given.\n{}\n\nNow, let's reconsider this step by step, and systematically balance the different reasons.",
            trace.trim()
        ),
        ProtocolEvent::LeafAssessment { claim, verdict } => format!(
            "In view of the initial problem description, the claim {} is assessed as {}.",
            quote(claim),
            verdict
        ),
        ProtocolEvent::ConditionalAssessment {
            claim,
            verdict,
            pros,
            cons,
        } => format!(
            "In view of the above considerations, the claim {} is assessed as {}, since it is supported by the following plausible reasons:\n{}\nand disconfirmed by the following plausible reasons:\n{}",
            quote(claim),
            verdict,
            reason_lines(pros),
            reason_lines(cons)
        ),
        ProtocolEvent::Pruned { .. } => {
            "For lack of plausibility, this claim will not be considered when balancing pros and cons below.".to_string()
        }
        ProtocolEvent::CentralVerdict { claim, verdict } => format!(
            "So, all in all, the central claim {} is assessed as {}.",
            quote(claim),
            verdict
        ),
        ProtocolEvent::AnswerDraft { text } => {
            format!("Based on this deliberation, the following answer has been drafted:\n{}", text.trim())
        }
        ProtocolEvent::Paraphrase { index, text } => {
            format!("The {} formulation of the problem reads:\n{}", ordinal(*index), text.trim())
        }
        ProtocolEvent::Solution { index, text, answer } => format!(
            "Solving the {} formulation of the problem step by step:\n{}\nMy answer to the {} formulation: {}",
            ordinal(*index),
            text.trim(),
            ordinal(*index),
            answer.trim()
        ),
        ProtocolEvent::ConsistencyCheck {
            equivalent_pairs,
            total_pairs,
            inconsistent,
            consistent,
        } => {
            let mut s = format!(
                "Comparing my answers pairwise, {equivalent_pairs} of {total_pairs} pairs of answers are equivalent."
            );
            for (a, b) in inconsistent {
                let _ = write!(
                    s,
                    "\nMy answers to the {} and the {} formulation of the problem disagree.",
                    ordinal(*a),
                    ordinal(*b)
                );
            }
            s.push_str(if *consistent {
                "\nMy answers are consistent."
            } else {
                "\nMy answers are inconsistent, so I suspend judgment: I fail to understand the problem."
            });
            s
        }
        ProtocolEvent::StageFailed {
            stage,
            last_completed,
            cause,
        } => format!(
            "The deliberation failed at stage {} (last completed stage: {}): {}",
            stage,
            last_completed.map(|s| s.as_str()).unwrap_or("none"),
            cause
        ),
    }
}

/// The protocol as text, one paragraph per event.
pub fn render_protocol(protocol: &ReasoningProtocol) -> String {
    protocol.events().map(render_event).collect::<Vec<_>>().join("\n\n")
}

/// Map JSON in the argument-map schema.
pub fn render_json(map: &ArgumentMap) -> String {
    map.to_json()
}
