//! Brute-force and direct-definition checks, independent of the library
//! algorithms they are compared against.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use guided_reasoning::analysts::{ProsConsList, RootEntry};
use guided_reasoning::argmap::{ArgumentMap, Claim, ClaimId, Edge, MapEdge, RelevanceNetwork, Valence};
use guided_reasoning::branching::BranchingConfig;
use guided_reasoning::evaluation::{Plausibility, PlausibilityAssessment};

/// Weight in thousandths. Random weights are multiples of 0.001, so sums
/// compare exactly after this conversion.
pub fn milli(w: f64) -> i64 {
    (w * 1000.0).round() as i64
}

fn valence<R: Rng>(rng: &mut R) -> Valence {
    if rng.gen_bool(0.5) {
        Valence::Support
    } else {
        Valence::Attack
    }
}

/// A complete relevance network with `1..=max_roots` roots and
/// `0..=max_reasons` reasons, claims in random order.
pub fn random_network<R: Rng>(rng: &mut R, max_reasons: usize, max_roots: usize) -> RelevanceNetwork {
    let roots = rng.gen_range(1..=max_roots);
    let reasons = rng.gen_range(0..=max_reasons);
    let mut claims: Vec<Claim> = (0..roots)
        .map(|i| Claim::root(format!("root-{i}"), format!("Root {i}"), format!("Root claim {i}.")))
        .chain((0..reasons).map(|i| Claim::reason(format!("r{i}"), format!("R{i}"), format!("Reason {i}."))))
        .collect();
    claims.shuffle(rng);
    let mut edges = Vec::new();
    for a in &claims {
        for b in &claims {
            if a.id == b.id {
                continue;
            }
            match (a.is_root(), b.is_root()) {
                (true, true) => edges.push(Edge::new(a.id.as_str(), b.id.as_str(), Valence::Attack, 1.0)),
                (true, false) => {}
                _ => {
                    let w = f64::from(rng.gen_range(0..=1000u32)) / 1000.0;
                    edges.push(Edge::new(a.id.as_str(), b.id.as_str(), valence(rng), w));
                }
            }
        }
    }
    edges.shuffle(rng);
    RelevanceNetwork::new(claims, edges).expect("generated network is complete")
}

/// Following target pointers from every reason reaches a root.
fn acyclic(targets: &HashMap<&ClaimId, &ClaimId>, roots: &HashSet<&ClaimId>) -> bool {
    targets.keys().all(|start| {
        let mut cur = *start;
        for _ in 0..=targets.len() {
            if roots.contains(cur) {
                return true;
            }
            cur = targets[cur];
        }
        false
    })
}

/// Exhaustive optimum: tries every assignment of one target per reason and
/// keeps the heaviest acyclic one. Returns the total in thousandths.
pub fn brute_force_optimum(net: &RelevanceNetwork) -> i64 {
    let reasons: Vec<&Claim> = net.reasons().collect();
    let roots: HashSet<&ClaimId> = net.roots().map(|c| &c.id).collect();
    let options: Vec<Vec<&Edge>> = reasons
        .iter()
        .map(|r| net.edges.iter().filter(|e| e.source == r.id).collect())
        .collect();
    let mut best = i64::MIN;
    let mut choice = vec![0usize; reasons.len()];
    loop {
        let picked: Vec<&Edge> = choice.iter().enumerate().map(|(i, &c)| options[i][c]).collect();
        let targets: HashMap<&ClaimId, &ClaimId> = picked.iter().map(|e| (&e.source, &e.target)).collect();
        if acyclic(&targets, &roots) {
            best = best.max(picked.iter().map(|e| milli(e.weight)).sum());
        }
        // Odometer increment.
        let mut i = 0;
        loop {
            if i == choice.len() {
                return best.max(0);
            }
            choice[i] += 1;
            if choice[i] < options[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Checks that `tree` is a branching of `net`: one edge per reason, taken
/// from the network, with no cycles.
pub fn check_branching(net: &RelevanceNetwork, tree: &[Edge]) -> Result<(), String> {
    let roots: HashSet<&ClaimId> = net.roots().map(|c| &c.id).collect();
    let mut targets = HashMap::new();
    for e in tree {
        if !net.edges.contains(e) {
            return Err(format!("edge {}->{} is not in the network", e.source, e.target));
        }
        if roots.contains(&e.source) {
            return Err(format!("root {} has a tree edge", e.source));
        }
        if targets.insert(&e.source, &e.target).is_some() {
            return Err(format!("{} has two tree edges", e.source));
        }
    }
    if targets.len() != net.reasons().count() {
        return Err("some reason has no tree edge".into());
    }
    if !acyclic(&targets, &roots) {
        return Err("tree has a cycle".into());
    }
    Ok(())
}

fn reaches(edges: &[(ClaimId, ClaimId)], from: &ClaimId, to: &ClaimId) -> bool {
    let mut seen = HashSet::new();
    let mut stack = vec![from.clone()];
    while let Some(v) = stack.pop() {
        if &v == to {
            return true;
        }
        if seen.insert(v.clone()) {
            stack.extend(edges.iter().filter(|(s, _)| *s == v).map(|(_, t)| t.clone()));
        }
    }
    false
}

/// Checks an augmented map against its definition: the tree edges are
/// exactly `tree`; every extra edge is a network edge of weight at least
/// the threshold; the map is acyclic; and every omitted eligible reason
/// edge would close a cycle.
pub fn check_augmented(net: &RelevanceNetwork, tree: &[Edge], map: &ArgumentMap, cfg: &BranchingConfig) -> Result<(), String> {
    let tree_in_map: Vec<Edge> = map.edges.iter().filter(|e| e.tree).map(MapEdge::to_edge).collect();
    for t in tree {
        if !tree_in_map.contains(t) {
            return Err(format!("tree edge {}->{} missing", t.source, t.target));
        }
    }
    if tree_in_map.len() != tree.len() {
        return Err("unexpected tree edges".into());
    }
    let roots: HashSet<&ClaimId> = net.roots().map(|c| &c.id).collect();
    let pairs: Vec<(ClaimId, ClaimId)> = map
        .edges
        .iter()
        .filter(|e| !(roots.contains(&e.source) && roots.contains(&e.target)))
        .map(|e| (e.source.clone(), e.target.clone()))
        .collect();
    for e in map.edges.iter().filter(|e| !e.tree) {
        if !net.edges.contains(&e.to_edge()) {
            return Err(format!("extra edge {}->{} is not in the network", e.source, e.target));
        }
        if e.weight < cfg.threshold {
            return Err(format!("extra edge {}->{} below threshold", e.source, e.target));
        }
        let root_root = roots.contains(&e.source) && roots.contains(&e.target);
        if root_root && !cfg.allow_root_root_edges {
            return Err("root-root edge without permission".into());
        }
    }
    for (s, t) in &pairs {
        if reaches(&pairs, t, s) {
            return Err(format!("cycle through {s}->{t}"));
        }
    }
    for e in &net.edges {
        let eligible = e.weight >= cfg.threshold && !roots.contains(&e.source);
        let present = pairs.iter().any(|(s, t)| *s == e.source && *t == e.target);
        if eligible && !present && !reaches(&pairs, &e.target, &e.source) {
            return Err(format!("eligible edge {}->{} omitted without closing a cycle", e.source, e.target));
        }
    }
    Ok(())
}

/// A random valid argument map: every reason gets a tree edge to a root or
/// an earlier reason, plus random extra edges towards earlier claims.
pub fn random_map<R: Rng>(rng: &mut R, max_claims: usize) -> ArgumentMap {
    let n = rng.gen_range(1..=max_claims.max(1));
    let roots = rng.gen_range(1..=n.min(3));
    let mut claims: Vec<Claim> = (0..n)
        .map(|i| {
            if i < roots {
                Claim::root(format!("c{i:02}"), format!("C{i}"), format!("Claim {i}."))
            } else {
                Claim::reason(format!("c{i:02}"), format!("C{i}"), format!("Claim {i}."))
            }
        })
        .collect();
    let mut edges = Vec::new();
    let w = |rng: &mut R| f64::from(rng.gen_range(500..=1000u32)) / 1000.0;
    for i in roots..n {
        let t = rng.gen_range(0..i);
        edges.push(MapEdge::from_edge(
            &Edge::new(claims[i].id.as_str(), claims[t].id.as_str(), valence(rng), w(rng)),
            true,
        ));
        for t2 in 0..i {
            if t2 != t && rng.gen_bool(0.2) {
                edges.push(MapEdge::from_edge(
                    &Edge::new(claims[i].id.as_str(), claims[t2].id.as_str(), valence(rng), w(rng)),
                    false,
                ));
            }
        }
    }
    claims.shuffle(rng);
    ArgumentMap {
        issue: "Random issue?".into(),
        claims,
        edges,
    }
}

/// Checks an evaluation run against the definition of pruned bottom-up
/// assessment under the verdicts in `script`.
pub fn check_evaluation(
    map: &ArgumentMap,
    script: &HashMap<ClaimId, Plausibility>,
    out: &[PlausibilityAssessment],
) -> Result<(), String> {
    if out.len() != map.claims.len() {
        return Err(format!("{} assessments for {} claims", out.len(), map.claims.len()));
    }
    let mut position: HashMap<&ClaimId, usize> = HashMap::new();
    for (i, a) in out.iter().enumerate() {
        if position.insert(&a.claim, i).is_some() {
            return Err(format!("{} assessed twice", a.claim));
        }
        if a.verdict != script[&a.claim] {
            return Err(format!("{} verdict differs from the script", a.claim));
        }
    }
    let roots: HashSet<&ClaimId> = map.roots().map(|c| &c.id).collect();
    let in_edges = |id: &ClaimId| -> Vec<&MapEdge> {
        map.edges
            .iter()
            .filter(|e| &e.target == id && !(roots.contains(&e.source) && roots.contains(&e.target)))
            .collect()
    };
    for (i, a) in out.iter().enumerate() {
        let sources = in_edges(&a.claim);
        for e in &sources {
            if position[&e.source] >= i {
                return Err(format!("{} assessed before its source {}", a.claim, e.source));
            }
        }
        if a.conditional == sources.is_empty() {
            return Err(format!("{} has the wrong conditional flag", a.claim));
        }
        for id in a.considered_pros.iter().chain(&a.considered_cons) {
            let earlier = out[..i].iter().find(|b| &b.claim == id);
            match earlier {
                Some(b) if b.verdict.is_plausible() => {}
                Some(_) => return Err(format!("implausible {id} considered for {}", a.claim)),
                None => return Err(format!("{id} considered for {} before being assessed", a.claim)),
            }
        }
        let expect = |v: Valence| -> HashSet<&ClaimId> {
            sources
                .iter()
                .filter(|e| e.valence == v && script[&e.source].is_plausible())
                .map(|e| &e.source)
                .collect()
        };
        let got_pros: HashSet<&ClaimId> = a.considered_pros.iter().collect();
        let got_cons: HashSet<&ClaimId> = a.considered_cons.iter().collect();
        if got_pros != expect(Valence::Support) || got_cons != expect(Valence::Attack) {
            return Err(format!("{} considered lists differ from plausible sources", a.claim));
        }
        if got_pros.len() != a.considered_pros.len() || got_cons.len() != a.considered_cons.len() {
            return Err(format!("{} lists a reason twice", a.claim));
        }
    }
    Ok(())
}

/// Random pros and cons lists with `1..=max_roots` roots and
/// `0..=max_reasons` reasons distributed over them.
pub fn random_pros_cons<R: Rng>(rng: &mut R, max_roots: usize, max_reasons: usize) -> ProsConsList {
    let roots = rng.gen_range(1..=max_roots);
    let reasons = rng.gen_range(0..=max_reasons);
    let mut list = ProsConsList {
        roots: (0..roots)
            .map(|i| RootEntry {
                root: Claim::root(format!("root-{}", i + 1), format!("Root {i}"), format!("Answer {i}.")),
                pros: Vec::new(),
                cons: Vec::new(),
            })
            .collect(),
    };
    for j in 0..reasons {
        let c = Claim::reason(format!("reason-{:02}", j + 1), format!("L{j}"), format!("Reason number {j}."));
        let entry = &mut list.roots[rng.gen_range(0..roots)];
        if rng.gen_bool(0.5) {
            entry.pros.push(c);
        } else {
            entry.cons.push(c);
        }
    }
    list
}

/// |R|·(|C|−1) + r·(r−1) for `reasons` reasons and `roots` roots.
pub fn expected_edge_count(reasons: usize, roots: usize) -> usize {
    let claims = reasons + roots;
    reasons * claims.saturating_sub(1) + roots * roots.saturating_sub(1)
}
