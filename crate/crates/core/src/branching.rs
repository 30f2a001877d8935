//! Maximum-weight branching over a relevance network and threshold
//! augmentation into a fuzzy argument map.
//!
//! Each reason must pick exactly one target such that no cycle arises. On the
//! reversed graph (target -> reason) this is a maximum spanning arborescence
//! below a virtual super-root that feeds every root claim, which is what
//! [`maximum_branching`] computes with Chu-Liu/Edmonds cycle contraction.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::argmap::{ArgumentMap, ClaimId, Edge, MapEdge, RelevanceNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingConfig {
    /// Minimum weight for augmentation edges.
    pub threshold: f64,
    #[serde(default)]
    pub allow_root_root_edges: bool,
}

impl Default for BranchingConfig {
    fn default() -> Self {
        BranchingConfig {
            threshold: 0.5,
            allow_root_root_edges: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BranchingError {
    #[error("relevance network has no claims")]
    EmptyNetwork,
    #[error("relevance network has no root claim")]
    NoRoot,
    #[error("reason {0} has no candidate target")]
    Unreachable(ClaimId),
    #[error("branching threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
}

impl BranchingConfig {
    pub fn validate(&self) -> Result<(), BranchingError> {
        if (0.0..=1.0).contains(&self.threshold) {
            Ok(())
        } else {
            Err(BranchingError::InvalidThreshold(self.threshold))
        }
    }
}

/// Sum of edge weights in the order given.
pub fn total_weight<'a>(edges: impl IntoIterator<Item = &'a Edge>) -> f64 {
    edges.into_iter().map(|e| e.weight).sum()
}

#[derive(Debug, Clone)]
struct Arc {
    from: usize,
    to: usize,
    weight: f64,
    /// Rank of the original (source, target) pair; smaller wins ties.
    key: usize,
}

/// Picks, for every reason, the target that maximises total weight subject
/// to acyclicity. Returns one edge per reason, in claim order.
pub fn maximum_branching(network: &RelevanceNetwork) -> Result<Vec<Edge>, BranchingError> {
    if network.claims.is_empty() {
        return Err(BranchingError::EmptyNetwork);
    }
    if network.roots().next().is_none() {
        return Err(BranchingError::NoRoot);
    }
    let n = network.claims.len();
    let index: HashMap<&ClaimId, usize> = network.claims.iter().enumerate().map(|(i, c)| (&c.id, i)).collect();

    // Candidate edges reason -> other, ranked by (source id, target id).
    let mut candidates: Vec<&Edge> = network
        .edges
        .iter()
        .filter(|e| {
            let s = &network.claims[index[&e.source]];
            !s.is_root() && e.source != e.target
        })
        .collect();
    candidates.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));

    // Vertex n is the super-root; vertex i is claim i. Reversed orientation:
    // an arc target -> source gives `source` its parent `target`.
    let super_root = n;
    let mut arcs = Vec::with_capacity(candidates.len() + n);
    for (key, e) in candidates.iter().enumerate() {
        arcs.push(Arc {
            from: index[&e.target],
            to: index[&e.source],
            weight: e.weight,
            key,
        });
    }
    for (i, c) in network.claims.iter().enumerate() {
        if c.is_root() {
            arcs.push(Arc {
                from: super_root,
                to: i,
                weight: 0.0,
                key: candidates.len() + i,
            });
        }
    }
    for (i, c) in network.claims.iter().enumerate() {
        if !c.is_root() && !arcs.iter().any(|a| a.to == i) {
            return Err(BranchingError::Unreachable(c.id.clone()));
        }
    }

    let chosen = max_arborescence(n + 1, super_root, &arcs);
    let mut parent_arc: Vec<Option<&Arc>> = vec![None; n];
    for i in chosen {
        parent_arc[arcs[i].to] = Some(&arcs[i]);
    }
    Ok(network
        .claims
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_root())
        .map(|(i, _)| {
            let arc = parent_arc[i].expect("every reason has a parent");
            candidates[arc.key].clone()
        })
        .collect())
}

fn better(a: &Arc, b: &Arc) -> bool {
    match a.weight.partial_cmp(&b.weight).unwrap_or(Ordering::Equal) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.key < b.key,
    }
}

/// Maximum spanning arborescence rooted at `root`. Returns indices into
/// `arcs`, one per non-root vertex. Assumes every vertex has an in-arc.
fn max_arborescence(n: usize, root: usize, arcs: &[Arc]) -> Vec<usize> {
    let mut best: Vec<Option<usize>> = vec![None; n];
    for (i, a) in arcs.iter().enumerate() {
        if a.to == root || a.from == a.to {
            continue;
        }
        if best[a.to].is_none_or(|j| better(a, &arcs[j])) {
            best[a.to] = Some(i);
        }
    }

    let Some(cycle) = find_cycle(n, root, &best, arcs) else {
        return (0..n).filter(|&v| v != root).map(|v| best[v].expect("in-arc")).collect();
    };

    // Contract the cycle into a single vertex.
    let mut in_cycle = vec![false; n];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    let mut new_id = vec![0usize; n];
    let mut next = 0;
    for v in 0..n {
        if !in_cycle[v] {
            new_id[v] = next;
            next += 1;
        }
    }
    let cycle_vertex = next;
    for &v in &cycle {
        new_id[v] = cycle_vertex;
    }

    let mut contracted = Vec::new();
    let mut origin = Vec::new();
    for (i, a) in arcs.iter().enumerate() {
        let (u, v) = (new_id[a.from], new_id[a.to]);
        if u == v {
            continue;
        }
        let weight = if in_cycle[a.to] {
            a.weight - arcs[best[a.to].expect("cycle vertex has in-arc")].weight
        } else {
            a.weight
        };
        contracted.push(Arc {
            from: u,
            to: v,
            weight,
            key: a.key,
        });
        origin.push(i);
    }

    let sub = max_arborescence(next + 1, new_id[root], &contracted);
    let mut chosen: Vec<usize> = sub.iter().map(|&j| origin[j]).collect();
    let entry = chosen
        .iter()
        .map(|&i| arcs[i].to)
        .find(|&v| in_cycle[v])
        .expect("contracted vertex has an entering arc");
    for &v in &cycle {
        if v != entry {
            chosen.push(best[v].expect("cycle vertex has in-arc"));
        }
    }
    chosen
}

fn find_cycle(n: usize, root: usize, best: &[Option<usize>], arcs: &[Arc]) -> Option<Vec<usize>> {
    // 0 = unvisited, 1 = on current walk, 2 = finished.
    let mut mark = vec![0u8; n];
    mark[root] = 2;
    for start in 0..n {
        let mut path = Vec::new();
        let mut v = start;
        while mark[v] == 0 {
            mark[v] = 1;
            path.push(v);
            match best[v] {
                Some(i) => v = arcs[i].from,
                None => break,
            }
        }
        if mark[v] == 1 {
            let pos = path.iter().position(|&p| p == v).expect("on path");
            return Some(path[pos..].to_vec());
        }
        for p in path {
            mark[p] = 2;
        }
    }
    None
}

/// Turns a branching into a fuzzy argument map by adding non-tree edges of
/// weight at least `cfg.threshold`, strongest first, skipping any edge that
/// would close a cycle among reasons.
pub fn augment(network: &RelevanceNetwork, tree: &[Edge], cfg: &BranchingConfig, issue: &str) -> ArgumentMap {
    let index: HashMap<&ClaimId, usize> = network.claims.iter().enumerate().map(|(i, c)| (&c.id, i)).collect();
    let is_root = |id: &ClaimId| network.claims[index[id]].is_root();
    let n = network.claims.len();

    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut edges: Vec<MapEdge> = Vec::new();
    for e in tree {
        succ[index[&e.source]].push(index[&e.target]);
        edges.push(MapEdge::from_edge(e, true));
    }

    let in_tree = |e: &Edge| tree.iter().any(|t| t.source == e.source && t.target == e.target);
    let mut extra: Vec<&Edge> = network
        .edges
        .iter()
        .filter(|e| e.weight >= cfg.threshold && !in_tree(e))
        .collect();
    extra.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| a.target.cmp(&b.target))
    });

    for e in extra {
        let (s, t) = (index[&e.source], index[&e.target]);
        if is_root(&e.source) {
            if cfg.allow_root_root_edges && is_root(&e.target) {
                edges.push(MapEdge::from_edge(e, false));
            }
            continue;
        }
        if reaches(&succ, t, s) {
            continue;
        }
        succ[s].push(t);
        edges.push(MapEdge::from_edge(e, false));
    }
    edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));

    ArgumentMap {
        issue: issue.to_string(),
        claims: network.claims.clone(),
        edges,
    }
}

fn reaches(succ: &[Vec<usize>], from: usize, to: usize) -> bool {
    let mut stack = vec![from];
    let mut seen = vec![false; succ.len()];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        stack.extend(&succ[v]);
    }
    false
}

/// Maximum branching followed by augmentation.
pub fn build_fuzzy_map(
    network: &RelevanceNetwork,
    cfg: &BranchingConfig,
    issue: &str,
) -> Result<ArgumentMap, BranchingError> {
    cfg.validate()?;
    let tree = maximum_branching(network)?;
    Ok(augment(network, &tree, cfg, issue))
}
