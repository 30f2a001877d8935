//! Claims, valenced weighted edges, relevance networks and argument maps.
//!
//! Edges are oriented child to target: a reason points at the claim it bears
//! on. The JSON form of [`ArgumentMap`] is the interchange format used by the
//! CLI, the HTTP service and the UI:
//!
//! ```json
//! {"issue": "...",
//!  "claims": [{"id": "...", "label": "...", "statement": "...", "kind": "RootClaim"}],
//!  "edges": [{"source": "...", "target": "...", "valence": "Support", "weight": 0.9, "tree": true}]}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque claim identifier, unique within its containing structure.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClaimId(String);

impl ClaimId {
    pub fn new(id: impl Into<String>) -> Self {
        ClaimId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClaimId {
    fn from(s: &str) -> Self {
        ClaimId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClaimKind {
    RootClaim,
    Reason,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Claim {
    pub id: ClaimId,
    /// Short title, e.g. "Reliability".
    pub label: String,
    /// One-sentence natural-language claim.
    pub statement: String,
    pub kind: ClaimKind,
}

impl Claim {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        statement: impl Into<String>,
        kind: ClaimKind,
    ) -> Self {
        Claim {
            id: ClaimId::new(id),
            label: label.into(),
            statement: statement.into(),
            kind,
        }
    }

    pub fn root(id: impl Into<String>, label: impl Into<String>, statement: impl Into<String>) -> Self {
        Self::new(id, label, statement, ClaimKind::RootClaim)
    }

    pub fn reason(id: impl Into<String>, label: impl Into<String>, statement: impl Into<String>) -> Self {
        Self::new(id, label, statement, ClaimKind::Reason)
    }

    pub fn is_root(&self) -> bool {
        self.kind == ClaimKind::RootClaim
    }

    /// `[label]: statement`, the form used in prompts and protocols.
    pub fn display_text(&self) -> String {
        format!("[{}]: {}", self.label, self.statement)
    }

    fn shape_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.statement.trim().is_empty() {
            out.push(format!("{} has an empty statement", self.id));
        }
        if self.label.trim().is_empty() {
            out.push(format!("{} has an empty label", self.id));
        }
        if self.label.contains('\n') || self.label.contains('\r') {
            out.push(format!("{} has a label containing a newline", self.id));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Valence {
    Support,
    Attack,
}

impl Valence {
    pub fn as_str(self) -> &'static str {
        match self {
            Valence::Support => "Support",
            Valence::Attack => "Attack",
        }
    }
}

/// A valenced relation from `source` to the claim it bears on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: ClaimId,
    pub target: ClaimId,
    pub valence: Valence,
    /// Probabilistic relevance in `[0, 1]`.
    pub weight: f64,
}

impl Edge {
    pub fn new(source: impl Into<String>, target: impl Into<String>, valence: Valence, weight: f64) -> Self {
        Edge {
            source: ClaimId::new(source),
            target: ClaimId::new(target),
            valence,
            weight,
        }
    }

    fn shape_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.weight) {
            out.push(format!(
                "edge {}->{} has weight {} outside [0, 1]",
                self.source, self.target, self.weight
            ));
        }
        if self.source == self.target {
            out.push(format!("edge {}->{} is a self-loop", self.source, self.target));
        }
        out
    }
}

/// An edge as it appears in an [`ArgumentMap`]: tree edges form the
/// branching skeleton, the rest are fuzzy augmentation edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEdge {
    pub source: ClaimId,
    pub target: ClaimId,
    pub valence: Valence,
    pub weight: f64,
    pub tree: bool,
}

impl MapEdge {
    pub fn from_edge(edge: &Edge, tree: bool) -> Self {
        MapEdge {
            source: edge.source.clone(),
            target: edge.target.clone(),
            valence: edge.valence,
            weight: edge.weight,
            tree,
        }
    }

    pub fn to_edge(&self) -> Edge {
        Edge {
            source: self.source.clone(),
            target: self.target.clone(),
            valence: self.valence,
            weight: self.weight,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ArgmapError {
    #[error("invalid relevance network: {}", .0.join("; "))]
    InvalidNetwork(Vec<String>),
    #[error("cycle detected among non-root claims involving {0}")]
    CycleDetected(ClaimId),
}

/// Complete weighted directed graph over reasons and root claims.
///
/// Every reason has exactly one edge to every other claim; root claims only
/// carry mutual maximal attack edges among themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceNetwork {
    pub claims: Vec<Claim>,
    pub edges: Vec<Edge>,
}

impl RelevanceNetwork {
    /// Builds a network and checks every structural invariant.
    pub fn new(claims: Vec<Claim>, edges: Vec<Edge>) -> Result<Self, ArgmapError> {
        let net = RelevanceNetwork { claims, edges };
        let violations = net.violations();
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(ArgmapError::InvalidNetwork(violations))
        }
    }

    pub fn claim(&self, id: &ClaimId) -> Option<&Claim> {
        self.claims.iter().find(|c| &c.id == id)
    }

    pub fn roots(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| c.is_root())
    }

    pub fn reasons(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| !c.is_root())
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let kinds = match claim_kinds(&self.claims) {
            Ok(k) => k,
            Err(v) => return v,
        };
        for c in &self.claims {
            out.extend(c.shape_violations());
        }
        let mut seen: HashSet<(&ClaimId, &ClaimId)> = HashSet::new();
        for e in &self.edges {
            out.extend(e.shape_violations());
            let (Some(&sk), Some(&_tk)) = (kinds.get(&e.source), kinds.get(&e.target)) else {
                out.push(format!("edge {}->{} references an unknown claim", e.source, e.target));
                continue;
            };
            if !seen.insert((&e.source, &e.target)) {
                out.push(format!("edge {}->{} appears more than once", e.source, e.target));
            }
            if sk == ClaimKind::RootClaim {
                let tk = kinds[&e.target];
                if tk != ClaimKind::RootClaim {
                    out.push(format!("root {} has an outgoing edge to reason {}", e.source, e.target));
                } else if e.valence != Valence::Attack || e.weight != 1.0 {
                    out.push(format!(
                        "root edge {}->{} must be an Attack of weight 1.0",
                        e.source, e.target
                    ));
                }
            }
        }
        for a in &self.claims {
            for b in &self.claims {
                if a.id == b.id {
                    continue;
                }
                let needed = !a.is_root() || b.is_root();
                if needed && !seen.contains(&(&a.id, &b.id)) {
                    out.push(format!("missing edge {}->{}", a.id, b.id));
                }
            }
        }
        out
    }
}

fn claim_kinds(claims: &[Claim]) -> Result<HashMap<&ClaimId, ClaimKind>, Vec<String>> {
    let mut kinds = HashMap::new();
    let mut dups = Vec::new();
    for c in claims {
        if kinds.insert(&c.id, c.kind).is_some() {
            dups.push(format!("duplicate claim id {}", c.id));
        }
    }
    if dups.is_empty() {
        Ok(kinds)
    } else {
        Err(dups)
    }
}

/// Claims plus valenced weighted edges, with the branching skeleton marked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentMap {
    pub issue: String,
    pub claims: Vec<Claim>,
    pub edges: Vec<MapEdge>,
}

impl ArgumentMap {
    pub fn claim(&self, id: &ClaimId) -> Option<&Claim> {
        self.claims.iter().find(|c| &c.id == id)
    }

    pub fn roots(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| c.is_root())
    }

    pub fn tree_edges(&self) -> impl Iterator<Item = &MapEdge> {
        self.edges.iter().filter(|e| e.tree)
    }

    pub fn tree_target(&self, id: &ClaimId) -> Option<&ClaimId> {
        self.tree_edges().find(|e| &e.source == id).map(|e| &e.target)
    }

    /// True for edges between two root claims; those never take part in
    /// evaluation or acyclicity checks.
    pub fn is_root_root(&self, edge: &MapEdge) -> bool {
        let root = |id: &ClaimId| self.claim(id).map(Claim::is_root).unwrap_or(false);
        root(&edge.source) && root(&edge.target)
    }

    /// Edges that carry plausibility from a reason to the claim it targets.
    pub fn evaluation_edges(&self) -> impl Iterator<Item = &MapEdge> {
        self.edges.iter().filter(move |e| !self.is_root_root(e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("argument map serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Lists every invariant breach of `map`; empty iff the map is well formed.
pub fn validate_map(map: &ArgumentMap) -> Vec<String> {
    let kinds = match claim_kinds(&map.claims) {
        Ok(k) => k,
        Err(v) => return v,
    };
    let mut out = Vec::new();
    for c in &map.claims {
        out.extend(c.shape_violations());
    }
    if !map.claims.iter().any(Claim::is_root) {
        out.push("map has no root claim".to_string());
    }

    let mut tree_out: BTreeMap<&ClaimId, usize> = BTreeMap::new();
    let mut seen = HashSet::new();
    for e in &map.edges {
        out.extend(e.to_edge().shape_violations());
        let (Some(&sk), Some(&tk)) = (kinds.get(&e.source), kinds.get(&e.target)) else {
            out.push(format!("edge {}->{} references an unknown claim", e.source, e.target));
            continue;
        };
        if !seen.insert((&e.source, &e.target)) {
            out.push(format!("edge {}->{} appears more than once", e.source, e.target));
        }
        if sk == ClaimKind::RootClaim {
            if tk != ClaimKind::RootClaim {
                out.push(format!("root {} has an outgoing edge to reason {}", e.source, e.target));
            }
            if e.tree {
                out.push(format!("{} is a root claim but has a tree target", e.source));
            }
        } else if e.tree {
            *tree_out.entry(&e.source).or_default() += 1;
        }
    }
    for c in map.claims.iter().filter(|c| !c.is_root()) {
        let n = tree_out.get(&c.id).copied().unwrap_or(0);
        if n != 1 {
            out.push(format!("{} has {} tree targets", c.id, n));
        }
    }
    if out.is_empty() {
        if let Err(ArgmapError::CycleDetected(id)) = topological_levels(map) {
            out.push(format!("cycle among non-root claims through {id}"));
        }
    }
    out
}

/// Groups claims into evaluation levels: every claim comes after every
/// non-root claim that targets it, and all root claims share the last level.
pub fn topological_levels(map: &ArgumentMap) -> Result<Vec<BTreeSet<ClaimId>>, ArgmapError> {
    let index: HashMap<&ClaimId, usize> = map.claims.iter().enumerate().map(|(i, c)| (&c.id, i)).collect();
    let n = map.claims.len();
    let mut indegree = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in map.evaluation_edges() {
        let (Some(&s), Some(&t)) = (index.get(&e.source), index.get(&e.target)) else {
            continue;
        };
        succ[s].push(t);
        indegree[t] += 1;
    }

    // Longest-path layering via Kahn's algorithm.
    let mut level = vec![0usize; n];
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut done = 0;
    while let Some(v) = queue.pop() {
        done += 1;
        for &w in &succ[v] {
            level[w] = level[w].max(level[v] + 1);
            indegree[w] -= 1;
            if indegree[w] == 0 {
                queue.push(w);
            }
        }
    }
    if done < n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).expect("unfinished vertex");
        return Err(ArgmapError::CycleDetected(map.claims[stuck].id.clone()));
    }

    let reason_depth = map
        .claims
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_root())
        .map(|(i, _)| level[i] + 1)
        .max()
        .unwrap_or(0);
    let mut levels: Vec<BTreeSet<ClaimId>> = vec![BTreeSet::new(); reason_depth + 1];
    for (i, c) in map.claims.iter().enumerate() {
        let l = if c.is_root() { reason_depth } else { level[i] };
        levels[l].insert(c.id.clone());
    }
    levels.retain(|l| !l.is_empty());
    Ok(levels)
}
