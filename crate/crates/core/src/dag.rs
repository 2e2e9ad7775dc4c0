//! The Lexis-DAG: sources, intermediates and targets, where every non-source
//! node is the ordered concatenation of its in-neighbors.
//!
//! Edges are stored implicitly as each node's parse (its ordered in-neighbor
//! list). A node used twice in one parse contributes two edges, and the
//! position in the list is the occurrence index.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::token::{Sequence, Token};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Source,
    Intermediate,
    Target,
}

impl NodeKind {
    pub fn code(self) -> char {
        match self {
            NodeKind::Source => 'S',
            NodeKind::Intermediate => 'M',
            NodeKind::Target => 'T',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    kind: NodeKind,
    string: Sequence,
    parse: Vec<NodeId>,
    out_degree: usize,
}

impl Node {
    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    /// The expanded token string this node represents.
    pub fn string(&self) -> &Sequence {
        &self.string
    }

    /// Ordered in-neighbors; empty for sources.
    pub fn parse(&self) -> &[NodeId] {
        &self.parse
    }

    /// Number of uses as a parse part, counting multiplicity.
    pub fn out_degree(&self) -> usize {
        self.out_degree
    }
}

/// How a non-source node is assembled from its parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Parse {
    pub owner: NodeId,
    pub parts: Vec<NodeId>,
}

/// One occurrence of a part run inside an owner's parse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occurrence {
    pub owner: NodeId,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("target {target} uses token #{} which is not a source", token.0)]
    UnknownToken { target: usize, token: Token },
    #[error("target {target} has length {len}; at least two parts are required")]
    TargetTooShort { target: usize, len: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not a target")]
    NotATarget(NodeId),
    #[error("node {0} is a target and cannot be used as a part")]
    TargetAsPart(NodeId),
    #[error("a composite needs at least two parts, got {0}")]
    TooFewParts(usize),
    #[error("a new intermediate needs at least two occurrences, got {0}")]
    TooFewOccurrences(usize),
    #[error("parse of {owner} does not contain the part run at offset {offset}")]
    OccurrenceMismatch { owner: NodeId, offset: usize },
    #[error("occurrences at offsets {first} and {second} of {owner} overlap")]
    OverlappingOccurrences { owner: NodeId, first: usize, second: usize },
    #[error("occurrence covers the whole parse of {owner}")]
    WholeParse { owner: NodeId },
    #[error("an intermediate with the same string already exists: {existing}")]
    DuplicateString { existing: NodeId },
}

/// The outcome of a structural edit: which node was created or reused,
/// which owners were rewritten, and which intermediates were repaired away.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rewiring {
    pub node: NodeId,
    pub created: bool,
    /// Surviving nodes whose parse changed, ascending.
    pub changed: Vec<NodeId>,
    /// Intermediates deleted or inlined by the constraint repair.
    pub removed: Vec<NodeId>,
    pub cost_before: usize,
    pub cost_after: usize,
}

impl Rewiring {
    pub fn savings(&self) -> i64 {
        self.cost_before as i64 - self.cost_after as i64
    }
}

/// Raw node description used to build DAGs without invariant checks
/// (snapshot loading, and deliberately invalid fixtures).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawNode {
    pub kind: NodeKind,
    pub string: Sequence,
    pub parse: Vec<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Constraint {
    /// Sources represent exactly one token and have no parse.
    SourceShape,
    /// A parse references a node that does not exist.
    MissingPart,
    /// A composite has fewer than two parts.
    TooFewParts,
    /// The concatenation of the parts differs from the node's string.
    ConcatenationMismatch,
    /// A part is not strictly shorter than its owner (acyclicity).
    NotShorter,
    /// A target is used as a part.
    TargetOutDegree,
    /// An intermediate is used fewer than two times.
    IntermediateOutDegree,
    /// Cached out-degree disagrees with the parses.
    OutDegreeCache,
    /// Two intermediates carry the same string.
    DuplicateString,
    /// Cached edge cost disagrees with the parses.
    EdgeCostCache,
    /// The string or source index is out of sync with the nodes.
    IndexMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub node: Option<NodeId>,
    pub constraint: Constraint,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(id) => write!(f, "{id}: {:?}", self.constraint),
            None => write!(f, "dag: {:?}", self.constraint),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LexisDag {
    nodes: Vec<Option<Node>>,
    sources: HashMap<Token, NodeId>,
    strings: HashMap<Sequence, NodeId>,
    edges: usize,
}

impl LexisDag {
    pub fn new() -> Self {
        Self::default()
    }

    /// Flat DAG: every target is parsed directly from its tokens.
    pub fn new_flat(
        sources: impl IntoIterator<Item = Token>,
        targets: &[Sequence],
    ) -> Result<Self, DagError> {
        let mut dag = LexisDag::new();
        for t in sources {
            dag.add_source(t);
        }
        for (i, target) in targets.iter().enumerate() {
            if target.len() < 2 {
                return Err(DagError::TargetTooShort { target: i, len: target.len() });
            }
            if let Some(&token) = target.iter().find(|t| !dag.sources.contains_key(t)) {
                return Err(DagError::UnknownToken { target: i, token });
            }
        }
        for target in targets {
            dag.add_flat_target(target)?;
        }
        Ok(dag)
    }

    /// Builds a DAG from raw nodes without checking any constraint. Caches
    /// (out-degrees, edge cost, indices) are recomputed from the parses.
    pub fn from_raw(nodes: impl IntoIterator<Item = (NodeId, RawNode)>) -> Self {
        let mut dag = LexisDag::new();
        for (id, raw) in nodes {
            if dag.nodes.len() <= id.index() {
                dag.nodes.resize(id.index() + 1, None);
            }
            dag.nodes[id.index()] = Some(Node {
                kind: raw.kind,
                string: raw.string,
                parse: raw.parse,
                out_degree: 0,
            });
        }
        dag.recount();
        dag
    }

    fn recount(&mut self) {
        self.sources.clear();
        self.strings.clear();
        self.edges = 0;
        for slot in self.nodes.iter_mut().flatten() {
            slot.out_degree = 0;
        }
        for i in 0..self.nodes.len() {
            let Some(node) = &self.nodes[i] else { continue };
            let id = NodeId(i as u32);
            match node.kind {
                NodeKind::Source => {
                    if let Some(&t) = node.string.first() {
                        self.sources.entry(t).or_insert(id);
                    }
                }
                NodeKind::Intermediate => {
                    self.strings.entry(node.string.clone()).or_insert(id);
                }
                NodeKind::Target => {}
            }
            let parse = node.parse.clone();
            self.edges += parse.len();
            for p in parse {
                if let Some(Some(part)) = self.nodes.get_mut(p.index()) {
                    part.out_degree += 1;
                }
            }
        }
    }

    /// Registers a source node for `token`; idempotent.
    pub fn add_source(&mut self, token: Token) -> NodeId {
        if let Some(&id) = self.sources.get(&token) {
            return id;
        }
        let id = self.push(Node {
            kind: NodeKind::Source,
            string: Sequence::single(token),
            parse: Vec::new(),
            out_degree: 0,
        });
        self.sources.insert(token, id);
        id
    }

    /// Adds a target parsed directly from its tokens.
    pub fn add_flat_target(&mut self, target: &Sequence) -> Result<NodeId, DagError> {
        let parts = target
            .iter()
            .map(|t| {
                self.sources
                    .get(t)
                    .copied()
                    .ok_or(DagError::UnknownToken { target: 0, token: *t })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.add_target(parts)
    }

    /// Adds a target whose parse is `parts`; its string is their concatenation.
    pub fn add_target(&mut self, parts: Vec<NodeId>) -> Result<NodeId, DagError> {
        if parts.len() < 2 {
            return Err(DagError::TooFewParts(parts.len()));
        }
        let mut string = Vec::new();
        for &p in &parts {
            let node = self.node(p).ok_or(DagError::UnknownNode(p))?;
            if node.kind == NodeKind::Target {
                return Err(DagError::TargetAsPart(p));
            }
            string.extend_from_slice(&node.string);
        }
        for &p in &parts {
            self.node_mut(p).out_degree += 1;
        }
        self.edges += parts.len();
        Ok(self.push(Node {
            kind: NodeKind::Target,
            string: Sequence::from_vec_unchecked(string),
            parse: parts,
            out_degree: 0,
        }))
    }

    fn push(&mut self, node: Node) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Some(node));
        id
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.index()).and_then(Option::as_ref)
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id.index()].as_mut().expect("live node")
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.node(id).is_some()
    }

    /// Live nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_ref().map(|n| (NodeId(i as u32), n)))
    }

    pub fn ids_of(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |(_, n)| n.kind == kind).map(|(id, _)| id)
    }

    pub fn sources(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids_of(NodeKind::Source)
    }

    pub fn intermediates(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids_of(NodeKind::Intermediate)
    }

    pub fn targets(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids_of(NodeKind::Target)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.ids_of(kind).count()
    }

    /// Upper bound (exclusive) on node ids ever issued.
    pub fn id_bound(&self) -> usize {
        self.nodes.len()
    }

    pub fn source_node(&self, token: Token) -> Option<NodeId> {
        self.sources.get(&token).copied()
    }

    pub fn intermediate_with_string(&self, string: &[Token]) -> Option<NodeId> {
        self.strings.get(string).copied()
    }

    pub fn string(&self, id: NodeId) -> &Sequence {
        &self.node(id).expect("live node").string
    }

    pub fn parse(&self, id: NodeId) -> &[NodeId] {
        &self.node(id).expect("live node").parse
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.node(id).expect("live node").kind
    }

    /// Total number of edges, counting multiplicity: the sum of parse lengths.
    pub fn edge_cost(&self) -> usize {
        self.edges
    }

    /// Edge cost of the flat DAG supporting the same targets.
    pub fn flat_cost(&self) -> usize {
        self.targets().map(|t| self.string(t).len()).sum()
    }

    /// Concatenated expansion of a run of parts.
    pub fn expand(&self, parts: &[NodeId]) -> Vec<Token> {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.string(p));
        }
        out
    }

    /// Live nodes ordered so that every part precedes its owners.
    pub fn topological_order(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.nodes().map(|(id, _)| id).collect();
        ids.sort_by_key(|&id| (self.string(id).len(), id));
        ids
    }

    /// Longest source-to-node path length for every node, indexed by id.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.nodes.len()];
        for id in self.topological_order() {
            depth[id.index()] = self
                .parse(id)
                .iter()
                .map(|p| depth[p.index()] + 1)
                .max()
                .unwrap_or(0);
        }
        depth
    }

    pub fn node_depth(&self, id: NodeId) -> usize {
        self.depths()[id.index()]
    }

    /// Mean depth over targets; zero when there are none.
    pub fn avg_depth<F: Real>(&self) -> F {
        let depth = self.depths();
        let (sum, n) = self
            .targets()
            .fold((0usize, 0usize), |(s, n), t| (s + depth[t.index()], n + 1));
        F::ratio(sum, n)
    }

    /// Checks occurrences of `parts` for the contract shared by
    /// [`add_intermediate`](Self::add_intermediate) and
    /// [`merge_occurrences`](Self::merge_occurrences), returning them grouped
    /// by owner with sorted offsets.
    fn check_occurrences(
        &self,
        parts: &[NodeId],
        occurrences: &[Occurrence],
    ) -> Result<BTreeMap<NodeId, Vec<usize>>, DagError> {
        if parts.len() < 2 {
            return Err(DagError::TooFewParts(parts.len()));
        }
        for &p in parts {
            let node = self.node(p).ok_or(DagError::UnknownNode(p))?;
            if node.kind == NodeKind::Target {
                return Err(DagError::TargetAsPart(p));
            }
        }
        let mut grouped: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for occ in occurrences {
            grouped.entry(occ.owner).or_default().push(occ.offset);
        }
        let len = parts.len();
        for (&owner, offsets) in grouped.iter_mut() {
            let node = self.node(owner).ok_or(DagError::UnknownNode(owner))?;
            offsets.sort_unstable();
            for (i, &off) in offsets.iter().enumerate() {
                if i > 0 && off < offsets[i - 1] + len {
                    return Err(DagError::OverlappingOccurrences {
                        owner,
                        first: offsets[i - 1],
                        second: off,
                    });
                }
                if node.parse.get(off..off + len) != Some(parts) {
                    return Err(DagError::OccurrenceMismatch { owner, offset: off });
                }
                if off == 0 && len == node.parse.len() {
                    return Err(DagError::WholeParse { owner });
                }
            }
        }
        Ok(grouped)
    }

    /// Replaces each listed occurrence with a single edge from `with`.
    fn rewrite(&mut self, parts: &[NodeId], grouped: &BTreeMap<NodeId, Vec<usize>>, with: NodeId) {
        let len = parts.len();
        for (&owner, offsets) in grouped {
            let old = std::mem::take(&mut self.node_mut(owner).parse);
            let mut new = Vec::with_capacity(old.len());
            let mut i = 0;
            let mut k = 0;
            while i < old.len() {
                if k < offsets.len() && offsets[k] == i {
                    new.push(with);
                    i += len;
                    k += 1;
                } else {
                    new.push(old[i]);
                    i += 1;
                }
            }
            self.edges -= old.len() - new.len();
            self.node_mut(owner).parse = new;
        }
        let r = grouped.values().map(Vec::len).sum::<usize>();
        for &p in parts {
            self.node_mut(p).out_degree -= r;
        }
        self.node_mut(with).out_degree += r;
    }

    /// Materializes `parts` as a new intermediate and rewires every listed
    /// occurrence to it. Parts left with a single use are inlined into the
    /// new node so that every intermediate keeps out-degree at least two.
    ///
    /// Without repairs the edge cost drops by exactly `R*l - R - l`.
    pub fn add_intermediate(
        &mut self,
        parts: &[NodeId],
        occurrences: &[Occurrence],
    ) -> Result<Rewiring, DagError> {
        let grouped = self.check_occurrences(parts, occurrences)?;
        if occurrences.len() < 2 {
            return Err(DagError::TooFewOccurrences(occurrences.len()));
        }
        let string = self.expand(parts);
        if let Some(&existing) = self.strings.get(string.as_slice()) {
            return Err(DagError::DuplicateString { existing });
        }
        let cost_before = self.edges;
        let string = Sequence::from_vec_unchecked(string);
        let id = self.push(Node {
            kind: NodeKind::Intermediate,
            string: string.clone(),
            parse: parts.to_vec(),
            out_degree: 0,
        });
        self.strings.insert(string, id);
        for &p in parts {
            self.node_mut(p).out_degree += 1;
        }
        self.edges += parts.len();
        self.rewrite(parts, &grouped, id);

        let mut changed: BTreeSet<NodeId> = grouped.keys().copied().collect();
        let removed = self.repair(parts.iter().copied(), Some(id), &mut changed);
        changed.remove(&id);
        Ok(Rewiring {
            node: id,
            created: true,
            changed: changed.into_iter().collect(),
            removed,
            cost_before,
            cost_after: self.edges,
        })
    }

    /// Rewires occurrences of `parts` to an existing intermediate carrying the
    /// same string, then repairs parts whose out-degree fell below two.
    pub fn merge_occurrences(
        &mut self,
        existing: NodeId,
        parts: &[NodeId],
        occurrences: &[Occurrence],
    ) -> Result<Rewiring, DagError> {
        let grouped = self.check_occurrences(parts, occurrences)?;
        let target_node = self.node(existing).ok_or(DagError::UnknownNode(existing))?;
        if target_node.kind != NodeKind::Intermediate
            || target_node.string.tokens() != self.expand(parts).as_slice()
        {
            return Err(DagError::OccurrenceMismatch {
                owner: existing,
                offset: 0,
            });
        }
        let cost_before = self.edges;
        self.rewrite(parts, &grouped, existing);
        let mut changed: BTreeSet<NodeId> = grouped.keys().copied().collect();
        let removed = self.repair(parts.iter().copied(), None, &mut changed);
        Ok(Rewiring {
            node: existing,
            created: false,
            changed: changed.into_iter().collect(),
            removed,
            cost_before,
            cost_after: self.edges,
        })
    }

    /// Deletes targets, then repairs intermediates left with fewer than two
    /// uses: unused ones are deleted, singly-used ones are inlined into their
    /// remaining user.
    pub fn remove_targets(&mut self, ids: &[NodeId]) -> Result<Rewiring, DagError> {
        for &id in ids {
            match self.node(id) {
                None => return Err(DagError::UnknownNode(id)),
                Some(n) if n.kind != NodeKind::Target => return Err(DagError::NotATarget(id)),
                _ => {}
            }
        }
        let cost_before = self.edges;
        let mut freed = Vec::new();
        let mut seen = BTreeSet::new();
        for &id in ids {
            if !seen.insert(id) {
                continue;
            }
            let node = self.nodes[id.index()].take().expect("checked above");
            self.edges -= node.parse.len();
            for p in node.parse {
                self.node_mut(p).out_degree -= 1;
                freed.push(p);
            }
        }
        let mut changed = BTreeSet::new();
        let mut removed = self.repair(freed, None, &mut changed);
        removed.extend(seen);
        removed.sort_unstable();
        Ok(Rewiring {
            node: ids.first().copied().unwrap_or(NodeId(0)),
            created: false,
            changed: changed.into_iter().filter(|id| self.contains(*id)).collect(),
            removed,
            cost_before,
            cost_after: self.edges,
        })
    }

    /// Restores the out-degree constraint around `candidates`. `sole_user`
    /// names the only possible remaining user when it is known.
    fn repair(
        &mut self,
        candidates: impl IntoIterator<Item = NodeId>,
        sole_user: Option<NodeId>,
        changed: &mut BTreeSet<NodeId>,
    ) -> Vec<NodeId> {
        let mut work: Vec<NodeId> = candidates.into_iter().collect();
        work.sort_unstable();
        work.dedup();
        work.reverse();
        let mut removed = Vec::new();
        while let Some(v) = work.pop() {
            let Some(node) = self.node(v) else { continue };
            if node.kind != NodeKind::Intermediate || node.out_degree >= 2 {
                continue;
            }
            let node = self.nodes[v.index()].take().expect("live");
            self.strings.remove(&node.string);
            removed.push(v);
            changed.remove(&v);
            if node.out_degree == 0 {
                self.edges -= node.parse.len();
                for &p in &node.parse {
                    self.node_mut(p).out_degree -= 1;
                    work.push(p);
                }
            } else {
                let user = match sole_user.filter(|&u| self.parse(u).contains(&v)) {
                    Some(u) => u,
                    None => self.find_user(v).expect("out-degree one implies a user"),
                };
                let parse = &mut self.node_mut(user).parse;
                let pos = parse.iter().position(|&p| p == v).expect("user contains v");
                parse.splice(pos..=pos, node.parse.iter().copied());
                self.edges -= 1;
                changed.insert(user);
            }
        }
        removed.sort_unstable();
        removed
    }

    fn find_user(&self, v: NodeId) -> Option<NodeId> {
        self.nodes().find(|(_, n)| n.parse.contains(&v)).map(|(id, _)| id)
    }

    /// Lists every violated constraint; empty iff the DAG is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |node: Option<NodeId>, constraint| out.push(Violation { node, constraint });
        let mut degree = vec![0usize; self.nodes.len()];
        let mut edges = 0usize;
        let mut seen_strings: HashMap<&Sequence, NodeId> = HashMap::new();

        for (id, node) in self.nodes() {
            edges += node.parse.len();
            for &p in &node.parse {
                if let Some(d) = degree.get_mut(p.index()) {
                    *d += 1;
                }
            }
            match node.kind {
                NodeKind::Source => {
                    if node.string.len() != 1 || !node.parse.is_empty() {
                        push(Some(id), Constraint::SourceShape);
                    } else if self.sources.get(&node.string[0]) != Some(&id) {
                        push(Some(id), Constraint::IndexMismatch);
                    }
                    continue;
                }
                NodeKind::Intermediate => {
                    if let Some(_first) = seen_strings.insert(&node.string, id) {
                        push(Some(id), Constraint::DuplicateString);
                    } else if self.strings.get(&node.string) != Some(&id) {
                        push(Some(id), Constraint::IndexMismatch);
                    }
                }
                NodeKind::Target => {}
            }
            if node.parse.len() < 2 {
                push(Some(id), Constraint::TooFewParts);
            }
            let mut concat = Vec::with_capacity(node.string.len());
            let mut missing = false;
            for &p in &node.parse {
                match self.node(p) {
                    None => missing = true,
                    Some(part) => {
                        if part.string.len() >= node.string.len() {
                            push(Some(id), Constraint::NotShorter);
                        }
                        concat.extend_from_slice(&part.string);
                    }
                }
            }
            if missing {
                push(Some(id), Constraint::MissingPart);
            } else if concat.as_slice() != node.string.tokens() {
                push(Some(id), Constraint::ConcatenationMismatch);
            }
        }
        for (id, node) in self.nodes() {
            let d = degree[id.index()];
            if d != node.out_degree {
                push(Some(id), Constraint::OutDegreeCache);
            }
            match node.kind {
                NodeKind::Target if d > 0 => push(Some(id), Constraint::TargetOutDegree),
                NodeKind::Intermediate if d < 2 => push(Some(id), Constraint::IntermediateOutDegree),
                _ => {}
            }
        }
        if edges != self.edges {
            push(None, Constraint::EdgeCostCache);
        }
        if self.strings.len() != seen_strings.len()
            || self.sources.len() != self.count(NodeKind::Source)
        {
            push(None, Constraint::IndexMismatch);
        }
        out
    }
}
