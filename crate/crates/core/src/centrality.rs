//! Path centrality, greedy core identification and the hourglass score.
//!
//! Path counts use edge multiplicity and are exact. Every operation here
//! works on a [`PathGraph`], a disposable copy of the DAG's topology, so the
//! analysed DAG is never mutated.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Add;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::dag::{DagError, LexisDag, NodeId, NodeKind};
use crate::scalar::Real;
use crate::token::{Sequence, Token};

/// Exact non-negative number of paths.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathCount(pub BigUint);

impl PathCount {
    pub fn zero() -> Self {
        PathCount(BigUint::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl From<u64> for PathCount {
    fn from(v: u64) -> Self {
        PathCount(BigUint::from(v))
    }
}

impl Add for PathCount {
    type Output = PathCount;

    fn add(self, rhs: PathCount) -> PathCount {
        PathCount(self.0 + rhs.0)
    }
}

impl fmt::Display for PathCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Serialize for PathCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

/// Which nodes G-Core may remove.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeClass {
    Intermediates,
    SourcesAndTargets,
    All,
}

impl NodeClass {
    fn admits(self, kind: NodeKind) -> bool {
        match self {
            NodeClass::Intermediates => kind == NodeKind::Intermediate,
            NodeClass::SourcesAndTargets => kind != NodeKind::Intermediate,
            NodeClass::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CentralityError {
    #[error("tau must lie in [0, 1], got {0}")]
    InvalidTau(String),
    #[error(transparent)]
    Dag(#[from] DagError),
}

/// Topology of a DAG with removable nodes. Dense indices follow a
/// topological order (parts before owners).
#[derive(Clone, Debug)]
pub struct PathGraph {
    ids: Vec<NodeId>,
    kinds: Vec<NodeKind>,
    parts: Vec<Vec<usize>>,
    users: Vec<Vec<usize>>,
    removed: Vec<bool>,
    dense: BTreeMap<NodeId, usize>,
}

impl PathGraph {
    pub fn new(dag: &LexisDag) -> Self {
        let ids = dag.topological_order();
        let dense: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut parts = vec![Vec::new(); ids.len()];
        let mut users = vec![Vec::new(); ids.len()];
        for (i, &id) in ids.iter().enumerate() {
            for p in dag.parse(id) {
                let j = dense[p];
                parts[i].push(j);
                users[j].push(i);
            }
        }
        PathGraph {
            kinds: ids.iter().map(|&id| dag.kind(id)).collect(),
            removed: vec![false; ids.len()],
            ids,
            parts,
            users,
            dense,
        }
    }

    /// Deletes a node and all its edges. Returns false for unknown ids.
    pub fn remove(&mut self, id: NodeId) -> bool {
        match self.dense.get(&id) {
            Some(&i) => {
                self.removed[i] = true;
                true
            }
            None => false,
        }
    }

    pub fn is_removed(&self, id: NodeId) -> bool {
        self.dense.get(&id).is_some_and(|&i| self.removed[i])
    }

    /// Paths from any source to each node (dense order).
    fn paths_from_sources(&self) -> Vec<BigUint> {
        let mut count = vec![BigUint::zero(); self.ids.len()];
        for i in 0..self.ids.len() {
            if self.removed[i] {
                continue;
            }
            if self.kinds[i] == NodeKind::Source {
                count[i] = BigUint::from(1u32);
                continue;
            }
            let mut sum = BigUint::zero();
            for &p in &self.parts[i] {
                sum += &count[p];
            }
            count[i] = sum;
        }
        count
    }

    /// Paths from each node to any target (dense order).
    fn paths_to_targets(&self) -> Vec<BigUint> {
        let mut count = vec![BigUint::zero(); self.ids.len()];
        for i in (0..self.ids.len()).rev() {
            if self.removed[i] {
                continue;
            }
            if self.kinds[i] == NodeKind::Target {
                count[i] = BigUint::from(1u32);
                continue;
            }
            let mut sum = BigUint::zero();
            for &u in &self.users[i] {
                sum += &count[u];
            }
            count[i] = sum;
        }
        count
    }

    /// Per-node `(P_S, P_T)` for every remaining node.
    pub fn counts(&self) -> BTreeMap<NodeId, (PathCount, PathCount)> {
        let s = self.paths_from_sources();
        let t = self.paths_to_targets();
        self.ids
            .iter()
            .enumerate()
            .filter(|&(i, _)| !self.removed[i])
            .map(|(i, &id)| (id, (PathCount(s[i].clone()), PathCount(t[i].clone()))))
            .collect()
    }

    /// Remaining source-to-target paths.
    pub fn total_paths(&self) -> PathCount {
        let s = self.paths_from_sources();
        let sum = s
            .iter()
            .enumerate()
            .filter(|&(i, _)| !self.removed[i] && self.kinds[i] == NodeKind::Target)
            .map(|(_, c)| c)
            .sum();
        PathCount(sum)
    }
}

/// `P(v) = P_S(v) * P_T(v)` for every intermediate.
pub fn path_centrality(dag: &LexisDag) -> BTreeMap<NodeId, PathCount> {
    PathGraph::new(dag)
        .counts()
        .into_iter()
        .filter(|(id, _)| dag.kind(*id) == NodeKind::Intermediate)
        .map(|(id, (s, t))| (id, PathCount(s.0 * t.0)))
        .collect()
}

/// Number of source-to-target paths: the sum of `P_S` over targets.
pub fn total_paths(dag: &LexisDag) -> PathCount {
    PathGraph::new(dag).total_paths()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoreMember {
    pub id: NodeId,
    pub kind: NodeKind,
    pub string: Sequence,
    /// Path centrality at the time of removal.
    pub centrality: PathCount,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoreResult<F> {
    /// Core nodes in removal order.
    pub members: Vec<CoreMember>,
    pub total_paths: PathCount,
    pub remaining_paths: PathCount,
    pub remaining_fraction: F,
    pub tau: F,
    pub class: NodeClass,
    /// Whether the remaining paths are within `tau` of the original.
    pub satisfied: bool,
}

impl<F> CoreResult<F> {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn strings(&self) -> Vec<Sequence> {
        self.members.iter().map(|m| m.string.clone()).collect()
    }
}

fn check_tau<F: Real>(tau: F) -> Result<BigRational, CentralityError> {
    match tau.to_rational() {
        Some(q) if tau >= F::zero() && tau <= F::one() => Ok(q),
        _ => Err(CentralityError::InvalidTau(tau.to_string())),
    }
}

/// Greedy core: repeatedly removes the admissible node with the highest path
/// centrality until at most `tau` of the original paths remain. Ties go to
/// the smaller expanded string, then the smaller id.
pub fn g_core<F: Real>(dag: &LexisDag, tau: F, class: NodeClass) -> Result<CoreResult<F>, CentralityError> {
    let tau_q = check_tau(tau)?;
    let mut graph = PathGraph::new(dag);
    let total = graph.total_paths();
    let bound = tau_q * BigRational::from_integer(total.0.clone().into());
    let mut members = Vec::new();
    let satisfied = loop {
        let s = graph.paths_from_sources();
        let t = graph.paths_to_targets();
        let remaining: BigUint = (0..graph.ids.len())
            .filter(|&i| !graph.removed[i] && graph.kinds[i] == NodeKind::Target)
            .map(|i| &s[i])
            .sum();
        if BigRational::from_integer(remaining.into()) <= bound {
            break true;
        }
        let mut best: Option<(usize, BigUint)> = None;
        for i in 0..graph.ids.len() {
            if graph.removed[i] || !class.admits(graph.kinds[i]) {
                continue;
            }
            let p = &s[i] * &t[i];
            if p.is_zero() {
                continue;
            }
            let better = match &best {
                None => true,
                Some((j, bp)) => match p.cmp(bp) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => {
                        let (a, b) = (graph.ids[i], graph.ids[*j]);
                        (dag.string(a), a) < (dag.string(b), b)
                    }
                },
            };
            if better {
                best = Some((i, p));
            }
        }
        let Some((i, p)) = best else { break false };
        graph.removed[i] = true;
        let id = graph.ids[i];
        members.push(CoreMember {
            id,
            kind: graph.kinds[i],
            string: dag.string(id).clone(),
            centrality: PathCount(p),
        });
    };
    let remaining = graph.total_paths();
    Ok(CoreResult {
        members,
        remaining_fraction: F::big_ratio(&remaining.0, &total.0),
        total_paths: total,
        remaining_paths: remaining,
        tau,
        class,
        satisfied,
    })
}

/// Flat companion: same sources and targets, every target parsed directly.
pub fn flat_companion(dag: &LexisDag) -> Result<LexisDag, DagError> {
    let tokens: Vec<Token> = dag.sources().map(|s| dag.string(s)[0]).collect();
    let targets: Vec<Sequence> = dag.targets().map(|t| dag.string(t).clone()).collect();
    LexisDag::new_flat(tokens, &targets)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HScore<F> {
    pub value: F,
    pub core: CoreResult<F>,
    pub flat_core: CoreResult<F>,
    /// The flat core is empty, so the ratio is undefined; `value` is 0.
    pub degenerate: bool,
    /// The greedy core came out larger than the flat core; `value` is 0.
    pub clamped: bool,
}

/// `H = 1 - |Core| / |Core_f|`, with the DAG's core drawn from all nodes and
/// the flat companion's core from its sources and targets.
pub fn h_score<F: Real>(dag: &LexisDag, tau: F) -> Result<HScore<F>, CentralityError> {
    let flat = flat_companion(dag)?;
    let core = g_core(dag, tau, NodeClass::All)?;
    let flat_core = g_core(&flat, tau, NodeClass::SourcesAndTargets)?;
    let (value, degenerate, clamped) = if flat_core.is_empty() {
        (F::zero(), true, false)
    } else {
        let h = F::one() - F::ratio(core.len(), flat_core.len());
        if h < F::zero() {
            (F::zero(), false, true)
        } else {
            (h, false, false)
        }
    };
    Ok(HScore {
        value,
        core,
        flat_core,
        degenerate,
        clamped,
    })
}
