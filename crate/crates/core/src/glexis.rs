//! Greedy construction of a low-cost Lexis-DAG.
//!
//! Starting from the current parses, each iteration materializes the repeat
//! (a run of at least two node ids occurring at least twice) whose rewiring
//! removes the most edges, until no repeat saves anything.
//!
//! Occurrences are counted greedily left to right without overlap inside each
//! parse; parses are scanned in node-id order. An occurrence that would cover
//! an owner's entire parse is not counted, since the owner would be left with
//! a single part. Ties on savings prefer the longer run, then the
//! lexicographically smallest expanded token string.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::dag::{LexisDag, NodeId, NodeKind, Occurrence};
use crate::token::Token;

/// Edge-cost reduction from materializing a run of length `len` used
/// `occurrences` times.
#[inline]
pub fn savings(occurrences: usize, len: usize) -> i64 {
    let (r, l) = (occurrences as i64, len as i64);
    r * l - r - l
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepeatCandidate {
    pub parts: Vec<NodeId>,
    pub occurrences: Vec<Occurrence>,
}

impl RepeatCandidate {
    pub fn savings(&self) -> i64 {
        savings(self.occurrences.len(), self.parts.len())
    }
}

/// Greedy left-to-right non-overlapping offsets of `parts` inside `parse`,
/// skipping a match that spans the whole parse.
pub fn find_occurrences(parse: &[NodeId], parts: &[NodeId]) -> Vec<usize> {
    let l = parts.len();
    let mut out = Vec::new();
    if l == 0 || l >= parse.len() {
        return out;
    }
    let mut i = 0;
    while i + l <= parse.len() {
        if &parse[i..i + l] == parts {
            out.push(i);
            i += l;
        } else {
            i += 1;
        }
    }
    out
}

/// Total order used to pick among candidates: the smallest key wins.
fn preference_key(
    dag: &LexisDag,
    parts: &[NodeId],
    count: usize,
) -> (Reverse<i64>, Reverse<usize>, Vec<Token>, Vec<NodeId>) {
    (
        Reverse(savings(count, parts.len())),
        Reverse(parts.len()),
        dag.expand(parts),
        parts.to_vec(),
    )
}

/// Every repeat across all non-source parses, best candidate first.
pub fn enumerate_repeats(dag: &LexisDag) -> Vec<RepeatCandidate> {
    let pool: Vec<NodeId> = dag
        .nodes()
        .filter(|(_, n)| n.kind() != NodeKind::Source)
        .map(|(id, _)| id)
        .collect();
    enumerate_repeats_in(dag, &pool)
}

/// Every repeat whose occurrences lie in the parses of `pool`, best first.
pub fn enumerate_repeats_in(dag: &LexisDag, pool: &[NodeId]) -> Vec<RepeatCandidate> {
    let mut owners: Vec<NodeId> = pool.to_vec();
    owners.sort_unstable();
    owners.dedup();
    // run -> (occurrences, end of the last counted occurrence in the current owner)
    let mut seen: HashMap<&[NodeId], (Vec<Occurrence>, NodeId, usize)> = HashMap::new();
    for &owner in &owners {
        let parse = dag.parse(owner);
        let n = parse.len();
        for start in 0..n {
            for end in start + 2..=n {
                if start == 0 && end == n {
                    continue;
                }
                let run = &parse[start..end];
                let e = seen.entry(run).or_insert((Vec::new(), owner, 0));
                if e.1 != owner {
                    e.1 = owner;
                    e.2 = 0;
                }
                if start >= e.2 {
                    e.0.push(Occurrence { owner, offset: start });
                    e.2 = end;
                }
            }
        }
    }
    let mut out: Vec<RepeatCandidate> = seen
        .into_iter()
        .filter(|(_, (occ, _, _))| occ.len() >= 2)
        .map(|(run, (occurrences, _, _))| RepeatCandidate {
            parts: run.to_vec(),
            occurrences,
        })
        .collect();
    out.sort_by_cached_key(|c| preference_key(dag, &c.parts, c.occurrences.len()));
    out
}

/// One applied iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    /// The intermediate the occurrences now point to.
    pub node: NodeId,
    /// False when the run's string already existed and occurrences were merged into it.
    pub created: bool,
    pub len: usize,
    pub occurrences: usize,
    /// Observed edge-cost decrease.
    pub savings: i64,
    /// Intermediates deleted or inlined while restoring the out-degree constraint.
    pub repaired: usize,
}

impl Step {
    /// `R*l - R - l`: the decrease from the rewiring alone.
    pub fn formula_savings(&self) -> i64 {
        savings(self.occurrences, self.len)
    }

    /// Savings beyond the formula, from merging into an existing node
    /// (no new parse to pay for) and from inlining single-use parts.
    pub fn repair_savings(&self) -> i64 {
        self.savings - self.formula_savings()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub cost_before: usize,
    pub cost_after: usize,
    pub steps: Vec<Step>,
}

impl Trace {
    pub fn total_savings(&self) -> i64 {
        self.steps.iter().map(|s| s.savings).sum()
    }
}

/// Clean-slate greedy construction over every parse in the DAG.
pub fn g_lexis(dag: &mut LexisDag) -> Trace {
    let pool: Vec<NodeId> = dag
        .nodes()
        .filter(|(_, n)| n.kind() != NodeKind::Source)
        .map(|(id, _)| id)
        .collect();
    g_lexis_scoped(dag, &pool)
}

/// Greedy construction restricted to repeats inside the parses of `pool`
/// and of the intermediates created along the way. Other parses are frozen.
pub fn g_lexis_scoped(dag: &mut LexisDag, pool: &[NodeId]) -> Trace {
    let mut index = RepeatIndex::default();
    let mut owners: Vec<NodeId> = pool.iter().copied().filter(|&id| dag.contains(id)).collect();
    owners.sort_unstable();
    owners.dedup();
    for owner in owners {
        index.insert(owner, dag.parse(owner).to_vec());
    }
    let mut trace = Trace {
        cost_before: dag.edge_cost(),
        ..Trace::default()
    };
    while let Some(parts) = index.best(dag) {
        let step = index.apply(dag, &parts);
        trace.steps.push(step);
    }
    trace.cost_after = dag.edge_cost();
    trace
}

#[derive(Clone, Copy, Debug)]
struct KeyInfo {
    parent: u32,
    last: NodeId,
    len: u32,
    count: u32,
}

/// Pooled occurrence counts for every run in the indexed parses. Runs are
/// interned as nodes of a trie so each extension by one part is O(1).
#[derive(Default)]
struct RepeatIndex {
    children: HashMap<(u32, NodeId), u32>,
    keys: Vec<KeyInfo>,
    buckets: BTreeMap<(i64, u32), BTreeSet<u32>>,
    pair_owners: HashMap<(NodeId, NodeId), BTreeSet<NodeId>>,
    indexed: BTreeMap<NodeId, Vec<NodeId>>,
    scratch: HashMap<u32, (u32, usize)>,
}

impl RepeatIndex {
    fn child(&mut self, parent: u32, part: NodeId) -> u32 {
        if self.keys.is_empty() {
            self.keys.push(KeyInfo {
                parent: 0,
                last: NodeId(u32::MAX),
                len: 0,
                count: 0,
            });
        }
        if let Some(&k) = self.children.get(&(parent, part)) {
            return k;
        }
        let k = self.keys.len() as u32;
        let len = self.keys[parent as usize].len + 1;
        self.keys.push(KeyInfo {
            parent,
            last: part,
            len,
            count: 0,
        });
        self.children.insert((parent, part), k);
        k
    }

    fn parts_of(&self, mut key: u32) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.keys[key as usize].len as usize);
        while key != 0 {
            let info = self.keys[key as usize];
            out.push(info.last);
            key = info.parent;
        }
        out.reverse();
        out
    }

    /// Per-run greedy occurrence counts within one parse.
    fn contribution(&mut self, parse: &[NodeId]) -> Vec<(u32, u32)> {
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        let n = parse.len();
        for start in 0..n {
            let mut key = 0;
            for (end, &part) in parse.iter().enumerate().skip(start) {
                key = self.child(key, part);
                if end == start || (start == 0 && end + 1 == n) {
                    continue;
                }
                let e = scratch.entry(key).or_insert((0, 0));
                if start >= e.1 {
                    e.0 += 1;
                    e.1 = end + 1;
                }
            }
        }
        let out = scratch.iter().map(|(&k, &(c, _))| (k, c)).collect();
        self.scratch = scratch;
        out
    }

    fn adjust(&mut self, key: u32, delta: i64) {
        let info = self.keys[key as usize];
        let old = info.count as i64;
        let new = old + delta;
        debug_assert!(new >= 0);
        let len = info.len;
        let old_s = savings(old as usize, len as usize);
        let new_s = savings(new as usize, len as usize);
        if old_s > 0 {
            let bucket = self.buckets.get_mut(&(old_s, len)).expect("bucket");
            bucket.remove(&key);
            if bucket.is_empty() {
                self.buckets.remove(&(old_s, len));
            }
        }
        if new_s > 0 {
            self.buckets.entry((new_s, len)).or_default().insert(key);
        }
        self.keys[key as usize].count = new as u32;
    }

    fn insert(&mut self, owner: NodeId, parse: Vec<NodeId>) {
        for (k, c) in self.contribution(&parse) {
            self.adjust(k, c as i64);
        }
        for w in parse.windows(2) {
            self.pair_owners.entry((w[0], w[1])).or_default().insert(owner);
        }
        self.indexed.insert(owner, parse);
    }

    fn remove(&mut self, owner: NodeId) {
        let Some(parse) = self.indexed.remove(&owner) else { return };
        for (k, c) in self.contribution(&parse) {
            self.adjust(k, -(c as i64));
        }
        for w in parse.windows(2) {
            if let Some(set) = self.pair_owners.get_mut(&(w[0], w[1])) {
                set.remove(&owner);
                if set.is_empty() {
                    self.pair_owners.remove(&(w[0], w[1]));
                }
            }
        }
    }

    /// Parts of the preferred candidate, if any run still saves edges.
    fn best(&self, dag: &LexisDag) -> Option<Vec<NodeId>> {
        let (_, members) = self.buckets.iter().next_back()?;
        let mut best: Option<(Vec<Token>, Vec<NodeId>)> = None;
        for &key in members {
            let parts = self.parts_of(key);
            let expanded = dag.expand(&parts);
            let better = match &best {
                None => true,
                Some((e, p)) => match expanded.cmp(e) {
                    Ordering::Less => true,
                    Ordering::Equal => parts < *p,
                    Ordering::Greater => false,
                },
            };
            if better {
                best = Some((expanded, parts));
            }
        }
        best.map(|(_, p)| p)
    }

    fn apply(&mut self, dag: &mut LexisDag, parts: &[NodeId]) -> Step {
        let owners: Vec<NodeId> = self
            .pair_owners
            .get(&(parts[0], parts[1]))
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        let mut occurrences = Vec::new();
        for owner in owners {
            let parse = &self.indexed[&owner];
            occurrences.extend(
                find_occurrences(parse, parts)
                    .into_iter()
                    .map(|offset| Occurrence { owner, offset }),
            );
        }
        let string = dag.expand(parts);
        let rewiring = match dag.intermediate_with_string(&string) {
            Some(existing) => dag.merge_occurrences(existing, parts, &occurrences),
            None => dag.add_intermediate(parts, &occurrences),
        }
        .expect("index occurrences are valid");

        let mut touched: BTreeSet<NodeId> = rewiring.changed.iter().copied().collect();
        touched.extend(rewiring.removed.iter().copied());
        if rewiring.created {
            touched.insert(rewiring.node);
        }
        for id in touched {
            let was_indexed = self.indexed.contains_key(&id);
            self.remove(id);
            let joins = was_indexed || (rewiring.created && id == rewiring.node);
            if joins && dag.contains(id) {
                self.insert(id, dag.parse(id).to_vec());
            }
        }
        Step {
            node: rewiring.node,
            created: rewiring.created,
            len: parts.len(),
            occurrences: occurrences.len(),
            savings: rewiring.savings(),
            repaired: rewiring.removed.len(),
        }
    }
}
