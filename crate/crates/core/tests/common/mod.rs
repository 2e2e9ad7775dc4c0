//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use lexis::dag::{LexisDag, NodeId, NodeKind, RawNode};
use lexis::glexis::{enumerate_repeats, Trace};
use lexis::token::{Sequence, Token, Vocabulary};
use rand::Rng;

/// Flat DAG over character targets; source ids equal token ids.
pub fn flat_dag(texts: &[&[u8]]) -> (LexisDag, Vocabulary) {
    let mut v = Vocabulary::new();
    let targets: Vec<Sequence> = texts
        .iter()
        .map(|t| v.chars(std::str::from_utf8(t).expect("ascii")))
        .collect();
    let dag = LexisDag::new_flat((0..v.len() as u32).map(Token), &targets).expect("targets of length >= 2");
    (dag, v)
}

/// Fewest pieces covering `s`, each piece a single symbol or a member of
/// `dict`, never `s` itself. `None` when `s` has length < 2.
fn min_pieces(s: &[u8], dict: &HashSet<&[u8]>) -> Option<usize> {
    if s.len() < 2 {
        return None;
    }
    let n = s.len();
    let mut best = vec![usize::MAX; n + 1];
    best[0] = 0;
    for end in 1..=n {
        for start in 0..end {
            if best[start] == usize::MAX || (start == 0 && end == n) {
                continue;
            }
            let piece = &s[start..end];
            if piece.len() == 1 || dict.contains(piece) {
                best[end] = best[end].min(best[start] + 1);
            }
        }
    }
    Some(best[n])
}

/// Substrings of length >= 2 with at least two start positions across the
/// targets (overlap allowed). Every intermediate of a valid DAG is among
/// these: out-degree >= 2 puts its expansion at two disjoint target spots.
fn repeated_substrings(targets: &[&[u8]]) -> Vec<Vec<u8>> {
    let mut seen: BTreeMap<&[u8], usize> = BTreeMap::new();
    for t in targets {
        for i in 0..t.len() {
            for j in i + 2..=t.len() {
                *seen.entry(&t[i..j]).or_default() += 1;
            }
        }
    }
    seen.into_iter().filter(|&(_, n)| n >= 2).map(|(s, _)| s.to_vec()).collect()
}

/// Cost of the best DAG whose intermediates are exactly `chosen`: each node
/// parses independently with the fewest pieces drawn from shorter nodes.
fn cost_with(targets: &[&[u8]], chosen: &[&[u8]]) -> usize {
    let dict: HashSet<&[u8]> = chosen.iter().copied().collect();
    chosen
        .iter()
        .chain(targets.iter())
        .map(|s| min_pieces(s, &dict).expect("length >= 2"))
        .sum()
}

/// True minimum edge cost over all valid DAGs for `targets`, by exhaustive
/// search over intermediate sets.
///
/// Dropping the out-degree constraint cannot lower the minimum: an
/// intermediate used once can be inlined for one edge less, an unused one
/// deleted. Each node costs at least two edges, so with an upper bound `ub`
/// only sets of at most `(ub - 2|T|) / 2` intermediates need checking.
pub fn optimum_cost(targets: &[&[u8]], ub: usize) -> usize {
    let candidates = repeated_substrings(targets);
    let base = cost_with(targets, &[]);
    let mut best = base.min(ub);
    let max_size = best.saturating_sub(2 * targets.len()) / 2;
    let mut chosen: Vec<&[u8]> = Vec::new();
    search(targets, &candidates, 0, max_size, &mut chosen, &mut best);
    best
}

fn search<'a>(
    targets: &[&[u8]],
    candidates: &'a [Vec<u8>],
    from: usize,
    max_size: usize,
    chosen: &mut Vec<&'a [u8]>,
    best: &mut usize,
) {
    if chosen.len() == max_size {
        return;
    }
    for i in from..candidates.len() {
        chosen.push(&candidates[i]);
        // Each intermediate costs >= 2 and each target >= 2.
        if 2 * (chosen.len() + targets.len()) < *best {
            *best = (*best).min(cost_with(targets, chosen));
            search(targets, candidates, i + 1, max_size, chosen, best);
        }
        chosen.pop();
    }
}

/// Greedy construction driven by re-enumerating every repeat from scratch
/// at each step.
pub fn reference_g_lexis(dag: &mut LexisDag) -> Trace {
    let mut trace = Trace {
        cost_before: dag.edge_cost(),
        cost_after: dag.edge_cost(),
        steps: Vec::new(),
    };
    while let Some(best) = enumerate_repeats(dag).into_iter().next() {
        if best.savings() <= 0 {
            break;
        }
        let existing = dag.intermediate_with_string(&dag.expand(&best.parts));
        let before = dag.edge_cost();
        let (node, created, repaired) = match existing {
            Some(id) => {
                let rw = dag.merge_occurrences(id, &best.parts, &best.occurrences).expect("valid repeat");
                (id, false, rw.removed.len())
            }
            None => {
                let rw = dag.add_intermediate(&best.parts, &best.occurrences).expect("valid repeat");
                (rw.node, true, rw.removed.len())
            }
        };
        trace.steps.push(lexis::glexis::Step {
            node,
            created,
            len: best.parts.len(),
            occurrences: best.occurrences.len(),
            savings: before as i64 - dag.edge_cost() as i64,
            repaired,
        });
    }
    trace.cost_after = dag.edge_cost();
    trace
}

/// Per-node source-to-target path counts by listing every path.
pub fn enumerate_paths(dag: &LexisDag) -> (BTreeMap<NodeId, u64>, u64) {
    let mut users: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (id, node) in dag.nodes() {
        for &p in node.parse() {
            users.entry(p).or_default().push(id);
        }
    }
    let mut through: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut total = 0;
    let mut path = Vec::new();
    fn walk(
        dag: &LexisDag,
        users: &BTreeMap<NodeId, Vec<NodeId>>,
        at: NodeId,
        path: &mut Vec<NodeId>,
        through: &mut BTreeMap<NodeId, u64>,
        total: &mut u64,
    ) {
        path.push(at);
        if dag.kind(at) == NodeKind::Target {
            *total += 1;
            for &v in path.iter() {
                *through.entry(v).or_default() += 1;
            }
        }
        for &u in users.get(&at).map(Vec::as_slice).unwrap_or(&[]) {
            walk(dag, users, u, path, through, total);
        }
        path.pop();
    }
    for s in dag.sources() {
        walk(dag, &users, s, &mut path, &mut through, &mut total);
    }
    (through, total)
}

/// A random DAG of at most `max_nodes` nodes. Composite parses pick 2..=3
/// earlier non-target nodes, so shape constraints beyond acyclicity may
/// not hold.
pub fn random_raw_dag<R: Rng>(rng: &mut R, max_nodes: usize) -> LexisDag {
    let sources = rng.gen_range(1..=3usize.min(max_nodes));
    let total = rng.gen_range(sources..=max_nodes);
    let mut nodes: Vec<(NodeId, RawNode)> = Vec::new();
    let mut strings: Vec<Vec<Token>> = Vec::new();
    let mut usable: Vec<usize> = Vec::new();
    for i in 0..total {
        let id = NodeId(i as u32);
        if i < sources {
            strings.push(vec![Token(i as u32)]);
            usable.push(i);
            nodes.push((
                id,
                RawNode {
                    kind: NodeKind::Source,
                    string: Sequence::new(vec![Token(i as u32)]).unwrap(),
                    parse: Vec::new(),
                },
            ));
            continue;
        }
        let k = rng.gen_range(2..=3);
        let parse: Vec<usize> = (0..k).map(|_| usable[rng.gen_range(0..usable.len())]).collect();
        let string: Vec<Token> = parse.iter().flat_map(|&p| strings[p].iter().copied()).collect();
        let kind = if rng.gen_bool(0.5) { NodeKind::Target } else { NodeKind::Intermediate };
        strings.push(string.clone());
        if kind == NodeKind::Intermediate {
            usable.push(i);
        }
        nodes.push((
            id,
            RawNode {
                kind,
                string: Sequence::new(string).unwrap(),
                parse: parse.into_iter().map(|p| NodeId(p as u32)).collect(),
            },
        ));
    }
    LexisDag::from_raw(nodes)
}

/// Fewest parts covering `target` by sources and the given strings, at
/// least two parts, by trying every split.
pub fn exhaustive_min_parts(target: &[Token], dict: &BTreeSet<Vec<Token>>) -> Option<usize> {
    fn go(rest: &[Token], dict: &BTreeSet<Vec<Token>>, whole: bool) -> Option<usize> {
        if rest.is_empty() {
            return Some(0);
        }
        let mut best: Option<usize> = None;
        for cut in 1..=rest.len() {
            if whole && cut == rest.len() {
                continue;
            }
            let head = &rest[..cut];
            if cut == 1 || dict.contains(head) {
                if let Some(n) = go(&rest[cut..], dict, false) {
                    best = Some(best.map_or(n + 1, |b: usize| b.min(n + 1)));
                }
            }
        }
        best
    }
    go(target, dict, true)
}

/// Random strings over the first `alphabet` lowercase letters.
pub fn random_texts<R: Rng>(rng: &mut R, count: usize, alphabet: u8, len: std::ops::RangeInclusive<usize>) -> Vec<Vec<u8>> {
    (0..count)
        .map(|_| {
            let n = rng.gen_range(len.clone());
            (0..n).map(|_| b'a' + rng.gen_range(0..alphabet)).collect()
        })
        .collect()
}

/// Random target set with total length at most `budget`, each target at
/// least two symbols long.
pub fn random_target_set<R: Rng>(rng: &mut R, alphabet: u8, budget: usize) -> Vec<Vec<u8>> {
    let mut left = budget;
    let mut out = Vec::new();
    while left >= 2 && (out.is_empty() || rng.gen_bool(0.6)) {
        let n = rng.gen_range(2..=left);
        out.push((0..n).map(|_| b'a' + rng.gen_range(0..alphabet)).collect());
        left -= n;
    }
    out
}

/// Every string of each length in `lens` over the first `alphabet` letters.
pub fn all_strings(alphabet: u8, lens: std::ops::RangeInclusive<usize>) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for n in lens {
        let mut cur = vec![vec![]];
        for _ in 0..n {
            cur = cur
                .into_iter()
                .flat_map(|s: Vec<u8>| {
                    (0..alphabet).map(move |c| {
                        let mut t = s.clone();
                        t.push(b'a' + c);
                        t
                    })
                })
                .collect();
        }
        out.extend(cur);
    }
    out
}
