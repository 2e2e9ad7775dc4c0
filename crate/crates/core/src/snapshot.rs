//! Line-oriented DAG snapshots.
//!
//! Each line is `id <TAB> kind <TAB> payload` after a `# lexis-dag 1`
//! header. Kind is `S`, `M` or `T`; the payload is the token name for a
//! source and space-separated part ids otherwise, e.g. `9 <TAB> T <TAB> 7 2 7`.
//! Lines are written in id order.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::dag::{LexisDag, NodeId, NodeKind, RawNode};
use crate::token::{Sequence, Token, Vocabulary};

pub const HEADER: &str = "# lexis-dag 1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("node {0} references a missing part")]
    MissingPart(NodeId),
    #[error("parse cycle through node {0}")]
    Cycle(NodeId),
}

pub fn write_dag<W: Write>(dag: &LexisDag, vocabulary: &Vocabulary, mut out: W) -> io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for (id, node) in dag.nodes() {
        write!(out, "{}\t{}\t", id.0, node.kind().code())?;
        if node.kind() == NodeKind::Source {
            writeln!(out, "{}", vocabulary.name(node.string()[0]))?;
        } else {
            let parts: Vec<String> = node.parse().iter().map(|p| p.0.to_string()).collect();
            writeln!(out, "{}", parts.join(" "))?;
        }
    }
    Ok(())
}

enum Entry {
    Source(Token),
    Composite(NodeKind, Vec<NodeId>),
}

/// Reads a snapshot. Strings are rebuilt from the parses; constraints are
/// not checked, so callers should run [`LexisDag::validate`].
pub fn read_dag<R: BufRead>(input: R) -> Result<(LexisDag, Vocabulary), SnapshotError> {
    let mut vocabulary = Vocabulary::new();
    let mut entries: BTreeMap<NodeId, Entry> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let malformed = |reason: &str| SnapshotError::Malformed {
            line: i + 1,
            reason: reason.to_owned(),
        };
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut f = line.splitn(3, '\t');
        let (Some(id), Some(kind), Some(payload)) = (f.next(), f.next(), f.next()) else {
            return Err(malformed("expected id, kind and payload"));
        };
        let id = NodeId(id.trim().parse().map_err(|_| malformed("bad node id"))?);
        let entry = match kind.trim() {
            "S" => Entry::Source(vocabulary.intern(payload.trim())),
            k @ ("M" | "T") => {
                let parts = payload
                    .split_whitespace()
                    .map(|p| p.parse().map(NodeId))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| malformed("bad part id"))?;
                let kind = if k == "M" { NodeKind::Intermediate } else { NodeKind::Target };
                Entry::Composite(kind, parts)
            }
            _ => return Err(malformed("kind must be S, M or T")),
        };
        if entries.insert(id, entry).is_some() {
            return Err(malformed("duplicate node id"));
        }
    }

    // Resolve strings bottom-up with an explicit stack.
    let mut strings: BTreeMap<NodeId, Vec<Token>> = BTreeMap::new();
    let mut on_stack = BTreeMap::new();
    for &root in entries.keys() {
        let mut stack = vec![(root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if strings.contains_key(&id) {
                continue;
            }
            match &entries[&id] {
                Entry::Source(t) => {
                    strings.insert(id, vec![*t]);
                }
                Entry::Composite(_, parts) if expanded => {
                    let s = parts.iter().flat_map(|p| strings[p].iter().copied()).collect();
                    strings.insert(id, s);
                    on_stack.remove(&id);
                }
                Entry::Composite(_, parts) => {
                    if on_stack.insert(id, ()).is_some() {
                        return Err(SnapshotError::Cycle(id));
                    }
                    stack.push((id, true));
                    for p in parts {
                        if !entries.contains_key(p) {
                            return Err(SnapshotError::MissingPart(id));
                        }
                        if !strings.contains_key(p) {
                            if on_stack.contains_key(p) {
                                return Err(SnapshotError::Cycle(*p));
                            }
                            stack.push((*p, false));
                        }
                    }
                }
            }
        }
    }

    let nodes = entries.into_iter().map(|(id, entry)| {
        let string = Sequence::new(strings.remove(&id).expect("resolved")).unwrap_or_default();
        let raw = match entry {
            Entry::Source(_) => RawNode {
                kind: NodeKind::Source,
                string,
                parse: Vec::new(),
            },
            Entry::Composite(kind, parse) => RawNode { kind, string, parse },
        };
        (id, raw)
    });
    Ok((LexisDag::from_raw(nodes), vocabulary))
}
