//! Corpus- and DAG-level measurements.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;

use crate::dag::LexisDag;
use crate::scalar::Real;
use crate::token::{Sequence, Token};

/// Token-level edit distance with unit insert, delete and substitute costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[b.len()]
}

/// `1 - LD(a, b) / max(|a|, |b|)`; two empty strings are identical.
pub fn similarity<F: Real, T: PartialEq>(a: &[T], b: &[T]) -> F {
    let m = a.len().max(b.len());
    if m == 0 {
        return F::one();
    }
    F::one() - F::ratio(levenshtein(a, b), m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diversity<F> {
    /// Index of the medoid in the input.
    pub medoid: usize,
    /// Mean normalized distance to the medoid.
    pub sigma: F,
}

/// Medoid (first minimizer of total distance) and normalized diversity of a
/// set of sequences. `None` for an empty input.
pub fn normalized_diversity<F: Real>(targets: &[Sequence]) -> Option<Diversity<F>> {
    if targets.is_empty() {
        return None;
    }
    let totals: Vec<usize> = targets
        .par_iter()
        .map(|m| targets.iter().map(|t| levenshtein(t, m)).sum())
        .collect();
    let medoid = (0..targets.len()).min_by_key(|&i| (totals[i], i))?;
    let m = &targets[medoid];
    let sum = targets.iter().fold(F::zero(), |acc, t| {
        acc + F::ratio(levenshtein(t, m), t.len().max(m.len()))
    });
    Some(Diversity {
        medoid,
        sigma: sum / F::from_usize(targets.len()).unwrap(),
    })
}

/// Most similar element of `pool` to `item`; ties go to the first (smallest) one.
pub fn best_match<'a, F: Real>(item: &Sequence, pool: &'a BTreeSet<Sequence>) -> Option<(&'a Sequence, F)> {
    let mut best: Option<(&Sequence, F)> = None;
    for cand in pool {
        let s = similarity::<F, Token>(item, cand);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            best = Some((cand, s));
        }
    }
    best
}

/// Levenshtein-Jaccard similarity: best-match similarities in both
/// directions, averaged over `|A| + |B|`. `None` if either set is empty.
pub fn lev_jaccard<F: Real>(a: &BTreeSet<Sequence>, b: &BTreeSet<Sequence>) -> Option<F> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let one_way = |from: &BTreeSet<Sequence>, to: &BTreeSet<Sequence>| -> F {
        let sims: Vec<F> = from
            .par_iter()
            .map(|x| best_match::<F>(x, to).map(|(_, s)| s).unwrap_or_else(F::zero))
            .collect();
        sims.into_iter().fold(F::zero(), |acc, s| acc + s)
    };
    let total = one_way(a, b) + one_way(b, a);
    Some(total / F::from_usize(a.len() + b.len()).unwrap())
}

/// Edge cost over the flat cost of the same targets, exactly.
pub fn normalized_cost_exact(dag: &LexisDag) -> Option<Ratio<usize>> {
    let flat = dag.flat_cost();
    (flat > 0).then(|| Ratio::new(dag.edge_cost(), flat))
}

/// Edge cost relative to the flat DAG: 1.0 when flat. Zero with no targets.
pub fn normalized_cost<F: Real>(dag: &LexisDag) -> F {
    F::ratio(dag.edge_cost(), dag.flat_cost())
}

/// Mean token length of intermediates; zero when there are none.
pub fn avg_node_length<F: Real>(dag: &LexisDag) -> F {
    let (sum, n) = dag
        .intermediates()
        .fold((0, 0), |(s, n), id| (s + dag.string(id).len(), n + 1));
    F::ratio(sum, n)
}

/// Distinct tokens used by a set of sequences.
pub fn used_sources<'a>(targets: impl IntoIterator<Item = &'a Sequence>) -> BTreeSet<Token> {
    targets.into_iter().flat_map(|t| t.iter().copied()).collect()
}

/// `|prev ∩ cur| / |prev|`: the fraction of the previous sources still used.
/// `None` if `prev` is empty.
pub fn source_similarity<F: Real>(prev: &BTreeSet<Token>, cur: &BTreeSet<Token>) -> Option<F> {
    if prev.is_empty() {
        return None;
    }
    Some(F::ratio(prev.intersection(cur).count(), prev.len()))
}

/// Histogram over sources of how many times each appears in `targets`:
/// reuse count -> number of sources.
pub fn source_reuse_histogram(targets: &[Sequence]) -> BTreeMap<usize, usize> {
    let mut uses: BTreeMap<Token, usize> = BTreeMap::new();
    for t in targets {
        for &tok in t.iter() {
            *uses.entry(tok).or_default() += 1;
        }
    }
    let mut hist = BTreeMap::new();
    for n in uses.into_values() {
        *hist.entry(n).or_default() += 1;
    }
    hist
}

/// One timeline step's measurements.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRecord<F> {
    pub label: String,
    pub normalized_cost: F,
    /// Marginal cost of this step's targets after reuse, over their flat cost.
    pub batch_cost_stage1: F,
    /// Marginal cost after local optimization, over their flat cost.
    pub batch_cost_stage2: F,
    pub avg_depth: F,
    pub avg_node_length: F,
    pub intermediates: usize,
    pub core_size: usize,
    pub flat_core_size: usize,
    pub h_score: F,
    /// The flat core was empty, so `h_score` is reported as 0.
    pub h_degenerate: bool,
    /// The core was larger than the flat core; `h_score` clamped to 0.
    pub h_clamped: bool,
    pub diversity: F,
    pub core_stability_vs_prev: Option<F>,
    pub source_similarity_vs_prev: Option<F>,
    pub source_reuse_histogram: BTreeMap<usize, usize>,
}
