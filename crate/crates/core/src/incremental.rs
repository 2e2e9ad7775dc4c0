//! Incremental design: add a batch of targets by reusing the existing
//! hierarchy, then optimize locally; retire old batches; drive a timeline.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::centrality::{h_score, CentralityError};
use crate::dag::{DagError, LexisDag, NodeId, Parse, Rewiring, Violation};
use crate::glexis::{g_lexis, g_lexis_scoped};
use crate::metrics::{
    avg_node_length, lev_jaccard, normalized_cost, normalized_diversity, source_reuse_histogram,
    source_similarity, used_sources, MetricRecord,
};
use crate::scalar::Real;
use crate::token::{Sequence, Token};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchTarget {
    pub name: String,
    pub tokens: Sequence,
}

/// A labelled set of targets arriving together, plus the tokens it introduces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub label: String,
    pub targets: Vec<BatchTarget>,
    pub new_sources: BTreeSet<Token>,
}

impl Batch {
    pub fn sequences(&self) -> Vec<Sequence> {
        self.targets.iter().map(|t| t.tokens.clone()).collect()
    }
}

/// Cost checkpoints of one incremental step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub label: String,
    /// Edge cost if the batch had been added flat.
    pub cost_flat: usize,
    pub cost_after_stage1: usize,
    pub cost_after_stage2: usize,
    /// Edge cost before the batch arrived.
    pub cost_before: usize,
    pub targets_added: usize,
    pub targets_removed: usize,
    /// Targets shorter than two tokens, which cannot be composites.
    pub targets_skipped: usize,
    pub sources_added: usize,
    pub stage2_iterations: usize,
    #[serde(skip)]
    pub added: Vec<NodeId>,
}

impl StepReport {
    /// Stage ordering: `stage2 <= stage1 <= flat`.
    pub fn is_ordered(&self) -> bool {
        self.cost_after_stage2 <= self.cost_after_stage1 && self.cost_after_stage1 <= self.cost_flat
    }

    pub fn batch_flat_cost(&self) -> usize {
        self.cost_flat - self.cost_before
    }
}

/// Trie over the strings of the current intermediates.
pub struct Dictionary {
    children: HashMap<(u32, Token), u32>,
    terminal: HashMap<u32, NodeId>,
    sources: HashMap<Token, NodeId>,
}

impl Dictionary {
    pub fn new(dag: &LexisDag) -> Self {
        let mut dict = Dictionary {
            children: HashMap::new(),
            terminal: HashMap::new(),
            sources: dag.sources().map(|s| (dag.string(s)[0], s)).collect(),
        };
        let mut next = 1u32;
        for id in dag.intermediates() {
            let mut node = 0u32;
            for &t in dag.string(id).iter() {
                node = *dict.children.entry((node, t)).or_insert_with(|| {
                    next += 1;
                    next - 1
                });
            }
            dict.terminal.insert(node, id);
        }
        dict
    }

    /// Minimum-part parse of `target` over sources and intermediates, with at
    /// least two parts. Among minimum parses, leading parts are as long as
    /// possible. `None` if a token is not a source or the target is shorter
    /// than two tokens.
    pub fn parse(&self, target: &[Token]) -> Option<Vec<NodeId>> {
        let n = target.len();
        if n < 2 {
            return None;
        }
        const INF: usize = usize::MAX;
        let mut best = vec![INF; n + 1];
        let mut choice: Vec<(usize, NodeId)> = vec![(0, NodeId(0)); n];
        best[n] = 0;
        for i in (0..n).rev() {
            let mut consider = |j: usize, id: NodeId, best: &mut [usize]| {
                if (i == 0 && j == n) || best[j] == INF {
                    return;
                }
                let c = best[j] + 1;
                if c < best[i] || (c == best[i] && j > choice[i].0) {
                    best[i] = c;
                    choice[i] = (j, id);
                }
            };
            let src = *self.sources.get(&target[i])?;
            consider(i + 1, src, &mut best);
            let mut node = 0u32;
            for (j, t) in target.iter().enumerate().skip(i) {
                match self.children.get(&(node, *t)) {
                    Some(&c) => node = c,
                    None => break,
                }
                if let Some(&id) = self.terminal.get(&node) {
                    consider(j + 1, id, &mut best);
                }
            }
        }
        let mut parts = Vec::with_capacity(best[0]);
        let mut i = 0;
        while i < n {
            let (j, id) = choice[i];
            parts.push(id);
            i = j;
        }
        Some(parts)
    }
}

/// Parse of `target` over the existing node strings with the fewest parts.
/// A target not yet in the DAG gets the placeholder owner `NodeId(u32::MAX)`.
pub fn parse_with_dictionary(target: &Sequence, dag: &LexisDag) -> Option<Parse> {
    Dictionary::new(dag).parse(target).map(|parts| Parse {
        owner: NodeId(u32::MAX),
        parts,
    })
}

fn register_sources(dag: &mut LexisDag, batch: &Batch) -> usize {
    let before = dag.count(crate::dag::NodeKind::Source);
    let tokens: BTreeSet<Token> = batch
        .new_sources
        .iter()
        .copied()
        .chain(batch.targets.iter().flat_map(|t| t.tokens.iter().copied()))
        .collect();
    for t in tokens {
        dag.add_source(t);
    }
    dag.count(crate::dag::NodeKind::Source) - before
}

/// Adds a batch with reuse (stage 1) and local greedy optimization over the
/// batch's parses (stage 2). Existing intermediates' parses stay frozen.
pub fn inc_lexis(dag: &mut LexisDag, batch: &Batch) -> Result<StepReport, DagError> {
    add_batch(dag, batch, false)
}

/// Adds a batch flat and rebuilds greedily over every parse in the DAG.
pub fn clean_slate(dag: &mut LexisDag, batch: &Batch) -> Result<StepReport, DagError> {
    add_batch(dag, batch, true)
}

fn add_batch(dag: &mut LexisDag, batch: &Batch, clean: bool) -> Result<StepReport, DagError> {
    let sources_added = register_sources(dag, batch);
    let cost_before = dag.edge_cost();
    let dict = (!clean).then(|| Dictionary::new(dag));
    let mut added = Vec::new();
    let mut skipped = 0;
    let mut flat_len = 0;
    for target in &batch.targets {
        if target.tokens.len() < 2 {
            skipped += 1;
            continue;
        }
        let id = match &dict {
            Some(d) => dag.add_target(d.parse(&target.tokens).expect("sources registered"))?,
            None => dag.add_flat_target(&target.tokens)?,
        };
        flat_len += target.tokens.len();
        added.push(id);
    }
    let cost_after_stage1 = dag.edge_cost();
    let trace = if clean { g_lexis(dag) } else { g_lexis_scoped(dag, &added) };
    Ok(StepReport {
        label: batch.label.clone(),
        cost_flat: cost_before + flat_len,
        cost_after_stage1,
        cost_after_stage2: dag.edge_cost(),
        cost_before,
        targets_added: added.len(),
        targets_removed: 0,
        targets_skipped: skipped,
        sources_added,
        stage2_iterations: trace.steps.len(),
        added,
    })
}

/// Deletes the given targets and repairs intermediates left with fewer than
/// two uses (deleted when unused, inlined when used once).
pub fn remove_batch(dag: &mut LexisDag, targets: &[NodeId]) -> Result<Rewiring, DagError> {
    dag.remove_targets(targets)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveConfig<F> {
    pub tau: F,
    /// Maximum number of live targets; oldest batches are retired first.
    pub steady_state: Option<usize>,
}

impl<F: Real> Default for EvolveConfig<F> {
    fn default() -> Self {
        EvolveConfig {
            tau: F::from_f64(0.85).unwrap(),
            steady_state: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Centrality(#[from] CentralityError),
    #[error("step {label}: DAG constraint violations: {}", fmt_violations(.violations))]
    Invariant { label: String, violations: Vec<Violation> },
    #[error("step {label}: stage costs out of order (flat {flat}, stage 1 {stage1}, stage 2 {stage2})")]
    StageOrder {
        label: String,
        flat: usize,
        stage1: usize,
        stage2: usize,
    },
}

fn fmt_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(5).map(ToString::to_string).collect();
    format!("{}{}", shown.join(", "), if v.len() > 5 { ", ..." } else { "" })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimelineStep<F> {
    pub report: StepReport,
    pub metrics: MetricRecord<F>,
    /// Core member strings in removal order.
    pub core: Vec<Sequence>,
}

/// Runs batches in order: a clean-slate build for the first, incremental
/// steps afterwards, optional FIFO retirement, and per-step metrics.
pub struct Timeline<F> {
    dag: LexisDag,
    config: EvolveConfig<F>,
    live: VecDeque<Vec<NodeId>>,
    prev_core: Option<BTreeSet<Sequence>>,
    prev_sources: Option<BTreeSet<Token>>,
    steps: usize,
}

impl<F: Real> Timeline<F> {
    pub fn new(config: EvolveConfig<F>) -> Self {
        Timeline {
            dag: LexisDag::new(),
            config,
            live: VecDeque::new(),
            prev_core: None,
            prev_sources: None,
            steps: 0,
        }
    }

    pub fn dag(&self) -> &LexisDag {
        &self.dag
    }

    pub fn into_dag(self) -> LexisDag {
        self.dag
    }

    pub fn step(&mut self, batch: &Batch) -> Result<TimelineStep<F>, EvolveError> {
        let mut report = if self.steps == 0 {
            clean_slate(&mut self.dag, batch)?
        } else {
            inc_lexis(&mut self.dag, batch)?
        };
        self.steps += 1;
        self.live.push_back(report.added.clone());
        if let Some(cap) = self.config.steady_state {
            let mut live: usize = self.live.iter().map(Vec::len).sum();
            while live > cap && self.live.len() > 1 {
                let oldest = self.live.pop_front().expect("non-empty");
                remove_batch(&mut self.dag, &oldest)?;
                live -= oldest.len();
                report.targets_removed += oldest.len();
            }
        }
        if !report.is_ordered() {
            return Err(EvolveError::StageOrder {
                label: report.label.clone(),
                flat: report.cost_flat,
                stage1: report.cost_after_stage1,
                stage2: report.cost_after_stage2,
            });
        }
        let violations = self.dag.validate();
        if !violations.is_empty() {
            return Err(EvolveError::Invariant {
                label: report.label.clone(),
                violations,
            });
        }
        let (metrics, core) = self.measure(batch, &report)?;
        Ok(TimelineStep { report, metrics, core })
    }

    fn measure(&mut self, batch: &Batch, report: &StepReport) -> Result<(MetricRecord<F>, Vec<Sequence>), EvolveError> {
        let dag = &self.dag;
        let targets: Vec<Sequence> = report.added.iter().map(|&id| dag.string(id).clone()).collect();
        let h = h_score(dag, self.config.tau)?;
        let core = h.core.strings();
        let core_set: BTreeSet<Sequence> = core.iter().cloned().collect();
        let sources = used_sources(&targets);
        let batch_flat = report.batch_flat_cost();
        let metrics = MetricRecord {
            label: batch.label.clone(),
            normalized_cost: normalized_cost(dag),
            batch_cost_stage1: F::ratio(report.cost_after_stage1 - report.cost_before, batch_flat),
            batch_cost_stage2: F::ratio(report.cost_after_stage2 - report.cost_before, batch_flat),
            avg_depth: dag.avg_depth(),
            avg_node_length: avg_node_length(dag),
            intermediates: dag.count(crate::dag::NodeKind::Intermediate),
            core_size: h.core.len(),
            flat_core_size: h.flat_core.len(),
            h_score: h.value,
            h_degenerate: h.degenerate,
            h_clamped: h.clamped,
            diversity: normalized_diversity(&targets).map_or_else(F::zero, |d| d.sigma),
            core_stability_vs_prev: self.prev_core.as_ref().and_then(|p| lev_jaccard(p, &core_set)),
            source_similarity_vs_prev: self.prev_sources.as_ref().and_then(|p| source_similarity(p, &sources)),
            source_reuse_histogram: source_reuse_histogram(&targets),
        };
        self.prev_core = Some(core_set);
        self.prev_sources = Some(sources);
        Ok((metrics, core))
    }
}

/// Runs a whole timeline and returns one step per batch.
pub fn evolve_timeline<F: Real>(
    batches: &[Batch],
    config: EvolveConfig<F>,
) -> Result<(Vec<TimelineStep<F>>, LexisDag), EvolveError> {
    let mut timeline = Timeline::new(config);
    let mut steps = Vec::with_capacity(batches.len());
    for b in batches {
        steps.push(timeline.step(b)?);
    }
    Ok((steps, timeline.into_dag()))
}
