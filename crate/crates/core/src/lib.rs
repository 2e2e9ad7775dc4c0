//! Hierarchical DAGs over token sequences.
//!
//! Targets (token sequences) are built from single-token sources through
//! reusable intermediate nodes. The crate constructs such DAGs greedily
//! ([`glexis`]), grows them batch by batch ([`incremental`]), extracts a
//! path-centrality core ([`centrality`]) and measures timelines
//! ([`metrics`], [`pipeline`]).
//!
//! Numeric results are generic over [`Real`]; the aliases below fix `f64`.

pub mod centrality;
pub mod dag;
pub mod glexis;
pub mod incremental;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod snapshot;
pub mod token;

pub use centrality::{g_core, h_score, path_centrality, NodeClass, PathCount};
pub use dag::{DagError, LexisDag, NodeId, NodeKind, Violation};
pub use glexis::{g_lexis, g_lexis_scoped, Trace};
pub use incremental::{clean_slate, evolve_timeline, inc_lexis, Batch, BatchTarget, StepReport};
pub use ingest::{load_corpus, make_batches, CorpusRecord};
pub use scalar::Real;
pub use token::{Sequence, Token, Vocabulary};

pub type CoreResult = centrality::CoreResult<f64>;
pub type HScore = centrality::HScore<f64>;
pub type MetricRecord = metrics::MetricRecord<f64>;
pub type EvolveConfig = incremental::EvolveConfig<f64>;
pub type TimelineStep = incremental::TimelineStep<f64>;
pub type Timeline = incremental::Timeline<f64>;
