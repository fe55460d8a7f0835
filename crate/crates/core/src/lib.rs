//! Event-level sentiment for egocentric photostreams.
//!
//! An egocentric camera produces a time-ordered stream of images. Each image
//! carries a sparse vector of adjective-noun pair (ANP) likelihoods. The
//! pipeline groups images into events, pools the top-k concepts of every
//! image, clusters the pooled concepts by the semantic similarity of their
//! nouns, and fuses ANP sentiment with noun-cluster polarity into a ternary
//! label per event:
//!
//! ```text
//! S_event = Agg_j  w_j * (alpha * S_vso(j) * p(j) + beta * polarity(noun(j)))
//! ```
//!
//! The [`eval`] module reproduces the parameter-selection protocol (stratified
//! k-fold over a grid of `(alpha, beta)` pairs) and [`synth`] generates corpora
//! with planted ground truth.

pub mod concepts;
pub mod error;
pub mod eval;
pub mod io;
pub mod lexicon;
pub mod pipeline;
pub mod segmenter;
pub mod sentiment;
pub mod simcluster;
pub mod synth;

pub use concepts::{ImageRecord, PhotoStream, ScoredConcept};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, FoldSplit, GridPoint};
pub use lexicon::{AnpEntry, AnpLexicon, EgoOntology, Polarity};
pub use pipeline::{AnalyzedEvent, PipelineParams};
pub use segmenter::{Event, SegmentationParams};
pub use sentiment::{Aggregation, EventScore, FusionParams, Scope};
pub use simcluster::{ClusterSelection, NounClusterSet, NounSimilarity, SelectionStrategy};

/// Index of an ANP in the lexicon (row order of the lexicon file).
pub type AnpId = u32;

/// Identifier of an event within a segmentation.
pub type EventId = u32;
