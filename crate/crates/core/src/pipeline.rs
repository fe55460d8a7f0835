//! End-to-end event analysis and the per-event score report.
//!
//! Pooling and clustering do not depend on the fusion weights, so each event
//! is analysed once and then scored under as many parameter settings as
//! needed.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concepts::{event_concept_pool, ScoredConcept};
use crate::io::{self, IoError};
use crate::lexicon::{AnpLexicon, EgoOntology, Polarity};
use crate::segmenter::Event;
use crate::sentiment::{event_score, EventScore, FusionParams, SentimentError};
use crate::simcluster::{
    cluster_nouns, select_clusters, ClusterSelection, NounClusterSet, NounSimilarity, SelectionStrategy,
};
use crate::EventId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    /// Concepts kept per image.
    pub top_k: usize,
    /// Complete-linkage similarity above which noun clusters merge.
    pub cluster_threshold: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            top_k: 5,
            cluster_threshold: 0.6,
        }
    }
}

/// An event with its concept pool and noun clustering precomputed.
#[derive(Debug, Clone)]
pub struct AnalyzedEvent {
    pub event_id: EventId,
    pub gt_label: Option<Polarity>,
    pub n_images: usize,
    pub pool: Vec<ScoredConcept>,
    /// `None` when the pool is empty.
    pub clusters: Option<NounClusterSet>,
}

impl AnalyzedEvent {
    pub fn new(event: &Event, lexicon: &AnpLexicon, sim: &NounSimilarity, params: &PipelineParams) -> Self {
        let pool = event_concept_pool(event, params.top_k);
        let clusters = (!pool.is_empty()).then(|| cluster_nouns(&pool, lexicon, sim, params.cluster_threshold));
        Self {
            event_id: event.event_id,
            gt_label: event.gt_label,
            n_images: event.len(),
            pool,
            clusters,
        }
    }

    pub fn score(
        &self,
        strategy: SelectionStrategy,
        fusion: &FusionParams,
        lexicon: &AnpLexicon,
        ontology: &EgoOntology,
    ) -> Result<(EventScore, ClusterSelection), SentimentError> {
        let clusters = self.clusters.as_ref().ok_or(SentimentError::EmptyScope)?;
        let selection = select_clusters(clusters, strategy);
        let score = event_score(&self.pool, clusters, &selection, lexicon, ontology, fusion)?;
        Ok((score, selection))
    }
}

/// Analyses events in parallel; output order follows `events`.
pub fn analyze_events(
    events: &[Event],
    lexicon: &AnpLexicon,
    sim: &NounSimilarity,
    params: &PipelineParams,
) -> Vec<AnalyzedEvent> {
    events
        .par_iter()
        .map(|e| AnalyzedEvent::new(e, lexicon, sim, params))
        .collect()
}

/// One line of the score report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub event_id: EventId,
    pub value: Option<f64>,
    pub n_concepts: usize,
    pub label: Option<Polarity>,
    /// Nouns of each selected cluster, biggest cluster first.
    pub selected_cluster_nouns: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unscorable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_label: Option<Polarity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    /// Event count per predicted label, keyed by `-1`, `0`, `1`.
    pub label_counts: BTreeMap<String, usize>,
    pub unscorable: usize,
    pub fusion: FusionParams,
    pub strategy: SelectionStrategy,
    pub pipeline: PipelineParams,
    pub lexicon_hash: String,
    /// Content hashes of the input files, keyed by role.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryLine {
    summary: ScoreSummary,
}

/// Per-event records followed by one summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub records: Vec<ScoreRecord>,
    pub summary: ScoreSummary,
}

#[derive(Debug, thiserror::Error)]
#[error("line {line}: malformed score report: {reason}")]
pub struct ReportParseError {
    pub line: usize,
    pub reason: String,
}

impl ScoreReport {
    pub fn build(
        events: &[AnalyzedEvent],
        strategy: SelectionStrategy,
        fusion: &FusionParams,
        pipeline: &PipelineParams,
        lexicon: &AnpLexicon,
        ontology: &EgoOntology,
    ) -> Self {
        let mut label_counts: BTreeMap<String, usize> = Polarity::ALL.iter().map(|p| (p.to_string(), 0)).collect();
        let mut unscorable = 0;
        let records = events
            .iter()
            .map(|event| match event.score(strategy, fusion, lexicon, ontology) {
                Ok((score, selection)) => {
                    *label_counts.entry(score.label.to_string()).or_default() += 1;
                    let clusters = event.clusters.as_ref().expect("scored events have clusters");
                    ScoreRecord {
                        event_id: event.event_id,
                        value: Some(score.value),
                        n_concepts: score.n_concepts,
                        label: Some(score.label),
                        selected_cluster_nouns: selection
                            .selected
                            .iter()
                            .map(|&(c, _)| clusters.clusters[c].nouns.clone())
                            .collect(),
                        unscorable: false,
                        gt_label: event.gt_label,
                    }
                }
                Err(_) => {
                    unscorable += 1;
                    ScoreRecord {
                        event_id: event.event_id,
                        value: None,
                        n_concepts: 0,
                        label: None,
                        selected_cluster_nouns: Vec::new(),
                        unscorable: true,
                        gt_label: event.gt_label,
                    }
                }
            })
            .collect();
        Self {
            records,
            summary: ScoreSummary {
                label_counts,
                unscorable,
                fusion: *fusion,
                strategy,
                pipeline: *pipeline,
                lexicon_hash: lexicon.hash().to_string(),
                inputs: BTreeMap::new(),
            },
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        let summary = SummaryLine {
            summary: self.summary.clone(),
        };
        out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
        out.push('\n');
        out
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, ReportParseError> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, l))
            .collect();
        let Some((&(last_line, last), body)) = lines.split_last() else {
            return Err(ReportParseError {
                line: 1,
                reason: "empty report".into(),
            });
        };
        let err = |line, e: serde_json::Error| ReportParseError {
            line,
            reason: e.to_string(),
        };
        let records = body
            .iter()
            .map(|&(line, l)| serde_json::from_str(l).map_err(|e| err(line, e)))
            .collect::<Result<Vec<ScoreRecord>, _>>()?;
        let summary: SummaryLine = serde_json::from_str(last).map_err(|e| err(last_line, e))?;
        Ok(Self {
            records,
            summary: summary.summary,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        io::write_atomic(path, self.to_jsonl().as_bytes())
    }
}
