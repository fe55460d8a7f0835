//! Fusion of ANP sentiment with noun polarity into an event score and label.
//!
//! For every in-scope concept `j` with cluster weight `w_j`:
//!
//! ```text
//! x_j = alpha * S_vso(j) * p(j) + beta * polarity(noun(j))
//! Sum:  value = sum_j w_j x_j
//! Mean: value = sum_j w_j x_j / sum_j w_j
//! ```
//!
//! With a single selected cluster (or the whole pool) every weight is 1 and
//! `Mean` is the plain average over `N_ANP` concepts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::concepts::ScoredConcept;
use crate::lexicon::{AnpEntry, AnpLexicon, EgoOntology, Polarity};
use crate::simcluster::{ClusterSelection, NounClusterSet};

/// Tolerance on `alpha + beta == 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum SentimentError {
    #[error("no concepts in scope; event is unscorable")]
    EmptyScope,
    #[error("invalid fusion parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Sum,
}

/// Which concepts enter the fusion sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Scope {
    #[default]
    #[serde(rename = "cluster")]
    SelectedClusters,
    #[serde(rename = "pool")]
    WholePool,
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(format!("unknown aggregation `{other}` (expected mean or sum)")),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Sum => "sum",
        })
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cluster" => Ok(Self::SelectedClusters),
            "pool" => Ok(Self::WholePool),
            other => Err(format!("unknown scope `{other}` (expected cluster or pool)")),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SelectedClusters => "cluster",
            Self::WholePool => "pool",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    /// Weight of the ANP sentiment term.
    pub alpha: f64,
    /// Weight of the noun polarity term.
    pub beta: f64,
    /// Half-width of the neutral band.
    pub tau: f64,
    pub aggregation: Aggregation,
    pub scope: Scope,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            beta: 0.8,
            tau: 0.25,
            aggregation: Aggregation::Mean,
            scope: Scope::SelectedClusters,
        }
    }
}

impl FusionParams {
    pub fn with_weights(self, alpha: f64, beta: f64) -> Self {
        Self { alpha, beta, ..self }
    }

    pub fn validate(&self) -> Result<(), SentimentError> {
        let finite = self.alpha.is_finite() && self.beta.is_finite() && self.tau.is_finite();
        if !finite || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(SentimentError::InvalidParams(format!(
                "alpha ({}) and beta ({}) must be finite and non-negative",
                self.alpha, self.beta
            )));
        }
        if (self.alpha + self.beta - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(SentimentError::InvalidParams(format!(
                "alpha + beta = {} must equal 1",
                self.alpha + self.beta
            )));
        }
        if self.tau < 0.0 {
            return Err(SentimentError::InvalidParams(format!(
                "tau {} must be non-negative",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventScore {
    pub value: f64,
    /// Number of in-scope concepts.
    pub n_concepts: usize,
    pub label: Polarity,
    /// Aggregated ANP term alone (`value` at alpha = 1).
    pub anp_term: f64,
    /// Aggregated noun term alone (`value` at beta = 1).
    pub noun_term: f64,
}

/// Probability-weighted VSO sentiment of one detected ANP.
pub fn anp_sentiment(entry: &AnpEntry, probability: f64) -> f64 {
    entry.sentiment_vso * probability
}

/// Maps a score to a label with a closed neutral band `[-tau, tau]`.
pub fn ternary(value: f64, tau: f64) -> Polarity {
    if value > tau {
        Polarity::Positive
    } else if value < -tau {
        Polarity::Negative
    } else {
        Polarity::Neutral
    }
}

/// Scores one event's concept pool.
///
/// `clusters` must be the clustering of `pool` that `selection` was drawn from;
/// both are ignored when `params.scope` is [`Scope::WholePool`].
pub fn event_score(
    pool: &[ScoredConcept],
    clusters: &NounClusterSet,
    selection: &ClusterSelection,
    lexicon: &AnpLexicon,
    ontology: &EgoOntology,
    params: &FusionParams,
) -> Result<EventScore, SentimentError> {
    let in_scope: Vec<(usize, f64)> = match params.scope {
        Scope::WholePool => (0..pool.len()).map(|j| (j, 1.0)).collect(),
        Scope::SelectedClusters => selection
            .selected
            .iter()
            .flat_map(|&(c, w)| clusters.clusters[c].members.iter().map(move |&j| (j, w)))
            .collect(),
    };
    if in_scope.is_empty() {
        return Err(SentimentError::EmptyScope);
    }

    let (mut total, mut anp, mut noun, mut weight) = (0.0, 0.0, 0.0, 0.0);
    for &(j, w) in &in_scope {
        let concept = &pool[j];
        let entry = lexicon
            .get(concept.anp_id)
            .expect("pool concepts come from the lexicon");
        let s_anp = anp_sentiment(entry, concept.probability);
        let s_noun = f64::from(ontology.noun_polarity(&entry.noun).value());
        total += w * (params.alpha * s_anp + params.beta * s_noun);
        anp += w * s_anp;
        noun += w * s_noun;
        weight += w;
    }
    if params.aggregation == Aggregation::Mean {
        total /= weight;
        anp /= weight;
        noun /= weight;
    }
    Ok(EventScore {
        value: total,
        n_concepts: in_scope.len(),
        label: ternary(total, params.tau),
        anp_term: anp,
        noun_term: noun,
    })
}
