//! Metrics, stratified k-fold splitting and the `(alpha, beta)` grid search.
//!
//! The protocol: split the labelled events into `k` stratified folds; for
//! every fold score the remaining `k - 1` folds (the training portion) under
//! each grid point and report mean and standard deviation across folds. The
//! point with the best mean training accuracy is then evaluated on each
//! held-out fold.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lexicon::{AnpLexicon, EgoOntology, Polarity};
use crate::pipeline::AnalyzedEvent;
use crate::sentiment::{FusionParams, SentimentError};
use crate::simcluster::SelectionStrategy;
use crate::EventId;

/// Identifier of the fold shuffling algorithm, recorded in reports.
pub const SPLIT_RNG: &str = "chacha8/seed_from_u64/fisher-yates";

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction and truth id sets differ: {0}")]
    IdMismatch(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("class {class} has {count} events, fewer than the {k} folds")]
    ClassTooSmall { class: Polarity, count: usize, k: usize },
    #[error("fold {fold}: {count} held-out events also appear in training")]
    OverlapDetected { fold: usize, count: usize },
    #[error("event {0} has no ground-truth label")]
    Unlabelled(EventId),
    #[error("invalid folds: {0}")]
    InvalidFolds(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Sentiment(#[from] SentimentError),
}

/// Counts indexed by `(truth, predicted)` in `Polarity::ALL` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Polarity, Polarity)>) -> Self {
        let mut cm = Self::default();
        for (truth, pred) in pairs {
            cm.counts[truth.index()][pred.index()] += 1;
        }
        cm
    }

    pub fn get(&self, truth: Polarity, predicted: Polarity) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    /// One-vs-rest `(tp, fp, fn)` for `class`.
    pub fn class_counts(&self, class: Polarity) -> (u64, u64, u64) {
        let c = class.index();
        let tp = self.counts[c][c];
        let fp = (0..3).map(|t| self.counts[t][c]).sum::<u64>() - tp;
        let fn_ = self.counts[c].iter().sum::<u64>() - tp;
        (tp, fp, fn_)
    }

    /// `2PR / (P + R)`, or 0 when `P + R == 0` (including zero support).
    pub fn class_f1(&self, class: Polarity) -> f64 {
        let (tp, fp, fn_) = self.class_counts(class);
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Builds the confusion matrix of `predictions` against `truth`, matched by event id.
pub fn confusion(
    predictions: &[(EventId, Polarity)],
    truth: &[(EventId, Polarity)],
) -> Result<ConfusionMatrix, EvalError> {
    let truth_map: HashMap<EventId, Polarity> = truth.iter().copied().collect();
    if truth_map.len() != truth.len() {
        return Err(EvalError::IdMismatch("duplicate id in truth".into()));
    }
    if predictions.len() != truth.len() {
        return Err(EvalError::IdMismatch(format!(
            "{} predictions for {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(predictions.len());
    for &(id, pred) in predictions {
        let t = truth_map
            .get(&id)
            .ok_or_else(|| EvalError::IdMismatch(format!("event {id} has no truth label")))?;
        if !seen.insert(id) {
            return Err(EvalError::IdMismatch(format!("event {id} predicted twice")));
        }
        pairs.push((*t, pred));
    }
    Ok(ConfusionMatrix::from_pairs(pairs))
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    match cm.total() {
        0 => Err(EvalError::EmptyMatrix),
        total => Ok(cm.trace() as f64 / total as f64),
    }
}

/// Macro-averaged F1 over the three classes.
pub fn f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    Ok(Polarity::ALL.iter().map(|&c| cm.class_f1(c)).sum::<f64>() / 3.0)
}

/// Stratified partition of event ids into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Vec<EventId>>,
    pub seed: u64,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// `(training ids, held-out ids)` for `fold`. With a single fold both are the whole set.
    pub fn train_test(&self, fold: usize) -> (Vec<EventId>, Vec<EventId>) {
        let test = self.folds[fold].clone();
        if self.k() == 1 {
            return (test.clone(), test);
        }
        let mut train: Vec<EventId> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        (train, test)
    }
}

/// Shuffles each class with a seeded generator and deals all classes round-robin
/// into `k` folds, continuing the deal across classes so fold sizes differ by at most one.
///
/// Classes are processed Negative, Neutral, Positive; ids are sorted before
/// shuffling so the input order does not matter. Absent classes are allowed.
pub fn kfold_split(events: &[(EventId, Polarity)], k: usize, seed: u64) -> Result<FoldSplit, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidFolds("k must be at least 1".into()));
    }
    let mut ids: HashSet<EventId> = HashSet::new();
    let mut by_class: BTreeMap<Polarity, Vec<EventId>> = BTreeMap::new();
    for &(id, label) in events {
        if !ids.insert(id) {
            return Err(EvalError::IdMismatch(format!("event {id} listed twice")));
        }
        by_class.entry(label).or_default().push(id);
    }
    for (&class, members) in &by_class {
        if members.len() < k {
            return Err(EvalError::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.sort_unstable();
        members.shuffle(&mut rng);
        for &id in members.iter() {
            folds[next].push(id);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldSplit { folds, seed })
}

/// A parameter setting and its metrics aggregated across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub strategy: SelectionStrategy,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
}

impl GridPoint {
    pub fn fusion(&self, template: &FusionParams) -> FusionParams {
        FusionParams {
            alpha: self.alpha,
            beta: self.beta,
            tau: self.tau,
            ..*template
        }
    }

    /// Ordering used to pick the best point: accuracy, then F1, then larger beta.
    /// Strategy order and smaller tau settle any remaining tie.
    fn better_than(&self, other: &GridPoint) -> bool {
        let key = |p: &GridPoint| (p.mean_accuracy, p.mean_f1, p.beta);
        match key(self).partial_cmp(&key(other)) {
            Some(std::cmp::Ordering::Greater) => true,
            Some(std::cmp::Ordering::Less) => false,
            _ => (self.strategy, self.tau) < (other.strategy, other.tau),
        }
    }
}

/// Metrics of one parameter setting on one subset of events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_events: usize,
    pub unscorable: usize,
    pub accuracy: f64,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub point: GridPoint,
    pub folds: Vec<FoldMetrics>,
}

/// The parameter axes searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    /// `(alpha, beta)` pairs.
    pub weights: Vec<(f64, f64)>,
    /// Neutral band widths; empty means "use the template's tau".
    pub taus: Vec<f64>,
    pub strategies: Vec<SelectionStrategy>,
}

impl Default for Grid {
    fn default() -> Self {
        Self::standard()
    }
}

impl Grid {
    /// `beta` in {0.2, 0.5, 0.8} with `alpha = 1 - beta`, all three strategies.
    pub fn standard() -> Self {
        Self {
            weights: vec![(0.8, 0.2), (0.5, 0.5), (0.2, 0.8)],
            taus: Vec::new(),
            strategies: SelectionStrategy::ALL.to_vec(),
        }
    }

    fn settings(&self, template: &FusionParams) -> Result<Vec<(FusionParams, SelectionStrategy)>, EvalError> {
        if self.weights.is_empty() || self.strategies.is_empty() {
            return Err(EvalError::InvalidGrid(
                "grid needs at least one weight pair and one strategy".into(),
            ));
        }
        let taus = if self.taus.is_empty() {
            vec![template.tau]
        } else {
            self.taus.clone()
        };
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &(alpha, beta) in &self.weights {
                for &tau in &taus {
                    let params = FusionParams {
                        alpha,
                        beta,
                        tau,
                        ..*template
                    };
                    params.validate()?;
                    out.push((params, strategy));
                }
            }
        }
        Ok(out)
    }
}

/// Scores the labelled events in `ids` and measures them against ground truth.
pub fn evaluate_subset(
    events: &HashMap<EventId, &AnalyzedEvent>,
    ids: &[EventId],
    fold: usize,
    params: &FusionParams,
    strategy: SelectionStrategy,
    lexicon: &AnpLexicon,
    ontology: &EgoOntology,
) -> Result<FoldMetrics, EvalError> {
    let mut pairs = Vec::with_capacity(ids.len());
    let mut unscorable = 0;
    for id in ids {
        let event = events
            .get(id)
            .ok_or_else(|| EvalError::IdMismatch(format!("split references unknown event {id}")))?;
        let truth = event.gt_label.ok_or(EvalError::Unlabelled(*id))?;
        match event.score(strategy, params, lexicon, ontology) {
            Ok((score, _)) => pairs.push((truth, score.label)),
            Err(SentimentError::EmptyScope) => unscorable += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let cm = ConfusionMatrix::from_pairs(pairs);
    Ok(FoldMetrics {
        fold,
        n_events: ids.len(),
        unscorable,
        accuracy: accuracy(&cm)?,
        f1: f1(&cm)?,
        confusion: cm,
    })
}

/// Population mean and standard deviation.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(params: &FusionParams, strategy: SelectionStrategy, folds: Vec<FoldMetrics>) -> GridResult {
    let (mean_accuracy, std_accuracy) = mean_std(folds.iter().map(|f| f.accuracy));
    let (mean_f1, std_f1) = mean_std(folds.iter().map(|f| f.f1));
    GridResult {
        point: GridPoint {
            alpha: params.alpha,
            beta: params.beta,
            tau: params.tau,
            strategy,
            mean_accuracy,
            std_accuracy,
            mean_f1,
            std_f1,
        },
        folds,
    }
}

fn index_events(events: &[AnalyzedEvent]) -> HashMap<EventId, &AnalyzedEvent> {
    events.iter().map(|e| (e.event_id, e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    /// One entry per (strategy, weight pair, tau), in grid order.
    pub results: Vec<GridResult>,
    pub best: GridPoint,
}

/// Picks the best point; independent of the order of `points`.
pub fn best_point<'a>(points: impl IntoIterator<Item = &'a GridPoint>) -> Option<GridPoint> {
    points.into_iter().fold(None, |best: Option<GridPoint>, p| match best {
        Some(b) if !p.better_than(&b) => Some(b),
        _ => Some(*p),
    })
}

/// Scores the training portion of every fold under every grid setting.
pub fn grid_search(
    events: &[AnalyzedEvent],
    grid: &Grid,
    template: &FusionParams,
    split: &FoldSplit,
    lexicon: &AnpLexicon,
    ontology: &EgoOntology,
) -> Result<GridSearch, EvalError> {
    let settings = grid.settings(template)?;
    let index = index_events(events);
    let k = split.k();
    let units: Vec<(usize, usize)> = (0..settings.len()).flat_map(|s| (0..k).map(move |f| (s, f))).collect();
    let metrics = units
        .par_iter()
        .map(|&(s, f)| {
            let (params, strategy) = &settings[s];
            let (train, _) = split.train_test(f);
            evaluate_subset(&index, &train, f, params, *strategy, lexicon, ontology)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut metrics = metrics.into_iter();
    let results: Vec<GridResult> = settings
        .iter()
        .map(|(params, strategy)| summarize(params, *strategy, metrics.by_ref().take(k).collect()))
        .collect();
    let best = best_point(results.iter().map(|r| &r.point)).expect("grid is non-empty");
    Ok(GridSearch { results, best })
}

/// Evaluates `point` on every held-out fold.
pub fn test_evaluate(
    events: &[AnalyzedEvent],
    split: &FoldSplit,
    point: &GridPoint,
    template: &FusionParams,
    lexicon: &AnpLexicon,
    ontology: &EgoOntology,
) -> Result<GridResult, EvalError> {
    let params = point.fusion(template);
    params.validate()?;
    let index = index_events(events);
    let folds = (0..split.k())
        .into_par_iter()
        .map(|f| {
            let (train, test) = split.train_test(f);
            let train: HashSet<EventId> = train.into_iter().collect();
            let overlap = test.iter().filter(|id| train.contains(id)).count();
            if overlap > 0 {
                return Err(EvalError::OverlapDetected {
                    fold: f,
                    count: overlap,
                });
            }
            evaluate_subset(&index, &test, f, &params, point.strategy, lexicon, ontology)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&params, point.strategy, folds))
}

/// Training and held-out results for one grid setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub training: GridResult,
    pub test: GridResult,
}

/// Full protocol output: the grid table, the selected point and its test metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub seed: u64,
    pub split_rng: String,
    pub split: FoldSplit,
    pub rows: Vec<GridRow>,
    pub best: GridPoint,
    pub best_test: GridResult,
    /// Best training point per strategy (one row per strategy, Table-2 style).
    pub best_per_strategy: Vec<GridPoint>,
}

/// Runs the grid search and then evaluates every grid setting on the held-out folds.
pub fn run_protocol(
    events: &[AnalyzedEvent],
    grid: &Grid,
    template: &FusionParams,
    split: &FoldSplit,
    lexicon: &AnpLexicon,
    ontology: &EgoOntology,
) -> Result<Evaluation, EvalError> {
    let search = grid_search(events, grid, template, split, lexicon, ontology)?;
    let rows = search
        .results
        .into_iter()
        .map(|training| {
            let test = test_evaluate(events, split, &training.point, template, lexicon, ontology)?;
            Ok(GridRow { training, test })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let best_test = rows
        .iter()
        .find(|r| r.training.point == search.best)
        .map(|r| r.test.clone())
        .expect("best point comes from the grid");
    let best_per_strategy = grid
        .strategies
        .iter()
        .filter_map(|&s| best_point(rows.iter().map(|r| &r.training.point).filter(|p| p.strategy == s)))
        .collect();
    Ok(Evaluation {
        seed: split.seed,
        split_rng: SPLIT_RNG.to_string(),
        split: split.clone(),
        rows,
        best: search.best,
        best_test,
        best_per_strategy,
    })
}
