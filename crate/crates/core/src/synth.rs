//! Synthetic corpora with planted ground truth.
//!
//! The generator builds a vocabulary of noun clusters (a fixed number per
//! polarity), a lexicon whose ANPs pair synthetic adjectives with those nouns,
//! a similarity matrix that is high within clusters and low across them, and
//! a photostream of labelled events. Every event is themed on one noun cluster
//! of its ground-truth polarity; its images give high probability to a small
//! core of that cluster's ANPs and low probability to a few random distractors.
//! Noisy events draw their theme from a mismatched polarity but keep the
//! original label.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concepts::{ImageRecord, PhotoStream};
use crate::io::{self, IoError};
use crate::lexicon::{AnpLexicon, EgoOntology, Polarity};
use crate::segmenter::{boundaries_to_csv, Event};
use crate::simcluster::NounSimilarity;
use crate::AnpId;

/// Generator identifier written to manifests.
pub const GENERATOR: &str = "egosent-synth/1 chacha8/seed_from_u64";

pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const ONTOLOGY_FILE: &str = "ontology.csv";
pub const SIMILARITY_FILE: &str = "similarity.tsv";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const BOUNDARIES_FILE: &str = "boundaries.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const DISTRACTORS_PER_IMAGE: usize = 3;
const FIRST_TIMESTAMP: i64 = 1_500_000_000;
const CAPTURE_INTERVAL: i64 = 30;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// How ANP sentiment values relate to their noun's polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnpSentimentMode {
    /// Sign follows the noun polarity; neutral nouns get `|s| <= 0.2`.
    #[default]
    Consistent,
    /// Uniform on `[-2, 2]` regardless of the noun.
    Randomized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_events: usize,
    /// Inclusive `[min, max]` images per event.
    pub images_per_event: (usize, usize),
    pub vocab_size: usize,
    /// Concepts per image drawn from the event's theme cluster.
    pub k_signal: usize,
    /// Fraction of events whose concepts come from a mismatched polarity.
    pub label_noise: f64,
    pub seed: u64,
    /// Relative class sizes as `(positive, negative, neutral)`.
    pub proportions: (f64, f64, f64),
    pub clusters_per_polarity: usize,
    pub nouns_per_cluster: usize,
    pub anp_sentiment: AnpSentimentMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_events: 98,
            images_per_event: (40, 62),
            vocab_size: 2089,
            k_signal: 5,
            label_noise: 0.0,
            seed: 7,
            proportions: (36.0, 43.0, 19.0),
            clusters_per_polarity: 4,
            nouns_per_cluster: 5,
            anp_sentiment: AnpSentimentMode::Consistent,
        }
    }
}

impl SynthConfig {
    fn n_nouns(&self) -> usize {
        3 * self.clusters_per_polarity * self.nouns_per_cluster
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::InvalidConfig(m));
        let (lo, hi) = self.images_per_event;
        if self.n_events == 0 {
            return fail("n_events must be positive".into());
        }
        if lo == 0 || lo > hi {
            return fail(format!("images_per_event ({lo}, {hi}) must satisfy 1 <= min <= max"));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return fail(format!("label_noise {} must be in [0, 1)", self.label_noise));
        }
        if self.k_signal == 0 {
            return fail("k_signal must be positive".into());
        }
        if self.clusters_per_polarity < 2 || self.nouns_per_cluster == 0 {
            return fail("need at least 2 clusters per polarity and 1 noun per cluster".into());
        }
        if self.vocab_size < self.n_nouns() {
            return fail(format!(
                "vocab_size {} is smaller than the {} nouns",
                self.vocab_size,
                self.n_nouns()
            ));
        }
        let (p, n, u) = self.proportions;
        if [p, n, u].iter().any(|x| !x.is_finite() || *x < 0.0) || p + n + u <= 0.0 {
            return fail("proportions must be non-negative with a positive sum".into());
        }
        Ok(())
    }

    /// Exact class counts by largest remainder, in `(positive, negative, neutral)` order.
    pub fn class_counts(&self) -> [usize; 3] {
        let (p, n, u) = self.proportions;
        let shares = [p, n, u];
        let total: f64 = shares.iter().sum();
        let exact: Vec<f64> = shares.iter().map(|s| s / total * self.n_events as f64).collect();
        let mut counts: [usize; 3] = [0; 3];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let missing = self.n_events - counts.iter().sum::<usize>();
        for &i in order.iter().take(missing) {
            counts[i] += 1;
        }
        counts
    }
}

/// A generated corpus.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub lexicon: AnpLexicon,
    pub ontology: EgoOntology,
    pub similarity: NounSimilarity,
    pub stream: PhotoStream,
    /// Ground-truth events tiling the stream.
    pub events: Vec<Event>,
    /// Events whose concepts were drawn from a mismatched polarity.
    pub noisy_events: Vec<u32>,
}

struct NounCluster {
    polarity: Polarity,
    nouns: Vec<String>,
    anps: Vec<AnpId>,
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

const CLASS_ORDER: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

pub fn generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut clusters: Vec<NounCluster> = Vec::new();
    for polarity in CLASS_ORDER {
        let tag = match polarity {
            Polarity::Positive => "pos",
            Polarity::Negative => "neg",
            Polarity::Neutral => "neu",
        };
        for c in 0..config.clusters_per_polarity {
            clusters.push(NounCluster {
                polarity,
                nouns: (0..config.nouns_per_cluster)
                    .map(|i| format!("{tag}{c:02}n{i}"))
                    .collect(),
                anps: Vec::new(),
            });
        }
    }
    let nouns: Vec<(usize, String)> = clusters
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| c.nouns.iter().map(move |n| (ci, n.clone())))
        .collect();

    let mut triples = Vec::with_capacity(config.vocab_size);
    let mut anp_cluster = Vec::with_capacity(config.vocab_size);
    for i in 0..config.vocab_size {
        let (ci, noun) = &nouns[i % nouns.len()];
        let ci = *ci;
        let s = match (config.anp_sentiment, clusters[ci].polarity) {
            (AnpSentimentMode::Randomized, _) => rng.gen_range(-2.0..=2.0),
            (_, Polarity::Positive) => rng.gen_range(0.8..=2.0),
            (_, Polarity::Negative) => rng.gen_range(-2.0..=-0.8),
            (_, Polarity::Neutral) => rng.gen_range(-0.2..=0.2),
        };
        triples.push((format!("adj{:04}", i / nouns.len()), noun.clone(), round_to(s, 2)));
        anp_cluster.push(ci);
    }
    for (id, &ci) in anp_cluster.iter().enumerate() {
        clusters[ci].anps.push(id as AnpId);
    }
    let lexicon = AnpLexicon::from_triples(triples).expect("generated lexicon is valid");

    let ontology_rows: Vec<(u32, Polarity, String)> = clusters
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| c.nouns.iter().map(move |n| (ci as u32 + 1, c.polarity, n.clone())))
        .collect();
    let ontology = EgoOntology::from_rows(ontology_rows, &lexicon).expect("generated ontology is valid");

    let mut pairs = Vec::new();
    for (ia, (ca, a)) in nouns.iter().enumerate() {
        for (cb, b) in &nouns[ia + 1..] {
            let (ca, cb) = (*ca, *cb);
            let (a, b) = (a.as_str(), b.as_str());
            if ca == cb {
                pairs.push((a, b, round_to(rng.gen_range(0.7..=0.95), 2)));
            } else if clusters[ca].polarity == clusters[cb].polarity {
                pairs.push((a, b, round_to(rng.gen_range(0.05..=0.3), 2)));
            }
        }
    }
    let similarity = NounSimilarity::from_pairs(pairs).expect("generated similarity is valid");

    let counts = config.class_counts();
    let mut labels: Vec<Polarity> = CLASS_ORDER
        .iter()
        .zip(counts)
        .flat_map(|(&p, n)| std::iter::repeat_n(p, n))
        .collect();
    labels.shuffle(&mut rng);
    let n_noisy = (config.label_noise * config.n_events as f64).round() as usize;
    let mut order: Vec<usize> = (0..config.n_events).collect();
    order.shuffle(&mut rng);
    let mut noisy = vec![false; config.n_events];
    for &i in order.iter().take(n_noisy) {
        noisy[i] = true;
    }

    let vocab = config.vocab_size;
    let mut images = Vec::new();
    let mut event_spans = Vec::new();
    let mut previous_theme = usize::MAX;
    let mut timestamp = FIRST_TIMESTAMP;
    for (e, &label) in labels.iter().enumerate() {
        let drawn = if noisy[e] {
            let others: Vec<Polarity> = Polarity::ALL.into_iter().filter(|&p| p != label).collect();
            others[rng.gen_range(0..others.len())]
        } else {
            label
        };
        let candidates: Vec<usize> = (0..clusters.len())
            .filter(|&c| clusters[c].polarity == drawn && c != previous_theme)
            .collect();
        let theme = candidates[rng.gen_range(0..candidates.len())];
        previous_theme = theme;
        let core_size = (config.k_signal + 1).min(clusters[theme].anps.len());
        let core: Vec<AnpId> = clusters[theme]
            .anps
            .choose_multiple(&mut rng, core_size)
            .copied()
            .collect();
        let picks = config.k_signal.min(core.len());

        let n_images = rng.gen_range(config.images_per_event.0..=config.images_per_event.1);
        let start = images.len();
        for _ in 0..n_images {
            let mut scores: BTreeMap<AnpId, f64> = BTreeMap::new();
            for &id in core.choose_multiple(&mut rng, picks) {
                scores.insert(id, round_to(rng.gen_range(0.6..=0.95), 4));
            }
            for _ in 0..DISTRACTORS_PER_IMAGE {
                let id = rng.gen_range(0..vocab) as AnpId;
                let p = round_to(rng.gen_range(0.01..=0.1), 4);
                scores.entry(id).or_insert(p);
            }
            let image_id = format!("img_{:05}", images.len() + 1);
            images.push(ImageRecord::new(image_id, timestamp, scores, vocab).expect("generated scores are valid"));
            timestamp += CAPTURE_INTERVAL;
        }
        timestamp += CAPTURE_INTERVAL;
        event_spans.push((start, images.len(), label));
    }
    let stream = PhotoStream::new(images, &lexicon).expect("generated stream is valid");
    let events = event_spans
        .into_iter()
        .enumerate()
        .map(|(i, (s, t, label))| Event::new(i as u32, stream.images()[s..t].to_vec(), Some(label)))
        .collect();
    let noisy_events = (0..config.n_events as u32).filter(|&i| noisy[i as usize]).collect();

    Ok(SynthDataset {
        config: config.clone(),
        lexicon,
        ontology,
        similarity,
        stream,
        events,
        noisy_events,
    })
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    generator: &'static str,
    config: &'a SynthConfig,
    class_counts: BTreeMap<String, usize>,
    n_images: usize,
    noisy_events: &'a [u32],
    files: BTreeMap<&'static str, String>,
}

impl SynthDataset {
    /// File name and contents of every artifact, manifest last.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        let mut files = vec![
            (LEXICON_FILE, self.lexicon.to_tsv()),
            (ONTOLOGY_FILE, self.ontology.to_csv()),
            (SIMILARITY_FILE, self.similarity.to_tsv()),
            (SCORES_FILE, self.stream.to_jsonl()),
            (BOUNDARIES_FILE, boundaries_to_csv(&self.events)),
        ];
        let hashes = files.iter().map(|(n, c)| (*n, io::sha256_hex(c.as_bytes()))).collect();
        let mut class_counts = BTreeMap::new();
        for e in &self.events {
            *class_counts
                .entry(e.gt_label.expect("synthetic events are labelled").to_string())
                .or_insert(0) += 1;
        }
        let manifest = Manifest {
            generator: GENERATOR,
            config: &self.config,
            class_counts,
            n_images: self.stream.len(),
            noisy_events: &self.noisy_events,
            files: hashes,
        };
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        files.push((MANIFEST_FILE, json));
        files
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        std::fs::create_dir_all(dir).map_err(|e| IoError::new(dir, e))?;
        for (name, contents) in self.files() {
            io::write_atomic(&dir.join(name), contents.as_bytes())?;
        }
        Ok(())
    }
}
