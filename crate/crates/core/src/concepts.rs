//! Per-image concept scores and top-k selection.
//!
//! Concept scores are stored sparsely as `(anp_id, probability)` pairs sorted
//! by id. Zero-probability entries are dropped on construction because they
//! can never enter a top-k. Probabilities are taken as given and never
//! renormalized.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::lexicon::AnpLexicon;
use crate::segmenter::Event;
use crate::AnpId;

#[derive(Debug, thiserror::Error)]
pub enum ConceptError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: ANP id {anp_id} outside vocabulary of size {vocab_size}")]
    UnknownAnpId {
        line: usize,
        anp_id: i64,
        vocab_size: usize,
    },
    #[error("line {line}: probability {value} for ANP {anp_id} outside [0, 1]")]
    ProbabilityOutOfRange { line: usize, anp_id: AnpId, value: f64 },
    #[error("line {line}: ANP id {anp_id} listed twice for one image")]
    DuplicateAnpId { line: usize, anp_id: AnpId },
    #[error("line {line}: image id `{image_id}` appears twice")]
    DuplicateImageId { line: usize, image_id: String },
    #[error("scores were produced against lexicon {found} (vocab {found_vocab}), loaded lexicon is {expected} (vocab {expected_vocab})")]
    LexiconMismatch {
        expected: String,
        expected_vocab: usize,
        found: String,
        found_vocab: usize,
    },
    #[error("photostream contains no images")]
    EmptyStream,
    #[error(transparent)]
    Io(#[from] IoError),
}

/// One captured frame and its concept likelihoods.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub timestamp: i64,
    scores: Vec<(AnpId, f64)>,
}

impl ImageRecord {
    /// Validates and sparsifies a score list. `line` is only used for error reporting.
    fn build(
        line: usize,
        image_id: String,
        timestamp: i64,
        raw: impl IntoIterator<Item = (i64, f64)>,
        vocab_size: usize,
    ) -> Result<Self, ConceptError> {
        let mut scores = Vec::new();
        for (id, p) in raw {
            if id < 0 || id as u64 >= vocab_size as u64 {
                return Err(ConceptError::UnknownAnpId {
                    line,
                    anp_id: id,
                    vocab_size,
                });
            }
            let anp_id = id as AnpId;
            if !(0.0..=1.0).contains(&p) {
                return Err(ConceptError::ProbabilityOutOfRange { line, anp_id, value: p });
            }
            scores.push((anp_id, p));
        }
        scores.sort_by_key(|&(id, _)| id);
        if let Some(w) = scores.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(ConceptError::DuplicateAnpId { line, anp_id: w[0].0 });
        }
        scores.retain(|&(_, p)| p > 0.0);
        Ok(Self {
            image_id,
            timestamp,
            scores,
        })
    }

    pub fn new(
        image_id: impl Into<String>,
        timestamp: i64,
        scores: impl IntoIterator<Item = (AnpId, f64)>,
        vocab_size: usize,
    ) -> Result<Self, ConceptError> {
        Self::build(
            0,
            image_id.into(),
            timestamp,
            scores.into_iter().map(|(id, p)| (id as i64, p)),
            vocab_size,
        )
    }

    /// Nonzero scores sorted by ANP id.
    pub fn scores(&self) -> &[(AnpId, f64)] {
        &self.scores
    }

    pub fn probability(&self, anp_id: AnpId) -> f64 {
        self.scores
            .binary_search_by_key(&anp_id, |&(id, _)| id)
            .map_or(0.0, |i| self.scores[i].1)
    }

    /// The same image with every probability multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.scores {
            s.1 *= factor;
        }
        out.scores.retain(|&(_, p)| p > 0.0);
        out
    }
}

/// A concept drawn from one image's top-k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredConcept {
    pub anp_id: AnpId,
    pub probability: f64,
    pub source_image: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct StreamHeader {
    lexicon_hash: String,
    vocab_size: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordLine<'a> {
    #[serde(borrow)]
    image_id: std::borrow::Cow<'a, str>,
    timestamp: i64,
    scores: Vec<(i64, f64)>,
}

/// Time-ordered images captured by one wearer, bound to the lexicon that indexes their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotoStream {
    images: Vec<ImageRecord>,
    lexicon_hash: String,
    vocab_size: usize,
}

impl PhotoStream {
    /// Sorts images by `(timestamp, image_id)` and checks id uniqueness.
    pub fn new(mut images: Vec<ImageRecord>, lexicon: &AnpLexicon) -> Result<Self, ConceptError> {
        if images.is_empty() {
            return Err(ConceptError::EmptyStream);
        }
        let mut seen = HashSet::new();
        for (i, img) in images.iter().enumerate() {
            if !seen.insert(img.image_id.as_str()) {
                return Err(ConceptError::DuplicateImageId {
                    line: i + 2,
                    image_id: img.image_id.clone(),
                });
            }
        }
        images.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.image_id.cmp(&b.image_id)));
        Ok(Self {
            images,
            lexicon_hash: lexicon.hash().to_string(),
            vocab_size: lexicon.vocab_size(),
        })
    }

    pub fn parse_jsonl(text: &str, lexicon: &AnpLexicon) -> Result<Self, ConceptError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(ConceptError::EmptyStream)?;
        let header: StreamHeader = serde_json::from_str(first).map_err(|e| ConceptError::Malformed {
            line: 1,
            reason: format!("header: {e}"),
        })?;
        if header.lexicon_hash != lexicon.hash() || header.vocab_size != lexicon.vocab_size() {
            return Err(ConceptError::LexiconMismatch {
                expected: lexicon.hash().to_string(),
                expected_vocab: lexicon.vocab_size(),
                found: header.lexicon_hash,
                found_vocab: header.vocab_size,
            });
        }
        let mut images = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in lines {
            let line = i + 1;
            let rec: RecordLine = serde_json::from_str(raw).map_err(|e| ConceptError::Malformed {
                line,
                reason: e.to_string(),
            })?;
            if !seen.insert(rec.image_id.to_string()) {
                return Err(ConceptError::DuplicateImageId {
                    line,
                    image_id: rec.image_id.into_owned(),
                });
            }
            images.push(ImageRecord::build(
                line,
                rec.image_id.into_owned(),
                rec.timestamp,
                rec.scores,
                lexicon.vocab_size(),
            )?);
        }
        Self::new(images, lexicon)
    }

    pub fn load(path: &Path, lexicon: &AnpLexicon) -> Result<Self, ConceptError> {
        Self::parse_jsonl(&io::read_to_string(path)?, lexicon)
    }

    /// Imports the dense CSV form `image_id,timestamp,p0,...,p{V-1}` (with header row).
    pub fn parse_dense_csv(text: &str, lexicon: &AnpLexicon) -> Result<Self, ConceptError> {
        let vocab = lexicon.vocab_size();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| ConceptError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?;
        if header.len() != vocab + 2 {
            return Err(ConceptError::Malformed {
                line: 1,
                reason: format!("expected {} columns, found {}", vocab + 2, header.len()),
            });
        }
        let mut images = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| ConceptError::Malformed {
                line: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let bad = |what: &str, v: &str| ConceptError::Malformed {
                line,
                reason: format!("unparsable {what} `{v}`"),
            };
            let timestamp: i64 = record[1].parse().map_err(|_| bad("timestamp", &record[1]))?;
            let mut scores = Vec::new();
            for (j, field) in record.iter().skip(2).enumerate() {
                let p: f64 = field.parse().map_err(|_| bad("probability", field))?;
                scores.push((j as i64, p));
            }
            images.push(ImageRecord::build(
                line,
                record[0].to_string(),
                timestamp,
                scores,
                vocab,
            )?);
        }
        Self::new(images, lexicon)
    }

    pub fn to_jsonl(&self) -> String {
        let header = StreamHeader {
            lexicon_hash: self.lexicon_hash.clone(),
            vocab_size: self.vocab_size,
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for img in &self.images {
            let rec = RecordLine {
                image_id: img.image_id.as_str().into(),
                timestamp: img.timestamp,
                scores: img.scores.iter().map(|&(id, p)| (id as i64, p)).collect(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        io::write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn lexicon_hash(&self) -> &str {
        &self.lexicon_hash
    }

    pub fn position(&self, image_id: &str) -> Option<usize> {
        self.images.iter().position(|img| img.image_id == image_id)
    }
}

fn rank(a: &(AnpId, f64), b: &(AnpId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `min(k, nonzero)` highest-probability concepts of `image`, descending,
/// ties broken by ascending ANP id.
pub fn top_k(image: &ImageRecord, k: usize) -> Vec<ScoredConcept> {
    let mut ranked: Vec<(AnpId, f64)> = image.scores.clone();
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k, rank);
        ranked.truncate(k);
    }
    ranked.sort_by(rank);
    ranked
        .into_iter()
        .map(|(anp_id, probability)| ScoredConcept {
            anp_id,
            probability,
            source_image: image.image_id.clone(),
        })
        .collect()
}

/// Concatenated top-k of every image of `event`, in image order then rank.
pub fn event_concept_pool(event: &Event, k: usize) -> Vec<ScoredConcept> {
    event.images.iter().flat_map(|img| top_k(img, k)).collect()
}
