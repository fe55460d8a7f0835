//! ANP sentiment lexicon and the egocentric noun ontology.
//!
//! The lexicon is a headerless TSV `adjective<TAB>noun<TAB>sentiment`; the row
//! index of each entry is its ANP id. The ontology is a CSV with header
//! `cluster_id,polarity,noun` that groups nouns into labelled categories.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::AnpId;

/// Largest admissible absolute VSO sentiment.
pub const SENTIMENT_BOUND: f64 = 2.0;

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: sentiment {value} outside [-2, 2]")]
    SentimentOutOfRange { line: usize, value: f64 },
    #[error("line {line}: duplicate ANP `{adjective} {noun}` (first seen as id {first})")]
    DuplicateAnp {
        line: usize,
        adjective: String,
        noun: String,
        first: AnpId,
    },
    #[error("lexicon is empty")]
    Empty,
    #[error("line {line}: noun `{noun}` listed in clusters {first} and {second}")]
    DuplicateNoun {
        line: usize,
        noun: String,
        first: u32,
        second: u32,
    },
    #[error("line {line}: polarity `{value}` is not one of -1, 0, 1")]
    BadPolarity { line: usize, value: String },
    #[error("line {line}: cluster {cluster} labelled both {first} and {second}")]
    ConflictingPolarity {
        line: usize,
        cluster: u32,
        first: Polarity,
        second: Polarity,
    },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Ternary sentiment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Polarity {
    Negative = -1,
    Neutral = 0,
    Positive = 1,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Neutral, Polarity::Positive];

    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn from_value(value: i8) -> Option<Self> {
        match value {
            -1 => Some(Polarity::Negative),
            0 => Some(Polarity::Neutral),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    /// Position of the class in `ALL`, used to index 3-element tables.
    pub fn index(self) -> usize {
        (self.value() + 1) as usize
    }

    pub fn negate(self) -> Self {
        match self {
            Polarity::Negative => Polarity::Positive,
            Polarity::Neutral => Polarity::Neutral,
            Polarity::Positive => Polarity::Negative,
        }
    }

    /// Parses `-1`, `0`, `1` (optionally `+1`).
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "-1" => Some(Polarity::Negative),
            "0" | "-0" | "+0" => Some(Polarity::Neutral),
            "1" | "+1" => Some(Polarity::Positive),
            _ => None,
        }
    }
}

impl From<Polarity> for i8 {
    fn from(p: Polarity) -> i8 {
        p.value()
    }
}

impl TryFrom<i8> for Polarity {
    type Error = String;

    fn try_from(value: i8) -> Result<Self, Self::Error> {
        Polarity::from_value(value).ok_or_else(|| format!("polarity {value} not in {{-1, 0, 1}}"))
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnpEntry {
    pub anp_id: AnpId,
    pub adjective: String,
    pub noun: String,
    pub sentiment_vso: f64,
}

/// The ANP vocabulary. Entry `i` has `anp_id == i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnpLexicon {
    entries: Vec<AnpEntry>,
    by_pair: HashMap<(String, String), AnpId>,
    hash: String,
}

impl AnpLexicon {
    /// Builds a lexicon from `(adjective, noun, sentiment)` triples in id order.
    pub fn from_triples<I, A, N>(triples: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (A, N, f64)>,
        A: AsRef<str>,
        N: AsRef<str>,
    {
        let mut builder = LexiconBuilder::default();
        for (i, (adj, noun, s)) in triples.into_iter().enumerate() {
            builder.push(i + 1, adj.as_ref(), noun.as_ref(), s)?;
        }
        builder.finish()
    }

    pub fn parse_tsv(text: &str) -> Result<Self, LexiconError> {
        let mut builder = LexiconBuilder::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != 3 {
                return Err(LexiconError::MalformedRow {
                    line,
                    reason: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let value: f64 = cols[2].trim().parse().map_err(|_| LexiconError::MalformedRow {
                line,
                reason: format!("unparsable sentiment `{}`", cols[2]),
            })?;
            if value.is_nan() {
                return Err(LexiconError::MalformedRow {
                    line,
                    reason: "sentiment is NaN".into(),
                });
            }
            builder.push(line, cols[0], cols[1], value)?;
        }
        builder.finish()
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::parse_tsv(&io::read_to_string(path)?)
    }

    /// Canonical TSV form; its SHA-256 is the lexicon hash.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.adjective, e.noun, e.sentiment_vso));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        io::write_atomic(path, self.to_tsv().as_bytes())
    }

    pub fn entries(&self) -> &[AnpEntry] {
        &self.entries
    }

    pub fn vocab_size(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, id: AnpId) -> Option<&AnpEntry> {
        self.entries.get(id as usize)
    }

    pub fn find(&self, adjective: &str, noun: &str) -> Option<&AnpEntry> {
        let key = (io::normalize_token(adjective), io::normalize_token(noun));
        self.by_pair.get(&key).map(|&id| &self.entries[id as usize])
    }

    /// Content hash of the canonical serialization.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Distinct nouns, sorted.
    pub fn nouns(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.noun.as_str()).collect()
    }
}

#[derive(Default)]
struct LexiconBuilder {
    entries: Vec<AnpEntry>,
    by_pair: HashMap<(String, String), AnpId>,
}

impl LexiconBuilder {
    fn push(&mut self, line: usize, adj: &str, noun: &str, value: f64) -> Result<(), LexiconError> {
        let adjective = io::normalize_token(adj);
        let noun = io::normalize_token(noun);
        if adjective.is_empty() || noun.is_empty() {
            return Err(LexiconError::MalformedRow {
                line,
                reason: "empty adjective or noun".into(),
            });
        }
        if value.is_nan() || value.abs() > SENTIMENT_BOUND {
            return Err(LexiconError::SentimentOutOfRange { line, value });
        }
        let anp_id = self.entries.len() as AnpId;
        let key = (adjective.clone(), noun.clone());
        if let Some(&first) = self.by_pair.get(&key) {
            return Err(LexiconError::DuplicateAnp {
                line,
                adjective,
                noun,
                first,
            });
        }
        self.by_pair.insert(key, anp_id);
        self.entries.push(AnpEntry {
            anp_id,
            adjective,
            noun,
            sentiment_vso: value,
        });
        Ok(())
    }

    fn finish(self) -> Result<AnpLexicon, LexiconError> {
        if self.entries.is_empty() {
            return Err(LexiconError::Empty);
        }
        let mut lexicon = AnpLexicon {
            entries: self.entries,
            by_pair: self.by_pair,
            hash: String::new(),
        };
        lexicon.hash = io::sha256_hex(lexicon.to_tsv().as_bytes());
        Ok(lexicon)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OntologyCluster {
    pub cluster_id: u32,
    pub polarity: Polarity,
    pub nouns: BTreeSet<String>,
}

/// Nouns grouped into labelled categories, plus the lexicon nouns no category covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgoOntology {
    clusters: Vec<OntologyCluster>,
    noun_index: HashMap<String, usize>,
    uncovered_nouns: BTreeSet<String>,
}

pub const ONTOLOGY_HEADER: [&str; 3] = ["cluster_id", "polarity", "noun"];

impl EgoOntology {
    /// Builds an ontology from `(cluster_id, polarity, noun)` rows.
    pub fn from_rows<I, S>(rows: I, lexicon: &AnpLexicon) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (u32, Polarity, S)>,
        S: AsRef<str>,
    {
        let mut builder = OntologyBuilder::default();
        for (i, (cid, pol, noun)) in rows.into_iter().enumerate() {
            builder.push(i + 2, cid, pol, noun.as_ref())?;
        }
        Ok(builder.finish(lexicon))
    }

    pub fn parse_csv(text: &str, lexicon: &AnpLexicon) -> Result<Self, LexiconError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| malformed(1, e))?;
        if header.iter().collect::<Vec<_>>() != ONTOLOGY_HEADER {
            return Err(LexiconError::MalformedRow {
                line: 1,
                reason: format!("expected header `{}`", ONTOLOGY_HEADER.join(",")),
            });
        }
        let mut builder = OntologyBuilder::default();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                malformed(line, e)
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let cluster_id: u32 = record[0].parse().map_err(|_| LexiconError::MalformedRow {
                line,
                reason: format!("unparsable cluster_id `{}`", &record[0]),
            })?;
            let polarity = Polarity::parse(&record[1]).ok_or_else(|| LexiconError::BadPolarity {
                line,
                value: record[1].to_string(),
            })?;
            builder.push(line, cluster_id, polarity, &record[2])?;
        }
        Ok(builder.finish(lexicon))
    }

    pub fn load(path: &Path, lexicon: &AnpLexicon) -> Result<Self, LexiconError> {
        Self::parse_csv(&io::read_to_string(path)?, lexicon)
    }

    /// CSV form ordered by cluster id, then noun.
    pub fn to_csv(&self) -> String {
        let mut out = ONTOLOGY_HEADER.join(",");
        out.push('\n');
        for c in &self.clusters {
            for noun in &c.nouns {
                out.push_str(&format!("{},{},{}\n", c.cluster_id, c.polarity, noun));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        io::write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn clusters(&self) -> &[OntologyCluster] {
        &self.clusters
    }

    pub fn cluster_of(&self, noun: &str) -> Option<&OntologyCluster> {
        self.noun_index.get(noun).map(|&i| &self.clusters[i])
    }

    /// Polarity of the category containing `noun`; Neutral for uncovered nouns.
    pub fn noun_polarity(&self, noun: &str) -> Polarity {
        self.cluster_of(noun).map_or(Polarity::Neutral, |c| c.polarity)
    }

    /// Lexicon nouns that belong to no category.
    pub fn uncovered_nouns(&self) -> &BTreeSet<String> {
        &self.uncovered_nouns
    }
}

fn malformed(line: usize, e: csv::Error) -> LexiconError {
    LexiconError::MalformedRow {
        line,
        reason: e.to_string(),
    }
}

#[derive(Default)]
struct OntologyBuilder {
    clusters: BTreeMap<u32, (Polarity, BTreeSet<String>)>,
    owner: HashMap<String, u32>,
}

impl OntologyBuilder {
    fn push(&mut self, line: usize, cluster_id: u32, polarity: Polarity, noun: &str) -> Result<(), LexiconError> {
        let noun = io::normalize_token(noun);
        if noun.is_empty() {
            return Err(LexiconError::MalformedRow {
                line,
                reason: "empty noun".into(),
            });
        }
        if let Some(&first) = self.owner.get(&noun) {
            return Err(LexiconError::DuplicateNoun {
                line,
                noun,
                first,
                second: cluster_id,
            });
        }
        let (pol, nouns) = self
            .clusters
            .entry(cluster_id)
            .or_insert_with(|| (polarity, BTreeSet::new()));
        if *pol != polarity {
            return Err(LexiconError::ConflictingPolarity {
                line,
                cluster: cluster_id,
                first: *pol,
                second: polarity,
            });
        }
        nouns.insert(noun.clone());
        self.owner.insert(noun, cluster_id);
        Ok(())
    }

    fn finish(self, lexicon: &AnpLexicon) -> EgoOntology {
        let clusters: Vec<OntologyCluster> = self
            .clusters
            .into_iter()
            .map(|(cluster_id, (polarity, nouns))| OntologyCluster {
                cluster_id,
                polarity,
                nouns,
            })
            .collect();
        let noun_index: HashMap<String, usize> = clusters
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.nouns.iter().map(move |n| (n.clone(), i)))
            .collect();
        let uncovered_nouns = lexicon
            .nouns()
            .into_iter()
            .filter(|n| !noun_index.contains_key(*n))
            .map(str::to_string)
            .collect();
        EgoOntology {
            clusters,
            noun_index,
            uncovered_nouns,
        }
    }
}
