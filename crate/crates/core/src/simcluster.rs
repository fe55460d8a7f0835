//! Noun similarity ingestion, complete-linkage clustering of an event's
//! concept pool, and dominant-cluster selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::concepts::ScoredConcept;
use crate::io::{self, IoError};
use crate::lexicon::AnpLexicon;

#[derive(Debug, thiserror::Error)]
pub enum SimilarityError {
    #[error("line {line}: malformed similarity row: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: pair ({a}, {b}) listed with {first} and {second}")]
    AsymmetricInput {
        line: usize,
        a: String,
        b: String,
        first: f64,
        second: f64,
    },
    #[error("line {line}: similarity {value} outside [0, 1]")]
    ValueOutOfRange { line: usize, value: f64 },
    #[error(transparent)]
    Io(#[from] IoError),
}

pub const SIMILARITY_HEADER: [&str; 3] = ["noun_a", "noun_b", "similarity"];

/// Symmetric noun-to-noun similarity with unit diagonal. Unlisted pairs are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NounSimilarity {
    nouns: Vec<String>,
    index: HashMap<String, usize>,
    sim: Vec<f64>,
}

impl NounSimilarity {
    /// Builds the matrix from undirected `(a, b, similarity)` pairs.
    /// Self-pairs only register the noun; the diagonal is always 1.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self, SimilarityError>
    where
        I: IntoIterator<Item = (S, S, f64)>,
        S: AsRef<str>,
    {
        let rows: Vec<(usize, String, String, f64)> = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (a, b, v))| {
                (
                    i + 2,
                    io::normalize_token(a.as_ref()),
                    io::normalize_token(b.as_ref()),
                    v,
                )
            })
            .collect();
        Self::build(rows)
    }

    fn build(rows: Vec<(usize, String, String, f64)>) -> Result<Self, SimilarityError> {
        let mut values: BTreeMap<(String, String), (usize, f64)> = BTreeMap::new();
        let mut nouns = BTreeSet::new();
        for (line, a, b, v) in rows {
            if a.is_empty() || b.is_empty() {
                return Err(SimilarityError::Malformed {
                    line,
                    reason: "empty noun".into(),
                });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(SimilarityError::ValueOutOfRange { line, value: v });
            }
            nouns.insert(a.clone());
            nouns.insert(b.clone());
            if a == b {
                continue;
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if let Some(&(_, first)) = values.get(&key) {
                if first != v {
                    return Err(SimilarityError::AsymmetricInput {
                        line,
                        a: key.0,
                        b: key.1,
                        first,
                        second: v,
                    });
                }
            }
            values.insert(key, (line, v));
        }
        let nouns: Vec<String> = nouns.into_iter().collect();
        let index: HashMap<String, usize> = nouns.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let n = nouns.len();
        let mut sim = vec![0.0; n * n];
        for i in 0..n {
            sim[i * n + i] = 1.0;
        }
        for ((a, b), (_, v)) in values {
            let (i, j) = (index[&a], index[&b]);
            sim[i * n + j] = v;
            sim[j * n + i] = v;
        }
        Ok(Self { nouns, index, sim })
    }

    pub fn parse_tsv(text: &str) -> Result<Self, SimilarityError> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l.trim_end_matches('\r'));
        if header.map(|h| h.split('\t').map(str::trim).collect::<Vec<_>>()) != Some(SIMILARITY_HEADER.to_vec()) {
            return Err(SimilarityError::Malformed {
                line: 1,
                reason: format!("expected header `{}`", SIMILARITY_HEADER.join("\\t")),
            });
        }
        let mut rows = Vec::new();
        for (i, raw) in lines {
            let line = i + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = raw.split('\t').collect();
            if cols.len() != 3 {
                return Err(SimilarityError::Malformed {
                    line,
                    reason: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let v: f64 = cols[2].trim().parse().map_err(|_| SimilarityError::Malformed {
                line,
                reason: format!("unparsable similarity `{}`", cols[2]),
            })?;
            rows.push((line, io::normalize_token(cols[0]), io::normalize_token(cols[1]), v));
        }
        Self::build(rows)
    }

    pub fn load(path: &Path) -> Result<Self, SimilarityError> {
        Self::parse_tsv(&io::read_to_string(path)?)
    }

    /// TSV with every nonzero off-diagonal pair once; nouns without any such pair
    /// are written as a self-pair so the vocabulary survives a reload.
    pub fn to_tsv(&self) -> String {
        let n = self.nouns.len();
        let mut out = SIMILARITY_HEADER.join("\t");
        out.push('\n');
        let mut linked = vec![false; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.sim[i * n + j];
                if v > 0.0 {
                    linked[i] = true;
                    linked[j] = true;
                    out.push_str(&format!("{}\t{}\t{}\n", self.nouns[i], self.nouns[j], v));
                }
            }
        }
        for (i, noun) in self.nouns.iter().enumerate() {
            if !linked[i] {
                out.push_str(&format!("{noun}\t{noun}\t1\n"));
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        io::write_atomic(path, self.to_tsv().as_bytes())
    }

    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    pub fn contains(&self, noun: &str) -> bool {
        self.index.contains_key(noun)
    }

    /// Similarity of two listed nouns, `None` if either is absent.
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let (i, j) = (*self.index.get(a)?, *self.index.get(b)?);
        Some(self.sim[i * self.nouns.len() + j])
    }
}

/// A group of pool concepts whose nouns were merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NounCluster {
    /// Member nouns, sorted.
    pub nouns: Vec<String>,
    /// Pool indices of the member concepts, ascending.
    pub members: Vec<usize>,
}

impl NounCluster {
    /// Number of member concept occurrences.
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NounClusterSet {
    /// Ordered by smallest member noun.
    pub clusters: Vec<NounCluster>,
    pub linkage_threshold: f64,
    pub pool_size: usize,
}

/// Complete-linkage agglomeration over the distinct nouns of `pool`.
///
/// Two clusters merge while their complete-linkage similarity (the minimum
/// pairwise similarity, i.e. distance `1 - sim` at its maximum) is strictly
/// above `threshold`. The closest pair merges first; ties go to the
/// lexicographically smallest pair of cluster representatives. Nouns missing
/// from `sim` never merge.
pub fn cluster_nouns(
    pool: &[ScoredConcept],
    lexicon: &AnpLexicon,
    sim: &NounSimilarity,
    threshold: f64,
) -> NounClusterSet {
    let noun_of = |c: &ScoredConcept| {
        lexicon
            .get(c.anp_id)
            .map(|e| e.noun.as_str())
            .expect("pool concepts come from the lexicon")
    };
    let nouns: Vec<&str> = pool.iter().map(noun_of).collect::<BTreeSet<_>>().into_iter().collect();
    let n = nouns.len();

    // link[i * n + j]: complete-linkage similarity between active clusters keyed by slot.
    let mut link = vec![f64::NEG_INFINITY; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if let Some(v) = sim.get(nouns[i], nouns[j]) {
                link[i * n + j] = v;
                link[j * n + i] = v;
            }
        }
    }
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            if members[a].is_none() {
                continue;
            }
            for b in a + 1..n {
                if members[b].is_none() {
                    continue;
                }
                let v = link[a * n + b];
                if best.is_none_or(|(_, _, bv)| v > bv) {
                    best = Some((a, b, v));
                }
            }
        }
        let Some((a, b, v)) = best else { break };
        if v <= threshold {
            break;
        }
        let absorbed = members[b].take().expect("active cluster");
        members[a].as_mut().expect("active cluster").extend(absorbed);
        for k in 0..n {
            if k != a && members[k].is_some() {
                let merged = link[a * n + k].min(link[b * n + k]);
                link[a * n + k] = merged;
                link[k * n + a] = merged;
            }
        }
    }

    let mut slot_of_noun = HashMap::new();
    let mut clusters = Vec::new();
    for group in members.into_iter().flatten() {
        let mut group = group;
        group.sort_unstable();
        for &i in &group {
            slot_of_noun.insert(nouns[i], clusters.len());
        }
        clusters.push(NounCluster {
            nouns: group.iter().map(|&i| nouns[i].to_string()).collect(),
            members: Vec::new(),
        });
    }
    for (idx, c) in pool.iter().enumerate() {
        clusters[slot_of_noun[noun_of(c)]].members.push(idx);
    }
    NounClusterSet {
        clusters,
        linkage_threshold: threshold,
        pool_size: pool.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStrategy {
    /// The single biggest cluster.
    Largest,
    /// The three biggest clusters, equally weighted.
    Top3,
    /// Every cluster, weighted by its share of the pool.
    #[serde(rename = "weighted")]
    SizeWeighted,
}

impl SelectionStrategy {
    pub const ALL: [SelectionStrategy; 3] = [Self::Largest, Self::Top3, Self::SizeWeighted];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Largest => "largest",
            Self::Top3 => "top3",
            Self::SizeWeighted => "weighted",
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "largest" => Ok(Self::Largest),
            "top3" => Ok(Self::Top3),
            "weighted" => Ok(Self::SizeWeighted),
            other => Err(format!(
                "unknown strategy `{other}` (expected largest, top3 or weighted)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSelection {
    /// `(cluster index, weight)`, biggest cluster first.
    pub selected: Vec<(usize, f64)>,
    pub strategy: SelectionStrategy,
}

impl ClusterSelection {
    pub fn weight_of(&self, cluster: usize) -> Option<f64> {
        self.selected.iter().find(|(c, _)| *c == cluster).map(|&(_, w)| w)
    }
}

/// Picks the dominant cluster(s). Clusters are ranked by size, ties by smallest member noun.
pub fn select_clusters(set: &NounClusterSet, strategy: SelectionStrategy) -> ClusterSelection {
    let mut ranked: Vec<usize> = (0..set.clusters.len()).collect();
    ranked.sort_by(|&a, &b| {
        let (ca, cb) = (&set.clusters[a], &set.clusters[b]);
        cb.size().cmp(&ca.size()).then_with(|| ca.nouns[0].cmp(&cb.nouns[0]))
    });
    let selected = match strategy {
        SelectionStrategy::Largest => ranked.into_iter().take(1).map(|c| (c, 1.0)).collect(),
        SelectionStrategy::Top3 => {
            let n = ranked.len().min(3);
            ranked.into_iter().take(n).map(|c| (c, 1.0 / n as f64)).collect()
        }
        SelectionStrategy::SizeWeighted => {
            let total: usize = set.clusters.iter().map(NounCluster::size).sum();
            ranked
                .into_iter()
                .map(|c| (c, set.clusters[c].size() as f64 / total as f64))
                .collect()
        }
    };
    ClusterSelection { selected, strategy }
}
