//! Run configuration: a TOML document merged with command-line overrides.
//!
//! Precedence is flags, then the config file, then built-in defaults. Relative
//! paths inside a config file resolve against the file's directory.

use std::path::{Path, PathBuf};

use egosent::eval::Grid;
use egosent::synth::{AnpSentimentMode, SynthConfig};
use egosent::{Aggregation, FusionParams, PipelineParams, Scope, SegmentationParams, SelectionStrategy};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub lexicon: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub similarity: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Paths {
    /// Fills every input path with the standard file names inside `dir`.
    pub fn from_data_dir(dir: &Path) -> Self {
        use egosent::synth::*;
        Self {
            lexicon: Some(dir.join(LEXICON_FILE)),
            ontology: Some(dir.join(ONTOLOGY_FILE)),
            similarity: Some(dir.join(SIMILARITY_FILE)),
            scores: Some(dir.join(SCORES_FILE)),
            boundaries: Some(dir.join(BOUNDARIES_FILE)),
            out: None,
        }
    }

    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.lexicon,
            &mut self.ontology,
            &mut self.similarity,
            &mut self.scores,
            &mut self.boundaries,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Synthetic-corpus settings; the seed comes from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_events: usize,
    pub images_min: usize,
    pub images_max: usize,
    pub vocab_size: usize,
    pub k_signal: usize,
    pub label_noise: f64,
    pub proportions: (f64, f64, f64),
    pub clusters_per_polarity: usize,
    pub nouns_per_cluster: usize,
    pub anp_sentiment: AnpSentimentMode,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            n_events: d.n_events,
            images_min: d.images_per_event.0,
            images_max: d.images_per_event.1,
            vocab_size: d.vocab_size,
            k_signal: d.k_signal,
            label_noise: d.label_noise,
            proportions: d.proportions,
            clusters_per_polarity: d.clusters_per_polarity,
            nouns_per_cluster: d.nouns_per_cluster,
            anp_sentiment: d.anp_sentiment,
        }
    }
}

impl SynthSection {
    pub fn to_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            n_events: self.n_events,
            images_per_event: (self.images_min, self.images_max),
            vocab_size: self.vocab_size,
            k_signal: self.k_signal,
            label_noise: self.label_noise,
            seed,
            proportions: self.proportions,
            clusters_per_polarity: self.clusters_per_polarity,
            nouns_per_cluster: self.nouns_per_cluster,
            anp_sentiment: self.anp_sentiment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub fusion: FusionParams,
    pub segmentation: SegmentationParams,
    pub pipeline: PipelineParams,
    /// Selection strategy used by `score`.
    pub strategy: SelectionStrategy,
    /// Axes searched by `evaluate`.
    pub grid: Grid,
    pub folds: usize,
    pub seed: u64,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            fusion: FusionParams::default(),
            segmentation: SegmentationParams::default(),
            pipeline: PipelineParams::default(),
            strategy: SelectionStrategy::Largest,
            grid: Grid::default(),
            folds: 5,
            seed: 7,
            synth: SynthSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.paths.rebase(base);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.fusion.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.segmentation
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.pipeline.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.pipeline.cluster_threshold) {
            return bad(format!(
                "cluster_threshold {} outside [0, 1]",
                self.pipeline.cluster_threshold
            ));
        }
        if self.folds == 0 {
            return bad("folds must be at least 1".into());
        }
        Ok(())
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (or directory for `synth`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory holding lexicon.tsv, ontology.csv, similarity.tsv, scores.jsonl, boundaries.csv.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    #[arg(long)]
    pub similarity: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub boundaries: Option<PathBuf>,
    /// Weight of the ANP term; beta defaults to 1 - alpha when not given.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the noun term; alpha defaults to 1 - beta when not given.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Half-width of the neutral band.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub min_event_images: Option<usize>,
    #[arg(long)]
    pub cluster_threshold: Option<f64>,
    #[arg(long)]
    pub boundary_threshold: Option<f64>,
    /// largest | top3 | weighted
    #[arg(long)]
    pub strategy: Option<SelectionStrategy>,
    /// cluster | pool
    #[arg(long)]
    pub scope: Option<Scope>,
    /// mean | sum
    #[arg(long)]
    pub aggregation: Option<Aggregation>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_events: Option<usize>,
    #[arg(long)]
    pub label_noise: Option<f64>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub images_min: Option<usize>,
    #[arg(long)]
    pub images_max: Option<usize>,
    /// consistent | randomized
    #[arg(long, value_parser = parse_anp_mode)]
    pub anp_sentiment: Option<AnpSentimentMode>,
}

fn parse_anp_mode(s: &str) -> Result<AnpSentimentMode, String> {
    match s {
        "consistent" => Ok(AnpSentimentMode::Consistent),
        "randomized" => Ok(AnpSentimentMode::Randomized),
        other => Err(format!("unknown mode `{other}` (expected consistent or randomized)")),
    }
}

impl Overrides {
    /// Loads the config file (if any) and applies the flags on top.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(dir) = &self.data {
            let out = cfg.paths.out.take();
            cfg.paths = Paths {
                out,
                ..Paths::from_data_dir(dir)
            };
        }
        let p = &mut cfg.paths;
        for (slot, flag) in [
            (&mut p.lexicon, &self.lexicon),
            (&mut p.ontology, &self.ontology),
            (&mut p.similarity, &self.similarity),
            (&mut p.scores, &self.scores),
            (&mut p.boundaries, &self.boundaries),
            (&mut p.out, &self.out),
        ] {
            if let Some(v) = flag {
                *slot = Some(v.clone());
            }
        }
        match (self.alpha, self.beta) {
            (Some(a), Some(b)) => (cfg.fusion.alpha, cfg.fusion.beta) = (a, b),
            (Some(a), None) => (cfg.fusion.alpha, cfg.fusion.beta) = (a, 1.0 - a),
            (None, Some(b)) => (cfg.fusion.alpha, cfg.fusion.beta) = (1.0 - b, b),
            (None, None) => {}
        }
        set(&mut cfg.fusion.tau, self.tau);
        set(&mut cfg.fusion.scope, self.scope);
        set(&mut cfg.fusion.aggregation, self.aggregation);
        set(&mut cfg.pipeline.top_k, self.top_k);
        set(&mut cfg.pipeline.cluster_threshold, self.cluster_threshold);
        set(&mut cfg.segmentation.min_images, self.min_event_images);
        set(&mut cfg.segmentation.boundary_threshold, self.boundary_threshold);
        if let Some(s) = self.strategy {
            cfg.strategy = s;
            cfg.grid.strategies = vec![s];
        }
        set(&mut cfg.folds, self.folds);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.synth.n_events, self.n_events);
        set(&mut cfg.synth.label_noise, self.label_noise);
        set(&mut cfg.synth.vocab_size, self.vocab_size);
        set(&mut cfg.synth.images_min, self.images_min);
        set(&mut cfg.synth.images_max, self.images_max);
        set(&mut cfg.synth.anp_sentiment, self.anp_sentiment);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
