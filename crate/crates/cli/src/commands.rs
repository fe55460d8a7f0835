use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use egosent::concepts::PhotoStream;
use egosent::eval::{self, Evaluation};
use egosent::io;
use egosent::pipeline::{analyze_events, ScoreReport};
use egosent::segmenter::{self, filter_min_length, segment, Event};
use egosent::{synth, AnpLexicon, EgoOntology, Error, NounSimilarity, Polarity};
use log::{info, warn};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| {
        CliError::Config(format!(
            "no {what} path given (use --{what}, --data or [paths] in --config)"
        ))
    })
}

fn out_path(cfg: &RunConfig, default: &str) -> PathBuf {
    cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

struct Inputs {
    lexicon: AnpLexicon,
    stream: PhotoStream,
    hashes: BTreeMap<String, String>,
}

fn load_stream(cfg: &RunConfig) -> Result<Inputs, CliError> {
    let lex_path = required(&cfg.paths.lexicon, "lexicon")?;
    let scores_path = required(&cfg.paths.scores, "scores")?;
    let lexicon = AnpLexicon::load(lex_path).map_err(Error::from)?;
    let stream = if scores_path.extension().is_some_and(|e| e == "csv") {
        PhotoStream::parse_dense_csv(&io::read_to_string(scores_path)?, &lexicon)
    } else {
        PhotoStream::load(scores_path, &lexicon)
    }
    .map_err(Error::from)?;
    let mut hashes = BTreeMap::new();
    hashes.insert("lexicon".to_string(), io::file_sha256(lex_path)?);
    hashes.insert("scores".to_string(), io::file_sha256(scores_path)?);
    Ok(Inputs {
        lexicon,
        stream,
        hashes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentOutcome {
    pub path: PathBuf,
    /// Events written to the boundaries file.
    pub n_events: usize,
    /// Events that reach the minimum length.
    pub n_analysable: usize,
    pub warnings: Vec<String>,
}

/// Segments the photostream and writes a boundaries CSV.
///
/// The written events tile the stream so the file reloads cleanly; when no
/// event reaches `min_images` the file holds only the header.
pub fn cmd_segment(cfg: &RunConfig) -> Result<SegmentOutcome, CliError> {
    let inputs = load_stream(cfg)?;
    let events = segment(&inputs.stream, &cfg.segmentation);
    let n_analysable = events.iter().filter(|e| e.len() >= cfg.segmentation.min_images).count();
    let mut warnings = Vec::new();
    let written: &[Event] = if n_analysable == 0 {
        let w = format!(
            "no event reaches {} images ({} images in stream); writing empty boundaries",
            cfg.segmentation.min_images,
            inputs.stream.len()
        );
        warn!("{w}");
        warnings.push(w);
        &[]
    } else {
        &events
    };
    let path = out_path(cfg, "boundaries.csv");
    segmenter::save_event_boundaries(&path, written)?;
    info!("wrote {} events to {}", written.len(), path.display());
    Ok(SegmentOutcome {
        path,
        n_events: written.len(),
        n_analysable,
        warnings,
    })
}

struct Corpus {
    lexicon: AnpLexicon,
    ontology: EgoOntology,
    similarity: NounSimilarity,
    events: Vec<Event>,
    hashes: BTreeMap<String, String>,
}

fn load_corpus(cfg: &RunConfig, need_boundaries: bool) -> Result<Corpus, CliError> {
    let Inputs {
        lexicon,
        stream,
        mut hashes,
    } = load_stream(cfg)?;
    let onto_path = required(&cfg.paths.ontology, "ontology")?;
    let sim_path = required(&cfg.paths.similarity, "similarity")?;
    let ontology = EgoOntology::load(onto_path, &lexicon).map_err(Error::from)?;
    let similarity = NounSimilarity::load(sim_path).map_err(Error::from)?;
    hashes.insert("ontology".into(), io::file_sha256(onto_path)?);
    hashes.insert("similarity".into(), io::file_sha256(sim_path)?);
    if !ontology.uncovered_nouns().is_empty() {
        info!(
            "{} lexicon nouns are not in the ontology and score as neutral",
            ontology.uncovered_nouns().len()
        );
    }
    let events = match (&cfg.paths.boundaries, need_boundaries) {
        (Some(path), _) => {
            hashes.insert("boundaries".into(), io::file_sha256(path)?);
            segmenter::load_event_boundaries(path, &stream).map_err(Error::from)?
        }
        (None, true) => return Err(CliError::Config("evaluation needs a labelled boundaries file".into())),
        (None, false) => segment(&stream, &cfg.segmentation),
    };
    Ok(Corpus {
        lexicon,
        ontology,
        similarity,
        events: filter_min_length(events, cfg.segmentation.min_images),
        hashes,
    })
}

/// Scores every analysable event and writes the JSON-lines report.
pub fn cmd_score(cfg: &RunConfig) -> Result<ScoreReport, CliError> {
    let corpus = load_corpus(cfg, false)?;
    let analyzed = analyze_events(&corpus.events, &corpus.lexicon, &corpus.similarity, &cfg.pipeline);
    let mut report = ScoreReport::build(
        &analyzed,
        cfg.strategy,
        &cfg.fusion,
        &cfg.pipeline,
        &corpus.lexicon,
        &corpus.ontology,
    );
    report.summary.inputs = corpus.hashes;
    let path = out_path(cfg, "score_report.jsonl");
    report.save(&path)?;
    info!(
        "scored {} events ({} unscorable) into {}",
        report.records.len(),
        report.summary.unscorable,
        path.display()
    );
    Ok(report)
}

/// The evaluation document written by `evaluate`.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub evaluation: Evaluation,
    pub n_events: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
}

/// Runs stratified cross-validation over the configured grid and writes the report.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluationReport, CliError> {
    let corpus = load_corpus(cfg, true)?;
    let mut labelled = Vec::with_capacity(corpus.events.len());
    let mut class_counts: BTreeMap<String, usize> = Polarity::ALL.iter().map(|p| (p.to_string(), 0)).collect();
    for e in &corpus.events {
        let label = e
            .gt_label
            .ok_or(eval::EvalError::Unlabelled(e.event_id))
            .map_err(Error::from)?;
        *class_counts.entry(label.to_string()).or_default() += 1;
        labelled.push((e.event_id, label));
    }
    let split = eval::kfold_split(&labelled, cfg.folds, cfg.seed).map_err(Error::from)?;
    let analyzed = analyze_events(&corpus.events, &corpus.lexicon, &corpus.similarity, &cfg.pipeline);
    let evaluation = eval::run_protocol(
        &analyzed,
        &cfg.grid,
        &cfg.fusion,
        &split,
        &corpus.lexicon,
        &corpus.ontology,
    )
    .map_err(Error::from)?;
    let report = EvaluationReport {
        evaluation,
        n_events: labelled.len(),
        class_counts,
        config: cfg.clone(),
        inputs: corpus.hashes,
    };
    let path = out_path(cfg, "evaluation.json");
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    io::write_atomic(&path, json.as_bytes())?;
    let best = &report.evaluation.best;
    info!(
        "best: alpha={} beta={} strategy={} train acc {:.3}; test acc {:.3} +- {:.3}",
        best.alpha,
        best.beta,
        best.strategy,
        best.mean_accuracy,
        report.evaluation.best_test.point.mean_accuracy,
        report.evaluation.best_test.point.std_accuracy
    );
    Ok(report)
}

/// Generates a synthetic corpus into the output directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let config = cfg.synth.to_config(cfg.seed);
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let dataset = synth::generate(&config).map_err(Error::from)?;
    let dir = out_path(cfg, "synth_data");
    dataset.write_dir(&dir).map_err(Error::from)?;
    info!(
        "wrote {} events / {} images to {}",
        dataset.events.len(),
        dataset.stream.len(),
        dir.display()
    );
    Ok(dir)
}
