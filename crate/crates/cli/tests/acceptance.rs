//! Acceptance criteria. Every test prints one `PASS`/`FAIL` line to stderr
//! (unbuffered, so it shows without `--nocapture`) and fails on `FAIL`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use egosent::concepts::{top_k, ConceptError, ImageRecord, PhotoStream, ScoredConcept};
use egosent::eval::{self, ConfusionMatrix, EvalError};
use egosent::lexicon::LexiconError;
use egosent::pipeline::{AnalyzedEvent, ScoreReport};
use egosent::segmenter::{boundaries_to_csv, parse_event_boundaries, segment, Event, SegmentError};
use egosent::sentiment::{event_score, ternary};
use egosent::simcluster::{cluster_nouns, select_clusters, SimilarityError};
use egosent::synth::{self, AnpSentimentMode, SynthConfig};
use egosent::{
    Aggregation, AnpLexicon, EgoOntology, FusionParams, NounSimilarity, PipelineParams, Polarity, Scope,
    SegmentationParams, SelectionStrategy,
};
use egosent_cli::{cmd_evaluate, Overrides};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_TOL: f64 = 1e-9;
const ORACLE_EVENTS: usize = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(5);
const ALPHAS: [f64; 5] = [0.0, 0.2, 0.5, 0.8, 1.0];
const EVAL_BUDGET: Duration = Duration::from_secs(10);
const NOISE: f64 = 0.2;
const NOISY_BAND: (f64, f64) = (0.75, 0.85);
const METRIC_TOL: f64 = 1e-12;
const LINEARITY_TOL: f64 = 1e-12;
const PERMUTATION_TOL: f64 = 1e-12;
const PROPTEST_CASES: u32 = 256;

type Outcome = Result<String, String>;
/// Confusion counts with optional hand-computed `(accuracy, macro F1)`.
type MetricCase = ([[u64; 3]; 3], Option<(f64, f64)>);

fn check(id: u32, name: &str, run: impl FnOnce() -> Outcome) {
    let outcome = run();
    let line = match &outcome {
        Ok(detail) => format!("PASS [{id}] {name}: {detail}\n"),
        Err(detail) => format!("FAIL [{id}] {name}: {detail}\n"),
    };
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    if let Err(detail) = outcome {
        panic!("criterion {id} failed: {detail}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Brute-force reference scorer. Works from plain tables and shares no code
// with the library beyond the input data.

struct World {
    /// `(adjective, noun, sentiment)` by ANP id.
    anps: Vec<(String, String, f64)>,
    /// Noun polarity; absent nouns count as 0.
    polarity: HashMap<String, f64>,
    /// Unordered noun pairs keyed `(min, max)`.
    sim: HashMap<(String, String), f64>,
}

impl World {
    fn from_files(dir: &Path) -> World {
        let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap();
        let anps = read(synth::LEXICON_FILE)
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split('\t').collect();
                (f[0].to_string(), f[1].to_string(), f[2].parse().unwrap())
            })
            .collect();
        let polarity = read(synth::ONTOLOGY_FILE)
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[2].to_string(), f[1].parse().unwrap())
            })
            .collect();
        let mut world = World {
            anps,
            polarity,
            sim: HashMap::new(),
        };
        for l in read(synth::SIMILARITY_FILE).lines().skip(1) {
            let f: Vec<&str> = l.split('\t').collect();
            world.set_sim(f[0], f[1], f[2].parse().unwrap());
        }
        world
    }

    fn set_sim(&mut self, a: &str, b: &str, v: f64) {
        let key = if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        self.sim.insert(key, v);
    }

    fn sim(&self, a: &str, b: &str) -> f64 {
        let key = if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        self.sim.get(&key).copied().unwrap_or(f64::NEG_INFINITY)
    }

    fn lexicon(&self) -> AnpLexicon {
        AnpLexicon::from_triples(self.anps.iter().map(|(a, n, s)| (a.clone(), n.clone(), *s))).unwrap()
    }

    fn ontology(&self, lexicon: &AnpLexicon) -> EgoOntology {
        let rows: Vec<(u32, Polarity, String)> = self
            .polarity
            .iter()
            .map(|(noun, &p)| {
                let pol = Polarity::from_value(p as i8).unwrap();
                (pol.index() as u32 + 1, pol, noun.clone())
            })
            .collect();
        EgoOntology::from_rows(rows, lexicon).unwrap()
    }

    fn similarity(&self) -> NounSimilarity {
        let mut pairs: Vec<(String, String, f64)> =
            self.sim.iter().map(|((a, b), &v)| (a.clone(), b.clone(), v)).collect();
        pairs.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
        NounSimilarity::from_pairs(pairs).unwrap()
    }
}

/// Noun partition by repeated closest-pair merging, recomputing the linkage from scratch.
fn oracle_clusters(world: &World, nouns: &BTreeSet<String>, threshold: f64) -> Vec<Vec<String>> {
    let mut clusters: Vec<Vec<String>> = nouns.iter().map(|n| vec![n.clone()]).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let mut link = f64::INFINITY;
                for a in &clusters[i] {
                    for b in &clusters[j] {
                        link = link.min(world.sim(a, b));
                    }
                }
                if best.is_none_or(|(_, _, v)| link > v) {
                    best = Some((i, j, link));
                }
            }
        }
        match best {
            Some((i, j, v)) if v > threshold => {
                let moved = clusters.remove(j);
                clusters[i].extend(moved);
                clusters[i].sort();
            }
            _ => break,
        }
    }
    clusters
}

#[derive(Clone, Copy)]
struct OracleParams {
    k: usize,
    threshold: f64,
    strategy: SelectionStrategy,
    alpha: f64,
    scope: Scope,
    aggregation: Aggregation,
}

/// Event value, or `None` when nothing is in scope.
fn oracle_score(world: &World, images: &[Vec<(u32, f64)>], p: OracleParams) -> Option<f64> {
    let mut pool: Vec<(u32, f64)> = Vec::new();
    for img in images {
        let mut ranked: Vec<(u32, f64)> = img.iter().copied().filter(|&(_, v)| v > 0.0).collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        ranked.truncate(p.k);
        pool.extend(ranked);
    }
    if pool.is_empty() {
        return None;
    }
    let noun = |id: u32| world.anps[id as usize].1.clone();
    let weights: Vec<f64> = match p.scope {
        Scope::WholePool => vec![1.0; pool.len()],
        Scope::SelectedClusters => {
            let nouns: BTreeSet<String> = pool.iter().map(|c| noun(c.0)).collect();
            let clusters = oracle_clusters(world, &nouns, p.threshold);
            let size = |c: &Vec<String>| pool.iter().filter(|x| c.contains(&noun(x.0))).count();
            let mut order: Vec<usize> = (0..clusters.len()).collect();
            order.sort_by(|&a, &b| {
                size(&clusters[b])
                    .cmp(&size(&clusters[a]))
                    .then(clusters[a][0].cmp(&clusters[b][0]))
            });
            let mut cluster_weight = vec![0.0; clusters.len()];
            match p.strategy {
                SelectionStrategy::Largest => cluster_weight[order[0]] = 1.0,
                SelectionStrategy::Top3 => {
                    let n = order.len().min(3);
                    for &c in &order[..n] {
                        cluster_weight[c] = 1.0 / n as f64;
                    }
                }
                SelectionStrategy::SizeWeighted => {
                    for c in 0..clusters.len() {
                        cluster_weight[c] = size(&clusters[c]) as f64 / pool.len() as f64;
                    }
                }
            }
            pool.iter()
                .map(|x| {
                    let n = noun(x.0);
                    let c = clusters.iter().position(|c| c.contains(&n)).unwrap();
                    cluster_weight[c]
                })
                .collect()
        }
    };
    let beta = 1.0 - p.alpha;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, w) in pool.iter().zip(&weights) {
        if *w == 0.0 {
            continue;
        }
        let (_, n, s) = &world.anps[x.0 as usize];
        let pol = world.polarity.get(n).copied().unwrap_or(0.0);
        num += w * (p.alpha * s * x.1 + beta * pol);
        den += w;
    }
    Some(match p.aggregation {
        Aggregation::Sum => num,
        Aggregation::Mean => num / den,
    })
}

fn random_world(rng: &mut ChaCha8Rng) -> World {
    let n_nouns = rng.gen_range(3..=8);
    let nouns: Vec<String> = (0..n_nouns).map(|i| format!("noun{i}")).collect();
    let mut anps = Vec::new();
    for adj in ["red", "old", "sad"] {
        for n in &nouns {
            let s = (rng.gen_range(-200..=200) as f64) / 100.0;
            anps.push((adj.to_string(), n.clone(), s));
        }
    }
    // The last noun stays outside the ontology and scores as neutral.
    let polarity = nouns[..n_nouns - 1]
        .iter()
        .map(|n| (n.clone(), rng.gen_range(-1..=1) as f64))
        .collect();
    let mut world = World {
        anps,
        polarity,
        sim: HashMap::new(),
    };
    let levels = [0.3, 0.5, 0.6, 0.65, 0.7, 0.8, 0.9];
    for i in 0..n_nouns {
        for j in i + 1..n_nouns {
            if rng.gen_bool(0.7) {
                let v = levels[rng.gen_range(0..levels.len())];
                world.set_sim(&nouns[i], &nouns[j], v);
            }
        }
    }
    world
}

fn random_images(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<Vec<(u32, f64)>> {
    (0..rng.gen_range(1..=4))
        .map(|_| {
            let mut ids: Vec<u32> = (0..vocab as u32).collect();
            ids.shuffle(rng);
            ids.truncate(rng.gen_range(0..=3));
            ids.into_iter()
                .map(|id| (id, rng.gen_range(1..=100) as f64 / 100.0))
                .collect()
        })
        .collect()
}

fn to_event(images: &[Vec<(u32, f64)>], vocab: usize) -> Event {
    let records = images
        .iter()
        .enumerate()
        .map(|(i, s)| ImageRecord::new(format!("img{i}"), i as i64, s.iter().copied(), vocab).unwrap())
        .collect();
    Event::new(0, records, None)
}

#[test]
fn c1_oracle_equivalence() {
    check(1, "event_score matches brute-force reference", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(20170713);
        let mut compared = 0usize;
        let mut worst = 0.0f64;
        for batch in 0..ORACLE_EVENTS / 100 {
            let world = random_world(&mut rng);
            let lexicon = world.lexicon();
            let ontology = world.ontology(&lexicon);
            let sim = world.similarity();
            for e in 0..100 {
                let images = random_images(&mut rng, world.anps.len());
                let event = to_event(&images, world.anps.len());
                let k = [1, 2, 3, 5][rng.gen_range(0..4)];
                let pipeline = PipelineParams {
                    top_k: k,
                    cluster_threshold: 0.6,
                };
                let analyzed = AnalyzedEvent::new(&event, &lexicon, &sim, &pipeline);
                for alpha in ALPHAS {
                    for scope in [Scope::SelectedClusters, Scope::WholePool] {
                        for aggregation in [Aggregation::Mean, Aggregation::Sum] {
                            for strategy in SelectionStrategy::ALL {
                                let fusion = FusionParams {
                                    alpha,
                                    beta: 1.0 - alpha,
                                    tau: 0.25,
                                    aggregation,
                                    scope,
                                };
                                let got = analyzed.score(strategy, &fusion, &lexicon, &ontology).ok();
                                let p = OracleParams {
                                    k,
                                    threshold: 0.6,
                                    strategy,
                                    alpha,
                                    scope,
                                    aggregation,
                                };
                                let want = oracle_score(&world, &images, p);
                                match (got, want) {
                                    (None, None) => {}
                                    (Some((score, _)), Some(v)) => {
                                        let diff = (score.value - v).abs();
                                        worst = worst.max(diff);
                                        if diff > ORACLE_TOL {
                                            return Err(format!(
                                                "batch {batch} event {e} alpha {alpha} {scope:?} {aggregation:?} {strategy}: {} vs {v}",
                                                score.value
                                            ));
                                        }
                                        if (v.abs() - 0.25).abs() > ORACLE_TOL && score.label != ternary(v, 0.25) {
                                            return Err(format!("batch {batch} event {e}: label mismatch"));
                                        }
                                    }
                                    (got, want) => {
                                        return Err(format!(
                                            "batch {batch} event {e}: scorable mismatch (library {}, reference {})",
                                            got.is_some(),
                                            want.is_some()
                                        ))
                                    }
                                }
                                compared += 1;
                            }
                        }
                    }
                }
            }
        }
        let elapsed = start.elapsed();
        ensure(elapsed < ORACLE_BUDGET, || format!("took {elapsed:?}"))?;
        Ok(format!(
            "{ORACLE_EVENTS} events, {compared} settings, max |diff| {worst:.1e} <= {ORACLE_TOL:.0e}, {:.2}s",
            elapsed.as_secs_f64()
        ))
    });
}

// ---------------------------------------------------------------------------

fn evaluate_corpus(
    dir: &Path,
    config: &SynthConfig,
) -> (
    synth::SynthDataset,
    egosent_cli::commands::EvaluationReport,
    Vec<u8>,
    Duration,
) {
    let data = synth::generate(config).unwrap();
    data.write_dir(dir).unwrap();
    let out = dir.join("evaluation.json");
    let cfg = Overrides {
        data: Some(dir.into()),
        out: Some(out.clone()),
        ..Default::default()
    }
    .resolve()
    .unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let report = pool.install(|| cmd_evaluate(&cfg)).unwrap();
    let elapsed = start.elapsed();
    (data, report, std::fs::read(out).unwrap(), elapsed)
}

#[test]
fn c2_planted_signal_recovery() {
    check(2, "planted-signal recovery", || {
        let dir = tempfile::tempdir().unwrap();
        let clean_dir = dir.path().join("clean");
        let (data, report, _, clean_time) = evaluate_corpus(&clean_dir, &SynthConfig::default());
        let counts = synth::SynthConfig::default().class_counts();
        ensure(counts == [36, 43, 19] && data.events.len() == 98, || {
            format!("class counts {counts:?}")
        })?;
        let n_images = data.stream.len();
        for row in &report.evaluation.rows {
            let t = &row.test.point;
            ensure(
                (t.mean_accuracy - 1.0).abs() < METRIC_TOL && (t.mean_f1 - 1.0).abs() < METRIC_TOL,
                || {
                    format!(
                        "noise-free {} beta {}: acc {} f1 {}",
                        t.strategy, t.beta, t.mean_accuracy, t.mean_f1
                    )
                },
            )?;
        }
        ensure(clean_time < EVAL_BUDGET, || {
            format!("noise-free run took {clean_time:?}")
        })?;

        let noisy_dir = dir.path().join("noisy");
        let noisy = SynthConfig {
            label_noise: NOISE,
            ..SynthConfig::default()
        };
        let (data, report, _, noisy_time) = evaluate_corpus(&noisy_dir, &noisy);
        let acc = report.evaluation.best_test.point.mean_accuracy;
        let best = report.evaluation.best;

        // Pooled accuracy of the reference scorer at the selected point.
        let world = World::from_files(&noisy_dir);
        let p = OracleParams {
            k: report.config.pipeline.top_k,
            threshold: report.config.pipeline.cluster_threshold,
            strategy: best.strategy,
            alpha: best.alpha,
            scope: report.config.fusion.scope,
            aggregation: report.config.fusion.aggregation,
        };
        let correct = data
            .events
            .iter()
            .filter(|e| {
                let images: Vec<Vec<(u32, f64)>> = e.images.iter().map(|i| i.scores().to_vec()).collect();
                let v = oracle_score(&world, &images, p).unwrap();
                Some(ternary(v, best.tau)) == e.gt_label
            })
            .count();
        let oracle_acc = correct as f64 / data.events.len() as f64;
        let in_band = |x: f64| (NOISY_BAND.0..=NOISY_BAND.1).contains(&x);
        ensure(in_band(oracle_acc), || {
            format!("reference accuracy {oracle_acc:.3} outside band")
        })?;
        ensure(in_band(acc), || {
            format!("20% noise test accuracy {acc:.3} outside {NOISY_BAND:?}")
        })?;
        ensure(noisy_time < EVAL_BUDGET, || format!("noisy run took {noisy_time:?}"))?;
        Ok(format!(
            "noise-free: 9/9 grid points acc=1 F1=1 ({n_images} images, {:.2}s, 1 thread); \
             20% noise: test acc {acc:.3} (reference {oracle_acc:.3}) in [{}, {}]",
            clean_time.as_secs_f64(),
            NOISY_BAND.0,
            NOISY_BAND.1
        ))
    });
}

#[test]
fn c3_noun_term_dominates_with_random_anp_sentiment() {
    check(3, "best beta is 0.8 when only nouns carry signal", || {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            anp_sentiment: AnpSentimentMode::Randomized,
            ..SynthConfig::default()
        };
        let (_, first, bytes_a, _) = evaluate_corpus(&dir.path().join("a"), &config);
        let (_, _, bytes_b, _) = evaluate_corpus(&dir.path().join("a"), &config);
        ensure(bytes_a == bytes_b, || "evaluation report differs between runs".into())?;
        let best = first.evaluation.best;
        let mut by_beta: BTreeMap<String, f64> = BTreeMap::new();
        for row in &first.evaluation.rows {
            let p = &row.training.point;
            let e = by_beta.entry(format!("{}", p.beta)).or_insert(0.0);
            *e = e.max(p.mean_accuracy);
        }
        ensure((best.beta - 0.8).abs() < 1e-12, || {
            format!("best beta {} ({by_beta:?})", best.beta)
        })?;
        Ok(format!(
            "best beta {} strategy {}; best training accuracy per beta {by_beta:?}; byte-identical rerun",
            best.beta, best.strategy
        ))
    });
}

// ---------------------------------------------------------------------------

/// Reference metrics from an expanded label list.
fn oracle_metrics(counts: [[u64; 3]; 3]) -> (f64, f64) {
    let mut pairs = Vec::new();
    for (t, row) in counts.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            pairs.extend(std::iter::repeat_n((t, p), n as usize));
        }
    }
    let acc = pairs.iter().filter(|(t, p)| t == p).count() as f64 / pairs.len() as f64;
    let mut f1 = 0.0;
    for c in 0..3 {
        let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|&&(t, p)| t != c && p == c).count() as f64;
        let fn_ = pairs.iter().filter(|&&(t, p)| t == c && p != c).count() as f64;
        if tp > 0.0 {
            f1 += 2.0 * tp / (2.0 * tp + fp + fn_);
        }
    }
    (acc, f1 / 3.0)
}

#[test]
fn c4_metric_correctness() {
    check(4, "accuracy and macro F1 on fixed confusion matrices", || {
        // Rows are truth, columns prediction, both in (negative, neutral, positive) order.
        // The second field holds hand-computed (accuracy, F1) where given.
        let cases: [MetricCase; 20] = [
            ([[1, 0, 1], [0, 0, 0], [1, 0, 1]], Some((0.5, 1.0 / 3.0))),
            ([[0, 0, 1], [0, 0, 0], [1, 0, 1]], Some((1.0 / 3.0, 0.5 / 3.0))),
            ([[5, 0, 0], [0, 5, 0], [0, 0, 5]], Some((1.0, 1.0))),
            ([[0, 5, 0], [0, 0, 5], [5, 0, 0]], Some((0.0, 0.0))),
            ([[4, 0, 0], [0, 0, 0], [0, 0, 0]], Some((1.0, 1.0 / 3.0))),
            ([[0, 0, 0], [0, 0, 0], [0, 0, 7]], Some((1.0, 1.0 / 3.0))),
            ([[0, 0, 0], [3, 0, 0], [0, 0, 0]], Some((0.0, 0.0))),
            ([[2, 1, 0], [0, 0, 0], [0, 0, 0]], Some((2.0 / 3.0, 0.8 / 3.0))),
            ([[1, 1, 1], [1, 1, 1], [1, 1, 1]], Some((1.0 / 3.0, 1.0 / 3.0))),
            ([[3, 1, 0], [1, 2, 1], [0, 1, 3]], None),
            ([[43, 0, 0], [0, 19, 0], [0, 0, 36]], None),
            ([[30, 10, 3], [5, 10, 4], [2, 8, 26]], None),
            ([[0, 43, 0], [0, 19, 0], [0, 36, 0]], None),
            ([[10, 0, 0], [0, 0, 0], [10, 0, 0]], None),
            ([[1, 0, 0], [0, 0, 0], [0, 0, 0]], None),
            ([[0, 1, 0], [0, 0, 0], [0, 0, 0]], None),
            ([[7, 2, 1], [3, 0, 0], [0, 1, 9]], None),
            ([[0, 0, 0], [2, 2, 2], [0, 0, 0]], None),
            ([[9, 0, 0], [0, 0, 1], [0, 0, 0]], None),
            ([[2, 3, 5], [7, 11, 13], [17, 19, 23]], None),
        ];
        for (i, (counts, hand)) in cases.iter().enumerate() {
            let cm = ConfusionMatrix { counts: *counts };
            let acc = eval::accuracy(&cm).map_err(|e| e.to_string())?;
            let f1 = eval::f1(&cm).map_err(|e| e.to_string())?;
            ensure(acc.is_finite() && f1.is_finite(), || format!("matrix {i}: NaN"))?;
            let (oa, of) = oracle_metrics(*counts);
            ensure((acc - oa).abs() < METRIC_TOL && (f1 - of).abs() < METRIC_TOL, || {
                format!("matrix {i}: ({acc}, {f1}) vs reference ({oa}, {of})")
            })?;
            if let Some((ha, hf)) = hand {
                ensure((acc - ha).abs() < METRIC_TOL && (f1 - hf).abs() < METRIC_TOL, || {
                    format!("matrix {i}: ({acc}, {f1}) vs hand ({ha}, {hf})")
                })?;
            }
        }
        let tie = ConfusionMatrix {
            counts: [[0, 0, 1], [0, 0, 0], [1, 0, 1]],
        };
        ensure((tie.class_f1(Polarity::Positive) - 0.5).abs() < METRIC_TOL, || {
            "TP=FP=FN=1 F1 != 0.5".into()
        })?;
        ensure(tie.class_f1(Polarity::Neutral) == 0.0, || "zero-support F1 != 0".into())?;
        let empty = ConfusionMatrix::default();
        ensure(
            matches!(eval::accuracy(&empty), Err(EvalError::EmptyMatrix))
                && matches!(eval::f1(&empty), Err(EvalError::EmptyMatrix)),
            || "empty matrix not rejected".into(),
        )?;
        Ok(format!(
            "20 matrices within {METRIC_TOL:.0e}; TP=FP=FN=1 -> 0.5; zero support -> 0; empty -> EmptyMatrix"
        ))
    });
}

// ---------------------------------------------------------------------------

fn run_prop<S: Strategy>(
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config {
        cases: PROPTEST_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn pool_of(world_seed: u64) -> (World, AnpLexicon, EgoOntology, NounSimilarity, Vec<ScoredConcept>) {
    let mut rng = ChaCha8Rng::seed_from_u64(world_seed);
    let world = random_world(&mut rng);
    let lexicon = world.lexicon();
    let ontology = world.ontology(&lexicon);
    let sim = world.similarity();
    let n = rng.gen_range(1..=12);
    let pool = (0..n)
        .map(|i| ScoredConcept {
            anp_id: rng.gen_range(0..world.anps.len() as u32),
            probability: rng.gen_range(1..=100) as f64 / 100.0,
            source_image: format!("img{}", i / 3),
        })
        .collect();
    (world, lexicon, ontology, sim, pool)
}

fn score_pool(
    pool: &[ScoredConcept],
    lexicon: &AnpLexicon,
    ontology: &EgoOntology,
    sim: &NounSimilarity,
    strategy: SelectionStrategy,
    params: &FusionParams,
) -> f64 {
    let clusters = cluster_nouns(pool, lexicon, sim, 0.6);
    let selection = select_clusters(&clusters, strategy);
    event_score(pool, &clusters, &selection, lexicon, ontology, params)
        .unwrap()
        .value
}

fn partition(set: &egosent::NounClusterSet) -> Vec<Vec<String>> {
    let mut p: Vec<Vec<String>> = set.clusters.iter().map(|c| c.nouns.clone()).collect();
    p.sort();
    p
}

fn any_fusion() -> impl Strategy<Value = FusionParams> {
    (
        0.0..=1.0f64,
        prop_oneof![Just(Scope::SelectedClusters), Just(Scope::WholePool)],
        prop_oneof![Just(Aggregation::Mean), Just(Aggregation::Sum)],
    )
        .prop_map(|(alpha, scope, aggregation)| FusionParams {
            alpha,
            beta: 1.0 - alpha,
            tau: 0.25,
            aggregation,
            scope,
        })
}

fn any_strategy() -> impl Strategy<Value = SelectionStrategy> {
    prop_oneof![
        Just(SelectionStrategy::Largest),
        Just(SelectionStrategy::Top3),
        Just(SelectionStrategy::SizeWeighted)
    ]
}

#[test]
fn c5_invariant_suite() {
    check(5, "invariant suite", || {
        run_prop(
            "permutation invariance",
            (any::<u64>(), any::<u64>(), any_fusion(), any_strategy()),
            |(world_seed, shuffle_seed, params, strategy)| {
                let (_, lexicon, ontology, sim, pool) = pool_of(world_seed);
                let mut shuffled = pool.clone();
                shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
                let a = score_pool(&pool, &lexicon, &ontology, &sim, strategy, &params);
                let b = score_pool(&shuffled, &lexicon, &ontology, &sim, strategy, &params);
                prop_assert!((a - b).abs() <= PERMUTATION_TOL, "{a} vs {b}");
                Ok(())
            },
        )?;

        run_prop(
            "top-k invariance under scaling",
            (
                prop::collection::btree_map(0u32..40, 1u32..=100, 0..12),
                1usize..8,
                1i32..=20,
            ),
            |(scores, k, exp)| {
                let image =
                    ImageRecord::new("i", 0, scores.iter().map(|(&id, &p)| (id, p as f64 / 100.0)), 40).unwrap();
                let scaled = image.scaled(2f64.powi(-exp));
                let ids = |img: &ImageRecord| top_k(img, k).iter().map(|c| c.anp_id).collect::<Vec<_>>();
                prop_assert_eq!(ids(&image), ids(&scaled));
                Ok(())
            },
        )?;

        run_prop(
            "alpha linearity",
            (any::<u64>(), 0.0..=1.0f64, 0.0..=1.0f64, any_fusion(), any_strategy()),
            |(world_seed, a1, a2, template, strategy)| {
                let (_, lexicon, ontology, sim, pool) = pool_of(world_seed);
                let at = |a: f64| {
                    score_pool(
                        &pool,
                        &lexicon,
                        &ontology,
                        &sim,
                        strategy,
                        &template.with_weights(a, 1.0 - a),
                    )
                };
                let mid = at((a1 + a2) / 2.0);
                let avg = (at(a1) + at(a2)) / 2.0;
                prop_assert!((mid - avg).abs() <= LINEARITY_TOL, "{mid} vs {avg}");
                Ok(())
            },
        )?;

        run_prop("ternary oddness", (-5.0..5.0f64, 0.0..2.0f64), |(v, tau)| {
            prop_assert_eq!(ternary(-v, tau), ternary(v, tau).negate());
            Ok(())
        })?;

        let labels: Vec<(u32, Polarity)> = (0..98)
            .map(|i| {
                let p = match i {
                    0..36 => Polarity::Positive,
                    36..79 => Polarity::Negative,
                    _ => Polarity::Neutral,
                };
                (i as u32, p)
            })
            .collect();
        run_prop("fold partition and stratification", any::<u64>(), |seed| {
            let split = eval::kfold_split(&labels, 5, seed).unwrap();
            let sizes: Vec<usize> = split.folds.iter().map(Vec::len).collect();
            prop_assert_eq!(sizes, vec![20, 20, 20, 19, 19]);
            let all: BTreeSet<u32> = split.folds.iter().flatten().copied().collect();
            prop_assert_eq!(all.len(), 98);
            let label: HashMap<u32, Polarity> = labels.iter().copied().collect();
            for class in Polarity::ALL {
                let per_fold: Vec<usize> = split
                    .folds
                    .iter()
                    .map(|f| f.iter().filter(|id| label[id] == class).count())
                    .collect();
                let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
                prop_assert!(hi - lo <= 1, "{class}: {per_fold:?}");
            }
            Ok(())
        })?;

        run_prop(
            "segmentation monotonicity",
            (
                prop::collection::vec(prop::collection::btree_map(0u32..6, 1u32..=100, 0..4), 1..40),
                0.0..1.0f64,
                0.0..1.0f64,
            ),
            |(images, t1, t2)| {
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let lexicon = AnpLexicon::from_triples((0..6).map(|i| ("a", format!("n{i}"), 0.0))).unwrap();
                let records = images
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        ImageRecord::new(
                            format!("i{i:03}"),
                            i as i64,
                            s.iter().map(|(&a, &p)| (a, p as f64 / 100.0)),
                            6,
                        )
                        .unwrap()
                    })
                    .collect();
                let stream = PhotoStream::new(records, &lexicon).unwrap();
                let starts = |t: f64| -> BTreeSet<String> {
                    let params = SegmentationParams {
                        boundary_threshold: t,
                        ..SegmentationParams::default()
                    };
                    segment(&stream, &params)
                        .iter()
                        .map(|e| e.images[0].image_id.clone())
                        .collect()
                };
                let (fine, coarse) = (starts(lo), starts(hi));
                prop_assert!(coarse.is_subset(&fine));
                Ok(())
            },
        )?;

        run_prop(
            "clustering determinism under ties",
            (any::<u64>(), any::<u64>()),
            |(world_seed, shuffle_seed)| {
                let (world, lexicon, _, sim, pool) = pool_of(world_seed);
                let mut shuffled = pool.clone();
                shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
                let a = cluster_nouns(&pool, &lexicon, &sim, 0.6);
                prop_assert_eq!(&a, &cluster_nouns(&pool, &lexicon, &sim, 0.6));
                prop_assert_eq!(partition(&a), partition(&cluster_nouns(&shuffled, &lexicon, &sim, 0.6)));
                let nouns: BTreeSet<String> = pool.iter().map(|c| world.anps[c.anp_id as usize].1.clone()).collect();
                let mut want = oracle_clusters(&world, &nouns, 0.6);
                want.sort();
                prop_assert_eq!(partition(&a), want);
                Ok(())
            },
        )?;

        Ok(format!(
            "7 properties x {PROPTEST_CASES} cases (permutation {PERMUTATION_TOL:.0e}, linearity {LINEARITY_TOL:.0e}, folds 20/20/20/19/19)"
        ))
    });
}

// ---------------------------------------------------------------------------

macro_rules! expect_err {
    ($result:expr, $pat:pat, $what:expr) => {
        match $result {
            Err($pat) => {}
            other => {
                return Err(format!(
                    "{}: expected {}, got {:?}",
                    $what,
                    stringify!($pat),
                    other.map(|_| ())
                ))
            }
        }
    };
}

#[test]
fn c6_format_round_trips() {
    check(6, "format round-trips and malformed-input rejection", || {
        let data = synth::generate(&SynthConfig {
            n_events: 12,
            images_per_event: (6, 9),
            vocab_size: 200,
            ..SynthConfig::default()
        })
        .unwrap();

        // Lexicon.
        let text = data.lexicon.to_tsv();
        let lex = AnpLexicon::parse_tsv(&text).map_err(|e| e.to_string())?;
        ensure(lex == data.lexicon && lex.to_tsv() == text, || {
            "lexicon round trip".into()
        })?;
        expect_err!(
            AnpLexicon::parse_tsv("a\tb\n"),
            LexiconError::MalformedRow { .. },
            "lexicon column count"
        );
        expect_err!(
            AnpLexicon::parse_tsv("a\tb\tx\n"),
            LexiconError::MalformedRow { .. },
            "lexicon sentiment"
        );
        expect_err!(
            AnpLexicon::parse_tsv("x\ty\t3.5\n"),
            LexiconError::SentimentOutOfRange { .. },
            "lexicon bound"
        );
        expect_err!(
            AnpLexicon::parse_tsv("a\tb\t1\na\tb\t2\n"),
            LexiconError::DuplicateAnp { .. },
            "lexicon duplicate"
        );
        expect_err!(AnpLexicon::parse_tsv(""), LexiconError::Empty, "lexicon empty");

        // Ontology.
        let text = data.ontology.to_csv();
        let onto = EgoOntology::parse_csv(&text, &lex).map_err(|e| e.to_string())?;
        ensure(onto == data.ontology && onto.to_csv() == text, || {
            "ontology round trip".into()
        })?;
        let small = AnpLexicon::from_triples([("lonely", "boat", -1.43), ("cute", "bird", 1.37)]).unwrap();
        expect_err!(
            EgoOntology::parse_csv("cluster_id,polarity,noun\n1,-1,boat\n2,1,boat\n", &small),
            LexiconError::DuplicateNoun { .. },
            "ontology duplicate noun"
        );
        expect_err!(
            EgoOntology::parse_csv("cluster_id,polarity,noun\n1,2,boat\n", &small),
            LexiconError::BadPolarity { .. },
            "ontology polarity"
        );
        expect_err!(
            EgoOntology::parse_csv("cluster_id,polarity,noun\n1,1,boat\n1,-1,bird\n", &small),
            LexiconError::ConflictingPolarity { .. },
            "ontology conflicting label"
        );
        expect_err!(
            EgoOntology::parse_csv("cluster_id,polarity,noun\n1,1\n", &small),
            LexiconError::MalformedRow { .. },
            "ontology column count"
        );

        // Similarity.
        let text = data.similarity.to_tsv();
        let sim = NounSimilarity::parse_tsv(&text).map_err(|e| e.to_string())?;
        ensure(sim == data.similarity && sim.to_tsv() == text, || {
            "similarity round trip".into()
        })?;
        let header = "noun_a\tnoun_b\tsimilarity\n";
        expect_err!(
            NounSimilarity::parse_tsv(&format!("{header}a\tb\t0.5\nb\ta\t0.6\n")),
            SimilarityError::AsymmetricInput { .. },
            "similarity asymmetric"
        );
        expect_err!(
            NounSimilarity::parse_tsv(&format!("{header}a\tb\t1.2\n")),
            SimilarityError::ValueOutOfRange { .. },
            "similarity range"
        );
        expect_err!(
            NounSimilarity::parse_tsv(&format!("{header}a\tb\n")),
            SimilarityError::Malformed { .. },
            "similarity column count"
        );

        // Concept scores.
        let text = data.stream.to_jsonl();
        let stream = PhotoStream::parse_jsonl(&text, &lex).map_err(|e| e.to_string())?;
        ensure(stream == data.stream && stream.to_jsonl() == text, || {
            "scores round trip".into()
        })?;
        let head = format!("{{\"lexicon_hash\":\"{}\",\"vocab_size\":200}}\n", lex.hash());
        expect_err!(
            PhotoStream::parse_jsonl(
                &format!("{head}{{\"image_id\":\"a\",\"timestamp\":0,\"scores\":[[200,0.5]]}}\n"),
                &lex
            ),
            ConceptError::UnknownAnpId { .. },
            "scores id bound"
        );
        expect_err!(
            PhotoStream::parse_jsonl(
                &format!("{head}{{\"image_id\":\"a\",\"timestamp\":0,\"scores\":[[3,1.5]]}}\n"),
                &lex
            ),
            ConceptError::ProbabilityOutOfRange { .. },
            "scores probability"
        );
        expect_err!(
            PhotoStream::parse_jsonl(
                &format!("{{\"lexicon_hash\":\"{}\",\"vocab_size\":200}}\n{{\"image_id\":\"a\",\"timestamp\":0,\"scores\":[]}}\n", "0".repeat(64)),
                &lex
            ),
            ConceptError::LexiconMismatch { .. },
            "scores lexicon hash"
        );
        expect_err!(
            PhotoStream::parse_jsonl(&format!("{head}{{\"image_id\":\"a\"\n"), &lex),
            ConceptError::Malformed { .. },
            "scores syntax"
        );

        // Event boundaries.
        let text = boundaries_to_csv(&data.events);
        let events = parse_event_boundaries(&text, &stream).map_err(|e| e.to_string())?;
        ensure(events == data.events && boundaries_to_csv(&events) == text, || {
            "boundaries round trip".into()
        })?;
        let twenty: Vec<ImageRecord> = (1..=20)
            .map(|i| ImageRecord::new(format!("im{i:02}"), i, [], 2).unwrap())
            .collect();
        let lex2 = AnpLexicon::from_triples([("a", "b", 0.0), ("c", "d", 0.0)]).unwrap();
        let stream20 = PhotoStream::new(twenty, &lex2).unwrap();
        let bhead = "event_id,start_image_id,end_image_id,label\n";
        expect_err!(
            parse_event_boundaries(&format!("{bhead}0,im01,im10,1\n"), &stream20),
            SegmentError::NonContiguous { .. },
            "boundaries gap"
        );
        expect_err!(
            parse_event_boundaries(&format!("{bhead}0,im01,im25,1\n"), &stream20),
            SegmentError::UnknownImageId { .. },
            "boundaries image id"
        );
        expect_err!(
            parse_event_boundaries(&format!("{bhead}0,im01,im20,5\n"), &stream20),
            SegmentError::BadLabel { .. },
            "boundaries label"
        );

        // Score report.
        let analyzed: Vec<AnalyzedEvent> = events
            .iter()
            .map(|e| AnalyzedEvent::new(e, &lex, &sim, &PipelineParams::default()))
            .collect();
        let report = ScoreReport::build(
            &analyzed,
            SelectionStrategy::Largest,
            &FusionParams::default(),
            &PipelineParams::default(),
            &lex,
            &onto,
        );
        let text = report.to_jsonl();
        let back = ScoreReport::parse_jsonl(&text).map_err(|e| e.to_string())?;
        ensure(back == report && back.to_jsonl() == text, || {
            "score report round trip".into()
        })?;
        ensure(ScoreReport::parse_jsonl("{\"event_id\":1}\n").is_err(), || {
            "truncated report accepted".into()
        })?;

        Ok("lexicon, ontology, similarity, scores, boundaries, score report: round trip exact; 20 malformed classes rejected".into())
    });
}
