use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use subtrace::classify::IntervalEnsemble;
use subtrace::evalharness::{
    bootstrap_trips, build_corpus, record_trip, run_semisupervised, run_supervised, seed_ids, seed_segments, train_supervised,
    Corpus, ExperimentReport, Protocol, SemisupReport,
};
use subtrace::extract::ModeModel;
use subtrace::infer::{SearchMode, TraceHypothesis};
use subtrace::model::{load_network, load_trace, read_json, save_network, save_trace, write_json, Trace};
use subtrace::pipeline::{attack, evaluate_extraction, gen_mixed_days, gen_non_metro, train_mode_model, AttackReport, ExtractionReport};
use subtrace::semisup::{BootstrapReport, RoundReport};
use subtrace::simgen::TrackProfile;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripEntry {
    pub file: String,
    pub run: TraceHypothesis,
    pub seed: u64,
}

/// Index of the files written by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub intervals: usize,
    pub trips: Vec<TripEntry>,
    pub days: Vec<String>,
    pub non_metro: Vec<String>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(subtrace::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn fresh_dir(path: &Path) -> CliResult<()> {
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| io_err(path, e))?;
    }
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn save_all(dir: &Path, names: &[String], traces: &[Trace]) -> CliResult<()> {
    names
        .par_iter()
        .zip(traces)
        .try_for_each(|(n, t)| save_trace(t, dir.join(n)))
        .map_err(CliError::from)
}

pub fn cmd_generate(cfg: &PipelineConfig) -> CliResult<Manifest> {
    let corpus = build_corpus(&cfg.benchmark)?;
    let g = &cfg.generate;
    let days = gen_mixed_days(&corpus.network, &corpus.profiles, g.days, &g.day_plan, &cfg.benchmark.noise, g.day_seed)?;
    let others = gen_non_metro(
        g.non_metro,
        g.non_metro_duration,
        corpus.network.sample_rate,
        &cfg.benchmark.noise,
        g.non_metro_seed,
    )?;
    let dir = cfg.paths.corpus_dir();
    ensure_dir(&dir)?;
    for sub in ["trips", "days", "non_metro"] {
        fresh_dir(&dir.join(sub))?;
    }
    let manifest = Manifest {
        intervals: corpus.per_direction(),
        trips: corpus
            .trips
            .iter()
            .map(|t| TripEntry {
                file: format!("trip_{:03}.jsonl", t.index),
                run: t.run,
                seed: t.seed,
            })
            .collect(),
        days: (0..days.len()).map(|k| format!("day_{k:03}.jsonl")).collect(),
        non_metro: others
            .iter()
            .enumerate()
            .map(|(k, t)| format!("{}_{k:03}.jsonl", t.device_id.split('-').nth(1).unwrap_or("other")))
            .collect(),
    };
    let trip_names: Vec<String> = manifest.trips.iter().map(|t| t.file.clone()).collect();
    let traces: Vec<Trace> = corpus.trips.iter().map(|t| t.trace.clone()).collect();
    save_all(&dir.join("trips"), &trip_names, &traces)?;
    save_all(&dir.join("days"), &manifest.days, &days)?;
    save_all(&dir.join("non_metro"), &manifest.non_metro, &others)?;
    let net_path = cfg.paths.network_file();
    if let Some(parent) = net_path.parent() {
        ensure_dir(parent)?;
    }
    save_network(&corpus.network, &net_path)?;
    write_json(&corpus.profiles, dir.join("profiles.json"))?;
    write_json(&manifest, dir.join("manifest.json"))?;
    println!(
        "corpus: {} trips over {} intervals, {} mixed-mode days, {} non-metro traces -> {}",
        manifest.trips.len(),
        manifest.intervals,
        manifest.days.len(),
        manifest.non_metro.len(),
        dir.display()
    );
    Ok(manifest)
}

pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub manifest: Manifest,
    pub dir: PathBuf,
}

impl LoadedCorpus {
    fn traces(&self, sub: &str, names: &[String]) -> CliResult<Vec<Trace>> {
        names
            .par_iter()
            .map(|n| load_trace(self.dir.join(sub).join(n)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::from)
    }

    pub fn days(&self) -> CliResult<Vec<Trace>> {
        self.traces("days", &self.manifest.days)
    }

    pub fn non_metro(&self) -> CliResult<Vec<Trace>> {
        self.traces("non_metro", &self.manifest.non_metro)
    }
}

pub fn load_corpus(cfg: &PipelineConfig) -> CliResult<LoadedCorpus> {
    let dir = cfg.paths.corpus_dir();
    let manifest: Manifest = read_json(dir.join("manifest.json"))?;
    let network = load_network(cfg.paths.network_file())?;
    let profiles: Vec<TrackProfile> = read_json(dir.join("profiles.json"))?;
    if network.per_direction() != manifest.intervals || profiles.len() != network.interval_count() {
        return Err(CliError::Data(subtrace::Error::Validation(
            "network, profiles and manifest disagree on the line size".into(),
        )));
    }
    let trips = manifest
        .trips
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let trace = load_trace(dir.join("trips").join(&e.file))?;
            if trace.ground_truth.is_none() {
                return Err(subtrace::Error::Validation(format!("{} has no labels", e.file)));
            }
            Ok(record_trip(k, e.run, e.seed, trace, &network, &cfg.benchmark.segmenter))
        })
        .collect::<Result<Vec<_>, subtrace::Error>>()?;
    Ok(LoadedCorpus {
        corpus: Corpus {
            network,
            profiles,
            trips,
        },
        manifest,
        dir,
    })
}

pub fn cmd_train(cfg: &PipelineConfig) -> CliResult<()> {
    let loaded = load_corpus(cfg)?;
    let days = loaded.days()?;
    if days.is_empty() {
        return Err(CliError::Data(subtrace::Error::Validation(
            "corpus has no mixed-mode days to train extraction on".into(),
        )));
    }
    let mode = train_mode_model(&days, &loaded.corpus.network)?;
    let all: Vec<usize> = (0..loaded.corpus.trips.len()).collect();
    let ensemble = train_supervised(&loaded.corpus, &all, &cfg.benchmark)?;
    let dir = cfg.paths.models_dir();
    ensure_dir(&dir)?;
    write_text(&dir.join("mode.json"), &(mode.to_json()? + "\n"))?;
    write_text(&dir.join("ensemble.json"), &(ensemble.to_json()? + "\n"))?;
    println!(
        "trained on {} trips and {} days: {} classes, {} features -> {}",
        all.len(),
        days.len(),
        ensemble.class_count,
        ensemble.dim(),
        dir.display()
    );
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn cmd_attack(cfg: &PipelineConfig, trace_path: &Path, mode: Option<SearchMode>) -> CliResult<AttackReport> {
    let network = load_network(cfg.paths.network_file())?;
    let models = cfg.paths.models_dir();
    let mode_model = ModeModel::from_json(&read_text(&models.join("mode.json"))?)?;
    let ensemble = IntervalEnsemble::from_json(&read_text(&models.join("ensemble.json"))?)?;
    let trace = load_trace(trace_path)?;
    let mut tol = cfg.attack;
    if let Some(m) = mode {
        tol.mode = m;
    }
    let report = attack(&trace, &network, &mode_model, &ensemble, &tol)?;
    let dir = cfg.paths.reports_dir();
    ensure_dir(&dir)?;
    let stem = trace_path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    write_json(&report, dir.join(format!("attack_{stem}.json")))?;
    print!("{}", attack_summary(&report, network.per_direction()));
    Ok(report)
}

fn describe(h: &TraceHypothesis, m: usize) -> String {
    let ids = h.interval_ids(m);
    format!(
        "{:?} from position {} over {} intervals (ids {:?}), score {:.3}",
        h.direction, h.start, h.length, ids, h.score
    )
}

fn attack_summary(report: &AttackReport, m: usize) -> String {
    if report.is_empty() {
        return format!("{}: no metro span found\n", report.device_id);
    }
    let mut s = String::new();
    for (k, span) in report.spans.iter().enumerate() {
        s.push_str(&format!("span {k}: {:.1}s..{:.1}s\n", span.start_time, span.end_time));
        match &span.inference {
            Some(inf) => {
                s.push_str(&format!("  winner: {}\n", describe(&inf.winner, m)));
                let mut alts: Vec<&TraceHypothesis> =
                    inf.hypotheses.iter().filter(|h| !h.same_run(&inf.winner)).collect();
                alts.sort_by(|a, b| b.score.total_cmp(&a.score));
                for h in alts.iter().take(3) {
                    s.push_str(&format!("  alternative: {}\n", describe(h, m)));
                }
            }
            None => s.push_str(&format!("  skipped: {}\n", span.error.as_deref().unwrap_or("unknown"))),
        }
        if let Some(c) = &span.check {
            match &c.truth {
                Some(t) => s.push_str(&format!(
                    "  check: truth {:?} from {} over {}, {}\n",
                    t.direction,
                    t.start,
                    t.length,
                    if c.correct { "correct" } else { "wrong" }
                )),
                None => s.push_str("  check: no interval run in the ground truth\n"),
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapFile {
    pub seeds: Vec<usize>,
    pub rounds: Vec<RoundReport>,
    pub covered: bool,
    pub stalled: bool,
    pub missing: Vec<usize>,
    /// Percent of labels on corpus trips that match the simulator's truth.
    pub label_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolLabel {
    pub trip: Option<usize>,
    pub segment: usize,
    pub interval: usize,
    pub round: usize,
    pub weight: f64,
}

pub fn cmd_bootstrap(cfg: &PipelineConfig, seeds: Option<Vec<usize>>) -> CliResult<BootstrapReport> {
    let loaded = load_corpus(cfg)?;
    let corpus = &loaded.corpus;
    let mut semi = cfg.semisup.clone();
    if let Some(s) = seeds {
        if s.is_empty() {
            return Err(CliError::Usage("bootstrap needs at least one seed interval".into()));
        }
        semi.seeds = Some(s);
    }
    let ids = seed_ids(corpus, &semi)?;
    let seed_segs = seed_segments(corpus, &cfg.benchmark, &ids, semi.seed_samples)?;
    let all: Vec<usize> = (0..corpus.trips.len()).collect();
    let out = bootstrap_trips(corpus, &all, &seed_segs, &cfg.benchmark.features, &semi.bootstrap)?;
    let report = out.report.clone();
    let file = BootstrapFile {
        seeds: ids,
        rounds: report.rounds.clone(),
        covered: report.covered,
        stalled: report.stalled,
        missing: report.missing.clone(),
        label_precision: 100.0 * out.pooled_correct as f64 / out.pooled.max(1) as f64,
    };
    let labels: Vec<PoolLabel> = out
        .labels()
        .into_iter()
        .map(|(trip, segment, interval, round, weight)| PoolLabel {
            trip,
            segment,
            interval,
            round,
            weight,
        })
        .collect();
    let reports = cfg.paths.reports_dir();
    let models = cfg.paths.models_dir();
    ensure_dir(&reports)?;
    ensure_dir(&models)?;
    write_json(&file, reports.join("bootstrap.json"))?;
    write_json(&labels, models.join("pool.json"))?;
    for r in &report.rounds {
        println!(
            "round {}: {} sequences labelled, {} skipped, new seeds {:?}",
            r.round, r.labelled_sequences, r.skipped_sequences, r.new_seeds
        );
    }
    let trained = match out.train(&cfg.benchmark.ensemble) {
        Ok(e) => {
            write_text(&models.join("ensemble_semisup.json"), &(e.to_json()? + "\n"))?;
            true
        }
        Err(e) => {
            log::warn!("no model trained from the pool: {e}");
            false
        }
    };
    if !report.covered {
        return Err(CliError::Stall(format!(
            "bootstrap stalled; intervals without enough labels: {:?}{}",
            report.missing,
            if trained { "" } else { "; no model written" }
        )));
    }
    println!("all {} intervals covered -> {}", corpus.network.interval_count(), models.display());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub protocol: Protocol,
    pub experiment: ExperimentReport,
    pub semisupervised: Option<SemisupDetails>,
    /// Extraction trained on even days, checked on odd days and the
    /// non-metro traces.
    pub extraction: Option<ExtractionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemisupDetails {
    pub bootstraps: Vec<BootstrapReport>,
    pub label_precision: f64,
    pub all_covered: bool,
    pub max_rounds: usize,
}

fn extraction_check(loaded: &LoadedCorpus) -> CliResult<Option<ExtractionReport>> {
    let days = loaded.days()?;
    if days.len() < 2 {
        return Ok(None);
    }
    let (train, mut test): (Vec<Trace>, Vec<Trace>) = {
        let (a, b): (Vec<_>, Vec<_>) = days.into_iter().enumerate().partition(|(k, _)| k % 2 == 0);
        (a.into_iter().map(|x| x.1).collect(), b.into_iter().map(|x| x.1).collect())
    };
    test.extend(loaded.non_metro()?);
    let model = train_mode_model(&train, &loaded.corpus.network)?;
    Ok(Some(evaluate_extraction(&model, &test)?))
}

fn predictions_csv(r: &ExperimentReport) -> String {
    let mut s = String::from("trip,offset,length,direction,start,predicted_length,score,correct\n");
    for p in &r.predictions {
        s.push_str(&format!(
            "{},{},{},{:?},{},{},{},{}\n",
            p.trip, p.offset, p.length, p.predicted.direction, p.predicted.start, p.predicted.length, p.predicted.score, p.correct
        ));
    }
    s
}

pub fn cmd_evaluate(cfg: &PipelineConfig, protocol: Protocol) -> CliResult<EvaluationFile> {
    let loaded = load_corpus(cfg)?;
    let (experiment, semisupervised) = match protocol {
        Protocol::Supervised => (run_supervised(&loaded.corpus, &cfg.benchmark)?, None),
        Protocol::Semisupervised => {
            let SemisupReport {
                experiment,
                bootstraps,
                label_precision,
            } = run_semisupervised(&loaded.corpus, &cfg.benchmark, &cfg.semisup)?;
            let details = SemisupDetails {
                all_covered: bootstraps.iter().all(|b| b.covered),
                max_rounds: bootstraps.iter().map(|b| b.rounds.len()).max().unwrap_or(0),
                bootstraps,
                label_precision,
            };
            (experiment, Some(details))
        }
    };
    let file = EvaluationFile {
        protocol,
        extraction: extraction_check(&loaded)?,
        experiment,
        semisupervised,
    };
    let name = match protocol {
        Protocol::Supervised => "supervised",
        Protocol::Semisupervised => "semisupervised",
    };
    let dir = cfg.paths.reports_dir();
    ensure_dir(&dir)?;
    let mut table = file.experiment.table();
    if let Some(e) = &file.extraction {
        table.push_str(&format!(
            "extraction: {:.2}% metro coverage, {} false positive spans ({} before refinement)\n",
            e.coverage, e.false_positives, e.raw_false_positives
        ));
    }
    if let Some(s) = &file.semisupervised {
        table.push_str(&format!(
            "bootstrap: all folds covered {}, at most {} rounds, label precision {:.2}%\n",
            s.all_covered, s.max_rounds, s.label_precision
        ));
    }
    write_json(&file, dir.join(format!("evaluate_{name}.json")))?;
    write_text(&dir.join(format!("evaluate_{name}.txt")), &table)?;
    write_text(&dir.join(format!("evaluate_{name}_predictions.csv")), &predictions_csv(&file.experiment))?;
    print!("{table}");
    Ok(file)
}
