use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use quadmelody::abc::{parse_abc, segment, serialize_abc, split_tunes, Score};
use quadmelody::features::{extract_features, read_table, write_table, FeatureRow};
use quadmelody::generator::{
    cross_entropy, derive_seed, parse_rate, train, CharLm, SamplingOptions, DEFAULT_MAX_CHARS,
    DEFAULT_TEMPERATURE,
};
use quadmelody::labeling::{
    balance, compute_threshold, make_record, quadrant_counts, read_jsonl, rough_label, split_with_ratio,
    write_jsonl, DatasetRecord, Manifest, QuadrantLabel,
};
use quadmelody::musicxml::{parse_musicxml, parse_mxl};
use quadmelody::render::{synthesize, to_midi, write_wav};
use quadmelody::stats::{bar_counts, correlation_report, kde_table, BINARY, MULTISCALE};
use quadmelody::template::{choose_prompt, generate_with_emotion, AblationMask};

use crate::config::{pick, Config};
use crate::io::{collect_inputs, decode_text, log, sha256_hex, write_atomic, write_json};

/// A stage that ran but produced nothing usable; exits with status 2.
#[derive(Debug)]
pub struct EmptyResult(pub String);

impl std::fmt::Display for EmptyResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "empty result: {}", self.0)
    }
}

impl std::error::Error for EmptyResult {}

fn empty(msg: impl Into<String>) -> anyhow::Error {
    EmptyResult(msg.into()).into()
}

/// Manifest path written beside a JSONL dataset: `x.jsonl` -> `x.manifest.json`.
pub fn manifest_path(jsonl: &Path) -> PathBuf {
    jsonl.with_extension("manifest.json")
}

fn read_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_jsonl(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn read_manifest(jsonl: &Path) -> Option<Manifest> {
    let text = std::fs::read_to_string(manifest_path(jsonl)).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_dataset(path: &Path, records: &[DatasetRecord], mut manifest: Manifest) -> Result<()> {
    let mut bytes = Vec::new();
    write_jsonl(records, &mut bytes)?;
    write_atomic(path, &bytes)?;
    manifest.counts = quadrant_counts(records);
    write_json(&manifest_path(path), &manifest)?;
    log("info", "wrote_dataset", json!({"path": path.display().to_string(), "records": records.len()}));
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Outcome of reading one input file.
struct FileScores {
    path: PathBuf,
    digest: String,
    scores: Vec<Score>,
    /// `(where, reason)` for every tune that failed.
    failures: Vec<(String, String)>,
}

fn read_scores(path: &Path) -> Result<FileScores> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let digest = sha256_hex(&bytes);
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    match ext.as_str() {
        "abc" => {
            for (line, tune) in split_tunes(&decode_text(&bytes)) {
                match parse_abc(&tune) {
                    Ok(s) => scores.push(s),
                    Err(e) => failures.push((format!("line {line}"), e.to_string())),
                }
            }
        }
        "mxl" => match parse_mxl(&bytes) {
            Ok(s) => scores.push(s),
            Err(e) => failures.push(("file".into(), e.to_string())),
        },
        _ => match parse_musicxml(&decode_text(&bytes)) {
            Ok(s) => scores.push(s),
            Err(e) => failures.push(("file".into(), e.to_string())),
        },
    }
    Ok(FileScores {
        path: path.to_path_buf(),
        digest,
        scores,
        failures,
    })
}

/// Hash of the musical content, ignoring the reference number and title.
fn content_digest(score: &Score) -> String {
    let mut s = score.clone();
    s.number = 1;
    s.title = None;
    sha256_hex(serialize_abc(&s).as_bytes())
}

/// Segments and labels scores; segments without sounded notes are logged and dropped.
fn label_scores(scores: &[Score], threshold: Option<f64>) -> Result<(Vec<DatasetRecord>, f64)> {
    let segments: Vec<Score> = scores.iter().flat_map(segment).collect();
    let threshold = match threshold {
        Some(t) => t,
        None => compute_threshold(&segments).map_err(|e| empty(format!("no labelable segments: {e}")))?,
    };
    let mut records = Vec::with_capacity(segments.len());
    for (i, s) in segments.iter().enumerate() {
        match rough_label(s, threshold) {
            Ok(q) => records.push(make_record(s, q)),
            Err(e) => log("warn", "drop_segment", json!({"segment": i, "reason": e.to_string()})),
        }
    }
    Ok((records, threshold))
}

pub struct IngestArgs {
    pub inputs: Vec<String>,
    pub out: PathBuf,
    pub threshold: Option<f64>,
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let files = collect_inputs(&args.inputs)?;
    if files.is_empty() {
        return Err(empty("no input files"));
    }
    let read: Vec<Result<FileScores>> = files.par_iter().map(|p| read_scores(p)).collect();

    let mut sources = BTreeMap::new();
    let mut seen = HashSet::new();
    let mut scores = Vec::new();
    let mut drops = 0usize;
    for r in read {
        let file = match r {
            Ok(f) => f,
            Err(e) => {
                drops += 1;
                log("warn", "drop_file", json!({"reason": format!("{e:#}")}));
                continue;
            }
        };
        let path = display(&file.path);
        for (at, reason) in &file.failures {
            drops += 1;
            log("warn", "drop_tune", json!({"path": path, "at": at, "reason": reason}));
        }
        for s in file.scores {
            if seen.insert(content_digest(&s)) {
                scores.push(s);
            } else {
                drops += 1;
                log("warn", "drop_tune", json!({"path": path, "tune": s.number, "reason": "duplicate"}));
            }
        }
        sources.insert(path, file.digest);
    }
    if scores.is_empty() {
        return Err(empty("no input tune survived parsing"));
    }
    let (records, threshold) = label_scores(&scores, args.threshold)?;
    if records.is_empty() {
        return Err(empty("no records"));
    }
    log(
        "info",
        "ingest",
        json!({"files": files.len(), "tunes": scores.len(), "dropped": drops, "records": records.len(), "threshold": threshold}),
    );
    let manifest = Manifest {
        pitch_sd_threshold: threshold,
        split_seed: None,
        sources,
        counts: BTreeMap::new(),
        warnings: Vec::new(),
    };
    write_dataset(&args.out, &records, manifest)
}

pub fn label(input: &Path, out: &Path, threshold: Option<f64>) -> Result<()> {
    let records = read_records(input)?;
    let scores = records.iter().map(DatasetRecord::score).collect::<quadmelody::Result<Vec<_>>>()?;
    let threshold = match threshold {
        Some(t) => t,
        None => compute_threshold(&scores).map_err(|e| empty(e.to_string()))?,
    };
    let mut labeled = Vec::with_capacity(scores.len());
    for (i, s) in scores.iter().enumerate() {
        match rough_label(s, threshold) {
            Ok(q) => labeled.push(make_record(s, q)),
            Err(e) => log("warn", "drop_record", json!({"record": i, "reason": e.to_string()})),
        }
    }
    if labeled.is_empty() {
        return Err(empty("no records"));
    }
    let sources = read_manifest(input).map(|m| m.sources).unwrap_or_default();
    let manifest = Manifest {
        pitch_sd_threshold: threshold,
        split_seed: None,
        sources,
        counts: BTreeMap::new(),
        warnings: Vec::new(),
    };
    write_dataset(out, &labeled, manifest)
}

pub struct BalanceArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Also write `<out stem>.train.jsonl` / `.test.jsonl`.
    pub split: bool,
    pub ratio: usize,
    pub split_seed: u64,
}

pub fn balance_cmd(args: &BalanceArgs) -> Result<()> {
    let records = read_records(&args.input)?;
    if records.is_empty() {
        return Err(empty("input dataset is empty"));
    }
    let balanced = balance(&records)?;
    for w in &balanced.warnings {
        log("warn", "skipped_transposition", json!({"reason": w}));
    }
    let base = read_manifest(&args.input);
    let threshold = match &base {
        Some(m) => m.pitch_sd_threshold,
        None => {
            let scores = records.iter().map(DatasetRecord::score).collect::<quadmelody::Result<Vec<_>>>()?;
            compute_threshold(&scores)?
        }
    };
    let manifest = Manifest {
        pitch_sd_threshold: threshold,
        split_seed: args.split.then_some(args.split_seed),
        sources: base.map(|m| m.sources).unwrap_or_default(),
        counts: BTreeMap::new(),
        warnings: balanced.warnings.clone(),
    };
    write_dataset(&args.out, &balanced.records, manifest.clone())?;
    if args.split {
        let (train_set, test_set) = split_with_ratio(&balanced.records, args.ratio, args.split_seed)?;
        write_dataset(&args.out.with_extension("train.jsonl"), &train_set, manifest.clone())?;
        write_dataset(&args.out.with_extension("test.jsonl"), &test_set, manifest)?;
    }
    Ok(())
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        -1.0
    }
}

pub fn features(input: &Path, out: &Path) -> Result<()> {
    let records = read_records(input)?;
    let rows: Vec<Option<FeatureRow>> = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let f = r.score().and_then(|s| extract_features(&s));
            match f {
                Ok(features) => Some(FeatureRow {
                    label: r.label.to_string(),
                    valence: flag(r.label.valence_high()),
                    arousal: flag(r.label.arousal_high()),
                    features,
                }),
                Err(e) => {
                    log("warn", "drop_record", json!({"record": i, "reason": e.to_string()}));
                    None
                }
            }
        })
        .collect();
    let rows: Vec<FeatureRow> = rows.into_iter().flatten().collect();
    if rows.is_empty() {
        return Err(empty("no feature rows"));
    }
    let mut bytes = Vec::new();
    write_table(&rows, &mut bytes)?;
    write_atomic(out, &bytes)?;
    log("info", "wrote_table", json!({"path": display(out), "rows": rows.len()}));
    Ok(())
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

pub fn analyze(table: &Path, out_dir: &Path) -> Result<()> {
    let file = std::fs::File::open(table).with_context(|| format!("opening {}", table.display()))?;
    let rows = read_table(file)?;
    let report = correlation_report(&rows)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_atomic(&out_dir.join("correlation.csv"), &csv)?;
    let text = report.to_text();
    write_atomic(&out_dir.join("correlation.txt"), text.as_bytes())?;
    print!("{text}");

    let mut labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    for feature in MULTISCALE {
        for &label in &labels {
            let subset: Vec<FeatureRow> = rows.iter().filter(|r| r.label == label).cloned().collect();
            let mut bytes = Vec::new();
            let skipped = kde_table(&subset, feature, &mut bytes)?;
            if !skipped.is_empty() {
                log("warn", "kde_skipped", json!({"feature": feature, "label": label, "reason": "constant or too few values"}));
                continue;
            }
            write_atomic(&out_dir.join(format!("kde_{feature}_{}.csv", file_label(label))), &bytes)?;
        }
    }
    for feature in BINARY {
        let mut bytes = Vec::new();
        bar_counts(&rows, feature, &mut bytes)?;
        write_atomic(&out_dir.join(format!("bars_{feature}.csv")), &bytes)?;
    }
    log("info", "analyze", json!({"rows": rows.len(), "significant": report.significant_count()}));
    Ok(())
}

pub struct TrainArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub order: usize,
    pub alpha: f64,
    pub test: Option<PathBuf>,
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let records = read_records(&args.input)?;
    if records.is_empty() {
        return Err(empty("training set is empty"));
    }
    let model = train(&records, args.order, args.alpha)?;
    write_atomic(&args.out, &model.to_bytes()?)?;
    let mut fields = json!({
        "path": display(&args.out),
        "records": records.len(),
        "order": model.order(),
        "alpha": model.alpha(),
        "contexts": model.context_count(),
        "vocab": model.vocab_size(),
        "train_ce": cross_entropy(&model, &records)?,
    });
    if let Some(test) = &args.test {
        let held_out = read_records(test)?;
        if !held_out.is_empty() {
            fields["test_ce"] = json!(cross_entropy(&model, &held_out)?);
        }
    }
    log("info", "train", fields);
    Ok(())
}

fn load_model(path: &Path) -> Result<CharLm> {
    let file = std::fs::File::open(path).with_context(|| format!("opening model {}", path.display()))?;
    Ok(CharLm::read_from(std::io::BufReader::new(file))?)
}

#[derive(Debug, Clone, Copy)]
pub struct Sampling {
    pub temperature: f64,
    pub guarded: bool,
    pub max_chars: usize,
}

impl Sampling {
    pub fn resolve(temperature: Option<f64>, guarded: bool, max_chars: Option<usize>, config: &Config) -> Sampling {
        Sampling {
            temperature: pick(temperature, config.sampling.temperature, DEFAULT_TEMPERATURE),
            guarded: guarded || config.sampling.guarded.unwrap_or(false),
            max_chars: pick(max_chars, config.sampling.max_chars, DEFAULT_MAX_CHARS),
        }
    }

    fn options(&self, seed: u64) -> SamplingOptions {
        SamplingOptions {
            temperature: self.temperature,
            seed,
            max_chars: self.max_chars,
            guarded: self.guarded,
        }
    }
}

pub struct GenerateArgs {
    pub model: PathBuf,
    pub emotions: Vec<QuadrantLabel>,
    pub count: usize,
    pub mask: AblationMask,
    pub seed: u64,
    pub out: PathBuf,
    pub sampling: Sampling,
    pub wav: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PieceEntry {
    pub file: String,
    pub label: QuadrantLabel,
    pub conditioning: QuadrantLabel,
    pub prefix: String,
    pub attempts: usize,
    pub tempo_bpm: Option<u32>,
    pub requested_shift: i32,
    pub applied_shift: i32,
    pub velocity: u8,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub seed: u64,
    pub ablated: Vec<String>,
    pub temperature: f64,
    pub guarded: bool,
    pub pieces: Vec<PieceEntry>,
    pub failures: Vec<String>,
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let jobs: Vec<(QuadrantLabel, usize)> = args
        .emotions
        .iter()
        .flat_map(|&q| (0..args.count).map(move |i| (q, i)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(q, i)| {
            let seed = derive_seed(derive_seed(args.seed, q.index() as u64), i as u64);
            (q, i, generate_with_emotion(&model, q, &args.mask, &args.sampling.options(seed)))
        })
        .collect();

    let mut pieces = Vec::new();
    let mut failures = Vec::new();
    for (q, i, result) in results {
        let piece = match result {
            Ok(p) => p,
            Err(e) => {
                log("warn", "generation_failed", json!({"label": q.to_string(), "index": i, "reason": e.to_string()}));
                failures.push(format!("{q} #{i}: {e}"));
                continue;
            }
        };
        let stem = format!("{q}_{:03}", i + 1);
        let perf = &piece.applied.performance;
        let mut score = perf.score.clone();
        score.number = i as u32 + 1;
        write_atomic(&args.out.join(format!("{stem}.abc")), serialize_abc(&score).as_bytes())?;
        write_atomic(&args.out.join(format!("{stem}.mid")), &to_midi(perf))?;
        if args.wav {
            let mut bytes = std::io::Cursor::new(Vec::new());
            write_wav(&synthesize(perf), &mut bytes)?;
            write_atomic(&args.out.join(format!("{stem}.wav")), bytes.get_ref())?;
        }
        if piece.applied.shift_fell_back() {
            log(
                "warn",
                "octave_fallback",
                json!({"file": stem, "requested": piece.applied.requested_shift, "applied": piece.applied.applied_shift}),
            );
        }
        pieces.push(PieceEntry {
            file: stem,
            label: q,
            conditioning: piece.conditioning,
            prefix: piece.prefix,
            attempts: piece.attempts,
            tempo_bpm: piece.applied.tempo_bpm,
            requested_shift: piece.applied.requested_shift,
            applied_shift: piece.applied.applied_shift,
            velocity: piece.applied.velocity,
        });
    }
    let manifest = GenerationManifest {
        seed: args.seed,
        ablated: args.mask.ablated().into_iter().map(String::from).collect(),
        temperature: args.sampling.temperature,
        guarded: args.sampling.guarded,
        pieces,
        failures,
    };
    write_json(&args.out.join("manifest.json"), &manifest)?;
    log("info", "generate", json!({"pieces": manifest.pieces.len(), "failures": manifest.failures.len()}));
    if manifest.pieces.is_empty() {
        return Err(empty("no piece could be generated"));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub parse_rate: f64,
    pub temperature: f64,
    pub guarded: bool,
    pub seed: u64,
    pub order: usize,
    pub alpha: f64,
}

/// Prompts cycle through the quadrants the model was trained on; each is a
/// training prefix for that label.
pub fn eval_prompts(model: &CharLm, samples: usize, seed: u64) -> Result<Vec<String>> {
    let labels: Vec<QuadrantLabel> = QuadrantLabel::ALL
        .into_iter()
        .filter(|q| model.prompts_for(&q.to_string()).next().is_some())
        .collect();
    if labels.is_empty() {
        return Err(empty("model has no quadrant-labelled training prompts"));
    }
    (0..samples)
        .map(|i| Ok(choose_prompt(model, labels[i % labels.len()], derive_seed(seed, i as u64))?))
        .collect()
}

pub fn eval(model_path: &Path, samples: usize, seed: u64, sampling: Sampling, out: Option<&Path>) -> Result<()> {
    let model = load_model(model_path)?;
    let prompts = eval_prompts(&model, samples, derive_seed(seed, 0))?;
    let rate = parse_rate(&model, &prompts, 1, &sampling.options(derive_seed(seed, 1)));
    let report = EvalReport {
        samples,
        parse_rate: rate,
        temperature: sampling.temperature,
        guarded: sampling.guarded,
        seed,
        order: model.order(),
        alpha: model.alpha(),
    };
    println!("{}", serde_json::to_string(&report)?);
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(())
}
