use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dialecto::affinity::{count_emojis, lexical_affinity, write_emoji_csv, EmojiRanking};
use dialecto::embcompare::{load_embeddings, semantic_pipeline, EmbeddingTable};
use dialecto::emoji15::{
    build_task, evaluate, labels_json, parse_label_set, read_examples, read_predictions,
    write_examples, AccuracyMatrix, CentroidPredictor, EmojiTaskConfig, EvalReport, LabeledExample,
};
use dialecto::ingest::{read_corpus, IngestStats, Profile, TweetRecord};
use dialecto::region::RegionSet;
use dialecto::textnorm::{normalized_tokens, NormalizationConfig};
use dialecto::vocab::{
    build_vocabulary, count_texts, fit_heaps, fit_zipf, heaps_curve, min_frequency_cutoff,
    zipf_ranks, CutoffParams, LawFitExport, RegionVocabulary,
};
use dialecto::RegionCode;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Command, Options};
use crate::output::Artifacts;
use crate::AppResult;

pub fn cutoff(opts: &Options) -> AppResult<f64> {
    let n = opts.n.ok_or("cutoff needs --N")?;
    let alpha = opts.alpha.ok_or("cutoff needs --alpha")?;
    Ok(min_frequency_cutoff(n, alpha)?)
}

pub fn run(command: Command, opts: &Options, out: &mut Artifacts) -> AppResult<Value> {
    match command {
        Command::IngestStats => ingest_stats(opts, out),
        Command::Vocab => vocab(opts, out),
        Command::Laws => laws(opts, out),
        Command::LexicalAffinity => lexical(opts, out),
        Command::EmojiStats => emoji_stats(opts, out),
        Command::EmbAffinity => emb_affinity(opts, out),
        Command::Emoji15Build => emoji15_build(opts, out),
        Command::Emoji15Eval => emoji15_eval(opts, out),
        Command::Cutoff => unreachable!("handled before artifacts are set up"),
    }
}

#[derive(Serialize)]
struct FileStats {
    path: String,
    #[serde(flatten)]
    stats: IngestStats,
}

struct Corpus {
    records: Vec<TweetRecord>,
    files: Vec<FileStats>,
    total: IngestStats,
}

impl Corpus {
    fn summary(&self) -> Value {
        json!({
            "inputs": self.files.len(),
            "lines": self.total.lines,
            "kept": self.total.kept,
            "filtered": self.total.filtered,
            "malformed": self.total.malformed,
        })
    }

    fn texts_by_region(&self) -> BTreeMap<RegionCode, Vec<&str>> {
        let mut by_region: BTreeMap<RegionCode, Vec<&str>> = BTreeMap::new();
        for r in &self.records {
            by_region.entry(r.region).or_default().push(&r.text);
        }
        by_region
    }
}

fn load_corpus(opts: &Options, default_profile: Profile) -> AppResult<Corpus> {
    if opts.input.is_empty() {
        return Err("no --input given".into());
    }
    let filter = opts.profile.unwrap_or(default_profile).filter();
    let regions = RegionSet::default();
    let per_file: Vec<(Vec<TweetRecord>, IngestStats)> = opts
        .input
        .par_iter()
        .map(|path| {
            let mut reader = read_corpus(path, &filter, &regions)?;
            let records = reader.by_ref().collect::<dialecto::Result<Vec<_>>>()?;
            Ok((records, reader.stats()))
        })
        .collect::<dialecto::Result<_>>()?;
    let mut corpus = Corpus {
        records: Vec::new(),
        files: Vec::new(),
        total: IngestStats::default(),
    };
    for (path, (records, stats)) in opts.input.iter().zip(per_file) {
        corpus.records.extend(records);
        corpus.total += stats;
        corpus.files.push(FileStats {
            path: path.display().to_string(),
            stats,
        });
    }
    Ok(corpus)
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

fn ingest_stats(opts: &Options, out: &mut Artifacts) -> AppResult<Value> {
    let corpus = load_corpus(opts, Profile::Corpus)?;
    let mut per_region: BTreeMap<RegionCode, u64> = BTreeMap::new();
    for r in &corpus.records {
        *per_region.entry(r.region).or_insert(0) += 1;
    }
    let report = json!({
        "files": corpus.files,
        "total": corpus.total,
        "kept_per_region": per_region,
    });
    out.write_json("ingest_stats.json", &report)?;
    Ok(merge(
        corpus.summary(),
        json!({ "kept_per_region": per_region }),
    ))
}

/// The count threshold for a region: derived from --alpha when given,
/// otherwise --min-count.
fn region_min_count(opts: &Options, total_tokens: u64) -> AppResult<u64> {
    match opts.alpha {
        Some(alpha) => {
            let n = opts.n.unwrap_or(total_tokens);
            if n == 0 {
                return Ok(opts.min_count);
            }
            Ok(CutoffParams::new(n, alpha)?.min_count())
        }
        None => Ok(opts.min_count),
    }
}

struct RegionVocab {
    vocab: RegionVocabulary,
    types: usize,
}

fn vocabularies(opts: &Options, corpus: &Corpus) -> AppResult<Vec<RegionVocab>> {
    let config = NormalizationConfig::default();
    corpus
        .texts_by_region()
        .into_iter()
        .map(|(region, texts)| {
            let (counts, total) = count_texts(&texts, &config);
            let types = counts.len();
            let min_count = region_min_count(opts, total)?;
            let vocab = RegionVocabulary::from_counts(region, counts, total, min_count)?;
            Ok(RegionVocab { vocab, types })
        })
        .collect()
}

fn vocab_summary(vocabs: &[RegionVocab]) -> BTreeMap<RegionCode, Value> {
    vocabs
        .iter()
        .map(|v| {
            (
                v.vocab.region(),
                json!({
                    "tokens": v.vocab.total_tokens(),
                    "types": v.types,
                    "kept_types": v.vocab.len(),
                    "min_count": v.vocab.min_count(),
                }),
            )
        })
        .collect()
}

fn vocab(opts: &Options, out: &mut Artifacts) -> AppResult<Value> {
    let corpus = load_corpus(opts, Profile::Corpus)?;
    let vocabs = vocabularies(opts, &corpus)?;
    for v in &vocabs {
        out.write(format!("vocab/{}.tsv", v.vocab.region()), |w| {
            Ok(v.vocab.write_tsv(w)?)
        })?;
    }
    let regions = vocab_summary(&vocabs);
    out.write_json("vocab/summary.json", &regions)?;
    Ok(merge(corpus.summary(), json!({ "regions": regions })))
}

fn laws(opts: &Options, out: &mut Artifacts) -> AppResult<Value> {
    let corpus = load_corpus(opts, Profile::Corpus)?;
    let config = NormalizationConfig::default();
    let mut report = BTreeMap::new();
    let mut brief = BTreeMap::new();
    for (region, texts) in corpus.texts_by_region() {
        let per_text: Vec<Vec<String>> = texts
            .par_iter()
            .map(|t| normalized_tokens(t, &config))
            .collect();
        let stream: Vec<String> = per_text.into_iter().flatten().collect();
        let min_count = region_min_count(opts, stream.len() as u64)?;
        let vocab = build_vocabulary(&stream, region, min_count)?;
        let curve = heaps_curve(&stream, opts.heaps_samples)?;
        let heaps = fit_heaps(&curve)?;
        let zipf = fit_zipf(&zipf_ranks(&vocab)?, None)?;
        brief.insert(
            region,
            json!({
                "alpha": heaps.exponent,
                "heaps_r2": heaps.r_squared,
                "beta": zipf.exponent,
                "zipf_r2": zipf.r_squared,
            }),
        );
        report.insert(
            region,
            json!({
                "tokens": stream.len(),
                "types": curve.last().map_or(0, |p| p.1),
                "min_count": min_count,
                "zipf_ranks": vocab.len(),
                "heaps": LawFitExport::new(heaps, &curve),
                "zipf": zipf,
            }),
        );
    }
    out.write_json("laws.json", &report)?;
    Ok(merge(corpus.summary(), json!({ "regions": brief })))
}

fn lexical(opts: &Options, out: &mut Artifacts) -> AppResult<Value> {
    let corpus = load_corpus(opts, Profile::Corpus)?;
    let vocabs = vocabularies(opts, &corpus)?;
    let plain: Vec<RegionVocabulary> = vocabs.iter().map(|v| v.vocab.clone()).collect();
    let outcome = lexical_affinity(&plain)?;
    out.write("lexical_affinity.csv", |w| {
        Ok(outcome.matrix.write_csv(w)?)
    })?;
    Ok(merge(
        corpus.summary(),
        json!({
            "regions": outcome.matrix.labels,
            "excluded": outcome.excluded,
            "vocabularies": vocab_summary(&vocabs),
        }),
    ))
}

fn emoji_stats(opts: &Options, out: &mut Artifacts) -> AppResult<Value> {
    let corpus = load_corpus(opts, Profile::Corpus)?;
    let rankings = corpus
        .texts_by_region()
        .into_iter()
        .map(|(region, texts)| EmojiRanking::from_counts(region, count_emojis(&texts), opts.top_k))
        .collect::<dialecto::Result<Vec<_>>>()?;
    out.write("emoji_top.csv", |w| Ok(write_emoji_csv(&rankings, w)?))?;
    let distinct: BTreeMap<RegionCode, usize> = rankings
        .iter()
        .map(|r| (r.region, r.ranked.len()))
        .collect();
    Ok(merge(
        corpus.summary(),
        json!({ "ranked_per_region": distinct }),
    ))
}

/// Region code from a file name such as `ar.vec` or `MX.300.vec.gz`.
fn region_from_path(path: &Path) -> AppResult<RegionCode> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| format!("cannot take a region code from {}", path.display()))?;
    let stem = name.split('.').next().unwrap_or(name);
    RegionCode::new(&stem.to_ascii_uppercase())
        .map_err(|e| format!("{}: {e}", path.display()).into())
}

fn emb_affinity(opts: &Options, out: &mut Artifacts) -> AppResult<Value> {
    if opts.input.is_empty() {
        return Err("no --input embedding files given".into());
    }
    let regions = opts
        .input
        .iter()
        .map(|p| region_from_path(p))
        .collect::<AppResult<Vec<_>>>()?;
    let tables: Vec<EmbeddingTable> = opts
        .input
        .par_iter()
        .zip(&regions)
        .map(|(path, &region)| load_embeddings(path, region))
        .collect::<dialecto::Result<_>>()?;
    let run = semantic_pipeline(&tables, opts.min_regions, opts.k)?;
    out.write("semantic_affinity.csv", |w| {
        Ok(run.outcome.matrix.write_csv(w)?)
    })?;
    out.write("common_tokens.txt", |w| {
        for t in &run.common.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    })?;
    for sig in run.signatures.iter().filter(|s| !s.is_empty()) {
        out.write(format!("signatures/{}.tsv", sig.region), |w| {
            Ok(sig.write_tsv(&run.common, w)?)
        })?;
    }
    let entries: BTreeMap<RegionCode, usize> =
        run.signatures.iter().map(|s| (s.region, s.len())).collect();
    let sizes: BTreeMap<RegionCode, usize> = tables.iter().map(|t| (t.region(), t.len())).collect();
    Ok(json!({
        "inputs": tables.len(),
        "table_sizes": sizes,
        "common_tokens": run.common.len(),
        "k": opts.k,
        "signature_entries": entries,
        "regions": run.outcome.matrix.labels,
        "excluded": run.outcome.excluded,
    }))
}

fn task_config(opts: &Options) -> AppResult<EmojiTaskConfig> {
    let mut config = EmojiTaskConfig {
        holdout_fraction: opts.holdout,
        seed: opts.seed,
        min_examples_per_region: opts.min_examples,
        ..EmojiTaskConfig::default()
    };
    if let Some(path) = &opts.label_set {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        config.label_set = parse_label_set(&text)?;
    }
    config.validate()?;
    Ok(config)
}

fn emoji15_build(opts: &Options, out: &mut Artifacts) -> AppResult<Value> {
    let config = task_config(opts)?;
    let corpus = load_corpus(opts, Profile::Embedding)?;
    let split = build_task(corpus.records.iter().cloned(), &config)?;
    out.write_json("labels.json", &labels_json(&split.labels))?;
    let mut sizes = BTreeMap::new();
    for (region, s) in &split.regions {
        out.write(format!("{region}.train.jsonl"), |w| {
            Ok(write_examples(&s.train, w)?)
        })?;
        out.write(format!("{region}.test.jsonl"), |w| {
            Ok(write_examples(&s.test, w)?)
        })?;
        sizes.insert(
            *region,
            json!({ "train": s.train.len(), "test": s.test.len() }),
        );
    }
    Ok(merge(
        corpus.summary(),
        json!({
            "seed": config.seed,
            "build": split.stats,
            "regions": sizes,
            "dropped": split.dropped,
        }),
    ))
}

/// Regions that have `<REGION>.<suffix>` in `dir`, sorted.
fn split_files(dir: &Path, suffix: &str) -> AppResult<BTreeMap<RegionCode, PathBuf>> {
    let mut found = BTreeMap::new();
    let entries =
        std::fs::read_dir(dir).map_err(|e| format!("cannot list {}: {e}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(code) = name.strip_suffix(suffix) {
            if let Ok(region) = RegionCode::new(code) {
                found.insert(region, path);
            }
        }
    }
    Ok(found)
}

fn emoji15_eval(opts: &Options, out: &mut Artifacts) -> AppResult<Value> {
    let task = opts.task.as_deref().ok_or("emoji15-eval needs --task")?;
    let labels_text = std::fs::read_to_string(task.join("labels.json"))
        .map_err(|e| format!("cannot read {}: {e}", task.join("labels.json").display()))?;
    let n_labels = parse_label_set(&labels_text)?.len();

    let gold: BTreeMap<RegionCode, Vec<LabeledExample>> = split_files(task, ".test.jsonl")?
        .into_iter()
        .map(|(region, path)| Ok((region, read_examples(&path, region)?)))
        .collect::<AppResult<_>>()?;
    if gold.is_empty() {
        return Err(format!("no <REGION>.test.jsonl files in {}", task.display()).into());
    }

    // model code -> region -> predicted labels
    let mut predictions: BTreeMap<String, BTreeMap<RegionCode, Vec<usize>>> = BTreeMap::new();
    if let Some(dir) = &opts.predictions {
        let mut models: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| format!("cannot list {}: {e}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        models.retain(|p| p.is_dir());
        models.sort();
        for model_dir in models {
            let model = model_dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let mut per_region = BTreeMap::new();
            for (region, path) in split_files(&model_dir, ".txt")? {
                if gold.contains_key(&region) {
                    per_region.insert(region, read_predictions(&path, n_labels)?);
                }
            }
            predictions.insert(model, per_region);
        }
    }

    for spec in &opts.embedding {
        let (model, path) = spec
            .split_once('=')
            .ok_or_else(|| format!("--embedding expects MODEL=PATH, got {spec:?}"))?;
        let region = RegionCode::new(model).map_err(|e| format!("--embedding {spec:?}: {e}"))?;
        if predictions.contains_key(model) {
            return Err(format!("model {model} has both prediction files and an embedding").into());
        }
        let train = read_examples(task.join(format!("{region}.train.jsonl")), region)?;
        let table = load_embeddings(path, region)?;
        let predictor = CentroidPredictor::train(&train, &table, n_labels)?;
        let mut per_region = BTreeMap::new();
        for (r, examples) in &gold {
            let predicted: Vec<usize> = examples
                .par_iter()
                .map(|e| predictor.predict(&e.text))
                .collect();
            out.write(format!("predictions/{model}/{r}.txt"), |w| {
                for p in &predicted {
                    writeln!(w, "{p}")?;
                }
                Ok(())
            })?;
            per_region.insert(*r, predicted);
        }
        predictions.insert(model.to_string(), per_region);
    }
    if predictions.is_empty() {
        return Err("nothing to evaluate: give --predictions and/or --embedding".into());
    }

    let models: Vec<String> = predictions.keys().cloned().collect();
    let regions: Vec<RegionCode> = gold.keys().copied().collect();
    let mut acc = AccuracyMatrix::new(models, regions);
    for (model, per_region) in &predictions {
        for (region, predicted) in per_region {
            let score = evaluate(predicted, &gold[region])
                .map_err(|e| format!("model {model}, region {region}: {e}"))?;
            acc.set(model, *region, score)?;
        }
    }
    let report = EvalReport::from_accuracy(&acc)?;
    out.write_json("eval_report.json", &report)?;
    Ok(json!({
        "models": report.models,
        "regions": report.regions,
        "avg_rank": report.avg_rank,
        "local_rank": report.local_rank,
    }))
}
