//! The Emoji-15 regional benchmark: dataset construction and the
//! accuracy/rank evaluation protocol.
//!
//! A message qualifies when exactly one of the fifteen label emoji occurs in
//! it (other emoji are allowed). The label emoji is removed from the text and
//! becomes the class. Each region is split into train and test halves,
//! stratified by label, with one seeded generator.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::cosine_distance;
use crate::embcompare::EmbeddingTable;
use crate::ingest::{open_input, TweetRecord};
use crate::textnorm::{
    codepoint_notation, emoji_base, is_emoji_grapheme, normalized_tokens, tokenize,
    NormalizationConfig, TokenKind,
};
use crate::{Error, RegionCode, Result};

pub const LABEL_COUNT: usize = 15;

/// Fifteen frequent emoji spanning several emotions. The single most
/// frequent one (U+1F602) is left out, as is anything that takes a skin-tone
/// modifier.
pub const DEFAULT_LABELS: [&str; LABEL_COUNT] = [
    "😍", "❤️", "😭", "😊", "😘", "🤔", "🙄", "😡", "😎", "😱", "🥺", "💔", "🔥", "🎉", "💯",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmojiTaskConfig {
    pub label_set: Vec<String>,
    pub holdout_fraction: f64,
    pub seed: u64,
    /// Regions with fewer qualifying messages are dropped.
    pub min_examples_per_region: usize,
}

impl Default for EmojiTaskConfig {
    fn default() -> Self {
        EmojiTaskConfig {
            label_set: DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
            holdout_fraction: 0.5,
            seed: 42,
            min_examples_per_region: 1,
        }
    }
}

impl EmojiTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.label_set.len() != LABEL_COUNT {
            return Err(Error::Config(format!(
                "label set needs {LABEL_COUNT} emoji, got {}",
                self.label_set.len()
            )));
        }
        for label in &self.label_set {
            if !is_emoji_grapheme(label) || tokenize(label).len() != 1 {
                return Err(Error::Config(format!(
                    "label {label:?} is not a single emoji"
                )));
            }
        }
        let bases: HashSet<String> = self.label_set.iter().map(|l| emoji_base(l)).collect();
        if bases.len() != LABEL_COUNT {
            return Err(Error::Config("label set has repeated emoji".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout fraction must be in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Reads a label set as a JSON array (of strings, or of objects with an
/// `"emoji"` field as written by [`labels_json`]) or as whitespace-separated
/// emoji.
pub fn parse_label_set(text: &str) -> Result<Vec<String>> {
    let trimmed = text.trim_start();
    if !trimmed.starts_with('[') {
        return Ok(trimmed.split_whitespace().map(String::from).collect());
    }
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Plain(String),
        Described { emoji: String },
    }
    let entries: Vec<Entry> = serde_json::from_str(trimmed)?;
    Ok(entries
        .into_iter()
        .map(|e| match e {
            Entry::Plain(s) | Entry::Described { emoji: s } => s,
        })
        .collect())
}

/// Label map in index order.
pub fn labels_json(labels: &[String]) -> serde_json::Value {
    labels
        .iter()
        .enumerate()
        .map(|(index, emoji)| {
            serde_json::json!({
                "index": index,
                "emoji": emoji,
                "codepoints": codepoint_notation(emoji),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: u64,
    pub text: String,
    pub label: usize,
    pub region: RegionCode,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub records: u64,
    pub without_label: u64,
    pub multiple_labels: u64,
    pub duplicate_ids: u64,
    pub examples: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSplit {
    pub labels: Vec<String>,
    pub regions: BTreeMap<RegionCode, RegionSplit>,
    /// Regions below the example threshold with their example counts.
    pub dropped: BTreeMap<RegionCode, usize>,
    pub stats: BuildStats,
}

/// Which labels occur in `text`, and the text with those emoji removed.
fn mask_labels(text: &str, bases: &[String]) -> (Vec<usize>, String) {
    let mut found: Vec<usize> = Vec::new();
    let mut out = String::with_capacity(text.len());
    let mut copied = 0;
    for token in tokenize(text) {
        if token.kind != TokenKind::Emoji {
            continue;
        }
        let base = emoji_base(token.surface);
        let Some(label) = bases.iter().position(|b| *b == base) else {
            continue;
        };
        if !found.contains(&label) {
            found.push(label);
        }
        let start = token.surface.as_ptr() as usize - text.as_ptr() as usize;
        out.push_str(&text[copied..start]);
        copied = start + token.surface.len();
        // keep neighbors apart when the emoji was their only separator
        let left = out.chars().next_back().is_some_and(|c| !c.is_whitespace());
        let right = text[copied..]
            .chars()
            .next()
            .is_some_and(|c| !c.is_whitespace());
        if left && right {
            out.push(' ');
        }
    }
    out.push_str(&text[copied..]);
    (found, out)
}

/// Builds the per-region train/test datasets.
///
/// Repeated ids keep their first occurrence. Within each region and label
/// `round(n · holdout)` examples go to test; both halves keep stream order.
pub fn build_task<I>(records: I, config: &EmojiTaskConfig) -> Result<TaskSplit>
where
    I: IntoIterator<Item = TweetRecord>,
{
    config.validate()?;
    let bases: Vec<String> = config.label_set.iter().map(|l| emoji_base(l)).collect();
    let mut stats = BuildStats::default();
    let mut seen_ids = HashSet::new();
    let mut per_region: BTreeMap<RegionCode, Vec<LabeledExample>> = BTreeMap::new();

    for record in records {
        stats.records += 1;
        if !seen_ids.insert(record.id) {
            stats.duplicate_ids += 1;
            continue;
        }
        let (found, text) = mask_labels(&record.text, &bases);
        match found[..] {
            [] => stats.without_label += 1,
            [label] => {
                stats.examples += 1;
                per_region
                    .entry(record.region)
                    .or_default()
                    .push(LabeledExample {
                        id: record.id,
                        text,
                        label,
                        region: record.region,
                    });
            }
            _ => stats.multiple_labels += 1,
        }
    }
    if stats.examples == 0 {
        return Err(Error::Degenerate(
            "no message contains exactly one label emoji".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut regions = BTreeMap::new();
    let mut dropped = BTreeMap::new();
    for (region, examples) in per_region {
        if examples.len() < config.min_examples_per_region {
            dropped.insert(region, examples.len());
            continue;
        }
        let mut in_test = vec![false; examples.len()];
        for label in 0..LABEL_COUNT {
            let mut idx: Vec<usize> = (0..examples.len())
                .filter(|&i| examples[i].label == label)
                .collect();
            let n_test = (idx.len() as f64 * config.holdout_fraction).round() as usize;
            idx.shuffle(&mut rng);
            for &i in &idx[..n_test] {
                in_test[i] = true;
            }
        }
        let mut split = RegionSplit::default();
        for (example, test) in examples.into_iter().zip(in_test) {
            if test {
                split.test.push(example);
            } else {
                split.train.push(example);
            }
        }
        regions.insert(region, split);
    }
    Ok(TaskSplit {
        labels: config.label_set.clone(),
        regions,
        dropped,
        stats,
    })
}

#[derive(Serialize, Deserialize)]
struct ExampleLine {
    text: String,
    label: usize,
    id: u64,
}

/// One `{"text", "label", "id"}` object per line.
pub fn write_examples<W: Write>(examples: &[LabeledExample], mut out: W) -> Result<()> {
    for e in examples {
        let line = ExampleLine {
            text: e.text.clone(),
            label: e.label,
            id: e.id,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_examples(path: impl AsRef<Path>, region: RegionCode) -> Result<Vec<LabeledExample>> {
    let path = path.as_ref();
    let reader = std::io::BufReader::new(open_input(path)?);
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ExampleLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        examples.push(LabeledExample {
            id: parsed.id,
            text: parsed.text,
            label: parsed.label,
            region,
        });
    }
    Ok(examples)
}

/// One label index per line; blank lines are ignored.
pub fn read_predictions(path: impl AsRef<Path>, n_labels: usize) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let reader = std::io::BufReader::new(open_input(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label = line
            .parse::<usize>()
            .ok()
            .filter(|&l| l < n_labels)
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("expected a label index below {n_labels}, got {line:?}"),
            })?;
        out.push(label);
    }
    Ok(out)
}

/// Fraction of predictions equal to the gold label.
pub fn evaluate(predictions: &[usize], gold: &[LabeledExample]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Degenerate("no gold examples to score".into()));
    }
    let hits = predictions
        .iter()
        .zip(gold)
        .filter(|(p, g)| **p == g.label)
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Accuracy of each model (rows) on each region's test set (columns).
/// Model codes are region codes or `ALL`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    pub models: Vec<String>,
    pub regions: Vec<RegionCode>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl AccuracyMatrix {
    pub fn new(models: Vec<String>, regions: Vec<RegionCode>) -> Self {
        let values = vec![vec![None; regions.len()]; models.len()];
        AccuracyMatrix {
            models,
            regions,
            values,
        }
    }

    pub fn set(&mut self, model: &str, region: RegionCode, accuracy: f64) -> Result<()> {
        let m = self
            .models
            .iter()
            .position(|x| x == model)
            .ok_or_else(|| Error::Config(format!("unknown model {model}")))?;
        let r = self
            .regions
            .iter()
            .position(|&x| x == region)
            .ok_or_else(|| Error::Config(format!("unknown region {region}")))?;
        self.values[m][r] = Some(accuracy);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// `ranks[m][r]`, absent where the model has no score.
    pub ranks: Vec<Vec<Option<usize>>>,
    /// Rank of a region's own model on its own test set.
    pub local_rank: BTreeMap<RegionCode, usize>,
    pub top5: BTreeMap<RegionCode, Vec<String>>,
}

/// Per-region competition ranking by descending accuracy: tied models share
/// the best rank of their group and the next rank skips accordingly.
pub fn rank_models(acc: &AccuracyMatrix) -> Result<Ranking> {
    if acc.values.len() != acc.models.len()
        || acc.values.iter().any(|row| row.len() != acc.regions.len())
    {
        return Err(Error::Config(
            "accuracy matrix shape does not match its labels".into(),
        ));
    }
    if acc
        .values
        .iter()
        .flatten()
        .flatten()
        .any(|v| !v.is_finite())
    {
        return Err(Error::Domain(
            "accuracy matrix holds a non-finite value".into(),
        ));
    }
    let mut ranks = vec![vec![None; acc.regions.len()]; acc.models.len()];
    let mut local_rank = BTreeMap::new();
    let mut top5 = BTreeMap::new();
    for (r, &region) in acc.regions.iter().enumerate() {
        let column: Vec<(usize, f64)> = (0..acc.models.len())
            .filter_map(|m| acc.values[m][r].map(|v| (m, v)))
            .collect();
        for &(m, v) in &column {
            let better = column.iter().filter(|&&(_, w)| w > v).count();
            ranks[m][r] = Some(better + 1);
        }
        let mut order: Vec<usize> = column.iter().map(|&(m, _)| m).collect();
        order.sort_by(|&a, &b| {
            ranks[a][r]
                .cmp(&ranks[b][r])
                .then_with(|| acc.models[a].cmp(&acc.models[b]))
        });
        top5.insert(
            region,
            order
                .iter()
                .take(5)
                .map(|&m| acc.models[m].clone())
                .collect(),
        );
        if let Some(m) = acc.models.iter().position(|x| x == region.as_str()) {
            if let Some(rank) = ranks[m][r] {
                local_rank.insert(region, rank);
            }
        }
    }
    Ok(Ranking {
        ranks,
        local_rank,
        top5,
    })
}

/// Mean rank of each model over all regions, in model order.
pub fn average_rank(acc: &AccuracyMatrix, ranking: &Ranking) -> Result<Vec<f64>> {
    if acc.regions.is_empty() {
        return Err(Error::Degenerate("no regions to average over".into()));
    }
    acc.models
        .iter()
        .zip(&ranking.ranks)
        .map(|(model, row)| {
            let mut sum = 0usize;
            for (r, rank) in row.iter().enumerate() {
                sum += rank.ok_or_else(|| Error::MissingRank {
                    model: model.clone(),
                    region: acc.regions[r].to_string(),
                })?;
            }
            Ok(sum as f64 / row.len() as f64)
        })
        .collect()
}

/// Everything needed to print accuracy and rank tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<String>,
    pub regions: Vec<RegionCode>,
    pub accuracy: BTreeMap<String, BTreeMap<RegionCode, Option<f64>>>,
    pub ranks: BTreeMap<String, BTreeMap<RegionCode, Option<usize>>>,
    pub local_rank: BTreeMap<RegionCode, usize>,
    pub avg_rank: BTreeMap<String, f64>,
    pub top5: BTreeMap<RegionCode, Vec<String>>,
}

impl EvalReport {
    pub fn from_accuracy(acc: &AccuracyMatrix) -> Result<Self> {
        let ranking = rank_models(acc)?;
        let avg = average_rank(acc, &ranking)?;
        fn by_region<T: Copy>(
            regions: &[RegionCode],
            row: &[Option<T>],
        ) -> BTreeMap<RegionCode, Option<T>> {
            regions.iter().copied().zip(row.iter().copied()).collect()
        }
        Ok(EvalReport {
            models: acc.models.clone(),
            regions: acc.regions.clone(),
            accuracy: acc
                .models
                .iter()
                .cloned()
                .zip(acc.values.iter().map(|row| by_region(&acc.regions, row)))
                .collect(),
            ranks: acc
                .models
                .iter()
                .cloned()
                .zip(ranking.ranks.iter().map(|row| by_region(&acc.regions, row)))
                .collect(),
            local_rank: ranking.local_rank,
            avg_rank: acc.models.iter().cloned().zip(avg).collect(),
            top5: ranking.top5,
        })
    }
}

/// Nearest-centroid baseline over mean token vectors.
pub struct CentroidPredictor<'a> {
    table: &'a EmbeddingTable,
    config: NormalizationConfig,
    centroids: Vec<Option<Vec<f64>>>,
    majority: usize,
}

impl<'a> CentroidPredictor<'a> {
    pub fn train(
        train: &[LabeledExample],
        table: &'a EmbeddingTable,
        n_labels: usize,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Degenerate("empty training set".into()));
        }
        let config = NormalizationConfig::default();
        let mut counts = vec![0usize; n_labels];
        let mut sums = vec![vec![0.0; table.dim()]; n_labels];
        let mut members = vec![0usize; n_labels];
        for example in train {
            if example.label >= n_labels {
                return Err(Error::Config(format!(
                    "label {} out of range",
                    example.label
                )));
            }
            counts[example.label] += 1;
            if let Some(v) = text_vector(table, &config, &example.text) {
                for (s, x) in sums[example.label].iter_mut().zip(v) {
                    *s += x;
                }
                members[example.label] += 1;
            }
        }
        let centroids = sums
            .into_iter()
            .zip(members)
            .map(|(sum, n)| {
                (n > 0)
                    .then(|| sum.into_iter().map(|x| x / n as f64).collect::<Vec<_>>())
                    .filter(|c| c.iter().any(|&x| x != 0.0))
            })
            .collect();
        // first index wins ties
        let majority = (0..n_labels).rev().max_by_key(|&l| counts[l]).unwrap_or(0);
        Ok(CentroidPredictor {
            table,
            config,
            centroids,
            majority,
        })
    }

    pub fn majority_label(&self) -> usize {
        self.majority
    }

    pub fn predict(&self, text: &str) -> usize {
        let Some(v) = text_vector(self.table, &self.config, text) else {
            return self.majority;
        };
        let mut best: Option<(f64, usize)> = None;
        for (label, centroid) in self.centroids.iter().enumerate() {
            let Some(c) = centroid else { continue };
            let Ok(d) = cosine_distance(&v, c) else {
                continue;
            };
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, label));
            }
        }
        best.map_or(self.majority, |(_, label)| label)
    }
}

/// Mean vector of the in-vocabulary tokens, or `None` when there are none
/// or they cancel out.
fn text_vector(
    table: &EmbeddingTable,
    config: &NormalizationConfig,
    text: &str,
) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; table.dim()];
    let mut n = 0usize;
    for token in normalized_tokens(text, config) {
        if let Some(v) = table.get(&token) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
    }
    if n == 0 || sum.iter().all(|&x| x == 0.0) {
        return None;
    }
    Some(sum.into_iter().map(|x| x / n as f64).collect())
}
