//! Region affinity matrices and emoji usage rankings.
//!
//! An affinity matrix holds pairwise cosine distances between regions: zero
//! on the diagonal, symmetric, and in `[0, 1]` for non-negative vectors.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::TweetRecord;
use crate::textnorm::{codepoint_notation, extract_emojis};
use crate::vocab::RegionVocabulary;
use crate::{Error, RegionCode, Result};

/// Dense column ids over the union of several vocabularies, in
/// lexicographic token order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenIndex {
    ids: BTreeMap<String, u32>,
    tokens: Vec<String>,
}

impl TokenIndex {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut sorted: Vec<String> = tokens.into_iter().map(Into::into).collect();
        sorted.sort_unstable();
        sorted.dedup();
        let ids = sorted
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        TokenIndex {
            ids,
            tokens: sorted,
        }
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

pub fn union_vocabulary(vocabs: &[RegionVocabulary]) -> TokenIndex {
    TokenIndex::from_tokens(vocabs.iter().flat_map(|v| v.counts().keys().cloned()))
}

/// Sparse count vector of one region, entries sorted by column id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyVector {
    pub region: RegionCode,
    entries: Vec<(u32, u64)>,
}

impl FrequencyVector {
    pub fn new(region: RegionCode, mut entries: Vec<(u32, u64)>) -> Result<Self> {
        entries.sort_unstable_by_key(|&(id, _)| id);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config(format!("duplicate column id in {region}")));
        }
        if entries.iter().any(|&(_, n)| n == 0) {
            return Err(Error::Config(format!("zero count stored in {region}")));
        }
        Ok(FrequencyVector { region, entries })
    }

    pub fn from_vocabulary(vocab: &RegionVocabulary, index: &TokenIndex) -> Result<Self> {
        let entries = vocab
            .counts()
            .iter()
            .map(|(token, &n)| {
                index
                    .id(token)
                    .map(|id| (id, n))
                    .ok_or_else(|| Error::Config(format!("token {token:?} missing from index")))
            })
            .collect::<Result<Vec<_>>>()?;
        FrequencyVector::new(vocab.region(), entries)
    }

    pub fn entries(&self) -> &[(u32, u64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Cosine distance between two count vectors.
///
/// Each vector is divided by the gcd of its counts and the products are
/// accumulated in exact integer arithmetic, so multiplying a region's counts
/// by any integer factor leaves the result bit-identical.
pub fn cosine_distance_counts(u: &FrequencyVector, v: &FrequencyVector) -> Result<f64> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::Domain(format!(
            "cosine distance of a zero vector ({} vs {})",
            u.region, v.region
        )));
    }
    let gu = u.entries.iter().fold(0, |g, &(_, n)| gcd(g, n));
    let gv = v.entries.iter().fold(0, |g, &(_, n)| gcd(g, n));
    let norm = |entries: &[(u32, u64)], g: u64| -> u128 {
        entries
            .iter()
            .map(|&(_, n)| {
                let n = (n / g) as u128;
                n * n
            })
            .sum()
    };
    let (nu, nv) = (norm(&u.entries, gu), norm(&v.entries, gv));

    let (mut i, mut j) = (0, 0);
    let mut dot: u128 = 0;
    while i < u.entries.len() && j < v.entries.len() {
        let (a, b) = (u.entries[i], v.entries[j]);
        match a.0.cmp(&b.0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += (a.1 / gu) as u128 * (b.1 / gv) as u128;
                i += 1;
                j += 1;
            }
        }
    }
    let cos = dot as f64 / (nu as f64 * nv as f64).sqrt();
    Ok((1.0 - cos).clamp(0.0, 1.0))
}

/// `1 − u·v / (‖u‖‖v‖)` for dense real vectors, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Domain(format!(
            "vector lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum();
    let nv: f64 = v.iter().map(|b| b * b).sum();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Domain("cosine distance of a zero vector".into()));
    }
    Ok((1.0 - dot / (nu * nv).sqrt()).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    pub labels: Vec<RegionCode>,
    pub values: Vec<Vec<f64>>,
}

impl AffinityMatrix {
    /// Evaluates `distance(i, j)` for every `i < j` in parallel and mirrors
    /// it; the diagonal is exactly zero.
    pub fn from_pairwise<F>(labels: Vec<RegionCode>, distance: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        let n = labels.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let upper: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| distance(i, j))
            .collect::<Result<_>>()?;
        let mut values = vec![vec![0.0; n]; n];
        for (&(i, j), d) in pairs.iter().zip(upper) {
            values[i][j] = d;
            values[j][i] = d;
        }
        Ok(AffinityMatrix { labels, values })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, a: RegionCode, b: RegionCode) -> Option<f64> {
        let i = self.labels.iter().position(|&r| r == a)?;
        let j = self.labels.iter().position(|&r| r == b)?;
        Some(self.values[i][j])
    }

    /// Region codes in the first row and column, six decimals per cell.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "region")?;
        for label in &self.labels {
            write!(out, ",{label}")?;
        }
        writeln!(out)?;
        for (label, row) in self.labels.iter().zip(&self.values) {
            write!(out, "{label}")?;
            for v in row {
                write!(out, ",{v:.6}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// A matrix plus the regions left out because they had nothing to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityOutcome {
    pub matrix: AffinityMatrix,
    pub excluded: Vec<RegionCode>,
}

pub(crate) fn check_unique(labels: &[RegionCode]) -> Result<()> {
    let mut seen = labels.to_vec();
    seen.sort_unstable();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("region {} given twice", w[0])));
    }
    Ok(())
}

/// Cosine distances between the post-cutoff vocabularies of each region.
///
/// Regions whose vocabulary is empty are excluded with a warning.
pub fn lexical_affinity(vocabs: &[RegionVocabulary]) -> Result<AffinityOutcome> {
    let labels: Vec<RegionCode> = vocabs.iter().map(|v| v.region()).collect();
    check_unique(&labels)?;
    let (kept, empty): (Vec<&RegionVocabulary>, Vec<&RegionVocabulary>) =
        vocabs.iter().partition(|v| !v.is_empty());
    let excluded: Vec<RegionCode> = empty.iter().map(|v| v.region()).collect();
    for region in &excluded {
        warn!("{region}: empty vocabulary after cutoff, excluded from the lexical affinity matrix");
    }
    if kept.len() < 2 {
        return Err(Error::Degenerate(format!(
            "lexical affinity needs at least 2 non-empty vocabularies, got {}",
            kept.len()
        )));
    }
    let index = TokenIndex::from_tokens(kept.iter().flat_map(|v| v.counts().keys().cloned()));
    let vectors = kept
        .iter()
        .map(|v| FrequencyVector::from_vocabulary(v, &index))
        .collect::<Result<Vec<_>>>()?;
    let matrix =
        AffinityMatrix::from_pairwise(kept.iter().map(|v| v.region()).collect(), |i, j| {
            cosine_distance_counts(&vectors[i], &vectors[j])
        })?;
    Ok(AffinityOutcome { matrix, excluded })
}

/// Emoji tallies keyed by base emoji or by a lone skin-tone modifier.
pub type EmojiCounts = HashMap<String, u64>;

/// Counts base emoji (modifiers stripped) and, separately, every skin-tone
/// modifier as its own entry.
pub fn count_emojis<S: AsRef<str> + Sync>(texts: &[S]) -> EmojiCounts {
    texts
        .par_iter()
        .fold(EmojiCounts::new, |mut counts, text| {
            for occ in extract_emojis(text.as_ref()) {
                if !occ.base.is_empty() {
                    *counts.entry(occ.base).or_insert(0) += 1;
                }
                for tone in occ.skin_tones {
                    *counts.entry(tone.as_char().to_string()).or_insert(0) += 1;
                }
            }
            counts
        })
        .reduce(EmojiCounts::new, crate::vocab::merge_counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmojiRanking {
    pub region: RegionCode,
    pub ranked: Vec<(String, u64)>,
}

impl EmojiRanking {
    /// Top `top_k` entries by count; ties go to the lower code point sequence.
    pub fn from_counts(region: RegionCode, counts: EmojiCounts, top_k: usize) -> Result<Self> {
        if top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(top_k);
        Ok(EmojiRanking { region, ranked })
    }
}

/// Ranking over the records of `region`; records of other regions are ignored.
pub fn emoji_ranking<'a, I>(records: I, region: RegionCode, top_k: usize) -> Result<EmojiRanking>
where
    I: IntoIterator<Item = &'a TweetRecord>,
{
    let texts: Vec<&str> = records
        .into_iter()
        .filter(|r| r.region == region)
        .map(|r| r.text.as_str())
        .collect();
    EmojiRanking::from_counts(region, count_emojis(&texts), top_k)
}

/// `region,rank,emoji,count` with emoji written as `U+XXXX` sequences.
pub fn write_emoji_csv<W: Write>(rankings: &[EmojiRanking], mut out: W) -> std::io::Result<()> {
    writeln!(out, "region,rank,emoji,count")?;
    for ranking in rankings {
        for (i, (emoji, n)) in ranking.ranked.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                ranking.region,
                i + 1,
                codepoint_notation(emoji),
                n
            )?;
        }
    }
    Ok(())
}
