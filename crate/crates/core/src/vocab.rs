//! Regional vocabularies, the minimum-frequency cutoff, and Heaps/Zipf fits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::textnorm::{normalize, tokenize, NormalizationConfig};
use crate::{Error, RegionCode, Result};

/// Raw token counts. Merging two maps with [`merge_counts`] is associative
/// and commutative, so shards can be counted independently.
pub type Counts = HashMap<String, u64>;

pub fn merge_counts(mut a: Counts, b: Counts) -> Counts {
    if a.len() < b.len() {
        return merge_counts(b, a);
    }
    for (token, n) in b {
        *a.entry(token).or_insert(0) += n;
    }
    a
}

/// Counts normalized tokens of many texts in parallel. Returns the counts
/// and the number of token occurrences.
pub fn count_texts<S: AsRef<str> + Sync>(
    texts: &[S],
    config: &NormalizationConfig,
) -> (Counts, u64) {
    texts
        .par_iter()
        .fold(
            || (Counts::new(), 0u64),
            |(mut counts, mut total), text| {
                let normalized = normalize(text.as_ref(), config);
                for token in tokenize(&normalized) {
                    total += 1;
                    match counts.get_mut(token.surface) {
                        Some(n) => *n += 1,
                        None => {
                            counts.insert(token.surface.to_string(), 1);
                        }
                    }
                }
                (counts, total)
            },
        )
        .reduce(
            || (Counts::new(), 0),
            |(a, na), (b, nb)| (merge_counts(a, b), na + nb),
        )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionVocabulary {
    region: RegionCode,
    counts: BTreeMap<String, u64>,
    total_tokens: u64,
    min_count: u64,
}

impl RegionVocabulary {
    /// Applies the cutoff to raw counts; `total_tokens` is the pre-cutoff
    /// number of occurrences.
    pub fn from_counts(
        region: RegionCode,
        counts: Counts,
        total_tokens: u64,
        min_count: u64,
    ) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Config("min_count must be at least 1".into()));
        }
        let counts: BTreeMap<String, u64> = counts
            .into_iter()
            .filter(|&(_, n)| n >= min_count)
            .collect();
        let stored: u64 = counts.values().sum();
        if stored > total_tokens {
            return Err(Error::Config(format!(
                "counts sum to {stored} but total_tokens is {total_tokens}"
            )));
        }
        Ok(RegionVocabulary {
            region,
            counts,
            total_tokens,
            min_count,
        })
    }

    pub fn region(&self) -> RegionCode {
        self.region
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn get(&self, token: &str) -> Option<u64> {
        self.counts.get(token).copied()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Tokens by descending frequency, ties in lexicographic order.
    pub fn ranked_terms(&self) -> Vec<(&str, u64)> {
        let mut terms: Vec<(&str, u64)> =
            self.counts.iter().map(|(t, &n)| (t.as_str(), n)).collect();
        // BTreeMap order is lexicographic already; a stable sort keeps it for ties
        terms.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
        terms
    }

    /// `token<TAB>frequency` lines in rank order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (token, n) in self.ranked_terms() {
            writeln!(out, "{token}\t{n}")?;
        }
        Ok(())
    }
}

pub fn build_vocabulary<I, S>(
    tokens: I,
    region: RegionCode,
    min_count: u64,
) -> Result<RegionVocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts = Counts::new();
    let mut total = 0u64;
    for token in tokens {
        total += 1;
        let token = token.as_ref();
        match counts.get_mut(token) {
            Some(n) => *n += 1,
            None => {
                counts.insert(token.to_string(), 1);
            }
        }
    }
    RegionVocabulary::from_counts(region, counts, total, min_count)
}

/// Smallest admissible token frequency `N·α²/(N+α²)`: the frequency at which
/// the lower end of the normal-approximation confidence interval
/// `p̂ − α·se(p̂)` of the token's Bernoulli rate reaches zero.
///
/// `alpha` is the percent-point value (about 2 for 95% confidence).
pub fn min_frequency_cutoff(n: u64, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("sample size N must be at least 1".into()));
    }
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::Domain(format!(
            "percent point alpha must be a finite non-negative number, got {alpha}"
        )));
    }
    let n = n as f64;
    let a2 = alpha * alpha;
    Ok(n * a2 / (n + a2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    pub n: u64,
    pub alpha: f64,
    pub f_min: f64,
}

impl CutoffParams {
    pub fn new(n: u64, alpha: f64) -> Result<Self> {
        Ok(CutoffParams {
            n,
            alpha,
            f_min: min_frequency_cutoff(n, alpha)?,
        })
    }

    /// Smallest integer frequency that satisfies the cutoff.
    pub fn min_count(&self) -> u64 {
        (self.f_min.ceil() as u64).max(1)
    }
}

/// Values accepted by the log-log fits.
pub trait LogValue: Copy {
    fn to_f64(self) -> f64;
}

impl LogValue for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

impl LogValue for u64 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl LogValue for usize {
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Ordinary least squares fit of a power law in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawFit {
    /// α for Heaps (`V ∝ n^α`), β for Zipf (`f ∝ r^-β`).
    pub exponent: f64,
    /// Natural-log intercept.
    pub intercept: f64,
    pub r_squared: f64,
}

/// A fit together with the points it was computed from, as exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawFitExport {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

impl LawFitExport {
    pub fn new<T: LogValue>(fit: LawFit, points: &[(T, T)]) -> Self {
        LawFitExport {
            exponent: fit.exponent,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            points: points
                .iter()
                .map(|&(x, y)| (x.to_f64(), y.to_f64()))
                .collect(),
        }
    }
}

struct LineFit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
}

fn fit_log_log<T: LogValue>(points: &[(T, T)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(x, y) in points {
        let (x, y) = (x.to_f64(), y.to_f64());
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::Degenerate(format!(
                "log-log fit needs positive finite values, got ({x}, {y})"
            )));
        }
        xs.push(x.ln());
        ys.push(y.ln());
    }
    if ys.iter().all(|&y| y == ys[0]) && xs.iter().any(|&x| x != xs[0]) {
        return Ok(LineFit {
            slope: 0.0,
            intercept: ys[0],
            r_squared: 1.0,
        });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Log-spaced prefix lengths in `1..=len`, strictly increasing, ending at `len`.
pub fn log_spaced_sizes(len: u64, samples: usize) -> Vec<u64> {
    if len == 0 || samples == 0 {
        return Vec::new();
    }
    let mut sizes = Vec::with_capacity(samples);
    let log_len = (len as f64).ln();
    let last = samples.saturating_sub(1).max(1) as f64;
    for i in 0..samples {
        let n = ((log_len * i as f64 / last).exp().round() as u64).clamp(1, len);
        if sizes.last() != Some(&n) {
            sizes.push(n);
        }
    }
    if sizes.last() != Some(&len) {
        sizes.push(len);
    }
    sizes
}

pub const DEFAULT_HEAPS_SAMPLES: usize = 64;

/// Vocabulary size `V` after the first `n` tokens, at log-spaced `n`.
pub fn heaps_curve<T: Hash + Eq>(tokens: &[T], samples: usize) -> Result<Vec<(u64, u64)>> {
    if samples < 2 {
        return Err(Error::Config("heaps_curve needs at least 2 samples".into()));
    }
    if tokens.len() < 2 {
        return Err(Error::Degenerate(format!(
            "stream of {} tokens is too short for a Heaps curve",
            tokens.len()
        )));
    }
    let sizes = log_spaced_sizes(tokens.len() as u64, samples);
    let mut seen: HashSet<&T> = HashSet::new();
    let mut curve = Vec::with_capacity(sizes.len());
    let mut consumed = 0usize;
    for &n in &sizes {
        while (consumed as u64) < n {
            seen.insert(&tokens[consumed]);
            consumed += 1;
        }
        curve.push((n, seen.len() as u64));
    }
    Ok(curve)
}

/// Fits `log V = α·log n + c`.
pub fn fit_heaps<T: LogValue>(curve: &[(T, T)]) -> Result<LawFit> {
    let line = fit_log_log(curve)?;
    Ok(LawFit {
        exponent: line.slope,
        intercept: line.intercept,
        r_squared: line.r_squared,
    })
}

/// `(rank, frequency)` pairs, rank from 1, frequency descending with
/// lexicographic tie-break on the token.
pub fn zipf_ranks(vocab: &RegionVocabulary) -> Result<Vec<(u64, u64)>> {
    if vocab.is_empty() {
        return Err(Error::Degenerate(format!(
            "vocabulary of {} is empty",
            vocab.region()
        )));
    }
    Ok(vocab
        .ranked_terms()
        .into_iter()
        .enumerate()
        .map(|(i, (_, n))| (i as u64 + 1, n))
        .collect())
}

/// Inclusive rank window for the Zipf fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRange {
    pub lo: u64,
    pub hi: Option<u64>,
}

impl RankRange {
    pub fn contains(&self, rank: u64) -> bool {
        rank >= self.lo && self.hi.is_none_or(|hi| rank <= hi)
    }
}

/// Fits `log f = −β·log r + c` over the ranks in `range` (all when `None`).
pub fn fit_zipf<T: LogValue>(ranked: &[(T, T)], range: Option<RankRange>) -> Result<LawFit> {
    let selected: Vec<(T, T)> = match range {
        None => ranked.to_vec(),
        Some(range) => ranked
            .iter()
            .copied()
            .filter(|&(r, _)| {
                let r = r.to_f64();
                r >= range.lo as f64 && range.hi.is_none_or(|hi| r <= hi as f64)
            })
            .collect(),
    };
    let line = fit_log_log(&selected)?;
    Ok(LawFit {
        // + 0.0 turns a flat -0.0 slope into 0.0
        exponent: -line.slope + 0.0,
        intercept: line.intercept,
        r_squared: line.r_squared,
    })
}
