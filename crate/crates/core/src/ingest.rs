//! Streaming reader for newline-delimited JSON message corpora.
//!
//! One record per line:
//! `{"id": 1, "text": "...", "country": "MX", "retweet": false, "lang": "es"}`
//! with an optional `"source"` string naming the posting application.
//! Files ending in `.gz` are decompressed on the fly.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::ops::AddAssign;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::MultiGzDecoder;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::region::RegionSet;
use crate::textnorm::{contains_url, tokenize};
use crate::{Error, RegionCode, Result};

const MAX_WARNINGS_PER_FILE: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: u64,
    pub text: String,
    #[serde(rename = "country")]
    pub region: RegionCode,
    #[serde(rename = "retweet")]
    pub is_retweet: bool,
    pub lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterProfile {
    pub min_tokens: usize,
    pub drop_retweets: bool,
    pub drop_urls: bool,
    pub require_lang: Option<String>,
    /// Case-insensitive substrings of `source` that mark template-generated
    /// messages (check-in apps and the like).
    #[serde(default)]
    pub source_denylist: Vec<String>,
}

impl FilterProfile {
    /// Corpus statistics: at least five tokens, no retweets.
    pub fn corpus() -> Self {
        FilterProfile {
            min_tokens: 5,
            drop_retweets: true,
            drop_urls: false,
            require_lang: None,
            source_denylist: Vec::new(),
        }
    }

    /// Embedding training: at least seven tokens, no retweets, no URLs.
    pub fn embedding() -> Self {
        FilterProfile {
            min_tokens: 7,
            drop_urls: true,
            ..Self::corpus()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_tokens == 0 {
            return Err(Error::Config("min_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Corpus,
    Embedding,
}

impl Profile {
    pub fn filter(self) -> FilterProfile {
        match self {
            Profile::Corpus => FilterProfile::corpus(),
            Profile::Embedding => FilterProfile::embedding(),
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corpus" => Ok(Profile::Corpus),
            "embedding" => Ok(Profile::Embedding),
            other => Err(Error::Config(format!(
                "unknown profile {other:?} (expected corpus or embedding)"
            ))),
        }
    }
}

/// Why a well-formed record was filtered out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Retweet,
    Language,
    Source,
    Url,
    TooShort,
}

/// Number of tokens counted by the length filter: words, emoji and
/// punctuation of the raw text.
pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

pub fn rejection(record: &TweetRecord, profile: &FilterProfile) -> Option<Rejection> {
    if profile.drop_retweets && record.is_retweet {
        return Some(Rejection::Retweet);
    }
    if let Some(lang) = &profile.require_lang {
        if !record.lang.eq_ignore_ascii_case(lang) {
            return Some(Rejection::Language);
        }
    }
    if let Some(source) = &record.source {
        let source = source.to_lowercase();
        if profile
            .source_denylist
            .iter()
            .any(|deny| source.contains(&deny.to_lowercase()))
        {
            return Some(Rejection::Source);
        }
    }
    if profile.drop_urls && contains_url(&record.text) {
        return Some(Rejection::Url);
    }
    if token_count(&record.text) < profile.min_tokens {
        return Some(Rejection::TooShort);
    }
    None
}

pub fn filter_record(record: &TweetRecord, profile: &FilterProfile) -> bool {
    rejection(record, profile).is_none()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub retweet: u64,
    pub language: u64,
    pub source: u64,
    pub url: u64,
    pub too_short: u64,
}

impl FilterCounts {
    pub fn total(&self) -> u64 {
        self.retweet + self.language + self.source + self.url + self.too_short
    }

    fn record(&mut self, why: Rejection) {
        match why {
            Rejection::Retweet => self.retweet += 1,
            Rejection::Language => self.language += 1,
            Rejection::Source => self.source += 1,
            Rejection::Url => self.url += 1,
            Rejection::TooShort => self.too_short += 1,
        }
    }
}

impl AddAssign for FilterCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.retweet += rhs.retweet;
        self.language += rhs.language;
        self.source += rhs.source;
        self.url += rhs.url;
        self.too_short += rhs.too_short;
    }
}

/// Line accounting: `lines == kept + filtered + malformed`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: u64,
    pub kept: u64,
    pub filtered: u64,
    pub malformed: u64,
    pub filtered_by: FilterCounts,
}

impl AddAssign for IngestStats {
    fn add_assign(&mut self, rhs: Self) {
        self.lines += rhs.lines;
        self.kept += rhs.kept;
        self.filtered += rhs.filtered;
        self.malformed += rhs.malformed;
        self.filtered_by += rhs.filtered_by;
    }
}

/// Parses and validates one line; the error string explains the rejection.
pub fn parse_record(line: &str, regions: &RegionSet) -> std::result::Result<TweetRecord, String> {
    let record: TweetRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if record.text.is_empty() {
        return Err("empty text".into());
    }
    if !regions.contains(&record.region) {
        return Err(format!("unknown region {}", record.region));
    }
    Ok(record)
}

/// Iterator over the records of one file that pass a [`FilterProfile`].
pub struct CorpusReader {
    path: PathBuf,
    reader: Box<dyn BufRead + Send>,
    profile: FilterProfile,
    regions: RegionSet,
    stats: IngestStats,
    buf: Vec<u8>,
}

impl CorpusReader {
    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn malformed(&mut self, message: &str) {
        self.stats.malformed += 1;
        if self.stats.malformed <= MAX_WARNINGS_PER_FILE {
            warn!(
                "{}:{}: skipping malformed line: {message}",
                self.path.display(),
                self.stats.lines
            );
        }
    }
}

impl Iterator for CorpusReader {
    type Item = Result<TweetRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => {
                    if self.stats.malformed > MAX_WARNINGS_PER_FILE {
                        warn!(
                            "{}: {} malformed lines skipped in total",
                            self.path.display(),
                            self.stats.malformed
                        );
                    }
                    return None;
                }
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
            self.stats.lines += 1;
            let line = match std::str::from_utf8(&self.buf) {
                Ok(line) => line.trim_end_matches(['\n', '\r']),
                Err(_) => {
                    self.malformed("invalid UTF-8");
                    continue;
                }
            };
            let parsed = parse_record(line, &self.regions);
            match parsed {
                Err(message) => self.malformed(&message),
                Ok(record) => match rejection(&record, &self.profile) {
                    Some(why) => {
                        self.stats.filtered += 1;
                        self.stats.filtered_by.record(why);
                    }
                    None => {
                        self.stats.kept += 1;
                        return Some(Ok(record));
                    }
                },
            }
        }
    }
}

/// Opens a file for reading, gunzipping it when the name ends in `.gz`.
pub(crate) fn open_input(path: &Path) -> Result<Box<dyn Read + Send>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(if path.extension().is_some_and(|ext| ext == "gz") {
        Box::new(MultiGzDecoder::new(file))
    } else {
        Box::new(file)
    })
}

/// Opens a corpus file. Failing to open is fatal; bad lines are not.
pub fn read_corpus(
    path: impl AsRef<Path>,
    profile: &FilterProfile,
    regions: &RegionSet,
) -> Result<CorpusReader> {
    profile.validate()?;
    let path = path.as_ref();
    let inner = open_input(path)?;
    Ok(CorpusReader {
        path: path.to_path_buf(),
        reader: Box::new(BufReader::with_capacity(1 << 16, inner)),
        profile: profile.clone(),
        regions: regions.clone(),
        stats: IngestStats::default(),
        buf: Vec::new(),
    })
}

/// Reads several files on the current rayon pool and concatenates the kept
/// records in input-file order.
pub fn read_corpora<P: AsRef<Path> + Sync>(
    paths: &[P],
    profile: &FilterProfile,
    regions: &RegionSet,
) -> Result<(Vec<TweetRecord>, IngestStats)> {
    let per_file: Vec<(Vec<TweetRecord>, IngestStats)> = paths
        .par_iter()
        .map(|path| {
            let mut reader = read_corpus(path, profile, regions)?;
            let records = reader.by_ref().collect::<Result<Vec<_>>>()?;
            Ok((records, reader.stats()))
        })
        .collect::<Result<_>>()?;
    let mut all = Vec::new();
    let mut stats = IngestStats::default();
    for (records, file_stats) in per_file {
        all.extend(records);
        stats += file_stats;
    }
    Ok((all, stats))
}
