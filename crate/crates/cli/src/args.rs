//! Command-line and config-file options.
//!
//! Every option is global so it can be placed before or after the command
//! name and supplied from a `--config` file. File entries are injected ahead
//! of the real arguments; since each option keeps its last value, flags on
//! the command line win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, Subcommand};
use dialecto::ingest::Profile;

#[derive(Debug, Parser)]
#[command(
    name = "dialecto",
    version,
    about = "Regional corpus dialectometry pipelines"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub opts: Options,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Count lines, kept, filtered and malformed records per file and region.
    IngestStats,
    /// Per-region vocabularies after the frequency cutoff, as TSV.
    Vocab,
    /// Heaps and Zipf exponents per region.
    Laws,
    /// Cosine-distance matrix between regional vocabularies.
    LexicalAffinity,
    /// Most frequent emoji per region, skin tones counted separately.
    EmojiStats,
    /// Semantic affinity matrix from per-region embedding files.
    EmbAffinity,
    /// Build the Emoji-15 train/test splits.
    #[command(name = "emoji15-build")]
    Emoji15Build,
    /// Score prediction files against Emoji-15 test splits and rank models.
    #[command(name = "emoji15-eval")]
    Emoji15Eval,
    /// Print the minimum token frequency N·α²/(N+α²).
    Cutoff,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::IngestStats => "ingest-stats",
            Command::Vocab => "vocab",
            Command::Laws => "laws",
            Command::LexicalAffinity => "lexical-affinity",
            Command::EmojiStats => "emoji-stats",
            Command::EmbAffinity => "emb-affinity",
            Command::Emoji15Build => "emoji15-build",
            Command::Emoji15Eval => "emoji15-eval",
            Command::Cutoff => "cutoff",
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct Options {
    /// Input file; repeat for several. Corpus NDJSON (optionally .gz) or,
    /// for emb-affinity, text vector files named after their region.
    #[arg(long, global = true, action = ArgAction::Append)]
    pub input: Vec<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Record filter: corpus (default) or embedding (default for emoji15-build).
    #[arg(long, global = true)]
    pub profile: Option<Profile>,

    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Flat `key = value` file with defaults for any of these options.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 5)]
    pub min_count: u64,

    /// Neighbors per token in the embedding graphs.
    #[arg(long, global = true, default_value_t = 33)]
    pub k: usize,

    /// Tables a token must appear in to enter the common set.
    #[arg(long, global = true, default_value_t = 5)]
    pub min_regions: usize,

    #[arg(long, global = true, default_value_t = 32)]
    pub top_k: usize,

    /// Emoji-15 test fraction per region and label.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub holdout: f64,

    /// Emoji-15 label set: JSON array or whitespace-separated emoji.
    #[arg(long, global = true)]
    pub label_set: Option<PathBuf>,

    /// Emoji-15 regions with fewer examples are dropped.
    #[arg(long, global = true, default_value_t = 1)]
    pub min_examples: usize,

    /// Percent-point value of the cutoff interval. With vocab, laws and
    /// lexical-affinity it replaces --min-count by the derived cutoff.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    /// Sample size of the cutoff; defaults to each region's token count.
    #[arg(long = "N", global = true)]
    pub n: Option<u64>,

    /// Points on the Heaps growth curve.
    #[arg(long, global = true, default_value_t = 64)]
    pub heaps_samples: usize,

    /// Emoji-15 task directory as written by emoji15-build.
    #[arg(long, global = true)]
    pub task: Option<PathBuf>,

    /// Directory of `<MODEL>/<REGION>.txt` prediction files.
    #[arg(long, global = true)]
    pub predictions: Option<PathBuf>,

    /// `MODEL=PATH` embedding table for the nearest-centroid baseline.
    #[arg(long, global = true, action = ArgAction::Append)]
    pub embedding: Vec<String>,
}

/// Parses the process arguments, merging in a `--config` file when given.
pub fn parse() -> Cli {
    let argv: Vec<OsString> = std::env::args_os().collect();
    parse_from(argv)
}

pub fn parse_from(argv: Vec<OsString>) -> Cli {
    let Some(path) = config_path(&argv) else {
        return Cli::parse_from(argv);
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) => usage_error(&format!("cannot read config {}: {e}", path.display())),
    };
    let has_input = argv.iter().any(|a| {
        let a = a.to_string_lossy();
        a == "--input" || a.starts_with("--input=")
    });
    let injected = match config_args(&text, has_input) {
        Ok(args) => args,
        Err(message) => usage_error(&format!("{}: {message}", path.display())),
    };
    let mut full = Vec::with_capacity(argv.len() + injected.len());
    full.extend(argv.first().cloned());
    full.extend(injected.into_iter().map(OsString::from));
    full.extend(argv.into_iter().skip(1));
    Cli::parse_from(full)
}

fn usage_error(message: &str) -> ! {
    eprintln!("error: {message}");
    std::process::exit(2)
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(arg) = it.next() {
        let arg = arg.to_string_lossy();
        if arg == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(rest) = arg.strip_prefix("--config=") {
            return Some(Path::new(rest).to_path_buf());
        }
    }
    None
}

/// Turns `key = value` lines into `--key value` pairs. `input` accepts a
/// comma-separated list and is skipped when inputs are given as flags.
fn config_args(text: &str, skip_input: bool) -> Result<Vec<String>, String> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let key = key.trim();
        let value = unquote(value.trim());
        let flag = if key == "N" {
            "--N".to_string()
        } else {
            format!("--{}", key.replace('_', "-"))
        };
        match key {
            "config" => {
                return Err(format!(
                    "line {}: nested config files are not supported",
                    i + 1
                ))
            }
            "input" | "embedding" => {
                if key == "input" && skip_input {
                    continue;
                }
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    args.push(flag.clone());
                    args.push(unquote(item).to_string());
                }
            }
            _ => {
                args.push(flag);
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(s)
}
