//! Message normalization, tokenization, and emoji extraction.
//!
//! Tokens are built over extended grapheme clusters so that composed emoji
//! (ZWJ sequences, flags, keycaps, skin-tone modified emoji) stay single
//! units. Words are runs of alphanumeric graphemes (plus `_`); mentions,
//! hashtags, and URLs are single word tokens; everything else that is not
//! whitespace becomes a one-grapheme punctuation token.

use std::borrow::Cow;
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategoryGroup, UnicodeEmoji, UnicodeGeneralCategory};
use unicode_segmentation::UnicodeSegmentation;

pub const MASK_USER: &str = "usr";
pub const MASK_NUMBER: &str = "0";
pub const MASK_EMOJI: &str = "emo";
pub const MASK_URL: &str = "_url";
/// Replacement for symbols outside every recognized character class.
pub const PLACEHOLDER: &str = "_";

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];
const VS16: char = '\u{FE0F}';
const KEYCAP: char = '\u{20E3}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Word,
    Emoji,
    Punct,
    Mask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token<'a> {
    pub surface: &'a str,
    pub kind: TokenKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    /// Drop combining marks after canonical decomposition (`ñ` → `n`) and
    /// fold any remaining non-ASCII symbol to [`PLACEHOLDER`].
    pub strip_diacritics: bool,
    pub mask_users: bool,
    pub mask_numbers: bool,
    pub mask_emojis: bool,
    pub mask_urls: bool,
    pub keep_punct: bool,
}

impl Default for NormalizationConfig {
    /// The corpus preprocessing: every mask on except emoji, punctuation kept.
    fn default() -> Self {
        NormalizationConfig {
            lowercase: true,
            strip_diacritics: true,
            mask_users: true,
            mask_numbers: true,
            mask_emojis: false,
            mask_urls: true,
            keep_punct: true,
        }
    }
}

impl NormalizationConfig {
    pub fn all() -> Self {
        NormalizationConfig {
            mask_emojis: true,
            ..Self::default()
        }
    }

    pub fn none() -> Self {
        NormalizationConfig {
            lowercase: false,
            strip_diacritics: false,
            mask_users: false,
            mask_numbers: false,
            mask_emojis: false,
            mask_urls: false,
            keep_punct: true,
        }
    }
}

/// Fitzpatrick skin-tone modifiers U+1F3FB..U+1F3FF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SkinTone {
    Light,
    MediumLight,
    Medium,
    MediumDark,
    Dark,
}

impl SkinTone {
    pub const ALL: [SkinTone; 5] = [
        SkinTone::Light,
        SkinTone::MediumLight,
        SkinTone::Medium,
        SkinTone::MediumDark,
        SkinTone::Dark,
    ];

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '\u{1F3FB}' => Some(SkinTone::Light),
            '\u{1F3FC}' => Some(SkinTone::MediumLight),
            '\u{1F3FD}' => Some(SkinTone::Medium),
            '\u{1F3FE}' => Some(SkinTone::MediumDark),
            '\u{1F3FF}' => Some(SkinTone::Dark),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            SkinTone::Light => '\u{1F3FB}',
            SkinTone::MediumLight => '\u{1F3FC}',
            SkinTone::Medium => '\u{1F3FD}',
            SkinTone::MediumDark => '\u{1F3FE}',
            SkinTone::Dark => '\u{1F3FF}',
        }
    }
}

impl fmt::Display for SkinTone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// One emoji grapheme with its skin-tone modifiers separated out.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EmojiOccurrence {
    /// The grapheme without skin-tone modifiers or U+FE0F. Empty when the
    /// grapheme was a lone modifier.
    pub base: String,
    /// Modifiers in order of appearance; multi-person sequences may carry two.
    pub skin_tones: Vec<SkinTone>,
}

impl EmojiOccurrence {
    pub fn skin_tone(&self) -> Option<SkinTone> {
        self.skin_tones.first().copied()
    }
}

/// True when the grapheme cluster is rendered as an emoji.
pub fn is_emoji_grapheme(g: &str) -> bool {
    let mut chars = g.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    if first.is_ascii() {
        // '#', '*' and digits carry Emoji=Yes but are only emoji as keycaps
        return g.contains(KEYCAP);
    }
    first.is_emoji_char()
}

fn is_mark(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Mark
}

fn is_separator_grapheme(g: &str) -> bool {
    let Some(first) = g.chars().next() else {
        return true;
    };
    first.is_whitespace()
        || is_mark(first)
        || g.chars()
            .all(|c| c.general_category_group() == GeneralCategoryGroup::Other)
}

fn is_word_grapheme(g: &str) -> bool {
    g.chars()
        .next()
        .is_some_and(|c| c == '_' || c.is_alphanumeric())
}

fn starts_with_url(s: &str) -> bool {
    URL_PREFIXES.iter().any(|p| {
        s.get(..p.len())
            .is_some_and(|head| head.eq_ignore_ascii_case(p))
    })
}

fn is_url(s: &str) -> bool {
    starts_with_url(s)
}

/// Case-insensitive URL test used by the corpus filters.
pub fn contains_url(text: &str) -> bool {
    let lower = text.to_lowercase();
    URL_PREFIXES.iter().any(|p| lower.contains(p))
}

fn is_mention(s: &str) -> bool {
    s.len() > 1 && s.starts_with('@')
}

/// Extended grapheme clusters, except that a leading prepend character
/// (which would otherwise glue onto whitespace or punctuation) is split off.
fn segment(text: &str) -> Vec<(usize, &str)> {
    let mut units = Vec::new();
    for (pos, g) in text.grapheme_indices(true) {
        push_units(pos, g, &mut units);
    }
    units
}

fn push_units<'a>(pos: usize, g: &'a str, units: &mut Vec<(usize, &'a str)>) {
    let mut chars = g.chars();
    let first = chars.next();
    match first {
        Some(c) if !c.is_ascii() && chars.next().is_some() && is_prepend(c) => {
            let split = c.len_utf8();
            units.push((pos, &g[..split]));
            for (off, rest) in g[split..].grapheme_indices(true) {
                push_units(pos + split + off, rest, units);
            }
        }
        _ => units.push((pos, g)),
    }
}

fn is_prepend(c: char) -> bool {
    let mut probe = String::with_capacity(8);
    probe.push(c);
    probe.push('a');
    probe.graphemes(true).nth(1).is_none()
}

pub fn tokenize(text: &str) -> Vec<Token<'_>> {
    let graphemes = segment(text);
    let end_of = |j: usize| graphemes.get(j).map_or(text.len(), |&(pos, _)| pos);
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < graphemes.len() {
        let (start, g) = graphemes[i];
        if is_separator_grapheme(g) {
            i += 1;
            continue;
        }
        if is_emoji_grapheme(g) {
            tokens.push(Token {
                surface: g,
                kind: TokenKind::Emoji,
            });
            i += 1;
            continue;
        }

        let mut j = i + 1;
        let kind = if starts_with_url(&text[start..]) {
            while j < graphemes.len()
                && !is_separator_grapheme(graphemes[j].1)
                && !is_emoji_grapheme(graphemes[j].1)
            {
                j += 1;
            }
            TokenKind::Word
        } else if is_word_grapheme(g)
            || ((g == "@" || g == "#")
                && graphemes
                    .get(i + 1)
                    .is_some_and(|&(_, next)| is_word_grapheme(next)))
        {
            while j < graphemes.len() && is_word_grapheme(graphemes[j].1) {
                j += 1;
            }
            TokenKind::Word
        } else {
            TokenKind::Punct
        };

        let surface = &text[start..end_of(j)];
        let kind = match kind {
            TokenKind::Word if surface == MASK_URL || surface == PLACEHOLDER => TokenKind::Mask,
            other => other,
        };
        tokens.push(Token { surface, kind });
        i = j;
    }
    tokens
}

/// Normalizes a message and returns its tokens joined by single spaces.
///
/// Applying `normalize` twice with the same configuration gives the same
/// string as applying it once.
pub fn normalize(text: &str, config: &NormalizationConfig) -> String {
    let mut out = String::with_capacity(text.len());
    for token in tokenize(text) {
        let piece: Cow<'_, str> = match token.kind {
            TokenKind::Emoji if config.mask_emojis => Cow::Borrowed(MASK_EMOJI),
            TokenKind::Emoji => Cow::Borrowed(token.surface),
            TokenKind::Punct if !config.keep_punct => continue,
            TokenKind::Punct => fold_punct(token.surface, config),
            TokenKind::Word | TokenKind::Mask => {
                if is_url(token.surface) {
                    if config.mask_urls {
                        Cow::Borrowed(MASK_URL)
                    } else {
                        fold_word(token.surface, config, false)
                    }
                } else if is_mention(token.surface) && config.mask_users {
                    Cow::Borrowed(MASK_USER)
                } else {
                    fold_word(token.surface, config, config.mask_numbers)
                }
            }
        };
        if piece.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&piece);
    }
    out
}

/// Normalizes and tokenizes in one step, returning owned surfaces.
pub fn normalized_tokens(text: &str, config: &NormalizationConfig) -> Vec<String> {
    let normalized = normalize(text, config);
    tokenize(&normalized)
        .into_iter()
        .map(|t| t.surface.to_string())
        .collect()
}

fn strip_marks(s: &str) -> String {
    s.nfd().filter(|&c| !is_mark(c)).collect()
}

fn fold_word<'a>(s: &'a str, config: &NormalizationConfig, mask_numbers: bool) -> Cow<'a, str> {
    let mut word = Cow::Borrowed(s);
    if config.lowercase
        && word
            .chars()
            .any(|c| c.to_lowercase().ne(std::iter::once(c)))
    {
        word = Cow::Owned(word.to_lowercase());
    }
    if config.strip_diacritics && !word.is_ascii() {
        word = Cow::Owned(strip_marks(&word));
    }
    if mask_numbers && word.chars().any(char::is_numeric) {
        word = Cow::Owned(collapse_runs(&word, char::is_numeric, '0'));
    }
    if config.strip_diacritics && !word.is_ascii() {
        word = Cow::Owned(collapse_runs(&word, |c| !c.is_ascii(), '_'));
    }
    word
}

fn fold_punct<'a>(s: &'a str, config: &NormalizationConfig) -> Cow<'a, str> {
    if !config.strip_diacritics || s.is_ascii() {
        return Cow::Borrowed(s);
    }
    let stripped = strip_marks(s);
    let is_punct = |c: char| {
        c.is_ascii_punctuation() || c.general_category_group() == GeneralCategoryGroup::Punctuation
    };
    if stripped.is_empty() || stripped.chars().all(is_punct) {
        Cow::Owned(stripped)
    } else {
        Cow::Borrowed(PLACEHOLDER)
    }
}

fn collapse_runs(s: &str, in_run: impl Fn(char) -> bool, replacement: char) -> String {
    let mut out = String::with_capacity(s.len());
    let mut prev_in_run = false;
    for c in s.chars() {
        if in_run(c) {
            if !prev_in_run {
                out.push(replacement);
            }
            prev_in_run = true;
        } else {
            out.push(c);
            prev_in_run = false;
        }
    }
    out
}

/// Splits an emoji grapheme into its base form and skin-tone modifiers.
pub fn decompose_emoji(grapheme: &str) -> EmojiOccurrence {
    let mut base = String::with_capacity(grapheme.len());
    let mut skin_tones = Vec::new();
    for c in grapheme.chars() {
        if let Some(tone) = SkinTone::from_char(c) {
            skin_tones.push(tone);
        } else if c != VS16 {
            base.push(c);
        }
    }
    EmojiOccurrence { base, skin_tones }
}

/// Base form used to compare emoji: modifiers and U+FE0F removed.
pub fn emoji_base(grapheme: &str) -> String {
    decompose_emoji(grapheme).base
}

pub fn extract_emojis(text: &str) -> Vec<EmojiOccurrence> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.kind == TokenKind::Emoji)
        .map(|t| decompose_emoji(t.surface))
        .collect()
}

/// `U+1F44D U+1F3FD` style rendering of a string's code points.
pub fn codepoint_notation(s: &str) -> String {
    s.chars()
        .map(|c| format!("U+{:04X}", c as u32))
        .collect::<Vec<_>>()
        .join(" ")
}
