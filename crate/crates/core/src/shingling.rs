//! Character k-gram shingling with optional positional anchors.
//!
//! A word is padded with `k - 1` boundary markers on each side, every window
//! of `k` positions becomes a gram with the markers stripped, and the grams
//! are optionally tagged with a position counted from the start
//! ([`ShingleMode::OneEnd`]) or from the nearer end ([`ShingleMode::TwoEnd`]).
//!
//! ```
//! use cognate::shingling::{shingle_two_end, Word};
//!
//! let set = shingle_two_end(&Word::new("romarin").unwrap(), 2).unwrap();
//! assert_eq!(set.tokens(), ["1r", "2ro", "3om", "4ma", "ar4", "ri3", "in2", "n1"]);
//! ```

use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A normalized (lowercased) word. Diacritics are preserved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Word(String);

impl Word {
    pub fn new(raw: &str) -> Result<Self> {
        let text = raw.to_lowercase();
        let reject = |reason| {
            Err(Error::InvalidWord {
                word: raw.to_string(),
                reason,
            })
        };
        if text.is_empty() {
            return reject("empty word");
        }
        if text.chars().any(char::is_whitespace) {
            return reject("contains whitespace");
        }
        // positions are encoded as decimal digits inside tokens
        if text.chars().any(|c| c.is_ascii_digit()) {
            return reject("contains a digit");
        }
        if text.chars().any(char::is_control) {
            return reject("contains a control character");
        }
        Ok(Word(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Word {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Word::new(&value)
    }
}

impl From<Word> for String {
    fn from(w: Word) -> String {
        w.0
    }
}

impl std::str::FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Word::new(s)
    }
}

/// Where a shingle's position is counted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Anchor {
    None,
    Left(u32),
    Right(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shingle {
    pub gram: String,
    pub anchor: Anchor,
}

impl Shingle {
    pub fn position(&self) -> Option<u32> {
        match self.anchor {
            Anchor::None => None,
            Anchor::Left(p) | Anchor::Right(p) => Some(p),
        }
    }

    /// Canonical token: `2ro` for a left anchor, `ar4` for a right anchor,
    /// the bare gram otherwise.
    pub fn token(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Shingle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.anchor {
            Anchor::None => f.write_str(&self.gram),
            Anchor::Left(p) => write!(f, "{p}{}", self.gram),
            Anchor::Right(p) => write!(f, "{}{p}", self.gram),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShingleMode {
    Plain,
    OneEnd,
    TwoEnd,
}

impl fmt::Display for ShingleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShingleMode::Plain => "plain",
            ShingleMode::OneEnd => "one-end",
            ShingleMode::TwoEnd => "two-end",
        })
    }
}

impl std::str::FromStr for ShingleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "0-ended" => Ok(ShingleMode::Plain),
            "one-end" | "one_end" | "1-ended" => Ok(ShingleMode::OneEnd),
            "two-end" | "two_end" | "2-ended" => Ok(ShingleMode::TwoEnd),
            other => Err(Error::Usage(format!("unknown shingling mode {other:?}"))),
        }
    }
}

/// Gram sizes and positional mode used to turn words into shingle sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawShinglerConfig")]
pub struct ShinglerConfig {
    gram_sizes: Vec<usize>,
    mode: ShingleMode,
}

#[derive(Deserialize)]
struct RawShinglerConfig {
    gram_sizes: Vec<usize>,
    mode: ShingleMode,
}

impl TryFrom<RawShinglerConfig> for ShinglerConfig {
    type Error = Error;

    fn try_from(raw: RawShinglerConfig) -> Result<Self> {
        ShinglerConfig::new(raw.gram_sizes, raw.mode)
    }
}

impl ShinglerConfig {
    /// Gram sizes are sorted and deduplicated; each must be at least 2.
    pub fn new(mut gram_sizes: Vec<usize>, mode: ShingleMode) -> Result<Self> {
        if gram_sizes.is_empty() {
            return Err(Error::Config("at least one gram size is required".into()));
        }
        if let Some(k) = gram_sizes.iter().find(|&&k| k < 2) {
            return Err(Error::Config(format!("gram size must be >= 2, got {k}")));
        }
        gram_sizes.sort_unstable();
        gram_sizes.dedup();
        Ok(ShinglerConfig { gram_sizes, mode })
    }

    pub fn bigram(mode: ShingleMode) -> Self {
        ShinglerConfig {
            gram_sizes: vec![2],
            mode,
        }
    }

    pub fn gram_sizes(&self) -> &[usize] {
        &self.gram_sizes
    }

    pub fn mode(&self) -> ShingleMode {
        self.mode
    }
}

impl fmt::Display for ShinglerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.gram_sizes.iter().map(|k| k.to_string()).collect();
        write!(f, "k={} {}", sizes.join("+"), self.mode)
    }
}

/// Ordered set of shingles generated from one word, unique by canonical token.
#[derive(Debug, Clone)]
pub struct ShingleSet {
    word: Word,
    config: ShinglerConfig,
    members: Vec<Shingle>,
    tokens: IndexSet<String>,
}

impl PartialEq for ShingleSet {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.members == other.members
    }
}

impl ShingleSet {
    fn collect(word: &Word, config: ShinglerConfig, shingles: impl IntoIterator<Item = Shingle>) -> Self {
        let mut set = ShingleSet {
            word: word.clone(),
            config,
            members: Vec::new(),
            tokens: IndexSet::new(),
        };
        for shingle in shingles {
            set.push(shingle);
        }
        set
    }

    fn push(&mut self, shingle: Shingle) {
        if self.tokens.insert(shingle.token()) {
            self.members.push(shingle);
        }
    }

    pub fn word(&self) -> &Word {
        &self.word
    }

    pub fn config(&self) -> &ShinglerConfig {
        &self.config
    }

    pub fn members(&self) -> &[Shingle] {
        &self.members
    }

    /// Canonical tokens in generation order.
    pub fn tokens(&self) -> Vec<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }

    pub fn iter_tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.tokens.iter().map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Number of tokens shared with `other`.
    pub fn overlap(&self, other: &ShingleSet) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter_tokens().filter(|t| large.contains(t)).count()
    }
}

/// Raw gram sequence (before deduplication) for a word: `n + k - 1` grams.
fn gram_sequence(word: &Word, k: usize) -> Result<Vec<String>> {
    if k < 2 {
        return Err(Error::Config(format!("gram size must be >= 2, got {k}")));
    }
    let pad = k - 1;
    let padded: Vec<Option<char>> = std::iter::repeat_n(None, pad)
        .chain(word.as_str().chars().map(Some))
        .chain(std::iter::repeat_n(None, pad))
        .collect();
    Ok(padded
        .windows(k)
        .map(|w| w.iter().flatten().collect::<String>())
        .filter(|g| !g.is_empty())
        .collect())
}

fn plain_shingles(grams: Vec<String>) -> impl Iterator<Item = Shingle> {
    grams.into_iter().map(|gram| Shingle {
        gram,
        anchor: Anchor::None,
    })
}

fn one_end_shingles(grams: Vec<String>) -> impl Iterator<Item = Shingle> {
    grams.into_iter().zip(1u32..).map(|(gram, i)| Shingle {
        gram,
        anchor: Anchor::Left(i),
    })
}

fn two_end_shingles(grams: Vec<String>) -> impl Iterator<Item = Shingle> {
    let m = grams.len() as u32;
    grams.into_iter().zip(1u32..).map(move |(gram, i)| {
        let j = m - i + 1;
        // ties keep the left position
        let anchor = if i <= j { Anchor::Left(i) } else { Anchor::Right(j) };
        Shingle { gram, anchor }
    })
}

/// Positions index the deduplicated plain gram list.
fn shingles_for(word: &Word, k: usize, mode: ShingleMode) -> Result<Vec<Shingle>> {
    let grams: Vec<String> = gram_sequence(word, k)?
        .into_iter()
        .collect::<IndexSet<String>>()
        .into_iter()
        .collect();
    Ok(match mode {
        ShingleMode::Plain => plain_shingles(grams).collect(),
        ShingleMode::OneEnd => one_end_shingles(grams).collect(),
        ShingleMode::TwoEnd => two_end_shingles(grams).collect(),
    })
}

fn single(word: &Word, k: usize, mode: ShingleMode) -> Result<ShingleSet> {
    let shingles = shingles_for(word, k, mode)?;
    Ok(ShingleSet::collect(word, ShinglerConfig::new(vec![k], mode)?, shingles))
}

pub fn shingle_plain(word: &Word, k: usize) -> Result<ShingleSet> {
    single(word, k, ShingleMode::Plain)
}

pub fn shingle_one_end(word: &Word, k: usize) -> Result<ShingleSet> {
    single(word, k, ShingleMode::OneEnd)
}

pub fn shingle_two_end(word: &Word, k: usize) -> Result<ShingleSet> {
    single(word, k, ShingleMode::TwoEnd)
}

/// Shingles `word` with every configured gram size (smallest first) and
/// unions the results, keeping first occurrences.
pub fn shingle(word: &Word, config: &ShinglerConfig) -> Result<ShingleSet> {
    let mut set = ShingleSet::collect(word, config.clone(), std::iter::empty());
    for &k in &config.gram_sizes {
        for s in shingles_for(word, k, config.mode)? {
            set.push(s);
        }
    }
    Ok(set)
}

/// Tokens of `a` that also occur in `b`, in `a`'s order.
pub fn intersect(a: &ShingleSet, b: &ShingleSet) -> ShingleSet {
    let members = a
        .members
        .iter()
        .filter(|s| b.contains(&s.token()))
        .cloned();
    ShingleSet::collect(&a.word, a.config.clone(), members)
}
