//! Inverted shingle index over a target lexicon and the similarity
//! functions used to rank its words against a query.
//!
//! Shingle sets never contain duplicates, so term frequency is binary and
//! collection frequency coincides with document frequency.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::error::{Error, Result};
use crate::scorer::CombinedScorer;
use crate::shingling::{shingle, ShingleSet, ShinglerConfig, Word};

#[derive(Debug, Clone)]
pub struct LexiconIndex {
    docs: Vec<ShingleSet>,
    df: HashMap<String, u32>,
    cf: HashMap<String, u64>,
    total_cf: u64,
    avgdl: f64,
    config: ShinglerConfig,
}

impl LexiconIndex {
    /// Shingles every word once. Duplicate words remain distinct documents.
    pub fn build(lexicon: &[Word], config: &ShinglerConfig) -> Result<Self> {
        if lexicon.is_empty() {
            return Err(Error::Usage("cannot index an empty lexicon".into()));
        }
        let docs = lexicon
            .iter()
            .map(|w| shingle(w, config))
            .collect::<Result<Vec<_>>>()?;
        let mut df: HashMap<String, u32> = HashMap::new();
        let mut cf: HashMap<String, u64> = HashMap::new();
        for doc in &docs {
            for tok in doc.iter_tokens() {
                *df.entry(tok.to_string()).or_default() += 1;
                *cf.entry(tok.to_string()).or_default() += 1;
            }
        }
        let total_cf = cf.values().sum();
        let avgdl = docs.iter().map(ShingleSet::len).sum::<usize>() as f64 / docs.len() as f64;
        Ok(LexiconIndex {
            docs,
            df,
            cf,
            total_cf,
            avgdl,
            config: config.clone(),
        })
    }

    pub fn docs(&self) -> &[ShingleSet] {
        &self.docs
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> + '_ {
        self.docs.iter().map(ShingleSet::word)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn df(&self, token: &str) -> u32 {
        self.df.get(token).copied().unwrap_or(0)
    }

    pub fn cf(&self, token: &str) -> u64 {
        self.cf.get(token).copied().unwrap_or(0)
    }

    pub fn total_cf(&self) -> u64 {
        self.total_cf
    }

    pub fn vocabulary_size(&self) -> usize {
        self.cf.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn config(&self) -> &ShinglerConfig {
        &self.config
    }

    pub fn shingle(&self, word: &Word) -> Result<ShingleSet> {
        shingle(word, &self.config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankFunction {
    Intersection,
    Jaccard,
    Dice,
    Xdice,
    Tfidf,
    Bm25,
    Dirichlet,
}

impl RankFunction {
    pub const ALL: [RankFunction; 7] = [
        RankFunction::Intersection,
        RankFunction::Jaccard,
        RankFunction::Dice,
        RankFunction::Xdice,
        RankFunction::Tfidf,
        RankFunction::Bm25,
        RankFunction::Dirichlet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankFunction::Intersection => "intersection",
            RankFunction::Jaccard => "jaccard",
            RankFunction::Dice => "dice",
            RankFunction::Xdice => "xdice",
            RankFunction::Tfidf => "tfidf",
            RankFunction::Bm25 => "bm25",
            RankFunction::Dirichlet => "dirichlet",
        }
    }
}

impl fmt::Display for RankFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RankFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RankFunction::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Usage(format!("unknown ranking function {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankerParams {
    pub function: RankFunction,
    pub k1: f64,
    pub b: f64,
    pub mu: f64,
}

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;
pub const DEFAULT_MU: f64 = 10.0;

impl RankerParams {
    pub fn new(function: RankFunction) -> Self {
        RankerParams {
            function,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            mu: DEFAULT_MU,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("b must lie in [0, 1], got {}", self.b)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be > 0, got {}", self.mu)));
        }
        Ok(())
    }
}

impl Default for RankerParams {
    fn default() -> Self {
        RankerParams::new(RankFunction::Dirichlet)
    }
}

/// Raw similarity of `doc` to `query` under `params`, using `index` for
/// collection statistics.
pub fn sim(query: &ShingleSet, doc: &ShingleSet, index: &LexiconIndex, params: &RankerParams) -> f64 {
    let shared = || query.iter_tokens().filter(|t| doc.contains(t));
    match params.function {
        RankFunction::Intersection => query.overlap(doc) as f64,
        RankFunction::Jaccard => {
            let common = query.overlap(doc);
            let union = query.len() + doc.len() - common;
            if union == 0 {
                0.0
            } else {
                common as f64 / union as f64
            }
        }
        RankFunction::Dice => dice(query.overlap(doc), query.len(), doc.len()),
        RankFunction::Xdice => baselines::xdice_words(query.word(), doc.word()),
        RankFunction::Tfidf => {
            let n = index.len() as f64;
            // df is at least 1 for any token of an indexed document; the
            // floor only matters for documents scored from outside the index
            shared()
                .map(|t| (1.0 + n / f64::from(index.df(t).max(1))).ln())
                .sum()
        }
        RankFunction::Bm25 => {
            let n = index.len() as f64;
            let norm = 1.0 - params.b + params.b * doc.len() as f64 / index.avgdl();
            let saturation = (params.k1 + 1.0) / (1.0 + params.k1 * norm);
            shared()
                .map(|t| {
                    let df = f64::from(index.df(t));
                    (1.0 + (n - df + 0.5) / (df + 0.5)).ln() * saturation
                })
                .sum()
        }
        RankFunction::Dirichlet => {
            let mu = params.mu;
            let background = (index.total_cf() + index.vocabulary_size() as u64 + 1) as f64;
            let length = query.len() as f64 * (mu / (mu + doc.len() as f64)).ln();
            let matches: f64 = shared()
                .map(|t| {
                    let p = (index.cf(t) + 1) as f64 / background;
                    (1.0 + 1.0 / (mu * p)).ln()
                })
                .sum();
            length + matches
        }
    }
}

pub(crate) fn dice(common: usize, a: usize, b: usize) -> f64 {
    if a + b == 0 {
        0.0
    } else {
        2.0 * common as f64 / (a + b) as f64
    }
}

/// One scored lexicon entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub word: Word,
    pub score: f64,
    /// Insertion position in the lexicon.
    pub doc: usize,
}

/// Descending score, then ascending word, then ascending insertion order.
pub fn ranking_order(a: &Ranked, b: &Ranked) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.word.cmp(&b.word))
        .then_with(|| a.doc.cmp(&b.doc))
}

pub(crate) fn sort_and_cut(mut ranked: Vec<Ranked>, cutoff: Option<usize>) -> Vec<Ranked> {
    ranked.sort_by(ranking_order);
    if let Some(k) = cutoff {
        ranked.truncate(k);
    }
    ranked
}

/// Scores every lexicon document for `query` and returns them best first.
///
/// With a `scorer`, documents are ranked by the combined similarity and
/// error-model score; otherwise by raw `sim` alone.
pub fn rank(
    query: &Word,
    index: &LexiconIndex,
    params: &RankerParams,
    scorer: Option<&CombinedScorer>,
    cutoff: Option<usize>,
) -> Result<Vec<Ranked>> {
    if let Some(scorer) = scorer {
        if scorer.index().config() != index.config() {
            return Err(Error::Usage(format!(
                "scorer was built for {} but the index uses {}",
                scorer.index().config(),
                index.config()
            )));
        }
        return scorer.rank_in(query, index, cutoff);
    }
    params.validate()?;
    let q = index.shingle(query)?;
    let ranked = index
        .docs()
        .iter()
        .enumerate()
        .map(|(doc, d)| Ranked {
            word: d.word().clone(),
            score: sim(&q, d, index, params),
            doc,
        })
        .collect();
    Ok(sort_and_cut(ranked, cutoff))
}

/// Parses a lexicon: one word per line, blank lines and `#` comments ignored.
pub fn parse_lexicon(text: &str, path: &Path) -> Result<Vec<Word>> {
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let word = Word::new(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        words.push(word);
    }
    Ok(words)
}

pub fn read_lexicon(path: &Path) -> Result<Vec<Word>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let words = parse_lexicon(&text, path)?;
    if words.is_empty() {
        return Err(Error::Data(format!("{}: lexicon has no words", path.display())));
    }
    Ok(words)
}
