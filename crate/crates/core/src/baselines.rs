//! String-similarity baselines: Levenshtein distance, longest common
//! subsequence ratio and XDice.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{dice, sort_and_cut, Ranked};
use crate::shingling::{shingle_plain, Word};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    EditDistance,
    NormalizedEditSimilarity,
    Lcsr,
    Xdice,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::EditDistance => "edit-distance",
            BaselineMethod::NormalizedEditSimilarity => "normalized-edit-similarity",
            BaselineMethod::Lcsr => "lcsr",
            BaselineMethod::Xdice => "xdice",
        }
    }

    /// Score used for ranking a lexicon; higher is better. Edit distance
    /// ranks by negated distance.
    pub fn rank_score(self, a: &Word, b: &Word) -> f64 {
        match self {
            BaselineMethod::EditDistance => -(edit_distance(a, b) as f64),
            _ => self.pair_similarity(a, b),
        }
    }

    /// Similarity in `[0, 1]` used for thresholded classification.
    pub fn pair_similarity(self, a: &Word, b: &Word) -> f64 {
        match self {
            BaselineMethod::EditDistance | BaselineMethod::NormalizedEditSimilarity => {
                normalized_edit_similarity(a, b)
            }
            BaselineMethod::Lcsr => lcsr(a, b),
            BaselineMethod::Xdice => xdice_words(a, b),
        }
    }

    pub fn rank(self, query: &Word, lexicon: &[Word], cutoff: Option<usize>) -> Vec<Ranked> {
        let ranked = lexicon
            .iter()
            .enumerate()
            .map(|(doc, word)| Ranked {
                word: word.clone(),
                score: self.rank_score(query, word),
                doc,
            })
            .collect();
        sort_and_cut(ranked, cutoff)
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edit-distance" | "edit_distance" => Ok(BaselineMethod::EditDistance),
            "normalized-edit-similarity" | "normalized_edit_similarity" => {
                Ok(BaselineMethod::NormalizedEditSimilarity)
            }
            "lcsr" => Ok(BaselineMethod::Lcsr),
            "xdice" => Ok(BaselineMethod::Xdice),
            other => Err(Error::Usage(format!("unknown baseline method {other:?}"))),
        }
    }
}

/// Unit-cost Levenshtein distance over Unicode scalars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Length of the longest common subsequence over Unicode scalars.
pub fn lcs_len(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ca in &a {
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn edit_distance(a: &Word, b: &Word) -> usize {
    levenshtein(a.as_str(), b.as_str())
}

/// `1 - distance / max(|a|, |b|)`.
pub fn normalized_edit_similarity(a: &Word, b: &Word) -> f64 {
    let longest = a.char_len().max(b.char_len());
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

pub fn lcsr(a: &Word, b: &Word) -> f64 {
    let longest = a.char_len().max(b.char_len());
    lcs_len(a.as_str(), b.as_str()) as f64 / longest as f64
}

/// Bigrams (with boundary unigrams) plus extended bigrams: every trigram
/// with its middle character dropped.
pub fn xdice_grams(word: &Word) -> HashSet<String> {
    let mut grams: HashSet<String> = shingle_plain(word, 2)
        .expect("k = 2 is valid")
        .iter_tokens()
        .map(str::to_string)
        .collect();
    let chars: Vec<char> = word.as_str().chars().collect();
    for w in chars.windows(3) {
        grams.insert([w[0], w[2]].iter().collect());
    }
    grams
}

pub fn xdice_words(a: &Word, b: &Word) -> f64 {
    let ga = xdice_grams(a);
    let gb = xdice_grams(b);
    let common = ga.intersection(&gb).count();
    dice(common, ga.len(), gb.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::new(s).unwrap()
    }

    /// Full-matrix recursion oracle, independent of the rolling-row version.
    fn dp_edit(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut m = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in m.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in m[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                m[i][j] = (m[i - 1][j] + 1).min(m[i][j - 1] + 1).min(m[i - 1][j - 1] + cost);
            }
        }
        m[a.len()][b.len()]
    }

    fn dp_lcs(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut m = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                m[i][j] = if a[i - 1] == b[j - 1] {
                    m[i - 1][j - 1] + 1
                } else {
                    m[i - 1][j].max(m[i][j - 1])
                };
            }
        }
        m[a.len()][b.len()]
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance(&w("mesia"), &w("messia")), 1);
        assert_eq!(dp_edit("mesia", "messia"), 1);
        assert_eq!(edit_distance(&w("rosmarin"), &w("romarin")), 1);
        assert_eq!(dp_edit("rosmarin", "romarin"), 1);
        assert_eq!(edit_distance(&w("nuit"), &w("nuit")), 0);
        assert_eq!(levenshtein("", "nacht"), 5);
        for (a, b) in [("noapte", "notte"), ("ştiinţă", "scienza"), ("kitten", "sitting")] {
            assert_eq!(levenshtein(a, b), dp_edit(a, b));
        }
    }

    #[test]
    fn lcsr_examples() {
        assert_eq!(lcs_len("rosmarin", "romarin"), 7);
        assert_eq!(dp_lcs("rosmarin", "romarin"), 7);
        assert_eq!(lcsr(&w("rosmarin"), &w("romarin")), 7.0 / 8.0);
        assert_eq!(lcsr(&w("nuit"), &w("nuit")), 1.0);
        assert_eq!(lcsr(&w("abc"), &w("xyz")), 0.0);
        for (a, b) in [("noapte", "notte"), ("lapte", "latte")] {
            assert_eq!(lcs_len(a, b), dp_lcs(a, b));
        }
    }

    #[test]
    fn xdice_examples() {
        // night: n ni ig gh ht t + ng ih gt; nacht: n na ac ch ht t + nc ah ct
        // shared {n, ht, t}: 2*3 / (9 + 9)
        assert!((xdice_words(&w("night"), &w("nacht")) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(xdice_words(&w("nuit"), &w("nuit")), 1.0);
        assert_eq!(xdice_words(&w("a"), &w("b")), 0.0);
    }

    #[test]
    fn baseline_ranking_prefers_closest() {
        let lex = vec![w("nacht"), w("notte"), w("noapte")];
        for m in [BaselineMethod::EditDistance, BaselineMethod::Lcsr, BaselineMethod::Xdice] {
            let r = m.rank(&w("noapte"), &lex, None);
            assert_eq!(r[0].word.as_str(), "noapte", "{m}");
        }
        let r = BaselineMethod::EditDistance.rank(&w("noapte"), &lex, Some(2));
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].score, 0.0);
    }

    #[test]
    fn method_names_parse() {
        for m in [
            BaselineMethod::EditDistance,
            BaselineMethod::NormalizedEditSimilarity,
            BaselineMethod::Lcsr,
            BaselineMethod::Xdice,
        ] {
            assert_eq!(m.name().parse::<BaselineMethod>().unwrap(), m);
        }
        assert!("svm".parse::<BaselineMethod>().is_err());
    }
}
