//! Weighted combination of normalized retrieval similarity and the
//! error-model score, plus threshold-based pair classification.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::ranking::{sim, sort_and_cut, LexiconIndex, Ranked, RankerParams};
use crate::shingling::{ShingleSet, Word};

pub const DEFAULT_LAMBDA: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Cognate,
    NonCognate,
}

impl Label {
    pub fn is_cognate(self) -> bool {
        self == Label::Cognate
    }
}

impl From<bool> for Label {
    fn from(cognate: bool) -> Self {
        if cognate {
            Label::Cognate
        } else {
            Label::NonCognate
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Cognate => "cognate",
            Label::NonCognate => "non-cognate",
        })
    }
}

/// How raw similarity is mapped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Min-max over the candidates of one query.
    PerQueryMinmax,
    /// Min-max bounds learned from training pairs, clamped.
    TrainedMinmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub lambda: f64,
    pub ranker: RankerParams,
    pub normalization: Normalization,
    pub threshold: f64,
}

impl ScoreConfig {
    pub fn new(lambda: f64, ranker: RankerParams, normalization: Normalization) -> Self {
        ScoreConfig {
            lambda,
            ranker,
            normalization,
            threshold: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        self.ranker.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimBounds {
    pub min: f64,
    pub max: f64,
}

impl SimBounds {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, v| match acc {
            None => Some(SimBounds { min: v, max: v }),
            Some(b) => Some(SimBounds {
                min: b.min.min(v),
                max: b.max.max(v),
            }),
        })
    }

    /// Maps `raw` into `[0, 1]`; degenerate bounds give 0.5 so the error
    /// model decides.
    pub fn normalize(&self, raw: f64) -> f64 {
        if self.max > self.min {
            ((raw - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }
}

/// `lambda * sim_norm + (1 - lambda) * pi`.
pub fn combine(lambda: f64, sim_norm: f64, pi: f64) -> f64 {
    lambda * sim_norm + (1.0 - lambda) * pi
}

/// Accuracy-maximizing decision threshold over `(score, is_cognate)`
/// samples. Candidates are 0, 1 and every midpoint between consecutive
/// distinct scores; ties go to the smallest threshold.
pub fn best_threshold(samples: &[(f64, bool)]) -> f64 {
    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut candidates = vec![0.0];
    candidates.extend(
        sorted
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| (w[0].0 + w[1].0) / 2.0),
    );
    candidates.push(1.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let positives = sorted.iter().filter(|s| s.1).count();
    // sweep: everything below the threshold is predicted non-cognate
    let (mut below, mut pos_below, mut neg_below) = (0usize, 0usize, 0usize);
    let mut best: Option<(usize, f64)> = None;
    for t in candidates {
        while below < sorted.len() && sorted[below].0 < t {
            if sorted[below].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            below += 1;
        }
        let correct = (positives - pos_below) + neg_below;
        if best.is_none_or(|(most, _)| correct > most) {
            best = Some((correct, t));
        }
    }
    best.map_or(0.0, |(_, t)| t)
}

#[derive(Debug, Clone)]
pub struct CombinedScorer {
    config: ScoreConfig,
    error_model: ErrorModel,
    index: Arc<LexiconIndex>,
    bounds: Option<SimBounds>,
}

impl CombinedScorer {
    pub fn new(config: ScoreConfig, error_model: ErrorModel, index: Arc<LexiconIndex>) -> Result<Self> {
        config.validate()?;
        if error_model.shingler_config() != index.config() {
            return Err(Error::Usage(format!(
                "error model uses {} but the index uses {}",
                error_model.shingler_config(),
                index.config()
            )));
        }
        Ok(CombinedScorer {
            config,
            error_model,
            index,
            bounds: None,
        })
    }

    /// Trains the error model on the cognate pairs, learns similarity
    /// bounds over all pairs and picks the accuracy-maximizing threshold.
    pub fn fit(
        pairs: &[(Word, Word, Label)],
        index: Arc<LexiconIndex>,
        config: ScoreConfig,
        alpha: f64,
        q: f64,
    ) -> Result<Self> {
        let positives: Vec<(Word, Word)> = pairs
            .iter()
            .filter(|p| p.2.is_cognate())
            .map(|(a, b, _)| (a.clone(), b.clone()))
            .collect();
        let model = ErrorModel::train(&positives, index.config(), alpha, q)?;
        let mut scorer = CombinedScorer::new(config, model, index)?;
        let sets = pairs
            .iter()
            .map(|(a, b, l)| Ok((scorer.index.shingle(a)?, scorer.index.shingle(b)?, *l)))
            .collect::<Result<Vec<_>>>()?;
        scorer.bounds = SimBounds::of(sets.iter().map(|(s, t, _)| scorer.raw_sim(s, t)));
        let samples = sets
            .iter()
            .map(|(s, t, l)| Ok((scorer.combined_score(s, t)?, l.is_cognate())))
            .collect::<Result<Vec<_>>>()?;
        scorer.config.threshold = best_threshold(&samples);
        Ok(scorer)
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.config
    }

    pub fn error_model(&self) -> &ErrorModel {
        &self.error_model
    }

    pub fn index(&self) -> &LexiconIndex {
        &self.index
    }

    pub fn shared_index(&self) -> Arc<LexiconIndex> {
        Arc::clone(&self.index)
    }

    pub fn bounds(&self) -> Option<SimBounds> {
        self.bounds
    }

    pub fn with_bounds(mut self, bounds: Option<SimBounds>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.config.threshold = threshold;
        self.config.validate()?;
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.config.lambda = lambda;
        self.config.validate()?;
        Ok(self)
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.config.normalization = normalization;
        self
    }

    pub fn raw_sim(&self, s: &ShingleSet, t: &ShingleSet) -> f64 {
        sim(s, t, &self.index, &self.config.ranker)
    }

    fn pi(&self, s: &ShingleSet, t: &ShingleSet) -> Result<f64> {
        if self.config.lambda >= 1.0 {
            return Ok(0.0);
        }
        self.error_model.pi_score(s, t)
    }

    /// Combined score of one pair. Under per-query normalization the pair is
    /// its own singleton candidate set, which is degenerate.
    pub fn combined_score(&self, s: &ShingleSet, t: &ShingleSet) -> Result<f64> {
        let sim_norm = match self.config.normalization {
            Normalization::PerQueryMinmax => 0.5,
            Normalization::TrainedMinmax => {
                let bounds = self.bounds.ok_or_else(|| {
                    Error::Usage("scorer has no trained normalization bounds".into())
                })?;
                bounds.normalize(self.raw_sim(s, t))
            }
        };
        Ok(combine(self.config.lambda, sim_norm, self.pi(s, t)?))
    }

    pub fn pair_score(&self, a: &Word, b: &Word) -> Result<f64> {
        self.combined_score(&self.index.shingle(a)?, &self.index.shingle(b)?)
    }

    pub fn classify(&self, a: &Word, b: &Word) -> Result<Label> {
        Ok(Label::from(self.pair_score(a, b)? >= self.config.threshold))
    }

    pub fn rank(&self, query: &Word, cutoff: Option<usize>) -> Result<Vec<Ranked>> {
        self.rank_in(query, &self.index, cutoff)
    }

    pub(crate) fn rank_in(&self, query: &Word, index: &LexiconIndex, cutoff: Option<usize>) -> Result<Vec<Ranked>> {
        let q = index.shingle(query)?;
        let raw: Vec<f64> = index
            .docs()
            .iter()
            .map(|d| sim(&q, d, index, &self.config.ranker))
            .collect();
        let bounds = match self.config.normalization {
            Normalization::PerQueryMinmax => SimBounds::of(raw.iter().copied()),
            Normalization::TrainedMinmax => Some(self.bounds.ok_or_else(|| {
                Error::Usage("scorer has no trained normalization bounds".into())
            })?),
        }
        .expect("index is never empty");
        let ranked = index
            .docs()
            .iter()
            .zip(raw)
            .enumerate()
            .map(|(doc, (d, r))| {
                Ok(Ranked {
                    word: d.word().clone(),
                    score: combine(self.config.lambda, bounds.normalize(r), self.pi(&q, d)?),
                    doc,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(sort_and_cut(ranked, cutoff))
    }
}

pub fn combined_score(scorer: &CombinedScorer, s: &ShingleSet, t: &ShingleSet) -> Result<f64> {
    scorer.combined_score(s, t)
}

pub fn classify(scorer: &CombinedScorer, a: &Word, b: &Word) -> Result<Label> {
    scorer.classify(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::{rank, RankFunction};
    use crate::shingling::{ShingleMode, ShinglerConfig};

    fn w(s: &str) -> Word {
        Word::new(s).unwrap()
    }

    fn mesia_scorer(lambda: f64, normalization: Normalization) -> CombinedScorer {
        let cfg = ShinglerConfig::bigram(ShingleMode::TwoEnd);
        let model = ErrorModel::train(&[(w("mesia"), w("messia"))], &cfg, 1.0, 1.0).unwrap();
        let index = Arc::new(LexiconIndex::build(&[w("messia"), w("mesa"), w("nuit")], &cfg).unwrap());
        let config = ScoreConfig::new(lambda, RankerParams::new(RankFunction::Dirichlet), normalization);
        CombinedScorer::new(config, model, index).unwrap()
    }

    #[test]
    fn degenerate_weights() {
        let s = mesia_scorer(1.0, Normalization::TrainedMinmax).with_bounds(Some(SimBounds { min: -5.0, max: 5.0 }));
        let a = s.index().shingle(&w("mesia")).unwrap();
        let b = s.index().shingle(&w("messia")).unwrap();
        let sim_norm = SimBounds { min: -5.0, max: 5.0 }.normalize(s.raw_sim(&a, &b));
        assert_eq!(s.combined_score(&a, &b).unwrap(), sim_norm);

        let s = s.with_lambda(0.0).unwrap();
        assert_eq!(s.combined_score(&a, &b).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn weighted_example() {
        assert!((combine(0.6, 0.5, 2.0 / 3.0) - 0.566_666_666_666_666_6).abs() < 1e-12);
    }

    #[test]
    fn untrained_bounds_is_usage_error() {
        let s = mesia_scorer(0.6, Normalization::TrainedMinmax);
        assert!(matches!(s.pair_score(&w("mesia"), &w("messia")), Err(Error::Usage(_))));
        assert!(matches!(s.rank(&w("mesia"), None), Err(Error::Usage(_))));
    }

    #[test]
    fn classify_thresholds() {
        let s = mesia_scorer(0.6, Normalization::PerQueryMinmax);
        let t0 = s.clone().with_threshold(0.0).unwrap();
        assert_eq!(t0.classify(&w("abc"), &w("xyz")).unwrap(), Label::Cognate);
        assert!(s.clone().with_threshold(1.0 + 1e-9).is_err());
        // singleton candidate set: sim_norm = 0.5, pi = 2/3
        let s = s.with_threshold(0.5).unwrap();
        let score = s.pair_score(&w("mesia"), &w("messia")).unwrap();
        assert!((score - (0.6 * 0.5 + 0.4 * 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(s.classify(&w("mesia"), &w("messia")).unwrap(), Label::Cognate);
    }

    #[test]
    fn threshold_search() {
        let samples = [(0.1, false), (0.2, false), (0.7, true), (0.9, true)];
        assert!((best_threshold(&samples) - 0.45).abs() < 1e-15);
        // tie between several thresholds resolves to the smallest
        let samples = [(0.3, true), (0.6, false), (0.8, true)];
        assert_eq!(best_threshold(&samples), 0.0);
        assert_eq!(best_threshold(&[(0.4, false), (0.4, false)]), 1.0);
        assert_eq!(best_threshold(&[]), 0.0);
    }

    #[test]
    fn lambda_one_per_query_matches_raw_ranking() {
        let s = mesia_scorer(1.0, Normalization::PerQueryMinmax);
        let combined: Vec<Word> = s.rank(&w("mesia"), None).unwrap().into_iter().map(|r| r.word).collect();
        let raw: Vec<Word> = rank(&w("mesia"), s.index(), &s.config().ranker, None, None)
            .unwrap()
            .into_iter()
            .map(|r| r.word)
            .collect();
        assert_eq!(combined, raw);
    }

    #[test]
    fn fit_learns_bounds_and_threshold() {
        let cfg = ShinglerConfig::bigram(ShingleMode::TwoEnd);
        let pairs = vec![
            (w("mesia"), w("messia"), Label::Cognate),
            (w("noapte"), w("notte"), Label::Cognate),
            (w("copil"), w("bambino"), Label::NonCognate),
            (w("oraş"), w("città"), Label::NonCognate),
        ];
        let lexicon: Vec<Word> = pairs.iter().map(|p| p.1.clone()).collect();
        let index = Arc::new(LexiconIndex::build(&lexicon, &cfg).unwrap());
        let config = ScoreConfig::new(0.6, RankerParams::default(), Normalization::TrainedMinmax);
        let s = CombinedScorer::fit(&pairs, index, config, 1.0, 1.0).unwrap();
        let b = s.bounds().unwrap();
        assert!(b.min < b.max);
        for (a, t, l) in &pairs {
            assert_eq!(s.classify(a, t).unwrap(), *l);
        }
    }
}
