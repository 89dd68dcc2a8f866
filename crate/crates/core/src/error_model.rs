//! Bipartite transformation graphs between the leftover shingles of a word
//! pair, and an edge-frequency model trained over cognate pairs.
//!
//! For a pair `(s, t)` the shingles shared by both sets are removed. What is
//! left of `s` forms the *top* side and what is left of `t` the *bottom*
//! side. An empty side receives a single empty token (`None`, printed as
//! `φ`), the shorter side is padded with empty tokens in its middle until
//! both sides have equal length, and every top member is connected to every
//! bottom member.
//!
//! The trained [`ErrorModel`] estimates the probability of each directed
//! edge from its relative frequency over the training graphs, with additive
//! smoothing and one aggregate class for all unseen edges. The pair score is
//! the mean of `P(e)^q` over the pair's edges.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shingling::{shingle, ShingleSet, ShinglerConfig, Word};

/// One side of an edge: a canonical shingle token, or `None` for φ.
pub type Node = Option<String>;

pub const EMPTY_TOKEN: &str = "φ";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ErrorEdge {
    pub from: Node,
    pub to: Node,
}

impl ErrorEdge {
    pub fn new(from: Option<&str>, to: Option<&str>) -> Self {
        ErrorEdge {
            from: from.map(str::to_string),
            to: to.map(str::to_string),
        }
    }
}

impl fmt::Display for ErrorEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |n: &Node| n.clone().unwrap_or_else(|| EMPTY_TOKEN.to_string());
        write!(f, "{}→{}", side(&self.from), side(&self.to))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGraph {
    pub top: Vec<Node>,
    pub bottom: Vec<Node>,
    pub edges: Vec<ErrorEdge>,
}

fn pad_middle(side: &mut Vec<Node>, len: usize) {
    while side.len() < len {
        let mid = side.len() / 2;
        side.insert(mid, None);
    }
}

/// Builds the complete directed bipartite graph between the leftovers of
/// `s` and `t`.
pub fn build_graph(s: &ShingleSet, t: &ShingleSet) -> Result<ErrorGraph> {
    if s.config() != t.config() {
        return Err(Error::Usage(format!(
            "cannot build an error graph across shingler configs ({} vs {})",
            s.config(),
            t.config()
        )));
    }
    let mut top: Vec<Node> = s
        .iter_tokens()
        .filter(|tok| !t.contains(tok))
        .map(|tok| Some(tok.to_string()))
        .collect();
    let mut bottom: Vec<Node> = t
        .iter_tokens()
        .filter(|tok| !s.contains(tok))
        .map(|tok| Some(tok.to_string()))
        .collect();

    if top.is_empty() {
        top.push(None);
    }
    if bottom.is_empty() {
        bottom.push(None);
    }
    let len = top.len().max(bottom.len());
    pad_middle(&mut top, len);
    pad_middle(&mut bottom, len);

    let edges = top
        .iter()
        .flat_map(|from| {
            bottom.iter().map(move |to| ErrorEdge {
                from: from.clone(),
                to: to.clone(),
            })
        })
        .collect();
    Ok(ErrorGraph { top, bottom, edges })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EdgeCount {
    from: Node,
    to: Node,
    count: u64,
}

/// Smoothed edge-frequency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SerializedModel", into = "SerializedModel")]
pub struct ErrorModel {
    edge_counts: BTreeMap<ErrorEdge, u64>,
    total_count: u64,
    alpha: f64,
    q: f64,
    shingler_config: ShinglerConfig,
}

#[derive(Serialize, Deserialize)]
struct SerializedModel {
    edge_counts: Vec<EdgeCount>,
    total_count: u64,
    distinct_edges: u64,
    alpha: f64,
    q: f64,
    shingler_config: ShinglerConfig,
}

impl From<ErrorModel> for SerializedModel {
    fn from(m: ErrorModel) -> Self {
        let distinct_edges = m.distinct_edges();
        SerializedModel {
            edge_counts: m
                .edge_counts
                .into_iter()
                .map(|(e, count)| EdgeCount {
                    from: e.from,
                    to: e.to,
                    count,
                })
                .collect(),
            total_count: m.total_count,
            distinct_edges,
            alpha: m.alpha,
            q: m.q,
            shingler_config: m.shingler_config,
        }
    }
}

impl TryFrom<SerializedModel> for ErrorModel {
    type Error = Error;

    fn try_from(raw: SerializedModel) -> Result<Self> {
        check_params(raw.alpha, raw.q)?;
        let mut edge_counts = BTreeMap::new();
        for EdgeCount { from, to, count } in raw.edge_counts {
            if count == 0 {
                return Err(Error::Data("error model lists an edge with zero count".into()));
            }
            if edge_counts.insert(ErrorEdge { from, to }, count).is_some() {
                return Err(Error::Data("error model lists an edge twice".into()));
            }
        }
        let model = ErrorModel {
            edge_counts,
            total_count: raw.total_count,
            alpha: raw.alpha,
            q: raw.q,
            shingler_config: raw.shingler_config,
        };
        if model.edge_counts.values().sum::<u64>() != model.total_count {
            return Err(Error::Data("error model total_count does not match its edges".into()));
        }
        if model.distinct_edges() != raw.distinct_edges {
            return Err(Error::Data("error model distinct_edges does not match its edges".into()));
        }
        Ok(model)
    }
}

fn check_params(alpha: f64, q: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("smoothing alpha must be > 0, got {alpha}")));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::Config(format!("strength q must be > 0, got {q}")));
    }
    Ok(())
}

impl ErrorModel {
    /// Trains on labeled-positive cognate pairs. Only counts are
    /// accumulated, so the result does not depend on pair order.
    pub fn train(pairs: &[(Word, Word)], config: &ShinglerConfig, alpha: f64, q: f64) -> Result<Self> {
        check_params(alpha, q)?;
        if pairs.is_empty() {
            return Err(Error::Training("error model needs at least one cognate pair".into()));
        }
        let mut model = ErrorModel {
            edge_counts: BTreeMap::new(),
            total_count: 0,
            alpha,
            q,
            shingler_config: config.clone(),
        };
        for (a, b) in pairs {
            let graph = build_graph(&shingle(a, config)?, &shingle(b, config)?)?;
            model.observe(&graph);
        }
        Ok(model)
    }

    fn observe(&mut self, graph: &ErrorGraph) {
        for edge in &graph.edges {
            *self.edge_counts.entry(edge.clone()).or_insert(0) += 1;
            self.total_count += 1;
        }
    }

    /// Same counts with different smoothing/strength parameters.
    pub fn with_params(&self, alpha: f64, q: f64) -> Result<Self> {
        check_params(alpha, q)?;
        Ok(ErrorModel {
            alpha,
            q,
            ..self.clone()
        })
    }

    pub fn count(&self, edge: &ErrorEdge) -> u64 {
        self.edge_counts.get(edge).copied().unwrap_or(0)
    }

    pub fn edge_counts(&self) -> &BTreeMap<ErrorEdge, u64> {
        &self.edge_counts
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    /// Observed distinct edges plus one aggregate class for unseen edges.
    pub fn distinct_edges(&self) -> u64 {
        self.edge_counts.len() as u64 + 1
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn shingler_config(&self) -> &ShinglerConfig {
        &self.shingler_config
    }

    fn denominator(&self) -> f64 {
        self.total_count as f64 + self.alpha * self.distinct_edges() as f64
    }

    pub fn edge_prob(&self, edge: &ErrorEdge) -> f64 {
        (self.count(edge) as f64 + self.alpha) / self.denominator()
    }

    /// Smoothed mass assigned to the aggregate unseen class.
    pub fn unseen_mass(&self) -> f64 {
        self.alpha / self.denominator()
    }

    /// Mean of `P(e)^q` over the edges of an already built graph.
    pub fn score_graph(&self, graph: &ErrorGraph) -> f64 {
        let sum: f64 = graph.edges.iter().map(|e| self.edge_prob(e).powf(self.q)).sum();
        sum / graph.edges.len() as f64
    }

    pub fn pi_score(&self, s: &ShingleSet, t: &ShingleSet) -> Result<f64> {
        if s.config() != &self.shingler_config {
            return Err(Error::Usage(format!(
                "error model was trained with {} but the pair uses {}",
                self.shingler_config,
                s.config()
            )));
        }
        Ok(self.score_graph(&build_graph(s, t)?))
    }
}

pub fn pi_score(model: &ErrorModel, s: &ShingleSet, t: &ShingleSet) -> Result<f64> {
    model.pi_score(s, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shingling::{shingle_two_end, ShingleMode};

    fn w(s: &str) -> Word {
        Word::new(s).unwrap()
    }

    fn two_end(s: &str) -> ShingleSet {
        shingle_two_end(&w(s), 2).unwrap()
    }

    fn tok(s: &str) -> Node {
        Some(s.to_string())
    }

    fn mesia_model(alpha: f64, q: f64) -> ErrorModel {
        ErrorModel::train(
            &[(w("mesia"), w("messia"))],
            &ShinglerConfig::bigram(ShingleMode::TwoEnd),
            alpha,
            q,
        )
        .unwrap()
    }

    #[test]
    fn mesia_messia_graph() {
        let g = build_graph(&two_end("mesia"), &two_end("messia")).unwrap();
        assert_eq!(g.top, vec![None]);
        assert_eq!(g.bottom, vec![tok("4ss")]);
        assert_eq!(g.edges, vec![ErrorEdge::new(None, Some("4ss"))]);
    }

    #[test]
    fn identical_words_give_empty_edge() {
        let g = build_graph(&two_end("nuit"), &two_end("nuit")).unwrap();
        assert_eq!(g.edges, vec![ErrorEdge::new(None, None)]);
    }

    #[test]
    fn stupor_stupeur_graph() {
        let s = two_end("stupor");
        let t = two_end("stupeur");
        // brute-force set differences
        let top: Vec<&str> = s.tokens().into_iter().filter(|x| !t.tokens().contains(x)).collect();
        let bottom: Vec<&str> = t.tokens().into_iter().filter(|x| !s.tokens().contains(x)).collect();
        assert_eq!(top, ["po3", "or2"]);
        assert_eq!(bottom, ["pe4", "eu3", "ur2"]);

        let g = build_graph(&s, &t).unwrap();
        assert_eq!(g.top, vec![tok("po3"), None, tok("or2")]);
        assert_eq!(g.bottom, vec![tok("pe4"), tok("eu3"), tok("ur2")]);
        assert_eq!(g.edges.len(), 9);
        assert_eq!(g.edges[3], ErrorEdge::new(None, Some("pe4")));
    }

    #[test]
    fn middle_padding_repeats() {
        let mut side = vec![tok("a"), tok("b")];
        pad_middle(&mut side, 5);
        // insert at 1, then at 1 (len 3 → 1), then at 2 (len 4 → 2)
        assert_eq!(side, vec![tok("a"), None, None, None, tok("b")]);
    }

    #[test]
    fn mismatched_configs_rejected() {
        let a = two_end("mesia");
        let b = shingle_two_end(&w("messia"), 3).unwrap();
        assert!(matches!(build_graph(&a, &b), Err(Error::Usage(_))));
    }

    #[test]
    fn train_single_pair() {
        let m = mesia_model(1.0, 1.0);
        assert_eq!(m.edge_counts().len(), 1);
        assert_eq!(m.count(&ErrorEdge::new(None, Some("4ss"))), 1);
        assert_eq!(m.total_count(), 1);
        assert_eq!(m.distinct_edges(), 2);
    }

    #[test]
    fn train_requires_pairs_and_valid_params() {
        let cfg = ShinglerConfig::bigram(ShingleMode::TwoEnd);
        assert!(matches!(ErrorModel::train(&[], &cfg, 1.0, 1.0), Err(Error::Training(_))));
        assert!(ErrorModel::train(&[(w("a"), w("a"))], &cfg, 0.0, 1.0).is_err());
        assert!(ErrorModel::train(&[(w("a"), w("a"))], &cfg, 1.0, 0.0).is_err());
        let m = ErrorModel::train(&[(w("a"), w("a"))], &cfg, 1.0, 1.0).unwrap();
        assert_eq!(m.count(&ErrorEdge::new(None, None)), 1);
        assert_eq!(m.total_count(), 1);
    }

    #[test]
    fn smoothed_probabilities() {
        let m = mesia_model(1.0, 1.0);
        assert!((m.edge_prob(&ErrorEdge::new(None, Some("4ss"))) - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.edge_prob(&ErrorEdge::new(Some("x1"), Some("4ss"))) - 1.0 / 3.0).abs() < 1e-15);
        let flat = mesia_model(1e12, 1.0);
        assert!((flat.edge_prob(&ErrorEdge::new(None, Some("4ss"))) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn pi_examples() {
        let m = mesia_model(1.0, 1.0);
        let pi = m.pi_score(&two_end("mesia"), &two_end("messia")).unwrap();
        assert!((pi - 2.0 / 3.0).abs() < 1e-15);
        let sharp = mesia_model(1.0, 200.0);
        assert!(sharp.pi_score(&two_end("mesia"), &two_end("messia")).unwrap() < 1e-30);
        // every edge unseen: mean of a constant
        let pi = m.pi_score(&two_end("stupor"), &two_end("stupeur")).unwrap();
        assert!((pi - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn serde_round_trip() {
        let cfg = ShinglerConfig::bigram(ShingleMode::TwoEnd);
        let m = ErrorModel::train(
            &[(w("mesia"), w("messia")), (w("stupor"), w("stupeur")), (w("a"), w("a"))],
            &cfg,
            0.5,
            2.0,
        )
        .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"distinct_edges\":"));
        let back: ErrorModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let tampered = json.replace("\"total_count\":11", "\"total_count\":12");
        assert!(serde_json::from_str::<ErrorModel>(&tampered).is_err());
    }
}
