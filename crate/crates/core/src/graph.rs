//! Dynamic attribute graphs: dual token graphs with classifier-weighted
//! edges, weighted-PageRank node ranking, key-token selection, and DOT
//! export.
//!
//! Every sentence contributes a directed edge per consecutive token pair.
//! The positive graph accumulates the sentence score `s` on each occurrence,
//! the negative graph accumulates `1 - s`, so the two graphs always share
//! node and edge-key sets and their weights sum to the occurrence count.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::ScoredCorpus;
use crate::errors::{Error, Result};
use crate::text;

/// Which attribute direction a graph accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Directed token graph with cumulative edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeGraph {
    pub polarity: Polarity,
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<(String, String), f64>,
}

impl AttributeGraph {
    pub fn empty(polarity: Polarity) -> Self {
        Self {
            polarity,
            nodes: BTreeSet::new(),
            edges: BTreeMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_weight(&self, from: &str, to: &str) -> Option<f64> {
        self.edges.get(&(from.to_string(), to.to_string())).copied()
    }
}

/// Node ranking over a graph; scores sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankVector {
    pub scores: BTreeMap<String, f64>,
}

impl RankVector {
    pub fn score(&self, token: &str) -> f64 {
        self.scores.get(token).copied().unwrap_or(0.0)
    }
}

/// Selected key tokens per side, each with its rank score, sorted by rank
/// descending. The two sides never share a token.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeyTokenSet {
    pub positive: Vec<(String, f64)>,
    pub negative: Vec<(String, f64)>,
}

impl KeyTokenSet {
    pub fn is_empty(&self) -> bool {
        self.positive.is_empty() && self.negative.is_empty()
    }

    pub fn positive_tokens(&self) -> impl Iterator<Item = &str> {
        self.positive.iter().map(|(t, _)| t.as_str())
    }

    pub fn negative_tokens(&self) -> impl Iterator<Item = &str> {
        self.negative.iter().map(|(t, _)| t.as_str())
    }
}

/// How key tokens are picked from the rank vectors: a fixed count per graph,
/// or per-side rank thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    TopK { k: usize },
    Threshold { theta_p: f64, theta_n: f64 },
}

/// Ranking and selection settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub mode: SelectionMode,
    /// Tokens never selected as key tokens. They still participate in graph
    /// construction and ranking; filtering applies at selection only.
    pub stopwords: BTreeSet<String>,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            mode: SelectionMode::TopK { k: 10 },
            stopwords: default_stopwords(),
            damping: 0.85,
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

impl SelectionConfig {
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.damping > 0.0 && self.damping < 1.0) {
            errors.push("damping must be in (0, 1)".to_string());
        }
        // NaN fails the comparison and is rejected too.
        let tolerance_valid = self.tolerance > 0.0;
        if !tolerance_valid {
            errors.push("tolerance must be > 0".to_string());
        }
        if self.max_iterations == 0 {
            errors.push("max_iterations must be >= 1".to_string());
        }
        if let SelectionMode::TopK { k } = self.mode {
            if k == 0 {
                errors.push("selection top_k must be >= 1".to_string());
            }
        }
        errors
    }
}

/// The stopword list bundled with the crate; overridable through config.
pub fn default_stopwords() -> BTreeSet<String> {
    include_str!("../assets/stopwords_en.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Build the positive and negative attribute graphs from a scored corpus.
/// Edges link consecutive tokens within each sentence only; repeated
/// adjacent tokens produce a self-loop. Duplicate sentences each contribute
/// their own weight.
pub fn build_attribute_graphs(corpus: &ScoredCorpus) -> (AttributeGraph, AttributeGraph) {
    let mut positive = AttributeGraph::empty(Polarity::Positive);
    let mut negative = AttributeGraph::empty(Polarity::Negative);

    for item in &corpus.items {
        let score = item.score;
        let tokens = &item.sentence.tokens;
        for token in tokens {
            positive.nodes.insert(token.clone());
            negative.nodes.insert(token.clone());
        }
        for pair in tokens.windows(2) {
            let key = (pair[0].clone(), pair[1].clone());
            *positive.edges.entry(key.clone()).or_insert(0.0) += score;
            *negative.edges.entry(key).or_insert(0.0) += 1.0 - score;
        }
    }
    (positive, negative)
}

/// Weighted PageRank by power iteration.
///
/// Each step computes `r <- (1-d)/n + d * (M^T r + dangling_mass / n)` where
/// `M` is the row-normalized weighted adjacency and nodes with zero outgoing
/// weight are dangling (their mass teleports uniformly). Iteration stops when
/// the L1 change drops below `tolerance`; running past `max_iterations`
/// yields an error carrying the last iterate.
pub fn rank_graph(graph: &AttributeGraph, config: &SelectionConfig) -> Result<RankVector> {
    let nodes: Vec<&String> = graph.nodes.iter().collect();
    let n = nodes.len();
    if n == 0 {
        return Err(Error::invalid_input("cannot rank an empty graph"));
    }
    let index: BTreeMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();

    // Out-neighbor lists with weights, and total outgoing weight per node.
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut out_weight = vec![0.0f64; n];
    for ((from, to), &w) in &graph.edges {
        if w > 0.0 {
            let u = index[from.as_str()];
            let v = index[to.as_str()];
            out[u].push((v, w));
            out_weight[u] += w;
        }
    }

    let d = config.damping;
    let uniform = 1.0 / n as f64;
    let mut ranks = vec![uniform; n];
    let mut next = vec![0.0f64; n];

    for _ in 0..config.max_iterations {
        let dangling_mass: f64 = out_weight
            .iter()
            .zip(&ranks)
            .filter(|(&w, _)| w == 0.0)
            .map(|(_, &r)| r)
            .sum();
        next.fill((1.0 - d) * uniform + d * dangling_mass * uniform);
        for u in 0..n {
            if out_weight[u] > 0.0 {
                let scale = d * ranks[u] / out_weight[u];
                for &(v, w) in &out[u] {
                    next[v] += scale * w;
                }
            }
        }
        let delta: f64 = ranks.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut ranks, &mut next);
        if delta < config.tolerance {
            let scores = nodes
                .iter()
                .zip(&ranks)
                .map(|(t, &r)| ((*t).clone(), r))
                .collect();
            return Ok(RankVector { scores });
        }
    }

    let last_iterate: BTreeMap<String, f64> = nodes
        .iter()
        .zip(&ranks)
        .map(|(t, &r)| ((*t).clone(), r))
        .collect();
    let residual: f64 = ranks.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
    Err(Error::RankingDidNotConverge {
        iterations: config.max_iterations,
        residual,
        last_iterate,
    })
}

/// Pick key tokens from the two rank vectors. Stopwords and pure-punctuation
/// tokens are excluded; a token surviving into both preliminary lists goes to
/// the side where it ranks higher, and is dropped from both on an exact tie.
/// Ordering is rank-descending with lexicographic tie-break.
pub fn select_key_tokens(
    ranks_pos: &RankVector,
    ranks_neg: &RankVector,
    config: &SelectionConfig,
) -> Result<KeyTokenSet> {
    if ranks_pos.scores.len() != ranks_neg.scores.len()
        || !ranks_pos.scores.keys().eq(ranks_neg.scores.keys())
    {
        return Err(Error::invalid_input(
            "positive and negative rank vectors must cover the same node set",
        ));
    }

    let eligible = |token: &str| -> bool {
        !config.stopwords.contains(token) && !text::is_pure_punctuation(token)
    };

    let preliminary = |ranks: &RankVector, side_threshold: Option<f64>| -> Vec<(String, f64)> {
        let mut entries: Vec<(String, f64)> = ranks
            .scores
            .iter()
            .filter(|(t, _)| eligible(t))
            .map(|(t, &r)| (t.clone(), r))
            .collect();
        entries.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        match (config.mode, side_threshold) {
            (SelectionMode::TopK { k }, _) => {
                entries.truncate(k);
                entries
            }
            (SelectionMode::Threshold { .. }, Some(theta)) => {
                entries.into_iter().filter(|(_, r)| *r > theta).collect()
            }
            (SelectionMode::Threshold { .. }, None) => unreachable!(),
        }
    };

    let (theta_p, theta_n) = match config.mode {
        SelectionMode::TopK { .. } => (None, None),
        SelectionMode::Threshold { theta_p, theta_n } => (Some(theta_p), Some(theta_n)),
    };
    let pos_list = preliminary(ranks_pos, theta_p);
    let neg_list = preliminary(ranks_neg, theta_n);

    let pos_set: BTreeSet<&str> = pos_list.iter().map(|(t, _)| t.as_str()).collect();
    let neg_set: BTreeSet<&str> = neg_list.iter().map(|(t, _)| t.as_str()).collect();

    let positive = pos_list
        .iter()
        .filter(|(t, r)| !neg_set.contains(t.as_str()) || *r > ranks_neg.score(t))
        .cloned()
        .collect();
    let negative = neg_list
        .iter()
        .filter(|(t, r)| !pos_set.contains(t.as_str()) || *r > ranks_pos.score(t))
        .cloned()
        .collect();

    Ok(KeyTokenSet { positive, negative })
}

/// Render the graph in DOT form: nodes and edges in sorted order, weights
/// with four decimals, byte-stable for identical graphs.
pub fn export_dot(graph: &AttributeGraph) -> String {
    let mut out = String::from("digraph g {\n");
    for node in &graph.nodes {
        out.push_str(&format!("  \"{}\";\n", escape_dot(node)));
    }
    for ((from, to), weight) in &graph.edges {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{:.4}\"];\n",
            escape_dot(from),
            escape_dot(to),
            weight
        ));
    }
    out.push_str("}\n");
    out
}

fn escape_dot(token: &str) -> String {
    token.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ScoredSentence, Sentence};

    fn corpus_of(items: &[(&str, f64)]) -> ScoredCorpus {
        ScoredCorpus {
            prompt: "p".to_string(),
            items: items
                .iter()
                .map(|(text, score)| ScoredSentence {
                    sentence: Sentence::new(*text),
                    score: *score,
                })
                .collect(),
        }
    }

    #[test]
    fn dual_graphs_accumulate_score_and_complement() {
        let corpus = corpus_of(&[("bad dog bites", 0.2), ("good dog plays", 0.9)]);
        let (pos, neg) = build_attribute_graphs(&corpus);

        assert_eq!(pos.edge_weight("bad", "dog"), Some(0.2));
        assert_eq!(pos.edge_weight("dog", "bites"), Some(0.2));
        assert_eq!(pos.edge_weight("good", "dog"), Some(0.9));
        assert_eq!(pos.edge_weight("dog", "plays"), Some(0.9));

        assert!((neg.edge_weight("bad", "dog").unwrap() - 0.8).abs() < 1e-12);
        assert!((neg.edge_weight("dog", "bites").unwrap() - 0.8).abs() < 1e-12);
        assert!((neg.edge_weight("good", "dog").unwrap() - 0.1).abs() < 1e-12);
        assert!((neg.edge_weight("dog", "plays").unwrap() - 0.1).abs() < 1e-12);

        assert_eq!(pos.nodes, neg.nodes);
        assert!(pos.edges.keys().eq(neg.edges.keys()));
    }

    #[test]
    fn full_score_zeroes_the_negative_graph() {
        let corpus = corpus_of(&[("calm kind words", 1.0)]);
        let (_, neg) = build_attribute_graphs(&corpus);
        assert!(neg.edges.values().all(|&w| w == 0.0));
    }

    #[test]
    fn repeated_pairs_accumulate_per_occurrence() {
        let corpus = corpus_of(&[("a b a b", 0.5)]);
        let (pos, _) = build_attribute_graphs(&corpus);
        assert!((pos.edge_weight("a", "b").unwrap() - 1.0).abs() < 1e-12);
        assert!((pos.edge_weight("b", "a").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn adjacent_repetition_forms_a_self_loop() {
        let corpus = corpus_of(&[("very very fast", 0.5)]);
        let (pos, _) = build_attribute_graphs(&corpus);
        assert_eq!(pos.edge_weight("very", "very"), Some(0.5));
    }

    #[test]
    fn symmetric_two_node_cycle_ranks_evenly() {
        let mut graph = AttributeGraph::empty(Polarity::Positive);
        graph.nodes.extend(["a".to_string(), "b".to_string()]);
        graph.edges.insert(("a".to_string(), "b".to_string()), 1.0);
        graph.edges.insert(("b".to_string(), "a".to_string()), 1.0);
        let ranks = rank_graph(&graph, &SelectionConfig::default()).unwrap();
        assert!((ranks.score("a") - 0.5).abs() < 1e-6);
        assert!((ranks.score("b") - 0.5).abs() < 1e-6);
    }

    #[test]
    fn single_edge_matches_closed_form() {
        // For a -> b with damping d and b dangling, the fixed point solves
        // r_a = (1-d)/2 + d*r_b/2 and r_a + r_b = 1, giving r_a = 0.5/1.425.
        let mut graph = AttributeGraph::empty(Polarity::Positive);
        graph.nodes.extend(["a".to_string(), "b".to_string()]);
        graph.edges.insert(("a".to_string(), "b".to_string()), 2.5);
        let ranks = rank_graph(&graph, &SelectionConfig::default()).unwrap();
        let expected_a = 0.5 / 1.425;
        assert!((ranks.score("a") - expected_a).abs() < 1e-6);
        assert!((ranks.score("b") - (1.0 - expected_a)).abs() < 1e-6);
    }

    #[test]
    fn ranks_sum_to_one() {
        let corpus = corpus_of(&[
            ("the dog runs far away", 0.3),
            ("a good dog plays", 0.8),
            ("the bad cat hides", 0.1),
        ]);
        let (pos, neg) = build_attribute_graphs(&corpus);
        for graph in [&pos, &neg] {
            let ranks = rank_graph(graph, &SelectionConfig::default()).unwrap();
            let sum: f64 = ranks.scores.values().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn scaling_weights_leaves_ranks_unchanged() {
        let corpus = corpus_of(&[("the dog runs", 0.25), ("dog runs far", 0.75)]);
        let (pos, _) = build_attribute_graphs(&corpus);
        let mut scaled = pos.clone();
        for w in scaled.edges.values_mut() {
            *w *= 37.5;
        }
        let config = SelectionConfig::default();
        let a = rank_graph(&pos, &config).unwrap();
        let b = rank_graph(&scaled, &config).unwrap();
        for (token, &r) in &a.scores {
            assert!((r - b.score(token)).abs() < 1e-9);
        }
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        // a -> b decays geometrically toward the fixed point, so an
        // unreachable tolerance forces the iteration cap to trip.
        let mut graph = AttributeGraph::empty(Polarity::Positive);
        graph.nodes.extend(["a".to_string(), "b".to_string()]);
        graph.edges.insert(("a".to_string(), "b".to_string()), 1.0);
        let config = SelectionConfig {
            tolerance: 1e-30,
            max_iterations: 2,
            ..SelectionConfig::default()
        };
        match rank_graph(&graph, &config) {
            Err(Error::RankingDidNotConverge {
                iterations,
                last_iterate,
                ..
            }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last_iterate.len(), 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn empty_graph_cannot_be_ranked() {
        let graph = AttributeGraph::empty(Polarity::Positive);
        assert!(rank_graph(&graph, &SelectionConfig::default()).is_err());
    }

    fn rank_vector(pairs: &[(&str, f64)]) -> RankVector {
        RankVector {
            scores: pairs.iter().map(|(t, r)| (t.to_string(), *r)).collect(),
        }
    }

    fn top_k_config(k: usize, stopwords: &[&str]) -> SelectionConfig {
        SelectionConfig {
            mode: SelectionMode::TopK { k },
            stopwords: stopwords.iter().map(|s| s.to_string()).collect(),
            ..SelectionConfig::default()
        }
    }

    #[test]
    fn selection_filters_stopwords_and_takes_top_k() {
        let pos = rank_vector(&[("good", 0.4), ("the", 0.35), ("dog", 0.25), ("bad", 0.0)]);
        let neg = rank_vector(&[("bad", 0.5), ("the", 0.3), ("dog", 0.2), ("good", 0.0)]);
        let keys = select_key_tokens(&pos, &neg, &top_k_config(1, &["the"])).unwrap();
        assert_eq!(keys.positive, vec![("good".to_string(), 0.4)]);
        assert_eq!(keys.negative, vec![("bad".to_string(), 0.5)]);
    }

    #[test]
    fn selection_needs_matching_node_sets() {
        let pos = rank_vector(&[("good", 0.6), ("bad", 0.4)]);
        let neg = rank_vector(&[("good", 1.0)]);
        assert!(select_key_tokens(&pos, &neg, &top_k_config(5, &[])).is_err());
    }

    #[test]
    fn overlap_goes_to_the_higher_ranking_side() {
        let pos = rank_vector(&[("dog", 0.7), ("good", 0.3)]);
        let neg = rank_vector(&[("dog", 0.2), ("good", 0.8)]);
        let keys = select_key_tokens(&pos, &neg, &top_k_config(5, &[])).unwrap();
        assert_eq!(keys.positive, vec![("dog".to_string(), 0.7)]);
        assert_eq!(keys.negative, vec![("good".to_string(), 0.8)]);
    }

    #[test]
    fn exact_tie_excludes_the_token_from_both_sides() {
        let pos = rank_vector(&[("dog", 0.3), ("kind", 0.7)]);
        let neg = rank_vector(&[("dog", 0.3), ("kind", 0.7)]);
        let keys = select_key_tokens(&pos, &neg, &top_k_config(5, &[])).unwrap();
        assert!(keys.positive.is_empty());
        assert!(keys.negative.is_empty());
    }

    #[test]
    fn all_stopwords_yield_empty_lists() {
        let pos = rank_vector(&[("the", 0.5), ("a", 0.5)]);
        let neg = rank_vector(&[("the", 0.5), ("a", 0.5)]);
        let keys = select_key_tokens(&pos, &neg, &top_k_config(3, &["the", "a"])).unwrap();
        assert!(keys.is_empty());
    }

    #[test]
    fn threshold_mode_selects_strictly_above() {
        let pos = rank_vector(&[("good", 0.4), ("dog", 0.3), ("meh", 0.3)]);
        let neg = rank_vector(&[("good", 0.1), ("dog", 0.5), ("meh", 0.4)]);
        let config = SelectionConfig {
            mode: SelectionMode::Threshold {
                theta_p: 0.3,
                theta_n: 0.45,
            },
            stopwords: BTreeSet::new(),
            ..SelectionConfig::default()
        };
        let keys = select_key_tokens(&pos, &neg, &config).unwrap();
        assert_eq!(keys.positive, vec![("good".to_string(), 0.4)]);
        assert_eq!(keys.negative, vec![("dog".to_string(), 0.5)]);
    }

    #[test]
    fn dot_export_is_stable_and_formatted() {
        let mut graph = AttributeGraph::empty(Polarity::Positive);
        graph.nodes.extend(["a".to_string(), "b".to_string()]);
        graph.edges.insert(("a".to_string(), "b".to_string()), 0.5);
        let dot = export_dot(&graph);
        assert!(dot.contains("\"a\" -> \"b\" [label=\"0.5000\"]"), "{dot}");
        assert_eq!(dot, export_dot(&graph));

        let empty = export_dot(&AttributeGraph::empty(Polarity::Negative));
        assert_eq!(empty, "digraph g {\n}\n");
    }

    #[test]
    fn default_stopwords_cover_function_words() {
        let stopwords = default_stopwords();
        for word in ["the", "a", "and", "of", "is"] {
            assert!(stopwords.contains(word), "missing stopword {word}");
        }
        assert!(!stopwords.contains("dog"));
    }
}
