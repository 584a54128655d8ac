//! Instruction clustering: a thresholded cosine-similarity graph whose
//! maximal cliques become task clusters.

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::embed::{cosine, EmbedError, EmbeddingProvider};

/// Default similarity threshold for graph edges.
pub const DEFAULT_TAU: f64 = 0.85;

/// Graphs larger than this are rejected before clique enumeration.
pub const DEFAULT_NODE_LIMIT: usize = 5000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("duplicate instruction id {0:?}")]
    DuplicateId(String),
    #[error("tau must lie in [0, 1), got {0}")]
    InvalidTau(f64),
    #[error("graph has {nodes} nodes, limit is {limit}")]
    TooManyNodes { nodes: usize, limit: usize },
    #[error("edge references unknown node index {0}")]
    UnknownNode(usize),
    #[error("self-loop on node index {0}")]
    SelfLoop(usize),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Undirected graph over instruction ids. Node `i` is `node_ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    node_ids: Vec<String>,
    adjacency: Vec<BTreeSet<usize>>,
    tau: f64,
}

impl SimilarityGraph {
    /// Builds a graph from explicit index pairs. Used by tests and tooling
    /// that already know the edges.
    pub fn from_edges(
        node_ids: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        tau: f64,
    ) -> Result<Self, ClusterError> {
        check_unique(&node_ids)?;
        let mut adjacency = vec![BTreeSet::new(); node_ids.len()];
        for (a, b) in edges {
            if a >= node_ids.len() {
                return Err(ClusterError::UnknownNode(a));
            }
            if b >= node_ids.len() {
                return Err(ClusterError::UnknownNode(b));
            }
            if a == b {
                return Err(ClusterError::SelfLoop(a));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        Ok(Self { node_ids, adjacency, tau })
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency.get(a).is_some_and(|n| n.contains(&b))
    }

    pub fn neighbors(&self, node: usize) -> &BTreeSet<usize> {
        &self.adjacency[node]
    }

    /// Edges as `(low, high)` index pairs in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }
}

/// A maximal clique, as a sorted set of instruction ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cluster {
    pub member_ids: BTreeSet<String>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }
}

fn check_unique(ids: &[String]) -> Result<(), ClusterError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(ClusterError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

/// Connects every pair whose embedding cosine is strictly greater than `tau`.
/// Each text is embedded exactly once.
pub fn build_similarity_graph(
    instructions: &[(String, String)],
    provider: &dyn EmbeddingProvider,
    tau: f64,
) -> Result<SimilarityGraph, ClusterError> {
    if !(0.0..1.0).contains(&tau) {
        return Err(ClusterError::InvalidTau(tau));
    }
    let ids: Vec<String> = instructions.iter().map(|(id, _)| id.clone()).collect();
    check_unique(&ids)?;
    let embeddings = instructions.iter().map(|(_, text)| provider.embed(text)).collect::<Result<Vec<_>, _>>()?;
    let mut edges = Vec::new();
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            if cosine(&embeddings[i], &embeddings[j])? > tau {
                edges.push((i, j));
            }
        }
    }
    SimilarityGraph::from_edges(ids, edges, tau)
}

/// Enumerates all maximal cliques with the default node limit.
pub fn maximal_cliques(graph: &SimilarityGraph) -> Result<Vec<Cluster>, ClusterError> {
    maximal_cliques_with_limit(graph, DEFAULT_NODE_LIMIT)
}

/// Pivoting Bron–Kerbosch. Isolated nodes come out as singletons. Output is
/// sorted by size descending, then by smallest member id, then by the full
/// member list.
pub fn maximal_cliques_with_limit(graph: &SimilarityGraph, node_limit: usize) -> Result<Vec<Cluster>, ClusterError> {
    if graph.len() > node_limit {
        return Err(ClusterError::TooManyNodes { nodes: graph.len(), limit: node_limit });
    }
    if graph.is_empty() {
        return Ok(Vec::new());
    }
    let mut found: Vec<Vec<usize>> = Vec::new();
    let candidates: BTreeSet<usize> = (0..graph.len()).collect();
    expand(graph, &mut Vec::new(), candidates, BTreeSet::new(), &mut found);

    let mut clusters: Vec<Cluster> = found
        .into_iter()
        .map(|members| Cluster { member_ids: members.into_iter().map(|i| graph.node_ids[i].clone()).collect() })
        .collect();
    clusters.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.member_ids.first().cmp(&b.member_ids.first()))
            .then_with(|| a.member_ids.cmp(&b.member_ids))
    });
    Ok(clusters)
}

fn expand(
    graph: &SimilarityGraph,
    current: &mut Vec<usize>,
    mut candidates: BTreeSet<usize>,
    mut excluded: BTreeSet<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if candidates.is_empty() {
        if excluded.is_empty() {
            out.push(current.clone());
        }
        return;
    }
    // Pivot on the vertex covering the most candidates.
    let pivot = candidates
        .iter()
        .chain(excluded.iter())
        .copied()
        .max_by_key(|&u| (graph.neighbors(u).intersection(&candidates).count(), usize::MAX - u))
        .expect("candidates is nonempty");
    let branch: Vec<usize> = candidates.iter().copied().filter(|v| !graph.has_edge(pivot, *v)).collect();
    for v in branch {
        let neighbors = graph.neighbors(v);
        current.push(v);
        expand(
            graph,
            current,
            candidates.intersection(neighbors).copied().collect(),
            excluded.intersection(neighbors).copied().collect(),
            out,
        );
        current.pop();
        candidates.remove(&v);
        excluded.insert(v);
    }
}

/// Graph construction followed by clique extraction.
pub fn cluster_instructions(
    instructions: &[(String, String)],
    provider: &dyn EmbeddingProvider,
    tau: f64,
) -> Result<Vec<Cluster>, ClusterError> {
    let graph = build_similarity_graph(instructions, provider, tau)?;
    maximal_cliques(&graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{embed_text, HashedBagOfWords};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
    }

    fn set(members: &[&str]) -> Cluster {
        Cluster { member_ids: members.iter().map(|s| s.to_string()).collect() }
    }

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn triangle_is_one_clique() {
        let g = SimilarityGraph::from_edges(ids(3), [(0, 1), (1, 2), (0, 2)], 0.5).unwrap();
        assert_eq!(maximal_cliques(&g).unwrap(), vec![set(&["a", "b", "c"])]);
    }

    #[test]
    fn path_gives_two_edges() {
        let g = SimilarityGraph::from_edges(ids(3), [(0, 1), (1, 2)], 0.5).unwrap();
        assert_eq!(maximal_cliques(&g).unwrap(), vec![set(&["a", "b"]), set(&["b", "c"])]);
    }

    #[test]
    fn isolated_nodes_are_singletons() {
        let g = SimilarityGraph::from_edges(ids(3), [], 0.5).unwrap();
        assert_eq!(maximal_cliques(&g).unwrap(), vec![set(&["a"]), set(&["b"]), set(&["c"])]);
    }

    #[test]
    fn empty_graph_has_no_cliques() {
        let g = build_similarity_graph(&[], &HashedBagOfWords::default(), 0.5).unwrap();
        assert!(g.is_empty());
        assert!(maximal_cliques(&g).unwrap().is_empty());
    }

    #[test]
    fn identical_texts_are_linked() {
        let g = build_similarity_graph(
            &pairs(&[("x", "open the settings"), ("y", "open the settings")]),
            &HashedBagOfWords::default(),
            0.9,
        )
        .unwrap();
        assert_eq!(g.edges(), vec![(0, 1)]);
    }

    #[test]
    fn tie_at_tau_is_not_an_edge() {
        let provider = HashedBagOfWords::default();
        let a = embed_text("uninstall app x").unwrap();
        let b = embed_text("uninstall app y").unwrap();
        let c = cosine(&a, &b).unwrap();
        let g = build_similarity_graph(&pairs(&[("a", "uninstall app x"), ("b", "uninstall app y")]), &provider, c)
            .unwrap();
        assert!(g.edges().is_empty());
    }

    #[test]
    fn uninstall_pair_separates_from_weather() {
        let texts = ["uninstall app X", "uninstall app Y", "check the weather"];
        let e: Vec<_> = texts.iter().map(|t| embed_text(t).unwrap()).collect();
        let c01 = cosine(&e[0], &e[1]).unwrap();
        let c02 = cosine(&e[0], &e[2]).unwrap();
        let c12 = cosine(&e[1], &e[2]).unwrap();
        // Pairwise cosines computed up front pin tau = 0.5 as a separator.
        assert!(c01 > 0.5 && c02 <= 0.5 && c12 <= 0.5, "{c01} {c02} {c12}");

        let input = pairs(&[("u1", texts[0]), ("u2", texts[1]), ("w", texts[2])]);
        let g = build_similarity_graph(&input, &HashedBagOfWords::default(), 0.5).unwrap();
        assert_eq!(g.edges(), vec![(0, 1)]);
        let clusters = cluster_instructions(&input, &HashedBagOfWords::default(), 0.5).unwrap();
        assert_eq!(clusters, vec![set(&["u1", "u2"]), set(&["w"])]);
    }

    #[test]
    fn single_instruction_is_singleton() {
        let clusters =
            cluster_instructions(&pairs(&[("only", "book a table")]), &HashedBagOfWords::default(), 0.85).unwrap();
        assert_eq!(clusters, vec![set(&["only"])]);
    }

    #[test]
    fn tau_zero_connects_bag_embeddings() {
        let input = pairs(&[("1", "call mom"), ("2", "call dad"), ("3", "call the office"), ("4", "call a taxi")]);
        let clusters = cluster_instructions(&input, &HashedBagOfWords::default(), 0.0).unwrap();
        assert_eq!(clusters, vec![set(&["1", "2", "3", "4"])]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err =
            build_similarity_graph(&pairs(&[("a", "x"), ("a", "y")]), &HashedBagOfWords::default(), 0.5).unwrap_err();
        assert_eq!(err, ClusterError::DuplicateId("a".into()));
    }

    #[test]
    fn node_limit_guard() {
        let g = SimilarityGraph::from_edges(ids(5), [], 0.5).unwrap();
        assert_eq!(maximal_cliques_with_limit(&g, 4).unwrap_err(), ClusterError::TooManyNodes { nodes: 5, limit: 4 });
    }

    #[test]
    fn malformed_edges_rejected() {
        assert_eq!(SimilarityGraph::from_edges(ids(2), [(0, 0)], 0.5).unwrap_err(), ClusterError::SelfLoop(0));
        assert_eq!(SimilarityGraph::from_edges(ids(2), [(0, 7)], 0.5).unwrap_err(), ClusterError::UnknownNode(7));
    }
}
