//! Filtering stage: the thresholded similarity graph, Louvain communities,
//! bridgeness-based pruning of global bridges, and community naming.

mod bridgeness;
mod louvain;
mod naming;
mod refine;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::LocationKey;
use crate::matching::ScoredPair;

pub use bridgeness::{bridgeness_centrality, prune_global_bridges, prune_with_rule};
pub use louvain::{louvain, modularity};
pub use naming::{name_community_centroid, name_community_volume, Member};
pub use refine::refine_communities;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamingStrategy {
    Centroid,
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRule {
    /// Drop every edge touching a node whose bridgeness exceeds the threshold.
    Incident,
    /// Drop only those edges of such nodes that cross sub-communities.
    EdgeBridgeness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    pub threshold: f64,
    pub resolution: f64,
    pub bridgeness_threshold: f64,
    pub location_boost: f64,
    pub seed: u64,
    pub naming: NamingStrategy,
    pub prune_rule: PruneRule,
    /// Total Louvain passes; 2 means one refinement pass after the first.
    pub depth: usize,
    pub refine_until_stable: bool,
    /// Test the threshold against the boosted weight instead of the raw score.
    pub boost_before_threshold: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            threshold: 3.9,
            resolution: 1.0,
            bridgeness_threshold: 1.0,
            location_boost: 1.0,
            seed: 0,
            naming: NamingStrategy::Centroid,
            prune_rule: PruneRule::Incident,
            depth: 2,
            refine_until_stable: false,
            boost_before_threshold: false,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Config(format!("graph.resolution must be > 0, got {}", self.resolution)));
        }
        if !(self.location_boost >= 0.0 && self.location_boost.is_finite()) {
            return Err(Error::Config(format!("graph.location_boost must be >= 0, got {}", self.location_boost)));
        }
        if !self.threshold.is_finite() || !self.bridgeness_threshold.is_finite() {
            return Err(Error::Config("graph thresholds must be finite".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("graph.depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Undirected weighted graph over string node ids, without self-loops.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimilarityGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    adj: Vec<BTreeMap<usize, f64>>,
}

impl SimilarityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_nodes<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut g = Self::new();
        for id in ids {
            g.add_node(id);
        }
        g
    }

    pub fn add_node(&mut self, id: impl Into<String>) -> usize {
        let id = id.into();
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.ids.len();
        self.index.insert(id.clone(), i);
        self.ids.push(id);
        self.adj.push(BTreeMap::new());
        i
    }

    /// Adds or overwrites an edge. Self-loops and non-finite weights are rejected.
    pub fn add_edge(&mut self, a: &str, b: &str, weight: f64) -> Result<()> {
        if a == b {
            return Err(Error::Contract(format!("self-loop on `{a}`")));
        }
        if !weight.is_finite() {
            return Err(Error::Contract(format!("non-finite weight on `{a}`-`{b}`")));
        }
        let (i, j) = (self.add_node(a), self.add_node(b));
        self.adj[i].insert(j, weight);
        self.adj[j].insert(i, weight);
        Ok(())
    }

    pub(crate) fn add_edge_idx(&mut self, i: usize, j: usize, weight: f64) {
        debug_assert!(i != j);
        self.adj[i].insert(j, weight);
        self.adj[j].insert(i, weight);
    }

    pub fn remove_edge(&mut self, a: &str, b: &str) -> bool {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&i), Some(&j)) => self.remove_edge_idx(i, j),
            _ => false,
        }
    }

    pub(crate) fn remove_edge_idx(&mut self, i: usize, j: usize) -> bool {
        let hit = self.adj[i].remove(&j).is_some();
        self.adj[j].remove(&i);
        hit
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn weight(&self, a: &str, b: &str) -> Option<f64> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        self.adj[i].get(&j).copied()
    }

    pub(crate) fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adj[i].iter().map(|(&j, &w)| (j, w))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn has_edge_idx(&self, i: usize, j: usize) -> bool {
        self.adj[i].contains_key(&j)
    }

    /// Edges `(a, b, w)` with `a` before `b` in node order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(move |(i, nb)| {
            nb.range(i + 1..)
                .map(move |(&j, &w)| (self.ids[i].as_str(), self.ids[j].as_str(), w))
        })
    }

    /// Subgraph induced by `nodes`, keeping their order.
    pub fn induced(&self, nodes: &[usize]) -> SimilarityGraph {
        let mut g = SimilarityGraph::with_nodes(nodes.iter().map(|&i| self.ids[i].clone()));
        let local: HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        for (k, &i) in nodes.iter().enumerate() {
            for (&j, &w) in &self.adj[i] {
                if let Some(&l) = local.get(&j) {
                    if k < l {
                        g.add_edge_idx(k, l, w);
                    }
                }
            }
        }
        g
    }

    /// Connected components, each sorted, ordered by smallest node index.
    pub(crate) fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &u in self.adj[v].keys() {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                        stack.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Assignment of node ids to dense community ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignment: BTreeMap<String, usize>,
    canonical: BTreeMap<usize, String>,
}

impl Partition {
    /// Community ids follow the order of each group's smallest member id.
    pub fn from_groups<I, G, S>(groups: I) -> Self
    where
        I: IntoIterator<Item = G>,
        G: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut sets: Vec<BTreeSet<String>> = groups
            .into_iter()
            .map(|g| g.into_iter().map(Into::into).collect::<BTreeSet<String>>())
            .filter(|g| !g.is_empty())
            .collect();
        sets.sort_by(|a, b| a.first().cmp(&b.first()));
        let mut assignment = BTreeMap::new();
        for (cid, set) in sets.into_iter().enumerate() {
            for id in set {
                assignment.insert(id, cid);
            }
        }
        Self {
            assignment,
            canonical: BTreeMap::new(),
        }
    }

    pub(crate) fn from_labels(graph: &SimilarityGraph, labels: &[usize]) -> Self {
        let mut groups: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
        for (i, &c) in labels.iter().enumerate() {
            groups.entry(c).or_default().push(graph.id(i));
        }
        Self::from_groups(groups.into_values())
    }

    pub fn community_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_communities(&self) -> usize {
        self.assignment.values().max().map_or(0, |m| m + 1)
    }

    pub fn assignment(&self) -> &BTreeMap<String, usize> {
        &self.assignment
    }

    /// Members per community id, each sorted.
    pub fn communities(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.num_communities()];
        for (id, &c) in &self.assignment {
            out[c].push(id.clone());
        }
        out
    }

    pub fn set_canonical_name(&mut self, community: usize, name: impl Into<String>) {
        self.canonical.insert(community, name.into());
    }

    pub fn canonical_name(&self, community: usize) -> Option<&str> {
        self.canonical.get(&community).map(String::as_str)
    }

    /// True when every community of `self` lies inside one community of `other`.
    pub fn refines(&self, other: &Partition) -> bool {
        let mut parent: HashMap<usize, usize> = HashMap::new();
        self.assignment.iter().all(|(id, &c)| match other.community_of(id) {
            Some(p) => *parent.entry(c).or_insert(p) == p,
            None => false,
        })
    }
}

/// Edge per pair scoring at least the threshold, boosted by
/// `location_boost` when the two names share a non-blank location. Every id in
/// `nodes` becomes a node, so isolated names are kept.
pub fn build_graph<'a, F>(
    nodes: &[String],
    pairs: &[ScoredPair],
    locations: F,
    params: &FilterParams,
) -> SimilarityGraph
where
    F: Fn(&str) -> Option<&'a BTreeSet<LocationKey>>,
{
    let mut g = SimilarityGraph::with_nodes(nodes.iter().cloned());
    for p in pairs {
        if p.id_a == p.id_b {
            continue;
        }
        let shared = match (locations(&p.id_a), locations(&p.id_b)) {
            (Some(a), Some(b)) => a.iter().any(|l| !l.is_blank() && b.contains(l)),
            _ => false,
        };
        let boosted = if shared { p.score + params.location_boost } else { p.score };
        let tested = if params.boost_before_threshold { boosted } else { p.score };
        if tested >= params.threshold && boosted.is_finite() {
            let (i, j) = (g.add_node(p.id_a.as_str()), g.add_node(p.id_b.as_str()));
            g.add_edge_idx(i, j, boosted);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::harmonize_location;
    use crate::matching::ConditionVector;

    fn pair(a: &str, b: &str, score: f64) -> ScoredPair {
        ScoredPair {
            id_a: a.into(),
            id_b: b.into(),
            conditions: ConditionVector::type1(true, true, false, false, 0.0),
            score,
        }
    }

    #[test]
    fn threshold_and_location_boost() {
        let loc = BTreeSet::from([harmonize_location("Tokyo", "", "JP")]);
        let blank = BTreeSet::from([harmonize_location("", "", "")]);
        let locs: HashMap<&str, &BTreeSet<LocationKey>> =
            HashMap::from([("a", &loc), ("b", &loc), ("c", &blank), ("d", &blank)]);
        let nodes: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let pairs = vec![pair("a", "b", 4.0), pair("c", "d", 4.0), pair("a", "e", 3.8)];
        let g = build_graph(&nodes, &pairs, |id| locs.get(id).copied(), &FilterParams::default());
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.weight("a", "b"), Some(5.0));
        assert_eq!(g.weight("c", "d"), Some(4.0), "blank locations never boost");
        assert_eq!(g.weight("a", "e"), None);

        let early = FilterParams { boost_before_threshold: true, ..FilterParams::default() };
        let pairs = vec![pair("a", "b", 3.0)];
        let g = build_graph(&nodes, &pairs, |id| locs.get(id).copied(), &early);
        assert_eq!(g.weight("a", "b"), Some(4.0));
    }

    #[test]
    fn graph_basics() {
        let mut g = SimilarityGraph::new();
        g.add_edge("x", "y", 1.0).unwrap();
        assert!(g.add_edge("x", "x", 1.0).is_err());
        assert!(g.add_edge("x", "z", f64::NAN).is_err());
        assert_eq!(g.edge_count(), 1);
        assert!(g.remove_edge("y", "x"));
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn partitions_are_dense_and_ordered() {
        let p = Partition::from_groups(vec![vec!["d", "c"], vec!["a"], vec![], vec!["b"]]);
        assert_eq!(p.num_communities(), 3);
        assert_eq!(p.community_of("a"), Some(0));
        assert_eq!(p.community_of("b"), Some(1));
        assert_eq!(p.community_of("c"), Some(2));
        assert_eq!(p.communities()[2], vec!["c".to_string(), "d".to_string()]);
        let coarse = Partition::from_groups(vec![vec!["a", "b"], vec!["c", "d"]]);
        assert!(p.refines(&coarse));
        assert!(!coarse.refines(&p));
    }
}
