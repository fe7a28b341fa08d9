//! Bridgeness centrality: the part of betweenness carried by shortest paths
//! whose endpoints both lie outside the node's closed neighbourhood.
//!
//! `B(v) = sum over unordered {s, t}, s, t not in N[v], of sigma_st(v) / sigma_st`
//! on the unweighted skeleton. A node gluing two dense groups scores high,
//! while a node inside a clique scores zero.

use rayon::prelude::*;

use super::{louvain, FilterParams, PruneRule, SimilarityGraph};

const CHUNK: usize = 32;

/// Brandes-style accumulation from source `s`, with the contribution of
/// targets adjacent to `v` subtracted so only far pairs remain.
fn accumulate_from(g: &SimilarityGraph, s: usize, out: &mut [f64]) {
    let n = g.node_count();
    let mut dist = vec![usize::MAX; n];
    let mut sigma = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::new();
    dist[s] = 0;
    sigma[s] = 1.0;
    queue.push_back(s);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for (w, _) in g.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
            }
        }
    }
    let mut delta = vec![0.0f64; n];
    for &w in order.iter().rev() {
        for (v, _) in g.neighbors(w) {
            if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
        }
    }
    for &v in &order {
        // s must lie outside N[v]
        if dist[v] < 2 {
            continue;
        }
        let mut near = 0.0;
        for (t, _) in g.neighbors(v) {
            if dist[t] == dist[v] + 1 {
                near += sigma[v] / sigma[t];
            }
        }
        out[v] += delta[v] - near;
    }
}

/// Bridgeness of every node, indexed like `g.ids()`.
pub fn bridgeness_centrality(g: &SimilarityGraph) -> Vec<f64> {
    let n = g.node_count();
    let sources: Vec<usize> = (0..n).collect();
    let partial: Vec<Vec<f64>> = sources
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            for &s in chunk {
                accumulate_from(g, s, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for p in &partial {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    // every unordered pair was counted from both ends
    for t in &mut total {
        *t = (*t / 2.0).max(0.0);
        if t.abs() < 1e-9 {
            *t = 0.0;
        }
    }
    total
}

/// Removes all edges incident to nodes whose bridgeness exceeds
/// `threshold`. Returns the pruned graph and the number of deleted edges.
pub fn prune_global_bridges(g: &SimilarityGraph, threshold: f64) -> (SimilarityGraph, usize) {
    let b = bridgeness_centrality(g);
    let mut out = g.clone();
    let mut removed = 0;
    for v in 0..g.node_count() {
        if b[v] > threshold {
            for (u, _) in g.neighbors(v) {
                if out.remove_edge_idx(v, u) {
                    removed += 1;
                }
            }
        }
    }
    (out, removed)
}

/// Pruning according to `params.prune_rule`. The edge rule keeps the edges of
/// a high-bridgeness node that stay within its own sub-community.
pub fn prune_with_rule(g: &SimilarityGraph, params: &FilterParams, seed: u64) -> (SimilarityGraph, usize) {
    match params.prune_rule {
        PruneRule::Incident => prune_global_bridges(g, params.bridgeness_threshold),
        PruneRule::EdgeBridgeness => {
            let b = bridgeness_centrality(g);
            if b.iter().all(|&x| x <= params.bridgeness_threshold) {
                return (g.clone(), 0);
            }
            let sub = louvain(g, params.resolution, seed);
            let mut out = g.clone();
            let mut removed = 0;
            for v in 0..g.node_count() {
                if b[v] <= params.bridgeness_threshold {
                    continue;
                }
                let cv = sub.community_of(g.id(v));
                for (u, _) in g.neighbors(v) {
                    if sub.community_of(g.id(u)) != cv && out.remove_edge_idx(v, u) {
                        removed += 1;
                    }
                }
            }
            (out, removed)
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct evaluation from all-pairs shortest path counts.
    pub(crate) fn bridgeness_oracle(g: &SimilarityGraph) -> Vec<f64> {
        let n = g.node_count();
        let inf = usize::MAX;
        let mut d = vec![vec![inf; n]; n];
        let mut c = vec![vec![0.0f64; n]; n];
        for s in 0..n {
            d[s][s] = 0;
            c[s][s] = 1.0;
            let mut frontier = vec![s];
            let mut level = 0;
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for &v in &frontier {
                    for (w, _) in g.neighbors(v) {
                        if d[s][w] == inf {
                            d[s][w] = level + 1;
                            next.push(w);
                        }
                        if d[s][w] == level + 1 {
                            c[s][w] += c[s][v];
                        }
                    }
                }
                next.sort_unstable();
                next.dedup();
                frontier = next;
                level += 1;
            }
        }
        (0..n)
            .map(|v| {
                let far = |x: usize| x != v && !g.has_edge_idx(v, x);
                let mut b = 0.0;
                for s in 0..n {
                    for t in s + 1..n {
                        if !far(s) || !far(t) || d[s][t] == inf || d[s][v] == inf || d[v][t] == inf {
                            continue;
                        }
                        if d[s][v] + d[v][t] == d[s][t] {
                            b += c[s][v] * c[v][t] / c[s][t];
                        }
                    }
                }
                b
            })
            .collect()
    }

    fn from_edges(n: usize, edges: &[(usize, usize)]) -> SimilarityGraph {
        let mut g = SimilarityGraph::with_nodes((0..n).map(|i| format!("v{i:02}")));
        for &(a, b) in edges {
            if a != b {
                g.add_edge_idx(a, b, 1.0);
            }
        }
        g
    }

    pub(crate) fn joint_venture() -> SimilarityGraph {
        // two 4-cliques a0..a3 and b0..b3; j links a0 and b0
        let mut g = SimilarityGraph::new();
        let a = ["a0", "a1", "a2", "a3"];
        let b = ["b0", "b1", "b2", "b3"];
        for side in [a, b] {
            for i in 0..4 {
                for k in i + 1..4 {
                    g.add_edge(side[i], side[k], 1.0).unwrap();
                }
            }
        }
        g.add_edge("j", "a0", 1.0).unwrap();
        g.add_edge("j", "b0", 1.0).unwrap();
        g
    }

    #[test]
    fn path_center() {
        let g = from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let b = bridgeness_centrality(&g);
        assert_eq!(b, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn clique_is_zero() {
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                edges.push((i, j));
            }
        }
        assert!(bridgeness_centrality(&from_edges(6, &edges)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn joint_venture_node_is_the_only_bridge() {
        let g = joint_venture();
        let b = bridgeness_centrality(&g);
        let j = g.index_of("j").unwrap();
        // 3 far nodes on each side: 3 * 3 pairs all route through j
        assert!((b[j] - 9.0).abs() < 1e-12);
        for (i, &x) in b.iter().enumerate() {
            if i != j {
                assert!(x <= 1.0, "{} = {x}", g.id(i));
            }
        }
        let (pruned, removed) = prune_global_bridges(&g, 1.0);
        assert_eq!(removed, 2);
        assert_eq!(pruned.degree(j), 0);
        assert_eq!(pruned.edge_count(), 12);
    }

    #[test]
    fn edge_rule_keeps_intra_community_edges() {
        // j belongs to the a-clique through three edges but bridges to b0
        let mut g = joint_venture();
        g.add_edge("j", "a1", 1.0).unwrap();
        g.add_edge("j", "a2", 1.0).unwrap();
        let params = FilterParams { prune_rule: PruneRule::EdgeBridgeness, ..FilterParams::default() };
        let (pruned, removed) = prune_with_rule(&g, &params, 0);
        assert_eq!(removed, 1);
        assert!(pruned.weight("j", "a0").is_some());
        assert!(pruned.weight("j", "b0").is_none());
    }

    #[test]
    fn disconnected_pairs_contribute_nothing() {
        let g = from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]);
        assert_eq!(bridgeness_centrality(&g), vec![0.0; 6]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_oracle(n in 2usize..12, raw in proptest::collection::vec((0usize..12, 0usize..12), 0..30)) {
            let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            let g = from_edges(n, &edges);
            let fast = bridgeness_centrality(&g);
            let slow = bridgeness_oracle(&g);
            for (f, s) in fast.iter().zip(&slow) {
                prop_assert!((f - s).abs() < 1e-9, "{fast:?} vs {slow:?}");
            }
        }

        #[test]
        fn pruning_only_removes(n in 2usize..10, raw in proptest::collection::vec((0usize..10, 0usize..10), 0..25), beta in 0.0f64..4.0) {
            let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            let g = from_edges(n, &edges);
            let (p, removed) = prune_global_bridges(&g, beta);
            prop_assert_eq!(p.edge_count() + removed, g.edge_count());
            for (a, b, _) in p.edges() {
                prop_assert!(g.weight(a, b).is_some());
            }
        }
    }
}
