//! Louvain modularity maximization with a resolution parameter.
//!
//! Each connected component is optimized on its own (in parallel); a component
//! never merges with another because doing so cannot raise modularity.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Partition, SimilarityGraph};

const MIN_GAIN: f64 = 1e-12;

/// Weighted graph used during aggregation. `self_loops[i]` counts the weight
/// of edges folded inside node `i` (each contributes twice to its degree).
struct WorkGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl WorkGraph {
    fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|(_, w)| w).sum::<f64>() + 2.0 * self.self_loops[i]
    }
}

/// One round of local moves. Returns labels and whether any node moved.
fn local_moves(g: &WorkGraph, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = g.adj.len();
    let degree: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
    let m2: f64 = degree.iter().sum();
    let mut label: Vec<usize> = (0..n).collect();
    if m2 == 0.0 {
        return (label, false);
    }
    let mut tot = degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &i in &order {
            let home = label[i];
            let k = degree[i];
            touched.clear();
            for &(j, w) in &g.adj[i] {
                let c = label[j];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            tot[home] -= k;
            let gain = |c: usize, link_c: f64| link_c - resolution * tot[c] * k / m2;
            let mut best = home;
            let mut best_gain = gain(home, link[home]);
            for &c in &touched {
                let g_c = gain(c, link[c]);
                if g_c > best_gain + MIN_GAIN || (c < best && (g_c - best_gain).abs() <= MIN_GAIN && best != home) {
                    best = c;
                    best_gain = g_c;
                }
            }
            tot[best] += k;
            label[i] = best;
            for &c in &touched {
                link[c] = 0.0;
            }
            link[home] = 0.0;
            if best != home {
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (label, moved_any)
}

/// Collapses communities into nodes; returns the new graph and the dense
/// relabelling of the input labels.
fn aggregate(g: &WorkGraph, label: &[usize]) -> (WorkGraph, Vec<usize>) {
    let mut dense = vec![usize::MAX; label.len()];
    let mut next = 0;
    let mut map = vec![0; label.len()];
    for (i, &l) in label.iter().enumerate() {
        if dense[l] == usize::MAX {
            dense[l] = next;
            next += 1;
        }
        map[i] = dense[l];
    }
    let mut self_loops = vec![0.0; next];
    let mut edges: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); next];
    for i in 0..label.len() {
        let ci = map[i];
        self_loops[ci] += g.self_loops[i];
        for &(j, w) in &g.adj[i] {
            let cj = map[j];
            if ci == cj {
                // each internal edge is seen from both ends
                self_loops[ci] += w / 2.0;
            } else {
                *edges[ci].entry(cj).or_insert(0.0) += w;
            }
        }
    }
    let adj = edges.into_iter().map(|e| e.into_iter().collect()).collect();
    (WorkGraph { adj, self_loops }, map)
}

fn louvain_component(graph: &SimilarityGraph, nodes: &[usize], resolution: f64, seed: u64) -> Vec<usize> {
    let local: std::collections::HashMap<usize, usize> =
        nodes.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let adj = nodes
        .iter()
        .map(|&i| graph.neighbors(i).map(|(j, w)| (local[&j], w)).collect())
        .collect();
    let mut g = WorkGraph {
        adj,
        self_loops: vec![0.0; nodes.len()],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut membership: Vec<usize> = (0..nodes.len()).collect();
    loop {
        let (label, moved) = local_moves(&g, resolution, &mut rng);
        if !moved {
            break;
        }
        let (next, map) = aggregate(&g, &label);
        for m in membership.iter_mut() {
            *m = map[*m];
        }
        g = next;
    }
    membership
}

/// Louvain communities of `graph`; deterministic for a fixed seed.
pub fn louvain(graph: &SimilarityGraph, resolution: f64, seed: u64) -> Partition {
    let components = graph.components();
    let results: Vec<Vec<usize>> = components
        .par_iter()
        .map(|comp| {
            if comp.len() == 1 {
                vec![0]
            } else {
                louvain_component(graph, comp, resolution, seed ^ (comp[0] as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
            }
        })
        .collect();
    let mut labels = vec![0; graph.node_count()];
    let mut offset = 0;
    for (comp, local) in components.iter().zip(&results) {
        for (&node, &l) in comp.iter().zip(local) {
            labels[node] = offset + l;
        }
        offset += local.iter().max().map_or(0, |m| m + 1);
    }
    Partition::from_labels(graph, &labels)
}

/// Modularity with resolution: `sum_c [ L_c / m - resolution * (d_c / 2m)^2 ]`.
/// Ids missing from the partition count as singletons.
pub fn modularity(graph: &SimilarityGraph, partition: &Partition, resolution: f64) -> f64 {
    let n = graph.node_count();
    let base = partition.num_communities();
    let label: Vec<usize> = (0..n)
        .map(|i| partition.community_of(graph.id(i)).unwrap_or(base + i))
        .collect();
    let m: f64 = graph.edges().map(|(_, _, w)| w).sum();
    if m == 0.0 {
        return 0.0;
    }
    let mut internal = std::collections::HashMap::<usize, f64>::new();
    let mut degree = std::collections::HashMap::<usize, f64>::new();
    for i in 0..n {
        for (j, w) in graph.neighbors(i) {
            *degree.entry(label[i]).or_default() += w;
            if label[i] == label[j] && i < j {
                *internal.entry(label[i]).or_default() += w;
            }
        }
    }
    degree
        .iter()
        .map(|(c, d)| internal.get(c).copied().unwrap_or(0.0) / m - resolution * (d / (2.0 * m)).powi(2))
        .sum()
}
