use rayon::prelude::*;

use super::{louvain, prune_with_rule, FilterParams, Partition, SimilarityGraph};

const MAX_STABLE_PASSES: usize = 32;

fn pass_seed(seed: u64, pass: usize, community: usize) -> u64 {
    seed.wrapping_add((pass as u64) << 32).wrapping_add(community as u64)
}

/// Louvain on the whole graph, then for each community: prune its induced
/// subgraph of global bridges and run Louvain again. `params.depth` counts the
/// total passes; `refine_until_stable` keeps going until nothing is pruned.
///
/// Returns the final partition and the graph with pruned edges removed.
pub fn refine_communities(graph: &SimilarityGraph, params: &FilterParams) -> (Partition, SimilarityGraph) {
    let mut work = graph.clone();
    let mut partition = louvain(&work, params.resolution, params.seed);
    let passes = if params.refine_until_stable { MAX_STABLE_PASSES } else { params.depth.saturating_sub(1) };
    for pass in 1..=passes {
        let communities = partition.communities();
        let refined: Vec<(Vec<Vec<String>>, Vec<(String, String)>)> = communities
            .par_iter()
            .enumerate()
            .map(|(cid, members)| {
                if members.len() < 3 {
                    return (vec![members.clone()], Vec::new());
                }
                let idx: Vec<usize> = members.iter().map(|m| work.index_of(m).expect("member in graph")).collect();
                let sub = work.induced(&idx);
                let seed = pass_seed(params.seed, pass, cid);
                let (pruned, removed) = prune_with_rule(&sub, params, seed);
                // nothing to prune: the community stands as found
                if removed == 0 {
                    return (vec![members.clone()], Vec::new());
                }
                let dropped = sub
                    .edges()
                    .filter(|(a, b, _)| pruned.weight(a, b).is_none())
                    .map(|(a, b, _)| (a.to_string(), b.to_string()))
                    .collect();
                let groups = louvain(&pruned, params.resolution, seed).communities();
                (groups, dropped)
            })
            .collect();
        let mut any_removed = false;
        let mut groups = Vec::new();
        for (g, dropped) in refined {
            groups.extend(g);
            for (a, b) in dropped {
                any_removed |= work.remove_edge(&a, &b);
            }
        }
        let next = Partition::from_groups(groups);
        let changed = next != partition;
        partition = next;
        if params.refine_until_stable && !any_removed && !changed {
            break;
        }
    }
    (partition, work)
}

#[cfg(test)]
mod tests {
    use super::super::bridgeness::tests::joint_venture;
    use super::*;
    use crate::graph::PruneRule;

    #[test]
    fn joint_venture_is_split_off() {
        let g = joint_venture();
        // at low resolution the first pass keeps everything together and the
        // refinement pass isolates the joining node
        let params = FilterParams { resolution: 0.05, ..FilterParams::default() };
        assert_eq!(louvain(&g, params.resolution, params.seed).num_communities(), 1);
        let (p, pruned) = refine_communities(&g, &params);
        assert_eq!(pruned.degree(pruned.index_of("j").unwrap()), 0);
        let cj = p.community_of("j").unwrap();
        assert_eq!(p.communities()[cj], vec!["j".to_string()]);
        assert_ne!(p.community_of("a1"), p.community_of("b1"));
        assert_eq!(p.community_of("a0"), p.community_of("a3"));
        assert_eq!(p.num_communities(), 3);
    }

    #[test]
    fn joint_venture_parents_stay_apart_at_unit_resolution() {
        let (p, _) = refine_communities(&joint_venture(), &FilterParams::default());
        assert_ne!(p.community_of("a1"), p.community_of("b1"));
        assert_eq!(p.community_of("b0"), p.community_of("b3"));
    }

    #[test]
    fn depth_one_is_plain_louvain() {
        let g = joint_venture();
        let params = FilterParams { depth: 1, ..FilterParams::default() };
        let (p, pruned) = refine_communities(&g, &params);
        assert_eq!(p, louvain(&g, 1.0, 0));
        assert_eq!(pruned, g);
    }

    #[test]
    fn nothing_pruned_keeps_first_pass() {
        for seed in 0..5 {
            // dense blocks carry no global bridges, so pass two has nothing to do
            let (g, _) = crate::graph::louvain::tests::planted(3, 12, 0.9, 0.02, seed);
            let params = FilterParams { seed, ..FilterParams::default() };
            let (p, pruned) = refine_communities(&g, &params);
            if pruned == g {
                assert_eq!(p, louvain(&g, params.resolution, params.seed));
            }
        }
    }

    #[test]
    fn refinement_refines() {
        for rule in [PruneRule::Incident, PruneRule::EdgeBridgeness] {
            for seed in 0..10 {
                let (g, _) = crate::graph::louvain::tests::planted(3, 8, 0.6, 0.08, seed);
                let params = FilterParams { seed, prune_rule: rule, ..FilterParams::default() };
                let first = louvain(&g, params.resolution, params.seed);
                let (p, _) = refine_communities(&g, &params);
                assert!(p.refines(&first));
                let stable = FilterParams { refine_until_stable: true, ..params };
                let (q, _) = refine_communities(&g, &stable);
                assert!(q.refines(&first));
            }
        }
    }
}
