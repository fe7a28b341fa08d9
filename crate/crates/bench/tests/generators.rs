use assignee_bench::{planted_graph, synthetic_corpus};

#[test]
fn corpus_is_seeded() {
    let (a, ca) = synthetic_corpus(200, 5);
    let (b, cb) = synthetic_corpus(200, 5);
    assert_eq!(a, b);
    // fetch times are wall-clock; everything else is seeded
    let strip = |c: &assignee_core::augment::AugmentationCache| -> Vec<_> {
        c.snapshot().into_values().map(|r| (r.query_name, r.first_url, r.first_text)).collect()
    };
    assert_eq!(strip(&ca), strip(&cb));
    assert_eq!(a.len(), 200);
    let (c, _) = synthetic_corpus(200, 6);
    assert_ne!(a, c);
}

#[test]
fn planted_graph_has_every_node() {
    let g = planted_graph(4, 10, 0.8, 0.05, 1);
    assert_eq!(g.node_count(), 40);
    assert_eq!(g, planted_graph(4, 10, 0.8, 0.05, 1));
}
