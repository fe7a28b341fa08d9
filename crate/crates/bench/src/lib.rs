//! Seeded synthetic inputs shared by the benchmarks.

use assignee_core::augment::{AugmentationCache, AugmentationResult};
use assignee_core::{AssigneeRecord, SimilarityGraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEMS: &[&str] = &[
    "acme", "nokia", "hitachi", "philips", "siemens", "bosch", "canon", "denso", "fanuc", "kyocera",
    "sharp", "olympus", "ricoh", "yamaha", "makita", "omron", "brother", "epson", "nikon", "tdk",
];
const SUFFIXES: &[&str] = &["Inc", "Corp", "Ltd", "GmbH", "AG", "Co., Ltd.", "S.A.", "Oyj", ""];
const WORDS: &[&str] = &[
    "systems", "electric", "industries", "technologies", "medical", "energy", "america", "europe",
    "research", "materials", "devices", "motors", "chemical", "optical", "networks",
];

/// `n` company-like names built from a few hundred stems, with a cached
/// search result for each.
pub fn synthetic_corpus(n: usize, seed: u64) -> (Vec<AssigneeRecord>, AugmentationCache) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cache = AugmentationCache::in_memory();
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let stem = format!("{}{}", STEMS.choose(&mut rng).unwrap(), rng.gen_range(0..n.max(20) / 4));
        let word = if rng.gen_bool(0.5) { WORDS.choose(&mut rng).unwrap().to_string() } else { String::new() };
        let suffix = SUFFIXES.choose(&mut rng).unwrap();
        let raw = format!("{stem} {word} {suffix}").split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase();
        let mut r = AugmentationResult::empty(&raw, "bench");
        r.first_url = Some(format!("https://www.{stem}.com/"));
        r.first_text = Some(format!("{stem} {word} official site"));
        cache.insert(r).expect("in-memory insert");
        records.push(AssigneeRecord::new(format!("r{i:06}"), raw, rng.gen_range(0..50)));
    }
    (records, cache)
}

/// Planted-partition graph with `blocks` groups of `size` nodes.
pub fn planted_graph(blocks: usize, size: usize, p_in: f64, p_out: f64, seed: u64) -> SimilarityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = blocks * size;
    let ids: Vec<String> = (0..n).map(|i| format!("n{i:05}")).collect();
    let mut g = SimilarityGraph::with_nodes(ids.iter().cloned());
    for i in 0..n {
        for j in i + 1..n {
            let p = if i / size == j / size { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                g.add_edge(&ids[i], &ids[j], 1.0).expect("distinct ids");
            }
        }
    }
    g
}
