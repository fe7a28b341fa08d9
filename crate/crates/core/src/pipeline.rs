//! End-to-end orchestration: ingest, augment, parse, embed, match, filter,
//! naming, plus the run manifest and the tuning objective.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    augment_all, build_domain_info, build_frequent_domain_blocklist, AugmentReport, AugmentationCache,
    AugmentationResult, HtmlSearchProvider,
};
use crate::config::{BackendKind, BlockingMode, PipelineConfig};
use crate::embed::{compute_idf, embed_name, EmbeddingBackend, FileBackend, HashingBackend, NameEmbedding};
use crate::error::{Error, Result};
use crate::eval::{evaluate, reduction_rate, EvalReport};
use crate::graph::{
    build_graph, name_community_centroid, name_community_volume, refine_communities, FilterParams, Member,
    NamingStrategy, Partition, SimilarityGraph,
};
use crate::ingest::{load_assignee_table, AssigneeRecord, GoldLabel, LocationKey, NameKind, NameKindClassifier};
use crate::matching::{
    brute_force_pairs, generate_candidate_pairs, score_pairs, write_pairs, BlockingPlan, MatchEntry, NameClass,
    ScoredPair, WeightVector,
};
use crate::parse::{
    build_common_word_list, classify_name_type, clean_name, CleanName, CommonWordList, LegalDesignatorDictionary,
    PunctuationRules,
};
use crate::tsv::{field, TsvTable};

pub const MAPPING_HEADER: &str = "record_id\traw_name\tcleaned_name\tcommunity_id\tcanonical_name";
const TOP_K: usize = 10;

/// One unique cleaned name and the records that carry it.
#[derive(Debug, Clone)]
pub struct Node {
    /// Smallest member record id.
    pub id: String,
    pub cleaned: String,
    pub degenerate: bool,
    pub class: NameClass,
    pub members: Vec<usize>,
    pub locations: BTreeSet<LocationKey>,
}

/// Everything up to (not including) pair scoring.
#[derive(Debug)]
pub struct Prepared {
    pub records: Vec<AssigneeRecord>,
    pub kinds: Vec<NameKind>,
    /// Cleaned name per record; `None` for records kept out of matching.
    pub cleaned: Vec<Option<String>>,
    pub nodes: Vec<Node>,
    pub entries: Vec<MatchEntry>,
    pub common: CommonWordList,
    pub blocklist: Vec<String>,
    pub counts: BTreeMap<String, usize>,
    pub timings_ms: BTreeMap<String, f64>,
}

fn stage<T>(name: &'static str, timings: &mut BTreeMap<String, f64>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(name));
    timings.insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
    out
}

fn backend(cfg: &PipelineConfig) -> Result<Box<dyn EmbeddingBackend>> {
    Ok(match cfg.embed.backend {
        BackendKind::Hashing => Box::new(HashingBackend::new(cfg.embed.dim, cfg.embed.seed)?),
        BackendKind::File => {
            let path = cfg.embed.vectors.as_ref().ok_or_else(|| Error::Config("embed.vectors missing".into()))?;
            Box::new(FileBackend::load(path, cfg.embed.seed, cfg.embed.strict)?)
        }
    })
}

fn mode<'a>(values: impl Iterator<Item = &'a String>) -> Option<String> {
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    // BTreeMap order makes the lexicographically smallest win ties
    counts.into_iter().fold(None, |best: Option<(&String, usize)>, (v, c)| match best {
        Some((_, bc)) if bc >= c => best,
        _ => Some((v, c)),
    })
    .map(|(v, _)| v.clone())
}

/// Runs ingest classification, cache lookup, cleaning, domain parsing and
/// embedding. `cache == None` disables augmentation.
pub fn prepare(cfg: &PipelineConfig, records: Vec<AssigneeRecord>, cache: Option<&AugmentationCache>) -> Result<Prepared> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();
    let mut counts = BTreeMap::new();
    counts.insert("records".to_string(), records.len());

    let kinds = stage("ingest", &mut timings, || {
        let classifier = match &cfg.ingest.keywords {
            Some(p) => NameKindClassifier::load(p)?,
            None => NameKindClassifier::default(),
        };
        Ok(records.iter().map(|r| classifier.classify(&r.raw_name)).collect::<Vec<_>>())
    })?;
    let included: Vec<bool> = kinds
        .iter()
        .map(|k| !(cfg.ingest.exclude_individuals && *k == NameKind::Individual))
        .collect();
    counts.insert("individuals".to_string(), kinds.iter().filter(|k| **k == NameKind::Individual).count());

    let results: Vec<Option<AugmentationResult>> = stage("augment", &mut timings, || {
        Ok(records
            .iter()
            .zip(&included)
            .map(|(r, &inc)| if inc { cache.and_then(|c| c.get(&r.raw_name)) } else { None })
            .collect())
    })?;
    counts.insert("augmented".to_string(), results.iter().filter(|r| r.is_some()).count());

    let (cleaned, nodes, common, blocklist, node_info) = stage("parse", &mut timings, || {
        let mut dict = match &cfg.parse.designators {
            Some(p) => LegalDesignatorDictionary::load(p)?,
            None => LegalDesignatorDictionary::builtin(),
        };
        dict.strip_interior = cfg.parse.strip_interior;
        let rules = PunctuationRules::default();
        let mut cleaned: Vec<Option<String>> = vec![None; records.len()];
        let mut by_name: BTreeMap<String, (bool, Vec<usize>)> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if !included[i] {
                continue;
            }
            let correction = results[i].as_ref().and_then(|x| x.corrected_name.as_deref());
            let c = clean_name(&r.raw_name, correction, &dict, &rules);
            if c.cleaned.is_empty() {
                continue;
            }
            let entry = by_name.entry(c.cleaned.clone()).or_insert((c.degenerate, Vec::new()));
            entry.0 &= c.degenerate;
            entry.1.push(i);
            cleaned[i] = Some(c.cleaned);
        }
        let clean_names: Vec<CleanName> = by_name
            .iter()
            .map(|(name, (deg, members))| {
                let id = members.iter().map(|&i| &records[i].record_id).min().expect("non-empty");
                CleanName::new(id.clone(), name.clone(), *deg)
            })
            .collect();
        let common = build_common_word_list(&clean_names, cfg.parse.common_words_n);

        let mut distinct: BTreeMap<&str, &AugmentationResult> = BTreeMap::new();
        for (r, res) in records.iter().zip(&results) {
            if let Some(res) = res {
                distinct.insert(&r.raw_name, res);
            }
        }
        let blocklist = build_frequent_domain_blocklist(distinct.values().copied(), cfg.augment.blocklist_k);

        let mut nodes = Vec::with_capacity(clean_names.len());
        let mut node_info = Vec::with_capacity(clean_names.len());
        for (cn, (_, members)) in clean_names.iter().zip(by_name.into_values()) {
            let class = classify_name_type(&cn.tokens, &common)?;
            let infos: Vec<_> = members
                .iter()
                .map(|&i| build_domain_info(&records[i].record_id, results[i].as_ref(), &blocklist, &common))
                .collect();
            let domain = mode(infos.iter().filter_map(|d| d.domain.as_ref()));
            let url_tokens: BTreeSet<String> = infos.iter().flat_map(|d| d.url_tokens.iter().cloned()).collect();
            let locations = members.iter().flat_map(|&i| records[i].locations.iter().cloned()).collect();
            nodes.push(Node {
                id: cn.record_id.clone(),
                cleaned: cn.cleaned.clone(),
                degenerate: cn.degenerate,
                class,
                members,
                locations,
            });
            node_info.push((cn.tokens.clone(), domain, url_tokens));
        }
        let mut blocklist: Vec<String> = blocklist.into_iter().collect();
        blocklist.sort();
        Ok((cleaned, nodes, common, blocklist, node_info))
    })?;
    counts.insert("names".to_string(), nodes.len());
    counts.insert("type2_names".to_string(), nodes.iter().filter(|n| n.class == NameClass::Type2).count());

    let entries = stage("embed", &mut timings, || {
        let backend = backend(cfg)?;
        let idf = compute_idf(node_info.iter().map(|(t, _, _)| t));
        Ok(nodes
            .iter()
            .zip(node_info)
            .map(|(n, (tokens, domain, url_tokens))| {
                let emb = embed_name(&n.id, &tokens, backend.as_ref(), &idf);
                MatchEntry::new(n.id.clone(), tokens, n.class, domain, url_tokens, emb)
            })
            .collect::<Vec<_>>())
    })?;
    counts.insert("degenerate_embeddings".to_string(), entries.iter().filter(|e| e.embedding.degenerate).count());

    Ok(Prepared {
        records,
        kinds,
        cleaned,
        nodes,
        entries,
        common,
        blocklist,
        counts,
        timings_ms: timings,
    })
}

impl Prepared {
    fn locations(&self) -> HashMap<&str, &BTreeSet<LocationKey>> {
        self.nodes.iter().map(|n| (n.id.as_str(), &n.locations)).collect()
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    /// Scored candidate pairs. Blocking is used whenever it is exact for the
    /// threshold; otherwise every same-class pair is scored.
    pub fn match_pairs(&self, weights: &WeightVector, threshold: f64, mode: BlockingMode) -> Vec<ScoredPair> {
        let pairs = if mode == BlockingMode::BruteForce || threshold <= weights.cos {
            brute_force_pairs(&self.entries)
        } else {
            generate_candidate_pairs(&self.entries, &self.common, BlockingPlan::for_threshold(weights, threshold))
        };
        score_pairs(&self.entries, &pairs, weights)
    }

    /// Candidate pairs sharing any blocking key, for re-scoring under many
    /// weight vectors.
    pub fn keyed_pairs(&self) -> Vec<ScoredPair> {
        let pairs = generate_candidate_pairs(&self.entries, &self.common, BlockingPlan::default());
        score_pairs(&self.entries, &pairs, &WeightVector::unit())
    }

    pub fn filter(&self, pairs: &[ScoredPair], params: &FilterParams) -> (Partition, SimilarityGraph, SimilarityGraph) {
        let locs = self.locations();
        let graph = build_graph(&self.node_ids(), pairs, |id| locs.get(id).copied(), params);
        let (partition, pruned) = refine_communities(&graph, params);
        (partition, graph, pruned)
    }

    /// Record-level partition from a partition of node ids. Records outside
    /// matching are grouped by identical raw name.
    pub fn expand(&self, nodes: &Partition) -> Partition {
        let mut groups: BTreeMap<(u8, String), Vec<String>> = BTreeMap::new();
        let by_id: HashMap<&str, &Node> = self.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
        for (node_id, &c) in nodes.assignment() {
            let node = by_id[node_id.as_str()];
            let g = groups.entry((0, c.to_string())).or_default();
            g.extend(node.members.iter().map(|&i| self.records[i].record_id.clone()));
        }
        for (i, r) in self.records.iter().enumerate() {
            if self.cleaned[i].is_none() {
                groups.entry((1, r.raw_name.clone())).or_default().push(r.record_id.clone());
            }
        }
        Partition::from_groups(groups.into_values())
    }

    fn embedding_of_record(&self) -> HashMap<&str, &NameEmbedding> {
        let mut out = HashMap::new();
        for (node, entry) in self.nodes.iter().zip(&self.entries) {
            for &i in &node.members {
                out.insert(self.records[i].record_id.as_str(), &entry.embedding);
            }
        }
        out
    }

    /// Attaches a canonical name to every community of `partition`.
    pub fn name_communities(&self, partition: &mut Partition, strategy: NamingStrategy) {
        let by_id: HashMap<&str, usize> = self.records.iter().enumerate().map(|(i, r)| (r.record_id.as_str(), i)).collect();
        let emb = self.embedding_of_record();
        let names: Vec<Option<String>> = partition
            .communities()
            .iter()
            .map(|ids| {
                let members: Vec<Member<'_>> = ids
                    .iter()
                    .map(|id| {
                        let i = by_id[id.as_str()];
                        let r = &self.records[i];
                        Member {
                            record_id: &r.record_id,
                            raw_name: &r.raw_name,
                            cleaned: self.cleaned[i].as_deref().unwrap_or(&r.raw_name),
                            patent_count: r.patent_count,
                            embedding: emb.get(r.record_id.as_str()).copied(),
                        }
                    })
                    .collect();
                let pick = match strategy {
                    NamingStrategy::Centroid => name_community_centroid(&members).or_else(|| name_community_volume(&members)),
                    NamingStrategy::Volume => name_community_volume(&members),
                };
                pick.map(|m| m.raw_name.to_string())
            })
            .collect();
        for (c, name) in names.into_iter().enumerate() {
            if let Some(n) = name {
                partition.set_canonical_name(c, n);
            }
        }
    }
}

/// Result of harmonizing a record table.
#[derive(Debug)]
pub struct Harmonized {
    pub prepared: Prepared,
    pub pairs: Vec<ScoredPair>,
    pub graph: SimilarityGraph,
    pub pruned: SimilarityGraph,
    pub partition: Partition,
}

/// The whole pipeline in memory.
pub fn harmonize(cfg: &PipelineConfig, records: Vec<AssigneeRecord>, cache: Option<&AugmentationCache>) -> Result<Harmonized> {
    let mut prepared = prepare(cfg, records, cache)?;
    let mut timings = std::mem::take(&mut prepared.timings_ms);
    let pairs = stage("match", &mut timings, || {
        Ok(prepared.match_pairs(&cfg.matching.weights, cfg.graph.threshold, cfg.matching.blocking))
    })?;
    let (node_partition, graph, pruned) = stage("filter", &mut timings, || Ok(prepared.filter(&pairs, &cfg.graph)))?;
    let partition = stage("name", &mut timings, || {
        let mut p = prepared.expand(&node_partition);
        prepared.name_communities(&mut p, cfg.graph.naming);
        Ok(p)
    })?;
    prepared.timings_ms = timings;
    prepared.counts.insert("candidate_pairs".into(), pairs.len());
    prepared.counts.insert("edges".into(), graph.edge_count());
    prepared.counts.insert("pruned_edges".into(), graph.edge_count() - pruned.edge_count());
    prepared.counts.insert("communities".into(), partition.num_communities());
    Ok(Harmonized { prepared, pairs, graph, pruned, partition })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingRow {
    pub record_id: String,
    pub raw_name: String,
    pub cleaned_name: String,
    pub community_id: usize,
    pub canonical_name: String,
}

impl Harmonized {
    /// One row per input record, in input order.
    pub fn mapping(&self) -> Vec<MappingRow> {
        let p = &self.prepared;
        p.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let c = self.partition.community_of(&r.record_id).expect("every record is assigned");
                MappingRow {
                    record_id: r.record_id.clone(),
                    raw_name: r.raw_name.clone(),
                    cleaned_name: p.cleaned[i].clone().unwrap_or_default(),
                    community_id: c,
                    canonical_name: self.partition.canonical_name(c).unwrap_or("").to_string(),
                }
            })
            .collect()
    }
}

fn clean_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub fn write_mapping(rows: &[MappingRow]) -> String {
    let mut out = String::from(MAPPING_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            clean_field(&r.record_id),
            clean_field(&r.raw_name),
            r.cleaned_name,
            r.community_id,
            clean_field(&r.canonical_name)
        );
    }
    out
}

/// Reads a mapping file. Only `record_id` and `community_id` are required.
pub fn load_mapping(path: &Path) -> Result<Vec<MappingRow>> {
    let table = TsvTable::read(path)?;
    let id = table.require("record_id")?;
    let cid = table.require("community_id")?;
    let raw = table.column("raw_name");
    let cleaned = table.column("cleaned_name");
    let canonical = table.column("canonical_name");
    let opt = |fields: &[String], c: Option<usize>| c.map(|c| field(fields, c).to_string()).unwrap_or_default();
    let mut seen = HashSet::new();
    table
        .rows
        .iter()
        .map(|(line, f)| {
            let record_id = field(f, id).to_string();
            if record_id.is_empty() {
                return Err(table.malformed(*line, "empty record_id"));
            }
            if !seen.insert(record_id.clone()) {
                return Err(Error::DuplicateId(record_id));
            }
            let community_id = field(f, cid)
                .parse()
                .map_err(|_| table.malformed(*line, format!("bad community_id `{}`", field(f, cid))))?;
            Ok(MappingRow {
                record_id,
                raw_name: opt(f, raw),
                cleaned_name: opt(f, cleaned),
                community_id,
                canonical_name: opt(f, canonical),
            })
        })
        .collect()
}

/// Partition described by mapping rows; community ids are renumbered densely.
pub fn mapping_partition(rows: &[MappingRow]) -> Partition {
    let mut groups: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    let mut canonical: BTreeMap<usize, &str> = BTreeMap::new();
    for r in rows {
        groups.entry(r.community_id).or_default().push(&r.record_id);
        if !r.canonical_name.is_empty() {
            canonical.entry(r.community_id).or_insert(&r.canonical_name);
        }
    }
    let mut p = Partition::from_groups(groups.values().cloned());
    for (old, members) in &groups {
        if let (Some(name), Some(new)) = (canonical.get(old), p.community_of(members[0])) {
            p.set_canonical_name(new, *name);
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub community_id: usize,
    pub canonical_name: String,
    pub variants: usize,
    pub portfolio: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_records: usize,
    pub n_unique_names: usize,
    pub n_communities: usize,
    /// `None` when there were no input names.
    pub reduction_rate: Option<f64>,
    pub top: Vec<CommunitySummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Before/after name counts and the largest communities. Variants count
/// distinct raw names.
pub fn summarize(mapping: &[MappingRow], records: &[AssigneeRecord]) -> Summary {
    let counts: HashMap<&str, u64> = records.iter().map(|r| (r.record_id.as_str(), r.patent_count)).collect();
    let unique: HashSet<&str> = mapping.iter().map(|r| r.raw_name.as_str()).collect();
    let mut per: BTreeMap<usize, (BTreeSet<&str>, u64, &str)> = BTreeMap::new();
    for r in mapping {
        let e = per.entry(r.community_id).or_insert((BTreeSet::new(), 0, ""));
        e.0.insert(&r.raw_name);
        e.1 += counts.get(r.record_id.as_str()).copied().unwrap_or(0);
        if e.2.is_empty() {
            e.2 = &r.canonical_name;
        }
    }
    let mut top: Vec<CommunitySummary> = per
        .iter()
        .map(|(&c, (names, portfolio, canonical))| CommunitySummary {
            community_id: c,
            canonical_name: canonical.to_string(),
            variants: names.len(),
            portfolio: *portfolio,
        })
        .collect();
    top.sort_by(|a, b| b.variants.cmp(&a.variants).then(a.community_id.cmp(&b.community_id)));
    top.truncate(TOP_K);
    // identical raw names always share a community, so this cannot exceed the
    // number of unique names
    let n_communities = per.len();
    let (reduction_rate, notes) = match reduction_rate(unique.len(), n_communities.min(unique.len())) {
        Ok(r) => (Some(r), Vec::new()),
        Err(e) => (None, vec![e.to_string()]),
    };
    Summary {
        n_records: mapping.len(),
        n_unique_names: unique.len(),
        n_communities,
        reduction_rate,
        top,
        notes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub input_digests: BTreeMap<String, String>,
    pub counts: BTreeMap<String, usize>,
    pub timings_ms: BTreeMap<String, f64>,
    pub output_digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentReport>,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub manifest: RunManifest,
    pub summary: Summary,
    pub mapping: Vec<MappingRow>,
    pub output_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Opens the cache named by the config, fetching missing names unless the
/// run is offline. Returns `None` when augmentation is disabled.
pub fn open_cache(cfg: &PipelineConfig, names: &[String]) -> Result<(Option<AugmentationCache>, Option<AugmentReport>)> {
    if !cfg.augment.enabled {
        return Ok((None, None));
    }
    let Some(path) = &cfg.io.cache else {
        if cfg.augment.offline {
            return Err(Error::InvalidInput("offline run needs io.cache".into()));
        }
        return Err(Error::Config("augmentation is enabled but io.cache is not set".into()));
    };
    if cfg.augment.offline {
        if !path.exists() {
            return Err(Error::InvalidInput(format!("offline run but cache {} does not exist", path.display())));
        }
        let cache = AugmentationCache::read_only(path)?;
        let report = augment_all(names, None, &cache, 1)?;
        return Ok((Some(cache), Some(report)));
    }
    let cache = AugmentationCache::open(path)?;
    let provider = HtmlSearchProvider::new(cfg.provider.clone())?;
    let report = augment_all(names, Some(&provider), &cache, cfg.augment.parallelism)?;
    Ok((Some(cache), Some(report)))
}

struct Staging {
    files: Vec<(String, Vec<u8>)>,
}

impl Staging {
    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    /// Writes every file into a scratch directory, then moves them into place.
    /// Nothing is left behind if a write fails.
    fn commit(self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let scratch = out.join(format!(".staging-{}", std::process::id()));
        let result = (|| {
            std::fs::create_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
            for (name, bytes) in &self.files {
                let p = scratch.join(name);
                std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            }
            for (name, _) in &self.files {
                let (from, to) = (scratch.join(name), out.join(name));
                std::fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
            }
            Ok(())
        })();
        let _ = std::fs::remove_dir_all(&scratch);
        if result.is_err() {
            for (name, _) in &self.files {
                let _ = std::fs::remove_file(out.join(name));
            }
        }
        result
    }
}

fn cleaned_artifact(h: &Harmonized) -> String {
    let p = &h.prepared;
    let mut node_of: HashMap<usize, &Node> = HashMap::new();
    for n in &p.nodes {
        for &i in &n.members {
            node_of.insert(i, n);
        }
    }
    let mut out = String::from("record_id\tkind\tcleaned_name\tname_class\tnode_id\n");
    for (i, r) in p.records.iter().enumerate() {
        let (class, node) = node_of.get(&i).map_or(("-", "-"), |n| (n.class.as_str(), n.id.as_str()));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            clean_field(&r.record_id),
            format!("{:?}", p.kinds[i]).to_lowercase(),
            p.cleaned[i].as_deref().unwrap_or(""),
            class,
            node
        );
    }
    out
}

fn domains_artifact(p: &Prepared) -> String {
    let mut out = String::from("node_id\tdomain\turl_tokens\n");
    for e in &p.entries {
        let words: Vec<&str> = e.url_tokens.iter().map(String::as_str).collect();
        let _ = writeln!(out, "{}\t{}\t{}", e.id, e.domain.as_deref().unwrap_or(""), words.join(" "));
    }
    out
}

fn embeddings_digest(p: &Prepared) -> String {
    let mut h = Sha256::new();
    for e in &p.entries {
        h.update(e.id.as_bytes());
        for x in &e.embedding.vector {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn edges_artifact(h: &Harmonized) -> String {
    let mut out = String::from("id_a\tid_b\tweight\tpruned\n");
    for (a, b, w) in h.graph.edges() {
        let pruned = h.pruned.weight(a, b).is_none();
        let _ = writeln!(out, "{a}\t{b}\t{w}\t{}", u8::from(pruned));
    }
    out
}

/// Reads the configured inputs, harmonizes them and writes the mapping,
/// summary, manifest, resolved config and (optionally) stage artifacts into
/// `io.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let input = cfg
        .io
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("io.input is not set".into()))?;
    let records = load_assignee_table(input).map_err(|e| e.in_stage("ingest"))?;
    let mut input_digests = BTreeMap::new();
    input_digests.insert("input".to_string(), file_digest(input)?);

    let names: Vec<String> = records.iter().map(|r| r.raw_name.clone()).collect();
    let (cache, augment_report) = open_cache(cfg, &names).map_err(|e| e.in_stage("augment"))?;
    if let (Some(path), Some(_)) = (&cfg.io.cache, &cache) {
        if path.exists() {
            input_digests.insert("cache".to_string(), file_digest(path)?);
        }
    }
    for (key, path) in [
        ("keywords", &cfg.ingest.keywords),
        ("designators", &cfg.parse.designators),
        ("vectors", &cfg.embed.vectors),
    ] {
        if let Some(p) = path {
            input_digests.insert(key.to_string(), file_digest(p)?);
        }
    }

    let h = harmonize(cfg, records, cache.as_ref())?;
    let mapping = h.mapping();
    let summary = summarize(&mapping, &h.prepared.records);

    let mut staging = Staging { files: Vec::new() };
    let mapping_text = write_mapping(&mapping);
    let summary_text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    let config_text = cfg.to_toml();
    let mut output_digests = BTreeMap::new();
    output_digests.insert("mapping.tsv".to_string(), sha256_hex(mapping_text.as_bytes()));
    output_digests.insert("summary.json".to_string(), sha256_hex(summary_text.as_bytes()));
    staging.add("mapping.tsv", mapping_text);
    staging.add("summary.json", summary_text);
    staging.add("config.toml", config_text);
    if cfg.io.write_artifacts {
        let arts = [
            ("cleaned.tsv", cleaned_artifact(&h)),
            ("common_words.txt", h.prepared.common.to_text()),
            ("domain_blocklist.txt", h.prepared.blocklist.iter().map(|d| format!("{d}\n")).collect()),
            ("domains.tsv", domains_artifact(&h.prepared)),
            ("embeddings.sha256", embeddings_digest(&h.prepared) + "\n"),
            ("pairs.tsv", write_pairs(&h.pairs)),
            ("edges.tsv", edges_artifact(&h)),
        ];
        for (name, text) in arts {
            output_digests.insert(name.to_string(), sha256_hex(text.as_bytes()));
            staging.add(name, text);
        }
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seed: cfg.graph.seed,
        input_digests,
        counts: h.prepared.counts.clone(),
        timings_ms: h.prepared.timings_ms.clone(),
        output_digests,
        augment: augment_report,
    };
    staging.add("manifest.json", serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n");
    staging.commit(&cfg.io.output_dir)?;
    Ok(PipelineOutput { manifest, summary, mapping, output_dir: cfg.io.output_dir.clone() })
}

/// The matching and filtering hyperparameters as a tuning vector, in
/// [`crate::tune::PARAM_NAMES`] order.
pub fn params_from_config(cfg: &PipelineConfig) -> Vec<f64> {
    let w = &cfg.matching.weights;
    let g = &cfg.graph;
    vec![w.token, w.first_token, w.url_text, w.domain, w.cos, g.threshold, g.resolution, g.bridgeness_threshold, g.location_boost]
}

pub fn apply_params(cfg: &PipelineConfig, params: &[f64]) -> Result<PipelineConfig> {
    if params.len() != 9 {
        return Err(Error::Contract(format!("expected 9 parameters, got {}", params.len())));
    }
    let mut out = cfg.clone();
    out.matching.weights = WeightVector {
        token: params[0],
        first_token: params[1],
        url_text: params[2],
        domain: params[3],
        cos: params[4],
    };
    out.graph.threshold = params[5];
    out.graph.resolution = params[6];
    out.graph.bridgeness_threshold = params[7];
    out.graph.location_boost = params[8];
    out.validate()?;
    Ok(out)
}

/// Cached state for scoring many parameter vectors against a gold standard:
/// conditions are computed once, each trial only re-scores and re-filters.
pub struct TuningCorpus {
    pub prepared: Prepared,
    pairs: Vec<ScoredPair>,
    gold: Vec<GoldLabel>,
    base: PipelineConfig,
}

impl TuningCorpus {
    pub fn new(cfg: &PipelineConfig, records: Vec<AssigneeRecord>, cache: Option<&AugmentationCache>, gold: Vec<GoldLabel>) -> Result<Self> {
        let prepared = prepare(cfg, records, cache)?;
        let pairs = prepared.keyed_pairs();
        Ok(Self { prepared, pairs, gold, base: cfg.clone() })
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn evaluate(&self, params: &[f64], seed: u64) -> Result<EvalReport> {
        let mut cfg = apply_params(&self.base, params)?;
        cfg.graph.seed = seed;
        let w = cfg.matching.weights;
        let pairs: Vec<ScoredPair> = self
            .pairs
            .iter()
            .map(|p| {
                let mut p = p.clone();
                p.rescore(&w);
                p
            })
            .collect();
        let (nodes, _, _) = self.prepared.filter(&pairs, &cfg.graph);
        evaluate(&self.prepared.expand(&nodes), &self.gold)
    }
}
