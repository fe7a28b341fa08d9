//! Pairwise matching: blocked candidate generation, condition vectors and the
//! weighted matching score.
//!
//! Type-1 names are compared on five dimensions (shared token, shared first
//! token, shared url-text word, shared domain, cosine); type-2 names only on
//! domain and cosine. The two classes are never paired with each other.
//!
//! Blocking is exact for any threshold above `w_cos`: such a score needs at
//! least one binary condition, and each condition implies a shared blocking
//! key (a token, the domain, or a url-text word).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{cosine_similarity, NameEmbedding};
use crate::error::{Error, Result};
use crate::parse::CommonWordList;
use crate::tsv::{field, TsvTable};

pub use crate::parse::NameClass;

pub const PAIR_HEADER: &str = "id_a\tid_b\ttoken\tfirst\turltext\tdomain\tcos\tscore";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightVector {
    pub token: f64,
    pub first_token: f64,
    pub url_text: f64,
    pub domain: f64,
    pub cos: f64,
}

impl Default for WeightVector {
    fn default() -> Self {
        Self::unit()
    }
}

impl WeightVector {
    pub fn unit() -> Self {
        Self {
            token: 1.0,
            first_token: 1.0,
            url_text: 1.0,
            domain: 1.0,
            cos: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.token, self.first_token, self.url_text, self.domain, self.cos];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("weights must be finite and non-negative: {self:?}")))
        }
    }

    /// Weights in condition-vector order for `class`.
    pub fn for_class(&self, class: NameClass) -> Vec<f64> {
        match class {
            NameClass::Type1 => vec![self.token, self.first_token, self.url_text, self.domain, self.cos],
            NameClass::Type2 => vec![self.domain, self.cos],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionVector {
    pub class: NameClass,
    pub token_common: bool,
    pub first_token_common: bool,
    pub url_text_common: bool,
    pub domain_common: bool,
    pub cos: f64,
    /// Set when either embedding was degenerate and `cos` was forced to 0.
    pub cos_degenerate: bool,
}

impl ConditionVector {
    pub fn type1(token: bool, first: bool, url_text: bool, domain: bool, cos: f64) -> Self {
        Self {
            class: NameClass::Type1,
            token_common: token,
            first_token_common: first,
            url_text_common: url_text,
            domain_common: domain,
            cos,
            cos_degenerate: false,
        }
    }

    pub fn type2(domain: bool, cos: f64) -> Self {
        Self {
            class: NameClass::Type2,
            token_common: false,
            first_token_common: false,
            url_text_common: false,
            domain_common: domain,
            cos,
            cos_degenerate: false,
        }
    }

    pub fn as_vec(&self) -> Vec<f64> {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        match self.class {
            NameClass::Type1 => vec![
                b(self.token_common),
                b(self.first_token_common),
                b(self.url_text_common),
                b(self.domain_common),
                self.cos,
            ],
            NameClass::Type2 => vec![b(self.domain_common), self.cos],
        }
    }

    pub fn any_binary(&self) -> bool {
        self.token_common || self.first_token_common || self.url_text_common || self.domain_common
    }
}

/// Dot product of a condition vector and a weight vector of equal arity.
pub fn dot_checked(conditions: &[f64], weights: &[f64]) -> Result<f64> {
    if conditions.len() != weights.len() {
        return Err(Error::Contract(format!(
            "condition arity {} does not match weight arity {}",
            conditions.len(),
            weights.len()
        )));
    }
    Ok(conditions.iter().zip(weights).map(|(c, w)| c * w).sum())
}

pub fn matching_score(c: &ConditionVector, w: &WeightVector) -> f64 {
    dot_checked(&c.as_vec(), &w.for_class(c.class)).expect("arity follows the class")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub id_a: String,
    pub id_b: String,
    pub conditions: ConditionVector,
    pub score: f64,
}

impl ScoredPair {
    pub fn rescore(&mut self, w: &WeightVector) {
        self.score = matching_score(&self.conditions, w);
    }
}

/// Everything the matcher knows about one name.
#[derive(Debug, Clone)]
pub struct MatchEntry {
    pub id: String,
    pub tokens: Vec<String>,
    pub class: NameClass,
    pub domain: Option<String>,
    pub url_tokens: BTreeSet<String>,
    pub embedding: NameEmbedding,
    token_set: HashSet<String>,
    /// The name shares at least one word with its own url text.
    url_precondition: bool,
}

impl MatchEntry {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        class: NameClass,
        domain: Option<String>,
        url_tokens: BTreeSet<String>,
        embedding: NameEmbedding,
    ) -> Self {
        let token_set: HashSet<String> = tokens.iter().cloned().collect();
        let url_precondition = url_tokens.iter().any(|t| token_set.contains(t));
        Self {
            id: id.into(),
            tokens,
            class,
            domain,
            url_tokens,
            embedding,
            token_set,
            url_precondition,
        }
    }

    pub fn url_precondition(&self) -> bool {
        self.url_precondition
    }
}

fn embedding_cosine(a: &MatchEntry, b: &MatchEntry) -> (f64, bool) {
    match cosine_similarity(&a.embedding, &b.embedding) {
        Ok(c) => (c, false),
        Err(_) => (0.0, true),
    }
}

fn shared_domain(a: &MatchEntry, b: &MatchEntry) -> bool {
    matches!((&a.domain, &b.domain), (Some(x), Some(y)) if x == y)
}

pub fn evaluate_conditions_type1(a: &MatchEntry, b: &MatchEntry) -> ConditionVector {
    let token = a.token_set.iter().any(|t| b.token_set.contains(t));
    let first = token && a.tokens.first() == b.tokens.first();
    let url_text = a.url_precondition
        && b.url_precondition
        && a.url_tokens.iter().any(|t| b.url_tokens.contains(t));
    let (cos, degenerate) = embedding_cosine(a, b);
    ConditionVector {
        cos_degenerate: degenerate,
        ..ConditionVector::type1(token, first, url_text, shared_domain(a, b), cos)
    }
}

pub fn evaluate_conditions_type2(a: &MatchEntry, b: &MatchEntry) -> ConditionVector {
    let (cos, degenerate) = embedding_cosine(a, b);
    ConditionVector {
        cos_degenerate: degenerate,
        ..ConditionVector::type2(shared_domain(a, b), cos)
    }
}

pub fn evaluate_conditions(a: &MatchEntry, b: &MatchEntry) -> Result<ConditionVector> {
    match (a.class, b.class) {
        (NameClass::Type1, NameClass::Type1) => Ok(evaluate_conditions_type1(a, b)),
        (NameClass::Type2, NameClass::Type2) => Ok(evaluate_conditions_type2(a, b)),
        _ => Err(Error::Contract(format!(
            "cannot compare {} ({:?}) with {} ({:?})",
            a.id, a.class, b.id, b.class
        ))),
    }
}

/// Which keys go into the inverted index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockingPlan {
    /// Index tokens from the common-word list too. Needed whenever a pair
    /// sharing only common tokens could still reach the threshold.
    pub include_common_tokens: bool,
}

impl Default for BlockingPlan {
    fn default() -> Self {
        Self {
            include_common_tokens: true,
        }
    }
}

impl BlockingPlan {
    /// The leanest plan that stays exact for `threshold` under `weights`. A
    /// pair linked only through common tokens can score at most
    /// `w_token + w_first + w_cos` (domain and url-text agreement have keys of
    /// their own).
    pub fn for_threshold(weights: &WeightVector, threshold: f64) -> Self {
        Self {
            include_common_tokens: weights.token + weights.first_token + weights.cos >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum BlockKey<'a> {
    Token(&'a str),
    Domain(&'a str),
    UrlWord(&'a str),
}

/// Index pairs `(i, j)` that share at least one blocking key within the same
/// class, each once, with `entries[i].id < entries[j].id`, sorted by id pair.
pub fn generate_candidate_pairs(
    entries: &[MatchEntry],
    common: &CommonWordList,
    plan: BlockingPlan,
) -> Vec<(usize, usize)> {
    let mut index: HashMap<(NameClass, BlockKey<'_>), Vec<usize>> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        let mut keys = Vec::new();
        if let Some(d) = &e.domain {
            keys.push(BlockKey::Domain(d));
        }
        if e.class == NameClass::Type1 {
            for t in &e.token_set {
                if plan.include_common_tokens || !common.contains(t) {
                    keys.push(BlockKey::Token(t));
                }
            }
            if e.url_precondition {
                keys.extend(e.url_tokens.iter().map(|w| BlockKey::UrlWord(w)));
            }
        }
        for k in keys {
            index.entry((e.class, k)).or_default().push(i);
        }
    }

    let postings: Vec<Vec<usize>> = index.into_values().filter(|p| p.len() > 1).collect();
    let mut pairs: Vec<(usize, usize)> = postings
        .par_iter()
        .flat_map_iter(|p| {
            p.iter().enumerate().flat_map(move |(k, &i)| {
                p[k + 1..].iter().map(move |&j| ordered(entries, i, j))
            })
        })
        .collect();
    sort_pairs(entries, &mut pairs);
    pairs
}

fn ordered(entries: &[MatchEntry], i: usize, j: usize) -> (usize, usize) {
    if entries[i].id <= entries[j].id {
        (i, j)
    } else {
        (j, i)
    }
}

fn sort_pairs(entries: &[MatchEntry], pairs: &mut Vec<(usize, usize)>) {
    pairs.par_sort_unstable_by(|x, y| {
        (&entries[x.0].id, &entries[x.1].id).cmp(&(&entries[y.0].id, &entries[y.1].id))
    });
    pairs.dedup();
}

/// Every same-class pair, for small corpora and as an oracle.
pub fn brute_force_pairs(entries: &[MatchEntry]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..entries.len())
        .flat_map(|i| ((i + 1)..entries.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| entries[i].class == entries[j].class)
        .map(|(i, j)| ordered(entries, i, j))
        .collect();
    sort_pairs(entries, &mut pairs);
    pairs
}

/// Conditions and scores for `pairs`, in the same order.
pub fn score_pairs(entries: &[MatchEntry], pairs: &[(usize, usize)], w: &WeightVector) -> Vec<ScoredPair> {
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&entries[i], &entries[j]);
            let conditions = evaluate_conditions(a, b).expect("pairs never cross classes");
            ScoredPair {
                id_a: a.id.clone(),
                id_b: b.id.clone(),
                score: matching_score(&conditions, w),
                conditions,
            }
        })
        .collect()
}

fn fmt_flag(class: NameClass, v: bool) -> &'static str {
    match (class, v) {
        (NameClass::Type2, _) => "-",
        (_, true) => "1",
        (_, false) => "0",
    }
}

pub fn write_pairs(pairs: &[ScoredPair]) -> String {
    let mut out = String::from(PAIR_HEADER);
    out.push('\n');
    for p in pairs {
        let c = &p.conditions;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.id_a,
            p.id_b,
            fmt_flag(c.class, c.token_common),
            fmt_flag(c.class, c.first_token_common),
            fmt_flag(c.class, c.url_text_common),
            if c.domain_common { "1" } else { "0" },
            c.cos,
            p.score
        );
    }
    out
}

pub fn load_pairs(path: &Path) -> Result<Vec<ScoredPair>> {
    let table = TsvTable::read(path)?;
    let cols: Vec<usize> = PAIR_HEADER
        .split('\t')
        .map(|c| table.require(c))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let get = |k: usize| field(fields, cols[k]);
        let flag = |k: usize| match get(k) {
            "1" => Ok(Some(true)),
            "0" => Ok(Some(false)),
            "-" => Ok(None),
            other => Err(table.malformed(*line, format!("bad flag `{other}`"))),
        };
        let num = |k: usize| {
            get(k)
                .parse::<f64>()
                .map_err(|_| table.malformed(*line, format!("bad number `{}`", get(k))))
        };
        let domain = flag(5)?.unwrap_or(false);
        let conditions = match (flag(2)?, flag(3)?, flag(4)?) {
            (Some(t), Some(f), Some(u)) => ConditionVector::type1(t, f, u, domain, num(6)?),
            (None, None, None) => ConditionVector::type2(domain, num(6)?),
            _ => return Err(table.malformed(*line, "mixed type-1/type-2 flags")),
        };
        out.push(ScoredPair {
            id_a: get(0).to_string(),
            id_b: get(1).to_string(),
            conditions,
            score: num(7)?,
        });
    }
    Ok(out)
}
