//! Name vectors: per-token vectors from a pluggable backend, pooled with
//! rescaled inverse-document-frequency weights, compared by cosine.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower end of the rescaled idf range. A token present in every name gets
/// exactly this weight.
pub const IDF_FLOOR: f64 = 0.01;

pub trait EmbeddingBackend: Send + Sync {
    fn dim(&self) -> usize;

    /// `None` means the token is out of vocabulary for a strict backend.
    fn token_vector(&self, token: &str) -> Option<Vec<f64>>;
}

/// Character 3-gram feature hashing with signed buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingBackend {
    dim: usize,
    seed: u64,
}

impl HashingBackend {
    pub const MIN_DIM: usize = 32;

    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < Self::MIN_DIM {
            return Err(Error::Config(format!(
                "embedding dimension {dim} below minimum {}",
                Self::MIN_DIM
            )));
        }
        Ok(Self { dim, seed })
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // final avalanche so low bits depend on every input byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

/// Deterministic unit vector for `token` from hashed character 3-grams of
/// `<token>`.
pub fn hashing_backend(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let padded: Vec<char> = format!("<{token}>").chars().collect();
    let mut v = vec![0.0; dim];
    let mut gram = String::new();
    for w in padded.windows(3.min(padded.len())) {
        gram.clear();
        gram.extend(w);
        let h = fnv1a(seed, gram.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let norm = l2(&v);
    if norm == 0.0 {
        // every gram cancelled out through collisions
        let h = fnv1a(seed, token.as_bytes());
        v[(h % dim as u64) as usize] = 1.0;
        return v;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

impl EmbeddingBackend for HashingBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn token_vector(&self, token: &str) -> Option<Vec<f64>> {
        Some(hashing_backend(token, self.dim, self.seed))
    }
}

/// Precomputed token vectors read from a TSV file. Unknown tokens fall back to
/// feature hashing unless `strict` is set.
#[derive(Debug, Clone)]
pub struct FileBackend {
    vectors: HashMap<String, Vec<f64>>,
    fallback: Option<HashingBackend>,
    dim: usize,
}

impl FileBackend {
    /// Reads `dim<TAB>d` followed by rows `token<TAB>f1 f2 ... fd`.
    pub fn load(path: &Path, seed: u64, strict: bool) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let malformed = |line: usize, message: String| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::Schema(format!("{}: empty vector file", path.display())))?;
        let dim: usize = match header.trim().split_once('\t') {
            Some(("dim", d)) => d
                .trim()
                .parse()
                .map_err(|_| malformed(1, format!("invalid dimension `{d}`")))?,
            _ => return Err(malformed(1, "expected header `dim<TAB>d`".into())),
        };
        let mut vectors = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (token, values) = line
                .split_once('\t')
                .ok_or_else(|| malformed(i + 2, "missing tab".into()))?;
            let v: Vec<f64> = values
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| malformed(i + 2, "non-numeric component".into()))?;
            if v.len() != dim || v.iter().any(|x: &f64| !x.is_finite()) {
                return Err(malformed(i + 2, format!("expected {dim} finite components")));
            }
            vectors.insert(token.to_string(), v);
        }
        Self::from_vectors(vectors, dim, seed, strict)
    }

    pub fn from_vectors(
        vectors: HashMap<String, Vec<f64>>,
        dim: usize,
        seed: u64,
        strict: bool,
    ) -> Result<Self> {
        let fallback = if strict {
            None
        } else {
            Some(HashingBackend::new(dim, seed)?)
        };
        Ok(Self {
            vectors,
            fallback,
            dim,
        })
    }
}

impl EmbeddingBackend for FileBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn token_vector(&self, token: &str) -> Option<Vec<f64>> {
        match self.vectors.get(token) {
            Some(v) => Some(v.clone()),
            None => self.fallback.as_ref().and_then(|f| f.token_vector(token)),
        }
    }
}

/// Rescaled idf weight per token.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IdfTable {
    pub n_names: usize,
    weights: HashMap<String, f64>,
}

impl IdfTable {
    /// Tokens never seen in the corpus get the maximum weight 1.
    pub fn weight(&self, token: &str) -> f64 {
        self.weights.get(token).copied().unwrap_or(1.0)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// `ln(N / n_i)` per token, min-max rescaled over the observed range onto
/// `[IDF_FLOOR, 1]`. Each name is one document; repeated tokens count once.
pub fn compute_idf<'a, I, T>(names: I) -> IdfTable
where
    I: IntoIterator<Item = &'a T>,
    T: AsRef<[String]> + 'a + ?Sized,
{
    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    let mut n_names = 0usize;
    for tokens in names {
        n_names += 1;
        let distinct: HashSet<&str> = tokens.as_ref().iter().map(String::as_str).collect();
        for t in distinct {
            *doc_freq.entry(t).or_default() += 1;
        }
    }
    if doc_freq.is_empty() {
        return IdfTable {
            n_names,
            weights: HashMap::new(),
        };
    }
    let n = n_names as f64;
    let raw: Vec<(&str, f64)> = doc_freq
        .into_iter()
        .map(|(t, df)| (t, (n / df as f64).ln()))
        .collect();
    let lo = raw.iter().map(|(_, r)| *r).fold(f64::INFINITY, f64::min);
    let hi = raw.iter().map(|(_, r)| *r).fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let weights = raw
        .into_iter()
        .map(|(t, r)| {
            let w = if span > 0.0 {
                IDF_FLOOR + (1.0 - IDF_FLOOR) * ((r - lo) / span)
            } else {
                1.0
            };
            (t.to_string(), w)
        })
        .collect();
    IdfTable { n_names, weights }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameEmbedding {
    pub record_id: String,
    pub vector: Vec<f64>,
    pub degenerate: bool,
}

impl NameEmbedding {
    pub fn degenerate(record_id: impl Into<String>, dim: usize) -> Self {
        Self {
            record_id: record_id.into(),
            vector: vec![0.0; dim],
            degenerate: true,
        }
    }
}

/// idf-weighted mean of the token vectors. Tokens the backend cannot embed
/// are skipped; if none remain the embedding is flagged degenerate.
pub fn embed_name(
    record_id: &str,
    tokens: &[String],
    backend: &dyn EmbeddingBackend,
    idf: &IdfTable,
) -> NameEmbedding {
    let dim = backend.dim();
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for token in tokens {
        if let Some(v) = backend.token_vector(token) {
            let w = idf.weight(token);
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += w * x;
            }
            total += w;
        }
    }
    if total == 0.0 {
        return NameEmbedding::degenerate(record_id, dim);
    }
    acc.iter_mut().for_each(|a| *a /= total);
    let degenerate = acc.iter().all(|x| *x == 0.0);
    NameEmbedding {
        record_id: record_id.to_string(),
        vector: acc,
        degenerate,
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "dimension mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (l2(a), l2(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("zero-norm embedding".into()));
    }
    if a == b {
        return Ok(1.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &NameEmbedding, b: &NameEmbedding) -> Result<f64> {
    if a.degenerate || b.degenerate {
        return Err(Error::Degenerate(format!(
            "{} / {}",
            a.record_id, b.record_id
        )));
    }
    cosine(&a.vector, &b.vector)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(docs: &[&str]) -> Vec<Vec<String>> {
        docs.iter()
            .map(|d| d.split(' ').map(str::to_string).collect())
            .collect()
    }

    fn fixed(vectors: &[(&str, Vec<f64>)]) -> FileBackend {
        let map = vectors.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        FileBackend::from_vectors(map, vectors[0].1.len(), 0, true).unwrap()
    }

    #[test]
    fn idf_extremes_and_midpoint() {
        // "x" in all 4, "a" in exactly one, "m" in two
        let docs = names(&["x a m", "x m", "x b", "x c"]);
        let idf = compute_idf(&docs);
        assert_eq!(idf.n_names, 4);
        assert!((idf.weight("x") - IDF_FLOOR).abs() < 1e-15);
        assert!((idf.weight("a") - 1.0).abs() < 1e-15);
        let expected = 0.01 + 0.99 * (2f64.ln() / 4f64.ln());
        assert!((idf.weight("m") - expected).abs() < 1e-12);
        assert!((idf.weight("m") - 0.505).abs() < 1e-3);
    }

    #[test]
    fn idf_single_distinct_value_maps_to_one() {
        let docs = names(&["a", "b", "c"]);
        let idf = compute_idf(&docs);
        assert!(idf.iter().all(|(_, w)| w == 1.0));
        assert_eq!(idf.weight("never-seen"), 1.0);
    }

    #[test]
    fn weighted_mean_pooling() {
        let backend = fixed(&[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]);
        let mut idf = IdfTable::default();
        idf.weights.insert("a".into(), 1.0);
        idf.weights.insert("b".into(), 0.5);
        let e = embed_name("r", &["a".to_string(), "b".to_string()], &backend, &idf);
        assert!((e.vector[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((e.vector[1] - 1.0 / 3.0).abs() < 1e-15);

        let single = embed_name("r", &["b".to_string()], &backend, &idf);
        assert_eq!(single.vector, vec![0.0, 1.0]);

        idf.weights.insert("b".into(), 1.0);
        let equal = embed_name("r", &["a".to_string(), "b".to_string()], &backend, &idf);
        assert_eq!(equal.vector, vec![0.5, 0.5]);
    }

    #[test]
    fn strict_backend_all_oov_is_degenerate() {
        let backend = fixed(&[("a", vec![1.0, 0.0])]);
        let e = embed_name("r", &["zzz".to_string()], &backend, &IdfTable::default());
        assert!(e.degenerate);
        assert!(cosine_similarity(&e, &e).is_err());
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Degenerate(_))));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn hashing_backend_regression() {
        let nokia = hashing_backend("nokia", 256, 0);
        assert_eq!(nokia, hashing_backend("nokia", 256, 0));
        assert!((l2(&nokia) - 1.0).abs() < 1e-12);
        let nokian = hashing_backend("nokian", 256, 0);
        let samsung = hashing_backend("samsung", 256, 0);
        let near = cosine(&nokia, &nokian).unwrap();
        let far = cosine(&nokia, &samsung).unwrap();
        assert!(near > 0.5, "{near}");
        assert!(far < near, "{far} vs {near}");
        assert!(HashingBackend::new(16, 0).is_err());
    }

    #[test]
    fn file_backend_reads_tsv_and_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.tsv");
        let mut text = String::from("dim\t32\n");
        text.push_str("nokia\t");
        text.push_str(&vec!["0.5"; 32].join(" "));
        text.push('\n');
        std::fs::write(&path, text).unwrap();

        let lenient = FileBackend::load(&path, 7, false).unwrap();
        assert_eq!(lenient.dim(), 32);
        assert_eq!(lenient.token_vector("nokia").unwrap(), vec![0.5; 32]);
        assert_eq!(lenient.token_vector("basf").unwrap(), hashing_backend("basf", 32, 7));

        let strict = FileBackend::load(&path, 7, true).unwrap();
        assert!(strict.token_vector("basf").is_none());

        std::fs::write(&path, "dim\t32\nbad\t1 2 3\n").unwrap();
        assert!(matches!(FileBackend::load(&path, 0, false), Err(Error::Malformed { line: 2, .. })));
    }

    /// Any backend can stand behind the same pooling code.
    #[test]
    fn backends_are_interchangeable() {
        let tokens: Vec<String> = vec!["nokia".into(), "networks".into()];
        let idf = compute_idf(&[tokens.clone()]);
        let backends: Vec<Box<dyn EmbeddingBackend>> = vec![
            Box::new(HashingBackend::new(64, 1).unwrap()),
            Box::new(FileBackend::from_vectors(HashMap::new(), 64, 1, false).unwrap()),
        ];
        let out: Vec<NameEmbedding> = backends
            .iter()
            .map(|b| embed_name("r", &tokens, b.as_ref(), &idf))
            .collect();
        assert_eq!(out[0], out[1]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn idf_antitone_in_document_frequency(
                docs in proptest::collection::vec(proptest::collection::vec("[a-e]", 1..4), 1..30)
            ) {
                let docs: Vec<Vec<String>> = docs;
                let idf = compute_idf(&docs);
                let mut df: HashMap<&str, usize> = HashMap::new();
                for d in &docs {
                    let s: HashSet<&str> = d.iter().map(String::as_str).collect();
                    for t in s { *df.entry(t).or_default() += 1; }
                }
                for (a, na) in &df {
                    let wa = idf.weight(a);
                    prop_assert!(wa > 0.0 && wa <= 1.0);
                    for (b, nb) in &df {
                        if na < nb {
                            prop_assert!(wa >= idf.weight(b));
                        }
                    }
                }
            }

            #[test]
            fn pooling_ignores_token_order(mut tokens in proptest::collection::vec("[a-z]{1,6}", 1..6)) {
                let backend = HashingBackend::new(64, 3).unwrap();
                let idf = compute_idf(&[tokens.clone(), vec!["filler".to_string()]]);
                let a = embed_name("r", &tokens, &backend, &idf);
                tokens.reverse();
                let b = embed_name("r", &tokens, &backend, &idf);
                for (x, y) in a.vector.iter().zip(&b.vector) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }

            #[test]
            fn cosine_symmetric_and_scale_invariant(
                a in proptest::collection::vec(-1.0f64..1.0, 4),
                b in proptest::collection::vec(-1.0f64..1.0, 4),
                alpha in 0.01f64..100.0,
            ) {
                prop_assume!(l2(&a) > 1e-6 && l2(&b) > 1e-6);
                let ab = cosine(&a, &b).unwrap();
                prop_assert!((ab - cosine(&b, &a).unwrap()).abs() < 1e-12);
                let scaled: Vec<f64> = a.iter().map(|x| x * alpha).collect();
                prop_assert!((ab - cosine(&scaled, &b).unwrap()).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&ab));
            }
        }
    }
}
