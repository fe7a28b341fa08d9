//! Pipeline configuration: a TOML file with one table per stage, overridable
//! through `TERR_<SECTION>_<KEY>` environment variables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{ProviderConfig, DEFAULT_BLOCKLIST_K};
use crate::error::{Error, Result};
use crate::graph::FilterParams;
use crate::matching::WeightVector;
use crate::parse::DEFAULT_COMMON_WORDS;
use crate::tune::{SearchSpace, TpeConfig};

pub const ENV_PREFIX: &str = "TERR_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub input: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Persist per-stage intermediate files next to the mapping.
    pub write_artifacts: bool,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            input: None,
            cache: None,
            gold: None,
            output_dir: PathBuf::from("out"),
            write_artifacts: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// Keyword file for the organization / institution / individual split.
    pub keywords: Option<PathBuf>,
    /// Keep individuals out of matching; each stays its own community.
    pub exclude_individuals: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { keywords: None, exclude_individuals: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParseConfig {
    pub common_words_n: usize,
    pub designators: Option<PathBuf>,
    pub strip_interior: bool,
}

impl Default for ParseConfig {
    fn default() -> Self {
        Self { common_words_n: DEFAULT_COMMON_WORDS, designators: None, strip_interior: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// When false no augmentation is used at all, not even cached.
    pub enabled: bool,
    pub blocklist_k: usize,
    pub parallelism: usize,
    /// Never touch the network; cache misses stay un-augmented.
    pub offline: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { enabled: true, blocklist_k: DEFAULT_BLOCKLIST_K, parallelism: 4, offline: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Hashing,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub backend: BackendKind,
    pub dim: usize,
    pub seed: u64,
    pub vectors: Option<PathBuf>,
    /// With a vector file: fail on out-of-vocabulary tokens instead of hashing them.
    pub strict: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { backend: BackendKind::Hashing, dim: 300, seed: 0, vectors: None, strict: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockingMode {
    /// Inverted-index blocking, or all pairs when the threshold is too low
    /// for blocking to be exact.
    Auto,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchConfig {
    pub weights: WeightVector,
    pub blocking: BlockingMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { weights: WeightVector::unit(), blocking: BlockingMode::Auto }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
    pub seed: u64,
    pub trials: usize,
    /// Evaluate the configured parameters as trial 0.
    pub enqueue_default: bool,
    /// Bound overrides, `name = [lower, upper]`.
    pub space: BTreeMap<String, [f64; 2]>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        let tpe = TpeConfig::default();
        Self {
            gamma: tpe.gamma,
            n_startup: tpe.n_startup,
            n_candidates: tpe.n_candidates,
            seed: tpe.seed,
            trials: 30,
            enqueue_default: true,
            space: BTreeMap::new(),
        }
    }
}

impl TuneConfig {
    pub fn tpe(&self) -> TpeConfig {
        TpeConfig {
            gamma: self.gamma,
            n_startup: self.n_startup,
            n_candidates: self.n_candidates,
            seed: self.seed,
            ..TpeConfig::default()
        }
    }

    pub fn search_space(&self) -> Result<SearchSpace> {
        let mut space = SearchSpace::default();
        for (name, [lo, hi]) in &self.space {
            space.set_bounds(name, *lo, *hi)?;
        }
        Ok(space)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub io: IoConfig,
    pub ingest: IngestConfig,
    pub parse: ParseConfig,
    pub augment: AugmentConfig,
    pub provider: ProviderConfig,
    pub embed: EmbedConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub graph: FilterParams,
    pub tune: TuneConfig,
}

impl PipelineConfig {
    /// Reads `path`, resolves relative paths against its directory and
    /// applies `TERR_*` overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_with_env(&text, std::env::vars())?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_env(text, std::iter::empty())
    }

    pub fn from_toml_with_env<I>(text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let parsed: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let mut table = toml::Table::try_from(&parsed).map_err(|e| Error::Config(e.to_string()))?;
        let mut overridden = false;
        for (key, value) in vars {
            if let Some(rest) = key.strip_prefix(ENV_PREFIX) {
                apply_override(&mut table, &rest.to_ascii_lowercase(), &value)
                    .map_err(|m| Error::Config(format!("{key}: {m}")))?;
                overridden = true;
            }
        }
        let cfg = if overridden {
            table.try_into::<PipelineConfig>().map_err(|e| Error::Config(e.message().to_string()))?
        } else {
            parsed
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.matching.weights.validate()?;
        self.graph.validate()?;
        self.tpe_validate()?;
        if self.embed.backend == BackendKind::Hashing && self.embed.dim < crate::embed::HashingBackend::MIN_DIM {
            return Err(Error::Config(format!("embed.dim must be at least 32, got {}", self.embed.dim)));
        }
        if self.embed.backend == BackendKind::File && self.embed.vectors.is_none() {
            return Err(Error::Config("embed.backend = \"file\" needs embed.vectors".into()));
        }
        Ok(())
    }

    fn tpe_validate(&self) -> Result<()> {
        self.tune.tpe().validate()?;
        self.tune.search_space().map(|_| ())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.io.input.as_mut(),
            self.io.cache.as_mut(),
            self.io.gold.as_mut(),
            self.ingest.keywords.as_mut(),
            self.parse.designators.as_mut(),
            self.embed.vectors.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.io.output_dir);
    }

    /// Canonical TOML rendering; what the config hash covers.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// `--seed` sets the seeds that drive randomized stages.
    pub fn set_seed(&mut self, seed: u64) {
        self.graph.seed = seed;
        self.tune.seed = seed;
    }
}

/// Sets `section.key` from `rest = "<section>_<key>"`. Keys may contain
/// underscores and may address nested tables (`match_weights_cos`).
fn apply_override(table: &mut toml::Table, rest: &str, raw: &str) -> std::result::Result<(), String> {
    let (section, key) = rest.split_once('_').ok_or("expected TERR_<SECTION>_<KEY>")?;
    let section = table
        .get_mut(section)
        .and_then(toml::Value::as_table_mut)
        .ok_or_else(|| format!("unknown section `{section}`"))?;
    set_path(section, key, parse_value(raw))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> std::result::Result<(), String> {
    if table.contains_key(key) || !key.contains('_') {
        table.insert(key.to_string(), value);
        return Ok(());
    }
    for (i, _) in key.match_indices('_') {
        let (head, tail) = (&key[..i], &key[i + 1..]);
        if let Some(sub) = table.get_mut(head).and_then(toml::Value::as_table_mut) {
            return set_path(sub, tail, value);
        }
    }
    // absent optional field; serde reports it if it does not exist
    table.insert(key.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
