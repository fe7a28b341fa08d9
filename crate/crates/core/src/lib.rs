//! Harmonization of company-name variants in patent-assignee records.
//!
//! The pipeline runs in three stages over a table of assignee names:
//!
//! 1. **parse**: each name is enriched from a cached web search ([`augment`]),
//!    spelling-corrected, cleaned of punctuation and legal designators, and split
//!    into *type 1* (has a distinctive token) or *type 2* (only generic tokens).
//! 2. **match**: candidate pairs are blocked on shared keys and scored as the
//!    dot product of a condition vector (shared token, shared first token,
//!    shared url-text word, shared domain, embedding cosine) with a weight vector.
//! 3. **filter**: pairs above a threshold form a graph; Louvain communities are
//!    refined by pruning global bridges and re-clustering, then named.
//!
//! [`eval`] scores a partition against gold clusters with pairwise metrics and
//! [`tune`] searches the nine pipeline hyperparameters with a Tree-structured
//! Parzen Estimator.

pub mod augment;
pub mod config;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod matching;
pub mod parse;
pub mod pipeline;
pub mod tsv;
pub mod tune;

pub use error::{Error, Result};
pub use eval::{EvalReport, PairwiseConfusion};
pub use graph::{FilterParams, NamingStrategy, Partition, SimilarityGraph};
pub use ingest::{AssigneeRecord, GoldLabel, LocationKey, NameKind};
pub use matching::{ConditionVector, NameClass, ScoredPair, WeightVector};
pub use parse::{CleanName, CommonWordList, LegalDesignatorDictionary};
pub use pipeline::{run_pipeline, PipelineOutput, RunManifest};
pub use tune::{SearchSpace, TpeConfig, Trial};
