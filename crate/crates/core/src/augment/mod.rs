//! Knowledge augmentation: spelling suggestion, first result url and its page
//! text for every name, fetched once from a search provider and cached.

mod cache;
pub mod extract;
mod provider;

use std::collections::{BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::parse::{normalize_text, CommonWordList, PunctuationRules};

pub use cache::AugmentationCache;
pub use extract::{extract_did_u_mean, extract_domain};
pub use provider::{
    augment_all, fetch_augmentation, AugmentReport, HtmlSearchProvider, ProviderConfig,
    RateLimiter, RetryPolicy, SearchProvider,
};

/// Default number of most frequent domains treated as generic.
pub const DEFAULT_BLOCKLIST_K: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationResult {
    pub query_name: String,
    #[serde(default)]
    pub corrected_name: Option<String>,
    #[serde(default)]
    pub first_url: Option<String>,
    #[serde(default)]
    pub first_text: Option<String>,
    pub fetched_at: DateTime<Utc>,
    pub provider_id: String,
}

impl AugmentationResult {
    pub fn empty(query_name: impl Into<String>, provider_id: impl Into<String>) -> Self {
        Self {
            query_name: query_name.into(),
            corrected_name: None,
            first_url: None,
            first_text: None,
            fetched_at: Utc::now(),
            provider_id: provider_id.into(),
        }
    }

    /// Drops blank fields and text without a url.
    pub fn normalized(mut self) -> Self {
        let blank = |s: &Option<String>| s.as_deref().is_some_and(|v| v.trim().is_empty());
        if blank(&self.corrected_name) {
            self.corrected_name = None;
        }
        if blank(&self.first_url) {
            self.first_url = None;
        }
        if self.first_url.is_none() || blank(&self.first_text) {
            self.first_text = None;
        }
        self
    }

    pub fn domain(&self) -> Option<String> {
        self.first_url
            .as_deref()
            .and_then(|u| extract::extract_domain(u).ok())
    }
}

/// Parsed augmentation used by the matcher.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainInfo {
    pub name_id: String,
    /// `None` when absent or blocklisted.
    pub domain: Option<String>,
    pub url_tokens: BTreeSet<String>,
}

/// The `k` most frequent domains over all results; ties go to the
/// lexicographically smaller domain.
pub fn build_frequent_domain_blocklist<'a, I>(results: I, k: usize) -> HashSet<String>
where
    I: IntoIterator<Item = &'a AugmentationResult>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in results {
        if let Some(d) = r.domain() {
            *counts.entry(d).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().take(k).map(|(d, _)| d).collect()
}

/// Lowercased, punctuation-free word set of a page text minus common words.
pub fn preprocess_url_text(text: &str, common: &CommonWordList) -> BTreeSet<String> {
    normalize_text(text, &PunctuationRules::plain())
        .split(' ')
        .filter(|t| !t.is_empty() && !common.contains(t))
        .map(str::to_string)
        .collect()
}

pub fn build_domain_info(
    name_id: &str,
    result: Option<&AugmentationResult>,
    blocklist: &HashSet<String>,
    common: &CommonWordList,
) -> DomainInfo {
    let Some(r) = result else {
        return DomainInfo {
            name_id: name_id.to_string(),
            ..Default::default()
        };
    };
    let domain = r.domain().filter(|d| !blocklist.contains(d));
    let url_tokens = r
        .first_text
        .as_deref()
        .map(|t| preprocess_url_text(t, common))
        .unwrap_or_default();
    DomainInfo {
        name_id: name_id.to_string(),
        domain,
        url_tokens,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_url(url: &str) -> AugmentationResult {
        AugmentationResult {
            first_url: Some(url.to_string()),
            ..AugmentationResult::empty("q", "test")
        }
    }

    fn results(counts: &[(&str, usize)]) -> Vec<AugmentationResult> {
        counts
            .iter()
            .flat_map(|(d, n)| std::iter::repeat_with(move || with_url(&format!("https://www.{d}/x"))).take(*n))
            .collect()
    }

    #[test]
    fn blocklist_top_k_with_tie_break() {
        let rs = results(&[("a.com", 5), ("c.com", 3), ("b.com", 3)]);
        assert!(build_frequent_domain_blocklist(&rs, 0).is_empty());
        let top2 = build_frequent_domain_blocklist(&rs, 2);
        assert_eq!(top2, HashSet::from(["a.com".to_string(), "b.com".to_string()]));
        assert_eq!(build_frequent_domain_blocklist(&rs, DEFAULT_BLOCKLIST_K).len(), 3);
    }

    #[test]
    fn blocklist_is_permutation_invariant() {
        let mut rs = results(&[("a.com", 2), ("b.com", 2), ("c.com", 1), ("d.com", 1)]);
        let before = build_frequent_domain_blocklist(&rs, 3);
        rs.reverse();
        assert_eq!(before, build_frequent_domain_blocklist(&rs, 3));
        rs.rotate_left(2);
        assert_eq!(before, build_frequent_domain_blocklist(&rs, 3));
    }

    #[test]
    fn url_text_filtering() {
        let common = CommonWordList::from_words(10, vec!["is".into(), "a".into(), "company".into()]);
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(preprocess_url_text("Nokia is a Finnish company", &common), set(&["nokia", "finnish"]));
        assert!(preprocess_url_text("is a company", &common).is_empty());
        assert!(preprocess_url_text("", &common).is_empty());
        let none = CommonWordList::default();
        assert_eq!(preprocess_url_text("Nokia, Oyj!", &none), set(&["nokia", "oyj"]));
    }

    #[test]
    fn domain_info_respects_blocklist() {
        let common = CommonWordList::default();
        let mut r = with_url("https://en.wikipedia.org/wiki/Nokia");
        r.first_text = Some("Nokia Oyj".into());
        let blocked = HashSet::from(["wikipedia.org".to_string()]);
        let info = build_domain_info("n1", Some(&r), &blocked, &common);
        assert_eq!(info.domain, None);
        assert_eq!(info.url_tokens.len(), 2);
        let open = build_domain_info("n1", Some(&r), &HashSet::new(), &common);
        assert_eq!(open.domain.as_deref(), Some("wikipedia.org"));
        assert_eq!(build_domain_info("n2", None, &blocked, &common).domain, None);
    }

    #[test]
    fn normalization_enforces_invariants() {
        let mut r = AugmentationResult::empty("q", "p");
        r.corrected_name = Some("  ".into());
        r.first_text = Some("orphan text".into());
        let r = r.normalized();
        assert_eq!(r.corrected_name, None);
        assert_eq!(r.first_text, None);
    }
}
