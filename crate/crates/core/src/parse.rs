//! Name cleaning: spelling substitution, case and punctuation folding,
//! legal-designator removal, common-word list and the type-1/type-2 split.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

const DEFAULT_DESIGNATORS: &str = include_str!("../data/legal_designators.txt");

/// Default size of the common-word list.
pub const DEFAULT_COMMON_WORDS: usize = 250;

/// Punctuation characters that are rewritten instead of mapped to a space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PunctuationRules {
    pub replacements: BTreeMap<char, String>,
}

impl Default for PunctuationRules {
    fn default() -> Self {
        let mut replacements = BTreeMap::new();
        replacements.insert('&', " and ".to_string());
        replacements.insert('\'', String::new());
        replacements.insert('\u{2019}', String::new());
        Self { replacements }
    }
}

impl PunctuationRules {
    /// No exceptions: every non-alphanumeric character becomes a space.
    pub fn plain() -> Self {
        Self {
            replacements: BTreeMap::new(),
        }
    }
}

/// Folds diacritics, lowercases, maps punctuation to spaces and collapses
/// whitespace. The output contains only alphanumerics separated by single spaces.
pub fn normalize_text(input: &str, rules: &PunctuationRules) -> String {
    let mut mapped = String::with_capacity(input.len());
    for c in input.nfkd().filter(|c| !is_combining_mark(*c)) {
        if let Some(rep) = rules.replacements.get(&c) {
            mapped.push_str(rep);
        } else if c.is_alphanumeric() {
            mapped.extend(c.to_lowercase().filter(|l| l.is_alphanumeric()));
        } else {
            mapped.push(' ');
        }
    }
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NameClass {
    /// At least one token outside the common-word list.
    Type1,
    /// Every token is a common word.
    Type2,
}

impl NameClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NameClass::Type1 => "type1",
            NameClass::Type2 => "type2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanName {
    pub record_id: String,
    pub cleaned: String,
    pub tokens: Vec<String>,
    /// Set when designator stripping would have emptied the name; `cleaned`
    /// then keeps the designators.
    pub degenerate: bool,
    pub name_class: Option<NameClass>,
}

impl CleanName {
    pub fn new(record_id: impl Into<String>, cleaned: String, degenerate: bool) -> Self {
        let tokens = tokenize(&cleaned);
        Self {
            record_id: record_id.into(),
            cleaned,
            tokens,
            degenerate,
            name_class: None,
        }
    }
}

fn tokenize(s: &str) -> Vec<String> {
    s.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Legal-form designators grouped by language.
#[derive(Debug, Clone, Default)]
pub struct LegalDesignatorDictionary {
    by_language: BTreeMap<String, Vec<Vec<String>>>,
    /// All sequences, longest first, deduplicated.
    sequences: Vec<Vec<String>>,
    pub strip_interior: bool,
}

impl LegalDesignatorDictionary {
    /// The dictionary shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_DESIGNATORS)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn parse(text: &str) -> Self {
        let mut dict = Self::default();
        let plain = PunctuationRules::plain();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lang, entry) = match line.split_once(':') {
                Some((lang, rest)) if !lang.contains(' ') => (lang.trim(), rest),
                _ => ("any", line),
            };
            let seq = tokenize(&normalize_text(entry, &plain));
            if !seq.is_empty() {
                dict.insert(lang, seq);
            }
        }
        dict
    }

    pub fn insert(&mut self, language: &str, sequence: Vec<String>) {
        let entries = self.by_language.entry(language.to_string()).or_default();
        if !entries.contains(&sequence) {
            entries.push(sequence.clone());
        }
        if !self.sequences.contains(&sequence) {
            self.sequences.push(sequence);
            self.sequences
                .sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
    }

    pub fn languages(&self) -> impl Iterator<Item = (&str, &[Vec<String>])> {
        self.by_language
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    fn longest_match_at_tail(&self, tokens: &[String]) -> Option<usize> {
        self.sequences
            .iter()
            .find(|seq| seq.len() <= tokens.len() && tokens.ends_with(seq))
            .map(Vec::len)
    }

    fn longest_match_at(&self, tokens: &[String], start: usize) -> Option<usize> {
        let rest = &tokens[start..];
        self.sequences
            .iter()
            .find(|seq| rest.starts_with(seq))
            .map(Vec::len)
    }
}

/// Removes designator sequences from the end of the token list until none
/// matches. With `strip_interior` set, whole-token matches elsewhere go too.
pub fn strip_legal_suffixes(tokens: &[String], dict: &LegalDesignatorDictionary) -> Vec<String> {
    let mut out = tokens.to_vec();
    while let Some(len) = dict.longest_match_at_tail(&out) {
        out.truncate(out.len() - len);
    }
    if dict.strip_interior {
        let mut kept = Vec::with_capacity(out.len());
        let mut i = 0;
        while i < out.len() {
            match dict.longest_match_at(&out, i) {
                Some(len) => i += len,
                None => {
                    kept.push(out[i].clone());
                    i += 1;
                }
            }
        }
        out = kept;
    }
    out
}

/// Output of [`clean_name`] before a record id is attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cleaned {
    pub cleaned: String,
    /// The name after substitution and normalization, designators retained.
    pub normalized: String,
    pub degenerate: bool,
}

pub fn clean_name(
    raw: &str,
    correction: Option<&str>,
    dict: &LegalDesignatorDictionary,
    rules: &PunctuationRules,
) -> Cleaned {
    let source = match correction {
        Some(c) if !c.trim().is_empty() => c,
        _ => raw,
    };
    let normalized = normalize_text(source, rules);
    let tokens = tokenize(&normalized);
    let stripped = strip_legal_suffixes(&tokens, dict);
    if stripped.is_empty() {
        Cleaned {
            cleaned: normalized.clone(),
            normalized,
            degenerate: true,
        }
    } else {
        Cleaned {
            cleaned: stripped.join(" "),
            normalized,
            degenerate: false,
        }
    }
}

/// The top-n tokens by number of names containing them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonWordList {
    pub n: usize,
    words: Vec<String>,
    #[serde(skip)]
    members: HashSet<String>,
}

impl CommonWordList {
    pub fn from_words(n: usize, words: Vec<String>) -> Self {
        let words: Vec<String> = words.into_iter().take(n).collect();
        let members = words.iter().cloned().collect();
        Self { n, words, members }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.members.contains(token)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// One token per line, most frequent first.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        out
    }
}

/// Counts each distinct token once per name; degenerate names are skipped.
pub fn build_common_word_list<'a, I>(names: I, n: usize) -> CommonWordList
where
    I: IntoIterator<Item = &'a CleanName>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for name in names.into_iter().filter(|n| !n.degenerate) {
        let distinct: HashSet<&str> = name.tokens.iter().map(String::as_str).collect();
        for t in distinct {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    CommonWordList::from_words(n, ranked.into_iter().take(n).map(|(t, _)| t.to_string()).collect())
}

pub fn classify_name_type(tokens: &[String], common: &CommonWordList) -> Result<NameClass> {
    if tokens.is_empty() {
        return Err(Error::Degenerate("empty token list".into()));
    }
    if tokens.iter().all(|t| common.contains(t)) {
        Ok(NameClass::Type2)
    } else {
        Ok(NameClass::Type1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    fn clean(raw: &str) -> Cleaned {
        clean_name(
            raw,
            None,
            &LegalDesignatorDictionary::builtin(),
            &PunctuationRules::default(),
        )
    }

    #[test]
    fn cleans_typical_variants() {
        assert_eq!(clean("PFIZER, INC.").cleaned, "pfizer");
        assert_eq!(clean("NOKIA MOBILES PHONES, LTD.").cleaned, "nokia mobiles phones");
        assert_eq!(clean("IBM JAPAN BUSINESS LOGISTICS CO., LTD.").cleaned, "ibm japan business logistics");
        assert_eq!(clean("BASF ESPANOLA S.L.").cleaned, "basf espanola");
        assert_eq!(clean("NOKIA DENMARK A/S").cleaned, "nokia denmark");
    }

    #[test]
    fn all_designator_name_is_degenerate() {
        let c = clean("L.L.C.");
        assert!(c.degenerate);
        assert_eq!(c.cleaned, "l l c");
    }

    #[test]
    fn correction_replaces_raw_name() {
        let c = clean_name(
            "PHILIPS HEALTCARE INFORMATION INC.",
            Some("PHILIPS HEALTHCARE INFORMATION"),
            &LegalDesignatorDictionary::builtin(),
            &PunctuationRules::default(),
        );
        assert_eq!(c.cleaned, "philips healthcare information");
    }

    #[test]
    fn ampersand_and_apostrophe() {
        assert_eq!(clean("AT&T CORP.").cleaned, "at and t");
        assert_eq!(clean("McDonald's Corporation").cleaned, "mcdonalds");
    }

    #[test]
    fn umlauts_are_folded() {
        assert_eq!(clean("Müller Söhne GmbH").cleaned, "muller sohne");
        assert_eq!(clean("SOCIÉTÉ GÉNÉRALE S.A.").cleaned, "societe generale");
    }

    #[test]
    fn strips_longest_tail_match_repeatedly() {
        let dict = LegalDesignatorDictionary::builtin();
        assert_eq!(strip_legal_suffixes(&toks("ibm ltd"), &dict), toks("ibm"));
        assert_eq!(strip_legal_suffixes(&toks("basf"), &dict), toks("basf"));
        assert_eq!(
            strip_legal_suffixes(&toks("michelin recherche et technique s a"), &dict),
            toks("michelin recherche et technique")
        );
        assert_eq!(strip_legal_suffixes(&toks("deere gmbh co kg"), &dict), toks("deere"));
        assert_eq!(strip_legal_suffixes(&toks("nokia oy ab"), &dict), toks("nokia"));
    }

    #[test]
    fn stripping_is_whole_token_and_tail_anchored() {
        let dict = LegalDesignatorDictionary::builtin();
        assert_eq!(strip_legal_suffixes(&toks("groupon"), &dict), toks("groupon"));
        assert_eq!(strip_legal_suffixes(&toks("incyte"), &dict), toks("incyte"));
        assert_eq!(
            strip_legal_suffixes(&toks("sony corp of america"), &dict),
            toks("sony corp of america")
        );
    }

    #[test]
    fn interior_stripping_when_enabled() {
        let mut dict = LegalDesignatorDictionary::builtin();
        dict.strip_interior = true;
        assert_eq!(
            strip_legal_suffixes(&toks("sony corp of america"), &dict),
            toks("sony of america")
        );
    }

    #[test]
    fn dictionary_file_format() {
        let dict = LegalDesignatorDictionary::parse("# comment\nen: Inc.\nS.A.\n\nde:GmbH & Co. KG\n");
        assert_eq!(dict.len(), 3);
        let langs: Vec<&str> = dict.languages().map(|(l, _)| l).collect();
        assert_eq!(langs, vec!["any", "de", "en"]);
        assert_eq!(strip_legal_suffixes(&toks("x gmbh co kg"), &dict), toks("x"));
    }

    #[test]
    fn common_words_count_presence_per_name() {
        let names: Vec<CleanName> = ["alpha tech", "beta tech", "gamma"]
            .iter()
            .enumerate()
            .map(|(i, s)| CleanName::new(format!("r{i}"), s.to_string(), false))
            .collect();
        assert!(build_common_word_list(&names, 0).is_empty());
        assert_eq!(build_common_word_list(&names, 1).words(), ["tech"]);
        // ties broken lexicographically
        assert_eq!(build_common_word_list(&names, 3).words(), ["tech", "alpha", "beta"]);

        let repeated = vec![
            CleanName::new("a", "tech tech tech".into(), false),
            CleanName::new("b", "alpha".into(), false),
            CleanName::new("c", "alpha".into(), false),
        ];
        assert_eq!(build_common_word_list(&repeated, 1).words(), ["alpha"]);
    }

    #[test]
    fn type_split() {
        let common = CommonWordList::from_words(
            10,
            toks("advanced technologies pharma group networks"),
        );
        assert_eq!(classify_name_type(&toks("advanced technologies"), &common).unwrap(), NameClass::Type2);
        assert_eq!(classify_name_type(&toks("pharma group"), &common).unwrap(), NameClass::Type2);
        assert_eq!(classify_name_type(&toks("nokia networks"), &common).unwrap(), NameClass::Type1);
        assert!(classify_name_type(&[], &common).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clean_name_is_idempotent(raw in "[A-Za-z&.,' /-]{1,40}") {
                let dict = LegalDesignatorDictionary::builtin();
                let rules = PunctuationRules::default();
                let once = clean_name(&raw, None, &dict, &rules);
                prop_assume!(!once.cleaned.is_empty());
                let twice = clean_name(&once.cleaned, None, &dict, &rules);
                prop_assert_eq!(&twice.cleaned, &once.cleaned);
            }

            #[test]
            fn cleaned_form_is_canonical(raw in "\\PC{1,40}") {
                let c = clean_name(&raw, None, &LegalDesignatorDictionary::builtin(), &PunctuationRules::default());
                prop_assert!(!c.cleaned.contains("  "));
                prop_assert!(c.cleaned.chars().all(|ch| ch == ' ' || ch.is_alphanumeric()));
                prop_assert_eq!(c.cleaned.trim(), c.cleaned.as_str());
            }
        }
    }
}
