//! Assignee tables, gold labels, locations and the name-kind classifier.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parse::{normalize_text, PunctuationRules};
use crate::tsv::{field, TsvTable};

pub const ASSIGNEE_HEADER: &str = "record_id\traw_name\tpatent_count\tlocations";
pub const GOLD_HEADER: &str = "record_id\tentity_id";

const DEFAULT_INSTITUTION_KEYWORDS: &str = include_str!("../data/institution_keywords.txt");

/// `city|state|country`, lowercase and whitespace-collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocationKey(String);

impl LocationKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The all-empty key `||` carries no location evidence.
    pub fn is_blank(&self) -> bool {
        self.0.chars().all(|c| c == '|')
    }

    /// Re-harmonizes a serialized key. Missing components are taken as empty.
    pub fn parse(s: &str) -> Self {
        let mut parts = s.splitn(3, '|');
        let city = parts.next().unwrap_or("");
        let state = parts.next().unwrap_or("");
        let country = parts.next().unwrap_or("");
        harmonize_location(city, state, country)
    }
}

impl fmt::Display for LocationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn squash(component: &str) -> String {
    component
        .replace(['|', ';'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn harmonize_location(city: &str, state: &str, country: &str) -> LocationKey {
    LocationKey(format!("{}|{}|{}", squash(city), squash(state), squash(country)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssigneeRecord {
    pub record_id: String,
    pub raw_name: String,
    pub patent_count: u64,
    pub locations: BTreeSet<LocationKey>,
}

impl AssigneeRecord {
    pub fn new(record_id: impl Into<String>, raw_name: impl Into<String>, patent_count: u64) -> Self {
        Self {
            record_id: record_id.into(),
            raw_name: raw_name.into(),
            patent_count,
            locations: BTreeSet::new(),
        }
    }

    pub fn with_location(mut self, key: LocationKey) -> Self {
        self.locations.insert(key);
        self
    }
}

pub fn load_assignee_table(path: &Path) -> Result<Vec<AssigneeRecord>> {
    let table = TsvTable::read(path)?;
    parse_assignee_table(&table)
}

pub fn parse_assignee_table(table: &TsvTable) -> Result<Vec<AssigneeRecord>> {
    let id_col = table.require("record_id")?;
    let name_col = table.require("raw_name")?;
    let count_col = table.column("patent_count");
    let loc_col = table.column("locations");

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let record_id = field(fields, id_col).trim();
        if record_id.is_empty() {
            return Err(table.malformed(*line, "empty record_id"));
        }
        let raw_name = field(fields, name_col);
        if raw_name.trim().is_empty() {
            return Err(table.malformed(*line, "empty raw_name"));
        }
        let patent_count = match count_col.map(|c| field(fields, c).trim()) {
            None | Some("") => 0,
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| table.malformed(*line, format!("invalid patent_count `{v}`")))?,
        };
        let locations = loc_col
            .map(|c| field(fields, c))
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.trim().is_empty())
            .map(LocationKey::parse)
            .collect();
        if !seen.insert(record_id.to_string()) {
            return Err(Error::DuplicateId(record_id.to_string()));
        }
        records.push(AssigneeRecord {
            record_id: record_id.to_string(),
            raw_name: raw_name.to_string(),
            patent_count,
            locations,
        });
    }
    Ok(records)
}

pub fn write_assignee_table(records: &[AssigneeRecord]) -> String {
    let mut out = String::from(ASSIGNEE_HEADER);
    out.push('\n');
    for r in records {
        let locs: Vec<&str> = r.locations.iter().map(LocationKey::as_str).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.record_id,
            r.raw_name,
            r.patent_count,
            locs.join(";")
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub record_id: String,
    pub entity_id: String,
}

pub fn load_gold_standard(path: &Path) -> Result<Vec<GoldLabel>> {
    let table = TsvTable::read(path)?;
    let id_col = table.require("record_id")?;
    let entity_col = table.require("entity_id")?;
    let mut seen = HashSet::new();
    let mut labels = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let record_id = field(fields, id_col).trim();
        let entity_id = field(fields, entity_col).trim();
        if record_id.is_empty() || entity_id.is_empty() {
            return Err(table.malformed(*line, "empty record_id or entity_id"));
        }
        if !seen.insert(record_id.to_string()) {
            return Err(Error::DuplicateId(record_id.to_string()));
        }
        labels.push(GoldLabel {
            record_id: record_id.to_string(),
            entity_id: entity_id.to_string(),
        });
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NameKind {
    Organization,
    Individual,
    Institution,
}

/// Keyword-based organization / individual / institution classifier.
#[derive(Debug, Clone)]
pub struct NameKindClassifier {
    institution: Vec<Vec<String>>,
    organization: Vec<Vec<String>>,
}

/// Tokens that mark a comma-separated name as a business rather than a person.
const ORGANIZATION_KEYWORDS: &[&str] = &[
    "inc", "incorporated", "corp", "corporation", "co", "company", "ltd", "limited", "llc", "llp",
    "lp", "plc", "gmbh", "ag", "kg", "sa", "srl", "spa", "bv", "nv", "ab", "oy", "oyj", "kk",
    "pty", "pte", "sarl", "sas", "group", "holding", "holdings", "technologies", "technology",
    "systems", "industries", "international", "consulting", "enterprises", "partners",
    "associates", "laboratories", "labs", "trust", "bank", "the", "and",
];

impl Default for NameKindClassifier {
    fn default() -> Self {
        Self::from_keyword_text(DEFAULT_INSTITUTION_KEYWORDS)
    }
}

impl NameKindClassifier {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_keyword_text(&text))
    }

    pub fn from_keyword_text(text: &str) -> Self {
        let plain = PunctuationRules::plain();
        let institution = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| normalize_text(l, &plain).split(' ').map(str::to_string).collect())
            .collect();
        let organization = ORGANIZATION_KEYWORDS
            .iter()
            .map(|k| vec![k.to_string()])
            .collect();
        Self {
            institution,
            organization,
        }
    }

    pub fn classify(&self, raw_name: &str) -> NameKind {
        let plain = PunctuationRules::plain();
        let normalized = normalize_text(raw_name, &plain);
        let tokens: Vec<&str> = normalized.split(' ').filter(|t| !t.is_empty()).collect();
        if contains_any(&tokens, &self.institution) {
            return NameKind::Institution;
        }
        if contains_any(&tokens, &self.organization) {
            return NameKind::Organization;
        }
        if looks_like_person(raw_name) {
            NameKind::Individual
        } else {
            NameKind::Organization
        }
    }
}

fn contains_any(tokens: &[&str], keywords: &[Vec<String>]) -> bool {
    keywords.iter().any(|kw| {
        !kw.is_empty()
            && tokens
                .windows(kw.len())
                .any(|w| w.iter().zip(kw).all(|(a, b)| *a == b))
    })
}

/// `Surname, Forename(s)`: exactly one comma, alphabetic words on both sides.
fn looks_like_person(raw: &str) -> bool {
    let mut parts = raw.split(',');
    let (surname, forenames) = match (parts.next(), parts.next(), parts.next()) {
        (Some(s), Some(f), None) => (s.trim(), f.trim()),
        _ => return false,
    };
    let wordlike = |w: &str| {
        !w.is_empty() && w.chars().all(|c| c.is_alphabetic() || matches!(c, '.' | '-' | '\''))
    };
    let surname_words: Vec<&str> = surname.split_whitespace().collect();
    let forename_words: Vec<&str> = forenames.split_whitespace().collect();
    (1..=3).contains(&surname_words.len())
        && (1..=4).contains(&forename_words.len())
        && surname_words.iter().all(|w| wordlike(w))
        && forename_words.iter().all(|w| wordlike(w))
}

pub fn classify_name_kind(raw_name: &str) -> NameKind {
    NameKindClassifier::default().classify(raw_name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_direct_field_mapping() {
        let f = write_tmp(&format!("{ASSIGNEE_HEADER}\nr1\tNOKIA CORPORATION\t12\tespoo||fi\n"));
        let recs = load_assignee_table(f.path()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.record_id, "r1");
        assert_eq!(r.raw_name, "NOKIA CORPORATION");
        assert_eq!(r.patent_count, 12);
        assert_eq!(r.locations.iter().map(|l| l.as_str()).collect::<Vec<_>>(), ["espoo||fi"]);
    }

    #[test]
    fn header_only_is_empty() {
        let f = write_tmp(&format!("{ASSIGNEE_HEADER}\n"));
        assert!(load_assignee_table(f.path()).unwrap().is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write_tmp(&format!("{ASSIGNEE_HEADER}\nr1\tA\t1\t\nr1\tB\t2\t\n"));
        match load_assignee_table(f.path()) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "r1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn patent_count_defaults_to_zero_without_column() {
        let f = write_tmp("record_id\traw_name\nr1\tBASF SE\n");
        let recs = load_assignee_table(f.path()).unwrap();
        assert_eq!(recs[0].patent_count, 0);
        assert!(recs[0].locations.is_empty());
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let f = write_tmp(&format!("{ASSIGNEE_HEADER}\nr1\tA\t1\t\nr2\tB\tmany\t\n"));
        match load_assignee_table(f.path()) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(&format!("{ASSIGNEE_HEADER}\nr1\t  \t1\t\n"));
        assert!(matches!(load_assignee_table(f.path()), Err(Error::Malformed { line: 2, .. })));
    }

    #[test]
    fn gold_standard_loading() {
        let f = write_tmp("record_id\tentity_id\nr1\tE1\nr2\tE1\nr3\tE2\n");
        let labels = load_gold_standard(f.path()).unwrap();
        assert_eq!(labels.len(), 3);
        let entities: HashSet<&str> = labels.iter().map(|l| l.entity_id.as_str()).collect();
        assert_eq!(entities.len(), 2);
        assert_eq!(labels[2].record_id, "r3");

        let dup = write_tmp("record_id\tentity_id\nr1\tE1\nr1\tE2\n");
        assert!(matches!(load_gold_standard(dup.path()), Err(Error::DuplicateId(_))));

        let empty = write_tmp("record_id\tentity_id\n");
        assert!(load_gold_standard(empty.path()).unwrap().is_empty());

        let missing = write_tmp("record_id\tcluster\nr1\tE1\n");
        assert!(matches!(load_gold_standard(missing.path()), Err(Error::Schema(_))));
    }

    #[test]
    fn harmonizes_locations() {
        assert_eq!(harmonize_location("Espoo ", "", "FI").as_str(), "espoo||fi");
        assert_eq!(harmonize_location("", "", "").as_str(), "||");
        assert!(harmonize_location("", "", "").is_blank());
        assert_eq!(harmonize_location("New  York", "NY", "US").as_str(), "new york|ny|us");
    }

    #[test]
    fn classifies_name_kinds() {
        assert_eq!(classify_name_kind("SMITH, JOHN A."), NameKind::Individual);
        assert_eq!(classify_name_kind("NOKIA CORPORATION"), NameKind::Organization);
        assert_eq!(classify_name_kind("UNIVERSITY OF BORDEAUX"), NameKind::Institution);
        assert_eq!(classify_name_kind("PFIZER, INC."), NameKind::Organization);
        // organization keywords take precedence over the person pattern
        assert_eq!(classify_name_kind("SMITH, JOHN CONSULTING LLC"), NameKind::Organization);
    }

    #[test]
    fn hand_labeled_fixture() {
        let fixture = include_str!("../tests/fixtures/name_kinds.tsv");
        let clf = NameKindClassifier::default();
        let mut n = 0;
        for line in fixture.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let (name, label) = line.split_once('\t').unwrap();
            let expected = match label {
                "organization" => NameKind::Organization,
                "individual" => NameKind::Individual,
                "institution" => NameKind::Institution,
                other => panic!("bad label {other}"),
            };
            assert_eq!(clf.classify(name), expected, "{name}");
            n += 1;
        }
        assert_eq!(n, 50);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn location_normalization_is_idempotent(
                city in "[A-Za-z |;]{0,12}", state in "[A-Za-z ]{0,4}", country in "[A-Za-z ]{0,4}"
            ) {
                let once = harmonize_location(&city, &state, &country);
                prop_assert_eq!(LocationKey::parse(once.as_str()), once.clone());
            }

            #[test]
            fn serialize_load_is_stable(
                rows in proptest::collection::vec(
                    ("[A-Z][A-Z ,.&]{0,20}[A-Z]", 0u64..10_000, proptest::collection::vec("[a-z]{1,6}\\|[a-z]{0,2}\\|[a-z]{2}", 0..3)),
                    0..8)
            ) {
                let mut table = String::from(ASSIGNEE_HEADER);
                table.push('\n');
                for (i, (name, count, locs)) in rows.iter().enumerate() {
                    table.push_str(&format!("r{i}\t{name}\t{count}\t{}\n", locs.join(";")));
                }
                let path = Path::new("mem.tsv");
                let first = parse_assignee_table(&TsvTable::parse(path, &table).unwrap()).unwrap();
                let written = write_assignee_table(&first);
                let second = parse_assignee_table(&TsvTable::parse(path, &written).unwrap()).unwrap();
                prop_assert_eq!(&first, &second);
                prop_assert_eq!(write_assignee_table(&second), written);
            }

            #[test]
            fn classifier_is_total_and_deterministic(name in "\\PC{1,30}") {
                prop_assert_eq!(classify_name_kind(&name), classify_name_kind(&name));
            }
        }
    }
}
