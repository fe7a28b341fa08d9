//! Writes the seeded 300-name desk corpus used by the acceptance and CLI tests.
//!
//! `cargo run -p assignee-core --example gen_desk_corpus -- [out_dir] [seed]`
//!
//! Planted entities carry several variants each (legal-form changes, regional
//! subsidiaries, misspellings repaired by a cached spelling suggestion, short
//! forms). Singletons fill the rest, including near-miss distractors that share
//! a leading word with a planted entity but nothing else. A fraction of search
//! results point at a few generic profile sites so the frequent-domain
//! blocklist has something to remove.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use assignee_core::augment::AugmentationResult;
use assignee_core::ingest::{harmonize_location, write_assignee_table, GOLD_HEADER};
use assignee_core::AssigneeRecord;
use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N_RECORDS: usize = 300;
const N_ENTITIES: usize = 60;
const N_INDIVIDUALS: usize = 8;
const N_DISTRACTORS: usize = 6;

const SECTORS: &[&str] = &[
    "Technologies", "Systems", "Electric", "Medical", "Motors", "Chemical",
    "Instruments", "Networks", "Energy", "Materials", "Robotics", "Optics",
];
const DISTRACTOR_SECTORS: &[&str] = &["Foods", "Textiles", "Logistics", "Pharma"];
const SUFFIXES: &[&str] = &[
    "Inc", "Inc.", "Corporation", "Corp.", "Ltd", "Limited", "GmbH", "AG", "LLC", "Co., Ltd.", "PLC",
];
const REGIONS: &[(&str, &str)] = &[
    ("Europe", "B.V."),
    ("America", "Inc."),
    ("Japan", "K.K."),
    ("Asia", "Pte Ltd"),
    ("Deutschland", "GmbH"),
    ("UK", "Ltd"),
];
const CITIES: &[(&str, &str)] = &[
    ("Boston", "US"), ("Munich", "DE"), ("Osaka", "JP"), ("Lyon", "FR"), ("Espoo", "FI"),
    ("Eindhoven", "NL"), ("Basel", "CH"), ("Austin", "US"), ("Seoul", "KR"), ("Turin", "IT"),
];
const GENERIC: &[(&str, &str)] = &[
    ("https://www.linkedin.com/company/", "LinkedIn company profile"),
    ("https://en.wikipedia.org/wiki/", "Wikipedia article"),
    ("https://www.bloomberg.com/profile/company/", "Bloomberg company profile"),
];
const SURNAMES: &[&str] = &[
    "Smith", "Tanaka", "Muller", "Rossi", "Dubois", "Kowalski", "Larsen", "Nakamura", "Garcia", "Novak",
];
const FORENAMES: &[&str] = &["John", "Akira", "Anna", "Marco", "Claire", "Piotr", "Ingrid", "Lucia"];

struct Planted {
    word: String,
    sector: &'static str,
    domain: String,
    city: usize,
}

struct Row {
    raw: String,
    entity: String,
    patent_count: u64,
    location: Option<usize>,
    result: AugmentationResult,
}

fn pseudo_word(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>) -> String {
    const ONSET: &[&str] = &["k", "z", "v", "tr", "br", "m", "l", "s", "d", "qu", "fl", "gr", "n", "p"];
    const VOWEL: &[&str] = &["a", "e", "i", "o", "u", "y"];
    const CODA: &[&str] = &["x", "n", "r", "s", "l", "tek", "ra", "va", "on", "ix"];
    loop {
        let mut w = String::new();
        for _ in 0..rng.gen_range(2..=3) {
            w.push_str(ONSET.choose(rng).unwrap());
            w.push_str(VOWEL.choose(rng).unwrap());
        }
        w.push_str(CODA.choose(rng).unwrap());
        let mut c = w.chars();
        let word: String = c.next().unwrap().to_uppercase().chain(c).collect();
        if used.insert(word.to_lowercase()) {
            return word;
        }
    }
}

/// Swaps two adjacent interior letters; the result always differs.
fn misspell(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    loop {
        let i = rng.gen_range(1..chars.len() - 1);
        if chars[i] != chars[i + 1] {
            chars.swap(i, i + 1);
            return chars.into_iter().collect();
        }
    }
}

fn result(query: &str, url: Option<String>, text: Option<String>, corrected: Option<String>) -> AugmentationResult {
    AugmentationResult {
        query_name: query.to_string(),
        corrected_name: corrected,
        first_url: url,
        first_text: text,
        fetched_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        provider_id: "fixture".to_string(),
    }
}

fn own_page(p: &Planted) -> (String, String) {
    (
        format!("https://www.{}/", p.domain),
        format!(
            "{} {} official website. {} designs {} products and services worldwide.",
            p.word,
            p.sector,
            p.word,
            p.sector.to_lowercase()
        ),
    )
}

fn generic_page(p: &Planted, rng: &mut ChaCha8Rng) -> (String, String) {
    let (base, label) = GENERIC.choose(rng).unwrap();
    (
        format!("{base}{}-{}", p.word.to_lowercase(), p.sector.to_lowercase()),
        format!("{} {} | {label}", p.word, p.sector),
    )
}

fn page(p: &Planted, rng: &mut ChaCha8Rng) -> (String, String) {
    if rng.gen_bool(0.2) {
        generic_page(p, rng)
    } else {
        own_page(p)
    }
}

fn variant(p: &Planted, kind: usize, rng: &mut ChaCha8Rng) -> (String, Option<String>) {
    let suffix = SUFFIXES.choose(rng).unwrap();
    match kind {
        // legal-form change, sometimes shouted
        0 => {
            let name = format!("{} {} {suffix}", p.word, p.sector);
            if rng.gen_bool(0.3) { (name.to_uppercase(), None) } else { (name, None) }
        }
        // regional subsidiary
        1 => {
            let (region, local) = REGIONS.choose(rng).unwrap();
            (format!("{} {} {region} {local}", p.word, p.sector), None)
        }
        // misspelling with a search-engine correction
        2 => {
            let wrong = misspell(&p.word, rng);
            (
                format!("{wrong} {} {suffix}", p.sector),
                Some(format!("{} {} {suffix}", p.word, p.sector)),
            )
        }
        // short form
        _ => (format!("{} {suffix}", p.word), None),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "crates/core/tests/fixtures/desk".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = BTreeSet::new();
    let mut names = BTreeSet::new();
    let mut rows: Vec<Row> = Vec::new();

    let planted: Vec<Planted> = (0..N_ENTITIES)
        .map(|_| {
            let word = pseudo_word(&mut rng, &mut used);
            let sector = *SECTORS.choose(&mut rng).unwrap();
            let domain = format!("{}.com", word.to_lowercase());
            Planted { word, sector, domain, city: rng.gen_range(0..CITIES.len()) }
        })
        .collect();

    for (e, p) in planted.iter().enumerate() {
        let n_variants = rng.gen_range(2..=5);
        let mut kinds: Vec<usize> = vec![0];
        while kinds.len() < n_variants {
            kinds.push(*[0, 0, 1, 1, 2, 3].choose(&mut rng).unwrap());
        }
        for kind in kinds {
            let (raw, corrected) = loop {
                let v = variant(p, kind, &mut rng);
                if names.insert(v.0.clone()) {
                    break v;
                }
            };
            let (url, text) = page(p, &mut rng);
            rows.push(Row {
                raw: raw.clone(),
                entity: format!("E{e:03}"),
                patent_count: rng.gen_range(1..=300),
                location: rng.gen_bool(0.6).then_some(p.city),
                result: result(&raw, Some(url), Some(text), corrected),
            });
        }
    }

    let mut singleton = 0;
    let mut push_single = |rows: &mut Vec<Row>, raw: String, result: AugmentationResult, rng: &mut ChaCha8Rng| {
        rows.push(Row {
            raw,
            entity: format!("S{singleton:03}"),
            patent_count: rng.gen_range(1..=40),
            location: rng.gen_bool(0.4).then(|| rng.gen_range(0..CITIES.len())),
            result,
        });
        singleton += 1;
    };

    // near misses: same leading word as a planted entity, different business
    for p in planted.choose_multiple(&mut rng, N_DISTRACTORS).collect::<Vec<_>>() {
        let sector = *DISTRACTOR_SECTORS.choose(&mut rng).unwrap();
        let raw = format!("{} {sector} {}", p.word, SUFFIXES.choose(&mut rng).unwrap());
        names.insert(raw.clone());
        let domain = format!("{}{}.net", p.word.to_lowercase(), sector.to_lowercase());
        let text = format!("{} {sector}: regional {} supplier.", p.word, sector.to_lowercase());
        let r = result(&raw, Some(format!("https://{domain}/")), Some(text), None);
        push_single(&mut rows, raw, r, &mut rng);
    }

    let mut people = BTreeSet::new();
    while people.len() < N_INDIVIDUALS {
        let raw = format!("{}, {}", SURNAMES.choose(&mut rng).unwrap(), FORENAMES.choose(&mut rng).unwrap());
        if people.insert(raw.clone()) {
            names.insert(raw.clone());
            let r = result(&raw, None, None, None);
            push_single(&mut rows, raw, r, &mut rng);
        }
    }

    while rows.len() < N_RECORDS {
        let p = Planted {
            word: pseudo_word(&mut rng, &mut used),
            sector: SECTORS.choose(&mut rng).unwrap(),
            domain: String::new(),
            city: 0,
        };
        let raw = format!("{} {} {}", p.word, p.sector, SUFFIXES.choose(&mut rng).unwrap());
        if !names.insert(raw.clone()) {
            continue;
        }
        let roll: f64 = rng.gen();
        let r = if roll < 0.05 {
            result(&raw, None, None, None)
        } else if roll < 0.25 {
            let (url, text) = generic_page(&p, &mut rng);
            result(&raw, Some(url), Some(text), None)
        } else {
            let p = Planted { domain: format!("{}.com", p.word.to_lowercase()), ..p };
            let (url, text) = own_page(&p);
            result(&raw, Some(url), Some(text), None)
        };
        push_single(&mut rows, raw, r, &mut rng);
    }
    assert_eq!(rows.len(), N_RECORDS, "planted variants overflowed the corpus size");

    rows.shuffle(&mut rng);
    let mut records = Vec::new();
    let mut gold = format!("{GOLD_HEADER}\n");
    let mut cache = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let id = format!("d{:04}", i + 1);
        let mut record = AssigneeRecord::new(id.as_str(), row.raw.as_str(), row.patent_count);
        if let Some(c) = row.location {
            let (city, country) = CITIES[c];
            record = record.with_location(harmonize_location(city, "", country));
        }
        records.push(record);
        gold.push_str(&format!("{id}\t{}\n", row.entity));
        cache.insert(row.raw.clone(), serde_json::to_string(&row.result)?);
    }
    let cache: String = cache.into_values().map(|l| l + "\n").collect();

    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("assignees.tsv"), write_assignee_table(&records))?;
    std::fs::write(out.join("gold.tsv"), gold)?;
    std::fs::write(out.join("cache.jsonl"), cache)?;
    std::fs::write(
        out.join("desk.toml"),
        "# Desk-scale settings: matching and filtering parameters stay at their\n\
         # defaults; only the corpus-size dependent list lengths are scaled down.\n\n\
         [io]\ninput = \"assignees.tsv\"\ncache = \"cache.jsonl\"\ngold = \"gold.tsv\"\noutput_dir = \"out\"\n\n\
         [parse]\ncommon_words_n = 15\n\n\
         [augment]\nblocklist_k = 3\noffline = true\n",
    )?;
    println!("wrote {} records ({N_ENTITIES} planted entities) to {}", records.len(), out.display());
    Ok(())
}
