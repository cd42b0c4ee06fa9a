//! In-memory corpus, clinical-trial and analogy records.
//!
//! Parsing from disk happens in the companion crate; everything here works
//! on already-loaded values.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng;

pub const MIN_YEAR: i32 = 1900;
pub const MAX_YEAR: i32 = 2100;
pub const DEFAULT_TEST_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub body: String,
    /// `None` for undated records: kept for full-corpus training, excluded
    /// from year-limited views.
    pub publish_year: Option<i32>,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub license: String,
}

impl Document {
    /// Title, abstract and body joined by newlines, skipping empty parts.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for part in [&self.title, &self.abstract_text, &self.body] {
            if part.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(part);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentSet {
    pub documents: Vec<Document>,
    pub test_fraction: f64,
}

impl DocumentSet {
    pub fn new(documents: Vec<Document>) -> Self {
        DocumentSet { documents, test_fraction: DEFAULT_TEST_FRACTION }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Documents with `publish_year <= cutoff`, original order kept.
    /// Undated documents never pass.
    pub fn filter_by_year(&self, cutoff: i32) -> DocumentSet {
        DocumentSet {
            documents: self
                .documents
                .iter()
                .filter(|d| d.publish_year.is_some_and(|y| y <= cutoff))
                .cloned()
                .collect(),
            test_fraction: self.test_fraction,
        }
    }

    /// Train/test split by hashing `(seed, id)`; stable under reordering.
    pub fn split(&self, seed: u64) -> (DocumentSet, DocumentSet) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for d in &self.documents {
            if in_test_split(&d.id, seed, self.test_fraction) {
                test.push(d.clone());
            } else {
                train.push(d.clone());
            }
        }
        (
            DocumentSet { documents: train, test_fraction: self.test_fraction },
            DocumentSet { documents: test, test_fraction: self.test_fraction },
        )
    }
}

pub fn in_test_split(id: &str, seed: u64, test_fraction: f64) -> bool {
    let h = rng::mix(rng::fnv1a(id.as_bytes()) ^ rng::mix(seed));
    // top 53 bits → uniform in [0, 1)
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    u < test_fraction
}

/// Trade name → scientific name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasMap {
    pairs: BTreeMap<String, String>,
}

impl AliasMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair after canonical case-folding. Chains are resolved so that
    /// every value is a fixed point; a pair that would close a cycle is
    /// rejected and `false` returned.
    pub fn insert(&mut self, trade: &str, scientific: &str) -> bool {
        let trade = fold(trade);
        let scientific = fold(scientific);
        let target = self.resolve(&scientific);
        if trade == target {
            return trade == scientific;
        }
        if trade.is_empty() || target.is_empty() {
            return false;
        }
        for v in self.pairs.values_mut() {
            if *v == trade {
                *v = target.clone();
            }
        }
        self.pairs.insert(trade, target);
        true
    }

    fn resolve(&self, name: &str) -> String {
        match self.pairs.get(name) {
            Some(s) => s.clone(),
            None => name.to_string(),
        }
    }

    /// Lower-case, trim, alias lookup.
    pub fn canonical(&self, name: &str) -> String {
        self.resolve(&fold(name))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub year: i32,
    pub drugs: Vec<String>,
    pub condition: String,
}

impl TrialRecord {
    /// Canonicalizes a raw `;`-separated drug cell. Returns `None` when no
    /// drug names remain.
    pub fn from_raw(
        trial_id: &str,
        year: i32,
        drugs_cell: &str,
        condition: &str,
        aliases: &AliasMap,
    ) -> Option<TrialRecord> {
        let mut drugs: Vec<String> = Vec::new();
        for raw in drugs_cell.split(';') {
            let name = aliases.canonical(raw);
            if !name.is_empty() && !drugs.contains(&name) {
                drugs.push(name);
            }
        }
        if drugs.is_empty() {
            return None;
        }
        Some(TrialRecord {
            trial_id: trial_id.trim().to_string(),
            year,
            drugs,
            condition: condition.trim().to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalRecord {
    pub drug: String,
    pub approval_year: i32,
}

/// Unique canonical drugs over trials dated `<= year`, sorted.
pub fn candidates_at_year(trials: &[TrialRecord], year: i32) -> Vec<String> {
    let set: BTreeSet<&str> = trials
        .iter()
        .filter(|t| t.year <= year)
        .flat_map(|t| t.drugs.iter().map(String::as_str))
        .collect();
    set.into_iter().map(String::from).collect()
}

/// Number of trial records dated `<= year`.
pub fn records_at_year(trials: &[TrialRecord], year: i32) -> usize {
    trials.iter().filter(|t| t.year <= year).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcategory {
    Antiviral,
    Grammar,
}

impl Subcategory {
    pub fn parse(s: &str) -> Option<Subcategory> {
        match s.trim().to_ascii_lowercase().as_str() {
            "antiviral" => Some(Subcategory::Antiviral),
            "grammar" => Some(Subcategory::Grammar),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Subcategory::Antiviral => "antiviral",
            Subcategory::Grammar => "grammar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyItem {
    /// Position in the source file; used to record k-shot exclusions.
    pub id: usize,
    pub category: String,
    pub subcategory: Subcategory,
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalogyGroup {
    pub category: String,
    pub subcategory: Subcategory,
    pub items: Vec<AnalogyItem>,
}

/// Groups by `(category, subcategory)` in first-appearance order.
pub fn group_analogies(items: &[AnalogyItem]) -> Vec<AnalogyGroup> {
    let mut groups: Vec<AnalogyGroup> = Vec::new();
    for item in items {
        match groups
            .iter_mut()
            .find(|g| g.category == item.category && g.subcategory == item.subcategory)
        {
            Some(g) => g.items.push(item.clone()),
            None => groups.push(AnalogyGroup {
                category: item.category.clone(),
                subcategory: item.subcategory,
                items: alloc::vec![item.clone()],
            }),
        }
    }
    groups
}
