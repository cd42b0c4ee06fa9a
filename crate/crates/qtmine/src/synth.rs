//! Templated synthetic literature for smoke runs and end-to-end checks.
//!
//! Each drug has one inhibited target and one drug class, stated in
//! several phrasings. A few drugs are reported with efficacy in trials,
//! the rest with other outcomes; one drug is paired with nausea, and one
//! pair of drugs is reported together. Some drug names are reserved and
//! never written into the corpus.

use qtmine_core::corpus::{AnalogyItem, Document, DocumentSet, Subcategory};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use qtmine_core::rng;

pub const TARGETS: [&str; 8] =
    ["protease", "polymerase", "helicase", "integrase", "neuraminidase", "kinase", "reductase", "synthase"];
/// Drug class, keyed by the name suffix at the same index.
pub const CLASSES: [&str; 4] = ["nucleoside", "antibody", "statin", "azole"];
const SUFFIXES: [&str; 4] = ["vir", "mab", "stat", "zole"];
const PREFIXES: [&str; 10] = ["aba", "zano", "oli", "feni", "tera", "moro", "veli", "dari", "cori", "lino"];
pub const EFFICACY_PHRASE: &str = "clinical trials efficacy";
const OUTCOMES_OTHER: [&str; 3] = ["clinical trials toxicity", "clinical trials futility", "clinical trials failure"];
const EFFECTS_OTHER: [&str; 3] = ["mild headache", "no complaints", "brief fatigue"];
const FILLER: [&str; 6] = [
    "The study enrolled adult patients.",
    "Further work is needed.",
    "Samples were collected weekly.",
    "The cohort was followed for one year.",
    "Dosing was adjusted by weight.",
    "Results were reviewed by an independent board.",
];

/// Drugs written into the corpus.
pub const N_DRUGS: usize = 16;

#[derive(Debug, Clone)]
pub struct SynthDrug {
    pub name: String,
    pub target: &'static str,
    pub class: &'static str,
    pub efficacious: bool,
    /// Trial outcome phrase, fixed per drug.
    pub outcome: &'static str,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub docs: DocumentSet,
    pub drugs: Vec<SynthDrug>,
    /// Names never written into the corpus.
    pub unseen: Vec<String>,
    /// Drug always reported with `"severe nausea"`.
    pub nausea_drug: String,
    /// Pair reported together with efficacy.
    pub combo: (String, String),
    pub analogies: Vec<AnalogyItem>,
}

impl SynthCorpus {
    pub fn drug(&self, name: &str) -> Option<&SynthDrug> {
        self.drugs.iter().find(|d| d.name == name)
    }

    /// `(prompt, answer)` pairs like `("We found that abavir inhibits <mask> in vitro.", "protease")`.
    pub fn cloze_facts(&self) -> Vec<(String, String)> {
        self.drugs
            .iter()
            .map(|d| (format!("We found that {} inhibits <mask> in vitro.", d.name), d.target.to_string()))
            .collect()
    }

    pub fn efficacious(&self) -> Vec<&SynthDrug> {
        self.drugs.iter().filter(|d| d.efficacious).collect()
    }
}

/// `(name, class index)` for every prefix/suffix combination.
fn drug_names() -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for (c, s) in SUFFIXES.iter().enumerate() {
        for p in PREFIXES {
            out.push((format!("{p}{s}"), c));
        }
    }
    out
}

fn analogy_partner(i: usize, n: usize) -> usize {
    (i + 7) % n
}

/// Builds roughly `target_bytes` of text. Drug facts, outcome groups and
/// dates are fixed by `seed`.
pub fn generate(seed: u64, target_bytes: usize) -> SynthCorpus {
    let mut r = rng::stream(seed, "synth");
    let mut names = drug_names();
    names.shuffle(&mut r);
    // Balanced classes: the first N_DRUGS / 4 names of each suffix are
    // written, the next one of each is held back as never mentioned.
    let per_class = N_DRUGS / SUFFIXES.len();
    let mut seen = [0usize; 4];
    let mut kept = Vec::new();
    let mut unseen = Vec::new();
    for (name, c) in names {
        seen[c] += 1;
        if seen[c] <= per_class {
            kept.push((name, c));
        } else if seen[c] == per_class + 1 {
            unseen.push(name);
        }
    }
    kept.sort_by_key(|(_, c)| *c);
    let n = kept.len();
    let drugs: Vec<SynthDrug> = kept
        .into_iter()
        .enumerate()
        .map(|(i, (name, c))| SynthDrug {
            name,
            target: TARGETS[(i * 5 + i / TARGETS.len()) % TARGETS.len()],
            class: CLASSES[c],
            efficacious: i % 4 == 0,
            outcome: if i % 4 == 0 { EFFICACY_PHRASE } else { OUTCOMES_OTHER[i % 3] },
        })
        .collect();
    let nausea_drug = drugs[1].name.clone();
    let combo = (drugs[2].name.clone(), drugs[3].name.clone());

    let mut documents = Vec::new();
    let mut bytes = 0usize;
    let mut k = 0usize;
    while bytes < target_bytes {
        // Sentences in one document concern different drugs, so a fact
        // cannot be read off a neighbouring sentence.
        let n_sent = r.random_range(1..=3);
        let mut sentences = Vec::with_capacity(n_sent);
        for _ in 0..n_sent {
            let d = &drugs[r.random_range(0..n)];
            let s = match r.random_range(0..16) {
                0..=2 => format!("We found that {} inhibits {} in vitro.", d.name, d.target),
                3 => format!("The compound {} is a {} inhibitor of {} in cells.", d.name, d.class, d.target),
                4 => format!("The {} drug {} binds {} tightly.", d.class, d.name, d.target),
                5..=9 => {
                    format!("In clinical trials, {} demonstrated {} in adults.", d.name, d.outcome)
                }
                10 => {
                    let effect =
                        if d.name == nausea_drug { "severe nausea" } else { EFFECTS_OTHER.choose(&mut r).unwrap() };
                    format!("Patients treated with {} reported {} at follow up.", d.name, effect)
                }
                11..=14 => {
                    // Two drugs compared on one relation; the pairs used by
                    // the analogy items are never written.
                    let i = r.random_range(0..n);
                    let mut j = r.random_range(0..n);
                    while j == i || j == analogy_partner(i, n) || i == analogy_partner(j, n) {
                        j = r.random_range(0..n);
                    }
                    let (a, c) = (&drugs[i], &drugs[j]);
                    match r.random_range(0..5) {
                        0 => format!(
                            "Like {}, which inhibits {}, {} inhibits {} in vitro.",
                            a.name, a.target, c.name, c.target
                        ),
                        1 => format!("Like {}, a {} drug, {} is a {} drug.", a.name, a.class, c.name, c.class),
                        2 | 3 => format!("Here {} is to {} as {} is to {} in vitro.", a.name, a.target, c.name, c.target),
                        _ => format!("Here {} is to {} as {} is to {} by class.", a.name, a.class, c.name, c.class),
                    }
                }
                _ => FILLER.choose(&mut r).unwrap().to_string(),
            };
            sentences.push(s);
        }
        if k.is_multiple_of(10) {
            sentences.push(format!(
                "In clinical trials, {} and {} demonstrated clinical trials efficacy in adults.",
                combo.0, combo.1
            ));
        }
        let body = sentences.join(" ");
        let year = r.random_range(2000..=2019);
        bytes += body.len();
        documents.push(Document {
            id: format!("syn-{k:05}"),
            title: String::new(),
            abstract_text: String::new(),
            body,
            publish_year: Some(year),
            source: "synthetic".into(),
            license: "cc0".into(),
        });
        k += 1;
    }

    let mut analogies = Vec::new();
    let mut id = 0usize;
    for (category, pick) in [
        ("drug -- inhibition", (|d: &SynthDrug| d.target) as fn(&SynthDrug) -> &'static str),
        ("drug -- group", |d: &SynthDrug| d.class),
    ] {
        for i in 0..n {
            let (a, c) = (&drugs[i], &drugs[analogy_partner(i, n)]);
            analogies.push(AnalogyItem {
                id,
                category: category.into(),
                subcategory: Subcategory::Antiviral,
                a: a.name.clone(),
                b: pick(a).into(),
                c: c.name.clone(),
                d: pick(c).into(),
            });
            id += 1;
        }
    }

    SynthCorpus { docs: DocumentSet::new(documents), drugs, unseen, nausea_drug, combo, analogies }
}
