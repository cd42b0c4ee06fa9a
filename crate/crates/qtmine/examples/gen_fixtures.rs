//! Regenerates the committed test fixtures:
//! `cargo run -p qtmine --example gen_fixtures -- crates/qtmine/tests/fixtures`

use std::fmt::Write as _;
use std::path::PathBuf;

// (year, cumulative records, cumulative drugs, cumulative additional diseases)
const TRIAL_TABLE: [(i32, usize, usize, usize); 15] = [
    (2005, 17, 16, 4),
    (2006, 41, 39, 8),
    (2007, 74, 69, 18),
    (2008, 112, 107, 30),
    (2009, 157, 152, 45),
    (2010, 199, 194, 66),
    (2011, 244, 237, 85),
    (2012, 275, 268, 102),
    (2013, 313, 306, 114),
    (2014, 348, 341, 128),
    (2015, 382, 375, 142),
    // The printed table lists 371 drugs for 2016, below 2015's 375; a
    // cumulative count cannot shrink, so no new drugs are introduced.
    (2016, 411, 375, 157),
    (2017, 435, 394, 170),
    (2018, 463, 419, 190),
    (2019, 659, 621, 328),
];

const APPROVED: [(&str, &str, i32); 6] = [
    ("oseltamivir", "Tamiflu", 1999),
    ("zanamivir", "Relenza", 1999),
    ("amantadine", "Symmetrel", 1966),
    ("rimantadine", "Flumadine", 1993),
    ("peramivir", "Rapivab", 2014),
    ("baloxavir marboxil", "Xofluza", 2018),
];

const ANALOGY_TABLE: [(&str, &str, usize); 11] = [
    ("drug -- inhibition", "antiviral", 211),
    ("drug -- group", "antiviral", 57),
    ("drug -- abbreviation", "antiviral", 57),
    ("drug -- approved target", "antiviral", 73),
    ("opposites", "grammar", 703),
    ("comparatives", "grammar", 651),
    ("superlatives", "grammar", 651),
    ("present participles", "grammar", 4031),
    ("past tense", "grammar", 4031),
    ("plural", "grammar", 4169),
    ("plural verbs", "grammar", 993),
];

fn drug_name(i: usize) -> String {
    match APPROVED.get(i) {
        Some((sci, _, _)) => sci.to_string(),
        None => format!("candidate-{i:03}"),
    }
}

fn trials_csv() -> String {
    let mut out = String::from("trial_id,year,drugs,condition\n");
    let (mut recs, mut drugs, mut diseases) = (0usize, 0usize, 0usize);
    let mut id = 0usize;
    for (year, cum_rec, cum_drugs, cum_dis) in TRIAL_TABLE {
        let n_rec = cum_rec - recs;
        let new_drugs: Vec<usize> = (drugs..cum_drugs).collect();
        let new_dis: Vec<usize> = (diseases..cum_dis).collect();
        for r in 0..n_rec {
            // New drugs are spread round-robin; records without one reuse
            // an earlier drug.
            let mut names: Vec<String> = new_drugs.iter().skip(r).step_by(n_rec).map(|&d| drug_name(d)).collect();
            if names.is_empty() {
                names.push(drug_name((id * 7) % drugs.max(1)));
            }
            // Some records name an approved drug by trade name as well,
            // which the alias map folds into one entry.
            for (k, (sci, trade, _)) in APPROVED.iter().enumerate() {
                if names[0] == *sci && id % 2 == k % 2 {
                    names.push(trade.to_string());
                }
            }
            if id.is_multiple_of(5) && names.len() == 1 {
                names.push(names[0].to_uppercase());
            }
            let condition = match new_dis.iter().skip(r).step_by(n_rec).next() {
                Some(d) => format!("disease-{d:03}"),
                None => "influenza".to_string(),
            };
            id += 1;
            writeln!(out, "NCT{:08},{year},\"{}\",{condition}", id, names.join(";")).unwrap();
        }
        recs = cum_rec;
        drugs = cum_drugs;
        diseases = cum_dis;
    }
    out.push_str("NCT99999998,unknown,oseltamivir,influenza\n");
    out.push_str("NCT99999999,2010,,influenza\n");
    out
}

fn aliases_csv() -> String {
    let mut out = String::from("trade_name,scientific_name\n");
    for (sci, trade, _) in APPROVED {
        writeln!(out, "{trade},{sci}").unwrap();
    }
    out
}

fn approvals_csv() -> String {
    let mut out = String::from("drug,approval_year\n");
    for (sci, _, year) in APPROVED {
        writeln!(out, "{sci},{year}").unwrap();
    }
    out
}

fn analogies_tsv() -> String {
    let mut out = String::from("category\tsubcategory\ta\tb\tc\td\n");
    for (cat, sub, n) in ANALOGY_TABLE {
        let stem: String = cat.split_whitespace().filter(|w| *w != "--").map(|w| &w[..3]).collect();
        for i in 0..n {
            let j = (i * 31 + 7) % n;
            writeln!(out, "{cat}\t{sub}\t{stem}a{i}\t{stem}b{i}\t{stem}a{j}\t{stem}b{j}").unwrap();
        }
    }
    out
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).expect("output directory"));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("trials.csv"), trials_csv()).unwrap();
    std::fs::write(dir.join("aliases.csv"), aliases_csv()).unwrap();
    std::fs::write(dir.join("approvals.csv"), approvals_csv()).unwrap();
    std::fs::write(dir.join("analogies.tsv"), analogies_tsv()).unwrap();
}
