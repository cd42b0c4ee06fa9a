use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::warn;
use qtmine_core::corpus::{AliasMap, AnalogyItem, ApprovalRecord, Document, DocumentSet, Subcategory, TrialRecord};
use serde_json::Value;

use crate::error::{io_err, Error, Result};

const REQUIRED_FIELDS: [&str; 5] = ["id", "title", "abstract", "body", "publish_year"];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusLoad {
    pub docs: DocumentSet,
    pub malformed: usize,
}

fn parse_document(line: &str) -> std::result::Result<Document, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = v.as_object().ok_or("not a JSON object")?;
    if let Some(f) = REQUIRED_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(format!("missing field `{f}`"));
    }
    serde_json::from_value(v).map_err(|e| e.to_string())
}

/// Reads a JSON-lines corpus. Blank lines are ignored; lines that fail to
/// parse or lack a required field are skipped and counted.
pub fn load_corpus(path: &Path) -> Result<CorpusLoad> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut documents = Vec::new();
    let mut malformed = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_document(line) {
            Ok(d) => documents.push(d),
            Err(e) => {
                warn!("event=malformed_document path={} line={} error={:?}", path.display(), i + 1, e);
                malformed += 1;
            }
        }
    }
    if malformed > 0 {
        warn!("event=corpus_malformed path={} count={}", path.display(), malformed);
    }
    Ok(CorpusLoad { docs: DocumentSet::new(documents), malformed })
}

pub fn write_corpus(path: &Path, docs: &DocumentSet) -> Result<()> {
    let mut out = String::new();
    for d in &docs.documents {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(file))
}

fn columns(path: &Path, rdr: &mut csv::Reader<fs::File>, names: &[&str]) -> Result<Vec<usize>> {
    let headers = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    names
        .iter()
        .map(|n| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| Error::MissingColumn { path: path.to_path_buf(), column: n.to_string() })
        })
        .collect()
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

/// Reads `trade_name,scientific_name` pairs. Cyclic or conflicting rows
/// are skipped with a warning.
pub fn load_aliases(path: &Path) -> Result<AliasMap> {
    let mut rdr = csv_reader(path)?;
    let cols = columns(path, &mut rdr, &["trade_name", "scientific_name"])?;
    let mut map = AliasMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (trade, sci) = (rec.get(cols[0]).unwrap_or(""), rec.get(cols[1]).unwrap_or(""));
        if !map.insert(trade, sci) {
            warn!("event=alias_rejected path={} line={} trade={:?} scientific={:?}", path.display(), line_of(&rec), trade, sci);
        }
    }
    Ok(map)
}

/// Reads `trial_id,year,drugs,condition`. Rows with an unparseable year or
/// no drug names are skipped with a warning.
pub fn load_trials(path: &Path, aliases: &AliasMap) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv_reader(path)?;
    let cols = columns(path, &mut rdr, &["trial_id", "year", "drugs", "condition"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(cols[i]).unwrap_or("");
        let Ok(year) = get(1).parse::<i32>() else {
            warn!("event=trial_skipped path={} line={} reason=bad_year value={:?}", path.display(), line_of(&rec), get(1));
            continue;
        };
        match TrialRecord::from_raw(get(0), year, get(2), get(3), aliases) {
            Some(t) => out.push(t),
            None => warn!("event=trial_skipped path={} line={} reason=no_drugs", path.display(), line_of(&rec)),
        }
    }
    Ok(out)
}

/// Reads `drug,approval_year`, canonicalizing names through `aliases`.
pub fn load_approvals(path: &Path, aliases: &AliasMap) -> Result<Vec<ApprovalRecord>> {
    let mut rdr = csv_reader(path)?;
    let cols = columns(path, &mut rdr, &["drug", "approval_year"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let drug = aliases.canonical(rec.get(cols[0]).unwrap_or(""));
        let year = rec.get(cols[1]).unwrap_or("");
        match year.parse::<i32>() {
            Ok(approval_year) if !drug.is_empty() => out.push(ApprovalRecord { drug, approval_year }),
            _ => warn!("event=approval_skipped path={} line={} value={:?}", path.display(), line_of(&rec), year),
        }
    }
    Ok(out)
}

/// Reads a six-column TSV. A first line equal to the column names is
/// treated as a header. Item ids are assigned in file order.
pub fn load_analogies(path: &Path) -> Result<Vec<AnalogyItem>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 6 {
            return Err(Error::ColumnCount { path: path.to_path_buf(), line: i + 1, expected: 6, found: f.len() });
        }
        if i == 0 && f[0] == "category" && f[1] == "subcategory" {
            continue;
        }
        let subcategory = Subcategory::parse(f[1]).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("unknown subcategory {:?}", f[1]),
        })?;
        if f.iter().any(|s| s.is_empty()) {
            return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, message: "empty field".into() });
        }
        items.push(AnalogyItem {
            id: items.len(),
            category: f[0].to_string(),
            subcategory,
            a: f[2].to_string(),
            b: f[3].to_string(),
            c: f[4].to_string(),
            d: f[5].to_string(),
        });
    }
    Ok(items)
}
