use std::fs;
use std::path::Path;

use qtmine_core::analogy::{AnalogyReport, KshotComparison};
use qtmine_core::fcrank::FcReport;
use qtmine_core::qt::RankedList;
use qtmine_core::train::LossRow;

use crate::error::{io_err, Result};
use crate::io::save_json;

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn to_csv<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// `step,loss,eval_loss`, empty cells where a value was not measured.
pub fn loss_csv(curve: &[LossRow]) -> String {
    to_csv(
        ["step", "loss", "eval_loss"],
        curve.iter().map(|r| [r.step.to_string(), opt(r.loss), opt(r.eval_loss)]),
    )
}

pub fn ranked_csv(list: &RankedList) -> String {
    to_csv(
        ["rank", "candidate", "score"],
        list.entries.iter().map(|e| [e.rank.to_string(), e.candidate.clone(), e.score.aggregate.to_string()]),
    )
}

/// Ranked list with per-position scores.
pub fn ranked_json(list: &RankedList) -> String {
    serde_json::to_string_pretty(list).expect("ranked list serializes") + "\n"
}

/// `category,subcategory,n,top1,top5`, categories first, then one row per
/// subcategory with category `*`.
pub fn analogy_csv(report: &AnalogyReport) -> String {
    let cats = report.categories.iter().map(|c| {
        [c.category.clone(), c.subcategory.as_str().into(), c.n.to_string(), c.top1.to_string(), c.top5.to_string()]
    });
    let subs = report.subcategories.iter().map(|s| {
        ["*".to_string(), s.subcategory.as_str().into(), s.n.to_string(), s.top1.to_string(), s.top5.to_string()]
    });
    to_csv(["category", "subcategory", "n", "top1", "top5"], cats.chain(subs))
}

pub fn kshot_csv(cmp: &KshotComparison) -> String {
    let rows = cmp.categories.iter().chain(&cmp.subcategories).map(|d| {
        [
            d.name.clone(),
            d.top1_before.to_string(),
            d.top1_after.to_string(),
            d.top1_delta().to_string(),
            d.top5_before.to_string(),
            d.top5_after.to_string(),
            d.top5_delta().to_string(),
        ]
    });
    to_csv(["name", "top1_before", "top1_after", "top1_delta", "top5_before", "top5_after", "top5_delta"], rows)
}

/// `year,candidate,score,approved_later` over every run.
pub fn fc_plot_csv(report: &FcReport) -> String {
    let rows = report.runs.iter().flat_map(|run| {
        let relevant = run.relevant();
        run.ranked.entries.iter().map(move |e| {
            [
                run.cutoff_year.to_string(),
                e.candidate.clone(),
                e.score.aggregate.to_string(),
                relevant.contains(e.candidate.as_str()).to_string(),
            ]
        })
    });
    to_csv(["year", "candidate", "score", "approved_later"], rows)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes `rank_<year>.csv` per cutoff, `fc_metrics.json` and `fc_plot.csv`.
pub fn write_fc_dir(dir: &Path, report: &FcReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for run in &report.runs {
        write_file(&dir.join(format!("rank_{}.csv", run.cutoff_year)), &ranked_csv(&run.ranked))?;
    }
    save_json(&dir.join("fc_metrics.json"), &report.metrics)?;
    write_file(&dir.join("fc_plot.csv"), &fc_plot_csv(report))
}
