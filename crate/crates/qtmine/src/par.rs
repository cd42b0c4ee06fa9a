//! Parallel front ends over the sequential scoring in `qtmine_core`.

use qtmine_core::qt::{QtScore, RankedList, Scorer, TargetSpec};
use qtmine_core::Result;
use rayon::prelude::*;

/// Same result as [`Scorer::rank_by_qt`], with candidates scored on the
/// rayon pool.
pub fn rank_by_qt(scorer: &Scorer<'_, f32>, candidates: &[String], template: &str, target: &TargetSpec) -> Result<RankedList> {
    if candidates.is_empty() {
        return scorer.rank_by_qt(candidates, template, target);
    }
    let mut unique: Vec<&String> = candidates.iter().collect();
    unique.sort();
    unique.dedup();
    // Validates the template exactly as the sequential path does.
    scorer.rank_by_qt(&[unique[0].clone()], template, target)?;
    let scored: Vec<(String, QtScore)> = unique
        .par_iter()
        .map(|c| {
            let text = template.replace(qtmine_core::qt::DRUG_SLOT, c);
            scorer.qt_score_text(&text, target).map(|s| ((*c).clone(), s))
        })
        .collect::<Result<_>>()?;
    Ok(RankedList::from_scores(scored))
}

/// Builds the global pool from `QTMINE_THREADS`, defaulting to the number
/// of available cores.
pub fn init_pool() -> Result<usize, String> {
    let threads = match std::env::var("QTMINE_THREADS") {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or(format!("QTMINE_THREADS must be a positive integer, got {v:?}"))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(rayon::current_num_threads())
}
