//! Forward-chaining (FC) temporal ranking.
//!
//! For each cutoff year, a tokenizer and model are trained from scratch on
//! documents dated at or before the cutoff, the drugs trialed by then are
//! ranked by QT score, and the ranking is checked against approvals that
//! came after the cutoff.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{candidates_at_year, ApprovalRecord, DocumentSet, TrialRecord};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Params};
use crate::qt::{RankedList, Scorer, TargetSpec};
use crate::rng;
use crate::tokenizer::{train_bpe, Vocab};
use crate::train::{train, TrainConfig};

pub const HIT_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcConfig {
    pub years: Vec<i32>,
    pub template: String,
    pub target: String,
    pub vocab_size: usize,
    /// `vocab_size` here is replaced by the trained vocabulary's size.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Retrain per cutoff (the causal mode). When false a single model
    /// trained on the whole corpus scores every cutoff.
    pub retrain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcRun {
    pub cutoff_year: i32,
    pub candidates: Vec<String>,
    pub ranked: RankedList,
    /// Approvals strictly after the cutoff.
    pub approvals_after: Vec<ApprovalRecord>,
    pub n_documents: usize,
}

impl FcRun {
    /// Candidates that were approved after the cutoff.
    pub fn relevant(&self) -> BTreeSet<&str> {
        let cands: BTreeSet<&str> = self.candidates.iter().map(String::as_str).collect();
        self.approvals_after.iter().map(|a| a.drug.as_str()).filter(|d| cands.contains(d)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcYearMetrics {
    pub year: i32,
    pub n_candidates: usize,
    pub n_relevant: usize,
    /// hits@1, hits@3, hits@5.
    pub hits: [f64; 3],
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcMetrics {
    pub per_year: Vec<FcYearMetrics>,
    /// Means over runs with at least one candidate.
    pub mean_hits: [f64; 3],
    pub mean_mrr: f64,
    pub runs_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcReport {
    pub runs: Vec<FcRun>,
    pub metrics: FcMetrics,
    pub retrain: bool,
}

pub fn run_metrics(run: &FcRun) -> FcYearMetrics {
    let relevant = run.relevant();
    let ranks: Vec<usize> = relevant.iter().filter_map(|d| run.ranked.rank_of(d)).collect();
    let hits = HIT_KS.map(|k| if ranks.iter().any(|&r| r <= k) { 1.0 } else { 0.0 });
    let mrr = if ranks.is_empty() { 0.0 } else { ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64 };
    FcYearMetrics { year: run.cutoff_year, n_candidates: run.candidates.len(), n_relevant: relevant.len(), hits, mrr }
}

pub fn aggregate_metrics(runs: &[FcRun]) -> FcMetrics {
    let per_year: Vec<FcYearMetrics> = runs.iter().map(run_metrics).collect();
    let scored: Vec<&FcYearMetrics> = per_year.iter().filter(|m| m.n_candidates > 0).collect();
    let n = scored.len();
    let mut mean_hits = [0.0; 3];
    let mut mean_mrr = 0.0;
    if n > 0 {
        for m in &scored {
            for (acc, h) in mean_hits.iter_mut().zip(m.hits) {
                *acc += h;
            }
            mean_mrr += m.mrr;
        }
        mean_hits.iter_mut().for_each(|h| *h /= n as f64);
        mean_mrr /= n as f64;
    }
    FcMetrics { per_year, mean_hits, mean_mrr, runs_scored: n }
}

/// A trained tokenizer + model pair.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub vocab: Vocab,
    pub params: Params<f32>,
}

/// Trains a fresh tokenizer and model on `docs` with `seed` driving both
/// initialization and training order.
pub fn train_from_scratch(docs: &DocumentSet, cfg: &FcConfig, seed: u64) -> Result<TrainedModel> {
    let vocab = train_bpe(docs, cfg.vocab_size)?;
    let model = ModelConfig { vocab_size: vocab.len(), ..cfg.model };
    let mut params = Params::init(model, seed)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    train(&mut params, &vocab, docs, &tcfg)?;
    Ok(TrainedModel { vocab, params })
}

/// Ranks the candidates trialed by `year` with an already trained model.
pub fn rank_current(
    params: &Params<f32>,
    vocab: &Vocab,
    trials: &[TrialRecord],
    year: i32,
    template: &str,
    target: &TargetSpec,
) -> Result<RankedList> {
    Scorer::new(params, vocab).rank_by_qt(&candidates_at_year(trials, year), template, target)
}

fn cutoff_seed(seed: u64, year: i32) -> u64 {
    rng::mix(seed ^ rng::mix(year as u64))
}

/// Runs every cutoff in `cfg.years` (must be ascending).
pub fn fc_analysis(
    corpus: &DocumentSet,
    trials: &[TrialRecord],
    approvals: &[ApprovalRecord],
    cfg: &FcConfig,
) -> Result<FcReport> {
    if cfg.years.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("years must be strictly ascending".into()));
    }
    let shared = if cfg.retrain { None } else { Some(train_from_scratch(corpus, cfg, cfg.train.seed)?) };
    let mut runs = Vec::with_capacity(cfg.years.len());
    for &year in &cfg.years {
        let docs = corpus.filter_by_year(year);
        let candidates = candidates_at_year(trials, year);
        let approvals_after: Vec<ApprovalRecord> =
            approvals.iter().filter(|a| a.approval_year > year).cloned().collect();
        let mut run = FcRun {
            cutoff_year: year,
            candidates,
            ranked: RankedList::default(),
            approvals_after,
            n_documents: docs.len(),
        };
        if run.candidates.is_empty() || (cfg.retrain && docs.is_empty()) {
            log::warn!(
                "event=fc_empty_run year={year} candidates={} documents={}",
                run.candidates.len(),
                docs.len()
            );
            run.candidates.clear();
            runs.push(run);
            continue;
        }
        let owned;
        let model = match &shared {
            Some(m) => m,
            None => {
                owned = train_from_scratch(&docs, cfg, cutoff_seed(cfg.train.seed, year))?;
                &owned
            }
        };
        let target = TargetSpec::new(&model.vocab, &cfg.target)?;
        run.ranked = Scorer::new(&model.params, &model.vocab).rank_by_qt(&run.candidates, &cfg.template, &target)?;
        log::info!("event=fc_run year={year} documents={} candidates={}", docs.len(), run.candidates.len());
        runs.push(run);
    }
    let metrics = aggregate_metrics(&runs);
    Ok(FcReport { runs, metrics, retrain: cfg.retrain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qt::QtScore;
    use alloc::string::ToString;
    use alloc::vec;

    fn ranked(names: &[&str]) -> RankedList {
        RankedList::from_scores(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    let s = 1.0 - i as f64 * 0.1;
                    (n.to_string(), QtScore { per_position: vec![s], aggregate: s })
                })
                .collect(),
        )
    }

    fn run(names: &[&str], approved: &[(&str, i32)]) -> FcRun {
        FcRun {
            cutoff_year: 2005,
            candidates: names.iter().map(|s| s.to_string()).collect(),
            ranked: ranked(names),
            approvals_after: approved
                .iter()
                .map(|&(d, y)| ApprovalRecord { drug: d.into(), approval_year: y })
                .collect(),
            n_documents: 1,
        }
    }

    #[test]
    fn single_approved_candidate() {
        let m = run_metrics(&run(&["a"], &[("a", 2007)]));
        assert_eq!(m.hits, [1.0, 1.0, 1.0]);
        assert_eq!(m.mrr, 1.0);
    }

    #[test]
    fn no_approvals_gives_zero() {
        let agg = aggregate_metrics(&[run(&["a", "b"], &[]), run(&["c"], &[])]);
        assert_eq!(agg.mean_hits, [0.0; 3]);
        assert_eq!(agg.mean_mrr, 0.0);
        assert_eq!(agg.per_year.len(), 2);
    }

    #[test]
    fn hits_monotone_and_untrialed_approvals_ignored() {
        let r = run(&["a", "b", "c", "d", "e"], &[("c", 2008), ("zz", 2009)]);
        let m = run_metrics(&r);
        assert_eq!(m.n_relevant, 1);
        assert_eq!(m.hits, [0.0, 1.0, 1.0]);
        assert!((m.mrr - 1.0 / 3.0).abs() < 1e-15);
        let empty = FcRun { candidates: vec![], ranked: RankedList::default(), ..r.clone() };
        let agg = aggregate_metrics(&[r, empty]);
        assert_eq!(agg.runs_scored, 1);
    }
}
