//! Query-target (QT) scoring.
//!
//! A query is a text with one or more `<mask>` slots. For each slot the
//! encoder's MLM head gives a distribution `P_k` over the vocabulary; the
//! QT score of slot `k` against a target token set `y` is the probability
//! mass `Σ_{v∈y} P_k[v]`. With `y = {v}` this is the plain MLM probability
//! of `v`. Slot scores are aggregated by arithmetic mean (geometric mean
//! optional).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::forward::project_rows;
use crate::model::{forward_cached, Params};
use crate::real::Real;
use crate::tokenizer::{TokenSeq, Vocab, MASK_MARKER};

pub const DRUG_SLOT: &str = "{drug}";
pub const DEFAULT_RANK_TEMPLATE: &str = "In clinical trials, {drug} demonstrated <mask> <mask> <mask>.";
pub const DEFAULT_EFFICACY_TARGET: &str = "clinical trials efficacy";
pub const DEFAULT_SIDE_EFFECT_TEMPLATE: &str = "Patients treated with {drug} reported <mask> <mask>.";

/// A rendered query: `<s> … </s>` with the `<mask>` slot positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub text: String,
    pub ids: TokenSeq,
    pub masked: Vec<usize>,
}

impl QuerySpec {
    /// Splits `text` on `<mask>` markers. Whitespace directly before a
    /// marker is dropped, because the predicted token carries its own
    /// leading space.
    pub fn render(vocab: &Vocab, text: &str) -> Result<QuerySpec> {
        let sp = vocab.special();
        let mut ids = alloc::vec![sp.bos];
        let mut masked = Vec::new();
        let mut segments = text.split(MASK_MARKER).peekable();
        while let Some(seg) = segments.next() {
            if segments.peek().is_some() {
                ids.extend(vocab.encode(seg.trim_end()).0);
                masked.push(ids.len());
                ids.push(sp.mask);
            } else {
                ids.extend(vocab.encode(seg).0);
            }
        }
        ids.push(sp.eos);
        if masked.is_empty() {
            return Err(Error::NoMask);
        }
        Ok(QuerySpec { text: text.into(), ids: TokenSeq(ids), masked })
    }

    /// Same token layout with the given ids written into the mask slots.
    pub fn filled(&self, answer: &[u32]) -> Vec<u32> {
        let mut ids = self.ids.0.clone();
        for (&pos, &id) in self.masked.iter().zip(answer) {
            ids[pos] = id;
        }
        ids
    }

    pub fn k(&self) -> usize {
        self.masked.len()
    }
}

/// Encoding of a phrase as it appears mid-sentence: each word with its
/// leading space.
pub fn phrase_ids(vocab: &Vocab, phrase: &str) -> Vec<u32> {
    let mut s = String::with_capacity(phrase.len() + 1);
    for w in phrase.split_whitespace() {
        s.push(' ');
        s.push_str(w);
    }
    vocab.encode(&s).0
}

/// Target token set for QT scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub phrase: String,
    /// Unique, ascending, no specials.
    pub ids: Vec<u32>,
}

impl TargetSpec {
    pub fn new(vocab: &Vocab, phrase: &str) -> Result<TargetSpec> {
        let set: BTreeSet<u32> = phrase_ids(vocab, phrase).into_iter().filter(|&id| !vocab.is_special(id)).collect();
        Self::from_ids(phrase, set)
    }

    pub fn from_ids(phrase: &str, ids: impl IntoIterator<Item = u32>) -> Result<TargetSpec> {
        let ids: Vec<u32> = ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if ids.is_empty() {
            return Err(Error::EmptyTarget);
        }
        Ok(TargetSpec { phrase: phrase.into(), ids })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Arithmetic,
    Geometric,
}

impl Aggregation {
    pub fn apply(&self, xs: &[f64]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        let n = xs.len() as f64;
        match self {
            Aggregation::Arithmetic => xs.iter().sum::<f64>() / n,
            Aggregation::Geometric => {
                if xs.iter().any(|&x| x <= 0.0) {
                    0.0
                } else {
                    Float::exp(xs.iter().map(|&x| Float::ln(x)).sum::<f64>() / n)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QtScore {
    pub per_position: Vec<f64>,
    pub aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub candidate: String,
    pub score: QtScore,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Sorts by aggregate descending, ties by candidate name, and assigns
    /// 1-based ranks.
    pub fn from_scores(mut scored: Vec<(String, QtScore)>) -> RankedList {
        scored.sort_by(|a, b| b.1.aggregate.total_cmp(&a.1.aggregate).then_with(|| a.0.cmp(&b.0)));
        RankedList {
            entries: scored
                .into_iter()
                .enumerate()
                .map(|(i, (candidate, score))| RankedEntry { rank: i + 1, candidate, score })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank_of(&self, candidate: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.candidate == candidate).map(|e| e.rank)
    }
}

/// Probability vectors at each mask slot of `query` (f64, summing to 1).
pub fn mlm_predict<R: Real>(params: &Params<R>, query: &QuerySpec) -> Result<Vec<Vec<f64>>> {
    if query.masked.is_empty() {
        return Err(Error::NoMask);
    }
    let cache = forward_cached(params, &query.ids.0)?;
    let (_, logits) = project_rows(params, &cache.hidden, &query.masked);
    let v = params.config.vocab_size;
    Ok(logits
        .chunks_exact(v)
        .map(|row| {
            let row: Vec<f64> = row.iter().map(|x| x.to_f64_lossy()).collect();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&x| Float::exp(x - max)).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        })
        .collect())
}

/// The `k` most probable regular tokens, descending, ties by ascending id.
pub fn topk_tokens(vocab: &Vocab, probs: &[f64], k: usize) -> Vec<(u32, f64)> {
    topk_excluding(vocab, probs, k, &BTreeSet::new())
}

pub fn topk_excluding(vocab: &Vocab, probs: &[f64], k: usize, exclude: &BTreeSet<u32>) -> Vec<(u32, f64)> {
    let mut cands: Vec<(u32, f64)> = (0..probs.len() as u32)
        .filter(|&id| !vocab.is_special(id) && !exclude.contains(&id))
        .map(|id| (id, probs[id as usize]))
        .collect();
    if k > cands.len() {
        log::warn!("event=topk_clamped requested={} available={}", k, cands.len());
    }
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cands.truncate(k);
    cands
}

/// Target-set mass of one probability vector.
pub fn target_mass(probs: &[f64], target: &TargetSpec) -> f64 {
    target.ids.iter().map(|&id| probs.get(id as usize).copied().unwrap_or(0.0)).sum()
}

/// Per-slot distribution renormalized over the target tokens only:
/// `P_k[v] / Σ_{u∈y} P_k[u]` for each `v ∈ y`.
pub fn target_breakdown(probs: &[Vec<f64>], target: &TargetSpec) -> Vec<Vec<(u32, f64)>> {
    probs
        .iter()
        .map(|p| {
            let mass = target_mass(p, target);
            target
                .ids
                .iter()
                .map(|&id| (id, if mass > 0.0 { p[id as usize] / mass } else { 0.0 }))
                .collect()
        })
        .collect()
}

/// Scoring front end binding a model, its vocabulary and an aggregation.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a, R> {
    pub params: &'a Params<R>,
    pub vocab: &'a Vocab,
    pub aggregation: Aggregation,
}

impl<'a, R: Real> Scorer<'a, R> {
    pub fn new(params: &'a Params<R>, vocab: &'a Vocab) -> Self {
        Scorer { params, vocab, aggregation: Aggregation::Arithmetic }
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn query(&self, text: &str) -> Result<QuerySpec> {
        QuerySpec::render(self.vocab, text)
    }

    pub fn target(&self, phrase: &str) -> Result<TargetSpec> {
        TargetSpec::new(self.vocab, phrase)
    }

    pub fn mlm_predict(&self, query: &QuerySpec) -> Result<Vec<Vec<f64>>> {
        mlm_predict(self.params, query)
    }

    pub fn qt_score(&self, query: &QuerySpec, target: &TargetSpec) -> Result<QtScore> {
        if target.ids.is_empty() {
            return Err(Error::EmptyTarget);
        }
        let probs = self.mlm_predict(query)?;
        let per_position: Vec<f64> = probs.iter().map(|p| target_mass(p, target)).collect();
        let aggregate = self.aggregation.apply(&per_position);
        Ok(QtScore { per_position, aggregate })
    }

    pub fn qt_score_text(&self, text: &str, target: &TargetSpec) -> Result<QtScore> {
        self.qt_score(&self.query(text)?, target)
    }

    /// Substitutes each candidate into `{drug}` and ranks by aggregate.
    /// The result does not depend on the order of `candidates`.
    pub fn rank_by_qt(&self, candidates: &[String], template: &str, target: &TargetSpec) -> Result<RankedList> {
        check_template(template)?;
        let mut scored = Vec::with_capacity(candidates.len());
        let unique: BTreeSet<&String> = candidates.iter().collect();
        for c in unique {
            let s = self.qt_score_text(&template.replace(DRUG_SLOT, c), target)?;
            scored.push((c.clone(), s));
        }
        Ok(RankedList::from_scores(scored))
    }

    /// Top-`k` completions of `"<q> is to <t> as <q> is to <mask>"`,
    /// excluding the tokens of both terms.
    pub fn permuted_analogy(&self, q_term: &str, t_term: &str, k: usize) -> Result<Vec<(u32, f64)>> {
        let text = format!("{q_term} is to {t_term} as {q_term} is to {MASK_MARKER}");
        let query = self.query(&text)?;
        let probs = self.mlm_predict(&query)?;
        let mut exclude: BTreeSet<u32> = BTreeSet::new();
        for term in [q_term, t_term] {
            exclude.extend(phrase_ids(self.vocab, term));
            exclude.extend(self.vocab.encode(term.trim()).0);
        }
        Ok(topk_excluding(self.vocab, &probs[0], k, &exclude))
    }

    /// Scores `"d1 and d2 [and …]"` substituted into `{drug}`.
    pub fn combination_score(&self, drugs: &[String], template: &str, target: &TargetSpec) -> Result<QtScore> {
        if drugs.len() < 2 {
            return Err(Error::TooFewDrugs(drugs.len()));
        }
        check_template(template)?;
        let joined = drugs.join(" and ");
        self.qt_score_text(&template.replace(DRUG_SLOT, &joined), target)
    }

    /// QT score against a negative (side-effect) target. Kept apart from
    /// efficacy scores; callers never merge the two.
    pub fn side_effect_score(&self, drug: &str, template: &str, negative: &TargetSpec) -> Result<QtScore> {
        check_template(template)?;
        self.qt_score_text(&template.replace(DRUG_SLOT, drug), negative)
    }
}

fn check_template(template: &str) -> Result<()> {
    if !template.contains(DRUG_SLOT) {
        return Err(Error::NoDrugSlot);
    }
    if !template.contains(MASK_MARKER) {
        return Err(Error::NoMask);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tokenizer::train_bpe_texts;
    use alloc::string::ToString;
    use alloc::vec;

    fn vocab() -> Vocab {
        train_bpe_texts(["drug alpha inhibits kinase. drug beta inhibits kinase. efficacy efficacy"], 300).unwrap()
    }

    fn cfg(v: usize) -> ModelConfig {
        ModelConfig { n_layers: 1, n_heads: 2, d_model: 8, d_ff: 16, max_seq: 64, vocab_size: v }
    }

    #[test]
    fn render_places_masks() {
        let v = vocab();
        let q = QuerySpec::render(&v, "drug alpha inhibits <mask> <mask>.").unwrap();
        assert_eq!(q.k(), 2);
        assert_eq!(q.masked[1], q.masked[0] + 1);
        assert_eq!(q.ids.0[0], v.special().bos);
        assert_eq!(*q.ids.0.last().unwrap(), v.special().eos);
        assert_eq!(QuerySpec::render(&v, "no mask"), Err(Error::NoMask));
    }

    #[test]
    fn worked_example_target_mass() {
        let p = vec![0.25, 0.25, 0.5];
        let t = TargetSpec::from_ids("ac", [0, 2]).unwrap();
        assert!((target_mass(&p, &t) - 0.75).abs() < 1e-15);
        assert_eq!(TargetSpec::from_ids("", []), Err(Error::EmptyTarget));
    }

    #[test]
    fn topk_ties_and_clamp() {
        let v = Vocab::base();
        let uniform = vec![1.0 / v.len() as f64; v.len()];
        let top = topk_tokens(&v, &uniform, 3);
        let ids: Vec<u32> = top.iter().map(|t| t.0).collect();
        assert_eq!(ids, vec![5, 6, 7]);
        let mut p = vec![0.0; v.len()];
        p[10] = 0.5;
        p[20] = 0.3;
        p[30] = 0.2;
        let top = topk_tokens(&v, &p, 2);
        assert_eq!(top, vec![(10, 0.5), (20, 0.3)]);
        assert_eq!(topk_tokens(&v, &p, 10_000).len(), 256);
    }

    #[test]
    fn zero_model_is_uniform_and_decomposes() {
        let v = vocab();
        let p = Params::<f32>::init_with_std(cfg(v.len()), 0, 0.0).unwrap();
        let s = Scorer::new(&p, &v);
        let q = s.query("drug alpha inhibits <mask>.").unwrap();
        let probs = s.mlm_predict(&q).unwrap();
        for &x in &probs[0] {
            assert!((x - 1.0 / v.len() as f64).abs() < 1e-12);
        }
        let id = phrase_ids(&v, "kinase")[0];
        let single = TargetSpec::from_ids("kinase", [id]).unwrap();
        assert_eq!(s.qt_score(&q, &single).unwrap().per_position[0], probs[0][id as usize]);
    }

    #[test]
    fn ranking_is_order_independent() {
        let v = vocab();
        let p = Params::<f32>::init(cfg(v.len()), 5).unwrap();
        let s = Scorer::new(&p, &v);
        let t = s.target("efficacy").unwrap();
        let a: Vec<String> = ["beta", "alpha", "gamma", "delta"].iter().map(|x| x.to_string()).collect();
        let mut b = a.clone();
        b.reverse();
        let r1 = s.rank_by_qt(&a, DEFAULT_RANK_TEMPLATE, &t).unwrap();
        let r2 = s.rank_by_qt(&b, DEFAULT_RANK_TEMPLATE, &t).unwrap();
        assert_eq!(r1, r2);
        let one = s.rank_by_qt(&a[..1], DEFAULT_RANK_TEMPLATE, &t).unwrap();
        assert_eq!(one.entries[0].rank, 1);
        assert!(s.rank_by_qt(&[], DEFAULT_RANK_TEMPLATE, &t).unwrap().is_empty());
        assert_eq!(s.rank_by_qt(&a, "no slot <mask>", &t), Err(Error::NoDrugSlot));
    }

    #[test]
    fn combination_and_permuted() {
        let v = vocab();
        let p = Params::<f32>::init(cfg(v.len()), 5).unwrap();
        let s = Scorer::new(&p, &v);
        let t = s.target("efficacy").unwrap();
        let one = ["alpha".to_string()];
        assert_eq!(s.combination_score(&one, DEFAULT_RANK_TEMPLATE, &t), Err(Error::TooFewDrugs(1)));
        let two = ["alpha".to_string(), "beta".to_string()];
        let x = s.combination_score(&two, DEFAULT_RANK_TEMPLATE, &t).unwrap();
        let y = s.combination_score(&two, DEFAULT_RANK_TEMPLATE, &t).unwrap();
        assert_eq!(x, y);
        let mined = s.permuted_analogy("x", "x", 5).unwrap();
        assert_eq!(mined.len(), 5);
        let xs: BTreeSet<u32> = phrase_ids(&v, "x").into_iter().chain(v.encode("x").0).collect();
        assert!(mined.iter().all(|(id, _)| !xs.contains(id)));
        assert_eq!(s.permuted_analogy("a", "b", 1).unwrap().len(), 1);
    }

    #[test]
    fn geometric_aggregation() {
        assert!((Aggregation::Geometric.apply(&[0.25, 1.0]) - 0.5).abs() < 1e-15);
        assert_eq!(Aggregation::Geometric.apply(&[0.0, 1.0]), 0.0);
        assert_eq!(Aggregation::Arithmetic.apply(&[0.25, 0.75]), 0.5);
    }
}
