//! Analogy prompts (`"a is to b as c is to <mask>"`) and top-k accuracy.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnalogyItem, Subcategory};
use crate::error::{Error, Result};
use crate::model::Params;
use crate::qt::{mlm_predict, phrase_ids, topk_tokens, QuerySpec};
use crate::real::Real;
use crate::tokenizer::{Vocab, MASK_MARKER};

/// Prompt with one mask slot per gold-answer token, and the gold ids.
/// Terms are lower-cased first. The prompt starts with a space so that
/// `a` tokenizes the way it does mid-sentence, like the gold answer.
pub fn render_analogy(item: &AnalogyItem, vocab: &Vocab) -> Result<(QuerySpec, Vec<u32>)> {
    let lc = |s: &str| s.trim().to_lowercase();
    let gold = phrase_ids(vocab, &lc(&item.d));
    if gold.is_empty() {
        return Err(Error::EmptyAnswer(item.d.clone()));
    }
    let mut text = format!(" {} is to {} as {} is to", lc(&item.a), lc(&item.b), lc(&item.c));
    for _ in 0..gold.len() {
        text.push(' ');
        text.push_str(MASK_MARKER);
    }
    let query = QuerySpec::render(vocab, &text)?;
    Ok((query, gold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    pub subcategory: Subcategory,
    pub n: usize,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcategoryScore {
    pub subcategory: Subcategory,
    pub n: usize,
    pub top1: f64,
    pub top5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogyReport {
    /// Sorted by `(subcategory, category)`.
    pub categories: Vec<CategoryScore>,
    pub subcategories: Vec<SubcategoryScore>,
    pub excluded: Vec<usize>,
}

impl AnalogyReport {
    pub fn category(&self, name: &str) -> Option<&CategoryScore> {
        self.categories.iter().find(|c| c.category == name)
    }

    pub fn subcategory(&self, sub: Subcategory) -> Option<&SubcategoryScore> {
        self.subcategories.iter().find(|s| s.subcategory == sub)
    }
}

/// Whether the gold id is in the top-`k` regular tokens at every slot.
fn hit(vocab: &Vocab, probs: &[Vec<f64>], gold: &[u32], k: usize) -> bool {
    probs.iter().zip(gold).all(|(p, g)| topk_tokens(vocab, p, k).iter().any(|(id, _)| id == g))
}

/// Top-1 and top-5 accuracy per category and per subcategory (item-weighted),
/// skipping items whose id is in `exclude`.
pub fn eval_analogies<R: Real>(
    params: &Params<R>,
    vocab: &Vocab,
    items: &[AnalogyItem],
    exclude: &BTreeSet<usize>,
) -> Result<AnalogyReport> {
    // (subcategory, category) -> (n, hits@1, hits@5)
    let mut tally: BTreeMap<(Subcategory, String), (usize, usize, usize)> = BTreeMap::new();
    for item in items.iter().filter(|i| !exclude.contains(&i.id)) {
        let (query, gold) = render_analogy(item, vocab)?;
        let probs = mlm_predict(params, &query)?;
        let e = tally.entry((item.subcategory, item.category.clone())).or_default();
        e.0 += 1;
        e.1 += hit(vocab, &probs, &gold, 1) as usize;
        e.2 += hit(vocab, &probs, &gold, 5) as usize;
    }
    if tally.is_empty() {
        return Err(Error::NothingToEvaluate);
    }
    let mut categories = Vec::new();
    let mut subs: BTreeMap<Subcategory, (usize, usize, usize)> = BTreeMap::new();
    for ((sub, cat), (n, h1, h5)) in tally {
        categories.push(CategoryScore {
            category: cat,
            subcategory: sub,
            n,
            top1: h1 as f64 / n as f64,
            top5: h5 as f64 / n as f64,
        });
        let s = subs.entry(sub).or_default();
        s.0 += n;
        s.1 += h1;
        s.2 += h5;
    }
    let subcategories = subs
        .into_iter()
        .map(|(subcategory, (n, h1, h5))| SubcategoryScore {
            subcategory,
            n,
            top1: h1 as f64 / n as f64,
            top5: h5 as f64 / n as f64,
        })
        .collect();
    Ok(AnalogyReport { categories, subcategories, excluded: exclude.iter().copied().collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDelta {
    pub name: String,
    pub top1_before: f64,
    pub top1_after: f64,
    pub top5_before: f64,
    pub top5_after: f64,
}

impl AccuracyDelta {
    pub fn top1_delta(&self) -> f64 {
        self.top1_after - self.top1_before
    }

    pub fn top5_delta(&self) -> f64 {
        self.top5_after - self.top5_before
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KshotComparison {
    pub categories: Vec<AccuracyDelta>,
    pub subcategories: Vec<AccuracyDelta>,
    pub excluded: Vec<usize>,
}

/// Accuracy change (after − before) on the same items and exclusions.
pub fn compare_kshot<R: Real>(
    before: &Params<R>,
    after: &Params<R>,
    vocab: &Vocab,
    items: &[AnalogyItem],
    exclude: &BTreeSet<usize>,
) -> Result<KshotComparison> {
    let b = eval_analogies(before, vocab, items, exclude)?;
    let a = eval_analogies(after, vocab, items, exclude)?;
    let categories = b
        .categories
        .iter()
        .zip(&a.categories)
        .map(|(x, y)| AccuracyDelta {
            name: x.category.clone(),
            top1_before: x.top1,
            top1_after: y.top1,
            top5_before: x.top5,
            top5_after: y.top5,
        })
        .collect();
    let subcategories = b
        .subcategories
        .iter()
        .zip(&a.subcategories)
        .map(|(x, y)| AccuracyDelta {
            name: x.subcategory.as_str().into(),
            top1_before: x.top1,
            top1_after: y.top1,
            top5_before: x.top5,
            top5_after: y.top5,
        })
        .collect();
    Ok(KshotComparison { categories, subcategories, excluded: b.excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tokenizer::train_bpe_texts;
    use alloc::vec;

    fn item(id: usize, cat: &str, sub: Subcategory, a: &str, b: &str, c: &str, d: &str) -> AnalogyItem {
        AnalogyItem {
            id,
            category: cat.into(),
            subcategory: sub,
            a: a.into(),
            b: b.into(),
            c: c.into(),
            d: d.into(),
        }
    }

    fn vocab() -> Vocab {
        train_bpe_texts(["big bigger small smaller big bigger small smaller tall taller"], 320).unwrap()
    }

    #[test]
    fn mask_count_follows_answer_length() {
        let v = vocab();
        let one = item(0, "comparatives", Subcategory::Grammar, "big", "bigger", "small", "smaller");
        let (q, gold) = render_analogy(&one, &v).unwrap();
        assert_eq!(gold.len(), phrase_ids(&v, "smaller").len());
        assert_eq!(q.k(), gold.len());
        let two = item(1, "x", Subcategory::Antiviral, "big", "bigger", "small", "smaller smaller");
        let (q2, g2) = render_analogy(&two, &v).unwrap();
        assert_eq!(q2.k(), g2.len());
        assert_eq!(g2.len(), 2 * gold.len());
        assert_eq!(render_analogy(&one, &v).unwrap(), (q, gold));
        let empty = item(2, "x", Subcategory::Grammar, "a", "b", "c", "  ");
        assert!(matches!(render_analogy(&empty, &v), Err(Error::EmptyAnswer(_))));
    }

    #[test]
    fn rigged_model_scores_perfectly() {
        let v = vocab();
        let gold = phrase_ids(&v, "smaller");
        assert_eq!(gold.len(), 1);
        let cfg = ModelConfig { n_layers: 1, n_heads: 1, d_model: 4, d_ff: 4, max_seq: 32, vocab_size: v.len() };
        let mut p = Params::<f64>::init_with_std(cfg, 0, 0.0).unwrap();
        p.data[p.layout.out_bias + gold[0] as usize] = 50.0;
        let items = vec![
            item(0, "comparatives", Subcategory::Grammar, "big", "bigger", "small", "smaller"),
            item(1, "comparatives", Subcategory::Grammar, "tall", "taller", "small", "smaller"),
        ];
        let r = eval_analogies(&p, &v, &items, &BTreeSet::new()).unwrap();
        assert_eq!(r.categories[0].top1, 1.0);
        assert_eq!(r.categories[0].n, 2);
        let ex: BTreeSet<usize> = [0, 1].into_iter().collect();
        assert_eq!(eval_analogies(&p, &v, &items, &ex), Err(Error::NothingToEvaluate));
        let cmp = compare_kshot(&p, &p, &v, &items, &[1].into_iter().collect()).unwrap();
        assert!(cmp.categories.iter().all(|d| d.top1_delta() == 0.0 && d.top5_delta() == 0.0));
        assert_eq!(cmp.excluded, vec![1]);
    }
}
