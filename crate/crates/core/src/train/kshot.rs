use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{train_windows, TrainConfig, TrainOutcome};
use crate::analogy::render_analogy;
use crate::corpus::{group_analogies, AnalogyItem};
use crate::error::{Error, Result};
use crate::model::Params;
use crate::rng;
use crate::tokenizer::Vocab;

#[derive(Debug, Clone)]
pub struct KshotOutcome {
    pub params: Params<f32>,
    /// Ids of the items used for fine-tuning, ascending.
    pub sampled: Vec<usize>,
    pub training: Option<TrainOutcome>,
}

/// Draws `k` items per `(category, subcategory)` without replacement.
pub fn sample_kshot(items: &[AnalogyItem], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = rng::stream(seed, "kshot-sample");
    let mut picked = BTreeSet::new();
    if k == 0 {
        return Ok(Vec::new());
    }
    for g in group_analogies(items) {
        if g.items.len() < k {
            return Err(Error::CategoryTooSmall { category: g.category, available: g.items.len(), needed: k });
        }
        for i in rand::seq::index::sample(&mut rng, g.items.len(), k).into_iter() {
            picked.insert(g.items[i].id);
        }
    }
    Ok(picked.into_iter().collect())
}

/// Continues MLM training on the sampled analogy sentences only, each
/// rendered with its answer in place of the mask slots.
pub fn kshot_finetune(
    params: &Params<f32>,
    vocab: &Vocab,
    items: &[AnalogyItem],
    k: usize,
    cfg: &TrainConfig,
) -> Result<KshotOutcome> {
    let sampled = sample_kshot(items, k, cfg.seed)?;
    let mut tuned = params.clone();
    if sampled.is_empty() {
        return Ok(KshotOutcome { params: tuned, sampled, training: None });
    }
    let mut sentences = Vec::with_capacity(sampled.len());
    for item in items.iter().filter(|i| sampled.binary_search(&i.id).is_ok()) {
        let (query, gold) = render_analogy(item, vocab)?;
        sentences.push(query.filled(&gold));
    }
    let outcome = train_windows(&mut tuned, &sentences, &sentences, &vocab.special(), cfg)?;
    Ok(KshotOutcome { params: tuned, sampled, training: Some(outcome) })
}
