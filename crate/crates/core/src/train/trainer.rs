use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;

use super::{batch_loss_grad, dynamic_mask, eval_loss, Adam, MaskedBatch, TrainConfig};
use crate::corpus::DocumentSet;
use crate::error::{Error, Result};
use crate::model::Params;
use crate::rng;
use crate::tokenizer::{SpecialIds, Vocab};

/// Non-overlapping windows of each document, `<s> … </s>`, at most
/// `max_seq` ids each. Documents are never packed together.
pub fn windows(vocab: &Vocab, docs: &DocumentSet, max_seq: usize) -> Vec<Vec<u32>> {
    let sp = vocab.special();
    let body = max_seq.saturating_sub(2).max(1);
    let mut out = Vec::new();
    for d in &docs.documents {
        let ids = vocab.encode(&d.text()).0;
        for chunk in ids.chunks(body) {
            let mut w = Vec::with_capacity(chunk.len() + 2);
            w.push(sp.bos);
            w.extend_from_slice(chunk);
            w.push(sp.eos);
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub loss: Option<f64>,
    pub eval_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub curve: Vec<LossRow>,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
}

fn fixed_masks(ws: &[Vec<u32>], cfg: &TrainConfig, specials: &SpecialIds, vocab_size: usize) -> Vec<MaskedBatch> {
    let mut r = rng::stream(cfg.seed, "eval-mask");
    ws.iter().map(|w| dynamic_mask(w, cfg, specials, vocab_size, &mut r)).collect()
}

fn mean_ce(params: &Params<f32>, batches: &[MaskedBatch]) -> Result<f64> {
    let (sum, n) = eval_loss(params, batches)?;
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Adam on MLM over `train` windows. Every epoch lists each window
/// `n_mask_copies` times, shuffles, and masks each entry afresh when it is
/// drawn. `eval` windows get one fixed masking for the eval loss.
pub fn train_windows(
    params: &mut Params<f32>,
    train: &[Vec<u32>],
    eval: &[Vec<u32>],
    specials: &SpecialIds,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let v = params.config.vocab_size;
    let eval_masks = fixed_masks(eval, cfg, specials, v);
    let initial = mean_ce(params, &eval_masks)?;
    let mut curve = alloc::vec![LossRow { step: 0, loss: None, eval_loss: Some(initial) }];
    let mut last_eval = initial;
    if cfg.steps == 0 || train.is_empty() {
        return Ok(TrainOutcome { curve, initial_eval_loss: initial, final_eval_loss: initial });
    }

    let mut rng = rng::stream(cfg.seed, "train");
    let mut adam = Adam::new(params.data.len(), cfg);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0usize;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 0..cfg.steps {
        batch.clear();
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order.clear();
                for w in 0..train.len() {
                    order.extend(core::iter::repeat_n(w, cfg.n_mask_copies));
                }
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let w = order[cursor];
            cursor += 1;
            batch.push(dynamic_mask(&train[w], cfg, specials, v, &mut rng));
        }
        let lg = batch_loss_grad(params, &batch)?;
        if !lg.loss.is_finite() || lg.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss(step + 1));
        }
        adam.step(&mut params.data, &lg.grad, step);

        let done = step + 1;
        let eval_now = done == cfg.steps || (cfg.eval_every > 0 && done % cfg.eval_every == 0);
        let eval_loss = if eval_now {
            last_eval = mean_ce(params, &eval_masks)?;
            log::debug!("event=eval step={done} eval_loss={last_eval:.5}");
            Some(last_eval)
        } else {
            None
        };
        curve.push(LossRow { step: done, loss: Some(lg.loss as f64), eval_loss });
    }
    Ok(TrainOutcome { curve, initial_eval_loss: initial, final_eval_loss: last_eval })
}

/// Splits `docs` by `cfg.seed`, windows both halves and trains. With an
/// empty test half the training windows double as the eval set.
pub fn train(params: &mut Params<f32>, vocab: &Vocab, docs: &DocumentSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (tr, te) = docs.split(cfg.seed);
    let max_seq = params.config.max_seq;
    let train_w = windows(vocab, &tr, max_seq);
    let mut eval_w = windows(vocab, &te, max_seq);
    if eval_w.is_empty() {
        log::warn!("event=empty_test_split fallback=train_windows");
        eval_w = train_w.clone();
    }
    train_windows(params, &train_w, &eval_w, &vocab.special(), cfg)
}

/// `exp` of the mean masked-position cross-entropy over one fixed-seed
/// masking of `docs`.
pub fn perplexity(params: &Params<f32>, vocab: &Vocab, docs: &DocumentSet, cfg: &TrainConfig) -> Result<f64> {
    let ws = windows(vocab, docs, params.config.max_seq);
    if ws.is_empty() {
        return Err(Error::EmptySplit);
    }
    let masks = fixed_masks(&ws, cfg, &vocab.special(), params.config.vocab_size);
    let (sum, n) = eval_loss(params, &masks)?;
    if n == 0 {
        return Err(Error::EmptySplit);
    }
    Ok(Float::exp(sum / n as f64))
}
