use alloc::vec;
use alloc::vec::Vec;

use super::MaskedBatch;
use crate::error::Result;
use crate::model::{backward, forward_cached, Params};
use crate::real::{log_sum_exp, Real};

#[derive(Debug, Clone)]
pub struct LossGrad<R> {
    /// Mean cross-entropy over targeted positions (0 when there are none).
    pub loss: R,
    pub n_targets: usize,
    /// Same layout as `Params::data`.
    pub grad: Vec<R>,
}

/// Adds `scale · ∂CE_sum/∂θ` for one sequence into `grad` and returns the
/// summed cross-entropy over its targeted positions.
fn accumulate<R: Real>(params: &Params<R>, batch: &MaskedBatch, scale: R, grad: &mut [R]) -> Result<R> {
    let targets: Vec<(usize, u32)> = batch.targets().collect();
    if targets.is_empty() {
        return Ok(R::zero());
    }
    let cache = forward_cached(params, &batch.corrupted.0)?;
    let rows: Vec<usize> = targets.iter().map(|&(t, _)| t).collect();
    let (sel, mut logits) = crate::model::forward::project_rows(params, &cache.hidden, &rows);
    let v = params.config.vocab_size;
    let mut ce = R::zero();
    for (row, &(_, label)) in logits.chunks_exact_mut(v).zip(&targets) {
        let lse = log_sum_exp(row);
        ce += lse - row[label as usize];
        // dCE/dlogit = softmax - onehot
        for x in row.iter_mut() {
            *x = (*x - lse).exp() * scale;
        }
        row[label as usize] -= scale;
    }
    let dhidden = crate::model::backward::head_backward(params, cache.seq_len(), &rows, &sel, &logits, grad);
    backward(params, &cache, &dhidden, grad);
    Ok(ce)
}

/// Mean masked-position cross-entropy of one sequence and its gradient.
pub fn mlm_loss<R: Real>(params: &Params<R>, batch: &MaskedBatch) -> Result<LossGrad<R>> {
    batch_loss_grad(params, core::slice::from_ref(batch))
}

/// Mean cross-entropy over every targeted position of every sequence, and
/// its gradient. No targets at all gives loss 0 and a zero gradient.
pub fn batch_loss_grad<R: Real>(params: &Params<R>, batches: &[MaskedBatch]) -> Result<LossGrad<R>> {
    let n_targets: usize = batches.iter().map(MaskedBatch::n_targets).sum();
    let mut grad = vec![R::zero(); params.data.len()];
    if n_targets == 0 {
        log::warn!("event=empty_mask sequences={}", batches.len());
        return Ok(LossGrad { loss: R::zero(), n_targets, grad });
    }
    let scale = R::one() / R::from_usize(n_targets).unwrap();
    let mut ce_sum = R::zero();
    for b in batches {
        ce_sum += accumulate(params, b, scale, &mut grad)?;
    }
    Ok(LossGrad { loss: ce_sum * scale, n_targets, grad })
}

/// `(sum of cross-entropies, number of targeted positions)` without
/// gradients.
pub fn eval_loss<R: Real>(params: &Params<R>, batches: &[MaskedBatch]) -> Result<(f64, usize)> {
    let v = params.config.vocab_size;
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for b in batches {
        let targets: Vec<(usize, u32)> = b.targets().collect();
        if targets.is_empty() {
            continue;
        }
        let cache = forward_cached(params, &b.corrupted.0)?;
        let rows: Vec<usize> = targets.iter().map(|&(t, _)| t).collect();
        let (_, logits) = crate::model::forward::project_rows(params, &cache.hidden, &rows);
        for (row, &(_, label)) in logits.chunks_exact(v).zip(&targets) {
            sum += (log_sum_exp(row) - row[label as usize]).to_f64_lossy();
            n += 1;
        }
    }
    Ok((sum, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, TensorRole};
    use crate::tokenizer::TokenSeq;

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig { n_layers: 1, n_heads: 2, d_model: 8, d_ff: 16, max_seq: 8, vocab_size: vocab }
    }

    fn batch() -> MaskedBatch {
        // bos a <mask> c d eos with targets at 2 and 4 (position 4 was corrupted to a random id)
        MaskedBatch {
            corrupted: TokenSeq(vec![0, 6, 4, 8, 10, 2]),
            labels: vec![None, None, Some(7), None, Some(9), None],
        }
    }

    #[test]
    fn zero_weights_give_ln_v() {
        let v = 13;
        let p = Params::<f64>::init_with_std(tiny(v), 0, 0.0).unwrap();
        let lg = mlm_loss(&p, &batch()).unwrap();
        assert!((lg.loss - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_targets_give_zero() {
        let p = Params::<f64>::init(tiny(13), 0).unwrap();
        let b = MaskedBatch { corrupted: TokenSeq(vec![5, 6]), labels: vec![None, None] };
        let lg = mlm_loss(&p, &b).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn rigged_output_bias_gives_zero_loss() {
        // A huge output bias on the label makes its probability 1 in f64.
        let mut p = Params::<f64>::init(tiny(13), 1).unwrap();
        let ob = p.layout.out_bias;
        p.data[ob + 7] = 1e4;
        let b = MaskedBatch { corrupted: TokenSeq(vec![0, 4, 2]), labels: vec![None, Some(7), None] };
        let lg = mlm_loss(&p, &b).unwrap();
        assert!(lg.loss.abs() < 1e-12, "{}", lg.loss);
    }

    /// Central differences on a sample of coordinates from every tensor.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut p = Params::<f64>::init_with_std(tiny(13), 3, 0.5).unwrap();
        // non-trivial norm parameters and biases
        for (i, t) in p.layout.tensors.clone().iter().enumerate() {
            if matches!(t.role, TensorRole::Bias | TensorRole::NormBias | TensorRole::NormGain) {
                for (j, x) in p.data[t.range()].iter_mut().enumerate() {
                    *x += 0.1 * (((i * 31 + j * 7) % 11) as f64 - 5.0) / 5.0;
                }
            }
        }
        let b = batch();
        let analytic = mlm_loss(&p, &b).unwrap().grad;
        let h = 1e-5;
        for t in p.layout.tensors.clone() {
            let n = t.len();
            for j in [0, n / 3, n / 2, n - 1] {
                let idx = t.offset + j;
                let orig = p.data[idx];
                p.data[idx] = orig + h;
                let up = mlm_loss(&p, &b).unwrap().loss;
                p.data[idx] = orig - h;
                let down = mlm_loss(&p, &b).unwrap().loss;
                p.data[idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[idx];
                let denom = a.abs().max(numeric.abs()).max(1e-7);
                assert!(
                    (a - numeric).abs() / denom < 1e-4 || (a - numeric).abs() < 1e-9,
                    "{}[{j}]: analytic {a} numeric {numeric}",
                    t.name
                );
            }
        }
    }
}
