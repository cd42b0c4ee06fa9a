use alloc::vec::Vec;

use rand::Rng as _;

use super::TrainConfig;
use crate::rng::Rng;
use crate::tokenizer::{SpecialIds, TokenSeq};

/// One corrupted sequence with its reconstruction targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub corrupted: TokenSeq,
    /// Original id at targeted positions, `None` elsewhere.
    pub labels: Vec<Option<u32>>,
}

impl MaskedBatch {
    /// Whether each position is targeted.
    pub fn delta(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_some).collect()
    }

    pub fn n_targets(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    /// `(position, label)` for targeted positions.
    pub fn targets(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.labels.iter().enumerate().filter_map(|(t, l)| l.map(|id| (t, id)))
    }

    /// Uncorrupted view of a full sequence: every regular position targeted.
    pub fn all_targets(seq: &[u32], specials: &SpecialIds) -> MaskedBatch {
        let sp = specials.all();
        MaskedBatch {
            corrupted: TokenSeq(seq.to_vec()),
            labels: seq.iter().map(|&id| if sp.contains(&id) { None } else { Some(id) }).collect(),
        }
    }
}

/// Targets each regular position with probability `mask_rate`; a targeted
/// position becomes `<mask>` with probability `mask_token_frac` and a
/// uniformly drawn regular token otherwise (which may equal the original).
/// Special tokens are never targeted.
pub fn dynamic_mask(
    seq: &[u32],
    cfg: &TrainConfig,
    specials: &SpecialIds,
    vocab_size: usize,
    rng: &mut Rng,
) -> MaskedBatch {
    let sp = specials.all();
    let mut corrupted = seq.to_vec();
    let mut labels = alloc::vec![None; seq.len()];
    for (t, &id) in seq.iter().enumerate() {
        if sp.contains(&id) {
            continue;
        }
        if rng.random::<f64>() >= cfg.mask_rate {
            continue;
        }
        labels[t] = Some(id);
        corrupted[t] = if rng.random::<f64>() < cfg.mask_token_frac {
            specials.mask
        } else {
            loop {
                let r = rng.random_range(0..vocab_size as u32);
                if !sp.contains(&r) {
                    break r;
                }
            }
        };
    }
    MaskedBatch { corrupted: TokenSeq(corrupted), labels }
}
