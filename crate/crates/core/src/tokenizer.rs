//! Byte-level byte-pair encoding.
//!
//! Ids `0..5` are the special tokens, `5..261` the 256 single bytes, and
//! every id after that is a learned merge in learning order. Merges are
//! never allowed to glue a whitespace-led token onto the end of a
//! non-whitespace token, so the leading-space byte always starts a new
//! token (`" efficacy"`), while the byte stream stays lossless.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentSet;
use crate::error::{Error, Result};

pub const SPECIAL_MARKERS: [&str; 5] = ["<s>", "<pad>", "</s>", "<unk>", "<mask>"];
pub const N_SPECIAL: usize = SPECIAL_MARKERS.len();
/// Specials plus the 256 byte tokens.
pub const BASE_VOCAB: usize = N_SPECIAL + 256;
pub const DEFAULT_VOCAB_SIZE: usize = 8192;
pub const MASK_MARKER: &str = "<mask>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialIds {
    pub bos: u32,
    pub pad: u32,
    pub eos: u32,
    pub unk: u32,
    pub mask: u32,
}

impl SpecialIds {
    pub const DEFAULT: SpecialIds = SpecialIds { bos: 0, pad: 1, eos: 2, unk: 3, mask: 4 };

    pub fn all(&self) -> [u32; N_SPECIAL] {
        [self.bos, self.pad, self.eos, self.unk, self.mask]
    }

    pub fn named(&self) -> [(&'static str, u32); N_SPECIAL] {
        [
            ("bos", self.bos),
            ("pad", self.pad),
            ("eos", self.eos),
            ("unk", self.unk),
            ("mask", self.mask),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSeq(pub Vec<u32>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for TokenSeq {
    fn from(v: Vec<u32>) -> Self {
        TokenSeq(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    special: SpecialIds,
    is_special: Vec<bool>,
    byte_ids: [u32; 256],
    merge_rank: BTreeMap<(u32, u32), u32>,
}

#[inline]
fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

/// Whether `left ++ right` may become a token.
#[inline]
fn mergeable(left: &[u8], right: &[u8]) -> bool {
    match (left.last(), right.first()) {
        (Some(&l), Some(&r)) => !(is_ws(r) && !is_ws(l)),
        _ => false,
    }
}

/// Splits at every whitespace byte that follows a non-whitespace byte. No
/// admissible merge crosses such a point.
fn pieces(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    let mut start = 0;
    let mut i = 1;
    core::iter::from_fn(move || {
        if start >= bytes.len() {
            return None;
        }
        while i < bytes.len() {
            if is_ws(bytes[i]) && !is_ws(bytes[i - 1]) {
                let piece = &bytes[start..i];
                start = i;
                i += 1;
                return Some(piece);
            }
            i += 1;
        }
        let piece = &bytes[start..];
        start = bytes.len();
        Some(piece)
    })
}

impl Vocab {
    /// Vocabulary with no merges.
    pub fn base() -> Vocab {
        let mut tokens: Vec<Vec<u8>> = SPECIAL_MARKERS.iter().map(|m| m.as_bytes().to_vec()).collect();
        tokens.extend((0..=255u8).map(|b| alloc::vec![b]));
        Vocab::from_parts(tokens, Vec::new(), SpecialIds::DEFAULT).expect("base vocab is valid")
    }

    /// Assembles a vocabulary and checks its invariants: special ids are
    /// distinct and in range, every byte has a non-special single-byte
    /// token, and merge `i` produces token `len - merges + i` whose bytes
    /// are the concatenation of its parts.
    pub fn from_parts(tokens: Vec<Vec<u8>>, merges: Vec<(u32, u32)>, special: SpecialIds) -> Result<Vocab> {
        let v = tokens.len();
        let bad = |msg: &str| Error::Config(alloc::format!("vocab: {msg}"));
        let specials = special.all();
        for (i, &s) in specials.iter().enumerate() {
            if s as usize >= v {
                return Err(bad("special id out of range"));
            }
            if specials[..i].contains(&s) {
                return Err(bad("special ids must be distinct"));
            }
        }
        let mut is_special = alloc::vec![false; v];
        for &s in &specials {
            is_special[s as usize] = true;
        }
        let mut byte_ids = [u32::MAX; 256];
        for (id, t) in tokens.iter().enumerate() {
            if !is_special[id] && t.len() == 1 && byte_ids[t[0] as usize] == u32::MAX {
                byte_ids[t[0] as usize] = id as u32;
            }
        }
        if byte_ids.contains(&u32::MAX) {
            return Err(bad("missing single-byte token"));
        }
        if merges.len() > v {
            return Err(bad("more merges than tokens"));
        }
        let first_merge = v - merges.len();
        let mut merge_rank = BTreeMap::new();
        for (rank, &(l, r)) in merges.iter().enumerate() {
            let out = first_merge + rank;
            if l as usize >= out || r as usize >= out {
                return Err(bad("merge refers to a later token"));
            }
            if is_special[l as usize] || is_special[r as usize] || is_special[out] {
                return Err(bad("merge involves a special token"));
            }
            let mut joined = tokens[l as usize].clone();
            joined.extend_from_slice(&tokens[r as usize]);
            if joined != tokens[out] {
                return Err(bad("merge output bytes do not match its parts"));
            }
            if merge_rank.insert((l, r), rank as u32).is_some() {
                return Err(bad("duplicate merge"));
            }
        }
        Ok(Vocab { tokens, merges, special, is_special, byte_ids, merge_rank })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Vec<u8>] {
        &self.tokens
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.is_special.get(id as usize).copied().unwrap_or(false)
    }

    /// Non-special ids in ascending order.
    pub fn regular_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.tokens.len() as u32).filter(move |&i| !self.is_special[i as usize])
    }

    fn merge_output(&self, rank: u32) -> u32 {
        (self.tokens.len() - self.merges.len()) as u32 + rank
    }

    fn encode_piece(&self, piece: &[u8], out: &mut Vec<u32>) {
        let mut syms: Vec<u32> = piece.iter().map(|&b| self.byte_ids[b as usize]).collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|w| self.merge_rank.get(&(w[0], w[1])).copied())
                .min();
            let Some(rank) = best else { break };
            let (l, r) = self.merges[rank as usize];
            let z = self.merge_output(rank);
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
                    merged.push(z);
                    i += 2;
                } else {
                    merged.push(syms[i]);
                    i += 1;
                }
            }
            syms = merged;
        }
        out.extend_from_slice(&syms);
    }

    /// Applies the learned merges, in learning order, to the UTF-8 bytes of
    /// `text`. Special markers in the text are encoded as ordinary bytes.
    pub fn encode(&self, text: &str) -> TokenSeq {
        let mut out = Vec::with_capacity(text.len() / 3 + 1);
        for piece in pieces(text.as_bytes()) {
            self.encode_piece(piece, &mut out);
        }
        TokenSeq(out)
    }

    pub fn decode_bytes(&self, seq: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in seq {
            let t = self
                .tokens
                .get(id as usize)
                .ok_or(Error::TokenOutOfRange { id, vocab_size: self.tokens.len() })?;
            out.extend_from_slice(t);
        }
        Ok(out)
    }

    /// Concatenated token bytes; specials render as their markers. Invalid
    /// UTF-8 (possible only for hand-built id sequences) is replaced.
    pub fn decode(&self, seq: &TokenSeq) -> Result<String> {
        let bytes = self.decode_bytes(&seq.0)?;
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    /// Display form of a single token.
    pub fn token_text(&self, id: u32) -> String {
        self.token_bytes(id).map(|b| String::from_utf8_lossy(b).into_owned()).unwrap_or_default()
    }
}

/// Trains on the concatenated text of every document.
pub fn train_bpe(docs: &DocumentSet, vocab_size: usize) -> Result<Vocab> {
    let texts: Vec<String> = docs.documents.iter().map(|d| d.text()).collect();
    train_bpe_texts(texts.iter().map(String::as_str), vocab_size)
}

/// Greedy BPE: repeatedly merges the most frequent admissible adjacent pair
/// until `vocab_size` tokens exist or no pair occurs at least twice. Ties go
/// to the pair whose `(left bytes, right bytes)` is lexicographically
/// smallest.
pub fn train_bpe_texts<'a>(texts: impl IntoIterator<Item = &'a str>, vocab_size: usize) -> Result<Vocab> {
    if vocab_size < BASE_VOCAB {
        return Err(Error::VocabTooSmall { requested: vocab_size, minimum: BASE_VOCAB });
    }
    let mut word_counts: BTreeMap<&[u8], u64> = BTreeMap::new();
    let mut total = 0usize;
    for t in texts {
        total += t.len();
        for p in pieces(t.as_bytes()) {
            *word_counts.entry(p).or_insert(0) += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }

    let base = Vocab::base();
    let mut tokens = base.tokens.clone();
    let mut merges: Vec<(u32, u32)> = Vec::new();

    let mut words: Vec<(Vec<u32>, u64)> = word_counts
        .iter()
        .map(|(w, &c)| (w.iter().map(|&b| base.byte_ids[b as usize]).collect(), c))
        .collect();

    let mut trainer = PairIndex::default();
    for (wi, (syms, count)) in words.iter().enumerate() {
        trainer.add_word(&tokens, syms, *count as i64, wi);
    }

    while tokens.len() < vocab_size {
        let Some((count, pair)) = trainer.best(&tokens) else { break };
        if count < 2 {
            break;
        }
        let (l, r) = pair;
        let z = tokens.len() as u32;
        let mut joined = tokens[l as usize].clone();
        joined.extend_from_slice(&tokens[r as usize]);
        tokens.push(joined);
        merges.push(pair);

        let affected: Vec<usize> = trainer.take_locations(pair);
        for wi in affected {
            let (syms, count) = &mut words[wi];
            if !syms.windows(2).any(|w| w[0] == l && w[1] == r) {
                continue;
            }
            let c = *count as i64;
            trainer.add_word(&tokens, syms, -c, usize::MAX);
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == l && syms[i + 1] == r {
                    merged.push(z);
                    i += 2;
                } else {
                    merged.push(syms[i]);
                    i += 1;
                }
            }
            *syms = merged;
            trainer.add_word(&tokens, syms, c, wi);
        }
    }

    Vocab::from_parts(tokens, merges, SpecialIds::DEFAULT)
}

/// Pair frequencies with an ordered index for best-pair selection.
#[derive(Default)]
struct PairIndex {
    counts: BTreeMap<(u32, u32), i64>,
    // (Reverse(count), left bytes, right bytes, pair)
    order: BTreeSet<(Reverse<i64>, Vec<u8>, Vec<u8>, (u32, u32))>,
    locations: BTreeMap<(u32, u32), BTreeSet<usize>>,
}

impl PairIndex {
    fn add_word(&mut self, tokens: &[Vec<u8>], syms: &[u32], delta: i64, word: usize) {
        for w in syms.windows(2) {
            let pair = (w[0], w[1]);
            let (lb, rb) = (&tokens[pair.0 as usize], &tokens[pair.1 as usize]);
            if !mergeable(lb, rb) {
                continue;
            }
            let old = self.counts.get(&pair).copied().unwrap_or(0);
            let new = old + delta;
            if old > 0 {
                self.order.remove(&(Reverse(old), lb.clone(), rb.clone(), pair));
            }
            if new > 0 {
                self.counts.insert(pair, new);
                self.order.insert((Reverse(new), lb.clone(), rb.clone(), pair));
            } else {
                self.counts.remove(&pair);
            }
            if word != usize::MAX {
                self.locations.entry(pair).or_default().insert(word);
            }
        }
    }

    fn best(&self, _tokens: &[Vec<u8>]) -> Option<(i64, (u32, u32))> {
        self.order.iter().next().map(|(Reverse(c), _, _, p)| (*c, *p))
    }

    fn take_locations(&mut self, pair: (u32, u32)) -> Vec<usize> {
        self.locations.remove(&pair).map(|s| s.into_iter().collect()).unwrap_or_default()
    }
}
