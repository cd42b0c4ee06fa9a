//! Attention views and per-sentence passage highlighting.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward_cached, Params};
use crate::qt::{QuerySpec, Scorer, TargetSpec};
use crate::real::Real;

pub const SENTENCE_SLOT: &str = "{sentence}";
pub const DEFAULT_SENTENCE_TEMPLATE: &str = "{sentence} This concerns <mask> <mask>.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionView {
    Head { layer: usize, head: usize },
    /// Mean over the heads of one layer.
    Averaged { layer: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub view: AttentionView,
    pub seq_len: usize,
    /// Row-major `seq_len × seq_len`; row `i` is where position `i` attends.
    pub matrix: Vec<f64>,
}

impl AttentionMap {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.seq_len..(i + 1) * self.seq_len]
    }
}

/// One layer/head attention matrix, or by default the head-averaged final
/// layer.
pub fn self_attention<R: Real>(params: &Params<R>, ids: &[u32], view: Option<AttentionView>) -> Result<AttentionMap> {
    let c = params.config;
    let view = view.unwrap_or(AttentionView::Averaged { layer: c.n_layers - 1 });
    let (layer, head) = match view {
        AttentionView::Head { layer, head } => (layer, Some(head)),
        AttentionView::Averaged { layer } => (layer, None),
    };
    if layer >= c.n_layers || head.is_some_and(|h| h >= c.n_heads) {
        return Err(Error::AttentionIndex {
            layer,
            head: head.unwrap_or(0),
            n_layers: c.n_layers,
            n_heads: c.n_heads,
        });
    }
    let cache = forward_cached(params, ids)?;
    let s = ids.len();
    let probs = cache.layer_attention(layer);
    let matrix = match head {
        Some(h) => probs[h * s * s..(h + 1) * s * s].iter().map(|v| v.to_f64_lossy()).collect(),
        None => {
            let mut m = vec![0.0f64; s * s];
            for h in 0..c.n_heads {
                for (acc, v) in m.iter_mut().zip(&probs[h * s * s..(h + 1) * s * s]) {
                    *acc += v.to_f64_lossy();
                }
            }
            let inv = 1.0 / c.n_heads as f64;
            m.iter_mut().for_each(|x| *x *= inv);
            m
        }
    };
    Ok(AttentionMap { view, seq_len: s, matrix })
}

/// Per-token association with the target: for each target token `y_l`,
/// softmax over positions `j` of `H_j · e(y_l)`; the per-target
/// distributions are averaged, so the result sums to 1 over the sequence.
pub fn qt_attention<R: Real>(params: &Params<R>, query: &QuerySpec, target: &TargetSpec) -> Result<Vec<f64>> {
    if target.ids.is_empty() {
        return Err(Error::EmptyTarget);
    }
    let cache = forward_cached(params, &query.ids.0)?;
    let d = params.config.d_model;
    let s = query.ids.len();
    let mut out = vec![0.0f64; s];
    for &y in &target.ids {
        let e = params.embedding(y);
        let mut aff: Vec<f64> = (0..s)
            .map(|j| crate::real::dot(&cache.hidden[j * d..(j + 1) * d], e).to_f64_lossy())
            .collect();
        crate::real::softmax_in_place(&mut aff);
        for (o, a) in out.iter_mut().zip(aff) {
            *o += a;
        }
    }
    let inv = 1.0 / target.ids.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(out)
}

/// Byte spans that tile `passage`. A sentence ends after `.`, `!` or `?`
/// followed by whitespace; the whitespace run stays with the sentence it
/// follows.
pub fn split_sentences(passage: &str) -> Vec<(usize, usize)> {
    let b = passage.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < b.len() {
        if matches!(b[i], b'.' | b'!' | b'?') && i + 1 < b.len() && b[i + 1].is_ascii_whitespace() {
            let mut end = i + 1;
            while end < b.len() && b[end].is_ascii_whitespace() {
                end += 1;
            }
            spans.push((start, end));
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < b.len() {
        spans.push((start, b.len()));
    }
    // leading whitespace-only span joins the next sentence
    if spans.len() > 1 && passage[spans[0].0..spans[0].1].trim().is_empty() {
        let first = spans.remove(0);
        spans[0].0 = first.0;
    }
    spans
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightSentence {
    /// Exact passage slice, trailing whitespace included.
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub raw_score: f64,
    /// `raw_score / max raw_score` (0 when every raw score is 0).
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightDoc {
    pub target: String,
    pub sentences: Vec<HighlightSentence>,
}

/// Scores each sentence by substituting it into `template` (which holds a
/// `{sentence}` slot and mask markers) and taking the QT aggregate against
/// `target_term`; scores are then max-normalized.
pub fn highlight_passage<R: Real>(
    scorer: &Scorer<'_, R>,
    passage: &str,
    target_term: &str,
    template: &str,
) -> Result<HighlightDoc> {
    let spans = split_sentences(passage);
    if spans.iter().all(|&(a, b)| passage[a..b].trim().is_empty()) {
        return Err(Error::NoSentences);
    }
    let target = scorer.target(target_term)?;
    let mut sentences = Vec::with_capacity(spans.len());
    for (start, end) in spans {
        let text = &passage[start..end];
        let raw = if text.trim().is_empty() {
            0.0
        } else {
            scorer.qt_score_text(&template.replace(SENTENCE_SLOT, text.trim()), &target)?.aggregate
        };
        sentences.push(HighlightSentence { text: text.into(), start, end, raw_score: raw, score: 0.0 });
    }
    let max = sentences.iter().map(|s| s.raw_score).fold(0.0f64, f64::max);
    for s in &mut sentences {
        s.score = if max > 0.0 { s.raw_score / max } else { 0.0 };
    }
    Ok(HighlightDoc { target: target_term.into(), sentences })
}

/// Intensity bucket `0..=4`.
pub fn bucket(score: f64) -> usize {
    Float::floor(score.clamp(0.0, 1.0) * 5.0).min(4.0) as usize
}

const ANSI_BG: [u8; 5] = [236, 58, 94, 136, 178];

pub fn render_ansi(doc: &HighlightDoc) -> String {
    let mut out = String::new();
    for s in &doc.sentences {
        out.push_str(&format!("\x1b[48;5;{}m{}\x1b[0m", ANSI_BG[bucket(s.score)], s.text));
    }
    out.push('\n');
    out
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// Standalone page, one `<span>` per sentence carrying `data-score`.
pub fn render_html(doc: &HighlightDoc) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>highlight</title>\n</head>\n<body>\n",
    );
    out.push_str(&format!("<p data-target=\"{}\">", escape_html(&doc.target)));
    for s in &doc.sentences {
        out.push_str(&format!(
            "<span class=\"sentence\" data-score=\"{:.6}\" style=\"background-color: rgba(255, 196, 0, {:.6}); opacity: {:.3}\">{}</span>",
            s.score,
            s.score,
            0.35 + 0.65 * s.score,
            escape_html(&s.text)
        ));
    }
    out.push_str("</p>\n</body>\n</html>\n");
    out
}

/// Reads back every `data-score` attribute in document order.
pub fn parse_html_scores(html: &str) -> Vec<f64> {
    const KEY: &str = "data-score=\"";
    let mut out = Vec::new();
    let mut rest = html;
    while let Some(i) = rest.find(KEY) {
        rest = &rest[i + KEY.len()..];
        let end = rest.find('"').unwrap_or(rest.len());
        if let Ok(v) = rest[..end].parse() {
            out.push(v);
        }
        rest = &rest[end..];
    }
    out
}
