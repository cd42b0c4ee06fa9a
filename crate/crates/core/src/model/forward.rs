use alloc::vec;
use alloc::vec::Vec;

use super::{LayerOffsets, Params, LN_EPS};
use crate::error::{Error, Result};
use crate::real::{matmul, matmul_a_bt, softmax_in_place, Real};

/// Hidden states, logits and attention maps for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOut<R> {
    pub seq_len: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// `seq_len × d_model`
    pub hidden: Vec<R>,
    /// `seq_len × vocab_size`
    pub logits: Vec<R>,
    /// `n_layers × n_heads × seq_len × seq_len`, rows softmax-normalized.
    pub attentions: Vec<R>,
}

impl<R: Real> ForwardOut<R> {
    pub fn hidden_row(&self, t: usize) -> &[R] {
        &self.hidden[t * self.d_model..(t + 1) * self.d_model]
    }

    pub fn logits_row(&self, t: usize) -> &[R] {
        &self.logits[t * self.vocab_size..(t + 1) * self.vocab_size]
    }

    pub fn attention(&self, layer: usize, head: usize) -> &[R] {
        let s2 = self.seq_len * self.seq_len;
        let start = (layer * self.n_heads + head) * s2;
        &self.attentions[start..start + s2]
    }
}

/// Softmax of the logits at position `t`.
pub fn softmax_position<R: Real>(out: &ForwardOut<R>, t: usize) -> Result<Vec<R>> {
    if t >= out.seq_len {
        return Err(Error::PositionOutOfRange { pos: t, len: out.seq_len });
    }
    let mut p = out.logits_row(t).to_vec();
    softmax_in_place(&mut p);
    Ok(p)
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache<R> {
    pub xhat1: Vec<R>,
    pub rstd1: Vec<R>,
    pub h1: Vec<R>,
    pub q: Vec<R>,
    pub k: Vec<R>,
    pub v: Vec<R>,
    pub probs: Vec<R>,
    pub ctx: Vec<R>,
    pub xhat2: Vec<R>,
    pub rstd2: Vec<R>,
    pub h2: Vec<R>,
    pub u: Vec<R>,
    pub g: Vec<R>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<R> {
    pub(crate) ids: Vec<u32>,
    pub(crate) layers: Vec<LayerCache<R>>,
    pub(crate) xhatf: Vec<R>,
    pub(crate) rstdf: Vec<R>,
    /// Final hidden states, `S × d_model`.
    pub hidden: Vec<R>,
}

impl<R: Real> ForwardCache<R> {
    pub fn seq_len(&self) -> usize {
        self.ids.len()
    }

    /// `n_heads × S × S` attention probabilities of one layer.
    pub fn layer_attention(&self, layer: usize) -> &[R] {
        &self.layers[layer].probs
    }
}

pub(crate) fn layer_norm<R: Real>(
    x: &[R],
    gain: &[R],
    bias: &[R],
    d: usize,
    y: &mut [R],
    xhat: &mut [R],
    rstd: &mut [R],
) {
    let eps = R::from_f64_lossy(LN_EPS);
    let inv_d = R::one() / R::from_usize(d).unwrap();
    for (t, row) in x.chunks_exact(d).enumerate() {
        let mean = row.iter().fold(R::zero(), |s, &v| s + v) * inv_d;
        let var = row.iter().fold(R::zero(), |s, &v| s + (v - mean) * (v - mean)) * inv_d;
        let r = R::one() / (var + eps).sqrt();
        rstd[t] = r;
        let xh = &mut xhat[t * d..(t + 1) * d];
        let yr = &mut y[t * d..(t + 1) * d];
        for i in 0..d {
            xh[i] = (row[i] - mean) * r;
            yr[i] = xh[i] * gain[i] + bias[i];
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

#[inline]
pub(crate) fn gelu<R: Real>(x: R) -> R {
    let c = R::from_f64_lossy(GELU_C);
    let a = R::from_f64_lossy(GELU_A);
    let half = R::from_f64_lossy(0.5);
    half * x * (R::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad<R: Real>(x: R) -> R {
    let c = R::from_f64_lossy(GELU_C);
    let a = R::from_f64_lossy(GELU_A);
    let half = R::from_f64_lossy(0.5);
    let three = R::from_f64_lossy(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (R::one() + t) + half * x * (R::one() - t * t) * c * (R::one() + three * a * x * x)
}

fn add_bias<R: Real>(y: &mut [R], b: &[R]) {
    for row in y.chunks_exact_mut(b.len()) {
        for (v, &bb) in row.iter_mut().zip(b) {
            *v += bb;
        }
    }
}

/// Runs the encoder and keeps everything the backward pass needs. Logits
/// are not computed here; callers project only the rows they need.
pub fn forward_cached<R: Real>(params: &Params<R>, ids: &[u32]) -> Result<ForwardCache<R>> {
    let c = params.config;
    let s = ids.len();
    if s > c.max_seq {
        return Err(Error::SequenceTooLong { len: s, max_seq: c.max_seq });
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= c.vocab_size) {
        return Err(Error::TokenOutOfRange { id: bad, vocab_size: c.vocab_size });
    }
    let (d, f, nh, dh) = (c.d_model, c.d_ff, c.n_heads, c.head_dim());
    let lay = &params.layout;

    let mut x = vec![R::zero(); s * d];
    for (t, &id) in ids.iter().enumerate() {
        let e = params.slice(lay.tok_emb + id as usize * d, d);
        let p = params.slice(lay.pos_emb + t * d, d);
        for i in 0..d {
            x[t * d + i] = e[i] + p[i];
        }
    }

    let scale = R::one() / R::from_usize(dh).unwrap().sqrt();
    let mut layers = Vec::with_capacity(c.n_layers);
    for lo in &lay.layers {
        let LayerOffsets { ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2 } = *lo;
        let mut lc = LayerCache {
            xhat1: vec![R::zero(); s * d],
            rstd1: vec![R::zero(); s],
            h1: vec![R::zero(); s * d],
            q: vec![R::zero(); s * d],
            k: vec![R::zero(); s * d],
            v: vec![R::zero(); s * d],
            probs: vec![R::zero(); nh * s * s],
            ctx: vec![R::zero(); s * d],
            xhat2: vec![R::zero(); s * d],
            rstd2: vec![R::zero(); s],
            h2: vec![R::zero(); s * d],
            u: vec![R::zero(); s * f],
            g: vec![R::zero(); s * f],
        };
        layer_norm(&x, params.slice(ln1_g, d), params.slice(ln1_b, d), d, &mut lc.h1, &mut lc.xhat1, &mut lc.rstd1);
        for (w, b, out) in [(wq, bq, &mut lc.q), (wk, bk, &mut lc.k), (wv, bv, &mut lc.v)] {
            matmul(&lc.h1, params.slice(w, d * d), out, s, d, d, false);
            add_bias(out, params.slice(b, d));
        }
        for h in 0..nh {
            let probs = &mut lc.probs[h * s * s..(h + 1) * s * s];
            // scores = Q_h K_hᵀ · scale
            R::gemm_raw(
                s,
                dh,
                s,
                scale,
                &lc.q[h * dh..],
                d as isize,
                1,
                &lc.k[h * dh..],
                1,
                d as isize,
                R::zero(),
                probs,
                s as isize,
                1,
            );
            for row in probs.chunks_exact_mut(s) {
                softmax_in_place(row);
            }
            // ctx_h = P V_h
            R::gemm_raw(
                s,
                s,
                dh,
                R::one(),
                probs,
                s as isize,
                1,
                &lc.v[h * dh..],
                d as isize,
                1,
                R::zero(),
                &mut lc.ctx[h * dh..],
                d as isize,
                1,
            );
        }
        matmul(&lc.ctx, params.slice(wo, d * d), &mut x, s, d, d, true);
        add_bias(&mut x, params.slice(bo, d));

        layer_norm(&x, params.slice(ln2_g, d), params.slice(ln2_b, d), d, &mut lc.h2, &mut lc.xhat2, &mut lc.rstd2);
        matmul(&lc.h2, params.slice(w1, d * f), &mut lc.u, s, d, f, false);
        add_bias(&mut lc.u, params.slice(b1, f));
        for (g, &u) in lc.g.iter_mut().zip(&lc.u) {
            *g = gelu(u);
        }
        matmul(&lc.g, params.slice(w2, f * d), &mut x, s, f, d, true);
        add_bias(&mut x, params.slice(b2, d));
        layers.push(lc);
    }

    let mut hidden = vec![R::zero(); s * d];
    let mut xhatf = vec![R::zero(); s * d];
    let mut rstdf = vec![R::zero(); s];
    layer_norm(&x, params.slice(lay.lnf_g, d), params.slice(lay.lnf_b, d), d, &mut hidden, &mut xhatf, &mut rstdf);
    Ok(ForwardCache { ids: ids.to_vec(), layers, xhatf, rstdf, hidden })
}

/// Logits for the given rows of `hidden` (`rows.len() × vocab_size`).
pub(crate) fn project_rows<R: Real>(params: &Params<R>, hidden: &[R], rows: &[usize]) -> (Vec<R>, Vec<R>) {
    let (d, v) = (params.config.d_model, params.config.vocab_size);
    let mut sel = Vec::with_capacity(rows.len() * d);
    for &t in rows {
        sel.extend_from_slice(&hidden[t * d..(t + 1) * d]);
    }
    let mut logits = vec![R::zero(); rows.len() * v];
    matmul_a_bt(&sel, params.slice(params.layout.tok_emb, v * d), &mut logits, rows.len(), d, v, false);
    add_bias(&mut logits, params.slice(params.layout.out_bias, v));
    (sel, logits)
}

/// Full forward pass: hidden states, logits at every position, and all
/// attention maps.
pub fn forward<R: Real>(params: &Params<R>, ids: &[u32]) -> Result<ForwardOut<R>> {
    let cache = forward_cached(params, ids)?;
    let s = ids.len();
    let rows: Vec<usize> = (0..s).collect();
    let (_, logits) = project_rows(params, &cache.hidden, &rows);
    let mut attentions = Vec::with_capacity(params.config.n_layers * params.config.n_heads * s * s);
    for l in &cache.layers {
        attentions.extend_from_slice(&l.probs);
    }
    Ok(ForwardOut {
        seq_len: s,
        d_model: params.config.d_model,
        vocab_size: params.config.vocab_size,
        n_layers: params.config.n_layers,
        n_heads: params.config.n_heads,
        hidden: cache.hidden,
        logits,
        attentions,
    })
}
