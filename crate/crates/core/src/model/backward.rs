use alloc::vec;
use alloc::vec::Vec;

use super::forward::{gelu_grad, ForwardCache};
use super::{LayerOffsets, Params};
use crate::real::{matmul, matmul_a_bt, matmul_at_b, Real};

/// Layer-norm backward for rows of width `d`; accumulates into `dx`,
/// `dgain`, `dbias`.
fn layer_norm_back<R: Real>(
    dy: &[R],
    xhat: &[R],
    rstd: &[R],
    gain: &[R],
    d: usize,
    dx: &mut [R],
    dgain: &mut [R],
    dbias: &mut [R],
) {
    let inv_d = R::one() / R::from_usize(d).unwrap();
    let mut dxhat = vec![R::zero(); d];
    for (t, (dy_row, xh)) in dy.chunks_exact(d).zip(xhat.chunks_exact(d)).enumerate() {
        let mut mean_dxhat = R::zero();
        let mut mean_dxhat_xhat = R::zero();
        for i in 0..d {
            dgain[i] += dy_row[i] * xh[i];
            dbias[i] += dy_row[i];
            dxhat[i] = dy_row[i] * gain[i];
            mean_dxhat += dxhat[i];
            mean_dxhat_xhat += dxhat[i] * xh[i];
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let r = rstd[t];
        let dx_row = &mut dx[t * d..(t + 1) * d];
        for i in 0..d {
            dx_row[i] += r * (dxhat[i] - mean_dxhat - xh[i] * mean_dxhat_xhat);
        }
    }
}

fn sum_rows_into<R: Real>(m: &[R], width: usize, out: &mut [R]) {
    for row in m.chunks_exact(width) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Split a flat gradient buffer into disjoint tensor slices by offset.
fn two_mut<R>(buf: &mut [R], a: (usize, usize), b: (usize, usize)) -> (&mut [R], &mut [R]) {
    debug_assert!(a.0 + a.1 <= b.0);
    let (left, right) = buf.split_at_mut(b.0);
    (&mut left[a.0..a.0 + a.1], &mut right[..b.1])
}

/// Backpropagates `dhidden` (gradient of the loss w.r.t. the final hidden
/// states, `S × d_model`) through the encoder, accumulating into `grad`
/// (same layout as `params.data`). The MLM head's own contribution to the
/// tied embedding and output bias is added by the caller.
pub fn backward<R: Real>(params: &Params<R>, cache: &ForwardCache<R>, dhidden: &[R], grad: &mut [R]) {
    let c = params.config;
    let lay = &params.layout;
    let s = cache.ids.len();
    let (d, f, nh, dh) = (c.d_model, c.d_ff, c.n_heads, c.head_dim());
    assert_eq!(dhidden.len(), s * d);
    assert_eq!(grad.len(), params.data.len());
    if s == 0 {
        return;
    }

    let mut dx = vec![R::zero(); s * d];
    {
        let (dg, db) = two_mut(grad, (lay.lnf_g, d), (lay.lnf_b, d));
        layer_norm_back(dhidden, &cache.xhatf, &cache.rstdf, params.slice(lay.lnf_g, d), d, &mut dx, dg, db);
    }

    let scale = R::one() / R::from_usize(dh).unwrap().sqrt();
    let mut dg = vec![R::zero(); s * f];
    let mut dh2 = vec![R::zero(); s * d];
    let mut dctx = vec![R::zero(); s * d];
    let mut dq = vec![R::zero(); s * d];
    let mut dk = vec![R::zero(); s * d];
    let mut dv = vec![R::zero(); s * d];
    let mut dh1 = vec![R::zero(); s * d];
    let mut dprobs = vec![R::zero(); s * s];

    for (lo, lc) in lay.layers.iter().zip(&cache.layers).rev() {
        let LayerOffsets { ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2 } = *lo;

        // feed-forward block: x += gelu(h2 W1 + b1) W2 + b2
        matmul_at_b(&lc.g, &dx, &mut grad[w2..w2 + f * d], s, f, d);
        sum_rows_into(&dx, d, &mut grad[b2..b2 + d]);
        matmul_a_bt(&dx, params.slice(w2, f * d), &mut dg, s, d, f, false);
        for (g, &u) in dg.iter_mut().zip(&lc.u) {
            *g *= gelu_grad(u);
        }
        matmul_at_b(&lc.h2, &dg, &mut grad[w1..w1 + d * f], s, d, f);
        sum_rows_into(&dg, f, &mut grad[b1..b1 + f]);
        matmul_a_bt(&dg, params.slice(w1, d * f), &mut dh2, s, f, d, false);
        {
            let (gg, gb) = two_mut(grad, (ln2_g, d), (ln2_b, d));
            layer_norm_back(&dh2, &lc.xhat2, &lc.rstd2, params.slice(ln2_g, d), d, &mut dx, gg, gb);
        }

        // attention block: x += ctx Wo + bo
        matmul_at_b(&lc.ctx, &dx, &mut grad[wo..wo + d * d], s, d, d);
        sum_rows_into(&dx, d, &mut grad[bo..bo + d]);
        matmul_a_bt(&dx, params.slice(wo, d * d), &mut dctx, s, d, d, false);

        for h in 0..nh {
            let probs = &lc.probs[h * s * s..(h + 1) * s * s];
            // dP = dctx_h V_hᵀ
            R::gemm_raw(s, dh, s, R::one(), &dctx[h * dh..], d as isize, 1, &lc.v[h * dh..], 1, d as isize, R::zero(), &mut dprobs, s as isize, 1);
            // dV_h = Pᵀ dctx_h
            R::gemm_raw(s, s, dh, R::one(), probs, 1, s as isize, &dctx[h * dh..], d as isize, 1, R::zero(), &mut dv[h * dh..], d as isize, 1);
            // softmax backward, folded with the score scale
            for (prow, drow) in probs.chunks_exact(s).zip(dprobs.chunks_exact_mut(s)) {
                let inner = prow.iter().zip(drow.iter()).fold(R::zero(), |acc, (&p, &g)| acc + p * g);
                for (g, &p) in drow.iter_mut().zip(prow) {
                    *g = p * (*g - inner) * scale;
                }
            }
            // dQ_h = dS K_h ; dK_h = dSᵀ Q_h
            R::gemm_raw(s, s, dh, R::one(), &dprobs, s as isize, 1, &lc.k[h * dh..], d as isize, 1, R::zero(), &mut dq[h * dh..], d as isize, 1);
            R::gemm_raw(s, s, dh, R::one(), &dprobs, 1, s as isize, &lc.q[h * dh..], d as isize, 1, R::zero(), &mut dk[h * dh..], d as isize, 1);
        }

        let mut first = true;
        for (w, b, dproj) in [(wq, bq, &dq), (wk, bk, &dk), (wv, bv, &dv)] {
            matmul_at_b(&lc.h1, dproj, &mut grad[w..w + d * d], s, d, d);
            sum_rows_into(dproj, d, &mut grad[b..b + d]);
            matmul_a_bt(dproj, params.slice(w, d * d), &mut dh1, s, d, d, !first);
            first = false;
        }
        {
            let (gg, gb) = two_mut(grad, (ln1_g, d), (ln1_b, d));
            layer_norm_back(&dh1, &lc.xhat1, &lc.rstd1, params.slice(ln1_g, d), d, &mut dx, gg, gb);
        }
    }

    for (t, &id) in cache.ids.iter().enumerate() {
        let row = &dx[t * d..(t + 1) * d];
        let te = lay.tok_emb + id as usize * d;
        for (g, &v) in grad[te..te + d].iter_mut().zip(row) {
            *g += v;
        }
        let pe = lay.pos_emb + t * d;
        for (g, &v) in grad[pe..pe + d].iter_mut().zip(row) {
            *g += v;
        }
    }
}

/// Head contribution for selected rows: given `dlogits` (`rows × V`) and
/// the selected hidden rows, accumulates into the tied embedding and
/// output bias and returns `dhidden` for the full sequence.
pub(crate) fn head_backward<R: Real>(
    params: &Params<R>,
    seq_len: usize,
    rows: &[usize],
    selected_hidden: &[R],
    dlogits: &[R],
    grad: &mut [R],
) -> Vec<R> {
    let (d, v) = (params.config.d_model, params.config.vocab_size);
    let lay = &params.layout;
    let n = rows.len();
    sum_rows_into(dlogits, v, &mut grad[lay.out_bias..lay.out_bias + v]);
    // dE += dlogitsᵀ H_sel
    matmul_at_b(dlogits, selected_hidden, &mut grad[lay.tok_emb..lay.tok_emb + v * d], n, v, d);
    let mut dsel = vec![R::zero(); n * d];
    matmul(dlogits, params.slice(lay.tok_emb, v * d), &mut dsel, n, v, d, false);
    let mut dhidden = vec![R::zero(); seq_len * d];
    for (i, &t) in rows.iter().enumerate() {
        for (o, &g) in dhidden[t * d..(t + 1) * d].iter_mut().zip(&dsel[i * d..(i + 1) * d]) {
            *o += g;
        }
    }
    dhidden
}
