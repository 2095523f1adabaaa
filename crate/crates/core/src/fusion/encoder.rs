use super::attention::scaled_dot_attention;
use super::params::Bound;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

#[derive(Clone, Copy)]
pub struct EncoderLayerWeights {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub ffn1_w: Var,
    pub ffn1_b: Var,
    pub ffn2_w: Var,
    pub ffn2_b: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
}

impl EncoderLayerWeights {
    pub fn from_bound(p: &Bound, layer: usize) -> Self {
        let v = |s: &str| p.var(&format!("encoder.{layer}.{s}"));
        EncoderLayerWeights {
            wq: v("wq"),
            wk: v("wk"),
            wv: v("wv"),
            wo: v("wo"),
            ln1_gain: v("ln1.gain"),
            ln1_bias: v("ln1.bias"),
            ffn1_w: v("ffn1.w"),
            ffn1_b: v("ffn1.b"),
            ffn2_w: v("ffn2.w"),
            ffn2_b: v("ffn2.b"),
            ln2_gain: v("ln2.gain"),
            ln2_bias: v("ln2.bias"),
        }
    }
}

/// Per-head attention over column slices, heads concatenated and projected by W_o.
/// Returns the output and each head's weight matrix.
pub fn multi_head_attention(g: &mut Graph, x: Var, w: &EncoderLayerWeights, n_heads: usize) -> Result<(Var, Vec<Var>)> {
    let width = g.value(x).cols();
    if n_heads == 0 || !width.is_multiple_of(n_heads) {
        return Err(Error::Config(format!("width {width} is not divisible by {n_heads} heads")));
    }
    let q = g.matmul(x, w.wq)?;
    let k = g.matmul(x, w.wk)?;
    let v = g.matmul(x, w.wv)?;
    let dh = width / n_heads;
    let mut heads = Vec::with_capacity(n_heads);
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (a, b) = (h * dh, (h + 1) * dh);
        let (qh, kh, vh) = if n_heads == 1 {
            (q, k, v)
        } else {
            (g.slice_cols(q, a, b)?, g.slice_cols(k, a, b)?, g.slice_cols(v, a, b)?)
        };
        let (out, wts) = scaled_dot_attention(g, qh, kh, vh)?;
        heads.push(out);
        weights.push(wts);
    }
    let cat = if n_heads == 1 { heads[0] } else { g.concat_cols(&heads)? };
    Ok((g.matmul(cat, w.wo)?, weights))
}

/// max(0, x W₁ + b₁) W₂ + b₂
pub fn feed_forward(g: &mut Graph, x: Var, w: &EncoderLayerWeights) -> Result<Var> {
    let h = g.matmul(x, w.ffn1_w)?;
    let h = g.add_row(h, w.ffn1_b)?;
    let h = g.relu(h)?;
    let o = g.matmul(h, w.ffn2_w)?;
    g.add_row(o, w.ffn2_b)
}

/// One post-norm layer: x ← LN(x + MHA(x)); x ← LN(x + FFN(x)).
pub fn encoder_layer(g: &mut Graph, x: Var, w: &EncoderLayerWeights, n_heads: usize) -> Result<(Var, Vec<Var>)> {
    let (attn, weights) = multi_head_attention(g, x, w, n_heads)?;
    let r1 = g.add(x, attn)?;
    let x1 = g.layer_norm(r1, w.ln1_gain, w.ln1_bias)?;
    let ff = feed_forward(g, x1, w)?;
    let r2 = g.add(x1, ff)?;
    let x2 = g.layer_norm(r2, w.ln2_gain, w.ln2_bias)?;
    Ok((x2, weights))
}

/// Stack of encoder layers; zero layers is the identity.
pub fn transformer_encode(
    g: &mut Graph,
    x: Var,
    layers: &[EncoderLayerWeights],
    n_heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let mut h = x;
    let mut all = Vec::new();
    for w in layers {
        let (next, weights) = encoder_layer(g, h, w, n_heads)?;
        h = next;
        all.extend(weights);
    }
    Ok((h, all))
}
