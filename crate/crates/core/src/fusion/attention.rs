//! Scaled dot-product attention blocks: patch pooling, co-attention and the
//! two-stage dual cross attention.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

/// softmax(Q Kᵀ / √d_k) V, with d_k the key width. Returns (output, weights).
pub fn scaled_dot_attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<(Var, Var)> {
    let dk = g.value(k).cols() as f64;
    let scores = g.matmul_nt(q, k)?;
    let scores = g.scale(scores, 1.0 / dk.sqrt())?;
    let weights = g.softmax_rows(scores)?;
    let out = g.matmul(weights, v)?;
    Ok((out, weights))
}

pub struct Pooled {
    /// `1×latent` patient embedding.
    pub embedding: Var,
    /// `P×P` attention weights.
    pub weights: Var,
}

/// Self-attention over patches followed by sum pooling: Σᵢ Σⱼ softmax(QᵢKⱼᵀ/√d_k) Vⱼ.
pub fn self_attention_pool(g: &mut Graph, z: Var, wq: Var, wk: Var, wv: Var) -> Result<Pooled> {
    let q = g.matmul(z, wq)?;
    let k = g.matmul(z, wk)?;
    let v = g.matmul(z, wv)?;
    let (y, weights) = scaled_dot_attention(g, q, k, v)?;
    let embedding = g.sum_rows(y)?;
    Ok(Pooled { embedding, weights })
}

#[derive(Clone, Copy)]
pub struct CoAttentionWeights {
    pub image_q: Var,
    pub image_k: Var,
    pub image_v: Var,
    pub gene_q: Var,
    pub gene_k: Var,
    pub gene_v: Var,
}

pub struct CoAttention {
    /// image queries attending to genetic keys/values
    pub a_ig: Var,
    /// genetic queries attending to image keys/values
    pub a_gi: Var,
    pub weights_ig: Var,
    pub weights_gi: Var,
}

/// A_IG = softmax(Q_I K_Gᵀ/√d_k) V_G and A_GI = softmax(Q_G K_Iᵀ/√d_k) V_I.
pub fn co_attention(g: &mut Graph, image: Var, genes: Var, w: &CoAttentionWeights) -> Result<CoAttention> {
    let qi = g.matmul(image, w.image_q)?;
    let ki = g.matmul(image, w.image_k)?;
    let vi = g.matmul(image, w.image_v)?;
    let qg = g.matmul(genes, w.gene_q)?;
    let kg = g.matmul(genes, w.gene_k)?;
    let vg = g.matmul(genes, w.gene_v)?;
    let (a_ig, weights_ig) = scaled_dot_attention(g, qi, kg, vg)?;
    let (a_gi, weights_gi) = scaled_dot_attention(g, qg, ki, vi)?;
    Ok(CoAttention { a_ig, a_gi, weights_ig, weights_gi })
}

pub struct DualCross {
    pub d_ig: Var,
    pub d_gi: Var,
    /// softmax weights of C_IG, C_GI, D_IG, D_GI in that order
    pub weights: [Var; 4],
}

/// Stage one crosses the co-attended features with each other:
/// C_IG = softmax(A_IG A_GIᵀ/√d_k) A_IG, C_GI = softmax(A_GI A_IGᵀ/√d_k) A_GI.
/// Stage two re-attends to the original tokens:
/// D_IG = softmax(C_IG Iᵀ/√d_k) I, D_GI = softmax(C_GI Gᵀ/√d_k) G.
///
/// The first stage multiplies an `n_i×n_g` weight matrix by `A_IG` (`n_i` rows), so
/// both sides must have the same token count.
pub fn dual_cross_attention(g: &mut Graph, a_ig: Var, a_gi: Var, image: Var, genes: Var) -> Result<DualCross> {
    let (ni, ng) = (g.value(a_ig).rows(), g.value(a_gi).rows());
    if ni != ng {
        return Err(Error::shape(
            "dual_cross_attention",
            format!("needs equal image and genetic token counts, got {ni} and {ng}"),
        ));
    }
    let (c_ig, w1) = scaled_dot_attention(g, a_ig, a_gi, a_ig)?;
    let (c_gi, w2) = scaled_dot_attention(g, a_gi, a_ig, a_gi)?;
    let (d_ig, w3) = scaled_dot_attention(g, c_ig, image, image)?;
    let (d_gi, w4) = scaled_dot_attention(g, c_gi, genes, genes)?;
    Ok(DualCross { d_ig, d_gi, weights: [w1, w2, w3, w4] })
}
