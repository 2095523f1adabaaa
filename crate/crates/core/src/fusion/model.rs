//! Full stage-2 forward pass: patch pooling → token projections → co-attention →
//! dual cross attention → transformer encoder → risk head.

use super::attention::{co_attention, dual_cross_attention, self_attention_pool, CoAttentionWeights};
use super::encoder::{transformer_encode, EncoderLayerWeights};
use super::head::{risk_head, HeadWeights};
use super::params::{Bound, ModelParams, VaeParams};
use super::vae::vae_encode;
use super::FusionConfig;
use crate::data::{GeneScaler, PatientBundle};
use crate::error::{Error, Result, StageContext};
use crate::tensor::{Graph, Tensor, Var};

/// Graph handles for one patient's inputs. Inputs of disabled modalities are ignored.
#[derive(Clone, Copy, Debug)]
pub struct PatientVars {
    /// `P×latent` patch latents.
    pub latent: Var,
    /// `1×gene_dim`, already scaled.
    pub genes: Var,
    /// `1×clinical_dim`.
    pub clinical: Var,
}

pub struct RiskOutput {
    /// `1×1` risk score.
    pub risk: Var,
    /// Every softmax weight matrix produced on the way.
    pub attention: Vec<Var>,
}

fn project_tokens(g: &mut Graph, x: Var, w: Var, b: Var, tokens: usize, width: usize) -> Result<Var> {
    let h = g.matmul(x, w)?;
    let h = g.add_row(h, b)?;
    g.reshape(h, tokens, width)
}

/// Builds the risk for one patient on `g`.
pub fn risk_graph(g: &mut Graph, cfg: &FusionConfig, p: &Bound, x: &PatientVars) -> Result<RiskOutput> {
    let m = cfg.modalities;
    let d = cfg.token_dim;
    let mut attention = Vec::new();

    let image = if m.image {
        let pooled = self_attention_pool(g, x.latent, p.var("pool.wq"), p.var("pool.wk"), p.var("pool.wv"))
            .stage("patch pooling")?;
        attention.push(pooled.weights);
        let t =
            project_tokens(g, pooled.embedding, p.var("image_tokens.w"), p.var("image_tokens.b"), cfg.image_tokens, d)
                .stage("image tokens")?;
        Some(t)
    } else {
        None
    };
    let genes = if m.genetic {
        let t = project_tokens(g, x.genes, p.var("gene_tokens.w"), p.var("gene_tokens.b"), cfg.gene_tokens, d)
            .stage("gene tokens")?;
        Some(t)
    } else {
        None
    };

    let sequence = match (image, genes) {
        (Some(i), Some(gt)) => {
            let w = CoAttentionWeights {
                image_q: p.var("coattn.image.wq"),
                image_k: p.var("coattn.image.wk"),
                image_v: p.var("coattn.image.wv"),
                gene_q: p.var("coattn.gene.wq"),
                gene_k: p.var("coattn.gene.wk"),
                gene_v: p.var("coattn.gene.wv"),
            };
            let co = co_attention(g, i, gt, &w).stage("co-attention")?;
            attention.extend([co.weights_ig, co.weights_gi]);
            let dual = dual_cross_attention(g, co.a_ig, co.a_gi, i, gt).stage("dual cross attention")?;
            attention.extend(dual.weights);
            g.concat_rows(&[dual.d_ig, dual.d_gi]).stage("token concatenation")?
        }
        (Some(t), None) | (None, Some(t)) => t,
        (None, None) => return Err(Error::Config("no image or genetic modality enabled".into())),
    };

    let layers: Vec<EncoderLayerWeights> =
        (0..cfg.n_encoder_layers).map(|l| EncoderLayerWeights::from_bound(p, l)).collect();
    let (encoded, enc_weights) = transformer_encode(g, sequence, &layers, cfg.n_heads).stage("transformer encoder")?;
    attention.extend(enc_weights);

    let clinical = m.clinical.then_some(x.clinical);
    let risk = risk_head(g, encoded, clinical, &HeadWeights::from_bound(p)).stage("risk head")?;
    Ok(RiskOutput { risk, attention })
}

/// Precomputed network inputs for one patient: patch latents (z = μ), scaled genes
/// and clinical values.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientInput {
    pub latent: Tensor,
    pub genes: Vec<f64>,
    pub clinical: Vec<f64>,
}

impl PatientInput {
    /// Places the inputs on `g` as constants.
    pub fn bind(&self, g: &mut Graph) -> Result<PatientVars> {
        Ok(PatientVars {
            latent: g.constant(self.latent.clone()),
            genes: g.constant(Tensor::row_vector(self.genes.clone())?),
            clinical: g.constant(Tensor::row_vector(self.clinical.clone())?),
        })
    }
}

/// Deterministic patch latents μ for a `P×concat_dim` feature matrix.
pub fn encode_patches(vae: &VaeParams, features: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = vae.store.bind(&mut g, false);
    let x = g.constant(features.clone());
    let enc = vae_encode(&mut g, &p, x).stage("vae encoder")?;
    Ok(g.value(enc.mu).clone())
}

fn check_dims(bundle: &PatientBundle, cfg: &FusionConfig) -> Result<()> {
    let bad = |what: String| Err(Error::shape("forward", format!("patient {}: {what}", bundle.id)));
    if bundle.patch_features.cols() != cfg.concat_dim() {
        return bad(format!("{} feature columns, expected {}", bundle.patch_features.cols(), cfg.concat_dim()));
    }
    if bundle.genes.len() != cfg.gene_dim {
        return bad(format!("{} genes, expected {}", bundle.genes.len(), cfg.gene_dim));
    }
    if bundle.clinical.values.len() != cfg.clinical_dim {
        return bad(format!("{} clinical values, expected {}", bundle.clinical.values.len(), cfg.clinical_dim));
    }
    Ok(())
}

/// Encodes a bundle into network inputs using the frozen VAE and an optional gene scaler.
pub fn prepare_input(
    bundle: &PatientBundle,
    vae: &VaeParams,
    gene_scaler: Option<&GeneScaler>,
    cfg: &FusionConfig,
) -> Result<PatientInput> {
    check_dims(bundle, cfg)?;
    let latent = encode_patches(vae, &bundle.patch_features)?;
    let genes = match gene_scaler {
        Some(s) => s.apply(&bundle.genes)?,
        None => bundle.genes.clone(),
    };
    Ok(PatientInput { latent, genes, clinical: bundle.clinical.values.clone() })
}

/// Risk, attention maps and matmul FLOPs of one inference pass.
pub struct ForwardTrace {
    pub risk: f64,
    pub attention: Vec<Tensor>,
    pub flops: u64,
}

pub fn predict_traced(input: &PatientInput, model: &ModelParams, cfg: &FusionConfig) -> Result<ForwardTrace> {
    let mut g = Graph::new();
    let p = model.store.bind(&mut g, false);
    let vars = input.bind(&mut g)?;
    let out = risk_graph(&mut g, cfg, &p, &vars)?;
    Ok(ForwardTrace {
        risk: g.value(out.risk).item(),
        attention: out.attention.iter().map(|&a| g.value(a).clone()).collect(),
        flops: g.matmul_flops(),
    })
}

pub fn predict(input: &PatientInput, model: &ModelParams, cfg: &FusionConfig) -> Result<f64> {
    Ok(predict_traced(input, model, cfg)?.risk)
}

/// End-to-end inference for one patient with z = μ.
pub fn forward(bundle: &PatientBundle, vae: &VaeParams, model: &ModelParams, cfg: &FusionConfig) -> Result<f64> {
    let input = prepare_input(bundle, vae, model.gene_scaler.as_ref(), cfg)?;
    predict(&input, model, cfg)
}

/// Multiply-accumulate FLOPs (2·m·k·n per matmul) of one full forward pass,
/// VAE encoder included.
pub fn forward_flops(cfg: &FusionConfig, vae: &VaeParams, model: &ModelParams) -> Result<u64> {
    let mut g = Graph::new();
    let pv = vae.store.bind(&mut g, false);
    let x = g.constant(Tensor::zeros(cfg.patches_per_patient, cfg.concat_dim()));
    let enc = vae_encode(&mut g, &pv, x)?;
    let pm = model.store.bind(&mut g, false);
    let vars = PatientVars {
        latent: enc.mu,
        genes: g.constant(Tensor::zeros(1, cfg.gene_dim)),
        clinical: g.constant(Tensor::zeros(1, cfg.clinical_dim)),
    };
    risk_graph(&mut g, cfg, &pm, &vars)?;
    // The log σ head is part of the encoder but does not feed inference.
    let log_sigma_w = vae.store.get("enc.log_sigma.w").expect("vae has a log σ head");
    Ok(g.matmul_flops() - 2 * (cfg.patches_per_patient * log_sigma_w.rows() * log_sigma_w.cols()) as u64)
}
