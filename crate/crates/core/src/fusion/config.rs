use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which input modalities feed the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modalities {
    pub image: bool,
    pub genetic: bool,
    pub clinical: bool,
}

impl Modalities {
    pub const ALL: Modalities = Modalities { image: true, genetic: true, clinical: true };
    pub const IMAGE_GENETIC: Modalities = Modalities { image: true, genetic: true, clinical: false };
    pub const IMAGE_ONLY: Modalities = Modalities { image: true, genetic: false, clinical: false };
    pub const GENETIC_ONLY: Modalities = Modalities { image: false, genetic: true, clinical: false };

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.image {
            parts.push("imaging");
        }
        if self.genetic {
            parts.push("genetic");
        }
        if self.clinical {
            parts.push("clinical");
        }
        parts.join("+")
    }
}

impl Default for Modalities {
    fn default() -> Self {
        Modalities::ALL
    }
}

/// Architecture hyperparameters shared by both training stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub feat_dim_per_extractor: usize,
    pub n_extractors: usize,
    /// Hidden width of the VAE encoder and decoder.
    pub vae_hidden: usize,
    pub latent_dim: usize,
    pub patches_per_patient: usize,
    pub gene_dim: usize,
    pub clinical_dim: usize,
    /// Query/key width of the patch self-attention pool.
    pub pool_key_dim: usize,
    /// Tokens the pooled image embedding is projected into.
    pub image_tokens: usize,
    /// Tokens the gene vector is projected into.
    pub gene_tokens: usize,
    /// Width of every token entering co-attention and the encoder.
    pub token_dim: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub ffn_hidden: usize,
    /// Output widths of the four fully-connected layers; clinical variables join
    /// the input of the third.
    pub fc_dims: [usize; 4],
    pub vae_beta: f64,
    pub modalities: Modalities,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            feat_dim_per_extractor: 384,
            n_extractors: 3,
            vae_hidden: 512,
            latent_dim: 256,
            patches_per_patient: 500,
            gene_dim: 138,
            clinical_dim: 4,
            pool_key_dim: 256,
            image_tokens: 8,
            gene_tokens: 8,
            token_dim: 64,
            n_heads: 4,
            n_encoder_layers: 2,
            ffn_hidden: 256,
            fc_dims: [256, 128, 64, 32],
            vae_beta: 1.0,
            modalities: Modalities::ALL,
        }
    }
}

impl FusionConfig {
    pub fn concat_dim(&self) -> usize {
        self.feat_dim_per_extractor * self.n_extractors
    }

    /// Clinical width actually consumed by the head.
    pub fn clinical_in(&self) -> usize {
        if self.modalities.clinical {
            self.clinical_dim
        } else {
            0
        }
    }

    pub fn head_dim(&self) -> usize {
        self.token_dim / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("feat_dim_per_extractor", self.feat_dim_per_extractor),
            ("n_extractors", self.n_extractors),
            ("vae_hidden", self.vae_hidden),
            ("latent_dim", self.latent_dim),
            ("patches_per_patient", self.patches_per_patient),
            ("gene_dim", self.gene_dim),
            ("clinical_dim", self.clinical_dim),
            ("pool_key_dim", self.pool_key_dim),
            ("image_tokens", self.image_tokens),
            ("gene_tokens", self.gene_tokens),
            ("token_dim", self.token_dim),
            ("n_heads", self.n_heads),
            ("ffn_hidden", self.ffn_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be ≥ 1")));
        }
        if self.fc_dims.contains(&0) {
            return Err(Error::Config("fc_dims entries must be ≥ 1".into()));
        }
        if !self.token_dim.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "token_dim {} is not divisible by n_heads {}",
                self.token_dim, self.n_heads
            )));
        }
        if !self.modalities.image && !self.modalities.genetic {
            return Err(Error::Config("at least one of the image and genetic modalities is required".into()));
        }
        if self.modalities.image && self.modalities.genetic && self.image_tokens != self.gene_tokens {
            return Err(Error::Config(format!(
                "dual cross attention needs image_tokens ({}) = gene_tokens ({})",
                self.image_tokens, self.gene_tokens
            )));
        }
        if !(self.vae_beta >= 0.0 && self.vae_beta.is_finite()) {
            return Err(Error::Config("vae_beta must be a finite non-negative number".into()));
        }
        Ok(())
    }

    /// The small configuration used by the gradient-check suite.
    pub fn tiny() -> Self {
        FusionConfig {
            feat_dim_per_extractor: 4,
            n_extractors: 2,
            vae_hidden: 8,
            latent_dim: 16,
            patches_per_patient: 4,
            gene_dim: 6,
            clinical_dim: 4,
            pool_key_dim: 8,
            image_tokens: 2,
            gene_tokens: 2,
            token_dim: 8,
            n_heads: 2,
            n_encoder_layers: 1,
            ffn_hidden: 16,
            fc_dims: [8, 8, 6, 4],
            vae_beta: 1.0,
            modalities: Modalities::ALL,
        }
    }
}
