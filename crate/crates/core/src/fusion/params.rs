use std::collections::HashMap;

use rand::Rng;

use super::FusionConfig;
use crate::data::GeneScaler;
use crate::tensor::{Graph, Tensor, Var};

/// Named, ordered collection of parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Places every tensor on the graph, as trainable leaves or as constants.
    pub fn bind<'a>(&'a self, g: &mut Graph, trainable: bool) -> Bound<'a> {
        let vars =
            self.tensors.iter().map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) }).collect();
        Bound { store: self, vars }
    }

    /// Name lookup over handles created elsewhere, one per tensor in store order.
    pub fn bind_vars(&self, vars: Vec<Var>) -> Bound<'_> {
        assert_eq!(vars.len(), self.len(), "one handle per parameter tensor");
        Bound { store: self, vars }
    }
}

/// Graph handles for a [`ParamStore`], looked up by name.
pub struct Bound<'a> {
    store: &'a ParamStore,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn var(&self, name: &str) -> Var {
        let i = self.store.position(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Uniform in ±√(6 / (fan_in + fan_out)).
pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(fan_in, fan_out, bound, rng)
}

fn linear<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) {
    store.push(format!("{name}.w"), glorot(fan_in, fan_out, rng));
    store.push(format!("{name}.b"), Tensor::zeros(1, fan_out));
}

/// Stage-1 variational autoencoder weights.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeParams {
    pub store: ParamStore,
}

impl VaeParams {
    pub fn init<R: Rng + ?Sized>(cfg: &FusionConfig, rng: &mut R) -> Self {
        let mut s = ParamStore::new();
        let (x, h, z) = (cfg.concat_dim(), cfg.vae_hidden, cfg.latent_dim);
        linear(&mut s, "enc.hidden", x, h, rng);
        linear(&mut s, "enc.mu", h, z, rng);
        linear(&mut s, "enc.log_sigma", h, z, rng);
        linear(&mut s, "dec.hidden", z, h, rng);
        linear(&mut s, "dec.out", h, x, rng);
        VaeParams { store: s }
    }
}

/// Stage-2 fusion network weights plus the gene standardization fitted on the
/// training fold.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub store: ParamStore,
    pub gene_scaler: Option<GeneScaler>,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(cfg: &FusionConfig, rng: &mut R) -> Self {
        let mut s = ParamStore::new();
        let d = cfg.token_dim;
        let m = cfg.modalities;
        if m.image {
            s.push("pool.wq", glorot(cfg.latent_dim, cfg.pool_key_dim, rng));
            s.push("pool.wk", glorot(cfg.latent_dim, cfg.pool_key_dim, rng));
            s.push("pool.wv", glorot(cfg.latent_dim, cfg.latent_dim, rng));
            linear(&mut s, "image_tokens", cfg.latent_dim, cfg.image_tokens * d, rng);
        }
        if m.genetic {
            linear(&mut s, "gene_tokens", cfg.gene_dim, cfg.gene_tokens * d, rng);
        }
        if m.image && m.genetic {
            for side in ["image", "gene"] {
                for p in ["wq", "wk", "wv"] {
                    s.push(format!("coattn.{side}.{p}"), glorot(d, d, rng));
                }
            }
        }
        for l in 0..cfg.n_encoder_layers {
            for p in ["wq", "wk", "wv", "wo"] {
                s.push(format!("encoder.{l}.{p}"), glorot(d, d, rng));
            }
            s.push(format!("encoder.{l}.ln1.gain"), Tensor::filled(1, d, 1.0));
            s.push(format!("encoder.{l}.ln1.bias"), Tensor::zeros(1, d));
            linear(&mut s, &format!("encoder.{l}.ffn1"), d, cfg.ffn_hidden, rng);
            linear(&mut s, &format!("encoder.{l}.ffn2"), cfg.ffn_hidden, d, rng);
            s.push(format!("encoder.{l}.ln2.gain"), Tensor::filled(1, d, 1.0));
            s.push(format!("encoder.{l}.ln2.bias"), Tensor::zeros(1, d));
        }
        let [f1, f2, f3, f4] = cfg.fc_dims;
        linear(&mut s, "fc1", d, f1, rng);
        linear(&mut s, "fc2", f1, f2, rng);
        linear(&mut s, "fc3", f2 + cfg.clinical_in(), f3, rng);
        linear(&mut s, "fc4", f3, f4, rng);
        linear(&mut s, "out", f4, 1, rng);
        ModelParams { store: s, gene_scaler: None }
    }
}
