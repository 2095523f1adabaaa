//! Finite-difference checks of every differentiable block on small random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::fusion::attention::{co_attention, dual_cross_attention, self_attention_pool, CoAttentionWeights};
use crate::fusion::encoder::{transformer_encode, EncoderLayerWeights};
use crate::fusion::vae::{reparameterize, vae_decode, vae_encode, vae_loss};
use crate::fusion::{risk_graph, FusionConfig, ModelParams, PatientVars, VaeParams};
use crate::survival::{cox_loss_node, CoxMode, SurvivalRecord};
use crate::tensor::{check_gradients_many, Graph, Tensor, Var};

/// Relative-error bound the suite is expected to meet at 64-bit precision.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub name: String,
    pub max_rel_error: f64,
    pub n_coords: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn records<R: Rng>(n: usize, rng: &mut R) -> Vec<SurvivalRecord> {
    let mut recs: Vec<SurvivalRecord> = (0..n)
        .map(|_| {
            SurvivalRecord::weighted(
                rng.random_range(1.0..100.0),
                rng.random::<f64>() < 0.5,
                rng.random_range(0.5..3.0),
            )
        })
        .collect();
    recs[0].event = true;
    recs
}

fn scalarize(g: &mut Graph, x: Var, probe: &Tensor) -> Result<Var> {
    let p = g.constant(probe.clone());
    let y = g.mul(x, p)?;
    g.sum(y)
}

fn run<F>(name: &str, inputs: &[Tensor], f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let r = check_gradients_many(f, inputs, STEP)?;
    Ok(GradReport { name: name.into(), max_rel_error: r.max_rel_error, n_coords: r.n_coords })
}

/// Runs every check on the tiny configuration.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = FusionConfig::tiny();
    let mut out = Vec::new();

    let n = 10;
    let recs = records(n, &mut rng);
    let risks = Tensor::randn(n, 1, 1.0, &mut rng);
    out.push(run("weighted_cox_loss", std::slice::from_ref(&risks), |g, v| {
        cox_loss_node(g, v[0], &recs, CoxMode::TimeSorted)
    })?);

    let d = cfg.token_dim;
    let probe_pool = Tensor::randn(1, cfg.latent_dim, 1.0, &mut rng);
    let pool_in = vec![
        Tensor::randn(cfg.patches_per_patient, cfg.latent_dim, 1.0, &mut rng),
        Tensor::randn(cfg.latent_dim, cfg.pool_key_dim, 0.3, &mut rng),
        Tensor::randn(cfg.latent_dim, cfg.pool_key_dim, 0.3, &mut rng),
        Tensor::randn(cfg.latent_dim, cfg.latent_dim, 0.3, &mut rng),
    ];
    out.push(run("self_attention_pool", &pool_in, |g, v| {
        let p = self_attention_pool(g, v[0], v[1], v[2], v[3])?;
        scalarize(g, p.embedding, &probe_pool)
    })?);

    let (ni, ng) = (3, 3);
    let mut co_in = vec![Tensor::randn(ni, d, 1.0, &mut rng), Tensor::randn(ng, d, 1.0, &mut rng)];
    co_in.extend((0..6).map(|_| Tensor::randn(d, d, 0.4, &mut rng)));
    let probe_ig = Tensor::randn(ni, d, 1.0, &mut rng);
    let probe_gi = Tensor::randn(ng, d, 1.0, &mut rng);
    out.push(run("co_attention", &co_in, |g, v| {
        let w = CoAttentionWeights {
            image_q: v[2],
            image_k: v[3],
            image_v: v[4],
            gene_q: v[5],
            gene_k: v[6],
            gene_v: v[7],
        };
        let co = co_attention(g, v[0], v[1], &w)?;
        let a = scalarize(g, co.a_ig, &probe_ig)?;
        let b = scalarize(g, co.a_gi, &probe_gi)?;
        g.add(a, b)
    })?);

    let dual_in = vec![
        Tensor::randn(ni, d, 1.0, &mut rng),
        Tensor::randn(ng, d, 1.0, &mut rng),
        Tensor::randn(ni, d, 1.0, &mut rng),
        Tensor::randn(ng, d, 1.0, &mut rng),
    ];
    out.push(run("dual_cross_attention", &dual_in, |g, v| {
        let dc = dual_cross_attention(g, v[0], v[1], v[2], v[3])?;
        let a = scalarize(g, dc.d_ig, &probe_ig)?;
        let b = scalarize(g, dc.d_gi, &probe_gi)?;
        g.add(a, b)
    })?);

    let model = ModelParams::init(&cfg, &mut rng);
    let layer_names: Vec<&str> =
        model.store.names().iter().map(String::as_str).filter(|s| s.starts_with("encoder.0.")).collect();
    let mut enc_in = vec![Tensor::randn(ni + ng, d, 1.0, &mut rng)];
    enc_in.extend(layer_names.iter().map(|n| model.store.get(n).expect("listed").map(|w| w + 0.05)));
    let probe_enc = Tensor::randn(ni + ng, d, 1.0, &mut rng);
    out.push(run("transformer_encoder", &enc_in, |g, v| {
        let mut sub = crate::fusion::ParamStore::new();
        for (name, t) in layer_names.iter().zip(&enc_in[1..]) {
            sub.push(*name, t.clone());
        }
        let bound = sub.bind_vars(v[1..].to_vec());
        let layer = EncoderLayerWeights::from_bound(&bound, 0);
        let (y, _) = transformer_encode(g, v[0], &[layer], cfg.n_heads)?;
        scalarize(g, y, &probe_enc)
    })?);

    let vae = VaeParams::init(&cfg, &mut rng);
    let x = Tensor::randn(cfg.patches_per_patient, cfg.concat_dim(), 1.0, &mut rng);
    let eps = Tensor::randn(cfg.patches_per_patient, cfg.latent_dim, 1.0, &mut rng);
    out.push(run("vae_loss", vae.store.tensors(), |g, v| {
        let p = vae.store.bind_vars(v.to_vec());
        let xv = g.constant(x.clone());
        let enc = vae_encode(g, &p, xv)?;
        let e = g.constant(eps.clone());
        let z = reparameterize(g, enc.mu, enc.sigma, e)?;
        let xh = vae_decode(g, &p, z)?;
        vae_loss(g, xv, xh, &enc, cfg.vae_beta)
    })?);

    let batch = 6;
    let recs = records(batch, &mut rng);
    let patients: Vec<(Tensor, Tensor, Tensor)> = (0..batch)
        .map(|_| {
            (
                Tensor::randn(cfg.patches_per_patient, cfg.latent_dim, 1.0, &mut rng),
                Tensor::randn(1, cfg.gene_dim, 1.0, &mut rng),
                Tensor::matrix(
                    1,
                    cfg.clinical_dim,
                    (0..cfg.clinical_dim).map(|_| f64::from(rng.random::<bool>() as u8)).collect(),
                )
                .expect("row"),
            )
        })
        .collect();
    let n_params = model.store.len();
    // Zero-initialized biases can leave a ReLU input at exactly 0, where the loss has
    // no derivative; jitter every parameter so the check runs at a generic point.
    let mut full_in: Vec<Tensor> = model
        .store
        .tensors()
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.data_mut().iter_mut().for_each(|w| *w += 0.1 * rng.sample::<f64, _>(StandardNormal));
            t
        })
        .collect();
    full_in.extend(patients.iter().map(|p| p.0.clone()));
    out.push(run("stage2_forward_with_cox_loss", &full_in, |g, v| {
        let p = model.store.bind_vars(v[..n_params].to_vec());
        let mut risks = Vec::with_capacity(batch);
        for (k, (_, genes, clin)) in patients.iter().enumerate() {
            let vars = PatientVars {
                latent: v[n_params + k],
                genes: g.constant(genes.clone()),
                clinical: g.constant(clin.clone()),
            };
            risks.push(risk_graph(g, &cfg, &p, &vars)?.risk);
        }
        let r = g.concat_rows(&risks)?;
        cox_loss_node(g, r, &recs, CoxMode::TimeSorted)
    })?);
    Ok(out)
}
