use super::params::Bound;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

pub struct Encoding {
    pub mu: Var,
    pub log_sigma: Var,
    /// exp(log σ), strictly positive
    pub sigma: Var,
}

fn dense(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let h = g.matmul(x, w)?;
    g.add_row(h, b)
}

/// (μ, σ) for every patch row of `x`.
pub fn vae_encode(g: &mut Graph, p: &Bound, x: Var) -> Result<Encoding> {
    let h = dense(g, x, p.var("enc.hidden.w"), p.var("enc.hidden.b"))?;
    let h = g.relu(h)?;
    let mu = dense(g, h, p.var("enc.mu.w"), p.var("enc.mu.b"))?;
    let log_sigma = dense(g, h, p.var("enc.log_sigma.w"), p.var("enc.log_sigma.b"))?;
    let sigma = g.exp(log_sigma)?;
    Ok(Encoding { mu, log_sigma, sigma })
}

pub fn vae_decode(g: &mut Graph, p: &Bound, z: Var) -> Result<Var> {
    let h = dense(g, z, p.var("dec.hidden.w"), p.var("dec.hidden.b"))?;
    let h = g.relu(h)?;
    dense(g, h, p.var("dec.out.w"), p.var("dec.out.b"))
}

/// z = μ + σ ⊙ ε
pub fn reparameterize(g: &mut Graph, mu: Var, sigma: Var, eps: Var) -> Result<Var> {
    let noise = g.mul(sigma, eps)?;
    g.add(mu, noise)
}

/// mean((x̂ − x)²) + β · mean over patches of Σ_dims ½(σ² + μ² − 1 − log σ²).
pub fn vae_loss(g: &mut Graph, x: Var, x_hat: Var, enc: &Encoding, beta: f64) -> Result<Var> {
    let diff = g.sub(x_hat, x)?;
    let sq = g.mul(diff, diff)?;
    let mse = g.mean(sq)?;
    if beta == 0.0 {
        return Ok(mse);
    }
    let patches = g.value(enc.mu).rows() as f64;
    let s2 = g.mul(enc.sigma, enc.sigma)?;
    let m2 = g.mul(enc.mu, enc.mu)?;
    let t = g.add(s2, m2)?;
    let two_log = g.scale(enc.log_sigma, 2.0)?;
    let t = g.sub(t, two_log)?;
    let t = g.add_scalar(t, -1.0)?;
    let kl = g.sum(t)?;
    let kl = g.scale(kl, 0.5 / patches)?;
    let kl = g.scale(kl, beta)?;
    g.add(mse, kl)
}

/// The same objective evaluated directly from σ, without a graph.
pub fn vae_loss_value(x: &Tensor, x_hat: &Tensor, mu: &Tensor, sigma: &Tensor, beta: f64) -> Result<f64> {
    if x.shape() != x_hat.shape() || mu.shape() != sigma.shape() {
        return Err(Error::shape("vae_loss", "reconstruction or latent shapes differ"));
    }
    if sigma.data().iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Numeric("σ must be strictly positive".into()));
    }
    let mse = x.data().iter().zip(x_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    let kl: f64 =
        mu.data().iter().zip(sigma.data()).map(|(m, s)| 0.5 * (s * s + m * m - 1.0 - (s * s).ln())).sum::<f64>()
            / mu.rows() as f64;
    Ok(mse + beta * kl)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, d: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, d.to_vec()).unwrap()
    }

    #[test]
    fn perfect_reconstruction_at_prior_is_zero() {
        let x = t(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let l = vae_loss_value(&x, &x, &Tensor::zeros(2, 2), &Tensor::filled(2, 2, 1.0), 0.7).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn unit_mean_single_dim_costs_half_beta() {
        let x = t(1, 2, &[1.0, 2.0]);
        let l = vae_loss_value(&x, &x, &t(1, 1, &[1.0]), &t(1, 1, &[1.0]), 0.3).unwrap();
        assert!((l - 0.15).abs() < 1e-15);
    }

    #[test]
    fn beta_zero_is_mse() {
        let x = t(1, 2, &[1.0, 2.0]);
        let xh = t(1, 2, &[1.5, 1.0]);
        let l = vae_loss_value(&x, &xh, &t(1, 1, &[3.0]), &t(1, 1, &[0.2]), 0.0).unwrap();
        assert!((l - (0.25 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_sigma_is_rejected() {
        let x = t(1, 1, &[1.0]);
        assert!(vae_loss_value(&x, &x, &x, &t(1, 1, &[0.0]), 1.0).is_err());
    }

    #[test]
    fn graph_loss_matches_direct_value() {
        let x = t(2, 2, &[0.3, -0.1, 1.2, 0.5]);
        let xh = t(2, 2, &[0.2, 0.0, 1.0, 0.9]);
        let mu = t(2, 3, &[0.1, -0.4, 0.9, 0.0, 0.3, -1.1]);
        let ls = t(2, 3, &[-0.2, 0.1, 0.05, 0.4, -0.7, 0.0]);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let xhv = g.constant(xh.clone());
        let muv = g.constant(mu.clone());
        let lsv = g.constant(ls.clone());
        let sv = g.exp(lsv).unwrap();
        let enc = Encoding { mu: muv, log_sigma: lsv, sigma: sv };
        let l = vae_loss(&mut g, xv, xhv, &enc, 0.8).unwrap();
        let direct = vae_loss_value(&x, &xh, &mu, &ls.map(f64::exp), 0.8).unwrap();
        assert!((g.value(l).item() - direct).abs() < 1e-14);
    }

    #[test]
    fn reparameterize_arithmetic() {
        let mut g = Graph::new();
        let mu = g.constant(Tensor::scalar(1.0));
        let s = g.constant(Tensor::scalar(2.0));
        let e = g.constant(Tensor::scalar(0.5));
        let z = reparameterize(&mut g, mu, s, e).unwrap();
        assert_eq!(g.value(z).item(), 2.0);
        let zero = g.constant(Tensor::scalar(0.0));
        let z = reparameterize(&mut g, mu, s, zero).unwrap();
        assert_eq!(g.value(z).item(), 1.0);
        let z = reparameterize(&mut g, mu, zero, e).unwrap();
        assert_eq!(g.value(z).item(), 1.0);
    }
}
