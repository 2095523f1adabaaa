use super::params::Bound;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Var};

#[derive(Clone, Copy)]
pub struct HeadWeights {
    pub fc: [(Var, Var); 4],
    pub out: (Var, Var),
}

impl HeadWeights {
    pub fn from_bound(p: &Bound) -> Self {
        let l = |n: &str| (p.var(&format!("{n}.w")), p.var(&format!("{n}.b")));
        HeadWeights { fc: [l("fc1"), l("fc2"), l("fc3"), l("fc4")], out: l("out") }
    }
}

fn dense_relu(g: &mut Graph, x: Var, (w, b): (Var, Var)) -> Result<Var> {
    let h = g.matmul(x, w)?;
    let h = g.add_row(h, b)?;
    g.relu(h)
}

/// Token mean → FC1 → FC2 → [‖ clinical] → FC3 → FC4 → linear scalar risk.
pub fn risk_head(g: &mut Graph, encoded: Var, clinical: Option<Var>, w: &HeadWeights) -> Result<Var> {
    let pooled = g.mean_rows(encoded)?;
    let h = dense_relu(g, pooled, w.fc[0])?;
    let h = dense_relu(g, h, w.fc[1])?;
    let h = match clinical {
        Some(c) => {
            if g.value(c).rows() != 1 {
                return Err(Error::shape("risk_head", "clinical input must be a single row"));
            }
            g.concat_cols(&[h, c])?
        }
        None => h,
    };
    let expected = g.value(w.fc[2].0).rows();
    if g.value(h).cols() != expected {
        return Err(Error::shape("risk_head", format!("FC3 expects {expected} inputs, got {}", g.value(h).cols())));
    }
    let h = dense_relu(g, h, w.fc[2])?;
    let h = dense_relu(g, h, w.fc[3])?;
    let r = g.matmul(h, w.out.0)?;
    g.add_row(r, w.out.1)
}
