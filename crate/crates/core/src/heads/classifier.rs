use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{uniform, Bound, Matrix, ParamId, ParamStore, Rng, Tape, Var, DEFAULT_LEAKY_SLOPE};

/// Predictions are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Caption,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Classify => "classify",
            Self::Caption => "caption",
        })
    }
}

/// Two affine layers with a LeakyReLU between and a sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub slope: f64,
}

impl ClassifierHead {
    pub fn register(store: &mut ParamStore, prefix: &str, d_in: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let b_in = 1.0 / (d_in as f64).sqrt();
        let b_hid = 1.0 / (hidden as f64).sqrt();
        Ok(Self {
            w1: store.register(format!("{prefix}.w1"), uniform(d_in, hidden, b_in, rng))?,
            b1: store.register(format!("{prefix}.b1"), uniform(1, hidden, b_in, rng))?,
            w2: store.register(format!("{prefix}.w2"), uniform(hidden, 1, b_hid, rng))?,
            b2: store.register(format!("{prefix}.b2"), uniform(1, 1, b_hid, rng))?,
            slope: DEFAULT_LEAKY_SLOPE,
        })
    }

    /// Clamped probability for each row of `x`.
    pub fn forward<'t>(&self, bound: &Bound<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let hidden = x.matmul(bound.get(self.w1))?.add(bound.get(self.b1))?.leaky_relu(self.slope);
        let logit = hidden.matmul(bound.get(self.w2))?.add(bound.get(self.b2))?;
        Ok(logit.sigmoid().clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
    }

    pub fn classify(&self, store: &ParamStore, x: &Matrix) -> Result<f64> {
        let tape = Tape::new();
        let bound = store.bind(&tape);
        self.forward(&bound, tape.leaf(x.clone()))?.value().item()
    }
}

/// Mean binary cross-entropy over a batch of N x 1 predictions.
pub fn bce_loss_var<'t>(preds: Var<'t>, labels: &[bool]) -> Result<Var<'t>> {
    let (n, c) = preds.shape();
    if n == 0 {
        return Err(Error::Contract("BCE over an empty batch".into()));
    }
    if c != 1 || labels.len() != n {
        return Err(Error::Dimension(format!("{n}x{c} predictions for {} labels", labels.len())));
    }
    let y = Matrix::new(n, 1, labels.iter().map(|&l| f64::from(u8::from(l))).collect())?;
    let one_minus_y = y.map(|v| 1.0 - v);
    let pos = preds.constant(y).mul(preds.log()?)?;
    let neg = preds.constant(one_minus_y).mul(preds.scale(-1.0)?.add_scalar(1.0)?.log()?)?;
    pos.add(neg)?.mean().scale(-1.0)
}

pub fn bce_loss(preds: &[f64], labels: &[bool]) -> Result<f64> {
    let tape = Tape::new();
    let p = tape.leaf(Matrix::new(preds.len(), 1, preds.to_vec())?);
    bce_loss_var(p, labels)?.value().item()
}

/// `task + lambda_clu * clu`.
pub fn total_loss_var<'t>(task: Var<'t>, clu: Var<'t>, lambda_clu: f64) -> Result<Var<'t>> {
    task.add(clu.scale(lambda_clu)?)
}

pub fn total_loss(task: f64, clu: f64, lambda_clu: f64) -> f64 {
    task + lambda_clu * clu
}
