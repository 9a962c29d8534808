//! A one-block causal decoder conditioned on a single visual prefix.
//!
//! The input sequence is `[v', emb(BOS), emb(C_1), ..., emb(C_T)]` plus
//! learned positions. One multi-head causal self-attention block with a
//! residual connection feeds an affine map to vocabulary logits. Position
//! `t >= 1` predicts the token after it: `C_1, ..., C_T, EOS`.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::vocab::{BOS, EOS};
use crate::error::{Error, Result};
use crate::numerics::{uniform, Bound, Matrix, ParamId, ParamStore, Rng, SeedStream, Tape, Var};

pub const DEFAULT_D_MODEL: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionConfig {
    pub d_model: usize,
    pub heads: usize,
    /// Longest caption (in tokens, EOS excluded) the model accepts or emits.
    pub max_len: usize,
}

impl Default for CaptionConfig {
    fn default() -> Self {
        Self {
            d_model: DEFAULT_D_MODEL,
            heads: 4,
            max_len: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionModel {
    pub w_c: ParamId,
    pub tok: ParamId,
    pub pos: ParamId,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub vocab_size: usize,
    pub config: CaptionConfig,
}

/// Lower-triangular mask over `n` positions.
fn causal_mask(n: usize) -> Arc<Vec<bool>> {
    Arc::new((0..n * n).map(|i| i % n <= i / n).collect())
}

impl CaptionModel {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        d_in: usize,
        vocab_size: usize,
        config: CaptionConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let d = config.d_model;
        if config.heads == 0 || !d.is_multiple_of(config.heads) {
            return Err(Error::Contract(format!("d_model {d} is not divisible into {} heads", config.heads)));
        }
        if vocab_size <= EOS {
            return Err(Error::Contract("vocabulary lacks the special tokens".into()));
        }
        let lin = 1.0 / (d as f64).sqrt();
        let mut reg = |name: &str, m: Matrix| store.register(format!("{prefix}.{name}"), m);
        Ok(Self {
            w_c: reg("w_c", uniform(d_in, d, 1.0 / (d_in as f64).sqrt(), rng))?,
            tok: reg("tok", uniform(vocab_size, d, 0.1, rng))?,
            pos: reg("pos", uniform(config.max_len + 2, d, 0.1, rng))?,
            w_q: reg("w_q", uniform(d, d, lin, rng))?,
            w_k: reg("w_k", uniform(d, d, lin, rng))?,
            w_v: reg("w_v", uniform(d, d, lin, rng))?,
            w_o: reg("w_o", uniform(d, d, lin, rng))?,
            w_out: reg("w_out", uniform(d, vocab_size, lin, rng))?,
            b_out: reg("b_out", Matrix::zeros(1, vocab_size))?,
            vocab_size,
            config,
        })
    }

    /// `v' = h_mean W_c`.
    pub fn project_prefix<'t>(&self, bound: &Bound<'t>, h_mean: Var<'t>) -> Result<Var<'t>> {
        h_mean.matmul(bound.get(self.w_c))
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.len() > self.config.max_len {
            return Err(Error::Contract(format!(
                "caption of {} tokens exceeds max_len {}",
                tokens.len(),
                self.config.max_len
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.vocab_size) {
            return Err(Error::Contract(format!("token id {bad} outside a vocabulary of {}", self.vocab_size)));
        }
        Ok(())
    }

    /// Logits for every position of `[prefix, BOS, tokens...]`.
    pub fn logits<'t>(&self, bound: &Bound<'t>, prefix: Var<'t>, tokens: &[usize]) -> Result<Var<'t>> {
        self.check_tokens(tokens)?;
        let d = self.config.d_model;
        if prefix.shape() != (1, d) {
            return Err(Error::Dimension(format!("prefix is {:?}, expected (1, {d})", prefix.shape())));
        }
        let ids: Vec<usize> = std::iter::once(BOS).chain(tokens.iter().copied()).collect();
        let n = ids.len() + 1;
        let x = Var::concat_rows(&[prefix, bound.get(self.tok).gather_rows(&ids)?])?;
        let positions: Vec<usize> = (0..n).collect();
        let x = x.add(bound.get(self.pos).gather_rows(&positions)?)?;
        let q = x.matmul(bound.get(self.w_q))?;
        let k = x.matmul(bound.get(self.w_k))?;
        let v = x.matmul(bound.get(self.w_v))?;
        let dh = d / self.config.heads;
        let mask = causal_mask(n);
        let mut heads = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = q.slice_cols(h * dh, dh)?;
            let kh = k.slice_cols(h * dh, dh)?;
            let vh = v.slice_cols(h * dh, dh)?;
            let att = qh
                .matmul(kh.transpose())?
                .scale(1.0 / (dh as f64).sqrt())?
                .masked_softmax_rows(Arc::clone(&mask))?;
            heads.push(att.matmul(vh)?);
        }
        let y = x.add(Var::concat_cols(&heads)?.matmul(bound.get(self.w_o))?)?;
        y.matmul(bound.get(self.w_out))?.add(bound.get(self.b_out))
    }

    /// Per-position negative log-likelihoods of `caption` then EOS.
    pub fn position_nll<'t>(&self, bound: &Bound<'t>, prefix: Var<'t>, caption: &[usize]) -> Result<Var<'t>> {
        let logits = self.logits(bound, prefix, caption)?;
        let rows: Vec<usize> = (1..logits.shape().0).collect();
        let targets: Vec<usize> = caption.iter().copied().chain(std::iter::once(EOS)).collect();
        logits.gather_rows(&rows)?.log_softmax_rows().pick(&targets)?.scale(-1.0)
    }

    /// Summed negative log-likelihood of one caption.
    pub fn caption_nll<'t>(&self, bound: &Bound<'t>, prefix: Var<'t>, caption: &[usize]) -> Result<Var<'t>> {
        Ok(self.position_nll(bound, prefix, caption)?.sum())
    }

    /// Decodes up to `max_len` tokens after BOS; the result excludes EOS.
    pub fn generate(&self, store: &ParamStore, prefix: &Matrix, max_len: usize, mode: DecodeMode) -> Result<Vec<usize>> {
        let max_len = max_len.min(self.config.max_len);
        let mut rng = match mode {
            DecodeMode::Sample { temperature, seed } => {
                if !(temperature > 0.0 && temperature.is_finite()) {
                    return Err(Error::Contract(format!("temperature must be > 0, got {temperature}")));
                }
                Some((SeedStream::new(seed).rng(), temperature))
            }
            DecodeMode::Greedy => None,
        };
        let mut out = Vec::new();
        while out.len() < max_len {
            let tape = Tape::new();
            let bound = store.bind(&tape);
            let logits = self.logits(&bound, tape.leaf(prefix.clone()), &out)?.value();
            let last = logits.row(logits.rows() - 1);
            let next = match rng.as_mut() {
                None => argmax_first(last),
                Some((rng, t)) => sample(last, *t, rng),
            };
            if next == EOS {
                break;
            }
            out.push(next);
        }
        Ok(out)
    }
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn sample(logits: &[f64], temperature: f64, rng: &mut Rng) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| ((l - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}
