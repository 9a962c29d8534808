//! Graph attention layers and mean pooling to a bag embedding.
//!
//! Layer `l` computes `Wh = h W`, coefficients
//! `beta_vu = softmax_{u in N(v)} rho(a_l . Wh_v + a_r . Wh_u)` and the update
//! `h'_v = rho(sum_u beta_vu Wh_u)`, with `rho` a LeakyReLU. The bag
//! embedding is the mean of the last layer's node features.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::numerics::{xavier_normal, Bound, Matrix, ParamId, ParamStore, Rng, Var, DEFAULT_LEAKY_SLOPE};

/// Hidden width used unless configured otherwise.
pub const DEFAULT_D_OUT: usize = 512;
pub const DEFAULT_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutTarget {
    /// Drop attention coefficients.
    #[default]
    Attention,
    /// Drop transformed node features before aggregation.
    Features,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatConfig {
    pub layers: usize,
    pub d_out: usize,
    pub slope: f64,
    pub dropout: f64,
    pub dropout_target: DropoutTarget,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LAYERS,
            d_out: DEFAULT_D_OUT,
            slope: DEFAULT_LEAKY_SLOPE,
            dropout: 0.3,
            dropout_target: DropoutTarget::Attention,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub w: ParamId,
    /// Row vector of length `2 * d_out`: source half then neighbor half.
    pub a: ParamId,
    pub d_in: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatStack {
    pub layers: Vec<GatLayer>,
    pub config: GatConfig,
}

pub struct LayerOutput<'t> {
    pub h: Var<'t>,
    pub beta: Var<'t>,
}

pub struct GatOutput<'t> {
    pub nodes: Var<'t>,
    pub h_mean: Var<'t>,
    /// Attention coefficients of every layer, before dropout.
    pub betas: Vec<Var<'t>>,
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut Rng) -> Matrix {
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Matrix::new(rows, cols, data).expect("finite mask")
}

impl GatStack {
    /// Registers `{prefix}.{l}.w` and `{prefix}.{l}.a` for every layer.
    pub fn register(store: &mut ParamStore, prefix: &str, d_v: usize, config: GatConfig, rng: &mut Rng) -> Result<Self> {
        if config.layers == 0 || config.d_out == 0 {
            return Err(Error::Contract("GAT needs at least one layer of width >= 1".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Contract(format!("dropout must lie in [0, 1), got {}", config.dropout)));
        }
        let gain = 2f64.sqrt();
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let d_in = if l == 0 { d_v } else { config.d_out };
            let w = store.register(format!("{prefix}.{l}.w"), xavier_normal(d_in, config.d_out, gain, rng))?;
            let a = store.register(format!("{prefix}.{l}.a"), xavier_normal(1, 2 * config.d_out, gain, rng))?;
            layers.push(GatLayer { w, a, d_in });
        }
        Ok(Self { layers, config })
    }

    pub fn d_out(&self) -> usize {
        self.config.d_out
    }

    pub fn layer<'t>(
        &self,
        bound: &Bound<'t>,
        index: usize,
        h: Var<'t>,
        adjacency: &Adjacency,
        dropout: Option<&mut Rng>,
    ) -> Result<LayerOutput<'t>> {
        let layer = &self.layers[index];
        let (n, d_in) = h.shape();
        if d_in != layer.d_in {
            return Err(Error::Dimension(format!("layer {index} expects {} inputs, got {d_in}", layer.d_in)));
        }
        if adjacency.len() != n {
            return Err(Error::Dimension(format!("{n} nodes but adjacency over {}", adjacency.len())));
        }
        let d = self.config.d_out;
        let slope = self.config.slope;
        let a = bound.get(layer.a);
        let mut wh = h.matmul(bound.get(layer.w))?;
        let s_src = wh.matmul(a.slice_cols(0, d)?.transpose())?;
        let s_dst = wh.matmul(a.slice_cols(d, d)?.transpose())?;
        let ones = h.constant(Matrix::filled(1, n, 1.0));
        let logits = s_src.matmul(ones)?.add(s_dst.transpose())?.leaky_relu(slope);
        let beta = logits.masked_softmax_rows(adjacency.mask())?;
        let mut weights = beta;
        if let Some(rng) = dropout {
            if self.config.dropout > 0.0 {
                match self.config.dropout_target {
                    DropoutTarget::Attention => {
                        let m = dropout_mask(n, n, self.config.dropout, rng);
                        weights = weights.mul(h.constant(m))?;
                    }
                    DropoutTarget::Features => {
                        let m = dropout_mask(n, d, self.config.dropout, rng);
                        wh = wh.mul(h.constant(m))?;
                    }
                }
            }
        }
        let h = weights.matmul(wh)?.leaky_relu(slope);
        Ok(LayerOutput { h, beta })
    }

    /// Runs every layer then mean-pools. Pass an RNG to enable dropout.
    pub fn forward<'t>(
        &self,
        bound: &Bound<'t>,
        nodes: Var<'t>,
        adjacency: &Adjacency,
        mut dropout: Option<&mut Rng>,
    ) -> Result<GatOutput<'t>> {
        let mut h = nodes;
        let mut betas = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let out = self.layer(bound, l, h, adjacency, dropout.as_deref_mut())?;
            h = out.h;
            betas.push(out.beta);
        }
        Ok(GatOutput {
            nodes: h,
            h_mean: h.col_mean(),
            betas,
        })
    }
}
