use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attnsel::ScoreKind;
use crate::dec::{DecConfig, ALPHA, DEFAULT_EPSILON, K_BREAKHIS};
use crate::error::{Error, Result};
use crate::gat::{DropoutTarget, GatConfig, DEFAULT_D_OUT, DEFAULT_LAYERS};
use crate::graph::GraphConfig;
use crate::heads::{CaptionConfig, Task, DEFAULT_HIDDEN};
use crate::numerics::DEFAULT_LEAKY_SLOPE;

use super::adam::AdamConfig;

/// Every knob of a training run. Missing JSON fields take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Clusters per bag.
    pub k: usize,
    pub tau: f64,
    pub m_neighbors: usize,
    pub symmetrize: bool,
    pub lambda_clu: f64,
    pub seed: u64,
    /// Centroid steps per forward pass while training.
    pub dec_train_iters: usize,
    /// Centroid step budget at evaluation (stops earlier on convergence).
    pub dec_eval_iters: usize,
    pub dec_lr: f64,
    pub dec_update_interval: usize,
    pub dec_epsilon: f64,
    pub gat_layers: usize,
    pub d_out: usize,
    pub dropout_target: DropoutTarget,
    pub hidden: usize,
    pub score_kind: ScoreKind,
    pub caption: CaptionConfig,
    /// Parameters whose name starts with any of these are not updated.
    pub frozen: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Classify,
            lr: 1e-3,
            weight_decay: 1e-2,
            dropout: 0.3,
            epochs: 100,
            batch_size: 16,
            k: K_BREAKHIS,
            tau: 1.0,
            m_neighbors: 1,
            symmetrize: true,
            lambda_clu: 1.0,
            seed: 0,
            dec_train_iters: 20,
            dec_eval_iters: 200,
            dec_lr: 0.01,
            dec_update_interval: 5,
            dec_epsilon: DEFAULT_EPSILON,
            gat_layers: DEFAULT_LAYERS,
            d_out: DEFAULT_D_OUT,
            dropout_target: DropoutTarget::Attention,
            hidden: DEFAULT_HIDDEN,
            score_kind: ScoreKind::SelfDot,
            caption: CaptionConfig::default(),
            frozen: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("k", self.k),
            ("m_neighbors", self.m_neighbors),
            ("dec_train_iters", self.dec_train_iters),
            ("dec_eval_iters", self.dec_eval_iters),
            ("dec_update_interval", self.dec_update_interval),
            ("gat_layers", self.gat_layers),
            ("d_out", self.d_out),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Contract(format!("{name} must be at least 1")));
        }
        let reals = [
            ("lr", self.lr),
            ("weight_decay", self.weight_decay),
            ("tau", self.tau),
            ("lambda_clu", self.lambda_clu),
            ("dec_lr", self.dec_lr),
            ("dec_epsilon", self.dec_epsilon),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Contract(format!("{name} must be finite and >= 0, got {v}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Contract(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn dec(&self, train: bool) -> DecConfig {
        DecConfig {
            k: self.k,
            alpha: ALPHA,
            epsilon: self.dec_epsilon,
            max_iters: if train { self.dec_train_iters } else { self.dec_eval_iters },
            lr: self.dec_lr,
            update_interval: self.dec_update_interval,
        }
    }

    pub fn graph(&self) -> GraphConfig {
        GraphConfig {
            m_neighbors: self.m_neighbors,
            tau: self.tau,
            symmetrize: self.symmetrize,
        }
    }

    pub fn gat(&self) -> GatConfig {
        GatConfig {
            layers: self.gat_layers,
            d_out: self.d_out,
            slope: DEFAULT_LEAKY_SLOPE,
            dropout: self.dropout,
            dropout_target: self.dropout_target,
        }
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.iter().any(|p| name.starts_with(p.as_str()))
    }
}
