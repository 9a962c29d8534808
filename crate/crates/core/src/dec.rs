//! Deep embedded clustering over one bag's patch embeddings.
//!
//! Soft assignments use a Student-t kernel
//! `q_ik ∝ (1 + |f_i - mu_k|^2 / alpha)^(-(alpha + 1) / 2)`; the target
//! `t_ik ∝ q_ik^2 / sum_i q_ik` sharpens them and the clustering loss is
//! `KL(T || Q)`. Only the centroids are fitted; stored embeddings are
//! constants.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};
use crate::trainer::{Adam, AdamConfig};

/// Student-t degrees of freedom.
pub const ALPHA: f64 = 1.0;
/// Convergence threshold on the fraction of points changing cluster.
pub const DEFAULT_EPSILON: f64 = 1e-4;
/// Cluster count preset for the breast histopathology setting.
pub const K_BREAKHIS: usize = 8;
/// Cluster count preset for the gastric captioning setting.
pub const K_PATCHGASTRIC: usize = 50;

/// Lexicographic order on coordinates, total over finite floats.
pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitCentroids {
    pub centroids: Matrix,
    /// K asked for; larger than `centroids.rows()` when clamped to N_p.
    pub requested: usize,
}

impl InitCentroids {
    pub fn was_clamped(&self) -> bool {
        self.requested > self.centroids.rows()
    }
}

/// Greedy farthest-point seeding.
///
/// The first centroid is the row of smallest L2 norm; each next one is the
/// row farthest from the chosen set. Ties go to the lexicographically
/// smallest row, so the result depends only on the multiset of rows.
pub fn init_centroids(embeddings: &Matrix, k: usize) -> Result<InitCentroids> {
    if k == 0 {
        return Err(Error::Contract("K must be at least 1".into()));
    }
    let n = embeddings.rows();
    if n == 0 {
        return Err(Error::Contract("cannot seed centroids from an empty bag".into()));
    }
    let k_used = if k > n {
        log::warn!("K = {k} exceeds the {n} patches in the bag; using K = {n}");
        n
    } else {
        k
    };
    let better = |cand: usize, best: usize, cand_key: f64, best_key: f64, larger: bool| {
        let ord = cand_key.total_cmp(&best_key);
        let ord = if larger { ord } else { ord.reverse() };
        match ord {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => lex_cmp(embeddings.row(cand), embeddings.row(best)).is_lt(),
        }
    };

    let norms: Vec<f64> = embeddings.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut first = 0;
    for i in 1..n {
        if better(i, first, norms[i], norms[first], false) {
            first = i;
        }
    }
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = (0..n)
        .map(|i| sq_dist(embeddings.row(i), embeddings.row(first)))
        .collect();
    while chosen.len() < k_used {
        let mut best = 0;
        for i in 1..n {
            if better(i, best, min_d[i], min_d[best], true) {
                best = i;
            }
        }
        chosen.push(best);
        for (i, d) in min_d.iter_mut().enumerate() {
            *d = d.min(sq_dist(embeddings.row(i), embeddings.row(best)));
        }
    }
    Ok(InitCentroids {
        centroids: embeddings.select_rows(&chosen),
        requested: k,
    })
}

/// Differentiable soft assignment Q (N x K).
pub fn soft_assign_var<'t>(embeddings: Var<'t>, centroids: Var<'t>, alpha: f64) -> Result<Var<'t>> {
    let (_, d) = embeddings.shape();
    let (k, dc) = centroids.shape();
    if d != dc {
        return Err(Error::Dimension(format!(
            "embeddings have {d} columns, centroids have {dc}"
        )));
    }
    let mut cols = Vec::with_capacity(k);
    for j in 0..k {
        let mu = centroids.gather_rows(&[j])?;
        let diff = embeddings.sub(mu)?;
        cols.push(diff.mul(diff)?.row_sum());
    }
    let sq = Var::concat_cols(&cols)?;
    let kernel = sq
        .scale(1.0 / alpha)?
        .add_scalar(1.0)?
        .powf(-(alpha + 1.0) / 2.0)?;
    kernel.div(kernel.row_sum())
}

pub fn soft_assign(embeddings: &Matrix, centroids: &Matrix, alpha: f64) -> Result<Matrix> {
    let tape = Tape::new();
    let q = soft_assign_var(tape.leaf(embeddings.clone()), tape.leaf(centroids.clone()), alpha)?;
    Ok(q.value().as_ref().clone())
}

/// Sharpened, cluster-mass-balanced targets; a constant for gradients.
pub fn target_distribution(q: &Matrix) -> Matrix {
    let (n, k) = q.shape();
    let mut mass = vec![0.0; k];
    for row in q.row_iter() {
        for (m, v) in mass.iter_mut().zip(row) {
            *m += v;
        }
    }
    let mut data = Vec::with_capacity(n * k);
    for row in q.row_iter() {
        let weighted: Vec<f64> = row.iter().zip(&mass).map(|(v, m)| v * v / m).collect();
        let total: f64 = weighted.iter().sum();
        data.extend(weighted.iter().map(|w| w / total));
    }
    Matrix::new(n, k, data).expect("targets of a valid Q are finite")
}

/// `sum_ik t_ik log(t_ik / q_ik)` with `T` held constant.
pub fn clustering_loss_var<'t>(targets: &Matrix, q: Var<'t>) -> Result<Var<'t>> {
    if targets.shape() != q.shape() {
        return Err(Error::Dimension(format!(
            "targets are {}x{}, Q is {}x{}",
            targets.rows(),
            targets.cols(),
            q.shape().0,
            q.shape().1
        )));
    }
    let log_t = targets.map(|t| if t > 0.0 { t.ln() } else { 0.0 });
    let t = q.constant(targets.clone());
    let diff = q.constant(log_t).sub(q.log()?)?;
    Ok(t.mul(diff)?.sum())
}

pub fn clustering_loss(targets: &Matrix, q: &Matrix) -> Result<f64> {
    let tape = Tape::new();
    clustering_loss_var(targets, tape.leaf(q.clone()))?.value().item()
}

/// Index of the largest entry per row; ties go to the lowest column.
pub fn hard_assignments(q: &Matrix) -> Vec<usize> {
    q.row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecConfig {
    pub k: usize,
    pub alpha: f64,
    pub epsilon: f64,
    /// Budget of gradient steps.
    pub max_iters: usize,
    /// Adam step size on the centroids.
    pub lr: f64,
    /// Gradient steps between target refreshes (one "epoch").
    pub update_interval: usize,
}

impl Default for DecConfig {
    fn default() -> Self {
        Self {
            k: K_BREAKHIS,
            alpha: ALPHA,
            epsilon: DEFAULT_EPSILON,
            max_iters: 200,
            lr: 0.01,
            update_interval: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterState {
    pub centroids: Matrix,
    pub k: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub q: Matrix,
    pub t: Matrix,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub epochs: usize,
    pub converged: bool,
    pub initial_loss: f64,
    pub final_loss: f64,
}

impl ClusterState {
    /// Member indices of every cluster, in cluster order (empty clusters included).
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Number of clusters holding at least one point.
    pub fn k_eff(&self) -> usize {
        self.members().iter().filter(|m| !m.is_empty()).count()
    }
}

fn loss_and_grad(embeddings: &Matrix, centroids: &Matrix, targets: &Matrix, alpha: f64) -> Result<(f64, Matrix)> {
    let tape = Tape::new();
    let mu = tape.leaf(centroids.clone());
    let emb = tape.leaf(embeddings.clone());
    let q = soft_assign_var(emb, mu, alpha)?;
    let loss = clustering_loss_var(targets, q)?;
    let grads = tape.backward(loss)?;
    Ok((loss.value().item()?, grads.wrt(mu)))
}

/// Fits centroids by minimizing the clustering loss from farthest-point seeds.
///
/// Targets are refreshed every `update_interval` steps; fitting stops once
/// the fraction of points whose hard assignment changed since the previous
/// refresh falls below `epsilon`, or after `max_iters` steps.
pub fn dec_fit(embeddings: &Matrix, config: &DecConfig) -> Result<ClusterState> {
    if config.max_iters == 0 {
        return Err(Error::Contract("max_iters must be at least 1".into()));
    }
    if config.update_interval == 0 {
        return Err(Error::Contract("update_interval must be at least 1".into()));
    }
    let init = init_centroids(embeddings, config.k)?;
    let k = init.centroids.rows();
    let mut centroids = init.centroids;
    let mut q = soft_assign(embeddings, &centroids, config.alpha)?;
    let mut previous = hard_assignments(&q);
    let initial_loss = clustering_loss(&target_distribution(&q), &q)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            weight_decay: 0.0,
            ..AdamConfig::default()
        },
        &[centroids.shape()],
    );
    let n = embeddings.rows() as f64;
    let mut iterations = 0;
    let mut epochs = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        let targets = target_distribution(&q);
        let steps = config.update_interval.min(config.max_iters - iterations);
        for _ in 0..steps {
            let (_, grad) = loss_and_grad(embeddings, &centroids, &targets, config.alpha)?;
            adam.step_one(0, &mut centroids, &grad, "dec.centroids")?;
            iterations += 1;
        }
        epochs += 1;
        q = soft_assign(embeddings, &centroids, config.alpha)?;
        let current = hard_assignments(&q);
        let changed = current.iter().zip(&previous).filter(|(a, b)| a != b).count() as f64 / n;
        previous = current;
        if changed < config.epsilon {
            converged = true;
            break;
        }
    }
    let t = target_distribution(&q);
    let final_loss = clustering_loss(&t, &q)?;
    Ok(ClusterState {
        centroids,
        k,
        alpha: config.alpha,
        epsilon: config.epsilon,
        q,
        t,
        assignments: previous,
        iterations,
        epochs,
        converged,
        initial_loss,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn k1_seed_is_min_norm_point() {
        let e = m(&[vec![3.0, 0.0], vec![-1.0, 0.5], vec![2.0, 2.0]]);
        let init = init_centroids(&e, 1).unwrap();
        assert_eq!(init.centroids.row(0), &[-1.0, 0.5]);
    }

    #[test]
    fn min_norm_ties_break_lexicographically() {
        let e = m(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let init = init_centroids(&e, 1).unwrap();
        assert_eq!(init.centroids.row(0), &[-1.0, 0.0]);
    }

    #[test]
    fn k_clamped_to_patch_count() {
        let e = m(&[vec![0.0], vec![1.0]]);
        let init = init_centroids(&e, 5).unwrap();
        assert_eq!(init.centroids.rows(), 2);
        assert!(init.was_clamped());
    }

    #[test]
    fn single_centroid_gives_ones() {
        let e = m(&[vec![0.0, 1.0], vec![4.0, 2.0]]);
        let q = soft_assign(&e, &m(&[vec![1.0, 1.0]]), ALPHA).unwrap();
        assert_eq!(q.data(), &[1.0, 1.0]);
    }

    #[test]
    fn equidistant_point_splits_evenly() {
        let q = soft_assign(&m(&[vec![0.0]]), &m(&[vec![-1.0], vec![1.0]]), ALPHA).unwrap();
        assert_eq!(q.data(), &[0.5, 0.5]);
    }

    #[test]
    fn hand_evaluated_assignment() {
        // kernels 1 and 1/5 => [5/6, 1/6]
        let q = soft_assign(&m(&[vec![0.0]]), &m(&[vec![0.0], vec![2.0]]), ALPHA).unwrap();
        assert!((q.get(0, 0) - 5.0 / 6.0).abs() < 1e-15);
        assert!((q.get(0, 1) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn one_hot_rows_stay_one_hot() {
        let q = m(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(target_distribution(&q), q);
    }

    #[test]
    fn uniform_q_gives_uniform_t() {
        let q = Matrix::filled(4, 3, 1.0 / 3.0);
        let t = target_distribution(&q);
        assert!(t.max_abs_diff(&q) < 1e-15);
    }

    #[test]
    fn kl_is_zero_at_equality_and_log2_for_half() {
        let q = m(&[vec![0.7, 0.3], vec![0.2, 0.8]]);
        assert!(clustering_loss(&q, &q).unwrap().abs() < 1e-15);
        let delta = 1e-12;
        let t = m(&[vec![1.0, delta]]);
        let half = m(&[vec![0.5, 0.5]]);
        let kl = clustering_loss(&t, &half).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-10, "{kl}");
    }

    #[test]
    fn fit_terminates_after_one_epoch_when_converged() {
        let e = m(&[vec![0.0, 0.0], vec![0.0, 0.1], vec![10.0, 10.0], vec![10.0, 10.1]]);
        let cfg = DecConfig { k: 2, ..DecConfig::default() };
        let state = dec_fit(&e, &cfg).unwrap();
        assert!(state.converged);
        assert_eq!(state.epochs, 1);
        assert_eq!(state.assignments[0], state.assignments[1]);
        assert_ne!(state.assignments[0], state.assignments[2]);
    }

    #[test]
    fn fit_rejects_zero_budget() {
        let e = m(&[vec![0.0]]);
        let cfg = DecConfig { k: 1, max_iters: 0, ..DecConfig::default() };
        assert!(dec_fit(&e, &cfg).is_err());
    }
}
