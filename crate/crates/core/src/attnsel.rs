//! One representative patch per cluster, chosen by an attention score.
//!
//! For the members `Z` of a cluster: `Q = Z W_Q`, `K = Z W_K`, `V = Z W_V`,
//! `e_i = sum(Q_i * K_i) / sqrt(d_v)`, `alpha = softmax(e)` over the
//! cluster and `score_i = alpha_i * sum_m V_im`. The representative is the
//! member with the highest score and is returned as a copy of its original
//! embedding row.

use serde::Serialize;

use crate::dec::lex_cmp;
use crate::error::{Error, Result};
use crate::numerics::{uniform, Bound, Matrix, ParamId, ParamStore, Rng, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    /// Each patch scores its own query against its own key.
    #[default]
    SelfDot,
    /// Softmax attention over all member pairs; a patch's weight is the mean
    /// attention it receives.
    Pairwise,
}

/// Handles to the three projections inside a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttnSelector {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub d_v: usize,
    pub kind: ScoreKind,
}

/// Tape handles for one cluster's scores.
pub struct ClusterScoreVars<'t> {
    pub e: Var<'t>,
    pub alpha: Var<'t>,
    pub score: Var<'t>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectedCluster {
    pub cluster: usize,
    /// Patch indices in canonical order (lexicographic by embedding).
    pub members: Vec<usize>,
    pub e: Vec<f64>,
    pub alpha: Vec<f64>,
    pub score: Vec<f64>,
    /// Patch index of the representative.
    pub representative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSelection {
    /// Non-empty clusters in cluster order.
    pub clusters: Vec<SelectedCluster>,
    /// Representative rows, one per entry of `clusters`.
    pub r: Matrix,
}

impl ClusterSelection {
    pub fn representatives(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.representative).collect()
    }
}

/// Member lists per cluster in canonical order.
pub fn canonical_members(embeddings: &Matrix, assignments: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if assignments.len() != embeddings.rows() {
        return Err(Error::Dimension(format!(
            "{} assignments for {} patches",
            assignments.len(),
            embeddings.rows()
        )));
    }
    let mut members = vec![Vec::new(); k];
    for (i, &c) in assignments.iter().enumerate() {
        let slot = members
            .get_mut(c)
            .ok_or_else(|| Error::Contract(format!("patch {i} assigned to cluster {c} of {k}")))?;
        slot.push(i);
    }
    for m in &mut members {
        m.sort_by(|&a, &b| lex_cmp(embeddings.row(a), embeddings.row(b)).then(a.cmp(&b)));
    }
    Ok(members)
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

impl AttnSelector {
    /// Registers `{prefix}.w_q`, `{prefix}.w_k`, `{prefix}.w_v`, each
    /// uniform in `+/- 1/sqrt(d_v)`.
    pub fn register(store: &mut ParamStore, prefix: &str, d_v: usize, kind: ScoreKind, rng: &mut Rng) -> Result<Self> {
        let bound = 1.0 / (d_v as f64).sqrt();
        let w_q = store.register(format!("{prefix}.w_q"), uniform(d_v, d_v, bound, rng))?;
        let w_k = store.register(format!("{prefix}.w_k"), uniform(d_v, d_v, bound, rng))?;
        let w_v = store.register(format!("{prefix}.w_v"), uniform(d_v, d_v, bound, rng))?;
        Ok(Self { w_q, w_k, w_v, d_v, kind })
    }

    /// Scores the rows of `z` (one cluster's members).
    pub fn score_cluster<'t>(&self, bound: &Bound<'t>, z: Var<'t>) -> Result<ClusterScoreVars<'t>> {
        let scale = 1.0 / (self.d_v as f64).sqrt();
        let q = z.matmul(bound.get(self.w_q))?;
        let k = z.matmul(bound.get(self.w_k))?;
        let v = z.matmul(bound.get(self.w_v))?;
        let (e, alpha) = match self.kind {
            ScoreKind::SelfDot => {
                let e = q.mul(k)?.row_sum().scale(scale)?;
                let alpha = e.transpose().softmax_rows().transpose();
                (e, alpha)
            }
            ScoreKind::Pairwise => {
                let logits = q.matmul(k.transpose())?.scale(scale)?;
                let received = logits.softmax_rows().col_mean().transpose();
                // column means of a row-stochastic matrix already sum to one
                (logits.row_sum(), received)
            }
        };
        let score = alpha.mul(v.row_sum())?;
        Ok(ClusterScoreVars { e, alpha, score })
    }

    /// Selection recorded on `bound`'s tape; scores stay differentiable.
    pub fn select_on_tape<'t>(
        &self,
        bound: &Bound<'t>,
        tape: &'t Tape,
        embeddings: &Matrix,
        assignments: &[usize],
        k: usize,
    ) -> Result<(ClusterSelection, Vec<ClusterScoreVars<'t>>)> {
        if embeddings.cols() != self.d_v {
            return Err(Error::Dimension(format!(
                "selector expects d_v = {}, embeddings have {}",
                self.d_v,
                embeddings.cols()
            )));
        }
        let members = canonical_members(embeddings, assignments, k)?;
        let mut clusters = Vec::new();
        let mut vars = Vec::new();
        for (cluster, idx) in members.into_iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            let z = tape.leaf(embeddings.select_rows(&idx));
            let s = self.score_cluster(bound, z)?;
            let score = s.score.value().data().to_vec();
            let best = argmax_first(&score);
            clusters.push(SelectedCluster {
                cluster,
                representative: idx[best],
                e: s.e.value().data().to_vec(),
                alpha: s.alpha.value().data().to_vec(),
                score,
                members: idx,
            });
            vars.push(s);
        }
        if clusters.is_empty() {
            return Err(Error::Contract("every cluster is empty".into()));
        }
        let reps: Vec<usize> = clusters.iter().map(|c| c.representative).collect();
        let r = embeddings.select_rows(&reps);
        Ok((ClusterSelection { clusters, r }, vars))
    }

    pub fn select(&self, store: &ParamStore, embeddings: &Matrix, assignments: &[usize], k: usize) -> Result<ClusterSelection> {
        let tape = Tape::new();
        let bound = store.bind(&tape);
        Ok(self.select_on_tape(&bound, &tape, embeddings, assignments, k)?.0)
    }
}
