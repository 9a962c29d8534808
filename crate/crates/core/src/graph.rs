//! Similarity graph over the representatives of one bag.
//!
//! Nodes are the representative rows. Each node links to its `m` most
//! cosine-similar other nodes; in training mode the similarities are
//! perturbed by `tau`-scaled Gumbel noise before the top-`m` choice, in
//! evaluation mode they are not. Edges are then symmetrized and every node
//! gets a self-loop.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeMode {
    Train { seed: u64, tau: f64 },
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub m_neighbors: usize,
    pub tau: f64,
    pub symmetrize: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            m_neighbors: 1,
            tau: 1.0,
            symmetrize: true,
        }
    }
}

/// Dense boolean adjacency, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    mask: Arc<Vec<bool>>,
}

impl Adjacency {
    pub fn from_mask(n: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != n * n {
            return Err(Error::Dimension(format!("mask of length {} for {n} nodes", mask.len())));
        }
        Ok(Self { n, mask: Arc::new(mask) })
    }

    /// Every pair linked, self-loops included.
    pub fn complete(n: usize) -> Self {
        Self { n, mask: Arc::new(vec![true; n * n]) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn mask(&self) -> Arc<Vec<bool>> {
        Arc::clone(&self.mask)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.has_edge(i, j) == self.has_edge(j, i)))
    }

    /// Directed pairs `(i, j)` with `i != j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j && self.has_edge(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub nodes: Matrix,
    pub s: Matrix,
    pub adjacency: Adjacency,
}

/// Pairwise cosine similarities; a zero row is an error naming the node.
pub fn cosine_similarity_matrix(r: &Matrix) -> Result<Matrix> {
    let n = r.rows();
    let norms: Vec<f64> = r.row_iter().map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::Contract(format!("node {i} has a zero-norm embedding")));
    }
    let mut s = Matrix::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = r.row(i).iter().zip(r.row(j)).map(|(a, b)| a * b).sum();
            let v = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            s.set(i, j, v)?;
            s.set(j, i, v)?;
        }
    }
    Ok(s)
}

fn gumbel(rng: &mut impl rand::Rng) -> f64 {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

/// Top-`m` neighbor choice per row, then symmetrization and self-loops.
pub fn build_edges(s: &Matrix, mode: EdgeMode, m_neighbors: usize, symmetrize: bool) -> Result<Adjacency> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::Dimension(format!("similarity matrix is {}x{}", n, s.cols())));
    }
    if m_neighbors == 0 {
        return Err(Error::Contract("m_neighbors must be at least 1".into()));
    }
    let mut rng = match mode {
        EdgeMode::Train { seed, tau } => {
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(Error::Contract(format!("tau must be finite and >= 0, got {tau}")));
            }
            Some((SeedStream::new(seed).rng(), tau))
        }
        EdgeMode::Eval => None,
    };
    let mut mask = vec![false; n * n];
    for i in 0..n {
        let mut cand: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let noise = match rng.as_mut() {
                    Some((rng, tau)) => *tau * gumbel(rng),
                    None => 0.0,
                };
                (j, s.get(i, j) + noise)
            })
            .collect();
        cand.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(j, _) in cand.iter().take(m_neighbors) {
            mask[i * n + j] = true;
        }
    }
    if symmetrize {
        for i in 0..n {
            for j in 0..n {
                if mask[i * n + j] {
                    mask[j * n + i] = true;
                }
            }
        }
    }
    for i in 0..n {
        mask[i * n + i] = true;
    }
    Adjacency::from_mask(n, mask)
}

pub fn build_graph(r: &Matrix, mode: EdgeMode, config: &GraphConfig) -> Result<SimilarityGraph> {
    let s = cosine_similarity_matrix(r)?;
    let mode = match mode {
        EdgeMode::Train { seed, .. } => EdgeMode::Train { seed, tau: config.tau },
        EdgeMode::Eval => EdgeMode::Eval,
    };
    let adjacency = build_edges(&s, mode, config.m_neighbors, config.symmetrize)?;
    Ok(SimilarityGraph {
        nodes: r.clone(),
        s,
        adjacency,
    })
}

#[derive(Serialize)]
struct AdjacencyJson<'a> {
    nodes: usize,
    symmetric: bool,
    neighbors: Vec<Vec<usize>>,
    similarity: &'a Matrix,
}

impl SimilarityGraph {
    pub fn to_dot(&self) -> String {
        let adj = &self.adjacency;
        let symmetric = adj.is_symmetric();
        let (kind, arrow) = if symmetric { ("graph", "--") } else { ("digraph", "->") };
        let mut out = format!("{kind} bag {{\n");
        for i in 0..adj.len() {
            let _ = writeln!(out, "  n{i};");
        }
        for (i, j) in adj.edges() {
            if symmetric && j < i {
                continue;
            }
            let _ = writeln!(out, "  n{i} {arrow} n{j} [label=\"{:.4}\"];", self.s.get(i, j));
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        let adj = &self.adjacency;
        let doc = AdjacencyJson {
            nodes: adj.len(),
            symmetric: adj.is_symmetric(),
            neighbors: (0..adj.len()).map(|i| adj.neighbors(i)).collect(),
            similarity: &self.s,
        };
        serde_json::to_string_pretty(&doc).expect("graph serializes")
    }
}
