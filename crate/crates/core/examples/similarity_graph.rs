//! Builds the cosine-similarity graph over a set of nodes in eval mode and in
//! train mode with Gumbel-perturbed neighbor picks, and writes it as DOT.

use milcap::graph::{build_graph, EdgeMode, GraphConfig};
use milcap::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let nodes = Matrix::from_rows(&[
        vec![1.0, 0.0, 0.2],
        vec![0.9, 0.1, 0.1],
        vec![0.0, 1.0, 0.0],
        vec![0.1, 0.8, 0.3],
        vec![0.2, 0.2, 1.0],
    ])?;
    let config = GraphConfig::default();
    let eval = build_graph(&nodes, EdgeMode::Eval, &config)?;
    println!("eval edges: {:?}", eval.adjacency.edges());
    for seed in 0..3 {
        let g = build_graph(&nodes, EdgeMode::Train { seed, tau: 1.0 }, &config)?;
        println!("train seed {seed}: {:?}", g.adjacency.edges());
    }
    let cold = build_graph(&nodes, EdgeMode::Train { seed: 0, tau: 1e-6 }, &GraphConfig { tau: 1e-6, ..config })?;
    println!("near-zero temperature matches eval: {}", cold.adjacency.edges() == eval.adjacency.edges());
    print!("{}", eval.to_dot());
    Ok(())
}
