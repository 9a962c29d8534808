//! Runs a two-layer graph attention stack over a small graph and prints the
//! attention rows and the pooled bag vector.

use milcap::gat::{GatConfig, GatStack};
use milcap::graph::Adjacency;
use milcap::numerics::{ParamStore, SeedStream, Tape};
use milcap::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Matrix::from_rows(&[vec![1.0, 0.0, 0.5], vec![0.0, 1.0, -0.5], vec![0.5, 0.5, 0.0], vec![-1.0, 0.2, 0.3]])?;
    // a path 0-1-2-3 plus self-loops
    let mut mask = vec![false; 16];
    for i in 0..4 {
        mask[i * 4 + i] = true;
        if i + 1 < 4 {
            mask[i * 4 + i + 1] = true;
            mask[(i + 1) * 4 + i] = true;
        }
    }
    let adjacency = Adjacency::from_mask(4, mask)?;

    let mut store = ParamStore::new();
    let config = GatConfig { d_out: 4, layers: 2, ..GatConfig::default() };
    let gat = GatStack::register(&mut store, "gat", 3, config, &mut SeedStream::new(5).rng())?;
    let tape = Tape::new();
    let bound = store.bind(&tape);
    let out = gat.forward(&bound, tape.leaf(x), &adjacency, None)?;
    for (l, beta) in out.betas.iter().enumerate() {
        println!("layer {l} attention:");
        for i in 0..4 {
            println!("  {:.3?}", beta.value().row(i));
        }
    }
    println!("h_mean {:.4?}", out.h_mean.value().row(0));
    Ok(())
}
