//! Clusters three well-separated blobs with the Student-t soft assignment
//! and prints the soft and sharpened assignment of a few points.

use milcap::dec::{dec_fit, DecConfig};
use milcap::numerics::SeedStream;
use milcap::Matrix;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = SeedStream::new(3).rng();
    let noise = Normal::new(0.0, 0.5)?;
    let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
    let rows: Vec<Vec<f64>> = (0..30)
        .map(|i| centers[i % 3].iter().map(|c| c + noise.sample(&mut rng)).collect())
        .collect();
    let x = Matrix::from_rows(&rows)?;

    let state = dec_fit(&x, &DecConfig { k: 3, ..DecConfig::default() })?;
    println!(
        "{} iterations, converged {}, loss {:.4} -> {:.4}",
        state.iterations, state.converged, state.initial_loss, state.final_loss
    );
    for i in 0..3 {
        println!("point {i}: q {:.3?} t {:.3?} -> cluster {}", state.q.row(i), state.t.row(i), state.assignments[i]);
    }
    println!("cluster sizes: {:?}", state.members().iter().map(Vec::len).collect::<Vec<_>>());
    Ok(())
}
