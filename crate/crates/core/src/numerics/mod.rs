//! Dense arithmetic, reverse-mode differentiation and seeded randomness.

mod gradcheck;
mod matrix;
mod params;
mod rng;
mod tape;

pub use gradcheck::{check_gradients, check_store_gradients, GradCheck, DEFAULT_STEP};
pub use matrix::Matrix;
pub use params::{uniform, xavier_normal, Bound, ParamId, ParamStore};
pub use rng::{splitmix64, Rng, SeedStream};
pub use tape::{Gradients, Tape, Var};

/// Negative slope used for LeakyReLU unless configured otherwise.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
