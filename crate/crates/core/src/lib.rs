//! Multiple-instance learning over bags of patch embeddings.
//!
//! A bag (one patient's patches) flows through
//! [`dec`] (clustering to drop near-duplicate patches),
//! [`attnsel`] (one representative per cluster),
//! [`graph`] (similarity graph over representatives),
//! [`gat`] (graph attention and mean pooling to one bag vector) and
//! [`heads`] (bag classifier or caption decoder).
//! [`trainer`] wires the stages together; [`metrics`] scores the results.

pub mod attnsel;
pub mod bagio;
pub mod cli;
pub mod dec;
pub mod error;
pub mod gat;
pub mod graph;
pub mod heads;
pub mod metrics;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::Matrix;
