pub mod allset;
pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod hypergraph;
pub mod matrix;
pub mod propagation;
pub mod reproduce;
pub mod rng;
pub mod sparse;
pub mod train;

pub use error::{Error, Result};
pub use hypergraph::Hypergraph;
pub use matrix::DenseMatrix;
