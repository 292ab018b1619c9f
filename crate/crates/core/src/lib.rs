pub mod dataset;
pub mod domain;
pub mod error;
pub mod eval;
pub mod loss;
pub mod mesh;
pub mod nn;
pub mod retrieval;
pub mod tensor;
pub mod toy;
pub mod train;

pub use domain::Domain;
pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
