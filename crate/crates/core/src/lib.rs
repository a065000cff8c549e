pub mod error;
pub mod field;
pub mod operators;
pub mod rng;

pub use error::{Error, Result};
pub use field::{inner, norm_21, norm_2inf, ScalarImage, Shape, VectorField2};
pub use rng::SeededRng;
pub mod diagnostics;
pub mod popd;
pub mod predictors;
pub mod prox;
pub mod experiments;
pub mod cli;
