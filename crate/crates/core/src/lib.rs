pub mod error;
pub mod normal;
pub mod quadrature;

pub use error::{Error, Result};
pub mod marginals;
pub mod copula;
pub mod optimizer;
pub mod estimation;
pub mod estimands;
pub mod simgen;
pub mod inference;
pub mod sensitivity;
pub mod io;
