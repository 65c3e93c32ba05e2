//! Principal-components estimation of approximate factor models with weak
//! factors, with leave-out diagnostics, asymptotic inference and a Monte
//! Carlo harness.
//!
//! The panel is N×T with units as rows: `X = Λ⁰F⁰ᵀ + E`.

pub mod dgp;
pub mod error;
pub mod estimator;
pub mod identities;
pub mod inference;
pub mod leaveout;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod panel_io;
pub mod rng;

pub use error::{Error, Result};
pub use estimator::{align, pc_fit, Alignment, PcFit, TruthOracle};
pub use model::{FactorStructure, PanelMatrix, TruncatedSvd};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
