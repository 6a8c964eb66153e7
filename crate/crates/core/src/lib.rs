//! Spatiotemporal autoregression for compositional panel data.
//!
//! Compositions are mapped to isometric log-ratio coordinates, where a
//! vector autoregression with a spatial lag is fitted by maximum likelihood.

pub mod cli;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod simplex;
pub mod simulate;
pub mod weights;

pub use error::{Error, ErrorKind, Result};
pub use estimate::{fit, FitOptions, FitResult, Optimizer, Restrictions};
pub use model::{ModelParams, PanelData};
pub use simplex::{Composition, IlrBasis};
pub use weights::SpatialWeights;
