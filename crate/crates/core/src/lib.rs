//! Functional principal components analysis by penalized rank-one
//! approximation of a data matrix.
//!
//! The data are curves sampled on a common grid, stacked as the rows of
//! an n x m matrix. A component is a rank-one term u v' where the
//! loading v discretizes a smooth weight function; smoothness is imposed
//! through the spline roughness penalty v' Omega v with
//! Omega = Q R^-1 Q'. Fitting minimizes
//!
//! ```text
//! ||X - u v'||_F^2 + alpha (u'u) (v' Omega v)
//! ```
//!
//! which is invariant under rescaling of the measurements. The crate
//! provides the penalty and smoother operators ([`grid`]), single
//! component fits by power iteration or a half-smoothed SVD
//! ([`rank_one`]), closed-form delete-one-column CV/GCV selection of the
//! smoothing parameter ([`selection`]), sequential multi-component
//! extraction ([`fpca`]), natural-cubic-spline reconstruction of the
//! weight functions ([`spline`]), a Monte-Carlo comparison harness
//! ([`simulation`]) and CSV/JSON ingestion and serialization ([`io`]).

pub mod error;
pub mod fpca;
pub mod grid;
pub mod io;
mod linalg;
pub mod rank_one;
pub mod selection;
pub mod simulation;
pub mod spline;

pub use error::{Error, Result};
pub use fpca::{CenteredDataset, FPCAResult, FittedComponent, Method};
pub use grid::{PenaltyOperator, TimeGrid};
pub use rank_one::{ComponentFit, FitConfig, Initialization};
pub use selection::{AlphaGrid, Criterion, SelectionTrace};
pub use simulation::{SimConfig, SimulationReport};
pub use spline::SplineFunction;
