//! Equilibria of a large random single-period economy in which consumers
//! trade derivative instruments with no short selling.
//!
//! Finite economies are sampled and solved exactly ([`equilibrium`]); the
//! infinite-size limit is described by a low-dimensional saddle point
//! ([`saddlepoint`]). [`arbitrage_boundary`] locates the edge of the stable
//! region for negative risk premium and [`hedging`] couples the premium to the
//! banks' residual hedging risk.

pub mod arbitrage_boundary;
pub mod economy;
pub mod equilibrium;
pub mod error;
pub mod hedging;
pub mod lp;
pub mod quadrature;
pub mod roots;
pub mod saddlepoint;
pub mod special;
pub mod utility;

pub use economy::{sample_economy, Economy, ModelConfig};
pub use error::{Error, Result};
pub use utility::Crra;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
