//! Conjectural-variations natural gas market models and the iterative
//! calibration of their market power parameters.
//!
//! - [`lcp`]: a Lemke-based solver for mixed linear complementarity problems.
//! - [`market`]: the network model, its complementarity system and equilibria.
//! - [`calibration`]: market power, anchor price and elasticity calibration.
//! - [`io`]: JSON input files, result files and CSV tables.
//! - [`fixtures`]: seeded synthetic instances.

pub mod array;
pub mod calibration;
pub mod fixtures;
pub mod io;
pub mod lcp;
pub mod market;

pub use array::{Array2, Array3};
pub use calibration::{
    calibrate, preprocess_reference, CalibrationConfig, CalibrationError, CalibrationResult,
    RawReference, ReferenceData,
};
pub use lcp::{solve_mlcp, LcpError, LcpSolution, Mlcp};
pub use market::{
    AnchorSet, DemandAnchor, Equilibrium, MarketNetwork, ModelError, SalesBounds, ThetaMatrix,
};
