//! Network market model: data, demand, assembly and equilibrium extraction.

mod assemble;
mod demand;
mod equilibrium;
mod network;

use thiserror::Error;

use crate::lcp::LcpError;

pub use assemble::{assemble_base, assemble_bounded, assemble_fixed_sales, MarketSystem, VarLabel};
pub use demand::{inverse_demand_coeffs, AnchorSet, DemandAnchor, SalesBounds, ThetaMatrix};
pub use equilibrium::{complete_marginal_costs, extract_equilibrium, solve_system, Equilibrium};
pub use network::{Facility, Link, MarketNetwork, ServiceKind, Trader};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid {field}: {reason}")]
    InvariantViolation { field: String, reason: String },
    #[error("trader {trader} references unreachable service {service}")]
    UnreachableService { trader: String, service: String },
    #[error("invalid demand anchor (s0={s0}, lambda0={lambda0}, eta={eta})")]
    InvalidAnchor { s0: f64, lambda0: f64, eta: f64 },
    #[error("no demand anchor for consumer {node} in period {period}")]
    MissingAnchor { node: String, period: String },
    #[error(
        "sales bounds at {node}/{period} admit [{lower}, {upper}] but consumption is pinned to {consumption}"
    )]
    InfeasibleBounds {
        node: String,
        period: String,
        lower: f64,
        upper: f64,
        consumption: f64,
    },
    #[error(
        "theta for trader {trader} at {node}/{period} must be finite and nonnegative, got {value}"
    )]
    InvalidTheta {
        trader: String,
        node: String,
        period: String,
        value: f64,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Solver(#[from] LcpError),
}
