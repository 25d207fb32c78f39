//! Calibration of market power parameters, anchor prices and elasticities
//! to reference data.
//!
//! The algorithm alternates three modules:
//!
//! 1. marginal costs are recovered by solving the model with sales fixed at
//!    the reference values ([`marginal_costs`]);
//! 2. per market, the anchor prices and elasticities for which every
//!    trader's market power lies in [0, 1] are computed
//!    ([`admissible_ranges`], [`eta_upper_bound`], [`select_anchors`]);
//! 3. when those sets miss the reference boxes, the reference sales are
//!    moved towards an estimate that shifts the sets in the right direction
//!    ([`estimate_sales`], [`update_step`]).

mod algorithm;
mod formulas;
mod reference;

use thiserror::Error;

use crate::market::ModelError;

pub use algorithm::{
    calibrate, chosen_anchors, deviation_table, estimate_all, initial_ranges, marginal_costs,
    markets, select_all, update_step, CalibrationResult, DeviationRow, IterationRecord, MarketKey,
    MarketRecord, Termination, UpdateOutcome, Validation,
};
pub use formulas::{
    active_traders, admissible_ranges, compute_theta, estimate_sales, eta_upper_bound,
    fill_in_theta, select_anchors, zero_sales_tol, AnchorChoice, LambdaRange, MarketReference,
    SalesEstimate, BOUNDARY_TOL,
};
pub use reference::{preprocess_reference, EtaBox, RawReference, ReferenceData};

use serde::{Deserialize, Serialize};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("market power is undefined for a trader without sales")]
    ZeroSales,
    #[error("market power is undefined at a zero anchor price")]
    ZeroPrice,
    #[error("no trader sells in market {node}/{period} although consumption is positive")]
    NoActiveTraderAt { node: String, period: String },
    #[error("no trader has positive sales")]
    NoActiveTrader,
    #[error("all reference sales in the market are zero")]
    AllSalesZero,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("inconsistent reference data: {0}")]
    InconsistentData(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "price at {node}/{period} deviates from the anchor by {deviation:e} in the update step"
    )]
    PricePinning {
        node: String,
        period: String,
        deviation: f64,
    },
    #[error("no convergence after {iterations} iterations")]
    MaxIterationsExceeded {
        iterations: usize,
        trace: Vec<IterationRecord>,
    },
    #[error("{stage} failed in iteration {iteration}: {source}")]
    SolverFailure {
        stage: &'static str,
        iteration: usize,
        #[source]
        source: Box<ModelError>,
        trace: Vec<IterationRecord>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Tuning of the calibration loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Allowed consumption deviation relative to the reference.
    pub tol_consumption_rel: f64,
    /// Absolute floor of the consumption tolerance.
    pub tol_consumption_abs: f64,
    /// Fraction of the reference price by which a hit price bound widens.
    pub widen_fraction: f64,
    pub max_iterations: usize,
    pub solver_tol: f64,
    /// Market power used while recovering marginal costs.
    pub theta_init_module1: f64,
    /// Seed for synthetic data generation.
    pub seed: u64,
    /// Default elasticity box around the reference when none is given.
    pub eta_box: EtaBox,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            tol_consumption_rel: 0.0025,
            tol_consumption_abs: 1e-6,
            widen_fraction: 0.02,
            max_iterations: 50,
            solver_tol: crate::lcp::DEFAULT_TOL,
            theta_init_module1: 1.0,
            seed: 0,
            eta_box: EtaBox::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CalibrationError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("tol_consumption_rel", self.tol_consumption_rel)?;
        positive("tol_consumption_abs", self.tol_consumption_abs)?;
        positive("solver_tol", self.solver_tol)?;
        if !(0.0..1.0).contains(&self.widen_fraction) {
            return Err(CalibrationError::InvalidConfig(format!(
                "widen_fraction must lie in [0, 1), got {}",
                self.widen_fraction
            )));
        }
        if self.max_iterations == 0 {
            return Err(CalibrationError::InvalidConfig(
                "max_iterations must be positive".into(),
            ));
        }
        if !(self.theta_init_module1 >= 0.0 && self.theta_init_module1.is_finite()) {
            return Err(CalibrationError::InvalidConfig(
                "theta_init_module1 must be finite and nonnegative".into(),
            ));
        }
        self.eta_box.validate()
    }

    /// Consumption tolerance for a market with reference consumption `s_ref`.
    pub fn consumption_tol(&self, s_ref: f64) -> f64 {
        (self.tol_consumption_rel * s_ref.abs()).max(self.tol_consumption_abs)
    }
}
