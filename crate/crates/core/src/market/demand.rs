use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::array::{Array2, Array3};

/// Anchor point of an affine inverse demand function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandAnchor {
    /// Anchor consumption (volume/period), strictly positive.
    pub s0: f64,
    /// Anchor price (currency/volume), nonnegative.
    pub lambda0: f64,
    /// Price elasticity at the anchor, strictly negative.
    pub eta: f64,
}

impl DemandAnchor {
    pub fn new(s0: f64, lambda0: f64, eta: f64) -> Result<Self, ModelError> {
        let a = Self { s0, lambda0, eta };
        a.check()?;
        Ok(a)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let ok = self.s0 > 0.0
            && self.s0.is_finite()
            && self.lambda0 >= 0.0
            && self.lambda0.is_finite()
            && self.eta < 0.0
            && self.eta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidAnchor {
                s0: self.s0,
                lambda0: self.lambda0,
                eta: self.eta,
            })
        }
    }

    /// Intercept and slope of `price = intercept + slope * s`.
    pub fn coefficients(&self) -> Result<(f64, f64), ModelError> {
        inverse_demand_coeffs(self)
    }
}

/// Intercept and slope of the affine inverse demand through the anchor, with
/// the slope set by the elasticity at the anchor.
pub fn inverse_demand_coeffs(anchor: &DemandAnchor) -> Result<(f64, f64), ModelError> {
    anchor.check()?;
    let slope = anchor.lambda0 / (anchor.s0 * anchor.eta);
    let intercept = anchor.lambda0 - slope * anchor.s0;
    Ok((intercept, slope))
}

/// One optional anchor per (node, period).
pub type AnchorSet = Array2<Option<DemandAnchor>>;

/// Market power parameters per (trader, node, period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaMatrix(pub Array3);

impl ThetaMatrix {
    pub fn uniform(traders: usize, nodes: usize, periods: usize, value: f64) -> Self {
        Self(Array3::filled(traders, nodes, periods, value))
    }

    pub fn at(&self, f: usize, n: usize, t: usize) -> f64 {
        self.0.at(f, n, t)
    }

    pub fn set(&mut self, f: usize, n: usize, t: usize, value: f64) {
        self.0.set(f, n, t, value)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.0.shape()
    }
}

/// Bounds on sales used by the bounded augmented model.
#[derive(Debug, Clone, PartialEq)]
pub struct SalesBounds {
    pub lower: Array3,
    /// `f64::INFINITY` where unbounded.
    pub upper: Array3,
    /// Consumption pinned per (node, period).
    pub fixed_consumption: Array2<Option<f64>>,
    /// Cap on a trader's total sales per period, `f64::INFINITY` where absent.
    pub trader_cap: Array2,
}

impl SalesBounds {
    /// Bounds that constrain nothing.
    pub fn vacuous(traders: usize, nodes: usize, periods: usize) -> Self {
        Self {
            lower: Array3::zeros(traders, nodes, periods),
            upper: Array3::filled(traders, nodes, periods, f64::INFINITY),
            fixed_consumption: Array2::filled(nodes, periods, None),
            trader_cap: Array2::filled(traders, periods, f64::INFINITY),
        }
    }
}
