use serde::{Deserialize, Serialize};

use super::formulas::{zero_sales_tol, MarketReference};
use super::{CalibrationConfig, CalibrationError};
use crate::array::{Array2, Array3};
use crate::market::{
    assemble_bounded, solve_system, AnchorSet, DemandAnchor, MarketNetwork, SalesBounds,
    ThetaMatrix,
};

/// Default elasticity box: `-eta` within `half_width` of the reference,
/// clipped to `[min, max]` and widened to contain the reference itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EtaBox {
    pub half_width: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for EtaBox {
    fn default() -> Self {
        Self {
            half_width: 0.2,
            min: 0.3,
            max: 1.0,
        }
    }
}

impl EtaBox {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.half_width >= 0.0 && self.min > 0.0 && self.min <= self.max {
            Ok(())
        } else {
            Err(CalibrationError::InvalidConfig(format!(
                "invalid eta box {self:?}"
            )))
        }
    }

    /// `(eta_lo, eta_hi)` around the (negative) reference elasticity.
    pub fn around(&self, eta_ref: f64) -> (f64, f64) {
        let e = -eta_ref;
        let lo = (e - self.half_width).max(self.min).min(e);
        let hi = (e + self.half_width).min(self.max).max(e);
        (-hi, -lo)
    }
}

/// Model-consistent reference values with their admissible boxes.
///
/// Arrays are indexed by (node, period) or (trader, node, period); entries
/// of non-consumer nodes are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceData {
    pub lambda_ref: Array2,
    pub lambda_lo: Array2,
    pub lambda_hi: Array2,
    pub eta_ref: Array2,
    pub eta_lo: Array2,
    pub eta_hi: Array2,
    pub q_ref: Array3,
    /// Always the sum of `q_ref` over traders.
    pub s_ref: Array2,
}

impl ReferenceData {
    /// Builds reference data from sales with boxes collapsed onto the
    /// reference prices and elasticities.
    pub fn tight(lambda_ref: Array2, eta_ref: Array2, q_ref: Array3) -> Self {
        let s_ref = sum_over_traders(&q_ref);
        Self {
            lambda_lo: lambda_ref.clone(),
            lambda_hi: lambda_ref.clone(),
            eta_lo: eta_ref.clone(),
            eta_hi: eta_ref.clone(),
            lambda_ref,
            eta_ref,
            q_ref,
            s_ref,
        }
    }

    pub fn market(&self, n: usize, t: usize) -> MarketReference {
        MarketReference {
            lambda_ref: self.lambda_ref.at(n, t),
            lambda_lo: self.lambda_lo.at(n, t),
            lambda_hi: self.lambda_hi.at(n, t),
            eta_ref: self.eta_ref.at(n, t),
            eta_lo: self.eta_lo.at(n, t),
            eta_hi: self.eta_hi.at(n, t),
        }
    }

    /// Anchors through the reference point of every consumer market.
    pub fn anchors(&self, net: &MarketNetwork) -> AnchorSet {
        let mut a = Array2::filled(net.n_nodes(), net.n_periods(), None);
        for n in net.consumer_nodes() {
            for t in 0..net.n_periods() {
                a.set(
                    n,
                    t,
                    Some(DemandAnchor {
                        s0: self.s_ref.at(n, t),
                        lambda0: self.lambda_ref.at(n, t),
                        eta: self.eta_ref.at(n, t),
                    }),
                );
            }
        }
        a
    }

    pub fn validate(&self, net: &MarketNetwork) -> Result<(), CalibrationError> {
        let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
        let bad = |msg: String| Err(CalibrationError::InvalidInput(msg));
        for a in [
            &self.lambda_ref,
            &self.lambda_lo,
            &self.lambda_hi,
            &self.eta_ref,
            &self.eta_lo,
            &self.eta_hi,
            &self.s_ref,
        ] {
            if a.shape() != (nn, nt) {
                return bad(format!(
                    "reference array has shape {:?}, expected {:?}",
                    a.shape(),
                    (nn, nt)
                ));
            }
        }
        if self.q_ref.shape() != (nf, nn, nt) {
            return bad(format!("q_ref has shape {:?}", self.q_ref.shape()));
        }
        check_sales_reach(net, &self.q_ref)?;
        for n in net.consumer_nodes() {
            for t in 0..nt {
                let r = self.market(n, t);
                let where_ = format!("{}/{}", net.node_name(n), net.periods[t]);
                let finite = [
                    r.lambda_ref,
                    r.lambda_lo,
                    r.lambda_hi,
                    r.eta_ref,
                    r.eta_lo,
                    r.eta_hi,
                ]
                .iter()
                .all(|v| v.is_finite());
                if !finite {
                    return bad(format!("reference values at {where_} must be finite"));
                }
                if !(0.0 < r.lambda_lo
                    && r.lambda_lo <= r.lambda_ref
                    && r.lambda_ref <= r.lambda_hi)
                {
                    return bad(format!(
                        "price bounds at {where_} must satisfy 0 < lo <= ref <= hi"
                    ));
                }
                if !(r.eta_lo <= r.eta_ref && r.eta_ref <= r.eta_hi && r.eta_hi < 0.0) {
                    return bad(format!(
                        "elasticity bounds at {where_} must satisfy lo <= ref <= hi < 0"
                    ));
                }
                let s: f64 = (0..nf).map(|f| self.q_ref.at(f, n, t)).sum();
                if s != self.s_ref.at(n, t) {
                    return bad(format!("s_ref at {where_} is not the sum of trader sales"));
                }
                if s.is_nan() || s <= 0.0 {
                    return bad(format!("consumption at {where_} must be positive"));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn sum_over_traders(q: &Array3) -> Array2 {
    let (nf, nn, nt) = q.shape();
    let mut s = Array2::zeros(nn, nt);
    for n in 0..nn {
        for t in 0..nt {
            s.set(n, t, (0..nf).map(|f| q.at(f, n, t)).sum());
        }
    }
    s
}

fn check_sales_reach(net: &MarketNetwork, q: &Array3) -> Result<(), CalibrationError> {
    for ((f, n, t), v) in q.indexed() {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(CalibrationError::InconsistentData(format!(
                "sales of {} at {}/{} must be finite and nonnegative, got {v}",
                net.traders[f].id,
                net.node_name(n),
                net.periods[t]
            )));
        }
        if *v > 0.0 && !net.traders[f].consumers.contains(&n) {
            return Err(CalibrationError::InconsistentData(format!(
                "trader {} cannot sell at {}",
                net.traders[f].id,
                net.node_name(n)
            )));
        }
    }
    Ok(())
}

/// Raw observations before they are made consistent with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReference {
    pub lambda: Array2,
    pub lambda_lo: Array2,
    pub lambda_hi: Array2,
    pub eta: Array2,
    pub eta_lo: Array2,
    pub eta_hi: Array2,
    /// Sales per (trader, node, period).
    pub sales: Array3,
    /// Consumption per (node, period).
    pub consumption: Array2,
    /// Total production per (trader, period); `f64::INFINITY` if unknown.
    pub production: Array2,
    /// Estimated lost fraction of production per (trader, period).
    pub loss: Array2,
}

impl RawReference {
    /// Most each trader can sell in a period given its production and losses.
    pub fn sales_cap(&self, f: usize, t: usize) -> f64 {
        self.production.at(f, t) / (1.0 - self.loss.at(f, t))
    }

    /// Whether sales add up to consumption and respect production caps.
    pub fn is_consistent(&self, net: &MarketNetwork) -> bool {
        let (nf, nn, nt) = self.sales.shape();
        for n in 0..nn {
            if !net.consumer.get(n).copied().unwrap_or(false) {
                continue;
            }
            for t in 0..nt {
                let s: f64 = (0..nf).map(|f| self.sales.at(f, n, t)).sum();
                let target = self.consumption.at(n, t);
                if (s - target).abs() > zero_sales_tol(target) {
                    return false;
                }
            }
        }
        for f in 0..nf {
            for t in 0..nt {
                let total: f64 = (0..nn).map(|n| self.sales.at(f, n, t)).sum();
                if total > self.sales_cap(f, t) * (1.0 + 1e-12) {
                    return false;
                }
            }
        }
        true
    }

    fn validate(&self, net: &MarketNetwork) -> Result<(), CalibrationError> {
        let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
        let bad = |msg: String| Err(CalibrationError::InconsistentData(msg));
        for a in [
            &self.lambda,
            &self.lambda_lo,
            &self.lambda_hi,
            &self.eta,
            &self.eta_lo,
            &self.eta_hi,
            &self.consumption,
        ] {
            if a.shape() != (nn, nt) {
                return bad(format!(
                    "array has shape {:?}, expected {:?}",
                    a.shape(),
                    (nn, nt)
                ));
            }
        }
        if self.sales.shape() != (nf, nn, nt)
            || self.production.shape() != (nf, nt)
            || self.loss.shape() != (nf, nt)
        {
            return bad("sales, production or loss arrays have the wrong shape".into());
        }
        check_sales_reach(net, &self.sales)?;
        for ((f, t), p) in self.production.indexed() {
            if p.is_nan() || *p < 0.0 {
                return bad(format!(
                    "production of {} must be nonnegative",
                    net.traders[f].id
                ));
            }
            let l = self.loss.at(f, t);
            if !(0.0..1.0).contains(&l) {
                return bad(format!(
                    "loss estimate of {} must lie in [0, 1)",
                    net.traders[f].id
                ));
            }
        }
        for n in net.consumer_nodes() {
            for t in 0..nt {
                let s = self.consumption.at(n, t);
                if !(s > 0.0 && s.is_finite()) {
                    return bad(format!(
                        "consumption at {}/{} must be positive",
                        net.node_name(n),
                        net.periods[t]
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Makes raw observations consistent with the network.
///
/// Sales are first scaled down proportionally per (trader, period) to the
/// production cap `p / (1 - loss)` and per (node, period) to consumption.
/// If they then add up to consumption everywhere, they are returned
/// unchanged. Otherwise the model is solved with consumption pinned to the
/// observations, sales bounded below by the scaled data and trader totals
/// capped, and its sales become the reference.
pub fn preprocess_reference(
    net: &MarketNetwork,
    raw: &RawReference,
    config: &CalibrationConfig,
) -> Result<ReferenceData, CalibrationError> {
    net.validate()?;
    raw.validate(net)?;
    let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
    let mut q = raw.sales.clone();
    for f in 0..nf {
        for t in 0..nt {
            let total: f64 = (0..nn).map(|n| q.at(f, n, t)).sum();
            let cap = raw.sales_cap(f, t);
            if total > cap {
                let k = cap / total;
                for n in 0..nn {
                    *q.get_mut(f, n, t) *= k;
                }
            }
        }
    }
    let mut consistent = true;
    for n in net.consumer_nodes() {
        for t in 0..nt {
            let total: f64 = (0..nf).map(|f| q.at(f, n, t)).sum();
            let target = raw.consumption.at(n, t);
            if total > target {
                let k = target / total;
                for f in 0..nf {
                    *q.get_mut(f, n, t) *= k;
                }
            }
            let total: f64 = (0..nf).map(|f| q.at(f, n, t)).sum();
            if (total - target).abs() > zero_sales_tol(target) {
                consistent = false;
            }
        }
    }

    let q_ref = if consistent {
        q
    } else {
        let mut bounds = SalesBounds::vacuous(nf, nn, nt);
        bounds.lower = q;
        for n in net.consumer_nodes() {
            for t in 0..nt {
                bounds
                    .fixed_consumption
                    .set(n, t, Some(raw.consumption.at(n, t)));
            }
        }
        for f in 0..nf {
            for t in 0..nt {
                bounds.trader_cap.set(f, t, raw.sales_cap(f, t));
            }
        }
        let mut anchors = Array2::filled(nn, nt, None);
        for n in net.consumer_nodes() {
            for t in 0..nt {
                let a = DemandAnchor::new(
                    raw.consumption.at(n, t),
                    raw.lambda.at(n, t),
                    raw.eta.at(n, t),
                )?;
                anchors.set(n, t, Some(a));
            }
        }
        let theta = ThetaMatrix::uniform(nf, nn, nt, 1.0);
        let sys = assemble_bounded(net, &anchors, &theta, &bounds)?;
        let eq = solve_system(net, &sys, config.solver_tol).map_err(|e| {
            CalibrationError::InconsistentData(format!(
                "observed consumption cannot be supplied: {e}"
            ))
        })?;
        let mut q = eq.sales;
        for n in 0..nn {
            for t in 0..nt {
                let tol = zero_sales_tol(raw.consumption.at(n, t));
                for f in 0..nf {
                    if q.at(f, n, t) <= tol {
                        q.set(f, n, t, 0.0);
                    }
                }
            }
        }
        q
    };
    let s_ref = sum_over_traders(&q_ref);
    Ok(ReferenceData {
        lambda_ref: raw.lambda.clone(),
        lambda_lo: raw.lambda_lo.clone(),
        lambda_hi: raw.lambda_hi.clone(),
        eta_ref: raw.eta.clone(),
        eta_lo: raw.eta_lo.clone(),
        eta_hi: raw.eta_hi.clone(),
        q_ref,
        s_ref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_box_follows_recipe() {
        let b = EtaBox::default();
        let (lo, hi) = b.around(-0.47);
        assert!((lo + 0.67).abs() < 1e-15 && (hi + 0.3).abs() < 1e-15);
        let (lo, hi) = b.around(-0.9);
        assert_eq!(lo, -1.0);
        assert!((hi + 0.7).abs() < 1e-12);
        // A reference outside the clip range is still contained.
        let (lo, hi) = b.around(-1.4);
        assert_eq!(lo, -1.4);
        assert!(hi <= -1.2 + 1e-12);
    }
}
