use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, IoError};
use crate::array::{Array2, Array3};
use crate::calibration::{EtaBox, RawReference, ReferenceData};
use crate::market::MarketNetwork;

/// Reference data file: observed prices, elasticities and consumption per
/// consumer market, observed sales per trader and market, and optionally
/// production totals and loss estimates per trader and period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    pub markets: Vec<MarketEntry>,
    pub sales: Vec<SaleEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub production: Vec<ProductionEntry>,
}

/// One consumer market. Elasticity bounds default to the configured box
/// around the reference elasticity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketEntry {
    pub node: String,
    pub period: String,
    pub lambda: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_hi: Option<f64>,
    pub consumption: f64,
}

/// Sales of a trader in a market; omitted entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaleEntry {
    pub trader: String,
    pub node: String,
    pub period: String,
    pub value: f64,
}

/// Total production of a trader in a period and the estimated fraction lost
/// before reaching consumers. Omitted totals are unknown (no cap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductionEntry {
    pub trader: String,
    pub period: String,
    pub total: f64,
    #[serde(default)]
    pub loss: f64,
}

/// Raw reference data with a flag telling whether sales already add up to
/// consumption and respect the production caps.
#[derive(Debug, Clone)]
pub struct LoadedReference {
    pub raw: RawReference,
    pub consistent: bool,
}

fn index<'a>(ids: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    ids.enumerate().map(|(i, s)| (s, i)).collect()
}

impl ReferenceFile {
    pub fn resolve(
        &self,
        path: &Path,
        net: &MarketNetwork,
        eta_box: &EtaBox,
    ) -> Result<LoadedReference, IoError> {
        let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
        let nodes = index(net.nodes.iter().map(String::as_str));
        let periods = index(net.periods.iter().map(String::as_str));
        let traders = index(net.traders.iter().map(|t| t.id.as_str()));
        let get = |map: &BTreeMap<&str, usize>, id: &str, field: String| {
            map.get(id)
                .copied()
                .ok_or_else(|| IoError::schema(path, field, format!("unknown id \"{id}\"")))
        };
        let zeros = || Array2::zeros(nn, nt);
        let mut raw = RawReference {
            lambda: zeros(),
            lambda_lo: zeros(),
            lambda_hi: zeros(),
            eta: zeros(),
            eta_lo: zeros(),
            eta_hi: zeros(),
            sales: Array3::zeros(nf, nn, nt),
            consumption: Array2::zeros(nn, nt),
            production: Array2::filled(nf, nt, f64::INFINITY),
            loss: Array2::zeros(nf, nt),
        };
        let mut seen = Array2::filled(nn, nt, false);
        for (i, m) in self.markets.iter().enumerate() {
            let n = get(&nodes, &m.node, format!("markets[{i}].node"))?;
            let t = get(&periods, &m.period, format!("markets[{i}].period"))?;
            if !net.consumer[n] {
                return Err(IoError::schema(
                    path,
                    format!("markets[{i}].node"),
                    "node has no consumers",
                ));
            }
            if *seen.get(n, t) {
                return Err(IoError::schema(
                    path,
                    format!("markets[{i}]"),
                    "duplicate market",
                ));
            }
            seen.set(n, t, true);
            let (lo, hi) = eta_box.around(m.eta);
            raw.lambda.set(n, t, m.lambda);
            raw.lambda_lo.set(n, t, m.lambda_lo);
            raw.lambda_hi.set(n, t, m.lambda_hi);
            raw.eta.set(n, t, m.eta);
            raw.eta_lo.set(n, t, m.eta_lo.unwrap_or(lo));
            raw.eta_hi.set(n, t, m.eta_hi.unwrap_or(hi));
            raw.consumption.set(n, t, m.consumption);
        }
        for n in net.consumer_nodes() {
            for t in 0..nt {
                if !*seen.get(n, t) {
                    return Err(IoError::schema(
                        path,
                        "markets",
                        format!("missing market {}/{}", net.nodes[n], net.periods[t]),
                    ));
                }
            }
        }
        let mut seen = Array3::filled(nf, nn, nt, false);
        for (i, s) in self.sales.iter().enumerate() {
            let f = get(&traders, &s.trader, format!("sales[{i}].trader"))?;
            let n = get(&nodes, &s.node, format!("sales[{i}].node"))?;
            let t = get(&periods, &s.period, format!("sales[{i}].period"))?;
            if *seen.get(f, n, t) {
                return Err(IoError::schema(
                    path,
                    format!("sales[{i}]"),
                    "duplicate sales entry",
                ));
            }
            seen.set(f, n, t, true);
            raw.sales.set(f, n, t, s.value);
        }
        let mut seen = Array2::filled(nf, nt, false);
        for (i, p) in self.production.iter().enumerate() {
            let f = get(&traders, &p.trader, format!("production[{i}].trader"))?;
            let t = get(&periods, &p.period, format!("production[{i}].period"))?;
            if *seen.get(f, t) {
                return Err(IoError::schema(
                    path,
                    format!("production[{i}]"),
                    "duplicate production entry",
                ));
            }
            seen.set(f, t, true);
            raw.production.set(f, t, p.total);
            raw.loss.set(f, t, p.loss);
        }
        let consistent = raw.is_consistent(net);
        Ok(LoadedReference { raw, consistent })
    }

    /// File representation of consistent reference data.
    pub fn from_reference(net: &MarketNetwork, r: &ReferenceData) -> Self {
        let mut markets = Vec::new();
        let mut sales = Vec::new();
        for t in 0..net.n_periods() {
            for n in net.consumer_nodes() {
                markets.push(MarketEntry {
                    node: net.nodes[n].clone(),
                    period: net.periods[t].clone(),
                    lambda: r.lambda_ref.at(n, t),
                    lambda_lo: r.lambda_lo.at(n, t),
                    lambda_hi: r.lambda_hi.at(n, t),
                    eta: r.eta_ref.at(n, t),
                    eta_lo: Some(r.eta_lo.at(n, t)),
                    eta_hi: Some(r.eta_hi.at(n, t)),
                    consumption: r.s_ref.at(n, t),
                });
                for f in net.traders_at(n) {
                    sales.push(SaleEntry {
                        trader: net.traders[f].id.clone(),
                        node: net.nodes[n].clone(),
                        period: net.periods[t].clone(),
                        value: r.q_ref.at(f, n, t),
                    });
                }
            }
        }
        Self {
            markets,
            sales,
            production: Vec::new(),
        }
    }

    /// File representation of raw, possibly inconsistent, reference data.
    /// Production totals are written where they are finite.
    pub fn from_raw(net: &MarketNetwork, raw: &RawReference) -> Self {
        let mut markets = Vec::new();
        let mut sales = Vec::new();
        for t in 0..net.n_periods() {
            for n in net.consumer_nodes() {
                markets.push(MarketEntry {
                    node: net.nodes[n].clone(),
                    period: net.periods[t].clone(),
                    lambda: raw.lambda.at(n, t),
                    lambda_lo: raw.lambda_lo.at(n, t),
                    lambda_hi: raw.lambda_hi.at(n, t),
                    eta: raw.eta.at(n, t),
                    eta_lo: Some(raw.eta_lo.at(n, t)),
                    eta_hi: Some(raw.eta_hi.at(n, t)),
                    consumption: raw.consumption.at(n, t),
                });
                for f in net.traders_at(n) {
                    sales.push(SaleEntry {
                        trader: net.traders[f].id.clone(),
                        node: net.nodes[n].clone(),
                        period: net.periods[t].clone(),
                        value: raw.sales.at(f, n, t),
                    });
                }
            }
        }
        let mut production = Vec::new();
        for t in 0..net.n_periods() {
            for (f, trader) in net.traders.iter().enumerate() {
                let total = raw.production.at(f, t);
                if total.is_finite() {
                    production.push(ProductionEntry {
                        trader: trader.id.clone(),
                        period: net.periods[t].clone(),
                        total,
                        loss: raw.loss.at(f, t),
                    });
                }
            }
        }
        Self {
            markets,
            sales,
            production,
        }
    }
}

/// Loads a reference file for `net`. Elasticity bounds missing from the
/// file are filled in from `eta_box`.
pub fn load_reference(
    path: &Path,
    net: &MarketNetwork,
    eta_box: &EtaBox,
) -> Result<LoadedReference, IoError> {
    let file: ReferenceFile = read_json(path)?;
    file.resolve(path, net, eta_box)
}
