use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Service provider types. `P` (production) counts as a service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ServiceKind {
    P,
    I,
    X,
    L,
    R,
    A,
    B,
}

impl ServiceKind {
    pub const ALL: [ServiceKind; 7] = [
        ServiceKind::P,
        ServiceKind::I,
        ServiceKind::X,
        ServiceKind::L,
        ServiceKind::R,
        ServiceKind::A,
        ServiceKind::B,
    ];

    pub fn is_arc(self) -> bool {
        matches!(self, ServiceKind::A | ServiceKind::B)
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// A service located at a node, with per-period data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub node: usize,
    /// Linear cost per period (currency/volume).
    pub linc: Vec<f64>,
    /// Quadratic cost per period; only read for production.
    pub quac: Vec<f64>,
    /// Capacity per period, `f64::INFINITY` when unbounded.
    pub cap: Vec<f64>,
    /// Capacity over all periods.
    pub cap_total: f64,
}

impl Facility {
    pub fn uncapacitated(node: usize, linc: Vec<f64>) -> Self {
        let n = linc.len();
        Self {
            node,
            linc,
            quac: vec![0.0; n],
            cap: vec![f64::INFINITY; n],
            cap_total: f64::INFINITY,
        }
    }
}

/// A pipeline or shipping route from `from` to `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    pub linc: Vec<f64>,
    pub cap: Vec<f64>,
    pub cap_total: f64,
}

impl Link {
    pub fn uncapacitated(from: usize, to: usize, linc: Vec<f64>) -> Self {
        let n = linc.len();
        Self {
            from,
            to,
            linc,
            cap: vec![f64::INFINITY; n],
            cap_total: f64::INFINITY,
        }
    }
}

/// What a trader can reach. Node entries index `MarketNetwork::nodes`,
/// `pipelines` and `ships` index the respective link lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trader {
    pub id: String,
    pub nodes: Vec<usize>,
    pub consumers: Vec<usize>,
    pub production: Vec<usize>,
    pub storage: Vec<usize>,
    pub pipelines: Vec<usize>,
    pub ships: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketNetwork {
    pub nodes: Vec<String>,
    pub periods: Vec<String>,
    /// Whether a consumer is active at each node.
    pub consumer: Vec<bool>,
    pub traders: Vec<Trader>,
    pub production: Vec<Facility>,
    pub injection: Vec<Facility>,
    pub extraction: Vec<Facility>,
    pub liquefaction: Vec<Facility>,
    pub regasification: Vec<Facility>,
    pub pipelines: Vec<Link>,
    pub ships: Vec<Link>,
}

impl MarketNetwork {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn n_traders(&self) -> usize {
        self.traders.len()
    }

    pub fn facilities(&self, kind: ServiceKind) -> &[Facility] {
        match kind {
            ServiceKind::P => &self.production,
            ServiceKind::I => &self.injection,
            ServiceKind::X => &self.extraction,
            ServiceKind::L => &self.liquefaction,
            ServiceKind::R => &self.regasification,
            ServiceKind::A | ServiceKind::B => &[],
        }
    }

    pub fn links(&self, kind: ServiceKind) -> &[Link] {
        match kind {
            ServiceKind::A => &self.pipelines,
            ServiceKind::B => &self.ships,
            _ => &[],
        }
    }

    /// Number of service instances of `kind` (facilities or links).
    pub fn service_count(&self, kind: ServiceKind) -> usize {
        if kind.is_arc() {
            self.links(kind).len()
        } else {
            self.facilities(kind).len()
        }
    }

    /// Per-period capacity, total capacity and linear cost of instance `idx`.
    pub fn service_data(&self, kind: ServiceKind, idx: usize) -> (&[f64], f64, &[f64]) {
        if kind.is_arc() {
            let l = &self.links(kind)[idx];
            (&l.cap, l.cap_total, &l.linc)
        } else {
            let f = &self.facilities(kind)[idx];
            (&f.cap, f.cap_total, &f.linc)
        }
    }

    /// Index of the facility of `kind` at `node`.
    pub fn facility_at(&self, kind: ServiceKind, node: usize) -> Option<usize> {
        self.facilities(kind).iter().position(|f| f.node == node)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn period_index(&self, id: &str) -> Option<usize> {
        self.periods.iter().position(|p| p == id)
    }

    pub fn trader_index(&self, id: &str) -> Option<usize> {
        self.traders.iter().position(|t| t.id == id)
    }

    /// Traders selling to the consumer at `node`.
    pub fn traders_at(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.traders
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.consumers.contains(&node))
            .map(|(f, _)| f)
    }

    pub fn consumer_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.consumer
            .iter()
            .enumerate()
            .filter(|(_, c)| **c)
            .map(|(n, _)| n)
    }

    /// Checks every structural invariant of the network.
    pub fn validate(&self) -> Result<(), ModelError> {
        let nn = self.n_nodes();
        let nt = self.n_periods();
        let bad = |field: String, reason: &str| ModelError::InvariantViolation {
            field,
            reason: reason.to_string(),
        };
        if nt == 0 {
            return Err(bad("periods".into(), "at least one period is required"));
        }
        if self.consumer.len() != nn {
            return Err(bad("consumer".into(), "one flag per node is required"));
        }
        let unique = |names: &[String], what: &str| -> Result<(), ModelError> {
            let mut seen = BTreeSet::new();
            for n in names {
                if !seen.insert(n.as_str()) {
                    return Err(bad(format!("{what}.{n}"), "duplicate id"));
                }
            }
            Ok(())
        };
        unique(&self.nodes, "nodes")?;
        unique(&self.periods, "periods")?;
        let ids: Vec<String> = self.traders.iter().map(|t| t.id.clone()).collect();
        unique(&ids, "traders")?;

        let check_series = |field: String, v: &[f64], allow_inf: bool| -> Result<(), ModelError> {
            if v.len() != nt {
                return Err(bad(field, "expected one value per period"));
            }
            for x in v {
                if x.is_nan() || (!allow_inf && x.is_infinite()) {
                    return Err(bad(field, "value is not a finite number"));
                }
                if *x < 0.0 {
                    return Err(bad(field, "must be nonnegative"));
                }
            }
            Ok(())
        };

        for kind in [
            ServiceKind::P,
            ServiceKind::I,
            ServiceKind::X,
            ServiceKind::L,
            ServiceKind::R,
        ] {
            let mut at = BTreeSet::new();
            for (i, fac) in self.facilities(kind).iter().enumerate() {
                let name = format!("services.{kind}[{i}]");
                if fac.node >= nn {
                    return Err(bad(format!("{name}.node"), "unknown node"));
                }
                if !at.insert(fac.node) {
                    return Err(bad(format!("{name}.node"), "duplicate service at node"));
                }
                check_series(format!("{name}.linc"), &fac.linc, false)?;
                check_series(format!("{name}.quac"), &fac.quac, false)?;
                check_series(format!("{name}.cap"), &fac.cap, true)?;
                if fac.cap_total.is_nan() || fac.cap_total < 0.0 {
                    return Err(bad(format!("{name}.cap_total"), "must be nonnegative"));
                }
            }
        }
        for kind in [ServiceKind::A, ServiceKind::B] {
            for (i, link) in self.links(kind).iter().enumerate() {
                let name = format!("arcs.{kind}[{i}]");
                if link.from >= nn || link.to >= nn {
                    return Err(bad(name, "arc references an unknown node"));
                }
                if link.from == link.to {
                    return Err(bad(name, "arc must connect two distinct nodes"));
                }
                check_series(format!("{name}.linc"), &link.linc, false)?;
                check_series(format!("{name}.cap"), &link.cap, true)?;
                if link.cap_total.is_nan() || link.cap_total < 0.0 {
                    return Err(bad(format!("{name}.cap_total"), "must be nonnegative"));
                }
                if kind == ServiceKind::B {
                    if self.facility_at(ServiceKind::L, link.from).is_none() {
                        return Err(bad(name, "shipping route needs liquefaction at its origin"));
                    }
                    if self.facility_at(ServiceKind::R, link.to).is_none() {
                        return Err(bad(name, "shipping route needs regasification at its end"));
                    }
                }
            }
        }

        for (f, tr) in self.traders.iter().enumerate() {
            self.validate_reach(f, tr)?;
        }
        Ok(())
    }

    fn validate_reach(&self, f: usize, tr: &Trader) -> Result<(), ModelError> {
        let nn = self.n_nodes();
        let unreachable = |service: String| ModelError::UnreachableService {
            trader: tr.id.clone(),
            service,
        };
        if let Some(n) = tr.nodes.iter().find(|&&n| n >= nn) {
            return Err(ModelError::InvariantViolation {
                field: format!("traders[{f}].nodes"),
                reason: format!("unknown node index {n}"),
            });
        }
        let in_reach = |n: usize| tr.nodes.contains(&n);
        for &n in &tr.consumers {
            if n >= nn || !self.consumer[n] || !in_reach(n) {
                return Err(unreachable(format!("C@{}", self.node_name(n))));
            }
        }
        for &n in &tr.production {
            if n >= nn || self.facility_at(ServiceKind::P, n).is_none() || !in_reach(n) {
                return Err(unreachable(format!("P@{}", self.node_name(n))));
            }
        }
        for &n in &tr.storage {
            let has = self.facility_at(ServiceKind::I, n).is_some()
                || self.facility_at(ServiceKind::X, n).is_some();
            if n >= nn || !has || !in_reach(n) {
                return Err(unreachable(format!("S@{}", self.node_name(n))));
            }
        }
        for (kind, list) in [(ServiceKind::A, &tr.pipelines), (ServiceKind::B, &tr.ships)] {
            for &a in list {
                let links = self.links(kind);
                if a >= links.len() || !in_reach(links[a].from) || !in_reach(links[a].to) {
                    return Err(unreachable(format!("{kind}[{a}]")));
                }
            }
        }
        Ok(())
    }

    /// A trader reaching `nodes` together with every consumer, facility and
    /// link located entirely inside them.
    pub fn full_reach(&self, id: &str, nodes: &[usize]) -> Trader {
        let mut reach: Vec<usize> = nodes.to_vec();
        reach.sort_unstable();
        reach.dedup();
        let inside = |n: usize| reach.binary_search(&n).is_ok();
        let with = |pred: &dyn Fn(usize) -> bool| -> Vec<usize> {
            reach.iter().copied().filter(|&n| pred(n)).collect()
        };
        let links = |list: &[Link]| -> Vec<usize> {
            (0..list.len())
                .filter(|&a| inside(list[a].from) && inside(list[a].to))
                .collect()
        };
        Trader {
            id: id.to_string(),
            consumers: with(&|n| self.consumer.get(n).copied().unwrap_or(false)),
            production: with(&|n| self.facility_at(ServiceKind::P, n).is_some()),
            storage: with(&|n| {
                self.facility_at(ServiceKind::I, n).is_some()
                    || self.facility_at(ServiceKind::X, n).is_some()
            }),
            pipelines: links(&self.pipelines),
            ships: links(&self.ships),
            nodes: reach.clone(),
        }
    }

    pub fn node_name(&self, n: usize) -> &str {
        self.nodes.get(n).map(String::as_str).unwrap_or("?")
    }
}
