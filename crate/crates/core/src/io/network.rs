use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, IoError};
use crate::array::Array2;
use crate::market::{AnchorSet, DemandAnchor, Facility, Link, MarketNetwork, ThetaMatrix, Trader};

/// Network file. Services and arcs reference nodes by id; traders reference
/// nodes and arcs by id. Omitted trader reach lists default to everything
/// located inside the trader's nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: Vec<NodeEntry>,
    pub periods: Vec<String>,
    pub traders: Vec<TraderEntry>,
    #[serde(default)]
    pub services: ServicesEntry,
    #[serde(default)]
    pub arcs: ArcsEntry,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<AnchorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: String,
    /// Whether the node has final consumers.
    #[serde(default)]
    pub consumer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraderEntry {
    pub id: String,
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consumers: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub production: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<Vec<String>>,
    /// Pipeline arc ids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipelines: Option<Vec<String>>,
    /// Shipping route ids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ships: Option<Vec<String>>,
}

/// Node services: production, storage injection and extraction,
/// liquefaction and regasification.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServicesEntry {
    #[serde(rename = "P", default)]
    pub production: Vec<FacilityEntry>,
    #[serde(rename = "I", default)]
    pub injection: Vec<FacilityEntry>,
    #[serde(rename = "X", default)]
    pub extraction: Vec<FacilityEntry>,
    #[serde(rename = "L", default)]
    pub liquefaction: Vec<FacilityEntry>,
    #[serde(rename = "R", default)]
    pub regasification: Vec<FacilityEntry>,
}

/// Per-period series have one value per period. Capacities of `null` are
/// unbounded; omitted capacities are unbounded everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacilityEntry {
    pub node: String,
    pub linc: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quac: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_total: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcsEntry {
    /// Pipelines.
    #[serde(rename = "A", default)]
    pub pipelines: Vec<ArcEntry>,
    /// LNG shipping routes.
    #[serde(rename = "B", default)]
    pub ships: Vec<ArcEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcEntry {
    /// Defaults to `"{from}-{to}"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub from: String,
    pub to: String,
    pub linc: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap_total: Option<f64>,
}

impl ArcEntry {
    fn key(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.from, self.to))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorEntry {
    pub node: String,
    pub period: String,
    pub s0: f64,
    pub lambda0: f64,
    pub eta: f64,
}

/// Market power file: a default value plus per-(trader, node, period)
/// overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaFile {
    #[serde(default = "one")]
    pub default: f64,
    #[serde(default)]
    pub entries: Vec<ThetaEntry>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaEntry {
    pub trader: String,
    pub node: String,
    pub period: String,
    pub theta: f64,
}

impl ThetaFile {
    /// File representation of `theta`: entries for every market a trader
    /// serves with a value other than the default of one.
    pub fn from_theta(net: &MarketNetwork, theta: &ThetaMatrix) -> Self {
        let mut entries = Vec::new();
        for t in 0..net.n_periods() {
            for n in net.consumer_nodes() {
                for f in net.traders_at(n) {
                    let v = theta.at(f, n, t);
                    if v != 1.0 {
                        entries.push(ThetaEntry {
                            trader: net.traders[f].id.clone(),
                            node: net.nodes[n].clone(),
                            period: net.periods[t].clone(),
                            theta: v,
                        });
                    }
                }
            }
        }
        Self {
            default: 1.0,
            entries,
        }
    }
}

/// A validated network with the anchors its file carried (possibly none).
#[derive(Debug, Clone)]
pub struct NetworkData {
    pub network: MarketNetwork,
    pub anchors: AnchorSet,
}

struct Ids<'a> {
    path: &'a Path,
    map: BTreeMap<&'a str, usize>,
}

impl<'a> Ids<'a> {
    fn new(path: &'a Path, ids: impl Iterator<Item = &'a str>) -> Self {
        Self {
            path,
            map: ids.enumerate().map(|(i, s)| (s, i)).collect(),
        }
    }

    fn get(&self, id: &str, field: impl Into<String>) -> Result<usize, IoError> {
        self.map
            .get(id)
            .copied()
            .ok_or_else(|| IoError::schema(self.path, field, format!("unknown id \"{id}\"")))
    }

    fn list(&self, ids: &[String], field: &str) -> Result<Vec<usize>, IoError> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| self.get(id, format!("{field}[{i}]")))
            .collect()
    }
}

fn unbounded(v: Option<&Vec<Option<f64>>>, nt: usize) -> Vec<f64> {
    match v {
        Some(v) => v.iter().map(|c| c.unwrap_or(f64::INFINITY)).collect(),
        None => vec![f64::INFINITY; nt],
    }
}

fn bounded(v: &[f64]) -> Option<Vec<Option<f64>>> {
    if v.iter().all(|c| c.is_infinite()) {
        None
    } else {
        Some(v.iter().map(|c| c.is_finite().then_some(*c)).collect())
    }
}

impl NetworkFile {
    /// Resolves ids and validates the network and its anchors.
    pub fn resolve(&self, path: &Path) -> Result<NetworkData, IoError> {
        let nt = self.periods.len();
        let nodes = Ids::new(path, self.nodes.iter().map(|n| n.id.as_str()));
        let periods = Ids::new(path, self.periods.iter().map(String::as_str));
        let mut net = MarketNetwork {
            nodes: self.nodes.iter().map(|n| n.id.clone()).collect(),
            periods: self.periods.clone(),
            consumer: self.nodes.iter().map(|n| n.consumer).collect(),
            ..Default::default()
        };
        let facilities = |list: &[FacilityEntry], name: &str| -> Result<Vec<Facility>, IoError> {
            list.iter()
                .enumerate()
                .map(|(i, e)| {
                    Ok(Facility {
                        node: nodes.get(&e.node, format!("services.{name}[{i}].node"))?,
                        linc: e.linc.clone(),
                        quac: e.quac.clone().unwrap_or_else(|| vec![0.0; nt]),
                        cap: unbounded(e.cap.as_ref(), nt),
                        cap_total: e.cap_total.unwrap_or(f64::INFINITY),
                    })
                })
                .collect()
        };
        net.production = facilities(&self.services.production, "P")?;
        net.injection = facilities(&self.services.injection, "I")?;
        net.extraction = facilities(&self.services.extraction, "X")?;
        net.liquefaction = facilities(&self.services.liquefaction, "L")?;
        net.regasification = facilities(&self.services.regasification, "R")?;
        let links = |list: &[ArcEntry], name: &str| -> Result<Vec<Link>, IoError> {
            let mut seen = BTreeSet::new();
            list.iter()
                .enumerate()
                .map(|(i, e)| {
                    if !seen.insert(e.key()) {
                        return Err(IoError::schema(
                            path,
                            format!("arcs.{name}[{i}].id"),
                            "duplicate arc id",
                        ));
                    }
                    Ok(Link {
                        from: nodes.get(&e.from, format!("arcs.{name}[{i}].from"))?,
                        to: nodes.get(&e.to, format!("arcs.{name}[{i}].to"))?,
                        linc: e.linc.clone(),
                        cap: unbounded(e.cap.as_ref(), nt),
                        cap_total: e.cap_total.unwrap_or(f64::INFINITY),
                    })
                })
                .collect()
        };
        net.pipelines = links(&self.arcs.pipelines, "A")?;
        net.ships = links(&self.arcs.ships, "B")?;
        let pipe_keys: Vec<String> = self.arcs.pipelines.iter().map(ArcEntry::key).collect();
        let ship_keys: Vec<String> = self.arcs.ships.iter().map(ArcEntry::key).collect();
        let pipes = Ids::new(path, pipe_keys.iter().map(String::as_str));
        let ships = Ids::new(path, ship_keys.iter().map(String::as_str));

        for (f, e) in self.traders.iter().enumerate() {
            let field = |x: &str| format!("traders[{f}].{x}");
            let reach = nodes.list(&e.nodes, &field("nodes"))?;
            let full = net.full_reach(&e.id, &reach);
            let pick = |v: &Option<Vec<String>>, ids: &Ids, name: &str, default: Vec<usize>| match v
            {
                Some(list) => ids.list(list, &field(name)),
                None => Ok(default),
            };
            let trader = Trader {
                id: e.id.clone(),
                nodes: reach.clone(),
                consumers: pick(&e.consumers, &nodes, "consumers", full.consumers)?,
                production: pick(&e.production, &nodes, "production", full.production)?,
                storage: pick(&e.storage, &nodes, "storage", full.storage)?,
                pipelines: pick(&e.pipelines, &pipes, "pipelines", full.pipelines)?,
                ships: pick(&e.ships, &ships, "ships", full.ships)?,
            };
            net.traders.push(trader);
        }
        net.validate()?;
        let anchors = resolve_anchors(path, &net, &self.anchors, &nodes, &periods)?;
        Ok(NetworkData {
            network: net,
            anchors,
        })
    }

    /// File representation of a network with optional anchors.
    pub fn from_network(net: &MarketNetwork, anchors: Option<&AnchorSet>) -> Self {
        let name = |n: usize| net.nodes[n].clone();
        let names = |v: &[usize]| v.iter().map(|&n| name(n)).collect::<Vec<_>>();
        let arc_id = |l: &Link| format!("{}-{}", name(l.from), name(l.to));
        let facilities = |list: &[Facility], quadratic: bool| -> Vec<FacilityEntry> {
            list.iter()
                .map(|fac| FacilityEntry {
                    node: name(fac.node),
                    linc: fac.linc.clone(),
                    quac: (quadratic && fac.quac.iter().any(|q| *q != 0.0))
                        .then(|| fac.quac.clone()),
                    cap: bounded(&fac.cap),
                    cap_total: fac.cap_total.is_finite().then_some(fac.cap_total),
                })
                .collect()
        };
        let arcs = |list: &[Link]| -> Vec<ArcEntry> {
            let mut count: BTreeMap<String, usize> = BTreeMap::new();
            for l in list {
                *count.entry(arc_id(l)).or_default() += 1;
            }
            let mut seen: BTreeMap<String, usize> = BTreeMap::new();
            list.iter()
                .map(|l| {
                    let base = arc_id(l);
                    // Parallel arcs get numbered ids.
                    let id = if count[&base] > 1 {
                        let k = seen.entry(base.clone()).or_default();
                        *k += 1;
                        Some(format!("{base}#{k}"))
                    } else {
                        None
                    };
                    ArcEntry {
                        id,
                        from: name(l.from),
                        to: name(l.to),
                        linc: l.linc.clone(),
                        cap: bounded(&l.cap),
                        cap_total: l.cap_total.is_finite().then_some(l.cap_total),
                    }
                })
                .collect()
        };
        let pipelines = arcs(&net.pipelines);
        let ships = arcs(&net.ships);
        let traders = net
            .traders
            .iter()
            .map(|tr| {
                let full = net.full_reach(&tr.id, &tr.nodes);
                let explicit = |v: &[usize], d: &[usize], f: &dyn Fn(&[usize]) -> Vec<String>| {
                    (v != d).then(|| f(v))
                };
                TraderEntry {
                    id: tr.id.clone(),
                    nodes: names(&tr.nodes),
                    consumers: explicit(&tr.consumers, &full.consumers, &names),
                    production: explicit(&tr.production, &full.production, &names),
                    storage: explicit(&tr.storage, &full.storage, &names),
                    pipelines: explicit(&tr.pipelines, &full.pipelines, &|v| {
                        arc_names(&pipelines, v)
                    }),
                    ships: explicit(&tr.ships, &full.ships, &|v| arc_names(&ships, v)),
                }
            })
            .collect();
        let mut anchor_entries = Vec::new();
        if let Some(a) = anchors {
            for t in 0..net.n_periods() {
                for n in 0..net.n_nodes() {
                    if let Some(x) = a.get(n, t) {
                        anchor_entries.push(AnchorEntry {
                            node: name(n),
                            period: net.periods[t].clone(),
                            s0: x.s0,
                            lambda0: x.lambda0,
                            eta: x.eta,
                        });
                    }
                }
            }
        }
        NetworkFile {
            nodes: net
                .nodes
                .iter()
                .zip(&net.consumer)
                .map(|(id, &consumer)| NodeEntry {
                    id: id.clone(),
                    consumer,
                })
                .collect(),
            periods: net.periods.clone(),
            traders,
            services: ServicesEntry {
                production: facilities(&net.production, true),
                injection: facilities(&net.injection, false),
                extraction: facilities(&net.extraction, false),
                liquefaction: facilities(&net.liquefaction, false),
                regasification: facilities(&net.regasification, false),
            },
            arcs: ArcsEntry { pipelines, ships },
            anchors: anchor_entries,
        }
    }
}

fn arc_names(list: &[ArcEntry], v: &[usize]) -> Vec<String> {
    v.iter().map(|&a| list[a].key()).collect()
}

fn resolve_anchors(
    path: &Path,
    net: &MarketNetwork,
    entries: &[AnchorEntry],
    nodes: &Ids,
    periods: &Ids,
) -> Result<AnchorSet, IoError> {
    let mut anchors: AnchorSet = Array2::filled(net.n_nodes(), net.n_periods(), None);
    for (i, e) in entries.iter().enumerate() {
        let n = nodes.get(&e.node, format!("anchors[{i}].node"))?;
        let t = periods.get(&e.period, format!("anchors[{i}].period"))?;
        if anchors.get(n, t).is_some() {
            return Err(IoError::schema(
                path,
                format!("anchors[{i}]"),
                "duplicate anchor",
            ));
        }
        anchors.set(n, t, Some(DemandAnchor::new(e.s0, e.lambda0, e.eta)?));
    }
    Ok(anchors)
}

/// Loads and validates a network file.
pub fn load_network(path: &Path) -> Result<NetworkData, IoError> {
    let file: NetworkFile = read_json(path)?;
    file.resolve(path)
}

/// Loads a JSON array of anchors for `net`.
pub fn load_anchors(path: &Path, net: &MarketNetwork) -> Result<AnchorSet, IoError> {
    let entries: Vec<AnchorEntry> = read_json(path)?;
    let nodes = Ids::new(path, net.nodes.iter().map(String::as_str));
    let periods = Ids::new(path, net.periods.iter().map(String::as_str));
    resolve_anchors(path, net, &entries, &nodes, &periods)
}

/// Loads a market power file for `net`.
pub fn load_theta(path: &Path, net: &MarketNetwork) -> Result<ThetaMatrix, IoError> {
    let file: ThetaFile = read_json(path)?;
    let traders = Ids::new(path, net.traders.iter().map(|t| t.id.as_str()));
    let nodes = Ids::new(path, net.nodes.iter().map(String::as_str));
    let periods = Ids::new(path, net.periods.iter().map(String::as_str));
    let check = |v: f64, field: String| {
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(IoError::schema(
                path,
                field,
                "market power must be finite and nonnegative",
            ))
        }
    };
    let default = check(file.default, "default".into())?;
    let mut theta = ThetaMatrix::uniform(net.n_traders(), net.n_nodes(), net.n_periods(), default);
    for (i, e) in file.entries.iter().enumerate() {
        let f = traders.get(&e.trader, format!("entries[{i}].trader"))?;
        let n = nodes.get(&e.node, format!("entries[{i}].node"))?;
        let t = periods.get(&e.period, format!("entries[{i}].period"))?;
        theta.set(f, n, t, check(e.theta, format!("entries[{i}].theta"))?);
    }
    Ok(theta)
}
