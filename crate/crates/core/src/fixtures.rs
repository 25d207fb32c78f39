//! Seeded synthetic markets for tests, benchmarks and the CLI `generate`
//! command.
//!
//! Every generator is deterministic in its seed: the same seed always
//! produces bit-identical networks and anchors.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::array::{Array2, Array3};
use crate::calibration::{EtaBox, RawReference, ReferenceData};
use crate::market::{
    assemble_base, solve_system, AnchorSet, DemandAnchor, Equilibrium, Facility, Link,
    MarketNetwork, ModelError, ServiceKind, ThetaMatrix,
};

/// A network with demand anchors and market power parameters.
#[derive(Debug, Clone)]
pub struct Instance {
    pub network: MarketNetwork,
    pub anchors: AnchorSet,
    pub theta: ThetaMatrix,
}

impl Instance {
    fn new(network: MarketNetwork) -> Self {
        let (nf, nn, nt) = (network.n_traders(), network.n_nodes(), network.n_periods());
        Self {
            anchors: Array2::filled(nn, nt, None),
            theta: ThetaMatrix::uniform(nf, nn, nt, 0.0),
            network,
        }
    }

    /// Sets the same anchor for every period at `node`.
    pub fn set_anchor(&mut self, node: usize, anchor: DemandAnchor) {
        for t in 0..self.network.n_periods() {
            self.anchors.set(node, t, Some(anchor));
        }
    }

    /// Sets `theta` for trader `f` in every market it serves.
    pub fn set_theta(&mut self, f: usize, theta: f64) {
        for &n in &self.network.traders[f].consumers.clone() {
            for t in 0..self.network.n_periods() {
                self.theta.set(f, n, t, theta);
            }
        }
    }
}

/// Incremental construction of a [`MarketNetwork`] with per-period data
/// given as a scalar and optional per-period multipliers.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    net: MarketNetwork,
}

impl NetworkBuilder {
    pub fn new(periods: usize) -> Self {
        Self {
            net: MarketNetwork {
                periods: (1..=periods).map(|t| format!("t{t}")).collect(),
                ..Default::default()
            },
        }
    }

    fn series(&self, v: f64) -> Vec<f64> {
        vec![v; self.net.n_periods()]
    }

    pub fn node(&mut self, name: &str, consumer: bool) -> usize {
        self.net.nodes.push(name.to_string());
        self.net.consumer.push(consumer);
        self.net.nodes.len() - 1
    }

    pub fn production(&mut self, node: usize, linc: f64, quac: f64, cap: f64) -> &mut Self {
        let mut f = Facility::uncapacitated(node, self.series(linc));
        f.quac = self.series(quac);
        f.cap = self.series(cap);
        self.net.production.push(f);
        self
    }

    pub fn storage(&mut self, node: usize, linc_in: f64, linc_out: f64, cap: f64) -> &mut Self {
        let mut i = Facility::uncapacitated(node, self.series(linc_in));
        i.cap = self.series(cap);
        let mut x = Facility::uncapacitated(node, self.series(linc_out));
        x.cap = self.series(cap);
        self.net.injection.push(i);
        self.net.extraction.push(x);
        self
    }

    pub fn liquefaction(&mut self, node: usize, linc: f64, cap: f64) -> &mut Self {
        let mut f = Facility::uncapacitated(node, self.series(linc));
        f.cap = self.series(cap);
        self.net.liquefaction.push(f);
        self
    }

    pub fn regasification(&mut self, node: usize, linc: f64, cap: f64) -> &mut Self {
        let mut f = Facility::uncapacitated(node, self.series(linc));
        f.cap = self.series(cap);
        self.net.regasification.push(f);
        self
    }

    pub fn pipeline(&mut self, from: usize, to: usize, linc: f64, cap: f64) -> usize {
        let mut l = Link::uncapacitated(from, to, self.series(linc));
        l.cap = self.series(cap);
        self.net.pipelines.push(l);
        self.net.pipelines.len() - 1
    }

    pub fn ship(&mut self, from: usize, to: usize, linc: f64, cap: f64) -> usize {
        let mut l = Link::uncapacitated(from, to, self.series(linc));
        l.cap = self.series(cap);
        self.net.ships.push(l);
        self.net.ships.len() - 1
    }

    /// Multiplies per-period linear costs of every service in period `t`.
    pub fn seasonal_cost(&mut self, t: usize, factor: f64) -> &mut Self {
        for kind in [
            ServiceKind::P,
            ServiceKind::I,
            ServiceKind::X,
            ServiceKind::L,
            ServiceKind::R,
        ] {
            let list = match kind {
                ServiceKind::P => &mut self.net.production,
                ServiceKind::I => &mut self.net.injection,
                ServiceKind::X => &mut self.net.extraction,
                ServiceKind::L => &mut self.net.liquefaction,
                _ => &mut self.net.regasification,
            };
            for f in list {
                f.linc[t] *= factor;
            }
        }
        for l in self
            .net
            .pipelines
            .iter_mut()
            .chain(self.net.ships.iter_mut())
        {
            l.linc[t] *= factor;
        }
        self
    }

    /// Adds a trader reaching every service located on `nodes`: production,
    /// storage, consumers, and arcs with both ends inside the set.
    pub fn trader(&mut self, id: &str, nodes: &[usize]) -> usize {
        let tr = self.net.full_reach(id, nodes);
        self.net.traders.push(tr);
        self.net.traders.len() - 1
    }

    pub fn build(self) -> MarketNetwork {
        self.net
    }
}

/// One supplier of a single market: production cost at its own source node
/// plus a transport cost to the market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supplier {
    pub linc: f64,
    pub quac: f64,
    pub transport: f64,
}

impl Supplier {
    pub fn constant(cost: f64) -> Self {
        Self {
            linc: cost,
            quac: 0.0,
            transport: 0.0,
        }
    }

    /// Marginal cost of delivering `q` to the market.
    pub fn marginal_cost(&self, q: f64) -> f64 {
        self.linc + self.quac * q + self.transport
    }
}

/// A single consumer node `market` served by one source node per supplier.
pub fn single_market(suppliers: &[Supplier], periods: usize, anchor: DemandAnchor) -> Instance {
    let mut b = NetworkBuilder::new(periods);
    let market = b.node("market", true);
    for (i, s) in suppliers.iter().enumerate() {
        let src = b.node(&format!("src{}", i + 1), false);
        b.production(src, s.linc, s.quac, f64::INFINITY);
        b.pipeline(src, market, s.transport, f64::INFINITY);
    }
    for i in 0..suppliers.len() {
        b.trader(&format!("f{}", i + 1), &[market, i + 1]);
    }
    let mut inst = Instance::new(b.build());
    inst.set_anchor(market, anchor);
    inst
}

/// Two-node market with pipelines and an LNG chain in both directions and
/// storage at both nodes. Trader `f1` produces at `n`, `f2` at `m`; both
/// reach everything else. Data is symmetric under swapping the nodes.
pub fn two_node(cost: f64, transport: f64, anchor: DemandAnchor, theta: f64) -> Instance {
    let mut b = NetworkBuilder::new(2);
    let n = b.node("n", true);
    let m = b.node("m", true);
    for node in [n, m] {
        b.production(node, cost, 0.05, f64::INFINITY);
        b.storage(node, 1.0, 1.0, f64::INFINITY);
        b.liquefaction(node, 0.5 * transport, f64::INFINITY);
        b.regasification(node, 0.25 * transport, f64::INFINITY);
    }
    b.pipeline(n, m, transport, f64::INFINITY);
    b.pipeline(m, n, transport, f64::INFINITY);
    b.ship(n, m, 0.5 * transport, f64::INFINITY);
    b.ship(m, n, 0.5 * transport, f64::INFINITY);
    let mut net = {
        b.trader("f1", &[n, m]);
        b.trader("f2", &[n, m]);
        b.build()
    };
    net.traders[0].production = vec![n];
    net.traders[1].production = vec![m];
    let mut inst = Instance::new(net);
    inst.set_anchor(n, anchor);
    inst.set_anchor(m, anchor);
    for f in 0..2 {
        inst.set_theta(f, theta);
    }
    inst
}

/// Random single market with 1..=4 suppliers and random θ in [0, 1].
pub fn random_single_market(rng: &mut impl Rng) -> Instance {
    let k = rng.gen_range(1..=4);
    let suppliers: Vec<Supplier> = (0..k)
        .map(|_| Supplier {
            linc: rng.gen_range(10.0..40.0),
            quac: if rng.gen_bool(0.5) {
                rng.gen_range(0.0..0.5)
            } else {
                0.0
            },
            transport: rng.gen_range(0.0..10.0),
        })
        .collect();
    let anchor = DemandAnchor {
        s0: rng.gen_range(40.0..120.0),
        lambda0: rng.gen_range(60.0..120.0),
        eta: -rng.gen_range(0.3..1.0),
    };
    let mut inst = single_market(&suppliers, 1, anchor);
    for f in 0..k {
        inst.set_theta(f, rng.gen_range(0.0..=1.0));
    }
    inst
}

/// Random two-node instance: perturbed costs, per-node anchors and θ per
/// (trader, node, period).
pub fn random_two_node(rng: &mut impl Rng) -> Instance {
    let mut inst = two_node(
        rng.gen_range(15.0..30.0),
        rng.gen_range(2.0..8.0),
        default_anchor(),
        0.0,
    );
    let net = &mut inst.network;
    for p in net.production.iter_mut() {
        for t in 0..2 {
            p.linc[t] = rng.gen_range(15.0..30.0);
            p.quac[t] = rng.gen_range(0.02..0.2);
        }
    }
    for n in 0..2 {
        for t in 0..2 {
            let a = DemandAnchor {
                s0: rng.gen_range(60.0..120.0),
                lambda0: rng.gen_range(70.0..110.0),
                eta: -rng.gen_range(0.3..1.0),
            };
            inst.anchors.set(n, t, Some(a));
            for f in 0..2 {
                inst.theta.set(f, n, t, rng.gen_range(0.0..=1.0));
            }
        }
    }
    inst
}

fn default_anchor() -> DemandAnchor {
    DemandAnchor {
        s0: 100.0,
        lambda0: 100.0,
        eta: -0.5,
    }
}

/// Seeded 10-node, 2-period, 5-trader network: a ring with chords, three
/// storage sites and one LNG route.
pub fn grid10(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetworkBuilder::new(2);
    let nodes: Vec<usize> = (0..10)
        .map(|i| b.node(&format!("N{:02}", i + 1), i >= 2))
        .collect();
    // Producing regions at N01, N02 and N06.
    for &p in &[0usize, 1, 5] {
        b.production(
            nodes[p],
            rng.gen_range(15.0..30.0),
            rng.gen_range(0.01..0.05),
            f64::INFINITY,
        );
    }
    for &s in &[3usize, 6, 8] {
        b.storage(
            nodes[s],
            rng.gen_range(0.5..1.5),
            rng.gen_range(0.5..1.5),
            rng.gen_range(20.0..40.0),
        );
    }
    b.liquefaction(nodes[1], 6.0, f64::INFINITY);
    b.regasification(nodes[7], 2.0, f64::INFINITY);
    b.ship(nodes[1], nodes[7], 4.0, f64::INFINITY);
    let add_pair = |b: &mut NetworkBuilder, i: usize, j: usize, rng: &mut ChaCha8Rng| {
        let cost = rng.gen_range(1.0..4.0);
        let cap = if rng.gen_bool(0.2) {
            rng.gen_range(80.0..150.0)
        } else {
            f64::INFINITY
        };
        b.pipeline(nodes[i], nodes[j], cost, cap);
        b.pipeline(nodes[j], nodes[i], cost, cap);
    };
    for i in 0..10 {
        add_pair(&mut b, i, (i + 1) % 10, &mut rng);
    }
    for (i, j) in [(0, 4), (2, 7), (5, 9)] {
        add_pair(&mut b, i, j, &mut rng);
    }
    b.seasonal_cost(1, 1.1);
    let all: Vec<usize> = nodes.clone();
    b.trader("T1", &all);
    b.trader("T2", &all);
    b.trader("T3", &all[..7]);
    b.trader("T4", &all[3..]);
    b.trader(
        "T5",
        &[nodes[0], nodes[1], nodes[2], nodes[3], nodes[8], nodes[9]],
    );
    let mut inst = Instance::new(b.build());
    for n in 0..10 {
        if !inst.network.consumer[n] {
            continue;
        }
        for t in 0..2 {
            let a = DemandAnchor {
                s0: rng.gen_range(40.0..120.0) * if t == 0 { 1.2 } else { 0.8 },
                lambda0: rng.gen_range(70.0..100.0),
                eta: -rng.gen_range(0.35..0.9),
            };
            inst.anchors.set(n, t, Some(a));
        }
    }
    for ((f, n, t), _) in inst.theta.0.clone().indexed() {
        inst.theta.set(f, n, t, rng.gen_range(0.1..0.9));
    }
    inst
}

/// Number of nodes, bidirectional pipeline pairs and LNG routes of
/// [`replica43`].
pub const REPLICA_NODES: usize = 43;
pub const REPLICA_PIPELINE_PAIRS: usize = 115;
pub const REPLICA_SHIP_ROUTES: usize = 17;

/// Seeded scale replica: 43 nodes, 247 arcs (115 pipeline pairs plus 17 LNG
/// routes), 2 periods and 8 traders with regional reach.
pub fn replica43(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = NetworkBuilder::new(2);
    // Nodes laid out row by row on a grid seven wide; neighbours are connected.
    let coords: Vec<(i32, i32)> = (0..REPLICA_NODES as i32).map(|i| (i % 7, i / 7)).collect();
    let nodes: Vec<usize> = (0..REPLICA_NODES)
        .map(|i| b.node(&format!("R{:02}", i + 1), i % 6 != 0))
        .collect();
    let producers: Vec<usize> = (0..REPLICA_NODES).filter(|i| i % 6 == 0).collect();
    for &p in &producers {
        b.production(
            nodes[p],
            rng.gen_range(12.0..35.0),
            rng.gen_range(0.005..0.03),
            rng.gen_range(150.0..400.0),
        );
    }
    for i in (2..REPLICA_NODES).step_by(5) {
        b.storage(
            nodes[i],
            rng.gen_range(0.5..1.5),
            rng.gen_range(0.5..1.5),
            rng.gen_range(15.0..40.0),
        );
    }
    let lng_export = [0usize, 6, 12, 18, 24, 30];
    let lng_import = [3usize, 9, 15, 21, 27, 33, 39];
    for &e in &lng_export {
        b.liquefaction(
            nodes[e],
            rng.gen_range(4.0..8.0),
            rng.gen_range(60.0..120.0),
        );
    }
    for &i in &lng_import {
        b.regasification(
            nodes[i],
            rng.gen_range(1.0..3.0),
            rng.gen_range(60.0..120.0),
        );
    }

    // Candidate pipeline pairs: grid neighbours first, then diagonals, then
    // longer links, until 115 pairs exist.
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let dist = |a: usize, b: usize| {
        let (xa, ya) = coords[a];
        let (xb, yb) = coords[b];
        ((xa - xb).abs(), (ya - yb).abs())
    };
    for want in [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2)] {
        for a in 0..REPLICA_NODES {
            for c in a + 1..REPLICA_NODES {
                let (dx, dy) = dist(a, c);
                if (dx, dy) == want && pairs.len() < REPLICA_PIPELINE_PAIRS {
                    pairs.push((a, c));
                }
            }
        }
    }
    assert_eq!(pairs.len(), REPLICA_PIPELINE_PAIRS);
    for &(a, c) in &pairs {
        let (dx, dy) = dist(a, c);
        let cost = (dx + dy) as f64 * rng.gen_range(0.8..1.6);
        let cap = if rng.gen_bool(0.15) {
            rng.gen_range(60.0..150.0)
        } else {
            f64::INFINITY
        };
        b.pipeline(nodes[a], nodes[c], cost, cap);
        b.pipeline(nodes[c], nodes[a], cost, cap);
    }
    let mut routes = 0;
    'outer: for &e in &lng_export {
        for &i in &lng_import {
            if routes == REPLICA_SHIP_ROUTES {
                break 'outer;
            }
            if (e + i) % 2 == 1 || dist(e, i).1 >= 2 {
                b.ship(nodes[e], nodes[i], rng.gen_range(2.0..5.0), f64::INFINITY);
                routes += 1;
            }
        }
    }
    assert_eq!(routes, REPLICA_SHIP_ROUTES);
    b.seasonal_cost(1, 1.08);

    // Eight traders with overlapping regional reach of 5x4 grid cells.
    for k in 0..8 {
        let (x0, y0) = ((k % 2) * 2, (k / 2) * 2 - 1);
        let reach: Vec<usize> = (0..REPLICA_NODES)
            .filter(|&i| {
                let (x, y) = coords[i];
                x >= x0 && x < x0 + 5 && y >= y0 && y < y0 + 4
            })
            .collect();
        b.trader(&format!("F{}", k + 1), &reach);
    }
    let mut inst = Instance::new(b.build());
    for n in 0..REPLICA_NODES {
        if !inst.network.consumer[n] {
            continue;
        }
        for t in 0..2 {
            let a = DemandAnchor {
                s0: rng.gen_range(20.0..80.0) * if t == 0 { 1.25 } else { 0.75 },
                lambda0: rng.gen_range(80.0..110.0),
                eta: -rng.gen_range(0.35..0.9),
            };
            inst.anchors.set(n, t, Some(a));
        }
    }
    for ((f, n, t), _) in inst.theta.0.clone().indexed() {
        inst.theta.set(f, n, t, rng.gen_range(0.1..0.9));
    }
    inst
}

/// Forward equilibrium of an instance, used as reference data.
#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub instance: Instance,
    /// The instance's demand functions re-anchored at the equilibrium.
    pub truth: AnchorSet,
    pub equilibrium: Equilibrium,
    /// Tight reference data at the equilibrium.
    pub reference: ReferenceData,
}

/// Smallest sales every trader must have in every market it serves for an
/// equilibrium to count as interior.
pub const ROUND_TRIP_MIN_SALES: f64 = 1e-3;

/// Solves the base model of `inst` and packages its equilibrium as tight
/// reference data. Returns `None` when some trader does not sell in a
/// market it serves.
pub fn round_trip(inst: Instance, tol: f64) -> Result<Option<RoundTrip>, ModelError> {
    let net = &inst.network;
    let sys = assemble_base(net, &inst.anchors, &inst.theta)?;
    let eq = solve_system(net, &sys, tol)?;
    let (nn, nt) = (net.n_nodes(), net.n_periods());
    let mut truth: AnchorSet = Array2::filled(nn, nt, None);
    let mut eta = Array2::zeros(nn, nt);
    for n in net.consumer_nodes() {
        for t in 0..nt {
            for f in net.traders_at(n) {
                if eq.sales.at(f, n, t) < ROUND_TRIP_MIN_SALES {
                    return Ok(None);
                }
            }
            let a = inst
                .anchors
                .get(n, t)
                .expect("consumer markets are anchored");
            let (_, slope) = a.coefficients()?;
            let (s, lambda) = (eq.consumption.at(n, t), eq.price.at(n, t));
            let e = lambda / (s * slope);
            truth.set(n, t, Some(DemandAnchor::new(s, lambda, e)?));
            eta.set(n, t, e);
        }
    }
    let reference = ReferenceData::tight(eq.price.clone(), eta, eq.sales.clone());
    Ok(Some(RoundTrip {
        instance: inst,
        truth,
        equilibrium: eq,
        reference,
    }))
}

/// Draws instances from `gen` until one has an interior equilibrium.
pub fn sample_round_trip<R: Rng>(
    rng: &mut R,
    tol: f64,
    mut gen: impl FnMut(&mut R) -> Instance,
) -> RoundTrip {
    loop {
        if let Ok(Some(rt)) = round_trip(gen(rng), tol) {
            return rt;
        }
    }
}

/// [`grid10`] with perturbed reference data, see [`perturbed`].
pub fn perturbed_grid10(seed: u64, tol: f64) -> Result<(Instance, RawReference), ModelError> {
    let inst = grid10(seed);
    let raw = perturbed(&inst, seed, tol)?;
    Ok((inst, raw))
}

/// Reference data taken from the equilibrium of `inst` and then perturbed:
/// sales, prices and elasticities by up to ±10% each. Reference price bounds are ±5% around the perturbed prices and consumption is the
/// sum of the perturbed sales, so the data pass preprocessing unchanged and
/// the calibration loop has to absorb the perturbation.
pub fn perturbed(inst: &Instance, seed: u64, tol: f64) -> Result<RawReference, ModelError> {
    perturbed_with(inst, seed, tol, 0.9..1.1)
}

/// [`perturbed`] with sales multiplied by factors drawn from `sales`.
/// Factors of at most one keep the data within the capacities of networks
/// whose equilibrium uses them fully.
pub fn perturbed_with(
    inst: &Instance,
    seed: u64,
    tol: f64,
    sales: Range<f64>,
) -> Result<RawReference, ModelError> {
    let net = &inst.network;
    let sys = assemble_base(net, &inst.anchors, &inst.theta)?;
    let eq = solve_system(net, &sys, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
    let mut raw = RawReference {
        lambda: Array2::zeros(nn, nt),
        lambda_lo: Array2::zeros(nn, nt),
        lambda_hi: Array2::zeros(nn, nt),
        eta: Array2::zeros(nn, nt),
        eta_lo: Array2::zeros(nn, nt),
        eta_hi: Array2::zeros(nn, nt),
        sales: Array3::zeros(nf, nn, nt),
        consumption: Array2::zeros(nn, nt),
        production: Array2::filled(nf, nt, f64::INFINITY),
        loss: Array2::zeros(nf, nt),
    };
    let eta_box = EtaBox::default();
    for n in net.consumer_nodes() {
        for t in 0..nt {
            let a = inst
                .anchors
                .get(n, t)
                .expect("consumer markets are anchored");
            let (_, slope) = a.coefficients()?;
            let (s, lambda) = (eq.consumption.at(n, t), eq.price.at(n, t));
            let l = lambda * rng.gen_range(0.9..1.1);
            let e = lambda / (s * slope) * rng.gen_range(0.9..1.1);
            let (elo, ehi) = eta_box.around(e);
            raw.lambda.set(n, t, l);
            raw.lambda_lo.set(n, t, 0.95 * l);
            raw.lambda_hi.set(n, t, 1.05 * l);
            raw.eta.set(n, t, e);
            raw.eta_lo.set(n, t, elo);
            raw.eta_hi.set(n, t, ehi);
            let mut total = 0.0;
            for f in net.traders_at(n) {
                let q = eq.sales.at(f, n, t) * rng.gen_range(sales.clone());
                raw.sales.set(f, n, t, q);
                total += q;
            }
            raw.consumption.set(n, t, total);
        }
    }
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_validate() {
        let a = default_anchor();
        single_market(&[Supplier::constant(10.0), Supplier::constant(20.0)], 1, a)
            .network
            .validate()
            .unwrap();
        two_node(20.0, 5.0, a, 0.5).network.validate().unwrap();
        grid10(7).network.validate().unwrap();
        let r = replica43(1).network;
        r.validate().unwrap();
        assert_eq!(r.n_nodes(), 43);
        assert_eq!(r.pipelines.len() + r.ships.len(), 247);
    }

    #[test]
    fn seeded_generators_are_deterministic() {
        assert_eq!(grid10(3).network, grid10(3).network);
        assert_eq!(replica43(3).anchors, replica43(3).anchors);
        assert_ne!(grid10(3).anchors, grid10(4).anchors);
    }
}
