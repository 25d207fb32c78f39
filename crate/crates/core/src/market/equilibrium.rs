use serde::{Deserialize, Serialize};

use super::assemble::{MarketSystem, VarLabel};
use super::network::MarketNetwork;
use super::ModelError;
use crate::array::{Array2, Array3};
use crate::lcp::{solve_mlcp, LcpSolution};

/// Primal and dual quantities of a solved market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Price per (node, period); zero where no consumer is active.
    pub price: Array2,
    /// Consumption per (node, period).
    pub consumption: Array2,
    /// Sales per (trader, node, period).
    pub sales: Array3,
    /// Nodal balance dual (marginal cost) per (trader, node, period).
    pub phi: Array3,
    /// Storage balance dual per (trader, node).
    pub phi_storage: Array2,
    pub production: Array3,
    pub injection: Array3,
    pub extraction: Array3,
    /// Pipeline flows per (trader, arc, period).
    pub pipeline: Array3,
    /// Shipping flows per (trader, route, period).
    pub shipping: Array3,
    /// Congestion fees and bound multipliers.
    pub shadow: Vec<(VarLabel, f64)>,
    pub residual: f64,
    pub pivots: usize,
}

/// Solves an assembled system, completes indeterminate marginal costs and
/// extracts the equilibrium.
pub fn solve_system(
    net: &MarketNetwork,
    sys: &MarketSystem,
    tol: f64,
) -> Result<Equilibrium, ModelError> {
    let mut sol = solve_mlcp(&sys.mlcp, tol)?;
    sol.z = complete_marginal_costs(sys, &sol.z)?;
    extract_equilibrium(net, sys, &sol)
}

#[derive(Clone, Copy)]
struct Edge {
    row: usize,
    to: usize,
    from: Option<usize>,
}

/// Raises balance duals of idle (trader, node, period) and storage vertices
/// to the cheapest cost at which the trader could supply them.
///
/// Where a trader moves no gas, its balance dual is not pinned down by the
/// equilibrium conditions; any value between the solver's choice and the
/// cheapest supply cost is an equilibrium. The supply cost is the meaningful
/// choice for a marginal cost, so idle vertices are set to the shortest-path
/// bound implied by the inflow rows, anchored at active vertices.
pub fn complete_marginal_costs(sys: &MarketSystem, z: &[f64]) -> Result<Vec<f64>, ModelError> {
    use VarLabel::*;
    let w = sys.mlcp.eval_w(z)?;
    let d = sys.dim();
    let nb = |f, n, t| {
        sys.index_of(&NodalBalance {
            trader: f,
            node: n,
            period: t,
        })
    };
    let sb = |f, n| sys.index_of(&StorageBalance { trader: f, node: n });

    let mut edges = Vec::new();
    let mut touches: Vec<Vec<usize>> = vec![Vec::new(); d];
    for (row, label) in sys.labels().iter().enumerate() {
        let (to, from) = match *label {
            Production {
                trader,
                node,
                period,
            } => (nb(trader, node, period), None),
            Extraction {
                trader,
                node,
                period,
            } => (nb(trader, node, period), sb(trader, node)),
            Injection {
                trader,
                node,
                period,
            } => (sb(trader, node), nb(trader, node, period)),
            Pipeline { .. } | Shipping { .. } => {
                // Arc endpoints are read back from the matrix: -1 on the
                // destination dual, +1 on the origin dual.
                let mut to = None;
                let mut from = None;
                for j in 0..d {
                    let v = sys.mlcp.entry(row, j);
                    if v == 0.0 {
                        continue;
                    }
                    if matches!(sys.labels()[j], NodalBalance { .. }) {
                        if v < 0.0 {
                            to = Some(j);
                        } else {
                            from = Some(j);
                        }
                    }
                }
                (to, from)
            }
            Sales {
                trader,
                node,
                period,
            } => {
                if let Some(v) = nb(trader, node, period) {
                    touches[v].push(row);
                }
                continue;
            }
            _ => continue,
        };
        let Some(to) = to else { continue };
        touches[to].push(row);
        if let Some(fr) = from {
            touches[fr].push(row);
        }
        edges.push(Edge { row, to, from });
    }

    let scale = z.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let idle_tol = 1e-9 * scale;
    let vertices: Vec<usize> = (0..d)
        .filter(|&i| matches!(sys.labels()[i], NodalBalance { .. } | StorageBalance { .. }))
        .collect();
    let mut idle = vec![false; d];
    for &v in &vertices {
        idle[v] = touches[v].iter().all(|&r| z[r].abs() <= idle_tol);
    }

    // Shortest-path increments: zero for active vertices, relaxed from +inf
    // for idle ones. Edge weights are nonnegative slacks.
    let mut delta = vec![f64::INFINITY; d];
    for &v in &vertices {
        if !idle[v] {
            delta[v] = 0.0;
        }
    }
    for _ in 0..=vertices.len() {
        let mut changed = false;
        for e in &edges {
            if !idle[e.to] {
                continue;
            }
            let base = e.from.map_or(0.0, |f| delta[f]);
            let cand = w[e.row].max(0.0) + base;
            if cand < delta[e.to] {
                delta[e.to] = cand;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut out = z.to_vec();
    for &v in &vertices {
        if idle[v] && delta[v].is_finite() && delta[v] > 0.0 {
            out[v] += delta[v];
        }
    }
    Ok(out)
}

/// Maps a solution vector back to named market quantities.
pub fn extract_equilibrium(
    net: &MarketNetwork,
    sys: &MarketSystem,
    sol: &LcpSolution,
) -> Result<Equilibrium, ModelError> {
    use VarLabel::*;
    if sol.z.len() != sys.dim() {
        return Err(ModelError::DimensionMismatch(format!(
            "solution has {} entries, system has {}",
            sol.z.len(),
            sys.dim()
        )));
    }
    let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
    let mut eq = Equilibrium {
        price: Array2::zeros(nn, nt),
        consumption: Array2::zeros(nn, nt),
        sales: Array3::zeros(nf, nn, nt),
        phi: Array3::zeros(nf, nn, nt),
        phi_storage: Array2::zeros(nf, nn),
        production: Array3::zeros(nf, nn, nt),
        injection: Array3::zeros(nf, nn, nt),
        extraction: Array3::zeros(nf, nn, nt),
        pipeline: Array3::zeros(nf, net.pipelines.len(), nt),
        shipping: Array3::zeros(nf, net.ships.len(), nt),
        shadow: Vec::new(),
        residual: sol.residual,
        pivots: sol.pivots,
    };
    for (i, label) in sys.labels().iter().enumerate() {
        let v = sol.z[i];
        match *label {
            Production {
                trader,
                node,
                period,
            } => eq.production.set(trader, node, period, v),
            Injection {
                trader,
                node,
                period,
            } => eq.injection.set(trader, node, period, v),
            Extraction {
                trader,
                node,
                period,
            } => eq.extraction.set(trader, node, period, v),
            Pipeline {
                trader,
                arc,
                period,
            } => eq.pipeline.set(trader, arc, period, v),
            Shipping {
                trader,
                arc,
                period,
            } => eq.shipping.set(trader, arc, period, v),
            Sales {
                trader,
                node,
                period,
            } => {
                eq.sales.set(trader, node, period, v);
                *eq.consumption.get_mut(node, period) += v;
            }
            NodalBalance {
                trader,
                node,
                period,
            } => eq.phi.set(trader, node, period, v),
            StorageBalance { trader, node } => eq.phi_storage.set(trader, node, v),
            Price { node, period } => eq.price.set(node, period, v),
            _ => eq.shadow.push((*label, v)),
        }
    }
    Ok(eq)
}

impl Equilibrium {
    /// Total sales of trader `f` across all markets in period `t`.
    pub fn trader_sales(&self, f: usize, t: usize) -> f64 {
        let (_, nn, _) = self.sales.shape();
        (0..nn).map(|n| self.sales.at(f, n, t)).sum()
    }

    /// Multiplier attached to `label`, if the system contained it.
    pub fn shadow_price(&self, label: &VarLabel) -> Option<f64> {
        self.shadow
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| *v)
    }
}
