//! Assembly of the network equilibrium conditions into a mixed LCP.
//!
//! Every trader flow, nodal and storage balance dual, congestion fee and
//! price gets one complementarity pair. Rows read `w = M z + b >= 0`:
//!
//! ```text
//! qP   LINC + QUAC qP + aP + aPT - phiN                  ⊥ qP
//! qI   LINC + aI + aIT + phiN - phiS                     ⊥ qI
//! qX   LINC + aX + aXT - phiN + phiS                     ⊥ qX
//! qA   LINC + aA + aAT - phiN[to] + phiN[from]           ⊥ qA
//! qB   (L + B + R costs and fees) - phiN[to] + phiN[from] ⊥ qB
//! qC   -lambda - theta SLP qC + phiN                     ⊥ qC
//! phiN inflows - outflows                                ⊥ phiN
//! phiS sum_t qI - sum_t qX                               ⊥ phiS
//! a    CAP - sum_f q                                     ⊥ a
//! lam  lambda - INT - SLP sum_f qC                       ⊥ lambda
//! ```
//!
//! The fixed-sales variant adds a free `xi` per sales variable with row
//! `qRef - qC` and `+xi` in the sales row. The bounded variant adds
//! nonnegative `xi_hi`/`xi_lo` for finite upper and positive lower bounds,
//! a free `chi` per pinned consumption, and `+xi_hi - xi_lo + chi` in the
//! sales row.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::demand::{AnchorSet, SalesBounds, ThetaMatrix};
use super::network::{MarketNetwork, ServiceKind};
use super::ModelError;
use crate::array::Array3;
use crate::lcp::Mlcp;

/// Identity of one complementarity pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarLabel {
    Production {
        trader: usize,
        node: usize,
        period: usize,
    },
    Injection {
        trader: usize,
        node: usize,
        period: usize,
    },
    Extraction {
        trader: usize,
        node: usize,
        period: usize,
    },
    Pipeline {
        trader: usize,
        arc: usize,
        period: usize,
    },
    Shipping {
        trader: usize,
        arc: usize,
        period: usize,
    },
    Sales {
        trader: usize,
        node: usize,
        period: usize,
    },
    NodalBalance {
        trader: usize,
        node: usize,
        period: usize,
    },
    StorageBalance {
        trader: usize,
        node: usize,
    },
    Congestion {
        service: ServiceKind,
        index: usize,
        period: usize,
    },
    AnnualCongestion {
        service: ServiceKind,
        index: usize,
    },
    Price {
        node: usize,
        period: usize,
    },
    FixedSales {
        trader: usize,
        node: usize,
        period: usize,
    },
    SalesUpper {
        trader: usize,
        node: usize,
        period: usize,
    },
    SalesLower {
        trader: usize,
        node: usize,
        period: usize,
    },
    Consumption {
        node: usize,
        period: usize,
    },
    TraderCap {
        trader: usize,
        period: usize,
    },
}

impl fmt::Display for VarLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use VarLabel::*;
        match *self {
            Production {
                trader,
                node,
                period,
            } => write!(f, "qP[{trader},{node},{period}]"),
            Injection {
                trader,
                node,
                period,
            } => write!(f, "qI[{trader},{node},{period}]"),
            Extraction {
                trader,
                node,
                period,
            } => write!(f, "qX[{trader},{node},{period}]"),
            Pipeline {
                trader,
                arc,
                period,
            } => write!(f, "qA[{trader},a{arc},{period}]"),
            Shipping {
                trader,
                arc,
                period,
            } => write!(f, "qB[{trader},b{arc},{period}]"),
            Sales {
                trader,
                node,
                period,
            } => write!(f, "qC[{trader},{node},{period}]"),
            NodalBalance {
                trader,
                node,
                period,
            } => write!(f, "phiN[{trader},{node},{period}]"),
            StorageBalance { trader, node } => write!(f, "phiS[{trader},{node}]"),
            Congestion {
                service,
                index,
                period,
            } => write!(f, "alpha{service}[{index},{period}]"),
            AnnualCongestion { service, index } => write!(f, "alpha{service}T[{index}]"),
            Price { node, period } => write!(f, "lambda[{node},{period}]"),
            FixedSales {
                trader,
                node,
                period,
            } => write!(f, "xi[{trader},{node},{period}]"),
            SalesUpper {
                trader,
                node,
                period,
            } => write!(f, "xiHi[{trader},{node},{period}]"),
            SalesLower {
                trader,
                node,
                period,
            } => write!(f, "xiLo[{trader},{node},{period}]"),
            Consumption { node, period } => write!(f, "chi[{node},{period}]"),
            TraderCap { trader, period } => write!(f, "mu[{trader},{period}]"),
        }
    }
}

/// An assembled system together with its variable layout.
#[derive(Debug, Clone)]
pub struct MarketSystem {
    pub mlcp: Mlcp,
    labels: Vec<VarLabel>,
    index: HashMap<VarLabel, usize>,
}

impl MarketSystem {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[VarLabel] {
        &self.labels
    }

    pub fn index_of(&self, label: &VarLabel) -> Option<usize> {
        self.index.get(label).copied()
    }
}

enum Augment<'a> {
    None,
    Fixed(&'a Array3),
    Bounded(&'a SalesBounds),
}

#[derive(Default)]
struct Builder {
    labels: Vec<VarLabel>,
    index: HashMap<VarLabel, usize>,
    b: Vec<f64>,
    free: Vec<usize>,
    entries: Vec<(usize, usize, f64)>,
}

impl Builder {
    fn add(&mut self, label: VarLabel, offset: f64) -> usize {
        let i = self.labels.len();
        self.labels.push(label);
        self.index.insert(label, i);
        self.b.push(offset);
        i
    }

    fn add_free(&mut self, label: VarLabel, offset: f64) -> usize {
        let i = self.add(label, offset);
        self.free.push(i);
        i
    }

    fn get(&self, label: &VarLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Adds `value` at (row of `row`, column of `col`); missing labels are skipped.
    fn coef(&mut self, row: usize, col: Option<usize>, value: f64) {
        if let Some(c) = col {
            if value != 0.0 {
                self.entries.push((row, c, value));
            }
        }
    }

    fn finish(self) -> Result<MarketSystem, ModelError> {
        let d = self.labels.len();
        let mut m = vec![0.0; d * d];
        for (i, j, v) in self.entries {
            m[i * d + j] += v;
        }
        let names = self.labels.iter().map(|l| l.to_string()).collect();
        let mlcp = Mlcp::new(m, self.b)?
            .with_free(self.free)?
            .with_labels(names)?;
        Ok(MarketSystem {
            mlcp,
            labels: self.labels,
            index: self.index,
        })
    }
}

/// Base equilibrium model.
pub fn assemble_base(
    net: &MarketNetwork,
    anchors: &AnchorSet,
    theta: &ThetaMatrix,
) -> Result<MarketSystem, ModelError> {
    assemble(net, anchors, theta, Augment::None)
}

/// Base model with sales fixed at `q_ref` through free multipliers.
pub fn assemble_fixed_sales(
    net: &MarketNetwork,
    anchors: &AnchorSet,
    theta: &ThetaMatrix,
    q_ref: &Array3,
) -> Result<MarketSystem, ModelError> {
    check_shape3(net, q_ref.shape(), "q_ref")?;
    if let Some(((f, n, t), v)) = q_ref
        .indexed()
        .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(ModelError::InvariantViolation {
            field: format!("q_ref[{f},{n},{t}]"),
            reason: format!("sales must be finite and nonnegative, got {v}"),
        });
    }
    assemble(net, anchors, theta, Augment::Fixed(q_ref))
}

/// Widening of sales bounds, relative to `max(bound, 1)`. Bounds that add
/// up exactly to a pinned consumption or a trader cap are only feasible up to
/// rounding of the sums, and zero-width boxes make the pivoting degenerate
/// enough to report false rays; the widening avoids both without visibly
/// moving the solution.
pub const BOUND_RELAXATION: f64 = 1e-9;

/// Base model with sales bounds, pinned consumption and trader caps.
pub fn assemble_bounded(
    net: &MarketNetwork,
    anchors: &AnchorSet,
    theta: &ThetaMatrix,
    bounds: &SalesBounds,
) -> Result<MarketSystem, ModelError> {
    check_shape3(net, bounds.lower.shape(), "lower")?;
    check_shape3(net, bounds.upper.shape(), "upper")?;
    let (nn, nt) = (net.n_nodes(), net.n_periods());
    if bounds.fixed_consumption.shape() != (nn, nt)
        || bounds.trader_cap.shape() != (net.n_traders(), nt)
    {
        return Err(ModelError::DimensionMismatch("sales bounds".into()));
    }
    for ((f, n, t), lo) in bounds.lower.indexed() {
        let hi = bounds.upper.at(f, n, t);
        if lo.is_nan() || hi.is_nan() || *lo > hi {
            return Err(ModelError::InvariantViolation {
                field: format!("bounds[{f},{n},{t}]"),
                reason: format!("lower {lo} exceeds upper {hi}"),
            });
        }
    }
    for n in 0..nn {
        for t in 0..nt {
            let Some(target) = *bounds.fixed_consumption.get(n, t) else {
                continue;
            };
            let (mut lo, mut hi) = (0.0, 0.0);
            for f in net.traders_at(n) {
                lo += bounds.lower.at(f, n, t);
                hi += bounds.upper.at(f, n, t);
            }
            let slack = 1e-9 * target.abs().max(1.0);
            if lo > target + slack || hi < target - slack {
                return Err(ModelError::InfeasibleBounds {
                    node: net.node_name(n).to_string(),
                    period: net.periods[t].clone(),
                    lower: lo,
                    upper: hi,
                    consumption: target,
                });
            }
        }
    }
    assemble(net, anchors, theta, Augment::Bounded(bounds))
}

fn check_shape3(
    net: &MarketNetwork,
    shape: (usize, usize, usize),
    what: &str,
) -> Result<(), ModelError> {
    if shape != (net.n_traders(), net.n_nodes(), net.n_periods()) {
        return Err(ModelError::DimensionMismatch(format!(
            "{what} has shape {shape:?}, network is {}x{}x{}",
            net.n_traders(),
            net.n_nodes(),
            net.n_periods()
        )));
    }
    Ok(())
}

fn assemble(
    net: &MarketNetwork,
    anchors: &AnchorSet,
    theta: &ThetaMatrix,
    augment: Augment<'_>,
) -> Result<MarketSystem, ModelError> {
    net.validate()?;
    let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
    check_shape3(net, theta.shape(), "theta")?;
    if anchors.shape() != (nn, nt) {
        return Err(ModelError::DimensionMismatch("anchors".into()));
    }

    // Demand coefficients per consumer market.
    let mut demand = vec![None; nn * nt];
    for n in net.consumer_nodes() {
        for t in 0..nt {
            let anchor = anchors.get(n, t).ok_or_else(|| ModelError::MissingAnchor {
                node: net.node_name(n).to_string(),
                period: net.periods[t].clone(),
            })?;
            demand[n * nt + t] = Some(anchor.coefficients()?);
        }
    }

    let mut bld = Builder::default();
    use VarLabel::*;

    // Trader variables.
    for (f, tr) in net.traders.iter().enumerate() {
        for t in 0..nt {
            for &n in &tr.production {
                let p = net.facility_at(ServiceKind::P, n).expect("validated");
                bld.add(
                    Production {
                        trader: f,
                        node: n,
                        period: t,
                    },
                    net.production[p].linc[t],
                );
            }
            for &n in &tr.storage {
                if let Some(i) = net.facility_at(ServiceKind::I, n) {
                    bld.add(
                        Injection {
                            trader: f,
                            node: n,
                            period: t,
                        },
                        net.injection[i].linc[t],
                    );
                }
                if let Some(x) = net.facility_at(ServiceKind::X, n) {
                    bld.add(
                        Extraction {
                            trader: f,
                            node: n,
                            period: t,
                        },
                        net.extraction[x].linc[t],
                    );
                }
            }
            for &a in &tr.pipelines {
                bld.add(
                    Pipeline {
                        trader: f,
                        arc: a,
                        period: t,
                    },
                    net.pipelines[a].linc[t],
                );
            }
            for &a in &tr.ships {
                let link = &net.ships[a];
                let l = net
                    .facility_at(ServiceKind::L, link.from)
                    .expect("validated");
                let r = net.facility_at(ServiceKind::R, link.to).expect("validated");
                let cost =
                    net.liquefaction[l].linc[t] + link.linc[t] + net.regasification[r].linc[t];
                bld.add(
                    Shipping {
                        trader: f,
                        arc: a,
                        period: t,
                    },
                    cost,
                );
            }
            for &n in &tr.consumers {
                bld.add(
                    Sales {
                        trader: f,
                        node: n,
                        period: t,
                    },
                    0.0,
                );
            }
            for &n in &tr.nodes {
                bld.add(
                    NodalBalance {
                        trader: f,
                        node: n,
                        period: t,
                    },
                    0.0,
                );
            }
        }
        for &n in &tr.storage {
            bld.add(StorageBalance { trader: f, node: n }, 0.0);
        }
    }
    // Congestion fees for finite capacities.
    for kind in ServiceKind::ALL {
        for idx in 0..net.service_count(kind) {
            let (cap, cap_total, _) = net.service_data(kind, idx);
            for (t, c) in cap.iter().enumerate() {
                if c.is_finite() {
                    bld.add(
                        Congestion {
                            service: kind,
                            index: idx,
                            period: t,
                        },
                        *c,
                    );
                }
            }
            if cap_total.is_finite() {
                bld.add(
                    AnnualCongestion {
                        service: kind,
                        index: idx,
                    },
                    cap_total,
                );
            }
        }
    }
    for n in net.consumer_nodes() {
        for t in 0..nt {
            let (int, _) = demand[n * nt + t].expect("consumer market");
            bld.add(
                Price { node: n, period: t },
                -int * price_row_scale(slope_of(&demand, n, nt, t)),
            );
        }
    }
    // Augmentation variables.
    match &augment {
        Augment::None => {}
        Augment::Fixed(q_ref) => {
            for (f, tr) in net.traders.iter().enumerate() {
                for t in 0..nt {
                    for &n in &tr.consumers {
                        bld.add_free(
                            FixedSales {
                                trader: f,
                                node: n,
                                period: t,
                            },
                            q_ref.at(f, n, t),
                        );
                    }
                }
            }
        }
        Augment::Bounded(bounds) => {
            for (f, tr) in net.traders.iter().enumerate() {
                for t in 0..nt {
                    for &n in &tr.consumers {
                        let hi = bounds.upper.at(f, n, t);
                        if hi.is_finite() {
                            bld.add(
                                SalesUpper {
                                    trader: f,
                                    node: n,
                                    period: t,
                                },
                                hi + BOUND_RELAXATION * hi.max(1.0),
                            );
                        }
                        let lo = bounds.lower.at(f, n, t)
                            - BOUND_RELAXATION * bounds.lower.at(f, n, t).max(1.0);
                        if lo > 0.0 {
                            bld.add(
                                SalesLower {
                                    trader: f,
                                    node: n,
                                    period: t,
                                },
                                -lo,
                            );
                        }
                    }
                }
            }
            for n in net.consumer_nodes() {
                for t in 0..nt {
                    if let Some(s0) = bounds.fixed_consumption.get(n, t) {
                        bld.add_free(Consumption { node: n, period: t }, *s0);
                    }
                }
            }
            for f in 0..nf {
                for t in 0..nt {
                    let cap = bounds.trader_cap.at(f, t);
                    if cap.is_finite() {
                        bld.add(
                            TraderCap {
                                trader: f,
                                period: t,
                            },
                            cap,
                        );
                    }
                }
            }
        }
    }

    // Coefficients.
    let fee = |bld: &Builder, kind: ServiceKind, idx: usize, t: usize| {
        [
            bld.get(&Congestion {
                service: kind,
                index: idx,
                period: t,
            }),
            bld.get(&AnnualCongestion {
                service: kind,
                index: idx,
            }),
        ]
    };
    for (f, tr) in net.traders.iter().enumerate() {
        for t in 0..nt {
            for &n in &tr.production {
                let p = net.facility_at(ServiceKind::P, n).expect("validated");
                let row = bld
                    .get(&Production {
                        trader: f,
                        node: n,
                        period: t,
                    })
                    .expect("registered");
                bld.coef(row, Some(row), net.production[p].quac[t]);
                for a in fee(&bld, ServiceKind::P, p, t) {
                    bld.coef(row, a, 1.0);
                }
                let phi = bld.get(&NodalBalance {
                    trader: f,
                    node: n,
                    period: t,
                });
                bld.coef(row, phi, -1.0);
                let phi_row = phi.expect("production node in reach");
                bld.coef(phi_row, Some(row), 1.0);
                for a in fee(&bld, ServiceKind::P, p, t).into_iter().flatten() {
                    bld.coef(a, Some(row), -1.0);
                }
            }
            for &n in &tr.storage {
                let phi = bld.get(&NodalBalance {
                    trader: f,
                    node: n,
                    period: t,
                });
                let phi_s = bld.get(&StorageBalance { trader: f, node: n });
                for (kind, sign) in [(ServiceKind::I, 1.0), (ServiceKind::X, -1.0)] {
                    let Some(idx) = net.facility_at(kind, n) else {
                        continue;
                    };
                    let label = if kind == ServiceKind::I {
                        Injection {
                            trader: f,
                            node: n,
                            period: t,
                        }
                    } else {
                        Extraction {
                            trader: f,
                            node: n,
                            period: t,
                        }
                    };
                    let row = bld.get(&label).expect("registered");
                    for a in fee(&bld, kind, idx, t) {
                        bld.coef(row, a, 1.0);
                        if let Some(a) = a {
                            bld.coef(a, Some(row), -1.0);
                        }
                    }
                    // Injection takes gas out of the node balance into storage.
                    bld.coef(row, phi, sign);
                    bld.coef(row, phi_s, -sign);
                    bld.coef(phi.expect("storage node in reach"), Some(row), -sign);
                    bld.coef(phi_s.expect("storage balance"), Some(row), sign);
                }
            }
            for (kind, list) in [(ServiceKind::A, &tr.pipelines), (ServiceKind::B, &tr.ships)] {
                for &a in list {
                    let link = &net.links(kind)[a];
                    let label = if kind == ServiceKind::A {
                        Pipeline {
                            trader: f,
                            arc: a,
                            period: t,
                        }
                    } else {
                        Shipping {
                            trader: f,
                            arc: a,
                            period: t,
                        }
                    };
                    let row = bld.get(&label).expect("registered");
                    let mut fees: Vec<Option<usize>> = fee(&bld, kind, a, t).to_vec();
                    if kind == ServiceKind::B {
                        let l = net
                            .facility_at(ServiceKind::L, link.from)
                            .expect("validated");
                        let r = net.facility_at(ServiceKind::R, link.to).expect("validated");
                        fees.extend(fee(&bld, ServiceKind::L, l, t));
                        fees.extend(fee(&bld, ServiceKind::R, r, t));
                    }
                    for a in fees {
                        bld.coef(row, a, 1.0);
                        if let Some(a) = a {
                            bld.coef(a, Some(row), -1.0);
                        }
                    }
                    let from = bld.get(&NodalBalance {
                        trader: f,
                        node: link.from,
                        period: t,
                    });
                    let to = bld.get(&NodalBalance {
                        trader: f,
                        node: link.to,
                        period: t,
                    });
                    bld.coef(row, from, 1.0);
                    bld.coef(row, to, -1.0);
                    bld.coef(from.expect("arc origin in reach"), Some(row), -1.0);
                    bld.coef(to.expect("arc end in reach"), Some(row), 1.0);
                }
            }
            for &n in &tr.consumers {
                let (_, slope) = demand[n * nt + t].expect("consumer market");
                let th = theta.at(f, n, t);
                if !(th >= 0.0 && th.is_finite()) {
                    return Err(ModelError::InvalidTheta {
                        trader: tr.id.clone(),
                        node: net.node_name(n).to_string(),
                        period: net.periods[t].clone(),
                        value: th,
                    });
                }
                let row = bld
                    .get(&Sales {
                        trader: f,
                        node: n,
                        period: t,
                    })
                    .expect("registered");
                let price = bld.get(&Price { node: n, period: t });
                let phi = bld.get(&NodalBalance {
                    trader: f,
                    node: n,
                    period: t,
                });
                bld.coef(row, price, -1.0);
                bld.coef(row, Some(row), -th * slope);
                bld.coef(row, phi, 1.0);
                bld.coef(phi.expect("consumer in reach"), Some(row), -1.0);
                bld.coef(
                    price.expect("price"),
                    Some(row),
                    -slope * price_row_scale(slope),
                );

                let fixed = bld.get(&FixedSales {
                    trader: f,
                    node: n,
                    period: t,
                });
                bld.coef(row, fixed, 1.0);
                if let Some(x) = fixed {
                    bld.coef(x, Some(row), -1.0);
                }
                let hi = bld.get(&SalesUpper {
                    trader: f,
                    node: n,
                    period: t,
                });
                bld.coef(row, hi, 1.0);
                if let Some(x) = hi {
                    bld.coef(x, Some(row), -1.0);
                }
                let lo = bld.get(&SalesLower {
                    trader: f,
                    node: n,
                    period: t,
                });
                bld.coef(row, lo, -1.0);
                if let Some(x) = lo {
                    bld.coef(x, Some(row), 1.0);
                }
                let chi = bld.get(&Consumption { node: n, period: t });
                bld.coef(row, chi, 1.0);
                if let Some(x) = chi {
                    bld.coef(x, Some(row), -1.0);
                }
                let mu = bld.get(&TraderCap {
                    trader: f,
                    period: t,
                });
                bld.coef(row, mu, 1.0);
                if let Some(x) = mu {
                    bld.coef(x, Some(row), -1.0);
                }
            }
        }
    }
    for n in net.consumer_nodes() {
        for t in 0..nt {
            let row = bld.get(&Price { node: n, period: t }).expect("registered");
            let scale = price_row_scale(slope_of(&demand, n, nt, t));
            bld.coef(row, Some(row), scale);
        }
    }
    bld.finish()
}

fn slope_of(demand: &[Option<(f64, f64)>], n: usize, nt: usize, t: usize) -> f64 {
    demand[n * nt + t].expect("consumer market").1
}

/// Price rows are divided by the demand slope magnitude. This leaves the
/// complementarity conditions unchanged and makes the price/sales block
/// skew-symmetric, so the whole matrix is positive semidefinite.
fn price_row_scale(slope: f64) -> f64 {
    if slope < 0.0 {
        1.0 / -slope
    } else {
        1.0
    }
}
