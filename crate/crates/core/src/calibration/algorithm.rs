use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::formulas::{
    active_traders, admissible_ranges, compute_theta, estimate_sales, fill_in_theta,
    select_anchors, AnchorChoice, LambdaRange,
};
use super::reference::ReferenceData;
use super::{CalibrationConfig, CalibrationError};
use crate::array::{Array2, Array3};
use crate::market::{
    assemble_base, assemble_bounded, assemble_fixed_sales, solve_system, AnchorSet, DemandAnchor,
    Equilibrium, MarketNetwork, ModelError, SalesBounds, ThetaMatrix,
};

/// Marginal supply costs revealed by the model when every trader's sales
/// are fixed at `q_ref`, with market power `config.theta_init_module1`.
pub fn marginal_costs(
    net: &MarketNetwork,
    anchors_ref: &AnchorSet,
    q_ref: &Array3,
    config: &CalibrationConfig,
) -> Result<Array3, ModelError> {
    let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
    let theta = ThetaMatrix::uniform(nf, nn, nt, config.theta_init_module1);
    let sys = assemble_fixed_sales(net, anchors_ref, &theta, q_ref)?;
    Ok(solve_system(net, &sys, config.solver_tol)?.phi)
}

/// Result of one bounded re-solve.
#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    pub q_new: Array3,
    pub phi_new: Array3,
    /// Largest `|lambda* - lambda0|` over consumer markets.
    pub max_price_deviation: f64,
    pub equilibrium: Equilibrium,
}

/// Re-solves the model with sales bounded between the reference and the
/// estimate and consumption pinned to the reference, which pins every price
/// to its anchor.
pub fn update_step(
    net: &MarketNetwork,
    anchors: &AnchorSet,
    theta_lim: &ThetaMatrix,
    q_ref: &Array3,
    q_est: &Array3,
    s_ref: &Array2,
    config: &CalibrationConfig,
) -> Result<UpdateOutcome, CalibrationError> {
    let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
    if q_est.shape() != q_ref.shape() || s_ref.shape() != (nn, nt) {
        return Err(ModelError::DimensionMismatch("update step inputs".into()).into());
    }
    let mut bounds = SalesBounds::vacuous(nf, nn, nt);
    for ((f, n, t), r) in q_ref.indexed() {
        let e = q_est.at(f, n, t);
        bounds.lower.set(f, n, t, r.min(e));
        bounds.upper.set(f, n, t, r.max(e));
    }
    for n in net.consumer_nodes() {
        for t in 0..nt {
            bounds.fixed_consumption.set(n, t, Some(s_ref.at(n, t)));
        }
    }
    let sys = assemble_bounded(net, anchors, theta_lim, &bounds)?;
    let eq = solve_system(net, &sys, config.solver_tol)?;
    let mut max_dev: f64 = 0.0;
    for n in net.consumer_nodes() {
        for t in 0..nt {
            let l0 = anchors.get(n, t).map_or(0.0, |a| a.lambda0);
            let dev = (eq.price.at(n, t) - l0).abs();
            max_dev = max_dev.max(dev / l0.max(1.0));
            if dev > config.solver_tol * l0.max(1.0) {
                return Err(CalibrationError::PricePinning {
                    node: net.node_name(n).to_string(),
                    period: net.periods[t].clone(),
                    deviation: dev,
                });
            }
        }
    }
    Ok(UpdateOutcome {
        q_new: eq.sales.clone(),
        phi_new: eq.phi.clone(),
        max_price_deviation: max_dev,
        equilibrium: eq,
    })
}

/// Per-market state of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRecord {
    pub node: usize,
    pub period: usize,
    pub range: LambdaRange,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub choice: AnchorChoice,
    pub widened_lower: bool,
    pub widened_upper: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub markets: Vec<MarketRecord>,
    pub satisfied_markets: usize,
    pub widened: usize,
    /// Largest consumption deviation relative to its tolerance in the
    /// tolerance check, when that check ran.
    pub consumption_check: Option<f64>,
    /// Largest relative `|lambda* - lambda0|` of the update step.
    pub price_pinning: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// Every market's admissible set met its reference box.
    Exact,
    /// No bound moved and the base model reproduces reference consumption
    /// within tolerance.
    Tolerance,
}

/// Statistics of `value - reference` over a set of entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub value: String,
    pub reference: String,
    pub count: usize,
    pub min_abs: f64,
    pub max_abs: f64,
    #[serde(with = "crate::io::inf_f64")]
    pub min_rel: f64,
    #[serde(with = "crate::io::inf_f64")]
    pub max_rel: f64,
    pub mean: f64,
    pub median: f64,
}

impl DeviationRow {
    /// Computes the row from `(value, reference)` pairs. Relative deviations
    /// of zero references are infinite unless the value is zero too.
    pub fn from_pairs(value: &str, reference: &str, pairs: &[(f64, f64)]) -> Self {
        let devs: Vec<f64> = pairs.iter().map(|(v, r)| v - r).collect();
        let rels: Vec<f64> = pairs
            .iter()
            .map(|&(v, r)| {
                let d = v - r;
                if r != 0.0 {
                    d / r.abs()
                } else if d == 0.0 {
                    0.0
                } else {
                    d.signum() * f64::INFINITY
                }
            })
            .collect();
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mean, median) = if devs.is_empty() {
            (0.0, 0.0)
        } else {
            let mut sorted = devs.clone();
            sorted.sort_by(f64::total_cmp);
            let k = sorted.len();
            let median = if k % 2 == 1 {
                sorted[k / 2]
            } else {
                0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
            };
            (devs.iter().sum::<f64>() / k as f64, median)
        };
        let or0 = |x: f64| if devs.is_empty() { 0.0 } else { x };
        Self {
            value: value.to_string(),
            reference: reference.to_string(),
            count: devs.len(),
            min_abs: or0(min(&devs)),
            max_abs: or0(max(&devs)),
            min_rel: or0(min(&rels)),
            max_rel: or0(max(&rels)),
            mean,
            median,
        }
    }
}

/// Equilibrium of the base model at the calibrated parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub price: Array2,
    pub consumption: Array2,
    pub sales: Array3,
}

impl From<&Equilibrium> for Validation {
    fn from(eq: &Equilibrium) -> Self {
        Self {
            price: eq.price.clone(),
            consumption: eq.consumption.clone(),
            sales: eq.sales.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub theta: ThetaMatrix,
    pub anchors: AnchorSet,
    /// Sales and marginal costs of the final iterate.
    pub q_cal: Array3,
    pub phi_cal: Array3,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<IterationRecord>,
    pub deviations: Vec<DeviationRow>,
    pub validation: Validation,
    /// Reference data the run started from.
    pub reference: ReferenceData,
    /// Price bounds after widening.
    pub lambda_lo: Array2,
    pub lambda_hi: Array2,
    pub markets: Vec<MarketKey>,
}

impl CalibrationResult {
    /// Recomputes the deviation statistics from the stored vectors.
    pub fn compute_deviations(&self) -> Vec<DeviationRow> {
        deviation_table(
            &self.markets,
            &self.reference,
            &self.anchors,
            &self.q_cal,
            &self.validation,
        )
    }
}

/// A consumer market and the traders that can sell there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketKey {
    pub node: usize,
    pub period: usize,
    pub traders: Vec<usize>,
}

impl MarketKey {
    fn gather(&self, a: &Array3) -> Vec<f64> {
        self.traders
            .iter()
            .map(|&f| a.at(f, self.node, self.period))
            .collect()
    }
}

/// Consumer markets of the network in (period, node) order.
pub fn markets(net: &MarketNetwork) -> Vec<MarketKey> {
    let mut out = Vec::new();
    for t in 0..net.n_periods() {
        for n in net.consumer_nodes() {
            out.push(MarketKey {
                node: n,
                period: t,
                traders: net.traders_at(n).collect(),
            });
        }
    }
    out
}

fn build_anchors(
    net: &MarketNetwork,
    s_ref: &Array2,
    choices: &[(usize, usize, f64, f64)],
) -> AnchorSet {
    let mut a = Array2::filled(net.n_nodes(), net.n_periods(), None);
    for &(n, t, lambda0, eta) in choices {
        a.set(
            n,
            t,
            Some(DemandAnchor {
                s0: s_ref.at(n, t),
                lambda0,
                eta,
            }),
        );
    }
    a
}

/// Admissible sets and anchor choices (Module II) of every market in
/// `mkts` for the iterate `(phi, q)` and the current price bounds.
pub fn select_all(
    net: &MarketNetwork,
    mkts: &[MarketKey],
    phi: &Array3,
    q: &Array3,
    reference: &ReferenceData,
    lambda_lo: &Array2,
    lambda_hi: &Array2,
) -> Result<Vec<MarketRecord>, CalibrationError> {
    let s_ref = &reference.s_ref;
    let mut records = Vec::with_capacity(mkts.len());
    for m in mkts {
        let (n, t) = (m.node, m.period);
        let (phi_m, q_m) = (m.gather(phi), m.gather(q));
        let range = admissible_ranges(&phi_m, &q_m).map_err(|e| match e {
            CalibrationError::NoActiveTrader => CalibrationError::NoActiveTraderAt {
                node: net.node_name(n).to_string(),
                period: net.periods[t].clone(),
            },
            other => other,
        })?;
        let mut r = reference.market(n, t);
        r.lambda_lo = lambda_lo.at(n, t);
        r.lambda_hi = lambda_hi.at(n, t);
        let choice = select_anchors(range, &phi_m, &q_m, s_ref.at(n, t), &r);
        records.push(MarketRecord {
            node: n,
            period: t,
            range,
            lambda_lo: r.lambda_lo,
            lambda_hi: r.lambda_hi,
            choice,
            widened_lower: false,
            widened_upper: false,
        });
    }
    Ok(records)
}

/// Module III sales estimates and limited market power for every market,
/// given the anchors chosen in `records` (parallel to `mkts`). Entries
/// outside the markets are zero in `theta_lim` and copied from `q` in
/// `q_est`.
pub fn estimate_all(
    mkts: &[MarketKey],
    records: &[MarketRecord],
    phi: &Array3,
    q: &Array3,
    s_ref: &Array2,
) -> Result<(ThetaMatrix, Array3), CalibrationError> {
    let (nf, nn, nt) = q.shape();
    let mut theta_lim = ThetaMatrix::uniform(nf, nn, nt, 0.0);
    let mut q_est = q.clone();
    for (m, rec) in mkts.iter().zip(records) {
        let (phi_m, q_m) = (m.gather(phi), m.gather(q));
        let est = estimate_sales(
            rec.choice.lambda0,
            rec.choice.eta,
            s_ref.at(m.node, m.period),
            &phi_m,
            &q_m,
        )?;
        for (k, &f) in m.traders.iter().enumerate() {
            theta_lim.set(f, m.node, m.period, est.theta_lim[k]);
            q_est.set(f, m.node, m.period, est.q_est[k]);
        }
    }
    Ok((theta_lim, q_est))
}

/// Anchors with consumption `s_ref` and the prices and elasticities chosen
/// in `records`.
pub fn chosen_anchors(net: &MarketNetwork, s_ref: &Array2, records: &[MarketRecord]) -> AnchorSet {
    let chosen: Vec<_> = records
        .iter()
        .map(|r| (r.node, r.period, r.choice.lambda0, r.choice.eta))
        .collect();
    build_anchors(net, s_ref, &chosen)
}

/// Admissible sets and anchor choices of every consumer market at the
/// reference data, i.e. the first iteration's state before any update.
pub fn initial_ranges(
    net: &MarketNetwork,
    reference: &ReferenceData,
    config: &CalibrationConfig,
) -> Result<Vec<MarketRecord>, CalibrationError> {
    config.validate()?;
    net.validate()?;
    reference.validate(net)?;
    let phi = marginal_costs(net, &reference.anchors(net), &reference.q_ref, config)?;
    select_all(
        net,
        &markets(net),
        &phi,
        &reference.q_ref,
        reference,
        &reference.lambda_lo,
        &reference.lambda_hi,
    )
}

/// Runs the calibration loop on consistent reference data.
pub fn calibrate(
    net: &MarketNetwork,
    reference: &ReferenceData,
    config: &CalibrationConfig,
) -> Result<CalibrationResult, CalibrationError> {
    config.validate()?;
    net.validate()?;
    reference.validate(net)?;
    let (nf, nn, nt) = (net.n_traders(), net.n_nodes(), net.n_periods());
    let mkts = markets(net);
    let s_ref = &reference.s_ref;
    let mut q = reference.q_ref.clone();
    let mut lambda_lo = reference.lambda_lo.clone();
    let mut lambda_hi = reference.lambda_hi.clone();
    let mut trace: Vec<IterationRecord> = Vec::new();

    let mut phi = marginal_costs(net, &reference.anchors(net), &q, config).map_err(|source| {
        CalibrationError::SolverFailure {
            stage: "marginal cost recovery",
            iteration: 0,
            source: Box::new(source),
            trace: Vec::new(),
        }
    })?;

    for iteration in 1..=config.max_iterations {
        let mut records = select_all(net, &mkts, &phi, &q, reference, &lambda_lo, &lambda_hi)?;
        let satisfied = records.iter().filter(|r| r.choice.satisfied()).count();
        let anchors = chosen_anchors(net, s_ref, &records);
        info!(
            "iteration {iteration}: {satisfied}/{} markets inside their admissible sets",
            records.len()
        );

        if satisfied == records.len() {
            let mut theta = ThetaMatrix::uniform(nf, nn, nt, 0.0);
            for (m, rec) in mkts.iter().zip(&records) {
                let (phi_m, q_m) = (m.gather(&phi), m.gather(&q));
                let act = active_traders(&q_m);
                let mut lim = vec![0.0; q_m.len()];
                for &k in &act {
                    let th = compute_theta(
                        rec.choice.lambda0,
                        q_m[k],
                        s_ref.at(m.node, m.period),
                        phi_m[k],
                        rec.choice.eta,
                    )?;
                    lim[k] = th.clamp(0.0, 1.0);
                }
                let fill = fill_in_theta(&act, &lim, &q_m);
                for (k, &f) in m.traders.iter().enumerate() {
                    let v = if act.contains(&k) { lim[k] } else { fill };
                    theta.set(f, m.node, m.period, v);
                }
            }
            trace.push(IterationRecord {
                iteration,
                markets: records,
                satisfied_markets: satisfied,
                widened: 0,
                consumption_check: None,
                price_pinning: None,
            });
            return finish(
                net,
                reference,
                config,
                Finish {
                    theta,
                    anchors,
                    q,
                    phi,
                    iterations: iteration,
                    termination: Termination::Exact,
                    trace,
                    lambda_lo,
                    lambda_hi,
                    validation: None,
                },
            );
        }

        let (theta_lim, q_est) = estimate_all(&mkts, &records, &phi, &q, s_ref)?;

        // Widen price bounds that were hit.
        let mut widened = 0;
        if config.widen_fraction > 0.0 {
            for rec in records.iter_mut() {
                let (n, t) = (rec.node, rec.period);
                let step = config.widen_fraction * reference.lambda_ref.at(n, t);
                if rec.choice.hit_lower {
                    let lo = (lambda_lo.at(n, t) - step).max(0.0);
                    if lo < lambda_lo.at(n, t) {
                        lambda_lo.set(n, t, lo);
                        rec.widened_lower = true;
                        widened += 1;
                    }
                }
                if rec.choice.hit_upper {
                    lambda_hi.set(n, t, lambda_hi.at(n, t) + step);
                    rec.widened_upper = true;
                    widened += 1;
                }
            }
        }
        debug!("iteration {iteration}: widened {widened} price bounds");

        let mut record = IterationRecord {
            iteration,
            markets: records,
            satisfied_markets: satisfied,
            widened,
            consumption_check: None,
            price_pinning: None,
        };

        if widened == 0 {
            let sys = assemble_base(net, &anchors, &theta_lim)?;
            let eq = solve_system(net, &sys, config.solver_tol).map_err(|source| {
                CalibrationError::SolverFailure {
                    stage: "tolerance check",
                    iteration,
                    source: Box::new(source),
                    trace: trace.clone(),
                }
            })?;
            let worst = mkts
                .iter()
                .map(|m| {
                    let (n, t) = (m.node, m.period);
                    (eq.consumption.at(n, t) - s_ref.at(n, t)).abs()
                        / config.consumption_tol(s_ref.at(n, t))
                })
                .fold(0.0, f64::max);
            record.consumption_check = Some(worst);
            if worst <= 1.0 {
                trace.push(record);
                return finish(
                    net,
                    reference,
                    config,
                    Finish {
                        theta: theta_lim,
                        anchors,
                        q,
                        phi,
                        iterations: iteration,
                        termination: Termination::Tolerance,
                        trace,
                        lambda_lo,
                        lambda_hi,
                        validation: Some(eq),
                    },
                );
            }
        }

        let update = match update_step(net, &anchors, &theta_lim, &q, &q_est, s_ref, config) {
            Ok(u) => u,
            Err(CalibrationError::Model(source)) => {
                trace.push(record);
                return Err(CalibrationError::SolverFailure {
                    stage: "update step",
                    iteration,
                    source: Box::new(source),
                    trace,
                });
            }
            Err(e) => return Err(e),
        };
        record.price_pinning = Some(update.max_price_deviation);
        trace.push(record);
        q = update.q_new;
        phi = update.phi_new;
    }
    Err(CalibrationError::MaxIterationsExceeded {
        iterations: config.max_iterations,
        trace,
    })
}

struct Finish {
    theta: ThetaMatrix,
    anchors: AnchorSet,
    q: Array3,
    phi: Array3,
    iterations: usize,
    termination: Termination,
    trace: Vec<IterationRecord>,
    lambda_lo: Array2,
    lambda_hi: Array2,
    validation: Option<Equilibrium>,
}

fn finish(
    net: &MarketNetwork,
    reference: &ReferenceData,
    config: &CalibrationConfig,
    f: Finish,
) -> Result<CalibrationResult, CalibrationError> {
    let eq = match f.validation {
        Some(eq) => eq,
        None => {
            let sys = assemble_base(net, &f.anchors, &f.theta)?;
            solve_system(net, &sys, config.solver_tol).map_err(|source| {
                CalibrationError::SolverFailure {
                    stage: "validation",
                    iteration: f.iterations,
                    source: Box::new(source),
                    trace: f.trace.clone(),
                }
            })?
        }
    };
    let validation = Validation::from(&eq);
    let markets = markets(net);
    let deviations = deviation_table(&markets, reference, &f.anchors, &f.q, &validation);
    info!(
        "calibration finished after {} iterations ({:?})",
        f.iterations, f.termination
    );
    Ok(CalibrationResult {
        theta: f.theta,
        anchors: f.anchors,
        q_cal: f.q,
        phi_cal: f.phi,
        iterations: f.iterations,
        termination: f.termination,
        trace: f.trace,
        deviations,
        validation,
        reference: reference.clone(),
        lambda_lo: f.lambda_lo,
        lambda_hi: f.lambda_hi,
        markets,
    })
}

/// Deviation statistics: calibrated parameters against references, then
/// the validation equilibrium against the calibrated parameters. Computed
/// from the stored vectors every time.
pub fn deviation_table(
    markets: &[MarketKey],
    reference: &ReferenceData,
    anchors: &AnchorSet,
    q_cal: &Array3,
    validation: &Validation,
) -> Vec<DeviationRow> {
    let mut lambda = Vec::new();
    let mut eta = Vec::new();
    let mut s = Vec::new();
    let mut price = Vec::new();
    let mut q_ref = Vec::new();
    let mut q_star = Vec::new();
    for m in markets {
        let (n, t) = (m.node, m.period);
        let Some(a) = anchors.get(n, t) else { continue };
        lambda.push((a.lambda0, reference.lambda_ref.at(n, t)));
        eta.push((-a.eta, -reference.eta_ref.at(n, t)));
        s.push((validation.consumption.at(n, t), reference.s_ref.at(n, t)));
        price.push((validation.price.at(n, t), a.lambda0));
        for &f in &m.traders {
            q_ref.push((q_cal.at(f, n, t), reference.q_ref.at(f, n, t)));
            q_star.push((validation.sales.at(f, n, t), q_cal.at(f, n, t)));
        }
    }
    vec![
        DeviationRow::from_pairs("lambda0", "lambda_ref", &lambda),
        DeviationRow::from_pairs("-eta", "-eta_ref", &eta),
        DeviationRow::from_pairs("q_cal", "q_ref", &q_ref),
        DeviationRow::from_pairs("s*", "s_ref", &s),
        DeviationRow::from_pairs("lambda*", "lambda0", &price),
        DeviationRow::from_pairs("q*", "q_cal", &q_star),
    ]
}
