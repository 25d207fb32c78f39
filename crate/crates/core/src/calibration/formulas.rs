//! Market-local calibration formulas. Every function here works on one
//! (node, period) market given the traders' marginal costs and sales.

use serde::{Deserialize, Serialize};

use super::CalibrationError;

/// Relative slack used when comparing against range endpoints, so that
/// values reproduced from an exact equilibrium are not rejected by rounding.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Market power parameter that makes sales `q_f` optimal for a trader with
/// marginal cost `phi_f` at the anchor `(s0, lambda0, eta)`.
pub fn compute_theta(
    lambda0: f64,
    q_f: f64,
    s0: f64,
    phi_f: f64,
    eta: f64,
) -> Result<f64, CalibrationError> {
    if q_f <= 0.0 {
        return Err(CalibrationError::ZeroSales);
    }
    if lambda0 <= 0.0 {
        return Err(CalibrationError::ZeroPrice);
    }
    if !(s0 > 0.0 && eta < 0.0) {
        return Err(CalibrationError::InvalidInput(format!(
            "anchor needs s0 > 0 and eta < 0, got s0={s0}, eta={eta}"
        )));
    }
    Ok((lambda0 - phi_f) / ((lambda0 / (s0 * -eta)) * q_f))
}

/// Interval of anchor prices consistent with θ ≥ 0 for active traders and
/// with inactive traders staying out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRange {
    pub lo: f64,
    /// `f64::INFINITY` when every trader is active.
    #[serde(with = "crate::io::inf_f64")]
    pub hi: f64,
}

impl LambdaRange {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi + BOUNDARY_TOL * self.hi.abs().max(1.0)
    }
}

/// Sales below this are treated as zero when splitting traders into active
/// and inactive sets.
pub fn zero_sales_tol(s: f64) -> f64 {
    1e-9 * s.abs().max(1.0)
}

fn active(q: &[f64]) -> impl Iterator<Item = usize> + '_ {
    let s: f64 = q.iter().sum();
    let tol = zero_sales_tol(s);
    (0..q.len()).filter(move |&f| q[f] > tol)
}

fn inactive(q: &[f64]) -> impl Iterator<Item = usize> + '_ {
    let s: f64 = q.iter().sum();
    let tol = zero_sales_tol(s);
    (0..q.len()).filter(move |&f| q[f] <= tol)
}

/// Admissible anchor price range: at least every active trader's marginal
/// cost, at most the cheapest inactive trader's.
pub fn admissible_ranges(phi: &[f64], q: &[f64]) -> Result<LambdaRange, CalibrationError> {
    if phi.len() != q.len() {
        return Err(CalibrationError::InvalidInput(
            "phi and q lengths differ".into(),
        ));
    }
    let lo = active(q).map(|f| phi[f]).fold(f64::NEG_INFINITY, f64::max);
    if lo == f64::NEG_INFINITY {
        return Err(CalibrationError::NoActiveTrader);
    }
    let hi = inactive(q).map(|f| phi[f]).fold(f64::INFINITY, f64::min);
    Ok(LambdaRange { lo, hi })
}

/// Largest `-eta` keeping every active trader's θ at or below one for the
/// anchor price `lambda0`. Traders priced at cost impose no bound; the
/// result is `f64::INFINITY` when none does.
pub fn eta_upper_bound(lambda0: f64, phi: &[f64], q: &[f64], s: f64) -> f64 {
    active(q)
        .filter(|&f| lambda0 != phi[f])
        .map(|f| lambda0 / (lambda0 - phi[f]) * (q[f] / s))
        .filter(|b| *b > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Highest anchor price at which `-eta = minus_eta` still satisfies the
/// elasticity bound, i.e. `eta_upper_bound(lambda0) >= minus_eta`.
fn lambda_cap_for_eta(minus_eta: f64, phi: &[f64], q: &[f64], s: f64) -> f64 {
    active(q)
        .filter(|&f| minus_eta * s > q[f])
        .map(|f| minus_eta * s * phi[f] / (minus_eta * s - q[f]))
        .fold(f64::INFINITY, f64::min)
}

/// Reference values and their admissible boxes for one market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketReference {
    pub lambda_ref: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Reference elasticity (negative) and its bounds, `eta_lo <= eta_hi < 0`.
    pub eta_ref: f64,
    pub eta_lo: f64,
    pub eta_hi: f64,
}

/// Anchor chosen for one market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorChoice {
    pub lambda0: f64,
    pub eta: f64,
    /// The admissible price interval after accounting for the elasticity box.
    pub target: LambdaRange,
    #[serde(with = "crate::io::inf_f64")]
    pub minus_eta_hi: f64,
    pub lambda_satisfied: bool,
    pub eta_satisfied: bool,
    /// The price was pushed against the lower/upper reference bound.
    pub hit_lower: bool,
    pub hit_upper: bool,
}

impl AnchorChoice {
    pub fn satisfied(&self) -> bool {
        self.lambda_satisfied && self.eta_satisfied
    }
}

fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

fn slack(x: f64) -> f64 {
    BOUNDARY_TOL * x.abs().max(1.0)
}

/// Picks `(lambda0, eta)` for one market: the reference point projected onto
/// the admissible set when that set meets the reference box, otherwise the
/// point of the box closest to it.
pub fn select_anchors(
    range: LambdaRange,
    phi: &[f64],
    q: &[f64],
    s: f64,
    r: &MarketReference,
) -> AnchorChoice {
    let e_min = -r.eta_hi;
    let e_max = -r.eta_lo;
    // Prices above this cap force -eta below the reference box.
    let cap = lambda_cap_for_eta(e_min, phi, q, s);
    let target = LambdaRange {
        lo: range.lo,
        hi: range.hi.min(cap),
    };
    let lo = target.lo.max(r.lambda_lo);
    let hi = target.hi.min(r.lambda_hi);
    let (lambda0, lambda_satisfied) = if lo <= hi + slack(hi) {
        (clamp(r.lambda_ref, lo.min(hi), hi), true)
    } else {
        // Closest point of the reference box to the target interval; when
        // the target itself is empty, aim between its endpoints.
        let (a, b) = (target.lo.min(target.hi), target.lo.max(target.hi));
        let p = if b < r.lambda_lo {
            r.lambda_lo
        } else if a > r.lambda_hi {
            r.lambda_hi
        } else {
            clamp(0.5 * (a + b), r.lambda_lo, r.lambda_hi)
        };
        (p, false)
    };
    let minus_eta_hi = eta_upper_bound(lambda0, phi, q, s);
    let (minus_eta, eta_satisfied) = if minus_eta_hi >= e_min - slack(e_min) {
        (
            clamp(-r.eta_ref, e_min, e_max.min(minus_eta_hi).max(e_min)),
            true,
        )
    } else {
        (e_min, false)
    };
    let at_lo = lambda0 <= r.lambda_lo + slack(r.lambda_lo);
    let at_hi = lambda0 >= r.lambda_hi - slack(r.lambda_hi);
    AnchorChoice {
        lambda0,
        eta: -minus_eta,
        target,
        minus_eta_hi,
        lambda_satisfied,
        eta_satisfied,
        hit_lower: at_lo && target.hi <= r.lambda_lo + slack(r.lambda_lo),
        hit_upper: at_hi && target.lo >= r.lambda_hi - slack(r.lambda_hi),
    }
}

/// Sales estimate and limited market power for one market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalesEstimate {
    pub q_est: Vec<f64>,
    pub theta_lim: Vec<f64>,
    /// Unclamped market power of active traders, `None` for inactive ones.
    pub theta_raw: Vec<Option<f64>>,
}

/// Estimates the sales each trader would choose at the anchor with its
/// market power clamped to [0, 1]. Inactive traders get the sales-weighted
/// mean market power of the active ones.
pub fn estimate_sales(
    lambda0: f64,
    eta: f64,
    s0: f64,
    phi: &[f64],
    q_ref: &[f64],
) -> Result<SalesEstimate, CalibrationError> {
    if phi.len() != q_ref.len() {
        return Err(CalibrationError::InvalidInput(
            "phi and q lengths differ".into(),
        ));
    }
    let act: Vec<usize> = active(q_ref).collect();
    if act.is_empty() {
        return Err(CalibrationError::AllSalesZero);
    }
    let k = q_ref.len();
    let mut theta_raw = vec![None; k];
    let mut theta_lim = vec![0.0; k];
    for &f in &act {
        let th = compute_theta(lambda0, q_ref[f], s0, phi[f], eta)?;
        theta_raw[f] = Some(th);
        theta_lim[f] = th.clamp(0.0, 1.0);
    }
    let fill = fill_in_theta(&act, &theta_lim, q_ref);
    for f in inactive(q_ref) {
        theta_lim[f] = fill;
    }
    let spread = s0 * -eta;
    let q_est = (0..k)
        .map(|f| {
            if theta_raw[f].is_some_and(|th| (0.0..=1.0).contains(&th)) {
                // Inside [0, 1] the estimate reproduces the reference exactly.
                return q_ref[f];
            }
            let markup = (lambda0 - phi[f]) / lambda0;
            let q = if theta_lim[f] > 0.0 {
                markup * spread / theta_lim[f]
            } else {
                q_ref[f] - markup.abs() * spread
            };
            q.max(0.0)
        })
        .collect();
    Ok(SalesEstimate {
        q_est,
        theta_lim,
        theta_raw,
    })
}

/// Sales-weighted mean of the clamped market power of active traders.
pub fn fill_in_theta(active: &[usize], theta_lim: &[f64], q: &[f64]) -> f64 {
    let total: f64 = active.iter().map(|&f| q[f]).sum();
    if total <= 0.0 {
        return 0.0;
    }
    active.iter().map(|&f| theta_lim[f] * q[f]).sum::<f64>() / total
}

/// Indices of traders with positive sales.
pub fn active_traders(q: &[f64]) -> Vec<usize> {
    active(q).collect()
}
