//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;

/// Solves every LCP `w = M z + b` by enumerating all 2^d active sets and
/// returns the solutions found (Gaussian elimination per pattern).
pub fn enumerate_lcp(m: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    let d = b.len();
    let mut out = Vec::new();
    for mask in 0u32..(1 << d) {
        let active: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        // z_i free for i in active (w_i = 0), z_i = 0 otherwise.
        let k = active.len();
        let mut a = vec![vec![0.0; k + 1]; k];
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                a[r][c] = m[i][j];
            }
            a[r][k] = -b[i];
        }
        let Some(zs) = gauss(a) else { continue };
        let mut z = vec![0.0; d];
        for (r, &i) in active.iter().enumerate() {
            z[i] = zs[r];
        }
        let ok = (0..d).all(|i| {
            let w: f64 = b[i] + (0..d).map(|j| m[i][j] * z[j]).sum::<f64>();
            z[i] >= -1e-10 && w >= -1e-10
        });
        if ok {
            out.push(z);
        }
    }
    out
}

fn gauss(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = a.len();
    for c in 0..k {
        let p = (c..k).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(p, c);
        for r in 0..k {
            if r != c {
                let f = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    Some((0..k).map(|r| a[r][k] / a[r][r]).collect())
}

/// Random symmetric positive semidefinite matrix `A Aᵀ` of dimension `d`
/// (rank possibly deficient) plus a small ridge when `definite`.
pub fn random_psd(rng: &mut impl Rng, d: usize, definite: bool) -> Vec<Vec<f64>> {
    let rank = if definite { d } else { rng.gen_range(1..=d) };
    let a: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..rank).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let ridge = if definite { 0.1 } else { 0.0 };
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let v: f64 = (0..rank).map(|k| a[i][k] * a[j][k]).sum();
                    if i == j {
                        v + ridge
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

/// Closed-form single-supplier conjectural-variations equilibrium with
/// constant marginal cost `c` and inverse demand `int + slp s`.
pub fn cv_monopoly(int: f64, slp: f64, c: f64, theta: f64) -> f64 {
    if int <= c {
        0.0
    } else {
        (int - c) / ((1.0 + theta) * (-slp))
    }
}

/// Competitive price for constant-cost suppliers with capacities, found by
/// walking the merit order (cheapest first).
pub fn merit_order_price(int: f64, slp: f64, suppliers: &[(f64, f64)]) -> f64 {
    let mut order = suppliers.to_vec();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut q = 0.0;
    for &(c, cap) in &order {
        let p_start = int + slp * q;
        if p_start <= c {
            return p_start.max(0.0);
        }
        let p_end = int + slp * (q + cap);
        if p_end <= c {
            return c;
        }
        q += cap;
    }
    (int + slp * q).max(0.0)
}

/// `M z + b` for a dense row-major matrix.
pub fn affine(m: &[Vec<f64>], b: &[f64], z: &[f64]) -> Vec<f64> {
    m.iter()
        .zip(b)
        .map(|(row, bi)| bi + row.iter().zip(z).map(|(a, x)| a * x).sum::<f64>())
        .collect()
}

/// Compares a solver result on a symmetric PSD LCP with the enumeration
/// oracle. Such problems have a unique `w`; with a definite matrix `z` is
/// unique as well, otherwise it must equal some vertex solution up to a
/// null-space direction of `M`, which the check on `w` already covers.
pub fn check_against_oracle(
    m: &[Vec<f64>],
    b: &[f64],
    definite: bool,
    result: Result<cvcal_core::LcpSolution, cvcal_core::LcpError>,
    tol: f64,
) -> Result<(), String> {
    let oracle = enumerate_lcp(m, b);
    let sol = match (result, oracle.is_empty()) {
        (Err(_), true) => return Ok(()),
        (Err(e), false) => return Err(format!("solver failed on a solvable problem: {e}")),
        (Ok(s), true) => {
            return Err(format!(
                "solver returned {:?} for an infeasible problem",
                s.z
            ))
        }
        (Ok(s), false) => s,
    };
    if sol.residual > tol {
        return Err(format!("residual {:e}", sol.residual));
    }
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let w = affine(m, b, &sol.z);
    let w_err = oracle
        .iter()
        .map(|z| dist(&affine(m, b, z), &w))
        .fold(f64::INFINITY, f64::min);
    if w_err > tol {
        return Err(format!("w differs from the oracle by {w_err:e}"));
    }
    if definite {
        let z_err = oracle
            .iter()
            .map(|z| dist(z, &sol.z))
            .fold(f64::INFINITY, f64::min);
        if z_err > tol {
            return Err(format!("z differs from the oracle by {z_err:e}"));
        }
    }
    Ok(())
}

/// Brute-force membership of `(lambda0, -eta)` in the admissible set of one
/// market: every active trader's market power in [0, 1] and no inactive
/// trader undercutting the price. Exact comparisons are relaxed by `tol`.
pub fn brute_admissible(lambda0: f64, minus_eta: f64, phi: &[f64], q: &[f64], tol: f64) -> bool {
    let s: f64 = q.iter().sum();
    phi.iter().zip(q).all(|(&p, &qf)| {
        if qf > 0.0 {
            let theta = (lambda0 - p) / ((lambda0 / (s * minus_eta)) * qf);
            theta >= -tol && theta <= 1.0 + tol
        } else {
            lambda0 <= p * (1.0 + tol)
        }
    })
}

/// A random single market with 1..=4 traders, at least one active.
pub fn random_market(rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    let k = rng.gen_range(1..=4);
    let phi: Vec<f64> = (0..k).map(|_| rng.gen_range(20.0..100.0)).collect();
    let mut q: Vec<f64> = (0..k)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(1.0..50.0)
            }
        })
        .collect();
    if q.iter().all(|&x| x == 0.0) {
        q[0] = rng.gen_range(1.0..50.0);
    }
    (phi, q)
}

/// Number of points on a 50x50 grid over `(lambda0, -eta)` where the
/// closed-form admissible set and the brute-force check disagree.
pub fn grid_misclassified(phi: &[f64], q: &[f64], tol: f64) -> usize {
    use cvcal_core::calibration::{admissible_ranges, eta_upper_bound};
    let s: f64 = q.iter().sum();
    let range = admissible_ranges(phi, q).expect("market has an active trader");
    let lmax = phi.iter().copied().fold(0.0, f64::max) * 1.5;
    let mut bad = 0;
    for i in 0..50 {
        let lambda0 = lmax * (i as f64 + 0.5) / 50.0;
        let bound = eta_upper_bound(lambda0, phi, q, s);
        for j in 0..50 {
            let minus_eta = 3.0 * (j as f64 + 0.5) / 50.0;
            let brute = brute_admissible(lambda0, minus_eta, phi, q, tol);
            let closed = lambda0 >= range.lo * (1.0 - tol)
                && lambda0 <= range.hi * (1.0 + tol)
                && minus_eta <= bound * (1.0 + tol);
            if brute != closed {
                bad += 1;
            }
        }
    }
    bad
}
