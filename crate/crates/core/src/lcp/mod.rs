//! Mixed linear complementarity problems.
//!
//! A problem is the system `w = M z + b` where every index is either
//! complementary (`0 <= w_i`, `0 <= z_i`, `w_i z_i = 0`) or free (`w_i = 0`,
//! `z_i` unrestricted). Free variables are eliminated by principal pivoting,
//! the remaining pure LCP is solved with Lemke's method using the covering
//! vector `e = (1, ..., 1)` and a lexicographic ratio test, and the free
//! values are recovered by back-substitution.

mod dense;
mod lemke;
mod reduce;

use thiserror::Error;

pub use lemke::DEFAULT_PIVOT_FACTOR;

/// Default complementarity tolerance, in natural model units.
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("secondary ray after {pivots} pivots while {entering} was entering")]
    RayTermination { pivots: usize, entering: String },
    #[error("free block is singular at variable {label}")]
    SingularFreeBlock { index: usize, label: String },
    #[error("pivot limit of {0} reached")]
    PivotLimit(usize),
    #[error("residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    ToleranceNotMet { residual: f64, tol: f64 },
}

/// A mixed LCP with dense storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlcp {
    dim: usize,
    /// Row-major `dim x dim`.
    m: Vec<f64>,
    b: Vec<f64>,
    free: Vec<bool>,
    labels: Option<Vec<String>>,
}

impl Mlcp {
    /// Builds a pure LCP from a row-major matrix and offset vector.
    pub fn new(m: Vec<f64>, b: Vec<f64>) -> Result<Self, LcpError> {
        let dim = b.len();
        if m.len() != dim * dim {
            return Err(LcpError::DimensionMismatch(format!(
                "matrix has {} entries, expected {}x{}",
                m.len(),
                dim,
                dim
            )));
        }
        Ok(Self {
            dim,
            m,
            b,
            free: vec![false; dim],
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: Vec<f64>) -> Result<Self, LcpError> {
        if let Some(bad) = rows.iter().position(|r| r.len() != b.len()) {
            return Err(LcpError::DimensionMismatch(format!(
                "row {bad} has length {}, expected {}",
                rows[bad].len(),
                b.len()
            )));
        }
        Self::new(rows.concat(), b)
    }

    /// Marks the given indices as free.
    pub fn with_free<I: IntoIterator<Item = usize>>(mut self, free: I) -> Result<Self, LcpError> {
        for i in free {
            if i >= self.dim {
                return Err(LcpError::DimensionMismatch(format!(
                    "free index {i} out of range for dimension {}",
                    self.dim
                )));
            }
            self.free[i] = true;
        }
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, LcpError> {
        if labels.len() != self.dim {
            return Err(LcpError::DimensionMismatch(format!(
                "{} labels for dimension {}",
                labels.len(),
                self.dim
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.dim + j]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.m
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.free[i]
    }

    pub fn free_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.free
            .iter()
            .enumerate()
            .filter(|(_, f)| **f)
            .map(|(i, _)| i)
    }

    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(l) => l[i].clone(),
            None => format!("#{i}"),
        }
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of stored nonzero coefficients.
    pub fn nnz(&self) -> usize {
        self.m.iter().filter(|v| **v != 0.0).count()
    }

    /// `w = M z + b`.
    pub fn eval_w(&self, z: &[f64]) -> Result<Vec<f64>, LcpError> {
        if z.len() != self.dim {
            return Err(LcpError::DimensionMismatch(format!(
                "z has length {}, expected {}",
                z.len(),
                self.dim
            )));
        }
        Ok(self
            .m
            .chunks_exact(self.dim.max(1))
            .zip(&self.b)
            .map(|(row, bi)| row.iter().zip(z).fold(*bi, |acc, (a, x)| acc + a * x))
            .take(self.dim)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolution {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// Largest complementarity violation, see [`residual`].
    pub residual: f64,
    pub pivots: usize,
}

/// Largest violation of the complementarity conditions at `z`.
///
/// For a complementary index this is `max(-z_i, -w_i, |z_i w_i|)`, for a free
/// index `|w_i|`.
pub fn residual(problem: &Mlcp, z: &[f64]) -> Result<f64, LcpError> {
    let w = problem.eval_w(z)?;
    Ok(violation(problem, z, &w))
}

fn violation(problem: &Mlcp, z: &[f64], w: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..problem.dim {
        let v = if problem.free[i] {
            w[i].abs()
        } else {
            (-z[i]).max(-w[i]).max((z[i] * w[i]).abs())
        };
        worst = worst.max(v);
    }
    worst
}

/// Solves a mixed LCP to within `tol`.
pub fn solve_mlcp(problem: &Mlcp, tol: f64) -> Result<LcpSolution, LcpError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(LcpError::InvalidTolerance(tol));
    }
    let reduced = reduce::eliminate_free(problem)?;
    let n = reduced.dim();
    let max_pivots = DEFAULT_PIVOT_FACTOR * (n + 1);
    let outcome = lemke::solve(&reduced.m, &reduced.b, n, max_pivots, |j| {
        problem.label(reduced.comp[j])
    })?;

    let mut z = reduced.expand(&outcome.z);
    let mut w = problem.eval_w(&z)?;
    let mut res = violation(problem, &z, &w);
    log::debug!(
        "lemke: dim {} (reduced {}), {} pivots, residual {:.3e}",
        problem.dim,
        n,
        outcome.pivots,
        res
    );

    if res > tol {
        if let Some(polished) = polish(problem, &z, &w) {
            let pw = problem.eval_w(&polished)?;
            let pres = violation(problem, &polished, &pw);
            log::debug!("active-set polish: residual {res:.3e} -> {pres:.3e}");
            if pres < res {
                z = polished;
                w = pw;
                res = pres;
            }
        }
    }
    // Rounding can leave sign-constrained values a few ulps below zero.
    if (0..problem.dim).any(|i| !problem.free[i] && z[i] < 0.0) {
        for (zi, free) in z.iter_mut().zip(&problem.free) {
            if !free {
                *zi = zi.max(0.0);
            }
        }
        w = problem.eval_w(&z)?;
        res = violation(problem, &z, &w);
    }
    if res > tol {
        return Err(LcpError::ToleranceNotMet { residual: res, tol });
    }
    Ok(LcpSolution {
        z,
        w,
        residual: res,
        pivots: outcome.pivots,
    })
}

/// Re-solves the equality system of the active set implied by `(z, w)`.
fn polish(problem: &Mlcp, z: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let d = problem.dim;
    let active: Vec<usize> = (0..d).filter(|&i| problem.free[i] || z[i] > w[i]).collect();
    let k = active.len();
    let mut a = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            a[r * k + c] = problem.entry(i, j);
        }
        rhs[r] = -problem.b[i];
    }
    dense::lu_solve(&mut a, &mut rhs, k)?;
    let mut out = vec![0.0; d];
    for (r, &i) in active.iter().enumerate() {
        out[i] = rhs[r];
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_dimensional() {
        let p = Mlcp::from_rows(&[vec![1.0]], vec![-2.0]).unwrap();
        let s = solve_mlcp(&p, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(s.z[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.w[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn nonnegative_offset_is_trivial() {
        let p = Mlcp::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        let s = solve_mlcp(&p, DEFAULT_TOL).unwrap();
        assert_eq!(s.z, vec![0.0, 0.0]);
        assert_eq!(s.w, vec![1.0, 1.0]);
        assert_eq!(s.pivots, 0);
    }

    #[test]
    fn two_dimensional_interior() {
        // Enumerating the four sign patterns leaves only z = (1/3, 1/3).
        let p = Mlcp::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]], vec![-1.0, -1.0]).unwrap();
        let s = solve_mlcp(&p, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(s.z[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.z[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn residual_by_hand() {
        let p = Mlcp::from_rows(&[vec![1.0]], vec![-2.0]).unwrap();
        assert_eq!(residual(&p, &[0.0]).unwrap(), 2.0);
        assert_eq!(residual(&p, &[1.0]).unwrap(), 1.0);
        assert_eq!(residual(&p, &[2.0]).unwrap(), 0.0);
        assert!(matches!(
            residual(&p, &[1.0, 2.0]),
            Err(LcpError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ray_on_infeasible_problem() {
        // w = -z - 1 can never be nonnegative.
        let p = Mlcp::from_rows(&[vec![-1.0]], vec![-1.0]).unwrap();
        assert!(matches!(
            solve_mlcp(&p, DEFAULT_TOL),
            Err(LcpError::RayTermination { .. })
        ));
    }

    #[test]
    fn free_variable_with_zero_diagonal() {
        // z0 >= 0 against w0 = z0 + z1 - 3, z1 free against w1 = 1 - z0:
        // the free block is [0], so elimination has to pair it with z0.
        let p = Mlcp::from_rows(&[vec![1.0, 1.0], vec![-1.0, 0.0]], vec![-3.0, 1.0])
            .unwrap()
            .with_free([1])
            .unwrap();
        let s = solve_mlcp(&p, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(s.z[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.z[1], 2.0, epsilon = 1e-12);
        assert!(s.residual <= DEFAULT_TOL);
    }

    #[test]
    fn free_variable_with_negative_value() {
        // z1 free with w1 = z1 + 5 forces z1 = -5; then w0 = z0 + z1 + 1.
        let p = Mlcp::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]], vec![1.0, 5.0])
            .unwrap()
            .with_free([1])
            .unwrap();
        let s = solve_mlcp(&p, DEFAULT_TOL).unwrap();
        assert_abs_diff_eq!(s.z[1], -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.z[0], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_free_block() {
        let p = Mlcp::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]], vec![-1.0, 0.0])
            .unwrap()
            .with_free([1])
            .unwrap();
        assert!(matches!(
            solve_mlcp(&p, DEFAULT_TOL),
            Err(LcpError::SingularFreeBlock { index: 1, .. })
        ));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Mlcp::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(Mlcp::from_rows(&[vec![1.0]], vec![1.0])
            .unwrap()
            .with_free([3])
            .is_err());
        assert!(Mlcp::from_rows(&[vec![1.0]], vec![1.0])
            .unwrap()
            .with_labels(vec![])
            .is_err());
        let p = Mlcp::from_rows(&[vec![1.0]], vec![1.0]).unwrap();
        assert!(matches!(
            solve_mlcp(&p, 0.0),
            Err(LcpError::InvalidTolerance(_))
        ));
    }
}
