//! Elimination of free variables by principal pivoting.
//!
//! Pivoting on a principal block `a` of `w = T z + r` exchanges the roles of
//! `w_a` and `z_a`. Free rows often have a zero diagonal (an equality row that
//! does not involve its own multiplier), so a free index is pivoted either
//! alone or together with one partner index in a 2x2 block. A complementary
//! partner keeps its complementarity pair with the roles swapped, so the
//! remainder is again a pure LCP.

use super::{LcpError, Mlcp};

const PIVOT_REL_TOL: f64 = 1e-9;

pub(crate) struct Reduced {
    /// Original index of every reduced variable.
    pub comp: Vec<usize>,
    /// Whether `w` and `z` of a reduced variable are exchanged.
    pub swapped: Vec<bool>,
    /// Row-major `n x n`.
    pub m: Vec<f64>,
    pub b: Vec<f64>,
    /// `z_k = row . zhat + offset` for every free original index `k`.
    free_rows: Vec<(usize, Vec<f64>, f64)>,
    dim_original: usize,
}

impl Reduced {
    pub fn dim(&self) -> usize {
        self.comp.len()
    }

    /// Maps a solution of the reduced LCP back to the original `z`.
    pub fn expand(&self, zhat: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut z = vec![0.0; self.dim_original];
        for p in 0..n {
            let i = self.comp[p];
            z[i] = if self.swapped[p] {
                let row = &self.m[p * n..(p + 1) * n];
                row.iter()
                    .zip(zhat)
                    .fold(self.b[p], |acc, (a, x)| acc + a * x)
            } else {
                zhat[p]
            };
        }
        for (k, row, offset) in &self.free_rows {
            z[*k] = row
                .iter()
                .zip(zhat)
                .fold(*offset, |acc, (a, x)| acc + a * x);
        }
        z
    }
}

struct Tableau {
    d: usize,
    t: Vec<f64>,
    r: Vec<f64>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.d + j]
    }

    fn row_scale(&self, i: usize) -> f64 {
        let row = &self.t[i * self.d..(i + 1) * self.d];
        let col = (0..self.d).map(|k| self.at(k, i).abs());
        row.iter().map(|v| v.abs()).chain(col).fold(1.0, f64::max)
    }

    /// Principal block pivot on `block` (one or two indices).
    fn pivot(&mut self, block: &[usize]) {
        let d = self.d;
        let k = block.len();
        // Inverse of the pivot block.
        let inv: Vec<f64> = match *block {
            [a] => vec![1.0 / self.at(a, a)],
            [a, c] => {
                let (p, q, s, u) = (self.at(a, a), self.at(a, c), self.at(c, a), self.at(c, c));
                let det = p * u - q * s;
                vec![u / det, -q / det, -s / det, p / det]
            }
            _ => unreachable!("pivot blocks have one or two indices"),
        };
        let in_block = |j: usize| block.contains(&j);

        let cols: Vec<usize> = (0..d)
            .filter(|&j| !in_block(j) && block.iter().any(|&a| self.at(a, j) != 0.0))
            .collect();
        let rows: Vec<usize> = (0..d)
            .filter(|&i| !in_block(i) && block.iter().any(|&a| self.at(i, a) != 0.0))
            .collect();

        // u = A^-1 T[block, cols], ub = A^-1 r[block]
        let mut u = vec![0.0; k * cols.len()];
        let mut ub = vec![0.0; k];
        for p in 0..k {
            for (c, &j) in cols.iter().enumerate() {
                u[p * cols.len() + c] = (0..k).map(|q| inv[p * k + q] * self.at(block[q], j)).sum();
            }
            ub[p] = (0..k).map(|q| inv[p * k + q] * self.r[block[q]]).sum();
        }

        for &i in &rows {
            let c: Vec<f64> = block.iter().map(|&a| self.at(i, a)).collect();
            let base = i * d;
            for (ci, &j) in cols.iter().enumerate() {
                let delta: f64 = (0..k).map(|p| c[p] * u[p * cols.len() + ci]).sum();
                self.t[base + j] -= delta;
            }
            self.r[i] -= (0..k).map(|p| c[p] * ub[p]).sum::<f64>();
            for (q, &a) in block.iter().enumerate() {
                self.t[base + a] = (0..k).map(|p| c[p] * inv[p * k + q]).sum();
            }
        }
        for (p, &a) in block.iter().enumerate() {
            let base = a * d;
            for (ci, &j) in cols.iter().enumerate() {
                self.t[base + j] = -u[p * cols.len() + ci];
            }
            self.r[a] = -ub[p];
            for (q, &c) in block.iter().enumerate() {
                self.t[base + c] = inv[p * k + q];
            }
        }
    }
}

pub(crate) fn eliminate_free(problem: &Mlcp) -> Result<Reduced, LcpError> {
    let d = problem.dim();
    let mut tab = Tableau {
        d,
        t: problem.matrix().to_vec(),
        r: problem.b().to_vec(),
    };
    let mut exchanged = vec![false; d];
    let mut pending = vec![false; d];
    for k in problem.free_indices() {
        pending[k] = true;
    }

    for k in 0..d {
        if !pending[k] {
            continue;
        }
        let sk = tab.row_scale(k);
        if tab.at(k, k).abs() / sk > PIVOT_REL_TOL {
            tab.pivot(&[k]);
            pending[k] = false;
            exchanged[k] = true;
            continue;
        }
        // Zero diagonal: pair with the partner giving the best-conditioned 2x2 block.
        let mut best: Option<(usize, f64)> = None;
        for j in 0..d {
            if j == k || (exchanged[j] && !pending[j]) || tab.at(k, j) == 0.0 {
                continue;
            }
            let det = tab.at(k, k) * tab.at(j, j) - tab.at(k, j) * tab.at(j, k);
            let score = det.abs() / (sk * tab.row_scale(j));
            if score > PIVOT_REL_TOL && best.is_none_or(|b| score > b.1) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else {
            return Err(LcpError::SingularFreeBlock {
                index: k,
                label: problem.label(k),
            });
        };
        tab.pivot(&[k, j]);
        pending[k] = false;
        pending[j] = false;
        exchanged[k] = true;
        exchanged[j] = true;
    }

    let comp: Vec<usize> = (0..d).filter(|&i| !problem.is_free(i)).collect();
    let n = comp.len();
    let mut m = vec![0.0; n * n];
    for (p, &i) in comp.iter().enumerate() {
        for (q, &j) in comp.iter().enumerate() {
            m[p * n + q] = tab.at(i, j);
        }
    }
    let b = comp.iter().map(|&i| tab.r[i]).collect();
    let swapped = comp.iter().map(|&i| exchanged[i]).collect();
    let free_rows = problem
        .free_indices()
        .map(|k| (k, comp.iter().map(|&j| tab.at(k, j)).collect(), tab.r[k]))
        .collect();
    Ok(Reduced {
        comp,
        swapped,
        m,
        b,
        free_rows,
        dim_original: d,
    })
}
