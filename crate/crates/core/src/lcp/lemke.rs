//! Lemke's complementary pivoting with an explicit basis inverse.
//!
//! The system is `I w - M z - e z0 = b`. The basis inverse is kept dense and
//! updated by rank-one eliminations that skip zero entries, which keeps the
//! cost low on the sparse network matrices this crate assembles. Ties in the
//! ratio test are broken lexicographically on the rows of `[x_B, B^-1]`, so
//! no basis is visited twice.

use super::LcpError;

/// Pivot budget per reduced dimension.
pub const DEFAULT_PIVOT_FACTOR: usize = 50;

const PIVOT_TOL: f64 = 1e-11;
const TIE_TOL: f64 = 1e-12;
const REFINE_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    W(usize),
    Z(usize),
    Artificial,
}

impl Var {
    fn complement(self) -> Var {
        match self {
            Var::W(i) => Var::Z(i),
            Var::Z(i) => Var::W(i),
            Var::Artificial => Var::Artificial,
        }
    }
}

pub(crate) struct Outcome {
    pub z: Vec<f64>,
    pub pivots: usize,
}

struct Lemke<'a> {
    n: usize,
    b: &'a [f64],
    /// Nonzeros of every column of `M`.
    cols: Vec<Vec<(usize, f64)>>,
    binv: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<Var>,
}

impl<'a> Lemke<'a> {
    fn new(m: &[f64], b: &'a [f64], n: usize) -> Self {
        let mut cols = vec![Vec::new(); n];
        for i in 0..n {
            for (j, col) in cols.iter_mut().enumerate() {
                let v = m[i * n + j];
                if v != 0.0 {
                    col.push((i, v));
                }
            }
        }
        let mut binv = vec![0.0; n * n];
        for i in 0..n {
            binv[i * n + i] = 1.0;
        }
        Self {
            n,
            b,
            cols,
            binv,
            x: b.to_vec(),
            basis: (0..n).map(Var::W).collect(),
        }
    }

    /// Column of the constraint matrix belonging to `v`, as sparse entries.
    fn column(&self, v: Var) -> Vec<(usize, f64)> {
        match v {
            Var::W(i) => vec![(i, 1.0)],
            Var::Z(j) => self.cols[j].iter().map(|&(i, a)| (i, -a)).collect(),
            Var::Artificial => (0..self.n).map(|i| (i, -1.0)).collect(),
        }
    }

    /// `B^-1 a` for the column of `v`.
    fn transformed(&self, v: Var) -> Vec<f64> {
        let n = self.n;
        let a = self.column(v);
        (0..n)
            .map(|r| {
                let row = &self.binv[r * n..(r + 1) * n];
                a.iter().map(|&(k, val)| row[k] * val).sum()
            })
            .collect()
    }

    fn pivot(&mut self, r: usize, d: &[f64], entering: Var) {
        let n = self.n;
        let p = d[r];
        let pivot_row: Vec<(usize, f64)> = self.binv[r * n..(r + 1) * n]
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(k, v)| (k, v / p))
            .collect();
        let xr = self.x[r] / p;
        {
            let row = &mut self.binv[r * n..(r + 1) * n];
            for &(k, v) in &pivot_row {
                row[k] = v;
            }
        }
        self.x[r] = xr;
        for i in 0..n {
            let di = d[i];
            if i == r || di == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * n..(i + 1) * n];
            for &(k, v) in &pivot_row {
                row[k] -= di * v;
            }
            self.x[i] -= di * xr;
        }
        self.basis[r] = entering;
    }

    /// Lexicographic minimum ratio test. `None` means a ray.
    fn leaving_row(&self, d: &[f64]) -> Option<usize> {
        let n = self.n;
        let dmax = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = PIVOT_TOL * dmax.max(1.0);
        let mut cands: Vec<usize> = (0..n).filter(|&i| d[i] > tol).collect();
        if cands.is_empty() {
            return None;
        }
        let ratio = |i: usize| self.x[i].max(0.0) / d[i];
        let best = cands
            .iter()
            .map(|&i| ratio(i))
            .fold(f64::INFINITY, f64::min);
        let slack = TIE_TOL * best.abs().max(1.0);
        cands.retain(|&i| ratio(i) <= best + slack);
        if let Some(&i) = cands.iter().find(|&&i| self.basis[i] == Var::Artificial) {
            return Some(i);
        }
        let mut k = 0;
        while cands.len() > 1 && k < n {
            let val = |i: usize| self.binv[i * n + k] / d[i];
            let lo = cands.iter().map(|&i| val(i)).fold(f64::INFINITY, f64::min);
            let scale = cands.iter().map(|&i| val(i).abs()).fold(1.0, f64::max);
            cands.retain(|&i| val(i) <= lo + TIE_TOL * scale);
            k += 1;
        }
        cands.first().copied()
    }

    fn refine(&mut self) {
        let n = self.n;
        for _ in 0..REFINE_STEPS {
            let mut res = self.b.to_vec();
            for r in 0..n {
                let xr = self.x[r];
                if xr == 0.0 {
                    continue;
                }
                for (i, a) in self.column(self.basis[r]) {
                    res[i] -= a * xr;
                }
            }
            if res.iter().all(|v| *v == 0.0) {
                return;
            }
            for r in 0..n {
                let row = &self.binv[r * n..(r + 1) * n];
                self.x[r] += row.iter().zip(&res).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }

    fn solution(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        for (r, v) in self.basis.iter().enumerate() {
            if let Var::Z(j) = *v {
                z[j] = self.x[r];
            }
        }
        z
    }
}

/// Solves the pure LCP `w = M z + b` of dimension `n`.
pub(crate) fn solve<F>(
    m: &[f64],
    b: &[f64],
    n: usize,
    max_pivots: usize,
    label: F,
) -> Result<Outcome, LcpError>
where
    F: Fn(usize) -> String,
{
    // Most negative offset; ties go to the largest index so that the initial
    // tableau rows are lexicographically positive.
    let mut start: Option<usize> = None;
    for i in 0..n {
        if b[i] < 0.0 && start.is_none_or(|s| b[i] <= b[s]) {
            start = Some(i);
        }
    }
    let Some(r0) = start else {
        return Ok(Outcome {
            z: vec![0.0; n],
            pivots: 0,
        });
    };

    let mut lemke = Lemke::new(m, b, n);
    let d = lemke.transformed(Var::Artificial);
    lemke.pivot(r0, &d, Var::Artificial);
    let mut entering = Var::Z(r0);
    let mut pivots = 1;

    loop {
        if pivots >= max_pivots {
            return Err(LcpError::PivotLimit(max_pivots));
        }
        let d = lemke.transformed(entering);
        let Some(r) = lemke.leaving_row(&d) else {
            let name = match entering {
                Var::Z(j) => format!("z[{}]", label(j)),
                Var::W(j) => format!("w[{}]", label(j)),
                Var::Artificial => "z0".to_string(),
            };
            return Err(LcpError::RayTermination {
                pivots,
                entering: name,
            });
        };
        let leaving = lemke.basis[r];
        lemke.pivot(r, &d, entering);
        pivots += 1;
        if leaving == Var::Artificial {
            break;
        }
        entering = leaving.complement();
    }

    lemke.refine();
    Ok(Outcome {
        z: lemke.solution(),
        pivots,
    })
}
