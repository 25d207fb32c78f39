//! Small dense containers indexed by (node, period) and (trader, node, period).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array2<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Array2<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> Array2<T> {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        *self.get_mut(i, j) = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Iterates `((i, j), value)` in row-major order.
    pub fn indexed(&self) -> impl Iterator<Item = ((usize, usize), &T)> {
        let cols = self.cols;
        self.data
            .iter()
            .enumerate()
            .map(move |(k, v)| ((k / cols, k % cols), v))
    }
}

impl Array2<f64> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        *self.get(i, j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array3<T = f64> {
    dims: (usize, usize, usize),
    data: Vec<T>,
}

impl<T: Clone> Array3<T> {
    pub fn filled(a: usize, b: usize, c: usize, value: T) -> Self {
        Self {
            dims: (a, b, c),
            data: vec![value; a * b * c],
        }
    }
}

impl<T> Array3<T> {
    pub fn shape(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        let (a, b, c) = self.dims;
        debug_assert!(i < a && j < b && k < c);
        (i * b + j) * c + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> &T {
        &self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize, k: usize) -> &mut T {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: T) {
        *self.get_mut(i, j, k) = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn indexed(&self) -> impl Iterator<Item = ((usize, usize, usize), &T)> {
        let (_, b, c) = self.dims;
        self.data
            .iter()
            .enumerate()
            .map(move |(o, v)| ((o / (b * c), (o / c) % b, o % c), v))
    }
}

impl Array3<f64> {
    pub fn zeros(a: usize, b: usize, c: usize) -> Self {
        Self::filled(a, b, c, 0.0)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        *self.get(i, j, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexed_matches_get() {
        let mut a = Array3::zeros(2, 3, 4);
        let mut v = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    a.set(i, j, k, v);
                    v += 1.0;
                }
            }
        }
        for ((i, j, k), x) in a.indexed() {
            assert_eq!(*x, a.at(i, j, k));
        }
        let b = Array2::filled(2, 3, 7u8);
        assert_eq!(b.indexed().filter(|(_, v)| **v == 7).count(), 6);
        assert_eq!(b.indexed().last().unwrap().0, (1, 2));
    }
}
