//! Band storage and LU factorization with partial pivoting.
//!
//! The method-of-lines Jacobian couples each node to its neighbours along
//! both axes plus one jump-shifted node, so with the fast index running along
//! the intensity axis every entry lies within `n_lambda` of the diagonal.

use std::ops::{Add, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait Scalar:
    Copy
    + Default
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + SubAssign
{
    fn from_real(x: f64) -> Self;
    /// Cheap magnitude used for pivot selection (|re| + |im|).
    fn magnitude(self) -> f64;
}

impl Scalar for f64 {
    fn from_real(x: f64) -> Self {
        x
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.re.abs() + self.im.abs()
    }
}

/// Square matrix with `kl` sub-diagonals and `ku` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![T::default(); n * (kl + ku + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            T::default()
        }
    }

    /// Adds `v` to entry `(i, j)`. Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let w = self.width();
        let k = i * w + j + self.kl - i;
        self.data[k] = self.data[k] + v;
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = T::default());
    }

    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut s = T::default();
            for (j, xj) in x.iter().enumerate().take(hi + 1).skip(lo) {
                s = s + self.get(i, j) * *xj;
            }
            *yi = s;
        }
    }
}

/// LU factors of `shift * I - A` for a real band matrix `A`.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    /// Row `i` stores columns `i - kl ..= i + kl + ku`; the extra `kl`
    /// super-diagonals receive fill-in from row interchanges.
    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width() + j + self.kl - i
    }

    pub fn factor_shifted(a: &BandMatrix<f64>, shift: T) -> Result<Self> {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let mut lu = BandLu {
            n,
            kl,
            ku,
            data: vec![T::default(); n * (2 * kl + ku + 1)],
            piv: vec![0; n],
        };
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            for j in lo..=hi {
                let k = lu.idx(i, j);
                let mut v = -T::from_real(a.get(i, j));
                if i == j {
                    v = v + shift;
                }
                lu.data[k] = v;
            }
        }
        lu.factorize()?;
        Ok(lu)
    }

    fn factorize(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let w = self.width();
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + kl + ku).min(n - 1);
            let mut p = i;
            let mut best = self.data[self.idx(i, i)].magnitude();
            for r in i + 1..=last_row {
                let m = self.data[self.idx(r, i)].magnitude();
                if m > best {
                    best = m;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Numerical(format!(
                    "singular or non-finite iteration matrix at row {i}"
                )));
            }
            self.piv[i] = p;
            if p != i {
                for j in i..=last_col {
                    let (a, b) = (self.idx(i, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(i, i)];
            let len = last_col - i;
            for r in i + 1..=last_row {
                let kr = self.idx(r, i);
                let l = self.data[kr] / pivot;
                self.data[kr] = l;
                if l == T::default() || len == 0 {
                    continue;
                }
                let start_i = self.idx(i, i + 1);
                let start_r = self.idx(r, i + 1);
                let (head, tail) = self.data.split_at_mut(r * w);
                let row_i = &head[start_i..start_i + len];
                let row_r = &mut tail[start_r - r * w..start_r - r * w + len];
                for (x, &y) in row_r.iter_mut().zip(row_i) {
                    *x -= l * y;
                }
            }
        }
        Ok(())
    }

    /// Overwrites `b` with the solution of the factored system.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                b.swap(i, p);
            }
            let bi = b[i];
            if bi == T::default() {
                continue;
            }
            for r in i + 1..=(i + kl).min(n - 1) {
                let l = self.data[self.idx(r, i)];
                b[r] -= l * bi;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            let last_col = (i + kl + ku).min(n - 1);
            let start = self.idx(i, i);
            let row = &self.data[start..start + (last_col - i) + 1];
            for (u, bj) in row[1..].iter().zip(&b[i + 1..=last_col]) {
                s -= *u * *bj;
            }
            b[i] = s / row[0];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for i in 0..n {
            let p = (i..n)
                .max_by(|&r, &s| m[r][i].abs().partial_cmp(&m[s][i].abs()).unwrap())
                .unwrap();
            m.swap(i, p);
            x.swap(i, p);
            for r in i + 1..n {
                let l = m[r][i] / m[i][i];
                for c in i..n {
                    m[r][c] -= l * m[i][c];
                }
                x[r] -= l * x[i];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for c in i + 1..n {
                s -= m[i][c] * x[c];
            }
            x[i] = s / m[i][i];
        }
        x
    }

    fn sample_band(n: usize, kl: usize, ku: usize) -> BandMatrix<f64> {
        let mut a = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // weak diagonal so that pivoting actually happens
                let v = ((i * 7 + j * 13) % 11) as f64 - 5.0 + if i == j { 0.3 } else { 0.0 };
                a.add(i, j, v);
            }
        }
        a
    }

    #[test]
    fn real_solve_matches_dense_elimination() {
        for &(n, kl, ku) in &[(9, 2, 3), (20, 4, 4), (15, 1, 6), (5, 0, 0)] {
            let a = sample_band(n, kl, ku);
            let shift = 0.7;
            let dense: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| if i == j { shift } else { 0.0 } - a.get(i, j))
                        .collect()
                })
                .collect();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 1.0).collect();
            let expected = dense_solve(&dense, &b);
            let lu = BandLu::factor_shifted(&a, shift).unwrap();
            let mut x = b.clone();
            lu.solve_in_place(&mut x);
            for (u, v) in x.iter().zip(&expected) {
                assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn complex_solve_satisfies_system() {
        let (n, kl, ku) = (12, 3, 2);
        let a = sample_band(n, kl, ku);
        let shift = Complex64::new(0.4, 1.3);
        let lu = BandLu::factor_shifted(&a, shift).unwrap();
        let b: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(i as f64, 1.0 - i as f64 * 0.5))
            .collect();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        for i in 0..n {
            let mut s = shift * x[i];
            for j in 0..n {
                s -= Complex64::from_real(a.get(i, j)) * x[j];
            }
            assert!((s - b[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = BandMatrix::<f64>::zeros(4, 1, 1);
        assert!(BandLu::factor_shifted(&a, 0.0).is_err());
    }
}
