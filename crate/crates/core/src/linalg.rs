//! Dense complex matrices stored as split real/imaginary `faer` matrices.
//!
//! Everything built from the chain Hamiltonian is real, so the imaginary part
//! is optional and every product dispatches to the fewest real GEMMs needed.
//! All products run with `Par::Seq`: the output must not depend on the
//! number of worker threads.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct ComplexMatrix {
    re: Mat<f64>,
    im: Option<Mat<f64>>,
}

fn gemm(dst: &mut Mat<f64>, accum: Accum, lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>, alpha: f64) {
    matmul(dst.as_mut(), accum, lhs, rhs, alpha, Par::Seq);
}

impl ComplexMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            re: Mat::zeros(nrows, ncols),
            im: None,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            re: Mat::identity(dim, dim),
            im: None,
        }
    }

    pub fn from_real(re: Mat<f64>) -> Self {
        Self { re, im: None }
    }

    /// Builds from parts; an imaginary part that is identically zero is dropped.
    pub fn from_parts(re: Mat<f64>, im: Option<Mat<f64>>) -> Self {
        let im = im.filter(|m| m.col_iter().any(|c| c.iter().any(|&x| x != 0.0)));
        Self { re, im }
    }

    pub fn from_fn(nrows: usize, ncols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut re = Mat::zeros(nrows, ncols);
        let mut im = Mat::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                let z = f(i, j);
                re[(i, j)] = z.re;
                im[(i, j)] = z.im;
            }
        }
        Self::from_parts(re, Some(im))
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    pub fn re(&self) -> MatRef<'_, f64> {
        self.re.as_ref()
    }

    pub fn im(&self) -> Option<MatRef<'_, f64>> {
        self.im.as_ref().map(|m| m.as_ref())
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[(i, j)], self.im.as_ref().map_or(0.0, |m| m[(i, j)]))
    }

    pub(crate) fn re_mut(&mut self) -> &mut Mat<f64> {
        &mut self.re
    }

    pub(crate) fn im_mut(&mut self) -> &mut Mat<f64> {
        let (n, m) = (self.re.nrows(), self.re.ncols());
        self.im.get_or_insert_with(|| Mat::zeros(n, m))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            re: self.re.transpose().to_owned(),
            im: self.im.as_ref().map(|m| {
                let mut t = m.transpose().to_owned();
                t.col_iter_mut().for_each(|c| c.iter_mut().for_each(|x| *x = -*x));
                t
            }),
        }
    }

    /// `self · rhs`
    pub fn matmul(&self, rhs: &Self) -> Self {
        let (n, m) = (self.nrows(), rhs.ncols());
        let mut re = Mat::zeros(n, m);
        gemm(&mut re, Accum::Replace, self.re(), rhs.re(), 1.0);
        let im = match (self.im(), rhs.im()) {
            (None, None) => None,
            (ai, bi) => {
                let mut im = Mat::zeros(n, m);
                if let Some(bi) = bi {
                    gemm(&mut im, Accum::Add, self.re(), bi, 1.0);
                }
                if let Some(ai) = ai {
                    gemm(&mut im, Accum::Add, ai, rhs.re(), 1.0);
                }
                if let (Some(ai), Some(bi)) = (ai, bi) {
                    gemm(&mut re, Accum::Add, ai, bi, -1.0);
                }
                Some(im)
            }
        };
        Self::from_parts(re, im)
    }

    /// `self^† · rhs` without materializing the adjoint.
    pub fn adjoint_matmul(&self, rhs: &Self) -> Self {
        let (n, m) = (self.ncols(), rhs.ncols());
        let at = self.re().transpose();
        let mut re = Mat::zeros(n, m);
        gemm(&mut re, Accum::Replace, at, rhs.re(), 1.0);
        let im = match (self.im(), rhs.im()) {
            (None, None) => None,
            (ai, bi) => {
                let mut im = Mat::zeros(n, m);
                if let Some(bi) = bi {
                    gemm(&mut im, Accum::Add, at, bi, 1.0);
                }
                if let Some(ai) = ai {
                    gemm(&mut im, Accum::Add, ai.transpose(), rhs.re(), -1.0);
                }
                if let (Some(ai), Some(bi)) = (ai, bi) {
                    gemm(&mut re, Accum::Add, ai.transpose(), bi, 1.0);
                }
                Some(im)
            }
        };
        Self::from_parts(re, im)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let re = &self.re - &rhs.re;
        let im = match (&self.im, &rhs.im) {
            (None, None) => None,
            (Some(a), None) => Some(a.clone()),
            (None, Some(b)) => Some(-b),
            (Some(a), Some(b)) => Some(a - b),
        };
        Self::from_parts(re, im)
    }

    /// `[self, rhs] = self·rhs − rhs·self`
    pub fn commutator(&self, rhs: &Self) -> Self {
        self.matmul(rhs).sub(&rhs.matmul(self))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.nrows().min(self.ncols()))
            .map(|i| self.get(i, i))
            .sum()
    }

    /// Real parts of the diagonal.
    pub fn diag_re(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols()))
            .map(|i| self.re[(i, i)])
            .collect()
    }

    /// Entrywise `|M_ij|^2`.
    pub fn abs_sq(&self) -> Mat<f64> {
        let mut out = Mat::zeros(self.nrows(), self.ncols());
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                out[(i, j)] = self.get(i, j).norm_sqr();
            }
        }
        out
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.ncols() {
            for i in 0..self.nrows() {
                m = m.max(self.get(i, j).norm());
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        let im = self.im.as_ref().map_or(0.0, |m| m.norm_l2().powi(2));
        (self.re.norm_l2().powi(2) + im).sqrt()
    }

    /// `max_ij |M_ij − conj(M_ji)|`
    pub fn hermitian_defect(&self) -> f64 {
        if self.nrows() != self.ncols() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for j in 0..self.ncols() {
            for i in 0..=j {
                let d = self.get(i, j) - self.get(j, i).conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Largest entrywise modulus of `self − rhs`.
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        self.sub(rhs).max_abs()
    }

    pub fn to_row_major(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.nrows() * self.ncols());
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                out.push(self.get(i, j));
            }
        }
        out
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub(crate) fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::default();
    xs.into_iter().for_each(|x| acc.add(x));
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_mul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
            (0..a.ncols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
        })
    }

    fn sample(n: usize, seed: u64, complex: bool) -> ComplexMatrix {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let vals: Vec<Complex64> = (0..n * n)
            .map(|_| Complex64::new(next(), if complex { next() } else { 0.0 }))
            .collect();
        ComplexMatrix::from_fn(n, n, |i, j| vals[i * n + j])
    }

    #[test]
    fn products_match_naive_for_all_real_complex_mixes() {
        for (ca, cb) in [(false, false), (true, false), (false, true), (true, true)] {
            let a = sample(5, 1, ca);
            let b = sample(5, 2, cb);
            assert!(a.matmul(&b).max_abs_diff(&naive_mul(&a, &b)) < 1e-13);
            assert!(a.adjoint_matmul(&b).max_abs_diff(&naive_mul(&a.adjoint(), &b)) < 1e-13);
        }
    }

    #[test]
    fn zero_imaginary_part_is_dropped() {
        let m = ComplexMatrix::from_fn(3, 3, |i, j| Complex64::new((i + j) as f64, 0.0));
        assert!(m.is_real());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = std::iter::once(1.0).chain(std::iter::repeat_n(1e-16, 10_000));
        assert!((compensated_sum(xs) - (1.0 + 1e-12)).abs() < 1e-15);
    }
}
