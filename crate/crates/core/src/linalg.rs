//! Dense and banded kernels shared by the verification modules.
//!
//! Determinants are returned in log-magnitude form ([`LogDet`]) so that
//! products over thousands of pivots neither overflow nor underflow. The
//! generic [`det_exact`] works over any [`Field`], which lets the minor
//! oracles run in exact rational arithmetic.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{ComplexField, DMatrix, DVector};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Raw determinants below this magnitude are treated as exact zeros.
pub const DET_SENTINEL: f64 = 1e-300;

/// Field operations needed by Gaussian elimination.
pub trait Field:
    Clone
    + PartialEq
    + Debug
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    /// Pivot weight; only the ordering matters.
    fn magnitude(&self) -> f64;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl Field for BigRational {
    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }
    fn one() -> Self {
        <BigRational as num_traits::One>::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn magnitude(&self) -> f64 {
        // Exact arithmetic only needs a nonzero pivot; prefer small ones to
        // keep the intermediate fractions short.
        if Zero::is_zero(self) {
            0.0
        } else {
            1.0 / (1.0 + self.abs().to_f64().unwrap_or(f64::MAX))
        }
    }
}

/// Converts an integer matrix into exact rationals.
pub fn to_rational(m: &DMatrix<i64>) -> DMatrix<BigRational> {
    m.map(|v| BigRational::from_integer(BigInt::from(v)))
}

/// Determinant by Gaussian elimination with pivoting on [`Field::magnitude`].
///
/// The empty matrix has determinant one.
pub fn det_exact<T: Field>(m: &DMatrix<T>) -> T {
    assert!(m.is_square(), "determinant of a non-square matrix");
    let n = m.nrows();
    let mut a = m.clone();
    let mut det = T::one();
    for col in 0..n {
        let mut piv = col;
        let mut best = a[(col, col)].magnitude();
        for row in col + 1..n {
            let w = a[(row, col)].magnitude();
            if w > best {
                best = w;
                piv = row;
            }
        }
        if a[(piv, col)].is_zero() {
            return T::zero();
        }
        if piv != col {
            a.swap_rows(piv, col);
            det = -det;
        }
        let p = a[(col, col)].clone();
        det = det * p.clone();
        for row in col + 1..n {
            if a[(row, col)].is_zero() {
                continue;
            }
            let f = a[(row, col)].clone() / p.clone();
            for c in col + 1..n {
                let v = a[(row, c)].clone() - f.clone() * a[(col, c)].clone();
                a[(row, c)] = v;
            }
        }
    }
    det
}

/// Determinant stored as `phase · exp(log_abs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub log_abs: f64,
    pub phase: Complex64,
}

impl LogDet {
    pub const ONE: LogDet = LogDet {
        log_abs: 0.0,
        phase: Complex64 { re: 1.0, im: 0.0 },
    };

    pub fn zero() -> Self {
        LogDet {
            log_abs: f64::NEG_INFINITY,
            phase: Complex64::new(0.0, 0.0),
        }
    }

    /// True when the raw magnitude is below [`DET_SENTINEL`].
    pub fn is_sentinel(&self) -> bool {
        !(self.log_abs >= DET_SENTINEL.ln())
    }

    pub fn value(&self) -> Complex64 {
        if self.log_abs == f64::NEG_INFINITY {
            Complex64::new(0.0, 0.0)
        } else {
            self.phase * self.log_abs.exp()
        }
    }
}

fn to_c64<T: ComplexField<RealField = f64>>(v: &T) -> Complex64 {
    Complex64::new(v.clone().real(), v.clone().imaginary())
}

/// Log-determinant of a dense square matrix via partially pivoted LU.
pub fn log_det<T: ComplexField<RealField = f64> + Copy>(m: &DMatrix<T>) -> LogDet {
    assert!(m.is_square(), "determinant of a non-square matrix");
    let n = m.nrows();
    if n == 0 {
        return LogDet::ONE;
    }
    BandLu::factor_dense(m).log_det()
}

/// Largest singular value.
pub fn op_norm<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Smallest singular value.
pub fn min_singular<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().min()
}

/// Coefficients `c` with `det(t·I - A) = Σ c[k] t^k`, via Faddeev–LeVerrier.
pub fn char_poly(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
    coeffs[n] = Complex64::new(1.0, 0.0);
    let id = DMatrix::<Complex64>::identity(n, n);
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + &id * coeffs[n - k + 1];
        let am = a * &m;
        coeffs[n - k] = -am.trace() / (k as f64);
    }
    coeffs
}

/// Evaluates a polynomial with ascending coefficients.
pub fn poly_eval(coeffs: &[Complex64], t: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc * t + c)
}

/// LU factorisation with partial pivoting for banded matrices.
///
/// Row `r` is stored as a window over columns `[r - kl, r + kl + ku]`, which
/// holds every entry the row can acquire through interchanges.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
    piv: Vec<usize>,
    swaps: usize,
    singular: bool,
}

impl<T: ComplexField<RealField = f64> + Copy> BandLu<T> {
    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * self.width + (c + self.kl - r)
    }

    fn empty(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandLu {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
            piv: Vec::with_capacity(n),
            swaps: 0,
            singular: false,
        }
    }

    /// Factors a matrix given by a closure over the band `|r - c| <= kl` (`c <= r + ku`).
    pub fn factor_with(n: usize, kl: usize, ku: usize, entry: impl Fn(usize, usize) -> T) -> Self {
        let mut lu = Self::empty(n, kl, ku);
        for r in 0..n {
            let lo = r.saturating_sub(kl);
            let hi = (r + ku).min(n.saturating_sub(1));
            for c in lo..=hi {
                let i = lu.at(r, c);
                lu.data[i] = entry(r, c);
            }
        }
        lu.factor_in_place();
        lu
    }

    /// Dense factorisation (bandwidth n - 1).
    pub fn factor_dense(m: &DMatrix<T>) -> Self {
        let n = m.nrows();
        let bw = n.saturating_sub(1);
        Self::factor_with(n, bw, bw, |r, c| m[(r, c)])
    }

    /// Factors a dense matrix whose nonzeros lie in the stated band.
    pub fn factor_banded(m: &DMatrix<T>, kl: usize, ku: usize) -> Self {
        Self::factor_with(m.nrows(), kl, ku, |r, c| m[(r, c)])
    }

    fn factor_in_place(&mut self) {
        let n = self.n;
        for i in 0..n {
            let last_row = (i + self.kl).min(n - 1);
            let last_col = (i + self.kl + self.ku).min(n - 1);
            let mut p = i;
            let mut best = self.data[self.at(i, i)].modulus();
            for r in i + 1..=last_row {
                let w = self.data[self.at(r, i)].modulus();
                if w > best {
                    best = w;
                    p = r;
                }
            }
            self.piv.push(p);
            if best == 0.0 {
                self.singular = true;
                continue;
            }
            if p != i {
                self.swaps += 1;
                for c in i..=last_col {
                    let (a, b) = (self.at(i, c), self.at(p, c));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.at(i, i)];
            for r in i + 1..=last_row {
                let ri = self.at(r, i);
                if self.data[ri] == T::zero() {
                    continue;
                }
                let f = self.data[ri] / pivot;
                self.data[ri] = f;
                for c in i + 1..=last_col {
                    let (rc, ic) = (self.at(r, c), self.at(i, c));
                    let v = self.data[ic];
                    self.data[rc] -= f * v;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// True when some pivot column was exactly zero.
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn log_det(&self) -> LogDet {
        if self.singular {
            return LogDet::zero();
        }
        let mut log_abs = 0.0;
        let mut phase = if self.swaps % 2 == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(-1.0, 0.0)
        };
        for i in 0..self.n {
            let d = to_c64(&self.data[self.at(i, i)]);
            let m = d.norm();
            log_abs += m.ln();
            phase *= d / m;
        }
        LogDet { log_abs, phase }
    }

    /// Smallest pivot modulus relative to the largest; a cheap conditioning signal.
    pub fn pivot_ratio(&self) -> f64 {
        if self.singular || self.n == 0 {
            return if self.n == 0 { 1.0 } else { 0.0 };
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..self.n {
            let m = self.data[self.at(i, i)].modulus();
            lo = lo.min(m);
            hi = hi.max(m);
        }
        lo / hi
    }

    /// Solves `A x = b` in place. Panics if the factorisation is singular.
    pub fn solve_in_place(&self, b: &mut [T]) {
        assert!(!self.singular, "solve with a singular factorisation");
        assert_eq!(b.len(), self.n);
        let n = self.n;
        for i in 0..n {
            let p = self.piv[i];
            if p != i {
                b.swap(i, p);
            }
            let bi = b[i];
            for r in i + 1..=(i + self.kl).min(n - 1) {
                let f = self.data[self.at(r, i)];
                b[r] -= f * bi;
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for c in i + 1..=(i + self.kl + self.ku).min(n - 1) {
                acc -= self.data[self.at(i, c)] * b[c];
            }
            b[i] = acc / self.data[self.at(i, i)];
        }
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            let mut buf: Vec<T> = col.iter().copied().collect();
            self.solve_in_place(&mut buf);
            for (dst, v) in col.iter_mut().zip(buf) {
                *dst = v;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, n, |r, c| {
            if r <= c + kl && c <= r + ku {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        })
    }

    #[test]
    fn empty_determinant_is_one() {
        let m = DMatrix::<f64>::zeros(0, 0);
        assert_eq!(det_exact(&m), 1.0);
        assert_eq!(log_det(&m), LogDet::ONE);
    }

    #[test]
    fn band_lu_matches_dense_determinant() {
        for seed in 0..20 {
            let m = random_band(12, 3, 3, seed);
            let lu = BandLu::factor_banded(&m, 3, 3);
            let got = lu.log_det().value().re;
            let want = m.clone().determinant();
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-12), "{got} vs {want}");
        }
    }

    #[test]
    fn band_lu_solves() {
        let m = random_band(20, 2, 2, 7);
        let b = DVector::from_fn(20, |i, _| (i as f64).sin());
        let x = BandLu::factor_banded(&m, 2, 2).solve(&b);
        assert!((&m * x - b).norm() < 1e-10);
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 2.0]);
        let lu = BandLu::factor_banded(&m, 1, 1);
        assert!((lu.log_det().value().re - m.clone().determinant()).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_is_sentinel() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(log_det(&m).is_sentinel());
    }

    #[test]
    fn exact_rational_determinant() {
        let m = DMatrix::from_row_slice(3, 3, &[2i64, -1, 0, -1, 2, -1, 0, -1, 2]);
        let d = det_exact(&to_rational(&m));
        assert_eq!(d, BigRational::from_integer(BigInt::from(4)));
    }

    #[test]
    fn char_poly_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(-3.0, 0.0),
        ]));
        let c = char_poly(&a);
        // (t - 2)(t + 3) = t^2 + t - 6
        assert!((c[0] - Complex64::new(-6.0, 0.0)).norm() < 1e-12);
        assert!((c[1] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((c[2] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(poly_eval(&c, Complex64::new(2.0, 0.0)).norm() < 1e-12);
    }
}
