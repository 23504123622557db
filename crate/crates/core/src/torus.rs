//! Matrix-valued trigonometric polynomials on the torus and on annuli around it.
//!
//! A phase `x ∈ 𝕋` is identified with `e(x) = exp(2πix)` on the unit circle.
//! Points of the annulus are carried in polar form ([`CirclePoint`]) so that
//! translating along an orbit changes only the angle and leaves the radius
//! bit-for-bit unchanged.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::op_norm;

/// Tolerance used for the conjugate-symmetry check on coefficients.
pub const REALITY_TOL: f64 = 1e-12;

/// `e(t) = exp(2πit)`.
#[inline]
pub fn e(t: f64) -> Complex64 {
    let a = TAU * t.rem_euclid(1.0);
    Complex64::new(a.cos(), a.sin())
}

/// Fractional part of `n·ω` in `[0, 1)`.
#[inline]
pub fn orbit_shift(omega: f64, n: i64) -> f64 {
    (n as f64 * omega).rem_euclid(1.0)
}

/// A point `radius · e(turns)` of the complexified torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirclePoint {
    pub radius: f64,
    pub turns: f64,
}

impl CirclePoint {
    /// The real phase `x`, i.e. `e(x)` on the unit circle.
    pub fn phase(x: f64) -> Self {
        CirclePoint {
            radius: 1.0,
            turns: x.rem_euclid(1.0),
        }
    }

    pub fn new(radius: f64, turns: f64) -> Self {
        CirclePoint {
            radius,
            turns: turns.rem_euclid(1.0),
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        let (r, th) = z.to_polar();
        CirclePoint::new(r, th / TAU)
    }

    pub fn to_complex(self) -> Complex64 {
        e(self.turns) * self.radius
    }

    /// Rotation by `t` turns; the radius is copied, never recomputed.
    pub fn rotate(self, t: f64) -> Self {
        CirclePoint {
            radius: self.radius,
            turns: (self.turns + t).rem_euclid(1.0),
        }
    }

    pub fn is_real(self) -> bool {
        self.radius == 1.0
    }
}

/// The annulus `1 - r < |z| < 1 + r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annulus {
    pub r: f64,
}

impl Annulus {
    pub fn contains(&self, radius: f64) -> bool {
        radius > 1.0 - self.r && radius < 1.0 + self.r
    }

    pub fn check(&self, radius: f64) -> Result<()> {
        if self.contains(radius) {
            Ok(())
        } else {
            Err(LabError::domain(format!(
                "|z| = {radius} lies outside the annulus 1 ± {}",
                self.r
            )))
        }
    }
}

/// `Σ_{|k| ≤ d} coeff(k) z^k` with `l × l` complex coefficients and
/// `coeff(-k) = conj(coeff(k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigMatrixPoly {
    dim: usize,
    degree: usize,
    /// `coeffs[k + degree]` holds mode `k`.
    coeffs: Vec<DMatrix<Complex64>>,
}

impl TrigMatrixPoly {
    /// Builds a polynomial from `(k, row, col, re, im)` entries (0-based row/col).
    /// Unlisted entries are zero; repeated entries accumulate.
    pub fn from_entries(dim: usize, entries: &[(i64, usize, usize, f64, f64)]) -> Result<Self> {
        if dim == 0 {
            return Err(LabError::domain("block dimension must be positive"));
        }
        let degree = entries.iter().map(|e| e.0.unsigned_abs() as usize).max().unwrap_or(0);
        let mut coeffs = vec![DMatrix::zeros(dim, dim); 2 * degree + 1];
        let mut errors = Vec::new();
        for &(k, row, col, re, im) in entries {
            if row >= dim || col >= dim {
                errors.push(format!("entry (k={k}, row={row}, col={col}) outside a {dim}×{dim} block"));
                continue;
            }
            if !re.is_finite() || !im.is_finite() {
                errors.push(format!("entry (k={k}, row={row}, col={col}) is not finite"));
                continue;
            }
            coeffs[(k + degree as i64) as usize][(row, col)] += Complex64::new(re, im);
        }
        if !errors.is_empty() {
            return Err(LabError::Invalid(errors));
        }
        let p = TrigMatrixPoly { dim, degree, coeffs };
        p.check_reality()?;
        Ok(p)
    }

    /// Wraps coefficient matrices for modes `-d..=d`.
    pub fn from_coeffs(coeffs: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(LabError::domain("coefficient list must have odd length 2d + 1"));
        }
        let dim = coeffs[0].nrows();
        if dim == 0 || coeffs.iter().any(|c| c.nrows() != dim || c.ncols() != dim) {
            return Err(LabError::domain("coefficients must be square blocks of one size"));
        }
        let p = TrigMatrixPoly {
            dim,
            degree: coeffs.len() / 2,
            coeffs,
        };
        p.check_reality()?;
        Ok(p)
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        assert!(m.is_square());
        TrigMatrixPoly {
            dim: m.nrows(),
            degree: 0,
            coeffs: vec![m.map(|v| Complex64::new(v, 0.0))],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(&DMatrix::identity(dim, dim))
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(&DMatrix::zeros(dim, dim))
    }

    /// Scalar `amp · 2cos(2π(x + shift))`.
    pub fn cos(amp: f64, shift: f64) -> Self {
        Self::diag_cos(&[(amp, shift)])
    }

    /// `diag(amp_j · 2cos(2π(x + shift_j)))`.
    pub fn diag_cos(modes: &[(f64, f64)]) -> Self {
        let dim = modes.len();
        let mut coeffs = vec![DMatrix::zeros(dim, dim); 3];
        for (j, &(amp, shift)) in modes.iter().enumerate() {
            let c = e(shift) * amp;
            coeffs[2][(j, j)] = c;
            coeffs[0][(j, j)] = c.conj();
        }
        TrigMatrixPoly {
            dim,
            degree: 1,
            coeffs,
        }
    }

    /// Entrywise sum; degrees are padded to the larger one.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let degree = self.degree.max(other.degree);
        let coeffs = (-(degree as i64)..=degree as i64)
            .map(|k| self.coeff(k) + other.coeff(k))
            .collect();
        TrigMatrixPoly {
            dim: self.dim,
            degree,
            coeffs,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        TrigMatrixPoly {
            dim: self.dim,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * Complex64::new(s, 0.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficient of mode `k` (zero outside `[-d, d]`).
    pub fn coeff(&self, k: i64) -> DMatrix<Complex64> {
        if k.unsigned_abs() as usize > self.degree {
            DMatrix::zeros(self.dim, self.dim)
        } else {
            self.coeffs[(k + self.degree as i64) as usize].clone()
        }
    }

    /// `(k, row, col, re, im)` entries of all nonzero coefficients.
    pub fn entries(&self) -> Vec<(i64, usize, usize, f64, f64)> {
        let mut out = Vec::new();
        for (idx, c) in self.coeffs.iter().enumerate() {
            let k = idx as i64 - self.degree as i64;
            for col in 0..self.dim {
                for row in 0..self.dim {
                    let v = c[(row, col)];
                    if v.re != 0.0 || v.im != 0.0 {
                        out.push((k, row, col, v.re, v.im));
                    }
                }
            }
        }
        out.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
        out
    }

    fn check_reality(&self) -> Result<()> {
        let scale = 1.0 + self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut errors = Vec::new();
        for k in 0..=self.degree as i64 {
            let diff = (self.coeff(-k) - self.coeff(k).conjugate()).norm();
            if diff > REALITY_TOL * scale {
                errors.push(format!(
                    "coefficients of modes {k} and {} are not complex conjugates (mismatch {diff:.3e})",
                    -k
                ));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(LabError::Invalid(errors))
        }
    }

    /// Evaluates at a polar point without any domain check.
    pub fn eval_at(&self, p: CirclePoint) -> DMatrix<Complex64> {
        let mut acc = self.coeffs[self.degree].clone();
        for k in 1..=self.degree {
            let kf = k as f64;
            let up = e(kf * p.turns) * p.radius.powi(k as i32);
            let down = e(-kf * p.turns) * p.radius.powi(-(k as i32));
            acc += &self.coeffs[self.degree + k] * up;
            acc += &self.coeffs[self.degree - k] * down;
        }
        acc
    }

    /// Evaluates at `z`, which must lie in the annulus of half-width `r`.
    pub fn eval(&self, z: Complex64, r: f64) -> Result<DMatrix<Complex64>> {
        let p = CirclePoint::from_complex(z);
        Annulus { r }.check(p.radius)?;
        Ok(self.eval_at(p))
    }

    /// Real value at the phase `x` (imaginary residue discarded).
    pub fn eval_phase(&self, x: f64) -> DMatrix<f64> {
        self.eval_at(CirclePoint::phase(x)).map(|v| v.re)
    }

    /// `M_n(x) = M(x + nω)`: mode `k` picks up the factor `e(k n ω)`.
    pub fn translate(&self, omega: f64, n: i64) -> Self {
        let shift = orbit_shift(omega, n);
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let k = idx as f64 - self.degree as f64;
                c * e(k * shift)
            })
            .collect();
        TrigMatrixPoly {
            dim: self.dim,
            degree: self.degree,
            coeffs,
        }
    }

    /// Drops every mode with `|k| > new_degree`.
    pub fn fourier_truncate(&self, new_degree: usize) -> Self {
        if new_degree >= self.degree {
            return self.clone();
        }
        let lo = self.degree - new_degree;
        TrigMatrixPoly {
            dim: self.dim,
            degree: new_degree,
            coeffs: self.coeffs[lo..=self.degree + new_degree].to_vec(),
        }
    }

    /// `Σ_{|k| > d'} ‖coeff(k)‖` on the unit circle, an upper bound for the truncation error.
    pub fn tail_bound(&self, new_degree: usize) -> f64 {
        (-(self.degree as i64)..=self.degree as i64)
            .filter(|k| k.unsigned_abs() as usize > new_degree)
            .map(|k| op_norm(&self.coeff(k)))
            .sum()
    }

    /// Maximal operator norm over `grid_size` equispaced points of `|z| = s`.
    pub fn sup_norm(&self, s: f64, grid_size: usize) -> f64 {
        (0..grid_size)
            .map(|j| op_norm(&self.eval_at(CirclePoint::new(s, j as f64 / grid_size as f64))))
            .fold(0.0, f64::max)
    }

    /// Largest entrywise asymmetry `|M - Mᵀ|` over real phases of the grid.
    pub fn symmetry_defect(&self, grid_size: usize) -> f64 {
        (0..grid_size)
            .map(|j| {
                let m = self.eval_phase(j as f64 / grid_size as f64);
                (&m - m.transpose()).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Sampled test of the "no constant eigenvalues" condition.
    ///
    /// A value `w` is flagged when it is an eigenvalue, to relative tolerance
    /// `tol`, at every probe phase, i.e. when `det[F(x) - w]` vanishes on the
    /// whole grid. Candidates are the eigenvalues at the first probe.
    pub fn no_constant_eigenvalue_check(&self, probe_grid: usize, tol: f64) -> ConstantEigenCheck {
        let probes: Vec<Vec<f64>> = (0..probe_grid.max(2))
            .map(|j| {
                let m = self.eval_phase((j as f64 + 0.5) / probe_grid.max(2) as f64);
                let m = (&m + m.transpose()) * 0.5;
                SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
            })
            .collect();
        let mut min_spread = f64::INFINITY;
        for &w in &probes[0] {
            let spread = probes
                .iter()
                .map(|eigs| eigs.iter().map(|v| (v - w).abs()).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max);
            let rel = spread / (1.0 + w.abs());
            min_spread = min_spread.min(rel);
            if rel <= tol {
                return ConstantEigenCheck {
                    passed: false,
                    witness: Some(w),
                    min_relative_spread: rel,
                };
            }
        }
        ConstantEigenCheck {
            passed: true,
            witness: None,
            min_relative_spread: min_spread,
        }
    }
}

/// Outcome of [`TrigMatrixPoly::no_constant_eigenvalue_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantEigenCheck {
    pub passed: bool,
    pub witness: Option<f64>,
    pub min_relative_spread: f64,
}
