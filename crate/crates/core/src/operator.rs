//! The block Jacobi operator, its Dirichlet restrictions, and scalar/block index maps.
//!
//! `[Hψ]_n = -(W_{n+1} ψ_{n+1} + W_nᵀ ψ_{n-1}) + V_n ψ_n` with `V = λF + R` and
//! `M_n(x) = M(x + nω)`. On an interval `[a, b]` the restriction is the
//! block-tridiagonal matrix with diagonal blocks `V_n - E` (`V = λF + R`),
//! super-diagonal blocks `-W_{n+1}` and sub-diagonal blocks `-W_{n+1}ᵀ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::BandLu;
use crate::torus::{orbit_shift, CirclePoint, TrigMatrixPoly};

/// `(√5 - 1) / 2`.
pub fn golden_mean() -> f64 {
    0.5 * (5f64.sqrt() - 1.0)
}

/// Probe grid used for the symmetry invariants of `R` and `F`.
const SYMMETRY_GRID: usize = 64;
const SYMMETRY_TOL: f64 = 1e-10;

/// The full model: band width, coupling, frequency, analyticity radius and symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    l: usize,
    lambda: f64,
    omega: f64,
    annulus_r: f64,
    w: TrigMatrixPoly,
    r: TrigMatrixPoly,
    f: TrigMatrixPoly,
}

impl OperatorSpec {
    /// Validates and assembles a spec; every violated invariant is reported.
    pub fn new(
        lambda: f64,
        omega: f64,
        annulus_r: f64,
        w: TrigMatrixPoly,
        r: TrigMatrixPoly,
        f: TrigMatrixPoly,
    ) -> Result<Self> {
        let l = w.dim();
        let mut errors = Vec::new();
        if r.dim() != l || f.dim() != l {
            errors.push(format!(
                "block dimensions disagree: W is {l}×{l}, R is {0}×{0}, F is {1}×{1}",
                r.dim(),
                f.dim()
            ));
        }
        if lambda == 0.0 || !lambda.is_finite() {
            errors.push("coupling must be nonzero".to_string());
        }
        if !(0.0..1.0).contains(&omega) {
            errors.push(format!("frequency must lie in [0, 1), got {omega}"));
        }
        if !(annulus_r > 0.0 && annulus_r < 1.0) {
            errors.push(format!("annulus_r must lie in (0, 1), got {annulus_r}"));
        }
        if errors.is_empty() {
            for (name, m) in [("R", &r), ("F", &f)] {
                let d = m.symmetry_defect(SYMMETRY_GRID);
                if d > SYMMETRY_TOL {
                    errors.push(format!("{name}(x) is not symmetric on the probe grid (defect {d:.3e})"));
                }
            }
        }
        if !errors.is_empty() {
            return Err(LabError::Invalid(errors));
        }
        Ok(OperatorSpec {
            l,
            lambda,
            omega,
            annulus_r,
            w,
            r,
            f,
        })
    }

    /// `l = 1`, `W ≡ 1`, `R ≡ 0`, `F = 2cos 2πx`: the almost Mathieu operator.
    pub fn almost_mathieu(lambda: f64, omega: f64) -> Self {
        Self::new(
            lambda,
            omega,
            0.5,
            TrigMatrixPoly::identity(1),
            TrigMatrixPoly::zero(1),
            TrigMatrixPoly::cos(1.0, 0.0),
        )
        .expect("almost Mathieu spec is valid")
    }

    /// Band lattice: `W ≡ I`, `R` the path adjacency on `l` sites,
    /// `F = diag(2cos 2π(x + shift_j))`.
    pub fn band_lattice(lambda: f64, omega: f64, shifts: &[f64]) -> Self {
        let l = shifts.len();
        let adj = DMatrix::from_fn(l, l, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
        let modes: Vec<(f64, f64)> = shifts.iter().map(|&s| (1.0, s)).collect();
        Self::new(
            lambda,
            omega,
            0.5,
            TrigMatrixPoly::identity(l),
            TrigMatrixPoly::constant(&adj),
            TrigMatrixPoly::diag_cos(&modes),
        )
        .expect("band lattice spec is valid")
    }

    pub fn l(&self) -> usize {
        self.l
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn annulus_r(&self) -> f64 {
        self.annulus_r
    }
    pub fn w(&self) -> &TrigMatrixPoly {
        &self.w
    }
    pub fn r(&self) -> &TrigMatrixPoly {
        &self.r
    }
    pub fn f(&self) -> &TrigMatrixPoly {
        &self.f
    }

    /// Same symbols with a different coupling.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(
            lambda,
            self.omega,
            self.annulus_r,
            self.w.clone(),
            self.r.clone(),
            self.f.clone(),
        )
    }

    /// `V = λF + R`.
    pub fn v(&self) -> TrigMatrixPoly {
        self.f.scale(self.lambda).add(&self.r)
    }

    /// The point carrying block `n`: `p` rotated by `nω`.
    pub fn block_point(&self, p: CirclePoint, n: i64) -> CirclePoint {
        p.rotate(orbit_shift(self.omega, n))
    }

    /// Sup norms of `(W, R, F)` on the unit circle.
    pub fn symbol_norms(&self, grid: usize) -> (f64, f64, f64) {
        (
            self.w.sup_norm(1.0, grid),
            self.r.sup_norm(1.0, grid),
            self.f.sup_norm(1.0, grid),
        )
    }

    /// Default energy window `|E| ≤ 4(1 + |λ|)·max(‖F‖, ‖R‖, ‖W‖)`.
    pub fn default_energy_window(&self) -> f64 {
        let (w, r, f) = self.symbol_norms(256);
        4.0 * (1.0 + self.lambda.abs()) * w.max(r).max(f)
    }

    /// SHA-256 of the operator's debug rendering, as lowercase hex.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(format!("{self:?}").as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Minimum of `|det W(x)|` over a probe grid; zero everywhere means `det W ≡ 0`.
    pub fn det_w_probe(&self, grid: usize) -> (f64, f64) {
        let dets: Vec<f64> = (0..grid)
            .map(|j| self.w.eval_phase((j as f64 + 0.5) / grid as f64).determinant().abs())
            .collect();
        let lo = dets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = dets.iter().copied().fold(0.0, f64::max);
        (lo, hi)
    }
}

/// Scalar index `γ ∈ [1, N·l]` with its block `n ∈ [1, N]` and offset `r = γ - l·n ∈ (-l, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockIndex {
    pub gamma: usize,
    pub n: usize,
    pub r: i64,
}

impl BlockIndex {
    /// Ceiling convention: `n(γ) = ⌈γ / l⌉`.
    pub fn from_scalar(l: usize, big_n: usize, gamma: usize) -> Result<Self> {
        if l == 0 || big_n == 0 {
            return Err(LabError::domain("l and N must be positive"));
        }
        if gamma == 0 || gamma > l * big_n {
            return Err(LabError::domain(format!(
                "scalar index {gamma} outside [1, {}]",
                l * big_n
            )));
        }
        let n = gamma.div_ceil(l);
        Ok(BlockIndex {
            gamma,
            n,
            r: gamma as i64 - (l * n) as i64,
        })
    }

    pub fn from_block(l: usize, big_n: usize, n: usize, r: i64) -> Result<Self> {
        if n == 0 || n > big_n || r > 0 || r <= -(l as i64) {
            return Err(LabError::domain(format!(
                "block index (n={n}, r={r}) outside [1, {big_n}] × (-{l}, 0]"
            )));
        }
        let gamma = (l * n) as i64 + r;
        Ok(BlockIndex {
            gamma: gamma as usize,
            n,
            r,
        })
    }

    /// 0-based position inside the block.
    pub fn offset(&self, l: usize) -> usize {
        (self.r + l as i64 - 1) as usize
    }
}

/// Block of a 1-based scalar index.
#[inline]
pub fn block_of(l: usize, gamma: usize) -> usize {
    gamma.div_ceil(l)
}

/// `H_Λ(p) - E·I` on `Λ = [a, b]` as a dense `|Λ|l` square matrix.
#[derive(Debug, Clone)]
pub struct DirichletMatrix {
    pub a: i64,
    pub b: i64,
    pub l: usize,
    pub point: CirclePoint,
    pub energy: f64,
    pub entries: DMatrix<Complex64>,
}

impl DirichletMatrix {
    pub fn blocks(&self) -> usize {
        (self.b - self.a + 1) as usize
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// Real part; meaningful for real phases where the matrix is real symmetric.
    pub fn real(&self) -> DMatrix<f64> {
        self.entries.map(|v| v.re)
    }

    /// The `(n, n')` block with `n, n'` counted from the interval start (0-based).
    pub fn block(&self, n: usize, np: usize) -> DMatrix<Complex64> {
        self.entries
            .view((n * self.l, np * self.l), (self.l, self.l))
            .into_owned()
    }
}

/// Evaluated blocks of a Dirichlet restriction.
///
/// `diag[i]` is `V_{a+i} - E`, `upper[i]` is `W_{a+i+1}` (so the coupling
/// between blocks `i` and `i + 1` is `-upper[i]` above and `-upper[i]ᵀ` below).
#[derive(Debug, Clone)]
pub struct DirichletBlocks {
    pub l: usize,
    pub diag: Vec<DMatrix<Complex64>>,
    pub upper: Vec<DMatrix<Complex64>>,
}

impl DirichletBlocks {
    pub fn assemble(spec: &OperatorSpec, p: CirclePoint, a: i64, b: i64, energy: f64) -> Result<Self> {
        if b < a {
            return Err(LabError::domain(format!("empty interval [{a}, {b}]")));
        }
        if !(p.radius > 1.0 - spec.annulus_r && p.radius < 1.0 + spec.annulus_r) {
            return Err(LabError::domain(format!(
                "|z| = {} lies outside the annulus 1 ± {}",
                p.radius, spec.annulus_r
            )));
        }
        let l = spec.l;
        let shift = Complex64::new(energy, 0.0);
        let lam = Complex64::new(spec.lambda, 0.0);
        let diag = (a..=b)
            .map(|n| {
                let q = spec.block_point(p, n);
                let mut v = spec.f.eval_at(q) * lam + spec.r.eval_at(q);
                for i in 0..l {
                    v[(i, i)] -= shift;
                }
                v
            })
            .collect();
        let upper = (a + 1..=b).map(|n| spec.w.eval_at(spec.block_point(p, n))).collect();
        Ok(DirichletBlocks { l, diag, upper })
    }

    pub fn blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn size(&self) -> usize {
        self.diag.len() * self.l
    }

    /// Entry `(row, col)` (0-based scalar indices); zero off the block band.
    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        let l = self.l;
        let (bn, bm) = (row / l, col / l);
        let (i, j) = (row % l, col % l);
        if bn == bm {
            self.diag[bn][(i, j)]
        } else if bm == bn + 1 {
            -self.upper[bn][(i, j)]
        } else if bn == bm + 1 {
            -self.upper[bm][(j, i)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let m = self.size();
        let mut out = DMatrix::zeros(m, m);
        let l = self.l;
        for (n, d) in self.diag.iter().enumerate() {
            out.view_mut((n * l, n * l), (l, l)).copy_from(d);
        }
        for (n, w) in self.upper.iter().enumerate() {
            out.view_mut((n * l, (n + 1) * l), (l, l)).copy_from(&(-w));
            out.view_mut(((n + 1) * l, n * l), (l, l)).copy_from(&(-w.transpose()));
        }
        out
    }

    /// Half-bandwidth `2l - 1` of the scalar matrix.
    pub fn bandwidth(&self) -> usize {
        2 * self.l - 1
    }

    pub fn factor(&self) -> BandLu<Complex64> {
        let bw = self.bandwidth();
        BandLu::factor_with(self.size(), bw, bw, |r, c| self.entry(r, c))
    }

    /// Real-valued factorisation (imaginary parts dropped); for real phases.
    pub fn factor_real(&self) -> BandLu<f64> {
        let bw = self.bandwidth();
        BandLu::factor_with(self.size(), bw, bw, |r, c| self.entry(r, c).re)
    }
}

/// Dense `H_{[a,b]}(p) - E·I`.
pub fn dirichlet_matrix(spec: &OperatorSpec, p: CirclePoint, a: i64, b: i64, energy: f64) -> Result<DirichletMatrix> {
    let blocks = DirichletBlocks::assemble(spec, p, a, b, energy)?;
    Ok(DirichletMatrix {
        a,
        b,
        l: spec.l,
        point: p,
        energy,
        entries: blocks.to_dense(),
    })
}

/// A finitely supported sequence of `l`-vectors, zero outside `[start, start + len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSeq {
    pub l: usize,
    pub start: i64,
    pub blocks: Vec<DVector<f64>>,
}

impl BlockSeq {
    pub fn zeros(l: usize, start: i64, len: usize) -> Self {
        BlockSeq {
            l,
            start,
            blocks: vec![DVector::zeros(l); len],
        }
    }

    /// Splits a flat vector into consecutive `l`-blocks starting at block `start`.
    pub fn from_flat(l: usize, start: i64, flat: &[f64]) -> Self {
        assert_eq!(flat.len() % l, 0, "flat length must be a multiple of l");
        BlockSeq {
            l,
            start,
            blocks: flat.chunks(l).map(DVector::from_column_slice).collect(),
        }
    }

    /// Unit vector `e_i` in block `n`.
    pub fn delta(l: usize, n: i64, i: usize) -> Self {
        let mut s = Self::zeros(l, n, 1);
        s.blocks[0][i] = 1.0;
        s
    }

    pub fn end(&self) -> i64 {
        self.start + self.blocks.len() as i64 - 1
    }

    pub fn get(&self, n: i64) -> DVector<f64> {
        if n < self.start || n > self.end() {
            DVector::zeros(self.l)
        } else {
            self.blocks[(n - self.start) as usize].clone()
        }
    }

    pub fn block_norm(&self, n: i64) -> f64 {
        if n < self.start || n > self.end() {
            0.0
        } else {
            self.blocks[(n - self.start) as usize].norm()
        }
    }

    /// Concatenated blocks `a..=b`.
    pub fn flat(&self, a: i64, b: i64) -> DVector<f64> {
        let mut out = DVector::zeros(((b - a + 1).max(0) as usize) * self.l);
        for (i, n) in (a..=b).enumerate() {
            out.rows_mut(i * self.l, self.l).copy_from(&self.get(n));
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }
}

/// `[H(x) ψ]_n` for a real phase `x`, with diagonal blocks `V_n = λF_n + R_n`.
pub fn apply(spec: &OperatorSpec, x: f64, psi: &BlockSeq, n: i64) -> DVector<f64> {
    let p = CirclePoint::phase(x);
    let at = |m: &TrigMatrixPoly, k: i64| m.eval_at(spec.block_point(p, k)).map(|v| v.re);
    let w_next = at(&spec.w, n + 1);
    let w_here = at(&spec.w, n);
    let r_here = at(&spec.r, n);
    let f_here = at(&spec.f, n);
    let hop = w_next * psi.get(n + 1) + w_here.transpose() * psi.get(n - 1);
    (f_here * spec.lambda + r_here) * psi.get(n) - hop
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_spec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn amo_apply_examples() {
        let spec = OperatorSpec::almost_mathieu(2.0, golden_mean());
        let v = apply(&spec, 0.0, &BlockSeq::delta(1, 0, 0), 0);
        assert!((v[0] - 4.0).abs() < 1e-14);
        let v = apply(&spec, 0.0, &BlockSeq::delta(1, 1, 0), 0);
        assert!((v[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn apply_matches_dense_product() {
        let spec = random_spec(2, 1.7, 3);
        let x = 0.271;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let flat: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let psi = BlockSeq::from_flat(2, 3, &flat);
        // window [1, 9] strictly contains supp ψ = [3, 7]
        let h = dirichlet_matrix(&spec, CirclePoint::phase(x), 1, 9, 0.0).unwrap().real();
        let hv = h * psi.flat(1, 9);
        for n in 2..=8 {
            let got = apply(&spec, x, &psi, n);
            let i = ((n - 1) * 2) as usize;
            assert!((got - hv.rows(i, 2)).amax() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_examples() {
        let spec = OperatorSpec::almost_mathieu(2.0, golden_mean());
        let one = dirichlet_matrix(&spec, CirclePoint::phase(0.0), 0, 0, 0.0).unwrap();
        assert!((one.entries[(0, 0)].re - 4.0).abs() < 1e-14);
        // block n sits at phase x + nω
        let one = dirichlet_matrix(&spec, CirclePoint::phase(0.0), 1, 1, 0.0).unwrap();
        let want = 4.0 * (std::f64::consts::TAU * golden_mean()).cos();
        assert!((one.entries[(0, 0)].re - want).abs() < 1e-14);

        let g = golden_mean();
        let two = dirichlet_matrix(&spec, CirclePoint::phase(0.0), 1, 2, 0.0).unwrap().real();
        let want = DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 * 2.0 * (std::f64::consts::TAU * g).cos(),
                -1.0,
                -1.0,
                2.0 * 2.0 * (2.0 * std::f64::consts::TAU * g).cos(),
            ],
        );
        assert!((two - want).amax() < 1e-13);
    }

    #[test]
    fn empty_interval_rejected() {
        let spec = OperatorSpec::almost_mathieu(2.0, golden_mean());
        assert!(matches!(
            dirichlet_matrix(&spec, CirclePoint::phase(0.0), 3, 2, 0.0),
            Err(LabError::Domain(_))
        ));
    }

    #[test]
    fn real_phase_matrix_is_symmetric_and_banded() {
        for seed in 0..10 {
            let spec = random_spec(3, 1.7, seed);
            let m = dirichlet_matrix(&spec, CirclePoint::phase(0.1 * seed as f64), -2, 4, 0.3).unwrap();
            let e = &m.entries;
            assert!((e - e.transpose()).camax() < 1e-12);
            assert!(e.iter().all(|v| v.im.abs() < 1e-12));
            for i in 0..e.nrows() {
                for j in 0..e.ncols() {
                    if block_of(3, i + 1).abs_diff(block_of(3, j + 1)) >= 2 {
                        assert_eq!(e[(i, j)], Complex64::new(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn shift_identity_and_covariance() {
        let spec = random_spec(2, 1.7, 1);
        let om = spec.omega();
        let x = 0.33;
        let (a, b) = (5, 11);
        let lhs = dirichlet_matrix(&spec, CirclePoint::phase(x), a, b, 0.7).unwrap().entries;
        let rhs = dirichlet_matrix(&spec, CirclePoint::phase(x + (a - 1) as f64 * om), 1, b - a + 1, 0.7)
            .unwrap()
            .entries;
        assert!((lhs - rhs).camax() < 1e-12);

        let z = CirclePoint::new(1.2, 0.1);
        for j in [-3i64, 2, 7] {
            let lhs = dirichlet_matrix(&spec, z, a + j, b + j, 0.7).unwrap().entries;
            let rhs = dirichlet_matrix(&spec, spec.block_point(z, j), a, b, 0.7).unwrap().entries;
            assert!((lhs - rhs).camax() < 1e-12);
        }
    }

    #[test]
    fn band_assembly_agrees_with_dense() {
        let spec = random_spec(2, 1.7, 4);
        let blocks = DirichletBlocks::assemble(&spec, CirclePoint::new(1.1, 0.2), 1, 6, 0.1).unwrap();
        let dense = blocks.to_dense();
        let m = blocks.size();
        for r in 0..m {
            for c in 0..m {
                assert_eq!(blocks.entry(r, c), dense[(r, c)]);
            }
        }
        let got = blocks.factor().log_det().value();
        let want = dense.determinant();
        assert!((got - want).norm() <= 1e-10 * want.norm());
    }

    #[test]
    fn index_map_examples() {
        for g in 1..=10 {
            assert_eq!(BlockIndex::from_scalar(1, 10, g).unwrap().n, g);
        }
        let i3 = BlockIndex::from_scalar(3, 4, 3).unwrap();
        assert_eq!((i3.n, i3.r), (1, 0));
        let i4 = BlockIndex::from_scalar(3, 4, 4).unwrap();
        assert_eq!((i4.n, i4.r), (2, -2));
        assert!(BlockIndex::from_scalar(3, 4, 13).is_err());
        assert!(BlockIndex::from_scalar(3, 4, 0).is_err());
    }

    #[test]
    fn index_maps_round_trip_exhaustively() {
        for l in 1..=8 {
            for big_n in 1..=64 {
                for g in 1..=l * big_n {
                    let bi = BlockIndex::from_scalar(l, big_n, g).unwrap();
                    assert_eq!(bi.gamma as i64, (l * bi.n) as i64 + bi.r);
                    assert!(bi.r > -(l as i64) && bi.r <= 0);
                    assert!(bi.offset(l) < l);
                    assert_eq!(BlockIndex::from_block(l, big_n, bi.n, bi.r).unwrap(), bi);
                }
            }
        }
    }

    #[test]
    fn invalid_specs_report_all_errors() {
        let err = OperatorSpec::new(
            0.0,
            1.5,
            0.5,
            TrigMatrixPoly::identity(1),
            TrigMatrixPoly::zero(1),
            TrigMatrixPoly::cos(1.0, 0.0),
        )
        .unwrap_err();
        match err {
            LabError::Invalid(list) => {
                assert_eq!(list.len(), 2);
                assert!(list[0].contains("coupling must be nonzero"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let asym = TrigMatrixPoly::constant(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert!(OperatorSpec::new(
            1.0,
            0.3,
            0.5,
            TrigMatrixPoly::identity(2),
            asym,
            TrigMatrixPoly::identity(2)
        )
        .is_err());
    }
}
