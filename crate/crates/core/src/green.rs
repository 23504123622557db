//! Finite-volume Green's functions `G_Λ(x; E) = (H_Λ(x) - E)^{-1}`, the
//! good-Green classification and the bad phase set.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{min_singular, op_norm};
use crate::operator::{DirichletBlocks, OperatorSpec};
use crate::report::{BoundReport, Verdict};
use crate::torus::CirclePoint;

/// Matrices with a 1-norm condition estimate above this count as singular.
pub const CONDITION_CAP: f64 = 1e14;

/// Tunable constants of the good-Green and bad-set definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenParams {
    /// The `50` in `exp(-(|n - n'| - |Λ|/50) log|λ|)`.
    pub width_constant: f64,
    /// Bad-set margin; `None` means `1/(100 l)`.
    pub delta: Option<f64>,
}

impl Default for GreenParams {
    fn default() -> Self {
        GreenParams {
            width_constant: 50.0,
            delta: None,
        }
    }
}

impl GreenParams {
    pub fn delta_for(&self, l: usize) -> f64 {
        self.delta.unwrap_or(1.0 / (100.0 * l as f64))
    }
}

/// `(H_{[a,b]}(x) - E)^{-1}` for a real phase.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenMatrix {
    pub a: i64,
    pub b: i64,
    pub l: usize,
    pub x: f64,
    pub energy: f64,
    pub entries: DMatrix<f64>,
    /// `‖H - E‖₁ · ‖G‖₁`.
    pub condition: f64,
}

impl GreenMatrix {
    pub fn volume(&self) -> usize {
        (self.b - self.a + 1) as usize
    }

    /// Block `(n, n')` with `n, n' ∈ [a, b]`.
    pub fn block(&self, n: i64, np: i64) -> DMatrix<f64> {
        let l = self.l;
        let (i, j) = ((n - self.a) as usize * l, (np - self.a) as usize * l);
        self.entries.view((i, j), (l, l)).into_owned()
    }

    /// Spectral norm of block `(n, n')`.
    pub fn block_norm(&self, n: i64, np: i64) -> f64 {
        let b = self.block(n, np);
        if self.l == 1 {
            b[(0, 0)].abs()
        } else {
            op_norm(&b)
        }
    }

    /// Scalar entry `(α, α')`, 1-based within the interval.
    pub fn scalar(&self, alpha: usize, alpha_prime: usize) -> f64 {
        self.entries[(alpha - 1, alpha_prime - 1)]
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Green's function on `[a, b]` by banded LU; near-singular systems give
/// [`LabError::SpectralHit`].
pub fn greens(spec: &OperatorSpec, x: f64, a: i64, b: i64, energy: f64) -> Result<GreenMatrix> {
    let blocks = DirichletBlocks::assemble(spec, CirclePoint::phase(x), a, b, energy)?;
    let h = blocks.to_dense().map(|v| v.re);
    let hit = || LabError::SpectralHit {
        sigma_min: min_singular(&h),
    };
    let lu = blocks.factor_real();
    if lu.is_singular() {
        return Err(hit());
    }
    let m = blocks.size();
    let g = lu.solve_matrix(&DMatrix::identity(m, m));
    let condition = one_norm(&h) * one_norm(&g);
    if !(condition <= CONDITION_CAP) {
        return Err(hit());
    }
    Ok(GreenMatrix {
        a,
        b,
        l: spec.l(),
        x,
        energy,
        entries: g,
        condition,
    })
}

/// `‖(H - E) G - I‖_max`.
pub fn green_residual(spec: &OperatorSpec, g: &GreenMatrix) -> Result<f64> {
    let h = DirichletBlocks::assemble(spec, CirclePoint::phase(g.x), g.a, g.b, g.energy)?
        .to_dense()
        .map(|v| v.re);
    let m = h.nrows();
    Ok((h * &g.entries - DMatrix::identity(m, m)).amax())
}

/// Block `(n, n')` with the largest ratio `‖G_{n,n'}‖ / bound(n, n')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCell {
    pub n: i64,
    pub np: i64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodGreen {
    pub good: bool,
    pub worst: WorstCell,
}

/// `exp(-(|n - n'| - |Λ|/c) log|λ|)`.
pub fn good_bound(distance: usize, volume: usize, lambda: f64, width_constant: f64) -> f64 {
    (-(distance as f64 - volume as f64 / width_constant) * lambda.abs().ln()).exp()
}

/// Checks every block against the good-Green bound.
pub fn is_good_green(g: &GreenMatrix, lambda: f64, params: &GreenParams) -> GoodGreen {
    let vol = g.volume();
    let mut worst = WorstCell {
        n: g.a,
        np: g.a,
        ratio: f64::NEG_INFINITY,
    };
    for n in g.a..=g.b {
        for np in g.a..=g.b {
            let bound = good_bound(n.abs_diff(np) as usize, vol, lambda, params.width_constant);
            let ratio = g.block_norm(n, np) / bound;
            if ratio > worst.ratio {
                worst = WorstCell { n, np, ratio };
            }
        }
    }
    GoodGreen {
        good: worst.ratio <= 1.0,
        worst,
    }
}

/// The `u_N(x + jω)` table over a midpoint phase grid, `j < depth`.
fn orbit_table(spec: &OperatorSpec, n: usize, energy: f64, grid: usize, depth: usize) -> Result<Vec<Vec<f64>>> {
    (0..grid)
        .into_par_iter()
        .map(|k| {
            let x = (k as f64 + 0.5) / grid as f64;
            (0..depth)
                .map(|j| {
                    let p = spec.block_point(CirclePoint::phase(x), j as i64);
                    crate::determinant::u_value(spec, p, n, energy)
                })
                .collect()
        })
        .collect()
}

/// Grid estimate of the bad set `{x : (1/M) Σ_{j<M} u_N(x + jω) ≤ (1 - δ) log|λ|}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadSetEstimate {
    pub n: usize,
    pub m: usize,
    pub energy: f64,
    pub delta: f64,
    pub grid: usize,
    pub fraction: f64,
    /// Per-phase orbit averages.
    pub averages: Vec<f64>,
}

fn estimate_from_table(
    table: &[Vec<f64>],
    n: usize,
    m: usize,
    energy: f64,
    delta: f64,
    lambda: f64,
) -> BadSetEstimate {
    let threshold = (1.0 - delta) * lambda.abs().ln();
    let averages: Vec<f64> = table
        .iter()
        .map(|row| row[..m].iter().sum::<f64>() / m as f64)
        .collect();
    // -∞ averages (sentinels) count as bad
    let bad = averages.iter().filter(|&&a| !(a > threshold)).count();
    BadSetEstimate {
        n,
        m,
        energy,
        delta,
        grid: table.len(),
        fraction: bad as f64 / table.len() as f64,
        averages,
    }
}

pub fn bad_set_estimate(
    spec: &OperatorSpec,
    n: usize,
    m: usize,
    energy: f64,
    grid: usize,
    params: &GreenParams,
) -> Result<BadSetEstimate> {
    if m == 0 || grid == 0 {
        return Err(LabError::domain("M and the grid size must be positive"));
    }
    let table = orbit_table(spec, n, energy, grid, m)?;
    Ok(estimate_from_table(&table, n, m, energy, params.delta_for(spec.l()), spec.lambda()))
}

/// Bad-set fractions along a ladder of `M` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadSetLadder {
    pub n: usize,
    pub energy: f64,
    pub delta: f64,
    pub grid: usize,
    pub ms: Vec<usize>,
    pub fractions: Vec<f64>,
    /// `fraction(M_{i+1}) ≤ fraction(M_i) + 1/grid` for every rung.
    pub monotone: bool,
    /// Least-squares slope of `log fraction` against `log M` (rungs with nonzero fraction).
    pub power_slope: Option<f64>,
    /// Least-squares slope of `log(-log fraction)` against `log M`: the exponent `a`
    /// in `fraction ≈ exp(-M^a)`.
    pub stretched_exponent: Option<f64>,
    /// Per-rung, per-phase orbit averages.
    #[serde(skip)]
    pub averages: Vec<Vec<f64>>,
}

fn ls_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn bad_set_ladder(
    spec: &OperatorSpec,
    n: usize,
    ms: &[usize],
    energy: f64,
    grid: usize,
    params: &GreenParams,
) -> Result<BadSetLadder> {
    let depth = ms.iter().copied().max().unwrap_or(0);
    if depth == 0 || ms.contains(&0) || grid == 0 {
        return Err(LabError::domain("ladder rungs and the grid size must be positive"));
    }
    let delta = params.delta_for(spec.l());
    let table = orbit_table(spec, n, energy, grid, depth)?;
    let estimates: Vec<BadSetEstimate> = ms
        .iter()
        .map(|&m| estimate_from_table(&table, n, m, energy, delta, spec.lambda()))
        .collect();
    let fractions: Vec<f64> = estimates.iter().map(|e| e.fraction).collect();
    let cell = 1.0 / grid as f64;
    let monotone = fractions.windows(2).all(|w| w[1] <= w[0] + cell + 1e-15);
    let pos: Vec<(f64, f64)> = ms
        .iter()
        .zip(&fractions)
        .filter(|(_, &f)| f > 0.0 && f < 1.0)
        .map(|(&m, &f)| ((m as f64).ln(), f))
        .collect();
    Ok(BadSetLadder {
        n,
        energy,
        delta,
        grid,
        ms: ms.to_vec(),
        power_slope: ls_slope(&pos.iter().map(|&(x, f)| (x, f.ln())).collect::<Vec<_>>()),
        stretched_exponent: ls_slope(&pos.iter().map(|&(x, f)| (x, (-f.ln()).ln())).collect::<Vec<_>>()),
        fractions,
        monotone,
        averages: estimates.into_iter().map(|e| e.averages).collect(),
    })
}

impl BadSetLadder {
    pub fn to_report(&self) -> BoundReport {
        let mut r = BoundReport::new("green-scan")
            .value("n", self.n as f64)
            .value("energy", self.energy)
            .value("delta", self.delta)
            .value("grid", self.grid as f64)
            .value("monotone", if self.monotone { 1.0 } else { 0.0 })
            .threshold("grid_cell", 1.0 / self.grid as f64)
            .verdict(if self.monotone { Verdict::Pass } else { Verdict::Warn });
        for (m, f) in self.ms.iter().zip(&self.fractions) {
            r = r.value(&format!("bad_fraction_m{m}"), *f);
        }
        if let Some(s) = self.power_slope {
            r = r.value("power_slope", s);
        }
        if let Some(a) = self.stretched_exponent {
            r = r.value("stretched_exponent", a);
        }
        r
    }
}

/// One step of the good-window search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStep {
    pub j: usize,
    pub u: f64,
    /// `None` when `E` hits the spectrum of `H_N(x + jω)`.
    pub worst_ratio: Option<f64>,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSearch {
    pub j: Option<usize>,
    pub trace: Vec<WindowStep>,
}

fn window_step(spec: &OperatorSpec, x: f64, n: usize, j: usize, energy: f64, params: &GreenParams) -> Result<WindowStep> {
    let xj = crate::torus::orbit_shift(spec.omega(), j as i64) + x;
    let u = crate::determinant::u_value(spec, CirclePoint::phase(xj), n, energy)?;
    match greens(spec, xj, 1, n as i64, energy) {
        Ok(g) => {
            let gg = is_good_green(&g, spec.lambda(), params);
            Ok(WindowStep {
                j,
                u,
                worst_ratio: Some(gg.worst.ratio),
                good: gg.good,
            })
        }
        Err(LabError::SpectralHit { .. }) => Ok(WindowStep {
            j,
            u,
            worst_ratio: None,
            good: false,
        }),
        Err(e) => Err(e),
    }
}

/// Smallest `0 ≤ j < M` with `G_N(x + jω)` good.
pub fn good_window_search(spec: &OperatorSpec, x: f64, n: usize, m: usize, energy: f64, params: &GreenParams) -> Result<WindowSearch> {
    let mut trace = Vec::new();
    for j in 0..m {
        let step = window_step(spec, x, n, j, energy, params)?;
        trace.push(step);
        if step.good {
            return Ok(WindowSearch { j: Some(j), trace });
        }
    }
    Ok(WindowSearch { j: None, trace })
}

/// Fraction of `0 ≤ k < horizon` with `G_N(x + kω)` good; `horizon ≤ 10⁶`.
pub fn orbit_good_fraction(spec: &OperatorSpec, x: f64, n: usize, energy: f64, horizon: usize, params: &GreenParams) -> Result<f64> {
    if horizon == 0 || horizon > 1_000_000 {
        return Err(LabError::domain("horizon must lie in [1, 10^6]"));
    }
    let good: Vec<bool> = (0..horizon)
        .into_par_iter()
        .map(|k| window_step(spec, x, n, k, energy, params).map(|s| s.good))
        .collect::<Result<_>>()?;
    Ok(good.iter().filter(|&&g| g).count() as f64 / horizon as f64)
}

/// `min_{1≤k≤K} k² ‖kω‖`: the largest `t` with `‖kω‖ ≥ t/k²` up to `K`.
pub fn diophantine_constant(omega: f64, k_max: u64) -> f64 {
    (1..=k_max)
        .map(|k| {
            let v = k as f64 * omega;
            let d = (v - v.round()).abs();
            (k as f64).powi(2) * d
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_spec;
    use crate::minors::minor_direct;
    use crate::operator::golden_mean;
    use proptest::prelude::*;

    fn amo(lambda: f64) -> OperatorSpec {
        OperatorSpec::almost_mathieu(lambda, golden_mean())
    }

    #[test]
    fn trivial_green() {
        // block 0 sits at phase x
        let g = greens(&amo(2.0), 0.0, 0, 0, 0.0).unwrap();
        assert!((g.entries[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn spectral_hit_reports_sigma_min() {
        let spec = amo(2.0);
        assert!(matches!(greens(&spec, 0.0, 0, 0, 4.0), Err(LabError::SpectralHit { sigma_min }) if sigma_min < 1e-12));
        // E at an eigenvalue of a larger box
        let h = DirichletBlocks::assemble(&spec, CirclePoint::phase(0.3), 1, 6, 0.0).unwrap().to_dense().map(|v| v.re);
        let e = h.symmetric_eigenvalues()[2];
        assert!(matches!(greens(&spec, 0.3, 1, 6, e), Err(LabError::SpectralHit { .. })));
    }

    #[test]
    fn residual_on_random_spec() {
        let spec = random_spec(2, 2.5, 4);
        let g = greens(&spec, 0.37, 1, 6, 0.4).unwrap();
        let h = DirichletBlocks::assemble(&spec, CirclePoint::phase(0.37), 1, 6, 0.4).unwrap().to_dense().map(|v| v.re);
        assert!((&g.entries * &h - DMatrix::identity(12, 12)).amax() < 1e-10);
        assert!(green_residual(&spec, &g).unwrap() <= 1e-8 * g.condition);
    }

    #[test]
    fn cramer_consistency() {
        for seed in 0..20 {
            let spec = random_spec(2, 1.5, seed);
            let (x, e) = (0.05 * seed as f64, 0.1);
            let g = greens(&spec, x, 1, 5, e).unwrap();
            let h = DirichletBlocks::assemble(&spec, CirclePoint::phase(x), 1, 5, e).unwrap().to_dense().map(|v| v.re);
            let det = h.determinant();
            for a in 1..=10 {
                for ap in 1..=10 {
                    let sign = if (a + ap) % 2 == 0 { 1.0 } else { -1.0 };
                    let want = sign * minor_direct(&h, ap, a).unwrap() / det;
                    let got = g.scalar(a, ap);
                    assert!((got - want).abs() <= 1e-8 * want.abs().max(got.abs()).max(1e-300) + 1e-14);
                }
            }
        }
    }

    #[test]
    fn translation_covariance() {
        let spec = random_spec(2, 3.0, 11);
        let (x, j) = (0.21, 7);
        let shifted = greens(&spec, x, 3 + j, 8 + j, 0.2).unwrap();
        let moved = greens(&spec, x + crate::torus::orbit_shift(spec.omega(), j), 3, 8, 0.2).unwrap();
        assert!((shifted.entries - moved.entries).amax() < 1e-10);
    }

    #[test]
    fn threshold_arithmetic() {
        // |Λ| = 50: bound ≥ 1 for distance ≤ 1
        assert!(good_bound(1, 50, 10.0, 50.0) >= 1.0 - 1e-15);
        assert!(good_bound(0, 50, 10.0, 50.0) > 1.0);
        let mut g = GreenMatrix {
            a: 1,
            b: 50,
            l: 1,
            x: 0.0,
            energy: 0.0,
            entries: DMatrix::zeros(50, 50),
            condition: 1.0,
        };
        for i in 0..50 {
            g.entries[(i, i)] = 1.0;
            if i + 1 < 50 {
                g.entries[(i, i + 1)] = 0.9;
                g.entries[(i + 1, i)] = -1.0;
            }
        }
        assert!(is_good_green(&g, 10.0, &GreenParams::default()).good);
    }

    #[test]
    fn near_hit_is_not_good() {
        let spec = amo(10.0);
        let h = DirichletBlocks::assemble(&spec, CirclePoint::phase(0.3), 1, 20, 0.0).unwrap().to_dense().map(|v| v.re);
        let e = h.symmetric_eigenvalues()[7] + 1e-9;
        let g = greens(&spec, 0.3, 1, 20, e).unwrap();
        let gg = is_good_green(&g, 10.0, &GreenParams::default());
        assert!(!gg.good);
        assert!(gg.worst.ratio > 1e6);
        // G ≈ ψψᵀ/(E - E_j): the diagonal block at the localization centre already fails
        let diag = (1..=20)
            .map(|n| g.block_norm(n, n) / good_bound(0, 20, 10.0, 50.0))
            .fold(0.0, f64::max);
        assert!(diag > 1e6);
    }

    #[test]
    fn typical_amo_green_is_good() {
        // frozen: x = 0.1234, E = 0.37 is 0.14 away from the nearest eigenvalue
        let spec = amo(10.0);
        let g = greens(&spec, 0.1234, 1, 100, 0.37).unwrap();
        let gg = is_good_green(&g, 10.0, &GreenParams::default());
        assert!(gg.good, "{:?}", gg.worst);
        // decay implication
        for n in 1..=100i64 {
            for np in 1..=100i64 {
                if n.abs_diff(np) as f64 >= 100.0 / 25.0 {
                    assert!(g.block_norm(n, np) <= (-(100.0 / 50.0) * 10f64.ln()).exp());
                }
            }
        }
    }

    #[test]
    fn bad_set_examples() {
        let p = GreenParams::default();
        // frozen: 2 of 4096 phases, whose orbits pass very close to a zero of cos
        let huge = bad_set_estimate(&amo(1e6), 60, 8, 0.0, 4096, &p).unwrap();
        assert!(huge.fraction <= 2.0 / 4096.0, "{}", huge.fraction);
        let loose = GreenParams {
            delta: Some(1.0),
            ..p
        };
        let collapsed = bad_set_estimate(&amo(10.0), 20, 4, 0.0, 512, &loose).unwrap();
        assert!(collapsed.fraction < 0.01);
        assert!(collapsed.averages.iter().all(|a| a.is_finite()));
    }

    #[test]
    fn ladder_reports_trend() {
        let l = bad_set_ladder(&amo(10.0), 30, &[2, 4, 8], 0.0, 512, &GreenParams::default()).unwrap();
        assert_eq!(l.fractions.len(), 3);
        assert!(l.fractions.iter().all(|f| (0.0..=1.0).contains(f)));
        // the prefix table gives the same numbers as separate runs
        let single = bad_set_estimate(&amo(10.0), 30, 4, 0.0, 512, &GreenParams::default()).unwrap();
        assert_eq!(single.fraction, l.fractions[1]);
    }

    #[test]
    fn window_search_examples() {
        let spec = amo(10.0);
        let p = GreenParams::default();
        let s = good_window_search(&spec, 0.1234 - crate::torus::orbit_shift(spec.omega(), 1), 100, 3, 0.37, &p).unwrap();
        assert_eq!(s.j, Some(0));
        assert!(s.trace[0].u > (1.0 - 0.01) * 10f64.ln());

        // E exactly at an eigenvalue of H_N(x) with M = 1: no window
        let h = DirichletBlocks::assemble(&spec, CirclePoint::phase(0.3), 1, 20, 0.0).unwrap().to_dense().map(|v| v.re);
        let e = h.symmetric_eigenvalues()[5];
        let x = 0.3 - crate::torus::orbit_shift(spec.omega(), 1);
        let s = good_window_search(&spec, x, 20, 1, e, &p).unwrap();
        assert_eq!(s.j, None);
        assert_eq!(s.trace.len(), 1);
        assert!(!s.trace[0].good);
    }

    #[test]
    fn orbit_fraction_examples() {
        let p = GreenParams::default();
        let spec = amo(10.0);
        let x = 0.1234 - crate::torus::orbit_shift(spec.omega(), 1);
        let one = orbit_good_fraction(&spec, x, 100, 0.37, 1, &p).unwrap();
        let gg = is_good_green(&greens(&spec, 0.1234, 1, 100, 0.37).unwrap(), 10.0, &p).good;
        assert_eq!(one, if gg { 1.0 } else { 0.0 });
        let huge = orbit_good_fraction(&amo(1e6), 0.2, 20, 0.0, 200, &p).unwrap();
        assert!(huge > 0.99);
        assert!(orbit_good_fraction(&spec, 0.0, 10, 0.0, 2_000_000, &p).is_err());
    }

    #[test]
    fn golden_mean_is_diophantine() {
        let t = diophantine_constant(golden_mean(), 1_000_000);
        assert!((t - 0.381966).abs() < 1e-5, "t = {t}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn good_green_implies_off_diagonal_decay(seed in 0u64..1000, x in 0.0f64..1.0) {
            let spec = random_spec(1, 40.0, seed);
            let n = 50;
            if let Ok(g) = greens(&spec, x, 1, n, 0.5) {
                if is_good_green(&g, 40.0, &GreenParams::default()).good {
                    for a in 1..=n {
                        for b in 1..=n {
                            if a.abs_diff(b) as f64 >= n as f64 / 25.0 {
                                prop_assert!(g.block_norm(a, b) <= (-(n as f64 / 50.0) * 40f64.ln()).exp() * (1.0 + 1e-12));
                            }
                        }
                    }
                }
            }
        }
    }
}
