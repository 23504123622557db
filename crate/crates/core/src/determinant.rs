//! The subharmonic observable `u_N(z) = (1/Nl) log|det(H_N(z) - E)|` and the
//! machinery behind the lower determinant bound.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{char_poly, log_det, op_norm, poly_eval};
use crate::operator::{DirichletBlocks, OperatorSpec};
use crate::report::{stable_on_log_scale, BoundReport, Verdict};
use crate::torus::{CirclePoint, TrigMatrixPoly};

/// Number of candidate radii in the ε₀ scan.
pub const EPS0_RADII: usize = 64;
/// The scan fails when every radius has a minimum below this.
pub const EPS0_FLOOR: f64 = 1e-12;
/// Tolerance for the radial convexity test.
pub const HARDY_TOL: f64 = 1e-3;

/// `u_N(p)`; `-∞` flags a determinant below the sentinel.
pub fn u_value(spec: &OperatorSpec, p: CirclePoint, n: usize, energy: f64) -> Result<f64> {
    if n == 0 {
        return Err(LabError::domain("N must be positive"));
    }
    let blocks = DirichletBlocks::assemble(spec, p, 1, n as i64, energy)?;
    let ld = blocks.factor().log_det();
    Ok(if ld.is_sentinel() {
        f64::NEG_INFINITY
    } else {
        ld.log_abs / blocks.size() as f64
    })
}

/// `u_N` sampled at equispaced points of the circle `|z| = s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicSamples {
    pub radius: f64,
    pub n: usize,
    pub l: usize,
    pub energy: f64,
    /// Sample `k` sits at turns `(k + 1/2) / count`.
    pub samples: Vec<f64>,
}

impl SubharmonicSamples {
    /// Sample count must be a power of two, at least 256.
    pub fn collect(spec: &OperatorSpec, n: usize, energy: f64, radius: f64, count: usize) -> Result<Self> {
        Self::collect_with(radius, count, |p| u_value(spec, p, n, energy)).map(|samples| SubharmonicSamples {
            radius,
            n,
            l: spec.l(),
            energy,
            samples,
        })
    }

    /// Samples an arbitrary function on the circle; used for the harmonic oracle.
    pub fn collect_with<S>(radius: f64, count: usize, sampler: S) -> Result<Vec<f64>>
    where
        S: Fn(CirclePoint) -> Result<f64> + Sync,
    {
        if count < 256 || !count.is_power_of_two() {
            return Err(LabError::domain(format!(
                "sample count {count} must be a power of two ≥ 256"
            )));
        }
        (0..count)
            .into_par_iter()
            .map(|k| sampler(CirclePoint::new(radius, (k as f64 + 0.5) / count as f64)))
            .collect()
    }

    pub fn sentinels(&self) -> usize {
        self.samples.iter().filter(|v| !v.is_finite()).count()
    }

    /// Mean over non-sentinel samples.
    pub fn mean(&self) -> f64 {
        finite_mean(&self.samples)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn finite_mean(v: &[f64]) -> f64 {
    let (s, c) = v
        .iter()
        .filter(|x| x.is_finite())
        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

/// Result of the Hadamard upper check at `N` and `2N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HadamardCheck {
    pub radius: f64,
    pub lambda: f64,
    pub ns: [usize; 2],
    /// `max_z u_N(z) - log|λ|`.
    pub max_gap: [f64; 2],
    /// `max_z [(1/Nl) Σ log‖row_i‖ - u_N(z)]`; nonnegative by Hadamard's inequality.
    pub min_hadamard_slack: f64,
    pub stable: bool,
    pub verdict: Verdict,
}

impl HadamardCheck {
    pub fn to_report(&self) -> BoundReport {
        BoundReport::new("hadamard-upper")
            .value("radius", self.radius)
            .value("lambda", self.lambda)
            .value(&format!("max_gap_n{}", self.ns[0]), self.max_gap[0])
            .value(&format!("max_gap_n{}", self.ns[1]), self.max_gap[1])
            .value("min_hadamard_slack", self.min_hadamard_slack)
            .threshold("relative_stability_on_log_lambda_scale", 0.1)
            .verdict(self.verdict)
    }
}

fn hadamard_run(spec: &OperatorSpec, n: usize, energy: f64, radius: f64, grid: usize) -> Result<(f64, f64)> {
    let out: Vec<(f64, f64)> = (0..grid)
        .into_par_iter()
        .map(|k| {
            let p = CirclePoint::new(radius, (k as f64 + 0.5) / grid as f64);
            let blocks = DirichletBlocks::assemble(spec, p, 1, n as i64, energy)?;
            let m = blocks.size();
            let ld = blocks.factor().log_det();
            let u = if ld.is_sentinel() { f64::NEG_INFINITY } else { ld.log_abs / m as f64 };
            let rows: f64 = (0..m)
                .map(|r| {
                    let lo = r.saturating_sub(2 * spec.l());
                    let hi = (r + 2 * spec.l()).min(m);
                    (lo..hi).map(|c| blocks.entry(r, c).norm_sqr()).sum::<f64>().sqrt().ln()
                })
                .sum::<f64>()
                / m as f64;
            Ok((u, rows - u))
        })
        .collect::<Result<_>>()?;
    let max_u = out.iter().map(|o| o.0).fold(f64::NEG_INFINITY, f64::max);
    let slack = out
        .iter()
        .filter(|o| o.0.is_finite())
        .map(|o| o.1)
        .fold(f64::INFINITY, f64::min);
    Ok((max_u, slack))
}

/// `max_z u_N(z) - log|λ|` on `|z| = radius`, at `N` and `2N`.
pub fn hadamard_upper_check(spec: &OperatorSpec, n: usize, energy: f64, radius: f64, grid: usize) -> Result<HadamardCheck> {
    if !(radius > 1.0 - spec.annulus_r() && radius < 1.0 + spec.annulus_r()) {
        return Err(LabError::domain(format!("radius {radius} outside the annulus")));
    }
    let log_lam = spec.lambda().abs().ln();
    let (u1, s1) = hadamard_run(spec, n, energy, radius, grid)?;
    let (u2, s2) = hadamard_run(spec, 2 * n, energy, radius, grid)?;
    let max_gap = [u1 - log_lam, u2 - log_lam];
    let stable = stable_on_log_scale(max_gap[0], max_gap[1], spec.lambda(), 0.1);
    Ok(HadamardCheck {
        radius,
        lambda: spec.lambda(),
        ns: [n, 2 * n],
        max_gap,
        min_hadamard_slack: s1.min(s2),
        stable,
        verdict: Verdict::from_bool(stable),
    })
}

/// Relative tolerance on `log|det(I + g)| ≥ m log(1 - ‖g‖)` for rounding in LU and SVD.
const DET_NORM_TOL: f64 = 1e-10;

/// One instance of `|det(I + g)| ≥ (1 - ‖g‖)^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetNormOutcome {
    pub m: usize,
    pub norm: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub holds: bool,
}

/// Checks the determinant–norm inequality; `‖g‖ ≥ 1` is a domain error.
pub fn det_norm_inequality_check(g: &DMatrix<f64>) -> Result<DetNormOutcome> {
    if !g.is_square() {
        return Err(LabError::domain("g must be square"));
    }
    let m = g.nrows();
    let norm = op_norm(g);
    if norm >= 1.0 {
        return Err(LabError::domain(format!("‖g‖ = {norm} is not below 1")));
    }
    let log_lhs = log_det(&(DMatrix::identity(m, m) + g)).log_abs;
    let log_rhs = m as f64 * (1.0 - norm).ln();
    let holds = log_lhs >= log_rhs - DET_NORM_TOL * log_rhs.abs().max(1.0);
    Ok(DetNormOutcome {
        m,
        norm,
        log_lhs,
        log_rhs,
        holds,
    })
}

/// Seeded campaign over random contractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetNormCampaign {
    pub trials: usize,
    pub violations: usize,
    /// Smallest `log_lhs - log_rhs`.
    pub min_log_slack: f64,
}

/// Random `g` of size `1..=max_m`: Gaussian entries rescaled to a uniform norm in `(0, 1)`.
/// Every fourth trial is the equality case `g = -t·I`.
pub fn det_norm_campaign(trials: usize, max_m: usize, seed: u64) -> Result<DetNormCampaign> {
    let outcomes: Vec<DetNormOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let m = rng.random_range(1..=max_m);
            let t: f64 = rng.random_range(0.0..0.999);
            let g = if i % 4 == 3 {
                DMatrix::identity(m, m) * -t
            } else {
                let raw = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
                let nrm = op_norm(&raw);
                if nrm == 0.0 {
                    raw
                } else {
                    raw * (t / nrm)
                }
            };
            det_norm_inequality_check(&g)
        })
        .collect::<Result<_>>()?;
    Ok(DetNormCampaign {
        trials,
        violations: outcomes.iter().filter(|o| !o.holds).count(),
        min_log_slack: outcomes
            .iter()
            .map(|o| o.log_lhs - o.log_rhs)
            .fold(f64::INFINITY, f64::min),
    })
}

/// Outcome of the ε₀ circle scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eps0Scan {
    pub y0: f64,
    pub eps0: f64,
    pub t_max: f64,
    /// `(y, min_{z,t} |det(F(z) - t)|^{1/l})` for every candidate radius.
    pub radii: Vec<(f64, f64)>,
}

/// Minimum of `|det(F(z) - t)|^{1/l}` over the circle `|z| = 1 + y` and `t ∈ [-t_max, t_max]`.
///
/// The t-grid has spacing `1e-3 · 2 t_max`; real parts of the eigenvalues of
/// `F(z)` inside the range are added as candidates so exact zeros are not
/// stepped over.
pub fn circle_minimum(f: &TrigMatrixPoly, y: f64, t_max: f64, circle_grid: usize) -> f64 {
    let l = f.dim();
    let steps = 2000usize;
    let ts: Vec<f64> = (0..=steps)
        .map(|k| -t_max + 2.0 * t_max * k as f64 / steps as f64)
        .collect();
    (0..circle_grid)
        .into_par_iter()
        .map(|k| {
            let fz = f.eval_at(CirclePoint::new(1.0 + y, k as f64 / circle_grid as f64));
            // det(F - t) = (-1)^l det(t - F)
            let cp = char_poly(&fz);
            let eig = fz.clone().schur().eigenvalues();
            let extra = eig
                .into_iter()
                .flat_map(|v| v.iter().map(|c| c.re).collect::<Vec<_>>())
                .filter(|t| t.abs() <= t_max);
            ts.iter()
                .copied()
                .chain(extra)
                .map(|t| poly_eval(&cp, Complex64::new(t, 0.0)).norm())
                .fold(f64::INFINITY, f64::min)
                .powf(1.0 / l as f64)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Scans radii `y ∈ [δ/2, 2δ]` and keeps the one with the largest circle minimum.
pub fn epsilon0_scan(f: &TrigMatrixPoly, delta: f64, t_max: f64, circle_grid: usize) -> Result<Eps0Scan> {
    if !(delta > 0.0) || !(t_max >= 0.0) {
        return Err(LabError::domain("delta must be positive and t_max nonnegative"));
    }
    let radii: Vec<(f64, f64)> = (0..EPS0_RADII)
        .map(|i| {
            let y = 0.5 * delta + 1.5 * delta * i as f64 / (EPS0_RADII - 1) as f64;
            (y, circle_minimum(f, y, t_max, circle_grid))
        })
        .collect();
    let (y0, eps0) = radii
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
    if !(eps0 >= EPS0_FLOOR) {
        return Err(LabError::NoGoodCircle { best: eps0.max(0.0) });
    }
    Ok(Eps0Scan {
        y0,
        eps0,
        t_max,
        radii,
    })
}

/// `H_N(z) - E = λ D_N(z) + B_N(z)` with `D_N = blockdiag(F_j(z) - E/λ)`.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub lambda: f64,
    pub d_blocks: Vec<DMatrix<Complex64>>,
    pub b: DMatrix<Complex64>,
    pub h: DMatrix<Complex64>,
}

impl Factorization {
    pub fn new(spec: &OperatorSpec, p: CirclePoint, n: usize, energy: f64) -> Result<Self> {
        let blocks = DirichletBlocks::assemble(spec, p, 1, n as i64, energy)?;
        let h = blocks.to_dense();
        let l = spec.l();
        let lam = spec.lambda();
        let shift = Complex64::new(energy / lam, 0.0);
        let d_blocks: Vec<DMatrix<Complex64>> = (1..=n as i64)
            .map(|j| {
                let mut d = spec.f().eval_at(spec.block_point(p, j));
                for i in 0..l {
                    d[(i, i)] -= shift;
                }
                d
            })
            .collect();
        let mut b = h.clone();
        for (j, d) in d_blocks.iter().enumerate() {
            let mut view = b.view_mut((j * l, j * l), (l, l));
            view -= d * Complex64::new(lam, 0.0);
        }
        Ok(Factorization {
            lambda: lam,
            d_blocks,
            b,
            h,
        })
    }

    /// `Σ_j log|det(F_j - E/λ)|`.
    pub fn log_det_d(&self) -> f64 {
        self.d_blocks.iter().map(|d| log_det(d).log_abs).sum()
    }

    fn d_inverse(&self) -> Option<DMatrix<Complex64>> {
        let l = self.d_blocks.first().map_or(0, |d| d.nrows());
        let m = l * self.d_blocks.len();
        let mut inv = DMatrix::zeros(m, m);
        for (j, d) in self.d_blocks.iter().enumerate() {
            inv.view_mut((j * l, j * l), (l, l)).copy_from(&d.clone().try_inverse()?);
        }
        Some(inv)
    }

    /// `λ^{-1} D_N^{-1} B_N`.
    pub fn perturbation(&self) -> Option<DMatrix<Complex64>> {
        Some(self.d_inverse()? * &self.b / Complex64::new(self.lambda, 0.0))
    }

    /// `|exp(rhs - lhs) - 1|` for the multiplicative reconstruction of `|det(H - E)|`.
    pub fn reconstruction_error(&self) -> Option<f64> {
        let m = self.h.nrows();
        let g = self.perturbation()?;
        let lhs = log_det(&self.h).log_abs;
        let rhs = m as f64 * self.lambda.abs().ln()
            + self.log_det_d()
            + log_det(&(DMatrix::identity(m, m) + g)).log_abs;
        Some((rhs - lhs).exp_m1().abs())
    }
}

/// `2 · max_z ‖D_N^{-1} B_N‖` over the circle `|z| = 1 + y0`: the smallest
/// `|λ|` with `‖λ^{-1} D_N^{-1} B_N‖ ≤ 1/2` there.
pub fn lambda0_estimate(spec: &OperatorSpec, n: usize, energy: f64, y0: f64, grid: usize) -> Result<f64> {
    let vals: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|k| {
            let p = CirclePoint::new(1.0 + y0, (k as f64 + 0.5) / grid as f64);
            let fac = Factorization::new(spec, p, n, energy)?;
            Ok(fac
                .perturbation()
                .map_or(f64::INFINITY, |g| 2.0 * spec.lambda().abs() * op_norm(&g)))
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Phase average of `u_N` over `|z| = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAverage {
    pub n: usize,
    pub energy: f64,
    pub lambda: f64,
    pub average: f64,
    /// `log|λ| - average`.
    pub deficit: f64,
    pub sentinels: usize,
    pub samples: usize,
}

/// Equispaced quadrature of `∫ u_N(x) dx`; `quadrature` must be a power of two ≥ 512.
pub fn phase_average(spec: &OperatorSpec, n: usize, energy: f64, quadrature: usize) -> Result<PhaseAverage> {
    if quadrature < 512 {
        return Err(LabError::domain("quadrature size must be at least 512"));
    }
    let s = SubharmonicSamples::collect(spec, n, energy, 1.0, quadrature)?;
    let average = s.mean();
    Ok(PhaseAverage {
        n,
        energy,
        lambda: spec.lambda(),
        average,
        deficit: spec.lambda().abs().ln() - average,
        sentinels: s.sentinels(),
        samples: quadrature,
    })
}

/// Lower-bound campaign for one energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub energy: f64,
    pub at_n: PhaseAverage,
    pub at_2n: PhaseAverage,
    pub at_10_lambda: PhaseAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    pub n: usize,
    pub lambda: f64,
    pub rows: Vec<LowerBoundRow>,
    pub max_deficit: f64,
    pub sentinel_fraction: f64,
    pub eps0: Option<Eps0Scan>,
    pub lambda0: Option<f64>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl LowerBoundCheck {
    pub fn to_report(&self) -> BoundReport {
        let mut r = BoundReport::new("verify-lower")
            .value("n", self.n as f64)
            .value("lambda", self.lambda)
            .value("max_deficit", self.max_deficit)
            .value("sentinel_fraction", self.sentinel_fraction)
            .threshold("relative_n_stability_on_log_lambda_scale", 0.1)
            .threshold("max_deficit_change_lambda_x10", 0.2)
            .threshold("sentinel_fraction_warn", 0.01)
            .verdict(self.verdict);
        if let Some(e) = &self.eps0 {
            r = r.value("eps0", e.eps0).value("y0", e.y0);
        }
        if let Some(l0) = self.lambda0 {
            r = r.value("lambda0_estimate", l0);
        }
        for row in &self.rows {
            r = r
                .value(&format!("deficit_E{}_n{}", row.energy, row.at_n.n), row.at_n.deficit)
                .value(&format!("deficit_E{}_n{}", row.energy, row.at_2n.n), row.at_2n.deficit)
                .value(&format!("deficit_E{}_lambda_x10", row.energy), row.at_10_lambda.deficit);
        }
        for n in &self.notes {
            r = r.note(n.clone());
        }
        r
    }
}

/// Phase-averaged lower bound at `N`, `2N` and `10λ` for each energy.
///
/// Passes when every deficit is finite, the deficit moves by at most 10% of
/// `max(1, log|λ|)` from `N` to `2N` and by less than 0.2 from `λ` to `10λ`.
/// More than 1% sentinel samples downgrades to a warning. The ε₀ scan and λ₀
/// estimate are attached when the scan succeeds.
pub fn verify_lower_bound(spec: &OperatorSpec, n: usize, energies: &[f64], quadrature: usize) -> Result<LowerBoundCheck> {
    let big = spec.with_lambda(10.0 * spec.lambda())?;
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &e in energies {
        rows.push(LowerBoundRow {
            energy: e,
            at_n: phase_average(spec, n, e, quadrature)?,
            at_2n: phase_average(spec, 2 * n, e, quadrature)?,
            at_10_lambda: phase_average(&big, n, 10.0 * e, quadrature)?,
        });
    }
    let all = rows.iter().flat_map(|r| [&r.at_n, &r.at_2n, &r.at_10_lambda]);
    let (sent, total) = all.fold((0, 0), |(s, t), p| (s + p.sentinels, t + p.samples));
    let sentinel_fraction = sent as f64 / total.max(1) as f64;
    let max_deficit = rows
        .iter()
        .flat_map(|r| [r.at_n.deficit, r.at_2n.deficit])
        .fold(f64::NEG_INFINITY, f64::max);
    let ok = rows.iter().all(|r| {
        r.at_n.deficit.is_finite()
            && stable_on_log_scale(r.at_n.deficit, r.at_2n.deficit, spec.lambda(), 0.1)
            && (r.at_10_lambda.deficit - r.at_n.deficit).abs() < 0.2
    });
    let mut verdict = Verdict::from_bool(ok);
    if sentinel_fraction > 0.01 {
        verdict = verdict.and(Verdict::Warn);
        notes.push(format!("{:.2}% of samples hit the determinant sentinel", 100.0 * sentinel_fraction));
    }

    let e_max = energies.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let t_max = spec.f().sup_norm(1.0, 256) + e_max / spec.lambda().abs();
    let delta = 0.05 * spec.annulus_r();
    let (eps0, lambda0) = match epsilon0_scan(spec.f(), delta, t_max, 256) {
        Ok(scan) => {
            let l0 = energies
                .iter()
                .map(|&e| lambda0_estimate(spec, n, e, scan.y0, 64))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            if spec.lambda().abs() < l0 {
                verdict = verdict.and(Verdict::Warn);
                notes.push(format!("|lambda| is below the lambda0 estimate {l0:.3}"));
            }
            (Some(scan), Some(l0))
        }
        Err(e) => {
            notes.push(e.to_string());
            verdict = verdict.and(Verdict::Warn);
            (None, None)
        }
    };
    Ok(LowerBoundCheck {
        n,
        lambda: spec.lambda(),
        rows,
        max_deficit,
        sentinel_fraction,
        eps0,
        lambda0,
        verdict,
        notes,
    })
}

/// `min_z (1/Nl) log|det D_N(z)| - log ε₀` over the circle `|z| = 1 + y0`.
pub fn det_d_margin(spec: &OperatorSpec, n: usize, energy: f64, scan: &Eps0Scan, grid: usize) -> Result<f64> {
    let m = (n * spec.l()) as f64;
    let vals: Vec<f64> = (0..grid)
        .into_par_iter()
        .map(|k| {
            let p = CirclePoint::new(1.0 + scan.y0, (k as f64 + 0.5) / grid as f64);
            Ok(Factorization::new(spec, p, n, energy)?.log_det_d() / m - scan.eps0.ln())
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(f64::INFINITY, f64::min))
}

/// Radial means and the worst convexity defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyCheck {
    pub radii: Vec<f64>,
    pub means: Vec<f64>,
    /// `max (m(s₂) - interpolation)` over consecutive triples; ≤ 0 when convex.
    pub max_defect: f64,
    pub sentinels: usize,
    pub verdict: Verdict,
}

impl HardyCheck {
    pub fn to_report(&self) -> BoundReport {
        let mut r = BoundReport::new("hardy-check")
            .value("max_convexity_defect", self.max_defect)
            .value("sentinels", self.sentinels as f64)
            .threshold("tolerance", HARDY_TOL)
            .verdict(self.verdict);
        for (s, m) in self.radii.iter().zip(&self.means) {
            r = r.value(&format!("mean_at_{s}"), *m);
        }
        r
    }
}

/// Convexity of `means` as a function of `log s`, for radii sorted ascending.
pub fn convexity_defect(radii: &[f64], means: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 1..radii.len().saturating_sub(1) {
        let (a, b, c) = (radii[i - 1].ln(), radii[i].ln(), radii[i + 1].ln());
        let w = (b - a) / (c - a);
        let interp = (1.0 - w) * means[i - 1] + w * means[i + 1];
        worst = worst.max(means[i] - interp);
    }
    worst
}

/// Radial-convexity test for circle means of an arbitrary sampler.
pub fn hardy_convexity_with<S>(radii: &[f64], count: usize, sampler: S) -> Result<HardyCheck>
where
    S: Fn(CirclePoint) -> Result<f64> + Sync,
{
    if radii.len() < 5 {
        return Err(LabError::domain("at least 5 radii are required"));
    }
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut means = Vec::new();
    let mut sentinels = 0;
    for &s in &radii {
        let v = SubharmonicSamples::collect_with(s, count, &sampler)?;
        sentinels += v.iter().filter(|x| !x.is_finite()).count();
        means.push(finite_mean(&v));
    }
    let max_defect = convexity_defect(&radii, &means);
    Ok(HardyCheck {
        verdict: Verdict::from_bool(max_defect <= HARDY_TOL),
        radii,
        means,
        max_defect,
        sentinels,
    })
}

/// Radii must lie in `(1, 1 + r)`.
pub fn hardy_convexity_check(spec: &OperatorSpec, n: usize, energy: f64, radii: &[f64], count: usize) -> Result<HardyCheck> {
    if let Some(s) = radii.iter().find(|&&s| !(s > 1.0 && s < 1.0 + spec.annulus_r())) {
        return Err(LabError::domain(format!("radius {s} outside (1, 1 + r)")));
    }
    hardy_convexity_with(radii, count, |p| u_value(spec, p, n, energy))
}

/// Sum of `log|x|` over the entries, used by diagonal oracles.
pub fn sum_log_abs(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs().ln()).sum()
}
