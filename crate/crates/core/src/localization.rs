//! Eigenvector decay on finite boxes, the Poisson identity, the
//! distance-to-spectrum bound and the transfer-cocycle Lyapunov exponent.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::green::greens;
use crate::linalg::{min_singular, op_norm};
use crate::operator::{BlockSeq, DirichletBlocks, OperatorSpec};
use crate::report::{median, BoundReport, Verdict};
use crate::torus::CirclePoint;

/// Blocks at or below this norm are ignored by the decay fit.
pub const FIT_FLOOR: f64 = 1e-14;

/// Least-squares fit of `log‖ψ_n‖` against `|n - n*|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub peak: i64,
    /// Negative slope; `None` with fewer than 4 usable blocks.
    pub rate: Option<f64>,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Fits the decay rate of `ψ` away from its largest block.
///
/// Uses blocks with `‖ψ_n‖ > 1e-14` and `|n - n*| ≥ 2`.
pub fn decay_rate(psi: &BlockSeq) -> DecayFit {
    let norms: Vec<f64> = psi.blocks.iter().map(|b| b.norm()).collect();
    let (imax, _) = norms
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let peak = psi.start + imax as i64;
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v > FIT_FLOOR && i.abs_diff(imax) >= 2)
        .map(|(i, &v)| (i.abs_diff(imax) as f64, v.ln()))
        .collect();
    let points = pts.len();
    if points < 4 {
        return DecayFit {
            peak,
            rate: None,
            intercept: f64::NAN,
            r2: f64::NAN,
            points,
        };
    }
    let n = points as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return DecayFit {
            peak,
            rate: None,
            intercept: f64::NAN,
            r2: f64::NAN,
            points,
        };
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    DecayFit {
        peak,
        rate: Some(-slope),
        intercept: my - slope * mx,
        r2,
        points,
    }
}

/// A normalised eigenvector of `H_{[a,b]}(x)` with its decay fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub energy: f64,
    pub psi: BlockSeq,
    pub fit: DecayFit,
}

/// Real Dirichlet matrix at phase `x` on `[a, b]`.
pub fn real_dirichlet(spec: &OperatorSpec, x: f64, a: i64, b: i64, energy: f64) -> Result<DMatrix<f64>> {
    Ok(DirichletBlocks::assemble(spec, CirclePoint::phase(x), a, b, energy)?
        .to_dense()
        .map(|v| v.re))
}

/// Full symmetric eigendecomposition, energies ascending.
pub fn eigensolve(spec: &OperatorSpec, x: f64, a: i64, b: i64) -> Result<Vec<EigenPair>> {
    let h = real_dirichlet(spec, x, a, b, 0.0)?;
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    Ok(order
        .into_iter()
        .map(|i| {
            let v = eig.eigenvectors.column(i);
            let psi = BlockSeq::from_flat(spec.l(), a, v.as_slice());
            EigenPair {
                energy: eig.eigenvalues[i],
                fit: decay_rate(&psi),
                psi,
            }
        })
        .collect())
}

/// `‖H ψ - E ψ‖₂` on the box the pair came from.
pub fn eigen_residual(spec: &OperatorSpec, x: f64, pair: &EigenPair) -> Result<f64> {
    let (a, b) = (pair.psi.start, pair.psi.end());
    let h = real_dirichlet(spec, x, a, b, pair.energy)?;
    Ok((h * pair.psi.flat(a, b)).norm())
}

/// `‖ψ_j - G_{(j,a)} W_aᵀ ψ_{a-1} - G_{(j,b)} W_{b+1} ψ_{b+1}‖₂`.
pub fn poisson_identity_residual(spec: &OperatorSpec, x: f64, psi: &BlockSeq, energy: f64, a: i64, b: i64, j: i64) -> Result<f64> {
    if j < a || j > b {
        return Err(LabError::domain(format!("j = {j} outside [{a}, {b}]")));
    }
    let g = greens(spec, x, a, b, energy)?;
    let p = CirclePoint::phase(x);
    let w = |n: i64| spec.w().eval_at(spec.block_point(p, n)).map(|v| v.re);
    let rhs = g.block(j, a) * w(a).transpose() * psi.get(a - 1) + g.block(j, b) * w(b + 1) * psi.get(b + 1);
    Ok((psi.get(j) - rhs).norm())
}

/// `dist(E, σ(H_{(-N₀, N₀)}(x))) ≤ 2‖W‖_sup η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceCheck {
    pub distance: f64,
    pub eta: f64,
    pub w_sup: f64,
    /// `2‖W‖_sup η`.
    pub bound: f64,
    /// `2‖W‖_sup ‖G‖ η = bound / distance`; at least 1 when the bound holds.
    pub chain: f64,
    pub holds: bool,
}

/// Checks the distance bound on the open interval `(-N₀, N₀)`.
pub fn distance_to_spectrum_check(spec: &OperatorSpec, x: f64, n0: i64, energy: f64, eta: f64) -> Result<DistanceCheck> {
    if n0 < 1 {
        return Err(LabError::domain("N0 must be at least 1"));
    }
    let h = real_dirichlet(spec, x, -n0 + 1, n0 - 1, 0.0)?;
    let distance = h
        .symmetric_eigenvalues()
        .iter()
        .map(|e| (e - energy).abs())
        .fold(f64::INFINITY, f64::min);
    let w_sup = spec.w().sup_norm(1.0, 1024);
    let bound = 2.0 * w_sup * eta;
    Ok(DistanceCheck {
        distance,
        eta,
        w_sup,
        bound,
        chain: bound / distance,
        holds: distance <= bound * (1.0 + 1e-12),
    })
}

/// Generalised-eigenvector surrogate: an eigenvector of `H_{[-K, K]}(x)`
/// rescaled to `‖ψ₀‖ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub energy: f64,
    pub psi: BlockSeq,
    /// `max(‖ψ_{-N₀}‖, ‖ψ_{N₀}‖)`.
    pub eta: f64,
}

/// Picks the eigenvector of `H_{[-outer, outer]}` with the largest `‖ψ₀‖`.
pub fn surrogate_from_box(spec: &OperatorSpec, x: f64, n0: i64, outer: i64) -> Result<Surrogate> {
    if outer <= n0 {
        return Err(LabError::Surrogate(format!("outer box {outer} must exceed N0 = {n0}")));
    }
    let pairs = eigensolve(spec, x, -outer, outer)?;
    let best = pairs
        .into_iter()
        .max_by(|p, q| p.psi.block_norm(0).partial_cmp(&q.psi.block_norm(0)).unwrap())
        .ok_or_else(|| LabError::Surrogate("empty box".into()))?;
    let c = best.psi.block_norm(0);
    if c < 1e-8 {
        return Err(LabError::Surrogate(format!("largest ‖ψ_0‖ is {c:.3e}")));
    }
    let mut psi = best.psi;
    for b in psi.blocks.iter_mut() {
        *b /= c;
    }
    let eta = psi.block_norm(-n0).max(psi.block_norm(n0));
    Ok(Surrogate {
        energy: best.energy,
        psi,
        eta,
    })
}

/// Top exponents of the transfer cocycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    pub energy: f64,
    pub steps: usize,
    /// Non-increasing.
    pub exponents: Vec<f64>,
    pub flagged: usize,
}

/// `σ_min(W)/‖W‖` below this flags a step.
pub const SINGULAR_W: f64 = 1e-10;

/// Iterates `(ψ_{n+1}, ψ_n) = T_n (ψ_n, ψ_{n-1})` from phase `x`, with
/// `ψ_{n+1} = W_{n+1}^{-1}((V_n - E) ψ_n - W_nᵀ ψ_{n-1})`, and QR
/// re-orthonormalisation of an `l`-frame every `period` steps.
pub fn lyapunov_diagnostic(spec: &OperatorSpec, energy: f64, x: f64, steps: usize, period: usize) -> Result<LyapunovResult> {
    if steps < 10_000 {
        return Err(LabError::domain("at least 10^4 steps are required"));
    }
    if period == 0 {
        return Err(LabError::domain("re-orthonormalisation period must be positive"));
    }
    let l = spec.l();
    let v = spec.v();
    let p = CirclePoint::phase(x);
    let real = |m: &crate::torus::TrigMatrixPoly, n: i64| m.eval_at(spec.block_point(p, n)).map(|z| z.re);
    let mut frame = DMatrix::<f64>::identity(2 * l, l);
    let mut sums = vec![0.0; l];
    let mut flagged = 0usize;
    let mut w_here = real(spec.w(), 0);
    for n in 0..steps as i64 {
        let w_next = real(spec.w(), n + 1);
        if min_singular(&w_next) < SINGULAR_W * op_norm(&w_next).max(f64::MIN_POSITIVE) {
            flagged += 1;
            if flagged as f64 > 1e-3 * steps as f64 {
                return Err(LabError::SingularWeight { flagged, steps });
            }
        }
        let w_inv = w_next
            .clone()
            .pseudo_inverse(0.0)
            .map_err(|e| LabError::domain(e.to_string()))?;
        let mut vn = real(&v, n);
        for i in 0..l {
            vn[(i, i)] -= energy;
        }
        let top = frame.rows(0, l).into_owned();
        let bottom = frame.rows(l, l).into_owned();
        let next = &w_inv * (vn * &top - w_here.transpose() * bottom);
        frame.rows_mut(0, l).copy_from(&next);
        frame.rows_mut(l, l).copy_from(&top);
        if (n + 1) as usize % period == 0 || n as usize + 1 == steps {
            let qr = frame.clone().qr();
            let r = qr.r();
            for (i, s) in sums.iter_mut().enumerate() {
                *s += r[(i, i)].abs().ln();
            }
            frame = qr.q();
        }
        w_here = w_next;
    }
    let mut exponents: Vec<f64> = sums.iter().map(|s| s / steps as f64).collect();
    exponents.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(LyapunovResult {
        energy,
        steps,
        exponents,
        flagged,
    })
}

/// Which peaks count as well inside `[1, N]`: `lower ≤ n* ≤ upper_fraction · N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellInside {
    pub lower: i64,
    pub upper_fraction: f64,
}

impl Default for WellInside {
    fn default() -> Self {
        // 2a ≤ n* ≤ b/2 with [a, b] = [1, N]
        WellInside {
            lower: 2,
            upper_fraction: 0.5,
        }
    }
}

/// Per-eigenvector row of a localization campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub energy: f64,
    pub peak: i64,
    pub rate: Option<f64>,
    pub r2: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub spec_digest: String,
    pub n: usize,
    pub x: f64,
    pub omega: f64,
    pub lambda: f64,
    pub energy_window: (f64, f64),
    /// `½ |log|λ||`.
    pub rate_threshold: f64,
    pub rows: Vec<DecayRow>,
    pub fraction_localized: f64,
    pub median_rate: f64,
    /// `median_rate / |log|λ||`.
    pub median_ratio: f64,
    pub verdict: Verdict,
}

impl LocalizationReport {
    pub fn to_report(&self) -> BoundReport {
        BoundReport::new("localize")
            .value("n", self.n as f64)
            .value("x", self.x)
            .value("omega", self.omega)
            .value("lambda", self.lambda)
            .value("well_inside_vectors", self.rows.len() as f64)
            .value("fraction_localized", self.fraction_localized)
            .value("median_rate", self.median_rate)
            .value("median_ratio", self.median_ratio)
            .threshold("rate_threshold", self.rate_threshold)
            .threshold("min_fraction", 0.9)
            .verdict(self.verdict)
            .note(format!("spec digest {}", self.spec_digest))
    }
}

/// Eigenvectors of `H_{[1,N]}(x)` peaked well inside the box and with energy
/// in the window; passes when at least 90% decay at rate `≥ ½|log|λ||`.
pub fn localization_campaign(
    spec: &OperatorSpec,
    n: usize,
    x: f64,
    energy_window: (f64, f64),
    inside: WellInside,
) -> Result<LocalizationReport> {
    if n < 4 {
        return Err(LabError::domain("box too small"));
    }
    let log_lam = spec.lambda().abs().ln().abs();
    let threshold = 0.5 * log_lam;
    let hi = (inside.upper_fraction * n as f64).floor() as i64;
    let rows: Vec<DecayRow> = eigensolve(spec, x, 1, n as i64)?
        .into_iter()
        .filter(|p| p.energy >= energy_window.0 && p.energy <= energy_window.1)
        .filter(|p| p.fit.peak >= inside.lower && p.fit.peak <= hi)
        .map(|p| DecayRow {
            energy: p.energy,
            peak: p.fit.peak,
            rate: p.fit.rate,
            r2: p.fit.r2,
            passes: p.fit.rate.is_some_and(|c| c >= threshold),
        })
        .collect();
    let fraction = if rows.is_empty() {
        0.0
    } else {
        rows.iter().filter(|r| r.passes).count() as f64 / rows.len() as f64
    };
    let rates: Vec<f64> = rows.iter().filter_map(|r| r.rate).collect();
    let med = median(&rates);
    Ok(LocalizationReport {
        spec_digest: spec.digest(),
        n,
        x,
        omega: spec.omega(),
        lambda: spec.lambda(),
        energy_window,
        rate_threshold: threshold,
        fraction_localized: fraction,
        median_rate: med,
        median_ratio: med / log_lam,
        verdict: Verdict::from_bool(fraction >= 0.9),
        rows,
    })
}

/// Lyapunov exponents over an energy grid.
pub fn lyapunov_scan(spec: &OperatorSpec, energies: &[f64], x: f64, steps: usize, period: usize) -> Result<Vec<LyapunovResult>> {
    energies
        .par_iter()
        .map(|&e| lyapunov_diagnostic(spec, e, x, steps, period))
        .collect()
}

/// Block norms `‖ψ_n‖` for plotting.
pub fn block_norms(psi: &BlockSeq) -> DVector<f64> {
    DVector::from_iterator(psi.blocks.len(), psi.blocks.iter().map(|b| b.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{diagonal_cos_spec, random_spec};
    use crate::operator::golden_mean;
    use crate::torus::TrigMatrixPoly;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn amo(lambda: f64) -> OperatorSpec {
        OperatorSpec::almost_mathieu(lambda, golden_mean())
    }

    fn synthetic(c: f64, len: usize, center: usize) -> BlockSeq {
        let flat: Vec<f64> = (0..len).map(|i| (-c * i.abs_diff(center) as f64).exp()).collect();
        let mut s = BlockSeq::from_flat(1, 0, &flat);
        let nrm = s.norm();
        for b in s.blocks.iter_mut() {
            *b /= nrm;
        }
        s
    }

    #[test]
    fn eigensolve_examples() {
        let one = eigensolve(&amo(2.0), 0.0, 0, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].energy - 4.0).abs() < 1e-14);

        let g = golden_mean();
        let (p, q) = (4.0 * (TAU * g).cos(), 4.0 * (2.0 * TAU * g).cos());
        let mid = 0.5 * (p + q);
        let rad = (0.25 * (p - q).powi(2) + 1.0).sqrt();
        let two = eigensolve(&amo(2.0), 0.0, 1, 2).unwrap();
        assert!((two[0].energy - (mid - rad)).abs() < 1e-13);
        assert!((two[1].energy - (mid + rad)).abs() < 1e-13);
    }

    #[test]
    fn eigenvectors_are_orthonormal_with_small_residual() {
        let spec = random_spec(2, 3.0, 5);
        let pairs = eigensolve(&spec, 0.3, 1, 20).unwrap();
        let q = DMatrix::from_columns(&pairs.iter().map(|p| p.psi.flat(1, 20)).collect::<Vec<_>>());
        assert!((q.transpose() * &q - DMatrix::identity(40, 40)).amax() < 1e-10);
        let hnorm = op_norm(&real_dirichlet(&spec, 0.3, 1, 20, 0.0).unwrap());
        for p in &pairs {
            assert!(eigen_residual(&spec, 0.3, p).unwrap() <= 1e-8 * hnorm);
        }
        assert!(pairs.windows(2).all(|w| w[0].energy <= w[1].energy));
    }

    #[test]
    fn decay_rate_examples() {
        let fit = decay_rate(&synthetic(1.0, 31, 15));
        assert!((fit.rate.unwrap() - 1.0).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert_eq!(fit.peak, 15);

        let flat = synthetic(0.0, 30, 0);
        assert!(decay_rate(&flat).rate.unwrap().abs() < 1e-12);

        let short = synthetic(1.0, 4, 0);
        assert_eq!(decay_rate(&short).rate, None);
    }

    #[test]
    fn poisson_identity_examples() {
        let spec = random_spec(2, 1.5, 2);
        let x = 0.17;
        // support outside [a-1, b+1]
        let far = BlockSeq::delta(2, 30, 0);
        assert_eq!(poisson_identity_residual(&spec, x, &far, 0.3, 5, 10, 7).unwrap(), 0.0);

        let (a, b) = (5, 10);
        let pairs = eigensolve(&spec, x, a - 2, b + 2).unwrap();
        for p in pairs.iter().step_by(5) {
            let r = poisson_identity_residual(&spec, x, &p.psi, p.energy, a, b, 7).unwrap();
            assert!(r <= 1e-8, "residual {r}");
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flat: Vec<f64> = (0..2 * (b - a + 3) as usize).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rand_psi = BlockSeq::from_flat(2, a - 1, &flat);
        let r = poisson_identity_residual(&spec, x, &rand_psi, 0.3, a, b, 7).unwrap();
        assert!(r > 1e-2);
        assert!(poisson_identity_residual(&spec, x, &rand_psi, 0.3, a, b, 11).is_err());
    }

    #[test]
    fn distance_bound_examples() {
        let spec = amo(10.0);
        let s = surrogate_from_box(&spec, 0.31, 12, 40).unwrap();
        assert!((s.psi.block_norm(0) - 1.0).abs() < 1e-12);
        let c = distance_to_spectrum_check(&spec, 0.31, 12, s.energy, s.eta).unwrap();
        assert!(c.holds && c.chain >= 1.0, "{c:?}");

        // exact eigenvalue of the inner box
        let inner = eigensolve(&spec, 0.31, -11, 11).unwrap();
        let c = distance_to_spectrum_check(&spec, 0.31, 12, inner[3].energy, 0.0).unwrap();
        assert!(c.distance < 1e-12 && c.holds);

        // delocalized: the inequality still holds
        let weak = amo(0.1);
        let s = surrogate_from_box(&weak, 0.31, 12, 40).unwrap();
        let c = distance_to_spectrum_check(&weak, 0.31, 12, s.energy, s.eta).unwrap();
        assert!(c.holds, "{c:?}");
    }

    #[test]
    fn free_case_lyapunov_is_zero() {
        // V ≡ 0, W ≡ 1, E = 0: T = [[0, -1], [1, 0]]
        let spec = OperatorSpec::new(
            1.0,
            golden_mean(),
            0.5,
            TrigMatrixPoly::identity(1),
            TrigMatrixPoly::zero(1),
            TrigMatrixPoly::zero(1),
        )
        .unwrap();
        let r = lyapunov_diagnostic(&spec, 0.0, 0.0, 10_000, 8).unwrap();
        assert!(r.exponents[0].abs() < 1e-12);
        assert!(lyapunov_diagnostic(&spec, 0.0, 0.0, 100, 8).is_err());
    }

    #[test]
    fn amo_lyapunov_is_log_lambda() {
        let spec = amo(10.0);
        let a = lyapunov_diagnostic(&spec, 0.0, 0.0, 100_000, 8).unwrap();
        let b = lyapunov_diagnostic(&spec, 0.0, 0.0, 100_000, 16).unwrap();
        assert!((a.exponents[0] / 10f64.ln() - 1.0).abs() < 0.1);
        assert!((a.exponents[0] - b.exponents[0]).abs() < 1e-3);
    }

    #[test]
    fn block_lyapunov_is_sorted_and_period_stable() {
        let spec = random_spec(2, 4.0, 9);
        let a = lyapunov_diagnostic(&spec, 0.5, 0.1, 20_000, 8).unwrap();
        let b = lyapunov_diagnostic(&spec, 0.5, 0.1, 20_000, 16).unwrap();
        assert!(a.exponents[0] >= a.exponents[1]);
        for (x, y) in a.exponents.iter().zip(&b.exponents) {
            assert!((x - y).abs() < 1e-3);
        }
    }

    #[test]
    fn singular_weight_aborts() {
        let spec = OperatorSpec::new(
            1.0,
            golden_mean(),
            0.5,
            TrigMatrixPoly::zero(1),
            TrigMatrixPoly::zero(1),
            TrigMatrixPoly::cos(1.0, 0.0),
        )
        .unwrap();
        assert!(matches!(
            lyapunov_diagnostic(&spec, 0.0, 0.0, 10_000, 8),
            Err(LabError::SingularWeight { .. })
        ));
    }

    #[test]
    fn campaign_examples() {
        let loc = localization_campaign(&amo(10.0), 300, 0.1234, (-f64::INFINITY, f64::INFINITY), WellInside::default()).unwrap();
        assert!(loc.fraction_localized >= 0.9, "{}", loc.fraction_localized);
        assert_eq!(loc.verdict, Verdict::Pass);

        let weak = localization_campaign(&amo(0.1), 300, 0.1234, (-f64::INFINITY, f64::INFINITY), WellInside::default()).unwrap();
        assert!(weak.fraction_localized < 0.05);
        assert_eq!(weak.verdict, Verdict::Fail);

        let block = diagonal_cos_spec(20.0, golden_mean(), &[0.0, 0.3]);
        let b = localization_campaign(&block, 150, 0.1234, (-f64::INFINITY, f64::INFINITY), WellInside::default()).unwrap();
        assert!(b.fraction_localized >= 0.9, "{}", b.fraction_localized);
    }

    #[test]
    fn consistency_triangle() {
        let spec = amo(10.0);
        let loc = localization_campaign(&spec, 300, 0.1234, (-f64::INFINITY, f64::INFINITY), WellInside::default()).unwrap();
        let lyap = lyapunov_diagnostic(&spec, 0.0, 0.0, 100_000, 8).unwrap().exponents[0];
        let log_lam = 10f64.ln();
        let close = |a: f64, b: f64| (a - b).abs() <= 0.2 * a.abs().max(b.abs());
        assert!(close(loc.median_rate, lyap));
        assert!(close(loc.median_rate, log_lam));
        assert!(close(lyap, log_lam));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn decay_rate_recovers_synthetic_rates(c in 0.1f64..5.0, center in 0usize..20) {
            // keep enough points above the fit floor: 30 / c sites
            let len = 41;
            let fit = decay_rate(&synthetic(c, len, center));
            prop_assert!((fit.rate.unwrap() - c).abs() < 1e-6);
        }

        #[test]
        fn poisson_identity_on_random_probes(seed in 0u64..10_000, l in 1usize..=2, lam in 0.5f64..3.0) {
            let spec = random_spec(l, lam, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = rng.random_range(-5i64..5);
            let b = a + rng.random_range(1i64..6);
            let x: f64 = rng.random_range(0.0..1.0);
            let pairs = eigensolve(&spec, x, a - 2, b + 2).unwrap();
            let p = &pairs[rng.random_range(0..pairs.len())];
            let j = rng.random_range(a..=b);
            match poisson_identity_residual(&spec, x, &p.psi, p.energy, a, b, j) {
                Ok(r) => prop_assert!(r <= 1e-8, "residual {}", r),
                Err(LabError::SpectralHit { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }
}
