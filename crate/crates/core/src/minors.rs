//! Minors of Dirichlet matrices through path systems.
//!
//! A path from row `α'` to column `α` is a tuple `(γ₁, …, γ_s)` of distinct
//! indices with `γ₁ = α'` and `γ_s = α`; its cost is `Π g_{γᵢ,γᵢ₊₁}`. The
//! `(α, α')` minor (row `α`, column `α'` removed) expands as
//!
//! ```text
//! det g_{¬α,¬α'} = (-1)^{α+α'} Σ_Γ (-1)^{|Γ|+1} cost(Γ) det g_{¬Γ,¬Γ}
//! ```
//!
//! The expansion is exponential in the matrix size and serves as a
//! correctness oracle and bound certifier for small `N·l`; campaign minors use
//! LU factorisation of the reduced matrix.

use std::collections::HashMap;

use nalgebra::{ComplexField, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{det_exact, BandLu, Field, LogDet};
use crate::operator::{block_of, DirichletBlocks, OperatorSpec};
use crate::report::{stable_on_log_scale, BoundReport, Verdict};
use crate::torus::CirclePoint;

/// Default cap on DFS nodes visited during enumeration.
pub const FRONTIER_CAP: u64 = 10_000_000;

/// A path `(γ₁, …, γ_s)` of distinct 1-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathSystem {
    pub vertices: Vec<usize>,
}

impl PathSystem {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// `Π g_{γᵢ, γᵢ₊₁}`.
    pub fn cost<T: Field>(&self, g: &DMatrix<T>) -> T {
        path_cost(g, &self.vertices)
    }

    /// Number of steps between adjacent blocks, `b(Γ)`.
    pub fn bounded_steps(&self, l: usize) -> usize {
        self.vertices
            .windows(2)
            .filter(|w| block_of(l, w[0]).abs_diff(block_of(l, w[1])) == 1)
            .count()
    }
}

fn path_cost<T: Field>(g: &DMatrix<T>, v: &[usize]) -> T {
    v.windows(2)
        .fold(T::one(), |acc, w| acc * g[(w[0] - 1, w[1] - 1)].clone())
}

/// Step predicate admitting every edge.
pub fn full_predicate(_: usize, _: usize) -> bool {
    true
}

/// Step predicate admitting only edges inside the tridiagonal block band.
pub fn tridiagonal_predicate(l: usize) -> impl Fn(usize, usize) -> bool + Copy {
    move |a, b| block_of(l, a).abs_diff(block_of(l, b)) <= 1
}

fn check_index(m: usize, i: usize, what: &str) -> Result<()> {
    if i == 0 || i > m {
        Err(LabError::domain(format!("{what} = {i} outside [1, {m}]")))
    } else {
        Ok(())
    }
}

/// `g` with the listed rows and columns (1-based) removed.
pub fn reduced<T: Field>(g: &DMatrix<T>, rows_out: &[usize], cols_out: &[usize]) -> DMatrix<T> {
    let rows: Vec<usize> = (0..g.nrows()).filter(|r| !rows_out.contains(&(r + 1))).collect();
    let cols: Vec<usize> = (0..g.ncols()).filter(|c| !cols_out.contains(&(c + 1))).collect();
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| g[(rows[i], cols[j])].clone())
}

/// The `(α, α')` minor: determinant of `g` without row `α` and column `α'`.
pub fn minor_direct<T: Field>(g: &DMatrix<T>, alpha: usize, alpha_prime: usize) -> Result<T> {
    let m = g.nrows();
    if !g.is_square() {
        return Err(LabError::domain("minor of a non-square matrix"));
    }
    check_index(m, alpha, "alpha")?;
    check_index(m, alpha_prime, "alpha'")?;
    Ok(det_exact(&reduced(g, &[alpha], &[alpha_prime])))
}

/// Log-magnitude of the `(α, α')` minor of a matrix with half-bandwidth `bw`,
/// via banded LU on the reduced matrix (half-bandwidth `bw + 1`).
pub fn log_minor_banded<T: ComplexField<RealField = f64> + Copy>(
    g: &DMatrix<T>,
    bw: usize,
    alpha: usize,
    alpha_prime: usize,
) -> LogDet {
    let m = g.nrows();
    if m == 1 {
        return LogDet::ONE;
    }
    let skip = |i: usize, out: usize| if i + 1 >= out { i + 1 } else { i };
    let k = (bw + 1).min(m - 2);
    BandLu::factor_with(m - 1, k, k, |r, c| g[(skip(r, alpha), skip(c, alpha_prime))]).log_det()
}

/// Visits every path from `α'` to `α` whose steps satisfy `allow`.
///
/// Fails with [`LabError::FrontierOverflow`] once more than `cap` search nodes
/// have been expanded; paths already visited are not retracted.
pub fn for_each_path<P, V>(m: usize, alpha_prime: usize, alpha: usize, allow: P, cap: u64, mut visit: V) -> Result<()>
where
    P: Fn(usize, usize) -> bool,
    V: FnMut(&[usize]),
{
    check_index(m, alpha, "alpha")?;
    check_index(m, alpha_prime, "alpha'")?;
    if alpha == alpha_prime {
        return Err(LabError::domain("paths need distinct endpoints"));
    }
    let mut used = vec![false; m + 1];
    let mut stack = vec![alpha_prime];
    used[alpha_prime] = true;
    let mut nodes = 0u64;

    // Explicit DFS: `next[i]` is the next candidate successor for stack level i.
    let mut next = vec![1usize];
    while let Some(&top) = stack.last() {
        let level = stack.len() - 1;
        let mut advanced = false;
        while next[level] <= m {
            let cand = next[level];
            next[level] += 1;
            if used[cand] || !allow(top, cand) {
                continue;
            }
            nodes += 1;
            if nodes > cap {
                return Err(LabError::FrontierOverflow { cap });
            }
            if cand == alpha {
                stack.push(cand);
                visit(&stack);
                stack.pop();
                continue;
            }
            used[cand] = true;
            stack.push(cand);
            next.push(1);
            advanced = true;
            break;
        }
        if !advanced {
            let done = stack.pop().unwrap();
            next.pop();
            if !stack.is_empty() {
                used[done] = false;
            }
        }
    }
    Ok(())
}

/// Collects every admissible path from `α'` to `α`.
pub fn enumerate_paths<P>(m: usize, alpha_prime: usize, alpha: usize, allow: P, cap: u64) -> Result<Vec<PathSystem>>
where
    P: Fn(usize, usize) -> bool,
{
    let mut out = Vec::new();
    for_each_path(m, alpha_prime, alpha, allow, cap, |v| {
        out.push(PathSystem { vertices: v.to_vec() })
    })?;
    Ok(out)
}

/// The `(α, α')` minor as a signed sum over admissible paths.
///
/// Complementary principal minors are memoised by vertex set; matrices larger
/// than 128 are rejected.
pub fn minor_via_paths<T, P>(g: &DMatrix<T>, alpha: usize, alpha_prime: usize, allow: P, cap: u64) -> Result<T>
where
    T: Field,
    P: Fn(usize, usize) -> bool,
{
    if alpha == alpha_prime {
        return minor_direct(g, alpha, alpha_prime);
    }
    let m = g.nrows();
    if m > 128 {
        return Err(LabError::domain("path expansion is limited to m ≤ 128"));
    }
    let mut memo: HashMap<u128, T> = HashMap::new();
    let mut sum = T::zero();
    for_each_path(m, alpha_prime, alpha, allow, cap, |v| {
        let cost = path_cost(g, v);
        if cost.is_zero() {
            return;
        }
        let mask = v.iter().fold(0u128, |acc, &i| acc | (1u128 << (i - 1)));
        let comp = memo
            .entry(mask)
            .or_insert_with(|| det_exact(&reduced(g, v, v)))
            .clone();
        let term = cost * comp;
        sum = if v.len() % 2 == 1 { sum.clone() + term } else { sum.clone() - term };
    })?;
    Ok(if (alpha + alpha_prime) % 2 == 0 { sum } else { -sum })
}

/// One `(phase, α, α')` cell of the upper-bound campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperCell {
    pub phase: f64,
    pub alpha: usize,
    pub alpha_prime: usize,
    pub block_distance: usize,
    pub log_abs_minor: f64,
    /// Smallest `C` making the bound hold for this cell; `None` for a vanishing minor.
    pub c_value: Option<f64>,
}

/// Upper-bound campaign at one volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperRun {
    pub n: usize,
    pub cells: Vec<UpperCell>,
    pub max_c: f64,
    /// `max_c + log|λ| / (N l)`: removes the one diagonal factor every minor lacks.
    pub max_c_adjusted: f64,
    pub flagged: usize,
}

/// Upper-bound verification at `N` and `2N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundCheck {
    pub lambda: f64,
    pub energy: f64,
    pub runs: Vec<UpperRun>,
    pub stability_tolerance: f64,
    pub stable: bool,
    pub verdict: Verdict,
}

impl UpperBoundCheck {
    pub fn to_report(&self) -> BoundReport {
        let mut r = BoundReport::new("verify-upper")
            .value("lambda", self.lambda)
            .value("energy", self.energy)
            .threshold("relative_stability_on_log_lambda_scale", self.stability_tolerance)
            .verdict(self.verdict);
        for run in &self.runs {
            r = r
                .value(&format!("max_c_n{}", run.n), run.max_c)
                .value(&format!("max_c_adjusted_n{}", run.n), run.max_c_adjusted)
                .value(&format!("flagged_cells_n{}", run.n), run.flagged as f64);
        }
        r.note("C(x,a,a') = (1/Nl) log|minor| - (1 - |n(a)-n(a')|/(Nl)) log|lambda|")
    }
}

/// Minors of `H_N(x) - E` over a phase grid, with the per-cell constant `C`.
pub fn upper_bound_run(spec: &OperatorSpec, n: usize, energy: f64, phases: &[f64]) -> Result<UpperRun> {
    let lambda = spec.lambda();
    if lambda.abs() < 1.0 {
        return Err(LabError::domain("the upper-bound campaign assumes |lambda| >= 1"));
    }
    if n == 0 {
        return Err(LabError::domain("N must be positive"));
    }
    let l = spec.l();
    let m = n * l;
    let log_lam = lambda.abs().ln();
    let per_phase: Vec<Vec<UpperCell>> = phases
        .par_iter()
        .map(|&x| {
            let blocks = DirichletBlocks::assemble(spec, CirclePoint::phase(x), 1, n as i64, energy)?;
            let g = blocks.to_dense().map(|v| v.re);
            let bw = blocks.bandwidth();
            let mut cells = Vec::with_capacity(m * m);
            for alpha in 1..=m {
                for alpha_prime in 1..=m {
                    let ld = log_minor_banded(&g, bw, alpha, alpha_prime);
                    let dist = block_of(l, alpha).abs_diff(block_of(l, alpha_prime));
                    let c_value = (!ld.is_sentinel())
                        .then(|| ld.log_abs / m as f64 - (1.0 - dist as f64 / m as f64) * log_lam);
                    cells.push(UpperCell {
                        phase: x,
                        alpha,
                        alpha_prime,
                        block_distance: dist,
                        log_abs_minor: ld.log_abs,
                        c_value,
                    });
                }
            }
            Ok(cells)
        })
        .collect::<Result<_>>()?;
    let cells: Vec<UpperCell> = per_phase.into_iter().flatten().collect();
    let flagged = cells.iter().filter(|c| c.c_value.is_none()).count();
    let max_c = cells
        .iter()
        .filter_map(|c| c.c_value)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(UpperRun {
        n,
        max_c,
        max_c_adjusted: max_c + log_lam / m as f64,
        flagged,
        cells,
    })
}

/// Runs the campaign at `N` and `2N`; passes when both maxima are finite and
/// differ by at most 10% of `max(1, log|λ|)`.
pub fn verify_minor_upper_bound(spec: &OperatorSpec, n: usize, energy: f64, phases: &[f64]) -> Result<UpperBoundCheck> {
    let tol = 0.1;
    let a = upper_bound_run(spec, n, energy, phases)?;
    let b = upper_bound_run(spec, 2 * n, energy, phases)?;
    let stable = stable_on_log_scale(a.max_c, b.max_c, spec.lambda(), tol);
    let mut verdict = Verdict::from_bool(stable);
    if a.flagged + b.flagged > 0 && verdict == Verdict::Pass {
        verdict = Verdict::Warn;
    }
    Ok(UpperBoundCheck {
        lambda: spec.lambda(),
        energy,
        runs: vec![a, b],
        stability_tolerance: tol,
        stable,
        verdict,
    })
}
