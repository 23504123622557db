//! Seeded model generators shared by tests, probes and campaigns.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::operator::{golden_mean, OperatorSpec};
use crate::torus::TrigMatrixPoly;

type Entry = (i64, usize, usize, f64, f64);

fn random_entries(rng: &mut ChaCha8Rng, l: usize, degree: i64, symmetric: bool) -> Vec<Entry> {
    let mut out = Vec::new();
    for k in 0..=degree {
        for i in 0..l {
            for j in 0..l {
                if symmetric && j < i {
                    continue;
                }
                let re = rng.random_range(-1.0..1.0);
                let im = if k == 0 { 0.0 } else { rng.random_range(-1.0..1.0) };
                let mut push = |a: usize, b: usize| {
                    out.push((k, a, b, re, im));
                    if k != 0 {
                        out.push((-k, a, b, re, -im));
                    }
                };
                push(i, j);
                if symmetric && i != j {
                    push(j, i);
                }
            }
        }
    }
    out
}

/// Random trigonometric polynomial with entries in `[-1, 1] + i[-1, 1]`.
pub fn random_poly(rng: &mut ChaCha8Rng, l: usize, degree: i64, symmetric: bool) -> TrigMatrixPoly {
    TrigMatrixPoly::from_entries(l, &random_entries(rng, l, degree, symmetric)).expect("conjugate-symmetric by construction")
}

/// Random spec with `deg W = deg R = 1`, `deg F = 2`, golden-mean frequency and `r = 0.4`.
pub fn random_spec(l: usize, lambda: f64, seed: u64) -> OperatorSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_poly(&mut rng, l, 1, false);
    let r = random_poly(&mut rng, l, 1, true);
    let f = random_poly(&mut rng, l, 2, true);
    OperatorSpec::new(lambda, golden_mean(), 0.4, w, r, f).expect("random spec is valid")
}

/// `W ≡ I`, `R ≡ 0`, `F = diag(2cos 2π(x + shift_j))`: `l` uncoupled chains.
pub fn diagonal_cos_spec(lambda: f64, omega: f64, shifts: &[f64]) -> OperatorSpec {
    let l = shifts.len();
    let modes: Vec<(f64, f64)> = shifts.iter().map(|&s| (1.0, s)).collect();
    OperatorSpec::new(
        lambda,
        omega,
        0.5,
        TrigMatrixPoly::identity(l),
        TrigMatrixPoly::constant(&DMatrix::zeros(l, l)),
        TrigMatrixPoly::diag_cos(&modes),
    )
    .expect("diagonal cos spec is valid")
}
