//! Self-contained campaign reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Warn,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// The worse of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Warn, _) | (_, Warn) => Warn,
            _ => Pass,
        }
    }

    pub fn is_failure(self) -> bool {
        self == Verdict::Fail
    }
}

/// Where a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub config_digest: String,
    pub code_version: String,
    pub seed: u64,
}

/// Summary of a verification campaign.
///
/// The verdict is recomputable from `summary` and `thresholds`; per-cell data
/// lives in the companion CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub campaign: String,
    pub verdict: Verdict,
    pub summary: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl BoundReport {
    pub fn new(campaign: impl Into<String>) -> Self {
        BoundReport {
            campaign: campaign.into(),
            verdict: Verdict::Pass,
            summary: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            notes: Vec::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.summary.insert(key.to_string(), v);
        self
    }

    pub fn threshold(mut self, key: &str, v: f64) -> Self {
        self.thresholds.insert(key.to_string(), v);
        self
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }

    pub fn verdict(mut self, v: Verdict) -> Self {
        self.verdict = v;
        self
    }

    /// Combines the current verdict with `v`, keeping the worse.
    pub fn downgrade(mut self, v: Verdict) -> Self {
        self.verdict = self.verdict.and(v);
        self
    }
}

/// `|a - b| ≤ rel · max(1, |log|λ||)`.
///
/// Empirical constants in the determinant bounds are additive corrections to
/// multiples of `log|λ|` and may sit near zero, so stability is measured on
/// the scale of `log|λ|` rather than relative to the constant itself.
pub fn stable_on_log_scale(a: f64, b: f64, lambda: f64, rel: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() <= rel * lambda.abs().ln().abs().max(1.0)
}

/// Median of finite values; `NaN` for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
