//! TOML campaign configuration.
//!
//! ```toml
//! [spec]
//! lambda = 10.0
//! omega = "goldenmean"
//! annulus_r = 0.5
//! l = 1
//! w = [[0, 0, 0, 1.0, 0.0]]
//! r = []
//! f = [[1, 0, 0, 1.0, 0.0], [-1, 0, 0, 1.0, 0.0]]
//!
//! [campaign]
//! n = 8
//! energies = [0.0]
//! ```
//!
//! Fourier tables list `[k, row, col, re, im]` entries of the mode-`k`
//! coefficient. Every `[campaign]` key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::green::GreenParams;
use crate::localization::WellInside;
use crate::operator::{golden_mean, OperatorSpec};
use crate::torus::TrigMatrixPoly;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OmegaSource {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecSection {
    pub l: usize,
    pub lambda: f64,
    pub omega: OmegaSource,
    pub annulus_r: f64,
    pub w: Vec<[f64; 5]>,
    #[serde(default)]
    pub r: Vec<[f64; 5]>,
    pub f: Vec<[f64; 5]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    pub n: usize,
    pub energies: Vec<f64>,
    pub phases: usize,
    pub quadrature: usize,
    pub radii: Vec<f64>,
    pub circle_samples: usize,
    pub m_ladder: Vec<usize>,
    pub grid: usize,
    pub horizon: usize,
    pub x: f64,
    pub energy_window: Option<[f64; 2]>,
    pub well_inside_lower: i64,
    pub well_inside_upper_fraction: f64,
    pub lyapunov_steps: usize,
    pub reortho_period: usize,
    pub width_constant: f64,
    pub delta: Option<f64>,
    pub minor_size: usize,
    pub diophantine_k: u64,
    pub block_norms_csv: bool,
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection {
            n: 8,
            energies: vec![0.0],
            phases: 64,
            quadrature: 4096,
            radii: vec![1.01, 1.02, 1.03, 1.04, 1.05],
            circle_samples: 1024,
            m_ladder: vec![4, 8, 16, 32],
            grid: 4096,
            horizon: 1000,
            x: 0.1234,
            energy_window: None,
            well_inside_lower: 2,
            well_inside_upper_fraction: 0.5,
            lyapunov_steps: 100_000,
            reortho_period: 8,
            width_constant: 50.0,
            delta: None,
            minor_size: 5,
            diophantine_k: 1_000_000,
            block_norms_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    spec: SpecSection,
    #[serde(default)]
    campaign: CampaignSection,
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub spec: OperatorSpec,
    pub spec_section: SpecSection,
    pub campaign: CampaignSection,
    /// The source text, for the provenance digest.
    pub source: String,
}

impl CampaignConfig {
    pub fn green_params(&self) -> GreenParams {
        GreenParams {
            width_constant: self.campaign.width_constant,
            delta: self.campaign.delta,
        }
    }

    pub fn well_inside(&self) -> WellInside {
        WellInside {
            lower: self.campaign.well_inside_lower,
            upper_fraction: self.campaign.well_inside_upper_fraction,
        }
    }

    pub fn energy_window(&self) -> (f64, f64) {
        match self.campaign.energy_window {
            Some([a, b]) => (a, b),
            None => {
                let w = self.spec.default_energy_window();
                (-w, w)
            }
        }
    }

    /// SHA-256 of the source text.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.source.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Re-checks campaign parameters after command-line overrides.
    pub fn revalidate(&self) -> Result<()> {
        let errs = validate_campaign(&self.campaign, self.spec.annulus_r());
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LabError::Invalid(errs))
        }
    }
}

fn table(name: &str, l: usize, rows: &[[f64; 5]], errs: &mut Vec<String>) -> Option<TrigMatrixPoly> {
    let mut entries = Vec::with_capacity(rows.len());
    let mut ok = true;
    for (i, row) in rows.iter().enumerate() {
        let ints = &row[..3];
        if ints.iter().any(|v| v.fract() != 0.0) {
            errs.push(format!("spec.{name}[{i}]: k, row and col must be integers"));
            ok = false;
            continue;
        }
        let (k, r, c) = (row[0] as i64, row[1], row[2]);
        if r < 0.0 || c < 0.0 || r as usize >= l || c as usize >= l {
            errs.push(format!("spec.{name}[{i}]: index ({r}, {c}) outside {l}×{l}"));
            ok = false;
            continue;
        }
        entries.push((k, r as usize, c as usize, row[3], row[4]));
    }
    if !ok {
        return None;
    }
    match TrigMatrixPoly::from_entries(l, &entries) {
        Ok(p) => Some(p),
        Err(LabError::Invalid(list)) => {
            errs.extend(list.into_iter().map(|e| format!("spec.{name}: {e}")));
            None
        }
        Err(e) => {
            errs.push(format!("spec.{name}: {e}"));
            None
        }
    }
}

fn validate_campaign(c: &CampaignSection, annulus_r: f64) -> Vec<String> {
    let mut errs = Vec::new();
    let mut need = |ok: bool, msg: &str| {
        if !ok {
            errs.push(format!("campaign.{msg}"));
        }
    };
    need(c.n >= 1, "n must be at least 1");
    need(!c.energies.is_empty(), "energies must not be empty");
    need(c.energies.iter().all(|e| e.is_finite()), "energies must be finite");
    need(c.phases >= 1, "phases must be at least 1");
    need(c.quadrature >= 512 && c.quadrature.is_power_of_two(), "quadrature must be a power of two ≥ 512");
    need(c.radii.len() >= 5, "radii needs at least 5 values");
    need(
        c.radii.iter().all(|&s| s > 1.0 && s < 1.0 + annulus_r),
        "radii must lie in (1, 1 + annulus_r)",
    );
    need(
        c.circle_samples >= 256 && c.circle_samples.is_power_of_two(),
        "circle_samples must be a power of two ≥ 256",
    );
    need(!c.m_ladder.is_empty() && !c.m_ladder.contains(&0), "m_ladder must hold positive values");
    need(c.grid >= 1, "grid must be at least 1");
    need((1..=1_000_000).contains(&c.horizon), "horizon must lie in [1, 10^6]");
    need(c.x.is_finite(), "x must be finite");
    need(c.energy_window.is_none_or(|[a, b]| a <= b), "energy_window must be [lo, hi] with lo ≤ hi");
    need(c.well_inside_lower >= 1, "well_inside_lower must be at least 1");
    need(
        c.well_inside_upper_fraction > 0.0 && c.well_inside_upper_fraction <= 1.0,
        "well_inside_upper_fraction must lie in (0, 1]",
    );
    need(c.lyapunov_steps >= 10_000, "lyapunov_steps must be at least 10^4");
    need(c.reortho_period >= 1, "reortho_period must be at least 1");
    need(c.width_constant > 0.0, "width_constant must be positive");
    need(c.delta.is_none_or(|d| d > 0.0 && d <= 1.0), "delta must lie in (0, 1]");
    need((1..=8).contains(&c.minor_size), "minor_size must lie in [1, 8]");
    need(c.diophantine_k >= 1, "diophantine_k must be at least 1");
    errs
}

/// Parses and validates a configuration, reporting every problem at once.
pub fn parse_config(text: &str) -> Result<CampaignConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| LabError::Invalid(vec![e.to_string()]))?;
    let mut errs = Vec::new();
    let s = &raw.spec;
    if s.l == 0 {
        errs.push("spec.l must be at least 1".to_string());
    }
    let omega = match &s.omega {
        OmegaSource::Value(v) => Some(*v),
        OmegaSource::Keyword(k) if k == "goldenmean" => Some(golden_mean()),
        OmegaSource::Keyword(k) => {
            errs.push(format!("spec.omega: unknown keyword {k:?} (expected a number or \"goldenmean\")"));
            None
        }
    };
    let polys = if s.l > 0 {
        (
            table("w", s.l, &s.w, &mut errs),
            table("r", s.l, &s.r, &mut errs),
            table("f", s.l, &s.f, &mut errs),
        )
    } else {
        (None, None, None)
    };
    let spec = match (omega, polys) {
        (Some(om), (Some(w), Some(r), Some(f))) => match OperatorSpec::new(s.lambda, om, s.annulus_r, w, r, f) {
            Ok(spec) => Some(spec),
            Err(LabError::Invalid(list)) => {
                errs.extend(list.into_iter().map(|e| format!("spec: {e}")));
                None
            }
            Err(e) => {
                errs.push(format!("spec: {e}"));
                None
            }
        },
        _ => {
            if s.lambda == 0.0 {
                errs.push("spec: coupling must be nonzero".into());
            }
            None
        }
    };
    errs.extend(validate_campaign(&raw.campaign, s.annulus_r));
    match spec {
        Some(spec) if errs.is_empty() => Ok(CampaignConfig {
            spec,
            spec_section: raw.spec,
            campaign: raw.campaign,
            source: text.to_string(),
        }),
        _ => Err(LabError::Invalid(errs)),
    }
}

pub fn load_config(path: &Path) -> Result<CampaignConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
