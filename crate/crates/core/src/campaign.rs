//! Campaign orchestration: runs one command against a configuration and
//! writes `<out>/<command>.json` plus `<out>/<command>.csv`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::CampaignConfig;
use crate::determinant::{
    det_norm_campaign, epsilon0_scan, hardy_convexity_check, lambda0_estimate, verify_lower_bound,
};
use crate::error::{LabError, Result};
use crate::green::{bad_set_ladder, diophantine_constant, good_window_search, orbit_good_fraction};
use crate::linalg::to_rational;
use crate::localization::{block_norms, eigensolve, localization_campaign, lyapunov_scan};
use crate::minors::{full_predicate, minor_direct, minor_via_paths, verify_minor_upper_bound, FRONTIER_CAP};
use crate::report::{BoundReport, Provenance, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    VerifyUpper,
    VerifyLower,
    MinorOracle,
    HardyCheck,
    GreenScan,
    Localize,
    Lyapunov,
    Preflight,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::VerifyUpper,
        Command::VerifyLower,
        Command::MinorOracle,
        Command::HardyCheck,
        Command::GreenScan,
        Command::Localize,
        Command::Lyapunov,
        Command::Preflight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyUpper => "verify-upper",
            Command::VerifyLower => "verify-lower",
            Command::MinorOracle => "minor-oracle",
            Command::HardyCheck => "hardy-check",
            Command::GreenScan => "green-scan",
            Command::Localize => "localize",
            Command::Lyapunov => "lyapunov",
            Command::Preflight => "preflight",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LabError::Invalid(vec![format!("unknown command {s:?}")]))
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker count; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Integer matrix for `minor-oracle`, one row per line.
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: BoundReport,
    pub json_path: PathBuf,
    pub csv_paths: Vec<PathBuf>,
}

impl Outcome {
    /// 0 on PASS or WARN, 1 on FAIL.
    pub fn exit_code(&self) -> i32 {
        if self.report.verdict.is_failure() {
            1
        } else {
            0
        }
    }
}

/// A CSV table held in memory until the campaign finishes.
struct Table {
    suffix: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(suffix: &'static str, header: &[&'static str]) -> Self {
        Table {
            suffix,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Prefixes every key of `part` with `prefix` and folds it into `acc`.
fn absorb(acc: BoundReport, part: BoundReport, prefix: &str) -> BoundReport {
    let mut acc = acc.downgrade(part.verdict);
    for (k, v) in part.summary {
        acc.summary.insert(format!("{prefix}{k}"), v);
    }
    for (k, v) in part.thresholds {
        acc.thresholds.entry(k).or_insert(v);
    }
    for n in part.notes {
        acc.notes.push(format!("{prefix}{n}"));
    }
    acc
}

fn energy_prefix(e: f64) -> String {
    format!("E{e}.")
}

/// Runs `command` and writes its reports.
pub fn run(command: Command, config: &CampaignConfig, opts: &RunOptions) -> Result<Outcome> {
    let (mut report, tables) = match opts.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| LabError::domain(e.to_string()))?
            .install(|| dispatch(command, config, opts)),
        None => dispatch(command, config, opts),
    }?;
    report.campaign = command.name().to_string();
    report.provenance = Provenance {
        config_digest: config.digest(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: opts.seed,
    };
    write_outputs(command, &report, &tables, &opts.out_dir)
}

fn write_outputs(command: Command, report: &BoundReport, tables: &[Table], out: &Path) -> Result<Outcome> {
    std::fs::create_dir_all(out)?;
    let json_path = out.join(format!("{}.json", command.name()));
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(&json_path, text)?;
    let mut csv_paths = Vec::new();
    for t in tables {
        let path = out.join(format!("{}{}.csv", command.name(), t.suffix));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        csv_paths.push(path);
    }
    Ok(Outcome {
        report: report.clone(),
        json_path,
        csv_paths,
    })
}

fn dispatch(command: Command, config: &CampaignConfig, opts: &RunOptions) -> Result<(BoundReport, Vec<Table>)> {
    match command {
        Command::VerifyUpper => verify_upper(config).map_err(|e| e.within("minor_paths")),
        Command::VerifyLower => verify_lower(config).map_err(|e| e.within("determinant_bounds")),
        Command::MinorOracle => minor_oracle(config, opts).map_err(|e| e.within("minor_paths")),
        Command::HardyCheck => hardy(config).map_err(|e| e.within("determinant_bounds")),
        Command::GreenScan => green_scan(config).map_err(|e| e.within("greens_functions")),
        Command::Localize => localize(config).map_err(|e| e.within("localization_lab")),
        Command::Lyapunov => lyapunov(config).map_err(|e| e.within("localization_lab")),
        Command::Preflight => preflight(config, opts),
    }
}

fn phase_grid(count: usize) -> Vec<f64> {
    (0..count).map(|k| (k as f64 + 0.5) / count as f64).collect()
}

fn verify_upper(config: &CampaignConfig) -> Result<(BoundReport, Vec<Table>)> {
    let c = &config.campaign;
    let phases = phase_grid(c.phases);
    let mut report = BoundReport::new("verify-upper");
    let mut table = Table::new(
        "",
        &["energy", "n", "phase", "alpha", "alpha_prime", "block_distance", "log_abs_minor", "c_value"],
    );
    for &e in &c.energies {
        let check = verify_minor_upper_bound(&config.spec, c.n, e, &phases)?;
        for run in &check.runs {
            for cell in &run.cells {
                table.push(vec![
                    num(e),
                    run.n.to_string(),
                    num(cell.phase),
                    cell.alpha.to_string(),
                    cell.alpha_prime.to_string(),
                    cell.block_distance.to_string(),
                    num(cell.log_abs_minor),
                    opt(cell.c_value),
                ]);
            }
        }
        report = absorb(report, check.to_report(), &energy_prefix(e));
    }
    Ok((report, vec![table]))
}

fn verify_lower(config: &CampaignConfig) -> Result<(BoundReport, Vec<Table>)> {
    let c = &config.campaign;
    let check = verify_lower_bound(&config.spec, c.n, &c.energies, c.quadrature)?;
    let mut table = Table::new("", &["energy", "n", "lambda", "average", "deficit", "sentinels", "samples"]);
    for row in &check.rows {
        for p in [&row.at_n, &row.at_2n, &row.at_10_lambda] {
            table.push(vec![
                num(p.energy),
                p.n.to_string(),
                num(p.lambda),
                num(p.average),
                num(p.deficit),
                p.sentinels.to_string(),
                p.samples.to_string(),
            ]);
        }
    }
    Ok((check.to_report(), vec![table]))
}

fn read_matrix(path: &Path) -> Result<DMatrix<i64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<i64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| LabError::Invalid(vec![format!("line {}: {t:?} is not an integer", i + 1)]))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let m = rows.len();
    if m == 0 || m > 8 || rows.iter().any(|r| r.len() != m) {
        return Err(LabError::Invalid(vec![format!(
            "{}: expected a square integer matrix of size 1 to 8",
            path.display()
        )]));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

fn minor_oracle(config: &CampaignConfig, opts: &RunOptions) -> Result<(BoundReport, Vec<Table>)> {
    let g = match &opts.matrix {
        Some(p) => read_matrix(p)?,
        None => {
            let m = config.campaign.minor_size;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            DMatrix::from_fn(m, m, |_, _| rng.random_range(-9..=9))
        }
    };
    let m = g.nrows();
    let exact = to_rational(&g);
    let float = g.map(|v| v as f64);
    let mut table = Table::new(
        "",
        &["alpha", "alpha_prime", "exact_direct", "exact_paths", "float_direct", "float_paths", "relative_difference"],
    );
    let mut mismatches = 0usize;
    let mut worst = 0.0f64;
    for a in 1..=m {
        for ap in 1..=m {
            let ed: BigRational = minor_direct(&exact, a, ap)?;
            let ep: BigRational = minor_via_paths(&exact, a, ap, full_predicate, FRONTIER_CAP)?;
            let fd = minor_direct(&float, a, ap)?;
            let fp = minor_via_paths(&float, a, ap, full_predicate, FRONTIER_CAP)?;
            let rel = (fp - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(rel);
            if ed != ep {
                mismatches += 1;
            }
            table.push(vec![
                a.to_string(),
                ap.to_string(),
                ed.to_string(),
                ep.to_string(),
                num(fd),
                num(fp),
                num(rel),
            ]);
        }
    }
    let report = BoundReport::new("minor-oracle")
        .value("m", m as f64)
        .value("pairs", (m * m) as f64)
        .value("exact_mismatches", mismatches as f64)
        .value("max_relative_difference", worst)
        .threshold("exact_mismatches", 0.0)
        .threshold("max_relative_difference", 1e-9)
        .verdict(Verdict::from_bool(mismatches == 0 && worst <= 1e-9))
        .note(match &opts.matrix {
            Some(p) => format!("matrix read from {}", p.display()),
            None => format!("seeded random integer matrix, entries in [-9, 9], m = {m}"),
        });
    Ok((report, vec![table]))
}

fn hardy(config: &CampaignConfig) -> Result<(BoundReport, Vec<Table>)> {
    let c = &config.campaign;
    let mut report = BoundReport::new("hardy-check");
    let mut table = Table::new("", &["energy", "radius", "mean"]);
    for &e in &c.energies {
        let check = hardy_convexity_check(&config.spec, c.n, e, &c.radii, c.circle_samples)?;
        for (s, m) in check.radii.iter().zip(&check.means) {
            table.push(vec![num(e), num(*s), num(*m)]);
        }
        report = absorb(report, check.to_report(), &energy_prefix(e));
    }
    Ok((report, vec![table]))
}

/// Bad fraction at the top rung above this fails the scan.
const BAD_FRACTION_FAIL: f64 = 0.05;

fn green_scan(config: &CampaignConfig) -> Result<(BoundReport, Vec<Table>)> {
    let c = &config.campaign;
    let params = config.green_params();
    let top = c.m_ladder.iter().copied().max().unwrap_or(1);
    let mut report = BoundReport::new("green-scan");
    let mut table = Table::new("", &["energy", "m", "phase", "orbit_average", "bad"]);
    for &e in &c.energies {
        let ladder = bad_set_ladder(&config.spec, c.n, &c.m_ladder, e, c.grid, &params)?;
        let threshold = (1.0 - ladder.delta) * config.spec.lambda().abs().ln();
        for (m, avgs) in ladder.ms.iter().zip(&ladder.averages) {
            for (k, a) in avgs.iter().enumerate() {
                table.push(vec![
                    num(e),
                    m.to_string(),
                    num((k as f64 + 0.5) / c.grid as f64),
                    num(*a),
                    u8::from(!(*a > threshold)).to_string(),
                ]);
            }
        }
        let top_fraction = ladder.fractions.last().copied().unwrap_or(f64::NAN);
        let window = good_window_search(&config.spec, c.x, c.n, top, e, &params)?;
        let orbit = orbit_good_fraction(&config.spec, c.x, c.n, e, c.horizon, &params)?;
        let mut part = ladder
            .to_report()
            .value("good_window_j", window.j.map_or(-1.0, |j| j as f64))
            .value("orbit_good_fraction", orbit)
            .value("horizon", c.horizon as f64)
            .threshold("max_bad_fraction_at_top_rung", BAD_FRACTION_FAIL);
        if !(top_fraction <= BAD_FRACTION_FAIL) {
            part = part.verdict(Verdict::Fail);
        }
        report = absorb(report, part, &energy_prefix(e));
    }
    Ok((report, vec![table]))
}

fn localize(config: &CampaignConfig) -> Result<(BoundReport, Vec<Table>)> {
    let c = &config.campaign;
    let loc = localization_campaign(&config.spec, c.n, c.x, config.energy_window(), config.well_inside())?;
    let mut table = Table::new("", &["energy", "peak", "rate", "r2", "passes"]);
    for r in &loc.rows {
        table.push(vec![num(r.energy), r.peak.to_string(), opt(r.rate), num(r.r2), r.passes.to_string()]);
    }
    let mut tables = vec![table];
    if c.block_norms_csv {
        let mut norms = Table::new("_block_norms", &["vector", "energy", "block", "norm"]);
        for (i, pair) in eigensolve(&config.spec, c.x, 1, c.n as i64)?.iter().enumerate() {
            for (k, v) in block_norms(&pair.psi).iter().enumerate() {
                norms.push(vec![
                    i.to_string(),
                    num(pair.energy),
                    (pair.psi.start + k as i64).to_string(),
                    num(*v),
                ]);
            }
        }
        tables.push(norms);
    }
    let report = loc
        .to_report()
        .value("energy_window_lo", loc.energy_window.0)
        .value("energy_window_hi", loc.energy_window.1);
    Ok((report, tables))
}

fn lyapunov(config: &CampaignConfig) -> Result<(BoundReport, Vec<Table>)> {
    let c = &config.campaign;
    let results = lyapunov_scan(&config.spec, &c.energies, c.x, c.lyapunov_steps, c.reortho_period)?;
    let log_lam = config.spec.lambda().abs().ln();
    let mut report = BoundReport::new("lyapunov")
        .value("lambda", config.spec.lambda())
        .value("steps", c.lyapunov_steps as f64)
        .value("reortho_period", c.reortho_period as f64)
        .threshold("singular_w_fraction_abort", 1e-3)
        .note("diagnostic only; compare top_exponent with log|lambda| and the localize median rate");
    let mut table = Table::new("", &["energy", "index", "exponent", "flagged"]);
    for r in &results {
        for (i, g) in r.exponents.iter().enumerate() {
            table.push(vec![num(r.energy), i.to_string(), num(*g), r.flagged.to_string()]);
        }
        let p = energy_prefix(r.energy);
        report = report
            .value(&format!("{p}top_exponent"), r.exponents[0])
            .value(&format!("{p}top_over_log_lambda"), r.exponents[0] / log_lam)
            .value(&format!("{p}flagged_steps"), r.flagged as f64);
        if r.flagged > 0 {
            report = report.downgrade(Verdict::Warn);
        }
    }
    Ok((report, vec![table]))
}

/// Diophantine constants below this trigger a warning.
const DIOPHANTINE_WARN: f64 = 1e-3;

fn preflight(config: &CampaignConfig, opts: &RunOptions) -> Result<(BoundReport, Vec<Table>)> {
    let spec = &config.spec;
    let c = &config.campaign;
    let mut report = BoundReport::new("preflight")
        .threshold("det_w_floor", 1e-12)
        .threshold("constant_eigenvalue_tolerance", 1e-6)
        .threshold("diophantine_warn", DIOPHANTINE_WARN);
    let mut table = Table::new("", &["check", "value", "verdict"]);
    let mut record = |report: BoundReport, name: &str, v: f64, verdict: Verdict| {
        table.push(vec![name.to_string(), num(v), format!("{verdict:?}").to_uppercase()]);
        report.value(name, v).downgrade(verdict)
    };

    let (lo, hi) = spec.det_w_probe(1024);
    report = record(report, "det_w_max", hi, Verdict::from_bool(hi > 1e-12));
    let w_verdict = if lo > 1e-12 { Verdict::Pass } else { Verdict::Warn };
    report = record(report, "det_w_min", lo, w_verdict);
    if hi <= 1e-12 {
        report = report.note("det W vanishes identically on the probe grid");
    }

    let ce = spec.f().no_constant_eigenvalue_check(64, 1e-6);
    report = record(
        report,
        "f_min_relative_spread",
        ce.min_relative_spread,
        if ce.passed { Verdict::Pass } else { Verdict::Warn },
    );
    if let Some(w) = ce.witness {
        report = report.note(format!("F(x) appears to have the constant eigenvalue {w}"));
    }

    let t = diophantine_constant(spec.omega(), c.diophantine_k);
    report = record(
        report,
        "diophantine_constant",
        t,
        if t >= DIOPHANTINE_WARN { Verdict::Pass } else { Verdict::Warn },
    );
    report = report.value("diophantine_k", c.diophantine_k as f64);

    let e_max = c.energies.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let t_max = spec.f().sup_norm(1.0, 256) + e_max / spec.lambda().abs();
    match epsilon0_scan(spec.f(), 0.05 * spec.annulus_r(), t_max, 256) {
        Ok(scan) => {
            report = record(report, "eps0", scan.eps0, Verdict::Pass);
            report = report.value("y0", scan.y0);
            let l0 = c
                .energies
                .iter()
                .map(|&e| lambda0_estimate(spec, c.n, e, scan.y0, 64))
                .collect::<Result<Vec<f64>>>()
                .map_err(|e| e.within("determinant_bounds"))?
                .into_iter()
                .fold(0.0, f64::max);
            let v = if spec.lambda().abs() >= l0 { Verdict::Pass } else { Verdict::Warn };
            report = record(report, "lambda0_estimate", l0, v);
            if v == Verdict::Warn {
                report = report.note(format!("|lambda| is below the lambda0 estimate {l0:.3}"));
            }
        }
        Err(e) => {
            report = report
                .downgrade(Verdict::Warn)
                .note(e.within("determinant_bounds").to_string());
        }
    }

    let dn = det_norm_campaign(1000, 32, opts.seed).map_err(|e| e.within("determinant_bounds"))?;
    report = record(report, "det_norm_violations", dn.violations as f64, Verdict::from_bool(dn.violations == 0));
    report = report.value("det_norm_min_log_slack", dn.min_log_slack);
    Ok((report, vec![table]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    const AMO: &str = r#"
[spec]
l = 1
lambda = 10.0
omega = "goldenmean"
annulus_r = 0.5
w = [[0, 0, 0, 1.0, 0.0]]
f = [[1, 0, 0, 1.0, 0.0], [-1, 0, 0, 1.0, 0.0]]

[campaign]
n = 4
phases = 8
quadrature = 512
circle_samples = 256
m_ladder = [2, 4]
grid = 64
horizon = 16
lyapunov_steps = 10000
diophantine_k = 1000
"#;

    fn opts(dir: &Path) -> RunOptions {
        RunOptions {
            seed: 7,
            out_dir: dir.to_path_buf(),
            threads: Some(2),
            matrix: None,
        }
    }

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("verify".parse::<Command>().is_err());
    }

    #[test]
    fn every_command_writes_reports() {
        let cfg = parse_config(AMO).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for c in Command::ALL {
            let out = run(c, &cfg, &opts(dir.path())).unwrap();
            assert!(out.json_path.exists(), "{c}");
            assert!(out.csv_paths.iter().all(|p| p.exists()), "{c}");
            assert_eq!(out.report.campaign, c.name());
            assert_eq!(out.report.provenance.seed, 7);
            assert_eq!(out.report.provenance.config_digest, cfg.digest());
        }
    }

    #[test]
    fn minor_oracle_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.txt");
        std::fs::write(&m, "1 2 0\n3 -1 4\n0 5 2\n").unwrap();
        let cfg = parse_config(AMO).unwrap();
        let mut o = opts(dir.path());
        o.matrix = Some(m.clone());
        let out = run(Command::MinorOracle, &cfg, &o).unwrap();
        assert_eq!(out.report.verdict, Verdict::Pass);
        assert_eq!(out.report.summary["pairs"], 9.0);
        std::fs::write(&m, "1 2\n3\n").unwrap();
        let err = run(Command::MinorOracle, &cfg, &o).unwrap_err().to_string();
        assert!(err.starts_with("minor_paths:"), "{err}");
    }

    #[test]
    fn preflight_flags_constant_eigenvalue() {
        let text = AMO
            .replace("l = 1", "l = 2")
            .replace("w = [[0, 0, 0, 1.0, 0.0]]", "w = [[0, 0, 0, 1.0, 0.0], [0, 1, 1, 1.0, 0.0]]");
        // F = diag(2cos 2πx, 0)
        let cfg = parse_config(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = run(Command::Preflight, &cfg, &opts(dir.path())).unwrap();
        assert_eq!(out.report.verdict, Verdict::Warn);
        assert!(out.report.notes.iter().any(|n| n.contains("constant eigenvalue 0")), "{:?}", out.report.notes);
    }
}
