use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::{CheckKind, ExperimentConfig, GridPoint, TargetKind};
use super::engine::{ReplicationRecord, RunOutput};
use super::stats::{coverage_from_hits, median, normality_check, rate_regression, CoverageStats, NormalityStats};

/// Column order of `records.csv`.
pub const RECORD_COLUMNS: [&str; 26] = [
    "grid_id",
    "rep_id",
    "seed",
    "n",
    "t",
    "alpha",
    "target",
    "unit",
    "period",
    "component",
    "estimate",
    "truth",
    "std_err",
    "z",
    "studentized",
    "ci_hit",
    "error_norm",
    "flag",
    "max_identity_gap",
    "first_order_norm",
    "r1_norm",
    "r2_norm",
    "delta1_norm",
    "delta2_norm",
    "loo_proximity",
    "lno_stat",
];

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn opt_idx(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_records_csv<W: Write>(records: &[ReplicationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            r.grid_id.to_string(),
            r.rep_id.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.t.to_string(),
            num(r.alpha),
            r.target.as_str().to_string(),
            opt_idx(r.unit),
            opt_idx(r.period),
            r.component.to_string(),
            num(r.estimate),
            num(r.truth),
            num(r.std_err),
            num(r.z),
            num(r.studentized),
            (r.ci_hit as u8).to_string(),
            num(r.error_norm),
            r.flag.clone().unwrap_or_default(),
            opt_num(r.max_identity_gap),
            opt_num(r.first_order_norm),
            opt_num(r.r1_norm),
            opt_num(r.r2_norm),
            opt_num(r.delta1_norm),
            opt_num(r.delta2_norm),
            opt_num(r.loo_proximity),
            opt_num(r.lno_stat),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetSummary {
    pub target: TargetKind,
    pub valid_records: usize,
    pub flagged_records: usize,
    pub coverage: Option<CoverageStats>,
    pub median_error: f64,
    pub studentized_variance: f64,
    pub normality: Option<NormalityStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub grid_id: usize,
    pub n: usize,
    pub t: usize,
    pub r: usize,
    pub alpha: f64,
    pub replications: usize,
    pub elapsed_seconds: f64,
    pub targets: Vec<TargetSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSummary {
    pub series: usize,
    pub target: TargetKind,
    pub grid_ids: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub target: TargetKind,
    pub grid: Vec<usize>,
    pub value: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub library_version: &'static str,
    pub config: serde_json::Value,
    pub grid: Vec<GridSummary>,
    pub rates: Vec<RateSummary>,
    pub checks: Vec<CheckResult>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn select(records: &[ReplicationRecord], grid_id: usize, target: TargetKind) -> impl Iterator<Item = &ReplicationRecord> {
    records.iter().filter(move |r| r.grid_id == grid_id && r.target == target)
}

/// Valid studentized draws pooled over coordinates.
pub fn studentized_draws(records: &[ReplicationRecord], grid_id: usize, target: TargetKind) -> Vec<f64> {
    select(records, grid_id, target).filter(|r| r.is_valid()).map(|r| r.studentized).collect()
}

pub fn ci_hits(records: &[ReplicationRecord], grid_id: usize, target: TargetKind) -> Vec<bool> {
    select(records, grid_id, target).filter(|r| r.is_valid()).map(|r| r.ci_hit).collect()
}

/// One error norm per valid replication.
pub fn error_norms(records: &[ReplicationRecord], grid_id: usize, target: TargetKind) -> Vec<f64> {
    select(records, grid_id, target).filter(|r| r.is_valid() && r.component == 0).map(|r| r.error_norm).collect()
}

pub fn coverage_stats(records: &[ReplicationRecord], grid_id: usize, target: TargetKind) -> Result<CoverageStats> {
    coverage_from_hits(&ci_hits(records, grid_id, target))
}

/// Slope of log median error against log N over the listed grid points.
pub fn grid_slope(
    cfg: &ExperimentConfig,
    records: &[ReplicationRecord],
    grid_ids: &[usize],
    target: TargetKind,
) -> Result<super::stats::RateFit> {
    let points: Vec<(f64, Vec<f64>)> =
        grid_ids.iter().map(|&g| (cfg.grid[g].n as f64, error_norms(records, g, target))).collect();
    rate_regression(&points)
}

/// Grid points that differ only in N and T, each list sorted by N.
pub fn series(cfg: &ExperimentConfig) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (g, gp) in cfg.grid.iter().enumerate() {
        let key = GridPoint { n: 0, t: 0, ..gp.clone() };
        let key = serde_json::to_string(&key).expect("grid point serialises");
        groups.entry(key).or_default().push(g);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    for s in &mut out {
        s.sort_by_key(|&g| cfg.grid[g].n);
    }
    out.sort();
    out
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

pub fn summarize(cfg: &ExperimentConfig, run: &RunOutput) -> Summary {
    let records = &run.records;
    let mut targets: Vec<TargetKind> = cfg.targets.iter().map(|t| t.kind).collect();
    targets.sort();
    targets.dedup();
    let mut notes = Vec::new();

    let grid = cfg
        .grid
        .iter()
        .enumerate()
        .map(|(g, gp)| GridSummary {
            grid_id: g,
            n: gp.n,
            t: gp.t,
            r: gp.r,
            alpha: gp.alpha(),
            replications: cfg.replications,
            elapsed_seconds: run.elapsed_seconds.get(g).copied().unwrap_or(f64::NAN),
            targets: targets
                .iter()
                .map(|&k| {
                    let all = select(records, g, k).count();
                    let draws = studentized_draws(records, g, k);
                    TargetSummary {
                        target: k,
                        valid_records: draws.len(),
                        flagged_records: all - draws.len(),
                        coverage: coverage_stats(records, g, k).ok(),
                        median_error: median(&error_norms(records, g, k)),
                        studentized_variance: sample_variance(&draws),
                        normality: normality_check(&draws).ok(),
                    }
                })
                .collect(),
        })
        .collect();

    let mut rates = Vec::new();
    for (s, ids) in series(cfg).into_iter().enumerate() {
        if ids.len() < 3 {
            continue;
        }
        if ids.iter().any(|&g| cfg.grid[g].n != cfg.grid[g].t) {
            notes.push(format!(
                "series {s}: N != T at some grid points, so more than one rate term may matter; slopes are against log N only"
            ));
        }
        for &k in &targets {
            if let Ok(fit) = grid_slope(cfg, records, &ids, k) {
                rates.push(RateSummary {
                    series: s,
                    target: k,
                    grid_ids: ids.clone(),
                    slope: fit.slope,
                    intercept: fit.intercept,
                    stderr: fit.stderr,
                });
            }
        }
    }

    let checks = cfg
        .checks
        .iter()
        .map(|c| {
            let value = match c.kind {
                CheckKind::Coverage => coverage_stats(records, c.grid[0], c.target).map(|s| s.coverage),
                CheckKind::Ks => normality_check(&studentized_draws(records, c.grid[0], c.target)).map(|s| s.ks_stat),
                CheckKind::Slope => grid_slope(cfg, records, &c.grid, c.target).map(|f| f.slope),
            };
            let (value, note) = match value {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let pass = value.is_some_and(|v| c.min.is_none_or(|m| v >= m) && c.max.is_none_or(|m| v <= m));
            CheckResult {
                kind: c.kind,
                target: c.target,
                grid: c.grid.clone(),
                value,
                min: c.min,
                max: c.max,
                pass,
                note,
            }
        })
        .collect();

    Summary {
        library_version: crate::VERSION,
        config: serde_json::to_value(cfg).expect("config serialises"),
        grid,
        rates,
        checks,
        notes,
    }
}

/// Error-versus-N and coverage-versus-N data as comma-separated xy pairs,
/// one gnuplot index block per series. Returns `(file name, contents)` pairs.
pub fn plot_data(cfg: &ExperimentConfig, summary: &Summary) -> Vec<(String, String)> {
    let mut targets: Vec<TargetKind> = cfg.targets.iter().map(|t| t.kind).collect();
    targets.sort();
    targets.dedup();
    let mut files = Vec::new();
    for k in targets {
        let mut err = String::from("# n,median_error\n");
        let mut cov = String::from("# n,coverage,se\n");
        for (s, ids) in series(cfg).iter().enumerate() {
            if s > 0 {
                err.push_str("\n\n");
                cov.push_str("\n\n");
            }
            err.push_str(&format!("# series {s} alpha {}\n", cfg.grid[ids[0]].alpha()));
            cov.push_str(&format!("# series {s} alpha {}\n", cfg.grid[ids[0]].alpha()));
            for &g in ids {
                let ts = summary.grid[g].targets.iter().find(|x| x.target == k).expect("target summarised");
                err.push_str(&format!("{},{:?}\n", cfg.grid[g].n, ts.median_error));
                if let Some(c) = ts.coverage {
                    cov.push_str(&format!("{},{:?},{:?}\n", cfg.grid[g].n, c.coverage, c.se));
                }
            }
        }
        files.push((format!("error_vs_n_{}.csv", k.as_str()), err));
        files.push((format!("coverage_vs_n_{}.csv", k.as_str()), cov));
    }
    files
}

/// Write `records.csv`, `summary.json` and `plots/`. The directory must be
/// empty or absent unless `overwrite` is set.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, run: &RunOutput, overwrite: bool) -> Result<Summary> {
    prepare_output_dir(dir, overwrite)?;
    let summary = summarize(cfg, run);
    let f = fs::File::create(dir.join("records.csv"))?;
    write_records_csv(&run.records, std::io::BufWriter::new(f))?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    for (name, body) in plot_data(cfg, &summary) {
        fs::write(plots.join(name), body)?;
    }
    Ok(summary)
}

pub fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)?.next().is_some();
        if non_empty && !overwrite {
            return Err(Error::Io(format!(
                "output directory {} is not empty; pass --overwrite to replace its contents",
                dir.display()
            )));
        }
        if non_empty {
            for name in ["records.csv", "summary.json"] {
                let p = dir.join(name);
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
            let plots = dir.join("plots");
            if plots.exists() {
                fs::remove_dir_all(plots)?;
            }
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}
