use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::normal_cdf;

pub const MIN_COVERAGE_RECORDS: usize = 30;
pub const MIN_GRID_POINTS: usize = 3;
pub const MIN_NORMALITY_DRAWS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageStats {
    pub coverage: f64,
    pub se: f64,
    pub n: usize,
}

/// Proportion of hits with its binomial standard error.
pub fn coverage_from_hits(hits: &[bool]) -> Result<CoverageStats> {
    let n = hits.len();
    if n < MIN_COVERAGE_RECORDS {
        return Err(Error::TooFewRecords { have: n, need: MIN_COVERAGE_RECORDS });
    }
    let p = hits.iter().filter(|&&h| h).count() as f64 / n as f64;
    Ok(CoverageStats { coverage: p, se: (p * (1.0 - p) / n as f64).sqrt(), n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Least squares of `log(median statistic)` on `log N`, one point per grid
/// entry `(N, draws)`.
pub fn rate_regression(points: &[(f64, Vec<f64>)]) -> Result<RateFit> {
    if points.len() < MIN_GRID_POINTS {
        return Err(Error::TooFewGridPoints { have: points.len(), need: MIN_GRID_POINTS });
    }
    if let Some((_, d)) = points.iter().find(|(_, d)| d.len() < MIN_COVERAGE_RECORDS) {
        return Err(Error::TooFewRecords { have: d.len(), need: MIN_COVERAGE_RECORDS });
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|(n, d)| (n.ln(), median(d).ln())).collect();
    Ok(ols(&xy))
}

/// Simple linear regression with the usual slope standard error.
pub fn ols(xy: &[(f64, f64)]) -> RateFit {
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let stderr = if xy.len() > 2 { (ssr / (k - 2.0) / sxx).sqrt() } else { f64::NAN };
    RateFit { slope, intercept, stderr }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityStats {
    pub ks_stat: f64,
    pub skew: f64,
    pub excess_kurtosis: f64,
    pub n: usize,
    /// 1% critical value `1.63/√n`.
    pub critical_1pct: f64,
    pub normal: bool,
}

pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// One-sample Kolmogorov–Smirnov statistic against N(0, 1).
pub fn ks_statistic(draws: &[f64]) -> f64 {
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0_f64, |d, (k, &x)| {
        let c = normal_cdf(x);
        d.max((k as f64 + 1.0) / n - c).max(c - k as f64 / n)
    })
}

pub fn normality_check(draws: &[f64]) -> Result<NormalityStats> {
    let n = draws.len();
    if n < MIN_NORMALITY_DRAWS {
        return Err(Error::TooFewDraws { have: n, need: MIN_NORMALITY_DRAWS });
    }
    let nf = n as f64;
    let mean = draws.iter().sum::<f64>() / nf;
    let m2 = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    let m3 = draws.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / nf;
    let m4 = draws.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let (skew, excess_kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0) } else { (0.0, 0.0) };
    let ks_stat = ks_statistic(draws);
    let critical_1pct = ks_critical_1pct(n);
    Ok(NormalityStats { ks_stat, skew, excess_kurtosis, n, critical_1pct, normal: ks_stat < critical_1pct })
}
