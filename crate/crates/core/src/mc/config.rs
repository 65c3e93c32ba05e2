//! Experiment configuration: a versioned TOML schema where unknown keys are
//! errors, plus dotted-path overrides applied before deserialisation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dgp::{
    CrossDependence, DgpDescriptor, LoadingKind, LoadingScheme, NoiseSpec, TemporalDependence,
};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub variance_mode: VarianceMode,
    /// Bartlett bandwidth for plug-in loading variances; defaults to
    /// `⌈T^{1/3}⌉` under temporal dependence and 0 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<usize>,
    #[serde(default = "default_targets")]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    pub grid: Vec<GridPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
}

fn default_level() -> f64 {
    0.95
}

fn default_targets() -> Vec<TargetSpec> {
    [TargetKind::Loading, TargetKind::Factor, TargetKind::Common]
        .into_iter()
        .map(|kind| TargetSpec { kind, unit: None, period: None })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    #[default]
    Oracle,
    PlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Loading,
    Factor,
    Common,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Loading => "loading",
            TargetKind::Factor => "factor",
            TargetKind::Common => "common",
        }
    }

    pub const ALL: [TargetKind; 3] = [TargetKind::Loading, TargetKind::Factor, TargetKind::Common];
}

/// A target with optional unit/period selectors; unset selectors resolve to
/// `⌊N/2⌋` and `⌊T/2⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub kind: TargetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
}

impl TargetSpec {
    pub fn resolve(&self, n: usize, t: usize) -> (usize, usize) {
        (self.unit.unwrap_or(n / 2), self.period.unwrap_or(t / 2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(default = "yes")]
    pub decomposition: bool,
    #[serde(default)]
    pub leave_one_out: bool,
    #[serde(default)]
    pub leave_neighbor_out: bool,
    /// Half width of the period window; defaults per noise process.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<usize>,
}

fn yes() -> bool {
    true
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self { decomposition: true, leave_one_out: false, leave_neighbor_out: false, delta: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub n: usize,
    pub t: usize,
    #[serde(default = "one")]
    pub r: usize,
    #[serde(default)]
    pub loadings: LoadingConfig,
    /// Σ_F as a list of rows; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_cov: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub noise: NoiseConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingKindConfig {
    Homogeneous,
    SparseStrong,
    HeterogeneousExponents,
    FixedNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingConfig {
    #[serde(default = "homogeneous")]
    pub kind: LoadingKindConfig,
    #[serde(default = "unit_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_lambda: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub exponent_spread: f64,
}

impl Default for LoadingConfig {
    fn default() -> Self {
        Self { kind: LoadingKindConfig::Homogeneous, alpha: 1.0, sigma_lambda: None, exponent_spread: 0.0 }
    }
}

fn homogeneous() -> LoadingKindConfig {
    LoadingKindConfig::Homogeneous
}

fn unit_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "unit_sd")]
    pub base_sd: f64,
    #[serde(default)]
    pub cross: CrossConfig,
    #[serde(default)]
    pub temporal: TemporalConfig,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { base_sd: 1.0, cross: CrossConfig::Independent, temporal: TemporalConfig::Independent }
    }
}

fn unit_sd() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CrossConfig {
    #[default]
    Independent,
    Block { block_size: usize, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemporalConfig {
    #[default]
    Independent,
    Ar {
        coeffs: Vec<f64>,
        #[serde(default = "unit_sd")]
        innovation_sd: f64,
    },
    Ma {
        coeffs: Vec<f64>,
        #[serde(default = "unit_sd")]
        innovation_sd: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// CI coverage at one grid point.
    Coverage,
    /// Log-log slope of the median error over several grid points.
    Slope,
    /// KS statistic of the pooled studentized draws at one grid point.
    Ks,
}

/// An acceptance threshold evaluated after the run; any failure turns the
/// exit code to 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub kind: CheckKind,
    pub target: TargetKind,
    pub grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

fn matrix_from_rows(rows: &[Vec<f64>], r: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != r) {
        return Err(Error::ConfigInvalid(format!("{name} must be {r}x{r}")));
    }
    Ok(DMatrix::from_fn(r, r, |i, j| rows[i][j]))
}

impl GridPoint {
    pub fn alpha(&self) -> f64 {
        match self.loadings.kind {
            LoadingKindConfig::FixedNorm => 0.0,
            _ => self.loadings.alpha,
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        let cross = match self.noise.cross {
            CrossConfig::Independent => CrossDependence::Independent,
            CrossConfig::Block { block_size, rho } => CrossDependence::BlockNeighbors { block_size, rho },
        };
        let temporal = match &self.noise.temporal {
            TemporalConfig::Independent => TemporalDependence::Independent,
            TemporalConfig::Ar { coeffs, innovation_sd } => {
                TemporalDependence::Ar { coeffs: coeffs.clone(), innovation_sd: *innovation_sd }
            }
            TemporalConfig::Ma { coeffs, innovation_sd } => {
                TemporalDependence::Ma { coeffs: coeffs.clone(), innovation_sd: *innovation_sd }
            }
        };
        NoiseSpec { cross, temporal, base_sd: self.noise.base_sd }
    }

    pub fn descriptor(&self, seed: u64) -> Result<DgpDescriptor> {
        let r = self.r;
        let identity = || DMatrix::identity(r, r);
        let sigma_lambda = match &self.loadings.sigma_lambda {
            Some(rows) => matrix_from_rows(rows, r, "sigma_lambda")?,
            None => identity(),
        };
        let factor_cov = match &self.factor_cov {
            Some(rows) => matrix_from_rows(rows, r, "factor_cov")?,
            None => identity(),
        };
        let kind = match self.loadings.kind {
            LoadingKindConfig::Homogeneous => LoadingKind::Homogeneous,
            LoadingKindConfig::SparseStrong => LoadingKind::SparseStrong,
            LoadingKindConfig::HeterogeneousExponents => LoadingKind::HeterogeneousExponents,
            LoadingKindConfig::FixedNorm => LoadingKind::FixedNorm,
        };
        Ok(DgpDescriptor {
            n: self.n,
            t: self.t,
            r,
            loading_scheme: LoadingScheme {
                kind,
                alpha: self.loadings.alpha,
                sigma_lambda,
                exponent_spread: self.loadings.exponent_spread,
            },
            factor_cov,
            noise: self.noise_spec(),
            seed,
        })
    }

    /// Half width used by leave-neighbour-out diagnostics.
    pub fn delta(&self, diag: &Diagnostics) -> usize {
        diag.delta.unwrap_or_else(|| self.noise_spec().default_delta(self.n))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parse, apply `key=value` overrides, then deserialise.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        value.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// Every problem found, in a stable order; empty when the config is clean.
    pub fn diagnostics(&self) -> Vec<Error> {
        let mut out = Vec::new();
        let bad = |msg: String| Error::ConfigInvalid(msg);
        if self.schema_version != SCHEMA_VERSION {
            out.push(bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.replications == 0 {
            out.push(bad("replications must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            out.push(bad(format!("ci_level {} outside (0, 1)", self.ci_level)));
        }
        if self.grid.is_empty() {
            out.push(bad("grid is empty".into()));
        }
        if self.targets.is_empty() {
            out.push(bad("targets is empty".into()));
        }
        for (g, gp) in self.grid.iter().enumerate() {
            match gp.descriptor(0).and_then(|d| d.validate()) {
                Ok(()) => {}
                Err(e) => out.push(Error::ConfigInvalid(format!("grid[{g}]: {e}"))),
            }
            for (k, tgt) in self.targets.iter().enumerate() {
                if let Some(i) = tgt.unit {
                    if i >= gp.n {
                        out.push(bad(format!("targets[{k}]: unit {i} out of range for grid[{g}] with n = {}", gp.n)));
                    }
                }
                if let Some(t) = tgt.period {
                    if t >= gp.t {
                        out.push(bad(format!("targets[{k}]: period {t} out of range for grid[{g}] with t = {}", gp.t)));
                    }
                }
            }
        }
        for (k, c) in self.checks.iter().enumerate() {
            if let Some(&g) = c.grid.iter().find(|&&g| g >= self.grid.len()) {
                out.push(bad(format!("checks[{k}]: grid index {g} out of range")));
            }
            match c.kind {
                CheckKind::Slope if c.grid.len() < 3 => {
                    out.push(bad(format!("checks[{k}]: slope needs at least 3 grid points")))
                }
                CheckKind::Coverage | CheckKind::Ks if c.grid.len() != 1 => {
                    out.push(bad(format!("checks[{k}]: needs exactly one grid point")))
                }
                _ => {}
            }
            if c.min.is_none() && c.max.is_none() {
                out.push(bad(format!("checks[{k}]: neither min nor max given")));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.diagnostics().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Apply `a.b.0.c=value`; numeric segments index arrays. The value is read
/// as a TOML literal, falling back to a bare string.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override '{assignment}' is not key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Parse(format!("override path '{path}' is malformed")));
    }
    let mut cur = root;
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(seg.to_string(), value);
                    return Ok(());
                }
                t.entry(seg.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::Parse(format!("override '{path}': '{seg}' is not an array index")))?;
                let len = a.len();
                let slot = a
                    .get_mut(idx)
                    .ok_or_else(|| Error::Parse(format!("override '{path}': index {idx} beyond length {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Parse(format!("override '{path}': '{seg}' is not a table or array"))),
        };
    }
    unreachable!("loop returns on the last segment")
}
