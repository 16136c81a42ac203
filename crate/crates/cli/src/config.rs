//! Run configuration: one JSON document, checked field by field on load.

use std::path::Path;

use anderson_dos::dos::{GridSpec, DEFAULT_MAX_RATIO};
use anderson_dos::expansion::{LocalOperator, ModelParams, OperatorEntries, SeriesOptions};
use anderson_dos::moments::{Branch, ContinuationWindow, DiskWindow, MixedContour, Sheet};
use anderson_dos::oracle::BoxSpec;
use anderson_dos::walks::{LatticeSite, WalkLimits, MAX_DIM};
use anderson_dos::{Distribution, DistributionSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowConfig>,
    #[serde(default)]
    pub series: SeriesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Complex energy as `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<SitesConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "box")]
    pub box_: Option<BoxConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<PathsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentsConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    pub h: f64,
    pub distribution: DistributionSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub interval: [f64; 2],
    /// Defaults to 0.9 × the room left inside the support.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Defaults to `delta / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_prime: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_max_len")]
    pub max_len: [usize; MAX_DIM],
    /// Curves are refused above this convergence ratio.
    #[serde(default = "default_max_ratio")]
    pub max_ratio: f64,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_k_max() -> usize {
    14
}

fn default_max_len() -> [usize; MAX_DIM] {
    WalkLimits::default().max_len
}

fn default_max_ratio() -> f64 {
    DEFAULT_MAX_RATIO
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            k_max: default_k_max(),
            max_len: default_max_len(),
            max_ratio: default_max_ratio(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SitesConfig {
    pub n: Vec<i32>,
    pub m: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub side: usize,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum OperatorConfig {
    #[default]
    Identity,
    Zero,
    Shift { axis: usize, step: i32 },
    /// `i(S - S*)` along `axis`.
    Current { axis: usize },
    /// `A(x, x + offset) = value`.
    Translation { entries: Vec<(Vec<i32>, Complex64)> },
    /// `A(x, y) = value`.
    Explicit {
        entries: Vec<(Vec<i32>, Vec<i32>, Complex64)>,
    },
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    #[serde(default)]
    pub sheet: Sheet,
    /// Disk window centre; with it set the argument may sit on the axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Defaults to `delta / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_prime: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationConfig {
    pub z1: Complex64,
    pub z2: Complex64,
    #[serde(default = "upper_branch")]
    pub first: BranchConfig,
    #[serde(default = "lower_branch")]
    pub second: BranchConfig,
    #[serde(default)]
    pub a1: OperatorConfig,
    #[serde(default)]
    pub a2: OperatorConfig,
}

fn upper_branch() -> BranchConfig {
    BranchConfig {
        sheet: Sheet::Upper,
        center: None,
        delta: None,
        delta_prime: None,
    }
}

fn lower_branch() -> BranchConfig {
    BranchConfig {
        sheet: Sheet::Lower,
        ..upper_branch()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidateTarget {
    #[default]
    Resolvent,
    Correlation,
    Dos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default)]
    pub target: ValidateTarget,
    /// Energies for the `dos` target.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
}

fn default_bin_width() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<Vec<i32>>,
    /// Walks are listed when there are at most this many.
    #[serde(default = "default_list_limit")]
    pub list_limit: u64,
}

fn default_list_limit() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    pub max_ell: u32,
    #[serde(default)]
    pub sheet: Sheet,
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: Some(field.to_string()),
        message: message.into(),
    }
}

fn missing(field: &str) -> CliError {
    invalid(field, "required for this command")
}

/// Reads a configuration, or the `config` member of a previous report.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        field: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config {
        field: None,
        message: format!("invalid JSON: {e}"),
    })?;
    let (value, prefix) = match value {
        serde_json::Value::Object(mut map) if map.contains_key("config") => {
            (map.remove("config").expect("checked"), "config.")
        }
        other => (other, ""),
    };
    let config: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config {
            field: Some(format!("{prefix}{path}")),
            message: e.into_inner().to_string(),
        }
    })?;
    config.check()?;
    Ok(config)
}

fn check_positive(field: &str, x: f64) -> Result<(), CliError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(invalid(field, format!("must be positive and finite, got {x}")));
    }
    Ok(())
}

fn check_site(field: &str, coords: &[i32], d: usize) -> Result<(), CliError> {
    if coords.len() != d {
        return Err(invalid(
            field,
            format!("has {} coordinates but d = {d}", coords.len()),
        ));
    }
    Ok(())
}

impl RunConfig {
    /// Every physical invariant that can be checked without computing.
    pub fn check(&self) -> Result<(), CliError> {
        let d = self.model.d;
        if d == 0 || d > MAX_DIM {
            return Err(invalid("model.d", format!("must be in 1..={MAX_DIM}, got {d}")));
        }
        if !(self.model.h.is_finite() && self.model.h >= 0.0) {
            return Err(invalid("model.h", format!("must be >= 0, got {}", self.model.h)));
        }
        self.distribution()?;
        if let Some(w) = &self.window {
            let [a, b] = w.interval;
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(invalid("window.interval", format!("needs a < b, got [{a}, {b}]")));
            }
            if let Some(delta) = w.delta {
                check_positive("window.delta", delta)?;
            }
            if let Some(dp) = w.delta_prime {
                check_positive("window.delta_prime", dp)?;
                match w.delta {
                    None => return Err(invalid("window.delta_prime", "set without window.delta")),
                    Some(delta) if dp >= delta => {
                        return Err(invalid(
                            "window.delta_prime",
                            format!("must be smaller than window.delta = {delta}, got {dp}"),
                        ))
                    }
                    _ => {}
                }
            }
            self.window()?;
        }
        check_positive("series.tol", self.series.tol)?;
        check_positive("series.max_ratio", self.series.max_ratio)?;
        let limits = self.limits();
        if self.series.k_max > limits.max_len(d) {
            return Err(invalid(
                "series.k_max",
                format!(
                    "{} exceeds the walk-length cap {} for d = {d}",
                    self.series.k_max,
                    limits.max_len(d)
                ),
            ));
        }
        if let Some(g) = &self.grid {
            g.points().map_err(|e| invalid("grid", e.to_string()))?;
        }
        if let Some(z) = self.z {
            if !z.is_finite() {
                return Err(invalid("z", "must be finite"));
            }
        }
        if let Some(s) = &self.sites {
            check_site("sites.n", &s.n, d)?;
            check_site("sites.m", &s.m, d)?;
        }
        if let Some(b) = &self.box_ {
            BoxSpec::new(d, b.side).map_err(|e| invalid("box.side", e.to_string()))?;
            if b.samples < 2 {
                return Err(invalid("box.samples", format!("must be at least 2, got {}", b.samples)));
            }
        }
        if let Some(c) = &self.correlation {
            self.operator("correlation.a1", &c.a1)?;
            self.operator("correlation.a2", &c.a2)?;
            self.mixed_contour()?;
        }
        if let Some(v) = &self.validate {
            check_positive("validate.bin_width", v.bin_width)?;
            if v.target == ValidateTarget::Dos && d != 1 {
                return Err(invalid("validate.target", "the dos oracle counts eigenvalues and needs d = 1"));
            }
        }
        if let Some(p) = &self.paths {
            if let Some(s) = &p.start {
                check_site("paths.start", s, d)?;
            }
            if let Some(e) = &p.end {
                check_site("paths.end", e, d)?;
            }
            if p.k > limits.max_len(d) {
                return Err(invalid("paths.k", format!("exceeds the walk-length cap {}", limits.max_len(d))));
            }
        }
        Ok(())
    }

    pub fn distribution(&self) -> Result<Distribution, CliError> {
        Distribution::new(self.model.distribution.clone())
            .map_err(|e| invalid("model.distribution", e.to_string()))
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(self.model.d, self.model.h, self.distribution()?)
            .map_err(|e| invalid("model", e.to_string()))
    }

    pub fn limits(&self) -> WalkLimits {
        WalkLimits {
            max_len: self.series.max_len,
        }
    }

    pub fn options(&self) -> SeriesOptions {
        SeriesOptions {
            tol: self.series.tol,
            k_max: self.series.k_max,
            limits: self.limits(),
        }
    }

    pub fn window(&self) -> Result<ContinuationWindow, CliError> {
        let w = self.window.as_ref().ok_or_else(|| missing("window"))?;
        let dist = self.distribution()?;
        let interval = (w.interval[0], w.interval[1]);
        let built = match w.delta {
            None => ContinuationWindow::default_for(&dist, interval),
            Some(delta) => ContinuationWindow::new(
                &dist,
                interval,
                delta,
                w.delta_prime.unwrap_or(0.5 * delta),
            ),
        };
        built.map_err(|e| invalid("window", e.to_string()))
    }

    pub fn z(&self) -> Result<Complex64, CliError> {
        self.z.ok_or_else(|| missing("z"))
    }

    pub fn sites(&self) -> Result<(LatticeSite, LatticeSite), CliError> {
        let d = self.model.d;
        match &self.sites {
            None => {
                let o = LatticeSite::origin(d).map_err(|e| invalid("model.d", e.to_string()))?;
                Ok((o, o))
            }
            Some(s) => Ok((
                LatticeSite::new(&s.n).map_err(|e| invalid("sites.n", e.to_string()))?,
                LatticeSite::new(&s.m).map_err(|e| invalid("sites.m", e.to_string()))?,
            )),
        }
    }

    pub fn box_spec(&self) -> Result<(BoxSpec, &BoxConfig), CliError> {
        let b = self.box_.as_ref().ok_or_else(|| missing("box"))?;
        let spec = BoxSpec::new(self.model.d, b.side).map_err(|e| invalid("box.side", e.to_string()))?;
        Ok((spec, b))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.box_
            .as_ref()
            .and_then(|b| b.seed)
            .ok_or_else(|| missing("box.seed"))
    }

    pub fn operator(&self, field: &str, op: &OperatorConfig) -> Result<LocalOperator, CliError> {
        let d = self.model.d;
        let built = match op {
            OperatorConfig::Identity => Ok(LocalOperator::identity(d)),
            OperatorConfig::Zero => Ok(LocalOperator::zero(d)),
            OperatorConfig::Shift { axis, step } => LocalOperator::shift(d, *axis, *step),
            OperatorConfig::Current { axis } => LocalOperator::current(d, *axis),
            OperatorConfig::Translation { entries } => {
                LocalOperator::new(d, OperatorEntries::Translation(entries.clone()))
            }
            OperatorConfig::Explicit { entries } => {
                LocalOperator::new(d, OperatorEntries::Explicit(entries.clone()))
            }
        };
        built.map_err(|e| invalid(field, e.to_string()))
    }

    fn branch(field: &str, b: &BranchConfig) -> Result<Branch, CliError> {
        let window = match (b.center, b.delta) {
            (None, None) if b.delta_prime.is_none() => None,
            (Some(center), Some(delta)) => {
                let dp = b.delta_prime.unwrap_or(0.5 * delta);
                Some(DiskWindow::new(center, delta, dp).map_err(|e| invalid(field, e.to_string()))?)
            }
            _ => {
                return Err(invalid(
                    field,
                    "a disk window needs both center and delta",
                ))
            }
        };
        Ok(Branch {
            sheet: b.sheet,
            window,
        })
    }

    pub fn mixed_contour(&self) -> Result<MixedContour, CliError> {
        let c = self.correlation.as_ref().ok_or_else(|| missing("correlation"))?;
        let first = Self::branch("correlation.first", &c.first)?;
        let second = Self::branch("correlation.second", &c.second)?;
        MixedContour::new(&self.distribution()?, first, second)
            .map_err(|e| invalid("correlation", e.to_string()))
    }

    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        self.grid
            .as_ref()
            .ok_or_else(|| missing("grid"))?
            .points()
            .map_err(|e| invalid("grid", e.to_string()))
    }
}
