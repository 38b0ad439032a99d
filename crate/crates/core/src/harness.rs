//! Reproducible convergence and rate experiments.
//!
//! An [`ExperimentConfig`] fixes the kernel, the data-generating process,
//! the sample-size grid, the replication count and the seed. Every random
//! draw is keyed off the seed, so rerunning a config gives byte-identical
//! CSV output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    long_run_variance_estimate, rate_regression, second_moment_trajectory,
    uniform_integrability_profile, MaxLagRule, RateFit, RateOptions, Replicates, TailMoment,
};
use crate::error::{Error, Result};
use crate::kernels::{catalog_kernel, center, Kernel, MIN_CENTERING_MC};
use crate::processes::{long_run_variance_analytic, theorem_applicability, Applicability, ProcessSpec};
use crate::projections::{
    canonical_kernel, degeneracy_order, variance_with_se, ProjectionMode, ReferenceMeasure,
    DEFAULT_ORACLE_SIZE, MIN_ORACLE_SIZE,
};
use crate::rng::{Role, StreamKey};
use crate::sum::mean_var;
use crate::ustat::{
    component_ustat, exact_feasible, u_statistic_exact_with, u_statistic_incomplete, ExactOptions,
    DEFAULT_CHUNKS, DEFAULT_ENUMERATION_CAP, MIN_SUBSETS,
};
use crate::wasserstein::{w2_to_centred_normal, EmpiricalDistribution};

pub const MIN_REPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    Analytic,
    Estimated,
}

impl fmt::Display for SigmaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaSource::Analytic => "analytic",
            SigmaSource::Estimated => "estimated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown format {other:?}; use csv or json"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: String,
    pub process: ProcessSpec,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub projection: ProjectionMode,
    pub oracle_size: usize,
    pub enumeration_cap: u64,
    pub chunks: usize,
    /// Subsets per replication once C(n, m) exceeds the enumeration cap.
    pub incomplete_subsets: usize,
    pub sigma: SigmaSource,
    /// Overrides the kernel's moment order p.
    pub moment_order: Option<f64>,
    /// Component orders for rate experiments; all of 1..=m when absent.
    pub orders: Option<Vec<usize>>,
    pub ui_thresholds: Vec<f64>,
    pub bootstrap: usize,
    pub probe_size: usize,
    /// Path length for estimating σ² and σ̃².
    pub lrv_length: usize,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    /// Record elapsed milliseconds in `wall_ms`; zero otherwise, which keeps
    /// reruns byte-identical.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kernel: "mean".into(),
            process: ProcessSpec::iid_normal(0.0, 1.0).expect("valid default"),
            n_grid: vec![50, 200, 800],
            reps: 1000,
            seed: 1,
            projection: ProjectionMode::TrueXi,
            oracle_size: DEFAULT_ORACLE_SIZE,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            chunks: DEFAULT_CHUNKS,
            incomplete_subsets: 100_000,
            sigma: SigmaSource::Analytic,
            moment_order: None,
            orders: None,
            ui_thresholds: vec![0.0, 1.0, 2.0, 4.0, 8.0],
            bootstrap: 200,
            probe_size: 2000,
            lrv_length: 100_000,
            format: OutputFormat::Csv,
            out: None,
            record_wall_time: false,
        }
    }
}

/// Parse a config file into a key/value map.
///
/// Accepts either a JSON object or `key = value` lines, where `#` starts a
/// comment and each value is read as a JSON literal, falling back to a bare
/// string (`process = ar1_gaussian(0.5,1)`). Dashes in keys become
/// underscores.
pub fn parse_config_text(text: &str) -> Result<Map<String, Value>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return match serde_json::from_str::<Value>(trimmed) {
            Ok(Value::Object(map)) => Ok(normalize_keys(map)),
            Ok(_) => Err(Error::Config("config JSON must be an object".into())),
            Err(e) => Err(Error::Config(format!("config JSON: {e}"))),
        };
    }
    let mut map = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        map.insert(normalize_key(key.trim()), config_value(value.trim()));
    }
    Ok(map)
}

/// A command-line or config value: JSON literal if it parses, else a string.
pub fn config_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn normalize_key(key: &str) -> String {
    key.replace('-', "_")
}

fn normalize_keys(map: Map<String, Value>) -> Map<String, Value> {
    map.into_iter().map(|(k, v)| (normalize_key(&k), v)).collect()
}

impl ExperimentConfig {
    pub fn from_map(map: Map<String, Value>) -> Result<Self> {
        let cfg: Self =
            serde_json::from_value(Value::Object(map)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(parse_config_text(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.reps < MIN_REPS {
            return cfg(format!("reps must be >= {MIN_REPS}, got {}", self.reps));
        }
        if self.n_grid.is_empty() {
            return cfg("n_grid is empty".into());
        }
        if self.oracle_size < MIN_ORACLE_SIZE {
            return cfg(format!("oracle_size must be >= {MIN_ORACLE_SIZE}"));
        }
        if self.incomplete_subsets < MIN_SUBSETS {
            return cfg(format!("incomplete_subsets must be >= {MIN_SUBSETS}"));
        }
        if self.chunks == 0 {
            return cfg("chunks must be positive".into());
        }
        if self.probe_size < 1000 {
            return cfg("probe_size must be >= 1000".into());
        }
        if self.lrv_length < 200 {
            return cfg("lrv_length must be >= 200".into());
        }
        if self.ui_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return cfg("ui_thresholds must be strictly ascending".into());
        }
        self.process.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the canonical JSON of every
    /// field that affects the numbers.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.format = OutputFormat::Csv;
        canonical.out = None;
        canonical.record_wall_time = false;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn exact_options(&self) -> ExactOptions {
        ExactOptions {
            cap: self.enumeration_cap,
            chunks: self.chunks,
        }
    }

    /// The centred kernel under the process marginal, with any moment-order
    /// override applied.
    pub fn build_kernel(&self) -> Result<Kernel> {
        let mut kernel = catalog_kernel(&self.kernel, Some(&self.process))?;
        if let Some(p) = self.moment_order {
            kernel = kernel.with_moment_order(p).map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < kernel.degree()) {
            return Err(Error::Config(format!(
                "n = {n} is smaller than the kernel degree {}",
                kernel.degree()
            )));
        }
        let key = StreamKey::new(self.seed, Role::Oracle).block(1);
        center(&kernel, &self.process, MIN_CENTERING_MC * 10, key)
    }

    fn true_reference(&self) -> Result<ReferenceMeasure> {
        let key = StreamKey::new(self.seed, Role::Oracle);
        Ok(ReferenceMeasure::true_xi(&self.process, self.oracle_size, key)?
            .with_closed_forms(true)
            .with_cap(self.enumeration_cap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    Incomplete { subsets: usize, mean_mc_se: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub n: usize,
    pub reps: usize,
    pub estimator: Estimator,
    /// d₂(law of √n·U_h, N(0, σ²)) with the law replaced by its empirical
    /// version over replications.
    pub d2_full: f64,
    /// Bootstrap standard error of `d2_full` over replications.
    pub d2_full_se: Option<f64>,
    pub d2_linear: f64,
    pub rms_remainder: f64,
    pub mean_square: f64,
    pub mean_square_se: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub sigma_sq: f64,
    pub sigma_sq_se: Option<f64>,
    pub sigma_source: SigmaSource,
    pub applicability: Applicability,
    pub degeneracy_order: usize,
    pub degenerate: bool,
    pub inapplicable: bool,
    pub warnings: Vec<String>,
    pub records: Vec<GridRecord>,
    pub ui_profile: Vec<TailMoment>,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    config_hash: &'a str,
    seed: u64,
    n: usize,
    #[serde(rename = "R")]
    reps: usize,
    d2_full: f64,
    d2_linear: f64,
    rms_remainder: f64,
    mean_square: f64,
    sigma_sq_used: f64,
    sigma_source: SigmaSource,
    applicable: bool,
    degeneracy_order: usize,
    wall_ms: u64,
}

impl ConvergenceReport {
    pub fn record(&self, n: usize) -> Option<&GridRecord> {
        self.records.iter().find(|r| r.n == n)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(CsvRow {
                config_hash: &self.config_hash,
                seed: self.config.seed,
                n: r.n,
                reps: r.reps,
                d2_full: r.d2_full,
                d2_linear: r.d2_linear,
                rms_remainder: r.rms_remainder,
                mean_square: r.mean_square,
                sigma_sq_used: self.sigma_sq,
                sigma_source: self.sigma_source,
                applicable: self.applicability.applicable,
                degeneracy_order: self.degeneracy_order,
                wall_ms: r.wall_ms,
            })
            .map_err(|e| Error::Numeric(format!("csv: {e}")))?;
        }
        finish_csv(w)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(format!("json: {e}")))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Numeric(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

struct Sigma {
    sq: f64,
    se: Option<f64>,
    warnings: Vec<String>,
}

fn limit_variance(cfg: &ExperimentConfig, kernel: &Kernel, reference: &ReferenceMeasure) -> Result<Sigma> {
    let m = kernel.degree() as f64;
    match cfg.sigma {
        SigmaSource::Analytic => {
            let sq = long_run_variance_analytic(&cfg.process, kernel).ok_or_else(|| {
                Error::Config(format!(
                    "no closed-form limit variance for kernel {} on {}; use sigma = estimated",
                    cfg.kernel, cfg.process
                ))
            })?;
            Ok(Sigma {
                sq,
                se: None,
                warnings: Vec::new(),
            })
        }
        SigmaSource::Estimated => {
            let mut warnings = Vec::new();
            let h1 = canonical_kernel(kernel, 1, reference)?;
            let mut len = cfg.lrv_length;
            if kernel.analytic().and_then(|a| a.h1.as_ref()).is_none() && len > 4000 {
                len = 4000;
                warnings.push(format!(
                    "first projection has no closed form; sigma estimated from a path of {len} points"
                ));
            }
            let key = StreamKey::new(cfg.seed, Role::Probe).block(1);
            let path = cfg.process.sample_path(len, key)?;
            let values: Vec<f64> = path.iter().map(|&x| h1.evaluate(&[x])).collect();
            let iid = variance_with_se(&values);
            if cfg.process.is_iid() {
                return Ok(Sigma {
                    sq: m * m * iid.value,
                    se: Some(m * m * iid.se),
                    warnings,
                });
            }
            let lrv = long_run_variance_estimate(&values, MaxLagRule::CubeRoot)?;
            let (sq, se) = (m * m * lrv.sigma_tilde_sq_over_m2, m * m * lrv.se);
            let iid_sq = m * m * iid.value;
            if (iid_sq - sq).abs() > 2.0 * se.max(f64::EPSILON) {
                warnings.push(format!(
                    "dependent data: the long-run variance {sq:.6} differs from m^2 Var h1 = {iid_sq:.6}; the long-run value is used"
                ));
            }
            Ok(Sigma {
                sq,
                se: Some(se),
                warnings,
            })
        }
    }
}

struct Replication {
    full: f64,
    linear: f64,
    mc_se: Option<f64>,
}

fn replicate(
    cfg: &ExperimentConfig,
    kernel: &Kernel,
    h1_true: Option<&Kernel>,
    block: usize,
    n: usize,
    r: usize,
) -> Result<Replication> {
    let key = |role| StreamKey::new(cfg.seed, role).block(block as u64).index(r as u64);
    let path = cfg.process.sample_path(n, key(Role::Path))?;
    let m = kernel.degree();
    let (u, mc_se) = if exact_feasible(n, m, cfg.enumeration_cap) {
        (u_statistic_exact_with(kernel, &path, &cfg.exact_options())?, None)
    } else {
        let mut rng = key(Role::Subsets).rng();
        let est = u_statistic_incomplete(kernel, &path, cfg.incomplete_subsets, &mut rng, false)?;
        (est.estimate, Some(est.mc_se))
    };
    let u1 = match h1_true {
        Some(h1) => component_ustat(1, h1, &path)?,
        None => {
            let plug = ReferenceMeasure::plug_in(&path).with_cap(cfg.enumeration_cap);
            component_ustat(1, &canonical_kernel(kernel, 1, &plug)?, &path)?
        }
    };
    let root_n = (n as f64).sqrt();
    Ok(Replication {
        full: root_n * u,
        linear: m as f64 * root_n * u1,
        mc_se,
    })
}

fn d2(values: &[f64], sigma: f64) -> Result<f64> {
    w2_to_centred_normal(&EmpiricalDistribution::from_slice(values)?, sigma)
}

fn bootstrap_d2_se(values: &[f64], sigma: f64, resamples: usize, key: StreamKey) -> Result<Option<f64>> {
    if resamples < 2 {
        return Ok(None);
    }
    let stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = key.index(b as u64).rng();
            let resample: Vec<f64> = (0..values.len())
                .map(|_| values[rng.random_range(0..values.len())])
                .collect();
            d2(&resample, sigma)
        })
        .collect::<Result<_>>()?;
    Ok(Some(mean_var(&stats).1.sqrt()))
}

/// Replicate √n·U_h and its linear part m√n·U_n^{(1)} over the n-grid and
/// measure their d₂ distances to N(0, σ²).
///
/// U_h is computed exactly while C(n, m) fits under the enumeration cap and
/// by `incomplete_subsets` random subsets beyond it.
pub fn run_convergence_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let kernel = cfg.build_kernel()?;
    let reference = cfg.true_reference()?;
    let sigma = limit_variance(cfg, &kernel, &reference)?;
    let mut warnings = sigma.warnings;
    let applicability = theorem_applicability(&cfg.process, &kernel);
    if !applicability.applicable {
        warnings.push(format!("hypotheses not met: {}", applicability.binding));
    }
    let probe_key = StreamKey::new(cfg.seed, Role::Probe).block(2);
    let order = degeneracy_order(&kernel, &reference, cfg.probe_size, probe_key)?;
    if order >= 1 {
        warnings.push(format!(
            "degenerate kernel (order {order}): sqrt(n) U_h tends to the point mass at 0"
        ));
    }

    let h1_true = match cfg.projection {
        ProjectionMode::TrueXi => Some(canonical_kernel(&kernel, 1, &reference)?),
        ProjectionMode::PlugIn => None,
    };
    let sigma_sd = sigma.sq.max(0.0).sqrt();

    let mut records = Vec::with_capacity(cfg.n_grid.len());
    let mut full_by_n = Vec::with_capacity(cfg.n_grid.len());
    for (block, &n) in cfg.n_grid.iter().enumerate() {
        let started = Instant::now();
        let reps: Vec<Replication> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| replicate(cfg, &kernel, h1_true.as_ref(), block, n, r))
            .collect::<Result<_>>()?;
        let full: Vec<f64> = reps.iter().map(|r| r.full).collect();
        let linear: Vec<f64> = reps.iter().map(|r| r.linear).collect();
        let remainder_sq: Vec<f64> = reps.iter().map(|r| (r.full - r.linear).powi(2)).collect();
        let moment = second_moment_trajectory(&[Replicates { n, values: &full }])?[0];
        let boot_key = StreamKey::new(cfg.seed, Role::Bootstrap).block(block as u64);
        let estimator = match reps[0].mc_se {
            None => Estimator::Exact,
            Some(_) => Estimator::Incomplete {
                subsets: cfg.incomplete_subsets,
                mean_mc_se: reps.iter().filter_map(|r| r.mc_se).sum::<f64>() / cfg.reps as f64,
            },
        };
        let d2_full = d2(&full, sigma_sd)?;
        let d2_linear = d2(&linear, sigma_sd)?;
        if !(d2_full.is_finite() && d2_linear.is_finite()) {
            return Err(Error::Numeric(format!("non-finite d2 at n = {n}")));
        }
        records.push(GridRecord {
            n,
            reps: cfg.reps,
            estimator,
            d2_full,
            d2_full_se: bootstrap_d2_se(&full, sigma_sd, cfg.bootstrap, boot_key)?,
            d2_linear,
            rms_remainder: mean_var(&remainder_sq).0.sqrt(),
            mean_square: moment.mean_square,
            mean_square_se: moment.se,
            wall_ms: if cfg.record_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        });
        full_by_n.push((n, full));
    }
    let stats: Vec<Replicates<'_>> = full_by_n
        .iter()
        .map(|(n, v)| Replicates { n: *n, values: v })
        .collect();
    let ui_profile = if cfg.ui_thresholds.is_empty() {
        Vec::new()
    } else {
        uniform_integrability_profile(&stats, &cfg.ui_thresholds)?
    };

    Ok(ConvergenceReport {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        sigma_sq: sigma.sq,
        sigma_sq_se: sigma.se,
        sigma_source: cfg.sigma,
        inapplicable: !applicability.applicable,
        applicability,
        degeneracy_order: order,
        degenerate: order >= 1,
        warnings,
        records,
        ui_profile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub fit: RateFit,
}

#[derive(Debug, Serialize)]
struct SlopeRow<'a> {
    config_hash: &'a str,
    seed: u64,
    component: String,
    slope: Option<f64>,
    slope_se: Option<f64>,
    status: &'a str,
}

impl RateReport {
    /// One row per fitted series: the orders, then `remainder`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let rows = self
            .fit
            .components
            .iter()
            .map(|c| (c.order.to_string(), c))
            .chain(self.fit.remainder.iter().map(|r| ("remainder".to_string(), r)));
        for (component, series) in rows {
            w.serialize(SlopeRow {
                config_hash: &self.config_hash,
                seed: self.config.seed,
                component,
                slope: series.fit.slope,
                slope_se: series.fit.slope_se,
                status: &series.fit.status,
            })
            .map_err(|e| Error::Numeric(format!("csv: {e}")))?;
        }
        finish_csv(w)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(format!("json: {e}")))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Fit log ‖U_n^{(i)}‖ against log n for the configured orders, plus the
/// remainder √n·U_h − m√n·U_n^{(1)} when U_h is exact over the whole grid.
pub fn run_rate_experiment(cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let kernel = cfg.build_kernel()?;
    let reference = cfg.true_reference()?;
    let m = kernel.degree();
    let orders = cfg.orders.clone().unwrap_or_else(|| (1..=m).collect());
    let max_n = *cfg.n_grid.iter().max().expect("validated non-empty");
    let opts = RateOptions {
        orders,
        n_grid: cfg.n_grid.clone(),
        reps: cfg.reps,
        seed: cfg.seed,
        with_remainder: exact_feasible(max_n, m, cfg.enumeration_cap),
        exact: cfg.exact_options(),
    };
    let fit = rate_regression(&kernel, &cfg.process, &reference, &opts)?;
    Ok(RateReport {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        fit,
    })
}

/// Write `text` to `dir/name`, creating the directory.
pub fn write_output(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| Error::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(kernel: &str, process: &str) -> ExperimentConfig {
        ExperimentConfig {
            kernel: kernel.into(),
            process: process.parse().unwrap(),
            n_grid: vec![20, 40],
            reps: 100,
            oracle_size: MIN_ORACLE_SIZE,
            bootstrap: 20,
            probe_size: 1000,
            lrv_length: 2000,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn key_value_config() {
        let text = "# demo\nkernel = variance\nprocess = ar1_gaussian(0.5,1)\nn-grid = [50, 100]\nreps = 200\nseed = 9 # trailing\nsigma = estimated\n";
        let cfg = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(cfg.kernel, "variance");
        assert_eq!(cfg.n_grid, vec![50, 100]);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.sigma, SigmaSource::Estimated);
        assert_eq!(cfg.process.to_string(), "ar1_gaussian(0.5,1)");
    }

    #[test]
    fn json_config_and_unknown_keys() {
        let cfg = ExperimentConfig::from_text(r#"{"kernel": "gini", "reps": 150}"#).unwrap();
        assert_eq!((cfg.kernel.as_str(), cfg.reps), ("gini", 150));
        let err = ExperimentConfig::from_text("colour = blue").unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn too_few_reps_is_a_config_error() {
        let err = ExperimentConfig::from_text("reps = 99").unwrap_err();
        assert!(err.is_config(), "{err}");
    }

    #[test]
    fn hash_ignores_output_fields() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            format: OutputFormat::Json,
            out: Some("x".into()),
            record_wall_time: true,
            ..a.clone()
        };
        let c = ExperimentConfig { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn csv_header_and_rows() {
        let report = run_convergence_experiment(&quick("mean", "iid_normal(0,1)")).unwrap();
        let csv = report.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "config_hash,seed,n,R,d2_full,d2_linear,rms_remainder,mean_square,sigma_sq_used,sigma_source,applicable,degeneracy_order,wall_ms"
        );
        assert_eq!(lines.count(), 2);
        // the mean kernel is its own linear part
        for r in &report.records {
            assert!(r.rms_remainder < 1e-12);
            assert!((r.d2_full - r.d2_linear).abs() < 1e-12);
        }
    }

    #[test]
    fn d2_respects_the_triangle_bound() {
        let report = run_convergence_experiment(&quick("variance", "iid_normal(0,1)")).unwrap();
        for r in &report.records {
            assert!(r.d2_full <= r.rms_remainder + r.d2_linear + 1e-10, "{r:?}");
        }
    }

    #[test]
    fn analytic_sigma_unavailable_is_a_config_error() {
        let cfg = quick("gini", "ar1_gaussian(0.5,1)");
        let err = run_convergence_experiment(&cfg).unwrap_err();
        assert!(err.is_config(), "{err}");
    }

    #[test]
    fn estimated_sigma_for_mixing_data() {
        let cfg = ExperimentConfig {
            sigma: SigmaSource::Estimated,
            lrv_length: 20_000,
            ..quick("mean", "ar1_gaussian(0.5,1)")
        };
        let report = run_convergence_experiment(&cfg).unwrap();
        let se = report.sigma_sq_se.unwrap();
        assert!((report.sigma_sq - 4.0).abs() < 4.0 * se, "{} ± {se}", report.sigma_sq);
        assert!(report.warnings.iter().any(|w| w.contains("long-run")));
    }

    #[test]
    fn plug_in_linear_part() {
        let cfg = ExperimentConfig {
            projection: ProjectionMode::PlugIn,
            ..quick("variance", "iid_normal(0,1)")
        };
        let report = run_convergence_experiment(&cfg).unwrap();
        assert!(report.records.iter().all(|r| r.d2_linear.is_finite()));
    }

    #[test]
    fn incomplete_estimator_beyond_cap() {
        let cfg = ExperimentConfig {
            enumeration_cap: 100,
            incomplete_subsets: 500,
            ..quick("variance", "iid_normal(0,1)")
        };
        let report = run_convergence_experiment(&cfg).unwrap();
        assert!(matches!(report.records[0].estimator, Estimator::Incomplete { .. }));
    }

    #[test]
    fn empty_orders_have_nothing_to_fit() {
        let cfg = ExperimentConfig {
            orders: Some(vec![]),
            n_grid: vec![20, 40, 80, 200],
            ..quick("variance", "iid_normal(0,1)")
        };
        let err = run_rate_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("nothing to fit"));
    }
}
