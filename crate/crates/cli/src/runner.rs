//! Propagation runs, sweeps and weight-convergence fits.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use qcprop::action::ActionBreakdown;
use qcprop::dynamics::BoundaryData;
use qcprop::error::Error;
use qcprop::exact::{ExactSystem, Representation};
use qcprop::geometry::PhaseSpace;
use qcprop::semiclassics::{propagator_flat_alpha, propagator_qc, PropagatorResult};
use qcprop::symbols::CompiledHamiltonian;

use crate::config::{ConfigError, ExperimentConfig};

/// Largest representation compared against the exact oracle.
pub const MAX_ORACLE_DIMENSION: usize = 10_000;

/// Relative errors below this are attributed to solver accuracy.
pub const EXACT_FLOOR: f64 = 1e-7;

/// Oracle truncation may grow by this factor when the state leaks.
const TRUNCATION_GROWTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    QcOnly,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        ErrorInfo {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEcho {
    pub geometry: PhaseSpace,
    pub boundary: BoundaryData,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub axes: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub index: usize,
    pub input: InputEcho,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    pub qc: Option<Complex64>,
    pub exact: Option<Complex64>,
    pub relative_error: Option<f64>,
    pub breakdown: Option<ActionBreakdown>,
    pub prefactor: Option<Complex64>,
    pub reduced: Option<Complex64>,
    pub branch: Option<i64>,
    pub truncation: Option<usize>,
    pub diagnostics: BTreeMap<String, f64>,
    /// Seconds; only filled when timing is requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

fn quasiclassical(config: &ExperimentConfig) -> Result<PropagatorResult, Error> {
    let spec = config.spec().map_err(|e| match e {
        ConfigError::Model(m) => m,
        other => Error::InvalidInput(other.to_string()),
    })?;
    let ham = CompiledHamiltonian::new(&spec, &config.geometry)?;
    match config.alpha {
        Some(alpha) => propagator_flat_alpha(&ham, &config.boundary, alpha, &config.solver),
        None => propagator_qc(&ham, &config.boundary, &config.solver),
    }
}

/// Oracle amplitude, growing the Fock cutoff while the evolved state leaks.
fn oracle(config: &ExperimentConfig) -> Result<Option<(Complex64, usize)>, Error> {
    let spec = config
        .spec()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut dim = config.truncation();
    let limit = dim.saturating_mul(TRUNCATION_GROWTH);
    loop {
        let rep = Representation::for_geometry(&config.geometry, dim)?;
        if rep.dimension() > MAX_ORACLE_DIMENSION {
            return Ok(None);
        }
        let bd = &config.boundary;
        let attempt = ExactSystem::new(&spec, &config.geometry, dim)
            .and_then(|s| s.amplitude(bd.z_initial, bd.z_final(), bd.tau));
        match attempt {
            Ok(a) => return Ok(Some((a, rep.dimension()))),
            Err(Error::TruncationTooSevere { .. }) if rep.is_truncated() && dim * 2 <= limit => {
                dim *= 2
            }
            Err(e) => return Err(e),
        }
    }
}

fn blank_record(config: &ExperimentConfig, index: usize, axes: Vec<(String, f64)>) -> ResultRecord {
    ResultRecord {
        index,
        input: InputEcho {
            geometry: config.geometry,
            boundary: config.boundary,
            alpha: config.alpha,
            axes,
        },
        status: Status::Ok,
        error: None,
        qc: None,
        exact: None,
        relative_error: None,
        breakdown: None,
        prefactor: None,
        reduced: None,
        branch: None,
        truncation: None,
        diagnostics: BTreeMap::new(),
        wall_time: None,
    }
}

/// Evaluates one configuration; failures are recorded, never raised.
pub fn evaluate(
    config: &ExperimentConfig,
    index: usize,
    axes: Vec<(String, f64)>,
    timing: bool,
) -> ResultRecord {
    let start = Instant::now();
    let mut record = blank_record(config, index, axes);
    let outcome = quasiclassical(config).and_then(|qc| Ok((qc, oracle(config)?)));
    match outcome {
        Ok((qc, exact)) => {
            record.qc = Some(qc.amplitude);
            record.breakdown = Some(qc.breakdown);
            record.prefactor = Some(qc.prefactor);
            record.reduced = Some(qc.reduced);
            record.branch = Some(qc.branch);
            record.diagnostics = qc.diagnostics;
            match exact {
                Some((a, dim)) => {
                    record.exact = Some(a);
                    record.truncation = Some(dim);
                    if a.norm() > 0.0 {
                        record.relative_error = Some((qc.amplitude / a - 1.0).norm());
                    }
                }
                None => record.status = Status::QcOnly,
            }
        }
        Err(e) => {
            record.status = Status::Error;
            record.error = Some(ErrorInfo::from(&e));
        }
    }
    if timing {
        record.wall_time = Some(start.elapsed().as_secs_f64());
    }
    record
}

pub fn run_propagate(config: &ExperimentConfig, timing: bool) -> Result<ResultRecord, ConfigError> {
    config.validate()?;
    Ok(evaluate(config, 0, Vec::new(), timing))
}

/// One record per point of the axis product, in axis order. With
/// `threads > 1` points run on a dedicated pool; the output is identical.
pub fn run_sweep(
    config: &ExperimentConfig,
    threads: usize,
    timing: bool,
) -> Result<Vec<ResultRecord>, ConfigError> {
    let points = config.expand()?;
    let run = |(index, axes): &(usize, Vec<(String, f64)>)| match config.point(axes) {
        Ok(c) => evaluate(&c, *index, axes.clone(), timing),
        Err(e) => {
            let mut r = blank_record(config, *index, axes.clone());
            r.status = Status::Error;
            r.error = Some(ErrorInfo {
                code: e.code().to_string(),
                message: e.to_string(),
            });
            r
        }
    };
    if threads <= 1 {
        return Ok(points.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ConfigError::Parse(format!("thread pool: {e}")))?;
    Ok(pool.install(|| points.par_iter().map(run).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub weight: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub points: Vec<FitPoint>,
    /// Least-squares slope of `ln(error)` against `ln(l)`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Root-mean-square residual of the fit.
    pub residual: Option<f64>,
    /// Every error at or below the solver floor.
    pub exact_family: bool,
    pub monotone_decreasing: bool,
    pub records: Vec<ResultRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("fit needs at least 3 valid points, got {valid}")]
    FitDegenerate { valid: usize },
}

impl FitError {
    pub fn code(&self) -> &'static str {
        match self {
            FitError::Config(e) => e.code(),
            FitError::FitDegenerate { .. } => "fit_degenerate",
        }
    }
}

/// `(slope, intercept, rms residual)` of an ordinary least-squares line.
pub fn fit_line(xy: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if xy.len() < 2 || sxx <= 0.0 {
        return None;
    }
    let slope = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xy
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Some((slope, intercept, (rss / n).sqrt()))
}

pub fn run_convergence(config: &ExperimentConfig, threads: usize) -> Result<FitReport, FitError> {
    if !config.sweep.iter().any(|a| a.path == "geometry.weight") {
        return Err(ConfigError::MissingWeightAxis.into());
    }
    let records = run_sweep(config, threads, false)?;
    let points: Vec<FitPoint> = records
        .iter()
        .filter_map(|r| {
            let e = r.relative_error?;
            (r.status == Status::Ok && e.is_finite()).then_some(FitPoint {
                weight: r.input.geometry.weight(),
                relative_error: e,
            })
        })
        .collect();
    let exact_family = !points.is_empty() && points.iter().all(|p| p.relative_error <= EXACT_FLOOR);
    let monotone_decreasing = points
        .windows(2)
        .all(|w| w[1].relative_error < w[0].relative_error);
    let mut report = FitReport {
        points,
        slope: None,
        intercept: None,
        residual: None,
        exact_family,
        monotone_decreasing,
        records,
    };
    if exact_family {
        return Ok(report);
    }
    let xy: Vec<(f64, f64)> = report
        .points
        .iter()
        .filter(|p| p.relative_error > 0.0)
        .map(|p| (p.weight.ln(), p.relative_error.ln()))
        .collect();
    if xy.len() < 3 {
        return Err(FitError::FitDegenerate { valid: xy.len() });
    }
    let (slope, intercept, residual) =
        fit_line(&xy).ok_or(FitError::FitDegenerate { valid: xy.len() })?;
    report.slope = Some(slope);
    report.intercept = Some(intercept);
    report.residual = Some(residual);
    Ok(report)
}
