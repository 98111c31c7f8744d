//! Experiment specifications, orchestration and result files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{
    cluster_tail_estimate, exponent_fit, giant_fraction_on_ball, set_escape_estimate, truncated_one_arm_estimate,
    ClusterError, EstimateRow, EstimateSeries, ExponentFit, RunOptions, Transform,
};
use crate::graph::{GraphError, GraphModel, Vertex, DEFAULT_HEISENBERG_HORIZON};
use crate::kernel::{KernelError, KernelSpec, KernelTable};
use crate::sampler::{guard_width, Sampler, SamplerError, Window};

pub const SPEC_SCHEMA: &str = "lrp-spec/1";
pub const RESULT_SCHEMA: &str = "lrp-result/1";
pub const CSV_HEADER: &str = "x,p_hat,ci_lo,ci_hi,trials,undecided,bias_bound";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid spec: {0}")]
    Invalid(String),
    #[error("could not parse spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    OneArm,
    ClusterTail,
    SetEscape,
    Giant,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::OneArm => "one-arm",
            Kind::ClusterTail => "cluster-tail",
            Kind::SetEscape => "set-escape",
            Kind::Giant => "giant",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Lattice,
    Heisenberg,
}

fn default_schema() -> String {
    SPEC_SCHEMA.to_string()
}

fn one() -> usize {
    1
}

/// A flat key-value experiment description, read and written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub kind: Kind,
    #[serde(rename = "graph.family")]
    pub family: FamilyName,
    #[serde(rename = "graph.dimension", default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<u32>,
    #[serde(rename = "graph.horizon", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    #[serde(rename = "kernel.alpha")]
    pub alpha: f64,
    #[serde(rename = "kernel.beta")]
    pub beta: f64,
    #[serde(rename = "kernel.rj", default, skip_serializing_if = "Option::is_none")]
    pub rj: Option<u32>,
    #[serde(rename = "kernel.table", default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(rename = "window.r_in", default, skip_serializing_if = "Option::is_none")]
    pub r_in: Option<u32>,
    #[serde(rename = "window.r_out", default, skip_serializing_if = "Option::is_none")]
    pub r_out: Option<u32>,
    #[serde(rename = "window.guard", default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<u32>,
    #[serde(rename = "run.trials")]
    pub trials: u64,
    #[serde(rename = "run.seed", default)]
    pub seed: u64,
    #[serde(rename = "run.workers", default = "one")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r_list: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_list: Vec<u64>,
    #[serde(rename = "set.vertices", default, skip_serializing_if = "Vec::is_empty")]
    pub set_vertices: Vec<Vec<i64>>,
    #[serde(rename = "set.balls", default, skip_serializing_if = "Vec::is_empty")]
    pub set_balls: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(rename = "fit.tolerance", default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<ExperimentSpec, ExperimentError> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<ExperimentSpec, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })?;
        ExperimentSpec::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        if self.schema != SPEC_SCHEMA {
            return bad(format!("schema must be \"{SPEC_SCHEMA}\", got \"{}\"", self.schema));
        }
        match (self.family, self.dimension) {
            (FamilyName::Lattice, None) => return bad("graph.dimension is required for graph.family = lattice".into()),
            (FamilyName::Lattice, Some(d)) if !(1..=3).contains(&d) => {
                return bad(format!("graph.dimension must be 1, 2 or 3, got {d}"))
            }
            (FamilyName::Heisenberg, Some(d)) if d != 4 => {
                return bad(format!("the Heisenberg group has growth degree 4, graph.dimension = {d} given"))
            }
            _ => {}
        }
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return bad(format!("kernel.alpha must exceed 1, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("kernel.beta must be finite and nonnegative, got {}", self.beta));
        }
        if self.trials == 0 {
            return bad("run.trials must be positive".into());
        }
        if self.workers == 0 {
            return bad("run.workers must be positive".into());
        }
        let window_keys = [self.r_in, self.r_out].iter().filter(|v| v.is_some()).count();
        if window_keys == 1 {
            return bad("window.r_in and window.r_out must be given together".into());
        }
        if self.guard.is_some() && window_keys == 0 {
            return bad("window.guard needs window.r_in and window.r_out".into());
        }
        match self.kind {
            Kind::OneArm | Kind::Giant if self.r_list.is_empty() => bad(format!("{} needs a nonempty r_list", self.kind.name())),
            Kind::ClusterTail if self.k_list.is_empty() => bad("cluster-tail needs a nonempty k_list".into()),
            Kind::SetEscape if self.set_vertices.is_empty() == self.set_balls.is_empty() => {
                bad("set-escape needs exactly one of set.vertices and set.balls".into())
            }
            Kind::Giant if !self.rho.is_some_and(|r| r > 0.0 && r < 1.0) => bad("giant needs rho in (0, 1)".into()),
            _ => Ok(()),
        }
    }

    pub fn model(&self) -> Result<GraphModel, ExperimentError> {
        Ok(match self.family {
            FamilyName::Lattice => GraphModel::lattice(self.dimension.unwrap_or(0))?,
            FamilyName::Heisenberg => GraphModel::heisenberg(self.horizon.unwrap_or(DEFAULT_HEISENBERG_HORIZON)),
        })
    }

    pub fn kernel(&self, model: &GraphModel) -> Result<KernelSpec, ExperimentError> {
        build_kernel(model, self.alpha, self.beta, self.rj, self.table.as_deref())
    }

    fn options(&self) -> RunOptions {
        RunOptions { trials: self.trials, seed: self.seed, workers: self.workers }
    }

    fn explicit_window(&self, model: &GraphModel) -> Result<Option<Window>, ExperimentError> {
        match (self.r_in, self.r_out) {
            (Some(r_in), Some(r_out)) => {
                let g = self.guard.unwrap_or_else(|| guard_width(r_out));
                Ok(Some(Window::ball(model, model.origin(), r_in, r_out, g)?))
            }
            _ => Ok(None),
        }
    }
}

fn build_kernel(
    model: &GraphModel,
    alpha: f64,
    beta: f64,
    rj: Option<u32>,
    table: Option<&str>,
) -> Result<KernelSpec, ExperimentError> {
    match table {
        Some(path) => {
            let t = KernelTable::load(Path::new(path))?;
            Ok(KernelSpec::tabulated(model, alpha, beta, rj.unwrap_or(1), t)?)
        }
        None if rj.is_some_and(|r| r != 1) => Ok(KernelSpec::tabulated(model, alpha, beta, rj.unwrap_or(1), KernelTable::new())?),
        None => Ok(KernelSpec::power_law(model, alpha, beta)?),
    }
}

/// Configuration for the audit subcommands: the graph, kernel, window and
/// run keys of [`ExperimentSpec`] (all optional) plus audit parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    #[serde(rename = "graph.family", default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyName>,
    #[serde(rename = "graph.dimension", default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<u32>,
    #[serde(rename = "graph.horizon", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    #[serde(rename = "kernel.alpha", default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(rename = "kernel.beta", default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "kernel.rj", default, skip_serializing_if = "Option::is_none")]
    pub rj: Option<u32>,
    #[serde(rename = "kernel.table", default, skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
    #[serde(rename = "window.r_in", default, skip_serializing_if = "Option::is_none")]
    pub r_in: Option<u32>,
    #[serde(rename = "window.r_out", default, skip_serializing_if = "Option::is_none")]
    pub r_out: Option<u32>,
    #[serde(rename = "window.guard", default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<u32>,
    #[serde(rename = "run.trials", default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(rename = "run.seed", default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(rename = "run.workers", default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_bound: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r_list: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_list: Vec<u64>,
    #[serde(rename = "set.vertices", default, skip_serializing_if = "Vec::is_empty")]
    pub set_vertices: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl AuxConfig {
    pub fn parse(text: &str) -> Result<AuxConfig, ExperimentError> {
        let c: AuxConfig = serde_json::from_str(text)?;
        if let Some(s) = &c.schema {
            if s != SPEC_SCHEMA {
                return Err(ExperimentError::Invalid(format!("schema must be \"{SPEC_SCHEMA}\", got \"{s}\"")));
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<AuxConfig, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })?;
        AuxConfig::parse(&text)
    }

    /// Defaults to Z^2.
    pub fn model(&self) -> Result<GraphModel, ExperimentError> {
        Ok(match self.family.unwrap_or(FamilyName::Lattice) {
            FamilyName::Lattice => GraphModel::lattice(self.dimension.unwrap_or(2))?,
            FamilyName::Heisenberg => GraphModel::heisenberg(self.horizon.unwrap_or(DEFAULT_HEISENBERG_HORIZON)),
        })
    }

    pub fn kernel(&self, model: &GraphModel) -> Result<KernelSpec, ExperimentError> {
        let alpha = self.alpha.ok_or_else(|| ExperimentError::Invalid("kernel.alpha is required".into()))?;
        let beta = self.beta.ok_or_else(|| ExperimentError::Invalid("kernel.beta is required".into()))?;
        build_kernel(model, alpha, beta, self.rj, self.table.as_deref())
    }

    /// The explicit window, or `default_window(model, fallback_r)`.
    pub fn window(&self, model: &GraphModel, fallback_r: u32) -> Result<Window, ExperimentError> {
        match (self.r_in, self.r_out) {
            (Some(r_in), Some(r_out)) => {
                let g = self.guard.unwrap_or_else(|| guard_width(r_out));
                Ok(Window::ball(model, model.origin(), r_in, r_out, g)?)
            }
            (None, None) => Ok(default_window(model, fallback_r)?),
            _ => Err(ExperimentError::Invalid("window.r_in and window.r_out must be given together".into())),
        }
    }
}

/// Default window around a target radius: `r_out = max(8, 4·r)`,
/// `r_in = r_out / 2`, guard `max(4, r_out / 8)`.
pub fn default_window(model: &GraphModel, r: u32) -> Result<Window, SamplerError> {
    let r_out = (4 * r).max(8);
    Window::ball(model, model.origin(), r_out / 2, r_out, guard_width(r_out))
}

/// The exponent the theory attaches to an experiment: `d(1 − α)` for the
/// one-arm decay, and `max(2 − α, (d − 1)/d)` for stretched-exponential
/// cluster tails and set escape.
pub fn expected_exponent(kind: Kind, d: u32, alpha: f64) -> Option<f64> {
    let d = d as f64;
    match kind {
        Kind::OneArm => Some(d * (1.0 - alpha)),
        Kind::ClusterTail => Some((2.0 - alpha).max((d - 1.0) / d)),
        Kind::SetEscape => Some((d - 1.0) / d),
        Kind::Giant => None,
    }
}

/// Which side of `α = 1 + 1/d` the tail exponent comes from.
pub fn tail_regime(d: u32, alpha: f64) -> &'static str {
    if alpha > 1.0 + 1.0 / d as f64 {
        "strong-decay"
    } else {
        "weak-decay"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema: String,
    pub spec: ExperimentSpec,
    pub series: EstimateSeries,
    pub transform: Option<Transform>,
    pub fit: Option<ExponentFit>,
    pub fit_error: Option<String>,
    pub expected_exponent: Option<f64>,
    pub regime: Option<String>,
    pub max_bias_bound: f64,
    pub pass: Option<bool>,
    pub wall_clock_seconds: f64,
    pub environment: Environment,
}

impl ExperimentResult {
    pub fn exit_code(&self) -> i32 {
        if self.pass == Some(false) {
            1
        } else {
            0
        }
    }
}

pub fn run(spec: &ExperimentSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let start = Instant::now();
    let model = spec.model()?;
    let kernel = spec.kernel(&model)?;
    let opts = spec.options();
    let explicit = spec.explicit_window(&model)?;
    let sampler_on = |w: Window| -> Result<Sampler, ExperimentError> { Ok(Sampler::new(Arc::new(w), &kernel)?) };
    let (series, transform) = match spec.kind {
        Kind::OneArm => {
            let series = match explicit.clone() {
                Some(w) => truncated_one_arm_estimate(&sampler_on(w)?, &spec.r_list, opts)?,
                None => {
                    let mut rows = Vec::new();
                    for &r in &spec.r_list {
                        let s = sampler_on(default_window(&model, r)?)?;
                        rows.extend(truncated_one_arm_estimate(&s, &[r], opts)?.rows);
                    }
                    EstimateSeries { rows }
                }
            };
            (series, Some(Transform::LogLog))
        }
        Kind::ClusterTail => {
            let w = match explicit.clone() {
                Some(w) => w,
                None => {
                    let kmax = *spec.k_list.iter().max().expect("validated");
                    let r = (kmax as f64).powf(1.0 / model.dimension() as f64).ceil() as u32;
                    default_window(&model, r)?
                }
            };
            (cluster_tail_estimate(&sampler_on(w)?, &spec.k_list, opts)?, Some(Transform::LogLogLog))
        }
        Kind::SetEscape => {
            let sets: Vec<Vec<Vertex>> = if spec.set_balls.is_empty() {
                vec![spec.set_vertices.iter().map(|c| model.vertex(c)).collect::<Result<_, _>>()?]
            } else {
                spec.set_balls.iter().map(|&r| model.ball(model.origin(), r)).collect::<Result<_, _>>()?
            };
            let reach = sets
                .iter()
                .flatten()
                .map(|v| model.distance(model.origin(), *v))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .max()
                .unwrap_or(0);
            let w = match explicit.clone() {
                Some(w) => w,
                None => default_window(&model, reach + 1)?,
            };
            let s = sampler_on(w)?;
            let mut rows = Vec::new();
            for set in &sets {
                let mut row = set_escape_estimate(&s, set, opts)?.row;
                row.x = set.len() as f64;
                rows.push(row);
            }
            (EstimateSeries { rows }, (sets.len() >= 3).then_some(Transform::LogLogLog))
        }
        Kind::Giant => {
            let rho = spec.rho.expect("validated");
            let rows: Vec<EstimateRow> = spec
                .r_list
                .iter()
                .map(|&r| giant_fraction_on_ball(&model, &kernel, r, rho, opts))
                .collect::<Result<_, _>>()?;
            (EstimateSeries { rows }, None)
        }
    };
    let (fit, fit_error) = match transform {
        Some(t) => match exponent_fit(&series, t) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        },
        None => (None, None),
    };
    let expected = expected_exponent(spec.kind, model.dimension(), spec.alpha);
    let pass = match (spec.tolerance, &fit, expected) {
        (Some(tol), Some(f), Some(e)) => Some((f.slope - e).abs() <= tol),
        (Some(_), None, Some(_)) => Some(false),
        _ => None,
    };
    Ok(ExperimentResult {
        schema: RESULT_SCHEMA.to_string(),
        spec: spec.clone(),
        max_bias_bound: series.rows.iter().map(|r| r.bias_bound).fold(0.0, f64::max),
        series,
        transform,
        fit,
        fit_error,
        expected_exponent: expected,
        regime: matches!(spec.kind, Kind::ClusterTail).then(|| tail_regime(model.dimension(), spec.alpha).to_string()),
        pass,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        environment: Environment {
            version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            workers: spec.workers,
        },
    })
}

/// Full-precision float for CSV cells (17 significant digits).
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn series_csv(series: &EstimateSeries) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &series.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            csv_float(r.x),
            csv_float(r.p_hat),
            csv_float(r.ci_lo),
            csv_float(r.ci_hi),
            r.trials,
            r.undecided,
            csv_float(r.bias_bound)
        );
    }
    out
}

pub fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.into(), source })?;
    }
    std::fs::write(path, text).map_err(|source| ExperimentError::Io { path: path.into(), source })
}

/// Writes `<kind>.csv` and `<kind>.json` into `dir`; returns both paths.
pub fn emit(result: &ExperimentResult, dir: &Path) -> Result<(PathBuf, PathBuf), ExperimentError> {
    let name = result.spec.kind.name();
    let csv = dir.join(format!("{name}.csv"));
    let json = dir.join(format!("{name}.json"));
    write_file(&csv, &series_csv(&result.series))?;
    write_file(&json, &(serde_json::to_string_pretty(result).expect("result serializes") + "\n"))?;
    Ok((csv, json))
}
