//! Clusters, Monte Carlo estimators and exponent fits.

use std::sync::Arc;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Vertex;
use crate::sampler::{Configuration, ExploreRule, Sampler, SamplerError, Scratch, Verdict, VerdictReport, Window};
use crate::stats::{self, wilson};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("radius {r} exceeds the inner radius {r_in}")]
    RadiusTooLarge { r: u32, r_in: u32 },
    #[error("k = {k} exceeds the {cap} inner vertices of the window")]
    SizeTooLarge { k: u64, cap: u64 },
    #[error("{0} lies outside the inner region")]
    NotInner(Vertex),
    #[error("rho must lie in (0, 1), got {0}")]
    Rho(f64),
    #[error("only {0} usable points, need at least 3")]
    TooFewPoints(usize),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Disjoint-set partition of the window vertices under the open edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    /// Class representative of every vertex: the smallest index in its class.
    pub rep: Vec<u32>,
}

impl Partition {
    pub fn class_of(&self, i: u32) -> Vec<u32> {
        let r = self.rep[i as usize];
        (0..self.rep.len() as u32).filter(|&j| self.rep[j as usize] == r).collect()
    }

    /// Classes in order of their representatives.
    pub fn classes(&self) -> Vec<Vec<u32>> {
        let mut out: Vec<Vec<u32>> = Vec::new();
        let mut slot = vec![usize::MAX; self.rep.len()];
        for (j, &r) in self.rep.iter().enumerate() {
            if slot[r as usize] == usize::MAX {
                slot[r as usize] = out.len();
                out.push(Vec::new());
            }
            out[slot[r as usize]].push(j as u32);
        }
        out
    }
}

pub fn clusters(config: &Configuration) -> Partition {
    let n = config.n as usize;
    let mut uf = UnionFind::<u32>::new(n);
    for &(i, j) in &config.edges {
        uf.union(i, j);
    }
    let mut min_of = vec![u32::MAX; n];
    for i in 0..n as u32 {
        let r = uf.find(i) as usize;
        min_of[r] = min_of[r].min(i);
    }
    Partition { rep: (0..n as u32).map(|i| min_of[uf.find(i) as usize]).collect() }
}

/// The origin cluster of a full configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub partition: Partition,
    pub cluster: Vec<u32>,
    pub size: usize,
    pub max_radius: u32,
    pub verdict: VerdictReport,
}

impl ClusterReport {
    pub fn new(sampler: &Sampler, config: &Configuration) -> ClusterReport {
        let partition = clusters(config);
        let w = sampler.window();
        let cluster = partition.class_of(w.center_index());
        let max_radius = cluster.iter().map(|&i| w.radius(i)).max().unwrap_or(0);
        let verdict = sampler.finiteness_verdict(config, &cluster);
        ClusterReport { size: cluster.len(), partition, cluster, max_radius, verdict }
    }

    /// `K ∩ B(r)^c ≠ ∅`.
    pub fn one_arm(&self, r: u32) -> bool {
        self.max_radius > r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub x: f64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Trials run, including undecided ones.
    pub trials: u64,
    /// Trials excluded from numerator and denominator.
    pub undecided: u64,
    pub bias_bound: f64,
}

impl EstimateRow {
    pub fn from_counts(x: f64, successes: u64, trials: u64, undecided: u64, bias_bound: f64) -> EstimateRow {
        let b = wilson(successes, trials - undecided);
        EstimateRow { x, p_hat: b.p_hat, ci_lo: b.ci_lo, ci_hi: b.ci_hi, trials, undecided, bias_bound }
    }

    pub fn decided(&self) -> u64 {
        self.trials - self.undecided
    }

    /// Binomial standard error at a reference probability.
    pub fn sigma_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.decided().max(1) as f64).sqrt()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateSeries {
    pub rows: Vec<EstimateRow>,
}

impl EstimateSeries {
    pub fn p_hats(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.p_hat).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
}

/// Runs `trial` for every index in a local pool; results come back in
/// trial order whatever the worker count.
pub fn run_trials<T, F>(opts: RunOptions, n: usize, trial: F) -> Result<Vec<T>, ClusterError>
where
    T: Send,
    F: Fn(u64, &mut Scratch) -> T + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| ClusterError::Pool(e.to_string()))?;
    Ok(pool.install(|| (0..opts.trials).into_par_iter().map_init(|| Scratch::new(n), |s, t| trial(t, s)).collect()))
}

#[derive(Clone, Copy, Debug)]
struct TrialRecord {
    verdict: Verdict,
    size: usize,
    max_radius: u32,
    bias: f64,
}

fn origin_trials(sampler: &Sampler, opts: RunOptions, seeds: &[u32]) -> Result<Vec<TrialRecord>, ClusterError> {
    let rule = ExploreRule { escape: true, stop_at_size: None };
    run_trials(opts, sampler.window().len(), |t, scratch| {
        let e = sampler.explore(opts.seed, t, seeds, rule, scratch);
        let bias = if e.verdict == Verdict::Finite { sampler.neighbourhood_bias(&e.members) } else { 0.0 };
        TrialRecord { verdict: e.verdict, size: e.members.len(), max_radius: e.max_radius, bias }
    })
}

fn summarize(records: &[TrialRecord], xs: &[f64], hit: impl Fn(&TrialRecord, f64) -> bool) -> EstimateSeries {
    let trials = records.len() as u64;
    let undecided = records.iter().filter(|r| r.verdict == Verdict::Undecided).count() as u64;
    let bias = records.iter().filter(|r| r.verdict == Verdict::Finite).map(|r| r.bias).fold(0.0, f64::max);
    let rows = xs
        .iter()
        .map(|&x| {
            let s = records.iter().filter(|r| r.verdict == Verdict::Finite && hit(r, x)).count() as u64;
            EstimateRow::from_counts(x, s, trials, undecided, bias)
        })
        .collect();
    EstimateSeries { rows }
}

/// `P(o ↔ B(r)^c, FINITE)` for each `r`.
pub fn truncated_one_arm_estimate(sampler: &Sampler, r_list: &[u32], opts: RunOptions) -> Result<EstimateSeries, ClusterError> {
    let w = sampler.window();
    if let Some(&r) = r_list.iter().find(|&&r| r > w.r_in()) {
        return Err(ClusterError::RadiusTooLarge { r, r_in: w.r_in() });
    }
    let records = origin_trials(sampler, opts, &[w.center_index()])?;
    let xs: Vec<f64> = r_list.iter().map(|&r| r as f64).collect();
    Ok(summarize(&records, &xs, |rec, r| rec.max_radius as f64 > r))
}

/// `P(k < #K, FINITE)` for each `k`.
pub fn cluster_tail_estimate(sampler: &Sampler, k_list: &[u64], opts: RunOptions) -> Result<EstimateSeries, ClusterError> {
    let w = sampler.window();
    let cap = (0..w.len() as u32).filter(|&i| w.is_inner(i)).count() as u64;
    if let Some(&k) = k_list.iter().find(|&&k| k >= cap) {
        return Err(ClusterError::SizeTooLarge { k, cap });
    }
    let records = origin_trials(sampler, opts, &[w.center_index()])?;
    let xs: Vec<f64> = k_list.iter().map(|&k| k as f64).collect();
    Ok(summarize(&records, &xs, |rec, k| rec.size as f64 > k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetEscapeEstimate {
    pub row: EstimateRow,
    pub set_size: usize,
    /// Number of 1-connected components of the set.
    pub components: usize,
    /// `(#S)^{(d-1)/d}`.
    pub size_power: f64,
}

/// `P(S ↛ ∞)`: every cluster meeting `S` is FINITE.
pub fn set_escape_estimate(sampler: &Sampler, set: &[Vertex], opts: RunOptions) -> Result<SetEscapeEstimate, ClusterError> {
    let w = sampler.window();
    let mut seeds = Vec::with_capacity(set.len());
    for v in set {
        let i = w.index_of(v).ok_or(SamplerError::NotInWindow(*v))?;
        if w.in_guard(i) {
            return Err(SamplerError::InGuard(*v).into());
        }
        if !w.is_inner(i) {
            return Err(ClusterError::NotInner(*v));
        }
        seeds.push(i);
    }
    seeds.sort_unstable();
    seeds.dedup();
    let records = origin_trials(sampler, opts, &seeds)?;
    let row = summarize(&records, &[seeds.len() as f64], |_, _| true).rows[0];
    let d = w.model().dimension() as f64;
    let components = crate::blocks::one_connected_components(w.model(), set).len();
    Ok(SetEscapeEstimate {
        row,
        set_size: seeds.len(),
        components,
        size_power: (seeds.len() as f64).powf((d - 1.0) / d),
    })
}

/// `P(#K(W) ≥ ρ #W)` with `K(W)` the origin's cluster using only pairs inside
/// the window; usually `W = B(r)`.
pub fn giant_fraction_estimate(sampler: &Sampler, rho: f64, opts: RunOptions) -> Result<EstimateRow, ClusterError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(ClusterError::Rho(rho));
    }
    let w = sampler.window();
    let target = (rho * w.len() as f64).ceil().max(1.0) as usize;
    let rule = ExploreRule { escape: false, stop_at_size: Some(target) };
    let o = w.center_index();
    let hits = run_trials(opts, w.len(), |t, scratch| sampler.explore(opts.seed, t, &[o], rule, scratch).members.len() >= target)?;
    let s = hits.iter().filter(|&&h| h).count() as u64;
    Ok(EstimateRow::from_counts(rho, s, opts.trials, 0, 0.0))
}

/// Convenience: the giant-fraction estimate on `B(o, r)`.
pub fn giant_fraction_on_ball(
    model: &crate::graph::GraphModel,
    kernel: &crate::kernel::KernelSpec,
    r: u32,
    rho: f64,
    opts: RunOptions,
) -> Result<EstimateRow, ClusterError> {
    let w = Arc::new(Window::plain_ball(model, model.origin(), r)?);
    let s = Sampler::new(w, kernel)?;
    let mut row = giant_fraction_estimate(&s, rho, opts)?;
    row.x = r as f64;
    Ok(row)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    /// `log p` against `log x`.
    LogLog,
    /// `log(-log p)` against `log x`.
    LogLogLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub used: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Weighted least-squares slope. Weights are inverse interval widths carried
/// to the transformed scale; if some interval has zero width (exact input)
/// all points are weighted equally.
pub fn exponent_fit(series: &EstimateSeries, transform: Transform) -> Result<ExponentFit, ClusterError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut used = Vec::new();
    let mut warnings = Vec::new();
    for row in &series.rows {
        let p = row.p_hat;
        if p <= 0.0 || row.x <= 0.0 {
            warnings.push(format!("dropped x = {}: zero estimate", row.x));
            continue;
        }
        let (y, jac) = match transform {
            Transform::LogLog => (p.ln(), p),
            Transform::LogLogLog => {
                if p >= 0.9 {
                    warnings.push(format!("dropped x = {}: p_hat = {p} >= 0.9", row.x));
                    continue;
                }
                ((-p.ln()).ln(), p * (-p.ln()))
            }
        };
        xs.push(row.x.ln());
        ys.push(y);
        let width = row.ci_hi - row.ci_lo;
        ws.push(if width > 0.0 { jac / width } else { 0.0 });
        used.push(row.x);
    }
    if xs.len() < 3 {
        return Err(ClusterError::TooFewPoints(xs.len()));
    }
    let weights = if ws.iter().all(|&w| w > 0.0) { Some(ws.as_slice()) } else { None };
    let fit = stats::least_squares(&xs, &ys, weights).ok_or(ClusterError::TooFewPoints(xs.len()))?;
    Ok(ExponentFit { slope: fit.slope, stderr: fit.stderr, intercept: fit.intercept, used, warnings })
}
