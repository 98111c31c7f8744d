//! Exact probabilities on micro-windows by enumerating every configuration,
//! and the closed-form single-long-edge event.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{self, BlockError};
use crate::cluster::{
    cluster_tail_estimate, giant_fraction_estimate, set_escape_estimate, truncated_one_arm_estimate, ClusterError,
    EstimateRow, RunOptions,
};
use crate::graph::{GraphModel, Vertex};
use crate::kernel::{KernelError, KernelSpec, TailValue};
use crate::sampler::{Configuration, Method, Sampler, SamplerError, Window};

pub const MAX_MICRO_VERTICES: usize = 7;
pub const MAX_MICRO_PAIRS: usize = 21;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("micro-window has {pairs} pairs, at most {MAX_MICRO_PAIRS} can be enumerated")]
    TooLarge { pairs: usize },
    #[error("single-edge bracket [{lower}, {upper}] is wider than the requested relative tolerance {tol}")]
    Bracket { lower: f64, upper: f64, tol: f64 },
}

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// One configuration of a micro-window: open pairs as a bit mask over the
/// pair list, and per-vertex neighbour masks.
#[derive(Clone, Copy, Debug)]
pub struct MicroConfig {
    pub mask: u32,
    pub n: usize,
    pub adj: [u8; MAX_MICRO_VERTICES],
}

impl MicroConfig {
    /// Vertex mask of the union of the clusters meeting `seeds`.
    pub fn cluster(&self, seeds: u8) -> u8 {
        let mut k = seeds;
        loop {
            let mut next = k;
            for i in 0..self.n {
                if k >> i & 1 == 1 {
                    next |= self.adj[i];
                }
            }
            if next == k {
                return k;
            }
            k = next;
        }
    }
}

/// A window of at most seven vertices with all of its pairs enumerated.
/// Shares its edge probabilities and external intensities with a
/// [`Sampler`] on the same window.
pub struct MicroWindow {
    sampler: Sampler,
    pairs: Vec<(u32, u32)>,
    ln_p: Vec<f64>,
    ln_q: Vec<f64>,
    ext_j: Vec<f64>,
    beta: f64,
}

impl MicroWindow {
    pub fn new(model: &GraphModel, kernel: &KernelSpec, center: Vertex, vertices: &[Vertex]) -> Result<MicroWindow, OracleError> {
        let window = Window::explicit(model, center, vertices)?;
        let n = window.len();
        let pairs: Vec<(u32, u32)> = (0..n as u32).flat_map(|i| (i + 1..n as u32).map(move |j| (i, j))).collect();
        if n > MAX_MICRO_VERTICES || pairs.len() > MAX_MICRO_PAIRS {
            return Err(OracleError::TooLarge { pairs: pairs.len() });
        }
        let sampler = Sampler::new(Arc::new(window), kernel)?;
        let p: Vec<f64> = pairs.iter().map(|&(i, j)| sampler.pair_probability(i, j)).collect();
        let ln_p = p.iter().map(|p| p.ln()).collect();
        let ln_q = p.iter().map(|p| (-p).ln_1p()).collect();
        let ext_j = (0..n as u32).map(|i| sampler.external_j(i)).collect();
        Ok(MicroWindow { sampler, pairs, ln_p, ln_q, ext_j, beta: kernel.beta })
    }

    /// The 2×3 rectangle `{0,1}×{0,1,2}` in Z^2 around the origin.
    pub fn rectangle(kernel: &KernelSpec) -> Result<MicroWindow, OracleError> {
        let model = GraphModel::lattice(2).expect("Z^2");
        let vs: Vec<Vertex> = (0..2).flat_map(|x| (0..3).map(move |y| Vertex::xy(x, y))).collect();
        MicroWindow::new(&model, kernel, Vertex::ORIGIN, &vs)
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn window(&self) -> &Window {
        self.sampler.window()
    }

    pub fn len(&self) -> usize {
        self.window().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn origin_mask(&self) -> u8 {
        1 << self.window().center_index()
    }

    fn config(&self, mask: u32) -> MicroConfig {
        let mut adj = [0u8; MAX_MICRO_VERTICES];
        for (e, &(i, j)) in self.pairs.iter().enumerate() {
            if mask >> e & 1 == 1 {
                adj[i as usize] |= 1 << j;
                adj[j as usize] |= 1 << i;
            }
        }
        MicroConfig { mask, n: self.len(), adj }
    }

    fn weight(&self, mask: u32) -> f64 {
        let mut s = 0.0;
        for e in 0..self.pairs.len() {
            s += if mask >> e & 1 == 1 { self.ln_p[e] } else { self.ln_q[e] };
        }
        s.exp()
    }

    /// `exp(-β J(C, W^c))`: probability that no one-step external edge
    /// leaves the vertex set `c`.
    pub fn no_escape(&self, c: u8) -> f64 {
        let j: f64 = (0..self.len()).filter(|&i| c >> i & 1 == 1).map(|i| self.ext_j[i]).sum();
        (-self.beta * j).exp()
    }

    /// `Σ_ω P(ω) f(ω)` over all `2^{#pairs}` configurations. `f` may return
    /// any weight, which is how the external escape factor enters in closed
    /// form. Chunks by leading mask bits are summed in a fixed order.
    pub fn enumerate_exact(&self, f: impl Fn(&MicroConfig) -> f64 + Sync) -> f64 {
        let bits = self.pairs.len() as u32;
        let chunk_bits = bits.min(4);
        let low = bits - chunk_bits;
        let parts: Vec<(f64, f64)> = (0u32..1 << chunk_bits)
            .into_par_iter()
            .map(|hi| {
                let mut acc = Compensated::default();
                for lo in 0u32..1 << low {
                    let mask = hi << low | lo;
                    let w = self.weight(mask);
                    if w > 0.0 {
                        let v = f(&self.config(mask));
                        if v != 0.0 {
                            acc.add(w * v);
                        }
                    }
                }
                (acc.sum, acc.c)
            })
            .collect();
        let mut total = Compensated::default();
        for (s, c) in parts {
            total.add(s);
            total.add(c);
        }
        total.value()
    }

    pub fn normalization(&self) -> f64 {
        self.enumerate_exact(|_| 1.0)
    }

    fn max_radius(&self, k: u8) -> u32 {
        (0..self.len() as u32).filter(|&i| k >> i & 1 == 1).map(|i| self.window().radius(i)).max().unwrap_or(0)
    }

    /// `P(verdict FINITE)` for the origin cluster.
    pub fn finite(&self) -> f64 {
        let o = self.origin_mask();
        self.enumerate_exact(|c| self.no_escape(c.cluster(o)))
    }

    /// `P(o ↔ B(r)^c, FINITE)`.
    pub fn one_arm(&self, r: u32) -> f64 {
        let o = self.origin_mask();
        self.enumerate_exact(|c| {
            let k = c.cluster(o);
            if self.max_radius(k) > r {
                self.no_escape(k)
            } else {
                0.0
            }
        })
    }

    /// `P(k < #K, FINITE)`.
    pub fn tail(&self, k: u32) -> f64 {
        let o = self.origin_mask();
        self.enumerate_exact(|c| {
            let kk = c.cluster(o);
            if kk.count_ones() > k {
                self.no_escape(kk)
            } else {
                0.0
            }
        })
    }

    /// `P(#K = s)` from the edges alone.
    pub fn cluster_size(&self, s: u32) -> f64 {
        let o = self.origin_mask();
        self.enumerate_exact(|c| (c.cluster(o).count_ones() == s) as u8 as f64)
    }

    /// `P(S ↛ ∞)`: the union of the clusters meeting `S` is FINITE.
    pub fn set_escape(&self, set: &[Vertex]) -> Result<f64, OracleError> {
        let mut seeds = 0u8;
        for i in self.window().indices(set)? {
            seeds |= 1 << i;
        }
        Ok(self.enumerate_exact(|c| self.no_escape(c.cluster(seeds))))
    }

    /// `P(#K ≥ ⌈ρ n⌉)` using only pairs inside the window.
    pub fn giant(&self, rho: f64) -> f64 {
        let target = (rho * self.len() as f64).ceil().max(1.0) as u32;
        let o = self.origin_mask();
        self.enumerate_exact(|c| (c.cluster(o).count_ones() >= target) as u8 as f64)
    }

    fn configuration(&self, template: &Configuration, c: &MicroConfig) -> Configuration {
        let edges: Vec<(u32, u32)> =
            self.pairs.iter().enumerate().filter(|(e, _)| c.mask >> e & 1 == 1).map(|(_, p)| *p).collect();
        Configuration { edges, external: Vec::new(), ..template.clone() }
    }

    /// Block-decomposition partition of `{FINITE}` and the one-arm union
    /// bound, both by enumeration.
    pub fn partition_audit(&self) -> Result<PartitionAudit, OracleError> {
        let w = self.window();
        let o = self.origin_mask();
        let anchor = w.center();
        let template = self.sampler.sample_configuration(0, 0, Method::Sweep)?;
        let masks: Vec<u32> = (0u32..1 << self.pairs.len()).collect();
        // Per configuration: the decomposition of K(o) and the probability
        // that it is connected and isolated (no open edge from the block
        // boundaries to the rest of the window, no escape from them).
        let per: Vec<Result<AuditTerm, OracleError>> = masks
            .par_iter()
            .map(|&mask| {
                let c = self.config(mask);
                let wt = self.weight(mask);
                let k = c.cluster(o);
                let kv: Vec<Vertex> = (0..self.len() as u32).filter(|&i| k >> i & 1 == 1).map(|i| w.vertex(i)).collect();
                let dec = blocks::block_decomposition(w, &kv, anchor)?;
                let cfg = self.configuration(&template, &c);
                let h = blocks::block_graph(w, &cfg, &dec);
                let all: Vec<usize> = (0..dec.len()).collect();
                let mut boundary = 0u8;
                for b in &dec.blocks {
                    for v in &b.boundary {
                        boundary |= 1 << w.index_of(v).expect("window vertex");
                    }
                }
                let event = if h.is_connected() && blocks::is_isolated(w, &cfg, &dec, &all) {
                    wt * self.no_escape(boundary)
                } else {
                    0.0
                };
                let key = dec.blocks.into_iter().map(|b| b.vertices).collect();
                Ok((key, event, wt * self.no_escape(k)))
            })
            .collect();
        let mut by_decomposition: BTreeMap<Vec<Vec<Vertex>>, Compensated> = BTreeMap::new();
        let mut finite = Compensated::default();
        for r in per {
            let (key, event, fin) = r?;
            by_decomposition.entry(key).or_default().add(event);
            finite.add(fin);
        }
        let mut lhs = Compensated::default();
        for v in by_decomposition.values() {
            lhs.add(v.value());
        }
        let lhs = lhs.value();
        let finite = finite.value();

        let n = self.len() as u32;
        let r_max = self.max_radius(u8::MAX >> (8 - self.len()));
        let mut union_bound = Vec::new();
        let mut split = Vec::new();
        for r in 0..r_max {
            let arm = self.one_arm(r);
            for k in 1..=n {
                let small = self.enumerate_exact(|c| {
                    let kk = c.cluster(o);
                    (self.max_radius(kk) > r && kk.count_ones() <= k) as u8 as f64
                });
                let large = self.enumerate_exact(|c| {
                    let kk = c.cluster(o);
                    if kk.count_ones() >= k {
                        self.no_escape(kk)
                    } else {
                        0.0
                    }
                });
                union_bound.push(UnionBoundRow { r, k, arm_finite: arm, arm_small: small, large_finite: large, holds: arm <= small + large });
                let small_finite = self.enumerate_exact(|c| {
                    let kk = c.cluster(o);
                    if self.max_radius(kk) > r && kk.count_ones() <= k {
                        self.no_escape(kk)
                    } else {
                        0.0
                    }
                });
                let large_arm = self.enumerate_exact(|c| {
                    let kk = c.cluster(o);
                    if self.max_radius(kk) > r && kk.count_ones() > k {
                        self.no_escape(kk)
                    } else {
                        0.0
                    }
                });
                split.push((r, k, (arm - small_finite - large_arm).abs()));
            }
        }
        Ok(PartitionAudit {
            decompositions: by_decomposition.len(),
            lhs,
            finite,
            difference: (lhs - finite).abs(),
            normalization: self.normalization(),
            union_bound,
            split_max_error: split.iter().map(|s| s.2).fold(0.0, f64::max),
        })
    }
}

/// One exact-versus-estimate comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyLine {
    pub event: String,
    pub exact: f64,
    pub estimate: f64,
    /// Binomial standard error at the exact value.
    pub sigma: f64,
    pub pass: bool,
}

/// Runs every estimator on the micro-window and compares with the exact
/// value: one-arm at `r ∈ r_list`, the tail at `k ∈ k_list`, escape of
/// `set`, and the giant fraction at `rho`. A line passes when the estimate
/// lies within `n_sigma` standard errors.
pub fn verify_estimators(
    micro: &MicroWindow,
    r_list: &[u32],
    k_list: &[u64],
    set: &[Vertex],
    rho: f64,
    opts: RunOptions,
    n_sigma: f64,
) -> Result<Vec<VerifyLine>, OracleError> {
    let s = micro.sampler();
    let mut lines = Vec::new();
    let mut push = |event: String, exact: f64, row: &EstimateRow| {
        let sigma = row.sigma_at(exact);
        let pass = (row.p_hat - exact).abs() <= n_sigma * sigma;
        lines.push(VerifyLine { event, exact, estimate: row.p_hat, sigma, pass });
    };
    let one = truncated_one_arm_estimate(s, r_list, opts)?;
    for (r, row) in r_list.iter().zip(&one.rows) {
        push(format!("one-arm r={r}"), micro.one_arm(*r), row);
    }
    let tail = cluster_tail_estimate(s, k_list, opts)?;
    for (k, row) in k_list.iter().zip(&tail.rows) {
        push(format!("cluster-tail k={k}"), micro.tail(*k as u32), row);
    }
    let e = set_escape_estimate(s, set, opts)?;
    let names: Vec<String> = set.iter().map(|v| v.to_string()).collect();
    push(format!("set-escape {{{}}}", names.join(",")), micro.set_escape(set)?, &e.row);
    let g = giant_fraction_estimate(s, rho, opts)?;
    push(format!("giant rho={rho}"), micro.giant(rho), &g);
    Ok(lines)
}

/// Decomposition key, isolation-event weight and FINITE weight of one configuration.
type AuditTerm = (Vec<Vec<Vertex>>, f64, f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnionBoundRow {
    pub r: u32,
    pub k: u32,
    /// `P(o ↔ B(r)^c, FINITE)`.
    pub arm_finite: f64,
    /// `P(o ↔ B(r)^c, #K ≤ k)`.
    pub arm_small: f64,
    /// `P(k ≤ #K, FINITE)`.
    pub large_finite: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionAudit {
    pub decompositions: usize,
    /// `Σ_B P(B(K) = B, H(B) connected, B isolated)`.
    pub lhs: f64,
    /// `P(FINITE)`.
    pub finite: f64,
    pub difference: f64,
    pub normalization: f64,
    pub union_bound: Vec<UnionBoundRow>,
    /// Largest `|P(arm, FINITE) − P(arm, #K ≤ k, FINITE) − P(arm, #K > k, FINITE)|`.
    pub split_max_error: f64,
}

impl PartitionAudit {
    pub fn passed(&self, tol: f64) -> bool {
        self.difference <= tol
            && (self.normalization - 1.0).abs() <= 1e-12
            && self.union_bound.iter().all(|u| u.holds)
            && self.split_max_error <= tol
    }
}

/// Bracketed probability that the origin's cluster is a single edge
/// `{o, y}` with `d(o, y) > r`, in the lower-bound form
/// `exp(−2β Σ_y J(o, y)) · Σ_{L ≥ r+1} D_L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleEdge {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

pub fn single_long_edge_probability(
    model: &GraphModel,
    kernel: &KernelSpec,
    r: u32,
    horizon: Option<u32>,
    rel_tol: Option<f64>,
) -> Result<SingleEdge, OracleError> {
    if kernel.beta == 0.0 {
        return Ok(SingleEdge { lower: 0.0, value: 0.0, upper: 0.0 });
    }
    let sums = kernel.shell_sums(model, horizon)?;
    let total: TailValue = sums.total_j();
    let tail = sums.tail_degree(r + 1, kernel.beta);
    let b = kernel.beta;
    let out = SingleEdge {
        lower: (-2.0 * b * total.upper()).exp() * tail.lower(),
        value: (-2.0 * b * total.value()).exp() * tail.value(),
        upper: (-2.0 * b * total.lower()).exp() * tail.upper(),
    };
    if let Some(tol) = rel_tol {
        if out.upper - out.lower > tol * out.lower {
            return Err(OracleError::Bracket { lower: out.lower, upper: out.upper, tol });
        }
    }
    Ok(out)
}
