//! Finite windows, configuration sampling and the finite/escaping verdict.
//!
//! A window is a ball `B(o, r_out)` with an inner ball `B(o, r_in)` and a guard
//! annulus of width `g` at its rim. Edges with both ends in the window are
//! sampled exactly. Edges leaving the window are summarised by one Bernoulli
//! per vertex with probability `1 - exp(-β J(x, W^c))`; a cluster escapes when
//! it reaches the guard or any of its vertices has its external edge open.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, OnceLock};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Family, GraphError, GraphModel, Vertex};
use crate::kernel::{KernelError, KernelSpec, TailValue};

pub const PURPOSE_SWEEP: u64 = 1;
pub const PURPOSE_SKIP: u64 = 2;
pub const PURPOSE_EXPLORE: u64 = 3;
pub const PURPOSE_ESCAPE: u64 = 4;

/// Default cap on pair evaluations for one full sweep.
pub const DEFAULT_PAIR_BUDGET: u64 = 200_000_000;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("invalid window: {0}")]
    Window(String),
    #[error("window has {pairs} pairs, over the budget of {budget}")]
    Budget { pairs: u64, budget: u64 },
    #[error("{0} lies in the guard annulus")]
    InGuard(Vertex),
    #[error("{0} is not a window vertex")]
    NotInWindow(Vertex),
}

/// Default guard width `max(4, r_out / 8)`.
pub fn guard_width(r_out: u32) -> u32 {
    (r_out / 8).max(4)
}

/// Counter-based substream keyed by (trial, purpose, index).
pub fn substream(seed: u64, trial: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trial << 8) | purpose);
    rng.set_word_pos((index as u128) << 32);
    rng
}

/// Uniform in [0, 1) from the top 53 bits.
#[inline]
pub fn unit(u: u64) -> f64 {
    (u >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Clone, Debug)]
enum Locator {
    Dense { lo: [i32; 3], ext: [usize; 3], slots: Vec<u32> },
    Hash(HashMap<Vertex, u32>),
}

const EMPTY: u32 = u32::MAX;

impl Locator {
    fn build(model: &GraphModel, vertices: &[Vertex]) -> Locator {
        if model.family() == Family::Heisenberg {
            return Locator::Hash(vertices.iter().enumerate().map(|(i, v)| (*v, i as u32)).collect());
        }
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for v in vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v.0[k]);
                hi[k] = hi[k].max(v.0[k]);
            }
        }
        let ext = [0, 1, 2].map(|k| (hi[k] - lo[k] + 1) as usize);
        let mut slots = vec![EMPTY; ext[0] * ext[1] * ext[2]];
        for (i, v) in vertices.iter().enumerate() {
            let s = ((v.0[0] - lo[0]) as usize * ext[1] + (v.0[1] - lo[1]) as usize) * ext[2] + (v.0[2] - lo[2]) as usize;
            slots[s] = i as u32;
        }
        Locator::Dense { lo, ext, slots }
    }

    #[inline]
    fn get(&self, v: &Vertex) -> Option<u32> {
        match self {
            Locator::Dense { lo, ext, slots } => {
                let mut s = 0usize;
                for k in 0..3 {
                    let c = v.0[k] as i64 - lo[k] as i64;
                    if c < 0 || c >= ext[k] as i64 {
                        return None;
                    }
                    s = s * ext[k] + c as usize;
                }
                let i = slots[s];
                (i != EMPTY).then_some(i)
            }
            Locator::Hash(m) => m.get(v).copied(),
        }
    }
}

/// A finite window around a center vertex.
#[derive(Clone, Debug)]
pub struct Window {
    model: GraphModel,
    center: Vertex,
    r_in: u32,
    r_out: u32,
    guard: u32,
    vertices: Vec<Vertex>,
    radius: Vec<u32>,
    locator: Locator,
    max_pair_distance: u32,
}

impl Window {
    /// `B(center, r_out)` with inner radius `r_in` and guard width `guard`.
    pub fn ball(model: &GraphModel, center: Vertex, r_in: u32, r_out: u32, guard: u32) -> Result<Window, SamplerError> {
        if r_out < 2 * r_in {
            return Err(SamplerError::Window(format!("r_out = {r_out} < 2 r_in = {}", 2 * r_in)));
        }
        if guard > r_out || r_in > r_out - guard {
            return Err(SamplerError::Window(format!("inner ball r_in = {r_in} reaches the guard (r_out = {r_out}, g = {guard})")));
        }
        Window::build(model, center, r_in, r_out, guard)
    }

    /// The whole ball `B(center, r)` as inner region, without a guard.
    pub fn plain_ball(model: &GraphModel, center: Vertex, r: u32) -> Result<Window, SamplerError> {
        Window::build(model, center, r, r, 0)
    }

    fn build(model: &GraphModel, center: Vertex, r_in: u32, r_out: u32, guard: u32) -> Result<Window, SamplerError> {
        if let Some(h) = model.horizon() {
            if 2 * r_out > h {
                return Err(SamplerError::Window(format!("pair distances up to {} exceed the metric horizon {h}", 2 * r_out)));
            }
        }
        let vertices = model.ball(center, r_out)?;
        let radius = vertices.iter().map(|v| model.distance(center, *v)).collect::<Result<Vec<_>, _>>()?;
        let locator = Locator::build(model, &vertices);
        Ok(Window { model: model.clone(), center, r_in, r_out, guard, vertices, radius, locator, max_pair_distance: 2 * r_out })
    }

    /// An arbitrary finite vertex set; every vertex is inner and there is no guard.
    pub fn explicit(model: &GraphModel, center: Vertex, vertices: &[Vertex]) -> Result<Window, SamplerError> {
        let mut vs = vertices.to_vec();
        vs.sort_unstable();
        vs.dedup();
        if vs.binary_search(&center).is_err() {
            return Err(SamplerError::NotInWindow(center));
        }
        let radius = vs.iter().map(|v| model.distance(center, *v)).collect::<Result<Vec<_>, _>>()?;
        let mut max_pair = 0;
        for (i, x) in vs.iter().enumerate() {
            for y in &vs[i + 1..] {
                max_pair = max_pair.max(model.distance(*x, *y)?);
            }
        }
        let r = radius.iter().copied().max().unwrap_or(0);
        let locator = Locator::build(model, &vs);
        Ok(Window { model: model.clone(), center, r_in: r, r_out: r, guard: 0, vertices: vs, radius, locator, max_pair_distance: max_pair })
    }

    pub fn model(&self) -> &GraphModel {
        &self.model
    }

    pub fn center(&self) -> Vertex {
        self.center
    }

    pub fn center_index(&self) -> u32 {
        self.index_of(&self.center).expect("center in window")
    }

    pub fn r_in(&self) -> u32 {
        self.r_in
    }

    pub fn r_out(&self) -> u32 {
        self.r_out
    }

    pub fn guard(&self) -> u32 {
        self.guard
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, i: u32) -> Vertex {
        self.vertices[i as usize]
    }

    pub fn radius(&self, i: u32) -> u32 {
        self.radius[i as usize]
    }

    pub fn max_pair_distance(&self) -> u32 {
        self.max_pair_distance
    }

    #[inline]
    pub fn index_of(&self, v: &Vertex) -> Option<u32> {
        self.locator.get(v)
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.index_of(v).is_some()
    }

    pub fn is_inner(&self, i: u32) -> bool {
        self.radius[i as usize] <= self.r_in
    }

    pub fn in_guard(&self, i: u32) -> bool {
        self.guard > 0 && self.radius[i as usize] > self.r_out - self.guard
    }

    /// Window vertices with a nearest neighbour outside the window.
    pub fn rim(&self) -> Vec<u32> {
        (0..self.len() as u32)
            .filter(|&i| self.model.neighbors(self.vertex(i)).iter().any(|y| !self.contains(y)))
            .collect()
    }

    pub fn indices(&self, vs: &[Vertex]) -> Result<Vec<u32>, SamplerError> {
        vs.iter().map(|v| self.index_of(v).ok_or(SamplerError::NotInWindow(*v))).collect()
    }
}

/// One sampled configuration on a window. Edges and flags refer to window
/// vertex indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub n: u32,
    /// Open edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<(u32, u32)>,
    /// Vertices whose one-step external edge is open, sorted.
    pub external: Vec<u32>,
    pub seed: u64,
    pub trial: u64,
    pub kernel: KernelSpec,
    /// Longest pair distance sampled inside the window.
    pub l_max: u32,
}

impl Configuration {
    pub fn escape_flag(&self, i: u32) -> bool {
        self.external.binary_search(&i).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n as usize];
        for &(i, j) in &self.edges {
            adj[i as usize].push(j);
            adj[j as usize].push(i);
        }
        adj
    }

    /// Copy with extra open edges (duplicates ignored).
    pub fn with_edges(&self, extra: &[(u32, u32)]) -> Configuration {
        let mut c = self.clone();
        c.edges.extend(extra.iter().map(|&(i, j)| (i.min(j), i.max(j))).filter(|(i, j)| i != j));
        c.edges.sort_unstable();
        c.edges.dedup();
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Finite,
    Escaping,
    Undecided,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictReport {
    pub verdict: Verdict,
    pub bias_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Sweep,
    ShellSkip,
}

#[derive(Clone, Debug)]
enum ShellRate {
    Uniform(f64),
    /// Cumulative intensity within the shell.
    Varying(Vec<f64>),
}

#[derive(Clone, Debug)]
struct Shell {
    start: usize,
    len: usize,
    cum: f64,
    rate: ShellRate,
}

/// All offsets up to the largest pair distance, shell by shell, with the
/// cumulative Poisson intensity `β J` along them. Open pairs out of a vertex
/// are the offsets hit by a unit-rate Poisson process on `[0, Λ)`, which is
/// geometric skipping inside each homogeneous shell.
#[derive(Clone, Debug)]
struct OffsetTable {
    offsets: Vec<Vertex>,
    shells: Vec<Shell>,
    total: f64,
}

impl OffsetTable {
    fn build(model: &GraphModel, kernel: &KernelSpec, max_dist: u32) -> Result<OffsetTable, SamplerError> {
        let mut offsets = Vec::new();
        let mut shells = Vec::new();
        let mut cum = 0.0;
        for l in 1..=max_dist {
            let sphere = model.sphere_offsets(l)?;
            let start = offsets.len();
            let len = sphere.len();
            let rate = if kernel.anisotropic_at(l) {
                let mut acc = 0.0;
                let prefix: Vec<f64> = sphere
                    .iter()
                    .map(|z| {
                        acc += kernel.beta * kernel.j_offset(*z, l);
                        acc
                    })
                    .collect();
                ShellRate::Varying(prefix)
            } else {
                ShellRate::Uniform(kernel.beta * kernel.radial(l))
            };
            let mass = match &rate {
                ShellRate::Uniform(r) => r * len as f64,
                ShellRate::Varying(p) => *p.last().unwrap_or(&0.0),
            };
            offsets.extend(sphere);
            if mass > 0.0 {
                shells.push(Shell { start, len, cum, rate });
                cum += mass;
            }
        }
        Ok(OffsetTable { offsets, shells, total: cum })
    }

    /// Calls `hit` once for every offset index whose pair is open.
    fn for_each_open(&self, rng: &mut ChaCha8Rng, mut hit: impl FnMut(usize)) {
        let mut t = 0.0;
        let mut last = usize::MAX;
        let mut s = 0usize;
        loop {
            t -= (1.0 - unit(rng.next_u64())).ln();
            if t >= self.total {
                return;
            }
            while s + 1 < self.shells.len() && self.shells[s + 1].cum <= t {
                s += 1;
            }
            let sh = &self.shells[s];
            let within = t - sh.cum;
            let k = match &sh.rate {
                ShellRate::Uniform(r) => ((within / r) as usize).min(sh.len - 1),
                ShellRate::Varying(p) => p.partition_point(|&c| c <= within).min(sh.len - 1),
            };
            let idx = sh.start + k;
            if idx != last {
                hit(idx);
                last = idx;
            }
        }
    }
}

/// Reusable per-worker buffers for cluster exploration.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    stamp: Vec<u32>,
    gen: u32,
    heap: BinaryHeap<(u32, Reverse<u32>)>,
}

impl Scratch {
    pub fn new(n: usize) -> Scratch {
        Scratch { stamp: vec![0; n], gen: 0, heap: BinaryHeap::new() }
    }

    fn reset(&mut self, n: usize) -> (u32, u32) {
        if self.stamp.len() != n || self.gen >= u32::MAX / 2 - 2 {
            self.stamp = vec![0; n];
            self.gen = 0;
        }
        self.gen += 1;
        self.heap.clear();
        (2 * self.gen, 2 * self.gen + 1)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExploreRule {
    /// Stop with [`Verdict::Escaping`] as soon as a guard vertex or an open
    /// external edge is found.
    pub escape: bool,
    /// Stop once the explored set reaches this size.
    pub stop_at_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exploration {
    /// Discovered vertices, in discovery order.
    pub members: Vec<u32>,
    /// True when the whole cluster was explored.
    pub complete: bool,
    pub verdict: Verdict,
    pub max_radius: u32,
}

/// Sampling engine for one (window, kernel) pair.
#[derive(Debug)]
pub struct Sampler {
    window: Arc<Window>,
    kernel: KernelSpec,
    total_j: TailValue,
    radial: Vec<f64>,
    table: OffsetTable,
    ext_j: Vec<OnceLock<f64>>,
    pair_budget: u64,
}

impl Sampler {
    pub fn new(window: Arc<Window>, kernel: &KernelSpec) -> Result<Sampler, SamplerError> {
        let model = window.model().clone();
        if kernel.d != model.dimension() {
            return Err(SamplerError::Window("kernel and window use different graphs".into()));
        }
        let total_j = kernel.shell_sums(&model, None)?.total_j();
        let max_d = window.max_pair_distance();
        let radial = (0..=max_d).map(|l| if l == 0 { 0.0 } else { kernel.radial(l) }).collect();
        let table = OffsetTable::build(&model, kernel, max_d)?;
        let ext_j = (0..window.len()).map(|_| OnceLock::new()).collect();
        Ok(Sampler { window, kernel: kernel.clone(), total_j, radial, table, ext_j, pair_budget: DEFAULT_PAIR_BUDGET })
    }

    pub fn with_pair_budget(mut self, budget: u64) -> Sampler {
        self.pair_budget = budget;
        self
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn window_arc(&self) -> Arc<Window> {
        self.window.clone()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn total_j(&self) -> TailValue {
        self.total_j
    }

    #[inline]
    fn j_pair(&self, x: Vertex, y: Vertex) -> f64 {
        let m = self.window.model();
        let z = m.offset(x, y);
        let d = m.norm(z).expect("pair within horizon");
        if self.kernel.is_default() {
            self.radial[d as usize]
        } else {
            self.kernel.j_offset(z, d)
        }
    }

    /// Edge probability between window vertices `i != j`.
    pub fn pair_probability(&self, i: u32, j: u32) -> f64 {
        self.kernel.p_of(self.j_pair(self.window.vertex(i), self.window.vertex(j)))
    }

    /// `J(x, W^c)` for a window vertex.
    pub fn external_j(&self, i: u32) -> f64 {
        *self.ext_j[i as usize].get_or_init(|| {
            let x = self.window.vertex(i);
            let inside: f64 = self
                .window
                .vertices()
                .iter()
                .filter(|y| **y != x)
                .map(|y| self.j_pair(x, *y))
                .sum();
            (self.total_j.value() - inside).max(0.0)
        })
    }

    pub fn external_probability(&self, i: u32) -> f64 {
        self.kernel.p_of(self.external_j(i))
    }

    /// `1 - exp(-β J(C, W^c))` for a set inside the window and off the guard.
    pub fn external_escape_probability(&self, c: &[Vertex]) -> Result<f64, SamplerError> {
        let mut j = 0.0;
        for v in c {
            let i = self.window.index_of(v).ok_or(SamplerError::NotInWindow(*v))?;
            if self.window.in_guard(i) {
                return Err(SamplerError::InGuard(*v));
            }
            j += self.external_j(i);
        }
        Ok(self.kernel.p_of(j))
    }

    /// Escape probability of the nearest-neighbour 1-neighbourhood of a set
    /// of window vertices: the bias bound attached to a FINITE verdict.
    pub fn neighbourhood_bias(&self, cluster: &[u32]) -> f64 {
        let mut seen: Vec<u32> = cluster.to_vec();
        for &i in cluster {
            for y in self.window.model().neighbors(self.window.vertex(i)) {
                if let Some(j) = self.window.index_of(&y) {
                    seen.push(j);
                }
            }
        }
        seen.sort_unstable();
        seen.dedup();
        self.kernel.p_of(seen.iter().map(|&i| self.external_j(i)).sum())
    }

    pub fn escape_flag(&self, seed: u64, trial: u64, i: u32) -> bool {
        let p = self.external_probability(i);
        if p <= 0.0 {
            return false;
        }
        let mut rng = substream(seed, trial, PURPOSE_ESCAPE, i as u64);
        unit(rng.next_u64()) < p
    }

    /// Samples every window pair and every external flag.
    pub fn sample_configuration(&self, seed: u64, trial: u64, method: Method) -> Result<Configuration, SamplerError> {
        let n = self.window.len();
        let pairs = n as u64 * (n as u64).saturating_sub(1) / 2;
        if pairs > self.pair_budget {
            return Err(SamplerError::Budget { pairs, budget: self.pair_budget });
        }
        let mut edges = Vec::new();
        if self.kernel.beta > 0.0 {
            match method {
                Method::Sweep => {
                    let mut rng = substream(seed, trial, PURPOSE_SWEEP, 0);
                    for i in 0..n as u32 {
                        for j in i + 1..n as u32 {
                            let u = unit(rng.next_u64());
                            if u < self.pair_probability(i, j) {
                                edges.push((i, j));
                            }
                        }
                    }
                }
                Method::ShellSkip => {
                    let model = self.window.model();
                    for i in 0..n as u32 {
                        let x = self.window.vertex(i);
                        let mut rng = substream(seed, trial, PURPOSE_SKIP, i as u64);
                        self.table.for_each_open(&mut rng, |k| {
                            let y = model.translate(x, self.table.offsets[k]);
                            if let Some(j) = self.window.index_of(&y) {
                                if j > i {
                                    edges.push((i, j));
                                }
                            }
                        });
                    }
                    edges.sort_unstable();
                }
            }
        }
        let external = (0..n as u32).filter(|&i| self.escape_flag(seed, trial, i)).collect();
        Ok(Configuration {
            n: n as u32,
            edges,
            external,
            seed,
            trial,
            kernel: self.kernel.clone(),
            l_max: self.window.max_pair_distance(),
        })
    }

    /// Protocol verdict for a cluster of `config`.
    pub fn finiteness_verdict(&self, config: &Configuration, cluster: &[u32]) -> VerdictReport {
        let escaping = cluster.iter().any(|&i| self.window.in_guard(i) || config.escape_flag(i));
        let verdict = if escaping {
            Verdict::Escaping
        } else if cluster.iter().all(|&i| self.window.is_inner(i)) {
            Verdict::Finite
        } else {
            Verdict::Undecided
        };
        VerdictReport { verdict, bias_bound: self.neighbourhood_bias(cluster) }
    }

    /// Explores the union of the clusters of `seeds` without sampling the
    /// whole window. Each pair is decided once, by whichever endpoint is
    /// processed first, from that endpoint's own substream.
    pub fn explore(&self, seed: u64, trial: u64, seeds: &[u32], rule: ExploreRule, scratch: &mut Scratch) -> Exploration {
        let w = &*self.window;
        let model = w.model();
        let (found, done) = scratch.reset(w.len());
        let mut out = Exploration { members: Vec::new(), complete: false, verdict: Verdict::Finite, max_radius: 0 };

        // Returns true when exploration must stop.
        let discover = |i: u32, scratch: &mut Scratch, out: &mut Exploration| -> bool {
            scratch.stamp[i as usize] = found;
            out.members.push(i);
            out.max_radius = out.max_radius.max(w.radius(i));
            if rule.escape && (w.in_guard(i) || self.escape_flag(seed, trial, i)) {
                out.verdict = Verdict::Escaping;
                return true;
            }
            if rule.stop_at_size.is_some_and(|s| out.members.len() >= s) {
                return true;
            }
            scratch.heap.push((w.radius(i), Reverse(i)));
            false
        };

        for &s in seeds {
            if scratch.stamp[s as usize] != found && discover(s, scratch, &mut out) {
                return out;
            }
        }
        let mut hits = Vec::new();
        while let Some((_, Reverse(i))) = scratch.heap.pop() {
            scratch.stamp[i as usize] = done;
            let x = w.vertex(i);
            let mut rng = substream(seed, trial, PURPOSE_EXPLORE, i as u64);
            hits.clear();
            self.table.for_each_open(&mut rng, |k| {
                if let Some(j) = w.index_of(&model.translate(x, self.table.offsets[k])) {
                    hits.push(j);
                }
            });
            for &j in &hits {
                let st = scratch.stamp[j as usize];
                if st != found && st != done && discover(j, scratch, &mut out) {
                    return out;
                }
            }
        }
        out.complete = true;
        if rule.escape && !out.members.iter().all(|&i| w.is_inner(i)) {
            out.verdict = Verdict::Undecided;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z2() -> GraphModel {
        GraphModel::lattice(2).unwrap()
    }

    fn micro() -> Arc<Window> {
        let vs: Vec<Vertex> = (0..2).flat_map(|x| (0..3).map(move |y| Vertex::xy(x, y))).collect();
        Arc::new(Window::explicit(&z2(), Vertex::ORIGIN, &vs).unwrap())
    }

    #[test]
    fn window_shapes() {
        let g = z2();
        let w = Window::ball(&g, Vertex::ORIGIN, 8, 16, 4).unwrap();
        assert_eq!(w.len() as u64, g.ball_size(16).unwrap());
        assert!(w.in_guard(w.index_of(&Vertex::xy(13, 0)).unwrap()));
        assert!(!w.in_guard(w.index_of(&Vertex::xy(12, 0)).unwrap()));
        assert!(w.is_inner(w.index_of(&Vertex::xy(4, 4)).unwrap()));
        assert!(Window::ball(&g, Vertex::ORIGIN, 9, 16, 4).is_err());
        assert!(Window::ball(&g, Vertex::ORIGIN, 8, 16, 9).is_err());
        let h = GraphModel::heisenberg(8);
        assert!(Window::ball(&h, Vertex::ORIGIN, 2, 4, 1).is_ok());
        assert!(Window::ball(&h, Vertex::ORIGIN, 2, 5, 1).is_err());
        for (i, v) in w.vertices().iter().enumerate() {
            assert_eq!(w.index_of(v), Some(i as u32));
        }
        assert_eq!(w.index_of(&Vertex::xy(17, 0)), None);
    }

    #[test]
    fn zero_beta() {
        let g = z2();
        let k = KernelSpec::power_law(&g, 1.5, 0.0).unwrap();
        let s = Sampler::new(micro(), &k).unwrap();
        for m in [Method::Sweep, Method::ShellSkip] {
            let c = s.sample_configuration(1, 0, m).unwrap();
            assert!(c.edges.is_empty() && c.external.is_empty());
        }
        let o = s.window().center_index();
        let c = s.sample_configuration(1, 0, Method::Sweep).unwrap();
        let v = s.finiteness_verdict(&c, &[o]);
        assert_eq!(v, VerdictReport { verdict: Verdict::Finite, bias_bound: 0.0 });
    }

    #[test]
    fn deterministic() {
        let g = z2();
        let w = Arc::new(Window::ball(&g, Vertex::ORIGIN, 3, 8, 4).unwrap());
        let k = KernelSpec::power_law(&g, 1.5, 2.0).unwrap();
        let s = Sampler::new(w, &k).unwrap();
        for m in [Method::Sweep, Method::ShellSkip] {
            let a = s.sample_configuration(42, 7, m).unwrap();
            let b = s.sample_configuration(42, 7, m).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, s.sample_configuration(42, 8, m).unwrap());
            assert!(a.edges.windows(2).all(|e| e[0] < e[1]));
            assert!(a.edges.iter().all(|&(i, j)| i < j && j < a.n));
        }
    }

    #[test]
    fn budget_enforced() {
        let g = z2();
        let k = KernelSpec::power_law(&g, 1.5, 1.0).unwrap();
        let s = Sampler::new(micro(), &k).unwrap().with_pair_budget(10);
        assert!(matches!(s.sample_configuration(0, 0, Method::Sweep), Err(SamplerError::Budget { pairs: 15, .. })));
    }

    #[test]
    fn distance_three_pair_frequency() {
        let g = z2();
        let w = Arc::new(Window::explicit(&g, Vertex::ORIGIN, &[Vertex::ORIGIN, Vertex::xy(3, 0)]).unwrap());
        let k = KernelSpec::power_law(&g, 1.5, 1.0).unwrap();
        let s = Sampler::new(w, &k).unwrap();
        let p = 1.0 - (-1.0f64 / 27.0).exp();
        let n = 100_000u64;
        for m in [Method::Sweep, Method::ShellSkip] {
            let open = (0..n).filter(|&t| !s.sample_configuration(9, t, m).unwrap().edges.is_empty()).count();
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((open as f64 / n as f64 - p).abs() < 3.0 * sigma, "{m:?} {open}");
        }
    }

    #[test]
    fn sweep_and_skip_marginals_agree() {
        let g = z2();
        let w = Arc::new(Window::plain_ball(&g, Vertex::ORIGIN, 2).unwrap());
        let k = KernelSpec::power_law(&g, 1.5, 1.0).unwrap();
        let s = Sampler::new(w.clone(), &k).unwrap();
        let n = w.len() as u32;
        let trials = 100_000u64;
        let idx = |i: u32, j: u32| (i * n + j) as usize;
        for m in [Method::Sweep, Method::ShellSkip] {
            let mut counts = vec![0u32; (n * n) as usize];
            let mut total_edges = 0u64;
            for t in 0..trials {
                let c = s.sample_configuration(3, t, m).unwrap();
                total_edges += c.edges.len() as u64;
                for (i, j) in c.edges {
                    counts[idx(i, j)] += 1;
                }
            }
            let mut mean = 0.0;
            let mut var = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    let p = s.pair_probability(i, j);
                    mean += p;
                    var += p * (1.0 - p);
                    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
                    let f = counts[idx(i, j)] as f64 / trials as f64;
                    assert!((f - p).abs() < 4.0 * sigma, "{m:?} pair ({i},{j}) {f} vs {p}");
                }
            }
            let emp = total_edges as f64 / trials as f64;
            assert!((emp - mean).abs() < 3.0 * (var / trials as f64).sqrt(), "{m:?} {emp} vs {mean}");
        }
    }

    #[test]
    fn external_escape_of_origin() {
        let g = z2();
        let w = Arc::new(Window::ball(&g, Vertex::ORIGIN, 1, 4, 1).unwrap());
        let k = KernelSpec::power_law(&g, 1.75, 1.0).unwrap();
        let s = Sampler::new(w, &k).unwrap();
        let got = s.external_escape_probability(&[Vertex::ORIGIN]).unwrap();
        let sums = k.shell_sums(&g, None).unwrap();
        let mut log_q = -k.beta * sums.j_tail.remainder_estimate;
        for l in 5..=sums.horizon {
            log_q += 4.0 * l as f64 * (-k.p_of(k.power(l))).ln_1p();
        }
        assert!((got - (1.0 - log_q.exp())).abs() < 1e-12, "{got}");
        assert!(matches!(s.external_escape_probability(&[Vertex::xy(4, 0)]), Err(SamplerError::InGuard(_))));
        let a = s.external_escape_probability(&[Vertex::ORIGIN]).unwrap();
        let b = s.external_escape_probability(&[Vertex::ORIGIN, Vertex::xy(1, 0)]).unwrap();
        assert!(a <= b);
        let k0 = k.with_beta(0.0);
        let s0 = Sampler::new(Arc::new(Window::ball(&g, Vertex::ORIGIN, 1, 4, 1).unwrap()), &k0).unwrap();
        assert_eq!(s0.external_escape_probability(&[Vertex::ORIGIN]).unwrap(), 0.0);
    }

    #[test]
    fn guard_cluster_escapes() {
        let g = z2();
        let w = Arc::new(Window::ball(&g, Vertex::ORIGIN, 2, 8, 4).unwrap());
        let k = KernelSpec::power_law(&g, 2.0, 0.0).unwrap();
        let s = Sampler::new(w.clone(), &k).unwrap();
        let c = s.sample_configuration(0, 0, Method::Sweep).unwrap();
        let o = w.center_index();
        let far = w.index_of(&Vertex::xy(0, 6)).unwrap();
        let c = c.with_edges(&[(o, far)]);
        assert_eq!(s.finiteness_verdict(&c, &[o, far]).verdict, Verdict::Escaping);
        let mid = w.index_of(&Vertex::xy(0, 3)).unwrap();
        assert_eq!(s.finiteness_verdict(&c, &[o, mid]).verdict, Verdict::Undecided);
    }

    #[test]
    fn explorer_matches_cluster_law_on_line() {
        // On a 3-vertex window the explorer's cluster-size law must match the
        // exact law computed from the three pair probabilities.
        let g = GraphModel::lattice(1).unwrap();
        let vs = [Vertex::new(-1, 0, 0), Vertex::ORIGIN, Vertex::new(1, 0, 0)];
        let w = Arc::new(Window::explicit(&g, Vertex::ORIGIN, &vs).unwrap());
        let k = KernelSpec::power_law(&g, 1.5, 0.7).unwrap();
        let s = Sampler::new(w.clone(), &k).unwrap();
        let o = w.center_index();
        let (a, b) = (s.pair_probability(0, 1), s.pair_probability(1, 2));
        let c = s.pair_probability(0, 2);
        let p3 = a * b + a * (1.0 - b) * c + (1.0 - a) * b * c;
        let p1 = (1.0 - a) * (1.0 - b);
        let mut scratch = Scratch::new(3);
        let trials = 100_000u64;
        let (mut n1, mut n3) = (0u64, 0u64);
        for t in 0..trials {
            let e = s.explore(5, t, &[o], ExploreRule::default(), &mut scratch);
            match e.members.len() {
                1 => n1 += 1,
                3 => n3 += 1,
                _ => {}
            }
        }
        for (n, p) in [(n1, p1), (n3, p3)] {
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((n as f64 / trials as f64 - p).abs() < 3.5 * sigma, "{n} {p}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn verdict_monotone_in_edges(seed in 0u64..1000, extra in proptest::collection::vec((0u32..41, 0u32..41), 0..6)) {
            let g = z2();
            let w = Arc::new(Window::ball(&g, Vertex::ORIGIN, 2, 4, 1).unwrap());
            let k = KernelSpec::power_law(&g, 1.5, 0.6).unwrap();
            let s = Sampler::new(w.clone(), &k).unwrap();
            let c = s.sample_configuration(seed, 0, Method::Sweep).unwrap();
            let o = w.center_index();
            let cluster = |c: &Configuration| {
                let adj = c.adjacency();
                let mut seen = vec![false; c.n as usize];
                let mut stack = vec![o];
                seen[o as usize] = true;
                let mut out = vec![];
                while let Some(i) = stack.pop() {
                    out.push(i);
                    for &j in &adj[i as usize] {
                        if !seen[j as usize] { seen[j as usize] = true; stack.push(j); }
                    }
                }
                out
            };
            let before = s.finiteness_verdict(&c, &cluster(&c)).verdict;
            let c2 = c.with_edges(&extra);
            let after = s.finiteness_verdict(&c2, &cluster(&c2)).verdict;
            if before == Verdict::Escaping {
                prop_assert_eq!(after, Verdict::Escaping);
            }
            if after == Verdict::Finite {
                prop_assert_eq!(before, Verdict::Finite);
            }
        }
    }
}
