//! Connection kernels, edge probabilities and the shell sums built on them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Family, GraphError, GraphModel, Vertex};

/// Shells summed exactly on lattices before switching to the analytic tail.
pub const DEFAULT_LATTICE_HORIZON: u32 = 1 << 16;

/// Doubling ratio at or above which the total-length sums count as growing.
pub const DIVERGENCE_RATIO: f64 = 1.05;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("alpha must exceed 1 for tail sums (got {0})")]
    NonIntegrable(f64),
    #[error("invalid kernel parameter: {0}")]
    Parameter(String),
    #[error("kernel is undefined on the diagonal")]
    SamePoint,
    #[error("sets overlap at {0}")]
    Overlap(Vertex),
    #[error("kernel table line {line}: {msg}")]
    Table { line: usize, msg: String },
    #[error("kernel table violates the power-law sandwich at distance {0}")]
    Sandwich(u32),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Per-orbit kernel values overriding the power law.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KernelTable {
    by_distance: BTreeMap<u32, f64>,
    by_offset: BTreeMap<Vertex, f64>,
    offset_distances: BTreeSet<u32>,
}

impl KernelTable {
    pub fn new() -> KernelTable {
        KernelTable::default()
    }

    /// Parses one `distance value` pair per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<KernelTable, KernelError> {
        let mut t = KernelTable::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| KernelError::Table { line: i + 1, msg: msg.to_string() };
            let mut parts = line.split_whitespace();
            let d: u32 = parts.next().ok_or_else(|| err("missing distance"))?.parse().map_err(|_| err("bad distance"))?;
            let v: f64 = parts.next().ok_or_else(|| err("missing value"))?.parse().map_err(|_| err("bad value"))?;
            if parts.next().is_some() {
                return Err(err("trailing fields"));
            }
            if d == 0 || !(v.is_finite() && v >= 0.0) {
                return Err(err("distance must be positive and value finite, nonnegative"));
            }
            if t.by_distance.insert(d, v).is_some() {
                return Err(err("duplicate distance"));
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<KernelTable, KernelError> {
        KernelTable::parse(&std::fs::read_to_string(path)?)
    }

    pub fn with_distance(mut self, d: u32, value: f64) -> KernelTable {
        self.by_distance.insert(d, value);
        self
    }

    /// Assigns a value to the orbit of one offset. The inverse offset gets
    /// the same value so the kernel stays symmetric.
    pub fn with_offset(mut self, model: &GraphModel, z: Vertex, value: f64) -> Result<KernelTable, KernelError> {
        let d = model.norm(z)?;
        let zinv = model.offset(z, Vertex::ORIGIN);
        self.by_offset.insert(z, value);
        self.by_offset.insert(zinv, value);
        self.offset_distances.insert(d);
        Ok(self)
    }

    fn max_distance(&self) -> u32 {
        let a = self.by_distance.keys().next_back().copied().unwrap_or(0);
        let b = self.offset_distances.iter().next_back().copied().unwrap_or(0);
        a.max(b)
    }

    fn is_empty(&self) -> bool {
        self.by_distance.is_empty() && self.by_offset.is_empty()
    }
}

/// The kernel `J` with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub alpha: f64,
    pub beta: f64,
    pub rj: u32,
    pub d: u32,
    pub c_j: f64,
    pub big_c_j: f64,
    table: Option<Arc<KernelTable>>,
}

/// A truncated infinite sum: the exact part to a horizon plus the tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailValue {
    pub exact: f64,
    pub remainder_estimate: f64,
    pub remainder_bound: f64,
}

impl TailValue {
    pub fn value(&self) -> f64 {
        self.exact + self.remainder_estimate
    }

    pub fn lower(&self) -> f64 {
        self.exact
    }

    pub fn upper(&self) -> f64 {
        self.exact + self.remainder_bound
    }

    fn scale(self, c: f64) -> TailValue {
        TailValue {
            exact: self.exact * c,
            remainder_estimate: self.remainder_estimate * c,
            remainder_bound: self.remainder_bound * c,
        }
    }
}

/// Per-shell sums of `J(o, ·)` and `p(o, ·)` out to a horizon.
#[derive(Clone, Debug)]
pub struct ShellSums {
    pub horizon: u32,
    /// `j[L] = Σ_{y ∈ S(L)} J(o, y)`, index 0 unused.
    pub j: Vec<f64>,
    /// `p[L] = Σ_{y ∈ S(L)} p(o, y) = D_L`.
    pub p: Vec<f64>,
    /// Tail of `Σ J` beyond the horizon.
    pub j_tail: TailValue,
}

impl ShellSums {
    /// `Σ_{y ≠ o} J(o, y)`.
    pub fn total_j(&self) -> TailValue {
        let exact: f64 = self.j[1..].iter().sum();
        TailValue { exact, ..self.j_tail }
    }

    /// `Σ_{L ≥ r} D_L` with the tail beyond the horizon bounded by `β Σ J`.
    pub fn tail_degree(&self, r: u32, beta: f64) -> TailValue {
        let start = r.max(1) as usize;
        let exact: f64 = if start <= self.horizon as usize { self.p[start..].iter().sum() } else { 0.0 };
        let t = self.j_tail.scale(beta);
        TailValue { exact, remainder_estimate: t.remainder_estimate, remainder_bound: t.remainder_bound }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub r: u32,
    pub degree: f64,
    pub tail: TailValue,
    pub length_partial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeProfile {
    pub rows: Vec<DegreeRow>,
    /// `(R, T(2R)/T(R))` for dyadic `R` with `T(R) = Σ_{L ≤ R} L·D_L`.
    pub doublings: Vec<(u32, f64)>,
    pub length_divergent: bool,
    pub horizon: u32,
}

/// Target set for [`KernelSpec::j_cross`].
#[derive(Clone, Copy, Debug)]
pub enum CrossTarget<'a> {
    Set(&'a [Vertex]),
    BallComplement { center: Vertex, radius: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossSum {
    pub j: TailValue,
    /// `exp(-β J(A, B))`, evaluated at the point value of the sum.
    pub no_edge_probability: f64,
    /// Bracket for the same probability from the tail bound.
    pub no_edge_bracket: (f64, f64),
}

impl KernelSpec {
    /// The default kernel `J(x, y) = d(x, y)^{-dα}` with `R_J = 1`.
    pub fn power_law(model: &GraphModel, alpha: f64, beta: f64) -> Result<KernelSpec, KernelError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(KernelError::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(KernelError::Parameter(format!("beta must be nonnegative, got {beta}")));
        }
        Ok(KernelSpec { alpha, beta, rj: 1, d: model.dimension(), c_j: 1.0, big_c_j: 1.0, table: None })
    }

    /// A tabulated kernel: table entries override the power law on their
    /// orbits and every other pair keeps `d^{-dα}`. The sandwich constants
    /// are the extremes of `J·d^{dα}` over distances `≥ R_J`.
    pub fn tabulated(
        model: &GraphModel,
        alpha: f64,
        beta: f64,
        rj: u32,
        table: KernelTable,
    ) -> Result<KernelSpec, KernelError> {
        let mut k = KernelSpec::power_law(model, alpha, beta)?;
        if rj == 0 {
            return Err(KernelError::Parameter("rj must be at least 1".into()));
        }
        k.rj = rj;
        if table.is_empty() {
            return Ok(k);
        }
        let (mut lo, mut hi) = (1.0f64, 1.0f64);
        for (&d, &v) in &table.by_distance {
            if d >= rj {
                let ratio = v / k.power(d);
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
        }
        for (&z, &v) in &table.by_offset {
            let d = model.norm(z)?;
            if d >= rj {
                let ratio = v / k.power(d);
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
        }
        if lo <= 0.0 {
            let d = table
                .by_distance
                .iter()
                .find(|(d, v)| **d >= rj && **v == 0.0)
                .map(|(d, _)| *d)
                .unwrap_or(rj);
            return Err(KernelError::Sandwich(d));
        }
        k.c_j = lo;
        k.big_c_j = hi;
        k.table = Some(Arc::new(table));
        Ok(k)
    }

    pub fn with_beta(&self, beta: f64) -> KernelSpec {
        KernelSpec { beta, ..self.clone() }
    }

    pub fn is_default(&self) -> bool {
        self.table.is_none()
    }

    /// `L^{-dα}`.
    pub fn power(&self, dist: u32) -> f64 {
        (dist as f64).powf(-(self.d as f64) * self.alpha)
    }

    /// Kernel value shared by every isotropic offset at this distance.
    pub fn radial(&self, dist: u32) -> f64 {
        match &self.table {
            Some(t) => t.by_distance.get(&dist).copied().unwrap_or_else(|| self.power(dist)),
            None => self.power(dist),
        }
    }

    /// Whether some offset at this distance carries its own value.
    pub fn anisotropic_at(&self, dist: u32) -> bool {
        self.table.as_ref().is_some_and(|t| t.offset_distances.contains(&dist))
    }

    /// `J(o, z)` for an offset `z` at distance `dist ≥ 1`.
    pub fn j_offset(&self, z: Vertex, dist: u32) -> f64 {
        if let Some(t) = &self.table {
            if let Some(&v) = t.by_offset.get(&z) {
                return v;
            }
        }
        self.radial(dist)
    }

    pub fn j(&self, model: &GraphModel, x: Vertex, y: Vertex) -> Result<f64, KernelError> {
        if x == y {
            return Err(KernelError::SamePoint);
        }
        let z = model.offset(x, y);
        Ok(self.j_offset(z, model.norm(z)?))
    }

    /// `1 - exp(-βJ)` without cancellation for small `βJ`.
    pub fn p_of(&self, j: f64) -> f64 {
        -(-self.beta * j).exp_m1()
    }

    pub fn edge_probability(&self, model: &GraphModel, x: Vertex, y: Vertex) -> Result<f64, KernelError> {
        Ok(self.p_of(self.j(model, x, y)?))
    }

    /// `J*(r) = max_{z ∈ S(r)} J(o, z)`.
    pub fn j_star(&self, model: &GraphModel, r: u32) -> Result<f64, KernelError> {
        if r == 0 {
            return Err(KernelError::Parameter("j_star needs r >= 1".into()));
        }
        if !self.anisotropic_at(r) {
            model.sphere_size(r)?;
            return Ok(self.radial(r));
        }
        let sphere = model.sphere_offsets(r)?;
        Ok(sphere.into_iter().map(|z| self.j_offset(z, r)).fold(0.0, f64::max))
    }

    fn shell(&self, model: &GraphModel, dist: u32) -> Result<(f64, f64), KernelError> {
        if self.anisotropic_at(dist) {
            let (mut sj, mut sp) = (0.0, 0.0);
            for z in model.sphere_offsets(dist)? {
                let j = self.j_offset(z, dist);
                sj += j;
                sp += self.p_of(j);
            }
            Ok((sj, sp))
        } else {
            let n = model.sphere_size(dist)? as f64;
            let j = self.radial(dist);
            Ok((n * j, n * self.p_of(j)))
        }
    }

    /// Exact shell sums out to `horizon` (default: the model's metric horizon,
    /// or [`DEFAULT_LATTICE_HORIZON`] on lattices) and the tail beyond it.
    pub fn shell_sums(&self, model: &GraphModel, horizon: Option<u32>) -> Result<ShellSums, KernelError> {
        if self.alpha <= 1.0 {
            return Err(KernelError::NonIntegrable(self.alpha));
        }
        let h = match (horizon, model.horizon()) {
            (Some(h), Some(mh)) => h.min(mh),
            (Some(h), None) => h,
            (None, Some(mh)) => mh,
            (None, None) => DEFAULT_LATTICE_HORIZON,
        };
        if let Some(t) = &self.table {
            if t.max_distance() > h {
                return Err(KernelError::Parameter(format!(
                    "kernel table reaches distance {} beyond summation horizon {h}",
                    t.max_distance()
                )));
            }
        }
        let mut j = vec![0.0; h as usize + 1];
        let mut p = vec![0.0; h as usize + 1];
        for l in 1..=h {
            let (sj, sp) = self.shell(model, l)?;
            j[l as usize] = sj;
            p[l as usize] = sp;
        }
        let j_tail = self.power_tail(model, h)?;
        Ok(ShellSums { horizon: h, j, p, j_tail })
    }

    /// Tail `Σ_{L > h} #S(L) L^{-dα}` of the pure power law.
    ///
    /// The bound splits `L ≥ m = h+1` into dyadic shells `[2^i m, 2^{i+1} m)`:
    /// `Σ ≤ C_G(2m) 2^d m^{d(1-α)} / (1 - 2^{d(1-α)})` with `C_G(R)` bounding
    /// `#B(R')/R'^d` for `R' ≥ R`. The estimate integrates the sphere size.
    fn power_tail(&self, model: &GraphModel, h: u32) -> Result<TailValue, KernelError> {
        let d = self.d as f64;
        let a = self.alpha;
        let m = h as f64 + 1.0;
        let c_g = match model.family() {
            Family::Lattice(dim) => {
                // #B(R)/R^d is decreasing on lattices, so R = 2m is the sup.
                let r = 2.0 * m;
                let ball = match dim {
                    1 => 2.0 * r + 1.0,
                    2 => 2.0 * r * r + 2.0 * r + 1.0,
                    _ => (4.0 * r * r * r + 6.0 * r * r + 8.0 * r + 3.0) / 3.0,
                };
                ball / r.powf(d)
            }
            Family::Heisenberg => model.growth_fit(h.max(4))?.big_c_g,
        };
        let bound = c_g * 2f64.powf(d) * m.powf(d * (1.0 - a)) / (1.0 - 2f64.powf(d * (1.0 - a)));
        let lo = h as f64 + 0.5;
        let integral = |k: f64, coef: f64| coef * lo.powf(k + 1.0 - d * a) / (d * a - k - 1.0);
        let estimate = match model.family() {
            Family::Lattice(1) => integral(0.0, 2.0),
            Family::Lattice(2) => integral(1.0, 4.0),
            Family::Lattice(_) => integral(2.0, 4.0) + integral(0.0, 2.0),
            Family::Heisenberg => {
                let last = model.sphere_size(h)? as f64;
                integral(d - 1.0, last / (h as f64).powf(d - 1.0))
            }
        };
        Ok(TailValue { exact: 0.0, remainder_estimate: estimate.min(bound), remainder_bound: bound })
    }

    /// Degrees per sphere, tail degrees and partial total-length sums for
    /// `r ∈ [1, r_max]`.
    pub fn degree_profile(&self, model: &GraphModel, r_max: u32) -> Result<DegreeProfile, KernelError> {
        if self.alpha <= 1.0 {
            return Err(KernelError::NonIntegrable(self.alpha));
        }
        if r_max < 8 {
            return Err(KernelError::Parameter(format!("degree profile needs r_max >= 8, got {r_max}")));
        }
        let sums = self.shell_sums(model, None)?;
        if r_max > sums.horizon {
            return Err(GraphError::MetricHorizon { horizon: sums.horizon }.into());
        }
        let tail_rem = sums.j_tail.scale(self.beta);
        let mut suffix = vec![0.0; sums.horizon as usize + 2];
        for l in (1..=sums.horizon as usize).rev() {
            suffix[l] = suffix[l + 1] + sums.p[l];
        }
        let mut rows = Vec::with_capacity(r_max as usize);
        let mut length = 0.0;
        for r in 1..=r_max {
            let dr = sums.p[r as usize];
            length += r as f64 * dr;
            rows.push(DegreeRow {
                r,
                degree: dr,
                tail: TailValue { exact: suffix[r as usize], ..tail_rem },
                length_partial: length,
            });
        }
        let mut doublings = Vec::new();
        let mut big_r = 1u32;
        while 2 * big_r <= r_max {
            let t1 = rows[big_r as usize - 1].length_partial;
            let t2 = rows[2 * big_r as usize - 1].length_partial;
            doublings.push((big_r, if t1 > 0.0 { t2 / t1 } else { f64::NAN }));
            big_r *= 2;
        }
        let last3 = &doublings[doublings.len().saturating_sub(3)..];
        let length_divergent = last3.len() == 3 && last3.iter().all(|&(_, q)| q >= DIVERGENCE_RATIO);
        Ok(DegreeProfile { rows, doublings, length_divergent, horizon: sums.horizon })
    }

    /// `J(A, B) = Σ_{x ∈ A, y ∈ B} J(x, y)`.
    pub fn j_cross(&self, model: &GraphModel, a: &[Vertex], target: CrossTarget<'_>) -> Result<CrossSum, KernelError> {
        let j = match target {
            CrossTarget::Set(b) => {
                let bset: BTreeSet<Vertex> = b.iter().copied().collect();
                if let Some(x) = a.iter().find(|x| bset.contains(x)) {
                    return Err(KernelError::Overlap(*x));
                }
                let mut s = 0.0;
                for &x in a {
                    for &y in &bset {
                        s += self.j(model, x, y)?;
                    }
                }
                TailValue { exact: s, remainder_estimate: 0.0, remainder_bound: 0.0 }
            }
            CrossTarget::BallComplement { center, radius } => {
                for &x in a {
                    if model.distance(center, x)? > radius {
                        return Err(KernelError::Overlap(x));
                    }
                }
                let ball = model.ball(center, radius)?;
                let sums = self.shell_sums(model, None)?;
                let total = sums.total_j();
                let mut inside = 0.0;
                for &x in a {
                    for &y in &ball {
                        if y != x {
                            inside += self.j(model, x, y)?;
                        }
                    }
                }
                let n = a.len() as f64;
                TailValue {
                    exact: n * total.exact - inside,
                    remainder_estimate: n * total.remainder_estimate,
                    remainder_bound: n * total.remainder_bound,
                }
            }
        };
        Ok(CrossSum {
            j,
            no_edge_probability: (-self.beta * j.value()).exp(),
            no_edge_bracket: ((-self.beta * j.upper()).exp(), (-self.beta * j.lower()).exp()),
        })
    }
}
