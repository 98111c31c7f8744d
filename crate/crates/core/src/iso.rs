//! Boundaries, pair counts, isoperimetric constants and the anchored
//! dimension estimator.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::enumerate::{animals, Cell, FOUR};
use crate::cluster::clusters;
use crate::graph::{GraphError, GraphModel, Vertex};
use crate::sampler::{Configuration, Sampler, Verdict};
use crate::stats::least_squares;

pub use crate::blocks::boundary;

#[derive(Debug, Error, PartialEq)]
pub enum IsoError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("empty collection of sets")]
    Empty,
    #[error("anchor cluster is {0:?}, not escaping")]
    NotEscaping(Verdict),
    #[error("only {0} usable sets in the schedule, need at least 3")]
    TooFewPoints(usize),
    #[error("{0} is not a window vertex")]
    NotInWindow(Vertex),
}

/// Open edges with exactly one endpoint in `w` (window indices), by
/// scanning the incidence lists of `w`.
pub fn edge_boundary(config: &Configuration, w: &[u32]) -> usize {
    let mut inside = vec![false; config.n as usize];
    for &i in w {
        inside[i as usize] = true;
    }
    let adj = config.adjacency();
    w.iter().map(|&i| adj[i as usize].iter().filter(|&&j| !inside[j as usize]).count()).sum()
}

/// The same count by scanning the edge list once.
pub fn edge_boundary_by_pairs(config: &Configuration, w: &[u32]) -> usize {
    let set: HashSet<u32> = w.iter().copied().collect();
    config.edges.iter().filter(|(i, j)| set.contains(i) != set.contains(j)).count()
}

/// `#P(A, r)`: pairs `(x, y)` with `x ∈ A`, `y ∉ A` and `d(x, y) = r`,
/// as `Σ_{x ∈ A} #(S(x, r) \ A)`.
pub fn pair_count(model: &GraphModel, a: &[Vertex], r: u32) -> Result<u64, GraphError> {
    let set: HashSet<Vertex> = a.iter().copied().collect();
    let sphere = model.sphere_offsets(r)?;
    let mut n = 0u64;
    for x in &set {
        n += sphere.iter().filter(|z| !set.contains(&model.translate(*x, **z))).count() as u64;
    }
    Ok(n)
}

/// The same count from the other side: for each `y ∉ A` within distance
/// `r` of `A`, the number of `x ∈ A` at distance exactly `r`.
pub fn pair_count_outside_in(model: &GraphModel, a: &[Vertex], r: u32) -> Result<u64, GraphError> {
    let set: HashSet<Vertex> = a.iter().copied().collect();
    let mut candidates = HashSet::new();
    for x in &set {
        for y in model.ball(*x, r)? {
            if !set.contains(&y) {
                candidates.insert(y);
            }
        }
    }
    let mut n = 0u64;
    for y in candidates {
        for x in &set {
            if model.distance(*x, y)? == r {
                n += 1;
            }
        }
    }
    Ok(n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub r: u32,
    pub count: u64,
    /// `r·#∂A·#S(r)`.
    pub varopoulos: u64,
    pub violation: bool,
    /// `c_iso·(#∂A)^{d/(d−1)}·#S(r)` with the supplied constant; reported only.
    pub isoperimetric_form: Option<f64>,
}

pub fn pair_check(model: &GraphModel, a: &[Vertex], r: u32, c_iso: Option<f64>) -> Result<PairCheck, GraphError> {
    let count = pair_count(model, a, r)?;
    let db = boundary(model, a).len() as u64;
    let s = model.sphere_size(r)?;
    let varopoulos = r as u64 * db * s;
    let d = model.dimension() as f64;
    let isoperimetric_form = c_iso.filter(|_| d > 1.0).map(|c| c * (db as f64).powf(d / (d - 1.0)) * s as f64);
    Ok(PairCheck { r, count, varopoulos, violation: count > varopoulos, isoperimetric_form })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoReport {
    pub size: usize,
    pub boundary: usize,
    pub ratio: f64,
    pub pairs: Vec<PairCheck>,
}

pub fn iso_report(model: &GraphModel, a: &[Vertex], r_max: u32, c_iso: Option<f64>) -> Result<IsoReport, GraphError> {
    let size = a.len();
    let b = boundary(model, a).len();
    let d = model.dimension() as f64;
    let pairs = (1..=r_max).map(|r| pair_check(model, a, r, c_iso)).collect::<Result<_, _>>()?;
    Ok(IsoReport { size, boundary: b, ratio: b as f64 / (size as f64).powf((d - 1.0) / d), pairs })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoFit {
    pub c_iso: f64,
    pub argmin: usize,
    pub set: Vec<Vertex>,
}

/// `ĉ_iso = min #∂A / (#A)^{(d−1)/d}` over the collection.
pub fn iso_constant_fit(model: &GraphModel, sets: &[Vec<Vertex>]) -> Result<IsoFit, IsoError> {
    let d = model.dimension() as f64;
    let mut best: Option<(f64, usize)> = None;
    for (i, a) in sets.iter().enumerate() {
        if a.is_empty() {
            continue;
        }
        let ratio = boundary(model, a).len() as f64 / (a.len() as f64).powf((d - 1.0) / d);
        if best.is_none_or(|(b, _)| ratio < b) {
            best = Some((ratio, i));
        }
    }
    let (c_iso, argmin) = best.ok_or(IsoError::Empty)?;
    Ok(IsoFit { c_iso, argmin, set: sets[argmin].clone() })
}

fn cells_to_vertices(a: &[Cell]) -> Vec<Vertex> {
    let mut v: Vec<Vertex> = a.iter().map(|&(x, y)| Vertex::xy(x, y)).collect();
    v.sort_unstable();
    v
}

/// All connected sets of at most `cap` cells in Z^2, one per translation class.
pub fn connected_sets(cap: usize) -> Vec<Vec<Vertex>> {
    animals(cap, &FOUR, Vec::new, |acc: &mut Vec<Vec<Vertex>>, a| acc.push(cells_to_vertices(a)))
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoSweep {
    pub sets: u64,
    pub checks: u64,
    pub violations: u64,
    pub c_iso: f64,
    /// Largest `#P(A, r) / (r·#∂A·#S(r))` seen.
    pub max_ratio: f64,
    pub two_way_mismatches: u64,
}

/// Varopoulos check for every connected Z^2 set of at most `cap` cells and
/// every `r ≤ r_max`, with the two pair-count loops compared throughout.
pub fn varopoulos_sweep(cap: usize, r_max: u32) -> IsoSweep {
    let model = GraphModel::lattice(2).expect("Z^2");
    let empty = || IsoSweep { sets: 0, checks: 0, violations: 0, c_iso: f64::INFINITY, max_ratio: 0.0, two_way_mismatches: 0 };
    let parts = animals(cap, &FOUR, empty, |acc, cells| {
        let a = cells_to_vertices(cells);
        acc.sets += 1;
        let b = boundary(&model, &a).len();
        acc.c_iso = acc.c_iso.min(b as f64 / (a.len() as f64).sqrt());
        for r in 1..=r_max {
            let c = pair_check(&model, &a, r, None).expect("lattice");
            let other = pair_count_outside_in(&model, &a, r).expect("lattice");
            acc.checks += 1;
            acc.violations += c.violation as u64;
            acc.two_way_mismatches += (other != c.count) as u64;
            acc.max_ratio = acc.max_ratio.max(c.count as f64 / c.varopoulos as f64);
        }
    });
    parts.into_iter().fold(empty(), |a, b| IsoSweep {
        sets: a.sets + b.sets,
        checks: a.checks + b.checks,
        violations: a.violations + b.violations,
        c_iso: a.c_iso.min(b.c_iso),
        max_ratio: a.max_ratio.max(b.max_ratio),
        two_way_mismatches: a.two_way_mismatches + b.two_way_mismatches,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereFit {
    /// `δ = d − slope` of `log #S(r)` against `log r`.
    pub delta: f64,
    pub slope: f64,
    /// `max_r #S(r) / r^{d−δ}`.
    pub c: f64,
}

pub fn sphere_exponent_fit(model: &GraphModel, r_max: u32) -> Result<SphereFit, GraphError> {
    if r_max < 4 {
        return Err(GraphError::FitRange(r_max));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in 2..=r_max {
        xs.push((r as f64).ln());
        ys.push((model.sphere_size(r)? as f64).ln());
    }
    let fit = least_squares(&xs, &ys, None).ok_or(GraphError::FitRange(r_max))?;
    let c = xs.iter().zip(&ys).map(|(x, y)| (y - fit.slope * x).exp()).fold(0.0, f64::max);
    Ok(SphereFit { delta: model.dimension() as f64 - fit.slope, slope: fit.slope, c })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchoredPoint {
    pub r: u32,
    pub size: usize,
    pub edge_boundary: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchoredEstimate {
    pub points: Vec<AnchoredPoint>,
    pub slope: f64,
    pub d_hat: f64,
    /// `min_n #∂_E W_n / (#W_n)^{(d̂−1)/d̂}`.
    pub min_ratio: f64,
}

/// Anchored dimension readout along `W_n`: the component of `anchor`
/// inside its cluster restricted to `B(anchor, r_n)`. The slope `s` of
/// `log #∂_E W_n` against `log #W_n` gives `d̂ = 1 / (1 − s)`. Edges that
/// leave the window are not part of the configuration and are not counted.
pub fn anchored_dimension_estimate(
    sampler: &Sampler,
    config: &Configuration,
    anchor: Vertex,
    schedule: &[u32],
) -> Result<AnchoredEstimate, IsoError> {
    let window = sampler.window();
    let model = window.model();
    let o = window.index_of(&anchor).ok_or(IsoError::NotInWindow(anchor))?;
    let cluster = clusters(config).class_of(o);
    let verdict = sampler.finiteness_verdict(config, &cluster).verdict;
    if verdict != Verdict::Escaping {
        return Err(IsoError::NotEscaping(verdict));
    }
    let adj = config.adjacency();
    let dist: Vec<u32> =
        window.vertices().iter().map(|v| model.distance(anchor, *v)).collect::<Result<_, _>>()?;
    let mut points: Vec<AnchoredPoint> = Vec::new();
    for &r in schedule {
        let mut seen = vec![false; window.len()];
        seen[o as usize] = true;
        let mut w = vec![o];
        let mut queue = VecDeque::from([o]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i as usize] {
                if !seen[j as usize] && dist[j as usize] <= r {
                    seen[j as usize] = true;
                    w.push(j);
                    queue.push_back(j);
                }
            }
        }
        let eb = edge_boundary(config, &w);
        if eb > 0 && points.last().is_none_or(|p| p.size < w.len()) {
            points.push(AnchoredPoint { r, size: w.len(), edge_boundary: eb });
        }
    }
    if points.len() < 3 {
        return Err(IsoError::TooFewPoints(points.len()));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.size as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.edge_boundary as f64).ln()).collect();
    let slope = least_squares(&xs, &ys, None).ok_or(IsoError::TooFewPoints(points.len()))?.slope;
    let d_hat = if slope < 1.0 { 1.0 / (1.0 - slope) } else { f64::INFINITY };
    let exponent = if d_hat.is_finite() { (d_hat - 1.0) / d_hat } else { 1.0 };
    let min_ratio =
        points.iter().map(|p| p.edge_boundary as f64 / (p.size as f64).powf(exponent)).fold(f64::INFINITY, f64::min);
    Ok(AnchoredEstimate { points, slope, d_hat, min_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::sampler::{Method, Window};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn z2() -> GraphModel {
        GraphModel::lattice(2).unwrap()
    }

    fn square(n: i32) -> Vec<Vertex> {
        (0..n).flat_map(|x| (0..n).map(move |y| Vertex::xy(x, y))).collect()
    }

    #[test]
    fn boundaries() {
        let g = z2();
        assert_eq!(boundary(&g, &[Vertex::ORIGIN]), vec![Vertex::ORIGIN]);
        assert_eq!(boundary(&g, &square(2)).len(), 4);
        let b2 = g.ball(Vertex::ORIGIN, 2).unwrap();
        assert_eq!(boundary(&g, &b2), g.sphere(Vertex::ORIGIN, 2).unwrap());
    }

    #[test]
    fn pair_counts() {
        let g = z2();
        let c = pair_check(&g, &[Vertex::ORIGIN], 1, None).unwrap();
        assert_eq!((c.count, c.varopoulos), (4, 4));
        let b1 = g.ball(Vertex::ORIGIN, 1).unwrap();
        let c = pair_check(&g, &b1, 1, None).unwrap();
        assert_eq!((c.count, c.varopoulos, c.violation), (12, 16, false));
        assert!(pair_check(&g, &b1, 1, Some(2.0)).unwrap().isoperimetric_form.unwrap() > 0.0);
    }

    #[test]
    fn iso_fits() {
        let g = z2();
        assert_eq!(iso_constant_fit(&g, &[vec![Vertex::ORIGIN]]).unwrap().c_iso, 1.0);
        let squares: Vec<Vec<Vertex>> = (2..=10).map(square).collect();
        let f = iso_constant_fit(&g, &squares).unwrap();
        assert_eq!(f.argmin, 0);
        assert!((f.c_iso - 2.0).abs() < 1e-12);
        assert_eq!(iso_constant_fit(&g, &[]), Err(IsoError::Empty));
        let all = connected_sets(6);
        assert_eq!(all.len(), 1 + 2 + 6 + 19 + 63 + 216);
        assert!(iso_constant_fit(&g, &all).unwrap().c_iso > 0.0);
    }

    #[test]
    fn small_sweep() {
        let s = varopoulos_sweep(5, 3);
        assert_eq!(s.sets, 1 + 2 + 6 + 19 + 63);
        assert_eq!(s.violations, 0);
        assert_eq!(s.two_way_mismatches, 0);
        assert!(s.max_ratio <= 1.0);
    }

    #[test]
    fn sphere_exponents() {
        let f = sphere_exponent_fit(&z2(), 20).unwrap();
        assert!((f.delta - 1.0).abs() < 1e-9);
        let f = sphere_exponent_fit(&GraphModel::lattice(3).unwrap(), 20).unwrap();
        assert!((f.delta - 1.0).abs() < 0.1);
    }

    fn full_grid(model: &GraphModel, r_in: u32, r_out: u32) -> (Sampler, Configuration) {
        let w = Arc::new(Window::ball(model, Vertex::ORIGIN, r_in, r_out, r_out / 8).unwrap());
        let k = KernelSpec::power_law(model, 2.0, 0.0).unwrap();
        let s = Sampler::new(w.clone(), &k).unwrap();
        let c = s.sample_configuration(0, 0, Method::Sweep).unwrap();
        let mut edges = Vec::new();
        for i in 0..w.len() as u32 {
            for y in model.neighbors(w.vertex(i)) {
                if let Some(j) = w.index_of(&y) {
                    if i < j {
                        edges.push((i, j));
                    }
                }
            }
        }
        let c = c.with_edges(&edges);
        (s, c)
    }

    #[test]
    fn anchored_on_full_lattices() {
        let z1 = GraphModel::lattice(1).unwrap();
        let (s, c) = full_grid(&z1, 32, 64);
        let e = anchored_dimension_estimate(&s, &c, Vertex::ORIGIN, &[2, 4, 8, 16, 32]).unwrap();
        assert!(e.points.iter().all(|p| p.edge_boundary == 2));
        assert!((e.d_hat - 1.0).abs() < 1e-9);
        let (s, c) = full_grid(&z2(), 16, 32);
        let e = anchored_dimension_estimate(&s, &c, Vertex::ORIGIN, &[2, 4, 8, 16]).unwrap();
        assert!((1.7..=2.3).contains(&e.d_hat), "{}", e.d_hat);
    }

    #[test]
    fn anchored_needs_escaping_anchor() {
        let g = z2();
        let w = Arc::new(Window::ball(&g, Vertex::ORIGIN, 4, 8, 2).unwrap());
        let k = KernelSpec::power_law(&g, 2.0, 0.0).unwrap();
        let s = Sampler::new(w, &k).unwrap();
        let c = s.sample_configuration(0, 0, Method::Sweep).unwrap();
        assert_eq!(anchored_dimension_estimate(&s, &c, Vertex::ORIGIN, &[1, 2, 3]), Err(IsoError::NotEscaping(Verdict::Finite)));
    }

    proptest! {
        #[test]
        fn edge_boundary_two_ways(seed in 0u64..1000, r in 1u32..4) {
            let g = z2();
            let w = Arc::new(Window::ball(&g, Vertex::ORIGIN, 3, 8, 2).unwrap());
            let k = KernelSpec::power_law(&g, 1.5, 1.0).unwrap();
            let s = Sampler::new(w.clone(), &k).unwrap();
            let c = s.sample_configuration(seed, 0, Method::Sweep).unwrap();
            let set: Vec<u32> = (0..w.len() as u32).filter(|&i| w.radius(i) <= r).collect();
            prop_assert_eq!(edge_boundary(&c, &set), edge_boundary_by_pairs(&c, &set));
        }

        #[test]
        fn varopoulos_on_random_sets(cells in proptest::collection::btree_set((-4i32..5, -4i32..5), 1..30), r in 1u32..5) {
            let g = z2();
            let a: Vec<Vertex> = cells.iter().map(|&(x, y)| Vertex::xy(x, y)).collect();
            let c = pair_check(&g, &a, r, None).unwrap();
            prop_assert!(!c.violation);
            prop_assert_eq!(c.count, pair_count_outside_in(&g, &a, r).unwrap());
        }
    }
}
