//! 1-connected components, closures, block decompositions, block graphs and
//! isolation.

pub mod enumerate;
pub mod ftree;

use std::collections::{BTreeSet, HashSet, VecDeque};

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, GraphModel, Vertex};
use rayon::prelude::*;

use crate::cluster::clusters;
use crate::sampler::{Configuration, Method, Sampler, Verdict, Window};

#[derive(Debug, Error, PartialEq)]
pub enum BlockError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("closure of a set at {0} reaches the guard annulus or the window rim")]
    ClosureHorizon(Vertex),
    #[error("{0} is not a window vertex")]
    NotInWindow(Vertex),
    #[error("block enumeration is only implemented on Z^2")]
    Unsupported,
    #[error("boundary size {m} exceeds the enumeration cap {cap}")]
    Cap { m: usize, cap: usize },
    #[error("f-tree audit needs b <= {cap}, got {b}")]
    AuditCap { b: usize, cap: usize },
}

fn sorted(mut v: Vec<Vertex>) -> Vec<Vertex> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Inner vertex boundary: members with a nearest neighbour outside the set.
pub fn boundary(model: &GraphModel, a: &[Vertex]) -> Vec<Vertex> {
    let set: HashSet<Vertex> = a.iter().copied().collect();
    sorted(a.iter().copied().filter(|x| model.neighbors(*x).iter().any(|y| !set.contains(y))).collect())
}

/// Splits a finite set into its nearest-neighbour components, each sorted,
/// ordered by smallest vertex.
pub fn one_connected_components(model: &GraphModel, s: &[Vertex]) -> Vec<Vec<Vertex>> {
    let vs = sorted(s.to_vec());
    let set: HashSet<Vertex> = vs.iter().copied().collect();
    let mut seen: HashSet<Vertex> = HashSet::new();
    let mut out = Vec::new();
    for &start in &vs {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for y in model.neighbors(x) {
                if set.contains(&y) && seen.insert(y) {
                    comp.push(y);
                    queue.push_back(y);
                }
            }
        }
        out.push(sorted(comp));
    }
    out
}

/// `Ā`: `A` plus every window vertex that cannot reach the window rim
/// without crossing `A`, taking the outside of the window as connected.
/// Fails if `A` or its closure touches the guard annulus, where nothing
/// certifies that a cut-off region is finite.
pub fn closure(window: &Window, a: &[Vertex]) -> Result<Vec<Vertex>, BlockError> {
    let n = window.len();
    let mut in_a = vec![false; n];
    for v in a {
        let i = window.index_of(v).ok_or(BlockError::NotInWindow(*v))?;
        if window.in_guard(i) {
            return Err(BlockError::ClosureHorizon(*v));
        }
        in_a[i as usize] = true;
    }
    let model = window.model();
    let mut reached = vec![false; n];
    let mut queue = VecDeque::new();
    for i in window.rim() {
        if !in_a[i as usize] {
            reached[i as usize] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for y in model.neighbors(window.vertex(i)) {
            if let Some(j) = window.index_of(&y) {
                if !in_a[j as usize] && !reached[j as usize] {
                    reached[j as usize] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..n as u32 {
        if !reached[i as usize] {
            if window.in_guard(i) {
                return Err(BlockError::ClosureHorizon(window.vertex(i)));
            }
            out.push(window.vertex(i));
        }
    }
    Ok(out)
}

/// Graph distance between two finite sets.
pub fn set_distance(model: &GraphModel, a: &[Vertex], b: &[Vertex]) -> Result<u32, GraphError> {
    let mut best = u32::MAX;
    for x in a {
        for y in b {
            best = best.min(model.distance(*x, *y)?);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub vertices: Vec<Vertex>,
    pub boundary: Vec<Vertex>,
    pub closed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDecomposition {
    /// Blocks, the anchor's first and the rest ordered by smallest vertex.
    pub blocks: Vec<Block>,
}

impl BlockDecomposition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn union(&self) -> Vec<Vertex> {
        sorted(self.blocks.iter().flat_map(|b| b.vertices.iter().copied()).collect())
    }

    /// Sizes `#∂B_i` in block order.
    pub fn boundary_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.boundary.len()).collect()
    }

    fn block_of(&self, window: &Window) -> Vec<Option<usize>> {
        let mut out = vec![None; window.len()];
        for (bi, b) in self.blocks.iter().enumerate() {
            for v in &b.vertices {
                if let Some(i) = window.index_of(v) {
                    out[i as usize] = Some(bi);
                }
            }
        }
        out
    }
}

/// Block decomposition of a finite cluster: close the 1-connected
/// components, and merge any two closures that are nested or within
/// distance 1 until the family is pairwise 1-disconnected.
pub fn block_decomposition(window: &Window, k: &[Vertex], anchor: Vertex) -> Result<BlockDecomposition, BlockError> {
    let model = window.model();
    let mut family: Vec<Vec<Vertex>> = one_connected_components(model, k)
        .iter()
        .map(|c| closure(window, c))
        .collect::<Result<_, _>>()?;
    loop {
        let mut merged = None;
        'scan: for i in 0..family.len() {
            for j in i + 1..family.len() {
                if set_distance(model, &family[i], &family[j])? <= 1 {
                    merged = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((i, j)) = merged else { break };
        let b = family.swap_remove(j);
        let a = family.swap_remove(i);
        let joined = sorted(a.into_iter().chain(b).collect());
        family.push(closure(window, &joined)?);
    }
    family.sort_by(|a, b| a[0].cmp(&b[0]));
    if let Some(pos) = family.iter().position(|b| b.binary_search(&anchor).is_ok()) {
        let first = family.remove(pos);
        family.insert(0, first);
    }
    let blocks = family
        .into_iter()
        .map(|v| {
            let closed = closure(window, &v).map(|c| c == v).unwrap_or(false);
            Block { boundary: boundary(model, &v), vertices: v, closed }
        })
        .collect();
    Ok(BlockDecomposition { blocks })
}

/// Contracted block graph `H` and its weighted version `H*`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGraph {
    pub b: usize,
    pub h: Vec<(usize, usize)>,
    pub h_star: Vec<(usize, usize, u32)>,
}

impl BlockGraph {
    pub fn is_connected(&self) -> bool {
        if self.b <= 1 {
            return true;
        }
        let mut uf = UnionFind::<usize>::new(self.b);
        for &(i, j) in &self.h {
            uf.union(i, j);
        }
        (1..self.b).all(|i| uf.equiv(0, i))
    }
}

pub fn block_graph(window: &Window, config: &Configuration, dec: &BlockDecomposition) -> BlockGraph {
    let owner = dec.block_of(window);
    let model = window.model();
    let mut h = BTreeSet::new();
    let mut h_star = BTreeSet::new();
    for &(i, j) in &config.edges {
        if let (Some(a), Some(b)) = (owner[i as usize], owner[j as usize]) {
            if a != b {
                let (a, b) = (a.min(b), a.max(b));
                h.insert((a, b));
                let d = model.distance(window.vertex(i), window.vertex(j)).expect("window pair");
                h_star.insert((a, b, d));
            }
        }
    }
    BlockGraph { b: dec.len(), h: h.into_iter().collect(), h_star: h_star.into_iter().collect() }
}

/// No open edge joins `∪_{i ∈ I} ∂B_i` to a window vertex outside the
/// blocks, and no boundary vertex has its external edge open.
pub fn is_isolated(window: &Window, config: &Configuration, dec: &BlockDecomposition, subset: &[usize]) -> bool {
    let owner = dec.block_of(window);
    let mut on_boundary = vec![false; window.len()];
    for &bi in subset {
        for v in &dec.blocks[bi].boundary {
            if let Some(i) = window.index_of(v) {
                on_boundary[i as usize] = true;
                if config.escape_flag(i) {
                    return false;
                }
            }
        }
    }
    config.edges.iter().all(|&(i, j)| {
        let cut = |a: u32, b: u32| on_boundary[a as usize] && owner[b as usize].is_none();
        !(cut(i, j) || cut(j, i))
    })
}

/// Smallest `R ≥ 1` for which `S` is connected under `d(x, y) ≤ R`.
pub fn minimal_r_connectivity(model: &GraphModel, s: &[Vertex]) -> Result<u32, GraphError> {
    let vs = sorted(s.to_vec());
    let n = vs.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((model.distance(vs[i], vs[j])?, i, j));
        }
    }
    let mut radii: Vec<u32> = pairs.iter().map(|p| p.0).collect();
    radii.sort_unstable();
    radii.dedup();
    let connected = |r: u32| {
        let mut uf = UnionFind::<usize>::new(n);
        for &(d, i, j) in &pairs {
            if d <= r {
                uf.union(i, j);
            }
        }
        (1..n).all(|i| uf.equiv(0, i))
    };
    let (mut lo, mut hi) = (0usize, radii.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if connected(radii[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(radii.get(lo).copied().unwrap_or(1).max(1))
}

/// Whether `S` is `R`-connected, scanning the ball offsets of radius `R`
/// around each vertex (linear in `#S` for fixed `R`).
pub fn is_r_connected(model: &GraphModel, s: &[Vertex], r: u32) -> Result<bool, GraphError> {
    let vs = sorted(s.to_vec());
    if vs.len() <= 1 {
        return Ok(true);
    }
    let index: std::collections::HashMap<Vertex, usize> = vs.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let offsets = model.ball(Vertex::ORIGIN, r)?;
    let mut uf = UnionFind::<usize>::new(vs.len());
    for (i, x) in vs.iter().enumerate() {
        for z in &offsets {
            if let Some(&j) = index.get(&model.translate(*x, *z)) {
                uf.union(i, j);
            }
        }
    }
    Ok((1..vs.len()).all(|i| uf.equiv(0, i)))
}

/// Outcome of checking one sampled finite cluster against the block
/// decomposition invariants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionAudit {
    pub blocks: usize,
    pub cluster_size: usize,
    pub covers_cluster: bool,
    pub pairwise_separated: bool,
    pub all_closed: bool,
    pub h_connected: bool,
    pub isolated: bool,
    pub boundary_nesting: bool,
    pub max_boundary_r: u32,
    pub complement_r_connected: bool,
    pub idempotent: bool,
    pub total_boundary: usize,
}

impl DecompositionAudit {
    pub fn passed(&self, r_bound: u32) -> bool {
        self.covers_cluster
            && self.pairwise_separated
            && self.all_closed
            && self.h_connected
            && self.isolated
            && self.boundary_nesting
            && self.max_boundary_r <= r_bound
            && self.complement_r_connected
            && self.idempotent
    }
}

/// Decomposes a cluster of `config` (window indices) and checks: blocks
/// cover it and are pairwise at distance ≥ 2, each block is closed, `H` is
/// connected, the decomposition is isolated, `Σ#∂B_i ≤ Σ#∂(components)`,
/// every block boundary is `r_bound`-connected, the window minus the blocks
/// is `r_bound`-connected, and decomposing again changes nothing.
pub fn audit_decomposition(
    window: &Window,
    config: &Configuration,
    cluster: &[u32],
    anchor: Vertex,
    r_bound: u32,
) -> Result<DecompositionAudit, BlockError> {
    let model = window.model();
    let k: Vec<Vertex> = cluster.iter().map(|&i| window.vertex(i)).collect();
    let dec = block_decomposition(window, &k, anchor)?;
    let union = dec.union();
    let union_set: HashSet<Vertex> = union.iter().copied().collect();
    let mut owners = vec![0usize; k.len()];
    for (bi, b) in dec.blocks.iter().enumerate() {
        let set: HashSet<&Vertex> = b.vertices.iter().collect();
        for (ki, v) in k.iter().enumerate() {
            if set.contains(v) {
                owners[ki] += 1;
            }
        }
        let _ = bi;
    }
    let covers_cluster = owners.iter().all(|&c| c == 1);
    let mut pairwise_separated = true;
    for i in 0..dec.len() {
        for j in i + 1..dec.len() {
            if set_distance(model, &dec.blocks[i].vertices, &dec.blocks[j].vertices)? < 2 {
                pairwise_separated = false;
            }
        }
    }
    let all_closed = dec.blocks.iter().all(|b| b.closed);
    let h_connected = block_graph(window, config, &dec).is_connected();
    let all: Vec<usize> = (0..dec.len()).collect();
    let isolated = is_isolated(window, config, &dec, &all);
    let comp_boundary: usize = one_connected_components(model, &k).iter().map(|c| boundary(model, c).len()).sum();
    let total_boundary: usize = dec.boundary_sizes().iter().sum();
    let mut max_boundary_r = 1;
    for b in &dec.blocks {
        max_boundary_r = max_boundary_r.max(minimal_r_connectivity(model, &b.boundary)?);
    }
    let complement: Vec<Vertex> = window.vertices().iter().copied().filter(|v| !union_set.contains(v)).collect();
    let complement_r_connected = is_r_connected(model, &complement, r_bound)?;
    let again = block_decomposition(window, &union, anchor)?;
    Ok(DecompositionAudit {
        blocks: dec.len(),
        cluster_size: k.len(),
        covers_cluster,
        pairwise_separated,
        all_closed,
        h_connected,
        isolated,
        boundary_nesting: total_boundary <= comp_boundary,
        max_boundary_r,
        complement_r_connected,
        idempotent: again == dec,
        total_boundary,
    })
}

/// Decomposition audit over sampled configurations: every cluster whose
/// verdict is FINITE is decomposed (anchored at its smallest vertex) and
/// checked with [`audit_decomposition`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledAudit {
    pub samples: u64,
    pub origin_finite: u64,
    pub finite_clusters: u64,
    pub failures: u64,
    pub max_blocks: usize,
    pub max_boundary_r: u32,
    pub first_failure: Option<DecompositionAudit>,
}

pub fn sampled_decomposition_audit(
    sampler: &Sampler,
    trials: u64,
    seed: u64,
    workers: usize,
    r_bound: u32,
) -> Result<SampledAudit, BlockError> {
    let window = sampler.window();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("worker pool");
    let per: Vec<Result<(bool, Vec<DecompositionAudit>), BlockError>> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let config = sampler
                    .sample_configuration(seed, t, Method::ShellSkip)
                    .map_err(|_| BlockError::NotInWindow(window.center()))?;
                let mut audits = Vec::new();
                let mut origin_finite = false;
                for class in clusters(&config).classes() {
                    if sampler.finiteness_verdict(&config, &class).verdict != Verdict::Finite {
                        continue;
                    }
                    origin_finite |= class.contains(&window.center_index());
                    let anchor = window.vertex(class[0]);
                    audits.push(audit_decomposition(window, &config, &class, anchor, r_bound)?);
                }
                Ok((origin_finite, audits))
            })
            .collect()
    });
    let mut out = SampledAudit {
        samples: trials,
        origin_finite: 0,
        finite_clusters: 0,
        failures: 0,
        max_blocks: 0,
        max_boundary_r: 0,
        first_failure: None,
    };
    for r in per {
        let (of, audits) = r?;
        out.origin_finite += of as u64;
        for a in audits {
            out.finite_clusters += 1;
            out.max_blocks = out.max_blocks.max(a.blocks);
            out.max_boundary_r = out.max_boundary_r.max(a.max_boundary_r);
            if !a.passed(r_bound) {
                out.failures += 1;
                out.first_failure.get_or_insert(a);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::sampler::{Method, Sampler};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn z2() -> GraphModel {
        GraphModel::lattice(2).unwrap()
    }

    fn pts(c: &[(i32, i32)]) -> Vec<Vertex> {
        sorted(c.iter().map(|&(x, y)| Vertex::xy(x, y)).collect())
    }

    fn ring() -> Vec<Vertex> {
        pts(&[(0, 0), (1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (1, 2), (2, 2)])
    }

    fn window() -> Window {
        Window::ball(&z2(), Vertex::ORIGIN, 8, 16, 4).unwrap()
    }

    fn empty_config(w: &Window) -> Configuration {
        let k = KernelSpec::power_law(w.model(), 2.0, 0.0).unwrap();
        Sampler::new(Arc::new(w.clone()), &k).unwrap().sample_configuration(0, 0, Method::Sweep).unwrap()
    }

    #[test]
    fn components() {
        let g = z2();
        assert_eq!(one_connected_components(&g, &[Vertex::ORIGIN]), vec![vec![Vertex::ORIGIN]]);
        assert_eq!(
            one_connected_components(&g, &pts(&[(0, 0), (0, 1), (3, 3)])),
            vec![pts(&[(0, 0), (0, 1)]), pts(&[(3, 3)])]
        );
        assert!(one_connected_components(&g, &[]).is_empty());
    }

    #[test]
    fn closures() {
        let w = window();
        let sq = pts(&[(0, 0), (1, 0), (0, 1), (1, 1)]);
        assert_eq!(closure(&w, &sq).unwrap(), sq);
        let mut filled = ring();
        filled.push(Vertex::xy(1, 1));
        assert_eq!(closure(&w, &ring()).unwrap(), sorted(filled));
        assert!(matches!(closure(&w, &[Vertex::xy(14, 0)]), Err(BlockError::ClosureHorizon(_))));
    }

    #[test]
    fn decompositions() {
        let w = window();
        let d = block_decomposition(&w, &pts(&[(0, 0), (0, 3)]), Vertex::ORIGIN).unwrap();
        assert_eq!(d.blocks.iter().map(|b| b.vertices.clone()).collect::<Vec<_>>(), vec![pts(&[(0, 0)]), pts(&[(0, 3)])]);
        let mut k = ring();
        k.push(Vertex::xy(5, 5));
        let d = block_decomposition(&w, &k, Vertex::ORIGIN).unwrap();
        let mut filled = ring();
        filled.push(Vertex::xy(1, 1));
        assert_eq!(d.blocks[0].vertices, sorted(filled));
        assert_eq!(d.blocks[1].vertices, pts(&[(5, 5)]));
        assert!(d.blocks.iter().all(|b| b.closed));
        // A point inside the ring is absorbed by the ring's closure.
        let mut k = ring();
        k.push(Vertex::xy(1, 1));
        k.push(Vertex::xy(6, 0));
        let d = block_decomposition(&w, &k, Vertex::xy(6, 0)).unwrap();
        assert_eq!(d.blocks[0].vertices, pts(&[(6, 0)]));
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn block_graphs() {
        let w = window();
        let c = empty_config(&w);
        let a = w.index_of(&Vertex::ORIGIN).unwrap();
        let b = w.index_of(&Vertex::xy(0, 3)).unwrap();
        let c1 = c.with_edges(&[(a, b)]);
        let d = block_decomposition(&w, &pts(&[(0, 0), (0, 3)]), Vertex::ORIGIN).unwrap();
        let g = block_graph(&w, &c1, &d);
        assert_eq!(g.h, vec![(0, 1)]);
        assert_eq!(g.h_star, vec![(0, 1, 3)]);
        assert!(g.is_connected());
        let g = block_graph(&w, &c, &d);
        assert!(g.h.is_empty() && !g.is_connected());
        let d = block_decomposition(&w, &pts(&[(0, 0), (1, 0), (0, 4)]), Vertex::ORIGIN).unwrap();
        let x = w.index_of(&Vertex::xy(1, 0)).unwrap();
        let y = w.index_of(&Vertex::xy(0, 4)).unwrap();
        let g = block_graph(&w, &c.with_edges(&[(a, y), (x, y)]), &d);
        assert_eq!(g.h, vec![(0, 1)]);
        assert_eq!(g.h_star, vec![(0, 1, 4), (0, 1, 5)]);
    }

    #[test]
    fn multigraph_distances_three_and_four() {
        let w = window();
        let c = empty_config(&w);
        let d = block_decomposition(&w, &pts(&[(0, 0), (0, 1), (0, 4)]), Vertex::ORIGIN).unwrap();
        let i = |x, y| w.index_of(&Vertex::xy(x, y)).unwrap();
        let g = block_graph(&w, &c.with_edges(&[(i(0, 1), i(0, 4)), (i(0, 0), i(0, 4))]), &d);
        assert_eq!(g.h_star, vec![(0, 1, 3), (0, 1, 4)]);
        assert_eq!(g.h, vec![(0, 1)]);
    }

    #[test]
    fn isolation() {
        let w = window();
        let c = empty_config(&w);
        let d = block_decomposition(&w, &pts(&[(0, 0), (0, 3)]), Vertex::ORIGIN).unwrap();
        assert!(is_isolated(&w, &c, &d, &[0, 1]));
        let o = w.index_of(&Vertex::ORIGIN).unwrap();
        let out = w.index_of(&Vertex::xy(2, 2)).unwrap();
        let c2 = c.with_edges(&[(o, out)]);
        assert!(!is_isolated(&w, &c2, &d, &[0]));
        assert!(is_isolated(&w, &c2, &d, &[1]));
        let mut c3 = c.clone();
        c3.external = vec![o];
        assert!(!is_isolated(&w, &c3, &d, &[0]));
    }

    #[test]
    fn r_connectivity() {
        let g = z2();
        assert_eq!(minimal_r_connectivity(&g, &pts(&[(0, 0), (0, 1), (1, 1)])).unwrap(), 1);
        assert_eq!(minimal_r_connectivity(&g, &[Vertex::ORIGIN]).unwrap(), 1);
        let s2 = g.sphere(Vertex::ORIGIN, 2).unwrap();
        assert_eq!(minimal_r_connectivity(&g, &s2).unwrap(), 2);
        assert!(is_r_connected(&g, &s2, 2).unwrap());
        assert!(!is_r_connected(&g, &s2, 1).unwrap());
        assert_eq!(minimal_r_connectivity(&g, &pts(&[(0, 0), (7, 0)])).unwrap(), 7);
    }

    fn random_connected(seed: u64, size: usize) -> Vec<Vertex> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = z2();
        let mut set = vec![Vertex::ORIGIN];
        while set.len() < size {
            let x = set[rng.random_range(0..set.len())];
            let nb = g.neighbors(x);
            let y = nb[rng.random_range(0..nb.len())];
            if !set.contains(&y) {
                set.push(y);
            }
        }
        sorted(set)
    }

    #[test]
    fn closure_boundary_nesting_random() {
        let w = window();
        let g = z2();
        for seed in 0..10_000u64 {
            let a = random_connected(seed, 1 + (seed % 15) as usize);
            let c = closure(&w, &a).unwrap();
            let ba: HashSet<Vertex> = boundary(&g, &a).into_iter().collect();
            assert!(boundary(&g, &c).iter().all(|x| ba.contains(x)), "{a:?}");
            assert_eq!(closure(&w, &c).unwrap(), c);
        }
    }

    proptest! {
        #[test]
        fn components_match_equivalence_closure(cells in proptest::collection::btree_set((-3i32..4, -3i32..4), 12)) {
            let g = z2();
            let s: Vec<Vertex> = cells.iter().map(|&(x, y)| Vertex::xy(x, y)).collect();
            let comps = one_connected_components(&g, &s);
            // Oracle: iterate "same class" to a fixed point.
            let n = s.len();
            let mut rel = vec![vec![false; n]; n];
            for i in 0..n {
                for j in 0..n {
                    rel[i][j] = i == j || g.distance(s[i], s[j]).unwrap() == 1;
                }
            }
            loop {
                let mut changed = false;
                for i in 0..n { for j in 0..n { for l in 0..n {
                    if rel[i][l] && rel[l][j] && !rel[i][j] { rel[i][j] = true; changed = true; }
                }}}
                if !changed { break; }
            }
            let comp_of = |v: &Vertex| comps.iter().position(|c| c.contains(v)).unwrap();
            for i in 0..n { for j in 0..n {
                prop_assert_eq!(rel[i][j], comp_of(&s[i]) == comp_of(&s[j]));
            }}
            prop_assert_eq!(comps.iter().map(|c| c.len()).sum::<usize>(), n);
        }

        #[test]
        fn decomposition_canonical_and_idempotent(
            cells in proptest::collection::vec((-5i32..6, -5i32..6), 1..14),
            rot in 0usize..14,
        ) {
            let w = window();
            let k: Vec<Vertex> = cells.iter().map(|&(x, y)| Vertex::xy(x, y)).collect();
            let anchor = k[0];
            let d = block_decomposition(&w, &k, anchor).unwrap();
            let mut shuffled = k.clone();
            shuffled.rotate_left(rot % k.len());
            shuffled.reverse();
            prop_assert_eq!(&block_decomposition(&w, &shuffled, anchor).unwrap(), &d);
            prop_assert_eq!(&block_decomposition(&w, &d.union(), anchor).unwrap(), &d);
            prop_assert!(d.blocks[0].vertices.contains(&anchor));
            for i in 0..d.len() {
                for j in i + 1..d.len() {
                    prop_assert!(set_distance(w.model(), &d.blocks[i].vertices, &d.blocks[j].vertices).unwrap() >= 2);
                }
            }
        }
    }

    #[test]
    fn sampled_audit_at_moderate_beta() {
        let g = z2();
        let w = Arc::new(Window::ball(&g, Vertex::ORIGIN, 8, 16, 4).unwrap());
        let k = KernelSpec::power_law(&g, 1.75, 0.3).unwrap();
        let s = Sampler::new(w, &k).unwrap();
        let a = sampled_decomposition_audit(&s, 200, 9, 2, 2).unwrap();
        assert!(a.finite_clusters > 1000, "{a:?}");
        assert!(a.max_blocks > 1);
        assert_eq!(a.failures, 0, "{:?}", a.first_failure);
    }
}
