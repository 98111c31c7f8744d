//! Exhaustive enumeration of lattice animals and closed blocks in Z^2.
//!
//! A closed 1-connected block is determined by its boundary: the boundary
//! of a 4-connected set with 4-connected complement is 8-connected, and the
//! block is recovered as the fill of the boundary. Blocks with boundary
//! size `m` are therefore counted by growing fixed 8-connected animals of
//! size `m` (each once, anchored at its smallest cell) and keeping those
//! whose fill has exactly that boundary. Every translate of the fill that
//! covers the origin is a distinct block, so a valid animal contributes
//! `#fill` blocks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BlockError;
use crate::graph::Vertex;

pub const DEFAULT_ENUMERATION_CAP: usize = 10;

pub type Cell = (i32, i32);

pub const FOUR: [Cell; 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
pub const EIGHT: [Cell; 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

struct Board {
    width: i32,
    cap: i32,
    seen: Vec<bool>,
}

impl Board {
    fn new(cap: usize) -> Board {
        let cap = cap as i32;
        let width = 2 * cap + 3;
        Board { width, cap, seen: vec![false; (width * (cap + 2)) as usize] }
    }

    fn slot(&self, c: Cell) -> Option<usize> {
        let x = c.0 + self.cap + 1;
        if c.1 < 0 || c.1 > self.cap || x < 0 || x >= self.width {
            return None;
        }
        // Cells below the anchor row, or left of it in that row, are never used.
        if c.1 == 0 && c.0 < 0 {
            return None;
        }
        Some((c.1 * self.width + x) as usize)
    }
}

fn grow<A>(
    board: &mut Board,
    cap: usize,
    nbrs: &[Cell],
    animal: &mut Vec<Cell>,
    mut untried: Vec<Cell>,
    acc: &mut A,
    visit: &(impl Fn(&mut A, &[Cell]) + Sync),
) {
    while let Some(c) = untried.pop() {
        step(board, cap, nbrs, animal, c, &untried, acc, visit);
    }
}

#[allow(clippy::too_many_arguments)]
fn step<A>(
    board: &mut Board,
    cap: usize,
    nbrs: &[Cell],
    animal: &mut Vec<Cell>,
    c: Cell,
    untried: &[Cell],
    acc: &mut A,
    visit: &(impl Fn(&mut A, &[Cell]) + Sync),
) {
    animal.push(c);
    visit(acc, animal);
    if animal.len() < cap {
        let mut next = untried.to_vec();
        let mut added = Vec::new();
        for d in nbrs {
            let y = (c.0 + d.0, c.1 + d.1);
            if let Some(s) = board.slot(y) {
                if !board.seen[s] {
                    board.seen[s] = true;
                    added.push(s);
                    next.push(y);
                }
            }
        }
        grow(board, cap, nbrs, animal, next, acc, visit);
        for s in added {
            board.seen[s] = false;
        }
    }
    animal.pop();
}

/// Visits every fixed animal of at most `cap` cells (connected under
/// `nbrs`) exactly once, as a cell list whose first cell is the
/// lexicographically smallest in (row, column) order and sits at the
/// origin. Work is split by the first added cell; the returned
/// accumulators come in a fixed order independent of scheduling.
pub fn animals<A: Send>(
    cap: usize,
    nbrs: &[Cell],
    init: impl Fn() -> A + Sync,
    visit: impl Fn(&mut A, &[Cell]) + Sync,
) -> Vec<A> {
    if cap == 0 {
        return Vec::new();
    }
    let root_board = Board::new(cap);
    let mut first: Vec<Cell> = nbrs.iter().copied().filter(|c| root_board.slot(*c).is_some()).collect();
    first.sort_unstable_by_key(|c| (c.1, c.0));
    // Branch i adds first[i] and forbids first[i+1..], matching a
    // sequential run that pops from the back.
    let branches: Vec<usize> = (0..=first.len()).collect();
    branches
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            if b == first.len() {
                visit(&mut acc, &[(0, 0)]);
                return acc;
            }
            let mut board = Board::new(cap);
            let origin = board.slot((0, 0)).expect("origin slot");
            board.seen[origin] = true;
            for c in &first {
                let s = board.slot(*c).expect("first ring slot");
                board.seen[s] = true;
            }
            step(&mut board, cap, nbrs, &mut vec![(0, 0)], first[b], &first[..b], &mut acc, &visit);
            acc
        })
        .collect()
}

/// Fixed polyomino counts `n(1..=cap)`.
pub fn polyomino_counts(cap: usize) -> Vec<u64> {
    sum_counts(cap, animals(cap, &FOUR, || vec![0u64; cap + 1], |acc, a| acc[a.len()] += 1))
}

fn sum_counts(cap: usize, parts: Vec<Vec<u64>>) -> Vec<u64> {
    let mut out = vec![0u64; cap + 1];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out.remove(0);
    out
}

/// Fill of a finite cell set: the set plus every cell it cuts off from
/// infinity (4-connectivity).
pub fn fill(cells: &[Cell]) -> Vec<Cell> {
    let (x0, x1, y0, y1) = bbox(cells);
    let (w, h) = ((x1 - x0 + 3) as usize, (y1 - y0 + 3) as usize);
    let idx = |c: Cell| (c.1 - y0 + 1) as usize * w + (c.0 - x0 + 1) as usize;
    let mut state = vec![0u8; w * h];
    for &c in cells {
        state[idx(c)] = 1;
    }
    let mut stack = vec![0usize];
    state[0] = 2;
    while let Some(s) = stack.pop() {
        let (x, y) = (s % w, s / w);
        let mut push = |t: usize| {
            if state[t] == 0 {
                state[t] = 2;
                stack.push(t);
            }
        };
        if x > 0 {
            push(s - 1);
        }
        if x + 1 < w {
            push(s + 1);
        }
        if y > 0 {
            push(s - w);
        }
        if y + 1 < h {
            push(s + w);
        }
    }
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if state[idx((x, y))] != 2 {
                out.push((x, y));
            }
        }
    }
    out
}

fn bbox(cells: &[Cell]) -> (i32, i32, i32, i32) {
    let mut b = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
    for &(x, y) in cells {
        b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
    }
    b
}

/// Cells of `a` with a 4-neighbour outside `a`.
pub fn cell_boundary(a: &[Cell]) -> Vec<Cell> {
    let set: std::collections::HashSet<Cell> = a.iter().copied().collect();
    let mut out: Vec<Cell> =
        a.iter().copied().filter(|&(x, y)| FOUR.iter().any(|d| !set.contains(&(x + d.0, y + d.1)))).collect();
    out.sort_unstable();
    out
}

pub fn is_connected(cells: &[Cell], nbrs: &[Cell]) -> bool {
    let set: std::collections::HashSet<Cell> = cells.iter().copied().collect();
    let Some(&start) = cells.first() else { return true };
    let mut seen = std::collections::HashSet::from([start]);
    let mut stack = vec![start];
    while let Some((x, y)) = stack.pop() {
        for d in nbrs {
            let c = (x + d.0, y + d.1);
            if set.contains(&c) && seen.insert(c) {
                stack.push(c);
            }
        }
    }
    seen.len() == set.len()
}

/// A boundary candidate is valid when its fill is 4-connected and has
/// exactly the candidate as boundary. Returns the fill in that case.
fn block_from_boundary(p: &[Cell]) -> Option<Vec<Cell>> {
    let f = fill(p);
    if !is_connected(&f, &FOUR) {
        return None;
    }
    let mut pb = p.to_vec();
    pb.sort_unstable();
    (cell_boundary(&f) == pb).then_some(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeierlsRow {
    pub m: usize,
    pub count: u64,
    pub log_count_over_m: f64,
}

/// Number of closed 1-connected blocks containing the origin with boundary
/// size `m`, for `m = 1..=cap`.
pub fn block_counts(cap: usize) -> Result<Vec<PeierlsRow>, BlockError> {
    let counts = sum_counts(
        cap,
        animals(
            cap,
            &EIGHT,
            || vec![0u64; cap + 1],
            |acc, p| {
                if let Some(f) = block_from_boundary(p) {
                    acc[p.len()] += f.len() as u64;
                }
            },
        ),
    );
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| PeierlsRow { m: i + 1, count, log_count_over_m: (count as f64).ln() / (i + 1) as f64 })
        .collect())
}

/// All closed 1-connected blocks `A ∋ x` with `#∂A = m`, sorted.
pub fn enumerate_blocks(x: Vertex, m: usize, cap: usize) -> Result<Vec<Vec<Vertex>>, BlockError> {
    if m == 0 || m > cap {
        return Err(BlockError::Cap { m, cap });
    }
    let parts = animals(m, &EIGHT, Vec::new, |acc: &mut Vec<Vec<Vertex>>, p| {
        if p.len() != m {
            return;
        }
        if let Some(f) = block_from_boundary(p) {
            for &(cx, cy) in &f {
                let mut b: Vec<Vertex> = f.iter().map(|&(u, v)| Vertex::xy(x.0[0] + u - cx, x.0[1] + v - cy)).collect();
                b.sort_unstable();
                acc.push(b);
            }
        }
    });
    let mut out: Vec<Vec<Vertex>> = parts.into_iter().flatten().collect();
    out.sort();
    Ok(out)
}

/// Coarse-connectivity audit over every closed block with boundary size
/// at most `cap` (one per translation class): the largest minimal
/// connectivity radius (L1 metric) of a boundary, and of the complement of
/// the block inside its bounding box enlarged by `margin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseAudit {
    pub blocks: u64,
    pub max_boundary_radius: u32,
    pub max_complement_radius: u32,
    pub boundary_failures: u64,
    pub complement_failures: u64,
}

impl CoarseAudit {
    fn empty() -> CoarseAudit {
        CoarseAudit { blocks: 0, max_boundary_radius: 0, max_complement_radius: 0, boundary_failures: 0, complement_failures: 0 }
    }

    fn merge(self, b: CoarseAudit) -> CoarseAudit {
        CoarseAudit {
            blocks: self.blocks + b.blocks,
            max_boundary_radius: self.max_boundary_radius.max(b.max_boundary_radius),
            max_complement_radius: self.max_complement_radius.max(b.max_complement_radius),
            boundary_failures: self.boundary_failures + b.boundary_failures,
            complement_failures: self.complement_failures + b.complement_failures,
        }
    }
}

pub fn coarse_connectivity_audit(cap: usize, margin: i32, r_bound: u32) -> CoarseAudit {
    let parts = animals(cap, &EIGHT, CoarseAudit::empty, |acc, p| {
        let Some(f) = block_from_boundary(p) else { return };
        acc.blocks += 1;
        let rb = min_l1_radius(p);
        let (x0, x1, y0, y1) = bbox(&f);
        let set: std::collections::HashSet<Cell> = f.iter().copied().collect();
        let mut comp = Vec::new();
        for y in y0 - margin..=y1 + margin {
            for x in x0 - margin..=x1 + margin {
                if !set.contains(&(x, y)) {
                    comp.push((x, y));
                }
            }
        }
        let rc = min_l1_radius(&comp);
        acc.max_boundary_radius = acc.max_boundary_radius.max(rb);
        acc.max_complement_radius = acc.max_complement_radius.max(rc);
        acc.boundary_failures += (rb > r_bound) as u64;
        acc.complement_failures += (rc > r_bound) as u64;
    });
    parts.into_iter().fold(CoarseAudit::empty(), CoarseAudit::merge)
}

/// Smallest `R ≥ 1` for which the cells are connected under L1 distance
/// `≤ R`; increments `R` until connected.
pub fn min_l1_radius(cells: &[Cell]) -> u32 {
    let mut r = 1;
    loop {
        let nbrs: Vec<Cell> = (-(r as i32)..=r as i32)
            .flat_map(|dx| (-(r as i32)..=r as i32).map(move |dy| (dx, dy)))
            .filter(|&(dx, dy)| (dx, dy) != (0, 0) && dx.unsigned_abs() + dy.unsigned_abs() <= r)
            .collect();
        if is_connected(cells, &nbrs) {
            return r;
        }
        r += 1;
    }
}
