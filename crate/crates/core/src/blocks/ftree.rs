//! Forward-degree vectors, f-trees and the rooted relabelling audit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BlockError;

pub const AUDIT_CAP: usize = 8;

type Edges = Vec<(usize, usize)>;
/// A forward-degree vector with the relabelling that realizes it.
type LabelledVector = (Vec<usize>, Vec<usize>);

/// All `f ∈ N^b` with `Σ f_i = b − 1` and `Σ_{i ≤ j} f_i ≥ j` for every
/// `j ≤ b − 1`, in lexicographic order.
pub fn forward_degree_vectors(b: usize) -> Vec<Vec<usize>> {
    fn rec(b: usize, prefix: &mut Vec<usize>, sum: usize, out: &mut Vec<Vec<usize>>) {
        let j = prefix.len();
        if j == b {
            if sum == b - 1 {
                out.push(prefix.clone());
            }
            return;
        }
        for v in 0..=(b - 1 - sum) {
            if sum + v >= j {
                prefix.push(v);
                rec(b, prefix, sum + v, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    if b >= 1 {
        rec(b, &mut Vec::new(), 0, &mut out);
    }
    out
}

/// Whether the label-assignment rule yields a tree: vertex `j` receives
/// the children `s_j + 1, …, s_j + f_j` with `s_j = Σ_{i<j} f_i`, which
/// requires every such label to exceed `j`.
pub fn realizable(f: &[usize]) -> bool {
    let b = f.len();
    if b == 0 || f.iter().sum::<usize>() != b - 1 {
        return false;
    }
    let mut s = 0;
    for (j, &fj) in f.iter().enumerate() {
        if fj > 0 && s < j {
            return false;
        }
        s += fj;
    }
    true
}

pub fn realizable_f_trees(b: usize) -> Vec<Vec<usize>> {
    forward_degree_vectors(b).into_iter().filter(|f| realizable(f)).collect()
}

/// Edges `(parent, child)` of the f-tree, or `None` when `f` is not realizable.
pub fn f_tree(f: &[usize]) -> Option<Vec<(usize, usize)>> {
    if !realizable(f) {
        return None;
    }
    let mut edges = Vec::new();
    let mut s = 0;
    for (j, &fj) in f.iter().enumerate() {
        edges.extend((s + 1..=s + fj).map(|c| (j, c)));
        s += fj;
    }
    Some(edges)
}

fn adjacency(b: usize, h: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; b]; b];
    for &(i, j) in h {
        adj[i][j] = true;
        adj[j][i] = true;
    }
    adj
}

/// Whether the labelled graph on `0..b` contains the f-tree of `f`.
pub fn f_connected(b: usize, h: &[(usize, usize)], f: &[usize]) -> bool {
    if f.len() != b {
        return false;
    }
    let adj = adjacency(b, h);
    f_tree(f).is_some_and(|t| t.iter().all(|&(i, j)| adj[i][j]))
}

pub fn is_connected(b: usize, h: &[(usize, usize)]) -> bool {
    if b == 0 {
        return true;
    }
    let adj = adjacency(b, h);
    let mut seen = vec![false; b];
    seen[0] = true;
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        for j in 0..b {
            if adj[i][j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// All connected labelled graphs on `b` vertices, as sorted edge lists.
pub fn connected_graphs(b: usize) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..b).flat_map(|i| (i + 1..b).map(move |j| (i, j))).collect();
    (0u64..1 << pairs.len())
        .map(|mask| pairs.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, p)| *p).collect::<Vec<_>>())
        .filter(|h| is_connected(b, h))
        .collect()
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else { return false };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// One rooted spanning tree of `H` (original labels) together with the
/// `(f, σ)` pairs whose relabelled graph realizes it as an f-tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeClass {
    pub tree: Edges,
    pub pairs: Vec<LabelledVector>,
    /// `Π_{i=0}^{b−1} f_i!`, the same for every pair in the class.
    pub product_all: u64,
    /// `Π_{i=1}^{b−1} f_i!` (root factor omitted), per pair.
    pub product_without_root: Vec<u64>,
}

impl TreeClass {
    pub fn matches_all(&self) -> bool {
        self.pairs.len() as u64 == self.product_all
    }

    pub fn matches_without_root(&self) -> bool {
        self.product_without_root.iter().all(|&p| p == self.pairs.len() as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeAudit {
    pub b: usize,
    pub classes: Vec<TreeClass>,
    pub total_pairs: usize,
}

impl TreeAudit {
    pub fn multiplicity_holds(&self) -> bool {
        self.classes.iter().all(TreeClass::matches_all)
    }

    pub fn root_free_mismatches(&self) -> usize {
        self.classes.iter().filter(|c| !c.matches_without_root()).count()
    }
}

/// Runs over all `σ ∈ S_{b−1}` (label 0 fixed) and all realizable `f`,
/// records every `(f, σ)` with `H ∘ σ` f-connected and groups the pairs by
/// the spanning tree they select in the original labels.
pub fn rooted_spanning_tree_audit(b: usize, h: &[(usize, usize)]) -> Result<TreeAudit, BlockError> {
    if b == 0 || b > AUDIT_CAP {
        return Err(BlockError::AuditCap { b, cap: AUDIT_CAP });
    }
    let trees: Vec<(Vec<usize>, Edges)> =
        realizable_f_trees(b).into_iter().map(|f| (f.clone(), f_tree(&f).expect("realizable"))).collect();
    let adj = adjacency(b, h);
    let mut classes: BTreeMap<Edges, Vec<LabelledVector>> = BTreeMap::new();
    // sigma[new] = old: new label `new` is carried by original vertex `sigma[new]`.
    let mut sigma: Vec<usize> = (0..b).collect();
    loop {
        for (f, t) in &trees {
            if t.iter().all(|&(i, j)| adj[sigma[i]][sigma[j]]) {
                let mut tree: Vec<(usize, usize)> =
                    t.iter().map(|&(i, j)| (sigma[i].min(sigma[j]), sigma[i].max(sigma[j]))).collect();
                tree.sort_unstable();
                classes.entry(tree).or_default().push((f.clone(), sigma.clone()));
            }
        }
        if !next_permutation(&mut sigma[1..]) {
            break;
        }
    }
    let classes: Vec<TreeClass> = classes
        .into_iter()
        .map(|(tree, pairs)| {
            let product_all = pairs[0].0.iter().map(|&x| factorial(x)).product();
            let product_without_root = pairs.iter().map(|(f, _)| f[1..].iter().map(|&x| factorial(x)).product()).collect();
            TreeClass { tree, pairs, product_all, product_without_root }
        })
        .collect();
    let total_pairs = classes.iter().map(|c| c.pairs.len()).sum();
    Ok(TreeAudit { b, classes, total_pairs })
}

pub fn binomial(n: u64, k: u64) -> u64 {
    (1..=k).fold(1u64, |acc, i| acc * (n + 1 - i) / i)
}
