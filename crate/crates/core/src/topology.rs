//! Graph checks on the circuit: V-loops / I-cutsets (well-posedness) and the
//! VCM-loops / ILM-cutsets that decide topological degeneracy.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::devices::DeviceClass;
use crate::linalg::{numerical_rank, DEFAULT_RANK_TOL};
use crate::netlist::{reduced_incidence, Circuit};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `false` when `a` and `b` were already connected.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Element groups ordered by their smallest member.
    pub fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut index_of_root = vec![usize::MAX; n];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for x in 0..n {
            let r = self.find(x);
            if index_of_root[r] == usize::MAX {
                index_of_root[r] = out.len();
                out.push(Vec::new());
            }
            out[index_of_root[r]].push(x);
        }
        out
    }
}

/// Branch set certifying a loop or a cutset, sorted by declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub branches: Vec<usize>,
    pub names: Vec<String>,
}

impl Witness {
    fn new(circuit: &Circuit, mut branches: Vec<usize>) -> Self {
        branches.sort_unstable();
        let names = branches
            .iter()
            .map(|&j| circuit.branches()[j].device.name.clone())
            .collect();
        Witness { branches, names }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.names.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("ill-posed circuit: loop of voltage sources {0}")]
    VLoop(Witness),
    #[error("ill-posed circuit: cutset of current sources {0}")]
    ICutset(Witness),
}

impl TopologyError {
    pub fn witness(&self) -> &Witness {
        match self {
            TopologyError::VLoop(w) | TopologyError::ICutset(w) => w,
        }
    }
}

pub const VCM: [DeviceClass; 3] = [
    DeviceClass::VSource,
    DeviceClass::Capacitor,
    DeviceClass::Memcapacitor,
];
pub const ILM: [DeviceClass; 3] = [
    DeviceClass::ISource,
    DeviceClass::Inductor,
    DeviceClass::Meminductor,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegeneracyReport {
    pub vcm_loop: Option<Witness>,
    pub ilm_cutset: Option<Witness>,
    pub nondegenerate: bool,
}

impl DegeneracyReport {
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if let Some(w) = &self.vcm_loop {
            parts.push(format!("VCM-loop {w}"));
        }
        if let Some(w) = &self.ilm_cutset {
            parts.push(format!("ILM-cutset {w}"));
        }
        if parts.is_empty() {
            "nondegenerate".to_string()
        } else {
            format!("degenerate: {}", parts.join(", "))
        }
    }
}

fn in_classes(circuit: &Circuit, j: usize, classes: &[DeviceClass]) -> bool {
    classes.contains(&circuit.branches()[j].device.class)
}

/// First cycle (in declaration order) of the subgraph made of `classes`.
pub fn find_loop(circuit: &Circuit, classes: &[DeviceClass]) -> Option<Witness> {
    let n = circuit.nodes().len();
    let mut uf = UnionFind::new(n);
    let mut forest: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (j, b) in circuit.branches().iter().enumerate() {
        if !in_classes(circuit, j, classes) {
            continue;
        }
        if uf.union(b.from, b.to) {
            forest[b.from].push((b.to, j));
            forest[b.to].push((b.from, j));
            continue;
        }
        let mut path = forest_path(&forest, b.from, b.to).expect("endpoints share a tree");
        path.push(j);
        return Some(Witness::new(circuit, path));
    }
    None
}

/// Branches on the unique forest path between `a` and `b`.
fn forest_path(forest: &[Vec<(usize, usize)>], a: usize, b: usize) -> Option<Vec<usize>> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; forest.len()];
    let mut seen = vec![false; forest.len()];
    let mut queue = VecDeque::from([a]);
    seen[a] = true;
    while let Some(x) = queue.pop_front() {
        if x == b {
            let mut out = Vec::new();
            let mut cur = b;
            while let Some((p, j)) = prev[cur] {
                out.push(j);
                cur = p;
            }
            return Some(out);
        }
        for &(y, j) in &forest[x] {
            if !seen[y] {
                seen[y] = true;
                prev[y] = Some((x, j));
                queue.push_back(y);
            }
        }
    }
    None
}

/// Node groups that stay connected after deleting every branch of `deleted`.
pub fn components_without(circuit: &Circuit, deleted: &[DeviceClass]) -> Vec<Vec<usize>> {
    let mut uf = UnionFind::new(circuit.nodes().len());
    for (j, b) in circuit.branches().iter().enumerate() {
        if !in_classes(circuit, j, deleted) {
            uf.union(b.from, b.to);
        }
    }
    uf.groups()
}

/// A minimal cutset made only of branches from `classes`, if one exists.
pub fn find_cutset(circuit: &Circuit, classes: &[DeviceClass]) -> Option<Witness> {
    let groups = components_without(circuit, classes);
    if groups.len() == 1 {
        return None;
    }
    let mut comp = vec![0; circuit.nodes().len()];
    for (k, g) in groups.iter().enumerate() {
        for &n in g {
            comp[n] = k;
        }
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for b in circuit.branches() {
        let (x, y) = (comp[b.from], comp[b.to]);
        if x != y {
            adj[x].push(y);
            adj[y].push(x);
        }
    }
    // The last supernode reached by BFS is a leaf of the BFS tree, so both
    // sides of its boundary stay connected and the boundary is minimal.
    let mut seen = vec![false; groups.len()];
    let mut queue = VecDeque::from([comp[0]]);
    seen[comp[0]] = true;
    let mut last = comp[0];
    while let Some(x) = queue.pop_front() {
        last = x;
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                queue.push_back(y);
            }
        }
    }
    let cut = circuit
        .branches()
        .iter()
        .enumerate()
        .filter(|(_, b)| (comp[b.from] == last) != (comp[b.to] == last))
        .map(|(j, _)| j)
        .collect();
    Some(Witness::new(circuit, cut))
}

pub fn check_wellposed(circuit: &Circuit) -> Result<(), TopologyError> {
    if let Some(w) = find_loop(circuit, &[DeviceClass::VSource]) {
        return Err(TopologyError::VLoop(w));
    }
    if let Some(w) = find_cutset(circuit, &[DeviceClass::ISource]) {
        return Err(TopologyError::ICutset(w));
    }
    Ok(())
}

pub fn vcm_loop_exists(circuit: &Circuit) -> Option<Witness> {
    find_loop(circuit, &VCM)
}

pub fn ilm_cutset_exists(circuit: &Circuit) -> Option<Witness> {
    find_cutset(circuit, &ILM)
}

pub fn degeneracy_report(circuit: &Circuit) -> Result<DegeneracyReport, TopologyError> {
    check_wellposed(circuit)?;
    let vcm_loop = vcm_loop_exists(circuit);
    let ilm_cutset = ilm_cutset_exists(circuit);
    let nondegenerate = vcm_loop.is_none() && ilm_cutset.is_none();
    Ok(DegeneracyReport {
        vcm_loop,
        ilm_cutset,
        nondegenerate,
    })
}

/// Linear-algebra counterpart of [`vcm_loop_exists`]: `(A_c A_mc A_u)` has dependent columns.
pub fn vcm_rank_deficient(circuit: &Circuit) -> bool {
    let block = reduced_incidence(circuit).block(&VCM);
    numerical_rank(&block, DEFAULT_RANK_TOL) < block.ncols()
}

/// Linear-algebra counterpart of [`ilm_cutset_exists`]: the non-ILM columns have rank below `n−1`.
pub fn ilm_rank_deficient(circuit: &Circuit) -> bool {
    let keep: Vec<DeviceClass> = DeviceClass::ALL
        .into_iter()
        .filter(|c| !ILM.contains(c))
        .collect();
    let block = reduced_incidence(circuit).block(&keep);
    numerical_rank(&block, DEFAULT_RANK_TOL) < block.nrows()
}

/// Signed fundamental cycles of the subgraph made of `classes`, as
/// `(branch, ±1)` lists satisfying `A c = 0`.
pub fn fundamental_cycles(circuit: &Circuit, classes: &[DeviceClass]) -> Vec<Vec<(usize, f64)>> {
    let n = circuit.nodes().len();
    let mut uf = UnionFind::new(n);
    let mut forest: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut out = Vec::new();
    let branches = circuit.branches();
    for (j, b) in branches.iter().enumerate() {
        if !in_classes(circuit, j, classes) {
            continue;
        }
        if uf.union(b.from, b.to) {
            forest[b.from].push((b.to, j));
            forest[b.to].push((b.from, j));
            continue;
        }
        // flow leaves along j (from → to) and returns along the tree path to → from
        let mut cycle = vec![(j, 1.0)];
        let mut at = b.to;
        for k in forest_path(&forest, b.to, b.from)
            .expect("endpoints share a tree")
            .into_iter()
            .rev()
        {
            let t = &branches[k];
            if t.from == at {
                cycle.push((k, 1.0));
                at = t.to;
            } else {
                cycle.push((k, -1.0));
                at = t.from;
            }
        }
        debug_assert_eq!(at, b.from);
        out.push(cycle);
    }
    out
}
