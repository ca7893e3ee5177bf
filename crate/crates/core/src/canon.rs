//! Canonical labeling of node-colored graphs.
//!
//! Individualization-refinement search: the initial partition groups nodes
//! by color, cells are split by neighbor counts until equitable, and
//! non-singleton cells are individualized one vertex at a time. Every leaf
//! is a discrete partition, i.e. a relabeling; the lexicographically
//! smallest encoding wins. Subtrees known to be related by an automorphism
//! that fixes the current path are skipped. Automorphisms come from twin
//! vertices and from pairs of leaves with equal encodings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Adjacency;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColoredGraph {
    pub adjacency: Adjacency,
    pub colors: Vec<usize>,
}

impl ColoredGraph {
    pub fn new(adjacency: Adjacency, colors: Vec<usize>) -> Result<Self> {
        if adjacency.n() != colors.len() {
            return Err(Error::InvalidInput(format!(
                "{} colors for {} nodes",
                colors.len(),
                adjacency.n()
            )));
        }
        if adjacency.n() > 255 {
            return Err(Error::InvalidInput("at most 255 nodes are supported".into()));
        }
        if colors.iter().any(|&c| c > 255) {
            return Err(Error::InvalidInput("colors must fit in one byte".into()));
        }
        Ok(Self { adjacency, colors })
    }

    pub fn n(&self) -> usize {
        self.colors.len()
    }

    /// Moves node `v` to position `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut colors = vec![0; self.n()];
        for (v, &p) in perm.iter().enumerate() {
            colors[p] = self.colors[v];
        }
        Self {
            adjacency: self.adjacency.permuted(perm),
            colors,
        }
    }

    /// Encoding in the current node order: node count, upper triangle
    /// (row-major, packed MSB first), then one byte per color.
    pub fn encode(&self) -> Vec<u8> {
        let identity: Vec<usize> = (0..self.n()).collect();
        encode_with(self, &identity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalForm {
    pub canonical_bytes: Vec<u8>,
    /// `permutation[v]` is the canonical position of original node `v`.
    pub permutation: Vec<usize>,
}

fn encode_with(graph: &ColoredGraph, perm: &[usize]) -> Vec<u8> {
    let n = graph.n();
    let mut inverse = vec![0; n];
    for (v, &p) in perm.iter().enumerate() {
        inverse[p] = v;
    }
    let tri_bits = n * n.saturating_sub(1) / 2;
    let mut out = Vec::with_capacity(1 + tri_bits.div_ceil(8) + n);
    out.push(n as u8);
    let mut byte = 0u8;
    let mut filled = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            byte <<= 1;
            if graph.adjacency.get(inverse[i], inverse[j]) {
                byte |= 1;
            }
            filled += 1;
            if filled == 8 {
                out.push(byte);
                byte = 0;
                filled = 0;
            }
        }
    }
    if filled > 0 {
        out.push(byte << (8 - filled));
    }
    out.extend(inverse.iter().map(|&v| graph.colors[v] as u8));
    out
}

type Partition = Vec<Vec<usize>>;

/// Splits cells by neighbor counts into every cell until nothing changes.
fn refine(adj: &Adjacency, mut cells: Partition) -> Partition {
    let n = adj.n();
    let mut cell_of = vec![0usize; n];
    loop {
        for (idx, cell) in cells.iter().enumerate() {
            for &v in cell {
                cell_of[v] = idx;
            }
        }
        let k = cells.len();
        let mut next: Partition = Vec::with_capacity(n);
        for cell in &cells {
            if cell.len() == 1 {
                next.push(cell.clone());
                continue;
            }
            let mut keyed: Vec<(Vec<u32>, usize)> = cell
                .iter()
                .map(|&v| {
                    let mut counts = vec![0u32; k];
                    for u in adj.neighbors(v) {
                        counts[cell_of[u]] += 1;
                    }
                    (counts, v)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.cmp(&b.0));
            let mut start = 0;
            for i in 1..=keyed.len() {
                if i == keyed.len() || keyed[i].0 != keyed[start].0 {
                    next.push(keyed[start..i].iter().map(|(_, v)| *v).collect());
                    start = i;
                }
            }
        }
        if next.len() == cells.len() {
            return next;
        }
        cells = next;
    }
}

fn individualize(cells: &Partition, target: usize, v: usize) -> Partition {
    let mut out = Vec::with_capacity(cells.len() + 1);
    out.extend_from_slice(&cells[..target]);
    out.push(vec![v]);
    out.push(cells[target].iter().copied().filter(|&u| u != v).collect());
    out.extend_from_slice(&cells[target + 1..]);
    out
}

struct Leaf {
    bytes: Vec<u8>,
    perm: Vec<usize>,
}

struct Search<'a> {
    graph: &'a ColoredGraph,
    first: Option<Leaf>,
    best: Option<Leaf>,
    automorphisms: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn leaf(&mut self, cells: &Partition) {
        let mut perm = vec![0; self.graph.n()];
        for (idx, cell) in cells.iter().enumerate() {
            perm[cell[0]] = idx;
        }
        let bytes = encode_with(self.graph, &perm);
        let Some(first) = &self.first else {
            self.first = Some(Leaf {
                bytes: bytes.clone(),
                perm: perm.clone(),
            });
            self.best = Some(Leaf { bytes, perm });
            return;
        };
        let best = self.best.as_ref().expect("best set with first");
        let same_as = if bytes == first.bytes {
            Some(&first.perm)
        } else if bytes == best.bytes {
            Some(&best.perm)
        } else {
            None
        };
        if let Some(other) = same_as {
            let mut other_inverse = vec![0; perm.len()];
            for (v, &p) in other.iter().enumerate() {
                other_inverse[p] = v;
            }
            let gamma: Vec<usize> = perm.iter().map(|&p| other_inverse[p]).collect();
            if gamma.iter().enumerate().any(|(v, &w)| v != w) {
                self.automorphisms.push(gamma);
            }
        }
        if bytes < best.bytes {
            self.best = Some(Leaf { bytes, perm });
        }
    }

    /// Whether `v` shares an orbit with any of `tried` under the known
    /// automorphisms that fix every vertex of `path`.
    fn equivalent_to_tried(&self, path: &[usize], tried: &[usize], v: usize) -> bool {
        if tried.is_empty() {
            return false;
        }
        let n = self.graph.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for gamma in &self.automorphisms {
            if path.iter().any(|&p| gamma[p] != p) {
                continue;
            }
            for (u, &w) in gamma.iter().enumerate() {
                let (a, b) = (find(&mut parent, u), find(&mut parent, w));
                if a != b {
                    parent[a] = b;
                }
            }
        }
        let root = find(&mut parent, v);
        tried.iter().any(|&t| find(&mut parent, t) == root)
    }

    fn explore(&mut self, cells: Partition, path: &mut Vec<usize>) {
        let Some(target) = cells.iter().position(|c| c.len() > 1) else {
            self.leaf(&cells);
            return;
        };
        let mut tried = Vec::new();
        for &v in &cells[target] {
            if self.equivalent_to_tried(path, &tried, v) {
                continue;
            }
            let child = refine(&self.graph.adjacency, individualize(&cells, target, v));
            path.push(v);
            self.explore(child, path);
            path.pop();
            tried.push(v);
        }
    }
}

/// Transpositions of same-colored vertices with identical neighborhoods.
fn twin_automorphisms(graph: &ColoredGraph) -> Vec<Vec<usize>> {
    let n = graph.n();
    let adj = &graph.adjacency;
    let mut out = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if graph.colors[u] != graph.colors[v] {
                continue;
            }
            let twins = (0..n)
                .filter(|&w| w != u && w != v)
                .all(|w| adj.get(u, w) == adj.get(v, w));
            if twins {
                let mut gamma: Vec<usize> = (0..n).collect();
                gamma.swap(u, v);
                out.push(gamma);
            }
        }
    }
    out
}

pub fn canonical_form(graph: &ColoredGraph) -> CanonicalForm {
    let n = graph.n();
    let mut by_color: Vec<usize> = (0..n).collect();
    by_color.sort_by_key(|&v| graph.colors[v]);
    let mut initial: Partition = Vec::new();
    for v in by_color {
        match initial.last_mut() {
            Some(cell) if graph.colors[cell[0]] == graph.colors[v] => cell.push(v),
            _ => initial.push(vec![v]),
        }
    }

    let mut search = Search {
        graph,
        first: None,
        best: None,
        automorphisms: twin_automorphisms(graph),
    };
    let root = refine(&graph.adjacency, initial);
    search.explore(root, &mut Vec::new());
    let best = search.best.expect("search reaches at least one leaf");
    CanonicalForm {
        canonical_bytes: best.bytes,
        permutation: best.perm,
    }
}

pub fn is_isomorphic(g1: &ColoredGraph, g2: &ColoredGraph) -> bool {
    g1.n() == g2.n() && canonical_form(g1).canonical_bytes == canonical_form(g2).canonical_bytes
}
