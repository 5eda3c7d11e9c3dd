//! Labeled multigraphs with loops on a fixed vertex set `v₁,…,vₙ`.
//!
//! A graph is stored as its upper-triangular adjacency matrix: entry `(i, j)`
//! with `i < j` is the number of edges joining `vᵢ` and `vⱼ`, and the
//! diagonal entry `(i, i)` is the number of loops at `vᵢ`. Vertices are
//! zero-based in the API; the text form uses one-based labels.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest component accepted by [`Multigraph::canonical_key`].
pub const CANONICAL_VERTEX_CAP: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct Multigraph {
    n: usize,
    // row-major n×n, zero below the diagonal
    adj: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    upper: Vec<Vec<u32>>,
}

impl TryFrom<GraphJson> for Multigraph {
    type Error = Error;

    fn try_from(raw: GraphJson) -> Result<Self> {
        if raw.upper.len() != raw.n {
            return Err(Error::InvalidGraph(format!("expected {} rows, got {}", raw.n, raw.upper.len())));
        }
        Multigraph::from_upper(&raw.upper)
    }
}

impl From<Multigraph> for GraphJson {
    fn from(g: Multigraph) -> Self {
        GraphJson { n: g.n, upper: g.upper_rows() }
    }
}

impl Multigraph {
    /// The edgeless graph on `n` vertices.
    pub fn empty(n: usize) -> Self {
        Multigraph { n, adj: vec![0; n * n] }
    }

    /// Builds a graph from a square upper-triangular matrix.
    pub fn from_upper(rows: &[Vec<u32>]) -> Result<Self> {
        let n = rows.len();
        let mut g = Multigraph::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGraph(format!("row {i} has length {}, expected {n}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if j < i && v != 0 {
                    return Err(Error::InvalidGraph(format!("nonzero entry below diagonal at ({i},{j})")));
                }
                g.adj[i * n + j] = v;
            }
        }
        Ok(g)
    }

    /// Builds a graph from `(a, b, multiplicity)` triples; `a == b` adds loops.
    pub fn from_edges(n: usize, edges: &[(usize, usize, u32)]) -> Result<Self> {
        let mut g = Multigraph::empty(n);
        for &(a, b, mult) in edges {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { index: v, n });
                }
            }
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            g.adj[a * n + b] += mult;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Multiplicity of `{vₐ, v_b}` (loops when `a == b`), symmetric in its arguments.
    pub fn multiplicity(&self, a: usize, b: usize) -> u32 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.adj[a * self.n + b]
    }

    pub fn loops(&self, v: usize) -> u32 {
        self.adj[v * self.n + v]
    }

    pub fn upper_rows(&self) -> Vec<Vec<u32>> {
        self.adj.chunks(self.n.max(1)).take(self.n).map(<[u32]>::to_vec).collect()
    }

    /// The raw upper-triangular matrix, row-major.
    pub fn matrix(&self) -> &[u32] {
        &self.adj
    }

    /// `deg(vⱼ) = 2·loops + Σ incident edge multiplicities`.
    pub fn degree(&self, j: usize) -> Result<u32> {
        if j >= self.n {
            return Err(Error::VertexOutOfRange { index: j, n: self.n });
        }
        Ok(self.degree_unchecked(j))
    }

    fn degree_unchecked(&self, j: usize) -> u32 {
        (0..self.n).map(|k| if k == j { 2 * self.loops(j) } else { self.multiplicity(j, k) }).sum()
    }

    pub fn degrees(&self) -> Vec<u32> {
        (0..self.n).map(|j| self.degree_unchecked(j)).collect()
    }

    /// Total edge count, loops included.
    pub fn edge_count(&self) -> u32 {
        self.adj.iter().sum()
    }

    pub fn trace(&self) -> u32 {
        (0..self.n).map(|v| self.loops(v)).sum()
    }

    /// Non-zero entries as `(a, b, multiplicity)` with `a ≤ b`, row-major.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (0..self.n).flat_map(move |a| (a..self.n).map(move |b| (a, b))).filter_map(move |(a, b)| {
            let m = self.adj[a * self.n + b];
            (m > 0).then_some((a, b, m))
        })
    }

    /// Entrywise sum of edge multiplicities.
    pub fn sum(&self, other: &Multigraph) -> Result<Multigraph> {
        if self.n != other.n {
            return Err(Error::VertexCountMismatch { left: self.n, right: other.n });
        }
        Ok(Multigraph { n: self.n, adj: self.adj.iter().zip(&other.adj).map(|(a, b)| a + b).collect() })
    }

    /// Relabels so that old vertex `perm[new]` becomes `new`.
    pub fn permuted(&self, perm: &[usize]) -> Multigraph {
        let n = self.n;
        let mut g = Multigraph::empty(n);
        for a in 0..n {
            for b in a..n {
                g.adj[a * n + b] = self.multiplicity(perm[a], perm[b]);
            }
        }
        g
    }

    /// The sub-multigraph induced on `vertices`, relabeled in the given order.
    pub fn induced(&self, vertices: &[usize]) -> Multigraph {
        let l = vertices.len();
        let mut g = Multigraph::empty(l);
        for a in 0..l {
            for b in a..l {
                g.adj[a * l + b] = self.multiplicity(vertices[a], vertices[b]);
            }
        }
        g
    }

    pub fn is_connected(&self) -> bool {
        self.components().blocks.len() <= 1
    }

    /// Connected components via union-find over edges of positive multiplicity.
    /// Isolated vertices become edgeless singleton components.
    pub fn components(&self) -> ComponentDecomposition {
        let mut dsu = DisjointSets::new(self.n);
        for (a, b, _) in self.edges() {
            dsu.union(a, b);
        }
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut block_of_root = vec![usize::MAX; self.n];
        for v in 0..self.n {
            let root = dsu.find(v);
            if block_of_root[root] == usize::MAX {
                block_of_root[root] = blocks.len();
                blocks.push(Vec::new());
            }
            blocks[block_of_root[root]].push(v);
        }
        ComponentDecomposition {
            blocks: blocks.into_iter().map(|vertices| Component { graph: self.induced(&vertices), vertices }).collect(),
        }
    }

    /// Isomorphism-invariant key: the lexicographically smallest serialized
    /// upper triangle over all vertex permutations.
    pub fn canonical_key(&self) -> Result<CanonicalKey> {
        if self.n > CANONICAL_VERTEX_CAP {
            return Err(Error::SizeCap { what: "canonicalized graph", size: self.n, cap: CANONICAL_VERTEX_CAP });
        }
        let n = self.n;
        let mut best: Option<Vec<u32>> = None;
        let mut buf = Vec::with_capacity(n * (n + 1) / 2);
        for perm in (0..n).permutations(n) {
            buf.clear();
            for a in 0..n {
                for b in a..n {
                    buf.push(self.multiplicity(perm[a], perm[b]));
                }
            }
            if best.as_ref().is_none_or(|cur| buf < *cur) {
                best = Some(buf.clone());
            }
        }
        Ok(CanonicalKey { n: n as u8, upper: best.unwrap_or_default() })
    }

    /// Every labeled multigraph on `n` vertices with the given degrees, in
    /// lexicographic order of the row-major upper triangle.
    pub fn enumerate(n: usize, degrees: &[u32]) -> Result<Vec<Multigraph>> {
        if degrees.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: degrees.len() });
        }
        let mut out = Vec::new();
        if degrees.iter().sum::<u32>() % 2 == 1 {
            return Ok(out);
        }
        let mut state = Enumerator { n, remaining: degrees.to_vec(), g: Multigraph::empty(n), out: &mut out };
        state.fill_row(0);
        Ok(out)
    }

    /// Compact text form `"1-2:2, 3-3:1"`; the empty graph renders as `""`.
    pub fn edge_list(&self) -> String {
        self.edges().map(|(a, b, m)| format!("{}-{}:{}", a + 1, b + 1, m)).join(", ")
    }

    /// Parses the output of [`Multigraph::edge_list`].
    pub fn parse_edge_list(n: usize, text: &str) -> Result<Multigraph> {
        let mut edges = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let bad = || Error::InvalidGraph(format!("malformed edge '{item}'"));
            let (pair, mult) = item.split_once(':').ok_or_else(bad)?;
            let (a, b) = pair.split_once('-').ok_or_else(bad)?;
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            let mult: u32 = mult.trim().parse().map_err(|_| bad())?;
            if a == 0 || b == 0 {
                return Err(bad());
            }
            edges.push((a - 1, b - 1, mult));
        }
        Multigraph::from_edges(n, &edges)
    }
}

impl fmt::Display for Multigraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.n, self.edge_list())
    }
}

struct Enumerator<'a> {
    n: usize,
    remaining: Vec<u32>,
    g: Multigraph,
    out: &'a mut Vec<Multigraph>,
}

impl Enumerator<'_> {
    fn fill_row(&mut self, i: usize) {
        if i == self.n {
            self.out.push(self.g.clone());
            return;
        }
        let later: u32 = self.remaining[i + 1..].iter().sum();
        let rem = self.remaining[i];
        for loops in 0..=rem / 2 {
            let left = rem - 2 * loops;
            // what is left of vᵢ must go to later vertices
            if left > later {
                continue;
            }
            self.g.adj[i * self.n + i] = loops;
            self.remaining[i] = left;
            self.fill_entry(i, i + 1, later);
            self.remaining[i] = rem;
        }
        self.g.adj[i * self.n + i] = 0;
    }

    // `later` = Σ remaining[j..]
    fn fill_entry(&mut self, i: usize, j: usize, later: u32) {
        if j == self.n {
            if self.remaining[i] == 0 {
                self.fill_row(i + 1);
            }
            return;
        }
        let rem_i = self.remaining[i];
        let rem_j = self.remaining[j];
        let after = later - rem_j;
        let hi = rem_i.min(rem_j);
        let lo = rem_i.saturating_sub(after);
        for mult in lo..=hi {
            self.g.adj[i * self.n + j] = mult;
            self.remaining[i] = rem_i - mult;
            self.remaining[j] = rem_j - mult;
            self.fill_entry(i, j + 1, after);
        }
        self.remaining[i] = rem_i;
        self.remaining[j] = rem_j;
        self.g.adj[i * self.n + j] = 0;
    }
}

/// A connected component: its vertices (parent labels, ascending) and the
/// induced graph relabeled `0..l` in that order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub vertices: Vec<usize>,
    pub graph: Multigraph,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentDecomposition {
    pub blocks: Vec<Component>,
}

impl ComponentDecomposition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Canonical form of a (small) multigraph up to relabeling.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey {
    n: u8,
    upper: Vec<u32>,
}

impl CanonicalKey {
    pub fn vertex_count(&self) -> usize {
        self.n as usize
    }

    /// The canonical representative.
    pub fn to_graph(&self) -> Multigraph {
        let n = self.n as usize;
        let mut g = Multigraph::empty(n);
        let mut it = self.upper.iter();
        for a in 0..n {
            for b in a..n {
                g.adj[a * n + b] = *it.next().expect("key length matches vertex count");
            }
        }
        g
    }

    /// Byte serialization: vertex count, then each entry as big-endian u32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = vec![self.n];
        for v in &self.upper {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        bytes
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_graph().fmt(f)
    }
}

impl FromStr for CanonicalKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidGraph(format!("malformed component key '{s}'"));
        let rest = s.trim().strip_prefix('[').ok_or_else(bad)?;
        let (n, edges) = rest.split_once(']').ok_or_else(bad)?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        Multigraph::parse_edge_list(n, edges)?.canonical_key()
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, edges: &[(usize, usize, u32)]) -> Multigraph {
        Multigraph::from_edges(n, edges).unwrap()
    }

    #[test]
    fn degree_examples() {
        let one_loop = g(1, &[(0, 0, 1)]);
        assert_eq!(one_loop.degree(0).unwrap(), 2);

        let edge = g(2, &[(0, 1, 1)]);
        assert_eq!(edge.degrees(), vec![1, 1]);

        let triangle = g(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]);
        assert_eq!(triangle.degrees(), vec![2, 2, 2]);

        assert!(matches!(edge.degree(2), Err(Error::VertexOutOfRange { .. })));
    }

    #[test]
    fn sum_examples() {
        let d1 = g(2, &[(0, 0, 1)]);
        let d2 = g(2, &[(1, 1, 1)]);
        assert_eq!(d1.sum(&d2).unwrap(), g(2, &[(0, 0, 1), (1, 1, 1)]));

        let a = g(2, &[(0, 1, 1)]);
        assert_eq!(a.sum(&Multigraph::empty(2)).unwrap(), a);
        assert_eq!(a.sum(&a).unwrap(), g(2, &[(0, 1, 2)]));

        assert!(matches!(a.sum(&Multigraph::empty(3)), Err(Error::VertexCountMismatch { .. })));
    }

    #[test]
    fn component_examples() {
        assert_eq!(g(2, &[(0, 0, 1), (1, 1, 1)]).components().len(), 2);
        assert_eq!(g(2, &[(0, 1, 2)]).components().len(), 1);
        let zero = Multigraph::empty(3).components();
        assert_eq!(zero.len(), 3);
        assert!(zero.blocks.iter().all(|c| c.graph.edge_count() == 0 && c.vertices.len() == 1));
    }

    #[test]
    fn components_relabel_induced_graphs() {
        // loop at v2, edge v1–v3
        let gr = g(3, &[(1, 1, 1), (0, 2, 1)]);
        let comps = gr.components();
        assert_eq!(comps.blocks[0].vertices, vec![0, 2]);
        assert_eq!(comps.blocks[0].graph, g(2, &[(0, 1, 1)]));
        assert_eq!(comps.blocks[1].vertices, vec![1]);
        assert_eq!(comps.blocks[1].graph, g(1, &[(0, 0, 1)]));
    }

    #[test]
    fn enumerate_examples() {
        let five = Multigraph::enumerate(3, &[2, 2, 2]).unwrap();
        assert_eq!(five.len(), 5);
        assert_eq!(Multigraph::enumerate(2, &[1, 1]).unwrap(), vec![g(2, &[(0, 1, 1)])]);
        let two = Multigraph::enumerate(2, &[2, 2]).unwrap();
        assert_eq!(two.len(), 2);
        assert!(two.contains(&g(2, &[(0, 1, 2)])));
        assert!(two.contains(&g(2, &[(0, 0, 1), (1, 1, 1)])));
        assert!(Multigraph::enumerate(2, &[1, 2]).unwrap().is_empty());
    }

    #[test]
    fn enumerate_zero_degrees_gives_empty_graph() {
        assert_eq!(Multigraph::enumerate(3, &[0, 0, 0]).unwrap(), vec![Multigraph::empty(3)]);
    }

    #[test]
    fn enumerate_single_vertex() {
        assert_eq!(Multigraph::enumerate(1, &[4]).unwrap(), vec![g(1, &[(0, 0, 2)])]);
        assert!(Multigraph::enumerate(1, &[3]).unwrap().is_empty());
    }

    #[test]
    fn canonical_examples() {
        let l1 = g(1, &[(0, 0, 1)]).canonical_key().unwrap();
        let l2 = g(2, &[(1, 1, 1), (0, 0, 0)]).components().blocks[1].graph.canonical_key().unwrap();
        assert_eq!(l1, l2);

        let double = g(2, &[(0, 1, 2)]).canonical_key().unwrap();
        let loops = g(2, &[(0, 0, 1), (1, 1, 1)]).canonical_key().unwrap();
        assert_ne!(double, loops);

        let p1 = g(3, &[(0, 1, 1), (1, 2, 1)]).canonical_key().unwrap();
        let p2 = g(3, &[(1, 0, 1), (0, 2, 1)]).canonical_key().unwrap();
        assert_eq!(p1, p2);

        assert!(matches!(Multigraph::empty(9).canonical_key(), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn canonical_key_text_round_trip() {
        let tri = g(3, &[(0, 1, 1), (1, 2, 1), (0, 2, 1)]).canonical_key().unwrap();
        let text = tri.to_string();
        assert_eq!(text.parse::<CanonicalKey>().unwrap(), tri);
        assert_eq!("[1]".parse::<CanonicalKey>().unwrap(), Multigraph::empty(1).canonical_key().unwrap());
        assert_eq!(tri.to_bytes().len(), 1 + 6 * 4);
    }

    #[test]
    fn json_and_edge_list_forms() {
        let gr = g(3, &[(0, 1, 2), (2, 2, 1)]);
        let json = serde_json::to_string(&gr).unwrap();
        assert_eq!(json, r#"{"n":3,"upper":[[0,2,0],[0,0,0],[0,0,1]]}"#);
        assert_eq!(serde_json::from_str::<Multigraph>(&json).unwrap(), gr);
        assert!(serde_json::from_str::<Multigraph>(r#"{"n":2,"upper":[[0,0],[1,0]]}"#).is_err());

        assert_eq!(gr.edge_list(), "1-2:2, 3-3:1");
        assert_eq!(Multigraph::parse_edge_list(3, &gr.edge_list()).unwrap(), gr);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn graph_strategy(max_n: usize) -> impl Strategy<Value = Multigraph> {
            (1..=max_n).prop_flat_map(|n| {
                proptest::collection::vec(0u32..3, n * n).prop_map(move |mut adj| {
                    for i in 0..n {
                        for j in 0..i {
                            adj[i * n + j] = 0;
                        }
                    }
                    Multigraph { n, adj }
                })
            })
        }

        fn pair_strategy() -> impl Strategy<Value = (Multigraph, Multigraph)> {
            (1usize..5).prop_flat_map(|n| {
                let one = proptest::collection::vec(0u32..3, n * n);
                (one.clone(), one).prop_map(move |(a, b)| {
                    let mask = |mut adj: Vec<u32>| {
                        for i in 0..n {
                            for j in 0..i {
                                adj[i * n + j] = 0;
                            }
                        }
                        Multigraph { n, adj }
                    };
                    (mask(a), mask(b))
                })
            })
        }

        proptest! {
            #[test]
            fn handshake(gr in graph_strategy(6)) {
                prop_assert_eq!(gr.degrees().iter().sum::<u32>(), 2 * gr.edge_count());
            }

            #[test]
            fn degree_is_additive((a, b) in pair_strategy()) {
                let s = a.sum(&b).unwrap();
                for j in 0..a.n() {
                    prop_assert_eq!(s.degree(j).unwrap(), a.degree(j).unwrap() + b.degree(j).unwrap());
                }
                prop_assert_eq!(s, b.sum(&a).unwrap());
            }

            #[test]
            fn components_are_edge_closed_and_idempotent(gr in graph_strategy(6)) {
                let comps = gr.components();
                let mut seen = vec![false; gr.n()];
                let mut edge_total = 0;
                for c in &comps.blocks {
                    for &v in &c.vertices {
                        prop_assert!(!seen[v]);
                        seen[v] = true;
                    }
                    prop_assert!(c.graph.components().len() == 1);
                    edge_total += c.graph.edge_count();
                }
                prop_assert!(seen.iter().all(|&s| s));
                // nothing crosses blocks
                prop_assert_eq!(edge_total, gr.edge_count());
            }

            #[test]
            fn canonical_key_is_relabeling_invariant(gr in graph_strategy(5), seed in any::<u64>()) {
                use rand::{seq::SliceRandom, SeedableRng};
                let mut perm: Vec<usize> = (0..gr.n()).collect();
                perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                prop_assert_eq!(gr.canonical_key().unwrap(), gr.permuted(&perm).canonical_key().unwrap());
                prop_assert_eq!(gr.canonical_key().unwrap().to_graph().canonical_key().unwrap(), gr.canonical_key().unwrap());
            }

            #[test]
            fn enumeration_is_exact_and_permutation_invariant(degrees in proptest::collection::vec(0u32..4, 1..5), seed in any::<u64>()) {
                use rand::{seq::SliceRandom, SeedableRng};
                let n = degrees.len();
                let graphs = Multigraph::enumerate(n, &degrees).unwrap();
                for w in graphs.windows(2) {
                    prop_assert!(w[0].matrix() < w[1].matrix());
                }
                for gr in &graphs {
                    prop_assert_eq!(gr.degrees(), degrees.clone());
                }
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let permuted: Vec<u32> = perm.iter().map(|&p| degrees[p]).collect();
                prop_assert_eq!(Multigraph::enumerate(n, &permuted).unwrap().len(), graphs.len());
            }
        }
    }
}
