//! Vietoris–Rips persistent homology in dimensions 0 and 1.
//!
//! Dimension 0 is read off a union-find sweep over the edges in filtration
//! order. Dimension 1 is computed by reducing the coboundary matrix of the
//! edges over Z/2, sweeping edges from last to first. Edges that merged two
//! components in the dimension-0 sweep are cleared (their columns are known
//! to reduce to zero). Columns are never materialised: the working column is
//! a heap of cofacets, and the reduction matrix is kept only for columns that
//! needed additions.
//!
//! Simplices are ordered by filtration value, then lexicographically by their
//! sorted vertex tuple.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::hash::{BuildHasherDefault, Hasher};

use crate::error::{Error, Result};
use crate::tensor_io::{Feature, LabeledPointCloud, PersistenceDiagram};

/// Dense symmetric matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates a full row-major `n × n` matrix.
    pub fn from_full(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("distance matrix must have at least one point".into()));
        }
        if data.len() != n * n {
            return Err(Error::Validation(format!(
                "{} entries for a {n}x{n} distance matrix",
                data.len()
            )));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::Validation(format!("nonzero diagonal entry at {i}")));
            }
            for j in 0..i {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::Validation(format!("entry ({i}, {j}) = {a} is not a distance")));
                }
                if a != b {
                    return Err(Error::Validation(format!("asymmetric entries at ({i}, {j}): {a} vs {b}")));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// Builds the matrix from its strict lower triangle, row `i` holding `d(i, 0..i)`.
    pub fn from_lower_triangle(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != i {
                return Err(Error::Validation(format!(
                    "lower-triangle row {i} has {} entries, expected {i}",
                    row.len()
                )));
            }
            for (j, &d) in row.iter().enumerate() {
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self::from_full(n, data)
    }

    /// Parses CSV holding either a full square matrix or a strict lower
    /// triangle (the row for point 0 may be blank or omitted).
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let row = raw.trim();
            if row.starts_with('#') {
                continue;
            }
            if row.is_empty() {
                if rows.is_empty() {
                    rows.push(Vec::new());
                }
                continue;
            }
            let vals = row
                .split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: idx + 1,
                        msg: format!("bad distance {c:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(Error::Format("distance matrix file is empty".into()));
        }
        let n = rows.len();
        if n > 1 && rows.iter().all(|r| r.len() == n) {
            return Self::from_full(n, rows.concat());
        }
        if !rows[0].is_empty() {
            rows.insert(0, Vec::new());
        }
        Self::from_lower_triangle(&rows)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Argument(format!("scale factor {factor} must be positive")));
        }
        Ok(Self {
            n: self.n,
            data: self.data.iter().map(|d| d * factor).collect(),
        })
    }
}

/// Euclidean distances between all pairs of points.
pub fn pairwise_distances(cloud: &LabeledPointCloud) -> DistanceMatrix {
    let n = cloud.len();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let p = cloud.point(i);
        for j in (i + 1)..n {
            let q = cloud.point(j);
            let d = p
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    DistanceMatrix { n, data }
}

/// `min_x max_y d(x, y)`; above this scale the Rips complex is a cone.
pub fn enclosing_radius(dm: &DistanceMatrix) -> f64 {
    (0..dm.len())
        .map(|i| dm.row(i).iter().copied().fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// Truncation scale for the filtration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Use the enclosing radius; exact for dimensions 0 and 1.
    Auto,
    Value(f64),
}

impl Threshold {
    pub fn resolve(self, dm: &DistanceMatrix) -> Result<f64> {
        match self {
            Threshold::Auto => Ok(enclosing_radius(dm)),
            Threshold::Value(t) if t >= 0.0 && !t.is_nan() => Ok(t),
            Threshold::Value(t) => Err(Error::Argument(format!("threshold {t} must be >= 0"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub len: f64,
    pub a: u32,
    pub b: u32,
}

fn filtration_order(x: &Edge, y: &Edge) -> Ordering {
    x.len.total_cmp(&y.len).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b))
}

/// Edges no longer than the threshold, in filtration order.
#[derive(Debug, Clone)]
pub struct Filtration {
    pub threshold: f64,
    pub edges: Vec<Edge>,
}

impl Filtration {
    pub fn build(dm: &DistanceMatrix, threshold: f64) -> Self {
        let n = dm.len();
        let mut edges = Vec::new();
        for a in 0..n {
            let row = dm.row(a);
            for (b, &len) in row.iter().enumerate().skip(a + 1) {
                if len <= threshold {
                    edges.push(Edge {
                        len,
                        a: a as u32,
                        b: b as u32,
                    });
                }
            }
        }
        edges.sort_unstable_by(filtration_order);
        Self { threshold, edges }
    }
}

struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra as usize].cmp(&self.rank[rb as usize]) {
            Ordering::Less => self.parent[ra as usize] = rb,
            Ordering::Greater => self.parent[rb as usize] = ra,
            Ordering::Equal => {
                self.parent[rb as usize] = ra;
                self.rank[ra as usize] += 1;
            }
        }
        true
    }
}

/// Multiplicative hasher for `u64` triangle keys.
#[derive(Default)]
struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0.rotate_left(5) ^ b as u64).wrapping_mul(0x517c_c1b7_2722_0a95);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = (v ^ (v >> 29)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
}

type KeyMap<V> = HashMap<u64, V, BuildHasherDefault<KeyHasher>>;

/// A triangle in the heap; `key` encodes the sorted vertex triple lexicographically.
#[derive(Debug, Clone, Copy)]
struct Cofacet {
    diam: f64,
    key: u64,
}

impl PartialEq for Cofacet {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Cofacet {}

impl Ord for Cofacet {
    // reversed so that BinaryHeap pops the earliest triangle first
    fn cmp(&self, other: &Self) -> Ordering {
        other.diam.total_cmp(&self.diam).then(other.key.cmp(&self.key))
    }
}

impl PartialOrd for Cofacet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct CoboundaryReducer<'a> {
    dm: &'a DistanceMatrix,
    edges: &'a [Edge],
    threshold: f64,
    n: u64,
}

impl CoboundaryReducer<'_> {
    #[inline]
    fn key(&self, mut v: [u32; 3]) -> u64 {
        v.sort_unstable();
        (v[0] as u64 * self.n + v[1] as u64) * self.n + v[2] as u64
    }

    /// Earliest cofacet of `e` if it enters together with `e`.
    fn simultaneous_cofacet(&self, e: &Edge) -> Option<Cofacet> {
        let (ra, rb) = (self.dm.row(e.a as usize), self.dm.row(e.b as usize));
        // with a < b fixed, the triple key grows with the third vertex
        (0..self.n as usize)
            .find(|&v| v as u32 != e.a && v as u32 != e.b && ra[v] <= e.len && rb[v] <= e.len)
            .map(|v| Cofacet {
                diam: e.len,
                key: self.key([e.a, e.b, v as u32]),
            })
    }

    fn push_cofacets(&self, e: &Edge, heap: &mut BinaryHeap<Cofacet>) {
        let (ra, rb) = (self.dm.row(e.a as usize), self.dm.row(e.b as usize));
        for v in 0..self.n as usize {
            if v as u32 == e.a || v as u32 == e.b {
                continue;
            }
            let diam = e.len.max(ra[v]).max(rb[v]);
            if diam <= self.threshold {
                heap.push(Cofacet {
                    diam,
                    key: self.key([e.a, e.b, v as u32]),
                });
            }
        }
    }
}

/// Earliest surviving entry of a Z/2 heap column; the entry stays in the heap.
fn pivot(heap: &mut BinaryHeap<Cofacet>) -> Option<Cofacet> {
    loop {
        let top = heap.pop()?;
        if heap.peek() == Some(&top) {
            heap.pop();
            continue;
        }
        heap.push(top);
        return Some(top);
    }
}

fn reduce_mod2(cols: &mut Vec<u32>) {
    cols.sort_unstable();
    let mut out = Vec::with_capacity(cols.len());
    let mut i = 0;
    while i < cols.len() {
        let mut j = i;
        while j < cols.len() && cols[j] == cols[i] {
            j += 1;
        }
        if (j - i) % 2 == 1 {
            out.push(cols[i]);
        }
        i = j;
    }
    *cols = out;
}

fn h1_features(dm: &DistanceMatrix, filtration: &Filtration, cleared: &[bool], out: &mut Vec<Feature>) {
    let reducer = CoboundaryReducer {
        dm,
        edges: &filtration.edges,
        threshold: filtration.threshold,
        n: dm.len() as u64,
    };
    let mut pivots: KeyMap<u32> = KeyMap::default();
    let mut reduction: HashMap<u32, Vec<u32>> = HashMap::new();
    let mut heap = BinaryHeap::new();

    for idx in (0..reducer.edges.len()).rev() {
        if cleared[idx] {
            continue;
        }
        let edge = reducer.edges[idx];
        if let Some(c) = reducer.simultaneous_cofacet(&edge) {
            if let std::collections::hash_map::Entry::Vacant(slot) = pivots.entry(c.key) {
                // zero-persistence pair
                slot.insert(idx as u32);
                continue;
            }
        }

        heap.clear();
        let mut column = vec![idx as u32];
        reducer.push_cofacets(&edge, &mut heap);
        loop {
            match pivot(&mut heap) {
                None => {
                    out.push(Feature::new(1, edge.len, f64::INFINITY));
                    break;
                }
                Some(p) => match pivots.get(&p.key) {
                    Some(&other) => {
                        let added = reduction
                            .get(&other)
                            .map_or_else(|| vec![other], Clone::clone);
                        for e in added {
                            column.push(e);
                            reducer.push_cofacets(&reducer.edges[e as usize], &mut heap);
                        }
                    }
                    None => {
                        pivots.insert(p.key, idx as u32);
                        if p.diam > edge.len {
                            out.push(Feature::new(1, edge.len, p.diam));
                        }
                        reduce_mod2(&mut column);
                        if column.len() > 1 {
                            reduction.insert(idx as u32, column);
                        }
                        break;
                    }
                },
            }
        }
    }
}

/// Persistence diagram of the Rips filtration of `dm`, up to `max_hom_dim` (0 or 1).
///
/// Features with zero persistence are omitted. Classes still alive at the
/// threshold are reported with infinite death; with [`Threshold::Auto`]
/// that is exactly one class in dimension 0.
pub fn vr_persistence(dm: &DistanceMatrix, max_hom_dim: u8, threshold: Threshold) -> Result<PersistenceDiagram> {
    if max_hom_dim > 1 {
        return Err(Error::Argument(format!(
            "homology dimension {max_hom_dim} not supported (max 1)"
        )));
    }
    let threshold = threshold.resolve(dm)?;
    let filtration = Filtration::build(dm, threshold);
    let n = dm.len();

    let mut features = Vec::new();
    let mut uf = UnionFind::new(n);
    let mut cleared = vec![false; filtration.edges.len()];
    let mut components = n;
    for (idx, e) in filtration.edges.iter().enumerate() {
        if uf.union(e.a, e.b) {
            cleared[idx] = true;
            components -= 1;
            if e.len > 0.0 {
                features.push(Feature::new(0, 0.0, e.len));
            }
        }
    }
    features.extend((0..components).map(|_| Feature::new(0, 0.0, f64::INFINITY)));

    if max_hom_dim == 1 && n >= 3 {
        h1_features(dm, &filtration, &cleared, &mut features);
    }
    Ok(PersistenceDiagram::from_unchecked(features).canonical())
}
