//! Mapper graphs over a point cloud.
//!
//! A scalar filter (by default the ℓ²-norm of each point) is covered by
//! uniformly spaced overlapping intervals; the preimage of every interval is
//! clustered with DBSCAN and each cluster becomes a node. Two nodes are joined
//! when they share points. Points that DBSCAN labels as noise in every
//! interval belong to no node and are only counted.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::LabeledPointCloud;

/// Default number of cover intervals.
pub const DEFAULT_NUM_INTERVALS: usize = 40;
/// Default fraction of an interval shared with each neighbour.
pub const DEFAULT_OVERLAP: f64 = 0.25;
/// Default DBSCAN density threshold; also the `k` of the elbow heuristic.
pub const DEFAULT_MIN_SAMPLES: usize = 5;

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Euclidean norm of every point.
pub fn l2_filter(cloud: &LabeledPointCloud) -> Vec<f64> {
    cloud
        .points()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Scalar lens applied to the cloud before covering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterSpec {
    #[default]
    L2Norm,
    /// The value of one coordinate (a "height" function).
    Coordinate(usize),
}

impl FilterSpec {
    pub fn apply(self, cloud: &LabeledPointCloud) -> Result<Vec<f64>> {
        match self {
            FilterSpec::L2Norm => Ok(l2_filter(cloud)),
            FilterSpec::Coordinate(k) if k < cloud.dim() => Ok(cloud.points().map(|p| p[k]).collect()),
            FilterSpec::Coordinate(k) => Err(Error::Argument(format!(
                "filter coordinate {k} out of range for dimension {}",
                cloud.dim()
            ))),
        }
    }

    pub fn name(self) -> String {
        match self {
            FilterSpec::L2Norm => "l2".into(),
            FilterSpec::Coordinate(k) => format!("coord:{k}"),
        }
    }

    /// Parses `l2` or `coord:<k>`.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "l2" => Ok(FilterSpec::L2Norm),
            other => other
                .strip_prefix("coord:")
                .and_then(|k| k.parse().ok())
                .map(FilterSpec::Coordinate)
                .ok_or_else(|| Error::Argument(format!("unknown filter {other:?}; use l2 or coord:<k>"))),
        }
    }
}

/// Ordered, overlapping intervals covering the filter range.
#[derive(Debug, Clone, PartialEq)]
pub struct Cover1D {
    intervals: Vec<(f64, f64)>,
    overlap: f64,
}

impl Cover1D {
    pub fn new(intervals: Vec<(f64, f64)>, overlap: f64) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Argument("cover needs at least one interval".into()));
        }
        if let Some(bad) = intervals.iter().find(|(lo, hi)| lo.partial_cmp(hi) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::Argument(format!("interval {bad:?} is empty")));
        }
        Ok(Self { intervals, overlap })
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn num_intervals(&self) -> usize {
        self.intervals.len()
    }

    pub fn overlap(&self) -> f64 {
        self.overlap
    }

    /// Indices of the intervals containing `value`.
    ///
    /// Intervals are half-open `[lo, hi)` except the last, which is closed.
    /// A value that rounding drops between two intervals goes to the one with
    /// the nearest center.
    pub fn containing(&self, value: f64) -> Vec<usize> {
        let last = self.intervals.len() - 1;
        let hits: Vec<usize> = self
            .intervals
            .iter()
            .enumerate()
            .filter(|&(i, &(lo, hi))| lo <= value && (value < hi || (i == last && value <= hi)))
            .map(|(i, _)| i)
            .collect();
        if !hits.is_empty() {
            return hits;
        }
        let nearest = self
            .intervals
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = ((a.0 + a.1) / 2.0 - value).abs();
                let db = ((b.0 + b.1) / 2.0 - value).abs();
                da.total_cmp(&db)
            })
            .map(|(i, _)| i)
            .expect("cover is non-empty");
        vec![nearest]
    }
}

/// `n` equal-length intervals over `[fmin, fmax]`; neighbours share a fraction
/// `p` of their length.
///
/// With base width `b = (fmax − fmin) / n`, interval `i` is centered at
/// `fmin + (i + ½)·b` and has length `b / (1 − p)`. A degenerate range yields
/// the single interval `[fmin − ½, fmin + ½]`.
pub fn uniform_cover(fmin: f64, fmax: f64, n: usize, p: f64) -> Result<Cover1D> {
    if !(fmin.is_finite() && fmax.is_finite()) || fmin > fmax {
        return Err(Error::Argument(format!("invalid filter range [{fmin}, {fmax}]")));
    }
    if n == 0 {
        return Err(Error::Argument("number of intervals must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Argument(format!("overlap {p} must lie in [0, 1)")));
    }
    if fmin == fmax {
        return Cover1D::new(vec![(fmin - 0.5, fmin + 0.5)], p);
    }
    let base = (fmax - fmin) / n as f64;
    let half = base / (1.0 - p) / 2.0;
    let intervals = (0..n)
        .map(|i| {
            let center = fmin + (i as f64 + 0.5) * base;
            (center - half, center + half)
        })
        .collect();
    Cover1D::new(intervals, p)
}

/// DBSCAN labels: cluster ids from 0, noise as `-1`.
///
/// A point is core when its closed `eps`-ball (itself included) holds at
/// least `min_samples` points. Clusters are the connected components of core
/// points, numbered in order of their lowest index. A border point joins the
/// cluster of its lowest-indexed core neighbour.
pub fn dbscan(points: &[&[f64]], eps: f64, min_samples: usize) -> Result<Vec<i64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Argument(format!("eps must be positive, got {eps}")));
    }
    if min_samples == 0 {
        return Err(Error::Argument("min_samples must be >= 1".into()));
    }
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| euclidean(points[i], points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_samples).collect();

    let mut labels = vec![-1i64; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for seed in 0..n {
        if !core[seed] || labels[seed] >= 0 {
            continue;
        }
        labels[seed] = next;
        stack.push(seed);
        while let Some(p) = stack.pop() {
            for &q in &neighbours[p] {
                if core[q] && labels[q] < 0 {
                    labels[q] = next;
                    stack.push(q);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if !core[i] {
            if let Some(&c) = neighbours[i].iter().find(|&&j| core[j]) {
                labels[i] = labels[c];
            }
        }
    }
    Ok(labels)
}

/// Distance from every point to its `k`-th nearest other point.
pub fn kth_neighbor_distances(cloud: &LabeledPointCloud, k: usize) -> Result<Vec<f64>> {
    let n = cloud.len();
    if k == 0 || n <= k {
        return Err(Error::Argument(format!("need more than k = {k} points, have {n}")));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let p = cloud.point(i);
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| euclidean(p, cloud.point(j))).collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

/// Index of the point of `curve` farthest from the chord joining its ends;
/// the first index wins ties.
pub fn elbow_index(curve: &[f64]) -> usize {
    let Some(&last) = curve.last() else {
        return 0;
    };
    let first = curve[0];
    let dx = (curve.len() - 1) as f64;
    let dy = last - first;
    // proportional to the perpendicular distance; the chord length is constant
    let mut best = (0, 0.0);
    for (i, &y) in curve.iter().enumerate() {
        let d = (dx * (first - y) + i as f64 * dy).abs();
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// DBSCAN `eps` from the elbow of the sorted `k`-th nearest-neighbour curve.
pub fn elbow_eps(cloud: &LabeledPointCloud, k: usize) -> Result<f64> {
    let mut curve = kth_neighbor_distances(cloud, k)?;
    curve.sort_unstable_by(f64::total_cmp);
    Ok(curve[elbow_index(&curve)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperNode {
    pub id: usize,
    pub interval: usize,
    /// Sorted indices into the cloud.
    pub members: Vec<usize>,
    pub labels: BTreeMap<u32, usize>,
    pub avg_filter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapperEdge {
    pub a: usize,
    pub b: usize,
    /// Number of shared points.
    pub w: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapperGraph {
    pub nodes: Vec<MapperNode>,
    pub edges: Vec<MapperEdge>,
    /// Points that belong to no node.
    pub noise_count: usize,
}

impl MapperGraph {
    /// Number of connected components (isolated nodes included).
    pub fn num_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn root(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut count = self.nodes.len();
        for e in &self.edges {
            let (ra, rb) = (root(&mut parent, e.a), root(&mut parent, e.b));
            if ra != rb {
                parent[ra] = rb;
                count -= 1;
            }
        }
        count
    }

    /// Rank of the cycle space, `|E| − |V| + #components`.
    pub fn cycle_rank(&self) -> usize {
        self.edges.len() + self.num_components() - self.nodes.len()
    }
}

/// Builds the mapper graph for precomputed filter values and a cover.
pub fn mapper_graph(
    cloud: &LabeledPointCloud,
    filter_values: &[f64],
    cover: &Cover1D,
    eps: f64,
    min_samples: usize,
) -> Result<MapperGraph> {
    let n = cloud.len();
    if filter_values.len() != n {
        return Err(Error::Argument(format!(
            "{} filter values for {n} points",
            filter_values.len()
        )));
    }
    if filter_values.iter().any(|f| !f.is_finite()) {
        return Err(Error::Argument("filter values must be finite".into()));
    }
    let mut preimages = vec![Vec::new(); cover.num_intervals()];
    for (i, &f) in filter_values.iter().enumerate() {
        for k in cover.containing(f) {
            preimages[k].push(i);
        }
    }

    let clustered: Vec<Vec<Vec<usize>>> = preimages
        .par_iter()
        .map(|members| {
            if members.is_empty() {
                return Ok(Vec::new());
            }
            let pts: Vec<&[f64]> = members.iter().map(|&i| cloud.point(i)).collect();
            let labels = dbscan(&pts, eps, min_samples)?;
            let count = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
            let mut clusters = vec![Vec::new(); count];
            for (&idx, &lab) in members.iter().zip(&labels) {
                if lab >= 0 {
                    clusters[lab as usize].push(idx);
                }
            }
            clusters.sort_by_key(|c| c[0]);
            Ok(clusters)
        })
        .collect::<Result<_>>()?;

    let mut nodes = Vec::new();
    let mut containing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (interval, clusters) in clustered.into_iter().enumerate() {
        for members in clusters {
            let id = nodes.len();
            let mut labels = BTreeMap::new();
            for &m in &members {
                *labels.entry(cloud.labels()[m]).or_insert(0) += 1;
                containing[m].push(id);
            }
            let avg_filter = members.iter().map(|&m| filter_values[m]).sum::<f64>() / members.len() as f64;
            nodes.push(MapperNode {
                id,
                interval,
                members,
                labels,
                avg_filter,
            });
        }
    }

    let mut weights: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for ids in &containing {
        for (x, &a) in ids.iter().enumerate() {
            for &b in &ids[x + 1..] {
                *weights.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    let edges = weights.into_iter().map(|((a, b), w)| MapperEdge { a, b, w }).collect();
    let noise_count = containing.iter().filter(|c| c.is_empty()).count();
    Ok(MapperGraph {
        nodes,
        edges,
        noise_count,
    })
}

/// How DBSCAN's `eps` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsChoice {
    /// Elbow of the `min_samples`-th nearest-neighbour curve.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapperParams {
    pub num_intervals: usize,
    pub overlap: f64,
    pub eps: EpsChoice,
    pub min_samples: usize,
    pub filter: FilterSpec,
}

impl Default for MapperParams {
    fn default() -> Self {
        Self {
            num_intervals: DEFAULT_NUM_INTERVALS,
            overlap: DEFAULT_OVERLAP,
            eps: EpsChoice::Auto,
            min_samples: DEFAULT_MIN_SAMPLES,
            filter: FilterSpec::L2Norm,
        }
    }
}

/// Parameter echo stored with every serialized graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    pub num_intervals: usize,
    pub overlap: f64,
    pub eps: f64,
    pub eps_auto: bool,
    pub min_samples: usize,
    pub filter: String,
    pub num_points: usize,
}

/// The JSON document for a mapper graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub params: ParamsEcho,
    pub noise_count: usize,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<MapperEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub interval: usize,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<usize>>,
    pub labels: BTreeMap<u32, usize>,
    pub avg_filter: f64,
}

impl GraphDocument {
    pub fn new(graph: &MapperGraph, params: ParamsEcho, include_members: bool) -> Self {
        let nodes = graph
            .nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                interval: n.interval,
                size: n.members.len(),
                members: include_members.then(|| n.members.clone()),
                labels: n.labels.clone(),
                avg_filter: n.avg_filter,
            })
            .collect();
        Self {
            params,
            noise_count: graph.noise_count,
            nodes,
            edges: graph.edges.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid graph JSON: {e}")))
    }

    /// Rebuilds the in-memory graph; needs member lists.
    pub fn to_graph(&self) -> Result<MapperGraph> {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(pos, n)| {
                let members = n
                    .members
                    .clone()
                    .ok_or_else(|| Error::Argument(format!("node {} has no member list", n.id)))?;
                if n.id != pos || members.is_empty() || members.len() != n.size {
                    return Err(Error::Validation(format!("node {} is inconsistent", n.id)));
                }
                Ok(MapperNode {
                    id: n.id,
                    interval: n.interval,
                    members,
                    labels: n.labels.clone(),
                    avg_filter: n.avg_filter,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(e) = self.edges.iter().find(|e| e.a >= nodes.len() || e.b >= nodes.len()) {
            return Err(Error::Validation(format!("edge {e:?} references a missing node")));
        }
        Ok(MapperGraph {
            nodes,
            edges: self.edges.clone(),
            noise_count: self.noise_count,
        })
    }
}

/// Filter, cover, cluster and serialize in one step; the single code path
/// behind both the CLI and the HTTP service.
pub fn run_mapper(cloud: &LabeledPointCloud, params: &MapperParams) -> Result<(MapperGraph, ParamsEcho)> {
    if params.min_samples == 0 {
        return Err(Error::Argument("min_samples must be >= 1".into()));
    }
    let eps = match params.eps {
        EpsChoice::Auto => elbow_eps(cloud, params.min_samples)?,
        EpsChoice::Value(e) if e > 0.0 && e.is_finite() => e,
        EpsChoice::Value(e) => return Err(Error::Argument(format!("eps must be positive, got {e}"))),
    };
    if eps <= 0.0 {
        return Err(Error::Validation(
            "elbow heuristic produced eps = 0 (duplicate points); pass an explicit eps".into(),
        ));
    }
    let filter_values = params.filter.apply(cloud)?;
    let (lo, hi) = filter_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cover = uniform_cover(lo, hi, params.num_intervals, params.overlap)?;
    let graph = mapper_graph(cloud, &filter_values, &cover, eps, params.min_samples)?;
    let echo = ParamsEcho {
        num_intervals: params.num_intervals,
        overlap: params.overlap,
        eps,
        eps_auto: params.eps == EpsChoice::Auto,
        min_samples: params.min_samples,
        filter: params.filter.name(),
        num_points: cloud.len(),
    };
    Ok((graph, echo))
}
