//! Slow, obviously-correct reference implementations used as test oracles.
//! Nothing here shares code with the library.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, HashMap};

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn dist_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| points.iter().map(|q| dist(p, q)).collect())
        .collect()
}

pub fn enclosing_radius(d: &[Vec<f64>]) -> f64 {
    d.iter()
        .map(|row| row.iter().cloned().fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        x = parent[x];
    }
    x
}

/// Kruskal: the weights of a minimum spanning forest, ascending.
pub fn mst_weights(d: &[Vec<f64>]) -> Vec<f64> {
    let n = d.len();
    let mut edges = vec![];
    for i in 0..n {
        for j in i + 1..n {
            edges.push((d[i][j], i, j));
        }
    }
    edges.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut parent: Vec<usize> = (0..n).collect();
    let mut out = vec![];
    for (w, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            out.push(w);
        }
    }
    out
}

/// Rips persistence in dimensions 0 and 1 by reducing the full boundary
/// matrix of the 2-skeleton over Z/2. Returns sorted `(dim, birth, death)`
/// with zero-length bars dropped and unpaired classes at infinity.
pub fn naive_rips(d: &[Vec<f64>], threshold: f64) -> Vec<(u8, f64, f64)> {
    let n = d.len();
    // (value, dim, vertices)
    let mut simplices: Vec<(f64, usize, Vec<usize>)> = (0..n).map(|i| (0.0, 0, vec![i])).collect();
    for i in 0..n {
        for j in i + 1..n {
            if d[i][j] <= threshold {
                simplices.push((d[i][j], 1, vec![i, j]));
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let v = d[i][j].max(d[i][k]).max(d[j][k]);
                if v <= threshold {
                    simplices.push((v, 2, vec![i, j, k]));
                }
            }
        }
    }
    simplices.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let index: HashMap<Vec<usize>, usize> = simplices.iter().enumerate().map(|(i, s)| (s.2.clone(), i)).collect();

    let mut columns: Vec<Vec<usize>> = simplices
        .iter()
        .map(|(_, dim, verts)| {
            if *dim == 0 {
                return vec![];
            }
            let mut col: Vec<usize> = (0..verts.len())
                .map(|skip| {
                    let face: Vec<usize> = verts.iter().enumerate().filter(|&(p, _)| p != skip).map(|(_, &v)| v).collect();
                    index[&face]
                })
                .collect();
            col.sort_unstable();
            col
        })
        .collect();

    let mut low_owner: HashMap<usize, usize> = HashMap::new();
    let mut paired = vec![false; simplices.len()];
    let mut out = vec![];
    for j in 0..columns.len() {
        while let Some(&low) = columns[j].last() {
            match low_owner.get(&low) {
                Some(&k) => {
                    let other = columns[k].clone();
                    columns[j] = symmetric_difference(&columns[j], &other);
                }
                None => break,
            }
        }
        if let Some(&low) = columns[j].last() {
            low_owner.insert(low, j);
            paired[low] = true;
            paired[j] = true;
            let (birth, death) = (simplices[low].0, simplices[j].0);
            if death > birth {
                out.push((simplices[low].1 as u8, birth, death));
            }
        }
    }
    for (i, s) in simplices.iter().enumerate() {
        if !paired[i] && s.1 < 2 {
            out.push((s.1 as u8, s.0, f64::INFINITY));
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = vec![];
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    out
}

/// DBSCAN by definition: cores are points with at least `min_samples`
/// points (self included) within `eps`; clusters are the connected
/// components of cores under eps-adjacency; a non-core point within `eps`
/// of a core joins the cluster of its lowest-index core neighbour.
/// Returns `None` for noise and a cluster key otherwise.
pub fn naive_dbscan(points: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let near = |i: usize, j: usize| dist(&points[i], &points[j]) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_samples).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && near(i, j) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                Some(find(&mut parent, i))
            } else {
                (0..n).find(|&j| core[j] && near(i, j)).map(|j| find(&mut parent, j))
            }
        })
        .collect()
}

/// True when two labelings induce the same partition and the same noise set.
pub fn same_partition(a: &[Option<usize>], b: &[i64]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd: BTreeMap<usize, i64> = BTreeMap::new();
    let mut back: BTreeMap<i64, usize> = BTreeMap::new();
    for (x, &y) in a.iter().zip(b) {
        match x {
            None if y < 0 => {}
            None => return false,
            Some(_) if y < 0 => return false,
            Some(x) => {
                if *fwd.entry(*x).or_insert(y) != y || *back.entry(y).or_insert(*x) != *x {
                    return false;
                }
            }
        }
    }
    true
}

/// One-dimensional W1 between equal-size samples, by sorting.
pub fn w1_sorted(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum()
}

/// Sliced Wasserstein by the textbook construction, written independently.
pub fn sliced_wasserstein(d1: &[(f64, f64)], d2: &[(f64, f64)], slices: usize) -> f64 {
    let proj = |&(b, d): &(f64, f64)| ((b + d) / 2.0, (b + d) / 2.0);
    let mut u: Vec<(f64, f64)> = d1.to_vec();
    u.extend(d2.iter().map(proj));
    let mut v: Vec<(f64, f64)> = d2.to_vec();
    v.extend(d1.iter().map(proj));
    let mut acc = 0.0;
    for m in 0..slices {
        let theta = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * (m as f64 + 0.5) / slices as f64;
        let dir = (theta.cos(), theta.sin());
        let pu = u.iter().map(|p| p.0 * dir.0 + p.1 * dir.1).collect();
        let pv = v.iter().map(|p| p.0 * dir.0 + p.1 * dir.1).collect();
        acc += w1_sorted(pu, pv);
    }
    acc / slices as f64
}

/// Indices of the `k` largest values, ties to the lower index.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Brute-force receptive field: follow one output pixel back through each
/// layer as an index interval. Agrees with centre-based bookkeeping for odd
/// kernels only.
pub fn receptive_interval(layers: &[(usize, usize, usize)], pos: usize, input: usize) -> (usize, usize) {
    let (mut lo, mut hi) = (pos as i64, pos as i64);
    for &(k, s, p) in layers.iter().rev() {
        lo = lo * s as i64 - p as i64;
        hi = hi * s as i64 - p as i64 + k as i64 - 1;
    }
    (lo.max(0) as usize, hi.min(input as i64 - 1) as usize)
}
