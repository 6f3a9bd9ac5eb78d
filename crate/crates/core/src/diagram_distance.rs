//! Sliced Wasserstein distance between persistence diagrams, and the layer
//! comparison harnesses built on it: distance heatmaps, their variation
//! across batches, the seed-specificity correlation and the
//! principal-component sensitivity curve.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::persistence::{pairwise_distances, vr_persistence, Threshold};
use crate::tensor_io::{Feature, LabeledPointCloud, PersistenceDiagram};

/// What to do with infinite-death features before comparing diagrams.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EssentialPolicy {
    #[default]
    Drop,
    /// Replace an infinite death by this value (features born at or after it are dropped).
    CapAt(f64),
}

/// Which homological dimensions take part in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DimSelection {
    H0,
    H1,
    /// Each dimension compared separately, distances summed.
    #[default]
    Both,
}

impl DimSelection {
    pub fn dims(self) -> &'static [u8] {
        match self {
            DimSelection::H0 => &[0],
            DimSelection::H1 => &[1],
            DimSelection::Both => &[0, 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwConfig {
    pub num_slices: usize,
    pub essential: EssentialPolicy,
    pub dims: DimSelection,
}

impl Default for SwConfig {
    fn default() -> Self {
        Self {
            num_slices: 50,
            essential: EssentialPolicy::Drop,
            dims: DimSelection::Both,
        }
    }
}

impl SwConfig {
    pub fn with_dims(mut self, dims: DimSelection) -> Self {
        self.dims = dims;
        self
    }

    pub fn with_slices(mut self, num_slices: usize) -> Self {
        self.num_slices = num_slices;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.num_slices == 0 {
            return Err(Error::Argument("number of slices must be >= 1".into()));
        }
        Ok(())
    }
}

/// Maps every feature to its nearest point on the diagonal.
pub fn diagonal_projection(diagram: &PersistenceDiagram) -> Result<PersistenceDiagram> {
    diagram
        .features()
        .iter()
        .map(|f| {
            if f.is_essential() {
                return Err(Error::Argument("cannot project an essential feature".into()));
            }
            let mid = (f.birth + f.death) / 2.0;
            Ok(Feature::new(f.dim, mid, mid))
        })
        .collect::<Result<Vec<_>>>()
        .map(PersistenceDiagram::from_unchecked)
}

fn finite_pairs(diagram: &PersistenceDiagram, dim: u8, policy: EssentialPolicy) -> Vec<(f64, f64)> {
    diagram
        .in_dim(dim)
        .filter_map(|f| match (f.is_essential(), policy) {
            (false, _) => Some((f.birth, f.death)),
            (true, EssentialPolicy::Drop) => None,
            (true, EssentialPolicy::CapAt(cap)) => (cap > f.birth).then_some((f.birth, cap)),
        })
        .collect()
}

/// Sliced Wasserstein distance between two finite point multisets in the plane.
pub fn sliced_wasserstein_pairs(d1: &[(f64, f64)], d2: &[(f64, f64)], num_slices: usize) -> f64 {
    let diag = |&(b, d): &(f64, f64)| {
        let m = (b + d) / 2.0;
        (m, m)
    };
    let lhs: Vec<(f64, f64)> = d1.iter().copied().chain(d2.iter().map(diag)).collect();
    let rhs: Vec<(f64, f64)> = d2.iter().copied().chain(d1.iter().map(diag)).collect();
    if lhs.is_empty() {
        return 0.0;
    }
    let mut pa = vec![0.0; lhs.len()];
    let mut pb = vec![0.0; rhs.len()];
    let mut total = 0.0;
    for m in 0..num_slices {
        let theta = -PI / 2.0 + (m as f64 + 0.5) * PI / num_slices as f64;
        let (s, c) = theta.sin_cos();
        for (dst, &(x, y)) in pa.iter_mut().zip(&lhs) {
            *dst = x * c + y * s;
        }
        for (dst, &(x, y)) in pb.iter_mut().zip(&rhs) {
            *dst = x * c + y * s;
        }
        pa.sort_unstable_by(f64::total_cmp);
        pb.sort_unstable_by(f64::total_cmp);
        total += pa.iter().zip(&pb).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    total / num_slices as f64
}

/// Sliced Wasserstein distance, summed over the configured homological dimensions.
pub fn sliced_wasserstein(d1: &PersistenceDiagram, d2: &PersistenceDiagram, cfg: &SwConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(cfg
        .dims
        .dims()
        .iter()
        .map(|&dim| {
            sliced_wasserstein_pairs(
                &finite_pairs(d1, dim, cfg.essential),
                &finite_pairs(d2, dim, cfg.essential),
                cfg.num_slices,
            )
        })
        .sum())
}

/// Square matrix of floats, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Argument("matrix rows must have length equal to the row count".into()));
        }
        Ok(Self {
            n,
            values: rows.concat(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Layer-by-layer distance matrix; symmetric with zero diagonal.
pub type LayerDistanceMatrix = SquareMatrix;

/// CSV with a header row and a leading name column.
pub fn format_matrix_csv(matrix: &SquareMatrix, names: &[String]) -> Result<String> {
    if names.len() != matrix.size() {
        return Err(Error::Argument(format!(
            "{} names for a {}x{} matrix",
            names.len(),
            matrix.size(),
            matrix.size()
        )));
    }
    let mut out = String::from("layer");
    for name in names {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for (i, name) in names.iter().enumerate() {
        out.push_str(name);
        for v in matrix.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Reads back what [`format_matrix_csv`] writes: names and the matrix.
pub fn parse_matrix_csv(text: &str) -> Result<(Vec<String>, SquareMatrix)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Format("empty matrix file".into()))?;
    let names: Vec<String> = header.split(',').skip(1).map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::with_capacity(names.len());
    for (idx, line) in lines {
        let mut cells = line.split(',');
        let name = cells.next().unwrap_or_default().trim();
        if rows.len() >= names.len() || name != names[rows.len()] {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("unexpected row {name:?}"),
            });
        }
        let row = cells
            .map(|c| {
                c.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: format!("{c:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.len() != names.len() {
        return Err(Error::Format(format!("{} rows for {} columns", rows.len(), names.len())));
    }
    let matrix = SquareMatrix::from_rows(&rows).map_err(|e| Error::Format(e.to_string()))?;
    Ok((names, matrix))
}

/// Pairwise sliced Wasserstein distances between per-layer diagrams.
pub fn layer_distance_matrix(diagrams: &[PersistenceDiagram], cfg: &SwConfig) -> Result<LayerDistanceMatrix> {
    cfg.validate()?;
    let n = diagrams.len();
    if n == 0 {
        return Err(Error::Argument("need at least one diagram".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| sliced_wasserstein(&diagrams[i], &diagrams[j], cfg))
        .collect::<Result<_>>()?;
    let mut m = SquareMatrix::zeros(n);
    for (&(i, j), d) in pairs.iter().zip(dists) {
        m.set(i, j, d);
        m.set(j, i, d);
    }
    Ok(m)
}

/// Entrywise coefficient of variation (population std / mean) across batches.
/// Entries whose mean is zero are reported as zero.
pub fn batch_cv(matrices: &[SquareMatrix]) -> Result<SquareMatrix> {
    if matrices.len() < 2 {
        return Err(Error::Argument("need at least two matrices".into()));
    }
    let n = matrices[0].size();
    if matrices.iter().any(|m| m.size() != n) {
        return Err(Error::Argument("matrices differ in size".into()));
    }
    let count = matrices.len() as f64;
    let mut out = SquareMatrix::zeros(n);
    for k in 0..n * n {
        let first = matrices[0].values[k];
        // constant cells are exactly 0 (a rounded mean would leave residue)
        if matrices.iter().all(|m| m.values[k] == first) {
            continue;
        }
        let mean = matrices.iter().map(|m| m.values[k]).sum::<f64>() / count;
        if mean == 0.0 {
            continue;
        }
        let var = matrices.iter().map(|m| (m.values[k] - mean).powi(2)).sum::<f64>() / count;
        out.values[k] = var.sqrt() / mean;
    }
    Ok(out)
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "pearson needs equal-length inputs");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    // sqrt(s * s) == s in IEEE arithmetic, so identical inputs give exactly 1
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecificityReport {
    pub per_layer: Vec<f64>,
    pub mean: f64,
}

/// Correlates, for every layer `ℓ`, model A's internal distances from layer
/// `ℓ` with the distances from model B's layer `ℓ` to the same A layers.
/// The self entry `j = ℓ` is left out of both rows.
pub fn specificity_correlation(
    model_a: &[PersistenceDiagram],
    model_b: &[PersistenceDiagram],
    cfg: &SwConfig,
) -> Result<SpecificityReport> {
    let l = model_a.len();
    if l < 3 || model_b.len() != l {
        return Err(Error::Argument(format!(
            "need equal layer counts >= 3, got {} and {}",
            l,
            model_b.len()
        )));
    }
    let internal = layer_distance_matrix(model_a, cfg)?;
    let cells: Vec<(usize, usize)> = (0..l).flat_map(|i| (0..l).map(move |j| (i, j))).collect();
    let cross_vals: Vec<f64> = cells
        .par_iter()
        .map(|&(b_layer, a_layer)| sliced_wasserstein(&model_b[b_layer], &model_a[a_layer], cfg))
        .collect::<Result<_>>()?;

    let mut per_layer = Vec::with_capacity(l);
    for layer in 0..l {
        let others = (0..l).filter(|&j| j != layer);
        let x: Vec<f64> = others.clone().map(|j| internal.get(layer, j)).collect();
        let y: Vec<f64> = others.map(|j| cross_vals[layer * l + j]).collect();
        let rho = pearson(&x, &y).ok_or_else(|| {
            Error::Validation(format!("correlation undefined for layer {layer}: constant distance row"))
        })?;
        per_layer.push(rho);
    }
    let mean = per_layer.iter().sum::<f64>() / l as f64;
    Ok(SpecificityReport { per_layer, mean })
}

/// Which principal components are deleted first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RemovalOrder {
    #[default]
    LeastVarianceFirst,
    GreatestVarianceFirst,
}

/// Deletes `num_removed` principal components from the cloud and maps it back
/// to the original coordinates (mean re-added).
pub fn pca_low_rank(cloud: &LabeledPointCloud, num_removed: usize, order: RemovalOrder) -> Result<LabeledPointCloud> {
    let (n, c) = (cloud.len(), cloud.dim());
    if num_removed > c {
        return Err(Error::Argument(format!(
            "cannot remove {num_removed} components from a {c}-dimensional cloud"
        )));
    }
    if num_removed == 0 {
        return Ok(cloud.clone());
    }
    let mut mean = vec![0.0; c];
    for p in cloud.points() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    if num_removed == c {
        return cloud.with_coords(mean.repeat(n));
    }

    let centered = DMatrix::from_fn(n, c, |i, k| cloud.point(i)[k] - mean[k]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut axes: Vec<usize> = (0..c).collect();
    axes.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    if order == RemovalOrder::GreatestVarianceFirst {
        axes.reverse();
    }
    let (removed, kept) = axes.split_at(num_removed);

    // work with whichever basis is smaller; both give the same projection
    let subtract = removed.len() <= kept.len();
    let basis = if subtract { removed } else { kept };
    let mut coords = Vec::with_capacity(n * c);
    for i in 0..n {
        let x = centered.row(i);
        let mut proj = vec![0.0; c];
        for &axis in basis {
            let v = eig.eigenvectors.column(axis);
            let coef: f64 = (0..c).map(|k| x[k] * v[k]).sum();
            for k in 0..c {
                proj[k] += coef * v[k];
            }
        }
        for k in 0..c {
            let local = if subtract { x[k] - proj[k] } else { proj[k] };
            coords.push(local + mean[k]);
        }
    }
    cloud.with_coords(coords)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityConfig {
    pub sw: SwConfig,
    pub order: RemovalOrder,
    pub max_hom_dim: u8,
    pub threshold: Threshold,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            sw: SwConfig::default(),
            order: RemovalOrder::default(),
            max_hom_dim: 1,
            threshold: Threshold::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityPoint {
    pub removed: usize,
    pub distance: f64,
    /// `Some(distance > baseline)` when a baseline was supplied.
    pub detectable: Option<bool>,
}

/// Distance between the cloud's diagram and the diagram of each of its
/// low-rank approximations, for `0..=dim` removed components.
pub fn sensitivity_curve(
    cloud: &LabeledPointCloud,
    cfg: &SensitivityConfig,
    baseline: Option<f64>,
) -> Result<Vec<SensitivityPoint>> {
    let reference = vr_persistence(&pairwise_distances(cloud), cfg.max_hom_dim, cfg.threshold)?;
    (0..=cloud.dim())
        .into_par_iter()
        .map(|r| {
            let reduced = pca_low_rank(cloud, r, cfg.order)?;
            let diagram = vr_persistence(&pairwise_distances(&reduced), cfg.max_hom_dim, cfg.threshold)?;
            let distance = sliced_wasserstein(&reference, &diagram, &cfg.sw)?;
            Ok(SensitivityPoint {
                removed: r,
                distance,
                detectable: baseline.map(|b| distance > b),
            })
        })
        .collect()
}

/// CSV `r,sw,detectable` (the flag column is empty without a baseline).
pub fn format_sensitivity_csv(curve: &[SensitivityPoint]) -> String {
    let mut out = String::from("r,sw,detectable\n");
    for p in curve {
        let flag = p.detectable.map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", p.removed, p.distance, flag);
    }
    out
}
