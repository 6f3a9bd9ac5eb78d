//! On-disk formats and the validated in-memory types they load into.
//!
//! * ATNS tensors: `ATNS`, version byte (1), dtype byte (1 = f32), ndim byte,
//!   `ndim` little-endian u32 dims, then a row-major little-endian f32 payload.
//! * Point clouds: comma-separated floats with an optional trailing integer
//!   label column and an optional leading `#` header row.
//! * Diagrams: CSV with header `dim,birth,death`; essential classes use `inf`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const ATNS_MAGIC: &[u8; 4] = b"ATNS";
pub const ATNS_VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;

const DIAGRAM_HEADER: &str = "dim,birth,death";

/// A `c × n × m` activation tensor for one image at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl ActivationTensor {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Validation(format!(
                "tensor dims must be positive, got ({channels}, {height}, {width})"
            )));
        }
        let expected = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Error::Validation("tensor dims overflow".into()))?;
        if values.len() != expected {
            return Err(Error::Corruption(format!(
                "expected {expected} values for dims ({channels}, {height}, {width}), got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at flat index {pos}",
                values[pos]
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Value at channel `ch`, spatial position (`row`, `col`). Panics when out of range.
    #[inline]
    pub fn at(&self, ch: usize, row: usize, col: usize) -> f32 {
        self.values[(ch * self.height + row) * self.width + col]
    }
}

/// An `N × dim` point cloud with a class label and source image per point.
///
/// Points are stored row-major in a flat buffer. `positions` records the
/// spatial position each point was sliced from, when the cloud came out of
/// the sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    dim: usize,
    coords: Vec<f64>,
    labels: Vec<u32>,
    image_ids: Vec<usize>,
    positions: Option<Vec<(usize, usize)>>,
}

impl LabeledPointCloud {
    pub fn new(dim: usize, coords: Vec<f64>, labels: Vec<u32>, image_ids: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("point dimension must be positive".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::Validation(format!(
                "coordinate buffer of length {} is not a multiple of dim {dim}",
                coords.len()
            )));
        }
        let n = coords.len() / dim;
        if n == 0 {
            return Err(Error::Validation("point cloud is empty".into()));
        }
        if labels.len() != n || image_ids.len() != n {
            return Err(Error::Validation(format!(
                "{n} points but {} labels and {} image ids",
                labels.len(),
                image_ids.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite coordinate in point {}",
                pos / dim
            )));
        }
        Ok(Self {
            dim,
            coords,
            labels,
            image_ids,
            positions: None,
        })
    }

    /// Builds a cloud from point rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u32>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Validation("rows have differing lengths".into()));
        }
        let image_ids = (0..rows.len()).collect();
        Self::new(dim, rows.concat(), labels, image_ids)
    }

    /// Unlabeled cloud (every label 0).
    pub fn unlabeled(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let n = coords.len().checked_div(dim).unwrap_or(0);
        Self::new(dim, coords, vec![0; n], (0..n).collect())
    }

    pub fn with_positions(mut self, positions: Vec<(usize, usize)>) -> Result<Self> {
        if positions.len() != self.len() {
            return Err(Error::Validation(format!(
                "{} positions for {} points",
                positions.len(),
                self.len()
            )));
        }
        self.positions = Some(positions);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn image_ids(&self) -> &[usize] {
        &self.image_ids
    }

    pub fn positions(&self) -> Option<&[(usize, usize)]> {
        self.positions.as_deref()
    }

    /// Same labels and provenance, new coordinates of the same shape.
    pub fn with_coords(&self, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != self.coords.len() {
            return Err(Error::Validation("replacement coordinates change the cloud shape".into()));
        }
        let mut out = Self::new(self.dim, coords, self.labels.clone(), self.image_ids.clone())?;
        out.positions = self.positions.clone();
        Ok(out)
    }

    /// Sub-cloud made of the given point indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        let mut out = Self::new(
            self.dim,
            coords,
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.image_ids[i]).collect(),
        )?;
        if let Some(pos) = &self.positions {
            out.positions = Some(indices.iter().map(|&i| pos[i]).collect());
        }
        Ok(out)
    }
}

/// One persistence feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub dim: u8,
    pub birth: f64,
    /// `f64::INFINITY` for essential classes.
    pub death: f64,
}

impl Feature {
    pub fn new(dim: u8, birth: f64, death: f64) -> Self {
        Self { dim, birth, death }
    }

    pub fn is_essential(&self) -> bool {
        self.death == f64::INFINITY
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    fn validate(&self) -> Result<()> {
        if self.dim > 1 {
            return Err(Error::Validation(format!("homological dimension {} unsupported", self.dim)));
        }
        if !self.birth.is_finite() || self.birth < 0.0 {
            return Err(Error::Validation(format!("birth {} must be finite and >= 0", self.birth)));
        }
        if self.death.is_nan() || (!self.is_essential() && self.death <= self.birth) {
            return Err(Error::Validation(format!(
                "death {} must exceed birth {}",
                self.death, self.birth
            )));
        }
        Ok(())
    }
}

/// A multiset of persistence features in dimensions 0 and 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PersistenceDiagram {
    features: Vec<Feature>,
}

impl PersistenceDiagram {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        for f in &features {
            f.validate()?;
        }
        Ok(Self { features })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Features of one homological dimension.
    pub fn in_dim(&self, dim: u8) -> impl Iterator<Item = &Feature> + '_ {
        self.features.iter().filter(move |f| f.dim == dim)
    }

    /// `(birth, death)` pairs of one dimension.
    pub fn pairs(&self, dim: u8) -> Vec<(f64, f64)> {
        self.in_dim(dim).map(|f| (f.birth, f.death)).collect()
    }

    /// Features sorted by `(dim, birth, death)`; equal multisets compare equal.
    pub fn canonical(&self) -> Self {
        let mut features = self.features.clone();
        features.sort_by(|a, b| {
            a.dim
                .cmp(&b.dim)
                .then(a.birth.total_cmp(&b.birth))
                .then(a.death.total_cmp(&b.death))
        });
        Self { features }
    }

    pub(crate) fn from_unchecked(features: Vec<Feature>) -> Self {
        Self { features }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decodes an ATNS byte buffer holding a 3-d float32 tensor.
pub fn decode_tensor(bytes: &[u8]) -> Result<ActivationTensor> {
    if bytes.len() < 7 || &bytes[..4] != ATNS_MAGIC {
        return Err(Error::Format("missing ATNS magic".into()));
    }
    if bytes[4] != ATNS_VERSION {
        return Err(Error::Format(format!("unsupported ATNS version {}", bytes[4])));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {}", bytes[5])));
    }
    let ndim = bytes[6] as usize;
    if ndim != 3 {
        return Err(Error::Format(format!("expected 3 dims (c, n, m), found {ndim}")));
    }
    let header_len = 7 + 4 * ndim;
    if bytes.len() < header_len {
        return Err(Error::Corruption("truncated dims header".into()));
    }
    let dims: Vec<usize> = bytes[7..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let payload = &bytes[header_len..];
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    match count.and_then(|c| c.checked_mul(4)) {
        Some(expected) if expected == payload.len() => {}
        _ => {
            return Err(Error::Corruption(format!(
                "dims {dims:?} disagree with a payload of {} bytes",
                payload.len()
            )))
        }
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    ActivationTensor::new(dims[0], dims[1], dims[2], values)
}

pub fn encode_tensor(tensor: &ActivationTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 12 + 4 * tensor.values.len());
    out.extend_from_slice(ATNS_MAGIC);
    out.push(ATNS_VERSION);
    out.push(DTYPE_F32);
    out.push(3);
    for d in [tensor.channels, tensor.height, tensor.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &tensor.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn load_tensor_file(path: impl AsRef<Path>) -> Result<ActivationTensor> {
    decode_tensor(&read_bytes(path.as_ref())?)
}

pub fn save_tensor_file(tensor: &ActivationTensor, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_tensor(tensor))
}

fn parse_f64(cell: &str, line: usize) -> Result<f64> {
    let cell = cell.trim();
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("not a number: {cell:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Validation(format!("non-finite value {cell:?} on line {line}")));
    }
    Ok(v)
}

/// Parses point-cloud CSV text. With `has_labels` the last column is the class id.
pub fn parse_point_cloud_csv(text: &str, has_labels: bool) -> Result<LabeledPointCloud> {
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    let mut arity = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() || (idx == 0 && row.starts_with('#')) {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        match arity {
            None => arity = Some(cells.len()),
            Some(a) if a != cells.len() => {
                return Err(Error::Format(format!(
                    "line {line} has {} columns, expected {a}",
                    cells.len()
                )))
            }
            _ => {}
        }
        let (values, label) = if has_labels {
            let (last, rest) = cells.split_last().expect("split yields at least one cell");
            let label: u32 = last.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("label {last:?} is not a non-negative integer"),
            })?;
            (rest, label)
        } else {
            (&cells[..], 0)
        };
        if values.is_empty() {
            return Err(Error::Format(format!("line {line} has no coordinate columns")));
        }
        for cell in values {
            coords.push(parse_f64(cell, line)?);
        }
        labels.push(label);
    }
    let Some(arity) = arity else {
        return Err(Error::Format("point cloud file has no data rows".into()));
    };
    let dim = if has_labels { arity - 1 } else { arity };
    let n = labels.len();
    LabeledPointCloud::new(dim, coords, labels, (0..n).collect())
}

pub fn load_point_cloud_csv(path: impl AsRef<Path>, has_labels: bool) -> Result<LabeledPointCloud> {
    parse_point_cloud_csv(&read_text(path.as_ref())?, has_labels)
}

/// Reads the `#` header row of a cloud file, if any, and reports whether its
/// last column is named `label`.
pub fn header_declares_labels(text: &str) -> Option<bool> {
    let first = text.lines().next()?.trim();
    let header = first.strip_prefix('#')?;
    Some(header.split(',').next_back().map(str::trim) == Some("label"))
}

pub fn format_point_cloud_csv(cloud: &LabeledPointCloud, with_labels: bool) -> String {
    let mut out = String::from("#");
    for k in 0..cloud.dim() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "x{k}");
    }
    if with_labels {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, p) in cloud.points().enumerate() {
        for (k, v) in p.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        if with_labels {
            let _ = write!(out, ",{}", cloud.labels()[i]);
        }
        out.push('\n');
    }
    out
}

pub fn save_point_cloud_csv(cloud: &LabeledPointCloud, path: impl AsRef<Path>, with_labels: bool) -> Result<()> {
    write_bytes(path.as_ref(), format_point_cloud_csv(cloud, with_labels).as_bytes())
}

/// Provenance sidecar: one `image_id,row,col` line per point.
pub fn format_provenance_csv(cloud: &LabeledPointCloud) -> Option<String> {
    let positions = cloud.positions()?;
    let mut out = String::from("image_id,row,col\n");
    for (id, (r, c)) in cloud.image_ids().iter().zip(positions) {
        let _ = writeln!(out, "{id},{r},{c}");
    }
    Some(out)
}

/// Attaches a provenance sidecar to a loaded cloud.
pub fn apply_provenance_csv(cloud: LabeledPointCloud, text: &str) -> Result<LabeledPointCloud> {
    let mut ids = Vec::new();
    let mut positions = Vec::new();
    for (idx, raw) in text.lines().enumerate().skip(1) {
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').map(str::trim).collect();
        let parse = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("bad provenance index {s:?}"),
            })
        };
        if cells.len() != 3 {
            return Err(Error::Format(format!("provenance line {} needs 3 columns", idx + 1)));
        }
        ids.push(parse(cells[0])?);
        positions.push((parse(cells[1])?, parse(cells[2])?));
    }
    if ids.len() != cloud.len() {
        return Err(Error::Validation(format!(
            "provenance has {} rows for {} points",
            ids.len(),
            cloud.len()
        )));
    }
    let out = LabeledPointCloud::new(cloud.dim, cloud.coords, cloud.labels, ids)?;
    out.with_positions(positions)
}

/// `classes.txt`: one class name per line, line `k` naming class id `k`.
pub fn load_class_names(path: impl AsRef<Path>) -> Result<BTreeMap<u32, String>> {
    let text = read_text(path.as_ref())?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i as u32, l.trim().to_string()))
        .collect())
}

fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

pub fn format_diagram_csv(diagram: &PersistenceDiagram) -> String {
    let mut out = String::from(DIAGRAM_HEADER);
    out.push('\n');
    for f in diagram.features() {
        let _ = writeln!(out, "{},{},{}", f.dim, fmt_value(f.birth), fmt_value(f.death));
    }
    out
}

fn parse_death(cell: &str, line: usize) -> Result<f64> {
    let c = cell.trim();
    let lower = c.to_ascii_lowercase();
    if matches!(lower.as_str(), "inf" | "+inf" | "infinity" | "+infinity") {
        return Ok(f64::INFINITY);
    }
    c.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("death {c:?} is not a number"),
    })
}

pub fn parse_diagram_csv(text: &str) -> Result<PersistenceDiagram> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == DIAGRAM_HEADER => {}
        _ => return Err(Error::Format(format!("diagram must start with header {DIAGRAM_HEADER:?}"))),
    }
    let mut features = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != 3 {
            return Err(Error::Format(format!("line {line} needs 3 columns")));
        }
        let dim: u8 = cells[0].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad dimension {:?}", cells[0]),
        })?;
        let birth: f64 = cells[1].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad birth {:?}", cells[1]),
        })?;
        let death = parse_death(cells[2], line)?;
        features.push(Feature { dim, birth, death });
    }
    PersistenceDiagram::new(features)
}

pub fn save_diagram(diagram: &PersistenceDiagram, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), format_diagram_csv(diagram).as_bytes())
}

pub fn load_diagram(path: impl AsRef<Path>) -> Result<PersistenceDiagram> {
    parse_diagram_csv(&read_text(path.as_ref())?)
}
