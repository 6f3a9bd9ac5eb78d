//! Point-cloud summaries of activation tensors.
//!
//! Each sampler takes one tensor per image (all of the same shape) plus the
//! image labels, and emits a [`LabeledPointCloud`] whose points are spatial
//! activations (length-`c` channel vectors). Every point records the image it
//! came from and its `(row, col)` position so it can be traced back.
//!
//! Ties are always broken towards the smallest row-major position.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor_io::{ActivationTensor, LabeledPointCloud};

/// The channel vector at one spatial position.
pub fn spatial_slice(tensor: &ActivationTensor, row: usize, col: usize) -> Result<Vec<f32>> {
    let (c, n, m) = tensor.shape();
    if row >= n || col >= m {
        return Err(Error::Bounds(format!("position ({row}, {col}) outside {n}x{m} grid")));
    }
    Ok((0..c).map(|ch| tensor.at(ch, row, col)).collect())
}

fn squared_norm_at(tensor: &ActivationTensor, row: usize, col: usize) -> f64 {
    (0..tensor.channels())
        .map(|ch| {
            let v = tensor.at(ch, row, col) as f64;
            v * v
        })
        .sum()
}

fn check_batch(tensors: &[ActivationTensor], labels: &[u32]) -> Result<(usize, usize, usize)> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::Argument("no tensors supplied".into()))?;
    if labels.len() != tensors.len() {
        return Err(Error::Argument(format!(
            "{} labels for {} tensors",
            labels.len(),
            tensors.len()
        )));
    }
    let shape = first.shape();
    if let Some((i, t)) = tensors.iter().enumerate().find(|(_, t)| t.shape() != shape) {
        return Err(Error::Validation(format!(
            "tensor {i} has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(shape)
}

/// Collects `(image, row, col)` picks into a cloud.
fn gather(tensors: &[ActivationTensor], labels: &[u32], picks: &[(usize, usize, usize)]) -> Result<LabeledPointCloud> {
    let c = tensors[0].channels();
    let mut coords = Vec::with_capacity(picks.len() * c);
    for &(img, r, col) in picks {
        coords.extend((0..c).map(|ch| tensors[img].at(ch, r, col) as f64));
    }
    LabeledPointCloud::new(
        c,
        coords,
        picks.iter().map(|p| labels[p.0]).collect(),
        picks.iter().map(|p| p.0).collect(),
    )?
    .with_positions(picks.iter().map(|p| (p.1, p.2)).collect())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator for one image, derived from `(seed, image_id)` only.
fn image_rng(seed: u64, image_id: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(image_id as u64)))
}

/// One uniformly drawn spatial activation per image.
pub fn sample_random(tensors: &[ActivationTensor], labels: &[u32], seed: u64) -> Result<LabeledPointCloud> {
    let (_, n, m) = check_batch(tensors, labels)?;
    let picks: Vec<_> = (0..tensors.len())
        .map(|img| {
            let idx = image_rng(seed, img).random_range(0..n * m);
            (img, idx / m, idx % m)
        })
        .collect();
    gather(tensors, labels, &picks)
}

/// Every spatial activation of every image, images in order, positions row-major.
pub fn sample_full(tensors: &[ActivationTensor], labels: &[u32]) -> Result<LabeledPointCloud> {
    let (_, n, m) = check_batch(tensors, labels)?;
    let picks: Vec<_> = (0..tensors.len())
        .flat_map(|img| (0..n * m).map(move |idx| (img, idx / m, idx % m)))
        .collect();
    gather(tensors, labels, &picks)
}

/// The spatial activation with the largest Euclidean norm, per image.
pub fn sample_top_l2(tensors: &[ActivationTensor], labels: &[u32]) -> Result<LabeledPointCloud> {
    let (_, n, m) = check_batch(tensors, labels)?;
    let picks: Vec<_> = tensors
        .iter()
        .enumerate()
        .map(|(img, t)| {
            let mut best = (0, squared_norm_at(t, 0, 0));
            for idx in 1..n * m {
                let v = squared_norm_at(t, idx / m, idx % m);
                // strict: earlier positions win ties
                if v > best.1 {
                    best = (idx, v);
                }
            }
            (img, best.0 / m, best.0 % m)
        })
        .collect();
    gather(tensors, labels, &picks)
}

/// One convolution-like layer: kernel size, stride, padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvLayer {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
        }
    }
}

/// Accumulated receptive-field geometry after a prefix of layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldGeometry {
    /// Side length of the (unclipped) field, in input pixels.
    pub size: i64,
    /// Input-pixel distance between adjacent output positions.
    pub jump: i64,
    /// Input coordinate of the center of output position 0.
    pub start: i64,
}

/// Closed, clipped pixel rectangle `rows.0..=rows.1` × `cols.0..=cols.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl PixelRect {
    pub fn area(&self) -> usize {
        (self.rows.1 - self.rows.0 + 1) * (self.cols.1 - self.cols.0 + 1)
    }
}

/// The layers between the input image and the sampled activation tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerChain {
    layers: Vec<ConvLayer>,
    input_size: (usize, usize),
}

impl LayerChain {
    pub fn new(layers: Vec<ConvLayer>, input_size: (usize, usize)) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("layer chain must not be empty".into()));
        }
        if let Some(l) = layers.iter().find(|l| l.stride == 0 || l.kernel == 0) {
            return Err(Error::Argument(format!("kernel and stride must be >= 1, got {l:?}")));
        }
        if input_size.0 == 0 || input_size.1 == 0 {
            return Err(Error::Argument("input size must be positive".into()));
        }
        let chain = Self { layers, input_size };
        let (h, w) = chain.output_size();
        if h == 0 || w == 0 {
            return Err(Error::Argument(format!(
                "chain maps a {:?} input to an empty grid",
                chain.input_size
            )));
        }
        Ok(chain)
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn input_size(&self) -> (usize, usize) {
        self.input_size
    }

    /// Spatial size of the chain's output grid.
    pub fn output_size(&self) -> (usize, usize) {
        let step = |len: usize, l: &ConvLayer| {
            let padded = len + 2 * l.padding;
            if padded < l.kernel {
                0
            } else {
                (padded - l.kernel) / l.stride + 1
            }
        };
        self.layers.iter().fold(self.input_size, |(h, w), l| (step(h, l), step(w, l)))
    }

    pub fn geometry(&self) -> FieldGeometry {
        let mut g = FieldGeometry {
            size: 1,
            jump: 1,
            start: 0,
        };
        for l in &self.layers {
            let (k, s, p) = (l.kernel as i64, l.stride as i64, l.padding as i64);
            g.size += (k - 1) * g.jump;
            g.start += (k / 2) * g.jump - p * g.jump;
            g.jump *= s;
        }
        g
    }
}

fn field_span(center: i64, size: i64, limit: usize) -> (usize, usize) {
    let lo = center - size / 2;
    let hi = lo + size - 1;
    let clip = |v: i64| v.clamp(0, limit as i64 - 1) as usize;
    (clip(lo), clip(hi))
}

/// Input-image rectangle seen by output position (`row`, `col`), clipped to the image.
pub fn receptive_field(chain: &LayerChain, row: usize, col: usize) -> Result<PixelRect> {
    let (oh, ow) = chain.output_size();
    if row >= oh || col >= ow {
        return Err(Error::Bounds(format!("position ({row}, {col}) outside {oh}x{ow} output grid")));
    }
    let g = chain.geometry();
    let (h, w) = chain.input_size;
    Ok(PixelRect {
        rows: field_span(g.start + row as i64 * g.jump, g.size, h),
        cols: field_span(g.start + col as i64 * g.jump, g.size, w),
    })
}

/// Binary `H × W` segmentation mask, `true` = foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, cells: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || cells.len() != height * width {
            return Err(Error::Validation(format!(
                "mask of {} cells does not match {height}x{width}",
                cells.len()
            )));
        }
        Ok(Self { height, width, cells })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            cells: vec![value; height * width],
        }
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    /// Parses a binary PGM (`P5`, maxval ≤ 255); nonzero pixels are foreground.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PGM header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(Error::Format("mask is not a binary PGM (P5)".into()));
        }
        let mut num = |what: &str| -> Result<usize> {
            token()?
                .parse()
                .map_err(|_| Error::Format(format!("bad PGM {what}")))
        };
        let width = num("width")?;
        let height = num("height")?;
        let maxval = num("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        let raster = bytes.get(pos + 1..).unwrap_or_default();
        if raster.len() != width * height {
            return Err(Error::Corruption(format!(
                "PGM raster has {} bytes, expected {}",
                raster.len(),
                width * height
            )));
        }
        Self::new(height, width, raster.iter().map(|&b| b != 0).collect())
    }

    /// Parses a grid of `0`/`1` cells, one image row per line.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut cells = Vec::new();
        let mut width = None;
        let mut height = 0;
        for (idx, raw) in text.lines().enumerate() {
            let row = raw.trim();
            if row.is_empty() {
                continue;
            }
            let vals = row
                .split(',')
                .map(|c| match c.trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("mask cell {other:?} is not 0 or 1"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            if *width.get_or_insert(vals.len()) != vals.len() {
                return Err(Error::Format(format!("mask row {} is ragged", idx + 1)));
            }
            cells.extend(vals);
            height += 1;
        }
        Self::new(height, width.unwrap_or(0), cells)
    }

    /// Loads a `.pgm` or `.csv` mask, chosen by file extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => Self::from_pgm(&bytes),
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::from_csv(&String::from_utf8_lossy(&bytes)),
            _ => Err(Error::Format(format!("unknown mask format for {}", path.display()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    Foreground,
    Background,
}

/// Per-position pixel counts over an `n × m` output grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialWeightMap {
    height: usize,
    width: usize,
    weights: Vec<u64>,
}

impl SpatialWeightMap {
    pub fn new(height: usize, width: usize, weights: Vec<u64>) -> Result<Self> {
        if weights.len() != height * width || weights.is_empty() {
            return Err(Error::Validation(format!(
                "{} weights for a {height}x{width} grid",
                weights.len()
            )));
        }
        Ok(Self { height, width, weights })
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.weights[row * self.width + col]
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    /// The `p` heaviest positions as row-major indices, heaviest first; ties by index.
    pub fn top_positions(&self, p: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.weights.len()).collect();
        idx.sort_by(|&a, &b| self.weights[b].cmp(&self.weights[a]).then(a.cmp(&b)));
        idx.truncate(p);
        idx
    }
}

/// Counts foreground (or background) mask pixels inside each receptive field.
pub fn weight_positions(chain: &LayerChain, mask: &Mask, mode: MaskMode) -> Result<SpatialWeightMap> {
    if mask.size() != chain.input_size() {
        return Err(Error::Argument(format!(
            "mask is {:?} but the chain expects {:?}",
            mask.size(),
            chain.input_size()
        )));
    }
    let want = mode == MaskMode::Foreground;
    let (h, w) = mask.size();
    // summed-area table over the selected pixels
    let mut sat = vec![0u64; (h + 1) * (w + 1)];
    for r in 0..h {
        for c in 0..w {
            let hit = (mask.get(r, c) == want) as u64;
            sat[(r + 1) * (w + 1) + c + 1] = hit + sat[r * (w + 1) + c + 1] + sat[(r + 1) * (w + 1) + c] - sat[r * (w + 1) + c];
        }
    }
    let (oh, ow) = chain.output_size();
    let mut weights = Vec::with_capacity(oh * ow);
    for row in 0..oh {
        for col in 0..ow {
            let f = receptive_field(chain, row, col)?;
            let (r0, r1, c0, c1) = (f.rows.0, f.rows.1 + 1, f.cols.0, f.cols.1 + 1);
            let at = |r: usize, c: usize| sat[r * (w + 1) + c];
            weights.push(at(r1, c1) + at(r0, c0) - at(r0, c1) - at(r1, c0));
        }
    }
    SpatialWeightMap::new(oh, ow, weights)
}

/// The `p` heaviest positions of each image, `N·p` points in total.
///
/// Positions sharing a weight are kept as distinct points.
pub fn sample_top_weighted(
    tensors: &[ActivationTensor],
    labels: &[u32],
    weight_maps: &[SpatialWeightMap],
    p: usize,
) -> Result<LabeledPointCloud> {
    let (_, n, m) = check_batch(tensors, labels)?;
    if weight_maps.len() != tensors.len() {
        return Err(Error::Argument(format!(
            "{} weight maps for {} tensors",
            weight_maps.len(),
            tensors.len()
        )));
    }
    if p == 0 || p > n * m {
        return Err(Error::Argument(format!("p = {p} must lie in 1..={}", n * m)));
    }
    if let Some(wm) = weight_maps.iter().find(|wm| wm.size() != (n, m)) {
        return Err(Error::Argument(format!(
            "weight map is {:?} but tensors are {n}x{m}",
            wm.size()
        )));
    }
    let picks: Vec<_> = weight_maps
        .iter()
        .enumerate()
        .flat_map(|(img, wm)| {
            wm.top_positions(p)
                .into_iter()
                .map(move |idx| (img, idx / m, idx % m))
        })
        .collect();
    gather(tensors, labels, &picks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(c: usize, n: usize, m: usize, vals: &[f32]) -> ActivationTensor {
        ActivationTensor::new(c, n, m, vals.to_vec()).unwrap()
    }

    #[test]
    fn slice_single_position() {
        let t = tensor(2, 1, 1, &[3.0, 5.0]);
        assert_eq!(spatial_slice(&t, 0, 0).unwrap(), vec![3.0, 5.0]);
    }

    #[test]
    fn slice_is_row_major() {
        let t = tensor(1, 2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(spatial_slice(&t, 1, 0).unwrap(), vec![3.0]);
        assert!(matches!(spatial_slice(&t, 2, 0), Err(Error::Bounds(_))));
    }

    #[test]
    fn random_on_single_cell_grid() {
        let ts = vec![tensor(2, 1, 1, &[1.0, 2.0]), tensor(2, 1, 1, &[3.0, 4.0])];
        for seed in [0, 1, 99] {
            let c = sample_random(&ts, &[0, 1], seed).unwrap();
            assert_eq!(c.coords(), &[1.0, 2.0, 3.0, 4.0]);
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(sample_random(&[], &[], 0), Err(Error::Argument(_))));
        assert!(matches!(sample_full(&[], &[]), Err(Error::Argument(_))));
    }

    #[test]
    fn mixed_shapes_are_rejected() {
        let ts = vec![tensor(1, 1, 1, &[1.0]), tensor(1, 1, 2, &[1.0, 2.0])];
        assert!(matches!(sample_full(&ts, &[0, 0]), Err(Error::Validation(_))));
    }

    #[test]
    fn full_counts_and_labels() {
        let ts: Vec<_> = (0..3).map(|_| tensor(8, 2, 2, &[0.5; 32])).collect();
        let c = sample_full(&ts, &[0, 1, 2]).unwrap();
        assert_eq!((c.len(), c.dim()), (12, 8));

        let ts: Vec<_> = (0..2).map(|_| tensor(1, 2, 2, &[0.0; 4])).collect();
        let c = sample_full(&ts, &[0, 1]).unwrap();
        assert_eq!(c.labels(), &[0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn top_l2_prefers_norm_then_index() {
        let t = tensor(1, 1, 2, &[2.0, -5.0]);
        let c = sample_top_l2(std::slice::from_ref(&t), &[0]).unwrap();
        assert_eq!(c.point(0), &[-5.0]);
        let z = tensor(3, 2, 2, &[0.0; 12]);
        let c = sample_top_l2(&[z], &[0]).unwrap();
        assert_eq!(c.positions().unwrap(), &[(0, 0)]);
    }

    #[test]
    fn identity_field_is_one_pixel() {
        let chain = LayerChain::new(vec![ConvLayer::new(1, 1, 0)], (5, 6)).unwrap();
        let f = receptive_field(&chain, 3, 4).unwrap();
        assert_eq!(f, PixelRect { rows: (3, 3), cols: (4, 4) });
    }

    #[test]
    fn padded_3x3_field_is_clipped_at_corner() {
        let chain = LayerChain::new(vec![ConvLayer::new(3, 1, 1)], (8, 8)).unwrap();
        let f = receptive_field(&chain, 0, 0).unwrap();
        assert_eq!(f, PixelRect { rows: (0, 1), cols: (0, 1) });
        assert!(matches!(receptive_field(&chain, 8, 0), Err(Error::Bounds(_))));
    }

    #[test]
    fn two_layer_geometry() {
        let chain = LayerChain::new(vec![ConvLayer::new(3, 2, 1), ConvLayer::new(3, 1, 1)], (16, 16)).unwrap();
        let g = chain.geometry();
        assert_eq!((g.size, g.jump), (7, 2));
        // center of position 1 is pixel 2; 7 wide -> -1..=5 before clipping
        let f = receptive_field(&chain, 1, 1).unwrap();
        assert_eq!(f.rows, (0, 5));
        let f = receptive_field(&chain, 4, 4).unwrap();
        assert_eq!(f.rows, (5, 11));
        assert_eq!(f.area(), 49);
    }

    #[test]
    fn saturated_and_empty_masks() {
        let chain = LayerChain::new(vec![ConvLayer::new(3, 2, 1)], (8, 8)).unwrap();
        let ones = Mask::filled(8, 8, true);
        let wm = weight_positions(&chain, &ones, MaskMode::Foreground).unwrap();
        let (oh, ow) = chain.output_size();
        for r in 0..oh {
            for c in 0..ow {
                let area = receptive_field(&chain, r, c).unwrap().area() as u64;
                assert_eq!(wm.get(r, c), area);
            }
        }
        let zeros = Mask::filled(8, 8, false);
        let wm = weight_positions(&chain, &zeros, MaskMode::Foreground).unwrap();
        assert!(wm.weights().iter().all(|&w| w == 0));
        let wm = weight_positions(&chain, &zeros, MaskMode::Background).unwrap();
        assert!(wm.weights().iter().all(|&w| w > 0));
    }

    #[test]
    fn mask_size_mismatch() {
        let chain = LayerChain::new(vec![ConvLayer::new(1, 1, 0)], (4, 4)).unwrap();
        let m = Mask::filled(4, 5, true);
        assert!(matches!(weight_positions(&chain, &m, MaskMode::Foreground), Err(Error::Argument(_))));
    }

    #[test]
    fn top_weighted_argmax() {
        let t = tensor(1, 2, 2, &[10.0, 11.0, 12.0, 13.0]);
        let wm = SpatialWeightMap::new(2, 2, vec![5, 1, 0, 3]).unwrap();
        let c = sample_top_weighted(std::slice::from_ref(&t), &[0], std::slice::from_ref(&wm), 1).unwrap();
        assert_eq!(c.positions().unwrap(), &[(0, 0)]);
        assert!(matches!(
            sample_top_weighted(&[t], &[0], &[wm], 5),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn pgm_and_csv_masks() {
        let mut pgm = b"P5\n# comment\n3 2\n255\n".to_vec();
        pgm.extend_from_slice(&[0, 255, 0, 1, 0, 0]);
        let m = Mask::from_pgm(&pgm).unwrap();
        assert_eq!(m.size(), (2, 3));
        assert!(m.get(0, 1) && m.get(1, 0) && !m.get(1, 2));
        let csv = Mask::from_csv("0,1,0\n1,0,0\n").unwrap();
        assert_eq!(csv, m);
        assert!(Mask::from_csv("0,2\n").is_err());
        assert!(Mask::from_pgm(b"P2\n1 1\n255\n0").is_err());
    }
}
