#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use acttopo_core::tensor_io::{encode_tensor, format_point_cloud_csv};
use acttopo_core::{ActivationTensor, LabeledPointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn acttopo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acttopo"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = acttopo(args);
    assert!(
        out.status.success(),
        "acttopo {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// 133 + 267 points on radii 1 and 2, equal arc spacing, labeled by circle.
pub fn nested_circles() -> LabeledPointCloud {
    let mut rows = vec![];
    let mut labels = vec![];
    for (class, radius, count) in [(0u32, 1.0f64, 133usize), (1, 2.0, 267)] {
        for i in 0..count {
            let t = 2.0 * PI * i as f64 / count as f64;
            rows.push(vec![radius * t.cos(), radius * t.sin()]);
            labels.push(class);
        }
    }
    LabeledPointCloud::from_rows(&rows, labels).unwrap()
}

pub fn write_cloud(dir: &Path, name: &str, cloud: &LabeledPointCloud) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, format_point_cloud_csv(cloud, true)).unwrap();
    path
}

pub fn random_tensor(rng: &mut ChaCha8Rng, c: usize, n: usize, m: usize) -> ActivationTensor {
    ActivationTensor::new(c, n, m, (0..c * n * m).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
}

/// `images` tensors `img000.atns...` plus `labels.txt` in `dir`.
pub fn write_tensor_dir(dir: &Path, images: usize, c: usize, n: usize, m: usize, seed: u64) -> (PathBuf, PathBuf) {
    let tensors = dir.join("tensors");
    std::fs::create_dir_all(&tensors).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = String::new();
    for i in 0..images {
        let t = random_tensor(&mut rng, c, n, m);
        std::fs::write(tensors.join(format!("img{i:03}.atns")), encode_tensor(&t)).unwrap();
        labels.push_str(&format!("{}\n", i % 3));
    }
    let label_path = dir.join("labels.txt");
    std::fs::write(&label_path, labels).unwrap();
    (tensors, label_path)
}

/// Binary PGM masks `img000.pgm...`, a random blob of foreground per image.
pub fn write_mask_dir(dir: &Path, images: usize, h: usize, w: usize, seed: u64) -> PathBuf {
    let masks = dir.join("masks");
    std::fs::create_dir_all(&masks).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..images {
        let (cy, cx) = (rng.random_range(0..h), rng.random_range(0..w));
        let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
        for y in 0..h {
            for x in 0..w {
                let near = y.abs_diff(cy) <= 3 && x.abs_diff(cx) <= 3;
                bytes.push(if near { 255 } else { 0 });
            }
        }
        std::fs::write(masks.join(format!("img{i:03}.pgm")), bytes).unwrap();
    }
    masks
}

pub fn unit_square() -> LabeledPointCloud {
    let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
    LabeledPointCloud::from_rows(&rows, vec![0; 4]).unwrap()
}
