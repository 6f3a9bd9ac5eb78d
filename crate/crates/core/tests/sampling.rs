mod oracles;

use acttopo_core::sampling::*;
use acttopo_core::tensor_io::*;
use acttopo_core::ActivationTensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn random_tensor(rng: &mut ChaCha8Rng, c: usize, n: usize, m: usize) -> ActivationTensor {
    ActivationTensor::new(c, n, m, (0..c * n * m).map(|_| rng.random_range(-2.0f32..2.0)).collect()).unwrap()
}

#[test]
fn random_positions_are_uniform() {
    let (n, m, images) = (4, 5, 6000);
    let tensor = ActivationTensor::new(1, n, m, (0..n * m).map(|i| i as f32).collect()).unwrap();
    let tensors = vec![tensor; images];
    let labels = vec![0; images];
    let cloud = sample_random(&tensors, &labels, 2024).unwrap();
    let mut counts = vec![0usize; n * m];
    for (i, &(r, c)) in cloud.positions().unwrap().iter().enumerate() {
        assert_eq!(cloud.point(i)[0], (r * m + c) as f64);
        counts[r * m + c] += 1;
    }
    let expected = images as f64 / (n * m) as f64;
    let stat: f64 = counts.iter().map(|&k| (k as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((n * m - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi2 = {stat}, p = {p}");
    assert_eq!(sample_random(&tensors, &labels, 2024).unwrap(), cloud);
}

#[test]
fn random_sampling_depends_only_on_seed_and_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let tensors: Vec<_> = (0..20).map(|_| random_tensor(&mut rng, 3, 6, 6)).collect();
    let labels: Vec<u32> = (0..20).collect();
    let all = sample_random(&tensors, &labels, 9).unwrap();
    let head = sample_random(&tensors[..7], &labels[..7], 9).unwrap();
    assert_eq!(&all.positions().unwrap()[..7], head.positions().unwrap());
}

#[test]
fn top_l2_picks_the_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tensors: Vec<_> = (0..25).map(|_| random_tensor(&mut rng, 4, 5, 3)).collect();
    let labels: Vec<u32> = (0..25).map(|i| i % 3).collect();
    let cloud = sample_top_l2(&tensors, &labels).unwrap();
    assert_eq!(cloud.len(), 25);
    for (img, t) in tensors.iter().enumerate() {
        let norms: Vec<f64> = (0..15)
            .map(|idx| (0..4).map(|ch| (t.at(ch, idx / 3, idx % 3) as f64).powi(2)).sum())
            .collect();
        let best = oracles::top_k(&norms, 1)[0];
        assert_eq!(cloud.positions().unwrap()[img], (best / 3, best % 3));
        assert_eq!(cloud.labels()[img], labels[img]);
        assert_eq!(cloud.image_ids()[img], img);
    }
}

#[test]
fn full_sampling_keeps_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tensors: Vec<_> = (0..10).map(|_| random_tensor(&mut rng, 2, 4, 4)).collect();
    let cloud = sample_full(&tensors, &[1; 10]).unwrap();
    assert_eq!(cloud.len(), 160);
    for i in 0..160 {
        let (r, c) = cloud.positions().unwrap()[i];
        let t = &tensors[cloud.image_ids()[i]];
        assert_eq!(cloud.point(i), &[t.at(0, r, c) as f64, t.at(1, r, c) as f64]);
    }
}

#[test]
fn mixed_shapes_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tensors = vec![random_tensor(&mut rng, 2, 4, 4), random_tensor(&mut rng, 2, 4, 5)];
    assert!(matches!(sample_full(&tensors, &[0, 0]), Err(acttopo_core::Error::Validation(_))));
}

fn chain_strategy() -> impl Strategy<Value = (Vec<(usize, usize, usize)>, usize)> {
    let layer = (0usize..3, 1usize..3, 0usize..2).prop_map(|(h, s, p)| (2 * h + 1, s, p.min(h)));
    (prop::collection::vec(layer, 1..4), 8usize..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn odd_kernel_fields_match_walking_back((layers, size) in chain_strategy()) {
        let chain = LayerChain::new(layers.iter().map(|&(k, s, p)| ConvLayer::new(k, s, p)).collect(), (size, size + 1));
        prop_assume!(chain.is_ok());
        let chain = chain.unwrap();
        let (oh, ow) = chain.output_size();
        for r in 0..oh {
            for c in 0..ow {
                let rect = receptive_field(&chain, r, c).unwrap();
                prop_assert_eq!(rect.rows, oracles::receptive_interval(&layers, r, size));
                prop_assert_eq!(rect.cols, oracles::receptive_interval(&layers, c, size + 1));
            }
        }
    }

    #[test]
    fn weights_count_mask_pixels(
        layers in prop::collection::vec((1usize..5, 1usize..3, 0usize..2), 1..3),
        seed in any::<u64>(),
    ) {
        let (h, w) = (11, 9);
        let chain = LayerChain::new(layers.iter().map(|&(k, s, p)| ConvLayer::new(k, s, p)).collect(), (h, w));
        prop_assume!(chain.is_ok());
        let chain = chain.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = Mask::new(h, w, (0..h * w).map(|_| rng.random_bool(0.4)).collect()).unwrap();
        for mode in [MaskMode::Foreground, MaskMode::Background] {
            let want = mode == MaskMode::Foreground;
            let map = weight_positions(&chain, &mask, mode).unwrap();
            let (oh, ow) = chain.output_size();
            prop_assert_eq!(map.size(), (oh, ow));
            for r in 0..oh {
                for c in 0..ow {
                    let rect = receptive_field(&chain, r, c).unwrap();
                    let mut count = 0u64;
                    for y in rect.rows.0..=rect.rows.1 {
                        for x in rect.cols.0..=rect.cols.1 {
                            count += u64::from(mask.get(y, x) == want);
                        }
                    }
                    prop_assert_eq!(map.get(r, c), count);
                }
            }
        }
    }
}

#[test]
fn top_weighted_takes_the_heaviest_positions() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tensors: Vec<_> = (0..10).map(|_| random_tensor(&mut rng, 3, 4, 4)).collect();
    let maps: Vec<_> = (0..10)
        .map(|_| SpatialWeightMap::new(4, 4, (0..16).map(|_| rng.random_range(0..4u64)).collect()).unwrap())
        .collect();
    let cloud = sample_top_weighted(&tensors, &[0; 10], &maps, 5).unwrap();
    assert_eq!(cloud.len(), 50);
    for (img, map) in maps.iter().enumerate() {
        let weights: Vec<f64> = map.weights().iter().map(|&w| w as f64).collect();
        let want: Vec<(usize, usize)> = oracles::top_k(&weights, 5).into_iter().map(|i| (i / 4, i % 4)).collect();
        assert_eq!(&cloud.positions().unwrap()[img * 5..img * 5 + 5], want.as_slice());
    }
    assert!(sample_top_weighted(&tensors, &[0; 10], &maps, 17).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensors_survive_a_round_trip(c in 1usize..5, n in 1usize..6, m in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(&mut rng, c, n, m);
        prop_assert_eq!(decode_tensor(&encode_tensor(&t)).unwrap(), t);
    }

    #[test]
    fn truncated_tensors_are_corrupt(cut in 1usize..8) {
        let t = ActivationTensor::new(2, 2, 2, vec![1.0; 8]).unwrap();
        let bytes = encode_tensor(&t);
        let err = decode_tensor(&bytes[..bytes.len() - cut]).unwrap_err();
        prop_assert!(matches!(err, acttopo_core::Error::Corruption(_)), "{:?}", err);
    }

    #[test]
    fn clouds_survive_a_round_trip(seed in any::<u64>(), n in 1usize..20, dim in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1e3..1e3)).collect()).collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let cloud = LabeledPointCloud::from_rows(&rows, labels).unwrap();
        let text = format_point_cloud_csv(&cloud, true);
        prop_assert_eq!(header_declares_labels(&text), Some(true));
        let back = parse_point_cloud_csv(&text, true).unwrap();
        prop_assert_eq!(back.coords(), cloud.coords());
        prop_assert_eq!(back.labels(), cloud.labels());
    }

    #[test]
    fn diagrams_survive_a_round_trip(seed in any::<u64>(), k in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features: Vec<Feature> = (0..k)
            .map(|_| {
                let b = rng.random_range(0.0..5.0);
                let d = if rng.random_bool(0.2) { f64::INFINITY } else { b + rng.random_range(0.001..3.0) };
                Feature::new(rng.random_range(0..2), b, d)
            })
            .collect();
        features.push(Feature::new(0, 0.0, f64::INFINITY));
        let d = PersistenceDiagram::new(features).unwrap().canonical();
        prop_assert_eq!(parse_diagram_csv(&format_diagram_csv(&d)).unwrap(), d);
    }
}

#[test]
fn provenance_travels_in_a_sidecar() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tensors: Vec<_> = (0..6).map(|_| random_tensor(&mut rng, 2, 3, 3)).collect();
    let cloud = sample_random(&tensors, &[0, 1, 2, 0, 1, 2], 1).unwrap();
    let prov = format_provenance_csv(&cloud).unwrap();
    assert!(prov.starts_with("image_id,row,col\n"));
    let bare = parse_point_cloud_csv(&format_point_cloud_csv(&cloud, true), true).unwrap();
    let back = apply_provenance_csv(bare, &prov).unwrap();
    assert_eq!(back.positions(), cloud.positions());
    assert_eq!(back.image_ids(), cloud.image_ids());
}
