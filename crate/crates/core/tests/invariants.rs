use std::collections::BTreeSet;
use std::path::PathBuf;

use histofuse::augment::{augment_one, AugmentConfig};
use histofuse::backbones::{BackboneId, FeatureVector};
use histofuse::datasets::{self, BinaryLabel, DatasetId, DatasetManifest, Magnification, RawClassLabel, SampleRecord, Split};
use histofuse::experiments::{confusion, metrics};
use histofuse::fixture;
use histofuse::fusion::fuse;
use histofuse::image::{ImageTensor, ValueRange};
use histofuse::nn::{fit, softmax, FitOptions, Mlp};
use histofuse::pipeline::cache::{run_cached, StageStatus};
use histofuse::preprocess::{fit_stain_model, intensity_of, od_of, MacenkoParams};
use histofuse::fusion::TrainConfig;
use proptest::prelude::*;

fn breakhis_manifest(patients: &[(String, bool, usize)]) -> DatasetManifest {
    let mut records = Vec::new();
    for (pid, malignant, images) in patients {
        for i in 0..*images {
            let class = if *malignant { RawClassLabel::Malignant } else { RawClassLabel::Benign };
            records.push(
                SampleRecord::new(
                    PathBuf::from(format!("{pid}/{i}.png")),
                    DatasetId::BreakHis,
                    class,
                    Some(pid.clone()),
                    Some(Magnification::X40),
                )
                .unwrap(),
            );
        }
    }
    DatasetManifest::new(records).unwrap()
}

fn patients_strategy() -> impl Strategy<Value = Vec<(String, bool, usize)>> {
    (2usize..6, 2usize..6).prop_flat_map(|(b, m)| {
        proptest::collection::vec(1usize..5, b + m).prop_map(move |counts| {
            counts
                .into_iter()
                .enumerate()
                .map(|(i, n)| (format!("P{i:02}"), i >= b, n))
                .collect()
        })
    })
}

fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let data = (0..h * w * 3)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from((state >> 56) as u8)
        })
        .collect();
    ImageTensor::rgb8(h, w, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_is_deterministic_and_patient_disjoint(patients in patients_strategy(), seed in any::<u64>()) {
        let m = breakhis_manifest(&patients);
        let a = datasets::split(&m, 0.7, seed).unwrap();
        let b = datasets::split(&m, 0.7, seed).unwrap();
        prop_assert_eq!(&a.records, &b.records);
        prop_assert_eq!(a.records.len(), m.records.len());
        prop_assert!(a.records.iter().all(|r| r.split.is_some()));
        let ids = |s: Split| -> BTreeSet<String> { a.in_split(s).filter_map(|r| r.patient_id.clone()).collect() };
        prop_assert!(ids(Split::Train).is_disjoint(&ids(Split::Test)));
    }

    #[test]
    fn od_is_monotone_and_round_trips(a in 1u8..=240, b in 1u8..=240) {
        let io = 240.0;
        let (x, y) = (f64::from(a.min(b)), f64::from(a.max(b)));
        prop_assert!(od_of(x, io) >= od_of(y, io));
        prop_assert!(od_of(x, io) >= 0.0);
        prop_assert_eq!(intensity_of(od_of(x, io), io), x);
    }

    #[test]
    fn stain_fit_ignores_pixel_order(seed in 0u64..1000, rotate in 1usize..1000) {
        let img = fixture::he_image(24, BinaryLabel::Malignant, seed).unwrap();
        let pixels: Vec<[f64; 3]> = img.pixels().collect();
        let mut shuffled = pixels.clone();
        shuffled.rotate_left(rotate % pixels.len());
        shuffled.reverse();
        let permuted = ImageTensor::rgb8(24, 24, shuffled.concat()).unwrap();
        let params = MacenkoParams::default();
        match (fit_stain_model(&img, &params), fit_stain_model(&permuted, &params)) {
            (Ok(a), Ok(b)) => {
                for r in 0..3 {
                    for c in 0..2 {
                        prop_assert!((a.stain_matrix[r][c] - b.stain_matrix[r][c]).abs() < 1e-9);
                    }
                }
                for c in 0..2 {
                    prop_assert!((a.max_concentrations[c] - b.max_concentrations[c]).abs() < 1e-9);
                }
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            (a, b) => prop_assert!(false, "outcomes differ: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn augmentation_keeps_geometry_and_range(h in 4usize..20, w in 4usize..20, seed in any::<u64>(), draw in any::<u64>()) {
        let img = random_image(h, w, seed);
        let cfg = AugmentConfig { seed, ..AugmentConfig::default() };
        let out = augment_one(&img, &cfg, draw).unwrap();
        prop_assert_eq!(out.dims(), img.dims());
        prop_assert_eq!(out.range(), ValueRange::Uint8);
        prop_assert!(out.data().iter().all(|v| (0.0..=255.0).contains(v)));
        prop_assert_eq!(augment_one(&img, &cfg, draw).unwrap(), out);
    }

    #[test]
    fn fused_segments_reconstruct_inputs(n in 1usize..6, dims in proptest::collection::vec(1usize..12, 1..4)) {
        let ids = [BackboneId::StubA, BackboneId::StubB, BackboneId::StubC];
        let sets: Vec<Vec<FeatureVector>> = dims
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                (0..n)
                    .map(|i| FeatureVector {
                        values: (0..d).map(|j| (k * 1000 + i * 100 + j) as f32).collect(),
                        backbone: ids[k],
                        sample_ref: i,
                    })
                    .collect()
            })
            .collect();
        let labels: Vec<BinaryLabel> = (0..n).map(|i| if i % 2 == 0 { BinaryLabel::Benign } else { BinaryLabel::Malignant }).collect();
        let fused = fuse(&sets, &labels).unwrap();
        prop_assert_eq!(fused.len(), n);
        for (i, f) in fused.iter().enumerate() {
            prop_assert_eq!(f.values.len(), dims.iter().sum::<usize>());
            prop_assert_eq!(f.label, labels[i]);
            for (k, set) in sets.iter().enumerate() {
                prop_assert_eq!(f.segment(ids[k]).unwrap(), set[i].values.as_slice());
            }
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-50.0f64..50.0, 1..10)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn metric_identities(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..64)) {
        let to = |b: bool| if b { BinaryLabel::Malignant } else { BinaryLabel::Benign };
        let preds: Vec<_> = pairs.iter().map(|p| to(p.0)).collect();
        let labels: Vec<_> = pairs.iter().map(|p| to(p.1)).collect();
        let c = confusion(&preds, &labels).unwrap();
        prop_assert_eq!(c.total(), pairs.len() as u64);
        let m = metrics(c).unwrap();
        for v in m.values() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn loss_decreases_over_ten_epochs(seed in 0u64..1000) {
        let (xs, ys) = fixture::separable_blobs(64, 6, 4.0, seed);
        let cfg = TrainConfig { learning_rate: 1e-3, seed, ..TrainConfig::default() };
        let mut mlp = Mlp::classifier(6, 32, 2, 0.0, seed);
        let opts = FitOptions { epochs: 10, ..cfg.fit_options(0) };
        let h = fit(&mut mlp, &xs, &ys, &opts).unwrap();
        prop_assert_eq!(h.len(), 10);
        prop_assert!(h.loss[9] < h.loss[0], "loss {:?}", h.loss);
    }

    #[test]
    fn cache_reuses_completed_stages_only(key_seed in any::<u64>(), other in any::<u64>()) {
        prop_assume!(key_seed != other);
        let tmp = tempfile::tempdir().unwrap();
        let key = format!("{key_seed:016x}{:048}", 0);
        let mut runs = 0;
        let first = run_cached(tmp.path(), "s", &key, |d| { runs += 1; std::fs::write(d.join("x"), b"1").map_err(|e| histofuse::Error::io(d, e)) }).unwrap();
        let again = run_cached(tmp.path(), "s", &key, |_| { runs += 1; Ok(()) }).unwrap();
        prop_assert_eq!(first.status, StageStatus::Ran);
        prop_assert_eq!(again.status, StageStatus::Cached);
        prop_assert_eq!(&again.output_hash, &first.output_hash);
        let failed = run_cached(tmp.path(), "s", &format!("{other:016x}{:048}", 0), |_| Err(histofuse::Error::InvalidInput("boom".into())));
        prop_assert!(failed.is_err());
        let retried = run_cached(tmp.path(), "s", &format!("{other:016x}{:048}", 0), |_| { runs += 1; Ok(()) }).unwrap();
        prop_assert_eq!(retried.status, StageStatus::Ran);
        prop_assert_eq!(runs, 2);
    }
}
