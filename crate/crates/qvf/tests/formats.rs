use std::path::Path;

use qvf::config::ExperimentConfig;
use qvf::core::data::{synth_dataset, LabeledDataset, Split, SynthKind, SynthSpec};
use qvf::core::fusion::{CacheRecord, EmbeddingPair, FeatureCache, FusionModel, Provenance, Strategy};
use qvf::core::metrics::MetricsReport;
use qvf::core::Tensor;
use qvf::manifest::{validate_splits, SplitCounts, SplitManifest};
use qvf::report::{self, MetricsFile, RunLabel};
use qvf::{cache, checkpoint, export, idx, Error};

fn idx_images(count: u32, pixels: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 3];
    for d in [count, 28, 28] {
        b.extend_from_slice(&d.to_be_bytes());
    }
    b.extend_from_slice(pixels);
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 1];
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

fn fixture(dir: &Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
    let (i, l) = (dir.join("img.idx"), dir.join("lbl.idx"));
    std::fs::write(&i, images).unwrap();
    std::fs::write(&l, labels).unwrap();
    (i, l)
}

#[test]
fn idx_hand_built_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let mut pixels = vec![0u8; 2 * 784];
    pixels[0] = 255;
    pixels[1] = 51;
    pixels[784 + 783] = 255;
    pixels[784 + 10] = 1;
    let (i, l) = fixture(dir.path(), &idx_images(2, &pixels), &idx_labels(&[0, 1]));
    let d = idx::load_idx(&i, &l, Split::Train).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d.labels(), &[0, 1]);
    let a = d.image(0);
    let b = d.image(1);
    assert_eq!(a.shape(), &[1, 28, 28]);
    assert_eq!(a.data()[0], 1.0);
    assert_eq!(a.data()[1], 0.2);
    assert_eq!(a.data()[2], 0.0);
    assert_eq!(b.data()[783], 1.0);
    assert_eq!(b.data()[10], 1.0 / 255.0);
    assert!(d.images().data().iter().all(|&p| (0.0..=1.0).contains(&p)));
}

#[test]
fn idx_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = idx_images(2, &[0; 2 * 784]);

    let (i, l) = fixture(dir.path(), &good[..good.len() - 100], &idx_labels(&[0, 1]));
    let err = idx::load_idx(&i, &l, Split::Train).unwrap_err();
    assert!(matches!(err, Error::Truncated { missing: 100, .. }), "{err}");
    assert!(err.to_string().contains("100 more bytes"), "{err}");

    let mut bad_magic = good.clone();
    bad_magic[3] = 9;
    let (i, l) = fixture(dir.path(), &bad_magic, &idx_labels(&[0, 1]));
    assert!(idx::load_idx(&i, &l, Split::Train).is_err());

    let (i, l) = fixture(dir.path(), &good, &idx_labels(&[0, 1, 1]));
    assert!(idx::load_idx(&i, &l, Split::Train).is_err());

    let (i, l) = fixture(dir.path(), &good, &idx_labels(&[0, 2]));
    assert!(idx::load_idx(&i, &l, Split::Train).is_err());

    let mut small = vec![0, 0, 8, 3];
    for d in [1u32, 14, 14] {
        small.extend_from_slice(&d.to_be_bytes());
    }
    small.extend_from_slice(&[0; 196]);
    let (i, l) = fixture(dir.path(), &small, &idx_labels(&[0]));
    assert!(idx::load_idx(&i, &l, Split::Train).is_err());
}

#[test]
fn idx_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..3 * 784).map(|i| (i * 37 % 256) as u8).collect();
    let images = idx_images(3, &pixels);
    let labels = idx_labels(&[1, 0, 1]);
    let (i, l) = fixture(dir.path(), &images, &labels);
    let d = idx::load_idx(&i, &l, Split::Val).unwrap();
    let (i2, l2) = (dir.path().join("a.idx"), dir.path().join("b.idx"));
    idx::save_idx(&d, &i2, &l2).unwrap();
    assert_eq!(std::fs::read(&i2).unwrap(), images);
    assert_eq!(std::fs::read(&l2).unwrap(), labels);
    assert_eq!(idx::load_idx(&i2, &l2, Split::Val).unwrap(), d);
}

fn sized(n_neg: usize, n_pos: usize, split: Split) -> LabeledDataset {
    let labels: Vec<u8> = (0..n_neg + n_pos).map(|i| u8::from(i >= n_neg)).collect();
    let images = Tensor::zeros(&[labels.len(), 1, 28, 28]);
    LabeledDataset::new(images, labels, split).unwrap()
}

#[test]
fn breastmnist_manifest() {
    let m = SplitManifest::named("breastmnist").unwrap();
    let totals: Vec<_> = Split::ALL.iter().map(|&s| m.get(s).unwrap().total).collect();
    assert_eq!(totals, [546, 78, 156]);
    let pos: usize = Split::ALL.iter().map(|&s| m.get(s).unwrap().positive).sum();
    assert_eq!(pos, 570);

    let counts = |s: Split| *m.get(s).unwrap();
    let make = |s: Split, as_split: Split| sized(counts(s).negative, counts(s).positive, as_split);
    let train = make(Split::Train, Split::Train);
    let val = make(Split::Val, Split::Val);
    let test = make(Split::Test, Split::Test);
    validate_splits(&[&train, &val, &test], &m).unwrap();

    let swapped_val = make(Split::Test, Split::Val);
    let swapped_test = make(Split::Val, Split::Test);
    let err = validate_splits(&[&train, &swapped_val, &swapped_test], &m).unwrap_err();
    assert!(matches!(&err, Error::SplitMismatch { split, .. } if split == "val"), "{err}");
}

#[test]
fn manifest_rejects_empty_and_inconsistent_splits() {
    let c = |t, p, n| SplitCounts { total: t, positive: p, negative: n };
    assert!(SplitManifest::new(c(10, 5, 4), c(4, 2, 2), c(4, 2, 2)).is_err());
    let m = SplitManifest::new(c(4, 2, 2), c(2, 1, 1), c(2, 1, 1)).unwrap();
    let empty = LabeledDataset::new(Tensor::zeros(&[0, 1, 28, 28]), vec![], Split::Val);
    if let Ok(empty) = empty {
        let train = sized(2, 2, Split::Train);
        let test = sized(1, 1, Split::Test);
        assert!(validate_splits(&[&train, &empty, &test], &m).is_err());
    }
    for name in ["inbreast", "bus-uclm"] {
        SplitManifest::named(name).unwrap().validate().unwrap();
    }
}

fn model(strategy: Strategy) -> FusionModel {
    let mut config = ExperimentConfig::synthetic(SynthKind::SeparableBlobs, 4, 2, 2, strategy);
    config.seed = 3;
    FusionModel::new(config.model_config(strategy).unwrap()).unwrap()
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for strategy in [Strategy::Tshf, Strategy::BaselineQuantum, Strategy::BaselineClassical] {
        let mut a = model(strategy);
        if let Some(g) = a.gamma.as_mut() {
            *g = 0.37;
        }
        let path = dir.path().join(format!("{strategy}.qvfm"));
        checkpoint::save(&a, &path).unwrap();
        let mut b = model(strategy);
        for (_, t) in b.params_mut() {
            if let Some(t) = t {
                t.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        checkpoint::load_into(&mut b, &path).unwrap();
        assert_eq!(checkpoint::model_tensors(&a), checkpoint::model_tensors(&b));
        assert_eq!(std::fs::read(&path).unwrap(), checkpoint::encode(&checkpoint::model_tensors(&b)));
    }

    let path = dir.path().join("tshf.qvfm");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(
        checkpoint::load_into(&mut model(Strategy::Tshf), &path),
        Err(Error::Truncated { .. })
    ));
    let other = dir.path().join("baseline_quantum.qvfm");
    assert!(checkpoint::load_into(&mut model(Strategy::Tshf), &other).is_err());
}

fn small_cache(split: Split, n: usize, d: usize) -> FeatureCache {
    let records = (0..n)
        .map(|i| CacheRecord {
            label: (i % 2) as u8,
            pair: EmbeddingPair::new(
                (0..d).map(|j| (i * d + j) as f64 / 7.0 - 1.0).collect(),
                (0..d).map(|j| -1e-9 * (i + j) as f64 + core::f64::consts::PI).collect(),
            )
            .unwrap(),
        })
        .collect();
    let provenance = Provenance {
        root_seed: Some(5),
        theta_seed: 11,
        init_seed: 12,
        theta_fix: vec![0.5, 1.5, 2.5, 3.5],
        checkpoint_hash: Some("ab".into()),
        config_hash: None,
    };
    FeatureCache::new(split, d, records, provenance).unwrap()
}

#[test]
fn cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = small_cache(Split::Val, 5, 3);
    let path = dir.path().join("val.qvfc");
    cache::save(&c, &path).unwrap();
    assert!(cache::sidecar_path(&path).is_file());
    assert_eq!(cache::load(&path).unwrap(), c);
}

#[test]
fn embedding_export() {
    let c = small_cache(Split::Test, 3, 4);
    let csv = export::embeddings_csv(&c);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "label,q_0,q_1,q_2,q_3,c_0,c_1,c_2,c_3");
    for (line, r) in lines[1..].iter().zip(&c.records) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 1 + 2 * c.d);
        assert_eq!(cells[0].parse::<u8>().unwrap(), r.label);
        let values: Vec<f64> = cells[1..].iter().map(|s| s.parse().unwrap()).collect();
        for (v, e) in values.iter().zip(r.pair.h_q.iter().chain(&r.pair.h_c)) {
            assert!((v - e).abs() <= 1e-12, "{v} vs {e}");
        }
    }
}

fn report_for(f1_bias: usize) -> MetricsReport {
    let labels = [0, 0, 1, 1, 1, 0];
    let scores: Vec<f64> = (0..6).map(|i| if i < f1_bias { 1.0 - labels[i] as f64 } else { labels[i] as f64 * 0.8 + 0.1 }).collect();
    MetricsReport::from_scores("test", Some(1), &labels, &scores, 0.5).unwrap()
}

#[test]
fn report_compares_runs() {
    let dir = tempfile::tempdir().unwrap();
    for (name, strategy, wrong) in [("a", "dhf", 2), ("b", "tshf", 0), ("c", "shf", 3)] {
        let run = dir.path().join(name);
        report::write_metrics(
            &run,
            &MetricsFile {
                run: RunLabel {
                    strategy: strategy.into(),
                    backbone: Some("scnn".into()),
                    quantum_mode: Some("trainable".into()),
                    seed: 1,
                },
                reports: vec![report_for(wrong)],
            },
        )
        .unwrap();
    }
    std::fs::create_dir(dir.path().join("not-a-run")).unwrap();
    let cmp = report::compare_runs(dir.path()).unwrap();
    assert_eq!(cmp.rows.len(), 3);
    assert_eq!(cmp.best, 1);
    let csv = cmp.csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(2).unwrap().ends_with(",1"));
    let md = cmp.markdown();
    assert_eq!(md.lines().count(), 5);
    assert!(md.contains("| b (best) | tshf"));
    assert!(md.contains("**100.00**"));

    let empty = tempfile::tempdir().unwrap();
    assert!(report::compare_runs(empty.path()).is_err());
}

#[test]
fn metrics_csv_column_order() {
    let csv = report::metrics_csv(&[report_for(0)]);
    assert_eq!(csv, "split,Acc,Prec,Rec,F1,AUC\ntest,100.00,100.00,100.00,100.00,100.00\n");
}

#[test]
fn synthetic_source_matches_core_generator() {
    let mut config = ExperimentConfig::synthetic(SynthKind::TexturedRings, 6, 4, 4, Strategy::Dhf);
    config.seed = 9;
    let spec = config.synth_spec(Split::Val).unwrap();
    assert_eq!(spec, SynthSpec { kind: SynthKind::TexturedRings, negatives: 2, positives: 2, side: 28, seed: spec.seed });
    let a = synth_dataset(&spec, Split::Val).unwrap();
    let b = qvf::runner::load_datasets(&config).unwrap();
    assert_eq!(&a, b.get(Split::Val));
}

mod properties {
    use proptest::prelude::*;
    use qvf::checkpoint::{decode, encode, NamedTensor};
    use qvf::core::data::{LabeledDataset, Split};
    use qvf::core::Tensor;
    use qvf::idx;

    fn tensor() -> impl Strategy<Value = NamedTensor> {
        ("[a-z._0-9]{1,12}", prop::collection::vec(1usize..4, 0..3)).prop_flat_map(|(name, shape)| {
            let n = shape.iter().product::<usize>();
            prop::collection::vec(any::<f64>(), n).prop_map(move |values| NamedTensor {
                name: name.clone(),
                shape: shape.clone(),
                values,
            })
        })
    }

    proptest! {
        #[test]
        fn checkpoint_encoding_round_trips(tensors in prop::collection::vec(tensor(), 0..5)) {
            let bytes = encode(&tensors);
            let back = decode(std::path::Path::new("mem"), &bytes).unwrap();
            prop_assert_eq!(back.len(), tensors.len());
            for (a, b) in back.iter().zip(&tensors) {
                prop_assert_eq!(&a.name, &b.name);
                prop_assert_eq!(&a.shape, &b.shape);
                let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(&a.values), bits(&b.values));
            }
            if !bytes.is_empty() && !tensors.is_empty() {
                prop_assert!(decode(std::path::Path::new("mem"), &bytes[..bytes.len() - 1]).is_err());
            }
        }

        #[test]
        fn idx_round_trip_keeps_pixels_in_range(
            pixels in prop::collection::vec(any::<u8>(), 784 * 2),
            labels in prop::collection::vec(0u8..2, 2),
        ) {
            let images = Tensor::new(&[2, 1, 28, 28], pixels.iter().map(|&p| p as f64 / 255.0).collect()).unwrap();
            let d = LabeledDataset::new(images, labels, Split::Test).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let (i, l) = (dir.path().join("i"), dir.path().join("l"));
            idx::save_idx(&d, &i, &l).unwrap();
            let back = idx::load_idx(&i, &l, Split::Test).unwrap();
            prop_assert!(back.images().data().iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert_eq!(back, d);
        }
    }
}
