use qvf_core::data::{synth_dataset, LabeledDataset, Split, SynthKind, SynthSpec};
use qvf_core::neural::{cross_entropy, AdamConfig, AdamState, Linear};
use qvf_core::rng::SplitMix64;
use qvf_core::Tensor;

const KINDS: [SynthKind; 3] = [SynthKind::SeparableBlobs, SynthKind::TexturedRings, SynthKind::NoiseVsSignal];

#[test]
fn generators_are_deterministic_and_balanced() {
    for kind in KINDS {
        let spec = SynthSpec::balanced(kind, 100, 7);
        let a = synth_dataset(&spec, Split::Train).unwrap();
        let b = synth_dataset(&spec, Split::Train).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.positives(), a.negatives()), (50, 50));
        assert_eq!(a.images().shape(), &[100, 1, 28, 28]);
        assert!(a.images().data().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = synth_dataset(&SynthSpec::balanced(kind, 100, 8), Split::Train).unwrap();
        assert_ne!(a.images(), c.images());
    }
}

#[test]
fn uneven_counts_are_respected() {
    let spec = SynthSpec {
        kind: SynthKind::SeparableBlobs,
        negatives: 7,
        positives: 3,
        side: 12,
        seed: 1,
    };
    let d = synth_dataset(&spec, Split::Val).unwrap();
    assert_eq!((d.negatives(), d.positives(), d.split()), (7, 3, Split::Val));
    assert_eq!(d.image_hw(), (12, 12));
}

/// Logistic regression on raw pixels, full batch.
fn linear_probe(data: &LabeledDataset, steps: usize) -> Linear {
    let n = data.len();
    let dim = 28 * 28;
    let mut probe = Linear::zeros(dim, 2);
    let mut sw = AdamState::new(probe.weight.len());
    let mut sb = AdamState::new(2);
    let config = AdamConfig::with_lr(1e-2);
    let images: Vec<Tensor> = (0..n).map(|i| data.image(i)).collect();
    for _ in 0..steps {
        let mut gw = vec![0.0; probe.weight.len()];
        let mut gb = vec![0.0; 2];
        for (i, x) in images.iter().enumerate() {
            let z = probe.forward(x.data()).unwrap();
            let (_, g) = cross_entropy([z[0], z[1]], data.label(i)).unwrap();
            let (_, lg) = probe.backward(x.data(), &[g[0] / n as f64, g[1] / n as f64]).unwrap();
            gw.iter_mut().zip(&lg.weight).for_each(|(a, b)| *a += b);
            gb.iter_mut().zip(&lg.bias).for_each(|(a, b)| *a += b);
        }
        sw.step(probe.weight.data_mut(), &gw, &config).unwrap();
        sb.step(probe.bias.data_mut(), &gb, &config).unwrap();
    }
    probe
}

fn probe_accuracy(probe: &Linear, data: &LabeledDataset) -> f64 {
    let correct = (0..data.len())
        .filter(|&i| {
            let z = probe.forward(data.image(i).data()).unwrap();
            u8::from(z[1] > z[0]) == data.label(i)
        })
        .count();
    correct as f64 / data.len() as f64
}

#[test]
fn separable_blobs_pass_the_linear_probe() {
    let data = synth_dataset(&SynthSpec::balanced(SynthKind::SeparableBlobs, 200, 3), Split::Train).unwrap();
    let acc = probe_accuracy(&linear_probe(&data, 100), &data);
    assert!(acc > 0.95, "probe accuracy {acc}");
}

#[test]
fn noise_vs_signal_defeats_the_linear_probe_on_held_out_data() {
    // XOR of two markers: no linear function of the pixels separates it.
    let train = synth_dataset(&SynthSpec::balanced(SynthKind::NoiseVsSignal, 200, 3), Split::Train).unwrap();
    let test = synth_dataset(&SynthSpec::balanced(SynthKind::NoiseVsSignal, 200, 4), Split::Test).unwrap();
    let probe = linear_probe(&train, 100);
    let acc = probe_accuracy(&probe, &test);
    assert!((0.3..=0.7).contains(&acc), "{acc}");
}

#[test]
fn rejects_bad_pixels_and_labels() {
    let images = Tensor::new(&[1, 1, 2, 2], vec![0.0, 1.5, 0.0, 0.0]).unwrap();
    assert!(LabeledDataset::new(images, vec![0], Split::Train).is_err());
    let images = Tensor::new(&[1, 1, 2, 2], vec![0.0; 4]).unwrap();
    assert!(LabeledDataset::new(images.clone(), vec![2], Split::Train).is_err());
    assert!(LabeledDataset::new(images, vec![0, 1], Split::Train).is_err());
}

#[test]
fn shuffle_is_a_permutation() {
    let mut rng = SplitMix64::new(5);
    let mut v: Vec<usize> = (0..50).collect();
    rng.shuffle(&mut v);
    let mut s = v.clone();
    s.sort_unstable();
    assert_eq!(s, (0..50).collect::<Vec<_>>());
    assert_ne!(v, s);
}
