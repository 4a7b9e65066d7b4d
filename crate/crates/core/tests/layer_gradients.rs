mod common;

use common::{random_image, random_vec};
use proptest::prelude::*;
use qvf_core::neural::{
    cross_entropy, maxpool2d_backward, maxpool2d_forward, Backbone, BackboneSpec, BatchNorm1d,
    Conv2d, LayerDesc, Linear,
};
use qvf_core::quanv::{quanv_backward, quanv_forward, QuanvConfig, QuanvMode, QuanvState};
use qvf_core::rng::SplitMix64;
use qvf_core::Tensor;

const H: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central difference of `f` with respect to every entry of `x`.
fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let v = x[i];
            x[i] = v + H;
            let p = f(&x);
            x[i] = v - H;
            let m = f(&x);
            x[i] = v;
            (p - m) / (2.0 * H)
        })
        .collect()
}

fn assert_close(analytic: &[f64], numeric: &[f64], what: &str) {
    assert_eq!(analytic.len(), numeric.len(), "{what}: length");
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert!((a - n).abs() < TOL, "{what}[{i}]: analytic {a}, numeric {n}");
    }
}

#[test]
fn linear_gradients() {
    let mut rng = SplitMix64::new(1);
    let layer = Linear::kaiming(7, 5, &mut rng);
    let x = random_vec(&mut rng, 7, -1.0, 1.0);
    let u = random_vec(&mut rng, 5, -1.0, 1.0);
    let (gx, g) = layer.backward(&x, &u).unwrap();
    assert_close(&gx, &numeric_grad(&x, |x| dot(&layer.forward(x).unwrap(), &u)), "input");
    let gw = numeric_grad(layer.weight.data(), |w| {
        let mut l = layer.clone();
        l.weight.data_mut().copy_from_slice(w);
        dot(&l.forward(&x).unwrap(), &u)
    });
    assert_close(&g.weight, &gw, "weight");
    assert_close(&g.bias, &u, "bias");
}

#[test]
fn conv_gradients_with_stride_and_padding() {
    let mut rng = SplitMix64::new(2);
    let mut conv = Conv2d::kaiming(2, 3, 3, 2, 1, &mut rng);
    conv.bias.data_mut().copy_from_slice(&random_vec(&mut rng, 3, -0.5, 0.5));
    let x = random_image(&mut rng, 2, 5, 5);
    let out = conv.forward(&x).unwrap();
    let u = Tensor::new(out.shape(), random_vec(&mut rng, out.len(), -1.0, 1.0)).unwrap();
    let (gx, g) = conv.backward(&x, &u).unwrap();
    let f_input = |v: &[f64]| dot(conv.forward(&Tensor::new(x.shape(), v.to_vec()).unwrap()).unwrap().data(), u.data());
    assert_close(gx.data(), &numeric_grad(x.data(), f_input), "input");
    let gw = numeric_grad(conv.weight.data(), |w| {
        let mut c = conv.clone();
        c.weight.data_mut().copy_from_slice(w);
        dot(c.forward(&x).unwrap().data(), u.data())
    });
    assert_close(&g.weight, &gw, "weight");
    let gb = numeric_grad(conv.bias.data(), |b| {
        let mut c = conv.clone();
        c.bias.data_mut().copy_from_slice(b);
        dot(c.forward(&x).unwrap().data(), u.data())
    });
    assert_close(&g.bias, &gb, "bias");
}

#[test]
fn maxpool_gradient_routes_to_argmax() {
    let mut rng = SplitMix64::new(3);
    let x = random_image(&mut rng, 2, 4, 6);
    let (out, arg) = maxpool2d_forward(&x, 2).unwrap();
    let u = random_vec(&mut rng, out.len(), -1.0, 1.0);
    let g = maxpool2d_backward(x.shape(), &arg, &u).unwrap();
    let f = |v: &[f64]| dot(maxpool2d_forward(&Tensor::new(x.shape(), v.to_vec()).unwrap(), 2).unwrap().0.data(), &u);
    assert_close(g.data(), &numeric_grad(x.data(), f), "input");
}

#[test]
fn batchnorm_gradients() {
    let mut rng = SplitMix64::new(4);
    let mut bn = BatchNorm1d::new(3);
    bn.weight.data_mut().copy_from_slice(&random_vec(&mut rng, 3, 0.5, 1.5));
    bn.bias.data_mut().copy_from_slice(&random_vec(&mut rng, 3, -0.5, 0.5));
    let batch: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 3, -2.0, 2.0)).collect();
    let u: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 3, -1.0, 1.0)).collect();
    let loss = |bn: &BatchNorm1d, b: &[Vec<f64>]| -> f64 {
        let (out, _) = bn.forward_train(b).unwrap();
        out.iter().zip(&u).map(|(o, u)| dot(o, u)).sum()
    };
    let (_, cache) = bn.forward_train(&batch).unwrap();
    let (gx, gw, gb) = bn.backward(&cache, &u).unwrap();
    let flat: Vec<f64> = batch.concat();
    let numeric = numeric_grad(&flat, |v| loss(&bn, &v.chunks(3).map(<[f64]>::to_vec).collect::<Vec<_>>()));
    assert_close(&gx.concat(), &numeric, "input");
    let nw = numeric_grad(bn.weight.data(), |w| {
        let mut b = bn.clone();
        b.weight.data_mut().copy_from_slice(w);
        loss(&b, &batch)
    });
    assert_close(&gw, &nw, "weight");
    let nb = numeric_grad(bn.bias.data(), |w| {
        let mut b = bn.clone();
        b.bias.data_mut().copy_from_slice(w);
        loss(&b, &batch)
    });
    assert_close(&gb, &nb, "bias");
}

#[test]
fn residual_backbone_gradients() {
    let spec = BackboneSpec::custom(
        [1, 6, 6],
        vec![
            LayerDesc::Conv {
                in_channels: 1,
                out_channels: 4,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerDesc::Relu,
            LayerDesc::Residual {
                in_channels: 4,
                out_channels: 4,
                stride: 1,
            },
            LayerDesc::Residual {
                in_channels: 4,
                out_channels: 6,
                stride: 2,
            },
            LayerDesc::GlobalAvgPool,
            LayerDesc::Linear { inputs: 6, outputs: 3 },
        ],
        3,
    )
    .unwrap();
    let mut rng = SplitMix64::new(5);
    let net = Backbone::init(spec, &mut rng).unwrap();
    let x = random_image(&mut rng, 1, 6, 6);
    let u = random_vec(&mut rng, 3, -1.0, 1.0);
    let (_, cache) = net.forward(&x).unwrap();
    let (gx, grads) = net.backward(&cache, &u).unwrap();
    let f_input = |v: &[f64]| dot(&net.forward(&Tensor::new(x.shape(), v.to_vec()).unwrap()).unwrap().0, &u);
    assert_close(gx.data(), &numeric_grad(x.data(), f_input), "input");
    let names: Vec<String> = net.params().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), grads.len());
    for (k, name) in names.iter().enumerate() {
        let values = net.params()[k].1.data().to_vec();
        let numeric = numeric_grad(&values, |v| {
            let mut n = net.clone();
            n.params_mut()[k].1.data_mut().copy_from_slice(v);
            dot(&n.forward(&x).unwrap().0, &u)
        });
        assert_close(&grads[k], &numeric, name);
    }
}

#[test]
fn scnn_shapes_and_count() {
    let spec = BackboneSpec::scnn(128);
    assert_eq!(spec.param_count(), 99_960);
    let net = Backbone::init(spec, &mut SplitMix64::new(0)).unwrap();
    let (h, _) = net.forward(&Tensor::zeros(&[1, 28, 28])).unwrap();
    assert_eq!(h.len(), 128);
}

#[test]
fn mini_resnet_embeds_to_d() {
    let net = Backbone::init(BackboneSpec::mini_resnet(128), &mut SplitMix64::new(0)).unwrap();
    let mut rng = SplitMix64::new(1);
    let (h, _) = net.forward(&random_image(&mut rng, 1, 28, 28)).unwrap();
    assert_eq!(h.len(), 128);
    assert!(h.iter().all(|v| v.is_finite()));
}

#[test]
fn quanv_gradients_match_finite_differences() {
    let config = QuanvConfig::standard(QuanvMode::Trainable, 9);
    let state = QuanvState::init(&config);
    let mut rng = SplitMix64::new(6);
    let x = random_image(&mut rng, 1, 4, 6);
    let out = quanv_forward(&x, &config, &state).unwrap();
    let u = Tensor::new(out.shape(), random_vec(&mut rng, out.len(), -1.0, 1.0)).unwrap();
    let g = quanv_backward(&x, &config, &state, &u).unwrap();
    let f_theta = |t: &[f64]| {
        let s = QuanvState::from_theta(&config, t.to_vec()).unwrap();
        dot(quanv_forward(&x, &config, &s).unwrap().data(), u.data())
    };
    assert_close(&g.theta, &numeric_grad(state.theta(), f_theta), "theta");
    let f_image = |v: &[f64]| dot(quanv_forward(&Tensor::new(x.shape(), v.to_vec()).unwrap(), &config, &state).unwrap().data(), u.data());
    assert_close(g.image.data(), &numeric_grad(x.data(), f_image), "image");
}

#[test]
fn fixed_quanv_has_exactly_zero_theta_gradient() {
    let config = QuanvConfig::standard(QuanvMode::Fixed, 9);
    let state = QuanvState::init(&config);
    let x = random_image(&mut SplitMix64::new(7), 1, 28, 28);
    let u = Tensor::new(&[4, 14, 14], vec![1.0; 784]).unwrap();
    let g = quanv_backward(&x, &config, &state, &u).unwrap();
    assert!(g.theta.iter().all(|&v| v == 0.0 && v.is_sign_positive()));
    assert!(g.image.data().iter().any(|&v| v != 0.0));
}

#[test]
fn cross_entropy_gradient() {
    for (z, y) in [([0.3, -1.2], 0u8), ([2.0, 5.0], 1), ([-40.0, 40.0], 0)] {
        let (_, g) = cross_entropy(z, y).unwrap();
        let n = numeric_grad(&z, |v| cross_entropy([v[0], v[1]], y).unwrap().0);
        assert_close(&g, &n, "logits");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Changing one pixel only changes outputs of windows that contain it.
    #[test]
    fn quanv_is_local(seed in any::<u64>(), py in 0usize..6, px in 0usize..6) {
        let config = QuanvConfig::standard(QuanvMode::Fixed, seed);
        let state = QuanvState::init(&config);
        let mut rng = SplitMix64::new(seed);
        let x = random_image(&mut rng, 1, 6, 6);
        let mut y = x.clone();
        y.data_mut()[py * 6 + px] = rng.uniform(0.0, 1.0);
        let a = quanv_forward(&x, &config, &state).unwrap();
        let b = quanv_forward(&y, &config, &state).unwrap();
        for c in 0..4 {
            for i in 0..3 {
                for j in 0..3 {
                    let k = (c * 3 + i) * 3 + j;
                    if i != py / 2 || j != px / 2 {
                        prop_assert_eq!(a.data()[k], b.data()[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn relu_linear_outputs_finite(seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let l = Linear::kaiming(16, 4, &mut rng);
        let x = random_vec(&mut rng, 16, -1e3, 1e3);
        prop_assert!(l.forward(&x).unwrap().iter().all(|v| v.is_finite()));
    }
}
