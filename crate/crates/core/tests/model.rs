use lpnet_core::model::{
    count_parameters, derain, init_params, register_subnet, subnet_forward, LpNetParams, ModelConfig, SubNetParams,
};
use lpnet_core::{Dims, Eager, Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Zero-padded direct convolution.
fn conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let d = x.dims();
    let wd = w.dims();
    let r = (wd.height / 2) as isize;
    Tensor::from_fn(d.with_channels(wd.batch), |n, o, y, xx| {
        let mut acc = b.data()[o];
        for i in 0..wd.channels {
            for ky in 0..wd.height as isize {
                for kx in 0..wd.width as isize {
                    let (sy, sx) = (y as isize + ky - r, xx as isize + kx - r);
                    if sy >= 0 && sx >= 0 && (sy as usize) < d.height && (sx as usize) < d.width {
                        acc += w.at(o, i, ky as usize, kx as usize) * x.at(n, i, sy as usize, sx as usize);
                    }
                }
            }
        }
        acc
    })
}

fn lrelu(x: &Tensor<f64>) -> Tensor<f64> {
    x.map(|v| if v > 0.0 { v } else { 0.2 * v })
}

fn plus(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    a.zip_map(b, "plus", |x, y| x + y).unwrap()
}

/// The sub-network written out with every recursion unrolled by hand.
fn subnet_oracle(x: &Tensor<f64>, p: &SubNetParams<f64>) -> Tensor<f64> {
    let (w, b) = (&p.weights, &p.biases);
    let h0 = lrelu(&conv(x, &w[0], &b[0]));
    let block = |h: &Tensor<f64>| {
        let f1 = lrelu(&conv(h, &w[1], &b[1]));
        let f2 = lrelu(&conv(&f1, &w[2], &b[2]));
        lrelu(&plus(&conv(&f2, &w[3], &b[3]), &h0))
    };
    let h1 = block(&h0);
    let h2 = block(&h1);
    let h3 = block(&h2);
    let h4 = block(&h3);
    let h5 = block(&h4);
    plus(&conv(&h5, &w[4], &b[4]), x)
}

fn randomize(p: &mut LpNetParams<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in p.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-0.3..0.3);
        }
    }
}

#[test]
fn subnet_matches_unrolled_oracle() {
    let cfg = ModelConfig::default();
    let mut params = LpNetParams::<f64>::zeros(&cfg).unwrap();
    randomize(&mut params, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::from_fn(Dims::new(2, 3, 9, 11), |_, _, _, _| rng.gen_range(-0.5..0.5));
    for (level, sub) in params.subnets.iter().enumerate() {
        let (w, b) = register_subnet(&mut Eager, level, sub);
        let got = subnet_forward(&mut Eager, &x, &w, &b, 5, 0.2).unwrap();
        let want = subnet_oracle(&x, sub);
        assert!(got.max_abs_diff(&want) < 1e-12, "level {}", level + 1);
    }
}

#[test]
fn zero_reconstruction_layer_gives_identity() {
    let cfg = ModelConfig::default();
    let mut params = init_params::<f32>(&cfg, 8).unwrap();
    for sub in &mut params.subnets {
        sub.weights[4] = Tensor::zeros(sub.weights[4].dims());
        sub.biases[4] = Tensor::zeros(sub.biases[4].dims());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (h, w) in [(16, 16), (37, 50), (80, 80)] {
        let x = Tensor::from_fn(Dims::new(1, 3, h, w), |_, _, _, _| rng.gen_range(0.0f32..=1.0));
        let y = derain(&params, &x).unwrap();
        assert!(y.max_abs_diff(&x) <= 1e-5, "{h}x{w}: {}", y.max_abs_diff(&x));
    }
}

#[test]
fn parameter_counts() {
    assert_eq!(count_parameters(&ModelConfig::default()), 7548);
    assert_eq!(count_parameters(&ModelConfig::uniform(16)), 27055);
    let p = init_params::<f32>(&ModelConfig::default(), 0).unwrap();
    assert_eq!(p.param_count(), 7548);
    assert_eq!(p.flatten().len(), 7548);
}

#[test]
fn inputs_below_the_pyramid_floor_are_rejected() {
    let p = init_params::<f32>(&ModelConfig::default(), 0).unwrap();
    let x = Tensor::<f32>::zeros(Dims::new(1, 3, 15, 40));
    assert!(matches!(
        derain(&p, &x),
        Err(Error::TooSmall { height: 15, width: 40, levels: 5, min_side: 16 })
    ));
}
