use lpnet_core::conv::{conv2d, ConvSpec, Padding};
use lpnet_core::{Dims, Tensor};
use proptest::prelude::*;

/// Mirror without edge repeat, written out as a loop rather than the
/// closed form the library uses.
fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct seven-loop convolution.
fn naive(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, pad: Padding) -> Tensor<f64> {
    let d = x.dims();
    let wd = w.dims();
    let (ry, rx) = ((wd.height / 2) as isize, (wd.width / 2) as isize);
    Tensor::from_fn(d.with_channels(wd.batch), |n, o, y, xx| {
        let mut acc = b.at(0, o, 0, 0);
        for i in 0..wd.channels {
            for ky in 0..wd.height {
                for kx in 0..wd.width {
                    let sy = y as isize + ky as isize - ry;
                    let sx = xx as isize + kx as isize - rx;
                    let v = match pad {
                        Padding::ZeroSame => {
                            if sy < 0 || sx < 0 || sy >= d.height as isize || sx >= d.width as isize {
                                0.0
                            } else {
                                x.at(n, i, sy as usize, sx as usize)
                            }
                        }
                        Padding::SymmetricSame => x.at(n, i, mirror(sy, d.height), mirror(sx, d.width)),
                    };
                    acc += w.at(o, i, ky, kx) * v;
                }
            }
        }
        acc
    })
}

fn tensor(dims: Dims, values: &[f64]) -> Tensor<f64> {
    Tensor::from_fn(dims, |n, c, y, x| {
        let i = ((n * dims.channels + c) * dims.height + y) * dims.width + x;
        values[i % values.len()]
    })
}

#[derive(Debug, Clone)]
struct Case {
    batch: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: Padding,
    values: Vec<f64>,
}

fn case() -> impl Strategy<Value = Case> {
    (
        1usize..=3,
        1usize..=5,
        1usize..=5,
        1usize..=14,
        1usize..=14,
        prop::sample::select(vec![1usize, 3, 5, 7]),
        prop::sample::select(vec![1usize, 3, 5, 7]),
        prop::bool::ANY,
        prop::collection::vec(-2.0f64..2.0, 97..211),
    )
        .prop_map(|(batch, cin, cout, h, w, kh, kw, sym, values)| Case {
            batch,
            cin,
            cout,
            h,
            w,
            kh,
            kw,
            pad: if sym { Padding::SymmetricSame } else { Padding::ZeroSame },
            values,
        })
}

fn rel_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn conv_matches_direct_oracle(c in case()) {
        let spec = ConvSpec {
            kernel_h: c.kh,
            kernel_w: c.kw,
            in_channels: c.cin,
            out_channels: c.cout,
            padding: c.pad,
        };
        let x = tensor(Dims::new(c.batch, c.cin, c.h, c.w), &c.values);
        let w = tensor(spec.weight_dims(), &c.values[3..]);
        let b = tensor(spec.bias_dims(), &c.values[7..]);
        let got = conv2d(&x, &w, &b, &spec).unwrap();
        let want = naive(&x, &w, &b, c.pad);
        prop_assert_eq!(got.dims(), want.dims());
        prop_assert!(rel_diff(&got, &want) <= 1e-6);

        let got32 = conv2d(&x.cast::<f32>(), &w.cast(), &b.cast(), &spec).unwrap().cast::<f64>();
        prop_assert!(rel_diff(&got32, &want) <= 1e-4);
    }
}

#[test]
fn mirror_examples() {
    let seq: Vec<usize> = (-4..8).map(|i| mirror(i, 4)).collect();
    assert_eq!(seq, [2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
    for i in -20..20 {
        assert_eq!(mirror(i, 5), lpnet_core::filter::reflect_index(i, 5));
    }
}
