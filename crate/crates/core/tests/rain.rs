use lpnet_core::loss::psnr;
use lpnet_core::pyramid::laplacian_pyramid;
use lpnet_core::rain::{synthesize_rain, RainParams};
use lpnet_core::scene::generate_scene;
use lpnet_core::Tensor;
use proptest::prelude::*;

fn mean_abs(t: &Tensor<f64>) -> f64 {
    t.data().iter().map(|v| v.abs()).sum::<f64>() / t.len() as f64
}

/// Rain is fine-scale: the three finest band-pass levels of the added layer
/// together carry more mean magnitude than the coarsest level, which holds
/// the layer's average brightness.
#[test]
fn streak_energy_sits_in_fine_levels() {
    for seed in 0..10 {
        let clean: Tensor<f64> = generate_scene(128, 160, seed);
        let rainy = synthesize_rain(&clean, &RainParams { seed, ..RainParams::default() }).unwrap();
        let diff = rainy.zip_map(&clean, "diff", |a, b| a - b).unwrap();
        let lap = laplacian_pyramid(&diff, 5).unwrap();
        let e: Vec<f64> = lap.levels.iter().map(mean_abs).collect();
        let fine: f64 = e[..3].iter().sum();
        assert!(fine > e[4], "seed {seed}: levels 1-3 {fine:.4} vs level 5 {:.4}", e[4]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rain_brightens_within_intensity(
        seed in any::<u64>(),
        density in 500.0f64..20000.0,
        intensity in 0.05f64..1.0,
        width in 0.5f64..3.0,
        blur in 0.0f64..1.5,
    ) {
        let clean: Tensor<f64> = generate_scene(40, 48, seed);
        let p = RainParams { seed, density, intensity, width, blur_sigma: blur, ..RainParams::default() };
        let rainy = synthesize_rain(&clean, &p).unwrap();
        for (c, r) in clean.data().iter().zip(rainy.data()) {
            prop_assert!(*r >= *c);
            prop_assert!(*r - *c <= intensity + 1e-12);
            prop_assert!((0.0..=1.0).contains(r));
        }
        let q = psnr(&rainy, &clean).unwrap();
        prop_assert!(q.is_finite());
        prop_assert_eq!(rainy, synthesize_rain(&clean, &p).unwrap());
    }
}
