use std::path::Path;
use std::process::{Command, Output};

use lpnet::checkpoint::{load_checkpoint, save_checkpoint};
use lpnet::cli::score_pair;
use lpnet::image_io::{load_image, save_image};
use lpnet_core::loss::{psnr, ssim_value};
use lpnet_core::model::{init_params, ModelConfig};
use lpnet_core::scene::generate_scene;
use lpnet_core::{Dims, Tensor};

fn lpnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpnet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scene_dir(dir: &Path, n: u64, h: usize, w: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let img: Tensor<f64> = generate_scene(h, w, 50 + i);
        save_image(&img, &dir.join(format!("img{i}.png"))).unwrap();
    }
}

#[test]
fn synth_reports_pairs_and_psnr_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene_dir(&d.join("clean"), 3, 40, 40);
    let a = lpnet(&["--seed", "4", "synth", "clean", "a", "--density", "3000"], d);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a).contains("synthesized 3 pairs"), "{}", stdout(&a));
    assert!(stdout(&a).contains("dB"));
    let b = lpnet(&["--seed", "4", "synth", "clean", "b", "--density", "3000"], d);
    assert_eq!(stdout(&a).replace(" a,", ""), stdout(&b).replace(" b,", ""));
    for i in 0..3 {
        let f = format!("rainy/img{i}.png");
        assert_eq!(std::fs::read(d.join("a").join(&f)).unwrap(), std::fs::read(d.join("b").join(&f)).unwrap());
    }
    let text = std::fs::read_to_string(d.join("a/rain.txt")).unwrap();
    assert!(text.contains("density = 3000") && text.contains("seed = 4"), "{text}");

    let missing = lpnet(&["synth", "nowhere", "c"], d);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("nowhere"));
    let no_args = lpnet(&["synth"], d);
    assert_eq!(no_args.status.code(), Some(1));
}

#[test]
fn train_prints_parameter_count_and_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene_dir(&d.join("scenes"), 2, 36, 36);
    assert!(lpnet(&["synth", "scenes", "corpus"], d).status.success());
    let o = lpnet(
        &["train", "corpus", "--out", "m.lpn", "--patches-per-epoch", "6", "--batch-size", "2", "--patch-size", "32", "--epochs", "2"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("parameters: 7548\n"), "{}", stdout(&o));
    assert!(stderr(&o).contains("batch_size = 2"), "effective config is echoed");
    let csv = std::fs::read_to_string(d.join("m.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,total,l1_1,l1_2,l1_3,l1_4,l1_5,ssim_1,ssim_2");
    assert_eq!(lines.len(), 1 + 6);
    for (i, row) in lines[1..].iter().enumerate() {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 9);
        assert_eq!(cols[0], i as f64);
        let sum: f64 = cols[2..].iter().sum();
        assert!((sum - cols[1]).abs() < 1e-5, "{row}");
    }
    let ck = load_checkpoint(&d.join("m.lpn")).unwrap();
    assert_eq!(ck.adam.unwrap().step, 6);
}

#[test]
fn zero_epochs_keeps_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene_dir(&d.join("scenes"), 1, 32, 32);
    assert!(lpnet(&["synth", "scenes", "corpus"], d).status.success());
    let o = lpnet(&["--seed", "8", "train", "corpus", "--out", "z.lpn", "--epochs", "0", "--patch-size", "32"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let ck = load_checkpoint(&d.join("z.lpn")).unwrap();
    assert_eq!(ck.params, init_params::<f32>(&ModelConfig::default(), 8).unwrap());
    assert_eq!(std::fs::read_to_string(d.join("z.csv")).unwrap().lines().count(), 1);
}

#[test]
fn train_rejects_bad_inputs_with_the_right_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene_dir(&d.join("scenes"), 1, 24, 24);
    assert!(lpnet(&["synth", "scenes", "corpus"], d).status.success());
    // images smaller than the patch
    let o = lpnet(&["train", "corpus", "--out", "m.lpn"], d);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("img0"), "{}", stderr(&o));
    // patch too small for the pyramid
    let o = lpnet(&["train", "corpus", "--out", "m.lpn", "--patch-size", "8"], d);
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(d.join("bad.cfg"), "epochs = 1\nwarmup = 3\n").unwrap();
    let o = lpnet(&["--config", "bad.cfg", "train", "corpus", "--out", "m.lpn"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("warmup"));
    // flags win over the file
    std::fs::write(d.join("ok.cfg"), "epochs = 5\npatch_size = 24\nbatch_size = 1\npatches_per_epoch = 1\n").unwrap();
    let o = lpnet(&["--config", "ok.cfg", "train", "corpus", "--out", "m.lpn", "--epochs", "2"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(d.join("m.csv")).unwrap().lines().count(), 3);
}

#[test]
fn derain_keeps_sizes_and_reports_per_file_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let params = init_params::<f32>(&ModelConfig::default(), 2).unwrap();
    save_checkpoint(&d.join("m.lpn"), &params, None).unwrap();
    std::fs::create_dir(d.join("in")).unwrap();
    for (name, h, w) in [("a", 37, 61), ("b", 12, 40), ("c", 16, 17)] {
        let img: Tensor<f64> = generate_scene(h, w, 1);
        save_image(&img, &d.join("in").join(format!("{name}.png"))).unwrap();
    }
    let o = lpnet(&["derain", "m.lpn", "in", "out"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("b.png"), "{}", stderr(&o));
    assert!(stdout(&o).contains("derained 2 of 3"));
    for (name, h, w) in [("a", 37, 61), ("c", 16, 17)] {
        let out: Tensor<f32> = load_image(&d.join("out").join(format!("{name}.png"))).unwrap();
        assert_eq!(out.dims(), Dims::new(1, 3, h, w));
    }
    assert!(!d.join("out/b.png").exists());

    let single = lpnet(&["derain", "m.lpn", "in/a.png", "one"], d);
    assert!(single.status.success());
    assert_eq!(std::fs::read(d.join("one/a.png")).unwrap(), std::fs::read(d.join("out/a.png")).unwrap());

    let overwrite = lpnet(&["derain", "m.lpn", "in/a.png", "in"], d);
    assert_eq!(overwrite.status.code(), Some(2));

    std::fs::write(d.join("junk.lpn"), b"LPN0").unwrap();
    let bad = lpnet(&["derain", "junk.lpn", "in", "out2"], d);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("junk.lpn"));
}

#[test]
fn eval_matches_library_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("a")).unwrap();
    std::fs::create_dir_all(d.join("b")).unwrap();
    for i in 0..3u64 {
        let clean: Tensor<f64> = generate_scene(33, 29, i);
        let noisy = clean.map(|v| (v + 0.03 * ((v * 97.0).sin())).clamp(0.0, 1.0));
        save_image(&clean, &d.join(format!("b/p{i}.png"))).unwrap();
        save_image(&noisy, &d.join(format!("a/p{i}.png"))).unwrap();
    }
    let o = lpnet(&["eval", "a", "b"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "image,psnr,ssim");
    let (mut ps, mut ss) = (0.0, 0.0);
    for i in 0..3 {
        let a: Tensor<f32> = load_image(&d.join(format!("a/p{i}.png"))).unwrap();
        let b: Tensor<f32> = load_image(&d.join(format!("b/p{i}.png"))).unwrap();
        let (p, s) = (psnr(&a, &b).unwrap(), ssim_value(&a, &b).unwrap());
        assert_eq!(rows[1 + i], format!("p{i},{p:.2},{s:.2}"));
        assert_eq!(score_pair::<f32>(&d.join(format!("a/p{i}.png")), &d.join(format!("b/p{i}.png"))).unwrap(), (p, s));
        ps += p;
        ss += s;
    }
    assert_eq!(rows[4], format!("mean,{:.2},{:.2}", ps / 3.0, ss / 3.0));

    let same = lpnet(&["eval", "b", "b"], d);
    assert!(stdout(&same).contains("p0,inf,1.00"));
    assert!(stdout(&same).contains("mean,inf,1.00"));

    let img: Tensor<f64> = generate_scene(20, 20, 9);
    save_image(&img, &d.join("a/extra.png")).unwrap();
    let unpaired = lpnet(&["eval", "a", "b"], d);
    assert_eq!(unpaired.status.code(), Some(2));
    assert!(stderr(&unpaired).contains("extra.png"));
    assert_eq!(stdout(&unpaired).lines().count(), 5, "the unpaired file is excluded");
}

/// 8-bit images cannot differ by exactly 0.1, but 103 offsets of 25 levels
/// and 101 of 26 give a mean squared offset of (103·25² + 101·26²)/204 =
/// 650.25 = 0.01·255².
#[test]
fn eval_reports_20_db_for_a_tenth_offset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("a")).unwrap();
    std::fs::create_dir_all(d.join("b")).unwrap();
    let base = Tensor::from_fn(Dims::new(1, 3, 12, 17), |_, c, y, x| ((c * 31 + y * 7 + x * 3) % 200) as f64 / 255.0);
    let shifted = Tensor::from_fn(base.dims(), |n, c, y, x| {
        let off = if y * 17 + x < 101 { 26.0 } else { 25.0 };
        base.at(n, c, y, x) + off / 255.0
    });
    save_image(&base, &d.join("a/x.png")).unwrap();
    save_image(&shifted, &d.join("b/x.png")).unwrap();
    let o = lpnet(&["--precision", "f64", "eval", "a", "b"], d);
    assert!(stdout(&o).contains("x,20.00,"), "{}", stdout(&o));
}

#[test]
fn inspect_writes_levels_histograms_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let flat = Tensor::full(Dims::new(1, 3, 40, 52), 0.6f64);
    save_image(&flat, &d.join("flat.png")).unwrap();
    let o = lpnet(&["inspect", "flat.png", "out"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    for n in 1..=5 {
        assert!(d.join(format!("out/lap_{n}.png")).exists());
        assert!(d.join(format!("out/gauss_{n}.png")).exists());
    }
    for n in 1..=4 {
        let csv = std::fs::read_to_string(d.join(format!("out/hist_lap_{n}.csv"))).unwrap();
        let counts: Vec<u64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
        assert_eq!(counts.len(), 256);
        assert_eq!(counts.iter().sum::<u64>(), counts[128], "level {n}: all mass in the zero bin");
        assert!(counts[128] > 0);
        let zero_bin = csv.lines().nth(129).unwrap();
        assert!(zero_bin.starts_with("128,0,"), "{zero_bin}");
    }
    let scales = std::fs::read_to_string(d.join("out/scales.csv")).unwrap();
    assert!(scales.lines().any(|l| l.starts_with("gauss_1,0.6")), "{scales}");

    let img: Tensor<f64> = generate_scene(64, 80, 3);
    save_image(&img, &d.join("scene.png")).unwrap();
    let o = lpnet(&["inspect", "scene.png", "s"], d);
    assert!(o.status.success());
    let stats = std::fs::read_to_string(d.join("s/stats.csv")).unwrap();
    let kurt = |name: &str| -> f64 {
        stats
            .lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap()
            .rsplit(',')
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(kurt("lap_1") > kurt("image"));
    assert!(stdout(&o).contains("laplacian level 1"));
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(lpnet(&["--help"], dir.path()).status.success());
    assert_eq!(lpnet(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(lpnet(&["--precision", "f16", "eval", "a", "b"], dir.path()).status.code(), Some(1));
}

#[test]
fn scenes_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(lpnet(&["--seed", "2", "scenes", "a", "--count", "3", "--height", "20", "--width", "30"], d).status.success());
    assert!(lpnet(&["--seed", "2", "scenes", "b", "--count", "2", "--first", "1", "--height", "20", "--width", "30"], d).status.success());
    assert_eq!(std::fs::read(d.join("a/scene_0001.png")).unwrap(), std::fs::read(d.join("b/scene_0001.png")).unwrap());
    let img: Tensor<f32> = load_image(&d.join("a/scene_0002.png")).unwrap();
    assert_eq!(img.dims(), Dims::new(1, 3, 20, 30));
}
