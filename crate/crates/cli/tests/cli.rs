use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dcdl::binarize::GrayImage;
use dcdl::datasets::{encode_idx_images, encode_idx_labels, read_container};

const TINY: &str = r#"
dataset = "synthetic"
classes = [1]
seeds = [4]
train_size = 400
holdout_pool = 600
holdout_size = 100
test_size = 160
k = 3

[sls]
max_iteration = 200
max_windows = 5000
max_validation_windows = 1000

[nn]
max_epochs = 3

[synthetic]
train_count = 3000
test_count = 1000
"#;

fn dcdl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcdl"))
        .current_dir(dir)
        .env_remove("DCDL_DATA_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dcdl(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn pgm_pixels(path: &Path) -> Vec<u8> {
    let bytes = fs::read(path).unwrap();
    let header = b"P5\n3 3\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    bytes[header.len()..].to_vec()
}

#[test]
fn missing_input_names_the_path_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcdl(dir.path(), &["dither", "--images", "absent-images", "--labels", "absent-labels", "--out", "x.bits"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent-images"));
    assert!(!dir.path().join("x.bits").exists());
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dcdl(dir.path(), &["no-such-command"]).status.code(), Some(1));
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    let out = dcdl(dir.path(), &["--config", "tiny.toml", "--k", "0", "--out", "run", "run-experiment"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k must be at least 1"));
    assert!(!dir.path().join("run").exists());
    fs::write(dir.path().join("bad.toml"), "colour = 3\n").unwrap();
    assert_eq!(dcdl(dir.path(), &["--config", "bad.toml", "run-experiment"]).status.code(), Some(1));
}

#[test]
fn dither_reads_idx_without_touching_it() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<GrayImage> = (0..5).map(|i| GrayImage::constant(4, 3, 1, i as f32 / 4.0).unwrap()).collect();
    let img_bytes = encode_idx_images(&images).unwrap();
    let lbl_bytes = encode_idx_labels(&[0, 1, 2, 3, 4]).unwrap();
    fs::write(dir.path().join("img"), &img_bytes).unwrap();
    fs::write(dir.path().join("lbl"), &lbl_bytes).unwrap();
    let stdout = ok(dir.path(), &["dither", "--images", "img", "--labels", "lbl", "--out", "d.bits"]);
    assert!(stdout.starts_with("5 images"));
    let set = read_container(&dir.path().join("d.bits")).unwrap();
    assert_eq!(set.labels, vec![0, 1, 2, 3, 4]);
    assert_eq!(set.planes[0].count_ones(), 0);
    assert_eq!(set.planes[4].count_ones(), 12);
    assert_eq!(fs::read(dir.path().join("img")).unwrap(), img_bytes);
    assert_eq!(fs::read(dir.path().join("lbl")).unwrap(), lbl_bytes);
}

#[test]
fn figure_one_formula_renders_two_ternary_images() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fig1.txt"), "(x5 & !x7) | (x8)\n").unwrap();
    ok(dir.path(), &["visualize", "fig1.txt", "--window", "3x3", "--format", "pgm", "--out", "vis"]);
    let (g, w, b) = (128, 255, 0);
    assert_eq!(pgm_pixels(&dir.path().join("vis/fig1_term0.pgm")), [g, g, g, g, g, w, g, b, g]);
    assert_eq!(pgm_pixels(&dir.path().join("vis/fig1_term1.pgm")), [g, g, g, g, g, g, g, g, w]);
    assert!(!dir.path().join("vis/fig1_term2.pgm").exists());
    let out = dcdl(dir.path(), &["visualize", "fig1.txt", "--out", "vis"]);
    assert_eq!(out.status.code(), Some(1), "a bare formula needs its window");
}

#[test]
fn vacuous_rule_renders_gray_and_malformed_rule_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.txt"), "conv 3 3 1 1\n()\n").unwrap();
    ok(dir.path(), &["visualize", "empty.txt", "--format", "pgm", "--out", "vis"]);
    assert_eq!(pgm_pixels(&dir.path().join("vis/empty_term0.pgm")), [128; 9]);
    assert_eq!(pgm_pixels(&dir.path().join("vis/empty_reduced.pgm")), [128; 9]);
    fs::write(dir.path().join("bad.txt"), "conv 3 3 1 1\n(x9)\n").unwrap();
    let out = dcdl(dir.path(), &["visualize", "bad.txt", "--out", "vis"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.txt"));
}

#[test]
fn step_commands_reproduce_the_experiment_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("tiny.toml"), TINY).unwrap();
    let c = ["--config", "tiny.toml"];
    let run = |args: &[&str]| ok(d, &[&c[..], args].concat());
    let csv = run(&["--out", "exp", "run-experiment"]);
    assert!(csv.starts_with("run_id,class,seed,method,similarity,accuracy\n"));

    run(&["--out", "train.bits", "dither", "--dataset", "synthetic"]);
    run(&["--out", "test.bits", "dither", "--dataset", "synthetic", "--split", "test"]);
    run(&["--out", "nn.json", "train-nn", "--data", "train.bits", "--class", "1"]);
    run(&["--out", "dcdl.txt", "extract-dcdl", "--data", "train.bits", "--class", "1", "--model", "nn.json"]);
    run(&["--out", "bb_prediction.txt", "extract-blackbox", "--data", "train.bits", "--class", "1", "--model", "nn.json"]);
    let label = ["--out", "bb_label.txt", "extract-blackbox", "--mode", "label"];
    run(&[&label[..], &["--data", "train.bits", "--class", "1", "--model", "nn.json"]].concat());
    for f in ["nn.json", "dcdl.txt", "bb_prediction.txt", "bb_label.txt"] {
        assert_eq!(fs::read(d.join(f)).unwrap(), fs::read(d.join("exp/models/class1_seed4").join(f)).unwrap(), "{f}");
    }

    let eval = run(&[
        "evaluate",
        "--data",
        "test.bits",
        "--class",
        "1",
        "--model",
        "nn.json",
        "--dcdl",
        "dcdl.txt",
        "--rule",
        "bb_prediction.txt",
        "--rule",
        "bb_label.txt",
    ]);
    let from_experiment: Vec<String> = csv.lines().skip(1).take(4).map(|l| l.splitn(4, ',').nth(3).unwrap().to_string()).collect();
    let from_steps: Vec<String> = eval.lines().skip(1).map(str::to_string).collect();
    assert_eq!(from_steps, from_experiment);

    let stdout = run(&["--out", "vis", "visualize", "exp"]);
    assert!(stdout.contains("images written"));
    assert!(d.join("vis/class1_seed4_dcdl_layer0_filter7_reduced.png").exists());
    assert!(d.join("vis/class1_seed4_bb_label_term2.png").exists());
}
