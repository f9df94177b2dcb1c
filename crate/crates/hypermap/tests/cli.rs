//! Exit-code contract and reproducibility checks against the built binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hypermap")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth_small(dir: &Path, seed: u64) {
    let out = run(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--scenes",
        "4",
        "--width",
        "108",
        "--height",
        "108",
        "--stride",
        "36",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn train_small(data: &Path, model: &Path, epochs: &str) {
    let out = run(&[
        "train",
        "--manifest",
        data.join("manifest.tsv").to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--seed",
        "3",
        "--epochs",
        epochs,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_is_reproducible_and_writes_run_record() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    synth_small(&a, 21);
    synth_small(&b, 21);
    for name in [
        "manifest.tsv",
        "scene_00.pgm",
        "scene_03.pgm",
        "mask_01.pgm",
        "run.txt",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
    let record = fs::read_to_string(a.join("run.txt")).unwrap();
    assert!(record.contains("command=synth"));
    assert!(record.contains("seed=21"));
}

#[test]
fn bad_ratios_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        "--out",
        tmp.path().to_str().unwrap(),
        "--ratios",
        "0.9,0.9,0.9",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_manifest_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--manifest",
        tmp.path().join("nope.tsv").to_str().unwrap(),
        "--out",
        tmp.path().join("m").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exploding_learning_rate_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth_small(&data, 4);
    let out = run(&[
        "train",
        "--manifest",
        data.join("manifest.tsv").to_str().unwrap(),
        "--out",
        tmp.path().join("model").to_str().unwrap(),
        "--lr",
        "1e25",
        "--epochs",
        "3",
    ]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn pipeline_error_paths_use_the_exit_code_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    synth_small(&data, 5);
    train_small(&data, &model, "1");
    let ckpt = model.join("checkpoint.hmap");
    let scene = data.join("scene_03.pgm");

    // K below 2 is an input error.
    let out = run(&[
        "segment",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scene",
        scene.to_str().unwrap(),
        "--k",
        "1",
        "--out",
        tmp.path().join("s1").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);

    // Unknown layer name.
    let out = run(&[
        "segment",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scene",
        scene.to_str().unwrap(),
        "--layers",
        "conv9",
        "--out",
        tmp.path().join("s2").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);

    // Infeasible perplexity (split "map" has 9 patches here).
    let out = run(&[
        "embed",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        data.join("manifest.tsv").to_str().unwrap(),
        "--perplexity",
        "30",
        "--out",
        tmp.path().join("e").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    // Patch of the wrong size.
    let out = run(&[
        "activations",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--patch",
        scene.to_str().unwrap(),
        "--out",
        tmp.path().join("a").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);

    // Tampered checkpoint version.
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
    let ckpt2 = tmp.path().join("v99.hmap");
    fs::write(&ckpt2, bytes).unwrap();
    let out = run(&[
        "classify-scene",
        "--checkpoint",
        ckpt2.to_str().unwrap(),
        "--scene",
        scene.to_str().unwrap(),
        "--out",
        tmp.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("format_version"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn train_report_has_one_row_per_epoch_and_paper_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    synth_small(&data, 6);
    train_small(&data, &model, "3");
    let report = fs::read_to_string(model.join("report.txt")).unwrap();
    assert_eq!(report.lines().count(), 4); // header + 3 epochs
    let record = fs::read_to_string(model.join("run.txt")).unwrap();
    assert!(record.contains("lr=0.00273"), "{record}");
    assert!(record.contains("batch=150"), "{record}");
}

#[test]
fn config_file_fills_in_flags_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("hm.toml");
    fs::write(
        &cfg_path,
        "[global]\nseed = 77\n[synth]\nscenes = 3\nwidth = 72\nheight = 72\nstride = 36\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "synth",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--width",
        "108", // overrides the config's 72
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let record = fs::read_to_string(out_dir.join("run.txt")).unwrap();
    assert!(record.contains("scenes=3"), "{record}");
    assert!(record.contains("width=108"), "{record}");
    assert!(record.contains("height=72"), "{record}");
    assert!(record.contains("seed=77"), "{record}");
}

#[test]
fn classify_block_flag_controls_grid_geometry() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    synth_small(&data, 8);
    train_small(&data, &model, "1");
    let out_dir = tmp.path().join("cls");
    let out = run(&[
        "classify-scene",
        "--checkpoint",
        model.join("checkpoint.hmap").to_str().unwrap(),
        "--scene",
        data.join("scene_00.pgm").to_str().unwrap(),
        "--block",
        "36",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    // 108/36 = 3x3 grid stored as a 3x3 PGM.
    let labels = fs::read(out_dir.join("labels.pgm")).unwrap();
    let text = String::from_utf8_lossy(&labels[..12]);
    assert!(text.starts_with("P5\n3 3\n255\n"), "{text}");
}
