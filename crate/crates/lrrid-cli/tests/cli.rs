//! End-to-end CLI checks driving the built binary on a synthetic
//! protocol and on a generated ORL-shaped dataset.

use std::fs;
use std::path::Path;
use std::process::Command;

fn lrrid_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lrrid"))
}

fn write_synthetic_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(
        &path,
        r#"
method = "lrrid"
atoms_per_class = 3
trials = 2
base_seed = 5

[protocol]
kind = "synthetic"
classes = 4
train_per_class = 4
test_per_class = 4
height = 12
width = 10

[hyperparams]
lambda = 0.1
beta = 0.1
gamma = 1e-4
max_outer_iters = 150
"#,
    )
    .unwrap();
    path
}

/// Fake ORL-shaped dataset: 40 subjects x 10 distinct 16x16 gray images.
fn write_fake_orl(root: &Path) {
    for s in 0..40u32 {
        let dir = root.join(format!("s{s:02}"));
        fs::create_dir_all(&dir).unwrap();
        for i in 0..10u32 {
            let img = image::GrayImage::from_fn(16, 16, |x, y| {
                let v = (s * 13 + i * 29 + x * 3 + y * 7) % 256;
                image::Luma([v as u8])
            });
            img.save(dir.join(format!("{i}.png"))).unwrap();
        }
    }
}

#[test]
fn run_is_deterministic_and_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_synthetic_config(tmp.path());
    let out1 = tmp.path().join("out1");
    let out2 = tmp.path().join("out2");

    for out in [&out1, &out2] {
        let status = lrrid_bin()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }

    for name in ["trials.csv", "results.csv", "results.txt"] {
        let a = fs::read(out1.join(name)).unwrap();
        let b = fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    for trial in 0..2 {
        let a = fs::read(out1.join(format!("trace_trial{trial}.csv"))).unwrap();
        let b = fs::read(out2.join(format!("trace_trial{trial}.csv"))).unwrap();
        assert_eq!(a, b, "trace for trial {trial} differs");
        assert!(out1.join(format!("model_trial{trial}.txt")).exists());
    }

    let trials = fs::read_to_string(out1.join("trials.csv")).unwrap();
    assert!(trials.starts_with("trial,seed,accuracy,iterations,converged\n"));
    assert_eq!(trials.lines().count(), 3);
}

#[test]
fn seed_flag_changes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_synthetic_config(tmp.path());
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    for (out, seed) in [(&out1, "5"), (&out2, "6")] {
        let status = lrrid_bin()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out)
            .args(["--seed", seed, "--trials", "1"])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = fs::read(out1.join("trials.csv")).unwrap();
    let b = fs::read(out2.join("trials.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn dump_writes_decomposition_images() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_synthetic_config(tmp.path());
    let out = tmp.path().join("dump_out");
    let status = lrrid_bin()
        .args(["dump", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--count", "2", "--trial", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    let dir = out.join("decomposition_trial1");
    let mut pngs: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    pngs.sort();
    assert_eq!(
        pngs,
        vec![
            "test000_atom.png",
            "test000_error.png",
            "test000_original.png",
            "test000_reconstruction.png",
            "test001_atom.png",
            "test001_error.png",
            "test001_original.png",
            "test001_reconstruction.png",
        ]
    );
}

#[test]
fn sweep_over_fake_orl_writes_table_and_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("orl");
    write_fake_orl(&data_dir);
    let out = tmp.path().join("sweep_out");
    let config_path = tmp.path().join("orl.toml");
    fs::write(
        &config_path,
        format!(
            r#"
method = "lrrid"
atoms_per_class = 5
trials = 1
base_seed = 3

[dataset]
path = "{}"
layout = "orl"

[protocol]
kind = "orl_occlusion"
level = 0.0

[hyperparams]
lambda = 0.05
beta = 0.1
gamma = 1e-4
max_outer_iters = 4
"#,
            data_dir.display()
        ),
    )
    .unwrap();

    let output = lrrid_bin()
        .args(["sweep", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&out)
        .args(["--levels", "0,0.3", "--methods", "lrrid,lrrs"])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let table = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method,0,0.3");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("lrrid,"));
    assert!(lines[2].starts_with("lrrs,"));

    for method in ["lrrid", "lrrs"] {
        let curve = fs::read_to_string(out.join(format!("curve_{method}.csv"))).unwrap();
        assert!(curve.starts_with("level,mean_accuracy\n"));
        assert_eq!(curve.lines().count(), 3);
    }
}

#[test]
fn bad_config_fails_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    fs::write(&config, "method = \"lrrid\"\n").unwrap();
    let output = lrrid_bin()
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("bad config"));
}
