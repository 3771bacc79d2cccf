//! CLI surface checks: exit codes, help coverage and the gradcheck
//! subcommand report.

use std::path::Path;
use std::process::{Command, Output};

fn karte(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_karte"))
        .args(args)
        .current_dir(cwd)
        .env_remove("KARTE_SEED")
        .output()
        .expect("spawn karte")
}

fn tmp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("karte-cli-{}-{tag}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn unknown_subcommand_and_flag_exit_2_with_usage() {
    let dir = tmp_dir("usage");
    let out = karte(&["no-such-command"], &dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = karte(&["gradcheck", "--no-such-flag"], &dir);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_subcommand_documents_its_flags() {
    let dir = tmp_dir("help");
    let top = karte(&["--help"], &dir);
    assert!(top.status.success());
    for (cmd, flags) in [
        ("synth-data", vec!["--n", "--out", "--image-size", "--normal-fraction", "--seed"]),
        ("pretrain", vec!["--manifest", "--out", "--config", "--epochs", "--paper-scale"]),
        ("train", vec!["--manifest", "--out", "--threshold", "--sampling", "--config", "--encoder-init", "--paper-scale"]),
        ("predict", vec!["--image", "--checkpoint", "--beam", "--max-len", "--vocab", "--trace-out"]),
        ("evaluate", vec!["--manifest", "--checkpoint", "--abnormal-only", "--beam", "--out"]),
        ("visualize", vec!["--trace", "--image", "--out"]),
        ("gradcheck", vec!["--epsilon"]),
    ] {
        let out = karte(&[cmd, "--help"], &dir);
        assert!(out.status.success(), "{cmd} --help failed");
        let text = String::from_utf8_lossy(&out.stdout);
        for flag in flags {
            assert!(text.contains(flag), "{cmd} --help missing {flag}");
        }
    }
}

#[test]
fn gradcheck_exits_zero_with_a_per_layer_report() {
    let dir = tmp_dir("gradcheck");
    let out = karte(&["gradcheck"], &dir);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for check in ["dense", "conv2d", "maxpool2d", "relu", "softmax", "dropout", "lstm_cell", "attend", "composition"] {
        assert!(text.contains(check), "report missing {check}");
    }
    assert!(text.contains("PASS"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn missing_input_files_exit_1_with_one_line_error() {
    let dir = tmp_dir("errors");
    let out = karte(
        &["train", "--manifest", "nonexistent.tsv", "--out", "run"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    let last = err.lines().last().unwrap_or("");
    assert!(last.starts_with("error: "), "stderr: {err}");

    let out = karte(
        &["predict", "--image", "x.png", "--checkpoint", "missing.kcpt"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_prints_a_dataset_summary() {
    let dir = tmp_dir("summary");
    let out = karte(
        &["synth-data", "--n", "14", "--out", "corpus", "--image-size", "24", "--seed", "3"],
        &dir,
    );
    assert!(out.status.success());
    std::fs::write(
        dir.join("tiny.cfg"),
        "image_size=16\nresize_size=20\nstage_channels=4,8\nhidden=8\nattn_width=8\nthreshold=1\nsampling=natural\nmax_epochs=1\nbatch_size=8\n",
    )
    .unwrap();
    let out = karte(
        &["train", "--manifest", "corpus/manifest.tsv", "--out", "run", "--config", "tiny.cfg", "--seed", "3"],
        &dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("distinct findings:"), "stdout: {text}");
    assert!(text.contains("characters:"));
    assert!(text.contains("split:"));
}

#[test]
fn karte_seed_env_var_is_the_seed_fallback() {
    let dir = tmp_dir("seedenv");
    let out = Command::new(env!("CARGO_BIN_EXE_karte"))
        .args(["synth-data", "--n", "4", "--out", "via-env", "--image-size", "24"])
        .current_dir(&dir)
        .env("KARTE_SEED", "1234")
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = karte(
        &["synth-data", "--n", "4", "--out", "via-flag", "--image-size", "24", "--seed", "1234"],
        &dir,
    );
    assert!(out.status.success());
    let a = std::fs::read(dir.join("via-env/manifest.tsv")).unwrap();
    let b = std::fs::read(dir.join("via-flag/manifest.tsv")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(dir.join("via-env/img_00000.png")).unwrap();
    let b = std::fs::read(dir.join("via-flag/img_00000.png")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn corrupted_checkpoint_magic_is_a_structured_error() {
    let dir = tmp_dir("magic");
    std::fs::write(dir.join("bad.kcpt"), b"XXXXnot-a-checkpoint").unwrap();
    std::fs::write(dir.join("bad.kcpt.vocab"), "<pad>\n<start>\n<end>\n<unk>\na\n").unwrap();
    std::fs::write(dir.join("bad.kcpt.config"), "").unwrap();
    std::fs::write(dir.join("img.pgm"), b"P5\n2 2\n255\nabcd").unwrap();
    let out = karte(
        &["predict", "--image", "img.pgm", "--checkpoint", "bad.kcpt"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}
