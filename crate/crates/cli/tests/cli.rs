use std::path::{Path, PathBuf};
use std::process::Command;

fn opad() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opad"))
}

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn generate(out: &Path, seed: Option<u64>) {
    let mut cmd = opad();
    cmd.args(["generate", "--config"]).arg(smoke_config()).arg("--out").arg(out);
    if let Some(s) = seed {
        cmd.args(["--seed", &s.to_string()]);
    }
    let st = cmd.output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
}

#[test]
fn generate_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    generate(a.path(), None);
    generate(b.path(), None);
    generate(c.path(), Some(99));
    for task in ["detection", "sequence"] {
        let rel = format!("datasets/{task}.json");
        let x = std::fs::read(a.path().join(&rel)).unwrap();
        let y = std::fs::read(b.path().join(&rel)).unwrap();
        let z = std::fs::read(c.path().join(&rel)).unwrap();
        assert_eq!(x, y, "{task} differs between identical runs");
        assert_ne!(x, z, "{task} ignores --seed");
    }
}

#[test]
fn missing_field_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(smoke_config()).unwrap();
    let broken: String = text
        .lines()
        .filter(|l| !l.starts_with("feature_noise_sigma"))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg = dir.path().join("broken.toml");
    std::fs::write(&cfg, broken).unwrap();
    let out = opad()
        .args(["generate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("feature_noise_sigma"), "{err}");
}

#[test]
fn unknown_task_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = opad()
        .args(["generate", "--config"])
        .arg(smoke_config())
        .args(["--task", "segmentation", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn evaluate_without_policy_names_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = opad()
        .args(["evaluate", "--config"])
        .arg(smoke_config())
        .args(["--task", "detection", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("policy-strong"), "{err}");
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["generate", "train-policy", "evaluate", "report"] {
        let out = opad()
            .arg(cmd)
            .arg("--config")
            .arg(smoke_config())
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let p = dir.path();
    assert!(p.join("policies/detection-vanilla.json").exists());
    assert!(p.join("policies/sequence-vanilla-loss.csv").exists());
    assert!(p.join("curves/detection/random-weak-s1.csv").exists());
    assert!(p.join("ledgers/sequence/policy-strong-s0.csv").exists());
    assert!(p.join("curves/detection/entropy-sum-strong-mean.csv").exists());
    let summary = std::fs::read_to_string(p.join("summary.csv")).unwrap();
    // 2 tasks x 5 strategies x 2 modes, plus the header.
    assert_eq!(summary.lines().count(), 21, "{summary}");
}
