use std::path::Path;
use std::process::Command;

use icevos::media_io::write_mask;
use icevos::synthetic::moving_square;

fn icevos() -> Command {
    Command::new(env!("CARGO_BIN_EXE_icevos"))
}

fn fixture(dir: &Path) {
    let seq = moving_square(5, 64, 48);
    std::fs::create_dir_all(dir.join("frames")).unwrap();
    std::fs::create_dir_all(dir.join("gt")).unwrap();
    for (i, (f, m)) in seq.frames.iter().zip(seq.gt_masks.as_ref().unwrap()).enumerate() {
        f.save(dir.join(format!("frames/{i:05}.png"))).unwrap();
        write_mask(m, &dir.join(format!("gt/{i:05}.png"))).unwrap();
    }
}

#[test]
fn segment_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    let out = icevos()
        .args(["segment", "--frames"])
        .arg(d.join("frames"))
        .arg("--out")
        .arg(d.join("run"))
        .args(["--dump-trimap", "--dump-superpixels", "--dump-ids"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_dir(d.join("run/masks")).unwrap().count(), 5);
    for sub in ["trimap", "superpixels", "ids"] {
        assert_eq!(std::fs::read_dir(d.join("run").join(sub)).unwrap().count(), 5);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["strategies"]["flow"], "block-matching");

    let out = icevos()
        .args(["evaluate", "--masks"])
        .arg(d.join("run/masks"))
        .arg("--gt")
        .arg(d.join("gt"))
        .arg("--csv")
        .arg(d.join("errors.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["avg_precision"].as_f64().unwrap() > 0.5);
    assert!(d.join("run/report.json").is_file());
    assert_eq!(std::fs::read_to_string(d.join("errors.csv")).unwrap().lines().count(), 6);
}

#[test]
fn input_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = icevos()
        .args(["segment", "--frames"])
        .arg(tmp.path().join("nothing"))
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "MissingFrames");

    fixture(tmp.path());
    std::fs::write(tmp.path().join("bad.json"), r#"{"theta1": 2, "theta2": 6}"#).unwrap();
    let out = icevos()
        .args(["inspect", "--frames"])
        .arg(tmp.path().join("frames"))
        .arg("--config")
        .arg(tmp.path().join("bad.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ablate_and_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    let out = icevos()
        .args(["inspect", "--se-mode", "--frames"])
        .arg(d.join("frames"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let info: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(info["frames"], 5);
    assert_eq!(info["strategies"]["encoder"], "se");

    let out = icevos()
        .args(["ablate", "--csv", "--frames"])
        .arg(d.join("frames"))
        .arg("--gt")
        .arg(d.join("gt"))
        .arg("--out")
        .arg(d.join("ab"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report_ice.json", "report_se.json", "ablation.json", "errors_ice.csv", "errors_se.csv"] {
        assert!(d.join("ab").join(f).is_file(), "{f}");
    }
}
