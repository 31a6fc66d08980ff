//! End-to-end tests of the `clincon` binary: pipeline plumbing, exit
//! codes, and byte-level determinism of artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn clincon() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clincon"))
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed ({:?}):\n{}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn cohort_json(dir: &Path, seed: u64) -> std::path::PathBuf {
    let path = dir.join("cohort.json");
    std::fs::write(
        &path,
        format!(
            r#"{{
  "n_eyes": 40,
  "visits_per_eye": 4,
  "payload_dim": 24,
  "severity_noise": 0.05,
  "bcva_sigma": 2.0,
  "cst_sigma": 10.0,
  "biomarker_specs": [
    {{"name": "IRF", "threshold": 0.5, "flip_prob": 0.0, "granularity": "low",
      "effect_dims": 6, "effect_magnitude": 1.5}}
  ],
  "seed": {seed}
}}"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cohort = cohort_json(root, 11);

    for tag in ["a", "b"] {
        let run = root.join(tag);
        std::fs::create_dir_all(&run).unwrap();
        let data = run.join("data");
        let splits = run.join("splits");
        ok(&clincon()
            .args(["gen-synth", "--config"])
            .arg(&cohort)
            .arg("--out")
            .arg(&data)
            .args(["--seed", "17"])
            .output()
            .unwrap());
        ok(&clincon()
            .arg("split")
            .arg("--manifest")
            .arg(data.join("manifest.csv"))
            .args(["--by", "eye", "--holdout", "8", "--seed", "1"])
            .arg("--out")
            .arg(&splits)
            .output()
            .unwrap());
        ok(&clincon()
            .arg("pretrain")
            .arg("--train")
            .arg(splits.join("train/manifest.csv"))
            .args(["--loss", "cst:1+eye:1", "--tau", "0.07", "--seed", "1"])
            .args(["--epochs", "2", "--batch-size", "32"])
            .arg("--out")
            .arg(run.join("enc.ckpt"))
            .output()
            .unwrap());
        ok(&clincon()
            .arg("probe")
            .arg("--encoder")
            .arg(run.join("enc.ckpt"))
            .arg("--labeled")
            .arg(splits.join("train/manifest.csv"))
            .args(["--target", "IRF", "--seed", "2", "--epochs", "5"])
            .arg("--out")
            .arg(run.join("clf.ckpt"))
            .output()
            .unwrap());
        ok(&clincon()
            .arg("eval")
            .arg("--model")
            .arg(run.join("clf.ckpt"))
            .arg("--test")
            .arg(splits.join("test/manifest.csv"))
            .args(["--seed", "2"])
            .arg("--out")
            .arg(run.join("report.json"))
            .output()
            .unwrap());
        ok(&clincon()
            .arg("export-embeddings")
            .arg("--encoder")
            .arg(run.join("enc.ckpt"))
            .arg("--manifest")
            .arg(splits.join("test/manifest.csv"))
            .arg("--out")
            .arg(run.join("emb.csv"))
            .output()
            .unwrap());
    }

    for artifact in [
        "data/manifest.csv",
        "enc.ckpt",
        "clf.ckpt",
        "report.json",
        "emb.csv",
    ] {
        let a = std::fs::read(root.join("a").join(artifact)).unwrap();
        let b = std::fs::read(root.join("b").join(artifact)).unwrap();
        assert_eq!(a, b, "artifact {artifact} differs between identical runs");
    }

    // checkpoint header records the resolved loss terms
    let enc_bytes = std::fs::read(root.join("a/enc.ckpt")).unwrap();
    let header_len = u64::from_le_bytes(enc_bytes[..8].try_into().unwrap()) as usize;
    let header: serde_json::Value = serde_json::from_slice(&enc_bytes[8..8 + header_len]).unwrap();
    assert_eq!(header["loss_spec"]["terms"][0][0], "cst");
    assert_eq!(header["loss_spec"]["terms"][1][0], "eye");
    assert_eq!(header["loss_spec"]["terms"][0][1], 1.0);

    // run manifest accompanies each artifact
    assert!(root.join("a/data/run_manifest.json").exists());
    assert!(root.join("a/enc.ckpt.run.json").exists());
}

#[test]
fn distill_baseline_compare_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cohort = cohort_json(root, 23);
    let data = root.join("data");
    ok(&clincon()
        .args(["gen-synth", "--config"])
        .arg(&cohort)
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap());
    let manifest = data.join("manifest.csv");

    ok(&clincon()
        .arg("baseline")
        .arg("--labeled")
        .arg(&manifest)
        .args(["--target", "IRF", "--seed", "3", "--epochs", "2"])
        .arg("--out")
        .arg(root.join("base.ckpt"))
        .output()
        .unwrap());
    ok(&clincon()
        .arg("distill")
        .arg("--teacher")
        .arg(root.join("base.ckpt"))
        .arg("--labeled")
        .arg(&manifest)
        .args(["--temperature", "2.0", "--seed", "4", "--epochs", "2"])
        .arg("--out")
        .arg(root.join("student.ckpt"))
        .output()
        .unwrap());

    for (tag, seed) in [("r1", "1"), ("r2", "2")] {
        ok(&clincon()
            .arg("eval")
            .arg("--model")
            .arg(root.join("student.ckpt"))
            .arg("--test")
            .arg(&manifest)
            .args(["--seed", seed])
            .arg("--out")
            .arg(root.join(format!("{tag}.json")))
            .output()
            .unwrap());
    }
    let a = format!("{},{}", root.join("r1.json").display(), root.join("r2.json").display());
    let out = clincon()
        .args(["compare", "--a", &a, "--b", &a])
        .output()
        .unwrap();
    ok(&out);
    let verdict: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("compare prints JSON");
    assert_eq!(verdict["p"], 1.0);
    assert_eq!(verdict["significant"], false);

    // theory sweep: fraction x seed row count, header shape
    ok(&clincon()
        .args(["theory-sweep", "--eps", "0,0.3,0.6", "--seeds", "1,2"])
        .arg("--out")
        .arg(root.join("theory.csv"))
        .output()
        .unwrap());
    let theory = std::fs::read_to_string(root.join("theory.csv")).unwrap();
    let lines: Vec<&str> = theory.lines().collect();
    assert_eq!(lines[0], "eps,kl_marginal,tau_coll,probe_accuracy,seed");
    assert_eq!(lines.len(), 1 + 3 * 2);

    // access sweep under a thread cap
    ok(&clincon()
        .env("CLINCON_THREADS", "2")
        .arg("sweep-access")
        .arg("--encoder")
        .arg({
            ok(&clincon()
                .arg("pretrain")
                .arg("--train")
                .arg(&manifest)
                .args(["--loss", "cst", "--seed", "1", "--epochs", "1", "--batch-size", "32"])
                .arg("--out")
                .arg(root.join("enc.ckpt"))
                .output()
                .unwrap());
            root.join("enc.ckpt")
        })
        .arg("--labeled")
        .arg(&manifest)
        .arg("--test")
        .arg(&manifest)
        .args(["--target", "IRF", "--fractions", "50,100", "--seeds", "1,2", "--epochs", "2"])
        .arg("--out")
        .arg(root.join("access.csv"))
        .output()
        .unwrap());
    let access = std::fs::read_to_string(root.join("access.csv")).unwrap();
    assert_eq!(access.lines().count(), 1 + 2 * 2);
    assert!(access.starts_with("fraction,seed,auroc"));
}

#[test]
fn exit_codes() {
    // usage errors -> 1
    let out = clincon().arg("not-a-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = clincon()
        .args(["pretrain", "--train", "x.csv", "--loss", "bad::spec", "--out", "y.ckpt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // data errors -> 2
    let out = clincon()
        .args(["histogram", "--manifest", "/nonexistent/manifest.csv", "--key", "bcva"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // help -> 0
    let out = clincon().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn gen_synth_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"n_eyes": 4, "visits_per_eye": 1, "payload_dim": 8,
            "biomarker_specs": [], "seed": 0, "typo_field": true}"#,
    )
    .unwrap();
    let out = clincon()
        .args(["gen-synth", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("typo_field"));
}
