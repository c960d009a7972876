use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use icthp::io::write_dataset;
use icthp::trainer::checkpoint::write_checkpoint;
use icthp::trainer::heads::init_heads_with_noise;
use icthp::{validate_dataset, Embedding, SeededRng, TripletRecord};

fn icthp(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icthp"))
        .args(args)
        .env("ICTHP_OUT_DIR", out_dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> Vec<PathBuf> {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(PathBuf::from)
        .collect()
}

fn fails_with(out: &Output, code: &str) -> String {
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{code}]: ")), "{err}");
    err
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn gen(dir: &Path, n: &str, dim: &str) -> PathBuf {
    let files = ok(&icthp(
        dir,
        &["gen-synthetic", "--n", n, "--dim", dim, "--seed", "1"],
    ));
    files[0].clone()
}

fn unit(v: &[f64]) -> Embedding {
    Embedding::new(v.to_vec()).unwrap()
}

#[test]
fn gen_synthetic_sizes_and_idempotence() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let fa = ok(&icthp(&a, &["gen-synthetic", "--n", "10", "--dim", "8"]));
    let fb = ok(&icthp(&b, &["gen-synthetic", "--n", "10", "--dim", "8"]));
    assert_eq!(std::fs::metadata(&fa[1]).unwrap().len(), 1620);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let again = ok(&icthp(&a, &["gen-synthetic", "--n", "10", "--dim", "8"]));
    assert_eq!(
        std::fs::read(&again[1]).unwrap(),
        std::fs::read(&fb[1]).unwrap()
    );
    assert!(a.join("manifest.jsonl.meta.json").exists());
    assert!(!a.join(".icthp.lock").exists());
}

#[test]
fn gen_synthetic_rejects_bad_flags() {
    let tmp = tempfile::tempdir().unwrap();
    fails_with(
        &icthp(tmp.path(), &["gen-synthetic", "--n", "0", "--dim", "8"]),
        "INVALID_FLAGS",
    );
    fails_with(
        &icthp(tmp.path(), &["gen-synthetic", "--n", "5", "--dim", "2"]),
        "INVALID_FLAGS",
    );
    let out = icthp(tmp.path(), &["gen-synthetic", "--dim", "8", "--bogus"]);
    fails_with(&out, "INVALID_FLAGS");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn label_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = gen(tmp.path(), "5", "8");
    let files = ok(&icthp(
        tmp.path(),
        &["label", "--manifest", manifest.to_str().unwrap()],
    ));
    let text = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(text.lines().next(), Some("id,e1,e2,e3,r1,r2,r3"));
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1.000000")));
    let name = files[0].file_name().unwrap().to_str().unwrap();
    assert!(
        name.starts_with("labels-")
            && name.ends_with(".csv")
            && name.len() == "labels-.csv".len() + 16
    );
}

#[test]
fn label_empty_manifest_is_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("empty.jsonl");
    std::fs::write(&manifest, "{\"dim\":8,\"count\":0,\"format_version\":1}\n").unwrap();
    let files = ok(&icthp(
        tmp.path(),
        &["label", "--manifest", manifest.to_str().unwrap()],
    ));
    assert_eq!(
        std::fs::read_to_string(&files[0]).unwrap(),
        "id,e1,e2,e3,r1,r2,r3\n"
    );
}

#[test]
fn label_hand_traced_record() {
    // cos(img1, P) = 0.06 and cos(img2, P) = 0.15 against theta 0.3 give
    // containment 0.2 and 0.5; cos(P, P_ref) = 0.8 scales them to 0.16, 0.4.
    let tmp = tempfile::tempdir().unwrap();
    let r = TripletRecord {
        id: "hand".into(),
        img1: unit(&[0.06, (1.0f64 - 0.06 * 0.06).sqrt(), 0.0, 0.0]),
        img2: unit(&[0.15, 0.0, (1.0f64 - 0.15 * 0.15).sqrt(), 0.0]),
        img3: unit(&[0.0, 0.0, 0.0, 1.0]),
        prompt_easy: unit(&[1.0, 0.0, 0.0, 0.0]),
        prompt_ref: unit(&[0.8, 0.0, 0.0, 0.6]),
        meta: Default::default(),
    };
    let files = write_dataset(&validate_dataset(vec![r]).unwrap(), tmp.path()).unwrap();
    let out = ok(&icthp(
        tmp.path(),
        &[
            "label",
            "--manifest",
            files.manifest.to_str().unwrap(),
            "--theta",
            "0.3",
        ],
    ));
    let text = std::fs::read_to_string(&out[0]).unwrap();
    assert_eq!(
        text.lines().nth(1),
        Some("hand,0.200000,0.500000,1.000000,0.160000,0.400000,1.000000")
    );
}

#[test]
fn train_stages_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = gen(tmp.path(), "200", "16");
    let m = manifest.to_str().unwrap();
    fails_with(
        &icthp(tmp.path(), &["train", "--manifest", m, "--stage", "hp"]),
        "MISSING_CHECKPOINT",
    );

    let started = Instant::now();
    let run = |dir: &Path| {
        let ict = ok(&icthp(
            dir,
            &["train", "--manifest", m, "--stage", "ict", "--epochs", "5"],
        ));
        let hp = ok(&icthp(
            dir,
            &[
                "train",
                "--manifest",
                m,
                "--stage",
                "hp",
                "--epochs",
                "5",
                "--ict-checkpoint",
                ict[0].to_str().unwrap(),
            ],
        ));
        (ict, hp)
    };
    let (ict_a, hp_a) = run(&tmp.path().join("a"));
    assert!(started.elapsed().as_secs_f64() < 60.0);
    let (ict_b, hp_b) = run(&tmp.path().join("b"));
    for (x, y) in ict_a.iter().chain(&hp_a).zip(ict_b.iter().chain(&hp_b)) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let history: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&hp_a[1]).unwrap()).unwrap();
    assert_eq!(history["stage"], "hp");
    assert_eq!(history["epochs"].as_array().unwrap().len(), 5);
    let meta: serde_json::Value = serde_json::from_slice(
        &std::fs::read(tmp.path().join("a").join(format!(
            "{}.meta.json",
            ict_a[0].file_name().unwrap().to_str().unwrap()
        )))
        .unwrap(),
    )
    .unwrap();
    assert_eq!(meta["config"]["epochs"], 5);
    assert_eq!(meta["inputs"]["stage"], "ict");
}

#[test]
fn config_file_merges_with_flags_winning() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = gen(tmp.path(), "4", "8");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "theta = 0.5\nseed = 3\nnegatives = \"i3-only\"\n").unwrap();
    let files = ok(&icthp(
        tmp.path(),
        &[
            "label",
            "--manifest",
            manifest.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "4",
        ],
    ));
    let meta_path = format!("{}.meta.json", files[0].display());
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(meta_path).unwrap()).unwrap();
    assert_eq!(meta["config"]["theta"], 0.5);
    assert_eq!(meta["config"]["seed"], 4);
    assert_eq!(meta["config"]["negatives"], "i3-only");
    let expected = icthp::RunConfig {
        theta: 0.5,
        seed: 4,
        negatives: icthp::NegativeImages::I3Only,
        ..Default::default()
    };
    assert_eq!(meta["config_hash"], expected.hash());

    std::fs::write(&cfg, "theta = -1\n").unwrap();
    fails_with(
        &icthp(
            tmp.path(),
            &[
                "label",
                "--manifest",
                manifest.to_str().unwrap(),
                "--config",
                cfg.to_str().unwrap(),
            ],
        ),
        "NON_POSITIVE_THRESHOLD",
    );
}

#[test]
fn locked_out_dir_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = gen(tmp.path(), "4", "8");
    std::fs::write(tmp.path().join(".icthp.lock"), "").unwrap();
    fails_with(
        &icthp(
            tmp.path(),
            &["label", "--manifest", manifest.to_str().unwrap()],
        ),
        "LOCKED",
    );
}

#[test]
fn eval_on_paradox_data() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = gen(tmp.path(), "300", "16");
    let m = manifest.to_str().unwrap();
    let ict = ok(&icthp(
        tmp.path(),
        &["train", "--manifest", m, "--stage", "ict", "--epochs", "2"],
    ));
    let hp = ok(&icthp(
        tmp.path(),
        &[
            "train",
            "--manifest",
            m,
            "--stage",
            "hp",
            "--epochs",
            "2",
            "--ict-checkpoint",
            ict[0].to_str().unwrap(),
        ],
    ));
    let out = ok(&icthp(
        tmp.path(),
        &[
            "eval",
            "--manifest",
            m,
            "--epochs",
            "2",
            "--ict-checkpoint",
            ict[0].to_str().unwrap(),
            "--hp-checkpoint",
            hp[0].to_str().unwrap(),
        ],
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&out[0]).unwrap()).unwrap();
    assert!(report["accuracy"]["cosine"]["acc_32"].as_f64().unwrap() < 60.0);
    assert!(report["bt_log_likelihood"].as_f64().unwrap() < 0.0);
    let csv = std::fs::read_to_string(&out[1]).unwrap();
    assert_eq!(csv.lines().next(), Some("scorer,acc_21,acc_32,acc_31,mean"));

    let missing = tmp.path().join("nope.ckpt");
    let err = fails_with(
        &icthp(
            tmp.path(),
            &[
                "eval",
                "--manifest",
                m,
                "--ict-checkpoint",
                missing.to_str().unwrap(),
                "--hp-checkpoint",
                hp[0].to_str().unwrap(),
            ],
        ),
        "IO",
    );
    assert!(err.contains("nope.ckpt"));
}

#[test]
fn eval_oracle_checkpoint_scores_100() {
    let tmp = tempfile::tempdir().unwrap();
    let records: Vec<TripletRecord> = (0..30)
        .map(|i| {
            let base = 0.01 * i as f64;
            let img = |t: f64| unit(&[1.0, t, 0.0, 0.0]);
            TripletRecord {
                id: format!("s{i}"),
                img1: img(base),
                img2: img(base + 0.3),
                img3: img(base + 0.7),
                prompt_easy: unit(&[1.0, 0.0, 0.0, 0.0]),
                prompt_ref: unit(&[1.0, 0.0, 0.1, 0.0]),
                meta: Default::default(),
            }
        })
        .collect();
    let files = write_dataset(&validate_dataset(records).unwrap(), tmp.path()).unwrap();
    // Identity projections; one softplus unit reading the second coordinate.
    let mut p = init_heads_with_noise(4, 1, 0.0, &mut SeededRng::new(0)).unwrap();
    let hp = p.hp_range();
    let flat = p.as_mut_slice();
    flat[hp.clone()].fill(0.0);
    flat[hp.start + 1] = 1.0;
    flat[hp.start + 5] = 1.0;
    let ckpt = tmp.path().join("oracle.ckpt");
    write_checkpoint(&p, &ckpt).unwrap();
    let c = ckpt.to_str().unwrap();
    let out = ok(&icthp(
        tmp.path(),
        &[
            "eval",
            "--manifest",
            files.manifest.to_str().unwrap(),
            "--tau",
            "0.5",
            "--hidden-width",
            "1",
            "--ict-checkpoint",
            c,
            "--hp-checkpoint",
            c,
        ],
    ));
    let csv = std::fs::read_to_string(&out[1]).unwrap();
    assert!(
        csv.contains("\nict_hp,100.00,100.00,100.00,100.00\n"),
        "{csv}"
    );
}

#[test]
fn infosim_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stdout(&icthp(
        tmp.path(),
        &[
            "infosim",
            "--i-t",
            "1",
            "--sweep",
            "1:4:4",
            "--theta-star",
            "--i-star",
            "1",
            "--i-max",
            "3",
        ],
    ));
    assert!(out.lines().any(|l| l == "# theta=0.500000"), "{out}");
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "i_v,clip_proxy,ict_proxy");
    assert_eq!(rows.len(), 5);
    assert!(rows[1..].iter().all(|r| r.ends_with(",1.000000")));

    let single = stdout(&icthp(
        tmp.path(),
        &["infosim", "--i-t", "1", "--sweep", "1", "--theta", "0.3"],
    ));
    let rows: Vec<&str> = single.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows,
        ["i_v,clip_proxy,ict_proxy", "1.000000,1.000000,1.000000"]
    );

    fails_with(
        &icthp(
            tmp.path(),
            &["infosim", "--i-t", "-1", "--sweep", "1", "--theta", "0.3"],
        ),
        "INVALID_FLAGS",
    );
    fails_with(
        &icthp(
            tmp.path(),
            &[
                "infosim", "--i-t", "1", "--sweep", "1:0:3", "--theta", "0.3",
            ],
        ),
        "INVALID_FLAGS",
    );
    fails_with(
        &icthp(tmp.path(), &["infosim", "--i-t", "1", "--sweep", "1"]),
        "INVALID_FLAGS",
    );

    let file = tmp.path().join("curve.csv");
    ok(&icthp(
        tmp.path(),
        &[
            "infosim",
            "--i-t",
            "1",
            "--sweep",
            "0.25,1,4",
            "--theta",
            "0.3",
            "--output",
            file.to_str().unwrap(),
        ],
    ));
    let text = std::fs::read_to_string(file).unwrap();
    assert!(text.contains("\n0.250000,0.500000,1.000000\n"));
}

#[test]
fn score_single_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let out = stdout(&icthp(
        tmp.path(),
        &["score", "--text", "3,4", "--image", "3,4"],
    ));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["cosine"].as_f64().unwrap() - 1.0).abs() < 1e-15);
    assert!(v.get("ict").is_none());

    let p = init_heads_with_noise(2, 3, 0.0, &mut SeededRng::new(0)).unwrap();
    let ckpt = tmp.path().join("p.ckpt");
    write_checkpoint(&p, &ckpt).unwrap();
    let c = ckpt.to_str().unwrap();
    let out = stdout(&icthp(
        tmp.path(),
        &[
            "score",
            "--text",
            "1,0",
            "--image",
            "1,0",
            "--tau",
            "0.5",
            "--ict-checkpoint",
            c,
            "--hp-checkpoint",
            c,
        ],
    ));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["ict"], 2.0);
    let hp = v["hp"].as_f64().unwrap();
    assert_eq!(v["reward"].as_f64().unwrap(), hp);

    fails_with(
        &icthp(tmp.path(), &["score", "--text", "0,0", "--image", "1,0"]),
        "ZERO_VECTOR",
    );
    fails_with(
        &icthp(tmp.path(), &["score", "--text", "1,x", "--image", "1,0"]),
        "INVALID_FLAGS",
    );
}

#[test]
fn grad_check_command() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = gen(tmp.path(), "12", "8");
    for target in ["regression", "negatives", "total", "margin"] {
        let out = stdout(&icthp(
            tmp.path(),
            &[
                "grad-check",
                "--manifest",
                manifest.to_str().unwrap(),
                "--target",
                target,
                "--hidden-width",
                "8",
            ],
        ));
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v["max_error"].as_f64().unwrap() < 1e-4);
    }
    fails_with(
        &icthp(
            tmp.path(),
            &[
                "grad-check",
                "--manifest",
                manifest.to_str().unwrap(),
                "--epsilon",
                "0.1",
            ],
        ),
        "INVALID_CONFIG",
    );
}
