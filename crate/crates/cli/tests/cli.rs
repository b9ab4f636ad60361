use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cipher-sim"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn write_spec(dir: &Path) -> String {
    let spec = r#"[
        {"alphabet_size_a": 12, "alphabet_size_b": 12, "shared": 0, "dim": 8, "spread": 0.1,
         "separation": 1.0, "samples_per_symbol": 10, "seed": 1},
        {"alphabet_size_a": 12, "alphabet_size_b": 12, "shared": 12, "dim": 8, "spread": 0.1,
         "separation": 1.0, "samples_per_symbol": 10, "seed": 2}
    ]"#;
    let path = dir.join("spec.json");
    std::fs::write(&path, spec).unwrap();
    s(&path)
}

#[test]
fn synth_matrix_agree_flow() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert!(run(&[
        "synth",
        "--spec",
        &write_spec(dir.path()),
        "--out",
        &s(&corpus)
    ])
    .status
    .success());
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(corpus.join("s01_truth.json")).unwrap())
            .unwrap();
    assert_eq!(truth["overlap"], 1.0);
    let manifest = s(&corpus.join("corpus.json"));
    let out = dir.path().join("m");
    let common = [
        "--per-doc",
        "100",
        "--runs",
        "2",
        "--k",
        "5",
        "--msteps",
        "20",
    ];
    let mut args = vec!["matrix", "--corpus", &manifest, "--out"];
    let out_s = s(&out);
    args.push(&out_s);
    args.extend(common);
    let first = run(&args);
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert!(String::from_utf8_lossy(&first.stderr).contains("6 pairs computed, 0 from cache"));
    let second = run(&args);
    assert!(String::from_utf8_lossy(&second.stderr).contains("0 pairs computed, 6 from cache"));
    let csv = std::fs::read_to_string(out.join("csi_external.csv")).unwrap();
    assert!(csv.starts_with("doc,s00_a,s00_b,s01_a,s01_b\n"));
    let nearest = String::from_utf8_lossy(&first.stdout).into_owned();
    assert!(nearest.lines().any(|l| l.starts_with("s01_a\ts01_b")));
    for name in [
        "csi_external.json",
        "csi_external_z.json",
        "csi_external_curves.json",
        "csi_external_pairs.json",
    ] {
        assert!(out.join(name).exists(), "{name}");
    }
    let agree_out = dir.path().join("agr");
    let z = s(&out.join("csi_external_z.json"));
    let r = run(&["agree", &z, &z, "--out", &s(&agree_out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(agree_out.join("agreement.csv").exists());
}

#[test]
fn compare_and_affinity() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    run(&[
        "synth",
        "--spec",
        &write_spec(dir.path()),
        "--out",
        &s(&corpus),
    ]);
    let a = s(&corpus.join("s00_a.cfea"));
    let b = s(&corpus.join("s00_b.cfea"));
    let report = dir.path().join("r.json");
    let r = run(&[
        "compare",
        &a,
        &b,
        "--metric",
        "baseline",
        "--per-doc",
        "100",
        "--kmeans-k",
        "10",
        "--out",
        &s(&report),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["kmeans_k"], 10);
    assert_eq!(v["per_run_ratio"].as_array().unwrap().len(), 4);
    let r = run(&[
        "affinity",
        "--corpus",
        &s(&corpus.join("corpus.json")),
        "--source",
        "external",
        "--train",
        "s00_a,s00_b,s01_a",
        "--test",
        "s01_b",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let table = String::from_utf8_lossy(&r.stdout).into_owned();
    assert!(table.starts_with("test\\train,s00_a,s00_b,s01_a\ns01_b,"));
}

#[test]
fn render_segment_features() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("one.json");
    std::fs::write(
        &spec,
        r#"{"alphabet_size_a": 8, "alphabet_size_b": 8, "shared": 4, "dim": 2, "spread": 0.1,
            "separation": 1.0, "samples_per_symbol": 1, "seed": 9}"#,
    )
    .unwrap();
    let pages = dir.path().join("pages");
    assert!(run(&[
        "synth",
        "--spec",
        &s(&spec),
        "--out",
        &s(&pages),
        "--render"
    ])
    .status
    .success());
    let crops = dir.path().join("crops").join("synth_a");
    let r = run(&[
        "segment",
        &s(&pages.join("synth_a").join("page_000.png")),
        "--out",
        &s(&crops),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let index: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(crops.join("index.json")).unwrap()).unwrap();
    assert_eq!(index.len(), 30);
    let feats = dir.path().join("feats");
    let manifest = dir.path().join("corpus.json");
    let r = run(&[
        "features",
        &s(&crops),
        "--out-dir",
        &s(&feats),
        "--manifest",
        &s(&manifest),
        "--pca",
        "5",
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let fs = cipher_sim::corpus::load_feature_file(feats.join("synth_a.cfea")).unwrap();
    assert_eq!((fs.len(), fs.dim()), (30, 5));
    assert_eq!(
        fs.feature_source,
        cipher_sim::corpus::FeatureSource::GridSift
    );
    assert!(std::fs::read_to_string(&manifest)
        .unwrap()
        .contains("grid_sift"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = s(&dir.path().join("missing.cfea"));
    assert_eq!(run(&["compare", &missing, &missing]).status.code(), Some(3));
    assert_eq!(run(&["compare", "--bogus"]).status.code(), Some(2));
    let bad = dir.path().join("bad.cfea");
    std::fs::write(&bad, b"NOPE0000").unwrap();
    assert_eq!(run(&["compare", &s(&bad), &s(&bad)]).status.code(), Some(3));
    let corpus = dir.path().join("c");
    run(&[
        "synth",
        "--spec",
        &write_spec(dir.path()),
        "--out",
        &s(&corpus),
    ]);
    let a = s(&corpus.join("s00_a.cfea"));
    assert_eq!(run(&["compare", &a, &a, "--k", "0"]).status.code(), Some(2));
    assert_eq!(
        run(&["compare", &a, &a, "--per-doc", "5000"]).status.code(),
        Some(2)
    );
}
