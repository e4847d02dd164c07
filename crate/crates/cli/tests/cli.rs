//! End-to-end runs of the `corsem` binary on small phantoms.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use corsem_cli::manifest::{RunStatus, MANIFEST_FILE};
use corsem_cli::pipeline::subject_seed;
use corsem_cli::Manifest;
use corsem_core::{MatrixContainer, StatMap};

const SPEC: &str = r#"{
  "labels": [
    {"label": "face", "roi": {"blob": {"center": [5, 8, 8], "n_voxels": 30}}, "effect": 1.0},
    {"label": "animal", "roi": {"blob": {"center": [11, 8, 8], "n_voxels": 30}}, "effect": 1.0},
    {"label": "car", "roi": {"blob": {"center": [8, 4, 8], "n_voxels": 30}}, "effect": 0.8}
  ],
  "n_samples": 120,
  "noise_sigma": 1.0,
  "seed": 7,
  "n_subjects": 3
}"#;

fn corsem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corsem"))
        .args(args)
        .output()
        .expect("spawn corsem")
}

fn ok(args: &[&str]) {
    let out = corsem(args);
    assert!(
        out.status.success(),
        "corsem {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesizes the phantom under `dir/ph` and returns its config path.
fn phantom(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.json");
    std::fs::write(&spec, SPEC).unwrap();
    let ph = dir.join("ph");
    ok(&["synth", "--spec", s(&spec), "--out", s(&ph)]);
    ph.join("config.json")
}

fn run(config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["run", "--config", s(config), "--out", s(out), "--iterations", "200"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn pipeline_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phantom(dir.path());
    let out = dir.path().join("run");
    run(&cfg, &out, &[]);
    let m = Manifest::load(out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(m.seed, Some(7));
    assert_eq!(m.verify(&out).unwrap(), None);

    let corrected: Vec<_> = m
        .artifacts_in("correct")
        .filter(|a| a.path.starts_with("corrected/") && a.path.ends_with(".json"))
        .collect();
    assert_eq!(corrected.len(), 3);
    assert_eq!(m.artifacts_in("overlay").count(), 1);
    assert_eq!(m.artifacts_in("network").filter(|a| a.path.ends_with("network.json")).count(), 1);

    let counts = MatrixContainer::read(out.join("overlay/counts.bin")).unwrap();
    assert_eq!(counts.n_rows(), 3);
    for v in 0..counts.n_cols() {
        assert_eq!(counts.get(0, v), counts.get(1, v) + counts.get(2, v));
    }

    // Planted face region shows up after correction.
    let face = StatMap::load(out.join("corrected/00_face.json")).unwrap();
    assert!(face.t.iter().filter(|&&t| t > 0.0).count() > 0);
}

#[test]
fn same_config_same_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phantom(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&cfg, &a, &["--workers", "1"]);
    run(&cfg, &b, &["--workers", "3"]);
    let ma = std::fs::read(a.join(MANIFEST_FILE)).unwrap();
    let mb = std::fs::read(b.join(MANIFEST_FILE)).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn different_seed_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phantom(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&cfg, &a, &[]);
    run(&cfg, &b, &["--seed", "8"]);
    let ta = std::fs::read(a.join("designs/sub-01/00_face.json")).unwrap();
    let tb = std::fs::read(b.join("designs/sub-01/00_face.json")).unwrap();
    assert_ne!(ta, tb);
}

#[test]
fn missing_input_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phantom(dir.path());
    std::fs::remove_file(dir.path().join("ph/bold_sub-02.bin")).unwrap();
    let out = dir.path().join("run");
    let o = corsem(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(v["status"], "error");
    assert_eq!(v["stage"], "validate");
    assert!(v["message"].as_str().unwrap().contains("bold_sub-02.bin"));
    assert!(!out.exists());
}

#[test]
fn invalid_override_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phantom(dir.path());
    let out = dir.path().join("run");
    let o = corsem(&["run", "--config", s(&cfg), "--out", s(&out), "--k", "4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn late_failure_leaves_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phantom(dir.path());
    // Drop one answer so the annotation stage cannot complete.
    let tsv = dir.path().join("ph/answers.tsv");
    let text = std::fs::read_to_string(&tsv).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("stim_00003\tcar")).collect();
    std::fs::write(&tsv, kept.join("\n") + "\n").unwrap();
    let out = dir.path().join("run");
    let o = corsem(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value =
        serde_json::from_str(String::from_utf8(o.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["stage"], "annotate");
    let m = Manifest::load(out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.status, RunStatus::Incomplete);
    assert_eq!(m.failed_stage.as_deref(), Some("annotate"));
    assert_eq!(m.verify(&out).unwrap(), None);
}

#[test]
fn stage_commands_match_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phantom(dir.path());
    let ph = dir.path().join("ph");
    let out = dir.path().join("run");
    run(&cfg, &out, &[]);

    let st = dir.path().join("stages");
    let mut face_maps = Vec::new();
    for sub in 0..3 {
        let fit = st.join(format!("fit{sub}"));
        let seed = subject_seed(7, sub).to_string();
        ok(&[
            "fit",
            "--bold",
            s(&ph.join(format!("bold_sub-{:02}.bin", sub + 1))),
            "--annotations",
            s(&ph.join("annotations.bin")),
            "--labels",
            s(&ph.join("labels.json")),
            "--seed",
            &seed,
            "--out",
            s(&fit),
        ]);
        let a = std::fs::read(fit.join("maps/00_face_t.bin")).unwrap();
        let b = std::fs::read(out.join(format!("subjects/sub-{:02}/00_face_t.bin", sub + 1))).unwrap();
        assert_eq!(a, b, "subject {sub}");
        face_maps.push(fit.join("maps/00_face.json"));
    }

    let group = st.join("group");
    let mut args = vec!["group", "--out", s(&group)];
    for m in &face_maps {
        args.extend(["--map", s(m)]);
    }
    ok(&args);
    assert_eq!(
        std::fs::read(group.join("00_face_t.bin")).unwrap(),
        std::fs::read(out.join("group/00_face_t.bin")).unwrap()
    );

    let corr = st.join("corr");
    ok(&[
        "correct",
        "--map",
        s(&group.join("00_face.json")),
        "--geometry",
        s(&ph.join("geometry.json")),
        "--iterations",
        "200",
        "--seed",
        "7",
        "--out",
        s(&corr),
    ]);
    assert_eq!(
        std::fs::read(corr.join("cluster_threshold.json")).unwrap(),
        std::fs::read(out.join("correct/cluster_threshold.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(corr.join("corrected/00_face_t.bin")).unwrap(),
        std::fs::read(out.join("corrected/00_face_t.bin")).unwrap()
    );

    let net = st.join("net");
    ok(&[
        "network",
        "--map",
        s(&out.join("group/00_face.json")),
        "--map",
        s(&out.join("group/01_animal.json")),
        "--map",
        s(&out.join("group/02_car.json")),
        "--k",
        "3",
        "--out",
        s(&net),
    ]);
    assert_eq!(
        std::fs::read(net.join("similarity.bin")).unwrap(),
        std::fs::read(out.join("network/similarity.bin")).unwrap()
    );

    let ov = st.join("ov");
    ok(&[
        "overlay",
        "--map",
        s(&out.join("corrected/00_face.json")),
        "--map",
        s(&out.join("corrected/01_animal.json")),
        "--map",
        s(&out.join("corrected/02_car.json")),
        "--out",
        s(&ov),
    ]);
    assert_eq!(
        std::fs::read(ov.join("counts.bin")).unwrap(),
        std::fs::read(out.join("overlay/counts.bin")).unwrap()
    );

    let h = st.join("h");
    ok(&[
        "hierarchy",
        "--upper",
        s(&out.join("corrected/00_face.json")),
        "--lower",
        s(&out.join("corrected/01_animal.json")),
        "--out",
        s(&h),
    ]);
    let names: Vec<String> =
        serde_json::from_str(&std::fs::read_to_string(h.join("categories.json")).unwrap()).unwrap();
    assert_eq!(names.len(), StatMap::load(&face_maps[0]).unwrap().n_voxels());
}

#[test]
fn compare_single_voxel_roi() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phantom(dir.path());
    let out = dir.path().join("run");
    run(&cfg, &out, &[]);
    let group = StatMap::load(out.join("group/01_animal.json")).unwrap();
    let v = (0..group.n_voxels())
        .max_by(|&a, &b| group.t[a].total_cmp(&group.t[b]))
        .unwrap();
    let roi = dir.path().join("roi.json");
    std::fs::write(&roi, format!(r#"{{"voxels": [{v}]}}"#)).unwrap();
    let tsv = dir.path().join("cmp.tsv");
    ok(&[
        "compare", "--config", s(&cfg), "--config", s(&cfg), "--roi", s(&roi), "--label", "animal",
        "--out", s(&tsv),
    ]);
    let text = std::fs::read_to_string(&tsv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model\tmethod\tmean_t");
    assert_eq!(lines.len(), 3);
    let expected = format!("unspecified\tvqa\t{:.5}", group.t[v]);
    assert_eq!(lines[1], expected);
    assert_eq!(lines[2], expected);
}

#[test]
fn render_slice_and_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = phantom(dir.path());
    let out = dir.path().join("run");
    run(&cfg, &out, &[]);
    let img = dir.path().join("face.ppm");
    ok(&[
        "render",
        "--map",
        s(&out.join("group/00_face.json")),
        "--geometry",
        s(&dir.path().join("ph/geometry.json")),
        "--axis",
        "y",
        "--slice",
        "8",
        "--out",
        s(&img),
    ]);
    let bytes = std::fs::read(&img).unwrap();
    let header = b"P6 16 16 255\n";
    assert!(bytes.starts_with(header));
    assert_eq!(bytes.len(), header.len() + 16 * 16 * 3);

    let mat = dir.path().join("sim.ppm");
    ok(&["render", "--matrix", s(&out.join("network/similarity.bin")), "--out", s(&mat)]);
    assert!(std::fs::read(&mat).unwrap().starts_with(b"P6 3 3 255\n"));

    let bad = corsem(&["render", "--map", s(&out.join("group/00_face.json")), "--out", s(&mat)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn hierarchy_phantom_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("h.json");
    std::fs::write(
        &req,
        r#"{"chain": ["animal", "mammal", "dog"], "n_samples": 64, "region_voxels": 20, "noise_sigma": 0.5, "seed": 3}"#,
    )
    .unwrap();
    let ph = dir.path().join("ph");
    ok(&["synth", "--hierarchy", s(&req), "--out", s(&ph)]);
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ph.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["glm"], "unbalanced");
    assert_eq!(cfg["hierarchy"][0][2], "dog");
    let out = dir.path().join("run");
    run(&ph.join("config.json"), &out, &[]);
    let m = Manifest::load(out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.artifacts_in("hierarchy").count(), 3);
}
