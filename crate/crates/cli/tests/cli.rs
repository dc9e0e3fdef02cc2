use std::path::Path;
use std::process::{Command, Output};

use posedistrib_cli::{bundle, load, run, sweep, Overrides, SweepAxis, EXIT_IO, EXIT_NO_POSE, EXIT_VALIDATION};
use posedistrib_core::scenarios::BundledObject;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posedistrib")).args(args).output().unwrap()
}

fn small_bundle(dir: &Path, object: BundledObject) -> String {
    bundle(object, false, dir, 800, 3).unwrap().to_str().unwrap().to_string()
}

/// Rotations in the plot's single layer, before marker subsampling.
fn svg_rotations(svg: &str) -> usize {
    let tail = svg.split("data-count=\"").nth(1).unwrap();
    tail[..tail.find('"').unwrap()].parse().unwrap()
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_bundle(tmp.path(), BundledObject::MarkedCube);

    let missing = bin(&["run", "--manifest", tmp.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(EXIT_IO));

    let bad_tau = bin(&["run", "--manifest", &m, "--tau-score", "1.5"]);
    assert_eq!(bad_tau.status.code(), Some(EXIT_VALIDATION));
    assert!(String::from_utf8_lossy(&bad_tau.stderr).contains("tau_score"));

    let garbage = tmp.path().join("garbage.json");
    std::fs::write(&garbage, "{ not json").unwrap();
    assert_eq!(bin(&["run", "--manifest", garbage.to_str().unwrap()]).status.code(), Some(EXIT_VALIDATION));

    let out = tmp.path().join("out");
    let none = bin(&["run", "--manifest", &m, "--tau-dens", "100000", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(none.status.code(), Some(EXIT_NO_POSE));
    let dist = std::fs::read_to_string(out.join("distribution.json")).unwrap();
    assert!(dist.contains("\"no_pose_found\""));
    assert!(std::fs::read_to_string(out.join("mollweide.svg")).unwrap().contains("no pose found"));
}

#[test]
fn run_writes_artifacts_and_stage_counts_shrink() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_bundle(tmp.path(), BundledObject::HexPrism);
    let out = tmp.path().join("run");
    let r = bin(&["run", "--manifest", &m, "--dump-stages", "--out-dir", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["distribution.json", "pr_report.json", "pr_curves.csv", "gt_set.json", "mollweide.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let counts: Vec<usize> = ["initial", "pruned", "final"]
        .iter()
        .map(|s| svg_rotations(&std::fs::read_to_string(out.join(format!("stage_{s}.svg"))).unwrap()))
        .collect();
    assert!(counts[0] >= counts[1] && counts[1] >= counts[2] && counts[2] > 0, "{counts:?}");
}

#[test]
fn single_value_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_bundle(tmp.path(), BundledObject::MarkedCube);
    let loaded = load(Path::new(&m), &Overrides::default()).unwrap();
    let full = run(&loaded, false).unwrap();
    let tau = loaded.manifest.estimator.tau_score;
    let (rows, csv) = sweep(&loaded, SweepAxis::TauScore, &[tau]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].precision_msd, full.report.precision_msd);
    assert_eq!(rows[0].recall_mpd, full.report.recall_mpd);
    assert_eq!(rows[0].poses, full.poses);
    assert!(csv.starts_with(&format!("# manifest_sha256={}", loaded.hash)));
}

#[test]
fn manifest_hash_tracks_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_bundle(tmp.path(), BundledObject::MarkedCube);
    let p = Path::new(&m);
    let base = load(p, &Overrides::default()).unwrap().hash;
    assert_eq!(base, load(p, &Overrides::default()).unwrap().hash);
    let tau = load(p, &Overrides { tau_dens: Some(11), ..Overrides::default() }).unwrap().hash;
    let noise = load(p, &Overrides { noise_desc_rad: Some(0.2), ..Overrides::default() }).unwrap().hash;
    let seed = load(p, &Overrides { seed: Some(99), ..Overrides::default() }).unwrap().hash;
    assert!(base != tau && base != noise && base != seed && tau != noise);
}

#[test]
fn build_model_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let path = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    for (name, seed) in [("a.bin", "5"), ("b.bin", "5"), ("c.bin", "6")] {
        let r = bin(&["build-model", "--object", "hex-prism", "--max-points", "500", "--seed", seed, "--out", &path(name)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let read = |n: &str| std::fs::read(path(n)).unwrap();
    assert_eq!(read("a.bin"), read("b.bin"));
    assert_ne!(read("a.bin"), read("c.bin"));
}

#[test]
fn sweep_rejects_fractional_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let m = small_bundle(tmp.path(), BundledObject::MarkedCube);
    let r = bin(&["sweep", "--manifest", &m, "--axis", "k", "--values", "3.5"]);
    assert_eq!(r.status.code(), Some(EXIT_VALIDATION));
}
