use std::path::Path;
use std::process::Command;

fn homolab(args: &[&str], dir: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_homolab"))
        .args(args)
        .current_dir(dir)
        .env("HOMOLAB_THREADS", "2")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(homolab(&["gen-field", "--period", "9", "--seed", "2", "--out", "f.hlab"], d).0, 0);
    assert!(d.join("f.hlab").exists() && d.join("f.json").exists());
    assert_eq!(homolab(&["no-such-command"], d).0, 2);
    assert_eq!(homolab(&["green", "--constant", "1", "--set", "xi=3", "--out", "x"], d).0, 2);
    assert_eq!(homolab(&["green", "--constant", "1", "--set", "bogus=1", "--out", "x"], d).0, 2);
    assert_eq!(homolab(&["green", "--field", "missing.hlab", "--out", "x"], d).0, 4);
    std::fs::write(d.join("bad.hlab"), b"HLAB\x07garbage").unwrap();
    assert_eq!(homolab(&["green", "--field", "bad.hlab", "--out", "x"], d).0, 4);
}

#[test]
fn seed_ladder_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    homolab(&["gen-field", "--period", "6", "--out", "f.hlab"], d);
    let (code, _) = homolab(
        &[
            "invariant-measure", "--field", "f.hlab", "--h", "0.5", "--seed", "1", "--seed", "2", "--seed", "3", "--out", "im",
        ],
        d,
    );
    assert_eq!(code, 0);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("im/manifest.json")).unwrap()).unwrap();
    let tags: Vec<&str> = manifest["results"].as_array().unwrap().iter().map(|r| r["tag"].as_str().unwrap()).collect();
    assert_eq!(tags, ["seed-1", "seed-2", "seed-3"]);
    let hashes: std::collections::BTreeSet<&str> =
        manifest["results"].as_array().unwrap().iter().map(|r| r["field_hash"].as_str().unwrap()).collect();
    assert_eq!(hashes.len(), 3);
    let (code, stdout) = homolab(&["report", "im", "--out", "rep"], d);
    assert_eq!(code, 0, "{stdout}");
    assert!(d.join("rep/summary.json").exists());
}

#[test]
fn solve_writes_a_grid_function() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout) = homolab(&["solve", "--dim", "1", "--h", "0.25", "--half-width", "8", "--t-final", "1", "--out", "u"], dir.path());
    assert_eq!(code, 0);
    let info: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!((info["mass"].as_f64().unwrap() - std::f64::consts::PI.sqrt()).abs() < 1e-3);
    let (_, values) = homolab::harness::io::read_grid_function(&dir.path().join("u.json")).unwrap();
    assert_eq!(values.len(), 65);
}
