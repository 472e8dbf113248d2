//! End-to-end runs of the `meso` binary in scratch directories.

use std::path::Path;
use std::process::{Command, Output};

fn meso(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meso"))
        .args(args)
        .current_dir(dir)
        .env_remove("MESO_THREADS")
        .output()
        .expect("spawn meso")
}

fn ok(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = meso(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

fn mesh(dir: &Path) {
    ok(dir, &["mesh", "gen", "--kind", "perturbed-square", "--n", "6", "--jitter", "0.35", "--seed", "2", "--out", "m.json"]);
}

#[test]
fn identical_runs_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mesh(d);
    let design = |tag: &str| {
        let (s, r, j) = (format!("S{tag}.mtx"), format!("r{tag}.csv"), format!("d{tag}.json"));
        ok(d, &["design", "--mesh", "m.json", "--scope", "local", "--seed", "3", "--out", &s, "--rates", &r, "--report", &j]);
        (read(d, &s), read(d, &r), read(d, &j))
    };
    let (a, b) = (design("a"), design("b"));
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    // The manifests differ only in the output file names.
    let text = |v: &[u8], tag: &str| String::from_utf8(v.to_vec()).unwrap().replace(&format!("S{tag}.mtx"), "S").replace(&format!("r{tag}.csv"), "r").replace(&format!("d{tag}.json"), "d");
    assert_eq!(text(&a.2, "a"), text(&b.2, "b"));

    let run = |seed: &str| ok(d, &["ssa", "run", "--rates", "ra.csv", "--init", "init.csv", "--t-end", "0.2", "--snapshots", "0.1,0.2", "--seed", seed]);
    std::fs::write(d.join("init.csv"), "20\n".repeat(49)).unwrap();
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn thread_count_does_not_change_monte_carlo_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mesh(d);
    ok(d, &["design", "--mesh", "m.json", "--rates", "r.csv"]);
    let hit = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_meso"))
            .args(["ssa", "hit", "--mesh", "m.json", "--rates", "r.csv", "--M", "500", "--seed", "1"])
            .current_dir(d)
            .env("MESO_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(hit("1"), hit("4"));
}

#[test]
fn config_file_mirrors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mesh(d);
    std::fs::write(d.join("cfg.json"), r#"{"gamma": 2.0, "out": "cfg.mtx"}"#).unwrap();
    ok(d, &["assemble", "--mesh", "m.json", "--config", "cfg.json"]);
    ok(d, &["assemble", "--mesh", "m.json", "--gamma", "2", "--out", "flag.mtx"]);
    assert_eq!(read(d, "cfg.mtx"), read(d, "flag.mtx"));
    // Flags on the command line take precedence.
    ok(d, &["assemble", "--mesh", "m.json", "--config", "cfg.json", "--gamma", "1", "--out", "one.mtx"]);
    ok(d, &["assemble", "--mesh", "m.json", "--out", "plain.mtx"]);
    assert_eq!(read(d, "one.mtx"), read(d, "plain.mtx"));
}

#[test]
fn errors_are_one_coded_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mesh(d);
    ok(d, &["assemble", "--mesh", "m.json", "--out", "S.mtx"]);
    let cases: [(&[&str], &str); 5] = [
        (&["analyze", "--mesh", "missing.json"], "E_IO"),
        (&["assemble", "--mesh", "m.json", "--out", "T.mtx", "--rates", "r.csv"], "E_NEGATIVE_COEFFICIENT"),
        (&["repair", "--mesh", "m.json", "--external", "S.mtx"], "E_NEGATIVE_COEFFICIENT"),
        (&["solve", "hitting", "--mesh", "m.json", "--sink", "nowhere"], "E_ARGUMENT"),
        (&["repair", "--mesh", "m.json", "--method", "gfet"], "E_USAGE"),
    ];
    for (args, code) in cases {
        let out = meso(d, args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with(&format!("error[{code}]: ")), "{args:?}: {err}");
    }
}

#[test]
fn compare_keeps_going_past_a_failed_row() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    mesh(d);
    let out = ok(d, &["compare", "--mesh", "m.json", "--methods", "nnfem,external:absent.mtx,mbe-global"]);
    let text = String::from_utf8(out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("nnfem,") && rows[0].ends_with(','));
    assert!(rows[1].contains("io error"));
    assert!(rows[2].starts_with("mbe-global,"));
}

#[test]
fn written_fixtures_match_the_shipped_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["reproduce", "--write-fixtures", "fx"]);
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/manifest.json");
    assert_eq!(read(dir.path(), "fx/manifest.json"), std::fs::read(shipped).unwrap());
}
