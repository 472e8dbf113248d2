use std::fs;
use std::path::{Path, PathBuf};

use meso_core::suite::{reproduce_suite, write_fixtures, Suite, FIXTURES, MANIFEST};

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn copy_fixtures(to: &Path) {
    for name in FIXTURES.iter().chain([&MANIFEST]) {
        fs::copy(shipped().join(name), to.join(name)).unwrap();
    }
}

#[test]
fn generators_reproduce_the_shipped_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    write_fixtures(dir.path()).unwrap();
    let fresh = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
    let shipped = fs::read_to_string(shipped().join(MANIFEST)).unwrap();
    assert_eq!(fresh, shipped);
}

#[test]
fn missing_fixture_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixtures(dir.path());
    fs::remove_file(dir.path().join("disc.json")).unwrap();
    let err = reproduce_suite(dir.path()).unwrap_err();
    assert_eq!(err.code(), "E_IO");
    assert!(Suite::open(tempfile::tempdir().unwrap().path()).is_err());
}

#[test]
fn tampered_fixture_fails_its_criterion_with_a_diff() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixtures(dir.path());
    let path = dir.path().join("disc.json");
    let text = fs::read_to_string(&path).unwrap();
    // Flip the sign of the first x coordinate of a node other than the centre.
    let pos = text.find("[0.0,0.0]").expect("centre node") + "[0.0,0.0],[".len();
    let mut tampered = text.clone();
    tampered.insert(pos, '-');
    fs::write(&path, tampered).unwrap();

    let suite = Suite::open(dir.path()).unwrap();
    let exit = suite.run(10);
    assert!(!exit.passed);
    assert!(exit.details.iter().any(|d| d.contains("sha256") && d.contains("disc.json")), "{:?}", exit.details);
    // Criteria that do not read the disc are unaffected.
    assert!(suite.run(1).passed);
}

#[test]
fn every_criterion_has_one_line() {
    let suite = Suite::open(shipped()).unwrap();
    let lines: Vec<String> = [10, 11].iter().map(|&id| suite.run(id).line()).collect();
    assert!(lines[0].starts_with("criterion 10 PASS"));
    assert!(lines[1].starts_with("criterion 11 PASS"));
    assert!(!suite.run(14).passed);
}
