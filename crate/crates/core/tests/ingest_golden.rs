use std::path::{Path, PathBuf};

use pkd::ingest::{build_profiles, parse_dumps, render_profiles};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stack").join(name)
}

fn ingest() -> (String, String) {
    let (posts, tags) = parse_dumps(&fixture("Posts.xml"), &fixture("Votes.xml"), &fixture("Tags.xml")).unwrap();
    render_profiles(&build_profiles(&posts, None), &tags)
}

#[test]
fn five_row_dump_matches_golden_table() {
    let (workers, manifest) = ingest();
    assert_eq!(workers, std::fs::read_to_string(fixture("expected_workers.tsv")).unwrap());
    assert_eq!(manifest, std::fs::read_to_string(fixture("expected_manifest.json")).unwrap());
}

#[test]
fn rerun_writes_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("workers{i}.tsv"));
        std::fs::write(&path, ingest().0).unwrap();
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn missing_file_is_fatal() {
    assert!(parse_dumps(&fixture("nope.xml"), &fixture("Votes.xml"), &fixture("Tags.xml")).is_err());
}
