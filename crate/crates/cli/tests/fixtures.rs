//! The bundled datasets are generated; this keeps them in sync with the
//! generators. Set DCHECK_REGEN_FIXTURES=1 to rewrite them.

use std::fs;
use std::path::PathBuf;

use dcheck_core::dataset::Records;
use dcheck_core::synth::{planted, preference_pairs, Planted};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn check(name: &str, records: Records) {
    let path = data_dir().join(name);
    let tmp = tempfile::NamedTempFile::new().unwrap();
    records.write_jsonl(tmp.path()).unwrap();
    let expected = fs::read(tmp.path()).unwrap();
    if std::env::var_os("DCHECK_REGEN_FIXTURES").is_some() {
        fs::write(&path, &expected).unwrap();
    }
    let actual = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(actual == expected, "{name} is stale; rerun with DCHECK_REGEN_FIXTURES=1");
}

#[test]
fn planted_fixture_matches_generator() {
    check("planted.jsonl", Records::Plain(planted(Planted::Feature, 2000, 11)));
}

#[test]
fn preference_fixture_matches_generator() {
    check("preference_pairs.jsonl", Records::Preference(preference_pairs(1000, 5)));
}
