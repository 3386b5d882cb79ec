use std::collections::BTreeMap;

use walkdir::WalkDir;

use chcomply::corpus::fixture::{write_planted, PlantedConfig};
use chcomply::corpus::{load_corpus, unroll_instances, Role};

#[test]
fn planted_corpus_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    write_planted(dir.path(), &PlantedConfig::default()).unwrap();
    let sources = WalkDir::new(dir.path())
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "c"))
        .count();
    assert_eq!(sources, 40);

    let corpus = load_corpus(dir.path()).unwrap();
    let summary = corpus.summary();
    assert_eq!(summary.programs, 40);
    assert_eq!(summary.instances, 6);
    let want: BTreeMap<Role, usize> =
        [(Role::Controller, 10), (Role::Handler, 8), (Role::Other, 22)].into_iter().collect();
    assert_eq!(summary.programs_by_role, want);
    // four apps with 2x1 programs, two with 1x2
    assert_eq!(unroll_instances(&corpus, corpus.instances()).unwrap().len(), 12);
}

#[test]
fn fixture_seed_changes_text_only() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = write_planted(a.path(), &PlantedConfig::default()).unwrap();
    let pb = write_planted(b.path(), &PlantedConfig { seed: 1, ..PlantedConfig::default() }).unwrap();
    assert_eq!(pa.manifest, pb.manifest);
    assert_ne!(pa.files, pb.files);
}
