use std::path::Path;
use std::process::Command;

use chcomply::cli::pipeline::{artifact_names, Pipeline, ResultsHeader, Stage, QUERIES};
use chcomply::cli::RunConfig;
use chcomply::corpus::fixture::{write_planted, PlantedConfig};
use chcomply::error::Error;
use chcomply::evaluation::Ratio;

fn quick_config(corpus: &Path, out: &Path) -> RunConfig {
    let mut cfg: RunConfig = serde_json::from_str(include_str!("../../../configs/fixture.json")).unwrap();
    cfg.corpus_root = corpus.to_path_buf();
    cfg.out_dir = out.to_path_buf();
    cfg.training.swc_epochs = 2;
    cfg.training.roles_epochs = 1;
    cfg.training.swc_triplets = 40;
    cfg.training.role_triplets = 40;
    cfg
}

fn setup() -> (tempfile::TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_planted(&corpus, &PlantedConfig::default()).unwrap();
    let cfg = quick_config(&corpus, &dir.path().join("out"));
    (dir, cfg)
}

#[test]
fn run_all_writes_every_artifact() {
    let (_dir, cfg) = setup();
    let p = Pipeline::open(cfg.clone()).unwrap();
    let report = p.run_all().unwrap();
    for name in artifact_names() {
        assert!(cfg.out_dir.join(&name).is_file(), "missing {name}");
    }
    assert_eq!(report.comparison.embedders, ["baseline", "swc", "roles"]);
    assert_eq!(report.reference_check.len(), 12);

    let text = std::fs::read_to_string(cfg.out_dir.join(Stage::Roles.metrics_text())).unwrap();
    assert_eq!(text.lines().next().unwrap(), format!("config: {}", report.config_hash));

    let (header, results) = chcomply::assessor::read_results_jsonl::<ResultsHeader>(
        &cfg.out_dir.join(Stage::Swc.results_file()),
        true,
    )
    .unwrap();
    let header = header.unwrap();
    assert_eq!(header.stage, Stage::Swc);
    assert_eq!(results.len(), 24);
    assert!(results.iter().all(|r| r.candidates_considered == 39 && r.rank >= 1 && r.rank <= 39));
    let m = p.evaluate(Stage::Swc).unwrap();
    assert_eq!(m.confusion.total(), 24);
    assert!(matches!(m.accuracy, Ratio::Defined(_)));
}

#[test]
fn downstream_settings_make_results_stale() {
    let (_dir, cfg) = setup();
    let p = Pipeline::open(cfg.clone()).unwrap();
    p.ingest().unwrap();
    p.train_vocab().unwrap();
    p.train(Stage::Baseline).unwrap();
    p.embed(Stage::Baseline).unwrap();
    p.assess(Stage::Baseline).unwrap();

    let mut changed = cfg.clone();
    changed.assess.threshold_ratio = 0.2;
    let q = Pipeline::open(changed).unwrap();
    // embeddings are upstream of the change and stay valid
    q.assess(Stage::Baseline).unwrap();
    assert!(matches!(p.evaluate(Stage::Baseline), Err(Error::StaleArtifact { .. })));

    let mut reseeded = cfg;
    reseeded.seed += 1;
    let r = Pipeline::open(reseeded).unwrap();
    assert!(matches!(r.embed(Stage::Baseline), Err(Error::StaleArtifact { .. })));
}

#[test]
fn missing_upstream_is_reported() {
    let (_dir, cfg) = setup();
    let p = Pipeline::open(cfg).unwrap();
    assert!(matches!(p.train(Stage::Swc), Err(Error::MissingStage(_))));
    p.ingest().unwrap();
    p.train_vocab().unwrap();
    assert!(matches!(p.train(Stage::Roles), Err(Error::MissingStage(_))));
}

#[test]
fn golden_instances_are_excluded_from_queries() {
    let (_dir, mut cfg) = setup();
    cfg.golden_instances = vec!["wiper_ch".into(), "hatch_ch".into()];
    let p = Pipeline::open(cfg.clone()).unwrap();
    p.ingest().unwrap();
    p.train_vocab().unwrap();
    p.train(Stage::Baseline).unwrap();
    p.embed(Stage::Baseline).unwrap();
    let results = p.assess(Stage::Baseline).unwrap();
    // 4 positives from golden instances dropped
    assert_eq!(results.len(), 20);
    assert!(results
        .iter()
        .all(|r| !matches!(r.query.origin_instance.as_deref(), Some("wiper_ch" | "hatch_ch"))));

    cfg.golden_instances = vec!["nope".into()];
    let q = Pipeline::open(cfg).unwrap();
    assert!(matches!(q.assess(Stage::Baseline), Err(Error::UnknownInstance(_))));
}

#[test]
fn ingest_is_stable_across_output_locations() {
    let (dir, cfg) = setup();
    let mut other = cfg.clone();
    other.out_dir = dir.path().join("elsewhere");
    Pipeline::open(cfg.clone()).unwrap().ingest().unwrap();
    Pipeline::open(other.clone()).unwrap().ingest().unwrap();
    let a = std::fs::read(cfg.out_dir.join(QUERIES)).unwrap();
    let b = std::fs::read(other.out_dir.join(QUERIES)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cli_reports_errors_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_chcomply"))
        .args(["--corpus", dir.path().join("absent").to_str().unwrap(), "ingest"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string());
    assert!(err["message"].is_string());
}

#[test]
fn cli_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let status = Command::new(env!("CARGO_BIN_EXE_chcomply"))
        .args(["make-fixture", corpus.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"seed": 3, "out_dir": "unused"}"#).unwrap();
    let out_dir = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_chcomply"))
        .args(["--config", cfg_path.to_str().unwrap(), "--corpus", corpus.to_str().unwrap()])
        .args(["--out", out_dir.to_str().unwrap(), "--seed", "5", "ingest"])
        .status()
        .unwrap();
    assert!(status.success());
    let mut expected = RunConfig { seed: 5, ..RunConfig::default() };
    expected.corpus_root = corpus;
    let p = Pipeline::open(expected).unwrap();
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("corpus_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_hash"], p.hash(chcomply::cli::StageKey::Ingest));
}
