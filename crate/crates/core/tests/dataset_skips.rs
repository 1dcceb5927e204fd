//! Repositories that cannot produce rows are skipped with a logged reason,
//! never a hard failure.

mod common;

use repodoc::dataset::{build_dataset, write_skip_log, DatasetConfig};
use repodoc::ingest::RepoSource;

fn write(root: &std::path::Path, rel: &str, content: &str) {
    let path = root.join(rel);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, content).unwrap();
}

#[test]
fn readme_less_and_non_english_repos_are_skipped() {
    let dir = tempfile::tempdir().unwrap();

    let no_readme = dir.path().join("no_readme");
    write(&no_readme, "src/lib.rs", "pub fn f() -> u8 { 7 }");

    let non_english = dir.path().join("non_english");
    write(
        &non_english,
        "README.md",
        "# проект\n\n## Установка\n\nзапустите установку пакета через pip прямо сейчас\n",
    );
    write(
        &non_english,
        "setup.py",
        "from setuptools import setup\nsetup(name='x')",
    );

    let ok = dir.path().join("ok");
    write(
        &ok,
        "README.md",
        "# ok\n\nIt works.\n\n## Usage\n\nRun the thing.\n",
    );
    write(&ok, "main.py", "print('the thing that runs and does work')");

    let sources = vec![
        RepoSource::new(no_readme.to_string_lossy(), "no_readme"),
        RepoSource::new(non_english.to_string_lossy(), "non_english"),
        RepoSource::new(ok.to_string_lossy(), "ok"),
    ];
    let cfg = DatasetConfig {
        chunking: repodoc::chunk::ChunkingConfig {
            chunk_size: 16,
            overlap: 0,
            mode: repodoc::chunk::ChunkMode::Concatenated,
        },
        embedding: repodoc::embed::EmbeddingProviderConfig {
            dim: 64,
            ..Default::default()
        },
        ..DatasetConfig::default()
    };
    let work = tempfile::tempdir().unwrap();
    let build = build_dataset(&sources, &cfg, work.path()).unwrap();

    assert_eq!(build.skipped.len(), 2);
    let reasons: Vec<&str> = build.skipped.iter().map(|s| s.reason.as_str()).collect();
    assert!(reasons.iter().any(|r| r.contains("no README")));
    assert!(reasons.iter().any(|r| r.contains("English")));
    assert!(build.records.iter().all(|r| r.project_name == "ok"));
    assert_eq!(build.records.len(), 2);

    let log_path = work.path().join("skips.jsonl");
    write_skip_log(&build.skipped, &log_path).unwrap();
    let text = std::fs::read_to_string(&log_path).unwrap();
    assert_eq!(text.lines().count(), 2);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["project"].is_string());
        assert!(v["reason"].is_string());
    }
}
