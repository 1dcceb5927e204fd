//! Binary-level tests: flags, exit codes, interactive guards, and the
//! index/query/dataset/eval command surfaces.

mod common;

use std::path::Path;
use std::process::{Command, Output, Stdio};

use common::{fixture_path, golden};

fn repodoc() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_repodoc"));
    cmd.stdin(Stdio::null());
    cmd.env_remove("REPODOC_API_KEY");
    cmd.env_remove("RUST_LOG");
    cmd
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

const QUANTIZED: &str = "TheBloke/Llama-2-7B-Chat-GPTQ";

fn generate_on_tinyrepo(out: &Path, extra: &[&str]) -> Output {
    repodoc()
        .args(["generate", "--repo"])
        .arg(fixture_path("tinyrepo"))
        .args(["--name", "tinyrepo", "--model", QUANTIZED, "--out"])
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn help_matches_snapshot() {
    let output = repodoc().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(stdout(&output), golden("help.txt"));
}

#[test]
fn subcommand_help_documents_every_flag() {
    for (sub, flags) in [
        (
            "generate",
            vec![
                "--config",
                "--repo",
                "--name",
                "--model",
                "--out",
                "--k",
                "--temperature",
                "--questions",
                "--dry-run",
                "--log-level",
            ],
        ),
        (
            "index",
            vec!["--config", "--repo", "--name", "--out", "--k"],
        ),
        ("query", vec!["--question", "--build", "--model", "--out"]),
        ("dataset", vec!["--sources", "--out", "--k"]),
        (
            "eval",
            vec!["--generated", "--reference", "--batch", "--out"],
        ),
    ] {
        let output = repodoc().args([sub, "--help"]).output().unwrap();
        assert_eq!(output.status.code(), Some(0), "{sub} --help");
        let text = stdout(&output);
        for flag in flags {
            assert!(text.contains(flag), "{sub} --help must document {flag}");
        }
    }
}

#[test]
fn generate_stub_pipeline_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let output = generate_on_tinyrepo(&out, &[]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("6 sections"));
    let readme = std::fs::read_to_string(out.join("README.md")).unwrap();
    assert!(readme.starts_with("# tinyrepo\n"));
    assert_eq!(readme.matches("\n## ").count(), 6);
    assert!(out.join("docs/index.md").is_file());

    // provenance cites only chunks the index actually holds
    let provenance: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("provenance.json")).unwrap())
            .unwrap();
    assert_eq!(provenance["model_name"], QUANTIZED);
    let sections = provenance["sections"].as_array().unwrap();
    assert_eq!(sections.len(), 6);
    let index_output = repodoc()
        .args(["index", "--repo"])
        .arg(fixture_path("tinyrepo"))
        .args(["--name", "tinyrepo", "--out"])
        .arg(dir.path().join("idx"))
        .output()
        .unwrap();
    assert_eq!(index_output.status.code(), Some(0));
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("idx/index_meta.json")).unwrap(),
    )
    .unwrap();
    let chunk_count = meta["chunk_count"].as_u64().unwrap();
    for section in sections {
        for id in section["chunk_ids"].as_array().unwrap() {
            assert!(id.as_u64().unwrap() < chunk_count);
        }
    }
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({ "generation": { "temperature": 0.9 } }).to_string(),
    )
    .unwrap();
    // flag wins over the file; 3.0 is out of range so validation rejects it
    let output = repodoc()
        .args(["generate", "--config"])
        .arg(&config)
        .args(["--repo"])
        .arg(fixture_path("tinyrepo"))
        .args(["--name", "t", "--model", QUANTIZED, "--temperature", "3.0"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("temperature"));
}

#[test]
fn dry_run_renders_prompts_and_writes_no_readme() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let output = generate_on_tinyrepo(&out, &["--dry-run"]);
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("--- Description ("));
    assert!(text.contains("tokens"));
    assert!(text.contains("dry run: 6 prompts rendered"));
    assert!(!out.join("README.md").exists());
}

#[test]
fn piped_invocation_without_flags_fails_instead_of_hanging() {
    let output = repodoc().arg("generate").output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let text = stderr(&output);
    assert!(
        text.contains("--name"),
        "error should point at the flags: {text}"
    );
}

#[test]
fn unknown_config_key_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, "{\n  \"bogus_key\": true\n}").unwrap();
    let output = repodoc()
        .args(["generate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("bogus_key"));
}

#[test]
fn usage_errors_exit_1() {
    let output = repodoc().arg("no-such-command").output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn pipeline_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = repodoc()
        .args([
            "generate",
            "--repo",
            "/definitely/not/a/repo",
            "--name",
            "ghost",
            "--model",
            QUANTIZED,
            "--out",
        ])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr(&output));
    assert!(stderr(&output).contains("acquire"));
}

#[test]
fn paid_model_without_key_fails_before_indexing() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "generation": {
                "kind": "openai_compatible",
                "endpoint": "http://127.0.0.1:9/v1/chat/completions"
            }
        })
        .to_string(),
    )
    .unwrap();
    let out = dir.path().join("out");
    let output = repodoc()
        .args(["generate", "--config"])
        .arg(&config)
        .args(["--repo"])
        .arg(fixture_path("tinyrepo"))
        .args(["--name", "tinyrepo", "--model", "gpt-4", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr(&output));
    assert!(stderr(&output).contains("REPODOC_API_KEY"));
    assert!(!out.join("index.hnsw").exists());
    assert!(!out.join("README.md").exists());
}

fn query_config(dir: &Path) -> std::path::PathBuf {
    // small chunks so the fixture yields enough of them for k=4
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({ "chunking": { "chunk_size": 40 } }).to_string(),
    )
    .unwrap();
    config
}

fn build_tinyrepo_index(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("idx");
    let config = query_config(dir);
    let output = repodoc()
        .args(["index", "--config"])
        .arg(&config)
        .args(["--repo"])
        .arg(fixture_path("tinyrepo"))
        .args(["--name", "tinyrepo", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("indexed"));
    assert!(out.join("index.hnsw").is_file());
    assert!(out.join("chunks.jsonl").is_file());
    assert!(out.join("index_meta.json").is_file());
    out
}

#[test]
fn index_then_query_cites_four_sources() {
    let dir = tempfile::tempdir().unwrap();
    let out = build_tinyrepo_index(dir.path());
    let config = dir.path().join("config.json");
    let output = repodoc()
        .args(["query", "--config"])
        .arg(&config)
        .args(["--model", QUANTIZED, "--out"])
        .arg(&out)
        .args(["--question", "How do I install tinyrepo?"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("sources:"));
    let cited = text
        .lines()
        .skip_while(|l| !l.starts_with("sources:"))
        .skip(1)
        .take_while(|l| l.starts_with("  "))
        .count();
    assert_eq!(cited, 4, "k=4 sources expected:\n{text}");
}

#[test]
fn query_without_index_is_instructive() {
    let dir = tempfile::tempdir().unwrap();
    let output = repodoc()
        .args(["query", "--model", QUANTIZED, "--out"])
        .arg(dir.path().join("nothing-here"))
        .args(["--question", "anything?"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let text = stderr(&output);
    assert!(
        text.contains("repodoc index") && text.contains("--build"),
        "{text}"
    );
}

#[test]
fn query_repl_loads_the_index_once() {
    let dir = tempfile::tempdir().unwrap();
    let out = build_tinyrepo_index(dir.path());
    let config = dir.path().join("config.json");
    let mut child = repodoc()
        .args(["query", "--config"])
        .arg(&config)
        .args(["--model", QUANTIZED, "--log-level", "info", "--out"])
        .arg(&out)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    use std::io::Write;
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"How do I install it?\nHow do I run the tests?\n")
        .unwrap();
    let output = child.wait_with_output().unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let answers = stdout(&output);
    assert_eq!(answers.matches("sources:").count(), 2, "{answers}");
    let log = stderr(&output);
    assert_eq!(
        log.matches("loaded index").count(),
        1,
        "index must be loaded once and reused:\n{log}"
    );
}

#[test]
fn dataset_command_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("sources.json");
    std::fs::write(
        &manifest,
        serde_json::json!([
            { "locator": fixture_path("datasets/alpha"), "name": "alpha" },
            { "locator": fixture_path("datasets/beta"), "name": "beta" },
        ])
        .to_string(),
    )
    .unwrap();
    let out = dir.path().join("out");
    let output = repodoc()
        .args(["dataset", "--sources"])
        .arg(&manifest)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    // hand count: alpha has 3 level-1/2 headings, beta has 3
    assert!(stdout(&output).contains("wrote 6 records"));
    let csv_path = out.join("dataset.csv");
    let header = std::fs::read_to_string(&csv_path).unwrap();
    assert!(header.starts_with("project_name,repository_url,question,context,answer"));
    let records = repodoc::dataset::read_csv(&csv_path).unwrap();
    assert_eq!(records.len(), 6, "three headings per fixture repo");
    assert_eq!(
        records.iter().filter(|r| r.project_name == "alpha").count(),
        3
    );
    assert_eq!(
        records.iter().filter(|r| r.project_name == "beta").count(),
        3
    );
    assert!(out.join("finetune_recipe.json").is_file());
    assert!(out.join("skips.jsonl").is_file());
}

#[test]
fn eval_identical_inputs_scores_bleu_100() {
    let dir = tempfile::tempdir().unwrap();
    let readme = dir.path().join("README.md");
    std::fs::write(&readme, "# proj\n\n## Usage\n\nrun the binary\n").unwrap();
    let out = dir.path().join("out");
    let output = repodoc()
        .args(["eval", "--generated"])
        .arg(&readme)
        .arg("--reference")
        .arg(&readme)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("BLEU 100.00"), "{text}");
    assert!(out.join("eval_report.json").is_file());
}
