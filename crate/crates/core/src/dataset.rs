//! Fine-tuning dataset construction: heading-derived questions from existing
//! READMEs, retrieval-built context, regex-scrubbed answers, and the
//! training-recipe manifest.

use std::io::Write;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::{chunk, ChunkingConfig};
use crate::embed::{embed, EmbeddingProviderConfig};
use crate::hnsw::{HnswIndex, HnswParams};
use crate::ingest::{acquire, traverse, IgnoreRules, RepoSource};
use crate::prompt::build_context;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("ingest failed for {project}: {source}")]
    Ingest {
        project: String,
        #[source]
        source: crate::ingest::IngestError,
    },
    #[error("chunking failed for {project}: {source}")]
    Chunk {
        project: String,
        #[source]
        source: crate::chunk::ChunkError,
    },
    #[error("embedding failed for {project}: {source}")]
    Embed {
        project: String,
        #[source]
        source: crate::embed::EmbedError,
    },
    #[error("indexing failed for {project}: {source}")]
    Index {
        project: String,
        #[source]
        source: crate::hnsw::HnswError,
    },
    #[error("context build failed for {project}: {source}")]
    Context {
        project: String,
        #[source]
        source: crate::prompt::PromptError,
    },
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub project_name: String,
    pub repository_url: String,
    pub question: String,
    pub context: String,
    pub answer: String,
}

// ---------------------------------------------------------------------------
// Markdown heading extraction

/// A level-1/2 section of a README.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedSection {
    pub heading: String,
    pub body: String,
    pub level: u8,
}

fn fence_open(line: &str) -> Option<(char, usize)> {
    let trimmed = line.trim_start();
    for c in ['`', '~'] {
        let run = trimmed.chars().take_while(|&x| x == c).count();
        if run >= 3 {
            return Some((c, run));
        }
    }
    None
}

fn fence_close(line: &str, open: (char, usize)) -> bool {
    let trimmed = line.trim();
    let run = trimmed.chars().take_while(|&x| x == open.0).count();
    run >= open.1 && trimmed.chars().all(|x| x == open.0)
}

fn parse_atx_heading(line: &str) -> Option<(u8, String)> {
    let rest = line
        .strip_prefix("   ")
        .or_else(|| line.strip_prefix("  "))
        .or_else(|| line.strip_prefix(' '))
        .unwrap_or(line);
    let hashes = rest.chars().take_while(|&c| c == '#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let after = &rest[hashes..];
    if !(after.is_empty() || after.starts_with(' ') || after.starts_with('\t')) {
        return None;
    }
    let mut text = after.trim();
    // closing hash sequence, only when separated from the title
    let no_close = text.trim_end_matches('#');
    if no_close.len() < text.len() && (no_close.is_empty() || no_close.ends_with([' ', '\t'])) {
        text = no_close.trim_end();
    }
    if text.is_empty() {
        return None;
    }
    Some((hashes as u8, text.to_string()))
}

fn setext_underline(line: &str) -> Option<u8> {
    let t = line.trim();
    if t.len() >= 2 && t.chars().all(|c| c == '=') {
        return Some(1);
    }
    if t.len() >= 2 && t.chars().all(|c| c == '-') {
        return Some(2);
    }
    None
}

/// Rewrite setext headings (`Title` over `====`/`----`) as ATX so the
/// extractor has one heading style to deal with.
fn normalize_setext(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let mut out: Vec<String> = Vec::with_capacity(lines.len());
    let mut fence: Option<(char, usize)> = None;
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        match fence {
            Some(open) => {
                if fence_close(line, open) {
                    fence = None;
                }
                out.push(line.to_string());
                i += 1;
                continue;
            }
            None => {
                if let Some(open) = fence_open(line) {
                    fence = Some(open);
                    out.push(line.to_string());
                    i += 1;
                    continue;
                }
            }
        }
        let is_candidate = !line.trim().is_empty()
            && parse_atx_heading(line).is_none()
            && setext_underline(line).is_none();
        if is_candidate {
            if let Some(level) = lines.get(i + 1).and_then(|l| setext_underline(l)) {
                let marker = if level == 1 { "#" } else { "##" };
                out.push(format!("{marker} {}", line.trim()));
                i += 2;
                continue;
            }
        }
        out.push(line.to_string());
        i += 1;
    }
    let mut joined = out.join("\n");
    if text.ends_with('\n') {
        joined.push('\n');
    }
    joined
}

/// Pull every level-1/2 section out of a README: the heading text and the
/// body running up to the next level-1/2 heading. Headings inside code
/// fences do not count; text before the first heading is dropped.
pub fn extract_sections(readme_text: &str) -> Vec<ExtractedSection> {
    let normalized = normalize_setext(readme_text);
    let mut sections: Vec<ExtractedSection> = Vec::new();
    let mut current: Option<(u8, String, Vec<&str>)> = None;
    let mut fence: Option<(char, usize)> = None;

    for line in normalized.lines() {
        match fence {
            Some(open) => {
                if fence_close(line, open) {
                    fence = None;
                }
                if let Some((_, _, body)) = &mut current {
                    body.push(line);
                }
                continue;
            }
            None => {
                if let Some(open) = fence_open(line) {
                    fence = Some(open);
                    if let Some((_, _, body)) = &mut current {
                        body.push(line);
                    }
                    continue;
                }
            }
        }
        match parse_atx_heading(line) {
            Some((level, heading)) if level <= 2 => {
                if let Some((lvl, h, body)) = current.take() {
                    sections.push(ExtractedSection {
                        heading: h,
                        body: body.join("\n"),
                        level: lvl,
                    });
                }
                current = Some((level, heading, Vec::new()));
            }
            _ => {
                if let Some((_, _, body)) = &mut current {
                    body.push(line);
                }
            }
        }
    }
    if let Some((lvl, h, body)) = current.take() {
        sections.push(ExtractedSection {
            heading: h,
            body: body.join("\n"),
            level: lvl,
        });
    }
    sections
}

/// Heading/body pairs, the shape dataset rows are built from.
pub fn extract_headings(readme_text: &str) -> Vec<(String, String)> {
    extract_sections(readme_text)
        .into_iter()
        .map(|s| (s.heading, s.body))
        .collect()
}

// ---------------------------------------------------------------------------
// Scrubbing

pub struct ScrubRule {
    pub name: &'static str,
    pattern: Regex,
    replacement: &'static str,
}

/// Ordered scrub rules; `scrub` applies them until a fixpoint so the output
/// matches none of the patterns.
pub struct ScrubRules {
    rules: Vec<ScrubRule>,
}

impl Default for ScrubRules {
    fn default() -> Self {
        let rule = |name, pattern: &str, replacement| ScrubRule {
            name,
            pattern: Regex::new(pattern).expect("scrub pattern compiles"),
            replacement,
        };
        Self {
            rules: vec![
                rule("image", r"!\[[^\]]*\]\([^)]*\)", ""),
                rule("link_url", r"\]\(\s*(?:https?|ftp)://[^)]*\)", "](URL)"),
                rule("bare_url", r"(?:https?|ftp)://[^\s)>\]]+", "URL"),
                rule(
                    "email",
                    r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}",
                    "",
                ),
                rule("mention", r"@[A-Za-z0-9_][A-Za-z0-9_-]*", ""),
                rule("hashtag", r"(?m)(^|[^#\w])#\w+", "$1"),
            ],
        }
    }
}

impl ScrubRules {
    pub fn names(&self) -> Vec<&'static str> {
        self.rules.iter().map(|r| r.name).collect()
    }

    /// Name of the first rule still matching `text`, if any.
    pub fn first_match(&self, text: &str) -> Option<&'static str> {
        self.rules
            .iter()
            .find(|r| r.pattern.is_match(text))
            .map(|r| r.name)
    }
}

/// Remove hashtags, emails, @-mentions and image URLs; collapse remaining
/// URLs to the literal `URL`. Idempotent.
pub fn scrub(text: &str, rules: &ScrubRules) -> String {
    let mut current = text.to_string();
    // every effective replacement strictly shrinks the text, so this ends
    loop {
        let mut next = current.clone();
        for rule in &rules.rules {
            next = rule
                .pattern
                .replace_all(&next, rule.replacement)
                .into_owned();
        }
        if next == current {
            return next;
        }
        current = next;
    }
}

// ---------------------------------------------------------------------------
// Fine-tuning recipe manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineTuneRecipe {
    pub r: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub bias: String,
    pub task_type: String,
    pub per_device_train_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub num_train_epochs: u32,
    pub learning_rate: f64,
    pub fp16: bool,
    pub optim: String,
    pub lr_scheduler_type: String,
    pub warmup_ratio: f64,
}

impl Default for FineTuneRecipe {
    fn default() -> Self {
        Self {
            r: 2,
            lora_alpha: 32,
            lora_dropout: 0.05,
            bias: "none".to_string(),
            task_type: "CAUSAL_LM".to_string(),
            per_device_train_batch_size: 1,
            gradient_accumulation_steps: 1,
            num_train_epochs: 3,
            learning_rate: 1e-4,
            fp16: true,
            optim: "paged_adamw_8bit".to_string(),
            lr_scheduler_type: "cosine".to_string(),
            warmup_ratio: 0.01,
        }
    }
}

/// Write the fine-tuning recipe as a JSON manifest.
pub fn emit_recipe(outpath: &Path) -> Result<FineTuneRecipe, DatasetError> {
    let recipe = FineTuneRecipe::default();
    let json = serde_json::to_string_pretty(&recipe).expect("recipe serializes");
    std::fs::write(outpath, json)?;
    Ok(recipe)
}

// ---------------------------------------------------------------------------
// Dataset building

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub chunking: ChunkingConfig,
    pub embedding: EmbeddingProviderConfig,
    pub hnsw: HnswParams,
    pub k: usize,
    /// Context token budget; defaults to k * chunk_size so the whole top-k
    /// concatenation is kept.
    pub max_context_tokens: Option<usize>,
    /// Minimum ASCII character ratio for the English-only filter.
    pub english_ascii_threshold: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            chunking: ChunkingConfig::default(),
            embedding: EmbeddingProviderConfig::default(),
            hnsw: HnswParams::default(),
            k: 4,
            max_context_tokens: None,
            english_ascii_threshold: 0.9,
        }
    }
}

impl DatasetConfig {
    fn context_budget(&self) -> usize {
        self.max_context_tokens
            .unwrap_or(self.k * self.chunking.chunk_size)
    }
}

/// One repository that produced no rows, and why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipEntry {
    pub project: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct DatasetBuild {
    pub records: Vec<QaRecord>,
    pub skipped: Vec<SkipEntry>,
}

fn ascii_ratio(text: &str) -> f64 {
    let total = text.chars().count();
    if total == 0 {
        return 1.0;
    }
    let ascii = text.chars().filter(|c| c.is_ascii()).count();
    ascii as f64 / total as f64
}

fn is_root_readme(relative_path: &str) -> bool {
    if relative_path.contains('/') {
        return false;
    }
    let lower = relative_path.to_lowercase();
    lower == "readme" || lower.starts_with("readme.")
}

enum RepoOutcome {
    Rows(Vec<QaRecord>),
    Skipped(String),
}

fn process_repo(
    source: &RepoSource,
    cfg: &DatasetConfig,
    rules: &ScrubRules,
    workdir: &Path,
) -> Result<RepoOutcome, DatasetError> {
    let project = source.name.clone();
    let wrap_ingest = |source| DatasetError::Ingest {
        project: project.clone(),
        source,
    };
    let root = acquire(source, workdir).map_err(wrap_ingest)?;
    let files = traverse(&root, &IgnoreRules::default()).map_err(wrap_ingest)?;

    let Some(readme_pos) = files.iter().position(|f| is_root_readme(&f.relative_path)) else {
        return Ok(RepoOutcome::Skipped("no README at repository root".into()));
    };
    let readme = &files[readme_pos];
    if ascii_ratio(&readme.content) < cfg.english_ascii_threshold {
        return Ok(RepoOutcome::Skipped(
            "README failed the English filter".into(),
        ));
    }
    let sections = extract_sections(&readme.content);
    if sections.is_empty() {
        return Ok(RepoOutcome::Skipped(
            "README has no level-1/2 headings".into(),
        ));
    }

    // the README itself never enters the retrieval corpus: its sections are
    // the answers, so indexing it would leak them into the context
    let corpus: Vec<_> = files
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != readme_pos)
        .map(|(_, f)| f.clone())
        .collect();
    let chunks = chunk(&corpus, &cfg.chunking).map_err(|source| DatasetError::Chunk {
        project: project.clone(),
        source,
    })?;
    if chunks.is_empty() {
        return Ok(RepoOutcome::Skipped(
            "repository has no indexable text".into(),
        ));
    }

    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let wrap_embed = |source| DatasetError::Embed {
        project: project.clone(),
        source,
    };
    let vectors = embed(&texts, &cfg.embedding).map_err(wrap_embed)?;
    let mut index = HnswIndex::new(cfg.embedding.dim, cfg.hnsw.clone()).map_err(|source| {
        DatasetError::Index {
            project: project.clone(),
            source,
        }
    })?;
    for (chunk, vector) in chunks.iter().zip(&vectors) {
        index
            .insert(vector, chunk.chunk_id)
            .map_err(|source| DatasetError::Index {
                project: project.clone(),
                source,
            })?;
    }

    let budget = cfg.context_budget();
    let mut rows = Vec::new();
    for section in &sections {
        let question = section.heading.trim().to_string();
        let answer = scrub(&section.body, rules).trim().to_string();
        if question.is_empty() || answer.is_empty() {
            log::debug!(
                "{project}: dropping heading {:?} with empty scrubbed answer",
                section.heading
            );
            continue;
        }
        let qvec = embed(&[question.as_str()], &cfg.embedding).map_err(wrap_embed)?;
        let k = cfg.k.min(index.len());
        let ef = index.params().ef_search.max(k);
        let hits = index
            .search(&qvec[0], k, ef)
            .map_err(|source| DatasetError::Index {
                project: project.clone(),
                source,
            })?;
        let context =
            build_context(&hits, &chunks, budget).map_err(|source| DatasetError::Context {
                project: project.clone(),
                source,
            })?;
        if context.text.is_empty() {
            continue;
        }
        rows.push(QaRecord {
            project_name: project.clone(),
            repository_url: source.locator.clone(),
            question,
            context: context.text,
            answer,
        });
    }
    Ok(RepoOutcome::Rows(rows))
}

/// Build QA rows for every source repository. Repositories are processed
/// concurrently; rows keep the source order.
pub fn build_dataset(
    sources: &[RepoSource],
    cfg: &DatasetConfig,
    workdir: &Path,
) -> Result<DatasetBuild, DatasetError> {
    let rules = ScrubRules::default();
    let outcomes: Vec<Result<RepoOutcome, DatasetError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = sources
            .iter()
            .map(|source| scope.spawn(|| process_repo(source, cfg, &rules, workdir)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });

    let mut build = DatasetBuild::default();
    for (source, outcome) in sources.iter().zip(outcomes) {
        match outcome? {
            RepoOutcome::Rows(rows) => build.records.extend(rows),
            RepoOutcome::Skipped(reason) => {
                log::warn!("skipping {}: {reason}", source.name);
                build.skipped.push(SkipEntry {
                    project: source.name.clone(),
                    reason,
                });
            }
        }
    }
    Ok(build)
}

/// Write rows as RFC-4180 CSV with the
/// `project_name,repository_url,question,context,answer` header.
pub fn write_csv(records: &[QaRecord], path: &Path) -> Result<(), DatasetError> {
    let mut writer = csv::Writer::from_path(path)?;
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<QaRecord>, DatasetError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Skip log as JSON lines.
pub fn write_skip_log(entries: &[SkipEntry], path: &Path) -> Result<(), DatasetError> {
    let mut file = std::fs::File::create(path)?;
    for entry in entries {
        serde_json::to_writer(&mut file, entry)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}
