//! End-to-end orchestration: repository to index, index to prompts, prompts
//! to an assembled README, plus the on-disk index bundle the query command
//! reloads.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemble::{
    assemble, write_outputs, OutputPaths, Provenance, ReadmeDocument, ReadmeSection,
    SectionProvenance, SectionStatus,
};
use crate::chunk::{chunk, read_chunks_jsonl, write_chunks_jsonl, DocumentChunk};
use crate::config::AppConfig;
use crate::embed::{embed, EmbeddingProviderConfig};
use crate::generate::{generate, FinishReason};
use crate::hnsw::HnswIndex;
use crate::ingest::{acquire, traverse, IgnoreRules, RepoSource};
use crate::prompt::{
    default_questions, load_questions, prompt_tokens, render_with_hits, ProjectMeta, PromptBundle,
    PromptTemplate, SectionQuestion,
};

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

impl PipelineError {
    fn new(stage: &'static str, err: impl std::fmt::Display) -> Self {
        Self {
            stage,
            message: err.to_string(),
        }
    }
}

fn stage<T, E: std::fmt::Display>(name: &'static str, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::new(name, e))
}

/// File names of a persisted index bundle inside an output directory.
pub const INDEX_FILE: &str = "index.hnsw";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const META_FILE: &str = "index_meta.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexMeta {
    pub project_name: String,
    pub repo: String,
    pub embedding: EmbeddingProviderConfig,
    pub chunk_count: usize,
    pub k: usize,
}

/// A searchable index plus the chunk store its payloads point into.
pub struct IndexBundle {
    pub index: HnswIndex,
    pub chunks: Vec<DocumentChunk>,
    pub meta: IndexMeta,
}

impl IndexBundle {
    pub fn save(&self, outdir: &Path) -> Result<(), PipelineError> {
        stage("persist", std::fs::create_dir_all(outdir))?;
        stage("persist", self.index.save(&outdir.join(INDEX_FILE)))?;
        let chunks_file = stage("persist", std::fs::File::create(outdir.join(CHUNKS_FILE)))?;
        stage(
            "persist",
            write_chunks_jsonl(&self.chunks, std::io::BufWriter::new(chunks_file)),
        )?;
        stage(
            "persist",
            std::fs::write(
                outdir.join(META_FILE),
                serde_json::to_string_pretty(&self.meta).expect("meta serializes"),
            ),
        )?;
        Ok(())
    }

    pub fn load(outdir: &Path) -> Result<Self, PipelineError> {
        let index = stage("load-index", HnswIndex::load(&outdir.join(INDEX_FILE)))?;
        let chunks_file = stage("load-index", std::fs::File::open(outdir.join(CHUNKS_FILE)))?;
        let chunks = stage(
            "load-index",
            read_chunks_jsonl(std::io::BufReader::new(chunks_file)),
        )?;
        let meta_text = stage(
            "load-index",
            std::fs::read_to_string(outdir.join(META_FILE)),
        )?;
        let meta: IndexMeta = stage("load-index", serde_json::from_str(&meta_text))?;
        log::info!("loaded index with {} chunks", chunks.len());
        Ok(Self {
            index,
            chunks,
            meta,
        })
    }
}

fn repo_source(cfg: &AppConfig) -> Result<RepoSource, PipelineError> {
    let repo = cfg
        .repo
        .clone()
        .ok_or_else(|| PipelineError::new("config", "a repository locator is required"))?;
    let name = cfg
        .project_name
        .clone()
        .ok_or_else(|| PipelineError::new("config", "a project name is required"))?;
    let mut source = RepoSource::new(repo, name);
    source.revision = cfg.revision.clone();
    Ok(source)
}

/// Ingest, chunk, embed, and index a repository.
pub fn build_index(cfg: &AppConfig) -> Result<IndexBundle, PipelineError> {
    let source = repo_source(cfg)?;
    let root = stage("acquire", acquire(&source, &cfg.cache_dir()))?;
    let rules = stage("traverse", IgnoreRules::with_defaults(&cfg.ignore))?;
    let files = stage("traverse", traverse(&root, &rules))?;
    let chunks = stage("chunk", chunk(&files, &cfg.chunking))?;
    if chunks.is_empty() {
        return Err(PipelineError::new(
            "chunk",
            "repository contains no indexable text",
        ));
    }
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let vectors = stage("embed", embed(&texts, &cfg.embedding))?;
    let mut index = stage("index", HnswIndex::new(cfg.embedding.dim, cfg.hnsw.clone()))?;
    for (c, v) in chunks.iter().zip(&vectors) {
        stage("index", index.insert(v, c.chunk_id))?;
    }
    let meta = IndexMeta {
        project_name: source.name,
        repo: source.locator,
        embedding: cfg.embedding.clone(),
        chunk_count: chunks.len(),
        k: cfg.k,
    };
    Ok(IndexBundle {
        index,
        chunks,
        meta,
    })
}

fn questions_for(cfg: &AppConfig) -> Result<Vec<SectionQuestion>, PipelineError> {
    match &cfg.questions_path {
        Some(path) => stage("questions", load_questions(path)),
        None => Ok(default_questions()),
    }
}

fn template_for(cfg: &AppConfig) -> Result<PromptTemplate, PipelineError> {
    match &cfg.template_path {
        Some(path) => stage("template", PromptTemplate::load(path)),
        None => Ok(PromptTemplate::default()),
    }
}

/// Retrieve context and render the prompt for one question.
pub fn build_bundle(
    bundle: &IndexBundle,
    cfg: &AppConfig,
    template: &PromptTemplate,
    question: &SectionQuestion,
) -> Result<PromptBundle, PipelineError> {
    let qvec = stage(
        "embed",
        embed(&[question.question.as_str()], &cfg.embedding),
    )?;
    let k = cfg.k.min(bundle.index.len());
    let ef = cfg.hnsw.ef_search.max(k);
    let hits = stage("search", bundle.index.search(&qvec[0], k, ef))?;
    let meta = ProjectMeta::new(bundle.meta.project_name.clone(), bundle.meta.repo.clone());
    stage(
        "render",
        render_with_hits(
            template,
            &meta,
            question,
            &hits,
            &bundle.chunks,
            cfg.max_context_tokens,
        ),
    )
}

/// A rendered prompt and its token count, as printed by dry runs.
pub struct DryRunPrompt {
    pub heading: String,
    pub tokens: usize,
    pub rendered: String,
}

pub fn dry_run_prompts(cfg: &AppConfig) -> Result<Vec<DryRunPrompt>, PipelineError> {
    let bundle = build_index(cfg)?;
    let template = template_for(cfg)?;
    let mut out = Vec::new();
    for question in questions_for(cfg)? {
        let prompt = build_bundle(&bundle, cfg, &template, &question)?;
        out.push(DryRunPrompt {
            heading: question.heading.clone(),
            tokens: prompt_tokens(&prompt),
            rendered: prompt.rendered_prompt,
        });
    }
    Ok(out)
}

pub struct GenerateOutcome {
    pub paths: OutputPaths,
    pub document: ReadmeDocument,
    pub failed_sections: usize,
}

/// One question's prompt and, once a worker ran it, the backend outcome.
type SectionOutcome = (
    SectionQuestion,
    PromptBundle,
    Result<crate::generate::GenerationResult, String>,
);

/// Generate one section per question, a bounded number in flight at a time,
/// and keep results in question order.
fn generate_sections(
    bundle: &IndexBundle,
    cfg: &AppConfig,
    template: &PromptTemplate,
    questions: &[SectionQuestion],
) -> Result<Vec<SectionOutcome>, PipelineError> {
    let mut prompts = Vec::with_capacity(questions.len());
    for q in questions {
        prompts.push((q.clone(), build_bundle(bundle, cfg, template, q)?));
    }

    let queue: Mutex<std::collections::VecDeque<usize>> = Mutex::new((0..prompts.len()).collect());
    let results: Vec<Mutex<Option<Result<crate::generate::GenerationResult, String>>>> =
        (0..prompts.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..cfg.parallelism.max(1).min(prompts.len().max(1)) {
            scope.spawn(|| loop {
                let next = queue.lock().expect("queue lock").pop_front();
                let Some(i) = next else { break };
                let outcome = generate(&prompts[i].1, &cfg.generation).map_err(|e| e.to_string());
                *results[i].lock().expect("result lock") = Some(outcome);
            });
        }
    });

    Ok(prompts
        .into_iter()
        .zip(results)
        .map(|((q, p), r)| {
            let outcome = r.into_inner().expect("result lock").expect("worker ran");
            (q, p, outcome)
        })
        .collect())
}

/// The full generation pipeline: repository in, README.md out.
pub fn run_generate(cfg: &AppConfig) -> Result<GenerateOutcome, PipelineError> {
    let bundle = build_index(cfg)?;
    let template = template_for(cfg)?;
    let questions = questions_for(cfg)?;
    let generated = generate_sections(&bundle, cfg, &template, &questions)?;

    let mut sections = Vec::new();
    let mut provenance_sections = Vec::new();
    let mut failed = 0usize;
    for (question, prompt, outcome) in generated {
        let (status, body) = match outcome {
            Ok(result) => {
                let trimmed = result.text.trim().to_string();
                if trimmed.is_empty() || result.finish_reason == FinishReason::Error {
                    (SectionStatus::Empty, String::new())
                } else {
                    (SectionStatus::Generated, result.text)
                }
            }
            Err(message) => {
                log::warn!("section {} failed: {message}", question.heading);
                failed += 1;
                (SectionStatus::Failed, String::new())
            }
        };
        provenance_sections.push(SectionProvenance {
            heading: question.heading.clone(),
            status,
            chunk_ids: prompt.context_chunk_ids.clone(),
        });
        sections.push(ReadmeSection {
            heading: question.heading.clone(),
            body_markdown: body,
            order: question.order,
            status,
        });
    }

    let provenance = Provenance {
        model_name: cfg.generation.model_name.clone(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        sections: provenance_sections,
    };
    let document = stage(
        "assemble",
        assemble(&bundle.meta.project_name, sections, provenance),
    )?;
    let paths = stage("write", write_outputs(&document, &cfg.out_dir))?;
    Ok(GenerateOutcome {
        paths,
        document,
        failed_sections: failed,
    })
}

pub struct QueryAnswer {
    pub text: String,
    pub cited_paths: Vec<String>,
    pub chunk_ids: Vec<u64>,
}

/// Answer one free-form question against a loaded index.
pub fn answer_question(
    bundle: &IndexBundle,
    cfg: &AppConfig,
    question_text: &str,
) -> Result<QueryAnswer, PipelineError> {
    let question = SectionQuestion {
        heading: question_text.trim().to_string(),
        question: question_text.trim().to_string(),
        order: 0,
    };
    let template = template_for(cfg)?;
    let prompt = build_bundle(bundle, cfg, &template, &question)?;
    let result = stage("generate", generate(&prompt, &cfg.generation))?;
    let cited_paths = prompt
        .context_chunk_ids
        .iter()
        .filter_map(|&id| bundle.chunks.get(id as usize))
        .map(|c| c.source_path.clone())
        .collect();
    Ok(QueryAnswer {
        text: result.text,
        cited_paths,
        chunk_ids: prompt.context_chunk_ids,
    })
}

/// Convenience for tests and the CLI: index then persist, returning paths.
pub fn build_and_save_index(cfg: &AppConfig) -> Result<(IndexBundle, PathBuf), PipelineError> {
    let bundle = build_index(cfg)?;
    bundle.save(&cfg.out_dir)?;
    Ok((bundle, cfg.out_dir.clone()))
}
