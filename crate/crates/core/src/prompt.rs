//! Prompt templating: fills the instruction/question/context template with
//! project metadata and retrieved code context, and manages the default
//! README question set.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::{count_tokens, token_prefix, DocumentChunk};
use crate::hnsw::SearchHit;

/// Default cap on context size, in tokens, for generation prompts.
pub const DEFAULT_MAX_CONTEXT_TOKENS: usize = 3000;

const DEFAULT_INSTRUCTION: &str = "You are an AI assistant for a software project called {project_name}. \
You are trained on all the {content_type} that makes up this project. \
The {content_type} for the project is located at {repository_url}. \
You are given a repository which might contain several modules and each module will contain a set of files. \
Look at the source code in the repository and you have to generate content for the section of a README.md file following the heading given below. \
If you use any hyperlinks, they should link back to the github repository shared with you. \
You should only use hyperlinks that are explicitly listed in the context. \
Do NOT make up a hyperlink that is not listed. \
Assume the reader is a {target_audience} but is not deeply familiar with {project_name}. \
Assume the reader knows nothing about how the project is structured or which folders/files do what and what functions are written in which files and what these functions do. \
If you don't know how to fill up the README.md file in one of its sections, leave that part blank. \
Don't try to make up any content. \
Do not include information that is not directly relevant to repository, even though the names of the functions might be common or is frequently used in several other places. \
Provide the answer in correct markdown format.\n{additional_instructions}";

const DEFAULT_QUESTION: &str =
    "Provide the README content for the section with heading \"{input}\" starting with ##{heading}.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unresolved placeholder {{{0}}}")]
    UnresolvedPlaceholder(String),
    #[error("unterminated placeholder starting at byte {0}")]
    UnterminatedPlaceholder(usize),
    #[error("unknown chunk id {0}")]
    UnknownChunk(u64),
    #[error("question set is empty")]
    EmptyQuestionSet,
    #[error("question heading is empty")]
    EmptyHeading,
    #[error("duplicate question order {0}")]
    DuplicateOrder(u64),
    #[error("cannot read {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid question/template file {path}: {source}")]
    Parse {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Prompt skeleton. The instruction takes {project_name}, {content_type},
/// {repository_url}, {target_audience} and {additional_instructions}; the
/// question line takes {input} and {heading}.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub instruction_text: String,
    pub question_text: String,
    pub context_label: String,
    pub answer_prefix: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instruction_text: DEFAULT_INSTRUCTION.to_string(),
            question_text: DEFAULT_QUESTION.to_string(),
            context_label: "Context:".to_string(),
            answer_prefix: "Answer in Markdown:".to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| PromptError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Project fields substituted into the instruction block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectMeta {
    pub project_name: String,
    pub repository_url: String,
    #[serde(default = "default_content_type")]
    pub content_type: String,
    #[serde(default = "default_target_audience")]
    pub target_audience: String,
    #[serde(default)]
    pub additional_instructions: String,
}

fn default_content_type() -> String {
    "docs".to_string()
}

fn default_target_audience() -> String {
    "smart developer".to_string()
}

impl ProjectMeta {
    pub fn new(project_name: impl Into<String>, repository_url: impl Into<String>) -> Self {
        Self {
            project_name: project_name.into(),
            repository_url: repository_url.into(),
            content_type: default_content_type(),
            target_audience: default_target_audience(),
            additional_instructions: String::new(),
        }
    }
}

/// One README section to ask about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionQuestion {
    pub heading: String,
    pub question: String,
    pub order: u64,
}

/// The six default README sections, in order.
pub fn default_questions() -> Vec<SectionQuestion> {
    [
        "Description",
        "Requirements",
        "Installation",
        "Usage",
        "Contributing",
        "License",
    ]
    .iter()
    .enumerate()
    .map(|(i, h)| SectionQuestion {
        heading: h.to_string(),
        question: h.to_string(),
        order: i as u64,
    })
    .collect()
}

#[derive(Debug, Deserialize)]
struct QuestionFileEntry {
    heading: String,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    order: Option<u64>,
}

/// Load a custom question set from a JSON array of {heading, question?, order?}.
/// Question text defaults to the heading; order defaults to file position.
pub fn load_questions(path: &Path) -> Result<Vec<SectionQuestion>, PromptError> {
    let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let entries: Vec<QuestionFileEntry> =
        serde_json::from_str(&text).map_err(|source| PromptError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    if entries.is_empty() {
        return Err(PromptError::EmptyQuestionSet);
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut questions = Vec::with_capacity(entries.len());
    for (i, e) in entries.into_iter().enumerate() {
        if e.heading.trim().is_empty() {
            return Err(PromptError::EmptyHeading);
        }
        let order = e.order.unwrap_or(i as u64);
        if !seen.insert(order) {
            return Err(PromptError::DuplicateOrder(order));
        }
        questions.push(SectionQuestion {
            question: e.question.unwrap_or_else(|| e.heading.clone()),
            heading: e.heading,
            order,
        });
    }
    Ok(questions)
}

/// A fully rendered prompt plus the retrieval trail that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptBundle {
    pub rendered_prompt: String,
    pub question: SectionQuestion,
    pub context_chunk_ids: Vec<u64>,
    pub context_text: String,
    /// Set when the prompt was rendered without any retrieved context.
    pub empty_context: bool,
}

fn substitute(text: &str, map: &BTreeMap<&str, &str>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let Some(close) = text[i + 1..].find('}') else {
                return Err(PromptError::UnterminatedPlaceholder(i));
            };
            let name = &text[i + 1..i + 1 + close];
            let value = map
                .get(name)
                .ok_or_else(|| PromptError::UnresolvedPlaceholder(name.to_string()))?;
            out.push_str(value);
            i += close + 2;
        } else {
            let ch = text[i..].chars().next().unwrap();
            out.push(ch);
            i += ch.len_utf8();
        }
    }
    Ok(out)
}

/// Render the prompt for one section. Byte-deterministic in its inputs; an
/// empty `additional_instructions` leaves no trailing blank block.
pub fn render(
    template: &PromptTemplate,
    meta: &ProjectMeta,
    question: &SectionQuestion,
    context: &str,
) -> Result<PromptBundle, PromptError> {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    map.insert("project_name", meta.project_name.as_str());
    map.insert("content_type", meta.content_type.as_str());
    map.insert("repository_url", meta.repository_url.as_str());
    map.insert("target_audience", meta.target_audience.as_str());
    map.insert(
        "additional_instructions",
        meta.additional_instructions.as_str(),
    );
    map.insert("input", question.question.as_str());
    map.insert("heading", question.heading.as_str());

    let instruction = substitute(&template.instruction_text, &map)?;
    let question_line = substitute(&template.question_text, &map)?;
    let rendered_prompt = format!(
        "Instruction: {}\n\nQuestion: {}\n\n{}\n{}\n\n{}\n",
        instruction.trim_end(),
        question_line,
        template.context_label,
        context,
        template.answer_prefix,
    );
    Ok(PromptBundle {
        rendered_prompt,
        question: question.clone(),
        context_chunk_ids: Vec::new(),
        context_text: context.to_string(),
        empty_context: context.is_empty(),
    })
}

/// Context assembled from retrieval hits.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextBuild {
    pub text: String,
    pub chunk_ids: Vec<u64>,
    pub truncated: bool,
}

/// Concatenate hit chunks in hit order, each under a `--- <source> ---`
/// delimiter line, stopping at `max_context_tokens`. Only the final included
/// chunk may be cut short, at a token boundary.
pub fn build_context(
    hits: &[SearchHit],
    chunks: &[DocumentChunk],
    max_context_tokens: usize,
) -> Result<ContextBuild, PromptError> {
    let mut text = String::new();
    let mut chunk_ids = Vec::new();
    let mut truncated = false;
    let mut remaining = max_context_tokens;
    for hit in hits {
        let chunk = chunks
            .get(hit.chunk_id as usize)
            .filter(|c| c.chunk_id == hit.chunk_id)
            .ok_or(PromptError::UnknownChunk(hit.chunk_id))?;
        if remaining == 0 {
            truncated = true;
            break;
        }
        let (piece, used) = if chunk.token_count <= remaining {
            (chunk.text.as_str(), chunk.token_count)
        } else {
            truncated = true;
            (token_prefix(&chunk.text, remaining), remaining)
        };
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&format!("--- {} ---\n", chunk.source_path));
        text.push_str(piece);
        chunk_ids.push(chunk.chunk_id);
        remaining -= used;
        if truncated {
            break;
        }
    }
    Ok(ContextBuild {
        text,
        chunk_ids,
        truncated,
    })
}

/// Render a section prompt straight from retrieval hits.
pub fn render_with_hits(
    template: &PromptTemplate,
    meta: &ProjectMeta,
    question: &SectionQuestion,
    hits: &[SearchHit],
    chunks: &[DocumentChunk],
    max_context_tokens: usize,
) -> Result<PromptBundle, PromptError> {
    let context = build_context(hits, chunks, max_context_tokens)?;
    let mut bundle = render(template, meta, question, &context.text)?;
    bundle.context_chunk_ids = context.chunk_ids;
    Ok(bundle)
}

/// Token count of a rendered prompt, for window preflight and dry runs.
pub fn prompt_tokens(bundle: &PromptBundle) -> usize {
    count_tokens(&bundle.rendered_prompt)
}
