//! Assembles per-section answers into one Markdown README and writes the
//! output files (README.md, a docs/ copy, and a provenance sidecar).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("duplicate section heading: {0}")]
    DuplicateHeading(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionStatus {
    Generated,
    Empty,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReadmeSection {
    pub heading: String,
    pub body_markdown: String,
    pub order: u64,
    pub status: SectionStatus,
}

/// Which model and chunks produced each section.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectionProvenance {
    pub heading: String,
    pub status: SectionStatus,
    pub chunk_ids: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub model_name: String,
    pub timestamp: String,
    pub sections: Vec<SectionProvenance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReadmeDocument {
    pub title: String,
    pub sections: Vec<ReadmeSection>,
    pub provenance: Provenance,
}

/// Drop a leading line that merely repeats the section heading (models are
/// asked to start with `##{heading}` and often do).
fn strip_duplicate_heading<'a>(body: &'a str, heading: &str) -> &'a str {
    let trimmed = body.trim_start_matches(['\n', '\r']);
    let Some(first_line) = trimmed.lines().next() else {
        return body;
    };
    let line = first_line.trim();
    let hashes = line.chars().take_while(|&c| c == '#').count();
    if hashes == 0 || hashes > 6 {
        return body;
    }
    let rest = line[hashes..].trim();
    if rest.eq_ignore_ascii_case(heading.trim()) {
        return trimmed[first_line.len()..].trim_start_matches(['\n', '\r']);
    }
    body
}

fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

impl ReadmeDocument {
    /// Render the document: one `# title`, then each non-empty section as
    /// `## heading` plus body. Failed sections keep their heading with a
    /// failure marker; empty sections are left out entirely.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {}\n", self.title));
        for section in &self.sections {
            match section.status {
                SectionStatus::Empty => continue,
                SectionStatus::Failed => {
                    out.push_str(&format!(
                        "\n## {}\n\n<!-- generation failed -->\n",
                        section.heading
                    ));
                }
                SectionStatus::Generated => {
                    let body = normalize_newlines(&section.body_markdown);
                    let body = strip_duplicate_heading(&body, &section.heading);
                    out.push_str(&format!(
                        "\n## {}\n\n{}\n",
                        section.heading,
                        body.trim_end()
                    ));
                }
            }
        }
        out
    }
}

/// Order sections and stitch them into a document. Headings must be unique.
pub fn assemble(
    title: &str,
    mut sections: Vec<ReadmeSection>,
    provenance: Provenance,
) -> Result<ReadmeDocument, AssembleError> {
    let mut seen = std::collections::BTreeSet::new();
    for s in &sections {
        if !seen.insert(s.heading.to_lowercase()) {
            return Err(AssembleError::DuplicateHeading(s.heading.clone()));
        }
    }
    sections.sort_by_key(|s| s.order);
    Ok(ReadmeDocument {
        title: title.to_string(),
        sections,
        provenance,
    })
}

#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub readme: PathBuf,
    pub docs_index: PathBuf,
    pub provenance: PathBuf,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), AssembleError> {
    std::fs::write(path, contents).map_err(|source| AssembleError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Write README.md, docs/index.md (an identical copy for static-site tools),
/// and provenance.json under `outdir`.
pub fn write_outputs(doc: &ReadmeDocument, outdir: &Path) -> Result<OutputPaths, AssembleError> {
    let docs_dir = outdir.join("docs");
    std::fs::create_dir_all(&docs_dir).map_err(|source| AssembleError::Write {
        path: docs_dir.clone(),
        source,
    })?;
    let markdown = doc.to_markdown();
    let paths = OutputPaths {
        readme: outdir.join("README.md"),
        docs_index: docs_dir.join("index.md"),
        provenance: outdir.join("provenance.json"),
    };
    write_file(&paths.readme, markdown.as_bytes())?;
    write_file(&paths.docs_index, markdown.as_bytes())?;
    let provenance = serde_json::to_string_pretty(&doc.provenance).expect("provenance serializes");
    write_file(&paths.provenance, provenance.as_bytes())?;
    Ok(paths)
}
