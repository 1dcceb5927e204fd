//! Tokenization and fixed-size token chunking of repository text.
//!
//! The tokenizer is deliberately model-free: alphanumeric runs are tokens,
//! every other non-whitespace character is a token of its own. Chunk texts
//! are cut from the original string at token boundaries, so in concatenated
//! mode with zero overlap the chunk texts joined back together reproduce the
//! corpus byte for byte.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FileRecord;

/// Default tokens per chunk.
pub const DEFAULT_CHUNK_SIZE: usize = 1000;

/// Source path recorded on chunks cut from the concatenated corpus.
pub const CORPUS_SOURCE: &str = "corpus";

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("chunk_size must be at least 1")]
    ZeroChunkSize,
    #[error("overlap {overlap} must be smaller than chunk_size {chunk_size}")]
    OverlapTooLarge { overlap: usize, chunk_size: usize },
}

/// How files are combined before chunking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkMode {
    /// All file contents joined (with a newline between files) into one
    /// corpus string, then chunked.
    Concatenated,
    /// Each file chunked on its own; a chunk never spans two files.
    PerFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub chunk_size: usize,
    pub overlap: usize,
    pub mode: ChunkMode,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: 0,
            mode: ChunkMode::Concatenated,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.chunk_size == 0 {
            return Err(ChunkError::ZeroChunkSize);
        }
        if self.overlap >= self.chunk_size {
            return Err(ChunkError::OverlapTooLarge {
                overlap: self.overlap,
                chunk_size: self.chunk_size,
            });
        }
        Ok(())
    }
}

/// A contiguous span of corpus text, at most `chunk_size` tokens long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub chunk_id: u64,
    pub source_path: String,
    pub text: String,
    pub token_count: usize,
}

/// Byte span of one token in its source string.
#[derive(Debug, Clone, Copy)]
struct TokenSpan {
    start: usize,
    end: usize,
}

fn token_spans(text: &str) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(i);
            }
        } else {
            if let Some(start) = word_start.take() {
                spans.push(TokenSpan { start, end: i });
            }
            if !ch.is_whitespace() {
                // every punctuation char is its own token
                spans.push(TokenSpan {
                    start: i,
                    end: i + ch.len_utf8(),
                });
            }
        }
    }
    if let Some(start) = word_start {
        spans.push(TokenSpan {
            start,
            end: text.len(),
        });
    }
    spans
}

/// Split text into tokens: alphanumeric runs plus single punctuation chars.
pub fn tokenize(text: &str) -> Vec<&str> {
    token_spans(text)
        .into_iter()
        .map(|s| &text[s.start..s.end])
        .collect()
}

/// Number of tokens `tokenize` would produce, without allocating them.
pub fn count_tokens(text: &str) -> usize {
    token_spans(text).len()
}

/// Prefix of `text` holding at most its first `n` tokens, cut at a token
/// boundary.
pub fn token_prefix(text: &str, n: usize) -> &str {
    if n == 0 {
        return "";
    }
    let spans = token_spans(text);
    match spans.get(n.saturating_sub(1)) {
        Some(span) => &text[..span.end],
        None => text,
    }
}

/// Split one source string into chunks, appending to `out`.
///
/// With zero overlap the produced texts partition `text` exactly: each chunk
/// starts where the previous one ended and the last chunk runs to the end of
/// the string, so trailing whitespace is never lost.
fn chunk_text(
    text: &str,
    source_path: &str,
    cfg: &ChunkingConfig,
    next_id: &mut u64,
    out: &mut Vec<DocumentChunk>,
) {
    let spans = token_spans(text);
    if spans.is_empty() {
        return;
    }
    let n = spans.len();
    if cfg.overlap == 0 {
        let mut cursor = 0usize;
        let mut start = 0usize;
        while start < n {
            let last = (start + cfg.chunk_size).min(n) - 1;
            let end = if last == n - 1 {
                text.len()
            } else {
                spans[last].end
            };
            out.push(DocumentChunk {
                chunk_id: *next_id,
                source_path: source_path.to_string(),
                text: text[cursor..end].to_string(),
                token_count: last - start + 1,
            });
            *next_id += 1;
            cursor = end;
            start = last + 1;
        }
    } else {
        let stride = cfg.chunk_size - cfg.overlap;
        let mut start = 0usize;
        while start < n {
            let last = (start + cfg.chunk_size).min(n) - 1;
            out.push(DocumentChunk {
                chunk_id: *next_id,
                source_path: source_path.to_string(),
                text: text[spans[start].start..spans[last].end].to_string(),
                token_count: last - start + 1,
            });
            *next_id += 1;
            start += stride;
        }
    }
}

/// Build the concatenated-mode corpus string for a file set.
pub fn corpus_text(files: &[FileRecord]) -> String {
    let mut corpus = String::new();
    for (i, file) in files.iter().enumerate() {
        if i > 0 {
            corpus.push('\n');
        }
        corpus.push_str(&file.content);
    }
    corpus
}

/// Split a file set into document chunks with dense, increasing ids.
pub fn chunk(files: &[FileRecord], cfg: &ChunkingConfig) -> Result<Vec<DocumentChunk>, ChunkError> {
    cfg.validate()?;
    let mut out = Vec::new();
    let mut next_id = 0u64;
    match cfg.mode {
        ChunkMode::Concatenated => {
            let corpus = corpus_text(files);
            chunk_text(&corpus, CORPUS_SOURCE, cfg, &mut next_id, &mut out);
        }
        ChunkMode::PerFile => {
            for file in files {
                chunk_text(
                    &file.content,
                    &file.relative_path,
                    cfg,
                    &mut next_id,
                    &mut out,
                );
            }
        }
    }
    Ok(out)
}

/// Write chunks as JSON lines, one chunk per line.
pub fn write_chunks_jsonl<W: std::io::Write>(
    chunks: &[DocumentChunk],
    mut w: W,
) -> std::io::Result<()> {
    for c in chunks {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read chunks back from JSON lines.
pub fn read_chunks_jsonl<R: std::io::BufRead>(r: R) -> std::io::Result<Vec<DocumentChunk>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let chunk: DocumentChunk = serde_json::from_str(&line)?;
        out.push(chunk);
    }
    Ok(out)
}
