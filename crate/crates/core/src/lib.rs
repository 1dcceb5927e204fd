//! Retrieval-augmented documentation tooling for code repositories.
//!
//! The generation pipeline ingests a repository, splits its text into
//! fixed-size token chunks, embeds the chunks, indexes them in an HNSW
//! proximity graph, retrieves context per documentation question, prompts a
//! pluggable text-generation backend, and assembles the answers into a
//! sectioned Markdown README.
//!
//! Around that core: [`dataset`] builds fine-tuning datasets from
//! repositories that already have READMEs, and [`eval`] scores generated
//! documentation against references with BLEU and an embedding-based
//! precision/recall/F1.

pub mod assemble;
pub mod chunk;
pub mod config;
pub mod dataset;
pub mod embed;
pub mod eval;
pub mod generate;
pub mod hnsw;
pub mod ingest;
pub mod pipeline;
pub mod prompt;
