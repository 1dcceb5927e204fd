//! Scoring generated documentation against references: BLEU (clipped n-gram
//! precision with brevity penalty) and an embedding-based token-similarity
//! precision/recall/F1 in the BERTScore family.
//!
//! The embedding metric substitutes the configured provider for contextual
//! encoder states and applies no IDF weighting, so it is named "bert_style"
//! rather than claiming parity with any published scores.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assemble::{ReadmeDocument, SectionStatus};
use crate::chunk::tokenize;
use crate::dataset::extract_sections;
use crate::embed::{dot, embed, EmbedError, EmbeddingProviderConfig, EmbeddingVector};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("candidate is empty after tokenization")]
    EmptyCandidate,
    #[error("no non-empty reference after tokenization")]
    EmptyReference,
    #[error("embedding provider failed: {0}")]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// Raw clipped precisions; any zero count zeroes the score.
    None,
    /// Add-one on zero n-gram counts for n >= 2.
    AddOneOnZero,
}

/// BLEU with the exact knobs used to compute it recorded alongside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BleuReport {
    /// In [0, 1]; conventionally also read as score * 100.
    pub score: f64,
    /// Clipped precision per n-gram order; orders longer than the candidate
    /// are reported as a neutral 1.0 and excluded from the geometric mean.
    pub ngram_precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub candidate_len: usize,
    /// Closest reference length (ties to the shorter).
    pub reference_len: usize,
    pub max_n: usize,
    pub smoothing: Smoothing,
    /// Tokenization rule the scores were computed under.
    pub tokenizer: String,
}

fn ngram_counts<'a>(tokens: &'a [&'a str], n: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts: HashMap<&[&str], usize> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-style BLEU of one candidate against one or more references.
/// Not symmetric: candidate and reference roles differ (clipping and the
/// brevity penalty both depend on which side is which).
pub fn bleu(
    candidate: &str,
    references: &[&str],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<BleuReport, EvalError> {
    let max_n = max_n.max(1);
    let cand_tokens = tokenize(candidate);
    if cand_tokens.is_empty() {
        return Err(EvalError::EmptyCandidate);
    }
    let ref_tokens: Vec<Vec<&str>> = references
        .iter()
        .map(|r| tokenize(r))
        .filter(|t| !t.is_empty())
        .collect();
    if ref_tokens.is_empty() {
        return Err(EvalError::EmptyReference);
    }

    let c = cand_tokens.len();
    let r = ref_tokens
        .iter()
        .map(|t| t.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("at least one reference");

    let mut precisions = Vec::with_capacity(max_n);
    let mut log_sum = 0.0f64;
    let mut used = 0usize;
    let mut zero_order = false;
    for n in 1..=max_n {
        if c < n {
            precisions.push(1.0); // no n-grams of this order to score
            continue;
        }
        let total = c - n + 1;
        let cand_counts = ngram_counts(&cand_tokens, n);
        let mut clipped = 0usize;
        let ref_counts: Vec<HashMap<&[&str], usize>> =
            ref_tokens.iter().map(|t| ngram_counts(t, n)).collect();
        for (gram, &count) in &cand_counts {
            let best_ref = ref_counts
                .iter()
                .map(|rc| rc.get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(best_ref);
        }
        let p = if clipped == 0 && n >= 2 && smoothing == Smoothing::AddOneOnZero {
            1.0 / (total as f64 + 1.0)
        } else {
            clipped as f64 / total as f64
        };
        precisions.push(p);
        if p <= 0.0 {
            zero_order = true;
        } else {
            log_sum += p.ln();
        }
        used += 1;
    }

    let geo_mean = if zero_order || used == 0 {
        0.0
    } else {
        (log_sum / used as f64).exp()
    };
    let brevity_penalty = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    Ok(BleuReport {
        score: brevity_penalty * geo_mean,
        ngram_precisions: precisions,
        brevity_penalty,
        candidate_len: c,
        reference_len: r,
        max_n,
        smoothing,
        tokenizer: "word_punct".to_string(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BertStyleReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn token_vectors<'a>(
    tokens: &[&'a str],
    lookup: &HashMap<&'a str, EmbeddingVector>,
) -> Vec<EmbeddingVector> {
    tokens.iter().map(|t| lookup[t].clone()).collect()
}

fn greedy_mean(from: &[EmbeddingVector], to: &[EmbeddingVector]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|f| {
            to.iter()
                .map(|t| dot(f, t))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / from.len() as f64
}

/// Token-level greedy-matching similarity: precision is the mean over
/// candidate tokens of the best cosine against any reference token, recall
/// the mirror image, F1 their harmonic mean.
pub fn bert_style(
    candidate: &str,
    reference: &str,
    provider: &EmbeddingProviderConfig,
) -> Result<BertStyleReport, EvalError> {
    let cand_tokens = tokenize(candidate);
    if cand_tokens.is_empty() {
        return Err(EvalError::EmptyCandidate);
    }
    let ref_tokens = tokenize(reference);
    if ref_tokens.is_empty() {
        return Err(EvalError::EmptyReference);
    }

    let mut unique: Vec<&str> = cand_tokens
        .iter()
        .chain(ref_tokens.iter())
        .copied()
        .collect();
    unique.sort_unstable();
    unique.dedup();
    // unit-norm vectors make the dot below a cosine
    let mut norm_cfg = provider.clone();
    norm_cfg.normalize = true;
    let vectors = embed(&unique, &norm_cfg)?;
    let lookup: HashMap<&str, EmbeddingVector> = unique.iter().copied().zip(vectors).collect();

    let cand_vecs = token_vectors(&cand_tokens, &lookup);
    let ref_vecs = token_vectors(&ref_tokens, &lookup);
    let precision = greedy_mean(&cand_vecs, &ref_vecs);
    let recall = greedy_mean(&ref_vecs, &cand_vecs);
    Ok(BertStyleReport {
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

/// Scores for one aligned section pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectionEvaluation {
    pub heading: String,
    pub bleu: BleuReport,
    pub bert: BertStyleReport,
}

/// Per-section and whole-document scores for one repository.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepoEvaluation {
    pub sections: Vec<SectionEvaluation>,
    pub unmatched_generated: Vec<String>,
    pub unmatched_reference: Vec<String>,
    pub overall_bleu: BleuReport,
    pub overall_bert: BertStyleReport,
}

impl RepoEvaluation {
    pub fn aligned_pairs(&self) -> usize {
        self.sections.len()
    }
}

/// Compare a generated document against the repository's reference README.
/// Sections align by case-insensitive heading; whatever fails to align is
/// reported, and the overall scores compare the full texts.
pub fn evaluate_repo(
    generated: &ReadmeDocument,
    reference_readme: &str,
    provider: &EmbeddingProviderConfig,
) -> Result<RepoEvaluation, EvalError> {
    let reference_sections = extract_sections(reference_readme);
    let mut matched_ref = vec![false; reference_sections.len()];
    let mut sections = Vec::new();
    let mut unmatched_generated = Vec::new();

    for gen_section in &generated.sections {
        if gen_section.status != SectionStatus::Generated {
            continue;
        }
        let found = reference_sections.iter().enumerate().find(|(i, r)| {
            !matched_ref[*i]
                && r.heading
                    .trim()
                    .eq_ignore_ascii_case(gen_section.heading.trim())
        });
        let Some((idx, ref_section)) = found else {
            unmatched_generated.push(gen_section.heading.clone());
            continue;
        };
        if tokenize(&gen_section.body_markdown).is_empty() || tokenize(&ref_section.body).is_empty()
        {
            unmatched_generated.push(gen_section.heading.clone());
            continue;
        }
        matched_ref[idx] = true;
        sections.push(SectionEvaluation {
            heading: gen_section.heading.clone(),
            bleu: bleu(
                &gen_section.body_markdown,
                &[ref_section.body.as_str()],
                4,
                Smoothing::AddOneOnZero,
            )?,
            bert: bert_style(&gen_section.body_markdown, &ref_section.body, provider)?,
        });
    }

    let unmatched_reference = reference_sections
        .iter()
        .zip(&matched_ref)
        .filter(|(_, &m)| !m)
        .map(|(s, _)| s.heading.clone())
        .collect();

    let full_candidate = generated.to_markdown();
    Ok(RepoEvaluation {
        sections,
        unmatched_generated,
        unmatched_reference,
        overall_bleu: bleu(
            &full_candidate,
            &[reference_readme],
            4,
            Smoothing::AddOneOnZero,
        )?,
        overall_bert: bert_style(&full_candidate, reference_readme, provider)?,
    })
}

/// Reconstruct a document from rendered Markdown: the first level-1 heading
/// becomes the title, each level-2 section a generated section. Lets READMEs
/// already on disk flow through `evaluate_repo`.
pub fn document_from_markdown(text: &str) -> ReadmeDocument {
    let sections = extract_sections(text);
    let title = sections
        .iter()
        .find(|s| s.level == 1)
        .map(|s| s.heading.clone())
        .unwrap_or_else(|| "README".to_string());
    let sections = sections
        .into_iter()
        .filter(|s| s.level == 2)
        .enumerate()
        .map(|(i, s)| crate::assemble::ReadmeSection {
            heading: s.heading,
            body_markdown: s.body,
            order: i as u64,
            status: SectionStatus::Generated,
        })
        .collect();
    ReadmeDocument {
        title,
        sections,
        provenance: crate::assemble::Provenance {
            model_name: "unknown".to_string(),
            timestamp: String::new(),
            sections: Vec::new(),
        },
    }
}

/// One repository row of a two-column comparison report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRow {
    pub repo: String,
    pub bleu_a: f64,
    pub bert_a: BertStyleReport,
    pub bleu_b: Option<f64>,
    pub bert_b: Option<BertStyleReport>,
}

/// Render the two-table comparison report (BLEU, then P/R/F1) in Markdown.
pub fn render_batch_markdown(label_a: &str, label_b: &str, rows: &[BatchRow]) -> String {
    let mut out = String::new();
    out.push_str("## BLEU Scores\n\n");
    out.push_str(&format!("| Repository | {label_a} | {label_b} |\n"));
    out.push_str("|---|---|---|\n");
    for row in rows {
        let b = row
            .bleu_b
            .map(|v| format!("{:.2}", v * 100.0))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "| {} | {:.2} | {} |\n",
            row.repo,
            row.bleu_a * 100.0,
            b
        ));
    }
    out.push_str("\n## BERT-style Scores\n\n");
    out.push_str(&format!(
        "| Repository | {label_a} P | {label_a} R | {label_a} F1 | {label_b} P | {label_b} R | {label_b} F1 |\n"
    ));
    out.push_str("|---|---|---|---|---|---|---|\n");
    for row in rows {
        let (bp, br, bf) = row
            .bert_b
            .map(|b| {
                (
                    format!("{:.3}", b.precision),
                    format!("{:.3}", b.recall),
                    format!("{:.3}", b.f1),
                )
            })
            .unwrap_or_else(|| ("-".into(), "-".into(), "-".into()));
        out.push_str(&format!(
            "| {} | {:.3} | {:.3} | {:.3} | {} | {} | {} |\n",
            row.repo, row.bert_a.precision, row.bert_a.recall, row.bert_a.f1, bp, br, bf
        ));
    }
    out.push_str(
        "\n_Scores are computed from the supplied inputs with the configured providers; \
         this table mirrors the report layout, the values depend entirely on the inputs._\n",
    );
    out
}
