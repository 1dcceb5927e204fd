//! Text embedding providers and vector arithmetic.
//!
//! Two providers share one interface: a deterministic offline feature-hashing
//! embedder (tests, dry runs, desk-scale pipelines) and a remote HTTP
//! provider speaking a small JSON protocol that OpenAI-style and self-hosted
//! encoder servers can adapt to with thin shims.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk::tokenize;

/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 768;

/// Default sentence-encoder model name sent to remote providers.
pub const DEFAULT_EMBEDDING_MODEL: &str = "sentence-transformers/all-mpnet-base-v2";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no texts to embed")]
    EmptyInput,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("zero-norm embedding cannot be normalized")]
    ZeroNorm,
    #[error("dimension mismatch: provider returned {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { got: usize, expected: usize },
    #[error("remote provider config requires an endpoint")]
    MissingEndpoint,
    #[error("embedding dim must be positive")]
    ZeroDim,
    #[error("embedding provider unreachable: {0}")]
    Unreachable(String),
    #[error("embedding provider error: {0}")]
    Provider(String),
}

/// Fixed-dimension real vector over text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Wrap raw values, rejecting NaN/inf components.
    pub fn new(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// L2 norm, accumulated in f64.
    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| v as f64 * v as f64)
            .sum::<f64>()
            .sqrt()
    }
}

/// Inner product in f64.
pub fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum()
}

/// Scale to unit norm; zero vectors are an error.
pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector, EmbedError> {
    let norm = v.norm();
    if norm <= 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    let values = v.values.iter().map(|&x| (x as f64 / norm) as f32).collect();
    Ok(EmbeddingVector { values })
}

/// Cosine similarity via normalization + dot product.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    Ok(dot(&normalize(a)?, &normalize(b)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Remote,
    Hashing,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub dim: usize,
    /// Seed for the hashing provider's feature hash.
    pub seed: u64,
    /// L2-normalize vectors before returning them.
    pub normalize: bool,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Hashing,
            endpoint: None,
            model_name: DEFAULT_EMBEDDING_MODEL.to_string(),
            dim: DEFAULT_DIM,
            seed: 0,
            normalize: true,
            timeout_secs: 30,
            retries: 3,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::ZeroDim);
        }
        if self.kind == ProviderKind::Remote && self.endpoint.is_none() {
            return Err(EmbedError::MissingEndpoint);
        }
        Ok(())
    }
}

/// One embedding backend. Implementations must be shareable across threads.
pub trait Embedder: Send + Sync {
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
    fn dim(&self) -> usize;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, tag: u8, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed;
    h = (h ^ tag as u64).wrapping_mul(FNV_PRIME);
    for &b in bytes {
        h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic offline embedder: signed feature hashing of word tokens and
/// per-token character trigrams into `dim` buckets.
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    fn accumulate(&self, acc: &mut [f32], hash: u64) {
        let bucket = (hash % self.dim as u64) as usize;
        let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }

    fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f32; self.dim];
        for token in tokenize(text) {
            self.accumulate(&mut acc, fnv1a(self.seed, 1, token.as_bytes()));
            let chars: Vec<char> = token.chars().collect();
            for window in chars.windows(3) {
                let tri: String = window.iter().collect();
                self.accumulate(&mut acc, fnv1a(self.seed, 2, tri.as_bytes()));
            }
        }
        EmbeddingVector { values: acc }
    }
}

impl Embedder for HashingEmbedder {
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    model: &'a str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    vectors: Vec<Vec<f32>>,
}

/// HTTP embedding provider: POST {model, texts[]} -> {vectors[][]}.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    dim: usize,
    retries: u32,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str, model: &str, dim: usize, timeout_secs: u64, retries: u32) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(timeout_secs.max(1)))
            .build();
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            dim,
            retries,
            agent,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = serde_json::to_value(RemoteRequest {
            model: &self.model,
            texts,
        })
        .expect("request serializes");

        let mut attempt = 0u32;
        let resp = loop {
            match self.agent.post(&self.endpoint).send_json(body.clone()) {
                Ok(resp) => break resp,
                Err(ureq::Error::Status(code, resp)) if code >= 500 && attempt < self.retries => {
                    log::warn!("embedding provider returned {code}, retrying");
                    drop(resp);
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let text = resp.into_string().unwrap_or_default();
                    return Err(EmbedError::Provider(format!("HTTP {code}: {text}")));
                }
                Err(ureq::Error::Transport(t)) if attempt < self.retries => {
                    log::warn!("embedding transport error, retrying: {t}");
                }
                Err(ureq::Error::Transport(t)) => {
                    return Err(EmbedError::Unreachable(t.to_string()));
                }
            }
            attempt += 1;
            std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
        };

        let parsed: RemoteResponse = resp
            .into_json()
            .map_err(|e| EmbedError::Provider(format!("bad response body: {e}")))?;
        if parsed.vectors.len() != texts.len() {
            return Err(EmbedError::CountMismatch {
                got: parsed.vectors.len(),
                expected: texts.len(),
            });
        }
        parsed
            .vectors
            .into_iter()
            .map(|values| {
                if values.len() != self.dim {
                    return Err(EmbedError::DimensionMismatch {
                        got: values.len(),
                        expected: self.dim,
                    });
                }
                EmbeddingVector::new(values)
            })
            .collect()
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Build the provider selected by `cfg`.
pub fn provider(cfg: &EmbeddingProviderConfig) -> Result<Box<dyn Embedder>, EmbedError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ProviderKind::Hashing => Box::new(HashingEmbedder::new(cfg.dim, cfg.seed)),
        ProviderKind::Remote => Box::new(RemoteEmbedder::new(
            cfg.endpoint.as_deref().unwrap(),
            &cfg.model_name,
            cfg.dim,
            cfg.timeout_secs,
            cfg.retries,
        )),
    })
}

/// Embed a batch of texts, applying unit-normalization when configured.
pub fn embed(
    texts: &[&str],
    cfg: &EmbeddingProviderConfig,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::EmptyInput);
    }
    let backend = provider(cfg)?;
    let raw = backend.embed_raw(texts)?;
    if raw.len() != texts.len() {
        return Err(EmbedError::CountMismatch {
            got: raw.len(),
            expected: texts.len(),
        });
    }
    raw.into_iter()
        .map(|v| {
            if v.dim() != cfg.dim {
                return Err(EmbedError::DimensionMismatch {
                    got: v.dim(),
                    expected: cfg.dim,
                });
            }
            if cfg.normalize {
                normalize(&v)
            } else {
                Ok(v)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hashing_is_deterministic() {
        let cfg = EmbeddingProviderConfig::default();
        let a = embed(&["abc"], &cfg).unwrap();
        let b = embed(&["abc"], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hashing_default_dim_is_768() {
        let cfg = EmbeddingProviderConfig::default();
        let vecs = embed(&["some text"], &cfg).unwrap();
        assert_eq!(vecs[0].dim(), 768);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let cfg = EmbeddingProviderConfig::default();
        assert!(matches!(embed(&[], &cfg), Err(EmbedError::EmptyInput)));
    }

    #[test]
    fn empty_text_has_zero_norm() {
        let cfg = EmbeddingProviderConfig::default();
        assert!(matches!(embed(&[""], &cfg), Err(EmbedError::ZeroNorm)));
    }

    #[test]
    fn normalize_three_four_five() {
        let mut values = vec![0.0f32; 8];
        values[0] = 3.0;
        values[1] = 4.0;
        let v = EmbeddingVector::new(values).unwrap();
        let n = normalize(&v).unwrap();
        assert!((n.values()[0] - 0.6).abs() < 1e-6);
        assert!((n.values()[1] - 0.8).abs() < 1e-6);
        assert!(n.values()[2..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalize_unit_vector_is_identity() {
        let mut values = vec![0.0f32; 4];
        values[2] = 1.0;
        let v = EmbeddingVector::new(values).unwrap();
        let n = normalize(&v).unwrap();
        assert_eq!(n.values(), v.values());
    }

    #[test]
    fn normalize_zero_is_error() {
        let v = EmbeddingVector::new(vec![0.0; 4]).unwrap();
        assert!(matches!(normalize(&v), Err(EmbedError::ZeroNorm)));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f32::NAN]),
            Err(EmbedError::NonFinite)
        ));
    }

    #[test]
    fn no_collisions_over_10k_random_strings() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let embedder = HashingEmbedder::new(DEFAULT_DIM, 0);
        let mut seen: std::collections::HashMap<Vec<u32>, String> =
            std::collections::HashMap::new();
        for _ in 0..10_000 {
            let len = rng.gen_range(4..32);
            let text: String = (0..len)
                .map(|_| {
                    let c = rng.gen_range(0..37);
                    match c {
                        0..=25 => (b'a' + c as u8) as char,
                        26..=35 => (b'0' + (c - 26) as u8) as char,
                        _ => ' ',
                    }
                })
                .collect();
            let v = embedder.embed_one(&text);
            let key: Vec<u32> = v.values().iter().map(|f| f.to_bits()).collect();
            if let Some(prev) = seen.insert(key, text.clone()) {
                assert_eq!(prev, text, "distinct texts hashed to identical vectors");
            }
        }
    }

    proptest! {
        #[test]
        fn cosine_in_unit_range(a in prop::collection::vec(-10.0f32..10.0, 8), b in prop::collection::vec(-10.0f32..10.0, 8)) {
            let va = EmbeddingVector::new(a).unwrap();
            let vb = EmbeddingVector::new(b).unwrap();
            if va.norm() > 0.0 && vb.norm() > 0.0 {
                let c = cosine(&va, &vb).unwrap();
                prop_assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&c));
            }
        }

        #[test]
        fn normalized_vectors_have_unit_dot(values in prop::collection::vec(-100.0f32..100.0, 16)) {
            let v = EmbeddingVector::new(values).unwrap();
            if v.norm() > 1e-3 {
                let n = normalize(&v).unwrap();
                prop_assert!((dot(&n, &n) - 1.0).abs() < 1e-6);
            }
        }
    }
}
