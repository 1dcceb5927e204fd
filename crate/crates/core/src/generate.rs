//! Text-generation backends: an OpenAI-compatible chat-completions client
//! and a deterministic offline stub, plus the supported-model registry.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{prompt_tokens, PromptBundle};

/// Default sampling temperature.
pub const DEFAULT_TEMPERATURE: f64 = 0.2;

/// Default generation budget in new tokens.
pub const DEFAULT_MAX_NEW_TOKENS: usize = 1024;

/// Environment variable consulted for the provider API key.
pub const DEFAULT_API_KEY_ENV: &str = "REPODOC_API_KEY";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("temperature {0} outside [0, 2]")]
    BadTemperature(f64),
    #[error("openai_compatible provider requires an endpoint")]
    MissingEndpoint,
    #[error(
        "prompt of {prompt_tokens} tokens plus {max_new_tokens} new tokens exceeds the \
         {window}-token window of {model}"
    )]
    WindowOverflow {
        prompt_tokens: usize,
        max_new_tokens: usize,
        window: usize,
        model: String,
    },
    #[error("authentication failed (HTTP {status}); not retried")]
    AuthFailed { status: u16 },
    #[error("provider error (HTTP {status}): {body}")]
    Provider { status: u16, body: String },
    #[error("transport failed after {attempts} attempts: {detail}")]
    TransportExhausted { attempts: u32, detail: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    OpenaiCompatible,
    Stub,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenProviderConfig {
    pub kind: GenKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub max_new_tokens: usize,
    /// Context window override for models the registry does not know.
    pub window: Option<usize>,
    /// Name of the environment variable holding the API key. The key itself
    /// is read at request time and never stored.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for GenProviderConfig {
    fn default() -> Self {
        Self {
            kind: GenKind::Stub,
            endpoint: None,
            model_name: String::new(),
            temperature: DEFAULT_TEMPERATURE,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            window: None,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 60,
            retries: 3,
            backoff_ms: 200,
        }
    }
}

// Keys never pass through this struct, but keep the debug form terse and
// obviously secret-free for log scrubbing checks.
impl std::fmt::Debug for GenProviderConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenProviderConfig")
            .field("kind", &self.kind)
            .field("endpoint", &self.endpoint)
            .field("model_name", &self.model_name)
            .field("temperature", &self.temperature)
            .field("max_new_tokens", &self.max_new_tokens)
            .field("window", &self.window)
            .field("api_key_env", &self.api_key_env)
            .finish_non_exhaustive()
    }
}

impl GenProviderConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GenError::BadTemperature(self.temperature));
        }
        if self.kind == GenKind::OpenaiCompatible && self.endpoint.is_none() {
            return Err(GenError::MissingEndpoint);
        }
        Ok(())
    }

    /// Window for this model: explicit override first, then the registry.
    pub fn resolved_window(&self) -> Option<usize> {
        self.window
            .or_else(|| lookup_model(&self.model_name).map(|m| m.window))
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Option<TokenUsage>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingClass {
    Paid,
    Free,
}

/// A model the tool knows out of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelProfile {
    pub name: &'static str,
    pub window: usize,
    pub pricing: PricingClass,
}

/// The selectable model menu: three hosted paid models and six open-source
/// ones reachable through any server speaking the chat-completions protocol.
pub fn model_registry() -> &'static [ModelProfile] {
    use PricingClass::{Free, Paid};
    &[
        ModelProfile {
            name: "gpt-3.5-turbo",
            window: 4096,
            pricing: Paid,
        },
        ModelProfile {
            name: "gpt-4",
            window: 8192,
            pricing: Paid,
        },
        ModelProfile {
            name: "gpt-4-32k",
            window: 32768,
            pricing: Paid,
        },
        ModelProfile {
            name: "TheBloke/Llama-2-7B-Chat-GPTQ",
            window: 4096,
            pricing: Free,
        },
        ModelProfile {
            name: "TheBloke/CodeLlama-7B-Instruct-GPTQ",
            window: 16384,
            pricing: Free,
        },
        ModelProfile {
            name: "meta-llama/Llama-2-7b-chat-hf",
            window: 4096,
            pricing: Free,
        },
        ModelProfile {
            name: "meta-llama/CodeLlama-7b-Instruct-hf",
            window: 16384,
            pricing: Free,
        },
        ModelProfile {
            name: "google/gemma-2b-it",
            window: 8192,
            pricing: Free,
        },
        ModelProfile {
            name: "google/codegemma-2b-it",
            window: 8192,
            pricing: Free,
        },
    ]
}

pub fn lookup_model(name: &str) -> Option<&'static ModelProfile> {
    model_registry().iter().find(|m| m.name == name)
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: usize,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: usize,
    #[serde(default)]
    completion_tokens: usize,
}

fn stub_generate(bundle: &PromptBundle) -> GenerationResult {
    let text = format!(
        "## {}\nSTUB content for \"{}\" drawn from {} context chunk(s).",
        bundle.question.heading,
        bundle.question.question,
        bundle.context_chunk_ids.len()
    );
    GenerationResult {
        usage: Some(TokenUsage {
            prompt_tokens: prompt_tokens(bundle),
            completion_tokens: crate::chunk::count_tokens(&text),
        }),
        text,
        finish_reason: FinishReason::Stop,
        latency_ms: 0,
    }
}

fn openai_generate(
    bundle: &PromptBundle,
    cfg: &GenProviderConfig,
) -> Result<GenerationResult, GenError> {
    let endpoint = cfg.endpoint.as_deref().ok_or(GenError::MissingEndpoint)?;
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
        .build();
    let request = ChatRequest {
        model: &cfg.model_name,
        messages: vec![ChatMessage {
            role: "user",
            content: &bundle.rendered_prompt,
        }],
        temperature: cfg.temperature,
        max_tokens: cfg.max_new_tokens,
    };
    let body = serde_json::to_value(&request).expect("request serializes");
    let api_key = cfg.api_key();

    let started = Instant::now();
    let mut attempt = 0u32;
    let response = loop {
        let mut req = agent.post(endpoint).set("content-type", "application/json");
        if let Some(key) = &api_key {
            req = req.set("authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body.clone()) {
            Ok(resp) => break resp,
            Err(ureq::Error::Status(status, resp)) => {
                if status == 401 || status == 403 {
                    return Err(GenError::AuthFailed { status });
                }
                if status >= 500 && attempt < cfg.retries {
                    log::warn!("generation provider returned {status}, retrying");
                    drop(resp);
                } else {
                    let text = resp.into_string().unwrap_or_default();
                    return Err(GenError::Provider { status, body: text });
                }
            }
            Err(ureq::Error::Transport(t)) => {
                if attempt >= cfg.retries {
                    return Err(GenError::TransportExhausted {
                        attempts: attempt + 1,
                        detail: t.to_string(),
                    });
                }
                log::warn!("generation transport error, retrying: {t}");
            }
        }
        attempt += 1;
        std::thread::sleep(Duration::from_millis(cfg.backoff_ms << attempt.min(6)));
    };

    let parsed: ChatResponse = response
        .into_json()
        .map_err(|e| GenError::BadResponse(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GenError::BadResponse("no choices in response".into()))?;
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    Ok(GenerationResult {
        text: choice.message.content,
        finish_reason,
        usage: parsed.usage.map(|u| TokenUsage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        }),
        latency_ms: started.elapsed().as_millis() as u64,
    })
}

/// Send one prompt to the configured backend.
///
/// When the model's window is known, the call fails before any network
/// traffic if the prompt plus `max_new_tokens` would not fit. Transient
/// transport errors and 5xx responses are retried with exponential backoff;
/// auth failures are not.
pub fn generate(
    bundle: &PromptBundle,
    cfg: &GenProviderConfig,
) -> Result<GenerationResult, GenError> {
    cfg.validate()?;
    if let Some(window) = cfg.resolved_window() {
        let prompt = prompt_tokens(bundle);
        if prompt + cfg.max_new_tokens > window {
            return Err(GenError::WindowOverflow {
                prompt_tokens: prompt,
                max_new_tokens: cfg.max_new_tokens,
                window,
                model: cfg.model_name.clone(),
            });
        }
    }
    match cfg.kind {
        GenKind::Stub => Ok(stub_generate(bundle)),
        GenKind::OpenaiCompatible => openai_generate(bundle, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{render, ProjectMeta, PromptTemplate, SectionQuestion};

    fn bundle_for(heading: &str, context: &str) -> PromptBundle {
        let q = SectionQuestion {
            heading: heading.to_string(),
            question: heading.to_string(),
            order: 0,
        };
        render(
            &PromptTemplate::default(),
            &ProjectMeta::new("proj", "example/proj"),
            &q,
            context,
        )
        .unwrap()
    }

    #[test]
    fn stub_echoes_heading() {
        let cfg = GenProviderConfig {
            model_name: "any".into(),
            ..GenProviderConfig::default()
        };
        let result = generate(&bundle_for("Installation", "ctx"), &cfg).unwrap();
        assert!(result.text.starts_with("## Installation"));
        assert_eq!(result.finish_reason, FinishReason::Stop);
        assert!(!result.text.is_empty());
    }

    #[test]
    fn stub_is_deterministic() {
        let cfg = GenProviderConfig {
            model_name: "any".into(),
            ..GenProviderConfig::default()
        };
        let b = bundle_for("Usage", "ctx");
        let one = generate(&b, &cfg).unwrap();
        let two = generate(&b, &cfg).unwrap();
        assert_eq!(one.text, two.text);
    }

    #[test]
    fn quantized_model_window_overflows() {
        let big_context = "word ".repeat(5000);
        let bundle = bundle_for("Usage", &big_context);
        let cfg = GenProviderConfig {
            model_name: "TheBloke/Llama-2-7B-Chat-GPTQ".into(),
            ..GenProviderConfig::default()
        };
        match generate(&bundle, &cfg) {
            Err(GenError::WindowOverflow {
                prompt_tokens,
                max_new_tokens,
                window,
                ..
            }) => {
                assert_eq!(window, 4096);
                assert_eq!(max_new_tokens, DEFAULT_MAX_NEW_TOKENS);
                assert!(prompt_tokens + max_new_tokens > window);
            }
            other => panic!("expected window overflow, got {other:?}"),
        }
    }

    #[test]
    fn registry_has_the_nine_models() {
        let registry = model_registry();
        assert_eq!(registry.len(), 9);
        let names: Vec<&str> = registry.iter().map(|m| m.name).collect();
        assert_eq!(
            names,
            vec![
                "gpt-3.5-turbo",
                "gpt-4",
                "gpt-4-32k",
                "TheBloke/Llama-2-7B-Chat-GPTQ",
                "TheBloke/CodeLlama-7B-Instruct-GPTQ",
                "meta-llama/Llama-2-7b-chat-hf",
                "meta-llama/CodeLlama-7b-Instruct-hf",
                "google/gemma-2b-it",
                "google/codegemma-2b-it",
            ]
        );
    }

    #[test]
    fn registry_pricing_classes() {
        assert_eq!(
            lookup_model("meta-llama/Llama-2-7b-chat-hf")
                .unwrap()
                .pricing,
            PricingClass::Free
        );
        for paid in ["gpt-3.5-turbo", "gpt-4", "gpt-4-32k"] {
            assert_eq!(lookup_model(paid).unwrap().pricing, PricingClass::Paid);
        }
        assert!(lookup_model("unknown/model").is_none());
    }

    #[test]
    fn temperature_bounds_enforced() {
        let cfg = GenProviderConfig {
            temperature: 2.5,
            ..GenProviderConfig::default()
        };
        assert!(matches!(
            generate(&bundle_for("X", ""), &cfg),
            Err(GenError::BadTemperature(_))
        ));
    }

    #[test]
    fn debug_output_never_contains_key_material() {
        std::env::set_var("REPODOC_TEST_SECRET_XYZ", "sk-super-secret-value");
        let cfg = GenProviderConfig {
            kind: GenKind::OpenaiCompatible,
            endpoint: Some("http://localhost:1/v1/chat/completions".into()),
            model_name: "gpt-4".into(),
            api_key_env: "REPODOC_TEST_SECRET_XYZ".into(),
            ..GenProviderConfig::default()
        };
        let debug = format!("{cfg:?}");
        assert!(!debug.contains("sk-super-secret-value"));
        assert!(debug.contains("REPODOC_TEST_SECRET_XYZ"));
        std::env::remove_var("REPODOC_TEST_SECRET_XYZ");
    }
}
