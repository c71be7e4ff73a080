use futures::stream::{self, StreamExt};
use serde::Serialize;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::{ModelSpec, RunConfig};
use super::transcript::{ArchiveWriter, RawTranscript, RunArchive, TransportStatus};
use crate::error::{Error, Result};
use crate::protocol::{build_prompt, find_stimulus, StimulusSpec, Strategy};

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<Message<'a>>,
    temperature: f64,
    max_tokens: u32,
}

/// Serialized chat-completions body for one trial. The system message is
/// left out when the strategy has none.
pub fn request_body(model: &str, system: &str, user: &str, temperature: f64, max_tokens: u32) -> Result<String> {
    let mut messages = Vec::with_capacity(2);
    if !system.is_empty() {
        messages.push(Message {
            role: "system",
            content: system,
        });
    }
    messages.push(Message {
        role: "user",
        content: user,
    });
    Ok(serde_json::to_string(&ChatRequest {
        model,
        messages,
        temperature,
        max_tokens,
    })?)
}

/// Pulls `choices[0].message.content` out of a chat-completions body.
pub fn completion_text(body: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(body).ok()?;
    value
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

enum Attempt {
    Done(String),
    Status(u16),
    Timeout,
    Unreachable(String),
}

impl Attempt {
    fn retryable(&self) -> bool {
        match self {
            Self::Status(code) => *code == 429 || (500..600).contains(code),
            Self::Timeout => true,
            Self::Done(_) | Self::Unreachable(_) => false,
        }
    }
}

/// Client for one experiment grid against an OpenAI-compatible endpoint.
pub struct Gateway {
    config: RunConfig,
    api_key: String,
    client: reqwest::Client,
}

impl Gateway {
    pub fn new(config: RunConfig, api_key: impl Into<String>) -> Result<Self> {
        config.validate()?;
        let client = reqwest::Client::builder().timeout(config.timeout()).build()?;
        Ok(Self {
            config,
            api_key: api_key.into(),
            client,
        })
    }

    /// Reads the key from the environment variable named in the config.
    pub fn from_env(config: RunConfig) -> Result<Self> {
        let key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| Error::MissingApiKey(config.api_key_env.clone()))?;
        Self::new(config, key)
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    async fn attempt(&self, body: &str) -> Attempt {
        let sent = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .send()
            .await;
        let response = match sent {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Timeout,
            Err(e) => return Attempt::Unreachable(e.to_string()),
        };
        let status = response.status();
        if !status.is_success() {
            return Attempt::Status(status.as_u16());
        }
        match response.text().await {
            Ok(text) => Attempt::Done(completion_text(&text).unwrap_or_else(|| {
                tracing::warn!("response body has no choices[0].message.content");
                String::new()
            })),
            Err(e) if e.is_timeout() => Attempt::Timeout,
            Err(e) => Attempt::Unreachable(e.to_string()),
        }
    }

    /// Sends `body`, retrying 429, 5xx and timeouts with doubling delays.
    async fn exchange(&self, body: &str) -> (String, TransportStatus, u32) {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = self.attempt(body).await;
            if outcome.retryable() && attempts <= self.config.retry_limit {
                tokio::time::sleep(self.config.backoff(attempts - 1)).await;
                continue;
            }
            let status = match outcome {
                Attempt::Done(text) => return (text, TransportStatus::Ok, attempts),
                _ if outcome.retryable() && self.config.retry_limit > 0 => {
                    TransportStatus::ExhaustedRetries
                }
                Attempt::Status(code) => TransportStatus::HttpError { code },
                Attempt::Timeout => TransportStatus::Timeout,
                Attempt::Unreachable(message) => TransportStatus::Unreachable { message },
            };
            return (String::new(), status, attempts);
        }
    }

    /// Runs every repetition of one cell in order. Transport failures end up
    /// in the transcripts rather than as errors.
    pub async fn execute_cell(
        &self,
        model: &ModelSpec,
        stimulus: &StimulusSpec,
        strategy: Strategy,
    ) -> Result<Vec<RawTranscript>> {
        let prompt = build_prompt(strategy, &stimulus.statement)?;
        let body = request_body(
            &model.slug,
            &prompt.system,
            &prompt.user,
            self.config.temperature,
            self.config.max_tokens_for(model),
        )?;
        let mut out = Vec::with_capacity(self.config.repetitions as usize);
        for rep in 1..=self.config.repetitions {
            let started_ms = now_ms();
            let (response, status, attempts) = self.exchange(&body).await;
            if !status.is_ok() {
                tracing::warn!(model = %model.slug, stimulus = %stimulus.id, %strategy, rep, ?status, "transport failure");
            }
            out.push(RawTranscript {
                model: model.slug.clone(),
                stimulus: stimulus.id.clone(),
                strategy,
                rep,
                request: body.clone(),
                response,
                status,
                attempts,
                started_ms,
                finished_ms: now_ms(),
            });
        }
        Ok(out)
    }

    /// Runs the whole grid with at most `parallelism` cells in flight,
    /// appending each finished cell to the archive at `path` in grid order.
    pub async fn run_experiment(&self, path: &Path) -> Result<RunArchive> {
        let mut cells = Vec::new();
        for model in &self.config.models {
            for id in &self.config.stimuli {
                let stimulus = find_stimulus(id)
                    .ok_or_else(|| Error::Config(format!("unknown stimulus id `{id}`")))?;
                for &strategy in &self.config.strategies {
                    cells.push((model, stimulus.clone(), strategy));
                }
            }
        }
        let mut writer = ArchiveWriter::create(path, &self.config)?;
        let mut transcripts = Vec::with_capacity(self.config.grid_size());
        let mut results = stream::iter(cells)
            .map(|(model, stimulus, strategy)| async move {
                self.execute_cell(model, &stimulus, strategy).await
            })
            .buffered(self.config.parallelism);
        while let Some(cell) = results.next().await {
            for t in cell? {
                writer.append(&t)?;
                transcripts.push(t);
            }
        }
        Ok(RunArchive {
            config: self.config.clone(),
            transcripts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_omits_empty_system_message() {
        let b = request_body("m", "", "hello", 0.7, 500).unwrap();
        assert_eq!(
            b,
            r#"{"model":"m","messages":[{"role":"user","content":"hello"}],"temperature":0.7,"max_tokens":500}"#
        );
        let b = request_body("m", "sys", "u", 0.0, 1).unwrap();
        assert!(b.contains(r#"{"role":"system","content":"sys"}"#));
    }

    #[test]
    fn completion_text_reads_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}},{"message":{"content":"no"}}]}"#;
        assert_eq!(completion_text(body).as_deref(), Some("hi"));
        assert_eq!(completion_text(r#"{"choices":[]}"#), None);
        assert_eq!(completion_text("not json"), None);
    }

    #[test]
    fn missing_key_is_a_startup_error() {
        let mut c = RunConfig::new(
            "http://localhost",
            vec![ModelSpec::new("m", "", "")],
            vec!["paradox".into()],
            vec![Strategy::Neutrosophic],
        );
        c.api_key_env = "NEUTROTENSOR_TEST_KEY_THAT_IS_NOT_SET".into();
        assert!(matches!(Gateway::from_env(c), Err(Error::MissingApiKey(_))));
    }
}
