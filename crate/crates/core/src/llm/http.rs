//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatClient, ChatRequest, ChatResponse, LlmError};

#[derive(Debug, Clone)]
pub struct HttpClient {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    attempts: u32,
    backoff: Duration,
    max_backoff: Duration,
}

impl HttpClient {
    pub fn new(endpoint: &str, api_key: Option<String>) -> Self {
        HttpClient {
            endpoint: endpoint.to_string(),
            api_key,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(120)).build(),
            attempts: 3,
            backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(4),
        }
    }

    /// Client using the key from the environment; fails without one.
    pub fn from_env(endpoint: &str) -> Result<Self, LlmError> {
        let key = super::api_key_from_env().ok_or(LlmError::MissingCredential)?;
        Ok(Self::new(endpoint, Some(key)))
    }

    pub fn with_backoff(mut self, initial: Duration, max: Duration) -> Self {
        self.backoff = initial;
        self.max_backoff = max;
        self
    }

    fn attempt(&self, body: &Value) -> Result<ChatResponse, (bool, LlmError)> {
        let mut req = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(body.clone()) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let retry = code == 429 || code >= 500;
                let text = r.into_string().unwrap_or_default();
                return Err((retry, LlmError::ServiceUnavailable(format!("HTTP {code}: {}", text.trim()))));
            }
            Err(e) => return Err((true, LlmError::ServiceUnavailable(e.to_string()))),
        };
        let v: Value = resp.into_json().map_err(|e| (false, LlmError::BadResponse(e.to_string())))?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| (false, LlmError::BadResponse("no choices[0].message.content".into())))?
            .to_string();
        let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64);
        Ok(ChatResponse {
            prompt_tokens: usage("prompt_tokens").unwrap_or(body.to_string().len() as u64 / 4),
            completion_tokens: usage("completion_tokens").unwrap_or(text.len() as u64 / 4),
            text,
        })
    }
}

impl ChatClient for HttpClient {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = json!({
            "model": req.model,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.prompt},
            ],
        });
        let mut delay = self.backoff;
        let mut last = LlmError::ServiceUnavailable("no attempt made".into());
        for i in 0..self.attempts {
            match self.attempt(&body) {
                Ok(r) => return Ok(r),
                Err((retry, e)) => {
                    last = e;
                    if !retry {
                        break;
                    }
                }
            }
            if i + 1 < self.attempts {
                std::thread::sleep(delay);
                delay = (delay * 2).min(self.max_backoff);
            }
        }
        Err(last)
    }
}
