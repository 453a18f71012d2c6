//! Text-model providers: an OpenAI-compatible HTTP client and the mock.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use permassist_core::config::ProviderConfig;
use permassist_core::icl::{MockPolicy, MockProvider, ProviderError, TextModel};

/// Counting semaphore bounding concurrent provider calls.
struct InFlight {
    free: Mutex<usize>,
    ready: Condvar,
}

impl InFlight {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), ready: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().expect("semaphore poisoned");
            while *free == 0 {
                free = self.ready.wait(free).expect("semaphore poisoned");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("semaphore poisoned") += 1;
        self.ready.notify_one();
        out
    }
}

/// Chat-completions client. Transport failures are retried
/// `config.retries` times; unparseable answers are the caller's concern.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    url: String,
    config: ProviderConfig,
    limit: InFlight,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, String> {
        let endpoint = config.endpoint.clone().ok_or("no provider endpoint configured")?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| e.to_string())?;
        let url = format!("{}/chat/completions", endpoint.trim_end_matches('/'));
        Ok(Self { client, url, limit: InFlight::new(config.max_in_flight), config })
    }

    fn call_once(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout(self.config.timeout_secs)
            } else {
                ProviderError::Unavailable(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        if !status.is_success() {
            let excerpt: String = text.chars().take(200).collect();
            return Err(ProviderError::Unavailable(format!("HTTP {status}: {excerpt}")));
        }
        completion_text(&text).ok_or_else(|| ProviderError::Unavailable("response has no completion text".into()))
    }
}

/// `choices[0].message.content` of a chat-completions response.
pub fn completion_text(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.pointer("/choices/0/message/content")?.as_str().map(str::to_string)
}

impl TextModel for HttpProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        self.limit.run(|| {
            let mut last = None;
            for attempt in 0..=self.config.retries {
                match self.call_once(prompt) {
                    Ok(text) => return Ok(text),
                    Err(e) => {
                        log::warn!("provider attempt {} failed: {e}", attempt + 1);
                        last = Some(e);
                    }
                }
            }
            Err(last.expect("at least one attempt"))
        })
    }
}

/// The configured provider, or the mock when no endpoint is set.
pub fn build_provider(config: &ProviderConfig, mock: MockPolicy) -> Result<Arc<dyn TextModel>, String> {
    if config.is_mock() {
        log::info!("no provider endpoint configured; using the mock provider");
        Ok(Arc::new(MockProvider::new(mock)))
    } else {
        Ok(Arc::new(HttpProvider::new(config.clone())?))
    }
}
