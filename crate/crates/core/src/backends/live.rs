use std::path::{Path, PathBuf};
use std::time::Instant;

use base64::Engine;
use serde_json::{json, Value};

use super::*;

fn agent(config: &BackendConfig) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(config.timeout()))
        .http_status_as_error(false)
        .build()
        .into()
}

fn post_json(
    agent: &ureq::Agent,
    config: &BackendConfig,
    url: &str,
    body: &Value,
) -> std::result::Result<Value, AttemptError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = config.api_key() {
        req = req.header("Authorization", format!("Bearer {key}"));
    }
    let mut resp = req
        .send_json(body)
        .map_err(|e| AttemptError::transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| AttemptError::transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        let snippet: String = text.chars().take(200).collect();
        return Err(AttemptError::status(status, snippet));
    }
    serde_json::from_str(&text).map_err(|e| AttemptError::permanent(format!("response is not JSON: {e}")))
}

/// Chat-completions client for any OpenAI-compatible server.
#[derive(Debug, Clone)]
pub struct LiveTextClient {
    config: BackendConfig,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl LiveTextClient {
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        Ok(LiveTextClient {
            retry: config.retry_policy(),
            agent: agent(&config),
            config,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn body(&self, request: &TextRequest) -> Value {
        json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": self.config.temperature,
            "seed": request.seed,
        })
    }
}

impl TextClient for LiveTextClient {
    fn complete(&self, request: &TextRequest) -> std::result::Result<TextResponse, BackendError> {
        let url = format!("{}/chat/completions", self.config.endpoint_url);
        let body = self.body(request);
        let started = Instant::now();
        let value = self.retry.run(|_| post_json(&self.agent, &self.config, &url, &body))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::new(None, 1, "response has no choices[0].message.content"))?;
        Ok(TextResponse {
            text: text.to_string(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

/// Image-generation client; the image is written into `out_dir`.
#[derive(Debug, Clone)]
pub struct LiveImageClient {
    config: BackendConfig,
    retry: RetryPolicy,
    agent: ureq::Agent,
    out_dir: PathBuf,
}

impl LiveImageClient {
    pub fn new(config: BackendConfig, out_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(LiveImageClient {
            retry: config.retry_policy(),
            agent: agent(&config),
            config,
            out_dir: out_dir.into(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn fetch(&self, url: &str) -> std::result::Result<Vec<u8>, AttemptError> {
        let mut resp = self
            .agent
            .get(url)
            .call()
            .map_err(|e| AttemptError::transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(AttemptError::status(status, format!("download failed: {url}")));
        }
        resp.body_mut()
            .read_to_vec()
            .map_err(|e| AttemptError::transport(e.to_string()))
    }
}

impl ImageClient for LiveImageClient {
    fn generate(&self, request: &ImageRequest) -> Result<ImageResult> {
        if request.prompt.trim().is_empty() {
            return Err(Error::EmptyPrompt);
        }
        let url = format!("{}/images/generations", self.config.endpoint_url);
        let body = json!({
            "model": self.config.model_name,
            "prompt": request.prompt,
            "n": 1,
            "size": format!("{}x{}", request.width_px, request.height_px),
            "response_format": "b64_json",
        });
        let started = Instant::now();
        let value = self.retry.run(|_| post_json(&self.agent, &self.config, &url, &body))?;
        let bytes = if let Some(b64) = value.pointer("/data/0/b64_json").and_then(Value::as_str) {
            base64::engine::general_purpose::STANDARD
                .decode(b64)
                .map_err(|e| BackendError::new(None, 1, format!("bad base64 image: {e}")))?
        } else if let Some(u) = value.pointer("/data/0/url").and_then(Value::as_str) {
            self.retry.run(|_| self.fetch(u))?
        } else {
            return Err(BackendError::new(None, 1, "response has no data[0].b64_json or url").into());
        };
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join("image.png");
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(ImageResult {
            image_ref: path.to_string_lossy().into_owned(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LiveImageBackend {
    config: BackendConfig,
}

impl LiveImageBackend {
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        Ok(LiveImageBackend { config })
    }
}

impl ImageBackend for LiveImageBackend {
    fn client_for(&self, _: &SceneGraph, _: &CompositionTemplate, out_dir: &Path) -> Box<dyn ImageClient> {
        Box::new(LiveImageClient::new(self.config.clone(), out_dir).expect("config validated at construction"))
    }
}
