//! Generic chat-completion backend speaking the common JSON-mode protocol.

use std::time::Duration;

use serde_json::{json, Value};

use super::{required_fields, LanguageModel, LmError, PromptRequest};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
}

impl HttpConfig {
    /// Reads `LM_BASE_URL`, `LM_MODEL` and `LM_API_KEY`.
    pub fn from_env() -> Result<Self, LmError> {
        let base_url = std::env::var("LM_BASE_URL").map_err(|_| LmError::Request("LM_BASE_URL is not set".into()))?;
        let model = std::env::var("LM_MODEL").map_err(|_| LmError::Request("LM_MODEL is not set".into()))?;
        Ok(Self {
            base_url,
            path: "/v1/chat/completions".into(),
            model,
            api_key: std::env::var("LM_API_KEY").ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(60),
            retries: 2,
        })
    }
}

pub struct HttpBackend {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(cfg: HttpConfig) -> Result<Self, LmError> {
        let client = reqwest::blocking::Client::builder().timeout(cfg.timeout).build().map_err(|e| LmError::Backend(e.to_string()))?;
        Ok(Self { cfg, client })
    }

    fn url(&self) -> String {
        format!("{}{}", self.cfg.base_url.trim_end_matches('/'), self.cfg.path)
    }

    fn body(&self, req: &PromptRequest) -> Value {
        let system = format!(
            "You simulate one character in a daily-life sandbox. Task: {}. \
             The request context fields are {:?}. Answer with a single JSON object only.",
            req.kind,
            required_fields(req.kind)
        );
        json!({
            "model": self.cfg.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": json!({"kind": req.kind, "context": req.context}).to_string()},
            ],
            "response_format": {"type": "json_object"},
            "temperature": 0.7,
        })
    }

    fn once(&self, body: &Value) -> Result<String, (bool, LmError)> {
        let mut rb = self.client.post(self.url()).json(body);
        if let Some(k) = &self.cfg.api_key {
            rb = rb.bearer_auth(k);
        }
        let resp = rb.send().map_err(|e| (true, LmError::Backend(e.to_string())))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err((true, LmError::Backend(format!("HTTP {status}"))));
        }
        if !status.is_success() {
            return Err((false, LmError::Backend(format!("HTTP {status}"))));
        }
        let v: Value = resp.json().map_err(|e| (false, LmError::Decode(e.to_string())))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or((false, LmError::Decode("response has no message content".into())))
    }
}

impl LanguageModel for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.cfg.model
    }

    fn complete_raw(&self, req: &PromptRequest) -> Result<String, LmError> {
        let body = self.body(req);
        let mut last = LmError::Backend("no attempt made".into());
        for _ in 0..=self.cfg.retries {
            match self.once(&body) {
                Ok(text) => return Ok(text),
                Err((true, e)) => last = e,
                Err((false, e)) => return Err(e),
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmclient::{Context, LmClient, PromptKind};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::Arc;

    // Serves the given status/body pairs in order, one per connection.
    fn serve(replies: Vec<(u16, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in replies {
                let (mut s, _) = listener.accept().unwrap();
                let mut r = BufReader::new(s.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    r.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                r.read_exact(&mut buf).unwrap();
                let msg = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                s.write_all(msg.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}")
    }

    fn cfg(base: String) -> HttpConfig {
        HttpConfig {
            base_url: base,
            path: "/v1/chat/completions".into(),
            model: "test-model".into(),
            api_key: Some("k".into()),
            timeout: Duration::from_secs(5),
            retries: 1,
        }
    }

    fn wrap(content: &str) -> String {
        json!({"choices": [{"message": {"content": content}}]}).to_string()
    }

    fn req() -> PromptRequest {
        PromptRequest::new(
            PromptKind::DialogTopic,
            "a",
            Context::new().with("name", "A").with("partner", "B").with("history", Vec::<String>::new()),
        )
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let base = serve(vec![(503, "{}".into()), (200, wrap(r#"{"topic":"books"}"#))]);
        let c = LmClient::new(Arc::new(HttpBackend::new(cfg(base)).unwrap()));
        assert_eq!(c.complete(&req()).unwrap().str("topic"), "books");
    }

    #[test]
    fn repairs_schema_invalid_content_once() {
        let base = serve(vec![(200, wrap("{}")), (200, wrap(r#"{"topic":"music"}"#))]);
        let c = LmClient::new(Arc::new(HttpBackend::new(cfg(base)).unwrap()));
        assert_eq!(c.complete(&req()).unwrap().str("topic"), "music");
        assert_eq!(c.drain()[0].attempts, 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let base = serve(vec![(401, "{}".into())]);
        let c = LmClient::new(Arc::new(HttpBackend::new(cfg(base)).unwrap()));
        assert!(matches!(c.complete(&req()), Err(LmError::Backend(_))));
    }
}
