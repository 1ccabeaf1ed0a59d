//! Chat-completion endpoint adapter.
//!
//! One HTTP request per turn. Failures never abort an episode: once the retry
//! budget is spent the adapter returns [`AgentReply::TransportFailure`], which
//! the environment records and scores as an invalid round.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::{Condvar, Mutex, OnceLock};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompts::{render_messages, PromptTemplate};
use super::Agent;
use crate::environment::{AgentReply, Observation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteEndpointConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    /// Extra attempts after the first one.
    pub retries: u32,
    /// First backoff delay; doubles per attempt.
    pub backoff_ms: u64,
    pub prompt_template: PromptTemplate,
    /// JSONL sidecar receiving every request/response pair.
    pub log_path: Option<PathBuf>,
}

impl Default for RemoteEndpointConfig {
    fn default() -> Self {
        RemoteEndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            token_env: None,
            temperature: 0.0,
            max_tokens: 1024,
            timeout_secs: 60.0,
            retries: 2,
            backoff_ms: 500,
            prompt_template: PromptTemplate::Hub,
            log_path: None,
        }
    }
}

impl RemoteEndpointConfig {
    pub fn validate(&self) -> Result<(), RemoteError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(RemoteError::Config("timeout must be > 0".into()));
        }
        if self.base_url.is_empty() || self.model.is_empty() {
            return Err(RemoteError::Config("base_url and model are required".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("token variable {0} is not set")]
    MissingToken(String),
    #[error("cannot open request log {path}: {source}")]
    Log { path: PathBuf, source: std::io::Error },
}

/// Process-wide cap on concurrent in-flight requests.
pub struct RequestLimiter {
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a RequestLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.0.state.lock().unwrap_or_else(|e| e.into_inner());
        s.0 -= 1;
        self.0.freed.notify_one();
    }
}

pub const DEFAULT_REQUEST_CAP: usize = 8;

impl RequestLimiter {
    pub fn new(cap: usize) -> Self {
        RequestLimiter {
            state: Mutex::new((0, cap.max(1))),
            freed: Condvar::new(),
        }
    }

    pub fn global() -> &'static RequestLimiter {
        static GLOBAL: OnceLock<RequestLimiter> = OnceLock::new();
        GLOBAL.get_or_init(|| RequestLimiter::new(DEFAULT_REQUEST_CAP))
    }

    pub fn set_cap(&self, cap: usize) {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).1 = cap.max(1);
        self.freed.notify_all();
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).0
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while s.0 >= s.1 {
            s = self.freed.wait(s).unwrap_or_else(|e| e.into_inner());
        }
        s.0 += 1;
        Permit(self)
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

pub struct RemoteAgent {
    cfg: RemoteEndpointConfig,
    http: ureq::Agent,
    token: Option<String>,
    log: Option<BufWriter<File>>,
    limiter: &'static RequestLimiter,
}

impl RemoteAgent {
    pub fn new(cfg: RemoteEndpointConfig) -> Result<Self, RemoteError> {
        cfg.validate()?;
        let token = match &cfg.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| RemoteError::MissingToken(var.clone()))?),
            None => None,
        };
        let log = match &cfg.log_path {
            Some(path) => Some(BufWriter::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|source| RemoteError::Log {
                        path: path.clone(),
                        source,
                    })?,
            )),
            None => None,
        };
        let http: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteAgent {
            cfg,
            http,
            token,
            log,
            limiter: RequestLimiter::global(),
        })
    }

    pub fn config(&self) -> &RemoteEndpointConfig {
        &self.cfg
    }

    fn redact(&self, text: &str) -> String {
        match &self.token {
            Some(t) if !t.is_empty() => text.replace(t.as_str(), "[REDACTED]"),
            _ => text.to_string(),
        }
    }

    fn log(&mut self, entry: Value) {
        let line = self.redact(&entry.to_string());
        if let Some(w) = self.log.as_mut() {
            // Logging is best effort; a full disk must not end the episode.
            let _ = writeln!(w, "{line}").and_then(|_| w.flush());
        }
    }

    fn attempt(&self, body: &Value) -> (Attempt, Option<u16>, Option<String>) {
        let _permit = self.limiter.acquire();
        let mut req = self.http.post(&self.cfg.endpoint()).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return (Attempt::Retry(format!("transport: {e}")), None, None),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return (Attempt::Retry(format!("reading body: {e}")), Some(status), None),
        };
        let outcome = match status {
            200..=299 => match extract_content(&text) {
                Some(content) => Attempt::Done(content),
                None => Attempt::Fatal("response has no choices[0].message.content".into()),
            },
            401 | 403 => Attempt::Fatal(format!("auth rejected (HTTP {status})")),
            408 | 429 | 500..=599 => Attempt::Retry(format!("HTTP {status}")),
            _ => Attempt::Fatal(format!("HTTP {status}")),
        };
        (outcome, Some(status), Some(text))
    }
}

fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    let content = &v["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Some(s.clone()),
        // Some servers return content parts.
        Value::Array(parts) => Some(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("")),
        _ => None,
    }
}

impl Agent for RemoteAgent {
    fn name(&self) -> String {
        format!("remote:{}", self.cfg.model)
    }

    fn act(&mut self, obs: &Observation) -> AgentReply {
        let messages = render_messages(self.cfg.prompt_template, obs);
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_tokens,
        });
        let url = self.cfg.endpoint();
        let attempts = self.cfg.retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let factor = 1u64 << (attempt - 1).min(16);
                thread::sleep(Duration::from_millis(self.cfg.backoff_ms.saturating_mul(factor)));
            }
            let started = Instant::now();
            let (outcome, status, text) = self.attempt(&body);
            let (kind, detail) = match &outcome {
                Attempt::Done(_) => ("ok", None),
                Attempt::Retry(d) => ("retryable", Some(d.clone())),
                Attempt::Fatal(d) => ("fatal", Some(d.clone())),
            };
            self.log(json!({
                "round_id": obs.round_id,
                "turn": obs.turn_index,
                "attempt": attempt + 1,
                "url": url,
                "authorization": self.token.as_ref().map(|_| "Bearer [REDACTED]"),
                "request": body,
                "status": status,
                "outcome": kind,
                "error": detail,
                "response": text,
                "elapsed_ms": started.elapsed().as_millis() as u64,
            }));
            match outcome {
                Attempt::Done(content) => return AgentReply::text(content),
                Attempt::Retry(d) => last = d,
                Attempt::Fatal(d) => {
                    last = d;
                    break;
                }
            }
        }
        AgentReply::TransportFailure {
            detail: self.redact(&format!(
                "{last}; url={url} model={} round={} turn={} attempts_budget={attempts}",
                self.cfg.model, obs.round_id, obs.turn_index
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;

    /// Serve `n` connections, answering each with `respond(request_body)`.
    fn mock(n: usize, respond: impl Fn(&str) -> Option<(u16, String)> + Send + 'static) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            for stream in listener.incoming().take(n) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                match respond(&String::from_utf8_lossy(&body)) {
                    Some((status, text)) => {
                        let _ = write!(
                            stream,
                            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                            text.len()
                        );
                    }
                    None => thread::sleep(Duration::from_millis(400)),
                }
            }
        });
        format!("http://{addr}/v1")
    }

    fn completion(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    fn obs() -> Observation {
        use crate::calendar_gen::generate_regular_calendar;
        use crate::conflict_gen::{ConflictGenerator, ConflictParams};
        use crate::environment::{EnvConfig, Episode};
        use crate::org_schema::{builtin_schema, default_plan, instantiate_org};
        let schema = builtin_schema("research-lab").unwrap();
        let (org, profiles) = instantiate_org(&schema, &default_plan("research-lab").unwrap(), 1).unwrap();
        let cal = generate_regular_calendar(&profiles[1], &org, 2025, 1).unwrap();
        let params = ConflictParams {
            n_rounds: 4,
            ..ConflictParams::default()
        };
        let ds = ConflictGenerator::new(&org, &schema.adhoc_templates, params)
            .build_user_dataset(&profiles[1], &cal, 1)
            .unwrap();
        Episode::reset(&ds, &org, None, EnvConfig::default()).unwrap().1
    }

    fn cfg(url: String) -> RemoteEndpointConfig {
        RemoteEndpointConfig {
            base_url: url,
            model: "m".into(),
            timeout_secs: 0.2,
            retries: 1,
            backoff_ms: 1,
            ..RemoteEndpointConfig::default()
        }
    }

    #[test]
    fn passes_completion_through_and_sends_messages() {
        let url = mock(1, |body| {
            let v: Value = serde_json::from_str(body).unwrap();
            assert_eq!(v["messages"][0]["role"], "system");
            assert!(v["messages"][1]["content"].as_str().unwrap().contains("e1"));
            Some((200, completion("<hub>list</hub>")))
        });
        let mut agent = RemoteAgent::new(cfg(url)).unwrap();
        assert_eq!(agent.act(&obs()), AgentReply::text("<hub>list</hub>"));
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let calls = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let c = calls.clone();
        let url = mock(2, move |_| {
            if c.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                Some((503, "{}".into()))
            } else {
                Some((200, completion("ok")))
            }
        });
        let mut agent = RemoteAgent::new(cfg(url)).unwrap();
        assert_eq!(agent.act(&obs()), AgentReply::text("ok"));
        assert_eq!(calls.load(std::sync::atomic::Ordering::SeqCst), 2);
    }

    #[test]
    fn timeout_past_budget_is_a_failure_sentinel() {
        let url = mock(2, |_| None);
        let mut agent = RemoteAgent::new(cfg(url.clone())).unwrap();
        match agent.act(&obs()) {
            AgentReply::TransportFailure { detail } => {
                assert!(detail.contains(&url) && detail.contains("round="), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn token_is_redacted_from_logs() {
        let dir = std::env::temp_dir().join(format!("calconf-remote-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let log = dir.join("log.jsonl");
        let _ = std::fs::remove_file(&log);
        std::env::set_var("CALCONF_TEST_TOKEN", "sekrit-123");
        let url = mock(1, |_| Some((401, "{\"error\":\"bad token sekrit-123\"}".into())));
        let mut agent = RemoteAgent::new(RemoteEndpointConfig {
            token_env: Some("CALCONF_TEST_TOKEN".into()),
            log_path: Some(log.clone()),
            ..cfg(url)
        })
        .unwrap();
        let reply = agent.act(&obs());
        assert!(matches!(&reply, AgentReply::TransportFailure { detail } if detail.contains("auth")));
        drop(agent);
        let text = std::fs::read_to_string(&log).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(!text.contains("sekrit-123"));
        assert!(text.contains("[REDACTED]"));
    }

    #[test]
    fn missing_token_and_bad_timeout_are_config_errors() {
        let bad = RemoteEndpointConfig {
            token_env: Some("CALCONF_SURELY_UNSET_VAR".into()),
            ..RemoteEndpointConfig::default()
        };
        assert!(matches!(RemoteAgent::new(bad), Err(RemoteError::MissingToken(_))));
        let bad = RemoteEndpointConfig {
            timeout_secs: 0.0,
            ..RemoteEndpointConfig::default()
        };
        assert!(matches!(RemoteAgent::new(bad), Err(RemoteError::Config(_))));
    }

    #[test]
    fn limiter_caps_concurrency() {
        let lim: &'static RequestLimiter = Box::leak(Box::new(RequestLimiter::new(2)));
        let peak = std::sync::Arc::new(std::sync::atomic::AtomicUsize::new(0));
        let handles: Vec<_> = (0..6)
            .map(|_| {
                let peak = peak.clone();
                thread::spawn(move || {
                    let _p = lim.acquire();
                    peak.fetch_max(lim.in_flight(), std::sync::atomic::Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(20));
                })
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        assert_eq!(peak.load(std::sync::atomic::Ordering::SeqCst), 2);
        assert_eq!(lim.in_flight(), 0);
    }
}
