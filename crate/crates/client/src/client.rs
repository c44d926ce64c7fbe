//! The rewrite run: send each not-yet-completed crawl record to the
//! endpoint as a single-turn chat request, persist every raw response to
//! the checkpoint before acknowledging it, retry transient failures with
//! exponential backoff, and assemble the cleaned corpus from validated
//! outputs.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mathsift_core::corpus::{Corpus, Record, Source};
use mathsift_core::sftgen::{extract_output, render_prompt, OutputStatus, PromptMode, RewriteOutput, TEMPLATE_VERSION};

use crate::checkpoint::{self, CheckpointEntry, CheckpointWriter};
use crate::ClientError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub max_concurrency: usize,
    pub requests_per_minute: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: f64,
    /// Name of the environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    /// Base backoff delay; doubles per retry.
    pub backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8080".into(),
            model_name: "rewriter".into(),
            max_concurrency: 4,
            requests_per_minute: 600,
            timeout_secs: 30,
            max_retries: 3,
            temperature: 0.0,
            auth_env: None,
            backoff_ms: 250,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.max_concurrency < 1 {
            return Err(ClientError::Config("max_concurrency must be >= 1".into()));
        }
        if self.timeout_secs == 0 {
            return Err(ClientError::Config("timeout_secs must be > 0".into()));
        }
        if self.requests_per_minute == 0 {
            return Err(ClientError::Config("requests_per_minute must be >= 1".into()));
        }
        if self.temperature < 0.0 {
            return Err(ClientError::Config("temperature must be >= 0".into()));
        }
        Ok(())
    }

    fn chat_url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn probe_url(&self) -> String {
        format!("{}/v1/models", self.base_url.trim_end_matches('/'))
    }
}

/// Hash of everything that determines request content: endpoint identity and
/// sampling settings, the prompt template version, and the input corpus.
/// Delivery knobs (concurrency, rate, timeout, retries) stay out so a resume
/// may adjust throughput; the auth token stays out because it is a secret.
pub fn run_fingerprint(endpoint: &EndpointConfig, crawl: &Corpus) -> String {
    let mut hasher = Sha256::new();
    hasher.update(endpoint.base_url.as_bytes());
    hasher.update([0x1f]);
    hasher.update(endpoint.model_name.as_bytes());
    hasher.update([0x1f]);
    hasher.update(format!("{:.6}", endpoint.temperature).as_bytes());
    hasher.update([0x1f]);
    hasher.update(TEMPLATE_VERSION.as_bytes());
    hasher.update([0x1f]);
    hasher.update(crawl.digest().as_bytes());
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RewriteRunReport {
    pub total: usize,
    pub already_completed: usize,
    pub attempted: usize,
    pub succeeded: usize,
    /// Records that exhausted retries or hit a permanent error this run;
    /// they are excluded from the outputs and can be retried on resume.
    pub failed: Vec<String>,
    pub status_counts: BTreeMap<String, usize>,
}

/// Token bucket with capacity one: grants are spaced 60/rpm seconds apart,
/// so the request rate never bursts past the configured limit.
struct TokenBucket {
    rate_per_sec: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(requests_per_minute: u32) -> Self {
        TokenBucket { rate_per_sec: f64::from(requests_per_minute) / 60.0, tokens: 1.0, last: Instant::now() }
    }
}

fn acquire_token(bucket: &Mutex<TokenBucket>) {
    loop {
        let wait = {
            let mut b = bucket.lock().unwrap();
            let now = Instant::now();
            let dt = now.duration_since(b.last).as_secs_f64();
            b.tokens = (b.tokens + dt * b.rate_per_sec).min(1.0);
            b.last = now;
            if b.tokens >= 1.0 {
                b.tokens -= 1.0;
                return;
            }
            (1.0 - b.tokens) / b.rate_per_sec
        };
        std::thread::sleep(Duration::from_secs_f64(wait.max(0.001)));
    }
}

enum SendError {
    /// 429/5xx/transport; worth retrying.
    Transient(String),
    /// Anything else; retrying will not help.
    Permanent(String),
}

fn send_once(
    agent: &ureq::Agent,
    endpoint: &EndpointConfig,
    auth: Option<&str>,
    prompt: &str,
) -> Result<String, SendError> {
    let body = serde_json::json!({
        "model": endpoint.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": endpoint.temperature,
    });
    let mut req = agent.post(&endpoint.chat_url());
    if let Some(token) = auth {
        req = req.set("Authorization", &format!("Bearer {token}"));
    }
    match req.send_json(body) {
        Ok(resp) => {
            let v: serde_json::Value = resp
                .into_json()
                .map_err(|e| SendError::Permanent(format!("unreadable response body: {e}")))?;
            v["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| SendError::Permanent("response lacks choices[0].message.content".into()))
        }
        Err(ureq::Error::Status(code, _)) if code == 429 || (500..=599).contains(&code) => {
            Err(SendError::Transient(format!("HTTP {code}")))
        }
        Err(ureq::Error::Status(code, _)) => Err(SendError::Permanent(format!("HTTP {code}"))),
        Err(ureq::Error::Transport(t)) => Err(SendError::Transient(format!("transport: {t}"))),
    }
}

fn send_with_retries(
    agent: &ureq::Agent,
    endpoint: &EndpointConfig,
    auth: Option<&str>,
    bucket: &Mutex<TokenBucket>,
    prompt: &str,
) -> Result<String, String> {
    let mut attempt = 0u32;
    loop {
        acquire_token(bucket);
        match send_once(agent, endpoint, auth, prompt) {
            Ok(raw) => return Ok(raw),
            Err(SendError::Permanent(reason)) => return Err(reason),
            Err(SendError::Transient(reason)) => {
                if attempt >= endpoint.max_retries {
                    return Err(format!("retries exhausted: {reason}"));
                }
                let delay = endpoint.backoff_ms.saturating_mul(1 << attempt.min(10)).min(10_000);
                std::thread::sleep(Duration::from_millis(delay));
                attempt += 1;
            }
        }
    }
}

/// Verifies the endpoint answers HTTP at all. Any status code counts; only
/// transport failure is fatal.
fn health_probe(agent: &ureq::Agent, endpoint: &EndpointConfig) -> Result<(), ClientError> {
    match agent.get(&endpoint.probe_url()).call() {
        Ok(_) | Err(ureq::Error::Status(_, _)) => Ok(()),
        Err(ureq::Error::Transport(t)) => Err(ClientError::Unreachable {
            url: endpoint.base_url.clone(),
            reason: t.to_string(),
        }),
    }
}

/// Runs the rewriter over every record of the crawl corpus that is not yet
/// in the checkpoint. Returns all completed outputs (including prior runs')
/// ordered by crawl id, plus the run report. `max_records` caps how many
/// new records this invocation attempts, for quota-bounded batches.
pub fn rewrite_corpus(
    crawl: &Corpus,
    endpoint: &EndpointConfig,
    checkpoint_path: &Path,
    max_records: Option<usize>,
) -> Result<(Vec<RewriteOutput>, RewriteRunReport), ClientError> {
    endpoint.validate()?;

    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(endpoint.timeout_secs))
        .build();
    health_probe(&agent, endpoint)?;

    let fingerprint = run_fingerprint(endpoint, crawl);
    let mut completed: HashMap<String, String> = HashMap::new();
    let writer = match checkpoint::load(checkpoint_path)? {
        Some(cp) => {
            if cp.fingerprint != fingerprint {
                return Err(ClientError::FingerprintMismatch {
                    expected: fingerprint,
                    found: cp.fingerprint,
                });
            }
            for e in cp.entries {
                completed.insert(e.crawl_id, e.raw);
            }
            CheckpointWriter::open_append(checkpoint_path)?
        }
        None => CheckpointWriter::create(checkpoint_path, &fingerprint)?,
    };

    let auth = endpoint.auth_env.as_ref().and_then(|var| std::env::var(var).ok());
    let already_completed = completed.len();

    let mut pending: Vec<&Record> =
        crawl.iter().filter(|r| !completed.contains_key(&r.id)).collect();
    if let Some(cap) = max_records {
        pending.truncate(cap);
    }

    let bucket = Mutex::new(TokenBucket::new(endpoint.requests_per_minute));
    let writer = Mutex::new(writer);
    let results: Mutex<Vec<(String, String)>> = Mutex::new(Vec::new());
    let failed: Mutex<Vec<(usize, String, String)>> = Mutex::new(Vec::new());
    let fatal: Mutex<Option<ClientError>> = Mutex::new(None);
    let next = AtomicUsize::new(0);

    let workers = endpoint.max_concurrency.min(pending.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if fatal.lock().unwrap().is_some() {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= pending.len() {
                    break;
                }
                let record = pending[i];
                let prompt = render_prompt(record, PromptMode::Sft);
                match send_with_retries(&agent, endpoint, auth.as_deref(), &bucket, &prompt) {
                    Ok(raw) => {
                        // Persist before acknowledging; the write lock is the
                        // single mutation point of the run.
                        let mut w = writer.lock().unwrap();
                        if let Err(e) = w.append(&CheckpointEntry {
                            crawl_id: record.id.clone(),
                            raw: raw.clone(),
                        }) {
                            *fatal.lock().unwrap() = Some(e);
                            break;
                        }
                        drop(w);
                        results.lock().unwrap().push((record.id.clone(), raw));
                    }
                    Err(reason) => {
                        failed.lock().unwrap().push((i, record.id.clone(), reason));
                    }
                }
            });
        }
    });

    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }

    let new_results = results.into_inner().unwrap();
    let attempted = pending.len();
    let succeeded = new_results.len();
    for (id, raw) in new_results {
        completed.insert(id, raw);
    }

    let mut failed = failed.into_inner().unwrap();
    failed.sort_by_key(|(i, _, _)| *i);
    let failed: Vec<String> = failed.into_iter().map(|(_, id, _)| id).collect();

    let mut outputs: Vec<RewriteOutput> = completed
        .into_iter()
        .map(|(id, raw)| extract_output(id, &raw))
        .collect();
    outputs.sort_by(|a, b| a.crawl_id.cmp(&b.crawl_id));

    let mut status_counts: BTreeMap<String, usize> = BTreeMap::new();
    for o in &outputs {
        *status_counts.entry(status_key(o.status).to_string()).or_insert(0) += 1;
    }

    let report = RewriteRunReport {
        total: crawl.len(),
        already_completed,
        attempted,
        succeeded,
        failed,
        status_counts,
    };
    Ok((outputs, report))
}

pub fn status_key(status: OutputStatus) -> &'static str {
    match status {
        OutputStatus::Ok => "ok",
        OutputStatus::SyntaxError => "syntax_error",
        OutputStatus::NotChineseMath => "not_chinese_math",
        OutputStatus::Malformed => "malformed",
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AssembleReport {
    pub status_counts: BTreeMap<String, usize>,
    pub cleaned: usize,
}

/// Builds the cleaned corpus from validated outputs: one record per
/// status-ok output, everything else discarded and counted.
pub fn assemble_cleaned(outputs: &[RewriteOutput]) -> Result<(Corpus, AssembleReport), ClientError> {
    let mut records = Vec::new();
    let mut report = AssembleReport::default();
    for out in outputs {
        *report.status_counts.entry(status_key(out.status).to_string()).or_insert(0) += 1;
        if out.status == OutputStatus::Ok {
            let (question, answer) = out.parsed.clone().expect("ok status implies parsed");
            records.push(Record::new(
                format!("cleaned:{}", out.crawl_id),
                question,
                answer,
                Source::Cleaned,
            ));
        }
    }
    report.cleaned = records.len();
    let corpus = Corpus::from_records(records, Source::Cleaned, "assembled")?;
    Ok((corpus, report))
}
