//! In-process chat-completions stub: a deterministic endpoint for offline
//! pipeline runs and for the robustness tests (per-prompt request counting,
//! injected failures, canned responses).

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

/// What the stub answers with once a request gets through.
#[derive(Debug, Clone)]
pub enum StubBehavior {
    /// Echo the user prompt back.
    Echo,
    /// Marker-less garbage; every output will be discarded as malformed.
    Garbage,
    /// Canned response per prompt; unknown prompts get marker-less garbage.
    Oracle(HashMap<String, String>),
}

#[derive(Debug, Clone)]
pub struct StubConfig {
    pub behavior: StubBehavior,
    /// Respond with `fail_status` to the first N requests for each prompt.
    pub fail_first: u32,
    pub fail_status: u16,
    /// Artificial service time per request.
    pub delay: Duration,
}

impl Default for StubConfig {
    fn default() -> Self {
        StubConfig {
            behavior: StubBehavior::Echo,
            fail_first: 0,
            fail_status: 429,
            delay: Duration::ZERO,
        }
    }
}

pub struct StubServer {
    url: String,
    counters: Arc<Mutex<HashMap<String, u32>>>,
    server: Arc<tiny_http::Server>,
    stop: Arc<AtomicBool>,
    handles: Vec<JoinHandle<()>>,
}

impl StubServer {
    /// Binds to an ephemeral localhost port and starts serving.
    pub fn start(config: StubConfig) -> StubServer {
        Self::start_on("127.0.0.1:0", config)
    }

    /// Binds to a specific address.
    pub fn start_on(addr: &str, config: StubConfig) -> StubServer {
        let server = Arc::new(tiny_http::Server::http(addr).expect("bind stub server"));
        let port = match server.server_addr() {
            tiny_http::ListenAddr::IP(addr) => addr.port(),
            _ => unreachable!("stub binds a TCP port"),
        };
        let url = format!("http://127.0.0.1:{port}");
        let counters: Arc<Mutex<HashMap<String, u32>>> = Arc::new(Mutex::new(HashMap::new()));
        let stop = Arc::new(AtomicBool::new(false));

        let mut handles = Vec::new();
        for _ in 0..4 {
            let server = Arc::clone(&server);
            let counters = Arc::clone(&counters);
            let stop = Arc::clone(&stop);
            let config = config.clone();
            handles.push(std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(request)) => handle_request(request, &config, &counters),
                        Ok(None) => continue,
                        Err(_) => break,
                    }
                }
            }));
        }

        StubServer { url, counters, server, stop, handles }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Per-prompt request counts (every HTTP arrival, including failures).
    pub fn counts(&self) -> HashMap<String, u32> {
        self.counters.lock().unwrap().clone()
    }

    pub fn total_requests(&self) -> u32 {
        self.counters.lock().unwrap().values().sum()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

fn handle_request(
    mut request: tiny_http::Request,
    config: &StubConfig,
    counters: &Mutex<HashMap<String, u32>>,
) {
    let url = request.url().to_string();
    let method = request.method().as_str().to_string();

    if method == "GET" && url.ends_with("/v1/models") {
        respond_json(request, 200, r#"{"object":"list","data":[]}"#);
        return;
    }
    if !(method == "POST" && url.ends_with("/v1/chat/completions")) {
        respond_json(request, 404, r#"{"error":"unknown route"}"#);
        return;
    }

    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        respond_json(request, 400, r#"{"error":"unreadable body"}"#);
        return;
    }
    let parsed: serde_json::Value = match serde_json::from_str(&body) {
        Ok(v) => v,
        Err(_) => {
            respond_json(request, 400, r#"{"error":"bad json"}"#);
            return;
        }
    };
    let prompt = parsed["messages"][0]["content"].as_str().unwrap_or_default().to_string();

    let seen = {
        let mut c = counters.lock().unwrap();
        let n = c.entry(prompt.clone()).or_insert(0);
        *n += 1;
        *n
    };

    if seen <= config.fail_first {
        respond_json(request, config.fail_status, r#"{"error":"injected failure"}"#);
        return;
    }

    if !config.delay.is_zero() {
        std::thread::sleep(config.delay);
    }

    let content = match &config.behavior {
        StubBehavior::Echo => prompt,
        StubBehavior::Garbage => "乱码输出 没有任何输出标记 ***".to_string(),
        StubBehavior::Oracle(map) => map
            .get(&prompt)
            .cloned()
            .unwrap_or_else(|| "UNKNOWN PROMPT 没有标记".to_string()),
    };
    let body = serde_json::json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop",
        }],
    });
    respond_json(request, 200, &body.to_string());
}

fn respond_json(request: tiny_http::Request, status: u16, body: &str) {
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header");
    let response = tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}
