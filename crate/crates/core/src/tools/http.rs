//! HTTP adapter for real external APIs, plus a tiny stub server used by
//! tests and offline demos.
//!
//! Credentials never live in blueprint files: an adapter reads its key
//! from an environment variable (by convention `ACP_TOOL_<NAME>_KEY`) and
//! sends it as a header on live requests only.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::{CallCtx, ToolAdapter, ToolError, ToolSchema};
use crate::protocol::AgentRequest;

/// Conventional env var name for a tool's credential.
pub fn default_key_env(tool: &str) -> String {
    let name: String = tool
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("ACP_TOOL_{name}_KEY")
}

/// Where an adapter's auth header value comes from.
#[derive(Debug, Clone)]
pub struct AuthConfig {
    /// Header name to send, for example `Authorization` or `X-Api-Key`.
    pub header: String,
    /// Environment variable holding the value.
    pub env_var: String,
}

/// Maps prepared requests onto HTTP calls against a base URL.
///
/// GET requests carry body parameters as query pairs; other verbs send
/// them as a JSON object. Non-2xx statuses and transport failures surface
/// as adapter errors, which the executor classifies as 604.
pub struct HttpTool {
    schema: ToolSchema,
    base_url: String,
    auth: Option<AuthConfig>,
    agent: ureq::Agent,
}

impl HttpTool {
    pub fn new(schema: ToolSchema, base_url: impl Into<String>) -> Self {
        HttpTool {
            schema,
            base_url: base_url.into(),
            auth: None,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(30))
                .build(),
        }
    }

    pub fn with_auth(mut self, auth: AuthConfig) -> Self {
        self.auth = Some(auth);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = ureq::AgentBuilder::new().timeout(timeout).build();
        self
    }

    fn url_for(&self, endpoint: &str) -> String {
        if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            endpoint.to_string()
        } else {
            format!(
                "{}/{}",
                self.base_url.trim_end_matches('/'),
                endpoint.trim_start_matches('/')
            )
        }
    }
}

impl ToolAdapter for HttpTool {
    fn schema(&self) -> &ToolSchema {
        &self.schema
    }

    fn call(&self, request: &AgentRequest, _ctx: &CallCtx) -> Result<String, ToolError> {
        let url = self.url_for(&request.endpoint);
        let method = request.method.to_ascii_uppercase();
        let mut http_request = self.agent.request(&method, &url);
        for (name, value) in &request.headers {
            http_request = http_request.set(name, value);
        }
        if let Some(auth) = &self.auth {
            let value = std::env::var(&auth.env_var).map_err(|_| {
                ToolError::new(format!(
                    "credential env var `{}` is not set for tool `{}`",
                    auth.env_var, self.schema.name
                ))
            })?;
            http_request = http_request.set(&auth.header, &value);
        }

        let result = if method == "GET" {
            for param in &request.body {
                http_request = http_request.query(&param.name, &param.value);
            }
            http_request.call()
        } else {
            let body: serde_json::Map<String, serde_json::Value> = request
                .body
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        serde_json::Value::String(p.value.clone()),
                    )
                })
                .collect();
            http_request.send_string(
                &serde_json::to_string(&serde_json::Value::Object(body))
                    .expect("body serialization cannot fail"),
            )
        };

        match result {
            Ok(response) => response
                .into_string()
                .map_err(|e| ToolError::new(format!("failed to read response body: {e}"))),
            Err(ureq::Error::Status(code, response)) => {
                let body = response.into_string().unwrap_or_default();
                Err(ToolError::new(format!(
                    "HTTP {code} from {url}: {}",
                    body.chars().take(200).collect::<String>()
                )))
            }
            Err(ureq::Error::Transport(transport)) => Err(ToolError::new(format!(
                "transport error calling {url}: {transport}"
            ))),
        }
    }
}

/// How a stub route answers.
#[derive(Debug, Clone)]
pub enum StubBody {
    Fixed(String),
    /// Echo the request body (or the query string for GET).
    Echo,
}

/// One stub route: exact path, status, body, optional delay.
#[derive(Debug, Clone)]
pub struct StubRoute {
    pub path: String,
    pub status: u16,
    pub body: StubBody,
    pub delay: Duration,
}

impl StubRoute {
    pub fn fixed(path: &str, status: u16, body: &str) -> Self {
        StubRoute {
            path: path.to_string(),
            status,
            body: StubBody::Fixed(body.to_string()),
            delay: Duration::ZERO,
        }
    }

    pub fn echo(path: &str) -> Self {
        StubRoute {
            path: path.to_string(),
            status: 200,
            body: StubBody::Echo,
            delay: Duration::ZERO,
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

/// Minimal single-threaded HTTP/1.1 stub bound to a loopback port.
pub struct StubServer {
    addr: String,
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    pub fn spawn(routes: Vec<StubRoute>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = format!("http://{}", listener.local_addr()?);
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let routes = routes.clone();
                // One thread per connection keeps delayed routes from
                // blocking concurrent callers.
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &routes);
                });
            }
        });
        Ok(StubServer {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    /// Base URL of the server, e.g. `http://127.0.0.1:PORT`.
    pub fn url(&self) -> &str {
        &self.addr
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        if let Some(addr) = self.addr.strip_prefix("http://") {
            let _ = TcpStream::connect(addr);
        }
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(stream: TcpStream, routes: &[StubRoute]) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let _method = parts.next().unwrap_or("");
    let target = parts.next().unwrap_or("/");
    let (path, query) = target.split_once('?').unwrap_or((target, ""));

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(value) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = value.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut body)?;
    }
    let body = String::from_utf8_lossy(&body).to_string();

    let mut stream = stream;
    let Some(route) = routes.iter().find(|r| r.path == path) else {
        let payload = "no such route";
        write!(
            stream,
            "HTTP/1.1 404 Not Found\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            payload.len(),
            payload
        )?;
        return Ok(());
    };
    if !route.delay.is_zero() {
        std::thread::sleep(route.delay);
    }
    let payload = match &route.body {
        StubBody::Fixed(text) => text.clone(),
        StubBody::Echo => {
            if body.is_empty() {
                query.to_string()
            } else {
                body
            }
        }
    };
    let reason = match route.status {
        200 => "OK",
        500 => "Internal Server Error",
        _ => "Status",
    };
    write!(
        stream,
        "HTTP/1.1 {} {}\r\nContent-Length: {}\r\nContent-Type: text/plain\r\nConnection: close\r\n\r\n{}",
        route.status,
        reason,
        payload.len(),
        payload
    )?;
    Ok(())
}
