//! HTTP operator backend.
//!
//! Posts `{"operator": "reflect"|"codegen"|"plan", "payload": ...}` as JSON
//! to a sidecar endpoint and validates the response against the per-operator
//! schema. Plain `http://` only; the endpoint is expected to sit next to the
//! runner. A bearer token is read from `SKILLNET_HTTP_TOKEN` when set.
//!
//! The client is a minimal HTTP/1.1 POST over `std::net::TcpStream` with
//! connect/read/write timeouts (default 60 s per call).

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::executor::SynthesisRequest;

use super::{
    OperatorBackend, OperatorError, PlanRequest, PlanResponse, ReflectRequest, ReflectResponse,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Environment variable holding the optional bearer token.
pub const TOKEN_ENV: &str = "SKILLNET_HTTP_TOKEN";

#[derive(Debug, Clone)]
pub struct HttpOperator {
    url: Url,
    timeout: Duration,
    token: Option<String>,
}

#[derive(Debug, Clone)]
struct Url {
    host: String,
    port: u16,
    path: String,
}

impl HttpOperator {
    /// `url` must be of the form `http://host[:port][/path]`.
    pub fn new(url: &str) -> Result<Self, OperatorError> {
        let rest = url
            .strip_prefix("http://")
            .ok_or_else(|| OperatorError::Transport(format!("only http:// urls are supported, got `{url}`")))?;
        let (authority, path) = match rest.find('/') {
            Some(i) => (&rest[..i], rest[i..].to_string()),
            None => (rest, "/".to_string()),
        };
        let (host, port) = match authority.rsplit_once(':') {
            Some((h, p)) => (
                h.to_string(),
                p.parse::<u16>()
                    .map_err(|_| OperatorError::Transport(format!("bad port in `{url}`")))?,
            ),
            None => (authority.to_string(), 80),
        };
        if host.is_empty() {
            return Err(OperatorError::Transport(format!("missing host in `{url}`")));
        }
        Ok(HttpOperator {
            url: Url { host, port, path },
            timeout: DEFAULT_TIMEOUT,
            token: std::env::var(TOKEN_ENV).ok(),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn call<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        operator: &str,
        payload: &Req,
    ) -> Result<Resp, OperatorError> {
        let envelope = serde_json::json!({
            "operator": operator,
            "payload": payload,
        });
        let body = serde_json::to_vec(&envelope)
            .map_err(|e| OperatorError::Transport(e.to_string()))?;
        let raw = self.post(&body)?;
        serde_json::from_slice(&raw).map_err(|e| OperatorError::Schema(e.to_string()))
    }

    fn post(&self, body: &[u8]) -> Result<Vec<u8>, OperatorError> {
        let addr = format!("{}:{}", self.url.host, self.url.port);
        let sock_addr = std::net::ToSocketAddrs::to_socket_addrs(&addr)
            .map_err(|e| OperatorError::Transport(format!("resolve {addr}: {e}")))?
            .next()
            .ok_or_else(|| OperatorError::Transport(format!("no address for {addr}")))?;
        let stream = TcpStream::connect_timeout(&sock_addr, self.timeout)
            .map_err(|e| transport_or_timeout(e, self.timeout))?;
        stream
            .set_read_timeout(Some(self.timeout))
            .and_then(|_| stream.set_write_timeout(Some(self.timeout)))
            .map_err(|e| OperatorError::Transport(e.to_string()))?;
        let mut stream = stream;

        let auth = match &self.token {
            Some(token) => format!("Authorization: Bearer {token}\r\n"),
            None => String::new(),
        };
        let head = format!(
            "POST {} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n{}Connection: close\r\n\r\n",
            self.url.path,
            self.url.host,
            body.len(),
            auth,
        );
        stream
            .write_all(head.as_bytes())
            .and_then(|_| stream.write_all(body))
            .map_err(|e| transport_or_timeout(e, self.timeout))?;

        let mut raw = Vec::new();
        stream
            .read_to_end(&mut raw)
            .map_err(|e| transport_or_timeout(e, self.timeout))?;
        parse_response(&raw)
    }
}

fn transport_or_timeout(e: std::io::Error, timeout: Duration) -> OperatorError {
    match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
            OperatorError::Timeout(timeout)
        }
        _ => OperatorError::Transport(e.to_string()),
    }
}

fn parse_response(raw: &[u8]) -> Result<Vec<u8>, OperatorError> {
    let split = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or_else(|| OperatorError::Transport("malformed http response".into()))?;
    let head = std::str::from_utf8(&raw[..split])
        .map_err(|_| OperatorError::Transport("non-utf8 response head".into()))?;
    let status_line = head.lines().next().unwrap_or_default();
    let status: u16 = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| OperatorError::Transport(format!("bad status line `{status_line}`")))?;
    let mut body = raw[split + 4..].to_vec();

    // chunked transfer encoding: concatenate the chunks
    let chunked = head
        .lines()
        .any(|l| l.to_ascii_lowercase().starts_with("transfer-encoding:") && l.contains("chunked"));
    if chunked {
        body = dechunk(&body)?;
    }
    if status != 200 {
        return Err(OperatorError::Transport(format!(
            "endpoint returned {status}: {}",
            String::from_utf8_lossy(&body)
        )));
    }
    Ok(body)
}

fn dechunk(body: &[u8]) -> Result<Vec<u8>, OperatorError> {
    let mut out = Vec::new();
    let mut rest = body;
    loop {
        let line_end = rest
            .windows(2)
            .position(|w| w == b"\r\n")
            .ok_or_else(|| OperatorError::Transport("bad chunk framing".into()))?;
        let size = usize::from_str_radix(
            std::str::from_utf8(&rest[..line_end]).unwrap_or("").trim(),
            16,
        )
        .map_err(|_| OperatorError::Transport("bad chunk size".into()))?;
        rest = &rest[line_end + 2..];
        if size == 0 {
            return Ok(out);
        }
        if rest.len() < size + 2 {
            return Err(OperatorError::Transport("truncated chunk".into()));
        }
        out.extend_from_slice(&rest[..size]);
        rest = &rest[size + 2..];
    }
}

impl OperatorBackend for HttpOperator {
    fn reflect(&mut self, request: &ReflectRequest) -> Result<ReflectResponse, OperatorError> {
        let response: ReflectResponse = self.call("reflect", request)?;
        response.validate()?;
        Ok(response)
    }

    fn codegen(&mut self, request: &SynthesisRequest) -> Result<String, OperatorError> {
        #[derive(Deserialize)]
        struct CodegenResponse {
            source: String,
        }
        let response: CodegenResponse = self.call("codegen", request)?;
        // the source must at least parse; insertion revalidates fully
        crate::dsl::parse_skill(&response.source)
            .map_err(|e| OperatorError::Schema(format!("emitted source does not parse: {e}")))?;
        Ok(response.source)
    }

    fn forward(&mut self, request: &PlanRequest) -> Result<PlanResponse, OperatorError> {
        let response: PlanResponse = self.call("plan", request)?;
        for source in &response.new_skills {
            crate::dsl::parse_skill(source).map_err(|e| {
                OperatorError::Schema(format!("proposed skill does not parse: {e}"))
            })?;
        }
        Ok(response)
    }
}
