//! Minimal HTTP/1.1 over `std::net`: message types, parsing and rendering,
//! a one-request-per-connection client and a small threaded server.
//!
//! The client never retries, never follows redirects and always sends
//! `Connection: close`, so what is recorded is exactly what was sent.

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Largest accepted message head.
const MAX_HEAD: usize = 64 * 1024;
/// Largest accepted message body.
const MAX_BODY: usize = 32 * 1024 * 1024;
const MAX_HEADERS: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HttpError {
    #[error("incomplete message")]
    Incomplete,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("message too large")]
    TooLarge,
}

/// A request as sent on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpRequest {
    pub method: String,
    /// Origin-form target: path and query.
    pub target: String,
    pub headers: Vec<(String, String)>,
    #[serde(with = "body_serde")]
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    #[serde(with = "body_serde")]
    pub body: Vec<u8>,
    /// Total time from request written to response complete. A service
    /// handler may set it to simulate processing time.
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
    /// Time to first byte.
    #[serde(with = "duration_ms")]
    pub ttfb: Duration,
}

fn find_header<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.as_str())
}

impl HttpRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }

    /// Path component of the target.
    pub fn path(&self) -> &str {
        self.target.split('?').next().unwrap_or("")
    }

    /// Decoded query pairs.
    pub fn query_pairs(&self) -> Vec<(String, String)> {
        match self.target.split_once('?') {
            Some((_, q)) => form_urlencoded::parse(q.as_bytes()).into_owned().collect(),
            None => Vec::new(),
        }
    }
}

impl HttpResponse {
    pub fn new(status: u16) -> Self {
        HttpResponse {
            status,
            headers: Vec::new(),
            body: Vec::new(),
            elapsed: Duration::ZERO,
            ttfb: Duration::ZERO,
        }
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn with_body(mut self, content_type: &str, body: impl Into<Vec<u8>>) -> Self {
        self.headers.push(("Content-Type".into(), content_type.into()));
        self.body = body.into();
        self
    }

    pub fn json(status: u16, value: &serde_json::Value) -> Self {
        HttpResponse::new(status).with_body("application/json", serde_json::to_vec(value).unwrap_or_default())
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }
}

pub(crate) mod body_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Text(String),
        Hex { hex: String },
    }

    pub fn serialize<S: Serializer>(body: &[u8], s: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(body) {
            Ok(t) => Repr::Text(t.to_string()).serialize(s),
            Err(_) => Repr::Hex { hex: hex::encode(body) }.serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Text(t) => Ok(t.into_bytes()),
            Repr::Hex { hex } => hex::decode(hex).map_err(serde::de::Error::custom),
        }
    }
}

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

fn collect_headers(raw: &[httparse::Header<'_>]) -> Result<Vec<(String, String)>, HttpError> {
    raw.iter()
        .map(|h| {
            let v = std::str::from_utf8(h.value)
                .map_err(|_| HttpError::Malformed(format!("header `{}` is not UTF-8", h.name)))?;
            Ok((h.name.to_string(), v.trim().to_string()))
        })
        .collect()
}

fn content_length(headers: &[(String, String)]) -> Result<Option<usize>, HttpError> {
    match find_header(headers, "content-length") {
        None => Ok(None),
        Some(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| HttpError::Malformed(format!("bad Content-Length `{v}`")))?;
            if n > MAX_BODY {
                return Err(HttpError::TooLarge);
            }
            Ok(Some(n))
        }
    }
}

fn is_chunked(headers: &[(String, String)]) -> bool {
    find_header(headers, "transfer-encoding").is_some_and(|v| v.to_ascii_lowercase().contains("chunked"))
}

/// Decodes a chunked body. Returns the body and the bytes consumed.
pub fn decode_chunked(buf: &[u8]) -> Result<(Vec<u8>, usize), HttpError> {
    let mut out = Vec::new();
    let mut pos = 0;
    loop {
        let line_end = find_crlf(&buf[pos..]).ok_or(HttpError::Incomplete)?;
        let line = std::str::from_utf8(&buf[pos..pos + line_end])
            .map_err(|_| HttpError::Malformed("chunk size is not text".into()))?;
        let size_text = line.split(';').next().unwrap_or("").trim();
        let size = usize::from_str_radix(size_text, 16)
            .map_err(|_| HttpError::Malformed(format!("bad chunk size `{size_text}`")))?;
        pos += line_end + 2;
        if size == 0 {
            // Trailers end with an empty line.
            loop {
                let end = find_crlf(&buf[pos..]).ok_or(HttpError::Incomplete)?;
                pos += end + 2;
                if end == 0 {
                    return Ok((out, pos));
                }
            }
        }
        if out.len() + size > MAX_BODY {
            return Err(HttpError::TooLarge);
        }
        if buf.len() < pos + size + 2 {
            return Err(HttpError::Incomplete);
        }
        out.extend_from_slice(&buf[pos..pos + size]);
        pos += size;
        if &buf[pos..pos + 2] != b"\r\n" {
            return Err(HttpError::Malformed("chunk not terminated by CRLF".into()));
        }
        pos += 2;
    }
}

fn find_crlf(b: &[u8]) -> Option<usize> {
    b.windows(2).position(|w| w == b"\r\n")
}

/// Parses one request from the start of `buf`. Returns the request and the
/// number of bytes it occupied.
pub fn parse_request(buf: &[u8]) -> Result<(HttpRequest, usize), HttpError> {
    let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
    let mut req = httparse::Request::new(&mut headers);
    let head_len = match req.parse(buf) {
        Ok(httparse::Status::Complete(n)) => n,
        Ok(httparse::Status::Partial) => {
            return Err(if buf.len() > MAX_HEAD {
                HttpError::TooLarge
            } else {
                HttpError::Incomplete
            })
        }
        Err(e) => return Err(HttpError::Malformed(e.to_string())),
    };
    let method = req.method.unwrap_or("GET").to_string();
    let target = req.path.unwrap_or("/").to_string();
    let headers = collect_headers(req.headers)?;
    let rest = &buf[head_len..];
    let (body, used) = if is_chunked(&headers) {
        decode_chunked(rest)?
    } else {
        let n = content_length(&headers)?.unwrap_or(0);
        if rest.len() < n {
            return Err(HttpError::Incomplete);
        }
        (rest[..n].to_vec(), n)
    };
    Ok((
        HttpRequest {
            method,
            target,
            headers,
            body,
        },
        head_len + used,
    ))
}

/// Parses a complete response. Without a length the body runs to the end
/// of the buffer, as for a closed connection.
pub fn parse_response(buf: &[u8]) -> Result<HttpResponse, HttpError> {
    let mut headers = [httparse::EMPTY_HEADER; MAX_HEADERS];
    let mut resp = httparse::Response::new(&mut headers);
    let head_len = match resp.parse(buf) {
        Ok(httparse::Status::Complete(n)) => n,
        Ok(httparse::Status::Partial) => return Err(HttpError::Incomplete),
        Err(e) => return Err(HttpError::Malformed(e.to_string())),
    };
    let status = resp.code.unwrap_or(0);
    let headers = collect_headers(resp.headers)?;
    let rest = &buf[head_len..];
    // A 204 carrying a Content-Length is read anyway: the connection is
    // closed after each exchange, and the body is what the checks look at.
    let no_body = status == 304 || (100..200).contains(&status);
    let body = if no_body {
        Vec::new()
    } else if is_chunked(&headers) {
        decode_chunked(rest)?.0
    } else if let Some(n) = content_length(&headers)? {
        if rest.len() < n {
            return Err(HttpError::Incomplete);
        }
        rest[..n].to_vec()
    } else {
        if rest.len() > MAX_BODY {
            return Err(HttpError::TooLarge);
        }
        rest.to_vec()
    };
    Ok(HttpResponse {
        status,
        headers,
        body,
        elapsed: Duration::ZERO,
        ttfb: Duration::ZERO,
    })
}

/// Whether `buf` already holds a complete response.
fn response_complete(buf: &[u8]) -> bool {
    match parse_response(buf) {
        Ok(r) => {
            let has_length = r.header("content-length").is_some() || is_chunked(&r.headers);
            has_length || r.status == 204 || r.status == 304
        }
        Err(_) => false,
    }
}

/// Headers the renderers write themselves: bodies always go out with a
/// `Content-Length`.
fn is_framing(name: &str) -> bool {
    ["content-length", "connection", "transfer-encoding"]
        .iter()
        .any(|h| name.eq_ignore_ascii_case(h))
}

pub fn render_request(req: &HttpRequest, host: &str) -> Vec<u8> {
    let mut out = format!("{} {} HTTP/1.1\r\nHost: {host}\r\n", req.method, req.target);
    for (k, v) in &req.headers {
        if k.eq_ignore_ascii_case("host") || is_framing(k) {
            continue;
        }
        out.push_str(&format!("{k}: {v}\r\n"));
    }
    out.push_str("Connection: close\r\n");
    if !req.body.is_empty() || matches!(req.method.as_str(), "POST" | "PUT" | "PATCH") {
        out.push_str(&format!("Content-Length: {}\r\n", req.body.len()));
    }
    out.push_str("\r\n");
    let mut bytes = out.into_bytes();
    bytes.extend_from_slice(&req.body);
    bytes
}

pub(crate) fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        201 => "Created",
        204 => "No Content",
        400 => "Bad Request",
        401 => "Unauthorized",
        403 => "Forbidden",
        404 => "Not Found",
        405 => "Method Not Allowed",
        415 => "Unsupported Media Type",
        422 => "Unprocessable Entity",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

pub fn render_response(resp: &HttpResponse) -> Vec<u8> {
    let mut out = format!("HTTP/1.1 {} {}\r\n", resp.status, reason_phrase(resp.status));
    for (k, v) in &resp.headers {
        if is_framing(k) {
            continue;
        }
        out.push_str(&format!("{k}: {v}\r\n"));
    }
    out.push_str(&format!("Content-Length: {}\r\nConnection: close\r\n\r\n", resp.body.len()));
    let mut bytes = out.into_bytes();
    bytes.extend_from_slice(&resp.body);
    bytes
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("cannot connect to {addr}: {message}")]
    Connect { addr: String, message: String },
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("bad response: {0}")]
    BadResponse(#[from] HttpError),
}

fn io_error(e: std::io::Error, timeout: Duration) -> ClientError {
    match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => ClientError::Timeout(timeout),
        _ => ClientError::Io(e.to_string()),
    }
}

/// Sends one request over a fresh connection to `host:port`.
pub fn send(host: &str, port: u16, req: &HttpRequest, timeout: Duration) -> Result<HttpResponse, ClientError> {
    let addr_text = format!("{host}:{port}");
    let addrs: Vec<SocketAddr> = addr_text
        .to_socket_addrs()
        .map_err(|e| ClientError::Connect {
            addr: addr_text.clone(),
            message: e.to_string(),
        })?
        .collect();
    let mut last = None;
    let mut stream = None;
    for a in &addrs {
        match TcpStream::connect_timeout(a, timeout) {
            Ok(s) => {
                stream = Some(s);
                break;
            }
            Err(e) => last = Some(e),
        }
    }
    let mut stream = stream.ok_or_else(|| ClientError::Connect {
        addr: addr_text.clone(),
        message: last.map(|e| e.to_string()).unwrap_or_else(|| "no address".into()),
    })?;
    stream.set_read_timeout(Some(timeout)).map_err(|e| io_error(e, timeout))?;
    stream.set_write_timeout(Some(timeout)).map_err(|e| io_error(e, timeout))?;
    let host_header = if port == 80 { host.to_string() } else { addr_text };
    stream
        .write_all(&render_request(req, &host_header))
        .map_err(|e| io_error(e, timeout))?;
    let sent = Instant::now();
    let mut buf = Vec::new();
    let mut chunk = [0u8; 16 * 1024];
    let mut ttfb = None;
    loop {
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => {
                ttfb.get_or_insert_with(|| sent.elapsed());
                buf.extend_from_slice(&chunk[..n]);
                if buf.len() > MAX_BODY + MAX_HEAD {
                    return Err(ClientError::BadResponse(HttpError::TooLarge));
                }
                if response_complete(&buf) {
                    break;
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(io_error(e, timeout)),
        }
        if sent.elapsed() > timeout {
            return Err(ClientError::Timeout(timeout));
        }
    }
    let mut resp = parse_response(&buf)?;
    resp.elapsed = sent.elapsed();
    resp.ttfb = ttfb.unwrap_or(resp.elapsed);
    Ok(resp)
}

/// Request handler for [`Server`].
pub type Handler = Arc<dyn Fn(&HttpRequest) -> HttpResponse + Send + Sync>;

/// A background HTTP server; stops when dropped.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves requests
    /// on background threads. A handler's `elapsed` is slept before replying.
    pub fn start(addr: &str, handler: Handler) -> std::io::Result<Server> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = stop.clone();
        let thread = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let h = handler.clone();
                std::thread::spawn(move || serve_connection(stream, h));
            }
        });
        Ok(Server {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server thread exits.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve_connection(mut stream: TcpStream, handler: Handler) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(10)));
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    let req = loop {
        match parse_request(&buf) {
            Ok((req, _)) => break Some(req),
            Err(HttpError::Incomplete) => {}
            Err(_) => break None,
        }
        match stream.read(&mut chunk) {
            Ok(0) | Err(_) => return,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
        }
    };
    let resp = match req {
        Some(r) => handler(&r),
        None => HttpResponse::new(400).with_body("text/plain", "malformed request"),
    };
    if !resp.elapsed.is_zero() {
        std::thread::sleep(resp.elapsed);
    }
    let _ = stream.write_all(&render_response(&resp));
    let _ = stream.flush();
    let _ = stream.shutdown(Shutdown::Write);
    // Drain so the peer sees an orderly close rather than a reset.
    let _ = stream.set_read_timeout(Some(Duration::from_millis(200)));
    let _ = stream.read(&mut chunk);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_round_trip() {
        let req = HttpRequest {
            method: "POST".into(),
            target: "/items?limit=5".into(),
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: b"{\"a\":1}".to_vec(),
        };
        let wire = render_request(&req, "localhost:80");
        let (parsed, used) = parse_request(&wire).unwrap();
        assert_eq!(used, wire.len());
        assert_eq!(parsed.method, "POST");
        assert_eq!(parsed.target, "/items?limit=5");
        assert_eq!(parsed.body, req.body);
        assert_eq!(parsed.header("content-type"), Some("application/json"));
        assert_eq!(parsed.query_pairs(), vec![("limit".to_string(), "5".to_string())]);
    }

    #[test]
    fn chunked_response() {
        let wire = b"HTTP/1.1 200 OK\r\nTransfer-Encoding: chunked\r\n\r\n4\r\nWiki\r\n5\r\npedia\r\n0\r\n\r\n";
        let r = parse_response(wire).unwrap();
        assert_eq!(r.body, b"Wikipedia");
        assert!(matches!(
            parse_response(b"HTTP/1.1 200 OK\r\nTransfer-Encoding: chunked\r\n\r\nzz\r\n"),
            Err(HttpError::Malformed(_))
        ));
    }

    #[test]
    fn truncated_body_is_incomplete() {
        assert_eq!(
            parse_response(b"HTTP/1.1 200 OK\r\nContent-Length: 10\r\n\r\nabc"),
            Err(HttpError::Incomplete)
        );
    }

    #[test]
    fn client_and_server() {
        let server = Server::start(
            "127.0.0.1:0",
            Arc::new(|r: &HttpRequest| HttpResponse::new(200).with_body("text/plain", r.target.clone())),
        )
        .unwrap();
        let req = HttpRequest {
            method: "GET".into(),
            target: "/echo?x=1".into(),
            headers: vec![],
            body: vec![],
        };
        let port = server.addr().port();
        let resp = send("127.0.0.1", port, &req, Duration::from_secs(5)).unwrap();
        assert_eq!(resp.status, 200);
        assert_eq!(resp.body, b"/echo?x=1");
    }

    #[test]
    fn connection_refused() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let req = HttpRequest {
            method: "GET".into(),
            target: "/".into(),
            headers: vec![],
            body: vec![],
        };
        assert!(matches!(
            send("127.0.0.1", port, &req, Duration::from_secs(1)),
            Err(ClientError::Connect { .. })
        ));
    }

    #[test]
    fn bodies_serialise_as_text_or_hex() {
        let r = HttpResponse::new(200).with_body("application/octet-stream", vec![0xff, 0x00]);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"hex\":\"ff00\""));
        let back: HttpResponse = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
