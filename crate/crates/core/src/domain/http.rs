//! Just enough HTTP/1.x over TCP (optionally TLS) for header checks and
//! landing-page downloads.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use rustls::pki_types::{CertificateDer, ServerName};
use rustls::{ClientConfig, ClientConnection, RootCertStore, StreamOwned};

/// Responses larger than this are truncated.
const MAX_RESPONSE: usize = 4 << 20;

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("connect to {0} failed: {1}")]
    ConnectFailed(SocketAddr, #[source] io::Error),
    #[error("TLS failure: {0}")]
    TlsFailed(String),
    #[error("timed out")]
    Timeout,
    #[error("malformed HTTP response: {0}")]
    BadResponse(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    /// All values of a header, case-insensitively, in order of appearance.
    pub fn header_values<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.headers.iter().filter(move |(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

#[derive(Clone)]
pub struct HttpClient {
    pub timeout: Duration,
    tls: Arc<ClientConfig>,
}

impl Default for HttpClient {
    fn default() -> Self {
        let mut roots = RootCertStore::empty();
        roots.extend(webpki_roots::TLS_SERVER_ROOTS.iter().cloned());
        HttpClient::with_roots(roots)
    }
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("timeout", &self.timeout).finish_non_exhaustive()
    }
}

impl HttpClient {
    pub fn with_roots(roots: RootCertStore) -> HttpClient {
        let provider = Arc::new(rustls::crypto::ring::default_provider());
        let tls = ClientConfig::builder_with_provider(provider)
            .with_safe_default_protocol_versions()
            .expect("ring supports the default versions")
            .with_root_certificates(roots)
            .with_no_client_auth();
        HttpClient { timeout: Duration::from_secs(10), tls: Arc::new(tls) }
    }

    /// Trusts exactly the given DER certificates.
    pub fn with_anchors(anchors: &[Vec<u8>]) -> Result<HttpClient, HttpError> {
        let mut roots = RootCertStore::empty();
        for a in anchors {
            roots.add(CertificateDer::from(a.clone())).map_err(|e| HttpError::TlsFailed(e.to_string()))?;
        }
        Ok(HttpClient::with_roots(roots))
    }

    pub fn timeout(mut self, t: Duration) -> HttpClient {
        self.timeout = t;
        self
    }

    /// Sends `method /path` to `addr`, naming `host` in the Host header (and
    /// SNI when `tls` is set), and reads the response until the server closes.
    pub fn request(
        &self,
        addr: SocketAddr,
        host: &str,
        tls: bool,
        method: &str,
        path: &str,
    ) -> Result<HttpResponse, HttpError> {
        let stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| match e.kind() {
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => HttpError::Timeout,
            _ => HttpError::ConnectFailed(addr, e),
        })?;
        stream.set_read_timeout(Some(self.timeout))?;
        stream.set_write_timeout(Some(self.timeout))?;
        let req = format!(
            "{method} {path} HTTP/1.1\r\nHost: {host}\r\nUser-Agent: quic-recon/{}\r\nAccept: */*\r\nConnection: close\r\n\r\n",
            env!("CARGO_PKG_VERSION")
        );
        let raw = if tls {
            let name = ServerName::try_from(host.to_string()).map_err(|e| HttpError::TlsFailed(e.to_string()))?;
            let conn =
                ClientConnection::new(self.tls.clone(), name).map_err(|e| HttpError::TlsFailed(e.to_string()))?;
            let mut s = StreamOwned::new(conn, stream);
            exchange(&mut s, req.as_bytes()).map_err(tls_error)?
        } else {
            let mut s = stream;
            exchange(&mut s, req.as_bytes()).map_err(plain_error)?
        };
        parse_response(&raw, method.eq_ignore_ascii_case("HEAD"))
    }
}

fn exchange<S: Read + Write>(s: &mut S, req: &[u8]) -> io::Result<Vec<u8>> {
    s.write_all(req)?;
    s.flush()?;
    let mut out = Vec::new();
    let mut buf = [0u8; 16 * 1024];
    loop {
        match s.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                out.extend_from_slice(&buf[..n]);
                if out.len() >= MAX_RESPONSE {
                    out.truncate(MAX_RESPONSE);
                    break;
                }
            }
            // servers that skip close_notify
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof && !out.is_empty() => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn plain_error(e: io::Error) -> HttpError {
    match e.kind() {
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => HttpError::Timeout,
        _ => HttpError::Io(e),
    }
}

fn tls_error(e: io::Error) -> HttpError {
    match e.kind() {
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => HttpError::Timeout,
        io::ErrorKind::InvalidData => HttpError::TlsFailed(e.to_string()),
        _ if e.get_ref().is_some_and(|inner| inner.is::<rustls::Error>()) => HttpError::TlsFailed(e.to_string()),
        _ => HttpError::Io(e),
    }
}

/// Parses a full response as read until connection close.
pub fn parse_response(raw: &[u8], head_only: bool) -> Result<HttpResponse, HttpError> {
    let mut headers = [httparse::EMPTY_HEADER; 128];
    let mut resp = httparse::Response::new(&mut headers);
    let body_at = match resp.parse(raw) {
        Ok(httparse::Status::Complete(n)) => n,
        Ok(httparse::Status::Partial) => return Err(HttpError::BadResponse("incomplete header".into())),
        Err(e) => return Err(HttpError::BadResponse(e.to_string())),
    };
    let status = resp.code.unwrap_or(0);
    let headers: Vec<(String, String)> = resp
        .headers
        .iter()
        .map(|h| (h.name.to_string(), String::from_utf8_lossy(h.value).trim().to_string()))
        .collect();
    let mut out = HttpResponse { status, headers, body: Vec::new() };
    if head_only {
        return Ok(out);
    }
    let body = &raw[body_at..];
    let chunked = out
        .header("transfer-encoding")
        .is_some_and(|v| v.split(',').any(|t| t.trim().eq_ignore_ascii_case("chunked")));
    out.body = if chunked {
        dechunk(body)?
    } else if let Some(len) = out.header("content-length").and_then(|v| v.parse::<usize>().ok()) {
        body[..len.min(body.len())].to_vec()
    } else {
        body.to_vec()
    };
    Ok(out)
}

fn dechunk(mut body: &[u8]) -> Result<Vec<u8>, HttpError> {
    let mut out = Vec::new();
    loop {
        let Some(eol) = body.windows(2).position(|w| w == b"\r\n") else {
            // truncated transfer: keep what arrived
            return Ok(out);
        };
        let line = std::str::from_utf8(&body[..eol]).map_err(|_| HttpError::BadResponse("chunk size".into()))?;
        let size_hex = line.split(';').next().unwrap_or("").trim();
        let size = usize::from_str_radix(size_hex, 16).map_err(|_| HttpError::BadResponse("chunk size".into()))?;
        body = &body[eol + 2..];
        if size == 0 {
            return Ok(out);
        }
        let take = size.min(body.len());
        out.extend_from_slice(&body[..take]);
        if take < size {
            return Ok(out);
        }
        body = body.get(size + 2..).unwrap_or(&[]);
    }
}
