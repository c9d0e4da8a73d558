use std::net::{SocketAddr, ToSocketAddrs};

use serde::{Deserialize, Serialize};

use super::http::{HttpClient, HttpError};

/// Lifetime assumed when an entry carries no `ma` parameter.
pub const DEFAULT_MAX_AGE: u64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AltSvcSource {
    Http,
    Https,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AltSvcEntry {
    pub protocol_id: String,
    /// Empty when the alternative is on the same host.
    pub host: String,
    pub port: u16,
    /// Versions from the `v` parameter, in the order given.
    pub versions: Vec<u32>,
    pub max_age: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AltSvcAdvertisement {
    pub source: AltSvcSource,
    pub protocols: Vec<AltSvcEntry>,
    /// The origin sent `Alt-Svc: clear`.
    pub clear: bool,
}

impl AltSvcAdvertisement {
    /// Whether any advertised alternative lists version `v`.
    pub fn requires_version(&self, v: u32) -> bool {
        self.protocols.iter().any(|p| p.versions.contains(&v))
    }

    pub fn advertises_quic(&self) -> bool {
        self.protocols.iter().any(|p| p.protocol_id == "quic" || p.protocol_id.starts_with("h3") || p.protocol_id.starts_with("hq"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed Alt-Svc value: {0}")]
pub struct AltSvcParseError(pub String);

/// Splits on `sep` outside double quotes.
fn split_unquoted(s: &str, sep: char) -> Vec<&str> {
    let mut out = Vec::new();
    let mut quoted = false;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
        } else if quoted && c == '\\' {
            escaped = true;
        } else if c == '"' {
            quoted = !quoted;
        } else if c == sep && !quoted {
            out.push(&s[start..i]);
            start = i + c.len_utf8();
        }
    }
    out.push(&s[start..]);
    out
}

fn unquote(v: &str) -> Result<String, AltSvcParseError> {
    let v = v.trim();
    match v.strip_prefix('"') {
        Some(rest) => {
            let inner = rest.strip_suffix('"').ok_or_else(|| AltSvcParseError(format!("unterminated quote in {v}")))?;
            let mut out = String::with_capacity(inner.len());
            let mut chars = inner.chars();
            while let Some(c) = chars.next() {
                out.push(if c == '\\' { chars.next().unwrap_or('\\') } else { c });
            }
            Ok(out)
        }
        None => Ok(v.to_string()),
    }
}

fn percent_decode(s: &str) -> Result<String, AltSvcParseError> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3).ok_or_else(|| AltSvcParseError(format!("bad escape in {s}")))?;
            out.push(u8::from_str_radix(hex, 16).map_err(|_| AltSvcParseError(format!("bad escape in {s}")))?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| AltSvcParseError(format!("protocol id {s} is not UTF-8")))
}

fn parse_authority(a: &str) -> Result<(String, u16), AltSvcParseError> {
    let err = || AltSvcParseError(format!("bad authority {a:?}"));
    let (host, port) = if let Some(rest) = a.strip_prefix('[') {
        let (h, p) = rest.split_once("]:").ok_or_else(err)?;
        (h, p)
    } else {
        a.rsplit_once(':').ok_or_else(err)?
    };
    Ok((host.to_string(), port.parse().map_err(|_| err())?))
}

/// Parses one Alt-Svc header value. `clear` yields `Ok(None)`.
pub fn parse_alt_svc(value: &str) -> Result<Option<Vec<AltSvcEntry>>, AltSvcParseError> {
    if value.trim().eq_ignore_ascii_case("clear") {
        return Ok(None);
    }
    let mut out = Vec::new();
    for alt in split_unquoted(value, ',') {
        if alt.trim().is_empty() {
            continue;
        }
        let mut parts = split_unquoted(alt, ';').into_iter();
        let head = parts.next().unwrap_or_default();
        let (proto, authority) =
            head.split_once('=').ok_or_else(|| AltSvcParseError(format!("missing authority in {head:?}")))?;
        let (host, port) = parse_authority(&unquote(authority)?)?;
        let mut entry = AltSvcEntry {
            protocol_id: percent_decode(proto.trim())?,
            host,
            port,
            versions: Vec::new(),
            max_age: DEFAULT_MAX_AGE,
        };
        for p in parts {
            let Some((k, v)) = p.split_once('=') else { continue };
            let v = unquote(v)?;
            match k.trim().to_ascii_lowercase().as_str() {
                "ma" => entry.max_age = v.parse().map_err(|_| AltSvcParseError(format!("bad ma {v:?}")))?,
                "v" => entry.versions = v.split(',').filter_map(|x| x.trim().parse().ok()).collect(),
                _ => {}
            }
        }
        out.push(entry);
    }
    Ok(Some(out))
}

/// Combines all Alt-Svc header values of one response.
pub fn advertisement_from_headers<'a>(
    source: AltSvcSource,
    values: impl IntoIterator<Item = &'a str>,
) -> Result<AltSvcAdvertisement, AltSvcParseError> {
    let mut adv = AltSvcAdvertisement { source, protocols: Vec::new(), clear: false };
    for v in values {
        match parse_alt_svc(v)? {
            Some(entries) => adv.protocols.extend(entries),
            None => adv.clear = true,
        }
    }
    Ok(adv)
}

#[derive(Debug, thiserror::Error)]
pub enum AltSvcError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error(transparent)]
    Parse(#[from] AltSvcParseError),
    #[error("cannot resolve {0}")]
    Resolve(String),
}

/// Fetches `/` from `name` over HTTP (port 80) or HTTPS (any other port)
/// and collects its Alt-Svc advertisement.
pub fn check_alt_svc(name: &str, port: u16) -> Result<AltSvcAdvertisement, AltSvcError> {
    let addr = (name, port)
        .to_socket_addrs()
        .map_err(|_| AltSvcError::Resolve(name.to_string()))?
        .next()
        .ok_or_else(|| AltSvcError::Resolve(name.to_string()))?;
    let source = if port == 80 { AltSvcSource::Http } else { AltSvcSource::Https };
    check_alt_svc_at(&HttpClient::default(), addr, name, source)
}

/// As [`check_alt_svc`] against a known address.
pub fn check_alt_svc_at(
    client: &HttpClient,
    addr: SocketAddr,
    name: &str,
    source: AltSvcSource,
) -> Result<AltSvcAdvertisement, AltSvcError> {
    let resp = client.request(addr, name, source == AltSvcSource::Https, "GET", "/")?;
    Ok(advertisement_from_headers(source, resp.header_values("alt-svc"))?)
}
