use std::net::SocketAddr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::http::{HttpClient, HttpError};

pub const BANNER_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result")]
pub enum Banner {
    /// The host answered; `server` is its Server header, if it sent one.
    Response { status: u16, server: Option<String> },
    Timeout,
    Failed { reason: String },
}

/// `GET /` over plain HTTP, keeping only the Server header.
pub fn grab_banner(addr: SocketAddr, host: &str, timeout: Duration) -> Banner {
    let client = HttpClient::default().timeout(timeout);
    match client.request(addr, host, false, "GET", "/") {
        Ok(r) => Banner::Response { status: r.status, server: r.header("server").map(str::to_string) },
        Err(HttpError::Timeout) => Banner::Timeout,
        Err(e) => Banner::Failed { reason: e.to_string() },
    }
}
