use serde::Serialize;

use crate::domain::DomainVerdictRecord;
use crate::handshake::HandshakeRecord;
use crate::probe::ProbeRecord;

/// An output record with a flat CSV form.
pub trait Row: Serialize {
    const HEADER: &'static [&'static str];
    fn csv_fields(&self) -> Vec<String>;
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn snake<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

impl Row for ProbeRecord {
    const HEADER: &'static [&'static str] = &["addr", "port", "verdict", "versions", "rtt_ms", "ts"];

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.addr.to_string(),
            self.port.to_string(),
            snake(&self.verdict),
            join(&self.versions),
            format!("{:.3}", self.rtt_ms),
            self.ts.to_rfc3339(),
        ]
    }
}

impl Row for DomainVerdictRecord {
    const HEADER: &'static [&'static str] = &[
        "domain",
        "category",
        "cert_valid",
        "resolution",
        "address",
        "version",
        "scid_hex",
        "cert_fingerprint",
        "detail",
        "rtt_ms",
        "ts",
    ];

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.domain.clone(),
            self.category.label().to_string(),
            self.cert_valid.to_string(),
            snake(&self.resolution),
            opt(&self.address),
            opt(&self.version),
            opt(&self.scid_hex),
            opt(&self.cert_fingerprint),
            self.detail.clone(),
            self.rtt_ms.map(|r| format!("{r:.3}")).unwrap_or_default(),
            self.ts.to_rfc3339(),
        ]
    }
}

impl Row for HandshakeRecord {
    const HEADER: &'static [&'static str] =
        &["host", "sni", "status", "version", "scid_hex", "cert_fingerprints", "cert_cn", "cert_valid", "rtt_ms"];

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.host.clone(),
            self.sni.clone(),
            self.status.as_str().to_string(),
            opt(&self.version),
            opt(&self.scid_hex),
            join(&self.cert_fingerprints),
            opt(&self.cert_cn),
            opt(&self.cert_valid),
            self.rtt_ms.map(|r| format!("{r:.3}")).unwrap_or_default(),
        ]
    }
}
