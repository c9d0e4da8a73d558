use std::time::{Duration, Instant};

use rand::Rng;

use super::{
    Direction, HandshakeParams, HandshakeResult, HandshakeStatus, HandshakeTrace, TraceEvent, TracePayload,
};
use crate::net::canonical;
use crate::probe::{ProbeTarget, Transport, UdpTransport};
use crate::wire::{
    build_chlo, decode_client_packet, decode_crt, decode_server_response, tags, ConnectionId, CrtPayload,
    ServerConfig, ServerResponse, Tag, VersionTag,
};

struct Session<'a, T: Transport> {
    transport: &'a T,
    target: ProbeTarget,
    timeout: Duration,
    start: Instant,
    trace: HandshakeTrace,
    buf: Vec<u8>,
}

impl<T: Transport> Session<'_, T> {
    fn send(&mut self, packet: Vec<u8>) -> std::io::Result<()> {
        self.transport.send_to(&packet, self.target.socket_addr())?;
        let decoded = decode_client_packet(&packet).expect("client packets we build decode");
        self.trace.events.push(TraceEvent {
            direction: Direction::Sent,
            elapsed: self.start.elapsed(),
            raw: packet,
            payload: TracePayload::Sent(decoded),
        });
        Ok(())
    }

    /// Next datagram from the target, or `None` once the deadline passes.
    fn recv(&mut self) -> std::io::Result<Option<ServerResponse>> {
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            let Some((n, from)) = self.transport.recv_from(&mut self.buf, left)? else {
                continue;
            };
            if canonical(from.ip()) != self.target.address || from.port() != self.target.port {
                continue;
            }
            let raw = self.buf[..n].to_vec();
            let resp = decode_server_response(&raw);
            self.trace.events.push(TraceEvent {
                direction: Direction::Received,
                elapsed: self.start.elapsed(),
                raw,
                payload: TracePayload::Received(resp.clone()),
            });
            return Ok(Some(resp));
        }
    }
}

/// Runs the inchoate part of the handshake against `t`: CHLO, REJ, repeat
/// until both the server config and certificates are known.
pub fn perform_handshake(t: ProbeTarget, p: &HandshakeParams) -> HandshakeResult {
    match UdpTransport::bind_any() {
        Ok(transport) => perform_handshake_with(&transport, t, p),
        Err(e) => HandshakeResult::failed(HandshakeStatus::ProtocolError, format!("socket: {e}")),
    }
}

pub fn perform_handshake_with<T: Transport>(transport: &T, t: ProbeTarget, p: &HandshakeParams) -> HandshakeResult {
    if let Err(e) = p.validate() {
        return HandshakeResult::failed(HandshakeStatus::ProtocolError, e);
    }
    let cid = ConnectionId(p.connection_id.unwrap_or_else(|| rand::thread_rng().gen()));
    let mut s = Session {
        transport,
        target: t,
        timeout: p.timeout,
        start: Instant::now(),
        trace: HandshakeTrace::default(),
        buf: vec![0u8; 65_536],
    };
    let mut result = HandshakeResult::failed(HandshakeStatus::Timeout, String::new());
    match run(&mut s, cid, p, &mut result) {
        Ok(status) => result.status = status,
        Err(e) => {
            result.status = HandshakeStatus::ProtocolError;
            result.detail = format!("socket: {e}");
        }
    }
    if result.status != HandshakeStatus::QuicEnabled {
        result.scfg = None;
        result.certs = None;
        result.negotiated_version = None;
    }
    result.trace = s.trace;
    result
}

fn run<T: Transport>(
    s: &mut Session<'_, T>,
    cid: ConnectionId,
    p: &HandshakeParams,
    r: &mut HandshakeResult,
) -> std::io::Result<HandshakeStatus> {
    let mut version = p.version;
    let mut renegotiated = false;
    let mut got_rej = false;
    let mut known: Vec<(Tag, Vec<u8>)> = vec![(tags::PDMD, tags::X509.0.to_vec())];
    if !p.sni.is_empty() {
        known.push((tags::SNI, p.sni.as_bytes().to_vec()));
    }
    let mut rounds = 0;

    while rounds < p.max_rounds {
        let chlo = match build_chlo(cid, version, p.pad_to, &known) {
            Ok(b) => b,
            Err(e) => {
                r.detail = format!("cannot build CHLO: {e}");
                return Ok(HandshakeStatus::ProtocolError);
            }
        };
        s.send(chlo)?;
        rounds += 1;
        r.rounds = rounds;

        let Some(resp) = s.recv()? else {
            if got_rej {
                break;
            }
            return Ok(HandshakeStatus::Timeout);
        };
        if r.rtt.is_none() {
            r.rtt = Some(s.trace.events.last().expect("just pushed").elapsed);
        }

        match resp {
            ServerResponse::VersionNegotiation(vn) => {
                if got_rej || vn.versions.contains(&version) {
                    r.detail = "unexpected version negotiation".into();
                    return Ok(HandshakeStatus::ProtocolError);
                }
                r.server_versions = vn.versions.clone();
                match best_common_version(&vn.versions, &p.accepted_versions) {
                    Some(v) if !renegotiated => {
                        version = v;
                        renegotiated = true;
                        // a renegotiated version starts a fresh attempt
                        rounds = 0;
                    }
                    _ => return Ok(HandshakeStatus::VersionFailed),
                }
            }
            ServerResponse::PublicReset(_) => {
                r.detail = "public reset during handshake".into();
                return Ok(HandshakeStatus::ProtocolError);
            }
            ServerResponse::Malformed => {
                r.detail = "malformed packet".into();
                return Ok(HandshakeStatus::ProtocolError);
            }
            ServerResponse::Handshake(pkt) => {
                if pkt.header.connection_id.is_some_and(|c| c != cid) {
                    r.detail = "connection id mismatch".into();
                    return Ok(HandshakeStatus::ProtocolError);
                }
                if pkt.message.message_tag != tags::REJ {
                    r.detail = format!("unexpected {} message", pkt.message.message_tag);
                    return Ok(HandshakeStatus::ProtocolError);
                }
                got_rej = true;
                r.negotiated_version = Some(version);
                if let Some(raw) = pkt.message.get(tags::SCFG) {
                    match ServerConfig::decode(raw) {
                        Ok(cfg) => {
                            merge(&mut known, tags::SCID, cfg.scid.to_vec());
                            r.scfg = Some(cfg);
                        }
                        Err(e) => {
                            r.detail = format!("bad SCFG: {e}");
                            return Ok(HandshakeStatus::ProtocolError);
                        }
                    }
                }
                if let Some(stk) = pkt.message.get(tags::STK) {
                    merge(&mut known, tags::STK, stk.to_vec());
                    r.source_token = Some(stk.to_vec());
                }
                if let Some(raw) = pkt.message.get(tags::CRT) {
                    match decode_crt(raw) {
                        Ok(CrtPayload::Chain(c)) if !c.is_empty() => r.certs = Some(c),
                        Ok(CrtPayload::Chain(_)) => {}
                        Ok(CrtPayload::UnsupportedCompression) => r.cert_compression_unsupported = true,
                        Err(e) => {
                            r.detail = format!("bad CRT: {e}");
                            return Ok(HandshakeStatus::ProtocolError);
                        }
                    }
                }
                if r.scfg.is_some() && (r.certs.is_some() || r.cert_compression_unsupported) {
                    break;
                }
            }
        }
    }
    Ok(if got_rej { HandshakeStatus::QuicEnabled } else { HandshakeStatus::Timeout })
}

/// Adds a tag the client has learned; values already present are replaced.
fn merge(known: &mut Vec<(Tag, Vec<u8>)>, tag: Tag, value: Vec<u8>) {
    match known.iter_mut().find(|(t, _)| *t == tag) {
        Some(slot) => slot.1 = value,
        None => known.push((tag, value)),
    }
}

/// Highest recognized version present in both lists.
pub fn best_common_version(server: &[VersionTag], client: &[VersionTag]) -> Option<VersionTag> {
    server.iter().filter(|v| v.is_recognized() && client.contains(v)).max_by_key(|v| v.number()).copied()
}
