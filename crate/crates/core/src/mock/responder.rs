use std::net::SocketAddr;
use std::ops::RangeInclusive;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use chrono::{DateTime, Utc};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};
use tokio::sync::watch;

use super::profile::{Behavior, ResponderProfile};
use super::MockError;
use crate::wire::{
    decode_client_packet, encode_crt, tags, ConnectionId, HandshakeMessage, HandshakePacket, PacketNumber,
    PacketNumberWidth, PublicHeader, PublicResetPacket, VersionNegotiationPacket,
};

/// What the responder did with one inbound datagram.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Action {
    VersionNegotiation,
    Reject { with_scfg: bool, with_certs: bool },
    Reset,
    Garbage,
    Silent,
    Dropped,
    /// Not a decodable client hello, or no profile routes its connection id.
    Ignored { reason: String },
}

#[derive(Debug, Clone)]
pub struct LogEntry {
    pub at: DateTime<Utc>,
    pub peer: SocketAddr,
    pub local: SocketAddr,
    pub raw: Vec<u8>,
    pub inbound: Option<HandshakePacket>,
    pub action: Action,
}

#[derive(Debug, Clone, Default)]
pub struct ResponderLog {
    pub events: Vec<LogEntry>,
}

impl ResponderLog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Profiles selected by the connection id of each inbound packet.
#[derive(Debug, Clone, Default)]
pub struct ProfileRoutes {
    routes: Vec<(RangeInclusive<u64>, ResponderProfile)>,
    fallback: Option<ResponderProfile>,
}

impl ProfileRoutes {
    pub fn single(profile: ResponderProfile) -> Self {
        ProfileRoutes { routes: Vec::new(), fallback: Some(profile) }
    }

    pub fn route(mut self, ids: RangeInclusive<u64>, profile: ResponderProfile) -> Self {
        self.routes.push((ids, profile));
        self
    }

    pub fn fallback(mut self, profile: ResponderProfile) -> Self {
        self.fallback = Some(profile);
        self
    }

    fn select(&self, cid: Option<ConnectionId>) -> Option<&ResponderProfile> {
        cid.and_then(|c| self.routes.iter().find(|(r, _)| r.contains(&c.0)).map(|(_, p)| p))
            .or(self.fallback.as_ref())
    }

    fn validate(&self) -> Result<(), MockError> {
        for (_, p) in &self.routes {
            p.validate()?;
        }
        if let Some(p) = &self.fallback {
            p.validate()?;
        }
        Ok(())
    }
}

/// A running responder. Dropping the handle shuts it down.
pub struct ResponderHandle {
    local_addrs: Vec<SocketAddr>,
    stop: watch::Sender<bool>,
    thread: Option<JoinHandle<()>>,
    log: Arc<Mutex<Vec<LogEntry>>>,
    final_log: Option<ResponderLog>,
}

impl ResponderHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addrs[0]
    }

    pub fn local_addrs(&self) -> &[SocketAddr] {
        &self.local_addrs
    }

    /// Stops the receive loops, closes the sockets and returns the log.
    /// Further calls return the same log.
    pub fn shutdown(&mut self) -> ResponderLog {
        if let Some(t) = self.thread.take() {
            let _ = self.stop.send(true);
            let _ = t.join();
            let events = std::mem::take(&mut *self.log.lock().expect("log lock"));
            self.final_log = Some(ResponderLog { events });
        }
        self.final_log.clone().unwrap_or_default()
    }
}

impl Drop for ResponderHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn serve(profile: ResponderProfile, bind: SocketAddr) -> Result<ResponderHandle, MockError> {
    serve_routes(ProfileRoutes::single(profile), &[bind])
}

/// Serves one routing table on every address in `binds`.
pub fn serve_routes(routes: ProfileRoutes, binds: &[SocketAddr]) -> Result<ResponderHandle, MockError> {
    routes.validate()?;
    let mut sockets = Vec::with_capacity(binds.len());
    for b in binds {
        let s = std::net::UdpSocket::bind(b).map_err(|e| MockError::BindFailed(*b, e))?;
        s.set_nonblocking(true).map_err(|e| MockError::BindFailed(*b, e))?;
        sockets.push(s);
    }
    let local_addrs = sockets
        .iter()
        .zip(binds)
        .map(|(s, b)| s.local_addr().map_err(|e| MockError::BindFailed(*b, e)))
        .collect::<Result<Vec<_>, _>>()?;

    let (stop, stop_rx) = watch::channel(false);
    let log = Arc::new(Mutex::new(Vec::new()));
    let routes = Arc::new(routes);
    let thread_log = log.clone();
    let thread = std::thread::Builder::new()
        .name("mock-responder".into())
        .spawn(move || {
            let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().expect("runtime");
            rt.block_on(async move {
                let mut tasks = Vec::new();
                for (i, s) in sockets.into_iter().enumerate() {
                    let sock = Arc::new(tokio::net::UdpSocket::from_std(s).expect("register socket"));
                    tasks.push(tokio::spawn(receive_loop(
                        sock,
                        routes.clone(),
                        thread_log.clone(),
                        stop_rx.clone(),
                        i as u64,
                    )));
                }
                for t in tasks {
                    let _ = t.await;
                }
            });
        })
        .map_err(|e| MockError::BindFailed(binds[0], e))?;

    Ok(ResponderHandle { local_addrs, stop, thread: Some(thread), log, final_log: None })
}

async fn receive_loop(
    sock: Arc<tokio::net::UdpSocket>,
    routes: Arc<ProfileRoutes>,
    log: Arc<Mutex<Vec<LogEntry>>>,
    mut stop: watch::Receiver<bool>,
    index: u64,
) {
    let local = sock.local_addr().expect("bound socket");
    let seed = routes.fallback.as_ref().map_or(0, |p| p.seed);
    let mut rng = StdRng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut buf = vec![0u8; 65_536];
    loop {
        let (n, peer) = tokio::select! {
            r = sock.recv_from(&mut buf) => match r {
                Ok(v) => v,
                Err(_) => continue,
            },
            _ = stop.changed() => return,
        };
        let raw = buf[..n].to_vec();
        let inbound = decode_client_packet(&raw).ok();
        let (action, reply, delay) = match &inbound {
            Some(pkt) if pkt.message.message_tag == tags::CHLO => {
                match routes.select(pkt.header.connection_id) {
                    Some(profile) => {
                        let (action, reply) = respond(profile, pkt, &mut rng);
                        (action, reply, profile.reply_delay)
                    }
                    None => (Action::Ignored { reason: "no profile for connection id".into() }, None, Default::default()),
                }
            }
            Some(_) => (Action::Ignored { reason: "not a client hello".into() }, None, Default::default()),
            None => (Action::Ignored { reason: "undecodable datagram".into() }, None, Default::default()),
        };
        log.lock().expect("log lock").push(LogEntry { at: Utc::now(), peer, local, raw, inbound, action });
        if let Some(bytes) = reply {
            if delay.is_zero() {
                let _ = sock.send_to(&bytes, peer).await;
            } else {
                let sock = sock.clone();
                tokio::spawn(async move {
                    tokio::time::sleep(delay).await;
                    let _ = sock.send_to(&bytes, peer).await;
                });
            }
        }
    }
}

/// Decides the scripted reply for one client hello.
pub fn respond(profile: &ResponderProfile, pkt: &HandshakePacket, rng: &mut impl Rng) -> (Action, Option<Vec<u8>>) {
    if profile.drop_probability > 0.0 && rng.gen_bool(profile.drop_probability) {
        return (Action::Dropped, None);
    }
    let cid = pkt.header.connection_id.unwrap_or_default();
    let offered = pkt
        .header
        .version
        .or_else(|| pkt.message.get(tags::VER).and_then(|v| v.try_into().ok()).map(crate::wire::VersionTag));
    let supported = offered.is_some_and(|v| profile.supported_versions.contains(&v));

    match profile.behavior {
        Behavior::Silent => (Action::Silent, None),
        Behavior::Malformed => (Action::Garbage, Some(profile.garbage.clone())),
        Behavior::Reset => {
            let pn = pkt.header.packet_number.map_or(0, |p| p.value);
            let reply = PublicResetPacket::new(cid, rng.gen(), pn).encode().expect("PRST encodes");
            (Action::Reset, Some(reply))
        }
        Behavior::Negotiate | Behavior::ServeRej if !supported => {
            let vn = VersionNegotiationPacket { connection_id: cid, versions: profile.supported_versions.clone() };
            match vn.encode() {
                Ok(b) => (Action::VersionNegotiation, Some(b)),
                // nothing to advertise
                Err(_) => (Action::Silent, None),
            }
        }
        Behavior::Negotiate => {
            let mut rej = HandshakeMessage::new(tags::REJ);
            rej.set(tags::STK, profile.source_token.clone());
            (Action::Reject { with_scfg: false, with_certs: false }, Some(rej_packet(cid, rej)))
        }
        Behavior::ServeRej => {
            let scfg = profile.scfg.as_ref().expect("validated: serve_rej has scfg");
            let scfg_bytes = scfg.encode().expect("validated config");
            let mut rej = HandshakeMessage::new(tags::REJ);
            rej.set(tags::STK, profile.source_token.clone());
            rej.set(tags::PROF, test_signature(&scfg_bytes).to_vec());
            rej.set(tags::SCFG, scfg_bytes);

            let sni = pkt.message.get(tags::SNI).and_then(|s| std::str::from_utf8(s).ok());
            let token_ok = !profile.require_token_for_certs
                || pkt.message.get(tags::STK) == Some(profile.source_token.as_slice());
            let chain = if token_ok { profile.chain_for(sni) } else { None };
            if let Some(chain) = chain {
                rej.set(tags::CRT, encode_crt(chain, profile.crt_encoding).expect("chain encodes"));
            }
            (Action::Reject { with_scfg: true, with_certs: chain.is_some() }, Some(rej_packet(cid, rej)))
        }
    }
}

fn rej_packet(cid: ConnectionId, message: HandshakeMessage) -> Vec<u8> {
    HandshakePacket {
        header: PublicHeader {
            reset: false,
            connection_id: Some(cid),
            version: None,
            packet_number: Some(PacketNumber { value: 1, width: PacketNumberWidth::One }),
        },
        message,
    }
    .encode()
    .expect("REJ encodes")
}

/// Stand-in proof over the server config; nothing verifies it.
fn test_signature(scfg: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"quic-recon mock signing key");
    h.update(scfg);
    h.finalize().into()
}
