use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};
use std::time::{Duration, Instant};

use rand::Rng;
use sha2::{Digest, Sha256};

use super::transport::{Transport, UdpTransport};
use super::{ProbeError, ProbeOutcome, ProbeTarget, ScanConfig, Verdict};
use crate::wire::{build_probe_chlo, decode_server_response, ConnectionId, ServerResponse};

/// Consecutive send failures after which the socket is considered dead.
const MAX_CONSECUTIVE_SEND_ERRORS: u32 = 64;
/// Upper bound on one receive wait so expiries are processed promptly.
const MAX_POLL: Duration = Duration::from_millis(20);
/// Stale deadline entries tolerated before the queue is compacted.
const DEADLINE_SLACK: usize = 1024;
const SHUFFLE_WINDOW: usize = 4096;

/// Connection id for a probe to `t`: first 8 octets of
/// SHA-256(secret || address as 16 octets || port), little-endian.
pub fn cid_for(secret: u64, t: &ProbeTarget) -> ConnectionId {
    let ip16 = match t.address {
        std::net::IpAddr::V4(v4) => v4.to_ipv6_mapped().octets(),
        std::net::IpAddr::V6(v6) => v6.octets(),
    };
    let mut h = Sha256::new();
    h.update(secret.to_le_bytes());
    h.update(ip16);
    h.update(t.port.to_be_bytes());
    let d = h.finalize();
    ConnectionId(u64::from_le_bytes(d[..8].try_into().unwrap()))
}

/// Maps a decoded reply onto a probe verdict.
///
/// Only negotiation and public reset count as capable. A well-formed
/// handshake message is not an expected answer to an unsupported version and
/// is reported as `Malformed`.
pub fn classify_response(resp: &ServerResponse, expected: ConnectionId, rtt: Duration) -> ProbeOutcome {
    let cid_echo_matched = resp.connection_id() == Some(expected);
    match resp {
        ServerResponse::VersionNegotiation(vn) => ProbeOutcome {
            verdict: Verdict::VersionNegotiation,
            versions: vn.versions.clone(),
            cid_echo_matched,
            reset_body_valid: None,
            rtt,
        },
        ServerResponse::PublicReset(r) => ProbeOutcome {
            verdict: Verdict::PublicReset,
            versions: Vec::new(),
            cid_echo_matched,
            reset_body_valid: Some(r.body_valid()),
            rtt,
        },
        ServerResponse::Handshake(_) | ServerResponse::Malformed => ProbeOutcome {
            verdict: Verdict::Malformed,
            versions: Vec::new(),
            cid_echo_matched,
            reset_body_valid: None,
            rtt,
        },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub sent: u64,
    pub retransmitted: u64,
    pub results: u64,
    pub blocklisted: u64,
    /// Targets repeated while an earlier copy was still in flight.
    pub duplicates: u64,
    /// Datagrams from addresses with nothing in flight (late or unsolicited).
    pub unmatched_replies: u64,
    pub send_errors: u64,
    pub peak_in_flight: usize,
}

struct InFlight {
    sent_at: Instant,
    attempt: u32,
    copies: u32,
}

/// Drives one scan over a transport.
pub struct Scanner<'a, T: Transport> {
    transport: &'a T,
    cfg: ScanConfig,
    template: Vec<u8>,
}

impl<'a, T: Transport> Scanner<'a, T> {
    pub fn new(transport: &'a T, mut cfg: ScanConfig) -> Result<Self, ProbeError> {
        cfg.validate()?;
        if cfg.secret == 0 {
            cfg.secret = rand::thread_rng().gen_range(1..=u64::MAX);
        }
        let template = build_probe_chlo(ConnectionId(0), cfg.probe_version, cfg.pad_to, cfg.sni.as_deref())
            .map_err(|e| ProbeError::InvalidConfig(e.to_string()))?;
        Ok(Scanner { transport, cfg, template })
    }

    pub fn config(&self) -> &ScanConfig {
        &self.cfg
    }

    fn send(&self, t: &ProbeTarget, buf: &mut [u8]) -> std::io::Result<()> {
        // connection id sits right after the flags octet
        buf[1..9].copy_from_slice(&cid_for(self.cfg.secret, t).0.to_le_bytes());
        self.transport.send_to(buf, t.socket_addr())
    }

    /// Probes every target, calling `on_result` once per non-blocklisted
    /// target as outcomes become known (not in input order).
    pub fn run<I, F>(&self, targets: I, mut on_result: F) -> Result<ScanStats, ProbeError>
    where
        I: IntoIterator<Item = ProbeTarget>,
        F: FnMut(ProbeTarget, ProbeOutcome),
    {
        let cfg = &self.cfg;
        let interval = Duration::from_secs_f64(1.0 / cfg.rate as f64);
        let mut targets: Box<dyn Iterator<Item = ProbeTarget> + '_> = if cfg.shuffle {
            Box::new(WindowShuffle::new(targets.into_iter(), SHUFFLE_WINDOW))
        } else {
            Box::new(targets.into_iter())
        };

        let mut stats = ScanStats::default();
        let mut table: HashMap<ProbeTarget, InFlight> = HashMap::new();
        let mut deadlines: VecDeque<(Instant, ProbeTarget, u32)> = VecDeque::new();
        let mut retry_q: VecDeque<ProbeTarget> = VecDeque::new();
        let mut packet = self.template.clone();
        let mut buf = vec![0u8; 65_536];
        let mut last_send: Option<Instant> = None;
        let mut exhausted = false;
        let mut consecutive_errors = 0u32;

        let mut emit = |t: ProbeTarget, o: ProbeOutcome, copies: u32, stats: &mut ScanStats| {
            for _ in 1..copies {
                on_result(t, o.clone());
            }
            on_result(t, o);
            stats.results += copies as u64;
        };

        loop {
            let now = Instant::now();

            while let Some(&(due, t, attempt)) = deadlines.front() {
                if due > now {
                    break;
                }
                deadlines.pop_front();
                let current = table.get(&t).is_some_and(|e| e.attempt == attempt);
                if !current {
                    continue;
                }
                if attempt < cfg.retries {
                    retry_q.push_back(t);
                } else {
                    let e = table.remove(&t).expect("checked above");
                    emit(t, ProbeOutcome::timeout(cfg.timeout), e.copies, &mut stats);
                }
            }

            if last_send.map_or(true, |l| now >= l + interval) {
                let mut to_send = None;
                if let Some(t) = retry_q.pop_front() {
                    if let Some(e) = table.get_mut(&t) {
                        e.attempt += 1;
                        stats.retransmitted += 1;
                        to_send = Some((t, e.attempt));
                    }
                } else if !exhausted && table.len() < cfg.max_in_flight {
                    match targets.next() {
                        None => exhausted = true,
                        Some(t) if cfg.blocklist.contains(t.address) => stats.blocklisted += 1,
                        Some(t) => match table.entry(t) {
                            Entry::Occupied(mut o) => {
                                o.get_mut().copies += 1;
                                stats.duplicates += 1;
                            }
                            Entry::Vacant(v) => {
                                v.insert(InFlight { sent_at: now, attempt: 0, copies: 1 });
                                to_send = Some((t, 0));
                            }
                        },
                    }
                }
                if let Some((t, attempt)) = to_send {
                    let sent_at = Instant::now();
                    match self.send(&t, &mut packet) {
                        Ok(()) => consecutive_errors = 0,
                        Err(e) => {
                            stats.send_errors += 1;
                            consecutive_errors += 1;
                            if consecutive_errors >= MAX_CONSECUTIVE_SEND_ERRORS {
                                return Err(ProbeError::SocketError(e));
                            }
                        }
                    }
                    stats.sent += 1;
                    last_send = Some(sent_at);
                    if let Some(e) = table.get_mut(&t) {
                        e.sent_at = sent_at;
                    }
                    deadlines.push_back((sent_at + cfg.timeout, t, attempt));
                    stats.peak_in_flight = stats.peak_in_flight.max(table.len());
                }
            }

            if exhausted && retry_q.is_empty() && table.is_empty() {
                break;
            }

            let now = Instant::now();
            let want_send = !retry_q.is_empty() || (!exhausted && table.len() < cfg.max_in_flight);
            let mut wake = now + MAX_POLL;
            if want_send {
                wake = wake.min(last_send.map_or(now, |l| l + interval));
            }
            if let Some(&(due, _, _)) = deadlines.front() {
                wake = wake.min(due);
            }
            // a zero wait still drains one pending reply, so in-flight state
            // tracks replies instead of growing with the input
            let wait = wake.saturating_duration_since(now);
            if let Some((n, from)) = self.transport.recv_from(&mut buf, wait)? {
                let from = ProbeTarget::from(from);
                match table.remove(&from) {
                    None => stats.unmatched_replies += 1,
                    Some(e) => {
                        let resp = decode_server_response(&buf[..n]);
                        let outcome = classify_response(&resp, cid_for(cfg.secret, &from), e.sent_at.elapsed());
                        emit(from, outcome, e.copies, &mut stats);
                    }
                }
                // answered probes leave stale deadlines behind; drop them once
                // they dominate so the queue stays proportional to in-flight
                if deadlines.len() > 2 * table.len() + DEADLINE_SLACK {
                    deadlines.retain(|(_, t, a)| table.get(t).is_some_and(|e| e.attempt == *a));
                }
            }
        }
        Ok(stats)
    }
}

/// Probes a single target on a fresh socket.
pub fn probe_one(t: ProbeTarget, cfg: &ScanConfig) -> Result<ProbeOutcome, ProbeError> {
    if cfg.blocklist.contains(t.address) {
        return Err(ProbeError::Blocklisted(t));
    }
    let transport = UdpTransport::bind_any()?;
    let scanner = Scanner::new(&transport, cfg.clone())?;
    let mut out = None;
    scanner.run([t], |_, o| out = Some(o))?;
    Ok(out.expect("one result per non-blocklisted target"))
}

/// Scans `targets` over a fresh UDP socket.
pub fn scan_targets<I, F>(targets: I, cfg: &ScanConfig, on_result: F) -> Result<ScanStats, ProbeError>
where
    I: IntoIterator<Item = ProbeTarget>,
    F: FnMut(ProbeTarget, ProbeOutcome),
{
    let transport = UdpTransport::bind_any()?;
    Scanner::new(&transport, cfg.clone())?.run(targets, on_result)
}

/// Shuffles a stream within a bounded window.
struct WindowShuffle<I: Iterator> {
    inner: I,
    window: Vec<I::Item>,
    size: usize,
    rng: rand::rngs::ThreadRng,
}

impl<I: Iterator> WindowShuffle<I> {
    fn new(inner: I, size: usize) -> Self {
        WindowShuffle { inner, window: Vec::with_capacity(size), size, rng: rand::thread_rng() }
    }
}

impl<I: Iterator> Iterator for WindowShuffle<I> {
    type Item = I::Item;

    fn next(&mut self) -> Option<I::Item> {
        while self.window.len() < self.size {
            match self.inner.next() {
                Some(x) => self.window.push(x),
                None => break,
            }
        }
        if self.window.is_empty() {
            return None;
        }
        let i = self.rng.gen_range(0..self.window.len());
        Some(self.window.swap_remove(i))
    }
}
