#![allow(dead_code)]

pub mod campaigns;
pub mod flows;
pub mod hosts;

use std::net::SocketAddr;
use std::path::PathBuf;

use quic_recon::mock::{Behavior, ResponderProfile};
use quic_recon::probe::ProbeTarget;
use quic_recon::wire::{tags, CertificateChain, ServerConfig, VersionTag};

pub fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap()
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn v(s: &str) -> VersionTag {
    s.parse().unwrap()
}

pub fn loopback() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

pub fn target(addr: SocketAddr) -> ProbeTarget {
    ProbeTarget::from(addr)
}

pub fn sample_scfg() -> ServerConfig {
    ServerConfig {
        scid: *b"mock-server-cfg!",
        kexs: vec![tags::C255],
        aead: vec![tags::AESG, tags::CC20],
        pubs: vec![(0u8..32).collect()],
        expy: 1_900_000_000,
        vers: vec![v("Q035"), v("Q039")],
    }
}

pub fn selfsigned_chain() -> CertificateChain {
    CertificateChain::new(vec![fixture("selfsigned.der")])
}

pub fn leaf_chain() -> CertificateChain {
    CertificateChain::new(vec![fixture("leaf.der"), fixture("ca.der")])
}

/// REJ-serving profile holding the self-signed example.com chain.
pub fn serving_profile() -> ResponderProfile {
    let mut p = ResponderProfile::with_behavior(Behavior::ServeRej);
    p.supported_versions = vec![v("Q035"), v("Q039")];
    p.scfg = Some(sample_scfg());
    p.cert_inventory.insert("example.com".into(), selfsigned_chain());
    p
}

/// In-memory transport that answers every probe with a version negotiation
/// echoing the probe's connection id.
pub struct EchoTransport {
    pub record_sends: bool,
    pub sends: std::cell::RefCell<Vec<std::time::Instant>>,
    pub sent: std::cell::Cell<u64>,
    queue: std::cell::RefCell<std::collections::VecDeque<(Vec<u8>, SocketAddr)>>,
    pub silent: bool,
}

impl EchoTransport {
    pub fn new(record_sends: bool) -> EchoTransport {
        EchoTransport {
            record_sends,
            sends: Default::default(),
            sent: Default::default(),
            queue: Default::default(),
            silent: false,
        }
    }

    pub fn silent() -> EchoTransport {
        EchoTransport { silent: true, ..EchoTransport::new(false) }
    }
}

impl quic_recon::probe::Transport for EchoTransport {
    fn send_to(&self, buf: &[u8], to: SocketAddr) -> std::io::Result<()> {
        self.sent.set(self.sent.get() + 1);
        if self.record_sends {
            self.sends.borrow_mut().push(std::time::Instant::now());
        }
        if !self.silent {
            let mut reply = vec![0x09];
            reply.extend_from_slice(&buf[1..9]);
            reply.extend_from_slice(b"Q035Q039");
            self.queue.borrow_mut().push_back((reply, to));
        }
        Ok(())
    }

    fn recv_from(
        &self,
        buf: &mut [u8],
        wait: std::time::Duration,
    ) -> std::io::Result<Option<(usize, SocketAddr)>> {
        match self.queue.borrow_mut().pop_front() {
            Some((reply, from)) => {
                buf[..reply.len()].copy_from_slice(&reply);
                Ok(Some((reply.len(), from)))
            }
            None => {
                std::thread::sleep(wait.min(std::time::Duration::from_millis(1)));
                Ok(None)
            }
        }
    }
}

/// `n` distinct targets in 10.0.0.0/8, port 443.
pub fn synthetic_targets(n: usize) -> impl Iterator<Item = ProbeTarget> {
    (0..n).map(|i| {
        let ip = std::net::Ipv4Addr::from(0x0a00_0000u32 + i as u32);
        ProbeTarget::new(ip.into(), 443).unwrap()
    })
}
