use std::io;
use std::net::{Ipv4Addr, Ipv6Addr, SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

/// Datagram I/O used by the scanner.
pub trait Transport {
    fn send_to(&self, buf: &[u8], to: SocketAddr) -> io::Result<()>;

    /// Waits at most `wait` for one datagram; `Ok(None)` when nothing arrived.
    fn recv_from(&self, buf: &mut [u8], wait: Duration) -> io::Result<Option<(usize, SocketAddr)>>;
}

/// UDP socket, dual-stack when the host allows it.
pub struct UdpTransport {
    sock: UdpSocket,
    v6: bool,
}

impl UdpTransport {
    /// Binds an ephemeral port, preferring a dual-stack IPv6 socket.
    pub fn bind_any() -> io::Result<UdpTransport> {
        match UdpSocket::bind((Ipv6Addr::UNSPECIFIED, 0)) {
            Ok(sock) => {
                sock.set_nonblocking(true)?;
                Ok(UdpTransport { sock, v6: true })
            }
            Err(_) => UdpTransport::bind(SocketAddr::from((Ipv4Addr::UNSPECIFIED, 0))),
        }
    }

    pub fn bind(addr: SocketAddr) -> io::Result<UdpTransport> {
        let sock = UdpSocket::bind(addr)?;
        sock.set_nonblocking(true)?;
        Ok(UdpTransport { v6: addr.is_ipv6(), sock })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.sock.local_addr()
    }

    fn map(&self, to: SocketAddr) -> SocketAddr {
        match to {
            SocketAddr::V4(v4) if self.v6 => SocketAddr::new(v4.ip().to_ipv6_mapped().into(), v4.port()),
            other => other,
        }
    }
}

/// Longest nap between polls of the non-blocking socket. Socket receive
/// timeouts are rounded up to the kernel tick, which is far coarser than the
/// gap between sends at common rates.
const POLL_SLICE: Duration = Duration::from_micros(200);

impl Transport for UdpTransport {
    fn send_to(&self, buf: &[u8], to: SocketAddr) -> io::Result<()> {
        let to = self.map(to);
        for _ in 0..100 {
            match self.sock.send_to(buf, to) {
                Ok(_) => return Ok(()),
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(POLL_SLICE),
                Err(e) => return Err(e),
            }
        }
        Err(io::ErrorKind::WouldBlock.into())
    }

    fn recv_from(&self, buf: &mut [u8], wait: Duration) -> io::Result<Option<(usize, SocketAddr)>> {
        let deadline = Instant::now() + wait;
        loop {
            match self.sock.recv_from(buf) {
                Ok((n, from)) => return Ok(Some((n, from))),
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {}
                // ICMP port unreachable surfaces as ECONNREFUSED on some stacks
                Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {}
                Err(e) => return Err(e),
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            std::thread::sleep(left.min(POLL_SLICE));
        }
    }
}
