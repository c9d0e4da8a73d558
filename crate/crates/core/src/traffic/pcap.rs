//! Packet-header traces as one-packet flows.

use std::io::Read;

use chrono::DateTime;
use etherparse::{LaxNetSlice, LaxSlicedPacket, TransportSlice};
use pcap_file::pcap::PcapReader;
use pcap_file::{DataLink, TsResolution};

use super::flow::{Endpoint, FlowRecord, Transport};

/// Largest wire length credited to a single packet.
pub const DEFAULT_LENGTH_CAP: u32 = 65_535;

#[derive(Debug, thiserror::Error)]
pub enum PcapError {
    #[error("pcap: {0}")]
    Format(#[from] pcap_file::PcapError),
    #[error("unsupported link type {0:?}")]
    LinkType(DataLink),
}

/// Reads a classic pcap file. Every IP packet becomes a flow of one packet
/// whose size is the original wire length, capped at `length_cap`. Packets
/// without an IP header are skipped; the second value counts them.
pub fn read_pcap<R: Read>(input: R, length_cap: u32) -> Result<(Vec<FlowRecord>, u64), PcapError> {
    let mut rdr = PcapReader::new(input)?;
    let header = rdr.header();
    let link = header.datalink;
    let nanos = header.ts_resolution == TsResolution::NanoSecond;
    let parse: fn(&[u8]) -> Option<LaxSlicedPacket<'_>> = match link {
        DataLink::ETHERNET => |d| LaxSlicedPacket::from_ethernet(d).ok(),
        DataLink::RAW | DataLink::IPV4 | DataLink::IPV6 => |d| LaxSlicedPacket::from_ip(d).ok(),
        other => return Err(PcapError::LinkType(other)),
    };
    let mut flows = Vec::new();
    let mut skipped = 0;
    // raw records: the checked reader rejects packets snapped below their
    // wire length, which is every packet of a header-only trace
    while let Some(pkt) = rdr.next_raw_packet() {
        let pkt = pkt?;
        let Some(sliced) = parse(&pkt.data) else {
            skipped += 1;
            continue;
        };
        let (src, dst, proto) = match &sliced.net {
            Some(LaxNetSlice::Ipv4(ip)) => {
                let h = ip.header();
                (h.source_addr().into(), h.destination_addr().into(), h.protocol().0)
            }
            Some(LaxNetSlice::Ipv6(ip)) => {
                let h = ip.header();
                (h.source_addr().into(), h.destination_addr().into(), ip.payload().ip_number.0)
            }
            _ => {
                skipped += 1;
                continue;
            }
        };
        let (transport, src_port, dst_port) = match &sliced.transport {
            Some(TransportSlice::Tcp(t)) => (Transport::Tcp, t.source_port(), t.destination_port()),
            Some(TransportSlice::Udp(u)) => (Transport::Udp, u.source_port(), u.destination_port()),
            _ => (Transport::Other(proto), 0, 0),
        };
        let frac = if nanos { pkt.ts_frac } else { pkt.ts_frac.saturating_mul(1000) };
        let start = DateTime::from_timestamp(pkt.ts_sec as i64, frac.min(999_999_999)).unwrap_or_default();
        flows.push(FlowRecord {
            start,
            src: Endpoint::Addr(src),
            dst: Endpoint::Addr(dst),
            transport,
            src_port,
            dst_port,
            bytes: pkt.orig_len.min(length_cap).max(1) as u64,
            packets: 1,
            sampling: None,
        });
    }
    Ok((flows, skipped))
}
