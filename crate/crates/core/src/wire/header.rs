use std::fmt;

use super::tag::VersionTag;
use super::WireError;

pub const FLAG_VERSION: u8 = 0x01;
pub const FLAG_RESET: u8 = 0x02;
pub const FLAG_NONCE: u8 = 0x04;
pub const FLAG_CONNECTION_ID: u8 = 0x08;
pub const PACKET_NUMBER_MASK: u8 = 0x30;
pub const FLAG_MULTIPATH: u8 = 0x40;
pub const FLAG_UNUSED: u8 = 0x80;

/// 64-bit connection id, carried little-endian on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ConnectionId(pub u64);

impl fmt::Debug for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConnectionId({:016x})", self.0)
    }
}

impl fmt::Display for ConnectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Encoded width of a packet number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketNumberWidth {
    One,
    Two,
    Four,
    Six,
}

impl PacketNumberWidth {
    pub fn octets(self) -> usize {
        match self {
            PacketNumberWidth::One => 1,
            PacketNumberWidth::Two => 2,
            PacketNumberWidth::Four => 4,
            PacketNumberWidth::Six => 6,
        }
    }

    fn flag_bits(self) -> u8 {
        match self {
            PacketNumberWidth::One => 0x00,
            PacketNumberWidth::Two => 0x10,
            PacketNumberWidth::Four => 0x20,
            PacketNumberWidth::Six => 0x30,
        }
    }

    fn from_flags(flags: u8) -> PacketNumberWidth {
        match flags & PACKET_NUMBER_MASK {
            0x00 => PacketNumberWidth::One,
            0x10 => PacketNumberWidth::Two,
            0x20 => PacketNumberWidth::Four,
            _ => PacketNumberWidth::Six,
        }
    }

    /// Smallest width able to hold `value`.
    pub fn for_value(value: u64) -> Option<PacketNumberWidth> {
        [PacketNumberWidth::One, PacketNumberWidth::Two, PacketNumberWidth::Four, PacketNumberWidth::Six]
            .into_iter()
            .find(|w| value < 1u64 << (8 * w.octets()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketNumber {
    pub value: u64,
    pub width: PacketNumberWidth,
}

impl PacketNumber {
    pub fn new(value: u64, width: PacketNumberWidth) -> Result<PacketNumber, WireError> {
        if value >= 1u64 << (8 * width.octets()) {
            return Err(WireError::PacketNumberOverflow);
        }
        Ok(PacketNumber { value, width })
    }
}

/// The unencrypted public header that starts every gQUIC packet.
///
/// Whether a packet number follows is not signalled by the flags when the
/// width is one octet, so decoding takes that as context: client packets and
/// regular server packets carry one, version negotiation and public reset
/// packets do not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicHeader {
    pub reset: bool,
    pub connection_id: Option<ConnectionId>,
    pub version: Option<VersionTag>,
    pub packet_number: Option<PacketNumber>,
}

impl PublicHeader {
    pub fn flags(&self) -> u8 {
        let mut f = 0;
        if self.version.is_some() {
            f |= FLAG_VERSION;
        }
        if self.reset {
            f |= FLAG_RESET;
        }
        if self.connection_id.is_some() {
            f |= FLAG_CONNECTION_ID;
        }
        if let Some(pn) = self.packet_number {
            f |= pn.width.flag_bits();
        }
        f
    }

    pub fn encoded_len(&self) -> usize {
        1 + self.connection_id.map_or(0, |_| 8)
            + self.version.map_or(0, |_| 4)
            + self.packet_number.map_or(0, |pn| pn.width.octets())
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.flags());
        if let Some(cid) = self.connection_id {
            out.extend_from_slice(&cid.0.to_le_bytes());
        }
        if let Some(v) = self.version {
            out.extend_from_slice(v.as_bytes());
        }
        if let Some(pn) = self.packet_number {
            out.extend_from_slice(&pn.value.to_le_bytes()[..pn.width.octets()]);
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    /// Decodes a header from the front of `bytes`; returns it with its length.
    pub fn decode(bytes: &[u8], has_packet_number: bool) -> Result<(PublicHeader, usize), WireError> {
        let flags = *bytes.first().ok_or(WireError::Truncated)?;
        if flags & (FLAG_UNUSED | FLAG_MULTIPATH | FLAG_NONCE) != 0 {
            return Err(WireError::UnknownLayout("unsupported public flag bits"));
        }
        if !has_packet_number && flags & PACKET_NUMBER_MASK != 0 {
            return Err(WireError::UnknownLayout("packet number width set on packet without one"));
        }
        let mut at = 1;
        let mut take = |n: usize| -> Result<&[u8], WireError> {
            let s = bytes.get(at..at + n).ok_or(WireError::Truncated)?;
            at += n;
            Ok(s)
        };
        let connection_id = if flags & FLAG_CONNECTION_ID != 0 {
            Some(ConnectionId(u64::from_le_bytes(take(8)?.try_into().unwrap())))
        } else {
            None
        };
        let version = if flags & FLAG_VERSION != 0 {
            Some(VersionTag(take(4)?.try_into().unwrap()))
        } else {
            None
        };
        let packet_number = if has_packet_number {
            let width = PacketNumberWidth::from_flags(flags);
            let raw = take(width.octets())?;
            let mut buf = [0u8; 8];
            buf[..raw.len()].copy_from_slice(raw);
            Some(PacketNumber { value: u64::from_le_bytes(buf), width })
        } else {
            None
        };
        let header = PublicHeader { reset: flags & FLAG_RESET != 0, connection_id, version, packet_number };
        Ok((header, at))
    }
}
