use super::header::{ConnectionId, PacketNumber, PacketNumberWidth, PublicHeader};
use super::message::{HandshakeMessage, INDEX_ENTRY_LEN};
use super::tag::{tags, Tag, VersionTag};
use super::WireError;

/// Largest UDP payload a probe may be padded to.
pub const MAX_PAD_TO: usize = 1350;
pub const DEFAULT_PAD_TO: usize = 1200;

/// Server reply listing the versions it supports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionNegotiationPacket {
    pub connection_id: ConnectionId,
    pub versions: Vec<VersionTag>,
}

impl VersionNegotiationPacket {
    fn header(&self) -> PublicHeader {
        PublicHeader {
            reset: false,
            connection_id: Some(self.connection_id),
            // The version-present flag marks negotiation on server packets;
            // the first advertised version occupies the header version slot.
            version: self.versions.first().copied(),
            packet_number: None,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        if self.versions.is_empty() {
            return Err(WireError::EmptyVersionList);
        }
        let mut out = Vec::with_capacity(9 + 4 * self.versions.len());
        self.header().encode_into(&mut out);
        for v in &self.versions[1..] {
            out.extend_from_slice(v.as_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<VersionNegotiationPacket, WireError> {
        let (h, at) = PublicHeader::decode(bytes, false)?;
        if h.reset || h.version.is_none() {
            return Err(WireError::UnknownLayout("not a version negotiation packet"));
        }
        let connection_id = h.connection_id.ok_or(WireError::UnknownLayout("negotiation without connection id"))?;
        let rest = &bytes[at..];
        if rest.len() % 4 != 0 {
            return Err(WireError::Truncated);
        }
        let mut versions = Vec::with_capacity(1 + rest.len() / 4);
        versions.extend(h.version);
        versions.extend(rest.chunks_exact(4).map(|c| VersionTag(c.try_into().unwrap())));
        Ok(VersionNegotiationPacket { connection_id, versions })
    }
}

/// Stateless abort. `body` is `None` when the PRST message could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicResetPacket {
    pub connection_id: ConnectionId,
    pub body: Option<HandshakeMessage>,
}

impl PublicResetPacket {
    pub fn new(connection_id: ConnectionId, nonce: u64, rejected_packet_number: u64) -> PublicResetPacket {
        PublicResetPacket {
            connection_id,
            body: Some(HandshakeMessage::from_entries(
                tags::PRST,
                vec![
                    (tags::RNON, nonce.to_le_bytes().to_vec()),
                    (tags::RSEQ, rejected_packet_number.to_le_bytes().to_vec()),
                ],
            )),
        }
    }

    pub fn body_valid(&self) -> bool {
        self.body.is_some()
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let h = PublicHeader { reset: true, connection_id: Some(self.connection_id), version: None, packet_number: None };
        let mut out = h.encode();
        if let Some(body) = &self.body {
            if body.message_tag != tags::PRST {
                return Err(WireError::UnknownLayout("public reset body must be PRST"));
            }
            body.encode_into(&mut out)?;
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<PublicResetPacket, WireError> {
        let (h, at) = PublicHeader::decode(bytes, false)?;
        if !h.reset || h.version.is_some() {
            return Err(WireError::UnknownLayout("not a public reset packet"));
        }
        let connection_id = h.connection_id.ok_or(WireError::UnknownLayout("reset without connection id"))?;
        let body = HandshakeMessage::decode(&bytes[at..]).ok().filter(|m| m.message_tag == tags::PRST);
        Ok(PublicResetPacket { connection_id, body })
    }
}

/// A regular packet carrying one handshake message directly after the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakePacket {
    pub header: PublicHeader,
    pub message: HandshakeMessage,
}

impl HandshakePacket {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        if self.header.reset || self.header.packet_number.is_none() {
            return Err(WireError::UnknownLayout("handshake packet needs a packet number and no reset flag"));
        }
        let mut out = Vec::with_capacity(self.header.encoded_len() + self.message.encoded_len());
        self.header.encode_into(&mut out);
        self.message.encode_into(&mut out)?;
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<HandshakePacket, WireError> {
        let (header, at) = PublicHeader::decode(bytes, true)?;
        if header.reset {
            return Err(WireError::UnknownLayout("reset flag on handshake packet"));
        }
        let message = HandshakeMessage::decode(&bytes[at..])?;
        Ok(HandshakePacket { header, message })
    }
}

/// Every server datagram falls into exactly one of these classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerResponse {
    VersionNegotiation(VersionNegotiationPacket),
    PublicReset(PublicResetPacket),
    Handshake(HandshakePacket),
    Malformed,
}

impl ServerResponse {
    pub fn kind(&self) -> &'static str {
        match self {
            ServerResponse::VersionNegotiation(_) => "version_negotiation",
            ServerResponse::PublicReset(_) => "public_reset",
            ServerResponse::Handshake(_) => "handshake",
            ServerResponse::Malformed => "malformed",
        }
    }

    pub fn connection_id(&self) -> Option<ConnectionId> {
        match self {
            ServerResponse::VersionNegotiation(p) => Some(p.connection_id),
            ServerResponse::PublicReset(p) => Some(p.connection_id),
            ServerResponse::Handshake(p) => p.header.connection_id,
            ServerResponse::Malformed => None,
        }
    }
}

/// Classifies a datagram received from a server. Never fails.
pub fn decode_server_response(bytes: &[u8]) -> ServerResponse {
    let Some(&flags) = bytes.first() else {
        return ServerResponse::Malformed;
    };
    let parsed = if flags & super::header::FLAG_RESET != 0 {
        PublicResetPacket::decode(bytes).map(ServerResponse::PublicReset)
    } else if flags & super::header::FLAG_VERSION != 0 {
        VersionNegotiationPacket::decode(bytes).map(ServerResponse::VersionNegotiation)
    } else {
        HandshakePacket::decode(bytes).map(ServerResponse::Handshake)
    };
    parsed.unwrap_or(ServerResponse::Malformed)
}

/// Decodes a client packet (header with version and packet number, then a
/// handshake message).
pub fn decode_client_packet(bytes: &[u8]) -> Result<HandshakePacket, WireError> {
    HandshakePacket::decode(bytes)
}

/// Builds a padded client hello packet.
///
/// `extra` entries (SNI, STK, SCID, ...) are merged with the mandatory VER and
/// PAD tags; PAD is sized so the datagram is exactly `pad_to` octets.
pub fn build_chlo(
    cid: ConnectionId,
    version: VersionTag,
    pad_to: usize,
    extra: &[(Tag, Vec<u8>)],
) -> Result<Vec<u8>, WireError> {
    if pad_to > MAX_PAD_TO {
        return Err(WireError::PadTooLarge(pad_to));
    }
    let header = PublicHeader {
        reset: false,
        connection_id: Some(cid),
        version: Some(version),
        packet_number: Some(PacketNumber::new(1, PacketNumberWidth::One)?),
    };
    let mut msg = HandshakeMessage::new(tags::CHLO);
    for (t, v) in extra {
        msg.set(*t, v.clone());
    }
    msg.set(tags::VER, version.as_bytes().to_vec());
    if msg.get(tags::PAD).is_none() {
        msg.set(tags::PAD, Vec::new());
    }
    let without_pad = header.encoded_len() + msg.encoded_len() - msg.get(tags::PAD).map_or(0, <[u8]>::len);
    if without_pad > pad_to {
        return Err(WireError::PadTooSmall { needed: without_pad, pad_to });
    }
    msg.set(tags::PAD, vec![b'-'; pad_to - without_pad]);
    debug_assert_eq!(header.encoded_len() + msg.encoded_len(), pad_to);
    HandshakePacket { header, message: msg }.encode()
}

/// Builds the single-packet scan probe: a CHLO offering `version`, optionally
/// naming `sni`, padded to `pad_to` octets.
pub fn build_probe_chlo(
    cid: ConnectionId,
    version: VersionTag,
    pad_to: usize,
    sni: Option<&str>,
) -> Result<Vec<u8>, WireError> {
    let mut extra = vec![(tags::PDMD, tags::X509.0.to_vec())];
    if let Some(name) = sni.filter(|s| !s.is_empty()) {
        extra.push((tags::SNI, name.as_bytes().to_vec()));
    }
    build_chlo(cid, version, pad_to, &extra)
}

/// Smallest probe the builder can produce for the given SNI.
pub fn min_probe_len(sni: Option<&str>) -> usize {
    let entries = 3 + usize::from(sni.is_some_and(|s| !s.is_empty()));
    14 + 8 + INDEX_ENTRY_LEN * entries + 4 + 4 + sni.map_or(0, str::len)
}
