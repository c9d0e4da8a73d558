use super::tag::Tag;
use super::WireError;

/// A tag-value crypto handshake message (CHLO, REJ, SCFG, PRST, ...).
///
/// Entries are kept in wire order. A well-formed message has strictly
/// ascending entry tags; `encode` refuses anything else so that every encoded
/// message has exactly one byte representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeMessage {
    pub message_tag: Tag,
    pub entries: Vec<(Tag, Vec<u8>)>,
}

/// Size of the fixed message prefix: tag, pair count, two zero octets.
pub const MESSAGE_HEADER_LEN: usize = 8;
/// Size of one entry in the index that precedes the value region.
pub const INDEX_ENTRY_LEN: usize = 8;

impl HandshakeMessage {
    pub fn new(message_tag: Tag) -> HandshakeMessage {
        HandshakeMessage { message_tag, entries: Vec::new() }
    }

    /// Builds a message from unordered entries, sorting them by tag.
    pub fn from_entries(message_tag: Tag, mut entries: Vec<(Tag, Vec<u8>)>) -> HandshakeMessage {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        HandshakeMessage { message_tag, entries }
    }

    /// Inserts or replaces a value, keeping entries sorted.
    pub fn set(&mut self, tag: Tag, value: impl Into<Vec<u8>>) {
        let value = value.into();
        match self.entries.binary_search_by(|(t, _)| t.cmp(&tag)) {
            Ok(i) => self.entries[i].1 = value,
            Err(i) => self.entries.insert(i, (tag, value)),
        }
    }

    pub fn get(&self, tag: Tag) -> Option<&[u8]> {
        self.entries.iter().find(|(t, _)| *t == tag).map(|(_, v)| v.as_slice())
    }

    pub fn tags(&self) -> impl Iterator<Item = Tag> + '_ {
        self.entries.iter().map(|(t, _)| *t)
    }

    pub fn encoded_len(&self) -> usize {
        MESSAGE_HEADER_LEN
            + INDEX_ENTRY_LEN * self.entries.len()
            + self.entries.iter().map(|(_, v)| v.len()).sum::<usize>()
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) -> Result<(), WireError> {
        encode_handshake_message(self, out)
    }

    pub fn decode(bytes: &[u8]) -> Result<HandshakeMessage, WireError> {
        decode_handshake_message(bytes)
    }
}

/// Computes cumulative end offsets for a list of value lengths.
pub(crate) fn end_offsets(lengths: impl IntoIterator<Item = usize>) -> Result<Vec<u32>, WireError> {
    let mut total: u64 = 0;
    let mut out = Vec::new();
    for len in lengths {
        total += len as u64;
        if total > u32::MAX as u64 {
            return Err(WireError::OversizeValue);
        }
        out.push(total as u32);
    }
    Ok(out)
}

pub fn encode_handshake_message(m: &HandshakeMessage, out: &mut Vec<u8>) -> Result<(), WireError> {
    if m.entries.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(WireError::UnsortedTags);
    }
    let count: u16 = m.entries.len().try_into().map_err(|_| WireError::TooManyEntries)?;
    let offsets = end_offsets(m.entries.iter().map(|(_, v)| v.len()))?;

    out.extend_from_slice(m.message_tag.as_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&[0, 0]);
    for ((tag, _), end) in m.entries.iter().zip(&offsets) {
        out.extend_from_slice(tag.as_bytes());
        out.extend_from_slice(&end.to_le_bytes());
    }
    for (_, v) in &m.entries {
        out.extend_from_slice(v);
    }
    Ok(())
}

/// Decodes a message that must occupy `bytes` exactly.
pub fn decode_handshake_message(bytes: &[u8]) -> Result<HandshakeMessage, WireError> {
    let (m, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(WireError::UnknownLayout("trailing bytes after message"));
    }
    Ok(m)
}

/// Decodes one message from the front of `bytes`, returning the consumed length.
pub fn decode_prefix(bytes: &[u8]) -> Result<(HandshakeMessage, usize), WireError> {
    if bytes.len() < MESSAGE_HEADER_LEN {
        return Err(WireError::Truncated);
    }
    let message_tag = Tag([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let count = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(WireError::UnknownLayout("nonzero padding after pair count"));
    }
    let index_end = MESSAGE_HEADER_LEN + INDEX_ENTRY_LEN * count;
    if bytes.len() < index_end {
        return Err(WireError::Truncated);
    }

    let mut index = Vec::with_capacity(count);
    let mut prev_end = 0u32;
    let mut prev_tag: Option<Tag> = None;
    for i in 0..count {
        let at = MESSAGE_HEADER_LEN + INDEX_ENTRY_LEN * i;
        let tag = Tag([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
        let end = u32::from_le_bytes([bytes[at + 4], bytes[at + 5], bytes[at + 6], bytes[at + 7]]);
        if end < prev_end {
            return Err(WireError::NonMonotonicOffsets);
        }
        if prev_tag.is_some_and(|p| p >= tag) {
            return Err(WireError::UnsortedTags);
        }
        index.push((tag, prev_end as usize, end as usize));
        prev_end = end;
        prev_tag = Some(tag);
    }

    let values = &bytes[index_end..];
    let value_len = prev_end as usize;
    if values.len() < value_len {
        return Err(WireError::Truncated);
    }
    let entries = index
        .into_iter()
        .map(|(tag, start, end)| (tag, values[start..end].to_vec()))
        .collect();
    Ok((HandshakeMessage { message_tag, entries }, index_end + value_len))
}
