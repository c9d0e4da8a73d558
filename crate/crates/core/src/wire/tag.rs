use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A four-octet tag as used by the crypto handshake messages.
///
/// Tags shorter than four ASCII characters are zero padded on the right, so
/// `Tag::new(b"SNI")` is the octets `53 4e 49 00`. Ordering follows the
/// little-endian `u32` interpretation, which is the order entries must appear
/// in on the wire.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag(pub [u8; 4]);

impl Tag {
    pub const fn new(name: &[u8]) -> Tag {
        let mut out = [0u8; 4];
        let mut i = 0;
        while i < name.len() && i < 4 {
            out[i] = name[i];
            i += 1;
        }
        Tag(out)
    }

    pub const fn from_u32(v: u32) -> Tag {
        Tag(v.to_le_bytes())
    }

    pub const fn as_u32(self) -> u32 {
        u32::from_le_bytes(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; 4] {
        &self.0
    }
}

impl PartialOrd for Tag {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Tag {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_u32().cmp(&other.as_u32())
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in self.0.iter() {
            match b {
                0 => {}
                0x20..=0x7e => write!(f, "{}", b as char)?,
                _ => write!(f, "\\x{b:02x}")?,
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag({self})")
    }
}

pub mod tags {
    use super::Tag;

    pub const CHLO: Tag = Tag::new(b"CHLO");
    pub const REJ: Tag = Tag::new(b"REJ");
    pub const SHLO: Tag = Tag::new(b"SHLO");
    pub const SCFG: Tag = Tag::new(b"SCFG");
    pub const PRST: Tag = Tag::new(b"PRST");

    pub const SNI: Tag = Tag::new(b"SNI");
    pub const VER: Tag = Tag::new(b"VER");
    pub const PDMD: Tag = Tag::new(b"PDMD");
    pub const PAD: Tag = Tag::new(b"PAD");
    pub const SCID: Tag = Tag::new(b"SCID");
    pub const STK: Tag = Tag::new(b"STK");
    pub const KEXS: Tag = Tag::new(b"KEXS");
    pub const AEAD: Tag = Tag::new(b"AEAD");
    pub const PUBS: Tag = Tag::new(b"PUBS");
    pub const EXPY: Tag = Tag::new(b"EXPY");
    pub const CRT: Tag = Tag::new(b"CRT");
    pub const PROF: Tag = Tag::new(b"PROF");

    // public reset body
    pub const RNON: Tag = Tag::new(b"RNON");
    pub const RSEQ: Tag = Tag::new(b"RSEQ");

    // common algorithm identifiers carried inside SCFG
    pub const C255: Tag = Tag::new(b"C255");
    pub const P256: Tag = Tag::new(b"P256");
    pub const AESG: Tag = Tag::new(b"AESG");
    pub const CC20: Tag = Tag::new(b"CC20");
    pub const X509: Tag = Tag::new(b"X509");
}

/// A gQUIC version tag such as `Q035`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VersionTag(pub [u8; 4]);

/// Default tag placed in scan probes. It is printable but does not match the
/// `Q` + three digits pattern used by deployed versions.
pub const DEFAULT_PROBE_VERSION: VersionTag = VersionTag(*b"?123");

/// Version offered by the handshake client unless configured otherwise.
pub const DEFAULT_CLIENT_VERSION: VersionTag = VersionTag(*b"Q035");

impl VersionTag {
    pub fn new(bytes: [u8; 4]) -> VersionTag {
        VersionTag(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 4] {
        &self.0
    }

    /// True iff the tag is `Q` followed by three ASCII digits.
    pub fn is_recognized(&self) -> bool {
        self.0[0] == b'Q' && self.0[1..].iter().all(u8::is_ascii_digit)
    }

    /// Numeric part of a recognized tag (`Q039` -> 39).
    pub fn number(&self) -> Option<u16> {
        if !self.is_recognized() {
            return None;
        }
        Some(self.0[1..].iter().fold(0u16, |acc, d| acc * 10 + (d - b'0') as u16))
    }

    pub fn from_number(n: u16) -> Option<VersionTag> {
        if n > 999 {
            return None;
        }
        let s = format!("Q{n:03}");
        Some(VersionTag(s.as_bytes().try_into().ok()?))
    }
}

/// Builds a probe tag that deployed servers will not accept.
///
/// `seed` selects among printable variants; every output starts with a
/// non-`Q` printable character, so `is_recognized()` is always false.
pub fn make_unsupported_version(seed: u32) -> VersionTag {
    if seed == 0 {
        return DEFAULT_PROBE_VERSION;
    }
    let digits = seed % 1000;
    let lead = b"?!#%&*"[(seed / 1000) as usize % 6];
    let d = format!("{digits:03}");
    let d = d.as_bytes();
    VersionTag([lead, d[0], d[1], d[2]])
}

impl fmt::Display for VersionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|b| (0x20..=0x7e).contains(b)) {
            f.write_str(std::str::from_utf8(&self.0).unwrap_or("????"))
        } else {
            write!(f, "0x{}", hex::encode(self.0))
        }
    }
}

impl fmt::Debug for VersionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VersionTag({self})")
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid version tag {0:?}: expected 4 printable octets or 0x-prefixed hex")]
pub struct ParseVersionError(pub String);

impl std::str::FromStr for VersionTag {
    type Err = ParseVersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(h) = s.strip_prefix("0x") {
            let raw = hex::decode(h).map_err(|_| ParseVersionError(s.to_string()))?;
            let arr: [u8; 4] = raw.try_into().map_err(|_| ParseVersionError(s.to_string()))?;
            return Ok(VersionTag(arr));
        }
        let arr: [u8; 4] = s
            .as_bytes()
            .try_into()
            .map_err(|_| ParseVersionError(s.to_string()))?;
        Ok(VersionTag(arr))
    }
}

impl Serialize for VersionTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VersionTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
