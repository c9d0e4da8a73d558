//! Certificate chain blobs carried in the `CRT` tag of a REJ.
//!
//! Layout: a list of one-octet entry types terminated by `0x00`, then the
//! payload for the `compressed` entries, if any.
//!
//! | type | meaning | inline data |
//! |------|---------|-------------|
//! | 0x01 | compressed | none (certificate lives in the zlib block) |
//! | 0x02 | cached | 8-octet hash |
//! | 0x03 | common set | 8-octet set hash, 4-octet LE index |
//! | 0x04 | uncompressed | 4-octet LE length, DER |
//!
//! The zlib block is a 4-octet LE uncompressed length followed by a zlib
//! stream whose content is `len: u32 LE, DER` per compressed entry. Deployed
//! servers compress with a shared preset dictionary; such streams (FDICT set)
//! and cached/common references are reported as [`CrtPayload::UnsupportedCompression`].

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;

use super::WireError;

const ENTRY_END: u8 = 0x00;
const ENTRY_COMPRESSED: u8 = 0x01;
const ENTRY_CACHED: u8 = 0x02;
const ENTRY_COMMON: u8 = 0x03;
const ENTRY_UNCOMPRESSED: u8 = 0x04;

const MAX_UNCOMPRESSED: usize = 1 << 20;

/// Ordered DER certificates, leaf first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CertificateChain {
    pub entries: Vec<Vec<u8>>,
}

impl CertificateChain {
    pub fn new(entries: Vec<Vec<u8>>) -> CertificateChain {
        CertificateChain { entries }
    }

    pub fn leaf(&self) -> Option<&[u8]> {
        self.entries.first().map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks that every entry parses as an X.509 certificate.
    pub fn check_der(&self) -> Result<(), WireError> {
        if self.entries.is_empty() {
            return Err(WireError::BadCertificateBlob("empty chain"));
        }
        for e in &self.entries {
            match x509_parser::parse_x509_certificate(e) {
                Ok((rest, _)) if rest.is_empty() => {}
                _ => return Err(WireError::BadCertificateBlob("entry is not a DER certificate")),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrtEncoding {
    Zlib,
    Uncompressed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CrtPayload {
    Chain(CertificateChain),
    UnsupportedCompression,
}

pub fn encode_crt(chain: &CertificateChain, encoding: CrtEncoding) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::new();
    match encoding {
        CrtEncoding::Uncompressed => {
            for der in &chain.entries {
                let len: u32 = der.len().try_into().map_err(|_| WireError::OversizeValue)?;
                out.push(ENTRY_UNCOMPRESSED);
                out.extend_from_slice(&len.to_le_bytes());
                out.extend_from_slice(der);
            }
            out.push(ENTRY_END);
        }
        CrtEncoding::Zlib => {
            out.extend(std::iter::repeat(ENTRY_COMPRESSED).take(chain.entries.len()));
            out.push(ENTRY_END);
            if !chain.entries.is_empty() {
                let mut plain = Vec::new();
                for der in &chain.entries {
                    let len: u32 = der.len().try_into().map_err(|_| WireError::OversizeValue)?;
                    plain.extend_from_slice(&len.to_le_bytes());
                    plain.extend_from_slice(der);
                }
                let plain_len: u32 = plain.len().try_into().map_err(|_| WireError::OversizeValue)?;
                out.extend_from_slice(&plain_len.to_le_bytes());
                let mut z = ZlibEncoder::new(out, Compression::default());
                z.write_all(&plain).expect("writing to a Vec cannot fail");
                out = z.finish().expect("writing to a Vec cannot fail");
            }
        }
    }
    Ok(out)
}

enum Slot {
    Compressed,
    Inline(Vec<u8>),
}

pub fn decode_crt(bytes: &[u8]) -> Result<CrtPayload, WireError> {
    let bad = WireError::BadCertificateBlob;
    let mut slots = Vec::new();
    let mut unsupported = false;
    let mut at = 0;
    loop {
        let ty = *bytes.get(at).ok_or(bad("missing entry list terminator"))?;
        at += 1;
        match ty {
            ENTRY_END => break,
            ENTRY_COMPRESSED => slots.push(Slot::Compressed),
            ENTRY_CACHED => {
                bytes.get(at..at + 8).ok_or(WireError::Truncated)?;
                at += 8;
                unsupported = true;
            }
            ENTRY_COMMON => {
                bytes.get(at..at + 12).ok_or(WireError::Truncated)?;
                at += 12;
                unsupported = true;
            }
            ENTRY_UNCOMPRESSED => {
                let len_raw = bytes.get(at..at + 4).ok_or(WireError::Truncated)?;
                let len = u32::from_le_bytes(len_raw.try_into().unwrap()) as usize;
                let der = bytes.get(at + 4..at + 4 + len).ok_or(WireError::Truncated)?;
                slots.push(Slot::Inline(der.to_vec()));
                at += 4 + len;
            }
            _ => return Err(bad("unknown entry type")),
        }
    }
    let rest = &bytes[at..];
    let compressed = slots.iter().filter(|s| matches!(s, Slot::Compressed)).count();

    if compressed == 0 {
        if !rest.is_empty() {
            return Err(bad("trailing data after entry list"));
        }
        if unsupported {
            return Ok(CrtPayload::UnsupportedCompression);
        }
        return Ok(CrtPayload::Chain(CertificateChain::new(
            slots
                .into_iter()
                .map(|s| match s {
                    Slot::Inline(d) => d,
                    Slot::Compressed => unreachable!(),
                })
                .collect(),
        )));
    }

    if rest.len() < 6 {
        return Err(WireError::Truncated);
    }
    let declared = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let stream = &rest[4..];
    // zlib header: FLG bit 5 announces a preset dictionary
    if stream[1] & 0x20 != 0 || unsupported {
        return Ok(CrtPayload::UnsupportedCompression);
    }
    if declared > MAX_UNCOMPRESSED {
        return Err(bad("declared uncompressed length too large"));
    }
    let mut plain = Vec::with_capacity(declared);
    ZlibDecoder::new(stream)
        .take(MAX_UNCOMPRESSED as u64 + 1)
        .read_to_end(&mut plain)
        .map_err(|_| bad("zlib stream corrupt"))?;
    if plain.len() != declared {
        return Err(bad("uncompressed length mismatch"));
    }

    let mut packed = Vec::with_capacity(compressed);
    let mut p = plain.as_slice();
    for _ in 0..compressed {
        if p.len() < 4 {
            return Err(bad("truncated compressed entry"));
        }
        let len = u32::from_le_bytes(p[..4].try_into().unwrap()) as usize;
        let der = p.get(4..4 + len).ok_or(bad("truncated compressed entry"))?;
        packed.push(der.to_vec());
        p = &p[4 + len..];
    }
    if !p.is_empty() {
        return Err(bad("extra data in compressed block"));
    }
    let mut packed = packed.into_iter();
    let entries = slots
        .into_iter()
        .map(|s| match s {
            Slot::Inline(d) => d,
            Slot::Compressed => packed.next().expect("count checked above"),
        })
        .collect();
    Ok(CrtPayload::Chain(CertificateChain::new(entries)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain() -> CertificateChain {
        CertificateChain::new(vec![vec![0x30, 1, 2, 3], vec![0x30; 300]])
    }

    #[test]
    fn both_encodings_round_trip() {
        for enc in [CrtEncoding::Zlib, CrtEncoding::Uncompressed] {
            let b = encode_crt(&chain(), enc).unwrap();
            assert_eq!(decode_crt(&b).unwrap(), CrtPayload::Chain(chain()), "{enc:?}");
        }
    }

    #[test]
    fn preset_dictionary_is_unsupported() {
        let mut b = encode_crt(&chain(), CrtEncoding::Zlib).unwrap();
        // entry list is 3 octets, length 4 octets, then CMF/FLG
        let flg = 3 + 4 + 1;
        b[flg] |= 0x20;
        // keep the FCHECK mod-31 rule intact
        let cmf = b[flg - 1] as u16;
        let mut f = b[flg] & 0xe0;
        while (cmf * 256 + f as u16) % 31 != 0 {
            f += 1;
        }
        b[flg] = f;
        assert_eq!(decode_crt(&b).unwrap(), CrtPayload::UnsupportedCompression);
    }

    #[test]
    fn cached_and_common_entries_are_unsupported() {
        let mut b = vec![ENTRY_CACHED];
        b.extend_from_slice(&[1; 8]);
        b.push(ENTRY_END);
        assert_eq!(decode_crt(&b).unwrap(), CrtPayload::UnsupportedCompression);
        let mut b = vec![ENTRY_COMMON];
        b.extend_from_slice(&[1; 12]);
        b.push(ENTRY_END);
        assert_eq!(decode_crt(&b).unwrap(), CrtPayload::UnsupportedCompression);
    }

    #[test]
    fn bad_blobs() {
        assert!(decode_crt(&[]).is_err());
        assert!(decode_crt(&[0x09, 0x00]).is_err());
        assert!(decode_crt(&[ENTRY_UNCOMPRESSED, 10, 0, 0, 0, 1, 2]).is_err());
        let mut b = encode_crt(&chain(), CrtEncoding::Zlib).unwrap();
        b.truncate(b.len() - 3);
        assert!(decode_crt(&b).is_err());
    }

    #[test]
    fn check_der_rejects_garbage() {
        assert!(chain().check_der().is_err());
        assert!(CertificateChain::default().check_der().is_err());
    }

    proptest! {
        #[test]
        fn crt_round_trip(entries in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..64), 0..5), zlib in any::<bool>()) {
            let c = CertificateChain::new(entries);
            let enc = if zlib { CrtEncoding::Zlib } else { CrtEncoding::Uncompressed };
            let b = encode_crt(&c, enc).unwrap();
            prop_assert_eq!(decode_crt(&b).unwrap(), CrtPayload::Chain(c));
        }

        #[test]
        fn crt_decode_total(b in prop::collection::vec(any::<u8>(), 0..128)) {
            let _ = decode_crt(&b);
        }
    }
}
