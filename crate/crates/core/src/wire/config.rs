use super::message::HandshakeMessage;
use super::tag::{tags, Tag, VersionTag};
use super::WireError;

/// Server config (SCFG) as carried inside a REJ.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ServerConfig {
    #[serde(with = "hex_array")]
    pub scid: [u8; 16],
    #[serde(with = "tag_list")]
    pub kexs: Vec<Tag>,
    #[serde(with = "tag_list")]
    pub aead: Vec<Tag>,
    #[serde(with = "hex_list")]
    pub pubs: Vec<Vec<u8>>,
    pub expy: u64,
    pub vers: Vec<VersionTag>,
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), WireError> {
        if self.pubs.len() != self.kexs.len() {
            return Err(WireError::InvalidConfig("PUBS count differs from KEXS count"));
        }
        if self.expy == 0 {
            return Err(WireError::InvalidConfig("EXPY must be positive"));
        }
        if self.pubs.iter().any(|p| p.len() > 0xff_ffff) {
            return Err(WireError::InvalidConfig("public value longer than 2^24-1"));
        }
        Ok(())
    }

    pub fn to_message(&self) -> Result<HandshakeMessage, WireError> {
        self.validate()?;
        let mut pubs = Vec::new();
        for p in &self.pubs {
            pubs.extend_from_slice(&(p.len() as u32).to_le_bytes()[..3]);
            pubs.extend_from_slice(p);
        }
        Ok(HandshakeMessage::from_entries(
            tags::SCFG,
            vec![
                (tags::SCID, self.scid.to_vec()),
                (tags::KEXS, concat_tags(&self.kexs)),
                (tags::AEAD, concat_tags(&self.aead)),
                (tags::PUBS, pubs),
                (tags::EXPY, self.expy.to_le_bytes().to_vec()),
                (tags::VER, self.vers.iter().flat_map(|v| v.0).collect()),
            ],
        ))
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        self.to_message()?.encode()
    }

    pub fn from_message(m: &HandshakeMessage) -> Result<ServerConfig, WireError> {
        if m.message_tag != tags::SCFG {
            return Err(WireError::InvalidConfig("message tag is not SCFG"));
        }
        let field = |t: Tag| m.get(t).ok_or(WireError::InvalidConfig("missing SCFG field"));
        let scid: [u8; 16] = field(tags::SCID)?
            .try_into()
            .map_err(|_| WireError::InvalidConfig("SCID is not 16 octets"))?;
        let kexs = split_tags(field(tags::KEXS)?)?;
        let aead = split_tags(field(tags::AEAD)?)?;
        let expy_raw = field(tags::EXPY)?;
        let expy = u64::from_le_bytes(
            expy_raw.try_into().map_err(|_| WireError::InvalidConfig("EXPY is not 8 octets"))?,
        );
        let vers = match m.get(tags::VER) {
            Some(v) => split_tags(v)?.into_iter().map(|t| VersionTag(t.0)).collect(),
            None => Vec::new(),
        };

        let mut pubs = Vec::new();
        let mut rest = field(tags::PUBS)?;
        while !rest.is_empty() {
            if rest.len() < 3 {
                return Err(WireError::InvalidConfig("truncated PUBS length prefix"));
            }
            let len = u32::from_le_bytes([rest[0], rest[1], rest[2], 0]) as usize;
            let value = rest.get(3..3 + len).ok_or(WireError::InvalidConfig("truncated PUBS value"))?;
            pubs.push(value.to_vec());
            rest = &rest[3 + len..];
        }

        let cfg = ServerConfig { scid, kexs, aead, pubs, expy, vers };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn decode(bytes: &[u8]) -> Result<ServerConfig, WireError> {
        ServerConfig::from_message(&HandshakeMessage::decode(bytes)?)
    }
}

fn concat_tags(ts: &[Tag]) -> Vec<u8> {
    ts.iter().flat_map(|t| t.0).collect()
}

fn split_tags(b: &[u8]) -> Result<Vec<Tag>, WireError> {
    if b.len() % 4 != 0 {
        return Err(WireError::InvalidConfig("tag list length not a multiple of 4"));
    }
    Ok(b.chunks_exact(4).map(|c| Tag(c.try_into().unwrap())).collect())
}

mod hex_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 16], D::Error> {
        let s = String::deserialize(d)?;
        let raw = hex::decode(s).map_err(serde::de::Error::custom)?;
        raw.try_into().map_err(|_| serde::de::Error::custom("expected 16 octets"))
    }
}

mod hex_list {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<u8>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(hex::encode))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<u8>>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.into_iter().map(|s| hex::decode(s).map_err(serde::de::Error::custom)).collect()
    }
}

mod tag_list {
    use super::Tag;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Tag], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|t| t.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Tag>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.into_iter()
            .map(|s| {
                if s.is_empty() || s.len() > 4 {
                    Err(serde::de::Error::custom(format!("bad tag {s:?}")))
                } else {
                    Ok(Tag::new(s.as_bytes()))
                }
            })
            .collect()
    }
}
