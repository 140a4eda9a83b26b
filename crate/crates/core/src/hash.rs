//! Digests, fork identities and the single hashing interface point.
//!
//! Every content address in the simulator is produced through a
//! [`BlockHasher`]. The default is SHA-256; the replay module substitutes a
//! swizzled hasher without any other module knowing about it.

use std::fmt;
use std::str::FromStr;

use primitive_types::U256;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// A 32-byte cryptographic hash output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First eight hex characters, for tables.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }

    /// Big-endian interpretation as a VM word.
    pub fn to_word(&self) -> U256 {
        U256::from_big_endian(&self.0)
    }

    pub fn from_word(word: U256) -> Self {
        Digest(word_to_bytes(word))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.short())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid 32-byte hex string: {0}")]
pub struct ParseDigestError(String);

impl FromStr for Digest {
    type Err = ParseDigestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        let raw = hex::decode(s).map_err(|_| ParseDigestError(s.to_string()))?;
        let arr: [u8; 32] = raw
            .try_into()
            .map_err(|_| ParseDigestError(s.to_string()))?;
        Ok(Digest(arr))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Identity of a chain's hard-fork lineage.
///
/// Carried in every block, covered by transaction signatures, and exposed to
/// scripts through the `chainid` instruction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct ForkId(pub Digest);

impl ForkId {
    /// Derives a fork identity from a human-readable lineage name such as
    /// `"mainnet-v1"`.
    pub fn named(name: &str) -> Self {
        ForkId(tagged_hash(b"leashsim/fork-id", &[name.as_bytes()]))
    }

    pub fn to_word(&self) -> U256 {
        self.0.to_word()
    }
}

impl fmt::Debug for ForkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ForkId({})", self.0.short())
    }
}

/// The hashing interface point for block content addressing.
pub trait BlockHasher: fmt::Debug + Send + Sync {
    fn digest(&self, bytes: &[u8]) -> Digest;

    /// Short human-readable description, e.g. `sha256` or `sha256+swizzle[2]`.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sha256Hasher;

impl BlockHasher for Sha256Hasher {
    fn digest(&self, bytes: &[u8]) -> Digest {
        sha256(bytes)
    }

    fn describe(&self) -> String {
        "sha256".to_string()
    }
}

pub fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

/// Domain-separated hash: `sha256(len(tag) || tag || parts...)`.
pub fn tagged_hash(tag: &[u8], parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    hasher.update((tag.len() as u32).to_be_bytes());
    hasher.update(tag);
    for part in parts {
        hasher.update(part);
    }
    Digest(hasher.finalize().into())
}

pub fn word_to_bytes(word: U256) -> [u8; 32] {
    let mut out = [0u8; 32];
    word.to_big_endian(&mut out);
    out
}
