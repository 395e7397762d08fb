//! Canonical byte encoding.
//!
//! Integers are little-endian and fixed width. Every byte field, including
//! fixed-size digests, keys and signatures, carries a u32 length prefix.
//! Optional fields are a 0/1 tag followed by the value.

use crate::crypto::{Hash256, PublicKey, Signature};
use crate::error::CodecError;

#[derive(Default, Debug, Clone)]
pub struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    pub fn new() -> Self {
        Enc::default()
    }

    /// Start with a domain-separation tag.
    pub fn tagged(tag: &[u8]) -> Self {
        let mut e = Enc::new();
        e.bytes(tag);
        e
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
        self
    }

    pub fn hash(&mut self, h: &Hash256) -> &mut Self {
        self.bytes(&h.0)
    }

    pub fn pk(&mut self, pk: &PublicKey) -> &mut Self {
        self.bytes(&pk.0)
    }

    pub fn sig(&mut self, s: &Signature) -> &mut Self {
        self.bytes(&s.0)
    }

    pub fn opt<T>(&mut self, v: Option<&T>, f: impl FnOnce(&mut Self, &T)) -> &mut Self {
        match v {
            None => {
                self.u8(0);
            }
            Some(x) => {
                self.u8(1);
                f(self, x);
            }
        }
        self
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Dec<'a> {
    buf: &'a [u8],
}

impl<'a> Dec<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Dec { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::Eof);
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        self.bytes()?.try_into().map_err(|_| CodecError::Eof)
    }

    pub fn hash(&mut self) -> Result<Hash256, CodecError> {
        Ok(Hash256(self.fixed()?))
    }

    pub fn pk(&mut self) -> Result<PublicKey, CodecError> {
        Ok(PublicKey(self.fixed()?))
    }

    pub fn sig(&mut self) -> Result<Signature, CodecError> {
        Ok(Signature(self.fixed()?))
    }

    pub fn opt<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, CodecError>) -> Result<Option<T>, CodecError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(f(self)?)),
            t => Err(CodecError::Tag(t)),
        }
    }

    pub fn finish(self) -> Result<(), CodecError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(CodecError::Trailing)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian_and_length_prefixed() {
        let mut e = Enc::new();
        e.u32(1).bytes(b"ab").opt(Some(&7u64), |e, v| {
            e.u64(*v);
        });
        assert_eq!(
            e.as_slice(),
            &[1, 0, 0, 0, 2, 0, 0, 0, b'a', b'b', 1, 7, 0, 0, 0, 0, 0, 0, 0]
        );
        let buf = e.finish();
        let mut d = Dec::new(&buf);
        assert_eq!(d.u32().unwrap(), 1);
        assert_eq!(d.bytes().unwrap(), b"ab");
        assert_eq!(d.opt(|d| d.u64()).unwrap(), Some(7));
        d.finish().unwrap();
    }
}

/// Serde adapter rendering byte vectors as hex strings in dumps.
pub mod serde_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
