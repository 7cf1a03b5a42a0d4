//! Canonical byte layout shared by everything that is hashed, signed or
//! persisted: fields in declared order, integers as 64-bit big-endian,
//! variable byte strings behind a 32-bit big-endian length prefix, variant
//! and list prefixes likewise. Digests are written raw (fixed 32 bytes).

use thiserror::Error;

use crate::crypto::{Digest, PublicKey, Signature, DIGEST_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at byte {0}")]
    UnexpectedEnd(usize),
    #[error("unknown tag {tag} for {what}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("invalid value for {what}")]
    Invalid { what: &'static str },
    #[error("trailing bytes after value")]
    TrailingBytes,
    #[error("byte string is not valid utf-8")]
    BadUtf8,
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn peek(&self) -> &[u8] {
        &self.buf
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_len(&mut self, len: usize) {
        let len = u32::try_from(len).expect("length exceeds u32 range");
        self.buf.extend_from_slice(&len.to_be_bytes());
    }

    pub fn put_bytes(&mut self, v: &[u8]) {
        self.put_len(v.len());
        self.buf.extend_from_slice(v);
    }

    pub fn put_str(&mut self, v: &str) {
        self.put_bytes(v.as_bytes());
    }

    pub fn put_digest(&mut self, d: &Digest) {
        self.buf.extend_from_slice(&d.0);
    }

    pub fn put_public_key(&mut self, k: &PublicKey) {
        self.put_bytes(&k.0);
    }

    pub fn put_signature(&mut self, s: &Signature) {
        self.put_bytes(&s.0);
    }

    /// Raw append without a length prefix; for pre-encoded sub-values.
    pub fn put_raw(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    /// Succeeds only when the whole input has been consumed.
    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes)
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::UnexpectedEnd(self.pos));
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn get_u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn get_bool(&mut self) -> Result<bool, DecodeError> {
        match self.get_u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DecodeError::Invalid { what: "bool" }),
        }
    }

    pub fn get_u64(&mut self) -> Result<u64, DecodeError> {
        let bytes: [u8; 8] = self.take(8)?.try_into().expect("slice length checked");
        Ok(u64::from_be_bytes(bytes))
    }

    pub fn get_len(&mut self) -> Result<usize, DecodeError> {
        let bytes: [u8; 4] = self.take(4)?.try_into().expect("slice length checked");
        let len = u32::from_be_bytes(bytes) as usize;
        if len > self.remaining() {
            return Err(DecodeError::UnexpectedEnd(self.pos));
        }
        Ok(len)
    }

    pub fn get_bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.get_len()?;
        Ok(self.take(len)?.to_vec())
    }

    pub fn get_str(&mut self) -> Result<String, DecodeError> {
        String::from_utf8(self.get_bytes()?).map_err(|_| DecodeError::BadUtf8)
    }

    pub fn get_digest(&mut self) -> Result<Digest, DecodeError> {
        let bytes: [u8; DIGEST_LEN] = self
            .take(DIGEST_LEN)?
            .try_into()
            .expect("slice length checked");
        Ok(Digest(bytes))
    }

    pub fn get_public_key(&mut self) -> Result<PublicKey, DecodeError> {
        Ok(PublicKey(self.get_bytes()?))
    }

    pub fn get_signature(&mut self) -> Result<Signature, DecodeError> {
        Ok(Signature(self.get_bytes()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_primitives() {
        let mut w = Writer::new();
        w.put_u8(7);
        w.put_u64(u64::MAX);
        w.put_bool(true);
        w.put_bytes(b"abc");
        w.put_str("drone");
        w.put_digest(&Digest([9u8; 32]));
        let bytes = w.into_bytes();

        let mut r = Reader::new(&bytes);
        assert_eq!(r.get_u8().unwrap(), 7);
        assert_eq!(r.get_u64().unwrap(), u64::MAX);
        assert!(r.get_bool().unwrap());
        assert_eq!(r.get_bytes().unwrap(), b"abc");
        assert_eq!(r.get_str().unwrap(), "drone");
        assert_eq!(r.get_digest().unwrap(), Digest([9u8; 32]));
        r.finish().unwrap();
    }

    #[test]
    fn big_endian_layout() {
        let mut w = Writer::new();
        w.put_u64(1);
        w.put_bytes(b"x");
        let bytes = w.into_bytes();
        assert_eq!(bytes, [0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1, b'x']);
    }

    #[test]
    fn truncated_input_errors() {
        let mut r = Reader::new(&[0, 0]);
        assert!(matches!(r.get_u64(), Err(DecodeError::UnexpectedEnd(_))));

        // Length prefix claiming more data than exists must not allocate.
        let mut r = Reader::new(&[0xff, 0xff, 0xff, 0xff, 1]);
        assert!(matches!(r.get_bytes(), Err(DecodeError::UnexpectedEnd(_))));
    }

    #[test]
    fn trailing_bytes_detected() {
        let mut w = Writer::new();
        w.put_u8(1);
        let mut bytes = w.into_bytes();
        bytes.push(0);
        let mut r = Reader::new(&bytes);
        r.get_u8().unwrap();
        assert_eq!(r.finish(), Err(DecodeError::TrailingBytes));
    }

    #[test]
    fn invalid_bool_rejected() {
        let mut r = Reader::new(&[2]);
        assert!(matches!(r.get_bool(), Err(DecodeError::Invalid { .. })));
    }
}
