//! Binary wire format.
//!
//! A frame is `b"PF"`, a version byte (1), a message-type byte, the body
//! length as a big-endian `u32`, then the body. A body is a sequence of
//! fields, each `tag: u8`, `len: u32` (big-endian), `len` value bytes.
//! Integers are big-endian, `f64` is its IEEE-754 bit pattern big-endian,
//! strings are UTF-8, and nested records are bodies themselves. Fields appear
//! in a fixed order per record; decoders reject anything else.

use thiserror::Error;

use crate::challenge::{ChallengeEntry, ChallengeSet};

use super::crypto::{Certificate, Ciphertext, KeyId, PublicKey, Signature};

pub const MAGIC: [u8; 2] = *b"PF";
pub const VERSION: u8 = 1;

pub mod msg_type {
    pub const JOIN_REQUEST: u8 = 1;
    pub const CHALLENGE: u8 = 2;
    pub const SCHEDULE_UPDATE: u8 = 3;
}

pub mod tag {
    pub const VERIFIER_ID: u8 = 0x01;
    pub const CANDIDATE_ID: u8 = 0x02;
    pub const PUBLIC_KEY: u8 = 0x03;
    pub const CERTIFICATE: u8 = 0x04;
    pub const SIGNATURE: u8 = 0x05;
    pub const CHALLENGE_SET: u8 = 0x06;
    pub const T0: u8 = 0x07;
    pub const CIPHERTEXT: u8 = 0x08;
    pub const SUBJECT: u8 = 0x09;
    pub const KEY_ID: u8 = 0x0A;
    pub const SIG_TAG: u8 = 0x0B;
    pub const NONCE: u8 = 0x0C;
    pub const BODY: u8 = 0x0D;
    pub const MAC: u8 = 0x0E;
    pub const COUNT: u8 = 0x0F;
    pub const ENTRY: u8 = 0x10;
    pub const DISTANCE: u8 = 0x11;
    pub const DEADLINE: u8 = 0x12;
    pub const ABSOLUTE_TIME: u8 = 0x13;
    pub const SEQ: u8 = 0x14;
    pub const UPDATE_KIND: u8 = 0x15;
    pub const INDEX: u8 = 0x16;
    pub const SIGNER_CERTIFICATE: u8 = 0x17;
    pub const LABEL: u8 = 0x18;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("truncated input")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("expected tag {expected:#04x}, found {found:#04x}")]
    UnexpectedTag { expected: u8, found: u8 },
    #[error("field {tag:#04x} has length {len}, expected {expected}")]
    BadLength { tag: u8, len: usize, expected: usize },
    #[error("field {0:#04x} is not valid UTF-8")]
    BadUtf8(u8),
    #[error("bad value in field {0:#04x}")]
    BadValue(u8),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, tag: u8, value: &[u8]) -> &mut Self {
        self.buf.push(tag);
        self.buf.extend((value.len() as u32).to_be_bytes());
        self.buf.extend(value);
        self
    }

    pub fn u8(&mut self, tag: u8, v: u8) -> &mut Self {
        self.bytes(tag, &[v])
    }

    pub fn u32(&mut self, tag: u8, v: u32) -> &mut Self {
        self.bytes(tag, &v.to_be_bytes())
    }

    pub fn u64(&mut self, tag: u8, v: u64) -> &mut Self {
        self.bytes(tag, &v.to_be_bytes())
    }

    pub fn f64(&mut self, tag: u8, v: f64) -> &mut Self {
        self.bytes(tag, &v.to_bits().to_be_bytes())
    }

    pub fn str(&mut self, tag: u8, v: &str) -> &mut Self {
        self.bytes(tag, v.as_bytes())
    }

    pub fn nested(&mut self, tag: u8, f: impl FnOnce(&mut Writer)) -> &mut Self {
        let mut inner = Writer::new();
        f(&mut inner);
        self.bytes(tag, &inner.buf)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn bytes(&mut self, tag: u8) -> Result<&'a [u8], WireError> {
        let rest = &self.data[self.pos..];
        if rest.len() < 5 {
            return Err(WireError::Truncated);
        }
        if rest[0] != tag {
            return Err(WireError::UnexpectedTag {
                expected: tag,
                found: rest[0],
            });
        }
        let len = u32::from_be_bytes(rest[1..5].try_into().expect("4 bytes")) as usize;
        if rest.len() < 5 + len {
            return Err(WireError::Truncated);
        }
        self.pos += 5 + len;
        Ok(&rest[5..5 + len])
    }

    fn fixed<const N: usize>(&mut self, tag: u8) -> Result<[u8; N], WireError> {
        let v = self.bytes(tag)?;
        v.try_into().map_err(|_| WireError::BadLength {
            tag,
            len: v.len(),
            expected: N,
        })
    }

    pub fn u8(&mut self, tag: u8) -> Result<u8, WireError> {
        Ok(self.fixed::<1>(tag)?[0])
    }

    pub fn u32(&mut self, tag: u8) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.fixed(tag)?))
    }

    pub fn u64(&mut self, tag: u8) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.fixed(tag)?))
    }

    pub fn f64(&mut self, tag: u8) -> Result<f64, WireError> {
        Ok(f64::from_bits(u64::from_be_bytes(self.fixed(tag)?)))
    }

    pub fn str(&mut self, tag: u8) -> Result<String, WireError> {
        let v = self.bytes(tag)?;
        String::from_utf8(v.to_vec()).map_err(|_| WireError::BadUtf8(tag))
    }

    pub fn nested(&mut self, tag: u8) -> Result<Reader<'a>, WireError> {
        Ok(Reader::new(self.bytes(tag)?))
    }

    pub fn peek_tag(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    pub fn finish(&self) -> Result<(), WireError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}

pub fn frame(msg_type: u8, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 8);
    out.extend(MAGIC);
    out.push(VERSION);
    out.push(msg_type);
    out.extend((body.len() as u32).to_be_bytes());
    out.extend(body);
    out
}

/// Splits a frame into its message type and body.
pub fn unframe(bytes: &[u8]) -> Result<(u8, &[u8]), WireError> {
    if bytes.len() < 8 {
        return Err(WireError::Truncated);
    }
    if bytes[0..2] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes[2] != VERSION {
        return Err(WireError::UnsupportedVersion(bytes[2]));
    }
    let len = u32::from_be_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() < len {
        return Err(WireError::Truncated);
    }
    if body.len() > len {
        return Err(WireError::Trailing(body.len() - len));
    }
    Ok((bytes[3], body))
}

pub fn put_public_key(w: &mut Writer, tag: u8, pk: &PublicKey) {
    w.u64(tag, pk.id.0);
}

pub fn get_public_key(r: &mut Reader, tag: u8) -> Result<PublicKey, WireError> {
    Ok(PublicKey { id: KeyId(r.u64(tag)?) })
}

pub fn put_signature(w: &mut Writer, tag: u8, sig: &Signature) {
    w.nested(tag, |w| {
        w.u64(tag::KEY_ID, sig.signer.0).bytes(tag::SIG_TAG, &sig.tag);
    });
}

pub fn get_signature(r: &mut Reader, t: u8) -> Result<Signature, WireError> {
    let mut n = r.nested(t)?;
    let signer = KeyId(n.u64(tag::KEY_ID)?);
    let tag_bytes = n.fixed::<32>(tag::SIG_TAG)?;
    n.finish()?;
    Ok(Signature { signer, tag: tag_bytes })
}

pub fn put_certificate(w: &mut Writer, tag: u8, cert: &Certificate) {
    w.nested(tag, |w| {
        w.str(tag::SUBJECT, &cert.subject);
        put_public_key(w, tag::PUBLIC_KEY, &cert.public_key);
        put_signature(w, tag::SIGNATURE, &cert.signature);
    });
}

pub fn get_certificate(r: &mut Reader, t: u8) -> Result<Certificate, WireError> {
    let mut n = r.nested(t)?;
    let subject = n.str(tag::SUBJECT)?;
    let public_key = get_public_key(&mut n, tag::PUBLIC_KEY)?;
    let signature = get_signature(&mut n, tag::SIGNATURE)?;
    n.finish()?;
    Ok(Certificate {
        subject,
        public_key,
        signature,
    })
}

pub fn put_ciphertext(w: &mut Writer, tag: u8, ct: &Ciphertext) {
    w.nested(tag, |w| {
        w.u64(tag::KEY_ID, ct.recipient.0)
            .u64(tag::NONCE, ct.nonce)
            .bytes(tag::BODY, &ct.body)
            .bytes(tag::MAC, &ct.tag);
    });
}

pub fn get_ciphertext(r: &mut Reader, t: u8) -> Result<Ciphertext, WireError> {
    let mut n = r.nested(t)?;
    let recipient = KeyId(n.u64(tag::KEY_ID)?);
    let nonce = n.u64(tag::NONCE)?;
    let body = n.bytes(tag::BODY)?.to_vec();
    let mac = n.fixed::<32>(tag::MAC)?;
    n.finish()?;
    Ok(Ciphertext {
        recipient,
        nonce,
        body,
        tag: mac,
    })
}

pub fn put_challenge_set(w: &mut Writer, tag: u8, set: &ChallengeSet) {
    w.nested(tag, |w| {
        w.f64(tag::T0, set.t0).u32(tag::COUNT, set.entries.len() as u32);
        for e in &set.entries {
            w.nested(tag::ENTRY, |w| {
                w.f64(tag::DISTANCE, e.distance)
                    .f64(tag::DEADLINE, e.deadline)
                    .f64(tag::ABSOLUTE_TIME, e.absolute_time);
            });
        }
    });
}

pub fn get_challenge_set(r: &mut Reader, t: u8) -> Result<ChallengeSet, WireError> {
    let mut n = r.nested(t)?;
    let t0 = n.f64(tag::T0)?;
    let count = n.u32(tag::COUNT)? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let mut e = n.nested(tag::ENTRY)?;
        let entry = ChallengeEntry {
            distance: e.f64(tag::DISTANCE)?,
            deadline: e.f64(tag::DEADLINE)?,
            absolute_time: e.f64(tag::ABSOLUTE_TIME)?,
        };
        e.finish()?;
        entries.push(entry);
    }
    n.finish()?;
    Ok(ChallengeSet { entries, t0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn field_layout_is_exact() {
        let mut w = Writer::new();
        w.u32(0x0F, 3).f64(0x11, 42.0).str(0x01, "V");
        let bytes = w.finish();
        let expected: Vec<u8> = [
            &[0x0F, 0, 0, 0, 4, 0, 0, 0, 3][..],
            &[0x11, 0, 0, 0, 8],
            &42.0f64.to_bits().to_be_bytes(),
            &[0x01, 0, 0, 0, 1, b'V'],
        ]
        .concat();
        assert_eq!(bytes, expected);
        assert_eq!(&42.0f64.to_bits().to_be_bytes(), &[0x40, 0x45, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn frame_roundtrip_and_errors() {
        let f = frame(msg_type::CHALLENGE, &[1, 2, 3]);
        assert_eq!(&f[..8], &[b'P', b'F', 1, 2, 0, 0, 0, 3]);
        assert_eq!(unframe(&f).unwrap(), (2, &[1u8, 2, 3][..]));
        assert_eq!(unframe(&f[..9]), Err(WireError::Truncated));
        let mut bad = f.clone();
        bad[0] = b'X';
        assert_eq!(unframe(&bad), Err(WireError::BadMagic));
        let mut long = f.clone();
        long.push(0);
        assert_eq!(unframe(&long), Err(WireError::Trailing(1)));
    }

    #[test]
    fn reader_rejects_wrong_tag_and_length() {
        let mut w = Writer::new();
        w.u32(0x0F, 1);
        let b = w.finish();
        assert!(matches!(
            Reader::new(&b).u32(0x10),
            Err(WireError::UnexpectedTag { .. })
        ));
        assert!(matches!(Reader::new(&b).u64(0x0F), Err(WireError::BadLength { .. })));
        assert_eq!(Reader::new(&b[..6]).u32(0x0F), Err(WireError::Truncated));
    }

    proptest! {
        #[test]
        fn challenge_sets_roundtrip_bit_exact(
            t0 in -1e6f64..1e6,
            raw in proptest::collection::vec((any::<f64>(), any::<f64>(), any::<f64>()), 0..12)
        ) {
            let set = ChallengeSet {
                t0,
                entries: raw.iter().map(|(d, dl, t)| ChallengeEntry { distance: *d, deadline: *dl, absolute_time: *t }).collect(),
            };
            let mut w = Writer::new();
            put_challenge_set(&mut w, tag::CHALLENGE_SET, &set);
            let bytes = w.finish();
            let mut r = Reader::new(&bytes);
            let back = get_challenge_set(&mut r, tag::CHALLENGE_SET).unwrap();
            r.finish().unwrap();
            prop_assert_eq!(back.entries.len(), set.entries.len());
            prop_assert_eq!(back.t0.to_bits(), set.t0.to_bits());
            for (a, b) in back.entries.iter().zip(&set.entries) {
                prop_assert_eq!(a.distance.to_bits(), b.distance.to_bits());
                prop_assert_eq!(a.deadline.to_bits(), b.deadline.to_bits());
                prop_assert_eq!(a.absolute_time.to_bits(), b.absolute_time.to_bits());
            }
            // re-encoding is byte-identical
            let mut w2 = Writer::new();
            put_challenge_set(&mut w2, tag::CHALLENGE_SET, &back);
            prop_assert_eq!(w2.finish(), bytes);
        }

        #[test]
        fn decoding_garbage_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = unframe(&bytes);
            let _ = get_challenge_set(&mut Reader::new(&bytes), tag::CHALLENGE_SET);
        }
    }
}
