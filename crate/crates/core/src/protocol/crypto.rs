//! Symbolic public-key primitives.
//!
//! [`SymbolicCrypto`] is an ideal functionality: it holds every secret it has
//! issued, so a signature verifies only if it was produced with the matching
//! secret key and a ciphertext opens only under the recipient's secret key.
//! Nothing here is meant to be cryptographically strong against a party that
//! can read the registry; parties only ever see public keys, signatures and
//! ciphertexts. A real scheme can replace it behind [`CryptoProvider`].

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    /// Wrong key, tampered ciphertext, or unknown recipient. Deliberately
    /// carries no detail.
    #[error("decryption failed")]
    DecryptionFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicKey {
    pub id: KeyId,
}

/// Secret half of a key pair. The material never leaves the owner except
/// through the registry held by [`SymbolicCrypto`].
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    pub id: KeyId,
    material: [u8; 32],
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey")
            .field("id", &self.id)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub signer: KeyId,
    pub tag: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ciphertext {
    pub recipient: KeyId,
    pub nonce: u64,
    pub body: Vec<u8>,
    pub tag: [u8; 32],
}

pub trait CryptoProvider {
    fn sign(&self, sk: &SecretKey, msg: &[u8]) -> Signature;
    fn verify(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool;
    fn encrypt(&self, pk: &PublicKey, msg: &[u8]) -> Ciphertext;
    fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError>;
}

/// Registry-backed ideal signature and encryption functionality.
#[derive(Debug, Default)]
pub struct SymbolicCrypto {
    registry: HashMap<KeyId, [u8; 32]>,
    next_id: u64,
    nonce: AtomicU64,
}

fn hash(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn keystream_xor(material: &[u8; 32], nonce: u64, data: &mut [u8]) {
    for (block, chunk) in data.chunks_mut(32).enumerate() {
        let pad = hash(&[b"enc", material, &nonce.to_be_bytes(), &(block as u64).to_be_bytes()]);
        for (b, p) in chunk.iter_mut().zip(pad.iter()) {
            *b ^= p;
        }
    }
}

impl SymbolicCrypto {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn generate_keypair<R: Rng + ?Sized>(&mut self, rng: &mut R) -> KeyPair {
        let mut material = [0u8; 32];
        rng.fill_bytes(&mut material);
        self.next_id += 1;
        let id = KeyId(self.next_id);
        self.registry.insert(id, material);
        KeyPair {
            public: PublicKey { id },
            secret: SecretKey { id, material },
        }
    }
}

impl CryptoProvider for SymbolicCrypto {
    fn sign(&self, sk: &SecretKey, msg: &[u8]) -> Signature {
        Signature {
            signer: sk.id,
            tag: hash(&[b"sig", &sk.material, msg]),
        }
    }

    fn verify(&self, pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        if sig.signer != pk.id {
            return false;
        }
        match self.registry.get(&pk.id) {
            Some(material) => hash(&[b"sig", material, msg]) == sig.tag,
            None => false,
        }
    }

    fn encrypt(&self, pk: &PublicKey, msg: &[u8]) -> Ciphertext {
        let nonce = self.nonce.fetch_add(1, Ordering::Relaxed);
        let material = self
            .registry
            .get(&pk.id)
            .copied()
            .unwrap_or_else(|| hash(&[b"unknown", &pk.id.0.to_be_bytes()]));
        let mut body = msg.to_vec();
        keystream_xor(&material, nonce, &mut body);
        let tag = hash(&[b"mac", &material, &nonce.to_be_bytes(), &body]);
        Ciphertext {
            recipient: pk.id,
            nonce,
            body,
            tag,
        }
    }

    fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
        if sk.id != ct.recipient || self.registry.get(&sk.id) != Some(&sk.material) {
            return Err(CryptoError::DecryptionFailed);
        }
        let tag = hash(&[b"mac", &sk.material, &ct.nonce.to_be_bytes(), &ct.body]);
        if tag != ct.tag {
            return Err(CryptoError::DecryptionFailed);
        }
        let mut body = ct.body.clone();
        keystream_xor(&sk.material, ct.nonce, &mut body);
        Ok(body)
    }
}

/// Binding of an identity string to a public key, signed by the CA.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub subject: String,
    pub public_key: PublicKey,
    pub signature: Signature,
}

fn certificate_payload(subject: &str, pk: &PublicKey) -> Vec<u8> {
    let mut out = b"cert".to_vec();
    out.extend((subject.len() as u32).to_be_bytes());
    out.extend(subject.as_bytes());
    out.extend(pk.id.0.to_be_bytes());
    out
}

pub struct CertificateAuthority {
    pub keys: KeyPair,
}

impl CertificateAuthority {
    pub fn new(keys: KeyPair) -> Self {
        Self { keys }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.public
    }

    pub fn issue(&self, crypto: &dyn CryptoProvider, subject: &str, pk: PublicKey) -> Certificate {
        Certificate {
            subject: subject.to_string(),
            public_key: pk,
            signature: crypto.sign(&self.keys.secret, &certificate_payload(subject, &pk)),
        }
    }
}

pub fn verify_certificate(crypto: &dyn CryptoProvider, cert: &Certificate, ca: &PublicKey) -> bool {
    crypto.verify(
        ca,
        &certificate_payload(&cert.subject, &cert.public_key),
        &cert.signature,
    )
}

/// Everything a protocol party carries: its identity, certificate and keys.
#[derive(Debug, Clone)]
pub struct Credentials {
    pub id: String,
    pub keys: KeyPair,
    pub certificate: Certificate,
}

impl Credentials {
    pub fn enroll<R: Rng + ?Sized>(
        crypto: &mut SymbolicCrypto,
        ca: &CertificateAuthority,
        id: &str,
        rng: &mut R,
    ) -> Self {
        let keys = crypto.generate_keypair(rng);
        let certificate = ca.issue(crypto, id, keys.public);
        Self {
            id: id.to_string(),
            keys,
            certificate,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.public
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world() -> (SymbolicCrypto, KeyPair, KeyPair) {
        let mut c = SymbolicCrypto::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = c.generate_keypair(&mut rng);
        let b = c.generate_keypair(&mut rng);
        (c, a, b)
    }

    #[test]
    fn sign_verify_roundtrip() {
        let (c, a, b) = world();
        let sig = c.sign(&a.secret, b"hello");
        assert!(c.verify(&a.public, b"hello", &sig));
        assert!(!c.verify(&a.public, b"hellp", &sig));
        assert!(!c.verify(&b.public, b"hello", &sig));
    }

    #[test]
    fn encryption_roundtrip_and_wrong_key() {
        let (c, a, b) = world();
        let ct = c.encrypt(&a.public, b"challenge set");
        assert_ne!(ct.body, b"challenge set");
        assert_eq!(c.decrypt(&a.secret, &ct).unwrap(), b"challenge set");
        assert_eq!(c.decrypt(&b.secret, &ct), Err(CryptoError::DecryptionFailed));
        let mut tampered = ct.clone();
        tampered.body[0] ^= 1;
        assert_eq!(c.decrypt(&a.secret, &tampered), Err(CryptoError::DecryptionFailed));
    }

    #[test]
    fn certificates() {
        let (mut c, a, _) = world();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ca = CertificateAuthority::new(c.generate_keypair(&mut rng));
        let cert = ca.issue(&c, "V", a.public);
        assert!(verify_certificate(&c, &cert, &ca.public_key()));
        let mut forged = cert.clone();
        forged.subject = "M".into();
        assert!(!verify_certificate(&c, &forged, &ca.public_key()));
        // a self-issued certificate does not chain to the CA
        let rogue = CertificateAuthority::new(a.clone());
        let self_cert = rogue.issue(&c, "V", a.public);
        assert!(!verify_certificate(&c, &self_cert, &ca.public_key()));
    }

    proptest! {
        #[test]
        fn signatures_are_unforgeable(msg in proptest::collection::vec(any::<u8>(), 0..64),
                                      other in proptest::collection::vec(any::<u8>(), 0..64),
                                      tag in any::<[u8; 32]>()) {
            let (c, a, b) = world();
            // a signature by b never verifies under a, and a random tag never verifies
            let by_b = c.sign(&b.secret, &msg);
            prop_assert!(!c.verify(&a.public, &msg, &by_b));
            let relabeled = Signature { tag: by_b.tag, ..by_b };
            let relabeled = Signature { signer: a.public.id, ..relabeled };
            prop_assert!(!c.verify(&a.public, &msg, &relabeled));
            let random = Signature { signer: a.public.id, tag };
            prop_assert!(!c.verify(&a.public, &msg, &random));
            let sig = c.sign(&a.secret, &msg);
            prop_assert_eq!(c.verify(&a.public, &other, &sig), other == msg);
        }
    }
}
