//! Hashing, signatures, symmetric encryption and key agreement.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use curve25519_dalek::montgomery::MontgomeryPoint;
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::CryptoError;

macro_rules! hex_bytes {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let h = self.to_hex();
                write!(f, "{}({}..)", stringify!($name), &h[..12])
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                let v = hex::decode(&s).map_err(serde::de::Error::custom)?;
                let arr: [u8; $len] = v
                    .try_into()
                    .map_err(|_| serde::de::Error::custom("wrong length"))?;
                Ok($name(arr))
            }
        }
    };
}

hex_bytes!(Hash256, 32);
hex_bytes!(PublicKey, 32);
hex_bytes!(Signature, 64);

impl Hash256 {
    /// Marker used where no predecessor exists.
    pub const ZERO: Hash256 = Hash256([0u8; 32]);
}

/// SHA-256 of `data`.
pub fn hash(data: &[u8]) -> Hash256 {
    Hash256(Sha256::digest(data).into())
}

/// SHA-256 over the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Hash256 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Hash256(h.finalize().into())
}

impl PublicKey {
    pub fn hash(&self) -> Hash256 {
        hash(&self.0)
    }
}

#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyPair({:?})", self.public())
    }
}

impl KeyPair {
    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.signing.sign(msg).to_bytes())
    }
}

/// Draw a key pair from `rng`. The same stream position yields the same pair.
pub fn keygen<R: RngCore + CryptoRng>(rng: &mut R) -> KeyPair {
    let mut secret = [0u8; 32];
    rng.fill_bytes(&mut secret);
    KeyPair { signing: SigningKey::from_bytes(&secret) }
}

pub fn sign(kp: &KeyPair, msg: &[u8]) -> Signature {
    kp.sign(msg)
}

/// Verify `sig` on `msg`. Malformed keys or signatures yield `false`.
pub fn verify(pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&pk.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify_strict(msg, &sig).is_ok()
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymmetricKey(pub [u8; 32]);

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymmetricKey({})", &hex::encode(hash(&self.0).0)[..8])
    }
}

impl SymmetricKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        SymmetricKey(k)
    }
}

const NONCE_LEN: usize = 12;

/// AEAD encryption; the random nonce is prefixed to the ciphertext.
pub fn encrypt<R: RngCore + CryptoRng>(key: &SymmetricKey, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new((&key.0).into());
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

pub fn decrypt(key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < NONCE_LEN {
        return Err(CryptoError::Decrypt);
    }
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    ChaCha20Poly1305::new((&key.0).into())
        .decrypt(Nonce::from_slice(nonce), body)
        .map_err(|_| CryptoError::Decrypt)
}

fn ecies_key(shared: &[u8; 32], eph: &[u8; 32], recipient: &[u8; 32]) -> SymmetricKey {
    SymmetricKey(hash_parts(&[b"lsb-seal-v1", shared, eph, recipient]).0)
}

/// Encrypt to the holder of `recipient`'s signing key (ECIES over X25519).
pub fn seal_to<R: RngCore + CryptoRng>(recipient: &PublicKey, plaintext: &[u8], rng: &mut R) -> Result<Vec<u8>, CryptoError> {
    let vk = VerifyingKey::from_bytes(&recipient.0).map_err(|_| CryptoError::BadPublicKey)?;
    let their = vk.to_montgomery();
    let mut eph_secret = [0u8; 32];
    rng.fill_bytes(&mut eph_secret);
    let eph_pub = MontgomeryPoint::mul_base_clamped(eph_secret);
    let shared = their.mul_clamped(eph_secret);
    let key = ecies_key(&shared.0, &eph_pub.0, &their.0);
    let mut out = eph_pub.0.to_vec();
    out.extend(encrypt(&key, plaintext, rng));
    Ok(out)
}

pub fn open_sealed(kp: &KeyPair, sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if sealed.len() < 32 {
        return Err(CryptoError::Decrypt);
    }
    let (eph, body) = sealed.split_at(32);
    let eph = MontgomeryPoint(eph.try_into().expect("split at 32"));
    let mine = kp.signing.verifying_key().to_montgomery();
    let shared = eph.mul_clamped(kp.signing.to_scalar_bytes());
    let key = ecies_key(&shared.0, &eph.0, &mine.0);
    decrypt(&key, body)
}

/// Multiplicative group modulo a prime, used for home-tier key agreement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DhGroupParams {
    pub p: u64,
    pub g: u64,
}

impl Default for DhGroupParams {
    /// Safe prime p = 2q + 1 with g = 4 generating the order-q subgroup.
    fn default() -> Self {
        DhGroupParams { p: 2_305_843_009_213_691_579, g: 4 }
    }
}

impl DhGroupParams {
    pub fn is_element(&self, y: u64) -> bool {
        y >= 2 && y <= self.p - 2
    }
}

pub fn mod_mul(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

pub fn mod_pow(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mod_mul(acc, base, p);
        }
        base = mod_mul(base, base, p);
        exp >>= 1;
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DhSecret(pub u64);

pub fn dh_keygen<R: RngCore>(params: &DhGroupParams, rng: &mut R) -> (DhSecret, u64) {
    let x = 2 + rng.next_u64() % (params.p - 3);
    (DhSecret(x), mod_pow(params.g, x, params.p))
}

pub fn dh_public(params: &DhGroupParams, secret: DhSecret) -> u64 {
    mod_pow(params.g, secret.0, params.p)
}

pub fn dh_shared_element(my_secret: DhSecret, peer_public: u64, params: &DhGroupParams) -> Result<u64, CryptoError> {
    if !params.is_element(peer_public) {
        return Err(CryptoError::NotGroupElement(peer_public));
    }
    Ok(mod_pow(peer_public, my_secret.0, params.p))
}

/// Key = SHA-256 of the shared element as 8 little-endian bytes.
pub fn dh_shared_key(my_secret: DhSecret, peer_public: u64, params: &DhGroupParams) -> Result<SymmetricKey, CryptoError> {
    let z = dh_shared_element(my_secret, peer_public, params)?;
    Ok(SymmetricKey(hash(&z.to_le_bytes()).0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn empty_digest_is_the_published_constant() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn keygen_is_deterministic_per_stream_position() {
        let a = keygen(&mut stream(1, "k", 0));
        let b = keygen(&mut stream(1, "k", 0));
        assert_eq!(a.public(), b.public());
        let mut r = stream(1, "k", 0);
        let c = keygen(&mut r);
        let d = keygen(&mut r);
        assert_ne!(c.public(), d.public());
    }

    #[test]
    fn malformed_inputs_do_not_verify() {
        let kp = keygen(&mut stream(2, "k", 0));
        let sig = kp.sign(b"m");
        assert!(verify(&kp.public(), b"m", &sig));
        assert!(!verify(&PublicKey([0xff; 32]), b"m", &sig));
        assert!(!verify(&kp.public(), b"m", &Signature([0xff; 64])));
    }

    #[test]
    fn sealed_metadata_opens_only_for_recipient() {
        let mut r = stream(3, "seal", 0);
        let alice = keygen(&mut r);
        let bob = keygen(&mut r);
        let ct = seal_to(&alice.public(), b"access thermostat", &mut r).unwrap();
        assert_eq!(open_sealed(&alice, &ct).unwrap(), b"access thermostat");
        assert!(open_sealed(&bob, &ct).is_err());
    }

    #[test]
    fn dh_rejects_out_of_range_elements() {
        let p = DhGroupParams { p: 23, g: 5 };
        assert!(dh_shared_key(DhSecret(6), 1, &p).is_err());
        assert!(dh_shared_key(DhSecret(6), 22, &p).is_err());
        assert!(dh_shared_key(DhSecret(6), 0, &p).is_err());
    }

    #[test]
    fn default_generator_has_prime_order() {
        let p = DhGroupParams::default();
        let q = (p.p - 1) / 2;
        assert_eq!(mod_pow(p.g, q, p.p), 1);
        assert_ne!(mod_pow(p.g, 2, p.p), 1);
    }
}
