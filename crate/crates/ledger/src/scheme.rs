//! Signature schemes: a trait, Ed25519, and a deterministic test double.

use std::fmt;
use std::sync::Mutex;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{LedgerError, Result};

macro_rules! byte_newtype {
    ($name:ident) => {
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub Vec<u8>);

        impl $name {
            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(&self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self> {
                hex::decode(s.trim())
                    .map($name)
                    .map_err(|e| LedgerError::Input(format!("bad hex for {}: {e}", stringify!($name))))
            }
        }

        impl serde::Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> serde::Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                hex::decode(&s).map($name).map_err(serde::de::Error::custom)
            }
        }
    };
}

byte_newtype!(PublicKey);
byte_newtype!(Signature);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", self.to_hex())
    }
}

/// Secret key bytes. Never serialised by the ledger and redacted in `Debug`.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(Vec<u8>);

impl SecretKey {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        SecretKey(bytes)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        hex::decode(s.trim())
            .map(SecretKey)
            .map_err(|e| LedgerError::Input(format!("bad secret key hex: {e}")))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub secret: SecretKey,
    pub public: PublicKey,
}

/// Key generation, signing and verification over byte strings.
pub trait SignatureScheme: Send + Sync {
    fn name(&self) -> &'static str;
    /// Claimed security level in bits; 0 for schemes that are forgeable.
    fn security_bits(&self) -> u32;
    fn keygen(&self) -> Result<KeyPair>;
    fn public_key(&self, secret: &SecretKey) -> Result<PublicKey>;
    fn sign(&self, secret: &SecretKey, msg: &[u8]) -> Result<Signature>;
    fn verify(&self, public: &PublicKey, msg: &[u8], sig: &Signature) -> bool;
    /// Fresh random bytes for challenges.
    fn fill_random(&self, buf: &mut [u8]);
}

/// Ed25519 with strict verification. Randomness comes from the OS.
#[derive(Debug, Default, Clone, Copy)]
pub struct Ed25519;

fn signing_key(secret: &SecretKey) -> Result<SigningKey> {
    let bytes: [u8; 32] = secret
        .as_bytes()
        .try_into()
        .map_err(|_| LedgerError::Input("ed25519 secret keys are 32 bytes".into()))?;
    Ok(SigningKey::from_bytes(&bytes))
}

impl SignatureScheme for Ed25519 {
    fn name(&self) -> &'static str {
        "ed25519"
    }

    fn security_bits(&self) -> u32 {
        128
    }

    fn keygen(&self) -> Result<KeyPair> {
        let mut seed = [0u8; 32];
        OsRng
            .try_fill_bytes(&mut seed)
            .map_err(|e| LedgerError::Crypto(format!("entropy source failed: {e}")))?;
        let sk = SigningKey::from_bytes(&seed);
        Ok(KeyPair {
            public: PublicKey(sk.verifying_key().to_bytes().to_vec()),
            secret: SecretKey(seed.to_vec()),
        })
    }

    fn public_key(&self, secret: &SecretKey) -> Result<PublicKey> {
        Ok(PublicKey(signing_key(secret)?.verifying_key().to_bytes().to_vec()))
    }

    fn sign(&self, secret: &SecretKey, msg: &[u8]) -> Result<Signature> {
        Ok(Signature(signing_key(secret)?.sign(msg).to_bytes().to_vec()))
    }

    fn verify(&self, public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        let Ok(pk) = <[u8; 32]>::try_from(public.as_bytes()) else {
            return false;
        };
        let Ok(vk) = VerifyingKey::from_bytes(&pk) else {
            return false;
        };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(sig.as_bytes()) else {
            return false;
        };
        vk.verify_strict(msg, &sig).is_ok()
    }

    fn fill_random(&self, buf: &mut [u8]) {
        OsRng.fill_bytes(buf);
    }
}

/// Deterministic hash-based stand-in for tests.
///
/// `pk = H(sk)` and `sig = H(pk || msg)`, so anyone holding the public key can
/// sign. It catches wrong-key, tampering and counterfeit mistakes in tests but
/// offers no security.
pub struct ToyScheme {
    rng: Mutex<ChaCha20Rng>,
}

impl ToyScheme {
    pub fn new(seed: u64) -> Self {
        ToyScheme { rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)) }
    }

    fn digest(parts: &[&[u8]]) -> Vec<u8> {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_be_bytes());
            h.update(p);
        }
        h.finalize().to_vec()
    }
}

impl SignatureScheme for ToyScheme {
    fn name(&self) -> &'static str {
        "toy"
    }

    fn security_bits(&self) -> u32 {
        0
    }

    fn keygen(&self) -> Result<KeyPair> {
        let mut sk = vec![0u8; 32];
        self.fill_random(&mut sk);
        let secret = SecretKey(sk);
        Ok(KeyPair { public: self.public_key(&secret)?, secret })
    }

    fn public_key(&self, secret: &SecretKey) -> Result<PublicKey> {
        Ok(PublicKey(Self::digest(&[b"toy-pk", secret.as_bytes()])))
    }

    fn sign(&self, secret: &SecretKey, msg: &[u8]) -> Result<Signature> {
        let pk = self.public_key(secret)?;
        Ok(Signature(Self::digest(&[b"toy-sig", pk.as_bytes(), msg])))
    }

    fn verify(&self, public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        Self::digest(&[b"toy-sig", public.as_bytes(), msg]) == sig.0
    }

    fn fill_random(&self, buf: &mut [u8]) {
        self.rng.lock().expect("rng lock").fill_bytes(buf);
    }
}

/// Scheme by name; `seed` only affects the toy scheme.
pub fn scheme_by_name(name: &str, seed: u64) -> Result<Box<dyn SignatureScheme>> {
    match name {
        "ed25519" => Ok(Box::new(Ed25519)),
        "toy" => Ok(Box::new(ToyScheme::new(seed))),
        other => Err(LedgerError::Input(format!("unknown signature scheme `{other}` (expected ed25519 or toy)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schemes() -> Vec<Box<dyn SignatureScheme>> {
        vec![Box::new(Ed25519), Box::new(ToyScheme::new(1))]
    }

    #[test]
    fn sign_then_verify() {
        for s in schemes() {
            let kp = s.keygen().unwrap();
            for msg in [&b""[..], b"a", &[0u8; 1000]] {
                let sig = s.sign(&kp.secret, msg).unwrap();
                assert!(s.verify(&kp.public, msg, &sig), "{}", s.name());
                assert!(s.verify(&kp.public, msg, &sig), "verify is repeatable");
            }
            assert_eq!(s.public_key(&kp.secret).unwrap(), kp.public);
        }
    }

    #[test]
    fn fresh_keys_differ() {
        for s in schemes() {
            assert_ne!(s.keygen().unwrap().public, s.keygen().unwrap().public);
        }
    }

    #[test]
    fn rejects_other_keys_and_tampering() {
        for s in schemes() {
            let a = s.keygen().unwrap();
            let b = s.keygen().unwrap();
            let sig = s.sign(&a.secret, b"pay 5").unwrap();
            assert!(!s.verify(&b.public, b"pay 5", &sig));
            assert!(!s.verify(&a.public, b"pay 6", &sig));
            let mut bad = sig.clone();
            bad.0[0] ^= 1;
            assert!(!s.verify(&a.public, b"pay 5", &bad));
            assert!(!s.verify(&PublicKey(vec![1, 2, 3]), b"pay 5", &sig));
        }
    }

    #[test]
    fn toy_scheme_is_reproducible() {
        let a = ToyScheme::new(9).keygen().unwrap();
        let b = ToyScheme::new(9).keygen().unwrap();
        assert_eq!(a.public, b.public);
        assert_ne!(a.public, ToyScheme::new(10).keygen().unwrap().public);
    }

    #[test]
    fn secret_keys_are_redacted() {
        let kp = ToyScheme::new(1).keygen().unwrap();
        assert_eq!(format!("{:?}", kp.secret), "SecretKey(..)");
        assert!(scheme_by_name("rsa", 0).is_err());
    }
}
