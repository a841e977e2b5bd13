//! Coins, receipts and their canonical byte encodings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LedgerError, Result};
use crate::scheme::{PublicKey, SecretKey, Signature, SignatureScheme};

pub const CHALLENGE_LEN: usize = 16;

/// Challenge issued by the ledger for one spend attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Challenge(pub [u8; CHALLENGE_LEN]);

impl Challenge {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| LedgerError::Input(format!("bad challenge hex: {e}")))?;
        let arr: [u8; CHALLENGE_LEN] = bytes
            .try_into()
            .map_err(|_| LedgerError::Input(format!("challenge must be {CHALLENGE_LEN} bytes")))?;
        Ok(Challenge(arr))
    }
}

impl Serialize for Challenge {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Challenge {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Challenge::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinMetadata {
    pub coin_id: u64,
    /// Unix seconds, inclusive.
    pub valid_from: u64,
    /// Unix seconds, inclusive.
    pub valid_until: u64,
    pub note: String,
}

impl CoinMetadata {
    /// Metadata valid forever.
    pub fn new(coin_id: u64, note: impl Into<String>) -> Self {
        CoinMetadata { coin_id, valid_from: 0, valid_until: u64::MAX, note: note.into() }
    }

    pub fn is_valid_at(&self, now: u64) -> bool {
        self.valid_from <= now && now <= self.valid_until
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coin {
    pub owner_pk: PublicKey,
    pub metadata: CoinMetadata,
    pub issuer_sig: Signature,
}

/// Length-prefixed field writer so no two field sequences share an encoding.
struct Encoder(Vec<u8>);

impl Encoder {
    fn new(tag: &[u8]) -> Self {
        let mut e = Encoder(Vec::with_capacity(256));
        e.bytes(tag);
        e
    }

    fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.extend_from_slice(&(b.len() as u64).to_be_bytes());
        self.0.extend_from_slice(b);
        self
    }

    fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }
}

/// Bytes the issuer signs for a coin.
pub fn coin_message(owner_pk: &PublicKey, metadata: &CoinMetadata) -> Vec<u8> {
    let mut e = Encoder::new(b"auditgame-ledger/coin/v1");
    e.bytes(owner_pk.as_bytes())
        .u64(metadata.coin_id)
        .u64(metadata.valid_from)
        .u64(metadata.valid_until)
        .bytes(metadata.note.as_bytes());
    e.0
}

/// True iff the issuer signature verifies under `admin_pk`.
pub fn verify_coin(scheme: &dyn SignatureScheme, admin_pk: &PublicKey, coin: &Coin) -> bool {
    scheme.verify(admin_pk, &coin_message(&coin.owner_pk, &coin.metadata), &coin.issuer_sig)
}

/// Unsigned purchase request listing the coins to spend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReceipt {
    pub goods: String,
    /// Price in the smallest currency unit.
    pub price: u64,
    pub owner_pk: PublicKey,
    pub coins: Vec<Coin>,
}

impl RawReceipt {
    pub fn new(goods: impl Into<String>, price: u64, owner_pk: PublicKey, coins: Vec<Coin>) -> Self {
        RawReceipt { goods: goods.into(), price, owner_pk, coins }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new(b"auditgame-ledger/raw-receipt/v1");
        e.bytes(self.goods.as_bytes())
            .u64(self.price)
            .bytes(self.owner_pk.as_bytes())
            .u64(self.coins.len() as u64);
        for coin in &self.coins {
            e.bytes(&coin_message(&coin.owner_pk, &coin.metadata)).bytes(coin.issuer_sig.as_bytes());
        }
        e.0
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }

    pub fn coin_ids(&self) -> Vec<u64> {
        self.coins.iter().map(|c| c.metadata.coin_id).collect()
    }

    /// Structural checks done before a challenge is issued.
    pub fn check_well_formed(&self) -> Result<()> {
        if self.coins.is_empty() {
            return Err(LedgerError::Input("raw receipt lists no coins".into()));
        }
        if let Some(c) = self.coins.iter().find(|c| c.owner_pk != self.owner_pk) {
            return Err(LedgerError::Input(format!(
                "coin {} belongs to {} but the receipt owner is {}",
                c.metadata.coin_id,
                c.owner_pk.to_hex(),
                self.owner_pk.to_hex()
            )));
        }
        Ok(())
    }
}

/// Message the user signs: the raw receipt followed by the challenge.
pub fn receipt_message(raw: &RawReceipt, challenge: &Challenge) -> Vec<u8> {
    let mut m = raw.canonical_bytes();
    m.extend_from_slice(&challenge.0);
    m
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub raw: RawReceipt,
    pub challenge: Challenge,
    pub user_sig: Signature,
}

/// Client-side signing of a raw receipt against a ledger challenge.
pub fn sign_receipt(
    scheme: &dyn SignatureScheme,
    user_sk: &SecretKey,
    raw: RawReceipt,
    challenge: Challenge,
) -> Result<Receipt> {
    let user_sig = scheme.sign(user_sk, &receipt_message(&raw, &challenge))?;
    Ok(Receipt { raw, challenge, user_sig })
}

impl Receipt {
    pub fn signature_verifies(&self, scheme: &dyn SignatureScheme) -> bool {
        scheme.verify(&self.raw.owner_pk, &receipt_message(&self.raw, &self.challenge), &self.user_sig)
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(receipt_message(&self.raw, &self.challenge)).into()
    }
}
