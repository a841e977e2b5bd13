//! Signed-coin ledger for benefit payments.
//!
//! The administrator mints coins signed under its key. Users spend them in two
//! phases: the ledger hands out a random challenge for a raw receipt, the user
//! signs receipt and challenge, and the ledger approves only if every coin is
//! genuine, owned by the signer and unspent.

pub mod coin;
pub mod error;
pub mod ledger;
pub mod scheme;

pub use coin::{sign_receipt, verify_coin, Challenge, Coin, CoinMetadata, RawReceipt, Receipt};
pub use error::{LedgerError, Rejection, Result};
pub use ledger::{audit_directory, Approval, AuditReport, Clock, Ledger, ManualClock, SystemClock, DEFAULT_CHALLENGE_TTL};
pub use scheme::{scheme_by_name, Ed25519, KeyPair, PublicKey, SecretKey, Signature, SignatureScheme, ToyScheme};
