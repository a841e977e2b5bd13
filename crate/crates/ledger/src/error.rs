use std::fmt;

/// Why a spend was refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    /// A coin's owner differs from the receipt's owner.
    OwnerMismatch { coin_id: u64 },
    /// A coin's issuer signature does not verify under the administrator key.
    Counterfeit { coin_id: u64 },
    /// A coin outside its validity window.
    CoinExpired { coin_id: u64 },
    /// A coin already appears in an approved receipt, or twice in this one.
    DoubleSpend { coin_id: u64 },
    /// The user signature over the receipt and challenge does not verify.
    BadSignature,
    UnknownChallenge,
    ExpiredChallenge,
    /// The challenge was issued for a different raw receipt.
    ChallengeMismatch,
}

impl Rejection {
    /// Stable short code used in logs and CLI output.
    pub fn code(&self) -> &'static str {
        match self {
            Rejection::OwnerMismatch { .. } => "owner-mismatch",
            Rejection::Counterfeit { .. } => "counterfeit",
            Rejection::CoinExpired { .. } => "coin-expired",
            Rejection::DoubleSpend { .. } => "double-spend",
            Rejection::BadSignature => "bad-signature",
            Rejection::UnknownChallenge => "unknown-challenge",
            Rejection::ExpiredChallenge => "expired-challenge",
            Rejection::ChallengeMismatch => "challenge-mismatch",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::OwnerMismatch { coin_id }
            | Rejection::Counterfeit { coin_id }
            | Rejection::CoinExpired { coin_id }
            | Rejection::DoubleSpend { coin_id } => write!(f, "{} (coin {coin_id})", self.code()),
            _ => f.write_str(self.code()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("rejected: {0}")]
    Rejected(Rejection),
    #[error("signature scheme failure: {0}")]
    Crypto(String),
    #[error("ledger storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger files are inconsistent: {0}")]
    Corrupt(String),
}

pub type Result<T, E = LedgerError> = std::result::Result<T, E>;
