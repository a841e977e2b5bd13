//! The administrator's ledger: minting, two-phase spending and persistence.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::coin::{verify_coin, Challenge, Coin, CoinMetadata, RawReceipt, Receipt, CHALLENGE_LEN};
use crate::error::{LedgerError, Rejection, Result};
use crate::scheme::{scheme_by_name, PublicKey, SecretKey, SignatureScheme};

/// Default lifetime of an unanswered challenge, in seconds.
pub const DEFAULT_CHALLENGE_TTL: u64 = 600;

pub trait Clock: Send + Sync {
    /// Unix seconds.
    fn now(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    }
}

/// Clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        ManualClock(AtomicU64::new(start))
    }

    pub fn advance(&self, secs: u64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PendingChallenge {
    raw_digest: String,
    issued_at: u64,
}

/// One line of the approved-receipt log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovedRecord {
    pub index: u64,
    pub approved_at: u64,
    pub receipt_digest: String,
    pub receipt: Receipt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Approval {
    pub index: u64,
    pub receipt_digest: String,
}

#[derive(Default)]
struct State {
    minted: HashSet<(PublicKey, u64)>,
    pending: HashMap<Challenge, PendingChallenge>,
    spent: HashSet<(PublicKey, u64)>,
    approved: Vec<ApprovedRecord>,
}

const SCHEME_FILE: &str = "scheme";
const ADMIN_PK_FILE: &str = "admin.pk";
const ADMIN_SK_FILE: &str = "admin.sk";
const MINTED_FILE: &str = "minted.jsonl";
const APPROVED_FILE: &str = "approved.jsonl";
const PENDING_FILE: &str = "pending.json";

pub struct Ledger {
    scheme: Arc<dyn SignatureScheme>,
    admin_pk: PublicKey,
    admin_sk: SecretKey,
    clock: Arc<dyn Clock>,
    challenge_ttl: u64,
    dir: Option<PathBuf>,
    state: Mutex<State>,
}

/// Writes a secret file readable only by its owner.
pub fn write_secret_file(path: &Path, contents: &str) -> Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path)?;
    f.write_all(contents.as_bytes())?;
    f.sync_all()?;
    Ok(())
}

fn append_line(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut line = serde_json::to_string(value).map_err(|e| LedgerError::Corrupt(e.to_string()))?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_data()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parses a JSON-lines file. A torn final line (no trailing newline) left by a
/// crash is dropped and the file truncated to the last complete record.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = match text.rfind('\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < text.len() {
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(complete as u64)?;
        f.sync_all()?;
    }
    text[..complete]
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| LedgerError::Corrupt(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Problems with one approved receipt, empty when it re-verifies.
fn receipt_problems(
    scheme: &dyn SignatureScheme,
    admin_pk: &PublicKey,
    record: &ApprovedRecord,
    spent: &HashSet<(PublicKey, u64)>,
) -> Vec<String> {
    let r = &record.receipt;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for coin in &r.raw.coins {
        let id = coin.metadata.coin_id;
        if coin.owner_pk != r.raw.owner_pk {
            out.push(format!("coin {id} has a different owner"));
        }
        if !verify_coin(scheme, admin_pk, coin) {
            out.push(format!("coin {id} issuer signature fails"));
        }
        if !seen.insert(id) || spent.contains(&(coin.owner_pk.clone(), id)) {
            out.push(format!("coin {id} spent twice"));
        }
    }
    if !r.signature_verifies(scheme) {
        out.push("user signature fails".into());
    }
    if hex::encode(r.digest()) != record.receipt_digest {
        out.push("stored digest does not match".into());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditEntry {
    pub index: u64,
    pub receipt_digest: String,
    pub owner_pk: String,
    pub coin_ids: Vec<u64>,
    pub price: u64,
    pub valid: bool,
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub scheme: String,
    pub admin_pk: String,
    pub receipts: usize,
    pub all_valid: bool,
    pub entries: Vec<AuditEntry>,
}

fn audit_records(scheme: &dyn SignatureScheme, admin_pk: &PublicKey, records: &[ApprovedRecord]) -> AuditReport {
    let mut spent = HashSet::new();
    let mut entries = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let mut problems = receipt_problems(scheme, admin_pk, rec, &spent);
        if rec.index != i as u64 {
            problems.push(format!("index {} out of sequence", rec.index));
        }
        for c in &rec.receipt.raw.coins {
            spent.insert((c.owner_pk.clone(), c.metadata.coin_id));
        }
        entries.push(AuditEntry {
            index: rec.index,
            receipt_digest: rec.receipt_digest.clone(),
            owner_pk: rec.receipt.raw.owner_pk.to_hex(),
            coin_ids: rec.receipt.raw.coin_ids(),
            price: rec.receipt.raw.price,
            valid: problems.is_empty(),
            problems,
        });
    }
    AuditReport {
        scheme: scheme.name().into(),
        admin_pk: admin_pk.to_hex(),
        receipts: entries.len(),
        all_valid: entries.iter().all(|e| e.valid),
        entries,
    }
}

fn read_trimmed(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)
        .map_err(|e| LedgerError::Input(format!("cannot read {}: {e}", path.display())))?
        .trim()
        .to_string())
}

/// Re-verifies every approved receipt stored in `dir` without opening the ledger.
pub fn audit_directory(dir: &Path) -> Result<AuditReport> {
    let scheme = scheme_by_name(&read_trimmed(&dir.join(SCHEME_FILE))?, 0)?;
    let admin_pk = PublicKey::from_hex(&read_trimmed(&dir.join(ADMIN_PK_FILE))?)?;
    let records: Vec<ApprovedRecord> = read_jsonl(&dir.join(APPROVED_FILE))?;
    Ok(audit_records(scheme.as_ref(), &admin_pk, &records))
}

impl Ledger {
    fn with_keys(scheme: Arc<dyn SignatureScheme>, admin_sk: SecretKey, dir: Option<PathBuf>) -> Result<Self> {
        let admin_pk = scheme.public_key(&admin_sk)?;
        Ok(Ledger {
            scheme,
            admin_pk,
            admin_sk,
            clock: Arc::new(SystemClock),
            challenge_ttl: DEFAULT_CHALLENGE_TTL,
            dir,
            state: Mutex::new(State::default()),
        })
    }

    /// A ledger with fresh administrator keys and no persistence.
    pub fn in_memory(scheme: Arc<dyn SignatureScheme>) -> Result<Self> {
        let kp = scheme.keygen()?;
        Self::with_keys(scheme, kp.secret, None)
    }

    /// Initialises a ledger directory with fresh administrator keys.
    pub fn create(dir: &Path, scheme: Arc<dyn SignatureScheme>) -> Result<Self> {
        fs::create_dir_all(dir)?;
        if dir.join(ADMIN_PK_FILE).exists() {
            return Err(LedgerError::Input(format!("{} already holds a ledger", dir.display())));
        }
        let kp = scheme.keygen()?;
        write_secret_file(&dir.join(ADMIN_SK_FILE), &kp.secret.to_hex())?;
        fs::write(dir.join(ADMIN_PK_FILE), format!("{}\n", kp.public.to_hex()))?;
        fs::write(dir.join(SCHEME_FILE), format!("{}\n", scheme.name()))?;
        Self::with_keys(scheme, kp.secret, Some(dir.to_path_buf()))
    }

    /// Opens a ledger directory, re-verifying every minted coin and approved
    /// receipt. `seed` drives the toy scheme's challenge randomness.
    pub fn open(dir: &Path, seed: u64) -> Result<Self> {
        let scheme: Arc<dyn SignatureScheme> = scheme_by_name(&read_trimmed(&dir.join(SCHEME_FILE))?, seed)?.into();
        let admin_sk = SecretKey::from_hex(&read_trimmed(&dir.join(ADMIN_SK_FILE))?)?;
        let ledger = Self::with_keys(scheme, admin_sk, Some(dir.to_path_buf()))?;
        let stored_pk = PublicKey::from_hex(&read_trimmed(&dir.join(ADMIN_PK_FILE))?)?;
        if stored_pk != ledger.admin_pk {
            return Err(LedgerError::Corrupt("admin.pk does not match admin.sk".into()));
        }
        {
            let mut st = ledger.state.lock().expect("ledger lock");
            for coin in read_jsonl::<Coin>(&dir.join(MINTED_FILE))? {
                if !ledger.verify_coin(&coin) {
                    return Err(LedgerError::Corrupt(format!("minted coin {} fails verification", coin.metadata.coin_id)));
                }
                if !st.minted.insert((coin.owner_pk.clone(), coin.metadata.coin_id)) {
                    return Err(LedgerError::Corrupt(format!("coin {} minted twice", coin.metadata.coin_id)));
                }
            }
            let records: Vec<ApprovedRecord> = read_jsonl(&dir.join(APPROVED_FILE))?;
            let report = audit_records(ledger.scheme.as_ref(), &ledger.admin_pk, &records);
            if let Some(bad) = report.entries.iter().find(|e| !e.valid) {
                return Err(LedgerError::Corrupt(format!("receipt {}: {}", bad.index, bad.problems.join("; "))));
            }
            for rec in &records {
                for c in &rec.receipt.raw.coins {
                    st.spent.insert((c.owner_pk.clone(), c.metadata.coin_id));
                }
            }
            st.approved = records;
            let pending_path = dir.join(PENDING_FILE);
            if pending_path.exists() {
                let stored: BTreeMap<String, PendingChallenge> = serde_json::from_str(&fs::read_to_string(&pending_path)?)
                    .map_err(|e| LedgerError::Corrupt(format!("pending.json: {e}")))?;
                for (z, p) in stored {
                    st.pending.insert(Challenge::from_hex(&z)?, p);
                }
            }
        }
        Ok(ledger)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_challenge_ttl(mut self, secs: u64) -> Self {
        self.challenge_ttl = secs;
        self
    }

    pub fn admin_pk(&self) -> &PublicKey {
        &self.admin_pk
    }

    pub fn scheme(&self) -> &dyn SignatureScheme {
        self.scheme.as_ref()
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn verify_coin(&self, coin: &Coin) -> bool {
        verify_coin(self.scheme.as_ref(), &self.admin_pk, coin)
    }

    /// Issues a coin to `recipient`. Coin ids are unique per recipient.
    pub fn mint(&self, recipient: &PublicKey, metadata: CoinMetadata) -> Result<Coin> {
        if recipient.as_bytes().is_empty() {
            return Err(LedgerError::Input("recipient public key is empty".into()));
        }
        if metadata.valid_from > metadata.valid_until {
            return Err(LedgerError::Input("validity window ends before it starts".into()));
        }
        let msg = crate::coin::coin_message(recipient, &metadata);
        let issuer_sig = self.scheme.sign(&self.admin_sk, &msg)?;
        let coin = Coin { owner_pk: recipient.clone(), metadata, issuer_sig };
        let mut st = self.state.lock().expect("ledger lock");
        let key = (recipient.clone(), coin.metadata.coin_id);
        if st.minted.contains(&key) {
            return Err(LedgerError::Input(format!(
                "coin id {} already minted for this recipient",
                coin.metadata.coin_id
            )));
        }
        if let Some(dir) = &self.dir {
            append_line(&dir.join(MINTED_FILE), &coin)?;
        }
        st.minted.insert(key);
        Ok(coin)
    }

    fn save_pending(&self, st: &State) -> Result<()> {
        if let Some(dir) = &self.dir {
            let map: BTreeMap<String, &PendingChallenge> = st.pending.iter().map(|(z, p)| (z.to_hex(), p)).collect();
            let text = serde_json::to_string_pretty(&map).map_err(|e| LedgerError::Corrupt(e.to_string()))?;
            write_atomic(&dir.join(PENDING_FILE), &text)?;
        }
        Ok(())
    }

    /// First phase of a spend: records a fresh challenge against the raw receipt.
    pub fn begin_spend(&self, raw: &RawReceipt) -> Result<Challenge> {
        raw.check_well_formed()?;
        let digest = hex::encode(raw.digest());
        let now = self.clock.now();
        let mut st = self.state.lock().expect("ledger lock");
        let ttl = self.challenge_ttl;
        st.pending.retain(|_, p| now.saturating_sub(p.issued_at) <= ttl);
        let challenge = loop {
            let mut z = [0u8; CHALLENGE_LEN];
            self.scheme.fill_random(&mut z);
            if !st.pending.contains_key(&Challenge(z)) {
                break Challenge(z);
            }
        };
        st.pending.insert(challenge, PendingChallenge { raw_digest: digest, issued_at: now });
        if let Err(e) = self.save_pending(&st) {
            st.pending.remove(&challenge);
            return Err(e);
        }
        Ok(challenge)
    }

    /// Issue time of a live challenge.
    pub fn pending_challenge(&self, challenge: &Challenge) -> Option<u64> {
        let st = self.state.lock().expect("ledger lock");
        st.pending
            .get(challenge)
            .filter(|p| self.clock.now().saturating_sub(p.issued_at) <= self.challenge_ttl)
            .map(|p| p.issued_at)
    }

    /// Second phase of a spend. The challenge is consumed whatever the outcome.
    pub fn finalize_spend(&self, receipt: &Receipt) -> Result<Approval> {
        let raw = &receipt.raw;
        let digest = hex::encode(raw.digest());
        // Signature checks need no shared state, so they run outside the lock.
        let coin_check = raw.coins.iter().find_map(|c| {
            let coin_id = c.metadata.coin_id;
            if c.owner_pk != raw.owner_pk {
                Some(Rejection::OwnerMismatch { coin_id })
            } else if !self.verify_coin(c) {
                Some(Rejection::Counterfeit { coin_id })
            } else {
                None
            }
        });
        let sig_ok = receipt.signature_verifies(self.scheme.as_ref());
        let now = self.clock.now();

        let mut st = self.state.lock().expect("ledger lock");
        let pending = st.pending.remove(&receipt.challenge);
        if pending.is_some() {
            self.save_pending(&st)?;
        }
        let reject = |r: Rejection| Err(LedgerError::Rejected(r));
        let Some(pending) = pending else {
            return reject(Rejection::UnknownChallenge);
        };
        if now.saturating_sub(pending.issued_at) > self.challenge_ttl {
            return reject(Rejection::ExpiredChallenge);
        }
        if pending.raw_digest != digest {
            return reject(Rejection::ChallengeMismatch);
        }
        if raw.coins.is_empty() {
            return Err(LedgerError::Input("receipt lists no coins".into()));
        }
        if let Some(r) = coin_check {
            return reject(r);
        }
        if let Some(c) = raw.coins.iter().find(|c| !c.metadata.is_valid_at(now)) {
            return reject(Rejection::CoinExpired { coin_id: c.metadata.coin_id });
        }
        let mut seen = HashSet::new();
        for c in &raw.coins {
            let key = (c.owner_pk.clone(), c.metadata.coin_id);
            if st.spent.contains(&key) || !seen.insert(key) {
                return reject(Rejection::DoubleSpend { coin_id: c.metadata.coin_id });
            }
        }
        if !sig_ok {
            return reject(Rejection::BadSignature);
        }
        let record = ApprovedRecord {
            index: st.approved.len() as u64,
            approved_at: now,
            receipt_digest: hex::encode(receipt.digest()),
            receipt: receipt.clone(),
        };
        if let Some(dir) = &self.dir {
            append_line(&dir.join(APPROVED_FILE), &record)?;
        }
        for key in seen {
            st.spent.insert(key);
        }
        let approval = Approval { index: record.index, receipt_digest: record.receipt_digest.clone() };
        st.approved.push(record);
        Ok(approval)
    }

    pub fn approved_count(&self) -> usize {
        self.state.lock().expect("ledger lock").approved.len()
    }

    pub fn is_spent(&self, owner: &PublicKey, coin_id: u64) -> bool {
        self.state.lock().expect("ledger lock").spent.contains(&(owner.clone(), coin_id))
    }

    /// Re-verifies every approved receipt: from disk for a persistent ledger,
    /// from memory otherwise.
    pub fn audit_log(&self) -> Result<AuditReport> {
        match &self.dir {
            Some(dir) => audit_directory(dir),
            None => {
                let st = self.state.lock().expect("ledger lock");
                Ok(audit_records(self.scheme.as_ref(), &self.admin_pk, &st.approved))
            }
        }
    }
}

/// Reads a JSON document from a file, for CLI request and coin files.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| LedgerError::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut text = String::new();
    for line in BufReader::new(f).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    serde_json::from_str(&text).map_err(|e| LedgerError::Input(format!("{}: {e}", path.display())))
}
