//! Access tiers, accounts and sessions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use argon2::password_hash::rand_core::OsRng;
use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};
use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::{Mutex, RwLock};
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Credential layers, ordered: a grant of one tier includes every lower tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Network = 1,
    Searcher = 2,
    Researcher = 3,
    ImageViewer = 4,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Network => "network",
            Tier::Searcher => "searcher",
            Tier::Researcher => "researcher",
            Tier::ImageViewer => "image_viewer",
        })
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "network" => Ok(Tier::Network),
            "searcher" => Ok(Tier::Searcher),
            "researcher" => Ok(Tier::Researcher),
            "image_viewer" => Ok(Tier::ImageViewer),
            _ => Err(format!("unknown tier {s:?}")),
        }
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Settable clock for tests.
#[derive(Clone)]
pub struct ManualClock(Arc<Mutex<DateTime<Utc>>>);

impl ManualClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        ManualClock(Arc::new(Mutex::new(at)))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock() = at;
    }

    pub fn advance(&self, by: TimeDelta) {
        *self.0.lock() += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub user_id: String,
    /// PHC string; carries its own salt and cost parameters.
    pub password_hash: String,
    pub tier: Tier,
    /// Approved protocol the researcher tier is tied to.
    pub protocol_tag: Option<String>,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AuthError {
    #[error("missing bearer token")]
    MissingToken,
    #[error("unknown session")]
    InvalidToken,
    #[error("session expired")]
    Expired,
    #[error("bad credentials")]
    BadCredentials,
    #[error("tier {requested} not granted")]
    TierDenied { requested: Tier },
    #[error("researcher tier needs a registered protocol tag")]
    MissingProtocol,
}

impl AuthError {
    pub fn code(&self) -> &'static str {
        match self {
            AuthError::MissingToken => "missing_token",
            AuthError::InvalidToken => "invalid_token",
            AuthError::Expired => "session_expired",
            AuthError::BadCredentials => "bad_credentials",
            AuthError::TierDenied { .. } => "tier_denied",
            AuthError::MissingProtocol => "missing_protocol",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum UserStoreError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt user file {path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
    #[error("user {0:?} already exists")]
    Exists(String),
    #[error("invalid account: {0}")]
    Invalid(String),
    #[error("password hashing failed: {0}")]
    Hash(String),
}

/// Argon2id cost. `fast` exists for tests only.
#[derive(Debug, Clone, Copy)]
pub struct HashCost {
    pub memory_kib: u32,
    pub iterations: u32,
}

impl Default for HashCost {
    fn default() -> Self {
        HashCost { memory_kib: Params::DEFAULT_M_COST, iterations: Params::DEFAULT_T_COST }
    }
}

impl HashCost {
    pub fn fast() -> Self {
        HashCost { memory_kib: Params::MIN_M_COST, iterations: 1 }
    }
}

pub fn hash_password(password: &str, cost: HashCost) -> Result<String, UserStoreError> {
    let params = Params::new(cost.memory_kib, cost.iterations, 1, None).map_err(|e| UserStoreError::Hash(e.to_string()))?;
    let salt = SaltString::generate(&mut OsRng);
    Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
        .hash_password(password.as_bytes(), &salt)
        .map(|h| h.to_string())
        .map_err(|e| UserStoreError::Hash(e.to_string()))
}

fn verify_password(password: &str, phc: &str) -> bool {
    PasswordHash::new(phc).is_ok_and(|h| Argon2::default().verify_password(password.as_bytes(), &h).is_ok())
}

/// Accounts persisted as one JSON file.
pub struct UserStore {
    path: Option<PathBuf>,
    accounts: RwLock<BTreeMap<String, Account>>,
    /// Verified against when the user is unknown, so both paths cost the same.
    decoy: String,
}

impl UserStore {
    pub fn in_memory() -> Self {
        UserStore { path: None, accounts: RwLock::default(), decoy: hash_password("decoy", HashCost::fast()).unwrap() }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, UserStoreError> {
        let path = path.as_ref().to_path_buf();
        let accounts = match std::fs::read(&path) {
            Ok(bytes) => {
                let list: Vec<Account> = serde_json::from_slice(&bytes)
                    .map_err(|source| UserStoreError::Corrupt { path: path.clone(), source })?;
                list.into_iter().map(|a| (a.user_id.clone(), a)).collect()
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(source) => return Err(UserStoreError::Io { path, source }),
        };
        let decoy = hash_password("decoy", HashCost::fast())?;
        Ok(UserStore { path: Some(path), accounts: RwLock::new(accounts), decoy })
    }

    pub fn add(
        &self,
        user_id: &str,
        password: &str,
        tier: Tier,
        protocol_tag: Option<String>,
        cost: HashCost,
        now: DateTime<Utc>,
    ) -> Result<Account, UserStoreError> {
        if user_id.trim().is_empty() || password.len() < 8 {
            return Err(UserStoreError::Invalid("user id must be non-empty and password at least 8 characters".into()));
        }
        if tier == Tier::Network {
            return Err(UserStoreError::Invalid("the network tier is an address allowlist, not an account".into()));
        }
        if tier >= Tier::Researcher && protocol_tag.as_deref().is_none_or(|p| p.trim().is_empty()) {
            return Err(UserStoreError::Invalid("researcher accounts need a protocol tag".into()));
        }
        let account = Account {
            user_id: user_id.to_string(),
            password_hash: hash_password(password, cost)?,
            tier,
            protocol_tag,
            created_at: now,
        };
        let mut accounts = self.accounts.write();
        if accounts.contains_key(user_id) {
            return Err(UserStoreError::Exists(user_id.to_string()));
        }
        accounts.insert(user_id.to_string(), account.clone());
        self.save(&accounts)?;
        Ok(account)
    }

    fn save(&self, accounts: &BTreeMap<String, Account>) -> Result<(), UserStoreError> {
        let Some(path) = &self.path else { return Ok(()) };
        let io = |source| UserStoreError::Io { path: path.clone(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let list: Vec<&Account> = accounts.values().collect();
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&list).expect("accounts serialize")).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn get(&self, user_id: &str) -> Option<Account> {
        self.accounts.read().get(user_id).cloned()
    }

    /// Accounts ordered by user id.
    pub fn list(&self) -> Vec<Account> {
        self.accounts.read().values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.accounts.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the password and that `requested` is within the account's grant.
    pub fn authenticate(&self, user_id: &str, password: &str, requested: Tier) -> Result<Account, AuthError> {
        let account = self.get(user_id);
        let phc = account.as_ref().map_or(self.decoy.as_str(), |a| a.password_hash.as_str());
        let ok = verify_password(password, phc);
        let account = account.filter(|_| ok).ok_or(AuthError::BadCredentials)?;
        if requested > account.tier || requested == Tier::Network || requested == Tier::ImageViewer {
            return Err(AuthError::TierDenied { requested });
        }
        if requested == Tier::Researcher && account.protocol_tag.is_none() {
            return Err(AuthError::MissingProtocol);
        }
        Ok(account)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user_id: String,
    pub tier: Tier,
    pub protocol_tag: Option<String>,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

impl Session {
    pub fn allows(&self, required: Tier) -> bool {
        self.tier >= required
    }
}

/// Issued sessions plus the ids of the one result page each session may open.
#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Session>>,
    pages: Mutex<HashMap<String, Vec<String>>>,
}

impl SessionStore {
    pub fn issue(&self, account: &Account, tier: Tier, now: DateTime<Utc>, ttl: TimeDelta) -> Session {
        let mut bytes = [0u8; 32];
        rand::thread_rng().fill_bytes(&mut bytes);
        let session = Session {
            token: hex::encode(bytes),
            user_id: account.user_id.clone(),
            tier,
            protocol_tag: account.protocol_tag.clone(),
            issued_at: now,
            expires_at: now + ttl,
        };
        self.sessions.write().insert(session.token.clone(), session.clone());
        session
    }

    pub fn validate(&self, token: &str, now: DateTime<Utc>) -> Result<Session, AuthError> {
        let session = self.sessions.read().get(token).cloned().ok_or(AuthError::InvalidToken)?;
        if now >= session.expires_at {
            self.sessions.write().remove(token);
            self.pages.lock().remove(token);
            return Err(AuthError::Expired);
        }
        Ok(session)
    }

    /// Replaces the page of documents `token` may expand.
    pub fn set_page(&self, token: &str, doc_ids: Vec<String>) {
        self.pages.lock().insert(token.to_string(), doc_ids);
    }

    pub fn on_page(&self, token: &str, doc_id: &str) -> bool {
        self.pages.lock().get(token).is_some_and(|ids| ids.iter().any(|d| d == doc_id))
    }
}
