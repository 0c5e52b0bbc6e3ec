//! Append-only JSON Lines audit trail.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Login,
    Search,
    PageNav,
    ExpandDoc,
    Export,
    RejectedQuery,
}

impl std::str::FromStr for AuditAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown action {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub timestamp: DateTime<Utc>,
    pub user_id: Option<String>,
    pub action: AuditAction,
    /// Verbatim, before sanitizing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_number: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client: Option<String>,
    /// Outcome code for failures, the document id for expansions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl AuditRecord {
    pub fn new(action: AuditAction, user_id: Option<&str>) -> Self {
        AuditRecord {
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
            user_id: user_id.map(str::to_string),
            action,
            query_text: None,
            result_count: None,
            page_number: None,
            client: None,
            detail: None,
        }
    }

    pub fn query(mut self, q: &str) -> Self {
        self.query_text = Some(q.to_string());
        self
    }

    pub fn results(mut self, n: usize) -> Self {
        self.result_count = Some(n);
        self
    }

    pub fn page(mut self, p: usize) -> Self {
        self.page_number = Some(p);
        self
    }

    pub fn client(mut self, c: Option<String>) -> Self {
        self.client = c;
        self
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditFilter {
    pub user: Option<String>,
    pub action: Option<AuditAction>,
    /// Inclusive bounds.
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
}

impl AuditFilter {
    pub fn matches(&self, r: &AuditRecord) -> bool {
        self.user.as_ref().is_none_or(|u| r.user_id.as_ref() == Some(u))
            && self.action.is_none_or(|a| r.action == a)
            && self.from.is_none_or(|t| r.timestamp >= t)
            && self.to.is_none_or(|t| r.timestamp <= t)
    }
}

enum Sink {
    File { file: File, path: PathBuf },
    Memory(Vec<AuditRecord>),
}

struct Inner {
    sink: Sink,
    last: DateTime<Utc>,
}

/// Serialized writer; timestamps never go backwards even if the clock does.
pub struct AuditLog {
    inner: Mutex<Inner>,
}

fn read_file(path: &Path) -> io::Result<Vec<AuditRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(vec![]),
        Err(e) => return Err(e),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

impl AuditLog {
    pub fn in_memory() -> Self {
        AuditLog { inner: Mutex::new(Inner { sink: Sink::Memory(vec![]), last: DateTime::<Utc>::MIN_UTC }) }
    }

    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let last = read_file(&path)?.last().map_or(DateTime::<Utc>::MIN_UTC, |r| r.timestamp);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(AuditLog { inner: Mutex::new(Inner { sink: Sink::File { file, path }, last }) })
    }

    /// Stamps and appends one record.
    pub fn append(&self, mut record: AuditRecord, now: DateTime<Utc>) -> io::Result<AuditRecord> {
        let mut inner = self.inner.lock();
        record.timestamp = now.max(inner.last);
        match &mut inner.sink {
            Sink::File { file, .. } => {
                let mut line = serde_json::to_vec(&record).expect("audit records serialize");
                line.push(b'\n');
                file.write_all(&line)?;
            }
            Sink::Memory(v) => v.push(record.clone()),
        }
        inner.last = record.timestamp;
        Ok(record)
    }

    /// Every record in write order.
    pub fn records(&self) -> io::Result<Vec<AuditRecord>> {
        let inner = self.inner.lock();
        match &inner.sink {
            Sink::File { path, .. } => read_file(path),
            Sink::Memory(v) => Ok(v.clone()),
        }
    }

    pub fn query(&self, filter: &AuditFilter) -> io::Result<Vec<AuditRecord>> {
        Ok(self.records()?.into_iter().filter(|r| filter.matches(r)).collect())
    }

    /// Forces appended records to stable storage.
    pub fn sync(&self) -> io::Result<()> {
        match &self.inner.lock().sink {
            Sink::File { file, .. } => file.sync_data(),
            Sink::Memory(_) => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeDelta;

    fn t(s: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000 + s, 0).unwrap()
    }

    #[test]
    fn append_and_filter() {
        let dir = tempfile::tempdir().unwrap();
        let log = AuditLog::open(dir.path().join("a/audit.jsonl")).unwrap();
        log.append(AuditRecord::new(AuditAction::Search, Some("u")).query("x"), t(0)).unwrap();
        log.append(AuditRecord::new(AuditAction::PageNav, Some("u")).page(2), t(10)).unwrap();
        log.append(AuditRecord::new(AuditAction::Search, Some("v")), t(20)).unwrap();
        let only_u = AuditFilter { user: Some("u".into()), ..Default::default() };
        assert_eq!(log.query(&only_u).unwrap().len(), 2);
        let searches = AuditFilter { action: Some(AuditAction::Search), ..Default::default() };
        assert_eq!(log.query(&searches).unwrap().len(), 2);
        let window = AuditFilter { from: Some(t(5)), to: Some(t(10)), ..Default::default() };
        assert_eq!(log.query(&window).unwrap().len(), 1);
        let boundary = AuditFilter { from: Some(t(10)), to: Some(t(20)), ..Default::default() };
        assert_eq!(log.query(&boundary).unwrap().len(), 2);
        assert_eq!(log.records().unwrap(), log.records().unwrap());
    }

    #[test]
    fn timestamps_are_monotone_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let log = AuditLog::open(&path).unwrap();
        log.append(AuditRecord::new(AuditAction::Login, Some("u")), t(100)).unwrap();
        let r = log.append(AuditRecord::new(AuditAction::Login, Some("u")), t(50)).unwrap();
        assert_eq!(r.timestamp, t(100));
        drop(log);
        let log = AuditLog::open(&path).unwrap();
        let r = log.append(AuditRecord::new(AuditAction::Login, Some("u")), t(100) - TimeDelta::seconds(1)).unwrap();
        assert_eq!(r.timestamp, t(100));
        assert_eq!(log.records().unwrap().len(), 3);
        assert!(std::fs::read_to_string(&path).unwrap().lines().all(|l| l.starts_with('{')));
    }

    #[test]
    fn action_names() {
        assert_eq!("page_nav".parse::<AuditAction>().unwrap(), AuditAction::PageNav);
        assert!("nap".parse::<AuditAction>().is_err());
        assert_eq!(serde_json::to_string(&AuditAction::RejectedQuery).unwrap(), "\"rejected_query\"");
    }
}
