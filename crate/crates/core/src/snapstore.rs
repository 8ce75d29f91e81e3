//! Append-log store for snapshots, reviews and top-k observations.
//!
//! A store is a directory holding three newline-delimited JSON logs
//! (`snapshots.jsonl`, `reviews.jsonl`, `topk.jsonl`) and an optional
//! `manifest.json`. The in-memory index is rebuilt from the logs on open.
//!
//! Records are keyed by entity and time: `(app, fetch_time)` for snapshots,
//! `(app, review_id)` for reviews and `(list_type, fetch_time)` for ranked
//! lists. Re-ingesting an identical payload under an existing key is a no-op;
//! a different payload under an existing key is rejected as a conflict.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    validate_review, validate_snapshot, validate_topk, AppId, AppSnapshot, ListType, ReviewRecord, Timestamp,
    TopKObservation,
};

pub const SNAPSHOTS_FILE: &str = "snapshots.jsonl";
pub const REVIEWS_FILE: &str = "reviews.jsonl";
pub const TOPK_FILE: &str = "topk.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".ingest.lock";

const BATCH_SIZE: usize = 4_096;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid window: end {end} precedes start {start}")]
    InvalidWindow { start: Timestamp, end: Timestamp },
    #[error("corrupt log {file} at line {line}: {reason}")]
    Corrupt { file: &'static str, line: usize, reason: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("store at {0} is locked by another ingest")]
    Locked(PathBuf),
}

impl StoreError {
    fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        StoreError::Io { path: path.into(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub currency: String,
    pub observation_start: NaiveDate,
    pub observation_end: NaiveDate,
    pub snapshot_cadence_hint: String,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.observation_start > self.observation_end {
            return Err(StoreError::InvalidManifest(format!(
                "observation_start {} after observation_end {}",
                self.observation_start, self.observation_end
            )));
        }
        let code_ok = self.currency.len() == 3 && self.currency.chars().all(|c| c.is_ascii_uppercase());
        if !code_ok {
            return Err(StoreError::InvalidManifest(format!("currency {:?} is not an ISO-4217 code", self.currency)));
        }
        Ok(())
    }
}

/// Inclusive time window in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeRange {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeRange {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Self { start, end }
    }

    pub fn all() -> Self {
        Self { start: Timestamp::MIN, end: Timestamp::MAX }
    }

    fn checked(self) -> Result<Self, StoreError> {
        if self.end < self.start {
            return Err(StoreError::InvalidWindow { start: self.start, end: self.end });
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppSeries {
    pub app: AppId,
    /// Strictly increasing in `fetch_time`.
    pub snapshots: Vec<AppSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedListSeries {
    pub list_type: ListType,
    /// Strictly increasing in `fetch_time`.
    pub observations: Vec<TopKObservation>,
}

impl RankedListSeries {
    /// Builds a series, sorting by fetch time. Returns `None` when observations
    /// disagree on list type or share a fetch time.
    pub fn from_observations(list_type: ListType, mut observations: Vec<TopKObservation>) -> Option<Self> {
        if observations.iter().any(|o| o.list_type != list_type) {
            return None;
        }
        observations.sort_by_key(|o| o.fetch_time);
        if observations.windows(2).any(|w| w[0].fetch_time == w[1].fetch_time) {
            return None;
        }
        Some(Self { list_type, observations })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Rank of `app` in observation `n` (1-based rank), if present.
    pub fn rank(&self, n: usize, app: &AppId) -> Option<usize> {
        self.observations.get(n)?.rank_of(app)
    }
}

#[derive(Debug, Clone)]
pub enum Record {
    Snapshot(AppSnapshot),
    Review(ReviewRecord),
    TopK(TopKObservation),
}

impl Record {
    pub fn kind(&self) -> RecordKind {
        match self {
            Record::Snapshot(_) => RecordKind::Snapshot,
            Record::Review(_) => RecordKind::Review,
            Record::TopK(_) => RecordKind::TopK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Snapshot,
    Review,
    TopK,
}

impl RecordKind {
    pub const ALL: [RecordKind; 3] = [RecordKind::Snapshot, RecordKind::Review, RecordKind::TopK];

    pub fn file_name(&self) -> &'static str {
        match self {
            RecordKind::Snapshot => SNAPSHOTS_FILE,
            RecordKind::Review => REVIEWS_FILE,
            RecordKind::TopK => TOPK_FILE,
        }
    }

    fn decode(&self, line: &str) -> Result<Record, String> {
        let record = match self {
            RecordKind::Snapshot => serde_json::from_str(line).map(Record::Snapshot),
            RecordKind::Review => serde_json::from_str(line).map(Record::Review),
            RecordKind::TopK => serde_json::from_str(line).map(Record::TopK),
        };
        record.map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KindCounts {
    pub accepted: usize,
    pub deduplicated: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub kind: RecordKind,
    /// 1-based line number when the record came from a file.
    pub line: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub counts: BTreeMap<RecordKind, KindCounts>,
    pub rejections: Vec<Rejection>,
}

impl IngestReport {
    pub fn for_kind(&self, kind: RecordKind) -> KindCounts {
        self.counts.get(&kind).cloned().unwrap_or_default()
    }

    pub fn total_accepted(&self) -> usize {
        self.counts.values().map(|c| c.accepted).sum()
    }

    pub fn merge(&mut self, other: IngestReport) {
        for (kind, c) in other.counts {
            let e = self.counts.entry(kind).or_default();
            e.accepted += c.accepted;
            e.deduplicated += c.deduplicated;
            e.rejected += c.rejected;
        }
        self.rejections.extend(other.rejections);
    }

    fn reject(&mut self, kind: RecordKind, line: Option<usize>, reason: String) {
        self.counts.entry(kind).or_default().rejected += 1;
        self.rejections.push(Rejection { kind, line, reason });
    }
}

type PayloadHash = [u8; 32];

#[derive(Debug, Clone)]
struct Entry<T> {
    record: T,
    offset: u64,
    hash: PayloadHash,
}

#[derive(Debug, Default)]
struct Index {
    snapshots: BTreeMap<AppId, BTreeMap<Timestamp, Entry<AppSnapshot>>>,
    reviews: BTreeMap<AppId, BTreeMap<String, Entry<ReviewRecord>>>,
    topk: BTreeMap<ListType, BTreeMap<Timestamp, Entry<TopKObservation>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Key {
    Snapshot(AppId, Timestamp),
    Review(AppId, String),
    TopK(ListType, Timestamp),
}

enum Lookup {
    Absent,
    Same,
    Conflict,
}

impl Index {
    fn lookup(&self, key: &Key, hash: &PayloadHash) -> Lookup {
        let existing = match key {
            Key::Snapshot(app, t) => self.snapshots.get(app).and_then(|m| m.get(t)).map(|e| e.hash),
            Key::Review(app, id) => self.reviews.get(app).and_then(|m| m.get(id)).map(|e| e.hash),
            Key::TopK(lt, t) => self.topk.get(lt).and_then(|m| m.get(t)).map(|e| e.hash),
        };
        match existing {
            None => Lookup::Absent,
            Some(h) if &h == hash => Lookup::Same,
            Some(_) => Lookup::Conflict,
        }
    }

    fn insert(&mut self, record: Record, offset: u64, hash: PayloadHash) {
        match record {
            Record::Snapshot(s) => {
                self.snapshots
                    .entry(s.app.clone())
                    .or_default()
                    .insert(s.fetch_time, Entry { record: s, offset, hash });
            }
            Record::Review(r) => {
                self.reviews
                    .entry(r.app.clone())
                    .or_default()
                    .insert(r.review_id.clone(), Entry { record: r, offset, hash });
            }
            Record::TopK(o) => {
                self.topk.entry(o.list_type).or_default().insert(o.fetch_time, Entry { record: o, offset, hash });
            }
        }
    }
}

fn key_of(record: &Record) -> Key {
    match record {
        Record::Snapshot(s) => Key::Snapshot(s.app.clone(), s.fetch_time),
        Record::Review(r) => Key::Review(r.app.clone(), r.review_id.clone()),
        Record::TopK(o) => Key::TopK(o.list_type, o.fetch_time),
    }
}

fn encode(record: &Record) -> String {
    let encoded = match record {
        Record::Snapshot(s) => serde_json::to_string(s),
        Record::Review(r) => serde_json::to_string(r),
        Record::TopK(o) => serde_json::to_string(o),
    };
    encoded.expect("records always serialize")
}

fn hash_payload(line: &str) -> PayloadHash {
    Sha256::digest(line.as_bytes()).into()
}

fn violations(record: &Record) -> Vec<String> {
    let v = match record {
        Record::Snapshot(s) => validate_snapshot(s),
        Record::Review(r) => validate_review(r),
        Record::TopK(o) => validate_topk(o),
    };
    v.iter().map(ToString::to_string).collect()
}

/// Releases the ingest lock file on drop.
struct IngestLock(PathBuf);

impl IngestLock {
    fn acquire(root: &Path) -> Result<Self, StoreError> {
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self(path)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked(root.to_path_buf())),
            Err(e) => Err(StoreError::io(path, e)),
        }
    }
}

impl Drop for IngestLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// One pending write: a validated record and its encoded line.
struct Pending {
    record: Record,
    line: String,
    hash: PayloadHash,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    manifest: Option<DatasetManifest>,
    index: Index,
}

impl Store {
    /// Opens (creating if needed) the store at `root` and rebuilds its index.
    ///
    /// A trailing line without a newline is an interrupted append; it is
    /// truncated away.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| StoreError::io(&manifest_path, e))?;
            let m: DatasetManifest =
                serde_json::from_str(&text).map_err(|e| StoreError::InvalidManifest(e.to_string()))?;
            m.validate()?;
            Some(m)
        } else {
            None
        };
        let mut store = Self { root, manifest, index: Index::default() };
        for kind in RecordKind::ALL {
            store.load_log(kind)?;
        }
        Ok(store)
    }

    fn load_log(&mut self, kind: RecordKind) -> Result<(), StoreError> {
        let path = self.root.join(kind.file_name());
        if !path.exists() {
            return Ok(());
        }
        let mut file = File::open(&path).map_err(|e| StoreError::io(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| StoreError::io(&path, e))?;
        let committed = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if committed < bytes.len() {
            let f = OpenOptions::new().write(true).open(&path).map_err(|e| StoreError::io(&path, e))?;
            f.set_len(committed as u64).map_err(|e| StoreError::io(&path, e))?;
        }
        let mut offset = 0u64;
        for (i, raw) in bytes[..committed].split(|&b| b == b'\n').enumerate() {
            let line_len = raw.len() as u64 + 1;
            if offset >= committed as u64 {
                break;
            }
            let corrupt = |reason: String| StoreError::Corrupt { file: kind.file_name(), line: i + 1, reason };
            let text = std::str::from_utf8(raw).map_err(|e| corrupt(e.to_string()))?;
            if !text.trim().is_empty() {
                let record = kind.decode(text).map_err(corrupt)?;
                let hash = hash_payload(&encode(&record));
                self.index.insert(record, offset, hash);
            }
            offset += line_len;
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> Option<&DatasetManifest> {
        self.manifest.as_ref()
    }

    /// Writes `manifest.json` atomically.
    pub fn set_manifest(&mut self, manifest: DatasetManifest) -> Result<(), StoreError> {
        manifest.validate()?;
        let path = self.root.join(MANIFEST_FILE);
        let tmp = self.root.join(format!("{MANIFEST_FILE}.tmp"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&tmp, text).map_err(|e| StoreError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| StoreError::io(&path, e))?;
        self.manifest = Some(manifest);
        Ok(())
    }

    /// Ingests already-decoded records.
    pub fn ingest<I>(&mut self, records: I) -> Result<IngestReport, StoreError>
    where
        I: IntoIterator<Item = Record>,
    {
        let _lock = IngestLock::acquire(&self.root)?;
        self.ingest_iter(records.into_iter().map(|r| (None, Ok(r))))
    }

    /// Ingests one JSONL stream of `kind` records. Undecodable lines are
    /// rejected with their 1-based line number.
    pub fn ingest_jsonl<R: BufRead>(&mut self, kind: RecordKind, reader: R) -> Result<IngestReport, StoreError> {
        let _lock = IngestLock::acquire(&self.root)?;
        let mut read_error = None;
        let lines = reader.lines().enumerate().map_while(|(i, line)| match line {
            Ok(l) => Some((i + 1, l)),
            Err(e) => {
                read_error = Some(e);
                None
            }
        });
        let decoded =
            lines.filter(|(_, l)| !l.trim().is_empty()).map(|(n, l)| (Some(n), kind.decode(&l).map_err(|e| (kind, e))));
        let report = self.ingest_iter(decoded)?;
        if let Some(e) = read_error {
            return Err(StoreError::io(self.root.join(kind.file_name()), e));
        }
        Ok(report)
    }

    /// Ingests a dataset directory: `manifest.json` (if present and the store
    /// has none yet) followed by each of the three logs that exist.
    pub fn ingest_dir(&mut self, dir: impl AsRef<Path>) -> Result<IngestReport, StoreError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        if self.manifest.is_none() && manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| StoreError::io(&manifest_path, e))?;
            let m: DatasetManifest =
                serde_json::from_str(&text).map_err(|e| StoreError::InvalidManifest(e.to_string()))?;
            self.set_manifest(m)?;
        }
        let mut report = IngestReport::default();
        for kind in RecordKind::ALL {
            let path = dir.join(kind.file_name());
            if !path.exists() {
                continue;
            }
            let file = File::open(&path).map_err(|e| StoreError::io(&path, e))?;
            report.merge(self.ingest_jsonl(kind, BufReader::new(file))?);
        }
        Ok(report)
    }

    fn ingest_iter<I>(&mut self, records: I) -> Result<IngestReport, StoreError>
    where
        I: Iterator<Item = (Option<usize>, Result<Record, (RecordKind, String)>)>,
    {
        let mut report = IngestReport::default();
        let mut batch: Vec<Pending> = Vec::new();
        let mut batch_keys: HashMap<Key, PayloadHash> = HashMap::new();
        for (line, decoded) in records {
            let record = match decoded {
                Ok(r) => r,
                Err((kind, reason)) => {
                    report.reject(kind, line, format!("malformed record: {reason}"));
                    continue;
                }
            };
            let kind = record.kind();
            let problems = violations(&record);
            if !problems.is_empty() {
                report.reject(kind, line, problems.join("; "));
                continue;
            }
            let encoded = encode(&record);
            let hash = hash_payload(&encoded);
            let key = key_of(&record);
            let pending_hit = batch_keys.get(&key).map(|h| *h == hash);
            let outcome = match pending_hit {
                Some(true) => Lookup::Same,
                Some(false) => Lookup::Conflict,
                None => self.index.lookup(&key, &hash),
            };
            match outcome {
                Lookup::Same => report.counts.entry(kind).or_default().deduplicated += 1,
                Lookup::Conflict => {
                    report.reject(kind, line, "conflict: different payload already stored under this key".into())
                }
                Lookup::Absent => {
                    report.counts.entry(kind).or_default().accepted += 1;
                    batch_keys.insert(key, hash);
                    batch.push(Pending { record, line: encoded, hash });
                    if batch.len() >= BATCH_SIZE {
                        self.commit(std::mem::take(&mut batch))?;
                        batch_keys.clear();
                    }
                }
            }
        }
        self.commit(batch)?;
        Ok(report)
    }

    /// Appends a batch to the logs and then publishes it to the index. On
    /// failure the logs are truncated back to their pre-batch length.
    fn commit(&mut self, batch: Vec<Pending>) -> Result<(), StoreError> {
        if batch.is_empty() {
            return Ok(());
        }
        let mut per_kind: BTreeMap<RecordKind, Vec<Pending>> = BTreeMap::new();
        for p in batch {
            per_kind.entry(p.record.kind()).or_default().push(p);
        }
        let mut written: Vec<(PathBuf, u64)> = Vec::new();
        let mut staged: Vec<(Record, u64, PayloadHash)> = Vec::new();
        let result = (|| {
            for (kind, items) in per_kind {
                let path = self.root.join(kind.file_name());
                let mut file =
                    OpenOptions::new().create(true).append(true).open(&path).map_err(|e| StoreError::io(&path, e))?;
                let start = file.seek(SeekFrom::End(0)).map_err(|e| StoreError::io(&path, e))?;
                written.push((path.clone(), start));
                let mut buf = String::new();
                let mut offset = start;
                for p in items {
                    staged.push((p.record, offset, p.hash));
                    offset += p.line.len() as u64 + 1;
                    buf.push_str(&p.line);
                    buf.push('\n');
                }
                file.write_all(buf.as_bytes()).and_then(|_| file.sync_data()).map_err(|e| StoreError::io(&path, e))?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            for (path, len) in written {
                if let Ok(f) = OpenOptions::new().write(true).open(&path) {
                    let _ = f.set_len(len);
                }
            }
            return Err(e);
        }
        for (record, offset, hash) in staged {
            self.index.insert(record, offset, hash);
        }
        Ok(())
    }

    /// Snapshots of `app` with `fetch_time` in the inclusive window.
    pub fn query_app_series(&self, app: &AppId, window: TimeRange) -> Result<AppSeries, StoreError> {
        let w = window.checked()?;
        let snapshots = self
            .index
            .snapshots
            .get(app)
            .map(|m| m.range(w.start..=w.end).map(|(_, e)| e.record.clone()).collect())
            .unwrap_or_default();
        Ok(AppSeries { app: app.clone(), snapshots })
    }

    pub fn query_list_series(&self, list_type: ListType, window: TimeRange) -> Result<RankedListSeries, StoreError> {
        let w = window.checked()?;
        let observations = self
            .index
            .topk
            .get(&list_type)
            .map(|m| m.range(w.start..=w.end).map(|(_, e)| e.record.clone()).collect())
            .unwrap_or_default();
        Ok(RankedListSeries { list_type, observations })
    }

    /// Reviews of `app` ordered by date, then review id.
    pub fn reviews_for(&self, app: &AppId) -> Vec<ReviewRecord> {
        let mut out: Vec<ReviewRecord> =
            self.index.reviews.get(app).map(|m| m.values().map(|e| e.record.clone()).collect()).unwrap_or_default();
        out.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.review_id.cmp(&b.review_id)));
        out
    }

    pub fn review_counts(&self) -> HashMap<AppId, usize> {
        self.index.reviews.iter().map(|(app, m)| (app.clone(), m.len())).collect()
    }

    /// Apps with at least one snapshot, sorted.
    pub fn apps(&self) -> impl Iterator<Item = &AppId> {
        self.index.snapshots.keys()
    }

    /// Apps with at least one review, sorted.
    pub fn reviewed_apps(&self) -> impl Iterator<Item = &AppId> {
        self.index.reviews.keys()
    }

    pub fn list_types(&self) -> impl Iterator<Item = ListType> + '_ {
        self.index.topk.keys().copied()
    }

    /// Full series of every app, sorted by app id.
    pub fn all_series(&self) -> Vec<AppSeries> {
        self.index
            .snapshots
            .iter()
            .map(|(app, m)| AppSeries { app: app.clone(), snapshots: m.values().map(|e| e.record.clone()).collect() })
            .collect()
    }

    /// Most recent snapshot of every app, sorted by app id.
    pub fn latest_snapshots(&self) -> Vec<AppSnapshot> {
        self.index.snapshots.values().filter_map(|m| m.values().next_back().map(|e| e.record.clone())).collect()
    }

    /// Byte offsets of `app`'s snapshot lines in `snapshots.jsonl`, by fetch time.
    pub fn snapshot_offsets(&self, app: &AppId) -> Vec<(Timestamp, u64)> {
        self.index.snapshots.get(app).map(|m| m.iter().map(|(t, e)| (*t, e.offset)).collect()).unwrap_or_default()
    }

    pub fn snapshot_count(&self) -> usize {
        self.index.snapshots.values().map(BTreeMap::len).sum()
    }

    pub fn review_count(&self) -> usize {
        self.index.reviews.values().map(BTreeMap::len).sum()
    }

    pub fn topk_count(&self) -> usize {
        self.index.topk.values().map(BTreeMap::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{app, date, snapshot};
    use crate::model::SECONDS_PER_HOUR;

    fn line(s: &AppSnapshot) -> String {
        serde_json::to_string(s).unwrap()
    }

    #[test]
    fn double_ingest_of_same_line_dedups() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let l = line(&snapshot("a"));
        let input = format!("{l}\n{l}\n");
        let report = store.ingest_jsonl(RecordKind::Snapshot, input.as_bytes()).unwrap();
        let c = report.for_kind(RecordKind::Snapshot);
        assert_eq!((c.accepted, c.deduplicated, c.rejected), (1, 1, 0));
    }

    #[test]
    fn review_rating_six_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let input = r#"{"app":"a","review_id":"r1","reviewer_id":"u","date":"2014-01-02","rating":6,"title":"","text":""}
not json
"#;
        let report = store.ingest_jsonl(RecordKind::Review, input.as_bytes()).unwrap();
        assert_eq!(report.for_kind(RecordKind::Review).rejected, 2);
        assert_eq!(report.rejections[0].line, Some(1));
        assert!(report.rejections[0].reason.contains("rating out of range"));
        assert_eq!(report.rejections[1].line, Some(2));
        assert!(report.rejections[1].reason.starts_with("malformed record"));
    }

    #[test]
    fn conflicting_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let a = snapshot("a");
        let mut b = a.clone();
        b.price_cents = 99;
        let r = store.ingest(vec![Record::Snapshot(a.clone()), Record::Snapshot(b.clone())]).unwrap();
        assert_eq!(r.for_kind(RecordKind::Snapshot).accepted, 1);
        assert!(r.rejections[0].reason.starts_with("conflict"));
        let r = store.ingest(vec![Record::Snapshot(b)]).unwrap();
        assert_eq!(r.for_kind(RecordKind::Snapshot).rejected, 1);
        let series = store.query_app_series(&app("a"), TimeRange::all()).unwrap();
        assert_eq!(series.snapshots, vec![a]);
    }

    #[test]
    fn window_queries() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        let base = snapshot("a");
        let recs: Vec<_> = (0..3)
            .map(|i| {
                let mut s = base.clone();
                s.fetch_time += i * SECONDS_PER_HOUR;
                Record::Snapshot(s)
            })
            .collect();
        store.ingest(recs).unwrap();
        let t0 = base.fetch_time;
        let s = store.query_app_series(&app("a"), TimeRange::new(t0, t0 + SECONDS_PER_HOUR)).unwrap();
        assert_eq!(s.snapshots.len(), 2);
        assert!(matches!(
            store.query_app_series(&app("a"), TimeRange::new(t0 + 1, t0)),
            Err(StoreError::InvalidWindow { .. })
        ));
        assert!(store.query_app_series(&app("zzz"), TimeRange::all()).unwrap().snapshots.is_empty());
    }

    #[test]
    fn list_queries_on_empty_and_populated_store() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        assert!(store.query_list_series(ListType::Free, TimeRange::all()).unwrap().is_empty());
        let obs: Vec<_> = (0..10)
            .map(|h| {
                Record::TopK(TopKObservation {
                    list_type: ListType::Free,
                    fetch_time: h * SECONDS_PER_HOUR,
                    ranking: vec![app("a"), app("b")],
                })
            })
            .collect();
        store.ingest(obs).unwrap();
        let s = store.query_list_series(ListType::Free, TimeRange::new(0, 4 * SECONDS_PER_HOUR)).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.rank(0, &app("b")), Some(2));
    }

    #[test]
    fn reopen_rebuilds_index_and_truncates_partial_tail() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut store = Store::open(dir.path()).unwrap();
            store.ingest(vec![Record::Snapshot(snapshot("a"))]).unwrap();
            store
                .set_manifest(DatasetManifest {
                    name: "t".into(),
                    currency: "USD".into(),
                    observation_start: date(2014, 1, 1),
                    observation_end: date(2014, 2, 1),
                    snapshot_cadence_hint: "daily".into(),
                })
                .unwrap();
        }
        let path = dir.path().join(SNAPSHOTS_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"app\":\"b\",\"fetch").unwrap();
        drop(f);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.snapshot_count(), 1);
        assert_eq!(store.snapshot_offsets(&app("a"))[0].1, 0);
        assert_eq!(store.manifest().unwrap().currency, "USD");
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn corrupt_committed_line_fails_open() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(TOPK_FILE), "garbage\n").unwrap();
        assert!(matches!(Store::open(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn held_lock_blocks_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        fs::write(dir.path().join(LOCK_FILE), "").unwrap();
        assert!(matches!(store.ingest(vec![Record::Snapshot(snapshot("a"))]), Err(StoreError::Locked(_))));
    }

    #[test]
    fn manifest_rejects_inverted_range() {
        let m = DatasetManifest {
            name: "x".into(),
            currency: "USD".into(),
            observation_start: date(2014, 2, 1),
            observation_end: date(2014, 1, 1),
            snapshot_cadence_hint: String::new(),
        };
        assert!(m.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Snapshots of up to four apps at distinct hours, in arbitrary order.
        fn records() -> impl Strategy<Value = Vec<Record>> {
            prop::collection::btree_map((0..4usize, 0..200i64), 1..500u64, 1..40).prop_flat_map(|m| {
                let recs: Vec<Record> = m
                    .into_iter()
                    .map(|((a, h), price)| {
                        let mut s = snapshot(&format!("app{a}"));
                        s.fetch_time += h * SECONDS_PER_HOUR;
                        s.price_cents = price;
                        Record::Snapshot(s)
                    })
                    .collect();
                Just(recs).prop_shuffle()
            })
        }

        fn observations() -> impl Strategy<Value = Vec<Record>> {
            prop::collection::btree_set(0..300i64, 1..30).prop_flat_map(|hours| {
                let recs: Vec<Record> = hours
                    .into_iter()
                    .map(|h| {
                        Record::TopK(TopKObservation {
                            list_type: ListType::Paid,
                            fetch_time: h * SECONDS_PER_HOUR,
                            ranking: vec![app(&format!("r{}", h % 5)), app("fixed")],
                        })
                    })
                    .collect();
                Just(recs).prop_shuffle()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn double_ingest_is_idempotent(recs in records()) {
                let once = tempfile::tempdir().unwrap();
                let twice = tempfile::tempdir().unwrap();
                let mut a = Store::open(once.path()).unwrap();
                let mut b = Store::open(twice.path()).unwrap();
                a.ingest(recs.clone()).unwrap();
                b.ingest(recs.clone()).unwrap();
                let again = b.ingest(recs.clone()).unwrap();
                let c = again.for_kind(RecordKind::Snapshot);
                prop_assert_eq!((c.accepted, c.deduplicated), (0, recs.len()));
                prop_assert_eq!(a.snapshot_count(), recs.len());
                prop_assert_eq!(a.all_series(), b.all_series());
                drop(b);
                prop_assert_eq!(a.all_series(), Store::open(twice.path()).unwrap().all_series());
            }

            #[test]
            fn split_window_queries_concatenate(recs in records(), cut in 0..200i64) {
                let dir = tempfile::tempdir().unwrap();
                let mut store = Store::open(dir.path()).unwrap();
                store.ingest(recs).unwrap();
                let t = snapshot("x").fetch_time + cut * SECONDS_PER_HOUR;
                for a in 0..4 {
                    let id = app(&format!("app{a}"));
                    let whole = store.query_app_series(&id, TimeRange::all()).unwrap().snapshots;
                    let mut parts = store.query_app_series(&id, TimeRange::new(Timestamp::MIN, t)).unwrap().snapshots;
                    parts.extend(store.query_app_series(&id, TimeRange::new(t + 1, Timestamp::MAX)).unwrap().snapshots);
                    prop_assert_eq!(whole, parts);
                }
            }

            #[test]
            fn series_are_strictly_ordered(recs in records(), obs in observations()) {
                let dir = tempfile::tempdir().unwrap();
                let mut store = Store::open(dir.path()).unwrap();
                let n_obs = obs.len();
                store.ingest(recs.into_iter().chain(obs)).unwrap();
                for s in store.all_series() {
                    prop_assert!(s.snapshots.windows(2).all(|w| w[0].fetch_time < w[1].fetch_time));
                }
                let list = store.query_list_series(ListType::Paid, TimeRange::all()).unwrap();
                prop_assert_eq!(list.len(), n_obs);
                prop_assert!(list.observations.windows(2).all(|w| w[0].fetch_time < w[1].fetch_time));
            }
        }
    }
}
