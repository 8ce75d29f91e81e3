//! Shared domain types for snapshots, reviews and ranked lists.
//!
//! Timestamps are UTC epoch seconds. Calendar days are UTC and start at
//! midnight. Prices are integer cents in the dataset's single currency.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

pub const SECONDS_PER_HOUR: i64 = 3_600;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// Longest ranking a single top-k observation may carry (20 pages of 24).
pub const MAX_RANKING_LEN: usize = 480;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("app id must be non-empty")]
    EmptyAppId,
    #[error("app id {0:?} contains whitespace")]
    WhitespaceInAppId(String),
    #[error("download bucket requires lo < hi (got {lo}..{hi})")]
    InvertedBucket { lo: u64, hi: u64 },
    #[error("duplicate permission {0:?}")]
    DuplicatePermission(String),
    #[error("unknown list type {0:?}")]
    UnknownListType(String),
    #[error("timestamp {0} is outside the representable range")]
    TimestampRange(Timestamp),
}

/// UTC calendar day containing `ts`.
pub fn day_of(ts: Timestamp) -> NaiveDate {
    DateTime::from_timestamp(ts, 0).map(|dt| dt.date_naive()).unwrap_or(NaiveDate::MIN)
}

/// Epoch seconds of UTC midnight starting `day`.
pub fn day_start(day: NaiveDate) -> Timestamp {
    day.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp()
}

/// Package-name style identifier, e.g. `com.example.app`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AppId(String);

impl AppId {
    pub fn new(value: impl Into<String>) -> Result<Self, ModelError> {
        let value = value.into();
        if value.is_empty() {
            return Err(ModelError::EmptyAppId);
        }
        if value.chars().any(char::is_whitespace) {
            return Err(ModelError::WhitespaceInAppId(value));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AppId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<AppId> for String {
    fn from(id: AppId) -> Self {
        id.0
    }
}

impl FromStr for AppId {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for AppId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Upper bounds of the market's install-count ladder. Each bucket spans
/// `[LADDER[i], LADDER[i + 1])`.
pub const DOWNLOAD_LADDER: [u64; 21] = [
    0,
    1,
    5,
    10,
    50,
    100,
    500,
    1_000,
    5_000,
    10_000,
    50_000,
    100_000,
    500_000,
    1_000_000,
    5_000_000,
    10_000_000,
    50_000_000,
    100_000_000,
    500_000_000,
    1_000_000_000,
    5_000_000_000,
];

/// Install-count range as shown by the market ("1,000 - 5,000").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DownloadBucket {
    pub lo: u64,
    pub hi: u64,
}

impl DownloadBucket {
    pub fn new(lo: u64, hi: u64) -> Result<Self, ModelError> {
        if lo >= hi {
            return Err(ModelError::InvertedBucket { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// All buckets of the fixed ladder, smallest first.
    pub fn ladder() -> impl Iterator<Item = DownloadBucket> {
        DOWNLOAD_LADDER.windows(2).map(|w| DownloadBucket { lo: w[0], hi: w[1] })
    }

    /// Ladder bucket containing `installs`, if any.
    pub fn containing(installs: u64) -> Option<DownloadBucket> {
        Self::ladder().find(|b| b.lo <= installs && installs < b.hi)
    }

    pub fn is_on_ladder(&self) -> bool {
        Self::ladder().any(|b| b == *self)
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo as f64 + self.hi as f64) / 2.0
    }

    /// Next rung up the ladder.
    pub fn next(&self) -> Option<DownloadBucket> {
        Self::ladder().find(|b| b.lo == self.hi)
    }
}

impl fmt::Display for DownloadBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

/// One timestamped observation of an app's market metadata.
///
/// Serializes to the flat `snapshots.jsonl` line layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SnapshotLine", try_from = "SnapshotLine")]
pub struct AppSnapshot {
    pub app: AppId,
    pub fetch_time: Timestamp,
    pub title: String,
    pub developer: String,
    pub category: String,
    pub price_cents: u64,
    pub free: bool,
    pub downloads: DownloadBucket,
    pub rating_avg: f64,
    pub rating_count: u64,
    pub version: String,
    pub last_updated: NaiveDate,
    pub size_bytes: u64,
    pub permissions: BTreeSet<String>,
}

impl AppSnapshot {
    pub fn fetch_day(&self) -> NaiveDate {
        day_of(self.fetch_time)
    }
}

/// Wire layout of one `snapshots.jsonl` line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotLine {
    app: AppId,
    fetch_time: Timestamp,
    title: String,
    developer: String,
    category: String,
    price_cents: u64,
    free: bool,
    downloads_lo: u64,
    downloads_hi: u64,
    rating_avg: f64,
    rating_count: u64,
    version: String,
    last_updated: NaiveDate,
    size_bytes: u64,
    permissions: Vec<String>,
}

impl From<AppSnapshot> for SnapshotLine {
    fn from(s: AppSnapshot) -> Self {
        Self {
            app: s.app,
            fetch_time: s.fetch_time,
            title: s.title,
            developer: s.developer,
            category: s.category,
            price_cents: s.price_cents,
            free: s.free,
            downloads_lo: s.downloads.lo,
            downloads_hi: s.downloads.hi,
            rating_avg: s.rating_avg,
            rating_count: s.rating_count,
            version: s.version,
            last_updated: s.last_updated,
            size_bytes: s.size_bytes,
            permissions: s.permissions.into_iter().collect(),
        }
    }
}

impl TryFrom<SnapshotLine> for AppSnapshot {
    type Error = ModelError;

    fn try_from(line: SnapshotLine) -> Result<Self, Self::Error> {
        let mut permissions = BTreeSet::new();
        for p in line.permissions {
            if let Some(dup) = permissions.replace(p) {
                return Err(ModelError::DuplicatePermission(dup));
            }
        }
        // Bucket ordering is checked by `validate_snapshot` so that ingest can
        // report it as a validation failure rather than a decode failure.
        Ok(Self {
            app: line.app,
            fetch_time: line.fetch_time,
            title: line.title,
            developer: line.developer,
            category: line.category,
            price_cents: line.price_cents,
            free: line.free,
            downloads: DownloadBucket { lo: line.downloads_lo, hi: line.downloads_hi },
            rating_avg: line.rating_avg,
            rating_count: line.rating_count,
            version: line.version,
            last_updated: line.last_updated,
            size_bytes: line.size_bytes,
            permissions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub app: AppId,
    pub review_id: String,
    pub reviewer_id: String,
    pub date: NaiveDate,
    pub rating: u8,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ListType {
    Free,
    Paid,
    Gross,
    NewFree,
    NewPaid,
}

impl ListType {
    pub const ALL: [ListType; 5] =
        [ListType::Free, ListType::Paid, ListType::Gross, ListType::NewFree, ListType::NewPaid];

    pub fn as_str(&self) -> &'static str {
        match self {
            ListType::Free => "Free",
            ListType::Paid => "Paid",
            ListType::Gross => "Gross",
            ListType::NewFree => "NewFree",
            ListType::NewPaid => "NewPaid",
        }
    }
}

impl fmt::Display for ListType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ListType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ListType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::UnknownListType(s.to_string()))
    }
}

/// One hourly observation of a ranked list. Rank 1 is `ranking[0]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopKObservation {
    pub list_type: ListType,
    pub fetch_time: Timestamp,
    pub ranking: Vec<AppId>,
}

impl TopKObservation {
    /// 1-based rank of `app`, if present.
    pub fn rank_of(&self, app: &AppId) -> Option<usize> {
        self.ranking.iter().position(|a| a == app).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PopularityClass {
    Unpopular,
    Popular,
    MostPopular,
}

impl PopularityClass {
    pub const ALL: [PopularityClass; 3] =
        [PopularityClass::Unpopular, PopularityClass::Popular, PopularityClass::MostPopular];

    pub fn as_str(&self) -> &'static str {
        match self {
            PopularityClass::Unpopular => "Unpopular",
            PopularityClass::Popular => "Popular",
            PopularityClass::MostPopular => "MostPopular",
        }
    }
}

impl fmt::Display for PopularityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Direction-typed attribute change, the unit of the association analysis.
///
/// The first eight variants are the analysed attributes. The remaining ones
/// record changes needed to replay a timeline but are not part of the
/// default association matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttributeKind {
    DownloadsUp,
    PriceDown,
    PriceUp,
    ReviewCountUp,
    VersionUp,
    PermissionsDown,
    PermissionsUp,
    CategoryChange,
    DownloadsDown,
    ReviewCountDown,
    /// Permission set changed but its size did not.
    PermissionsReplaced,
    LastUpdatedChange,
}

impl AttributeKind {
    /// Kinds analysed by the association matrix, in table order.
    pub const ANALYSED: [AttributeKind; 8] = [
        AttributeKind::DownloadsUp,
        AttributeKind::PriceDown,
        AttributeKind::PriceUp,
        AttributeKind::ReviewCountUp,
        AttributeKind::VersionUp,
        AttributeKind::PermissionsDown,
        AttributeKind::PermissionsUp,
        AttributeKind::CategoryChange,
    ];

    pub fn symbol(&self) -> &'static str {
        match self {
            AttributeKind::DownloadsUp => "D+",
            AttributeKind::PriceDown => "P-",
            AttributeKind::PriceUp => "P+",
            AttributeKind::ReviewCountUp => "RC+",
            AttributeKind::VersionUp => "SV+",
            AttributeKind::PermissionsDown => "TP-",
            AttributeKind::PermissionsUp => "TP+",
            AttributeKind::CategoryChange => "CAT",
            AttributeKind::DownloadsDown => "D-",
            AttributeKind::ReviewCountDown => "RC-",
            AttributeKind::PermissionsReplaced => "TP=",
            AttributeKind::LastUpdatedChange => "UPD",
        }
    }

    pub fn is_permission_change(&self) -> bool {
        matches!(
            self,
            AttributeKind::PermissionsUp | AttributeKind::PermissionsDown | AttributeKind::PermissionsReplaced
        )
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    EmptyTitle,
    FreeFlagMismatch { free: bool, price_cents: u64 },
    RatingAvgOutOfRange(String),
    BucketInverted { lo: u64, hi: u64 },
    BucketOffLadder { lo: u64, hi: u64 },
    LastUpdatedInFuture { last_updated: NaiveDate, fetch_day: NaiveDate },
    ReviewRatingOutOfRange(u8),
    EmptyReviewId,
    RankingTooLong(usize),
    DuplicateInRanking(AppId),
    UnalignedFetchTime(Timestamp),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTitle => f.write_str("title is empty"),
            Violation::FreeFlagMismatch { free, price_cents } => {
                write!(f, "free={free} inconsistent with price_cents={price_cents}")
            }
            Violation::RatingAvgOutOfRange(v) => write!(f, "rating_avg out of [0,5] ({v})"),
            Violation::BucketInverted { lo, hi } => {
                write!(f, "downloads bucket inverted ({lo}..{hi})")
            }
            Violation::BucketOffLadder { lo, hi } => {
                write!(f, "downloads bucket {lo}..{hi} not on the ladder")
            }
            Violation::LastUpdatedInFuture { last_updated, fetch_day } => {
                write!(f, "last_updated in future ({last_updated} after fetch day {fetch_day})")
            }
            Violation::ReviewRatingOutOfRange(r) => write!(f, "rating out of range ({r})"),
            Violation::EmptyReviewId => f.write_str("review_id is empty"),
            Violation::RankingTooLong(n) => {
                write!(f, "ranking has {n} entries, limit {MAX_RANKING_LEN}")
            }
            Violation::DuplicateInRanking(app) => write!(f, "duplicate app {app} in ranking"),
            Violation::UnalignedFetchTime(t) => {
                write!(f, "fetch_time {t} is not aligned to the hour")
            }
        }
    }
}

/// Every invariant `s` violates; empty when the snapshot is valid.
pub fn validate_snapshot(s: &AppSnapshot) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.title.trim().is_empty() {
        out.push(Violation::EmptyTitle);
    }
    if s.free != (s.price_cents == 0) {
        out.push(Violation::FreeFlagMismatch { free: s.free, price_cents: s.price_cents });
    }
    if !(0.0..=5.0).contains(&s.rating_avg) {
        out.push(Violation::RatingAvgOutOfRange(s.rating_avg.to_string()));
    }
    if s.downloads.lo >= s.downloads.hi {
        out.push(Violation::BucketInverted { lo: s.downloads.lo, hi: s.downloads.hi });
    } else if !s.downloads.is_on_ladder() {
        out.push(Violation::BucketOffLadder { lo: s.downloads.lo, hi: s.downloads.hi });
    }
    let fetch_day = s.fetch_day();
    if s.last_updated > fetch_day {
        out.push(Violation::LastUpdatedInFuture { last_updated: s.last_updated, fetch_day });
    }
    out
}

pub fn validate_review(r: &ReviewRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(1..=5).contains(&r.rating) {
        out.push(Violation::ReviewRatingOutOfRange(r.rating));
    }
    if r.review_id.is_empty() {
        out.push(Violation::EmptyReviewId);
    }
    out
}

pub fn validate_topk(o: &TopKObservation) -> Vec<Violation> {
    let mut out = Vec::new();
    if o.fetch_time.rem_euclid(SECONDS_PER_HOUR) != 0 {
        out.push(Violation::UnalignedFetchTime(o.fetch_time));
    }
    if o.ranking.len() > MAX_RANKING_LEN {
        out.push(Violation::RankingTooLong(o.ranking.len()));
    }
    let mut seen = std::collections::HashSet::with_capacity(o.ranking.len());
    for app in &o.ranking {
        if !seen.insert(app) {
            out.push(Violation::DuplicateInRanking(app.clone()));
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    pub fn app(s: &str) -> AppId {
        AppId::new(s).unwrap()
    }

    /// A valid paid snapshot fetched at noon on 2014-10-24.
    pub fn snapshot(id: &str) -> AppSnapshot {
        AppSnapshot {
            app: app(id),
            fetch_time: day_start(date(2014, 10, 24)) + 12 * SECONDS_PER_HOUR,
            title: format!("Title of {id}"),
            developer: "Acme".into(),
            category: "Tools".into(),
            price_cents: 199,
            free: false,
            downloads: DownloadBucket::new(1_000, 5_000).unwrap(),
            rating_avg: 4.1,
            rating_count: 12,
            version: "1.0".into(),
            last_updated: date(2014, 9, 1),
            size_bytes: 1_887_437,
            permissions: ["android.permission.INTERNET".to_string()].into_iter().collect(),
        }
    }
}
