//! Fraud and malware indicators: review spikes, permission-timeline flags,
//! scam-like app clusters and external scan-flag joins.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AppId, AppSnapshot, AttributeKind};
use crate::timeline::{AppTimeline, ChangeDetail, ReviewTimeline};

const DEFAULT_DANGEROUS: &str = include_str!("../data/dangerous_permissions.txt");

#[derive(Debug, Error)]
pub enum AnomalyError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpikePolarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeEvent {
    pub app: AppId,
    pub day: NaiveDate,
    pub polarity: SpikePolarity,
    pub count: u32,
    /// Median of the trailing window.
    pub baseline: f64,
    /// `count / max(baseline, 1)`.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeParams {
    pub window_days: usize,
    pub mad_k: f64,
    pub min_abs: u32,
}

impl Default for SpikeParams {
    fn default() -> Self {
        Self { window_days: 30, mad_k: 5.0, min_abs: 20 }
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median and median absolute deviation (unscaled).
fn median_mad(window: &[u32]) -> (f64, f64) {
    let mut v: Vec<f64> = window.iter().map(|&c| c as f64).collect();
    v.sort_by(f64::total_cmp);
    let med = median_sorted(&v);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    (med, median_sorted(&dev))
}

/// Flags days whose count reaches `max(min_abs, median + mad_k * MAD)` of the
/// preceding `window_days` days for the same polarity. Days between the first
/// and last review day that carry no reviews count as zero.
pub fn detect_review_spikes(timeline: &ReviewTimeline, params: SpikeParams) -> Vec<SpikeEvent> {
    let (Some(first), Some(last)) = (timeline.days.first(), timeline.days.last()) else {
        return Vec::new();
    };
    let span = (last.date - first.date).num_days() as usize + 1;
    let mut positive = vec![0u32; span];
    let mut negative = vec![0u32; span];
    for d in &timeline.days {
        let i = (d.date - first.date).num_days() as usize;
        positive[i] += d.positive;
        negative[i] += d.negative;
    }
    let mut out = Vec::new();
    for (polarity, counts) in [(SpikePolarity::Positive, &positive), (SpikePolarity::Negative, &negative)] {
        for (i, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let window = &counts[i.saturating_sub(params.window_days)..i];
            let (median, mad) = median_mad(window);
            let threshold = (params.min_abs as f64).max(median + params.mad_k * mad);
            if count as f64 >= threshold {
                out.push(SpikeEvent {
                    app: timeline.app.clone(),
                    day: first.date + chrono::Duration::days(i as i64),
                    polarity,
                    count,
                    baseline: median,
                    score: count as f64 / median.max(1.0),
                });
            }
        }
    }
    out.sort_by(|a, b| a.day.cmp(&b.day).then(a.polarity.cmp(&b.polarity)));
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DangerousPermissionPolicy {
    pub dangerous: BTreeSet<String>,
}

impl DangerousPermissionPolicy {
    /// One permission name per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        let dangerous =
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect();
        Self { dangerous }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AnomalyError> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map(|t| Self::parse(&t))
            .map_err(|source| AnomalyError::Io { path: path.display().to_string(), source })
    }

    /// The bundled list of privacy-sensitive platform permissions.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_DANGEROUS)
    }

    pub fn is_dangerous(&self, permission: &str) -> bool {
        self.dangerous.contains(permission)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PermissionFlagKind {
    DangerousAdded,
    ChurnWithinWindow,
    ChangeWithoutVersionChange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PermissionFlag {
    pub app: AppId,
    pub day: NaiveDate,
    pub kind: PermissionFlagKind,
    pub detail: BTreeSet<String>,
}

pub const DEFAULT_CHURN_WINDOW_DAYS: i64 = 7;

/// Flags derived from an app's permission events. `policy` enables
/// `DangerousAdded`; passing an empty policy is an error.
pub fn permission_flags(
    timeline: &AppTimeline,
    policy: Option<&DangerousPermissionPolicy>,
    churn_window_days: i64,
) -> Result<Vec<PermissionFlag>, AnomalyError> {
    if policy.is_some_and(|p| p.dangerous.is_empty()) {
        return Err(AnomalyError::Config("dangerous-permission policy is empty".into()));
    }
    let version_days = timeline.days_with(AttributeKind::VersionUp);
    // day -> (added, removed), merged across the day's permission events
    let mut per_day: BTreeMap<NaiveDate, (BTreeSet<String>, BTreeSet<String>)> = BTreeMap::new();
    for e in &timeline.events {
        if let ChangeDetail::Permissions { added, removed } = &e.detail {
            let entry = per_day.entry(e.day).or_default();
            entry.0.extend(added.iter().cloned());
            entry.1.extend(removed.iter().cloned());
        }
    }

    let mut flags = Vec::new();
    let mut flag = |day, kind, detail: BTreeSet<String>| {
        if !detail.is_empty() {
            flags.push(PermissionFlag { app: timeline.app.clone(), day, kind, detail });
        }
    };
    // last day each permission moved in each direction
    let mut last_added: HashMap<&str, NaiveDate> = HashMap::new();
    let mut last_removed: HashMap<&str, NaiveDate> = HashMap::new();
    for (&day, (added, removed)) in &per_day {
        if let Some(p) = policy {
            flag(
                day,
                PermissionFlagKind::DangerousAdded,
                added.iter().filter(|a| p.is_dangerous(a)).cloned().collect(),
            );
        }
        let within = |prev: Option<&NaiveDate>| prev.is_some_and(|d| (day - *d).num_days() <= churn_window_days);
        let churned: BTreeSet<String> = added
            .iter()
            .filter(|a| within(last_removed.get(a.as_str())))
            .chain(removed.iter().filter(|r| within(last_added.get(r.as_str()))))
            .cloned()
            .collect();
        flag(day, PermissionFlagKind::ChurnWithinWindow, churned);
        if !version_days.contains(&day) {
            flag(day, PermissionFlagKind::ChangeWithoutVersionChange, added.union(removed).cloned().collect());
        }
        for a in added {
            last_added.insert(a, day);
        }
        for r in removed {
            last_removed.insert(r, day);
        }
    }
    Ok(flags)
}

/// Share of permission-change `<day, app>` tuples without a same-day version change.
pub fn permission_version_decoupling_rate(timelines: &[AppTimeline]) -> Result<f64, AnomalyError> {
    let mut changes = 0usize;
    let mut decoupled = 0usize;
    for t in timelines {
        let versions = t.days_with(AttributeKind::VersionUp);
        let perm_days: BTreeSet<NaiveDate> =
            t.events.iter().filter(|e| e.kind.is_permission_change()).map(|e| e.day).collect();
        changes += perm_days.len();
        decoupled += perm_days.iter().filter(|d| !versions.contains(d)).count();
    }
    if changes == 0 {
        return Err(AnomalyError::Undefined("no permission-change events".into()));
    }
    Ok(decoupled as f64 / changes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScamParams {
    pub min_cluster: usize,
    /// Inclusive price band in cents.
    pub price_band_cents: (u64, u64),
    pub title_similarity: f64,
}

impl Default for ScamParams {
    fn default() -> Self {
        Self { min_cluster: 5, price_band_cents: (100, 299), title_similarity: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScamCluster {
    pub developer: String,
    pub apps: Vec<AppId>,
    pub price_min_cents: u64,
    pub price_max_cents: u64,
    pub price_mean_cents: f64,
}

fn normalize_title(title: &str) -> String {
    title.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" ")
}

fn trigrams(title: &str) -> HashSet<String> {
    let chars: Vec<char> = normalize_title(title).chars().collect();
    if chars.len() < 3 {
        return std::iter::once(chars.into_iter().collect()).collect();
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Jaccard similarity of lowercase character trigrams.
pub fn title_similarity(a: &str, b: &str) -> f64 {
    let (ta, tb) = (trigrams(a), trigrams(b));
    let inter = ta.intersection(&tb).count();
    let union = ta.len() + tb.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Per developer, single-linkage clusters of paid in-band apps whose titles
/// are pairwise linked at `title_similarity` or above.
pub fn scam_pattern_scan(latest: &[AppSnapshot], params: ScamParams) -> Vec<ScamCluster> {
    let (lo, hi) = params.price_band_cents;
    let mut by_dev: BTreeMap<&str, Vec<&AppSnapshot>> = BTreeMap::new();
    for s in latest {
        if !s.free && (lo..=hi).contains(&s.price_cents) {
            by_dev.entry(s.developer.as_str()).or_default().push(s);
        }
    }
    let mut out = Vec::new();
    for (dev, mut apps) in by_dev {
        if apps.len() < params.min_cluster.max(1) {
            continue;
        }
        apps.sort_by(|a, b| a.app.cmp(&b.app));
        let grams: Vec<HashSet<String>> = apps.iter().map(|a| trigrams(&a.title)).collect();
        let mut parent: Vec<usize> = (0..apps.len()).collect();
        for i in 0..apps.len() {
            for j in i + 1..apps.len() {
                let inter = grams[i].intersection(&grams[j]).count();
                let union = grams[i].len() + grams[j].len() - inter;
                if union > 0 && inter as f64 / union as f64 >= params.title_similarity {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<&AppSnapshot>> = BTreeMap::new();
        for (i, app) in apps.iter().enumerate() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(*app);
        }
        for members in groups.into_values().filter(|g| g.len() >= params.min_cluster) {
            let prices: Vec<u64> = members.iter().map(|m| m.price_cents).collect();
            out.push(ScamCluster {
                developer: dev.to_string(),
                apps: members.iter().map(|m| m.app.clone()).collect(),
                price_min_cents: *prices.iter().min().unwrap_or(&0),
                price_max_cents: *prices.iter().max().unwrap_or(&0),
                price_mean_cents: prices.iter().sum::<u64>() as f64 / prices.len() as f64,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagSelection {
    pub min_flags: u32,
    pub min_reviews: usize,
}

impl Default for FlagSelection {
    fn default() -> Self {
        Self { min_flags: 3, min_reviews: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExternalFlag {
    pub app: AppId,
    pub flag_count: u32,
    pub review_count: usize,
    pub scan_selected: bool,
}

#[derive(Deserialize)]
struct FlagRow {
    app: String,
    flag_count: u32,
}

/// Reads `app,flag_count` rows (with header) and marks apps meeting both
/// selection thresholds.
pub fn join_external_flags<R: Read>(
    flags_csv: R,
    review_counts: &HashMap<AppId, usize>,
    selection: FlagSelection,
) -> Result<Vec<ExternalFlag>, AnomalyError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(flags_csv);
    let headers = rdr.headers().map_err(|e| AnomalyError::Parse { line: 1, reason: e.to_string() })?;
    if headers.iter().take(2).collect::<Vec<_>>() != ["app", "flag_count"] {
        return Err(AnomalyError::Parse { line: 1, reason: "expected header app,flag_count".into() });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<FlagRow>() {
        let row = row.map_err(|e| AnomalyError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let app = AppId::new(row.app)
            .map_err(|e| AnomalyError::Parse { line: out.len() as u64 + 2, reason: e.to_string() })?;
        let review_count = review_counts.get(&app).copied().unwrap_or(0);
        out.push(ExternalFlag {
            scan_selected: row.flag_count >= selection.min_flags && review_count >= selection.min_reviews,
            app,
            flag_count: row.flag_count,
            review_count,
        });
    }
    Ok(out)
}

/// Per-app anomaly findings.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AppAnomalies {
    pub spikes: Vec<SpikeEvent>,
    pub permission_flags: Vec<PermissionFlag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_selected: Option<bool>,
}

pub type AnomalyReport = BTreeMap<AppId, AppAnomalies>;
