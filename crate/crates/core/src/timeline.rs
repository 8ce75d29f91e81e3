//! Snapshot diffing into typed change events, and per-day review counts.
//!
//! Snapshots are collapsed per UTC day before diffing: the series' first
//! snapshot is followed by the last snapshot of every day, so each
//! `<day, app>` pair carries at most one event per attribute.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AppId, AppSnapshot, AttributeKind, DownloadBucket, ReviewRecord};
use crate::snapstore::AppSeries;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TimelineError {
    #[error("invalid snapshot pair: {0}")]
    InvalidPair(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Old and new value of one changed attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum ChangeDetail {
    Price { old: u64, new: u64 },
    Downloads { old: DownloadBucket, new: DownloadBucket },
    RatingCount { old: u64, new: u64 },
    Version { old: String, new: String },
    Permissions { added: BTreeSet<String>, removed: BTreeSet<String> },
    Category { old: String, new: String },
    LastUpdated { old: NaiveDate, new: NaiveDate },
}

impl ChangeDetail {
    /// Old side rendered for CSV. Permission events list removed names.
    pub fn old_text(&self) -> String {
        match self {
            ChangeDetail::Price { old, .. } | ChangeDetail::RatingCount { old, .. } => old.to_string(),
            ChangeDetail::Downloads { old, .. } => old.to_string(),
            ChangeDetail::Version { old, .. } | ChangeDetail::Category { old, .. } => old.clone(),
            ChangeDetail::Permissions { removed, .. } => join_names(removed),
            ChangeDetail::LastUpdated { old, .. } => old.to_string(),
        }
    }

    /// New side rendered for CSV. Permission events list added names.
    pub fn new_text(&self) -> String {
        match self {
            ChangeDetail::Price { new, .. } | ChangeDetail::RatingCount { new, .. } => new.to_string(),
            ChangeDetail::Downloads { new, .. } => new.to_string(),
            ChangeDetail::Version { new, .. } | ChangeDetail::Category { new, .. } => new.clone(),
            ChangeDetail::Permissions { added, .. } => join_names(added),
            ChangeDetail::LastUpdated { new, .. } => new.to_string(),
        }
    }
}

fn join_names(names: &BTreeSet<String>) -> String {
    names.iter().map(String::as_str).collect::<Vec<_>>().join("|")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub app: AppId,
    pub day: NaiveDate,
    pub kind: AttributeKind,
    pub detail: ChangeDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AppTimeline {
    pub app: AppId,
    /// Sorted by day; within a day in attribute order.
    pub events: Vec<ChangeEvent>,
    /// Distinct `last_updated` values adopted after the first snapshot, sorted.
    pub update_days: Vec<NaiveDate>,
}

impl AppTimeline {
    pub fn empty(app: AppId) -> Self {
        Self { app, events: Vec::new(), update_days: Vec::new() }
    }

    pub fn update_count(&self) -> usize {
        self.update_days.len()
    }

    pub fn count_of(&self, kind: AttributeKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Days on which an event of `kind` occurred.
    pub fn days_with(&self, kind: AttributeKind) -> BTreeSet<NaiveDate> {
        self.events.iter().filter(|e| e.kind == kind).map(|e| e.day).collect()
    }
}

/// Events turning `prev` into `next`, dated on `next`'s fetch day.
pub fn diff_snapshots(prev: &AppSnapshot, next: &AppSnapshot) -> Result<Vec<ChangeEvent>, TimelineError> {
    if prev.app != next.app {
        return Err(TimelineError::InvalidPair(format!("app ids differ ({} vs {})", prev.app, next.app)));
    }
    if prev.fetch_time >= next.fetch_time {
        return Err(TimelineError::InvalidPair(format!(
            "fetch times not increasing ({} then {})",
            prev.fetch_time, next.fetch_time
        )));
    }
    let day = next.fetch_day();
    let mut out = Vec::new();
    let mut push = |kind, detail| out.push(ChangeEvent { app: next.app.clone(), day, kind, detail });

    if prev.price_cents != next.price_cents {
        let kind = if next.price_cents < prev.price_cents { AttributeKind::PriceDown } else { AttributeKind::PriceUp };
        push(kind, ChangeDetail::Price { old: prev.price_cents, new: next.price_cents });
    }
    if prev.downloads != next.downloads {
        let kind = if next.downloads.lo > prev.downloads.lo
            || (next.downloads.lo == prev.downloads.lo && next.downloads.hi > prev.downloads.hi)
        {
            AttributeKind::DownloadsUp
        } else {
            AttributeKind::DownloadsDown
        };
        push(kind, ChangeDetail::Downloads { old: prev.downloads, new: next.downloads });
    }
    if prev.rating_count != next.rating_count {
        let kind = if next.rating_count > prev.rating_count {
            AttributeKind::ReviewCountUp
        } else {
            AttributeKind::ReviewCountDown
        };
        push(kind, ChangeDetail::RatingCount { old: prev.rating_count, new: next.rating_count });
    }
    if prev.version != next.version {
        push(AttributeKind::VersionUp, ChangeDetail::Version { old: prev.version.clone(), new: next.version.clone() });
    }
    if prev.permissions != next.permissions {
        let added: BTreeSet<String> = next.permissions.difference(&prev.permissions).cloned().collect();
        let removed: BTreeSet<String> = prev.permissions.difference(&next.permissions).cloned().collect();
        let kind = match next.permissions.len().cmp(&prev.permissions.len()) {
            std::cmp::Ordering::Greater => AttributeKind::PermissionsUp,
            std::cmp::Ordering::Less => AttributeKind::PermissionsDown,
            std::cmp::Ordering::Equal => AttributeKind::PermissionsReplaced,
        };
        push(kind, ChangeDetail::Permissions { added, removed });
    }
    if prev.category != next.category {
        push(
            AttributeKind::CategoryChange,
            ChangeDetail::Category { old: prev.category.clone(), new: next.category.clone() },
        );
    }
    if prev.last_updated != next.last_updated {
        push(
            AttributeKind::LastUpdatedChange,
            ChangeDetail::LastUpdated { old: prev.last_updated, new: next.last_updated },
        );
    }
    Ok(out)
}

/// Applies one event's new value to `snapshot`'s tracked fields.
pub fn apply_event(snapshot: &mut AppSnapshot, event: &ChangeEvent) {
    match &event.detail {
        ChangeDetail::Price { new, .. } => {
            snapshot.price_cents = *new;
            snapshot.free = *new == 0;
        }
        ChangeDetail::Downloads { new, .. } => snapshot.downloads = *new,
        ChangeDetail::RatingCount { new, .. } => snapshot.rating_count = *new,
        ChangeDetail::Version { new, .. } => snapshot.version = new.clone(),
        ChangeDetail::Permissions { added, removed } => {
            for p in removed {
                snapshot.permissions.remove(p);
            }
            snapshot.permissions.extend(added.iter().cloned());
        }
        ChangeDetail::Category { new, .. } => snapshot.category = new.clone(),
        ChangeDetail::LastUpdated { new, .. } => snapshot.last_updated = *new,
    }
}

/// Diffs a sorted series into an [`AppTimeline`].
pub fn build_app_timeline(series: &AppSeries) -> Result<AppTimeline, TimelineError> {
    let Some(first) = series.snapshots.first() else {
        return Ok(AppTimeline::empty(series.app.clone()));
    };
    if let Some(s) = series.snapshots.iter().find(|s| s.app != series.app) {
        return Err(TimelineError::InvalidInput(format!("series for {} contains snapshot of {}", series.app, s.app)));
    }
    if series.snapshots.windows(2).any(|w| w[0].fetch_time >= w[1].fetch_time) {
        return Err(TimelineError::InvalidInput("series not strictly increasing in fetch_time".into()));
    }

    // first snapshot, then the last snapshot of each day
    let mut reps: Vec<&AppSnapshot> = vec![first];
    for (i, s) in series.snapshots.iter().enumerate() {
        let last_of_day = series.snapshots.get(i + 1).is_none_or(|n| n.fetch_day() != s.fetch_day());
        if last_of_day && !std::ptr::eq(s, first) {
            reps.push(s);
        }
    }

    let mut events = Vec::new();
    for w in reps.windows(2) {
        events.extend(diff_snapshots(w[0], w[1])?);
    }
    let update_days: BTreeSet<NaiveDate> = events
        .iter()
        .filter_map(|e| match e.detail {
            ChangeDetail::LastUpdated { new, .. } => Some(new),
            _ => None,
        })
        .collect();
    Ok(AppTimeline { app: series.app.clone(), events, update_days: update_days.into_iter().collect() })
}

/// Rating thresholds splitting reviews into positive, negative and neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polarity {
    pub positive_min: u8,
    pub negative_max: u8,
}

impl Default for Polarity {
    fn default() -> Self {
        Self { positive_min: 4, negative_max: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReviewDay {
    pub date: NaiveDate,
    pub positive: u32,
    pub negative: u32,
    pub neutral: u32,
}

/// Per-day review counts. Days without reviews are omitted and count as zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReviewTimeline {
    pub app: AppId,
    pub days: Vec<ReviewDay>,
}

pub fn build_review_timeline(
    app: &AppId,
    reviews: &[ReviewRecord],
    polarity: Polarity,
) -> Result<ReviewTimeline, TimelineError> {
    if polarity.negative_max >= polarity.positive_min {
        return Err(TimelineError::InvalidInput(format!(
            "negative_max {} must be below positive_min {}",
            polarity.negative_max, polarity.positive_min
        )));
    }
    let mut days: BTreeMap<NaiveDate, ReviewDay> = BTreeMap::new();
    for r in reviews {
        if &r.app != app {
            return Err(TimelineError::InvalidInput(format!(
                "review {} belongs to {}, expected {}",
                r.review_id, r.app, app
            )));
        }
        let d = days.entry(r.date).or_insert(ReviewDay { date: r.date, positive: 0, negative: 0, neutral: 0 });
        if r.rating >= polarity.positive_min {
            d.positive += 1;
        } else if r.rating <= polarity.negative_max {
            d.negative += 1;
        } else {
            d.neutral += 1;
        }
    }
    Ok(ReviewTimeline { app: app.clone(), days: days.into_values().collect() })
}

/// Writes `app,day,kind,old,new` rows for every event.
pub fn write_timeline_csv<'a, W, I>(out: W, timelines: I) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a AppTimeline>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["app", "day", "kind", "old", "new"])?;
    for t in timelines {
        for e in &t.events {
            w.write_record([
                e.app.as_str(),
                &e.day.to_string(),
                &e.kind.to_string(),
                &e.detail.old_text(),
                &e.detail.new_text(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{app, date, snapshot};
    use crate::model::{SECONDS_PER_DAY, SECONDS_PER_HOUR};
    use proptest::prelude::*;

    fn later(s: &AppSnapshot, secs: i64) -> AppSnapshot {
        let mut n = s.clone();
        n.fetch_time += secs;
        n
    }

    fn perms(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_price_drop() {
        let a = snapshot("a");
        let mut b = later(&a, SECONDS_PER_DAY);
        b.price_cents = 99;
        let ev = diff_snapshots(&a, &b).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, AttributeKind::PriceDown);
        assert_eq!(ev[0].detail, ChangeDetail::Price { old: 199, new: 99 });
        assert_eq!(ev[0].day, b.fetch_day());
    }

    #[test]
    fn identical_snapshots_yield_nothing() {
        let a = snapshot("a");
        assert!(diff_snapshots(&a, &later(&a, 1)).unwrap().is_empty());
    }

    #[test]
    fn permission_growth_without_version_change() {
        let mut a = snapshot("a");
        a.permissions = perms(&["A", "B"]);
        let mut b = later(&a, SECONDS_PER_DAY);
        b.permissions = perms(&["A", "C", "D"]);
        let ev = diff_snapshots(&a, &b).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, AttributeKind::PermissionsUp);
        assert_eq!(ev[0].detail, ChangeDetail::Permissions { added: perms(&["C", "D"]), removed: perms(&["B"]) });
        assert!(ev.iter().all(|e| e.kind != AttributeKind::VersionUp));
    }

    #[test]
    fn mismatched_apps_are_rejected() {
        let a = snapshot("a");
        let b = later(&snapshot("b"), 10);
        assert!(matches!(diff_snapshots(&a, &b), Err(TimelineError::InvalidPair(_))));
    }

    #[test]
    fn update_count_follows_last_updated_transitions() {
        let base = snapshot("a");
        let lu = [date(2014, 9, 1), date(2014, 9, 1), date(2014, 10, 2), date(2014, 10, 2), date(2014, 10, 20)];
        let snaps: Vec<_> = lu
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut s = later(&base, i as i64 * SECONDS_PER_DAY);
                s.last_updated = *d;
                s
            })
            .collect();
        let t = build_app_timeline(&AppSeries { app: app("a"), snapshots: snaps }).unwrap();
        assert_eq!(t.update_count(), 2);
        assert_eq!(t.update_days, vec![date(2014, 10, 2), date(2014, 10, 20)]);
    }

    #[test]
    fn single_and_empty_series() {
        let t = build_app_timeline(&AppSeries { app: app("a"), snapshots: vec![snapshot("a")] }).unwrap();
        assert_eq!((t.update_count(), t.events.len()), (0, 0));
        let t = build_app_timeline(&AppSeries { app: app("a"), snapshots: vec![] }).unwrap();
        assert!(t.events.is_empty());
    }

    #[test]
    fn intra_day_snapshots_collapse_to_last_of_day() {
        let a = snapshot("a");
        let mut up = later(&a, SECONDS_PER_HOUR);
        up.price_cents = 299;
        let mut down = later(&a, 2 * SECONDS_PER_HOUR);
        down.price_cents = 99;
        let mut next_day = later(&a, SECONDS_PER_DAY);
        next_day.price_cents = 149;
        let t = build_app_timeline(&AppSeries { app: app("a"), snapshots: vec![a, up, down, next_day] }).unwrap();
        let kinds: Vec<_> = t.events.iter().map(|e| (e.day, e.kind)).collect();
        assert_eq!(
            kinds,
            vec![(date(2014, 10, 24), AttributeKind::PriceDown), (date(2014, 10, 25), AttributeKind::PriceUp)]
        );
    }

    #[test]
    fn review_polarity_counts() {
        let mk = |i: u8, d| ReviewRecord {
            app: app("a"),
            review_id: format!("r{i}"),
            reviewer_id: "u".into(),
            date: d,
            rating: i,
            title: String::new(),
            text: String::new(),
        };
        let d = date(2014, 5, 5);
        let all: Vec<_> = (1..=5).map(|i| mk(i, d)).collect();
        let t = build_review_timeline(&app("a"), &all, Polarity::default()).unwrap();
        assert_eq!(t.days.len(), 1);
        assert_eq!((t.days[0].positive, t.days[0].negative, t.days[0].neutral), (2, 2, 1));

        let fives: Vec<_> = (0..3).map(|_| mk(5, d)).collect();
        let t = build_review_timeline(&app("a"), &fives, Polarity::default()).unwrap();
        assert_eq!((t.days[0].positive, t.days[0].negative, t.days[0].neutral), (3, 0, 0));

        assert!(build_review_timeline(&app("a"), &[], Polarity::default()).unwrap().days.is_empty());
        let mut other = mk(3, d);
        other.app = app("b");
        assert!(matches!(
            build_review_timeline(&app("a"), &[other], Polarity::default()),
            Err(TimelineError::InvalidInput(_))
        ));
    }

    #[test]
    fn csv_export_columns() {
        let a = snapshot("a");
        let mut b = later(&a, SECONDS_PER_DAY);
        b.price_cents = 99;
        b.permissions.insert("CAMERA".into());
        let t = build_app_timeline(&AppSeries { app: app("a"), snapshots: vec![a, b] }).unwrap();
        let mut buf = Vec::new();
        write_timeline_csv(&mut buf, [&t]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "app,day,kind,old,new");
        assert_eq!(lines[1], "a,2014-10-25,PriceDown,199,99");
        assert_eq!(lines[2], "a,2014-10-25,PermissionsUp,,CAMERA");
    }

    /// Time advance, price, download rung, version bump, permission toggles, category, update lag.
    type Step = (i64, Option<u64>, Option<usize>, Option<bool>, Vec<(u8, bool)>, Option<u8>, Option<i64>);

    fn arb_step() -> impl Strategy<Value = Step> {
        (
            1i64..(3 * SECONDS_PER_DAY),
            proptest::option::of(0u64..500),
            proptest::option::of(0usize..19),
            proptest::option::of(any::<bool>()),
            proptest::collection::vec((0u8..6, any::<bool>()), 0..3),
            proptest::option::of(0u8..3),
            proptest::option::of(0i64..3),
        )
    }

    proptest! {
        #[test]
        fn folding_events_reproduces_final_snapshot(steps in proptest::collection::vec(arb_step(), 1..25)) {
            let first = snapshot("a");
            let mut cur = first.clone();
            let mut snaps = vec![first.clone()];
            let mut version = 1u32;
            for (dt, price, rung, bump, perm_ops, cat, lu_shift) in steps {
                let mut n = later(&cur, dt);
                if let Some(p) = price {
                    n.price_cents = p;
                    n.free = p == 0;
                }
                if let Some(r) = rung {
                    n.downloads = DownloadBucket::ladder().nth(r).unwrap();
                }
                if bump == Some(true) {
                    version += 1;
                    n.version = format!("1.{version}");
                }
                for (p, add) in perm_ops {
                    let name = format!("P{p}");
                    if add { n.permissions.insert(name); } else { n.permissions.remove(&name); }
                }
                if let Some(c) = cat {
                    n.category = format!("C{c}");
                }
                if let Some(s) = lu_shift {
                    let candidate = n.fetch_day() - chrono::Duration::days(s);
                    if candidate >= n.last_updated { n.last_updated = candidate; }
                }
                n.rating_count += dt as u64 % 3;
                snaps.push(n.clone());
                cur = n;
            }
            let t = build_app_timeline(&AppSeries { app: app("a"), snapshots: snaps.clone() }).unwrap();
            let mut folded = first.clone();
            for e in &t.events {
                let is_perm = matches!(e.detail, ChangeDetail::Permissions { .. });
                prop_assert!(is_perm || e.detail.old_text() != e.detail.new_text());
                apply_event(&mut folded, e);
            }
            let last = snaps.last().unwrap();
            prop_assert_eq!(folded.price_cents, last.price_cents);
            prop_assert_eq!(folded.free, last.free);
            prop_assert_eq!(folded.downloads, last.downloads);
            prop_assert_eq!(folded.rating_count, last.rating_count);
            prop_assert_eq!(&folded.version, &last.version);
            prop_assert_eq!(&folded.permissions, &last.permissions);
            prop_assert_eq!(&folded.category, &last.category);
            prop_assert_eq!(folded.last_updated, last.last_updated);

            // at most one event per <day, kind>, hence never both directions of price or permissions
            let mut per_day: BTreeMap<NaiveDate, Vec<AttributeKind>> = BTreeMap::new();
            for e in &t.events { per_day.entry(e.day).or_default().push(e.kind); }
            for kinds in per_day.values() {
                let has = |k| kinds.contains(&k);
                prop_assert!(!(has(AttributeKind::PriceUp) && has(AttributeKind::PriceDown)));
                prop_assert!(!(has(AttributeKind::PermissionsUp) && has(AttributeKind::PermissionsDown)));
                let uniq: BTreeSet<_> = kinds.iter().collect();
                prop_assert_eq!(uniq.len(), kinds.len());
            }
        }

        #[test]
        fn self_diff_is_empty(dt in 1i64..100_000) {
            let a = snapshot("a");
            prop_assert!(diff_snapshots(&a, &later(&a, dt)).unwrap().is_empty());
        }
    }
}
