//! Market-level statistics: staleness, popularity classes, update cadence,
//! update bandwidth, price dispersion, seasonal decomposition, power-law fits
//! and attribute association.
//!
//! Free apps (price 0) never enter price statistics.

mod association;
mod decompose;
mod powerlaw;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::model::{AppSnapshot, DownloadBucket, PopularityClass};
use crate::snapstore::AppSeries;
use crate::timeline::AppTimeline;

pub use association::{
    association_matrix, contingency, yule_association, AssociationMatrix, AttributeEventSet, Contingency, DayApp,
    Universe,
};
pub use decompose::{seasonal_trend_decompose, Decomposition};
pub use powerlaw::{downloads_ratings_slope, fit_count_power_law, fit_power_law, fit_power_law_scan, PowerLawFit};

pub const DEFAULT_STALENESS_WINDOW_DAYS: u32 = 365;

/// Lower bounds of the Popular and MostPopular classes.
pub const POPULAR_MIN_DOWNLOADS: u64 = 1_000;
pub const MOST_POPULAR_MIN_DOWNLOADS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("all tail samples equal x_min")]
    DegenerateTail,
    #[error("undefined: {0}")]
    Undefined(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Staleness {
    Active,
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StalenessVerdict {
    pub status: Staleness,
    pub window_days: u32,
    pub reference: NaiveDate,
    pub gap_days: i64,
}

/// Stale when more than `window_days` separate `last_updated` from `reference`;
/// a gap of exactly `window_days` is still active.
pub fn classify_staleness(
    last_updated: NaiveDate,
    reference: NaiveDate,
    window_days: u32,
) -> Result<StalenessVerdict, MetricsError> {
    if last_updated > reference {
        return Err(MetricsError::InvalidInput(format!("last_updated {last_updated} is after reference {reference}")));
    }
    let gap_days = (reference - last_updated).num_days();
    let status = if gap_days > i64::from(window_days) { Staleness::Stale } else { Staleness::Active };
    Ok(StalenessVerdict { status, window_days, reference, gap_days })
}

/// Class by the bucket's lower bound: `[0, 10^3)`, `[10^3, 10^5)`, `[10^5, inf)`.
pub fn classify_popularity(bucket: DownloadBucket) -> PopularityClass {
    if bucket.lo >= MOST_POPULAR_MIN_DOWNLOADS {
        PopularityClass::MostPopular
    } else if bucket.lo >= POPULAR_MIN_DOWNLOADS {
        PopularityClass::Popular
    } else {
        PopularityClass::Unpopular
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassShares {
    pub total: usize,
    pub counts: BTreeMap<PopularityClass, usize>,
    /// Fractions in `[0, 1]`.
    pub shares: BTreeMap<PopularityClass, f64>,
}

pub fn popularity_shares<'a>(snapshots: impl IntoIterator<Item = &'a AppSnapshot>) -> ClassShares {
    let mut counts: BTreeMap<PopularityClass, usize> = PopularityClass::ALL.iter().map(|c| (*c, 0)).collect();
    let mut total = 0;
    for s in snapshots {
        *counts.entry(classify_popularity(s.downloads)).or_default() += 1;
        total += 1;
    }
    let shares = counts.iter().map(|(c, n)| (*c, if total == 0 { 0.0 } else { *n as f64 / total as f64 })).collect();
    ClassShares { total, counts, shares }
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DateSpan {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateSpan {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpdateStats {
    pub update_count: usize,
    /// Mean gap in days between consecutive updates; absent below two updates.
    pub aui_days: Option<f64>,
}

pub fn update_stats(timeline: &AppTimeline, span: DateSpan) -> UpdateStats {
    let days: Vec<NaiveDate> = timeline.update_days.iter().copied().filter(|d| span.contains(*d)).collect();
    let aui_days = (days.len() >= 2).then(|| {
        let total = (days[days.len() - 1] - days[0]).num_days();
        total as f64 / (days.len() - 1) as f64
    });
    UpdateStats { update_count: days.len(), aui_days }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UpdateBandwidth {
    /// Bytes each installed user downloaded across all updates.
    pub per_user_bytes: u128,
    /// Fleet-wide bytes of a single update, for the bucket's install range.
    pub per_update_fleet_lo: u128,
    pub per_update_fleet_hi: u128,
    /// Fleet-wide bytes of all updates.
    pub total_fleet_lo: u128,
    pub total_fleet_hi: u128,
}

pub fn update_bandwidth(size_bytes: u64, downloads: DownloadBucket, update_count: u64) -> UpdateBandwidth {
    let size = u128::from(size_bytes);
    let count = u128::from(update_count);
    let lo = size * u128::from(downloads.lo);
    let hi = size * u128::from(downloads.hi);
    UpdateBandwidth {
        per_user_bytes: size * count,
        per_update_fleet_lo: lo,
        per_update_fleet_hi: hi,
        total_fleet_lo: lo * count,
        total_fleet_hi: hi * count,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CcdfPoint {
    pub x: u64,
    pub apps_exceeding: usize,
    pub sqrt_apps: f64,
}

/// For each `x` in `0..=max`, the square root of the number of apps with
/// more than `x` price changes.
pub fn price_change_ccdf(per_app_change_counts: &[u64]) -> Vec<CcdfPoint> {
    let Some(&max) = per_app_change_counts.iter().max() else {
        return Vec::new();
    };
    let mut sorted = per_app_change_counts.to_vec();
    sorted.sort_unstable();
    (0..=max)
        .map(|x| {
            let apps_exceeding = sorted.len() - sorted.partition_point(|&c| c <= x);
            CcdfPoint { x, apps_exceeding, sqrt_apps: (apps_exceeding as f64).sqrt() }
        })
        .collect()
}

/// Population standard deviation over mean of the positive prices.
pub fn price_dispersion_cov(prices: &[u64]) -> Result<f64, MetricsError> {
    let paid: Vec<f64> = prices.iter().filter(|&&p| p > 0).map(|&p| p as f64).collect();
    if paid.is_empty() {
        return Err(MetricsError::Undefined("no paid prices".into()));
    }
    let n = paid.len() as f64;
    let mean = paid.iter().sum::<f64>() / n;
    let var = paid.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianPriceSplit {
    pub paid_apps: usize,
    pub active_paid_apps: usize,
    pub median_all_cents: Option<f64>,
    pub median_active_cents: Option<f64>,
}

/// Median paid price over all apps and over apps still active at `reference`.
pub fn median_price_split(latest: &[AppSnapshot], reference: NaiveDate, window_days: u32) -> MedianPriceSplit {
    let mut all = Vec::new();
    let mut active = Vec::new();
    for s in latest.iter().filter(|s| s.price_cents > 0) {
        all.push(s.price_cents as f64);
        let is_active = classify_staleness(s.last_updated.min(reference), reference, window_days)
            .map(|v| v.status == Staleness::Active)
            .unwrap_or(false);
        if is_active {
            active.push(s.price_cents as f64);
        }
    }
    MedianPriceSplit {
        paid_apps: all.len(),
        active_paid_apps: active.len(),
        median_all_cents: median(&mut all),
        median_active_cents: median(&mut active),
    }
}

/// Mean paid price per calendar day. Each app contributes its last snapshot
/// of the day, carried forward across days without a snapshot. Days before
/// any paid observation are skipped.
pub fn daily_average_price(series: &[AppSeries]) -> Vec<(NaiveDate, f64)> {
    let mut per_day: BTreeMap<NaiveDate, Vec<(usize, u64)>> = BTreeMap::new();
    for (i, s) in series.iter().enumerate() {
        for snap in &s.snapshots {
            per_day.entry(snap.fetch_day()).or_default().push((i, snap.price_cents));
        }
    }
    let (Some(first), Some(last)) = (per_day.keys().next().copied(), per_day.keys().next_back().copied()) else {
        return Vec::new();
    };
    let mut current: Vec<Option<u64>> = vec![None; series.len()];
    let mut out = Vec::new();
    let mut day = first;
    while day <= last {
        if let Some(obs) = per_day.get(&day) {
            for &(i, p) in obs {
                current[i] = Some(p);
            }
        }
        let paid: Vec<f64> = current.iter().flatten().filter(|p| **p > 0).map(|p| *p as f64).collect();
        if !paid.is_empty() {
            out.push((day, paid.iter().sum::<f64>() / paid.len() as f64));
        }
        day = day.succ_opt().expect("date in range");
    }
    out
}

/// Coefficient of variation of each paid app's own price history.
pub fn per_app_price_cov(series: &AppSeries) -> Option<f64> {
    let prices: Vec<u64> = series.snapshots.iter().map(|s| s.price_cents).collect();
    if prices.contains(&0) {
        return None;
    }
    price_dispersion_cov(&prices).ok()
}

/// Histogram over integer values: `(value, count)` for every value in `0..=max`.
pub fn count_histogram(values: &[u64]) -> Vec<(u64, usize)> {
    let Some(&max) = values.iter().max() else {
        return Vec::new();
    };
    let mut counts = vec![0usize; max as usize + 1];
    for &v in values {
        counts[v as usize] += 1;
    }
    counts.into_iter().enumerate().map(|(v, c)| (v as u64, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::{app, date};
    use crate::model::{AttributeKind, DownloadBucket};
    use crate::timeline::{AppTimeline, ChangeDetail, ChangeEvent};

    #[test]
    fn staleness_boundaries() {
        let r = date(2015, 5, 5);
        let at = |gap: i64| classify_staleness(r - chrono::Duration::days(gap), r, 365).unwrap().status;
        assert_eq!(at(364), Staleness::Active);
        assert_eq!(at(365), Staleness::Active);
        assert_eq!(at(366), Staleness::Stale);
        assert!(matches!(classify_staleness(r.succ_opt().unwrap(), r, 365), Err(MetricsError::InvalidInput(_))));
    }

    #[test]
    fn popularity_thresholds() {
        let b = |lo, hi| DownloadBucket::new(lo, hi).unwrap();
        assert_eq!(classify_popularity(b(500, 1_000)), PopularityClass::Unpopular);
        assert_eq!(classify_popularity(b(1_000, 5_000)), PopularityClass::Popular);
        assert_eq!(classify_popularity(b(50_000, 100_000)), PopularityClass::Popular);
        assert_eq!(classify_popularity(b(100_000, 500_000)), PopularityClass::MostPopular);
        assert_eq!(classify_popularity(b(0, 1)), PopularityClass::Unpopular);
    }

    #[test]
    fn popularity_partitions_the_ladder() {
        let shares = popularity_shares(&[]);
        assert_eq!(shares.total, 0);
        let mut seen = 0;
        for bucket in DownloadBucket::ladder() {
            let c = classify_popularity(bucket);
            assert_eq!(PopularityClass::ALL.iter().filter(|k| **k == c).count(), 1);
            seen += 1;
        }
        assert_eq!(seen, 20);
    }

    fn timeline_with_updates(days: &[NaiveDate]) -> AppTimeline {
        let events = days
            .iter()
            .map(|d| ChangeEvent {
                app: app("a"),
                day: *d,
                kind: AttributeKind::LastUpdatedChange,
                detail: ChangeDetail::LastUpdated { old: date(2000, 1, 1), new: *d },
            })
            .collect();
        AppTimeline { app: app("a"), events, update_days: days.to_vec() }
    }

    #[test]
    fn update_interval() {
        let d0 = date(2012, 4, 1);
        let span = DateSpan { start: d0, end: date(2012, 12, 1) };
        let days: Vec<_> = [0, 10, 20].iter().map(|o| d0 + chrono::Duration::days(*o)).collect();
        let s = update_stats(&timeline_with_updates(&days), span);
        assert_eq!(s.update_count, 3);
        assert_eq!(s.aui_days, Some(10.0));
        let s = update_stats(&timeline_with_updates(&days[..1]), span);
        assert_eq!((s.update_count, s.aui_days), (1, None));
        let days: Vec<_> = [0, 7, 21, 42].iter().map(|o| d0 + chrono::Duration::days(*o)).collect();
        assert_eq!(update_stats(&timeline_with_updates(&days), span).aui_days, Some(14.0));
    }

    #[test]
    fn bandwidth_of_frequent_updater() {
        let mib = 1u128 << 20;
        let size = (1.8 * (1u64 << 20) as f64).round() as u64;
        let bw = update_bandwidth(size, DownloadBucket::new(500_000, 1_000_000).unwrap(), 91);
        let per_user_mib = bw.per_user_bytes as f64 / mib as f64;
        assert!((per_user_mib - 163.8).abs() < 0.01, "{per_user_mib}");
        let hi_tib = bw.per_update_fleet_hi as f64 / (1u128 << 40) as f64;
        assert!((hi_tib - 1.716).abs() < 0.001, "{hi_tib}");
        assert_eq!(bw.total_fleet_hi, bw.per_update_fleet_hi * 91);
        let zero = update_bandwidth(0, DownloadBucket::new(1, 5).unwrap(), 4);
        assert_eq!(zero.per_user_bytes + zero.total_fleet_hi + zero.per_update_fleet_lo, 0);
    }

    #[test]
    fn ccdf_values() {
        let c = price_change_ccdf(&[0, 0, 1, 2, 5]);
        assert_eq!(c.len(), 6);
        assert!((c[0].sqrt_apps - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(c[5].apps_exceeding, 0);
        assert!(c.windows(2).all(|w| w[1].sqrt_apps <= w[0].sqrt_apps));
        assert_eq!(price_change_ccdf(&[0, 0])[0].sqrt_apps, 0.0);
        assert!(price_change_ccdf(&[]).is_empty());
    }

    #[test]
    fn cov_values() {
        assert_eq!(price_dispersion_cov(&[199, 199, 199]).unwrap(), 0.0);
        assert!((price_dispersion_cov(&[1, 3]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(price_dispersion_cov(&[]), Err(MetricsError::Undefined(_))));
        assert!(matches!(price_dispersion_cov(&[0, 0]), Err(MetricsError::Undefined(_))));
    }

    #[test]
    fn medians_split_active() {
        use crate::model::testutil::snapshot;
        let reference = date(2014, 10, 24);
        let mut stale = snapshot("a");
        stale.price_cents = 99;
        stale.last_updated = date(2012, 1, 1);
        let mut active = snapshot("b");
        active.price_cents = 131;
        let mut free = snapshot("c");
        free.price_cents = 0;
        free.free = true;
        let split = median_price_split(&[stale, active, free], reference, 365);
        assert_eq!(split.paid_apps, 2);
        assert_eq!(split.median_all_cents, Some(115.0));
        assert_eq!(split.median_active_cents, Some(131.0));
    }

    #[test]
    fn daily_average_carries_forward() {
        use crate::model::testutil::snapshot;
        use crate::model::SECONDS_PER_DAY;
        let a0 = snapshot("a");
        let mut a2 = a0.clone();
        a2.fetch_time += 2 * SECONDS_PER_DAY;
        a2.price_cents = 399;
        let mut b1 = snapshot("b");
        b1.fetch_time += SECONDS_PER_DAY;
        b1.price_cents = 99;
        let series = vec![
            AppSeries { app: app("a"), snapshots: vec![a0, a2] },
            AppSeries { app: app("b"), snapshots: vec![b1] },
        ];
        let avg: Vec<f64> = daily_average_price(&series).into_iter().map(|(_, p)| p).collect();
        assert_eq!(avg, vec![199.0, 149.0, 249.0]);
    }

    #[test]
    fn histogram_counts() {
        assert_eq!(count_histogram(&[0, 2, 2]), vec![(0, 1), (1, 0), (2, 2)]);
    }

    proptest::proptest! {
        #[test]
        fn ccdf_is_non_increasing(counts in proptest::collection::vec(0u64..20, 0..100)) {
            let c = price_change_ccdf(&counts);
            proptest::prop_assert!(c.windows(2).all(|w| w[1].apps_exceeding <= w[0].apps_exceeding));
            proptest::prop_assert!(c.last().is_none_or(|p| p.apps_exceeding == 0));
        }

        #[test]
        fn every_install_count_gets_one_class(installs in 0u64..10_000_000_000) {
            if let Some(b) = DownloadBucket::containing(installs) {
                let want = if b.lo >= MOST_POPULAR_MIN_DOWNLOADS {
                    PopularityClass::MostPopular
                } else if b.lo >= POPULAR_MIN_DOWNLOADS {
                    PopularityClass::Popular
                } else {
                    PopularityClass::Unpopular
                };
                proptest::prop_assert_eq!(classify_popularity(b), want);
                proptest::prop_assert!(b.lo <= installs);
            }
        }
    }
}
