use std::collections::{BTreeMap, HashSet};

use anyhow::{Context, Result};
use marketpulse_core::marketmetrics::{
    association_matrix, classify_popularity, classify_staleness, count_histogram, daily_average_price,
    downloads_ratings_slope, fit_count_power_law, fit_power_law_scan, median_price_split, per_app_price_cov,
    popularity_shares, price_change_ccdf, price_dispersion_cov, seasonal_trend_decompose, update_bandwidth,
    update_stats, DateSpan, DayApp, Staleness, Universe,
};
use marketpulse_core::{AttributeKind, PopularityClass};
use serde_json::json;

use crate::args::{MetricsCommand, UniverseArg};
use crate::output::{all_timelines, open_store, opt, outcome, print_json, reference_day, CsvOut};

pub fn run(cmd: MetricsCommand) -> Result<()> {
    match cmd {
        MetricsCommand::Staleness { store, window, out } => {
            let store = open_store(&store.store)?;
            let mut csv = CsvOut::new(out.out)?;
            let latest = store.latest_snapshots();
            let reference = reference_day(&store, window.reference).context("store holds no snapshots")?;
            let mut rows = Vec::new();
            let mut by_class: BTreeMap<PopularityClass, (usize, usize)> = BTreeMap::new();
            let mut stale = 0;
            for s in &latest {
                let v = classify_staleness(s.last_updated, reference, window.window_days)?;
                let is_stale = v.status == Staleness::Stale;
                stale += usize::from(is_stale);
                let e = by_class.entry(classify_popularity(s.downloads)).or_default();
                e.0 += 1;
                e.1 += usize::from(is_stale);
                rows.push(vec![
                    s.app.to_string(),
                    s.last_updated.to_string(),
                    v.gap_days.to_string(),
                    format!("{:?}", v.status).to_lowercase(),
                ]);
            }
            csv.table("staleness.csv", &["app", "last_updated", "gap_days", "status"], rows)?;
            let n = latest.len();
            print_json(&json!({
                "reference": reference,
                "window_days": window.window_days,
                "apps": n,
                "stale": stale,
                "active": n - stale,
                "stale_share": share(stale, n),
                "by_class": by_class
                    .iter()
                    .map(|(c, (total, st))| (c.to_string(), json!({ "apps": total, "stale": st, "stale_share": share(*st, *total) })))
                    .collect::<BTreeMap<_, _>>(),
                "csv": csv.files(),
            }))
        }
        MetricsCommand::Popularity { store, out } => {
            let store = open_store(&store.store)?;
            let mut csv = CsvOut::new(out.out)?;
            let latest = store.latest_snapshots();
            let shares = popularity_shares(&latest);
            let points: Vec<(f64, f64)> =
                latest.iter().map(|s| (s.downloads.midpoint(), s.rating_count as f64)).collect();
            csv.table(
                "popularity.csv",
                &["app", "class", "downloads_lo", "downloads_hi", "rating_count"],
                latest.iter().map(|s| {
                    vec![
                        s.app.to_string(),
                        classify_popularity(s.downloads).to_string(),
                        s.downloads.lo.to_string(),
                        s.downloads.hi.to_string(),
                        s.rating_count.to_string(),
                    ]
                }),
            )?;
            print_json(&json!({
                "apps": shares.total,
                "counts": shares.counts.iter().map(|(c, n)| (c.to_string(), *n)).collect::<BTreeMap<_, _>>(),
                "shares": shares.shares.iter().map(|(c, v)| (c.to_string(), *v)).collect::<BTreeMap<_, _>>(),
                "downloads_ratings_slope": outcome(downloads_ratings_slope(&points)),
                "csv": csv.files(),
            }))
        }
        MetricsCommand::Updates { store, out } => {
            let store = open_store(&store.store)?;
            let mut csv = CsvOut::new(out.out)?;
            let timelines = all_timelines(&store)?;
            let latest: BTreeMap<_, _> = store.latest_snapshots().into_iter().map(|s| (s.app.clone(), s)).collect();
            let span = match store.manifest() {
                Some(m) => DateSpan { start: m.observation_start, end: m.observation_end },
                None => {
                    let days: Vec<_> = latest.values().map(|s| s.fetch_day()).collect();
                    DateSpan {
                        start: store
                            .all_series()
                            .iter()
                            .filter_map(|s| s.snapshots.first().map(|x| x.fetch_day()))
                            .min()
                            .context("store holds no snapshots")?,
                        end: days.into_iter().max().context("store holds no snapshots")?,
                    }
                }
            };
            let mut rows = Vec::new();
            let mut counts = Vec::new();
            let mut auis = Vec::new();
            let mut category_changers = 0;
            for t in &timelines {
                let st = update_stats(t, span);
                let s = &latest[&t.app];
                let bw = update_bandwidth(s.size_bytes, s.downloads, st.update_count as u64);
                counts.push(st.update_count as u64);
                auis.extend(st.aui_days);
                category_changers += usize::from(t.count_of(AttributeKind::CategoryChange) > 0);
                rows.push(vec![
                    t.app.to_string(),
                    st.update_count.to_string(),
                    opt(st.aui_days),
                    s.size_bytes.to_string(),
                    s.downloads.to_string(),
                    bw.per_user_bytes.to_string(),
                    bw.total_fleet_lo.to_string(),
                    bw.total_fleet_hi.to_string(),
                ]);
            }
            csv.table(
                "updates.csv",
                &[
                    "app",
                    "update_count",
                    "aui_days",
                    "size_bytes",
                    "downloads",
                    "per_user_bytes",
                    "fleet_bytes_lo",
                    "fleet_bytes_hi",
                ],
                rows,
            )?;
            let hist = count_histogram(&counts);
            csv.table(
                "update_count_histogram.csv",
                &["updates", "apps"],
                hist.iter().map(|(v, c)| vec![v.to_string(), c.to_string()]),
            )?;
            let n = timelines.len();
            let updated = counts.iter().filter(|c| **c > 0).count();
            print_json(&json!({
                "span": { "start": span.start, "end": span.end },
                "apps": n,
                "apps_updated": updated,
                "updated_share": share(updated, n),
                "mean_aui_days": mean(&auis),
                "apps_with_aui": auis.len(),
                "category_changers": category_changers,
                "category_change_share": share(category_changers, n),
                "update_count_histogram": hist,
                "csv": csv.files(),
            }))
        }
        MetricsCommand::Price { store, window, period, out } => {
            let store = open_store(&store.store)?;
            let mut csv = CsvOut::new(out.out)?;
            let series = store.all_series();
            let timelines = all_timelines(&store)?;
            let latest = store.latest_snapshots();
            let paid: HashSet<_> = series
                .iter()
                .filter(|s| s.snapshots.iter().any(|x| x.price_cents > 0))
                .map(|s| s.app.clone())
                .collect();
            let changes: Vec<(String, u64)> = timelines
                .iter()
                .filter(|t| paid.contains(&t.app))
                .map(|t| {
                    let n = t.count_of(AttributeKind::PriceUp) + t.count_of(AttributeKind::PriceDown);
                    (t.app.to_string(), n as u64)
                })
                .collect();
            let counts: Vec<u64> = changes.iter().map(|(_, n)| *n).collect();
            let changers = counts.iter().filter(|n| **n > 0).count();
            let ccdf = price_change_ccdf(&counts);
            let prices: Vec<u64> = latest.iter().map(|s| s.price_cents).collect();
            let per_app: Vec<f64> = series.iter().filter_map(per_app_price_cov).collect();
            let daily = daily_average_price(&series);
            let values: Vec<f64> = daily.iter().map(|(_, v)| *v).collect();
            let decomposition = seasonal_trend_decompose(&values, period);
            let medians =
                reference_day(&store, window.reference).map(|r| median_price_split(&latest, r, window.window_days));
            csv.table(
                "price_changes.csv",
                &["app", "changes"],
                changes.iter().map(|(a, n)| vec![a.clone(), n.to_string()]),
            )?;
            csv.table(
                "price_ccdf.csv",
                &["x", "apps_exceeding", "sqrt_apps"],
                ccdf.iter().map(|p| vec![p.x.to_string(), p.apps_exceeding.to_string(), p.sqrt_apps.to_string()]),
            )?;
            csv.table(
                "price_daily.csv",
                &["day", "mean_price_cents"],
                daily.iter().map(|(d, v)| vec![d.to_string(), v.to_string()]),
            )?;
            if let Ok(d) = &decomposition {
                csv.with_file("price_decomposition.csv", |f| Ok(d.write_csv(&values, f)?))?;
            }
            print_json(&json!({
                "paid_apps": paid.len(),
                "price_changers": changers,
                "changer_share": share(changers, paid.len()),
                "ccdf": ccdf,
                "cov": outcome(price_dispersion_cov(&prices)),
                "mean_per_app_cov": mean(&per_app),
                "daily_mean_price": daily.iter().map(|(d, v)| json!({ "day": d, "cents": v })).collect::<Vec<_>>(),
                "decomposition": outcome(decomposition.map(|d| json!({
                    "period": d.period,
                    "seasonal_indices": d.seasonal_indices(),
                    "trend": d.trend,
                    "remainder": d.remainder,
                    "trend_range": range(d.trend.iter().flatten()),
                    "seasonal_range": range(d.seasonal_indices().iter()),
                    "remainder_range": range(d.remainder.iter().flatten()),
                }))),
                "median_price": medians,
                "csv": csv.files(),
            }))
        }
        MetricsCommand::Association { store, universe, out } => {
            let store = open_store(&store.store)?;
            let mut csv = CsvOut::new(out.out)?;
            let timelines = all_timelines(&store)?;
            let universe = match universe {
                UniverseArg::Changed => Universe::Changed,
                UniverseArg::Observed => {
                    let mut s: HashSet<DayApp> = HashSet::new();
                    for series in store.all_series() {
                        let first = series.snapshots.first().map(|x| x.fetch_day());
                        for snap in &series.snapshots {
                            if Some(snap.fetch_day()) != first {
                                s.insert((snap.fetch_day(), snap.app.clone()));
                            }
                        }
                    }
                    Universe::Observed(s)
                }
            };
            let matrix = association_matrix(&timelines, &AttributeKind::ANALYSED, universe);
            csv.with_file("association.csv", |f| Ok(matrix.write_csv(f)?))?;
            print_json(&json!({
                "kinds": matrix.kinds.iter().map(|k| k.symbol()).collect::<Vec<_>>(),
                "values": matrix.values,
                "set_sizes": matrix.set_sizes.iter().map(|(k, n)| (k.symbol(), *n)).collect::<BTreeMap<_, _>>(),
                "universe_size": matrix.universe_size,
                "csv": csv.files(),
            }))
        }
        MetricsCommand::Powerlaw { store, xmin, scan, min_tail, out } => {
            let store = open_store(&store.store)?;
            let mut csv = CsvOut::new(out.out)?;
            let mut per_dev: BTreeMap<String, u64> = BTreeMap::new();
            for s in store.latest_snapshots() {
                *per_dev.entry(s.developer).or_default() += 1;
            }
            let counts: Vec<u64> = per_dev.values().copied().collect();
            let fit = if scan {
                let samples: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
                fit_power_law_scan(&samples, min_tail)
            } else {
                fit_count_power_law(&counts, xmin)
            };
            let hist: Vec<(u64, usize)> = count_histogram(&counts).into_iter().filter(|(_, n)| *n > 0).collect();
            csv.table(
                "apps_per_developer.csv",
                &["apps", "developers"],
                hist.iter().map(|(v, n)| vec![v.to_string(), n.to_string()]),
            )?;
            print_json(&json!({
                "developers": counts.len(),
                "apps": counts.iter().sum::<u64>(),
                "max_apps": counts.iter().max(),
                "method": if scan { "ks_scan" } else { "fixed_xmin" },
                "fit": outcome(fit),
                "histogram": hist,
                "csv": csv.files(),
            }))
        }
    }
}

fn share(part: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| part as f64 / total as f64)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn range<'a>(values: impl Iterator<Item = &'a f64>) -> Option<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    (lo <= hi).then_some(hi - lo)
}
