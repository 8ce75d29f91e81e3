use anyhow::{bail, Result};
use marketpulse_core::snapstore::{RankedListSeries, TimeRange};
use marketpulse_core::topk::{
    binned_histogram, lifecycle_summaries, lifecycle_summaries_with_censored, lifetime_at_rank, overlap_stats,
    rank_occupancy, similarity_series, LifecycleMode, LifecycleSummary, LifetimeMode,
};
use serde_json::json;

use crate::args::{LifecycleModeArg, LifetimeModeArg, ListArgs, TopkCommand};
use crate::output::{open_store, opt, print_json, CsvOut};

type Metric = (&'static str, fn(&LifecycleSummary) -> usize);

fn load(list: &ListArgs) -> Result<(RankedListSeries, CsvOut)> {
    let store = open_store(&list.store.store)?;
    let series = store.query_list_series(list.list, TimeRange::all())?;
    if series.is_empty() {
        bail!("no observations of list {}", list.list);
    }
    Ok((series, CsvOut::new(list.out.out.clone())?))
}

pub fn run(cmd: TopkCommand) -> Result<()> {
    match cmd {
        TopkCommand::Lifecycle { list, mode, include_censored, bin_width } => {
            let (series, mut csv) = load(&list)?;
            let mode = match mode {
                LifecycleModeArg::Whole => LifecycleMode::WholeSpan,
                LifecycleModeArg::Episodes => LifecycleMode::Episodes,
            };
            let all = lifecycle_summaries_with_censored(&series, mode)?;
            let censored = all.iter().filter(|s| s.censored).count();
            let summaries = if include_censored { all } else { lifecycle_summaries(&series, mode)? };
            csv.table(
                "lifecycle.csv",
                &["app", "debut", "hrs2peak", "peak", "tothrs", "exit", "rankdyn", "censored"],
                summaries.iter().map(|s| {
                    vec![
                        s.app.to_string(),
                        s.debut.to_string(),
                        s.hrs2peak.to_string(),
                        s.peak.to_string(),
                        s.tothrs.to_string(),
                        s.exit.to_string(),
                        s.rankdyn.to_string(),
                        s.censored.to_string(),
                    ]
                }),
            )?;
            if csv.enabled() && bin_width > 0 {
                let metrics: [Metric; 6] = [
                    ("debut", |s| s.debut),
                    ("exit", |s| s.exit),
                    ("peak", |s| s.peak),
                    ("hrs2peak", |s| s.hrs2peak),
                    ("tothrs", |s| s.tothrs),
                    ("rankdyn", |s| s.rankdyn),
                ];
                let mut rows = Vec::new();
                for (name, f) in metrics {
                    let values: Vec<usize> = summaries.iter().map(f).collect();
                    for (bin, n) in binned_histogram(&values, bin_width) {
                        rows.push(vec![name.to_string(), bin.to_string(), n.to_string()]);
                    }
                }
                csv.table("lifecycle_histograms.csv", &["metric", "bin_start", "apps"], rows)?;
            }
            print_json(&json!({
                "list": list.list,
                "observations": series.len(),
                "apps": summaries.len(),
                "censored": censored,
                "censored_included": include_censored,
                "summaries": summaries,
                "csv": csv.files(),
            }))
        }
        TopkCommand::Similarity { list } => {
            let (series, mut csv) = load(&list)?;
            let sims = similarity_series(&series)?;
            csv.table(
                "similarity.csv",
                &["fetch_time", "m", "n_raw", "n_max", "in_range"],
                sims.iter().map(|(t, s)| {
                    vec![
                        t.to_string(),
                        s.m.to_string(),
                        s.n_raw.to_string(),
                        s.n_max.to_string(),
                        s.in_range.to_string(),
                    ]
                }),
            )?;
            let ms: Vec<f64> = sims.iter().map(|(_, s)| s.m).collect();
            print_json(&json!({
                "list": list.list,
                "pairs": sims.len(),
                "m_mean": (!ms.is_empty()).then(|| ms.iter().sum::<f64>() / ms.len() as f64),
                "m_min": ms.iter().copied().reduce(f64::min),
                "m_max": ms.iter().copied().reduce(f64::max),
                "out_of_range": sims.iter().filter(|(_, s)| !s.in_range).count(),
                "series": sims.iter().map(|(t, s)| json!({ "fetch_time": t, "m": s.m, "n_raw": s.n_raw, "n_max": s.n_max, "in_range": s.in_range })).collect::<Vec<_>>(),
                "csv": csv.files(),
            }))
        }
        TopkCommand::Overlap { list, slice } => {
            let (series, mut csv) = load(&list)?;
            let mut stats = Vec::new();
            for s in &slice {
                stats.push((s.to_string(), overlap_stats(&series, *s)?));
            }
            csv.table(
                "overlap.csv",
                &["slice", "item_count", "o_mean", "o_min", "m_mean", "m_sd", "o_first_last"],
                stats.iter().map(|(name, o)| {
                    vec![
                        name.clone(),
                        o.item_count.to_string(),
                        o.o_mean.to_string(),
                        o.o_min.to_string(),
                        o.m_mean.to_string(),
                        o.m_sd.to_string(),
                        o.o_first_last.to_string(),
                    ]
                }),
            )?;
            print_json(&json!({
                "list": list.list,
                "observations": series.len(),
                "slices": stats.iter().map(|(name, o)| json!({ "slice": name, "stats": o })).collect::<Vec<_>>(),
                "csv": csv.files(),
            }))
        }
        TopkCommand::Occupancy { list } => {
            let (series, mut csv) = load(&list)?;
            let occ = rank_occupancy(&series);
            csv.table(
                "occupancy.csv",
                &["rank", "distinct_apps"],
                occ.iter().enumerate().map(|(i, n)| vec![(i + 1).to_string(), n.to_string()]),
            )?;
            print_json(&json!({
                "list": list.list,
                "observations": series.len(),
                "distinct_apps_per_rank": occ,
                "csv": csv.files(),
            }))
        }
        TopkCommand::Lifetime { list, ranks, mode } => {
            let (series, mut csv) = load(&list)?;
            let mode = match mode {
                LifetimeModeArg::AtRank => LifetimeMode::TimeAtRank,
                LifetimeModeArg::ListLifetime => LifetimeMode::ListLifetime,
            };
            let out = lifetime_at_rank(&series, &ranks, mode);
            let mut rows = Vec::new();
            for r in &out {
                for l in &r.lifetimes {
                    rows.push(vec![r.rank.to_string(), l.to_string()]);
                }
            }
            csv.table("lifetime.csv", &["rank", "hours"], rows)?;
            csv.table(
                "lifetime_mean.csv",
                &["rank", "apps", "mean_hours"],
                out.iter().map(|r| vec![r.rank.to_string(), r.lifetimes.len().to_string(), opt(r.mean)]),
            )?;
            print_json(&json!({
                "list": list.list,
                "mode": if mode == LifetimeMode::TimeAtRank { "at_rank" } else { "list_lifetime" },
                "ranks": out,
                "csv": csv.files(),
            }))
        }
    }
}
